use std::io::Write;

use crate::error::{Error, Result};
use crate::mesh::{io::write_ply, TriangleMesh};

/// Class colours plus a reserved neutral colour for unlabeled vertices.
#[derive(Clone, Debug, PartialEq)]
pub struct Palette {
    pub colors: Vec<[u8; 3]>,
    pub neutral: [u8; 3],
}

impl Palette {
    pub const NEUTRAL: [u8; 3] = [128, 128, 128];

    /// Fully saturated hues spaced by the golden angle, so neighbouring class
    /// ids get well-separated colours. None equals the neutral grey.
    pub fn new(classes: usize) -> Self {
        let colors = (0..classes)
            .map(|c| {
                let h = (c as f64 * 0.618_033_988_75).fract() * 6.0;
                let v = if c % 2 == 0 { 1.0 } else { 0.75 };
                let x = 1.0 - (h % 2.0 - 1.0).abs();
                let (r, g, b) = match h as u32 {
                    0 => (1.0, x, 0.0),
                    1 => (x, 1.0, 0.0),
                    2 => (0.0, 1.0, x),
                    3 => (0.0, x, 1.0),
                    4 => (x, 0.0, 1.0),
                    _ => (1.0, 0.0, x),
                };
                [r, g, b].map(|c: f64| (c * v * 255.0).round() as u8)
            })
            .collect();
        Self { colors, neutral: Self::NEUTRAL }
    }

    pub fn color(&self, label: Option<u32>) -> Result<[u8; 3]> {
        match label {
            None => Ok(self.neutral),
            Some(c) => self.colors.get(c as usize).copied().ok_or_else(|| Error::Input(format!("no colour for class {c}"))),
        }
    }
}

/// Binary PLY with one colour per vertex; `None` labels get the neutral
/// colour, so partial annotations show as stripes.
pub fn export_colored_mesh<W: Write>(w: &mut W, mesh: &TriangleMesh, labels: &[Option<u32>], palette: &Palette) -> Result<()> {
    if labels.len() != mesh.vertices.len() {
        return Err(Error::Input(format!("{} labels for {} mesh vertices", labels.len(), mesh.vertices.len())));
    }
    let colors = labels.iter().map(|&l| palette.color(l)).collect::<Result<Vec<_>>>()?;
    write_ply(w, mesh, &colors)
}
