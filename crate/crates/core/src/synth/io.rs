use std::fs;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::phantom::{PhantomConfig, PhantomDataset, PhantomSection};
use crate::error::{Error, Result};
use crate::image::GrayImage;
use crate::mesh::RigidTransform2D;

pub const MANIFEST: &str = "manifest.json";

/// Per-section JSON sidecar; also the header of the raw label maps.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SectionSidecar {
    pub index: usize,
    pub width: usize,
    pub height: usize,
    pub transform: RigidTransform2D,
    pub missing: bool,
    pub image: Option<String>,
    /// Raw u8 tissue classes, row-major.
    pub tissue: String,
    /// Raw u8 area map, row-major; 0 outside gray matter.
    pub areas: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhantomManifest {
    pub config: PhantomConfig,
    pub sections: Vec<String>,
}

/// Writes the dataset as PNG sections, raw label maps, JSON sidecars and a
/// manifest into `dir`.
pub fn write_dataset(dir: &Path, ds: &PhantomDataset) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut names = Vec::new();
    for (k, s) in ds.sections.iter().enumerate() {
        let image = match &s.image {
            Some(img) => {
                let name = format!("section_{k:04}.png");
                img.write_png(BufWriter::new(fs::File::create(dir.join(&name))?))?;
                Some(name)
            }
            None => None,
        };
        let side = SectionSidecar {
            index: k,
            width: ds.config.width,
            height: ds.config.height,
            transform: s.transform,
            missing: s.is_missing(),
            image,
            tissue: format!("tissue_{k:04}.bin"),
            areas: format!("areas_{k:04}.bin"),
        };
        fs::write(dir.join(&side.tissue), &s.tissue)?;
        fs::write(dir.join(&side.areas), &s.areas)?;
        let name = format!("section_{k:04}.json");
        fs::write(dir.join(&name), serde_json::to_vec_pretty(&side)?)?;
        names.push(name);
    }
    let manifest = PhantomManifest { config: ds.config.clone(), sections: names };
    fs::write(dir.join(MANIFEST), serde_json::to_vec_pretty(&manifest)?)?;
    Ok(())
}

pub fn read_dataset(dir: &Path) -> Result<PhantomDataset> {
    let manifest: PhantomManifest = serde_json::from_slice(&fs::read(dir.join(MANIFEST))?)?;
    manifest.config.validate()?;
    let (w, h) = (manifest.config.width, manifest.config.height);
    let mut sections = Vec::with_capacity(manifest.sections.len());
    for (k, name) in manifest.sections.iter().enumerate() {
        let side: SectionSidecar = serde_json::from_slice(&fs::read(dir.join(name))?)?;
        if side.index != k || side.width != w || side.height != h {
            return Err(Error::Input(format!("sidecar {name} does not describe section {k} at {w}x{h}")));
        }
        let image = match &side.image {
            Some(f) => {
                let img = GrayImage::read_png(BufReader::new(fs::File::open(dir.join(f))?))?;
                if img.width != w || img.height != h {
                    return Err(Error::Input(format!("{f} is {}x{}, expected {w}x{h}", img.width, img.height)));
                }
                Some(img)
            }
            None => None,
        };
        if image.is_none() != side.missing {
            return Err(Error::Input(format!("sidecar {name} disagrees with its image about being missing")));
        }
        let read_map = |f: &str| -> Result<Vec<u8>> {
            let v = fs::read(dir.join(f))?;
            if v.len() != w * h {
                return Err(Error::Input(format!("{f} holds {} bytes, expected {}", v.len(), w * h)));
            }
            Ok(v)
        };
        sections.push(PhantomSection { image, tissue: read_map(&side.tissue)?, areas: read_map(&side.areas)?, transform: side.transform });
    }
    if sections.len() != manifest.config.sections {
        return Err(Error::Input(format!("manifest lists {} sections, config says {}", sections.len(), manifest.config.sections)));
    }
    Ok(PhantomDataset { config: manifest.config, sections })
}
