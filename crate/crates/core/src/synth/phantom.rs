use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::GrayImage;
use crate::mesh::{RigidTransform2D, Tissue};

/// Slide glass, unstained.
pub const BACKGROUND_LEVEL: f32 = 1.0;
pub const WHITE_LEVEL: f32 = 0.8;
/// Gray-matter neuropil between cell bodies.
pub const NEUROPIL_LEVEL: f32 = 0.56;
pub const DOT_LEVEL: f32 = 0.1;

const GLIA_DENSITY: f64 = 30.0;
const GLIA_RADIUS_UM: f64 = 10.0;
const GLIA_LEVEL: f32 = 0.45;

/// One lamina of an area's texture. `width` is a fraction of the band depth,
/// `density` is in dots per mm².
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TextureLayer {
    pub width: f64,
    pub density: f64,
    pub radius_um: f64,
}

impl TextureLayer {
    /// Fraction of the layer covered by dots.
    pub fn coverage(&self) -> f64 {
        self.density * PI * (self.radius_um * 1e-3).powi(2)
    }
}

/// Densest layer coverage the hard-core dot process can reach.
pub const MAX_COVERAGE: f64 = 0.23;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AreaTexture {
    pub layers: Vec<TextureLayer>,
}

impl AreaTexture {
    /// Layer at relative depth `d` in `[0, 1)` from the white-matter side.
    pub fn layer_at(&self, d: f64) -> &TextureLayer {
        let total: f64 = self.layers.iter().map(|l| l.width).sum();
        let mut acc = 0.0;
        for l in &self.layers {
            acc += l.width / total;
            if d < acc {
                return l;
            }
        }
        self.layers.last().expect("nonempty texture")
    }

    /// Deterministic family of `n` distinct textures. The first ten pair
    /// five coverage levels with fine and coarse dots; the rest draw both at
    /// random. Each area also gets a laminar profile that densifies towards
    /// one side of the band.
    pub fn family(n: usize, seed: u64) -> Vec<AreaTexture> {
        const COVERAGE: [f64; 5] = [0.012, 0.024, 0.048, 0.095, 0.19];
        const RADIUS: [f64; 2] = [4.0, 9.0];
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x7e87_u64);
        (0..n)
            .map(|a| {
                let (coverage, radius): (f64, f64) = if a < 10 {
                    (COVERAGE[a / 2], RADIUS[a % 2])
                } else {
                    (rng.random_range(0.03..0.17), rng.random_range(4.0..9.0))
                };
                let count = 4;
                let deeper = (a + a / 3) % 2 == 0;
                let widths: Vec<f64> = (0..count).map(|_| rng.random_range(0.7..1.3)).collect();
                let profile: Vec<f64> = (0..count)
                    .map(|l| {
                        let t = l as f64 / (count - 1) as f64;
                        0.8 + 0.4 * if deeper { 1.0 - t } else { t }
                    })
                    .collect();
                let norm: f64 = widths.iter().zip(&profile).map(|(w, p)| w * p).sum::<f64>() / widths.iter().sum::<f64>();
                let layers = widths
                    .iter()
                    .zip(&profile)
                    .map(|(&width, &p)| {
                        let radius_um = radius * rng.random_range(0.9..1.1);
                        let c = coverage * p / norm;
                        TextureLayer { width, density: c / (PI * (radius_um * 1e-3).powi(2)), radius_um }
                    })
                    .collect();
                AreaTexture { layers }
            })
            .collect()
    }
}

/// Parameters of the synthetic cortex phantom. Lengths are micrometres unless
/// noted.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhantomConfig {
    pub areas: usize,
    /// Areas are tiled as `area_rows` bands across sections, each split
    /// into `areas / area_rows` columns along the band.
    pub area_rows: usize,
    pub sections: usize,
    /// Section image size in pixels.
    pub width: usize,
    pub height: usize,
    pub pixel_um: f64,
    pub thickness_um: f64,
    /// Cortical band thickness, measured vertically.
    pub band_um: f64,
    pub fold_amplitude_um: f64,
    pub fold_wavelength_um: f64,
    /// Sideways drift of area borders across sections.
    pub border_wobble_um: f64,
    /// Per-area textures; empty means [`AreaTexture::family`].
    #[serde(default)]
    pub textures: Vec<AreaTexture>,
    pub max_rotation_deg: f64,
    pub max_shift_um: f64,
    pub missing_fraction: f64,
    pub pixel_noise: f64,
    /// Relative range of per-section stain strength.
    pub stain_jitter: f64,
    pub seed: u64,
}

impl Default for PhantomConfig {
    fn default() -> Self {
        Self {
            areas: 10,
            area_rows: 2,
            sections: 96,
            width: 512,
            height: 160,
            pixel_um: 25.0,
            thickness_um: 100.0,
            band_um: 750.0,
            fold_amplitude_um: 500.0,
            fold_wavelength_um: 3600.0,
            border_wobble_um: 200.0,
            textures: Vec::new(),
            max_rotation_deg: 2.0,
            max_shift_um: 150.0,
            missing_fraction: 0.05,
            pixel_noise: 0.02,
            stain_jitter: 0.0,
            seed: 0,
        }
    }
}

impl PhantomConfig {
    pub fn textures(&self) -> Vec<AreaTexture> {
        if self.textures.is_empty() {
            AreaTexture::family(self.areas, self.seed)
        } else {
            self.textures.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.areas < 2 || self.areas > 254 {
            return bad(format!("phantom needs 2..=254 areas, got {}", self.areas));
        }
        if self.area_rows == 0 || self.areas % self.area_rows != 0 {
            return bad(format!("{} areas cannot be tiled in {} rows", self.areas, self.area_rows));
        }
        if self.sections == 0 || self.width < 16 || self.height < 16 {
            return bad(format!("phantom of {} sections at {}x{} px is too small", self.sections, self.width, self.height));
        }
        for (name, v) in [("pixel_um", self.pixel_um), ("thickness_um", self.thickness_um), ("fold_wavelength_um", self.fold_wavelength_um)] {
            if !(v > 0.0) {
                return bad(format!("{name} must be positive, got {v}"));
            }
        }
        for (name, v) in [
            ("fold_amplitude_um", self.fold_amplitude_um),
            ("border_wobble_um", self.border_wobble_um),
            ("max_rotation_deg", self.max_rotation_deg),
            ("max_shift_um", self.max_shift_um),
            ("pixel_noise", self.pixel_noise),
        ] {
            if !(v >= 0.0) {
                return bad(format!("{name} must be non-negative, got {v}"));
            }
        }
        if !(0.0..1.0).contains(&self.missing_fraction) {
            return bad(format!("missing_fraction must lie in [0, 1), got {}", self.missing_fraction));
        }
        if !(0.0..1.0).contains(&self.stain_jitter) {
            return bad(format!("stain_jitter must lie in [0, 1), got {}", self.stain_jitter));
        }
        let px = self.min_band_px();
        if !(px >= 3.0) {
            return bad(format!("cortical band is {px:.2} px thick at its thinnest, needs at least 3"));
        }
        let l = self.layout();
        if l.band_top_max() > self.height as f64 * self.pixel_um - l.margin {
            return bad("folded band does not fit inside the section height".into());
        }
        if l.wm_floor >= l.band_bottom_min() {
            return bad("folded band dips into the bottom margin".into());
        }
        if 2.0 * self.border_wobble_um >= l.area_width().min(l.row_depth()) {
            return bad(format!("border wobble {} um lets neighbouring area borders cross", self.border_wobble_um));
        }
        let tex = self.textures();
        if tex.len() != self.areas {
            return bad(format!("{} textures for {} areas", tex.len(), self.areas));
        }
        for (a, t) in tex.iter().enumerate() {
            if t.layers.is_empty() || t.layers.iter().any(|l| !(l.width > 0.0 && l.density >= 0.0 && l.radius_um > 0.0)) {
                return bad(format!("texture of area {a} has an invalid layer"));
            }
            if let Some(l) = t.layers.iter().find(|l| l.coverage() > MAX_COVERAGE) {
                return bad(format!("texture of area {a} covers {:.2} of its layer, at most {MAX_COVERAGE} is possible", l.coverage()));
            }
            for (b, u) in tex.iter().enumerate().skip(a + 1) {
                if t == u {
                    return bad(format!("areas {a} and {b} share the same texture"));
                }
            }
        }
        Ok(())
    }

    /// Thinnest band thickness normal to the fold, in pixels.
    pub fn min_band_px(&self) -> f64 {
        let slope = self.layout().max_slope();
        self.band_um / (1.0 + slope * slope).sqrt() / self.pixel_um
    }

    pub(crate) fn layout(&self) -> Layout {
        let w = self.width as f64 * self.pixel_um;
        let h = self.height as f64 * self.pixel_um;
        let margin = 0.05 * h.min(w);
        let wm_floor = margin;
        let base = wm_floor + 0.2 * h + 1.3 * self.fold_amplitude_um;
        Layout {
            w,
            margin,
            wm_floor,
            base,
            amp: self.fold_amplitude_um,
            wavelength: self.fold_wavelength_um,
            band: self.band_um,
            cols: self.areas / self.area_rows.max(1),
            rows: self.area_rows.max(1),
            depth: self.sections as f64 * self.thickness_um,
            wobble: self.border_wobble_um,
        }
    }
}

/// Analytic geometry of the phantom in the canonical (jitter-free) frame:
/// `x` along the band, `y` from white matter towards the pial side, `z`
/// across sections.
#[derive(Clone, Copy, Debug)]
pub(crate) struct Layout {
    w: f64,
    margin: f64,
    wm_floor: f64,
    base: f64,
    amp: f64,
    wavelength: f64,
    band: f64,
    cols: usize,
    rows: usize,
    /// Stack depth along z.
    depth: f64,
    wobble: f64,
}

impl Layout {
    fn fold(&self, x: f64, z: f64) -> f64 {
        let k = 2.0 * PI / self.wavelength;
        self.base + self.amp * (k * x + 2.0 * PI * z / 12_000.0).sin() + 0.3 * self.amp * (2.3 * k * x + 1.3).sin()
    }

    fn max_slope(&self) -> f64 {
        let k = 2.0 * PI / self.wavelength;
        self.amp * k * (1.0 + 0.3 * 2.3)
    }

    fn band_top_max(&self) -> f64 {
        self.base + 1.3 * self.amp + self.band
    }

    fn band_bottom_min(&self) -> f64 {
        self.base - 1.3 * self.amp
    }

    fn area_width(&self) -> f64 {
        (self.w - 2.0 * self.margin) / self.cols as f64
    }

    fn row_depth(&self) -> f64 {
        self.depth / self.rows as f64
    }

    /// x position of the border between columns `i - 1` and `i` of row `r`.
    fn border(&self, r: usize, i: usize, z: f64) -> f64 {
        let phase = 1.7 * (i + 3 * r) as f64;
        self.margin + self.area_width() * i as f64 + self.wobble * (2.0 * PI * z / 7_000.0 + phase).sin()
    }

    /// z position of the border between rows `j - 1` and `j`.
    fn row_border(&self, j: usize, x: f64) -> f64 {
        self.row_depth() * j as f64 + self.wobble * (2.0 * PI * x / 5_000.0 + 0.9 * j as f64).sin()
    }

    fn row(&self, x: f64, z: f64) -> usize {
        (1..self.rows).filter(|&j| z >= self.row_border(j, x)).count()
    }

    fn inside_x(&self, x: f64) -> bool {
        x >= self.margin && x < self.w - self.margin
    }

    pub(crate) fn tissue(&self, x: f64, y: f64, z: f64) -> Tissue {
        if !self.inside_x(x) || y < self.wm_floor {
            return Tissue::Background;
        }
        let f = self.fold(x, z);
        if y < f {
            Tissue::White
        } else if y < f + self.band {
            Tissue::Gray
        } else {
            Tissue::Background
        }
    }

    /// Relative depth in the band, 0 at the white-matter side.
    fn depth(&self, x: f64, y: f64, z: f64) -> f64 {
        ((y - self.fold(x, z)) / self.band).clamp(0.0, 1.0 - 1e-12)
    }

    /// Area at in-plane position `x` of the section at stack depth `z`,
    /// regardless of tissue class.
    pub(crate) fn area(&self, x: f64, z: f64) -> usize {
        let r = self.row(x, z);
        r * self.cols + (1..self.cols).filter(|&i| x >= self.border(r, i, z)).count()
    }

    /// Distance to the nearest area border, along x within the row and
    /// along z across rows.
    pub(crate) fn border_distance(&self, x: f64, z: f64) -> f64 {
        let r = self.row(x, z);
        let across = (1..self.cols).map(|i| (x - self.border(r, i, z)).abs());
        let along = (1..self.rows).map(|j| (z - self.row_border(j, x)).abs());
        across.chain(along).fold(f64::INFINITY, f64::min)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PhantomSection {
    /// `None` for a missing section.
    pub image: Option<GrayImage>,
    /// Ground-truth tissue class per pixel ([`Tissue`] byte values).
    pub tissue: Vec<u8>,
    /// Area per pixel: 0 outside gray matter, otherwise area index + 1.
    pub areas: Vec<u8>,
    /// Maps canonical in-plane micrometres to this section's image frame.
    pub transform: RigidTransform2D,
}

impl PhantomSection {
    pub fn is_missing(&self) -> bool {
        self.image.is_none()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PhantomDataset {
    pub config: PhantomConfig,
    pub sections: Vec<PhantomSection>,
}

impl PhantomDataset {
    /// Depth of the plane of section `k`.
    pub fn section_z(&self, k: usize) -> f64 {
        (k as f64 + 0.5) * self.config.thickness_um
    }

    /// Canonical in-plane position of section-frame point `p` on section `k`.
    pub fn canonical(&self, k: usize, p: [f64; 2]) -> [f64; 2] {
        self.sections[k].transform.inverse().apply(p)
    }

    /// True area of canonical in-plane position `q` on section `k`.
    pub fn area_at(&self, k: usize, q: [f64; 2]) -> u32 {
        self.config.layout().area(q[0], self.section_z(k)) as u32
    }

    pub fn tissue_at(&self, k: usize, q: [f64; 2]) -> Tissue {
        self.config.layout().tissue(q[0], q[1], self.section_z(k))
    }

    /// In-plane distance from `q` to the nearest area border on section `k`.
    pub fn border_distance(&self, k: usize, q: [f64; 2]) -> f64 {
        self.config.layout().border_distance(q[0], self.section_z(k))
    }

    pub fn missing(&self) -> Vec<bool> {
        self.sections.iter().map(|s| s.is_missing()).collect()
    }
}

/// Renders the phantom. Every output is a pure function of the config.
pub fn generate_phantom(config: &PhantomConfig) -> Result<PhantomDataset> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let n = config.sections;
    let (cx, cy) = (config.width as f64 * config.pixel_um / 2.0, config.height as f64 * config.pixel_um / 2.0);
    let transforms: Vec<RigidTransform2D> = (0..n)
        .map(|_| {
            let a = if config.max_rotation_deg > 0.0 {
                rng.random_range(-1.0..1.0) * config.max_rotation_deg.to_radians()
            } else {
                0.0
            };
            let mut shift = [0.0; 2];
            if config.max_shift_um > 0.0 {
                shift = [rng.random_range(-1.0..1.0) * config.max_shift_um, rng.random_range(-1.0..1.0) * config.max_shift_um];
            }
            if a == 0.0 && shift == [0.0, 0.0] {
                return RigidTransform2D::IDENTITY;
            }
            // Rotation about the image centre, then the shift.
            let r = RigidTransform2D::new(a, 0.0, 0.0).apply([cx, cy]);
            RigidTransform2D::new(a, cx - r[0] + shift[0], cy - r[1] + shift[1])
        })
        .collect();
    let mut missing = vec![false; n];
    let n_missing = ((config.missing_fraction * n as f64).round() as usize).min(n - 1);
    for k in rand::seq::index::sample(&mut rng, n, n_missing) {
        missing[k] = true;
    }
    let stain: Vec<f64> = (0..n).map(|_| 1.0 + config.stain_jitter * rng.random_range(-1.0..1.0)).collect();
    let section_seeds: Vec<u64> = (0..n).map(|_| rng.random()).collect();
    let textures = config.textures();
    let sections = (0..n)
        .into_par_iter()
        .map(|k| render_section(config, &textures, k, transforms[k], stain[k], section_seeds[k], missing[k]))
        .collect();
    Ok(PhantomDataset { config: config.clone(), sections })
}

struct Dot {
    q: [f64; 2],
    r: f64,
    level: f32,
    /// Paint only onto pixels of this tissue class.
    tissue: Tissue,
}

fn render_section(
    cfg: &PhantomConfig,
    textures: &[AreaTexture],
    k: usize,
    t: RigidTransform2D,
    stain: f64,
    seed: u64,
    missing: bool,
) -> PhantomSection {
    let lay = cfg.layout();
    let z = (k as f64 + 0.5) * cfg.thickness_um;
    let (w, h, px) = (cfg.width, cfg.height, cfg.pixel_um);
    let inv = t.inverse();
    let mut tissue = vec![Tissue::Background as u8; w * h];
    let mut areas = vec![0u8; w * h];
    let mut img = vec![BACKGROUND_LEVEL; w * h];
    for y in 0..h {
        for x in 0..w {
            let q = inv.apply([(x as f64 + 0.5) * px, (y as f64 + 0.5) * px]);
            let c = lay.tissue(q[0], q[1], z);
            let i = y * w + x;
            tissue[i] = c as u8;
            match c {
                Tissue::Gray => {
                    areas[i] = lay.area(q[0], z) as u8 + 1;
                    img[i] = NEUROPIL_LEVEL;
                }
                Tissue::White => img[i] = WHITE_LEVEL,
                Tissue::Background => {}
            }
        }
    }
    if missing {
        return PhantomSection { image: None, tissue, areas, transform: t };
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dots = place_dots(cfg, &lay, textures, z, &mut rng);
    for d in &dots {
        let s = t.apply(d.q);
        let (sx, sy, r) = (s[0] / px, s[1] / px, d.r / px);
        let (x0, x1) = ((sx - r - 1.0).floor().max(0.0) as usize, ((sx + r + 1.0).ceil().max(0.0) as usize).min(w));
        let (y0, y1) = ((sy - r - 1.0).floor().max(0.0) as usize, ((sy + r + 1.0).ceil().max(0.0) as usize).min(h));
        for y in y0..y1 {
            for x in x0..x1 {
                let i = y * w + x;
                if tissue[i] != d.tissue as u8 {
                    continue;
                }
                let cover = disc_cover(x as f64 - sx, y as f64 - sy, r);
                if cover > 0.0 {
                    img[i] = img[i].min(img[i] + (d.level - img[i]) * cover);
                }
            }
        }
    }
    let noise = Normal::new(0.0, cfg.pixel_noise.max(0.0)).expect("finite noise");
    for (v, &c) in img.iter_mut().zip(&tissue) {
        if c == Tissue::Background as u8 {
            *v = BACKGROUND_LEVEL;
            continue;
        }
        let stained = 1.0 - stain * (1.0 - *v as f64);
        let n = if cfg.pixel_noise > 0.0 { noise.sample(&mut rng) } else { 0.0 };
        *v = (stained + n).clamp(0.0, 1.0) as f32;
    }
    let image = GrayImage::new(w, h, img).expect("sized").quantized();
    PhantomSection { image: Some(image), tissue, areas, transform: t }
}

/// Fraction of the unit pixel with corner `(dx, dy)` relative to the disc
/// centre that lies inside a disc of radius `r`, by 4x4 supersampling.
fn disc_cover(dx: f64, dy: f64, r: f64) -> f32 {
    const N: usize = 4;
    let mut inside = 0;
    for a in 0..N {
        for b in 0..N {
            let (u, v) = (dx + (a as f64 + 0.5) / N as f64, dy + (b as f64 + 0.5) / N as f64);
            inside += (u * u + v * v < r * r) as usize;
        }
    }
    inside as f32 / (N * N) as f32
}

/// Proposal intensity that leaves `density` dots of radius `r` after
/// rejecting overlaps, by inverting the Matérn type II retention rate
/// `(1 - exp(-lambda v)) / v` with exclusion area `v = 4 pi r^2`.
fn proposal_density(density: f64, r_um: f64) -> f64 {
    let v = 4.0 * PI * (r_um * 1e-3).powi(2);
    -(1.0 - (density * v).min(0.95)).ln() / v
}

/// Hard-core dot process: darts at the densest proposal intensity, thinned
/// to the local one and rejected when they would overlap an earlier dot.
fn place_dots(cfg: &PhantomConfig, lay: &Layout, textures: &[AreaTexture], z: f64, rng: &mut ChaCha8Rng) -> Vec<Dot> {
    let w_um = cfg.width as f64 * cfg.pixel_um;
    let h_um = cfg.height as f64 * cfg.pixel_um;
    let max_rate = textures
        .iter()
        .flat_map(|t| t.layers.iter().map(|l| proposal_density(l.density, l.radius_um)))
        .fold(proposal_density(GLIA_DENSITY, GLIA_RADIUS_UM), f64::max);
    let max_r = textures.iter().flat_map(|t| t.layers.iter().map(|l| l.radius_um)).fold(GLIA_RADIUS_UM, f64::max);
    let darts = (max_rate * w_um * h_um * 1e-6).ceil() as usize;
    let cell = 2.0 * max_r;
    let (gw, gh) = ((w_um / cell).ceil() as usize + 1, (h_um / cell).ceil() as usize + 1);
    let mut grid: Vec<Vec<u32>> = vec![Vec::new(); gw * gh];
    let mut dots: Vec<Dot> = Vec::new();
    for _ in 0..darts {
        let q = [rng.random_range(0.0..w_um), rng.random_range(0.0..h_um)];
        let u: f64 = rng.random();
        let (density, r, level, tissue) = match lay.tissue(q[0], q[1], z) {
            Tissue::Background => continue,
            Tissue::White => (GLIA_DENSITY, GLIA_RADIUS_UM, GLIA_LEVEL, Tissue::White),
            Tissue::Gray => {
                let l = textures[lay.area(q[0], z)].layer_at(lay.depth(q[0], q[1], z));
                (l.density, l.radius_um, DOT_LEVEL, Tissue::Gray)
            }
        };
        if u * max_rate >= proposal_density(density, r) {
            continue;
        }
        let (gx, gy) = ((q[0] / cell) as usize, (q[1] / cell) as usize);
        let mut free = true;
        'scan: for yy in gy.saturating_sub(1)..(gy + 2).min(gh) {
            for xx in gx.saturating_sub(1)..(gx + 2).min(gw) {
                for &j in &grid[yy * gw + xx] {
                    let o = &dots[j as usize];
                    if (o.q[0] - q[0]).hypot(o.q[1] - q[1]) < o.r + r {
                        free = false;
                        break 'scan;
                    }
                }
            }
        }
        if free {
            grid[gy * gw + gx].push(dots.len() as u32);
            dots.push(Dot { q, r, level, tissue });
        }
    }
    dots
}
