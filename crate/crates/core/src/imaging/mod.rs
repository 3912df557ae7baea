//! Grayscale rasters: rendering, seeded degradation, exact rotations and
//! the on-disk dataset format.

mod dataset;
mod degrade;
mod pgm;
mod render;

use thiserror::Error;

pub use dataset::{
    generate_dataset, read_dataset, sample_seed, default_manifest, write_dataset, ManifestEntry, Sample,
    SampleRecord, DEFAULT_COUNTS,
};
pub use degrade::{degrade, degrade_all, ConditionKind, Degradation, Span};
pub(crate) use degrade::gaussian_kernel;
pub use pgm::{decode_pgm, encode_pgm, read_pgm, write_pgm};
pub use render::{render, RenderOpts};

#[derive(Debug, Error)]
pub enum ImagingError {
    #[error("barcode of {needed} px does not fit a {canvas} px canvas")]
    CanvasTooSmall { needed: u32, canvas: u32 },
    #[error("invalid render options: {0}")]
    InvalidOptions(String),
    #[error("invalid degradation: {0}")]
    InvalidDegradation(String),
    #[error("unknown condition {0:?}")]
    UnknownCondition(String),
    #[error("malformed PGM: {0}")]
    Pgm(String),
    #[error("malformed manifest: {0}")]
    Manifest(String),
    #[error("dataset record {line}: {msg}")]
    Record { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Row-major 8-bit luminance image.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Image {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
}

impl Image {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Self {
        assert!(width >= 1 && height >= 1, "image must be at least 1x1");
        assert_eq!(pixels.len(), width * height, "pixel count must equal width*height");
        Self { width, height, pixels }
    }

    pub fn filled(width: usize, height: usize, value: u8) -> Self {
        Self::new(width, height, vec![value; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn pixels_mut(&mut self) -> &mut [u8] {
        &mut self.pixels
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.pixels[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: u8) {
        self.pixels[y * self.width + x] = v;
    }

    pub fn row(&self, y: usize) -> &[u8] {
        &self.pixels[y * self.width..(y + 1) * self.width]
    }

    /// Bilinear sample at continuous pixel coordinates; outside reads white.
    pub fn sample_bilinear(&self, x: f64, y: f64) -> f64 {
        let x0 = x.floor();
        let y0 = y.floor();
        let fx = x - x0;
        let fy = y - y0;
        let (x0, y0) = (x0 as i64, y0 as i64);
        let px = |xi: i64, yi: i64| -> f64 {
            if xi < 0 || yi < 0 || xi >= self.width as i64 || yi >= self.height as i64 {
                255.0
            } else {
                self.pixels[yi as usize * self.width + xi as usize] as f64
            }
        };
        let top = px(x0, y0) * (1.0 - fx) + px(x0 + 1, y0) * fx;
        let bottom = px(x0, y0 + 1) * (1.0 - fx) + px(x0 + 1, y0 + 1) * fx;
        top * (1.0 - fy) + bottom * fy
    }
}

/// Quarter-turn orientation; 90 means counter-clockwise.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, serde::Serialize, serde::Deserialize)]
pub enum Rotation {
    #[serde(rename = "0")]
    R0,
    #[serde(rename = "90")]
    R90,
    #[serde(rename = "180")]
    R180,
    #[serde(rename = "270")]
    R270,
}

impl Rotation {
    /// The order in which test-time augmentation visits orientations.
    pub const ALL: [Rotation; 4] = [Rotation::R0, Rotation::R90, Rotation::R180, Rotation::R270];

    pub fn degrees(self) -> u32 {
        match self {
            Rotation::R0 => 0,
            Rotation::R90 => 90,
            Rotation::R180 => 180,
            Rotation::R270 => 270,
        }
    }

    pub fn from_degrees(deg: u32) -> Option<Self> {
        match deg % 360 {
            0 => Some(Rotation::R0),
            90 => Some(Rotation::R90),
            180 => Some(Rotation::R180),
            270 => Some(Rotation::R270),
            _ => None,
        }
    }

    pub fn then(self, other: Rotation) -> Rotation {
        Rotation::from_degrees(self.degrees() + other.degrees()).unwrap()
    }
}

/// Lossless quarter-turn rotation (counter-clockwise for `R90`).
pub fn rotate_exact(img: &Image, rot: Rotation) -> Image {
    let (w, h) = (img.width, img.height);
    match rot {
        Rotation::R0 => img.clone(),
        Rotation::R180 => {
            let mut pixels = img.pixels.clone();
            pixels.reverse();
            Image::new(w, h, pixels)
        }
        Rotation::R90 => {
            // source (x, y) lands at (y, w - 1 - x)
            let mut out = vec![0u8; w * h];
            for y in 0..h {
                for x in 0..w {
                    out[(w - 1 - x) * h + y] = img.pixels[y * w + x];
                }
            }
            Image::new(h, w, out)
        }
        Rotation::R270 => {
            // source (x, y) lands at (h - 1 - y, x)
            let mut out = vec![0u8; w * h];
            for y in 0..h {
                for x in 0..w {
                    out[x * h + (h - 1 - y)] = img.pixels[y * w + x];
                }
            }
            Image::new(h, w, out)
        }
    }
}
