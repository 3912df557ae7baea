//! Seeded image degradations modelling the synthetic capture conditions.
//!
//! Every random draw comes from a ChaCha stream seeded by the caller, so a
//! (image, degradation, seed) triple always yields the same bytes.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use nalgebra::{SMatrix, SVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{rotate_exact, Image, ImagingError, Rotation};
use crate::mix_seed;

/// Closed interval a parameter is drawn from uniformly.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Span {
    pub lo: f64,
    pub hi: f64,
}

impl Span {
    pub const fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    pub const fn fixed(v: f64) -> Self {
        Self { lo: v, hi: v }
    }

    fn draw(&self, rng: &mut impl Rng) -> f64 {
        let u: f64 = rng.random();
        self.lo + (self.hi - self.lo) * u
    }

    fn within(&self, lo: f64, hi: f64) -> bool {
        self.lo.is_finite() && self.hi.is_finite() && lo <= self.lo && self.lo <= self.hi && self.hi <= hi
    }
}

/// One capture condition with its parameter ranges.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Degradation {
    Norm,
    /// Luminance multiplied by a factor in [0.2, 0.5].
    Dark { factor: Span },
    /// Gain in [1.6, 2.4], clipped at 255.
    Overexposed { gain: Span },
    /// 1..=`max_rects` opaque rectangles covering at most `max_area` of the bar region.
    Occluded { max_rects: u32, max_area: f64 },
    /// In-plane rotation up to `max_angle_deg` plus per-corner perspective jitter
    /// up to `max_jitter` of the side length.
    Rpt { max_angle_deg: f64, max_jitter: f64 },
    /// Horizontal cylindrical warp; amplitude as a fraction of the width.
    Ccw { amplitude: Span },
    Blur { sigma: Span },
    /// Additive Gaussian noise, sigma in gray levels.
    Noise { sigma: Span },
    UpsideDown,
}

/// Condition names as they appear in preset combos (`"occluded+dark"`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ConditionKind {
    Norm,
    Dark,
    Overexposed,
    Occluded,
    Rpt,
    Ccw,
    Blur,
    Noise,
    /// Noise pinned to the top of the noise range.
    HeavyNoise,
    UpsideDown,
}

impl ConditionKind {
    pub const ALL: [ConditionKind; 10] = [
        ConditionKind::Norm,
        ConditionKind::Dark,
        ConditionKind::Overexposed,
        ConditionKind::Occluded,
        ConditionKind::Rpt,
        ConditionKind::Ccw,
        ConditionKind::Blur,
        ConditionKind::Noise,
        ConditionKind::HeavyNoise,
        ConditionKind::UpsideDown,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ConditionKind::Norm => "norm",
            ConditionKind::Dark => "dark",
            ConditionKind::Overexposed => "overexposed",
            ConditionKind::Occluded => "occluded",
            ConditionKind::Rpt => "rpt",
            ConditionKind::Ccw => "ccw",
            ConditionKind::Blur => "blur",
            ConditionKind::Noise => "noise",
            ConditionKind::HeavyNoise => "heavy_noise",
            ConditionKind::UpsideDown => "upside_down",
        }
    }

    /// The documented default parameters for this condition.
    pub fn default_spec(self) -> Degradation {
        match self {
            ConditionKind::Norm => Degradation::Norm,
            ConditionKind::Dark => Degradation::Dark { factor: Span::new(0.2, 0.5) },
            ConditionKind::Overexposed => Degradation::Overexposed { gain: Span::new(1.6, 2.4) },
            ConditionKind::Occluded => Degradation::Occluded { max_rects: 3, max_area: 0.3 },
            ConditionKind::Rpt => Degradation::Rpt { max_angle_deg: 60.0, max_jitter: 0.10 },
            ConditionKind::Ccw => Degradation::Ccw { amplitude: Span::new(0.05, 0.15) },
            ConditionKind::Blur => Degradation::Blur { sigma: Span::new(1.0, 3.0) },
            ConditionKind::Noise => Degradation::Noise { sigma: Span::new(5.0, 25.0) },
            ConditionKind::HeavyNoise => Degradation::Noise { sigma: Span::fixed(25.0) },
            ConditionKind::UpsideDown => Degradation::UpsideDown,
        }
    }

    /// Parses a `+`-joined combo into its conditions, in application order.
    pub fn parse_combo(combo: &str) -> Result<Vec<ConditionKind>, ImagingError> {
        combo.split('+').map(|s| s.trim().parse()).collect()
    }
}

impl fmt::Display for ConditionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ConditionKind {
    type Err = ImagingError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key = s.trim().to_ascii_lowercase().replace(['-', ' '], "_");
        ConditionKind::ALL
            .into_iter()
            .find(|k| k.name() == key)
            .ok_or_else(|| ImagingError::UnknownCondition(s.to_string()))
    }
}

impl Degradation {
    pub fn validate(&self) -> Result<(), ImagingError> {
        let bad = |what: &str| Err(ImagingError::InvalidDegradation(what.to_string()));
        match self {
            Degradation::Norm | Degradation::UpsideDown => Ok(()),
            Degradation::Dark { factor } if !factor.within(0.2, 0.5) => bad("dark factor outside [0.2, 0.5]"),
            Degradation::Overexposed { gain } if !gain.within(1.6, 2.4) => bad("gain outside [1.6, 2.4]"),
            Degradation::Occluded { max_rects, max_area }
                if !(1..=3).contains(max_rects) || !(*max_area > 0.0 && *max_area <= 0.3) =>
            {
                bad("occlusion needs 1..=3 rectangles and area in (0, 0.3]")
            }
            Degradation::Rpt { max_angle_deg, max_jitter }
                if !(0.0..=60.0).contains(max_angle_deg) || !(0.0..=0.10).contains(max_jitter) =>
            {
                bad("rpt angle outside [0, 60] or jitter outside [0, 0.1]")
            }
            Degradation::Ccw { amplitude } if !amplitude.within(0.0, 0.15) => bad("ccw amplitude outside [0, 0.15]"),
            Degradation::Blur { sigma } if !sigma.within(0.0, 3.0) => bad("blur sigma outside [0, 3]"),
            Degradation::Noise { sigma } if !sigma.within(0.0, 25.0) => bad("noise sigma outside [0, 25]"),
            _ => Ok(()),
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            Degradation::Norm => "norm",
            Degradation::Dark { .. } => "dark",
            Degradation::Overexposed { .. } => "overexposed",
            Degradation::Occluded { .. } => "occluded",
            Degradation::Rpt { .. } => "rpt",
            Degradation::Ccw { .. } => "ccw",
            Degradation::Blur { .. } => "blur",
            Degradation::Noise { .. } => "noise",
            Degradation::UpsideDown => "upside_down",
        }
    }
}

fn clamp_u8(v: f64) -> u8 {
    v.round().clamp(0.0, 255.0) as u8
}

/// Applies one degradation. All randomness derives from `seed`.
pub fn degrade(img: &Image, spec: &Degradation, seed: u64) -> Image {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match spec {
        Degradation::Norm => img.clone(),
        Degradation::Dark { factor } => scale_luminance(img, factor.draw(&mut rng)),
        Degradation::Overexposed { gain } => scale_luminance(img, gain.draw(&mut rng)),
        Degradation::Occluded { max_rects, max_area } => occlude(img, *max_rects, *max_area, &mut rng),
        Degradation::Rpt { max_angle_deg, max_jitter } => {
            let theta = Span::new(-max_angle_deg, *max_angle_deg).draw(&mut rng).to_radians();
            let side = img.width().max(img.height()) as f64;
            let jitter = Span::new(-max_jitter * side, max_jitter * side);
            let mut offsets = [(0.0, 0.0); 4];
            for o in &mut offsets {
                *o = (jitter.draw(&mut rng), jitter.draw(&mut rng));
            }
            perspective(img, theta, &offsets)
        }
        Degradation::Ccw { amplitude } => cylinder_warp(img, amplitude.draw(&mut rng)),
        Degradation::Blur { sigma } => gaussian_blur(img, sigma.draw(&mut rng)),
        Degradation::Noise { sigma } => add_noise(img, sigma.draw(&mut rng), &mut rng),
        Degradation::UpsideDown => rotate_exact(img, Rotation::R180),
    }
}

/// Applies `specs` left to right, each with its own derived seed.
pub fn degrade_all(img: &Image, specs: &[Degradation], seed: u64) -> Image {
    specs
        .iter()
        .enumerate()
        .fold(img.clone(), |acc, (k, spec)| degrade(&acc, spec, mix_seed(seed, k as u64 + 1)))
}

fn scale_luminance(img: &Image, factor: f64) -> Image {
    let pixels = img.pixels().iter().map(|&p| clamp_u8(p as f64 * factor)).collect();
    Image::new(img.width(), img.height(), pixels)
}

/// Bounding box (x0, y0, x1, y1), exclusive ends, of pixels darker than mid-gray.
fn dark_bbox(img: &Image) -> (usize, usize, usize, usize) {
    let (mut x0, mut y0, mut x1, mut y1) = (usize::MAX, usize::MAX, 0, 0);
    for y in 0..img.height() {
        for (x, &p) in img.row(y).iter().enumerate() {
            if p < 128 {
                x0 = x0.min(x);
                y0 = y0.min(y);
                x1 = x1.max(x + 1);
                y1 = y1.max(y + 1);
            }
        }
    }
    if x0 == usize::MAX {
        (0, 0, img.width(), img.height())
    } else {
        (x0, y0, x1, y1)
    }
}

fn occlude(img: &Image, max_rects: u32, max_area: f64, rng: &mut impl Rng) -> Image {
    let mut out = img.clone();
    let (x0, y0, x1, y1) = dark_bbox(img);
    let (rw, rh) = ((x1 - x0) as f64, (y1 - y0) as f64);
    let n = rng.random_range(1..=max_rects.max(1));
    let budget = max_area * rw * rh / n as f64;
    for _ in 0..n {
        let w = (rw * rng.random_range(0.05..0.5)).max(1.0);
        let h_cap = (budget / w).min(rh);
        let h = (h_cap * rng.random_range(0.4..1.0)).floor().max(1.0).min(h_cap.floor().max(1.0));
        let w = w.floor().min((budget / h).floor()).max(1.0);
        let left = x0 as f64 + rng.random_range(0.0..1.0) * (rw - w).max(0.0);
        let top = y0 as f64 + rng.random_range(0.0..1.0) * (rh - h).max(0.0);
        let fill: u8 = rng.random();
        let (l, t) = (left as usize, top as usize);
        for y in t..(t + h as usize).min(img.height()) {
            for x in l..(l + w as usize).min(img.width()) {
                out.set(x, y, fill);
            }
        }
    }
    out
}

type Homography = SMatrix<f64, 3, 3>;

/// Projective map sending each `from[i]` to `to[i]`.
fn homography(from: &[(f64, f64); 4], to: &[(f64, f64); 4]) -> Homography {
    let mut a = SMatrix::<f64, 8, 8>::zeros();
    let mut b = SVector::<f64, 8>::zeros();
    for i in 0..4 {
        let ((x, y), (u, v)) = (from[i], to[i]);
        let r = 2 * i;
        a.set_row(r, &nalgebra::RowSVector::<f64, 8>::from_row_slice(&[x, y, 1.0, 0.0, 0.0, 0.0, -u * x, -u * y]));
        a.set_row(r + 1, &nalgebra::RowSVector::<f64, 8>::from_row_slice(&[0.0, 0.0, 0.0, x, y, 1.0, -v * x, -v * y]));
        b[r] = u;
        b[r + 1] = v;
    }
    let h = a.lu().solve(&b).unwrap_or_else(|| SVector::<f64, 8>::from_row_slice(&[1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0]));
    Homography::new(h[0], h[1], h[2], h[3], h[4], h[5], h[6], h[7], 1.0)
}

fn snap(v: f64) -> f64 {
    let r = v.round();
    if (v - r).abs() < 1e-9 {
        r
    } else {
        v
    }
}

/// Rotation by `theta` about the center followed by corner jitter, resampled
/// bilinearly with white fill.
fn perspective(img: &Image, theta: f64, offsets: &[(f64, f64); 4]) -> Image {
    let (w, h) = (img.width() as f64 - 1.0, img.height() as f64 - 1.0);
    let corners = [(0.0, 0.0), (w, 0.0), (w, h), (0.0, h)];
    let (cx, cy) = (w / 2.0, h / 2.0);
    let (s, c) = theta.sin_cos();
    let mut dst = [(0.0, 0.0); 4];
    for i in 0..4 {
        let (x, y) = (corners[i].0 - cx, corners[i].1 - cy);
        dst[i] = (cx + c * x - s * y + offsets[i].0, cy + s * x + c * y + offsets[i].1);
    }
    // maps output pixels back to source coordinates
    let inv = homography(&dst, &corners);
    let mut out = Image::filled(img.width(), img.height(), 255);
    for y in 0..img.height() {
        for x in 0..img.width() {
            let p = inv * nalgebra::Vector3::new(x as f64, y as f64, 1.0);
            let (sx, sy) = (snap(p.x / p.z), snap(p.y / p.z));
            out.set(x, y, clamp_u8(img.sample_bilinear(sx, sy)));
        }
    }
    out
}

/// Cylinder-like horizontal remap: magnifies the middle, compresses the
/// edges, and bows the rows slightly.
fn cylinder_warp(img: &Image, amplitude: f64) -> Image {
    let (w, h) = (img.width() as f64, img.height() as f64);
    let cx = (w - 1.0) / 2.0;
    let mut out = Image::filled(img.width(), img.height(), 255);
    for x in 0..img.width() {
        let u = (x as f64 - cx) / w;
        let sx = x as f64 - amplitude * w / PI * (2.0 * PI * u).sin();
        let dy = 0.25 * amplitude * h * ((2.0 * PI * u).cos() - 1.0);
        for y in 0..img.height() {
            out.set(x, y, clamp_u8(img.sample_bilinear(sx, y as f64 + dy)));
        }
    }
    out
}

pub(crate) fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    if sigma <= 0.0 {
        return vec![1.0];
    }
    let radius = (3.0 * sigma).ceil() as i64;
    let mut k: Vec<f64> = (-radius..=radius).map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp()).collect();
    let sum: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= sum);
    k
}

/// Separable Gaussian blur with edge-replicating borders.
pub(crate) fn blur_f64(data: &[f64], width: usize, height: usize, sigma: f64) -> Vec<f64> {
    let k = gaussian_kernel(sigma);
    let r = (k.len() / 2) as i64;
    let mut tmp = vec![0.0; data.len()];
    for y in 0..height {
        for x in 0..width {
            let mut acc = 0.0;
            for (j, kv) in k.iter().enumerate() {
                let xx = (x as i64 + j as i64 - r).clamp(0, width as i64 - 1) as usize;
                acc += kv * data[y * width + xx];
            }
            tmp[y * width + x] = acc;
        }
    }
    let mut out = vec![0.0; data.len()];
    for y in 0..height {
        for x in 0..width {
            let mut acc = 0.0;
            for (j, kv) in k.iter().enumerate() {
                let yy = (y as i64 + j as i64 - r).clamp(0, height as i64 - 1) as usize;
                acc += kv * tmp[yy * width + x];
            }
            out[y * width + x] = acc;
        }
    }
    out
}

fn gaussian_blur(img: &Image, sigma: f64) -> Image {
    let data: Vec<f64> = img.pixels().iter().map(|&p| p as f64).collect();
    let out = blur_f64(&data, img.width(), img.height(), sigma);
    Image::new(img.width(), img.height(), out.into_iter().map(clamp_u8).collect())
}

fn add_noise(img: &Image, sigma: f64, rng: &mut impl Rng) -> Image {
    if sigma <= 0.0 {
        return img.clone();
    }
    let normal = Normal::new(0.0, sigma).expect("finite sigma");
    let pixels = img.pixels().iter().map(|&p| clamp_u8(p as f64 + normal.sample(rng))).collect();
    Image::new(img.width(), img.height(), pixels)
}
