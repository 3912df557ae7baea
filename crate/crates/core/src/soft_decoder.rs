//! Per-digit scores from an image by scanline template matching.
//!
//! Each scanline is normalized, the start/center/end guards are located by
//! correlating guard modules over candidate (edge, edge) pairs, and every
//! 7-module cell is compared to the applicable code templates. Distances are
//! turned into logits `-beta * distance` and averaged over scanlines; the
//! leading digit and the left-half digits are then marginalized over the ten
//! parity patterns.

use serde::{Deserialize, Serialize};

use crate::imaging::Image;
use crate::symbology::{Parity, CELL, G_CODES, LEN, L_CODES, MODULES, PARITY_PATTERNS, R_CODES};

/// Unnormalized per-digit scores; row `i` (1-based) column `v` scores `D[i] = v`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogitMatrix(pub [[f64; 10]; LEN]);

/// Row-wise softmax of a [`LogitMatrix`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbMatrix(pub [[f64; 10]; LEN]);

impl LogitMatrix {
    pub fn zeros() -> Self {
        Self([[0.0; 10]; LEN])
    }

    /// Builds from nested rows, checking the 13x10 shape and finiteness.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, String> {
        if rows.len() != LEN {
            return Err(format!("expected {LEN} rows, got {}", rows.len()));
        }
        let mut out = [[0.0; 10]; LEN];
        for (i, row) in rows.iter().enumerate() {
            if row.len() != 10 {
                return Err(format!("row {} has {} columns, expected 10", i + 1, row.len()));
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(format!("row {} has a non-finite entry", i + 1));
            }
            out[i].copy_from_slice(row);
        }
        Ok(Self(out))
    }

    /// Logit at 1-based `position` for digit `value`.
    pub fn get(&self, position: usize, value: usize) -> f64 {
        self.0[position - 1][value]
    }

    pub fn rows(&self) -> &[[f64; 10]; LEN] {
        &self.0
    }

    /// The matrix returned when no symbol is found.
    ///
    /// Rows are close to uniform (max probability about 0.11). Row `i` prefers
    /// digit `a_i` and then `a_i + 5 (mod 10)`, with `a = 0000000000001`: the
    /// greedy readout has weighted sum 1 and every top-2 substitution shifts
    /// the sum by 5 (mod 10), so no candidate built from the two best values
    /// of each row can pass the checksum.
    pub fn no_evidence() -> Self {
        let mut m = [[0.0; 10]; LEN];
        for (i, row) in m.iter_mut().enumerate() {
            let top = if i == LEN - 1 { 1 } else { 0 };
            row[top] = 0.1;
            row[(top + 5) % 10] = 0.05;
        }
        Self(m)
    }
}

impl ProbMatrix {
    pub fn get(&self, position: usize, value: usize) -> f64 {
        self.0[position - 1][value]
    }

    pub fn rows(&self) -> &[[f64; 10]; LEN] {
        &self.0
    }

    /// Top-1 minus top-2 probability per row.
    pub fn gaps(&self) -> [f64; LEN] {
        let mut out = [0.0; LEN];
        for (g, row) in out.iter_mut().zip(&self.0) {
            let (a, b) = top_two(row);
            *g = row[a] - row[b];
        }
        out
    }
}

/// Indices of the largest and second-largest entries; ties prefer the smaller index.
pub fn top_two(row: &[f64; 10]) -> (usize, usize) {
    let mut first = 0;
    for v in 1..10 {
        if row[v] > row[first] {
            first = v;
        }
    }
    let mut second = if first == 0 { 1 } else { 0 };
    for v in 0..10 {
        if v != first && row[v] > row[second] {
            second = v;
        }
    }
    (first, second)
}

/// Row-wise softmax with max subtraction.
pub fn softmax_rows(lm: &LogitMatrix) -> ProbMatrix {
    let mut out = [[0.0; 10]; LEN];
    for (dst, row) in out.iter_mut().zip(&lm.0) {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for (d, &v) in dst.iter_mut().zip(row) {
            *d = (v - max).exp();
            sum += *d;
        }
        dst.iter_mut().for_each(|d| *d /= sum);
    }
    ProbMatrix(out)
}

/// Anything that maps an image to a logit matrix.
pub trait LogitSource {
    fn logits(&self, img: &Image) -> LogitMatrix;
}

impl<T: LogitSource + ?Sized> LogitSource for &T {
    fn logits(&self, img: &Image) -> LogitMatrix {
        (**self).logits(img)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SoftDecoderConfig {
    /// Number of scanlines.
    pub scanlines: usize,
    /// Central fraction of the symbol's bar height the scanlines are spread over.
    pub band: f64,
    /// Logit sharpness: `logit = -beta * distance`, distance in [0, 1].
    pub beta: f64,
    /// Parallel lines averaged into each scanline profile.
    pub row_window: usize,
    /// Minimum 5th-95th percentile darkness spread of a usable scanline.
    pub min_contrast: f64,
    /// Module width sweep, in pixels.
    pub min_module: f64,
    pub max_module: f64,
    /// Minimum guard correlation for a scanline to count.
    pub min_guard_score: f64,
    /// Samples per module when matching a cell against a code.
    pub samples_per_module: usize,
    /// Gradient peak, on the normalized and smoothed profile, that marks an edge.
    pub edge_threshold: f64,
    /// Bars tilted up to this many degrees are followed; beyond it the
    /// decoder scans horizontally.
    pub max_skew_deg: f64,
    /// Template blur widths tried, in modules.
    pub blur_levels: [f64; 4],
    /// Range and step, in modules, of the cell-boundary alignment search.
    pub max_shift: f64,
    pub shift_step: f64,
    /// Largest change of shift between neighbouring cell boundaries, in modules.
    pub max_drift: f64,
    /// Score cost per module of shift, pulling the alignment towards the frame.
    pub shift_penalty: f64,
    /// Mean per-cell correlation gain a blurrier template level must bring
    /// before it replaces a sharper one.
    pub blur_margin: f64,
    /// Largest number of featureless cells a located scanline may have.
    pub max_flat_cells: usize,
    /// Largest gap, in logit units, between the best left-half parity
    /// assignment and the best one some leading digit produces. Symbols read
    /// backwards show an all-even left half and land far above it.
    pub max_parity_deficit: f64,
}

impl Default for SoftDecoderConfig {
    fn default() -> Self {
        Self {
            scanlines: 9,
            band: 0.9,
            beta: 40.0,
            row_window: 3,
            min_contrast: 24.0,
            min_module: 1.2,
            max_module: 4.5,
            min_guard_score: 0.6,
            samples_per_module: 3,
            edge_threshold: 0.05,
            max_skew_deg: 70.0,
            blur_levels: [0.0, 0.3, 0.7, 1.1],
            max_shift: 2.0,
            shift_step: 0.25,
            max_drift: 0.5,
            shift_penalty: 0.02,
            blur_margin: 0.005,
            max_flat_cells: 4,
            max_parity_deficit: 4.0,
        }
    }
}

/// The template-matching decoder.
#[derive(Debug, Clone, Default)]
pub struct SoftDecoder {
    pub config: SoftDecoderConfig,
}

/// Scores of one accepted scanline, as `-beta * distance`.
#[derive(Debug, Clone)]
struct LineScores {
    l: [[f64; 10]; 6],
    g: [[f64; 10]; 6],
    r: [[f64; 10]; 6],
}

/// Result details for diagnostics and tests.
#[derive(Debug, Clone)]
pub struct SoftDecode {
    pub logits: LogitMatrix,
    /// Scanlines on which a symbol was located.
    pub accepted_scanlines: usize,
    /// Estimated bar tilt in degrees (0 when scanning horizontally).
    pub skew_deg: f64,
    /// Blur width, in modules, of the templates used.
    pub blur_modules: f64,
    /// See [`SoftDecoderConfig::max_parity_deficit`]; 0 when nothing was located.
    pub parity_deficit: f64,
}

impl SoftDecoder {
    pub fn new(config: SoftDecoderConfig) -> Self {
        Self { config }
    }

    pub fn decode(&self, img: &Image) -> SoftDecode {
        let cfg = &self.config;
        let geo = estimate_geometry(img, cfg);
        let banks = Banks::new(cfg);
        let n_lines = cfg.scanlines.max(1);
        let mut fits: Vec<LineFit> = Vec::new();
        for k in 0..n_lines {
            let frac = (1.0 - cfg.band) / 2.0 + cfg.band * (k as f64 + 0.5) / n_lines as f64;
            let offset = geo.lo + (geo.hi - geo.lo) * frac;
            let profile = geo.profile(img, offset, cfg.row_window);
            if let Some(fit) = self.fit_line(&profile, &banks) {
                fits.push(fit);
            }
        }
        let skew_deg = geo.dir.1.atan2(geo.dir.0).to_degrees();
        if fits.is_empty() {
            return SoftDecode {
                logits: LogitMatrix::no_evidence(),
                accepted_scanlines: 0,
                skew_deg,
                blur_modules: 0.0,
                parity_deficit: 0.0,
            };
        }
        // one blur level for the whole image: the best median cell fit, so a
        // few occluded cells cannot pull the choice towards blurrier templates
        let median_fit = |lv: usize| {
            let mut v: Vec<f64> = fits.iter().flat_map(|f| f.fits[lv].iter().copied()).collect();
            v.sort_by(|a, b| a.total_cmp(b));
            v[v.len() / 2]
        };
        let mut lv = 0;
        for cand in 1..banks.levels.len() {
            if median_fit(cand) > median_fit(lv) + cfg.blur_margin {
                lv = cand;
            }
        }
        let lines: Vec<LineScores> = fits.iter().map(|f| self.score_line(f, lv, &banks)).collect();

        let n = lines.len() as f64;
        let mut avg = LineScores { l: [[0.0; 10]; 6], g: [[0.0; 10]; 6], r: [[0.0; 10]; 6] };
        // summed in scanline order
        for line in &lines {
            for c in 0..6 {
                for v in 0..10 {
                    avg.l[c][v] += line.l[c][v] / n;
                    avg.g[c][v] += line.g[c][v] / n;
                    avg.r[c][v] += line.r[c][v] / n;
                }
            }
        }
        let parity_deficit = parity_deficit(&avg);
        let logits = if parity_deficit > cfg.max_parity_deficit { LogitMatrix::no_evidence() } else { combine(&avg) };
        SoftDecode { logits, accepted_scanlines: lines.len(), skew_deg, blur_modules: cfg.blur_levels[lv], parity_deficit }
    }

    /// Locates the symbol on one scanline and aligns its cells at every blur level.
    fn fit_line(&self, profile: &[f64], banks: &Banks) -> Option<LineFit> {
        let cfg = &self.config;
        if profile.len() < MODULES {
            return None;
        }
        let (lo, hi) = percentile_span(profile);
        if hi - lo < cfg.min_contrast {
            return None;
        }
        let norm: Vec<f64> = profile.iter().map(|v| (v - lo) / (hi - lo)).collect();
        let frame = locate(&norm, cfg, banks)?;

        let shifts = &banks.shifts;
        let reach = (cfg.max_drift / cfg.shift_step).round().max(0.0) as usize;
        let levels = banks.levels.len();

        // tables[half][cell][level][from][to]: best template correlation
        let mut tables: Vec<Vec<Vec<Vec<Vec<f64>>>>> = Vec::with_capacity(2);
        for half in 0..2 {
            let mut cells = Vec::with_capacity(6);
            for c in 0..6 {
                let first = crate::symbology::cell_offset(half * 6 + c) as f64;
                let mut per_level = vec![vec![vec![f64::NEG_INFINITY; shifts.len()]; shifts.len()]; levels];
                for a in 0..shifts.len() {
                    for b in a.saturating_sub(reach)..(a + reach + 1).min(shifts.len()) {
                        let z = sample_cell(&norm, &frame, first, shifts[a], shifts[b], banks.spm);
                        for (lv, bank) in banks.levels.iter().enumerate() {
                            per_level[lv][a][b] = match &z {
                                None => 0.0,
                                Some(z) => bank.codes(half).map(|t| dot(z, t)).fold(f64::NEG_INFINITY, f64::max),
                            };
                        }
                    }
                }
                cells.push(per_level);
            }
            tables.push(cells);
        }
        let pl0 = [
            viterbi(&tables[0], 0, shifts, reach, cfg.shift_penalty).1,
            viterbi(&tables[1], 0, shifts, reach, cfg.shift_penalty).1,
        ];
        let flat = (0..12)
            .filter(|&k| {
                let first = crate::symbology::cell_offset(k) as f64;
                let path = &pl0[k / 6];
                let c = k % 6;
                sample_cell(&norm, &frame, first, shifts[path[c]], shifts[path[c + 1]], banks.spm).is_none()
            })
            .count();
        if flat > cfg.max_flat_cells {
            return None;
        }
        let mut fits = Vec::with_capacity(levels);
        let mut paths = Vec::with_capacity(levels);
        for lv in 0..levels {
            let (_, pl) = viterbi(&tables[0], lv, shifts, reach, cfg.shift_penalty);
            let (_, pr) = viterbi(&tables[1], lv, shifts, reach, cfg.shift_penalty);
            let mut per_cell = Vec::with_capacity(12);
            for (half, path) in [&pl, &pr].into_iter().enumerate() {
                for c in 0..6 {
                    per_cell.push(tables[half][c][lv][path[c]][path[c + 1]]);
                }
            }
            fits.push(per_cell);
            paths.push([pl, pr]);
        }
        Some(LineFit { norm, frame, fits, paths })
    }

    fn score_line(&self, fit: &LineFit, lv: usize, banks: &Banks) -> LineScores {
        let beta = self.config.beta;
        let bank = &banks.levels[lv];
        let shifts = &banks.shifts;
        let mut scores = LineScores { l: [[0.0; 10]; 6], g: [[0.0; 10]; 6], r: [[0.0; 10]; 6] };
        for half in 0..2 {
            let path = &fit.paths[lv][half];
            for c in 0..6 {
                let first = crate::symbology::cell_offset(half * 6 + c) as f64;
                let z = sample_cell(&fit.norm, &fit.frame, first, shifts[path[c]], shifts[path[c + 1]], banks.spm);
                let dist = |t: &[f64]| -> f64 {
                    match &z {
                        None => 0.5,
                        Some(z) => (1.0 - dot(z, t)) / 2.0,
                    }
                };
                for v in 0..10 {
                    if half == 0 {
                        scores.l[c][v] = -beta * dist(&bank.l[v]);
                        scores.g[c][v] = -beta * dist(&bank.g[v]);
                    } else {
                        scores.r[c][v] = -beta * dist(&bank.r[v]);
                    }
                }
            }
        }
        scores
    }
}

/// One located scanline with its alignment at each blur level.
struct LineFit {
    norm: Vec<f64>,
    frame: Frame,
    /// per level, the best template correlation of each aligned cell
    fits: Vec<Vec<f64>>,
    paths: Vec<[Vec<usize>; 2]>,
}

impl LogitSource for SoftDecoder {
    fn logits(&self, img: &Image) -> LogitMatrix {
        self.decode(img).logits
    }
}

/// Decodes with the default configuration.
pub fn decode_soft(img: &Image) -> LogitMatrix {
    SoftDecoder::default().decode(img).logits
}

fn log_sum_exp(values: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = values.collect();
    let max = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + v.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// Assembles the 13x10 matrix; leading and left-half rows are exact
/// marginals over the ten parity patterns.
/// Best left-half score over all 64 parity assignments minus the best over
/// the ten assignments leading digits produce.
fn parity_deficit(s: &LineScores) -> f64 {
    let zl: Vec<f64> = s.l.iter().map(|r| log_sum_exp(r.iter().cloned())).collect();
    let zg: Vec<f64> = s.g.iter().map(|r| log_sum_exp(r.iter().cloned())).collect();
    let free: f64 = (0..6).map(|c| zl[c].max(zg[c])).sum();
    let valid = PARITY_PATTERNS
        .iter()
        .map(|pat| {
            (0..6)
                .map(|c| match pat[c] {
                    Parity::Odd => zl[c],
                    Parity::Even => zg[c],
                })
                .sum::<f64>()
        })
        .fold(f64::NEG_INFINITY, f64::max);
    free - valid
}

fn combine(s: &LineScores) -> LogitMatrix {
    let mut out = [[0.0; 10]; LEN];
    let code_scores = |c: usize, p: Parity| -> &[f64; 10] {
        match p {
            Parity::Odd => &s.l[c],
            Parity::Even => &s.g[c],
        }
    };
    // z[f][c]: log partition of cell c under the parity leading digit f implies
    let mut z = [[0.0; 6]; 10];
    for f in 0..10 {
        for c in 0..6 {
            z[f][c] = log_sum_exp(code_scores(c, PARITY_PATTERNS[f][c]).iter().cloned());
        }
    }
    for f in 0..10 {
        out[0][f] = z[f].iter().sum();
    }
    for c in 0..6 {
        for v in 0..10 {
            out[c + 1][v] = log_sum_exp((0..10).map(|f| {
                let rest: f64 = (0..6).filter(|&k| k != c).map(|k| z[f][k]).sum();
                code_scores(c, PARITY_PATTERNS[f][c])[v] + rest
            }));
        }
    }
    for c in 0..6 {
        out[c + 7] = s.r[c];
    }
    // shift rows so the best entry is 0; softmax is unchanged
    for row in &mut out {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        row.iter_mut().for_each(|v| *v -= max);
    }
    LogitMatrix(out)
}

/// Scan direction and the band of the image the bars occupy.
#[derive(Debug, Clone, Copy)]
struct Geometry {
    center: (f64, f64),
    /// unit vector across the bars
    dir: (f64, f64),
    /// unit vector along the bars
    normal: (f64, f64),
    /// extent of the bars along `normal`, relative to `center`
    lo: f64,
    hi: f64,
    half_len: f64,
}

impl Geometry {
    /// Darkness along the line `center + offset * normal + t * dir`.
    fn profile(&self, img: &Image, offset: f64, window: usize) -> Vec<f64> {
        let half = (window.max(1) / 2) as i64;
        let n = (2.0 * self.half_len).ceil() as usize + 1;
        let (dx, dy) = self.dir;
        let (nx, ny) = self.normal;
        let (w, h) = (img.width() as f64 - 1.0, img.height() as f64 - 1.0);
        // only the part of the line inside the image; the fill outside it
        // would otherwise skew the contrast normalization
        (0..n)
            .filter_map(|i| {
                let t = i as f64 - self.half_len;
                let mut acc = 0.0;
                for j in -half..=half {
                    let o = offset + j as f64;
                    let x = self.center.0 + t * dx + o * nx;
                    let y = self.center.1 + t * dy + o * ny;
                    if !(0.0..=w).contains(&x) || !(0.0..=h).contains(&y) {
                        return None;
                    }
                    acc += 255.0 - img.sample_bilinear(x, y);
                }
                Some(acc / (2 * half + 1) as f64)
            })
            .collect()
    }
}

fn estimate_geometry(img: &Image, cfg: &SoftDecoderConfig) -> Geometry {
    let (w, h) = (img.width(), img.height());
    let half_len = 0.5 * ((w * w + h * h) as f64).sqrt();
    let mid = ((w as f64 - 1.0) / 2.0, (h as f64 - 1.0) / 2.0);
    let upright = Geometry {
        center: mid,
        dir: (1.0, 0.0),
        normal: (0.0, 1.0),
        lo: -(h as f64) / 2.0,
        hi: h as f64 / 2.0,
        half_len,
    };
    if w < 3 || h < 3 {
        return upright;
    }
    let px = img.pixels();
    let at = |x: usize, y: usize| px[y * w + x] as f64;
    let mut grads = Vec::with_capacity((w - 2) * (h - 2));
    let (mut jxx, mut jyy, mut jxy, mut max_mag) = (0.0, 0.0, 0.0, 0.0f64);
    for y in 1..h - 1 {
        for x in 1..w - 1 {
            let gx = at(x + 1, y - 1) + 2.0 * at(x + 1, y) + at(x + 1, y + 1)
                - at(x - 1, y - 1)
                - 2.0 * at(x - 1, y)
                - at(x - 1, y + 1);
            let gy = at(x - 1, y + 1) + 2.0 * at(x, y + 1) + at(x + 1, y + 1)
                - at(x - 1, y - 1)
                - 2.0 * at(x, y - 1)
                - at(x + 1, y - 1);
            jxx += gx * gx;
            jyy += gy * gy;
            jxy += gx * gy;
            let mag = (gx * gx + gy * gy).sqrt();
            max_mag = max_mag.max(mag);
            grads.push((x, y, mag));
        }
    }
    let energy = jxx + jyy;
    if energy <= 0.0 {
        return upright;
    }
    let coherence = ((jxx - jyy).powi(2) + 4.0 * jxy * jxy).sqrt() / energy;
    let mut phi = 0.5 * (2.0 * jxy).atan2(jxx - jyy);
    if coherence < 0.2 || phi.abs() > cfg.max_skew_deg.to_radians() {
        phi = 0.0;
    }
    let (s, c) = phi.sin_cos();
    let (dir, normal) = ((c, s), (-s, c));

    let threshold = 0.3 * max_mag;
    let mut along = Vec::new();
    let mut across = Vec::new();
    for &(x, y, mag) in &grads {
        if mag >= threshold {
            let (rx, ry) = (x as f64 - mid.0, y as f64 - mid.1);
            along.push(rx * dir.0 + ry * dir.1);
            across.push(rx * normal.0 + ry * normal.1);
        }
    }
    if along.len() < 16 {
        return upright;
    }
    along.sort_by(|a, b| a.total_cmp(b));
    across.sort_by(|a, b| a.total_cmp(b));
    let q = |v: &[f64], f: f64| v[((v.len() - 1) as f64 * f).round() as usize];
    let t0 = q(&along, 0.5);
    Geometry {
        center: (mid.0 + t0 * dir.0, mid.1 + t0 * dir.1),
        dir,
        normal,
        lo: q(&across, 0.02),
        hi: q(&across, 0.98),
        half_len,
    }
}

fn percentile_span(profile: &[f64]) -> (f64, f64) {
    let mut sorted = profile.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let at = |q: f64| sorted[((sorted.len() - 1) as f64 * q).round() as usize];
    (at(0.05), at(0.95))
}

fn interp(data: &[f64], x: f64) -> f64 {
    if x <= 0.0 {
        return data[0];
    }
    let last = data.len() - 1;
    if x >= last as f64 {
        return data[last];
    }
    let i = x.floor() as usize;
    let f = x - i as f64;
    data[i] * (1.0 - f) + data[i + 1] * f
}

/// Mean-zero, unit-variance copy, or `None` for a flat input.
fn zscore(v: &[f64]) -> Option<Vec<f64>> {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    if var < 1e-6 {
        return None;
    }
    let sd = var.sqrt();
    Some(v.iter().map(|x| (x - mean) / sd).collect())
}

/// Pearson correlation of two z-scored vectors.
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() / a.len() as f64
}

/// Samples one 7-module cell whose start and end boundaries are moved by
/// `shift_a` and `shift_b` modules.
fn sample_cell(norm: &[f64], frame: &Frame, first: f64, shift_a: f64, shift_b: f64, spm: usize) -> Option<Vec<f64>> {
    let n = CELL * spm;
    let cell: Vec<f64> = (0..n)
        .map(|t| {
            let u = (t as f64 + 0.5) / spm as f64;
            let m = first + u + shift_a + (shift_b - shift_a) * u / CELL as f64;
            interp(norm, frame.position(m))
        })
        .collect();
    zscore(&cell)
}

/// Best alignment path through the six cells of one half for blur level `lv`.
fn viterbi(cells: &[Vec<Vec<Vec<f64>>>], lv: usize, shifts: &[f64], reach: usize, pull: f64) -> (f64, Vec<usize>) {
    let k = shifts.len();
    let mut score: Vec<f64> = shifts.iter().map(|d| -pull * d.abs()).collect();
    let mut back = vec![vec![0usize; k]; cells.len()];
    for (c, table) in cells.iter().enumerate() {
        let mut next = vec![f64::NEG_INFINITY; k];
        for b in 0..k {
            for a in b.saturating_sub(reach)..(b + reach + 1).min(k) {
                let v = score[a] + table[lv][a][b] - pull * shifts[b].abs();
                if v > next[b] {
                    next[b] = v;
                    back[c][b] = a;
                }
            }
        }
        score = next;
    }
    let mut end = 0;
    for j in 1..k {
        if score[j] > score[end] {
            end = j;
        }
    }
    let mut path = vec![end; cells.len() + 1];
    for c in (0..cells.len()).rev() {
        path[c] = back[c][path[c + 1]];
    }
    (score[end], path)
}

/// Standard normal CDF.
fn phi(x: f64) -> f64 {
    0.5 * (1.0 + libm::erf(x / std::f64::consts::SQRT_2))
}

/// Value at module coordinate `t` of a module signal blurred by a Gaussian
/// of `sigma` modules.
fn blurred(signal: impl Fn(i64) -> f64, t: f64, sigma: f64) -> f64 {
    if sigma <= 1e-9 {
        return signal(t.floor() as i64);
    }
    let lo = (t - 6.0 * sigma).floor() as i64 - 1;
    let hi = (t + 6.0 * sigma).ceil() as i64 + 1;
    (lo..=hi)
        .map(|k| signal(k) * (phi((k as f64 + 1.0 - t) / sigma) - phi((k as f64 - t) / sigma)))
        .sum()
}

/// Known module values around the three guards; digit modules that are not
/// fixed by parity read as 0.5.
fn guard_signal(m: i64) -> f64 {
    match m {
        ..=-1 | 95.. => 0.0,
        0 | 2 | 44 | 46 | 48 | 50 | 92 | 94 => 1.0,
        1 | 3 | 45 | 47 | 49 | 91 | 93 => 0.0,
        _ => 0.5,
    }
}

const GUARD_MODULES: [i64; 21] = [-3, -2, -1, 0, 1, 2, 3, 44, 45, 46, 47, 48, 49, 50, 91, 92, 93, 94, 95, 96, 97];
const CENTER_MODULES: [i64; 7] = [44, 45, 46, 47, 48, 49, 50];

/// Code and guard templates at one blur width.
struct Bank {
    l: Vec<Vec<f64>>,
    g: Vec<Vec<f64>>,
    r: Vec<Vec<f64>>,
    guard: Vec<f64>,
    center: Vec<f64>,
}

impl Bank {
    fn new(sigma: f64, spm: usize) -> Self {
        // left-half codes sit between a bar and a space, right-half codes
        // between a space and a bar
        let code = |bits: &[u8; CELL], before: f64, after: f64| -> Vec<f64> {
            let signal = |k: i64| match k {
                -1 => before,
                0..=6 => bits[k as usize] as f64,
                7 => after,
                _ => 0.5,
            };
            let raw: Vec<f64> =
                (0..CELL * spm).map(|t| blurred(signal, (t as f64 + 0.5) / spm as f64, sigma)).collect();
            zscore(&raw).expect("codes are not flat")
        };
        let guard_at = |ms: &[i64]| -> Vec<f64> { ms.iter().map(|&m| blurred(guard_signal, m as f64 + 0.5, sigma)).collect() };
        Self {
            l: L_CODES.iter().map(|c| code(c, 1.0, 0.0)).collect(),
            g: G_CODES.iter().map(|c| code(c, 1.0, 0.0)).collect(),
            r: R_CODES.iter().map(|c| code(c, 0.0, 1.0)).collect(),
            guard: guard_at(&GUARD_MODULES),
            center: guard_at(&CENTER_MODULES),
        }
    }

    fn codes(&self, half: usize) -> impl Iterator<Item = &Vec<f64>> {
        let (a, b): (&[Vec<f64>], &[Vec<f64>]) = if half == 0 { (&self.l, &self.g) } else { (&self.r, &[]) };
        a.iter().chain(b.iter())
    }
}

struct Banks {
    levels: Vec<Bank>,
    shifts: Vec<f64>,
    spm: usize,
}

impl Banks {
    fn new(cfg: &SoftDecoderConfig) -> Self {
        let spm = cfg.samples_per_module.max(1);
        let step = cfg.shift_step.max(1e-3);
        let k = (cfg.max_shift.max(0.0) / step).round() as i64;
        Self {
            levels: cfg.blur_levels.iter().map(|&s| Bank::new(s, spm)).collect(),
            shifts: (-k..=k).map(|i| i as f64 * step).collect(),
            spm,
        }
    }
}

/// Piecewise-linear module-to-pixel map anchored at the start guard, the
/// middle of the center guard and the end guard.
#[derive(Debug, Clone, Copy)]
struct Frame {
    start: f64,
    center: f64,
    end: f64,
    /// blur level of the guard template that located it
    level: usize,
}

impl Frame {
    const MID: f64 = 47.5;

    fn position(&self, module: f64) -> f64 {
        if module <= Self::MID {
            self.start + (self.center - self.start) * module / Self::MID
        } else {
            self.center + (self.end - self.center) * (module - Self::MID) / (MODULES as f64 - Self::MID)
        }
    }
}

fn correlation(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if saa < 1e-12 || sbb < 1e-12 {
        0.0
    } else {
        sab / (saa * sbb).sqrt()
    }
}

fn sample_modules(norm: &[f64], frame: &Frame, modules: &[i64]) -> Vec<f64> {
    modules.iter().map(|&m| interp(norm, frame.position(m as f64 + 0.5))).collect()
}

/// Sub-pixel positions of rising (light to dark) and falling edges.
fn edges(norm: &[f64], threshold: f64) -> (Vec<f64>, Vec<f64>) {
    let n = norm.len();
    let kernel = crate::imaging::gaussian_kernel(1.0);
    let r = (kernel.len() / 2) as i64;
    let smooth: Vec<f64> = (0..n as i64)
        .map(|x| kernel.iter().enumerate().map(|(j, k)| k * norm[(x + j as i64 - r).clamp(0, n as i64 - 1) as usize]).sum())
        .collect();
    let grad: Vec<f64> = (0..n).map(|x| (smooth[(x + 1).min(n - 1)] - smooth[x.saturating_sub(1)]) / 2.0).collect();
    let (mut rising, mut falling) = (Vec::new(), Vec::new());
    for x in 1..n.saturating_sub(1) {
        let (l, c, r) = (grad[x - 1], grad[x], grad[x + 1]);
        let refine = || {
            let denom = l - 2.0 * c + r;
            if denom.abs() < 1e-12 {
                x as f64
            } else {
                x as f64 + 0.5 * (l - r) / denom
            }
        };
        if c > threshold && c >= l && c > r {
            rising.push(refine());
        } else if c < -threshold && c <= l && c < r {
            falling.push(refine());
        }
    }
    (rising, falling)
}

fn locate(norm: &[f64], cfg: &SoftDecoderConfig, banks: &Banks) -> Option<Frame> {
    let (rising, falling) = edges(norm, cfg.edge_threshold);
    let mut candidates = Vec::new();
    for &s in &rising {
        for &e in falling.iter().rev() {
            if e <= s {
                break;
            }
            let m = (e - s) / MODULES as f64;
            if m < cfg.min_module || m > cfg.max_module {
                continue;
            }
            let frame = Frame { start: s, center: s + m * Frame::MID, end: e, level: 0 };
            candidates.push((frame, sample_modules(norm, &frame, &GUARD_MODULES)));
        }
    }
    // sharpest template level that finds the guards wins; blurrier levels
    // are looser and only consulted when the sharper ones fail
    let mut found = None;
    for (lv, bank) in banks.levels.iter().enumerate() {
        let mut best: Option<(f64, Frame)> = None;
        for (frame, sampled) in &candidates {
            let score = correlation(sampled, &bank.guard);
            if best.as_ref().is_none_or(|(b, _)| score > *b) {
                best = Some((score, *frame));
            }
        }
        if let Some((score, frame)) = best {
            if score >= cfg.min_guard_score {
                found = Some((lv, frame));
                break;
            }
        }
    }
    let (lv, mut frame) = found?;
    frame.level = lv;
    // slide the center anchor to follow warps
    let expected = &banks.levels[lv].center;
    let m = (frame.end - frame.start) / MODULES as f64;
    let base = frame.center;
    let center_score = |f: &Frame| correlation(&sample_modules(norm, f, &CENTER_MODULES), expected);
    let mut best_center = (center_score(&frame), base);
    for k in -12..=12 {
        let c = base + k as f64 * 0.125 * m;
        let sc = center_score(&Frame { center: c, ..frame });
        if sc > best_center.0 + 1e-9 {
            best_center = (sc, c);
        }
    }
    frame.center = best_center.1;
    Some(frame)
}
