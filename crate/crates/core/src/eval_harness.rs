//! Dataset-level scoring of decoder variants.
//!
//! A variant maps an input to an optional digit sequence; each result is
//! scored as [`Outcome::Correct`], [`Outcome::Incorrect`] or
//! [`Outcome::NoResult`] and counted per condition combo and overall.
//! [`compare_grid`] evaluates logit sources against greedy decoding and a
//! list of `max_iter` values, reusing one logit computation per sample and
//! orientation.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::sync::OnceLock;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::imaging::{rotate_exact, Rotation, Sample};
use crate::smart_inference::{greedy_decode, mpa, mpa_aug_vote_with, mpa_aug_with, SearchOrder, SiConfig};
use crate::soft_decoder::{LogitMatrix, LogitSource};
use crate::symbology::{validate_checksum, DigitSequence, LEN};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Outcome {
    Correct,
    Incorrect(DigitSequence),
    NoResult,
}

impl Outcome {
    pub fn classify(decoded: Option<&DigitSequence>, truth: &DigitSequence) -> Self {
        match decoded {
            Some(s) if s == truth => Outcome::Correct,
            Some(s) => Outcome::Incorrect(*s),
            None => Outcome::NoResult,
        }
    }
}

/// Anything with a ground truth and a condition label.
pub trait Labeled {
    fn combo(&self) -> &str;
    fn truth(&self) -> &DigitSequence;
}

impl Labeled for Sample {
    fn combo(&self) -> &str {
        &self.combo
    }
    fn truth(&self) -> &DigitSequence {
        &self.truth
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Counts {
    pub total: usize,
    pub correct: usize,
    /// Incorrect outcomes.
    pub errors: usize,
    pub no_results: usize,
    /// Decoded sequences that fail the checksum.
    pub invalid_decodes: usize,
    pub accuracy: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub mean_ms: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub median_ms: Option<f64>,
}

impl Counts {
    fn from_results(results: &[(&Outcome, bool, f64)]) -> Self {
        let mut c = Counts { total: results.len(), ..Default::default() };
        for (o, valid, _) in results {
            match o {
                Outcome::Correct => c.correct += 1,
                Outcome::Incorrect(_) => c.errors += 1,
                Outcome::NoResult => c.no_results += 1,
            }
            if !matches!(o, Outcome::NoResult) && !valid {
                c.invalid_decodes += 1;
            }
        }
        c.accuracy = if c.total == 0 { 0.0 } else { c.correct as f64 / c.total as f64 };
        if !results.is_empty() {
            let mut ms: Vec<f64> = results.iter().map(|r| r.2).collect();
            c.mean_ms = Some(ms.iter().sum::<f64>() / ms.len() as f64);
            ms.sort_by(f64::total_cmp);
            let n = ms.len();
            c.median_ms = Some(if n % 2 == 1 { ms[n / 2] } else { (ms[n / 2 - 1] + ms[n / 2]) / 2.0 });
        }
        c
    }

    /// Accuracy in percent at two decimals.
    pub fn percent(&self) -> String {
        format!("{:.2}", 100.0 * self.accuracy)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub variant: String,
    pub overall: Counts,
    pub per_combo: BTreeMap<String, Counts>,
    /// Per-input outcomes in dataset order.
    #[serde(skip)]
    pub outcomes: Vec<Outcome>,
}

impl EvalReport {
    /// Copy with timing fields cleared, for run-to-run comparisons.
    pub fn without_timing(&self) -> Self {
        let strip = |c: &Counts| Counts { mean_ms: None, median_ms: None, ..c.clone() };
        Self {
            variant: self.variant.clone(),
            overall: strip(&self.overall),
            per_combo: self.per_combo.iter().map(|(k, v)| (k.clone(), strip(v))).collect(),
            outcomes: self.outcomes.clone(),
        }
    }

    pub fn to_markdown(&self) -> String {
        let mut out = format!("### {}\n\n| combo | total | correct | errors | no result | accuracy (%) |", self.variant);
        let timed = self.overall.mean_ms.is_some();
        if timed {
            out.push_str(" mean ms | median ms |");
        }
        out.push_str("\n|---|---:|---:|---:|---:|---:|");
        if timed {
            out.push_str("---:|---:|");
        }
        out.push('\n');
        let rows = self.per_combo.iter().map(|(k, v)| (k.as_str(), v)).chain([("overall", &self.overall)]);
        for (name, c) in rows {
            out.push_str(&format!(
                "| {name} | {} | {} | {} | {} | {} |",
                c.total,
                c.correct,
                c.errors,
                c.no_results,
                c.percent()
            ));
            if let (Some(mean), Some(median)) = (c.mean_ms, c.median_ms) {
                out.push_str(&format!(" {mean:.2} | {median:.2} |"));
            }
            out.push('\n');
        }
        out
    }
}

/// Aggregates per-input results `(decoded, milliseconds)`.
pub fn aggregate<T: Labeled>(variant: &str, data: &[T], results: Vec<(Option<DigitSequence>, f64)>) -> EvalReport {
    assert_eq!(data.len(), results.len());
    let outcomes: Vec<Outcome> = data.iter().zip(&results).map(|(d, (s, _))| Outcome::classify(s.as_ref(), d.truth())).collect();
    let scored: Vec<(&Outcome, bool, f64)> =
        outcomes.iter().zip(&results).map(|(o, (s, ms))| (o, s.as_ref().is_some_and(validate_checksum), *ms)).collect();
    let mut by_combo: BTreeMap<String, Vec<(&Outcome, bool, f64)>> = BTreeMap::new();
    for (d, r) in data.iter().zip(&scored) {
        by_combo.entry(d.combo().to_string()).or_default().push(*r);
    }
    EvalReport {
        variant: variant.to_string(),
        overall: Counts::from_results(&scored),
        per_combo: by_combo.into_iter().map(|(k, v)| (k, Counts::from_results(&v))).collect(),
        outcomes,
    }
}

/// Runs `variant` on every input in parallel and scores the results.
/// Timing covers only the variant call.
///
/// # Panics
/// On an empty dataset.
pub fn evaluate<T, F>(variant_id: &str, data: &[T], variant: F) -> EvalReport
where
    T: Labeled + Sync,
    F: Fn(&T) -> Option<DigitSequence> + Sync,
{
    assert!(!data.is_empty(), "evaluate needs a non-empty dataset");
    let results: Vec<_> = data
        .par_iter()
        .map(|d| {
            let t0 = Instant::now();
            let s = variant(d);
            (s, t0.elapsed().as_secs_f64() * 1e3)
        })
        .collect();
    aggregate(variant_id, data, results)
}

// ---------------------------------------------------------------------------
// Decoding modes
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Greedy,
    Mpa,
    MpaAug,
    MpaVote,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Greedy => "greedy",
            Mode::Mpa => "mpa",
            Mode::MpaAug => "mpa-aug",
            Mode::MpaVote => "mpa-vote",
        }
    }

    /// Whether the mode needs rotated views of the image.
    pub fn needs_image(self) -> bool {
        matches!(self, Mode::MpaAug | Mode::MpaVote)
    }
}

/// A decoding mode with its search settings.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Variant {
    pub mode: Mode,
    pub max_iter: usize,
    pub search: SearchOrder,
}

impl Variant {
    pub fn greedy() -> Self {
        Self { mode: Mode::Greedy, max_iter: 0, search: SearchOrder::JointProbability }
    }

    pub fn new(mode: Mode, max_iter: usize) -> Self {
        Self { mode, max_iter, search: SearchOrder::JointProbability }
    }

    pub fn id(&self) -> String {
        let base = match self.mode {
            Mode::Greedy => "greedy".to_string(),
            m => format!("{}-{}", m.name(), self.max_iter),
        };
        match self.search {
            SearchOrder::JointProbability => base,
            SearchOrder::SingleFlips => format!("{base}-literal"),
        }
    }

    fn config(&self) -> SiConfig {
        SiConfig::new(self.max_iter.min(LEN), false).expect("clamped").with_search(self.search)
    }

    /// Decodes from a per-orientation logit provider.
    pub fn decode_with(&self, mut logits_for: impl FnMut(Rotation) -> LogitMatrix) -> Option<DigitSequence> {
        match self.mode {
            Mode::Greedy => Some(greedy_decode(&logits_for(Rotation::R0))),
            Mode::Mpa => mpa(&logits_for(Rotation::R0), &self.config()).sequence().copied(),
            Mode::MpaAug => mpa_aug_with(logits_for, &self.config()).sequence().copied(),
            Mode::MpaVote => mpa_aug_vote_with(logits_for, &self.config()).sequence().copied(),
        }
    }
}

// ---------------------------------------------------------------------------
// Cached logits and comparison grids
// ---------------------------------------------------------------------------

/// Per-sample logit matrices for each orientation, computed on first use,
/// with the time each one took.
pub struct LogitCache<'a, S: LogitSource + Sync> {
    source: &'a S,
    samples: &'a [Sample],
    cells: Vec<[OnceLock<(LogitMatrix, f64)>; 4]>,
}

impl<'a, S: LogitSource + Sync> LogitCache<'a, S> {
    pub fn new(source: &'a S, samples: &'a [Sample]) -> Self {
        let cells = samples.iter().map(|_| Default::default()).collect();
        Self { source, samples, cells }
    }

    fn slot(rot: Rotation) -> usize {
        (rot.degrees() / 90) as usize
    }

    pub fn get(&self, index: usize, rot: Rotation) -> (LogitMatrix, f64) {
        *self.cells[index][Self::slot(rot)].get_or_init(|| {
            let t0 = Instant::now();
            let img = &self.samples[index].image;
            let lm = if rot == Rotation::R0 { self.source.logits(img) } else { self.source.logits(&rotate_exact(img, rot)) };
            (lm, t0.elapsed().as_secs_f64() * 1e3)
        })
    }

    /// Fills the given orientations for every sample in parallel.
    pub fn warm(&self, rotations: &[Rotation]) {
        (0..self.samples.len()).into_par_iter().for_each(|i| {
            for &r in rotations {
                self.get(i, r);
            }
        });
    }

    /// Evaluates `variant`; the time of a sample is the cached logit time of
    /// every orientation the variant asked for plus its own search time.
    pub fn evaluate(&self, variant: &Variant) -> EvalReport {
        assert!(!self.samples.is_empty(), "evaluate needs a non-empty dataset");
        let results: Vec<_> = (0..self.samples.len())
            .into_par_iter()
            .map(|i| {
                let mut logit_ms = 0.0;
                let t0 = Instant::now();
                let s = variant.decode_with(|rot| {
                    let (lm, ms) = self.get(i, rot);
                    logit_ms += ms;
                    lm
                });
                (s, t0.elapsed().as_secs_f64() * 1e3 + logit_ms)
            })
            .collect();
        aggregate(&variant.id(), self.samples, results)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridRow {
    pub source: String,
    pub mode: Mode,
    /// One report per column.
    pub cells: Vec<EvalReport>,
}

/// Rows are (source, mode) pairs; columns are greedy followed by each `max_iter`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub columns: Vec<String>,
    pub rows: Vec<GridRow>,
}

impl Grid {
    pub fn without_timing(&self) -> Self {
        Self {
            columns: self.columns.clone(),
            rows: self
                .rows
                .iter()
                .map(|r| GridRow {
                    source: r.source.clone(),
                    mode: r.mode,
                    cells: r.cells.iter().map(EvalReport::without_timing).collect(),
                })
                .collect(),
        }
    }

    fn table(&self, title: &str, cell: impl Fn(&Counts) -> String) -> String {
        let mut out = format!("### {title}\n\n| source | mode |");
        for c in &self.columns {
            out.push_str(&format!(" {c} |"));
        }
        out.push_str("\n|---|---|");
        out.push_str(&"---:|".repeat(self.columns.len()));
        out.push('\n');
        for r in &self.rows {
            out.push_str(&format!("| {} | {} |", r.source, r.mode.name()));
            for c in &r.cells {
                out.push_str(&format!(" {} |", cell(&c.overall)));
            }
            out.push('\n');
        }
        out
    }

    pub fn to_markdown(&self) -> String {
        let mut out = self.table("Accuracy (%)", Counts::percent);
        out.push('\n');
        out.push_str(&self.table("Errors", |c| c.errors.to_string()));
        if self.rows.iter().flat_map(|r| &r.cells).any(|c| c.overall.mean_ms.is_some()) {
            out.push('\n');
            out.push_str(&self.table("Mean ms per image", |c| format!("{:.2}", c.mean_ms.unwrap_or(0.0))));
        }
        out
    }

    /// Every report in row-major order.
    pub fn reports(&self) -> impl Iterator<Item = &EvalReport> {
        self.rows.iter().flat_map(|r| &r.cells)
    }
}

fn grid_columns(max_iters: &[usize]) -> Vec<String> {
    std::iter::once("nonMPA".to_string()).chain(max_iters.iter().map(|m| format!("max={m}"))).collect()
}

/// Evaluates each `(name, source)` under each mode in `modes` (not greedy)
/// for greedy and every `max_iters` entry.
pub fn compare_grid<S: LogitSource + Sync>(
    sources: &[(&str, &S)],
    modes: &[Mode],
    max_iters: &[usize],
    dataset: &[Sample],
) -> Grid {
    let mut rows = Vec::new();
    for &(name, src) in sources {
        let cache = LogitCache::new(src, dataset);
        let rotations: &[Rotation] = if modes.iter().any(|m| m.needs_image()) { &Rotation::ALL } else { &[Rotation::R0] };
        cache.warm(rotations);
        let greedy = cache.evaluate(&Variant::greedy());
        for &mode in modes {
            let mut cells = vec![greedy.clone()];
            cells.extend(max_iters.iter().map(|&m| cache.evaluate(&Variant::new(mode, m))));
            rows.push(GridRow { source: name.to_string(), mode, cells });
        }
    }
    Grid { columns: grid_columns(max_iters), rows }
}

/// Greedy and plain MPA over pre-computed logits.
pub fn compare_grid_records(name: &str, records: &[LogitRecord], max_iters: &[usize]) -> Grid {
    let run = |v: Variant| {
        let results = records.par_iter().map(|r| {
            let t0 = Instant::now();
            let s = v.decode_with(|_| r.logits);
            (s, t0.elapsed().as_secs_f64() * 1e3)
        });
        aggregate(&v.id(), records, results.collect())
    };
    let mut cells = vec![run(Variant::greedy())];
    cells.extend(max_iters.iter().map(|&m| run(Variant::new(Mode::Mpa, m))));
    Grid { columns: grid_columns(max_iters), rows: vec![GridRow { source: name.to_string(), mode: Mode::Mpa, cells }] }
}

// ---------------------------------------------------------------------------
// NDJSON logits
// ---------------------------------------------------------------------------

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {msg}")]
    Schema { line: usize, msg: String },
    #[error("line {line}: {msg}")]
    Dimension { line: usize, msg: String },
}

/// One line of a logits file.
#[derive(Debug, Clone, PartialEq)]
pub struct LogitRecord {
    pub id: String,
    pub logits: LogitMatrix,
    pub truth: DigitSequence,
    /// Condition label; `"unlabeled"` when the file has none.
    pub combo: String,
}

impl Labeled for LogitRecord {
    fn combo(&self) -> &str {
        &self.combo
    }
    fn truth(&self) -> &DigitSequence {
        &self.truth
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRecord {
    id: String,
    logits: Vec<Vec<f64>>,
    truth: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    combo: Option<String>,
}

pub const UNLABELED: &str = "unlabeled";

/// Parses one NDJSON line; `line` is 1-based and only used in errors.
pub fn parse_logit_record(text: &str, line: usize) -> Result<LogitRecord, IngestError> {
    let raw: RawRecord = serde_json::from_str(text).map_err(|e| IngestError::Schema { line, msg: e.to_string() })?;
    if raw.logits.len() != LEN || raw.logits.iter().any(|r| r.len() != 10) {
        let shape: Vec<usize> = raw.logits.iter().map(Vec::len).collect();
        return Err(IngestError::Dimension { line, msg: format!("logits must be {LEN}x10, got row lengths {shape:?}") });
    }
    let logits = LogitMatrix::from_rows(&raw.logits).map_err(|msg| IngestError::Schema { line, msg })?;
    let truth: DigitSequence =
        raw.truth.parse().map_err(|e| IngestError::Schema { line, msg: format!("truth: {e}") })?;
    Ok(LogitRecord { id: raw.id, logits, truth, combo: raw.combo.unwrap_or_else(|| UNLABELED.to_string()) })
}

/// Reads a logits file, skipping blank lines.
pub fn ingest_logits(path: impl AsRef<Path>) -> Result<Vec<LogitRecord>, IngestError> {
    let file = fs::File::open(path)?;
    let mut out = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(parse_logit_record(&line, n + 1)?);
    }
    Ok(out)
}

pub fn logit_record_line(r: &LogitRecord) -> String {
    let raw = RawRecord {
        id: r.id.clone(),
        logits: r.logits.rows().iter().map(|row| row.to_vec()).collect(),
        truth: r.truth.to_string(),
        combo: (r.combo != UNLABELED).then(|| r.combo.clone()),
    };
    serde_json::to_string(&raw).expect("record serializes")
}

pub fn export_logits(mut out: impl Write, records: &[LogitRecord]) -> std::io::Result<()> {
    for r in records {
        writeln!(out, "{}", logit_record_line(r))?;
    }
    Ok(())
}

/// Upright logits of every sample, computed in parallel.
pub fn logit_records<S: LogitSource + Sync>(source: &S, samples: &[Sample]) -> Vec<LogitRecord> {
    samples
        .par_iter()
        .map(|s| LogitRecord { id: s.id.clone(), logits: source.logits(&s.image), truth: s.truth, combo: s.combo.clone() })
        .collect()
}

// ---------------------------------------------------------------------------
// Golden baselines
// ---------------------------------------------------------------------------

/// Timing-free reports keyed by variant, with the corpus they came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Baseline {
    pub corpus: String,
    pub reports: BTreeMap<String, Counts>,
}

impl Baseline {
    pub fn from_reports<'r>(corpus: &str, reports: impl IntoIterator<Item = &'r EvalReport>) -> Self {
        let reports = reports.into_iter().map(|r| (r.variant.clone(), r.without_timing().overall)).collect();
        Self { corpus: corpus.to_string(), reports }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum BaselineStatus {
    Written,
    Matched,
    /// One message per regressed variant.
    Regressed(Vec<String>),
}

/// Lists regressions of `current` against `golden`: a different corpus, a
/// missing variant, fewer correct or more errors.
pub fn compare_baseline(golden: &Baseline, current: &Baseline) -> Vec<String> {
    if golden.corpus != current.corpus {
        return vec![format!("baseline corpus {:?} differs from {:?}", golden.corpus, current.corpus)];
    }
    let mut out = Vec::new();
    for (variant, g) in &golden.reports {
        match current.reports.get(variant) {
            None => out.push(format!("{variant}: missing from this run")),
            Some(c) => {
                if c.correct < g.correct {
                    out.push(format!("{variant}: correct {} < baseline {}", c.correct, g.correct));
                }
                if c.errors > g.errors {
                    out.push(format!("{variant}: errors {} > baseline {}", c.errors, g.errors));
                }
            }
        }
    }
    out
}

/// Writes `current` to `path` if it does not exist, otherwise compares.
pub fn check_baseline(path: impl AsRef<Path>, current: &Baseline) -> Result<BaselineStatus, IngestError> {
    let path = path.as_ref();
    if !path.exists() {
        let text = serde_json::to_string_pretty(current).expect("baseline serializes");
        fs::write(path, text + "\n")?;
        return Ok(BaselineStatus::Written);
    }
    let text = fs::read_to_string(path)?;
    let golden: Baseline = serde_json::from_str(&text).map_err(|e| IngestError::Schema { line: e.line(), msg: e.to_string() })?;
    let regressions = compare_baseline(&golden, current);
    Ok(if regressions.is_empty() { BaselineStatus::Matched } else { BaselineStatus::Regressed(regressions) })
}
