//! Synthetic corpora: manifests, per-sample seeding and on-disk layout.
//!
//! A dataset directory holds `samples.ndjson` (one [`SampleRecord`] per
//! line) and an `images/` folder of binary PGM files.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{degrade_all, read_pgm, render, write_pgm, ConditionKind, Degradation, Image, ImagingError, RenderOpts};
use crate::mix_seed;
use crate::symbology::{encode, DigitSequence};

/// Synthesized condition combos and their training-set sizes.
pub const DEFAULT_COUNTS: [(&str, usize); 21] = [
    ("norm", 30000),
    ("dark", 30000),
    ("occluded", 20000),
    ("occluded+dark", 20000),
    ("rpt", 20000),
    ("rpt+dark", 20000),
    ("ccw", 20000),
    ("ccw+dark", 20000),
    ("occluded+rpt", 5000),
    ("blur", 5000),
    ("rpt+blur", 5000),
    ("ccw+blur", 5000),
    ("upside_down", 6000),
    ("upside_down+dark", 6000),
    ("upside_down+blur", 6000),
    ("upside_down+ccw", 6000),
    ("upside_down+occluded", 6000),
    ("heavy_noise+rpt", 2000),
    ("overexposed+occluded+rpt+ccw", 6000),
    ("dark+occluded+rpt+ccw", 6000),
    ("occluded+rpt+ccw", 6000),
];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub combo: String,
    pub count: usize,
}

impl ManifestEntry {
    pub fn new(combo: impl Into<String>, count: usize) -> Self {
        Self { combo: combo.into(), count }
    }

    pub fn conditions(&self) -> Result<Vec<Degradation>, ImagingError> {
        Ok(ConditionKind::parse_combo(&self.combo)?.into_iter().map(ConditionKind::default_spec).collect())
    }

    /// Parses a TOML manifest of `[[entry]]` tables with `combo` and `count`.
    pub fn parse_manifest(text: &str) -> Result<Vec<ManifestEntry>, ImagingError> {
        #[derive(Deserialize)]
        struct Manifest {
            #[serde(default)]
            entry: Vec<ManifestEntry>,
        }
        let m: Manifest = toml::from_str(text).map_err(|e| ImagingError::Manifest(e.to_string()))?;
        for e in &m.entry {
            ConditionKind::parse_combo(&e.combo)?;
        }
        Ok(m.entry)
    }
}

/// All 21 combos with counts multiplied by `scale` (rounded to nearest).
pub fn default_manifest(scale: f64) -> Vec<ManifestEntry> {
    DEFAULT_COUNTS.iter().map(|&(combo, n)| ManifestEntry::new(combo, (n as f64 * scale).round() as usize)).collect()
}

/// Seed of sample `index` within manifest entry `combo_index`.
pub fn sample_seed(base_seed: u64, combo_index: usize, index: usize) -> u64 {
    mix_seed(mix_seed(base_seed, combo_index as u64), index as u64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub id: String,
    pub combo: String,
    pub truth: DigitSequence,
    pub conditions: Vec<Degradation>,
    pub seed: u64,
    pub image: Image,
}

impl Sample {
    /// Renders `truth` and applies `conditions`; bit-exact for equal inputs.
    pub fn synthesize(
        id: String,
        combo: String,
        truth: DigitSequence,
        conditions: Vec<Degradation>,
        seed: u64,
        opts: &RenderOpts,
    ) -> Result<Self, ImagingError> {
        for c in &conditions {
            c.validate()?;
        }
        let clean = render(&encode(&truth), opts)?;
        let image = degrade_all(&clean, &conditions, seed);
        Ok(Self { id, combo, truth, conditions, seed, image })
    }

    pub fn record(&self, path: &str) -> SampleRecord {
        SampleRecord {
            id: self.id.clone(),
            combo: self.combo.clone(),
            truth: self.truth,
            conditions: self.conditions.clone(),
            seed: self.seed,
            path: path.to_string(),
        }
    }
}

/// One line of `samples.ndjson`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub id: String,
    pub combo: String,
    pub truth: DigitSequence,
    pub conditions: Vec<Degradation>,
    pub seed: u64,
    pub path: String,
}

fn random_truth(seed: u64) -> DigitSequence {
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, 0));
    let mut prefix = [0u8; 12];
    for d in &mut prefix {
        *d = rng.random_range(0..10);
    }
    DigitSequence::with_check_digit(&prefix).expect("digits in range")
}

/// Generates every manifest entry's samples. Output order and bytes do not
/// depend on the rayon thread count.
pub fn generate_dataset(
    manifest: &[ManifestEntry],
    base_seed: u64,
    opts: &RenderOpts,
) -> Result<Vec<Sample>, ImagingError> {
    opts.validate()?;
    let mut jobs = Vec::new();
    for (ci, entry) in manifest.iter().enumerate() {
        let conditions = entry.conditions()?;
        for i in 0..entry.count {
            jobs.push((ci, i, entry.combo.clone(), conditions.clone()));
        }
    }
    jobs.into_par_iter()
        .map(|(ci, i, combo, conditions)| {
            let seed = sample_seed(base_seed, ci, i);
            Sample::synthesize(format!("{ci:02}-{i:05}"), combo, random_truth(seed), conditions, seed, opts)
        })
        .collect()
}

pub fn write_dataset(dir: impl AsRef<Path>, samples: &[Sample]) -> Result<(), ImagingError> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir.join("images"))?;
    let mut meta = BufWriter::new(fs::File::create(dir.join("samples.ndjson"))?);
    for s in samples {
        let rel = format!("images/{}.pgm", s.id);
        write_pgm(dir.join(&rel), &s.image)?;
        let line = serde_json::to_string(&s.record(&rel)).expect("record serializes");
        writeln!(meta, "{line}")?;
    }
    meta.flush()?;
    Ok(())
}

pub fn read_dataset(dir: impl AsRef<Path>) -> Result<Vec<Sample>, ImagingError> {
    let dir = dir.as_ref();
    let file = fs::File::open(dir.join("samples.ndjson"))?;
    let mut samples = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: SampleRecord =
            serde_json::from_str(&line).map_err(|e| ImagingError::Record { line: n + 1, msg: e.to_string() })?;
        let image = read_pgm(dir.join(&rec.path)).map_err(|e| ImagingError::Record { line: n + 1, msg: e.to_string() })?;
        samples.push(Sample {
            id: rec.id,
            combo: rec.combo,
            truth: rec.truth,
            conditions: rec.conditions,
            seed: rec.seed,
            image,
        });
    }
    Ok(samples)
}
