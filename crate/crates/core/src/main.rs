use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use smartbar::eval_harness::{
    check_baseline, compare_grid, compare_grid_records, export_logits, ingest_logits, logit_records, Baseline,
    BaselineStatus, EvalReport, Grid, LogitCache, LogitRecord, Mode, Variant,
};
use smartbar::imaging::{
    degrade_all, generate_dataset, read_dataset, read_pgm, render, default_manifest, write_dataset, write_pgm,
    ConditionKind, Image, ManifestEntry, RenderOpts, Sample,
};
use smartbar::smart_inference::SearchOrder;
use smartbar::soft_decoder::{LogitMatrix, LogitSource, SoftDecoder};
use smartbar::symbology::{encode, DigitSequence};
use smartbar::tinynet::{train, write_history_csv, InputTransform, KdConfig, MultidigitModel, TrainConfig};

#[derive(Parser)]
#[command(name = "smartbar", version, about = "Checksum-constrained EAN-13 decoding toolkit")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Corpus seed.
    #[arg(long, global = true, default_value_t = 2024)]
    seed: u64,
    /// Fraction of the full per-combo sample counts to generate.
    #[arg(long, global = true, default_value_t = 0.01)]
    scale: f64,
    #[arg(long, global = true, value_enum, default_value_t = ReportFormat::Markdown)]
    report: ReportFormat,
    /// Golden baseline file; written on first use, compared afterwards.
    #[arg(long, global = true)]
    baseline: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Leave timing out of reports so they are reproducible byte for byte.
    #[arg(long, global = true)]
    no_timing: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum ReportFormat {
    Json,
    Markdown,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SourceKind {
    Soft,
    Model,
    Ndjson,
}

#[derive(Clone, Copy, ValueEnum)]
enum CliMode {
    Greedy,
    Mpa,
    MpaAug,
    MpaVote,
}

impl From<CliMode> for Mode {
    fn from(m: CliMode) -> Self {
        match m {
            CliMode::Greedy => Mode::Greedy,
            CliMode::Mpa => Mode::Mpa,
            CliMode::MpaAug => Mode::MpaAug,
            CliMode::MpaVote => Mode::MpaVote,
        }
    }
}

#[derive(Args)]
struct DataArgs {
    /// Dataset directory written by `gen`; generated in memory from --seed and --scale if omitted.
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// TOML manifest used instead of the built-in table when generating in memory.
    #[arg(long)]
    manifest: Option<PathBuf>,
}

#[derive(Args)]
struct SourceArgs {
    #[arg(long, value_enum, default_value_t = SourceKind::Soft)]
    source: SourceKind,
    /// Checkpoint for `--source model`.
    #[arg(long)]
    model: Option<PathBuf>,
    /// Logits file for `--source ndjson`.
    #[arg(long)]
    ndjson: Option<PathBuf>,
}

#[derive(Args)]
struct SearchArgs {
    #[arg(long, value_enum, default_value_t = CliMode::Mpa)]
    mode: CliMode,
    /// Number of least confident digits searched (default 3 plain, 1 with rotations).
    #[arg(long = "max")]
    max_iter: Option<usize>,
    /// Only test single flips of the initial readout (compatibility order).
    #[arg(long)]
    literal: bool,
}

impl SearchArgs {
    fn variant(&self) -> Variant {
        let mode: Mode = self.mode.into();
        let default = if mode.needs_image() { 1 } else { 3 };
        let search = if self.literal { SearchOrder::SingleFlips } else { SearchOrder::JointProbability };
        Variant { mode, max_iter: self.max_iter.unwrap_or(default), search }
    }
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Output checkpoint.
    #[arg(long)]
    out: PathBuf,
    /// Hidden layer widths, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "128")]
    hidden: Vec<usize>,
    #[arg(long, default_value_t = 30)]
    epochs: usize,
    #[arg(long, default_value_t = 2e-3)]
    lr: f64,
    #[arg(long, default_value_t = 32)]
    batch: usize,
    /// Loss history CSV.
    #[arg(long)]
    history: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a dataset directory.
    Gen {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        manifest: Option<PathBuf>,
    },
    /// Render a clean symbol to PGM.
    Render {
        /// 13 digits.
        #[arg(long)]
        digits: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Apply a condition combo such as `dark+ccw` to a PGM.
    Degrade {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        combo: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Decode a PGM, a dataset or a logits file; prints `id<TAB>digits` lines.
    Decode {
        /// Single PGM image.
        #[arg(long)]
        input: Option<PathBuf>,
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        source: SourceArgs,
        #[command(flatten)]
        search: SearchArgs,
        /// Also write upright logits as NDJSON.
        #[arg(long)]
        export: Option<PathBuf>,
    },
    /// Evaluate one variant on a dataset.
    Eval {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        source: SourceArgs,
        #[command(flatten)]
        search: SearchArgs,
    },
    /// Accuracy and error tables: greedy plus each max value, per source and mode.
    Grid {
        #[command(flatten)]
        data: DataArgs,
        /// Logit sources, comma separated (soft, model).
        #[arg(long, value_enum, value_delimiter = ',', default_value = "soft")]
        sources: Vec<SourceKind>,
        #[arg(long)]
        model: Option<PathBuf>,
        /// Search modes for the rows, comma separated.
        #[arg(long, value_enum, value_delimiter = ',', default_value = "mpa")]
        modes: Vec<CliMode>,
        #[arg(long = "max", value_delimiter = ',', default_value = "1,2,3,4")]
        max_iters: Vec<usize>,
    },
    /// Train a model on hard labels.
    Train {
        #[command(flatten)]
        args: TrainArgs,
    },
    /// Train a model against a teacher checkpoint.
    Distill {
        #[command(flatten)]
        args: TrainArgs,
        #[arg(long)]
        teacher: PathBuf,
        #[arg(long, default_value_t = KdConfig::default().alpha)]
        alpha: f64,
        #[arg(long, default_value_t = KdConfig::default().temperature)]
        temperature: f64,
    },
    /// Greedy and plain search tables over an NDJSON logits file.
    Ingest {
        #[arg(long)]
        input: PathBuf,
        #[arg(long = "max", value_delimiter = ',', default_value = "1,2,3,4")]
        max_iters: Vec<usize>,
    },
}

enum Failure {
    Usage(String),
    Regression(Vec<String>),
}

impl<E: std::fmt::Display> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure::Usage(e.to_string())
    }
}

type Res<T = ()> = Result<T, Failure>;

fn fail<T>(msg: impl Into<String>) -> Res<T> {
    Err(Failure::Usage(msg.into()))
}

enum Source {
    Soft(SoftDecoder),
    Model(Box<MultidigitModel>),
}

impl LogitSource for Source {
    fn logits(&self, img: &Image) -> LogitMatrix {
        match self {
            Source::Soft(s) => s.logits(img),
            Source::Model(m) => m.logits(img),
        }
    }
}

impl Source {
    fn open(kind: SourceKind, model: Option<&Path>) -> Res<Self> {
        match kind {
            SourceKind::Soft => Ok(Source::Soft(SoftDecoder::default())),
            SourceKind::Model => match model {
                Some(p) => Ok(Source::Model(Box::new(MultidigitModel::load(p)?))),
                None => fail("--source model needs --model"),
            },
            SourceKind::Ndjson => fail("ndjson is not an image source"),
        }
    }

    fn name(kind: SourceKind) -> &'static str {
        match kind {
            SourceKind::Soft => "soft",
            SourceKind::Model => "model",
            SourceKind::Ndjson => "ndjson",
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if let Some(n) = cli.global.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Regression(lines)) => {
            for l in lines {
                eprintln!("regression: {l}");
            }
            ExitCode::from(2)
        }
    }
}

fn manifest(g: &Global, path: Option<&Path>) -> Res<Vec<ManifestEntry>> {
    match path {
        Some(p) => Ok(ManifestEntry::parse_manifest(&fs::read_to_string(p)?)?),
        None => Ok(default_manifest(g.scale)),
    }
}

/// Loads the dataset and names the corpus for baselines.
fn load(g: &Global, d: &DataArgs) -> Res<(Vec<Sample>, String)> {
    let (samples, corpus) = match &d.dataset {
        Some(dir) => (read_dataset(dir)?, format!("dataset {}", dir.display())),
        None => {
            let m = manifest(g, d.manifest.as_deref())?;
            let corpus = match &d.manifest {
                Some(p) => format!("seed {} manifest {}", g.seed, p.display()),
                None => format!("seed {} scale {}", g.seed, g.scale),
            };
            (generate_dataset(&m, g.seed, &RenderOpts::default())?, corpus)
        }
    };
    if samples.is_empty() {
        return fail("dataset is empty");
    }
    Ok((samples, corpus))
}

fn emit(text: &str) -> Res {
    let mut out = io::stdout().lock();
    out.write_all(text.as_bytes())?;
    if !text.ends_with('\n') {
        out.write_all(b"\n")?;
    }
    Ok(())
}

fn json<T: serde::Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("report serializes")
}

fn baseline(g: &Global, b: &Baseline) -> Res {
    let Some(path) = &g.baseline else { return Ok(()) };
    match check_baseline(path, b)? {
        BaselineStatus::Written => eprintln!("baseline written to {}", path.display()),
        BaselineStatus::Matched => eprintln!("baseline matched"),
        BaselineStatus::Regressed(lines) => return Err(Failure::Regression(lines)),
    }
    Ok(())
}

fn finish_report(g: &Global, report: EvalReport, corpus: &str) -> Res {
    let report = if g.no_timing { report.without_timing() } else { report };
    emit(&match g.report {
        ReportFormat::Json => json(&report),
        ReportFormat::Markdown => report.to_markdown(),
    })?;
    baseline(g, &Baseline::from_reports(corpus, [&report]))
}

fn finish_grid(g: &Global, grid: Grid, corpus: &str) -> Res {
    let grid = if g.no_timing { grid.without_timing() } else { grid };
    emit(&match g.report {
        ReportFormat::Json => json(&grid),
        ReportFormat::Markdown => grid.to_markdown(),
    })?;
    let keyed: Vec<EvalReport> = grid
        .rows
        .iter()
        .flat_map(|r| r.cells.iter().map(move |c| EvalReport { variant: format!("{}/{}", r.source, c.variant), ..c.clone() }))
        .collect();
    baseline(g, &Baseline::from_reports(corpus, &keyed))
}

fn check_mode(variant: &Variant, source: SourceKind) -> Res {
    if variant.mode.needs_image() && source == SourceKind::Ndjson {
        return fail("rotation modes need images; use greedy or mpa with ndjson logits");
    }
    Ok(())
}

fn records_from(src: &SourceArgs) -> Res<Vec<LogitRecord>> {
    match &src.ndjson {
        Some(p) => Ok(ingest_logits(p)?),
        None => fail("--source ndjson needs --ndjson"),
    }
}

fn show(s: Option<DigitSequence>) -> String {
    s.map_or_else(|| "NORESULT".to_string(), |s| s.to_string())
}

fn run(cli: Cli) -> Res {
    let g = &cli.global;
    match cli.command {
        Command::Gen { out, manifest: m } => {
            let samples = generate_dataset(&manifest(g, m.as_deref())?, g.seed, &RenderOpts::default())?;
            write_dataset(&out, &samples)?;
            eprintln!("wrote {} samples to {}", samples.len(), out.display());
        }
        Command::Render { digits, out } => {
            let seq: DigitSequence = digits.parse()?;
            write_pgm(out, &render(&encode(&seq), &RenderOpts::default())?)?;
        }
        Command::Degrade { input, combo, out } => {
            let specs: Vec<_> = ConditionKind::parse_combo(&combo)?.into_iter().map(ConditionKind::default_spec).collect();
            write_pgm(out, &degrade_all(&read_pgm(input)?, &specs, g.seed))?;
        }
        Command::Decode { input, data, source, search, export } => {
            let variant = search.variant();
            check_mode(&variant, source.source)?;
            let mut lines = Vec::new();
            let mut exported = Vec::new();
            if source.source == SourceKind::Ndjson {
                for r in records_from(&source)? {
                    lines.push(format!("{}\t{}", r.id, show(variant.decode_with(|_| r.logits))));
                    exported.push(r);
                }
            } else {
                let src = Source::open(source.source, source.model.as_deref())?;
                let samples = match input {
                    Some(p) => {
                        let image = read_pgm(&p)?;
                        vec![Sample {
                            id: p.display().to_string(),
                            combo: String::new(),
                            truth: DigitSequence::new([0; 13]).expect("digits in range"),
                            conditions: Vec::new(),
                            seed: 0,
                            image,
                        }]
                    }
                    None => load(g, &data)?.0,
                };
                let cache = LogitCache::new(&src, &samples);
                for (i, s) in samples.iter().enumerate() {
                    lines.push(format!("{}\t{}", s.id, show(variant.decode_with(|rot| cache.get(i, rot).0))));
                }
                if export.is_some() {
                    exported = logit_records(&src, &samples);
                }
            }
            emit(&lines.join("\n"))?;
            if let Some(path) = export {
                export_logits(BufWriter::new(fs::File::create(path)?), &exported)?;
            }
        }
        Command::Eval { data, source, search } => {
            let variant = search.variant();
            check_mode(&variant, source.source)?;
            if source.source == SourceKind::Ndjson {
                let path = source.ndjson.clone();
                let records = records_from(&source)?;
                if records.is_empty() {
                    return fail("logits file is empty");
                }
                let grid = compare_grid_records("ndjson", &records, &[variant.max_iter]);
                let report = if variant.mode == Mode::Greedy { &grid.rows[0].cells[0] } else { &grid.rows[0].cells[1] };
                let corpus = format!("ndjson {}", path.unwrap_or_default().display());
                return finish_report(g, report.clone(), &corpus);
            }
            let (samples, corpus) = load(g, &data)?;
            let src = Source::open(source.source, source.model.as_deref())?;
            let report = LogitCache::new(&src, &samples).evaluate(&variant);
            finish_report(g, report, &corpus)?;
        }
        Command::Grid { data, sources, model, modes, max_iters } => {
            if sources.contains(&SourceKind::Ndjson) {
                return fail("use `ingest` for ndjson logits");
            }
            let (samples, corpus) = load(g, &data)?;
            let opened = sources.iter().map(|&k| Ok((Source::name(k), Source::open(k, model.as_deref())?))).collect::<Res<Vec<_>>>()?;
            let refs: Vec<(&str, &Source)> = opened.iter().map(|(n, s)| (*n, s)).collect();
            let modes: Vec<Mode> = modes.into_iter().map(Mode::from).filter(|m| *m != Mode::Greedy).collect();
            if modes.is_empty() {
                return fail("--modes needs at least one search mode");
            }
            finish_grid(g, compare_grid(&refs, &modes, &max_iters, &samples), &corpus)?;
        }
        Command::Train { args } => train_cmd(g, &args, None)?,
        Command::Distill { args, teacher, alpha, temperature } => {
            let kd = KdConfig { alpha, temperature };
            kd.validate()?;
            let teacher = MultidigitModel::load(teacher)?;
            train_cmd(g, &args, Some((&teacher, &kd)))?;
        }
        Command::Ingest { input, max_iters } => {
            let records = ingest_logits(&input)?;
            if records.is_empty() {
                return fail("logits file is empty");
            }
            let grid = compare_grid_records("ndjson", &records, &max_iters);
            finish_grid(g, grid, &format!("ndjson {}", input.display()))?;
        }
    }
    Ok(())
}

fn train_cmd(g: &Global, a: &TrainArgs, kd: Option<(&MultidigitModel, &KdConfig)>) -> Res {
    let (samples, _) = load(g, &a.data)?;
    let transform = kd.map_or_else(InputTransform::default, |(t, _)| t.transform.clone());
    let model = MultidigitModel::new(transform, &a.hidden, g.seed);
    let cfg = TrainConfig { learning_rate: a.lr, batch_size: a.batch, epochs: a.epochs, seed: g.seed };
    let (model, history) = train(&model, &samples, &cfg, kd)?;
    model.save(&a.out)?;
    if let Some(h) = &a.history {
        write_history_csv(h, &history)?;
    }
    let acc = smartbar::tinynet::greedy_accuracy(&model, &samples);
    eprintln!(
        "trained {} parameters, final loss {:.4}, training greedy accuracy {:.4}",
        model.param_count(),
        history.last().copied().unwrap_or(f64::NAN),
        acc
    );
    Ok(())
}
