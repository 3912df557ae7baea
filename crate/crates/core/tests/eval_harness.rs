use std::fs;
use std::process::Command;

use proptest::prelude::*;

use smartbar::eval_harness::{
    aggregate, compare_grid, compare_grid_records, evaluate, export_logits, ingest_logits, logit_records, IngestError,
    Labeled, Mode,
};
use smartbar::imaging::{generate_dataset, ManifestEntry, RenderOpts, Sample};
use smartbar::soft_decoder::SoftDecoder;
use smartbar::symbology::DigitSequence;

fn corpus() -> Vec<Sample> {
    let manifest = ["norm", "occluded", "blur", "ccw", "rpt+dark", "upside_down"].map(|c| ManifestEntry::new(c, 8));
    generate_dataset(&manifest, 404, &RenderOpts::default()).unwrap()
}

struct Item(DigitSequence);

impl Labeled for Item {
    fn combo(&self) -> &str {
        if self.0.digit(13) % 2 == 0 { "even" } else { "odd" }
    }
    fn truth(&self) -> &DigitSequence {
        &self.0
    }
}

proptest! {
    #[test]
    fn outcome_counts_partition_total(
        prefixes in prop::collection::vec(prop::array::uniform12(0u8..10), 1..60),
        choices in prop::collection::vec(0u8..3, 60),
    ) {
        let items: Vec<Item> = prefixes.iter().map(|p| Item(DigitSequence::with_check_digit(p).unwrap())).collect();
        let wrong: DigitSequence = "0000000000000".parse().unwrap();
        let results = items.iter().zip(&choices).map(|(it, c)| match c {
            0 => (Some(it.0), 1.0),
            1 => (if it.0 == wrong { None } else { Some(wrong) }, 2.0),
            _ => (None, 3.0),
        }).collect();
        let r = aggregate("v", &items, results);
        for c in r.per_combo.values().chain([&r.overall]) {
            prop_assert_eq!(c.correct + c.errors + c.no_results, c.total);
            prop_assert!((0.0..=1.0).contains(&c.accuracy));
        }
        prop_assert_eq!(r.per_combo.values().map(|c| c.total).sum::<usize>(), items.len());
        prop_assert_eq!(r.overall.invalid_decodes, 0);
    }
}

#[test]
fn grid_shape_trends_and_soundness() {
    let samples = corpus();
    let decoder = SoftDecoder::default();
    let grid = compare_grid(&[("soft", &decoder)], &[Mode::Mpa, Mode::MpaAug, Mode::MpaVote], &[1, 2, 3, 4], &samples);
    assert_eq!(grid.columns, ["nonMPA", "max=1", "max=2", "max=3", "max=4"]);
    assert_eq!(grid.rows.len(), 3);
    let mpa_row = &grid.rows[0];
    assert!(mpa_row.cells[1].overall.accuracy >= mpa_row.cells[0].overall.accuracy);
    // augmentation recovers the upside-down samples
    assert!(grid.rows[1].cells[1].overall.accuracy > mpa_row.cells[1].overall.accuracy);
    for row in &grid.rows {
        for cell in &row.cells[1..] {
            assert_eq!(cell.overall.invalid_decodes, 0, "{}", cell.variant);
        }
    }
    let md = grid.to_markdown();
    assert!(md.contains("| soft | mpa-aug |"));
    let json = serde_json::to_string(&grid.without_timing()).unwrap();
    assert!(!json.contains("mean_ms"));
}

#[test]
fn exported_logits_reproduce_in_memory_results() {
    let samples = corpus();
    let decoder = SoftDecoder::default();
    let in_memory = compare_grid(&[("soft", &decoder)], &[Mode::Mpa], &[1, 2, 3, 4], &samples).without_timing();

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("logits.ndjson");
    export_logits(fs::File::create(&path).unwrap(), &logit_records(&decoder, &samples)).unwrap();
    let records = ingest_logits(&path).unwrap();
    assert_eq!(records.len(), samples.len());
    let ingested = compare_grid_records("soft", &records, &[1, 2, 3, 4]).without_timing();
    assert_eq!(ingested, in_memory);
}

#[test]
fn ingest_reports_line_numbers() {
    let dir = tempfile::tempdir().unwrap();
    let row = format!("[{}]", ["0.5"; 10].join(","));
    let line = |rows: usize, id: &str| format!("{{\"id\":\"{id}\",\"logits\":[{}],\"truth\":\"5901234123457\"}}", vec![row.as_str(); rows].join(","));

    let good = dir.path().join("good.ndjson");
    fs::write(&good, [line(13, "a"), line(13, "b"), String::new(), line(13, "c")].join("\n")).unwrap();
    let recs = ingest_logits(&good).unwrap();
    assert_eq!(recs.iter().map(|r| r.id.as_str()).collect::<Vec<_>>(), ["a", "b", "c"]);

    let short = dir.path().join("short.ndjson");
    fs::write(&short, [line(13, "a"), line(12, "b")].join("\n")).unwrap();
    assert!(matches!(ingest_logits(&short), Err(IngestError::Dimension { line: 2, .. })));

    let broken = dir.path().join("broken.ndjson");
    fs::write(&broken, [line(13, "a"), line(13, "b"), "{\"id\": \"c\"".to_string()].join("\n")).unwrap();
    assert!(matches!(ingest_logits(&broken), Err(IngestError::Schema { line: 3, .. })));
}

#[test]
fn evaluate_oracle_and_silent() {
    let samples = corpus();
    let oracle = evaluate("oracle", &samples, |s| Some(s.truth));
    assert_eq!((oracle.overall.accuracy, oracle.overall.errors), (1.0, 0));
    let silent = evaluate("silent", &samples, |_| None);
    assert_eq!((silent.overall.accuracy, silent.overall.errors, silent.overall.no_results), (0.0, 0, samples.len()));
}

fn cli(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_smartbar")).args(args).output().unwrap()
}

#[test]
fn cli_exit_codes_and_baseline() {
    assert_eq!(cli(&["decode", "--mode", "fastest"]).status.code(), Some(1));
    assert_eq!(cli(&["no-such-command"]).status.code(), Some(1));
    assert_eq!(cli(&["--help"]).status.code(), Some(0));

    let dir = tempfile::tempdir().unwrap();
    let manifest = dir.path().join("m.toml");
    fs::write(&manifest, "[[entry]]\ncombo = \"norm\"\ncount = 6\n\n[[entry]]\ncombo = \"occluded\"\ncount = 6\n").unwrap();
    let ds = dir.path().join("ds");
    let out = cli(&["gen", "--manifest", manifest.to_str().unwrap(), "--out", ds.to_str().unwrap(), "--seed", "5"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let baseline = dir.path().join("golden.json");
    let eval = |extra: &[&str]| {
        let mut args = vec!["eval", "--dataset", ds.to_str().unwrap(), "--baseline", baseline.to_str().unwrap(), "--no-timing"];
        args.extend_from_slice(extra);
        cli(&args)
    };
    let first = eval(&[]);
    assert!(first.status.success());
    assert!(baseline.exists());
    let second = eval(&[]);
    assert_eq!(second.status.code(), Some(0));
    assert_eq!(first.stdout, second.stdout);

    // a golden file claiming more correct decodes turns this run into a regression
    let mut golden: serde_json::Value = serde_json::from_str(&fs::read_to_string(&baseline).unwrap()).unwrap();
    let correct = &mut golden["reports"]["mpa-3"]["correct"];
    *correct = serde_json::json!(correct.as_u64().unwrap() + 1);
    fs::write(&baseline, golden.to_string()).unwrap();
    assert_eq!(eval(&[]).status.code(), Some(2));

    let pgm = dir.path().join("one.pgm");
    assert!(cli(&["render", "--digits", "5901234123457", "--out", pgm.to_str().unwrap()]).status.success());
    let out = cli(&["decode", "--input", pgm.to_str().unwrap(), "--mode", "mpa-vote"]);
    assert!(String::from_utf8_lossy(&out.stdout).trim_end().ends_with("\t5901234123457"));
    let dark = dir.path().join("dark.pgm");
    assert!(cli(&["degrade", "--input", pgm.to_str().unwrap(), "--combo", "dark+upside_down", "--out", dark.to_str().unwrap()]).status.success());
    let out = cli(&["decode", "--input", dark.to_str().unwrap(), "--mode", "mpa-aug"]);
    assert!(String::from_utf8_lossy(&out.stdout).contains("5901234123457"));

    let logits = dir.path().join("l.ndjson");
    assert!(cli(&["decode", "--dataset", ds.to_str().unwrap(), "--export", logits.to_str().unwrap()]).status.success());
    let ingest = cli(&["ingest", "--input", logits.to_str().unwrap(), "--report", "json", "--no-timing"]);
    assert!(ingest.status.success());
    let ndjson_mpa = cli(&["decode", "--source", "ndjson", "--ndjson", logits.to_str().unwrap(), "--mode", "mpa-aug"]);
    assert_eq!(ndjson_mpa.status.code(), Some(1));
}
