//! Drives the `intent-slot` binary end to end on the synthetic corpus.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use intent_slot::data::{load_split, write_split, Utterance};
use intent_slot::evaluation::extract_spans;
use tempfile::TempDir;

const SMALL: [&str; 6] = ["--d-model", "16", "--heads", "2", "--layers", "1"];

fn bin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_intent-slot"))
        .args(args)
        .output()
        .unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = bin(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn synth(tmp: &TempDir) -> PathBuf {
    let data = tmp.path().join("data");
    ok(&["synth", "--output-dir", s(&data), "--seed", "4"]);
    data
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn train_writes_artifacts_and_honours_precedence() {
    let tmp = TempDir::new().unwrap();
    let data = synth(&tmp);
    let run = tmp.path().join("run");
    let cfg = tmp.path().join("run.cfg");
    fs::write(&cfg, "# small run\nlambda=0.2\nepochs=1\nseed=9\n").unwrap();
    let mut args = vec![
        "train",
        "--data-dir",
        s(&data),
        "--output-dir",
        s(&run),
        "--config",
        s(&cfg),
    ];
    args.extend(["--epochs", "2", "--lr", "1e-3"]);
    args.extend(SMALL);
    let stdout = ok(&args);
    assert!(stdout.contains("best epoch"));
    for f in [
        "model.json",
        "train_log.tsv",
        "summary.json",
        "config.txt",
        "valid_report.txt",
    ] {
        assert!(run.join(f).is_file(), "missing {f}");
    }
    let echo = fs::read_to_string(run.join("config.txt")).unwrap();
    for line in ["lambda=0.2", "epochs=2", "seed=9", "lr=0.001", "d_model=16"] {
        assert!(echo.lines().any(|l| l == line), "{line} not in\n{echo}");
    }
    assert_eq!(
        fs::read_to_string(run.join("train_log.tsv")).unwrap().lines().count(),
        3
    );
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(run.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["variant"], "full");
}

#[test]
fn invalid_lambda_is_rejected() {
    let tmp = TempDir::new().unwrap();
    let data = synth(&tmp);
    let out = bin(&["train", "--data-dir", s(&data), "--lambda", "1.5"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("lambda must be in (0,1)"));
    let out = bin(&["train", "--data-dir", s(&tmp.path().join("missing"))]);
    assert!(!out.status.success());
}

#[test]
fn baseline_variant_trains_with_fewer_parameters() {
    let tmp = TempDir::new().unwrap();
    let data = synth(&tmp);
    let params = |variant: &str| {
        let run = tmp.path().join(variant);
        let mut args = vec![
            "train",
            "--data-dir",
            s(&data),
            "--output-dir",
            s(&run),
            "--epochs",
            "1",
        ];
        args.extend(["--variant", variant]);
        args.extend(SMALL);
        ok(&args);
        let summary: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(run.join("summary.json")).unwrap()).unwrap();
        summary["parameters"].as_u64().unwrap()
    };
    assert!(params("baseline") < params("full"));
}

#[test]
fn gridsearch_single_cell_and_resume() {
    let tmp = TempDir::new().unwrap();
    let data = synth(&tmp);
    let grid = tmp.path().join("grid");
    let mut base = vec![
        "gridsearch",
        "--data-dir",
        s(&data),
        "--output-dir",
        s(&grid),
        "--epochs",
        "1",
    ];
    base.extend(SMALL);
    let mut one = base.clone();
    one.extend(["--lrs", "1e-5", "--lambdas", "0.5"]);
    let out = ok(&one);
    assert!(out.contains("cell 1/1"));
    let ranked = fs::read_to_string(grid.join("grid_results.tsv")).unwrap();
    assert_eq!(ranked.lines().count(), 2);
    assert!(grid.join("best_model.json").is_file());

    let mut more = base.clone();
    more.extend(["--lrs", "1e-5,1e-3", "--lambdas", "0.5"]);
    let out = ok(&more);
    assert!(out.contains("cell 1/2 lr=0.00001 lambda=0.5: already done"), "{out}");
    assert!(out.contains("cell 2/2 lr=0.001 lambda=0.5: best epoch"));
    assert_eq!(
        fs::read_to_string(grid.join("grid_results.tsv"))
            .unwrap()
            .lines()
            .count(),
        3
    );

    let mut changed = base.clone();
    changed.extend(["--lrs", "1e-5", "--lambdas", "0.5", "--seed", "77"]);
    assert!(!bin(&changed).status.success());
}

/// Trains on the training split with validation = training data.
fn overfit(tmp: &TempDir) -> (PathBuf, PathBuf) {
    let data = tmp.path().join("data");
    let train = synth(tmp).join("train");
    let utts = load_split(&train).unwrap();
    write_split(&data.join("dev"), &utts).unwrap();
    let run = tmp.path().join("run");
    let mut args = vec!["train", "--data-dir", s(&data), "--output-dir", s(&run)];
    args.extend([
        "--epochs",
        "40",
        "--lr",
        "2e-3",
        "--d-model",
        "32",
        "--batch-size",
        "10",
    ]);
    ok(&args);
    (data, run.join("model.json"))
}

#[test]
fn eval_predict_and_errors_round_trip() {
    let tmp = TempDir::new().unwrap();
    let (data, model) = overfit(&tmp);
    let report = ok(&[
        "eval",
        "--checkpoint",
        s(&model),
        "--data-dir",
        s(&data),
        "--split",
        "train",
    ]);
    for key in ["intent accuracy", "slot F1", "sentence accuracy"] {
        let line = report.lines().find(|l| l.starts_with(key)).unwrap();
        assert!(line.ends_with("100.00"), "{line}");
    }

    // predictions on the training tokens score perfectly in the error report
    let input = data.join("train").join("seq.in");
    let pred = tmp.path().join("pred.txt");
    ok(&[
        "predict",
        "--checkpoint",
        s(&model),
        "--input",
        s(&input),
        "--output",
        s(&pred),
    ]);
    let counts = ok(&["errors", "--gold", s(&data.join("train")), "--predictions", s(&pred)]);
    for cat in ["WI", "MS", "SS", "WB", "WL"] {
        let line = counts.lines().find(|l| l.starts_with(cat)).unwrap();
        assert!(line.trim_end().ends_with(" 0"), "{line}");
    }

    let one = tmp.path().join("one.txt");
    fs::write(&one, "flights from hanoi to hue on sunday\n").unwrap();
    let out = ok(&["predict", "--checkpoint", s(&model), "--input", s(&one)]);
    let (_, tags) = out.trim_end().split_once('\t').unwrap();
    assert_eq!(tags.split(' ').count(), 7);

    let empty = tmp.path().join("empty.txt");
    fs::write(&empty, "").unwrap();
    assert_eq!(ok(&["predict", "--checkpoint", s(&model), "--input", s(&empty)]), "");

    // unseen words map to [UNK]; the decoded spans stay well formed
    let vi = tmp.path().join("vi.txt");
    fs::write(
        &vi,
        "chuyến bay nào rời sân_bay vân_đồn đến côn_đảo và hạ_cánh lúc 10 giờ tối\n",
    )
    .unwrap();
    let out = ok(&["predict", "--checkpoint", s(&model), "--input", s(&vi)]);
    let tags: Vec<&str> = out.trim_end().split_once('\t').unwrap().1.split(' ').collect();
    assert_eq!(tags.len(), 14);
    let spans = extract_spans(&tags);
    assert!(spans.windows(2).all(|w| w[0].end < w[1].start));
    assert!(spans.iter().all(|sp| sp.start <= sp.end && sp.end < 14));
}

#[test]
fn eval_rejects_schema_mismatch() {
    let tmp = TempDir::new().unwrap();
    let data = synth(&tmp);
    let run = tmp.path().join("run");
    let mut args = vec![
        "train",
        "--data-dir",
        s(&data),
        "--output-dir",
        s(&run),
        "--epochs",
        "1",
    ];
    args.extend(SMALL);
    ok(&args);
    let odd = tmp.path().join("odd");
    let u = Utterance::new(vec!["hello".into()], "greeting", vec!["B-person".into()]).unwrap();
    write_split(&odd.join("test"), &[u]).unwrap();
    let out = bin(&[
        "eval",
        "--checkpoint",
        s(&run.join("model.json")),
        "--data-dir",
        s(&odd),
    ]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("schema mismatch"));
}

#[test]
fn eval_over_seeds_reports_mean_and_std() {
    let tmp = TempDir::new().unwrap();
    let data = synth(&tmp);
    let mut args = vec!["eval", "--data-dir", s(&data), "--seeds", "1,2,3", "--epochs", "1"];
    args.extend(SMALL);
    let out = ok(&args);
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines.len(), 5, "{out}");
    assert!(lines[1].starts_with("1\t") && lines[3].starts_with("3\t"));
    assert!(lines[4].starts_with("mean±std\t"));
    let again = ok(&args);
    assert_eq!(out, again);
}

fn write_fixture(dir: &Path, rows: &[(&str, &str, &str)]) {
    let utts: Vec<Utterance> = rows
        .iter()
        .map(|(toks, intent, tags)| {
            Utterance::new(
                toks.split(' ').map(String::from).collect(),
                *intent,
                tags.split(' ').map(String::from).collect(),
            )
            .unwrap()
        })
        .collect();
    write_split(dir, &utts).unwrap();
}

#[test]
fn errors_counts_one_of_each() {
    let tmp = TempDir::new().unwrap();
    let gold = tmp.path().join("gold");
    write_fixture(
        &gold,
        &[
            ("to hue please", "flight", "O B-a O"),
            ("w0 w1 w2 w3 w4 w5 w6 w7 w8", "airfare", "B-a I-a O B-b O O B-c O B-d"),
        ],
    );
    let pred = tmp.path().join("pred.txt");
    fs::write(&pred, "airfare\tO B-a O\nairfare\tB-a O O B-x O B-e O O B-d\n").unwrap();
    let out = ok(&["errors", "--gold", s(&gold), "--predictions", s(&pred)]);
    for cat in ["WI", "MS", "SS", "WB", "WL"] {
        let line = out.lines().find(|l| l.starts_with(cat)).unwrap();
        assert!(line.trim_end().ends_with(" 1"), "{line}");
    }

    fs::write(&pred, "airfare\tO B-a O\n").unwrap();
    assert!(!bin(&["errors", "--gold", s(&gold), "--predictions", s(&pred)])
        .status
        .success());
    fs::write(&pred, "airfare\tO B-a\nairfare\tB-a O O B-x O B-e O O B-d\n").unwrap();
    assert!(!bin(&["errors", "--gold", s(&gold), "--predictions", s(&pred)])
        .status
        .success());
}
