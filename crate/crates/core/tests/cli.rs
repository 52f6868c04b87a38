use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::OnceLock;

use daian_core::config::RunConfig;
use daian_core::metrics::{auc, read_scores, MetricReport};
use daian_core::Error;

const SMALL: &[&str] = &[
    "--set",
    "synth.num_items=300",
    "--set",
    "synth.num_clusters=10",
    "--set",
    "synth.num_users=80",
    "--set",
    "synth.requests_per_user=15",
    "--set",
    "train.epochs_uim=1",
];

fn daian(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_daian"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = daian(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn with_small<'a>(args: &[&'a str]) -> Vec<&'a str> {
    let mut v = args.to_vec();
    v.extend_from_slice(SMALL);
    v
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Generated, labeled and trained once for the whole file.
struct Fixture {
    _dir: tempfile::TempDir,
    data: PathBuf,
    model: PathBuf,
    din: PathBuf,
    root: PathBuf,
}

fn fixture() -> &'static Fixture {
    static F: OnceLock<Fixture> = OnceLock::new();
    F.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path().to_path_buf();
        let data = root.join("data");
        ok(&with_small(&["generate", "--out", s(&data)]));
        ok(&with_small(&["label", "--out", s(&data)]));
        let model = root.join("three");
        ok(&with_small(&["train", "--data", s(&data), "--out", s(&model)]));
        let din = root.join("din");
        ok(&with_small(&["train", "--data", s(&data), "--mode", "din-baseline", "--out", s(&din)]));
        Fixture {
            _dir: dir,
            data,
            model,
            din,
            root,
        }
    })
}

// ---- configuration -------------------------------------------------------------------

#[test]
fn unknown_and_derived_keys_are_rejected() {
    let mut c = RunConfig::default();
    assert!(matches!(c.set("train.learning_rate", "0.1"), Err(Error::Config(_))));
    assert!(matches!(c.set("model.n_items", "10"), Err(Error::Config(_))));
    assert!(matches!(c.set("train.seed", "10"), Err(Error::Config(_))));
    assert!(matches!(c.set("train", "1"), Err(Error::Config(_))));
    assert!(matches!(c.set("train.lr", "fast"), Err(Error::Config(_))));
    c.set("train.lr", "0.02").unwrap();
    assert_eq!(c.train.lr, 0.02);
    c.set("eval.bucket_edges", "0,2,4").unwrap();
    assert_eq!(c.eval.bucket_edges, vec![0, 2, 4]);
}

#[test]
fn echoed_config_reads_back_identically() {
    let mut c = RunConfig::default();
    c.seed = 11;
    c.set("train.lr", "0.1").unwrap();
    c.set("model.tau", "0.25").unwrap();
    c.set("model.components.sein", "false").unwrap();
    let mut back = RunConfig::default();
    back.apply_text(&c.to_text()).unwrap();
    assert_eq!(back, c);
    assert!(!c.to_text().contains("model.n_items"));
}

#[test]
fn config_file_reports_line_numbers() {
    let mut c = RunConfig::default();
    let err = c.apply_text("# comment\n\ntrain.lr=0.1\nbogus.key=3\n").unwrap_err();
    assert!(err.to_string().contains("line 4"), "{err}");
    assert_eq!(c.train.lr, 0.1);
}

#[test]
fn exit_codes_follow_error_class() {
    assert_eq!(Error::NanLoss { stage: "joint".into(), step: 3 }.exit_code(), 2);
    assert_eq!(Error::UndefinedMetric("auc".into()).exit_code(), 2);
    assert_eq!(Error::Checkpoint("bad".into()).exit_code(), 3);
    assert_eq!(Error::Config("bad".into()).exit_code(), 1);
}

// ---- commands -------------------------------------------------------------------------

#[test]
fn generate_and_label_write_their_files() {
    let f = fixture();
    for name in ["catalog.jsonl", "users.jsonl", "requests.jsonl", "labels.jsonl", "config.resolved"] {
        assert!(f.data.join(name).exists(), "{name}");
    }
    let echoed = std::fs::read_to_string(f.data.join("config.resolved")).unwrap();
    assert!(echoed.contains("synth.num_users=80\n"));
    assert!(echoed.contains("seed=7\n"));
}

#[test]
fn train_writes_stage_checkpoints_and_reports() {
    let f = fixture();
    for name in [
        "stage1_uim_pretrain.json",
        "stage2_die_pretrain.json",
        "stage3_joint.json",
        "model.json",
        "reports.json",
    ] {
        assert!(f.model.join(name).exists(), "{name}");
    }
    let reports: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(f.model.join("reports.json")).unwrap()).unwrap();
    let stages: Vec<&str> = reports
        .as_array()
        .unwrap()
        .iter()
        .map(|r| r["stage"].as_str().unwrap())
        .collect();
    assert_eq!(stages, vec!["uim_pretrain", "die_pretrain", "joint"]);
    assert!(f.din.join("stage1_din_baseline.json").exists());
}

#[test]
fn eval_is_repeatable_and_consistent_with_its_scores() {
    let f = fixture();
    let a = f.root.join("eval_a");
    let b = f.root.join("eval_b");
    let ck = f.model.join("model.json");
    ok(&["eval", "--checkpoint", s(&ck), "--data", s(&f.data), "--out", s(&a)]);
    ok(&["eval", "--checkpoint", s(&ck), "--data", s(&f.data), "--out", s(&b)]);
    for name in ["scores.jsonl", "report.json", "intent_fit.tsv"] {
        assert_eq!(
            std::fs::read(a.join(name)).unwrap(),
            std::fs::read(b.join(name)).unwrap(),
            "{name}"
        );
    }
    let scores = read_scores(&a.join("scores.jsonl")).unwrap();
    let s_: Vec<f64> = scores.iter().map(|x| x.score).collect();
    let l: Vec<u8> = scores.iter().map(|x| x.label).collect();
    let report: MetricReport = serde_json::from_str(&std::fs::read_to_string(a.join("report.json")).unwrap()).unwrap();
    assert_eq!(report.auc, auc(&s_, &l).unwrap());
    let fit = std::fs::read_to_string(a.join("intent_fit.tsv")).unwrap();
    assert!(fit.starts_with("archetype\tlevel\tpredicted\tground_truth\n"));
}

#[test]
fn eval_against_itself_has_zero_improvement() {
    let f = fixture();
    let first = f.root.join("self_a");
    let ck = f.model.join("model.json");
    ok(&["eval", "--checkpoint", s(&ck), "--data", s(&f.data), "--out", s(&first)]);
    let second = f.root.join("self_b");
    let base = first.join("scores.jsonl");
    let stdout = ok(&[
        "eval",
        "--checkpoint",
        s(&ck),
        "--data",
        s(&f.data),
        "--base-scores",
        s(&base),
        "--out",
        s(&second),
    ]);
    assert!(stdout.contains("RelaImpr AUC 0.00%  GAUC 0.00%"), "{stdout}");
    let report: MetricReport =
        serde_json::from_str(&std::fs::read_to_string(second.join("report.json")).unwrap()).unwrap();
    assert_eq!(report.rela_impr_auc, Some(0.0));
    for b in &report.diversity.unwrap().buckets {
        assert!(b.delta.is_none_or(|d| d == 0.0));
    }
}

#[test]
fn eval_against_din_reports_improvement() {
    let f = fixture();
    let din_eval = f.root.join("din_eval");
    ok(&[
        "eval",
        "--checkpoint",
        s(&f.din.join("model.json")),
        "--data",
        s(&f.data),
        "--out",
        s(&din_eval),
    ]);
    assert!(!din_eval.join("intent_fit.tsv").exists());
    let out = f.root.join("vs_din");
    ok(&[
        "eval",
        "--checkpoint",
        s(&f.model.join("model.json")),
        "--data",
        s(&f.data),
        "--base-scores",
        s(&din_eval.join("scores.jsonl")),
        "--out",
        s(&out),
    ]);
    let report: MetricReport = serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert!(report.rela_impr_auc.unwrap().is_finite());
    assert_eq!(report.diversity.unwrap().buckets.len(), 5);
}

#[test]
fn sweep_writes_one_row_per_level_count() {
    let f = fixture();
    let out = f.root.join("sweep");
    let stdout = ok(&with_small(&[
        "sweep-n",
        "--data",
        s(&f.data),
        "--n-list",
        "2,4,6,8",
        "--set",
        "train.epochs_uim=1",
        "--out",
        s(&out),
    ]));
    assert_eq!(stdout.lines().filter(|l| l.starts_with("n ")).count(), 4);
    let tsv = std::fs::read_to_string(out.join("sweep_n.tsv")).unwrap();
    let lines: Vec<&str> = tsv.lines().collect();
    assert_eq!(lines[0], "n\tauc\tgauc");
    let ns: Vec<&str> = lines[1..].iter().map(|l| l.split('\t').next().unwrap()).collect();
    assert_eq!(ns, vec!["2", "4", "6", "8"]);
}

// ---- failures ---------------------------------------------------------------------------

#[test]
fn unknown_key_exits_with_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = daian(&["generate", "--set", "synth.bogus=1", "--out", s(dir.path())]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown key synth.bogus"));
}

#[test]
fn missing_corpus_exits_with_io_code() {
    let dir = tempfile::tempdir().unwrap();
    let out = daian(&[
        "train",
        "--data",
        s(&dir.path().join("nowhere")),
        "--out",
        s(dir.path()),
    ]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn corrupt_checkpoint_exits_with_code_three() {
    let f = fixture();
    let dir = tempfile::tempdir().unwrap();
    let ck = dir.path().join("model.json");
    let text = std::fs::read_to_string(f.model.join("model.json")).unwrap();
    std::fs::write(&ck, &text[..text.len() / 2]).unwrap();
    let out = daian(&["eval", "--checkpoint", s(&ck), "--data", s(&f.data), "--out", s(dir.path())]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn mismatched_labels_are_rejected() {
    let f = fixture();
    let dir = tempfile::tempdir().unwrap();
    let out = daian(&with_small(&[
        "train",
        "--data",
        s(&f.data),
        "--set",
        "model.n_levels=4",
        "--out",
        s(dir.path()),
    ]));
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("4"));
}

#[test]
fn diverging_training_exits_with_code_two() {
    let f = fixture();
    let dir = tempfile::tempdir().unwrap();
    let out = daian(&with_small(&[
        "train",
        "--data",
        s(&f.data),
        "--mode",
        "din-baseline",
        "--set",
        "train.lr=1e300",
        "--out",
        s(dir.path()),
    ]));
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stderr).contains("din_baseline"));
}

#[test]
fn usage_errors_exit_nonzero() {
    assert_eq!(daian(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(daian(&["--help"]).status.code(), Some(0));
}
