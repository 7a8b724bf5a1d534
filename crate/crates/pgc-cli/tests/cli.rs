//! End-to-end tests driving the compiled binary.

use std::path::Path;
use std::process::{Command, Output};

use pgc::circuit::{self, CircuitBuilder};
use pgc::pc::{self, MassCircuit, MassNode};

fn pgc_bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_pgc"))
}

fn run(args: &[&str]) -> Output {
    pgc_bin().args(args).output().expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).to_string()
}

/// Value of a `key value` line in machine output.
fn field(text: &str, key: &str) -> Option<f64> {
    text.lines()
        .find_map(|l| l.strip_prefix(&format!("{key} ")))
        .and_then(|v| v.trim().parse().ok())
}

/// Three-variable circuit whose joint matches the worked example:
/// (0.1 (z1+1)(6 z2+1) - 0.4 z1 z2)(0.8 z3 + 0.2).
fn example_circuit() -> pgc::Circuit {
    let mut b = CircuitBuilder::new(3);
    let z1 = b.var(0);
    let z2 = b.var(1);
    let z3 = b.var(2);
    let one = b.constant(1.0);
    let s1 = b.sum(vec![(z1, 1.0), (one, 1.0)]);
    let s2 = b.sum(vec![(z2, 6.0), (one, 1.0)]);
    let p12 = b.product(vec![s1, s2]);
    let pz = b.product(vec![z1, z2]);
    let inner = b.sum(vec![(p12, 0.1), (pz, -0.4)]);
    let s3 = b.sum(vec![(z3, 0.8), (one, 0.2)]);
    b.product(vec![inner, s3]);
    b.build()
}

/// Smooth decomposable mass circuit with the same distribution: the first
/// two variables factor out of the third.
fn example_mass_circuit() -> MassCircuit<f64> {
    let w = [0.1, 0.6, 0.1, 0.2];
    let mut nodes = vec![
        MassNode::Pos(0),
        MassNode::Neg(0),
        MassNode::Pos(1),
        MassNode::Neg(1),
    ];
    let states = [(1usize, 3usize), (1, 2), (0, 3), (0, 2)];
    let mut prods = Vec::new();
    for (a, b) in states {
        prods.push(nodes.len());
        nodes.push(MassNode::Product(vec![a, b]));
    }
    let pair = nodes.len();
    nodes.push(MassNode::Sum(prods.iter().zip(w).map(|(&p, wi)| (p, wi)).collect()));
    nodes.push(MassNode::Pos(2));
    nodes.push(MassNode::Neg(2));
    let x3 = nodes.len();
    nodes.push(MassNode::Sum(vec![(x3 - 2, 0.8), (x3 - 1, 0.2)]));
    nodes.push(MassNode::Product(vec![pair, x3]));
    let root = nodes.len() - 1;
    MassCircuit::new(nodes, root, 3).unwrap()
}

fn write_example_circuit(dir: &Path) -> std::path::PathBuf {
    let path = dir.join("example.pgc");
    std::fs::write(&path, circuit::to_text(&example_circuit()).unwrap()).unwrap();
    path
}

#[test]
fn marginal_queries() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_example_circuit(dir.path());
    let path = path.to_str().unwrap();

    let out = run(&["marginal", path, "--query", "X2=0,X3=0"]);
    assert!(out.status.success());
    let p = field(&stdout(&out), "probability").unwrap();
    assert!((p - 0.04).abs() < 1e-9, "got {p}");

    let out = run(&["marginal", path]);
    assert!(out.status.success());
    let p = field(&stdout(&out), "probability").unwrap();
    assert!((p - 1.0).abs() < 1e-9);

    let out = run(&["marginal", path, "--query", "X9=1"]);
    assert_eq!(out.status.code(), Some(1));
    let out = run(&["marginal", path, "--query", "X1=1,X1=0"]);
    assert_eq!(out.status.code(), Some(1));
    let out = run(&["marginal", path, "--query", "bogus"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn convert_and_query() {
    let dir = tempfile::tempdir().unwrap();
    let pmc = dir.path().join("example.pmc");
    std::fs::write(&pmc, pc::to_text(&example_mass_circuit()).unwrap()).unwrap();
    let out_path = dir.path().join("converted.pgc");
    let out = run(&[
        "convert",
        pmc.to_str().unwrap(),
        "--out",
        out_path.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    // the converted circuit answers the worked-example marginals
    let table = [0.02, 0.08, 0.12, 0.48, 0.02, 0.08, 0.04, 0.16];
    for (row, want) in table.iter().enumerate() {
        let query: Vec<String> = (0..3)
            .map(|i| format!("X{}={}", i + 1, (row >> (2 - i)) & 1))
            .collect();
        let out = run(&[
            "marginal",
            out_path.to_str().unwrap(),
            "--query",
            &query.join(","),
        ]);
        assert!(out.status.success());
        let p = field(&stdout(&out), "probability").unwrap();
        assert!((p - want).abs() < 1e-9, "row {row}: got {p}, want {want}");
    }

    // converting again after a round-trip keeps the joint
    let out = run(&["oracle-check", out_path.to_str().unwrap()]);
    assert!(out.status.success());
}

#[test]
fn convert_rejects_non_decomposable() {
    let dir = tempfile::tempdir().unwrap();
    let bad = MassCircuit::<f64>::new(
        vec![MassNode::Pos(0), MassNode::Neg(0), MassNode::Product(vec![0, 1])],
        2,
        1,
    )
    .unwrap();
    let pmc = dir.path().join("bad.pmc");
    std::fs::write(&pmc, pc::to_text(&bad).unwrap()).unwrap();
    let out = run(&["convert", pmc.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr).to_string();
    assert!(err.contains("2"), "error should name the offending node: {err}");
}

#[test]
fn oracle_check_flags_corruption() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_example_circuit(dir.path());
    let out = run(&["oracle-check", path.to_str().unwrap()]);
    assert!(out.status.success());
    assert!(stdout(&out).contains("semantics pass"));

    // corrupt one weight so the joint no longer normalizes
    let text = std::fs::read_to_string(&path).unwrap();
    let corrupted = text.replacen("8.0000000000000004e-1", "9.0000000000000002e-1", 1);
    assert_ne!(text, corrupted);
    let bad = dir.path().join("bad.pgc");
    std::fs::write(&bad, corrupted).unwrap();
    let out = run(&["oracle-check", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
    assert!(stdout(&out).contains("max_violation"));
}

/// Synthetic correlated binary rows for training tests.
fn write_csv(path: &Path, rows: usize) {
    let mut text = String::new();
    let mut state = 0x2545f4914f6cdd1du64;
    for _ in 0..rows {
        let mut bits = Vec::new();
        state ^= state << 13;
        state ^= state >> 7;
        state ^= state << 17;
        let a = state & 1 == 1;
        let b = if state & 2 == 2 { a } else { !a };
        let c = state & 4 == 4;
        for v in [a, b, c] {
            bits.push(if v { "1" } else { "0" });
        }
        text.push_str(&bits.join(","));
        text.push('\n');
    }
    std::fs::write(path, text).unwrap();
}

#[test]
fn train_is_deterministic_and_eval_agrees() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("toy.csv");
    write_csv(&csv, 120);
    let ckpt = dir.path().join("model.ckpt");
    let report = dir.path().join("model.report");
    let args = [
        "train",
        csv.to_str().unwrap(),
        "--K",
        "2",
        "--C",
        "1",
        "--epochs",
        "3",
        "--batch",
        "32",
        "--seed",
        "7",
    ];
    let out = run(&[
        &args[..],
        &["--out", ckpt.to_str().unwrap(), "--report", report.to_str().unwrap()],
    ]
    .concat());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(ckpt.exists() && report.exists());
    let report1 = std::fs::read(&report).unwrap();

    // same seed, fresh paths: byte-identical machine report and checkpoint
    let ckpt2 = dir.path().join("model2.ckpt");
    let report2_path = dir.path().join("model2.report");
    let out = run(&[
        &args[..],
        &["--out", ckpt2.to_str().unwrap(), "--report", report2_path.to_str().unwrap()],
    ]
    .concat());
    assert!(out.status.success());
    let report2 = std::fs::read(&report2_path).unwrap();
    assert_eq!(report1, report2);
    assert_eq!(std::fs::read(&ckpt).unwrap(), std::fs::read(&ckpt2).unwrap());

    // eval on the training split reproduces the report's train_ll
    let report_text = String::from_utf8(report1).unwrap();
    let train_ll = field(&report_text, "train_ll").unwrap();
    let out = run(&[
        "eval",
        ckpt.to_str().unwrap(),
        csv.to_str().unwrap(),
        "--split",
        "train",
        "--seed",
        "7",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let eval_ll = field(&stdout(&out), "avg_log_likelihood").unwrap();
    assert!((train_ll - eval_ll).abs() < 1e-10, "{train_ll} vs {eval_ll}");

    // variable-count mismatch is a usage error
    let csv4 = dir.path().join("four.csv");
    std::fs::write(&csv4, "0,1,0,1\n".repeat(20)).unwrap();
    let out = run(&["eval", ckpt.to_str().unwrap(), csv4.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));

    // unknown split name is a usage error
    let out = run(&[
        "eval",
        ckpt.to_str().unwrap(),
        csv.to_str().unwrap(),
        "--split",
        "bogus",
    ]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn train_reads_basket_files() {
    let dir = tempfile::tempdir().unwrap();
    let baskets = dir.path().join("toy.baskets");
    let mut text = String::new();
    for i in 0..60 {
        text.push_str(match i % 4 {
            0 => "1 2\n",
            1 => "3\n",
            2 => "1 2 3\n",
            _ => "\n",
        });
    }
    std::fs::write(&baskets, text).unwrap();
    let ckpt = dir.path().join("b.ckpt");
    let out = run(&[
        "train",
        baskets.to_str().unwrap(),
        "--baskets",
        "--items",
        "3",
        "--K",
        "1",
        "--C",
        "1",
        "--epochs",
        "2",
        "--batch",
        "16",
        "--out",
        ckpt.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(ckpt.exists());
}

#[test]
fn bad_data_exit_code() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("bad.csv");
    std::fs::write(&csv, "0,2,1\n".repeat(20)).unwrap();
    let out = run(&["train", csv.to_str().unwrap(), "--epochs", "1"]);
    assert_eq!(out.status.code(), Some(2));
}
