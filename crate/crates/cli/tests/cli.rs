use std::path::Path;
use std::process::{Command, Output};

fn fairbench(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fairbench"))
        .args(args)
        .current_dir(cwd)
        .env("FAIRBENCH_DATA_DIR", cwd.join("data"))
        .output()
        .unwrap()
}

fn text(bytes: &[u8]) -> String {
    String::from_utf8_lossy(bytes).into_owned()
}

#[test]
fn prep_then_bench_on_synthetic_data() {
    let tmp = tempfile::tempdir().unwrap();
    let prep = fairbench(&["prep", "--dataset", "synthetic", "--method", "RW", "--out", "run"], tmp.path());
    assert!(prep.status.success(), "{}", text(&prep.stderr));
    let table = text(&prep.stdout);
    assert!(table.starts_with("dataset,method,"), "{table}");
    assert_eq!(table.lines().count(), 3);
    assert!(table.lines().nth(2).unwrap().contains(",1.000,0.000,"), "{table}");

    let bench = fairbench(&["bench", "--from", "run/summary.json", "--select-metric", "DI"], tmp.path());
    assert!(bench.status.success(), "{}", text(&bench.stderr));
    let out = text(&bench.stdout);
    assert!(out.contains("original") && out.contains("processed"), "{out}");
    for name in ["sweep_original_test.csv", "sweep_processed.svg", "summary.json"] {
        assert!(tmp.path().join("run").join(name).is_file(), "{name}");
    }
}

#[test]
fn unknown_method_parameter_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let out = fairbench(
        &["prep", "--dataset", "synthetic", "--method", "DIR", "--param", "strength=2"],
        tmp.path(),
    );
    assert!(!out.status.success());
    assert!(text(&out.stderr).contains("strength"), "{}", text(&out.stderr));
}

#[test]
fn batch_reports_failures_through_exit_status() {
    let tmp = tempfile::tempdir().unwrap();
    std::fs::write(
        tmp.path().join("bad.yaml"),
        "name: bad\ndata: nowhere.csv\nlabel: y\nfavorable: 1\nprotected: s\n\
         sensitive_attributes:\n  s: { column: s, privileged: [1] }\nnumeric: [x]\n",
    )
    .unwrap();
    std::fs::write(
        tmp.path().join("matrix.yaml"),
        "datasets: [synthetic, bad.yaml]\nmethods: [RW]\noutput: results\n",
    )
    .unwrap();
    let out = fairbench(&["batch", "--config", "matrix.yaml", "--parallelism", "2"], tmp.path());
    assert!(!out.status.success());
    let stdout = text(&out.stdout);
    assert!(stdout.contains("1 succeeded, 1 failed"), "{stdout}");
    assert!(tmp.path().join("results/batch_report.json").is_file());
}

#[test]
fn prepare_data_without_raw_files_fails() {
    let tmp = tempfile::tempdir().unwrap();
    let out = fairbench(&["prepare-data"], tmp.path());
    assert!(!out.status.success());
    assert!(text(&out.stderr).contains("no raw dataset files"), "{}", text(&out.stderr));
}
