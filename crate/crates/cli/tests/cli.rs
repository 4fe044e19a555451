use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const SMALL: &str = "\
# tiny scenario on top of the desk preset
scenario.n_bs = 2
scenario.n_ris = 6
scenario.n_users = 2
scenario.rho = 100
scenario.train_samples = 32
scenario.test_samples = 8
risnet.layers = 3
risnet.branch_dim = 4
train.iterations = 12
train.batch_size = 8
train.eval_every = 0
train.checkpoint_every = 5
bcd.grid_size = 4
bcd.max_sweeps = 2
eval.rho = 10, 100
";

fn setup(dir: &Path) {
    fs::write(dir.join("small.cfg"), SMALL).unwrap();
}

fn risnet(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_risnet"))
        .current_dir(dir)
        .args(["--preset", "desk", "--config", "small.cfg"])
        .args(args)
        .output()
        .unwrap()
}

fn ok(dir: &Path, args: &[&str]) -> Output {
    let out = risnet(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn read(dir: &Path, name: &str) -> Vec<u8> {
    fs::read(dir.join(name)).unwrap()
}

fn log_rows(dir: &Path) -> Vec<Vec<f64>> {
    let text = fs::read_to_string(dir.join("out/train_log.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("iteration,mean_wsr,grad_norm,wall_ms"));
    lines
        .map(|l| l.split(',').map(|x| x.parse().unwrap()).collect())
        .collect()
}

#[test]
fn gen_is_bitwise_repeatable() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for d in [a.path(), b.path()] {
        setup(d);
        ok(d, &["gen"]);
    }
    for f in ["data/train.risd", "data/test.risd"] {
        assert_eq!(read(a.path(), f), read(b.path(), f));
    }
    ok(b.path(), &["gen", "--seed", "9"]);
    assert_ne!(read(a.path(), "data/train.risd"), read(b.path(), "data/train.risd"));
}

#[test]
fn train_writes_one_log_row_per_iteration_for_both_variants() {
    for variant in ["pv", "pi"] {
        let dir = tempfile::tempdir().unwrap();
        let d = dir.path();
        setup(d);
        ok(d, &["gen"]);
        ok(d, &["train", "--variant", variant]);
        let rows = log_rows(d);
        assert_eq!(rows.len(), 12);
        for (i, r) in rows.iter().enumerate() {
            assert_eq!(r[0] as usize, i + 1);
            assert!(r[1].is_finite() && r[1] >= 0.0);
        }
        ok(d, &["eval", "--variant", variant]);
        let report = fs::read_to_string(d.join("out/eval.csv")).unwrap();
        assert!(report.contains(&format!("risnet_{variant}")));
    }
}

#[test]
fn resumed_training_matches_uninterrupted_run() {
    let (full, split) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for d in [full.path(), split.path()] {
        setup(d);
        ok(d, &["gen"]);
    }
    ok(full.path(), &["train"]);
    ok(split.path(), &["train", "--train.iterations", "5"]);
    ok(split.path(), &["train", "--resume"]);

    let (a, b) = (log_rows(full.path()), log_rows(split.path()));
    assert_eq!(a.len(), b.len());
    for (x, y) in a.iter().zip(&b) {
        assert_eq!(x[0], y[0]);
        assert!((x[1] - y[1]).abs() < 1e-10);
        assert!((x[2] - y[2]).abs() <= 1e-10 * x[2].max(1.0));
    }
    assert_eq!(
        read(full.path(), "out/model.risp"),
        read(split.path(), "out/model.risp")
    );
}

#[test]
fn resume_rejects_a_log_that_disagrees_with_the_optimizer_state() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    setup(d);
    ok(d, &["gen"]);
    ok(d, &["train", "--train.iterations", "5"]);
    let text = fs::read_to_string(d.join("out/train_log.csv")).unwrap();
    let truncated: Vec<&str> = text.lines().take(3).collect();
    fs::write(d.join("out/train_log.csv"), truncated.join("\n") + "\n").unwrap();
    assert_eq!(code(&risnet(d, &["train", "--resume"])), 2);
}

#[test]
fn eval_reports_are_repeatable_and_bcd_is_optional() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    setup(d);
    ok(d, &["gen"]);
    ok(d, &["train"]);

    ok(d, &["eval"]);
    let plain = fs::read_to_string(d.join("out/eval.csv")).unwrap();
    assert!(plain.starts_with("sample_id,method,rho,wsr\n"));
    assert!(!plain.contains(",bcd,"));
    // 8 samples + 1 summary, two methods, two SNRs
    assert_eq!(plain.lines().count(), 1 + 9 * 2 * 2);

    ok(d, &["eval", "--with-bcd"]);
    let first = read(d, "out/eval.csv");
    ok(d, &["eval", "--with-bcd", "--threads", "1"]);
    let second = read(d, "out/eval.csv");
    assert_eq!(first, second);
    let text = String::from_utf8(first).unwrap();
    assert_eq!(text.lines().filter(|l| l.contains(",bcd,")).count(), 18);
    assert!(text.lines().any(|l| l.starts_with("mean,bcd,100,")));

    ok(d, &["eval", "--rho", "1000"]);
    let only = fs::read_to_string(d.join("out/eval.csv")).unwrap();
    assert!(only.lines().skip(1).all(|l| l.split(',').nth(2) == Some("1000")));
}

#[test]
fn config_errors_exit_with_code_two() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    setup(d);
    let out = risnet(d, &["gen", "--set", "scenario.n_riss=4"]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("scenario.n_riss"));

    fs::write(d.join("bad.cfg"), "train.batch_size = 8\nnot.a.key = 1\n").unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_risnet"))
        .current_dir(d)
        .args(["gen", "--config", "bad.cfg"])
        .output()
        .unwrap();
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("bad.cfg:2"));

    assert_eq!(code(&risnet(d, &["gen", "--scenario.n_users", "0"])), 2);
    assert!(!d.join("data").exists(), "no side effects after a config error");
}

#[test]
fn dataset_mismatch_and_missing_files() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    setup(d);
    assert_eq!(code(&risnet(d, &["train"])), 3);
    ok(d, &["gen"]);
    assert_eq!(code(&risnet(d, &["train", "--scenario.n_ris", "7"])), 2);
    assert!(!d.join("out/model.risp").exists());

    fs::write(d.join("data/train.risd"), b"RISD garbage").unwrap();
    assert_eq!(code(&risnet(d, &["train"])), 3);
}

#[test]
fn eval_rejects_a_checkpoint_of_the_other_variant() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    setup(d);
    ok(d, &["gen"]);
    ok(d, &["train", "--variant", "pv"]);
    let out = risnet(d, &["eval", "--variant", "pi"]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("pv"));
}

#[test]
fn report_of_no_inputs_is_header_only() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    setup(d);
    ok(d, &["report", "--out", "series.csv"]);
    assert_eq!(
        fs::read_to_string(d.join("series.csv")).unwrap(),
        "method,rho,mean_wsr\n"
    );
}

#[test]
fn report_aggregates_three_snrs_and_four_methods() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    setup(d);
    let methods = ["risnet_pi", "risnet_pv", "bcd", "random"];
    let rhos = [1e11, 5e11, 1e12];
    let mut csv = String::from("sample_id,method,rho,wsr\n");
    let mut expected = Vec::new();
    for (mi, m) in methods.iter().enumerate() {
        for (ri, rho) in rhos.iter().enumerate() {
            let values: Vec<f64> = (0..5)
                .map(|s| 0.1 * (mi + 1) as f64 + 0.37 * s as f64 + ri as f64)
                .collect();
            for (s, v) in values.iter().enumerate() {
                csv.push_str(&format!("{s},{m},{rho},{v}\n"));
            }
            expected.push((m.to_string(), *rho, values.iter().sum::<f64>() / 5.0));
        }
    }
    // summary rows from an eval report are ignored
    csv.push_str("mean,bcd,1e11,999\n");
    let (first, second) = csv.split_at(csv.len() / 2);
    let cut = first.rfind('\n').unwrap() + 1;
    fs::write(d.join("a.csv"), &csv[..cut]).unwrap();
    fs::write(
        d.join("b.csv"),
        format!("sample_id,method,rho,wsr\n{}{second}", &first[cut..]),
    )
    .unwrap();
    ok(d, &["report", "a.csv", "b.csv", "--out", "series.csv"]);

    let text = fs::read_to_string(d.join("series.csv")).unwrap();
    let rows: Vec<&str> = text.lines().skip(1).collect();
    assert_eq!(rows.len(), 12);
    for (row, (m, rho, mean)) in rows.iter().zip(&expected) {
        let f: Vec<&str> = row.split(',').collect();
        assert_eq!(f[0], m);
        assert_eq!(f[1].parse::<f64>().unwrap(), *rho);
        assert!((f[2].parse::<f64>().unwrap() - mean).abs() < 1e-12);
    }
}

#[test]
fn malformed_report_input_names_the_line() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    setup(d);
    fs::write(
        d.join("bad.csv"),
        "sample_id,method,rho,wsr\n0,bcd,10,1.5\n1,bcd,ten,2\n",
    )
    .unwrap();
    let out = risnet(d, &["report", "bad.csv", "--out", "s.csv"]);
    assert_eq!(code(&out), 3);
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("bad.csv") && err.contains('3'), "{err}");
}
