use std::path::Path;
use std::process::{Command, Output};

fn ballheat(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ballheat"))
        .args(args)
        .env("BALLHEAT_THREADS", "1")
        .output()
        .expect("binary runs")
}

fn read(dir: &Path, name: &str) -> Vec<u8> {
    std::fs::read(dir.join(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn basis_passes_and_writes_summary() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = ballheat(&["basis", "--out", out, "--d", "2", "--mu", "0.5", "--seed", "7"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let summary = String::from_utf8(read(dir.path(), "basis_summary.txt")).unwrap();
    assert!(summary.contains("status = pass"));
    assert!(summary.contains("claim = "));
    assert!(summary.contains("check.gram_deviation = pass"));
    assert!(summary.contains("tolerance.gram_deviation = "));
    let csv = read(dir.path(), "basis_envelope.csv");
    assert!(!csv.contains(&b'\r'));
    assert!(csv.ends_with(b"\n"));
}

#[test]
fn same_seed_gives_identical_csv() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let c = tempfile::tempdir().unwrap();
    let args = |dir: &Path, seed: &'static str| {
        vec!["intrinsic".to_string(), "--out".into(), dir.to_str().unwrap().into(), "--seed".into(), seed.into()]
    };
    for (dir, seed) in [(a.path(), "11"), (b.path(), "11"), (c.path(), "12")] {
        let v = args(dir, seed);
        let o = ballheat(&v.iter().map(String::as_str).collect::<Vec<_>>());
        assert!(matches!(o.status.code(), Some(0 | 1)), "{}", stderr(&o));
    }
    let mut names: Vec<_> = std::fs::read_dir(a.path())
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .filter(|n| n.ends_with(".csv"))
        .collect();
    names.sort();
    assert!(!names.is_empty());
    let mut differs = false;
    for n in &names {
        assert_eq!(read(a.path(), n), read(b.path(), n), "{n}");
        differs |= read(a.path(), n) != read(c.path(), n);
    }
    assert!(differs, "a different seed should change some table");
}

#[test]
fn malformed_config_exits_2_with_line_number() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    std::fs::write(&cfg, "# run\nmodel.d = 3\nmodel.mu 1.5\n").unwrap();
    let o = ballheat(&["basis", "--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("line 3"), "{}", stderr(&o));

    std::fs::write(&cfg, "model.d = 2\nbasis.bogus = 1\n").unwrap();
    let o = ballheat(&["basis", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("line 2"), "{}", stderr(&o));
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(ballheat(&["nonsense"]).status.code(), Some(2));
    assert_eq!(ballheat(&["basis", "--d", "5"]).status.code(), Some(2));
    assert_eq!(ballheat(&["basis", "--mu", "-3"]).status.code(), Some(2));
    assert_eq!(ballheat(&["basis", "--set", "basis.n_max"]).status.code(), Some(2));
}

#[test]
fn failed_check_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let o = ballheat(&["basis", "--out", dir.path().to_str().unwrap(), "--set", "basis.tol=0"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("failure basis.gram_deviation"), "{}", stderr(&o));
    let summary = String::from_utf8(read(dir.path(), "basis_summary.txt")).unwrap();
    assert!(summary.contains("status = fail"));
    assert!(summary.contains("failure = gram_deviation"));
}

#[test]
fn config_subcommand_prints_resolved_keys() {
    let o = ballheat(&["config", "--d", "3", "--set", "gaussian.pairs=200"]);
    assert_eq!(o.status.code(), Some(0));
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.contains("model.d = 3"));
    assert!(text.contains("gaussian.pairs = 200"));
}
