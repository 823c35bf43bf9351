use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_swipt-lqg");

fn fig2() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("examples/fig2.cfg")
}

fn golden(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name)
}

fn run(config: &Path, out: &Path, extra: &[&str]) -> Output {
    Command::new(BIN)
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .args(extra)
        .output()
        .expect("binary runs")
}

fn body(csv: &str) -> Vec<Vec<String>> {
    csv.lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

fn write_variant(dir: &Path, from: &str, to: &str) -> PathBuf {
    let text = fs::read_to_string(fig2()).unwrap();
    assert!(text.contains(from), "fixture text `{from}` not in config");
    let path = dir.join("variant.cfg");
    fs::write(&path, text.replace(from, to)).unwrap();
    path
}

fn check_golden(produced: &Path, name: &str) {
    let got = fs::read_to_string(produced).unwrap();
    let path = golden(name);
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        fs::create_dir_all(path.parent().unwrap()).unwrap();
        fs::write(&path, &got).unwrap();
    }
    let want = fs::read_to_string(&path).unwrap();
    assert_eq!(got, want, "{name} differs from golden copy");
}

#[test]
fn sweep_matches_golden_and_locked_midpoint() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&fig2(), dir.path(), &["--mode", "sweep", "--alpha-step", "0.1"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let path = dir.path().join("sweep.csv");
    check_golden(&path, "sweep.csv");

    let rows = body(&fs::read_to_string(&path).unwrap());
    assert_eq!(rows.len(), 11);
    assert_eq!(rows[0][3], "inf");
    assert_eq!(rows[0][6], "control");
    assert_eq!(rows[10][6], "estimation");
    let mid = rows.iter().find(|r| r[0] == "0.5").unwrap();
    let (j_min, j_max): (f64, f64) = (mid[3].parse().unwrap(), mid[4].parse().unwrap());
    assert!((j_min - 4.109_523_810_506_426).abs() < 1e-9, "{j_min}");
    assert!((j_max - 6.289_598_059_543_875).abs() < 1e-9, "{j_max}");
}

#[test]
fn montecarlo_is_byte_stable_across_threads() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["--mode", "montecarlo", "--alpha-step", "0.25", "--horizon", "40", "--runs", "8"];
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let one = run(&fig2(), &a, &[&args[..], &["--threads", "1"]].concat());
    let four = run(&fig2(), &b, &[&args[..], &["--threads", "4"]].concat());
    assert!(one.status.success() && four.status.success());
    let (x, y) = (fs::read(a.join("montecarlo.csv")).unwrap(), fs::read(b.join("montecarlo.csv")).unwrap());
    assert_eq!(x, y);
    check_golden(&a.join("montecarlo.csv"), "montecarlo.csv");
    let text = String::from_utf8(x).unwrap();
    assert!(text.starts_with("# swipt-lqg "));
    assert!(text.lines().nth(1).unwrap().contains("seed=1"));
    assert!(text.contains("\nalpha,j_emp,std_err,diverged_fraction,eta_hat,gamma_hat,"));
}

#[test]
fn optimize_agrees_with_sweep_argmin() {
    let dir = tempfile::tempdir().unwrap();
    let crit = run(&fig2(), dir.path(), &["--mode", "critical"]);
    assert!(crit.status.success());
    let rows = body(&fs::read_to_string(dir.path().join("critical.csv")).unwrap());
    let lo: f64 = rows[0][4].parse().unwrap();
    let hi: f64 = rows[0][5].parse().unwrap();

    let opt = run(&fig2(), dir.path(), &["--mode", "optimize", "--delta", "0.05"]);
    assert!(opt.status.success());
    let stdout = String::from_utf8(opt.stdout).unwrap();
    let alpha_star: f64 = stdout.lines().next().unwrap().split_whitespace().nth(1).unwrap().parse().unwrap();

    let sweep = run(
        &fig2(),
        dir.path(),
        &[
            "--mode",
            "sweep",
            "--alpha-min",
            &(lo + 0.05).to_string(),
            "--alpha-max",
            &(hi - 0.05).to_string(),
            "--alpha-step",
            "0.05",
        ],
    );
    assert!(sweep.status.success());
    let rows = body(&fs::read_to_string(dir.path().join("sweep.csv")).unwrap());
    let argmin = rows
        .iter()
        .filter(|r| r[5] == "true")
        .map(|r| (r[0].parse::<f64>().unwrap(), r[4].parse::<f64>().unwrap()))
        .fold((f64::NAN, f64::INFINITY), |best, p| if p.1 < best.1 { p } else { best });
    assert!((argmin.0 - alpha_star).abs() < 1e-9, "{} vs {alpha_star}", argmin.0);

    let profile = body(&fs::read_to_string(dir.path().join("optimize.csv")).unwrap());
    assert_eq!(profile.len(), rows.len());
}

#[test]
fn config_errors_exit_two_and_list_everything() {
    let dir = tempfile::tempdir().unwrap();
    let text = fs::read_to_string(fig2())
        .unwrap()
        .replace("r = [[1.0]]\n", "")
        .replace("gain_unit = \"db\"", "gain_unit = \"furlongs\"");
    let cfg = dir.path().join("bad.cfg");
    fs::write(&cfg, text).unwrap();
    let out = run(&cfg, &dir.path().join("o"), &[]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("2 validation error(s)") && err.contains("plant.r") && err.contains("furlongs"), "{err}");
    assert!(!dir.path().join("o").exists());
}

#[test]
fn parse_error_reports_position() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_variant(dir.path(), "[bpsk]\n", "[bpsk]\nbogus = 1\n");
    let out = run(&cfg, dir.path(), &[]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8(out.stderr).unwrap().contains("line 26, column 1"));
}

#[test]
fn unknown_mode_is_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&fig2(), dir.path(), &["--mode", "dance"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn infeasible_region_exits_three_without_output() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_variant(dir.path(), "a = [[1.2]]", "a = [[3.0]]");
    let out_dir = dir.path().join("o");
    for mode in ["critical", "optimize"] {
        let out = run(&cfg, &out_dir, &["--mode", mode]);
        assert_eq!(out.status.code(), Some(3), "{mode}");
    }
    assert!(!out_dir.exists());
}

#[test]
fn numerical_failure_exits_four() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_variant(dir.path(), "gain_mode = \"stationary\"", "gain_mode = \"stationary\"\nmax_iter = 3");
    let out = run(&cfg, &dir.path().join("o"), &["--mode", "critical"]);
    assert_eq!(out.status.code(), Some(4));
    assert!(String::from_utf8(out.stderr).unwrap().contains("numerical failure"));
    assert!(!dir.path().join("o").exists());
}

#[test]
fn flags_are_echoed_in_metadata() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&fig2(), dir.path(), &["--mode", "sweep", "--alpha-min", "0.4", "--alpha-max", "0.6", "--alpha-step", "0.02", "--seed", "9"]);
    assert!(out.status.success());
    let text = fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    assert!(text.contains("# config: alpha_min = 0.4"));
    assert!(text.contains("# config: mode = \"sweep\""));
    assert!(text.contains(" seed=9"));
    assert_eq!(body(&text).len(), 11);
}
