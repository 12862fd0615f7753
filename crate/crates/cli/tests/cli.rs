use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_hittingdim"));
    c.env_remove("HITTINGDIM_OUT");
    c
}

fn run(args: &[&str], out: &Path) -> Output {
    bin().args(args).arg("--out").arg(out).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn read(dir: &Path, name: &str) -> String {
    std::fs::read_to_string(dir.join(name)).unwrap_or_else(|e| panic!("{}: {e}", dir.join(name).display()))
}

const SMALL_VERIFY: &[&str] = &["--set", "trials=20", "--set", "lipschitz_pairs=1000", "--set", "crosscheck_seeds=5"];

#[test]
fn verify_passes() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run(&[&["verify"], SMALL_VERIFY].concat(), tmp.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let text = read(tmp.path(), "verify.txt");
    assert!(text.lines().count() >= 8 && text.lines().all(|l| l.starts_with("PASS")), "{text}");
    assert!(read(tmp.path(), "manifest.toml").contains("experiment = \"verify\""));
}

#[test]
fn rational_rotation_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run(&["hit", "--set", "system=rotation:alpha=1/3"], tmp.path());
    assert_eq!(code(&o), 2);
    assert!(!tmp.path().join("hitting.csv").exists());
    let o = run(&["hit", "--set", "system=rotation:alpha=1/3,allow_rational=true", "--set", "trials=3", "--set", "n_max=1000"], tmp.path());
    assert_ne!(code(&o), 2);
}

#[test]
fn invalid_configs_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    for args in [
        vec!["hit", "--set", "bogus=1"],
        vec!["hit", "--set", "trials=many"],
        vec!["hit", "--set", "trials=0"],
        vec!["hit", "--set", "experiment=dim"],
        vec!["hit", "--set", "ladder=spiral"],
        vec!["hit", "--set", "tail=1"],
        vec!["hit", "--set", "x0=1.5"],
        vec!["dim", "--set", "system=mp:s=0.5", "--set", "measure=exact"],
        vec!["sbc", "--set", "trials=10", "--set", "phi=exponential:1,1"],
        vec!["sbc", "--set", "phi=wiggly"],
        vec!["corr", "--set", "phi_r_in=0.3"],
        vec!["verify", "--set", "system=doubling"],
        vec!["hit", "--config", "/nonexistent/config.toml"],
    ] {
        let o = run(&args, tmp.path());
        assert_eq!(code(&o), 2, "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
    }
}

#[test]
fn manifest_reruns_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    let o = run(&["hit", "--set", "trials=8", "--set", "x0=random", "--seed", "42"], &a);
    assert_eq!(code(&o), 0);
    let manifest = a.join("manifest.toml");
    let o = bin().args(["hit", "--config"]).arg(&manifest).arg("--out").arg(&b).output().unwrap();
    assert_eq!(code(&o), 0);
    for f in ["manifest.toml", "hitting.csv", "summary.csv", "report.txt"] {
        assert_eq!(read(&a, f), read(&b, f), "{f}");
    }
    assert!(read(&a, "manifest.toml").contains("seed = 42"));
}

#[test]
fn sbc_manifest_rerun_is_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    let args = ["sbc", "--set", "trials=30", "--set", "n_max=2000", "--set", "phi=exponential:0.004,1.5"];
    assert_eq!(code(&run(&args, &a)), 0);
    let o = bin().args(["sbc", "--config"]).arg(a.join("manifest.toml")).arg("--out").arg(&b).output().unwrap();
    assert_eq!(code(&o), 0);
    for f in ["sbc.csv", "variance.csv", "corollary.txt"] {
        assert_eq!(read(&a, f), read(&b, f), "{f}");
    }
}

#[test]
fn every_row_carries_a_seed() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(code(&run(&["hit", "--set", "trials=5", "--set", "n_max=100000"], tmp.path())), 0);
    for f in ["hitting.csv", "summary.csv"] {
        let text = read(tmp.path(), f);
        let mut lines = text.lines();
        let header: Vec<&str> = lines.next().unwrap().split(',').collect();
        let col = header.iter().position(|h| *h == "seed").expect("seed column");
        assert!(lines.all(|l| l.split(',').nth(col).unwrap().parse::<u64>().is_ok()), "{f}");
    }
}

#[test]
fn output_directory_precedence() {
    let tmp = tempfile::tempdir().unwrap();
    let env_dir = tmp.path().join("from-env");
    let o = bin().args(["verify"]).args(SMALL_VERIFY).env("HITTINGDIM_OUT", &env_dir).output().unwrap();
    assert_eq!(code(&o), 0);
    assert!(env_dir.join("verify.txt").exists());

    let cfg_dir = tmp.path().join("from-config");
    let cfg = tmp.path().join("run.toml");
    std::fs::write(&cfg, format!("experiment = \"verify\"\nout = {:?}\ntrials = 20\n", cfg_dir.to_str().unwrap())).unwrap();
    let o = bin().args(["verify", "--config"]).arg(&cfg).args(SMALL_VERIFY).env("HITTINGDIM_OUT", &env_dir).output().unwrap();
    assert_eq!(code(&o), 0);
    assert!(cfg_dir.join("verify.txt").exists());

    let flag_dir = tmp.path().join("from-flag");
    let o = bin().args(["verify", "--config"]).arg(&cfg).args(SMALL_VERIFY).arg("--out").arg(&flag_dir).output().unwrap();
    assert_eq!(code(&o), 0);
    assert!(flag_dir.join("verify.txt").exists());
}

#[test]
fn flags_override_file_and_set() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("run.toml");
    std::fs::write(&cfg, "seed = 5\ntrials = 4\nn_max = 100000\n").unwrap();
    let out = tmp.path().join("o");
    let o = bin()
        .args(["hit", "--config"])
        .arg(&cfg)
        .args(["--set", "seed=6", "--set", "trials=3", "--seed", "7", "--jobs", "1", "--out"])
        .arg(&out)
        .output()
        .unwrap();
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let manifest = read(&out, "manifest.toml");
    assert!(manifest.contains("seed = 7") && manifest.contains("trials = 3") && manifest.contains("n_max = 100000"), "{manifest}");
}

#[test]
fn degenerate_runs_exit_3() {
    let tmp = tempfile::tempdir().unwrap();
    // A period-two orbit never comes near 0.3 at these radii.
    let o = run(
        &["hit", "--set", "system=rotation:alpha=1/2,allow_rational=true", "--set", "trials=5", "--set", "n_max=1000"],
        tmp.path(),
    );
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(read(tmp.path(), "summary.csv").lines().skip(1).all(|l| l.ends_with(",true")));

    let o = run(&["corr", "--set", "m=200", "--set", "max_lag=20"], &tmp.path().join("corr"));
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(tmp.path().join("corr/correlation.csv").exists());
}
