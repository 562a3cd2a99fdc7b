use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn hicov(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hicov"))
        .args(args)
        .current_dir(dir)
        .env_remove("HICOV_SEED")
        .output()
        .unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn simulate_then_analyze() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let sim = hicov(
        &["simulate", "--n", "195", "--d", "9", "--rho-gamma", "0.5", "--num-blocks", "4", "--seed", "3", "--out", "path.csv"],
        d,
    );
    assert!(sim.status.success(), "{}", stderr(&sim));
    for f in ["path.csv", "path.truth.json", "path.scenario.json", "path.config.toml"] {
        assert!(d.join(f).exists(), "{f} missing");
    }
    let header = fs::read_to_string(d.join("path.csv")).unwrap();
    assert!(header.starts_with("Y1,Y2,Y3,Y4,Y5,Y6,Y7,Y8,F\n"));
    assert_eq!(header.lines().count(), 197);

    fs::write(
        d.join("sectors.csv"),
        "asset,sector\nY1,A\nY2,A\nY3,B\nY4,B\nY5,C\nY6,C\nY7,D\nY8,E\n",
    )
    .unwrap();
    let out = hicov(
        &[
            "analyze", "--prices", "path.csv", "--factor", "F", "--sectors", "sectors.csv", "--alpha", "0.05", "--B", "99",
            "--seed", "5", "--out", "report",
        ],
        d,
    );
    assert!(out.status.success(), "{}", stderr(&out));
    let groups: serde_json::Value = serde_json::from_str(&fs::read_to_string(d.join("report/groups.json")).unwrap()).unwrap();
    // 5 sectors, two of them singletons: 15 - 2 groups
    assert_eq!(groups[0]["groups"].as_array().unwrap().len(), 13);
    assert_eq!(groups[0]["method"], "RW");
    let meta: serde_json::Value = serde_json::from_str(&fs::read_to_string(d.join("report/meta.json")).unwrap()).unwrap();
    assert_eq!(meta["n"], 195);
    assert_eq!(meta["B"], 99);
    assert!(d.join("report/matrix.csv").exists());
    let config = fs::read_to_string(d.join("report/config.toml")).unwrap();
    assert!(config.contains("seed = 5"));

    let again = hicov(
        &[
            "analyze", "--prices", "path.csv", "--factor", "F", "--sectors", "sectors.csv", "--B", "99", "--seed", "5", "--out",
            "report2",
        ],
        d,
    );
    assert!(again.status.success());
    assert_eq!(
        fs::read(d.join("report/groups.json")).unwrap(),
        fs::read(d.join("report2/groups.json")).unwrap()
    );
}

#[test]
fn test_subcommand_writes_pair_table() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert!(hicov(&["simulate", "--n", "78", "--d", "5", "--num-blocks", "2", "--out", "p.csv"], d).status.success());
    let out = hicov(&["test", "--prices", "p.csv", "--factor", "F", "--method", "holm,rw", "--B", "49", "--out", "t"], d);
    assert!(out.status.success(), "{}", stderr(&out));
    let table = fs::read_to_string(d.join("t/pairs.csv")).unwrap();
    let mut lines = table.lines();
    assert_eq!(
        lines.next().unwrap(),
        "asset_i,asset_j,that,vhat,t,clamped,rejected_Holm,adjusted_p_Holm,rejected_RW,adjusted_p_RW"
    );
    assert_eq!(lines.count(), 6);
}

#[test]
fn mc_fwer_is_reproducible_and_echoes_config() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("desk.toml"), "n_grid = [39]\nrho_gamma_grid = [0.5]\nd = 9\nnum_blocks = 4\nM = 20\nB = 19\n").unwrap();
    for out in ["a", "b"] {
        let o = hicov(&["mc-fwer", "--config", "desk.toml", "--seed", "7", "--out", out], d);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    assert_eq!(fs::read(d.join("a/fwer.csv")).unwrap(), fs::read(d.join("b/fwer.csv")).unwrap());

    // rerunning from the echoed config gives the same table
    let o = hicov(&["mc-fwer", "--config", "a/config.toml", "--out", "c"], d);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(fs::read(d.join("a/fwer.csv")).unwrap(), fs::read(d.join("c/fwer.csv")).unwrap());

    let o = hicov(&["mc-power", "--config", "desk.toml", "--set", "M=5", "--out", "p"], d);
    assert!(o.status.success(), "{}", stderr(&o));
    let power = fs::read_to_string(d.join("p/power.csv")).unwrap();
    assert!(power.starts_with("rho_gamma,method,n=39\n0.50,Holm,"));
    let echoed = fs::read_to_string(d.join("p/config.toml")).unwrap();
    assert!(echoed.contains("m = 5"));
}

#[test]
fn seed_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("c.toml"), "n_grid = [39]\nrho_gamma_grid = [0.5]\nd = 5\nnum_blocks = 2\nM = 2\nB = 9\nseed = 11\n").unwrap();
    let run = |args: &[&str], env: Option<&str>| {
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_hicov"));
        cmd.args(args).current_dir(d).env_remove("HICOV_SEED");
        if let Some(v) = env {
            cmd.env("HICOV_SEED", v);
        }
        assert!(cmd.output().unwrap().status.success());
    };
    let seed_of = |out: &str| {
        let t: toml::Table = toml::from_str(&fs::read_to_string(d.join(out).join("config.toml")).unwrap()).unwrap();
        t["seed"].as_integer().unwrap()
    };
    run(&["mc-fwer", "--config", "c.toml", "--seed", "3", "--out", "flag"], Some("99"));
    run(&["mc-fwer", "--config", "c.toml", "--out", "file"], Some("99"));
    fs::write(d.join("noseed.toml"), "n_grid = [39]\nrho_gamma_grid = [0.5]\nd = 5\nnum_blocks = 2\nM = 2\nB = 9\n").unwrap();
    run(&["mc-fwer", "--config", "noseed.toml", "--out", "env"], Some("99"));
    run(&["mc-fwer", "--config", "noseed.toml", "--out", "default"], None);
    assert_eq!(
        (seed_of("flag"), seed_of("file"), seed_of("env"), seed_of("default")),
        (3, 11, 99, 0)
    );
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(hicov(&["frobnicate"], d).status.code(), Some(1));
    assert_eq!(hicov(&["analyze", "--bogus"], d).status.code(), Some(1));
    assert_eq!(hicov(&["mc-fwer", "--set", "nonsense=1", "--out", "x"], d).status.code(), Some(1));
    assert_eq!(hicov(&["analyze", "--method", "magic", "--prices", "p.csv", "--out", "x"], d).status.code(), Some(1));
    let missing = hicov(&["analyze", "--prices", "nope.csv", "--factor", "F", "--out", "x"], d);
    assert_eq!(missing.status.code(), Some(2));
    fs::write(d.join("p.csv"), "A,B,C\n1,2,3\n1,2,3\n1,2,3\n").unwrap();
    let no_factor = hicov(&["analyze", "--prices", "p.csv", "--factor", "SPY", "--out", "x"], d);
    assert_eq!(no_factor.status.code(), Some(2));
    assert!(stderr(&no_factor).contains("A, B, C"));
    assert_eq!(hicov(&["--help"], d).status.code(), Some(0));
}

#[test]
fn selftest_passes() {
    let dir = tempfile::tempdir().unwrap();
    let o = hicov(&["selftest"], dir.path());
    assert!(o.status.success());
    let text = String::from_utf8_lossy(&o.stdout);
    assert!(text.lines().all(|l| l.starts_with("PASS")));
}
