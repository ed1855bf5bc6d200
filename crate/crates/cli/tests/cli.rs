use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use plnnv_core::datagen::{toy_network, write_nnet};
use plnnv_core::network::canonicalize;
use plnnv_core::network::text::{read_box, read_network, read_property};
use plnnv_core::network::validate_counterexample;
use tempfile::TempDir;

fn plnnv(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_plnnv"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn field<'a>(text: &'a str, key: &str) -> Option<&'a str> {
    text.lines().find_map(|l| l.strip_prefix(key)?.strip_prefix(':').map(str::trim))
}

fn toy(dir: &TempDir) -> [String; 3] {
    assert!(plnnv(&["gen", "toy", "--out", "toy"], dir.path()).status.success());
    ["toy.plnn", "toy.prop", "toy.box"].map(String::from)
}

fn twinstream(dir: &Path, stem: &str, margin: &str, seed: &str) {
    let o = plnnv(
        &["gen", "twinstream", "--input-dim", "3", "--width", "3", "--depth", "3", "--margin", margin, "--seed", seed, "--out", stem],
        dir,
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn toy_is_unsat() {
    let dir = TempDir::new().unwrap();
    let [n, p, b] = toy(&dir);
    let o = plnnv(&["verify", &n, &p, &b, "--strategy", "babsr", "--mode", "decide"], dir.path());
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    assert_eq!(field(&out, "status"), Some("UNSAT"));
    let lb: f64 = field(&out, "global_lb").unwrap().parse().unwrap();
    assert!(lb > 0.0);
}

#[test]
fn toy_optimum_for_each_strategy() {
    let dir = TempDir::new().unwrap();
    let [n, p, b] = toy(&dir);
    for s in ["bab", "babsb", "relubab", "babsr", "babsrl"] {
        let o = plnnv(&["verify", &n, &p, &b, "--strategy", s, "--mode", "optimize"], dir.path());
        assert_eq!(o.status.code(), Some(0), "{s}");
        let lb: f64 = field(&stdout(&o), "global_lb").unwrap().parse().unwrap();
        assert!((lb - 1.0).abs() < 1e-4, "{s}: {lb}");
    }
}

#[test]
fn weaker_property_yields_valid_counterexample() {
    let dir = TempDir::new().unwrap();
    let [n, _, b] = toy(&dir);
    std::fs::write(dir.path().join("weak.prop"), "(atom 1 ; -3)\n").unwrap();
    let o = plnnv(&["verify", &n, "weak.prop", &b], dir.path());
    assert_eq!(o.status.code(), Some(1));
    let out = stdout(&o);
    assert_eq!(field(&out, "status"), Some("SAT"));
    let x: Vec<f64> = field(&out, "counterexample")
        .unwrap()
        .split_whitespace()
        .map(|t| t.parse().unwrap())
        .collect();
    let d = dir.path();
    let problem = canonicalize(
        &read_network(d.join(&n)).unwrap(),
        &read_property(d.join("weak.prop")).unwrap(),
        &read_box(d.join(&b)).unwrap(),
    )
    .unwrap();
    assert!(validate_counterexample(&problem, &x, 1e-7));
}

#[test]
fn tiny_timeout_exits_two_with_bounds() {
    let dir = TempDir::new().unwrap();
    let o = plnnv(
        &["gen", "random", "--input-dim", "5", "--widths", "20,20,1", "--bias", "0.3", "--seed", "3", "--out", "big"],
        dir.path(),
    );
    assert!(o.status.success());
    let o = plnnv(
        &["verify", "big.plnn", "big.prop", "big.box", "--mode", "optimize", "--eps", "1e-9", "--timeout", "0.001"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(2), "{}", stdout(&o));
    let out = stdout(&o);
    assert_eq!(field(&out, "status"), Some("TIMEOUT"));
    let lb: f64 = field(&out, "global_lb").unwrap().parse().unwrap();
    let ub: f64 = field(&out, "global_ub").unwrap().parse().unwrap();
    assert!(lb <= ub);
}

#[test]
fn errors_exit_three() {
    let dir = TempDir::new().unwrap();
    let [n, p, b] = toy(&dir);
    let missing = plnnv(&["verify", "nope.plnn", &p, &b], dir.path());
    assert_eq!(missing.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&missing.stderr).contains("nope.plnn"));
    assert_eq!(plnnv(&["verify", &n, &p, &b, "--strategy", "dfs"], dir.path()).status.code(), Some(3));
    assert_eq!(plnnv(&["verify", &n, &p], dir.path()).status.code(), Some(3));
    assert_eq!(plnnv(&["verify", &n, &p, &b, "--eps", "0"], dir.path()).status.code(), Some(3));
    std::fs::write(dir.path().join("bad.plnn"), "plnn 1\ninput 2\nlinear 1 2\n1 x\n0\n").unwrap();
    let bad = plnnv(&["verify", "bad.plnn", &p, &b], dir.path());
    assert_eq!(bad.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&bad.stderr).contains("line 4"));
    assert_eq!(plnnv(&["frobnicate"], dir.path()).status.code(), Some(3));
    assert_eq!(plnnv(&["--help"], dir.path()).status.code(), Some(0));
}

#[test]
fn policy_override() {
    let dir = TempDir::new().unwrap();
    let [n, p, b] = toy(&dir);
    for imb in ["none", "wk", "lp-all", "lp-one"] {
        let o = plnnv(&["verify", &n, &p, &b, "--strategy", "relubab", "--imb", imb, "--relax", "reluplex"], dir.path());
        assert_eq!(o.status.code(), Some(0), "{imb}");
    }
}

#[test]
fn seed_fixes_trace() {
    let dir = TempDir::new().unwrap();
    let o = plnnv(
        &["gen", "random", "--input-dim", "3", "--widths", "8,8,1", "--bias", "0.3", "--seed", "1", "--out", "r"],
        dir.path(),
    );
    assert!(o.status.success());
    let run = |name: &str| {
        let o = plnnv(
            &["verify", "r.plnn", "r.prop", "r.box", "--strategy", "babsr", "--mode", "optimize", "--seed", "7", "--trace", name],
            dir.path(),
        );
        assert!(o.status.code().unwrap() < 3);
        let text = std::fs::read_to_string(dir.path().join(name)).unwrap();
        let lines: Vec<String> = text
            .lines()
            .map(|l| l.rsplit_once(',').unwrap().0.to_string())
            .collect();
        lines
    };
    let a = run("a.csv");
    assert_eq!(a[0], "id,parent,lb,ub,branch");
    assert!(a.len() > 2);
    assert_eq!(a, run("b.csv"));
}

#[test]
fn gen_is_deterministic() {
    let dir = TempDir::new().unwrap();
    twinstream(dir.path(), "a", "10", "1");
    twinstream(dir.path(), "b", "10", "1");
    for ext in ["plnn", "prop", "box"] {
        let a = std::fs::read(dir.path().join(format!("a.{ext}"))).unwrap();
        let b = std::fs::read(dir.path().join(format!("b.{ext}"))).unwrap();
        assert_eq!(a, b, "{ext}");
    }
    twinstream(dir.path(), "c", "10", "2");
    assert_ne!(
        std::fs::read(dir.path().join("a.plnn")).unwrap(),
        std::fs::read(dir.path().join("c.plnn")).unwrap()
    );
}

#[test]
fn export_matches_golden() {
    let dir = TempDir::new().unwrap();
    let [n, p, b] = toy(&dir);
    let o = plnnv(&["export", &n, &p, &b, "--variant", "tjeng", "--out", "toy.lp"], dir.path());
    assert!(o.status.success());
    let golden = include_str!("../../core/tests/golden/toy_tjeng.lp");
    assert_eq!(std::fs::read_to_string(dir.path().join("toy.lp")).unwrap(), golden);
    let o = plnnv(&["export", &n, &p, &b, "--objective", "feasibility", "--bounds", "lp"], dir.path());
    assert!(o.status.success());
    assert!(stdout(&o).contains(" out: xh2_1 <= 0"));
}

#[test]
fn oracle_on_toy() {
    let dir = TempDir::new().unwrap();
    let [n, p, b] = toy(&dir);
    let o = plnnv(&["oracle", &n, &p, &b, "--samples", "100"], dir.path());
    assert!(o.status.success());
    let v: f64 = field(&stdout(&o), "min").unwrap().parse().unwrap();
    assert!((v - 1.0).abs() < 1e-6);
}

#[test]
fn nnet_input_needs_no_box() {
    let dir = TempDir::new().unwrap();
    let (net, dom, _) = toy_network();
    std::fs::write(dir.path().join("toy.nnet"), write_nnet(&net, &dom).unwrap()).unwrap();
    std::fs::write(dir.path().join("toy.prop"), "(atom 1 ; -5)\n").unwrap();
    let o = plnnv(&["verify", "toy.nnet", "toy.prop"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
}

fn read_csv(path: PathBuf) -> Vec<Vec<String>> {
    let mut r = csv::Reader::from_path(path).unwrap();
    r.records().map(|rec| rec.unwrap().iter().map(String::from).collect()).collect()
}

#[test]
fn bench_twinstream_manifest() {
    let dir = TempDir::new().unwrap();
    for (i, m) in ["1", "10", "100"].iter().enumerate() {
        twinstream(dir.path(), &format!("ts{i}"), m, &i.to_string());
    }
    let mut manifest = String::from("timeout = 60.0\n");
    for i in 0..3 {
        manifest.push_str(&format!(
            "[[instance]]\nname = \"ts{i}\"\nnet = \"ts{i}.plnn\"\nprop = \"ts{i}.prop\"\nbox = \"ts{i}.box\"\n"
        ));
    }
    std::fs::write(dir.path().join("m.toml"), manifest).unwrap();
    let o = plnnv(&["bench", "m.toml", "--out", "res.csv", "--cactus", "cactus.csv", "--jobs", "2"], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let rows = read_csv(dir.path().join("res.csv"));
    assert_eq!(rows.len(), 3);
    for (i, r) in rows.iter().enumerate() {
        assert_eq!((r[0].as_str(), r[1].as_str(), r[2].as_str()), (format!("ts{i}").as_str(), "babsr", "UNSAT"));
        let t = &r[3];
        assert_eq!(t.split('.').nth(1).map(str::len), Some(6));
    }
    let cactus = read_csv(dir.path().join("cactus.csv"));
    assert_eq!(cactus.len(), 3);
    let fr: Vec<f64> = cactus.iter().map(|r| r[2].parse().unwrap()).collect();
    assert!(fr.windows(2).all(|w| w[0] <= w[1]));
    assert_eq!(fr[2], 1.0);
}

#[test]
fn bench_keeps_going_after_failures() {
    let dir = TempDir::new().unwrap();
    let [n, p, b] = toy(&dir);
    let manifest = format!(
        "strategies = [\"bab\", \"babsr\"]\n[[instance]]\nname = \"missing\"\nnet = \"nope.plnn\"\nprop = \"{p}\"\nbox = \"{b}\"\n[[instance]]\nname = \"toy\"\nnet = \"{n}\"\nprop = \"{p}\"\nbox = \"{b}\"\n"
    );
    std::fs::write(dir.path().join("m.toml"), manifest).unwrap();
    let o = plnnv(&["bench", "m.toml"], dir.path());
    assert!(o.status.success());
    let mut r = csv::Reader::from_reader(o.stdout.as_slice());
    let rows: Vec<csv::StringRecord> = r.records().map(|x| x.unwrap()).collect();
    let status: Vec<(&str, &str, &str)> = rows.iter().map(|r| (&r[0], &r[1], &r[2])).collect();
    assert_eq!(
        status,
        vec![
            ("missing", "bab", "ERROR"),
            ("missing", "babsr", "ERROR"),
            ("toy", "bab", "UNSAT"),
            ("toy", "babsr", "UNSAT")
        ]
    );
    assert!(rows[0][8].contains("nope.plnn"));
}

#[test]
fn bench_empty_manifest() {
    let dir = TempDir::new().unwrap();
    std::fs::write(dir.path().join("m.toml"), "").unwrap();
    let o = plnnv(&["bench", "m.toml", "--cactus", "c.csv"], dir.path());
    assert!(o.status.success());
    assert_eq!(stdout(&o), "instance,strategy,status,wall_time,nodes,lp_calls,global_lb,global_ub,error\n");
    assert_eq!(std::fs::read_to_string(dir.path().join("c.csv")).unwrap(), "strategy,time,solved_fraction\n");
}
