use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::Args;
use plnnv_core::bab::{Mode, Strategy};
use serde::Deserialize;

#[derive(Args, Debug)]
pub struct BenchArgs {
    /// TOML manifest listing the instances.
    pub manifest: PathBuf,
    /// Results CSV; standard output when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Cactus CSV: per strategy, sorted solve times against the cumulative solved fraction.
    #[arg(long)]
    pub cactus: Option<PathBuf>,
    /// Instances run concurrently, each in its own process.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
}

#[derive(Debug, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    /// Strategies for instances that list none.
    #[serde(default)]
    pub strategies: Vec<String>,
    /// Seconds per (instance, strategy) run.
    pub timeout: Option<f64>,
    pub mode: Option<String>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, rename = "instance")]
    pub instances: Vec<Instance>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Instance {
    pub name: Option<String>,
    pub net: PathBuf,
    pub prop: PathBuf,
    pub r#box: Option<PathBuf>,
    pub strategies: Option<Vec<String>>,
    pub timeout: Option<f64>,
}

pub const RESULTS_HEADER: [&str; 9] = [
    "instance", "strategy", "status", "wall_time", "nodes", "lp_calls", "global_lb", "global_ub", "error",
];
pub const CACTUS_HEADER: [&str; 3] = ["strategy", "time", "solved_fraction"];

struct Job {
    instance: String,
    strategy: String,
    args: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub instance: String,
    pub strategy: String,
    pub status: String,
    pub wall_time: f64,
    pub nodes: String,
    pub lp_calls: String,
    pub global_lb: String,
    pub global_ub: String,
    pub error: String,
}

impl Row {
    fn solved(&self) -> bool {
        self.status == "UNSAT" || self.status == "SAT"
    }
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

fn jobs(manifest: &Manifest, base: &Path) -> Result<Vec<Job>> {
    let mode: Mode = manifest.mode.as_deref().unwrap_or("decide").parse()?;
    let mode = match mode {
        Mode::Decide => "decide",
        Mode::Optimize => "optimize",
    };
    let mut out = Vec::new();
    for (i, inst) in manifest.instances.iter().enumerate() {
        let name = inst.name.clone().unwrap_or_else(|| format!("instance{}", i + 1));
        let strategies = match (&inst.strategies, manifest.strategies.is_empty()) {
            (Some(s), _) => s.clone(),
            (None, false) => manifest.strategies.clone(),
            (None, true) => vec![Strategy::BabSr.name().to_string()],
        };
        for s in strategies {
            let strategy: Strategy = s.parse()?;
            let mut args = vec![
                "verify".to_string(),
                resolve(base, &inst.net).display().to_string(),
                resolve(base, &inst.prop).display().to_string(),
            ];
            if let Some(b) = &inst.r#box {
                args.push(resolve(base, b).display().to_string());
            }
            args.extend(["--strategy", strategy.name(), "--mode", mode].map(String::from));
            args.extend(["--seed".to_string(), manifest.seed.to_string()]);
            if let Some(t) = inst.timeout.or(manifest.timeout) {
                args.extend(["--timeout".to_string(), t.to_string()]);
            }
            out.push(Job {
                instance: name.clone(),
                strategy: strategy.name().to_string(),
                args,
            });
        }
    }
    Ok(out)
}

fn run_job(exe: &Path, job: &Job) -> Row {
    let start = Instant::now();
    let mut row = Row {
        instance: job.instance.clone(),
        strategy: job.strategy.clone(),
        status: "ERROR".into(),
        wall_time: 0.0,
        nodes: String::new(),
        lp_calls: String::new(),
        global_lb: String::new(),
        global_ub: String::new(),
        error: String::new(),
    };
    let output = match Command::new(exe).args(&job.args).output() {
        Ok(o) => o,
        Err(e) => {
            row.error = format!("could not start verifier: {e}");
            return row;
        }
    };
    row.wall_time = start.elapsed().as_secs_f64();
    let stdout = String::from_utf8_lossy(&output.stdout);
    let fields: BTreeMap<&str, &str> = stdout
        .lines()
        .filter_map(|l| l.split_once(':'))
        .map(|(k, v)| (k.trim(), v.trim()))
        .collect();
    match output.status.code() {
        Some(0..=2) if fields.contains_key("status") => {
            row.status = fields["status"].to_string();
            let get = |k: &str| fields.get(k).map(|v| v.to_string()).unwrap_or_default();
            row.nodes = get("nodes");
            row.lp_calls = get("lp_calls");
            row.global_lb = get("global_lb");
            row.global_ub = get("global_ub");
            if let Some(t) = fields.get("wall_time").and_then(|t| t.parse().ok()) {
                row.wall_time = t;
            }
        }
        code => {
            let stderr = String::from_utf8_lossy(&output.stderr);
            let msg = stderr.lines().rev().find(|l| !l.trim().is_empty()).unwrap_or("").trim();
            row.error = match code {
                Some(c) => format!("exit {c}: {msg}"),
                None => format!("terminated by signal: {msg}"),
            };
        }
    }
    row
}

/// Runs every job on `jobs` worker threads; rows come back in job order.
fn run_all(exe: &Path, all: &[Job], jobs: usize) -> Vec<Row> {
    let next = AtomicUsize::new(0);
    let rows: Mutex<Vec<Option<Row>>> = Mutex::new(vec![None; all.len()]);
    std::thread::scope(|s| {
        for _ in 0..jobs.max(1).min(all.len().max(1)) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(job) = all.get(i) else { break };
                let row = run_job(exe, job);
                rows.lock().expect("no worker panics while holding the lock")[i] = Some(row);
            });
        }
    });
    rows.into_inner()
        .expect("workers finished")
        .into_iter()
        .map(|r| r.expect("every job produces a row"))
        .collect()
}

pub fn write_results(rows: &[Row], out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(RESULTS_HEADER)?;
    for r in rows {
        w.write_record([
            r.instance.as_str(),
            &r.strategy,
            &r.status,
            &format!("{:.6}", r.wall_time),
            &r.nodes,
            &r.lp_calls,
            &r.global_lb,
            &r.global_ub,
            &r.error,
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Per strategy, solved runs sorted by time with the fraction of that strategy's runs solved so far.
pub fn cactus(rows: &[Row]) -> Vec<(String, f64, f64)> {
    let mut by: BTreeMap<&str, (usize, Vec<f64>)> = BTreeMap::new();
    for r in rows {
        let e = by.entry(r.strategy.as_str()).or_default();
        e.0 += 1;
        if r.solved() {
            e.1.push(r.wall_time);
        }
    }
    let mut out = Vec::new();
    for (s, (total, mut times)) in by {
        times.sort_by(f64::total_cmp);
        for (k, t) in times.into_iter().enumerate() {
            out.push((s.to_string(), t, (k + 1) as f64 / total as f64));
        }
    }
    out
}

pub fn write_cactus(rows: &[Row], out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CACTUS_HEADER)?;
    for (s, t, f) in cactus(rows) {
        w.write_record([s, format!("{t:.6}"), format!("{f:.6}")])?;
    }
    w.flush()?;
    Ok(())
}

pub fn run(args: &BenchArgs) -> Result<()> {
    if args.jobs == 0 {
        bail!("--jobs must be at least 1");
    }
    let text = std::fs::read_to_string(&args.manifest).with_context(|| format!("reading {}", args.manifest.display()))?;
    let manifest: Manifest = toml::from_str(&text).with_context(|| format!("parsing {}", args.manifest.display()))?;
    let base = args.manifest.parent().unwrap_or(Path::new("."));
    let all = jobs(&manifest, base)?;
    let exe = std::env::current_exe().context("locating the plnnv executable")?;
    let rows = run_all(&exe, &all, args.jobs);
    match &args.out {
        Some(p) => write_results(&rows, std::fs::File::create(p).with_context(|| format!("creating {}", p.display()))?)?,
        None => write_results(&rows, std::io::stdout().lock())?,
    }
    if let Some(p) = &args.cactus {
        write_cactus(&rows, std::fs::File::create(p).with_context(|| format!("creating {}", p.display()))?)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(strategy: &str, status: &str, t: f64) -> Row {
        Row {
            instance: "i".into(),
            strategy: strategy.into(),
            status: status.into(),
            wall_time: t,
            nodes: "1".into(),
            lp_calls: "0".into(),
            global_lb: "0".into(),
            global_ub: "0".into(),
            error: String::new(),
        }
    }

    #[test]
    fn cactus_is_sorted_and_monotone() {
        let rows = vec![
            row("bab", "UNSAT", 0.5),
            row("bab", "TIMEOUT", 9.0),
            row("bab", "SAT", 0.1),
            row("babsr", "UNSAT", 0.2),
        ];
        let c = cactus(&rows);
        assert_eq!(
            c,
            vec![
                ("bab".to_string(), 0.1, 1.0 / 3.0),
                ("bab".to_string(), 0.5, 2.0 / 3.0),
                ("babsr".to_string(), 0.2, 1.0),
            ]
        );
    }

    #[test]
    fn empty_results_are_header_only() {
        let mut buf = Vec::new();
        write_results(&[], &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), RESULTS_HEADER.join(",") + "\n");
    }

    #[test]
    fn manifest_defaults_and_paths() {
        let m: Manifest = toml::from_str(
            "strategies = [\"bab\", \"babsr\"]\ntimeout = 5.0\n[[instance]]\nnet = \"a.plnn\"\nprop = \"/abs/a.prop\"\n",
        )
        .unwrap();
        let js = jobs(&m, Path::new("dir")).unwrap();
        assert_eq!(js.len(), 2);
        assert_eq!(js[0].instance, "instance1");
        assert_eq!(js[0].args[..3], ["verify", "dir/a.plnn", "/abs/a.prop"]);
        assert!(js[1].args.windows(2).any(|w| w == ["--timeout", "5"]));
        assert!(toml::from_str::<Manifest>("bogus = 1").is_err());
        let empty: Manifest = toml::from_str("").unwrap();
        assert!(jobs(&empty, Path::new(".")).unwrap().is_empty());
    }

    #[test]
    fn quoting_follows_csv_rules() {
        let mut r = row("bab", "ERROR", 0.0);
        r.error = "exit 3: line 2: bad, \"value\"".into();
        let mut buf = Vec::new();
        write_results(&[r], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.ends_with(",\"exit 3: line 2: bad, \"\"value\"\"\"\n"), "{text}");
    }
}
