use std::fs::File;
use std::io::BufWriter;
use std::path::PathBuf;
use std::time::Duration;

use anyhow::{Context, Result};
use clap::Args;
use plnnv_core::bab::{run_bab, write_trace_csv, BabConfig, BabStatus, BoundPolicy, Mode, Strategy};
use plnnv_core::bounds::RelaxationKind;

use crate::input::{join, InstanceArgs};

#[derive(Args, Debug)]
pub struct VerifyArgs {
    #[command(flatten)]
    pub instance: InstanceArgs,
    /// bab, babsb, relubab, babsr or babsrl.
    #[arg(long, default_value = "babsr")]
    pub strategy: Strategy,
    /// planet or reluplex.
    #[arg(long = "relax", default_value = "planet")]
    pub relaxation: RelaxationKind,
    /// Intermediate bounds: none, wk, lp-all or lp-one (default: the strategy's own).
    #[arg(long)]
    pub imb: Option<BoundPolicy>,
    /// decide or optimize.
    #[arg(long, default_value = "decide")]
    pub mode: Mode,
    #[arg(long, default_value_t = 1e-4)]
    pub eps: f64,
    /// Seconds.
    #[arg(long)]
    pub timeout: Option<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Write one CSV row per explored node.
    #[arg(long)]
    pub trace: Option<PathBuf>,
    /// Random points evaluated per subproblem for upper bounds.
    #[arg(long, default_value_t = 10)]
    pub samples: usize,
    #[arg(long)]
    pub node_limit: Option<usize>,
}

impl VerifyArgs {
    fn config(&self) -> Result<BabConfig> {
        let timeout = self
            .timeout
            .map(|t| Duration::try_from_secs_f64(t).context("--timeout must be a non-negative number of seconds"))
            .transpose()?;
        let mut cfg = BabConfig {
            epsilon: self.eps,
            timeout,
            relaxation: self.relaxation,
            samples: self.samples,
            seed: self.seed,
            node_limit: self.node_limit,
            record_trace: self.trace.is_some(),
            ..BabConfig::new(self.strategy, self.mode)
        };
        if let Some(p) = self.imb {
            cfg = cfg.with_policy(p);
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

pub fn exit_code(status: &BabStatus) -> u8 {
    match status {
        BabStatus::Unsat => 0,
        BabStatus::Sat(_) => 1,
        BabStatus::Timeout | BabStatus::Undecided => 2,
    }
}

pub fn run(args: &VerifyArgs) -> Result<u8> {
    let cfg = args.config()?;
    let problem = args.instance.load()?;
    let r = run_bab(&problem, &cfg)?;
    println!("status: {}", r.status.label());
    if let BabStatus::Sat(x) = &r.status {
        println!("counterexample: {}", join(x));
        println!("output: {}", problem.eval(x)?);
    }
    println!("global_lb: {}", r.global_lb);
    println!("global_ub: {}", r.global_ub);
    if let (Mode::Optimize, Some(x)) = (cfg.mode, &r.best_point) {
        println!("argmin: {}", join(x));
    }
    if r.near_zero {
        println!("near_zero: true");
    }
    println!("nodes: {}", r.stats.nodes);
    println!("lp_calls: {}", r.stats.lp_calls);
    println!("max_depth: {}", r.stats.max_depth);
    println!("wall_time: {:.6}", r.stats.wall_time);
    if let Some(path) = &args.trace {
        let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
        write_trace_csv(&r.trace, BufWriter::new(f)).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(exit_code(&r.status))
}
