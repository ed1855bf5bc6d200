use anyhow::{anyhow, Result};
use clap::Args;
use plnnv_core::bounds::{interval_propagate, PhaseFixings};
use plnnv_core::oracle::{ambiguous_relus, enumerate_min, sample_min, DEFAULT_PATTERN_CAP};

use crate::input::{join, InstanceArgs};

#[derive(Args, Debug)]
pub struct OracleArgs {
    #[command(flatten)]
    pub instance: InstanceArgs,
    /// Largest number of ambiguous ReLUs to enumerate.
    #[arg(long, default_value_t = DEFAULT_PATTERN_CAP)]
    pub cap: usize,
    /// Also report the minimum over this many uniform samples.
    #[arg(long, default_value_t = 0)]
    pub samples: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

pub fn run(args: &OracleArgs) -> Result<()> {
    let problem = args.instance.load()?.relu_only()?;
    let bounds = interval_propagate(&problem, &PhaseFixings::new())
        .feasible()
        .ok_or_else(|| anyhow!("interval bounds are empty"))?;
    let exact = enumerate_min(&problem, &bounds, args.cap)?;
    println!("min: {}", exact.value);
    println!("argmin: {}", join(&exact.point));
    println!("ambiguous: {}", ambiguous_relus(&bounds).len());
    if args.samples > 0 {
        let s = sample_min(&problem, args.samples, args.seed)?;
        println!("sample_min: {}", s.value);
    }
    Ok(())
}
