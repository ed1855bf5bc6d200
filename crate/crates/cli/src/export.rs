use std::path::PathBuf;
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};
use clap::Args;
use plnnv_core::bounds::{interval_propagate, refine_bounds_lp, wk_layer_bounds, PhaseFixings};
use plnnv_core::mipexport::{encode_mip, to_lp_string, BigMVariant, ObjectiveMode};

use crate::input::InstanceArgs;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundSource {
    Interval,
    Wk,
    Lp,
}

impl FromStr for BoundSource {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "interval" => Ok(BoundSource::Interval),
            "wk" => Ok(BoundSource::Wk),
            "lp" => Ok(BoundSource::Lp),
            _ => Err(format!("unknown bound source `{s}` (interval, wk, lp)")),
        }
    }
}

#[derive(Args, Debug)]
pub struct ExportArgs {
    #[command(flatten)]
    pub instance: InstanceArgs,
    /// tjeng or symmetric.
    #[arg(long, default_value = "tjeng")]
    pub variant: BigMVariant,
    /// minimize or feasibility.
    #[arg(long, default_value = "minimize")]
    pub objective: ObjectiveMode,
    /// Pre-activation bounds: interval, wk (layerwise dual) or lp (Planet refinement).
    #[arg(long, default_value = "interval")]
    pub bounds: BoundSource,
    /// Output file; standard output when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn run(args: &ExportArgs) -> Result<()> {
    let mut problem = args.instance.load()?;
    let none = PhaseFixings::new();
    if args.bounds == BoundSource::Wk {
        problem = problem.relu_only()?;
    }
    let interval = interval_propagate(&problem, &none)
        .feasible()
        .ok_or_else(|| anyhow!("interval bounds are empty"))?;
    let bounds = match args.bounds {
        BoundSource::Interval => interval,
        BoundSource::Wk => wk_layer_bounds(&problem, &none)?
            .feasible()
            .ok_or_else(|| anyhow!("dual bounds are empty"))?,
        BoundSource::Lp => {
            let layers: Vec<usize> = (1..problem.net().num_linear()).collect();
            match refine_bounds_lp(&problem, &interval, &none, &layers)?.feasible() {
                Some(b) => b,
                None => bail!("the LP relaxation is infeasible"),
            }
        }
    };
    let model = encode_mip(&problem, &bounds, args.variant, args.objective)?;
    let text = to_lp_string(&model);
    match &args.out {
        Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display()))?,
        None => print!("{text}"),
    }
    Ok(())
}
