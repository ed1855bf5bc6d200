use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::Args;
use plnnv_core::datagen::read_nnet;
use plnnv_core::network::text::{read_box, read_network, read_property};
use plnnv_core::network::{canonicalize, CanonicalProblem};

/// Network, property and box files of one instance.
#[derive(Args, Debug, Clone)]
pub struct InstanceArgs {
    /// Network in `plnn 1` format, or an `.nnet` file.
    pub net: PathBuf,
    /// Property as an s-expression over the network outputs.
    pub prop: PathBuf,
    /// Input box (`lower:` / `upper:` lines); optional for `.nnet` networks.
    pub r#box: Option<PathBuf>,
}

fn is_nnet(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("nnet"))
}

pub fn load(net: &Path, prop: &Path, bx: Option<&Path>) -> Result<CanonicalProblem> {
    let ctx = |p: &Path| format!("reading {}", p.display());
    let (network, nnet_box) = if is_nnet(net) {
        let (n, b) = read_nnet(net).with_context(|| ctx(net))?;
        (n, Some(b))
    } else {
        (read_network(net).with_context(|| ctx(net))?, None)
    };
    let domain = match (bx, nnet_box) {
        (Some(p), _) => read_box(p).with_context(|| ctx(p))?,
        (None, Some(b)) => b,
        (None, None) => bail!("a box file is required for {}", net.display()),
    };
    let formula = read_property(prop).with_context(|| ctx(prop))?;
    Ok(canonicalize(&network, &formula, &domain)?)
}

impl InstanceArgs {
    pub fn load(&self) -> Result<CanonicalProblem> {
        load(&self.net, &self.prop, self.r#box.as_deref())
    }
}

pub fn join(v: &[f64]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ")
}
