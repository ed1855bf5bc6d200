use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Subcommand};
use plnnv_core::datagen::{gen_random_net_with_bias, gen_twinstream, toy_network, TwinStreamSpec};
use plnnv_core::network::text::{write_box, write_network, write_property};
use plnnv_core::network::{BoxDomain, Network, PropertyFormula};

#[derive(Subcommand, Debug)]
pub enum GenCommand {
    /// Two copies of a random stream whose difference is the constant margin.
    Twinstream(TwinArgs),
    /// Fully connected ReLU net with Glorot weights; property `output > 0`.
    Random(RandomArgs),
    /// The two-input example with property `y > -5`.
    Toy(OutArgs),
}

#[derive(Args, Debug)]
pub struct OutArgs {
    /// Output stem: writes `<out>.plnn`, `<out>.prop` and `<out>.box`.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct TwinArgs {
    #[arg(long, default_value_t = 5)]
    pub input_dim: usize,
    /// Hidden width of each stream.
    #[arg(long, default_value_t = 4)]
    pub width: usize,
    /// Number of linear layers.
    #[arg(long, default_value_t = 3)]
    pub depth: usize,
    #[arg(long, default_value_t = 10.0, allow_negative_numbers = true)]
    pub margin: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Args, Debug)]
pub struct RandomArgs {
    #[arg(long, default_value_t = 3)]
    pub input_dim: usize,
    /// Comma-separated layer widths, the last one being the output.
    #[arg(long, value_delimiter = ',', default_value = "5,4,1")]
    pub widths: Vec<usize>,
    /// Biases are drawn from `[-bias, bias]`.
    #[arg(long, default_value_t = 0.0)]
    pub bias: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = -1.0, allow_negative_numbers = true)]
    pub lower: f64,
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    pub upper: f64,
    #[command(flatten)]
    pub out: OutArgs,
}

fn with_ext(stem: &Path, ext: &str) -> PathBuf {
    let mut s = stem.as_os_str().to_owned();
    s.push(".");
    s.push(ext);
    PathBuf::from(s)
}

fn write_instance(stem: &Path, net: &Network, prop: &PropertyFormula, domain: &BoxDomain) -> Result<()> {
    for (ext, text) in [
        ("plnn", write_network(net)),
        ("prop", write_property(prop)),
        ("box", write_box(domain)),
    ] {
        let path = with_ext(stem, ext);
        std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
        println!("{}", path.display());
    }
    Ok(())
}

pub fn run(cmd: &GenCommand) -> Result<()> {
    match cmd {
        GenCommand::Twinstream(a) => {
            if a.depth < 2 || a.width == 0 || a.input_dim == 0 {
                bail!("twinstream needs depth >= 2 and positive widths");
            }
            let spec = TwinStreamSpec::uniform(a.input_dim, a.width, a.depth, a.margin, a.seed);
            let (net, domain, prop) = gen_twinstream(&spec)?;
            write_instance(&a.out.out, &net, &prop, &domain)
        }
        GenCommand::Random(a) => {
            if a.input_dim == 0 || a.widths.is_empty() || a.widths.contains(&0) || a.widths.last() != Some(&1) {
                bail!("--widths must be positive and end with an output width of 1");
            }
            let net = gen_random_net_with_bias(a.input_dim, &a.widths, a.bias, a.seed);
            let domain = BoxDomain::uniform(a.input_dim, a.lower, a.upper)?;
            write_instance(&a.out.out, &net, &PropertyFormula::atom(vec![1.0], 0.0), &domain)
        }
        GenCommand::Toy(o) => {
            let (net, domain, prop) = toy_network();
            write_instance(&o.out, &net, &prop, &domain)
        }
    }
}
