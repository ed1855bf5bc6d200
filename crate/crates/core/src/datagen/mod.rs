//! Instance generators and the NNet reader.

mod conv;
mod nnet;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::network::{Activation, BoxDomain, LinearLayer, Network, PropertyFormula};

pub use conv::{conv_to_linear, ConvSpec};
pub use nnet::{parse_nnet, read_nnet, write_nnet};

/// The two-input example: `a = relu(x1 + x2)`, `b = relu(-x1 - x2)`, `y = -a - b`,
/// over `[-2, 2]²`, with the property `y > -5`.
pub fn toy_network() -> (Network, BoxDomain, PropertyFormula) {
    let net = Network::new(
        vec![
            LinearLayer::from_rows(&[vec![1.0, 1.0], vec![-1.0, -1.0]], vec![0.0, 0.0]).unwrap(),
            LinearLayer::from_rows(&[vec![-1.0, -1.0]], vec![0.0]).unwrap(),
        ],
        vec![Activation::Relu],
    )
    .unwrap();
    let dom = BoxDomain::uniform(2, -2.0, 2.0).unwrap();
    (net, dom, PropertyFormula::atom(vec![1.0], -5.0))
}

fn glorot(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    let a = (6.0 / (rows + cols) as f64).sqrt();
    DMatrix::from_fn(rows, cols, |_, _| rng.gen_range(-a..=a))
}

/// Fully connected ReLU net with Glorot-uniform weights and zero biases.
///
/// `widths` lists every layer's output width, the last entry being the output.
pub fn gen_random_net(input_dim: usize, widths: &[usize], seed: u64) -> Network {
    gen_random_net_with_bias(input_dim, widths, 0.0, seed)
}

/// Like [`gen_random_net`], with biases drawn uniformly from `[-bias_scale, bias_scale]`.
pub fn gen_random_net_with_bias(input_dim: usize, widths: &[usize], bias_scale: f64, seed: u64) -> Network {
    assert!(!widths.is_empty() && input_dim > 0 && widths.iter().all(|w| *w > 0));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut linears = Vec::with_capacity(widths.len());
    let mut fan_in = input_dim;
    for &w in widths {
        let weights = glorot(&mut rng, w, fan_in);
        let bias = if bias_scale > 0.0 {
            DVector::from_fn(w, |_, _| rng.gen_range(-bias_scale..=bias_scale))
        } else {
            DVector::zeros(w)
        };
        linears.push(LinearLayer::new(weights, bias).unwrap());
        fan_in = w;
    }
    let activations = vec![Activation::Relu; widths.len() - 1];
    Network::new(linears, activations).unwrap()
}

/// Parameters of a duplicated-stream network.
#[derive(Debug, Clone, PartialEq)]
pub struct TwinStreamSpec {
    pub input_dim: usize,
    /// Hidden widths of one stream; the net has `widths.len() + 1` linear layers.
    pub widths: Vec<usize>,
    pub margin: f64,
    pub seed: u64,
}

impl TwinStreamSpec {
    /// `depth` linear layers, every hidden layer of each stream `width` wide.
    pub fn uniform(input_dim: usize, width: usize, depth: usize, margin: f64, seed: u64) -> Self {
        TwinStreamSpec {
            input_dim,
            widths: vec![width; depth.saturating_sub(1)],
            margin,
            seed,
        }
    }

    pub fn depth(&self) -> usize {
        self.widths.len() + 1
    }
}

/// Two copies of one random stream, subtracted at the output and offset by the margin.
///
/// The output equals `margin` at every input. Returns the net, `[-1, 1]^d`,
/// and the property `output > 0`.
pub fn gen_twinstream(spec: &TwinStreamSpec) -> Result<(Network, BoxDomain, PropertyFormula)> {
    if spec.depth() < 2 {
        return Err(Error::Config("twin-stream depth must be at least 2".into()));
    }
    if spec.input_dim == 0 || spec.widths.contains(&0) {
        return Err(Error::Config("twin-stream widths must be positive".into()));
    }
    if !spec.margin.is_finite() {
        return Err(Error::Config("twin-stream margin must be finite".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut linears = Vec::with_capacity(spec.depth());
    let mut fan_in = spec.input_dim;
    for (i, &w) in spec.widths.iter().enumerate() {
        let ws = glorot(&mut rng, w, fan_in);
        let weights = if i == 0 {
            let mut m = DMatrix::zeros(2 * w, fan_in);
            m.view_mut((0, 0), (w, fan_in)).copy_from(&ws);
            m.view_mut((w, 0), (w, fan_in)).copy_from(&ws);
            m
        } else {
            let mut m = DMatrix::zeros(2 * w, 2 * fan_in);
            m.view_mut((0, 0), (w, fan_in)).copy_from(&ws);
            m.view_mut((w, fan_in), (w, fan_in)).copy_from(&ws);
            m
        };
        linears.push(LinearLayer::new(weights, DVector::zeros(2 * w))?);
        fan_in = w;
    }
    let ws = glorot(&mut rng, 1, fan_in);
    let mut last = DMatrix::zeros(1, 2 * fan_in);
    last.view_mut((0, 0), (1, fan_in)).copy_from(&ws);
    last.view_mut((0, fan_in), (1, fan_in)).copy_from(&(-ws));
    linears.push(LinearLayer::new(last, DVector::from_element(1, spec.margin))?);
    let activations = vec![Activation::Relu; linears.len() - 1];
    let net = Network::new(linears, activations)?;
    let dom = BoxDomain::uniform(spec.input_dim, -1.0, 1.0)?;
    Ok((net, dom, PropertyFormula::atom(vec![1.0], 0.0)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toy_instance() {
        let (net, _, _) = toy_network();
        assert_eq!(net.eval(&[0.0, 0.0]).unwrap(), vec![0.0]);
        assert_eq!(net.eval(&[2.0, 2.0]).unwrap(), vec![-4.0]);
    }

    #[test]
    fn random_net_shapes_and_determinism() {
        let a = gen_random_net(2, &[3, 1], 7);
        assert_eq!(a, gen_random_net(2, &[3, 1], 7));
        assert_ne!(a, gen_random_net(2, &[3, 1], 8));
        assert_eq!(a.linears()[0].weights().shape(), (3, 2));
        assert_eq!(a.linears()[1].weights().shape(), (1, 3));
        assert!(a.linears().iter().all(|l| l.bias().iter().all(|b| *b == 0.0)));
    }

    #[test]
    fn random_weights_within_glorot_bound() {
        let net = gen_random_net(5, &[7, 4, 1], 3);
        let mut fan_in = 5;
        for lin in net.linears() {
            let bound = (6.0 / (fan_in + lin.rows()) as f64).sqrt();
            assert!(lin.weights().iter().all(|w| w.abs() <= bound));
            fan_in = lin.rows();
        }
    }

    #[test]
    fn twinstream_is_constant() {
        for (width, depth, margin) in [(1, 2, 10.0), (3, 3, 1.0), (4, 4, 100.0), (2, 5, -1.0)] {
            let (net, dom, _) = gen_twinstream(&TwinStreamSpec::uniform(3, width, depth, margin, 5)).unwrap();
            assert_eq!(net.num_linear(), depth);
            let mut rng = ChaCha8Rng::seed_from_u64(1);
            for _ in 0..100 {
                let x: Vec<f64> = (0..3).map(|j| rng.gen_range(dom.lower()[j]..=dom.upper()[j])).collect();
                assert!((net.eval(&x).unwrap()[0] - margin).abs() <= 1e-9);
            }
        }
    }

    #[test]
    fn twinstream_rejects_shallow() {
        assert!(gen_twinstream(&TwinStreamSpec::uniform(2, 2, 1, 1.0, 0)).is_err());
    }
}
