use nalgebra::{DMatrix, DVector};

use super::{Activation, BoxDomain, LinearLayer, Network, PropertyFormula};
use crate::error::{Error, Result};

/// A scalar-output network over a box; the property holds iff the output is
/// positive everywhere in the box.
#[derive(Debug, Clone, PartialEq)]
pub struct CanonicalProblem {
    net: Network,
    domain: BoxDomain,
}

impl CanonicalProblem {
    pub fn new(net: Network, domain: BoxDomain) -> Result<Self> {
        if net.output_dim() != 1 {
            return Err(Error::Dimension {
                expected: 1,
                got: net.output_dim(),
            });
        }
        if domain.dim() != net.input_dim() {
            return Err(Error::Dimension {
                expected: net.input_dim(),
                got: domain.dim(),
            });
        }
        Ok(CanonicalProblem { net, domain })
    }

    pub fn net(&self) -> &Network {
        &self.net
    }

    pub fn domain(&self) -> &BoxDomain {
        &self.domain
    }

    pub fn with_domain(&self, domain: BoxDomain) -> Result<Self> {
        CanonicalProblem::new(self.net.clone(), domain)
    }

    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        Ok(self.net.eval(x)?[0])
    }

    /// Same problem with every MaxPool replaced by ReLUs, using interval lower
    /// bounds over this problem's box.
    pub fn relu_only(&self) -> Result<CanonicalProblem> {
        if self.net.is_relu_only() {
            return Ok(self.clone());
        }
        let bounds = crate::bounds::interval_bounds_unfixed(&self.net, &self.domain);
        let net = super::maxpool_to_relu(&self.net, |layer, unit| bounds.lower[layer][unit])?;
        CanonicalProblem::new(net, self.domain.clone())
    }
}

/// Layers appended after the network output: `linears.len() == pools.len() + 1`.
struct Head {
    linears: Vec<LinearLayer>,
    pools: Vec<Vec<Vec<usize>>>,
}

impl Head {
    fn depth(&self) -> usize {
        self.pools.len()
    }

    fn negated(mut self) -> Head {
        let last = self.linears.len() - 1;
        self.linears[last] = self.linears[last].negated();
        self
    }

    /// Prepends an identity stage (identity linear, singleton pooling).
    fn pad_front(&mut self, input_dim: usize) {
        self.linears.insert(0, LinearLayer::identity(input_dim));
        self.pools.insert(0, (0..input_dim).map(|i| vec![i]).collect());
    }
}

fn build(formula: &PropertyFormula, input_dim: usize) -> Head {
    match formula {
        PropertyFormula::Atom { c, b } => Head {
            linears: vec![LinearLayer {
                weights: DMatrix::from_row_slice(1, c.len(), c),
                bias: DVector::from_element(1, -b),
            }],
            pools: vec![],
        },
        PropertyFormula::Or(children) if children.len() == 1 => build(&children[0], input_dim),
        PropertyFormula::And(children) if children.len() == 1 => build(&children[0], input_dim),
        PropertyFormula::Or(children) => {
            let heads = children.iter().map(|c| build(c, input_dim)).collect();
            max_of(heads, input_dim)
        }
        // min_i(g_i) = -max_i(-g_i)
        PropertyFormula::And(children) => {
            let heads = children.iter().map(|c| build(c, input_dim).negated()).collect();
            max_of(heads, input_dim).negated()
        }
    }
}

/// Runs the heads side by side and takes the max of their scalar outputs with one pooling group.
fn max_of(mut heads: Vec<Head>, input_dim: usize) -> Head {
    let depth = heads.iter().map(Head::depth).max().unwrap_or(0);
    for h in &mut heads {
        while h.depth() < depth {
            h.pad_front(input_dim);
        }
    }
    let mut linears = Vec::with_capacity(depth + 2);
    let mut pools = Vec::with_capacity(depth + 1);
    for level in 0..=depth {
        let layers: Vec<&LinearLayer> = heads.iter().map(|h| &h.linears[level]).collect();
        let rows: usize = layers.iter().map(|l| l.rows()).sum();
        let cols = if level == 0 {
            input_dim
        } else {
            layers.iter().map(|l| l.cols()).sum()
        };
        let mut w = DMatrix::zeros(rows, cols);
        let mut b = DVector::zeros(rows);
        let (mut r0, mut c0) = (0, 0);
        for l in &layers {
            let cstart = if level == 0 { 0 } else { c0 };
            w.view_mut((r0, cstart), (l.rows(), l.cols())).copy_from(&l.weights);
            b.rows_mut(r0, l.rows()).copy_from(&l.bias);
            r0 += l.rows();
            c0 += l.cols();
        }
        linears.push(LinearLayer { weights: w, bias: b });
        if level < depth {
            let mut groups = Vec::new();
            let mut offset = 0;
            for h in &heads {
                groups.extend(h.pools[level].iter().map(|g| g.iter().map(|i| i + offset).collect()));
                offset += h.linears[level].rows();
            }
            pools.push(groups);
        }
    }
    pools.push(vec![(0..heads.len()).collect()]);
    linears.push(LinearLayer::identity(1));
    Head { linears, pools }
}

/// Rewrites `prop` over `net` into a scalar-output problem: the output is
/// positive at `x` iff `prop` holds at `net(x)`.
///
/// Atoms become an affine read-out `c·y - b`; disjunctions stack their
/// children and take one MaxPool over them; conjunctions negate, pool, and
/// negate again. Consecutive linear maps are fused.
pub fn canonicalize(net: &Network, prop: &PropertyFormula, domain: &BoxDomain) -> Result<CanonicalProblem> {
    prop.validate(net.output_dim())?;
    let head = build(prop, net.output_dim());

    let n = net.linears.len();
    let mut linears: Vec<LinearLayer> = net.linears[..n - 1].to_vec();
    linears.push(LinearLayer::compose(&head.linears[0], &net.linears[n - 1]));
    linears.extend(head.linears[1..].iter().cloned());
    let mut activations = net.activations.clone();
    activations.extend(head.pools.into_iter().map(Activation::MaxPool));
    CanonicalProblem::new(Network::new(linears, activations)?, domain.clone())
}

#[cfg(test)]
mod tests {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::network::tests::toy;

    fn toy_box() -> BoxDomain {
        BoxDomain::uniform(2, -2.0, 2.0).unwrap()
    }

    #[test]
    fn atom_appends_affine_readout() {
        let p = canonicalize(&toy(), &PropertyFormula::atom(vec![1.0], -5.0), &toy_box()).unwrap();
        assert_eq!(p.net().num_linear(), 2);
        let last = &p.net().linears()[1];
        assert_eq!(last.bias()[0], 5.0);
        assert_eq!(p.eval(&[2.0, 2.0]).unwrap(), 1.0);
        assert_eq!(p.eval(&[0.0, 0.0]).unwrap(), 5.0);
    }

    #[test]
    fn identity_atom_is_noop() {
        let net = toy();
        let p = canonicalize(&net, &PropertyFormula::atom(vec![1.0], 0.0), &toy_box()).unwrap();
        assert_eq!(p.net(), &net);
    }

    fn two_output() -> Network {
        Network::new(vec![LinearLayer::identity(2)], vec![]).unwrap()
    }

    #[test]
    fn disjunction_is_max() {
        let prop = PropertyFormula::Or(vec![
            PropertyFormula::atom(vec![1.0, 0.0], 0.0),
            PropertyFormula::atom(vec![0.0, 1.0], 0.0),
        ]);
        let dom = BoxDomain::uniform(2, -5.0, 5.0).unwrap();
        let p = canonicalize(&two_output(), &prop, &dom).unwrap();
        assert_eq!(p.eval(&[-1.0, 3.0]).unwrap(), 3.0);
        assert!(!p.net().is_relu_only());
    }

    #[test]
    fn empty_formula_rejected() {
        let err = canonicalize(&two_output(), &PropertyFormula::And(vec![]), &toy_box());
        assert!(matches!(err, Err(Error::EmptyFormula)));
        let err = canonicalize(&two_output(), &PropertyFormula::atom(vec![1.0], 0.0), &toy_box());
        assert!(matches!(err, Err(Error::Dimension { .. })));
    }

    fn random_formula(rng: &mut ChaCha8Rng, dim: usize, depth: usize) -> PropertyFormula {
        if depth == 0 || rng.gen_bool(0.3) {
            let c = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
            return PropertyFormula::atom(c, rng.gen_range(-0.5..0.5));
        }
        let k = rng.gen_range(1..4);
        let ch = (0..k).map(|_| random_formula(rng, dim, depth - 1)).collect();
        if rng.gen_bool(0.5) {
            PropertyFormula::And(ch)
        } else {
            PropertyFormula::Or(ch)
        }
    }

    #[test]
    fn canonical_sign_matches_formula_on_samples() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let net = crate::datagen::gen_random_net(3, &[4, 3], 5);
        let dom = BoxDomain::uniform(3, -1.0, 1.0).unwrap();
        for _ in 0..20 {
            let prop = random_formula(&mut rng, 3, 3);
            let p = canonicalize(&net, &prop, &dom).unwrap();
            for _ in 0..1000 {
                let x: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let y = net.eval(&x).unwrap();
                let g = p.eval(&x).unwrap();
                assert!((g - prop.margin(&y)).abs() < 1e-9);
                assert_eq!(g > 0.0, prop.holds(&y));
            }
        }
    }
}
