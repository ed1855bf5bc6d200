//! Piecewise-linear networks, input boxes, and properties over outputs.
//!
//! A [`Network`] alternates dense linear layers with activation layers and
//! always starts and ends with a linear layer. Properties are rewritten by
//! [`canonicalize`] into a network with a single output whose positivity over
//! the whole box is equivalent to the property.

mod canonical;
mod decompose;
mod property;
pub mod text;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub use canonical::{canonicalize, CanonicalProblem};
pub use decompose::maxpool_to_relu;
pub use property::PropertyFormula;

#[derive(Debug, Clone, PartialEq)]
pub struct LinearLayer {
    weights: DMatrix<f64>,
    bias: DVector<f64>,
}

impl LinearLayer {
    pub fn new(weights: DMatrix<f64>, bias: DVector<f64>) -> Result<Self> {
        if weights.nrows() != bias.len() {
            return Err(Error::Dimension {
                expected: weights.nrows(),
                got: bias.len(),
            });
        }
        if weights.iter().chain(bias.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidNetwork("non-finite weight or bias".into()));
        }
        Ok(LinearLayer { weights, bias })
    }

    /// Builds a layer from row vectors; every row must have the same length.
    pub fn from_rows(rows: &[Vec<f64>], bias: Vec<f64>) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|r| r.len() != cols) {
            return Err(Error::Dimension {
                expected: cols,
                got: bad.len(),
            });
        }
        let weights = DMatrix::from_fn(rows.len(), cols, |i, j| rows[i][j]);
        LinearLayer::new(weights, DVector::from_vec(bias))
    }

    pub fn identity(n: usize) -> Self {
        LinearLayer {
            weights: DMatrix::identity(n, n),
            bias: DVector::zeros(n),
        }
    }

    pub fn weights(&self) -> &DMatrix<f64> {
        &self.weights
    }

    pub fn bias(&self) -> &DVector<f64> {
        &self.bias
    }

    pub fn rows(&self) -> usize {
        self.weights.nrows()
    }

    pub fn cols(&self) -> usize {
        self.weights.ncols()
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        (0..self.rows())
            .map(|i| {
                let row = self.weights.row(i);
                row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + self.bias[i]
            })
            .collect()
    }

    /// `outer ∘ inner`.
    pub fn compose(outer: &LinearLayer, inner: &LinearLayer) -> LinearLayer {
        LinearLayer {
            weights: &outer.weights * &inner.weights,
            bias: &outer.weights * &inner.bias + &outer.bias,
        }
    }

    pub fn negated(&self) -> LinearLayer {
        LinearLayer {
            weights: -&self.weights,
            bias: -&self.bias,
        }
    }

    /// Fraction of exactly-zero weights.
    pub fn sparsity(&self) -> f64 {
        let total = self.weights.len();
        if total == 0 {
            return 0.0;
        }
        self.weights.iter().filter(|w| **w == 0.0).count() as f64 / total as f64
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Activation {
    Relu,
    /// Disjoint index groups covering the input; output `g` is the max over group `g`.
    MaxPool(Vec<Vec<usize>>),
}

impl Activation {
    pub fn output_width(&self, input_width: usize) -> usize {
        match self {
            Activation::Relu => input_width,
            Activation::MaxPool(groups) => groups.len(),
        }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        match self {
            Activation::Relu => x.iter().map(|v| v.max(0.0)).collect(),
            Activation::MaxPool(groups) => groups
                .iter()
                .map(|g| g.iter().map(|&i| x[i]).fold(f64::NEG_INFINITY, f64::max))
                .collect(),
        }
    }

    fn validate(&self, input_width: usize) -> Result<()> {
        if let Activation::MaxPool(groups) = self {
            let mut seen = vec![false; input_width];
            for g in groups {
                if g.is_empty() {
                    return Err(Error::InvalidNetwork("empty maxpool group".into()));
                }
                for &i in g {
                    if i >= input_width || seen[i] {
                        return Err(Error::InvalidNetwork(format!(
                            "maxpool index {i} out of range or repeated"
                        )));
                    }
                    seen[i] = true;
                }
            }
            if seen.iter().any(|s| !s) {
                return Err(Error::InvalidNetwork("maxpool groups do not cover the input".into()));
            }
        }
        Ok(())
    }
}

/// Linear layers `linears[0..n]` interleaved with `activations[0..n-1]`:
/// `linears[k]` produces the pre-activation `x̂_k`, `activations[k]` maps it
/// to the input of `linears[k + 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    linears: Vec<LinearLayer>,
    activations: Vec<Activation>,
}

impl Network {
    pub fn new(linears: Vec<LinearLayer>, activations: Vec<Activation>) -> Result<Self> {
        if linears.is_empty() {
            return Err(Error::InvalidNetwork("at least one linear layer is required".into()));
        }
        if activations.len() + 1 != linears.len() {
            return Err(Error::InvalidNetwork(
                "layers must alternate linear/activation, starting and ending linear".into(),
            ));
        }
        for (k, act) in activations.iter().enumerate() {
            let width = linears[k].rows();
            act.validate(width)?;
            let next_in = linears[k + 1].cols();
            if act.output_width(width) != next_in {
                return Err(Error::Dimension {
                    expected: act.output_width(width),
                    got: next_in,
                });
            }
        }
        Ok(Network {
            linears,
            activations,
        })
    }

    pub fn linears(&self) -> &[LinearLayer] {
        &self.linears
    }

    pub fn activations(&self) -> &[Activation] {
        &self.activations
    }

    pub fn input_dim(&self) -> usize {
        self.linears[0].cols()
    }

    pub fn output_dim(&self) -> usize {
        self.linears[self.linears.len() - 1].rows()
    }

    pub fn num_linear(&self) -> usize {
        self.linears.len()
    }

    /// Width of pre-activation `x̂_k`.
    pub fn width(&self, k: usize) -> usize {
        self.linears[k].rows()
    }

    pub fn is_relu_only(&self) -> bool {
        self.activations.iter().all(|a| *a == Activation::Relu)
    }

    pub fn eval(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.pre_activations(x)?.pop().expect("at least one layer"))
    }

    /// Every pre-activation vector `x̂_0 .. x̂_{n-1}` at input `x`.
    pub fn pre_activations(&self, x: &[f64]) -> Result<Vec<Vec<f64>>> {
        if x.len() != self.input_dim() {
            return Err(Error::Dimension {
                expected: self.input_dim(),
                got: x.len(),
            });
        }
        let mut out = Vec::with_capacity(self.linears.len());
        let mut cur = x.to_vec();
        for (k, lin) in self.linears.iter().enumerate() {
            let pre = lin.apply(&cur);
            if let Some(act) = self.activations.get(k) {
                cur = act.apply(&pre);
            }
            out.push(pre);
        }
        Ok(out)
    }

    /// Network whose output is the negation of this one's.
    pub fn negated(&self) -> Network {
        let mut linears = self.linears.clone();
        let last = linears.len() - 1;
        linears[last] = linears[last].negated();
        Network {
            linears,
            activations: self.activations.clone(),
        }
    }

    /// Sub-network computing `x̂_layer[unit]` (a single scalar output).
    pub fn truncated_at(&self, layer: usize, unit: usize) -> Network {
        let mut linears: Vec<LinearLayer> = self.linears[..=layer].to_vec();
        let lin = &self.linears[layer];
        let row = lin.weights.row(unit).into_owned();
        linears[layer] = LinearLayer {
            weights: DMatrix::from_row_slice(1, lin.cols(), row.as_slice()),
            bias: DVector::from_element(1, lin.bias[unit]),
        };
        Network {
            linears,
            activations: self.activations[..layer].to_vec(),
        }
    }
}

/// Forward pass: `f(x)` in double precision.
pub fn eval_network(net: &Network, x: &[f64]) -> Result<Vec<f64>> {
    net.eval(x)
}

/// An axis-aligned input box `lower ≤ x ≤ upper`.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxDomain {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl BoxDomain {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::Dimension {
                expected: lower.len(),
                got: upper.len(),
            });
        }
        for (j, (l, u)) in lower.iter().zip(&upper).enumerate() {
            if !l.is_finite() || !u.is_finite() {
                return Err(Error::InvalidBox(format!("dimension {j} is not finite")));
            }
            if l > u {
                return Err(Error::InvalidBox(format!("dimension {j}: lower {l} > upper {u}")));
            }
        }
        Ok(BoxDomain { lower, upper })
    }

    pub fn uniform(dim: usize, lower: f64, upper: f64) -> Result<Self> {
        BoxDomain::new(vec![lower; dim], vec![upper; dim])
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn width(&self, j: usize) -> f64 {
        self.upper[j] - self.lower[j]
    }

    pub fn center(&self) -> Vec<f64> {
        self.lower.iter().zip(&self.upper).map(|(l, u)| 0.5 * (l + u)).collect()
    }

    pub fn contains(&self, x: &[f64], tol: f64) -> bool {
        x.len() == self.dim()
            && x
                .iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(v, (l, u))| *v >= l - tol && *v <= u + tol)
    }

    /// Projection of `x` onto the box.
    pub fn clamp(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .map(|(v, (l, u))| v.clamp(*l, *u))
            .collect()
    }

    /// Splits dimension `j` at its midpoint into (lower half, upper half).
    pub fn bisect(&self, j: usize) -> (BoxDomain, BoxDomain) {
        let mid = 0.5 * (self.lower[j] + self.upper[j]);
        let mut lo = self.clone();
        let mut hi = self.clone();
        lo.upper[j] = mid;
        hi.lower[j] = mid;
        (lo, hi)
    }

    pub fn is_subset_of(&self, other: &BoxDomain) -> bool {
        self.dim() == other.dim()
            && (0..self.dim()).all(|j| self.lower[j] >= other.lower[j] && self.upper[j] <= other.upper[j])
    }
}

/// True iff `x` lies in the box (within `tol`) and the canonical output is `≤ tol`.
pub fn validate_counterexample(problem: &CanonicalProblem, x: &[f64], tol: f64) -> bool {
    if !problem.domain().contains(x, tol) {
        return false;
    }
    match problem.net().eval(x) {
        Ok(y) => y[0] <= tol,
        Err(_) => false,
    }
}
