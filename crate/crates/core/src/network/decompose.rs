use nalgebra::{DMatrix, DVector};

use super::{Activation, LinearLayer, Network};
use crate::error::{Error, Result};

/// An affine form `coeffs · z + constant` over the current hidden vector `z`.
#[derive(Debug, Clone)]
struct Affine {
    coeffs: Vec<f64>,
    constant: f64,
}

impl Affine {
    fn unit(width: usize, i: usize, constant: f64) -> Affine {
        let mut coeffs = vec![0.0; width];
        coeffs[i] = 1.0;
        Affine { coeffs, constant }
    }

    fn sub(&self, other: &Affine) -> Affine {
        Affine {
            coeffs: self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| a - b).collect(),
            constant: self.constant - other.constant,
        }
    }

    fn shifted(&self, by: f64) -> Affine {
        Affine {
            coeffs: self.coeffs.clone(),
            constant: self.constant + by,
        }
    }
}

/// A pooling input still waiting to be reduced, with a lower bound on its value.
#[derive(Debug, Clone)]
struct Pending {
    value: Affine,
    lower: f64,
}

fn layer_from(forms: &[Affine], cols: usize) -> LinearLayer {
    let w = DMatrix::from_fn(forms.len(), cols, |i, j| forms[i].coeffs[j]);
    let b = DVector::from_iterator(forms.len(), forms.iter().map(|f| f.constant));
    LinearLayer { weights: w, bias: b }
}

/// Rewrites every MaxPool as ReLUs, pointwise equal on the domain the lower
/// bounds were derived for.
///
/// Groups are reduced as a balanced tree of pairwise maxima, each written as
/// `max(a, b) = relu(a - b) + relu(b - l_b) + l_b`. Unpaired values pass
/// through a level as `relu(v - l_v) + l_v`. `lower(k, i)` must return a
/// finite lower bound on pre-activation `x̂_k[i]` of the input network.
pub fn maxpool_to_relu(net: &Network, lower: impl Fn(usize, usize) -> f64) -> Result<Network> {
    let mut linears = Vec::new();
    let mut activations = Vec::new();
    let mut pending_layer = net.linears[0].clone();

    for (k, act) in net.activations.iter().enumerate() {
        match act {
            Activation::Relu => {
                linears.push(pending_layer);
                activations.push(Activation::Relu);
                pending_layer = net.linears[k + 1].clone();
            }
            Activation::MaxPool(groups) => {
                let cols = pending_layer.cols();
                let forms: Vec<Affine> = (0..pending_layer.rows())
                    .map(|i| Affine {
                        coeffs: pending_layer.weights.row(i).iter().copied().collect(),
                        constant: pending_layer.bias[i],
                    })
                    .collect();
                let mut state: Vec<Vec<Pending>> = Vec::with_capacity(groups.len());
                for g in groups {
                    let mut members = Vec::with_capacity(g.len());
                    for &i in g {
                        let l = lower(k, i);
                        if !l.is_finite() {
                            return Err(Error::UnboundedIntermediate { layer: k, unit: i });
                        }
                        members.push(Pending {
                            value: forms[i].clone(),
                            lower: l,
                        });
                    }
                    state.push(members);
                }

                let mut basis_width = cols;
                while state.iter().any(|g| g.len() > 1) {
                    let mut relu_inputs: Vec<Affine> = Vec::new();
                    // (index of first relu output, optional second, constant, lower bound)
                    let mut outputs: Vec<Vec<(usize, Option<usize>, f64, f64)>> = Vec::with_capacity(state.len());
                    for group in &state {
                        let mut next = Vec::with_capacity(group.len().div_ceil(2));
                        for chunk in group.chunks(2) {
                            match chunk {
                                [a, b] => {
                                    let r1 = relu_inputs.len();
                                    relu_inputs.push(a.value.sub(&b.value));
                                    relu_inputs.push(b.value.shifted(-b.lower));
                                    next.push((r1, Some(r1 + 1), b.lower, a.lower.max(b.lower)));
                                }
                                [v] => {
                                    let r = relu_inputs.len();
                                    relu_inputs.push(v.value.shifted(-v.lower));
                                    next.push((r, None, v.lower, v.lower));
                                }
                                _ => unreachable!(),
                            }
                        }
                        outputs.push(next);
                    }
                    let width = relu_inputs.len();
                    linears.push(layer_from(&relu_inputs, basis_width));
                    activations.push(Activation::Relu);
                    basis_width = width;
                    state = outputs
                        .into_iter()
                        .map(|g| {
                            g.into_iter()
                                .map(|(r1, r2, constant, lower)| {
                                    let mut value = Affine::unit(width, r1, constant);
                                    if let Some(r2) = r2 {
                                        value.coeffs[r2] = 1.0;
                                    }
                                    Pending { value, lower }
                                })
                                .collect()
                        })
                        .collect();
                }

                let reduced: Vec<Affine> = state.into_iter().map(|mut g| g.remove(0).value).collect();
                let pooled = layer_from(&reduced, basis_width);
                pending_layer = LinearLayer::compose(&net.linears[k + 1], &pooled);
            }
        }
    }
    linears.push(pending_layer);
    Network::new(linears, activations)
}
