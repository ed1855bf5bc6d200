use super::{settle, LayerBounds, Outcome, PhaseFixings};
use crate::network::{Activation, BoxDomain, CanonicalProblem, LinearLayer, Network};

/// `W⁺ l + W⁻ u + b ≤ W x + b ≤ W⁺ u + W⁻ l + b`.
pub(crate) fn affine_interval(lin: &LinearLayer, l: &[f64], u: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let w = lin.weights();
    let mut lo = Vec::with_capacity(lin.rows());
    let mut hi = Vec::with_capacity(lin.rows());
    for i in 0..lin.rows() {
        let (mut a, mut b) = (lin.bias()[i], lin.bias()[i]);
        for j in 0..lin.cols() {
            let wij = w[(i, j)];
            if wij >= 0.0 {
                a += wij * l[j];
                b += wij * u[j];
            } else {
                a += wij * u[j];
                b += wij * l[j];
            }
        }
        lo.push(a);
        hi.push(b);
    }
    (lo, hi)
}

/// Interval image of an activation layer.
pub(crate) fn activation_interval(act: &Activation, l: &[f64], u: &[f64]) -> (Vec<f64>, Vec<f64>) {
    match act {
        Activation::Relu => (
            l.iter().map(|v| v.max(0.0)).collect(),
            u.iter().map(|v| v.max(0.0)).collect(),
        ),
        Activation::MaxPool(groups) => groups
            .iter()
            .map(|g| {
                let lo = g.iter().map(|&i| l[i]).fold(f64::NEG_INFINITY, f64::max);
                let hi = g.iter().map(|&i| u[i]).fold(f64::NEG_INFINITY, f64::max);
                (lo, hi)
            })
            .unzip(),
    }
}

fn propagate(net: &Network, domain: &BoxDomain, fixings: &PhaseFixings) -> Outcome<LayerBounds> {
    let mut out = LayerBounds {
        lower: Vec::with_capacity(net.num_linear()),
        upper: Vec::with_capacity(net.num_linear()),
    };
    let (mut l, mut u) = (domain.lower().to_vec(), domain.upper().to_vec());
    for (k, lin) in net.linears().iter().enumerate() {
        let (mut lo, mut hi) = affine_interval(lin, &l, &u);
        for j in 0..lo.len() {
            match fixings.get(k, j) {
                Some(super::Phase::Blocked) => hi[j] = hi[j].min(0.0),
                Some(super::Phase::Passing) => lo[j] = lo[j].max(0.0),
                None => {}
            }
            if !settle(&mut lo[j], &mut hi[j]) {
                return Outcome::Infeasible;
            }
        }
        if let Some(act) = net.activations().get(k) {
            (l, u) = activation_interval(act, &lo, &hi);
        }
        out.lower.push(lo);
        out.upper.push(hi);
    }
    Outcome::Feasible(out)
}

/// Interval bounds for every pre-activation, with fixed units clamped at 0 before propagating further.
pub fn interval_propagate(problem: &CanonicalProblem, fixings: &PhaseFixings) -> Outcome<LayerBounds> {
    propagate(problem.net(), problem.domain(), fixings)
}

/// Interval bounds of any network (any output width) over a box.
pub fn interval_bounds_unfixed(net: &Network, domain: &BoxDomain) -> LayerBounds {
    propagate(net, domain, &PhaseFixings::new()).unwrap()
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;
    use crate::bounds::Phase;
    use crate::network::tests::toy;

    fn toy_box() -> BoxDomain {
        BoxDomain::uniform(2, -2.0, 2.0).unwrap()
    }

    #[test]
    fn toy_interval_bounds() {
        let b = interval_bounds_unfixed(&toy(), &toy_box());
        assert_eq!(b.lower[0], vec![-4.0, -4.0]);
        assert_eq!(b.upper[0], vec![4.0, 4.0]);
        assert_eq!(b.output(), (-8.0, 0.0));
    }

    #[test]
    fn zero_weights_give_biases() {
        let lin = LinearLayer::from_rows(&[vec![0.0, 0.0], vec![0.0, 0.0]], vec![1.5, -2.0]).unwrap();
        let net = Network::new(vec![lin], vec![]).unwrap();
        let b = interval_bounds_unfixed(&net, &toy_box());
        assert_eq!(b.lower[0], vec![1.5, -2.0]);
        assert_eq!(b.upper[0], vec![1.5, -2.0]);
    }

    #[test]
    fn fixing_clamps_before_propagation() {
        let p = CanonicalProblem::new(toy(), toy_box()).unwrap();
        let f = PhaseFixings::new().with(0, 0, Phase::Blocked).unwrap();
        let b = interval_propagate(&p, &f).unwrap();
        assert_eq!(b.upper[0][0], 0.0);
        // a contributes nothing, b ∈ [0, 4]
        assert_eq!(b.output(), (-4.0, 0.0));
    }

    #[test]
    fn maxpool_interval() {
        let (l, u) = activation_interval(&Activation::MaxPool(vec![vec![0, 1]]), &[-1.0, 2.0], &[3.0, 2.5]);
        assert_eq!((l, u), (vec![2.0], vec![3.0]));
    }

    proptest! {
        #[test]
        fn interval_bounds_contain_samples(seed in 0u64..500, t in proptest::collection::vec(0.0f64..1.0, 3)) {
            let net = crate::datagen::gen_random_net(3, &[5, 4, 1], seed);
            let dom = BoxDomain::uniform(3, -1.0, 1.0).unwrap();
            let b = interval_bounds_unfixed(&net, &dom);
            let x: Vec<f64> = t.iter().map(|v| 2.0 * v - 1.0).collect();
            for (k, pre) in net.pre_activations(&x).unwrap().iter().enumerate() {
                for (j, v) in pre.iter().enumerate() {
                    prop_assert!(*v >= b.lower[k][j] - 1e-12 && *v <= b.upper[k][j] + 1e-12);
                }
            }
        }
    }
}
