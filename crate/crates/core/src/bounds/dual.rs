use nalgebra::{DMatrix, DVector};

use super::interval::{activation_interval, affine_interval};
use super::{settle, unit_phase, LayerBounds, Outcome, Phase, PhaseFixings, UnitPhase};
use crate::error::{Error, Result};
use crate::network::{Activation, CanonicalProblem};

/// Multipliers of one backward pass for the scalar output.
///
/// `nu[k]` is attached to pre-activation `x̂_k`, `nu_hat[k]` to the ReLU
/// output after it; `sets[k]` is the phase partition used for layer `k`.
#[derive(Debug, Clone)]
pub struct DualState {
    pub nu: Vec<DVector<f64>>,
    pub nu_hat: Vec<DVector<f64>>,
    pub sets: Vec<Vec<UnitPhase>>,
    pub value: f64,
}

/// Backward pass for the objectives `min C x̂_top`; returns one lower bound per row of `c`.
fn backward(
    problem: &CanonicalProblem,
    bounds: &LayerBounds,
    fixings: &PhaseFixings,
    top: usize,
    c: &DMatrix<f64>,
    mut record: Option<&mut DualState>,
) -> Result<DVector<f64>> {
    let net = problem.net();
    let lin = net.linears();
    if let Some(k) = net.activations()[..top].iter().position(|a| *a != Activation::Relu) {
        return Err(Error::Unsupported(format!(
            "dual bound needs ReLU activations; layer {k} is a max-pool"
        )));
    }
    let m = c.nrows();
    let mut nu = -c.clone();
    let mut f = -(&nu * lin[top].bias());
    for k in (0..top).rev() {
        let nu_hat = &nu * lin[k + 1].weights();
        let w = nu_hat.ncols();
        let mut next = DMatrix::zeros(m, w);
        let mut sets = Vec::with_capacity(w);
        for j in 0..w {
            let (l, u) = (bounds.lower[k][j], bounds.upper[k][j]);
            let phase = unit_phase(l, u, fixings.get(k, j));
            match phase {
                UnitPhase::Blocked => {}
                UnitPhase::Passing => next.set_column(j, &nu_hat.column(j)),
                UnitPhase::Ambiguous => {
                    if !l.is_finite() || !u.is_finite() {
                        return Err(Error::MissingBounds { layer: k, unit: j });
                    }
                    let slope = u / (u - l);
                    let offset = u * l / (u - l);
                    next.set_column(j, &(nu_hat.column(j) * slope));
                    for r in 0..m {
                        f[r] += offset * nu_hat[(r, j)].max(0.0);
                    }
                }
            }
            sets.push(phase);
        }
        nu = next;
        f -= &nu * lin[k].bias();
        if let Some(rec) = record.as_deref_mut() {
            rec.nu.push(nu.row(0).transpose());
            rec.nu_hat.push(nu_hat.row(0).transpose());
            rec.sets.push(sets);
        }
    }
    let nu_in = &nu * lin[0].weights();
    let dom = problem.domain();
    for r in 0..m {
        for j in 0..nu_in.ncols() {
            let v = nu_in[(r, j)];
            f[r] += -dom.upper()[j] * v.max(0.0) + dom.lower()[j] * (-v).max(0.0);
        }
    }
    if let Some(rec) = record {
        rec.nu.reverse();
        rec.nu_hat.reverse();
        rec.sets.reverse();
        rec.value = f[0];
    }
    Ok(f)
}

fn clamped(bounds: &LayerBounds, fixings: &PhaseFixings) -> Option<LayerBounds> {
    let mut b = bounds.clone();
    b.apply_fixings(fixings).feasible().map(|_| b)
}

/// One-pass dual lower bound on the canonical output; `+∞` when the fixings contradict the bounds.
pub fn wk_dual_bound(problem: &CanonicalProblem, bounds: &LayerBounds, fixings: &PhaseFixings) -> Result<f64> {
    let Some(b) = clamped(bounds, fixings) else {
        return Ok(f64::INFINITY);
    };
    let top = problem.net().num_linear() - 1;
    let f = backward(problem, &b, fixings, top, &DMatrix::from_element(1, 1, 1.0), None)?;
    Ok(f[0])
}

/// The multipliers behind [`wk_dual_bound`]; `None` when the fixings contradict the bounds.
pub fn dual_pass(problem: &CanonicalProblem, bounds: &LayerBounds, fixings: &PhaseFixings) -> Result<Option<DualState>> {
    let Some(b) = clamped(bounds, fixings) else {
        return Ok(None);
    };
    let top = problem.net().num_linear() - 1;
    let mut state = DualState {
        nu: Vec::new(),
        nu_hat: Vec::new(),
        sets: Vec::new(),
        value: f64::NAN,
    };
    backward(problem, &b, fixings, top, &DMatrix::from_element(1, 1, 1.0), Some(&mut state))?;
    Ok(Some(state))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum LayerwiseMode {
    Interval,
    Dual,
    Best,
}

/// Layer-by-layer bounds from `start` onwards, keeping the first `start` layers of `prefix`.
///
/// Every recomputed layer is intersected with the matching layer of `prefix`
/// when one is given, so the result is never looser than it.
pub(crate) fn layerwise_bounds(
    problem: &CanonicalProblem,
    fixings: &PhaseFixings,
    mode: LayerwiseMode,
    prefix: Option<&LayerBounds>,
    start: usize,
) -> Result<Outcome<LayerBounds>> {
    let net = problem.net();
    let n = net.num_linear();
    let start = if prefix.is_some() { start.min(n) } else { 0 };
    let mut out = LayerBounds {
        lower: Vec::with_capacity(n),
        upper: Vec::with_capacity(n),
    };
    if let Some(p) = prefix {
        out.lower.extend(p.lower[..start].iter().cloned());
        out.upper.extend(p.upper[..start].iter().cloned());
        if out.apply_fixings(fixings).is_infeasible() {
            return Ok(Outcome::Infeasible);
        }
    }
    for k in start..n {
        let (mut lo, mut hi) = if k == 0 {
            affine_interval(&net.linears()[0], problem.domain().lower(), problem.domain().upper())
        } else {
            let (l, u) = activation_interval(&net.activations()[k - 1], &out.lower[k - 1], &out.upper[k - 1]);
            affine_interval(&net.linears()[k], &l, &u)
        };
        if k > 0 && mode != LayerwiseMode::Interval {
            let w = net.width(k);
            let mut c = DMatrix::zeros(2 * w, w);
            for j in 0..w {
                c[(j, j)] = 1.0;
                c[(w + j, j)] = -1.0;
            }
            let f = backward(problem, &out, fixings, k, &c, None)?;
            for j in 0..w {
                let (dl, du) = (f[j], -f[w + j]);
                if mode == LayerwiseMode::Dual {
                    lo[j] = dl;
                    hi[j] = du;
                } else {
                    lo[j] = lo[j].max(dl);
                    hi[j] = hi[j].min(du);
                }
            }
        }
        if let Some(p) = prefix {
            for j in 0..lo.len() {
                lo[j] = lo[j].max(p.lower[k][j]);
                hi[j] = hi[j].min(p.upper[k][j]);
            }
        }
        for j in 0..lo.len() {
            match fixings.get(k, j) {
                Some(Phase::Blocked) => hi[j] = hi[j].min(0.0),
                Some(Phase::Passing) => lo[j] = lo[j].max(0.0),
                None => {}
            }
            if !settle(&mut lo[j], &mut hi[j]) {
                return Ok(Outcome::Infeasible);
            }
        }
        out.lower.push(lo);
        out.upper.push(hi);
    }
    Ok(Outcome::Feasible(out))
}

/// Intermediate bounds where each unit is bounded by the dual of the sub-network ending at it.
pub fn wk_layer_bounds(problem: &CanonicalProblem, fixings: &PhaseFixings) -> Result<Outcome<LayerBounds>> {
    layerwise_bounds(problem, fixings, LayerwiseMode::Dual, None, 0)
}

#[cfg(test)]
mod tests {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::bounds::interval_propagate;
    use crate::network::tests::toy;
    use crate::network::{canonicalize, BoxDomain, LinearLayer, Network, PropertyFormula};

    fn toy_problem() -> CanonicalProblem {
        let dom = BoxDomain::uniform(2, -2.0, 2.0).unwrap();
        canonicalize(&toy(), &PropertyFormula::atom(vec![1.0], -5.0), &dom).unwrap()
    }

    #[test]
    fn toy_dual_value() {
        let p = toy_problem();
        let b = interval_propagate(&p, &PhaseFixings::new()).unwrap();
        let f = wk_dual_bound(&p, &b, &PhaseFixings::new()).unwrap();
        assert!((f - 1.0).abs() < 1e-12, "{f}");
        let s = dual_pass(&p, &b, &PhaseFixings::new()).unwrap().unwrap();
        assert_eq!(s.nu_hat[0].as_slice(), &[1.0, 1.0]);
        assert_eq!(s.nu[0].as_slice(), &[0.5, 0.5]);
        assert_eq!(s.sets[0], vec![UnitPhase::Ambiguous; 2]);
    }

    #[test]
    fn toy_first_layer_matches_interval() {
        let p = toy_problem();
        let wk = wk_layer_bounds(&p, &PhaseFixings::new()).unwrap().unwrap();
        assert_eq!(wk.lower[0], vec![-4.0, -4.0]);
        assert_eq!(wk.upper[0], vec![4.0, 4.0]);
        assert!((wk.lower[1][0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn all_passing_no_bias_equals_interval_of_linear_map() {
        let net = crate::datagen::gen_random_net(3, &[4, 1], 2);
        let dom = BoxDomain::uniform(3, -1.0, 1.0).unwrap();
        let p = CanonicalProblem::new(net.clone(), dom.clone()).unwrap();
        let mut fix = PhaseFixings::new();
        for j in 0..4 {
            fix = fix.with(0, j, Phase::Passing).unwrap();
        }
        let b = LayerBounds {
            lower: vec![vec![0.0; 4], vec![-10.0]],
            upper: vec![vec![10.0; 4], vec![10.0]],
        };
        let f = wk_dual_bound(&p, &b, &fix).unwrap();
        let lin = LinearLayer::compose(&net.linears()[1], &net.linears()[0]);
        let flat = Network::new(vec![lin], vec![]).unwrap();
        let expect = crate::bounds::interval_bounds_unfixed(&flat, &dom).lower[0][0];
        assert!((f - expect).abs() < 1e-12);
    }

    #[test]
    fn degenerate_unit_has_no_division() {
        let p = toy_problem();
        let b = LayerBounds {
            lower: vec![vec![1.0, -4.0], vec![-10.0]],
            upper: vec![vec![1.0, 4.0], vec![10.0]],
        };
        assert!(wk_dual_bound(&p, &b, &PhaseFixings::new()).unwrap().is_finite());
    }

    #[test]
    fn scalar_chain_matches_interval() {
        let lins = (0..4)
            .map(|i| LinearLayer::from_rows(&[vec![0.5 + i as f64]], vec![0.1]).unwrap())
            .collect();
        let net = Network::new(lins, vec![Activation::Relu; 3]).unwrap();
        let p = CanonicalProblem::new(net, BoxDomain::uniform(1, 0.0, 2.0).unwrap()).unwrap();
        let wk = wk_layer_bounds(&p, &PhaseFixings::new()).unwrap().unwrap();
        let iv = interval_propagate(&p, &PhaseFixings::new()).unwrap();
        assert!(wk.contains(&iv, 1e-12) && iv.contains(&wk, 1e-12));
    }

    #[test]
    fn wk_layer_bounds_contain_samples() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for seed in 0..20 {
            let net = crate::datagen::gen_random_net(3, &[6, 5, 1], seed);
            let dom = BoxDomain::uniform(3, -1.0, 1.0).unwrap();
            let p = CanonicalProblem::new(net.clone(), dom).unwrap();
            let wk = wk_layer_bounds(&p, &PhaseFixings::new()).unwrap().unwrap();
            for _ in 0..1000 {
                let x: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();
                for (k, pre) in net.pre_activations(&x).unwrap().iter().enumerate() {
                    for (j, v) in pre.iter().enumerate() {
                        assert!(*v >= wk.lower[k][j] - 1e-9 && *v <= wk.upper[k][j] + 1e-9);
                    }
                }
            }
        }
    }

    #[test]
    fn maxpool_is_rejected() {
        let net = Network::new(
            vec![LinearLayer::identity(2), LinearLayer::identity(1)],
            vec![Activation::MaxPool(vec![vec![0, 1]])],
        )
        .unwrap();
        let p = CanonicalProblem::new(net, BoxDomain::uniform(2, -1.0, 1.0).unwrap()).unwrap();
        assert!(matches!(
            wk_layer_bounds(&p, &PhaseFixings::new()),
            Err(Error::Unsupported(_))
        ));
    }
}
