use std::ops::Range;

use rayon::prelude::*;

use super::{settle, unit_phase, LayerBounds, Outcome, Phase, PhaseFixings, UnitPhase};
use crate::error::{Error, Result};
use crate::lp::{self, LinearProgram, LpStatus, Relation};
use crate::network::{Activation, CanonicalProblem};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RelaxationKind {
    /// `x ≥ 0`, `x ≥ x̂`, `x ≤ u (x̂ - l) / (u - l)`
    Planet,
    /// `x ≥ 0`, `x ≥ x̂`, `x ≤ u`
    Reluplex,
}

impl std::str::FromStr for RelaxationKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "planet" => Ok(RelaxationKind::Planet),
            "reluplex" => Ok(RelaxationKind::Reluplex),
            _ => Err(Error::Config(format!("unknown relaxation `{s}`"))),
        }
    }
}

/// Where each network quantity lives among the LP variables.
#[derive(Debug, Clone, PartialEq)]
pub struct VarLayout {
    pub input: Range<usize>,
    /// Pre-activation `x̂_k`.
    pub pre: Vec<Range<usize>>,
    /// Activation output after `x̂_k`.
    pub post: Vec<Range<usize>>,
}

#[derive(Debug, Clone)]
pub struct Relaxation {
    pub lp: LinearProgram,
    pub layout: VarLayout,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LowerBound {
    pub value: f64,
    /// Input part of the LP optimum.
    pub witness: Vec<f64>,
}

fn range_of(lp: &LinearProgram, width: usize) -> Range<usize> {
    let start = lp.num_vars();
    start..start + width
}

/// Variable bounds of `x̂_k[j]` after applying a fixing; `None` leaves the variable free.
fn pre_bounds(l: f64, u: f64, fixing: Option<Phase>) -> (f64, f64) {
    let (mut l, mut u) = match fixing {
        Some(Phase::Blocked) => (l, u.min(0.0)),
        Some(Phase::Passing) => (l.max(0.0), u),
        None => (l, u),
    };
    settle(&mut l, &mut u);
    (l, u)
}

/// Relaxation of the network up to and including `x̂_top`.
///
/// Layers before `top` get their bounds as variable bounds; `x̂_top` only
/// gets its fixings.
pub(crate) fn build_upto(
    problem: &CanonicalProblem,
    bounds: &LayerBounds,
    fixings: &PhaseFixings,
    kind: RelaxationKind,
    top: usize,
) -> Result<Relaxation> {
    let net = problem.net();
    let dom = problem.domain();
    let mut lp = LinearProgram::new(0);
    let input = range_of(&lp, dom.dim());
    for j in 0..dom.dim() {
        lp.add_var(dom.lower()[j], dom.upper()[j]);
    }
    let mut layout = VarLayout {
        input: input.clone(),
        pre: Vec::new(),
        post: Vec::new(),
    };
    let mut prev = input;
    for k in 0..=top {
        let lin = &net.linears()[k];
        let pre = range_of(&lp, lin.rows());
        for j in 0..lin.rows() {
            let (l, u) = if k < top {
                pre_bounds(bounds.lower[k][j], bounds.upper[k][j], fixings.get(k, j))
            } else {
                pre_bounds(f64::NEG_INFINITY, f64::INFINITY, fixings.get(k, j))
            };
            lp.add_var(l, u);
        }
        for i in 0..lin.rows() {
            let mut coeffs = vec![(pre.start + i, 1.0)];
            for (c, v) in prev.clone().enumerate() {
                let w = lin.weights()[(i, c)];
                if w != 0.0 {
                    coeffs.push((v, -w));
                }
            }
            lp.add_constraint(coeffs, Relation::Eq, lin.bias()[i]);
        }
        layout.pre.push(pre.clone());
        if k == top {
            break;
        }
        let act = &net.activations()[k];
        let post = range_of(&lp, act.output_width(lin.rows()));
        match act {
            Activation::Relu => {
                for j in 0..lin.rows() {
                    let (l, u) = (bounds.lower[k][j], bounds.upper[k][j]);
                    let xh = pre.start + j;
                    match unit_phase(l, u, fixings.get(k, j)) {
                        UnitPhase::Blocked => {
                            lp.add_var(0.0, 0.0);
                        }
                        UnitPhase::Passing => {
                            let z = lp.add_var(f64::NEG_INFINITY, f64::INFINITY);
                            lp.add_constraint(vec![(z, 1.0), (xh, -1.0)], Relation::Eq, 0.0);
                        }
                        UnitPhase::Ambiguous => {
                            if !l.is_finite() || !u.is_finite() {
                                return Err(Error::MissingBounds { layer: k, unit: j });
                            }
                            let z = match kind {
                                RelaxationKind::Planet => lp.add_var(0.0, f64::INFINITY),
                                RelaxationKind::Reluplex => lp.add_var(0.0, u),
                            };
                            lp.add_constraint(vec![(z, 1.0), (xh, -1.0)], Relation::Ge, 0.0);
                            if kind == RelaxationKind::Planet {
                                let s = u / (u - l);
                                lp.add_constraint(vec![(z, 1.0), (xh, -s)], Relation::Le, -s * l);
                            }
                        }
                    }
                }
            }
            Activation::MaxPool(groups) => {
                for g in groups {
                    let z = lp.add_var(f64::NEG_INFINITY, f64::INFINITY);
                    if let [i] = g[..] {
                        lp.add_constraint(vec![(z, 1.0), (pre.start + i, -1.0)], Relation::Eq, 0.0);
                        continue;
                    }
                    let mut sum = vec![(z, 1.0)];
                    let (mut lsum, mut lmax) = (0.0, f64::NEG_INFINITY);
                    for &i in g {
                        let l = bounds.lower[k][i];
                        if !l.is_finite() {
                            return Err(Error::MissingBounds { layer: k, unit: i });
                        }
                        lp.add_constraint(vec![(z, 1.0), (pre.start + i, -1.0)], Relation::Ge, 0.0);
                        sum.push((pre.start + i, -1.0));
                        lsum += l;
                        lmax = f64::max(lmax, l);
                    }
                    lp.add_constraint(sum, Relation::Le, lmax - lsum);
                }
            }
        }
        layout.post.push(post.clone());
        prev = post;
    }
    Ok(Relaxation { lp, layout })
}

/// LP relaxation of the whole network; the objective minimises the canonical output.
pub fn build_relaxation(
    problem: &CanonicalProblem,
    bounds: &LayerBounds,
    fixings: &PhaseFixings,
    kind: RelaxationKind,
) -> Result<Relaxation> {
    let top = problem.net().num_linear() - 1;
    let mut rel = build_upto(problem, bounds, fixings, kind, top)?;
    let out = rel.layout.pre[top].start;
    rel.lp.set_single_objective(out, 1.0);
    Ok(rel)
}

fn status_error(status: LpStatus) -> Error {
    Error::Solver(status)
}

/// Minimum of the relaxation, or `Infeasible` when the subproblem is empty.
pub fn lp_lower_bound(
    problem: &CanonicalProblem,
    bounds: &LayerBounds,
    fixings: &PhaseFixings,
    kind: RelaxationKind,
) -> Result<Outcome<LowerBound>> {
    let rel = build_relaxation(problem, bounds, fixings, kind)?;
    let sol = lp::solve(&rel.lp);
    match sol.status {
        LpStatus::Optimal => Ok(Outcome::Feasible(LowerBound {
            value: sol.objective,
            witness: sol.primal[rel.layout.input.clone()].to_vec(),
        })),
        LpStatus::Infeasible => Ok(Outcome::Infeasible),
        s => Err(status_error(s)),
    }
}

/// Tightens the selected layers with per-unit Planet LPs; also returns the number of LPs solved.
pub(crate) fn refine_bounds_lp_counted(
    problem: &CanonicalProblem,
    bounds: &LayerBounds,
    fixings: &PhaseFixings,
    layers: &[usize],
) -> Result<(Outcome<LayerBounds>, usize)> {
    let mut cur = bounds.clone();
    if cur.apply_fixings(fixings).is_infeasible() {
        return Ok((Outcome::Infeasible, 0));
    }
    let mut layers = layers.to_vec();
    layers.sort_unstable();
    layers.dedup();
    let mut count = 0;
    for k in layers {
        let rel = build_upto(problem, &cur, fixings, RelaxationKind::Planet, k)?;
        let pre = rel.layout.pre[k].clone();
        let solved: Vec<[lp::LpSolution; 2]> = pre
            .clone()
            .into_par_iter()
            .map(|v| {
                let mut lo = rel.lp.clone();
                lo.set_single_objective(v, 1.0);
                let mut hi = rel.lp.clone();
                hi.set_single_objective(v, -1.0);
                [lp::solve(&lo), lp::solve(&hi)]
            })
            .collect();
        count += 2 * solved.len();
        for (j, [lo, hi]) in solved.into_iter().enumerate() {
            for s in [&lo, &hi] {
                match s.status {
                    LpStatus::Optimal => {}
                    LpStatus::Infeasible => return Ok((Outcome::Infeasible, count)),
                    other => return Err(status_error(other)),
                }
            }
            let l = cur.lower[k][j].max(lo.objective);
            let u = cur.upper[k][j].min(-hi.objective);
            let (mut l, mut u) = pre_bounds(l, u, fixings.get(k, j));
            if !settle(&mut l, &mut u) {
                return Ok((Outcome::Infeasible, count));
            }
            cur.lower[k][j] = l;
            cur.upper[k][j] = u;
        }
    }
    Ok((Outcome::Feasible(cur), count))
}

/// Tightens the selected layers, front to back, by minimising and maximising
/// each pre-activation over the Planet relaxation of the layers before it.
pub fn refine_bounds_lp(
    problem: &CanonicalProblem,
    bounds: &LayerBounds,
    fixings: &PhaseFixings,
    layers: &[usize],
) -> Result<Outcome<LayerBounds>> {
    Ok(refine_bounds_lp_counted(problem, bounds, fixings, layers)?.0)
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;
    use crate::bounds::interval_propagate;
    use crate::network::tests::toy;
    use crate::network::{canonicalize, BoxDomain, LinearLayer, Network, PropertyFormula};

    fn toy_problem() -> CanonicalProblem {
        let dom = BoxDomain::uniform(2, -2.0, 2.0).unwrap();
        canonicalize(&toy(), &PropertyFormula::atom(vec![1.0], -5.0), &dom).unwrap()
    }

    fn toy_bounds(p: &CanonicalProblem) -> LayerBounds {
        interval_propagate(p, &PhaseFixings::new()).unwrap()
    }

    #[test]
    fn toy_planet_bound() {
        let p = toy_problem();
        let lb = lp_lower_bound(&p, &toy_bounds(&p), &PhaseFixings::new(), RelaxationKind::Planet)
            .unwrap()
            .unwrap();
        assert!((lb.value - 1.0).abs() < 1e-8, "{}", lb.value);
        assert_eq!(lb.witness.len(), 2);
    }

    #[test]
    fn toy_reluplex_bound_is_looser() {
        // a, b ≤ 4 with a ≥ â, b ≥ -â: both can reach 4, so 5 - 8 = -3.
        let p = toy_problem();
        let lb = lp_lower_bound(&p, &toy_bounds(&p), &PhaseFixings::new(), RelaxationKind::Reluplex)
            .unwrap()
            .unwrap();
        assert!((lb.value + 3.0).abs() < 1e-8);
    }

    #[test]
    fn toy_planet_row() {
        let p = toy_problem();
        let rel = build_relaxation(&p, &toy_bounds(&p), &PhaseFixings::new(), RelaxationKind::Planet).unwrap();
        let a = rel.layout.post[0].start;
        let ah = rel.layout.pre[0].start;
        let row = rel
            .lp
            .constraints
            .iter()
            .find(|c| c.relation == Relation::Le && c.coeffs.contains(&(a, 1.0)))
            .unwrap();
        assert_eq!(row.coeffs, vec![(a, 1.0), (ah, -0.5)]);
        assert_eq!(row.rhs, 2.0);

        let rel = build_relaxation(&p, &toy_bounds(&p), &PhaseFixings::new(), RelaxationKind::Reluplex).unwrap();
        assert_eq!(rel.lp.upper[a], 4.0);
    }

    #[test]
    fn passing_unit_is_exact() {
        let p = toy_problem();
        let mut b = toy_bounds(&p);
        b.lower[0][0] = 0.0;
        let rel = build_relaxation(&p, &b, &PhaseFixings::new(), RelaxationKind::Planet).unwrap();
        let a = rel.layout.post[0].start;
        let ah = rel.layout.pre[0].start;
        let rows: Vec<_> = rel.lp.constraints.iter().filter(|c| c.coeffs.iter().any(|t| t.0 == a)).collect();
        assert_eq!(rows.len(), 2);
        assert!(rows.iter().any(|c| c.relation == Relation::Eq && c.coeffs == vec![(a, 1.0), (ah, -1.0)]));
    }

    #[test]
    fn contradictory_fixing_is_infeasible() {
        let net = Network::new(
            vec![LinearLayer::identity(1), LinearLayer::identity(1)],
            vec![Activation::Relu],
        )
        .unwrap();
        let p = CanonicalProblem::new(net, BoxDomain::uniform(1, 1.0, 2.0).unwrap()).unwrap();
        let b = LayerBounds {
            lower: vec![vec![-1.0], vec![0.0]],
            upper: vec![vec![2.0], vec![2.0]],
        };
        let f = PhaseFixings::new().with(0, 0, Phase::Blocked).unwrap();
        assert!(lp_lower_bound(&p, &b, &f, RelaxationKind::Planet).unwrap().is_infeasible());
    }

    #[test]
    fn missing_bounds_error() {
        let p = toy_problem();
        let mut b = toy_bounds(&p);
        b.lower[0][1] = f64::NEG_INFINITY;
        assert!(matches!(
            build_relaxation(&p, &b, &PhaseFixings::new(), RelaxationKind::Planet),
            Err(Error::MissingBounds { layer: 0, unit: 1 })
        ));
    }

    #[test]
    fn toy_refinement() {
        let p = toy_problem();
        let b = toy_bounds(&p);
        let r = refine_bounds_lp(&p, &b, &PhaseFixings::new(), &[0]).unwrap().unwrap();
        assert_eq!(r, b);
        let r = refine_bounds_lp(&p, &b, &PhaseFixings::new(), &[0, 1]).unwrap().unwrap();
        assert!((r.lower[1][0] - 1.0).abs() < 1e-8);
        assert!((r.upper[1][0] - 5.0).abs() < 1e-8);
        let same = refine_bounds_lp(&p, &b, &PhaseFixings::new(), &[]).unwrap().unwrap();
        assert_eq!(same, b);
    }

    #[test]
    fn maxpool_hull() {
        let net = Network::new(
            vec![LinearLayer::identity(2), LinearLayer::identity(1)],
            vec![Activation::MaxPool(vec![vec![0, 1]])],
        )
        .unwrap();
        let p = CanonicalProblem::new(net, BoxDomain::new(vec![-1.0, 0.0], vec![1.0, 2.0]).unwrap()).unwrap();
        let b = interval_propagate(&p, &PhaseFixings::new()).unwrap();
        let lb = lp_lower_bound(&p, &b, &PhaseFixings::new(), RelaxationKind::Planet).unwrap().unwrap();
        // max(x1, x2) ≥ x2 ≥ 0, attained at x2 = 0
        assert!(lb.value.abs() < 1e-8);
    }

    proptest! {
        #[test]
        fn planet_hull_contains_relu_and_is_tight(l in -10.0f64..-0.01, u in 0.01f64..10.0, t in 0.0f64..1.0) {
            let xh = l + t * (u - l);
            let z = xh.max(0.0);
            let upper = u * (xh - l) / (u - l);
            prop_assert!(z >= 0.0 && z >= xh && z <= upper + 1e-12);
            prop_assert!((u * (l - l) / (u - l)).abs() < 1e-12);
            prop_assert!((u * (u - l) / (u - l) - u).abs() < 1e-12);
        }

        #[test]
        fn fixing_never_lowers_planet_bound(seed in 0u64..200, unit in 0usize..5, passing in any::<bool>()) {
            let net = crate::datagen::gen_random_net(3, &[5, 4, 1], seed);
            let p = CanonicalProblem::new(net, BoxDomain::uniform(3, -1.0, 1.0).unwrap()).unwrap();
            let b = interval_propagate(&p, &PhaseFixings::new()).unwrap();
            let base = lp_lower_bound(&p, &b, &PhaseFixings::new(), RelaxationKind::Planet).unwrap().unwrap();
            let phase = if passing { Phase::Passing } else { Phase::Blocked };
            let f = PhaseFixings::new().with(0, unit, phase).unwrap();
            if let Outcome::Feasible(child) = lp_lower_bound(&p, &b, &f, RelaxationKind::Planet).unwrap() {
                prop_assert!(child.value >= base.value - 1e-7);
            }
        }
    }
}
