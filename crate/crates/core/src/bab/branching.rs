use std::fmt;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::queue::Subproblem;
use crate::bounds::{
    dual_pass, layerwise_bounds, lp_lower_bound, wk_dual_bound, LayerBounds, LayerwiseMode, Outcome, Phase, PhaseFixings, RelaxationKind, UnitPhase,
};
use crate::error::Result;
use crate::network::{CanonicalProblem, Network};

/// Boxes narrower than this in every dimension are not split further.
pub const MIN_SPLIT_WIDTH: f64 = 1e-12;
/// Below this best score the choice falls back to a random unit.
pub const SCORE_FLOOR: f64 = 1e-4;
/// Relative tolerance under which two smart-branching scores tie.
pub const SCORE_TIE: f64 = 1e-6;
/// Smart branching only considers dimensions at least this fraction of the widest one.
pub const MIN_WIDTH_RATIO: f64 = 1.0 / 16.0;

/// How a child was derived from its parent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Branch {
    Root,
    Input { dim: usize, upper_half: bool },
    Relu { layer: usize, unit: usize, phase: Phase },
}

impl fmt::Display for Branch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Branch::Root => write!(f, "root"),
            Branch::Input { dim, upper_half } => {
                write!(f, "x{dim} {}", if *upper_half { "upper" } else { "lower" })
            }
            Branch::Relu { layer, unit, phase } => {
                let p = match phase {
                    Phase::Blocked => "blocked",
                    Phase::Passing => "passing",
                };
                write!(f, "relu {layer}:{unit} {p}")
            }
        }
    }
}

pub type Children = [(Subproblem, Branch); 2];

fn child(parent: &Subproblem) -> Subproblem {
    Subproblem {
        id: 0,
        domain: parent.domain.clone(),
        fixings: parent.fixings.clone(),
        lower_bound: parent.lower_bound,
        depth: parent.depth + 1,
        bounds: parent.bounds.clone(),
    }
}

fn bisect(parent: &Subproblem, dim: usize) -> Children {
    let (lo, hi) = parent.domain.bisect(dim);
    let mut a = child(parent);
    a.domain = lo;
    let mut b = child(parent);
    b.domain = hi;
    [
        (a, Branch::Input { dim, upper_half: false }),
        (b, Branch::Input { dim, upper_half: true }),
    ]
}

fn fix(parent: &Subproblem, layer: usize, unit: usize) -> Result<Children> {
    let mut out = Vec::with_capacity(2);
    for phase in [Phase::Blocked, Phase::Passing] {
        let mut c = child(parent);
        c.fixings = parent.fixings.with(layer, unit, phase)?;
        out.push((c, Branch::Relu { layer, unit, phase }));
    }
    let b = out.pop().unwrap();
    let a = out.pop().unwrap();
    Ok([a, b])
}

/// Index of the widest dimension (lowest index on ties), if any is splittable.
pub fn longest_dimension(sub: &Subproblem) -> Option<usize> {
    let dom = &sub.domain;
    let mut best: Option<usize> = None;
    for j in 0..dom.dim() {
        if dom.width(j) >= MIN_SPLIT_WIDTH && best.is_none_or(|b| dom.width(j) > dom.width(b)) {
            best = Some(j);
        }
    }
    best
}

/// Bisects the widest input dimension; `None` when the box is degenerate.
pub fn split_input_longest(sub: &Subproblem) -> Option<Children> {
    longest_dimension(sub).map(|d| bisect(sub, d))
}

/// Score of bisecting each dimension: the smaller of the two halves' bounds.
///
/// Dimensions narrower than `MIN_WIDTH_RATIO` times the widest get `None`.
/// Each half is bounded by the dual bound, or by the LP relaxation `lp` when given.
pub fn smart_scores(
    problem: &CanonicalProblem,
    sub: &Subproblem,
    parent: &LayerBounds,
    lp: Option<RelaxationKind>,
) -> Result<Vec<Option<f64>>> {
    let mut scores = Vec::with_capacity(sub.domain.dim());
    let widest = (0..sub.domain.dim()).map(|j| sub.domain.width(j)).fold(0.0, f64::max);
    for j in 0..sub.domain.dim() {
        if sub.domain.width(j) < MIN_SPLIT_WIDTH.max(MIN_WIDTH_RATIO * widest) {
            scores.push(None);
            continue;
        }
        let (lo, hi) = sub.domain.bisect(j);
        let mut worst = f64::INFINITY;
        for half in [lo, hi] {
            let p = problem.with_domain(half)?;
            let f = match layerwise_bounds(&p, &sub.fixings, LayerwiseMode::Best, Some(parent), 0)? {
                Outcome::Feasible(b) => {
                    let mut f = wk_dual_bound(&p, &b, &sub.fixings)?.max(b.output().0);
                    if let Some(kind) = lp {
                        f = match lp_lower_bound(&p, &b, &sub.fixings, kind)? {
                            Outcome::Feasible(lb) => f.max(lb.value),
                            Outcome::Infeasible => f64::INFINITY,
                        };
                    }
                    f
                }
                Outcome::Infeasible => f64::INFINITY,
            };
            worst = worst.min(f);
        }
        scores.push(Some(worst));
    }
    Ok(scores)
}

/// Bisects the dimension whose worse half has the best bound.
///
/// Scores within `SCORE_TIE` of each other count as equal and go to the wider dimension.
pub fn split_input_smart(
    problem: &CanonicalProblem,
    sub: &Subproblem,
    parent: &LayerBounds,
    lp: Option<RelaxationKind>,
) -> Result<Option<Children>> {
    let scores = smart_scores(problem, sub, parent, lp)?;
    let mut best: Option<(usize, f64)> = None;
    for (j, s) in scores.iter().enumerate() {
        if let Some(s) = *s {
            let better = match best {
                None => true,
                Some((i, b)) => {
                    let tol = SCORE_TIE * (1.0 + b.abs().min(s.abs()));
                    s > b + tol || (s >= b - tol && sub.domain.width(j) > sub.domain.width(i))
                }
            };
            if better {
                best = Some((j, s));
            }
        }
    }
    Ok(best.map(|(d, _)| bisect(sub, d)))
}

/// Fixes the first ambiguous ReLU (lowest layer, then index) both ways.
pub fn split_relu_first(net: &Network, sub: &Subproblem, bounds: &LayerBounds) -> Result<Option<Children>> {
    match bounds.ambiguous_units(net, &sub.fixings).first() {
        Some(&(k, j)) => fix(sub, k, j).map(Some),
        None => Ok(None),
    }
}

/// Estimated bound improvement of splitting each hidden unit; `-∞` for settled units.
///
/// All scores come from one backward dual pass.
pub fn babsr_scores(problem: &CanonicalProblem, bounds: &LayerBounds, fixings: &PhaseFixings) -> Result<Vec<Vec<f64>>> {
    let net = problem.net();
    let hidden = net.num_linear() - 1;
    let mut scores: Vec<Vec<f64>> = (0..hidden).map(|k| vec![f64::NEG_INFINITY; net.width(k)]).collect();
    let Some(state) = dual_pass(problem, bounds, fixings)? else {
        return Ok(scores);
    };
    for k in 0..hidden {
        let bias = net.linears()[k].bias();
        for j in 0..net.width(k) {
            if state.sets[k][j] != UnitPhase::Ambiguous {
                continue;
            }
            let (l, u) = (bounds.lower[k][j], bounds.upper[k][j]);
            let r = u / (u - l);
            let nb = state.nu_hat[k][j] * bias[j];
            let s = (r * nb).min((r - 1.0) * nb) - u * l / (u - l) * state.nu_hat[k][j].max(0.0);
            scores[k][j] = s.abs();
        }
    }
    Ok(scores)
}

/// Hidden layers whose producing linear map is mostly zeros and much wider than average.
pub fn sparse_layers(net: &Network) -> Vec<bool> {
    let hidden = net.num_linear() - 1;
    let mean = net.linears().iter().map(|l| l.rows()).sum::<usize>() as f64 / net.num_linear() as f64;
    (0..hidden)
        .map(|k| {
            let lin = &net.linears()[k];
            lin.sparsity() > 0.9 && lin.rows() as f64 > 4.0 * mean
        })
        .collect()
}

/// Unit with the largest score, skipping sparse layers unless nothing else scores well.
///
/// Ties go to the lowest `(layer, unit)`. When no score reaches the floor
/// a unit is drawn uniformly, from non-sparse layers if there are any.
pub fn babsr_choice(
    problem: &CanonicalProblem,
    bounds: &LayerBounds,
    fixings: &PhaseFixings,
    rng: &mut ChaCha8Rng,
) -> Result<Option<(usize, usize)>> {
    let scores = babsr_scores(problem, bounds, fixings)?;
    let sparse = sparse_layers(problem.net());
    let mut dense_best: Option<((usize, usize), f64)> = None;
    let mut sparse_best: Option<((usize, usize), f64)> = None;
    let (mut dense_units, mut sparse_units) = (Vec::new(), Vec::new());
    for (k, layer) in scores.iter().enumerate() {
        for (j, &s) in layer.iter().enumerate() {
            if s == f64::NEG_INFINITY {
                continue;
            }
            let (best, units) = if sparse[k] {
                (&mut sparse_best, &mut sparse_units)
            } else {
                (&mut dense_best, &mut dense_units)
            };
            units.push((k, j));
            if best.is_none_or(|(_, b)| s > b) {
                *best = Some(((k, j), s));
            }
        }
    }
    for best in [dense_best, sparse_best].into_iter().flatten() {
        if best.1 >= SCORE_FLOOR {
            return Ok(Some(best.0));
        }
    }
    let pool = if dense_units.is_empty() { &sparse_units } else { &dense_units };
    if pool.is_empty() {
        return Ok(None);
    }
    Ok(Some(pool[rng.gen_range(0..pool.len())]))
}

/// Fixes the highest-scoring ReLU both ways.
pub fn split_relu_babsr(
    problem: &CanonicalProblem,
    sub: &Subproblem,
    bounds: &LayerBounds,
    rng: &mut ChaCha8Rng,
) -> Result<Option<Children>> {
    match babsr_choice(problem, bounds, &sub.fixings, rng)? {
        Some((k, j)) => fix(sub, k, j).map(Some),
        None => Ok(None),
    }
}
