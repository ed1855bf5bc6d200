//! Ground truth for small problems.
//!
//! [`enumerate_min`] solves one exact LP per activation pattern of the
//! ambiguous ReLUs; [`sample_min`] evaluates the network at random points.
//! The pattern LPs are built here from scratch rather than through the
//! relaxation code, so the two can check each other.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::bounds::{interval_bounds_unfixed, LayerBounds};
use crate::error::{Error, Result};
use crate::lp::{self, LinearProgram, LpStatus, Relation};
use crate::network::CanonicalProblem;

pub const DEFAULT_PATTERN_CAP: usize = 20;

#[derive(Debug, Clone, PartialEq)]
pub struct OracleMin {
    pub value: f64,
    pub point: Vec<f64>,
}

/// ReLUs whose sign is not settled by `bounds`, as `(layer, unit)`.
pub fn ambiguous_relus(bounds: &LayerBounds) -> Vec<(usize, usize)> {
    let hidden = bounds.lower.len() - 1;
    let mut out = Vec::new();
    for k in 0..hidden {
        for j in 0..bounds.lower[k].len() {
            if bounds.lower[k][j] < 0.0 && bounds.upper[k][j] > 0.0 {
                out.push((k, j));
            }
        }
    }
    out
}

/// The region of inputs with the given activation signs, as an LP minimising the output.
///
/// `active(k, j)` says whether unit `j` of layer `k` is on. The LP has the
/// input and every pre-activation as variables.
pub fn pattern_lp(problem: &CanonicalProblem, active: impl Fn(usize, usize) -> bool) -> LinearProgram {
    let net = problem.net();
    let dom = problem.domain();
    let mut lp = LinearProgram::new(0);
    let mut prev: Vec<usize> = (0..dom.dim()).map(|j| lp.add_var(dom.lower()[j], dom.upper()[j])).collect();
    let mut prev_on: Vec<bool> = vec![true; dom.dim()];
    let n = net.num_linear();
    for (k, lin) in net.linears().iter().enumerate() {
        let cur: Vec<usize> = (0..lin.rows()).map(|_| lp.add_var(f64::NEG_INFINITY, f64::INFINITY)).collect();
        for i in 0..lin.rows() {
            let mut row = vec![(cur[i], 1.0)];
            for (c, &v) in prev.iter().enumerate() {
                let w = lin.weights()[(i, c)];
                if prev_on[c] && w != 0.0 {
                    row.push((v, -w));
                }
            }
            lp.add_constraint(row, Relation::Eq, lin.bias()[i]);
        }
        if k + 1 < n {
            prev_on = (0..lin.rows()).map(|j| active(k, j)).collect();
            for j in 0..lin.rows() {
                let rel = if prev_on[j] { Relation::Ge } else { Relation::Le };
                lp.add_constraint(vec![(cur[j], 1.0)], rel, 0.0);
            }
        } else {
            lp.set_single_objective(cur[0], 1.0);
        }
        prev = cur;
    }
    lp
}

/// Exact minimum of the canonical output over the box.
///
/// Units settled by `bounds` keep their sign; the `R` ambiguous ones are
/// enumerated, `2^R` LPs in all. Fails when `R` exceeds `cap`.
pub fn enumerate_min(problem: &CanonicalProblem, bounds: &LayerBounds, cap: usize) -> Result<OracleMin> {
    if !problem.net().is_relu_only() {
        return Err(Error::Unsupported("pattern enumeration needs a ReLU-only network".into()));
    }
    let amb = ambiguous_relus(bounds);
    if amb.len() > cap {
        return Err(Error::Oracle(format!("{} ambiguous ReLUs exceed the cap of {cap}", amb.len())));
    }
    let index = |k: usize, j: usize| amb.iter().position(|&a| a == (k, j));
    let best = (0u64..1u64 << amb.len())
        .into_par_iter()
        .map(|pattern| {
            let lp = pattern_lp(problem, |k, j| match index(k, j) {
                Some(bit) => pattern >> bit & 1 == 1,
                None => bounds.lower[k][j] >= 0.0,
            });
            let sol = lp::solve(&lp);
            match sol.status {
                LpStatus::Optimal => Ok(Some((sol.objective, pattern, sol.primal[..problem.domain().dim()].to_vec()))),
                LpStatus::Infeasible => Ok(None),
                s => Err(Error::Solver(s)),
            }
        })
        .try_reduce(
            || None,
            |a, b| {
                Ok(match (a, b) {
                    (None, x) | (x, None) => x,
                    (Some(a), Some(b)) => Some(if (b.0, b.1) < (a.0, a.1) { b } else { a }),
                })
            },
        )?;
    let (value, _, point) = best.ok_or_else(|| Error::Oracle("every activation pattern is infeasible".into()))?;
    Ok(OracleMin { value, point })
}

/// [`enumerate_min`] with interval bounds, after rewriting any max-pools as ReLUs.
pub fn exact_min(problem: &CanonicalProblem) -> Result<OracleMin> {
    let p = problem.relu_only()?;
    let bounds = interval_bounds_unfixed(p.net(), p.domain());
    enumerate_min(&p, &bounds, DEFAULT_PATTERN_CAP)
}

/// Smallest output over `n` uniform samples from the box.
pub fn sample_min(problem: &CanonicalProblem, n: usize, seed: u64) -> Result<OracleMin> {
    if n == 0 {
        return Err(Error::Config("sample count must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dom = problem.domain();
    let mut best = OracleMin {
        value: f64::INFINITY,
        point: Vec::new(),
    };
    for _ in 0..n {
        let x: Vec<f64> = (0..dom.dim()).map(|j| rng.gen_range(dom.lower()[j]..=dom.upper()[j])).collect();
        let v = problem.eval(&x)?;
        if v < best.value {
            best = OracleMin { value: v, point: x };
        }
    }
    Ok(best)
}
