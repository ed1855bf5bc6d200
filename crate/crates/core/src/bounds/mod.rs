//! Pre-activation bounds and lower bounds on the canonical output.
//!
//! Three families live here: interval propagation, the one-pass dual bound
//! (and its layer-by-layer use for intermediate bounds), and LP relaxations
//! of the ReLU graph in two strengths, the triangle hull ("Planet") and the
//! weaker box-capped version ("Reluplex").

mod dual;
mod interval;
mod relax;

use std::collections::BTreeMap;

pub use dual::{dual_pass, wk_dual_bound, wk_layer_bounds, DualState};
pub use interval::{interval_bounds_unfixed, interval_propagate};
pub use relax::{build_relaxation, lp_lower_bound, refine_bounds_lp, LowerBound, RelaxationKind, Relaxation, VarLayout};

pub(crate) use dual::{layerwise_bounds, LayerwiseMode};
pub(crate) use relax::refine_bounds_lp_counted;

use crate::error::{Error, Result};

/// Bounds within this distance of zero decide a unit's phase.
pub const PHASE_TOL: f64 = 1e-9;
/// Ambiguous units narrower than this are treated as fixed.
pub const DEGENERATE_WIDTH: f64 = 1e-12;

/// Result of a bounding step that can prove the subproblem empty.
#[derive(Debug, Clone, PartialEq)]
pub enum Outcome<T> {
    Feasible(T),
    Infeasible,
}

impl<T> Outcome<T> {
    pub fn feasible(self) -> Option<T> {
        match self {
            Outcome::Feasible(t) => Some(t),
            Outcome::Infeasible => None,
        }
    }

    pub fn is_infeasible(&self) -> bool {
        matches!(self, Outcome::Infeasible)
    }

    pub fn unwrap(self) -> T {
        self.feasible().expect("called `Outcome::unwrap` on `Infeasible`")
    }
}

/// Pre-activation bounds `lower[k][j] ≤ x̂_k[j] ≤ upper[k][j]` for every linear layer `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerBounds {
    pub lower: Vec<Vec<f64>>,
    pub upper: Vec<Vec<f64>>,
}

impl LayerBounds {
    pub fn num_layers(&self) -> usize {
        self.lower.len()
    }

    pub fn get(&self, layer: usize, unit: usize) -> (f64, f64) {
        (self.lower[layer][unit], self.upper[layer][unit])
    }

    /// Lower/upper bound of the (scalar) network output.
    pub fn output(&self) -> (f64, f64) {
        let k = self.lower.len() - 1;
        (self.lower[k][0], self.upper[k][0])
    }

    /// True when `other` is inside `self` elementwise, up to `tol`.
    pub fn contains(&self, other: &LayerBounds, tol: f64) -> bool {
        self.lower.iter().zip(&other.lower).all(|(a, b)| a.iter().zip(b).all(|(x, y)| *y >= x - tol))
            && self.upper.iter().zip(&other.upper).all(|(a, b)| a.iter().zip(b).all(|(x, y)| *y <= x + tol))
    }

    /// Applies phase fixings: Blocked caps the upper bound at 0, Passing lifts the lower bound to 0.
    pub fn apply_fixings(&mut self, fixings: &PhaseFixings) -> Outcome<()> {
        for (&(layer, unit), &phase) in fixings.iter() {
            if layer >= self.lower.len() {
                continue;
            }
            match phase {
                Phase::Blocked => self.upper[layer][unit] = self.upper[layer][unit].min(0.0),
                Phase::Passing => self.lower[layer][unit] = self.lower[layer][unit].max(0.0),
            }
            if !settle(&mut self.lower[layer][unit], &mut self.upper[layer][unit]) {
                return Outcome::Infeasible;
            }
        }
        Outcome::Feasible(())
    }

    /// Ambiguous, unfixed ReLU units as `(layer, unit)` in index order.
    pub fn ambiguous_units(&self, net: &crate::network::Network, fixings: &PhaseFixings) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for (k, act) in net.activations().iter().enumerate() {
            if *act != crate::network::Activation::Relu {
                continue;
            }
            for j in 0..self.lower[k].len() {
                if unit_phase(self.lower[k][j], self.upper[k][j], fixings.get(k, j)) == UnitPhase::Ambiguous {
                    out.push((k, j));
                }
            }
        }
        out
    }
}

/// Reconciles a possibly crossed interval; false if it is genuinely empty.
pub(crate) fn settle(l: &mut f64, u: &mut f64) -> bool {
    if *l <= *u {
        return true;
    }
    if *l - *u <= PHASE_TOL * (1.0 + l.abs().max(u.abs())) {
        let mid = 0.5 * (*l + *u);
        *l = mid;
        *u = mid;
        return true;
    }
    false
}

/// Elementwise intersection; crossed bounds mean the subproblem is empty.
pub fn best_bounds(a: &LayerBounds, b: &LayerBounds) -> Result<Outcome<LayerBounds>> {
    if a.lower.len() != b.lower.len() {
        return Err(Error::Dimension {
            expected: a.lower.len(),
            got: b.lower.len(),
        });
    }
    let mut out = a.clone();
    for k in 0..a.lower.len() {
        if a.lower[k].len() != b.lower[k].len() {
            return Err(Error::Dimension {
                expected: a.lower[k].len(),
                got: b.lower[k].len(),
            });
        }
        for j in 0..a.lower[k].len() {
            let mut l = a.lower[k][j].max(b.lower[k][j]);
            let mut u = a.upper[k][j].min(b.upper[k][j]);
            if !settle(&mut l, &mut u) {
                return Ok(Outcome::Infeasible);
            }
            out.lower[k][j] = l;
            out.upper[k][j] = u;
        }
    }
    Ok(Outcome::Feasible(out))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Phase {
    /// `x = 0`, `x̂ ≤ 0`
    Blocked,
    /// `x = x̂`, `x̂ ≥ 0`
    Passing,
}

/// ReLU phase decisions keyed by `(layer, unit)`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct PhaseFixings {
    map: BTreeMap<(usize, usize), Phase>,
}

impl PhaseFixings {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, layer: usize, unit: usize) -> Option<Phase> {
        self.map.get(&(layer, unit)).copied()
    }

    /// Copy with one more fixing; a unit may only be fixed once.
    pub fn with(&self, layer: usize, unit: usize, phase: Phase) -> Result<Self> {
        if self.map.contains_key(&(layer, unit)) {
            return Err(Error::Config(format!("unit ({layer}, {unit}) is already fixed")));
        }
        let mut map = self.map.clone();
        map.insert((layer, unit), phase);
        Ok(PhaseFixings { map })
    }

    pub fn iter(&self) -> impl Iterator<Item = (&(usize, usize), &Phase)> {
        self.map.iter()
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnitPhase {
    Blocked,
    Passing,
    Ambiguous,
}

/// Phase of a ReLU given its pre-activation bounds and optional fixing.
pub fn unit_phase(l: f64, u: f64, fixing: Option<Phase>) -> UnitPhase {
    match fixing {
        Some(Phase::Blocked) => UnitPhase::Blocked,
        Some(Phase::Passing) => UnitPhase::Passing,
        None if u <= PHASE_TOL => UnitPhase::Blocked,
        None if l >= -PHASE_TOL => UnitPhase::Passing,
        None if u - l < DEGENERATE_WIDTH => {
            if u > 0.0 {
                UnitPhase::Passing
            } else {
                UnitPhase::Blocked
            }
        }
        None => UnitPhase::Ambiguous,
    }
}
