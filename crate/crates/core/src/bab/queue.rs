use std::collections::BTreeMap;

use ordered_float::OrderedFloat;

use crate::bounds::{LayerBounds, PhaseFixings};
use crate::network::BoxDomain;

/// One open domain of the search.
#[derive(Debug, Clone)]
pub struct Subproblem {
    pub id: u64,
    pub domain: BoxDomain,
    pub fixings: PhaseFixings,
    pub lower_bound: f64,
    pub depth: usize,
    pub bounds: Option<LayerBounds>,
}

/// Open subproblems ordered by lower bound, then by insertion order.
#[derive(Debug, Default)]
pub struct Queue {
    map: BTreeMap<(OrderedFloat<f64>, u64), Subproblem>,
    seq: u64,
}

impl Queue {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, sub: Subproblem) {
        self.map.insert((OrderedFloat(sub.lower_bound), self.seq), sub);
        self.seq += 1;
    }

    /// Removes the subproblem with the smallest lower bound; ties go to the earliest pushed.
    pub fn pick_out(&mut self) -> Option<Subproblem> {
        self.map.pop_first().map(|(_, s)| s)
    }

    /// Drops every subproblem whose lower bound is at least `threshold`; returns the dropped ones.
    pub fn prune(&mut self, threshold: f64) -> Vec<Subproblem> {
        self.map
            .split_off(&(OrderedFloat(threshold), 0))
            .into_values()
            .collect()
    }

    pub fn min_lower_bound(&self) -> Option<f64> {
        self.map.keys().next().map(|k| k.0 .0)
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }
}
