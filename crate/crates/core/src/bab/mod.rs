//! Branch and bound over input boxes or ReLU phases.
//!
//! [`run_bab`] keeps a queue of open subproblems ordered by lower bound,
//! repeatedly splits the weakest one, bounds both children and prunes
//! everything that cannot beat the best known value. In decide mode the
//! best known value starts at 0 and any point with a non-positive output
//! ends the search.

mod branching;
mod queue;
mod trace;

use std::fmt;
use std::str::FromStr;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub use branching::{
    babsr_choice, babsr_scores, longest_dimension, smart_scores, sparse_layers, split_input_longest, split_input_smart,
    split_relu_babsr, split_relu_first, Branch, Children, MIN_SPLIT_WIDTH, SCORE_FLOOR, SCORE_TIE, MIN_WIDTH_RATIO,
};
pub use queue::{Queue, Subproblem};
pub use trace::{write_trace_csv, TraceRecord, TRACE_HEADER};

use crate::bounds::{
    best_bounds, interval_propagate, layerwise_bounds, lp_lower_bound, refine_bounds_lp_counted, LayerBounds,
    LayerwiseMode, Outcome, PhaseFixings, RelaxationKind,
};
use crate::error::{Error, Result};
use crate::network::{validate_counterexample, BoxDomain, CanonicalProblem};

/// Decide-mode pruning margin: subproblems with a lower bound at least `-DECIDE_MARGIN` are closed.
pub const DECIDE_MARGIN: f64 = 1e-7;
/// Tolerance for accepting a counterexample.
pub const COUNTEREXAMPLE_TOL: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Mode {
    /// Find the minimum to within `epsilon`.
    Optimize,
    /// Decide whether the output is positive over the whole box.
    Decide,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Strategy {
    /// Bisect the longest input dimension.
    Bab,
    /// Bisect the input dimension with the best dual-bound improvement.
    BabSb,
    /// Fix the first ambiguous ReLU.
    ReluBab,
    /// Fix the ReLU with the best score.
    BabSr,
    /// As `BabSr`, with one layer of LP-refined bounds after each split.
    BabSrl,
}

impl Strategy {
    pub const ALL: [Strategy; 5] = [
        Strategy::Bab,
        Strategy::BabSb,
        Strategy::ReluBab,
        Strategy::BabSr,
        Strategy::BabSrl,
    ];

    pub fn splits_inputs(self) -> bool {
        matches!(self, Strategy::Bab | Strategy::BabSb)
    }

    pub fn default_policy(self) -> BoundPolicy {
        match self {
            Strategy::Bab | Strategy::BabSb | Strategy::ReluBab => BoundPolicy::LpAll,
            Strategy::BabSr => BoundPolicy::WkAndInterval,
            Strategy::BabSrl => BoundPolicy::LpOneLayer,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Strategy::Bab => "bab",
            Strategy::BabSb => "babsb",
            Strategy::ReluBab => "relubab",
            Strategy::BabSr => "babsr",
            Strategy::BabSrl => "babsrl",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Strategy::ALL
            .into_iter()
            .find(|st| st.name() == s.to_ascii_lowercase())
            .ok_or_else(|| Error::Config(format!("unknown strategy `{s}`")))
    }
}

/// Source of intermediate (hidden-layer) bounds for each subproblem.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BoundPolicy {
    /// Reuse the parent's bounds.
    None,
    /// Best of interval and dual bounds, layer by layer.
    WkAndInterval,
    /// Dual bounds, then LP refinement of every affected layer.
    LpAll,
    /// Dual bounds, then LP refinement of the first affected layer only.
    LpOneLayer,
}

impl BoundPolicy {
    pub fn name(self) -> &'static str {
        match self {
            BoundPolicy::None => "none",
            BoundPolicy::WkAndInterval => "wk",
            BoundPolicy::LpAll => "lp-all",
            BoundPolicy::LpOneLayer => "lp-one",
        }
    }
}

impl FromStr for BoundPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [
            BoundPolicy::None,
            BoundPolicy::WkAndInterval,
            BoundPolicy::LpAll,
            BoundPolicy::LpOneLayer,
        ]
        .into_iter()
        .find(|p| p.name() == s.to_ascii_lowercase())
        .ok_or_else(|| Error::Config(format!("unknown intermediate-bound policy `{s}`")))
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "optimize" => Ok(Mode::Optimize),
            "decide" => Ok(Mode::Decide),
            _ => Err(Error::Config(format!("unknown mode `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BabConfig {
    /// Optimize mode stops once `upper - lower ≤ epsilon`.
    pub epsilon: f64,
    pub timeout: Option<Duration>,
    pub mode: Mode,
    pub strategy: Strategy,
    pub relaxation: RelaxationKind,
    /// `None` picks the strategy's default.
    pub policy: Option<BoundPolicy>,
    /// Permits a policy other than the strategy's default.
    pub allow_any_policy: bool,
    /// Random points evaluated per subproblem for upper bounds.
    pub samples: usize,
    pub seed: u64,
    pub node_limit: Option<usize>,
    pub max_depth: usize,
    pub record_trace: bool,
}

impl Default for BabConfig {
    fn default() -> Self {
        BabConfig {
            epsilon: 1e-4,
            timeout: None,
            mode: Mode::Decide,
            strategy: Strategy::BabSr,
            relaxation: RelaxationKind::Planet,
            policy: None,
            allow_any_policy: false,
            samples: 10,
            seed: 0,
            node_limit: None,
            max_depth: 1_000_000,
            record_trace: false,
        }
    }
}

impl BabConfig {
    pub fn new(strategy: Strategy, mode: Mode) -> Self {
        BabConfig {
            strategy,
            mode,
            ..Default::default()
        }
    }

    /// Uses `policy` regardless of the strategy's default.
    pub fn with_policy(mut self, policy: BoundPolicy) -> Self {
        self.policy = Some(policy);
        self.allow_any_policy = true;
        self
    }

    pub fn effective_policy(&self) -> Result<BoundPolicy> {
        let default = self.strategy.default_policy();
        match self.policy {
            None => Ok(default),
            Some(p) if p == default || self.allow_any_policy => Ok(p),
            Some(p) => Err(Error::Config(format!(
                "strategy {} uses intermediate bounds `{}`; `{}` needs an explicit override",
                self.strategy,
                default.name(),
                p.name()
            ))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::Config("epsilon must be positive".into()));
        }
        self.effective_policy().map(|_| ())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum BabStatus {
    /// The property holds: the output is positive on the whole box.
    Unsat,
    /// Counterexample with a non-positive output.
    Sat(Vec<f64>),
    /// Time, node or depth limit reached first.
    Timeout,
    /// Optimize mode closed the gap around zero without settling the sign.
    Undecided,
}

impl BabStatus {
    pub fn label(&self) -> &'static str {
        match self {
            BabStatus::Unsat => "UNSAT",
            BabStatus::Sat(_) => "SAT",
            BabStatus::Timeout => "TIMEOUT",
            BabStatus::Undecided => "UNDECIDED",
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct BabStats {
    /// Subproblems bounded, root included.
    pub nodes: usize,
    pub lp_calls: usize,
    pub wall_time: f64,
    /// Seconds spent on each split-and-bound iteration.
    pub node_times: Vec<f64>,
    pub max_depth: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BabResult {
    pub status: BabStatus,
    /// Lower bound on the minimum over the whole box.
    pub global_lb: f64,
    /// Smallest output value found (`+∞` if none was evaluated).
    pub global_ub: f64,
    /// Input attaining `global_ub`, if one was found.
    pub best_point: Option<Vec<f64>>,
    /// A decide-mode subproblem was closed with a lower bound within the margin of 0.
    pub near_zero: bool,
    pub stats: BabStats,
    pub trace: Vec<TraceRecord>,
}

/// Minimum of the output over `samples` uniform points of `domain` and the optional witness.
pub fn compute_upper_bound(
    problem: &CanonicalProblem,
    domain: &BoxDomain,
    witness: Option<&[f64]>,
    samples: usize,
    rng: &mut ChaCha8Rng,
) -> Result<(f64, Vec<f64>)> {
    let mut best = (f64::INFINITY, Vec::new());
    let mut consider = |x: Vec<f64>| -> Result<()> {
        let v = problem.eval(&x)?;
        if v < best.0 {
            best = (v, x);
        }
        Ok(())
    };
    if let Some(w) = witness {
        consider(domain.clamp(w))?;
    }
    for _ in 0..samples {
        let x = (0..domain.dim())
            .map(|j| rng.gen_range(domain.lower()[j]..=domain.upper()[j]))
            .collect();
        consider(x)?;
    }
    Ok(best)
}

struct Driver<'a> {
    original: &'a CanonicalProblem,
    problem: CanonicalProblem,
    cfg: &'a BabConfig,
    policy: BoundPolicy,
    rng: ChaCha8Rng,
    start: Instant,
    stats: BabStats,
    trace: Vec<TraceRecord>,
    next_id: u64,
}

struct Evaluated {
    lower: f64,
    bounds: LayerBounds,
    witness: Vec<f64>,
}

impl Driver<'_> {
    fn hidden_layers(&self) -> usize {
        self.problem.net().num_linear() - 1
    }

    fn refine(&mut self, p: &CanonicalProblem, b: &LayerBounds, fix: &PhaseFixings, layers: &[usize]) -> Result<Outcome<LayerBounds>> {
        let (out, n) = refine_bounds_lp_counted(p, b, fix, layers)?;
        self.stats.lp_calls += n;
        Ok(out)
    }

    /// Intermediate bounds for a subproblem, recomputed from layer `from`.
    fn intermediate(
        &mut self,
        p: &CanonicalProblem,
        fix: &PhaseFixings,
        parent: Option<&LayerBounds>,
        from: usize,
    ) -> Result<Outcome<LayerBounds>> {
        let hidden = self.hidden_layers();
        if self.policy == BoundPolicy::None {
            if let Some(parent) = parent {
                let mut b = parent.clone();
                if b.apply_fixings(fix).is_infeasible() {
                    return Ok(Outcome::Infeasible);
                }
                if from == 0 {
                    return match interval_propagate(p, fix) {
                        Outcome::Feasible(iv) => best_bounds(&b, &iv),
                        Outcome::Infeasible => Ok(Outcome::Infeasible),
                    };
                }
                return Ok(Outcome::Feasible(b));
            }
        }
        let Outcome::Feasible(b) = layerwise_bounds(p, fix, LayerwiseMode::Best, parent, from)? else {
            return Ok(Outcome::Infeasible);
        };
        // The first layer is already exact over the box.
        let first = from.max(1);
        match self.policy {
            BoundPolicy::LpAll => {
                let layers: Vec<usize> = (first..hidden).collect();
                self.refine(p, &b, fix, &layers)
            }
            BoundPolicy::LpOneLayer if parent.is_some() && first < hidden => {
                let Outcome::Feasible(r) = self.refine(p, &b, fix, &[first])? else {
                    return Ok(Outcome::Infeasible);
                };
                layerwise_bounds(p, fix, LayerwiseMode::Best, Some(&r), first + 1)
            }
            _ => Ok(Outcome::Feasible(b)),
        }
    }

    fn evaluate(&mut self, p: &CanonicalProblem, fix: &PhaseFixings, bounds: LayerBounds) -> Result<Option<Evaluated>> {
        self.stats.lp_calls += 1;
        match lp_lower_bound(p, &bounds, fix, self.cfg.relaxation)? {
            Outcome::Infeasible => Ok(None),
            Outcome::Feasible(lb) => Ok(Some(Evaluated {
                lower: lb.value.max(bounds.output().0),
                bounds,
                witness: lb.witness,
            })),
        }
    }

    fn record(&mut self, id: u64, parent: Option<u64>, lb: f64, ub: f64, branch: Branch) {
        if self.cfg.record_trace {
            self.trace.push(TraceRecord {
                id,
                parent,
                lower_bound: lb,
                upper_bound: ub,
                branch: branch.to_string(),
                wall_time: self.start.elapsed().as_secs_f64(),
            });
        }
    }

    fn fresh_id(&mut self) -> u64 {
        let id = self.next_id;
        self.next_id += 1;
        id
    }

    fn split(&mut self, sub: &Subproblem) -> Result<Option<Children>> {
        if sub.depth >= self.cfg.max_depth {
            return Ok(None);
        }
        let bounds = sub.bounds.as_ref().expect("queued subproblems carry bounds");
        match self.cfg.strategy {
            Strategy::Bab => Ok(split_input_longest(sub)),
            Strategy::BabSb => {
                let p = self.problem.with_domain(sub.domain.clone())?;
                let lp = matches!(self.policy, BoundPolicy::LpAll | BoundPolicy::LpOneLayer).then_some(self.cfg.relaxation);
                split_input_smart(&p, sub, bounds, lp)
            }
            Strategy::ReluBab => split_relu_first(self.problem.net(), sub, bounds),
            Strategy::BabSr | Strategy::BabSrl => split_relu_babsr(&self.problem, sub, bounds, &mut self.rng),
        }
    }

    fn run(mut self) -> Result<BabResult> {
        let decide = self.cfg.mode == Mode::Decide;
        let mut global_ub = if decide { 0.0 } else { f64::INFINITY };
        // Best output value actually found; differs from `global_ub` only in decide mode.
        let mut seen_ub = f64::INFINITY;
        let mut best_point: Option<Vec<f64>> = None;
        let mut near_zero = false;
        let mut queue = Queue::new();
        // Lower bounds of leaves that could not be split further.
        let mut floor = f64::INFINITY;
        // Smallest lower bound of a subproblem closed by the threshold.
        let mut closed = f64::INFINITY;

        let root_problem = self.problem.clone();
        let fix = PhaseFixings::new();
        let root_bounds = self
            .intermediate(&root_problem, &fix, None, 0)?
            .feasible()
            .ok_or_else(|| Error::Oracle("root bounds are empty".into()))?;
        let root = self
            .evaluate(&root_problem, &fix, root_bounds)?
            .ok_or_else(|| Error::Oracle("root relaxation is infeasible".into()))?;
        self.stats.nodes = 1;
        let (ub, x) = compute_upper_bound(
            self.original,
            root_problem.domain(),
            Some(&root.witness),
            self.cfg.samples,
            &mut self.rng,
        )?;
        let root_id = self.fresh_id();
        self.record(root_id, None, root.lower, ub, Branch::Root);

        macro_rules! finish {
            ($status:expr, $lb:expr) => {{
                self.stats.wall_time = self.start.elapsed().as_secs_f64();
                return Ok(BabResult {
                    status: $status,
                    global_lb: $lb,
                    global_ub: if decide { seen_ub } else { global_ub },
                    best_point,
                    near_zero,
                    stats: self.stats,
                    trace: self.trace,
                });
            }};
        }
        macro_rules! offer_upper {
            ($ub:expr, $x:expr, $lb:expr) => {{
                let (ub, x) = ($ub, $x);
                if ub < seen_ub {
                    seen_ub = ub;
                    best_point = Some(x.clone());
                }
                if ub < global_ub || (decide && ub <= 0.0) {
                    global_ub = global_ub.min(ub);
                    if decide && ub <= 0.0 && validate_counterexample(self.original, &x, COUNTEREXAMPLE_TOL) {
                        finish!(BabStatus::Sat(x), $lb);
                    }
                }
            }};
        }

        offer_upper!(ub, x, root.lower);
        let threshold = |ub: f64| if decide { -DECIDE_MARGIN } else { ub };
        if root.lower < threshold(global_ub) {
            queue.push(Subproblem {
                id: root_id,
                domain: root_problem.domain().clone(),
                fixings: fix,
                lower_bound: root.lower,
                depth: 0,
                bounds: Some(root.bounds),
            });
        } else {
            closed = root.lower;
            near_zero |= decide && root.lower < DECIDE_MARGIN;
        }

        loop {
            let open = queue.min_lower_bound().unwrap_or(f64::INFINITY).min(floor);
            let global_lb = if decide { open.min(closed) } else { open.min(global_ub) };
            if queue.is_empty() || (!decide && global_ub - global_lb <= self.cfg.epsilon) {
                let status = if decide {
                    if floor < -DECIDE_MARGIN {
                        BabStatus::Undecided
                    } else {
                        BabStatus::Unsat
                    }
                } else if global_ub <= 0.0 {
                    BabStatus::Sat(best_point.clone().unwrap_or_default())
                } else if global_lb > 0.0 {
                    BabStatus::Unsat
                } else {
                    BabStatus::Undecided
                };
                finish!(status, global_lb);
            }
            let out_of_time = self.cfg.timeout.is_some_and(|t| self.start.elapsed() >= t);
            let out_of_nodes = self.cfg.node_limit.is_some_and(|n| self.stats.nodes >= n);
            if out_of_time || out_of_nodes {
                finish!(BabStatus::Timeout, global_lb);
            }

            let tick = Instant::now();
            let sub = queue.pick_out().expect("queue is not empty");
            let Some(children) = self.split(&sub)? else {
                floor = floor.min(sub.lower_bound);
                self.stats.node_times.push(tick.elapsed().as_secs_f64());
                continue;
            };
            let parent_bounds = sub.bounds.clone().expect("queued subproblems carry bounds");
            for (mut c, branch) in children {
                let p = self.problem.with_domain(c.domain.clone())?;
                let from = match branch {
                    Branch::Relu { layer, .. } => layer + 1,
                    _ => 0,
                };
                self.stats.nodes += 1;
                self.stats.max_depth = self.stats.max_depth.max(c.depth);
                let id = self.fresh_id();
                let Outcome::Feasible(b) = self.intermediate(&p, &c.fixings, Some(&parent_bounds), from)? else {
                    self.record(id, Some(sub.id), f64::INFINITY, f64::INFINITY, branch);
                    continue;
                };
                let Some(ev) = self.evaluate(&p, &c.fixings, b)? else {
                    self.record(id, Some(sub.id), f64::INFINITY, f64::INFINITY, branch);
                    continue;
                };
                let (ub, x) = compute_upper_bound(self.original, &c.domain, Some(&ev.witness), self.cfg.samples, &mut self.rng)?;
                self.record(id, Some(sub.id), ev.lower, ub, branch);
                let lb_now = queue.min_lower_bound().unwrap_or(f64::INFINITY).min(floor).min(closed).min(ev.lower);
                offer_upper!(ub, x, lb_now);
                if ev.lower < threshold(global_ub) {
                    c.id = id;
                    c.lower_bound = ev.lower;
                    c.bounds = Some(ev.bounds);
                    queue.push(c);
                } else {
                    closed = closed.min(ev.lower);
                    near_zero |= decide && ev.lower < DECIDE_MARGIN;
                }
            }
            for dropped in queue.prune(threshold(global_ub)) {
                closed = closed.min(dropped.lower_bound);
                near_zero |= decide && dropped.lower_bound < DECIDE_MARGIN;
            }
            self.stats.node_times.push(tick.elapsed().as_secs_f64());
        }
    }
}

/// Runs branch and bound on a canonical problem.
///
/// Max-pools are rewritten as ReLUs over the problem's box first; upper
/// bounds and counterexamples are always evaluated on the original network.
pub fn run_bab(problem: &CanonicalProblem, config: &BabConfig) -> Result<BabResult> {
    config.validate()?;
    let driver = Driver {
        original: problem,
        problem: problem.relu_only()?,
        cfg: config,
        policy: config.effective_policy()?,
        rng: ChaCha8Rng::seed_from_u64(config.seed),
        start: Instant::now(),
        stats: BabStats::default(),
        trace: Vec::new(),
        next_id: 0,
    };
    driver.run()
}
