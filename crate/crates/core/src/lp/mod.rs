//! Dense linear programming.
//!
//! Every relaxation-based bound in this crate is an LP over a few hundred
//! variables at most, so the solver works on a dense tableau. Variables carry
//! their own (possibly infinite) bounds; rows are sparse coefficient lists.

mod simplex;

pub use simplex::{FEASIBILITY_TOL, ITERATION_CAP, OPTIMALITY_TOL, PIVOT_TOL};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    Le,
    Eq,
    Ge,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    pub coeffs: Vec<(usize, f64)>,
    pub relation: Relation,
    pub rhs: f64,
}

impl Constraint {
    pub fn new(coeffs: Vec<(usize, f64)>, relation: Relation, rhs: f64) -> Self {
        Constraint {
            coeffs,
            relation,
            rhs,
        }
    }

    /// Value of the left-hand side at `x`.
    pub fn lhs(&self, x: &[f64]) -> f64 {
        self.coeffs.iter().map(|&(j, a)| a * x[j]).sum()
    }

    /// Amount by which `x` violates the row (0 when satisfied).
    pub fn violation(&self, x: &[f64]) -> f64 {
        let lhs = self.lhs(x);
        match self.relation {
            Relation::Le => (lhs - self.rhs).max(0.0),
            Relation::Ge => (self.rhs - lhs).max(0.0),
            Relation::Eq => (lhs - self.rhs).abs(),
        }
    }
}

/// A minimisation LP: `min c·x` subject to rows and per-variable bounds.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearProgram {
    num_vars: usize,
    pub objective: Vec<f64>,
    pub constraints: Vec<Constraint>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl LinearProgram {
    /// New LP with `num_vars` free variables, zero objective and no rows.
    pub fn new(num_vars: usize) -> Self {
        LinearProgram {
            num_vars,
            objective: vec![0.0; num_vars],
            constraints: Vec::new(),
            lower: vec![f64::NEG_INFINITY; num_vars],
            upper: vec![f64::INFINITY; num_vars],
        }
    }

    pub fn num_vars(&self) -> usize {
        self.num_vars
    }

    /// Appends a variable and returns its index.
    pub fn add_var(&mut self, lower: f64, upper: f64) -> usize {
        self.num_vars += 1;
        self.objective.push(0.0);
        self.lower.push(lower);
        self.upper.push(upper);
        self.num_vars - 1
    }

    pub fn set_bounds(&mut self, var: usize, lower: f64, upper: f64) {
        self.lower[var] = lower;
        self.upper[var] = upper;
    }

    pub fn add_constraint(&mut self, coeffs: Vec<(usize, f64)>, relation: Relation, rhs: f64) {
        self.constraints.push(Constraint::new(coeffs, relation, rhs));
    }

    /// Replaces the objective with a single `sign * x[var]` term.
    pub fn set_single_objective(&mut self, var: usize, sign: f64) {
        self.objective.iter_mut().for_each(|c| *c = 0.0);
        self.objective[var] = sign;
    }

    /// Checks row widths, finiteness of coefficients, and bound ordering.
    pub fn validate(&self) -> Result<(), String> {
        if self.objective.len() != self.num_vars
            || self.lower.len() != self.num_vars
            || self.upper.len() != self.num_vars
        {
            return Err("vector lengths disagree with variable count".into());
        }
        if self.objective.iter().any(|c| !c.is_finite()) {
            return Err("non-finite objective coefficient".into());
        }
        for (i, row) in self.constraints.iter().enumerate() {
            if !row.rhs.is_finite() {
                return Err(format!("row {i}: non-finite rhs"));
            }
            for &(j, a) in &row.coeffs {
                if j >= self.num_vars {
                    return Err(format!("row {i}: variable {j} out of range"));
                }
                if !a.is_finite() {
                    return Err(format!("row {i}: non-finite coefficient"));
                }
            }
        }
        for j in 0..self.num_vars {
            if self.lower[j] > self.upper[j] || self.lower[j] == f64::INFINITY || self.upper[j] == f64::NEG_INFINITY {
                return Err(format!("variable {j}: bad bounds [{}, {}]", self.lower[j], self.upper[j]));
            }
        }
        Ok(())
    }

    /// Largest violation of any row or bound at `x`.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let rows = self
            .constraints
            .iter()
            .map(|c| c.violation(x))
            .fold(0.0, f64::max);
        let bounds = (0..self.num_vars)
            .map(|j| (self.lower[j] - x[j]).max(x[j] - self.upper[j]).max(0.0))
            .fold(0.0, f64::max);
        rows.max(bounds)
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.objective.iter().zip(x).map(|(c, v)| c * v).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
    /// Iteration cap hit or the final point failed the feasibility check.
    NumericalFailure,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub status: LpStatus,
    /// Objective value; NaN unless `status` is `Optimal`.
    pub objective: f64,
    /// Primal point; empty unless `status` is `Optimal`.
    pub primal: Vec<f64>,
}

impl LpSolution {
    pub(crate) fn failed(status: LpStatus) -> Self {
        LpSolution {
            status,
            objective: f64::NAN,
            primal: Vec::new(),
        }
    }

    pub fn is_optimal(&self) -> bool {
        self.status == LpStatus::Optimal
    }
}

/// Solves `lp` with the two-phase primal simplex method.
pub fn solve(lp: &LinearProgram) -> LpSolution {
    if lp.validate().is_err() {
        // Crossed variable bounds are an empty feasible set; anything else is malformed.
        let crossed = (0..lp.num_vars()).any(|j| lp.lower[j] > lp.upper[j]);
        return LpSolution::failed(if crossed {
            LpStatus::Infeasible
        } else {
            LpStatus::NumericalFailure
        });
    }
    simplex::solve(lp)
}

/// A change to one variable's bounds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundChange {
    pub var: usize,
    pub lower: f64,
    pub upper: f64,
}

/// Solves `lp` after applying bound changes and appending rows.
///
/// The result is identical to building the modified LP from scratch, which is
/// exactly what happens: no basis is carried over between solves.
pub fn resolve_with(lp: &LinearProgram, changes: &[BoundChange], extra_rows: &[Constraint]) -> LpSolution {
    let mut modified = lp.clone();
    for c in changes {
        modified.set_bounds(c.var, c.lower, c.upper);
    }
    modified.constraints.extend_from_slice(extra_rows);
    solve(&modified)
}

/// A base LP that is re-solved under a sequence of modifications.
///
/// Sessions are single-owner; modifications are applied relative to the base
/// model, not cumulatively.
#[derive(Debug, Clone)]
pub struct LpSession {
    base: LinearProgram,
    solves: usize,
}

impl LpSession {
    pub fn new(base: LinearProgram) -> Self {
        LpSession { base, solves: 0 }
    }

    pub fn base(&self) -> &LinearProgram {
        &self.base
    }

    pub fn solve(&mut self) -> LpSolution {
        self.solves += 1;
        solve(&self.base)
    }

    pub fn resolve_with(&mut self, changes: &[BoundChange], extra_rows: &[Constraint]) -> LpSolution {
        self.solves += 1;
        resolve_with(&self.base, changes, extra_rows)
    }

    pub fn solve_count(&self) -> usize {
        self.solves
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_var() -> LinearProgram {
        // min x s.t. x >= 3, x <= 10
        let mut lp = LinearProgram::new(1);
        lp.objective[0] = 1.0;
        lp.add_constraint(vec![(0, 1.0)], Relation::Ge, 3.0);
        lp.add_constraint(vec![(0, 1.0)], Relation::Le, 10.0);
        lp
    }

    #[test]
    fn bound_active_optimum() {
        let sol = solve(&one_var());
        assert_eq!(sol.status, LpStatus::Optimal);
        assert!((sol.objective - 3.0).abs() < 1e-9);
        assert!((sol.primal[0] - 3.0).abs() < 1e-9);
    }

    #[test]
    fn textbook_two_vars() {
        // min -x - y s.t. x + y <= 1, x, y >= 0
        let mut lp = LinearProgram::new(2);
        lp.objective = vec![-1.0, -1.0];
        lp.set_bounds(0, 0.0, f64::INFINITY);
        lp.set_bounds(1, 0.0, f64::INFINITY);
        lp.add_constraint(vec![(0, 1.0), (1, 1.0)], Relation::Le, 1.0);
        let sol = solve(&lp);
        assert_eq!(sol.status, LpStatus::Optimal);
        assert!((sol.objective + 1.0).abs() < 1e-9);
    }

    #[test]
    fn tighten_lower_bound_row() {
        let lp = one_var();
        let extra = Constraint::new(vec![(0, 1.0)], Relation::Ge, 5.0);
        let sol = resolve_with(&lp, &[], &[extra]);
        assert!((sol.objective - 5.0).abs() < 1e-9);
        let sol = resolve_with(&lp, &[BoundChange { var: 0, lower: 5.0, upper: f64::INFINITY }], &[]);
        assert!((sol.objective - 5.0).abs() < 1e-9);
    }

    #[test]
    fn redundant_row_keeps_objective() {
        let lp = one_var();
        let extra = Constraint::new(vec![(0, 1.0)], Relation::Le, 100.0);
        let mut session = LpSession::new(lp);
        let base = session.solve();
        let again = session.resolve_with(&[], &[extra]);
        assert_eq!(base.objective, again.objective);
        assert_eq!(session.solve_count(), 2);
    }

    #[test]
    fn infeasible_rows() {
        let mut lp = LinearProgram::new(1);
        lp.add_constraint(vec![(0, 1.0)], Relation::Ge, 2.0);
        lp.add_constraint(vec![(0, 1.0)], Relation::Le, 1.0);
        assert_eq!(solve(&lp).status, LpStatus::Infeasible);
    }

    #[test]
    fn crossed_bounds_are_infeasible() {
        let mut lp = LinearProgram::new(1);
        lp.set_bounds(0, 1.0, 0.0);
        assert_eq!(solve(&lp).status, LpStatus::Infeasible);
    }

    #[test]
    fn unbounded_ray() {
        let mut lp = LinearProgram::new(2);
        lp.objective = vec![-1.0, 0.0];
        lp.set_bounds(1, 0.0, 1.0);
        lp.add_constraint(vec![(0, 1.0), (1, -1.0)], Relation::Ge, 0.0);
        assert_eq!(solve(&lp).status, LpStatus::Unbounded);
    }

    #[test]
    fn free_and_upper_only_variables() {
        // min x - y, x free, y <= 2, x >= y - 1, x >= -5
        let mut lp = LinearProgram::new(2);
        lp.objective = vec![1.0, -1.0];
        lp.set_bounds(1, f64::NEG_INFINITY, 2.0);
        lp.add_constraint(vec![(0, 1.0), (1, -1.0)], Relation::Ge, -1.0);
        lp.add_constraint(vec![(0, 1.0)], Relation::Ge, -5.0);
        let sol = solve(&lp);
        assert_eq!(sol.status, LpStatus::Optimal);
        assert!((sol.objective + 1.0).abs() < 1e-9);
    }

    #[test]
    fn fixed_variables_and_equalities() {
        // min y s.t. y = 2x + 1, x fixed at 3
        let mut lp = LinearProgram::new(2);
        lp.objective[1] = 1.0;
        lp.set_bounds(0, 3.0, 3.0);
        lp.add_constraint(vec![(1, 1.0), (0, -2.0)], Relation::Eq, 1.0);
        let sol = solve(&lp);
        assert!((sol.objective - 7.0).abs() < 1e-9);
        assert_eq!(sol.primal, vec![3.0, 7.0]);
    }

    #[test]
    fn degenerate_problem_terminates() {
        // Klee-Minty-like degenerate vertex: many rows through the origin.
        let mut lp = LinearProgram::new(3);
        lp.objective = vec![-1.0, -1.0, -1.0];
        for j in 0..3 {
            lp.set_bounds(j, 0.0, f64::INFINITY);
        }
        lp.add_constraint(vec![(0, 1.0), (1, -1.0)], Relation::Le, 0.0);
        lp.add_constraint(vec![(1, 1.0), (2, -1.0)], Relation::Le, 0.0);
        lp.add_constraint(vec![(0, 1.0), (2, -1.0)], Relation::Le, 0.0);
        lp.add_constraint(vec![(0, 1.0), (1, 1.0), (2, 1.0)], Relation::Le, 3.0);
        let sol = solve(&lp);
        assert_eq!(sol.status, LpStatus::Optimal);
        assert!((sol.objective + 3.0).abs() < 1e-9);
    }

    #[test]
    fn redundant_equalities() {
        let mut lp = LinearProgram::new(2);
        lp.objective = vec![1.0, 1.0];
        lp.add_constraint(vec![(0, 1.0), (1, 1.0)], Relation::Eq, 2.0);
        lp.add_constraint(vec![(0, 2.0), (1, 2.0)], Relation::Eq, 4.0);
        lp.add_constraint(vec![(0, 1.0)], Relation::Ge, 0.5);
        let sol = solve(&lp);
        assert_eq!(sol.status, LpStatus::Optimal);
        assert!((sol.objective - 2.0).abs() < 1e-9);
    }

    proptest::proptest! {
        #[test]
        fn random_feasible_programs_solve(
            seed in 0u64..1_000,
            n in 2usize..7,
            m in 1usize..10,
        ) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let mut lp = LinearProgram::new(n);
            let point: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            for j in 0..n {
                lp.set_bounds(j, -2.0, 2.0);
                lp.objective[j] = rng.gen_range(-1.0..1.0);
            }
            for _ in 0..m {
                let coeffs: Vec<(usize, f64)> = (0..n)
                    .map(|j| (j, if rng.gen_bool(0.2) { rng.gen_range(-1e-9..1e-9) } else { rng.gen_range(-1.0..1.0) }))
                    .collect();
                let v: f64 = coeffs.iter().map(|&(j, a)| a * point[j]).sum();
                let (rel, rhs) = match rng.gen_range(0..3) {
                    0 => (Relation::Le, v + rng.gen_range(0.0..0.5)),
                    1 => (Relation::Ge, v - rng.gen_range(0.0..0.5)),
                    _ => (Relation::Eq, v),
                };
                lp.add_constraint(coeffs, rel, rhs);
            }
            let sol = solve(&lp);
            proptest::prop_assert_eq!(sol.status, LpStatus::Optimal);
            proptest::prop_assert!(lp.max_violation(&sol.primal) <= 1e-6);
            proptest::prop_assert!(sol.objective <= lp.objective_value(&point) + 1e-7);
        }
    }
}
