//! Two-phase primal simplex on a dense tableau.
//!
//! Variables are mapped to non-negative columns (shift, flip, or split), every
//! row is scaled to unit max coefficient and given a non-negative rhs, and
//! artificials seed the phase-1 basis. Pricing is Dantzig until the objective
//! stalls for more iterations than there are columns, then Bland. Outside
//! Bland mode ratio-test ties go to the largest pivot. A final point that
//! fails the feasibility check is recomputed from the original rows by LU.

use super::{LinearProgram, LpSolution, LpStatus, Relation};

pub const FEASIBILITY_TOL: f64 = 1e-7;
pub const OPTIMALITY_TOL: f64 = 1e-9;
pub const PIVOT_TOL: f64 = 1e-9;
pub const ITERATION_CAP: usize = 1_000_000;

/// How an original variable is expressed through tableau columns.
#[derive(Debug, Clone, Copy)]
enum VarMap {
    Fixed(f64),
    /// x = offset + y
    Shift { col: usize, offset: f64 },
    /// x = offset - y
    Flip { col: usize, offset: f64 },
    /// x = y⁺ - y⁻
    Split { pos: usize, neg: usize },
}

struct Tableau {
    rows: usize,
    cols: usize,
    /// Row-major, `cols + 1` entries per row; the last is the rhs.
    a: Vec<f64>,
    /// Reduced costs, last entry is minus the current objective.
    cost: Vec<f64>,
    basis: Vec<usize>,
}

enum PhaseEnd {
    Optimal,
    Unbounded,
    IterationCap,
}

impl Tableau {
    #[inline]
    fn at(&self, r: usize, c: usize) -> f64 {
        self.a[r * (self.cols + 1) + c]
    }

    #[inline]
    fn rhs(&self, r: usize) -> f64 {
        self.a[r * (self.cols + 1) + self.cols]
    }

    fn pivot(&mut self, pr: usize, pc: usize) {
        let w = self.cols + 1;
        let piv = self.a[pr * w + pc];
        let (before, rest) = self.a.split_at_mut(pr * w);
        let (prow, after) = rest.split_at_mut(w);
        for v in prow.iter_mut() {
            *v /= piv;
        }
        prow[pc] = 1.0;
        let eliminate = |row: &mut [f64]| {
            let f = row[pc];
            if f != 0.0 {
                for (x, p) in row.iter_mut().zip(prow.iter()) {
                    *x -= f * p;
                }
                row[pc] = 0.0;
            }
        };
        before.chunks_mut(w).for_each(eliminate);
        after.chunks_mut(w).for_each(eliminate);
        eliminate(&mut self.cost);
        self.basis[pr] = pc;
    }

    /// Minimum-ratio row, ties to the smallest basic index.
    fn ratio_bland(&self, e: usize) -> Option<usize> {
        let mut leave: Option<(usize, f64)> = None;
        for r in 0..self.rows {
            let coef = self.at(r, e);
            if coef > PIVOT_TOL {
                let ratio = self.rhs(r).max(0.0) / coef;
                leave = match leave {
                    None => Some((r, ratio)),
                    Some((lr, lratio)) => {
                        let tie = (ratio - lratio).abs() <= 1e-12 * (1.0 + lratio.abs());
                        if (tie && self.basis[r] < self.basis[lr]) || (!tie && ratio < lratio) {
                            Some((r, ratio))
                        } else {
                            Some((lr, lratio))
                        }
                    }
                };
            }
        }
        leave.map(|(r, _)| r)
    }

    /// Minimum-ratio row, ties to the largest pivot element.
    fn ratio_largest(&self, e: usize) -> Option<usize> {
        let mut leave: Option<(usize, f64, f64)> = None;
        for r in 0..self.rows {
            let coef = self.at(r, e);
            if coef > PIVOT_TOL {
                let ratio = self.rhs(r).max(0.0) / coef;
                let take = match leave {
                    None => true,
                    Some((_, lratio, lcoef)) => {
                        let tie = (ratio - lratio).abs() <= 1e-12 * (1.0 + lratio.abs());
                        (tie && coef > lcoef) || (!tie && ratio < lratio)
                    }
                };
                if take {
                    leave = Some((r, ratio, coef));
                }
            }
        }
        leave.map(|(r, ..)| r)
    }

    fn run(&mut self, allowed: &[bool], iterations: &mut usize) -> PhaseEnd {
        let mut bland = false;
        let mut stall = 0usize;
        let mut best = -self.cost[self.cols];
        loop {
            *iterations += 1;
            if *iterations > ITERATION_CAP {
                return PhaseEnd::IterationCap;
            }
            let entering = if bland {
                (0..self.cols).find(|&j| allowed[j] && self.cost[j] < -OPTIMALITY_TOL)
            } else {
                let mut pick = None;
                let mut most = -OPTIMALITY_TOL;
                for j in 0..self.cols {
                    if allowed[j] && self.cost[j] < most {
                        most = self.cost[j];
                        pick = Some(j);
                    }
                }
                pick
            };
            let Some(e) = entering else {
                return PhaseEnd::Optimal;
            };

            let leave = if bland { self.ratio_bland(e) } else { self.ratio_largest(e) };
            let Some(lr) = leave else {
                return PhaseEnd::Unbounded;
            };
            self.pivot(lr, e);

            let obj = -self.cost[self.cols];
            if obj < best - 1e-12 * (1.0 + best.abs()) {
                best = obj;
                stall = 0;
            } else {
                stall += 1;
                if stall > self.cols {
                    bland = true;
                }
            }
        }
    }
}

pub(super) fn solve(lp: &LinearProgram) -> LpSolution {
    let n = lp.num_vars();
    let mut maps = Vec::with_capacity(n);
    let mut cols = 0usize;
    // Extra rows y <= u - l for doubly bounded shifted variables.
    let mut bound_rows: Vec<(usize, f64)> = Vec::new();
    for j in 0..n {
        let (l, u) = (lp.lower[j], lp.upper[j]);
        let m = if l.is_finite() && u.is_finite() && u - l <= 0.0 {
            VarMap::Fixed(l)
        } else if l.is_finite() {
            let col = cols;
            cols += 1;
            if u.is_finite() {
                bound_rows.push((col, u - l));
            }
            VarMap::Shift { col, offset: l }
        } else if u.is_finite() {
            let col = cols;
            cols += 1;
            VarMap::Flip { col, offset: u }
        } else {
            cols += 2;
            VarMap::Split {
                pos: cols - 2,
                neg: cols - 1,
            }
        };
        maps.push(m);
    }
    let structural = cols;

    // Rows over structural columns: (dense coefficients, relation, rhs).
    let mut rows: Vec<(Vec<f64>, Relation, f64)> = Vec::with_capacity(lp.constraints.len() + bound_rows.len());
    for c in &lp.constraints {
        let mut coef = vec![0.0; structural];
        let mut rhs = c.rhs;
        for &(j, a) in &c.coeffs {
            match maps[j] {
                VarMap::Fixed(v) => rhs -= a * v,
                VarMap::Shift { col, offset } => {
                    coef[col] += a;
                    rhs -= a * offset;
                }
                VarMap::Flip { col, offset } => {
                    coef[col] -= a;
                    rhs -= a * offset;
                }
                VarMap::Split { pos, neg } => {
                    coef[pos] += a;
                    coef[neg] -= a;
                }
            }
        }
        rows.push((coef, c.relation, rhs));
    }
    for &(col, width) in &bound_rows {
        let mut coef = vec![0.0; structural];
        coef[col] = 1.0;
        rows.push((coef, Relation::Le, width));
    }

    // Normalise: unit max coefficient, non-negative rhs. Empty rows are checked directly.
    let mut kept = Vec::with_capacity(rows.len());
    for (mut coef, mut rel, mut rhs) in rows {
        let scale = coef.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if scale == 0.0 {
            let ok = match rel {
                Relation::Le => rhs >= -FEASIBILITY_TOL,
                Relation::Ge => rhs <= FEASIBILITY_TOL,
                Relation::Eq => rhs.abs() <= FEASIBILITY_TOL,
            };
            if !ok {
                return LpSolution::failed(LpStatus::Infeasible);
            }
            continue;
        }
        coef.iter_mut().for_each(|v| *v /= scale);
        rhs /= scale;
        if rhs < 0.0 {
            coef.iter_mut().for_each(|v| *v = -*v);
            rhs = -rhs;
            rel = match rel {
                Relation::Le => Relation::Ge,
                Relation::Ge => Relation::Le,
                Relation::Eq => Relation::Eq,
            };
        }
        kept.push((coef, rel, rhs));
    }

    let m = kept.len();
    let slacks = kept.iter().filter(|r| r.1 != Relation::Eq).count();
    let artificials = kept.iter().filter(|r| r.1 != Relation::Le).count();
    let total = structural + slacks + artificials;
    let w = total + 1;
    let mut t = Tableau {
        rows: m,
        cols: total,
        a: vec![0.0; m * w],
        cost: vec![0.0; w],
        basis: vec![0; m],
    };
    let mut is_artificial = vec![false; total];
    let mut next_slack = structural;
    let mut next_art = structural + slacks;
    for (r, (coef, rel, rhs)) in kept.iter().enumerate() {
        let row = &mut t.a[r * w..(r + 1) * w];
        row[..structural].copy_from_slice(coef);
        row[total] = *rhs;
        match rel {
            Relation::Le => {
                row[next_slack] = 1.0;
                t.basis[r] = next_slack;
                next_slack += 1;
            }
            Relation::Ge => {
                row[next_slack] = -1.0;
                next_slack += 1;
                row[next_art] = 1.0;
                is_artificial[next_art] = true;
                t.basis[r] = next_art;
                next_art += 1;
            }
            Relation::Eq => {
                row[next_art] = 1.0;
                is_artificial[next_art] = true;
                t.basis[r] = next_art;
                next_art += 1;
            }
        }
    }

    let original = t.a.clone();
    let mut iterations = 0usize;
    if artificials > 0 {
        for c in 0..total {
            if is_artificial[c] {
                t.cost[c] = 1.0;
            }
        }
        for r in 0..m {
            if is_artificial[t.basis[r]] {
                for c in 0..w {
                    t.cost[c] -= t.a[r * w + c];
                }
            }
        }
        let allowed = vec![true; total];
        match t.run(&allowed, &mut iterations) {
            PhaseEnd::Optimal => {}
            PhaseEnd::IterationCap => return LpSolution::failed(LpStatus::NumericalFailure),
            // Phase 1 is bounded below by zero.
            PhaseEnd::Unbounded => return LpSolution::failed(LpStatus::NumericalFailure),
        }
        if -t.cost[total] > FEASIBILITY_TOL {
            return LpSolution::failed(LpStatus::Infeasible);
        }
        // Drive remaining artificials out of the basis where possible.
        for r in 0..m {
            if is_artificial[t.basis[r]] {
                let mut best: Option<(usize, f64)> = None;
                for c in 0..total {
                    let v = t.at(r, c).abs();
                    if !is_artificial[c] && v > 1e-9 && best.is_none_or(|(_, b)| v > b) {
                        best = Some((c, v));
                    }
                }
                if let Some((c, _)) = best {
                    // The artificial is zero up to phase-1 tolerance; pivoting on its residue would spread it.
                    let w = t.cols + 1;
                    t.a[r * w + t.cols] = 0.0;
                    t.pivot(r, c);
                }
            }
        }
    }

    // Phase 2 costs over structural columns.
    let mut col_cost = vec![0.0; total];
    for (j, m) in maps.iter().enumerate() {
        let c = lp.objective[j];
        match *m {
            VarMap::Fixed(_) => {}
            VarMap::Shift { col, .. } => col_cost[col] += c,
            VarMap::Flip { col, .. } => col_cost[col] -= c,
            VarMap::Split { pos, neg } => {
                col_cost[pos] += c;
                col_cost[neg] -= c;
            }
        }
    }
    t.cost.iter_mut().for_each(|v| *v = 0.0);
    t.cost[..total].copy_from_slice(&col_cost);
    for r in 0..m {
        let cb = col_cost[t.basis[r]];
        if cb != 0.0 {
            for c in 0..w {
                t.cost[c] -= cb * t.a[r * w + c];
            }
        }
    }
    let allowed: Vec<bool> = is_artificial.iter().map(|a| !a).collect();
    match t.run(&allowed, &mut iterations) {
        PhaseEnd::Optimal => {}
        PhaseEnd::Unbounded => return LpSolution::failed(LpStatus::Unbounded),
        PhaseEnd::IterationCap => return LpSolution::failed(LpStatus::NumericalFailure),
    }

    let to_vars = |y: &[f64]| -> Vec<f64> {
        maps.iter()
            .map(|m| match *m {
                VarMap::Fixed(v) => v,
                VarMap::Shift { col, offset } => offset + y[col],
                VarMap::Flip { col, offset } => offset - y[col],
                VarMap::Split { pos, neg } => y[pos] - y[neg],
            })
            .collect()
    };
    let acceptable = |x: &[f64]| {
        let scale = 1.0 + x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        lp.max_violation(x) <= 10.0 * FEASIBILITY_TOL * scale
    };

    let mut y = vec![0.0; total];
    for r in 0..m {
        y[t.basis[r]] = t.rhs(r).max(0.0);
    }
    let mut x = to_vars(&y);
    if !acceptable(&x) {
        match refactor(&original, &t.basis, total) {
            Some(y) => x = to_vars(&y),
            None => return LpSolution::failed(LpStatus::NumericalFailure),
        }
        if !acceptable(&x) {
            return LpSolution::failed(LpStatus::NumericalFailure);
        }
    }
    LpSolution {
        status: LpStatus::Optimal,
        objective: lp.objective_value(&x),
        primal: x,
    }
}

/// Basic solution recomputed from the original rows, discarding drift accumulated by pivoting.
fn refactor(original: &[f64], basis: &[usize], total: usize) -> Option<Vec<f64>> {
    let m = basis.len();
    let w = total + 1;
    let b = nalgebra::DMatrix::from_fn(m, m, |r, k| original[r * w + basis[k]]);
    let rhs = nalgebra::DVector::from_fn(m, |r, _| original[r * w + total]);
    let sol = b.lu().solve(&rhs)?;
    let mut y = vec![0.0; total];
    for (k, &c) in basis.iter().enumerate() {
        if !sol[k].is_finite() {
            return None;
        }
        y[c] = sol[k].max(0.0);
    }
    Some(y)
}
