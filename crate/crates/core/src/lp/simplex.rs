//! Dense-tableau simplex for bounded-variable LPs.
//!
//! The tableau stores `B^-1 A` for the current basis together with `B^-1 b`
//! and the reduced costs. A fresh solve runs the two-phase primal method
//! (artificials only on rows whose initial slack would violate its bounds).
//! After bounds change, [`Simplex::reoptimize`] restores optimality with the
//! bounded dual simplex, starting from the previous (still dual feasible)
//! basis.
//!
//! Rows are scaled to unit max coefficient and the objective to unit max
//! coefficient before solving; reported values are in the caller's units.

use std::time::Instant;

use super::{LinearProgram, LpStatus, Sense};

/// Smallest tableau entry accepted as a pivot.
pub const PIVOT_TOL: f64 = 1e-9;
/// Reduced-cost tolerance (objective is scaled to max |c| = 1).
const OPT_TOL: f64 = 1e-9;
/// Primal feasibility tolerance on scaled rows.
const FEAS_TOL: f64 = 1e-9;
const REFACTOR_EVERY: usize = 100;
/// Consecutive degenerate pivots before switching to Bland's rule.
const DEGENERATE_LIMIT: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum VarState {
    Basic,
    Lower,
    Upper,
}

#[derive(Debug, Clone)]
pub struct Simplex {
    m: usize,
    n_struct: usize,
    n: usize,
    /// Scaled sparse columns of `[A | I | artificials]`.
    cols: Vec<Vec<(usize, f64)>>,
    b: Vec<f64>,
    /// Scaled phase-2 objective.
    cost: Vec<f64>,
    /// Objective currently priced (phase 1 or phase 2).
    active_cost: Vec<f64>,
    orig_cost: Vec<f64>,
    cost_scale: f64,
    lower: Vec<f64>,
    upper: Vec<f64>,
    tab: Vec<f64>,
    rhs: Vec<f64>,
    d: Vec<f64>,
    head: Vec<usize>,
    state: Vec<VarState>,
    x: Vec<f64>,
    artificial_start: usize,
    artificial_end: usize,
    since_refactor: usize,
    iterations: usize,
    pivots: usize,
    /// Loops stop with `IterationLimit` once this passes.
    deadline: Option<Instant>,
}

enum Step {
    Optimal,
    Unbounded,
    Progress { degenerate: bool },
}

impl Simplex {
    /// Sets up the slack/artificial starting basis. Every structural column
    /// needs a finite lower bound.
    pub fn new(lp: &LinearProgram) -> Simplex {
        let m = lp.rows.len();
        let n_struct = lp.num_cols();
        assert!(lp.lower.iter().all(|l| l.is_finite()), "structural columns need finite lower bounds");

        let row_scale: Vec<f64> = lp
            .rows
            .iter()
            .map(|r| {
                let max = r.coeffs.iter().map(|(_, a)| a.abs()).fold(0.0, f64::max);
                if max > 0.0 {
                    1.0 / max
                } else {
                    1.0
                }
            })
            .collect();
        let cmax = lp.objective.iter().map(|c| c.abs()).fold(0.0, f64::max);
        let cscale = if cmax > 0.0 { 1.0 / cmax } else { 1.0 };

        let mut cols: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n_struct];
        for (i, row) in lp.rows.iter().enumerate() {
            for &(j, a) in &row.coeffs {
                if a != 0.0 {
                    cols[j].push((i, a * row_scale[i]));
                }
            }
        }
        let b: Vec<f64> = lp.rows.iter().zip(&row_scale).map(|(r, s)| r.rhs * s).collect();
        let mut lower = lp.lower.clone();
        let mut upper = lp.upper.clone();
        let mut cost: Vec<f64> = lp.objective.iter().map(|c| c * cscale).collect();
        let mut orig_cost = lp.objective.clone();

        for (i, row) in lp.rows.iter().enumerate() {
            cols.push(vec![(i, 1.0)]);
            let (l, u) = match row.sense {
                Sense::Le => (0.0, f64::INFINITY),
                Sense::Ge => (f64::NEG_INFINITY, 0.0),
                Sense::Eq => (0.0, 0.0),
            };
            lower.push(l);
            upper.push(u);
            cost.push(0.0);
            orig_cost.push(0.0);
        }

        let mut x: Vec<f64> = lower.iter().take(n_struct).copied().collect();
        x.extend(std::iter::repeat_n(0.0, m));
        let mut residual = b.clone();
        for (j, col) in cols.iter().enumerate().take(n_struct) {
            if x[j] != 0.0 {
                for &(i, a) in col {
                    residual[i] -= a * x[j];
                }
            }
        }

        let artificial_start = n_struct + m;
        let mut head = vec![0; m];
        let mut state: Vec<VarState> = vec![VarState::Lower; n_struct + m];
        for i in 0..m {
            let s = n_struct + i;
            if upper[s] == 0.0 && lower[s] == f64::NEG_INFINITY {
                state[s] = VarState::Upper;
            }
            let r = residual[i];
            if r >= lower[s] - FEAS_TOL && r <= upper[s] + FEAS_TOL {
                head[i] = s;
                state[s] = VarState::Basic;
                x[s] = r;
            } else {
                let sigma = r.signum();
                let a = cols.len();
                cols.push(vec![(i, sigma)]);
                lower.push(0.0);
                upper.push(f64::INFINITY);
                cost.push(0.0);
                orig_cost.push(0.0);
                state.push(VarState::Basic);
                x.push(r.abs());
                head[i] = a;
            }
        }
        let n = cols.len();

        let mut sp = Simplex {
            m,
            n_struct,
            n,
            cols,
            b,
            cost,
            active_cost: Vec::new(),
            orig_cost,
            cost_scale: cscale,
            lower,
            upper,
            tab: vec![0.0; m * n],
            rhs: vec![0.0; m],
            d: vec![0.0; n],
            head,
            state,
            x,
            artificial_start,
            artificial_end: n,
            since_refactor: 0,
            iterations: 0,
            pivots: 0,
            deadline: None,
        };
        // Starting basis is diagonal (+1 slacks, +-1 artificials).
        for j in 0..n {
            for &(i, a) in &sp.cols[j] {
                let diag = sp.basis_diag(i);
                sp.tab[i * n + j] = a / diag;
            }
        }
        for i in 0..m {
            sp.rhs[i] = sp.b[i] / sp.basis_diag(i);
        }
        sp
    }

    fn basis_diag(&self, row: usize) -> f64 {
        let h = self.head[row];
        self.cols[h].iter().find(|(i, _)| *i == row).map(|(_, a)| *a).unwrap_or(1.0)
    }

    pub fn num_rows(&self) -> usize {
        self.m
    }

    pub fn num_structural(&self) -> usize {
        self.n_struct
    }

    pub fn iterations(&self) -> usize {
        self.iterations
    }

    /// Structural variable values.
    pub fn values(&self) -> &[f64] {
        &self.x[..self.n_struct]
    }

    /// Reduced cost of structural column `j` in objective units, with
    /// whether it sits nonbasic at its upper bound. Basic columns give
    /// `(0, false)`.
    pub fn reduced_cost(&self, j: usize) -> (f64, bool) {
        match self.state[j] {
            VarState::Basic => (0.0, false),
            VarState::Lower => (self.d[j] / self.cost_scale, false),
            VarState::Upper => (self.d[j] / self.cost_scale, true),
        }
    }

    pub fn is_basic(&self, j: usize) -> bool {
        self.state[j] == VarState::Basic
    }

    pub fn set_deadline(&mut self, deadline: Option<Instant>) {
        self.deadline = deadline;
    }

    fn out_of_budget(&self, start: usize, max_iters: usize) -> bool {
        self.iterations - start >= max_iters || self.deadline.is_some_and(|d| Instant::now() >= d)
    }

    pub fn objective(&self) -> f64 {
        self.x[..self.n_struct].iter().zip(&self.orig_cost).map(|(x, c)| x * c).sum()
    }

    /// Two-phase primal simplex from the starting basis.
    pub fn solve(&mut self, max_iters: usize) -> LpStatus {
        let has_artificials = self.artificial_end > self.artificial_start;
        if has_artificials {
            let mut phase1 = vec![0.0; self.n];
            for c in &mut phase1[self.artificial_start..self.artificial_end] {
                *c = -1.0;
            }
            self.set_cost(phase1);
            match self.primal_loop(max_iters) {
                LpStatus::Optimal => {}
                LpStatus::Unbounded => unreachable!("phase 1 objective is bounded above by 0"),
                other => return other,
            }
            self.refactor();
            let infeasibility: f64 = (self.artificial_start..self.artificial_end).map(|j| self.x[j]).sum();
            if infeasibility > FEAS_TOL * (self.m as f64).max(1.0) {
                return LpStatus::Infeasible;
            }
            for j in self.artificial_start..self.artificial_end {
                self.upper[j] = 0.0;
                if self.state[j] != VarState::Basic {
                    self.state[j] = VarState::Lower;
                    self.x[j] = 0.0;
                }
            }
            self.drive_out_artificials();
        }
        self.set_cost(self.cost.clone());
        let status = self.primal_loop(max_iters);
        if status == LpStatus::Optimal {
            self.refactor();
            // Refactoring can expose small residual infeasibilities.
            if self.max_primal_infeasibility() > FEAS_TOL {
                return self.dual_loop(max_iters);
            }
            if self.max_dual_infeasibility() > OPT_TOL {
                return self.primal_loop(max_iters);
            }
        }
        status
    }

    /// Appends a row over structural columns with its slack basic. The
    /// current basis stays dual feasible, so a violated row is repaired by
    /// [`reoptimize`](Simplex::reoptimize).
    pub fn add_row(&mut self, coeffs: &[(usize, f64)], sense: Sense, rhs: f64) {
        let max = coeffs.iter().map(|(_, a)| a.abs()).fold(0.0, f64::max);
        let s = if max > 0.0 { 1.0 / max } else { 1.0 };
        let (m, n) = (self.m, self.n);
        let wide = n + 1;
        let mut tab = vec![0.0; (m + 1) * wide];
        for i in 0..m {
            tab[i * wide..i * wide + n].copy_from_slice(&self.tab[i * n..(i + 1) * n]);
        }
        let mut row = vec![0.0; wide];
        for &(j, a) in coeffs {
            assert!(j < self.n_struct);
            if a != 0.0 {
                row[j] += a * s;
                self.cols[j].push((m, a * s));
            }
        }
        row[n] = 1.0;
        let mut row_rhs = rhs * s;
        // Eliminate the basic columns.
        for i in 0..m {
            let f = row[self.head[i]];
            if f != 0.0 {
                for j in 0..n {
                    row[j] -= f * tab[i * wide + j];
                }
                row[self.head[i]] = 0.0;
                row_rhs -= f * self.rhs[i];
            }
        }
        let mut value = row_rhs;
        for j in 0..n {
            if self.state[j] != VarState::Basic && self.x[j] != 0.0 {
                value -= row[j] * self.x[j];
            }
        }
        tab[m * wide..].copy_from_slice(&row);
        self.tab = tab;
        let (l, u) = match sense {
            Sense::Le => (0.0, f64::INFINITY),
            Sense::Ge => (f64::NEG_INFINITY, 0.0),
            Sense::Eq => (0.0, 0.0),
        };
        self.cols.push(vec![(m, 1.0)]);
        self.b.push(rhs * s);
        self.cost.push(0.0);
        if !self.active_cost.is_empty() {
            self.active_cost.push(0.0);
        }
        self.orig_cost.push(0.0);
        self.lower.push(l);
        self.upper.push(u);
        self.rhs.push(row_rhs);
        self.d.push(0.0);
        self.head.push(n);
        self.state.push(VarState::Basic);
        self.x.push(value);
        self.m += 1;
        self.n += 1;
    }

    /// Changes the bounds of structural column `j`; call [`reoptimize`]
    /// afterwards.
    ///
    /// [`reoptimize`]: Simplex::reoptimize
    pub fn set_bounds(&mut self, j: usize, lower: f64, upper: f64) {
        assert!(j < self.n_struct);
        self.lower[j] = lower;
        self.upper[j] = upper;
        if self.state[j] == VarState::Basic {
            return;
        }
        let old = self.x[j];
        let (state, value) = self.nonbasic_position(j);
        self.state[j] = state;
        self.x[j] = value;
        let delta = value - old;
        if delta != 0.0 {
            let n = self.n;
            for i in 0..self.m {
                let t = self.tab[i * n + j];
                if t != 0.0 {
                    let h = self.head[i];
                    self.x[h] -= t * delta;
                }
            }
        }
    }

    /// Bound a nonbasic column sits on so that its reduced cost is dual
    /// feasible.
    fn nonbasic_position(&self, j: usize) -> (VarState, f64) {
        let (l, u) = (self.lower[j], self.upper[j]);
        if l == u {
            return (VarState::Lower, l);
        }
        let d = self.d[j];
        let prefer_upper = if d > OPT_TOL {
            true
        } else if d < -OPT_TOL {
            false
        } else {
            self.state[j] == VarState::Upper
        };
        if prefer_upper && u.is_finite() {
            (VarState::Upper, u)
        } else if l.is_finite() {
            (VarState::Lower, l)
        } else {
            (VarState::Upper, u)
        }
    }

    /// Restores optimality after bound changes (bounded dual simplex).
    pub fn reoptimize(&mut self, max_iters: usize) -> LpStatus {
        let status = self.dual_loop(max_iters);
        if status != LpStatus::Optimal {
            return status;
        }
        if self.max_dual_infeasibility() > OPT_TOL {
            return self.primal_loop(max_iters);
        }
        status
    }

    fn set_cost(&mut self, cost: Vec<f64>) {
        self.active_cost = cost;
        self.recompute_reduced_costs();
    }

    fn recompute_reduced_costs(&mut self) {
        let n = self.n;
        self.d.copy_from_slice(&self.active_cost);
        for i in 0..self.m {
            let cb = self.active_cost[self.head[i]];
            if cb != 0.0 {
                let row = &self.tab[i * n..(i + 1) * n];
                for (dj, t) in self.d.iter_mut().zip(row) {
                    *dj -= cb * t;
                }
            }
        }
        for i in 0..self.m {
            self.d[self.head[i]] = 0.0;
        }
    }

    fn recompute_basic_values(&mut self) {
        let n = self.n;
        for i in 0..self.m {
            let row = &self.tab[i * n..(i + 1) * n];
            let mut v = self.rhs[i];
            for j in 0..n {
                if self.state[j] != VarState::Basic && self.x[j] != 0.0 {
                    v -= row[j] * self.x[j];
                }
            }
            self.x[self.head[i]] = v;
        }
    }

    pub fn max_primal_infeasibility(&self) -> f64 {
        self.head
            .iter()
            .map(|&h| (self.lower[h] - self.x[h]).max(self.x[h] - self.upper[h]).max(0.0))
            .fold(0.0, f64::max)
    }

    /// Largest reduced-cost violation over nonbasic columns.
    pub fn max_dual_infeasibility(&self) -> f64 {
        (0..self.n)
            .filter(|&j| self.lower[j] != self.upper[j])
            .map(|j| match self.state[j] {
                VarState::Basic => 0.0,
                VarState::Lower => self.d[j].max(0.0),
                VarState::Upper => (-self.d[j]).max(0.0),
            })
            .fold(0.0, f64::max)
    }

    fn primal_loop(&mut self, max_iters: usize) -> LpStatus {
        let mut degenerate_run = 0;
        let mut start = self.iterations;
        loop {
            if self.out_of_budget(start, max_iters) {
                return LpStatus::IterationLimit;
            }
            let bland = degenerate_run >= DEGENERATE_LIMIT;
            match self.primal_step(bland) {
                Step::Optimal => {
                    if self.since_refactor > 0 {
                        self.refactor();
                        if self.max_dual_infeasibility() > OPT_TOL {
                            start = start.min(self.iterations);
                            continue;
                        }
                    }
                    return LpStatus::Optimal;
                }
                Step::Unbounded => return LpStatus::Unbounded,
                Step::Progress { degenerate } => {
                    degenerate_run = if degenerate { degenerate_run + 1 } else { 0 };
                }
            }
            self.iterations += 1;
            if self.since_refactor >= REFACTOR_EVERY {
                self.refactor();
            }
        }
    }

    fn primal_step(&mut self, bland: bool) -> Step {
        // Pricing.
        let mut enter = None;
        let mut best = 0.0;
        for j in 0..self.n {
            if self.lower[j] == self.upper[j] {
                continue;
            }
            let score = match self.state[j] {
                VarState::Basic => continue,
                VarState::Lower if self.d[j] > OPT_TOL => self.d[j],
                VarState::Upper if self.d[j] < -OPT_TOL => -self.d[j],
                _ => continue,
            };
            if bland {
                enter = Some(j);
                break;
            }
            if score > best {
                best = score;
                enter = Some(j);
            }
        }
        let Some(q) = enter else { return Step::Optimal };
        let dir = if self.state[q] == VarState::Lower { 1.0 } else { -1.0 };

        // Ratio test.
        let n = self.n;
        let mut theta = self.upper[q] - self.lower[q];
        let mut leave: Option<(usize, f64)> = None;
        for i in 0..self.m {
            let coef = dir * self.tab[i * n + q];
            if coef.abs() <= PIVOT_TOL {
                continue;
            }
            let h = self.head[i];
            let limit = if coef > 0.0 {
                if self.lower[h] == f64::NEG_INFINITY {
                    continue;
                }
                ((self.x[h] - self.lower[h]) / coef).max(0.0)
            } else {
                if self.upper[h] == f64::INFINITY {
                    continue;
                }
                ((self.upper[h] - self.x[h]) / -coef).max(0.0)
            };
            let better = match leave {
                _ if limit < theta - 1e-12 => true,
                Some((r, _)) if limit <= theta + 1e-12 => {
                    if bland {
                        h < self.head[r]
                    } else {
                        coef.abs() > (dir * self.tab[r * n + q]).abs()
                    }
                }
                None if limit <= theta + 1e-12 && theta.is_finite() => {
                    // Prefer a pivot over a bound flip on ties.
                    true
                }
                _ => false,
            };
            if better {
                theta = limit;
                leave = Some((i, coef));
            }
        }
        if !theta.is_finite() {
            return Step::Unbounded;
        }
        let degenerate = theta <= 1e-12;

        // Move along the edge.
        for i in 0..self.m {
            let coef = dir * self.tab[i * n + q];
            if coef != 0.0 {
                let h = self.head[i];
                self.x[h] -= theta * coef;
            }
        }
        self.x[q] += dir * theta;

        match leave {
            None => {
                self.state[q] = if dir > 0.0 { VarState::Upper } else { VarState::Lower };
                self.x[q] = if dir > 0.0 { self.upper[q] } else { self.lower[q] };
            }
            Some((r, coef)) => {
                let h = self.head[r];
                if coef > 0.0 {
                    self.state[h] = VarState::Lower;
                    self.x[h] = self.lower[h];
                } else {
                    self.state[h] = VarState::Upper;
                    self.x[h] = self.upper[h];
                }
                self.pivot(r, q);
            }
        }
        Step::Progress { degenerate }
    }

    fn dual_loop(&mut self, max_iters: usize) -> LpStatus {
        let start = self.iterations;
        let n = self.n;
        loop {
            if self.out_of_budget(start, max_iters) {
                return LpStatus::IterationLimit;
            }
            // Leaving row: largest bound violation.
            let mut leave = None;
            let mut worst = FEAS_TOL;
            for i in 0..self.m {
                let h = self.head[i];
                let v = (self.lower[h] - self.x[h]).max(self.x[h] - self.upper[h]);
                if v > worst {
                    worst = v;
                    leave = Some(i);
                }
            }
            let Some(r) = leave else {
                if self.since_refactor > 0 {
                    self.refactor();
                    if self.max_primal_infeasibility() > FEAS_TOL {
                        continue;
                    }
                }
                return LpStatus::Optimal;
            };
            let h = self.head[r];
            let target = if self.x[h] < self.lower[h] { self.lower[h] } else { self.upper[h] };
            let delta = self.x[h] - target;
            // Basic value moves by -t_rj * dx_j; it must move by -delta.
            let row = &self.tab[r * n..(r + 1) * n];
            let mut enter = None;
            let mut best_ratio = f64::INFINITY;
            let mut best_pivot = 0.0;
            for j in 0..n {
                let t = row[j];
                if t.abs() <= PIVOT_TOL || self.lower[j] == self.upper[j] {
                    continue;
                }
                let eligible = match self.state[j] {
                    VarState::Basic => false,
                    // dx_j >= 0, need t * dx = delta
                    VarState::Lower => t * delta > 0.0,
                    VarState::Upper => t * delta < 0.0,
                };
                if !eligible {
                    continue;
                }
                let ratio = self.d[j].abs() / t.abs();
                if ratio < best_ratio - 1e-12 || (ratio <= best_ratio + 1e-12 && t.abs() > best_pivot) {
                    best_ratio = ratio;
                    best_pivot = t.abs();
                    enter = Some(j);
                }
            }
            let Some(q) = enter else { return LpStatus::Infeasible };
            let dx = delta / row[q];
            for i in 0..self.m {
                let t = self.tab[i * n + q];
                if t != 0.0 {
                    let hi = self.head[i];
                    self.x[hi] -= t * dx;
                }
            }
            self.x[q] += dx;
            self.x[h] = target;
            self.state[h] = if target == self.lower[h] { VarState::Lower } else { VarState::Upper };
            self.pivot(r, q);
            self.iterations += 1;
            if self.since_refactor >= REFACTOR_EVERY {
                self.refactor();
            }
        }
    }

    /// Gauss-Jordan pivot making `q` basic in row `r`. Values in `x` must
    /// already reflect the new vertex.
    fn pivot(&mut self, r: usize, q: usize) {
        let n = self.n;
        let piv = self.tab[r * n + q];
        {
            let row = &mut self.tab[r * n..(r + 1) * n];
            for v in row.iter_mut() {
                *v /= piv;
            }
        }
        self.rhs[r] /= piv;
        let nz: Vec<usize> = (0..n).filter(|&j| self.tab[r * n + j].abs() > 1e-14).collect();
        let (before, rest) = self.tab.split_at_mut(r * n);
        let (prow, after) = rest.split_at_mut(n);
        let rhs_r = self.rhs[r];
        for (i, row) in before.chunks_exact_mut(n).chain(after.chunks_exact_mut(n)).enumerate() {
            let i = if i >= r { i + 1 } else { i };
            let f = row[q];
            if f == 0.0 {
                continue;
            }
            for &j in &nz {
                row[j] -= f * prow[j];
            }
            row[q] = 0.0;
            self.rhs[i] -= f * rhs_r;
        }
        let dq = self.d[q];
        if dq != 0.0 {
            for &j in &nz {
                self.d[j] -= dq * prow[j];
            }
        }
        self.d[q] = 0.0;
        self.state[q] = VarState::Basic;
        self.head[r] = q;
        self.since_refactor += 1;
        self.pivots += 1;
    }

    fn drive_out_artificials(&mut self) {
        let n = self.n;
        for r in 0..self.m {
            let h = self.head[r];
            if h < self.artificial_start || h >= self.artificial_end {
                continue;
            }
            let candidate = (0..self.artificial_start)
                .filter(|&j| self.state[j] != VarState::Basic)
                .max_by(|&a, &b| self.tab[r * n + a].abs().total_cmp(&self.tab[r * n + b].abs()));
            if let Some(q) = candidate {
                if self.tab[r * n + q].abs() > 1e-7 {
                    // Degenerate exchange: the artificial sits at 0.
                    self.x[h] = 0.0;
                    self.state[h] = VarState::Lower;
                    self.pivot(r, q);
                }
            }
        }
    }

    /// Rebuilds the tableau from the original columns and the current basis.
    fn refactor(&mut self) {
        let (m, n) = (self.m, self.n);
        // Dense basis matrix, then Gauss-Jordan inverse with partial pivoting.
        let mut bmat = vec![0.0; m * m];
        for (k, &h) in self.head.iter().enumerate() {
            for &(i, a) in &self.cols[h] {
                bmat[i * m + k] = a;
            }
        }
        let Some(inv) = invert(bmat, m) else {
            // Keep the incrementally updated tableau.
            self.since_refactor = 0;
            return;
        };
        self.tab.iter_mut().for_each(|v| *v = 0.0);
        for j in 0..n {
            for &(k, a) in &self.cols[j] {
                for i in 0..m {
                    let v = inv[i * m + k];
                    if v != 0.0 {
                        self.tab[i * n + j] += v * a;
                    }
                }
            }
        }
        for i in 0..m {
            self.rhs[i] = (0..m).map(|k| inv[i * m + k] * self.b[k]).sum();
        }
        // Clean exact identities in basic columns.
        for (i, &h) in self.head.iter().enumerate() {
            for k in 0..m {
                self.tab[k * n + h] = if k == i { 1.0 } else { 0.0 };
            }
        }
        self.recompute_basic_values();
        self.recompute_reduced_costs();
        self.since_refactor = 0;
    }
}

fn invert(mut a: Vec<f64>, m: usize) -> Option<Vec<f64>> {
    let mut inv = vec![0.0; m * m];
    for i in 0..m {
        inv[i * m + i] = 1.0;
    }
    for c in 0..m {
        let p = (c..m).max_by(|&x, &y| a[x * m + c].abs().total_cmp(&a[y * m + c].abs()))?;
        if a[p * m + c].abs() < 1e-12 {
            return None;
        }
        if p != c {
            for k in 0..m {
                a.swap(p * m + k, c * m + k);
                inv.swap(p * m + k, c * m + k);
            }
        }
        let piv = a[c * m + c];
        for k in 0..m {
            a[c * m + k] /= piv;
            inv[c * m + k] /= piv;
        }
        for r in 0..m {
            if r == c {
                continue;
            }
            let f = a[r * m + c];
            if f == 0.0 {
                continue;
            }
            for k in 0..m {
                a[r * m + k] -= f * a[c * m + k];
                inv[r * m + k] -= f * inv[c * m + k];
            }
        }
    }
    Some(inv)
}
