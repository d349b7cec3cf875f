//! Bounded-variable primal simplex.
//!
//! Every row `k` gets a logical variable `r_k = a_k x` whose bounds encode
//! the row sense, so the working system is `[A | -I] (x, r) = 0` with bounds
//! on every column. The basis inverse is kept in product form: a list of
//! sparse elementary column transformations applied to the all-logical
//! basis. Reinversion rebuilds the list, pivoting on sparse rows first so
//! the dense makespan and quanta rows do not spread fill.
//!
//! Infeasible starting bases are handled by a composite phase one that
//! minimises the sum of bound violations of the basic variables, so a solve
//! can start from any basis (used by branch-and-bound to resume from the
//! parent node).

use super::program::{ConstraintSense, MixedIntegerProgram};

const PRIMAL_TOL: f64 = 1e-9;
const DUAL_TOL: f64 = 1e-9;
const PIVOT_TOL: f64 = 1e-9;
const DROP_TOL: f64 = 1e-14;
/// Consecutive degenerate pivots before switching to Bland's rule.
const DEGENERATE_STREAK: usize = 50;
const REFACTOR_INTERVAL: usize = 100;
/// Relative pivot threshold during reinversion.
const REINVERT_THRESHOLD: f64 = 0.1;
const RECOMPUTE_INTERVAL: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
    IterationLimit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub(crate) enum VarState {
    Basic,
    AtLower,
    AtUpper,
    /// Nonbasic free variable resting at zero.
    Free,
}

/// Column-wise copy of a program's constraint matrix.
#[derive(Debug, Clone)]
pub(crate) struct LpModel {
    pub n: usize,
    pub m: usize,
    cols: Vec<Vec<(usize, f64)>>,
    rows: Vec<Vec<(usize, f64)>>,
    pub obj: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    row_lower: Vec<f64>,
    row_upper: Vec<f64>,
    row_count: Vec<usize>,
}

impl LpModel {
    pub fn from_program(program: &MixedIntegerProgram) -> Self {
        let n = program.variables().len();
        let m = program.constraints().len();
        let mut cols = vec![Vec::new(); n];
        let mut row_lower = Vec::with_capacity(m);
        let mut row_upper = Vec::with_capacity(m);
        for (k, c) in program.constraints().iter().enumerate() {
            for &(v, a) in &c.coefficients {
                cols[v].push((k, a));
            }
            let (lo, hi) = match c.sense {
                ConstraintSense::Le => (f64::NEG_INFINITY, c.rhs),
                ConstraintSense::Ge => (c.rhs, f64::INFINITY),
                ConstraintSense::Eq => (c.rhs, c.rhs),
            };
            row_lower.push(lo);
            row_upper.push(hi);
        }
        let mut rows = vec![Vec::new(); m];
        for (j, col) in cols.iter().enumerate() {
            for &(k, a) in col {
                rows[k].push((j, a));
            }
        }
        let row_count = rows.iter().map(Vec::len).collect();
        let mut obj = vec![0.0; n];
        for &(v, c) in program.objective() {
            obj[v] = c;
        }
        LpModel {
            n,
            m,
            cols,
            rows,
            obj,
            lower: program.variables().iter().map(|v| v.lower).collect(),
            upper: program.variables().iter().map(|v| v.upper).collect(),
            row_lower,
            row_upper,
            row_count,
        }
    }
}

pub(crate) struct Simplex<'a> {
    model: &'a LpModel,
    lower: Vec<f64>,
    upper: Vec<f64>,
    x: Vec<f64>,
    state: Vec<VarState>,
    /// Basic variable of each row position.
    head: Vec<usize>,
    etas: EtaFile,
    pivots_since_refactor: usize,
    pub iterations: usize,
    // scratch
    alpha: Vec<f64>,
    y: Vec<f64>,
}

impl<'a> Simplex<'a> {
    pub fn new(model: &'a LpModel) -> Self {
        let (n, m) = (model.n, model.m);
        let mut lower = model.lower.clone();
        let mut upper = model.upper.clone();
        lower.extend_from_slice(&model.row_lower);
        upper.extend_from_slice(&model.row_upper);
        let mut s = Simplex {
            model,
            lower,
            upper,
            x: vec![0.0; n + m],
            state: vec![VarState::AtLower; n + m],
            head: (n..n + m).collect(),
            etas: EtaFile::default(),
            pivots_since_refactor: 0,
            iterations: 0,
            alpha: vec![0.0; m],
            y: vec![0.0; m],
        };
        for j in 0..n {
            s.state[j] = s.resting_state(j, VarState::AtLower);
        }
        for k in 0..m {
            s.state[n + k] = VarState::Basic;
        }
        s.reset_inverse();
        s.place_nonbasic();
        s.recompute_basic_values();
        s
    }

    pub fn values(&self) -> &[f64] {
        &self.x[..self.model.n]
    }

    pub fn objective(&self) -> f64 {
        self.model.obj.iter().zip(&self.x).map(|(c, x)| c * x).sum()
    }

    /// Replaces the bounds of structural variable `j`.
    pub fn set_bounds(&mut self, j: usize, lower: f64, upper: f64) {
        debug_assert!(j < self.model.n);
        self.lower[j] = lower;
        self.upper[j] = upper;
    }

    /// Re-applies bounds after [`Self::set_bounds`] without changing basis.
    pub fn refresh(&mut self) {
        self.place_nonbasic();
        self.recompute_basic_values();
    }

    fn resting_state(&self, j: usize, preferred: VarState) -> VarState {
        let (lo, hi) = (self.lower[j], self.upper[j]);
        match preferred {
            VarState::AtUpper if hi.is_finite() => VarState::AtUpper,
            _ if lo.is_finite() => VarState::AtLower,
            _ if hi.is_finite() => VarState::AtUpper,
            _ => VarState::Free,
        }
    }

    fn place_nonbasic(&mut self) {
        for j in 0..self.state.len() {
            let st = self.state[j];
            if st == VarState::Basic {
                continue;
            }
            let st = self.resting_state(j, st);
            self.state[j] = st;
            self.x[j] = match st {
                VarState::AtLower => self.lower[j],
                VarState::AtUpper => self.upper[j],
                _ => 0.0,
            };
        }
    }

    fn reset_inverse(&mut self) {
        self.etas.clear();
    }

    #[inline]
    fn for_each_entry(&self, j: usize, mut f: impl FnMut(usize, f64)) {
        let n = self.model.n;
        if j < n {
            for &(k, a) in &self.model.cols[j] {
                f(k, a);
            }
        } else {
            f(j - n, -1.0);
        }
    }

    /// alpha = B^-1 a_j
    fn ftran(&mut self, j: usize) {
        let mut alpha = std::mem::take(&mut self.alpha);
        alpha.iter_mut().for_each(|a| *a = 0.0);
        self.for_each_entry(j, |k, a| alpha[k] += a);
        self.etas.ftran(&mut alpha);
        self.alpha = alpha;
    }

    /// Swaps the entering variable into row position `r` using the current
    /// `alpha` column.
    fn pivot_inverse(&mut self, r: usize) {
        self.etas.push(r, &self.alpha);
        self.pivots_since_refactor += 1;
    }

    /// Rebuilds the inverse from scratch for the basis recorded in `state`.
    /// Columns that turn out to be dependent are dropped from the basis and
    /// replaced by logicals.
    fn reinvert(&mut self) {
        let (n, m) = (self.model.n, self.model.m);
        self.reset_inverse();
        for k in 0..m {
            self.head[k] = n + k;
        }
        let in_target: Vec<bool> = self.state.iter().map(|&s| s == VarState::Basic).collect();
        let mut structurals: Vec<usize> = (0..n).filter(|&j| in_target[j]).collect();
        // Short columns first, ties by index.
        structurals.sort_by_key(|&j| (self.model.cols[j].len(), j));
        // Sparse work column: values in `alpha`, pattern in `pattern`.
        let mut alpha = std::mem::take(&mut self.alpha);
        alpha.iter_mut().for_each(|a| *a = 0.0);
        let mut marked = vec![false; m];
        let mut pattern = Vec::new();
        for q in structurals {
            for &r in &pattern {
                alpha[r] = 0.0;
                marked[r] = false;
            }
            pattern.clear();
            for &(k, a) in &self.model.cols[q] {
                alpha[k] += a;
                if !marked[k] {
                    marked[k] = true;
                    pattern.push(k);
                }
            }
            self.etas.ftran_sparse(&mut alpha, &mut pattern, &mut marked);
            let mut max_mag = 0.0f64;
            for &r in &pattern {
                let h = self.head[r];
                if h >= n && !in_target[h] {
                    max_mag = max_mag.max(alpha[r].abs());
                }
            }
            if max_mag <= PIVOT_TOL {
                self.state[q] = self.resting_state(q, VarState::AtLower);
                continue;
            }
            // Among acceptable pivots prefer the row with the fewest entries.
            let mut best: Option<(usize, usize, f64)> = None;
            for &r in &pattern {
                let h = self.head[r];
                let a = alpha[r].abs();
                if h >= n && !in_target[h] && a >= REINVERT_THRESHOLD * max_mag {
                    let count = self.model.row_count[r];
                    let better = match best {
                        None => true,
                        Some((br, c, mag)) => count < c || (count == c && (a > mag || (a == mag && r < br))),
                    };
                    if better {
                        best = Some((r, count, a));
                    }
                }
            }
            let (r, _, _) = best.expect("a pivot above the threshold exists");
            self.etas.push_sparse(r, &alpha, &pattern);
            self.head[r] = q;
        }
        for &r in &pattern {
            alpha[r] = 0.0;
        }
        self.alpha = alpha;
        for j in n..n + m {
            if self.state[j] == VarState::Basic {
                self.state[j] = self.resting_state(j, VarState::AtLower);
            }
        }
        for r in 0..m {
            self.state[self.head[r]] = VarState::Basic;
        }
        self.pivots_since_refactor = 0;
    }

    fn recompute_basic_values(&mut self) {
        let m = self.model.m;
        let mut v = vec![0.0; m];
        for j in 0..self.state.len() {
            if self.state[j] != VarState::Basic && self.x[j] != 0.0 {
                let xj = self.x[j];
                self.for_each_entry(j, |k, a| v[k] += a * xj);
            }
        }
        self.etas.ftran(&mut v);
        for r in 0..m {
            self.x[self.head[r]] = -v[r];
        }
    }

    fn infeasibility_direction(&self, var: usize) -> f64 {
        let x = self.x[var];
        if x < self.lower[var] - PRIMAL_TOL {
            -1.0
        } else if x > self.upper[var] + PRIMAL_TOL {
            1.0
        } else {
            0.0
        }
    }

    fn column_dot(&self, j: usize, y: &[f64]) -> f64 {
        let mut s = 0.0;
        self.for_each_entry(j, |k, a| s += y[k] * a);
        s
    }

    /// Solves from the current basis. A dual feasible basis, as left behind
    /// by an optimal solve followed by bound changes, is first repaired with
    /// dual simplex pivots; the primal method finishes or takes over.
    pub fn solve(&mut self, max_iterations: usize) -> LpStatus {
        let used = match self.dual(max_iterations) {
            DualOutcome::Infeasible => return LpStatus::Infeasible,
            DualOutcome::Done(k) | DualOutcome::Abandoned(k) => k,
        };
        self.primal(max_iterations.saturating_sub(used))
    }

    /// Reduced costs of the structural variables at the current basis, zero
    /// for basic ones.
    pub fn structural_reduced_costs(&mut self) -> Vec<f64> {
        let mut d = vec![0.0; self.model.n + self.model.m];
        self.reduced_costs(&mut d);
        d.truncate(self.model.n);
        d
    }

    /// `Some(true)` when nonbasic at the upper bound, `Some(false)` at the
    /// lower bound, `None` otherwise.
    pub fn at_upper(&self, j: usize) -> Option<bool> {
        match self.state[j] {
            VarState::AtLower => Some(false),
            VarState::AtUpper => Some(true),
            _ => None,
        }
    }

    /// Reduced costs for the phase-two objective at the current basis.
    fn reduced_costs(&mut self, d: &mut [f64]) {
        let (n, m) = (self.model.n, self.model.m);
        let mut y = std::mem::take(&mut self.y);
        for r in 0..m {
            let h = self.head[r];
            y[r] = if h < n { self.model.obj[h] } else { 0.0 };
        }
        self.etas.btran(&mut y);
        for j in 0..n + m {
            d[j] = if self.state[j] == VarState::Basic {
                0.0
            } else {
                let c = if j < n { self.model.obj[j] } else { 0.0 };
                c - self.column_dot(j, &y)
            };
        }
        self.y = y;
    }

    fn dual_feasible(&self, j: usize, d: f64) -> bool {
        match self.state[j] {
            VarState::Basic => true,
            _ if self.lower[j] == self.upper[j] => true,
            VarState::AtLower => d >= -DUAL_TOL,
            VarState::AtUpper => d <= DUAL_TOL,
            VarState::Free => d.abs() <= DUAL_TOL,
        }
    }

    fn dual(&mut self, max_iterations: usize) -> DualOutcome {
        let (n, m) = (self.model.n, self.model.m);
        let total = n + m;
        let mut d = vec![0.0; total];
        self.reduced_costs(&mut d);
        // Boxed variables on the wrong side are flipped; anything else
        // leaves the work to the primal method.
        let mut flipped = false;
        for j in 0..total {
            if self.dual_feasible(j, d[j]) {
                continue;
            }
            let (lo, hi) = (self.lower[j], self.upper[j]);
            if !(lo.is_finite() && hi.is_finite()) {
                return DualOutcome::Abandoned(0);
            }
            let st = if d[j] < 0.0 { VarState::AtUpper } else { VarState::AtLower };
            self.state[j] = st;
            flipped = true;
        }
        if flipped {
            self.place_nonbasic();
            self.recompute_basic_values();
        }

        let mut rho = vec![0.0; m];
        let mut row = vec![0.0; total];
        let mut touched: Vec<usize> = Vec::new();
        let mut marked = vec![false; total];
        let mut local_iter = 0usize;
        let mut confirmed = false;
        loop {
            if local_iter >= max_iterations {
                return DualOutcome::Abandoned(local_iter);
            }
            if self.pivots_since_refactor >= REFACTOR_INTERVAL {
                self.reinvert();
                self.place_nonbasic();
                self.recompute_basic_values();
                self.reduced_costs(&mut d);
                if (0..total).any(|j| !self.dual_feasible(j, d[j])) {
                    return DualOutcome::Abandoned(local_iter);
                }
            } else if local_iter > 0 && local_iter % RECOMPUTE_INTERVAL == 0 {
                self.recompute_basic_values();
            }

            // Leaving row: largest bound violation.
            let mut leave: Option<(usize, f64)> = None;
            let mut worst = PRIMAL_TOL;
            for r in 0..m {
                let h = self.head[r];
                let x = self.x[h];
                let (viol, target) = if x < self.lower[h] {
                    (self.lower[h] - x, self.lower[h])
                } else if x > self.upper[h] {
                    (x - self.upper[h], self.upper[h])
                } else {
                    continue;
                };
                if viol > worst {
                    worst = viol;
                    leave = Some((r, target));
                }
            }
            let Some((r, target)) = leave else {
                return DualOutcome::Done(local_iter);
            };
            let p = self.head[r];
            let increase = self.x[p] < target;

            // Row r of B^-1 N.
            rho.iter_mut().for_each(|v| *v = 0.0);
            rho[r] = 1.0;
            self.etas.btran(&mut rho);
            for &j in &touched {
                row[j] = 0.0;
                marked[j] = false;
            }
            touched.clear();
            for (k, &rk) in rho.iter().enumerate() {
                if rk == 0.0 {
                    continue;
                }
                for &(j, a) in &self.model.rows[k] {
                    row[j] += rk * a;
                    if !marked[j] {
                        marked[j] = true;
                        touched.push(j);
                    }
                }
                row[n + k] = -rk;
                marked[n + k] = true;
                touched.push(n + k);
            }
            touched.retain(|&j| {
                let keep = self.state[j] != VarState::Basic && self.lower[j] != self.upper[j] && row[j].abs() > DROP_TOL;
                if !keep {
                    row[j] = 0.0;
                    marked[j] = false;
                }
                keep
            });

            // Moving x_j by t changes x_p by -row[j] t. Eligible columns move
            // x_p towards its bound from a feasible direction for x_j.
            let eligible = |j: usize, a: f64, state: VarState| -> bool {
                let toward = if increase { -a } else { a };
                match state {
                    VarState::AtLower => toward > PIVOT_TOL,
                    VarState::AtUpper => toward < -PIVOT_TOL,
                    VarState::Free => a.abs() > PIVOT_TOL,
                    VarState::Basic => {
                        let _ = j;
                        false
                    }
                }
            };
            let mut bound = f64::INFINITY;
            for &j in &touched {
                let a = row[j];
                if a != 0.0 && eligible(j, a, self.state[j]) {
                    bound = bound.min((d[j].abs() + DUAL_TOL) / a.abs());
                }
            }
            let mut entering: Option<usize> = None;
            let mut best = 0.0;
            for &j in &touched {
                let a = row[j];
                if a != 0.0 && eligible(j, a, self.state[j]) && d[j].abs() / a.abs() <= bound && a.abs() > best {
                    best = a.abs();
                    entering = Some(j);
                }
            }
            let Some(q) = entering else {
                if confirmed {
                    return DualOutcome::Infeasible;
                }
                // Rule out round-off before declaring infeasibility.
                confirmed = true;
                self.reinvert();
                self.place_nonbasic();
                self.recompute_basic_values();
                self.reduced_costs(&mut d);
                if (0..total).any(|j| !self.dual_feasible(j, d[j])) {
                    return DualOutcome::Abandoned(local_iter);
                }
                continue;
            };
            confirmed = false;

            self.ftran(q);
            let a_rq = self.alpha[r];
            if a_rq.abs() <= PIVOT_TOL || (a_rq - row[q]).abs() > 1e-6 * (1.0 + a_rq.abs()) {
                // Row and column disagree: refactor and let the primal finish.
                self.reinvert();
                self.place_nonbasic();
                self.recompute_basic_values();
                return DualOutcome::Abandoned(local_iter);
            }
            let step = (self.x[p] - target) / a_rq;
            for i in 0..m {
                let a = self.alpha[i];
                if a != 0.0 {
                    self.x[self.head[i]] -= a * step;
                }
            }
            self.x[q] += step;
            self.x[p] = target;
            self.state[p] = if target == self.lower[p] { VarState::AtLower } else { VarState::AtUpper };

            // d_j -= (d_q / a_rq) row[j]; the leaving variable gets -d_q / a_rq.
            let ratio = d[q] / a_rq;
            for &j in &touched {
                d[j] -= ratio * row[j];
            }
            d[p] = -ratio;
            d[q] = 0.0;

            self.pivot_inverse(r);
            self.head[r] = q;
            self.state[q] = VarState::Basic;
            local_iter += 1;
            self.iterations += 1;
        }
    }

    fn primal(&mut self, max_iterations: usize) -> LpStatus {
        let (n, m) = (self.model.n, self.model.m);
        let total = n + m;
        let mut degenerate_streak = 0usize;
        let mut local_iter = 0usize;
        let mut cost_basic = vec![0.0; m];
        loop {
            if local_iter >= max_iterations {
                return LpStatus::IterationLimit;
            }
            if self.pivots_since_refactor >= REFACTOR_INTERVAL {
                self.reinvert();
                self.place_nonbasic();
                self.recompute_basic_values();
            } else if local_iter > 0 && local_iter % RECOMPUTE_INTERVAL == 0 {
                self.recompute_basic_values();
            }

            let mut phase_one = false;
            for r in 0..m {
                let d = self.infeasibility_direction(self.head[r]);
                cost_basic[r] = d;
                phase_one |= d != 0.0;
            }
            if !phase_one {
                for r in 0..m {
                    let h = self.head[r];
                    cost_basic[r] = if h < n { self.model.obj[h] } else { 0.0 };
                }
            }

            // y = c_B B^-1
            let mut y = std::mem::take(&mut self.y);
            y.copy_from_slice(&cost_basic);
            self.etas.btran(&mut y);

            // Pricing.
            let bland = degenerate_streak >= DEGENERATE_STREAK;
            let mut entering = None;
            let mut best_score = 0.0;
            for j in 0..total {
                let st = self.state[j];
                if st == VarState::Basic || self.lower[j] == self.upper[j] {
                    continue;
                }
                let c = if !phase_one && j < n { self.model.obj[j] } else { 0.0 };
                let d = c - self.column_dot(j, &y);
                let dir = match st {
                    VarState::AtLower if d < -DUAL_TOL => 1.0,
                    VarState::AtUpper if d > DUAL_TOL => -1.0,
                    VarState::Free if d.abs() > DUAL_TOL => -d.signum(),
                    _ => continue,
                };
                if bland {
                    entering = Some((j, dir));
                    break;
                }
                if d.abs() > best_score {
                    best_score = d.abs();
                    entering = Some((j, dir));
                }
            }
            self.y = y;
            let Some((q, dir)) = entering else {
                return if phase_one { LpStatus::Infeasible } else { LpStatus::Optimal };
            };

            self.ftran(q);

            // Harris two-pass ratio test.
            let mut t_harris = f64::INFINITY;
            for r in 0..m {
                let a = self.alpha[r];
                if a.abs() <= PIVOT_TOL {
                    continue;
                }
                let rate = -dir * a;
                if let Some((dist, _)) = self.room(self.head[r], rate) {
                    t_harris = t_harris.min((dist + PRIMAL_TOL) / rate.abs());
                }
            }
            let mut leave: Option<(usize, f64, bool)> = None;
            let mut best_alpha = 0.0;
            for r in 0..m {
                let a = self.alpha[r];
                if a.abs() <= PIVOT_TOL {
                    continue;
                }
                let rate = -dir * a;
                if let Some((dist, to_upper)) = self.room(self.head[r], rate) {
                    let t = dist / rate.abs();
                    if t <= t_harris && a.abs() > best_alpha {
                        best_alpha = a.abs();
                        leave = Some((r, t.max(0.0), to_upper));
                    }
                }
            }

            let range = self.upper[q] - self.lower[q];
            let step;
            match leave {
                Some((_, t, _)) if t < range => step = t,
                _ if range.is_finite() => {
                    // Bound flip of the entering variable.
                    step = range;
                    leave = None;
                }
                _ => {
                    return if phase_one {
                        LpStatus::IterationLimit
                    } else {
                        LpStatus::Unbounded
                    };
                }
            }

            if step <= 1e-12 {
                degenerate_streak += 1;
            } else {
                degenerate_streak = 0;
            }

            if step != 0.0 {
                for r in 0..m {
                    let a = self.alpha[r];
                    if a != 0.0 {
                        self.x[self.head[r]] -= dir * step * a;
                    }
                }
            }
            match leave {
                None => {
                    let (st, val) = if dir > 0.0 {
                        (VarState::AtUpper, self.upper[q])
                    } else {
                        (VarState::AtLower, self.lower[q])
                    };
                    self.state[q] = st;
                    self.x[q] = val;
                }
                Some((r, _, to_upper)) => {
                    let out = self.head[r];
                    self.x[q] += dir * step;
                    if to_upper {
                        self.state[out] = VarState::AtUpper;
                        self.x[out] = self.upper[out];
                    } else {
                        self.state[out] = VarState::AtLower;
                        self.x[out] = self.lower[out];
                    }
                    self.pivot_inverse(r);
                    self.head[r] = q;
                    self.state[q] = VarState::Basic;
                }
            }
            local_iter += 1;
            self.iterations += 1;
        }
    }

    /// Distance basic variable `var` may travel at `rate` before it hits the
    /// bound that stops it, and whether that bound is the upper one. Phase one
    /// lets an infeasible variable run away from its bounds and stops it at
    /// the first bound it reaches when moving back.
    fn room(&self, var: usize, rate: f64) -> Option<(f64, bool)> {
        let (x, lo, hi) = (self.x[var], self.lower[var], self.upper[var]);
        if rate < 0.0 {
            if x < lo - PRIMAL_TOL {
                None
            } else if x > hi + PRIMAL_TOL {
                Some((x - hi, true))
            } else if lo.is_finite() {
                Some(((x - lo).max(0.0), false))
            } else {
                None
            }
        } else if x > hi + PRIMAL_TOL {
            None
        } else if x < lo - PRIMAL_TOL {
            Some((lo - x, false))
        } else if hi.is_finite() {
            Some(((hi - x).max(0.0), true))
        } else {
            None
        }
    }

    /// Re-solves after a fresh refactorization if round-off left the
    /// reported optimum slightly infeasible.
    pub fn polish(&mut self, max_iterations: usize) -> LpStatus {
        self.reinvert();
        self.place_nonbasic();
        self.recompute_basic_values();
        self.solve(max_iterations)
    }
}

enum DualOutcome {
    /// Primal feasible, hence optimal; carries the pivots used.
    Done(usize),
    Infeasible,
    /// Not applicable or stopped early.
    Abandoned(usize),
}

/// Product-form inverse. The starting basis is all logicals, whose
/// inverse is `-I`; each entry is an elementary matrix that replaces row
/// position `row` using the transformed entering column.
#[derive(Debug, Clone, Default)]
struct EtaFile {
    rows: Vec<usize>,
    pivots: Vec<f64>,
    starts: Vec<usize>,
    index: Vec<usize>,
    value: Vec<f64>,
}

impl EtaFile {
    fn clear(&mut self) {
        self.rows.clear();
        self.pivots.clear();
        self.starts.clear();
        self.index.clear();
        self.value.clear();
    }

    fn push(&mut self, row: usize, alpha: &[f64]) {
        self.rows.push(row);
        self.pivots.push(alpha[row]);
        self.starts.push(self.index.len());
        for (i, &a) in alpha.iter().enumerate() {
            if i != row && a.abs() > DROP_TOL {
                self.index.push(i);
                self.value.push(a);
            }
        }
    }

    fn push_sparse(&mut self, row: usize, alpha: &[f64], pattern: &[usize]) {
        self.rows.push(row);
        self.pivots.push(alpha[row]);
        self.starts.push(self.index.len());
        let mut sorted: Vec<usize> = pattern.iter().copied().filter(|&i| i != row && alpha[i].abs() > DROP_TOL).collect();
        sorted.sort_unstable();
        for i in sorted {
            self.index.push(i);
            self.value.push(alpha[i]);
        }
    }

    /// [`Self::ftran`] on a sparse vector whose nonzero positions are listed
    /// in `pattern` and flagged in `marked`; both are extended with fill.
    fn ftran_sparse(&self, x: &mut [f64], pattern: &mut Vec<usize>, marked: &mut [bool]) {
        for &i in pattern.iter() {
            x[i] = -x[i];
        }
        for (e, (&r, &piv)) in self.rows.iter().zip(&self.pivots).enumerate() {
            if x[r] == 0.0 {
                continue;
            }
            let xr = x[r] / piv;
            x[r] = xr;
            for k in self.entries(e) {
                let i = self.index[k];
                x[i] -= self.value[k] * xr;
                if !marked[i] {
                    marked[i] = true;
                    pattern.push(i);
                }
            }
        }
    }

    fn entries(&self, e: usize) -> std::ops::Range<usize> {
        self.starts[e]..self.starts.get(e + 1).copied().unwrap_or(self.index.len())
    }

    /// `x <- B^-1 x`
    fn ftran(&self, x: &mut [f64]) {
        x.iter_mut().for_each(|v| *v = -*v);
        for (e, (&r, &piv)) in self.rows.iter().zip(&self.pivots).enumerate() {
            if x[r] == 0.0 {
                continue;
            }
            let xr = x[r] / piv;
            x[r] = xr;
            for k in self.entries(e) {
                x[self.index[k]] -= self.value[k] * xr;
            }
        }
    }

    /// `y <- y B^-1` for a row vector `y`.
    fn btran(&self, y: &mut [f64]) {
        for e in (0..self.rows.len()).rev() {
            let r = self.rows[e];
            let mut s = y[r];
            for k in self.entries(e) {
                s -= self.value[k] * y[self.index[k]];
            }
            y[r] = s / self.pivots[e];
        }
        y.iter_mut().for_each(|v| *v = -*v);
    }
}

#[cfg(test)]
mod tests {
    use super::super::program::{LinearConstraint, VariableSpec};
    use super::*;

    fn solve(p: &MixedIntegerProgram) -> (LpStatus, Vec<f64>, f64) {
        let model = LpModel::from_program(p);
        let mut s = Simplex::new(&model);
        let st = s.solve(10_000);
        (st, s.values().to_vec(), s.objective())
    }

    #[test]
    fn single_bounded_variable() {
        let mut p = MixedIntegerProgram::new();
        let x = p.add_variable(VariableSpec::continuous("x", f64::NEG_INFINITY, f64::INFINITY)).unwrap();
        p.add_constraint(LinearConstraint::new("lo", [(x, 1.0)], ConstraintSense::Ge, 3.0)).unwrap();
        p.add_constraint(LinearConstraint::new("hi", [(x, 1.0)], ConstraintSense::Le, 10.0)).unwrap();
        p.set_objective([(x, 1.0)]).unwrap();
        let (st, v, obj) = solve(&p);
        assert_eq!(st, LpStatus::Optimal);
        assert!((v[0] - 3.0).abs() < 1e-9);
        assert!((obj - 3.0).abs() < 1e-9);
    }

    #[test]
    fn textbook_lp() {
        let mut p = MixedIntegerProgram::new();
        let x = p.add_variable(VariableSpec::continuous("x", 0.0, f64::INFINITY)).unwrap();
        let y = p.add_variable(VariableSpec::continuous("y", 0.0, f64::INFINITY)).unwrap();
        p.add_constraint(LinearConstraint::new("c", [(x, 1.0), (y, 1.0)], ConstraintSense::Le, 1.0)).unwrap();
        p.set_objective([(x, -1.0), (y, -1.0)]).unwrap();
        let (st, _, obj) = solve(&p);
        assert_eq!(st, LpStatus::Optimal);
        assert!((obj + 1.0).abs() < 1e-9);
    }

    #[test]
    fn detects_infeasible_and_unbounded() {
        let mut p = MixedIntegerProgram::new();
        let x = p.add_variable(VariableSpec::continuous("x", 0.0, 5.0)).unwrap();
        p.add_constraint(LinearConstraint::new("c", [(x, 1.0)], ConstraintSense::Ge, 6.0)).unwrap();
        assert_eq!(solve(&p).0, LpStatus::Infeasible);

        let mut p = MixedIntegerProgram::new();
        let x = p.add_variable(VariableSpec::continuous("x", 0.0, f64::INFINITY)).unwrap();
        let y = p.add_variable(VariableSpec::continuous("y", 0.0, f64::INFINITY)).unwrap();
        p.add_constraint(LinearConstraint::new("c", [(x, 1.0), (y, -1.0)], ConstraintSense::Le, 1.0)).unwrap();
        p.set_objective([(x, -1.0)]).unwrap();
        assert_eq!(solve(&p).0, LpStatus::Unbounded);
    }

    #[test]
    fn warm_start_after_bound_change() {
        let mut p = MixedIntegerProgram::new();
        let x = p.add_variable(VariableSpec::continuous("x", 0.0, 4.0)).unwrap();
        let y = p.add_variable(VariableSpec::continuous("y", 0.0, 4.0)).unwrap();
        p.add_constraint(LinearConstraint::new("c", [(x, 2.0), (y, 1.0)], ConstraintSense::Le, 5.0)).unwrap();
        p.set_objective([(x, -3.0), (y, -1.0)]).unwrap();
        let model = LpModel::from_program(&p);
        let mut s = Simplex::new(&model);
        assert_eq!(s.solve(100), LpStatus::Optimal);
        assert!((s.objective() + 7.5).abs() < 1e-9);
        s.set_bounds(x, 0.0, 2.0);
        s.refresh();
        assert_eq!(s.solve(100), LpStatus::Optimal);
        // x = 2, y = 1
        assert!((s.objective() + 7.0).abs() < 1e-9);
    }
}
