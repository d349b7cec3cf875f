//! Best-bound branch-and-bound with plunging.
//!
//! After a node is branched, the child on the rounding side is solved at once
//! and the sibling goes to the queue; when a plunge ends the open node with
//! the smallest bound is resumed. Every LP is warm-started from whatever
//! basis the simplex holds, with the composite phase one absorbing the bound
//! changes.
//!
//! Branching keeps general integers ahead of binaries and, within a kind,
//! scores fractional variables by pseudocosts. Once an incumbent exists,
//! reduced costs tighten integral bounds before each branching.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::rc::Rc;
use std::time::Instant;

use super::program::{Integrality, MixedIntegerProgram};
use super::simplex::{LpModel, LpStatus, Simplex};
use super::{lp_iteration_cap, MilpError, MilpSolution, SolveOptions, SolveStatus};

/// Violation allowed in an accepted incumbent.
const FEASIBILITY_TOL: f64 = 1e-6;
const ABSOLUTE_GAP: f64 = 1e-9;
/// Reduced costs below this are not trusted for bound tightening.
const REDUCED_COST_TOL: f64 = 1e-7;

/// A bound change and the chain of changes above it.
struct Change {
    var: usize,
    lower: f64,
    upper: f64,
    parent: Option<Rc<Change>>,
}

struct Node {
    bound: f64,
    seq: u64,
    changes: Option<Rc<Change>>,
    /// The branching that created this node: variable, direction and
    /// distance moved.
    origin: Option<(usize, bool, f64)>,
}

/// Observed objective gain per unit of bound movement, per direction.
#[derive(Clone, Copy, Default)]
struct Pseudocost {
    sum: [f64; 2],
    count: [u32; 2],
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Node {}
impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Node {
    // BinaryHeap is a max-heap: the smallest bound, then the newest node, wins.
    fn cmp(&self, other: &Self) -> Ordering {
        other.bound.total_cmp(&self.bound).then(self.seq.cmp(&other.seq))
    }
}

struct Incumbent {
    values: Vec<f64>,
    objective: f64,
}

struct Search<'p> {
    program: &'p MixedIntegerProgram,
    options: &'p SolveOptions,
    /// Integral variables in branching priority order: general integers,
    /// then binaries, each by index.
    integral: Vec<usize>,
    root_bounds: Vec<(f64, f64)>,
    applied: Vec<(f64, f64)>,
    stamp: Vec<u64>,
    stamp_counter: u64,
    incumbent: Option<Incumbent>,
    /// Smallest bound among subtrees discarded without being fully explored.
    discarded_bound: f64,
    lp_cap: usize,
    pseudocosts: Vec<Pseudocost>,
}

/// Maps a node's LP solution to a candidate integral point.
pub type Rounding<'a> = &'a dyn Fn(&[f64]) -> Option<Vec<f64>>;

/// Optional problem knowledge for [`solve_milp_with`]. Candidates that are
/// not integral and feasible within 1e-6 are ignored.
#[derive(Default, Clone, Copy)]
pub struct SearchAids<'a> {
    /// A known feasible point.
    pub start: Option<&'a [f64]>,
    /// Called on every node relaxation that survives pruning.
    pub rounding: Option<Rounding<'a>>,
    /// A lower bound on the optimum proven by other means. The search stops
    /// once the incumbent is within the gap tolerance of it.
    pub bound: Option<f64>,
}

/// Solves `program` to the relative gap in `options`.
pub fn solve_milp(program: &MixedIntegerProgram, options: &SolveOptions) -> Result<MilpSolution, MilpError> {
    solve_milp_with(program, options, SearchAids::default())
}

/// [`solve_milp`] with a starting incumbent and a rounding heuristic.
pub fn solve_milp_with(program: &MixedIntegerProgram, options: &SolveOptions, aids: SearchAids<'_>) -> Result<MilpSolution, MilpError> {
    program.validate()?;
    options.validate()?;
    let started = Instant::now();
    let model = LpModel::from_program(program);
    let vars = program.variables();

    let mut root_bounds: Vec<(f64, f64)> = vars.iter().map(|v| (v.lower, v.upper)).collect();
    for (j, v) in vars.iter().enumerate() {
        if v.is_integral() {
            let lo = (v.lower - options.integrality_tol).ceil();
            let hi = (v.upper + options.integrality_tol).floor();
            if lo > hi {
                return Ok(MilpSolution::without_values(SolveStatus::Infeasible, 0, 0));
            }
            root_bounds[j] = (lo, hi);
        }
    }
    let mut integral: Vec<usize> = (0..vars.len()).filter(|&j| vars[j].integrality == Integrality::Integer).collect();
    integral.extend((0..vars.len()).filter(|&j| vars[j].integrality == Integrality::Binary));

    let mut search = Search {
        program,
        options,
        integral,
        applied: root_bounds.clone(),
        root_bounds,
        stamp: vec![0; vars.len()],
        stamp_counter: 0,
        incumbent: None,
        discarded_bound: f64::INFINITY,
        lp_cap: lp_iteration_cap(&model),
        pseudocosts: vec![Pseudocost::default(); vars.len()],
    };
    if let Some(h) = aids.start {
        search.offer_candidate(h);
    }

    let mut lp = Simplex::new(&model);
    for (j, &(lo, hi)) in search.applied.iter().enumerate() {
        lp.set_bounds(j, lo, hi);
    }
    lp.refresh();

    let mut heap = BinaryHeap::new();
    let mut seq = 0u64;
    let mut nodes = 0u64;
    let mut next = Some(Node {
        bound: f64::NEG_INFINITY,
        seq,
        changes: None,
        origin: None,
    });
    let mut limit_bound = None;

    let outside_bound = aids.bound.unwrap_or(f64::NEG_INFINITY);
    loop {
        if search.prunable(outside_bound) {
            break;
        }
        let node = match next.take() {
            Some(n) => n,
            None => match heap.pop() {
                Some(n) => n,
                None => break,
            },
        };
        if search.prunable(node.bound) {
            search.discarded_bound = search.discarded_bound.min(node.bound);
            continue;
        }
        if nodes >= options.node_limit || started.elapsed().as_secs_f64() >= options.time_limit_s {
            limit_bound = Some(node.bound);
            break;
        }
        nodes += 1;

        search.apply(&mut lp, &node.changes);
        let status = search.solve_lp(&mut lp);
        match status {
            LpStatus::Optimal => {}
            LpStatus::Infeasible => continue,
            LpStatus::Unbounded => {
                if nodes == 1 {
                    return Ok(MilpSolution::without_values(SolveStatus::Unbounded, nodes, lp.iterations as u64));
                }
                search.discarded_bound = f64::NEG_INFINITY;
                continue;
            }
            LpStatus::IterationLimit => {
                search.discarded_bound = search.discarded_bound.min(node.bound);
                continue;
            }
        }
        if let Some((j, up, dist)) = node.origin {
            let pc = &mut search.pseudocosts[j];
            pc.sum[up as usize] += (lp.objective() - node.bound).max(0.0) / dist;
            pc.count[up as usize] += 1;
        }
        let bound = lp.objective().max(node.bound);
        if search.prunable(bound) {
            search.discarded_bound = search.discarded_bound.min(bound);
            continue;
        }
        let values = lp.values().to_vec();
        if let Some(round) = aids.rounding {
            if let Some(candidate) = round(&values) {
                search.offer_candidate(&candidate);
                if search.prunable(bound) {
                    search.discarded_bound = search.discarded_bound.min(bound);
                    continue;
                }
            }
        }
        match search.branching_variable(&values) {
            None => {
                search.try_incumbent(&mut lp, &node.changes);
            }
            Some(j) => {
                let changes = search.fix_by_reduced_cost(&mut lp, node.changes);
                let x = values[j];
                let (lo, hi) = search.applied[j];
                let down = Rc::new(Change {
                    var: j,
                    lower: lo,
                    upper: x.floor(),
                    parent: changes.clone(),
                });
                let up = Rc::new(Change {
                    var: j,
                    lower: x.ceil(),
                    upper: hi,
                    parent: changes,
                });
                let (fd, fu) = (x - x.floor(), x.ceil() - x);
                let down = (down, Some((j, false, fd)));
                let up = (up, Some((j, true, fu)));
                let (first, second) = if fd >= 0.5 { (up, down) } else { (down, up) };
                seq += 1;
                heap.push(Node {
                    bound,
                    seq,
                    changes: Some(second.0),
                    origin: second.1,
                });
                seq += 1;
                next = Some(Node {
                    bound,
                    seq,
                    changes: Some(first.0),
                    origin: first.1,
                });
            }
        }
    }

    let iterations = lp.iterations as u64;
    let open_bound = heap.iter().map(|n| n.bound).fold(limit_bound.unwrap_or(f64::INFINITY), f64::min);
    let lower = search.discarded_bound.min(open_bound).max(outside_bound);
    let hit_limit = limit_bound.is_some();
    Ok(match search.incumbent {
        Some(inc) => {
            let bound = lower.min(inc.objective);
            let gap = relative_gap(inc.objective, bound);
            MilpSolution {
                values: inc.values,
                objective_value: inc.objective,
                status: if hit_limit { SolveStatus::FeasibleGap } else { SolveStatus::Optimal },
                gap,
                bound,
                nodes_explored: nodes,
                lp_iterations: iterations,
            }
        }
        None => {
            let status = if hit_limit || search.discarded_bound < f64::INFINITY {
                SolveStatus::LimitHit
            } else {
                SolveStatus::Infeasible
            };
            let mut s = MilpSolution::without_values(status, nodes, iterations);
            if status == SolveStatus::LimitHit {
                s.bound = lower;
            }
            s
        }
    })
}

fn relative_gap(objective: f64, bound: f64) -> f64 {
    let diff = (objective - bound).max(0.0);
    if diff <= ABSOLUTE_GAP {
        0.0
    } else {
        diff / objective.abs().max(1e-12)
    }
}

impl Search<'_> {
    fn prunable(&self, bound: f64) -> bool {
        match &self.incumbent {
            None => false,
            Some(inc) => {
                let slack = (self.options.relative_gap_tol * inc.objective.abs()).max(ABSOLUTE_GAP);
                bound >= inc.objective - slack
            }
        }
    }

    fn solve_lp(&self, lp: &mut Simplex<'_>) -> LpStatus {
        let status = lp.solve(self.lp_cap);
        if status == LpStatus::IterationLimit {
            lp.polish(self.lp_cap)
        } else {
            status
        }
    }

    /// Sets the integral bounds of the node described by `changes`.
    fn apply(&mut self, lp: &mut Simplex<'_>, changes: &Option<Rc<Change>>) {
        self.stamp_counter += 1;
        let stamp = self.stamp_counter;
        let mut desired: Vec<(usize, f64, f64)> = Vec::new();
        let mut cur = changes.as_deref();
        // The deepest change to a variable is the tightest.
        while let Some(c) = cur {
            if self.stamp[c.var] != stamp {
                self.stamp[c.var] = stamp;
                desired.push((c.var, c.lower, c.upper));
            }
            cur = c.parent.as_deref();
        }
        let mut changed = false;
        for k in 0..self.integral.len() {
            let j = self.integral[k];
            if self.stamp[j] != stamp {
                let (lo, hi) = self.root_bounds[j];
                changed |= self.set(lp, j, lo, hi);
            }
        }
        for (j, lo, hi) in desired {
            changed |= self.set(lp, j, lo, hi);
        }
        if changed {
            lp.refresh();
        }
    }

    /// Tightens integral variables whose reduced cost shows that moving them
    /// further from their bound would push the relaxation past the cutoff.
    /// The tightenings are appended to `changes` so every descendant keeps
    /// them.
    fn fix_by_reduced_cost(&mut self, lp: &mut Simplex<'_>, mut changes: Option<Rc<Change>>) -> Option<Rc<Change>> {
        let Some(inc) = &self.incumbent else {
            return changes;
        };
        let slack = (self.options.relative_gap_tol * inc.objective.abs()).max(ABSOLUTE_GAP);
        let room = inc.objective - slack - lp.objective();
        if !(room > 0.0) {
            return changes;
        }
        let d = lp.structural_reduced_costs();
        for k in 0..self.integral.len() {
            let j = self.integral[k];
            let (lo, hi) = self.applied[j];
            if lo == hi {
                continue;
            }
            let tightened = match lp.at_upper(j) {
                Some(false) if d[j] > REDUCED_COST_TOL => {
                    let reach = (room / d[j]).floor();
                    (lo + reach < hi).then_some((lo, lo + reach))
                }
                Some(true) if d[j] < -REDUCED_COST_TOL => {
                    let reach = (room / -d[j]).floor();
                    (hi - reach > lo).then_some((hi - reach, hi))
                }
                _ => None,
            };
            if let Some((lower, upper)) = tightened {
                self.set(lp, j, lower, upper);
                changes = Some(Rc::new(Change {
                    var: j,
                    lower,
                    upper,
                    parent: changes,
                }));
            }
        }
        changes
    }

    fn set(&mut self, lp: &mut Simplex<'_>, j: usize, lo: f64, hi: f64) -> bool {
        if self.applied[j] == (lo, hi) {
            return false;
        }
        self.applied[j] = (lo, hi);
        lp.set_bounds(j, lo, hi);
        true
    }

    /// Picks the fractional variable with the largest product of estimated
    /// down and up gains, from the first kind in priority order that has a
    /// fractional variable. Unobserved directions use the mean rate.
    fn branching_variable(&self, values: &[f64]) -> Option<usize> {
        let tol = self.options.integrality_tol;
        let vars = self.program.variables();
        let mut mean = [1.0; 2];
        for dir in 0..2 {
            let (s, c) = self.pseudocosts.iter().fold((0.0, 0u32), |(s, c), p| if p.count[dir] > 0 { (s + p.sum[dir] / p.count[dir] as f64, c + 1) } else { (s, c) });
            if c > 0 {
                mean[dir] = s / c as f64;
            }
        }
        let mut best: Option<(usize, f64, Integrality)> = None;
        for &j in &self.integral {
            let x = values[j];
            let (fd, fu) = (x - x.floor(), x.ceil() - x);
            if fd.min(fu) <= tol {
                continue;
            }
            let kind = vars[j].integrality;
            if best.is_some_and(|(_, _, k)| k != kind) {
                break;
            }
            let pc = &self.pseudocosts[j];
            let rate = |dir: usize| if pc.count[dir] > 0 { pc.sum[dir] / pc.count[dir] as f64 } else { mean[dir] };
            let score = (rate(0) * fd).max(1e-6) * (rate(1) * fu).max(1e-6);
            if best.is_none_or(|(_, s, _)| score > s) {
                best = Some((j, score, kind));
            }
        }
        best.map(|(j, _, _)| j)
    }

    /// The LP solution is integral: fix the integral variables at their
    /// rounded values, re-solve for the continuous ones and keep the result
    /// if it is strictly better and feasible.
    fn try_incumbent(&mut self, lp: &mut Simplex<'_>, changes: &Option<Rc<Change>>) {
        let rounded: Vec<(usize, f64)> = self.integral.iter().map(|&j| (j, lp.values()[j].round())).collect();
        self.fix_and_solve(lp, &rounded, changes);
    }

    fn fix_and_solve(&mut self, lp: &mut Simplex<'_>, rounded: &[(usize, f64)], changes: &Option<Rc<Change>>) {
        for &(j, v) in rounded {
            self.set(lp, j, v, v);
        }
        lp.refresh();
        let status = self.solve_lp(lp);
        if status == LpStatus::Optimal {
            let mut values = lp.values().to_vec();
            for &(j, v) in rounded {
                values[j] = v;
            }
            self.offer(values);
        }
        // Restore the node bounds for the next solve.
        self.apply(lp, changes);
    }

    fn offer_candidate(&mut self, hint: &[f64]) {
        if hint.len() != self.program.variables().len() {
            return;
        }
        let tol = self.options.integrality_tol;
        let mut values = hint.to_vec();
        for &j in &self.integral {
            if (values[j] - values[j].round()).abs() > tol {
                return;
            }
            values[j] = values[j].round();
        }
        self.offer(values);
    }

    fn offer(&mut self, values: Vec<f64>) {
        if !(self.program.max_violation(&values) <= FEASIBILITY_TOL) {
            return;
        }
        let objective = self.program.objective_value(&values);
        if self.incumbent.as_ref().is_none_or(|inc| objective < inc.objective) {
            self.incumbent = Some(Incumbent { values, objective });
        }
    }
}
