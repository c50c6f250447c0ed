//! LP and mixed-binary solve entry points.
//!
//! Branch and bound is best-first: the open node with the smallest parent
//! bound is processed next, ties going to the deeper node and then to the
//! lower node id. Each node re-solves the relaxation warm-started from its
//! parent's basis. A fractional dive at the root and an optional model hint
//! supply early incumbents.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::sync::Arc;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::model::{MilpModel, VarKind};
use crate::simplex::{DualityAudit, LpData, LpSolver, LpStatus, VarStat};

pub const INTEGRALITY_TOL: f64 = 1e-6;

/// Nodes between dives from the current node.
const DIVE_EVERY: u64 = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    Unbounded,
    GapLimit,
    TimeLimit,
    NodeLimit,
    IterationLimit,
}

impl SolveStatus {
    pub fn has_limit(self) -> bool {
        matches!(
            self,
            SolveStatus::GapLimit
                | SolveStatus::TimeLimit
                | SolveStatus::NodeLimit
                | SolveStatus::IterationLimit
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MilpLimits {
    /// Wall-clock limit per solve; `None` means unlimited.
    pub time_limit: Option<Duration>,
    pub node_limit: u64,
    /// Relative optimality gap at which search stops.
    pub rel_gap: f64,
    /// Absolute optimality gap at which search stops.
    pub abs_gap: f64,
}

impl Default for MilpLimits {
    fn default() -> Self {
        MilpLimits {
            time_limit: Some(Duration::from_secs(300)),
            node_limit: 1_000_000,
            rel_gap: 1e-9,
            abs_gap: 1e-7,
        }
    }
}

impl MilpLimits {
    pub fn with_time_limit(mut self, t: Duration) -> Self {
        self.time_limit = Some(t);
        self
    }

    fn tolerance(&self, incumbent: f64) -> f64 {
        self.abs_gap.max(self.rel_gap * incumbent.abs())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MilpSolution {
    pub status: SolveStatus,
    /// Objective of the returned point, if any.
    pub objective: Option<f64>,
    /// Proven lower bound on the optimum.
    pub best_bound: f64,
    /// 100·(z̄ − z̲)/|z̄| when an incumbent exists.
    pub gap: Option<f64>,
    /// Column values of the returned point (empty when none).
    pub values: Vec<f64>,
    pub nodes: u64,
    pub lp_iterations: u64,
    /// Weak-duality audit of the final LP (LP solves only).
    pub audit: Option<DualityAudit>,
}

impl MilpSolution {
    fn empty(status: SolveStatus, best_bound: f64) -> Self {
        MilpSolution {
            status,
            objective: None,
            best_bound,
            gap: None,
            values: Vec::new(),
            nodes: 0,
            lp_iterations: 0,
            audit: None,
        }
    }

    pub fn is_optimal(&self) -> bool {
        self.status == SolveStatus::Optimal
    }

    pub fn value(&self, model: &MilpModel, name: &str) -> Option<f64> {
        model.var_id(name).and_then(|v| self.values.get(v.0).copied())
    }
}

pub fn gap_percent(upper: f64, lower: f64) -> f64 {
    if upper == lower {
        0.0
    } else if upper == 0.0 {
        f64::INFINITY
    } else {
        100.0 * (upper - lower) / upper.abs()
    }
}

fn lp_iteration_cap(d: &LpData) -> u64 {
    50 * (d.n + d.m) as u64 + 10_000
}

fn map_lp_status(s: LpStatus) -> SolveStatus {
    match s {
        LpStatus::Optimal => SolveStatus::Optimal,
        LpStatus::Infeasible => SolveStatus::Infeasible,
        LpStatus::Unbounded => SolveStatus::Unbounded,
        LpStatus::IterationLimit => SolveStatus::IterationLimit,
        LpStatus::TimeLimit => SolveStatus::TimeLimit,
    }
}

/// Solves the continuous relaxation (binaries relaxed to [0, 1]).
pub fn solve_lp(model: &MilpModel) -> MilpSolution {
    solve_lp_limited(model, None)
}

pub fn solve_lp_limited(model: &MilpModel, time_limit: Option<Duration>) -> MilpSolution {
    let data = LpData::from_model(model);
    let mut lp = LpSolver::new(&data);
    let deadline = time_limit.map(|t| Instant::now() + t);
    let status = lp.solve(deadline, lp_iteration_cap(&data));
    let mut sol = MilpSolution::empty(map_lp_status(status), f64::NEG_INFINITY);
    sol.lp_iterations = lp.iterations;
    match status {
        LpStatus::Optimal => {
            let (_, audit) = lp.audit();
            let obj = lp.objective();
            sol.objective = Some(obj);
            sol.best_bound = obj;
            sol.gap = Some(0.0);
            sol.values = lp.values().to_vec();
            sol.audit = Some(audit);
        }
        LpStatus::Infeasible => sol.best_bound = f64::INFINITY,
        _ => {}
    }
    sol
}

/// Chain of binary fixings from the root to a node.
struct Fixing {
    var: usize,
    value: f64,
    parent: Option<Arc<Fixing>>,
}

struct Node {
    id: u64,
    depth: u32,
    bound: f64,
    fixing: Option<Arc<Fixing>>,
    basis: Arc<Vec<VarStat>>,
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
    /// Greater means "process first" for the max-heap.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .bound
            .total_cmp(&self.bound)
            .then(self.depth.cmp(&other.depth))
            .then(other.id.cmp(&self.id))
    }
}

struct Search<'a> {
    model: &'a MilpModel,
    limits: &'a MilpLimits,
    binaries: Vec<usize>,
    root_lb: Vec<f64>,
    root_ub: Vec<f64>,
    deadline: Option<Instant>,
    incumbent: Option<(f64, Vec<f64>)>,
    iter_cap: u64,
}

impl<'a> Search<'a> {
    fn cutoff(&self) -> f64 {
        match &self.incumbent {
            Some((z, _)) => z - self.limits.tolerance(*z),
            None => f64::INFINITY,
        }
    }

    fn reset_bounds(&self, lp: &mut LpSolver) {
        for &j in &self.binaries {
            lp.lb[j] = self.root_lb[j];
            lp.ub[j] = self.root_ub[j];
        }
    }

    fn apply(&self, lp: &mut LpSolver, fixing: &Option<Arc<Fixing>>) {
        self.reset_bounds(lp);
        let mut cur = fixing.as_ref();
        while let Some(f) = cur {
            lp.lb[f.var] = f.value;
            lp.ub[f.var] = f.value;
            cur = f.parent.as_ref();
        }
    }

    /// Most fractional binary, lowest index on ties.
    fn branching_var(&self, x: &[f64]) -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        for &j in &self.binaries {
            let frac = (x[j] - x[j].floor()).min(x[j].ceil() - x[j]);
            if frac > INTEGRALITY_TOL && best.is_none_or(|(_, b)| frac > b) {
                best = Some((j, frac));
            }
        }
        best.map(|(j, _)| j)
    }

    /// Re-solves with every binary pinned to its rounded value so that the
    /// continuous part is consistent, then offers the point as incumbent.
    fn try_incumbent(&mut self, lp: &mut LpSolver, x: &[f64]) {
        let saved_lb = lp.lb.clone();
        let saved_ub = lp.ub.clone();
        let basis = lp.snapshot();
        for &j in &self.binaries {
            let r = x[j].round();
            lp.lb[j] = r;
            lp.ub[j] = r;
        }
        if lp.solve(self.deadline, self.iter_cap) == LpStatus::Optimal {
            let mut vals = lp.values().to_vec();
            for &j in &self.binaries {
                vals[j] = vals[j].round();
            }
            self.offer(vals);
        }
        lp.lb = saved_lb;
        lp.ub = saved_ub;
        lp.load(&basis);
    }

    fn offer(&mut self, vals: Vec<f64>) {
        if !self.model.check_feasibility(&vals, 1e-6).is_empty() {
            return;
        }
        let z = self.model.objective_value(&vals);
        if self.incumbent.as_ref().is_none_or(|(best, _)| z < *best) {
            self.incumbent = Some((z, vals));
        }
    }

    /// Fixes the least fractional binary to its nearest value until the
    /// relaxation is integral, flipping a fixing once when it turns the LP
    /// infeasible.
    fn dive(&mut self, lp: &mut LpSolver) {
        let basis = lp.snapshot();
        let saved_lb = lp.lb.clone();
        let saved_ub = lp.ub.clone();
        let mut last: Option<(usize, f64)> = None;
        for _ in 0..=2 * self.binaries.len() {
            match lp.solve(self.deadline, self.iter_cap) {
                LpStatus::Optimal => {}
                LpStatus::Infeasible => match last.take() {
                    Some((j, r)) => {
                        lp.lb[j] = 1.0 - r;
                        lp.ub[j] = 1.0 - r;
                        continue;
                    }
                    None => break,
                },
                _ => break,
            }
            if lp.objective() >= self.cutoff() {
                break;
            }
            let x = lp.values().to_vec();
            let mut pick: Option<(usize, f64)> = None;
            for &j in &self.binaries {
                let frac = (x[j] - x[j].round()).abs();
                if frac > INTEGRALITY_TOL && pick.is_none_or(|(_, b)| frac < b) {
                    pick = Some((j, frac));
                }
            }
            match pick {
                None => {
                    self.try_incumbent(lp, &x);
                    break;
                }
                Some((j, _)) => {
                    let r = x[j].round();
                    lp.lb[j] = r;
                    lp.ub[j] = r;
                    last = Some((j, r));
                }
            }
        }
        lp.lb = saved_lb;
        lp.ub = saved_ub;
        lp.load(&basis);
    }
}

/// Solves a mixed-binary model by best-first branch and bound.
pub fn solve_milp(model: &MilpModel, limits: &MilpLimits) -> MilpSolution {
    let start = Instant::now();
    let deadline = limits.time_limit.map(|t| start + t);
    let data = LpData::from_model(model);
    let binaries: Vec<usize> = model
        .vars()
        .iter()
        .enumerate()
        .filter(|(_, v)| v.kind == VarKind::Binary)
        .map(|(j, _)| j)
        .collect();
    let mut search = Search {
        model,
        limits,
        binaries,
        root_lb: data.lb.clone(),
        root_ub: data.ub.clone(),
        deadline,
        incumbent: None,
        iter_cap: lp_iteration_cap(&data),
    };
    if let Some(h) = model.hint() {
        if h.len() == model.num_vars() {
            search.offer(h.to_vec());
        }
    }

    let finish = |search: &Search, status: SolveStatus, bound: f64, nodes: u64, iters: u64| {
        let mut sol = MilpSolution::empty(status, bound);
        sol.nodes = nodes;
        sol.lp_iterations = iters;
        if let Some((z, vals)) = &search.incumbent {
            let bound = bound.min(*z);
            sol.best_bound = bound;
            sol.objective = Some(*z);
            sol.values = vals.clone();
            sol.gap = Some(gap_percent(*z, bound));
        }
        sol
    };

    if limits.time_limit == Some(Duration::ZERO) {
        return finish(&search, SolveStatus::TimeLimit, f64::NEG_INFINITY, 0, 0);
    }

    let mut lp = LpSolver::new(&data);
    let root = lp.solve(deadline, search.iter_cap);
    match root {
        LpStatus::Optimal => {}
        LpStatus::Infeasible => {
            return finish(&search, SolveStatus::Infeasible, f64::INFINITY, 1, lp.iterations)
        }
        other => {
            return finish(&search, map_lp_status(other), f64::NEG_INFINITY, 1, lp.iterations)
        }
    }
    let root_bound = lp.objective();
    let root_basis = Arc::new(lp.snapshot());

    let x = lp.values().to_vec();
    if search.branching_var(&x).is_none() {
        search.try_incumbent(&mut lp, &x);
    } else {
        search.dive(&mut lp);
    }

    let mut heap = BinaryHeap::new();
    heap.push(Node { id: 0, depth: 0, bound: root_bound, fixing: None, basis: root_basis });
    let mut next_id = 1u64;
    let mut nodes = 0u64;
    let mut best_bound = root_bound;
    let mut pruned_min = f64::INFINITY;

    while let Some(node) = heap.pop() {
        if node.bound >= search.cutoff() {
            pruned_min = pruned_min.min(node.bound);
            for rest in heap.drain() {
                pruned_min = pruned_min.min(rest.bound);
            }
            break;
        }
        best_bound = best_bound.max(node.bound);
        if deadline.is_some_and(|d| Instant::now() >= d) {
            return finish(&search, SolveStatus::TimeLimit, best_bound, nodes, lp.iterations);
        }
        if nodes >= limits.node_limit {
            return finish(&search, SolveStatus::NodeLimit, best_bound, nodes, lp.iterations);
        }
        nodes += 1;

        search.apply(&mut lp, &node.fixing);
        lp.load(&node.basis);
        match lp.solve(deadline, search.iter_cap) {
            LpStatus::Optimal => {}
            LpStatus::Infeasible | LpStatus::Unbounded => continue,
            LpStatus::TimeLimit => {
                return finish(&search, SolveStatus::TimeLimit, best_bound, nodes, lp.iterations)
            }
            LpStatus::IterationLimit => {
                return finish(&search, SolveStatus::IterationLimit, best_bound, nodes, lp.iterations)
            }
        }
        let z = lp.objective();
        if z >= search.cutoff() {
            pruned_min = pruned_min.min(z);
            continue;
        }
        let x = lp.values().to_vec();
        match search.branching_var(&x) {
            None => search.try_incumbent(&mut lp, &x),
            Some(j) => {
                if nodes.is_multiple_of(DIVE_EVERY) {
                    search.dive(&mut lp);
                }
                let basis = Arc::new(lp.snapshot());
                for value in [0.0, 1.0] {
                    heap.push(Node {
                        id: next_id,
                        depth: node.depth + 1,
                        bound: z,
                        fixing: Some(Arc::new(Fixing { var: j, value, parent: node.fixing.clone() })),
                        basis: basis.clone(),
                    });
                    next_id += 1;
                }
            }
        }
    }

    match &search.incumbent {
        None => finish(&search, SolveStatus::Infeasible, f64::INFINITY, nodes, lp.iterations),
        Some((z, _)) => {
            let z = *z;
            let bound = pruned_min.min(z).max(best_bound.min(z));
            let proven = z - bound <= MilpLimits::default().tolerance(z).max(1e-9);
            let status = if proven { SolveStatus::Optimal } else { SolveStatus::GapLimit };
            finish(&search, status, bound, nodes, lp.iterations)
        }
    }
}
