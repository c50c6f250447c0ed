//! Bounded-variable revised primal simplex.
//!
//! Rows become equalities `A x - s = 0` with one logical column `s_r` per row
//! whose bounds carry the row sense. Any basis can be a starting point: while
//! some basic variable violates its bounds the method minimizes the sum of
//! infeasibilities (composite phase one), then switches to the true costs.
//! Ratio tests use the Harris two-pass rule; after a run of degenerate pivots
//! the method falls back to Bland's smallest-index rule until it makes progress.

use std::time::Instant;

use crate::lu::Factor;
use crate::model::{MilpModel, Sense};

pub const FEAS_TOL: f64 = 1e-7;
const DUAL_TOL: f64 = 1e-9;
const PIVOT_TOL: f64 = 1e-9;
const REFACTOR_EVERY: usize = 100;
const DEGENERATE_TRIP: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub(crate) enum VarStat {
    Basic,
    Lower,
    Upper,
    Free,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
    IterationLimit,
    TimeLimit,
}

/// Column-compressed standard form of a model's continuous relaxation.
#[derive(Debug, Clone)]
pub(crate) struct LpData {
    pub n: usize,
    pub m: usize,
    col_start: Vec<usize>,
    row_idx: Vec<usize>,
    val: Vec<f64>,
    pub cost: Vec<f64>,
    /// Bounds of structural columns followed by row-activity bounds.
    pub lb: Vec<f64>,
    pub ub: Vec<f64>,
    weight: Vec<f64>,
}

impl LpData {
    pub fn from_model(model: &MilpModel) -> Self {
        let n = model.num_vars();
        let mut rows: Vec<(Vec<(usize, f64)>, f64, f64)> = model
            .rows()
            .iter()
            .map(|r| {
                let (lo, hi) = match r.sense {
                    Sense::Le => (f64::NEG_INFINITY, r.rhs),
                    Sense::Ge => (r.rhs, f64::INFINITY),
                    Sense::Eq => (r.rhs, r.rhs),
                };
                (r.coeffs.iter().map(|&(v, a)| (v.0, a)).collect(), lo, hi)
            })
            .collect();
        for s in model.sos1_sets() {
            rows.push((s.members.iter().map(|v| (v.0, 1.0)).collect(), f64::NEG_INFINITY, 1.0));
        }
        let m = rows.len();
        let mut counts = vec![0usize; n + 1];
        for (coeffs, _, _) in &rows {
            for &(j, _) in coeffs {
                counts[j + 1] += 1;
            }
        }
        for j in 0..n {
            counts[j + 1] += counts[j];
        }
        let col_start = counts.clone();
        let nnz = col_start[n];
        let mut row_idx = vec![0usize; nnz];
        let mut val = vec![0.0; nnz];
        let mut fill = counts;
        for (r, (coeffs, _, _)) in rows.iter().enumerate() {
            for &(j, a) in coeffs {
                row_idx[fill[j]] = r;
                val[fill[j]] = a;
                fill[j] += 1;
            }
        }
        let mut lb: Vec<f64> = model.vars().iter().map(|v| v.lb).collect();
        let mut ub: Vec<f64> = model.vars().iter().map(|v| v.ub).collect();
        for (_, lo, hi) in &rows {
            lb.push(*lo);
            ub.push(*hi);
        }
        let mut weight = Vec::with_capacity(n + m);
        for j in 0..n {
            let s: f64 = val[col_start[j]..col_start[j + 1]].iter().map(|a| a * a).sum();
            weight.push(1.0 + s);
        }
        weight.extend(std::iter::repeat_n(2.0, m));
        LpData { n, m, col_start, row_idx, val, cost: model.objective().to_vec(), lb, ub, weight }
    }

    fn column(&self, j: usize) -> (&[usize], &[f64], Option<(usize, f64)>) {
        if j < self.n {
            let r = self.col_start[j]..self.col_start[j + 1];
            (&self.row_idx[r.clone()], &self.val[r], None)
        } else {
            (&[], &[], Some((j - self.n, -1.0)))
        }
    }

    fn dot(&self, j: usize, y: &[f64]) -> f64 {
        if j < self.n {
            let mut s = 0.0;
            for t in self.col_start[j]..self.col_start[j + 1] {
                s += self.val[t] * y[self.row_idx[t]];
            }
            s
        } else {
            -y[j - self.n]
        }
    }
}

/// Result of the duality audit run after every optimal LP solve.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct DualityAudit {
    pub primal: f64,
    pub dual: f64,
    /// |primal − dual| / max(1, |primal|).
    pub relative_gap: f64,
    /// Largest reduced-cost sign violation over nonbasic columns.
    pub dual_infeasibility: f64,
}

impl DualityAudit {
    pub fn passed(&self) -> bool {
        self.relative_gap <= 1e-6 && self.dual_infeasibility <= 1e-6
    }
}

/// Compact basis description reusable as a warm start.
pub(crate) type BasisSnapshot = Vec<VarStat>;

pub(crate) struct LpSolver<'a> {
    d: &'a LpData,
    pub lb: Vec<f64>,
    pub ub: Vec<f64>,
    stat: Vec<VarStat>,
    basis: Vec<usize>,
    x: Vec<f64>,
    factor: Factor,
    y: Vec<f64>,
    cb: Vec<f64>,
    alpha: Vec<f64>,
    work: Vec<f64>,
    scratch: Vec<f64>,
    pub iterations: u64,
}

impl<'a> LpSolver<'a> {
    pub fn new(d: &'a LpData) -> Self {
        let total = d.n + d.m;
        let mut s = LpSolver {
            d,
            lb: d.lb.clone(),
            ub: d.ub.clone(),
            stat: vec![VarStat::Lower; total],
            basis: Vec::new(),
            x: vec![0.0; total],
            factor: Factor::default(),
            y: vec![0.0; d.m],
            cb: vec![0.0; d.m],
            alpha: vec![0.0; d.m],
            work: vec![0.0; d.m],
            scratch: Vec::new(),
            iterations: 0,
        };
        s.slack_basis();
        s
    }

    fn resting_stat(&self, j: usize) -> VarStat {
        if self.lb[j].is_finite() {
            VarStat::Lower
        } else if self.ub[j].is_finite() {
            VarStat::Upper
        } else {
            VarStat::Free
        }
    }

    fn resting_value(&self, j: usize) -> f64 {
        match self.stat[j] {
            VarStat::Lower => self.lb[j],
            VarStat::Upper => self.ub[j],
            _ => 0.0,
        }
    }

    pub fn slack_basis(&mut self) {
        let n = self.d.n;
        self.basis = (n..n + self.d.m).collect();
        for j in 0..n {
            self.stat[j] = self.resting_stat(j);
        }
        for j in n..n + self.d.m {
            self.stat[j] = VarStat::Basic;
        }
    }

    pub fn snapshot(&self) -> BasisSnapshot {
        self.stat.clone()
    }

    /// Installs a previously saved basis, repairing statuses that no longer
    /// match the current bounds. Falls back to the slack basis on a size mismatch.
    pub fn load(&mut self, snap: &[VarStat]) {
        let basics = snap.iter().filter(|s| **s == VarStat::Basic).count();
        if snap.len() != self.stat.len() || basics != self.d.m {
            self.slack_basis();
            return;
        }
        self.stat.copy_from_slice(snap);
        self.basis.clear();
        for j in 0..self.stat.len() {
            match self.stat[j] {
                VarStat::Basic => self.basis.push(j),
                VarStat::Lower if !self.lb[j].is_finite() => self.stat[j] = self.resting_stat(j),
                VarStat::Upper if !self.ub[j].is_finite() => self.stat[j] = self.resting_stat(j),
                VarStat::Free if self.lb[j].is_finite() || self.ub[j].is_finite() => {
                    self.stat[j] = self.resting_stat(j)
                }
                _ => {}
            }
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.x[..self.d.n]
    }

    pub fn objective(&self) -> f64 {
        self.d.cost.iter().zip(&self.x).map(|(c, x)| c * x).sum()
    }

    fn reinvert(&mut self) {
        loop {
            let d = self.d;
            let basis = &self.basis;
            match self.factor.factorize(d.m, |p| d.column(basis[p])) {
                Ok(()) => break,
                Err(sing) => {
                    for (&p, &r) in sing.positions.iter().zip(&sing.rows) {
                        let old = self.basis[p];
                        self.stat[old] = self.resting_stat(old);
                        let slack = self.d.n + r;
                        self.basis[p] = slack;
                        self.stat[slack] = VarStat::Basic;
                    }
                }
            }
        }
        self.compute_basics();
    }

    fn compute_basics(&mut self) {
        self.work.iter_mut().for_each(|w| *w = 0.0);
        for j in 0..self.d.n + self.d.m {
            if self.stat[j] == VarStat::Basic {
                continue;
            }
            let v = self.resting_value(j);
            self.x[j] = v;
            if v == 0.0 {
                continue;
            }
            let (idx, val, extra) = self.d.column(j);
            for (&r, &a) in idx.iter().zip(val) {
                self.work[r] -= a * v;
            }
            if let Some((r, a)) = extra {
                self.work[r] -= a * v;
            }
        }
        self.factor.ftran(&mut self.work, &mut self.alpha);
        for (p, &j) in self.basis.iter().enumerate() {
            self.x[j] = self.alpha[p];
        }
    }

    fn phase_cost(&self, j: usize, phase_two: bool) -> f64 {
        if phase_two && j < self.d.n {
            self.d.cost[j]
        } else {
            0.0
        }
    }

    /// Runs the simplex method from the current basis.
    pub fn solve(&mut self, deadline: Option<Instant>, max_iter: u64) -> LpStatus {
        self.reinvert();
        let total = self.d.n + self.d.m;
        let m = self.d.m;
        let mut degenerate = 0usize;
        let mut bland = false;
        let mut local_iter = 0u64;
        loop {
            if self.factor.num_etas() >= REFACTOR_EVERY {
                self.reinvert();
            }
            if local_iter >= max_iter {
                return LpStatus::IterationLimit;
            }
            if local_iter.is_multiple_of(64) {
                if let Some(dl) = deadline {
                    if Instant::now() >= dl {
                        return LpStatus::TimeLimit;
                    }
                }
            }

            let mut infeasible = false;
            for p in 0..m {
                let j = self.basis[p];
                if self.x[j] < self.lb[j] - FEAS_TOL || self.x[j] > self.ub[j] + FEAS_TOL {
                    infeasible = true;
                    break;
                }
            }
            let phase_two = !infeasible;
            for p in 0..m {
                let j = self.basis[p];
                self.cb[p] = if phase_two {
                    self.phase_cost(j, true)
                } else if self.x[j] < self.lb[j] - FEAS_TOL {
                    -1.0
                } else if self.x[j] > self.ub[j] + FEAS_TOL {
                    1.0
                } else {
                    0.0
                };
            }
            self.factor.btran(&mut self.cb, &mut self.y, &mut self.scratch);

            let mut entering: Option<(usize, f64)> = None;
            let mut best_score = 0.0;
            for j in 0..total {
                let st = self.stat[j];
                if st == VarStat::Basic || self.lb[j] == self.ub[j] {
                    continue;
                }
                let dj = self.phase_cost(j, phase_two) - self.d.dot(j, &self.y);
                let dir = match st {
                    VarStat::Lower if dj < -DUAL_TOL => 1.0,
                    VarStat::Upper if dj > DUAL_TOL => -1.0,
                    VarStat::Free if dj.abs() > DUAL_TOL => -dj.signum(),
                    _ => continue,
                };
                if bland {
                    entering = Some((j, dir));
                    break;
                }
                let score = dj * dj / self.d.weight[j];
                if score > best_score {
                    best_score = score;
                    entering = Some((j, dir));
                }
            }

            let Some((q, dir)) = entering else {
                return if infeasible { LpStatus::Infeasible } else { LpStatus::Optimal };
            };

            self.work.iter_mut().for_each(|w| *w = 0.0);
            let (idx, val, extra) = self.d.column(q);
            for (&r, &a) in idx.iter().zip(val) {
                self.work[r] = a;
            }
            if let Some((r, a)) = extra {
                self.work[r] = a;
            }
            self.factor.ftran(&mut self.work, &mut self.alpha);

            let step = self.ratio_test(dir, bland);
            let flip = self.ub[q] - self.lb[q];
            let (t, leave) = match step {
                None if flip.is_finite() => (flip, None),
                None => return LpStatus::Unbounded,
                Some((t, p, at)) => {
                    if flip.is_finite() && flip <= t {
                        (flip, None)
                    } else {
                        (t, Some((p, at)))
                    }
                }
            };

            self.iterations += 1;
            local_iter += 1;
            if t > 0.0 {
                self.x[q] += dir * t;
                for p in 0..m {
                    let a = self.alpha[p];
                    if a != 0.0 {
                        self.x[self.basis[p]] -= dir * t * a;
                    }
                }
            }
            match leave {
                None => {
                    self.stat[q] = if dir > 0.0 { VarStat::Upper } else { VarStat::Lower };
                    self.x[q] = if dir > 0.0 { self.ub[q] } else { self.lb[q] };
                }
                Some((p, at_upper)) => {
                    let j = self.basis[p];
                    if at_upper {
                        self.stat[j] = VarStat::Upper;
                        self.x[j] = self.ub[j];
                    } else {
                        self.stat[j] = VarStat::Lower;
                        self.x[j] = self.lb[j];
                    }
                    self.basis[p] = q;
                    self.stat[q] = VarStat::Basic;
                    self.factor.push_eta(p, &self.alpha);
                }
            }

            if t <= 1e-12 {
                degenerate += 1;
                if degenerate > DEGENERATE_TRIP {
                    bland = true;
                }
            } else {
                degenerate = 0;
                bland = false;
            }
        }
    }

    /// Returns `(step, position, leaves_at_upper)` for the blocking basic variable.
    fn ratio_test(&self, dir: f64, bland: bool) -> Option<(f64, usize, bool)> {
        let m = self.d.m;
        let mut t_relaxed = f64::INFINITY;
        let mut cands: Vec<(usize, f64, bool, f64)> = Vec::new();
        for p in 0..m {
            let a = self.alpha[p];
            if a.abs() <= PIVOT_TOL {
                continue;
            }
            let rate = -dir * a;
            let j = self.basis[p];
            let xv = self.x[j];
            let (lo, hi) = (self.lb[j], self.ub[j]);
            let (target, at_upper) = if rate < 0.0 {
                if xv < lo - FEAS_TOL {
                    continue;
                }
                if xv > hi + FEAS_TOL {
                    (hi, true)
                } else {
                    (lo, false)
                }
            } else {
                if xv > hi + FEAS_TOL {
                    continue;
                }
                if xv < lo - FEAS_TOL {
                    (lo, false)
                } else {
                    (hi, true)
                }
            };
            if !target.is_finite() {
                continue;
            }
            let exact = ((target - xv) / rate).max(0.0);
            let relaxed = exact + FEAS_TOL / rate.abs();
            t_relaxed = t_relaxed.min(relaxed);
            cands.push((p, exact, at_upper, a.abs()));
        }
        if cands.is_empty() {
            return None;
        }
        if bland {
            let mut best: Option<(usize, f64, bool)> = None;
            for &(p, t, up, _) in &cands {
                best = match best {
                    None => Some((p, t, up)),
                    Some((bp, bt, bup)) => {
                        if t < bt - 1e-12 || (t <= bt + 1e-12 && self.basis[p] < self.basis[bp]) {
                            Some((p, t, up))
                        } else {
                            Some((bp, bt, bup))
                        }
                    }
                };
            }
            let (p, t, up) = best.unwrap();
            return Some((t, p, up));
        }
        let mut best: Option<(usize, f64, bool, f64)> = None;
        for &(p, t, up, mag) in &cands {
            if t > t_relaxed {
                continue;
            }
            if best.is_none_or(|b| mag > b.3) {
                best = Some((p, t, up, mag));
            }
        }
        let (p, t, up, _) = best.unwrap();
        Some((t, p, up))
    }

    /// Row duals and the weak-duality audit for the current (optimal) basis.
    pub fn audit(&mut self) -> (Vec<f64>, DualityAudit) {
        let m = self.d.m;
        for p in 0..m {
            self.cb[p] = self.phase_cost(self.basis[p], true);
        }
        self.factor.btran(&mut self.cb, &mut self.y, &mut self.scratch);
        let primal = self.objective();
        let mut dual = 0.0;
        let mut infeas: f64 = 0.0;
        for j in 0..self.d.n + m {
            if self.stat[j] == VarStat::Basic {
                continue;
            }
            let dj = self.phase_cost(j, true) - self.d.dot(j, &self.y);
            let bound = if dj >= 0.0 { self.lb[j] } else { self.ub[j] };
            if bound.is_finite() {
                dual += dj * bound;
            } else {
                infeas = infeas.max(dj.abs());
            }
            let wrong_side = match self.stat[j] {
                _ if self.lb[j] == self.ub[j] => 0.0,
                VarStat::Lower => (-dj).max(0.0),
                VarStat::Upper => dj.max(0.0),
                _ => dj.abs(),
            };
            infeas = infeas.max(wrong_side);
        }
        let audit = DualityAudit {
            primal,
            dual,
            relative_gap: (primal - dual).abs() / primal.abs().max(1.0),
            dual_infeasibility: infeas,
        };
        (self.y.clone(), audit)
    }
}
