//! Scenario-cluster lower bounds, min-max upper bounds over cluster designs,
//! the SD feasibility audit and Lagrangean-decomposition bounds.

use std::time::{Duration, Instant};

use rand::Rng;
use serde::{Deserialize, Serialize};

use cddp_milp::{solve_lp, solve_milp, MilpLimits, ModelStats, SolveStatus, FEAS_TOL};

use crate::error::{CddpError, Result};
use crate::instance::CddpInstance;
use crate::models::{
    build_assignment, build_ld_submodel, build_lip_rn, build_lip_sd, build_scd_submodel, fix_first_stage,
    BuiltModel, ClusterScheme, DroData, FirstStageDesign, GammaMode, LdObjective, ResolvedSd, SdConfig,
    SdSubmodel, Variant,
};
use crate::par;
use crate::rng::substream;

/// Bound pipeline settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundsConfig {
    pub variant: Variant,
    pub clusters_per_member: usize,
    pub sd: Option<SdConfig>,
    /// Per-solve wall-clock limit in seconds. Off by default so that the
    /// node limit, which is deterministic, is the one that binds.
    pub time_limit: Option<f64>,
    pub node_limit: u64,
    pub rel_gap: f64,
    pub abs_gap: f64,
    /// Subgradient iterations; `None` skips the Lagrangean phase.
    pub ld_iterations: Option<usize>,
    pub ld_step_a: f64,
    pub ld_step_b: f64,
    /// Reference incumbent for the goodness ratio.
    pub reference: Option<f64>,
}

impl Default for BoundsConfig {
    fn default() -> Self {
        BoundsConfig {
            variant: Variant::Rn,
            clusters_per_member: 2,
            sd: None,
            time_limit: None,
            node_limit: 5_000,
            rel_gap: 1e-9,
            abs_gap: 1e-7,
            ld_iterations: None,
            ld_step_a: 1.0,
            ld_step_b: 10.0,
            reference: None,
        }
    }
}

impl BoundsConfig {
    pub fn limits(&self) -> MilpLimits {
        MilpLimits {
            time_limit: self.time_limit.map(Duration::from_secs_f64),
            node_limit: self.node_limit,
            rel_gap: self.rel_gap,
            abs_gap: self.abs_gap,
        }
    }
}

/// Result of one cluster submodel solve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterSolve {
    pub cluster: usize,
    pub member: usize,
    pub weight: f64,
    /// γ^c treatment for SD submodels.
    pub mode: Option<GammaMode>,
    pub floor: Option<f64>,
    pub status: SolveStatus,
    pub objective: Option<f64>,
    /// Proven lower bound z^c; `None` when infeasible.
    pub bound: Option<f64>,
    pub design: Option<FirstStageDesign>,
    pub c1: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LowerBound {
    pub z_lp: f64,
    pub lp_status: SolveStatus,
    pub clusters: Vec<ClusterSolve>,
    /// Σ_c w̃^c z^c per member (γ free for SD); `None` if a term is missing.
    pub member_bounds: Vec<Option<f64>>,
    /// SD: Σ_c w̃^c z^c with γ^c = 1 per member; `None` when infeasible.
    pub selected_bounds: Vec<Option<f64>>,
    /// Cluster-decomposition bound without the LP term.
    pub z_scd: f64,
    /// max(z_LP, z_scd).
    pub z_lb: f64,
    pub warnings: Vec<String>,
    #[serde(skip)]
    pub times: PhaseTimes,
    #[serde(skip)]
    pub lp_time: Duration,
}

/// Wall time of a phase as the slowest parallel cell plus the aggregation.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PhaseTimes {
    pub max_cell: Duration,
    pub aggregation: Duration,
}

impl PhaseTimes {
    pub fn total(&self) -> f64 {
        (self.max_cell + self.aggregation).as_secs_f64()
    }
}

/// A design retained from a cluster solve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub design: FirstStageDesign,
    /// Lowest cluster id that produced the design.
    pub cluster: usize,
    pub c1: f64,
}

/// Expected-surplus excess of one member and profile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SdViolation {
    pub member: usize,
    pub profile: usize,
    pub expected_surplus: f64,
    pub cap: f64,
    pub violation: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalStatus {
    /// Every second-stage solve proved optimal.
    Optimal,
    /// Some solve stopped at a limit; costs are incumbent values.
    Limit,
    /// SD: hard solve infeasible, expected-surplus rows dropped and audited.
    Relaxed,
    /// No feasible completion of the design.
    Infeasible,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateEval {
    pub candidate: Candidate,
    pub status: EvalStatus,
    /// F̂ per member and scenario position.
    pub costs: Vec<Vec<f64>>,
    /// Ĉ1 + Σ w F̂ per member.
    pub member_expected: Vec<f64>,
    /// Ĉ1 + max_p Σ w F̂, or the restricted SD optimum.
    pub objective: Option<f64>,
    pub selected_member: Option<usize>,
    pub violations: Vec<SdViolation>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UpperBound {
    pub z_ub: Option<f64>,
    /// Index into `evaluations`.
    pub selected: Option<usize>,
    pub evaluations: Vec<CandidateEval>,
    #[serde(skip)]
    pub times: PhaseTimes,
}

fn solve_times<T>(cells: Vec<(T, Duration)>) -> (Vec<T>, Duration) {
    let max = cells.iter().map(|c| c.1).max().unwrap_or_default();
    (cells.into_iter().map(|c| c.0).collect(), max)
}

fn timed<T>(f: impl FnOnce() -> T) -> (T, Duration) {
    let t = Instant::now();
    let r = f();
    (r, t.elapsed())
}

/// LIP-RN or LIP-SD over the whole ambiguity set.
pub fn full_model(variant: Variant, inst: &CddpInstance, data: &DroData, sd: Option<&ResolvedSd>) -> Result<BuiltModel> {
    match variant {
        Variant::Rn => build_lip_rn(inst, data),
        Variant::Sd => build_lip_sd(inst, data, sd.ok_or_else(|| CddpError::Config("SD bounds need an SD configuration".into()))?),
    }
}

/// LP relaxation value of the undecomposed model.
pub fn lp_bound(variant: Variant, inst: &CddpInstance, data: &DroData, sd: Option<&ResolvedSd>) -> Result<(f64, SolveStatus)> {
    let built = full_model(variant, inst, data, sd)?;
    let sol = solve_lp(&built.model);
    match sol.status {
        SolveStatus::Optimal => Ok((sol.objective.unwrap_or(sol.best_bound), sol.status)),
        SolveStatus::Infeasible => Ok((f64::INFINITY, sol.status)),
        s => Ok((sol.best_bound, s)),
    }
}

fn solve_cluster(
    inst: &CddpInstance,
    data: &DroData,
    scheme: &ClusterScheme,
    c: usize,
    sd: Option<(&ResolvedSd, SdSubmodel)>,
    limits: &MilpLimits,
) -> Result<ClusterSolve> {
    let built = build_scd_submodel(inst, data, scheme, c, sd)?;
    let sol = solve_milp(&built.model, limits);
    let design = (!sol.values.is_empty()).then(|| built.layout.first_stage[0].design(&sol.values));
    let cl = &scheme.clusters[c];
    Ok(ClusterSolve {
        cluster: c,
        member: cl.member,
        weight: cl.weight,
        mode: sd.map(|s| s.1.gamma),
        floor: sd.map(|s| s.1.floor),
        status: sol.status,
        objective: sol.objective,
        bound: (sol.status != SolveStatus::Infeasible).then_some(sol.best_bound),
        c1: design.as_ref().map(|d| d.c1(inst)),
        design,
    })
}

/// Weighted cluster sum per member; `None` if any cluster lacks a bound.
fn member_sums(scheme: &ClusterScheme, solves: &[&ClusterSolve]) -> Vec<Option<f64>> {
    scheme
        .by_member
        .iter()
        .map(|ids| {
            ids.iter()
                .map(|&c| {
                    let s = solves.iter().find(|s| s.cluster == c)?;
                    s.bound.map(|b| scheme.clusters[c].weight * b)
                })
                .sum::<Option<f64>>()
        })
        .collect()
}

/// Cluster-decomposition lower bound: max of the LP relaxation and the
/// per-member weighted sums of cluster optima. For SD the minimum over
/// members of the γ^c = 1 sums also bounds the optimum.
pub fn lower_bound(
    variant: Variant,
    inst: &CddpInstance,
    data: &DroData,
    scheme: &ClusterScheme,
    sd: Option<&ResolvedSd>,
    limits: &MilpLimits,
) -> Result<LowerBound> {
    scheme.validate(data)?;
    let mut warnings = Vec::new();
    let (lp, t_lp) = timed(|| lp_bound(variant, inst, data, sd));
    let (z_lp, lp_status) = lp?;
    if lp_status != SolveStatus::Optimal {
        warnings.push(format!("LP relaxation ended {lp_status:?}"));
    }
    let ids: Vec<usize> = (0..scheme.len()).collect();
    let mut clusters = Vec::new();
    let mut max_cell = Duration::ZERO;
    match variant {
        Variant::Rn => {
            let cells = par::map(&ids, |&c| timed(|| solve_cluster(inst, data, scheme, c, None, limits)));
            let (solves, t) = solve_times(cells);
            max_cell = max_cell.max(t);
            for s in solves {
                clusters.push(s?);
            }
        }
        Variant::Sd => {
            let sd = sd.ok_or_else(|| CddpError::Config("SD bounds need an SD configuration".into()))?;
            // Per-cluster floors: LP values of the RN cluster submodels.
            let floors = par::map(&ids, |&c| {
                timed(|| -> Result<f64> {
                    let b = build_scd_submodel(inst, data, scheme, c, None)?;
                    let s = solve_lp(&b.model);
                    Ok(if s.status == SolveStatus::Optimal { s.objective.unwrap_or(0.0) } else { 0.0 })
                })
            });
            let (floors, t) = solve_times(floors);
            let floors: Vec<f64> = floors.into_iter().collect::<Result<_>>()?;
            let jobs: Vec<(usize, GammaMode)> =
                ids.iter().flat_map(|&c| [(c, GammaMode::Free), (c, GammaMode::Selected)]).collect();
            let cells = par::map(&jobs, |&(c, mode)| {
                timed(|| solve_cluster(inst, data, scheme, c, Some((sd, SdSubmodel { gamma: mode, floor: floors[c] })), limits))
            });
            let (solves, t2) = solve_times(cells);
            max_cell = max_cell.max(t + t2);
            for s in solves {
                clusters.push(s?);
            }
        }
    }
    let agg = Instant::now();
    for s in &clusters {
        if s.status == SolveStatus::Infeasible && s.mode != Some(GammaMode::Selected) {
            warnings.push(format!("cluster {} submodel infeasible; its member's term is dropped", s.cluster));
        } else if s.status.has_limit() {
            warnings.push(format!("cluster {} submodel stopped at {:?}; its proven bound is used", s.cluster, s.status));
        }
    }
    let free: Vec<&ClusterSolve> = clusters.iter().filter(|s| s.mode != Some(GammaMode::Selected)).collect();
    let member_bounds = member_sums(scheme, &free);
    let selected_bounds = if variant == Variant::Sd {
        let sel: Vec<&ClusterSolve> = clusters.iter().filter(|s| s.mode == Some(GammaMode::Selected)).collect();
        member_sums(scheme, &sel)
    } else {
        Vec::new()
    };
    let mut z_scd = member_bounds.iter().flatten().cloned().fold(f64::NEG_INFINITY, f64::max);
    if variant == Variant::Sd {
        let sel = selected_bounds.iter().map(|b| b.unwrap_or(f64::INFINITY)).fold(f64::INFINITY, f64::min);
        z_scd = z_scd.max(sel);
    }
    let z_lb = z_lp.max(z_scd);
    Ok(LowerBound {
        z_lp,
        lp_status,
        clusters,
        member_bounds,
        selected_bounds,
        z_scd,
        z_lb,
        warnings,
        times: PhaseTimes { max_cell, aggregation: agg.elapsed() },
        lp_time: t_lp,
    })
}

/// Distinct designs from cluster solves in cluster order.
pub fn candidates(inst: &CddpInstance, lb: &LowerBound) -> Vec<Candidate> {
    let mut out: Vec<Candidate> = Vec::new();
    for s in &lb.clusters {
        if let Some(d) = &s.design {
            if !out.iter().any(|c| &c.design == d) {
                out.push(Candidate { design: d.clone(), cluster: s.cluster, c1: d.c1(inst) });
            }
        }
    }
    out.sort_by_key(|c| c.cluster);
    out
}

/// Recomputes ŝ = max(0, γ_p C12 − ι) from a solution and returns the
/// expected-surplus excess per member and profile. Excess within the
/// engine's feasibility tolerance is reported as 0.
pub fn sd_feasibility_audit(built: &BuiltModel, values: &[f64], data: &DroData, sd: &ResolvedSd) -> Vec<SdViolation> {
    let mut out = Vec::new();
    for (p, m) in data.members.iter().enumerate() {
        let gamma = built.layout.gamma.get(p).map_or(0.0, |g| values[g.0].round());
        for (b, prof) in sd.profiles.iter().enumerate() {
            let mut expected = 0.0;
            for blk in built.layout.blocks.iter().filter(|x| x.member == p) {
                let c12 = blk.c12.map_or(0.0, |v| values[v.0]);
                expected += m.weights[blk.position] * (gamma * c12 - prof.threshold).max(0.0);
            }
            let excess = expected - prof.expected_cap;
            let violation = if excess <= FEAS_TOL * (1.0 + prof.expected_cap.abs()) { 0.0 } else { excess };
            out.push(SdViolation { member: p, profile: b, expected_surplus: expected, cap: prof.expected_cap, violation });
        }
    }
    out
}

fn expected_costs(data: &DroData, c1: f64, costs: &[Vec<f64>]) -> Vec<f64> {
    data.members.iter().zip(costs).map(|(m, f)| c1 + m.expected(f)).collect()
}

fn eval_rn(
    inst: &CddpInstance,
    data: &DroData,
    cands: &[Candidate],
    limits: &MilpLimits,
) -> Result<(Vec<CandidateEval>, Duration)> {
    let cells: Vec<(usize, usize, usize)> = cands
        .iter()
        .enumerate()
        .flat_map(|(d, _)| {
            data.members
                .iter()
                .enumerate()
                .flat_map(move |(p, m)| (0..m.scenarios.len()).map(move |k| (d, p, k)))
        })
        .collect();
    let solved = par::map(&cells, |&(d, p, k)| {
        timed(|| -> Result<(f64, SolveStatus)> {
            let b = build_assignment(inst, &data.members[p].scenarios[k], &cands[d].design)?;
            let s = solve_milp(&b.model, limits);
            Ok((s.objective.unwrap_or(f64::INFINITY), s.status))
        })
    });
    let (solved, max_cell) = solve_times(solved);
    let mut evals: Vec<CandidateEval> = cands
        .iter()
        .map(|c| CandidateEval {
            candidate: c.clone(),
            status: EvalStatus::Optimal,
            costs: data.members.iter().map(|m| vec![0.0; m.scenarios.len()]).collect(),
            member_expected: Vec::new(),
            objective: None,
            selected_member: None,
            violations: Vec::new(),
        })
        .collect();
    for (&(d, p, k), r) in cells.iter().zip(solved) {
        let (f, status) = r?;
        evals[d].costs[p][k] = f;
        if status == SolveStatus::Infeasible || !f.is_finite() {
            evals[d].status = EvalStatus::Infeasible;
        } else if status != SolveStatus::Optimal && evals[d].status == EvalStatus::Optimal {
            evals[d].status = EvalStatus::Limit;
        }
    }
    for e in &mut evals {
        e.member_expected = expected_costs(data, e.candidate.c1, &e.costs);
        if e.status != EvalStatus::Infeasible {
            e.objective = Some(e.member_expected.iter().cloned().fold(f64::NEG_INFINITY, f64::max));
        }
    }
    Ok((evals, max_cell))
}

fn eval_sd_one(
    inst: &CddpInstance,
    data: &DroData,
    sd: &ResolvedSd,
    cand: &Candidate,
    limits: &MilpLimits,
) -> Result<CandidateEval> {
    let full = build_lip_sd(inst, data, sd)?;
    let mut fixed = fix_first_stage(&full, inst, &cand.design)?;
    let mut sol = solve_milp(&fixed.model, limits);
    let mut status = match sol.status {
        SolveStatus::Optimal => EvalStatus::Optimal,
        SolveStatus::Infeasible => EvalStatus::Infeasible,
        _ if sol.values.is_empty() => EvalStatus::Infeasible,
        _ => EvalStatus::Limit,
    };
    if status == EvalStatus::Infeasible {
        fixed.model.remove_rows(|n| n.starts_with("esurplus["));
        sol = solve_milp(&fixed.model, limits);
        status = if sol.values.is_empty() { EvalStatus::Infeasible } else { EvalStatus::Relaxed };
    }
    let mut costs: Vec<Vec<f64>> = data.members.iter().map(|m| vec![0.0; m.scenarios.len()]).collect();
    if sol.values.is_empty() {
        return Ok(CandidateEval {
            candidate: cand.clone(),
            status: EvalStatus::Infeasible,
            member_expected: expected_costs(data, cand.c1, &costs),
            costs,
            objective: None,
            selected_member: None,
            violations: Vec::new(),
        });
    }
    for (p, k, f) in fixed.block_costs(&sol.values) {
        costs[p][k] = f;
    }
    let selected_member = fixed.layout.gamma.iter().position(|g| sol.values[g.0] > 0.5);
    let violations = sd_feasibility_audit(&fixed, &sol.values, data, sd);
    Ok(CandidateEval {
        candidate: cand.clone(),
        status,
        member_expected: expected_costs(data, cand.c1, &costs),
        costs,
        objective: sol.objective,
        selected_member,
        violations,
    })
}

/// Min-max upper bound: every candidate design is evaluated against all
/// members and the best worst case is kept. Ties go to the lower C1, then
/// to the lower cluster id.
pub fn upper_bound(
    variant: Variant,
    inst: &CddpInstance,
    data: &DroData,
    sd: Option<&ResolvedSd>,
    cands: &[Candidate],
    limits: &MilpLimits,
) -> Result<UpperBound> {
    if cands.is_empty() {
        return Err(CddpError::Build("no candidate design to evaluate".into()));
    }
    for c in cands {
        c.design.validate(inst)?;
    }
    let (evals, max_cell) = match variant {
        Variant::Rn => eval_rn(inst, data, cands, limits)?,
        Variant::Sd => {
            let sd = sd.ok_or_else(|| CddpError::Config("SD bounds need an SD configuration".into()))?;
            let cells = par::map(cands, |c| timed(|| eval_sd_one(inst, data, sd, c, limits)));
            let (r, t) = solve_times(cells);
            (r.into_iter().collect::<Result<Vec<_>>>()?, t)
        }
    };
    let agg = Instant::now();
    let mut selected: Option<usize> = None;
    for (i, e) in evals.iter().enumerate() {
        let Some(z) = e.objective else { continue };
        let better = match selected {
            None => true,
            Some(j) => {
                let b = &evals[j];
                let zb = b.objective.unwrap();
                let tol = 1e-9 * (1.0 + zb.abs());
                if z < zb - tol {
                    true
                } else if z <= zb + tol {
                    (e.candidate.c1, e.candidate.cluster) < (b.candidate.c1, b.candidate.cluster)
                } else {
                    false
                }
            }
        };
        if better {
            selected = Some(i);
        }
    }
    Ok(UpperBound {
        z_ub: selected.and_then(|i| evals[i].objective),
        selected,
        evaluations: evals,
        times: PhaseTimes { max_cell, aggregation: agg.elapsed() },
    })
}

/// Multipliers of the Lagrangean decomposition. Split rows are dualized
/// inside each member's cluster cycle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LagrangeMultipliers {
    /// λ[c][i][k] ≥ 0.
    pub lambda: Vec<Vec<Vec<f64>>>,
    /// μ[c][j][k] ≥ 0.
    pub mu: Vec<Vec<Vec<f64>>>,
    /// φ[c] ≥ 0.
    pub phi: Vec<f64>,
    /// SD: δ[c] ≥ 0.
    pub delta: Vec<f64>,
    /// SD: π[p] ≥ 0 on the lower links.
    pub pi: Vec<f64>,
    /// SD: π'[p] ≥ 0 on the upper links.
    pub pi_prime: Vec<f64>,
    /// SD: unsigned, on the selection row.
    pub sigma: f64,
    /// SD: ϕ[p][b] ≥ 0 on the expected-surplus rows.
    pub varphi: Vec<Vec<f64>>,
}

impl LagrangeMultipliers {
    pub fn zeros(inst: &CddpInstance, scheme: &ClusterScheme, members: usize, profiles: usize) -> Self {
        let side = |s: &crate::instance::DoorSide| -> Vec<Vec<f64>> {
            s.doors.iter().map(|d| vec![0.0; d.capacity_levels.len()]).collect()
        };
        let n = scheme.len();
        LagrangeMultipliers {
            lambda: vec![side(&inst.strip); n],
            mu: vec![side(&inst.stack); n],
            phi: vec![0.0; n],
            delta: vec![0.0; n],
            pi: vec![0.0; members],
            pi_prime: vec![0.0; members],
            sigma: 0.0,
            varphi: vec![vec![0.0; profiles]; members],
        }
    }

    /// Random multipliers with the right signs, magnitudes up to `scale`.
    pub fn random(inst: &CddpInstance, scheme: &ClusterScheme, members: usize, profiles: usize, seed: u64, scale: f64) -> Self {
        let mut rng = substream(seed, crate::rng::TAG_MULTIPLIER, &[]);
        let mut m = Self::zeros(inst, scheme, members, profiles);
        for x in m.lambda.iter_mut().chain(m.mu.iter_mut()).flatten().flatten() {
            *x = rng.random::<f64>() * scale;
        }
        for x in m.phi.iter_mut().chain(&mut m.delta).chain(&mut m.pi).chain(&mut m.pi_prime) {
            *x = rng.random::<f64>() * scale;
        }
        for x in m.varphi.iter_mut().flatten() {
            *x = rng.random::<f64>() * scale;
        }
        m.sigma = (rng.random::<f64>() * 2.0 - 1.0) * scale;
        m
    }

    pub fn validate(&self) -> Result<()> {
        let signed = self
            .lambda
            .iter()
            .chain(&self.mu)
            .flatten()
            .flatten()
            .chain(&self.phi)
            .chain(&self.delta)
            .chain(&self.pi)
            .chain(&self.pi_prime)
            .chain(self.varphi.iter().flatten());
        for &x in signed {
            if !(x >= 0.0) || !x.is_finite() {
                return Err(CddpError::Config(format!("multiplier {x} violates its sign constraint")));
            }
        }
        if !self.sigma.is_finite() {
            return Err(CddpError::Config("sigma must be finite".into()));
        }
        Ok(())
    }

    fn project(&mut self) {
        let clamp = |x: &mut f64| *x = x.max(0.0);
        self.lambda.iter_mut().chain(self.mu.iter_mut()).flatten().flatten().for_each(clamp);
        self.phi.iter_mut().chain(&mut self.delta).chain(&mut self.pi).chain(&mut self.pi_prime).for_each(clamp);
        self.varphi.iter_mut().flatten().for_each(clamp);
    }

    fn axpy(&mut self, step: f64, g: &LagrangeMultipliers, members: &[bool], clusters: &[bool], sigma: bool) {
        for c in 0..self.phi.len() {
            if !clusters[c] {
                continue;
            }
            for (a, b) in self.lambda[c].iter_mut().flatten().zip(g.lambda[c].iter().flatten()) {
                *a += step * b;
            }
            for (a, b) in self.mu[c].iter_mut().flatten().zip(g.mu[c].iter().flatten()) {
                *a += step * b;
            }
            self.phi[c] += step * g.phi[c];
            self.delta[c] += step * g.delta[c];
        }
        for p in 0..self.pi.len() {
            if !members[p] {
                continue;
            }
            self.pi[p] += step * g.pi[p];
            self.pi_prime[p] += step * g.pi_prime[p];
            for (a, b) in self.varphi[p].iter_mut().zip(&g.varphi[p]) {
                *a += step * b;
            }
        }
        if sigma {
            self.sigma += step * g.sigma;
        }
    }
}

/// z_LD(ν) with its subgradient.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LdEvaluation {
    /// `None` stands for −∞.
    pub value: Option<f64>,
    /// A cluster whose submodel is unbounded below.
    pub unbounded_cluster: Option<usize>,
    pub member_values: Vec<Option<f64>>,
    pub cluster_values: Vec<Option<f64>>,
    pub best_member: Option<usize>,
    pub subgradient: LagrangeMultipliers,
}

struct ClusterLd {
    value: Option<f64>,
    alpha: Vec<Vec<f64>>,
    beta: Vec<Vec<f64>>,
    u: f64,
    u_sel: f64,
    gamma: f64,
    cost: f64,
    /// Σ_ω w̃^ω s^{ω,b} per profile.
    surplus: Vec<f64>,
}

fn solve_ld_cluster(
    inst: &CddpInstance,
    data: &DroData,
    scheme: &ClusterScheme,
    c: usize,
    sd: Option<&ResolvedSd>,
    nu: &LagrangeMultipliers,
    limits: &MilpLimits,
) -> Result<ClusterLd> {
    let cl = &scheme.clusters[c];
    let p = cl.member;
    let a = scheme.ancestor_in_member(c);
    let diff = |x: &Vec<Vec<Vec<f64>>>| -> Vec<Vec<f64>> {
        x[c].iter()
            .zip(&x[a])
            .map(|(r, s)| r.iter().zip(s).map(|(u, v)| if a == c { 0.0 } else { u - v }).collect())
            .collect()
    };
    let same = |x: &[f64]| if a == c { 0.0 } else { x[c] - x[a] };
    let w = cl.weight;
    let obj = match sd {
        None => LdObjective {
            alpha: diff(&nu.lambda),
            beta: diff(&nu.mu),
            cost: w,
            u: same(&nu.phi),
            u_sel: 0.0,
            gamma: 0.0,
            surplus: Vec::new(),
        },
        Some(sd) => LdObjective {
            alpha: diff(&nu.lambda),
            beta: diff(&nu.mu),
            cost: (nu.pi_prime[p] - nu.pi[p]) * w,
            u: w * (1.0 - nu.pi_prime[p]) + same(&nu.phi),
            u_sel: nu.pi[p] * w,
            gamma: same(&nu.delta) - nu.pi[p] * w * sd.u_lower + nu.sigma * w,
            surplus: nu.varphi[p].iter().map(|f| f * w).collect(),
        },
    };
    let zeros = || ClusterLd {
        value: None,
        alpha: obj.alpha.iter().map(|r| vec![0.0; r.len()]).collect(),
        beta: obj.beta.iter().map(|r| vec![0.0; r.len()]).collect(),
        u: 0.0,
        u_sel: 0.0,
        gamma: 0.0,
        cost: 0.0,
        surplus: vec![0.0; obj.surplus.len()],
    };
    // The RN copy u^c is unbounded above.
    if sd.is_none() && obj.u < 0.0 {
        return Ok(zeros());
    }
    let built = build_ld_submodel(inst, data, scheme, c, sd, &obj)?;
    let sol = solve_milp(&built.model, limits);
    if sol.status == SolveStatus::Unbounded || sol.values.is_empty() {
        return Ok(zeros());
    }
    let v = &sol.values;
    let fs = &built.layout.first_stage[0];
    let pick = |vars: &Vec<Vec<cddp_milp::VarId>>| -> Vec<Vec<f64>> {
        vars.iter().map(|r| r.iter().map(|x| v[x.0].round()).collect()).collect()
    };
    let mut surplus = vec![0.0; obj.surplus.len()];
    for s in &built.layout.surplus {
        let i = cl.positions.iter().position(|&k| k == s.position).unwrap();
        surplus[s.profile] += cl.inner[i] * v[s.var.0];
    }
    Ok(ClusterLd {
        value: Some(sol.best_bound),
        alpha: pick(&fs.alpha),
        beta: pick(&fs.beta),
        // With a zero coefficient the RN copy is taken at its lower bound.
        u: if sd.is_some() { v[built.layout.u[0].0] } else { 0.0 },
        u_sel: built.layout.u_sel.first().map_or(0.0, |x| v[x.0]),
        gamma: built.layout.gamma.first().map_or(0.0, |x| v[x.0].round()),
        cost: v[built.layout.cost[0].0],
        surplus,
    })
}

/// Lagrangean-decomposition bound. Each member q yields
/// Σ_{c∈C_q} z^c(ν) plus constants, a lower bound on min_x E_q(x) (RN) or on
/// the SD optimum; the bound is the best member's value.
pub fn ld_bound(
    inst: &CddpInstance,
    data: &DroData,
    scheme: &ClusterScheme,
    sd: Option<&ResolvedSd>,
    nu: &LagrangeMultipliers,
    limits: &MilpLimits,
) -> Result<LdEvaluation> {
    nu.validate()?;
    let ids: Vec<usize> = (0..scheme.len()).collect();
    let sols: Vec<ClusterLd> =
        par::map(&ids, |&c| solve_ld_cluster(inst, data, scheme, c, sd, nu, limits)).into_iter().collect::<Result<_>>()?;
    let np = data.members.len();
    let mut g = LagrangeMultipliers::zeros(inst, scheme, np, sd.map_or(0, |s| s.profiles.len()));
    for c in 0..scheme.len() {
        let n = scheme.next_in_member(c);
        let (x, y) = (&sols[c], &sols[n]);
        for (gi, (r, s)) in g.lambda[c].iter_mut().zip(x.alpha.iter().zip(&y.alpha)) {
            for (gk, (u, v)) in gi.iter_mut().zip(r.iter().zip(s)) {
                *gk = u - v;
            }
        }
        for (gi, (r, s)) in g.mu[c].iter_mut().zip(x.beta.iter().zip(&y.beta)) {
            for (gk, (u, v)) in gi.iter_mut().zip(r.iter().zip(s)) {
                *gk = u - v;
            }
        }
        g.phi[c] = x.u - y.u;
        g.delta[c] = x.gamma - y.gamma;
    }
    let mut member_values = Vec::with_capacity(np);
    let mut unbounded_cluster = None;
    for (p, ids) in scheme.by_member.iter().enumerate() {
        let mut total = Some(0.0);
        for &c in ids {
            match sols[c].value {
                Some(z) => total = total.map(|t| t + z),
                None => {
                    total = None;
                    unbounded_cluster.get_or_insert(c);
                }
            }
        }
        if let Some(sd) = sd {
            total = total.map(|t| {
                t + nu.pi[p] * sd.u_lower - nu.sigma + (np as f64 - 1.0) * nu.sigma.min(0.0)
                    - nu.varphi[p].iter().zip(&sd.profiles).map(|(f, b)| f * b.expected_cap).sum::<f64>()
            });
            for &c in ids {
                let (w, s) = (scheme.clusters[c].weight, &sols[c]);
                g.pi[p] += w * (sd.u_lower * (1.0 - s.gamma) + s.u_sel - s.cost);
                g.pi_prime[p] += w * (s.cost - s.u);
                for (gb, sb) in g.varphi[p].iter_mut().zip(&s.surplus) {
                    *gb += w * sb;
                }
            }
            for (gb, prof) in g.varphi[p].iter_mut().zip(&sd.profiles) {
                *gb -= prof.expected_cap;
            }
        }
        member_values.push(total);
    }
    let best_member = member_values
        .iter()
        .enumerate()
        .filter_map(|(p, v)| v.map(|v| (p, v)))
        .fold(None, |acc: Option<(usize, f64)>, (p, v)| match acc {
            Some((_, b)) if b >= v => acc,
            _ => Some((p, v)),
        })
        .map(|x| x.0);
    if let (Some(q), Some(_)) = (best_member, sd) {
        let sel: f64 = scheme.by_member[q].iter().map(|&c| scheme.clusters[c].weight * sols[c].gamma).sum();
        let others = if nu.sigma < 0.0 { np as f64 - 1.0 } else { 0.0 };
        g.sigma = sel + others - 1.0;
    }
    // Any member with a finite term gives a valid bound.
    let value = best_member.and_then(|p| member_values[p]);
    Ok(LdEvaluation {
        value,
        unbounded_cluster: if value.is_none() { unbounded_cluster } else { None },
        member_values,
        cluster_values: sols.iter().map(|s| s.value).collect(),
        best_member,
        subgradient: g,
    })
}

/// History of the projected subgradient ascent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LdTrace {
    pub iterations: usize,
    pub step_a: f64,
    pub step_b: f64,
    /// z_LD(ν_t) per evaluation, starting with ν_0.
    pub values: Vec<Option<f64>>,
    /// Best bound seen after each evaluation.
    pub best_history: Vec<Option<f64>>,
    pub best: Option<f64>,
    pub best_multipliers: LagrangeMultipliers,
}

/// Projected subgradient ascent with step a/(b + t). Each member's own
/// multipliers follow its own subgradient; σ follows the best member's.
#[allow(clippy::too_many_arguments)]
pub fn ld_subgradient_loop(
    inst: &CddpInstance,
    data: &DroData,
    scheme: &ClusterScheme,
    sd: Option<&ResolvedSd>,
    start: LagrangeMultipliers,
    iterations: usize,
    step: (f64, f64),
    limits: &MilpLimits,
) -> Result<LdTrace> {
    let mut nu = start;
    let mut values = Vec::with_capacity(iterations + 1);
    let mut best_history = Vec::with_capacity(iterations + 1);
    let mut best: Option<f64> = None;
    let mut best_nu = nu.clone();
    for t in 0..=iterations {
        let ev = ld_bound(inst, data, scheme, sd, &nu, limits)?;
        values.push(ev.value);
        if let Some(v) = ev.value {
            if best.is_none_or(|b| v > b) {
                best = Some(v);
                best_nu = nu.clone();
            }
        }
        best_history.push(best);
        if t == iterations {
            break;
        }
        let members: Vec<bool> = ev.member_values.iter().map(Option::is_some).collect();
        let clusters: Vec<bool> = scheme.clusters.iter().map(|c| members[c.member]).collect();
        let s = step.0 / (step.1 + t as f64);
        nu.axpy(s, &ev.subgradient, &members, &clusters, ev.best_member.is_some());
        nu.project();
    }
    Ok(LdTrace { iterations, step_a: step.0, step_b: step.1, values, best_history, best, best_multipliers: best_nu })
}

/// 100·(z_UB − max(z_LP, z_LB))/z_UB.
pub fn gap_h(z_ub: f64, z_lp: f64, z_lb: f64) -> f64 {
    cddp_milp::gap_percent(z_ub, z_lp.max(z_lb))
}

/// Reference incumbent over the heuristic incumbent.
pub fn goodness_ratio(z_ub: f64, reference: f64) -> f64 {
    reference / z_ub
}

/// Phase wall times in seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub lp: f64,
    /// Lower-bound phase.
    pub lower: f64,
    /// Upper-bound phase, lower-bound phase included.
    pub upper: f64,
    pub ld: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundsReport {
    pub config: BoundsConfig,
    pub instance: String,
    pub member_ids: Vec<usize>,
    pub sd: Option<ResolvedSd>,
    pub scheme: ClusterScheme,
    /// Dimensions of the undecomposed model.
    pub stats: ModelStats,
    pub lower: LowerBound,
    pub candidates: Vec<Candidate>,
    pub upper: UpperBound,
    pub z_lp: f64,
    pub z_lb: f64,
    pub z_ub: Option<f64>,
    pub selected_design: Option<FirstStageDesign>,
    pub c1_h: Option<f64>,
    pub f_h: Option<f64>,
    pub gap_h: Option<f64>,
    pub gr_h: Option<f64>,
    /// Audit of the selected SD design.
    pub violations: Vec<SdViolation>,
    pub ld: Option<LdTrace>,
    pub warnings: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timings: Option<Timings>,
}

pub const CSV_HEADER: &str = "zL,tL,zH_lb,tH_lb,zH_ub,tH_ub,C1H,FH,GAP_H,GR_H";

fn cell(x: Option<f64>) -> String {
    match x {
        Some(v) if v.is_finite() => format!("{v}"),
        Some(v) if v > 0.0 => "inf".into(),
        Some(_) => "-inf".into(),
        None => String::new(),
    }
}

impl BoundsReport {
    /// One Table-8 row; time columns are empty unless timings were kept.
    pub fn csv_row(&self) -> String {
        let t = self.timings;
        [
            cell(Some(self.z_lp)),
            cell(t.map(|t| t.lp)),
            cell(Some(self.lower.z_scd)),
            cell(t.map(|t| t.lower)),
            cell(self.z_ub),
            cell(t.map(|t| t.upper)),
            cell(self.c1_h),
            cell(self.f_h),
            cell(self.gap_h),
            cell(Some(self.gr_h.unwrap_or(f64::INFINITY))),
        ]
        .join(",")
    }

    pub fn csv(&self) -> String {
        format!("{CSV_HEADER}\n{}\n", self.csv_row())
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| CddpError::Parse(e.to_string()))
    }
}

/// Full pipeline: LP and cluster lower bounds, min-max upper bound over
/// the cluster designs and, when requested, the subgradient loop.
pub fn run_bounds(inst: &CddpInstance, data: &DroData, cfg: &BoundsConfig) -> Result<BoundsReport> {
    let limits = cfg.limits();
    let sd = match cfg.variant {
        Variant::Sd => Some(
            cfg.sd
                .as_ref()
                .ok_or_else(|| CddpError::Config("SD bounds need an SD configuration".into()))?
                .resolve(inst, data)?,
        ),
        Variant::Rn => None,
    };
    let scheme = ClusterScheme::contiguous(data, cfg.clusters_per_member)?;
    let stats = full_model(cfg.variant, inst, data, sd.as_ref())?.stats();
    let lower = lower_bound(cfg.variant, inst, data, &scheme, sd.as_ref(), &limits)?;
    let mut warnings = lower.warnings.clone();
    let mut cands = candidates(inst, &lower);
    if cands.is_empty() {
        warnings.push("no cluster design available; evaluating the all-closed design".into());
        let d = FirstStageDesign::closed(inst);
        cands.push(Candidate { c1: d.c1(inst), design: d, cluster: 0 });
    }
    let upper = upper_bound(cfg.variant, inst, data, sd.as_ref(), &cands, &limits)?;
    let ld = match cfg.ld_iterations {
        Some(n) => {
            let start = LagrangeMultipliers::zeros(inst, &scheme, data.members.len(), sd.as_ref().map_or(0, |s| s.profiles.len()));
            Some(timed(|| ld_subgradient_loop(inst, data, &scheme, sd.as_ref(), start, n, (cfg.ld_step_a, cfg.ld_step_b), &limits)))
        }
        None => None,
    };
    let (ld, t_ld) = match ld {
        Some((r, t)) => (Some(r?), Some(t.as_secs_f64())),
        None => (None, None),
    };
    let sel = upper.selected.map(|i| &upper.evaluations[i]);
    let z_ub = upper.z_ub;
    let c1_h = sel.map(|e| e.candidate.c1);
    let violations = sel.map(|e| e.violations.clone()).unwrap_or_default();
    if violations.iter().any(|v| v.violation > 0.0) {
        warnings.push("selected design violates expected-surplus caps; see violations".into());
    }
    let t_lower = lower.times.total();
    let timings = Timings { lp: lower.lp_time.as_secs_f64(), lower: t_lower, upper: t_lower + upper.times.total(), ld: t_ld };
    Ok(BoundsReport {
        config: cfg.clone(),
        instance: inst.name.clone(),
        member_ids: data.members.iter().map(|m| m.id).collect(),
        sd,
        scheme,
        stats,
        z_lp: lower.z_lp,
        z_lb: lower.z_lb,
        z_ub,
        selected_design: sel.map(|e| e.candidate.design.clone()),
        c1_h,
        f_h: z_ub.zip(c1_h).map(|(z, c)| z - c),
        gap_h: z_ub.map(|z| gap_h(z, lower.z_lp, lower.z_scd)),
        gr_h: match (z_ub, cfg.reference) {
            (Some(z), Some(r)) => Some(goodness_ratio(z, r)),
            _ => None,
        },
        violations,
        ld,
        warnings,
        timings: Some(timings),
        candidates: cands,
        lower,
        upper,
    })
}
