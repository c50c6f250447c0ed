//! Brute-force reference solver for tiny instances: enumerates designs,
//! assignments and per-scenario cost choices directly, without any LP.

use serde::{Deserialize, Serialize};

use crate::error::{CddpError, Result};
use crate::instance::{CddpInstance, ScenarioData};
use crate::models::{DroData, FirstStageDesign, ResolvedSd};
use crate::par;

const TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleLimits {
    pub max_designs: usize,
    /// Per-scenario cap on enumerated assignments.
    pub max_assignments: usize,
    pub max_members_sd: usize,
}

impl Default for OracleLimits {
    fn default() -> Self {
        OracleLimits { max_designs: 4096, max_assignments: 1_000_000, max_members_sd: 4 }
    }
}

/// Door choice per involved node, aligned with `origins` / `destinations`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Assignment {
    pub x: Vec<Option<usize>>,
    pub y: Vec<Option<usize>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleSolution {
    pub objective: f64,
    pub design: FirstStageDesign,
    /// Selected member under SD.
    pub selected: Option<usize>,
    /// C1 + Σ w F per member at the reported optimum.
    pub member_costs: Vec<f64>,
    /// F per member and scenario position.
    pub block_costs: Vec<Vec<f64>>,
    /// SD: max(0, C1 + F − ι) of the selected member per profile and scenario.
    pub surplus: Vec<Vec<f64>>,
    pub designs_enumerated: usize,
    pub assignments_enumerated: u64,
}

fn side_designs(levels: &[usize], cap: usize) -> Vec<Vec<Option<usize>>> {
    let mut out = vec![Vec::new()];
    for &n in levels {
        let mut next = Vec::new();
        for d in &out {
            let open = d.iter().filter(|k: &&Option<usize>| k.is_some()).count();
            let mut z = d.clone();
            z.push(None);
            next.push(z);
            if open < cap {
                for k in 0..n {
                    let mut z = d.clone();
                    z.push(Some(k));
                    next.push(z);
                }
            }
        }
        out = next;
    }
    out
}

/// Every design within the door caps.
pub fn enumerate_designs(inst: &CddpInstance, lim: &OracleLimits) -> Result<Vec<FirstStageDesign>> {
    let count = |s: &crate::instance::DoorSide| -> f64 {
        s.doors.iter().map(|d| (d.capacity_levels.len() + 1) as f64).product()
    };
    if count(&inst.strip) * count(&inst.stack) > lim.max_designs as f64 {
        return Err(CddpError::TooLarge("too many designs".into()));
    }
    let lv = |s: &crate::instance::DoorSide| s.doors.iter().map(|d| d.capacity_levels.len()).collect::<Vec<_>>();
    let strips = side_designs(&lv(&inst.strip), inst.strip.max_doors);
    let stacks = side_designs(&lv(&inst.stack), inst.stack.max_doors);
    let mut out = Vec::with_capacity(strips.len() * stacks.len());
    for s in &strips {
        for t in &stacks {
            out.push(FirstStageDesign { strip: s.clone(), stack: t.clone() });
        }
    }
    Ok(out)
}

/// Capacity-feasible door choices for one side.
fn side_assignments(
    nodes: &[usize],
    accept: &[Vec<usize>],
    volume: &[f64],
    caps: &[f64],
) -> Vec<Vec<Option<usize>>> {
    let mut out = Vec::new();
    let mut cur = Vec::with_capacity(nodes.len());
    let mut load = vec![0.0; caps.len()];
    fn rec(
        k: usize,
        nodes: &[usize],
        accept: &[Vec<usize>],
        volume: &[f64],
        caps: &[f64],
        cur: &mut Vec<Option<usize>>,
        load: &mut Vec<f64>,
        out: &mut Vec<Vec<Option<usize>>>,
    ) {
        if k == nodes.len() {
            out.push(cur.clone());
            return;
        }
        let m = nodes[k];
        cur.push(None);
        rec(k + 1, nodes, accept, volume, caps, cur, load, out);
        cur.pop();
        for &i in &accept[m] {
            if load[i] + volume[m] <= caps[i] + TOL * (1.0 + caps[i]) {
                load[i] += volume[m];
                cur.push(Some(i));
                rec(k + 1, nodes, accept, volume, caps, cur, load, out);
                cur.pop();
                load[i] -= volume[m];
            }
        }
    }
    rec(0, nodes, accept, volume, caps, &mut cur, &mut load, &mut out);
    out
}

/// Available capacity (1 − D) S of each door under a design.
pub fn door_capacities(inst: &CddpInstance, sd: &ScenarioData, design: &FirstStageDesign) -> (Vec<f64>, Vec<f64>) {
    let caps = |levels: &[Option<usize>], doors: &[crate::instance::Door], d: &[f64]| -> Vec<f64> {
        levels
            .iter()
            .zip(doors)
            .zip(d)
            .map(|((k, door), d)| k.map_or(0.0, |k| (1.0 - d) * door.capacity_levels[k].nominal_capacity))
            .collect()
    };
    (
        caps(&design.strip, &inst.strip.doors, &sd.d_strip),
        caps(&design.stack, &inst.stack.doors, &sd.d_stack),
    )
}

/// All capacity-feasible assignments of a scenario under a design.
pub fn enumerate_assignments(
    inst: &CddpInstance,
    sd: &ScenarioData,
    design: &FirstStageDesign,
    lim: &OracleLimits,
) -> Result<Vec<Assignment>> {
    let bound: f64 = sd.origins.iter().map(|&m| (sd.strip_accept[m].len() + 1) as f64).product::<f64>()
        * sd.destinations.iter().map(|&n| (sd.stack_accept[n].len() + 1) as f64).product::<f64>();
    if bound > lim.max_assignments as f64 {
        return Err(CddpError::TooLarge(format!("scenario {} has too many assignments", sd.id)));
    }
    let (cs, ct) = door_capacities(inst, sd, design);
    let xs = side_assignments(&sd.origins, &sd.strip_accept, &sd.s, &cs);
    let ys = side_assignments(&sd.destinations, &sd.stack_accept, &sd.r, &ct);
    let mut out = Vec::with_capacity(xs.len() * ys.len());
    for x in &xs {
        for y in &ys {
            out.push(Assignment { x: x.clone(), y: y.clone() });
        }
    }
    Ok(out)
}

/// F of an assignment with a0 and b0 at their smallest values.
pub fn assignment_cost(inst: &CddpInstance, sd: &ScenarioData, a: &Assignment) -> f64 {
    let f0 = inst.outsourcing_penalty;
    let mut xo = vec![None; inst.num_origins];
    for (k, &m) in sd.origins.iter().enumerate() {
        xo[m] = a.x[k];
    }
    let mut yo = vec![None; inst.num_destinations];
    for (k, &n) in sd.destinations.iter().enumerate() {
        yo[n] = a.y[k];
    }
    let mut cost = 0.0;
    if a.x.iter().any(Option::is_none) {
        cost += f0;
    }
    if a.y.iter().any(Option::is_none) {
        cost += f0;
    }
    for &(m, n, h) in &sd.cells {
        cost += sd.g(inst, h, xo[m], yo[n]);
    }
    cost
}

/// Smallest F of a scenario under a design.
pub fn min_scenario_cost(inst: &CddpInstance, sd: &ScenarioData, design: &FirstStageDesign, lim: &OracleLimits) -> Result<f64> {
    let all = enumerate_assignments(inst, sd, design, lim)?;
    Ok(all.iter().map(|a| assignment_cost(inst, sd, a)).fold(f64::INFINITY, f64::min))
}

/// Every value F can take, including voluntary outsourcing indicators, sorted and distinct.
pub fn scenario_values(inst: &CddpInstance, sd: &ScenarioData, design: &FirstStageDesign, lim: &OracleLimits) -> Result<Vec<f64>> {
    let f0 = inst.outsourcing_penalty;
    let mut vals = Vec::new();
    for a in enumerate_assignments(inst, sd, design, lim)? {
        let base = assignment_cost(inst, sd, &a);
        let a0 = a.x.iter().any(Option::is_none);
        let b0 = a.y.iter().any(Option::is_none);
        vals.push(base);
        if !a0 {
            vals.push(base + f0);
        }
        if !b0 {
            vals.push(base + f0);
        }
        if !a0 && !b0 {
            vals.push(base + 2.0 * f0);
        }
    }
    vals.sort_by(f64::total_cmp);
    vals.dedup_by(|a, b| (*a - *b).abs() <= TOL * (1.0 + b.abs()));
    Ok(vals)
}

fn better(a: &OracleSolution, b: &Option<OracleSolution>) -> bool {
    b.as_ref().is_none_or(|b| a.objective < b.objective - 1e-12)
}

/// Risk-neutral robust optimum: min over designs of C1 + max_p Σ w min F.
pub fn oracle_rn(inst: &CddpInstance, data: &DroData, lim: &OracleLimits) -> Result<OracleSolution> {
    let designs = enumerate_designs(inst, lim)?;
    let evals = par::map(&designs, |design| -> Result<(OracleSolution, u64)> {
        let c1 = design.c1(inst);
        let mut costs = Vec::with_capacity(data.members.len());
        let mut blocks = Vec::with_capacity(data.members.len());
        let mut count = 0u64;
        for m in &data.members {
            let mut e = c1;
            let mut fs = Vec::with_capacity(m.scenarios.len());
            for (sd, w) in m.scenarios.iter().zip(&m.weights) {
                let all = enumerate_assignments(inst, sd, design, lim)?;
                count += all.len() as u64;
                let f = all.iter().map(|a| assignment_cost(inst, sd, a)).fold(f64::INFINITY, f64::min);
                e += w * f;
                fs.push(f);
            }
            costs.push(e);
            blocks.push(fs);
        }
        let u = costs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let sol = OracleSolution {
            objective: u,
            design: design.clone(),
            selected: None,
            member_costs: costs,
            block_costs: blocks,
            surplus: Vec::new(),
            designs_enumerated: 0,
            assignments_enumerated: 0,
        };
        Ok((sol, count))
    });
    let mut best: Option<OracleSolution> = None;
    let mut count = 0;
    for e in evals {
        let (sol, n) = e?;
        count += n;
        if better(&sol, &best) {
            best = Some(sol);
        }
    }
    let mut best = best.ok_or_else(|| CddpError::Build("oracle found no design".into()))?;
    best.designs_enumerated = designs.len();
    best.assignments_enumerated = count;
    Ok(best)
}

fn sd_for_design(
    inst: &CddpInstance,
    data: &DroData,
    sd: &ResolvedSd,
    design: &FirstStageDesign,
    lim: &OracleLimits,
) -> Result<(Option<OracleSolution>, u64)> {
    let c1 = design.c1(inst);
    let mut count = 0u64;
    // Values per block restricted to C1 + F ≤ C̄.
    let mut member_values = Vec::with_capacity(data.members.len());
    for m in &data.members {
        let mut vs = Vec::with_capacity(m.scenarios.len());
        for scen in &m.scenarios {
            count += enumerate_assignments(inst, scen, design, lim)?.len() as u64;
            let mut v = scenario_values(inst, scen, design, lim)?;
            v.retain(|&f| c1 + f <= sd.c_upper + TOL * (1.0 + sd.c_upper));
            vs.push(v);
        }
        member_values.push(vs);
    }
    let floors: Vec<Option<(f64, Vec<f64>)>> = data
        .members
        .iter()
        .zip(&member_values)
        .map(|(m, vs)| Search::run(vs, &m.weights, c1, sd.u_lower, &[]))
        .collect();
    let mut best: Option<OracleSolution> = None;
    for (p, m) in data.members.iter().enumerate() {
        let mut need = f64::NEG_INFINITY;
        let mut ok = true;
        for (q, fl) in floors.iter().enumerate() {
            if q != p {
                match fl {
                    Some(v) => need = need.max(v.0),
                    None => ok = false,
                }
            }
        }
        if !ok {
            continue;
        }
        let vals: Vec<Vec<f64>> = member_values[p]
            .iter()
            .map(|vs| {
                vs.iter()
                    .copied()
                    .filter(|&f| {
                        sd.profiles
                            .iter()
                            .all(|b| (c1 + f - b.threshold).max(0.0) <= b.surplus_cap + TOL * (1.0 + b.surplus_cap))
                    })
                    .collect()
            })
            .collect();
        let caps: Vec<(f64, f64)> = sd.profiles.iter().map(|b| (b.threshold, b.expected_cap)).collect();
        let Some((e, picks)) = Search::run(&vals, &m.weights, c1, need, &caps) else { continue };
        if e > sd.u_upper + TOL * (1.0 + sd.u_upper) {
            continue;
        }
        let mut costs: Vec<f64> = floors.iter().map(|f| f.as_ref().map_or(f64::NAN, |f| f.0)).collect();
        let mut blocks: Vec<Vec<f64>> = floors.iter().map(|f| f.as_ref().map_or(Vec::new(), |f| f.1.clone())).collect();
        costs[p] = e;
        let surplus = sd
            .profiles
            .iter()
            .map(|b| picks.iter().map(|f| (c1 + f - b.threshold).max(0.0)).collect())
            .collect();
        blocks[p] = picks;
        let sol = OracleSolution {
            objective: e,
            design: design.clone(),
            selected: Some(p),
            member_costs: costs,
            block_costs: blocks,
            surplus,
            designs_enumerated: 0,
            assignments_enumerated: 0,
        };
        if better(&sol, &best) {
            best = Some(sol);
        }
    }
    Ok((best, count))
}

/// Robust optimum with stochastic-dominance constraints on the selected member.
/// Returns `None` when no design admits a feasible selection.
pub fn oracle_sd(inst: &CddpInstance, data: &DroData, sd: &ResolvedSd, lim: &OracleLimits) -> Result<Option<OracleSolution>> {
    if data.members.len() > lim.max_members_sd {
        return Err(CddpError::TooLarge("too many members for the SD search".into()));
    }
    let designs = enumerate_designs(inst, lim)?;
    let evals = par::map(&designs, |d| sd_for_design(inst, data, sd, d, lim));
    let mut best: Option<OracleSolution> = None;
    let mut count = 0;
    for e in evals {
        let (sol, n) = e?;
        count += n;
        if let Some(sol) = sol {
            if better(&sol, &best) {
                best = Some(sol);
            }
        }
    }
    Ok(best.map(|mut b| {
        b.designs_enumerated = designs.len();
        b.assignments_enumerated = count;
        b
    }))
}

/// Per-block options of a cost search.
struct Search<'a> {
    values: &'a [Vec<f64>],
    weights: &'a [f64],
    c1: f64,
    floor: f64,
    /// (ι, s̿) pairs whose expected surplus is capped.
    caps: &'a [(f64, f64)],
    rest: Vec<f64>,
}

impl Search<'_> {
    fn surplus(&self, v: f64) -> Vec<f64> {
        self.caps.iter().map(|&(t, _)| (self.c1 + v - t).max(0.0)).collect()
    }

    fn fits(&self, acc: &[f64]) -> bool {
        acc.iter().zip(self.caps).all(|(s, &(_, cap))| *s <= cap + TOL * (1.0 + cap))
    }

    fn rec(&self, k: usize, e: f64, acc: &[f64], picks: &mut Vec<f64>, best: &mut Option<(f64, Vec<f64>)>) {
        let bound = best.as_ref().map_or(f64::INFINITY, |b| b.0);
        let n = self.values.len();
        if k + 1 == n {
            let w = self.weights[k];
            let vals = &self.values[k];
            let start = if w > 0.0 {
                vals.partition_point(|&v| e + w * v < self.floor - TOL * (1.0 + self.floor.abs()))
            } else if e < self.floor - TOL * (1.0 + self.floor.abs()) {
                return;
            } else {
                0
            };
            if let Some(&v) = vals.get(start) {
                let total = e + w * v;
                let add = self.surplus(v);
                let next: Vec<f64> = acc.iter().zip(&add).map(|(a, s)| a + w * s).collect();
                if total < bound && self.fits(&next) {
                    picks.push(v);
                    *best = Some((total, picks.clone()));
                    picks.pop();
                }
            }
            return;
        }
        for &v in &self.values[k] {
            let w = self.weights[k];
            let e2 = e + w * v;
            let bound = best.as_ref().map_or(f64::INFINITY, |b| b.0);
            if e2 + self.rest[k + 1] >= bound {
                break;
            }
            let add = self.surplus(v);
            let next: Vec<f64> = acc.iter().zip(&add).map(|(a, s)| a + w * s).collect();
            if !self.fits(&next) {
                break;
            }
            picks.push(v);
            self.rec(k + 1, e2, &next, picks, best);
            picks.pop();
        }
    }

    /// Smallest C1 + Σ w v with the total at least `floor` and every cap met.
    fn run(values: &[Vec<f64>], weights: &[f64], c1: f64, floor: f64, caps: &[(f64, f64)]) -> Option<(f64, Vec<f64>)> {
        if values.iter().any(Vec::is_empty) {
            return None;
        }
        let mut rest = vec![0.0; values.len() + 1];
        for k in (0..values.len()).rev() {
            rest[k] = rest[k + 1] + weights[k] * values[k][0];
        }
        let s = Search { values, weights, c1, floor, caps, rest };
        let mut best = None;
        s.rec(0, c1, &vec![0.0; caps.len()], &mut Vec::new(), &mut best);
        best
    }
}
