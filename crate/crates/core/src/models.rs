//! Builders for the deterministic equivalents, their split-variable forms
//! and the scenario-cluster submodels.
//!
//! Column names: doors are numbered from 1 with 0 for the outsourcing door,
//! members `p` and clusters `c` from 0, scenarios `w` by their nominal id.

use serde::{Deserialize, Serialize};

use cddp_milp::{solve_lp, MilpModel, ModelStats, Sense, SolveStatus, VarId};

use crate::ambiguity::AmbiguityMember;
use crate::error::{CddpError, Result};
use crate::instance::{derive_scenario_data, CddpInstance, ScenarioData};

/// Second-stage data of one ambiguity-set member.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemberData {
    pub id: usize,
    pub scenarios: Vec<ScenarioData>,
    /// w^ω aligned with `scenarios`.
    pub weights: Vec<f64>,
}

impl MemberData {
    pub fn expected(&self, f: &[f64]) -> f64 {
        self.weights.iter().zip(f).map(|(w, f)| w * f).sum()
    }
}

/// Model input: every member's derived scenarios.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DroData {
    pub members: Vec<MemberData>,
}

impl DroData {
    /// Derives each member's scenario data: its own volumes with the nominal disruptions.
    pub fn new(inst: &CddpInstance, members: &[AmbiguityMember]) -> Result<DroData> {
        if members.is_empty() {
            return Err(CddpError::Build("the ambiguity set is empty".into()));
        }
        let mut out = Vec::with_capacity(members.len());
        for m in members {
            if m.scenarios.is_empty() {
                return Err(CddpError::Build(format!("member {} has no scenarios", m.id)));
            }
            let scenarios = m
                .scenarios
                .iter()
                .zip(&m.xi)
                .map(|(&w, xi)| {
                    let sc = &inst.scenarios[w];
                    derive_scenario_data(inst, w, xi, &sc.d_strip, &sc.d_stack)
                })
                .collect::<Result<Vec<_>>>()?;
            out.push(MemberData { id: m.id, scenarios, weights: m.weights.clone() });
        }
        Ok(DroData { members: out })
    }

    pub fn num_blocks(&self) -> usize {
        self.members.iter().map(|m| m.scenarios.len()).sum()
    }

    /// Restriction to a subset of members, in the given order.
    pub fn subset(&self, members: &[usize]) -> DroData {
        DroData { members: members.iter().map(|&p| self.members[p].clone()).collect() }
    }
}

/// Installed level per door (`None` = not built).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct FirstStageDesign {
    pub strip: Vec<Option<usize>>,
    pub stack: Vec<Option<usize>>,
}

impl FirstStageDesign {
    pub fn closed(inst: &CddpInstance) -> FirstStageDesign {
        FirstStageDesign { strip: vec![None; inst.num_strip()], stack: vec![None; inst.num_stack()] }
    }

    /// C1 of the design.
    pub fn c1(&self, inst: &CddpInstance) -> f64 {
        let side = |levels: &[Option<usize>], doors: &[crate::instance::Door]| -> f64 {
            levels
                .iter()
                .zip(doors)
                .filter_map(|(k, d)| k.map(|k| d.capacity_levels[k].install_cost))
                .sum()
        };
        side(&self.strip, &inst.strip.doors) + side(&self.stack, &inst.stack.doors)
    }

    pub fn validate(&self, inst: &CddpInstance) -> Result<()> {
        for (name, levels, side) in [("strip", &self.strip, &inst.strip), ("stack", &self.stack, &inst.stack)] {
            if levels.len() != side.len() {
                return Err(CddpError::Build(format!("design has {} {name} doors, instance {}", levels.len(), side.len())));
            }
            for (i, k) in levels.iter().enumerate() {
                if let Some(k) = k {
                    if *k >= side.doors[i].capacity_levels.len() {
                        return Err(CddpError::Build(format!("{name} door {i} has no level {k}")));
                    }
                }
            }
            let open = levels.iter().filter(|k| k.is_some()).count();
            if open > side.max_doors {
                return Err(CddpError::Build(format!(
                    "design opens {open} {name} doors, more than the cap {}",
                    side.max_doors
                )));
            }
        }
        Ok(())
    }

    pub fn open_doors(&self) -> (usize, usize) {
        (self.strip.iter().flatten().count(), self.stack.iter().flatten().count())
    }
}

/// Stochastic-dominance policy profile (ι, s̄, s̿).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SdProfile {
    pub threshold: f64,
    pub surplus_cap: f64,
    pub expected_cap: f64,
}

/// User-facing SD configuration; `None` bounds take their defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SdConfig {
    pub profiles: Vec<SdProfile>,
    #[serde(default)]
    pub u_lower: Option<f64>,
    #[serde(default)]
    pub u_upper: Option<f64>,
    #[serde(default)]
    pub c_upper: Option<f64>,
}

impl SdConfig {
    /// A profile that never binds.
    pub fn slack() -> SdConfig {
        SdConfig {
            profiles: vec![SdProfile { threshold: 0.0, surplus_cap: f64::INFINITY, expected_cap: f64::INFINITY }],
            u_lower: None,
            u_upper: None,
            c_upper: None,
        }
    }

    pub fn single(threshold: f64, surplus_cap: f64, expected_cap: f64) -> SdConfig {
        SdConfig {
            profiles: vec![SdProfile { threshold, surplus_cap, expected_cap }],
            u_lower: None,
            u_upper: None,
            c_upper: None,
        }
    }

    /// Fills in u̲, ū, C̄ and clamps caps to C̄.
    pub fn resolve(&self, inst: &CddpInstance, data: &DroData) -> Result<ResolvedSd> {
        if self.profiles.is_empty() {
            return Err(CddpError::Config("at least one SD profile is required".into()));
        }
        let c1max = inst.strip.max_install_cost() + inst.stack.max_install_cost();
        let u_upper = match self.u_upper {
            Some(v) => v,
            None => {
                c1max
                    + data
                        .members
                        .iter()
                        .map(|m| {
                            let f: Vec<f64> = m.scenarios.iter().map(|s| s.all_outsourced_cost(inst)).collect();
                            m.expected(&f)
                        })
                        .fold(0.0, f64::max)
            }
        };
        let c_upper = match self.c_upper {
            Some(v) => v,
            None => {
                c1max
                    + data
                        .members
                        .iter()
                        .flat_map(|m| m.scenarios.iter().map(|s| s.all_outsourced_cost(inst)))
                        .fold(0.0, f64::max)
            }
        };
        let u_lower = match self.u_lower {
            Some(v) => v,
            None => default_u_lower(inst, data)?,
        };
        if u_lower > u_upper {
            return Err(CddpError::Config(format!("u_lower {u_lower} exceeds u_upper {u_upper}")));
        }
        let mut profiles = Vec::with_capacity(self.profiles.len());
        for (b, p) in self.profiles.iter().enumerate() {
            if !(p.threshold >= 0.0) || !(p.surplus_cap >= 0.0) || !(p.expected_cap >= 0.0) {
                return Err(CddpError::Config(format!("SD profile {b}: threshold and caps must be nonnegative")));
            }
            let surplus_cap = p.surplus_cap.min(c_upper);
            let expected_cap = p.expected_cap.min(surplus_cap);
            profiles.push(SdProfile { threshold: p.threshold, surplus_cap, expected_cap });
        }
        Ok(ResolvedSd { profiles, u_lower, u_upper, c_upper })
    }
}

/// SD data with every bound fixed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResolvedSd {
    pub profiles: Vec<SdProfile>,
    pub u_lower: f64,
    pub u_upper: f64,
    pub c_upper: f64,
}

/// Smallest LP-relaxation value of the single-member models, a lower bound
/// on C1 plus any member's expected cost under any design.
pub fn default_u_lower(inst: &CddpInstance, data: &DroData) -> Result<f64> {
    let mut best = f64::INFINITY;
    for p in 0..data.members.len() {
        let built = build_lip_rn(inst, &data.subset(&[p]))?;
        let sol = solve_lp(&built.model);
        match sol.status {
            SolveStatus::Optimal => best = best.min(sol.objective.unwrap_or(0.0)),
            s => return Err(CddpError::Build(format!("LP relaxation for u_lower ended {s:?}"))),
        }
    }
    Ok(best.max(0.0))
}

/// A cluster of one member's scenarios.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cluster {
    /// Member position in the data.
    pub member: usize,
    /// Positions in the member's scenario list, ascending.
    pub positions: Vec<usize>,
    /// w̃^c.
    pub weight: f64,
    /// w̃^ω = w^ω / w̃^c, aligned with `positions`.
    pub inner: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterScheme {
    /// All clusters in member order.
    pub clusters: Vec<Cluster>,
    /// Cluster indices of each member.
    pub by_member: Vec<Vec<usize>>,
}

impl ClusterScheme {
    /// Contiguous blocks of each member's scenario list, earlier blocks larger
    /// by one when the split is uneven. Members with fewer scenarios than
    /// `per_member` get one cluster per scenario.
    pub fn contiguous(data: &DroData, per_member: usize) -> Result<ClusterScheme> {
        if per_member == 0 {
            return Err(CddpError::Config("clusters per member must be at least 1".into()));
        }
        let mut clusters = Vec::new();
        let mut by_member = Vec::new();
        for (p, m) in data.members.iter().enumerate() {
            let n = m.scenarios.len();
            let k = per_member.min(n);
            let mut ids = Vec::new();
            let mut start = 0;
            for c in 0..k {
                let len = n / k + usize::from(c < n % k);
                let positions: Vec<usize> = (start..start + len).collect();
                start += len;
                let weight: f64 = positions.iter().map(|&i| m.weights[i]).sum();
                let inner = if weight > 0.0 {
                    positions.iter().map(|&i| m.weights[i] / weight).collect()
                } else {
                    vec![1.0 / len as f64; len]
                };
                ids.push(clusters.len());
                clusters.push(Cluster { member: p, positions, weight, inner });
            }
            by_member.push(ids);
        }
        Ok(ClusterScheme { clusters, by_member })
    }

    pub fn len(&self) -> usize {
        self.clusters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clusters.is_empty()
    }

    /// n(c), circular over all clusters.
    pub fn next(&self, c: usize) -> usize {
        (c + 1) % self.clusters.len()
    }

    /// a(c), circular over all clusters.
    pub fn ancestor(&self, c: usize) -> usize {
        (c + self.clusters.len() - 1) % self.clusters.len()
    }

    /// Successor of c inside its own member's clusters.
    pub fn next_in_member(&self, c: usize) -> usize {
        let ids = &self.by_member[self.clusters[c].member];
        let k = ids.iter().position(|&x| x == c).unwrap();
        ids[(k + 1) % ids.len()]
    }

    /// Ancestor of c inside its own member's clusters.
    pub fn ancestor_in_member(&self, c: usize) -> usize {
        let ids = &self.by_member[self.clusters[c].member];
        let k = ids.iter().position(|&x| x == c).unwrap();
        ids[(k + ids.len() - 1) % ids.len()]
    }

    pub fn validate(&self, data: &DroData) -> Result<()> {
        if self.by_member.len() != data.members.len() {
            return Err(CddpError::Build("cluster scheme and ambiguity set have different members".into()));
        }
        for (p, ids) in self.by_member.iter().enumerate() {
            let mut seen: Vec<usize> = ids.iter().flat_map(|&c| self.clusters[c].positions.clone()).collect();
            seen.sort_unstable();
            if ids.is_empty() || seen != (0..data.members[p].scenarios.len()).collect::<Vec<_>>() {
                return Err(CddpError::Build(format!("clusters of member {p} do not partition its scenarios")));
            }
            if ids.iter().any(|&c| self.clusters[c].member != p) {
                return Err(CddpError::Build(format!("cluster listed under the wrong member {p}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Rn,
    Sd,
}

impl std::str::FromStr for Variant {
    type Err = CddpError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rn" | "RN" => Ok(Variant::Rn),
            "sd" | "SD" => Ok(Variant::Sd),
            _ => Err(CddpError::Config(format!("model must be rn or sd, got `{s}`"))),
        }
    }
}

/// Treatment of γ^c in an SD cluster submodel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GammaMode {
    /// γ^c is a free binary (the relaxation as displayed).
    Free,
    /// γ^c is fixed to 1: the cluster's member is the selected one.
    Selected,
}

/// First-stage columns of one copy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FirstStageVars {
    /// α[k,i] per strip door and level.
    pub alpha: Vec<Vec<VarId>>,
    /// β[k,j] per stack door and level.
    pub beta: Vec<Vec<VarId>>,
    pub c1: VarId,
}

impl FirstStageVars {
    pub fn design(&self, values: &[f64]) -> FirstStageDesign {
        let pick = |levels: &Vec<Vec<VarId>>| {
            levels.iter().map(|ks| ks.iter().position(|v| values[v.0] > 0.5)).collect()
        };
        FirstStageDesign { strip: pick(&self.alpha), stack: pick(&self.beta) }
    }
}

/// Where a scenario block lives in a model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlockRef {
    pub member: usize,
    pub position: usize,
    pub f: VarId,
    /// C12 column in SD models.
    pub c12: Option<VarId>,
    /// C12,p column in SD models.
    pub c12p: Option<VarId>,
}

/// Surplus column s^{ω,b}.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurplusRef {
    pub member: usize,
    pub position: usize,
    pub profile: usize,
    pub var: VarId,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Layout {
    /// One entry per first-stage copy (a single one for undecomposed models).
    pub first_stage: Vec<FirstStageVars>,
    /// u, or u^c per cluster.
    pub u: Vec<VarId>,
    /// Column minimized by the model.
    pub objective: Option<VarId>,
    pub blocks: Vec<BlockRef>,
    /// γ_p per member, or γ^c per cluster.
    pub gamma: Vec<VarId>,
    pub surplus: Vec<SurplusRef>,
    /// Cluster cost columns C1^c + Σ w̃^ω F^ω (Lagrangean submodels).
    #[serde(default)]
    pub cost: Vec<VarId>,
    /// u_c columns (Lagrangean SD submodels).
    #[serde(default)]
    pub u_sel: Vec<VarId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BuiltModel {
    pub model: MilpModel,
    pub layout: Layout,
}

impl BuiltModel {
    pub fn stats(&self) -> ModelStats {
        self.model.stats()
    }

    /// F^ω of every block as `(member, position, value)`.
    pub fn block_costs(&self, values: &[f64]) -> Vec<(usize, usize, f64)> {
        self.layout.blocks.iter().map(|b| (b.member, b.position, values[b.f.0])).collect()
    }
}

struct Builder<'a> {
    inst: &'a CddpInstance,
    model: MilpModel,
    hint: Vec<(VarId, f64)>,
    layout: Layout,
}

fn door(i: Option<usize>) -> usize {
    i.map_or(0, |i| i + 1)
}

impl<'a> Builder<'a> {
    fn new(inst: &'a CddpInstance, name: &str) -> Self {
        Builder { inst, model: MilpModel::new(name), hint: Vec::new(), layout: Layout::default() }
    }

    fn bin(&mut self, name: String, hint: f64) -> Result<VarId> {
        let v = self.model.binary(name)?;
        self.hint.push((v, hint));
        Ok(v)
    }

    fn cont(&mut self, name: String, lb: f64, ub: f64, hint: f64) -> Result<VarId> {
        let v = self.model.continuous(name, lb, ub)?;
        self.hint.push((v, hint));
        Ok(v)
    }

    fn row(&mut self, name: String, terms: Vec<(VarId, f64)>, sense: Sense, rhs: f64) -> Result<()> {
        self.model.add_row(name, terms, sense, rhs)?;
        Ok(())
    }

    /// α, β, C1 and the rows of the first stage; `sfx` tags a copy.
    fn first_stage(&mut self, sfx: &str) -> Result<FirstStageVars> {
        let inst = self.inst;
        let mut c1_terms = Vec::new();
        let mut sides = Vec::new();
        for (sym, side) in [("alpha", &inst.strip), ("beta", &inst.stack)] {
            let mut vars = Vec::with_capacity(side.len());
            let mut all = Vec::new();
            for (i, d) in side.doors.iter().enumerate() {
                let mut ks = Vec::with_capacity(d.capacity_levels.len());
                for (k, l) in d.capacity_levels.iter().enumerate() {
                    let v = self.bin(format!("{sym}[{k},{}{sfx}]", i + 1), 0.0)?;
                    c1_terms.push((v, -l.install_cost));
                    ks.push(v);
                    all.push((v, 1.0));
                }
                if ks.len() > 1 {
                    self.row(format!("one_level_{sym}[{}{sfx}]", i + 1), ks.iter().map(|&v| (v, 1.0)).collect(), Sense::Le, 1.0)?;
                }
                vars.push(ks);
            }
            if side.max_doors < side.len() {
                self.row(format!("max_doors_{sym}[{}]", sfx.trim_start_matches(',')), all, Sense::Le, side.max_doors as f64)?;
            }
            sides.push(vars);
        }
        let c1 = self.cont(format!("C1[{}]", sfx.trim_start_matches(',')), 0.0, f64::INFINITY, 0.0)?;
        c1_terms.push((c1, 1.0));
        self.row(format!("C1_def[{}]", sfx.trim_start_matches(',')), c1_terms, Sense::Eq, 0.0)?;
        let beta = sides.pop().unwrap();
        let alpha = sides.pop().unwrap();
        Ok(FirstStageVars { alpha, beta, c1 })
    }

    /// The second-stage block of one scenario tied to the first-stage copy `fs`.
    /// Returns the F^ω column and its value at the all-outsourcing hint.
    fn block(&mut self, sd: &ScenarioData, fs: &FirstStageVars, tag: &str) -> Result<(VarId, f64)> {
        let inst = self.inst;
        let f0 = inst.outsourcing_penalty;
        let has_o = !sd.origins.is_empty();
        let has_d = !sd.destinations.is_empty();
        let a0 = self.bin(format!("a0[{tag}]"), f64::from(u8::from(has_o)))?;
        let b0 = self.bin(format!("b0[{tag}]"), f64::from(u8::from(has_d)))?;
        // x options per origin, outsourcing first.
        let mut xs: Vec<Vec<(Option<usize>, VarId)>> = vec![Vec::new(); inst.num_origins];
        for &m in &sd.origins {
            let mut opts = vec![(None, self.bin(format!("x[{m},0,{tag}]"), 1.0)?)];
            for &i in &sd.strip_accept[m] {
                opts.push((Some(i), self.bin(format!("x[{m},{},{tag}]", i + 1), 0.0)?));
            }
            self.row(format!("assign_x[{m},{tag}]"), opts.iter().map(|o| (o.1, 1.0)).collect(), Sense::Eq, 1.0)?;
            self.row(format!("out_x[{m},{tag}]"), vec![(opts[0].1, 1.0), (a0, -1.0)], Sense::Le, 0.0)?;
            xs[m] = opts;
        }
        let mut ys: Vec<Vec<(Option<usize>, VarId)>> = vec![Vec::new(); inst.num_destinations];
        for &n in &sd.destinations {
            let mut opts = vec![(None, self.bin(format!("y[{n},0,{tag}]"), 1.0)?)];
            for &j in &sd.stack_accept[n] {
                opts.push((Some(j), self.bin(format!("y[{n},{},{tag}]", j + 1), 0.0)?));
            }
            self.row(format!("assign_y[{n},{tag}]"), opts.iter().map(|o| (o.1, 1.0)).collect(), Sense::Eq, 1.0)?;
            self.row(format!("out_y[{n},{tag}]"), vec![(opts[0].1, 1.0), (b0, -1.0)], Sense::Le, 0.0)?;
            ys[n] = opts;
        }
        for (sym, side, opts, vol, disr, alpha) in [
            ("strip", &inst.strip, &xs, &sd.s, &sd.d_strip, &fs.alpha),
            ("stack", &inst.stack, &ys, &sd.r, &sd.d_stack, &fs.beta),
        ] {
            for (i, d) in side.doors.iter().enumerate() {
                let mut terms: Vec<(VarId, f64)> = Vec::new();
                for (node, o) in opts.iter().enumerate() {
                    for &(door_opt, v) in o {
                        if door_opt == Some(i) {
                            terms.push((v, vol[node]));
                        }
                    }
                }
                if terms.is_empty() {
                    continue;
                }
                for (k, l) in d.capacity_levels.iter().enumerate() {
                    terms.push((alpha[i][k], -(1.0 - disr[i]) * l.nominal_capacity));
                }
                self.row(format!("cap_{sym}[{},{tag}]", i + 1), terms, Sense::Le, 0.0)?;
            }
        }
        let mut f_terms: Vec<(VarId, f64)> = vec![(a0, -f0), (b0, -f0)];
        for &(m, n, h) in &sd.cells {
            let mut grid: Vec<Vec<VarId>> = Vec::with_capacity(xs[m].len());
            for &(i, _) in &xs[m] {
                let mut row = Vec::with_capacity(ys[n].len());
                for &(j, _) in &ys[n] {
                    let hint = if i.is_none() && j.is_none() { 1.0 } else { 0.0 };
                    let v = self.cont(format!("v[{m},{},{n},{},{tag}]", door(i), door(j)), 0.0, 1.0, hint)?;
                    f_terms.push((v, -sd.g(inst, h, i, j)));
                    row.push(v);
                }
                grid.push(row);
            }
            for (a, &(i, x)) in xs[m].iter().enumerate() {
                let mut t: Vec<(VarId, f64)> = grid[a].iter().map(|&v| (v, 1.0)).collect();
                t.push((x, -1.0));
                self.row(format!("vx[{m},{},{n},{tag}]", door(i)), t, Sense::Eq, 0.0)?;
            }
            for (b, &(j, y)) in ys[n].iter().enumerate() {
                let mut t: Vec<(VarId, f64)> = grid.iter().map(|r| (r[b], 1.0)).collect();
                t.push((y, -1.0));
                self.row(format!("vy[{m},{n},{},{tag}]", door(j)), t, Sense::Eq, 0.0)?;
            }
        }
        let hint_f = f0 * (f64::from(u8::from(has_o)) + f64::from(u8::from(has_d))) + 2.0 * f0 * sd.cells.len() as f64;
        let f = self.cont(format!("F[{tag}]"), 0.0, f64::INFINITY, hint_f)?;
        f_terms.push((f, 1.0));
        self.row(format!("F_def[{tag}]"), f_terms, Sense::Eq, 0.0)?;
        Ok((f, hint_f))
    }

    fn finish(self, objective: VarId) -> BuiltModel {
        let mut b = self.finish_terms(&[(objective, 1.0)]);
        b.layout.objective = Some(objective);
        b
    }

    fn finish_terms(mut self, objective: &[(VarId, f64)]) -> BuiltModel {
        for &(v, c) in objective {
            self.model.set_obj(v, c);
        }
        let mut hint = vec![0.0; self.model.num_vars()];
        for (v, x) in &self.hint {
            hint[v.0] = *x;
        }
        self.model.set_hint(hint);
        BuiltModel { model: self.model, layout: self.layout }
    }

    fn set_hint(&mut self, v: VarId, x: f64) {
        if let Some(e) = self.hint.iter_mut().rev().find(|e| e.0 == v) {
            e.1 = x;
        }
    }
}

fn check_members(data: &DroData) -> Result<()> {
    if data.members.is_empty() {
        return Err(CddpError::Build("the ambiguity set is empty".into()));
    }
    for (p, m) in data.members.iter().enumerate() {
        if m.scenarios.is_empty() {
            return Err(CddpError::Build(format!("member {p} has no scenarios")));
        }
        if m.weights.len() != m.scenarios.len() {
            return Err(CddpError::Build(format!("member {p}: one weight per scenario is required")));
        }
    }
    Ok(())
}

/// Per-member expected cost at the all-outsourcing point.
fn hint_expectations(inst: &CddpInstance, data: &DroData) -> Vec<f64> {
    data.members
        .iter()
        .map(|m| {
            let f: Vec<f64> = m.scenarios.iter().map(|s| s.all_outsourced_cost(inst)).collect();
            m.expected(&f)
        })
        .collect()
}

/// Robust risk-neutral model: min u s.t. C1 + Σ w F ≤ u for every member.
pub fn build_lip_rn(inst: &CddpInstance, data: &DroData) -> Result<BuiltModel> {
    check_members(data)?;
    let mut b = Builder::new(inst, "LIP-RN");
    let fs = b.first_stage("")?;
    let hint_u = hint_expectations(inst, data).into_iter().fold(0.0, f64::max);
    let u = b.cont("u".into(), 0.0, f64::INFINITY, hint_u)?;
    let mut links = Vec::new();
    for (p, m) in data.members.iter().enumerate() {
        let mut terms = vec![(fs.c1, 1.0), (u, -1.0)];
        for (k, sd) in m.scenarios.iter().enumerate() {
            let (f, _) = b.block(sd, &fs, &format!("p{p},w{}", sd.id))?;
            terms.push((f, m.weights[k]));
            b.layout.blocks.push(BlockRef { member: p, position: k, f, c12: None, c12p: None });
        }
        links.push(terms);
    }
    for (p, terms) in links.into_iter().enumerate() {
        b.row(format!("link[{p}]"), terms, Sense::Le, 0.0)?;
    }
    b.layout.first_stage.push(fs);
    b.layout.u.push(u);
    Ok(b.finish(u))
}

/// Adds C12, C12,p, surplus and Fortet rows for one block.
#[allow(clippy::too_many_arguments)]
fn sd_block_rows(
    b: &mut Builder,
    sd: &ResolvedSd,
    c1: VarId,
    f: VarId,
    gamma: VarId,
    tag: &str,
    member: usize,
    position: usize,
    hint: (f64, bool),
) -> Result<(VarId, VarId)> {
    let (c12_hint, selected) = hint;
    let cbar = sd.c_upper;
    let c12 = b.cont(format!("C12[{tag}]"), 0.0, f64::INFINITY, c12_hint)?;
    let c12p_hint = if selected { c12_hint } else { 0.0 };
    let c12p = b.cont(format!("C12p[{tag}]"), 0.0, cbar, c12p_hint)?;
    b.row(format!("C12_def[{tag}]"), vec![(c12, 1.0), (c1, -1.0), (f, -1.0)], Sense::Eq, 0.0)?;
    for (k, prof) in sd.profiles.iter().enumerate() {
        let s_hint = (c12p_hint - prof.threshold).max(0.0);
        let s = b.cont(format!("s[{tag},b{k}]"), 0.0, prof.surplus_cap, s_hint)?;
        b.row(format!("surplus[{tag},b{k}]"), vec![(c12p, 1.0), (s, -1.0)], Sense::Le, prof.threshold)?;
        b.layout.surplus.push(SurplusRef { member, position, profile: k, var: s });
    }
    b.row(format!("fortet_c1[{tag}]"), vec![(c12p, 1.0), (gamma, -cbar)], Sense::Le, 0.0)?;
    b.row(format!("fortet_c2[{tag}]"), vec![(c12p, 1.0), (c12, -1.0)], Sense::Le, 0.0)?;
    b.row(format!("fortet_c3[{tag}]"), vec![(c12, 1.0), (c12p, -1.0), (gamma, cbar)], Sense::Le, cbar)?;
    Ok((c12, c12p))
}

/// Expected-surplus rows Σ w s ≤ s̿ of one member.
fn expected_surplus_rows(b: &mut Builder, sd: &ResolvedSd, p: usize, weights: &[f64], label: &str) -> Result<()> {
    for (k, prof) in sd.profiles.iter().enumerate() {
        let terms: Vec<(VarId, f64)> = b
            .layout
            .surplus
            .iter()
            .filter(|s| s.member == p && s.profile == k)
            .map(|s| (s.var, weights[s.position]))
            .collect();
        b.row(format!("esurplus[{label}{p},b{k}]"), terms, Sense::Le, prof.expected_cap)?;
    }
    Ok(())
}

/// Robust model with stochastic-dominance constraints on the selected member.
pub fn build_lip_sd(inst: &CddpInstance, data: &DroData, sd: &ResolvedSd) -> Result<BuiltModel> {
    check_members(data)?;
    if sd.u_lower > sd.u_upper {
        return Err(CddpError::Config("u_lower exceeds u_upper".into()));
    }
    let mut b = Builder::new(inst, "LIP-SD");
    let fs = b.first_stage("")?;
    let expect = hint_expectations(inst, data);
    let hint_u = expect.iter().cloned().fold(0.0, f64::max);
    let chosen = expect.iter().position(|&e| e == hint_u).unwrap_or(0);
    let u = b.cont("u".into(), 0.0, f64::INFINITY, hint_u)?;
    let mut s1 = Vec::new();
    for (p, m) in data.members.iter().enumerate() {
        let sel = p == chosen;
        let gamma = b.bin(format!("gamma[{p}]"), f64::from(u8::from(sel)))?;
        let up = b.cont(format!("up[{p}]"), 0.0, sd.u_upper, if sel { hint_u } else { 0.0 })?;
        s1.push((gamma, 1.0));
        let mut cost = vec![(fs.c1, 1.0)];
        for (k, scen) in m.scenarios.iter().enumerate() {
            let tag = format!("p{p},w{}", scen.id);
            let (f, hf) = b.block(scen, &fs, &tag)?;
            cost.push((f, m.weights[k]));
            let (c12, c12p) = sd_block_rows(&mut b, sd, fs.c1, f, gamma, &tag, p, k, (hf, sel))?;
            b.layout.blocks.push(BlockRef { member: p, position: k, f, c12: Some(c12), c12p: Some(c12p) });
        }
        expected_surplus_rows(&mut b, sd, p, &m.weights, "p")?;
        let mut low: Vec<(VarId, f64)> = cost.iter().map(|&(v, a)| (v, -a)).collect();
        low.push((up, 1.0));
        low.push((gamma, -sd.u_lower));
        b.row(format!("link_low[{p}]"), low, Sense::Le, -sd.u_lower)?;
        let mut high = cost;
        high.push((u, -1.0));
        b.row(format!("link[{p}]"), high, Sense::Le, 0.0)?;
        b.row(format!("fortet_u1[{p}]"), vec![(up, 1.0), (gamma, -sd.u_upper)], Sense::Le, 0.0)?;
        b.row(format!("fortet_u2[{p}]"), vec![(up, 1.0), (u, -1.0)], Sense::Le, 0.0)?;
        b.row(format!("fortet_u3[{p}]"), vec![(u, 1.0), (up, -1.0), (gamma, sd.u_upper)], Sense::Le, sd.u_upper)?;
        b.layout.gamma.push(gamma);
    }
    b.row("s1".into(), s1, Sense::Eq, 1.0)?;
    b.layout.first_stage.push(fs);
    b.layout.u.push(u);
    Ok(b.finish(u))
}

/// Circular split rows x^c − x^{n(c)} ≤ 0 over paired columns.
fn cycle_rows(b: &mut Builder, name: &str, cols: &[Vec<VarId>], next: impl Fn(usize) -> usize) -> Result<()> {
    for c in 0..cols.len() {
        let n = next(c);
        if n == c {
            continue;
        }
        for (k, (&a, &z)) in cols[c].iter().zip(&cols[n]).enumerate() {
            b.row(format!("svc_{name}[{k},c{c}]"), vec![(a, 1.0), (z, -1.0)], Sense::Le, 0.0)?;
        }
    }
    Ok(())
}

fn flat_first_stage(fs: &FirstStageVars) -> (Vec<VarId>, Vec<VarId>) {
    (fs.alpha.iter().flatten().copied().collect(), fs.beta.iter().flatten().copied().collect())
}

/// Split-variable model: one first-stage copy and one u per cluster, tied by
/// circular inequalities.
pub fn build_svc_model(
    variant: Variant,
    inst: &CddpInstance,
    data: &DroData,
    scheme: &ClusterScheme,
    sd: Option<&ResolvedSd>,
) -> Result<BuiltModel> {
    check_members(data)?;
    scheme.validate(data)?;
    let sd = match (variant, sd) {
        (Variant::Sd, Some(s)) => Some(s),
        (Variant::Sd, None) => return Err(CddpError::Build("SD model needs an SD configuration".into())),
        (Variant::Rn, _) => None,
    };
    let mut b = Builder::new(inst, if sd.is_some() { "SVC-SD" } else { "SVC-RN" });
    let expect = hint_expectations(inst, data);
    let hint_u = expect.iter().cloned().fold(0.0, f64::max);
    let chosen = expect.iter().position(|&e| e == hint_u).unwrap_or(0);
    let mut fss = Vec::with_capacity(scheme.len());
    let mut us = Vec::with_capacity(scheme.len());
    for c in 0..scheme.len() {
        fss.push(b.first_stage(&format!(",c{c}"))?);
        us.push(b.cont(format!("u[c{c}]"), 0.0, f64::INFINITY, hint_u)?);
    }
    let cbar = 0;
    let mut gammas = Vec::new();
    let mut ucs = Vec::new();
    if let Some(sd) = sd {
        for (c, cl) in scheme.clusters.iter().enumerate() {
            let sel = cl.member == chosen;
            gammas.push(b.bin(format!("gamma[c{c}]"), f64::from(u8::from(sel)))?);
            ucs.push(b.cont(format!("uc[c{c}]"), 0.0, sd.u_upper, if sel { hint_u } else { 0.0 })?);
        }
    }
    // Blocks, with member costs Σ w^ω F^ω collected across clusters.
    let mut cost: Vec<Vec<(VarId, f64)>> = vec![Vec::new(); data.members.len()];
    for (c, cl) in scheme.clusters.iter().enumerate() {
        let m = &data.members[cl.member];
        for &k in &cl.positions {
            let scen = &m.scenarios[k];
            let tag = format!("p{},w{},c{c}", cl.member, scen.id);
            let (f, hf) = b.block(scen, &fss[c], &tag)?;
            cost[cl.member].push((f, m.weights[k]));
            let (c12, c12p) = match sd {
                Some(sd) => {
                    let sel = cl.member == chosen;
                    let (a, z) = sd_block_rows(&mut b, sd, fss[c].c1, f, gammas[c], &tag, cl.member, k, (hf, sel))?;
                    (Some(a), Some(z))
                }
                None => (None, None),
            };
            b.layout.blocks.push(BlockRef { member: cl.member, position: k, f, c12, c12p });
        }
    }
    for (p, terms) in cost.iter().enumerate() {
        let mut high = terms.clone();
        high.push((fss[cbar].c1, 1.0));
        high.push((us[cbar], -1.0));
        b.row(format!("link[{p}]"), high, Sense::Le, 0.0)?;
        if let Some(sd) = sd {
            expected_surplus_rows(&mut b, sd, p, &data.members[p].weights, "p")?;
            for &c in &scheme.by_member[p] {
                let mut low: Vec<(VarId, f64)> = terms.iter().map(|&(v, a)| (v, -a)).collect();
                low.push((fss[cbar].c1, -1.0));
                low.push((ucs[c], 1.0));
                low.push((gammas[c], -sd.u_lower));
                b.row(format!("link_low[c{c}]"), low, Sense::Le, -sd.u_lower)?;
                b.row(format!("fortet_u1[c{c}]"), vec![(ucs[c], 1.0), (gammas[c], -sd.u_upper)], Sense::Le, 0.0)?;
                b.row(format!("fortet_u2[c{c}]"), vec![(ucs[c], 1.0), (us[c], -1.0)], Sense::Le, 0.0)?;
                b.row(
                    format!("fortet_u3[c{c}]"),
                    vec![(us[c], 1.0), (ucs[c], -1.0), (gammas[c], sd.u_upper)],
                    Sense::Le,
                    sd.u_upper,
                )?;
            }
        }
    }
    if sd.is_some() {
        let s1 = scheme.by_member.iter().map(|ids| (gammas[ids[0]], 1.0)).collect();
        b.row("s1".into(), s1, Sense::Eq, 1.0)?;
        let g: Vec<Vec<VarId>> = gammas.iter().map(|&g| vec![g]).collect();
        cycle_rows(&mut b, "gamma", &g, |c| scheme.next_in_member(c))?;
    }
    let (alphas, betas): (Vec<_>, Vec<_>) = fss.iter().map(flat_first_stage).unzip();
    cycle_rows(&mut b, "alpha", &alphas, |c| scheme.next(c))?;
    cycle_rows(&mut b, "beta", &betas, |c| scheme.next(c))?;
    let uu: Vec<Vec<VarId>> = us.iter().map(|&u| vec![u]).collect();
    cycle_rows(&mut b, "u", &uu, |c| scheme.next(c))?;
    b.layout.first_stage = fss;
    b.layout.u = us.clone();
    b.layout.gamma = gammas;
    Ok(b.finish(us[cbar]))
}

/// Options of an SD cluster submodel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SdSubmodel {
    pub gamma: GammaMode,
    /// Floor on the cluster's cost C1^c + Σ w̃^ω F^ω.
    pub floor: f64,
}

/// Submodel of cluster `c` with the split rows relaxed.
pub fn build_scd_submodel(
    inst: &CddpInstance,
    data: &DroData,
    scheme: &ClusterScheme,
    c: usize,
    sd: Option<(&ResolvedSd, SdSubmodel)>,
) -> Result<BuiltModel> {
    let cl = scheme.clusters.get(c).ok_or_else(|| CddpError::Build(format!("no cluster {c}")))?;
    if cl.positions.is_empty() {
        return Err(CddpError::Build(format!("cluster {c} is empty")));
    }
    let m = &data.members[cl.member];
    let name = if sd.is_some() { format!("SCD-SD[c{c}]") } else { format!("SCD-RN[c{c}]") };
    let mut b = Builder::new(inst, &name);
    let fs = b.first_stage(&format!(",c{c}"))?;
    let mut cost = vec![(fs.c1, 1.0)];
    let mut hint_u = 0.0;
    let mut blocks = Vec::new();
    for (&k, &w) in cl.positions.iter().zip(&cl.inner) {
        let scen = &m.scenarios[k];
        let tag = format!("p{},w{},c{c}", cl.member, scen.id);
        let (f, hf) = b.block(scen, &fs, &tag)?;
        hint_u += w * hf;
        cost.push((f, w));
        blocks.push((k, f, tag, hf));
    }
    let u = b.cont(format!("u[c{c}]"), 0.0, f64::INFINITY, hint_u)?;
    let mut high = cost.clone();
    high.push((u, -1.0));
    b.row(format!("link[c{c}]"), high, Sense::Le, 0.0)?;
    if let Some((sd, opts)) = sd {
        b.row(format!("floor[c{c}]"), cost, Sense::Ge, opts.floor)?;
        let selected = opts.gamma == GammaMode::Selected;
        let gamma = b.bin(format!("gamma[c{c}]"), f64::from(u8::from(selected)))?;
        if selected {
            b.model.fix(gamma, 1.0);
        }
        for (k, f, tag, hf) in blocks {
            let (c12, c12p) = sd_block_rows(&mut b, sd, fs.c1, f, gamma, &tag, cl.member, k, (hf, selected))?;
            b.layout.blocks.push(BlockRef { member: cl.member, position: k, f, c12: Some(c12), c12p: Some(c12p) });
        }
        b.layout.gamma.push(gamma);
    } else {
        for (k, f, _, _) in blocks {
            b.layout.blocks.push(BlockRef { member: cl.member, position: k, f, c12: None, c12p: None });
        }
    }
    b.set_hint(u, hint_u);
    b.layout.first_stage.push(fs);
    b.layout.u.push(u);
    Ok(b.finish(u))
}

/// Objective coefficients of a Lagrangean cluster submodel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LdObjective {
    /// Per strip door and level.
    pub alpha: Vec<Vec<f64>>,
    pub beta: Vec<Vec<f64>>,
    /// On the cluster cost C1^c + Σ w̃^ω F^ω.
    pub cost: f64,
    /// On the copy u^c.
    pub u: f64,
    /// SD only: on u_c, on γ^c, and per profile on Σ w̃^ω s^{ω,b}.
    pub u_sel: f64,
    pub gamma: f64,
    pub surplus: Vec<f64>,
}

/// Cluster submodel of the Lagrangean decomposition. The RN form has the
/// cluster blocks, a cost column and a free copy u^c ≥ 0; the SD form adds
/// γ^c, u_c with its Fortet rows and the per-scenario SD rows, with
/// u^c, u_c ≤ ū.
pub fn build_ld_submodel(
    inst: &CddpInstance,
    data: &DroData,
    scheme: &ClusterScheme,
    c: usize,
    sd: Option<&ResolvedSd>,
    obj: &LdObjective,
) -> Result<BuiltModel> {
    let cl = scheme.clusters.get(c).ok_or_else(|| CddpError::Build(format!("no cluster {c}")))?;
    let m = &data.members[cl.member];
    let mut b = Builder::new(inst, &format!("LD[c{c}]"));
    let fs = b.first_stage(&format!(",c{c}"))?;
    let mut cost_terms = vec![(fs.c1, -1.0)];
    let mut hint_cost = 0.0;
    let mut blocks = Vec::new();
    for (&k, &w) in cl.positions.iter().zip(&cl.inner) {
        let scen = &m.scenarios[k];
        let tag = format!("p{},w{},c{c}", cl.member, scen.id);
        let (f, hf) = b.block(scen, &fs, &tag)?;
        hint_cost += w * hf;
        cost_terms.push((f, -w));
        blocks.push((k, f, tag, hf));
    }
    let cost = b.cont(format!("cost[c{c}]"), 0.0, f64::INFINITY, hint_cost)?;
    cost_terms.push((cost, 1.0));
    b.row(format!("cost_def[c{c}]"), cost_terms, Sense::Eq, 0.0)?;
    let u_ub = sd.map_or(f64::INFINITY, |s| s.u_upper);
    let u = b.cont(format!("u[c{c}]"), 0.0, u_ub, 0.0)?;
    let mut terms = vec![(cost, obj.cost), (u, obj.u)];
    if let Some(sd) = sd {
        let gamma = b.bin(format!("gamma[c{c}]"), 0.0)?;
        let uc = b.cont(format!("uc[c{c}]"), 0.0, sd.u_upper, 0.0)?;
        b.row(format!("fortet_u1[c{c}]"), vec![(uc, 1.0), (gamma, -sd.u_upper)], Sense::Le, 0.0)?;
        b.row(format!("fortet_u2[c{c}]"), vec![(uc, 1.0), (u, -1.0)], Sense::Le, 0.0)?;
        b.row(format!("fortet_u3[c{c}]"), vec![(u, 1.0), (uc, -1.0), (gamma, sd.u_upper)], Sense::Le, sd.u_upper)?;
        for (k, f, tag, hf) in blocks {
            let (c12, c12p) = sd_block_rows(&mut b, sd, fs.c1, f, gamma, &tag, cl.member, k, (hf, false))?;
            b.layout.blocks.push(BlockRef { member: cl.member, position: k, f, c12: Some(c12), c12p: Some(c12p) });
        }
        let pos_weight = |k: usize| cl.positions.iter().position(|&x| x == k).map_or(0.0, |i| cl.inner[i]);
        for s in &b.layout.surplus {
            if let Some(&coef) = obj.surplus.get(s.profile) {
                terms.push((s.var, coef * pos_weight(s.position)));
            }
        }
        terms.push((uc, obj.u_sel));
        terms.push((gamma, obj.gamma));
        b.layout.gamma.push(gamma);
        b.layout.u_sel.push(uc);
    } else {
        for (k, f, _, _) in blocks {
            b.layout.blocks.push(BlockRef { member: cl.member, position: k, f, c12: None, c12p: None });
        }
    }
    for (levels, coefs) in [(&fs.alpha, &obj.alpha), (&fs.beta, &obj.beta)] {
        for (i, ks) in levels.iter().enumerate() {
            for (k, &v) in ks.iter().enumerate() {
                terms.push((v, coefs[i][k]));
            }
        }
    }
    b.layout.first_stage.push(fs);
    b.layout.u.push(u);
    b.layout.cost.push(cost);
    Ok(b.finish_terms(&terms))
}

/// Pins every first-stage copy of a built model to `design`.
pub fn fix_first_stage(built: &BuiltModel, inst: &CddpInstance, design: &FirstStageDesign) -> Result<BuiltModel> {
    design.validate(inst)?;
    let mut out = built.clone();
    let c1 = design.c1(inst);
    for fs in &built.layout.first_stage {
        for (levels, chosen) in [(&fs.alpha, &design.strip), (&fs.beta, &design.stack)] {
            for (i, ks) in levels.iter().enumerate() {
                for (k, &v) in ks.iter().enumerate() {
                    out.model.fix(v, if chosen[i] == Some(k) { 1.0 } else { 0.0 });
                }
            }
        }
        out.model.fix(fs.c1, c1);
    }
    if let Some(h) = out.model.hint().map(|h| h.to_vec()) {
        // The all-outsourcing hint stays feasible once C1 is accounted for.
        let mut h = h;
        for fs in &built.layout.first_stage {
            for (levels, chosen) in [(&fs.alpha, &design.strip), (&fs.beta, &design.stack)] {
                for (i, ks) in levels.iter().enumerate() {
                    for (k, &v) in ks.iter().enumerate() {
                        h[v.0] = if chosen[i] == Some(k) { 1.0 } else { 0.0 };
                    }
                }
            }
            h[fs.c1.0] = c1;
        }
        for &u in &built.layout.u {
            h[u.0] += c1;
        }
        out.model.set_hint(h);
    }
    Ok(out)
}

/// Single-scenario assignment model under a fixed design: min F^ω.
pub fn build_assignment(inst: &CddpInstance, sd: &ScenarioData, design: &FirstStageDesign) -> Result<BuiltModel> {
    let mut b = Builder::new(inst, &format!("CDAP[w{}]", sd.id));
    let fs = b.first_stage("")?;
    let (f, _) = b.block(sd, &fs, &format!("w{}", sd.id))?;
    b.layout.blocks.push(BlockRef { member: 0, position: 0, f, c12: None, c12p: None });
    b.layout.first_stage.push(fs);
    let built = b.finish(f);
    fix_first_stage(&built, inst, design)
}

/// Closed-form column count of the risk-neutral model, used to audit builds.
pub fn lip_rn_column_count(inst: &CddpInstance, data: &DroData) -> usize {
    let levels: usize = inst.strip.doors.iter().chain(&inst.stack.doors).map(|d| d.capacity_levels.len()).sum();
    let mut n = levels + 2;
    for m in &data.members {
        for sd in &m.scenarios {
            let xo: usize = sd.origins.iter().map(|&o| sd.strip_accept[o].len() + 1).sum();
            let yo: usize = sd.destinations.iter().map(|&d| sd.stack_accept[d].len() + 1).sum();
            let v: usize = sd
                .cells
                .iter()
                .map(|&(o, d, _)| (sd.strip_accept[o].len() + 1) * (sd.stack_accept[d].len() + 1))
                .sum();
            n += 3 + xo + yo + v;
        }
    }
    n
}
