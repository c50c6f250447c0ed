//! Exact and brute-force solves with their report tables: model dimensions,
//! per-scenario cost tables and per-member cost-distribution summaries.

use std::time::Duration;

use cddp_milp::{solve_milp, MilpLimits, ModelStats, SolveStatus};
use serde::{Deserialize, Serialize};

use crate::bounds::{full_model, BoundsReport};
use crate::instance::CddpInstance;
use crate::models::{DroData, FirstStageDesign, ResolvedSd, SdConfig, Variant};
use crate::oracle::{oracle_rn, oracle_sd, OracleLimits};
use crate::stats::Summary;
use crate::{CddpError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Exact,
    Oracle,
}

impl std::str::FromStr for Method {
    type Err = CddpError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exact" => Ok(Method::Exact),
            "oracle" => Ok(Method::Oracle),
            _ => Err(CddpError::Parse(format!("unknown method {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveConfig {
    pub variant: Variant,
    pub method: Method,
    pub sd: Option<SdConfig>,
    /// Wall-clock limit in seconds.
    pub time_limit: Option<f64>,
    pub node_limit: u64,
    pub rel_gap: f64,
    pub abs_gap: f64,
}

impl Default for SolveConfig {
    fn default() -> Self {
        let d = MilpLimits::default();
        SolveConfig {
            variant: Variant::Rn,
            method: Method::Exact,
            sd: None,
            time_limit: d.time_limit.map(|t| t.as_secs_f64()),
            node_limit: d.node_limit,
            rel_gap: d.rel_gap,
            abs_gap: d.abs_gap,
        }
    }
}

impl SolveConfig {
    pub fn limits(&self) -> MilpLimits {
        MilpLimits {
            time_limit: self.time_limit.map(Duration::from_secs_f64),
            node_limit: self.node_limit,
            rel_gap: self.rel_gap,
            abs_gap: self.abs_gap,
        }
    }

    pub fn resolve_sd(&self, inst: &CddpInstance, data: &DroData) -> Result<Option<ResolvedSd>> {
        match self.variant {
            Variant::Rn => Ok(None),
            Variant::Sd => Ok(Some(
                self.sd
                    .as_ref()
                    .ok_or_else(|| CddpError::Config("the SD model needs an SD configuration".into()))?
                    .resolve(inst, data)?,
            )),
        }
    }
}

/// One scenario row of the cost table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostRow {
    pub member: usize,
    pub scenario: usize,
    pub weight: f64,
    pub f: f64,
    /// C1 + F.
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub config: SolveConfig,
    pub instance: String,
    pub member_ids: Vec<usize>,
    pub sd: Option<ResolvedSd>,
    pub model: String,
    pub stats: ModelStats,
    pub status: SolveStatus,
    pub objective: Option<f64>,
    pub best_bound: Option<f64>,
    pub gap: Option<f64>,
    pub nodes: u64,
    pub design: Option<FirstStageDesign>,
    pub c1: Option<f64>,
    /// Index into the members of the selected γ (SD only).
    pub selected_member: Option<usize>,
    /// C1 + Σ w F per member.
    pub member_costs: Vec<f64>,
    pub costs: Vec<CostRow>,
    /// Oracle enumeration counts `(designs, assignments)`.
    pub enumerated: Option<(usize, u64)>,
    pub warnings: Vec<String>,
}

pub fn model_name(v: Variant) -> &'static str {
    match v {
        Variant::Rn => "LIP-RN",
        Variant::Sd => "LIP-SD",
    }
}

fn cost_rows(data: &DroData, c1: f64, f: &[Vec<f64>]) -> Vec<CostRow> {
    let mut rows = Vec::new();
    for (m, fs) in data.members.iter().zip(f) {
        for ((sd, w), &f) in m.scenarios.iter().zip(&m.weights).zip(fs) {
            rows.push(CostRow { member: m.id, scenario: sd.id, weight: *w, f, total: c1 + f });
        }
    }
    rows
}

/// Solves LIP-RN or LIP-SD, by branch and bound or by enumeration.
pub fn solve(inst: &CddpInstance, data: &DroData, cfg: &SolveConfig, oracle: &OracleLimits) -> Result<SolveReport> {
    let sd = cfg.resolve_sd(inst, data)?;
    let built = full_model(cfg.variant, inst, data, sd.as_ref())?;
    let mut report = SolveReport {
        config: cfg.clone(),
        instance: inst.name.clone(),
        member_ids: data.members.iter().map(|m| m.id).collect(),
        sd: sd.clone(),
        model: model_name(cfg.variant).into(),
        stats: built.stats(),
        status: SolveStatus::Infeasible,
        objective: None,
        best_bound: None,
        gap: None,
        nodes: 0,
        design: None,
        c1: None,
        selected_member: None,
        member_costs: Vec::new(),
        costs: Vec::new(),
        enumerated: None,
        warnings: Vec::new(),
    };
    match cfg.method {
        Method::Exact => {
            let sol = solve_milp(&built.model, &cfg.limits());
            report.status = sol.status;
            report.objective = sol.objective;
            report.best_bound = sol.best_bound.is_finite().then_some(sol.best_bound);
            report.gap = sol.gap;
            report.nodes = sol.nodes;
            if !sol.values.is_empty() {
                let design = built.layout.first_stage[0].design(&sol.values);
                let c1 = design.c1(inst);
                let mut f: Vec<Vec<f64>> = data.members.iter().map(|m| vec![0.0; m.scenarios.len()]).collect();
                for (p, k, v) in built.block_costs(&sol.values) {
                    f[p][k] = v;
                }
                report.member_costs = data.members.iter().zip(&f).map(|(m, f)| c1 + m.expected(f)).collect();
                report.selected_member = built.layout.gamma.iter().position(|g| sol.values[g.0] > 0.5);
                report.costs = cost_rows(data, c1, &f);
                report.design = Some(design);
                report.c1 = Some(c1);
            }
        }
        Method::Oracle => {
            let sol = match &sd {
                None => Some(oracle_rn(inst, data, oracle)?),
                Some(sd) => oracle_sd(inst, data, sd, oracle)?,
            };
            if let Some(sol) = sol {
                let c1 = sol.design.c1(inst);
                report.status = SolveStatus::Optimal;
                report.objective = Some(sol.objective);
                report.best_bound = Some(sol.objective);
                report.gap = Some(0.0);
                report.costs = cost_rows(data, c1, &sol.block_costs);
                report.member_costs = sol.member_costs;
                report.selected_member = sol.selected;
                report.enumerated = Some((sol.designs_enumerated, sol.assignments_enumerated));
                report.design = Some(sol.design);
                report.c1 = Some(c1);
            }
        }
    }
    if report.status == SolveStatus::Infeasible {
        report.warnings.push("model is infeasible".into());
    }
    Ok(report)
}

pub const DIMENSIONS_HEADER: &str = "model,members,m,n01,nc,nz";

pub fn dimensions_row(model: &str, members: usize, s: &ModelStats) -> String {
    format!("{model},{members},{},{},{},{}", s.m, s.n01, s.nc, s.nz)
}

pub const COST_HEADER: &str = "member,scenario,weight,F,C1_plus_F";

impl SolveReport {
    pub fn dimensions_csv(&self) -> String {
        format!("{DIMENSIONS_HEADER}\n{}\n", dimensions_row(&self.model, self.member_ids.len(), &self.stats))
    }

    /// Per-(member, scenario) weights and costs at the reported solution.
    pub fn cost_csv(&self) -> String {
        let mut s = format!("{COST_HEADER}\n");
        for r in &self.costs {
            s.push_str(&format!("{},{},{},{},{}\n", r.member, r.scenario, r.weight, r.f, r.total));
        }
        s
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| CddpError::Parse(e.to_string()))
    }
}

/// Five-number summary of one member's scenario costs C1 + F.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostSummary {
    pub source: String,
    pub model: String,
    pub member: usize,
    pub scenarios: usize,
    pub summary: Summary,
}

/// A report whose per-scenario costs can be summarized.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CostSource {
    Solve(Box<SolveReport>),
    Bounds(Box<BoundsReport>),
}

impl CostSource {
    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| CddpError::Parse(e.to_string()))
    }

    /// `(model, member id, C1 + F per scenario)` in member order.
    pub fn member_costs(&self) -> Result<(String, Vec<(usize, Vec<f64>)>)> {
        match self {
            CostSource::Solve(r) => {
                let mut out: Vec<(usize, Vec<f64>)> = r.member_ids.iter().map(|&id| (id, Vec::new())).collect();
                for row in &r.costs {
                    let slot = out
                        .iter_mut()
                        .find(|(id, _)| *id == row.member)
                        .ok_or_else(|| CddpError::Validation(format!("cost row of unknown member {}", row.member)))?;
                    slot.1.push(row.total);
                }
                Ok((r.model.clone(), out))
            }
            CostSource::Bounds(r) => {
                let model = match r.config.variant {
                    Variant::Rn => "H-RN",
                    Variant::Sd => "H-SD",
                };
                let Some(e) = r.upper.selected.map(|i| &r.upper.evaluations[i]) else {
                    return Ok((model.into(), Vec::new()));
                };
                let c1 = e.candidate.c1;
                let out = r.member_ids.iter().zip(&e.costs).map(|(&id, f)| (id, f.iter().map(|f| c1 + f).collect())).collect();
                Ok((model.into(), out))
            }
        }
    }
}

/// Summaries for every member of every source, in input order.
pub fn cost_summaries(sources: &[(String, CostSource)]) -> Result<Vec<CostSummary>> {
    if sources.is_empty() {
        return Err(CddpError::Validation("no reports to summarize".into()));
    }
    let mut out = Vec::new();
    for (name, src) in sources {
        let (model, members) = src.member_costs()?;
        if members.iter().all(|(_, c)| c.is_empty()) {
            return Err(CddpError::Validation(format!("{name}: report carries no solution costs")));
        }
        for (member, costs) in members {
            if costs.is_empty() {
                continue;
            }
            out.push(CostSummary {
                source: name.clone(),
                model: model.clone(),
                member,
                scenarios: costs.len(),
                summary: Summary::of(&costs),
            });
        }
    }
    Ok(out)
}

pub const SUMMARY_HEADER: &str = "source,model,member,scenarios,min,q1,median,q3,max,mean";

pub fn summary_csv(rows: &[CostSummary]) -> String {
    let mut s = format!("{SUMMARY_HEADER}\n");
    for r in rows {
        let m = &r.summary;
        s.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{}\n",
            r.source, r.model, r.member, r.scenarios, m.min, m.q1, m.median, m.q3, m.max, m.mean
        ));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    #[test]
    fn exact_and_oracle_reports_agree() {
        let inst = fixtures::black_swan_instance();
        let data = DroData::new(&inst, &[fixtures::nominal_member(&inst)]).unwrap();
        let tight = SolveConfig { rel_gap: 1e-12, abs_gap: 1e-9, ..SolveConfig::default() };
        let exact = solve(&inst, &data, &tight, &OracleLimits::default()).unwrap();
        let oracle = solve(&inst, &data, &SolveConfig { method: Method::Oracle, ..tight }, &OracleLimits::default()).unwrap();
        assert_eq!(exact.status, SolveStatus::Optimal);
        assert!((exact.objective.unwrap() - oracle.objective.unwrap()).abs() < 1e-6);
        assert_eq!(exact.costs.len(), oracle.costs.len());
        let worst = exact.member_costs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        assert!((worst - exact.objective.unwrap()).abs() < 1e-6);
    }

    #[test]
    fn summary_of_a_single_member() {
        let inst = fixtures::black_swan_instance();
        let data = DroData::new(&inst, &[fixtures::nominal_member(&inst)]).unwrap();
        let r = solve(&inst, &data, &SolveConfig { method: Method::Oracle, ..SolveConfig::default() }, &OracleLimits::default()).unwrap();
        let rows = cost_summaries(&[("a".into(), CostSource::Solve(Box::new(r.clone())))]).unwrap();
        assert_eq!(rows.len(), data.members.len());
        let costs: Vec<f64> = r.costs.iter().filter(|c| c.member == rows[0].member).map(|c| c.total).collect();
        assert_eq!(rows[0].summary, Summary::of(&costs));
        assert!(cost_summaries(&[]).is_err());
    }
}
