//! Cross-dock problem data: door sides, distances, scenario groups and the
//! per-scenario quantities derived from commodity volumes.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::ambiguity::NominalDistribution;
use crate::error::{CddpError, Result};

pub const FORMAT_VERSION: u32 = 1;

/// Sparse commodity volume `(m, n, H_mn)`.
pub type Cell = (usize, usize, f64);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CapacityLevel {
    pub level: usize,
    pub nominal_capacity: f64,
    pub install_cost: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Door {
    pub capacity_levels: Vec<CapacityLevel>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DoorSide {
    pub doors: Vec<Door>,
    pub max_doors: usize,
}

impl DoorSide {
    pub fn len(&self) -> usize {
        self.doors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.doors.is_empty()
    }

    /// Cost of installing every door at its most expensive level.
    pub fn max_install_cost(&self) -> f64 {
        self.doors
            .iter()
            .map(|d| d.capacity_levels.iter().map(|l| l.install_cost).fold(0.0, f64::max))
            .sum()
    }

    fn validate(&self, side: &str) -> Result<()> {
        if self.max_doors < 1 {
            return Err(CddpError::Validation(format!("{side}: max_doors must be at least 1")));
        }
        for (i, d) in self.doors.iter().enumerate() {
            if d.capacity_levels.is_empty() {
                return Err(CddpError::Validation(format!("{side} door {i}: no capacity levels")));
            }
            for (k, l) in d.capacity_levels.iter().enumerate() {
                if !(l.install_cost >= 0.0) || !l.install_cost.is_finite() {
                    return Err(CddpError::Validation(format!(
                        "{side} door {i} level {k}: install cost must be nonnegative"
                    )));
                }
                if !(l.nominal_capacity >= 0.0) || !l.nominal_capacity.is_finite() {
                    return Err(CddpError::Validation(format!(
                        "{side} door {i} level {k}: capacity must be nonnegative"
                    )));
                }
                if k > 0 && l.nominal_capacity <= d.capacity_levels[k - 1].nominal_capacity {
                    return Err(CddpError::Validation(format!(
                        "{side} door {i}: capacity levels must be strictly increasing"
                    )));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioGroup {
    pub id: usize,
    /// Scenario ids of the group, ascending.
    pub scenarios: Vec<usize>,
    /// Group weight w̃^ℓ, the sum of its scenarios' weights.
    pub weight: f64,
    /// Origins `0..num_origins` may carry volume in this group.
    pub num_origins: usize,
    pub num_destinations: usize,
}

/// One scenario of the nominal distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub id: usize,
    pub group: usize,
    pub weight: f64,
    /// Nonzero commodity volumes as `(m, n, H)` triples.
    pub h: Vec<Cell>,
    pub d_strip: Vec<f64>,
    pub d_stack: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CddpInstance {
    pub version: u32,
    #[serde(default)]
    pub name: String,
    pub num_origins: usize,
    pub num_destinations: usize,
    pub strip: DoorSide,
    pub stack: DoorSide,
    /// E_ij, strip rows by stack columns.
    pub distance: Vec<Vec<f64>>,
    pub outsourcing_penalty: f64,
    pub cost_rate: f64,
    pub scenario_groups: Vec<ScenarioGroup>,
    pub scenarios: Vec<Scenario>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nominal: Option<NominalDistribution>,
}

/// Second-stage quantities of one scenario under given volumes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioData {
    pub id: usize,
    /// S_m for every origin.
    pub s: Vec<f64>,
    /// R_n for every destination.
    pub r: Vec<f64>,
    /// M^ω: origins with positive inbound volume, ascending.
    pub origins: Vec<usize>,
    /// N^ω: destinations with positive outbound volume, ascending.
    pub destinations: Vec<usize>,
    /// Positive volumes `(m, n, H)` sorted by `(m, n)`.
    pub cells: Vec<Cell>,
    /// I_m for every origin.
    pub strip_accept: Vec<Vec<usize>>,
    /// J_n for every destination.
    pub stack_accept: Vec<Vec<usize>>,
    pub d_strip: Vec<f64>,
    pub d_stack: Vec<f64>,
}

impl ScenarioData {
    /// G_minj for a cell; `None` is the outsourcing door.
    pub fn g(&self, inst: &CddpInstance, h: f64, i: Option<usize>, j: Option<usize>) -> f64 {
        match (i, j) {
            (Some(i), Some(j)) => inst.cost_rate * inst.distance[i][j] * h,
            (None, Some(_)) | (Some(_), None) => inst.outsourcing_penalty,
            (None, None) => 2.0 * inst.outsourcing_penalty,
        }
    }

    /// Cost of outsourcing every active node of the scenario, an upper bound
    /// on F for any assignment (each pair costs at most 2·F0).
    pub fn all_outsourced_cost(&self, inst: &CddpInstance) -> f64 {
        let f0 = inst.outsourcing_penalty;
        2.0 * f0 + self.cells.len() as f64 * 2.0 * f0
    }
}

fn accepted(volume: f64, side: &DoorSide, disruption: &[f64]) -> Vec<usize> {
    side.doors
        .iter()
        .enumerate()
        .filter(|(i, d)| {
            d.capacity_levels
                .iter()
                .any(|l| volume <= (1.0 - disruption[*i]) * l.nominal_capacity)
        })
        .map(|(i, _)| i)
        .collect()
}

/// Computes S, R, the active node sets and the accepted door sets.
pub fn derive_scenario_data(
    inst: &CddpInstance,
    id: usize,
    cells: &[Cell],
    d_strip: &[f64],
    d_stack: &[f64],
) -> Result<ScenarioData> {
    if d_strip.len() != inst.strip.len() || d_stack.len() != inst.stack.len() {
        return Err(CddpError::Validation(format!(
            "scenario {id}: disruption vectors must have one entry per door"
        )));
    }
    for (side, d) in [("strip", d_strip), ("stack", d_stack)] {
        for (i, &v) in d.iter().enumerate() {
            if !(0.0..=1.0).contains(&v) {
                return Err(CddpError::Validation(format!(
                    "scenario {id}: {side} disruption D[{i}] = {v} outside [0, 1]"
                )));
            }
        }
    }
    let mut s = vec![0.0; inst.num_origins];
    let mut r = vec![0.0; inst.num_destinations];
    let mut sorted: Vec<Cell> = Vec::with_capacity(cells.len());
    for &(m, n, h) in cells {
        if m >= inst.num_origins || n >= inst.num_destinations {
            return Err(CddpError::Validation(format!(
                "scenario {id}: cell H[{m},{n}] outside the node range"
            )));
        }
        if !(h >= 0.0) || !h.is_finite() {
            return Err(CddpError::Validation(format!(
                "scenario {id}: cell H[{m},{n}] = {h} must be nonnegative"
            )));
        }
        if h > 0.0 {
            sorted.push((m, n, h));
        }
    }
    sorted.sort_by_key(|a| (a.0, a.1));
    for w in sorted.windows(2) {
        if (w[0].0, w[0].1) == (w[1].0, w[1].1) {
            return Err(CddpError::Validation(format!(
                "scenario {id}: duplicate cell H[{},{}]",
                w[0].0, w[0].1
            )));
        }
    }
    for &(m, n, h) in &sorted {
        s[m] += h;
        r[n] += h;
    }
    let origins = (0..inst.num_origins).filter(|&m| s[m] > 0.0).collect();
    let destinations = (0..inst.num_destinations).filter(|&n| r[n] > 0.0).collect();
    let strip_accept = s.iter().map(|&v| accepted(v, &inst.strip, d_strip)).collect();
    let stack_accept = r.iter().map(|&v| accepted(v, &inst.stack, d_stack)).collect();
    Ok(ScenarioData {
        id,
        s,
        r,
        origins,
        destinations,
        cells: sorted,
        strip_accept,
        stack_accept,
        d_strip: d_strip.to_vec(),
        d_stack: d_stack.to_vec(),
    })
}

impl CddpInstance {
    pub fn num_strip(&self) -> usize {
        self.strip.len()
    }

    pub fn num_stack(&self) -> usize {
        self.stack.len()
    }

    pub fn scenario(&self, id: usize) -> &Scenario {
        &self.scenarios[id]
    }

    /// Derived data of a nominal scenario.
    pub fn scenario_data(&self, id: usize) -> Result<ScenarioData> {
        let sc = &self.scenarios[id];
        derive_scenario_data(self, id, &sc.h, &sc.d_strip, &sc.d_stack)
    }

    /// Largest standard cost of routing a single cell, over nominal scenarios.
    pub fn max_pair_standard_cost(&self) -> f64 {
        let emax = self.distance.iter().flatten().cloned().fold(0.0, f64::max);
        let hmax = self
            .scenarios
            .iter()
            .flat_map(|s| s.h.iter().map(|c| c.2))
            .fold(0.0, f64::max);
        self.cost_rate * emax * hmax
    }

    /// Checks every structural invariant of the data model.
    pub fn validate(&self) -> Result<()> {
        if self.version != FORMAT_VERSION {
            return Err(CddpError::Validation(format!(
                "unsupported format version {} (expected {FORMAT_VERSION})",
                self.version
            )));
        }
        self.strip.validate("strip")?;
        self.stack.validate("stack")?;
        if self.distance.len() != self.num_strip()
            || self.distance.iter().any(|row| row.len() != self.num_stack())
        {
            return Err(CddpError::Validation(format!(
                "distance matrix must be {}x{}",
                self.num_strip(),
                self.num_stack()
            )));
        }
        if self.distance.iter().flatten().any(|&e| !(e >= 0.0) || !e.is_finite()) {
            return Err(CddpError::Validation("distances must be nonnegative".into()));
        }
        if !(self.cost_rate >= 0.0) || !self.cost_rate.is_finite() {
            return Err(CddpError::Validation("cost_rate must be nonnegative".into()));
        }
        let bound = self.max_pair_standard_cost();
        if !(self.outsourcing_penalty > bound) || !self.outsourcing_penalty.is_finite() {
            return Err(CddpError::Validation(format!(
                "outsourcing_penalty {} must exceed the largest standard pair cost {bound}",
                self.outsourcing_penalty
            )));
        }
        if self.scenario_groups.is_empty() {
            return Err(CddpError::Validation("at least one scenario group is required".into()));
        }
        let mut seen = vec![false; self.scenarios.len()];
        let mut total = 0.0;
        for (l, g) in self.scenario_groups.iter().enumerate() {
            if g.id != l {
                return Err(CddpError::Validation(format!("scenario group {l} has id {}", g.id)));
            }
            if g.num_origins > self.num_origins || g.num_destinations > self.num_destinations {
                return Err(CddpError::Validation(format!("group {l}: node counts exceed instance")));
            }
            if g.scenarios.windows(2).any(|w| w[0] >= w[1]) {
                return Err(CddpError::Validation(format!(
                    "group {l}: scenario ids must be strictly increasing"
                )));
            }
            let mut wsum = 0.0;
            for &w in &g.scenarios {
                if w >= self.scenarios.len() || seen[w] {
                    return Err(CddpError::Validation(format!(
                        "group {l}: scenario {w} missing or shared with another group"
                    )));
                }
                seen[w] = true;
                if self.scenarios[w].group != l {
                    return Err(CddpError::Validation(format!("scenario {w} names group {}", self.scenarios[w].group)));
                }
                wsum += self.scenarios[w].weight;
            }
            if (wsum - g.weight).abs() > 1e-12 {
                return Err(CddpError::Validation(format!(
                    "group {l}: weight {} differs from its scenarios' sum {wsum}",
                    g.weight
                )));
            }
            total += g.weight;
        }
        if let Some(w) = seen.iter().position(|s| !s) {
            return Err(CddpError::Validation(format!("scenario {w} belongs to no group")));
        }
        if (total - 1.0).abs() > 1e-12 {
            return Err(CddpError::Validation(format!("group weights sum to {total}, not 1")));
        }
        for (w, sc) in self.scenarios.iter().enumerate() {
            if sc.id != w {
                return Err(CddpError::Validation(format!("scenario {w} has id {}", sc.id)));
            }
            if !(sc.weight > 0.0) {
                return Err(CddpError::Validation(format!("scenario {w}: weight must be positive")));
            }
            let g = &self.scenario_groups[sc.group];
            for &(m, n, _) in &sc.h {
                if m >= g.num_origins || n >= g.num_destinations {
                    return Err(CddpError::Validation(format!(
                        "scenario {w}: cell H[{m},{n}] outside group {} nodes",
                        sc.group
                    )));
                }
            }
            self.scenario_data(w)?;
        }
        if let Some(nd) = &self.nominal {
            let fresh = NominalDistribution::from_instance(self)?;
            if !nd.approx_eq(&fresh, 1e-9) {
                return Err(CddpError::Validation(
                    "embedded nominal distribution disagrees with the scenarios".into(),
                ));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("instance serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let inst: CddpInstance =
            serde_json::from_str(text).map_err(|e| CddpError::Parse(e.to_string()))?;
        inst.validate()?;
        Ok(inst)
    }
}

pub fn write_instance(inst: &CddpInstance, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, inst.to_json() + "\n")?;
    Ok(())
}

pub fn read_instance(path: impl AsRef<Path>) -> Result<CddpInstance> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)?;
    CddpInstance::from_json(&text)
        .map_err(|e| match e {
            CddpError::Parse(msg) => CddpError::Parse(format!("{}: {msg}", path.display())),
            other => other,
        })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    #[test]
    fn zero_volume_accepts_every_door() {
        let inst = fixtures::two_door_instance();
        let sd = derive_scenario_data(&inst, 0, &[], &[1.0, 0.0], &[0.0, 1.0]).unwrap();
        assert!(sd.s.iter().all(|&v| v == 0.0));
        assert!(sd.r.iter().all(|&v| v == 0.0));
        assert!(sd.strip_accept.iter().all(|a| a == &vec![0, 1]));
        assert!(sd.stack_accept.iter().all(|a| a == &vec![0, 1]));
        assert!(sd.origins.is_empty());
    }

    #[test]
    fn standard_cost_is_rate_times_distance_times_volume() {
        let mut inst = fixtures::two_door_instance();
        inst.distance[0][1] = 2.0;
        inst.cost_rate = 1.0;
        let sd = derive_scenario_data(&inst, 0, &[(0, 0, 5.0)], &[0.0, 0.0], &[0.0, 0.0]).unwrap();
        assert_eq!(sd.g(&inst, 5.0, Some(0), Some(1)), 10.0);
        assert_eq!(sd.g(&inst, 5.0, None, Some(1)), inst.outsourcing_penalty);
    }

    #[test]
    fn disrupted_door_rejects_large_origin() {
        let mut inst = fixtures::two_door_instance();
        inst.strip.doors[0].capacity_levels = vec![
            CapacityLevel { level: 0, nominal_capacity: 10.0, install_cost: 1.0 },
            CapacityLevel { level: 1, nominal_capacity: 20.0, install_cost: 2.0 },
        ];
        let sd = derive_scenario_data(&inst, 0, &[(0, 0, 12.0)], &[0.5, 0.0], &[0.0, 0.0]).unwrap();
        assert!(!sd.strip_accept[0].contains(&0));
        let sd = derive_scenario_data(&inst, 0, &[(0, 0, 10.0)], &[0.5, 0.0], &[0.0, 0.0]).unwrap();
        assert!(sd.strip_accept[0].contains(&0));
    }

    #[test]
    fn rejects_bad_volumes_and_disruptions() {
        let inst = fixtures::two_door_instance();
        let e = derive_scenario_data(&inst, 3, &[(1, 0, -1.0)], &[0.0, 0.0], &[0.0, 0.0]).unwrap_err();
        assert!(e.to_string().contains("scenario 3") && e.to_string().contains("H[1,0]"));
        let e = derive_scenario_data(&inst, 3, &[], &[1.5, 0.0], &[0.0, 0.0]).unwrap_err();
        assert!(e.to_string().contains("D[0]"));
    }

    #[test]
    fn json_round_trip_and_missing_field() {
        let inst = fixtures::two_door_instance();
        let text = inst.to_json();
        let back = CddpInstance::from_json(&text).unwrap();
        assert_eq!(inst, back);
        let mut v: serde_json::Value = serde_json::from_str(&text).unwrap();
        v.as_object_mut().unwrap().remove("outsourcing_penalty");
        let err = CddpInstance::from_json(&v.to_string()).unwrap_err();
        assert!(err.to_string().contains("outsourcing_penalty"), "{err}");
    }

    #[test]
    fn hand_written_fixture_parses() {
        let inst = CddpInstance::from_json(fixtures::TWO_DOOR_JSON).unwrap();
        assert_eq!(inst.num_strip(), 2);
        assert_eq!(inst.num_stack(), 2);
        assert_eq!(inst.scenarios.len(), 2);
        assert_eq!(inst.scenario_groups.len(), 1);
        assert_eq!(inst.scenarios[1].h.len(), 3);
    }
}
