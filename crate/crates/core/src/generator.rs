//! Seeded synthetic instances with the scenario-group shapes of the testbed.

use std::fmt;
use std::str::FromStr;

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::ambiguity::NominalDistribution;
use crate::error::{CddpError, Result};
use crate::instance::{
    CapacityLevel, CddpInstance, Door, DoorSide, Scenario, ScenarioGroup, FORMAT_VERSION,
};
use crate::rng::{substream, TAG_CELLS, TAG_DISRUPT, TAG_DISTANCE, TAG_DOORS, TAG_VOLUME};

/// Dimensions of one scenario group.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupShape {
    pub scenarios: usize,
    pub origins: usize,
    pub destinations: usize,
    pub strip_doors: usize,
    pub stack_doors: usize,
    pub cells: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Shape {
    pub name: String,
    pub groups: Vec<GroupShape>,
}

const G1: GroupShape = GroupShape { scenarios: 5, origins: 8, destinations: 8, strip_doors: 4, stack_doors: 4, cells: 17 };
const G2: GroupShape = GroupShape { scenarios: 5, origins: 10, destinations: 10, strip_doors: 5, stack_doors: 5, cells: 26 };
const G3: GroupShape = GroupShape { scenarios: 5, origins: 15, destinations: 15, strip_doors: 6, stack_doors: 6, cells: 57 };
const G4: GroupShape = GroupShape { scenarios: 5, origins: 20, destinations: 20, strip_doors: 10, stack_doors: 10, cells: 101 };

impl Shape {
    pub fn named(name: &str) -> Option<Shape> {
        let groups = match name {
            "I1" => vec![G1],
            "I3" => vec![G1, G2],
            "I7" => vec![G1, G2, G3, G4],
            _ => return None,
        };
        Some(Shape { name: name.into(), groups })
    }

    pub fn total_scenarios(&self) -> usize {
        self.groups.iter().map(|g| g.scenarios).sum()
    }

    pub fn validate(&self) -> Result<()> {
        if self.groups.is_empty() {
            return Err(CddpError::Shape("shape has no scenario groups".into()));
        }
        for (l, g) in self.groups.iter().enumerate() {
            if g.scenarios == 0 || g.origins == 0 || g.destinations == 0 || g.strip_doors == 0 || g.stack_doors == 0 {
                return Err(CddpError::Shape(format!("group {l}: every dimension must be positive")));
            }
            if g.cells > g.origins * g.destinations {
                return Err(CddpError::Shape(format!(
                    "group {l}: {} cells exceed the {}x{} origin-destination grid",
                    g.cells, g.origins, g.destinations
                )));
            }
        }
        Ok(())
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name)
    }
}

impl FromStr for Shape {
    type Err = CddpError;

    /// `I1`, `I3`, `I7`, or comma-separated groups `scen/nM/nN/nI/nJ/cells`.
    fn from_str(s: &str) -> Result<Shape> {
        if let Some(shape) = Shape::named(s) {
            return Ok(shape);
        }
        let mut groups = Vec::new();
        for part in s.split(',') {
            let nums: Vec<usize> = part
                .trim()
                .split('/')
                .map(|t| t.trim().parse::<usize>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| CddpError::Shape(format!("bad group `{part}`; expected scen/nM/nN/nI/nJ/cells")))?;
            let [scenarios, origins, destinations, strip_doors, stack_doors, cells] = nums[..] else {
                return Err(CddpError::Shape(format!("group `{part}` needs six numbers")));
            };
            groups.push(GroupShape { scenarios, origins, destinations, strip_doors, stack_doors, cells });
        }
        let shape = Shape { name: s.to_string(), groups };
        shape.validate()?;
        Ok(shape)
    }
}

/// Magnitudes of the random data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    /// Integer volumes are drawn uniformly from this inclusive range.
    pub volume_range: (u32, u32),
    /// Integer distances are drawn uniformly from this inclusive range.
    pub distance_range: (u32, u32),
    pub cost_rate: f64,
    /// Capacity of each level as a multiple of the average per-door volume.
    pub level_factors: Vec<f64>,
    /// Install cost per unit of capacity.
    pub cost_per_capacity: f64,
    /// Relative noise on capacities and install costs.
    pub noise: f64,
    /// Fraction of the door count allowed to be installed, rounded up.
    pub door_cap_fraction: f64,
    /// Probability that an active door is partially disrupted in a scenario.
    pub partial_disruption_prob: f64,
    pub partial_disruption_range: (f64, f64),
    /// F0 as a multiple of the largest possible single-pair standard cost.
    pub penalty_factor: f64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            volume_range: (1, 20),
            distance_range: (1, 10),
            cost_rate: 1.0,
            level_factors: vec![0.75, 1.5],
            cost_per_capacity: 3.0,
            noise: 0.1,
            door_cap_fraction: 0.75,
            partial_disruption_prob: 0.0,
            partial_disruption_range: (0.1, 0.5),
            penalty_factor: 4.0,
        }
    }
}

fn door_side(seed: u64, side: u64, count: usize, mean_volume: f64, cfg: &GeneratorConfig) -> DoorSide {
    let doors = (0..count)
        .map(|i| {
            let mut rng = substream(seed, TAG_DOORS, &[side, i as u64]);
            let mut prev = 0.0;
            let capacity_levels = cfg
                .level_factors
                .iter()
                .enumerate()
                .map(|(k, f)| {
                    let jitter = 1.0 + cfg.noise * (2.0 * rng.random::<f64>() - 1.0);
                    let cap = (f * mean_volume * jitter).round().max(prev + 1.0);
                    prev = cap;
                    let cjit = 1.0 + cfg.noise * (2.0 * rng.random::<f64>() - 1.0);
                    let cost = (cfg.cost_per_capacity * cap * cjit).round().max(0.0);
                    CapacityLevel { level: k, nominal_capacity: cap, install_cost: cost }
                })
                .collect();
            Door { capacity_levels }
        })
        .collect();
    let max_doors = ((cfg.door_cap_fraction * count as f64).ceil() as usize).clamp(1, count.max(1));
    DoorSide { doors, max_doors }
}

fn disruption(seed: u64, side: u64, omega: usize, count: usize, active: usize, cfg: &GeneratorConfig) -> Vec<f64> {
    (0..count)
        .map(|i| {
            if i >= active {
                return 1.0;
            }
            let mut rng = substream(seed, TAG_DISRUPT, &[side, omega as u64, i as u64]);
            if rng.random::<f64>() < cfg.partial_disruption_prob {
                let (a, b) = cfg.partial_disruption_range;
                a + (b - a) * rng.random::<f64>()
            } else {
                0.0
            }
        })
        .collect()
}

/// Builds an instance of the given shape with its nominal distribution embedded.
pub fn generate_instance(seed: u64, shape: &Shape, cfg: &GeneratorConfig) -> Result<CddpInstance> {
    shape.validate()?;
    let (vlo, vhi) = cfg.volume_range;
    let (dlo, dhi) = cfg.distance_range;
    if vlo == 0 || vlo > vhi || dlo > dhi || cfg.level_factors.is_empty() {
        return Err(CddpError::Config("bad generator ranges".into()));
    }
    let num_origins = shape.groups.iter().map(|g| g.origins).max().unwrap();
    let num_destinations = shape.groups.iter().map(|g| g.destinations).max().unwrap();
    let n_strip = shape.groups.iter().map(|g| g.strip_doors).max().unwrap();
    let n_stack = shape.groups.iter().map(|g| g.stack_doors).max().unwrap();
    let mid = 0.5 * (vlo + vhi) as f64;
    let per_strip = shape
        .groups
        .iter()
        .map(|g| g.cells as f64 * mid / g.strip_doors as f64)
        .fold(0.0, f64::max);
    let per_stack = shape
        .groups
        .iter()
        .map(|g| g.cells as f64 * mid / g.stack_doors as f64)
        .fold(0.0, f64::max);
    let strip = door_side(seed, 0, n_strip, per_strip, cfg);
    let stack = door_side(seed, 1, n_stack, per_stack, cfg);
    let distance = (0..n_strip)
        .map(|i| {
            (0..n_stack)
                .map(|j| substream(seed, TAG_DISTANCE, &[i as u64, j as u64]).random_range(dlo..=dhi) as f64)
                .collect()
        })
        .collect();
    let total = shape.total_scenarios();
    let weight = 1.0 / total as f64;
    let mut scenarios = Vec::with_capacity(total);
    let mut scenario_groups = Vec::with_capacity(shape.groups.len());
    for (l, g) in shape.groups.iter().enumerate() {
        let mut rng = substream(seed, TAG_CELLS, &[l as u64]);
        let mut picks: Vec<usize> = sample(&mut rng, g.origins * g.destinations, g.cells).into_vec();
        picks.sort_unstable();
        let first = scenarios.len();
        for _ in 0..g.scenarios {
            let omega = scenarios.len();
            let h = picks
                .iter()
                .map(|&c| {
                    let v = substream(seed, TAG_VOLUME, &[l as u64, omega as u64, c as u64]).random_range(vlo..=vhi);
                    (c / g.destinations, c % g.destinations, v as f64)
                })
                .collect();
            scenarios.push(Scenario {
                id: omega,
                group: l,
                weight,
                h,
                d_strip: disruption(seed, 0, omega, n_strip, g.strip_doors, cfg),
                d_stack: disruption(seed, 1, omega, n_stack, g.stack_doors, cfg),
            });
        }
        let ids: Vec<usize> = (first..scenarios.len()).collect();
        let gw = ids.iter().map(|&w| scenarios[w].weight).sum();
        scenario_groups.push(ScenarioGroup {
            id: l,
            scenarios: ids,
            weight: gw,
            num_origins: g.origins,
            num_destinations: g.destinations,
        });
    }
    let outsourcing_penalty = cfg.penalty_factor * cfg.cost_rate * dhi.max(1) as f64 * vhi as f64;
    let mut inst = CddpInstance {
        version: FORMAT_VERSION,
        name: format!("{shape}-seed{seed}"),
        num_origins,
        num_destinations,
        strip,
        stack,
        distance,
        outsourcing_penalty,
        cost_rate: cfg.cost_rate,
        scenario_groups,
        scenarios,
        nominal: None,
    };
    inst.nominal = Some(NominalDistribution::from_instance(&inst)?);
    inst.validate()?;
    Ok(inst)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn i1_shape_has_five_equiprobable_scenarios() {
        let inst = generate_instance(11, &Shape::named("I1").unwrap(), &GeneratorConfig::default()).unwrap();
        assert_eq!(inst.scenarios.len(), 5);
        assert!(inst.scenarios.iter().all(|s| s.weight == 0.2));
        assert_eq!((inst.num_origins, inst.num_destinations), (8, 8));
        assert_eq!((inst.num_strip(), inst.num_stack()), (4, 4));
        assert!(inst.scenarios.iter().all(|s| s.h.len() == 17));
        let total: f64 = inst.scenario_groups.iter().map(|g| g.weight).sum();
        assert_eq!(total, 1.0);
    }

    #[test]
    fn same_seed_same_bytes() {
        let shape: Shape = "3/4/4/2/2/5,2/5/5/3/3/9".parse().unwrap();
        let a = generate_instance(5, &shape, &GeneratorConfig::default()).unwrap().to_json();
        let b = generate_instance(5, &shape, &GeneratorConfig::default()).unwrap().to_json();
        let c = generate_instance(6, &shape, &GeneratorConfig::default()).unwrap().to_json();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn doors_beyond_group_are_fully_disrupted() {
        let inst = generate_instance(3, &Shape::named("I3").unwrap(), &GeneratorConfig::default()).unwrap();
        for sc in &inst.scenarios {
            let active = if sc.group == 0 { 4 } else { 5 };
            assert!(sc.d_strip[active..].iter().all(|&d| d == 1.0));
            assert!(sc.d_strip[..active].iter().all(|&d| d == 0.0));
        }
        let nd = inst.nominal.as_ref().unwrap();
        assert_eq!(nd.group_params[0].len(), 17);
        assert_eq!(nd.group_params[1].len(), 26);
    }

    #[test]
    fn dense_and_oversized_shapes() {
        let shape: Shape = "2/3/3/1/1/9".parse().unwrap();
        let inst = generate_instance(1, &shape, &GeneratorConfig::default()).unwrap();
        assert!(inst.scenarios.iter().all(|s| s.h.len() == 9));
        assert!(matches!("2/3/3/1/1/10".parse::<Shape>(), Err(CddpError::Shape(_))));
        assert!(matches!("2/3/3".parse::<Shape>(), Err(CddpError::Shape(_))));
    }
}
