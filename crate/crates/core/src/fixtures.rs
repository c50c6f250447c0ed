//! Small hand-made and randomly drawn instances shared by tests, benches and
//! the acceptance suite.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::ambiguity::{AmbiguityMember, NominalDistribution};
use crate::instance::{
    CapacityLevel, CddpInstance, Door, DoorSide, Scenario, ScenarioGroup, FORMAT_VERSION,
};
use crate::rng::substream;

const TAG_FIXTURE: u64 = 0x6669_7874;

/// Two strip doors, two stack doors, two origins and destinations, two scenarios.
pub const TWO_DOOR_JSON: &str = r#"{
  "version": 1,
  "name": "two-door",
  "num_origins": 2,
  "num_destinations": 2,
  "strip": {
    "doors": [
      {"capacity_levels": [{"level": 0, "nominal_capacity": 6.0, "install_cost": 5.0},
                           {"level": 1, "nominal_capacity": 12.0, "install_cost": 9.0}]},
      {"capacity_levels": [{"level": 0, "nominal_capacity": 8.0, "install_cost": 6.0}]}
    ],
    "max_doors": 2
  },
  "stack": {
    "doors": [
      {"capacity_levels": [{"level": 0, "nominal_capacity": 7.0, "install_cost": 4.0}]},
      {"capacity_levels": [{"level": 0, "nominal_capacity": 5.0, "install_cost": 3.0},
                           {"level": 1, "nominal_capacity": 10.0, "install_cost": 7.0}]}
    ],
    "max_doors": 1
  },
  "distance": [[1.0, 2.0], [2.0, 1.0]],
  "outsourcing_penalty": 50.0,
  "cost_rate": 1.0,
  "scenario_groups": [
    {"id": 0, "scenarios": [0, 1], "weight": 1.0, "num_origins": 2, "num_destinations": 2}
  ],
  "scenarios": [
    {"id": 0, "group": 0, "weight": 0.5, "h": [[0, 0, 4.0], [1, 1, 3.0]],
     "d_strip": [0.0, 0.0], "d_stack": [0.0, 0.0]},
    {"id": 1, "group": 0, "weight": 0.5, "h": [[0, 0, 2.0], [0, 1, 5.0], [1, 0, 1.0]],
     "d_strip": [0.0, 0.5], "d_stack": [0.0, 0.0]}
  ]
}"#;

pub fn two_door_instance() -> CddpInstance {
    CddpInstance::from_json(TWO_DOOR_JSON).expect("fixture parses")
}

/// Size limits of a random tiny instance.
#[derive(Debug, Clone, Copy)]
pub struct TinyLimits {
    pub max_doors: usize,
    pub max_levels: usize,
    pub max_nodes: usize,
    pub max_scenarios: usize,
    pub max_members: usize,
}

impl TinyLimits {
    pub const RN: TinyLimits = TinyLimits { max_doors: 2, max_levels: 2, max_nodes: 3, max_scenarios: 3, max_members: 3 };
    pub const SD: TinyLimits = TinyLimits { max_doors: 2, max_levels: 2, max_nodes: 3, max_scenarios: 2, max_members: 2 };
}

fn tiny_side(rng: &mut impl Rng, lim: &TinyLimits) -> DoorSide {
    let count = rng.random_range(1..=lim.max_doors);
    let doors = (0..count)
        .map(|_| {
            let levels = rng.random_range(1..=lim.max_levels);
            let mut cap = 0.0;
            let mut cost = 0.0;
            let capacity_levels = (0..levels)
                .map(|k| {
                    cap += rng.random_range(3..=12) as f64;
                    cost += rng.random_range(5..=40) as f64;
                    CapacityLevel { level: k, nominal_capacity: cap, install_cost: cost }
                })
                .collect();
            Door { capacity_levels }
        })
        .collect();
    DoorSide { doors, max_doors: rng.random_range(1..=count) }
}

/// A random single-group instance within `lim`, plus its nominal distribution.
pub fn tiny_instance(seed: u64, lim: &TinyLimits) -> CddpInstance {
    let mut rng = substream(seed, TAG_FIXTURE, &[0]);
    let strip = tiny_side(&mut rng, lim);
    let stack = tiny_side(&mut rng, lim);
    let num_origins = rng.random_range(1..=lim.max_nodes);
    let num_destinations = rng.random_range(1..=lim.max_nodes);
    let distance: Vec<Vec<f64>> = (0..strip.len())
        .map(|_| (0..stack.len()).map(|_| rng.random_range(1..=5) as f64).collect())
        .collect();
    let n_scen = rng.random_range(1..=lim.max_scenarios);
    let raw: Vec<f64> = (0..n_scen).map(|_| rng.random_range(1..=4) as f64).collect();
    let total: f64 = raw.iter().sum();
    let mut scenarios = Vec::new();
    for (w, r) in raw.iter().enumerate() {
        let mut h = Vec::new();
        for m in 0..num_origins {
            for n in 0..num_destinations {
                if rng.random::<f64>() < 0.6 {
                    h.push((m, n, rng.random_range(1..=9) as f64));
                }
            }
        }
        if h.is_empty() {
            h.push((0, 0, rng.random_range(1..=9) as f64));
        }
        let mut disrupt = |k: usize| -> Vec<f64> {
            (0..k)
                .map(|_| match rng.random_range(0..10) {
                    0 => 1.0,
                    1 | 2 => 0.5,
                    _ => 0.0,
                })
                .collect()
        };
        let d_strip = disrupt(strip.len());
        let d_stack = disrupt(stack.len());
        scenarios.push(Scenario { id: w, group: 0, weight: r / total, h, d_strip, d_stack });
    }
    let gw: f64 = scenarios.iter().map(|s| s.weight).sum();
    let mut inst = CddpInstance {
        version: FORMAT_VERSION,
        name: format!("tiny-{seed}"),
        num_origins,
        num_destinations,
        strip,
        stack,
        distance,
        outsourcing_penalty: 0.0,
        cost_rate: 1.0,
        scenario_groups: vec![ScenarioGroup {
            id: 0,
            scenarios: (0..n_scen).collect(),
            weight: gw,
            num_origins,
            num_destinations,
        }],
        scenarios,
        nominal: None,
    };
    // Normalize so the group weight is exactly one.
    inst.scenario_groups[0].weight = 1.0;
    let last = n_scen - 1;
    let head: f64 = inst.scenarios[..last].iter().map(|s| s.weight).sum();
    inst.scenarios[last].weight = 1.0 - head;
    inst.outsourcing_penalty = inst.max_pair_standard_cost() + rng.random_range(5..=40) as f64;
    inst.validate().expect("tiny instance is valid");
    inst
}

/// Random members over the instance's scenarios: random nonempty subsets,
/// rescaled volumes and random weights.
pub fn tiny_members(inst: &CddpInstance, seed: u64, lim: &TinyLimits) -> Vec<AmbiguityMember> {
    let mut rng = substream(seed, TAG_FIXTURE, &[1]);
    let count = rng.random_range(1..=lim.max_members);
    (0..count)
        .map(|p| {
            let n = inst.scenarios.len();
            let mut ids: Vec<usize> = (0..n).collect();
            ids.shuffle(&mut rng);
            let keep = rng.random_range(1..=n);
            let mut scen: Vec<usize> = ids[..keep].to_vec();
            scen.sort_unstable();
            let xi = scen
                .iter()
                .map(|&w| {
                    inst.scenarios[w]
                        .h
                        .iter()
                        .map(|&(m, nn, v)| (m, nn, (v * rng.random_range(5..=15) as f64 / 10.0).round().max(1.0)))
                        .collect()
                })
                .collect();
            let raw: Vec<f64> = scen.iter().map(|_| rng.random_range(1..=5) as f64).collect();
            let total: f64 = raw.iter().sum();
            let mut weights: Vec<f64> = raw.iter().map(|r| r / total).collect();
            let head: f64 = weights[..weights.len() - 1].iter().sum();
            *weights.last_mut().unwrap() = 1.0 - head;
            AmbiguityMember {
                id: p + 1,
                family: None,
                log_likelihood: vec![0.0; scen.len()],
                scenarios: scen,
                xi,
                weights,
                proximity: p as f64,
            }
        })
        .collect()
}

/// One origin, one destination, one strip door with a small and a large
/// level. A low-weight scenario carries a volume only the large level can
/// take, so risk-neutral optimization outsources it.
pub fn black_swan_instance() -> CddpInstance {
    let inst = CddpInstance {
        version: FORMAT_VERSION,
        name: "black-swan".into(),
        num_origins: 1,
        num_destinations: 1,
        strip: DoorSide {
            doors: vec![Door {
                capacity_levels: vec![
                    CapacityLevel { level: 0, nominal_capacity: 10.0, install_cost: 10.0 },
                    CapacityLevel { level: 1, nominal_capacity: 30.0, install_cost: 60.0 },
                ],
            }],
            max_doors: 1,
        },
        stack: DoorSide {
            doors: vec![Door {
                capacity_levels: vec![CapacityLevel { level: 0, nominal_capacity: 100.0, install_cost: 1.0 }],
            }],
            max_doors: 1,
        },
        distance: vec![vec![1.0]],
        outsourcing_penalty: 100.0,
        cost_rate: 1.0,
        scenario_groups: vec![ScenarioGroup {
            id: 0,
            scenarios: vec![0, 1],
            weight: 1.0,
            num_origins: 1,
            num_destinations: 1,
        }],
        scenarios: vec![
            Scenario { id: 0, group: 0, weight: 0.9, h: vec![(0, 0, 5.0)], d_strip: vec![0.0], d_stack: vec![0.0] },
            Scenario { id: 1, group: 0, weight: 0.1, h: vec![(0, 0, 25.0)], d_strip: vec![0.0], d_stack: vec![0.0] },
        ],
        nominal: None,
    };
    inst.validate().expect("black swan instance is valid");
    inst
}

/// The nominal member of an instance.
pub fn nominal_member(inst: &CddpInstance) -> AmbiguityMember {
    let nd = NominalDistribution::from_instance(inst).expect("nominal distribution");
    AmbiguityMember::nominal(&nd)
}
