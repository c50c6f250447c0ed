use cddp_core::ambiguity::{
    generate_candidates, select_ambiguity, wasserstein_proximity, AmbiguityMember, NominalDistribution,
    PerturbationConfig, Rho,
};
use cddp_core::bounds::{gap_h, goodness_ratio, run_bounds, BoundsConfig};
use cddp_core::fixtures::{tiny_instance, tiny_members, TinyLimits};
use cddp_core::generator::{generate_instance, GeneratorConfig, GroupShape, Shape};
use cddp_core::instance::derive_scenario_data;
use cddp_core::models::{build_lip_rn, build_lip_sd, DroData, SdConfig, SdProfile, Variant};
use cddp_core::oracle::{oracle_rn, oracle_sd, OracleLimits};
use cddp_core::par;
use cddp_core::report::{solve, SolveConfig};
use cddp_milp::{to_lp_string, SolveStatus};
use proptest::prelude::*;

fn shape(groups: &[(usize, usize, usize, usize, usize, usize)]) -> Shape {
    Shape {
        name: "custom".into(),
        groups: groups
            .iter()
            .map(|&(scenarios, origins, destinations, strip_doors, stack_doors, cells)| GroupShape {
                scenarios,
                origins,
                destinations,
                strip_doors,
                stack_doors,
                cells,
            })
            .collect(),
    }
}

fn small_shape() -> impl Strategy<Value = Shape> {
    prop::collection::vec((1usize..4, 2usize..5, 2usize..5, 1usize..4, 1usize..4, 1usize..5), 1..3).prop_map(|gs| {
        let gs: Vec<_> = gs.into_iter().map(|(s, m, n, i, j, c)| (s, m, n, i, j, c.min(m * n))).collect();
        shape(&gs)
    })
}

fn tiny(seed: u64, lim: &TinyLimits) -> (cddp_core::instance::CddpInstance, Vec<AmbiguityMember>) {
    let inst = tiny_instance(seed, lim);
    let members = tiny_members(&inst, seed, lim);
    (inst, members)
}

fn sd_config(rn: f64) -> SdConfig {
    SdConfig {
        profiles: vec![SdProfile { threshold: 0.8 * rn, surplus_cap: rn, expected_cap: 0.3 * rn }],
        ..SdConfig::slack()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn generated_volumes_add_up(seed in 0u64..1000, shape in small_shape()) {
        let inst = generate_instance(seed, &shape, &GeneratorConfig::default()).unwrap();
        let again = generate_instance(seed, &shape, &GeneratorConfig::default()).unwrap();
        prop_assert_eq!(inst.to_json(), again.to_json());
        let nd = inst.nominal.clone().unwrap();
        prop_assert_eq!(nd.group_weights.iter().sum::<f64>(), 1.0);
        for sc in &inst.scenarios {
            let sd = inst.scenario_data(sc.id).unwrap();
            let mut s = vec![0.0; inst.num_origins];
            let mut r = vec![0.0; inst.num_destinations];
            for &(m, n, h) in &sc.h {
                s[m] += h;
                r[n] += h;
            }
            prop_assert_eq!(&sd.s, &s);
            prop_assert_eq!(&sd.r, &r);
        }
    }

    #[test]
    fn disruption_never_adds_accepted_doors(seed in 0u64..1000, bump in 0.0f64..1.0, door in 0usize..4) {
        let inst = generate_instance(seed, &shape(&[(2, 3, 3, 3, 3, 5)]), &GeneratorConfig::default()).unwrap();
        for sc in &inst.scenarios {
            let base = derive_scenario_data(&inst, sc.id, &sc.h, &sc.d_strip, &sc.d_stack).unwrap();
            let mut ds = sc.d_strip.clone();
            let mut dt = sc.d_stack.clone();
            let i = door % ds.len();
            ds[i] = (ds[i] + bump).min(1.0);
            let j = door % dt.len();
            dt[j] = (dt[j] + bump).min(1.0);
            let more = derive_scenario_data(&inst, sc.id, &sc.h, &ds, &dt).unwrap();
            for (a, b) in more.strip_accept.iter().zip(&base.strip_accept) {
                prop_assert!(a.iter().all(|x| b.contains(x)));
            }
            for (a, b) in more.stack_accept.iter().zip(&base.stack_accept) {
                prop_assert!(a.iter().all(|x| b.contains(x)));
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn ambiguity_pool_invariants(seed in 0u64..1000, t1 in 0.0f64..20.0, t2 in 0.0f64..20.0) {
        let inst = generate_instance(seed, &shape(&[(3, 3, 3, 2, 2, 4), (2, 2, 3, 2, 2, 3)]), &GeneratorConfig::default()).unwrap();
        let nd = NominalDistribution::from_instance(&inst).unwrap();
        let cfg = PerturbationConfig { per_family: 3, seed, ..PerturbationConfig::default() };
        let one = par::with_threads(1, || generate_candidates(&nd, &cfg).unwrap());
        let many = par::with_threads(4, || generate_candidates(&nd, &cfg).unwrap());
        prop_assert_eq!(&one, &many);
        for m in &one.members {
            prop_assert!((m.weight_sum() - 1.0).abs() <= 1e-10);
            prop_assert!(m.proximity >= 0.0);
        }
        for rho in [Rho::One, Rho::Two, Rho::Inf] {
            prop_assert_eq!(wasserstein_proximity(&AmbiguityMember::nominal(&nd), &nd, rho).unwrap(), 0.0);
        }
        let (lo, hi) = (t1.min(t2), t1.max(t2));
        let small = select_ambiguity(&one.members, lo, usize::MAX);
        let large = select_ambiguity(&one.members, hi, usize::MAX);
        prop_assert!(small.iter().all(|m| large.contains(m)));
    }

    #[test]
    fn oracle_is_invariant_under_relabeling(seed in 0u64..10_000) {
        let (inst, members) = tiny(seed, &TinyLimits::RN);
        let data = DroData::new(&inst, &members).unwrap();
        let base = oracle_rn(&inst, &data, &OracleLimits::default()).unwrap().objective;
        let mut shuffled = data.clone();
        shuffled.members.reverse();
        for m in &mut shuffled.members {
            m.scenarios.reverse();
            m.weights.reverse();
        }
        let other = oracle_rn(&inst, &shuffled, &OracleLimits::default()).unwrap().objective;
        prop_assert!((base - other).abs() <= 1e-9 * (1.0 + base.abs()));
    }

    #[test]
    fn oracle_is_monotone_in_penalty_and_capacity(seed in 0u64..10_000, extra in 1.0f64..50.0) {
        let (inst, members) = tiny(seed, &TinyLimits::RN);
        let lim = OracleLimits::default();
        let base = oracle_rn(&inst, &DroData::new(&inst, &members).unwrap(), &lim).unwrap().objective;

        let mut pricier = inst.clone();
        pricier.outsourcing_penalty += extra;
        let up = oracle_rn(&pricier, &DroData::new(&pricier, &members).unwrap(), &lim).unwrap().objective;
        prop_assert!(up >= base - 1e-9);

        let mut roomier = inst.clone();
        let door = &mut roomier.strip.doors[0];
        door.capacity_levels.last_mut().unwrap().nominal_capacity += extra;
        let down = oracle_rn(&roomier, &DroData::new(&roomier, &members).unwrap(), &lim).unwrap().objective;
        prop_assert!(down <= base + 1e-9);
    }

    #[test]
    fn dominance_costs_more_and_larger_sets_cost_more(seed in 0u64..10_000) {
        let (inst, members) = tiny(seed, &TinyLimits::SD);
        let lim = OracleLimits::default();
        let data = DroData::new(&inst, &members).unwrap();
        let rn = oracle_rn(&inst, &data, &lim).unwrap().objective;
        let sd = sd_config(rn).resolve(&inst, &data).unwrap();
        if let Some(s) = oracle_sd(&inst, &data, &sd, &lim).unwrap() {
            prop_assert!(s.objective >= rn - 1e-9);
        }
        for k in 1..members.len() {
            let sub = DroData::new(&inst, &members[..k]).unwrap();
            let z = oracle_rn(&inst, &sub, &lim).unwrap().objective;
            prop_assert!(z <= rn + 1e-9);
        }
    }

    #[test]
    fn selected_member_attains_the_robust_cost(seed in 0u64..10_000) {
        let (inst, members) = tiny(seed, &TinyLimits::SD);
        let data = DroData::new(&inst, &members).unwrap();
        let rn = oracle_rn(&inst, &data, &OracleLimits::default()).unwrap().objective;
        let cfg = SolveConfig { variant: Variant::Sd, sd: Some(sd_config(rn)), rel_gap: 1e-12, abs_gap: 1e-9, ..SolveConfig::default() };
        let r = solve(&inst, &data, &cfg, &OracleLimits::default()).unwrap();
        if r.status == SolveStatus::Optimal {
            let p = r.selected_member.unwrap();
            prop_assert!((r.member_costs[p] - r.objective.unwrap()).abs() <= 1e-6);
        }
    }

    #[test]
    fn builds_are_deterministic(seed in 0u64..10_000) {
        let (inst, members) = tiny(seed, &TinyLimits::SD);
        let data = DroData::new(&inst, &members).unwrap();
        let a = to_lp_string(&build_lip_rn(&inst, &data).unwrap().model);
        let b = to_lp_string(&build_lip_rn(&inst, &data).unwrap().model);
        prop_assert_eq!(a, b);
        let sd = sd_config(100.0).resolve(&inst, &data).unwrap();
        let a = to_lp_string(&build_lip_sd(&inst, &data, &sd).unwrap().model);
        let b = to_lp_string(&build_lip_sd(&inst, &data, &sd).unwrap().model);
        prop_assert_eq!(a, b);
    }

    #[test]
    fn report_arithmetic_recomputes(seed in 0u64..10_000, reference in 1.0f64..1000.0) {
        let (inst, members) = tiny(seed, &TinyLimits::RN);
        let data = DroData::new(&inst, &members).unwrap();
        let cfg = BoundsConfig { reference: Some(reference), ..BoundsConfig::default() };
        let r = run_bounds(&inst, &data, &cfg).unwrap();
        let z = r.z_ub.unwrap();
        prop_assert_eq!(r.gap_h, Some(gap_h(z, r.z_lp, r.z_lb)));
        prop_assert_eq!(r.gr_h, Some(goodness_ratio(z, reference)));
        prop_assert_eq!(r.f_h, Some(z - r.c1_h.unwrap()));
        prop_assert_eq!(gap_h(z, r.z_lp, r.z_lb), 100.0 * (z - r.z_lp.max(r.z_lb)) / z.abs());
    }
}
