use cddp_core::bounds::{
    candidates, ld_bound, ld_subgradient_loop, lower_bound, upper_bound, LagrangeMultipliers,
};
use cddp_core::fixtures::{tiny_instance, tiny_members, TinyLimits};
use cddp_core::models::{build_lip_rn, fix_first_stage, ClusterScheme, DroData, SdConfig, SdProfile, Variant};
use cddp_core::oracle::{oracle_rn, oracle_sd, OracleLimits};
use cddp_milp::{solve_milp, MilpLimits};

fn limits() -> MilpLimits {
    MilpLimits { rel_gap: 1e-12, abs_gap: 1e-9, ..MilpLimits::default() }
}

#[test]
fn rn_sandwich_and_decoupled_evaluation() {
    let mut finite = 0;
    for seed in 0..25 {
        let inst = tiny_instance(seed, &TinyLimits::RN);
        let data = DroData::new(&inst, &tiny_members(&inst, seed, &TinyLimits::RN)).unwrap();
        let z = oracle_rn(&inst, &data, &OracleLimits::default()).unwrap().objective;
        let scheme = ClusterScheme::contiguous(&data, 2).unwrap();
        let lb = lower_bound(Variant::Rn, &inst, &data, &scheme, None, &limits()).unwrap();
        assert!(lb.z_lb <= z + 1e-6, "seed {seed}: lb {} > {z}", lb.z_lb);
        assert!(lb.z_lb >= lb.z_lp);
        let c = candidates(&inst, &lb);
        let ub = upper_bound(Variant::Rn, &inst, &data, None, &c, &limits()).unwrap();
        let zu = ub.z_ub.unwrap();
        assert!(zu >= z - 1e-6, "seed {seed}: ub {zu} < {z}");
        let full = build_lip_rn(&inst, &data).unwrap();
        for e in &ub.evaluations {
            let fixed = fix_first_stage(&full, &inst, &e.candidate.design).unwrap();
            let mono = solve_milp(&fixed.model, &limits()).objective.unwrap();
            assert!((mono - e.objective.unwrap()).abs() <= 1e-6, "seed {seed}: {mono} vs {:?}", e.objective);
        }
        let zero = LagrangeMultipliers::zeros(&inst, &scheme, data.members.len(), 0);
        let ld0 = ld_bound(&inst, &data, &scheme, None, &zero, &limits()).unwrap();
        let scd = lb.member_bounds.iter().flatten().cloned().fold(f64::NEG_INFINITY, f64::max);
        assert!((ld0.value.unwrap() - scd).abs() <= 1e-6, "seed {seed}");
        for k in 0..5 {
            let mut nu = LagrangeMultipliers::random(&inst, &scheme, data.members.len(), 0, seed * 100 + k, 3.0);
            if k % 2 == 0 {
                nu.phi.iter_mut().for_each(|x| *x = 0.0);
            }
            let ev = ld_bound(&inst, &data, &scheme, None, &nu, &limits()).unwrap();
            if k % 2 == 0 {
                finite += 1;
                assert!(ev.value.unwrap() <= z + 1e-6, "seed {seed} k {k}");
            } else if let Some(v) = ev.value {
                assert!(v <= z + 1e-6, "seed {seed} k {k}: {v} > {z}");
            }
        }
        let tr = ld_subgradient_loop(&inst, &data, &scheme, None, zero, 3, (1.0, 10.0), &limits()).unwrap();
        assert!(tr.best.unwrap() <= z + 1e-6);
    }
    assert!(finite > 0);
}

#[test]
fn sd_sandwich_and_ld_validity() {
    let mut checked = 0;
    for seed in 0..20 {
        let inst = tiny_instance(seed, &TinyLimits::SD);
        let data = DroData::new(&inst, &tiny_members(&inst, seed, &TinyLimits::SD)).unwrap();
        let rn = oracle_rn(&inst, &data, &OracleLimits::default()).unwrap();
        let cfg = SdConfig {
            profiles: vec![SdProfile { threshold: rn.objective * 0.8, surplus_cap: rn.objective, expected_cap: rn.objective * 0.3 }],
            ..SdConfig::slack()
        };
        let sd = cfg.resolve(&inst, &data).unwrap();
        let Some(want) = oracle_sd(&inst, &data, &sd, &OracleLimits::default()).unwrap() else { continue };
        let z = want.objective;
        checked += 1;
        let scheme = ClusterScheme::contiguous(&data, 2).unwrap();
        let lb = lower_bound(Variant::Sd, &inst, &data, &scheme, Some(&sd), &limits()).unwrap();
        assert!(lb.z_lb <= z + 1e-6, "seed {seed}: lb {} > {z}", lb.z_lb);
        let c = candidates(&inst, &lb);
        let ub = upper_bound(Variant::Sd, &inst, &data, Some(&sd), &c, &limits()).unwrap();
        if let Some(zu) = ub.z_ub {
            let e = &ub.evaluations[ub.selected.unwrap()];
            if e.violations.iter().all(|v| v.violation == 0.0) {
                assert!(zu >= z - 1e-6, "seed {seed}: ub {zu} < {z}");
            }
        }
        for k in 0..5 {
            let nu = LagrangeMultipliers::random(&inst, &scheme, data.members.len(), 1, seed * 100 + k, 2.0);
            let ev = ld_bound(&inst, &data, &scheme, Some(&sd), &nu, &limits()).unwrap();
            if let Some(v) = ev.value {
                assert!(v <= z + 1e-6, "seed {seed} k {k}: {v} > {z}");
            }
        }
    }
    assert!(checked >= 5);
}
