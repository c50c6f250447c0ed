use cddp_core::fixtures::{tiny_instance, tiny_members, TinyLimits};
use cddp_core::models::{
    build_lip_rn, build_lip_sd, build_svc_model, ClusterScheme, DroData, SdConfig, SdProfile, Variant,
};
use cddp_core::oracle::{oracle_rn, oracle_sd, OracleLimits};
use cddp_milp::{solve_milp, MilpLimits, SolveStatus};

fn limits() -> MilpLimits {
    MilpLimits { rel_gap: 1e-12, abs_gap: 1e-9, ..MilpLimits::default() }
}

#[test]
fn robust_model_matches_enumeration() {
    for seed in 0..40 {
        let inst = tiny_instance(seed, &TinyLimits::RN);
        let data = DroData::new(&inst, &tiny_members(&inst, seed, &TinyLimits::RN)).unwrap();
        let want = oracle_rn(&inst, &data, &OracleLimits::default()).unwrap();
        let built = build_lip_rn(&inst, &data).unwrap();
        let sol = solve_milp(&built.model, &limits());
        assert_eq!(sol.status, SolveStatus::Optimal, "seed {seed}");
        let got = sol.objective.unwrap();
        assert!((got - want.objective).abs() <= 1e-6, "seed {seed}: {got} vs {}", want.objective);
        let scheme = ClusterScheme::contiguous(&data, 2).unwrap();
        let svc = build_svc_model(Variant::Rn, &inst, &data, &scheme, None).unwrap();
        let s2 = solve_milp(&svc.model, &limits());
        assert!((s2.objective.unwrap() - want.objective).abs() <= 1e-6, "svc seed {seed}");
    }
}

#[test]
fn dominance_model_matches_enumeration() {
    let mut feasible = 0;
    for seed in 0..40 {
        let inst = tiny_instance(seed, &TinyLimits::SD);
        let data = DroData::new(&inst, &tiny_members(&inst, seed, &TinyLimits::SD)).unwrap();
        let rn = oracle_rn(&inst, &data, &OracleLimits::default()).unwrap();
        let t = rn.objective * 0.8;
        let cfg = SdConfig {
            profiles: vec![SdProfile { threshold: t, surplus_cap: rn.objective, expected_cap: rn.objective * 0.3 }],
            ..SdConfig::slack()
        };
        let sd = cfg.resolve(&inst, &data).unwrap();
        let want = oracle_sd(&inst, &data, &sd, &OracleLimits::default()).unwrap();
        let built = build_lip_sd(&inst, &data, &sd).unwrap();
        let sol = solve_milp(&built.model, &limits());
        let scheme = ClusterScheme::contiguous(&data, 2).unwrap();
        let svc = build_svc_model(Variant::Sd, &inst, &data, &scheme, Some(&sd)).unwrap();
        let s2 = solve_milp(&svc.model, &limits());
        match want {
            Some(w) => {
                feasible += 1;
                assert_eq!(sol.status, SolveStatus::Optimal, "seed {seed}");
                let got = sol.objective.unwrap();
                assert!((got - w.objective).abs() <= 1e-6, "seed {seed}: {got} vs {}", w.objective);
                assert!((s2.objective.unwrap() - w.objective).abs() <= 1e-6, "svc seed {seed}");
            }
            None => {
                assert_eq!(sol.status, SolveStatus::Infeasible, "seed {seed}");
                assert_eq!(s2.status, SolveStatus::Infeasible, "svc seed {seed}");
            }
        }
    }
    assert!(feasible >= 10, "only {feasible} feasible cases");
}
