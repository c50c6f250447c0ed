use std::time::Duration;

use cddp_milp::*;
use proptest::prelude::*;

fn lp(name: &str) -> MilpModel {
    MilpModel::new(name)
}

#[test]
fn single_variable_lower_row() {
    let mut m = lp("t");
    let x = m.continuous("x", 0.0, 10.0).unwrap();
    m.set_obj(x, 1.0);
    m.add_row("r", [(x, 1.0)], Sense::Ge, 1.0).unwrap();
    let s = solve_lp(&m);
    assert_eq!(s.status, SolveStatus::Optimal);
    assert!((s.objective.unwrap() - 1.0).abs() < 1e-9);
    assert!(s.audit.unwrap().passed());
}

#[test]
fn two_variable_vertex() {
    let mut m = lp("t");
    let x = m.continuous("x", 0.0, f64::INFINITY).unwrap();
    let y = m.continuous("y", 0.0, f64::INFINITY).unwrap();
    m.set_obj(x, -1.0);
    m.set_obj(y, -1.0);
    m.add_row("r", [(x, 1.0), (y, 1.0)], Sense::Le, 1.0).unwrap();
    let s = solve_lp(&m);
    assert!((s.objective.unwrap() + 1.0).abs() < 1e-9);
}

#[test]
fn infeasible_and_unbounded_are_statuses() {
    let mut m = lp("inf");
    let x = m.continuous("x", 0.0, 1.0).unwrap();
    m.add_row("r", [(x, 1.0)], Sense::Ge, 2.0).unwrap();
    assert_eq!(solve_lp(&m).status, SolveStatus::Infeasible);
    assert_eq!(solve_milp(&m, &MilpLimits::default()).status, SolveStatus::Infeasible);

    let mut m = lp("unb");
    let x = m.continuous("x", 0.0, f64::INFINITY).unwrap();
    let y = m.continuous("y", f64::NEG_INFINITY, f64::INFINITY).unwrap();
    m.set_obj(y, 1.0);
    m.add_row("r", [(x, 1.0), (y, 1.0)], Sense::Ge, 0.0).unwrap();
    assert_eq!(solve_lp(&m).status, SolveStatus::Unbounded);
}

#[test]
fn equality_rows_and_free_columns() {
    let mut m = lp("eq");
    let x = m.continuous("x", f64::NEG_INFINITY, f64::INFINITY).unwrap();
    let y = m.continuous("y", 0.0, 5.0).unwrap();
    m.set_obj(x, 1.0);
    m.set_obj(y, 2.0);
    m.add_row("e", [(x, 1.0), (y, -1.0)], Sense::Eq, -3.0).unwrap();
    m.add_row("g", [(x, 1.0), (y, 1.0)], Sense::Ge, 1.0).unwrap();
    // x = y - 3, 2y - 3 >= 1 -> y >= 2, obj = 3y - 3 -> 3
    let s = solve_lp(&m);
    assert!((s.objective.unwrap() - 3.0).abs() < 1e-9);
    assert!(s.audit.unwrap().passed());
}

#[test]
fn single_feasible_binary_point() {
    let mut m = lp("one");
    let a = m.binary("a").unwrap();
    let b = m.binary("b").unwrap();
    let c = m.binary("c").unwrap();
    m.set_obj(a, 1.0);
    m.set_obj(b, 1.0);
    m.set_obj(c, 1.0);
    m.add_row("ab", [(a, 1.0), (b, 1.0)], Sense::Eq, 1.0).unwrap();
    m.add_row("a", [(a, 2.0), (c, -1.0)], Sense::Ge, 1.5).unwrap();
    m.add_row("b", [(b, 1.0), (c, 1.0)], Sense::Le, 0.0).unwrap();
    let s = solve_milp(&m, &MilpLimits::default());
    assert_eq!(s.status, SolveStatus::Optimal);
    assert_eq!(s.values, vec![1.0, 0.0, 0.0]);
}

#[test]
fn knapsack_matches_enumeration() {
    let value = [10.0, 13.0, 7.0, 8.0, 12.0, 5.0];
    let weight = [5.0, 7.0, 3.0, 4.0, 6.0, 2.0];
    let cap = 15.0;
    let mut best = 0.0f64;
    for mask in 0u32..64 {
        let (mut v, mut w) = (0.0, 0.0);
        for i in 0..6 {
            if mask >> i & 1 == 1 {
                v += value[i];
                w += weight[i];
            }
        }
        if w <= cap {
            best = best.max(v);
        }
    }
    let mut m = lp("knap");
    let xs: Vec<VarId> = (0..6).map(|i| m.binary(format!("x[{i}]")).unwrap()).collect();
    for i in 0..6 {
        m.set_obj(xs[i], -value[i]);
    }
    m.add_row("cap", xs.iter().zip(weight).map(|(&x, w)| (x, w)), Sense::Le, cap).unwrap();
    let s = solve_milp(&m, &MilpLimits::default());
    assert_eq!(s.status, SolveStatus::Optimal);
    assert!((s.objective.unwrap() + best).abs() < 1e-9);
    assert!(m.check_feasibility(&s.values, 1e-9).is_empty());
}

#[test]
fn zero_time_limit_reports_time_limit() {
    let mut m = lp("z");
    let x = m.binary("x").unwrap();
    m.set_obj(x, 1.0);
    let s = solve_milp(&m, &MilpLimits::default().with_time_limit(Duration::ZERO));
    assert_eq!(s.status, SolveStatus::TimeLimit);
}

#[test]
fn sos1_allows_one_member() {
    let mut m = lp("sos");
    let a = m.binary("a").unwrap();
    let b = m.binary("b").unwrap();
    m.set_obj(a, -1.0);
    m.set_obj(b, -2.0);
    m.add_sos1("s", vec![a, b]).unwrap();
    let s = solve_milp(&m, &MilpLimits::default());
    assert!((s.objective.unwrap() + 2.0).abs() < 1e-9);
}

#[test]
fn hint_is_used_and_validated() {
    let mut m = lp("hint");
    let a = m.binary("a").unwrap();
    m.set_obj(a, 1.0);
    m.add_row("r", [(a, 1.0)], Sense::Ge, 0.5).unwrap();
    m.set_hint(vec![0.0]);
    let s = solve_milp(&m, &MilpLimits::default());
    assert_eq!(s.values, vec![1.0]);
}

/// Exhaustive vertex enumeration for `min c x, A x <= b, 0 <= x <= u` in 3 dims.
fn vertex_oracle(c: &[f64; 3], a: &[[f64; 3]], b: &[f64], u: f64) -> Option<f64> {
    let mut planes: Vec<([f64; 3], f64)> = a.iter().cloned().zip(b.iter().cloned()).collect();
    for k in 0..3 {
        let mut e = [0.0; 3];
        e[k] = 1.0;
        planes.push((e, 0.0));
        planes.push((e, u));
    }
    let feasible = |x: &[f64; 3]| {
        x.iter().all(|&v| v >= -1e-9 && v <= u + 1e-9)
            && a.iter().zip(b).all(|(r, &rhs)| r[0] * x[0] + r[1] * x[1] + r[2] * x[2] <= rhs + 1e-9)
    };
    let mut best: Option<f64> = None;
    let n = planes.len();
    for i in 0..n {
        for j in i + 1..n {
            for k in j + 1..n {
                let m = [planes[i].0, planes[j].0, planes[k].0];
                let r = [planes[i].1, planes[j].1, planes[k].1];
                let det = m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
                    - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
                    + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
                if det.abs() < 1e-10 {
                    continue;
                }
                let mut x = [0.0; 3];
                for col in 0..3 {
                    let mut mm = m;
                    for row in 0..3 {
                        mm[row][col] = r[row];
                    }
                    let d = mm[0][0] * (mm[1][1] * mm[2][2] - mm[1][2] * mm[2][1])
                        - mm[0][1] * (mm[1][0] * mm[2][2] - mm[1][2] * mm[2][0])
                        + mm[0][2] * (mm[1][0] * mm[2][1] - mm[1][1] * mm[2][0]);
                    x[col] = d / det;
                }
                if feasible(&x) {
                    let z = c[0] * x[0] + c[1] * x[1] + c[2] * x[2];
                    best = Some(best.map_or(z, |b: f64| b.min(z)));
                }
            }
        }
    }
    best
}

fn dense_lp(c: &[f64; 3], a: &[[f64; 3]], b: &[f64], u: f64) -> MilpModel {
    let mut m = lp("dense");
    let xs: Vec<VarId> = (0..3).map(|k| m.continuous(format!("x{k}"), 0.0, u).unwrap()).collect();
    for k in 0..3 {
        m.set_obj(xs[k], c[k]);
    }
    for (i, (row, &rhs)) in a.iter().zip(b).enumerate() {
        m.add_row(format!("r{i}"), (0..3).map(|k| (xs[k], row[k])), Sense::Le, rhs).unwrap();
    }
    m
}

#[test]
fn dense_lp_matches_vertex_enumeration_fixed() {
    let c = [-3.0, -2.0, -4.0];
    let a = [[1.0, 1.0, 2.0], [2.0, 0.0, 3.0], [2.0, 1.0, 3.0]];
    let b = [4.0, 5.0, 7.0];
    let oracle = vertex_oracle(&c, &a, &b, 10.0).unwrap();
    let s = solve_lp(&dense_lp(&c, &a, &b, 10.0));
    assert!((s.objective.unwrap() - oracle).abs() < 1e-7);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn random_dense_lp_matches_vertex_enumeration(
        c in prop::array::uniform3(-5i32..=5),
        rows in prop::collection::vec((prop::array::uniform3(-4i32..=6), -3i32..=12), 1..5),
    ) {
        let c = c.map(f64::from);
        let a: Vec<[f64; 3]> = rows.iter().map(|(r, _)| r.map(f64::from)).collect();
        let b: Vec<f64> = rows.iter().map(|(_, v)| f64::from(*v)).collect();
        let oracle = vertex_oracle(&c, &a, &b, 4.0);
        let s = solve_lp(&dense_lp(&c, &a, &b, 4.0));
        match oracle {
            None => prop_assert_eq!(s.status, SolveStatus::Infeasible),
            Some(z) => {
                prop_assert_eq!(s.status, SolveStatus::Optimal);
                prop_assert!((s.objective.unwrap() - z).abs() < 1e-6, "{} vs {}", s.objective.unwrap(), z);
                prop_assert!(s.audit.unwrap().passed(), "{:?}", s.audit);
            }
        }
    }

    #[test]
    fn random_binary_program_matches_enumeration(
        c in prop::collection::vec(-9i32..=9, 5),
        rows in prop::collection::vec((prop::collection::vec(-3i32..=5, 5), 0i32..=8), 1..4),
        eq in prop::bool::ANY,
    ) {
        let mut m = lp("bin");
        let xs: Vec<VarId> = (0..5).map(|k| m.binary(format!("x[{k}]")).unwrap()).collect();
        for k in 0..5 {
            m.set_obj(xs[k], f64::from(c[k]));
        }
        for (i, (row, rhs)) in rows.iter().enumerate() {
            let sense = if eq && i == 0 { Sense::Eq } else { Sense::Le };
            m.add_row(format!("r{i}"), (0..5).map(|k| (xs[k], f64::from(row[k]))), sense, f64::from(*rhs)).unwrap();
        }
        let mut best: Option<f64> = None;
        for mask in 0u32..32 {
            let x: Vec<f64> = (0..5).map(|k| f64::from(mask >> k & 1)).collect();
            if m.check_feasibility(&x, 1e-9).is_empty() {
                let z = m.objective_value(&x);
                best = Some(best.map_or(z, |b: f64| b.min(z)));
            }
        }
        let s = solve_milp(&m, &MilpLimits::default());
        match best {
            None => prop_assert_eq!(s.status, SolveStatus::Infeasible),
            Some(z) => {
                prop_assert_eq!(s.status, SolveStatus::Optimal);
                prop_assert!((s.objective.unwrap() - z).abs() < 1e-9);
                prop_assert!(m.check_feasibility(&s.values, 1e-9).is_empty());
                prop_assert!(s.best_bound <= z + 1e-9);
            }
        }
        let again = solve_milp(&m, &MilpLimits::default());
        prop_assert_eq!(s, again);
    }

    #[test]
    fn mixed_model_solution_passes_recheck(
        cap in 1i32..=10,
        cost in prop::collection::vec(1i32..=9, 4),
        demand in prop::collection::vec(1i32..=6, 3),
    ) {
        // facility location: open binaries y_f, flows z_{f,d} >= 0
        let mut m = lp("fl");
        let ys: Vec<VarId> = (0..4).map(|f| m.binary(format!("y[{f}]")).unwrap()).collect();
        let mut zs = vec![];
        for f in 0..4 {
            m.set_obj(ys[f], f64::from(cost[f]) * 3.0);
            for d in 0..3 {
                let z = m.continuous(format!("z[{f},{d}]"), 0.0, f64::INFINITY).unwrap();
                m.set_obj(z, ((f + 2 * d) % 5) as f64 + 1.0);
                zs.push((f, d, z));
            }
        }
        for d in 0..3 {
            m.add_row(format!("dem[{d}]"), zs.iter().filter(|e| e.1 == d).map(|e| (e.2, 1.0)), Sense::Ge, f64::from(demand[d])).unwrap();
        }
        for f in 0..4 {
            let mut coeffs: Vec<(VarId, f64)> = zs.iter().filter(|e| e.0 == f).map(|e| (e.2, 1.0)).collect();
            coeffs.push((ys[f], -f64::from(cap)));
            m.add_row(format!("cap[{f}]"), coeffs, Sense::Le, 0.0).unwrap();
        }
        let s = solve_milp(&m, &MilpLimits::default());
        if s.status == SolveStatus::Optimal {
            prop_assert!(m.check_feasibility(&s.values, 1e-6).is_empty());
            // brute force over the 16 open sets, each an LP
            let mut best = f64::INFINITY;
            for mask in 0u32..16 {
                let mut fixed = m.clone();
                for f in 0..4 {
                    fixed.fix(ys[f], f64::from(mask >> f & 1));
                }
                let r = solve_lp(&fixed);
                if let Some(z) = r.objective {
                    best = best.min(z);
                }
            }
            prop_assert!((s.objective.unwrap() - best).abs() < 1e-6);
        } else {
            prop_assert_eq!(s.status, SolveStatus::Infeasible);
        }
    }
}

#[test]
fn export_import_round_trip() {
    let mut m = lp("rt");
    let x = m.binary("x[1,o]").unwrap();
    let y = m.continuous("F^w", 0.0, 9.0).unwrap();
    m.set_obj(x, 2.0);
    m.set_obj(y, 1.0);
    m.add_row("link", [(x, 3.0), (y, 1.0)], Sense::Ge, 2.0).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.lp");
    export_lp_file(&m, &path).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    assert!(text.contains("x(1,o)"));
    let s = solve_milp(&m, &MilpLimits::default());
    let mut buf = Vec::new();
    lpfile::write_solution(&m, &s.values, &mut buf).unwrap();
    let back = read_solution(&m, buf.as_slice()).unwrap();
    assert!((back.objective.unwrap() - s.objective.unwrap()).abs() < 1e-9);
}
