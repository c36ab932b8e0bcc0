//! Built-in property suite: quick executable checks of the structural
//! invariants the library is built on, printable as a pass/fail table.

use crate::admm::{admm_iteration, to_drs_coordinates, ActivationSampler, NetworkState};
use crate::analysis::{check_beta_condition, check_gamma_condition};
use crate::error::{Error, Result};
use crate::graph::{CommGraph, SubgraphCover};
use crate::problems::{generate_quadratics, LocalObjective, ProxParams, QuadraticObjective};
use crate::splitting::{merit_forms, rbc_drs_step, BlockSelection, DrsState};
use nalgebra::{DMatrix, DVector};
use rand::Rng;

type CheckResult = std::result::Result<String, String>;

fn check_cover_validation() -> CheckResult {
    let g = CommGraph::new(4, &[(1, 2), (2, 3), (3, 4)]).map_err(|e| e.to_string())?;
    let cases: [(&str, Vec<Vec<usize>>); 3] = [
        ("disconnected subgraph", vec![vec![1, 3], vec![2, 3, 4]]),
        ("uncovered node", vec![vec![1, 2], vec![2, 3]]),
        ("disconnected union", vec![vec![1, 2], vec![3, 4]]),
    ];
    for (name, sets) in cases {
        match SubgraphCover::build(&g, &sets, 1) {
            Err(Error::CoverInvalid(_)) => {}
            other => return Err(format!("{name}: expected rejection, got {other:?}")),
        }
    }
    Ok("3 defect classes rejected".into())
}

fn check_prox_lemmas() -> CheckResult {
    let mut rng = crate::rng::stream_rng(101, 0);
    let gamma = 0.05;
    let mut worst: f64 = 0.0;
    for trial in 0..100 {
        let d = 3;
        let a = DMatrix::from_fn(d, d, |_, _| rng.gen::<f64>() - 0.5);
        let q = (&a + a.transpose()) * 0.5;
        let obj = QuadraticObjective::new(q, DVector::zeros(d));
        let s = obj.smoothness().unwrap();
        if gamma * s.lipschitz >= 0.9 {
            continue;
        }
        let x1 = DVector::from_fn(d, |_, _| 2.0 * rng.gen::<f64>() - 1.0);
        let x2 = DVector::from_fn(d, |_, _| 2.0 * rng.gen::<f64>() - 1.0);
        let p = ProxParams::default();
        let y1 = obj.prox(&x1, 1.0 / gamma, None, &p).map_err(|e| e.to_string())?.point;
        let y2 = obj.prox(&x2, 1.0 / gamma, None, &p).map_err(|e| e.to_string())?.point;
        let inner = (&x2 - &x1).dot(&(&y2 - &y1));
        let lhs1 = (1.0 - gamma * s.weak_convexity) * (&y2 - &y1).norm_squared();
        let lhs2 = (&x2 - &x1).norm_squared() / (1.0 + gamma * s.lipschitz);
        let viol = (lhs1 - inner).max(lhs2 - inner).max(0.0);
        worst = worst.max(viol);
        if viol > 1e-10 {
            return Err(format!("trial {trial}: coercivity violated by {viol:e}"));
        }
        // Optimality identity x = y + gamma grad f(y).
        let recon = &y1 + obj.smooth_gradient(&y1) * gamma;
        if (recon - &x1).norm() > 1e-9 {
            return Err(format!("trial {trial}: optimality identity broken"));
        }
    }
    Ok(format!("worst violation {worst:.1e}"))
}

fn check_merit_forms() -> CheckResult {
    let mut rng = crate::rng::stream_rng(102, 0);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let p = 12;
        let u = DVector::from_fn(p, |_, _| 4.0 * rng.gen::<f64>() - 2.0);
        let v = DVector::from_fn(p, |_, _| 4.0 * rng.gen::<f64>() - 2.0);
        let s = DVector::from_fn(p, |_, _| 4.0 * rng.gen::<f64>() - 2.0);
        let f = 10.0 * rng.gen::<f64>() - 5.0;
        let gamma = 0.05 + rng.gen::<f64>();
        let forms = merit_forms(&u, &v, &s, f, 0.0, gamma);
        let scale = forms[0].abs().max(1.0);
        worst = worst
            .max((forms[0] - forms[1]).abs() / scale)
            .max((forms[0] - forms[2]).abs() / scale);
    }
    if worst < 1e-10 {
        Ok(format!("max relative spread {worst:.1e}"))
    } else {
        Err(format!("forms disagree by {worst:.1e}"))
    }
}

fn check_equivalence() -> CheckResult {
    let cover = SubgraphCover::ring(3, 2).map_err(|e| e.to_string())?;
    let objs: Vec<Box<dyn LocalObjective>> = generate_quadratics(5, 3, 2)
        .into_iter()
        .map(|a| Box::new(a) as Box<dyn LocalObjective>)
        .collect();
    let beta = 4.0;
    let mut admm = NetworkState::zeros(&cover, beta);
    let mut drs = DrsState::new(DVector::zeros(cover.p()), 1.0 / beta, &cover)
        .map_err(|e| e.to_string())?;
    let mut sampler = ActivationSampler::fixed(cover.m(), 2, 3);
    let params = ProxParams::default();
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let active = sampler.draw();
        admm_iteration(&mut admm, &cover, &objs, &active, &params).map_err(|e| e.to_string())?;
        let sel = BlockSelection::from_subgraphs(&cover, &active);
        rbc_drs_step(&mut drs, &cover, &objs, &sel, &params).map_err(|e| e.to_string())?;
        worst = worst.max((to_drs_coordinates(&admm, &cover) - &drs.s).norm());
    }
    if worst <= 1e-9 {
        Ok(format!("max deviation {worst:.2e}"))
    } else {
        Err(format!("trajectories diverged by {worst:.2e}"))
    }
}

fn check_condition_arithmetic() -> CheckResult {
    let a = check_gamma_condition(0.05, 1.0, 1.0, 100, 100);
    if (a.value - (-0.2225)).abs() > 1e-12 || !a.feasible {
        return Err(format!("gamma=0.05 value {}", a.value));
    }
    let b = check_gamma_condition(0.1, 1.0, 1.0, 100, 100);
    if (b.value - 0.06).abs() > 1e-12 || b.feasible {
        return Err(format!("gamma=0.1 value {}", b.value));
    }
    let g = check_gamma_condition(1.0 / 17.0, 2.0, 1.0, 60, 45);
    let r = check_beta_condition(17.0, 2.0, 1.0, 60, 45).map_err(|e| e.to_string())?;
    if r.value != g.value {
        return Err("penalty/step-size duality broken".into());
    }
    let f = check_gamma_condition(1e-8, 1.0, 1.0, 1000, 1000)
        .minimal_fraction
        .ok_or("no minimal fraction")?;
    if (f - 0.5).abs() > 1e-6 {
        return Err(format!("small-step threshold {f}"));
    }
    Ok("reference values reproduced".into())
}

/// Locality: inactive subgraphs must be untouched bit for bit. With
/// `inject_fault` the check deliberately corrupts an inactive block first and
/// must then FAIL (negative control for the test itself).
fn check_locality(inject_fault: bool) -> CheckResult {
    let cover = SubgraphCover::ring(5, 2).map_err(|e| e.to_string())?;
    let objs: Vec<Box<dyn LocalObjective>> = generate_quadratics(8, 5, 2)
        .into_iter()
        .map(|a| Box::new(a) as Box<dyn LocalObjective>)
        .collect();
    let mut state = NetworkState::zeros(&cover, 3.0);
    let params = ProxParams::default();
    let all: Vec<usize> = (0..cover.m()).collect();
    admm_iteration(&mut state, &cover, &objs, &all, &params).map_err(|e| e.to_string())?;
    let before = state.clone();
    admm_iteration(&mut state, &cover, &objs, &[0], &params).map_err(|e| e.to_string())?;
    if inject_fault {
        // Corrupt a copy owned by an inactive subgraph.
        let d = cover.dim();
        let b = cover.subgraph_blocks(2).next().unwrap();
        state.z[b * d] += 1e-6;
    }
    let d = cover.dim();
    for i in 1..cover.m() {
        for b in cover.subgraph_blocks(i) {
            if state.z.rows(b * d, d) != before.z.rows(b * d, d)
                || state.y.rows(b * d, d) != before.y.rows(b * d, d)
            {
                return Err(format!("inactive subgraph {i} moved"));
            }
        }
    }
    Ok("inactive state bit-identical".into())
}

/// Runs every check, prints one line per check, and returns whether all
/// passed.
pub fn selftest(inject_fault: bool, out: &mut dyn std::io::Write) -> Result<bool> {
    let checks: Vec<(&str, CheckResult)> = vec![
        ("cover-validation", check_cover_validation()),
        ("prox-lemmas", check_prox_lemmas()),
        ("merit-forms", check_merit_forms()),
        ("splitting-equivalence", check_equivalence()),
        ("condition-arithmetic", check_condition_arithmetic()),
        ("update-locality", check_locality(inject_fault)),
    ];
    let mut all_ok = true;
    for (name, result) in checks {
        match result {
            Ok(detail) => writeln!(out, "PASS {name}: {detail}")?,
            Err(detail) => {
                all_ok = false;
                writeln!(out, "FAIL {name}: {detail}")?;
            }
        }
    }
    Ok(all_ok)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_checks_pass() {
        let mut out = Vec::new();
        assert!(selftest(false, &mut out).unwrap());
        let text = String::from_utf8(out).unwrap();
        assert_eq!(text.lines().count(), 6);
        assert!(text.lines().all(|l| l.starts_with("PASS")));
    }

    #[test]
    fn injected_fault_is_caught() {
        let mut out = Vec::new();
        assert!(!selftest(true, &mut out).unwrap());
        let text = String::from_utf8(out).unwrap();
        assert!(text.contains("FAIL update-locality"));
    }
}
