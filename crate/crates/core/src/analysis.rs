//! Convergence metrics, step-size/penalty condition arithmetic, smoothness
//! estimation, and the statistical checks used by the verification harness.

use crate::error::{Error, Result};
use crate::problems::{LocalObjective, NonsmoothSum};
use nalgebra::DVector;
use rand::Rng;
use rand_distr::StandardNormal;

/// Per-iteration trajectory record.
#[derive(Debug, Clone)]
pub struct RunRecord {
    pub iter: usize,
    /// Merit value; `f64::INFINITY` when the consensus indicator fires.
    pub merit: f64,
    pub grad_norm: f64,
    pub disagreement: f64,
    /// Composite prox-gradient residual at the node average (0 when the
    /// problem has no nonsmooth part beyond what the merit already covers).
    pub prox_residual: f64,
    pub active_ids: Vec<usize>,
    pub inner_iters: usize,
    pub wall_ms: f64,
}

/// `G = || sum_i grad f_i(x_bar) ||` at the node average, smooth parts only.
pub fn gradient_norm(objectives: &[Box<dyn LocalObjective>], x: &[DVector<f64>]) -> f64 {
    assert_eq!(objectives.len(), x.len());
    assert!(!x.is_empty());
    let d = x[0].len();
    let mut mean = DVector::zeros(d);
    for xj in x {
        assert_eq!(xj.len(), d);
        mean += xj;
    }
    mean /= x.len() as f64;
    let mut total = DVector::zeros(d);
    for o in objectives {
        total += o.smooth_gradient(&mean);
    }
    total.norm()
}

/// `D = max_j || x_j - x_bar ||`; zero iff all nodes agree.
pub fn disagreement(x: &[DVector<f64>]) -> f64 {
    assert!(!x.is_empty());
    let d = x[0].len();
    let mut mean = DVector::zeros(d);
    for xj in x {
        mean += xj;
    }
    mean /= x.len() as f64;
    x.iter().map(|xj| (xj - &mean).norm()).fold(0.0, f64::max)
}

/// Result of evaluating the step-size (or penalty) feasibility expression
/// `(1+gL)^2 + gL^2 + (5/2)g ell + (1+g)(1+g ell)^2 (1 - c/p) - 3/2 < 0`.
#[derive(Debug, Clone)]
pub struct ConditionReport {
    /// Step size the expression was evaluated at (`1/beta` for the penalty form).
    pub gamma: f64,
    /// Penalty parameter, when the report came through the beta route.
    pub beta: Option<f64>,
    pub lipschitz: f64,
    pub weak_convexity: f64,
    pub p: usize,
    pub c_size: usize,
    /// The bracketed expression itself.
    pub value: f64,
    /// The expression scaled by `1/gamma`.
    pub alpha_value: f64,
    pub feasible: bool,
    /// Smallest activation fraction `|C|/p` making the expression negative at
    /// this step size (bisection, 1e-6); `None` when even full activation fails.
    pub minimal_fraction: Option<f64>,
    /// Smallest feasible penalty at this activation fraction (beta route only).
    pub minimal_beta: Option<f64>,
}

fn condition_expression(gamma: f64, l: f64, ell: f64, fraction: f64) -> f64 {
    let a = 1.0 + gamma * l;
    let b = 1.0 + gamma * ell;
    a * a + gamma * l * l + 2.5 * gamma * ell + (1.0 + gamma) * b * b * (1.0 - fraction) - 1.5
}

/// Evaluates the step-size condition for randomized block selection with
/// `c_size` of `p` coordinates active, and locates the minimal feasible
/// activation fraction at this step size.
pub fn check_gamma_condition(gamma: f64, l: f64, ell: f64, p: usize, c_size: usize) -> ConditionReport {
    assert!(gamma > 0.0 && l > 0.0 && ell >= 0.0 && p > 0);
    assert!(c_size <= p);
    let fraction = c_size as f64 / p as f64;
    let value = condition_expression(gamma, l, ell, fraction);
    let minimal_fraction = if condition_expression(gamma, l, ell, 1.0) >= 0.0 {
        None
    } else {
        // Expression is affine decreasing in the fraction; bisect the root.
        let mut lo = 0.0;
        let mut hi = 1.0;
        while hi - lo > 1e-6 {
            let mid = 0.5 * (lo + hi);
            if condition_expression(gamma, l, ell, mid) < 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        Some(0.5 * (lo + hi))
    };
    ConditionReport {
        gamma,
        beta: None,
        lipschitz: l,
        weak_convexity: ell,
        p,
        c_size,
        value,
        alpha_value: value / gamma,
        feasible: value < 0.0,
        minimal_fraction,
        minimal_beta: None,
    }
}

/// The penalty form of the same condition under `gamma = 1/beta`; additionally
/// reports the minimal feasible penalty for this activation fraction.
pub fn check_beta_condition(
    beta: f64,
    l: f64,
    ell: f64,
    p: usize,
    active_coords: usize,
) -> Result<ConditionReport> {
    assert!(beta > 0.0);
    let mut report = check_gamma_condition(1.0 / beta, l, ell, p, active_coords);
    report.beta = Some(beta);

    let fraction = active_coords as f64 / p as f64;
    // Find a feasible upper bracket; the gamma L^2 term pushes the crossing
    // towards beta ~ L^2 for stiff problems, so grow geometrically.
    let mut hi = 1e6;
    while condition_expression(1.0 / hi, l, ell, fraction) >= 0.0 {
        hi *= 10.0;
        if hi > 1e18 {
            return Err(Error::NoFeasibleBeta { lo: l, hi });
        }
    }
    // Expression diverges as beta -> 0 and is negative at `hi`; bisect the
    // crossing to get the minimal feasible penalty.
    let mut lo = 1e-9;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if condition_expression(1.0 / mid, l, ell, fraction) < 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    report.minimal_beta = Some(hi);
    Ok(report)
}

/// Smoothness constants, exact when the objective exposes them, otherwise a
/// seeded Monte-Carlo lower estimate over gradient-difference quotients.
#[derive(Debug, Clone, Copy)]
pub struct SmoothnessEstimate {
    pub lipschitz: f64,
    pub weak_convexity: f64,
    pub exact: bool,
}

pub fn estimate_smoothness(
    objective: &dyn LocalObjective,
    domain_radius: f64,
    samples: usize,
    seed: u64,
) -> SmoothnessEstimate {
    if let Some(s) = objective.smoothness() {
        return SmoothnessEstimate {
            lipschitz: s.lipschitz,
            weak_convexity: s.weak_convexity,
            exact: true,
        };
    }
    assert!(domain_radius > 0.0 && samples > 0);
    let d = objective.dim();
    let mut rng = crate::rng::stream_rng(seed, crate::rng::GLOBAL_STREAM);
    let ball_point = |rng: &mut rand_chacha::ChaCha8Rng| {
        let g = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
        let r = domain_radius * rng.gen::<f64>().powf(1.0 / d as f64);
        &g * (r / g.norm().max(1e-300))
    };
    // Max over sampled points of the finite-difference Hessian's extreme
    // eigenvalues; curvature outside the sampled ball is not seen.
    let mut lip: f64 = 0.0;
    let mut weak: f64 = 0.0;
    let h = 1e-5 * domain_radius.max(1.0);
    for _ in 0..samples {
        let a = ball_point(&mut rng);
        let mut hess = nalgebra::DMatrix::zeros(d, d);
        for c in 0..d {
            let mut ap = a.clone();
            let mut am = a.clone();
            ap[c] += h;
            am[c] -= h;
            let col = (objective.smooth_gradient(&ap) - objective.smooth_gradient(&am)) / (2.0 * h);
            for r in 0..d {
                hess[(r, c)] = col[r];
            }
        }
        // Symmetrize away finite-difference asymmetry.
        let sym = (&hess + hess.transpose()) * 0.5;
        for ev in sym.symmetric_eigenvalues().iter() {
            lip = lip.max(ev.abs());
            weak = weak.max(-ev);
        }
    }
    weak = weak.max(0.0);
    SmoothnessEstimate {
        lipschitz: lip,
        weak_convexity: weak,
        exact: false,
    }
}

#[derive(Debug, Clone, Copy)]
pub struct XiBoundReport {
    /// `(1 - fraction)(1 + gamma L)^2`.
    pub zeta: f64,
    pub mean_xi_sq: f64,
    pub mean_step_sq: f64,
    /// `mean ||xi||^2 / (zeta * mean ||u+ - u||^2)`; 0 when both sides vanish.
    pub ratio: f64,
    pub pass: bool,
}

/// Checks the noise second-moment bound `E||xi||^2 <= zeta E||u+ - u||^2`
/// empirically over a recorded trajectory (10% statistical slack).
pub fn xi_bound_check(
    xi_sq: &[f64],
    u_step_sq: &[f64],
    gamma: f64,
    l: f64,
    c_fraction: f64,
) -> Result<XiBoundReport> {
    if xi_sq.len() < 200 || xi_sq.len() != u_step_sq.len() {
        return Err(Error::InsufficientSamples {
            needed: 200,
            got: xi_sq.len().min(u_step_sq.len()),
        });
    }
    let n = xi_sq.len() as f64;
    let mean_xi_sq = xi_sq.iter().sum::<f64>() / n;
    let mean_step_sq = u_step_sq.iter().sum::<f64>() / n;
    let a = 1.0 + gamma * l;
    let zeta = (1.0 - c_fraction) * a * a;
    let denom = zeta * mean_step_sq;
    let ratio = if denom == 0.0 && mean_xi_sq == 0.0 {
        0.0
    } else {
        mean_xi_sq / denom
    };
    Ok(XiBoundReport {
        zeta,
        mean_xi_sq,
        mean_step_sq,
        ratio,
        pass: ratio <= 1.1,
    })
}

#[derive(Debug, Clone, Copy)]
pub struct MeritTrendReport {
    pub burn_in: usize,
    /// Largest 100-step moving average of the merit increments after burn-in.
    pub worst_window_slope: f64,
    pub monotone_after_burn_in: bool,
    pub last_decile_range: f64,
    pub last_decile_median: f64,
    pub stabilized: bool,
}

/// Post-hoc trend analysis of a merit trajectory: 100-step moving-average
/// descent after a 10% burn-in, and last-decile stabilization.
pub fn merit_trend(merits: &[f64]) -> Result<MeritTrendReport> {
    if merits.len() < 500 {
        return Err(Error::InsufficientSamples {
            needed: 500,
            got: merits.len(),
        });
    }
    let burn_in = merits.len() / 10;
    let window = 100;
    let mut worst = f64::NEG_INFINITY;
    for start in burn_in..merits.len().saturating_sub(window) {
        let slope = (merits[start + window] - merits[start]) / window as f64;
        worst = worst.max(slope);
    }
    if worst == f64::NEG_INFINITY {
        worst = 0.0;
    }
    let tail = &merits[merits.len() - merits.len() / 10..];
    let mut sorted: Vec<f64> = tail.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let median = sorted[sorted.len() / 2];
    let range = sorted[sorted.len() - 1] - sorted[0];
    let scale = median.abs().max(1e-12);
    let stabilized = range <= 1e-3 * scale;
    let monotone = worst <= 1e-9 * scale;
    Ok(MeritTrendReport {
        burn_in,
        worst_window_slope: worst,
        monotone_after_burn_in: monotone,
        last_decile_range: range,
        last_decile_median: median,
        stabilized,
    })
}

/// Composite prox-gradient residual at a point:
/// `|| x - prox_{step h}(x - step sum_i grad f_i(x)) ||`.
pub fn prox_gradient_residual(
    objectives: &[Box<dyn LocalObjective>],
    nonsmooth: &NonsmoothSum,
    x: &DVector<f64>,
    step: f64,
) -> f64 {
    let mut grad = DVector::zeros(x.len());
    for o in objectives {
        grad += o.smooth_gradient(x);
    }
    let forward = x - &grad * step;
    (x - nonsmooth.prox(&forward, step)).norm()
}

/// Centralized proximal-gradient reference solver for convex baselines. Uses
/// the exact smoothness constants exposed by the objectives for the step size
/// and stops on a small iterate move.
pub fn reference_proximal_gradient(
    objectives: &[Box<dyn LocalObjective>],
    nonsmooth: &NonsmoothSum,
    x0: &DVector<f64>,
    max_iters: usize,
    tol: f64,
) -> DVector<f64> {
    let total_l: f64 = objectives
        .iter()
        .map(|o| {
            o.smoothness()
                .expect("reference solver needs exact smoothness constants")
                .lipschitz
        })
        .sum();
    let step = 1.0 / total_l.max(1e-12);
    let mut x = x0.clone();
    for _ in 0..max_iters {
        let mut grad = DVector::zeros(x.len());
        for o in objectives {
            grad += o.smooth_gradient(&x);
        }
        let next = nonsmooth.prox(&(&x - &grad * step), step);
        let moved = (&next - &x).norm();
        x = next;
        if moved <= tol {
            break;
        }
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::{generate_phase_retrieval, QuadraticObjective};
    use nalgebra::DMatrix;

    fn quad(q: DMatrix<f64>, c: DVector<f64>) -> Box<dyn LocalObjective> {
        Box::new(QuadraticObjective::new(q, c))
    }

    #[test]
    fn gradient_norm_matches_quadratic_closed_form() {
        let objs = vec![
            quad(DMatrix::identity(2, 2) * 2.0, DVector::from_vec(vec![1.0, 0.0])),
            quad(DMatrix::identity(2, 2), DVector::from_vec(vec![0.0, 3.0])),
        ];
        let x: Vec<DVector<f64>> = vec![
            DVector::from_vec(vec![1.0, 1.0]),
            DVector::from_vec(vec![3.0, -1.0]),
        ];
        // mean = (2, 0); sum grad = (2Q1 + Q2) m - (c1 + c2) = (6,0)-(1,3)
        let expected: f64 = DVector::from_vec(vec![5.0, -3.0]).norm();
        assert!((gradient_norm(&objs, &x) - expected).abs() < 1e-12);
    }

    #[test]
    fn gradient_norm_zero_at_stationary_point() {
        // Sum minimized at (Q1+Q2)^{-1}(c1+c2).
        let q1 = DMatrix::identity(2, 2) * 2.0;
        let q2 = DMatrix::identity(2, 2);
        let c1 = DVector::from_vec(vec![1.0, 2.0]);
        let c2 = DVector::from_vec(vec![-1.0, 1.0]);
        let star = (&q1 + &q2).lu().solve(&(&c1 + &c2)).unwrap();
        let objs = vec![quad(q1, c1), quad(q2, c2)];
        let x = vec![star.clone(), star];
        assert!(gradient_norm(&objs, &x) < 1e-12);
    }

    #[test]
    fn gradient_norm_zero_at_noiseless_truth() {
        let (agents, x0) = generate_phase_retrieval(7, 3, 4, 10, 0.0);
        let objs: Vec<Box<dyn LocalObjective>> = agents
            .into_iter()
            .map(|a| Box::new(a) as Box<dyn LocalObjective>)
            .collect();
        let x = vec![x0.clone(), x0.clone(), x0];
        assert!(gradient_norm(&objs, &x) < 1e-9);
    }

    #[test]
    fn disagreement_basics_and_oracle() {
        use rand::Rng;
        let a = DVector::from_vec(vec![1.0, -2.0]);
        assert_eq!(disagreement(&[a.clone(), a.clone()]), 0.0);
        let pair = [a.clone(), -a.clone()];
        assert!((disagreement(&pair) - a.norm()).abs() < 1e-14);

        let mut rng = crate::rng::stream_rng(11, 0);
        let xs: Vec<DVector<f64>> = (0..7)
            .map(|_| DVector::from_fn(3, |_, _| rng.gen::<f64>() - 0.5))
            .collect();
        // Two-pass oracle with separate accumulation.
        let mut mean = DVector::zeros(3);
        for x in &xs {
            for k in 0..3 {
                mean[k] += x[k] / 7.0;
            }
        }
        let oracle = xs
            .iter()
            .map(|x| (x - &mean).norm())
            .fold(0.0f64, f64::max);
        assert!((disagreement(&xs) - oracle).abs() < 1e-12);
        // Permutation invariance.
        let mut perm = xs.clone();
        perm.reverse();
        assert_eq!(disagreement(&xs), disagreement(&perm));
    }

    #[test]
    fn gamma_condition_reference_values() {
        // L = ell = 1, full activation.
        let r = check_gamma_condition(0.05, 1.0, 1.0, 100, 100);
        assert!((r.value - (-0.2225)).abs() < 1e-12);
        assert!(r.feasible);
        let r2 = check_gamma_condition(0.1, 1.0, 1.0, 100, 100);
        assert!((r2.value - 0.06).abs() < 1e-12);
        assert!(!r2.feasible);
        assert_eq!(r.feasible, r.alpha_value < 0.0);
    }

    #[test]
    fn gamma_condition_small_step_threshold_is_half() {
        let r = check_gamma_condition(1e-8, 1.0, 1.0, 1000, 1000);
        let f = r.minimal_fraction.unwrap();
        assert!((f - 0.5).abs() < 1e-6, "threshold {f}");
        // Bracketing: just above feasible, just below infeasible.
        assert!(condition_expression(1e-8, 1.0, 1.0, f + 1e-4) < 0.0);
        assert!(condition_expression(1e-8, 1.0, 1.0, f - 1e-4) > 0.0);
    }

    #[test]
    fn beta_condition_is_gamma_condition_at_reciprocal() {
        let b = check_beta_condition(17.5, 2.0, 1.5, 64, 48).unwrap();
        let g = check_gamma_condition(1.0 / 17.5, 2.0, 1.5, 64, 48);
        assert_eq!(b.value, g.value);
        assert_eq!(b.feasible, g.feasible);
        assert_eq!(b.minimal_fraction, g.minimal_fraction);
        assert_eq!(b.beta, Some(17.5));
    }

    #[test]
    fn beta_condition_reference_feasibility() {
        let ok = check_beta_condition(20.0, 1.0, 1.0, 10, 10).unwrap();
        assert!(ok.feasible, "value {}", ok.value);
        let bad = check_beta_condition(1.0, 1.0, 1.0, 10, 10).unwrap();
        assert!(!bad.feasible);
        // Minimal beta actually separates feasible from infeasible.
        let bmin = ok.minimal_beta.unwrap();
        assert!(check_beta_condition(bmin * 1.001, 1.0, 1.0, 10, 10).unwrap().feasible);
        assert!(!check_beta_condition(bmin * 0.999, 1.0, 1.0, 10, 10).unwrap().feasible);
    }

    #[test]
    fn beta_condition_low_fraction_has_no_penalty() {
        assert!(matches!(
            check_beta_condition(10.0, 1.0, 1.0, 10, 4),
            Err(Error::NoFeasibleBeta { .. })
        ));
    }

    #[test]
    fn smoothness_exact_for_quadratic() {
        let q = DMatrix::from_row_slice(2, 2, &[3.0, 0.0, 0.0, -2.0]);
        let obj = QuadraticObjective::new(q, DVector::zeros(2));
        let e = estimate_smoothness(&obj, 1.0, 10, 1);
        assert!(e.exact);
        assert!((e.lipschitz - 3.0).abs() < 1e-9);
        assert!((e.weak_convexity - 2.0).abs() < 1e-9);
    }

    #[test]
    fn smoothness_estimate_bounds_pr_hessians() {
        let (agents, _) = generate_phase_retrieval(21, 1, 3, 12, 0.01);
        let agent = &agents[0];
        let few = estimate_smoothness(agent, 2.0, 50, 5);
        let many = estimate_smoothness(agent, 2.0, 2000, 5);
        assert!(!many.exact);
        assert!(many.lipschitz >= few.lipschitz - 1e-12);
        // Finite-difference Hessian spectral norms at random points should not
        // exceed the estimate by more than 10%.
        use rand::Rng;
        let mut rng = crate::rng::stream_rng(6, 0);
        let d = agent.dim();
        for _ in 0..10 {
            // Test points stay well inside the sampled ball.
            let raw = DVector::from_fn(d, |_, _| 2.0 * rng.gen::<f64>() - 1.0);
            let x = &raw * (1.5 / raw.norm().max(1.0));
            let h = 1e-5;
            let mut hess = DMatrix::zeros(d, d);
            for c in 0..d {
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[c] += h;
                xm[c] -= h;
                let col = (agent.smooth_gradient(&xp) - agent.smooth_gradient(&xm)) / (2.0 * h);
                for r in 0..d {
                    hess[(r, c)] = col[r];
                }
            }
            let spec = hess.symmetric_eigenvalues().iter().fold(0.0f64, |m, &v| m.max(v.abs()));
            assert!(spec <= many.lipschitz * 1.1, "spec {spec} vs {}", many.lipschitz);
        }
    }

    #[test]
    fn xi_bound_trivial_cases() {
        let zeros = vec![0.0; 300];
        let steps = vec![1.0; 300];
        // Full activation: xi identically zero, zeta = 0, ratio 0.
        let r = xi_bound_check(&zeros, &steps, 0.1, 1.0, 1.0).unwrap();
        assert_eq!(r.ratio, 0.0);
        assert!(r.pass);
        // Fixed point: both sides zero.
        let r2 = xi_bound_check(&zeros, &zeros, 0.1, 1.0, 0.75).unwrap();
        assert_eq!(r2.ratio, 0.0);
        assert!(r2.pass);
        assert!(matches!(
            xi_bound_check(&zeros[..100], &steps[..100], 0.1, 1.0, 0.75),
            Err(Error::InsufficientSamples { .. })
        ));
    }

    #[test]
    fn merit_trend_constant_and_decaying() {
        let flat = vec![2.0; 600];
        let r = merit_trend(&flat).unwrap();
        assert!(r.monotone_after_burn_in && r.stabilized);
        let decay: Vec<f64> = (0..1000).map(|k| 1.0 + (-(k as f64) / 50.0).exp()).collect();
        let r2 = merit_trend(&decay).unwrap();
        assert!(r2.monotone_after_burn_in);
        assert!(r2.stabilized);
        let rising: Vec<f64> = (0..600).map(|k| k as f64).collect();
        assert!(!merit_trend(&rising).unwrap().monotone_after_burn_in);
        assert!(matches!(merit_trend(&flat[..400]), Err(Error::InsufficientSamples { .. })));
    }

    #[test]
    fn reference_solver_solves_smooth_quadratic() {
        let q = DMatrix::identity(3, 3) * 2.0;
        let c = DVector::from_vec(vec![2.0, -4.0, 6.0]);
        let objs = vec![quad(q, c)];
        let x = reference_proximal_gradient(
            &objs,
            &NonsmoothSum::None,
            &DVector::zeros(3),
            10_000,
            1e-14,
        );
        let expected = DVector::from_vec(vec![1.0, -2.0, 3.0]);
        assert!((x - expected).norm() < 1e-10);
    }

    #[test]
    fn prox_gradient_residual_zero_at_composite_stationary_point() {
        // min x^2 + |x|: solution 0; residual at 0 must vanish.
        let objs = vec![quad(DMatrix::identity(1, 1) * 2.0, DVector::zeros(1))];
        let r = prox_gradient_residual(
            &objs,
            &NonsmoothSum::L1 { lambda: 1.0 },
            &DVector::zeros(1),
            0.3,
        );
        assert!(r < 1e-15);
    }
}
