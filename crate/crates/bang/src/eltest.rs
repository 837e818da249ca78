//! Independence decisions for the moment conditions E(gamma_c^{K-1} gamma_v) = 0:
//! a fixed-threshold rule on raw sample moments, and an empirical-likelihood
//! omnibus test that pools all conditions for a candidate set into one
//! chi-square-calibrated statistic.

use nalgebra::{DMatrix, DVector, RowDVector};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::TestError;
use crate::moments::MomentEvaluator;

/// Outcome of one independence test.
#[derive(Debug, Clone)]
pub struct TestDecision {
    pub independent: bool,
    /// Max absolute raw moment (threshold mode) or the EL ratio statistic.
    pub statistic: f64,
    pub reference: Reference,
    pub p_value: Option<f64>,
    /// Set when the decision came from a solver failure or degenerate input
    /// rather than a clean comparison.
    pub diagnostic: Option<String>,
}

#[derive(Debug, Clone, Copy)]
pub enum Reference {
    /// Compared max |statistic| against eta / 2.
    Threshold { eta: f64 },
    ChiSquare { df: usize },
}

/// Per-observation moment conditions: row i holds gamma_{c_j, i}^{K-1} *
/// gamma_{v, i} for each tested c_j. Columns are centered under the null,
/// not empirically.
#[derive(Debug, Clone)]
pub struct MomentConditions {
    pub g: DMatrix<f64>,
}

impl MomentConditions {
    /// Builds conditions from centered residual vectors.
    pub fn from_residuals(
        regressors: &[RowDVector<f64>],
        outcome: &RowDVector<f64>,
        k: u32,
        symmetric: bool,
    ) -> Self {
        let n = outcome.len();
        let q = regressors.len();
        let cols = if symmetric { 2 * q } else { q };
        let mut g = DMatrix::zeros(n, cols);
        let my = outcome.mean();
        for (j, reg) in regressors.iter().enumerate() {
            assert_eq!(reg.len(), n, "residual lengths differ");
            let mx = reg.mean();
            for i in 0..n {
                let a = reg[i] - mx;
                let b = outcome[i] - my;
                g[(i, j)] = match k {
                    3 => a * a * b,
                    4 => a * a * a * b,
                    _ => panic!("unsupported moment order {k}"),
                };
                if symmetric {
                    g[(i, q + j)] = match k {
                        3 => b * b * a,
                        _ => b * b * b * a,
                    };
                }
            }
        }
        MomentConditions { g }
    }
}

/// Declares independence iff every |statistic| stays below eta / 2.
pub fn threshold_test(statistics: &[f64], eta: f64) -> Result<TestDecision, TestError> {
    if eta <= 0.0 {
        return Err(TestError::BadEta(eta));
    }
    let max_abs = statistics.iter().fold(0.0f64, |m, s| m.max(s.abs()));
    Ok(TestDecision {
        independent: max_abs < eta / 2.0,
        statistic: max_abs,
        reference: Reference::Threshold { eta },
        p_value: None,
        diagnostic: None,
    })
}

/// Pseudo-logarithm: log z above the cutoff, its second-order Taylor
/// expansion below, so the dual objective is globally defined.
fn pseudo_log(z: f64, cutoff: f64) -> (f64, f64, f64) {
    if z >= cutoff {
        (z.ln(), 1.0 / z, -1.0 / (z * z))
    } else {
        let t = cutoff;
        (
            t.ln() - 1.5 + 2.0 * z / t - z * z / (2.0 * t * t),
            2.0 / t - z / (t * t),
            -1.0 / (t * t),
        )
    }
}

const EL_GRAD_TOL: f64 = 1e-8;
pub const EL_DEFAULT_MAX_ITERS: usize = 50;

/// Empirical-likelihood ratio test of the joint null E(g) = 0.
///
/// Maximizes the dual objective sum_i log(1 + lambda . g_i) by damped Newton
/// steps on the pseudo-log surrogate; the statistic 2 sum_i log(1 + lambda .
/// g_i) is referred to a chi-square with q degrees of freedom. Solver failure
/// or a degenerate (constant, nonzero) column yields "dependent" with a
/// diagnostic, which keeps candidate edges rather than wrongly certifying.
pub fn el_test(
    conditions: &MomentConditions,
    alpha: f64,
    max_iters: usize,
) -> Result<TestDecision, TestError> {
    if !(0.0..1.0).contains(&alpha) || alpha == 0.0 {
        return Err(TestError::BadAlpha(alpha));
    }
    let n = conditions.g.nrows();
    // Identically-zero columns impose nothing; constant nonzero columns can
    // never satisfy the null.
    let mut keep = Vec::new();
    for j in 0..conditions.g.ncols() {
        let col = conditions.g.column(j);
        let all_zero = col.iter().all(|&x| x == 0.0);
        if all_zero {
            continue;
        }
        let mean = col.mean();
        let var = col.iter().map(|&x| (x - mean) * (x - mean)).sum::<f64>() / n as f64;
        if var <= 1e-24 * (1.0 + mean * mean) {
            return Ok(TestDecision {
                independent: false,
                statistic: f64::INFINITY,
                reference: Reference::ChiSquare { df: conditions.g.ncols() },
                p_value: Some(0.0),
                diagnostic: Some("zero-variance moment condition".into()),
            });
        }
        keep.push(j);
    }
    let q = keep.len();
    if q == 0 {
        return Ok(TestDecision {
            independent: true,
            statistic: 0.0,
            reference: Reference::ChiSquare { df: 1 },
            p_value: Some(1.0),
            diagnostic: None,
        });
    }
    if n <= q {
        return Err(TestError::TooFewObservations { n, q });
    }
    let g = DMatrix::from_fn(n, q, |i, jj| conditions.g[(i, keep[jj])]);

    let cutoff = 1.0 / n as f64;
    // mean-normalized objective keeps the gradient O(1)
    let objective = |lambda: &DVector<f64>| -> (f64, DVector<f64>, DMatrix<f64>) {
        let mut f = 0.0;
        let mut grad = DVector::zeros(q);
        let mut hess = DMatrix::zeros(q, q);
        for i in 0..n {
            let gi = g.row(i).transpose();
            let z = 1.0 + lambda.dot(&gi);
            let (v, d1, d2) = pseudo_log(z, cutoff);
            f += v;
            grad.axpy(d1, &gi, 1.0);
            hess.ger(d2, &gi, &gi, 1.0);
        }
        let inv_n = (n as f64).recip();
        (f * inv_n, grad * inv_n, hess * inv_n)
    };

    let mut lambda = DVector::zeros(q);
    let (mut f_cur, mut grad, mut hess) = objective(&lambda);
    let mut converged = false;
    for _ in 0..max_iters {
        if grad.amax() < EL_GRAD_TOL {
            converged = true;
            break;
        }
        // Newton direction on the concave objective: solve (-H) dir = grad
        let neg_h = -&hess;
        let dir = match neg_h.clone().cholesky() {
            Some(ch) => ch.solve(&grad),
            None => match crate::linalg::solve_checked(&neg_h, &grad) {
                Ok(x) => x,
                Err(_) => break,
            },
        };
        // backtracking: accept the first step that does not decrease f
        let mut step = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            let cand = &lambda + &dir * step;
            let (f_new, g_new, h_new) = objective(&cand);
            if f_new >= f_cur - 1e-14 {
                debug_assert!(f_new + 1e-9 >= f_cur, "backtracking decreased the objective");
                lambda = cand;
                f_cur = f_new;
                grad = g_new;
                hess = h_new;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    if !converged && grad.amax() >= EL_GRAD_TOL {
        return Ok(TestDecision {
            independent: false,
            statistic: 2.0 * n as f64 * f_cur,
            reference: Reference::ChiSquare { df: q },
            p_value: None,
            diagnostic: Some("empirical-likelihood solver did not converge".into()),
        });
    }

    let elr = (2.0 * n as f64 * f_cur).max(0.0);
    let chi = ChiSquared::new(q as f64).expect("valid df");
    let p_value = 1.0 - chi.cdf(elr);
    Ok(TestDecision {
        independent: p_value > alpha,
        statistic: elr,
        reference: Reference::ChiSquare { df: q },
        p_value: Some(p_value),
        diagnostic: None,
    })
}

/// Test configuration shared by the discovery loop and the CLI.
#[derive(Debug, Clone, Copy)]
pub enum TestKind {
    /// Compare raw sample moments against a fixed eta.
    Threshold { eta: f64 },
    /// Empirical-likelihood omnibus test at level alpha.
    EmpiricalLikelihood { alpha: f64, max_iters: usize },
    /// Exact-zero comparison for population (oracle) statistics.
    ExactZero { tol: f64 },
}

/// Joint decision for residual vectors {gamma_c} against gamma_v, dispatched
/// on the configured backend. Evaluator and test kind must agree: sample
/// evaluators pair with Threshold/EmpiricalLikelihood, oracle with ExactZero.
///
/// With `symmetric` set, the reversed moments E(gamma_v^{K-1} gamma_c) join
/// the condition set (doubling q). Under the certification null the residuals
/// are fully independent, so the reversed moments also vanish; against a
/// confounded alternative they often carry far more signal than the forward
/// ones, whose leading terms can nearly cancel.
pub fn joint_residual_test(
    evaluator: &MomentEvaluator,
    regressors: &[RowDVector<f64>],
    outcome: &RowDVector<f64>,
    k: u32,
    kind: TestKind,
    symmetric: bool,
) -> Result<TestDecision, TestError> {
    assert!(!regressors.is_empty(), "joint test needs a nonempty C");
    match kind {
        TestKind::ExactZero { tol } | TestKind::Threshold { eta: tol } => {
            let eta = match kind {
                TestKind::ExactZero { tol } => 2.0 * tol,
                _ => tol,
            };
            let mut stats: Vec<f64> = regressors
                .iter()
                .map(|r| {
                    evaluator
                        .cross_moment(r, outcome, k)
                        .expect("cross-moment")
                })
                .collect();
            if symmetric {
                stats.extend(regressors.iter().map(|r| {
                    evaluator
                        .cross_moment(outcome, r, k)
                        .expect("cross-moment")
                }));
            }
            threshold_test(&stats, eta)
        }
        TestKind::EmpiricalLikelihood { alpha, max_iters } => {
            let conditions = MomentConditions::from_residuals(regressors, outcome, k, symmetric);
            el_test(&conditions, alpha, max_iters)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn threshold_edges() {
        let d = threshold_test(&[0.0, 0.0], 0.5).unwrap();
        assert!(d.independent);
        // a statistic equal to eta itself exceeds eta/2
        let d = threshold_test(&[0.5], 0.5).unwrap();
        assert!(!d.independent);
        assert!(threshold_test(&[0.1], -1.0).is_err());
    }

    #[test]
    fn el_all_zero_is_independent() {
        let c = MomentConditions {
            g: DMatrix::zeros(100, 2),
        };
        let d = el_test(&c, 0.05, EL_DEFAULT_MAX_ITERS).unwrap();
        assert!(d.independent);
        assert_eq!(d.statistic, 0.0);
        assert_eq!(d.p_value, Some(1.0));
    }

    #[test]
    fn el_constant_column_is_dependent() {
        let c = MomentConditions {
            g: DMatrix::from_element(100, 1, 0.3),
        };
        let d = el_test(&c, 0.05, EL_DEFAULT_MAX_ITERS).unwrap();
        assert!(!d.independent);
        assert!(d.diagnostic.is_some());
    }

    #[test]
    fn el_detects_mean_shift_and_grows_with_n() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut stat_at = |n: usize| -> f64 {
            let g = DMatrix::from_fn(n, 1, |_, _| rng.random::<f64>() - 0.5 + 0.15);
            el_test(&MomentConditions { g }, 0.05, EL_DEFAULT_MAX_ITERS)
                .unwrap()
                .statistic
        };
        let s1 = stat_at(500);
        let s2 = stat_at(5000);
        assert!(s2 > 4.0 * s1 * 0.5, "statistic should grow with n: {s1} vs {s2}");
        let g = DMatrix::from_fn(5000, 1, |_, _| rng.random::<f64>() - 0.5 + 0.15);
        assert!(!el_test(&MomentConditions { g }, 0.05, EL_DEFAULT_MAX_ITERS)
            .unwrap()
            .independent);
    }

    #[test]
    fn el_null_accepts() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let g = DMatrix::from_fn(5000, 2, |_, _| rng.random::<f64>() - 0.5);
        let d = el_test(&MomentConditions { g }, 0.05, EL_DEFAULT_MAX_ITERS).unwrap();
        assert!(d.p_value.unwrap() > 0.0);
    }

    #[test]
    fn el_invariant_to_row_permutation() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let rows = 400;
        let data: Vec<f64> = (0..rows).map(|_| rng.random::<f64>() - 0.4).collect();
        let g1 = DMatrix::from_fn(rows, 1, |i, _| data[i]);
        let mut rev = data.clone();
        rev.reverse();
        let g2 = DMatrix::from_fn(rows, 1, |i, _| rev[i]);
        let d1 = el_test(&MomentConditions { g: g1 }, 0.05, EL_DEFAULT_MAX_ITERS).unwrap();
        let d2 = el_test(&MomentConditions { g: g2 }, 0.05, EL_DEFAULT_MAX_ITERS).unwrap();
        assert!((d1.statistic - d2.statistic).abs() < 1e-9);
    }

    #[test]
    fn el_pvalue_monotone_in_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let noise: Vec<f64> = (0..2000).map(|_| rng.random::<f64>() - 0.5).collect();
        let mut last_p = 1.1;
        for shift in [0.0, 0.02, 0.05, 0.1, 0.2] {
            let g = DMatrix::from_fn(2000, 1, |i, _| noise[i] + shift);
            let p = el_test(&MomentConditions { g }, 0.05, EL_DEFAULT_MAX_ITERS)
                .unwrap()
                .p_value
                .unwrap_or(0.0);
            assert!(p <= last_p + 1e-12, "p-value not monotone at shift {shift}");
            last_p = p;
        }
    }
}
