//! Residuals, debiased direct effects, marginal direct effects, and the
//! cross-moments E(x^{K-1} y) that stand in for independence tests.
//!
//! Everything here works on a *representation matrix* whose v-th row encodes
//! the observable Y_v as a linear form: over observations (row = the sampled
//! n-vector) or over the model's independent sources (row = coefficients of
//! the mixing matrix (I-B)^{-1} L). Residual constructions are the same
//! linear algebra in both cases; only the moment evaluation differs. In the
//! source representation the population statements reduce to exact polynomial
//! identities in the coefficients.

use std::collections::BTreeSet;

use nalgebra::{DMatrix, DVector, RowDVector};

use crate::error::{MomentError, SemError};
use crate::linalg::solve_checked;
use crate::sem::{ErrorFamily, SemParameters};

/// Exact population moments: mixing matrix (I-B)^{-1} L together with the
/// third and fourth standardized moments of each independent source.
#[derive(Debug, Clone)]
pub struct MomentOracle {
    mixing: DMatrix<f64>,
    mu3: Vec<f64>,
    mu4: Vec<f64>,
}

impl MomentOracle {
    /// Fails for lognormal errors, whose moment tensor is not expressible
    /// through the loading matrix.
    pub fn new(params: &SemParameters, family: ErrorFamily) -> Result<Self, SemError> {
        let m = params.num_sources();
        let mixing = params.error_to_observed()? * &params.l;
        Ok(MomentOracle {
            mixing,
            mu3: vec![family.mu3()?; m],
            mu4: vec![family.mu4()?; m],
        })
    }

    pub fn mixing(&self) -> &DMatrix<f64> {
        &self.mixing
    }

    pub fn num_sources(&self) -> usize {
        self.mixing.ncols()
    }

    pub fn evaluator(&self) -> MomentEvaluator {
        MomentEvaluator::Oracle {
            mu3: self.mu3.clone(),
            mu4: self.mu4.clone(),
        }
    }

    /// Debug dump: mixing matrix plus the moment table.
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "mixing": (0..self.mixing.nrows())
                .map(|i| self.mixing.row(i).iter().copied().collect::<Vec<_>>())
                .collect::<Vec<_>>(),
            "mu3": self.mu3,
            "mu4": self.mu4,
        })
    }
}

/// How to evaluate E(x^{K-1} y) given row representations of x and y.
#[derive(Debug, Clone)]
pub enum MomentEvaluator {
    /// Rows are observation vectors; moments are empirical means after
    /// centering each vector.
    Sample,
    /// Rows are coefficients over independent standardized sources; moments
    /// expand exactly over the source moment table.
    Oracle { mu3: Vec<f64>, mu4: Vec<f64> },
}

impl MomentEvaluator {
    /// E(x^{K-1} y) for K in {3, 4}.
    pub fn cross_moment(
        &self,
        x: &RowDVector<f64>,
        y: &RowDVector<f64>,
        k: u32,
    ) -> Result<f64, MomentError> {
        if x.len() != y.len() {
            return Err(MomentError::Dimension(format!(
                "cross-moment length mismatch {} vs {}",
                x.len(),
                y.len()
            )));
        }
        match self {
            MomentEvaluator::Sample => {
                let n = x.len();
                let mx = x.mean();
                let my = y.mean();
                let mut acc = 0.0;
                for i in 0..n {
                    let a = x[i] - mx;
                    let b = y[i] - my;
                    acc += match k {
                        3 => a * a * b,
                        4 => a * a * a * b,
                        _ => return Err(MomentError::UnsupportedOrder(k)),
                    };
                }
                Ok(acc / n as f64)
            }
            MomentEvaluator::Oracle { mu3, mu4 } => match k {
                3 => Ok((0..x.len()).map(|i| x[i] * x[i] * y[i] * mu3[i]).sum()),
                4 => {
                    // E((sum a_i h_i)^3 (sum b_j h_j)) over independent,
                    // standardized sources: the quadruple term uses mu4, the
                    // paired term uses mu2 = 1.
                    let a2: f64 = x.iter().map(|a| a * a).sum();
                    let mut acc = 0.0;
                    for i in 0..x.len() {
                        let (a, b) = (x[i], y[i]);
                        acc += a * a * a * b * mu4[i] + 3.0 * a * b * (a2 - a * a);
                    }
                    Ok(acc)
                }
                _ => Err(MomentError::UnsupportedOrder(k)),
            },
        }
    }
}

/// Residual representation of every vertex under posited effects D:
/// row v of (I - D) R where R is the representation matrix.
pub fn residual_rows(rep: &DMatrix<f64>, d: &DMatrix<f64>) -> DMatrix<f64> {
    let p = rep.nrows();
    assert_eq!(d.nrows(), p);
    assert_eq!(d.ncols(), p);
    let id = DMatrix::identity(p, p) - d;
    id * rep
}

/// Pseudo-ancestors of the set `c` under the support of D, closed and
/// including `c` itself. Edge u -> v exists when D[v][u] != 0.
pub fn pseudo_ancestors(d: &DMatrix<f64>, c: &BTreeSet<usize>) -> BTreeSet<usize> {
    let p = d.nrows();
    let mut out = c.clone();
    let mut stack: Vec<usize> = c.iter().copied().collect();
    while let Some(v) = stack.pop() {
        for u in 0..p {
            if d[(v, u)] != 0.0 && out.insert(u) {
                stack.push(u);
            }
        }
    }
    out
}

/// Debiased direct effect of the set `c` on `v`:
/// delta = { [(I-D)_{C,A} S_{A,C}]^{-1} (I-D)_{C,A} S_{A,v} }^T,
/// ordered as `c`. Fails when the |C| x |C| system is ill-conditioned.
pub fn debiased_effect(
    c: &[usize],
    a: &[usize],
    v: usize,
    s: &DMatrix<f64>,
    d: &DMatrix<f64>,
) -> Result<DVector<f64>, MomentError> {
    let p = d.nrows();
    if c.is_empty() {
        return Ok(DVector::zeros(0));
    }
    let id = DMatrix::identity(p, p) - d;
    let m1 = DMatrix::from_fn(c.len(), a.len(), |i, j| id[(c[i], a[j])]);
    let s_ac = DMatrix::from_fn(a.len(), c.len(), |i, j| s[(a[i], c[j])]);
    let s_av = DVector::from_fn(a.len(), |i, _| s[(a[i], v)]);
    let sys = &m1 * s_ac;
    let rhs = m1 * s_av;
    solve_checked(&sys, &rhs)
}

/// Residual of v after removing the debiased effect of `c`, with
/// A = the pseudo-ancestors of `c` under D. Returns the row representation
/// rep_v - delta . rep_C.
pub fn adjusted_residual(
    rep: &DMatrix<f64>,
    v: usize,
    c: &BTreeSet<usize>,
    s: &DMatrix<f64>,
    d: &DMatrix<f64>,
) -> Result<RowDVector<f64>, MomentError> {
    let a: Vec<usize> = pseudo_ancestors(d, c).into_iter().collect();
    let c_vec: Vec<usize> = c.iter().copied().collect();
    let delta = debiased_effect(&c_vec, &a, v, s, d)?;
    let mut row = rep.row(v).clone_owned();
    for (i, &ci) in c_vec.iter().enumerate() {
        row -= rep.row(ci) * delta[i];
    }
    Ok(row)
}

/// Marginal direct effects among the (sorted) vertices of `a` in the
/// sub-model that marginalizes everything else:
/// I - [((I-B)^{-1})_{A,A}]^{-1}, returned as an |A| x |A| matrix in the
/// order of `a`.
pub fn marginal_effects(b: &DMatrix<f64>, a: &[usize]) -> Result<DMatrix<f64>, MomentError> {
    assert!(!a.is_empty(), "marginal effects need a nonempty set");
    let p = b.nrows();
    let lam = DMatrix::identity(p, p) - b;
    let lam_inv = lam
        .try_inverse()
        .ok_or(MomentError::Singular { rcond: 0.0 })?;
    let sub = DMatrix::from_fn(a.len(), a.len(), |i, j| lam_inv[(a[i], a[j])]);
    let sub_inv = crate::linalg::invert_checked(&sub)?;
    Ok(DMatrix::identity(a.len(), a.len()) - sub_inv)
}

/// Brute-force sum of path weights over all directed paths u -> ... -> v whose
/// interior vertices avoid `avoid`. Exponential; meant as an oracle for small
/// graphs.
pub fn path_weight_sum(b: &DMatrix<f64>, u: usize, v: usize, avoid: &BTreeSet<usize>) -> f64 {
    fn dfs(
        b: &DMatrix<f64>,
        cur: usize,
        v: usize,
        weight: f64,
        avoid: &BTreeSet<usize>,
        visited: &mut Vec<bool>,
        total: &mut f64,
    ) {
        if cur == v {
            *total += weight;
            return;
        }
        let p = b.nrows();
        for next in 0..p {
            let w = b[(next, cur)];
            if w != 0.0 && !visited[next] && (next == v || !avoid.contains(&next)) {
                visited[next] = true;
                dfs(b, next, v, weight * w, avoid, visited, total);
                visited[next] = false;
            }
        }
    }
    if u == v {
        return 1.0;
    }
    let mut total = 0.0;
    let mut visited = vec![false; b.nrows()];
    visited[u] = true;
    dfs(b, u, v, 1.0, avoid, &mut visited, &mut total);
    total
}

/// Builds a row of the H_C map: row v of D set to the marginal direct effect
/// of the sub-model induced by C_v plus v, zero elsewhere.
pub fn h_map_row(
    b: &DMatrix<f64>,
    v: usize,
    c_v: &BTreeSet<usize>,
) -> Result<RowDVector<f64>, MomentError> {
    let p = b.nrows();
    let mut row = RowDVector::zeros(p);
    if c_v.is_empty() {
        return Ok(row);
    }
    let mut a: Vec<usize> = c_v.iter().copied().collect();
    a.push(v);
    a.sort_unstable();
    let tilde = marginal_effects(b, &a)?;
    let vi = a.iter().position(|&x| x == v).unwrap();
    for (j, &u) in a.iter().enumerate() {
        if c_v.contains(&u) {
            row[u] = tilde[(vi, j)];
        }
    }
    Ok(row)
}
