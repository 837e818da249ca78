//! Linear SEM parameters and simulation. A model is a direct-effect matrix B
//! supported on the directed edges and an error covariance Omega supported on
//! the diagonal plus the bidirected edges. Errors are mixed from independent
//! standardized sources through a loading matrix L with L L^T = Omega, which
//! is what makes exact population moments available downstream.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Exp, StandardNormal, StudentT};
use serde::{Deserialize, Serialize};

use crate::error::SemError;
use crate::graph::{GraphJson, MixedGraph};
use crate::linalg::min_eigenvalue;

/// Marginal error distribution, standardized to mean 0 and variance 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ErrorFamily {
    /// Standardized exponential (gamma with shape 1).
    Gamma,
    Uniform,
    /// Exponentiated correlated Gaussians, then standardized. No closed-form
    /// moment tensor through L, so the population oracle rejects this family.
    Lognormal,
    /// Student t with 13 degrees of freedom, scaled to unit variance.
    T13,
    Gaussian,
}

impl ErrorFamily {
    /// Third standardized moment of a single source.
    pub fn mu3(self) -> Result<f64, SemError> {
        match self {
            ErrorFamily::Gamma => Ok(2.0),
            ErrorFamily::Uniform => Ok(0.0),
            ErrorFamily::T13 => Ok(0.0),
            ErrorFamily::Gaussian => Ok(0.0),
            ErrorFamily::Lognormal => Err(SemError::LognormalOracle),
        }
    }

    /// Fourth standardized moment of a single source.
    pub fn mu4(self) -> Result<f64, SemError> {
        match self {
            ErrorFamily::Gamma => Ok(9.0),
            ErrorFamily::Uniform => Ok(1.8),
            ErrorFamily::T13 => Ok(3.0 + 6.0 / (13.0 - 4.0)),
            ErrorFamily::Gaussian => Ok(3.0),
            ErrorFamily::Lognormal => Err(SemError::LognormalOracle),
        }
    }

    /// Moment order used by default for this family: 3 where the third
    /// moment is informative, otherwise 4.
    pub fn default_k(self) -> u32 {
        match self {
            ErrorFamily::Gamma | ErrorFamily::Lognormal => 3,
            ErrorFamily::Uniform | ErrorFamily::T13 | ErrorFamily::Gaussian => 4,
        }
    }

    /// One draw from the standardized source distribution (mean 0, var 1).
    pub fn sample_source<R: Rng>(self, rng: &mut R) -> f64 {
        match self {
            ErrorFamily::Gamma => Exp::new(1.0).unwrap().sample(rng) - 1.0,
            ErrorFamily::Uniform => {
                let a = 3f64.sqrt();
                rng.random::<f64>() * 2.0 * a - a
            }
            ErrorFamily::T13 => {
                StudentT::new(13.0).unwrap().sample(rng) * (11.0f64 / 13.0).sqrt()
            }
            ErrorFamily::Gaussian => StandardNormal.sample(rng),
            ErrorFamily::Lognormal => unreachable!("lognormal uses the correlated path"),
        }
    }
}

/// SEM parameters tied to a BAP: direct effects B, error covariance Omega,
/// and a loading matrix L with one source per vertex plus one per bidirected
/// edge.
#[derive(Debug, Clone)]
pub struct SemParameters {
    pub graph: MixedGraph,
    pub b: DMatrix<f64>,
    pub omega: DMatrix<f64>,
    pub l: DMatrix<f64>,
}

/// Minimum eigenvalue (and idiosyncratic variance) floor from the simulation
/// protocol.
const OMEGA_FLOOR: f64 = 0.01;
const OMEGA_SHRINK: f64 = 0.97;

fn shrink_offdiagonal(omega: &mut DMatrix<f64>) {
    let p = omega.nrows();
    for i in 0..p {
        for j in 0..p {
            if i != j {
                omega[(i, j)] *= OMEGA_SHRINK;
            }
        }
    }
}

/// Factorizes Omega as L L^T with one idiosyncratic source per vertex and one
/// confounder source per bidirected edge. The confounder column for {u,v}
/// carries sqrt(|omega_uv|) on both rows with the sign split so the product
/// recovers omega_uv. If some idiosyncratic variance drops to the floor, the
/// off-diagonal of Omega is shrunk by 0.97 and the construction retried; the
/// possibly-shrunk Omega is returned alongside L so that L L^T = Omega holds
/// exactly.
pub fn latent_factorization(
    omega: &DMatrix<f64>,
    graph: &MixedGraph,
) -> (DMatrix<f64>, DMatrix<f64>) {
    let p = graph.p();
    let edges: Vec<(usize, usize)> = graph.bidirected_edges().collect();
    let m = p + edges.len();
    let mut omega = omega.clone();
    loop {
        let mut ok = true;
        let mut l = DMatrix::zeros(p, m);
        let mut idio = vec![0.0; p];
        for v in 0..p {
            idio[v] = omega[(v, v)];
        }
        for (e, &(u, v)) in edges.iter().enumerate() {
            let w = omega[(u, v)];
            let s = w.abs().sqrt();
            l[(u, p + e)] = s;
            l[(v, p + e)] = w.signum() * s;
            idio[u] -= w.abs();
            idio[v] -= w.abs();
        }
        if idio.iter().any(|&x| x <= OMEGA_FLOOR) {
            shrink_offdiagonal(&mut omega);
            ok = false;
        }
        if ok {
            for v in 0..p {
                l[(v, v)] = idio[v].sqrt();
            }
            return (l, omega);
        }
    }
}

/// Draws edge weights and an error covariance per the simulation protocol:
/// directed weights uniform on +-(.6, 1) (positive half only when
/// `signed = false`), unit error variances, bidirected covariances uniform on
/// +-(.3, .5), with the off-diagonal shrunk by 0.97 until the minimum
/// eigenvalue of Omega clears 0.01.
pub fn draw_parameters<R: Rng>(graph: &MixedGraph, signed: bool, rng: &mut R) -> SemParameters {
    let p = graph.p();
    let mut draw = |lo: f64, hi: f64| -> f64 {
        let mag = lo + rng.random::<f64>() * (hi - lo);
        if signed && rng.random::<bool>() {
            -mag
        } else {
            mag
        }
    };
    let mut b = DMatrix::zeros(p, p);
    for (u, v) in graph.directed_edges() {
        b[(v, u)] = draw(0.6, 1.0);
    }
    let mut omega = DMatrix::identity(p, p);
    for (u, v) in graph.bidirected_edges() {
        let w = draw(0.3, 0.5);
        omega[(u, v)] = w;
        omega[(v, u)] = w;
    }
    while min_eigenvalue(&omega) <= OMEGA_FLOOR {
        shrink_offdiagonal(&mut omega);
    }
    let (l, omega) = latent_factorization(&omega, graph);
    SemParameters {
        graph: graph.clone(),
        b,
        omega,
        l,
    }
}

impl SemParameters {
    /// Number of independent sources behind the error vector.
    pub fn num_sources(&self) -> usize {
        self.l.ncols()
    }

    /// (I - B)^{-1}, the map from errors to observables.
    pub fn error_to_observed(&self) -> Result<DMatrix<f64>, SemError> {
        let p = self.graph.p();
        let lam = DMatrix::identity(p, p) - &self.b;
        lam.try_inverse().ok_or(SemError::SingularSystem)
    }

    /// Implied covariance (I-B)^{-1} Omega (I-B)^{-T}.
    pub fn implied_covariance(&self) -> Result<DMatrix<f64>, SemError> {
        let inv = self.error_to_observed()?;
        Ok(&inv * &self.omega * inv.transpose())
    }

    /// Draws an n x p data matrix. Non-lognormal families mix independent
    /// standardized sources through L; lognormal exponentiates correlated
    /// Gaussians with covariance Omega and standardizes analytically.
    pub fn sample_data<R: Rng>(
        &self,
        family: ErrorFamily,
        n: usize,
        rng: &mut R,
    ) -> Result<DMatrix<f64>, SemError> {
        let p = self.graph.p();
        let inv = self.error_to_observed()?;
        let mut y = DMatrix::zeros(n, p);
        match family {
            ErrorFamily::Lognormal => {
                let chol = self
                    .omega
                    .clone()
                    .cholesky()
                    .ok_or(SemError::SingularSystem)?;
                let lfac = chol.l();
                let mut z = DVector::zeros(p);
                for i in 0..n {
                    for k in 0..p {
                        z[k] = StandardNormal.sample(rng);
                    }
                    let g = &lfac * &z;
                    let eps = DVector::from_fn(p, |v, _| {
                        let s2 = self.omega[(v, v)];
                        let mean = (s2 / 2.0).exp();
                        let sd = ((s2.exp() - 1.0) * s2.exp()).sqrt();
                        (g[v].exp() - mean) / sd
                    });
                    let row = &inv * eps;
                    y.row_mut(i).copy_from(&row.transpose());
                }
            }
            _ => {
                let m = self.num_sources();
                let mut h = DVector::zeros(m);
                for i in 0..n {
                    for k in 0..m {
                        h[k] = family.sample_source(rng);
                    }
                    let eps = &self.l * &h;
                    let row = &inv * eps;
                    y.row_mut(i).copy_from(&row.transpose());
                }
            }
        }
        Ok(y)
    }
}

/// On-disk parameter format; matrices are row-major nested arrays.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SemParametersJson {
    pub graph: GraphJson,
    pub b: Vec<Vec<f64>>,
    pub omega: Vec<Vec<f64>>,
    pub l: Vec<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub family: Option<ErrorFamily>,
}

fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

fn from_rows(rows: &[Vec<f64>]) -> Result<DMatrix<f64>, SemError> {
    let nr = rows.len();
    let nc = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != nc) {
        return Err(SemError::Dimension("ragged matrix rows".into()));
    }
    Ok(DMatrix::from_fn(nr, nc, |i, j| rows[i][j]))
}

impl SemParameters {
    pub fn to_json(&self, one_indexed: bool, family: Option<ErrorFamily>) -> SemParametersJson {
        SemParametersJson {
            graph: self.graph.to_json(one_indexed),
            b: to_rows(&self.b),
            omega: to_rows(&self.omega),
            l: to_rows(&self.l),
            family,
        }
    }

    pub fn from_json(json: &SemParametersJson) -> Result<SemParameters, SemError> {
        let graph = MixedGraph::from_json(&json.graph)
            .map_err(|e| SemError::Dimension(e.to_string()))?;
        let p = graph.p();
        let b = from_rows(&json.b)?;
        let omega = from_rows(&json.omega)?;
        let l = from_rows(&json.l)?;
        if b.nrows() != p || b.ncols() != p || omega.nrows() != p || l.nrows() != p {
            return Err(SemError::Dimension("matrix size does not match p".into()));
        }
        Ok(SemParameters { graph, b, omega, l })
    }
}
