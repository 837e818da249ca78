//! The discovery loop: start from a complete bidirected graph, iteratively
//! certify ancestor sets whose adjusted residuals test independent, update the
//! working effect matrix D, and finally prune certified ancestors that are not
//! parents. Works identically on sampled data and on exact population moments;
//! the backend decides how cross-moments are evaluated.

use std::collections::BTreeSet;

use itertools::Itertools;
use nalgebra::{DMatrix, RowDVector};
use serde::Serialize;

use crate::eltest::{joint_residual_test, TestDecision, TestKind};
use crate::graph::MixedGraph;
use crate::moments::{
    adjusted_residual, debiased_effect, pseudo_ancestors, MomentEvaluator, MomentOracle,
};

/// Configuration of one discovery run.
#[derive(Debug, Clone)]
pub struct DiscoveryConfig {
    /// Moment order K in {3, 4}.
    pub k: u32,
    pub test: TestKind,
    /// Cap J on the subset size l; None searches up to the largest candidate
    /// sibling set.
    pub max_subset: Option<usize>,
    /// When true (default), the joint certification test covers all of
    /// C union pa_hat(v); when false, only the literal candidate set C.
    pub certify_with_pahat: bool,
    /// Add the reversed moments E(gamma_v^{K-1} gamma_c) to the certification
    /// test. Valid under the null (the adjusted residuals are independent,
    /// not merely moment-orthogonal) and much more powerful against
    /// confounded pairs whose forward moments nearly cancel.
    pub symmetric_certify: bool,
}

impl DiscoveryConfig {
    /// Oracle-mode defaults: exact-zero testing at the stated tolerance.
    pub fn oracle(k: u32) -> Self {
        DiscoveryConfig {
            k,
            test: TestKind::ExactZero { tol: ORACLE_ZERO_TOL },
            max_subset: None,
            certify_with_pahat: true,
            symmetric_certify: false,
        }
    }
}

/// Numerical-zero tolerance used when testing population moments.
pub const ORACLE_ZERO_TOL: f64 = 1e-9;

/// Evolving estimate: working effects D, certified pseudo-parents, candidate
/// siblings, subset-size counter, and the number of tests spent.
#[derive(Debug, Clone)]
pub struct DiscoveryState {
    pub d: DMatrix<f64>,
    pub pa_hat: Vec<BTreeSet<usize>>,
    pub sib_hat: Vec<BTreeSet<usize>>,
    pub l: usize,
    pub test_count: usize,
}

impl DiscoveryState {
    fn new(p: usize) -> Self {
        DiscoveryState {
            d: DMatrix::zeros(p, p),
            pa_hat: vec![BTreeSet::new(); p],
            sib_hat: (0..p)
                .map(|v| (0..p).filter(|&u| u != v).collect())
                .collect(),
            l: 1,
            test_count: 0,
        }
    }

    fn max_sib(&self) -> usize {
        self.sib_hat.iter().map(BTreeSet::len).max().unwrap_or(0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    PruneSiblings,
    Certify,
    PruneAncestors,
}

/// One executed independence test, enough to replay a run.
#[derive(Debug, Clone, Serialize)]
pub struct AuditRecord {
    pub test_id: usize,
    pub phase: Phase,
    pub v: usize,
    pub c: Vec<usize>,
    pub statistic: f64,
    pub p_value: Option<f64>,
    pub independent: bool,
    pub l: usize,
    pub sweep: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

/// Data access for the discovery loop. `rep` row v is the representation of
/// Y_v (an observation vector in sample mode, source coefficients in oracle
/// mode) and `s` is the covariance the algorithm conditions on.
pub struct Backend {
    rep: DMatrix<f64>,
    evaluator: MomentEvaluator,
    s: DMatrix<f64>,
}

impl Backend {
    /// Sample backend: centers the n x p data matrix and forms the sample
    /// covariance once.
    pub fn from_data(y: &DMatrix<f64>) -> Backend {
        let (n, p) = y.shape();
        assert!(n > 0 && p > 0);
        let mut rep = y.transpose();
        for v in 0..p {
            let mean = rep.row(v).mean();
            rep.row_mut(v).add_scalar_mut(-mean);
        }
        let s = &rep * rep.transpose() / n as f64;
        Backend {
            rep,
            evaluator: MomentEvaluator::Sample,
            s,
        }
    }

    /// Oracle backend: exact mixing coefficients and implied covariance.
    pub fn from_oracle(oracle: &MomentOracle, sigma: DMatrix<f64>) -> Backend {
        Backend {
            rep: oracle.mixing().clone(),
            evaluator: oracle.evaluator(),
            s: sigma,
        }
    }

    pub fn p(&self) -> usize {
        self.rep.nrows()
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.s
    }

    /// gamma_v(D): row v of the representation minus D's row applied to it.
    fn residual_row(&self, d: &DMatrix<f64>, v: usize) -> RowDVector<f64> {
        let mut row = self.rep.row(v).clone_owned();
        for u in 0..self.p() {
            let w = d[(v, u)];
            if w != 0.0 {
                row -= self.rep.row(u) * w;
            }
        }
        row
    }
}

/// Discovery output: the estimated graph, final state, and the audit trail.
pub struct BangOutcome {
    pub graph: MixedGraph,
    pub state: DiscoveryState,
    pub audit: Vec<AuditRecord>,
}

struct Runner<'a> {
    backend: &'a Backend,
    config: &'a DiscoveryConfig,
    state: DiscoveryState,
    audit: Vec<AuditRecord>,
    sweep: usize,
}

impl<'a> Runner<'a> {
    fn record(&mut self, phase: Phase, v: usize, c: Vec<usize>, decision: &TestDecision) -> bool {
        let independent = decision.independent;
        self.audit.push(AuditRecord {
            test_id: self.state.test_count,
            phase,
            v,
            c,
            statistic: decision.statistic,
            p_value: decision.p_value,
            independent,
            l: self.state.l,
            sweep: self.sweep,
            note: decision.diagnostic.clone(),
        });
        self.state.test_count += 1;
        independent
    }

    fn note(&mut self, phase: Phase, v: usize, c: Vec<usize>, note: String) {
        self.audit.push(AuditRecord {
            test_id: self.state.test_count,
            phase,
            v,
            c,
            statistic: f64::NAN,
            p_value: None,
            independent: false,
            l: self.state.l,
            sweep: self.sweep,
            note: Some(note),
        });
    }

    /// Single pairwise test gamma_u(D) vs gamma_v(D); removes certified
    /// non-siblings symmetrically.
    fn prune_siblings(&mut self, v: usize) {
        let candidates: Vec<usize> = self.state.sib_hat[v].iter().copied().collect();
        if candidates.is_empty() {
            return;
        }
        let gamma_v = self.backend.residual_row(&self.state.d, v);
        for u in candidates {
            let gamma_u = self.backend.residual_row(&self.state.d, u);
            let decision = joint_residual_test(
                &self.backend.evaluator,
                std::slice::from_ref(&gamma_u),
                &gamma_v,
                self.config.k,
                self.config.test,
                false,
            )
            .expect("pairwise test");
            if self.record(Phase::PruneSiblings, v, vec![u], &decision) {
                self.state.sib_hat[v].remove(&u);
                self.state.sib_hat[u].remove(&v);
            }
        }
    }

    /// Tests every size-l subset of the candidate siblings of v; passing
    /// subsets are pooled and committed in a single D update. Returns whether
    /// D changed.
    fn certify_pseudo_parents(&mut self, v: usize) -> bool {
        let l = self.state.l;
        let candidates: Vec<usize> = self.state.sib_hat[v].iter().copied().collect();
        if candidates.len() < l {
            return false;
        }
        let mut certified: BTreeSet<usize> = BTreeSet::new();
        for combo in candidates.iter().copied().combinations(l) {
            let mut cfull: BTreeSet<usize> = self.state.pa_hat[v].clone();
            cfull.extend(combo.iter().copied());
            let gamma_v = match adjusted_residual(
                &self.backend.rep,
                v,
                &cfull,
                &self.backend.s,
                &self.state.d,
            ) {
                Ok(row) => row,
                Err(e) => {
                    self.note(Phase::Certify, v, combo.clone(), e.to_string());
                    continue;
                }
            };
            let tested: Vec<usize> = if self.config.certify_with_pahat {
                cfull.iter().copied().collect()
            } else {
                combo.clone()
            };
            let regressors: Vec<RowDVector<f64>> = tested
                .iter()
                .map(|&c| self.backend.residual_row(&self.state.d, c))
                .collect();
            let decision = joint_residual_test(
                &self.backend.evaluator,
                &regressors,
                &gamma_v,
                self.config.k,
                self.config.test,
                self.config.symmetric_certify,
            )
            .expect("certification test");
            if self.record(Phase::Certify, v, tested, &decision) {
                certified.extend(combo.iter().copied());
            }
        }
        if certified.is_empty() {
            return false;
        }
        // An accepted candidate that is already downstream of v in D's
        // support would close a cycle; finite-sample misfires are dropped
        // rather than committed.
        let downstream: Vec<usize> = certified
            .iter()
            .copied()
            .filter(|&c| pseudo_ancestors(&self.state.d, &[c].into_iter().collect()).contains(&v))
            .collect();
        for c in downstream {
            certified.remove(&c);
            self.note(
                Phase::Certify,
                v,
                vec![c],
                "dropped certification that would create a pseudo-ancestor cycle".into(),
            );
        }
        if certified.is_empty() {
            return false;
        }
        let mut pa_new = self.state.pa_hat[v].clone();
        pa_new.extend(certified.iter().copied());
        let a: Vec<usize> = pseudo_ancestors(&self.state.d, &pa_new).into_iter().collect();
        let pa_vec: Vec<usize> = pa_new.iter().copied().collect();
        let delta = match debiased_effect(&pa_vec, &a, v, &self.backend.s, &self.state.d) {
            Ok(delta) => delta,
            Err(e) => {
                self.note(Phase::Certify, v, pa_vec, format!("update skipped: {e}"));
                return false;
            }
        };
        for u in 0..self.backend.p() {
            self.state.d[(v, u)] = 0.0;
        }
        for (i, &u) in pa_vec.iter().enumerate() {
            self.state.d[(v, u)] = delta[i];
        }
        self.state.pa_hat[v] = pa_new;
        let parents: Vec<usize> = self.state.pa_hat[v].iter().copied().collect();
        for s in parents {
            self.state.sib_hat[v].remove(&s);
            self.state.sib_hat[s].remove(&v);
        }
        true
    }

    /// Final pass: in pseudo-topological order, drop certified ancestors whose
    /// removal leaves the residual of v independent of them.
    fn prune_ancestors(&mut self) {
        let p = self.backend.p();
        let support = MixedGraph::new(
            p,
            (0..p).flat_map(|v| {
                self.state.pa_hat[v]
                    .iter()
                    .map(move |&u| (u, v))
                    .collect::<Vec<_>>()
            }),
            [],
        )
        .expect("pseudo-parent support is acyclic");
        let order = support.topological_order().expect("acyclic support");
        for &v in &order {
            let parents: Vec<usize> = self.state.pa_hat[v].iter().copied().collect();
            for s in parents {
                let reduced: BTreeSet<usize> = self.state.pa_hat[v]
                    .iter()
                    .copied()
                    .filter(|&x| x != s)
                    .collect();
                let gamma_v = match adjusted_residual(
                    &self.backend.rep,
                    v,
                    &reduced,
                    &self.backend.s,
                    &self.state.d,
                ) {
                    Ok(row) => row,
                    Err(e) => {
                        self.note(Phase::PruneAncestors, v, vec![s], e.to_string());
                        continue;
                    }
                };
                let gamma_s = self.backend.residual_row(&self.state.d, s);
                let decision = joint_residual_test(
                    &self.backend.evaluator,
                    std::slice::from_ref(&gamma_s),
                    &gamma_v,
                    self.config.k,
                    self.config.test,
                    false,
                )
                .expect("pruning test");
                if self.record(Phase::PruneAncestors, v, vec![s], &decision) {
                    self.state.pa_hat[v].remove(&s);
                    self.state.d[(v, s)] = 0.0;
                }
            }
        }
    }

    fn run(mut self) -> BangOutcome {
        let p = self.backend.p();
        loop {
            if self.state.max_sib() < self.state.l {
                break;
            }
            if let Some(j) = self.config.max_subset {
                if self.state.l > j {
                    break;
                }
            }
            let mut updated = false;
            for v in 0..p {
                self.prune_siblings(v);
                updated |= self.certify_pseudo_parents(v);
            }
            if updated {
                self.state.l = 1;
            } else {
                self.state.l += 1;
            }
            self.sweep += 1;
        }
        self.prune_ancestors();

        let graph = MixedGraph::new(
            p,
            (0..p).flat_map(|v| {
                self.state.pa_hat[v]
                    .iter()
                    .map(move |&u| (u, v))
                    .collect::<Vec<_>>()
            }),
            (0..p).flat_map(|v| {
                self.state.sib_hat[v]
                    .iter()
                    .filter(move |&&u| u > v)
                    .map(move |&u| (v, u))
                    .collect::<Vec<_>>()
            }),
        )
        .expect("discovery emits a valid BAP");
        BangOutcome {
            graph,
            state: self.state,
            audit: self.audit,
        }
    }
}

/// Runs the full procedure against a backend.
pub fn run_bang(backend: &Backend, config: &DiscoveryConfig) -> BangOutcome {
    assert!(matches!(config.k, 3 | 4), "moment order must be 3 or 4");
    Runner {
        backend,
        config,
        state: DiscoveryState::new(backend.p()),
        audit: Vec::new(),
        sweep: 0,
    }
    .run()
}

/// Polynomial test-budget bound c * p^(J+3).
pub fn budget_bound(p: usize, j: usize, c: f64) -> f64 {
    c * (p as f64).powi(j as i32 + 3)
}
