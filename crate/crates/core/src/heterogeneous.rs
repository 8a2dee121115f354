//! Observer-based output consensus for heterogeneous agents: a distributed
//! event-triggered observer estimates the exogenous signal, and each agent
//! applies a local tracking controller built from the regulator solution.

use nalgebra::{DMatrix, DVector};

use crate::graph::LeaderGraph;
use crate::linalg::{closed_loop_abscissa, LinalgError};

/// Autonomous exogenous generator `dot w0 = S w0`, acting as the leader.
#[derive(Debug, Clone)]
pub struct Exosystem {
    pub s: DMatrix<f64>,
    pub w0_init: DVector<f64>,
}

impl Exosystem {
    /// Validates that `S` has no eigenvalue with real part above `1e-8`.
    pub fn new(s: DMatrix<f64>, w0_init: DVector<f64>) -> Result<Self, LinalgError> {
        if s.nrows() != s.ncols() {
            return Err(LinalgError::NotSquare {
                rows: s.nrows(),
                cols: s.ncols(),
            });
        }
        if w0_init.len() != s.nrows() {
            return Err(LinalgError::DimensionMismatch {
                context: "Exosystem: w0 length must match S",
            });
        }
        for l in s.complex_eigenvalues().iter() {
            if l.re > 1e-8 {
                return Err(LinalgError::NotNeutrallyStable { re: l.re, im: l.im });
            }
        }
        Ok(Exosystem { s, w0_init })
    }

    pub fn dim(&self) -> usize {
        self.s.nrows()
    }
}

/// One heterogeneous agent: plant matrices plus installed tracking gains.
#[derive(Debug, Clone)]
pub struct HeteroAgent {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub e: DMatrix<f64>,
    pub f: DMatrix<f64>,
    pub k1: DMatrix<f64>,
    pub k2: DMatrix<f64>,
}

impl HeteroAgent {
    /// Check shapes and that `A + B K1` is Hurwitz.
    pub fn validate(&self, q: usize, p: usize) -> Result<(), LinalgError> {
        let n = self.a.nrows();
        let m = self.b.ncols();
        if self.a.ncols() != n
            || self.b.nrows() != n
            || self.c.shape() != (p, n)
            || self.e.shape() != (n, q)
            || self.f.shape() != (p, q)
            || self.k1.shape() != (m, n)
            || self.k2.shape() != (m, q)
        {
            return Err(LinalgError::DimensionMismatch {
                context: "HeteroAgent: inconsistent matrix shapes",
            });
        }
        let alpha = closed_loop_abscissa(&self.a, &self.b, &self.k1);
        if alpha >= -1e-9 {
            return Err(LinalgError::SynthesisFailed {
                abscissa: alpha,
                margin: 0.0,
            });
        }
        Ok(())
    }

    /// Tracking controller `u = K1 x + K2 w`.
    pub fn control_input(&self, x: &DVector<f64>, w: &DVector<f64>) -> DVector<f64> {
        &self.k1 * x + &self.k2 * w
    }

    /// Measured output `y = C x + F w0`.
    pub fn output(&self, x: &DVector<f64>, w0: &DVector<f64>) -> DVector<f64> {
        &self.c * x + &self.f * w0
    }
}

/// Degree convention in the observer triggering function.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DegreeMode {
    /// Degree within the follower subgraph only; a follower whose sole link
    /// is the leader then never fires the function branch.
    Literal,
    /// Follower degree plus the leader link.
    Inclusive,
}

/// Observer drift `dot w_i = S w_i - c sum_{j=0..N} a_ij (wt_i - wt_j)`.
///
/// The consensus term is subtracted: the sign that makes the disagreement
/// decrease, matching the error dynamics the update is derived from (a
/// plus sign makes even the scalar single-follower case diverge; see the
/// regression test below).
pub fn observer_rate(
    s: &DMatrix<f64>,
    i: usize,
    w_i: &DVector<f64>,
    estimates: &[DVector<f64>],
    w0: &DVector<f64>,
    g: &LeaderGraph,
    c: f64,
) -> DVector<f64> {
    s * w_i - c * observer_coupling(i, estimates, w0, g)
}

/// The held coupling term `sum_{j=0..N} a_ij (wt_i - wt_j)` with `wt_0 = w0`.
pub fn observer_coupling(
    i: usize,
    estimates: &[DVector<f64>],
    w0: &DVector<f64>,
    g: &LeaderGraph,
) -> DVector<f64> {
    let row = g.followers.adjacency_row(i);
    let mut sum = DVector::zeros(estimates[i].len());
    for (j, &a) in row.iter().enumerate() {
        if a != 0 {
            sum += &estimates[i] - &estimates[j];
        }
    }
    if g.leader_link(i) {
        sum += &estimates[i] - w0;
    }
    sum
}

/// Observer triggering function
/// `f_i = d_i ||eps_i||^2 - (1/4) sum_{j=0..N} a_ij ||wt_i - wt_j||^2 - mu exp(-nu t)`
/// with `eps_i = exp(-S t) e_i` and the degree convention selected by `mode`.
#[allow(clippy::too_many_arguments)]
pub fn observer_trigger_value(
    i: usize,
    e_i: &DVector<f64>,
    estimates: &[DVector<f64>],
    w0: &DVector<f64>,
    g: &LeaderGraph,
    exp_neg_st: &DMatrix<f64>,
    t: f64,
    mu: f64,
    nu: f64,
    mode: DegreeMode,
) -> f64 {
    let row = g.followers.adjacency_row(i);
    let mut d_i = row.iter().map(|&a| a as usize).sum::<usize>() as f64;
    if mode == DegreeMode::Inclusive && g.leader_link(i) {
        d_i += 1.0;
    }
    let eps = exp_neg_st * e_i;
    let mut neighbor_term = 0.0;
    for (j, &a) in row.iter().enumerate() {
        if a != 0 {
            neighbor_term += (&estimates[i] - &estimates[j]).norm_squared();
        }
    }
    if g.leader_link(i) {
        neighbor_term += (&estimates[i] - w0).norm_squared();
    }
    d_i * eps.norm_squared() - 0.25 * neighbor_term - mu * (-nu * t).exp()
}
