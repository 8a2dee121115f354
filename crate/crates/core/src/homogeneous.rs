//! Broadcast-estimate state-consensus protocol: each agent propagates model
//! estimates of its own and its neighbors' last broadcast states, applies the
//! relative-estimate controller, and re-broadcasts when the triggering
//! function crosses zero or its neighborhood changes.

use nalgebra::{DMatrix, DVector};

use crate::graph::UGraph;
use crate::linalg::{matrix_exponential, spectral_norm, LinalgError};

/// Protocol parameters of the homogeneous consensus controller and trigger.
#[derive(Debug, Clone)]
pub struct HomoParams {
    pub c: f64,
    pub delta: f64,
    pub mu: f64,
    pub nu: f64,
    pub g: DMatrix<f64>,
    g_norm: f64,
}

impl HomoParams {
    pub fn new(c: f64, delta: f64, mu: f64, nu: f64, g: DMatrix<f64>) -> Result<Self, ParamError> {
        if !(c > 0.0) {
            return Err(ParamError::CouplingGain(c));
        }
        if !(delta > 0.0 && delta < 1.0) {
            return Err(ParamError::Delta(delta));
        }
        if !(mu > 0.0) {
            return Err(ParamError::Mu(mu));
        }
        if !(nu > 0.0) {
            return Err(ParamError::Nu(nu));
        }
        let g_norm = spectral_norm(&g);
        Ok(HomoParams {
            c,
            delta,
            mu,
            nu,
            g,
            g_norm,
        })
    }

    /// Spectral norm of `G`, cached at construction.
    pub fn g_norm(&self) -> f64 {
        self.g_norm
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ParamError {
    #[error("coupling gain c must be positive, got {0}")]
    CouplingGain(f64),
    #[error("delta must lie in (0, 1), got {0}")]
    Delta(f64),
    #[error("mu must be positive, got {0}")]
    Mu(f64),
    #[error("nu must be positive, got {0}")]
    Nu(f64),
    #[error("sigma bound must be positive, got {0}")]
    Sigma(f64),
}

/// Why an agent broadcast.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TriggerReason {
    Function,
    Topology,
}

impl std::fmt::Display for TriggerReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            TriggerReason::Function => write!(f, "function"),
            TriggerReason::Topology => write!(f, "topology"),
        }
    }
}

/// Per-agent broadcast bookkeeping between events.
#[derive(Debug, Clone)]
pub struct AgentEventState {
    pub last_trigger: f64,
    pub broadcast: DVector<f64>,
    pub adjacency_at_trigger: Vec<u8>,
}

/// Model-propagated estimate `exp(A (t - t_k)) x(t_k)` of a broadcast state.
pub fn state_estimate(
    broadcast: &DVector<f64>,
    t_k: f64,
    t: f64,
    a: &DMatrix<f64>,
) -> Result<DVector<f64>, LinalgError> {
    if t < t_k {
        return Err(LinalgError::InvalidParameter(
            "state_estimate: query time precedes the broadcast time",
        ));
    }
    Ok(matrix_exponential(a, t - t_k)? * broadcast)
}

/// Relative-estimate control input `u_i = c G sum_j a_ij (xt_i - xt_j)`.
pub fn control_input(
    i: usize,
    estimates: &[DVector<f64>],
    g: &UGraph,
    params: &HomoParams,
) -> DVector<f64> {
    let row = g.adjacency_row(i);
    let mut diff = DVector::zeros(estimates[i].len());
    for (j, &a) in row.iter().enumerate() {
        if a != 0 {
            diff += &estimates[i] - &estimates[j];
        }
    }
    params.c * &params.g * diff
}

/// Triggering function
/// `f_i = 4 d_i ||G||^2 ||e_i||^2 - delta sum_j a_ij ||G (xt_i - xt_j)||^2 - mu exp(-nu t)`.
pub fn triggering_value(
    i: usize,
    e_i: &DVector<f64>,
    estimates: &[DVector<f64>],
    g: &UGraph,
    params: &HomoParams,
    t: f64,
) -> f64 {
    let row = g.adjacency_row(i);
    let d_i = row.iter().map(|&a| a as usize).sum::<usize>() as f64;
    let mut neighbor_term = 0.0;
    for (j, &a) in row.iter().enumerate() {
        if a != 0 {
            neighbor_term += (&params.g * (&estimates[i] - &estimates[j])).norm_squared();
        }
    }
    4.0 * d_i * params.g_norm * params.g_norm * e_i.norm_squared()
        - params.delta * neighbor_term
        - params.mu * (-params.nu * t).exp()
}

/// Trigger rule: fire on `f_i >= 0` or on any change of the adjacency row
/// since the last broadcast. A topology change takes precedence in the log.
pub fn should_trigger(
    f_i: f64,
    current_row: &[u8],
    row_at_trigger: &[u8],
) -> Option<TriggerReason> {
    if current_row != row_at_trigger {
        Some(TriggerReason::Topology)
    } else if f_i >= 0.0 {
        Some(TriggerReason::Function)
    } else {
        None
    }
}

/// Consensus error `xi_i = x_i - mean_j x_j`; zero iff all states agree.
pub fn consensus_error(states: &[DVector<f64>]) -> Vec<DVector<f64>> {
    let n = states.len();
    let dim = states[0].len();
    let mut mean = DVector::zeros(dim);
    for x in states {
        mean += x;
    }
    mean /= n as f64;
    states.iter().map(|x| x - &mean).collect()
}

/// Stacked Euclidean norm of the consensus error.
pub fn consensus_error_norm(states: &[DVector<f64>]) -> f64 {
    consensus_error(states)
        .iter()
        .map(|xi| xi.norm_squared())
        .sum::<f64>()
        .sqrt()
}

/// Guaranteed lower bound on the gap until the next function trigger.
///
/// Between events the measurement error obeys
/// `d||e||/dt <= ||A|| ||e|| + c sigma_i`, and the trigger cannot fire before
/// `||e||^2` reaches `mu exp(-nu t) / (4 d_i ||G||^2)`, which yields the
/// implicit bound
/// `tau = (1/||A||) ln(1 + ||A||/(2 c sigma_i ||G||) sqrt(mu exp(-nu (t_k+tau))/d_i))`,
/// solved here by bisection. The `1/(2||G||)` factor restores the factor four
/// of the triggering function that the cited bound drops from its own
/// threshold condition. Returns `None` for isolated agents (`d_i = 0`), whose
/// trigger cannot fire through the function branch.
pub fn zeno_lower_bound(
    sigma_i: f64,
    d_i: usize,
    a_norm: f64,
    params: &HomoParams,
    t_k: f64,
) -> Result<Option<f64>, ParamError> {
    if d_i == 0 {
        return Ok(None);
    }
    if !(sigma_i > 0.0) {
        return Err(ParamError::Sigma(sigma_i));
    }
    let coeff = 0.5 / (params.c * sigma_i * params.g_norm);
    let root =
        |tau: f64| -> f64 { (params.mu * (-params.nu * (t_k + tau)).exp() / d_i as f64).sqrt() };
    let rhs = |tau: f64| -> f64 {
        if a_norm > 1e-300 {
            (1.0 + a_norm * coeff * root(tau)).ln() / a_norm
        } else {
            // ||A|| -> 0 limit of ln(1 + ||A|| x)/||A||.
            coeff * root(tau)
        }
    };
    // g(tau) = rhs(tau) - tau is strictly decreasing with g(0) > 0.
    let mut hi = rhs(0.0).max(1e-300);
    while rhs(hi) > hi {
        hi *= 2.0;
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if rhs(mid) > mid {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-15 {
            break;
        }
    }
    Ok(Some(0.5 * (lo + hi)))
}
