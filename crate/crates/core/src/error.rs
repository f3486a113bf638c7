use thiserror::Error;

/// Errors raised by the reduction library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("matrix is not Hurwitz (spectral abscissa {abscissa:e})")]
    NotStable { abscissa: f64 },

    #[error("resolvent (jwI - A) is numerically singular at w = {omega} (condition {cond:e})")]
    SingularResolvent { omega: f64, cond: f64 },

    #[error("network has no subsystems")]
    EmptyNetwork,

    #[error("{what} index {index} out of range 1..={len}")]
    IndexOutOfRange {
        what: &'static str,
        index: usize,
        len: usize,
    },

    #[error("interconnection is ill-posed: (I - D_K D_G) has condition {cond:e}")]
    IllPosed { cond: f64 },

    #[error("no block-diagonal solution of the Lyapunov inequality (phase-I objective {phase1_objective:e})")]
    Infeasible { phase1_objective: f64 },

    #[error("numerical breakdown: {0}")]
    NumericalBreakdown(String),

    #[error("subsystem {subsystem}: Gramian block is degenerate (min/max singular value {ratio:e})")]
    DegenerateGramian { subsystem: usize, ratio: f64 },

    #[error("subsystem {subsystem}: fast block of the balanced realization is singular")]
    SingularFastBlock { subsystem: usize },

    #[error("invalid order: {0}")]
    InvalidOrder(String),

    #[error("objective is already zero; no descent direction exists")]
    ObjectiveAtZero,

    #[error("closed-loop error system is unstable at this iterate")]
    UnstableIterate,

    #[error("reduced closed loop with orders {} is unstable; cannot seed descent", tuple(.orders))]
    UnstableInit { orders: Vec<usize> },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

fn tuple(orders: &[usize]) -> String {
    let parts: Vec<String> = orders.iter().map(|r| r.to_string()).collect();
    format!("({})", parts.join(","))
}

pub type Result<T> = std::result::Result<T, Error>;
