use std::fmt;

use thiserror::Error;

/// Which modelling assumption a validation failure refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Assumption {
    /// Mobility bounds `0 < M_1 <= M(r) <= M_2`.
    Mobility,
    /// Viscosity, permeability and friction bounds.
    Viscosity,
    /// Surface graph dominates the bulk graph.
    Domination,
    /// Initial means inside the interior of the graph domains.
    InitialData,
    /// Constant viscosity and mobilities, required by the stability experiment.
    ConstantCoefficients,
}

impl fmt::Display for Assumption {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Assumption::Mobility => "(A2) mobility bounds",
            Assumption::Viscosity => "(A3) viscosity/permeability/friction bounds",
            Assumption::Domination => "(S2) boundary graph dominates the bulk graph",
            Assumption::InitialData => "initial means in the interior of D(beta)",
            Assumption::ConstantCoefficients => {
                "continuous dependence requires constant nu, M_Omega, M_Gamma"
            }
        };
        f.write_str(s)
    }
}

#[derive(Debug, Error)]
pub enum ChbError {
    #[error("invalid domain: {0}")]
    Domain(String),

    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("argument {arg} outside the domain of {what}")]
    OutsideDomain { what: &'static str, arg: f64 },

    #[error("unsupported operation: {0}")]
    Unsupported(String),

    #[error("{assumption} violated: {detail}")]
    Assumption {
        assumption: Assumption,
        detail: String,
    },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("solver error: {msg} (residual history {history:?})")]
    Solver { msg: String, history: Vec<f64> },

    #[error("non-finite value detected in {0}")]
    NonFinite(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl ChbError {
    pub fn assumption(assumption: Assumption, detail: impl Into<String>) -> Self {
        ChbError::Assumption {
            assumption,
            detail: detail.into(),
        }
    }

    pub fn solver(msg: impl Into<String>, history: Vec<f64>) -> Self {
        ChbError::Solver {
            msg: msg.into(),
            history,
        }
    }
}

pub type Result<T> = std::result::Result<T, ChbError>;
