use std::fmt;

use thiserror::Error;

/// One violated scenario invariant.
#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub field: &'static str,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

fn join(violations: &[Violation]) -> String {
    violations
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join("; ")
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid scenario: {}", join(.0))]
    InvalidScenario(Vec<Violation>),

    #[error("config error: {0}")]
    Config(String),

    #[error("invalid argument `{name}`: {message}")]
    InvalidArgument { name: &'static str, message: String },

    #[error("{what}: quadrature did not converge (estimate {estimate:e}, error estimate {error:e}, target {target:e})")]
    Quadrature {
        what: &'static str,
        estimate: f64,
        error: f64,
        target: f64,
    },

    #[error("Gil-Pelaez inversion at x = {x:e} did not converge after {panels} panels (estimate {estimate}, last correction {correction:e})")]
    Inversion {
        x: f64,
        estimate: f64,
        correction: f64,
        panels: usize,
    },

    #[error("Laplace transform evaluated at its pole s = {re} + {im}j")]
    Pole { re: f64, im: f64 },

    #[error("target false-alarm probability {target} outside achievable interval [{lo}, {hi}]")]
    TargetOutOfRange { target: f64, lo: f64, hi: f64 },

    #[error("conditioning event has probability {0:e}, too small to condition on")]
    NullConditioning(f64),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
