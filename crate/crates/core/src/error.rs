use thiserror::Error;

/// Errors raised by the beamforming library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("dimension mismatch in {context}: expected {expected:?}, got {actual:?}")]
    Dimension {
        context: &'static str,
        expected: (usize, usize),
        actual: (usize, usize),
    },

    #[error("{context}: matrix is not Hermitian positive semidefinite (min eigenvalue {min_eig:e})")]
    NotPsd { context: String, min_eig: f64 },

    #[error("{context}: matrix is not positive definite")]
    NotPositiveDefinite { context: &'static str },

    #[error("phase vector entry {index} has modulus {modulus} (expected 1)")]
    NotUnitModulus { index: usize, modulus: f64 },

    #[error(
        "power bisection did not converge after {iterations} iterations \
         (lambda in [{lo:e}, {hi:e}], power {power:e}, budget {budget:e})"
    )]
    Bisection {
        iterations: usize,
        lo: f64,
        hi: f64,
        power: f64,
        budget: f64,
    },

    #[error("numerical failure: {0}")]
    Numerical(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_dims(
    context: &'static str,
    expected: (usize, usize),
    actual: (usize, usize),
) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(Error::Dimension {
            context,
            expected,
            actual,
        })
    }
}
