use thiserror::Error;

/// Errors raised by the library. Assumption failures and certificate
/// checks are reported through their own report types, not through this
/// enum.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("parameters outside the admissible region: {0}")]
    OutOfRegion(String),

    #[error("{what} = {value} is outside the domain {domain}")]
    Domain {
        what: &'static str,
        value: f64,
        domain: &'static str,
    },

    #[error("invalid probability field: {0}")]
    InvalidField(String),

    #[error("consistency check failed: {0}")]
    Consistency(String),

    #[error("no admissible value: {0}")]
    Infeasible(String),

    #[error("no certificate found over the search grid (best g = {best_g})")]
    NoCertificate { best_g: f64 },

    #[error("grid has {n} bins, need at least {min}")]
    GridSize { n: usize, min: usize },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("empty input")]
    EmptyInput,

    #[error("degenerate fit: {0}")]
    DegenerateFit(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn check_open_unit(what: &'static str, value: f64) -> Result<()> {
    if value > 0.0 && value < 1.0 {
        Ok(())
    } else {
        Err(Error::Domain {
            what,
            value,
            domain: "(0, 1)",
        })
    }
}

pub(crate) fn check_closed_unit(what: &'static str, value: f64) -> Result<()> {
    if (0.0..=1.0).contains(&value) {
        Ok(())
    } else {
        Err(Error::Domain {
            what,
            value,
            domain: "[0, 1]",
        })
    }
}
