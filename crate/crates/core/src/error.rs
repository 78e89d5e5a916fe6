use alloc::string::String;

/// Everything that can go wrong, split into validation failures (bad input,
/// under-resolved lattice, parameters outside a proven regime) and numerical
/// failures (blow-up, non-contraction, bad fits).
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("resolution: {0}")]
    Resolution(String),
    #[error("domain: {0}")]
    Domain(String),
    #[error("out of regime: {0}")]
    OutOfRegime(String),
    #[error("divergent: {0}")]
    Divergent(String),
    #[error("singular point: {0}")]
    Singular(String),
    #[error("fit: {0}")]
    Fit(String),
    #[error("window too large: contraction ratio {ratio:.3} >= 1, try window {suggested}")]
    WindowTooLarge { ratio: f64, suggested: f64 },
    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl Error {
    /// Validation errors map to exit status 2, the rest to 3.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::InvalidParameter(_)
                | Error::Resolution(_)
                | Error::Domain(_)
                | Error::OutOfRegime(_)
                | Error::Divergent(_)
                | Error::Singular(_)
        )
    }
}

pub type Result<T> = core::result::Result<T, Error>;

macro_rules! bail {
    ($kind:ident, $($arg:tt)*) => {
        return Err($crate::error::Error::$kind(alloc::format!($($arg)*)))
    };
}
pub(crate) use bail;
