use alloc::string::String;

/// Errors raised by parameter validation and the numerical routines.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    /// A structural parameter (n, k, c, conditioning, ...) is inconsistent.
    #[error("invalid parameters: {0}")]
    Params(String),
    /// An argument is out of range for the given object (worker id, block index, dimension).
    #[error("invalid input: {0}")]
    Input(String),
    /// A quantity lies outside the region where the formula is defined.
    #[error("domain error: {0}")]
    Domain(String),
    /// Dataset content is unusable (non-finite values, bad labels).
    #[error("data error: {0}")]
    Data(String),
}

pub type Result<T> = core::result::Result<T, Error>;

macro_rules! bail {
    ($kind:ident, $($arg:tt)*) => {
        return Err($crate::error::Error::$kind(alloc::format!($($arg)*)))
    };
}
pub(crate) use bail;
