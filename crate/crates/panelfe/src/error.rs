//! Error type shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("column '{0}' not found in input")]
    MissingColumn(String),

    #[error("row {row}: outcome value '{value}' is not 0 or 1")]
    NonBinaryOutcome { row: usize, value: String },

    #[error("duplicate observation for unit '{unit}' at period {period}")]
    DuplicateIndex { unit: String, period: i64 },

    #[error("panel contains no observations")]
    EmptyPanel,

    #[error("row {row}, column '{column}': cannot use value '{value}'")]
    BadCell {
        row: usize,
        column: String,
        value: String,
    },

    #[error("covariate '{0}' is constant; fixed effects absorb the intercept, drop the column")]
    ConstantCovariate(String),

    #[error("no observations remain after dropping perfectly classified groups")]
    EmptyAfterDrop,

    #[error("{0}")]
    InsufficientPanel(String),

    #[error("estimation did not converge within {0} iterations")]
    NotConverged(usize),

    #[error("collinear covariates detected{}", .column.as_ref().map(|c| format!(" (column '{c}')")).unwrap_or_default())]
    CollinearCovariates { column: Option<String> },

    #[error("weight matrix W is singular")]
    SingularW,

    #[error("trimming parameter {lags} too large: panel supports at most {max} lags")]
    LTooLarge { lags: usize, max: usize },

    #[error("jackknife combination is missing the '{0}' subestimate")]
    VariantInputMissing(String),

    #[error("the 'double' jackknife requires the retained unit labels to equal the retained period labels")]
    DoubleRequiresSquarePanel,

    #[error("subpanel {subset}: {source}")]
    Subpanel {
        subset: String,
        #[source]
        source: Box<Error>,
    },

    #[error("invalid options: {0}")]
    InvalidOptions(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Usage errors map to exit code 2; estimation errors to exit code 1.
    pub fn is_usage(&self) -> bool {
        matches!(
            self,
            Error::InvalidOptions(_) | Error::LTooLarge { .. } | Error::MissingColumn(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
