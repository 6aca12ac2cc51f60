use thiserror::Error;

use crate::sample::Arm;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("arm {arm} has no observations{}", site_suffix(*.site))]
    EmptyArm { arm: Arm, site: Option<usize> },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("unsupported outcome dimension {0} (supported: 1..=3)")]
    UnsupportedDimension(usize),

    #[error("propensity {value:.3e} for arm {arm} at row {row} is below the clip threshold {threshold:.0e}")]
    PropensityUnderflow {
        row: usize,
        arm: Arm,
        value: f64,
        threshold: f64,
    },

    #[error("training data for fold {fold} contains only one treatment arm")]
    DegenerateArm { fold: usize },

    #[error("singular design matrix in ridge regression")]
    SingularDesign,

    #[error("bootstrap resample kept drawing an empty arm after {attempts} attempts")]
    DegenerateResample { attempts: usize },

    #[error("missing known treatment probability")]
    MissingTreatmentProbability,

    #[error("evaluation grid is empty")]
    EmptyGrid,

    #[error("empty input")]
    EmptyInput,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

fn site_suffix(site: Option<usize>) -> String {
    match site {
        Some(i) => format!(" at site {i}"),
        None => String::new(),
    }
}

impl Error {
    /// Stable `module::Variant` name used in CLI error lines.
    pub fn qualified_name(&self) -> &'static str {
        match self {
            Error::EmptyArm { .. } => "density::EmptyArm",
            Error::DimensionMismatch { .. } => "distance::DimensionMismatch",
            Error::UnsupportedDimension(_) => "kernels::UnsupportedDimension",
            Error::PropensityUnderflow { .. } => "density::PropensityUnderflow",
            Error::DegenerateArm { .. } => "nuisance::DegenerateArm",
            Error::SingularDesign => "nuisance::SingularDesign",
            Error::DegenerateResample { .. } => "bootstrap::DegenerateResample",
            Error::MissingTreatmentProbability => "estimators::MissingTreatmentProbability",
            Error::EmptyGrid => "nuisance::EmptyGrid",
            Error::EmptyInput => "bootstrap::EmptyInput",
            Error::InvalidConfig(_) => "config::InvalidConfig",
        }
    }
}
