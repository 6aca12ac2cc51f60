//! Causal effects as the L1 distance between counterfactual outcome
//! densities, for randomized (single- and multi-source) and observational
//! designs, with bootstrap confidence intervals and mean-effect baselines.

pub mod bootstrap;
pub mod density;
pub mod distance;
pub mod error;
pub mod estimators;
pub mod kernels;
pub mod nuisance;
pub mod rng;
pub mod sample;
pub mod simulate;

pub use bootstrap::{
    ci_multi, ci_observational, ci_single, quantile_hat, BootstrapConfig, DistanceReport,
    ReportDiagnostics,
};
pub use density::{kde_conditional, IntegrationRegion, SmoothedDensity};
pub use distance::{l1_distance, L1Estimate, McConfig};
pub use error::{Error, Result};
pub use estimators::{
    estimate_multi, estimate_observational, estimate_single, silverman_bandwidth, Bandwidths,
    BaselineEstimate, ObservationalConfig,
};
pub use kernels::{KernelFamily, KernelSpec};
pub use nuisance::{NuisanceModels, OutcomeModel, PropensityModel};
pub use sample::{Arm, MultiSourceSample, ObservationalSample, Points, RandomizedSample};
