//! Distributional treatment-effect estimators for the three designs, and the
//! mean-effect baselines they are compared against.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::density::{
    kde_conditional, pooled_region, DrContributions, EvaluationGrid, SmoothedDensity,
};
use crate::distance::{l1_distance, L1Estimate, McConfig, McIntegrator};
use crate::error::{Error, Result};
use crate::kernels::KernelSpec;
use crate::nuisance::{
    cross_fit, fit_propensity, fit_regression, CrossFitPlan, NuisanceModels, OutcomeModel,
    PropensityModel, Targets,
};
use crate::rng;
use crate::sample::{Arm, MultiSourceSample, ObservationalSample, Points, RandomizedSample};

/// Linear-interpolation sample quantile of sorted data.
fn sorted_quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

fn sample_sd(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    if values.len() < 2 {
        return 0.0;
    }
    let mean = values.iter().sum::<f64>() / n;
    (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
}

/// Rule-of-thumb bandwidth on pooled outcomes:
/// `0.9 min(sd, IQR/1.34) n^(-1/5)` in one dimension (a normal-reference rule
/// in higher dimensions), rescaled from the Gaussian to the chosen kernel.
pub fn silverman_bandwidth(outcomes: &Points, kernel: &KernelSpec) -> Result<f64> {
    let n = outcomes.len();
    if n < 2 {
        return Err(Error::InvalidConfig(
            "automatic bandwidth needs at least two observations".into(),
        ));
    }
    let d = outcomes.dim();
    let mut spread = 0.0;
    for k in 0..d {
        let mut col: Vec<f64> = outcomes.rows().map(|r| r[k]).collect();
        col.sort_by(f64::total_cmp);
        let sd = sample_sd(&col);
        let iqr = (sorted_quantile(&col, 0.75) - sorted_quantile(&col, 0.25)) / 1.34;
        spread += if iqr > 0.0 { sd.min(iqr) } else { sd } / d as f64;
    }
    if !(spread > 0.0) {
        return Err(Error::InvalidConfig(
            "automatic bandwidth undefined for constant outcomes; pass one explicitly".into(),
        ));
    }
    let nf = n as f64;
    let base = if d == 1 {
        0.9 * spread * nf.powf(-0.2)
    } else {
        let df = d as f64;
        spread * (4.0 / (df + 2.0)).powf(1.0 / (df + 4.0)) * nf.powf(-1.0 / (df + 4.0))
    };
    Ok(base * kernel.gaussian_equivalent_scale())
}

/// Per-arm bandwidths for the randomized estimators.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bandwidths {
    pub treated: f64,
    pub control: f64,
}

impl Bandwidths {
    pub fn equal(h: f64) -> Self {
        Self {
            treated: h,
            control: h,
        }
    }

    pub fn get(&self, arm: Arm) -> f64 {
        match arm {
            Arm::Treated => self.treated,
            Arm::Control => self.control,
        }
    }

    pub fn swapped(&self) -> Self {
        Self {
            treated: self.control,
            control: self.treated,
        }
    }
}

/// Point estimate of the distance between the two arm KDEs.
#[derive(Debug, Clone)]
pub struct SingleEstimate {
    pub distance: L1Estimate,
    pub treated: SmoothedDensity,
    pub control: SmoothedDensity,
}

impl SingleEstimate {
    pub fn density(&self, arm: Arm) -> &SmoothedDensity {
        match arm {
            Arm::Treated => &self.treated,
            Arm::Control => &self.control,
        }
    }
}

pub fn estimate_single(
    data: &RandomizedSample,
    h: Bandwidths,
    kernel: &KernelSpec,
    mc: McConfig,
) -> Result<SingleEstimate> {
    let treated = kde_conditional(data, Arm::Treated, h.treated, kernel)?;
    let control = kde_conditional(data, Arm::Control, h.control, kernel)?;
    let distance = l1_distance(&treated, &control, mc)?;
    Ok(SingleEstimate {
        distance,
        treated,
        control,
    })
}

#[derive(Debug, Clone)]
pub struct MultiEstimate {
    pub estimate: f64,
    /// Combined MC standard error of the site average.
    pub mc_stderr: f64,
    pub per_site: Vec<L1Estimate>,
}

/// MC configuration used for site `i`: same point count, site-specific seed.
pub fn site_mc(mc: McConfig, site: usize) -> McConfig {
    McConfig {
        n_points: mc.n_points,
        seed: rng::derive_seed(mc.seed, site as u64),
    }
}

pub(crate) fn tag_site(site: usize) -> impl Fn(Error) -> Error {
    move |e| match e {
        Error::EmptyArm { arm, .. } => Error::EmptyArm {
            arm,
            site: Some(site),
        },
        other => other,
    }
}

/// Average over sites of the per-site distance.
pub fn estimate_multi(
    data: &MultiSourceSample,
    h: Bandwidths,
    kernel: &KernelSpec,
    mc: McConfig,
) -> Result<MultiEstimate> {
    let per_site = data
        .sites()
        .iter()
        .enumerate()
        .map(|(i, site)| {
            estimate_single(site, h, kernel, site_mc(mc, i))
                .map(|e| e.distance)
                .map_err(tag_site(i))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(summarize_sites(per_site))
}

pub(crate) fn summarize_sites(per_site: Vec<L1Estimate>) -> MultiEstimate {
    let n = per_site.len() as f64;
    let estimate = per_site.iter().map(|e| e.estimate).sum::<f64>() / n;
    let mc_stderr = per_site
        .iter()
        .map(|e| e.mc_stderr.powi(2))
        .sum::<f64>()
        .sqrt()
        / n;
    MultiEstimate {
        estimate,
        mc_stderr,
        per_site,
    }
}

/// Settings for the observational estimator beyond the data.
#[derive(Debug, Clone)]
pub struct ObservationalConfig {
    pub h: f64,
    pub kernel: KernelSpec,
    pub folds: usize,
    pub fold_seed: u64,
    pub models: NuisanceModels,
    pub mc: McConfig,
    pub grid_nodes: usize,
}

impl ObservationalConfig {
    pub fn new(h: f64, kernel: KernelSpec, mc: McConfig) -> Self {
        Self {
            h,
            kernel,
            folds: 2,
            fold_seed: mc.seed,
            models: NuisanceModels::default(),
            mc,
            grid_nodes: EvaluationGrid::default_nodes(kernel.dim),
        }
    }
}

/// Fitted doubly-robust estimate with everything the bootstrap reuses.
#[derive(Debug, Clone)]
pub struct ObservationalEstimate {
    pub distance: L1Estimate,
    pub treated: SmoothedDensity,
    pub control: SmoothedDensity,
    /// Per-row influence terms, rows ordered by fold.
    pub contributions: [DrContributions; 2],
    /// Data row behind each contribution row.
    pub row_order: Vec<usize>,
    pub clamped: usize,
    pub clipped: usize,
    pub propensity_brier: Vec<f64>,
}

impl ObservationalEstimate {
    pub fn density(&self, arm: Arm) -> &SmoothedDensity {
        match arm {
            Arm::Treated => &self.treated,
            Arm::Control => &self.control,
        }
    }

    pub fn grid(&self) -> &EvaluationGrid {
        self.contributions[0].grid()
    }
}

/// Shared grid for the pseudo-densities: pooled outcome range widened by
/// the kernel reach.
pub fn observational_grid(
    data: &ObservationalSample,
    h: f64,
    kernel: &KernelSpec,
    nodes: usize,
) -> Result<EvaluationGrid> {
    EvaluationGrid::new(pooled_region(data.outcomes(), h, kernel)?, nodes)
}

pub fn estimate_observational(
    data: &ObservationalSample,
    cfg: &ObservationalConfig,
) -> Result<ObservationalEstimate> {
    let grid = observational_grid(data, cfg.h, &cfg.kernel, cfg.grid_nodes)?;
    estimate_observational_on(data, cfg, &grid)
}

/// As [`estimate_observational`] with a given evaluation grid.
pub fn estimate_observational_on(
    data: &ObservationalSample,
    cfg: &ObservationalConfig,
    grid: &EvaluationGrid,
) -> Result<ObservationalEstimate> {
    if data.dim() != cfg.kernel.dim {
        return Err(Error::DimensionMismatch {
            expected: cfg.kernel.dim,
            found: data.dim(),
        });
    }
    for arm in Arm::BOTH {
        if data.arm_count(arm) == 0 {
            return Err(Error::EmptyArm { arm, site: None });
        }
    }
    let plan = CrossFitPlan::new(data.len(), cfg.folds, cfg.fold_seed)?;
    let fits = cross_fit(data, &plan, &grid.points(), cfg.h, &cfg.kernel, &cfg.models)?;
    let mut contributions = [
        DrContributions::empty(Arm::Control, grid.clone(), cfg.h),
        DrContributions::empty(Arm::Treated, grid.clone(), cfg.h),
    ];
    let mut row_order = Vec::with_capacity(data.len());
    for (fit, rows) in &fits {
        for c in contributions.iter_mut() {
            c.extend(data, rows, fit, &cfg.kernel)?;
        }
        row_order.extend_from_slice(rows);
    }
    let control = contributions[0].density()?;
    let treated = contributions[1].density()?;
    let distance = l1_distance(&treated, &control, cfg.mc)?;
    Ok(ObservationalEstimate {
        distance,
        clamped: contributions.iter().map(|c| c.clamped()).sum(),
        clipped: fits.iter().map(|(f, _)| f.clipped).sum(),
        propensity_brier: fits.iter().map(|(f, _)| f.propensity_brier).collect(),
        treated,
        control,
        contributions,
        row_order,
    })
}

/// Integral of each pseudo-density over its grid region; near 1 when the
/// nuisances are well calibrated.
pub fn pseudo_density_mass(est: &ObservationalEstimate, mc: McConfig) -> Result<[L1Estimate; 2]> {
    let integrator = McIntegrator::new(est.grid().region().clone(), mc)?;
    Ok([
        integrator.integral(&est.control)?,
        integrator.integral(&est.treated)?,
    ])
}

/// Mean-effect estimate with a confidence interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineEstimate {
    pub name: String,
    pub estimate: f64,
    pub ci_lower: f64,
    pub ci_upper: f64,
    pub ci_method: String,
}

fn z_value(alpha: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "alpha must be in (0, 1), got {alpha}"
        )));
    }
    let normal = Normal::standard();
    Ok(normal.inverse_cdf(1.0 - alpha / 2.0))
}

fn wald(name: &str, estimate: f64, se: f64, alpha: f64) -> Result<BaselineEstimate> {
    let z = z_value(alpha)?;
    Ok(BaselineEstimate {
        name: name.to_string(),
        estimate,
        ci_lower: estimate - z * se,
        ci_upper: estimate + z * se,
        ci_method: "wald".to_string(),
    })
}

/// Wald interval from per-row influence terms whose mean is the estimate.
fn wald_from_terms(name: &str, terms: &[f64], alpha: f64) -> Result<BaselineEstimate> {
    let n = terms.len() as f64;
    let estimate = terms.iter().sum::<f64>() / n;
    wald(name, estimate, sample_sd(terms) / n.sqrt(), alpha)
}

fn scalar_outcomes(y: &Points) -> Result<&[f64]> {
    if y.dim() != 1 {
        return Err(Error::DimensionMismatch {
            expected: 1,
            found: y.dim(),
        });
    }
    Ok(y.as_slice())
}

fn arm_values(arms: &[Arm], y: &[f64], arm: Arm) -> Vec<f64> {
    arms.iter()
        .zip(y)
        .filter(|(a, _)| **a == arm)
        .map(|(_, v)| *v)
        .collect()
}

/// `mean(Y | A = 1) - mean(Y | A = 0)`.
pub fn diff_in_means(data: &RandomizedSample, alpha: f64) -> Result<BaselineEstimate> {
    let y = scalar_outcomes(data.outcomes())?;
    let mut stats = [(0.0, 0.0); 2];
    for arm in Arm::BOTH {
        let v = arm_values(data.arms(), y, arm);
        if v.is_empty() {
            return Err(Error::EmptyArm { arm, site: None });
        }
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        stats[arm.index()] = (mean, sample_sd(&v).powi(2) / v.len() as f64);
    }
    let (m1, v1) = stats[1];
    let (m0, v0) = stats[0];
    wald("difference-in-means", m1 - m0, (v1 + v0).sqrt(), alpha)
}

/// `mean(A Y / pi - (1 - A) Y / (1 - pi))` with the known design probability.
pub fn horvitz_thompson(data: &RandomizedSample, alpha: f64) -> Result<BaselineEstimate> {
    let y = scalar_outcomes(data.outcomes())?;
    let pi = data.treat_prob.ok_or(Error::MissingTreatmentProbability)?;
    let terms: Vec<f64> = data
        .arms()
        .iter()
        .zip(y)
        .map(|(a, v)| match a {
            Arm::Treated => v / pi,
            Arm::Control => -v / (1.0 - pi),
        })
        .collect();
    wald_from_terms("horvitz-thompson", &terms, alpha)
}

/// Resampling settings for baselines without a closed-form interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BaselineOptions {
    pub alpha: f64,
    pub bootstrap: usize,
    pub seed: u64,
}

fn plugin_point(data: &ObservationalSample, model: &OutcomeModel) -> Result<f64> {
    let targets = Targets::scalar(data.outcomes())?;
    let reg = fit_regression(data, &targets, model)?;
    let (mut m1, mut m0) = ([0.0], [0.0]);
    let mut acc = 0.0;
    for x in data.covariates().rows() {
        reg.predict(x, Arm::Treated, &mut m1);
        reg.predict(x, Arm::Control, &mut m0);
        acc += m1[0] - m0[0];
    }
    Ok(acc / data.len() as f64)
}

/// `mean(mu1(X) - mu0(X))` with regressions fit on the full sample; the
/// interval is a percentile bootstrap.
pub fn ate_plugin_regression(
    data: &ObservationalSample,
    model: &OutcomeModel,
    opts: BaselineOptions,
) -> Result<BaselineEstimate> {
    scalar_outcomes(data.outcomes())?;
    let estimate = plugin_point(data, model)?;
    let n = data.len();
    let mut reps = Vec::with_capacity(opts.bootstrap);
    for b in 0..opts.bootstrap {
        let mut r = rng::stream(opts.seed, b as u64);
        let idx = crate::bootstrap::draw_indices(&mut r, n);
        match plugin_point(&data.select(&idx), model) {
            Ok(v) => reps.push(v),
            Err(Error::DegenerateArm { .. }) => continue,
            Err(e) => return Err(e),
        }
    }
    if reps.is_empty() {
        return wald("plug-in regression", estimate, f64::NAN, opts.alpha);
    }
    reps.sort_by(f64::total_cmp);
    Ok(BaselineEstimate {
        name: "plug-in regression".into(),
        estimate,
        ci_lower: sorted_quantile(&reps, opts.alpha / 2.0),
        ci_upper: sorted_quantile(&reps, 1.0 - opts.alpha / 2.0),
        ci_method: "percentile-bootstrap".into(),
    })
}

/// `mean(A Y / pi(X) - (1 - A) Y / (1 - pi(X)))`, propensity fit on the full
/// sample.
pub fn ate_ipw(
    data: &ObservationalSample,
    model: &PropensityModel,
    alpha: f64,
) -> Result<BaselineEstimate> {
    let y = scalar_outcomes(data.outcomes())?;
    let fit = fit_propensity(data, model)?;
    let terms: Vec<f64> = data
        .covariates()
        .rows()
        .zip(data.arms())
        .zip(y)
        .map(|((x, a), v)| {
            let p = fit.model.treated_prob(x);
            match a {
                Arm::Treated => v / p,
                Arm::Control => -v / (1.0 - p),
            }
        })
        .collect();
    wald_from_terms("inverse-probability-weighting", &terms, alpha)
}

/// Cross-fitted augmented IPW estimate of the mean effect.
pub fn ate_doubly_robust(
    data: &ObservationalSample,
    models: &NuisanceModels,
    plan: &CrossFitPlan,
    alpha: f64,
) -> Result<BaselineEstimate> {
    let y = scalar_outcomes(data.outcomes())?;
    let mut terms = vec![0.0; data.len()];
    for f in 0..plan.n_folds() {
        let train = data.select(&plan.complement(f));
        let with_fold = |e: Error| match e {
            Error::DegenerateArm { .. } => Error::DegenerateArm { fold: f },
            other => other,
        };
        let prop = fit_propensity(&train, &models.propensity).map_err(with_fold)?;
        let targets = Targets::scalar(train.outcomes())?;
        let reg = fit_regression(&train, &targets, &models.outcome).map_err(with_fold)?;
        let (mut m1, mut m0) = ([0.0], [0.0]);
        for i in plan.fold(f) {
            let x = data.covariates().row(i);
            let p = prop.model.treated_prob(x);
            reg.predict(x, Arm::Treated, &mut m1);
            reg.predict(x, Arm::Control, &mut m0);
            let residual_weight = match data.arms()[i] {
                Arm::Treated => (y[i] - m1[0]) / p,
                Arm::Control => -(y[i] - m0[0]) / (1.0 - p),
            };
            terms[i] = m1[0] - m0[0] + residual_weight;
        }
    }
    wald_from_terms("doubly-robust", &terms, alpha)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn diff_in_means_examples() {
        let d = RandomizedSample::from_scalars(&[1, 1, 0], &[2.0, 4.0, 1.0]).unwrap();
        assert_eq!(diff_in_means(&d, 0.05).unwrap().estimate, 2.0);
        let same = RandomizedSample::from_scalars(&[1, 0, 1, 0], &[3.0, 3.0, 3.0, 3.0]).unwrap();
        let e = diff_in_means(&same, 0.05).unwrap();
        assert_eq!((e.estimate, e.ci_lower, e.ci_upper), (0.0, 0.0, 0.0));
        let one_arm = RandomizedSample::from_scalars(&[1, 1], &[1.0, 2.0]).unwrap();
        assert_eq!(
            diff_in_means(&one_arm, 0.05).unwrap_err(),
            Error::EmptyArm {
                arm: Arm::Control,
                site: None
            }
        );
    }

    #[test]
    fn horvitz_thompson_examples() {
        let d = RandomizedSample::from_scalars(&[1, 0], &[3.0, 1.0])
            .unwrap()
            .with_treat_prob(0.5)
            .unwrap();
        assert_eq!(horvitz_thompson(&d, 0.05).unwrap().estimate, 2.0);
        let zeros = RandomizedSample::from_scalars(&[1, 0, 0], &[0.0; 3])
            .unwrap()
            .with_treat_prob(0.3)
            .unwrap();
        assert_eq!(horvitz_thompson(&zeros, 0.05).unwrap().estimate, 0.0);
        let unknown = RandomizedSample::from_scalars(&[1, 0], &[3.0, 1.0]).unwrap();
        assert_eq!(
            horvitz_thompson(&unknown, 0.05).unwrap_err(),
            Error::MissingTreatmentProbability
        );
    }

    #[test]
    fn silverman_for_epanechnikov() {
        let k = KernelSpec::epanechnikov(1).unwrap();
        let y = Points::scalars((0..100).map(|i| i as f64 / 10.0).collect());
        let h = silverman_bandwidth(&y, &k).unwrap();
        let sd = sample_sd(y.as_slice());
        let iqr =
            (sorted_quantile(y.as_slice(), 0.75) - sorted_quantile(y.as_slice(), 0.25)) / 1.34;
        let expected = 0.9 * sd.min(iqr) * 100f64.powf(-0.2) * k.gaussian_equivalent_scale();
        assert!((h - expected).abs() < 1e-12);
        assert!(silverman_bandwidth(&Points::scalars(vec![1.0; 5]), &k).is_err());
    }

    #[test]
    fn multi_is_site_average() {
        let per_site = vec![
            L1Estimate {
                estimate: 0.2,
                mc_stderr: 0.0,
            },
            L1Estimate {
                estimate: 0.4,
                mc_stderr: 0.0,
            },
        ];
        assert!((summarize_sites(per_site).estimate - 0.3).abs() < 1e-15);
    }

    #[test]
    fn observational_rejects_single_fold() {
        let d = ObservationalSample::new(
            Points::scalars(vec![0.0, 1.0, 2.0, 3.0]),
            vec![Arm::Treated, Arm::Control, Arm::Treated, Arm::Control],
            Points::scalars(vec![0.0, 1.0, 2.0, 3.0]),
        )
        .unwrap();
        let k = KernelSpec::epanechnikov(1).unwrap();
        let mut cfg = ObservationalConfig::new(0.5, k, McConfig::new(1000, 0).unwrap());
        cfg.folds = 1;
        assert!(matches!(
            estimate_observational(&d, &cfg),
            Err(Error::InvalidConfig(_))
        ));
    }
}
