//! Bootstrap confidence intervals centered at the distance estimate.
//!
//! Single-source and observational intervals add the upper `alpha/2`
//! quantiles of the per-arm statistics `sqrt(n) D(resampled, original)`.
//! The multi-source interval adds per-site resampling error to a site-level
//! bootstrap of the site average.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::density::{kde_in_region, pooled_region, SmoothedDensity};
use crate::distance::{McConfig, McIntegrator};
use crate::error::{Error, Result};
use crate::estimators::{
    estimate_multi, estimate_observational, estimate_observational_on, estimate_single, site_mc,
    tag_site, Bandwidths, ObservationalConfig,
};
use crate::kernels::KernelSpec;
use crate::rng::{self, derive_seed, StreamRng};
use crate::sample::{Arm, MultiSourceSample, ObservationalSample, RandomizedSample};

pub const MIN_REPLICATES: usize = 20;
pub const MAX_REDRAWS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapConfig {
    pub replicates: usize,
    pub alpha: f64,
    pub seed: u64,
}

impl BootstrapConfig {
    pub fn new(replicates: usize, alpha: f64, seed: u64) -> Result<Self> {
        if replicates < MIN_REPLICATES {
            return Err(Error::InvalidConfig(format!(
                "bootstrap needs at least {MIN_REPLICATES} replicates, got {replicates}"
            )));
        }
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "alpha must be in (0, 1), got {alpha}"
            )));
        }
        Ok(Self {
            replicates,
            alpha,
            seed,
        })
    }
}

/// `inf { z : #{T_i > z} / B <= level }`, which is always one of the values.
pub fn quantile_hat(values: &[f64], level: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let b = sorted.len() as f64;
    for (k, z) in sorted.iter().enumerate() {
        // Values equal to z share its count; skip to the last of a tie run.
        if k + 1 < sorted.len() && sorted[k + 1] == *z {
            continue;
        }
        let exceed = (sorted.len() - k - 1) as f64;
        if exceed / b <= level {
            return Ok(*z);
        }
    }
    Ok(sorted[sorted.len() - 1])
}

/// `n` row indices drawn uniformly with replacement.
pub fn draw_indices(rng: &mut StreamRng, n: usize) -> Vec<usize> {
    (0..n).map(|_| rng.random_range(0..n)).collect()
}

/// Redraw until both arms appear in the resample.
fn draw_two_armed(rng: &mut StreamRng, arms: &[Arm]) -> Result<Vec<usize>> {
    for _ in 0..MAX_REDRAWS {
        let idx = draw_indices(rng, arms.len());
        let treated = idx.iter().filter(|&&i| arms[i] == Arm::Treated).count();
        if treated > 0 && treated < idx.len() {
            return Ok(idx);
        }
    }
    Err(Error::DegenerateResample {
        attempts: MAX_REDRAWS,
    })
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ReportDiagnostics {
    pub mc_stderr: f64,
    pub n_treated: usize,
    pub n_control: usize,
    pub n_sites: Option<usize>,
    pub bootstrap_replicates: usize,
    /// `z_hat` per arm (single-source and observational).
    pub quantile_treated: Option<f64>,
    pub quantile_control: Option<f64>,
    /// Site-level `z_hat` and mean per-site resampling distances (multi-source).
    pub quantile_sites: Option<f64>,
    pub mean_resample_treated: Option<f64>,
    pub mean_resample_control: Option<f64>,
    pub effective_site_size: Option<f64>,
    /// Outcome-regression predictions clamped to the kernel bound.
    pub clamped: Option<usize>,
    /// Training rows whose propensity sat at a clip boundary.
    pub clipped: Option<usize>,
    pub min_pseudo_density: Option<f64>,
    pub refit_nuisances: Option<bool>,
}

/// Point estimate, centered interval and diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceReport {
    pub method: String,
    pub estimate: f64,
    pub ci_lower: f64,
    pub ci_upper: f64,
    pub alpha: f64,
    pub diagnostics: ReportDiagnostics,
}

impl DistanceReport {
    fn centered(
        method: &str,
        estimate: f64,
        half_width: f64,
        alpha: f64,
        diagnostics: ReportDiagnostics,
    ) -> Self {
        Self {
            method: method.to_string(),
            estimate,
            ci_lower: estimate - half_width,
            ci_upper: estimate + half_width,
            alpha,
            diagnostics,
        }
    }

    pub fn contains(&self, value: f64) -> bool {
        self.ci_lower <= value && value <= self.ci_upper
    }
}

/// Integrator over one density's region with its values cached, so each
/// replicate only evaluates the resampled density.
struct Anchor {
    integrator: McIntegrator,
    values: Vec<f64>,
}

impl Anchor {
    fn new(original: &SmoothedDensity, mc: McConfig) -> Result<Self> {
        let integrator = McIntegrator::new(original.region().clone(), mc)?;
        let values = integrator.evaluate(original)?;
        Ok(Self { integrator, values })
    }

    fn distance(&self, resampled: &SmoothedDensity) -> Result<f64> {
        let v = self.integrator.evaluate(resampled)?;
        Ok(self
            .integrator
            .distance_from_values(&v, &self.values)
            .estimate)
    }
}

/// Single-source randomized interval.
pub fn ci_single(
    data: &RandomizedSample,
    h: Bandwidths,
    kernel: &KernelSpec,
    mc: McConfig,
    cfg: BootstrapConfig,
) -> Result<DistanceReport> {
    let est = estimate_single(data, h, kernel, mc)?;
    let n = data.len();
    let sqrt_n = (n as f64).sqrt();
    let anchors = [
        Anchor::new(est.density(Arm::Control), mc)?,
        Anchor::new(est.density(Arm::Treated), mc)?,
    ];
    let regions = [
        pooled_region(data.outcomes(), h.control, kernel)?,
        pooled_region(data.outcomes(), h.treated, kernel)?,
    ];
    let stats = (0..cfg.replicates)
        .into_par_iter()
        .map(|b| -> Result<[f64; 2]> {
            let mut r = rng::stream(cfg.seed, b as u64);
            let idx = draw_two_armed(&mut r, data.arms())?;
            let resample = data.select(&idx);
            let mut t = [0.0; 2];
            for arm in Arm::BOTH {
                let q = kde_in_region(
                    &resample,
                    arm,
                    h.get(arm),
                    kernel,
                    regions[arm.index()].clone(),
                )?;
                t[arm.index()] = sqrt_n * anchors[arm.index()].distance(&q)?;
            }
            Ok(t)
        })
        .collect::<Result<Vec<_>>>()?;
    let z = per_arm_quantiles(&stats, cfg.alpha / 2.0)?;
    let diagnostics = ReportDiagnostics {
        mc_stderr: est.distance.mc_stderr,
        n_treated: data.arm_count(Arm::Treated),
        n_control: data.arm_count(Arm::Control),
        bootstrap_replicates: cfg.replicates,
        quantile_treated: Some(z[1]),
        quantile_control: Some(z[0]),
        ..Default::default()
    };
    Ok(DistanceReport::centered(
        "single-source",
        est.distance.estimate,
        (z[0] + z[1]) / sqrt_n,
        cfg.alpha,
        diagnostics,
    ))
}

fn per_arm_quantiles(stats: &[[f64; 2]], level: f64) -> Result<[f64; 2]> {
    let control: Vec<f64> = stats.iter().map(|t| t[0]).collect();
    let treated: Vec<f64> = stats.iter().map(|t| t[1]).collect();
    Ok([
        quantile_hat(&control, level)?,
        quantile_hat(&treated, level)?,
    ])
}

/// Multi-source randomized interval.
pub fn ci_multi(
    data: &MultiSourceSample,
    h: Bandwidths,
    kernel: &KernelSpec,
    mc: McConfig,
    cfg: BootstrapConfig,
) -> Result<DistanceReport> {
    let est = estimate_multi(data, h, kernel, mc)?;
    let n_sites = data.n_sites();
    let site_seed = derive_seed(cfg.seed, 1);
    let site_level_seed = derive_seed(cfg.seed, 2);

    // One within-site resample per site: sqrt(n_i) D(resampled KDE, KDE).
    let within = data
        .sites()
        .par_iter()
        .enumerate()
        .map(|(i, site)| -> Result<[f64; 2]> {
            within_site(site, i, h, kernel, site_mc(mc, i), site_seed).map_err(tag_site(i))
        })
        .collect::<Result<Vec<_>>>()?;
    let d_bar = [0, 1].map(|a| within.iter().map(|d| d[a]).sum::<f64>() / n_sites as f64);

    // Site-level bootstrap of the per-site estimates.
    let values: Vec<f64> = est.per_site.iter().map(|e| e.estimate).collect();
    let sqrt_sites = (n_sites as f64).sqrt();
    let centre = values.iter().sum::<f64>() / sqrt_sites;
    let t: Vec<f64> = (0..cfg.replicates)
        .into_par_iter()
        .map(|j| {
            let mut r = rng::stream(site_level_seed, j as u64);
            let resampled: f64 = draw_indices(&mut r, n_sites)
                .iter()
                .map(|&i| values[i])
                .sum();
            (resampled / sqrt_sites - centre).abs()
        })
        .collect();
    let z = quantile_hat(&t, cfg.alpha)?;

    let harmonic_n = n_sites as f64
        / data
            .sites()
            .iter()
            .map(|s| 1.0 / s.len() as f64)
            .sum::<f64>();
    let sqrt_n = harmonic_n.sqrt();
    let half = d_bar[1] / sqrt_n + d_bar[0] / sqrt_n + z / sqrt_sites;
    let pooled = data.pooled();
    let diagnostics = ReportDiagnostics {
        mc_stderr: est.mc_stderr,
        n_treated: pooled.arm_count(Arm::Treated),
        n_control: pooled.arm_count(Arm::Control),
        n_sites: Some(n_sites),
        bootstrap_replicates: cfg.replicates,
        quantile_sites: Some(z),
        mean_resample_treated: Some(d_bar[1]),
        mean_resample_control: Some(d_bar[0]),
        effective_site_size: Some(harmonic_n),
        ..Default::default()
    };
    Ok(DistanceReport::centered(
        "multi-source",
        est.estimate,
        half,
        cfg.alpha,
        diagnostics,
    ))
}

fn within_site(
    site: &RandomizedSample,
    i: usize,
    h: Bandwidths,
    kernel: &KernelSpec,
    smc: McConfig,
    site_seed: u64,
) -> Result<[f64; 2]> {
    let mut r = rng::stream(site_seed, i as u64);
    let idx = draw_two_armed(&mut r, site.arms())?;
    let resample = site.select(&idx);
    let sqrt_n = (site.len() as f64).sqrt();
    let mut d = [0.0; 2];
    for arm in Arm::BOTH {
        let ha = h.get(arm);
        let region = pooled_region(site.outcomes(), ha, kernel)?;
        let original = kde_in_region(site, arm, ha, kernel, region.clone())?;
        let q = kde_in_region(&resample, arm, ha, kernel, region)?;
        d[arm.index()] = sqrt_n * Anchor::new(&original, smc)?.distance(&q)?;
    }
    Ok(d)
}

/// Observational interval on the doubly-robust pseudo-densities. With
/// `refit_nuisances` false the fitted nuisances are reused on every replicate.
pub fn ci_observational(
    data: &ObservationalSample,
    est_cfg: &ObservationalConfig,
    cfg: BootstrapConfig,
    refit_nuisances: bool,
) -> Result<DistanceReport> {
    let est = estimate_observational(data, est_cfg)?;
    let n = data.len();
    let sqrt_n = (n as f64).sqrt();
    let anchors = [
        Anchor::new(&est.control, est_cfg.mc)?,
        Anchor::new(&est.treated, est_cfg.mc)?,
    ];
    let arms_by_position: Vec<Arm> = est.row_order.iter().map(|&i| data.arms()[i]).collect();
    let stats = (0..cfg.replicates)
        .into_par_iter()
        .map(|b| -> Result<[f64; 2]> {
            let mut r = rng::stream(cfg.seed, b as u64);
            let positions = draw_two_armed(&mut r, &arms_by_position)?;
            let densities = if refit_nuisances {
                let rows: Vec<usize> = positions.iter().map(|&p| est.row_order[p]).collect();
                let mut refit_cfg = est_cfg.clone();
                refit_cfg.fold_seed = derive_seed(est_cfg.fold_seed, b as u64 + 1);
                let re = estimate_observational_on(&data.select(&rows), &refit_cfg, est.grid())?;
                [re.control, re.treated]
            } else {
                [
                    est.contributions[0].resampled_density(&positions)?,
                    est.contributions[1].resampled_density(&positions)?,
                ]
            };
            Ok([
                sqrt_n * anchors[0].distance(&densities[0])?,
                sqrt_n * anchors[1].distance(&densities[1])?,
            ])
        })
        .collect::<Result<Vec<_>>>()?;
    let z = per_arm_quantiles(&stats, cfg.alpha / 2.0)?;
    let min_value = [&est.control, &est.treated]
        .iter()
        .filter_map(|d| d.min_grid_value())
        .fold(f64::INFINITY, f64::min);
    let diagnostics = ReportDiagnostics {
        mc_stderr: est.distance.mc_stderr,
        n_treated: data.arm_count(Arm::Treated),
        n_control: data.arm_count(Arm::Control),
        bootstrap_replicates: cfg.replicates,
        quantile_treated: Some(z[1]),
        quantile_control: Some(z[0]),
        clamped: Some(est.clamped),
        clipped: Some(est.clipped),
        min_pseudo_density: Some(min_value),
        refit_nuisances: Some(refit_nuisances),
        ..Default::default()
    };
    Ok(DistanceReport::centered(
        "observational",
        est.distance.estimate,
        (z[0] + z[1]) / sqrt_n,
        cfg.alpha,
        diagnostics,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantile_hat_examples() {
        assert_eq!(quantile_hat(&[1.0, 2.0, 3.0, 4.0], 0.25).unwrap(), 3.0);
        assert_eq!(quantile_hat(&[4.0, 1.0, 3.0, 2.0], 0.0).unwrap(), 4.0);
        for q in [0.0, 0.1, 0.5, 0.99] {
            assert_eq!(quantile_hat(&[2.5; 7], q).unwrap(), 2.5);
        }
        assert_eq!(quantile_hat(&[], 0.1), Err(Error::EmptyInput));
    }

    #[test]
    fn quantile_hat_exact_level() {
        let v: Vec<f64> = (1..=100).map(f64::from).collect();
        // Five values exceed 95, and 5/100 <= 0.05.
        assert_eq!(quantile_hat(&v, 0.05).unwrap(), 95.0);
        assert_eq!(quantile_hat(&v, 0.025).unwrap(), 98.0);
    }

    #[test]
    fn config_validation() {
        assert!(BootstrapConfig::new(19, 0.05, 0).is_err());
        assert!(BootstrapConfig::new(20, 0.0, 0).is_err());
        assert!(BootstrapConfig::new(20, 1.0, 0).is_err());
        assert!(BootstrapConfig::new(100, 0.05, 0).is_ok());
    }

    #[test]
    fn one_armed_resamples_fail_loudly() {
        let arms = vec![Arm::Treated; 5];
        let mut r = rng::stream(0, 0);
        assert_eq!(
            draw_two_armed(&mut r, &arms),
            Err(Error::DegenerateResample {
                attempts: MAX_REDRAWS
            })
        );
    }
}
