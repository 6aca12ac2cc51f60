//! L1 distance between densities by uniform Monte-Carlo integration.
//!
//! Both densities are evaluated on one shared point set drawn uniformly from
//! the bounding box of their regions, so `D(p, p) = 0` and `D(p, q) = D(q, p)`
//! hold exactly.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::density::{IntegrationRegion, SmoothedDensity};
use crate::error::{Error, Result};
use crate::rng;
use crate::sample::Points;

pub const MIN_MC_POINTS: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct McConfig {
    pub n_points: usize,
    pub seed: u64,
}

impl McConfig {
    pub fn new(n_points: usize, seed: u64) -> Result<Self> {
        if n_points < MIN_MC_POINTS {
            return Err(Error::InvalidConfig(format!(
                "mc points must be at least {MIN_MC_POINTS}, got {n_points}"
            )));
        }
        Ok(Self { n_points, seed })
    }

    /// 100 000 points in one dimension, ten times more per extra dimension.
    pub fn default_for_dim(dim: usize, seed: u64) -> Self {
        Self {
            n_points: 100_000 * 10usize.pow(dim.saturating_sub(1) as u32),
            seed,
        }
    }
}

/// MC estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct L1Estimate {
    pub estimate: f64,
    pub mc_stderr: f64,
}

/// Uniform draws over a fixed box, sorted by leading coordinate.
#[derive(Debug, Clone)]
pub struct McIntegrator {
    domain: IntegrationRegion,
    points: Points,
}

impl McIntegrator {
    pub fn new(domain: IntegrationRegion, cfg: McConfig) -> Result<Self> {
        McConfig::new(cfg.n_points, cfg.seed)?;
        let d = domain.dim();
        let mut rng = rng::stream(cfg.seed, 0);
        let mut rows: Vec<Vec<f64>> = (0..cfg.n_points)
            .map(|_| {
                (0..d)
                    .map(|k| rng.random_range(domain.lower[k]..domain.upper[k]))
                    .collect()
            })
            .collect();
        rows.sort_by(|a, b| a[0].total_cmp(&b[0]));
        let points = Points::from_rows(&rows)?;
        Ok(Self { domain, points })
    }

    /// Integrator over the bounding box of both densities' regions.
    pub fn covering(p: &SmoothedDensity, q: &SmoothedDensity, cfg: McConfig) -> Result<Self> {
        Self::new(p.region().union(q.region())?, cfg)
    }

    pub fn domain(&self) -> &IntegrationRegion {
        &self.domain
    }

    pub fn points(&self) -> &Points {
        &self.points
    }

    pub fn evaluate(&self, p: &SmoothedDensity) -> Result<Vec<f64>> {
        if p.dim() != self.domain.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.domain.dim(),
                found: p.dim(),
            });
        }
        Ok(p.evaluate_many(&self.points))
    }

    /// `vol * mean |a - b|` over precomputed values on this point set.
    pub fn distance_from_values(&self, a: &[f64], b: &[f64]) -> L1Estimate {
        debug_assert_eq!(a.len(), b.len());
        let n = a.len() as f64;
        let vol = self.domain.volume();
        let mut sum = 0.0;
        for (x, y) in a.iter().zip(b) {
            sum += (x - y).abs();
        }
        let mean = sum / n;
        let mut ss = 0.0;
        for (x, y) in a.iter().zip(b) {
            let dev = (x - y).abs() - mean;
            ss += dev * dev;
        }
        let sd = if a.len() > 1 {
            (ss / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        L1Estimate {
            estimate: vol * mean,
            mc_stderr: vol * sd / n.sqrt(),
        }
    }

    pub fn distance(&self, p: &SmoothedDensity, q: &SmoothedDensity) -> Result<L1Estimate> {
        let a = self.evaluate(p)?;
        let b = self.evaluate(q)?;
        Ok(self.distance_from_values(&a, &b))
    }

    /// Integral of a single density over the domain, with standard error.
    pub fn integral(&self, p: &SmoothedDensity) -> Result<L1Estimate> {
        let a = self.evaluate(p)?;
        let n = a.len() as f64;
        let vol = self.domain.volume();
        let mean = a.iter().sum::<f64>() / n;
        let ss: f64 = a.iter().map(|v| (v - mean) * (v - mean)).sum();
        Ok(L1Estimate {
            estimate: vol * mean,
            mc_stderr: vol * (ss / (n - 1.0)).sqrt() / n.sqrt(),
        })
    }
}

/// `∫ |p - q|` over the bounding box of both regions.
pub fn l1_distance(p: &SmoothedDensity, q: &SmoothedDensity, cfg: McConfig) -> Result<L1Estimate> {
    if p.dim() != q.dim() {
        return Err(Error::DimensionMismatch {
            expected: p.dim(),
            found: q.dim(),
        });
    }
    McIntegrator::covering(p, q, cfg)?.distance(p, q)
}
