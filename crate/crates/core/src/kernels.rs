//! Radial kernels with bounded support.
//!
//! A kernel is `K(u) = c_d * profile(|u|)` on the ball of radius `R_K` and zero
//! outside. Both families are continuous and Lipschitz, so the smoothed
//! densities built from them are too.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use statrs::function::erf::erf;

use crate::error::{Error, Result};

pub const MAX_DIM: usize = 3;
pub const DEFAULT_TRUNCATION: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum KernelFamily {
    /// `1 - r^2` on the unit ball.
    Epanechnikov,
    /// `exp(-r^2/2) - exp(-R^2/2)` on the ball of radius `R`.
    TruncatedGaussian { radius: f64 },
}

impl KernelFamily {
    pub fn name(&self) -> &'static str {
        match self {
            KernelFamily::Epanechnikov => "epanechnikov",
            KernelFamily::TruncatedGaussian { .. } => "tgauss",
        }
    }

    fn support_radius(&self) -> f64 {
        match *self {
            KernelFamily::Epanechnikov => 1.0,
            KernelFamily::TruncatedGaussian { radius } => radius,
        }
    }

    #[inline]
    fn profile(&self, r: f64) -> f64 {
        match *self {
            KernelFamily::Epanechnikov => {
                if r >= 1.0 {
                    0.0
                } else {
                    1.0 - r * r
                }
            }
            KernelFamily::TruncatedGaussian { radius } => {
                if r >= radius {
                    0.0
                } else {
                    (-0.5 * r * r).exp() - (-0.5 * radius * radius).exp()
                }
            }
        }
    }
}

impl fmt::Display for KernelFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for KernelFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "epanechnikov" => Ok(KernelFamily::Epanechnikov),
            "tgauss" => Ok(KernelFamily::TruncatedGaussian {
                radius: DEFAULT_TRUNCATION,
            }),
            other => Err(Error::InvalidConfig(format!(
                "unknown kernel '{other}' (expected epanechnikov or tgauss)"
            ))),
        }
    }
}

/// A normalized radial kernel in a fixed dimension.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub family: KernelFamily,
    pub dim: usize,
    pub support_radius: f64,
    pub normalizing_constant: f64,
    pub lipschitz_constant: f64,
    pub l2_norm: f64,
}

impl KernelSpec {
    pub fn new(family: KernelFamily, dim: usize) -> Result<Self> {
        if dim == 0 || dim > MAX_DIM {
            return Err(Error::UnsupportedDimension(dim));
        }
        if let KernelFamily::TruncatedGaussian { radius } = family {
            if !(radius.is_finite() && radius > 0.0) {
                return Err(Error::InvalidConfig(format!(
                    "truncation radius must be positive, got {radius}"
                )));
            }
        }
        let support_radius = family.support_radius();
        let normalizing_constant = match family {
            KernelFamily::Epanechnikov => match dim {
                1 => 0.75,
                2 => 2.0 / PI,
                _ => 15.0 / (8.0 * PI),
            },
            KernelFamily::TruncatedGaussian { radius } => {
                1.0 / truncated_gaussian_mass(radius, dim)
            }
        };
        let lipschitz_constant = normalizing_constant
            * match family {
                KernelFamily::Epanechnikov => 2.0,
                KernelFamily::TruncatedGaussian { radius } => {
                    let r = radius.min(1.0);
                    r * (-0.5 * r * r).exp()
                }
            };
        let l2_sq = match (family, dim) {
            (KernelFamily::Epanechnikov, 1) => 0.6,
            (KernelFamily::Epanechnikov, 2) => 4.0 / (3.0 * PI),
            (KernelFamily::Epanechnikov, _) => 15.0 / (14.0 * PI),
            _ => {
                let c = normalizing_constant;
                radial_integral(dim, support_radius, |r| {
                    let k = c * family.profile(r);
                    k * k
                })
            }
        };
        Ok(Self {
            family,
            dim,
            support_radius,
            normalizing_constant,
            lipschitz_constant,
            l2_norm: l2_sq.sqrt(),
        })
    }

    pub fn epanechnikov(dim: usize) -> Result<Self> {
        Self::new(KernelFamily::Epanechnikov, dim)
    }

    pub fn truncated_gaussian(dim: usize) -> Result<Self> {
        Self::new(
            KernelFamily::TruncatedGaussian {
                radius: DEFAULT_TRUNCATION,
            },
            dim,
        )
    }

    /// `K` at radius `r >= 0`.
    #[inline]
    pub fn evaluate(&self, r: f64) -> f64 {
        self.normalizing_constant * self.family.profile(r)
    }

    /// Supremum of `K`, attained at the origin.
    pub fn peak(&self) -> f64 {
        self.evaluate(0.0)
    }

    /// `h^-d K(|y - y0| / h)`.
    pub fn scaled_evaluate(&self, y: &[f64], y0: &[f64], h: f64) -> Result<f64> {
        if y.len() != self.dim || y0.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: if y.len() != self.dim {
                    y.len()
                } else {
                    y0.len()
                },
            });
        }
        Ok(self.scaled_unchecked(y, y0, h))
    }

    #[inline]
    pub(crate) fn scaled_unchecked(&self, y: &[f64], y0: &[f64], h: f64) -> f64 {
        let sq: f64 = y.iter().zip(y0).map(|(a, b)| (a - b) * (a - b)).sum();
        self.evaluate(sq.sqrt() / h) / h.powi(self.dim as i32)
    }

    /// Upper bound on `|h^-d K|`, used to clamp regression predictions.
    pub fn scaled_bound(&self, h: f64) -> f64 {
        self.peak() / h.powi(self.dim as i32)
    }

    /// Ratio of this family's canonical bandwidth to the Gaussian one, from the
    /// one-dimensional kernel constants. Rule-of-thumb bandwidths tuned for a
    /// Gaussian kernel are multiplied by this.
    pub fn gaussian_equivalent_scale(&self) -> f64 {
        let one_d = match self.dim {
            1 => *self,
            _ => KernelSpec::new(self.family, 1).expect("dimension 1 is always valid"),
        };
        let c = one_d.normalizing_constant;
        let family = one_d.family;
        let roughness = one_d.l2_norm * one_d.l2_norm;
        let mu2 = radial_integral(1, one_d.support_radius, |r| r * r * c * family.profile(r));
        let delta = (roughness / (mu2 * mu2)).powf(0.2);
        let delta_gauss = (1.0 / (2.0 * PI.sqrt())).powf(0.2);
        delta / delta_gauss
    }
}

fn std_normal_cdf(x: f64) -> f64 {
    0.5 * (1.0 + erf(x / std::f64::consts::SQRT_2))
}

fn ball_volume(dim: usize, r: f64) -> f64 {
    match dim {
        1 => 2.0 * r,
        2 => PI * r * r,
        _ => 4.0 / 3.0 * PI * r * r * r,
    }
}

/// Integral over the radius-`R` ball of `exp(-r^2/2) - exp(-R^2/2)`.
fn truncated_gaussian_mass(radius: f64, dim: usize) -> f64 {
    let central = 2.0 * std_normal_cdf(radius) - 1.0;
    let tail = (-0.5 * radius * radius).exp();
    let gauss = match dim {
        1 => (2.0 * PI).sqrt() * central,
        2 => 2.0 * PI * (1.0 - tail),
        _ => 4.0 * PI * ((PI / 2.0).sqrt() * central - radius * tail),
    };
    gauss - tail * ball_volume(dim, radius)
}

/// Integral of a radial function over the ball of radius `radius` in `dim`
/// dimensions, by composite Simpson on the radial coordinate.
fn radial_integral(dim: usize, radius: f64, f: impl Fn(f64) -> f64) -> f64 {
    let shell = |r: f64| match dim {
        1 => 2.0,
        2 => 2.0 * PI * r,
        _ => 4.0 * PI * r * r,
    };
    let n = 4000;
    let step = radius / n as f64;
    let mut acc = 0.0;
    for i in 0..=n {
        let r = i as f64 * step;
        let w = if i == 0 || i == n {
            1.0
        } else if i % 2 == 1 {
            4.0
        } else {
            2.0
        };
        acc += w * f(r) * shell(r);
    }
    acc * step / 3.0
}
