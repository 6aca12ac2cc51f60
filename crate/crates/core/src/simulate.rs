//! Seeded synthetic data with known generating laws.

use rand::Rng;
use rand_distr::{Beta, Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;
use crate::sample::{Arm, MultiSourceSample, ObservationalSample, Points, RandomizedSample};

fn normal(mean: f64, sd: f64) -> Normal<f64> {
    Normal::new(mean, sd).expect("finite mean and positive sd")
}

fn bernoulli_arm(rng: &mut impl Rng, p: f64) -> Arm {
    if rng.random::<f64>() < p {
        Arm::Treated
    } else {
        Arm::Control
    }
}

/// Equal-mean pairs of outcome laws for a single randomized experiment.
/// Parameters are read off plotted shapes, not published values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum SameMeanScenario {
    /// Control `Beta(a0, a0)`, treated `Beta(a1, a1)`; both have mean 1/2.
    TwoBeta {
        control_shape: f64,
        treated_shape: f64,
    },
    /// Control `N(0, 1)`, treated `0.5 N(-mu, sigma^2) + 0.5 N(mu, sigma^2)`.
    UniVsBimodal { mu: f64, sigma: f64 },
}

impl SameMeanScenario {
    pub fn two_beta() -> Self {
        SameMeanScenario::TwoBeta {
            control_shape: 2.0,
            treated_shape: 0.5,
        }
    }

    pub fn uni_vs_bimodal() -> Self {
        SameMeanScenario::UniVsBimodal {
            mu: 2.0,
            sigma: 0.75,
        }
    }

    /// Outcome density of `arm` at `y`.
    pub fn density(&self, arm: Arm, y: f64) -> f64 {
        use statrs::distribution::{Continuous, Normal as SNormal};
        match (*self, arm) {
            (
                SameMeanScenario::TwoBeta {
                    control_shape,
                    treated_shape,
                },
                _,
            ) => {
                let s = if arm == Arm::Treated {
                    treated_shape
                } else {
                    control_shape
                };
                statrs::distribution::Beta::new(s, s)
                    .map(|b| if y > 0.0 && y < 1.0 { b.pdf(y) } else { 0.0 })
                    .unwrap_or(0.0)
            }
            (SameMeanScenario::UniVsBimodal { .. }, Arm::Control) => SNormal::standard().pdf(y),
            (SameMeanScenario::UniVsBimodal { mu, sigma }, Arm::Treated) => {
                let n = SNormal::new(0.0, sigma).expect("positive sigma");
                0.5 * n.pdf(y + mu) + 0.5 * n.pdf(y - mu)
            }
        }
    }

    fn draw(&self, arm: Arm, rng: &mut impl Rng) -> f64 {
        match (*self, arm) {
            (
                SameMeanScenario::TwoBeta {
                    control_shape,
                    treated_shape,
                },
                _,
            ) => {
                let s = if arm == Arm::Treated {
                    treated_shape
                } else {
                    control_shape
                };
                Beta::new(s, s).expect("positive shape").sample(rng)
            }
            (SameMeanScenario::UniVsBimodal { .. }, Arm::Control) => normal(0.0, 1.0).sample(rng),
            (SameMeanScenario::UniVsBimodal { mu, sigma }, Arm::Treated) => {
                let centre = if rng.random::<bool>() { mu } else { -mu };
                normal(centre, sigma).sample(rng)
            }
        }
    }
}

/// Randomized sample with `P(A = 1) = 1/2` and equal arm means.
pub fn gen_single_samemean(
    kind: SameMeanScenario,
    n: usize,
    seed: u64,
) -> Result<RandomizedSample> {
    if n < 2 {
        return Err(Error::InvalidConfig(format!(
            "need at least 2 rows, got {n}"
        )));
    }
    let mut r = rng::stream(seed, 0);
    let mut arms = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for _ in 0..n {
        let a = bernoulli_arm(&mut r, 0.5);
        y.push(kind.draw(a, &mut r));
        arms.push(a);
    }
    RandomizedSample::new(arms, Points::scalars(y))?.with_treat_prob(0.5)
}

/// Law over per-site outcome distributions: control `N(0, u1^2)`, treated
/// `w N((1-w) u2, u3^2) + (1-w) N(-w u2, u4^2)`, both zero-mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuperDistributionSpec {
    pub u1: (f64, f64),
    pub u2: (f64, f64),
    pub u3: (f64, f64),
    pub u4: (f64, f64),
    pub w: (f64, f64),
    pub treat_prob: f64,
    pub n_sites: usize,
    pub n_per_site: usize,
}

impl Default for SuperDistributionSpec {
    fn default() -> Self {
        Self {
            u1: (0.5, 1.5),
            u2: (1.0, 5.0),
            u3: (0.5, 1.5),
            u4: (0.5, 1.5),
            w: (0.25, 0.75),
            treat_prob: 0.5,
            n_sites: 50,
            n_per_site: 100,
        }
    }
}

impl SuperDistributionSpec {
    pub fn validate(&self) -> Result<()> {
        for (name, (lo, hi)) in [
            ("u1", self.u1),
            ("u2", self.u2),
            ("u3", self.u3),
            ("u4", self.u4),
            ("w", self.w),
        ] {
            if !(lo > 0.0 && lo < hi) {
                return Err(Error::InvalidConfig(format!(
                    "{name} range ({lo}, {hi}) invalid"
                )));
            }
        }
        if self.w.1 >= 1.0 {
            return Err(Error::InvalidConfig("w must stay below 1".into()));
        }
        if !(self.treat_prob > 0.0 && self.treat_prob < 1.0) {
            return Err(Error::InvalidConfig(
                "treatment probability outside (0, 1)".into(),
            ));
        }
        if self.n_sites == 0 || self.n_per_site < 2 {
            return Err(Error::InvalidConfig(
                "need at least one site of two rows".into(),
            ));
        }
        Ok(())
    }
}

/// One site's drawn parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SiteLaw {
    pub u1: f64,
    pub u2: f64,
    pub u3: f64,
    pub u4: f64,
    pub w: f64,
}

impl SiteLaw {
    /// Centers of the two treated mixture components.
    pub fn treated_centers(&self) -> (f64, f64) {
        ((1.0 - self.w) * self.u2, -self.w * self.u2)
    }

    pub fn density(&self, arm: Arm, y: f64) -> f64 {
        use statrs::distribution::{Continuous, Normal as SNormal};
        match arm {
            Arm::Control => SNormal::new(0.0, self.u1).expect("positive").pdf(y),
            Arm::Treated => {
                let (c1, c2) = self.treated_centers();
                self.w * SNormal::new(c1, self.u3).expect("positive").pdf(y)
                    + (1.0 - self.w) * SNormal::new(c2, self.u4).expect("positive").pdf(y)
            }
        }
    }
}

pub fn gen_multi_source(spec: &SuperDistributionSpec, seed: u64) -> Result<MultiSourceSample> {
    gen_multi_source_with_laws(spec, seed).map(|(s, _)| s)
}

/// As [`gen_multi_source`], also returning each site's drawn law.
pub fn gen_multi_source_with_laws(
    spec: &SuperDistributionSpec,
    seed: u64,
) -> Result<(MultiSourceSample, Vec<SiteLaw>)> {
    spec.validate()?;
    let mut sites = Vec::with_capacity(spec.n_sites);
    let mut laws = Vec::with_capacity(spec.n_sites);
    for i in 0..spec.n_sites {
        let mut r = rng::stream(seed, i as u64);
        let law = SiteLaw {
            u1: r.random_range(spec.u1.0..spec.u1.1),
            u2: r.random_range(spec.u2.0..spec.u2.1),
            u3: r.random_range(spec.u3.0..spec.u3.1),
            u4: r.random_range(spec.u4.0..spec.u4.1),
            w: r.random_range(spec.w.0..spec.w.1),
        };
        let (c1, c2) = law.treated_centers();
        let mut arms = Vec::with_capacity(spec.n_per_site);
        let mut y = Vec::with_capacity(spec.n_per_site);
        for _ in 0..spec.n_per_site {
            let a = bernoulli_arm(&mut r, spec.treat_prob);
            let v = match a {
                Arm::Control => normal(0.0, law.u1).sample(&mut r),
                Arm::Treated => {
                    if r.random::<f64>() < law.w {
                        normal(c1, law.u3).sample(&mut r)
                    } else {
                        normal(c2, law.u4).sample(&mut r)
                    }
                }
            };
            arms.push(a);
            y.push(v);
        }
        sites.push(
            RandomizedSample::new(arms, Points::scalars(y))?.with_treat_prob(spec.treat_prob)?,
        );
        laws.push(law);
    }
    Ok((MultiSourceSample::new(sites)?, laws))
}

/// Outcome model for the confounded generator: `Y | A = a, X = x` is
/// `N(effect * a + slope * x1, noise^2)`; the null scenario drops the effect.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ConfoundedScenario {
    Null { slope: f64, noise: f64 },
    Linear { effect: f64, slope: f64, noise: f64 },
}

impl ConfoundedScenario {
    pub fn null() -> Self {
        ConfoundedScenario::Null {
            slope: 3.0,
            noise: 1.0,
        }
    }

    pub fn linear() -> Self {
        ConfoundedScenario::Linear {
            effect: 2.0,
            slope: 3.0,
            noise: 1.0,
        }
    }
}

/// Generating law of a confounded sample: `X ~ U(0,1)^k`,
/// `P(A = 1 | X) = expit(2 x1 - 1)`, outcome per scenario.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfoundedLaw {
    pub covariate_dim: usize,
    pub scenario: ConfoundedScenario,
}

impl ConfoundedLaw {
    pub fn propensity(&self, x: &[f64]) -> f64 {
        1.0 / (1.0 + (-(2.0 * x[0] - 1.0)).exp())
    }

    pub fn outcome_mean(&self, arm: Arm, x: &[f64]) -> f64 {
        match self.scenario {
            ConfoundedScenario::Null { slope, .. } => slope * x[0],
            ConfoundedScenario::Linear { effect, slope, .. } => {
                effect * arm.indicator() as f64 + slope * x[0]
            }
        }
    }

    pub fn noise_sd(&self) -> f64 {
        match self.scenario {
            ConfoundedScenario::Null { noise, .. } | ConfoundedScenario::Linear { noise, .. } => {
                noise
            }
        }
    }

    /// Conditional outcome density `p(y | a, x)`.
    pub fn outcome_density(&self, y: f64, arm: Arm, x: &[f64]) -> f64 {
        let s = self.noise_sd();
        let z = (y - self.outcome_mean(arm, x)) / s;
        (-0.5 * z * z).exp() / (s * (2.0 * std::f64::consts::PI).sqrt())
    }
}

pub fn gen_confounded(
    n: usize,
    covariate_dim: usize,
    scenario: ConfoundedScenario,
    seed: u64,
) -> Result<(ObservationalSample, ConfoundedLaw)> {
    if n < 2 || covariate_dim == 0 {
        return Err(Error::InvalidConfig(
            "need n >= 2 and at least one covariate".into(),
        ));
    }
    let law = ConfoundedLaw {
        covariate_dim,
        scenario,
    };
    let mut r = rng::stream(seed, 0);
    let noise = normal(0.0, law.noise_sd());
    let mut x = Vec::with_capacity(n * covariate_dim);
    let mut arms = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for _ in 0..n {
        let row: Vec<f64> = (0..covariate_dim).map(|_| r.random::<f64>()).collect();
        let a = bernoulli_arm(&mut r, law.propensity(&row));
        y.push(law.outcome_mean(a, &row) + noise.sample(&mut r));
        arms.push(a);
        x.extend_from_slice(&row);
    }
    let sample =
        ObservationalSample::new(Points::new(covariate_dim, x)?, arms, Points::scalars(y))?;
    Ok((sample, law))
}
