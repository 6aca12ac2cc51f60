//! Dataset types for the three study designs.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Binary treatment assignment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Arm {
    Control,
    Treated,
}

impl Arm {
    pub const BOTH: [Arm; 2] = [Arm::Control, Arm::Treated];

    pub fn from_indicator(a: u8) -> Option<Arm> {
        match a {
            0 => Some(Arm::Control),
            1 => Some(Arm::Treated),
            _ => None,
        }
    }

    pub fn indicator(self) -> u8 {
        match self {
            Arm::Control => 0,
            Arm::Treated => 1,
        }
    }

    pub fn index(self) -> usize {
        self.indicator() as usize
    }

    pub fn other(self) -> Arm {
        match self {
            Arm::Control => Arm::Treated,
            Arm::Treated => Arm::Control,
        }
    }
}

impl fmt::Display for Arm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.indicator())
    }
}

/// Row-major block of points in a fixed dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Points {
    dim: usize,
    values: Vec<f64>,
}

impl Points {
    pub fn new(dim: usize, values: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidConfig(
                "point dimension must be positive".into(),
            ));
        }
        if values.len() % dim != 0 {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: values.len() % dim,
            });
        }
        Ok(Self { dim, values })
    }

    /// One-dimensional points from scalars.
    pub fn scalars(values: Vec<f64>) -> Self {
        Self { dim: 1, values }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.first().map(Vec::len).ok_or(Error::EmptyInput)?;
        let mut values = Vec::with_capacity(rows.len() * dim);
        for r in rows {
            if r.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: r.len(),
                });
            }
            values.extend_from_slice(r);
        }
        Points::new(dim, values)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.values.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> + '_ {
        self.values.chunks_exact(self.dim)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn select(&self, indices: &[usize]) -> Points {
        let mut values = Vec::with_capacity(indices.len() * self.dim);
        for &i in indices {
            values.extend_from_slice(self.row(i));
        }
        Points {
            dim: self.dim,
            values,
        }
    }

    /// Componentwise (min, max) over all rows, `None` if empty.
    pub fn bounds(&self) -> Option<(Vec<f64>, Vec<f64>)> {
        if self.is_empty() {
            return None;
        }
        let mut lo = self.row(0).to_vec();
        let mut hi = lo.clone();
        for r in self.rows() {
            for k in 0..self.dim {
                lo[k] = lo[k].min(r[k]);
                hi[k] = hi[k].max(r[k]);
            }
        }
        Some((lo, hi))
    }
}

/// Pairs `(A, Y)` from a single randomized experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct RandomizedSample {
    arms: Vec<Arm>,
    outcomes: Points,
    /// Known randomization probability `P(A = 1)`, when the design fixes it.
    pub treat_prob: Option<f64>,
}

impl RandomizedSample {
    pub fn new(arms: Vec<Arm>, outcomes: Points) -> Result<Self> {
        if arms.len() != outcomes.len() {
            return Err(Error::DimensionMismatch {
                expected: arms.len(),
                found: outcomes.len(),
            });
        }
        Ok(Self {
            arms,
            outcomes,
            treat_prob: None,
        })
    }

    pub fn with_treat_prob(mut self, p: f64) -> Result<Self> {
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "treatment probability {p} outside (0, 1)"
            )));
        }
        self.treat_prob = Some(p);
        Ok(self)
    }

    /// Scalar-outcome convenience constructor from 0/1 indicators.
    pub fn from_scalars(indicators: &[u8], y: &[f64]) -> Result<Self> {
        let arms = indicators
            .iter()
            .map(|&a| {
                Arm::from_indicator(a).ok_or_else(|| {
                    Error::InvalidConfig(format!("treatment value {a} not in {{0,1}}"))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(arms, Points::scalars(y.to_vec()))
    }

    pub fn len(&self) -> usize {
        self.arms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.arms.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.outcomes.dim()
    }

    pub fn arms(&self) -> &[Arm] {
        &self.arms
    }

    pub fn outcomes(&self) -> &Points {
        &self.outcomes
    }

    pub fn arm_count(&self, arm: Arm) -> usize {
        self.arms.iter().filter(|&&a| a == arm).count()
    }

    /// Outcomes of rows assigned to `arm`, in row order.
    pub fn arm_outcomes(&self, arm: Arm) -> Points {
        let idx: Vec<usize> = (0..self.len()).filter(|&i| self.arms[i] == arm).collect();
        self.outcomes.select(&idx)
    }

    /// Rows drawn by index (with repetition allowed).
    pub fn select(&self, indices: &[usize]) -> RandomizedSample {
        RandomizedSample {
            arms: indices.iter().map(|&i| self.arms[i]).collect(),
            outcomes: self.outcomes.select(indices),
            treat_prob: self.treat_prob,
        }
    }

    /// Relabel A to 1 - A; a known treatment probability becomes 1 - p.
    pub fn swap_arms(&self) -> RandomizedSample {
        RandomizedSample {
            arms: self.arms.iter().map(|a| a.other()).collect(),
            outcomes: self.outcomes.clone(),
            treat_prob: self.treat_prob.map(|p| 1.0 - p),
        }
    }
}

/// Several randomized experiments, one per site.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiSourceSample {
    sites: Vec<RandomizedSample>,
    labels: Vec<String>,
}

impl MultiSourceSample {
    pub fn new(sites: Vec<RandomizedSample>) -> Result<Self> {
        let labels = (0..sites.len()).map(|i| format!("site{i}")).collect();
        Self::with_labels(sites, labels)
    }

    pub fn with_labels(sites: Vec<RandomizedSample>, labels: Vec<String>) -> Result<Self> {
        let first = sites.first().ok_or(Error::EmptyInput)?;
        let dim = first.dim();
        if let Some(bad) = sites.iter().find(|s| s.dim() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: bad.dim(),
            });
        }
        if labels.len() != sites.len() {
            return Err(Error::InvalidConfig("one label per site required".into()));
        }
        Ok(Self { sites, labels })
    }

    pub fn sites(&self) -> &[RandomizedSample] {
        &self.sites
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn n_sites(&self) -> usize {
        self.sites.len()
    }

    pub fn dim(&self) -> usize {
        self.sites[0].dim()
    }

    /// All rows of all sites concatenated in site order.
    pub fn pooled(&self) -> RandomizedSample {
        let mut arms = Vec::new();
        let mut values = Vec::new();
        for s in &self.sites {
            arms.extend_from_slice(s.arms());
            values.extend_from_slice(s.outcomes().as_slice());
        }
        let treat_prob = self.sites[0].treat_prob;
        let same_prob = self.sites.iter().all(|s| s.treat_prob == treat_prob);
        RandomizedSample {
            arms,
            outcomes: Points {
                dim: self.dim(),
                values,
            },
            treat_prob: if same_prob { treat_prob } else { None },
        }
    }
}

/// Triples `(X, A, Y)` from an observational study.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationalSample {
    covariates: Points,
    arms: Vec<Arm>,
    outcomes: Points,
}

impl ObservationalSample {
    pub fn new(covariates: Points, arms: Vec<Arm>, outcomes: Points) -> Result<Self> {
        for found in [covariates.len(), outcomes.len()] {
            if found != arms.len() {
                return Err(Error::DimensionMismatch {
                    expected: arms.len(),
                    found,
                });
            }
        }
        Ok(Self {
            covariates,
            arms,
            outcomes,
        })
    }

    pub fn len(&self) -> usize {
        self.arms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.arms.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.outcomes.dim()
    }

    pub fn covariate_dim(&self) -> usize {
        self.covariates.dim()
    }

    pub fn covariates(&self) -> &Points {
        &self.covariates
    }

    pub fn arms(&self) -> &[Arm] {
        &self.arms
    }

    pub fn outcomes(&self) -> &Points {
        &self.outcomes
    }

    pub fn arm_count(&self, arm: Arm) -> usize {
        self.arms.iter().filter(|&&a| a == arm).count()
    }

    pub fn select(&self, indices: &[usize]) -> ObservationalSample {
        ObservationalSample {
            covariates: self.covariates.select(indices),
            arms: indices.iter().map(|&i| self.arms[i]).collect(),
            outcomes: self.outcomes.select(indices),
        }
    }

    pub fn swap_arms(&self) -> ObservationalSample {
        ObservationalSample {
            covariates: self.covariates.clone(),
            arms: self.arms.iter().map(|a| a.other()).collect(),
            outcomes: self.outcomes.clone(),
        }
    }

    /// Drop covariates, keeping `(A, Y)`.
    pub fn to_randomized(&self) -> RandomizedSample {
        RandomizedSample {
            arms: self.arms.clone(),
            outcomes: self.outcomes.clone(),
            treat_prob: None,
        }
    }
}
