//! Smoothed counterfactual densities.
//!
//! Two constructions share one evaluable type: the arm-conditional kernel
//! density estimate for randomized data, and the doubly-robust pseudo-density
//! for observational data, stored on a fixed evaluation grid.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{KernelFamily, KernelSpec};
use crate::nuisance::NuisanceFit;
use crate::sample::{Arm, ObservationalSample, Points, RandomizedSample};

/// Propensities below this (for the arm being estimated) are rejected.
pub const PROPENSITY_CLIP: f64 = 1e-3;

/// Axis-aligned box `[lower, upper]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntegrationRegion {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl IntegrationRegion {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::DimensionMismatch {
                expected: lower.len(),
                found: upper.len(),
            });
        }
        if lower.is_empty() || lower.iter().zip(&upper).any(|(l, u)| !(l < u)) {
            return Err(Error::InvalidConfig(
                "integration region needs lower < upper in every coordinate".into(),
            ));
        }
        Ok(Self { lower, upper })
    }

    /// Data bounding box widened by `margin` on every side.
    pub fn around(points: &Points, margin: f64) -> Result<Self> {
        let (lo, hi) = points.bounds().ok_or(Error::EmptyInput)?;
        Self::new(
            lo.iter().map(|v| v - margin).collect(),
            hi.iter().map(|v| v + margin).collect(),
        )
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn volume(&self) -> f64 {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(l, u)| u - l)
            .product()
    }

    pub fn contains(&self, y: &[f64]) -> bool {
        y.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .all(|(v, (l, u))| *v >= *l && *v <= *u)
    }

    /// Smallest box covering both.
    pub fn union(&self, other: &IntegrationRegion) -> Result<Self> {
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: other.dim(),
            });
        }
        Ok(Self {
            lower: self
                .lower
                .iter()
                .zip(&other.lower)
                .map(|(a, b)| a.min(*b))
                .collect(),
            upper: self
                .upper
                .iter()
                .zip(&other.upper)
                .map(|(a, b)| a.max(*b))
                .collect(),
        })
    }
}

/// Regular grid of nodes spanning a region, endpoints included.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationGrid {
    region: IntegrationRegion,
    nodes_per_dim: usize,
}

impl EvaluationGrid {
    /// Default node count per axis for a given outcome dimension.
    pub fn default_nodes(dim: usize) -> usize {
        match dim {
            1 => 256,
            2 => 32,
            _ => 12,
        }
    }

    pub fn new(region: IntegrationRegion, nodes_per_dim: usize) -> Result<Self> {
        if nodes_per_dim < 2 {
            return Err(Error::EmptyGrid);
        }
        Ok(Self {
            region,
            nodes_per_dim,
        })
    }

    pub fn region(&self) -> &IntegrationRegion {
        &self.region
    }

    pub fn dim(&self) -> usize {
        self.region.dim()
    }

    pub fn nodes_per_dim(&self) -> usize {
        self.nodes_per_dim
    }

    pub fn len(&self) -> usize {
        self.nodes_per_dim.pow(self.dim() as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    fn step(&self, k: usize) -> f64 {
        (self.region.upper[k] - self.region.lower[k]) / (self.nodes_per_dim - 1) as f64
    }

    /// Node coordinates, first axis slowest.
    pub fn points(&self) -> Points {
        let d = self.dim();
        let m = self.nodes_per_dim;
        let mut values = Vec::with_capacity(self.len() * d);
        for flat in 0..self.len() {
            let mut rem = flat;
            let mut node = vec![0.0; d];
            for k in (0..d).rev() {
                let i = rem % m;
                rem /= m;
                node[k] = self.region.lower[k] + i as f64 * self.step(k);
            }
            values.extend_from_slice(&node);
        }
        Points::new(d, values).expect("grid coordinates are well formed")
    }

    fn interpolate(&self, values: &[f64], y: &[f64]) -> f64 {
        if !self.region.contains(y) {
            return 0.0;
        }
        let m = self.nodes_per_dim;
        if self.dim() == 1 {
            let t = (y[0] - self.region.lower[0]) / self.step(0);
            let i = (t.floor() as usize).min(m - 2);
            let frac = t - i as f64;
            return values[i] * (1.0 - frac) + values[i + 1] * frac;
        }
        let mut flat = 0;
        for (k, v) in y.iter().enumerate() {
            let t = ((v - self.region.lower[k]) / self.step(k)).round() as usize;
            flat = flat * m + t.min(m - 1);
        }
        values[flat]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DensityKind {
    Kde,
    DrPseudo,
}

/// Arm-conditional kernel density estimate.
#[derive(Debug, Clone)]
struct Kde {
    kernel: KernelSpec,
    h: f64,
    /// Observations sorted lexicographically, row-major.
    data: Vec<f64>,
    n: usize,
    /// Prefix sums of centered values and their squares (1-D Epanechnikov).
    moments: Option<Moments>,
}

#[derive(Debug, Clone)]
struct Moments {
    center: f64,
    first: Vec<f64>,
    second: Vec<f64>,
}

impl Kde {
    fn new(points: &Points, kernel: KernelSpec, h: f64) -> Self {
        let d = points.dim();
        let mut rows: Vec<&[f64]> = points.rows().collect();
        rows.sort_by(|a, b| {
            a.iter()
                .zip(b.iter())
                .map(|(x, y)| x.total_cmp(y))
                .find(|o| o.is_ne())
                .unwrap_or(std::cmp::Ordering::Equal)
        });
        let data: Vec<f64> = rows.concat();
        let n = rows.len();
        let moments = (d == 1 && kernel.family == KernelFamily::Epanechnikov).then(|| {
            let center = (data[0] + data[n - 1]) / 2.0;
            let mut first = Vec::with_capacity(n + 1);
            let mut second = Vec::with_capacity(n + 1);
            let (mut s1, mut s2) = (0.0, 0.0);
            first.push(0.0);
            second.push(0.0);
            for v in &data {
                let c = v - center;
                s1 += c;
                s2 += c * c;
                first.push(s1);
                second.push(s2);
            }
            Moments {
                center,
                first,
                second,
            }
        });
        Self {
            kernel,
            h,
            data,
            n,
            moments,
        }
    }

    fn reach(&self) -> f64 {
        self.h * self.kernel.support_radius
    }

    fn leading(&self, j: usize) -> f64 {
        self.data[j * self.kernel.dim]
    }

    fn window(&self, y0: f64) -> (usize, usize) {
        let (lo_edge, hi_edge) = (y0 - self.reach(), y0 + self.reach());
        let lo = partition_rows(self.n, |j| self.leading(j) < lo_edge);
        let hi = partition_rows(self.n, |j| self.leading(j) <= hi_edge);
        (lo, hi)
    }

    fn sum_window(&self, y: &[f64], lo: usize, hi: usize) -> f64 {
        let d = self.kernel.dim;
        let scale = 1.0 / (self.n as f64 * self.h.powi(d as i32));
        if let Some(m) = &self.moments {
            let cnt = (hi - lo) as f64;
            let s1 = m.first[hi] - m.first[lo];
            let s2 = m.second[hi] - m.second[lo];
            let yc = y[0] - m.center;
            let quad = (cnt * yc * yc - 2.0 * yc * s1 + s2) / (self.h * self.h);
            return (self.kernel.normalizing_constant * (cnt - quad) * scale).max(0.0);
        }
        let mut acc = 0.0;
        for j in lo..hi {
            let row = &self.data[j * d..(j + 1) * d];
            let sq: f64 = row.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
            acc += self.kernel.evaluate(sq.sqrt() / self.h);
        }
        acc * scale
    }

    fn evaluate(&self, y: &[f64]) -> f64 {
        let (lo, hi) = self.window(y[0]);
        self.sum_window(y, lo, hi)
    }

    /// Queries sorted by leading coordinate: two-pointer sweep.
    fn evaluate_sorted(&self, points: &Points) -> Vec<f64> {
        let mut out = Vec::with_capacity(points.len());
        let (mut lo, mut hi) = (0, 0);
        for y in points.rows() {
            let (lo_edge, hi_edge) = (y[0] - self.reach(), y[0] + self.reach());
            while lo < self.n && self.leading(lo) < lo_edge {
                lo += 1;
            }
            hi = hi.max(lo);
            while hi < self.n && self.leading(hi) <= hi_edge {
                hi += 1;
            }
            out.push(self.sum_window(y, lo, hi));
        }
        out
    }
}

fn partition_rows(n: usize, pred: impl Fn(usize) -> bool) -> usize {
    let (mut lo, mut hi) = (0, n);
    while lo < hi {
        let mid = lo + (hi - lo) / 2;
        if pred(mid) {
            lo = mid + 1;
        } else {
            hi = mid;
        }
    }
    lo
}

#[derive(Debug, Clone)]
enum Repr {
    Kde(Kde),
    Grid {
        grid: EvaluationGrid,
        values: Vec<f64>,
    },
}

/// An evaluable density estimate together with the box it lives in.
#[derive(Debug, Clone)]
pub struct SmoothedDensity {
    repr: Repr,
    region: IntegrationRegion,
    bandwidth: f64,
    arm: Arm,
    kind: DensityKind,
    n_arm: Option<usize>,
}

impl SmoothedDensity {
    pub fn region(&self) -> &IntegrationRegion {
        &self.region
    }

    pub fn dim(&self) -> usize {
        self.region.dim()
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    pub fn arm(&self) -> Arm {
        self.arm
    }

    pub fn kind(&self) -> DensityKind {
        self.kind
    }

    pub fn n_arm(&self) -> Option<usize> {
        self.n_arm
    }

    /// Grid node values for a pseudo-density.
    pub fn grid_values(&self) -> Option<&[f64]> {
        match &self.repr {
            Repr::Grid { values, .. } => Some(values),
            Repr::Kde(_) => None,
        }
    }

    pub fn evaluate(&self, y: &[f64]) -> f64 {
        debug_assert_eq!(y.len(), self.dim());
        match &self.repr {
            Repr::Kde(k) => k.evaluate(y),
            Repr::Grid { grid, values } => grid.interpolate(values, y),
        }
    }

    /// Values at every row of `points`. Rows sorted by leading coordinate take
    /// a linear sweep; the result equals pointwise evaluation either way.
    pub fn evaluate_many(&self, points: &Points) -> Vec<f64> {
        match &self.repr {
            Repr::Kde(k) if is_sorted_leading(points) => k.evaluate_sorted(points),
            _ => points.rows().map(|y| self.evaluate(y)).collect(),
        }
    }

    /// Smallest value over the grid nodes (pseudo-densities can go negative).
    pub fn min_grid_value(&self) -> Option<f64> {
        self.grid_values()
            .map(|v| v.iter().copied().fold(f64::INFINITY, f64::min))
    }
}

fn is_sorted_leading(points: &Points) -> bool {
    let d = points.dim();
    points
        .as_slice()
        .chunks_exact(d)
        .zip(points.as_slice().chunks_exact(d).skip(1))
        .all(|(a, b)| a[0] <= b[0])
}

fn check_bandwidth(h: f64) -> Result<()> {
    if h.is_finite() && h > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidConfig(format!(
            "bandwidth must be positive, got {h}"
        )))
    }
}

/// Region over the pooled outcomes widened by the kernel reach.
pub fn pooled_region(outcomes: &Points, h: f64, kernel: &KernelSpec) -> Result<IntegrationRegion> {
    IntegrationRegion::around(outcomes, h * kernel.support_radius)
}

/// Kernel density estimate of the outcomes in arm `arm`.
pub fn kde_conditional(
    data: &RandomizedSample,
    arm: Arm,
    h: f64,
    kernel: &KernelSpec,
) -> Result<SmoothedDensity> {
    check_bandwidth(h)?;
    if data.is_empty() {
        return Err(Error::EmptyInput);
    }
    if data.dim() != kernel.dim {
        return Err(Error::DimensionMismatch {
            expected: kernel.dim,
            found: data.dim(),
        });
    }
    let region = pooled_region(data.outcomes(), h, kernel)?;
    kde_in_region(data, arm, h, kernel, region)
}

/// As [`kde_conditional`] with an explicit region, used when several
/// estimates (e.g. bootstrap replicates) must share one domain.
pub fn kde_in_region(
    data: &RandomizedSample,
    arm: Arm,
    h: f64,
    kernel: &KernelSpec,
    region: IntegrationRegion,
) -> Result<SmoothedDensity> {
    check_bandwidth(h)?;
    let arm_points = data.arm_outcomes(arm);
    if arm_points.is_empty() {
        return Err(Error::EmptyArm { arm, site: None });
    }
    let n = arm_points.len();
    Ok(SmoothedDensity {
        repr: Repr::Kde(Kde::new(&arm_points, *kernel, h)),
        region,
        bandwidth: h,
        arm,
        kind: DensityKind::Kde,
        n_arm: Some(n),
    })
}

/// Pseudo-density from precomputed grid values.
pub fn grid_density(
    grid: EvaluationGrid,
    values: Vec<f64>,
    h: f64,
    arm: Arm,
) -> Result<SmoothedDensity> {
    if values.len() != grid.len() {
        return Err(Error::DimensionMismatch {
            expected: grid.len(),
            found: values.len(),
        });
    }
    Ok(SmoothedDensity {
        region: grid.region().clone(),
        repr: Repr::Grid { grid, values },
        bandwidth: h,
        arm,
        kind: DensityKind::DrPseudo,
        n_arm: None,
    })
}

/// Per-row doubly-robust influence terms on a grid, one row of `grid.len()`
/// values per observation. The pseudo-density is their column mean.
#[derive(Debug, Clone)]
pub struct DrContributions {
    arm: Arm,
    grid: EvaluationGrid,
    h: f64,
    n: usize,
    values: Vec<f64>,
    clamped: usize,
}

impl DrContributions {
    pub fn empty(arm: Arm, grid: EvaluationGrid, h: f64) -> Self {
        Self {
            arm,
            grid,
            h,
            n: 0,
            values: Vec::new(),
            clamped: 0,
        }
    }

    /// Append the terms of `rows` of `data`, using nuisances fit elsewhere.
    pub fn extend(
        &mut self,
        data: &ObservationalSample,
        rows: &[usize],
        nuisance: &NuisanceFit,
        kernel: &KernelSpec,
    ) -> Result<()> {
        if data.dim() != self.grid.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.grid.dim(),
                found: data.dim(),
            });
        }
        let nodes = self.grid.points();
        let m = nodes.len();
        let mut mu = vec![0.0; m];
        self.values.reserve(rows.len() * m);
        for &i in rows {
            let x = data.covariates().row(i);
            let p = nuisance.arm_prob(x, self.arm);
            if !(p >= PROPENSITY_CLIP) {
                return Err(Error::PropensityUnderflow {
                    row: i,
                    arm: self.arm,
                    value: p,
                    threshold: PROPENSITY_CLIP,
                });
            }
            self.clamped += nuisance.outcome(x, self.arm, &mut mu);
            if data.arms()[i] == self.arm {
                let y = data.outcomes().row(i);
                let inv = 1.0 / p;
                for (node, mu_m) in nodes.rows().zip(&mu) {
                    let t = kernel.scaled_unchecked(node, y, self.h);
                    self.values.push(inv * (t - mu_m) + mu_m);
                }
            } else {
                self.values.extend_from_slice(&mu);
            }
            self.n += 1;
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn clamped(&self) -> usize {
        self.clamped
    }

    pub fn grid(&self) -> &EvaluationGrid {
        &self.grid
    }

    fn row(&self, i: usize) -> &[f64] {
        let m = self.grid.len();
        &self.values[i * m..(i + 1) * m]
    }

    /// Column means over the given rows.
    pub fn mean_over(&self, rows: impl ExactSizeIterator<Item = usize>) -> Vec<f64> {
        let m = self.grid.len();
        let count = rows.len() as f64;
        let mut acc = vec![0.0; m];
        for i in rows {
            for (a, v) in acc.iter_mut().zip(self.row(i)) {
                *a += v;
            }
        }
        acc.iter_mut().for_each(|a| *a /= count);
        acc
    }

    pub fn density(&self) -> Result<SmoothedDensity> {
        if self.n == 0 {
            return Err(Error::EmptyInput);
        }
        grid_density(
            self.grid.clone(),
            self.mean_over(0..self.n),
            self.h,
            self.arm,
        )
    }

    /// Pseudo-density recomputed on a resample of the rows.
    pub fn resampled_density(&self, rows: &[usize]) -> Result<SmoothedDensity> {
        if rows.is_empty() {
            return Err(Error::EmptyInput);
        }
        grid_density(
            self.grid.clone(),
            self.mean_over(rows.iter().copied()),
            self.h,
            self.arm,
        )
    }
}

/// Doubly-robust pseudo-density of arm `arm` on `grid` from a single
/// estimation fold, given nuisances fit on a disjoint fold.
pub fn dr_pseudo_density(
    data: &ObservationalSample,
    arm: Arm,
    nuisance: &NuisanceFit,
    grid: &EvaluationGrid,
    h: f64,
    kernel: &KernelSpec,
) -> Result<SmoothedDensity> {
    check_bandwidth(h)?;
    let mut contrib = DrContributions::empty(arm, grid.clone(), h);
    let rows: Vec<usize> = (0..data.len()).collect();
    contrib.extend(data, &rows, nuisance, kernel)?;
    contrib.density()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_row() -> RandomizedSample {
        RandomizedSample::from_scalars(&[1, 0], &[0.0, 5.0]).unwrap()
    }

    #[test]
    fn kde_single_observation_values() {
        let k = KernelSpec::epanechnikov(1).unwrap();
        let q = kde_conditional(&two_row(), Arm::Treated, 1.0, &k).unwrap();
        assert_eq!(q.evaluate(&[0.0]), 0.75);
        assert_eq!(q.evaluate(&[2.0]), 0.0);
        assert!((q.evaluate(&[0.5]) - 0.5625).abs() < 1e-12);
        assert_eq!(q.n_arm(), Some(1));
        assert_eq!(q.region().lower, vec![-1.0]);
        assert_eq!(q.region().upper, vec![6.0]);
    }

    #[test]
    fn kde_empty_arm() {
        let k = KernelSpec::epanechnikov(1).unwrap();
        let data = RandomizedSample::from_scalars(&[0, 0], &[1.0, 2.0]).unwrap();
        assert_eq!(
            kde_conditional(&data, Arm::Treated, 1.0, &k).unwrap_err(),
            Error::EmptyArm {
                arm: Arm::Treated,
                site: None
            }
        );
    }

    #[test]
    fn kde_rejects_bad_bandwidth() {
        let k = KernelSpec::epanechnikov(1).unwrap();
        assert!(kde_conditional(&two_row(), Arm::Treated, 0.0, &k).is_err());
        assert!(kde_conditional(&two_row(), Arm::Treated, f64::NAN, &k).is_err());
    }

    #[test]
    fn moment_path_matches_direct_sum() {
        let k = KernelSpec::epanechnikov(1).unwrap();
        let y: Vec<f64> = (0..200)
            .map(|i| ((i * 37) % 101) as f64 / 17.0 - 2.0)
            .collect();
        let a: Vec<u8> = (0..200).map(|i| (i % 3 == 0) as u8).collect();
        let data = RandomizedSample::from_scalars(&a, &y).unwrap();
        let h = 0.4;
        let q = kde_conditional(&data, Arm::Treated, h, &k).unwrap();
        let treated: Vec<f64> = (0..200).filter(|&i| a[i] == 1).map(|i| y[i]).collect();
        for t in 0..50 {
            let at = -3.0 + t as f64 * 0.17;
            let direct: f64 = treated
                .iter()
                .map(|yj| k.scaled_evaluate(&[at], &[*yj], h).unwrap())
                .sum::<f64>()
                / treated.len() as f64;
            assert!((q.evaluate(&[at]) - direct).abs() < 1e-12, "at {at}");
        }
    }

    #[test]
    fn batch_matches_pointwise() {
        let k = KernelSpec::truncated_gaussian(1).unwrap();
        let data = RandomizedSample::from_scalars(&[1, 1, 1, 0], &[0.1, 0.7, 2.0, 9.0]).unwrap();
        let q = kde_conditional(&data, Arm::Treated, 0.3, &k).unwrap();
        let pts = Points::scalars((0..40).map(|i| -1.0 + i as f64 * 0.1).collect());
        let batch = q.evaluate_many(&pts);
        for (y, v) in pts.rows().zip(&batch) {
            assert_eq!(q.evaluate(y), *v);
        }
    }

    #[test]
    fn grid_interpolation_one_dimensional() {
        let region = IntegrationRegion::new(vec![0.0], vec![3.0]).unwrap();
        let grid = EvaluationGrid::new(region, 4).unwrap();
        let d = grid_density(grid, vec![0.0, 1.0, 3.0, 0.0], 1.0, Arm::Treated).unwrap();
        assert_eq!(d.evaluate(&[1.0]), 1.0);
        assert_eq!(d.evaluate(&[1.5]), 2.0);
        assert_eq!(d.evaluate(&[3.0]), 0.0);
        assert_eq!(d.evaluate(&[3.5]), 0.0);
        assert_eq!(d.min_grid_value(), Some(0.0));
    }

    #[test]
    fn grid_nearest_node_two_dimensional() {
        let region = IntegrationRegion::new(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap();
        let grid = EvaluationGrid::new(region, 2).unwrap();
        let pts = grid.points();
        assert_eq!(pts.row(1), &[0.0, 1.0]);
        assert_eq!(pts.row(2), &[1.0, 0.0]);
        let d = grid_density(grid, vec![1.0, 2.0, 3.0, 4.0], 1.0, Arm::Control).unwrap();
        assert_eq!(d.evaluate(&[0.9, 0.2]), 3.0);
        assert_eq!(d.evaluate(&[0.1, 0.6]), 2.0);
    }

    #[test]
    fn region_rejects_inverted_bounds() {
        assert!(IntegrationRegion::new(vec![1.0], vec![0.0]).is_err());
        assert!(IntegrationRegion::new(vec![0.0], vec![0.0, 1.0]).is_err());
        let a = IntegrationRegion::new(vec![0.0], vec![1.0]).unwrap();
        let b = IntegrationRegion::new(vec![-2.0], vec![0.5]).unwrap();
        let u = a.union(&b).unwrap();
        assert_eq!((u.lower[0], u.upper[0]), (-2.0, 1.0));
        assert_eq!(u.volume(), 3.0);
    }
}
