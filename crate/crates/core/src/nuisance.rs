//! Nuisance functions for the observational estimators: the propensity score
//! `P(A = 1 | X)` and outcome regressions `E[target | A = a, X]`, fit on one
//! fold and evaluated on another.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;

use crate::density::PROPENSITY_CLIP;
use crate::error::{Error, Result};
use crate::kernels::KernelSpec;
use crate::rng;
use crate::sample::{Arm, ObservationalSample, Points};

pub const DEFAULT_RIDGE_LAMBDA: f64 = 1e-3;

/// A propensity score `x -> P(A = 1 | X = x)`.
pub trait Propensity: Send + Sync {
    fn treated_prob(&self, x: &[f64]) -> f64;
}

/// Regressions of one or more targets on covariates, separately per arm.
pub trait OutcomeRegression: Send + Sync {
    fn n_targets(&self) -> usize;
    fn predict(&self, x: &[f64], arm: Arm, out: &mut [f64]);
}

/// Wraps a closure as a propensity score.
pub struct FnPropensity<F>(pub F);

impl<F: Fn(&[f64]) -> f64 + Send + Sync> Propensity for FnPropensity<F> {
    fn treated_prob(&self, x: &[f64]) -> f64 {
        (self.0)(x)
    }
}

/// Wraps a closure `(x, arm, target index) -> value` as an outcome regression.
pub struct FnOutcome<F> {
    pub n_targets: usize,
    pub f: F,
}

impl<F: Fn(&[f64], Arm, usize) -> f64 + Send + Sync> OutcomeRegression for FnOutcome<F> {
    fn n_targets(&self) -> usize {
        self.n_targets
    }

    fn predict(&self, x: &[f64], arm: Arm, out: &mut [f64]) {
        for (m, o) in out.iter_mut().enumerate() {
            *o = (self.f)(x, arm, m);
        }
    }
}

/// Identically zero regression.
pub struct ZeroOutcome {
    pub n_targets: usize,
}

impl OutcomeRegression for ZeroOutcome {
    fn n_targets(&self) -> usize {
        self.n_targets
    }

    fn predict(&self, _x: &[f64], _arm: Arm, out: &mut [f64]) {
        out.fill(0.0);
    }
}

#[derive(Clone)]
pub enum PropensityModel {
    Logistic,
    KernelSmoother,
    /// A known or externally fitted score, used as-is on every fold.
    Fixed(Arc<dyn Propensity>),
}

impl PropensityModel {
    pub fn name(&self) -> &'static str {
        match self {
            PropensityModel::Logistic => "logistic",
            PropensityModel::KernelSmoother => "kernel",
            PropensityModel::Fixed(_) => "fixed",
        }
    }

    pub fn constant(p: f64) -> Self {
        PropensityModel::Fixed(Arc::new(FnPropensity(move |_: &[f64]| p)))
    }
}

impl fmt::Debug for PropensityModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PropensityModel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "logistic" => Ok(PropensityModel::Logistic),
            "kernel" | "kernel-smoother" => Ok(PropensityModel::KernelSmoother),
            other => Err(Error::InvalidConfig(format!(
                "unknown propensity model '{other}' (expected logistic or kernel)"
            ))),
        }
    }
}

#[derive(Clone)]
pub enum OutcomeModel {
    NadarayaWatson,
    RidgeLinear { lambda: f64 },
    Zero,
    Fixed(Arc<dyn OutcomeRegression>),
}

impl OutcomeModel {
    pub fn name(&self) -> &'static str {
        match self {
            OutcomeModel::NadarayaWatson => "nadaraya-watson",
            OutcomeModel::RidgeLinear { .. } => "ridge",
            OutcomeModel::Zero => "zero",
            OutcomeModel::Fixed(_) => "fixed",
        }
    }
}

impl fmt::Debug for OutcomeModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for OutcomeModel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "nadaraya-watson" | "nw" => Ok(OutcomeModel::NadarayaWatson),
            "ridge" | "ridge-linear" => Ok(OutcomeModel::RidgeLinear {
                lambda: DEFAULT_RIDGE_LAMBDA,
            }),
            other => Err(Error::InvalidConfig(format!(
                "unknown outcome model '{other}' (expected nadaraya-watson or ridge)"
            ))),
        }
    }
}

/// Per-row regression targets stored sparsely: `(target index, value)`.
#[derive(Debug, Clone)]
pub struct Targets {
    n_targets: usize,
    rows: Vec<Vec<(u32, f64)>>,
}

impl Targets {
    /// The single target `Y` (scalar outcomes only).
    pub fn scalar(outcomes: &Points) -> Result<Self> {
        if outcomes.dim() != 1 {
            return Err(Error::DimensionMismatch {
                expected: 1,
                found: outcomes.dim(),
            });
        }
        Ok(Self {
            n_targets: 1,
            rows: outcomes.rows().map(|y| vec![(0, y[0])]).collect(),
        })
    }

    /// `T_h(y_m) = h^-d K(|Y - y_m| / h)` for every grid node `y_m`.
    pub fn kernel_smoothed(
        outcomes: &Points,
        nodes: &Points,
        h: f64,
        kernel: &KernelSpec,
    ) -> Result<Self> {
        if nodes.is_empty() {
            return Err(Error::EmptyGrid);
        }
        if outcomes.dim() != nodes.dim() {
            return Err(Error::DimensionMismatch {
                expected: nodes.dim(),
                found: outcomes.dim(),
            });
        }
        let rows = outcomes
            .rows()
            .map(|y| {
                nodes
                    .rows()
                    .enumerate()
                    .filter_map(|(m, node)| {
                        let t = kernel.scaled_unchecked(node, y, h);
                        (t != 0.0).then_some((m as u32, t))
                    })
                    .collect()
            })
            .collect();
        Ok(Self {
            n_targets: nodes.len(),
            rows,
        })
    }

    pub fn n_targets(&self) -> usize {
        self.n_targets
    }

    fn select(&self, idx: &[usize]) -> Targets {
        Targets {
            n_targets: self.n_targets,
            rows: idx.iter().map(|&i| self.rows[i].clone()).collect(),
        }
    }
}

/// Column standardization of covariates.
#[derive(Debug, Clone)]
struct Standardizer {
    mean: Vec<f64>,
    scale: Vec<f64>,
}

impl Standardizer {
    fn fit(x: &Points) -> Self {
        let k = x.dim();
        let n = x.len() as f64;
        let mut mean = vec![0.0; k];
        for r in x.rows() {
            for j in 0..k {
                mean[j] += r[j] / n;
            }
        }
        let mut var = vec![0.0; k];
        for r in x.rows() {
            for j in 0..k {
                var[j] += (r[j] - mean[j]).powi(2) / (n - 1.0).max(1.0);
            }
        }
        let scale = var
            .into_iter()
            .map(|v| if v > 0.0 { v.sqrt() } else { 1.0 })
            .collect();
        Self { mean, scale }
    }

    fn apply(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.extend(
            x.iter()
                .zip(self.mean.iter().zip(&self.scale))
                .map(|(v, (m, s))| (v - m) / s),
        );
    }

    fn transform(&self, x: &Points) -> Vec<f64> {
        let mut buf = Vec::new();
        let mut out = Vec::with_capacity(x.as_slice().len());
        for r in x.rows() {
            self.apply(r, &mut buf);
            out.extend_from_slice(&buf);
        }
        out
    }
}

/// Rule-of-thumb Gaussian-kernel bandwidth in standardized covariate units.
fn covariate_bandwidth(n: usize, k: usize) -> f64 {
    let kf = k as f64;
    (4.0 / (kf + 2.0)).powf(1.0 / (kf + 4.0)) * (n as f64).powf(-1.0 / (kf + 4.0))
}

fn gaussian_weight(a: &[f64], b: &[f64], inv_two_bw_sq: f64) -> f64 {
    let sq: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    (-sq * inv_two_bw_sq).exp()
}

fn expit(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

fn clip_prob(p: f64) -> f64 {
    p.clamp(PROPENSITY_CLIP, 1.0 - PROPENSITY_CLIP)
}

/// Logistic regression on `[1, x]`, coefficients on the raw covariate scale.
#[derive(Debug, Clone)]
pub struct LogisticPropensity {
    pub coefficients: Vec<f64>,
}

impl LogisticPropensity {
    pub fn fit(x: &Points, treated: &[bool]) -> Result<Self> {
        let n = x.len();
        let p = x.dim() + 1;
        let design = DMatrix::from_fn(n, p, |i, j| if j == 0 { 1.0 } else { x.row(i)[j - 1] });
        let target = DVector::from_iterator(n, treated.iter().map(|&t| t as u8 as f64));
        // Small ridge keeps Newton steps finite under separation.
        let ridge = 1e-8;
        let mut beta = DVector::zeros(p);
        for _ in 0..100 {
            let eta = &design * &beta;
            let probs = eta.map(expit);
            let weights = probs.map(|q| (q * (1.0 - q)).max(1e-12));
            let mut grad = design.transpose() * (&target - &probs);
            let mut hess = design.transpose() * DMatrix::from_diagonal(&weights) * &design;
            for j in 1..p {
                grad[j] -= ridge * beta[j];
                hess[(j, j)] += ridge;
            }
            let step = hess
                .clone()
                .cholesky()
                .map(|c| c.solve(&grad))
                .or_else(|| hess.lu().solve(&grad))
                .ok_or(Error::SingularDesign)?;
            beta += &step;
            if step.amax() < 1e-10 {
                break;
            }
        }
        Ok(Self {
            coefficients: beta.iter().copied().collect(),
        })
    }

    fn raw(&self, x: &[f64]) -> f64 {
        let eta = self.coefficients[0]
            + self.coefficients[1..]
                .iter()
                .zip(x)
                .map(|(b, v)| b * v)
                .sum::<f64>();
        expit(eta)
    }
}

impl Propensity for LogisticPropensity {
    fn treated_prob(&self, x: &[f64]) -> f64 {
        clip_prob(self.raw(x))
    }
}

/// Nadaraya-Watson smoother of the treatment indicator on covariates.
#[derive(Debug, Clone)]
pub struct KernelPropensity {
    std: Standardizer,
    x: Vec<f64>,
    treated: Vec<f64>,
    inv_two_bw_sq: f64,
    base_rate: f64,
}

impl KernelPropensity {
    pub fn fit(x: &Points, treated: &[bool]) -> Self {
        let std = Standardizer::fit(x);
        let bw = covariate_bandwidth(x.len(), x.dim());
        let t: Vec<f64> = treated.iter().map(|&a| a as u8 as f64).collect();
        let base_rate = t.iter().sum::<f64>() / t.len() as f64;
        Self {
            x: std.transform(x),
            std,
            treated: t,
            inv_two_bw_sq: 1.0 / (2.0 * bw * bw),
            base_rate,
        }
    }

    fn raw(&self, x: &[f64]) -> f64 {
        let mut z = Vec::new();
        self.std.apply(x, &mut z);
        let k = z.len();
        let (mut num, mut den) = (0.0, 0.0);
        for (row, t) in self.x.chunks_exact(k).zip(&self.treated) {
            let w = gaussian_weight(row, &z, self.inv_two_bw_sq);
            num += w * t;
            den += w;
        }
        if den > 0.0 {
            num / den
        } else {
            self.base_rate
        }
    }
}

impl Propensity for KernelPropensity {
    fn treated_prob(&self, x: &[f64]) -> f64 {
        clip_prob(self.raw(x))
    }
}

/// Per-arm Nadaraya-Watson regression with a Gaussian weight on
/// standardized covariates. One weight vector per query serves all targets.
#[derive(Debug, Clone)]
pub struct NadarayaWatson {
    std: Standardizer,
    k: usize,
    inv_two_bw_sq: f64,
    arms: [NwArm; 2],
    n_targets: usize,
}

#[derive(Debug, Clone)]
struct NwArm {
    x: Vec<f64>,
    targets: Targets,
    mean: Vec<f64>,
}

impl NadarayaWatson {
    pub fn fit(data: &ObservationalSample, targets: &Targets) -> Result<Self> {
        let std = Standardizer::fit(data.covariates());
        let bw = covariate_bandwidth(data.len(), data.covariate_dim());
        let build = |arm: Arm| -> Result<NwArm> {
            let idx: Vec<usize> = (0..data.len()).filter(|&i| data.arms()[i] == arm).collect();
            if idx.is_empty() {
                return Err(Error::DegenerateArm { fold: 0 });
            }
            let t = targets.select(&idx);
            let mut mean = vec![0.0; targets.n_targets];
            for row in &t.rows {
                for &(m, v) in row {
                    mean[m as usize] += v / idx.len() as f64;
                }
            }
            Ok(NwArm {
                x: std.transform(&data.covariates().select(&idx)),
                targets: t,
                mean,
            })
        };
        Ok(Self {
            k: data.covariate_dim(),
            inv_two_bw_sq: 1.0 / (2.0 * bw * bw),
            arms: [build(Arm::Control)?, build(Arm::Treated)?],
            n_targets: targets.n_targets,
            std,
        })
    }
}

impl OutcomeRegression for NadarayaWatson {
    fn n_targets(&self) -> usize {
        self.n_targets
    }

    fn predict(&self, x: &[f64], arm: Arm, out: &mut [f64]) {
        let fit = &self.arms[arm.index()];
        let mut z = Vec::with_capacity(self.k);
        self.std.apply(x, &mut z);
        out.fill(0.0);
        let mut den = 0.0;
        for (row, targets) in fit.x.chunks_exact(self.k).zip(&fit.targets.rows) {
            let w = gaussian_weight(row, &z, self.inv_two_bw_sq);
            if w == 0.0 {
                continue;
            }
            den += w;
            for &(m, v) in targets {
                out[m as usize] += w * v;
            }
        }
        if den > 0.0 {
            out.iter_mut().for_each(|o| *o /= den);
        } else {
            out.copy_from_slice(&fit.mean);
        }
    }
}

/// Per-arm ridge regression on `[1, x]` (intercept unpenalized).
#[derive(Debug, Clone)]
pub struct RidgeRegression {
    std: Standardizer,
    /// Per arm, `(k + 1) x n_targets` coefficients, column-major by target.
    coefficients: [DMatrix<f64>; 2],
    n_targets: usize,
}

impl RidgeRegression {
    pub fn fit(data: &ObservationalSample, targets: &Targets, lambda: f64) -> Result<Self> {
        if !(lambda >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "ridge lambda must be >= 0, got {lambda}"
            )));
        }
        let std = Standardizer::fit(data.covariates());
        let k = data.covariate_dim();
        let solve = |arm: Arm| -> Result<DMatrix<f64>> {
            let idx: Vec<usize> = (0..data.len()).filter(|&i| data.arms()[i] == arm).collect();
            if idx.is_empty() {
                return Err(Error::DegenerateArm { fold: 0 });
            }
            let mut gram = DMatrix::<f64>::zeros(k + 1, k + 1);
            let mut cross = DMatrix::<f64>::zeros(k + 1, targets.n_targets);
            let mut z = Vec::new();
            for &i in &idx {
                std.apply(data.covariates().row(i), &mut z);
                let feat: Vec<f64> = std::iter::once(1.0).chain(z.iter().copied()).collect();
                for a in 0..=k {
                    for b in 0..=k {
                        gram[(a, b)] += feat[a] * feat[b];
                    }
                }
                for &(m, v) in &targets.rows[i] {
                    for a in 0..=k {
                        cross[(a, m as usize)] += feat[a] * v;
                    }
                }
            }
            for j in 1..=k {
                gram[(j, j)] += lambda;
            }
            let chol = gram.cholesky().ok_or(Error::SingularDesign)?;
            Ok(chol.solve(&cross))
        };
        Ok(Self {
            coefficients: [solve(Arm::Control)?, solve(Arm::Treated)?],
            n_targets: targets.n_targets,
            std,
        })
    }
}

impl OutcomeRegression for RidgeRegression {
    fn n_targets(&self) -> usize {
        self.n_targets
    }

    fn predict(&self, x: &[f64], arm: Arm, out: &mut [f64]) {
        let beta = &self.coefficients[arm.index()];
        let mut z = Vec::new();
        self.std.apply(x, &mut z);
        for (m, o) in out.iter_mut().enumerate() {
            let col = beta.column(m);
            *o = col[0]
                + z.iter()
                    .enumerate()
                    .map(|(j, v)| col[j + 1] * v)
                    .sum::<f64>();
        }
    }
}

fn require_both_arms(data: &ObservationalSample) -> Result<()> {
    if data.arm_count(Arm::Treated) == 0 || data.arm_count(Arm::Control) == 0 {
        return Err(Error::DegenerateArm { fold: 0 });
    }
    Ok(())
}

/// Fitted propensity plus the number of training rows whose fitted value
/// sat at a clip boundary.
pub struct PropensityFit {
    pub model: Arc<dyn Propensity>,
    pub clipped: usize,
    pub brier: f64,
}

pub fn fit_propensity(
    data: &ObservationalSample,
    model: &PropensityModel,
) -> Result<PropensityFit> {
    require_both_arms(data)?;
    let treated: Vec<bool> = data.arms().iter().map(|&a| a == Arm::Treated).collect();
    let fitted: Arc<dyn Propensity> = match model {
        PropensityModel::Logistic => {
            Arc::new(LogisticPropensity::fit(data.covariates(), &treated)?)
        }
        PropensityModel::KernelSmoother => {
            Arc::new(KernelPropensity::fit(data.covariates(), &treated))
        }
        PropensityModel::Fixed(p) => p.clone(),
    };
    let mut clipped = 0;
    let mut brier = 0.0;
    for (x, &t) in data.covariates().rows().zip(&treated) {
        let p = fitted.treated_prob(x);
        if p <= PROPENSITY_CLIP || p >= 1.0 - PROPENSITY_CLIP {
            clipped += 1;
        }
        brier += (p - t as u8 as f64).powi(2);
    }
    Ok(PropensityFit {
        model: fitted,
        clipped,
        brier: brier / data.len() as f64,
    })
}

/// Regression of `targets` on covariates within each arm.
pub fn fit_regression(
    data: &ObservationalSample,
    targets: &Targets,
    model: &OutcomeModel,
) -> Result<Arc<dyn OutcomeRegression>> {
    require_both_arms(data)?;
    Ok(match model {
        OutcomeModel::NadarayaWatson => Arc::new(NadarayaWatson::fit(data, targets)?),
        OutcomeModel::RidgeLinear { lambda } => {
            Arc::new(RidgeRegression::fit(data, targets, *lambda)?)
        }
        OutcomeModel::Zero => Arc::new(ZeroOutcome {
            n_targets: targets.n_targets,
        }),
        OutcomeModel::Fixed(f) => f.clone(),
    })
}

/// Regressions of `T_h(y_m)` on covariates for every grid node.
pub fn fit_outcome_regression(
    data: &ObservationalSample,
    nodes: &Points,
    h: f64,
    kernel: &KernelSpec,
    model: &OutcomeModel,
) -> Result<Arc<dyn OutcomeRegression>> {
    if nodes.is_empty() {
        return Err(Error::EmptyGrid);
    }
    require_both_arms(data)?;
    let targets = match model {
        OutcomeModel::Zero | OutcomeModel::Fixed(_) => Targets {
            n_targets: nodes.len(),
            rows: Vec::new(),
        },
        _ => Targets::kernel_smoothed(data.outcomes(), nodes, h, kernel)?,
    };
    fit_regression(data, &targets, model)
}

/// Nuisances for one cross-fitting fold.
#[derive(Clone)]
pub struct NuisanceFit {
    pub propensity: Arc<dyn Propensity>,
    pub outcome: Arc<dyn OutcomeRegression>,
    pub fold_id: usize,
    pub model_kinds: (String, String),
    /// Training rows whose propensity hit a clip boundary.
    pub clipped: usize,
    /// In-sample Brier score of the propensity on the training fold.
    pub propensity_brier: f64,
    bound: f64,
}

impl NuisanceFit {
    pub fn new(
        propensity: Arc<dyn Propensity>,
        outcome: Arc<dyn OutcomeRegression>,
        bound: f64,
    ) -> Self {
        Self {
            propensity,
            outcome,
            fold_id: 0,
            model_kinds: ("fixed".into(), "fixed".into()),
            clipped: 0,
            propensity_brier: f64::NAN,
            bound,
        }
    }

    /// `P(A = arm | X = x)`.
    pub fn arm_prob(&self, x: &[f64], arm: Arm) -> f64 {
        let p = self.propensity.treated_prob(x);
        match arm {
            Arm::Treated => p,
            Arm::Control => 1.0 - p,
        }
    }

    /// Clamped predictions for every target; returns how many were clamped.
    pub fn outcome(&self, x: &[f64], arm: Arm, out: &mut [f64]) -> usize {
        self.outcome.predict(x, arm, out);
        let mut clamped = 0;
        for o in out.iter_mut() {
            if o.abs() > self.bound {
                *o = o.clamp(-self.bound, self.bound);
                clamped += 1;
            }
        }
        clamped
    }

    pub fn clamp_bound(&self) -> f64 {
        self.bound
    }
}

/// Random partition of rows into folds.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CrossFitPlan {
    n_folds: usize,
    assignment: Vec<usize>,
    seed: u64,
}

impl CrossFitPlan {
    pub fn new(n_rows: usize, n_folds: usize, seed: u64) -> Result<Self> {
        if n_folds < 2 {
            return Err(Error::InvalidConfig(format!(
                "cross-fitting needs at least 2 folds, got {n_folds}"
            )));
        }
        if n_folds > n_rows {
            return Err(Error::InvalidConfig(format!(
                "{n_folds} folds requested for {n_rows} rows"
            )));
        }
        let mut order: Vec<usize> = (0..n_rows).collect();
        order.shuffle(&mut rng::stream(seed, 0));
        let mut assignment = vec![0; n_rows];
        for (pos, &row) in order.iter().enumerate() {
            assignment[row] = pos % n_folds;
        }
        Ok(Self {
            n_folds,
            assignment,
            seed,
        })
    }

    pub fn n_folds(&self) -> usize {
        self.n_folds
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn assignment(&self) -> &[usize] {
        &self.assignment
    }

    pub fn fold(&self, f: usize) -> Vec<usize> {
        (0..self.assignment.len())
            .filter(|&i| self.assignment[i] == f)
            .collect()
    }

    pub fn complement(&self, f: usize) -> Vec<usize> {
        (0..self.assignment.len())
            .filter(|&i| self.assignment[i] != f)
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct NuisanceModels {
    pub propensity: PropensityModel,
    pub outcome: OutcomeModel,
}

impl Default for NuisanceModels {
    fn default() -> Self {
        Self {
            propensity: PropensityModel::Logistic,
            outcome: OutcomeModel::NadarayaWatson,
        }
    }
}

/// Fit nuisances on each fold's complement; pair each fit with the rows it
/// will be evaluated on.
pub fn cross_fit(
    data: &ObservationalSample,
    plan: &CrossFitPlan,
    nodes: &Points,
    h: f64,
    kernel: &KernelSpec,
    models: &NuisanceModels,
) -> Result<Vec<(NuisanceFit, Vec<usize>)>> {
    if plan.assignment.len() != data.len() {
        return Err(Error::DimensionMismatch {
            expected: data.len(),
            found: plan.assignment.len(),
        });
    }
    let bound = kernel.scaled_bound(h);
    (0..plan.n_folds)
        .map(|f| {
            let train = data.select(&plan.complement(f));
            let with_fold = |e: Error| match e {
                Error::DegenerateArm { .. } => Error::DegenerateArm { fold: f },
                other => other,
            };
            let prop = fit_propensity(&train, &models.propensity).map_err(with_fold)?;
            let outcome = fit_outcome_regression(&train, nodes, h, kernel, &models.outcome)
                .map_err(with_fold)?;
            let fit = NuisanceFit {
                propensity: prop.model,
                outcome,
                fold_id: f,
                model_kinds: (
                    models.propensity.name().to_string(),
                    models.outcome.name().to_string(),
                ),
                clipped: prop.clipped,
                propensity_brier: prop.brier,
                bound,
            };
            Ok((fit, plan.fold(f)))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(x: Vec<f64>, a: Vec<u8>, y: Vec<f64>) -> ObservationalSample {
        ObservationalSample::new(
            Points::scalars(x),
            a.into_iter()
                .map(|v| Arm::from_indicator(v).unwrap())
                .collect(),
            Points::scalars(y),
        )
        .unwrap()
    }

    #[test]
    fn plan_partitions_rows() {
        let plan = CrossFitPlan::new(100, 2, 9).unwrap();
        let (a, b) = (plan.fold(0), plan.fold(1));
        assert_eq!(a.len() + b.len(), 100);
        assert_eq!(a.len(), 50);
        assert_eq!(plan, CrossFitPlan::new(100, 2, 9).unwrap());
        assert_ne!(
            plan.assignment(),
            CrossFitPlan::new(100, 2, 10).unwrap().assignment()
        );
        assert!(CrossFitPlan::new(100, 1, 0).is_err());
        assert!(CrossFitPlan::new(3, 4, 0).is_err());
    }

    #[test]
    fn single_arm_training_is_degenerate() {
        let d = sample(vec![0.1, 0.2, 0.3], vec![1, 1, 1], vec![1.0, 2.0, 3.0]);
        assert!(matches!(
            fit_propensity(&d, &PropensityModel::Logistic),
            Err(Error::DegenerateArm { .. })
        ));
    }

    #[test]
    fn constant_covariate_nw_is_arm_mean() {
        let d = sample(
            vec![1.0; 6],
            vec![1, 1, 1, 0, 0, 0],
            vec![1.0, 2.0, 6.0, 0.0, 0.0, 3.0],
        );
        let t = Targets::scalar(d.outcomes()).unwrap();
        let nw = fit_regression(&d, &t, &OutcomeModel::NadarayaWatson).unwrap();
        let mut out = [0.0];
        nw.predict(&[1.0], Arm::Treated, &mut out);
        assert!((out[0] - 3.0).abs() < 1e-12);
        nw.predict(&[1.0], Arm::Control, &mut out);
        assert!((out[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn ridge_recovers_linear_truth() {
        let x: Vec<f64> = (0..40).map(|i| i as f64 / 40.0).collect();
        let a: Vec<u8> = (0..40).map(|i| (i % 2) as u8).collect();
        let y: Vec<f64> = x
            .iter()
            .zip(&a)
            .map(|(x, a)| 1.0 + 2.0 * x + 3.0 * *a as f64)
            .collect();
        let d = sample(x, a, y);
        let t = Targets::scalar(d.outcomes()).unwrap();
        let r = fit_regression(&d, &t, &OutcomeModel::RidgeLinear { lambda: 0.0 }).unwrap();
        let mut out = [0.0];
        r.predict(&[0.5], Arm::Treated, &mut out);
        assert!((out[0] - 5.0).abs() < 1e-9, "{}", out[0]);
        r.predict(&[0.25], Arm::Control, &mut out);
        assert!((out[0] - 1.5).abs() < 1e-9, "{}", out[0]);
    }

    #[test]
    fn ridge_without_penalty_on_collinear_design_is_singular() {
        let d = sample(vec![2.0; 6], vec![1, 0, 1, 0, 1, 0], vec![1.0; 6]);
        // Constant covariate standardizes to zero: the design is rank one.
        let t = Targets::scalar(d.outcomes()).unwrap();
        let r = fit_regression(&d, &t, &OutcomeModel::RidgeLinear { lambda: 0.0 });
        assert!(matches!(r, Err(Error::SingularDesign)));
        assert!(fit_regression(&d, &t, &OutcomeModel::RidgeLinear { lambda: 1e-3 }).is_ok());
    }

    #[test]
    fn empty_grid_is_rejected() {
        let d = sample(vec![0.0, 1.0], vec![1, 0], vec![0.0, 1.0]);
        let k = KernelSpec::epanechnikov(1).unwrap();
        let nodes = Points::scalars(Vec::new());
        assert!(matches!(
            fit_outcome_regression(&d, &nodes, 1.0, &k, &OutcomeModel::NadarayaWatson),
            Err(Error::EmptyGrid)
        ));
    }

    #[test]
    fn clamping_counts() {
        let fit = NuisanceFit::new(
            Arc::new(FnPropensity(|_: &[f64]| 0.5)),
            Arc::new(FnOutcome {
                n_targets: 3,
                f: |_: &[f64], _: Arm, m: usize| m as f64 - 1.0,
            }),
            0.5,
        );
        let mut out = [0.0; 3];
        assert_eq!(fit.outcome(&[0.0], Arm::Treated, &mut out), 2);
        assert_eq!(out, [-0.5, 0.0, 0.5]);
        assert_eq!(fit.arm_prob(&[0.0], Arm::Control), 0.5);
    }
}
