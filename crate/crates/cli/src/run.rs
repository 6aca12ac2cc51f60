use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use cfdist::estimators::{
    ate_doubly_robust, ate_ipw, ate_plugin_regression, diff_in_means, estimate_multi,
    horvitz_thompson, silverman_bandwidth, BaselineEstimate, BaselineOptions,
};
use cfdist::kernels::DEFAULT_TRUNCATION;
use cfdist::nuisance::{CrossFitPlan, DEFAULT_RIDGE_LAMBDA};
use cfdist::rng::derive_seed;
use cfdist::simulate::{
    gen_confounded, gen_multi_source, gen_single_samemean, ConfoundedScenario, SameMeanScenario,
    SuperDistributionSpec,
};
use cfdist::{
    ci_multi, ci_observational, ci_single, Arm, Bandwidths, BootstrapConfig, DistanceReport,
    KernelFamily, KernelSpec, McConfig, NuisanceModels, ObservationalConfig, OutcomeModel, Points,
    PropensityModel, RandomizedSample,
};
use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::error::{CliError, CliResult};
use crate::ingest::{ingest_csv, write_csv, ColumnMap, Dataset, Schema};
use crate::report::{BandwidthReport, Design, Interval, NuisanceReport, Report, SiteReport};

#[derive(Debug, Parser)]
#[command(
    name = "cfdist",
    version,
    about = "L1 distance between counterfactual outcome distributions"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// One randomized experiment (CSV columns a,y[,y2,y3]).
    EstimateSingle(RandomizedArgs),
    /// Several randomized experiments (CSV columns site,a,y[,y2,y3]).
    EstimateMulti(MultiArgs),
    /// Observational data, doubly robust (CSV columns x1..xk,a,y[,y2,y3]).
    EstimateObs(ObsArgs),
    /// Write a synthetic dataset as CSV.
    Simulate(SimulateArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum KernelName {
    Epanechnikov,
    Tgauss,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PropensityName {
    Logistic,
    Kernel,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OutcomeName {
    NadarayaWatson,
    Ridge,
    Zero,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Scenario {
    TwoBeta,
    UniBimodal,
    MultiSource,
    ConfoundedLinear,
    ConfoundedNull,
}

/// A positive bandwidth or `auto` for the Silverman rule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BandwidthArg {
    Auto,
    Fixed(f64),
}

fn parse_bandwidth(s: &str) -> Result<BandwidthArg, String> {
    if s == "auto" {
        return Ok(BandwidthArg::Auto);
    }
    match s.parse::<f64>() {
        Ok(h) if h.is_finite() && h > 0.0 => Ok(BandwidthArg::Fixed(h)),
        _ => Err(format!("expected 'auto' or a positive number, got '{s}'")),
    }
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    #[arg(long)]
    pub input: PathBuf,
    /// Report path; stdout when omitted.
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = KernelName::Epanechnikov)]
    pub kernel: KernelName,
    #[arg(long, default_value = "auto", value_parser = parse_bandwidth)]
    pub bandwidth: BandwidthArg,
    /// Monte Carlo points; default 1e5 times 10 per extra outcome dimension.
    #[arg(long)]
    pub mc_points: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 100)]
    pub bootstrap: usize,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    #[arg(long)]
    pub treatment_column: Option<String>,
    #[arg(long, value_delimiter = ',')]
    pub outcome_columns: Vec<String>,
}

#[derive(Debug, Args)]
pub struct RandomizedArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Control-arm bandwidth, overriding --bandwidth.
    #[arg(long, value_parser = parse_bandwidth)]
    pub bandwidth0: Option<BandwidthArg>,
    /// Treated-arm bandwidth, overriding --bandwidth.
    #[arg(long, value_parser = parse_bandwidth)]
    pub bandwidth1: Option<BandwidthArg>,
    /// Known P(A = 1) for Horvitz-Thompson; the treated fraction otherwise.
    #[arg(long)]
    pub treat_prob: Option<f64>,
}

#[derive(Debug, Args)]
pub struct MultiArgs {
    #[command(flatten)]
    pub randomized: RandomizedArgs,
    #[arg(long)]
    pub site_column: Option<String>,
}

#[derive(Debug, Args)]
pub struct ObsArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long, default_value_t = 2)]
    pub folds: usize,
    #[arg(long, value_enum, default_value_t = PropensityName::Logistic)]
    pub propensity_model: PropensityName,
    #[arg(long, value_enum, default_value_t = OutcomeName::NadarayaWatson)]
    pub outcome_model: OutcomeName,
    /// Refit nuisance models inside every bootstrap replicate.
    #[arg(long)]
    pub refit_nuisances: bool,
    #[arg(long, value_delimiter = ',')]
    pub covariate_columns: Vec<String>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long, value_enum)]
    pub scenario: Scenario,
    /// Sample size (ignored for multi-source).
    #[arg(long, default_value_t = 1000)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub sites: Option<usize>,
    #[arg(long)]
    pub per_site: Option<usize>,
    #[arg(long, default_value_t = 1)]
    pub covariates: usize,
    #[arg(long)]
    pub output: Option<PathBuf>,
}

/// Parses arguments and runs; help and version requests print and succeed.
pub fn main_with_args<I, T>(args: I) -> CliResult<()>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e)
            if matches!(
                e.kind(),
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion
            ) =>
        {
            e.print()
                .map_err(|e| CliError::io(Path::new("<stdout>"), e))?;
            return Ok(());
        }
        Err(e) => {
            let text = e.to_string();
            let first = text.lines().next().unwrap_or("invalid arguments");
            return Err(CliError::Usage(
                first.trim_start_matches("error: ").to_string(),
            ));
        }
    };
    run(&cli)
}

pub fn run(cli: &Cli) -> CliResult<()> {
    match &cli.command {
        Command::Simulate(args) => {
            let data = simulate(args)?;
            let mut buf = Vec::new();
            write_csv(&data, &mut buf)?;
            emit(args.output.as_deref(), &buf)
        }
        Command::EstimateSingle(args) => finish(&args.common, estimate_single(args)?),
        Command::EstimateMulti(args) => {
            finish(&args.randomized.common, estimate_multi_sites(args)?)
        }
        Command::EstimateObs(args) => finish(&args.common, estimate_obs(args)?),
    }
}

fn finish(common: &CommonArgs, report: Report) -> CliResult<()> {
    emit(common.output.as_deref(), report.to_json().as_bytes())
}

/// Writes the whole document or nothing: files go through a sibling
/// temporary that is renamed into place.
fn emit(path: Option<&Path>, bytes: &[u8]) -> CliResult<()> {
    let Some(path) = path else {
        let mut out = std::io::stdout().lock();
        return out
            .write_all(bytes)
            .and_then(|_| out.flush())
            .map_err(|e| CliError::io(Path::new("<stdout>"), e));
    };
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".partial");
    let tmp = PathBuf::from(tmp);
    std::fs::write(&tmp, bytes).map_err(|e| CliError::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| {
        let _ = std::fs::remove_file(&tmp);
        CliError::io(path, e)
    })
}

pub fn simulate(args: &SimulateArgs) -> CliResult<Dataset> {
    Ok(match args.scenario {
        Scenario::TwoBeta => Dataset::Randomized(gen_single_samemean(
            SameMeanScenario::two_beta(),
            args.n,
            args.seed,
        )?),
        Scenario::UniBimodal => Dataset::Randomized(gen_single_samemean(
            SameMeanScenario::uni_vs_bimodal(),
            args.n,
            args.seed,
        )?),
        Scenario::MultiSource => {
            let mut spec = SuperDistributionSpec::default();
            spec.n_sites = args.sites.unwrap_or(spec.n_sites);
            spec.n_per_site = args.per_site.unwrap_or(spec.n_per_site);
            Dataset::MultiSource(gen_multi_source(&spec, args.seed)?)
        }
        Scenario::ConfoundedLinear | Scenario::ConfoundedNull => {
            let scenario = if args.scenario == Scenario::ConfoundedLinear {
                ConfoundedScenario::linear()
            } else {
                ConfoundedScenario::null()
            };
            Dataset::Observational(gen_confounded(args.n, args.covariates, scenario, args.seed)?.0)
        }
    })
}

fn column_map(common: &CommonArgs) -> ColumnMap {
    ColumnMap {
        treatment: common.treatment_column.clone(),
        outcomes: (!common.outcome_columns.is_empty()).then(|| common.outcome_columns.clone()),
        ..ColumnMap::default()
    }
}

fn kernel(name: KernelName, dim: usize) -> CliResult<KernelSpec> {
    let family = match name {
        KernelName::Epanechnikov => KernelFamily::Epanechnikov,
        KernelName::Tgauss => KernelFamily::TruncatedGaussian {
            radius: DEFAULT_TRUNCATION,
        },
    };
    Ok(KernelSpec::new(family, dim)?)
}

fn mc_config(common: &CommonArgs, dim: usize) -> CliResult<McConfig> {
    Ok(match common.mc_points {
        Some(n) => McConfig::new(n, common.seed)?,
        None => McConfig::default_for_dim(dim, common.seed),
    })
}

fn bootstrap_config(common: &CommonArgs) -> CliResult<BootstrapConfig> {
    Ok(BootstrapConfig::new(
        common.bootstrap,
        common.alpha,
        derive_seed(common.seed, 1),
    )?)
}

/// Per-arm bandwidths; Silverman on the pooled outcomes fills any `auto`.
fn resolve_bandwidths(
    args: &RandomizedArgs,
    pooled: &Points,
    k: &KernelSpec,
) -> CliResult<(Bandwidths, BandwidthReport)> {
    let base = args.common.bandwidth;
    let chosen = [
        args.bandwidth1.unwrap_or(base),
        args.bandwidth0.unwrap_or(base),
    ];
    let auto = chosen.iter().filter(|b| **b == BandwidthArg::Auto).count();
    let silverman = if auto > 0 {
        silverman_bandwidth(pooled, k)?
    } else {
        f64::NAN
    };
    let value = |b: BandwidthArg| match b {
        BandwidthArg::Auto => silverman,
        BandwidthArg::Fixed(h) => h,
    };
    let h = Bandwidths {
        treated: value(chosen[0]),
        control: value(chosen[1]),
    };
    let rule = match auto {
        0 => "given",
        1 => "mixed",
        _ => "silverman",
    };
    Ok((
        h,
        BandwidthReport {
            treated: h.treated,
            control: h.control,
            rule: rule.into(),
        },
    ))
}

/// Difference-in-means and Horvitz-Thompson on scalar outcomes.
fn randomized_baselines(
    data: &RandomizedSample,
    treat_prob: Option<f64>,
    alpha: f64,
) -> CliResult<(Vec<BaselineEstimate>, Option<String>, f64, &'static str)> {
    let (p, source) = match treat_prob {
        Some(p) => (p, "given"),
        None => (
            data.arm_count(Arm::Treated) as f64 / data.len() as f64,
            "empirical",
        ),
    };
    if data.dim() != 1 {
        return Ok((Vec::new(), Some(scalar_note()), p, source));
    }
    let with_p = data.clone().with_treat_prob(p)?;
    Ok((
        vec![
            diff_in_means(data, alpha)?,
            horvitz_thompson(&with_p, alpha)?,
        ],
        None,
        p,
        source,
    ))
}

fn scalar_note() -> String {
    "mean-effect baselines need a scalar outcome".into()
}

#[allow(clippy::too_many_arguments)]
fn report(
    subcommand: &str,
    common: &CommonArgs,
    design: Design,
    kernel: &KernelSpec,
    bandwidth: BandwidthReport,
    mc: McConfig,
    dist: DistanceReport,
    baselines: Vec<BaselineEstimate>,
    baseline_note: Option<String>,
) -> Report {
    Report {
        subcommand: subcommand.into(),
        input: common.input.display().to_string(),
        design,
        kernel: kernel.family.name().into(),
        bandwidth,
        mc_points: mc.n_points,
        seed: common.seed,
        bootstrap: common.bootstrap,
        alpha: common.alpha,
        method: dist.method,
        estimate: dist.estimate,
        ci: Interval {
            lower: dist.ci_lower,
            upper: dist.ci_upper,
        },
        mc_stderr: dist.diagnostics.mc_stderr,
        diagnostics: dist.diagnostics,
        sites: None,
        nuisance: None,
        baselines,
        baseline_note,
    }
}

fn estimate_single(args: &RandomizedArgs) -> CliResult<Report> {
    let common = &args.common;
    let Dataset::Randomized(data) =
        ingest_csv(&common.input, Schema::Randomized, &column_map(common))?
    else {
        unreachable!("randomized schema yields a randomized sample")
    };
    let k = kernel(common.kernel, data.dim())?;
    let (h, bandwidth) = resolve_bandwidths(args, data.outcomes(), &k)?;
    let mc = mc_config(common, data.dim())?;
    let dist = ci_single(&data, h, &k, mc, bootstrap_config(common)?)?;
    let (baselines, note, p, source) = randomized_baselines(&data, args.treat_prob, common.alpha)?;
    let design = Design {
        n: data.len(),
        outcome_dim: data.dim(),
        n_treated: data.arm_count(Arm::Treated),
        n_control: data.arm_count(Arm::Control),
        n_sites: None,
        covariate_dim: None,
        treat_prob: Some(p),
        treat_prob_source: Some(source.into()),
    };
    Ok(report(
        "estimate-single",
        common,
        design,
        &k,
        bandwidth,
        mc,
        dist,
        baselines,
        note,
    ))
}

fn estimate_multi_sites(args: &MultiArgs) -> CliResult<Report> {
    let common = &args.randomized.common;
    let columns = ColumnMap {
        site: args.site_column.clone(),
        ..column_map(common)
    };
    let Dataset::MultiSource(data) = ingest_csv(&common.input, Schema::MultiSource, &columns)?
    else {
        unreachable!("multi-source schema yields a multi-source sample")
    };
    let pooled = data.pooled();
    let k = kernel(common.kernel, data.dim())?;
    let (h, bandwidth) = resolve_bandwidths(&args.randomized, pooled.outcomes(), &k)?;
    let mc = mc_config(common, data.dim())?;
    let dist = ci_multi(&data, h, &k, mc, bootstrap_config(common)?)?;
    let per_site = estimate_multi(&data, h, &k, mc)?.per_site;
    let sites = data
        .sites()
        .iter()
        .zip(data.labels())
        .zip(per_site)
        .map(|((s, label), e)| SiteReport {
            label: label.clone(),
            n: s.len(),
            estimate: e.estimate,
            mc_stderr: e.mc_stderr,
        })
        .collect();
    let (baselines, note, p, source) =
        randomized_baselines(&pooled, args.randomized.treat_prob, common.alpha)?;
    let design = Design {
        n: pooled.len(),
        outcome_dim: data.dim(),
        n_treated: pooled.arm_count(Arm::Treated),
        n_control: pooled.arm_count(Arm::Control),
        n_sites: Some(data.n_sites()),
        covariate_dim: None,
        treat_prob: Some(p),
        treat_prob_source: Some(source.into()),
    };
    let mut out = report(
        "estimate-multi",
        common,
        design,
        &k,
        bandwidth,
        mc,
        dist,
        baselines,
        note,
    );
    out.sites = Some(sites);
    Ok(out)
}

fn estimate_obs(args: &ObsArgs) -> CliResult<Report> {
    let common = &args.common;
    let columns = ColumnMap {
        covariates: (!args.covariate_columns.is_empty()).then(|| args.covariate_columns.clone()),
        ..column_map(common)
    };
    let Dataset::Observational(data) = ingest_csv(&common.input, Schema::Observational, &columns)?
    else {
        unreachable!("observational schema yields an observational sample")
    };
    let k = kernel(common.kernel, data.dim())?;
    let h = match common.bandwidth {
        BandwidthArg::Auto => silverman_bandwidth(data.outcomes(), &k)?,
        BandwidthArg::Fixed(h) => h,
    };
    let bandwidth = BandwidthReport {
        treated: h,
        control: h,
        rule: if common.bandwidth == BandwidthArg::Auto {
            "silverman"
        } else {
            "given"
        }
        .into(),
    };
    let mc = mc_config(common, data.dim())?;
    let models = NuisanceModels {
        propensity: match args.propensity_model {
            PropensityName::Logistic => PropensityModel::Logistic,
            PropensityName::Kernel => PropensityModel::KernelSmoother,
        },
        outcome: match args.outcome_model {
            OutcomeName::NadarayaWatson => OutcomeModel::NadarayaWatson,
            OutcomeName::Ridge => OutcomeModel::RidgeLinear {
                lambda: DEFAULT_RIDGE_LAMBDA,
            },
            OutcomeName::Zero => OutcomeModel::Zero,
        },
    };
    let fold_seed = derive_seed(common.seed, 2);
    let mut cfg = ObservationalConfig::new(h, k, mc);
    cfg.folds = args.folds;
    cfg.fold_seed = fold_seed;
    cfg.models = models.clone();
    let dist = ci_observational(&data, &cfg, bootstrap_config(common)?, args.refit_nuisances)?;

    let (baselines, note) = if data.dim() == 1 {
        let plan = CrossFitPlan::new(data.len(), args.folds, fold_seed)?;
        let mut b = vec![diff_in_means(&data.to_randomized(), common.alpha)?];
        if args.outcome_model != OutcomeName::Zero {
            let opts = BaselineOptions {
                alpha: common.alpha,
                bootstrap: common.bootstrap,
                seed: derive_seed(common.seed, 3),
            };
            b.push(ate_plugin_regression(&data, &models.outcome, opts)?);
        }
        b.push(ate_ipw(&data, &models.propensity, common.alpha)?);
        b.push(ate_doubly_robust(&data, &models, &plan, common.alpha)?);
        (b, None)
    } else {
        (Vec::new(), Some(scalar_note()))
    };
    let design = Design {
        n: data.len(),
        outcome_dim: data.dim(),
        n_treated: data.arm_count(Arm::Treated),
        n_control: data.arm_count(Arm::Control),
        n_sites: None,
        covariate_dim: Some(data.covariate_dim()),
        treat_prob: None,
        treat_prob_source: None,
    };
    let mut out = report(
        "estimate-obs",
        common,
        design,
        &k,
        bandwidth,
        mc,
        dist,
        baselines,
        note,
    );
    out.nuisance = Some(NuisanceReport {
        propensity: models.propensity.name().into(),
        outcome: models.outcome.name().into(),
        folds: args.folds,
        refit: args.refit_nuisances,
    });
    Ok(out)
}
