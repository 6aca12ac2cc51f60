use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use cfdist::estimators::silverman_bandwidth;
use cfdist::simulate::{gen_multi_source, SuperDistributionSpec};
use cfdist::{ci_multi, Bandwidths, BootstrapConfig, KernelSpec, McConfig};
use cfdist_cli::{ingest_csv, write_csv, CliError, ColumnMap, Dataset, Schema};
use serde_json::Value;
use tempfile::TempDir;

fn cfdist(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cfdist"))
        .args(args)
        .output()
        .unwrap()
}

fn write(dir: &TempDir, name: &str, text: &str) -> PathBuf {
    let p = dir.path().join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn simulate(dir: &TempDir, scenario: &str, extra: &[&str]) -> PathBuf {
    let p = dir.path().join(format!("{scenario}.csv"));
    let mut args = vec!["simulate", "--scenario", scenario, "--output", s(&p)];
    args.extend_from_slice(extra);
    let out = cfdist(&args);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    p
}

fn json(out: &Output) -> Value {
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).unwrap()
}

fn error_line(out: &Output) -> String {
    assert!(!out.status.success());
    assert!(out.stdout.is_empty());
    let err = String::from_utf8(out.stderr.clone()).unwrap();
    assert_eq!(err.lines().count(), 1, "{err}");
    err
}

#[test]
fn two_row_file() {
    let dir = TempDir::new().unwrap();
    let p = write(&dir, "d.csv", "a,y\n1,0.5\n0,-1\n");
    let Dataset::Randomized(d) = ingest_csv(&p, Schema::Randomized, &ColumnMap::default()).unwrap()
    else {
        panic!()
    };
    assert_eq!(d.len(), 2);
}

#[test]
fn non_binary_treatment_reports_row() {
    let dir = TempDir::new().unwrap();
    let rows = ["1,0", "0,1", "1,2", "0,3", "1,4", "0,5", "2,6", "1,7"];
    let p = write(&dir, "d.csv", &format!("a,y\n{}\n", rows.join("\n")));
    let err = ingest_csv(&p, Schema::Randomized, &ColumnMap::default()).unwrap_err();
    assert!(matches!(err, CliError::Value { row: 7, .. }), "{err:?}");
    let line = error_line(&cfdist(&["estimate-single", "--input", s(&p)]));
    assert!(
        line.starts_with("error: ingest::ValueError: row 7:"),
        "{line}"
    );
}

#[test]
fn sites_keep_first_appearance_order() {
    let dir = TempDir::new().unwrap();
    let p = write(
        &dir,
        "m.csv",
        "site,a,y\ns2,1,0\ns1,0,1\ns2,0,2\ns1,1,3\ns2,1,4\n",
    );
    let Dataset::MultiSource(m) =
        ingest_csv(&p, Schema::MultiSource, &ColumnMap::default()).unwrap()
    else {
        panic!()
    };
    assert_eq!(m.n_sites(), 2);
    assert_eq!(m.labels(), &["s2".to_string(), "s1".to_string()]);
    assert_eq!(m.sites()[0].outcomes().as_slice(), &[0.0, 2.0, 4.0]);
}

#[test]
fn bad_header_is_schema_error() {
    let dir = TempDir::new().unwrap();
    let p = write(&dir, "d.csv", "treatment,y\n1,0\n1,1\n");
    let line = error_line(&cfdist(&["estimate-single", "--input", s(&p)]));
    assert!(line.starts_with("error: ingest::SchemaError:"), "{line}");
    let ok = cfdist(&[
        "estimate-single",
        "--input",
        s(&p),
        "--treatment-column",
        "treatment",
        "--bootstrap",
        "20",
    ]);
    // The mapping resolves the header; both rows are treated.
    assert!(error_line(&ok).contains("density::EmptyArm"));
}

#[test]
fn unreadable_input_writes_nothing() {
    let dir = TempDir::new().unwrap();
    let report = dir.path().join("report.json");
    let missing = dir.path().join("missing.csv");
    let line = error_line(&cfdist(&[
        "estimate-single",
        "--input",
        s(&missing),
        "--output",
        s(&report),
    ]));
    assert!(line.starts_with("error: io::IoError:"), "{line}");
    assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 0);
}

#[test]
fn usage_errors_are_single_line() {
    let line = error_line(&cfdist(&[
        "estimate-single",
        "--input",
        "x.csv",
        "--bandwidth",
        "-1",
    ]));
    assert!(line.starts_with("error: cli::UsageError:"), "{line}");
    let dir = TempDir::new().unwrap();
    let p = simulate(&dir, "two-beta", &["--n", "200"]);
    let line = error_line(&cfdist(&[
        "estimate-single",
        "--input",
        s(&p),
        "--alpha",
        "1.5",
    ]));
    assert!(line.starts_with("error: config::InvalidConfig:"), "{line}");
    let line = error_line(&cfdist(&[
        "estimate-single",
        "--input",
        s(&p),
        "--mc-points",
        "10",
    ]));
    assert!(line.starts_with("error: config::InvalidConfig:"), "{line}");
}

#[test]
fn simulate_round_trips() {
    let dir = TempDir::new().unwrap();
    let cases: [(&str, &[&str], Schema); 5] = [
        ("two-beta", &["--n", "300"], Schema::Randomized),
        ("uni-bimodal", &["--n", "300"], Schema::Randomized),
        (
            "multi-source",
            &["--sites", "4", "--per-site", "30"],
            Schema::MultiSource,
        ),
        (
            "confounded-linear",
            &["--n", "300", "--covariates", "2"],
            Schema::Observational,
        ),
        ("confounded-null", &["--n", "300"], Schema::Observational),
    ];
    for (scenario, extra, schema) in cases {
        let p = simulate(&dir, scenario, extra);
        let original = std::fs::read(&p).unwrap();
        let data = ingest_csv(&p, schema, &ColumnMap::default()).unwrap();
        let mut again = Vec::new();
        write_csv(&data, &mut again).unwrap();
        assert!(original == again, "{scenario}");
    }
}

#[test]
fn reports_are_byte_identical() {
    let dir = TempDir::new().unwrap();
    let p = simulate(&dir, "uni-bimodal", &["--n", "400", "--seed", "2"]);
    let args = [
        "estimate-single",
        "--input",
        s(&p),
        "--seed",
        "5",
        "--bootstrap",
        "40",
    ];
    let a = cfdist(&args);
    assert!(a.status.success());
    assert_eq!(a.stdout, cfdist(&args).stdout);
    let other = cfdist(&[
        "estimate-single",
        "--input",
        s(&p),
        "--seed",
        "6",
        "--bootstrap",
        "40",
    ]);
    assert_ne!(a.stdout, other.stdout);
}

#[test]
fn same_mean_pattern() {
    let dir = TempDir::new().unwrap();
    let p = simulate(&dir, "uni-bimodal", &["--n", "1000", "--seed", "11"]);
    let r = json(&cfdist(&["estimate-single", "--input", s(&p)]));
    assert_eq!(r["bootstrap"], 100);
    assert_eq!(r["bandwidth"]["rule"], "silverman");
    assert!(r["ci"]["lower"].as_f64().unwrap() > 0.0);
    for b in r["baselines"].as_array().unwrap() {
        assert!(
            b["ci_lower"].as_f64().unwrap() <= 0.0 && 0.0 <= b["ci_upper"].as_f64().unwrap(),
            "{b}"
        );
    }
    assert_eq!(r["baselines"].as_array().unwrap().len(), 2);
}

#[test]
fn report_fields_and_output_file() {
    let dir = TempDir::new().unwrap();
    let p = simulate(&dir, "two-beta", &["--n", "300"]);
    let out = dir.path().join("r.json");
    let status = cfdist(&[
        "estimate-single",
        "--input",
        s(&p),
        "--output",
        s(&out),
        "--kernel",
        "tgauss",
        "--bandwidth",
        "0.1",
        "--bandwidth0",
        "0.2",
        "--mc-points",
        "5000",
        "--bootstrap",
        "20",
        "--alpha",
        "0.1",
        "--treat-prob",
        "0.5",
        "--seed",
        "9",
    ]);
    assert!(status.status.success() && status.stdout.is_empty());
    let r: Value = serde_json::from_slice(&std::fs::read(&out).unwrap()).unwrap();
    assert_eq!(r["kernel"], "tgauss");
    assert_eq!(r["bandwidth"]["treated"], 0.1);
    assert_eq!(r["bandwidth"]["control"], 0.2);
    assert_eq!(r["bandwidth"]["rule"], "given");
    assert_eq!(r["mc_points"], 5000);
    assert_eq!(r["seed"], 9);
    assert_eq!(r["alpha"], 0.1);
    assert_eq!(r["design"]["treat_prob_source"], "given");
    assert_eq!(r["diagnostics"]["bootstrap_replicates"], 20);
    assert!(r["mc_stderr"].as_f64().unwrap() > 0.0);
    let (lo, est, hi) = (
        r["ci"]["lower"].as_f64().unwrap(),
        r["estimate"].as_f64().unwrap(),
        r["ci"]["upper"].as_f64().unwrap(),
    );
    assert!(lo <= est && est <= hi);
}

#[test]
fn vector_outcomes_skip_baselines() {
    let dir = TempDir::new().unwrap();
    let mut text = String::from("a,y,y2\n");
    for i in 0..200 {
        let v = (i as f64 * 0.37).sin();
        text += &format!(
            "{},{},{}\n",
            i % 2,
            v + (i % 2) as f64,
            (i as f64 * 0.11).cos()
        );
    }
    let p = write(&dir, "v.csv", &text);
    let r = json(&cfdist(&[
        "estimate-single",
        "--input",
        s(&p),
        "--bootstrap",
        "20",
        "--mc-points",
        "20000",
    ]));
    assert_eq!(r["design"]["outcome_dim"], 2);
    assert!(r["baselines"].as_array().unwrap().is_empty());
    assert!(r["baseline_note"].is_string());
}

#[test]
fn multi_report_matches_library() {
    let dir = TempDir::new().unwrap();
    let p = simulate(&dir, "multi-source", &["--seed", "0"]);
    let r = json(&cfdist(&[
        "estimate-multi",
        "--input",
        s(&p),
        "--bootstrap",
        "30",
        "--seed",
        "4",
    ]));
    let data = gen_multi_source(&SuperDistributionSpec::default(), 0).unwrap();
    let k = KernelSpec::epanechnikov(1).unwrap();
    let h = silverman_bandwidth(data.pooled().outcomes(), &k).unwrap();
    let lib = ci_multi(
        &data,
        Bandwidths::equal(h),
        &k,
        McConfig::default_for_dim(1, 4),
        BootstrapConfig::new(30, 0.05, cfdist::rng::derive_seed(4, 1)).unwrap(),
    )
    .unwrap();
    assert_eq!(r["estimate"].as_f64().unwrap(), lib.estimate);
    assert_eq!(r["ci"]["upper"].as_f64().unwrap(), lib.ci_upper);
    assert_eq!(r["design"]["n_sites"], 50);
    let sites = r["sites"].as_array().unwrap();
    assert_eq!(sites.len(), 50);
    assert_eq!(sites[0]["label"], "site0");
    let mean = sites
        .iter()
        .map(|x| x["estimate"].as_f64().unwrap())
        .sum::<f64>()
        / 50.0;
    assert!((mean - lib.estimate).abs() < 1e-12);
}

#[test]
fn observational_report() {
    let dir = TempDir::new().unwrap();
    let p = simulate(&dir, "confounded-linear", &["--n", "2000", "--seed", "1"]);
    let r = json(&cfdist(&[
        "estimate-obs",
        "--input",
        s(&p),
        "--bootstrap",
        "20",
        "--folds",
        "3",
        "--outcome-model",
        "ridge",
    ]));
    assert_eq!(r["nuisance"]["folds"], 3);
    assert_eq!(r["nuisance"]["outcome"], "ridge");
    assert_eq!(r["design"]["covariate_dim"], 1);
    let names: Vec<&str> = r["baselines"]
        .as_array()
        .unwrap()
        .iter()
        .map(|b| b["name"].as_str().unwrap())
        .collect();
    assert_eq!(
        names,
        [
            "difference-in-means",
            "plug-in regression",
            "inverse-probability-weighting",
            "doubly-robust"
        ]
    );
    // True mean effect is 2; the unadjusted contrast is confounded upward.
    for b in &r["baselines"].as_array().unwrap()[1..] {
        assert!((b["estimate"].as_f64().unwrap() - 2.0).abs() < 0.2, "{b}");
    }
    assert!(r["baselines"][0]["estimate"].as_f64().unwrap() > 2.2);
    let refit = json(&cfdist(&[
        "estimate-obs",
        "--input",
        s(&p),
        "--bootstrap",
        "20",
        "--refit-nuisances",
    ]));
    assert_eq!(refit["nuisance"]["refit"], true);
    assert_eq!(
        refit["estimate"],
        json(&cfdist(&[
            "estimate-obs",
            "--input",
            s(&p),
            "--bootstrap",
            "20"
        ]))["estimate"]
    );
}
