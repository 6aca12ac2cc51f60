use cfdist::simulate::{
    gen_confounded, gen_multi_source_with_laws, gen_single_samemean, ConfoundedScenario,
    SameMeanScenario, SuperDistributionSpec,
};
use cfdist::Arm;

/// Sample mean and variance with their standard errors.
fn moments(v: &[f64]) -> ((f64, f64), (f64, f64)) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let dev2: Vec<f64> = v.iter().map(|x| (x - mean).powi(2)).collect();
    let var = dev2.iter().sum::<f64>() / (n - 1.0);
    let var_sd = (dev2.iter().map(|d| (d - var).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    ((mean, (var / n).sqrt()), (var, var_sd / n.sqrt()))
}

fn check(v: &[f64], mean: f64, var: f64, what: &str) {
    let ((m, m_se), (s2, s2_se)) = moments(v);
    assert!((m - mean).abs() <= 4.0 * m_se, "{what}: mean {m} vs {mean}");
    assert!(
        (s2 - var).abs() <= 4.0 * s2_se,
        "{what}: variance {s2} vs {var}"
    );
}

#[test]
fn same_mean_moments() {
    let s = gen_single_samemean(SameMeanScenario::uni_vs_bimodal(), 200_000, 11).unwrap();
    check(
        s.arm_outcomes(Arm::Control).as_slice(),
        0.0,
        1.0,
        "unimodal",
    );
    check(
        s.arm_outcomes(Arm::Treated).as_slice(),
        0.0,
        4.0 + 0.5625,
        "bimodal",
    );
    let b = gen_single_samemean(SameMeanScenario::two_beta(), 200_000, 12).unwrap();
    check(
        b.arm_outcomes(Arm::Control).as_slice(),
        0.5,
        1.0 / 20.0,
        "beta(2,2)",
    );
    check(
        b.arm_outcomes(Arm::Treated).as_slice(),
        0.5,
        1.0 / 8.0,
        "beta(1/2,1/2)",
    );
    let share = s.arm_count(Arm::Treated) as f64 / s.len() as f64;
    assert!((share - 0.5).abs() <= 4.0 * (0.25 / s.len() as f64).sqrt());
}

#[test]
fn site_moments() {
    let spec = SuperDistributionSpec {
        n_sites: 3,
        n_per_site: 100_000,
        ..Default::default()
    };
    let (data, laws) = gen_multi_source_with_laws(&spec, 6).unwrap();
    for (site, law) in data.sites().iter().zip(&laws) {
        check(
            site.arm_outcomes(Arm::Control).as_slice(),
            0.0,
            law.u1 * law.u1,
            "control",
        );
        let w = law.w;
        let var =
            w * (1.0 - w) * law.u2 * law.u2 + w * law.u3 * law.u3 + (1.0 - w) * law.u4 * law.u4;
        check(
            site.arm_outcomes(Arm::Treated).as_slice(),
            0.0,
            var,
            "mixture",
        );
        assert!(
            (0.5..1.5).contains(&law.u1)
                && (1.0..5.0).contains(&law.u2)
                && (0.25..0.75).contains(&law.w)
        );
    }
}

#[test]
fn confounded_moments() {
    let (data, law) = gen_confounded(100_000, 2, ConfoundedScenario::linear(), 3).unwrap();
    let x1: Vec<f64> = data.covariates().rows().map(|r| r[0]).collect();
    check(&x1, 0.5, 1.0 / 12.0, "x1");
    let a: Vec<f64> = data.arms().iter().map(|a| a.indicator() as f64).collect();
    // P(A = 1) integrates expit(2x - 1) over [0, 1], which is 1/2 by symmetry.
    let ((share, share_se), _) = moments(&a);
    assert!((share - 0.5).abs() <= 4.0 * share_se, "{share}");
    // E[Y] = 2 P(A = 1) + 3 E[x1]; Var via total variance with Cov(A, x1).
    let y = data.outcomes().as_slice();
    let ((m, m_se), _) = moments(y);
    assert!((m - 2.5).abs() <= 4.0 * m_se, "{m}");
    assert_eq!(law.propensity(&[0.5, 0.0]), 0.5);
    let (null, _) = gen_confounded(100_000, 1, ConfoundedScenario::null(), 4).unwrap();
    for arm in Arm::BOTH {
        let rows: Vec<f64> = (0..null.len())
            .filter(|&i| null.arms()[i] == arm)
            .map(|i| null.outcomes().row(i)[0] - 3.0 * null.covariates().row(i)[0])
            .collect();
        check(&rows, 0.0, 1.0, "null residual");
    }
}
