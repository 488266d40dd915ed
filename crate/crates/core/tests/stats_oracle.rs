//! Student-t machinery against independent oracles: closed forms for small
//! degrees of freedom and adaptive Simpson quadrature of the t density.

use patchgroup_core::metrics::{
    betai, ln_gamma, mean_std, paired_t_test, student_t_two_sided_p, summarize_runs, EvalReport,
    PairedTTest,
};

fn t_pdf(x: f64, df: f64) -> f64 {
    let c = (ln_gamma((df + 1.0) / 2.0) - ln_gamma(df / 2.0)).exp()
        / (df * core::f64::consts::PI).sqrt();
    c * (1.0 + x * x / df).powf(-(df + 1.0) / 2.0)
}

fn simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        let x = a + i as f64 * h;
        s += f(x) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * h / 3.0
}

/// Two-sided tail by quadrature: 2 * integral from |t| to a far cutoff.
fn oracle_two_sided_p(t: f64, df: usize) -> f64 {
    let v = df as f64;
    let t = t.abs();
    // integrate the central mass instead and subtract: finite, well-behaved
    let central = simpson(&|x| t_pdf(x, v), -t, t, 200_000);
    1.0 - central
}

#[test]
fn hand_case_t_sqrt_three() {
    // d = {0.1, 0.2, 0.0}
    let a = [0.1, 0.2, 0.0];
    let b = [0.0, 0.0, 0.0];
    match paired_t_test(&a, &b).unwrap() {
        PairedTTest::Ok { t, df, p } => {
            assert!((t - 3.0f64.sqrt()).abs() < 1e-12);
            assert_eq!(df, 2);
            let oracle = oracle_two_sided_p(t, df);
            assert!((p - oracle).abs() < 1e-9, "p {p} vs quadrature {oracle}");
            // closed form for df = 2
            let closed = 1.0 - t / (t * t + 2.0).sqrt();
            assert!((p - closed).abs() < 1e-12);
        }
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn p_values_match_quadrature_oracle() {
    for &df in &[1usize, 2, 3, 5, 9, 20] {
        for &t in &[0.0, 0.3, 1.0, 1.732, 2.5, 4.0] {
            let p = student_t_two_sided_p(t, df);
            let oracle = oracle_two_sided_p(t, df);
            assert!(
                (p - oracle).abs() < 1e-9,
                "df={df} t={t}: p={p} oracle={oracle}"
            );
        }
    }
}

#[test]
fn p_values_match_closed_forms() {
    for &t in &[0.1, 0.7, 1.5, 3.0, 8.0] {
        // df = 1: p = 1 - (2/pi) atan(|t|)
        let p1 = student_t_two_sided_p(t, 1);
        let c1 = 1.0 - 2.0 / core::f64::consts::PI * t.atan();
        assert!((p1 - c1).abs() < 1e-12, "df=1 t={t}");
        // df = 2: p = 1 - t/sqrt(t^2+2)
        let p2 = student_t_two_sided_p(t, 2);
        let c2 = 1.0 - t / (t * t + 2.0).sqrt();
        assert!((p2 - c2).abs() < 1e-12, "df=2 t={t}");
    }
}

#[test]
fn incomplete_beta_symmetry_and_edges() {
    for &(a, b, x) in &[(0.5f64, 1.0f64, 0.3f64), (2.0, 3.0, 0.7), (1.0, 1.0, 0.25), (4.5, 0.5, 0.9)] {
        let lhs = betai(a, b, x);
        let rhs = 1.0 - betai(b, a, 1.0 - x);
        assert!((lhs - rhs).abs() < 1e-12, "symmetry at ({a},{b},{x})");
    }
    assert_eq!(betai(2.0, 3.0, 0.0), 0.0);
    assert_eq!(betai(2.0, 3.0, 1.0), 1.0);
    // I_x(1,1) = x
    assert!((betai(1.0, 1.0, 0.42) - 0.42).abs() < 1e-12);
}

#[test]
fn infinite_t_flags_zero_variance() {
    // binary-exact values so the differences are exactly constant
    let a = [0.25, 0.5, 0.75];
    let b = [0.0, 0.25, 0.5]; // d constant 0.25
    match paired_t_test(&a, &b).unwrap() {
        PairedTTest::InfiniteT { positive, df } => {
            assert!(positive);
            assert_eq!(df, 2);
        }
        other => panic!("expected infinite-t flag, got {other:?}"),
    }
}

fn report(seed: u64, vals: [f64; 4]) -> EvalReport {
    EvalReport {
        run_seed: seed,
        n_patients: 10,
        n_patches: 100,
        a_patient: vals[0],
        a_patch: vals[1],
        auc_patient: vals[2],
        auc_patch: vals[3],
        roc_patch: vec![],
        roc_patient: vec![],
    }
}

/// summarize_runs must agree exactly with a plain two-pass recomputation.
#[test]
fn summary_matches_two_pass_oracle() {
    let a: Vec<EvalReport> = (0..6)
        .map(|i| report(i, [0.8 + 0.01 * i as f64, 0.7, 0.9 - 0.005 * i as f64, 0.85]))
        .collect();
    let b: Vec<EvalReport> = (0..6)
        .map(|i| report(i, [0.75 + 0.02 * i as f64, 0.65, 0.8, 0.8 + 0.01 * i as f64]))
        .collect();
    let summary = summarize_runs(&a, &b, "ours", "baseline").unwrap();
    assert_eq!(summary.n_runs, 6);

    let patient_a: Vec<f64> = a.iter().map(|r| r.a_patient).collect();
    // two-pass oracle
    let mean = patient_a.iter().sum::<f64>() / patient_a.len() as f64;
    let var = patient_a.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>()
        / (patient_a.len() - 1) as f64;
    let ms = &summary.metrics[0];
    assert_eq!(ms.name, "patient_accuracy");
    assert_eq!(ms.a.mean, mean);
    assert_eq!(ms.a.std.unwrap(), var.sqrt());

    // the paired test on the same metric agrees with a direct call
    let patient_b: Vec<f64> = b.iter().map(|r| r.a_patient).collect();
    let direct = paired_t_test(&patient_a, &patient_b).unwrap();
    assert_eq!(ms.test.unwrap(), direct);

    // mean_std agrees too
    let again = mean_std(&patient_a).unwrap();
    assert_eq!(again.mean, mean);
    assert_eq!(again.std.unwrap(), var.sqrt());
}
