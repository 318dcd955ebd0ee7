use curreg_core::ordreg::{
    fit_fixed, fit_mixed, fixed_loglik, fixed_loglik_gradient, linear_predictor, marginal_loglik,
    predict_probs, FitOptions, Observation, OrdinalDataset, OrdregError, DEFAULT_LABELS,
};
use nalgebra::DMatrix;
use proptest::prelude::{prop_assert, prop_assert_eq, proptest, ProptestConfig};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Draw a category from cumulative probabilities logistic(α_j + η).
fn draw(alpha: &[f64], eta: f64, rng: &mut impl Rng) -> usize {
    let v: f64 = rng.random();
    alpha
        .iter()
        .position(|a| v < sigmoid(a + eta))
        .unwrap_or(alpha.len())
}

struct Truth {
    alpha: Vec<f64>,
    beta: Vec<f64>,
    b: Vec<f64>,
    sd: f64,
}

fn simulate(
    truth: &Truth,
    gram: &DMatrix<f64>,
    subjects: usize,
    per: usize,
    seed: u64,
) -> OrdinalDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 1.0).unwrap();
    let r = truth.b.len();
    let mut rows = Vec::new();
    for k in 0..subjects {
        let u = truth.sd * normal.sample(&mut rng);
        let sex = (k % 2) as f64;
        let z: Vec<f64> = (0..r).map(|_| normal.sample(&mut rng)).collect();
        let gz = gram * nalgebra::DVector::from_column_slice(&z);
        for i in 0..per {
            let size = (i as f64) - 1.0 + normal.sample(&mut rng) * 0.3;
            let x = vec![size, sex];
            let mut eta = u;
            for (b, v) in truth.beta.iter().zip(&x) {
                eta += b * v;
            }
            for (b, v) in truth.b.iter().zip(gz.iter()) {
                eta += b * v;
            }
            rows.push(Observation {
                subject: format!("k{k:04}"),
                response: draw(&truth.alpha, eta, &mut rng),
                covariates: x,
                z: z.clone(),
            });
        }
    }
    OrdinalDataset::new(
        DEFAULT_LABELS.to_vec(),
        vec!["size".into(), "sex".into()],
        r,
        rows,
    )
    .unwrap()
}

fn gram2() -> DMatrix<f64> {
    DMatrix::from_row_slice(2, 2, &[1.0, 0.2, 0.2, 0.7])
}

#[test]
fn intercept_only_mle_is_empirical_cumulative_logit() {
    let rows: Vec<Observation> = (0..30)
        .map(|i| Observation {
            subject: format!("s{i}"),
            response: i % 3,
            covariates: vec![],
            z: vec![],
        })
        .collect();
    let data = OrdinalDataset::new(DEFAULT_LABELS.to_vec(), vec![], 0, rows).unwrap();
    let m = fit_fixed(&data, &DMatrix::zeros(0, 0), &FitOptions::default()).unwrap();
    assert!((m.thresholds[0] + 2f64.ln()).abs() < 1e-6);
    assert!((m.thresholds[1] - 2f64.ln()).abs() < 1e-6);
}

#[test]
fn gradient_matches_central_differences() {
    let truth = Truth {
        alpha: vec![-0.5, 0.8],
        beta: vec![-0.7, 0.4],
        b: vec![0.5, -0.3],
        sd: 0.0,
    };
    let g = gram2();
    let data = simulate(&truth, &g, 40, 3, 11);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..10 {
        let a0: f64 = rng.random_range(-2.0..0.0);
        let alpha = vec![a0, a0 + rng.random_range(0.2..2.0)];
        let coefs: Vec<f64> = (0..4).map(|_| rng.random_range(-1.5..1.5)).collect();
        let (_, grad) = fixed_loglik_gradient(&data, &g, &alpha, &coefs).unwrap();
        let mut psi: Vec<f64> = alpha.iter().chain(&coefs).copied().collect();
        for k in 0..psi.len() {
            let h = 1e-6;
            let orig = psi[k];
            psi[k] = orig + h;
            let up = fixed_loglik(&data, &g, &psi[..2], &psi[2..]).unwrap();
            psi[k] = orig - h;
            let dn = fixed_loglik(&data, &g, &psi[..2], &psi[2..]).unwrap();
            psi[k] = orig;
            let fd = (up - dn) / (2.0 * h);
            let rel = (fd - grad[k]).abs() / grad[k].abs().max(1.0);
            assert!(rel <= 1e-5, "component {k}: analytic {} fd {fd}", grad[k]);
        }
    }
}

#[test]
fn newton_ascent_is_monotone() {
    let truth = Truth {
        alpha: vec![-0.5, 0.8],
        beta: vec![-0.7, 0.4],
        b: vec![0.5, -0.3],
        sd: 0.0,
    };
    let data = simulate(&truth, &gram2(), 100, 3, 3);
    let m = fit_fixed(&data, &gram2(), &FitOptions::default()).unwrap();
    assert!(m.fit_info.converged);
    for w in m.fit_info.trace.windows(2) {
        assert!(w[1] >= w[0]);
    }
}

#[test]
fn proportional_odds_constant_logit_difference() {
    let truth = Truth {
        alpha: vec![-0.5, 0.8],
        beta: vec![-0.7, 0.4],
        b: vec![0.5, -0.3],
        sd: 0.0,
    };
    let data = simulate(&truth, &gram2(), 80, 3, 9);
    let m = fit_fixed(&data, &gram2(), &FitOptions::default()).unwrap();
    let logit = |p: f64| (p / (1.0 - p)).ln();
    let cum = |x: &[f64], z: &[f64]| {
        let p = predict_probs(&m, x, z, 0.0).unwrap();
        vec![logit(p[0]), logit(p[0] + p[1])]
    };
    let c1 = cum(&[1.0, 0.0], &[0.2, -0.1]);
    let c2 = cum(&[-0.5, 1.0], &[-0.3, 0.6]);
    assert!(((c1[0] - c2[0]) - (c1[1] - c2[1])).abs() < 1e-10);
}

#[test]
#[allow(clippy::needless_range_loop)]
fn predictor_matches_double_loop() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let truth = Truth {
        alpha: vec![-0.5, 0.8],
        beta: vec![-0.7, 0.4],
        b: vec![0.5, -0.3],
        sd: 0.0,
    };
    let data = simulate(&truth, &gram2(), 60, 3, 2);
    let mut m = fit_fixed(&data, &gram2(), &FitOptions::default()).unwrap();
    let r = 5;
    let g = DMatrix::from_fn(r, r, |_, _| rng.random_range(-1.0..1.0));
    m.hk_gram = &g + g.transpose();
    m.functional_coefs = (0..r).map(|_| rng.random_range(-1.0..1.0)).collect();
    let z: Vec<f64> = (0..r).map(|_| rng.random_range(-2.0..2.0)).collect();
    let x = [0.3, 1.0];
    let mut oracle = m.scalar_coefs[0] * x[0] + m.scalar_coefs[1] * x[1];
    for p in 0..r {
        for l in 0..r {
            oracle += m.functional_coefs[p] * z[l] * m.hk_gram[(p, l)];
        }
    }
    let eta = linear_predictor(&m, &x, &z).unwrap();
    assert!((eta - oracle).abs() <= 1e-14 * oracle.abs().max(1.0));
    let p = predict_probs(&m, &x, &z, 0.0).unwrap();
    let c0 = sigmoid(m.thresholds[0] + eta);
    let c1 = sigmoid(m.thresholds[1] + eta);
    let direct = [c0, c1 - c0, 1.0 - c1];
    for (a, b) in p.iter().zip(direct) {
        assert!((a - b).abs() < 1e-12);
    }
    assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
}

#[test]
fn fixed_recovery_within_three_se() {
    let truth = Truth {
        alpha: vec![-0.6, 0.9],
        beta: vec![-0.8, 0.5],
        b: vec![0.6, -0.4],
        sd: 0.0,
    };
    let g = gram2();
    let params: Vec<f64> = truth
        .alpha
        .iter()
        .chain(&truth.beta)
        .chain(&truth.b)
        .copied()
        .collect();
    let reps = 40;
    let mut covered = vec![0usize; params.len()];
    for rep in 0..reps {
        let data = simulate(&truth, &g, 1000, 2, 100 + rep);
        let m = fit_fixed(&data, &g, &FitOptions::default()).unwrap();
        let est: Vec<f64> = m
            .thresholds
            .iter()
            .chain(&m.scalar_coefs)
            .chain(&m.functional_coefs)
            .copied()
            .collect();
        let se: Vec<f64> = m
            .fit_info
            .se_thresholds
            .iter()
            .chain(&m.fit_info.se_scalar)
            .chain(&m.fit_info.se_functional)
            .copied()
            .collect();
        for k in 0..params.len() {
            if (est[k] - params[k]).abs() <= 3.0 * se[k] {
                covered[k] += 1;
            }
        }
    }
    for (k, c) in covered.iter().enumerate() {
        assert!(
            *c as f64 >= 0.95 * reps as f64,
            "parameter {k} covered {c}/{reps}"
        );
    }
}

#[test]
fn mixed_laplace_close_to_quadrature() {
    let truth = Truth {
        alpha: vec![-0.6, 0.9],
        beta: vec![-0.8, 0.5],
        b: vec![0.6, -0.4],
        sd: 1.0,
    };
    let g = gram2();
    let data = simulate(&truth, &g, 20, 3, 77);
    let laplace = fit_mixed(
        &data,
        &g,
        &FitOptions {
            nq: 1,
            ..FitOptions::default()
        },
    )
    .unwrap();
    let aghq = fit_mixed(&data, &g, &FitOptions::default()).unwrap();
    let rel = (laplace.fit_info.loglik - aghq.fit_info.loglik).abs() / aghq.fit_info.loglik.abs();
    assert!(rel <= 0.005, "relative gap {rel}");
    for (a, b) in laplace.scalar_coefs.iter().zip(&aghq.scalar_coefs) {
        assert_eq!(a.signum(), b.signum());
    }
    for (a, b) in laplace.functional_coefs.iter().zip(&aghq.functional_coefs) {
        assert_eq!(a.signum(), b.signum());
    }
    let c: Vec<f64> = aghq
        .scalar_coefs
        .iter()
        .chain(&aghq.functional_coefs)
        .copied()
        .collect();
    let zero = marginal_loglik(&data, &g, &aghq.thresholds, &c, 0.0, 15).unwrap();
    assert_eq!(zero, fixed_loglik(&data, &g, &aghq.thresholds, &c).unwrap());
}

#[test]
fn mixed_falls_back_without_repeated_subjects() {
    let truth = Truth {
        alpha: vec![-0.6, 0.9],
        beta: vec![-0.8, 0.5],
        b: vec![0.6, -0.4],
        sd: 1.0,
    };
    let data = simulate(&truth, &gram2(), 60, 1, 4);
    let m = fit_mixed(&data, &gram2(), &FitOptions::default()).unwrap();
    assert!(m.random_intercept_sd.is_none());
    assert!(!m.fit_info.warnings.is_empty());
}

#[test]
fn mixed_sd_recovery() {
    let truth = Truth {
        alpha: vec![-0.6, 0.9],
        beta: vec![-0.8, 0.5],
        b: vec![0.6, -0.4],
        sd: 1.0,
    };
    let g = gram2();
    let reps = 10;
    let mut inside = 0;
    for rep in 0..reps {
        let data = simulate(&truth, &g, 200, 3, 500 + rep);
        let m = fit_mixed(&data, &g, &FitOptions::default()).unwrap();
        let sd = m.random_intercept_sd.unwrap();
        if (0.7..=1.3).contains(&sd) {
            inside += 1;
        }
    }
    assert!(
        inside as f64 >= 0.9 * reps as f64,
        "σ̂ in range for {inside}/{reps}"
    );
}

#[test]
fn separation_reports_capped_model() {
    let rows: Vec<Observation> = (0..30)
        .map(|i| Observation {
            subject: format!("s{i}"),
            response: if i % 2 == 0 { 0 } else { 1 + (i / 2) % 2 },
            covariates: vec![(i % 2) as f64],
            z: vec![],
        })
        .collect();
    let data = OrdinalDataset::new(DEFAULT_LABELS.to_vec(), vec!["flag".into()], 0, rows).unwrap();
    match fit_fixed(&data, &DMatrix::zeros(0, 0), &FitOptions::default()) {
        Err(OrdregError::Separation { model }) => assert!(model.scalar_coefs[0].abs() > 5.0),
        other => panic!("expected separation, got {other:?}"),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn row_order_does_not_change_fit(seed in 0u64..1000) {
        let truth = Truth { alpha: vec![-0.5, 0.8], beta: vec![-0.7, 0.4], b: vec![0.5, -0.3], sd: 0.0 };
        let g = gram2();
        let data = simulate(&truth, &g, 30, 3, seed);
        let mut rows = data.rows().to_vec();
        rows.shuffle(&mut ChaCha8Rng::seed_from_u64(seed + 1));
        let shuffled = OrdinalDataset::new(data.labels().to_vec(), data.covariate_names().to_vec(), data.r(), rows).unwrap();
        let a = fit_fixed(&data, &g, &FitOptions::default());
        let b = fit_fixed(&shuffled, &g, &FitOptions::default());
        match (a, b) {
            (Ok(a), Ok(b)) => prop_assert_eq!(a, b),
            (Err(a), Err(b)) => prop_assert_eq!(a.to_string(), b.to_string()),
            _ => prop_assert!(false, "outcomes differ"),
        }
    }

    #[test]
    fn constant_feature_shift_keeps_predictions(shift in -3.0f64..3.0) {
        // a constant added to every feature vector is absorbed by the thresholds
        let truth = Truth { alpha: vec![-0.5, 0.8], beta: vec![-0.7, 0.4], b: vec![0.5, -0.3], sd: 0.0 };
        let g = DMatrix::<f64>::identity(2, 2);
        let data = simulate(&truth, &g, 60, 3, 8);
        let rows: Vec<Observation> = data.rows().iter().map(|r| Observation {
            z: r.z.iter().map(|v| v + shift).collect(),
            ..r.clone()
        }).collect();
        let moved = OrdinalDataset::new(data.labels().to_vec(), data.covariate_names().to_vec(), 2, rows).unwrap();
        let m0 = fit_fixed(&data, &g, &FitOptions::default()).unwrap();
        let m1 = fit_fixed(&moved, &g, &FitOptions::default()).unwrap();
        for (r0, r1) in data.rows().iter().zip(moved.rows()) {
            let p0 = predict_probs(&m0, &r0.covariates, &r0.z, 0.0).unwrap();
            let p1 = predict_probs(&m1, &r1.covariates, &r1.z, 0.0).unwrap();
            for (a, b) in p0.iter().zip(&p1) {
                prop_assert!((a - b).abs() < 1e-6);
            }
        }
        for (a, b) in m0.functional_coefs.iter().zip(&m1.functional_coefs) {
            prop_assert!((a - b).abs() < 1e-6);
        }
    }
}
