use nalgebra::{DMatrix, DVector};

use super::fixed::{
    alpha_from_theta, assemble_model, check_categories, fit_fixed, fixed_eval, gradient_to_theta,
    split_se, standard_errors, theta_from_alpha, Design,
};
use super::model::{FitOptions, OrdinalModel};
use super::quadrature::gauss_hermite;
use super::{OrdinalDataset, OrdregError};

const LOG_SQRT_2_OVER_2PI: f64 = -0.572_364_942_924_700_1; // ½ln2 − ½ln(2π) = −½lnπ

struct Rule {
    nodes: Vec<f64>,
    log_weights: Vec<f64>,
}

impl Rule {
    fn new(nq: usize) -> Self {
        let (nodes, weights) = gauss_hermite(nq);
        Self {
            nodes,
            log_weights: weights.iter().map(|w| w.ln()).collect(),
        }
    }
}

/// Conditional log-density `g(u) = Σ_i ℓ_i(u) − u²/(2σ²)` of one subject and
/// its first two u-derivatives.
fn subject_g(
    d: &Design,
    rows: &[usize],
    etas: &[f64],
    alpha: &[f64],
    inv_s2: f64,
    u: f64,
) -> (f64, f64, f64) {
    let (mut g, mut gu, mut guu) = (-0.5 * u * u * inv_s2, -u * inv_s2, -inv_s2);
    for (&i, &eta) in rows.iter().zip(etas) {
        let c = d.cell(i, alpha, eta + u);
        g += c.logp;
        gu += c.du();
        guu += c.duu();
    }
    (g, gu, guu)
}

/// Mode of `g` by safeguarded Newton (g is strictly concave).
fn subject_mode(d: &Design, rows: &[usize], etas: &[f64], alpha: &[f64], inv_s2: f64) -> f64 {
    let mut u = 0.0;
    let (mut g, mut gu, mut guu) = subject_g(d, rows, etas, alpha, inv_s2, u);
    for _ in 0..200 {
        let step = -gu / guu;
        if !step.is_finite() || step.abs() <= 1e-13 * (1.0 + u.abs()) {
            break;
        }
        let mut t = 1.0;
        let mut moved = false;
        for _ in 0..60 {
            let cand = u + t * step;
            let (g2, gu2, guu2) = subject_g(d, rows, etas, alpha, inv_s2, cand);
            if g2 >= g {
                u = cand;
                (g, gu, guu) = (g2, gu2, guu2);
                moved = true;
                break;
            }
            t *= 0.5;
        }
        if !moved {
            break;
        }
    }
    u
}

/// Adaptive Gauss–Hermite marginal log-likelihood over (α, γ, s = log σ)
/// and, optionally, its exact gradient (including the dependence of the
/// adaptive centre and scale on the parameters).
fn mixed_eval(
    d: &Design,
    alpha: &[f64],
    gamma: &[f64],
    s: f64,
    rule: &Rule,
    want_grad: bool,
) -> (f64, Vec<f64>) {
    let q = d.q();
    let dim = q + 1;
    let sigma = s.exp();
    let inv_s2 = 1.0 / (sigma * sigma);
    let sqrt2 = std::f64::consts::SQRT_2;
    let mut total = 0.0;
    let mut grad = vec![0.0; if want_grad { dim } else { 0 }];

    let nq = rule.nodes.len();
    let mut terms = vec![0.0; nq];
    let mut node_u = vec![0.0; nq];
    let mut node_gu = vec![0.0; nq];
    let mut node_gpsi = vec![vec![0.0; dim]; if want_grad { nq } else { 0 }];

    for range in &d.subjects {
        let rows: Vec<usize> = range.clone().collect();
        let etas: Vec<f64> = rows.iter().map(|&i| d.eta(i, gamma)).collect();
        let u_hat = subject_mode(d, &rows, &etas, alpha, inv_s2);

        let mut guu = -inv_s2;
        let mut guuu = 0.0;
        let mut g_upsi = vec![0.0; if want_grad { dim } else { 0 }];
        let mut g_uupsi = vec![0.0; if want_grad { dim } else { 0 }];
        for (&i, &eta) in rows.iter().zip(&etas) {
            let c = d.cell(i, alpha, eta + u_hat);
            guu += c.duu();
            if want_grad {
                guuu += c.duuu();
                d.add_cut_gradients(i, c.aa + c.al, c.al + c.ll, &mut g_upsi);
                d.add_cut_gradients(
                    i,
                    c.aaa + 2.0 * c.aal + c.all,
                    c.aal + 2.0 * c.all + c.lll,
                    &mut g_uupsi,
                );
            }
        }
        let h = -guu;
        let sig_hat = 1.0 / h.sqrt();

        for k in 0..nq {
            let x = rule.nodes[k];
            let u = u_hat + sqrt2 * sig_hat * x;
            let mut g = -0.5 * u * u * inv_s2;
            let mut gu = -u * inv_s2;
            if want_grad {
                node_gpsi[k].iter_mut().for_each(|v| *v = 0.0);
            }
            for (&i, &eta) in rows.iter().zip(&etas) {
                let c = d.cell(i, alpha, eta + u);
                g += c.logp;
                gu += c.du();
                if want_grad {
                    d.add_cut_gradients(i, c.a, c.l, &mut node_gpsi[k]);
                }
            }
            if want_grad {
                node_gpsi[k][q] = u * u * inv_s2;
            }
            terms[k] = rule.log_weights[k] + x * x + g;
            node_u[k] = u;
            node_gu[k] = gu;
        }
        let top = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = terms.iter().map(|t| (t - top).exp()).sum();
        let lse = top + sum.ln();
        total += LOG_SQRT_2_OVER_2PI + sig_hat.ln() - s + lse;

        if want_grad {
            g_upsi[q] = 2.0 * u_hat * inv_s2;
            g_uupsi[q] = 2.0 * inv_s2;
            for p in 0..dim {
                let du_hat = g_upsi[p] / h;
                let dh = -(g_uupsi[p] + guuu * du_hat);
                let dlog_sig = -0.5 * dh / h;
                let dsig = sig_hat * dlog_sig;
                let mut acc = dlog_sig - if p == q { 1.0 } else { 0.0 };
                for k in 0..nq {
                    let pi = (terms[k] - lse).exp();
                    let du = du_hat + sqrt2 * rule.nodes[k] * dsig;
                    acc += pi * (node_gpsi[k][p] + node_gu[k] * du);
                }
                grad[p] += acc;
            }
        }
    }
    (total, grad)
}

fn check(
    d: &Design,
    thresholds: &[f64],
    coefs: &[f64],
    sd: f64,
    nq: usize,
) -> Result<(), OrdregError> {
    if thresholds.len() + 1 != d.j || coefs.len() != d.p {
        return Err(OrdregError::Dimension(format!(
            "expected {} thresholds and {} coefficients",
            d.j - 1,
            d.p
        )));
    }
    if thresholds.windows(2).any(|w| w[0] >= w[1]) {
        return Err(OrdregError::InvalidParameter(
            "thresholds must increase".into(),
        ));
    }
    if !(sd >= 0.0 && sd.is_finite()) {
        return Err(OrdregError::InvalidParameter(format!("σ_u = {sd}")));
    }
    if nq == 0 {
        return Err(OrdregError::InvalidParameter(
            "nq must be at least 1".into(),
        ));
    }
    Ok(())
}

/// Marginal log-likelihood of the random-intercept model. `sd = 0` gives the
/// fixed-effects likelihood exactly.
pub fn marginal_loglik(
    data: &OrdinalDataset,
    gram: &DMatrix<f64>,
    thresholds: &[f64],
    coefs: &[f64],
    sd: f64,
    nq: usize,
) -> Result<f64, OrdregError> {
    let d = Design::new(data, gram)?;
    check(&d, thresholds, coefs, sd, nq)?;
    if sd == 0.0 {
        return Ok(fixed_eval(&d, thresholds, coefs, false).loglik);
    }
    Ok(mixed_eval(&d, thresholds, coefs, sd.ln(), &Rule::new(nq), false).0)
}

/// Marginal log-likelihood and its gradient in (thresholds, coefficients,
/// log σ_u). Requires `sd > 0`.
pub fn marginal_loglik_gradient(
    data: &OrdinalDataset,
    gram: &DMatrix<f64>,
    thresholds: &[f64],
    coefs: &[f64],
    sd: f64,
    nq: usize,
) -> Result<(f64, Vec<f64>), OrdregError> {
    let d = Design::new(data, gram)?;
    check(&d, thresholds, coefs, sd, nq)?;
    if sd == 0.0 {
        return Err(OrdregError::InvalidParameter(
            "gradient in log σ_u needs σ_u > 0".into(),
        ));
    }
    Ok(mixed_eval(
        &d,
        thresholds,
        coefs,
        sd.ln(),
        &Rule::new(nq),
        true,
    ))
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Random-intercept cumulative-logit fit by quasi-Newton (BFGS) on
/// `(θ, γ, log σ_u)`, starting from the fixed-effects solution.
pub fn fit_mixed(
    data: &OrdinalDataset,
    gram: &DMatrix<f64>,
    options: &FitOptions,
) -> Result<OrdinalModel, OrdregError> {
    check_categories(data)?;
    let d = Design::new(data, gram)?;
    if options.nq == 0 {
        return Err(OrdregError::InvalidParameter(
            "nq must be at least 1".into(),
        ));
    }
    let fixed = fit_fixed(data, gram, options)?;
    let repeated = d.subjects.iter().filter(|r| r.len() >= 2).count();
    if repeated < 2 {
        let mut model = fixed;
        model.fit_info.warnings.push(format!(
            "only {repeated} subject(s) with two or more observations; random intercept unidentified, fixed-effects fit reported"
        ));
        log::warn!("random intercept unidentified; falling back to the fixed-effects fit");
        return Ok(model);
    }

    let nt = d.j - 1;
    let dim = d.q() + 1;
    let rule = Rule::new(options.nq);
    let mut coefs: Vec<f64> = fixed.scalar_coefs.clone();
    coefs.extend_from_slice(&fixed.functional_coefs);
    let mut x: Vec<f64> = theta_from_alpha(&fixed.thresholds);
    x.extend_from_slice(&coefs);
    x.push(options.initial_sd.ln());

    // minimize f = −log L over x = (θ, γ, s)
    let eval = |x: &[f64]| -> Option<(f64, Vec<f64>)> {
        let alpha = alpha_from_theta(&x[..nt]);
        if alpha.iter().any(|a| !a.is_finite()) || alpha.windows(2).any(|w| w[0] >= w[1]) {
            return None;
        }
        let (ll, g) = mixed_eval(&d, &alpha, &x[nt..dim - 1], x[dim - 1], &rule, true);
        if !ll.is_finite() {
            return None;
        }
        let gt = gradient_to_theta(&x[..nt], &g);
        Some((-ll, gt.iter().map(|v| -v).collect()))
    };

    let (mut f, mut g) = eval(&x)
        .ok_or_else(|| OrdregError::InvalidParameter("non-finite starting likelihood".into()))?;
    let mut hinv = DMatrix::<f64>::identity(dim, dim);
    let mut fresh = true;
    let mut trace = vec![-f];
    let mut iterations = 0;
    let mut converged = false;
    let mut boundary = false;
    let mut warnings = Vec::new();
    let min_s = options.min_sd.ln();

    while iterations < options.max_iter {
        if inf_norm(&g) <= options.mixed_grad_tol {
            converged = true;
            break;
        }
        iterations += 1;
        let gv = DVector::from_column_slice(&g);
        let mut dir = -(&hinv * &gv);
        if gv.dot(&dir) >= 0.0 {
            hinv = DMatrix::identity(dim, dim);
            fresh = true;
            dir = -gv.clone();
        }
        let big = dir.amax();
        if big > 5.0 {
            dir *= 5.0 / big;
        }
        let slope = gv.dot(&dir);
        let mut t = 1.0;
        let mut next = None;
        for _ in 0..50 {
            let cand: Vec<f64> = x.iter().zip(dir.iter()).map(|(a, b)| a + t * b).collect();
            if let Some((fc, gc)) = eval(&cand) {
                if fc <= f + 1e-4 * t * slope {
                    next = Some((cand, fc, gc));
                    break;
                }
            }
            t *= 0.5;
        }
        let Some((xn, fn_, gn)) = next else {
            if !fresh {
                hinv = DMatrix::identity(dim, dim);
                fresh = true;
                continue;
            }
            if inf_norm(&g) <= options.mixed_grad_tol.max(1e-4) {
                converged = true;
                warnings.push(format!(
                    "line search stalled at gradient norm {:e}; accepted as converged",
                    inf_norm(&g)
                ));
            }
            break;
        };
        let sv = DVector::from_iterator(dim, xn.iter().zip(&x).map(|(a, b)| a - b));
        let yv = DVector::from_iterator(dim, gn.iter().zip(&g).map(|(a, b)| a - b));
        let sy = sv.dot(&yv);
        if sy > 1e-12 * sv.norm() * yv.norm() {
            if fresh {
                hinv *= sy / yv.dot(&yv);
            }
            let rho = 1.0 / sy;
            let i = DMatrix::<f64>::identity(dim, dim);
            let left = &i - &sv * yv.transpose() * rho;
            let right = &i - &yv * sv.transpose() * rho;
            hinv = &left * &hinv * &right + &sv * sv.transpose() * rho;
            fresh = false;
        }
        x = xn;
        f = fn_;
        g = gn;
        trace.push(-f);
        if x[dim - 1] < min_s {
            boundary = true;
            break;
        }
    }

    if boundary {
        let mut model = fixed;
        model.random_intercept_sd = Some(0.0);
        model.fit_info.method = "mixed-boundary".into();
        model.fit_info.nq = Some(options.nq);
        model.fit_info.se_sd = None;
        model
            .fit_info
            .warnings
            .push("σ_u collapsed to the boundary 0; fixed-effects fit reported".into());
        log::warn!("random-intercept SD collapsed to 0");
        return Ok(model);
    }
    if !converged {
        return Err(OrdregError::NonConvergence {
            iterations,
            grad_norm: inf_norm(&g),
        });
    }

    let alpha = alpha_from_theta(&x[..nt]);
    let gamma = x[nt..dim - 1].to_vec();
    let s = x[dim - 1];
    let mut info = super::FitInfo {
        method: "mixed-aghq-bfgs".into(),
        loglik: -f,
        iterations,
        converged: true,
        nq: Some(options.nq),
        warnings,
        trace,
        ..Default::default()
    };

    // observed information by central differences of the analytic gradient
    let mut psi: Vec<f64> = alpha.clone();
    psi.extend_from_slice(&gamma);
    psi.push(s);
    let natural_grad =
        |p: &[f64]| mixed_eval(&d, &p[..nt], &p[nt..dim - 1], p[dim - 1], &rule, true).1;
    let mut hess = DMatrix::zeros(dim, dim);
    for jx in 0..dim {
        let h = 1e-4 * psi[jx].abs().max(1.0);
        let mut up = psi.clone();
        up[jx] += h;
        let mut dn = psi.clone();
        dn[jx] -= h;
        let (gu, gd) = (natural_grad(&up), natural_grad(&dn));
        for ix in 0..dim {
            hess[(ix, jx)] = (gu[ix] - gd[ix]) / (2.0 * h);
        }
    }
    let information = -(&hess + hess.transpose()) * 0.5;
    let se = standard_errors(&information);
    if let Some(se) = &se {
        info.se_sd = Some(s.exp() * se[dim - 1]);
    }
    split_se(
        se.map(|mut v| {
            v.pop();
            v
        }),
        d.j,
        d.m,
        &mut info,
    );

    let mut model = assemble_model(data, gram, alpha, &gamma, info);
    model.random_intercept_sd = Some(s.exp());
    Ok(model)
}
