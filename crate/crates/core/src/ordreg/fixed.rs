use std::ops::Range;

use nalgebra::{DMatrix, DVector};

use super::cell::{cell, Cell};
use super::model::{gram_row, FitInfo, FitOptions, OrdinalModel};
use super::{OrdinalDataset, OrdregError};

/// Flattened design: per row the category index and the predictor features
/// `[x, G z]`.
pub(crate) struct Design {
    pub j: usize,
    pub m: usize,
    pub p: usize,
    pub y: Vec<usize>,
    pub x: Vec<f64>,
    pub subjects: Vec<Range<usize>>,
}

impl Design {
    pub fn new(data: &OrdinalDataset, gram: &DMatrix<f64>) -> Result<Self, OrdregError> {
        let r = data.r();
        if gram.shape() != (r, r) {
            return Err(OrdregError::Dimension(format!(
                "Gram is {:?} for feature length {r}",
                gram.shape()
            )));
        }
        let m = data.covariate_names().len();
        let p = m + r;
        let mut x = Vec::with_capacity(data.len() * p);
        for row in data.rows() {
            x.extend_from_slice(&row.covariates);
            for q in 0..r {
                x.push(gram_row(gram, q, &row.z));
            }
        }
        Ok(Self {
            j: data.j(),
            m,
            p,
            y: data.rows().iter().map(|r| r.response).collect(),
            x,
            subjects: data.subject_ranges().into_iter().map(|(_, r)| r).collect(),
        })
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.x[i * self.p..(i + 1) * self.p]
    }

    pub fn eta(&self, i: usize, gamma: &[f64]) -> f64 {
        self.row(i).iter().zip(gamma).map(|(x, g)| x * g).sum()
    }

    /// Number of natural parameters (α, γ).
    pub fn q(&self) -> usize {
        self.j - 1 + self.p
    }

    /// Cut points `(a, l)` of row `i` at predictor value `eta`.
    pub fn cuts(&self, i: usize, alpha: &[f64], eta: f64) -> (Option<f64>, Option<f64>) {
        let y = self.y[i];
        let upper = (y + 1 < self.j).then(|| alpha[y] + eta);
        let lower = (y > 0).then(|| alpha[y - 1] + eta);
        (upper, lower)
    }

    pub fn cell(&self, i: usize, alpha: &[f64], eta: f64) -> Cell {
        let (a, l) = self.cuts(i, alpha, eta);
        cell(a, l)
    }

    /// Add `wa·c_a + wl·c_l` to `v`, where `c_a`, `c_l` are the derivatives
    /// of the cut points of row `i` with respect to (α, γ).
    pub fn add_cut_gradients(&self, i: usize, wa: f64, wl: f64, v: &mut [f64]) {
        let y = self.y[i];
        let ja = self.j - 1;
        if y + 1 < self.j {
            v[y] += wa;
        }
        if y > 0 {
            v[y - 1] += wl;
        }
        let s = wa + wl;
        for (k, x) in self.row(i).iter().enumerate() {
            v[ja + k] += s * x;
        }
    }

    pub fn max_abs_cut(&self, alpha: &[f64], gamma: &[f64]) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.n() {
            let eta = self.eta(i, gamma);
            let (a, l) = self.cuts(i, alpha, eta);
            for c in [a, l].into_iter().flatten() {
                worst = worst.max(c.abs());
            }
        }
        worst
    }
}

pub(crate) fn alpha_from_theta(theta: &[f64]) -> Vec<f64> {
    let mut alpha = Vec::with_capacity(theta.len());
    for (k, t) in theta.iter().enumerate() {
        if k == 0 {
            alpha.push(*t);
        } else {
            alpha.push(alpha[k - 1] + t.exp());
        }
    }
    alpha
}

pub(crate) fn theta_from_alpha(alpha: &[f64]) -> Vec<f64> {
    alpha
        .iter()
        .enumerate()
        .map(|(k, a)| if k == 0 { *a } else { (a - alpha[k - 1]).ln() })
        .collect()
}

/// `∂α/∂θ` (lower triangular).
pub(crate) fn theta_jacobian(theta: &[f64]) -> DMatrix<f64> {
    let n = theta.len();
    DMatrix::from_fn(n, n, |k, m| {
        if m > k {
            0.0
        } else if m == 0 {
            1.0
        } else {
            theta[m].exp()
        }
    })
}

/// Map a natural-parameter gradient over (α, rest) to (θ, rest).
pub(crate) fn gradient_to_theta(theta: &[f64], grad: &[f64]) -> Vec<f64> {
    let n = theta.len();
    let jac = theta_jacobian(theta);
    let mut out = grad.to_vec();
    for m in 0..n {
        out[m] = (0..n).map(|k| jac[(k, m)] * grad[k]).sum();
    }
    out
}

pub(crate) struct FixedEval {
    pub loglik: f64,
    pub grad: Vec<f64>,
    pub hess: Option<DMatrix<f64>>,
}

pub(crate) fn fixed_eval(d: &Design, alpha: &[f64], gamma: &[f64], hessian: bool) -> FixedEval {
    let q = d.q();
    let mut loglik = 0.0;
    let mut grad = vec![0.0; q];
    let mut hess = hessian.then(|| DMatrix::zeros(q, q));
    let mut ca = vec![0.0; q];
    let mut cl = vec![0.0; q];
    for i in 0..d.n() {
        let eta = d.eta(i, gamma);
        let c = d.cell(i, alpha, eta);
        loglik += c.logp;
        d.add_cut_gradients(i, c.a, c.l, &mut grad);
        if let Some(h) = hess.as_mut() {
            ca.iter_mut().for_each(|v| *v = 0.0);
            cl.iter_mut().for_each(|v| *v = 0.0);
            d.add_cut_gradients(i, 1.0, 0.0, &mut ca);
            d.add_cut_gradients(i, 0.0, 1.0, &mut cl);
            for r in 0..q {
                for s in 0..q {
                    h[(r, s)] += c.aa * ca[r] * ca[s]
                        + c.al * (ca[r] * cl[s] + cl[r] * ca[s])
                        + c.ll * cl[r] * cl[s];
                }
            }
        }
    }
    FixedEval { loglik, grad, hess }
}

fn check_params(d: &Design, thresholds: &[f64], coefs: &[f64]) -> Result<(), OrdregError> {
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
    Ok(())
}

/// Fixed-effects log-likelihood. `coefs` holds scalar coefficients followed
/// by functional coefficients.
pub fn fixed_loglik(
    data: &OrdinalDataset,
    gram: &DMatrix<f64>,
    thresholds: &[f64],
    coefs: &[f64],
) -> Result<f64, OrdregError> {
    let d = Design::new(data, gram)?;
    check_params(&d, thresholds, coefs)?;
    Ok(fixed_eval(&d, thresholds, coefs, false).loglik)
}

/// Log-likelihood and its analytic gradient in (thresholds, coefficients).
pub fn fixed_loglik_gradient(
    data: &OrdinalDataset,
    gram: &DMatrix<f64>,
    thresholds: &[f64],
    coefs: &[f64],
) -> Result<(f64, Vec<f64>), OrdregError> {
    let d = Design::new(data, gram)?;
    check_params(&d, thresholds, coefs)?;
    let e = fixed_eval(&d, thresholds, coefs, false);
    Ok((e.loglik, e.grad))
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

pub(crate) fn check_categories(data: &OrdinalDataset) -> Result<(), OrdregError> {
    if data.is_empty() {
        return Err(OrdregError::EmptyDataset);
    }
    if let Some(&label) = data.missing_categories().first() {
        return Err(OrdregError::UnidentifiedThreshold(label));
    }
    Ok(())
}

/// Standard errors from the inverse observed information.
pub(crate) fn standard_errors(info: &DMatrix<f64>) -> Option<Vec<f64>> {
    let inv = info.clone().cholesky()?.inverse();
    Some((0..inv.nrows()).map(|i| inv[(i, i)].sqrt()).collect())
}

pub(crate) fn assemble_model(
    data: &OrdinalDataset,
    gram: &DMatrix<f64>,
    alpha: Vec<f64>,
    gamma: &[f64],
    fit_info: FitInfo,
) -> OrdinalModel {
    let m = data.covariate_names().len();
    OrdinalModel {
        labels: data.labels().to_vec(),
        covariate_names: data.covariate_names().to_vec(),
        thresholds: alpha,
        scalar_coefs: gamma[..m].to_vec(),
        functional_coefs: gamma[m..].to_vec(),
        random_intercept_sd: None,
        hk_gram: gram.clone(),
        fit_info,
    }
}

pub(crate) fn split_se(se: Option<Vec<f64>>, j: usize, m: usize, info: &mut FitInfo) {
    match se {
        Some(se) => {
            info.se_thresholds = se[..j - 1].to_vec();
            info.se_scalar = se[j - 1..j - 1 + m].to_vec();
            info.se_functional = se[j - 1 + m..].to_vec();
        }
        None => info.warnings.push(
            "observed information is not positive definite; standard errors unavailable".into(),
        ),
    }
}

/// Maximum-likelihood fit of the proportional-odds model by damped Newton
/// iterations on `(θ, γ)` with `α_1 = θ_1`, `α_{k+1} = α_k + exp(θ_{k+1})`.
pub fn fit_fixed(
    data: &OrdinalDataset,
    gram: &DMatrix<f64>,
    options: &FitOptions,
) -> Result<OrdinalModel, OrdregError> {
    check_categories(data)?;
    let d = Design::new(data, gram)?;
    let nt = d.j - 1;
    let q = d.q();

    // start from the empirical cumulative logits with zero slopes
    let counts = data.category_counts();
    let n = data.len() as f64;
    let mut cum = 0.0;
    let mut alpha = Vec::with_capacity(nt);
    for c in &counts[..nt] {
        cum += *c as f64;
        let p = cum / n;
        alpha.push((p / (1.0 - p)).ln());
    }
    let mut theta = theta_from_alpha(&alpha);
    let mut gamma = vec![0.0; d.p];

    let mut info = FitInfo {
        method: "fixed-newton".into(),
        ..FitInfo::default()
    };
    let mut current = fixed_eval(&d, &alpha, &gamma, true);
    info.trace.push(current.loglik);
    let mut converged = false;
    let mut iterations = 0;
    let mut grad_norm = f64::INFINITY;

    while iterations <= options.max_iter {
        let g_theta = gradient_to_theta(&theta, &current.grad);
        grad_norm = inf_norm(&g_theta);
        if grad_norm <= options.grad_tol {
            converged = true;
            break;
        }
        if iterations == options.max_iter {
            break;
        }
        iterations += 1;

        // Hessian in (θ, γ)
        let h_alpha = current.hess.as_ref().expect("hessian requested");
        let mut jac = DMatrix::identity(q, q);
        jac.view_mut((0, 0), (nt, nt))
            .copy_from(&theta_jacobian(&theta));
        let mut h = jac.transpose() * h_alpha * &jac;
        for m in 1..nt {
            let tail: f64 = current.grad[m..nt].iter().sum();
            h[(m, m)] += theta[m].exp() * tail;
        }
        let neg_h = -h;
        let g = DVector::from_column_slice(&g_theta);
        let scale = (0..q)
            .map(|i| neg_h[(i, i)].abs())
            .fold(0.0, f64::max)
            .max(1e-12);
        let mut mu = 0.0;
        let step = loop {
            let mut m = neg_h.clone();
            for i in 0..q {
                m[(i, i)] += mu;
            }
            if let Some(ch) = m.cholesky() {
                break ch.solve(&g);
            }
            mu = if mu == 0.0 { 1e-8 * scale } else { mu * 10.0 };
        };

        let slope = g.dot(&step);
        // Predicted gain below the rounding level of the log-likelihood:
        // the ascent test is meaningless, so take the full Newton step when it
        // shrinks the gradient (polishing; not recorded in the ascent trace).
        if 0.5 * slope <= 1e-13 * current.loglik.abs().max(1.0) {
            let th: Vec<f64> = (0..nt).map(|k| theta[k] + step[k]).collect();
            let ga: Vec<f64> = (0..d.p).map(|k| gamma[k] + step[nt + k]).collect();
            let al = alpha_from_theta(&th);
            let trial = fixed_eval(&d, &al, &ga, true);
            let g_new = inf_norm(&gradient_to_theta(&th, &trial.grad));
            if trial.loglik.is_finite() && g_new < grad_norm {
                theta = th;
                gamma = ga;
                alpha = al;
                current = trial;
                continue;
            }
        }
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let th: Vec<f64> = (0..nt).map(|k| theta[k] + t * step[k]).collect();
            let ga: Vec<f64> = (0..d.p).map(|k| gamma[k] + t * step[nt + k]).collect();
            let al = alpha_from_theta(&th);
            if al.iter().all(|a| a.is_finite()) {
                let trial = fixed_eval(&d, &al, &ga, true);
                if trial.loglik.is_finite() && trial.loglik >= current.loglik + 1e-4 * t * slope {
                    accepted = Some((th, ga, al, trial));
                    break;
                }
            }
            t *= 0.5;
        }
        match accepted {
            Some((th, ga, al, trial)) => {
                theta = th;
                gamma = ga;
                alpha = al;
                current = trial;
                info.trace.push(current.loglik);
            }
            None => {
                // no ascent available: rounding-limited optimum
                if grad_norm <= options.grad_tol.max(1e-6) {
                    converged = true;
                    info.warnings.push(format!(
                        "line search stalled at gradient norm {grad_norm:e}; accepted as converged"
                    ));
                }
                break;
            }
        }
        if d.max_abs_cut(&alpha, &gamma) > options.separation_cap {
            info.loglik = current.loglik;
            info.iterations = iterations;
            info.converged = false;
            info.warnings
                .push("complete or quasi-complete separation".into());
            let model = assemble_model(data, gram, alpha, &gamma, info);
            return Err(OrdregError::Separation {
                model: Box::new(model),
            });
        }
    }
    if !converged {
        return Err(OrdregError::NonConvergence {
            iterations,
            grad_norm,
        });
    }
    info.loglik = current.loglik;
    info.iterations = iterations;
    info.converged = true;
    let information = -current.hess.expect("hessian requested");
    split_se(standard_errors(&information), d.j, d.m, &mut info);
    Ok(assemble_model(data, gram, alpha, &gamma, info))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ordreg::{Observation, DEFAULT_LABELS};

    fn dataset(rows: Vec<(usize, f64)>) -> OrdinalDataset {
        let rows = rows
            .into_iter()
            .enumerate()
            .map(|(i, (y, x))| Observation {
                subject: format!("s{i:03}"),
                response: y,
                covariates: vec![x],
                z: vec![],
            })
            .collect();
        OrdinalDataset::new(DEFAULT_LABELS.to_vec(), vec!["x".into()], 0, rows).unwrap()
    }

    #[test]
    fn theta_round_trip() {
        let alpha = vec![-1.5, 0.2, 3.0];
        let back = alpha_from_theta(&theta_from_alpha(&alpha));
        for (a, b) in alpha.iter().zip(&back) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn separation_is_flagged() {
        let mut rows = Vec::new();
        for _ in 0..10 {
            rows.push((0, 0.0));
            rows.push((1, 1.0));
            rows.push((2, 1.0));
        }
        let data = dataset(rows);
        let err = fit_fixed(&data, &DMatrix::zeros(0, 0), &FitOptions::default()).unwrap_err();
        match err {
            OrdregError::Separation { model } => assert!(!model.fit_info.converged),
            other => panic!("expected separation, got {other}"),
        }
    }

    #[test]
    fn missing_category_is_rejected() {
        let data = dataset(vec![(0, 0.0), (2, 1.0), (0, 0.5)]);
        assert!(matches!(
            fit_fixed(&data, &DMatrix::zeros(0, 0), &FitOptions::default()),
            Err(OrdregError::UnidentifiedThreshold(0))
        ));
    }
}
