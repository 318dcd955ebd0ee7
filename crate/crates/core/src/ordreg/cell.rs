//! Per-observation log-probability of the cumulative-logit model and its
//! derivatives with respect to the upper and lower cut points.

pub(crate) fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `log logistic(x)` without overflow.
pub(crate) fn log_logistic(x: f64) -> f64 {
    if x >= 0.0 {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}

/// `ℓ = log P` with `P = F(a) − F(l)` and partial derivatives in `(a, l)`.
/// A missing upper cut means `a = +∞`, a missing lower cut `l = −∞`.
#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct Cell {
    pub logp: f64,
    pub a: f64,
    pub l: f64,
    pub aa: f64,
    pub al: f64,
    pub ll: f64,
    pub aaa: f64,
    pub aal: f64,
    pub all: f64,
    pub lll: f64,
}

impl Cell {
    /// `∂ℓ/∂u` when both cuts shift by `u`.
    pub fn du(&self) -> f64 {
        self.a + self.l
    }

    pub fn duu(&self) -> f64 {
        self.aa + 2.0 * self.al + self.ll
    }

    pub fn duuu(&self) -> f64 {
        self.aaa + 3.0 * self.aal + 3.0 * self.all + self.lll
    }
}

pub(crate) fn cell(upper: Option<f64>, lower: Option<f64>) -> Cell {
    // Ratios P_x/P, P_xx/P, P_xxx/P computed from stable forms:
    // P = F(a) F(−l) (1 − e^{l−a}).
    let (logp, p1a, p1l) = match (upper, lower) {
        (Some(a), None) => (log_logistic(a), logistic(-a), 0.0),
        (None, Some(l)) => (log_logistic(-l), 0.0, -logistic(l)),
        (Some(a), Some(l)) => {
            let d = -(l - a).exp_m1();
            let logp = log_logistic(a) + log_logistic(-l) + d.ln();
            let ra = logistic(-a) / (logistic(-l) * d);
            let rl = logistic(l) / (logistic(a) * d);
            (logp, ra, -rl)
        }
        (None, None) => (0.0, 0.0, 0.0),
    };
    let shape = |x: Option<f64>| match x {
        Some(x) => {
            let f = logistic(x);
            (1.0 - 2.0 * f, 1.0 - 6.0 * f + 6.0 * f * f)
        }
        None => (0.0, 0.0),
    };
    let (s2a, s3a) = shape(upper);
    let (s2l, s3l) = shape(lower);
    let (p2a, p3a) = (p1a * s2a, p1a * s3a);
    let (p2l, p3l) = (p1l * s2l, p1l * s3l);
    Cell {
        logp,
        a: p1a,
        l: p1l,
        aa: p2a - p1a * p1a,
        al: -p1a * p1l,
        ll: p2l - p1l * p1l,
        aaa: p3a - 3.0 * p2a * p1a + 2.0 * p1a.powi(3),
        aal: -p2a * p1l + 2.0 * p1a * p1a * p1l,
        all: -p2l * p1a + 2.0 * p1a * p1l * p1l,
        lll: p3l - 3.0 * p2l * p1l + 2.0 * p1l.powi(3),
    }
}
