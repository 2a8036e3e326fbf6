//! Independent oracles shared by the integration tests.

#![allow(dead_code)]

use mpgas_core::models::{log_marginal_joint, StateSpaceModel};

/// `ln ∫_lo^hi exp(f(x)) dx`. The integrand is shifted by its grid maximum
/// and the range is split there, where the double-exponential rule puts
/// most of its nodes.
pub fn log_integrate(f: impl Fn(f64) -> f64, lo: f64, hi: f64) -> f64 {
    let (mut peak, mut shift) = (lo, f64::NEG_INFINITY);
    for k in 0..=4000 {
        let x = lo + (hi - lo) * k as f64 / 4000.0;
        let v = f(x);
        if v.is_finite() && v > shift {
            peak = x;
            shift = v;
        }
    }
    let g = |x: f64| (f(x) - shift).exp();
    let mut total = 0.0;
    if peak > lo {
        total += quadrature::double_exponential::integrate(g, lo, peak, 1e-15).integral;
    }
    if peak < hi {
        total += quadrature::double_exponential::integrate(g, peak, hi, 1e-15).integral;
    }
    total.ln() + shift
}

/// Same as [`log_integrate`] over `(0, ∞)` via `x = e^z`, `z ∈ [lo, hi]`.
pub fn log_integrate_positive(f: impl Fn(f64) -> f64, lo: f64, hi: f64) -> f64 {
    log_integrate(|z| f(z.exp()) + z, lo, hi)
}

/// Scalar linear-Gaussian state-space model
/// `x_t = a x_{t−1} + v_t`, `y_t = c x_t + w_t`, `x_0 ~ N(m0, p0)`.
#[derive(Clone, Copy, Debug)]
pub struct LinearGaussian {
    pub a: f64,
    pub c: f64,
    pub q: f64,
    pub r: f64,
    pub m0: f64,
    pub p0: f64,
}

pub struct KalmanOutput {
    pub log_evidence: f64,
    /// Filtered moments for `t = 0..=T`.
    pub filt_mean: Vec<f64>,
    pub filt_var: Vec<f64>,
}

impl LinearGaussian {
    pub fn filter(&self, y: &[f64]) -> KalmanOutput {
        let mut m = self.m0;
        let mut p = self.p0;
        let mut ll = 0.0;
        let mut fm = vec![m];
        let mut fv = vec![p];
        for &yt in y {
            let mp = self.a * m;
            let pp = self.a * self.a * p + self.q;
            let s = self.c * self.c * pp + self.r;
            let e = yt - self.c * mp;
            ll += -0.5 * ((2.0 * std::f64::consts::PI * s).ln() + e * e / s);
            let k = pp * self.c / s;
            m = mp + k * e;
            p = (1.0 - k * self.c) * pp;
            fm.push(m);
            fv.push(p);
        }
        KalmanOutput {
            log_evidence: ll,
            filt_mean: fm,
            filt_var: fv,
        }
    }

    /// Rauch–Tung–Striebel smoothed means and variances for `t = 0..=T`.
    pub fn smooth(&self, y: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let f = self.filter(y);
        let n = f.filt_mean.len();
        let mut sm = f.filt_mean.clone();
        let mut sv = f.filt_var.clone();
        for t in (0..n - 1).rev() {
            let pp = self.a * self.a * f.filt_var[t] + self.q;
            let g = f.filt_var[t] * self.a / pp;
            sm[t] = f.filt_mean[t] + g * (sm[t + 1] - self.a * f.filt_mean[t]);
            sv[t] = f.filt_var[t] + g * g * (sv[t + 1] - pp);
        }
        (sm, sv)
    }
}

/// Ancestor log-weights from scratch:
/// `ln w̄^i + ln p(x^i_{0:t−1}, x'_{t:T}, y_{1:T}) − ln p(x^i_{0:t−1}, y_{1:t−1})`,
/// each joint evaluated by a fresh telescoping pass from the prior.
pub fn brute_force_ancestor_weights<M: StateSpaceModel + ?Sized>(
    model: &M,
    t: usize,
    histories: &[Vec<f64>],
    reference: &[f64],
    y: &[f64],
    log_w_bar: &[f64],
) -> Vec<f64> {
    histories
        .iter()
        .zip(log_w_bar)
        .map(|(h, lw)| {
            let mut joined = h.clone();
            joined.extend_from_slice(&reference[t..]);
            let full = log_marginal_joint(model, &joined, y).unwrap();
            let part = log_marginal_joint(model, h, &y[..t - 1]).unwrap();
            lw + full - part
        })
        .collect()
}

/// Subtract the log-sum-exp so weights are comparable across methods.
pub fn normalize_log(v: &[f64]) -> Vec<f64> {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln();
    v.iter().map(|x| x - lse).collect()
}

pub fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

pub fn sample_sd(v: &[f64]) -> f64 {
    let m = mean(v);
    (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
}
