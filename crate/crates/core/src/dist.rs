//! Probability densities used by the samplers and the models.
//!
//! Every log-density is exact, normalizing constants included: marginal
//! likelihood ratios are compared in absolute terms, not up to proportionality.

use std::f64::consts::PI;

use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};
pub use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::rng::RngStream;

/// `ln Γ(x)` through a small per-thread table. Within a sweep the shape
/// arguments repeat across particles, so most calls hit.
#[inline]
pub fn ln_gamma_memo(x: f64) -> f64 {
    use std::cell::Cell;
    const SLOTS: usize = 64;
    thread_local! {
        static TABLE: [Cell<(u64, f64)>; SLOTS] = const { [const { Cell::new((u64::MAX, f64::NAN)) }; SLOTS] };
    }
    let bits = x.to_bits();
    let slot = (bits.wrapping_mul(0x9E37_79B9_7F4A_7C15) >> 58) as usize;
    TABLE.with(|t| {
        let (k, v) = t[slot].get();
        if k == bits {
            v
        } else {
            let v = ln_gamma(x);
            t[slot].set((bits, v));
            v
        }
    })
}

pub const LN_2PI: f64 = 1.837_877_066_409_345_5;

#[inline]
pub fn normal_logpdf(x: f64, mean: f64, var: f64) -> f64 {
    let d = x - mean;
    -0.5 * (LN_2PI + var.ln() + d * d / var)
}

#[inline]
pub fn ln_beta(a: f64, b: f64) -> f64 {
    ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b)
}

/// `ln C(n, k)` via log-gamma; exact enough for `n` up to 10^6.
#[inline]
pub fn ln_choose(n: f64, k: f64) -> f64 {
    ln_gamma(n + 1.0) - ln_gamma(k + 1.0) - ln_gamma(n - k + 1.0)
}

/// Numerically stable `ln Σ exp(v)`; `-inf` for an empty or all `-inf` input.
pub fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if m.is_nan() || m == f64::INFINITY {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Draw from Gamma(shape, scale = 1).
#[inline]
pub fn sample_gamma(shape: f64, rng: &mut RngStream) -> f64 {
    // shape validity is checked by callers
    Gamma::new(shape, 1.0).expect("positive shape").sample(rng)
}

/// Draw from IG(shape, scale): `scale / Gamma(shape, 1)`.
#[inline]
pub fn sample_inverse_gamma(shape: f64, scale: f64, rng: &mut RngStream) -> f64 {
    scale / sample_gamma(shape, rng)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "tag", rename_all = "kebab-case")]
pub enum Density {
    Gaussian {
        mean: f64,
        var: f64,
    },
    InverseGamma {
        shape: f64,
        scale: f64,
    },
    /// `σ² ~ IG(shape, scale)`, `b | σ² ~ N(mean, σ² precision⁻¹)`; points are `(b, σ²)`.
    NormalInverseGamma {
        mean: Vec<f64>,
        /// Row-major `d × d`.
        precision: Vec<f64>,
        shape: f64,
        scale: f64,
    },
    Beta {
        a: f64,
        b: f64,
    },
    Binomial {
        n: u64,
        p: f64,
    },
    StudentT {
        dof: f64,
        loc: f64,
        scale: f64,
    },
    /// Unnormalized nonnegative weights; draws are 0-based indices.
    Categorical {
        weights: Vec<f64>,
    },
    Uniform {
        lo: f64,
        hi: f64,
    },
}

fn positive(what: &'static str, field: &'static str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::param(what, field, v))
    }
}

fn finite(what: &'static str, field: &'static str, v: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::param(what, field, v))
    }
}

impl Density {
    pub fn name(&self) -> &'static str {
        match self {
            Density::Gaussian { .. } => "gaussian",
            Density::InverseGamma { .. } => "inverse-gamma",
            Density::NormalInverseGamma { .. } => "normal-inverse-gamma",
            Density::Beta { .. } => "beta",
            Density::Binomial { .. } => "binomial",
            Density::StudentT { .. } => "student-t",
            Density::Categorical { .. } => "categorical",
            Density::Uniform { .. } => "uniform",
        }
    }

    pub fn validate(&self) -> Result<()> {
        let w = self.name();
        match self {
            Density::Gaussian { mean, var } => {
                finite(w, "mean", *mean)?;
                positive(w, "var", *var)
            }
            Density::InverseGamma { shape, scale } => {
                positive(w, "shape", *shape)?;
                positive(w, "scale", *scale)
            }
            Density::NormalInverseGamma {
                mean,
                precision,
                shape,
                scale,
            } => {
                let d = mean.len();
                if d == 0 {
                    return Err(Error::DimensionMismatch {
                        what: "normal-inverse-gamma mean",
                        expected: 1,
                        got: 0,
                    });
                }
                if precision.len() != d * d {
                    return Err(Error::DimensionMismatch {
                        what: "normal-inverse-gamma precision",
                        expected: d * d,
                        got: precision.len(),
                    });
                }
                for &m in mean {
                    finite(w, "mean", m)?;
                }
                if crate::linalg::cholesky(precision, d).is_none() {
                    return Err(Error::param(w, "precision", f64::NAN));
                }
                positive(w, "shape", *shape)?;
                positive(w, "scale", *scale)
            }
            Density::Beta { a, b } => {
                positive(w, "a", *a)?;
                positive(w, "b", *b)
            }
            Density::Binomial { p, .. } => {
                if (0.0..=1.0).contains(p) {
                    Ok(())
                } else {
                    Err(Error::param(w, "p", *p))
                }
            }
            Density::StudentT { dof, loc, scale } => {
                positive(w, "dof", *dof)?;
                finite(w, "loc", *loc)?;
                positive(w, "scale", *scale)
            }
            Density::Categorical { weights } => {
                if weights.is_empty() {
                    return Err(Error::param(w, "weights", f64::NAN));
                }
                let mut total = 0.0;
                for &x in weights {
                    if !(x.is_finite() && x >= 0.0) {
                        return Err(Error::param(w, "weights", x));
                    }
                    total += x;
                }
                positive(w, "weights", total)
            }
            Density::Uniform { lo, hi } => {
                finite(w, "lo", *lo)?;
                finite(w, "hi", *hi)?;
                if hi > lo {
                    Ok(())
                } else {
                    Err(Error::param(w, "hi", *hi))
                }
            }
        }
    }

    pub fn is_multivariate(&self) -> bool {
        matches!(self, Density::NormalInverseGamma { .. })
    }

    /// Scalar draw. Integer-valued tags return the integer as `f64`.
    pub fn sample(&self, rng: &mut RngStream) -> Result<f64> {
        self.validate()?;
        Ok(match self {
            Density::Gaussian { mean, var } => mean + var.sqrt() * rng.standard_normal(),
            Density::InverseGamma { shape, scale } => sample_inverse_gamma(*shape, *scale, rng),
            Density::NormalInverseGamma { .. } => {
                return Err(Error::InvalidInput(
                    "normal-inverse-gamma draws are vectors; use sample_vector".into(),
                ))
            }
            Density::Beta { a, b } => {
                let x = sample_gamma(*a, rng);
                let y = sample_gamma(*b, rng);
                x / (x + y)
            }
            Density::Binomial { n, p } => rand_distr::Binomial::new(*n, *p)
                .expect("validated")
                .sample(rng) as f64,
            Density::StudentT { dof, loc, scale } => {
                let z: f64 = StandardNormal.sample(rng);
                let g = sample_gamma(0.5 * dof, rng);
                loc + scale * z / (g / (0.5 * dof)).sqrt()
            }
            Density::Categorical { weights } => {
                let total: f64 = weights.iter().sum();
                let u = rng.uniform() * total;
                let mut acc = 0.0;
                let mut pick = weights.len() - 1;
                for (i, w) in weights.iter().enumerate() {
                    acc += w;
                    if u < acc && *w > 0.0 {
                        pick = i;
                        break;
                    }
                }
                // floating slack at the top end: fall back to the last positive entry
                if weights[pick] == 0.0 {
                    pick = weights.iter().rposition(|w| *w > 0.0).expect("validated");
                }
                pick as f64
            }
            Density::Uniform { lo, hi } => lo + (hi - lo) * rng.uniform(),
        })
    }

    pub fn sample_vector(&self, rng: &mut RngStream) -> Result<Vec<f64>> {
        match self {
            Density::NormalInverseGamma {
                mean,
                precision,
                shape,
                scale,
            } => {
                self.validate()?;
                let d = mean.len();
                let sigma2 = sample_inverse_gamma(*shape, *scale, rng);
                let mut out = crate::linalg::sample_mvn_precision(mean, precision, sigma2, d, rng);
                out.push(sigma2);
                Ok(out)
            }
            _ => Ok(vec![self.sample(rng)?]),
        }
    }

    pub fn log_pdf(&self, x: f64) -> Result<f64> {
        self.validate()?;
        Ok(match self {
            Density::Gaussian { mean, var } => normal_logpdf(x, *mean, *var),
            Density::InverseGamma { shape, scale } => {
                if x <= 0.0 {
                    f64::NEG_INFINITY
                } else {
                    shape * scale.ln() - ln_gamma_memo(*shape) - (shape + 1.0) * x.ln() - scale / x
                }
            }
            Density::NormalInverseGamma { .. } => {
                return Err(Error::InvalidInput(
                    "normal-inverse-gamma points are vectors; use log_pdf_vector".into(),
                ))
            }
            Density::Beta { a, b } => {
                if !(0.0..=1.0).contains(&x) {
                    f64::NEG_INFINITY
                } else {
                    let la = if *a == 1.0 { 0.0 } else { (a - 1.0) * x.ln() };
                    let lb = if *b == 1.0 {
                        0.0
                    } else {
                        (b - 1.0) * (1.0 - x).ln()
                    };
                    la + lb - ln_beta(*a, *b)
                }
            }
            Density::Binomial { n, p } => binomial_logpmf(x, *n as f64, *p),
            Density::StudentT { dof, loc, scale } => {
                let z = (x - loc) / scale;
                ln_gamma_memo(0.5 * (dof + 1.0))
                    - ln_gamma_memo(0.5 * dof)
                    - 0.5 * (dof * PI).ln()
                    - scale.ln()
                    - 0.5 * (dof + 1.0) * (z * z / dof).ln_1p()
            }
            Density::Categorical { weights } => {
                if x < 0.0 || x.fract() != 0.0 || x as usize >= weights.len() {
                    f64::NEG_INFINITY
                } else {
                    let total: f64 = weights.iter().sum();
                    (weights[x as usize] / total).ln()
                }
            }
            Density::Uniform { lo, hi } => {
                if x < *lo || x > *hi {
                    f64::NEG_INFINITY
                } else {
                    -(hi - lo).ln()
                }
            }
        })
    }

    pub fn log_pdf_vector(&self, x: &[f64]) -> Result<f64> {
        match self {
            Density::NormalInverseGamma {
                mean,
                precision,
                shape,
                scale,
            } => {
                self.validate()?;
                let d = mean.len();
                if x.len() != d + 1 {
                    return Err(Error::DimensionMismatch {
                        what: "normal-inverse-gamma point",
                        expected: d + 1,
                        got: x.len(),
                    });
                }
                let sigma2 = x[d];
                if sigma2 <= 0.0 {
                    return Ok(f64::NEG_INFINITY);
                }
                let l = crate::linalg::cholesky(precision, d).expect("validated");
                let logdet = crate::linalg::chol_logdet(&l, d);
                let mut quad = 0.0;
                for i in 0..d {
                    for j in 0..d {
                        quad += (x[i] - mean[i]) * precision[i * d + j] * (x[j] - mean[j]);
                    }
                }
                let ig = Density::InverseGamma {
                    shape: *shape,
                    scale: *scale,
                }
                .log_pdf(sigma2)?;
                Ok(ig - 0.5 * d as f64 * (LN_2PI + sigma2.ln()) + 0.5 * logdet
                    - 0.5 * quad / sigma2)
            }
            _ => {
                if x.len() != 1 {
                    return Err(Error::DimensionMismatch {
                        what: "scalar density point",
                        expected: 1,
                        got: x.len(),
                    });
                }
                self.log_pdf(x[0])
            }
        }
    }

    /// Analytic mean and variance where both exist.
    pub fn moments(&self) -> Option<(f64, f64)> {
        match self {
            Density::Gaussian { mean, var } => Some((*mean, *var)),
            Density::InverseGamma { shape, scale } if *shape > 2.0 => Some((
                scale / (shape - 1.0),
                scale * scale / ((shape - 1.0).powi(2) * (shape - 2.0)),
            )),
            Density::Beta { a, b } => {
                let s = a + b;
                Some((a / s, a * b / (s * s * (s + 1.0))))
            }
            Density::Binomial { n, p } => Some((*n as f64 * p, *n as f64 * p * (1.0 - p))),
            Density::StudentT { dof, loc, scale } if *dof > 2.0 => {
                Some((*loc, scale * scale * dof / (dof - 2.0)))
            }
            Density::Categorical { weights } => {
                let total: f64 = weights.iter().sum();
                let m: f64 = weights
                    .iter()
                    .enumerate()
                    .map(|(i, w)| i as f64 * w)
                    .sum::<f64>()
                    / total;
                let v: f64 = weights
                    .iter()
                    .enumerate()
                    .map(|(i, w)| (i as f64 - m).powi(2) * w)
                    .sum::<f64>()
                    / total;
                Some((m, v))
            }
            Density::Uniform { lo, hi } => Some((0.5 * (lo + hi), (hi - lo).powi(2) / 12.0)),
            _ => None,
        }
    }
}

/// Binomial log-pmf for real-valued `k`, `n`; `-inf` off the support.
#[inline]
pub fn binomial_logpmf(k: f64, n: f64, p: f64) -> f64 {
    if k < 0.0 || k > n || k.fract() != 0.0 {
        return f64::NEG_INFINITY;
    }
    let a = if k == 0.0 {
        0.0
    } else if p == 0.0 {
        return f64::NEG_INFINITY;
    } else {
        k * p.ln()
    };
    let b = if k == n {
        0.0
    } else if p == 1.0 {
        return f64::NEG_INFINITY;
    } else {
        (n - k) * (-p).ln_1p()
    };
    ln_choose(n, k) + a + b
}
