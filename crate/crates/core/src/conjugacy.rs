//! Conjugate families whose per-step likelihood separates as
//! `h_t · exp(θᵀ s_t − A(θ)ᵀ r_t)` with `r_t` free of the parameters.
//!
//! Hyperparameters are kept in accumulator form `(χ, ν)`, so conditioning on
//! one more step is a plain vector addition and removing a step is a
//! subtraction. Each family knows how to decode its accumulators into
//! conventional parameters, evaluate `ln g(χ, ν)` (the log normalizer of the
//! prior), and draw from `π(θ | χ, ν)`.
//!
//! Accumulator layouts:
//!
//! | family               | χ                          | ν     | θ draw        |
//! |----------------------|----------------------------|-------|---------------|
//! | inverse-gamma        | `[β]`                      | `[α]` | `[σ²]`        |
//! | normal-inverse-gamma | `[Λμ (d), Λ (d×d), k]`     | `[α]` | `[b (d), σ²]` |
//! | beta                 | `[a, b]`                   | `[]`  | `[ρ]`         |
//!
//! with `k = 2β + μᵀΛμ` for the regression family.

use serde::{Deserialize, Serialize};
use smallvec::{smallvec, SmallVec};

use crate::dist::{ln_beta, ln_gamma_memo, sample_gamma, sample_inverse_gamma, LN_2PI};
use crate::error::{Error, Result};
use crate::linalg;
use crate::rng::RngStream;

pub type ChiVec = SmallVec<[f64; 8]>;
pub type NuVec = SmallVec<[f64; 2]>;

/// Conjugate-prior hyperparameters in accumulator form.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HyperParams {
    pub chi: ChiVec,
    pub nu: NuVec,
}

/// Per-step statistics `(s_t, r_t)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuffStat {
    pub s: ChiVec,
    pub r: NuVec,
}

/// Conventional parameter values, laid out block by block.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamDraw(pub ChiVec);

impl std::ops::Deref for ParamDraw {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl ParamDraw {
    pub fn new(values: &[f64]) -> Self {
        ParamDraw(values.iter().copied().collect())
    }
}

impl SuffStat {
    pub fn zeros(chi_dim: usize, nu_dim: usize) -> Self {
        SuffStat {
            s: smallvec![0.0; chi_dim],
            r: smallvec![0.0; nu_dim],
        }
    }

    pub fn add_assign(&mut self, other: &SuffStat) {
        debug_assert_eq!(self.s.len(), other.s.len());
        debug_assert_eq!(self.r.len(), other.r.len());
        for (a, b) in self.s.iter_mut().zip(&other.s) {
            *a += b;
        }
        for (a, b) in self.r.iter_mut().zip(&other.r) {
            *a += b;
        }
    }

    pub fn sub_assign(&mut self, other: &SuffStat) {
        for (a, b) in self.s.iter_mut().zip(&other.s) {
            *a -= b;
        }
        for (a, b) in self.r.iter_mut().zip(&other.r) {
            *a -= b;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.s.iter().chain(self.r.iter()).all(|v| v.is_finite())
    }
}

impl HyperParams {
    /// `(χ + s, ν + r)` without dimension checks; for hot loops.
    #[inline]
    pub fn updated(&self, st: &SuffStat) -> HyperParams {
        let mut out = self.clone();
        out.add_assign(st);
        out
    }

    /// Overwrite with `(prev + s, prev + r)`, reusing storage.
    #[inline]
    pub fn set_updated(&mut self, prev: &HyperParams, st: &SuffStat) {
        if self.chi.len() != prev.chi.len() || self.nu.len() != prev.nu.len() {
            self.clone_from(prev);
            self.add_assign(st);
            return;
        }
        for ((a, p), b) in self.chi.iter_mut().zip(&prev.chi).zip(&st.s) {
            *a = p + b;
        }
        for ((a, p), b) in self.nu.iter_mut().zip(&prev.nu).zip(&st.r) {
            *a = p + b;
        }
    }

    #[inline]
    pub fn add_assign(&mut self, st: &SuffStat) {
        debug_assert_eq!(self.chi.len(), st.s.len());
        debug_assert_eq!(self.nu.len(), st.r.len());
        for (a, b) in self.chi.iter_mut().zip(&st.s) {
            *a += b;
        }
        for (a, b) in self.nu.iter_mut().zip(&st.r) {
            *a += b;
        }
    }

    pub fn max_abs_diff(&self, other: &HyperParams) -> f64 {
        self.chi
            .iter()
            .zip(&other.chi)
            .chain(self.nu.iter().zip(&other.nu))
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Interface every conjugate family implements. Slices passed in are the
/// family's own `χ` / `ν` accumulators.
pub trait ConjugateFamily: Send + Sync + std::fmt::Debug {
    fn name(&self) -> &'static str;
    fn chi_dim(&self) -> usize;
    fn nu_dim(&self) -> usize;
    fn param_dim(&self) -> usize;
    fn param_names(&self) -> Vec<String>;

    /// `ln g(χ, ν)`; errors when the accumulators do not decode to a proper prior.
    fn log_g_raw(&self, chi: &[f64], nu: &[f64]) -> Result<f64>;

    fn sample_params_into(
        &self,
        chi: &[f64],
        nu: &[f64],
        rng: &mut RngStream,
        out: &mut ChiVec,
    ) -> Result<()>;

    /// Natural parameters `(θ, A(θ))` of a conventional parameter draw, such
    /// that the per-step log-likelihood is `ln h + θᵀs − A(θ)ᵀr`.
    fn natural_params_into(&self, params: &[f64], eta: &mut ChiVec, a: &mut NuVec) -> Result<()>;

    /// Posterior mean of the conventional parameters, where it exists.
    fn mean_params_into(&self, chi: &[f64], nu: &[f64], out: &mut ChiVec) -> Result<()>;
}

/// Gaussian residual with unknown variance and an inverse-gamma prior.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IgVariance {
    pub label: String,
}

impl IgVariance {
    pub fn new(label: impl Into<String>) -> Self {
        IgVariance {
            label: label.into(),
        }
    }

    /// Accumulators for `IG(shape, scale)`.
    pub fn prior(shape: f64, scale: f64) -> (ChiVec, NuVec) {
        (smallvec![scale], smallvec![shape])
    }

    /// Statistics contributed by one residual.
    #[inline]
    pub fn stat(residual: f64) -> (f64, f64) {
        (0.5 * residual * residual, 0.5)
    }

    #[inline]
    fn decode(chi: &[f64], nu: &[f64]) -> Result<(f64, f64)> {
        let (alpha, beta) = (nu[0], chi[0]);
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::InvalidHyperParams {
                family: "inverse-gamma",
                reason: format!("shape α = {alpha} must be > 0"),
            });
        }
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(Error::InvalidHyperParams {
                family: "inverse-gamma",
                reason: format!("scale β = {beta} must be > 0"),
            });
        }
        Ok((alpha, beta))
    }
}

impl ConjugateFamily for IgVariance {
    fn name(&self) -> &'static str {
        "inverse-gamma"
    }
    fn chi_dim(&self) -> usize {
        1
    }
    fn nu_dim(&self) -> usize {
        1
    }
    fn param_dim(&self) -> usize {
        1
    }
    fn param_names(&self) -> Vec<String> {
        vec![self.label.clone()]
    }

    #[inline]
    fn log_g_raw(&self, chi: &[f64], nu: &[f64]) -> Result<f64> {
        let (alpha, beta) = Self::decode(chi, nu)?;
        Ok(alpha * beta.ln() - ln_gamma_memo(alpha))
    }

    fn sample_params_into(
        &self,
        chi: &[f64],
        nu: &[f64],
        rng: &mut RngStream,
        out: &mut ChiVec,
    ) -> Result<()> {
        let (alpha, beta) = Self::decode(chi, nu)?;
        out.push(sample_inverse_gamma(alpha, beta, rng));
        Ok(())
    }

    fn natural_params_into(&self, params: &[f64], eta: &mut ChiVec, a: &mut NuVec) -> Result<()> {
        let s2 = params[0];
        if !(s2 > 0.0) {
            return Err(Error::param("inverse-gamma channel", "variance", s2));
        }
        eta.push(-1.0 / s2);
        a.push(s2.ln());
        Ok(())
    }

    fn mean_params_into(&self, chi: &[f64], nu: &[f64], out: &mut ChiVec) -> Result<()> {
        let (alpha, beta) = Self::decode(chi, nu)?;
        out.push(if alpha > 1.0 {
            beta / (alpha - 1.0)
        } else {
            f64::INFINITY
        });
        Ok(())
    }
}

/// Gaussian linear regression `δ = uᵀb + σ ε` with a normal-inverse-gamma
/// prior on `(b, σ²)`: `σ² ~ IG(α, β)`, `b | σ² ~ N(μ, σ² Λ⁻¹)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NigRegression {
    pub dim: usize,
    pub coef_label: String,
    pub var_label: String,
}

/// Conventional NIG parameters decoded from accumulators.
#[derive(Clone, Debug, PartialEq)]
pub struct NigDecoded {
    pub mean: Vec<f64>,
    pub precision: Vec<f64>,
    pub chol: Vec<f64>,
    pub shape: f64,
    pub scale: f64,
}

impl NigRegression {
    pub fn new(dim: usize, coef_label: impl Into<String>, var_label: impl Into<String>) -> Self {
        NigRegression {
            dim,
            coef_label: coef_label.into(),
            var_label: var_label.into(),
        }
    }

    /// Accumulators for `NIG(mean, precision, shape, scale)`.
    pub fn prior(mean: &[f64], precision: &[f64], shape: f64, scale: f64) -> (ChiVec, NuVec) {
        let d = mean.len();
        let mut chi = ChiVec::new();
        for i in 0..d {
            chi.push((0..d).map(|j| precision[i * d + j] * mean[j]).sum());
        }
        chi.extend_from_slice(precision);
        let quad: f64 = (0..d)
            .map(|i| mean[i] * (0..d).map(|j| precision[i * d + j] * mean[j]).sum::<f64>())
            .sum();
        chi.push(2.0 * scale + quad);
        (chi, smallvec![shape])
    }

    /// Statistics contributed by one regression row `(u, δ)`; appended to `s`.
    #[inline]
    pub fn push_stat(u: &[f64], delta: f64, s: &mut ChiVec, r: &mut NuVec) {
        for &ui in u {
            s.push(ui * delta);
        }
        for &ui in u {
            for &uj in u {
                s.push(ui * uj);
            }
        }
        s.push(delta * delta);
        r.push(0.5);
    }

    pub fn decode(&self, chi: &[f64], nu: &[f64]) -> Result<NigDecoded> {
        let d = self.dim;
        let eta = &chi[..d];
        let precision = &chi[d..d + d * d];
        let k = chi[d + d * d];
        let alpha = nu[0];
        let invalid = |reason: String| Error::InvalidHyperParams {
            family: "normal-inverse-gamma",
            reason,
        };
        let chol = linalg::cholesky(precision, d)
            .ok_or_else(|| invalid("precision matrix is not positive definite".into()))?;
        let mean = linalg::chol_solve(&chol, d, eta);
        let quad: f64 = eta.iter().zip(&mean).map(|(a, b)| a * b).sum();
        let scale = 0.5 * (k - quad);
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(invalid(format!("shape α = {alpha} must be > 0")));
        }
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(invalid(format!("scale β = {scale} must be > 0")));
        }
        Ok(NigDecoded {
            mean,
            precision: precision.to_vec(),
            chol,
            shape: alpha,
            scale,
        })
    }
}

impl ConjugateFamily for NigRegression {
    fn name(&self) -> &'static str {
        "normal-inverse-gamma"
    }
    fn chi_dim(&self) -> usize {
        self.dim + self.dim * self.dim + 1
    }
    fn nu_dim(&self) -> usize {
        1
    }
    fn param_dim(&self) -> usize {
        self.dim + 1
    }
    fn param_names(&self) -> Vec<String> {
        let mut v: Vec<String> = (0..self.dim)
            .map(|i| format!("{}{}", self.coef_label, i + 1))
            .collect();
        v.push(self.var_label.clone());
        v
    }

    fn log_g_raw(&self, chi: &[f64], nu: &[f64]) -> Result<f64> {
        let dec = self.decode(chi, nu)?;
        let d = self.dim as f64;
        Ok(-0.5 * d * LN_2PI
            + 0.5 * linalg::chol_logdet(&dec.chol, self.dim)
            + dec.shape * dec.scale.ln()
            - ln_gamma_memo(dec.shape))
    }

    fn sample_params_into(
        &self,
        chi: &[f64],
        nu: &[f64],
        rng: &mut RngStream,
        out: &mut ChiVec,
    ) -> Result<()> {
        let dec = self.decode(chi, nu)?;
        let s2 = sample_inverse_gamma(dec.shape, dec.scale, rng);
        let b = linalg::sample_mvn_precision(&dec.mean, &dec.precision, s2, self.dim, rng);
        out.extend_from_slice(&b);
        out.push(s2);
        Ok(())
    }

    fn natural_params_into(&self, params: &[f64], eta: &mut ChiVec, a: &mut NuVec) -> Result<()> {
        let d = self.dim;
        let b = &params[..d];
        let s2 = params[d];
        if !(s2 > 0.0) {
            return Err(Error::param("normal-inverse-gamma channel", "variance", s2));
        }
        for &bi in b {
            eta.push(bi / s2);
        }
        for &bi in b {
            for &bj in b {
                eta.push(-0.5 * bi * bj / s2);
            }
        }
        eta.push(-0.5 / s2);
        a.push(s2.ln());
        Ok(())
    }

    fn mean_params_into(&self, chi: &[f64], nu: &[f64], out: &mut ChiVec) -> Result<()> {
        let dec = self.decode(chi, nu)?;
        out.extend_from_slice(&dec.mean);
        out.push(if dec.shape > 1.0 {
            dec.scale / (dec.shape - 1.0)
        } else {
            f64::INFINITY
        });
        Ok(())
    }
}

/// Binomial success probability with a beta prior.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BetaBinomial {
    pub label: String,
}

impl BetaBinomial {
    pub fn new(label: impl Into<String>) -> Self {
        BetaBinomial {
            label: label.into(),
        }
    }

    pub fn prior(a: f64, b: f64) -> (ChiVec, NuVec) {
        (smallvec![a, b], NuVec::new())
    }

    /// Statistics for `successes` out of `trials`.
    #[inline]
    pub fn stat(successes: f64, trials: f64) -> (f64, f64) {
        (successes, trials - successes)
    }

    #[inline]
    fn decode(chi: &[f64]) -> Result<(f64, f64)> {
        let (a, b) = (chi[0], chi[1]);
        if a > 0.0 && b > 0.0 && a.is_finite() && b.is_finite() {
            Ok((a, b))
        } else {
            Err(Error::InvalidHyperParams {
                family: "beta",
                reason: format!("(a, b) = ({a}, {b}) must both be > 0"),
            })
        }
    }
}

impl ConjugateFamily for BetaBinomial {
    fn name(&self) -> &'static str {
        "beta"
    }
    fn chi_dim(&self) -> usize {
        2
    }
    fn nu_dim(&self) -> usize {
        0
    }
    fn param_dim(&self) -> usize {
        1
    }
    fn param_names(&self) -> Vec<String> {
        vec![self.label.clone()]
    }

    #[inline]
    fn log_g_raw(&self, chi: &[f64], _nu: &[f64]) -> Result<f64> {
        let (a, b) = Self::decode(chi)?;
        Ok(-ln_beta(a, b))
    }

    fn sample_params_into(
        &self,
        chi: &[f64],
        _nu: &[f64],
        rng: &mut RngStream,
        out: &mut ChiVec,
    ) -> Result<()> {
        let (a, b) = Self::decode(chi)?;
        let x = sample_gamma(a, rng);
        let y = sample_gamma(b, rng);
        out.push(x / (x + y));
        Ok(())
    }

    fn natural_params_into(&self, params: &[f64], eta: &mut ChiVec, _a: &mut NuVec) -> Result<()> {
        let p = params[0];
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::param("beta channel", "probability", p));
        }
        eta.push(p.ln());
        eta.push((-p).ln_1p());
        Ok(())
    }

    fn mean_params_into(&self, chi: &[f64], _nu: &[f64], out: &mut ChiVec) -> Result<()> {
        let (a, b) = Self::decode(chi)?;
        out.push(a / (a + b));
        Ok(())
    }
}

/// One block of a product family.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum Family {
    InverseGamma(IgVariance),
    NormalInverseGamma(NigRegression),
    Beta(BetaBinomial),
}

macro_rules! dispatch {
    ($self:ident, $f:ident => $body:expr) => {
        match $self {
            Family::InverseGamma($f) => $body,
            Family::NormalInverseGamma($f) => $body,
            Family::Beta($f) => $body,
        }
    };
}

impl ConjugateFamily for Family {
    fn name(&self) -> &'static str {
        dispatch!(self, f => f.name())
    }
    fn chi_dim(&self) -> usize {
        dispatch!(self, f => f.chi_dim())
    }
    fn nu_dim(&self) -> usize {
        dispatch!(self, f => f.nu_dim())
    }
    fn param_dim(&self) -> usize {
        dispatch!(self, f => f.param_dim())
    }
    fn param_names(&self) -> Vec<String> {
        dispatch!(self, f => f.param_names())
    }
    #[inline]
    fn log_g_raw(&self, chi: &[f64], nu: &[f64]) -> Result<f64> {
        dispatch!(self, f => f.log_g_raw(chi, nu))
    }
    fn sample_params_into(
        &self,
        chi: &[f64],
        nu: &[f64],
        rng: &mut RngStream,
        out: &mut ChiVec,
    ) -> Result<()> {
        dispatch!(self, f => f.sample_params_into(chi, nu, rng, out))
    }
    fn natural_params_into(&self, params: &[f64], eta: &mut ChiVec, a: &mut NuVec) -> Result<()> {
        dispatch!(self, f => f.natural_params_into(params, eta, a))
    }
    fn mean_params_into(&self, chi: &[f64], nu: &[f64], out: &mut ChiVec) -> Result<()> {
        dispatch!(self, f => f.mean_params_into(chi, nu, out))
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
struct Offsets {
    chi: usize,
    nu: usize,
    param: usize,
}

/// Independent parameter blocks treated jointly; `ln g` is the sum over blocks.
#[derive(Clone, Debug, PartialEq)]
pub struct ProductFamily {
    blocks: Vec<Family>,
    offsets: Vec<Offsets>,
    dims: Offsets,
}

impl ProductFamily {
    pub fn new(blocks: Vec<Family>) -> Self {
        let mut offsets = Vec::with_capacity(blocks.len());
        let mut acc = Offsets {
            chi: 0,
            nu: 0,
            param: 0,
        };
        for b in &blocks {
            offsets.push(acc);
            acc.chi += b.chi_dim();
            acc.nu += b.nu_dim();
            acc.param += b.param_dim();
        }
        ProductFamily {
            blocks,
            offsets,
            dims: acc,
        }
    }

    pub fn blocks(&self) -> &[Family] {
        &self.blocks
    }

    /// Concatenate per-block prior accumulators.
    pub fn prior(&self, parts: &[(ChiVec, NuVec)]) -> Result<HyperParams> {
        if parts.len() != self.blocks.len() {
            return Err(Error::DimensionMismatch {
                what: "product-family prior blocks",
                expected: self.blocks.len(),
                got: parts.len(),
            });
        }
        let mut hp = HyperParams {
            chi: ChiVec::new(),
            nu: NuVec::new(),
        };
        for (b, (c, n)) in self.blocks.iter().zip(parts) {
            if c.len() != b.chi_dim() || n.len() != b.nu_dim() {
                return Err(Error::DimensionMismatch {
                    what: "product-family prior block",
                    expected: b.chi_dim(),
                    got: c.len(),
                });
            }
            hp.chi.extend_from_slice(c);
            hp.nu.extend_from_slice(n);
        }
        self.log_g_raw(&hp.chi, &hp.nu)?;
        Ok(hp)
    }

    #[inline]
    pub fn block_slices<'a>(
        &self,
        b: usize,
        chi: &'a [f64],
        nu: &'a [f64],
    ) -> (&'a [f64], &'a [f64]) {
        let o = self.offsets[b];
        let blk = &self.blocks[b];
        (
            &chi[o.chi..o.chi + blk.chi_dim()],
            &nu[o.nu..o.nu + blk.nu_dim()],
        )
    }

    #[inline]
    pub fn block_log_g(&self, b: usize, chi: &[f64], nu: &[f64]) -> Result<f64> {
        let (c, n) = self.block_slices(b, chi, nu);
        self.blocks[b].log_g_raw(c, n)
    }

    /// Range of block `b`'s entries within a parameter draw.
    pub fn param_range(&self, b: usize) -> std::ops::Range<usize> {
        let o = self.offsets[b].param;
        o..o + self.blocks[b].param_dim()
    }
}

impl ConjugateFamily for ProductFamily {
    fn name(&self) -> &'static str {
        "product"
    }
    fn chi_dim(&self) -> usize {
        self.dims.chi
    }
    fn nu_dim(&self) -> usize {
        self.dims.nu
    }
    fn param_dim(&self) -> usize {
        self.dims.param
    }
    fn param_names(&self) -> Vec<String> {
        self.blocks.iter().flat_map(|b| b.param_names()).collect()
    }

    #[inline]
    fn log_g_raw(&self, chi: &[f64], nu: &[f64]) -> Result<f64> {
        let mut total = 0.0;
        for b in 0..self.blocks.len() {
            total += self.block_log_g(b, chi, nu)?;
        }
        Ok(total)
    }

    fn sample_params_into(
        &self,
        chi: &[f64],
        nu: &[f64],
        rng: &mut RngStream,
        out: &mut ChiVec,
    ) -> Result<()> {
        for b in 0..self.blocks.len() {
            let (c, n) = self.block_slices(b, chi, nu);
            self.blocks[b].sample_params_into(c, n, rng, out)?;
        }
        Ok(())
    }

    fn natural_params_into(&self, params: &[f64], eta: &mut ChiVec, a: &mut NuVec) -> Result<()> {
        for b in 0..self.blocks.len() {
            self.blocks[b].natural_params_into(&params[self.param_range(b)], eta, a)?;
        }
        Ok(())
    }

    fn mean_params_into(&self, chi: &[f64], nu: &[f64], out: &mut ChiVec) -> Result<()> {
        for b in 0..self.blocks.len() {
            let (c, n) = self.block_slices(b, chi, nu);
            self.blocks[b].mean_params_into(c, n, out)?;
        }
        Ok(())
    }
}

fn check_dims<F: ConjugateFamily + ?Sized>(fam: &F, hp: &HyperParams) -> Result<()> {
    if hp.chi.len() != fam.chi_dim() {
        return Err(Error::DimensionMismatch {
            what: "χ",
            expected: fam.chi_dim(),
            got: hp.chi.len(),
        });
    }
    if hp.nu.len() != fam.nu_dim() {
        return Err(Error::DimensionMismatch {
            what: "ν",
            expected: fam.nu_dim(),
            got: hp.nu.len(),
        });
    }
    Ok(())
}

/// `(χ + s, ν + r)`.
pub fn update_hyperparams(hp: &HyperParams, st: &SuffStat) -> Result<HyperParams> {
    if hp.chi.len() != st.s.len() {
        return Err(Error::DimensionMismatch {
            what: "statistic s",
            expected: hp.chi.len(),
            got: st.s.len(),
        });
    }
    if hp.nu.len() != st.r.len() {
        return Err(Error::DimensionMismatch {
            what: "statistic r",
            expected: hp.nu.len(),
            got: st.r.len(),
        });
    }
    Ok(hp.updated(st))
}

/// `(χ − s, ν − r)`; errors if the result no longer decodes to a proper prior.
pub fn downdate_hyperparams<F: ConjugateFamily + ?Sized>(
    fam: &F,
    hp: &HyperParams,
    st: &SuffStat,
) -> Result<HyperParams> {
    check_dims(fam, hp)?;
    let mut neg = st.clone();
    neg.s.iter_mut().for_each(|v| *v = -*v);
    neg.r.iter_mut().for_each(|v| *v = -*v);
    let out = update_hyperparams(hp, &neg)?;
    fam.log_g_raw(&out.chi, &out.nu)?;
    Ok(out)
}

pub fn log_g<F: ConjugateFamily + ?Sized>(fam: &F, hp: &HyperParams) -> Result<f64> {
    check_dims(fam, hp)?;
    fam.log_g_raw(&hp.chi, &hp.nu)
}

/// `ln h + ln g(χ, ν) − ln g(χ + s, ν + r)`: the log marginal density of
/// one step with the parameters integrated against `π(θ | χ, ν)`.
pub fn predictive_logpdf<F: ConjugateFamily + ?Sized>(
    fam: &F,
    hp: &HyperParams,
    st: &SuffStat,
    log_h: f64,
) -> Result<f64> {
    check_dims(fam, hp)?;
    let before = fam.log_g_raw(&hp.chi, &hp.nu)?;
    if log_h == f64::NEG_INFINITY {
        return Ok(f64::NEG_INFINITY);
    }
    let after = update_hyperparams(hp, st)?;
    Ok(log_h + before - fam.log_g_raw(&after.chi, &after.nu)?)
}

pub fn sample_posterior_params<F: ConjugateFamily + ?Sized>(
    fam: &F,
    hp: &HyperParams,
    rng: &mut RngStream,
) -> Result<ParamDraw> {
    check_dims(fam, hp)?;
    let mut out = ChiVec::new();
    fam.sample_params_into(&hp.chi, &hp.nu, rng, &mut out)?;
    Ok(ParamDraw(out))
}

pub fn posterior_mean_params<F: ConjugateFamily + ?Sized>(
    fam: &F,
    hp: &HyperParams,
) -> Result<ParamDraw> {
    check_dims(fam, hp)?;
    let mut out = ChiVec::new();
    fam.mean_params_into(&hp.chi, &hp.nu, &mut out)?;
    Ok(ParamDraw(out))
}

/// `ln h + θᵀs − A(θ)ᵀr` for a conventional parameter draw.
pub fn log_likelihood_from_stats<F: ConjugateFamily + ?Sized>(
    fam: &F,
    params: &[f64],
    st: &SuffStat,
    log_h: f64,
) -> Result<f64> {
    let mut eta = ChiVec::new();
    let mut a = NuVec::new();
    fam.natural_params_into(params, &mut eta, &mut a)?;
    let dot: f64 = eta.iter().zip(&st.s).map(|(x, y)| x * y).sum();
    let part: f64 = a.iter().zip(&st.r).map(|(x, y)| x * y).sum();
    Ok(log_h + dot - part)
}
