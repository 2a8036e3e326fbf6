use serde::{Deserialize, Serialize};

use super::StateSpaceModel;
use crate::conjugacy::{ChiVec, Family, HyperParams, IgVariance, NuVec, ParamDraw, ProductFamily};
use crate::dist::{normal_logpdf, sample_inverse_gamma, Density, LN_2PI};
use crate::error::{Error, Result};
use crate::rng::RngStream;

/// `x/2 + 25x/(1 + x²) + 8 cos(1.2 t)`.
#[inline]
pub fn benchmark_mean(x_prev: f64, t: usize) -> f64 {
    0.5 * x_prev + 25.0 * x_prev / (1.0 + x_prev * x_prev) + 8.0 * (1.2 * t as f64).cos()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum TransitionMean {
    /// The classic nonlinear growth benchmark, [`benchmark_mean`].
    Benchmark,
    Linear {
        a: f64,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ObservationMap {
    /// `x² / 20`
    Quadratic,
    Linear {
        c: f64,
    },
}

impl TransitionMean {
    #[inline]
    pub fn eval(&self, x_prev: f64, t: usize) -> f64 {
        match *self {
            TransitionMean::Benchmark => benchmark_mean(x_prev, t),
            TransitionMean::Linear { a } => a * x_prev,
        }
    }
}

impl ObservationMap {
    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        match *self {
            ObservationMap::Quadratic => x * x / 20.0,
            ObservationMap::Linear { c } => c * x,
        }
    }
}

/// Inverse-gamma priors on the process (`v`) and observation (`w`) variances.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IgPriors {
    pub alpha_v: f64,
    pub beta_v: f64,
    pub alpha_w: f64,
    pub beta_w: f64,
}

impl Default for IgPriors {
    fn default() -> Self {
        IgPriors {
            alpha_v: 1.0,
            beta_v: 1.0,
            alpha_w: 1.0,
            beta_w: 1.0,
        }
    }
}

/// `x_t = f(x_{t−1}, t) + v_t`, `y_t = g(x_t) + w_t` with Gaussian noise of
/// unknown variances `σ_v²`, `σ_w²`. Parameter draws are `[σ_v², σ_w²]`.
#[derive(Clone, Debug)]
pub struct GaussianIgModel {
    name: String,
    pub transition: TransitionMean,
    pub observation: ObservationMap,
    pub x0_mean: f64,
    pub x0_var: f64,
    pub priors: IgPriors,
    family: ProductFamily,
    prior: HyperParams,
}

impl GaussianIgModel {
    pub fn new(
        name: impl Into<String>,
        transition: TransitionMean,
        observation: ObservationMap,
        x0_mean: f64,
        x0_var: f64,
        priors: IgPriors,
    ) -> Result<Self> {
        if !(x0_var > 0.0 && x0_var.is_finite()) {
            return Err(Error::param("initial state", "x0_var", x0_var));
        }
        let family = ProductFamily::new(vec![
            Family::InverseGamma(IgVariance::new("sigma2_v")),
            Family::InverseGamma(IgVariance::new("sigma2_w")),
        ]);
        let prior = family.prior(&[
            IgVariance::prior(priors.alpha_v, priors.beta_v),
            IgVariance::prior(priors.alpha_w, priors.beta_w),
        ])?;
        Ok(GaussianIgModel {
            name: name.into(),
            transition,
            observation,
            x0_mean,
            x0_var,
            priors,
            family,
            prior,
        })
    }

    /// The nonlinear benchmark with `x₀ ~ N(0, 5)`.
    pub fn benchmark(priors: IgPriors) -> Result<Self> {
        Self::new(
            "benchmark",
            TransitionMean::Benchmark,
            ObservationMap::Quadratic,
            0.0,
            5.0,
            priors,
        )
    }

    pub fn linear_gaussian(
        a: f64,
        c: f64,
        x0_mean: f64,
        x0_var: f64,
        priors: IgPriors,
    ) -> Result<Self> {
        Self::new(
            "linear-gaussian",
            TransitionMean::Linear { a },
            ObservationMap::Linear { c },
            x0_mean,
            x0_var,
            priors,
        )
    }
}

impl StateSpaceModel for GaussianIgModel {
    fn name(&self) -> &str {
        &self.name
    }

    fn family(&self) -> &ProductFamily {
        &self.family
    }

    fn prior(&self) -> &HyperParams {
        &self.prior
    }

    fn sample_initial(&self, rng: &mut RngStream) -> f64 {
        self.x0_mean + self.x0_var.sqrt() * rng.standard_normal()
    }

    fn log_initial(&self, x0: f64) -> f64 {
        normal_logpdf(x0, self.x0_mean, self.x0_var)
    }

    #[inline]
    fn stat_into(&self, x: f64, x_prev: f64, y: f64, t: usize, s: &mut ChiVec, r: &mut NuVec) {
        let ev = x - self.transition.eval(x_prev, t);
        let ew = y - self.observation.eval(x);
        s.push(0.5 * ev * ev);
        s.push(0.5 * ew * ew);
        r.push(0.5);
        r.push(0.5);
    }

    #[inline]
    fn log_base(&self, _x: f64, _x_prev: f64, _y: f64, _t: usize) -> f64 {
        -LN_2PI
    }

    #[inline]
    fn log_base_transition(&self, _x: f64, _x_prev: f64, _t: usize) -> f64 {
        -0.5 * LN_2PI
    }

    fn transition_blocks(&self) -> &[usize] {
        &[0]
    }

    fn check_params(&self, theta: &ParamDraw) -> Result<()> {
        if theta.len() != 2 {
            return Err(Error::DimensionMismatch {
                what: "gaussian model parameters",
                expected: 2,
                got: theta.len(),
            });
        }
        if !(theta[0] > 0.0 && theta[0].is_finite()) {
            return Err(Error::param("gaussian model", "sigma2_v", theta[0]));
        }
        if !(theta[1] > 0.0 && theta[1].is_finite()) {
            return Err(Error::param("gaussian model", "sigma2_w", theta[1]));
        }
        Ok(())
    }

    #[inline]
    fn sample_transition(
        &self,
        theta: &ParamDraw,
        x_prev: f64,
        t: usize,
        rng: &mut RngStream,
    ) -> f64 {
        self.transition.eval(x_prev, t) + theta[0].sqrt() * rng.standard_normal()
    }

    #[inline]
    fn log_transition(&self, theta: &ParamDraw, x: f64, x_prev: f64, t: usize) -> f64 {
        normal_logpdf(x, self.transition.eval(x_prev, t), theta[0])
    }

    fn sample_observation(&self, theta: &ParamDraw, x: f64, _t: usize, rng: &mut RngStream) -> f64 {
        self.observation.eval(x) + theta[1].sqrt() * rng.standard_normal()
    }

    #[inline]
    fn log_observation(&self, theta: &ParamDraw, y: f64, x: f64, _t: usize) -> f64 {
        normal_logpdf(y, self.observation.eval(x), theta[1])
    }

    #[inline]
    fn sample_marginal_transition(
        &self,
        hp: &HyperParams,
        x_prev: f64,
        t: usize,
        rng: &mut RngStream,
    ) -> f64 {
        // Student-t as a scale mixture of normals
        let s2 = sample_inverse_gamma(hp.nu[0], hp.chi[0], rng);
        self.transition.eval(x_prev, t) + s2.sqrt() * rng.standard_normal()
    }

    fn log_marginal_transition(&self, hp: &HyperParams, x: f64, x_prev: f64, t: usize) -> f64 {
        let (alpha, beta) = (hp.nu[0], hp.chi[0]);
        Density::StudentT {
            dof: 2.0 * alpha,
            loc: self.transition.eval(x_prev, t),
            scale: (beta / alpha).sqrt(),
        }
        .log_pdf(x)
        .unwrap_or(f64::NEG_INFINITY)
    }
}
