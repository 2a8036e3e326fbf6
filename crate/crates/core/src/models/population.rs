use serde::{Deserialize, Serialize};

use super::{PartiallyConjugate, StateSpaceModel};
use crate::conjugacy::{
    ChiVec, Family, HyperParams, IgVariance, NigRegression, NuVec, ParamDraw, ProductFamily,
};
use crate::dist::{normal_logpdf, sample_inverse_gamma, Density, LN_2PI};
use crate::error::{Error, Result};
use crate::linalg::chol_solve;
use crate::rng::RngStream;

/// Regressor `u_t = (1, n_t^c)` of the log-population growth.
pub fn population_step_components(n: f64, c: f64) -> Result<[f64; 2]> {
    if !(n > 0.0) || !n.is_finite() {
        return Err(Error::param("population step", "n_t", n));
    }
    Ok([1.0, n.powf(c)])
}

/// Conjugate priors `b, σ_v² ~ NIG(μ, Λ, α_v, β_v)`, `σ_w² ~ IG(α_w, β_w)`
/// and `c ~ N(0, σ_c²)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PopulationPrior {
    pub mu: [f64; 2],
    /// Row-major 2×2 precision.
    pub lambda: [f64; 4],
    pub alpha_v: f64,
    pub beta_v: f64,
    pub alpha_w: f64,
    pub beta_w: f64,
    pub sigma2_c: f64,
}

impl Default for PopulationPrior {
    fn default() -> Self {
        PopulationPrior {
            mu: [1.0, 1.0],
            lambda: [1.0, 0.0, 0.0, 1.0],
            alpha_v: 2.5,
            beta_v: 2.5,
            alpha_w: 2.5,
            beta_w: 2.5,
            sigma2_c: 4.0,
        }
    }
}

/// `ln n_t = ln n_{t−1} + [1, n_{t−1}^c] b + σ_v v_t`, `y_t = n_t + σ_w w_t`.
///
/// The latent state is `z_t = ln n_t`. Parameter draws are
/// `[b₁, b₂, σ_v², σ_w²]`; `c` is carried by the model itself.
#[derive(Clone, Debug)]
pub struct PopulationModel {
    pub c: f64,
    pub priors: PopulationPrior,
    pub x0_mean: f64,
    pub x0_var: f64,
    family: ProductFamily,
    nig: NigRegression,
    prior: HyperParams,
}

impl PopulationModel {
    pub fn new(priors: PopulationPrior, c: f64, x0_mean: f64, x0_var: f64) -> Result<Self> {
        if !c.is_finite() {
            return Err(Error::param("population model", "c", c));
        }
        if !(x0_var > 0.0 && x0_var.is_finite()) {
            return Err(Error::param("initial state", "x0_var", x0_var));
        }
        if !(priors.sigma2_c > 0.0 && priors.sigma2_c.is_finite()) {
            return Err(Error::param(
                "population prior",
                "sigma2_c",
                priors.sigma2_c,
            ));
        }
        let nig = NigRegression::new(2, "b", "sigma2_v");
        let family = ProductFamily::new(vec![
            Family::NormalInverseGamma(nig.clone()),
            Family::InverseGamma(IgVariance::new("sigma2_w")),
        ]);
        let prior = family.prior(&[
            NigRegression::prior(&priors.mu, &priors.lambda, priors.alpha_v, priors.beta_v),
            IgVariance::prior(priors.alpha_w, priors.beta_w),
        ])?;
        Ok(PopulationModel {
            c,
            priors,
            x0_mean,
            x0_var,
            family,
            nig,
            prior,
        })
    }

    /// `z₀ ~ N(ln y₁, 1)`.
    pub fn for_counts(priors: PopulationPrior, c: f64, y: &[f64]) -> Result<Self> {
        let first = *y
            .first()
            .ok_or_else(|| Error::InvalidInput("population data is empty".into()))?;
        if !(first > 0.0) {
            return Err(Error::param("population data", "y[1]", first));
        }
        Self::new(priors, c, first.ln(), 1.0)
    }

    #[inline]
    fn regressor(&self, z_prev: f64) -> [f64; 2] {
        [1.0, (self.c * z_prev).exp()]
    }

    #[inline]
    fn transition_mean(&self, theta: &ParamDraw, z_prev: f64) -> f64 {
        let u = self.regressor(z_prev);
        z_prev + u[0] * theta[0] + u[1] * theta[1]
    }

    /// Location and squared scale of the Student-t marginal transition on δ = z − z_prev.
    fn marginal_increment(&self, hp: &HyperParams, z_prev: f64) -> Option<(f64, f64, f64, f64)> {
        let (chi, nu) = self.family.block_slices(0, &hp.chi, &hp.nu);
        let dec = self.nig.decode(chi, nu).ok()?;
        let u = self.regressor(z_prev);
        let loc = u[0] * dec.mean[0] + u[1] * dec.mean[1];
        let pu = chol_solve(&dec.chol, 2, &u);
        let quad = u[0] * pu[0] + u[1] * pu[1];
        let scale2 = dec.scale * (1.0 + quad) / dec.shape;
        (loc.is_finite() && scale2.is_finite() && scale2 > 0.0).then_some((
            loc,
            scale2,
            dec.shape,
            dec.scale * (1.0 + quad),
        ))
    }
}

impl StateSpaceModel for PopulationModel {
    fn name(&self) -> &str {
        "population"
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
    fn stat_into(&self, x: f64, x_prev: f64, y: f64, _t: usize, s: &mut ChiVec, r: &mut NuVec) {
        let u = self.regressor(x_prev);
        NigRegression::push_stat(&u, x - x_prev, s, r);
        let ew = y - x.exp();
        s.push(0.5 * ew * ew);
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
        if theta.len() != 4 {
            return Err(Error::DimensionMismatch {
                what: "population model parameters",
                expected: 4,
                got: theta.len(),
            });
        }
        for (i, field) in ["b1", "b2"].iter().enumerate() {
            if !theta[i].is_finite() {
                return Err(Error::param("population model", field, theta[i]));
            }
        }
        for (i, field) in [(2, "sigma2_v"), (3, "sigma2_w")] {
            if !(theta[i] > 0.0 && theta[i].is_finite()) {
                return Err(Error::param("population model", field, theta[i]));
            }
        }
        Ok(())
    }

    fn sample_transition(
        &self,
        theta: &ParamDraw,
        x_prev: f64,
        _t: usize,
        rng: &mut RngStream,
    ) -> f64 {
        self.transition_mean(theta, x_prev) + theta[2].sqrt() * rng.standard_normal()
    }

    fn log_transition(&self, theta: &ParamDraw, x: f64, x_prev: f64, _t: usize) -> f64 {
        normal_logpdf(x, self.transition_mean(theta, x_prev), theta[2])
    }

    fn sample_observation(&self, theta: &ParamDraw, x: f64, _t: usize, rng: &mut RngStream) -> f64 {
        x.exp() + theta[3].sqrt() * rng.standard_normal()
    }

    fn log_observation(&self, theta: &ParamDraw, y: f64, x: f64, _t: usize) -> f64 {
        normal_logpdf(y, x.exp(), theta[3])
    }

    fn sample_marginal_transition(
        &self,
        hp: &HyperParams,
        x_prev: f64,
        _t: usize,
        rng: &mut RngStream,
    ) -> f64 {
        match self.marginal_increment(hp, x_prev) {
            Some((loc, _, shape, scale)) => {
                let s2 = sample_inverse_gamma(shape, scale, rng);
                x_prev + loc + s2.sqrt() * rng.standard_normal()
            }
            None => f64::NAN,
        }
    }

    fn log_marginal_transition(&self, hp: &HyperParams, x: f64, x_prev: f64, _t: usize) -> f64 {
        match self.marginal_increment(hp, x_prev) {
            Some((loc, scale2, shape, _)) => Density::StudentT {
                dof: 2.0 * shape,
                loc: x_prev + loc,
                scale: scale2.sqrt(),
            }
            .log_pdf(x)
            .unwrap_or(f64::NEG_INFINITY),
            None => f64::NEG_INFINITY,
        }
    }
}

impl PartiallyConjugate for PopulationModel {
    fn unmarginalized_names(&self) -> Vec<String> {
        vec!["c".into()]
    }

    fn unmarginalized(&self) -> Vec<f64> {
        vec![self.c]
    }

    fn with_unmarginalized(&self, theta_u: &[f64]) -> Result<Self> {
        if theta_u.len() != 1 {
            return Err(Error::DimensionMismatch {
                what: "unmarginalized population parameters",
                expected: 1,
                got: theta_u.len(),
            });
        }
        if !theta_u[0].is_finite() {
            return Err(Error::param("population model", "c", theta_u[0]));
        }
        let mut m = self.clone();
        m.c = theta_u[0];
        Ok(m)
    }

    fn log_prior_unmarginalized(&self, theta_u: &[f64]) -> f64 {
        normal_logpdf(theta_u[0], 0.0, self.priors.sigma2_c)
    }
}
