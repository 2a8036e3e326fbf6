//! State-space models with scalar latent states.
//!
//! A model binds its dynamics and observation law to a [`ProductFamily`] of
//! conjugate parameter blocks. The parameter-conditioned methods drive the
//! standard samplers; the statistic / base-measure methods drive the
//! marginalized ones.

mod epidemic;
mod gaussian;
mod population;

pub use epidemic::{EpidemicModel, EpidemicPrior};
pub use gaussian::{benchmark_mean, GaussianIgModel, IgPriors, ObservationMap, TransitionMean};
pub use population::{population_step_components, PopulationModel, PopulationPrior};

use crate::conjugacy::{
    log_likelihood_from_stats, predictive_logpdf, ChiVec, ConjugateFamily, HyperParams, NuVec,
    ParamDraw, ProductFamily, SuffStat,
};
use crate::error::Result;
use crate::rng::RngStream;

pub trait StateSpaceModel: Send + Sync {
    fn name(&self) -> &str;

    fn family(&self) -> &ProductFamily;

    /// Prior hyperparameters `(χ₀, ν₀)`.
    fn prior(&self) -> &HyperParams;

    fn sample_initial(&self, rng: &mut RngStream) -> f64;

    fn log_initial(&self, x0: f64) -> f64;

    /// Append `(s_t, r_t)` for the step `x_prev → x` with observation `y`.
    fn stat_into(&self, x: f64, x_prev: f64, y: f64, t: usize, s: &mut ChiVec, r: &mut NuVec);

    /// `ln h_t(x, x_prev, y)`; `-inf` off the support.
    fn log_base(&self, x: f64, x_prev: f64, y: f64, t: usize) -> f64;

    /// Parameter-free factor of the transition density.
    fn log_base_transition(&self, x: f64, x_prev: f64, t: usize) -> f64;

    /// Family blocks that parameterize the transition; the rest belong to
    /// the observation law.
    fn transition_blocks(&self) -> &[usize];

    /// Reject parameter values the dynamics cannot use (e.g. zero noise).
    fn check_params(&self, theta: &ParamDraw) -> Result<()>;

    fn sample_transition(
        &self,
        theta: &ParamDraw,
        x_prev: f64,
        t: usize,
        rng: &mut RngStream,
    ) -> f64;

    fn log_transition(&self, theta: &ParamDraw, x: f64, x_prev: f64, t: usize) -> f64;

    fn sample_observation(&self, theta: &ParamDraw, x: f64, t: usize, rng: &mut RngStream) -> f64;

    fn log_observation(&self, theta: &ParamDraw, y: f64, x: f64, t: usize) -> f64;

    /// Draw from `p(x_t | x_prev, χ, ν)` with the transition parameters integrated out.
    fn sample_marginal_transition(
        &self,
        hp: &HyperParams,
        x_prev: f64,
        t: usize,
        rng: &mut RngStream,
    ) -> f64;

    fn log_marginal_transition(&self, hp: &HyperParams, x: f64, x_prev: f64, t: usize) -> f64;

    fn stat(&self, x: f64, x_prev: f64, y: f64, t: usize) -> SuffStat {
        let mut s = ChiVec::new();
        let mut r = NuVec::new();
        self.stat_into(x, x_prev, y, t, &mut s, &mut r);
        SuffStat { s, r }
    }

    /// `ln p(x_t, y_t | x_{t−1}, θ)`.
    fn log_joint_step(&self, theta: &ParamDraw, x: f64, x_prev: f64, y: f64, t: usize) -> f64 {
        self.log_transition(theta, x, x_prev, t) + self.log_observation(theta, y, x, t)
    }

    /// `ln p(x_t, y_t | x_{0:t−1}, y_{1:t−1})` from the hyperparameters after `t − 1` steps.
    fn predictive_logpdf(
        &self,
        hp: &HyperParams,
        x: f64,
        x_prev: f64,
        y: f64,
        t: usize,
    ) -> Result<f64> {
        let st = self.stat(x, x_prev, y, t);
        predictive_logpdf(self.family(), hp, &st, self.log_base(x, x_prev, y, t))
    }

    /// Same step likelihood reconstructed from `h_t · exp(θᵀs − Aᵀr)`.
    fn log_joint_step_from_stats(
        &self,
        theta: &ParamDraw,
        x: f64,
        x_prev: f64,
        y: f64,
        t: usize,
    ) -> Result<f64> {
        let st = self.stat(x, x_prev, y, t);
        log_likelihood_from_stats(self.family(), theta, &st, self.log_base(x, x_prev, y, t))
    }

    fn param_names(&self) -> Vec<String> {
        self.family().param_names()
    }
}

/// Models with parameters outside the conjugate blocks; those are moved by
/// Metropolis–Hastings while the conjugate ones are integrated out.
pub trait PartiallyConjugate: StateSpaceModel + Sized {
    fn unmarginalized_names(&self) -> Vec<String>;

    fn unmarginalized(&self) -> Vec<f64>;

    fn with_unmarginalized(&self, theta_u: &[f64]) -> Result<Self>;

    fn log_prior_unmarginalized(&self, theta_u: &[f64]) -> f64;
}

/// Fold the statistics of a whole trajectory into the prior: `(χ_T, ν_T)`.
pub fn trajectory_hyperparams<M: StateSpaceModel + ?Sized>(
    model: &M,
    x: &[f64],
    y: &[f64],
) -> HyperParams {
    let mut hp = model.prior().clone();
    for t in 1..x.len() {
        let st = model.stat(x[t], x[t - 1], y[t - 1], t);
        hp.add_assign(&st);
    }
    hp
}

/// `ln p(x_{0:T}, y_{1:T})` with the conjugate parameters integrated out,
/// by telescoping the one-step predictives from the prior.
pub fn log_marginal_joint<M: StateSpaceModel + ?Sized>(
    model: &M,
    x: &[f64],
    y: &[f64],
) -> Result<f64> {
    let mut hp = model.prior().clone();
    let mut total = model.log_initial(x[0]);
    for t in 1..x.len() {
        total += model.predictive_logpdf(&hp, x[t], x[t - 1], y[t - 1], t)?;
        let st = model.stat(x[t], x[t - 1], y[t - 1], t);
        hp.add_assign(&st);
    }
    Ok(total)
}

/// `ln p(x_{0:T}, y_{1:T} | θ)`.
pub fn log_joint<M: StateSpaceModel + ?Sized>(
    model: &M,
    theta: &ParamDraw,
    x: &[f64],
    y: &[f64],
) -> f64 {
    let mut total = model.log_initial(x[0]);
    for t in 1..x.len() {
        total += model.log_joint_step(theta, x[t], x[t - 1], y[t - 1], t);
    }
    total
}

/// Forward simulation: `(x_{0:T}, y_{1:T})`.
pub fn simulate<M: StateSpaceModel + ?Sized>(
    model: &M,
    theta: &ParamDraw,
    horizon: usize,
    rng: &mut RngStream,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if theta.len() != model.family().param_dim() {
        return Err(crate::Error::DimensionMismatch {
            what: "parameter draw",
            expected: model.family().param_dim(),
            got: theta.len(),
        });
    }
    let mut x = Vec::with_capacity(horizon + 1);
    let mut y = Vec::with_capacity(horizon);
    x.push(model.sample_initial(rng));
    for t in 1..=horizon {
        let xt = model.sample_transition(theta, x[t - 1], t, rng);
        x.push(xt);
        y.push(model.sample_observation(theta, xt, t, rng));
    }
    Ok((x, y))
}

/// Draw `θ ~ π(θ | χ_T(x), ν_T(x))` given a full trajectory.
pub fn sample_params_given_trajectory<M: StateSpaceModel + ?Sized>(
    model: &M,
    x: &[f64],
    y: &[f64],
    rng: &mut RngStream,
) -> Result<ParamDraw> {
    let hp = trajectory_hyperparams(model, x, y);
    crate::conjugacy::sample_posterior_params(model.family(), &hp, rng)
}
