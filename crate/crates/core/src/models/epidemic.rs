use serde::{Deserialize, Serialize};

use super::StateSpaceModel;
use crate::conjugacy::{
    BetaBinomial, ChiVec, Family, HyperParams, NuVec, ParamDraw, ProductFamily,
};
use crate::dist::{binomial_logpmf, ln_choose, Density};
use crate::error::{Error, Result};
use crate::rng::RngStream;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EpidemicPrior {
    pub a: f64,
    pub b: f64,
}

impl Default for EpidemicPrior {
    fn default() -> Self {
        EpidemicPrior { a: 1.0, b: 1.0 }
    }
}

/// Single-compartment count model with a beta-distributed reporting rate:
///
/// `x_t ~ Bin(P, 1 − exp(−κ − λ x_{t−1} / P))`, `y_t ~ Bin(x_t, ρ)`, `ρ ~ Beta(a, b)`.
///
/// `x_t` is the number of cases in period `t` and `y_t` the reported ones.
/// The dynamics parameters are known; only `ρ` is inferred.
#[derive(Clone, Debug)]
pub struct EpidemicModel {
    pub population: u64,
    pub background: f64,
    pub contact: f64,
    /// Success probability of `x₀ ~ Bin(P, p₀)`.
    pub initial_rate: f64,
    pub priors: EpidemicPrior,
    family: ProductFamily,
    prior: HyperParams,
}

impl EpidemicModel {
    pub fn new(
        population: u64,
        background: f64,
        contact: f64,
        initial_rate: f64,
        priors: EpidemicPrior,
    ) -> Result<Self> {
        if population == 0 {
            return Err(Error::param("epidemic model", "population", 0.0));
        }
        if !(background >= 0.0 && background.is_finite()) {
            return Err(Error::param("epidemic model", "background", background));
        }
        if !(contact >= 0.0 && contact.is_finite()) {
            return Err(Error::param("epidemic model", "contact", contact));
        }
        if !(0.0..=1.0).contains(&initial_rate) {
            return Err(Error::param("epidemic model", "initial_rate", initial_rate));
        }
        let family = ProductFamily::new(vec![Family::Beta(BetaBinomial::new("rho"))]);
        let prior = family.prior(&[BetaBinomial::prior(priors.a, priors.b)])?;
        Ok(EpidemicModel {
            population,
            background,
            contact,
            initial_rate,
            priors,
            family,
            prior,
        })
    }

    /// Per-individual infection probability given last period's case count.
    #[inline]
    pub fn infection_probability(&self, x_prev: f64) -> f64 {
        -(-self.background - self.contact * x_prev / self.population as f64).exp_m1()
    }

    #[inline]
    fn log_dynamics(&self, x: f64, x_prev: f64) -> f64 {
        binomial_logpmf(
            x,
            self.population as f64,
            self.infection_probability(x_prev),
        )
    }

    fn draw_cases(&self, x_prev: f64, rng: &mut RngStream) -> f64 {
        Density::Binomial {
            n: self.population,
            p: self.infection_probability(x_prev),
        }
        .sample(rng)
        .expect("probability in [0, 1]")
    }
}

impl StateSpaceModel for EpidemicModel {
    fn name(&self) -> &str {
        "epidemic"
    }

    fn family(&self) -> &ProductFamily {
        &self.family
    }

    fn prior(&self) -> &HyperParams {
        &self.prior
    }

    fn sample_initial(&self, rng: &mut RngStream) -> f64 {
        Density::Binomial {
            n: self.population,
            p: self.initial_rate,
        }
        .sample(rng)
        .expect("validated")
    }

    fn log_initial(&self, x0: f64) -> f64 {
        binomial_logpmf(x0, self.population as f64, self.initial_rate)
    }

    #[inline]
    fn stat_into(&self, x: f64, _x_prev: f64, y: f64, _t: usize, s: &mut ChiVec, _r: &mut NuVec) {
        let (succ, fail) = BetaBinomial::stat(y, x);
        s.push(succ);
        s.push(fail);
    }

    #[inline]
    fn log_base(&self, x: f64, x_prev: f64, y: f64, _t: usize) -> f64 {
        if y < 0.0 || y > x || y.fract() != 0.0 {
            return f64::NEG_INFINITY;
        }
        self.log_dynamics(x, x_prev) + ln_choose(x, y)
    }

    #[inline]
    fn log_base_transition(&self, x: f64, x_prev: f64, _t: usize) -> f64 {
        self.log_dynamics(x, x_prev)
    }

    fn transition_blocks(&self) -> &[usize] {
        &[]
    }

    fn check_params(&self, theta: &ParamDraw) -> Result<()> {
        if theta.len() != 1 {
            return Err(Error::DimensionMismatch {
                what: "epidemic model parameters",
                expected: 1,
                got: theta.len(),
            });
        }
        if !(0.0..=1.0).contains(&theta[0]) {
            return Err(Error::param("epidemic model", "rho", theta[0]));
        }
        Ok(())
    }

    fn sample_transition(
        &self,
        _theta: &ParamDraw,
        x_prev: f64,
        _t: usize,
        rng: &mut RngStream,
    ) -> f64 {
        self.draw_cases(x_prev, rng)
    }

    fn log_transition(&self, _theta: &ParamDraw, x: f64, x_prev: f64, _t: usize) -> f64 {
        self.log_dynamics(x, x_prev)
    }

    fn sample_observation(&self, theta: &ParamDraw, x: f64, _t: usize, rng: &mut RngStream) -> f64 {
        Density::Binomial {
            n: x as u64,
            p: theta[0],
        }
        .sample(rng)
        .expect("validated")
    }

    fn log_observation(&self, theta: &ParamDraw, y: f64, x: f64, _t: usize) -> f64 {
        binomial_logpmf(y, x, theta[0])
    }

    fn sample_marginal_transition(
        &self,
        _hp: &HyperParams,
        x_prev: f64,
        _t: usize,
        rng: &mut RngStream,
    ) -> f64 {
        self.draw_cases(x_prev, rng)
    }

    fn log_marginal_transition(&self, _hp: &HyperParams, x: f64, x_prev: f64, _t: usize) -> f64 {
        self.log_dynamics(x, x_prev)
    }
}
