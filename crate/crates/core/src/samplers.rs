//! MCMC drivers built on the SMC sweeps: particle Gibbs with and without
//! ancestor sampling, their marginalized versions, blocked marginalized
//! Gibbs, marginalized PMMH and marginalized importance sampling.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::conjugacy::{
    posterior_mean_params, sample_posterior_params, ConjugateFamily, HyperParams, ParamDraw,
};
use crate::dist::log_sum_exp;
use crate::error::{Error, Result};
use crate::models::{PartiallyConjugate, StateSpaceModel};
use crate::par;
use crate::rng::RngStream;
use crate::smc::{
    run_csmc, run_smc, CsmcOptions, ProposalKind, ReferenceState, Resampling, SmcOptions, Target,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Pg,
    Pgas,
    Mpg,
    Mpgas,
    BlockedMpg,
    BlockedMpgas,
    Mpmmh,
    Mis,
}

impl Method {
    pub const ALL: [Method; 8] = [
        Method::Pg,
        Method::Pgas,
        Method::Mpg,
        Method::Mpgas,
        Method::BlockedMpg,
        Method::BlockedMpgas,
        Method::Mpmmh,
        Method::Mis,
    ];

    pub fn tag(&self) -> &'static str {
        match self {
            Method::Pg => "pg",
            Method::Pgas => "pgas",
            Method::Mpg => "mpg",
            Method::Mpgas => "mpgas",
            Method::BlockedMpg => "blocked-mpg",
            Method::BlockedMpgas => "blocked-mpgas",
            Method::Mpmmh => "mpmmh",
            Method::Mis => "mis",
        }
    }

    pub fn is_blocked(&self) -> bool {
        matches!(self, Method::BlockedMpg | Method::BlockedMpgas)
    }

    pub fn is_marginal(&self) -> bool {
        !matches!(self, Method::Pg | Method::Pgas)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.tag() == s)
            .ok_or_else(|| {
                let tags: Vec<_> = Method::ALL.iter().map(|m| m.tag()).collect();
                Error::InvalidConfig(format!(
                    "unknown method '{s}'; valid methods: {}",
                    tags.join(", ")
                ))
            })
    }
}

#[derive(Clone, Debug)]
pub struct SamplerConfig {
    pub method: Method,
    pub particles: usize,
    pub iterations: usize,
    pub burn_in: usize,
    pub seed: u64,
    pub proposal: ProposalKind,
    pub resampling: Resampling,
    /// Blocking: `x_{0:B+L}` is refreshed given θ, then `x_{B+1:T}` marginally.
    pub block_b: usize,
    pub block_l: usize,
    /// Variance of the Gaussian random walk on the unmarginalized parameters.
    pub tau: f64,
    /// Starting θ for the parameter-conditioned steps; a prior draw otherwise.
    pub initial_theta: Option<ParamDraw>,
    /// Starting unmarginalized parameters for mPMMH; the model's values otherwise.
    pub initial_theta_u: Option<Vec<f64>>,
    pub store_trajectories: bool,
}

impl SamplerConfig {
    pub fn new(method: Method, particles: usize, iterations: usize) -> Self {
        SamplerConfig {
            method,
            particles,
            iterations,
            burn_in: 0,
            seed: 0,
            proposal: ProposalKind::Bootstrap,
            resampling: Resampling::Multinomial,
            block_b: 0,
            block_l: 0,
            tau: 0.05,
            initial_theta: None,
            initial_theta_u: None,
            store_trajectories: true,
        }
    }

    pub fn validate(&self, horizon: usize) -> Result<()> {
        if self.particles == 0 {
            return Err(Error::InvalidConfig(
                "particles (N) must be at least 1".into(),
            ));
        }
        if self.iterations == 0 {
            return Err(Error::InvalidConfig(
                "iterations (M) must be at least 1".into(),
            ));
        }
        if self.burn_in >= self.iterations {
            return Err(Error::InvalidConfig(format!(
                "burn_in ({}) must be below iterations ({})",
                self.burn_in, self.iterations
            )));
        }
        if horizon == 0 {
            return Err(Error::InvalidInput("no observations".into()));
        }
        if self.method.is_blocked() {
            if self.block_b == 0 {
                return Err(Error::InvalidConfig("blocking needs B >= 1".into()));
            }
            if self.block_b + self.block_l >= horizon {
                return Err(Error::InvalidConfig(format!(
                    "blocking needs B + L < T, got B = {}, L = {}, T = {horizon}",
                    self.block_b, self.block_l
                )));
            }
        }
        if self.method == Method::Mpmmh && !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "tau must be > 0, got {}",
                self.tau
            )));
        }
        Ok(())
    }

    fn smc_options(&self) -> SmcOptions {
        SmcOptions {
            particles: self.particles,
            proposal: self.proposal.clone(),
            resampling: self.resampling,
        }
    }
}

/// Output of one chain. Rows are iterations; burn-in is kept.
#[derive(Clone, Debug, PartialEq)]
pub struct Chain {
    pub method: Method,
    pub horizon: usize,
    pub param_names: Vec<String>,
    /// Row-major `M × P`.
    pub params: Vec<f64>,
    /// Row-major `M × (T + 1)`; empty if trajectories were not stored.
    pub trajectories: Vec<f64>,
    /// mPMMH: acceptance per iteration.
    pub accepted: Vec<bool>,
    /// mPMMH: current `ln p̂(y)`; mIS: `ln p̂(y)` of each run.
    pub log_z: Vec<f64>,
    /// mIS: self-normalized run weights.
    pub weights: Option<Vec<f64>>,
    /// mIS: per-run Rao-Blackwellized parameter means, `M × P`.
    pub rb_means: Option<Vec<f64>>,
    pub wall_seconds: f64,
}

impl Chain {
    fn new(method: Method, horizon: usize, param_names: Vec<String>, capacity: usize) -> Self {
        Chain {
            method,
            horizon,
            params: Vec::with_capacity(capacity * param_names.len()),
            param_names,
            trajectories: Vec::new(),
            accepted: Vec::new(),
            log_z: Vec::new(),
            weights: None,
            rb_means: None,
            wall_seconds: 0.0,
        }
    }

    pub fn iterations(&self) -> usize {
        self.params.len() / self.param_names.len().max(1)
    }

    pub fn param_dim(&self) -> usize {
        self.param_names.len()
    }

    pub fn param_row(&self, m: usize) -> &[f64] {
        let p = self.param_dim();
        &self.params[m * p..(m + 1) * p]
    }

    /// Draws of parameter `j` from iteration `from` on.
    pub fn param_series(&self, j: usize, from: usize) -> Vec<f64> {
        (from..self.iterations())
            .map(|m| self.param_row(m)[j])
            .collect()
    }

    pub fn param_index(&self, name: &str) -> Option<usize> {
        self.param_names.iter().position(|n| n == name)
    }

    pub fn has_trajectories(&self) -> bool {
        !self.trajectories.is_empty()
    }

    pub fn trajectory(&self, m: usize) -> &[f64] {
        let w = self.horizon + 1;
        &self.trajectories[m * w..(m + 1) * w]
    }

    /// Draws of `x_t` from iteration `from` on.
    pub fn state_series(&self, t: usize, from: usize) -> Vec<f64> {
        (from..self.iterations())
            .map(|m| self.trajectory(m)[t])
            .collect()
    }

    pub fn acceptance_rate(&self, from: usize) -> Option<f64> {
        if self.accepted.is_empty() {
            return None;
        }
        let tail = &self.accepted[from.min(self.accepted.len())..];
        Some(tail.iter().filter(|a| **a).count() as f64 / tail.len().max(1) as f64)
    }

    /// Per-row weights (mIS) or `None` for equally weighted MCMC output.
    pub fn row_weights(&self, from: usize) -> Option<Vec<f64>> {
        self.weights.as_ref().map(|w| {
            let tail = &w[from..];
            let s: f64 = tail.iter().sum();
            tail.iter().map(|v| v / s).collect()
        })
    }

    fn push(&mut self, theta: &[f64], x: Option<&[f64]>) {
        self.params.extend_from_slice(theta);
        if let Some(x) = x {
            self.trajectories.extend_from_slice(x);
        }
    }
}

fn iteration_stream(chain: &RngStream, m: usize) -> RngStream {
    chain.substream(m as u64 + 1)
}

fn initial_stream(chain: &RngStream) -> RngStream {
    chain.substream(0)
}

fn trajectory_hp<M: StateSpaceModel + ?Sized>(model: &M, r: &ReferenceState) -> HyperParams {
    r.hyperparams_through(model, r.horizon())
}

fn initial_theta<M: StateSpaceModel + ?Sized>(
    model: &M,
    config: &SamplerConfig,
    rng: &mut RngStream,
) -> Result<ParamDraw> {
    let theta = match &config.initial_theta {
        Some(t) => t.clone(),
        None => sample_posterior_params(model.family(), model.prior(), rng)?,
    };
    model.check_params(&theta).map_err(|e| {
        Error::InvalidConfig(format!(
            "initial parameters unusable ({e}); set initial_theta explicitly"
        ))
    })?;
    Ok(theta)
}

/// Initial reference from one unconditional sweep.
fn initial_reference<M: StateSpaceModel + ?Sized>(
    model: &M,
    target: Target<'_>,
    opts: &SmcOptions,
    y: &[f64],
    rng: &RngStream,
) -> Result<ReferenceState> {
    let ps = run_smc(model, target, opts, y, &rng.substream(0))?;
    let k = ps.draw_index(&mut rng.substream(1));
    ReferenceState::new(model, ps.trajectory(k), y)
}

/// Run one chain of any method except mPMMH.
pub fn run_sampler<M: StateSpaceModel + ?Sized>(
    model: &M,
    config: &SamplerConfig,
    y: &[f64],
    chain_id: u64,
) -> Result<Chain> {
    config.validate(y.len())?;
    let start = Instant::now();
    let rng = RngStream::new(config.seed, chain_id);
    let mut chain = match config.method {
        Method::Pg | Method::Pgas => run_pg(model, config, y, &rng)?,
        Method::Mpg | Method::Mpgas => run_mpg(model, config, y, &rng)?,
        Method::BlockedMpg | Method::BlockedMpgas => run_blocked(model, config, y, &rng)?,
        Method::Mis => run_mis(model, config, y, &rng)?,
        Method::Mpmmh => {
            return Err(Error::InvalidConfig(format!(
                "method mpmmh needs a model with unmarginalized parameters; model '{}' has none",
                model.name()
            )))
        }
    };
    chain.wall_seconds = start.elapsed().as_secs_f64();
    Ok(chain)
}

/// Like [`run_sampler`], also accepting mPMMH.
pub fn run_sampler_partial<M: PartiallyConjugate>(
    model: &M,
    config: &SamplerConfig,
    y: &[f64],
    chain_id: u64,
) -> Result<Chain> {
    if config.method != Method::Mpmmh {
        return run_sampler(model, config, y, chain_id);
    }
    config.validate(y.len())?;
    let start = Instant::now();
    let rng = RngStream::new(config.seed, chain_id);
    let mut chain = run_mpmmh(model, config, y, &rng)?;
    chain.wall_seconds = start.elapsed().as_secs_f64();
    Ok(chain)
}

/// `k` independent chains with chain ids `0..k`, run concurrently.
pub fn run_chains<F>(k: usize, run: F) -> Result<Vec<Chain>>
where
    F: Fn(u64) -> Result<Chain> + Sync + Send,
{
    par::map_jobs(k, |c| run(c as u64)).into_iter().collect()
}

/// Particle Gibbs: cSMC given θ, then θ given the trajectory.
pub fn run_pg<M: StateSpaceModel + ?Sized>(
    model: &M,
    config: &SamplerConfig,
    y: &[f64],
    rng: &RngStream,
) -> Result<Chain> {
    let opts = config.smc_options();
    let copts = CsmcOptions {
        ancestor_sampling: config.method == Method::Pgas,
        ..Default::default()
    };
    let init = initial_stream(rng);
    let mut theta = initial_theta(model, config, &mut init.substream(2))?;
    let mut reference = initial_reference(model, Target::Fixed(&theta), &opts, y, &init)?;
    let mut chain = Chain::new(
        config.method,
        y.len(),
        model.param_names(),
        config.iterations,
    );
    for m in 0..config.iterations {
        let it = iteration_stream(rng, m);
        let (_, r) = run_csmc(
            model,
            Target::Fixed(&theta),
            &opts,
            &copts,
            y,
            &reference,
            &it.substream(0),
        )?;
        reference = r;
        theta = sample_posterior_params(
            model.family(),
            &trajectory_hp(model, &reference),
            &mut it.substream(1),
        )?;
        chain.push(
            &theta,
            config.store_trajectories.then_some(&reference.x[..]),
        );
    }
    Ok(chain)
}

/// Marginalized particle Gibbs: marginal cSMC, then θ from `π(θ | χ_T, ν_T)`.
pub fn run_mpg<M: StateSpaceModel + ?Sized>(
    model: &M,
    config: &SamplerConfig,
    y: &[f64],
    rng: &RngStream,
) -> Result<Chain> {
    let opts = config.smc_options();
    let copts = CsmcOptions {
        ancestor_sampling: config.method == Method::Mpgas,
        ..Default::default()
    };
    let init = initial_stream(rng);
    let mut reference = initial_reference(model, Target::Marginal, &opts, y, &init)?;
    let mut chain = Chain::new(
        config.method,
        y.len(),
        model.param_names(),
        config.iterations,
    );
    for m in 0..config.iterations {
        let it = iteration_stream(rng, m);
        let (_, r) = run_csmc(
            model,
            Target::Marginal,
            &opts,
            &copts,
            y,
            &reference,
            &it.substream(0),
        )?;
        reference = r;
        let theta = sample_posterior_params(
            model.family(),
            &trajectory_hp(model, &reference),
            &mut it.substream(1),
        )?;
        chain.push(
            &theta,
            config.store_trajectories.then_some(&reference.x[..]),
        );
    }
    Ok(chain)
}

/// Blocked marginalized Gibbs. Each iteration (both sweeps use ancestor
/// sampling for blocked-mpgas):
/// 1. cSMC on `x_{0:B+L}` given θ and the boundary state `x'_{B+L+1}`;
/// 2. marginal cSMC on `x_{B+1:T}` given `x_{0:B}`;
/// 3. θ from `π(θ | χ_T, ν_T)`.
pub fn run_blocked<M: StateSpaceModel + ?Sized>(
    model: &M,
    config: &SamplerConfig,
    y: &[f64],
    rng: &RngStream,
) -> Result<Chain> {
    let (b, l) = (config.block_b, config.block_l);
    let edge = b + l;
    let opts = config.smc_options();
    let mut opts1 = opts.clone();
    if matches!(opts1.proposal, ProposalKind::MarginalizedBootstrap) {
        opts1.proposal = ProposalKind::Bootstrap;
    }
    let copts2 = CsmcOptions {
        ancestor_sampling: config.method == Method::BlockedMpgas,
        start: b,
        ..Default::default()
    };
    let init = initial_stream(rng);
    let mut reference = initial_reference(model, Target::Marginal, &opts, y, &init)?;
    let mut theta = match &config.initial_theta {
        Some(_) => initial_theta(model, config, &mut init.substream(2))?,
        None => sample_posterior_params(
            model.family(),
            &trajectory_hp(model, &reference),
            &mut init.substream(2),
        )?,
    };
    let y1 = &y[..edge];
    let mut chain = Chain::new(
        config.method,
        y.len(),
        model.param_names(),
        config.iterations,
    );
    for m in 0..config.iterations {
        let it = iteration_stream(rng, m);
        let ref1 = ReferenceState::new(model, reference.x[..=edge].to_vec(), y1)?;
        let copts1 = CsmcOptions {
            ancestor_sampling: copts2.ancestor_sampling,
            terminal_state: Some(reference.x[edge + 1]),
            ..Default::default()
        };
        let (_, block1) = run_csmc(
            model,
            Target::Fixed(&theta),
            &opts1,
            &copts1,
            y1,
            &ref1,
            &it.substream(0),
        )?;
        let mut x = block1.x;
        x.extend_from_slice(&reference.x[edge + 1..]);
        let ref2 = ReferenceState::new(model, x, y)?;
        let (_, r) = run_csmc(
            model,
            Target::Marginal,
            &opts,
            &copts2,
            y,
            &ref2,
            &it.substream(1),
        )?;
        reference = r;
        theta = sample_posterior_params(
            model.family(),
            &trajectory_hp(model, &reference),
            &mut it.substream(2),
        )?;
        chain.push(
            &theta,
            config.store_trajectories.then_some(&reference.x[..]),
        );
    }
    Ok(chain)
}

/// `ln` of the mPMMH acceptance ratio for a symmetric proposal.
pub fn mh_log_accept_ratio(
    log_z_prop: f64,
    log_prior_prop: f64,
    log_z_cur: f64,
    log_prior_cur: f64,
) -> f64 {
    if log_z_prop == f64::NEG_INFINITY || log_prior_prop == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    (log_z_prop + log_prior_prop) - (log_z_cur + log_prior_cur)
}

/// Marginalized PMMH on the unmarginalized parameters `θ_u`, with the
/// conjugate blocks integrated out inside each SMC evidence estimate.
///
/// Rows hold `θ_u` followed by a draw of `θ_m` given the stored trajectory.
pub fn run_mpmmh<M: PartiallyConjugate>(
    model: &M,
    config: &SamplerConfig,
    y: &[f64],
    rng: &RngStream,
) -> Result<Chain> {
    let opts = config.smc_options();
    let step = config.tau.sqrt();
    let mut theta_u = config
        .initial_theta_u
        .clone()
        .unwrap_or_else(|| model.unmarginalized());
    let initial = model.with_unmarginalized(&theta_u)?;
    let mut log_prior = model.log_prior_unmarginalized(&theta_u);
    if !log_prior.is_finite() {
        return Err(Error::InvalidConfig(
            "initial unmarginalized parameters have zero prior density".into(),
        ));
    }

    // a sweep gives the evidence, one trajectory and a θ_m draw for it
    let evaluate = |m: &M, r: &RngStream| -> Result<(f64, Vec<f64>, ParamDraw)> {
        let ps = run_smc(m, Target::Marginal, &opts, y, &r.substream(0))?;
        let k = ps.draw_index(&mut r.substream(1));
        let hyper = ps.hyper.as_ref().expect("marginal target");
        let theta_m = sample_posterior_params(m.family(), &hyper[k], &mut r.substream(2))?;
        Ok((ps.log_z(), ps.trajectory(k), theta_m))
    };

    let (mut log_z, mut x, mut theta_m) = evaluate(&initial, &initial_stream(rng))?;
    let mut names = model.unmarginalized_names();
    names.extend(model.param_names());
    let mut chain = Chain::new(Method::Mpmmh, y.len(), names, config.iterations);
    let mut row = Vec::new();
    for m in 0..config.iterations {
        let it = iteration_stream(rng, m);
        let mut walk = it.substream(0);
        let proposal: Vec<f64> = theta_u
            .iter()
            .map(|v| v + step * walk.standard_normal())
            .collect();
        let lp_prop = model.log_prior_unmarginalized(&proposal);
        let mut accepted = false;
        if lp_prop.is_finite() {
            let candidate = model.with_unmarginalized(&proposal)?;
            let outcome = match evaluate(&candidate, &it.substream(1)) {
                Ok(v) => Some(v),
                // a collapsed sweep estimates zero evidence
                Err(Error::WeightCollapse { .. }) => None,
                Err(e) => return Err(e),
            };
            if let Some((lz, xs, tm)) = outcome {
                let log_alpha = mh_log_accept_ratio(lz, lp_prop, log_z, log_prior);
                if it.substream(2).uniform_open().ln() < log_alpha {
                    accepted = true;
                    theta_u = proposal;
                    log_prior = lp_prop;
                    log_z = lz;
                    x = xs;
                    theta_m = tm;
                }
            }
        }
        row.clear();
        row.extend_from_slice(&theta_u);
        row.extend_from_slice(&theta_m);
        chain.push(&row, config.store_trajectories.then_some(&x[..]));
        chain.accepted.push(accepted);
        chain.log_z.push(log_z);
    }
    Ok(chain)
}

/// Marginalized importance sampling: `M` independent marginal SMC runs,
/// weighted by their evidence estimates. Each run contributes one
/// trajectory, a θ draw given it, and the Rao-Blackwellized mean
/// `Σ_i w̄_T^i E[θ | χ_T^i, ν_T^i]`.
pub fn run_mis<M: StateSpaceModel + ?Sized>(
    model: &M,
    config: &SamplerConfig,
    y: &[f64],
    rng: &RngStream,
) -> Result<Chain> {
    let opts = config.smc_options();
    let p = model.family().param_dim();
    let mut chain = Chain::new(Method::Mis, y.len(), model.param_names(), config.iterations);
    let mut rb = Vec::with_capacity(config.iterations * p);
    for m in 0..config.iterations {
        let it = iteration_stream(rng, m);
        let ps = run_smc(model, Target::Marginal, &opts, y, &it.substream(0))?;
        let hyper = ps.hyper.as_ref().expect("marginal target");
        let k = ps.draw_index(&mut it.substream(1));
        let theta = sample_posterior_params(model.family(), &hyper[k], &mut it.substream(2))?;
        let mut mean = vec![0.0; p];
        for (w, hp) in ps.norm_weights.iter().zip(hyper) {
            if *w > 0.0 {
                let e = posterior_mean_params(model.family(), hp)?;
                for (acc, v) in mean.iter_mut().zip(e.iter()) {
                    *acc += w * v;
                }
            }
        }
        rb.extend_from_slice(&mean);
        chain.log_z.push(ps.log_z());
        let x = config.store_trajectories.then(|| ps.trajectory(k));
        chain.push(&theta, x.as_deref());
    }
    let lse = log_sum_exp(&chain.log_z);
    chain.weights = Some(chain.log_z.iter().map(|l| (l - lse).exp()).collect());
    chain.rb_means = Some(rb);
    Ok(chain)
}
