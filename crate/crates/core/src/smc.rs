//! Sequential Monte Carlo, conditional SMC and ancestor sampling.
//!
//! One sweep routine serves every configuration: the weighting is either
//! conditioned on a parameter draw or marginalizes the conjugate blocks by
//! carrying per-particle hyperparameters.
//!
//! Random draws for particle `i` at step `t` come from
//! `rng.substream(t).substream(i)`, so output is the same with and without
//! the `parallel` feature.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use smallvec::SmallVec;

use crate::conjugacy::{ConjugateFamily, HyperParams, ParamDraw, SuffStat};
use crate::dist::{log_sum_exp, Density};
use crate::error::{Error, Result};
use crate::models::StateSpaceModel;
use crate::par;
use crate::rng::RngStream;

const RESAMPLE_TAG: u64 = u64::MAX;
const ANCESTOR_TAG: u64 = u64::MAX - 1;
const OUTPUT_TAG: u64 = u64::MAX - 2;

const COLLAPSE_HINT_FIXED: &str =
    "no particle explains the observation; increase N or check the parameters";
const COLLAPSE_HINT_MARGINAL: &str =
    "marginal weights collapsed; with a diffuse prior use blocked-mpg or blocked-mpgas, or increase N";

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Resampling {
    #[default]
    Multinomial,
    Systematic,
}

/// `(t, x_{t−1}, hyperparameters when marginalizing) → q_t(· | x_{t−1})`.
pub type ProposalFn = dyn Fn(usize, f64, Option<&HyperParams>) -> Density + Send + Sync;

#[derive(Clone)]
pub struct CustomProposal(pub Arc<ProposalFn>);

impl fmt::Debug for CustomProposal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("CustomProposal")
    }
}

/// `Bootstrap` under a marginal target means the marginal transition, the
/// only transition available once the parameters are integrated out.
#[derive(Clone, Debug, Default)]
pub enum ProposalKind {
    #[default]
    Bootstrap,
    MarginalizedBootstrap,
    Custom(CustomProposal),
}

impl ProposalKind {
    pub fn custom(
        f: impl Fn(usize, f64, Option<&HyperParams>) -> Density + Send + Sync + 'static,
    ) -> Self {
        ProposalKind::Custom(CustomProposal(Arc::new(f)))
    }
}

#[derive(Clone, Copy, Debug)]
pub enum Target<'a> {
    /// Parameters fixed at a draw.
    Fixed(&'a ParamDraw),
    /// Conjugate parameters integrated out.
    Marginal,
}

#[derive(Clone, Debug)]
pub struct SmcOptions {
    pub particles: usize,
    pub proposal: ProposalKind,
    pub resampling: Resampling,
}

impl SmcOptions {
    pub fn new(particles: usize) -> Self {
        SmcOptions {
            particles,
            proposal: ProposalKind::Bootstrap,
            resampling: Resampling::Multinomial,
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct CsmcOptions {
    pub ancestor_sampling: bool,
    /// Keep `x_{0:start}` fixed at the reference and run the sweep from `start + 1`.
    pub start: usize,
    /// Extra terminal weight `ln p(x_next | x_T, θ)`; fixed-parameter targets only.
    pub terminal_state: Option<f64>,
    /// Recompute reference tails from scratch at every step instead of by subtraction.
    pub exact_tails: bool,
}

/// Reference trajectory `x'_{0:T}` with its per-step statistics.
#[derive(Clone, Debug, PartialEq)]
pub struct ReferenceState {
    pub x: Vec<f64>,
    /// `stats[t − 1]` holds `(s'_t, r'_t)`.
    pub stats: Vec<SuffStat>,
}

impl ReferenceState {
    pub fn new<M: StateSpaceModel + ?Sized>(model: &M, x: Vec<f64>, y: &[f64]) -> Result<Self> {
        if x.len() != y.len() + 1 {
            return Err(Error::DimensionMismatch {
                what: "reference trajectory",
                expected: y.len() + 1,
                got: x.len(),
            });
        }
        let stats = (1..x.len())
            .map(|t| model.stat(x[t], x[t - 1], y[t - 1], t))
            .collect();
        Ok(ReferenceState { x, stats })
    }

    pub fn horizon(&self) -> usize {
        self.stats.len()
    }

    /// `Σ_{k ≥ from} s'_k`, summed from scratch; zeros past the horizon.
    pub fn tail_from(&self, from: usize) -> SuffStat {
        let first = &self.stats[0];
        let mut acc = SuffStat::zeros(first.s.len(), first.r.len());
        for st in self.stats.iter().skip(from.max(1) - 1) {
            acc.add_assign(st);
        }
        acc
    }

    /// `χ₀ + Σ_{k ≤ upto} s'_k`.
    pub fn hyperparams_through<M: StateSpaceModel + ?Sized>(
        &self,
        model: &M,
        upto: usize,
    ) -> HyperParams {
        let mut hp = model.prior().clone();
        for st in &self.stats[..upto] {
            hp.add_assign(st);
        }
        hp
    }

    /// Verify the stored statistics against the trajectory.
    pub fn check_consistent<M: StateSpaceModel + ?Sized>(
        &self,
        model: &M,
        y: &[f64],
    ) -> Result<()> {
        let fresh = ReferenceState::new(model, self.x.clone(), y)?;
        if fresh.stats != self.stats {
            return Err(Error::InvalidInput(
                "reference statistics do not match the reference trajectory".into(),
            ));
        }
        Ok(())
    }
}

/// Particle states, ancestry and final weights of one sweep.
///
/// Rows cover `t = start..=T`; the fixed prefix `x_{0:start−1}` is kept
/// separately. Ancestor row `t − start − 1` holds `a_t`, the index at
/// `t − 1` of each particle's parent.
#[derive(Clone, Debug)]
pub struct ParticleSystem {
    pub n: usize,
    pub start: usize,
    pub prefix: Vec<f64>,
    pub states: Vec<f64>,
    pub ancestors: Vec<u32>,
    pub log_weights: Vec<f64>,
    pub norm_weights: Vec<f64>,
    /// Final `(χ_T^i, ν_T^i)` for marginal targets.
    pub hyper: Option<Vec<HyperParams>>,
    pub log_z_increments: Vec<f64>,
}

impl ParticleSystem {
    pub fn horizon(&self) -> usize {
        self.start + self.states.len() / self.n - 1
    }

    #[inline]
    pub fn state(&self, t: usize, i: usize) -> f64 {
        self.states[(t - self.start) * self.n + i]
    }

    #[inline]
    pub fn ancestor(&self, t: usize, i: usize) -> usize {
        self.ancestors[(t - self.start - 1) * self.n + i] as usize
    }

    pub fn log_z(&self) -> f64 {
        self.log_z_increments.iter().sum()
    }

    /// Particle indices along the lineage of final particle `i`, for `t = start..=T`.
    pub fn lineage(&self, i: usize) -> Vec<usize> {
        let horizon = self.horizon();
        let mut idx = vec![0; horizon - self.start + 1];
        let mut k = i;
        for t in (self.start..=horizon).rev() {
            idx[t - self.start] = k;
            if t > self.start {
                k = self.ancestor(t, k);
            }
        }
        idx
    }

    /// Full trajectory `x_{0:T}` ending in final particle `i`.
    pub fn trajectory(&self, i: usize) -> Vec<f64> {
        let mut x = self.prefix.clone();
        for (r, k) in self.lineage(i).into_iter().enumerate() {
            x.push(self.states[r * self.n + k]);
        }
        x
    }

    /// Draw a final particle index from the normalized weights.
    pub fn draw_index(&self, rng: &mut RngStream) -> usize {
        categorical_draw(&self.norm_weights, 1.0, rng)
    }
}

fn check_weights(weights: &[f64]) -> Result<f64> {
    let mut total = 0.0;
    for (i, &w) in weights.iter().enumerate() {
        if !(w >= 0.0 && w.is_finite()) {
            return Err(Error::DegenerateWeights(format!("weight {i} is {w}")));
        }
        total += w;
    }
    if !(total > 0.0) {
        return Err(Error::DegenerateWeights("all weights are zero".into()));
    }
    Ok(total)
}

/// Multinomial resampling: `count` iid categorical indices.
///
/// Uses ordered uniforms from normalized exponential spacings, so the cost is
/// `O(N + count)`.
pub fn resample_categorical(
    weights: &[f64],
    count: usize,
    rng: &mut RngStream,
) -> Result<Vec<usize>> {
    let total = check_weights(weights)?;
    let mut out = vec![0u32; count];
    multinomial_into(weights, total, rng, &mut out);
    Ok(out.into_iter().map(|a| a as usize).collect())
}

/// Systematic resampling: one uniform offset, `count` evenly spaced points.
pub fn resample_systematic(
    weights: &[f64],
    count: usize,
    rng: &mut RngStream,
) -> Result<Vec<usize>> {
    let total = check_weights(weights)?;
    let mut out = vec![0u32; count];
    systematic_into(weights, total, rng, &mut out);
    Ok(out.into_iter().map(|a| a as usize).collect())
}

fn multinomial_into(weights: &[f64], total: f64, rng: &mut RngStream, out: &mut [u32]) {
    let m = out.len();
    if m == 0 {
        return;
    }
    // E_1..E_{m+1} exponential; partial sums over the full sum are sorted uniforms
    let mut spacings: Vec<f64> = Vec::with_capacity(m + 1);
    let mut acc = 0.0;
    for _ in 0..=m {
        acc += -rng.uniform_open().ln();
        spacings.push(acc);
    }
    let scale = total / acc;
    merge_sorted(weights, spacings[..m].iter().map(|u| u * scale), out);
}

fn systematic_into(weights: &[f64], total: f64, rng: &mut RngStream, out: &mut [u32]) {
    let m = out.len();
    if m == 0 {
        return;
    }
    let u0 = rng.uniform();
    let step = total / m as f64;
    merge_sorted(weights, (0..m).map(|k| (k as f64 + u0) * step), out);
}

/// Assign each sorted point in `[0, total)` to the weight bin containing it.
fn merge_sorted(weights: &[f64], points: impl Iterator<Item = f64>, out: &mut [u32]) {
    let last_positive = weights.iter().rposition(|&w| w > 0.0).unwrap_or(0);
    let mut j = 0;
    let mut cum = weights[0];
    for (slot, u) in out.iter_mut().zip(points) {
        while u >= cum && j < last_positive {
            j += 1;
            cum += weights[j];
        }
        // skip zero-weight bins that share a boundary
        while weights[j] == 0.0 && j < last_positive {
            j += 1;
            cum += weights[j];
        }
        *slot = j as u32;
    }
}

fn categorical_draw(weights: &[f64], total: f64, rng: &mut RngStream) -> usize {
    let u = rng.uniform() * total;
    let mut acc = 0.0;
    for (i, &w) in weights.iter().enumerate() {
        acc += w;
        if u < acc && w > 0.0 {
            return i;
        }
    }
    weights
        .iter()
        .rposition(|&w| w > 0.0)
        .unwrap_or(weights.len() - 1)
}

/// Normalize log-weights in place to probabilities; returns `ln Σ exp(lw)`.
fn normalize(log_w: &[f64], out: &mut [f64]) -> f64 {
    let lse = log_sum_exp(log_w);
    if lse.is_finite() {
        for (o, &l) in out.iter_mut().zip(log_w) {
            *o = (l - lse).exp();
        }
    }
    lse
}

/// `ln w_t` for a parameter-conditioned step `x_prev → x`: the target
/// increment `ln p(x, y | x_prev, θ)` less the proposal log-density.
pub fn smc_weight<M: StateSpaceModel + ?Sized>(
    model: &M,
    theta: &ParamDraw,
    proposal: &ProposalKind,
    x: f64,
    x_prev: f64,
    y: f64,
    t: usize,
) -> Result<f64> {
    match proposal {
        ProposalKind::Bootstrap => Ok(model.log_observation(theta, y, x, t)),
        ProposalKind::MarginalizedBootstrap => Err(Error::InvalidConfig(
            "the marginalized bootstrap proposal needs a marginal target".into(),
        )),
        ProposalKind::Custom(q) => {
            let lq = (q.0)(t, x_prev, None).log_pdf(x)?;
            Ok(model.log_joint_step(theta, x, x_prev, y, t) - lq)
        }
    }
}

/// Marginal weight `ln p(x, y | x_{0:t−1}, y_{1:t−1}) − ln q(x)` and the
/// updated hyperparameters.
pub fn smc_weight_marginal<M: StateSpaceModel + ?Sized>(
    model: &M,
    hp_prev: &HyperParams,
    proposal: &ProposalKind,
    x: f64,
    x_prev: f64,
    y: f64,
    t: usize,
) -> Result<(f64, HyperParams)> {
    let st = model.stat(x, x_prev, y, t);
    let hp_new = hp_prev.updated(&st);
    let pred = crate::conjugacy::predictive_logpdf(
        model.family(),
        hp_prev,
        &st,
        model.log_base(x, x_prev, y, t),
    )?;
    let lq = match proposal {
        ProposalKind::Bootstrap | ProposalKind::MarginalizedBootstrap => {
            model.log_marginal_transition(hp_prev, x, x_prev, t)
        }
        ProposalKind::Custom(q) => (q.0)(t, x_prev, Some(hp_prev)).log_pdf(x)?,
    };
    Ok((pred - lq, hp_new))
}

/// Access to a particle's hyperparameters for ancestor weighting.
pub trait HasHyper {
    fn hyper(&self) -> &HyperParams;

    /// Cached `ln g` of block `b`, if known.
    fn cached_log_g(&self, _b: usize) -> Option<f64> {
        None
    }
}

impl HasHyper for HyperParams {
    fn hyper(&self) -> &HyperParams {
        self
    }
}

/// Ancestor log-weights for a parameter-conditioned Markov model:
/// `ln w̄_{t−1}^i + ln p(x'_t | x_{t−1}^i, θ)`.
pub fn ancestor_weights_std<M: StateSpaceModel + ?Sized>(
    model: &M,
    theta: &ParamDraw,
    t: usize,
    x_ref: f64,
    prev_states: &[f64],
    log_w_bar: &[f64],
) -> Vec<f64> {
    par::map_indexed(prev_states.len(), |i| {
        if log_w_bar[i] == f64::NEG_INFINITY {
            return f64::NEG_INFINITY;
        }
        log_w_bar[i] + model.log_transition(theta, x_ref, prev_states[i], t)
    })
}

/// Marginal ancestor log-weights
/// `ln w̄_{t−1}^i + ln h_t(x'_t, x_{t−1}^i, y_t) + ln g(χ_{t−1}^i) − ln g(χ_T^i)`
/// with `χ_T^i = χ_{t−1}^i + s_t(x'_t, x_{t−1}^i, y_t) + s'_{t+1:T}`.
///
/// `tail` is the running `(s'_{t+1:T}, r'_{t+1:T})`. Candidates whose `χ_T^i`
/// does not decode are recomputed with `exact_tail`; failing that, an error.
#[allow(clippy::too_many_arguments)]
pub fn ancestor_weights_marginal<M, H>(
    model: &M,
    t: usize,
    x_ref: f64,
    y: f64,
    prev_states: &[f64],
    prev: &[H],
    log_w_bar: &[f64],
    tail: &SuffStat,
    exact_tail: &dyn Fn() -> SuffStat,
) -> Result<Vec<f64>>
where
    M: StateSpaceModel + ?Sized,
    H: HasHyper + Sync,
{
    let fam = model.family();
    let nb = fam.blocks().len();
    let one = |i: usize, tail: &SuffStat| -> Result<f64> {
        if log_w_bar[i] == f64::NEG_INFINITY {
            return Ok(f64::NEG_INFINITY);
        }
        let xp = prev_states[i];
        let lh = model.log_base(x_ref, xp, y, t);
        if lh == f64::NEG_INFINITY {
            return Ok(f64::NEG_INFINITY);
        }
        let hp = prev[i].hyper();
        let mut lg_prev = 0.0;
        for b in 0..nb {
            lg_prev += match prev[i].cached_log_g(b) {
                Some(v) => v,
                None => fam.block_log_g(b, &hp.chi, &hp.nu)?,
            };
        }
        let st = model.stat(x_ref, xp, y, t);
        let mut full = hp.updated(&st);
        full.add_assign(tail);
        let lg_t = fam.log_g_raw(&full.chi, &full.nu)?;
        Ok(log_w_bar[i] + lh + lg_prev - lg_t)
    };
    let first: Vec<Result<f64>> = par::map_indexed(prev_states.len(), |i| one(i, tail));
    let mut out = Vec::with_capacity(first.len());
    let mut exact: Option<SuffStat> = None;
    for (i, r) in first.into_iter().enumerate() {
        match r {
            Ok(v) => out.push(v),
            Err(Error::InvalidHyperParams { .. }) => {
                let tail = exact.get_or_insert_with(exact_tail);
                out.push(one(i, tail)?);
            }
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}

/// Per-particle working values for one step.
#[derive(Clone, Debug)]
struct Slot<A> {
    x: f64,
    log_w: f64,
    aux: A,
    err: Option<Error>,
}

trait Kernel: Sync {
    type Aux: Clone + Send + Sync;

    fn propagate(&self, t: usize, x_prev: f64, aux: &Self::Aux, rng: &mut RngStream)
        -> Result<f64>;

    fn weight(
        &self,
        t: usize,
        x: f64,
        x_prev: f64,
        y: f64,
        aux: &Self::Aux,
        out: &mut Self::Aux,
    ) -> Result<f64>;

    fn terminal(&self, x: f64, x_next: f64, t_next: usize) -> f64;

    fn marginal(&self) -> bool;

    #[allow(clippy::too_many_arguments)]
    fn ancestor_log_weights(
        &self,
        t: usize,
        x_ref: f64,
        y: f64,
        prev_states: &[f64],
        prev: &[Slot<Self::Aux>],
        log_w_bar: &[f64],
        tail: &SuffStat,
        exact_tail: &dyn Fn() -> SuffStat,
    ) -> Result<Vec<f64>>;

    fn hyper(&self, aux: &Self::Aux) -> Option<HyperParams>;

    fn collapse_hint(&self) -> &'static str;
}

struct FixedKernel<'a, M: ?Sized> {
    model: &'a M,
    theta: &'a ParamDraw,
    proposal: &'a ProposalKind,
}

impl<M: StateSpaceModel + ?Sized> Kernel for FixedKernel<'_, M> {
    type Aux = ();

    #[inline]
    fn propagate(&self, t: usize, x_prev: f64, _aux: &(), rng: &mut RngStream) -> Result<f64> {
        match self.proposal {
            ProposalKind::Custom(q) => (q.0)(t, x_prev, None).sample(rng),
            _ => Ok(self.model.sample_transition(self.theta, x_prev, t, rng)),
        }
    }

    #[inline]
    fn weight(
        &self,
        t: usize,
        x: f64,
        x_prev: f64,
        y: f64,
        _aux: &(),
        _out: &mut (),
    ) -> Result<f64> {
        smc_weight(self.model, self.theta, self.proposal, x, x_prev, y, t)
    }

    fn terminal(&self, x: f64, x_next: f64, t_next: usize) -> f64 {
        self.model.log_transition(self.theta, x_next, x, t_next)
    }

    fn marginal(&self) -> bool {
        false
    }

    fn ancestor_log_weights(
        &self,
        t: usize,
        x_ref: f64,
        _y: f64,
        prev_states: &[f64],
        _prev: &[Slot<()>],
        log_w_bar: &[f64],
        _tail: &SuffStat,
        _exact_tail: &dyn Fn() -> SuffStat,
    ) -> Result<Vec<f64>> {
        Ok(ancestor_weights_std(
            self.model,
            self.theta,
            t,
            x_ref,
            prev_states,
            log_w_bar,
        ))
    }

    fn hyper(&self, _aux: &()) -> Option<HyperParams> {
        None
    }

    fn collapse_hint(&self) -> &'static str {
        COLLAPSE_HINT_FIXED
    }
}

/// Hyperparameters plus cached per-block `ln g` (NaN when stale).
#[derive(Clone, Debug)]
struct MargAux {
    hp: HyperParams,
    lg: SmallVec<[f64; 4]>,
}

impl HasHyper for Slot<MargAux> {
    fn hyper(&self) -> &HyperParams {
        &self.aux.hp
    }

    fn cached_log_g(&self, b: usize) -> Option<f64> {
        let v = self.aux.lg[b];
        (!v.is_nan()).then_some(v)
    }
}

struct MarginalKernel<'a, M: ?Sized> {
    model: &'a M,
    proposal: &'a ProposalKind,
    /// Blocks not touched by the transition; their `ln g` enters bootstrap weights.
    obs_blocks: SmallVec<[usize; 4]>,
}

impl<'a, M: StateSpaceModel + ?Sized> MarginalKernel<'a, M> {
    fn new(model: &'a M, proposal: &'a ProposalKind) -> Self {
        let nb = model.family().blocks().len();
        let trans = model.transition_blocks();
        let obs_blocks = (0..nb).filter(|b| !trans.contains(b)).collect();
        MarginalKernel {
            model,
            proposal,
            obs_blocks,
        }
    }

    fn aux_for(&self, hp: HyperParams) -> Result<MargAux> {
        let fam = self.model.family();
        let lg = (0..fam.blocks().len())
            .map(|b| fam.block_log_g(b, &hp.chi, &hp.nu))
            .collect::<Result<_>>()?;
        Ok(MargAux { hp, lg })
    }

    #[inline]
    fn lg_prev(&self, aux: &MargAux, b: usize) -> Result<f64> {
        let v = aux.lg[b];
        if v.is_nan() {
            self.model.family().block_log_g(b, &aux.hp.chi, &aux.hp.nu)
        } else {
            Ok(v)
        }
    }
}

impl<M: StateSpaceModel + ?Sized> Kernel for MarginalKernel<'_, M> {
    type Aux = MargAux;

    #[inline]
    fn propagate(&self, t: usize, x_prev: f64, aux: &MargAux, rng: &mut RngStream) -> Result<f64> {
        match self.proposal {
            ProposalKind::Custom(q) => (q.0)(t, x_prev, Some(&aux.hp)).sample(rng),
            _ => Ok(self
                .model
                .sample_marginal_transition(&aux.hp, x_prev, t, rng)),
        }
    }

    #[inline]
    fn weight(
        &self,
        t: usize,
        x: f64,
        x_prev: f64,
        y: f64,
        aux: &MargAux,
        out: &mut MargAux,
    ) -> Result<f64> {
        let model = self.model;
        let fam = model.family();
        let st = model.stat(x, x_prev, y, t);
        out.hp.set_updated(&aux.hp, &st);
        out.lg.resize(aux.lg.len(), f64::NAN);
        out.lg.fill(f64::NAN);
        let lh = model.log_base(x, x_prev, y, t);
        if lh == f64::NEG_INFINITY || !x.is_finite() {
            return Ok(f64::NEG_INFINITY);
        }
        let mut lw;
        match self.proposal {
            ProposalKind::Custom(q) => {
                // full predictive over every block, less the proposal density
                lw = lh - (q.0)(t, x_prev, Some(&aux.hp)).log_pdf(x)?;
                for b in 0..fam.blocks().len() {
                    let Ok(new) = fam.block_log_g(b, &out.hp.chi, &out.hp.nu) else {
                        return Ok(f64::NEG_INFINITY);
                    };
                    lw += self.lg_prev(aux, b)? - new;
                    out.lg[b] = new;
                }
            }
            _ => {
                // q is the transition-block predictive, which cancels
                lw = lh - model.log_base_transition(x, x_prev, t);
                for &b in &self.obs_blocks {
                    let Ok(new) = fam.block_log_g(b, &out.hp.chi, &out.hp.nu) else {
                        return Ok(f64::NEG_INFINITY);
                    };
                    lw += aux.lg[b] - new;
                    out.lg[b] = new;
                }
                // an invalid transition block means the particle is off the support
                if out.hp.chi.iter().any(|v| !v.is_finite()) {
                    return Ok(f64::NEG_INFINITY);
                }
            }
        }
        Ok(lw)
    }

    fn terminal(&self, _x: f64, _x_next: f64, _t_next: usize) -> f64 {
        0.0
    }

    fn marginal(&self) -> bool {
        true
    }

    fn ancestor_log_weights(
        &self,
        t: usize,
        x_ref: f64,
        y: f64,
        prev_states: &[f64],
        prev: &[Slot<MargAux>],
        log_w_bar: &[f64],
        tail: &SuffStat,
        exact_tail: &dyn Fn() -> SuffStat,
    ) -> Result<Vec<f64>> {
        ancestor_weights_marginal(
            self.model,
            t,
            x_ref,
            y,
            prev_states,
            prev,
            log_w_bar,
            tail,
            exact_tail,
        )
    }

    fn hyper(&self, aux: &MargAux) -> Option<HyperParams> {
        Some(aux.hp.clone())
    }

    fn collapse_hint(&self) -> &'static str {
        COLLAPSE_HINT_MARGINAL
    }
}

struct Conditioning<'a> {
    reference: &'a ReferenceState,
    opts: &'a CsmcOptions,
}

fn check_proposal(target: Target<'_>, proposal: &ProposalKind) -> Result<()> {
    if matches!(target, Target::Fixed(_)) && matches!(proposal, ProposalKind::MarginalizedBootstrap)
    {
        return Err(Error::InvalidConfig(
            "the marginalized bootstrap proposal needs a marginal target".into(),
        ));
    }
    Ok(())
}

fn sweep<K: Kernel>(
    kernel: &K,
    init_aux: K::Aux,
    initial: &(dyn Fn(&mut RngStream) -> f64 + Sync),
    opts: &SmcOptions,
    y: &[f64],
    cond: Option<Conditioning<'_>>,
    rng: &RngStream,
) -> Result<ParticleSystem> {
    let n = opts.particles;
    let horizon = y.len();
    if n == 0 {
        return Err(Error::InvalidConfig(
            "particle count N must be at least 1".into(),
        ));
    }
    if horizon == 0 {
        return Err(Error::InvalidInput("no observations".into()));
    }
    let start = cond.as_ref().map_or(0, |c| c.opts.start);
    if start >= horizon {
        return Err(Error::InvalidConfig(format!(
            "sweep start {start} must be below the horizon {horizon}"
        )));
    }
    let rows = horizon - start + 1;
    let mut states = vec![0.0; rows * n];
    let mut ancestors = vec![0u32; (rows - 1) * n];
    let mut log_z_increments = Vec::with_capacity(rows - 1);

    let mut prev: Vec<Slot<K::Aux>> = vec![
        Slot {
            x: 0.0,
            log_w: 0.0,
            aux: init_aux,
            err: None,
        };
        n
    ];
    {
        let init_rng = rng.substream(start as u64);
        let fixed = cond.as_ref().map(|c| c.reference.x[start]);
        par::for_each_indexed(&mut prev, |i, slot| {
            slot.x = match fixed {
                Some(x) if start > 0 || i == n - 1 => x,
                _ => initial(&mut init_rng.substream(i as u64)),
            };
        });
    }
    for (dst, s) in states[..n].iter_mut().zip(&prev) {
        *dst = s.x;
    }
    let mut next = prev.clone();
    let mut log_w_bar = vec![-(n as f64).ln(); n];
    let mut norm = vec![1.0 / n as f64; n];
    let mut prev_x = vec![0.0; n];
    let mut log_w = vec![0.0; n];
    let mut anc = vec![0u32; n];

    let track_tail = cond
        .as_ref()
        .is_some_and(|c| c.opts.ancestor_sampling && kernel.marginal());
    let mut tail = match &cond {
        Some(c) if track_tail => c.reference.tail_from(start + 1),
        _ => SuffStat::zeros(0, 0),
    };

    for t in start + 1..=horizon {
        let step = rng.substream(t as u64);
        let n_free = if cond.is_some() { n - 1 } else { n };
        {
            let mut rs = step.substream(RESAMPLE_TAG);
            match opts.resampling {
                Resampling::Multinomial => {
                    multinomial_into(&norm, 1.0, &mut rs, &mut anc[..n_free])
                }
                Resampling::Systematic => systematic_into(&norm, 1.0, &mut rs, &mut anc[..n_free]),
            }
        }
        for (px, s) in prev_x.iter_mut().zip(&prev) {
            *px = s.x;
        }
        if let Some(c) = &cond {
            let reference = c.reference;
            anc[n - 1] = if c.opts.ancestor_sampling {
                if track_tail {
                    if c.opts.exact_tails {
                        tail = reference.tail_from(t + 1);
                    } else {
                        tail.sub_assign(&reference.stats[t - 1]);
                    }
                }
                let exact = || reference.tail_from(t + 1);
                let lw_anc = kernel.ancestor_log_weights(
                    t,
                    reference.x[t],
                    y[t - 1],
                    &prev_x,
                    &prev,
                    &log_w_bar,
                    &tail,
                    &exact,
                )?;
                let mut p = vec![0.0; n];
                let lse = normalize(&lw_anc, &mut p);
                if !lse.is_finite() {
                    return Err(Error::DegenerateWeights(format!(
                        "ancestor weights at step {t} are all zero"
                    )));
                }
                categorical_draw(&p, 1.0, &mut step.substream(ANCESTOR_TAG)) as u32
            } else {
                (n - 1) as u32
            };
        }

        let y_t = y[t - 1];
        let fixed_x = cond.as_ref().map(|c| c.reference.x[t]);
        let terminal = cond
            .as_ref()
            .and_then(|c| c.opts.terminal_state)
            .filter(|_| t == horizon);
        {
            let prev = &prev;
            let anc = &anc;
            let step = &step;
            par::for_each_indexed(&mut next, |i, slot| {
                let a = anc[i] as usize;
                let src = &prev[a];
                let x = match fixed_x {
                    Some(x) if i == n - 1 => Ok(x),
                    _ => kernel.propagate(t, src.x, &src.aux, &mut step.substream(i as u64)),
                };
                let res = x.and_then(|x| {
                    slot.x = x;
                    kernel.weight(t, x, src.x, y_t, &src.aux, &mut slot.aux)
                });
                match res {
                    Ok(mut lw) => {
                        if let Some(xn) = terminal {
                            lw += kernel.terminal(slot.x, xn, t + 1);
                        }
                        slot.log_w = if lw.is_nan() { f64::NEG_INFINITY } else { lw };
                        slot.err = None;
                    }
                    Err(e) => {
                        slot.log_w = f64::NEG_INFINITY;
                        slot.err = Some(e);
                    }
                }
            });
        }
        if let Some(e) = next.iter_mut().find_map(|s| s.err.take()) {
            return Err(e);
        }
        let row = (t - start) * n;
        for (i, s) in next.iter().enumerate() {
            states[row + i] = s.x;
            log_w[i] = s.log_w;
        }
        ancestors[(t - start - 1) * n..(t - start) * n].copy_from_slice(&anc);
        let lse = normalize(&log_w, &mut norm);
        if !lse.is_finite() {
            return Err(Error::WeightCollapse {
                step: t,
                hint: kernel.collapse_hint(),
            });
        }
        for (l, &w) in log_w_bar.iter_mut().zip(&log_w) {
            *l = w - lse;
        }
        log_z_increments.push(lse - (n as f64).ln());
        std::mem::swap(&mut prev, &mut next);
    }

    let hyper = if kernel.marginal() {
        Some(prev.iter().filter_map(|s| kernel.hyper(&s.aux)).collect())
    } else {
        None
    };
    let prefix = cond
        .as_ref()
        .map_or_else(Vec::new, |c| c.reference.x[..start].to_vec());
    Ok(ParticleSystem {
        n,
        start,
        prefix,
        states,
        ancestors,
        log_weights: log_w,
        norm_weights: norm,
        hyper,
        log_z_increments,
    })
}

/// Unconditional SMC over `y_{1:T}`.
pub fn run_smc<M: StateSpaceModel + ?Sized>(
    model: &M,
    target: Target<'_>,
    opts: &SmcOptions,
    y: &[f64],
    rng: &RngStream,
) -> Result<ParticleSystem> {
    check_proposal(target, &opts.proposal)?;
    let initial = |r: &mut RngStream| model.sample_initial(r);
    match target {
        Target::Fixed(theta) => {
            model.check_params(theta)?;
            let k = FixedKernel {
                model,
                theta,
                proposal: &opts.proposal,
            };
            sweep(&k, (), &initial, opts, y, None, rng)
        }
        Target::Marginal => {
            let k = MarginalKernel::new(model, &opts.proposal);
            let aux = k.aux_for(model.prior().clone())?;
            sweep(&k, aux, &initial, opts, y, None, rng)
        }
    }
}

/// Conditional SMC: particle `N − 1` follows the reference. Returns the
/// particle system and a new reference drawn from the final weights.
pub fn run_csmc<M: StateSpaceModel + ?Sized>(
    model: &M,
    target: Target<'_>,
    opts: &SmcOptions,
    copts: &CsmcOptions,
    y: &[f64],
    reference: &ReferenceState,
    rng: &RngStream,
) -> Result<(ParticleSystem, ReferenceState)> {
    check_proposal(target, &opts.proposal)?;
    if reference.x.len() != y.len() + 1 || reference.stats.len() != y.len() {
        return Err(Error::DimensionMismatch {
            what: "reference trajectory",
            expected: y.len() + 1,
            got: reference.x.len(),
        });
    }
    if cfg!(debug_assertions) {
        reference.check_consistent(model, y)?;
    }
    let initial = |r: &mut RngStream| model.sample_initial(r);
    let cond = Some(Conditioning {
        reference,
        opts: copts,
    });
    let ps = match target {
        Target::Fixed(theta) => {
            model.check_params(theta)?;
            let k = FixedKernel {
                model,
                theta,
                proposal: &opts.proposal,
            };
            sweep(&k, (), &initial, opts, y, cond, rng)?
        }
        Target::Marginal => {
            if copts.terminal_state.is_some() {
                return Err(Error::InvalidConfig(
                    "a terminal boundary state needs a fixed-parameter target".into(),
                ));
            }
            let k = MarginalKernel::new(model, &opts.proposal);
            let aux = k.aux_for(reference.hyperparams_through(model, copts.start))?;
            sweep(&k, aux, &initial, opts, y, cond, rng)?
        }
    };
    let k = ps.draw_index(&mut rng.substream(OUTPUT_TAG));
    let x = ps.trajectory(k);
    let new_ref = ReferenceState::new(model, x, y)?;
    Ok((ps, new_ref))
}
