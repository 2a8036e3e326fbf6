//! Calibration of the population model with `c` fixed: 90% posterior
//! intervals from mPG should cover the generating values most of the time.

use mpgas_core::conjugacy::ParamDraw;
use mpgas_core::models::{simulate, PopulationModel, PopulationPrior};
use mpgas_core::samplers::{run_sampler, Method, SamplerConfig};
use mpgas_core::smc::ProposalKind;
use mpgas_core::RngStream;

const TRUTH: [f64; 4] = [0.5, -0.01, 0.04, 4.0];

fn prior() -> PopulationPrior {
    PopulationPrior {
        mu: [0.5, 0.0],
        lambda: [4.0, 0.0, 0.0, 2500.0],
        alpha_v: 3.0,
        beta_v: 0.1,
        alpha_w: 3.0,
        beta_w: 8.0,
        sigma2_c: 4.0,
    }
}

fn quantile(mut v: Vec<f64>, q: f64) -> f64 {
    v.sort_by(f64::total_cmp);
    v[((v.len() - 1) as f64 * q).round() as usize]
}

#[test]
fn mpg_intervals_cover_truth() {
    let model = PopulationModel::new(prior(), 1.0, 50f64.ln(), 0.01).unwrap();
    let reps = 20;
    let mut covered = [0usize; 4];
    for rep in 0..reps {
        let (_, y) = simulate(
            &model,
            &ParamDraw::new(&TRUTH),
            40,
            &mut RngStream::new(4000 + rep, 0),
        )
        .unwrap();
        let mut cfg = SamplerConfig::new(Method::Mpg, 200, 1500);
        cfg.burn_in = 300;
        cfg.seed = 5000 + rep;
        cfg.proposal = ProposalKind::MarginalizedBootstrap;
        cfg.store_trajectories = false;
        let chain = run_sampler(&model, &cfg, &y, 0).unwrap();
        for (j, hit) in covered.iter_mut().enumerate() {
            let s = chain.param_series(j, cfg.burn_in);
            let (lo, hi) = (quantile(s.clone(), 0.05), quantile(s, 0.95));
            if (lo..=hi).contains(&TRUTH[j]) {
                *hit += 1;
            }
        }
    }
    for (j, c) in covered.iter().enumerate() {
        assert!(
            *c >= 16,
            "parameter {j}: {c}/{reps} intervals cover {}",
            TRUTH[j]
        );
    }
}
