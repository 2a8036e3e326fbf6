//! Chain diagnostics: autocorrelation, state update frequency, effective
//! sample size, batch-means standard errors, summaries, histograms and
//! Kolmogorov–Smirnov tests.

use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AcfResult {
    pub lags: Vec<usize>,
    pub acf: Vec<f64>,
    /// Bartlett standard error at each lag.
    pub se: Vec<f64>,
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Biased autocovariance at lag `k` around `mu`.
fn autocov(x: &[f64], mu: f64, k: usize) -> f64 {
    let n = x.len();
    let mut s = 0.0;
    for i in 0..n - k {
        s += (x[i] - mu) * (x[i + k] - mu);
    }
    s / n as f64
}

/// Sample ACF with the biased (divide by `M`) normalization.
pub fn acf(series: &[f64], max_lag: usize) -> Result<AcfResult> {
    let m = series.len();
    if max_lag < 1 || m <= max_lag {
        return Err(Error::InvalidInput(format!(
            "acf needs 1 <= max_lag < series length, got max_lag = {max_lag}, length = {m}"
        )));
    }
    let mu = mean(series);
    let c0 = autocov(series, mu, 0);
    if !(c0 > 0.0) {
        return Err(Error::InvalidInput("acf of a constant series".into()));
    }
    let mut out = AcfResult {
        lags: (0..=max_lag).collect(),
        acf: Vec::with_capacity(max_lag + 1),
        se: Vec::with_capacity(max_lag + 1),
    };
    let mut sq = 0.0;
    for k in 0..=max_lag {
        let r = if k == 0 {
            1.0
        } else {
            (autocov(series, mu, k) / c0).clamp(-1.0, 1.0)
        };
        out.acf.push(r);
        out.se.push(if k == 0 {
            0.0
        } else {
            ((1.0 + 2.0 * sq) / m as f64).sqrt()
        });
        if k >= 1 {
            sq += r * r;
        }
    }
    Ok(out)
}

/// Fraction of consecutive iteration pairs in which `x_t` changed, per `t`.
///
/// `trajectories` is row-major `M × width`.
pub fn update_frequency(trajectories: &[f64], width: usize) -> Result<Vec<f64>> {
    if width == 0 || trajectories.len() % width != 0 {
        return Err(Error::InvalidInput(
            "trajectory table has a ragged shape".into(),
        ));
    }
    let m = trajectories.len() / width;
    if m < 2 {
        return Err(Error::InvalidInput(
            "update frequency needs at least two iterations".into(),
        ));
    }
    let mut freq = vec![0.0; width];
    for k in 1..m {
        let prev = &trajectories[(k - 1) * width..k * width];
        let cur = &trajectories[k * width..(k + 1) * width];
        for ((f, a), b) in freq.iter_mut().zip(prev).zip(cur) {
            #[allow(clippy::float_cmp)]
            if a != b {
                *f += 1.0;
            }
        }
    }
    freq.iter_mut().for_each(|f| *f /= (m - 1) as f64);
    Ok(freq)
}

/// Effective sample size `M / (1 + 2 Σ ρ_k)` with Geyer's initial positive
/// sequence truncation. A constant series counts as one draw.
pub fn ess(series: &[f64]) -> f64 {
    let m = series.len();
    if m < 2 {
        return m as f64;
    }
    let mu = mean(series);
    let c0 = autocov(series, mu, 0);
    if !(c0 > 0.0) {
        return 1.0;
    }
    let rho = |k: usize| {
        if k < m {
            autocov(series, mu, k) / c0
        } else {
            0.0
        }
    };
    // Γ_j = ρ_{2j} + ρ_{2j+1}, summed while positive and non-increasing
    let mut tau = -1.0;
    let mut prev = f64::INFINITY;
    let mut j = 0;
    while 2 * j < m {
        let g = rho(2 * j) + rho(2 * j + 1);
        if g <= 0.0 {
            break;
        }
        let g = g.min(prev);
        tau += 2.0 * g;
        prev = g;
        j += 1;
    }
    (m as f64 / tau.max(1.0 / m as f64)).min(m as f64 * 1.0e3)
}

/// Standard error of the mean from `⌊√M⌋` non-overlapping batches.
pub fn batch_means_se(series: &[f64]) -> f64 {
    let m = series.len();
    let b = (m as f64).sqrt().floor().max(1.0) as usize;
    let k = m / b;
    if k < 2 {
        return f64::NAN;
    }
    let means: Vec<f64> = (0..k).map(|j| mean(&series[j * b..(j + 1) * b])).collect();
    let mu = mean(&means);
    let var = means.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / (k - 1) as f64;
    (var / k as f64).sqrt()
}

/// Kish effective sample size `(Σw)² / Σw²`.
pub fn weights_ess(w: &[f64]) -> f64 {
    let s: f64 = w.iter().sum();
    let s2: f64 = w.iter().map(|v| v * v).sum();
    s * s / s2
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Summary {
    pub mean: f64,
    pub variance: f64,
    pub sd: f64,
    pub q05: f64,
    pub q25: f64,
    pub q50: f64,
    pub q75: f64,
    pub q95: f64,
    pub ess: f64,
    /// Monte Carlo standard error of the mean.
    pub mcse: f64,
}

/// Weighted quantile by inverse ECDF over sorted values.
fn quantile_sorted(sorted: &[(f64, f64)], total: f64, q: f64) -> f64 {
    let target = q * total;
    let mut acc = 0.0;
    for &(v, w) in sorted {
        acc += w;
        if acc >= target {
            return v;
        }
    }
    sorted.last().map_or(f64::NAN, |p| p.0)
}

/// Posterior summary. MCMC output uses ESS and batch means; weighted
/// (importance) output uses the Kish effective size.
pub fn summarize(series: &[f64], weights: Option<&[f64]>) -> Result<Summary> {
    if series.is_empty() {
        return Err(Error::InvalidInput("summary of an empty series".into()));
    }
    let uniform;
    let w = match weights {
        Some(w) => {
            if w.len() != series.len() {
                return Err(Error::DimensionMismatch {
                    what: "summary weights",
                    expected: series.len(),
                    got: w.len(),
                });
            }
            w
        }
        None => {
            uniform = vec![1.0; series.len()];
            &uniform[..]
        }
    };
    let total: f64 = w.iter().sum();
    if !(total > 0.0) {
        return Err(Error::DegenerateWeights(
            "summary weights sum to zero".into(),
        ));
    }
    let mu = series.iter().zip(w).map(|(x, w)| x * w).sum::<f64>() / total;
    let var = series
        .iter()
        .zip(w)
        .map(|(x, w)| w * (x - mu).powi(2))
        .sum::<f64>()
        / total;
    let n = series.len() as f64;
    let variance = if weights.is_none() && n > 1.0 {
        var * n / (n - 1.0)
    } else {
        var
    };
    let mut sorted: Vec<(f64, f64)> = series.iter().copied().zip(w.iter().copied()).collect();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    let (ess_v, mcse) = match weights {
        None => (ess(series), batch_means_se(series)),
        Some(w) => {
            let e = weights_ess(w);
            (e, (var / e).sqrt())
        }
    };
    Ok(Summary {
        mean: mu,
        variance,
        sd: variance.sqrt(),
        q05: quantile_sorted(&sorted, total, 0.05),
        q25: quantile_sorted(&sorted, total, 0.25),
        q50: quantile_sorted(&sorted, total, 0.5),
        q75: quantile_sorted(&sorted, total, 0.75),
        q95: quantile_sorted(&sorted, total, 0.95),
        ess: ess_v,
        mcse,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HistBin {
    pub lo: f64,
    pub hi: f64,
    pub count: f64,
    pub density: f64,
}

/// Equal-width histogram over the data range; `density` integrates to 1.
pub fn histogram(series: &[f64], bins: usize, weights: Option<&[f64]>) -> Result<Vec<HistBin>> {
    if bins == 0 || series.is_empty() {
        return Err(Error::InvalidInput(
            "histogram needs data and at least one bin".into(),
        ));
    }
    let lo = series.iter().copied().fold(f64::INFINITY, f64::min);
    let mut hi = series.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi == lo {
        hi = lo + 1.0;
    }
    let width = (hi - lo) / bins as f64;
    let mut counts = vec![0.0; bins];
    for (i, x) in series.iter().enumerate() {
        let k = (((x - lo) / width) as usize).min(bins - 1);
        counts[k] += weights.map_or(1.0, |w| w[i]);
    }
    let total: f64 = counts.iter().sum();
    Ok(counts
        .into_iter()
        .enumerate()
        .map(|(k, c)| HistBin {
            lo: lo + k as f64 * width,
            hi: lo + (k + 1) as f64 * width,
            count: c,
            density: c / (total * width),
        })
        .collect())
}

/// Every `k`-th element.
pub fn thin(series: &[f64], k: usize) -> Vec<f64> {
    series.iter().step_by(k.max(1)).copied().collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
}

/// Asymptotic Kolmogorov tail `Q(λ) = 2 Σ (−1)^{j−1} e^{−2 j² λ²}`.
pub fn kolmogorov_q(lambda: f64) -> f64 {
    if lambda < 1e-3 {
        return 1.0;
    }
    let mut sum = 0.0;
    let mut sign = 1.0;
    for j in 1..=200 {
        let term = sign * (-2.0 * (j * j) as f64 * lambda * lambda).exp();
        sum += term;
        if term.abs() < 1e-16 {
            break;
        }
        sign = -sign;
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

fn ks_p(d: f64, n_eff: f64) -> f64 {
    let s = n_eff.sqrt();
    kolmogorov_q((s + 0.12 + 0.11 / s) * d)
}

/// Weighted empirical CDF steps: sorted values with cumulative weights in [0, 1].
fn ecdf(values: &[f64], weights: Option<&[f64]>) -> Vec<(f64, f64)> {
    let mut pts: Vec<(f64, f64)> = match weights {
        Some(w) => values.iter().copied().zip(w.iter().copied()).collect(),
        None => values.iter().map(|v| (*v, 1.0)).collect(),
    };
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    let total: f64 = pts.iter().map(|p| p.1).sum();
    let mut acc = 0.0;
    for p in pts.iter_mut() {
        acc += p.1;
        p.1 = acc / total;
    }
    pts
}

/// One-sample KS test against a continuous CDF.
pub fn ks_one_sample(sample: &[f64], cdf: impl Fn(f64) -> f64) -> KsResult {
    let mut s = sample.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len() as f64;
    let mut d: f64 = 0.0;
    for (i, x) in s.iter().enumerate() {
        let f = cdf(*x);
        d = d.max((i as f64 + 1.0) / n - f).max(f - i as f64 / n);
    }
    KsResult {
        statistic: d,
        p_value: ks_p(d, n),
    }
}

/// Two-sample KS test; with weights, sample sizes are replaced by their
/// Kish effective sizes.
pub fn ks_two_sample_weighted(
    a: &[f64],
    wa: Option<&[f64]>,
    b: &[f64],
    wb: Option<&[f64]>,
) -> KsResult {
    let ea = ecdf(a, wa);
    let eb = ecdf(b, wb);
    let (mut i, mut j) = (0, 0);
    let (mut fa, mut fb) = (0.0, 0.0);
    let mut d: f64 = 0.0;
    while i < ea.len() && j < eb.len() {
        let x = ea[i].0.min(eb[j].0);
        while i < ea.len() && ea[i].0 <= x {
            fa = ea[i].1;
            i += 1;
        }
        while j < eb.len() && eb[j].0 <= x {
            fb = eb[j].1;
            j += 1;
        }
        d = d.max((fa - fb).abs());
    }
    let na = wa.map_or(a.len() as f64, weights_ess);
    let nb = wb.map_or(b.len() as f64, weights_ess);
    KsResult {
        statistic: d,
        p_value: ks_p(d, na * nb / (na + nb)),
    }
}

pub fn ks_two_sample(a: &[f64], b: &[f64]) -> KsResult {
    ks_two_sample_weighted(a, None, b, None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::RngStream;
    use approx::assert_relative_eq;

    fn ar1(phi: f64, m: usize, seed: u64) -> Vec<f64> {
        let mut rng = RngStream::new(seed, 0);
        let mut x = rng.standard_normal() / (1.0 - phi * phi).sqrt();
        (0..m)
            .map(|_| {
                x = phi * x + rng.standard_normal();
                x
            })
            .collect()
    }

    #[test]
    fn iid_lag_one_near_zero() {
        let r = acf(&ar1(0.0, 100_000, 1), 5).unwrap();
        assert_eq!(r.acf[0], 1.0);
        assert!(r.acf[1].abs() < 0.02);
        assert!(r.acf.iter().all(|v| v.abs() <= 1.0));
    }

    #[test]
    fn alternating_series_is_anticorrelated() {
        let x: Vec<f64> = (0..10_000)
            .map(|i| if i % 2 == 0 { 1.0 } else { -1.0 })
            .collect();
        let r = acf(&x, 2).unwrap();
        assert!((r.acf[1] + 1.0).abs() < 1e-3);
    }

    #[test]
    fn ar1_lag_one() {
        let r = acf(&ar1(0.9, 100_000, 2), 3).unwrap();
        assert!((r.acf[1] - 0.9).abs() < 0.02, "{}", r.acf[1]);
        // Bartlett band widens with lag
        assert!(r.se[2] > r.se[1]);
        assert_relative_eq!(r.se[1], (1.0 / 1e5f64).sqrt());
    }

    #[test]
    fn acf_errors() {
        assert!(acf(&[1.0; 20], 3).is_err());
        assert!(acf(&[1.0, 2.0, 3.0], 3).is_err());
        assert!(acf(&[1.0, 2.0, 3.0], 0).is_err());
    }

    #[test]
    fn acf_invariant_to_affine_maps() {
        let x = ar1(0.5, 2000, 3);
        let mut rng = RngStream::new(4, 0);
        let base = acf(&x, 10).unwrap();
        for _ in 0..5 {
            let a = 0.1 + 5.0 * rng.uniform();
            let a = if rng.uniform() < 0.5 { -a } else { a };
            let b = 100.0 * rng.standard_normal();
            let y: Vec<f64> = x.iter().map(|v| a * v + b).collect();
            let r = acf(&y, 10).unwrap();
            for (u, v) in base.acf.iter().zip(&r.acf) {
                assert!((u - v).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn update_frequency_extremes() {
        let same: Vec<f64> = (0..5).flat_map(|_| [1.0, 2.0, 3.0]).collect();
        assert_eq!(update_frequency(&same, 3).unwrap(), vec![0.0; 3]);
        let x = ar1(0.0, 300, 5);
        assert_eq!(update_frequency(&x, 3).unwrap(), vec![1.0; 3]);
        assert!(update_frequency(&[1.0, 2.0], 2).is_err());
    }

    #[test]
    fn update_frequency_covariances() {
        let x = ar1(0.3, 40, 6);
        let mut y = x.clone();
        // repeat rows 2..4 from row 1 so columns change less
        for r in 2..4 {
            for c in 0..4 {
                y[r * 4 + c] = y[4 + c];
            }
        }
        let f = update_frequency(&y, 4).unwrap();
        // permute columns
        let perm = [2, 0, 3, 1];
        let z: Vec<f64> = y
            .chunks(4)
            .flat_map(|row| perm.iter().map(move |&p| row[p]))
            .collect();
        let g = update_frequency(&z, 4).unwrap();
        for (k, &p) in perm.iter().enumerate() {
            assert_eq!(g[k], f[p]);
        }
        // relabel values
        let w: Vec<f64> = y.iter().map(|v| 3.0 * v.exp()).collect();
        assert_eq!(update_frequency(&w, 4).unwrap(), f);
    }

    #[test]
    fn ess_iid_and_ar1() {
        let m = 10_000;
        let e = ess(&ar1(0.0, m, 7));
        assert!((e / m as f64 - 1.0).abs() < 0.1, "{e}");
        let e = ess(&ar1(0.9, 100_000, 8));
        let expect = 100_000.0 * 0.1 / 1.9;
        assert!((e / expect - 1.0).abs() < 0.15, "{e} vs {expect}");
        let ramp: Vec<f64> = (0..1000).map(|i| i as f64 * 1e-9).collect();
        assert!(ess(&ramp) < 5.0);
        assert_eq!(ess(&[2.0; 50]), 1.0);
    }

    #[test]
    fn batch_means_matches_iid_se() {
        let x = ar1(0.0, 40_000, 9);
        let se = batch_means_se(&x);
        assert!((se / (1.0 / 200.0) - 1.0).abs() < 0.25, "{se}");
    }

    #[test]
    fn summary_and_histogram() {
        let x: Vec<f64> = (1..=100).map(|i| i as f64).collect();
        let s = summarize(&x, None).unwrap();
        assert_relative_eq!(s.mean, 50.5);
        assert_eq!(s.q50, 50.0);
        assert_eq!(s.q05, 5.0);
        let w: Vec<f64> = (1..=100).map(|i| if i <= 50 { 0.0 } else { 1.0 }).collect();
        let sw = summarize(&x, Some(&w)).unwrap();
        assert_relative_eq!(sw.mean, 75.5);
        assert_relative_eq!(sw.ess, 50.0);
        let h = histogram(&x, 10, None).unwrap();
        let area: f64 = h.iter().map(|b| b.density * (b.hi - b.lo)).sum();
        assert_relative_eq!(area, 1.0, epsilon = 1e-12);
        assert_eq!(h.iter().map(|b| b.count).sum::<f64>(), 100.0);
    }

    #[test]
    fn kolmogorov_tail_values() {
        // reference values of the limiting distribution
        assert_relative_eq!(kolmogorov_q(1.0), 0.26999967, epsilon = 1e-7);
        assert_relative_eq!(kolmogorov_q(1.36), 0.04943, epsilon = 1e-4);
        assert_eq!(kolmogorov_q(0.0), 1.0);
    }

    #[test]
    fn ks_tests_behave() {
        let a = ar1(0.0, 2000, 10);
        let b = ar1(0.0, 2000, 11);
        assert!(ks_two_sample(&a, &b).p_value > 0.01);
        let c: Vec<f64> = b.iter().map(|v| v + 0.5).collect();
        assert!(ks_two_sample(&a, &c).p_value < 1e-6);
        let normal = statrs::distribution::Normal::new(0.0, 1.0).unwrap();
        use statrs::distribution::ContinuousCDF;
        assert!(ks_one_sample(&a, |x| normal.cdf(x)).p_value > 0.01);
        // weights that drop half the sample change the effective size only
        let w = vec![1.0; 2000];
        let r = ks_two_sample_weighted(&a, Some(&w), &b, None);
        assert_relative_eq!(r.statistic, ks_two_sample(&a, &b).statistic);
    }
}
