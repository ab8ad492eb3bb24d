//! Monte Carlo error propagation: resample measured phonon distributions or
//! fitted datasets under their stated uncertainties and report the resulting
//! parameter spreads.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::readout::{FitResult, PhononDistribution};

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct ResampleConfig {
    pub n_iterations: usize,
    pub seed: u64,
}

impl Default for ResampleConfig {
    fn default() -> Self {
        Self {
            n_iterations: 2000,
            seed: 0,
        }
    }
}

impl ResampleConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_iterations < 2 {
            return Err(Error::InvalidParameter(
                "n_iterations must be >= 2".into(),
            ));
        }
        Ok(())
    }

    /// Generator for iteration `i`. Sub-streams of one seeded ChaCha state,
    /// so the draw for iteration i never depends on how iterations are
    /// scheduled across threads.
    pub fn rng_for(&self, i: usize) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(i as u64);
        rng
    }
}

/// Distribution of one resampled quantity.
#[derive(Clone, Debug, Serialize)]
pub struct UncertaintyReport {
    pub name: String,
    pub point_estimate: f64,
    pub std_dev: f64,
    pub histogram_edges: Vec<f64>,
    pub histogram_counts: Vec<usize>,
    /// Iterations requested.
    pub n_iterations: usize,
    /// Iterations whose re-fit failed and were dropped.
    pub n_failed: usize,
    /// Set when more than 10% of iterations failed.
    pub flagged: bool,
}

const HIST_BINS: usize = 30;

impl UncertaintyReport {
    fn from_samples(
        name: &str,
        point_estimate: f64,
        samples: &[f64],
        n_iterations: usize,
        n_failed: usize,
    ) -> Self {
        let n = samples.len();
        let mean = samples.iter().sum::<f64>() / n as f64;
        let std_dev = if n > 1 {
            (samples.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        let lo = samples.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = samples.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let (edges, counts) = if hi > lo {
            let step = (hi - lo) / HIST_BINS as f64;
            let edges: Vec<f64> = (0..=HIST_BINS).map(|k| lo + k as f64 * step).collect();
            let mut counts = vec![0usize; HIST_BINS];
            for &s in samples {
                let k = (((s - lo) / step) as usize).min(HIST_BINS - 1);
                counts[k] += 1;
            }
            (edges, counts)
        } else {
            (vec![lo, lo], vec![n])
        };
        Self {
            name: name.to_string(),
            point_estimate,
            std_dev,
            histogram_edges: edges,
            histogram_counts: counts,
            n_iterations,
            n_failed,
            flagged: n_failed * 10 > n_iterations,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// One noisy replica of a phonon distribution: per-level Gaussian noise,
/// negatives clamped to zero, then renormalized. `None` when every level
/// clamps to zero (no valid probability vector exists).
pub fn resample_distribution(
    probs: &[f64],
    sigmas: &[f64],
    rng: &mut ChaCha8Rng,
) -> Option<Vec<f64>> {
    let mut replica: Vec<f64> = probs
        .iter()
        .zip(sigmas)
        .map(|(&p, &s)| {
            let noise: f64 = rng.sample(StandardNormal);
            (p + s * noise).max(0.0)
        })
        .collect();
    let total: f64 = replica.iter().sum();
    if total <= 0.0 {
        return None;
    }
    for r in &mut replica {
        *r /= total;
    }
    Some(replica)
}

/// Propagate per-level uncertainties of a phonon distribution into the
/// spread of the mean phonon number.
pub fn resample_pn(pn: &PhononDistribution, cfg: &ResampleConfig) -> Result<UncertaintyReport> {
    cfg.validate()?;
    if pn.probs.len() != pn.sigmas.len() {
        return Err(Error::ShapeMismatch("probs/sigmas length".into()));
    }
    let point = pn.mean();
    let mut nbars = Vec::with_capacity(cfg.n_iterations);
    let mut failed = 0usize;
    for i in 0..cfg.n_iterations {
        let mut rng = cfg.rng_for(i);
        match resample_distribution(&pn.probs, &pn.sigmas, &mut rng) {
            Some(replica) => {
                let nbar: f64 = replica
                    .iter()
                    .enumerate()
                    .map(|(n, p)| n as f64 * p)
                    .sum();
                nbars.push(nbar);
            }
            None => failed += 1,
        }
    }
    if nbars.is_empty() {
        return Err(Error::Numerical(
            "every resampled distribution clamped to zero".into(),
        ));
    }
    Ok(UncertaintyReport::from_samples(
        "nbar",
        point,
        &nbars,
        cfg.n_iterations,
        failed,
    ))
}

/// Re-fit noisy replicas of a measured dataset and report per-parameter
/// distributions. `values` and `sigmas` give the measured points and their
/// one-sigma uncertainties; `fit_fn` maps a replica of `values` to a fit.
/// Failed fits are dropped and counted; more than 10% failures flags every
/// report.
pub fn resample_fit<F>(
    values: &[f64],
    sigmas: &[f64],
    fit_fn: F,
    cfg: &ResampleConfig,
) -> Result<Vec<UncertaintyReport>>
where
    F: Fn(&[f64]) -> Result<FitResult>,
{
    cfg.validate()?;
    if values.len() != sigmas.len() {
        return Err(Error::ShapeMismatch("values/sigmas length".into()));
    }
    let baseline = fit_fn(values)?;
    let n_params = baseline.names.len();
    let mut samples: Vec<Vec<f64>> = vec![Vec::with_capacity(cfg.n_iterations); n_params];
    let mut failed = 0usize;
    let mut replica = vec![0.0; values.len()];
    for i in 0..cfg.n_iterations {
        let mut rng = cfg.rng_for(i);
        for (r, (&v, &s)) in replica.iter_mut().zip(values.iter().zip(sigmas)) {
            let noise: f64 = rng.sample(StandardNormal);
            *r = v + s * noise;
        }
        match fit_fn(&replica) {
            Ok(fit) if fit.values.len() == n_params => {
                for (col, &v) in samples.iter_mut().zip(fit.values.iter()) {
                    col.push(v);
                }
            }
            _ => failed += 1,
        }
    }
    if samples[0].is_empty() {
        return Err(Error::FitNonConvergence(cfg.n_iterations));
    }
    let flagged = failed * 10 > cfg.n_iterations;
    let mut reports = Vec::with_capacity(n_params);
    for (k, name) in baseline.names.iter().enumerate() {
        let mut rep = UncertaintyReport::from_samples(
            name,
            baseline.values[k],
            &samples[k],
            cfg.n_iterations,
            failed,
        );
        rep.flagged = flagged;
        reports.push(rep);
    }
    Ok(reports)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::readout::fit_double_exp;

    fn pn(probs: &[f64], sigmas: &[f64]) -> PhononDistribution {
        PhononDistribution {
            probs: probs.to_vec(),
            sigmas: sigmas.to_vec(),
        }
    }

    #[test]
    fn zero_sigmas_give_zero_width() {
        let report = resample_pn(
            &pn(&[0.2, 0.5, 0.3], &[0.0, 0.0, 0.0]),
            &ResampleConfig::default(),
        )
        .unwrap();
        assert!(report.std_dev < 1e-12);
        assert_eq!(report.n_failed, 0);
        assert!(!report.flagged);
        assert_eq!(report.histogram_counts.iter().sum::<usize>(), 2000);
    }

    #[test]
    fn matches_brute_force_oracle() {
        let probs = [0.5, 0.5];
        let sigmas = [0.05, 0.05];
        let cfg = ResampleConfig {
            n_iterations: 20_000,
            seed: 3,
        };
        let report = resample_pn(&pn(&probs, &sigmas), &cfg).unwrap();

        // independent brute-force run of the same clamp-renormalize procedure
        let mut rng = ChaCha8Rng::seed_from_u64(999);
        let n = 1_000_000usize;
        let mut sum = 0.0;
        let mut sumsq = 0.0;
        for _ in 0..n {
            let a = (probs[0] + sigmas[0] * rng.sample::<f64, _>(StandardNormal)).max(0.0);
            let b = (probs[1] + sigmas[1] * rng.sample::<f64, _>(StandardNormal)).max(0.0);
            let nbar = b / (a + b);
            sum += nbar;
            sumsq += nbar * nbar;
        }
        let mean = sum / n as f64;
        let oracle_std = (sumsq / n as f64 - mean * mean).sqrt();
        assert!(
            (report.std_dev - oracle_std).abs() < 0.05 * oracle_std,
            "mc {} oracle {}",
            report.std_dev,
            oracle_std
        );
    }

    #[test]
    fn identical_seeds_are_bit_identical() {
        let d = pn(&[0.3, 0.4, 0.3], &[0.02, 0.03, 0.02]);
        let cfg = ResampleConfig {
            n_iterations: 500,
            seed: 77,
        };
        let a = resample_pn(&d, &cfg).unwrap();
        let b = resample_pn(&d, &cfg).unwrap();
        assert_eq!(a.std_dev.to_bits(), b.std_dev.to_bits());
        assert_eq!(a.histogram_counts, b.histogram_counts);
        let c = resample_pn(
            &d,
            &ResampleConfig {
                seed: 78,
                ..cfg
            },
        )
        .unwrap();
        assert_ne!(a.std_dev.to_bits(), c.std_dev.to_bits());
    }

    #[test]
    fn doubling_sigmas_does_not_shrink_std() {
        let probs = [0.25, 0.35, 0.25, 0.15];
        let sigmas = [0.02, 0.015, 0.02, 0.01];
        let doubled: Vec<f64> = sigmas.iter().map(|s| 2.0 * s).collect();
        for seed in 0..20 {
            let cfg = ResampleConfig {
                n_iterations: 400,
                seed,
            };
            let a = resample_pn(&pn(&probs, &sigmas), &cfg).unwrap();
            let b = resample_pn(&pn(&probs, &doubled), &cfg).unwrap();
            assert!(b.std_dev >= a.std_dev, "seed {seed}");
        }
    }

    #[test]
    fn replicas_stay_normalized() {
        let probs = [0.1, 0.2, 0.3, 0.4];
        let sigmas = [0.05; 4];
        let cfg = ResampleConfig::default();
        for i in 0..200 {
            let mut rng = cfg.rng_for(i);
            if let Some(r) = resample_distribution(&probs, &sigmas, &mut rng) {
                let total: f64 = r.iter().sum();
                assert!((total - 1.0).abs() < 1e-12);
                assert!(r.iter().all(|&p| p >= 0.0));
            }
        }
    }

    #[test]
    fn fit_resampling_noiseless_is_exact() {
        let taus: Vec<f64> = (0..40).map(|i| i as f64 * 1e-6).collect();
        let nbar: Vec<f64> = taus
            .iter()
            .map(|&t| 2.0 * (-3e5 * t).exp() + 1.5 * (-4e4 * t).exp())
            .collect();
        let cfg = ResampleConfig {
            n_iterations: 50,
            seed: 1,
        };
        let reports = resample_fit(
            &nbar,
            &vec![0.0; nbar.len()],
            |y| fit_double_exp(&taus, y, None),
            &cfg,
        )
        .unwrap();
        assert_eq!(reports.len(), 4);
        for r in &reports {
            assert!(r.std_dev < 1e-9 * r.point_estimate.abs().max(1.0), "{}", r.name);
        }
    }

    #[test]
    fn fit_spread_agrees_with_covariance_estimate() {
        let taus: Vec<f64> = (0..60).map(|i| i as f64 * 0.8e-6).collect();
        let clean: Vec<f64> = taus
            .iter()
            .map(|&t| 2.5 * (-3e5 * t).exp() + 1.2 * (-3e4 * t).exp())
            .collect();
        let sigma = 0.03;
        // one noisy realization as the measured dataset
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let noisy: Vec<f64> = clean
            .iter()
            .map(|&v| v + sigma * rng.sample::<f64, _>(StandardNormal))
            .collect();
        let single = fit_double_exp(&taus, &noisy, None).unwrap();
        let cov_std = single.std_error("kappa2").unwrap();

        let cfg = ResampleConfig {
            n_iterations: 400,
            seed: 2,
        };
        let reports = resample_fit(
            &noisy,
            &vec![sigma; noisy.len()],
            |y| fit_double_exp(&taus, y, None),
            &cfg,
        )
        .unwrap();
        let mc = reports.iter().find(|r| r.name == "kappa2").unwrap();
        assert!(!mc.flagged, "failures {}", mc.n_failed);
        let ratio = mc.std_dev / cov_std;
        assert!((0.5..2.0).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn report_serializes_with_histogram() {
        let report = resample_pn(
            &pn(&[0.6, 0.4], &[0.03, 0.03]),
            &ResampleConfig {
                n_iterations: 300,
                seed: 4,
            },
        )
        .unwrap();
        assert_eq!(report.histogram_counts.iter().sum::<usize>(), 300);
        assert_eq!(
            report.histogram_edges.len(),
            report.histogram_counts.len() + 1
        );
        let v: serde_json::Value = serde_json::from_str(&report.to_json().unwrap()).unwrap();
        assert_eq!(v["name"], "nbar");
    }
}
