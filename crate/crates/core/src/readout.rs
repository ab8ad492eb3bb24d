//! Dispersive Ramsey readout: forward synthesis of the multi-tone signal,
//! its inversion to a phonon-number distribution, and the downstream
//! double-exponential, interference-fringe, and dephasing-envelope fits.
//!
//! The Ramsey model is S(t) = Σ_n A_n e^{-κt} cos((ω0 + 2χn)t + φ_n) with a
//! single shared decay κ. Internally each tone is parametrized as
//! (a_n, b_n) = (A_n cos φ_n, -A_n sin φ_n), which keeps the Jacobian full
//! rank when a level is unoccupied; amplitudes and phases are recovered
//! afterwards, so fitted A_n are nonnegative by construction.

use ndarray::Array2;
use rustfft::{num_complex::Complex, FftPlanner};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fitting::{self, LmOptions, LmOutcome};

/// Uniformly sampled Ramsey signal.
#[derive(Clone, Debug)]
pub struct RamseySignal {
    times: Vec<f64>,
    values: Vec<f64>,
}

impl RamseySignal {
    pub fn new(times: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if times.len() != values.len() || times.len() < 2 {
            return Err(Error::ShapeMismatch("times/values length".into()));
        }
        let dt = times[1] - times[0];
        if dt <= 0.0 {
            return Err(Error::InvalidParameter("times must increase".into()));
        }
        for w in times.windows(2) {
            let d = w[1] - w[0];
            if (d - dt).abs() > 1e-12 * dt.abs().max(d.abs()) {
                return Err(Error::InvalidParameter(
                    "times must form a uniform grid".into(),
                ));
            }
        }
        Ok(Self { times, values })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn dt(&self) -> f64 {
        self.times[1] - self.times[0]
    }
}

/// Phonon-number distribution with per-level standard deviations.
#[derive(Clone, Debug, Serialize)]
pub struct PhononDistribution {
    pub probs: Vec<f64>,
    pub sigmas: Vec<f64>,
}

impl PhononDistribution {
    /// Normalize `probs` to unit sum (sigmas taken as already matching the
    /// normalized scale).
    pub fn normalized(probs: Vec<f64>, sigmas: Vec<f64>) -> Result<Self> {
        if probs.len() != sigmas.len() {
            return Err(Error::ShapeMismatch("probs/sigmas length".into()));
        }
        if probs.iter().any(|&p| p < 0.0) {
            return Err(Error::InvalidParameter("probabilities must be >= 0".into()));
        }
        let s: f64 = probs.iter().sum();
        if s <= 0.0 {
            return Err(Error::InvalidParameter("all probabilities zero".into()));
        }
        Ok(Self {
            probs: probs.into_iter().map(|p| p / s).collect(),
            sigmas,
        })
    }

    pub fn mean(&self) -> f64 {
        mean_phonon(&self.probs)
    }
}

/// Parameter estimates with covariance for one least-squares fit.
#[derive(Clone, Debug, Serialize)]
pub struct FitResult {
    pub names: Vec<String>,
    pub values: Vec<f64>,
    pub std_errors: Vec<f64>,
    pub covariance: Array2<f64>,
    pub residual_norm: f64,
    pub converged: bool,
    pub n_iterations: usize,
    pub gradient_norm: f64,
    /// Parameters clamped to a boundary during post-processing.
    pub clamped: Vec<String>,
    /// Set when two fitted rates are within 10% of each other.
    pub degenerate: bool,
    /// Set when the solution covariance needed ridge regularization (flat
    /// directions in the Jacobian).
    pub covariance_regularized: bool,
}

impl FitResult {
    fn from_outcome(names: Vec<String>, outcome: &LmOutcome) -> Self {
        let std_errors = (0..names.len())
            .map(|i| outcome.covariance[(i, i)].max(0.0).sqrt())
            .collect();
        Self {
            names,
            values: outcome.params.clone(),
            std_errors,
            covariance: outcome.covariance.clone(),
            residual_norm: outcome.residual_norm,
            converged: outcome.converged,
            n_iterations: outcome.n_iterations,
            gradient_norm: outcome.gradient_norm,
            clamped: Vec::new(),
            degenerate: false,
            covariance_regularized: outcome.covariance_regularized,
        }
    }

    pub fn value(&self, name: &str) -> Option<f64> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| self.values[i])
    }

    pub fn std_error(&self, name: &str) -> Option<f64> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| self.std_errors[i])
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("serializable")
    }
}

fn require_convergence(outcome: &LmOutcome) -> Result<()> {
    if outcome.converged {
        Ok(())
    } else {
        Err(Error::FitNonConvergence(outcome.n_iterations))
    }
}

/// S(t) = Σ_n A_n e^{-κt} cos((ω0 + 2χn)t + φ_n) with A_n = pn[n] taken
/// literally (no normalization). `phases` holds one shared phase or one per
/// level.
pub fn synthesize_ramsey(
    pn: &[f64],
    omega0: f64,
    chi: f64,
    kappa: f64,
    phases: &[f64],
    times: &[f64],
) -> Result<RamseySignal> {
    if phases.len() != 1 && phases.len() != pn.len() {
        return Err(Error::ShapeMismatch(
            "phases must be shared or one per level".into(),
        ));
    }
    let values = times
        .iter()
        .map(|&t| {
            let damp = (-kappa * t).exp();
            pn.iter()
                .enumerate()
                .map(|(n, &a)| {
                    let phi = if phases.len() == 1 { phases[0] } else { phases[n] };
                    a * damp * ((omega0 + 2.0 * chi * n as f64) * t + phi).cos()
                })
                .sum()
        })
        .collect();
    RamseySignal::new(times.to_vec(), values)
}

/// Σ n·P(n).
pub fn mean_phonon(pn: &[f64]) -> f64 {
    pn.iter().enumerate().map(|(n, p)| n as f64 * p).sum()
}

/// Truncated, renormalized Poisson distribution with mean `nbar`.
pub fn poisson_reference(nbar: f64, n_max: usize) -> Result<PhononDistribution> {
    if nbar < 0.0 {
        return Err(Error::InvalidParameter("nbar must be >= 0".into()));
    }
    let mut probs = Vec::with_capacity(n_max + 1);
    let mut w = 1.0f64; // nbar^n / n!, scaled at the end
    for n in 0..=n_max {
        if n > 0 {
            w *= nbar / n as f64;
        }
        probs.push(w);
    }
    let sigmas = vec![0.0; n_max + 1];
    PhononDistribution::normalized(probs, sigmas)
}

/// Total variation distance ½ Σ |p_n − q_n|.
pub fn total_variation(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p
        .iter()
        .zip(q.iter())
        .map(|(a, b)| (a - b).abs())
        .sum::<f64>()
}

/// χ = −(g²/Δ)·α_q/(Δ − α_q), all arguments angular (rad/s).
pub fn dispersive_shift(g: f64, delta: f64, alpha_q: f64) -> Result<f64> {
    if delta == 0.0 {
        return Err(Error::InvalidParameter("delta must be nonzero".into()));
    }
    if delta == alpha_q {
        return Err(Error::InvalidParameter(
            "delta equal to alpha_q is singular".into(),
        ));
    }
    Ok(-(g * g / delta) * alpha_q / (delta - alpha_q))
}

/// Solve χ = −(g²/Δ)·α_q/(Δ − α_q) for α_q: α_q = −χΔ²/(g² − χΔ).
pub fn anharmonicity_from_shift(g: f64, delta: f64, chi: f64) -> Result<f64> {
    if delta == 0.0 {
        return Err(Error::InvalidParameter("delta must be nonzero".into()));
    }
    let denom = g * g - chi * delta;
    if denom == 0.0 {
        return Err(Error::Numerical("singular anharmonicity inversion".into()));
    }
    Ok(-chi * delta * delta / denom)
}

/// Optional seeds for the Ramsey fit; anything left `None` is estimated from
/// the signal's Fourier spectrum.
#[derive(Clone, Copy, Debug, Default)]
pub struct RamseyHints {
    pub omega0: Option<f64>,
    pub chi: Option<f64>,
    pub kappa: Option<f64>,
}

/// Magnitude spectrum of `values` zero-padded by `pad` and the angular
/// frequency step between bins.
fn magnitude_spectrum(values: &[f64], dt: f64, pad: usize) -> (Vec<f64>, f64) {
    let m = values.len();
    let len = (m * pad).next_power_of_two();
    let mean = values.iter().sum::<f64>() / m as f64;
    let mut buf: Vec<Complex<f64>> = values
        .iter()
        .map(|&v| Complex::new(v - mean, 0.0))
        .chain(std::iter::repeat(Complex::new(0.0, 0.0)))
        .take(len)
        .collect();
    FftPlanner::new().plan_fft_forward(len).process(&mut buf);
    let mags: Vec<f64> = buf[..len / 2].iter().map(|z| z.norm()).collect();
    let dw = std::f64::consts::TAU / (len as f64 * dt);
    (mags, dw)
}

/// Linear tone-amplitude solve at fixed (ω0, 2χ, κ): returns (a, b, cost).
fn varpro_tones(
    times: &[f64],
    values: &[f64],
    omega0: f64,
    twochi: f64,
    kappa: f64,
    q: usize,
) -> Option<(Vec<f64>, Vec<f64>, f64)> {
    let m = times.len();
    let p = 2 * q;
    let mut design = Array2::<f64>::zeros((m, p));
    for (i, &t) in times.iter().enumerate() {
        let damp = (-kappa * t).exp();
        for n in 0..q {
            let th = (omega0 + twochi * n as f64) * t;
            design[(i, n)] = damp * th.cos();
            design[(i, q + n)] = damp * th.sin();
        }
    }
    let mut gtg = Array2::<f64>::zeros((p, p));
    let mut gty = vec![0.0; p];
    for a in 0..p {
        for i in 0..m {
            gty[a] += design[(i, a)] * values[i];
        }
        for b in a..p {
            let mut s = 0.0;
            for i in 0..m {
                s += design[(i, a)] * design[(i, b)];
            }
            gtg[(a, b)] = s;
            gtg[(b, a)] = s;
        }
    }
    // small ridge keeps near-duplicate tones solvable during seeding
    let scale = (0..p).map(|a| gtg[(a, a)]).fold(0.0f64, f64::max);
    for a in 0..p {
        gtg[(a, a)] += 1e-12 * scale.max(1e-300);
    }
    let x = crate::linalg::cholesky_solve(&gtg, &gty)?;
    let mut cost = 0.0;
    for i in 0..m {
        let mut model = 0.0;
        for a in 0..p {
            model += design[(i, a)] * x[a];
        }
        let r = model - values[i];
        cost += r * r;
    }
    Some((x[..q].to_vec(), x[q..].to_vec(), cost))
}

fn ramsey_model_and_jacobian(
    times: &[f64],
    q: usize,
    p: &[f64],
    values: &[f64],
    residuals: Option<&mut [f64]>,
    jacobian: Option<&mut Array2<f64>>,
) {
    let (omega0, twochi, kappa) = (p[0], p[1], p[2]);
    let a = &p[3..3 + q];
    let b = &p[3 + q..3 + 2 * q];
    let mut res = residuals;
    let mut jac = jacobian;
    for (i, &t) in times.iter().enumerate() {
        let damp = (-kappa * t).exp();
        let mut model = 0.0;
        let mut dmodel_domega = 0.0;
        let mut dmodel_dtwochi = 0.0;
        for n in 0..q {
            let th = (omega0 + twochi * n as f64) * t;
            let (s, c) = th.sin_cos();
            let tone = a[n] * c + b[n] * s;
            let dtone_dth = -a[n] * s + b[n] * c;
            model += damp * tone;
            dmodel_domega += damp * dtone_dth * t;
            dmodel_dtwochi += damp * dtone_dth * n as f64 * t;
            if let Some(j) = jac.as_deref_mut() {
                j[(i, 3 + n)] = damp * c;
                j[(i, 3 + q + n)] = damp * s;
            }
        }
        if let Some(r) = res.as_deref_mut() {
            r[i] = model - values[i];
        }
        if let Some(j) = jac.as_deref_mut() {
            j[(i, 0)] = dmodel_domega;
            j[(i, 1)] = dmodel_dtwochi;
            j[(i, 2)] = -t * model;
        }
    }
}

/// Invert a Ramsey signal into P(n) for n = 0..n_max, with uncertainties
/// propagated from the fit covariance. Tones are seeded from the spectrum
/// (or `hints`) and polished by damped least squares over
/// (ω0, 2χ, κ, a_n, b_n).
pub fn fit_ramsey(
    signal: &RamseySignal,
    n_max: usize,
    hints: &RamseyHints,
) -> Result<(PhononDistribution, FitResult)> {
    let q = n_max + 1;
    let m = signal.times.len();
    if m < 4 * (n_max + 3) {
        return Err(Error::InvalidParameter(format!(
            "signal length {m} below 4*(n_max+3) = {}",
            4 * (n_max + 3)
        )));
    }
    let times = signal.times();
    let values = signal.values();
    let duration = times[m - 1] - times[0];

    // candidate (omega0, twochi) seeds
    let mut freq_candidates: Vec<(f64, f64)> = Vec::new();
    match (hints.omega0, hints.chi) {
        (Some(w0), Some(chi)) => freq_candidates.push((w0, 2.0 * chi)),
        _ => {
            let (mags, dw) = magnitude_spectrum(values, signal.dt(), 8);
            let peak_k = mags
                .iter()
                .enumerate()
                .skip(1)
                .max_by(|a, b| a.1.total_cmp(b.1))
                .map(|(k, _)| k)
                .unwrap_or(1);
            let w_peak = peak_k as f64 * dw;
            let gaps: Vec<f64> = if let Some(chi) = hints.chi {
                vec![2.0 * chi]
            } else {
                // adjacent local-maxima spacing estimates |2χ|
                let threshold = 0.15 * mags[peak_k];
                let mut peaks = Vec::new();
                for k in 2..mags.len() - 1 {
                    if mags[k] > threshold && mags[k] >= mags[k - 1] && mags[k] > mags[k + 1] {
                        if peaks.last().map_or(true, |&last: &usize| k - last > 2) {
                            peaks.push(k);
                        }
                    }
                }
                let mut spacings: Vec<f64> = peaks
                    .windows(2)
                    .map(|w| (w[1] - w[0]) as f64 * dw)
                    .collect();
                spacings.sort_by(f64::total_cmp);
                match spacings.get(spacings.len() / 2) {
                    Some(&gap) => vec![-gap, gap],
                    None => vec![-std::f64::consts::TAU / duration],
                }
            };
            for &twochi in &gaps {
                match hints.omega0 {
                    Some(w0) => freq_candidates.push((w0, twochi)),
                    None => {
                        // the spectral peak is ω0 + 2χ·n for some unknown n
                        for n in 0..q {
                            freq_candidates.push((w_peak - twochi * n as f64, twochi));
                        }
                    }
                }
            }
        }
    }
    let kappa_candidates: Vec<f64> = match hints.kappa {
        Some(k) => vec![k],
        None => vec![0.5 / duration, 2.0 / duration, 8.0 / duration],
    };

    let mut best: Option<(f64, f64, f64, f64)> = None; // (cost, w0, twochi, kappa)
    let consider = |w0: f64, twochi: f64, kappa: f64, best: &mut Option<(f64, f64, f64, f64)>| {
        if let Some((_, _, cost)) = varpro_tones(times, values, w0, twochi, kappa, q) {
            if best.map_or(true, |(c, ..)| cost < c) {
                *best = Some((cost, w0, twochi, kappa));
            }
        }
    };
    for &(w0, twochi) in &freq_candidates {
        for &kappa in &kappa_candidates {
            consider(w0, twochi, kappa, &mut best);
        }
    }
    if best.is_none() {
        return Err(Error::Numerical("no viable Ramsey seed found".into()));
    }

    // Seed refinement and multi-start polish. Adjacent tones are only
    // marginally resolved over a short record, so the amplitude-eliminated
    // cost surface has narrow valleys and comb-shifted local minima: the
    // dominant spectral peak can be assigned to the wrong level n with a
    // compensating change of the spacing 2χ. The coarse winner of each
    // assignment is therefore polished by its own damped least-squares run
    // and the lowest final cost wins. Supplied hints are trusted: their scan
    // windows stay narrow and no reassignment is attempted.
    let w_res = std::f64::consts::TAU / duration;
    let twochi_range = if hints.chi.is_some() { 0.02 } else { 0.12 };
    let w0_range = if hints.omega0.is_some() { 0.05 } else { 0.5 };

    let refine = |start: (f64, f64, f64, f64)| -> (f64, f64, f64, f64) {
        let mut cur = Some(start);
        for round in 0..3 {
            let shrink = 3f64.powi(round);
            let (_, w0_c, twochi_c, kappa_c) = cur.unwrap();
            for step in -12i32..=12 {
                let twochi = twochi_c * (1.0 + twochi_range / shrink * step as f64 / 12.0);
                consider(w0_c, twochi, kappa_c, &mut cur);
            }
            let (_, w0_c, twochi_c, kappa_c) = cur.unwrap();
            for step in -12i32..=12 {
                let w0 = w0_c + w0_range * w_res / shrink * step as f64 / 12.0;
                consider(w0, twochi_c, kappa_c, &mut cur);
            }
            let (_, w0_c, twochi_c, kappa_c) = cur.unwrap();
            for step in -6i32..=6 {
                let kappa = kappa_c * (4f64.powf(step as f64 / 6.0)).powf(1.0 / shrink);
                consider(w0_c, twochi_c, kappa, &mut cur);
            }
        }
        cur.unwrap()
    };

    let mut seeds: Vec<(f64, f64, f64, f64)> = vec![best.unwrap()];
    if hints.omega0.is_none() {
        // per-assignment winners of a joint (assignment, spacing) scan with
        // the strongest fitted tone frequency pinned
        let (_, w0_c, twochi_c, kappa_c) = best.unwrap();
        if let Some((a_c, b_c, _)) = varpro_tones(times, values, w0_c, twochi_c, kappa_c, q) {
            let n_star = (0..q)
                .max_by(|&i, &j| a_c[i].hypot(b_c[i]).total_cmp(&a_c[j].hypot(b_c[j])))
                .unwrap();
            let w_star = w0_c + twochi_c * n_star as f64;
            for n_assign in 0..q {
                let mut local: Option<(f64, f64, f64, f64)> = None;
                for step in -12i32..=12 {
                    let twochi = twochi_c * (1.0 + twochi_range * step as f64 / 12.0);
                    consider(w_star - twochi * n_assign as f64, twochi, kappa_c, &mut local);
                }
                if let Some(s) = local {
                    seeds.push(s);
                }
            }
        }
        seeds.sort_by(|a, b| a.0.total_cmp(&b.0));
        seeds.truncate(5);
    }

    let mut best_outcome: Option<LmOutcome> = None;
    for &seed in &seeds {
        let (_, w0_s, twochi_s, kappa_s) = refine(seed);
        let (a_seed, b_seed, _) =
            match varpro_tones(times, values, w0_s, twochi_s, kappa_s, q) {
                Some(x) => x,
                None => continue,
            };
        let mut init = vec![w0_s, twochi_s, kappa_s];
        init.extend_from_slice(&a_seed);
        init.extend_from_slice(&b_seed);
        let outcome = match fitting::levenberg_marquardt(
            |p, out| ramsey_model_and_jacobian(times, q, p, values, Some(out), None),
            |p, out| ramsey_model_and_jacobian(times, q, p, values, None, Some(out)),
            &init,
            &vec![false; init.len()],
            m,
            &LmOptions::default(),
        ) {
            Ok(o) => o,
            Err(_) => continue,
        };
        if best_outcome
            .as_ref()
            .map_or(true, |b| outcome.residual_norm < b.residual_norm)
        {
            best_outcome = Some(outcome);
        }
    }
    let outcome =
        best_outcome.ok_or_else(|| Error::Numerical("every Ramsey fit attempt failed".into()))?;
    require_convergence(&outcome)?;

    // amplitudes, then P(n), with delta-method uncertainty propagation.

    // amplitudes, then P(n), with delta-method uncertainty propagation.
    // Levels with a significant tone use A_n = hypot(a_n, b_n); levels
    // compatible with zero are projected onto the ensemble phase so that
    // noise enters with its sign, and negative projections are clamped to 0
    // (recorded in the fit result). Taking |A| on empty levels would bias
    // every noise fluctuation upward.
    let pars = &outcome.params;
    let a = &pars[3..3 + q];
    let b = &pars[3 + q..3 + 2 * q];
    let raw_amps: Vec<f64> = (0..q).map(|n| a[n].hypot(b[n])).collect();
    let raw_sigmas: Vec<f64> = (0..q)
        .map(|n| {
            let (ga, gb) = if raw_amps[n] > 1e-300 {
                (a[n] / raw_amps[n], b[n] / raw_amps[n])
            } else {
                (1.0, 0.0)
            };
            (ga * ga * outcome.covariance[(3 + n, 3 + n)]
                + 2.0 * ga * gb * outcome.covariance[(3 + n, 3 + q + n)]
                + gb * gb * outcome.covariance[(3 + q + n, 3 + q + n)])
                .max(0.0)
                .sqrt()
        })
        .collect();
    let significant: Vec<bool> = (0..q).map(|n| raw_amps[n] > 3.0 * raw_sigmas[n]).collect();
    // amplitude-weighted mean phase over the significant tones
    let (mut ph_re, mut ph_im) = (0.0f64, 0.0f64);
    for n in 0..q {
        if significant[n] {
            ph_re += a[n];
            ph_im += -b[n];
        }
    }
    if ph_re == 0.0 && ph_im == 0.0 {
        let n_big = (0..q)
            .max_by(|&i, &j| raw_amps[i].total_cmp(&raw_amps[j]))
            .unwrap();
        ph_re = a[n_big];
        ph_im = -b[n_big];
    }
    let norm = ph_re.hypot(ph_im).max(1e-300);
    let (cos_ph, sin_ph) = (ph_re / norm, ph_im / norm);

    let mut amps = Vec::with_capacity(q);
    let mut clamped = Vec::new();
    let mut grads: Vec<(f64, f64)> = Vec::with_capacity(q);
    for n in 0..q {
        if significant[n] {
            amps.push(raw_amps[n]);
            grads.push((a[n] / raw_amps[n], b[n] / raw_amps[n]));
        } else {
            // a_n = A cos φ, b_n = -A sin φ: projection along the mean phase
            let signed = a[n] * cos_ph - b[n] * sin_ph;
            if signed < 0.0 {
                clamped.push(format!("A{n}"));
                amps.push(0.0);
            } else {
                amps.push(signed);
            }
            grads.push((cos_ph, -sin_ph));
        }
    }
    let mut cov_amp = Array2::<f64>::zeros((q, q));
    for j in 0..q {
        for k in 0..q {
            let (gja, gjb) = grads[j];
            let (gka, gkb) = grads[k];
            cov_amp[(j, k)] = gja * gka * outcome.covariance[(3 + j, 3 + k)]
                + gja * gkb * outcome.covariance[(3 + j, 3 + q + k)]
                + gjb * gka * outcome.covariance[(3 + q + j, 3 + k)]
                + gjb * gkb * outcome.covariance[(3 + q + j, 3 + q + k)];
        }
    }
    let total: f64 = amps.iter().sum();
    if total <= 0.0 {
        return Err(Error::Numerical("all fitted amplitudes vanish".into()));
    }
    let probs: Vec<f64> = amps.iter().map(|&x| x / total).collect();
    let mut sigmas = Vec::with_capacity(q);
    for n in 0..q {
        let mut var = 0.0;
        for j in 0..q {
            for k in 0..q {
                let dj = (if n == j { total } else { 0.0 } - amps[n]) / (total * total);
                let dk = (if n == k { total } else { 0.0 } - amps[n]) / (total * total);
                var += dj * dk * cov_amp[(j, k)];
            }
        }
        sigmas.push(var.max(0.0).sqrt());
    }

    let mut names = vec!["omega0".into(), "two_chi".into(), "kappa".into()];
    for n in 0..q {
        names.push(format!("a{n}"));
    }
    for n in 0..q {
        names.push(format!("b{n}"));
    }
    let mut fit = FitResult::from_outcome(names, &outcome);
    fit.clamped = clamped;
    Ok((PhononDistribution { probs, sigmas }, fit))
}

/// Fit n̄(τ) = a1 e^{−κ1 τ} + a2 e^{−κ2 τ}. When `fixed_kappa1` is given,
/// κ1 is held constant; otherwise κ1 > κ2 is enforced by post-fit ordering.
/// Rates within 10% of each other set the `degenerate` flag.
pub fn fit_double_exp(taus: &[f64], nbar: &[f64], fixed_kappa1: Option<f64>) -> Result<FitResult> {
    let m = taus.len();
    if m < 6 || nbar.len() != m {
        return Err(Error::InvalidParameter(
            "need at least 6 matching (tau, nbar) points".into(),
        ));
    }
    if nbar.iter().any(|&v| v <= 0.0) {
        return Err(Error::InvalidParameter("nbar must be positive".into()));
    }
    let span = taus[m - 1] - taus[0];
    if span <= 0.0 {
        return Err(Error::InvalidParameter("taus must increase".into()));
    }

    // seed rates on a log grid, amplitudes by linear solve
    let rate_grid: Vec<f64> = (0..12)
        .map(|i| (0.1f64.ln() + i as f64 / 11.0 * (50.0f64 / 0.1).ln()).exp() / span)
        .collect();
    let solve_amps = |k1: f64, k2: f64| -> Option<(f64, f64, f64)> {
        let (mut s11, mut s12, mut s22, mut y1, mut y2) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for (&t, &y) in taus.iter().zip(nbar.iter()) {
            let e1 = (-k1 * t).exp();
            let e2 = (-k2 * t).exp();
            s11 += e1 * e1;
            s12 += e1 * e2;
            s22 += e2 * e2;
            y1 += e1 * y;
            y2 += e2 * y;
        }
        let det = s11 * s22 - s12 * s12;
        if det.abs() < 1e-14 * s11 * s22 {
            return None;
        }
        let a1 = (y1 * s22 - y2 * s12) / det;
        let a2 = (y2 * s11 - y1 * s12) / det;
        let mut cost = 0.0;
        for (&t, &y) in taus.iter().zip(nbar.iter()) {
            let r = a1 * (-k1 * t).exp() + a2 * (-k2 * t).exp() - y;
            cost += r * r;
        }
        Some((a1, a2, cost))
    };
    let mut best: Option<(f64, [f64; 4])> = None;
    let k1_candidates: Vec<f64> = match fixed_kappa1 {
        Some(k) => vec![k],
        None => rate_grid.clone(),
    };
    for &k1 in &k1_candidates {
        for &k2 in &rate_grid {
            if k2 >= k1 {
                continue;
            }
            if let Some((a1, a2, cost)) = solve_amps(k1, k2) {
                if best.as_ref().map_or(true, |(c, _)| cost < *c) {
                    best = Some((cost, [a1, k1, a2, k2]));
                }
            }
        }
    }
    let (_, init) = best.ok_or_else(|| Error::Numerical("no double-exponential seed".into()))?;

    let residuals = |p: &[f64], out: &mut [f64]| {
        for (i, (&t, &y)) in taus.iter().zip(nbar.iter()).enumerate() {
            out[i] = p[0] * (-p[1] * t).exp() + p[2] * (-p[3] * t).exp() - y;
        }
    };
    let jacobian = |p: &[f64], out: &mut Array2<f64>| {
        for (i, &t) in taus.iter().enumerate() {
            let e1 = (-p[1] * t).exp();
            let e2 = (-p[3] * t).exp();
            out[(i, 0)] = e1;
            out[(i, 1)] = -p[0] * t * e1;
            out[(i, 2)] = e2;
            out[(i, 3)] = -p[2] * t * e2;
        }
    };
    let fixed = [false, fixed_kappa1.is_some(), false, false];
    let outcome = fitting::levenberg_marquardt(
        residuals,
        jacobian,
        &init,
        &fixed,
        m,
        &LmOptions::default(),
    )?;
    require_convergence(&outcome)?;

    let mut values = outcome.params.clone();
    let mut covariance = outcome.covariance.clone();
    let mut covariance_regularized = outcome.covariance_regularized;
    let mut residual_norm = outcome.residual_norm;

    // a genuinely single-exponential dataset leaves (a2, κ2) on a flat
    // manifold where any amplitude split fits equally well; collapse to the
    // single-exponential solution when it loses nothing
    if fixed_kappa1.is_none() {
        let logs: Vec<f64> = nbar.iter().map(|v| v.ln()).collect();
        let tbar = taus.iter().sum::<f64>() / m as f64;
        let lbar = logs.iter().sum::<f64>() / m as f64;
        let (mut sxx, mut sxy) = (0.0, 0.0);
        for (&t, &l) in taus.iter().zip(logs.iter()) {
            sxx += (t - tbar) * (t - tbar);
            sxy += (t - tbar) * (l - lbar);
        }
        let g0 = -sxy / sxx;
        let c0 = (lbar + g0 * tbar).exp();
        let res1 = |p: &[f64], out: &mut [f64]| {
            for (i, (&t, &y)) in taus.iter().zip(nbar.iter()).enumerate() {
                out[i] = p[0] * (-p[1] * t).exp() - y;
            }
        };
        let jac1 = |p: &[f64], out: &mut Array2<f64>| {
            for (i, &t) in taus.iter().enumerate() {
                let e = (-p[1] * t).exp();
                out[(i, 0)] = e;
                out[(i, 1)] = -p[0] * t * e;
            }
        };
        if let Ok(single) = fitting::levenberg_marquardt(
            res1,
            jac1,
            &[c0, g0],
            &[false, false],
            m,
            &LmOptions::default(),
        ) {
            let sum_sq: f64 = nbar.iter().map(|v| v * v).sum();
            let gain = single.residual_norm.powi(2) - outcome.residual_norm.powi(2);
            if single.converged && gain <= 1e-9 * sum_sq {
                values = vec![single.params[0], single.params[1], 0.0, single.params[1]];
                covariance = Array2::<f64>::zeros((4, 4));
                for i in 0..2 {
                    for j in 0..2 {
                        covariance[(i, j)] = single.covariance[(i, j)];
                    }
                }
                covariance_regularized = true;
                residual_norm = single.residual_norm;
            }
        }
    }

    if fixed_kappa1.is_none() && values[1] < values[3] {
        values.swap(0, 2);
        values.swap(1, 3);
        let perm = [2usize, 3, 0, 1];
        let mut c = Array2::<f64>::zeros((4, 4));
        for i in 0..4 {
            for j in 0..4 {
                c[(i, j)] = covariance[(perm[i], perm[j])];
            }
        }
        covariance = c;
    }
    let (k1, k2) = (values[1], values[3]);
    let degenerate = (k1 - k2).abs() < 0.1 * k1.abs().max(k2.abs());

    let names: Vec<String> = ["a1", "kappa1", "a2", "kappa2"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    let std_errors = (0..4).map(|i| covariance[(i, i)].max(0.0).sqrt()).collect();
    Ok(FitResult {
        names,
        values,
        std_errors,
        covariance,
        residual_norm,
        converged: outcome.converged,
        n_iterations: outcome.n_iterations,
        gradient_norm: outcome.gradient_norm,
        clamped: Vec::new(),
        degenerate,
        covariance_regularized,
    })
}

/// Fit n̄(φ) = C cos(φ + φ₀) + n̄_off with C ≥ 0. The model is linear in
/// (C cos φ₀, −C sin φ₀, n̄_off); the reported covariance is mapped to
/// (C, φ₀, n̄_off) by the delta method.
pub fn fit_interference(phis: &[f64], nbar: &[f64]) -> Result<FitResult> {
    let m = phis.len();
    if m < 5 || nbar.len() != m {
        return Err(Error::InvalidParameter(
            "need at least 5 matching (phi, nbar) points".into(),
        ));
    }
    let span = phis.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b))
        - phis.iter().fold(f64::INFINITY, |a, &b| a.min(b));
    if span < std::f64::consts::PI {
        return Err(Error::InvalidParameter(
            "phase points must span at least pi".into(),
        ));
    }

    let residuals = |p: &[f64], out: &mut [f64]| {
        for (i, (&phi, &y)) in phis.iter().zip(nbar.iter()).enumerate() {
            out[i] = p[0] * phi.cos() + p[1] * phi.sin() + p[2] - y;
        }
    };
    let jacobian = |_p: &[f64], out: &mut Array2<f64>| {
        for (i, &phi) in phis.iter().enumerate() {
            out[(i, 0)] = phi.cos();
            out[(i, 1)] = phi.sin();
            out[(i, 2)] = 1.0;
        }
    };
    let mean = nbar.iter().sum::<f64>() / m as f64;
    let outcome = fitting::levenberg_marquardt(
        residuals,
        jacobian,
        &[0.0, 0.0, mean],
        &[false, false, false],
        m,
        &LmOptions::default(),
    )?;
    require_convergence(&outcome)?;

    let (p, q, off) = (outcome.params[0], outcome.params[1], outcome.params[2]);
    let c = p.hypot(q);
    let phi0 = if c > 1e-15 { (-q).atan2(p) } else { 0.0 };
    // delta method: (p, q, off) -> (C, phi0, off)
    let mut t = Array2::<f64>::eye(3);
    if c > 1e-15 {
        t[(0, 0)] = p / c;
        t[(0, 1)] = q / c;
        t[(1, 0)] = q / (c * c);
        t[(1, 1)] = -p / (c * c);
    }
    let mut covariance = Array2::<f64>::zeros((3, 3));
    for i in 0..3 {
        for j in 0..3 {
            let mut s = 0.0;
            for a in 0..3 {
                for b in 0..3 {
                    s += t[(i, a)] * outcome.covariance[(a, b)] * t[(j, b)];
                }
            }
            covariance[(i, j)] = s;
        }
    }
    for i in 0..3 {
        for j in (i + 1)..3 {
            let s = 0.5 * (covariance[(i, j)] + covariance[(j, i)]);
            covariance[(i, j)] = s;
            covariance[(j, i)] = s;
        }
    }

    let names: Vec<String> = ["amplitude", "phi0", "nbar_off"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    let std_errors = (0..3).map(|i| covariance[(i, i)].max(0.0).sqrt()).collect();
    Ok(FitResult {
        names,
        values: vec![c, phi0, off],
        std_errors,
        covariance,
        residual_norm: outcome.residual_norm,
        converged: outcome.converged,
        n_iterations: outcome.n_iterations,
        gradient_norm: outcome.gradient_norm,
        clamped: Vec::new(),
        degenerate: false,
        covariance_regularized: outcome.covariance_regularized,
    })
}

/// Fit A(τ) = C0 e^{−γ_2m τ}; the decay is reported as the rate γ_2m
/// (= 1/T2m), which stays finite for non-decaying input.
pub fn fit_t2m(taus: &[f64], amplitudes: &[f64]) -> Result<FitResult> {
    let m = taus.len();
    if m < 4 || amplitudes.len() != m {
        return Err(Error::InvalidParameter(
            "need at least 4 matching (tau, amplitude) points".into(),
        ));
    }
    if amplitudes.iter().any(|&v| v <= 0.0) {
        return Err(Error::InvalidParameter("amplitudes must be positive".into()));
    }
    let span = taus[m - 1] - taus[0];
    if span <= 0.0 {
        return Err(Error::InvalidParameter("taus must increase".into()));
    }

    // log-linear regression seed
    let logs: Vec<f64> = amplitudes.iter().map(|&v| v.ln()).collect();
    let tbar = taus.iter().sum::<f64>() / m as f64;
    let lbar = logs.iter().sum::<f64>() / m as f64;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for (&t, &l) in taus.iter().zip(logs.iter()) {
        sxx += (t - tbar) * (t - tbar);
        sxy += (t - tbar) * (l - lbar);
    }
    let gamma0 = -sxy / sxx;
    let c0 = (lbar + gamma0 * tbar).exp();

    let residuals = |p: &[f64], out: &mut [f64]| {
        for (i, (&t, &y)) in taus.iter().zip(amplitudes.iter()).enumerate() {
            out[i] = p[0] * (-p[1] * t).exp() - y;
        }
    };
    let jacobian = |p: &[f64], out: &mut Array2<f64>| {
        for (i, &t) in taus.iter().enumerate() {
            let e = (-p[1] * t).exp();
            out[(i, 0)] = e;
            out[(i, 1)] = -p[0] * t * e;
        }
    };
    let outcome = fitting::levenberg_marquardt(
        residuals,
        jacobian,
        &[c0, gamma0],
        &[false, false],
        m,
        &LmOptions::default(),
    )?;
    require_convergence(&outcome)?;
    if outcome.params[1] < -0.01 / span {
        return Err(Error::Numerical(
            "amplitudes grow with delay; no decaying envelope".into(),
        ));
    }

    let names: Vec<String> = ["c0", "gamma_2m"].iter().map(|s| s.to_string()).collect();
    Ok(FitResult::from_outcome(names, &outcome))
}
