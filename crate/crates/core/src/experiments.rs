//! Virtual experiments: phonon ringdown after a displacement pulse, and
//! two-pulse displacement interferometry.

use std::io::Write;

use ndarray::Array2;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::hilbert::{
    self, displacement_operator, mech_displacement_matrix, partial_trace_mechanics, thermal_state,
};
use crate::lindblad::{evolve, EvolveOptions, SystemConfig};
use crate::readout::PhononDistribution;
use crate::C64;

fn check_taus(taus: &[f64]) -> Result<()> {
    if taus.is_empty() {
        return Err(Error::InvalidParameter("empty delay list".into()));
    }
    if taus.iter().any(|t| !t.is_finite() || *t < 0.0) {
        return Err(Error::InvalidParameter(
            "delays must be finite and nonnegative".into(),
        ));
    }
    if taus.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidParameter(
            "delays must be strictly increasing".into(),
        ));
    }
    Ok(())
}

/// Phonon-number resolved ringdown: n̄ and P(n) versus delay after an
/// instantaneous displacement of the thermal state.
#[derive(Clone, Debug, Serialize)]
pub struct RingdownDataset {
    pub config: SystemConfig,
    pub alpha0: C64,
    pub taus: Vec<f64>,
    pub nbar: Vec<f64>,
    pub pn: Vec<PhononDistribution>,
}

impl RingdownDataset {
    /// Columns: `tau_s, nbar, p0..p{n_max}`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let n_max = self.config.n_max;
        let mut header = String::from("tau_s,nbar");
        for n in 0..=n_max {
            header.push_str(&format!(",p{n}"));
        }
        writeln!(w, "{header}")?;
        for (i, &tau) in self.taus.iter().enumerate() {
            let mut line = format!("{},{}", tau, self.nbar[i]);
            for p in &self.pn[i].probs {
                line.push_str(&format!(",{p}"));
            }
            writeln!(w, "{line}")?;
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Two-pulse interferometry: final n̄ for each (delay, second-pulse phase).
#[derive(Clone, Debug, Serialize)]
pub struct InterferometryDataset {
    pub config: SystemConfig,
    pub alpha: C64,
    pub taus: Vec<f64>,
    pub phis: Vec<f64>,
    /// Row i, column j: n̄ after the second pulse at delay taus[i], phase phis[j].
    pub nbar_grid: Array2<f64>,
}

impl InterferometryDataset {
    /// One fringe slice: n̄(φ) at delay index `i`.
    pub fn fringe(&self, i: usize) -> Vec<f64> {
        self.nbar_grid.row(i).to_vec()
    }

    /// Columns: `tau_s, phi_rad, nbar`, one row per grid point.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "tau_s,phi_rad,nbar")?;
        for (i, &tau) in self.taus.iter().enumerate() {
            for (j, &phi) in self.phis.iter().enumerate() {
                writeln!(w, "{},{},{}", tau, phi, self.nbar_grid[(i, j)])?;
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Default fringe phase grid: `n` evenly spaced values in [0, 2π).
pub fn phase_grid(n: usize) -> Vec<f64> {
    let step = std::f64::consts::TAU / n as f64;
    (0..n).map(|j| j as f64 * step).collect()
}

/// Displace the thermal state by `alpha0`, evolve once, and sample P(n) and
/// n̄ at each delay in `taus` (strictly increasing).
pub fn run_ringdown(
    cfg: &SystemConfig,
    alpha0: C64,
    taus: &[f64],
    opts: &EvolveOptions,
) -> Result<RingdownDataset> {
    cfg.validate()?;
    check_taus(taus)?;
    hilbert::check_truncation_safety(alpha0.norm(), cfg.n_max)?;
    let layout = cfg.layout()?;
    let rho0 = prepare_displaced_thermal(cfg, alpha0)?;
    let t_final = *taus.last().unwrap();
    let traj = evolve(&rho0, cfg, t_final, taus, opts)?;
    let pn = traj
        .pn
        .iter()
        .map(|p| PhononDistribution {
            probs: p.clone(),
            sigmas: vec![0.0; p.len()],
        })
        .collect();
    let _ = layout;
    Ok(RingdownDataset {
        config: *cfg,
        alpha0,
        taus: taus.to_vec(),
        nbar: traj.nbar,
        pn,
    })
}

/// Displace by `alpha`, evolve once storing reduced mechanics snapshots at
/// each delay, then apply the second displacement α·e^{iφ} to each snapshot
/// and record the resulting n̄ (no evolution after the second pulse).
pub fn run_interferometry(
    cfg: &SystemConfig,
    alpha: C64,
    taus: &[f64],
    phis: &[f64],
    opts: &EvolveOptions,
) -> Result<InterferometryDataset> {
    cfg.validate()?;
    check_taus(taus)?;
    if phis.is_empty() || phis.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidParameter(
            "phases must be nonempty and strictly increasing".into(),
        ));
    }
    // worst case the two pulses add constructively
    hilbert::check_truncation_safety(2.0 * alpha.norm(), cfg.n_max)?;
    let rho0 = prepare_displaced_thermal(cfg, alpha)?;
    let t_final = *taus.last().unwrap();
    let mut eo = opts.clone();
    eo.store_mech_states = true;
    let traj = evolve(&rho0, cfg, t_final, taus, &eo)?;
    let snapshots = traj.mech_states.expect("mechanics snapshots requested");

    // The second pulse acts on the mechanics factor only, so it commutes
    // with the TLS partial trace and can be applied to the reduced state.
    let pulses: Vec<Array2<C64>> = phis
        .iter()
        .map(|&phi| mech_displacement_matrix(cfg.n_max, alpha * C64::from_polar(1.0, phi)))
        .collect::<Result<_>>()?;

    let mut grid = Array2::<f64>::zeros((taus.len(), phis.len()));
    for (i, snap) in snapshots.iter().enumerate() {
        for (j, d) in pulses.iter().enumerate() {
            let displaced = snap.conjugate_by_mech_unitary(d)?;
            grid[(i, j)] = displaced.mean_phonon();
        }
    }
    Ok(InterferometryDataset {
        config: *cfg,
        alpha,
        taus: taus.to_vec(),
        phis: phis.to_vec(),
        nbar_grid: grid,
    })
}

fn prepare_displaced_thermal(
    cfg: &SystemConfig,
    alpha: C64,
) -> Result<crate::hilbert::DensityMatrix> {
    let layout = cfg.layout()?;
    let thermal = thermal_state(layout, cfg.n_th)?;
    if alpha == C64::new(0.0, 0.0) {
        return Ok(thermal);
    }
    let d = displacement_operator(layout, alpha)?;
    let dd = d.dagger();
    let rho = d.entries().dot(thermal.entries()).dot(dd.entries());
    crate::hilbert::DensityMatrix::new(layout, rho)
}

/// Reduced mechanics state right after the first pulse; used for the τ = 0
/// phonon statistics checks.
pub fn initial_mech_distribution(cfg: &SystemConfig, alpha: C64) -> Result<Vec<f64>> {
    let rho0 = prepare_displaced_thermal(cfg, alpha)?;
    Ok(partial_trace_mechanics(&rho0).phonon_populations())
}
