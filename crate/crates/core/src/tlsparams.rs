//! Microscopic TLS parameter estimates from material constants and
//! discretized mode fields, plus the equivalent-circuit admittance model.

use std::f64::consts::PI;
use std::io::{BufRead, BufReader, Read, Write};

use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::C64;

/// Reduced Planck constant (J·s).
pub const HBAR: f64 = 1.054_571_817e-34;

/// Bulk material constants entering the elastic-dipole and TLS-count
/// estimates.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct MaterialConstants {
    /// Mass density (kg/m³).
    pub rho: f64,
    /// Acoustic wave velocity (m/s).
    pub v: f64,
    /// TLS density of states (1/(J·m³)).
    pub p0: f64,
    /// Zero-temperature TLS loss tangent (dimensionless).
    pub delta0: f64,
    /// Reduced Planck constant (J·s).
    pub hbar: f64,
}

impl MaterialConstants {
    /// Lithium niobate platform values; p0 and delta0 sit at the geometric
    /// centers of their literature ranges (10^44.5..10^46 and 10^-4.5..10^-4).
    pub fn lithium_niobate() -> Self {
        Self {
            rho: 4700.0,
            v: 4000.0,
            p0: 10f64.powf(45.0),
            delta0: 10f64.powf(-4.25),
            hbar: HBAR,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("rho", self.rho),
            ("v", self.v),
            ("p0", self.p0),
            ("delta0", self.delta0),
            ("hbar", self.hbar),
        ];
        for (name, val) in fields {
            if !(val > 0.0 && val.is_finite()) {
                return Err(Error::InvalidParameter(format!(
                    "material constant {name} must be strictly positive, got {val}"
                )));
            }
        }
        Ok(())
    }
}

/// Discretized mechanical eigenmode: per-point quadrature volume, displacement
/// magnitude, and the six independent strain components.
#[derive(Clone, Debug)]
pub struct ModeField {
    pub volumes: Vec<f64>,
    pub u_abs: Vec<f64>,
    /// Per point: [ξ_xx, ξ_xy, ξ_xz, ξ_yy, ξ_yz, ξ_zz].
    pub strain: Vec<[f64; 6]>,
    /// Angular mode frequency (rad/s).
    pub omega_m: f64,
}

const MODE_FIELD_HEADER: &str = "dV_m3,u_abs_m,exx,exy,exz,eyy,eyz,ezz";

impl ModeField {
    pub fn new(
        volumes: Vec<f64>,
        u_abs: Vec<f64>,
        strain: Vec<[f64; 6]>,
        omega_m: f64,
    ) -> Result<Self> {
        if volumes.is_empty() {
            return Err(Error::InvalidParameter("empty mode-field grid".into()));
        }
        if u_abs.len() != volumes.len() || strain.len() != volumes.len() {
            return Err(Error::ShapeMismatch(
                "mode-field column lengths differ".into(),
            ));
        }
        if volumes.iter().any(|&dv| !(dv > 0.0) || !dv.is_finite()) {
            return Err(Error::InvalidParameter(
                "grid volumes must be strictly positive".into(),
            ));
        }
        if !(omega_m > 0.0) || !omega_m.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "omega_m must be > 0, got {omega_m}"
            )));
        }
        Ok(Self {
            volumes,
            u_abs,
            strain,
            omega_m,
        })
    }

    /// Parse the columnar interchange format: a header line
    /// `dV_m3,u_abs_m,exx,exy,exz,eyy,eyz,ezz` followed by one row per point.
    pub fn from_csv<R: Read>(reader: R, omega_m: f64) -> Result<Self> {
        let mut lines = BufReader::new(reader).lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::InvalidParameter("empty mode-field file".into()))??;
        if header.trim().replace(' ', "") != MODE_FIELD_HEADER {
            return Err(Error::InvalidParameter(format!(
                "mode-field header must be `{MODE_FIELD_HEADER}`, got `{header}`"
            )));
        }
        let mut volumes = Vec::new();
        let mut u_abs = Vec::new();
        let mut strain = Vec::new();
        for (row, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let cols: Vec<f64> = line
                .split(',')
                .map(|c| {
                    c.trim().parse::<f64>().map_err(|_| {
                        Error::InvalidParameter(format!(
                            "mode-field row {}: bad number `{}`",
                            row + 2,
                            c.trim()
                        ))
                    })
                })
                .collect::<Result<_>>()?;
            if cols.len() != 8 {
                return Err(Error::ShapeMismatch(format!(
                    "mode-field row {}: expected 8 columns, got {}",
                    row + 2,
                    cols.len()
                )));
            }
            volumes.push(cols[0]);
            u_abs.push(cols[1]);
            strain.push([cols[2], cols[3], cols[4], cols[5], cols[6], cols[7]]);
        }
        Self::new(volumes, u_abs, strain, omega_m)
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{MODE_FIELD_HEADER}")?;
        for i in 0..self.volumes.len() {
            let s = self.strain[i];
            writeln!(
                w,
                "{},{},{},{},{},{},{},{}",
                self.volumes[i], self.u_abs[i], s[0], s[1], s[2], s[3], s[4], s[5]
            )?;
        }
        Ok(())
    }

    pub fn total_volume(&self) -> f64 {
        self.volumes.iter().sum()
    }

    pub fn max_u(&self) -> f64 {
        self.u_abs.iter().cloned().fold(0.0, f64::max)
    }
}

/// m_eff = ∫dV ρ|u|² / max|u|², discretized over the grid.
pub fn effective_mass(field: &ModeField, rho: f64) -> Result<f64> {
    if !(rho > 0.0) {
        return Err(Error::InvalidParameter("rho must be > 0".into()));
    }
    let umax = field.max_u();
    if !(umax > 0.0) {
        return Err(Error::InvalidParameter(
            "mode field has zero displacement everywhere".into(),
        ));
    }
    let integral: f64 = field
        .volumes
        .iter()
        .zip(&field.u_abs)
        .map(|(&dv, &u)| dv * u * u)
        .sum();
    Ok(rho * integral / (umax * umax))
}

/// x_zpf = √(ħ / 2 m_eff ω_m).
pub fn zero_point_displacement(m_eff: f64, omega_m: f64) -> Result<f64> {
    if !(m_eff > 0.0) || !(omega_m > 0.0) {
        return Err(Error::InvalidParameter(
            "m_eff and omega_m must be > 0".into(),
        ));
    }
    Ok((HBAR / (2.0 * m_eff * omega_m)).sqrt())
}

/// Volume-averaged RMS of the six strain components, scaled from the
/// simulated mode amplitude to the zero-point amplitude:
/// ξ̄_zpf = (x_zpf / max|u|) · √((1/6V) ∫dV Σ ξ_ij²).
pub fn zero_point_strain(field: &ModeField, x_zpf: f64) -> Result<f64> {
    if !(x_zpf > 0.0) {
        return Err(Error::InvalidParameter("x_zpf must be > 0".into()));
    }
    let umax = field.max_u();
    if !(umax > 0.0) {
        return Err(Error::InvalidParameter(
            "mode field has zero displacement everywhere".into(),
        ));
    }
    let vtot = field.total_volume();
    let integral: f64 = field
        .volumes
        .iter()
        .zip(&field.strain)
        .map(|(&dv, s)| dv * s.iter().map(|x| x * x).sum::<f64>())
        .sum();
    Ok(x_zpf / umax * (integral / (6.0 * vtot)).sqrt())
}

/// Elastic dipole moment γ = √(δ⁰ · ρv² / (π P₀)), in joules.
pub fn elastic_dipole(mat: &MaterialConstants) -> Result<f64> {
    if mat.delta0 < 0.0 {
        return Err(Error::InvalidParameter("delta0 must be >= 0".into()));
    }
    if !(mat.rho > 0.0 && mat.v > 0.0 && mat.p0 > 0.0) {
        return Err(Error::InvalidParameter(
            "rho, v, p0 must be strictly positive".into(),
        ));
    }
    Ok((mat.delta0 * mat.rho * mat.v * mat.v / (PI * mat.p0)).sqrt())
}

/// TLS-strain coupling rate g_TLS = γ ξ̄_zpf / ħ (angular rad/s).
pub fn tls_coupling_rate(gamma_dipole: f64, xi_zpf: f64, hbar: f64) -> Result<f64> {
    if gamma_dipole < 0.0 || xi_zpf < 0.0 || !(hbar > 0.0) {
        return Err(Error::InvalidParameter(
            "gamma and xi must be >= 0, hbar > 0".into(),
        ));
    }
    Ok(gamma_dipole * xi_zpf / hbar)
}

/// Expected number of TLS within bandwidth δω of the mode, at the 10 mK
/// operating point where the effective density is 10 P₀:
/// N = 10 P₀ V ħ δω. Caller supplies δω = max(g_TLS, γ₂).
pub fn estimate_tls_count(p0: f64, volume: f64, delta_omega: f64, hbar: f64) -> Result<f64> {
    if !(p0 > 0.0 && volume > 0.0 && hbar > 0.0) || delta_omega < 0.0 {
        return Err(Error::InvalidParameter(
            "p0, volume, hbar must be > 0 and delta_omega >= 0".into(),
        ));
    }
    Ok(10.0 * p0 * volume * hbar * delta_omega)
}

/// Sampler configuration for the γ and g_TLS distributions. P₀ = 10^λ₁ and
/// δ⁰ = 10^λ₂ with λ uniform over the stated ranges.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TlsSampleConfig {
    pub n_samples: usize,
    pub lambda1_range: (f64, f64),
    pub lambda2_range: (f64, f64),
    pub rho: f64,
    pub v: f64,
    /// Zero-point strain used to map each sampled γ to g_TLS.
    pub xi_zpf: f64,
}

impl Default for TlsSampleConfig {
    fn default() -> Self {
        Self {
            n_samples: 10_000,
            lambda1_range: (44.0, 46.0),
            lambda2_range: (-4.5, -4.0),
            rho: 4700.0,
            v: 4000.0,
            xi_zpf: 1.6e-9,
        }
    }
}

/// Sampled elastic dipoles (J) and coupling rates (rad/s).
#[derive(Clone, Debug, Serialize)]
pub struct TlsSamples {
    pub gamma: Vec<f64>,
    pub g_tls: Vec<f64>,
}

impl TlsSamples {
    pub fn median_g_tls(&self) -> f64 {
        let mut g = self.g_tls.clone();
        g.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let n = g.len();
        if n % 2 == 1 {
            g[n / 2]
        } else {
            0.5 * (g[n / 2 - 1] + g[n / 2])
        }
    }
}

/// Monte Carlo sampling of γ and g_TLS over the literature ranges of P₀ and
/// δ⁰. Deterministic for a given seed.
pub fn sample_tls_distributions(cfg: &TlsSampleConfig, seed: u64) -> Result<TlsSamples> {
    if cfg.n_samples == 0 {
        return Err(Error::InvalidParameter("n_samples must be >= 1".into()));
    }
    for (name, (lo, hi)) in [
        ("lambda1", cfg.lambda1_range),
        ("lambda2", cfg.lambda2_range),
    ] {
        if !(lo <= hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::InvalidParameter(format!("bad {name} range")));
        }
    }
    if !(cfg.rho > 0.0 && cfg.v > 0.0 && cfg.xi_zpf >= 0.0) {
        return Err(Error::InvalidParameter(
            "rho, v must be > 0 and xi_zpf >= 0".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // Uniform panics on a == b; degenerate ranges pin the value instead.
    let draw = |rng: &mut ChaCha8Rng, lo: f64, hi: f64| {
        if lo == hi {
            lo
        } else {
            Uniform::new(lo, hi).sample(rng)
        }
    };
    let mut gamma = Vec::with_capacity(cfg.n_samples);
    let mut g_tls = Vec::with_capacity(cfg.n_samples);
    for _ in 0..cfg.n_samples {
        let l1 = draw(&mut rng, cfg.lambda1_range.0, cfg.lambda1_range.1);
        let l2 = draw(&mut rng, cfg.lambda2_range.0, cfg.lambda2_range.1);
        let mat = MaterialConstants {
            rho: cfg.rho,
            v: cfg.v,
            p0: 10f64.powf(l1),
            delta0: 10f64.powf(l2),
            hbar: HBAR,
        };
        let g = elastic_dipole(&mat)?;
        gamma.push(g);
        g_tls.push(tls_coupling_rate(g, cfg.xi_zpf, HBAR)?);
    }
    Ok(TlsSamples { gamma, g_tls })
}

/// Butterworth-van Dyke equivalent circuit: shunt capacitor C₀ in parallel
/// with a series motional branch R_m, L_m, C_m.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct BvdParams {
    pub c0: f64,
    pub cm: f64,
    pub lm: f64,
    /// Motional resistance; 0 gives the lossless fit.
    pub rm: f64,
}

impl Default for BvdParams {
    fn default() -> Self {
        Self {
            c0: 213.5e-18,
            cm: 51.4e-18,
            lm: 90.9e-6,
            rm: 0.0,
        }
    }
}

impl BvdParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.c0 > 0.0 && self.cm > 0.0 && self.lm > 0.0) || self.rm < 0.0 {
            return Err(Error::InvalidParameter(
                "c0, cm, lm must be > 0 and rm >= 0".into(),
            ));
        }
        Ok(())
    }

    /// Series resonance of the motional branch, f_s = 1/(2π√(L_m C_m)).
    pub fn series_resonance_hz(&self) -> f64 {
        1.0 / (2.0 * PI * (self.lm * self.cm).sqrt())
    }
}

/// Admittance sample; `at_pole` marks the exact series resonance of a
/// lossless branch, where the motional admittance diverges and `value`
/// carries only the shunt-capacitor term iωC₀.
#[derive(Clone, Copy, Debug)]
pub struct Admittance {
    pub value: C64,
    pub at_pole: bool,
}

/// Y(ω) = iωC₀ + (R_m + iωL_m + 1/(iωC_m))⁻¹.
pub fn bvd_admittance(omega: f64, p: &BvdParams) -> Result<Admittance> {
    p.validate()?;
    if !(omega > 0.0) || !omega.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "omega must be > 0, got {omega}"
        )));
    }
    let shunt = C64::new(0.0, omega * p.c0);
    let reactance = omega * p.lm - 1.0 / (omega * p.cm);
    let branch_z = C64::new(p.rm, reactance);
    // lossless branch exactly on resonance up to rounding of omega itself
    if p.rm == 0.0 && reactance.abs() <= 1e-12 * omega * p.lm {
        return Ok(Admittance {
            value: shunt,
            at_pole: true,
        });
    }
    Ok(Admittance {
        value: shunt + branch_z.inv(),
        at_pole: false,
    })
}

/// Admittance sweep export: `freq_hz,re_Y,im_Y`, one row per frequency.
pub fn write_admittance_sweep<W: Write>(freqs_hz: &[f64], p: &BvdParams, mut w: W) -> Result<()> {
    writeln!(w, "freq_hz,re_Y,im_Y")?;
    for &f in freqs_hz {
        let y = bvd_admittance(2.0 * PI * f, p)?;
        writeln!(w, "{},{},{}", f, y.value.re, y.value.im)?;
    }
    Ok(())
}
