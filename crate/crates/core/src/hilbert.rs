//! Operators and states on the truncated composite Hilbert space of one
//! bosonic (mechanical) mode and N two-level systems.
//!
//! Subsystem ordering is fixed: mechanics first, then TLS 1..N. A composite
//! basis index decomposes as `i = n * 2^N + t`, where `n` is the Fock index
//! and bit `N - k` of `t` is the state of TLS `k` (0 = ground, 1 = excited).

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::C64;

/// Dense-storage guard on the composite dimension.
pub const DIM_GUARD: usize = 2048;

/// Hermiticity tolerance used when an operator is flagged Hermitian.
pub const HERMITICITY_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HilbertLayout {
    n_max: usize,
    n_tls: usize,
}

impl HilbertLayout {
    pub fn new(n_max: usize, n_tls: usize) -> Result<Self> {
        if n_max < 1 {
            return Err(Error::InvalidLayout(format!(
                "n_max must be >= 1, got {n_max}"
            )));
        }
        if n_tls >= usize::BITS as usize {
            return Err(Error::InvalidLayout(format!("n_tls = {n_tls} is absurd")));
        }
        let dim = (n_max + 1)
            .checked_mul(1usize << n_tls)
            .ok_or_else(|| Error::InvalidLayout("dimension overflow".into()))?;
        if dim > DIM_GUARD {
            return Err(Error::DimensionGuard {
                dim,
                max: DIM_GUARD,
            });
        }
        Ok(Self { n_max, n_tls })
    }

    pub fn n_max(&self) -> usize {
        self.n_max
    }

    pub fn n_tls(&self) -> usize {
        self.n_tls
    }

    pub fn mech_dim(&self) -> usize {
        self.n_max + 1
    }

    pub fn tls_dim(&self) -> usize {
        1usize << self.n_tls
    }

    pub fn total_dim(&self) -> usize {
        self.mech_dim() * self.tls_dim()
    }

    /// Fock index of composite basis state `i`.
    pub fn mech_index(&self, i: usize) -> usize {
        i / self.tls_dim()
    }

    /// State (0 = ground, 1 = excited) of TLS `k` (1-based) in basis state `i`.
    pub fn tls_state(&self, i: usize, k: usize) -> usize {
        debug_assert!(k >= 1 && k <= self.n_tls);
        (i >> (self.n_tls - k)) & 1
    }

    /// Layout of the mechanics factor alone.
    pub fn mech_only(&self) -> HilbertLayout {
        HilbertLayout {
            n_max: self.n_max,
            n_tls: 0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Operator {
    layout: HilbertLayout,
    entries: Array2<C64>,
}

impl Operator {
    pub fn new(layout: HilbertLayout, entries: Array2<C64>) -> Result<Self> {
        let d = layout.total_dim();
        if entries.dim() != (d, d) {
            return Err(Error::ShapeMismatch(format!(
                "operator shape {:?} does not match layout dimension {d}",
                entries.dim()
            )));
        }
        Ok(Self { layout, entries })
    }

    pub fn identity(layout: HilbertLayout) -> Self {
        Self {
            layout,
            entries: linalg::eye(layout.total_dim()),
        }
    }

    pub fn layout(&self) -> HilbertLayout {
        self.layout
    }

    pub fn entries(&self) -> &Array2<C64> {
        &self.entries
    }

    pub fn into_entries(self) -> Array2<C64> {
        self.entries
    }

    pub fn dagger(&self) -> Self {
        Self {
            layout: self.layout,
            entries: linalg::dagger(&self.entries),
        }
    }

    pub fn dot(&self, other: &Operator) -> Result<Self> {
        if self.layout != other.layout {
            return Err(Error::ShapeMismatch("operator layouts differ".into()));
        }
        Ok(Self {
            layout: self.layout,
            entries: self.entries.dot(&other.entries),
        })
    }

    pub fn scaled(&self, s: C64) -> Self {
        Self {
            layout: self.layout,
            entries: self.entries.mapv(|z| z * s),
        }
    }

    pub fn hermiticity_defect(&self) -> f64 {
        linalg::hermiticity_defect(&self.entries)
    }

    /// Verify Hermiticity to the crate-wide tolerance.
    pub fn assert_hermitian(&self) -> Result<()> {
        let defect = self.hermiticity_defect();
        if defect > HERMITICITY_TOL {
            return Err(Error::InvalidState(format!(
                "operator flagged Hermitian has defect {defect:.3e}"
            )));
        }
        Ok(())
    }
}

/// Convention for the TLS excited-state population in a thermal state at a
/// given bosonic occupation `n_th`. The simulated dynamics are insensitive to
/// this choice at the populations of interest (n_th ~ 0.05); see
/// [`thermal_state_with`].
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TlsThermalConvention {
    /// p_e = n_th / (1 + n_th). Default.
    #[default]
    OccupationRatio,
    /// p_e = n_th / (1 + 2 n_th), the steady state of the thermal collapse
    /// operators (two-level detailed balance).
    DetailedBalance,
}

impl TlsThermalConvention {
    pub fn excited_population(&self, n_th: f64) -> f64 {
        match self {
            TlsThermalConvention::OccupationRatio => n_th / (1.0 + n_th),
            TlsThermalConvention::DetailedBalance => n_th / (1.0 + 2.0 * n_th),
        }
    }
}

#[derive(Clone, Debug)]
pub struct DensityMatrix {
    layout: HilbertLayout,
    entries: Array2<C64>,
}

impl DensityMatrix {
    pub const TRACE_TOL: f64 = 1e-9;
    pub const HERMITICITY_TOL: f64 = 1e-10;
    pub const POSITIVITY_TOL: f64 = 1e-8;

    pub fn new(layout: HilbertLayout, entries: Array2<C64>) -> Result<Self> {
        let d = layout.total_dim();
        if entries.dim() != (d, d) {
            return Err(Error::ShapeMismatch(format!(
                "density matrix shape {:?} does not match layout dimension {d}",
                entries.dim()
            )));
        }
        Ok(Self { layout, entries })
    }

    pub fn layout(&self) -> HilbertLayout {
        self.layout
    }

    pub fn entries(&self) -> &Array2<C64> {
        &self.entries
    }

    pub fn entries_mut(&mut self) -> &mut Array2<C64> {
        &mut self.entries
    }

    pub fn trace(&self) -> C64 {
        self.entries.diag().sum()
    }

    pub fn hermiticity_defect(&self) -> f64 {
        linalg::hermiticity_defect(&self.entries)
    }

    /// Smallest eigenvalue. O(d^3); intended for validation paths only.
    pub fn min_eigenvalue(&self) -> f64 {
        linalg::hermitian_eigenvalues(&self.entries)[0]
    }

    /// Full validation: unit trace, Hermiticity, positivity.
    pub fn validate(&self) -> Result<()> {
        let tr = self.trace();
        if (tr.re - 1.0).abs() > Self::TRACE_TOL || tr.im.abs() > Self::TRACE_TOL {
            return Err(Error::InvalidState(format!(
                "trace = {tr} deviates from 1 beyond {:.0e}",
                Self::TRACE_TOL
            )));
        }
        let defect = self.hermiticity_defect();
        if defect > Self::HERMITICITY_TOL {
            return Err(Error::InvalidState(format!(
                "Hermiticity defect {defect:.3e} beyond {:.0e}",
                Self::HERMITICITY_TOL
            )));
        }
        let ev = self.min_eigenvalue();
        if ev < -Self::POSITIVITY_TOL {
            return Err(Error::InvalidState(format!(
                "minimum eigenvalue {ev:.3e} below -{:.0e}",
                Self::POSITIVITY_TOL
            )));
        }
        Ok(())
    }

    /// Diagonal phonon number distribution P(n) = Σ_t ρ[(n,t),(n,t)].
    pub fn phonon_populations(&self) -> Vec<f64> {
        let t_dim = self.layout.tls_dim();
        let mut pn = vec![0.0; self.layout.mech_dim()];
        for (i, p) in self.entries.diag().iter().enumerate() {
            pn[i / t_dim] += p.re;
        }
        pn
    }

    /// Mean phonon number Σ n P(n).
    pub fn mean_phonon(&self) -> f64 {
        self.phonon_populations()
            .iter()
            .enumerate()
            .map(|(n, p)| n as f64 * p)
            .sum()
    }

    /// Conjugate by a unitary acting on the mechanics factor only:
    /// ρ → (U ⊗ I) ρ (U ⊗ I)†. `u` is (n_max+1) × (n_max+1).
    pub fn conjugate_by_mech_unitary(&self, u: &Array2<C64>) -> Result<Self> {
        let md = self.layout.mech_dim();
        let td = self.layout.tls_dim();
        let d = self.layout.total_dim();
        if u.dim() != (md, md) {
            return Err(Error::ShapeMismatch(format!(
                "mechanics unitary shape {:?}, expected ({md}, {md})",
                u.dim()
            )));
        }
        // left multiply by U ⊗ I
        let mut tmp = Array2::<C64>::zeros((d, d));
        for n in 0..md {
            for np in 0..md {
                let coef = u[(n, np)];
                if coef == C64::new(0.0, 0.0) {
                    continue;
                }
                for t in 0..td {
                    let dst = n * td + t;
                    let src = np * td + t;
                    for j in 0..d {
                        tmp[(dst, j)] += coef * self.entries[(src, j)];
                    }
                }
            }
        }
        // right multiply by (U ⊗ I)†
        let mut out = Array2::<C64>::zeros((d, d));
        for m in 0..md {
            for mp in 0..md {
                let coef = u[(m, mp)].conj();
                if coef == C64::new(0.0, 0.0) {
                    continue;
                }
                for s in 0..td {
                    let dst = m * td + s;
                    let src = mp * td + s;
                    for i in 0..d {
                        out[(i, dst)] += tmp[(i, src)] * coef;
                    }
                }
            }
        }
        Ok(Self {
            layout: self.layout,
            entries: out,
        })
    }
}

/// Annihilation operator on the mechanics factor alone: ⟨n-1|b|n⟩ = √n.
pub fn mech_annihilation_matrix(n_max: usize) -> Array2<C64> {
    let d = n_max + 1;
    let mut b = Array2::<C64>::zeros((d, d));
    for n in 1..d {
        b[(n - 1, n)] = C64::new((n as f64).sqrt(), 0.0);
    }
    b
}

/// Embed a mechanics-factor operator into the composite space: `a ⊗ I_TLS`.
pub fn embed_mech(layout: HilbertLayout, a: &Array2<C64>) -> Result<Operator> {
    if a.dim() != (layout.mech_dim(), layout.mech_dim()) {
        return Err(Error::ShapeMismatch(
            "mechanics operator dimension mismatch".into(),
        ));
    }
    Operator::new(layout, linalg::kron(a, &linalg::eye(layout.tls_dim())))
}

/// Embed a single-TLS operator on TLS `k` (1-based) into the composite space.
pub fn embed_tls(layout: HilbertLayout, k: usize, a: &Array2<C64>) -> Result<Operator> {
    if k < 1 || k > layout.n_tls() {
        return Err(Error::TlsIndexOutOfRange {
            index: k,
            n_tls: layout.n_tls(),
        });
    }
    if a.dim() != (2, 2) {
        return Err(Error::ShapeMismatch("TLS operator must be 2x2".into()));
    }
    let left = linalg::eye(layout.mech_dim() * (1usize << (k - 1)));
    let right = linalg::eye(1usize << (layout.n_tls() - k));
    Operator::new(layout, linalg::kron(&linalg::kron(&left, a), &right))
}

/// Composite-space annihilation operator b̂ ⊗ I.
pub fn annihilation_op(layout: HilbertLayout) -> Operator {
    embed_mech(layout, &mech_annihilation_matrix(layout.n_max())).expect("shape by construction")
}

/// Composite-space creation operator b̂† ⊗ I.
pub fn creation_op(layout: HilbertLayout) -> Operator {
    annihilation_op(layout).dagger()
}

/// Composite-space phonon number operator b̂†b̂ ⊗ I.
pub fn number_op(layout: HilbertLayout) -> Operator {
    let d = layout.mech_dim();
    let mut n = Array2::<C64>::zeros((d, d));
    for i in 0..d {
        n[(i, i)] = C64::new(i as f64, 0.0);
    }
    embed_mech(layout, &n).expect("shape by construction")
}

fn sigma_minus() -> Array2<C64> {
    let mut s = Array2::<C64>::zeros((2, 2));
    s[(0, 1)] = C64::new(1.0, 0.0);
    s
}

/// Lowering operator σ̂⁻ of TLS `k` (1-based), embedded in the composite space.
pub fn tls_lowering_op(layout: HilbertLayout, k: usize) -> Result<Operator> {
    embed_tls(layout, k, &sigma_minus())
}

/// Raising operator σ̂⁺ of TLS `k`.
pub fn tls_raising_op(layout: HilbertLayout, k: usize) -> Result<Operator> {
    Ok(tls_lowering_op(layout, k)?.dagger())
}

/// Minimum Fock truncation for a displacement of magnitude `alpha_abs` under
/// the truncation-safety rule n_max >= |α|² + 5|α| + 4 (mean + 5σ of the
/// Poisson number distribution, keeping the clipped tail below ~1e-6).
pub fn displacement_min_nmax(alpha_abs: f64) -> usize {
    (alpha_abs * alpha_abs + 5.0 * alpha_abs + 4.0).ceil() as usize
}

/// Check the truncation-safety rule for amplitude `alpha_abs` against `n_max`.
pub fn check_truncation_safety(alpha_abs: f64, n_max: usize) -> Result<()> {
    let required = displacement_min_nmax(alpha_abs);
    if required > n_max {
        return Err(Error::TruncationUnsafe {
            alpha_abs,
            required,
            n_max,
        });
    }
    Ok(())
}

/// Displacement operator on the mechanics factor alone, D(α) = exp(αb̂† − α*b̂).
pub fn mech_displacement_matrix(n_max: usize, alpha: C64) -> Result<Array2<C64>> {
    check_truncation_safety(alpha.norm(), n_max)?;
    let b = mech_annihilation_matrix(n_max);
    let bdag = linalg::dagger(&b);
    let gen = bdag.mapv(|z| z * alpha) - b.mapv(|z| z * alpha.conj());
    Ok(linalg::expm(&gen))
}

/// Displacement operator D̂(α) ⊗ I_TLS on the composite space.
pub fn displacement_operator(layout: HilbertLayout, alpha: C64) -> Result<Operator> {
    let d = mech_displacement_matrix(layout.n_max(), alpha)?;
    embed_mech(layout, &d)
}

/// Thermal product state with the default TLS population convention.
pub fn thermal_state(layout: HilbertLayout, n_th: f64) -> Result<DensityMatrix> {
    thermal_state_with(layout, n_th, TlsThermalConvention::default())
}

/// Thermal product state: truncated, renormalized geometric distribution
/// P(n) = n_th^n / (1+n_th)^(n+1) on the mechanics factor and excited-state
/// population per `convention` on each TLS factor.
pub fn thermal_state_with(
    layout: HilbertLayout,
    n_th: f64,
    convention: TlsThermalConvention,
) -> Result<DensityMatrix> {
    if n_th < 0.0 || !n_th.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "thermal occupation n_th must be >= 0, got {n_th}"
        )));
    }
    let md = layout.mech_dim();
    let mut mech_p = vec![0.0f64; md];
    if n_th == 0.0 {
        mech_p[0] = 1.0;
    } else {
        let ratio = n_th / (1.0 + n_th);
        let mut p = 1.0 / (1.0 + n_th);
        for slot in mech_p.iter_mut() {
            *slot = p;
            p *= ratio;
        }
        let norm: f64 = mech_p.iter().sum();
        for slot in mech_p.iter_mut() {
            *slot /= norm;
        }
    }
    let p_e = convention.excited_population(n_th).clamp(0.0, 1.0);
    let d = layout.total_dim();
    let td = layout.tls_dim();
    let mut rho = Array2::<C64>::zeros((d, d));
    for i in 0..d {
        let n = i / td;
        let mut p = mech_p[n];
        for k in 1..=layout.n_tls() {
            p *= if layout.tls_state(i, k) == 1 {
                p_e
            } else {
                1.0 - p_e
            };
        }
        rho[(i, i)] = C64::new(p, 0.0);
    }
    DensityMatrix::new(layout, rho)
}

/// Partial trace over all TLS factors, returning the reduced mechanics state.
pub fn partial_trace_mechanics(rho: &DensityMatrix) -> DensityMatrix {
    let layout = rho.layout();
    let md = layout.mech_dim();
    let td = layout.tls_dim();
    let mut out = Array2::<C64>::zeros((md, md));
    let entries = rho.entries();
    for n in 0..md {
        for m in 0..md {
            let mut s = C64::new(0.0, 0.0);
            for t in 0..td {
                s += entries[(n * td + t, m * td + t)];
            }
            out[(n, m)] = s;
        }
    }
    DensityMatrix::new(layout.mech_only(), out).expect("shape by construction")
}
