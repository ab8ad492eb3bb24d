//! C ABI surface for the phonon-tls toolkit.
//!
//! Conventions: every fallible function returns a `PtStatus` code and writes
//! results through out-pointers. On failure, a thread-local message is
//! retrievable with `pt_last_error_message`. Heap objects are exposed as
//! opaque handles with explicit `_free` destructors. All frequencies and
//! rates are angular (rad/s).

use std::cell::RefCell;
use std::os::raw::c_char;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::slice;

use phonon_tls::error::Error;
use phonon_tls::experiments::{run_ringdown, RingdownDataset};
use phonon_tls::lindblad::{EvolveOptions, SystemConfig};
use phonon_tls::readout::{dispersive_shift, fit_double_exp, fit_interference};
use phonon_tls::tlsparams::{bvd_admittance, BvdParams};
use phonon_tls::C64;

/// Status codes returned by every fallible entry point.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PtStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    NumericalFailure = 3,
    IoFailure = 4,
    Panic = 5,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: &str) {
    LAST_ERROR.with(|slot| slot.borrow_mut().replace_range(.., msg));
}

fn status_of(err: &Error) -> PtStatus {
    match err {
        Error::Io(_) | Error::Serialization(_) => PtStatus::IoFailure,
        Error::StepSizeUnderflow { .. }
        | Error::MaxStepsExceeded(_)
        | Error::FitNonConvergence(_)
        | Error::RankDeficientJacobian(_)
        | Error::Numerical(_) => PtStatus::NumericalFailure,
        _ => PtStatus::InvalidArgument,
    }
}

fn fail(err: &Error) -> PtStatus {
    set_error(&err.to_string());
    status_of(err)
}

/// Run `f` with panic isolation; a panic never crosses the FFI boundary.
fn guarded<F: FnOnce() -> PtStatus>(f: F) -> PtStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(status) => status,
        Err(_) => {
            set_error("internal panic");
            PtStatus::Panic
        }
    }
}

/// Copy the last error message for this thread into `buf` (NUL-terminated,
/// truncated to `len`). Returns the full message length in bytes, excluding
/// the terminator.
///
/// # Safety
/// `buf` must point to `len` writable bytes, or be null (query mode).
#[no_mangle]
pub unsafe extern "C" fn pt_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|slot| {
        let msg = slot.borrow();
        let bytes = msg.as_bytes();
        if !buf.is_null() && len > 0 {
            let n = bytes.len().min(len - 1);
            std::ptr::copy_nonoverlapping(bytes.as_ptr(), buf as *mut u8, n);
            *buf.add(n) = 0;
        }
        bytes.len()
    })
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn pt_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// System parameters for the mechanics-TLS model; all rates angular (rad/s).
#[repr(C)]
#[derive(Clone, Copy, Debug)]
pub struct PtSystemConfig {
    pub n_tls: u32,
    pub g_tls: f64,
    pub delta_tls: f64,
    pub gamma1: f64,
    pub gamma2: f64,
    pub n_th: f64,
    pub n_max: u32,
}

impl PtSystemConfig {
    fn to_internal(self) -> SystemConfig {
        SystemConfig {
            n_tls: self.n_tls as usize,
            g_tls: self.g_tls,
            delta_tls: self.delta_tls,
            gamma1: self.gamma1,
            gamma2: self.gamma2,
            n_th: self.n_th,
            n_max: self.n_max as usize,
        }
    }
}

/// Dispersive qubit shift per phonon: chi = -(g^2/delta) * alpha_q/(delta - alpha_q).
///
/// # Safety
/// `out_chi` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn pt_dispersive_shift(
    g: f64,
    delta: f64,
    alpha_q: f64,
    out_chi: *mut f64,
) -> PtStatus {
    guarded(|| {
        if out_chi.is_null() {
            set_error("out_chi is null");
            return PtStatus::NullPointer;
        }
        match dispersive_shift(g, delta, alpha_q) {
            Ok(chi) => {
                *out_chi = chi;
                PtStatus::Ok
            }
            Err(e) => fail(&e),
        }
    })
}

/// Butterworth-van Dyke admittance Y(omega) for a shunt capacitor c0 in
/// parallel with the series branch (rm, lm, cm). `out_at_pole` is set to 1
/// when a lossless branch sits exactly on its series resonance (the value
/// then carries only the shunt term).
///
/// # Safety
/// All out-pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn pt_bvd_admittance(
    omega: f64,
    c0: f64,
    cm: f64,
    lm: f64,
    rm: f64,
    out_re: *mut f64,
    out_im: *mut f64,
    out_at_pole: *mut i32,
) -> PtStatus {
    guarded(|| {
        if out_re.is_null() || out_im.is_null() || out_at_pole.is_null() {
            set_error("output pointer is null");
            return PtStatus::NullPointer;
        }
        let params = BvdParams { c0, cm, lm, rm };
        match bvd_admittance(omega, &params) {
            Ok(y) => {
                *out_re = y.value.re;
                *out_im = y.value.im;
                *out_at_pole = y.at_pole as i32;
                PtStatus::Ok
            }
            Err(e) => fail(&e),
        }
    })
}

/// Fit nbar(tau) = a1 e^{-kappa1 tau} + a2 e^{-kappa2 tau}. Pass NaN as
/// `fixed_kappa1` to fit all four parameters. `out_params` and
/// `out_std_errors` receive [a1, kappa1, a2, kappa2].
///
/// # Safety
/// `taus` and `nbar` must point to `len` readable doubles; the out arrays to
/// 4 writable doubles each.
#[no_mangle]
pub unsafe extern "C" fn pt_fit_double_exp(
    taus: *const f64,
    nbar: *const f64,
    len: usize,
    fixed_kappa1: f64,
    out_params: *mut f64,
    out_std_errors: *mut f64,
) -> PtStatus {
    guarded(|| {
        if taus.is_null() || nbar.is_null() || out_params.is_null() || out_std_errors.is_null() {
            set_error("pointer argument is null");
            return PtStatus::NullPointer;
        }
        let taus = slice::from_raw_parts(taus, len);
        let nbar = slice::from_raw_parts(nbar, len);
        let fixed = if fixed_kappa1.is_nan() {
            None
        } else {
            Some(fixed_kappa1)
        };
        match fit_double_exp(taus, nbar, fixed) {
            Ok(fit) => {
                let params = slice::from_raw_parts_mut(out_params, 4);
                let errs = slice::from_raw_parts_mut(out_std_errors, 4);
                params.copy_from_slice(&fit.values[..4]);
                errs.copy_from_slice(&fit.std_errors[..4]);
                PtStatus::Ok
            }
            Err(e) => fail(&e),
        }
    })
}

/// Fit nbar(phi) = C cos(phi + phi0) + nbar_off. Outputs are
/// [amplitude, phi0, nbar_off].
///
/// # Safety
/// `phis` and `nbar` must point to `len` readable doubles; the out arrays to
/// 3 writable doubles each.
#[no_mangle]
pub unsafe extern "C" fn pt_fit_interference(
    phis: *const f64,
    nbar: *const f64,
    len: usize,
    out_params: *mut f64,
    out_std_errors: *mut f64,
) -> PtStatus {
    guarded(|| {
        if phis.is_null() || nbar.is_null() || out_params.is_null() || out_std_errors.is_null() {
            set_error("pointer argument is null");
            return PtStatus::NullPointer;
        }
        let phis = slice::from_raw_parts(phis, len);
        let nbar = slice::from_raw_parts(nbar, len);
        match fit_interference(phis, nbar) {
            Ok(fit) => {
                let params = slice::from_raw_parts_mut(out_params, 3);
                let errs = slice::from_raw_parts_mut(out_std_errors, 3);
                params.copy_from_slice(&fit.values[..3]);
                errs.copy_from_slice(&fit.std_errors[..3]);
                PtStatus::Ok
            }
            Err(e) => fail(&e),
        }
    })
}

/// Opaque ringdown result handle.
pub struct PtRingdown {
    dataset: RingdownDataset,
}

/// Simulate a phonon ringdown: displace the thermal state by
/// alpha = alpha_re + i alpha_im, evolve, and sample at `taus` (strictly
/// increasing, seconds). On success `*out` owns a handle that must be
/// released with `pt_ringdown_free`.
///
/// # Safety
/// `cfg` must point to a valid config, `taus` to `n_taus` readable doubles,
/// and `out` to a writable pointer slot.
#[no_mangle]
pub unsafe extern "C" fn pt_run_ringdown(
    cfg: *const PtSystemConfig,
    alpha_re: f64,
    alpha_im: f64,
    taus: *const f64,
    n_taus: usize,
    rtol: f64,
    atol: f64,
    out: *mut *mut PtRingdown,
) -> PtStatus {
    guarded(|| {
        if cfg.is_null() || taus.is_null() || out.is_null() {
            set_error("pointer argument is null");
            return PtStatus::NullPointer;
        }
        let config = (*cfg).to_internal();
        let taus = slice::from_raw_parts(taus, n_taus);
        let mut opts = EvolveOptions::default();
        if rtol > 0.0 {
            opts.rtol = rtol;
        }
        if atol > 0.0 {
            opts.atol = atol;
        }
        match run_ringdown(&config, C64::new(alpha_re, alpha_im), taus, &opts) {
            Ok(dataset) => {
                *out = Box::into_raw(Box::new(PtRingdown { dataset }));
                PtStatus::Ok
            }
            Err(e) => fail(&e),
        }
    })
}

/// Number of sampled delays in a ringdown result; 0 for a null handle.
///
/// # Safety
/// `handle` must be null or a live handle from `pt_run_ringdown`.
#[no_mangle]
pub unsafe extern "C" fn pt_ringdown_len(handle: *const PtRingdown) -> usize {
    if handle.is_null() {
        return 0;
    }
    (*handle).dataset.taus.len()
}

/// Number of Fock levels (n_max + 1) in each sampled distribution.
///
/// # Safety
/// `handle` must be null or a live handle from `pt_run_ringdown`.
#[no_mangle]
pub unsafe extern "C" fn pt_ringdown_levels(handle: *const PtRingdown) -> usize {
    if handle.is_null() {
        return 0;
    }
    (*handle).dataset.config.n_max + 1
}

/// Copy the mean phonon trace into `out_nbar` (length from
/// `pt_ringdown_len`).
///
/// # Safety
/// `out_nbar` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn pt_ringdown_nbar(
    handle: *const PtRingdown,
    out_nbar: *mut f64,
    len: usize,
) -> PtStatus {
    guarded(|| {
        if handle.is_null() || out_nbar.is_null() {
            set_error("pointer argument is null");
            return PtStatus::NullPointer;
        }
        let nbar = &(*handle).dataset.nbar;
        if len != nbar.len() {
            set_error("length mismatch");
            return PtStatus::InvalidArgument;
        }
        slice::from_raw_parts_mut(out_nbar, len).copy_from_slice(nbar);
        PtStatus::Ok
    })
}

/// Copy P(n) at delay index `tau_index` into `out_pn` (length from
/// `pt_ringdown_levels`).
///
/// # Safety
/// `out_pn` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn pt_ringdown_pn(
    handle: *const PtRingdown,
    tau_index: usize,
    out_pn: *mut f64,
    len: usize,
) -> PtStatus {
    guarded(|| {
        if handle.is_null() || out_pn.is_null() {
            set_error("pointer argument is null");
            return PtStatus::NullPointer;
        }
        let ds = &(*handle).dataset;
        if tau_index >= ds.pn.len() {
            set_error("tau_index out of range");
            return PtStatus::InvalidArgument;
        }
        let probs = &ds.pn[tau_index].probs;
        if len != probs.len() {
            set_error("length mismatch");
            return PtStatus::InvalidArgument;
        }
        slice::from_raw_parts_mut(out_pn, len).copy_from_slice(probs);
        PtStatus::Ok
    })
}

/// Release a ringdown handle. Null is a no-op; a handle must not be used
/// after freeing.
///
/// # Safety
/// `handle` must be null or a live handle from `pt_run_ringdown`.
#[no_mangle]
pub unsafe extern "C" fn pt_ringdown_free(handle: *mut PtRingdown) {
    if !handle.is_null() {
        drop(Box::from_raw(handle));
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const TWO_PI: f64 = std::f64::consts::TAU;

    fn last_error() -> String {
        let mut buf = vec![0i8; 256];
        let n = unsafe { pt_last_error_message(buf.as_mut_ptr(), buf.len()) };
        let bytes: Vec<u8> = buf[..n.min(255)].iter().map(|&b| b as u8).collect();
        String::from_utf8_lossy(&bytes).to_string()
    }

    #[test]
    fn version_is_nul_terminated() {
        let p = pt_version();
        let s = unsafe { std::ffi::CStr::from_ptr(p) }.to_str().unwrap();
        assert_eq!(s, env!("CARGO_PKG_VERSION"));
    }

    #[test]
    fn dispersive_shift_roundtrip_and_errors() {
        let mut chi = 0.0;
        let g = TWO_PI * 1e6;
        let delta = TWO_PI * 50e6;
        let alpha_q = -TWO_PI * 200e6;
        let status = unsafe { pt_dispersive_shift(g, delta, alpha_q, &mut chi) };
        assert_eq!(status, PtStatus::Ok);
        let want = -(g * g / delta) * alpha_q / (delta - alpha_q);
        assert!((chi - want).abs() < 1e-9 * want.abs());

        let status = unsafe { pt_dispersive_shift(g, 0.0, alpha_q, &mut chi) };
        assert_eq!(status, PtStatus::InvalidArgument);
        assert!(last_error().contains("delta"));

        let status = unsafe { pt_dispersive_shift(g, delta, alpha_q, std::ptr::null_mut()) };
        assert_eq!(status, PtStatus::NullPointer);
    }

    #[test]
    fn bvd_admittance_resonance() {
        let (c0, cm, lm): (f64, f64, f64) = (213.5e-18, 51.4e-18, 90.9e-6);
        let ws = 1.0 / (lm * cm).sqrt();
        let (mut re, mut im, mut pole) = (0.0, 0.0, 0);
        let status =
            unsafe { pt_bvd_admittance(ws, c0, cm, lm, 0.0, &mut re, &mut im, &mut pole) };
        assert_eq!(status, PtStatus::Ok);
        assert_eq!(pole, 1);
        let status =
            unsafe { pt_bvd_admittance(ws, c0, cm, lm, 25.0, &mut re, &mut im, &mut pole) };
        assert_eq!(status, PtStatus::Ok);
        assert_eq!(pole, 0);
        assert!((re - 1.0 / 25.0).abs() < 1e-6);
    }

    #[test]
    fn double_exp_fit_via_ffi() {
        let taus: Vec<f64> = (0..40).map(|i| i as f64 * 1e-6).collect();
        let nbar: Vec<f64> = taus
            .iter()
            .map(|&t| 2.0 * (-3e5 * t).exp() + 1.0 * (-3e4 * t).exp())
            .collect();
        let mut params = [0.0; 4];
        let mut errs = [0.0; 4];
        let status = unsafe {
            pt_fit_double_exp(
                taus.as_ptr(),
                nbar.as_ptr(),
                taus.len(),
                f64::NAN,
                params.as_mut_ptr(),
                errs.as_mut_ptr(),
            )
        };
        assert_eq!(status, PtStatus::Ok);
        assert!((params[0] - 2.0).abs() < 1e-6);
        assert!((params[1] - 3e5).abs() < 1.0);
        assert!((params[2] - 1.0).abs() < 1e-6);
        assert!((params[3] - 3e4).abs() < 1.0);
    }

    #[test]
    fn interference_fit_via_ffi() {
        let phis: Vec<f64> = (0..24).map(|i| i as f64 * TWO_PI / 24.0).collect();
        let nbar: Vec<f64> = phis.iter().map(|&p| 3.0 * (p + 0.4).cos() + 4.0).collect();
        let mut params = [0.0; 3];
        let mut errs = [0.0; 3];
        let status = unsafe {
            pt_fit_interference(
                phis.as_ptr(),
                nbar.as_ptr(),
                phis.len(),
                params.as_mut_ptr(),
                errs.as_mut_ptr(),
            )
        };
        assert_eq!(status, PtStatus::Ok);
        assert!((params[0] - 3.0).abs() < 1e-9);
        assert!((params[1] - 0.4).abs() < 1e-9);
        assert!((params[2] - 4.0).abs() < 1e-9);
    }

    #[test]
    fn ringdown_handle_lifecycle() {
        let cfg = PtSystemConfig {
            n_tls: 1,
            g_tls: TWO_PI * 50e3,
            delta_tls: 0.0,
            gamma1: TWO_PI * 4e3,
            gamma2: TWO_PI * 2e6,
            n_th: 0.1,
            n_max: 10,
        };
        let taus = [0.5e-6, 1e-6, 2e-6];
        let mut handle: *mut PtRingdown = std::ptr::null_mut();
        let status = unsafe {
            pt_run_ringdown(
                &cfg,
                1.0,
                0.0,
                taus.as_ptr(),
                taus.len(),
                1e-7,
                1e-11,
                &mut handle,
            )
        };
        assert_eq!(status, PtStatus::Ok);
        assert!(!handle.is_null());
        assert_eq!(unsafe { pt_ringdown_len(handle) }, 3);
        assert_eq!(unsafe { pt_ringdown_levels(handle) }, 11);

        let mut nbar = [0.0; 3];
        let status = unsafe { pt_ringdown_nbar(handle, nbar.as_mut_ptr(), 3) };
        assert_eq!(status, PtStatus::Ok);
        assert!(nbar[0] > nbar[2], "decay expected: {nbar:?}");

        let mut pn = [0.0; 11];
        let status = unsafe { pt_ringdown_pn(handle, 0, pn.as_mut_ptr(), 11) };
        assert_eq!(status, PtStatus::Ok);
        let total: f64 = pn.iter().sum();
        assert!((total - 1.0).abs() < 1e-8);

        let status = unsafe { pt_ringdown_pn(handle, 9, pn.as_mut_ptr(), 11) };
        assert_eq!(status, PtStatus::InvalidArgument);

        unsafe { pt_ringdown_free(handle) };
        unsafe { pt_ringdown_free(std::ptr::null_mut()) };
    }

    #[test]
    fn truncation_violation_reports_invalid_argument() {
        let cfg = PtSystemConfig {
            n_tls: 1,
            g_tls: TWO_PI * 50e3,
            delta_tls: 0.0,
            gamma1: 0.0,
            gamma2: 0.0,
            n_th: 0.0,
            n_max: 6,
        };
        let taus = [1e-6];
        let mut handle: *mut PtRingdown = std::ptr::null_mut();
        let status = unsafe {
            pt_run_ringdown(&cfg, 2.0, 0.0, taus.as_ptr(), 1, 0.0, 0.0, &mut handle)
        };
        assert_eq!(status, PtStatus::InvalidArgument);
        assert!(handle.is_null());
        assert!(last_error().contains("n_max"));
    }
}
