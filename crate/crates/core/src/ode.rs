//! Adaptive Dormand–Prince 5(4) integrator over complex matrix states.
//!
//! The state is a square `Array2<C64>`; the right-hand side writes its result
//! into a caller-provided output matrix. Step sizes are clamped so each
//! requested sample time is hit exactly; the sample callback may modify the
//! state (e.g. trace renormalization), in which case the FSAL stage is
//! recomputed.

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::C64;

pub struct OdeOptions {
    pub rtol: f64,
    pub atol: f64,
    pub max_steps: usize,
}

impl Default for OdeOptions {
    fn default() -> Self {
        Self {
            rtol: 1e-8,
            atol: 1e-12,
            max_steps: 10_000_000,
        }
    }
}

#[derive(Clone, Copy, Debug, Default)]
pub struct OdeStats {
    pub steps_accepted: usize,
    pub steps_rejected: usize,
    pub rhs_evaluations: usize,
}

// Dormand-Prince 5(4) tableau
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

fn lincomb(y: &Array2<C64>, terms: &[(f64, &Array2<C64>)], h: f64, out: &mut Array2<C64>) {
    let ys = y.as_slice().expect("standard layout");
    let os = out.as_slice_mut().expect("standard layout");
    os.copy_from_slice(ys);
    for &(coef, k) in terms {
        let c = coef * h;
        let ks = k.as_slice().expect("standard layout");
        for (o, kv) in os.iter_mut().zip(ks.iter()) {
            *o += *kv * c;
        }
    }
}

/// Integrate from `t0`, invoking `on_sample(t, &mut y) -> bool` at every
/// requested sample time (return `true` if the state was modified).
/// `sample_times` must be ascending and >= t0; integration ends at the last.
pub fn integrate<F, S>(
    mut rhs: F,
    t0: f64,
    y: &mut Array2<C64>,
    sample_times: &[f64],
    mut on_sample: S,
    opts: &OdeOptions,
) -> Result<OdeStats>
where
    F: FnMut(f64, &Array2<C64>, &mut Array2<C64>),
    S: FnMut(f64, &mut Array2<C64>) -> bool,
{
    let mut stats = OdeStats::default();
    if sample_times.is_empty() {
        return Ok(stats);
    }
    if sample_times
        .windows(2)
        .any(|w| w[1] < w[0])
        || sample_times[0] < t0
    {
        return Err(Error::InvalidParameter(
            "sample times must be ascending and >= t0".into(),
        ));
    }
    let t_end = *sample_times.last().unwrap();
    let span = t_end - t0;

    let dim = y.dim();
    let mut k1 = Array2::<C64>::zeros(dim);
    let mut k2 = Array2::<C64>::zeros(dim);
    let mut k3 = Array2::<C64>::zeros(dim);
    let mut k4 = Array2::<C64>::zeros(dim);
    let mut k5 = Array2::<C64>::zeros(dim);
    let mut k6 = Array2::<C64>::zeros(dim);
    let mut k7 = Array2::<C64>::zeros(dim);
    let mut ytmp = Array2::<C64>::zeros(dim);
    let mut ynew = Array2::<C64>::zeros(dim);

    let mut t = t0;
    let mut sample_idx = 0;
    // emit any samples coincident with t0
    while sample_idx < sample_times.len() && sample_times[sample_idx] <= t {
        on_sample(sample_times[sample_idx], y);
        sample_idx += 1;
    }
    if sample_idx >= sample_times.len() {
        return Ok(stats);
    }
    if span <= 0.0 {
        return Err(Error::InvalidParameter("empty integration span".into()));
    }

    rhs(t, y, &mut k1);
    stats.rhs_evaluations += 1;

    // initial step heuristic
    let rms = |a: &Array2<C64>| -> f64 {
        let n = a.len() as f64;
        (a.iter().map(|z| z.norm_sqr()).sum::<f64>() / n).sqrt()
    };
    let d0 = rms(y).max(1e-30);
    let d1 = rms(&k1);
    let mut h = if d1 > 0.0 {
        (0.01 * d0 / d1).min(span / 10.0)
    } else {
        span / 100.0
    };

    let mut fsal_valid = true;
    while sample_idx < sample_times.len() {
        if stats.steps_accepted + stats.steps_rejected > opts.max_steps {
            return Err(Error::MaxStepsExceeded(opts.max_steps));
        }
        if h < 1e-14 * span {
            return Err(Error::StepSizeUnderflow { t, h });
        }
        let next_sample = sample_times[sample_idx];
        let mut hitting_sample = false;
        if t + h >= next_sample - 1e-14 * span {
            h = next_sample - t;
            hitting_sample = true;
        }

        if !fsal_valid {
            rhs(t, y, &mut k1);
            stats.rhs_evaluations += 1;
            fsal_valid = true;
        }

        lincomb(y, &[(A21, &k1)], h, &mut ytmp);
        rhs(t + C2 * h, &ytmp, &mut k2);
        lincomb(y, &[(A31, &k1), (A32, &k2)], h, &mut ytmp);
        rhs(t + C3 * h, &ytmp, &mut k3);
        lincomb(y, &[(A41, &k1), (A42, &k2), (A43, &k3)], h, &mut ytmp);
        rhs(t + C4 * h, &ytmp, &mut k4);
        lincomb(
            y,
            &[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)],
            h,
            &mut ytmp,
        );
        rhs(t + C5 * h, &ytmp, &mut k5);
        lincomb(
            y,
            &[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)],
            h,
            &mut ytmp,
        );
        rhs(t + h, &ytmp, &mut k6);
        lincomb(
            y,
            &[(B1, &k1), (B3, &k3), (B4, &k4), (B5, &k5), (B6, &k6)],
            h,
            &mut ynew,
        );
        rhs(t + h, &ynew, &mut k7);
        stats.rhs_evaluations += 6;

        // embedded error estimate
        let mut err_sq = 0.0f64;
        {
            let ys = y.as_slice().unwrap();
            let yn = ynew.as_slice().unwrap();
            let (s1, s3, s4, s5, s6, s7) = (
                k1.as_slice().unwrap(),
                k3.as_slice().unwrap(),
                k4.as_slice().unwrap(),
                k5.as_slice().unwrap(),
                k6.as_slice().unwrap(),
                k7.as_slice().unwrap(),
            );
            for i in 0..ys.len() {
                let e = (s1[i] * E1
                    + s3[i] * E3
                    + s4[i] * E4
                    + s5[i] * E5
                    + s6[i] * E6
                    + s7[i] * E7)
                    * h;
                let scale = opts.atol + opts.rtol * ys[i].norm().max(yn[i].norm());
                let r = e.norm() / scale;
                err_sq += r * r;
            }
            err_sq /= ys.len() as f64;
        }
        let err = err_sq.sqrt();

        if err <= 1.0 {
            // accept
            t += h;
            std::mem::swap(y, &mut ynew);
            std::mem::swap(&mut k1, &mut k7); // FSAL
            stats.steps_accepted += 1;
            if hitting_sample {
                t = next_sample;
                let mut modified = false;
                while sample_idx < sample_times.len()
                    && sample_times[sample_idx] <= t + 1e-14 * span
                {
                    modified |= on_sample(sample_times[sample_idx], y);
                    sample_idx += 1;
                }
                if modified {
                    fsal_valid = false;
                }
            }
            let factor = if err == 0.0 {
                5.0
            } else {
                (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
            };
            h *= factor;
        } else {
            stats.steps_rejected += 1;
            h *= (0.9 * err.powf(-0.2)).clamp(0.1, 0.9);
        }
    }
    Ok(stats)
}
