//! Damped nonlinear least squares (Levenberg-Marquardt) with analytic
//! Jacobians and optional per-parameter freeze masks.
//!
//! The damping term is λ·diag(JᵀJ), which makes the step invariant under
//! rescaling of individual parameters; fit routines can therefore work in
//! natural units (rad/s, seconds) without preconditioning.

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::linalg;

#[derive(Clone, Copy, Debug)]
pub struct LmOptions {
    pub max_iterations: usize,
    /// Converged when the relative cost decrease of an accepted step falls
    /// below this.
    pub cost_tol: f64,
    /// Alternative convergence criterion on the scaled gradient infinity
    /// norm.
    pub grad_tol: f64,
}

impl Default for LmOptions {
    fn default() -> Self {
        Self {
            max_iterations: 200,
            cost_tol: 1e-10,
            grad_tol: 1e-12,
        }
    }
}

#[derive(Clone, Debug)]
pub struct LmOutcome {
    pub params: Vec<f64>,
    /// Covariance of the parameter estimates, σ²(JᵀJ)⁻¹ over the free
    /// parameters with σ² = ‖r‖²/(m − p). Rows and columns of frozen
    /// parameters are zero.
    pub covariance: Array2<f64>,
    /// ‖r‖ at the solution.
    pub residual_norm: f64,
    pub converged: bool,
    pub n_iterations: usize,
    /// Infinity norm of Jᵀr at the solution.
    pub gradient_norm: f64,
    /// Set when the normal equations were singular at the solution and the
    /// covariance required ridge regularization (or was zeroed entirely).
    pub covariance_regularized: bool,
}

/// Minimize ½‖r(p)‖². `residuals(p, out)` fills the residual vector,
/// `jacobian(p, out)` the m×p Jacobian ∂r_i/∂p_j. Parameters with
/// `fixed[j] = true` are held at their initial values.
pub fn levenberg_marquardt<R, J>(
    mut residuals: R,
    mut jacobian: J,
    init: &[f64],
    fixed: &[bool],
    n_residuals: usize,
    opts: &LmOptions,
) -> Result<LmOutcome>
where
    R: FnMut(&[f64], &mut [f64]),
    J: FnMut(&[f64], &mut Array2<f64>),
{
    let p_all = init.len();
    if fixed.len() != p_all {
        return Err(Error::ShapeMismatch("fixed mask length".into()));
    }
    let free: Vec<usize> = (0..p_all).filter(|&j| !fixed[j]).collect();
    let p = free.len();
    if p == 0 {
        return Err(Error::InvalidParameter("all parameters frozen".into()));
    }
    if n_residuals < p {
        return Err(Error::InvalidParameter(
            "fewer residuals than free parameters".into(),
        ));
    }

    let mut params = init.to_vec();
    let mut r = vec![0.0; n_residuals];
    let mut r_trial = vec![0.0; n_residuals];
    let mut jac = Array2::<f64>::zeros((n_residuals, p_all));

    residuals(&params, &mut r);
    let mut cost = 0.5 * r.iter().map(|v| v * v).sum::<f64>();
    if !cost.is_finite() {
        return Err(Error::Numerical("non-finite initial residuals".into()));
    }

    let mut lambda = 1e-3;
    let mut converged = false;
    let mut n_iterations = 0;
    let mut grad_norm;

    for iter in 0..opts.max_iterations {
        n_iterations = iter + 1;
        jacobian(&params, &mut jac);

        // normal equations over the free parameters
        let mut jtj = Array2::<f64>::zeros((p, p));
        let mut jtr = vec![0.0; p];
        for (a, &ja) in free.iter().enumerate() {
            for i in 0..n_residuals {
                jtr[a] += jac[(i, ja)] * r[i];
            }
            for (b, &jb) in free.iter().enumerate().skip(a) {
                let mut s = 0.0;
                for i in 0..n_residuals {
                    s += jac[(i, ja)] * jac[(i, jb)];
                }
                jtj[(a, b)] = s;
                jtj[(b, a)] = s;
            }
        }
        grad_norm = jtr.iter().fold(0.0f64, |m, g| m.max(g.abs()));
        if grad_norm <= opts.grad_tol * cost.max(1.0) {
            converged = true;
            break;
        }

        let mut stepped = false;
        for _attempt in 0..40 {
            let mut damped = jtj.clone();
            for a in 0..p {
                let d = jtj[(a, a)];
                damped[(a, a)] = d + lambda * d;
            }
            let rhs: Vec<f64> = jtr.iter().map(|g| -g).collect();
            let delta = match linalg::cholesky_solve(&damped, &rhs) {
                Some(d) => d,
                None => {
                    if jtj.diag().iter().any(|&d| d <= 0.0) {
                        return Err(Error::RankDeficientJacobian(
                            "a free parameter does not affect the residuals".into(),
                        ));
                    }
                    lambda *= 10.0;
                    continue;
                }
            };
            let mut trial = params.clone();
            for (a, &ja) in free.iter().enumerate() {
                trial[ja] += delta[a];
            }
            residuals(&trial, &mut r_trial);
            let trial_cost = 0.5 * r_trial.iter().map(|v| v * v).sum::<f64>();
            if trial_cost.is_finite() && trial_cost < cost {
                let rel_drop = (cost - trial_cost) / cost.max(f64::MIN_POSITIVE);
                params = trial;
                std::mem::swap(&mut r, &mut r_trial);
                cost = trial_cost;
                lambda = (lambda / 3.0).max(1e-14);
                stepped = true;
                if rel_drop < opts.cost_tol {
                    converged = true;
                }
                break;
            }
            lambda *= 10.0;
        }
        if !stepped {
            // damping saturated: the current point is a (local) minimum to
            // machine precision
            converged = grad_norm <= 1e-6 * (1.0 + cost);
            break;
        }
        if converged {
            break;
        }
    }

    // covariance from the final Jacobian
    jacobian(&params, &mut jac);
    let mut jtj = Array2::<f64>::zeros((p, p));
    let mut jtr = vec![0.0; p];
    for (a, &ja) in free.iter().enumerate() {
        for i in 0..n_residuals {
            jtr[a] += jac[(i, ja)] * r[i];
        }
        for (b, &jb) in free.iter().enumerate().skip(a) {
            let mut s = 0.0;
            for i in 0..n_residuals {
                s += jac[(i, ja)] * jac[(i, jb)];
            }
            jtj[(a, b)] = s;
            jtj[(b, a)] = s;
        }
    }
    grad_norm = jtr.iter().fold(0.0f64, |m, g| m.max(g.abs()));
    let dof = (n_residuals - p).max(1) as f64;
    let sigma_sq = 2.0 * cost / dof;
    let mut covariance = Array2::<f64>::zeros((p_all, p_all));
    let mut covariance_regularized = false;
    let diag_max = jtj.diag().iter().fold(0.0f64, |m, &d| m.max(d)).max(1e-300);
    let mut inv = linalg::spd_inverse(&jtj);
    if inv.is_none() {
        // flat directions (e.g. a vanishing amplitude): regularize so the
        // well-determined parameters still get finite uncertainties
        covariance_regularized = true;
        for k in 0..=8 {
            let eps = 10f64.powi(-14 + 2 * k) * diag_max;
            let mut ridged = jtj.clone();
            for a in 0..p {
                ridged[(a, a)] += eps;
            }
            inv = linalg::spd_inverse(&ridged);
            if inv.is_some() {
                break;
            }
        }
    }
    if let Some(inv) = inv {
        for (a, &ja) in free.iter().enumerate() {
            for (b, &jb) in free.iter().enumerate() {
                covariance[(ja, jb)] = sigma_sq * 0.5 * (inv[(a, b)] + inv[(b, a)]);
            }
        }
    }

    Ok(LmOutcome {
        params,
        covariance,
        residual_norm: (2.0 * cost).sqrt(),
        converged,
        n_iterations,
        gradient_norm: grad_norm,
        covariance_regularized,
    })
}

/// Central-difference Jacobian, for validating analytic Jacobians in tests.
pub fn numerical_jacobian<R>(
    mut residuals: R,
    params: &[f64],
    n_residuals: usize,
) -> Array2<f64>
where
    R: FnMut(&[f64], &mut [f64]),
{
    let p = params.len();
    let mut jac = Array2::<f64>::zeros((n_residuals, p));
    let mut rp = vec![0.0; n_residuals];
    let mut rm = vec![0.0; n_residuals];
    for j in 0..p {
        let h = 1e-6 * params[j].abs().max(1e-8);
        let mut plus = params.to_vec();
        let mut minus = params.to_vec();
        plus[j] += h;
        minus[j] -= h;
        residuals(&plus, &mut rp);
        residuals(&minus, &mut rm);
        for i in 0..n_residuals {
            jac[(i, j)] = (rp[i] - rm[i]) / (2.0 * h);
        }
    }
    jac
}
