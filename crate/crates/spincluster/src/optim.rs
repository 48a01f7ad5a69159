//! Damped least-squares (Levenberg–Marquardt) minimisation with a
//! forward-difference Jacobian, shared by signal fitting and structure
//! refinement.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct LmOptions {
    pub max_iterations: usize,
    /// Stop when the relative cost decrease falls below this.
    pub ftol: f64,
    /// Stop when the scaled step norm falls below this.
    pub xtol: f64,
    pub lambda_init: f64,
    /// Relative finite-difference step for the Jacobian.
    pub fd_step: f64,
}

impl Default for LmOptions {
    fn default() -> Self {
        LmOptions {
            max_iterations: 200,
            ftol: 1e-12,
            xtol: 1e-12,
            lambda_init: 1e-3,
            fd_step: 1e-7,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LmResult {
    pub params: Vec<f64>,
    pub residuals: Vec<f64>,
    /// Sum of squared residuals at the solution.
    pub cost: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Parameter covariance `s^2 (J^T J)^-1` with
    /// `s^2 = cost / (n_residuals - n_params)`; `None` when the normal
    /// matrix is singular or the problem has no excess residuals.
    pub covariance: Option<DMatrix<f64>>,
}

impl LmResult {
    /// 1-sigma uncertainty per parameter from the covariance diagonal.
    pub fn uncertainties(&self) -> Option<Vec<f64>> {
        self.covariance
            .as_ref()
            .map(|c| (0..c.nrows()).map(|i| c[(i, i)].max(0.0).sqrt()).collect())
    }
}

fn jacobian<F>(f: &F, x: &[f64], r0: &DVector<f64>, step: f64) -> Result<DMatrix<f64>>
where
    F: Fn(&[f64], &mut Vec<f64>) -> Result<()>,
{
    let m = r0.len();
    let n = x.len();
    let mut jac = DMatrix::zeros(m, n);
    let mut xs = x.to_vec();
    let mut buf = vec![0.0; m];
    for j in 0..n {
        let h = step * x[j].abs().max(1.0);
        xs[j] = x[j] + h;
        f(&xs, &mut buf)?;
        xs[j] = x[j];
        for i in 0..m {
            jac[(i, j)] = (buf[i] - r0[i]) / h;
        }
    }
    Ok(jac)
}

/// Minimises `|r(x)|^2` where `f(x, &mut r)` fills the residual vector.
///
/// The residual length is fixed by the first evaluation. Damping is
/// adapted multiplicatively; only steps that reduce the cost are
/// accepted, so the reported cost is non-increasing across iterations.
pub fn levenberg_marquardt<F>(f: F, x0: &[f64], n_residuals: usize, opts: LmOptions) -> Result<LmResult>
where
    F: Fn(&[f64], &mut Vec<f64>) -> Result<()>,
{
    let n = x0.len();
    if n == 0 || n_residuals == 0 {
        return Err(Error::InvalidInput(
            "empty parameter or residual vector".into(),
        ));
    }
    let mut x = x0.to_vec();
    let mut buf = vec![0.0; n_residuals];
    f(&x, &mut buf)?;
    let mut r = DVector::from_column_slice(&buf);
    let mut cost = r.norm_squared();
    let mut lambda = opts.lambda_init;
    let mut converged = false;
    let mut iterations = 0;

    for iter in 0..opts.max_iterations {
        iterations = iter + 1;
        let jac = jacobian(&f, &x, &r, opts.fd_step)?;
        let jtj = jac.transpose() * &jac;
        let g = jac.transpose() * &r;
        if g.amax() < 1e-300 {
            converged = true;
            break;
        }

        let mut accepted = false;
        for _ in 0..30 {
            let mut a = jtj.clone();
            for i in 0..n {
                a[(i, i)] += lambda * jtj[(i, i)].max(1e-300);
            }
            let step = match a.clone().cholesky() {
                Some(ch) => ch.solve(&g),
                None => match a.lu().solve(&g) {
                    Some(s) => s,
                    None => {
                        lambda *= 10.0;
                        continue;
                    }
                },
            };
            let trial: Vec<f64> = x.iter().zip(step.iter()).map(|(xi, s)| xi - s).collect();
            f(&trial, &mut buf)?;
            let trial_r = DVector::from_column_slice(&buf);
            let trial_cost = trial_r.norm_squared();
            if trial_cost < cost {
                let step_small = step
                    .iter()
                    .zip(&x)
                    .all(|(s, xi)| s.abs() <= opts.xtol * (xi.abs() + opts.xtol));
                let cost_small = cost - trial_cost <= opts.ftol * cost;
                x = trial;
                r = trial_r;
                cost = trial_cost;
                lambda = (lambda * 0.3).max(1e-12);
                accepted = true;
                if step_small || cost_small {
                    converged = true;
                }
                break;
            }
            lambda *= 10.0;
        }
        if !accepted {
            // damping saturated without an acceptable step: local minimum
            converged = true;
        }
        if converged {
            break;
        }
    }

    if !converged {
        return Err(Error::NonConvergence {
            iterations,
            residual_norm: cost.sqrt(),
        });
    }

    let jac = jacobian(&f, &x, &r, opts.fd_step)?;
    let jtj = jac.transpose() * &jac;
    let covariance = if n_residuals > n {
        let s2 = cost / (n_residuals - n) as f64;
        jtj.try_inverse().map(|inv| inv * s2)
    } else {
        None
    };

    Ok(LmResult {
        params: x,
        residuals: r.iter().copied().collect(),
        cost,
        iterations,
        converged,
        covariance,
    })
}
