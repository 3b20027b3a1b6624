//! Stationarity and suboptimality measurement.
//!
//! * [`grad_norm`] — norm of the empirical-loss gradient; on a held-out
//!   split it doubles as the plug-in estimate of the population gradient.
//! * [`sosp_check`] — first- and second-order stationarity: the gradient
//!   test `||grad|| <= alpha` plus a curvature test `min_eig >= -sqrt(rho
//!   alpha)` on a finite-difference Hessian (small dimension only).
//! * [`gap_estimate`] — suboptimality of a point against the best value
//!   over a reference set (a candidate net, a trace) or the loss's analytic
//!   minimizer.

use ndarray::{Array1, Array2, ArrayView1};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::losses::{EmpiricalLoss, LossModel, Objective};
use crate::net::CandidateNet;

/// Largest dimension for which the dense finite-difference Hessian is
/// formed.
pub const SOSP_DIM_CAP: usize = 50;

/// Norm of the empirical-loss gradient at `w`.
pub fn grad_norm(loss: &LossModel, data: &Dataset, w: ArrayView1<f64>) -> Result<f64> {
    let g = loss.empirical_grad(data, w)?;
    Ok(g.dot(&g).sqrt())
}

/// Outcome of a stationarity check.
#[derive(Clone, Copy, Debug)]
pub struct SospReport {
    pub grad_norm: f64,
    pub min_eig: f64,
    /// Curvature floor `-sqrt(rho * alpha)` the minimum eigenvalue is held
    /// against.
    pub curvature_floor: f64,
    pub is_fosp: bool,
    pub is_sosp: bool,
}

/// Check `w` for alpha-stationarity of the empirical loss: first order via
/// the gradient norm, second order via the minimum eigenvalue of a
/// symmetrized finite-difference Hessian (step `1e-4 (1 + ||w||)`).
pub fn sosp_check(
    loss: &LossModel,
    data: &Dataset,
    w: ArrayView1<f64>,
    alpha: f64,
    rho: f64,
) -> Result<SospReport> {
    let obj = EmpiricalLoss::new(loss, data)?;
    sosp_check_obj(&obj, w, alpha, rho)
}

/// [`sosp_check`] for any differentiable objective.
pub fn sosp_check_obj(
    obj: &dyn Objective,
    w: ArrayView1<f64>,
    alpha: f64,
    rho: f64,
) -> Result<SospReport> {
    if !(alpha >= 0.0) || !(rho >= 0.0) {
        return Err(Error::invalid(format!(
            "alpha and rho must be >= 0, got alpha={alpha}, rho={rho}"
        )));
    }
    let d = obj.dim();
    if d > SOSP_DIM_CAP {
        return Err(Error::Feasibility(format!(
            "second-order check forms a dense {d}x{d} Hessian; dimension cap is {SOSP_DIM_CAP}"
        )));
    }
    if w.len() != d {
        return Err(Error::invalid(format!(
            "point has dimension {}, objective has {d}",
            w.len()
        )));
    }
    let g = obj.gradient(w);
    let grad_norm = g.dot(&g).sqrt();
    let hessian = finite_diff_hessian(obj, w);
    let min_eig = jacobi_min_eigenvalue(hessian);
    let curvature_floor = -(rho * alpha).sqrt();
    let is_fosp = grad_norm <= alpha;
    let is_sosp = is_fosp && min_eig >= curvature_floor;
    Ok(SospReport {
        grad_norm,
        min_eig,
        curvature_floor,
        is_fosp,
        is_sosp,
    })
}

/// Central-difference Hessian of the objective's gradient, symmetrized.
fn finite_diff_hessian(obj: &dyn Objective, w: ArrayView1<f64>) -> Array2<f64> {
    let d = w.len();
    let h = 1e-4 * (1.0 + w.dot(&w).sqrt());
    let mut hess = Array2::zeros((d, d));
    let mut probe = w.to_owned();
    for j in 0..d {
        probe[j] = w[j] + h;
        let g_plus = obj.gradient(probe.view());
        probe[j] = w[j] - h;
        let g_minus = obj.gradient(probe.view());
        probe[j] = w[j];
        for i in 0..d {
            hess[[i, j]] = (g_plus[i] - g_minus[i]) / (2.0 * h);
        }
    }
    // Symmetrize: columns are FD in one variable of a gradient, so the raw
    // matrix is only symmetric up to truncation error.
    let t = hess.t().to_owned();
    (&hess + &t) * 0.5
}

/// Smallest eigenvalue of a symmetric matrix via cyclic Jacobi rotations.
fn jacobi_min_eigenvalue(mut a: Array2<f64>) -> f64 {
    let d = a.nrows();
    if d == 1 {
        return a[[0, 0]];
    }
    let scale: f64 = a.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-300);
    for _sweep in 0..100 {
        let mut off = 0.0_f64;
        for p in 0..d - 1 {
            for q in p + 1..d {
                off = off.max(a[[p, q]].abs());
            }
        }
        if off <= 1e-13 * scale {
            break;
        }
        for p in 0..d - 1 {
            for q in p + 1..d {
                let apq = a[[p, q]];
                if apq.abs() <= 1e-300 {
                    continue;
                }
                let theta = 0.5 * (2.0 * apq).atan2(a[[q, q]] - a[[p, p]]);
                let (s, c) = theta.sin_cos();
                for k in 0..d {
                    let akp = a[[k, p]];
                    let akq = a[[k, q]];
                    a[[k, p]] = c * akp - s * akq;
                    a[[k, q]] = s * akp + c * akq;
                }
                for k in 0..d {
                    let apk = a[[p, k]];
                    let aqk = a[[q, k]];
                    a[[p, k]] = c * apk - s * aqk;
                    a[[q, k]] = s * apk + c * aqk;
                }
            }
        }
    }
    let mut min_eig = f64::INFINITY;
    for i in 0..d {
        min_eig = min_eig.min(a[[i, i]]);
    }
    min_eig
}

/// Source of the reference minimum for [`gap_estimate`].
#[derive(Clone, Copy, Debug)]
pub enum GapReference<'a> {
    /// Best empirical value over a candidate net.
    Net(&'a CandidateNet),
    /// Best empirical value over recorded iterates.
    Trace(&'a [Array1<f64>]),
    /// The loss's analytic empirical minimizer.
    Analytic,
}

/// Empirical suboptimality of `w`: its loss minus the best loss over the
/// reference. Nonnegative whenever the reference contains the minimizer.
pub fn gap_estimate(
    loss: &LossModel,
    data: &Dataset,
    w: ArrayView1<f64>,
    reference: GapReference<'_>,
) -> Result<f64> {
    let value = loss.empirical_value(data, w)?;
    let best = match reference {
        GapReference::Net(net) => best_over(loss, data, net.points())?,
        GapReference::Trace(points) => best_over(loss, data, points)?,
        GapReference::Analytic => {
            let minimizer = loss.analytic_minimizer(data).ok_or_else(|| {
                Error::invalid(format!(
                    "loss '{}' has no analytic minimizer",
                    loss.kind.name()
                ))
            })?;
            loss.empirical_value(data, minimizer.view())?
        }
    };
    Ok(value - best)
}

fn best_over(loss: &LossModel, data: &Dataset, points: &[Array1<f64>]) -> Result<f64> {
    if points.is_empty() {
        return Err(Error::invalid("gap reference is empty"));
    }
    let mut best = f64::INFINITY;
    for p in points {
        best = best.min(loss.empirical_value(data, p.view())?);
    }
    Ok(best)
}

/// One evaluated point, ready for a results table.
#[derive(Clone, Debug)]
pub struct EvalReport {
    pub grad_norm_train: f64,
    pub grad_norm_test: Option<f64>,
    pub min_hessian_eig: Option<f64>,
    pub gap_estimate: Option<f64>,
    pub point: Array1<f64>,
}
