//! Quadratic programming oracle.
//!
//! Problems:
//!
//! ```text
//!     minimize    1/2 x'P x + c'x      (P symmetric positive semidefinite)
//!     subject to  G x <= g
//! ```
//!
//! `InteriorPointQp` is a primal-dual predictor-corrector method with a small
//! Tikhonov term on the normal equations so semidefinite Hessians (the
//! controller cost ignores the container scales) stay factorizable. It does
//! not certify infeasibility; callers decide feasibility with an LP probe
//! first when the answer matters.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum QpError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("no convergence after {0} iterations (residual {1:.3e})")]
    NoConvergence(usize, f64),
    #[error("normal-equation factorization failed")]
    Factorization,
}

#[derive(Debug, Clone)]
pub struct QpProblem {
    pub hessian: DMatrix<f64>,
    pub linear: DVector<f64>,
    pub rows: DMatrix<f64>,
    pub rhs: DVector<f64>,
}

#[derive(Debug, Clone)]
pub struct QpOutcome {
    pub x: DVector<f64>,
    pub objective: f64,
    pub iterations: usize,
    /// Residual infinity-norms (primal, dual) at termination.
    pub residuals: (f64, f64),
}

pub trait QpOracle {
    fn solve_qp(&self, p: &QpProblem, warm: Option<&DVector<f64>>) -> Result<QpOutcome, QpError>;
}

#[derive(Debug, Clone)]
pub struct InteriorPointQp {
    pub max_iterations: usize,
    pub tol_feas: f64,
    pub tol_gap: f64,
    pub regularization: f64,
}

impl Default for InteriorPointQp {
    fn default() -> Self {
        Self { max_iterations: 120, tol_feas: 1e-9, tol_gap: 1e-10, regularization: 1e-9 }
    }
}

impl QpOracle for InteriorPointQp {
    fn solve_qp(&self, p: &QpProblem, warm: Option<&DVector<f64>>) -> Result<QpOutcome, QpError> {
        let nv = p.linear.len();
        let m = p.rhs.len();
        if p.hessian.nrows() != nv || p.hessian.ncols() != nv {
            return Err(QpError::DimensionMismatch("hessian shape".into()));
        }
        if p.rows.nrows() != m || (m > 0 && p.rows.ncols() != nv) {
            return Err(QpError::DimensionMismatch("constraint shape".into()));
        }
        if m == 0 {
            return Err(QpError::DimensionMismatch("at least one inequality required".into()));
        }

        let mut x = match warm {
            Some(w) if w.len() == nv => w.clone(),
            _ => DVector::zeros(nv),
        };
        let mut s = DVector::from_element(m, 1.0);
        let gx = &p.rows * &x;
        for i in 0..m {
            s[i] = (p.rhs[i] - gx[i]).max(1.0);
        }
        let mut y = DVector::from_element(m, 1.0);

        let g_scale = 1.0 + p.rhs.amax();
        let c_scale = 1.0 + p.linear.amax();
        let mut best_res = f64::INFINITY;

        for iter in 0..self.max_iterations {
            let r_dual = &p.hessian * &x + &p.linear + p.rows.transpose() * &y;
            let r_prim = &p.rows * &x + &s - &p.rhs;
            let mu = s.dot(&y) / m as f64;

            let rp_norm = r_prim.amax();
            let rd_norm = r_dual.amax();
            best_res = best_res.min(rp_norm.max(rd_norm));
            if rp_norm <= self.tol_feas * g_scale
                && rd_norm <= self.tol_feas * (c_scale + (&p.hessian * &x).amax())
                && mu <= self.tol_gap * (1.0 + objective(p, &x).abs())
            {
                return Ok(QpOutcome {
                    objective: objective(p, &x),
                    x,
                    iterations: iter,
                    residuals: (rp_norm, rd_norm),
                });
            }

            // Normal matrix M = P + G' diag(y/s) G + delta I.
            let mut reg = self.regularization;
            let chol = loop {
                let mut msys = p.hessian.clone();
                for i in 0..m {
                    let w = y[i] / s[i];
                    let gi = p.rows.row(i);
                    // msys += w * gi' gi
                    for a in 0..nv {
                        let ga = gi[a];
                        if ga == 0.0 {
                            continue;
                        }
                        for b in 0..nv {
                            msys[(a, b)] += w * ga * gi[b];
                        }
                    }
                }
                for a in 0..nv {
                    msys[(a, a)] += reg;
                }
                match msys.cholesky() {
                    Some(c) => break c,
                    None => {
                        reg *= 100.0;
                        if reg > 1.0 {
                            return Err(QpError::Factorization);
                        }
                    }
                }
            };

            // Affine predictor (sigma = 0).
            let rhs_aff = -&r_dual
                + p.rows.transpose()
                    * DVector::from_iterator(m, (0..m).map(|i| y[i] - y[i] / s[i] * r_prim[i]));
            let dx_aff = chol.solve(&rhs_aff);
            let ds_aff = -&r_prim - &p.rows * &dx_aff;
            let dy_aff = DVector::from_iterator(
                m,
                (0..m).map(|i| -(y[i] * s[i] + y[i] * ds_aff[i]) / s[i]),
            );
            let alpha_aff = step_length(&s, &ds_aff).min(step_length(&y, &dy_aff));
            let mu_aff = {
                let mut acc = 0.0;
                for i in 0..m {
                    acc += (s[i] + alpha_aff * ds_aff[i]) * (y[i] + alpha_aff * dy_aff[i]);
                }
                acc / m as f64
            };
            let sigma = if mu > 0.0 { (mu_aff / mu).powi(3).clamp(0.0, 1.0) } else { 0.0 };

            // Corrector with centering.
            let rc = DVector::from_iterator(
                m,
                (0..m).map(|i| s[i] * y[i] - sigma * mu + ds_aff[i] * dy_aff[i]),
            );
            let rhs_cor = -&r_dual
                + p.rows.transpose()
                    * DVector::from_iterator(m, (0..m).map(|i| (rc[i] - y[i] * r_prim[i]) / s[i]));
            let dx = chol.solve(&rhs_cor);
            let ds = -&r_prim - &p.rows * &dx;
            let dy = DVector::from_iterator(m, (0..m).map(|i| -(rc[i] + y[i] * ds[i]) / s[i]));

            let alpha = 0.99 * step_length(&s, &ds).min(step_length(&y, &dy)).min(1.0101);
            let alpha = alpha.min(1.0);
            x += alpha * &dx;
            s += alpha * &ds;
            y += alpha * &dy;
            for i in 0..m {
                s[i] = s[i].max(1e-300);
                y[i] = y[i].max(1e-300);
            }
        }
        Err(QpError::NoConvergence(self.max_iterations, best_res))
    }
}

fn objective(p: &QpProblem, x: &DVector<f64>) -> f64 {
    0.5 * (x.transpose() * &p.hessian * x)[(0, 0)] + p.linear.dot(x)
}

/// Largest alpha in (0, 1] keeping v + alpha dv > 0.
fn step_length(v: &DVector<f64>, dv: &DVector<f64>) -> f64 {
    let mut alpha: f64 = 1.0;
    for i in 0..v.len() {
        if dv[i] < 0.0 {
            alpha = alpha.min(-v[i] / dv[i]);
        }
    }
    alpha
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{dmatrix, dvector};

    #[test]
    fn projection_on_halfplane() {
        // min 1/2 |x - (2,0)|^2 s.t. x1 <= 1  -> x = (1, 0)
        let p = QpProblem {
            hessian: DMatrix::identity(2, 2),
            linear: dvector![-2.0, 0.0],
            rows: dmatrix![1.0, 0.0],
            rhs: dvector![1.0],
        };
        let out = InteriorPointQp::default().solve_qp(&p, None).unwrap();
        assert!((out.x[0] - 1.0).abs() < 1e-7);
        assert!(out.x[1].abs() < 1e-7);
    }

    #[test]
    fn interior_unconstrained_minimum() {
        // min 1/2 x'x + c'x with roomy box: minimizer at -c.
        let p = QpProblem {
            hessian: DMatrix::identity(2, 2),
            linear: dvector![0.3, -0.4],
            rows: dmatrix![1.0, 0.0; -1.0, 0.0; 0.0, 1.0; 0.0, -1.0],
            rhs: dvector![5.0, 5.0, 5.0, 5.0],
        };
        let out = InteriorPointQp::default().solve_qp(&p, None).unwrap();
        assert!((out.x[0] + 0.3).abs() < 1e-7);
        assert!((out.x[1] - 0.4).abs() < 1e-7);
    }

    #[test]
    fn semidefinite_direction_with_bounded_rows() {
        // Second coordinate has zero curvature and zero cost; constraints pin
        // it into [0, 1]; solver should converge regardless of where in the
        // interval it lands.
        let p = QpProblem {
            hessian: dmatrix![2.0, 0.0; 0.0, 0.0],
            linear: dvector![-2.0, 0.0],
            rows: dmatrix![1.0, 0.0; -1.0, 0.0; 0.0, 1.0; 0.0, -1.0],
            rhs: dvector![4.0, 4.0, 1.0, 0.0],
        };
        let out = InteriorPointQp::default().solve_qp(&p, None).unwrap();
        assert!((out.x[0] - 1.0).abs() < 1e-6);
        assert!(out.x[1] >= -1e-7 && out.x[1] <= 1.0 + 1e-7);
    }

    #[test]
    fn active_constraint_kkt() {
        // min 1/2 x'Qx s.t. x1 + x2 >= 1 (written as -x1 - x2 <= -1).
        let p = QpProblem {
            hessian: dmatrix![2.0, 0.0; 0.0, 4.0],
            linear: dvector![0.0, 0.0],
            rows: dmatrix![-1.0, -1.0],
            rhs: dvector![-1.0],
        };
        let out = InteriorPointQp::default().solve_qp(&p, None).unwrap();
        // Analytic solution: minimize x1^2 + 2 x2^2 on x1 + x2 = 1 -> x = (2/3, 1/3).
        assert!((out.x[0] - 2.0 / 3.0).abs() < 1e-6);
        assert!((out.x[1] - 1.0 / 3.0).abs() < 1e-6);
    }

    #[test]
    fn warm_start_accepted() {
        let p = QpProblem {
            hessian: DMatrix::identity(2, 2),
            linear: dvector![-2.0, 0.0],
            rows: dmatrix![1.0, 0.0],
            rhs: dvector![1.0],
        };
        let warm = dvector![0.9, 0.0];
        let out = InteriorPointQp::default().solve_qp(&p, Some(&warm)).unwrap();
        assert!((out.x[0] - 1.0).abs() < 1e-7);
    }
}
