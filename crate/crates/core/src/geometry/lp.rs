//! Linear programming oracle.
//!
//! Problems are stated in inequality form
//!
//! ```text
//!     minimize    c'x
//!     subject to  G x <= g        (x free)
//!                 A x  = b        (optional)
//! ```
//!
//! `SimplexLp` solves the dual in standard form with a revised simplex whose
//! basis has one column per primal variable. All geometry LPs here have few
//! variables (the ambient dimension, or horizon-sized for feasibility probes),
//! so the basis stays tiny while the constraint count can be large. The basis
//! is refactored from scratch every iteration; no update formulas.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

/// Feasibility tolerance: a returned minimizer satisfies every (row-normalized)
/// constraint within this bound.
pub const FEAS_TOL: f64 = 1e-9;
/// Objectives are reproducible on re-solve within this bound.
pub const OBJ_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum LpError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("iteration limit reached after {0} pivots")]
    IterationLimit(usize),
    #[error("numerical failure: {0}")]
    Numerical(String),
}

/// `minimize objective'x  s.t.  rows*x <= rhs` plus optional equality rows.
#[derive(Debug, Clone)]
pub struct LpProblem {
    pub objective: DVector<f64>,
    pub rows: DMatrix<f64>,
    pub rhs: DVector<f64>,
    pub eq_rows: Option<DMatrix<f64>>,
    pub eq_rhs: Option<DVector<f64>>,
}

impl LpProblem {
    pub fn new(objective: DVector<f64>, rows: DMatrix<f64>, rhs: DVector<f64>) -> Self {
        Self { objective, rows, rhs, eq_rows: None, eq_rhs: None }
    }
}

#[derive(Debug, Clone)]
pub enum LpOutcome {
    Optimal { x: DVector<f64>, objective: f64 },
    Infeasible,
    Unbounded,
}

/// Abstract LP capability consumed by the set-algebra layer. Implementations
/// are owned per worker; they hold no problem state.
pub trait LpOracle {
    fn solve_lp(&self, problem: &LpProblem) -> Result<LpOutcome, LpError>;

    /// `max d'x` over `{x | rows x <= rhs}`; convenience for support values.
    fn maximize(
        &self,
        direction: &DVector<f64>,
        rows: &DMatrix<f64>,
        rhs: &DVector<f64>,
    ) -> Result<LpOutcome, LpError> {
        let p = LpProblem::new(-direction.clone(), rows.clone(), rhs.clone());
        Ok(match self.solve_lp(&p)? {
            LpOutcome::Optimal { x, objective } => LpOutcome::Optimal { x, objective: -objective },
            other => other,
        })
    }
}

/// Dense revised simplex (dual form), suitable for many small LPs.
#[derive(Debug, Clone)]
pub struct SimplexLp {
    pub iteration_cap: usize,
}

impl Default for SimplexLp {
    fn default() -> Self {
        Self { iteration_cap: 20_000 }
    }
}

enum CoreOutcome {
    Optimal,
    Unbounded,
}

/// Standard-form workspace: `min f'y  s.t.  E y = d, y >= 0`.
struct Standard {
    e: DMatrix<f64>,
    d: DVector<f64>,
    f: DVector<f64>,
}

struct CoreState {
    basis: Vec<usize>,
    y_basic: DVector<f64>,
    multipliers: DVector<f64>,
}

impl SimplexLp {
    pub fn solve(&self, problem: &LpProblem) -> Result<LpOutcome, LpError> {
        self.solve_inner(problem, true)
    }

    fn solve_inner(&self, problem: &LpProblem, probe: bool) -> Result<LpOutcome, LpError> {
        let n = problem.objective.len();
        if problem.rows.ncols() != n && problem.rows.nrows() > 0 {
            return Err(LpError::DimensionMismatch(format!(
                "rows have {} columns, objective has {} entries",
                problem.rows.ncols(),
                n
            )));
        }
        if problem.rows.nrows() != problem.rhs.len() {
            return Err(LpError::DimensionMismatch("rows vs rhs length".into()));
        }

        // Fold equalities into paired inequalities and drop zero rows.
        let mut rows: Vec<DVector<f64>> = Vec::new();
        let mut rhs: Vec<f64> = Vec::new();
        let mut push_row = |r: DVector<f64>, b: f64| -> Option<LpOutcome> {
            let norm = r.norm();
            if norm <= 1e-14 {
                if b < -FEAS_TOL {
                    return Some(LpOutcome::Infeasible);
                }
                return None;
            }
            rows.push(r / norm);
            rhs.push(b / norm);
            None
        };
        for i in 0..problem.rows.nrows() {
            if let Some(out) = push_row(problem.rows.row(i).transpose(), problem.rhs[i]) {
                return Ok(out);
            }
        }
        if let (Some(a), Some(b)) = (&problem.eq_rows, &problem.eq_rhs) {
            for i in 0..a.nrows() {
                let r = a.row(i).transpose();
                if let Some(out) = push_row(r.clone(), b[i]) {
                    return Ok(out);
                }
                if let Some(out) = push_row(-r, -b[i]) {
                    return Ok(out);
                }
            }
        }

        let m = rows.len();
        if m == 0 {
            return Ok(if problem.objective.norm() <= 1e-14 {
                LpOutcome::Optimal { x: DVector::zeros(n), objective: 0.0 }
            } else {
                LpOutcome::Unbounded
            });
        }

        // Dual standard form: min g'y  s.t.  G'y = -c, y >= 0.
        let mut e = DMatrix::zeros(n, m);
        let mut f = DVector::zeros(m);
        for (j, r) in rows.iter().enumerate() {
            e.set_column(j, r);
            f[j] = rhs[j];
        }
        let d = -problem.objective.clone();
        let std_form = Standard { e, d, f };

        match self.solve_standard(&std_form)? {
            StandardOutcome::Optimal { multipliers, objective } => {
                // The simplex multipliers of the dual are the primal minimizer.
                let x = multipliers;
                let scale = 1.0 + x.amax();
                for (r, &b) in rows.iter().zip(rhs.iter()) {
                    if r.dot(&x) - b > 1e3 * FEAS_TOL * scale {
                        return Err(LpError::Numerical(format!(
                            "recovered point violates a constraint by {:.3e}",
                            r.dot(&x) - b
                        )));
                    }
                }
                Ok(LpOutcome::Optimal { x, objective: -objective })
            }
            StandardOutcome::Unbounded => Ok(LpOutcome::Infeasible),
            StandardOutcome::Infeasible => {
                if !probe {
                    return Err(LpError::Numerical(
                        "feasibility probe reported a dual-infeasible problem".into(),
                    ));
                }
                // Dual infeasible: the primal is unbounded if feasible at all.
                if self.feasible_point_exists(&rows, &rhs)? {
                    Ok(LpOutcome::Unbounded)
                } else {
                    Ok(LpOutcome::Infeasible)
                }
            }
        }
    }

    /// Phase-1 style probe: minimize t subject to Gx - t <= g, t >= -1.
    fn feasible_point_exists(
        &self,
        rows: &[DVector<f64>],
        rhs: &[f64],
    ) -> Result<bool, LpError> {
        let n = rows[0].len();
        let m = rows.len();
        let mut g2 = DMatrix::zeros(m + 1, n + 1);
        let mut h2 = DVector::zeros(m + 1);
        for (i, r) in rows.iter().enumerate() {
            for j in 0..n {
                g2[(i, j)] = r[j];
            }
            g2[(i, n)] = -1.0;
            h2[i] = rhs[i];
        }
        g2[(m, n)] = -1.0;
        h2[m] = 1.0;
        let mut c2 = DVector::zeros(n + 1);
        c2[n] = 1.0;
        match self.solve_inner(&LpProblem::new(c2, g2, h2), false)? {
            LpOutcome::Optimal { objective, .. } => Ok(objective <= 1e3 * FEAS_TOL),
            LpOutcome::Unbounded => Ok(true),
            LpOutcome::Infeasible => Err(LpError::Numerical(
                "feasibility probe cannot be infeasible".into(),
            )),
        }
    }

    fn solve_standard(&self, sf: &Standard) -> Result<StandardOutcome, LpError> {
        let nr = sf.e.nrows();
        let nc = sf.e.ncols();

        // Phase 1: artificial identity columns with sign matching d.
        let mut e1 = DMatrix::zeros(nr, nc + nr);
        e1.view_mut((0, 0), (nr, nc)).copy_from(&sf.e);
        let d = sf.d.clone();
        for i in 0..nr {
            let sign = if d[i] < 0.0 { -1.0 } else { 1.0 };
            e1[(i, nc + i)] = sign;
        }
        let mut f1 = DVector::zeros(nc + nr);
        for i in 0..nr {
            f1[nc + i] = 1.0;
        }
        let mut state = CoreState {
            basis: (nc..nc + nr).collect(),
            y_basic: DVector::zeros(nr),
            multipliers: DVector::zeros(nr),
        };
        match self.run_core(&e1, &d, &f1, &mut state, nc + nr)? {
            CoreOutcome::Unbounded => {
                return Err(LpError::Numerical("phase-1 problem cannot be unbounded".into()))
            }
            CoreOutcome::Optimal => {}
        }
        let phase1_obj: f64 = state
            .basis
            .iter()
            .zip(state.y_basic.iter())
            .map(|(&j, &v)| if j >= nc { v } else { 0.0 })
            .sum();
        if phase1_obj > 1e-7 * (1.0 + d.amax()) {
            return Ok(StandardOutcome::Infeasible);
        }

        // Drive remaining artificials out of the basis, or drop redundant rows.
        let mut keep_rows: Vec<usize> = (0..nr).collect();
        loop {
            let Some(pos) = state.basis.iter().position(|&j| j >= nc) else {
                break;
            };
            let b_mat = basis_matrix(&e1, &state.basis, &keep_rows);
            let lu = b_mat
                .lu();
            let mut swapped = false;
            for j in 0..nc {
                if state.basis.contains(&j) {
                    continue;
                }
                let col = gather(&e1, j, &keep_rows);
                if let Some(u) = lu.solve(&col) {
                    if u[pos].abs() > 1e-8 {
                        state.basis[pos] = j;
                        swapped = true;
                        break;
                    }
                }
            }
            if !swapped {
                // Redundant constraint row: remove it together with its artificial.
                keep_rows.remove(pos);
                state.basis.remove(pos);
                if keep_rows.is_empty() {
                    break;
                }
            }
        }

        if keep_rows.is_empty() {
            // Every row redundant: y = 0 is optimal for phase 2.
            return Ok(StandardOutcome::Optimal {
                multipliers: DVector::zeros(nr),
                objective: 0.0,
            });
        }

        // Phase 2 on the reduced rows with the real costs.
        let e2_full = {
            let mut e2 = DMatrix::zeros(keep_rows.len(), nc);
            for (ri, &r) in keep_rows.iter().enumerate() {
                for j in 0..nc {
                    e2[(ri, j)] = sf.e[(r, j)];
                }
            }
            e2
        };
        let d2 = DVector::from_iterator(keep_rows.len(), keep_rows.iter().map(|&r| sf.d[r]));
        let mut state2 = CoreState {
            basis: state.basis.clone(),
            y_basic: DVector::zeros(keep_rows.len()),
            multipliers: DVector::zeros(keep_rows.len()),
        };
        let outcome = self.run_core(&e2_full, &d2, &sf.f, &mut state2, nc)?;
        match outcome {
            CoreOutcome::Unbounded => Ok(StandardOutcome::Unbounded),
            CoreOutcome::Optimal => {
                let objective: f64 = state2
                    .basis
                    .iter()
                    .zip(state2.y_basic.iter())
                    .map(|(&j, &v)| sf.f[j] * v)
                    .sum();
                // Lift multipliers back to the full row set (dropped rows get
                // multiplier entries from the reduced solve).
                let mut multipliers = DVector::zeros(nr);
                for (ri, &r) in keep_rows.iter().enumerate() {
                    multipliers[r] = state2.multipliers[ri];
                }
                // Rows dropped as redundant are linear combinations of kept
                // rows; the multiplier vector above already satisfies them.
                Ok(StandardOutcome::Optimal { multipliers, objective })
            }
        }
    }

    /// Revised simplex main loop. `n_usable` limits which columns may enter
    /// (phase 1 allows artificials, phase 2 does not).
    fn run_core(
        &self,
        e: &DMatrix<f64>,
        d: &DVector<f64>,
        f: &DVector<f64>,
        state: &mut CoreState,
        n_usable: usize,
    ) -> Result<CoreOutcome, LpError> {
        let nr = e.nrows();
        let all_rows: Vec<usize> = (0..nr).collect();
        let mut bland = false;
        let mut stall = 0usize;
        let mut last_obj = f64::INFINITY;
        let rtol = 1e-9 * (1.0 + f.amax());

        for iter in 0..self.iteration_cap {
            let b_mat = basis_matrix(e, &state.basis, &all_rows);
            let lu = b_mat.clone().lu();
            let lut = b_mat.transpose().lu();
            let d_signed = DVector::from_iterator(nr, (0..nr).map(|i| d[i]));
            let y_b = lu
                .solve(&d_signed)
                .ok_or_else(|| LpError::Numerical("singular basis".into()))?;
            let f_b = DVector::from_iterator(nr, state.basis.iter().map(|&j| f[j]));
            let pi = lut
                .solve(&f_b)
                .ok_or_else(|| LpError::Numerical("singular basis transpose".into()))?;

            state.y_basic = y_b.clone();
            state.multipliers = pi.clone();

            let obj: f64 = state.basis.iter().zip(y_b.iter()).map(|(&j, &v)| f[j] * v).sum();
            if obj > last_obj - 1e-13 * (1.0 + obj.abs()) {
                stall += 1;
                if stall > 60 {
                    bland = true;
                }
            } else {
                stall = 0;
            }
            last_obj = obj;

            // Pricing.
            let mut entering: Option<usize> = None;
            let mut best = -rtol;
            for j in 0..n_usable {
                if state.basis.contains(&j) {
                    continue;
                }
                let col = e.column(j);
                let red = f[j] - pi.dot(&col.clone_owned());
                if bland {
                    if red < -rtol {
                        entering = Some(j);
                        break;
                    }
                } else if red < best {
                    best = red;
                    entering = Some(j);
                }
            }
            let Some(enter) = entering else {
                return Ok(CoreOutcome::Optimal);
            };

            let u = lu
                .solve(&e.column(enter).clone_owned())
                .ok_or_else(|| LpError::Numerical("singular basis".into()))?;
            let mut leave: Option<usize> = None;
            let mut best_ratio = f64::INFINITY;
            for i in 0..nr {
                if u[i] > 1e-10 {
                    let ratio = (y_b[i].max(0.0)) / u[i];
                    if ratio < best_ratio - 1e-12
                        || (bland
                            && (ratio - best_ratio).abs() <= 1e-12
                            && leave.map(|l| state.basis[i] < state.basis[l]).unwrap_or(false))
                    {
                        best_ratio = ratio;
                        leave = Some(i);
                    }
                }
            }
            let Some(leave) = leave else {
                return Ok(CoreOutcome::Unbounded);
            };
            state.basis[leave] = enter;
            let _ = iter;
        }
        Err(LpError::IterationLimit(self.iteration_cap))
    }
}

enum StandardOutcome {
    Optimal { multipliers: DVector<f64>, objective: f64 },
    Unbounded,
    Infeasible,
}

fn basis_matrix(e: &DMatrix<f64>, basis: &[usize], rows: &[usize]) -> DMatrix<f64> {
    let nr = rows.len();
    let mut b = DMatrix::zeros(nr, basis.len());
    for (bi, &j) in basis.iter().enumerate() {
        for (ri, &r) in rows.iter().enumerate() {
            b[(ri, bi)] = e[(r, j)];
        }
    }
    b
}

fn gather(e: &DMatrix<f64>, col: usize, rows: &[usize]) -> DVector<f64> {
    DVector::from_iterator(rows.len(), rows.iter().map(|&r| e[(r, col)]))
}

impl LpOracle for SimplexLp {
    fn solve_lp(&self, problem: &LpProblem) -> Result<LpOutcome, LpError> {
        self.solve(problem)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{dmatrix, dvector};

    fn solve(c: DVector<f64>, g: DMatrix<f64>, h: DVector<f64>) -> LpOutcome {
        SimplexLp::default().solve(&LpProblem::new(c, g, h)).unwrap()
    }

    #[test]
    fn box_support() {
        // max x1 + x2 over [-2,2]^2 -> 4 at (2,2)
        let g = dmatrix![1.0, 0.0; -1.0, 0.0; 0.0, 1.0; 0.0, -1.0];
        let h = dvector![2.0, 2.0, 2.0, 2.0];
        match solve(dvector![-1.0, -1.0], g, h) {
            LpOutcome::Optimal { x, objective } => {
                assert!((objective + 4.0).abs() < 1e-9);
                assert!((x[0] - 2.0).abs() < 1e-9 && (x[1] - 2.0).abs() < 1e-9);
            }
            other => panic!("expected optimal, got {other:?}"),
        }
    }

    #[test]
    fn infeasible_strip() {
        let g = dmatrix![1.0, 0.0; -1.0, 0.0];
        let h = dvector![0.0, -1.0]; // x <= 0 and x >= 1
        assert!(matches!(solve(dvector![0.0, 0.0], g, h), LpOutcome::Infeasible));
    }

    #[test]
    fn unbounded_ray() {
        let g = dmatrix![-1.0, 0.0; 0.0, -1.0];
        let h = dvector![0.0, 0.0]; // x, y >= 0
        assert!(matches!(solve(dvector![-1.0, -1.0], g, h), LpOutcome::Unbounded));
    }

    #[test]
    fn degenerate_vertex() {
        // Four constraints through the same optimum.
        let g = dmatrix![1.0, 0.0; 0.0, 1.0; 1.0, 1.0; 1.0, -1.0; -1.0, 0.0; 0.0, -1.0];
        let h = dvector![1.0, 1.0, 2.0, 0.0, 0.0, 0.0];
        match solve(dvector![-1.0, -1.0], g, h) {
            LpOutcome::Optimal { objective, .. } => assert!((objective + 2.0).abs() < 1e-9),
            other => panic!("expected optimal, got {other:?}"),
        }
    }

    #[test]
    fn equality_rows() {
        // min x1 s.t. x1 + x2 = 1, x in [0,1]^2
        let g = dmatrix![1.0, 0.0; -1.0, 0.0; 0.0, 1.0; 0.0, -1.0];
        let h = dvector![1.0, 0.0, 1.0, 0.0];
        let mut p = LpProblem::new(dvector![1.0, 0.0], g, h);
        p.eq_rows = Some(dmatrix![1.0, 1.0]);
        p.eq_rhs = Some(dvector![1.0]);
        match SimplexLp::default().solve(&p).unwrap() {
            LpOutcome::Optimal { x, objective } => {
                assert!(objective.abs() < 1e-9);
                assert!((x[0] + x[1] - 1.0).abs() < 1e-9);
            }
            other => panic!("expected optimal, got {other:?}"),
        }
    }

    #[test]
    fn empty_objective_without_rows() {
        let out = solve(dvector![0.0, 0.0], DMatrix::zeros(0, 2), DVector::zeros(0));
        assert!(matches!(out, LpOutcome::Optimal { .. }));
    }

    #[test]
    fn objective_reproducible() {
        let g = dmatrix![2.0, 1.0; -1.0, 2.0; -1.0, -1.0; 0.5, -1.0];
        let h = dvector![4.0, 3.0, 1.0, 2.0];
        let c = dvector![-1.0, -0.3];
        let a = match solve(c.clone(), g.clone(), h.clone()) {
            LpOutcome::Optimal { objective, .. } => objective,
            _ => panic!(),
        };
        let b = match solve(c, g, h) {
            LpOutcome::Optimal { objective, .. } => objective,
            _ => panic!(),
        };
        assert!((a - b).abs() <= OBJ_TOL);
    }
}
