//! Uncertain-system declaration and validation.
//!
//! The plant is `x+ = A_n x + B_n u + w + w_M` with `w` in a bounded set `W`,
//! `w_M = dP [x; u]` for an unknown `dP` in a vertex-described matrix polytope,
//! and joint state/input constraints `[x; u] in Z`. A fixed feedback gain `K`
//! closes the loop; the controller optimizes the remaining free input.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{
    self, facet_enum, redundancy_removed, vertex_enum, GeometryError, HPolytope, LpOracle,
    PolytopeData, SimplexLp, VPolytope,
};
use crate::util::{matrix_from_rows, matrix_to_rows};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("assumption {0} violated: {1}")]
    AssumptionViolated(String, String),
    #[error("inconsistent dimensions: {0}")]
    DimensionMismatch(String),
    #[error("invalid system data: {0}")]
    InvalidData(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// Nominal dynamics, uncertainty description, constraints, and feedback gain.
#[derive(Debug, Clone)]
pub struct UncertainSystem {
    pub a_n: DMatrix<f64>,
    pub b_n: DMatrix<f64>,
    pub k_gain: DMatrix<f64>,
    /// Vertices of the matrix polytope of model errors, each `n x (n+m)`.
    pub dp_vertices: Vec<DMatrix<f64>>,
    /// Structured form `dP = sum theta_i dP_i` when the description came that
    /// way; used to realize disturbances from a parameter vector.
    pub dp_basis: Option<Vec<DMatrix<f64>>>,
    pub w_facets: HPolytope,
    pub w_vertices: VPolytope,
    /// Joint state/input admissible set (facet form; may be unbounded).
    pub z: HPolytope,
}

impl UncertainSystem {
    pub fn state_dim(&self) -> usize {
        self.a_n.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.b_n.ncols()
    }

    /// Closed-loop matrix `A_n + B_n K`.
    pub fn a_cl(&self) -> DMatrix<f64> {
        &self.a_n + &self.b_n * &self.k_gain
    }

    /// Stacked map `[I; K]` from states to state/input pairs under `u = Kx`.
    pub fn stacked_map(&self) -> DMatrix<f64> {
        let n = self.state_dim();
        let m = self.input_dim();
        let mut pi = DMatrix::zeros(n + m, n);
        pi.view_mut((0, 0), (n, n)).copy_from(&DMatrix::identity(n, n));
        pi.view_mut((n, 0), (m, n)).copy_from(&self.k_gain);
        pi
    }

    /// State slice of the joint constraint set: `{x | [x; Kx] in Z}`.
    pub fn admissible_states(&self, oracle: &impl LpOracle) -> Result<HPolytope, ModelError> {
        state_slice(&self.z, &self.k_gain, oracle)
    }

    pub fn from_data(data: SystemData) -> Result<Self, ModelError> {
        let oracle = SimplexLp::default();
        let a_n = matrix_from_rows(&data.a_n).map_err(ModelError::InvalidData)?;
        let b_n = matrix_from_rows(&data.b_n).map_err(ModelError::InvalidData)?;
        let k_gain = matrix_from_rows(&data.k).map_err(ModelError::InvalidData)?;
        let n = a_n.nrows();
        let m = b_n.ncols();
        if a_n.ncols() != n || b_n.nrows() != n || k_gain.nrows() != m || k_gain.ncols() != n {
            return Err(ModelError::DimensionMismatch(
                "A_n, B_n, K shapes are inconsistent".into(),
            ));
        }

        let mut dp_basis = None;
        let dp_vertices: Vec<DMatrix<f64>> = match (data.dp_vertices, data.dp_basis) {
            (Some(verts), _) => verts
                .iter()
                .map(|v| matrix_from_rows(v).map_err(ModelError::InvalidData))
                .collect::<Result<_, _>>()?,
            (None, Some(basis)) => {
                let mats: Vec<DMatrix<f64>> = basis
                    .iter()
                    .map(|v| matrix_from_rows(v).map_err(ModelError::InvalidData))
                    .collect::<Result<_, _>>()?;
                let bound = data.theta_box.unwrap_or(1.0);
                let verts = vertices_from_basis(&mats, bound);
                dp_basis = Some(mats);
                verts
            }
            (None, None) => {
                return Err(ModelError::InvalidData(
                    "either dP_vertices or dP_basis is required".into(),
                ))
            }
        };
        for dp in &dp_vertices {
            if dp.nrows() != n || dp.ncols() != n + m {
                return Err(ModelError::DimensionMismatch(
                    "model-error vertices must be n x (n+m)".into(),
                ));
            }
        }

        let (w_facets, w_vertices) = match data.w.into_either()? {
            geometry::EitherPolytope::Facet(h) => {
                let v = vertex_enum(&h, &oracle)?;
                (h, v)
            }
            geometry::EitherPolytope::Vertex(v) => {
                let h = facet_enum(&v)?;
                (h, v)
            }
        };
        if w_facets.dim() != n {
            return Err(ModelError::DimensionMismatch("W must live in state space".into()));
        }

        let z = match data.z.into_either()? {
            geometry::EitherPolytope::Facet(h) => h,
            geometry::EitherPolytope::Vertex(v) => facet_enum(&v)?,
        };
        if z.dim() != n + m {
            return Err(ModelError::DimensionMismatch(
                "Z must live in state/input space".into(),
            ));
        }

        Ok(Self { a_n, b_n, k_gain, dp_vertices, dp_basis, w_facets, w_vertices, z })
    }

    pub fn from_json_str(s: &str) -> Result<Self, ModelError> {
        let data: SystemData =
            serde_json::from_str(s).map_err(|e| ModelError::InvalidData(e.to_string()))?;
        Self::from_data(data)
    }

    pub fn to_data(&self) -> SystemData {
        SystemData {
            a_n: matrix_to_rows(&self.a_n),
            b_n: matrix_to_rows(&self.b_n),
            k: matrix_to_rows(&self.k_gain),
            w: PolytopeData::from(&self.w_facets),
            z: PolytopeData::from(&self.z),
            dp_basis: self.dp_basis.as_ref().map(|b| b.iter().map(matrix_to_rows).collect()),
            theta_box: self.dp_basis.as_ref().map(|_| 1.0),
            dp_vertices: if self.dp_basis.is_some() {
                None
            } else {
                Some(self.dp_vertices.iter().map(matrix_to_rows).collect())
            },
        }
    }
}

/// On-disk description of an uncertain system.
#[derive(Serialize, Deserialize)]
pub struct SystemData {
    #[serde(rename = "A_n")]
    pub a_n: Vec<Vec<f64>>,
    #[serde(rename = "B_n")]
    pub b_n: Vec<Vec<f64>>,
    #[serde(rename = "K")]
    pub k: Vec<Vec<f64>>,
    #[serde(rename = "W")]
    pub w: PolytopeData,
    #[serde(rename = "Z")]
    pub z: PolytopeData,
    #[serde(rename = "dP_basis", skip_serializing_if = "Option::is_none")]
    pub dp_basis: Option<Vec<Vec<Vec<f64>>>>,
    #[serde(rename = "theta_box", skip_serializing_if = "Option::is_none")]
    pub theta_box: Option<f64>,
    #[serde(rename = "dP_vertices", skip_serializing_if = "Option::is_none")]
    pub dp_vertices: Option<Vec<Vec<Vec<f64>>>>,
}

/// Vertices of `{sum theta_i B_i | ||theta||_inf <= bound}`: all sign
/// combinations. The basis matrices themselves are not vertices.
pub fn vertices_from_basis(basis: &[DMatrix<f64>], bound: f64) -> Vec<DMatrix<f64>> {
    let k = basis.len();
    let mut out = Vec::with_capacity(1 << k);
    for mask in 0..(1u32 << k) {
        let mut acc = basis[0].clone() * 0.0;
        for (i, b) in basis.iter().enumerate() {
            let sign = if mask & (1 << i) != 0 { bound } else { -bound };
            acc += b * sign;
        }
        out.push(acc);
    }
    out
}

/// `{x | H_P [I; K] x <= h_P}`, redundancy-removed. Rows whose composed
/// normal vanishes are dropped when trivially satisfied.
pub fn state_slice(
    p: &HPolytope,
    k_gain: &DMatrix<f64>,
    oracle: &impl LpOracle,
) -> Result<HPolytope, ModelError> {
    let n = k_gain.ncols();
    let m = k_gain.nrows();
    if p.dim() != n + m {
        return Err(ModelError::DimensionMismatch("slice of wrong-dimension set".into()));
    }
    let mut pi = DMatrix::zeros(n + m, n);
    pi.view_mut((0, 0), (n, n)).copy_from(&DMatrix::identity(n, n));
    pi.view_mut((n, 0), (m, n)).copy_from(k_gain);
    let composed = p.normals() * &pi;
    let mut rows: Vec<(DVector<f64>, f64)> = Vec::new();
    for i in 0..composed.nrows() {
        let r = composed.row(i).transpose();
        if r.norm() <= 1e-12 {
            if p.offsets()[i] < -geometry::FEAS_TOL {
                return Err(GeometryError::Infeasible.into());
            }
            continue;
        }
        rows.push((r, p.offsets()[i]));
    }
    if rows.is_empty() {
        return Err(ModelError::InvalidData(
            "state slice is unconstrained (no effective rows)".into(),
        ));
    }
    let stacked = HPolytope::from_rows(&rows)?;
    Ok(redundancy_removed(&stacked, oracle)?)
}

/// One nominal prediction step under `u = K x + v`.
pub fn nominal_step(
    x_bar: &DVector<f64>,
    v: &DVector<f64>,
    sys: &UncertainSystem,
) -> DVector<f64> {
    &sys.a_n * x_bar + &sys.b_n * (&sys.k_gain * x_bar + v)
}

/// Disturbance realization `(sum theta_i dP_i) [x; u]`.
pub fn md_realization(
    x: &DVector<f64>,
    u: &DVector<f64>,
    theta: &DVector<f64>,
    basis: &[DMatrix<f64>],
) -> DVector<f64> {
    let mut dp = basis[0].clone() * 0.0;
    for (i, b) in basis.iter().enumerate() {
        dp += b * theta[i];
    }
    let mut xu = DVector::zeros(x.len() + u.len());
    xu.rows_mut(0, x.len()).copy_from(x);
    xu.rows_mut(x.len(), u.len()).copy_from(u);
    dp * xu
}

// ---------------------------------------------------------------------------
// Validation

#[derive(Debug, Clone, Serialize)]
pub struct AssumptionCheck {
    pub id: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct ValidationReport {
    pub checks: Vec<AssumptionCheck>,
    pub warnings: Vec<String>,
}

impl ValidationReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn first_failure(&self) -> Option<&AssumptionCheck> {
        self.checks.iter().find(|c| !c.passed)
    }
}

/// Checks the standing assumptions: constraint and disturbance sets contain
/// the origin strictly, and the loop is Schur at every model-error vertex.
/// Vertex-wise Schur is necessary but not sufficient for time-varying model
/// error, which is surfaced as a warning rather than a failure.
pub fn validate(sys: &UncertainSystem) -> Result<ValidationReport, ModelError> {
    let oracle = SimplexLp::default();
    let mut checks = Vec::new();
    let mut warnings = Vec::new();

    let z_ok = sys.z.has_origin_interior();
    checks.push(AssumptionCheck {
        id: "A1".into(),
        passed: z_ok,
        detail: if z_ok {
            "joint constraint set contains the origin strictly".into()
        } else {
            "joint constraint set does not contain the origin in its interior".into()
        },
    });

    let w_interior = sys.w_facets.has_origin_interior();
    let w_bounded = sys.w_facets.is_bounded(&oracle)?;
    checks.push(AssumptionCheck {
        id: "A2".into(),
        passed: w_interior && w_bounded,
        detail: format!(
            "disturbance set bounded: {w_bounded}, origin strictly interior: {w_interior}"
        ),
    });

    let dp_ok = origin_in_relative_interior(&sys.dp_vertices, &oracle)?;
    checks.push(AssumptionCheck {
        id: "A3".into(),
        passed: dp_ok,
        detail: if dp_ok {
            "zero model error lies in the relative interior of the uncertainty polytope".into()
        } else {
            "zero model error is not interior to the uncertainty polytope".into()
        },
    });

    let mut rho_max: f64 = 0.0;
    for dp in &sys.dp_vertices {
        let n = sys.state_dim();
        let m = sys.input_dim();
        let da = dp.view((0, 0), (n, n)).into_owned();
        let db = dp.view((0, n), (n, m)).into_owned();
        let a_cl = (&sys.a_n + da) + (&sys.b_n + db) * &sys.k_gain;
        rho_max = rho_max.max(spectral_radius(&a_cl));
    }
    let a4_ok = rho_max < 1.0 - 1e-10;
    checks.push(AssumptionCheck {
        id: "A4".into(),
        passed: a4_ok,
        detail: format!("max vertex spectral radius {rho_max:.12}"),
    });
    warnings.push(
        "A4 is checked vertex-wise; vertex-wise Schur stability does not imply robust \
         stability for time-varying model error"
            .into(),
    );

    Ok(ValidationReport { checks, warnings })
}

pub fn spectral_radius(m: &DMatrix<f64>) -> f64 {
    m.complex_eigenvalues().iter().map(|l| l.norm()).fold(0.0, f64::max)
}

/// Zero matrix strictly inside the hull of (flattened) vertex matrices:
/// `max t s.t. sum a_i v_i = 0, sum a_i = 1, a_i >= t` has positive optimum.
fn origin_in_relative_interior(
    vertices: &[DMatrix<f64>],
    oracle: &impl LpOracle,
) -> Result<bool, ModelError> {
    let k = vertices.len();
    if k == 0 {
        return Ok(false);
    }
    let len = vertices[0].len();
    // Variables: (a_1..a_k, t); maximize t.
    let mut eq = DMatrix::zeros(len + 1, k + 1);
    let mut rhs = DVector::zeros(len + 1);
    for (j, v) in vertices.iter().enumerate() {
        for (r, val) in v.iter().enumerate() {
            eq[(r, j)] = *val;
        }
        eq[(len, j)] = 1.0;
    }
    rhs[len] = 1.0;
    // a_i >= t  ->  t - a_i <= 0; also t <= 1 for boundedness.
    let mut g = DMatrix::zeros(k + 1, k + 1);
    let mut h = DVector::zeros(k + 1);
    for i in 0..k {
        g[(i, i)] = -1.0;
        g[(i, k)] = 1.0;
    }
    g[(k, k)] = 1.0;
    h[k] = 1.0;
    let mut c = DVector::zeros(k + 1);
    c[k] = -1.0; // maximize t
    let mut p = geometry::LpProblem::new(c, g, h);
    p.eq_rows = Some(eq);
    p.eq_rhs = Some(rhs);
    match oracle.solve_lp(&p).map_err(GeometryError::from)? {
        geometry::lp::LpOutcome::Optimal { objective, .. } => Ok(-objective > 1e-12),
        _ => Ok(false),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dvector;

    pub(crate) const SEC5_SYSTEM: &str =
        include_str!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/paper_sec5_system.json"));

    #[test]
    fn sec5_system_passes_all_assumptions() {
        let sys = UncertainSystem::from_json_str(SEC5_SYSTEM).unwrap();
        assert_eq!(sys.state_dim(), 2);
        assert_eq!(sys.input_dim(), 1);
        assert_eq!(sys.dp_vertices.len(), 8);
        let report = validate(&sys).unwrap();
        assert!(report.all_passed(), "{report:?}");
        assert!(!report.warnings.is_empty());
    }

    #[test]
    fn zero_gain_still_schur() {
        let mut sys = UncertainSystem::from_json_str(SEC5_SYSTEM).unwrap();
        sys.k_gain = DMatrix::zeros(1, 2);
        // A_n alone: complex pair with |lambda| = sqrt(det) = sqrt(0.32).
        let report = validate(&sys).unwrap();
        let a4 = report.checks.iter().find(|c| c.id == "A4").unwrap();
        assert!(a4.passed);
        assert!((spectral_radius(&sys.a_n) - 0.32f64.sqrt()).abs() < 1e-9);
    }

    #[test]
    fn shifted_disturbance_fails_a2() {
        let sys = UncertainSystem::from_json_str(SEC5_SYSTEM).unwrap();
        let mut shifted = sys.clone();
        shifted.w_facets = HPolytope::from_bounds(&[0.05, 0.05], &[0.25, 0.25]).unwrap();
        let report = validate(&shifted).unwrap();
        let a2 = report.checks.iter().find(|c| c.id == "A2").unwrap();
        assert!(!a2.passed);
    }

    #[test]
    fn state_slice_box_identity_gain_zero() {
        let oracle = SimplexLp::default();
        let p = HPolytope::symmetric_box(3, 1.0); // [x1, x2, u]
        let k = DMatrix::zeros(1, 2);
        let s = state_slice(&p, &k, &oracle).unwrap();
        let expect = HPolytope::symmetric_box(2, 1.0);
        assert!(geometry::set_equal(&s, &expect, &oracle).unwrap());
    }

    #[test]
    fn sec5_state_slice_rows() {
        let oracle = SimplexLp::default();
        let sys = UncertainSystem::from_json_str(SEC5_SYSTEM).unwrap();
        let xxu = sys.admissible_states(&oracle).unwrap();
        // |x2| <= 30 and |K x| <= 1: four effective rows.
        assert_eq!(xxu.num_facets(), 4);
        let s = xxu.support(&dvector![0.0, 1.0], &oracle).unwrap();
        assert!((s - 30.0).abs() < 1e-6);
        let k_dir = dvector![0.0372, -0.3261];
        let sk = xxu.support(&k_dir, &oracle).unwrap();
        assert!((sk - 1.0).abs() < 1e-6);
        use crate::geometry::SupportSet as _;
        let _ = sys.z.dim();
    }

    #[test]
    fn slice_scales_linearly() {
        let oracle = SimplexLp::default();
        let sys = UncertainSystem::from_json_str(SEC5_SYSTEM).unwrap();
        let p = HPolytope::symmetric_box(3, 1.0);
        let a = state_slice(&p.scaled(2.5).unwrap(), &sys.k_gain, &oracle).unwrap();
        let b = state_slice(&p, &sys.k_gain, &oracle).unwrap().scaled(2.5).unwrap();
        assert!(geometry::set_equal(&a, &b, &oracle).unwrap());
    }

    #[test]
    fn md_realization_linearity_and_example() {
        let sys = UncertainSystem::from_json_str(SEC5_SYSTEM).unwrap();
        let basis = sys.dp_basis.as_ref().unwrap();
        let x = dvector![10.0, -10.0];
        let u = &sys.k_gain * &x;
        let theta = dvector![0.8, 0.2, -0.5];
        let w = md_realization(&x, &u, &theta, basis);
        // Componentwise expansion of the structured form.
        let mut dp = basis[0].clone() * 0.8;
        dp += &basis[1] * 0.2;
        dp += &basis[2] * (-0.5);
        let mut xu = DVector::zeros(3);
        xu.rows_mut(0, 2).copy_from(&x);
        xu.rows_mut(2, 1).copy_from(&u);
        assert!((w.clone() - dp * xu).norm() < 1e-14);

        // Zero parameter gives zero disturbance.
        let z = md_realization(&x, &u, &dvector![0.0, 0.0, 0.0], basis);
        assert!(z.norm() == 0.0);
        // Linear in theta.
        let w2 = md_realization(&x, &u, &(2.0 * &theta), basis);
        assert!((2.0 * &w - w2).norm() < 1e-12);
    }

    #[test]
    fn nominal_step_fixed_point_at_origin() {
        let sys = UncertainSystem::from_json_str(SEC5_SYSTEM).unwrap();
        let x = DVector::zeros(2);
        let v = DVector::zeros(1);
        assert_eq!(nominal_step(&x, &v, &sys).norm(), 0.0);
    }
}
