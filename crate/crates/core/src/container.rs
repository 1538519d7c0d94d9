//! Container construction and optimization.
//!
//! A container is a fixed-shape polytope `Z_m` in state/input space whose
//! scaled copies `lambda * Z_m` must hold the predicted state/input pairs.
//! Restricting pairs to containers turns the state-dependent disturbance
//! `dP [x; u]` into a scaled copy of the precomputable image set `P_delta Z_m`,
//! which is what makes the online problem a fixed-structure QP.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{
    facet_enum, linear_map, min_scale_containment, redundancy_removed, vertex_enum, GeometryError,
    HPolytope, LpOracle, LpOutcome, LpProblem, SupportSet, VPolytope,
};
use crate::model::{state_slice, ModelError, UncertainSystem};

#[derive(Debug, Error)]
pub enum ContainerError {
    #[error("container must contain the origin in its interior")]
    NotOriginInterior,
    #[error("enlargement LP failed: {0}")]
    OptimizationFailed(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// A container shape with every derived set the controller needs: its state
/// slice and the image of the model-error polytope (both representations).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ContainerSpec {
    pub z_m_facets: HPolytope,
    pub z_m_vertices: VPolytope,
    /// `{x | [x; Kx] in Z_m}`.
    pub x_m: HPolytope,
    /// Image `P_delta Z_m` in vertex form (a point when the uncertainty is
    /// trivial).
    pub pz_m_vertices: VPolytope,
    /// Facet form of the image; absent for degenerate images.
    pub pz_m_facets: Option<HPolytope>,
}

impl ContainerSpec {
    pub fn from_vertices(
        sys: &UncertainSystem,
        z_m: &VPolytope,
        oracle: &impl LpOracle,
    ) -> Result<Self, ContainerError> {
        let z_m_vertices = z_m.canonicalized();
        let z_m_facets = facet_enum(&z_m_vertices)?;
        Self::assemble(sys, z_m_facets, z_m_vertices, oracle)
    }

    pub fn from_facets(
        sys: &UncertainSystem,
        z_m: &HPolytope,
        oracle: &impl LpOracle,
    ) -> Result<Self, ContainerError> {
        let z_m_facets = redundancy_removed(z_m, oracle)?;
        let z_m_vertices = vertex_enum(&z_m_facets, oracle)?;
        Self::assemble(sys, z_m_facets, z_m_vertices, oracle)
    }

    fn assemble(
        sys: &UncertainSystem,
        z_m_facets: HPolytope,
        z_m_vertices: VPolytope,
        oracle: &impl LpOracle,
    ) -> Result<Self, ContainerError> {
        if !z_m_facets.has_origin_interior() {
            return Err(ContainerError::NotOriginInterior);
        }
        let x_m = state_slice(&z_m_facets, &sys.k_gain, oracle)?;
        let pz_m_vertices = md_image(&sys.dp_vertices, &z_m_vertices)?;
        let pz_m_facets = match facet_enum(&pz_m_vertices) {
            Ok(h) => Some(h),
            Err(GeometryError::Degenerate { .. }) => None,
            Err(e) => return Err(e.into()),
        };
        Ok(Self { z_m_facets, z_m_vertices, x_m, pz_m_vertices, pz_m_facets })
    }
}

/// Vertex form of the image `P_delta Z`: hull of all vertex-pair products.
pub fn md_image(
    dp_vertices: &[DMatrix<f64>],
    z: &VPolytope,
) -> Result<VPolytope, ContainerError> {
    let mut points = Vec::with_capacity(dp_vertices.len() * z.num_vertices());
    for dp in dp_vertices {
        if dp.ncols() != z.dim() {
            return Err(ContainerError::Geometry(GeometryError::DimensionMismatch(
                "model-error vertex columns vs container dimension".into(),
            )));
        }
        for v in z.vertices() {
            points.push(dp * v);
        }
    }
    Ok(VPolytope::new(points)?.canonicalized())
}

/// Maximal set of `z` with `P_delta z` inside `wm`:
/// `{z | H_wm dP_i z <= h_wm  for every vertex dP_i}`.
///
/// The raw preimage is unbounded along directions annihilated by every
/// model-error vertex; `bounding_reference` (usually the constraint set)
/// supplies a generous box, 1000x its per-axis extent, intersected in before
/// use. Axes unbounded in the reference stay unbounded.
pub fn container_preimage(
    dp_vertices: &[DMatrix<f64>],
    wm: &HPolytope,
    bounding_reference: Option<&HPolytope>,
    oracle: &impl LpOracle,
) -> Result<HPolytope, ContainerError> {
    let dim = dp_vertices
        .first()
        .map(|m| m.ncols())
        .ok_or_else(|| GeometryError::DimensionMismatch("no model-error vertices".into()))?;
    let mut rows: Vec<(DVector<f64>, f64)> = Vec::new();
    for dp in dp_vertices {
        let composed = wm.normals() * dp;
        for i in 0..composed.nrows() {
            let r = composed.row(i).transpose();
            if r.norm() <= 1e-14 {
                if wm.offsets()[i] < 0.0 {
                    return Err(ContainerError::Geometry(GeometryError::Infeasible));
                }
                continue;
            }
            rows.push((r, wm.offsets()[i]));
        }
    }
    if let Some(reference) = bounding_reference {
        let bounds = reference.bounding_box(oracle)?;
        for (k, (lo, hi)) in bounds.iter().enumerate() {
            if let (Some(lo), Some(hi)) = (lo, hi) {
                let half = 1e3 * lo.abs().max(hi.abs()).max(1.0);
                let mut d = DVector::zeros(dim);
                d[k] = 1.0;
                rows.push((d.clone(), half));
                d[k] = -1.0;
                rows.push((d, half));
            }
        }
    }
    let stacked = HPolytope::from_rows(&rows)?;
    Ok(redundancy_removed(&stacked, oracle)?)
}

/// Default container vertices: for three-dimensional state/input space, a
/// spherical grid `[sin t cos p, sin t sin p, cos t]` with both angles spread
/// evenly across one full turn (poles and repeats collapse); otherwise the
/// cross-polytope corners united with unit-scaled box corners.
pub fn default_container(n: usize, m: usize, grid: (usize, usize)) -> VPolytope {
    let dim = n + m;
    if dim == 3 {
        let (nt, np) = (grid.0.max(2), grid.1.max(2));
        let mut pts = Vec::with_capacity(nt * np);
        for i in 0..nt {
            let theta = 2.0 * std::f64::consts::PI * (i as f64) / ((nt - 1) as f64);
            for j in 0..np {
                let phi = 2.0 * std::f64::consts::PI * (j as f64) / ((np - 1) as f64);
                pts.push(DVector::from_vec(vec![
                    theta.sin() * phi.cos(),
                    theta.sin() * phi.sin(),
                    theta.cos(),
                ]));
            }
        }
        VPolytope::new(pts).expect("nonempty grid").canonicalized()
    } else {
        let mut pts = Vec::new();
        for k in 0..dim {
            for sign in [1.0, -1.0] {
                let mut v = DVector::zeros(dim);
                v[k] = sign;
                pts.push(v);
            }
        }
        let corner = 1.0 / (dim as f64).sqrt();
        for mask in 0..(1u32 << dim) {
            let mut v = DVector::zeros(dim);
            for k in 0..dim {
                v[k] = if mask & (1 << k) != 0 { corner } else { -corner };
            }
            pts.push(v);
        }
        VPolytope::new(pts).expect("nonempty corner set").canonicalized()
    }
}

/// Which support-preservation families the enlargement keeps. The admissible
/// constraint family is always kept; the others are strict and usually pin
/// the enlargement at 1, so they default to dropped (the container and
/// terminal set get rebuilt afterwards anyway).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WmRelaxation {
    /// Closed-loop powers `1..=n_i` used in the kept families.
    pub n_i: usize,
    /// Chain depth for the terminal-chain family (when kept).
    pub n_j: usize,
    pub keep_zm0: bool,
    pub keep_sinf: bool,
    pub keep_chain: bool,
    /// Upper bound on each vertex scale; keeps the LP bounded when a vertex
    /// sees no binding direction.
    pub beta_cap: f64,
}

impl Default for WmRelaxation {
    fn default() -> Self {
        Self { n_i: 3, n_j: 0, keep_zm0: false, keep_sinf: false, keep_chain: false, beta_cap: 1e6 }
    }
}

#[derive(Debug, Clone)]
pub struct WmOptimization {
    pub wm_dagger: VPolytope,
    pub beta: Vec<f64>,
}

/// Enlarge a disturbance over-bound `WM0 = CH{w_l}` to `CH{beta_l w_l}` by
/// maximizing `sum beta_l`, `beta_l >= 1`, subject to support preservation:
/// for every kept reference row `r`, power `i`, and vertex `l`,
/// `beta_l (r' M_i w_l) <= max_l (r' M_i w_l)`. With `beta >= 1` this pins the
/// mapped support offsets exactly at their original values.
pub fn optimize_wm(
    sys: &UncertainSystem,
    wm0: &VPolytope,
    zm0: Option<&HPolytope>,
    s_inf: Option<&HPolytope>,
    s_chain: &[HPolytope],
    relax: &WmRelaxation,
    oracle: &impl LpOracle,
) -> Result<WmOptimization, ContainerError> {
    let verts = wm0.canonicalized();
    let l_count = verts.num_vertices();
    let pi = sys.stacked_map();
    let a_cl = sys.a_cl();

    // (reference rows, map) pairs for each kept family.
    let mut families: Vec<(DMatrix<f64>, DVector<f64>)> = Vec::new();
    let mut push_family = |reference: &HPolytope, map: &DMatrix<f64>| {
        families.push(((reference.normals() * map).clone_owned(), reference.offsets().clone()));
    };
    let mut power = DMatrix::identity(a_cl.nrows(), a_cl.ncols());
    for _ in 1..=relax.n_i.max(1) {
        power = &power * &a_cl;
        push_family(&sys.z, &(&pi * &power));
        if relax.keep_zm0 {
            if let Some(zm0) = zm0 {
                push_family(zm0, &(&pi * &power));
            }
        }
        if relax.keep_sinf {
            if let Some(s_inf) = s_inf {
                push_family(s_inf, &power.clone());
            }
        }
    }
    if relax.keep_chain {
        let identity = DMatrix::identity(a_cl.nrows(), a_cl.ncols());
        for s_j in s_chain.iter().take(relax.n_j) {
            push_family(s_j, &identity);
        }
    }

    // LP rows over beta: support caps plus bounds 1 <= beta <= cap.
    let mut g_rows: Vec<Vec<f64>> = Vec::new();
    let mut g_rhs: Vec<f64> = Vec::new();
    for (mapped_rows, _) in &families {
        for r in 0..mapped_rows.nrows() {
            let coeffs: Vec<f64> =
                verts.vertices().iter().map(|w| mapped_rows.row(r).transpose().dot(w)).collect();
            let delta = coeffs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            for (l, &a) in coeffs.iter().enumerate() {
                if a > 1e-12 {
                    let mut row = vec![0.0; l_count];
                    row[l] = a;
                    g_rows.push(row);
                    g_rhs.push(delta);
                }
            }
        }
    }
    for l in 0..l_count {
        let mut row = vec![0.0; l_count];
        row[l] = -1.0;
        g_rows.push(row);
        g_rhs.push(-1.0);
        let mut row = vec![0.0; l_count];
        row[l] = 1.0;
        g_rows.push(row);
        g_rhs.push(relax.beta_cap);
    }

    let mut g = DMatrix::zeros(g_rows.len(), l_count);
    for (i, row) in g_rows.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            g[(i, j)] = v;
        }
    }
    let objective = DVector::from_element(l_count, -1.0); // maximize sum beta
    let problem = LpProblem::new(objective, g, DVector::from_vec(g_rhs));
    let beta = match oracle.solve_lp(&problem).map_err(GeometryError::from)? {
        LpOutcome::Optimal { x, .. } => x,
        LpOutcome::Infeasible => {
            return Err(ContainerError::OptimizationFailed(
                "enlargement LP reported infeasible; beta = 1 should always be feasible".into(),
            ))
        }
        LpOutcome::Unbounded => {
            return Err(ContainerError::OptimizationFailed(
                "enlargement LP unbounded despite the cap".into(),
            ))
        }
    };

    let scaled: Vec<DVector<f64>> = verts
        .vertices()
        .iter()
        .zip(beta.iter())
        .map(|(w, &b)| w * b.max(1.0))
        .collect();
    Ok(WmOptimization {
        wm_dagger: VPolytope::new(scaled)?.canonicalized(),
        beta: beta.iter().copied().collect(),
    })
}

/// The container family used by the pipeline: the seed shape, the maximal
/// preimage of its image, and the preimage of the enlarged image.
#[derive(Debug, Clone)]
pub struct ContainerFamily {
    pub zm0: ContainerSpec,
    pub zm1: ContainerSpec,
    pub zm2: ContainerSpec,
    pub beta: Vec<f64>,
}

pub fn container_family(
    sys: &UncertainSystem,
    grid: (usize, usize),
    relax: &WmRelaxation,
    oracle: &impl LpOracle,
) -> Result<ContainerFamily, ContainerError> {
    let seed = default_container(sys.state_dim(), sys.input_dim(), grid);
    let zm0 = ContainerSpec::from_vertices(sys, &seed, oracle)?;
    let wm0_facets = zm0.pz_m_facets.clone().ok_or_else(|| {
        ContainerError::OptimizationFailed("degenerate image cannot seed the family".into())
    })?;
    let zm1_facets = container_preimage(&sys.dp_vertices, &wm0_facets, Some(&sys.z), oracle)?;
    let zm1 = ContainerSpec::from_facets(sys, &zm1_facets, oracle)?;

    let opt = optimize_wm(sys, &zm0.pz_m_vertices, Some(&zm0.z_m_facets), None, &[], relax, oracle)?;
    let wm_dagger_facets = facet_enum(&opt.wm_dagger)?;
    let zm2_facets =
        container_preimage(&sys.dp_vertices, &wm_dagger_facets, Some(&sys.z), oracle)?;
    let zm2 = ContainerSpec::from_facets(sys, &zm2_facets, oracle)?;
    Ok(ContainerFamily { zm0, zm1, zm2, beta: opt.beta })
}

/// Smallest scale placing a state/input pair and its tube cross-section in
/// the container (used by diagnostics and tests).
pub fn min_container_scale(
    pair: &DVector<f64>,
    spec: &ContainerSpec,
    oracle: &impl LpOracle,
) -> Result<f64, ContainerError> {
    let point = VPolytope::point(pair.clone());
    Ok(min_scale_containment(&point, &spec.z_m_facets, oracle)?)
}

/// `P_delta z` for a single pair: image of a point.
pub fn md_image_of_point(
    dp_vertices: &[DMatrix<f64>],
    z: &DVector<f64>,
) -> Result<VPolytope, ContainerError> {
    md_image(dp_vertices, &VPolytope::point(z.clone()))
}
