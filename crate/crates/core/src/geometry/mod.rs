//! Exact polytope algebra over facet and vertex representations.
//!
//! `HPolytope` is `{x | H x <= h}`; `VPolytope` is a convex hull of vertices.
//! Minkowski sums happen in vertex form, Pontryagin differences in facet form
//! (each is closed-form in its natural representation); conversion routines
//! cover the low dimensions the control pipeline needs.

pub mod hull;
pub mod lp;
pub mod qp;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use hull::{affine_rank, cloud_scale, dedup_points, extreme_points_lp, hull_2d, hull_3d};

pub use lp::{LpError, LpOracle, LpOutcome, LpProblem, SimplexLp, FEAS_TOL, OBJ_TOL};
pub use qp::{InteriorPointQp, QpError, QpOracle, QpOutcome, QpProblem};

#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("set is unbounded in a queried direction")]
    Unbounded,
    #[error("set is empty")]
    Infeasible,
    #[error("degenerate set of affine rank {rank} (expected {expected})")]
    Degenerate { rank: usize, expected: usize },
    #[error("polytope does not contain the origin in its interior")]
    NotOriginInterior,
    #[error("negative scale factor {0}")]
    NegativeScale(f64),
    #[error("unsupported dimension {0} for this operation")]
    UnsupportedDimension(usize),
    #[error("facet normal with zero norm at row {0}")]
    ZeroRow(usize),
    #[error(transparent)]
    Lp(#[from] LpError),
}

type Result<T> = std::result::Result<T, GeometryError>;

// ---------------------------------------------------------------------------
// Types

/// Facet-form polytopic set `{x | normals * x <= offsets}`. Not necessarily
/// bounded; boundedness and emptiness are queryable, not stored.
#[derive(Debug, Clone, PartialEq)]
pub struct HPolytope {
    normals: DMatrix<f64>,
    offsets: DVector<f64>,
}

/// Vertex-form polytope (convex hull of `vertices`). Degenerate hulls
/// (points, segments, flats) are valid and stay in vertex form.
#[derive(Debug, Clone, PartialEq)]
pub struct VPolytope {
    vertices: Vec<DVector<f64>>,
}

/// One support value per facet of a reference H-polytope: entry `i` is
/// `max_{x in S} [H]_i x` for the offset set `S`.
#[derive(Debug, Clone, PartialEq)]
pub struct SupportOffset {
    pub values: DVector<f64>,
}

impl Serialize for SupportOffset {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let v: Vec<f64> = self.values.iter().copied().collect();
        v.serialize(s)
    }
}

impl<'de> Deserialize<'de> for SupportOffset {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let v = Vec::<f64>::deserialize(d)?;
        Ok(SupportOffset { values: DVector::from_vec(v) })
    }
}

impl HPolytope {
    pub fn new(normals: DMatrix<f64>, offsets: DVector<f64>) -> Result<Self> {
        if normals.nrows() != offsets.len() {
            return Err(GeometryError::DimensionMismatch(format!(
                "{} facet rows vs {} offsets",
                normals.nrows(),
                offsets.len()
            )));
        }
        for i in 0..normals.nrows() {
            if normals.row(i).norm() <= 1e-14 {
                return Err(GeometryError::ZeroRow(i));
            }
        }
        Ok(Self { normals, offsets })
    }

    pub fn from_rows(rows: &[(DVector<f64>, f64)]) -> Result<Self> {
        if rows.is_empty() {
            return Err(GeometryError::DimensionMismatch("no facet rows".into()));
        }
        let dim = rows[0].0.len();
        let mut normals = DMatrix::zeros(rows.len(), dim);
        let mut offsets = DVector::zeros(rows.len());
        for (i, (r, b)) in rows.iter().enumerate() {
            if r.len() != dim {
                return Err(GeometryError::DimensionMismatch("facet row length".into()));
            }
            normals.row_mut(i).copy_from(&r.transpose());
            offsets[i] = *b;
        }
        Self::new(normals, offsets)
    }

    /// Axis-aligned box `lo <= x <= hi`.
    pub fn from_bounds(lo: &[f64], hi: &[f64]) -> Result<Self> {
        let dim = lo.len();
        if hi.len() != dim {
            return Err(GeometryError::DimensionMismatch("lo vs hi length".into()));
        }
        let mut normals = DMatrix::zeros(2 * dim, dim);
        let mut offsets = DVector::zeros(2 * dim);
        for k in 0..dim {
            normals[(2 * k, k)] = 1.0;
            offsets[2 * k] = hi[k];
            normals[(2 * k + 1, k)] = -1.0;
            offsets[2 * k + 1] = -lo[k];
        }
        Self::new(normals, offsets)
    }

    /// Symmetric box `|x_k| <= half`.
    pub fn symmetric_box(dim: usize, half: f64) -> Self {
        Self::from_bounds(&vec![-half; dim], &vec![half; dim]).expect("box construction")
    }

    pub fn dim(&self) -> usize {
        self.normals.ncols()
    }

    pub fn num_facets(&self) -> usize {
        self.normals.nrows()
    }

    pub fn normals(&self) -> &DMatrix<f64> {
        &self.normals
    }

    pub fn offsets(&self) -> &DVector<f64> {
        &self.offsets
    }

    pub fn row(&self, i: usize) -> DVector<f64> {
        self.normals.row(i).transpose()
    }

    /// Strict origin membership: `h > 0` componentwise.
    pub fn has_origin_interior(&self) -> bool {
        self.offsets.iter().all(|&b| b > 0.0)
    }

    pub fn contains_point(&self, x: &DVector<f64>, tol: f64) -> bool {
        (0..self.num_facets()).all(|i| {
            let r = self.normals.row(i);
            r.transpose().dot(x) <= self.offsets[i] + tol * r.norm().max(1.0)
        })
    }

    pub fn is_empty(&self, oracle: &impl LpOracle) -> Result<bool> {
        let p = LpProblem::new(
            DVector::zeros(self.dim()),
            self.normals.clone(),
            self.offsets.clone(),
        );
        Ok(matches!(oracle.solve_lp(&p)?, LpOutcome::Infeasible))
    }

    /// Support finite in +/- every axis direction.
    pub fn is_bounded(&self, oracle: &impl LpOracle) -> Result<bool> {
        for k in 0..self.dim() {
            for sign in [1.0, -1.0] {
                let mut d = DVector::zeros(self.dim());
                d[k] = sign;
                match oracle.maximize(&d, &self.normals, &self.offsets)? {
                    LpOutcome::Unbounded => return Ok(false),
                    LpOutcome::Infeasible => return Ok(true), // empty is bounded
                    LpOutcome::Optimal { .. } => {}
                }
            }
        }
        Ok(true)
    }

    /// Per-axis support interval; `None` entries mark unbounded directions.
    pub fn bounding_box(&self, oracle: &impl LpOracle) -> Result<Vec<(Option<f64>, Option<f64>)>> {
        let mut out = Vec::with_capacity(self.dim());
        for k in 0..self.dim() {
            let mut d = DVector::zeros(self.dim());
            d[k] = 1.0;
            let hi = match oracle.maximize(&d, &self.normals, &self.offsets)? {
                LpOutcome::Optimal { objective, .. } => Some(objective),
                LpOutcome::Unbounded => None,
                LpOutcome::Infeasible => return Err(GeometryError::Infeasible),
            };
            d[k] = -1.0;
            let lo = match oracle.maximize(&d, &self.normals, &self.offsets)? {
                LpOutcome::Optimal { objective, .. } => Some(-objective),
                LpOutcome::Unbounded => None,
                LpOutcome::Infeasible => return Err(GeometryError::Infeasible),
            };
            out.push((lo, hi));
        }
        Ok(out)
    }

    /// `alpha * P` for `alpha >= 0` and origin-interior-friendly facet form.
    pub fn scaled(&self, alpha: f64) -> Result<Self> {
        if alpha < 0.0 {
            return Err(GeometryError::NegativeScale(alpha));
        }
        Self::new(self.normals.clone(), &self.offsets * alpha)
    }

    /// Concatenate facet rows without redundancy removal.
    pub fn stacked(&self, other: &HPolytope) -> Result<Self> {
        if self.dim() != other.dim() {
            return Err(GeometryError::DimensionMismatch("stack of unequal dims".into()));
        }
        let mut normals = DMatrix::zeros(self.num_facets() + other.num_facets(), self.dim());
        normals.view_mut((0, 0), (self.num_facets(), self.dim())).copy_from(&self.normals);
        normals
            .view_mut((self.num_facets(), 0), (other.num_facets(), self.dim()))
            .copy_from(&other.normals);
        let mut offsets = DVector::zeros(self.num_facets() + other.num_facets());
        offsets.rows_mut(0, self.num_facets()).copy_from(&self.offsets);
        offsets
            .rows_mut(self.num_facets(), other.num_facets())
            .copy_from(&other.offsets);
        Self::new(normals, offsets)
    }
}

impl VPolytope {
    pub fn new(vertices: Vec<DVector<f64>>) -> Result<Self> {
        if vertices.is_empty() {
            return Err(GeometryError::Infeasible);
        }
        let dim = vertices[0].len();
        if vertices.iter().any(|v| v.len() != dim) {
            return Err(GeometryError::DimensionMismatch("vertex dimensions differ".into()));
        }
        Ok(Self { vertices })
    }

    pub fn point(x: DVector<f64>) -> Self {
        Self { vertices: vec![x] }
    }

    pub fn origin(dim: usize) -> Self {
        Self::point(DVector::zeros(dim))
    }

    pub fn dim(&self) -> usize {
        self.vertices[0].len()
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn vertices(&self) -> &[DVector<f64>] {
        &self.vertices
    }

    /// Drop duplicates and points interior to the hull of the others.
    pub fn canonicalized(&self) -> Self {
        let scale = cloud_scale(&self.vertices);
        let pts = dedup_points(&self.vertices, scale);
        if pts.len() <= 2 {
            return Self { vertices: pts };
        }
        let (rank, basis) = affine_rank(&pts, scale);
        let dim = self.dim();
        let vertices = match rank {
            0 => vec![pts[0].clone()],
            1 => {
                // Endpoints along the single affine direction.
                let dir = &basis[0];
                let mut lo = 0usize;
                let mut hi = 0usize;
                for (i, p) in pts.iter().enumerate() {
                    let t = (p - &pts[0]).dot(dir);
                    if t < (&pts[lo] - &pts[0]).dot(dir) {
                        lo = i;
                    }
                    if t > (&pts[hi] - &pts[0]).dot(dir) {
                        hi = i;
                    }
                }
                if lo == hi {
                    vec![pts[lo].clone()]
                } else {
                    vec![pts[lo].clone(), pts[hi].clone()]
                }
            }
            2 if dim == 2 => hull_2d(&pts, scale),
            3 if dim == 3 => match hull_3d(&pts, scale) {
                Some((_, on_hull)) => on_hull.into_iter().map(|i| pts[i].clone()).collect(),
                None => extreme_points_lp(&pts),
            },
            _ => extreme_points_lp(&pts),
        };
        Self { vertices }
    }

    pub fn scaled(&self, alpha: f64) -> Result<Self> {
        if alpha < 0.0 {
            return Err(GeometryError::NegativeScale(alpha));
        }
        Ok(Self { vertices: self.vertices.iter().map(|v| v * alpha).collect() })
    }

    pub fn translated(&self, t: &DVector<f64>) -> Result<Self> {
        if t.len() != self.dim() {
            return Err(GeometryError::DimensionMismatch("translation length".into()));
        }
        Ok(Self { vertices: self.vertices.iter().map(|v| v + t).collect() })
    }

    pub fn contains_point(&self, x: &DVector<f64>, oracle: &impl LpOracle) -> Result<bool> {
        // Convex-combination feasibility.
        let n = self.num_vertices();
        let dim = self.dim();
        if x.len() != dim {
            return Err(GeometryError::DimensionMismatch("point length".into()));
        }
        let mut eq = DMatrix::zeros(dim + 1, n);
        let mut rhs = DVector::zeros(dim + 1);
        for (j, v) in self.vertices.iter().enumerate() {
            for r in 0..dim {
                eq[(r, j)] = v[r];
            }
            eq[(dim, j)] = 1.0;
        }
        for r in 0..dim {
            rhs[r] = x[r];
        }
        rhs[dim] = 1.0;
        let mut g = DMatrix::zeros(n, n);
        for j in 0..n {
            g[(j, j)] = -1.0;
        }
        let mut p = LpProblem::new(DVector::zeros(n), g, DVector::zeros(n));
        p.eq_rows = Some(eq);
        p.eq_rhs = Some(rhs);
        Ok(matches!(oracle.solve_lp(&p)?, LpOutcome::Optimal { .. }))
    }
}

// ---------------------------------------------------------------------------
// Support values

/// Anything with a finite-or-unbounded support function.
pub trait SupportSet {
    fn dim(&self) -> usize;
    /// `max_{x in S} d'x`; `Unbounded`/`Infeasible` surface as errors.
    fn support(&self, direction: &DVector<f64>, oracle: &impl LpOracle) -> Result<f64>;
}

impl SupportSet for VPolytope {
    fn dim(&self) -> usize {
        self.dim()
    }

    fn support(&self, direction: &DVector<f64>, _oracle: &impl LpOracle) -> Result<f64> {
        if direction.len() != self.dim() {
            return Err(GeometryError::DimensionMismatch("support direction".into()));
        }
        Ok(self
            .vertices
            .iter()
            .map(|v| v.dot(direction))
            .fold(f64::NEG_INFINITY, f64::max))
    }
}

impl SupportSet for HPolytope {
    fn dim(&self) -> usize {
        self.dim()
    }

    fn support(&self, direction: &DVector<f64>, oracle: &impl LpOracle) -> Result<f64> {
        if direction.len() != self.dim() {
            return Err(GeometryError::DimensionMismatch("support direction".into()));
        }
        match oracle.maximize(direction, &self.normals, &self.offsets)? {
            LpOutcome::Optimal { objective, .. } => Ok(objective),
            LpOutcome::Unbounded => Err(GeometryError::Unbounded),
            LpOutcome::Infeasible => Err(GeometryError::Infeasible),
        }
    }
}

impl<T: SupportSet> SupportSet for &T {
    fn dim(&self) -> usize {
        (*self).dim()
    }
    fn support(&self, direction: &DVector<f64>, oracle: &impl LpOracle) -> Result<f64> {
        (*self).support(direction, oracle)
    }
}

/// Support value of `set` in direction `d`.
pub fn support(set: &impl SupportSet, d: &DVector<f64>, oracle: &impl LpOracle) -> Result<f64> {
    set.support(d, oracle)
}

/// Per-facet support offsets of `set` against `reference` (raw facet rows).
pub fn support_offsets(
    reference: &HPolytope,
    set: &impl SupportSet,
    oracle: &impl LpOracle,
) -> Result<SupportOffset> {
    if reference.dim() != set.dim() {
        return Err(GeometryError::DimensionMismatch("offset set dimension".into()));
    }
    let mut values = DVector::zeros(reference.num_facets());
    for i in 0..reference.num_facets() {
        values[i] = set.support(&reference.row(i), oracle)?;
    }
    Ok(SupportOffset { values })
}

// ---------------------------------------------------------------------------
// Set operations

/// Minkowski sum in vertex form: hull of pairwise vertex sums.
pub fn minkowski_sum(a: &VPolytope, b: &VPolytope) -> Result<VPolytope> {
    if a.dim() != b.dim() {
        return Err(GeometryError::DimensionMismatch("minkowski sum dims".into()));
    }
    let mut sums = Vec::with_capacity(a.num_vertices() * b.num_vertices());
    for va in a.vertices() {
        for vb in b.vertices() {
            sums.push(va + vb);
        }
    }
    Ok(VPolytope::new(sums)?.canonicalized())
}

/// Pontryagin difference `A (-) B` in facet form via per-facet supports.
pub fn pontryagin_diff(
    a: &HPolytope,
    b: &impl SupportSet,
    oracle: &impl LpOracle,
) -> Result<HPolytope> {
    let delta = support_offsets(a, b, oracle)?;
    HPolytope::new(a.normals.clone(), &a.offsets - &delta.values)
}

/// `lambda1 * A (-) lambda2 * B` as `{x | H_A x <= l1 h_A - l2 Delta}`.
pub fn scaled_diff(
    a: &HPolytope,
    lambda1: f64,
    b: &impl SupportSet,
    lambda2: f64,
    oracle: &impl LpOracle,
) -> Result<HPolytope> {
    if lambda1 < 0.0 {
        return Err(GeometryError::NegativeScale(lambda1));
    }
    if lambda2 < 0.0 {
        return Err(GeometryError::NegativeScale(lambda2));
    }
    if !a.has_origin_interior() {
        return Err(GeometryError::NotOriginInterior);
    }
    let delta = support_offsets(a, b, oracle)?;
    HPolytope::new(a.normals.clone(), &a.offsets * lambda1 - &delta.values * lambda2)
}

/// Image `{M x | x in P}` in vertex form.
pub fn linear_map(m: &DMatrix<f64>, p: &VPolytope) -> Result<VPolytope> {
    if m.ncols() != p.dim() {
        return Err(GeometryError::DimensionMismatch(format!(
            "map has {} columns, set dimension is {}",
            m.ncols(),
            p.dim()
        )));
    }
    let mapped: Vec<DVector<f64>> = p.vertices().iter().map(|v| m * v).collect();
    Ok(VPolytope::new(mapped)?.canonicalized())
}

/// Facet-wise intersection with redundancy removal. Empty intersections are
/// valid results; query with `is_empty`.
pub fn intersect(a: &HPolytope, b: &HPolytope, oracle: &impl LpOracle) -> Result<HPolytope> {
    let stacked = a.stacked(b)?;
    redundancy_removed(&stacked, oracle)
}

/// Drop facet `i` when maximizing its normal subject to the remaining facets
/// stays below `offset + tol`; greedy front-to-back passes.
pub fn redundancy_removed(p: &HPolytope, oracle: &impl LpOracle) -> Result<HPolytope> {
    let m = p.num_facets();
    let mut keep: Vec<bool> = vec![true; m];
    for i in 0..m {
        let active: Vec<usize> = (0..m).filter(|&j| j != i && keep[j]).collect();
        if active.is_empty() {
            continue;
        }
        let mut rows = DMatrix::zeros(active.len(), p.dim());
        let mut rhs = DVector::zeros(active.len());
        for (r, &j) in active.iter().enumerate() {
            rows.row_mut(r).copy_from(&p.normals.row(j));
            rhs[r] = p.offsets[j];
        }
        let d = p.row(i);
        match oracle.maximize(&d, &rows, &rhs)? {
            LpOutcome::Optimal { objective, .. } => {
                let tol = FEAS_TOL * d.norm().max(1.0) * (1.0 + p.offsets[i].abs());
                if objective <= p.offsets[i] + tol {
                    keep[i] = false;
                }
            }
            LpOutcome::Unbounded => {}
            LpOutcome::Infeasible => {
                // Remaining rows already infeasible; row i cannot matter.
                keep[i] = false;
            }
        }
    }
    let kept: Vec<(DVector<f64>, f64)> = (0..m)
        .filter(|&i| keep[i])
        .map(|i| (p.row(i), p.offsets[i]))
        .collect();
    if kept.is_empty() {
        // Everything redundant relative to everything else: whole space is not
        // representable; retain one original row as a canonical stand-in.
        return HPolytope::new(
            p.normals.rows(0, 1).into_owned(),
            p.offsets.rows(0, 1).into_owned(),
        );
    }
    HPolytope::from_rows(&kept)
}

/// `B` inside `A`: every facet of `A` dominates the support of `B`.
pub fn contains_set(a: &HPolytope, b: &impl SupportSet, oracle: &impl LpOracle) -> Result<bool> {
    if a.dim() != b.dim() {
        return Err(GeometryError::DimensionMismatch("containment dims".into()));
    }
    for i in 0..a.num_facets() {
        let r = a.row(i);
        let s = match b.support(&r, oracle) {
            Ok(v) => v,
            Err(GeometryError::Unbounded) => return Ok(false),
            Err(e) => return Err(e),
        };
        if s > a.offsets[i] + FEAS_TOL * r.norm().max(1.0) {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Mutual containment at `FEAS_TOL`.
pub fn set_equal(a: &HPolytope, b: &HPolytope, oracle: &impl LpOracle) -> Result<bool> {
    Ok(contains_set(a, b, oracle)? && contains_set(b, a, oracle)?)
}

/// Smallest `gamma >= 0` with `S` inside `gamma * X`; `X` needs the origin
/// strictly interior.
pub fn min_scale_containment(
    s: &impl SupportSet,
    x: &HPolytope,
    oracle: &impl LpOracle,
) -> Result<f64> {
    if !x.has_origin_interior() {
        return Err(GeometryError::NotOriginInterior);
    }
    let mut gamma: f64 = 0.0;
    for i in 0..x.num_facets() {
        let sup = s.support(&x.row(i), oracle)?;
        gamma = gamma.max(sup / x.offsets[i]);
    }
    Ok(gamma.max(0.0))
}

// ---------------------------------------------------------------------------
// Representation conversion

/// Enumerate the vertices of a bounded facet-form polytope (dimension <= 4).
///
/// Incremental halfspace cutting: start from the support bounding box, then
/// intersect facet by facet; candidate vertices come from kept/cut vertex
/// pairs and survive only with a full-rank tight facet set.
pub fn vertex_enum(p: &HPolytope, oracle: &impl LpOracle) -> Result<VPolytope> {
    let dim = p.dim();
    if dim == 0 || dim > 4 {
        return Err(GeometryError::UnsupportedDimension(dim));
    }
    let bounds = p.bounding_box(oracle)?;
    let mut lo = Vec::with_capacity(dim);
    let mut hi = Vec::with_capacity(dim);
    let mut diam: f64 = 0.0;
    for (l, h) in &bounds {
        match (l, h) {
            (Some(l), Some(h)) => {
                lo.push(*l);
                hi.push(*h);
                diam += (h - l).powi(2);
            }
            _ => return Err(GeometryError::Unbounded),
        }
    }
    let scale = diam.sqrt().max(1.0);
    let margin = 0.125 * scale;
    let tol = 1e-7 * scale;

    // Processed rows as (unit normal, offset); seeded with the inflated box.
    let mut rows: Vec<(DVector<f64>, f64)> = Vec::new();
    for k in 0..dim {
        let mut d = DVector::zeros(dim);
        d[k] = 1.0;
        rows.push((d.clone(), hi[k] + margin));
        d[k] = -1.0;
        rows.push((d, -(lo[k] - margin)));
    }
    let mut verts: Vec<DVector<f64>> = Vec::new();
    let corners = 1usize << dim;
    for mask in 0..corners {
        let mut v = DVector::zeros(dim);
        for k in 0..dim {
            v[k] = if mask & (1 << k) != 0 { hi[k] + margin } else { lo[k] - margin };
        }
        verts.push(v);
    }

    for i in 0..p.num_facets() {
        let raw = p.row(i);
        let norm = raw.norm();
        let (r, b) = (raw / norm, p.offsets[i] / norm);
        let vals: Vec<f64> = verts.iter().map(|v| r.dot(v) - b).collect();
        if vals.iter().all(|&v| v <= tol) {
            rows.push((r, b));
            continue;
        }
        if vals.iter().all(|&v| v >= -tol) {
            // Nothing strictly inside: flat or empty slice.
            let keep: Vec<DVector<f64>> =
                verts.iter().zip(&vals).filter(|(_, &v)| v <= tol).map(|(v, _)| v.clone()).collect();
            if keep.is_empty() {
                return Err(GeometryError::Infeasible);
            }
            verts = keep;
            rows.push((r, b));
            continue;
        }
        let kept_idx: Vec<usize> = (0..verts.len()).filter(|&j| vals[j] <= tol).collect();
        let cut_idx: Vec<usize> = (0..verts.len()).filter(|&j| vals[j] > tol).collect();
        let mut next: Vec<DVector<f64>> = kept_idx.iter().map(|&j| verts[j].clone()).collect();
        for &ki in &kept_idx {
            for &ci in &cut_idx {
                let va = &verts[ki];
                let vb = &verts[ci];
                let fa = vals[ki];
                let fb = vals[ci];
                let t = fa / (fa - fb); // fb > tol >= fa
                if !t.is_finite() {
                    continue;
                }
                let cand = va + (vb - va) * t.clamp(0.0, 1.0);
                if next.iter().any(|q| (q - &cand).norm() <= hull::DEDUP_TOL * scale) {
                    continue;
                }
                if !candidate_is_vertex(&cand, &rows, (&r, b), tol, dim) {
                    continue;
                }
                next.push(cand);
            }
        }
        if next.is_empty() {
            return Err(GeometryError::Infeasible);
        }
        verts = next;
        rows.push((r, b));
    }

    // Final feasibility sweep against the original rows.
    verts.retain(|v| p.contains_point(v, tol));
    if verts.is_empty() {
        return Err(GeometryError::Infeasible);
    }
    Ok(VPolytope::new(verts)?.canonicalized())
}

fn candidate_is_vertex(
    cand: &DVector<f64>,
    rows: &[(DVector<f64>, f64)],
    current: (&DVector<f64>, f64),
    tol: f64,
    dim: usize,
) -> bool {
    let mut tight: Vec<&DVector<f64>> = Vec::new();
    let (cr, cb) = current;
    if (cr.dot(cand) - cb).abs() <= tol {
        tight.push(cr);
    }
    for (r, b) in rows {
        let v = r.dot(cand) - b;
        if v > tol {
            return false; // infeasible for processed system
        }
        if v.abs() <= tol {
            tight.push(r);
        }
    }
    // Rank of tight normals must fill the dimension.
    let mut basis: Vec<DVector<f64>> = Vec::new();
    for r in tight {
        let mut v = r.clone();
        for b in &basis {
            let c = v.dot(b);
            v -= b * c;
        }
        if v.norm() > 1e-7 {
            let n = v.norm();
            basis.push(v / n);
        }
        if basis.len() == dim {
            return true;
        }
    }
    false
}

/// Facet form of a full-dimensional vertex polytope (dimension <= 3).
pub fn facet_enum(p: &VPolytope) -> Result<HPolytope> {
    let dim = p.dim();
    let scale = cloud_scale(p.vertices());
    let pts = dedup_points(p.vertices(), scale);
    let (rank, _) = affine_rank(&pts, scale);
    if rank < dim {
        return Err(GeometryError::Degenerate { rank, expected: dim });
    }
    match dim {
        1 => {
            let lo = pts.iter().map(|v| v[0]).fold(f64::INFINITY, f64::min);
            let hi = pts.iter().map(|v| v[0]).fold(f64::NEG_INFINITY, f64::max);
            HPolytope::from_bounds(&[lo], &[hi])
        }
        2 => {
            let hull = hull_2d(&pts, scale);
            if hull.len() < 3 {
                return Err(GeometryError::Degenerate { rank: 1, expected: 2 });
            }
            let mut rows = Vec::with_capacity(hull.len());
            for k in 0..hull.len() {
                let a = &hull[k];
                let b = &hull[(k + 1) % hull.len()];
                // Outward normal for CCW order.
                let n = DVector::from_vec(vec![b[1] - a[1], -(b[0] - a[0])]);
                let nn = n.norm();
                if nn <= 1e-14 * scale {
                    continue;
                }
                let n = n / nn;
                rows.push((n.clone(), n.dot(a)));
            }
            HPolytope::from_rows(&rows)
        }
        3 => {
            let (faces, _) = hull_3d(&pts, scale)
                .ok_or(GeometryError::Degenerate { rank: 2, expected: 3 })?;
            let mut rows: Vec<(DVector<f64>, f64)> = Vec::new();
            for f in &faces {
                let dup = rows.iter().any(|(n, b)| {
                    (n - &f.normal).norm() <= 1e-7 && (b - f.offset).abs() <= 1e-7 * scale
                });
                if !dup {
                    rows.push((f.normal.clone(), f.offset));
                }
            }
            HPolytope::from_rows(&rows)
        }
        d => Err(GeometryError::UnsupportedDimension(d)),
    }
}

/// Euclidean volume for 2D/3D vertex polytopes; degenerate inputs report 0.
pub fn volume(p: &VPolytope) -> Result<f64> {
    let dim = p.dim();
    let scale = cloud_scale(p.vertices());
    let pts = dedup_points(p.vertices(), scale);
    let (rank, _) = affine_rank(&pts, scale);
    if rank < dim {
        return Ok(0.0);
    }
    match dim {
        2 => {
            let hull = hull_2d(&pts, scale);
            let mut acc = 0.0;
            for k in 0..hull.len() {
                let a = &hull[k];
                let b = &hull[(k + 1) % hull.len()];
                acc += a[0] * b[1] - b[0] * a[1];
            }
            Ok(acc.abs() / 2.0)
        }
        3 => {
            let (faces, _) = hull_3d(&pts, scale)
                .ok_or(GeometryError::Degenerate { rank: 2, expected: 3 })?;
            let centroid =
                pts.iter().fold(DVector::zeros(3), |acc, p| acc + p) / (pts.len() as f64);
            let mut acc = 0.0;
            for f in &faces {
                let a = &pts[f.idx[0]] - &centroid;
                let b = &pts[f.idx[1]] - &centroid;
                let c = &pts[f.idx[2]] - &centroid;
                let det = a[0] * (b[1] * c[2] - b[2] * c[1]) - a[1] * (b[0] * c[2] - b[2] * c[0])
                    + a[2] * (b[0] * c[1] - b[1] * c[0]);
                acc += det.abs();
            }
            Ok(acc / 6.0)
        }
        d => Err(GeometryError::UnsupportedDimension(d)),
    }
}

// ---------------------------------------------------------------------------
// Serialization: {"H": [[...]], "h": [...]} or {"V": [[...]]}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
pub enum PolytopeData {
    Facet {
        #[serde(rename = "H")]
        normals: Vec<Vec<f64>>,
        #[serde(rename = "h")]
        offsets: Vec<f64>,
    },
    Vertex {
        #[serde(rename = "V")]
        vertices: Vec<Vec<f64>>,
    },
}

impl PolytopeData {
    pub fn into_hpolytope(self) -> Result<HPolytope> {
        match self {
            PolytopeData::Facet { normals, offsets } => {
                let m = normals.len();
                let dim = normals.first().map(|r| r.len()).unwrap_or(0);
                let flat: Vec<f64> = normals.into_iter().flatten().collect();
                if flat.len() != m * dim {
                    return Err(GeometryError::DimensionMismatch("ragged facet matrix".into()));
                }
                HPolytope::new(DMatrix::from_row_slice(m, dim, &flat), DVector::from_vec(offsets))
            }
            PolytopeData::Vertex { .. } => Err(GeometryError::DimensionMismatch(
                "expected facet form, found vertex form".into(),
            )),
        }
    }

    pub fn into_vpolytope(self) -> Result<VPolytope> {
        match self {
            PolytopeData::Vertex { vertices } => {
                VPolytope::new(vertices.into_iter().map(DVector::from_vec).collect())
            }
            PolytopeData::Facet { .. } => Err(GeometryError::DimensionMismatch(
                "expected vertex form, found facet form".into(),
            )),
        }
    }

    /// Either representation, as a support-capable set.
    pub fn into_either(self) -> Result<EitherPolytope> {
        Ok(match self {
            PolytopeData::Facet { .. } => EitherPolytope::Facet(self.into_hpolytope()?),
            PolytopeData::Vertex { .. } => EitherPolytope::Vertex(self.into_vpolytope()?),
        })
    }
}

#[derive(Debug, Clone)]
pub enum EitherPolytope {
    Facet(HPolytope),
    Vertex(VPolytope),
}

impl SupportSet for EitherPolytope {
    fn dim(&self) -> usize {
        match self {
            EitherPolytope::Facet(p) => p.dim(),
            EitherPolytope::Vertex(p) => p.dim(),
        }
    }
    fn support(&self, d: &DVector<f64>, oracle: &impl LpOracle) -> Result<f64> {
        match self {
            EitherPolytope::Facet(p) => p.support(d, oracle),
            EitherPolytope::Vertex(p) => p.support(d, oracle),
        }
    }
}

impl From<&HPolytope> for PolytopeData {
    fn from(p: &HPolytope) -> Self {
        PolytopeData::Facet {
            normals: (0..p.num_facets())
                .map(|i| p.normals.row(i).iter().copied().collect())
                .collect(),
            offsets: p.offsets.iter().copied().collect(),
        }
    }
}

impl From<&VPolytope> for PolytopeData {
    fn from(p: &VPolytope) -> Self {
        PolytopeData::Vertex {
            vertices: p.vertices.iter().map(|v| v.iter().copied().collect()).collect(),
        }
    }
}

impl Serialize for HPolytope {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        PolytopeData::from(self).serialize(s)
    }
}

impl<'de> Deserialize<'de> for HPolytope {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        PolytopeData::deserialize(d)?.into_hpolytope().map_err(serde::de::Error::custom)
    }
}

impl Serialize for VPolytope {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        PolytopeData::from(self).serialize(s)
    }
}

impl<'de> Deserialize<'de> for VPolytope {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        PolytopeData::deserialize(d)?.into_vpolytope().map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{dmatrix, dvector};

    fn lp() -> SimplexLp {
        SimplexLp::default()
    }

    fn vbox2(half: f64) -> VPolytope {
        VPolytope::new(vec![
            dvector![-half, -half],
            dvector![half, -half],
            dvector![half, half],
            dvector![-half, half],
        ])
        .unwrap()
    }

    #[test]
    fn support_box_axes() {
        let b = HPolytope::symmetric_box(2, 1.0);
        let s = b.support(&dvector![1.0, 0.0], &lp()).unwrap();
        assert!((s - 1.0).abs() < 1e-9);
        let b2 = HPolytope::symmetric_box(2, 2.0);
        let s2 = b2.support(&dvector![1.0, 1.0], &lp()).unwrap();
        assert!((s2 - 4.0).abs() < 1e-9);
    }

    #[test]
    fn minkowski_box_doubling() {
        let s = minkowski_sum(&vbox2(1.0), &vbox2(1.0)).unwrap();
        assert_eq!(s.num_vertices(), 4);
        let sup = s.support(&dvector![1.0, 1.0], &lp()).unwrap();
        assert!((sup - 4.0).abs() < 1e-12);
    }

    #[test]
    fn minkowski_identity_element() {
        let p = vbox2(1.5);
        let z = VPolytope::origin(2);
        let s = minkowski_sum(&p, &z).unwrap();
        assert_eq!(s.num_vertices(), 4);
        for v in s.vertices() {
            assert!(p.vertices().iter().any(|w| (w - v).norm() < 1e-12));
        }
    }

    #[test]
    fn pontryagin_axis_shrink() {
        let a = HPolytope::symmetric_box(2, 2.0);
        let b = vbox2(1.0);
        let d = pontryagin_diff(&a, &b, &lp()).unwrap();
        let expect = HPolytope::symmetric_box(2, 1.0);
        assert!(set_equal(&d, &expect, &lp()).unwrap());
    }

    #[test]
    fn scaled_diff_identity_and_symmetric() {
        let a = HPolytope::symmetric_box(2, 1.0);
        let id = scaled_diff(&a, 1.0, &vbox2(1.0), 0.0, &lp()).unwrap();
        assert!(set_equal(&id, &a, &lp()).unwrap());
        // 2A (-) A = A for origin-symmetric A.
        let two_minus_one = scaled_diff(&a, 2.0, &vbox2(1.0), 1.0, &lp()).unwrap();
        assert!(set_equal(&two_minus_one, &a, &lp()).unwrap());
        assert!(scaled_diff(&a, -1.0, &vbox2(1.0), 0.0, &lp()).is_err());
    }

    #[test]
    fn scaled_diff_collapse_to_origin() {
        let a = HPolytope::symmetric_box(2, 1.0);
        let zero = scaled_diff(&a, 0.0, &vbox2(1.0), 0.0, &lp()).unwrap();
        let verts = vertex_enum(&zero, &lp()).unwrap();
        for v in verts.vertices() {
            assert!(v.norm() < 1e-6);
        }
    }

    #[test]
    fn linear_map_cases() {
        let p = vbox2(1.0);
        let id = linear_map(&DMatrix::identity(2, 2), &p).unwrap();
        assert_eq!(id.num_vertices(), 4);
        let doubled = linear_map(&(DMatrix::identity(2, 2) * 2.0), &p).unwrap();
        let sup = doubled.support(&dvector![1.0, 0.0], &lp()).unwrap();
        assert!((sup - 2.0).abs() < 1e-12);
        // Rank-deficient projection becomes a segment.
        let proj = linear_map(&dmatrix![1.0, 0.0], &p).unwrap();
        assert_eq!(proj.num_vertices(), 2);
        assert_eq!(proj.dim(), 1);
    }

    #[test]
    fn intersect_and_empty_flag() {
        let a = HPolytope::symmetric_box(2, 2.0);
        let b = HPolytope::symmetric_box(2, 1.0);
        let i = intersect(&a, &b, &lp()).unwrap();
        assert!(set_equal(&i, &b, &lp()).unwrap());
        assert!(set_equal(&intersect(&a, &a, &lp()).unwrap(), &a, &lp()).unwrap());

        let left = HPolytope::from_bounds(&[-2.0, -1.0], &[-1.0, 1.0]).unwrap();
        let right = HPolytope::from_bounds(&[1.0, -1.0], &[2.0, 1.0]).unwrap();
        let empty = left.stacked(&right).unwrap();
        assert!(empty.is_empty(&lp()).unwrap());
    }

    #[test]
    fn containment_and_scale() {
        let small = HPolytope::symmetric_box(2, 1.0);
        let big = HPolytope::symmetric_box(2, 2.0);
        assert!(contains_set(&big, &small, &lp()).unwrap());
        assert!(!contains_set(&small, &big, &lp()).unwrap());
        assert!(contains_set(&small, &small, &lp()).unwrap());

        assert!((min_scale_containment(&big, &small, &lp()).unwrap() - 2.0).abs() < 1e-9);
        assert!((min_scale_containment(&small, &small, &lp()).unwrap() - 1.0).abs() < 1e-9);
        let origin = VPolytope::origin(2);
        assert!(min_scale_containment(&origin, &small, &lp()).unwrap().abs() < 1e-12);
    }

    #[test]
    fn set_equal_scale_sensitivity() {
        let a = HPolytope::symmetric_box(2, 1.0);
        let b = a.scaled(1.001).unwrap();
        assert!(set_equal(&a, &a, &lp()).unwrap());
        assert!(!set_equal(&a, &b, &lp()).unwrap());
    }

    #[test]
    fn vertex_enum_unit_box_and_simplex() {
        let b = HPolytope::symmetric_box(2, 1.0);
        let v = vertex_enum(&b, &lp()).unwrap();
        assert_eq!(v.num_vertices(), 4);
        let f = facet_enum(&v).unwrap();
        assert_eq!(f.num_facets(), 4);
        assert!(set_equal(&f, &b, &lp()).unwrap());

        let simplex = VPolytope::new(vec![
            dvector![0.0, 0.0],
            dvector![1.0, 0.0],
            dvector![0.0, 1.0],
        ])
        .unwrap();
        let fs = facet_enum(&simplex).unwrap();
        assert_eq!(fs.num_facets(), 3);
    }

    #[test]
    fn vertex_enum_unbounded_reports() {
        let half = HPolytope::from_rows(&[(dvector![1.0, 0.0], 1.0)]).unwrap();
        assert!(matches!(vertex_enum(&half, &lp()), Err(GeometryError::Unbounded)));
    }

    #[test]
    fn volume_boxes() {
        assert!((volume(&vbox2(1.0)).unwrap() - 4.0).abs() < 1e-12);
        let mut verts = Vec::new();
        for sx in [-1.0f64, 1.0] {
            for sy in [-1.0f64, 1.0] {
                for sz in [-1.0f64, 1.0] {
                    verts.push(dvector![sx, sy, sz]);
                }
            }
        }
        let cube = VPolytope::new(verts).unwrap();
        assert!((volume(&cube).unwrap() - 8.0).abs() < 1e-9);
        // Degenerate segment has zero area.
        let seg = VPolytope::new(vec![dvector![0.0, 0.0], dvector![1.0, 1.0]]).unwrap();
        assert_eq!(volume(&seg).unwrap(), 0.0);
    }

    #[test]
    fn json_round_trip_bit_stable() {
        let p = HPolytope::from_rows(&[
            (dvector![1.0, 0.1234567890123456], 0.30000000000000004),
            (dvector![-1.0, 2.5e-17], 1.0),
        ])
        .unwrap();
        let s1 = serde_json::to_string(&p).unwrap();
        let q: HPolytope = serde_json::from_str(&s1).unwrap();
        let s2 = serde_json::to_string(&q).unwrap();
        assert_eq!(s1, s2);
        assert_eq!(p, q);

        let v = VPolytope::new(vec![dvector![0.1 + 0.2, -3.0]]).unwrap();
        let s1 = serde_json::to_string(&v).unwrap();
        let w: VPolytope = serde_json::from_str(&s1).unwrap();
        assert_eq!(serde_json::to_string(&w).unwrap(), s1);
    }

    #[test]
    fn zero_row_rejected() {
        let r = HPolytope::new(DMatrix::zeros(1, 2), dvector![1.0]);
        assert!(matches!(r, Err(GeometryError::ZeroRow(0))));
    }
}
