//! Convex-hull helpers behind vertex canonicalization, facet enumeration,
//! and volume computation. Dimensions up to 4 are enough for the pipeline
//! (state spaces of 2-3 states plus one input).

use nalgebra::{DMatrix, DVector};

use super::lp::{LpOracle, LpOutcome, LpProblem, SimplexLp};

/// Relative vertex-dedup tolerance (scaled by the bounding-box diameter).
pub const DEDUP_TOL: f64 = 1e-8;

/// Bounding-box diameter of a point cloud; 1.0 floor keeps tolerances sane
/// for clouds collapsed near the origin.
pub fn cloud_scale(points: &[DVector<f64>]) -> f64 {
    if points.is_empty() {
        return 1.0;
    }
    let dim = points[0].len();
    let mut diam2: f64 = 0.0;
    for k in 0..dim {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for p in points {
            lo = lo.min(p[k]);
            hi = hi.max(p[k]);
        }
        diam2 += (hi - lo).powi(2);
    }
    diam2.sqrt().max(1.0)
}

pub fn dedup_points(points: &[DVector<f64>], scale: f64) -> Vec<DVector<f64>> {
    let tol = DEDUP_TOL * scale;
    let mut out: Vec<DVector<f64>> = Vec::with_capacity(points.len());
    for p in points {
        if !out.iter().any(|q| (p - q).norm() <= tol) {
            out.push(p.clone());
        }
    }
    out
}

/// Affine rank of a point cloud together with an orthonormal basis of the
/// affine hull directions (Gram-Schmidt with a relative threshold).
pub fn affine_rank(points: &[DVector<f64>], scale: f64) -> (usize, Vec<DVector<f64>>) {
    let tol = 1e-9 * scale;
    let mut basis: Vec<DVector<f64>> = Vec::new();
    if points.len() < 2 {
        return (0, basis);
    }
    let p0 = &points[0];
    for p in &points[1..] {
        let mut v = p - p0;
        for b in &basis {
            let c = v.dot(b);
            v -= b * c;
        }
        let n = v.norm();
        if n > tol {
            basis.push(v / n);
        }
        if basis.len() == p0.len() {
            break;
        }
    }
    (basis.len(), basis)
}

/// Andrew's monotone chain; returns the hull in counter-clockwise order with
/// strictly convex turns (collinear interior points removed).
pub fn hull_2d(points: &[DVector<f64>], scale: f64) -> Vec<DVector<f64>> {
    let tol = 1e-12 * scale * scale;
    let mut pts = dedup_points(points, scale);
    pts.sort_by(|a, b| {
        a[0].partial_cmp(&b[0])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a[1].partial_cmp(&b[1]).unwrap_or(std::cmp::Ordering::Equal))
    });
    if pts.len() <= 2 {
        return pts;
    }
    let cross = |o: &DVector<f64>, a: &DVector<f64>, b: &DVector<f64>| -> f64 {
        (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
    };
    let mut lower: Vec<DVector<f64>> = Vec::new();
    for p in &pts {
        while lower.len() >= 2 && cross(&lower[lower.len() - 2], &lower[lower.len() - 1], p) <= tol
        {
            lower.pop();
        }
        lower.push(p.clone());
    }
    let mut upper: Vec<DVector<f64>> = Vec::new();
    for p in pts.iter().rev() {
        while upper.len() >= 2 && cross(&upper[upper.len() - 2], &upper[upper.len() - 1], p) <= tol
        {
            upper.pop();
        }
        upper.push(p.clone());
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    lower
}

/// Triangular face of a 3D hull, outward-oriented.
#[derive(Debug, Clone)]
pub struct Face3 {
    pub idx: [usize; 3],
    pub normal: DVector<f64>,
    pub offset: f64,
}

/// Incremental 3D convex hull over deduplicated points. Returns the faces and
/// the indices of points that appear on the hull. `None` when the cloud is not
/// full-dimensional.
pub fn hull_3d(points: &[DVector<f64>], scale: f64) -> Option<(Vec<Face3>, Vec<usize>)> {
    let pts = points;
    let n = pts.len();
    if n < 4 {
        return None;
    }
    let tol = 1e-9 * scale;

    // Seed tetrahedron: spread pair, then max-area, then max-volume.
    let (mut i0, mut i1) = (0, 1);
    let mut best = -1.0;
    for a in 0..n {
        for b in (a + 1)..n {
            let d = (&pts[a] - &pts[b]).norm();
            if d > best {
                best = d;
                i0 = a;
                i1 = b;
            }
        }
    }
    if best <= tol {
        return None;
    }
    let e0 = &pts[i1] - &pts[i0];
    let mut i2 = usize::MAX;
    best = tol * scale; // area scale
    for c in 0..n {
        let v = &pts[c] - &pts[i0];
        let cr = cross3(&e0, &v);
        if cr.norm() > best {
            best = cr.norm();
            i2 = c;
        }
    }
    if i2 == usize::MAX {
        return None;
    }
    let nrm = cross3(&e0, &(&pts[i2] - &pts[i0]));
    let mut i3 = usize::MAX;
    best = tol * scale * scale; // volume scale
    for d in 0..n {
        let v = (&pts[d] - &pts[i0]).dot(&nrm).abs();
        if v > best {
            best = v;
            i3 = d;
        }
    }
    if i3 == usize::MAX {
        return None;
    }

    let interior = (&pts[i0] + &pts[i1] + &pts[i2] + &pts[i3]) / 4.0;
    let mut faces: Vec<Face3> = Vec::new();
    for tri in [[i0, i1, i2], [i0, i1, i3], [i0, i2, i3], [i1, i2, i3]] {
        faces.push(make_face(pts, tri, &interior));
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.retain(|&i| i != i0 && i != i1 && i != i2 && i != i3);
    for &p in &order {
        let visible: Vec<usize> = (0..faces.len())
            .filter(|&fi| faces[fi].normal.dot(&pts[p]) - faces[fi].offset > tol)
            .collect();
        if visible.is_empty() {
            continue;
        }
        // Horizon: directed edges of visible faces whose reverse edge is not
        // part of another visible face.
        let mut edges: Vec<(usize, usize)> = Vec::new();
        for &fi in &visible {
            let [a, b, c] = faces[fi].idx;
            for (u, v) in [(a, b), (b, c), (c, a)] {
                if let Some(pos) = edges.iter().position(|&(x, y)| x == v && y == u) {
                    edges.remove(pos);
                } else {
                    edges.push((u, v));
                }
            }
        }
        let mut keep: Vec<Face3> = Vec::new();
        for (fi, f) in faces.iter().enumerate() {
            if !visible.contains(&fi) {
                keep.push(f.clone());
            }
        }
        for (u, v) in edges {
            keep.push(make_face(pts, [u, v, p], &interior));
        }
        faces = keep;
    }

    let mut on_hull: Vec<usize> = faces.iter().flat_map(|f| f.idx).collect();
    on_hull.sort_unstable();
    on_hull.dedup();
    Some((faces, on_hull))
}

fn make_face(pts: &[DVector<f64>], idx: [usize; 3], interior: &DVector<f64>) -> Face3 {
    // Index order and outward normal stay consistent (right-hand rule), so
    // directed-edge cancellation in the horizon walk remains valid.
    let mut idx = idx;
    let [a, b, c] = idx;
    let ab = &pts[b] - &pts[a];
    let ac = &pts[c] - &pts[a];
    let mut normal = cross3(&ab, &ac);
    let nn = normal.norm();
    if nn > 0.0 {
        normal /= nn;
    }
    let mut offset = normal.dot(&pts[a]);
    if normal.dot(interior) > offset {
        normal = -normal;
        offset = -offset;
        idx.swap(1, 2);
    }
    Face3 { idx, normal, offset }
}

fn cross3(a: &DVector<f64>, b: &DVector<f64>) -> DVector<f64> {
    DVector::from_vec(vec![
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ])
}

/// Extreme points of a cloud by convex-combination LP filtering: a point is
/// kept iff it cannot be written as a convex combination of the others. Used
/// for ranks/dimensions where no direct hull routine applies.
pub fn extreme_points_lp(points: &[DVector<f64>]) -> Vec<DVector<f64>> {
    let oracle = SimplexLp::default();
    let n = points.len();
    if n <= 2 {
        return points.to_vec();
    }
    let dim = points[0].len();
    let mut keep: Vec<bool> = vec![true; n];
    for i in 0..n {
        let others: Vec<usize> = (0..n).filter(|&j| j != i && keep[j]).collect();
        if others.len() < 2 {
            continue;
        }
        // Feasibility: sum_j a_j p_j = p_i, sum a_j = 1, a >= 0.
        let mut eq = DMatrix::zeros(dim + 1, others.len());
        let mut rhs = DVector::zeros(dim + 1);
        for (cj, &j) in others.iter().enumerate() {
            for r in 0..dim {
                eq[(r, cj)] = points[j][r];
            }
            eq[(dim, cj)] = 1.0;
        }
        for r in 0..dim {
            rhs[r] = points[i][r];
        }
        rhs[dim] = 1.0;
        let mut g = DMatrix::zeros(others.len(), others.len());
        for j in 0..others.len() {
            g[(j, j)] = -1.0;
        }
        let mut p = LpProblem::new(DVector::zeros(others.len()), g, DVector::zeros(others.len()));
        p.eq_rows = Some(eq);
        p.eq_rhs = Some(rhs);
        if let Ok(LpOutcome::Optimal { .. }) = oracle.solve_lp(&p) {
            keep[i] = false;
        }
    }
    (0..n).filter(|&i| keep[i]).map(|i| points[i].clone()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dvector;

    #[test]
    fn chain_square() {
        let pts = vec![
            dvector![0.0, 0.0],
            dvector![1.0, 0.0],
            dvector![1.0, 1.0],
            dvector![0.0, 1.0],
            dvector![0.5, 0.5],
            dvector![0.5, 0.0], // collinear on an edge
        ];
        let h = hull_2d(&pts, cloud_scale(&pts));
        assert_eq!(h.len(), 4);
    }

    #[test]
    fn hull3d_cube() {
        let mut pts = Vec::new();
        for sx in [-1.0, 1.0] {
            for sy in [-1.0, 1.0] {
                for sz in [-1.0, 1.0] {
                    pts.push(dvector![sx, sy, sz]);
                }
            }
        }
        pts.push(dvector![0.0, 0.0, 0.0]);
        let (faces, on_hull) = hull_3d(&pts, cloud_scale(&pts)).unwrap();
        assert_eq!(on_hull.len(), 8);
        assert_eq!(faces.len(), 12); // triangulated cube
        for f in &faces {
            for p in &pts {
                assert!(f.normal.dot(p) <= f.offset + 1e-9);
            }
        }
    }

    #[test]
    fn degenerate_plane_rejected() {
        let pts = vec![
            dvector![0.0, 0.0, 0.0],
            dvector![1.0, 0.0, 0.0],
            dvector![0.0, 1.0, 0.0],
            dvector![1.0, 1.0, 0.0],
        ];
        assert!(hull_3d(&pts, cloud_scale(&pts)).is_none());
    }

    #[test]
    fn lp_filter_keeps_extremes() {
        let pts = vec![
            dvector![0.0, 0.0],
            dvector![2.0, 0.0],
            dvector![0.0, 2.0],
            dvector![0.5, 0.5],
        ];
        let ex = extreme_points_lp(&pts);
        assert_eq!(ex.len(), 3);
    }

    #[test]
    fn rank_detection() {
        let pts = vec![dvector![0.0, 0.0], dvector![1.0, 1.0], dvector![2.0, 2.0]];
        let (r, _) = affine_rank(&pts, cloud_scale(&pts));
        assert_eq!(r, 1);
    }
}
