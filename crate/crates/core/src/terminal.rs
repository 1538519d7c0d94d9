//! Terminal-set synthesis.
//!
//! The terminal set is the output-admissible set of the closed loop under
//! the combined disturbance `W (+) gamma * P_delta Z_m`: admissible, bounded
//! by a scaled copy of the container slice, and one-step robust invariant.
//! It is computed by the recursive algorithm with gamma updating: whenever a
//! new iterate fits a strictly smaller scaled slice, the scale is reduced and
//! the recursion restarts, which shrinks the disturbance bound as well.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::container::ContainerSpec;
use crate::geometry::{
    intersect, linear_map, min_scale_containment, minkowski_sum, redundancy_removed, set_equal,
    GeometryError, HPolytope, LpOracle, SupportSet, VPolytope,
};
use crate::model::{ModelError, UncertainSystem};

#[derive(Debug, Error)]
pub enum TerminalError {
    #[error("no admissible initial scale: lower bound {lo} exceeds upper bound {hi}")]
    NoAdmissibleGamma { lo: f64, hi: f64 },
    #[error("terminal set became empty at recursion step {0}")]
    EmptyTerminalSet(usize),
    #[error("iteration cap {cap} reached; scale trace: {trace:?}")]
    IterationCap { cap: usize, trace: Vec<f64> },
    #[error("no finite steady-state container scale (a slice facet is saturated)")]
    NoFiniteLambda,
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Admissible interval for the initial scale. `hi_slice` caps the scaled
/// slice inside the admissible states; `hi_disturbance` keeps the one-step
/// disturbance reach inside them; `lo` is the self-consistency lower bound.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GammaBounds {
    pub lo: f64,
    pub hi: f64,
    pub hi_slice: f64,
    pub hi_disturbance: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TerminalSet {
    pub s_inf: HPolytope,
    pub gamma_inf: f64,
    /// Steady-state container scale from the truncated invariant-set bound.
    pub lambda_inf: f64,
    pub iterations: usize,
    pub gamma_trace: Vec<f64>,
    /// Recursion iterates of the final (converged) pass, recorded on demand.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub set_trace: Vec<HPolytope>,
}

#[derive(Debug, Clone)]
pub struct TerminalOptions {
    /// Restart threshold on a strict scale decrease.
    pub gamma_decrease_tol: f64,
    pub iteration_cap: usize,
    /// Keep the iterates of the converged pass in `set_trace`.
    pub record_sets: bool,
    /// Truncation depth for the steady-state scale.
    pub lambda_k_max: usize,
}

impl Default for TerminalOptions {
    fn default() -> Self {
        Self { gamma_decrease_tol: 1e-9, iteration_cap: 500, record_sets: false, lambda_k_max: 30 }
    }
}

/// Interval of initial scales for which the recursion can return a nonempty
/// set (necessary, not sufficient).
pub fn gamma_bounds(
    sys: &UncertainSystem,
    container: &ContainerSpec,
    oracle: &impl LpOracle,
) -> Result<GammaBounds, TerminalError> {
    let x_xu = sys.admissible_states(oracle)?;
    let x_m = &container.x_m;
    let w = &sys.w_vertices;
    let pz = &container.pz_m_vertices;

    let hi_slice = match min_scale_containment(&x_xu, x_m, oracle) {
        Ok(g) => g,
        Err(GeometryError::Unbounded) => f64::INFINITY,
        Err(e) => return Err(e.into()),
    };

    let mut hi_disturbance = f64::INFINITY;
    for i in 0..x_xu.num_facets() {
        let r = x_xu.row(i);
        let sp = pz.support(&r, oracle)?;
        if sp > 1e-14 {
            let margin = x_xu.offsets()[i] - w.support(&r, oracle)?;
            hi_disturbance = hi_disturbance.min(margin / sp);
        }
    }

    let mut lo: f64 = 0.0;
    for i in 0..x_m.num_facets() {
        let r = x_m.row(i);
        let denom = x_m.offsets()[i] - pz.support(&r, oracle)?;
        let sw = w.support(&r, oracle)?;
        if denom <= 1e-14 {
            if sw > 1e-14 {
                lo = f64::INFINITY;
            }
        } else {
            lo = lo.max(sw / denom);
        }
    }

    let hi = hi_slice.min(hi_disturbance);
    if lo > hi {
        return Err(TerminalError::NoAdmissibleGamma { lo, hi });
    }
    Ok(GammaBounds { lo, hi, hi_slice, hi_disturbance })
}

/// One recursion step: `{x in S0 | A_cl x (+) offset_set inside S_prev}`
/// in facet form, redundancy-removed. `delta` carries the per-facet support
/// of the offset set against `S_prev`.
fn recursion_step(
    s0: &HPolytope,
    s_prev: &HPolytope,
    a_cl: &DMatrix<f64>,
    delta: &DVector<f64>,
    oracle: &impl LpOracle,
) -> Result<Option<HPolytope>, TerminalError> {
    let composed = s_prev.normals() * a_cl;
    let mut rows: Vec<(DVector<f64>, f64)> = Vec::new();
    for i in 0..s0.num_facets() {
        rows.push((s0.row(i), s0.offsets()[i]));
    }
    for i in 0..composed.nrows() {
        let r = composed.row(i).transpose();
        let b = s_prev.offsets()[i] - delta[i];
        if r.norm() <= 1e-12 {
            if b < -1e-12 {
                return Ok(None);
            }
            continue;
        }
        rows.push((r, b));
    }
    let stacked = HPolytope::from_rows(&rows)?;
    if stacked.is_empty(oracle)? {
        return Ok(None);
    }
    Ok(Some(redundancy_removed(&stacked, oracle)?))
}

fn combined_delta(
    target: &HPolytope,
    w: &VPolytope,
    pz: &VPolytope,
    gamma: f64,
    oracle: &impl LpOracle,
) -> Result<DVector<f64>, TerminalError> {
    let mut delta = DVector::zeros(target.num_facets());
    for i in 0..target.num_facets() {
        let r = target.row(i);
        delta[i] = w.support(&r, oracle)? + gamma * pz.support(&r, oracle)?;
    }
    Ok(delta)
}

/// Fixed-scale admissible-set chain `S_0, S_1, ...` (no scale updates),
/// stopping at convergence or after `n_max` steps. The disturbance bound is
/// `W (+) gamma * md_bound`.
pub fn admissible_chain(
    sys: &UncertainSystem,
    x_m: &HPolytope,
    md_bound: &VPolytope,
    gamma: f64,
    n_max: usize,
    oracle: &impl LpOracle,
) -> Result<Vec<HPolytope>, TerminalError> {
    let x_xu = sys.admissible_states(oracle)?;
    let a_cl = sys.a_cl();
    let s0 = intersect(&x_m.scaled(gamma)?, &x_xu, oracle)?;
    if s0.is_empty(oracle)? {
        return Err(TerminalError::EmptyTerminalSet(0));
    }
    let mut chain = vec![s0.clone()];
    for n in 1..=n_max {
        let prev = chain.last().unwrap();
        let delta = combined_delta(prev, &sys.w_vertices, md_bound, gamma, oracle)?;
        let Some(next) = recursion_step(&s0, prev, &a_cl, &delta, oracle)? else {
            return Err(TerminalError::EmptyTerminalSet(n));
        };
        let converged = set_equal(&next, prev, oracle)?;
        chain.push(next);
        if converged {
            break;
        }
    }
    Ok(chain)
}

/// Output-admissible terminal set with scale updating, following the
/// recursive algorithm literally: restart from scratch whenever the iterate
/// fits a strictly smaller scaled slice.
pub fn output_admissible_set(
    sys: &UncertainSystem,
    container: &ContainerSpec,
    gamma0: f64,
    opts: &TerminalOptions,
    oracle: &impl LpOracle,
) -> Result<TerminalSet, TerminalError> {
    let x_xu = sys.admissible_states(oracle)?;
    let x_m = &container.x_m;
    let w = &sys.w_vertices;
    let pz = &container.pz_m_vertices;
    let a_cl = sys.a_cl();

    let mut gamma = gamma0;
    let mut gamma_trace = vec![gamma];
    let mut total_iterations = 0usize;

    'outer: loop {
        let s0 = intersect(&x_m.scaled(gamma)?, &x_xu, oracle)?;
        if s0.is_empty(oracle)? {
            return Err(TerminalError::EmptyTerminalSet(0));
        }
        let mut chain = vec![s0.clone()];
        loop {
            total_iterations += 1;
            if total_iterations > opts.iteration_cap {
                return Err(TerminalError::IterationCap {
                    cap: opts.iteration_cap,
                    trace: gamma_trace,
                });
            }
            let prev = chain.last().unwrap();
            let delta = combined_delta(prev, w, pz, gamma, oracle)?;
            let n = chain.len();
            let Some(next) = recursion_step(&s0, prev, &a_cl, &delta, oracle)? else {
                return Err(TerminalError::EmptyTerminalSet(n));
            };
            let gamma_n = min_scale_containment(&next, x_m, oracle)?;
            if gamma_n < gamma - opts.gamma_decrease_tol {
                gamma = gamma_n;
                gamma_trace.push(gamma);
                continue 'outer;
            }
            let converged = set_equal(&next, prev, oracle)?;
            chain.push(next);
            if converged {
                let s_inf = chain.pop().unwrap();
                let gamma_inf = min_scale_containment(&s_inf, x_m, oracle)?;
                let lambda = lambda_infinity(sys, container, opts.lambda_k_max, oracle)?;
                return Ok(TerminalSet {
                    s_inf,
                    gamma_inf,
                    lambda_inf: lambda.value,
                    iterations: total_iterations,
                    gamma_trace,
                    set_trace: if opts.record_sets { chain } else { Vec::new() },
                });
            }
        }
    }
}

/// Steady-state container scale from truncated disturbance-reach sums,
/// together with an a-posteriori truncation residual bound.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LambdaInfinity {
    pub value: f64,
    /// `||A_cl^k||_2 * diam(W (+) lambda PZ_m)`: scale of the neglected tail.
    pub truncation_residual: f64,
    pub k_max: usize,
}

pub fn lambda_infinity(
    sys: &UncertainSystem,
    container: &ContainerSpec,
    k_max: usize,
    oracle: &impl LpOracle,
) -> Result<LambdaInfinity, TerminalError> {
    let k_max = k_max.max(1);
    let x_m = &container.x_m;
    let a_cl = sys.a_cl();
    let (f_w, f_p) = truncated_reach_sums(sys, &container.pz_m_vertices, k_max)?;

    let mut lambda: f64 = 0.0;
    for i in 0..x_m.num_facets() {
        let r = x_m.row(i);
        let denom = x_m.offsets()[i] - f_p.support(&r, oracle)?;
        let num = f_w.support(&r, oracle)?;
        if denom <= 1e-14 {
            if num > 1e-14 {
                return Err(TerminalError::NoFiniteLambda);
            }
        } else {
            lambda = lambda.max(num / denom);
        }
    }

    let combined = minkowski_sum(&f_w, &f_p.scaled(lambda)?)?;
    let diam = 2.0
        * combined.vertices().iter().map(|v| v.norm()).fold(0.0, f64::max);
    let mut pow = DMatrix::identity(a_cl.nrows(), a_cl.ncols());
    for _ in 0..k_max {
        pow = &pow * &a_cl;
    }
    let spectral = pow.singular_values().max();
    Ok(LambdaInfinity { value: lambda, truncation_residual: spectral * diam, k_max })
}

/// `(sum_{i<k} A^i W, sum_{i<k} A^i PZ)` as vertex polytopes.
pub fn truncated_reach_sums(
    sys: &UncertainSystem,
    pz: &VPolytope,
    k_max: usize,
) -> Result<(VPolytope, VPolytope), TerminalError> {
    let a_cl = sys.a_cl();
    let n = sys.state_dim();
    let mut f_w = sys.w_vertices.clone();
    let mut f_p = pz.clone();
    let mut pow = DMatrix::identity(n, n);
    for _ in 1..k_max {
        pow = &pow * &a_cl;
        f_w = minkowski_sum(&f_w, &linear_map(&pow, &sys.w_vertices)?)?;
        f_p = minkowski_sum(&f_p, &linear_map(&pow, pz)?)?;
    }
    Ok((f_w, f_p))
}

/// Truncated minimal disturbance invariant set `sum_{i<k} A^i (W (+) s*PZ)`;
/// the closed loop converges to a neighborhood of this set.
pub fn truncated_invariant_set(
    sys: &UncertainSystem,
    pz: &VPolytope,
    scale: f64,
    k_max: usize,
) -> Result<VPolytope, TerminalError> {
    let step = minkowski_sum(&sys.w_vertices, &pz.scaled(scale)?)?;
    let a_cl = sys.a_cl();
    let mut acc = step.clone();
    let mut pow = DMatrix::identity(sys.state_dim(), sys.state_dim());
    for _ in 1..k_max {
        pow = &pow * &a_cl;
        acc = minkowski_sum(&acc, &linear_map(&pow, &step)?)?;
    }
    Ok(acc)
}

/// One-step robust invariance of the terminal set: every vertex maps into it
/// together with the full disturbance bound.
pub fn check_invariance(
    ts: &TerminalSet,
    sys: &UncertainSystem,
    container: &ContainerSpec,
    oracle: &impl LpOracle,
) -> Result<bool, TerminalError> {
    let verts = crate::geometry::vertex_enum(&ts.s_inf, oracle)?;
    let bound = minkowski_sum(
        &sys.w_vertices,
        &container.pz_m_vertices.scaled(ts.gamma_inf)?,
    )?;
    let a_cl = sys.a_cl();
    for x in verts.vertices() {
        let shifted = bound.translated(&(&a_cl * x))?;
        if !crate::geometry::contains_set(&ts.s_inf, &shifted, oracle)? {
            return Ok(false);
        }
    }
    Ok(true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::container::{default_container, ContainerSpec};
    use crate::geometry::{contains_set, SimplexLp};
    use crate::model::UncertainSystem;

    const SEC5_SYSTEM: &str =
        include_str!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/paper_sec5_system.json"));

    fn setup() -> (UncertainSystem, ContainerSpec, SimplexLp) {
        let sys = UncertainSystem::from_json_str(SEC5_SYSTEM).unwrap();
        let oracle = SimplexLp::default();
        let z0 = default_container(2, 1, (5, 5));
        let spec = ContainerSpec::from_vertices(&sys, &z0, &oracle).unwrap();
        (sys, spec, oracle)
    }

    #[test]
    fn gamma_interval_contains_ten() {
        let (sys, spec, oracle) = setup();
        let b = gamma_bounds(&sys, &spec, &oracle).unwrap();
        assert!(b.lo < b.hi);
        assert!(b.lo > 0.0);
        assert!(b.lo < 10.0 && 10.0 < b.hi, "interval [{}, {}]", b.lo, b.hi);
    }

    #[test]
    fn zero_disturbance_gamma_bounds() {
        let (mut sys, _, oracle) = setup();
        // Collapse both disturbances.
        sys.w_vertices = VPolytope::origin(2);
        sys.dp_vertices = vec![nalgebra::DMatrix::zeros(2, 3)];
        let z0 = default_container(2, 1, (5, 5));
        let spec = ContainerSpec::from_vertices(&sys, &z0, &oracle).unwrap();
        let b = gamma_bounds(&sys, &spec, &oracle).unwrap();
        assert_eq!(b.lo, 0.0);
        assert!(b.hi_disturbance.is_infinite());
        assert!((b.hi - b.hi_slice).abs() < 1e-12);
    }

    #[test]
    fn sec5_terminal_set_satisfies_a5() {
        let (sys, spec, oracle) = setup();
        let opts = TerminalOptions { record_sets: true, ..Default::default() };
        let ts = output_admissible_set(&sys, &spec, 10.0, &opts, &oracle).unwrap();
        assert!(!ts.s_inf.is_empty(&oracle).unwrap());

        // Admissibility and scale-boundedness.
        let x_xu = sys.admissible_states(&oracle).unwrap();
        assert!(contains_set(&x_xu, &ts.s_inf, &oracle).unwrap());
        let g = min_scale_containment(&ts.s_inf, &spec.x_m, &oracle).unwrap();
        assert!((g - ts.gamma_inf).abs() <= 1e-9 * (1.0 + g));
        assert!(
            contains_set(&spec.x_m.scaled(ts.gamma_inf).unwrap(), &ts.s_inf, &oracle).unwrap()
        );

        // One-step robust invariance on vertices.
        assert!(check_invariance(&ts, &sys, &spec, &oracle).unwrap());

        // Trace is strictly decreasing.
        for w in ts.gamma_trace.windows(2) {
            assert!(w[1] < w[0] - 1e-10);
        }

        // Nesting of the converged pass.
        for w in ts.set_trace.windows(2) {
            assert!(contains_set(&w[0], &w[1], &oracle).unwrap());
        }
    }

    #[test]
    fn nominal_case_matches_positively_invariant_oracle() {
        // Zero disturbances: the terminal set is the maximal positively
        // invariant set of the closed loop inside the admissible states,
        // computed here by the plain backward recursion as an oracle.
        let (mut sys, _, oracle) = setup();
        sys.w_vertices = VPolytope::origin(2);
        sys.w_facets = HPolytope::symmetric_box(2, 1e-12);
        sys.dp_vertices = vec![nalgebra::DMatrix::zeros(2, 3)];
        let z0 = default_container(2, 1, (5, 5));
        let spec = ContainerSpec::from_vertices(&sys, &z0, &oracle).unwrap();
        let bounds = gamma_bounds(&sys, &spec, &oracle).unwrap();
        let ts =
            output_admissible_set(&sys, &spec, bounds.hi_slice, &Default::default(), &oracle)
                .unwrap();

        // Independent recursion: Omega_{k+1} = Omega_k cap {x | A x in Omega_k}.
        let x_xu = sys.admissible_states(&oracle).unwrap();
        let a_cl = sys.a_cl();
        let mut omega = x_xu.clone();
        for _ in 0..200 {
            let mapped = HPolytope::new(omega.normals() * &a_cl, omega.offsets().clone()).unwrap();
            let next = intersect(&omega, &mapped, &oracle).unwrap();
            if set_equal(&next, &omega, &oracle).unwrap() {
                omega = next;
                break;
            }
            omega = next;
        }
        assert!(set_equal(&ts.s_inf, &omega, &oracle).unwrap());
    }

    #[test]
    fn lambda_truncation_monotone_and_matches_lower_bound() {
        let (sys, spec, oracle) = setup();
        let l1 = lambda_infinity(&sys, &spec, 1, &oracle).unwrap();
        let b = gamma_bounds(&sys, &spec, &oracle).unwrap();
        // Single-term truncation reduces to the self-consistency bound.
        assert!((l1.value - b.lo).abs() <= 1e-9 * (1.0 + b.lo));

        let mut prev = 0.0;
        for k in [1usize, 3, 7, 15, 30] {
            let lk = lambda_infinity(&sys, &spec, k, &oracle).unwrap().value;
            assert!(lk >= prev - 1e-12, "k={k}: {lk} < {prev}");
            prev = lk;
        }
        let l30 = lambda_infinity(&sys, &spec, 30, &oracle).unwrap();
        assert!(l30.truncation_residual < 1e-6);
    }

    #[test]
    fn zero_disturbance_lambda_is_zero() {
        let (mut sys, _, oracle) = setup();
        sys.w_vertices = VPolytope::origin(2);
        sys.dp_vertices = vec![nalgebra::DMatrix::zeros(2, 3)];
        let z0 = default_container(2, 1, (5, 5));
        let spec = ContainerSpec::from_vertices(&sys, &z0, &oracle).unwrap();
        let l = lambda_infinity(&sys, &spec, 10, &oracle).unwrap();
        assert_eq!(l.value, 0.0);
    }
}
