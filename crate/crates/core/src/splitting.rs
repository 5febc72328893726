//! Operator-splitting solver for the gradient-constrained formulation:
//! minimize the same discrete energy as the obstacle solver over
//! `{ gauge_K(grad v) <= k, v = c on the boundary }`.
//!
//! The splitting introduces an auxiliary gradient `w`, alternating a
//! Poisson-type conjugate-gradient solve in `v`, a pointwise Euclidean
//! projection of `w` onto `k K` per cell, and a multiplier update. The
//! projection is exact per family: radial clip for balls, componentwise clip
//! for boxes, sorted thresholding for 1-norm balls, a monotone dual Newton
//! for general p-norm balls, and Dykstra over halfspace pairs for polytopes.

use std::sync::Arc;

use crate::convex::{dot, norm2, BodyFamily, ConvexBody};
use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::obstacle::{total_energy, ZeroOrderTerm};
use crate::operators::{
    apply_interior_operator, cg_general, discrete_gradient, GradientField, GridOperators,
};
use crate::stats::SolveStats;

/// Gradient-constrained problem: energy `1/2 |grad v|^2 + g(v)` subject to
/// `gauge_K(grad v) <= k` with constant boundary data.
#[derive(Debug, Clone)]
pub struct GradientProblem {
    pub ops: Arc<GridOperators>,
    pub body: ConvexBody,
    pub k: f64,
    pub boundary_value: f64,
    pub zero_order: ZeroOrderTerm,
}

impl GradientProblem {
    pub fn new(
        ops: Arc<GridOperators>,
        body: ConvexBody,
        k: f64,
        boundary_value: f64,
        zero_order: ZeroOrderTerm,
    ) -> Result<Self> {
        if body.dim != ops.grid.dim {
            return Err(Error::DimensionMismatch { expected: ops.grid.dim, got: body.dim });
        }
        if !(k > 0.0 && k.is_finite()) {
            return Err(Error::Precondition(format!("constraint level k = {k} must be positive")));
        }
        Ok(GradientProblem { ops, body, k, boundary_value, zero_order })
    }

    pub fn energy(&self, v: &ScalarField) -> f64 {
        total_energy(&self.ops, v, &self.zero_order, 0.5)
    }
}

/// Euclidean projection of a point onto `k * K`. Exact closed forms where
/// they exist; general p-norm balls use a monotone dual solve to 1e-13, and
/// polytopes run Dykstra over their halfspace-pair slabs.
pub fn project_gradient(p: &[f64], body: &ConvexBody, k: f64) -> Result<Vec<f64>> {
    if p.len() != body.dim {
        return Err(Error::DimensionMismatch { expected: body.dim, got: p.len() });
    }
    if body.gauge_raw(p) <= k {
        return Ok(p.to_vec());
    }
    match &body.family {
        BodyFamily::Ball { radius } => {
            let cap = k * radius;
            let n = norm2(p);
            Ok(p.iter().map(|v| v * cap / n).collect())
        }
        BodyFamily::Box { half_widths } => Ok(p
            .iter()
            .zip(half_widths)
            .map(|(v, w)| v.clamp(-k * w, k * w))
            .collect()),
        BodyFamily::Cross { scale } => Ok(project_l1(p, k * scale)),
        BodyFamily::PBall { p: exponent, radius } => {
            if *exponent == 1.0 {
                Ok(project_l1(p, k * radius))
            } else if *exponent == 2.0 {
                let cap = k * radius;
                let n = norm2(p);
                Ok(p.iter().map(|v| v * cap / n).collect())
            } else {
                Ok(project_pball(p, *exponent, k * radius))
            }
        }
        BodyFamily::Polytope { halfspaces } => {
            // One representative slab per +/- pair.
            let mut slabs: Vec<(&[f64], f64)> = Vec::new();
            for hs in halfspaces {
                let mirror_seen = slabs.iter().any(|(n, b)| {
                    (b - hs.offset).abs() <= 1e-12 * (1.0 + hs.offset)
                        && n.iter().zip(&hs.normal).all(|(x, y)| (x + y).abs() <= 1e-12)
                });
                if !mirror_seen {
                    slabs.push((&hs.normal, hs.offset));
                }
            }
            project_dykstra(p, &slabs, k)
        }
    }
}

/// Projection onto the 1-norm ball of the given radius by sorted soft
/// thresholding.
fn project_l1(p: &[f64], radius: f64) -> Vec<f64> {
    let mut mags: Vec<f64> = p.iter().map(|v| v.abs()).collect();
    mags.sort_by(|a, b| b.partial_cmp(a).expect("finite magnitudes"));
    let mut cumulative = 0.0;
    let mut tau = 0.0;
    for (i, &m) in mags.iter().enumerate() {
        cumulative += m;
        let candidate = (cumulative - radius) / (i as f64 + 1.0);
        if i + 1 == mags.len() || mags[i + 1] <= candidate {
            tau = candidate;
            break;
        }
    }
    p.iter().map(|&v| v.signum() * (v.abs() - tau).max(0.0)).collect()
}

/// Solves `t + mu * t^(p-1) = a` for `t >= 0`.
fn pball_component(a: f64, mu: f64, p: f64) -> f64 {
    if a <= 0.0 {
        return 0.0;
    }
    if p == 3.0 {
        // Quadratic in t; the stable root.
        return 2.0 * a / (1.0 + (1.0 + 4.0 * mu * a).sqrt());
    }
    if p >= 2.0 {
        // Convex increasing residual; Newton from t = a descends monotonically.
        let mut t = a;
        for _ in 0..60 {
            let f = t + mu * t.powf(p - 1.0) - a;
            let df = 1.0 + mu * (p - 1.0) * t.powf(p - 2.0);
            let next = (t - f / df).max(0.0);
            if (next - t).abs() <= 1e-15 * (1.0 + t) {
                return next;
            }
            t = next;
        }
        t
    } else {
        let (mut lo, mut hi) = (0.0_f64, a);
        for _ in 0..80 {
            let mid = 0.5 * (lo + hi);
            if mid + mu * mid.powf(p - 1.0) > a {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        0.5 * (lo + hi)
    }
}

/// Projection onto `{ ||x||_p <= radius }` for p > 1 via the scalar dual
/// equation, which is monotone in the multiplier; safeguarded Newton.
fn project_pball(p_vec: &[f64], p: f64, radius: f64) -> Vec<f64> {
    let mags: Vec<f64> = p_vec.iter().map(|v| v.abs()).collect();
    let target = radius.powf(p);
    let residual = |mu: f64, ts: &mut Vec<f64>| -> f64 {
        ts.clear();
        ts.extend(mags.iter().map(|&a| pball_component(a, mu, p)));
        ts.iter().map(|t| t.powf(p)).sum::<f64>() - target
    };

    let mut ts = Vec::with_capacity(mags.len());
    let mut lo = 0.0_f64;
    let mut hi = 1.0_f64;
    while residual(hi, &mut ts) > 0.0 {
        lo = hi;
        hi *= 4.0;
        if hi > 1e100 {
            break;
        }
    }
    let mut mu = 0.5 * (lo + hi);
    for _ in 0..200 {
        let g = residual(mu, &mut ts);
        if g.abs() <= 1e-13 * target || hi - lo <= 1e-15 * hi {
            break;
        }
        if g > 0.0 {
            lo = mu;
        } else {
            hi = mu;
        }
        let dg: f64 = ts
            .iter()
            .map(|&t| {
                if t <= 0.0 {
                    0.0
                } else {
                    -p * t.powf(2.0 * p - 2.0) / (1.0 + mu * (p - 1.0) * t.powf(p - 2.0))
                }
            })
            .sum();
        let newton = if dg < 0.0 { mu - g / dg } else { f64::NAN };
        mu = if newton.is_finite() && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
    }
    residual(mu, &mut ts);
    p_vec.iter().zip(&ts).map(|(v, t)| v.signum() * t).collect()
}

/// Dykstra alternating projections over the slabs `|a_j . x| <= k b_j`.
fn project_dykstra(p: &[f64], slabs: &[(&[f64], f64)], k: f64) -> Result<Vec<f64>> {
    const MAX_CYCLES: usize = 500;
    const GAP_TOL: f64 = 1e-11;
    let dim = p.len();
    let mut x = p.to_vec();
    let mut corrections = vec![vec![0.0; dim]; slabs.len()];
    let scale = 1.0 + norm2(p);
    let mut gap = f64::INFINITY;
    for _ in 0..MAX_CYCLES {
        let x_prev = x.clone();
        for (s, &(normal, offset)) in slabs.iter().enumerate() {
            let y: Vec<f64> = x.iter().zip(&corrections[s]).map(|(a, b)| a + b).collect();
            let bound = k * offset;
            let d = dot(normal, &y);
            let excess = if d > bound {
                d - bound
            } else if d < -bound {
                d + bound
            } else {
                0.0
            };
            let projected: Vec<f64> = y.iter().zip(normal).map(|(v, n)| v - excess * n).collect();
            for i in 0..dim {
                corrections[s][i] = y[i] - projected[i];
            }
            x = projected;
        }
        gap = x
            .iter()
            .zip(&x_prev)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        if gap <= GAP_TOL * scale {
            return Ok(x);
        }
    }
    Err(Error::DykstraNonConvergence { gap, cycles: MAX_CYCLES })
}

/// Per-cell discrete gradient with presence flags; absent axes are zero.
pub fn cell_gradient(
    ops: &GridOperators,
    g: &GradientField,
    node: usize,
) -> Option<([f64; 2], [bool; 2])> {
    let cell = &ops.cells[node];
    if cell.iter().all(|c| c.is_none()) {
        return None;
    }
    let mut comps = [0.0; 2];
    let mut present = [false; 2];
    for axis in 0..ops.grid.dim {
        if let Some(eidx) = cell[axis] {
            comps[axis] = g.values[eidx];
            present[axis] = true;
        }
    }
    Some((comps, present))
}

/// Projects one cell's gradient onto `k K`. Complete cells use the full
/// Euclidean projection; cells missing an axis are clipped onto the section
/// of `k K` along the present axis.
fn project_cell(
    comps: &[f64; 2],
    present: &[bool; 2],
    body: &ConvexBody,
    k: f64,
    axis_caps: &[f64],
) -> Result<[f64; 2]> {
    let dim = body.dim;
    if present[..dim].iter().all(|&b| b) {
        let projected = project_gradient(&comps[..dim], body, k)?;
        let mut out = [0.0; 2];
        out[..dim].copy_from_slice(&projected);
        Ok(out)
    } else {
        let mut out = [0.0; 2];
        for axis in 0..dim {
            if present[axis] {
                out[axis] = comps[axis].clamp(-k * axis_caps[axis], k * axis_caps[axis]);
            }
        }
        Ok(out)
    }
}

/// Splitting (ADMM-style) solve. Alternates a conjugate-gradient `v`-update
/// (relative residual 1e-12, warm-started), the pointwise cell projection,
/// and a multiplier update, stopping when both the primal residual
/// `||grad v - w||_inf` and the dual residual `rho ||w - w_prev||_inf` fall
/// below `tol` and the iterate satisfies `gauge_K(grad v) <= k + 10 tol`.
pub fn admm_solve(
    problem: &GradientProblem,
    rho: f64,
    tol: f64,
    max_iters: usize,
) -> Result<(ScalarField, SolveStats)> {
    assert!(rho > 0.0, "penalty must be positive");
    let ops = problem.ops.clone();
    let grid = ops.grid.clone();
    let interior = grid.interior_nodes();
    let n_int = interior.len();

    // Section half-widths of K along each axis, for incomplete cells.
    let mut axis_caps = vec![0.0; grid.dim];
    for axis in 0..grid.dim {
        let mut e = vec![0.0; grid.dim];
        e[axis] = 1.0;
        axis_caps[axis] = 1.0 / problem.body.gauge_raw(&e);
    }

    let mut v = ScalarField::constant(grid.clone(), problem.boundary_value);
    let mut w = GradientField::zeros(ops.clone());
    let mut w_prev = GradientField::zeros(ops.clone());
    let mut multiplier = GradientField::zeros(ops.clone());

    let mut stats = SolveStats::new();
    let transverse = grid.h.powi(grid.dim as i32 - 1);

    let mut rhs = vec![0.0; n_int];
    let mut diag = vec![0.0; n_int];
    let mut newton_rhs = vec![0.0; n_int];
    let mut delta = vec![0.0; n_int];

    for iter in 0..max_iters {
        // v-update: (1 + rho) L v + g'(v) V = rho G^T (w - lambda) + source,
        // with Dirichlet columns folded into the right-hand side.
        for r in rhs.iter_mut() {
            *r = 0.0;
        }
        for (eidx, e) in ops.edges.iter().enumerate() {
            let t = w.values[eidx] - multiplier.values[eidx];
            let flux = rho * transverse * t;
            if let Some(ka) = ops.interior_index[e.a] {
                rhs[ka] -= flux;
            }
            if let Some(kb) = ops.interior_index[e.b] {
                rhs[kb] += flux;
            }
        }
        match &problem.zero_order {
            ZeroOrderTerm::Linear { eta } => {
                for (kk, &id) in interior.iter().enumerate() {
                    rhs[kk] += eta * ops.node_volume[id];
                }
                let mut b = rhs.clone();
                for (kk, &id) in interior.iter().enumerate() {
                    for &(eidx, other) in ops.incident_edges(id) {
                        if !grid.is_interior(other) {
                            b[kk] += (1.0 + rho) * ops.edges[eidx].weight * v.values[other];
                        }
                    }
                }
                let mut x: Vec<f64> = interior.iter().map(|&id| v.values[id]).collect();
                let (cg_iters, _) = cg_general(
                    |p, y| apply_interior_operator(&ops, 1.0 + rho, None, p, y),
                    &b,
                    &mut x,
                    1e-12,
                    10 * n_int + 100,
                );
                stats.inner_iterations += cg_iters;
                for (kk, &id) in interior.iter().enumerate() {
                    v.values[id] = x[kk];
                }
            }
            zero @ ZeroOrderTerm::PluggableConvex { .. } => {
                for _newton in 0..30 {
                    let mut worst = 0.0_f64;
                    for (kk, &id) in interior.iter().enumerate() {
                        let mut acc = 0.0;
                        for &(eidx, other) in ops.incident_edges(id) {
                            acc += ops.edges[eidx].weight * (v.values[id] - v.values[other]);
                        }
                        let f = (1.0 + rho) * acc
                            + zero.derivative(v.values[id]) * ops.node_volume[id]
                            - rhs[kk];
                        newton_rhs[kk] = -f;
                        worst = worst.max(f.abs());
                        let step = 1e-6 * (1.0 + v.values[id].abs());
                        let ddg = (zero.derivative(v.values[id] + step)
                            - zero.derivative(v.values[id] - step))
                            / (2.0 * step);
                        diag[kk] = ddg.max(0.0) * ops.node_volume[id];
                    }
                    if worst <= 1e-12 * (1.0 + transverse) {
                        break;
                    }
                    delta.iter_mut().for_each(|d| *d = 0.0);
                    let (cg_iters, _) = cg_general(
                        |p, y| apply_interior_operator(&ops, 1.0 + rho, Some(&diag), p, y),
                        &newton_rhs,
                        &mut delta,
                        1e-12,
                        10 * n_int + 100,
                    );
                    stats.inner_iterations += cg_iters;
                    for (kk, &id) in interior.iter().enumerate() {
                        v.values[id] += delta[kk];
                    }
                }
            }
        }

        // w-update: pointwise projection of grad v + lambda, cell by cell.
        let gv = discrete_gradient(&ops, &v);
        std::mem::swap(&mut w_prev, &mut w);
        for node in 0..grid.node_count() {
            let cell = &ops.cells[node];
            if cell.iter().all(|c| c.is_none()) {
                continue;
            }
            let mut comps = [0.0; 2];
            let mut present = [false; 2];
            for axis in 0..grid.dim {
                if let Some(eidx) = cell[axis] {
                    comps[axis] = gv.values[eidx] + multiplier.values[eidx];
                    present[axis] = true;
                }
            }
            let projected = project_cell(&comps, &present, &problem.body, problem.k, &axis_caps)?;
            for axis in 0..grid.dim {
                if let Some(eidx) = cell[axis] {
                    w.values[eidx] = projected[axis];
                }
            }
        }

        // Multiplier update and residuals.
        let mut primal = 0.0_f64;
        let mut dual = 0.0_f64;
        for eidx in 0..ops.edges.len() {
            let r = gv.values[eidx] - w.values[eidx];
            multiplier.values[eidx] += r;
            primal = primal.max(r.abs());
            dual = dual.max(rho * (w.values[eidx] - w_prev.values[eidx]).abs());
        }
        stats.residual_trace.push((primal, dual));
        stats.iterations = iter + 1;
        stats.residual = primal;
        stats.dual_residual = Some(dual);

        if primal <= tol && dual <= tol {
            let report = feasibility_profile_with(&ops, &v, &problem.body, problem.k);
            if report.max_gauge <= problem.k + 10.0 * tol {
                stats.converged = true;
                break;
            }
        }
    }

    stats.energy = problem.energy(&v);
    Ok((v, stats))
}

/// Histogram and maximum of `gauge_K(grad v) / k` over cells.
#[derive(Debug, Clone, serde::Serialize)]
pub struct FeasibilityReport {
    /// Max over cells of `gauge_K(grad v)`.
    pub max_gauge: f64,
    /// `max_gauge / k`.
    pub max_ratio: f64,
    /// Counts of `gauge/k` in 12 bins of width 0.1 over [0, 1.2); the last
    /// bin absorbs anything above.
    pub histogram: Vec<usize>,
}

pub fn feasibility_profile(v: &ScalarField, body: &ConvexBody, k: f64) -> FeasibilityReport {
    let ops = GridOperators::build(v.grid.clone());
    feasibility_profile_with(&ops, v, body, k)
}

/// Same as [`feasibility_profile`] but reusing an existing operator set.
pub fn feasibility_profile_with(
    ops: &Arc<GridOperators>,
    v: &ScalarField,
    body: &ConvexBody,
    k: f64,
) -> FeasibilityReport {
    let g = discrete_gradient(ops, v);
    let mut max_gauge = 0.0_f64;
    let mut histogram = vec![0usize; 12];
    for node in 0..ops.grid.node_count() {
        if let Some((comps, _)) = cell_gradient(ops, &g, node) {
            let gauge = body.gauge_raw(&comps[..body.dim]);
            max_gauge = max_gauge.max(gauge);
            let bin = ((gauge / k) / 0.1) as usize;
            histogram[bin.min(11)] += 1;
        }
    }
    FeasibilityReport { max_gauge, max_ratio: max_gauge / k, histogram }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distance::{build_obstacles, gauge_distance_map};
    use crate::grid::{build_grid, DomainShape};
    use crate::obstacle::{psor_solve, ObstacleProblem};

    #[test]
    fn ball_projection_is_radial_clip() {
        let ball = ConvexBody::ball(2, 1.0).unwrap();
        let p = project_gradient(&[3.0, 4.0], &ball, 1.0).unwrap();
        assert!((p[0] - 0.6).abs() < 1e-15);
        assert!((p[1] - 0.8).abs() < 1e-15);
    }

    #[test]
    fn box_projection_is_componentwise() {
        let bx = ConvexBody::cuboid(&[1.0, 1.0]).unwrap();
        let p = project_gradient(&[2.0, 0.5], &bx, 1.0).unwrap();
        assert_eq!(p, vec![1.0, 0.5]);
    }

    #[test]
    fn l1_projection_matches_kkt() {
        let cross = ConvexBody::cross(2, 1.0).unwrap();
        let p = project_gradient(&[1.0, 0.2], &cross, 1.0).unwrap();
        // Soft threshold tau = 0.1 gives (0.9, 0.1).
        assert!((p[0] - 0.9).abs() < 1e-12 && (p[1] - 0.1).abs() < 1e-12, "{p:?}");
        assert!((cross.gauge(&p).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn pball_projection_satisfies_kkt() {
        let body = ConvexBody::pball(2, 3.0, 1.0).unwrap();
        for q in [[2.0, 1.0], [0.3, -4.0], [-1.5, -1.5], [5.0, 0.0]] {
            let x = project_gradient(&q, &body, 1.0).unwrap();
            // On the constraint surface...
            assert!((body.gauge(&x).unwrap() - 1.0).abs() < 1e-10, "{x:?}");
            // ...with q - x parallel to the p-norm gradient at x.
            let grad = [
                x[0].abs().powi(2) * x[0].signum(),
                x[1].abs().powi(2) * x[1].signum(),
            ];
            let cross = (q[0] - x[0]) * grad[1] - (q[1] - x[1]) * grad[0];
            assert!(cross.abs() < 1e-8, "cross {cross} for {q:?}");
        }
    }

    #[test]
    fn projection_is_idempotent() {
        for body in [
            ConvexBody::ball(2, 1.0).unwrap(),
            ConvexBody::cuboid(&[1.0, 0.5]).unwrap(),
            ConvexBody::pball(2, 3.0, 1.0).unwrap(),
            ConvexBody::regular_polygon(3, 1.0).unwrap(),
        ] {
            for q in [[2.0, 1.3], [-0.4, 3.0], [0.1, -0.05]] {
                let once = project_gradient(&q, &body, 1.0).unwrap();
                let twice = project_gradient(&once, &body, 1.0).unwrap();
                for (a, b) in once.iter().zip(&twice) {
                    assert!((a - b).abs() <= 1e-12, "{once:?} vs {twice:?}");
                }
            }
        }
    }

    #[test]
    fn hexagon_projection_matches_brute_force() {
        let hex = ConvexBody::regular_polygon(3, 1.0).unwrap();
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(42);
        for _ in 0..10 {
            let q = [rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0)];
            let x = project_gradient(&q, &hex, 1.0).unwrap();
            // Dense lattice search inside the feasible set.
            let mut best = f64::INFINITY;
            let m = 1500;
            for i in 0..=m {
                for j in 0..=m {
                    let cand = [
                        -1.2 + 2.4 * i as f64 / m as f64,
                        -1.2 + 2.4 * j as f64 / m as f64,
                    ];
                    if hex.gauge(&cand).unwrap() <= 1.0 {
                        let d = ((cand[0] - q[0]).powi(2) + (cand[1] - q[1]).powi(2)).sqrt();
                        best = best.min(d);
                    }
                }
            }
            let dx = ((x[0] - q[0]).powi(2) + (x[1] - q[1]).powi(2)).sqrt();
            assert!(dx <= best + 1e-4, "projection distance {dx} vs oracle {best}");
            assert!(hex.gauge(&x).unwrap() <= 1.0 + 1e-12);
        }
    }

    fn torsion_gradient_problem(h: f64, eta: f64) -> GradientProblem {
        let grid = Arc::new(build_grid(DomainShape::Interval { a: -1.0, b: 1.0 }, h).unwrap());
        let ops = GridOperators::build(grid);
        let body = ConvexBody::ball(1, 1.0).unwrap();
        GradientProblem::new(ops, body, 1.0, 0.0, ZeroOrderTerm::Linear { eta }).unwrap()
    }

    #[test]
    fn zero_source_gives_zero_solution() {
        let problem = torsion_gradient_problem(1.0 / 64.0, 0.0);
        let (v, stats) = admm_solve(&problem, 10.0, 1e-8, 50_000).unwrap();
        assert!(stats.converged);
        for &id in problem.ops.grid.interior_nodes() {
            assert!(v.values[id].abs() < 1e-8);
        }
    }

    #[test]
    fn torsion_agrees_with_obstacle_solver() {
        let h = 1.0 / 128.0;
        let problem = torsion_gradient_problem(h, 4.0);
        let (v, stats) = admm_solve(&problem, 10.0, 1e-8, 50_000).unwrap();
        assert!(stats.converged, "residual {}", stats.residual);

        let body = ConvexBody::ball(1, 1.0).unwrap();
        let d = gauge_distance_map(&problem.ops.grid, &body.polar().unwrap()).unwrap();
        let (lower, upper) = build_obstacles(&d, 0.0, 1.0).unwrap();
        let op = ObstacleProblem::new(
            problem.ops.clone(),
            lower.clone(),
            upper.clone(),
            0.0,
            ZeroOrderTerm::Linear { eta: 4.0 },
        )
        .unwrap();
        let (u, _) = psor_solve(&op, 1.8, 1e-10, 100_000);

        let sup = v.sup_diff(&u);
        assert!(sup <= 5.0 * h, "formulations differ by {sup}");

        let report = feasibility_profile_with(&problem.ops, &v, &problem.body, problem.k);
        assert!(report.max_gauge <= 1.0 + 1e-7, "max gauge {}", report.max_gauge);

        // Energies of the two minimizers agree to O(h^2).
        let diff = (problem.energy(&v) - op.energy(&u)).abs();
        assert!(diff <= 5.0 * h * h, "energy gap {diff}");

        // The constrained solution stays between the obstacles up to O(h).
        for &id in problem.ops.grid.interior_nodes() {
            assert!(v.values[id] >= lower.values[id] - 5.0 * h);
            assert!(v.values[id] <= upper.values[id] + 5.0 * h);
        }
    }

    #[test]
    fn feasibility_of_constant_is_zero() {
        let grid = Arc::new(
            build_grid(DomainShape::Rectangle { corner: [0.0, 0.0], widths: [1.0, 1.0] }, 0.125)
                .unwrap(),
        );
        let v = ScalarField::constant(grid, 3.0);
        let body = ConvexBody::ball(2, 1.0).unwrap();
        let report = feasibility_profile(&v, &body, 1.0);
        assert_eq!(report.max_gauge, 0.0);
    }

    #[test]
    fn upper_obstacle_is_nearly_feasible() {
        // The distance obstacle is gauge-feasible. Edge differences see this
        // exactly; full forward-difference cells straddle the obstacle's
        // ridge kinks, where componentwise feasibility still holds. A body
        // whose gauge is the max-norm has no such straddling excess, so the
        // full cell gauge stays within O(h) there.
        let h = 1.0 / 64.0;
        let grid = Arc::new(
            build_grid(DomainShape::Rectangle { corner: [0.0, 0.0], widths: [1.0, 1.0] }, h)
                .unwrap(),
        );
        let ops = GridOperators::build(grid.clone());

        let ball = ConvexBody::ball(2, 1.0).unwrap();
        let d = gauge_distance_map(&grid, &ball.polar().unwrap()).unwrap();
        let excess =
            crate::operators::max_lipschitz_excess(&ops, &d, &ball.polar().unwrap(), 1.0);
        assert!(excess <= 1e-9, "edge Lipschitz excess {excess}");
        let g = discrete_gradient(&ops, &d);
        for node in 0..grid.node_count() {
            if let Some((comps, _)) = cell_gradient(&ops, &g, node) {
                assert!(comps[0].abs() <= 1.0 + 1e-9 && comps[1].abs() <= 1.0 + 1e-9);
            }
        }

        let bx = ConvexBody::cuboid(&[1.0, 1.0]).unwrap();
        let dbx = gauge_distance_map(&grid, &bx.polar().unwrap()).unwrap();
        let report = feasibility_profile_with(&ops, &dbx, &bx, 1.0);
        assert!(report.max_gauge <= 1.0 + 10.0 * h, "max gauge {}", report.max_gauge);
    }
}
