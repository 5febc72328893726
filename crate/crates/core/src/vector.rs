//! Vector-valued problem and its reduction to a scalar one.
//!
//! The vector problem minimizes `|Dv|^2 - eta . v` over fields with
//! `||Dv||_{2,K} <= 1` and zero boundary data. Its minimizer is collinear
//! with `eta`: `v(x) = u(x) eta`, where `u` solves the scalar obstacle
//! problem with obstacles `-/+ d_K(x, dU) / |eta|`. This module builds that
//! reduced problem, reconstructs and checks the vector solution, and (for
//! Euclidean balls, where the pointwise projection is singular-value
//! clipping) solves the constrained vector problem directly as a cross-check.

use std::sync::Arc;

use rand::Rng;

use crate::convex::{norm2, BodyFamily, ConvexBody};
use crate::distance::{build_obstacles, gauge_distance_map};
use crate::error::{Error, Result};
use crate::field::{ScalarField, VectorField};
use crate::matrix::{operator_norm_2k, MatrixNn};
use crate::obstacle::{ObstacleProblem, ZeroOrderTerm};
use crate::operators::{
    apply_interior_operator, cg_general, discrete_gradient, GradientField, GridOperators,
};
use crate::stats::SolveStats;

/// Vector-valued problem data: grid, constraint body `K` (in the domain
/// dimension), and the nonzero source direction `eta` in R^N.
#[derive(Debug, Clone)]
pub struct VectorProblem {
    pub ops: Arc<GridOperators>,
    pub body: ConvexBody,
    pub eta: Vec<f64>,
}

impl VectorProblem {
    pub fn new(ops: Arc<GridOperators>, body: ConvexBody, eta: Vec<f64>) -> Result<Self> {
        if body.dim != ops.grid.dim {
            return Err(Error::DimensionMismatch { expected: ops.grid.dim, got: body.dim });
        }
        if eta.is_empty() || norm2(&eta) == 0.0 {
            return Err(Error::Precondition("eta must be a nonzero vector".into()));
        }
        Ok(VectorProblem { ops, body, eta })
    }

    pub fn components(&self) -> usize {
        self.eta.len()
    }
}

/// The scalar problem equivalent to a [`VectorProblem`].
#[derive(Debug, Clone)]
pub struct ReducedScalar {
    /// Double-obstacle problem with obstacles `-/+ d_K / |eta|` and the
    /// vector energy convention folded into an effective source of 1/2.
    pub obstacle: ObstacleProblem,
    /// Constraint body of the equivalent gradient-constrained form: the
    /// polar of `K`, at level `k`.
    pub constraint_body: ConvexBody,
    pub k: f64,
    /// The distance field the obstacles were built from.
    pub distance: ScalarField,
}

/// Builds the reduced scalar problem. The vector energy `|Dv|^2 - v` carries
/// no 1/2 on the quadratic term, so in the obstacle solver's
/// `1/2 |Dv|^2 - eta v` convention the effective source is 1/2; the
/// minimizer is unchanged.
pub fn reduce_to_scalar(vp: &VectorProblem) -> Result<ReducedScalar> {
    let eta_norm = norm2(&vp.eta);
    // Metric d_K: the gauge of K itself measures the obstacle distance.
    let distance = gauge_distance_map(&vp.ops.grid, &vp.body)?;
    let k = 1.0 / eta_norm;
    let (lower, upper) = build_obstacles(&distance, 0.0, k)?;
    let obstacle = ObstacleProblem::new(
        vp.ops.clone(),
        lower,
        upper,
        0.0,
        ZeroOrderTerm::Linear { eta: 0.5 },
    )?;
    Ok(ReducedScalar { obstacle, constraint_body: vp.body.polar()?, k, distance })
}

/// Node-wise product `u(x) * eta`.
pub fn assemble_vector(u: &ScalarField, eta: &[f64]) -> VectorField {
    let mut out = VectorField::zeros(u.grid.clone(), eta.len());
    for id in 0..u.grid.node_count() {
        for (l, &e) in eta.iter().enumerate() {
            out.set(id, l, u.values[id] * e);
        }
    }
    out
}

/// Discrete vector energy `I_h(v) = sum |grad v|^2 - eta . v` (no 1/2 on the
/// quadratic term).
pub fn vector_energy(ops: &Arc<GridOperators>, v: &VectorField, eta: &[f64]) -> f64 {
    let mut quad = 0.0;
    for l in 0..v.components {
        let comp = v.component(l);
        let g = discrete_gradient(ops, &comp);
        quad += crate::operators::edge_inner(&g, &g);
    }
    let linear: f64 = ops
        .grid
        .interior_nodes()
        .iter()
        .map(|&id| {
            let vn = v.node(id);
            let dot: f64 = vn.iter().zip(eta).map(|(a, b)| a * b).sum();
            dot * ops.node_volume[id]
        })
        .sum();
    quad - linear
}

/// Scalar energy in the vector convention, `J1_h(u) = sum |grad u|^2 - u`.
pub fn scalar_energy_j1(ops: &Arc<GridOperators>, u: &ScalarField) -> f64 {
    let g = discrete_gradient(ops, u);
    let quad = crate::operators::edge_inner(&g, &g);
    let linear: f64 = ops
        .grid
        .interior_nodes()
        .iter()
        .map(|&id| u.values[id] * ops.node_volume[id])
        .sum();
    quad - linear
}

/// Per-cell Jacobian of a vector field, with absent axes zero-filled.
fn cell_jacobian(ops: &GridOperators, grads: &[GradientField], node: usize) -> Option<MatrixNn> {
    let cell = &ops.cells[node];
    if cell.iter().all(|c| c.is_none()) {
        return None;
    }
    let n = ops.grid.dim;
    let rows = grads.len();
    let mut m = MatrixNn::zeros(rows, n);
    for axis in 0..n {
        if let Some(eidx) = cell[axis] {
            for (l, g) in grads.iter().enumerate() {
                m.set(l, axis, g.values[eidx]);
            }
        }
    }
    Some(m)
}

/// Report of `max ||Dv||_{2,K}` over cells.
#[derive(Debug, Clone, serde::Serialize)]
pub struct K1Report {
    pub max_operator_norm: f64,
}

/// Max over cells of the gauge operator norm of the discrete Jacobian.
pub fn k1_feasibility(v: &VectorField, body: &ConvexBody) -> Result<K1Report> {
    let ops = GridOperators::build(v.grid.clone());
    k1_feasibility_with(&ops, v, body)
}

pub fn k1_feasibility_with(
    ops: &Arc<GridOperators>,
    v: &VectorField,
    body: &ConvexBody,
) -> Result<K1Report> {
    let grads: Vec<GradientField> = (0..v.components)
        .map(|l| discrete_gradient(ops, &v.component(l)))
        .collect();
    let mut max_norm = 0.0_f64;
    for node in 0..ops.grid.node_count() {
        if let Some(jac) = cell_jacobian(ops, &grads, node) {
            max_norm = max_norm.max(operator_norm_2k(&jac, body)?);
        }
    }
    Ok(K1Report { max_operator_norm: max_norm })
}

/// Max angle (radians) between `v(x)` and `eta` over nodes where `|v(x)|`
/// is at least `rel_threshold` times the field maximum; below that the
/// angle is numerically meaningless. Returns the angle and the node count
/// that passed the threshold.
pub fn collinearity_max_angle(v: &VectorField, eta: &[f64], rel_threshold: f64) -> (f64, usize) {
    let grid = &v.grid;
    let eta_norm = norm2(eta);
    let mut max_mag = 0.0_f64;
    for &id in grid.interior_nodes() {
        max_mag = max_mag.max(norm2(v.node(id)));
    }
    let cutoff = rel_threshold * max_mag;
    let mut worst = 0.0_f64;
    let mut counted = 0;
    for &id in grid.interior_nodes() {
        let node = v.node(id);
        let mag = norm2(node);
        if mag >= cutoff && mag > 0.0 {
            let cos = node
                .iter()
                .zip(eta)
                .map(|(a, b)| a * b)
                .sum::<f64>()
                / (mag * eta_norm);
            worst = worst.max(cos.clamp(-1.0, 1.0).acos());
            counted += 1;
        }
    }
    (worst, counted)
}

/// Applies an N x N map to every node value.
pub fn apply_linear_map(v: &VectorField, t: &MatrixNn) -> VectorField {
    let mut out = VectorField::zeros(v.grid.clone(), t.rows);
    for id in 0..v.grid.node_count() {
        let mapped = t.apply(v.node(id));
        for (l, val) in mapped.iter().enumerate() {
            out.set(id, l, *val);
        }
    }
    out
}

/// `|I_h(T v) - I_h(v)|` for an orthogonal `T` fixing `eta`. Preconditions:
/// `||T^T T - I||_max <= 1e-12` and `|T eta - eta| <= 1e-12`.
pub fn invariance_check(
    ops: &Arc<GridOperators>,
    v: &VectorField,
    eta: &[f64],
    t: &MatrixNn,
) -> Result<f64> {
    let n = eta.len();
    if t.rows != n || t.cols != n || v.components != n {
        return Err(Error::DimensionMismatch { expected: n, got: t.rows });
    }
    for i in 0..n {
        for j in 0..n {
            let mut acc = 0.0;
            for r in 0..n {
                acc += t.get(r, i) * t.get(r, j);
            }
            let expect = if i == j { 1.0 } else { 0.0 };
            if (acc - expect).abs() > 1e-12 {
                return Err(Error::Precondition("map is not orthogonal".into()));
            }
        }
    }
    let teta = t.apply(eta);
    let drift: f64 = teta
        .iter()
        .zip(eta)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    if drift > 1e-12 {
        return Err(Error::Precondition("map does not fix eta".into()));
    }
    let mapped = apply_linear_map(v, t);
    Ok((vector_energy(ops, &mapped, eta) - vector_energy(ops, v, eta)).abs())
}

/// Random orthogonal N x N map fixing `eta`: conjugates a random rotation of
/// the orthogonal complement by a basis whose first vector is `eta / |eta|`.
pub fn random_orthogonal_fixing(eta: &[f64], rng: &mut impl Rng) -> MatrixNn {
    let n = eta.len();
    if n == 1 {
        return MatrixNn::new(1, 1, vec![1.0]).unwrap();
    }
    // Orthonormal basis with the eta direction first (Gram-Schmidt over
    // random fill-ins, retried until well-conditioned).
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(n);
    let nrm = norm2(eta);
    basis.push(eta.iter().map(|e| e / nrm).collect());
    while basis.len() < n {
        let cand: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mut v = cand;
        for b in &basis {
            let proj: f64 = v.iter().zip(b).map(|(a, c)| a * c).sum();
            for (vi, bi) in v.iter_mut().zip(b) {
                *vi -= proj * bi;
            }
        }
        let nv = norm2(&v);
        if nv > 1e-6 {
            basis.push(v.iter().map(|c| c / nv).collect());
        }
    }
    // Random orthogonal block on the complement.
    let m = n - 1;
    let mut block: Vec<Vec<f64>> = Vec::with_capacity(m);
    while block.len() < m {
        let cand: Vec<f64> = (0..m).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mut v = cand;
        for b in &block {
            let proj: f64 = v.iter().zip(b).map(|(a, c)| a * c).sum();
            for (vi, bi) in v.iter_mut().zip(b) {
                *vi -= proj * bi;
            }
        }
        let nv = norm2(&v);
        if nv > 1e-6 {
            block.push(v.iter().map(|c| c / nv).collect());
        }
    }
    // T = Q diag(1, R) Q^T.
    let mut t = MatrixNn::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let mut acc = basis[0][i] * basis[0][j];
            for r in 0..m {
                for s in 0..m {
                    acc += basis[1 + r][i] * block[r][s] * basis[1 + s][j];
                }
            }
            t.set(i, j, acc);
        }
    }
    t
}

/// Direct splitting solve of the vector problem for `K` a Euclidean ball,
/// where the pointwise projection onto `{ ||A||_{2,K} <= 1 }` is
/// singular-value clipping at `1 / radius`. Returns a field whose
/// feasibility report satisfies `max <= 1 + 10 tol`.
pub fn direct_vector_solve(
    vp: &VectorProblem,
    rho: f64,
    tol: f64,
    max_iters: usize,
) -> Result<(VectorField, SolveStats)> {
    let radius = match &vp.body.family {
        BodyFamily::Ball { radius } => *radius,
        other => {
            return Err(Error::UnsupportedFamily(format!(
                "direct vector solve needs a Euclidean ball, got {other:?}"
            )))
        }
    };
    let sigma_cap = 1.0 / radius;
    let ops = vp.ops.clone();
    let grid = ops.grid.clone();
    let interior = grid.interior_nodes();
    let n_int = interior.len();
    let n_comp = vp.components();
    let transverse = grid.h.powi(grid.dim as i32 - 1);

    let mut v = VectorField::zeros(grid.clone(), n_comp);
    let mut w: Vec<GradientField> =
        (0..n_comp).map(|_| GradientField::zeros(ops.clone())).collect();
    let mut w_prev = w.clone();
    let mut multiplier = w.clone();
    let mut stats = SolveStats::new();

    let mut rhs = vec![0.0; n_int];
    for iter in 0..max_iters {
        // v-update per component: (2 + rho) L v_l = eta_l V + rho G^T t_l.
        let mut grads = Vec::with_capacity(n_comp);
        for l in 0..n_comp {
            for r in rhs.iter_mut() {
                *r = 0.0;
            }
            for (eidx, e) in ops.edges.iter().enumerate() {
                let t = w[l].values[eidx] - multiplier[l].values[eidx];
                let flux = rho * transverse * t;
                if let Some(ka) = ops.interior_index[e.a] {
                    rhs[ka] -= flux;
                }
                if let Some(kb) = ops.interior_index[e.b] {
                    rhs[kb] += flux;
                }
            }
            for (kk, &id) in interior.iter().enumerate() {
                rhs[kk] += vp.eta[l] * ops.node_volume[id];
            }
            // Zero Dirichlet data: nothing to fold in.
            let mut x: Vec<f64> = interior.iter().map(|&id| v.get(id, l)).collect();
            let (cg_iters, _) = cg_general(
                |p, y| apply_interior_operator(&ops, 2.0 + rho, None, p, y),
                &rhs,
                &mut x,
                1e-12,
                10 * n_int + 100,
            );
            stats.inner_iterations += cg_iters;
            for (kk, &id) in interior.iter().enumerate() {
                v.set(id, l, x[kk]);
            }
            grads.push(discrete_gradient(&ops, &v.component(l)));
        }

        // w-update: per-cell singular value clipping of grad v + lambda.
        std::mem::swap(&mut w_prev, &mut w);
        for node in 0..grid.node_count() {
            let cell = &ops.cells[node];
            if cell.iter().all(|c| c.is_none()) {
                continue;
            }
            let mut m = MatrixNn::zeros(n_comp, grid.dim);
            for axis in 0..grid.dim {
                if let Some(eidx) = cell[axis] {
                    for l in 0..n_comp {
                        m.set(l, axis, grads[l].values[eidx] + multiplier[l].values[eidx]);
                    }
                }
            }
            let clipped = m.clip_singular_values(sigma_cap);
            for axis in 0..grid.dim {
                if let Some(eidx) = cell[axis] {
                    for l in 0..n_comp {
                        w[l].values[eidx] = clipped.get(l, axis);
                    }
                }
            }
        }

        // Multiplier update and residuals.
        let mut primal = 0.0_f64;
        let mut dual = 0.0_f64;
        for l in 0..n_comp {
            for eidx in 0..ops.edges.len() {
                let r = grads[l].values[eidx] - w[l].values[eidx];
                multiplier[l].values[eidx] += r;
                primal = primal.max(r.abs());
                dual = dual.max(rho * (w[l].values[eidx] - w_prev[l].values[eidx]).abs());
            }
        }
        stats.residual_trace.push((primal, dual));
        stats.iterations = iter + 1;
        stats.residual = primal;
        stats.dual_residual = Some(dual);

        if primal <= tol && dual <= tol {
            let report = k1_feasibility_with(&ops, &v, &vp.body)?;
            if report.max_operator_norm <= 1.0 + 10.0 * tol {
                stats.converged = true;
                break;
            }
        }
    }

    stats.energy = vector_energy(&ops, &v, &vp.eta);
    Ok((v, stats))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{build_grid, DomainShape};
    use crate::obstacle::psor_solve;
    use rand::SeedableRng;

    fn square_ops(h: f64) -> Arc<GridOperators> {
        GridOperators::build(Arc::new(
            build_grid(DomainShape::Rectangle { corner: [0.0, 0.0], widths: [1.0, 1.0] }, h)
                .unwrap(),
        ))
    }

    #[test]
    fn reduction_scales_obstacles_by_eta_norm() {
        let ops = square_ops(0.125);
        let body = ConvexBody::ball(2, 1.0).unwrap();
        let vp = VectorProblem::new(ops.clone(), body, vec![3.0, 4.0]).unwrap();
        let reduced = reduce_to_scalar(&vp).unwrap();
        let center = ops.grid.idx(4, 4);
        // Euclidean distance from the center is 0.5; |eta| = 5.
        assert!((reduced.obstacle.upper.values[center] - 0.1).abs() < 1e-10);
        assert!((reduced.obstacle.lower.values[center] + 0.1).abs() < 1e-10);
        assert!((reduced.k - 0.2).abs() < 1e-15);
    }

    #[test]
    fn unit_eta_keeps_plain_distance() {
        let ops = square_ops(0.125);
        let body = ConvexBody::ball(2, 1.0).unwrap();
        let vp = VectorProblem::new(ops.clone(), body, vec![0.0, 1.0]).unwrap();
        let reduced = reduce_to_scalar(&vp).unwrap();
        let center = ops.grid.idx(4, 4);
        assert!((reduced.obstacle.upper.values[center] - 0.5).abs() < 1e-10);
    }

    #[test]
    fn assemble_is_nodewise_product() {
        let ops = square_ops(0.25);
        let mut u = ScalarField::zeros(ops.grid.clone());
        let id = ops.grid.idx(2, 2);
        u.values[id] = 0.1;
        let v = assemble_vector(&u, &[3.0, 4.0]);
        assert!((v.get(id, 0) - 0.3).abs() < 1e-15);
        assert!((v.get(id, 1) - 0.4).abs() < 1e-15);

        let zero = assemble_vector(&ScalarField::zeros(ops.grid.clone()), &[3.0, 4.0]);
        assert!(zero.values.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn energy_identity_is_exact() {
        let ops = square_ops(1.0 / 32.0);
        let body = ConvexBody::ball(2, 1.0).unwrap();
        let eta = vec![3.0, 4.0];
        let vp = VectorProblem::new(ops.clone(), body, eta.clone()).unwrap();
        let reduced = reduce_to_scalar(&vp).unwrap();
        let (u, stats) = psor_solve(&reduced.obstacle, 1.8, 1e-10, 100_000);
        assert!(stats.converged);

        let assembled = assemble_vector(&u, &eta);
        let lhs = vector_energy(&ops, &assembled, &eta);
        let rhs = norm2(&eta).powi(2) * scalar_energy_j1(&ops, &u);
        assert!(
            (lhs - rhs).abs() <= 1e-10 * (1.0 + lhs.abs()),
            "I_h = {lhs}, |eta|^2 J1_h = {rhs}"
        );
    }

    #[test]
    fn invariance_under_reflection_and_identity() {
        let ops = square_ops(1.0 / 16.0);
        let body = ConvexBody::ball(2, 1.0).unwrap();
        let eta = vec![0.0, 1.0];
        let vp = VectorProblem::new(ops.clone(), body, eta.clone()).unwrap();
        let reduced = reduce_to_scalar(&vp).unwrap();
        let (u, _) = psor_solve(&reduced.obstacle, 1.8, 1e-10, 100_000);
        let v = assemble_vector(&u, &eta);

        let reflect = MatrixNn::new(2, 2, vec![-1.0, 0.0, 0.0, 1.0]).unwrap();
        let diff = invariance_check(&ops, &v, &eta, &reflect).unwrap();
        assert!(diff <= 1e-12 * (1.0 + vector_energy(&ops, &v, &eta).abs()));

        let identity = MatrixNn::new(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        assert_eq!(invariance_check(&ops, &v, &eta, &identity).unwrap(), 0.0);
    }

    #[test]
    fn invariance_rejects_non_orthogonal_maps() {
        let ops = square_ops(1.0 / 8.0);
        let v = VectorField::zeros(ops.grid.clone(), 2);
        let shear = MatrixNn::new(2, 2, vec![1.0, 0.5, 0.0, 1.0]).unwrap();
        assert!(invariance_check(&ops, &v, &[0.0, 1.0], &shear).is_err());
        // Orthogonal but moving eta.
        let rot = MatrixNn::new(2, 2, vec![0.0, -1.0, 1.0, 0.0]).unwrap();
        assert!(invariance_check(&ops, &v, &[0.0, 1.0], &rot).is_err());
    }

    #[test]
    fn random_orthogonal_maps_preserve_energy_in_3d() {
        let ops = square_ops(1.0 / 16.0);
        let body = ConvexBody::ball(2, 1.0).unwrap();
        let eta = vec![0.0, 0.0, 1.0];
        let vp = VectorProblem::new(ops.clone(), body, eta.clone()).unwrap();
        let reduced = reduce_to_scalar(&vp).unwrap();
        let (u, _) = psor_solve(&reduced.obstacle, 1.8, 1e-10, 100_000);
        let v = assemble_vector(&u, &eta);
        let energy = vector_energy(&ops, &v, &eta).abs();

        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let t = random_orthogonal_fixing(&eta, &mut rng);
            let diff = invariance_check(&ops, &v, &eta, &t).unwrap();
            assert!(diff <= 1e-10 * (1.0 + energy), "invariance drift {diff}");
        }
    }

    #[test]
    fn direct_solve_matches_reduction() {
        let h = 1.0 / 32.0;
        let ops = square_ops(h);
        let body = ConvexBody::ball(2, 1.0).unwrap();
        let eta = vec![0.0, 1.0];
        let vp = VectorProblem::new(ops.clone(), body, eta.clone()).unwrap();

        let reduced = reduce_to_scalar(&vp).unwrap();
        let (u, _) = psor_solve(&reduced.obstacle, 1.8, 1e-10, 100_000);
        let assembled = assemble_vector(&u, &eta);

        let (direct, stats) = direct_vector_solve(&vp, 10.0, 1e-8, 50_000).unwrap();
        assert!(stats.converged, "residual {}", stats.residual);

        let sup = direct.sup_diff(&assembled);
        assert!(sup <= 5.0 * h, "direct vs assembled sup {sup}");

        let report = k1_feasibility_with(&ops, &direct, &vp.body).unwrap();
        assert!(report.max_operator_norm <= 1.0 + 1e-7);
    }

    #[test]
    fn direct_solve_second_component_vanishes_in_1d() {
        let grid =
            Arc::new(build_grid(DomainShape::Interval { a: -1.0, b: 1.0 }, 1.0 / 64.0).unwrap());
        let ops = GridOperators::build(grid);
        let body = ConvexBody::ball(1, 1.0).unwrap();
        let vp = VectorProblem::new(ops.clone(), body, vec![1.0, 0.0]).unwrap();
        let (v, stats) = direct_vector_solve(&vp, 10.0, 1e-8, 50_000).unwrap();
        assert!(stats.converged);
        for &id in ops.grid.interior_nodes() {
            assert!(v.get(id, 1).abs() <= 1e-8, "second component {}", v.get(id, 1));
        }
    }

    #[test]
    fn direct_solve_requires_ball() {
        let ops = square_ops(0.125);
        let body = ConvexBody::cuboid(&[1.0, 1.0]).unwrap();
        let vp = VectorProblem::new(ops, body, vec![0.0, 1.0]).unwrap();
        assert!(matches!(
            direct_vector_solve(&vp, 10.0, 1e-8, 100),
            Err(Error::UnsupportedFamily(_))
        ));
    }

    #[test]
    fn assembled_solution_is_k1_feasible_and_bounded_by_distance() {
        let h = 1.0 / 32.0;
        let ops = square_ops(h);
        let body = ConvexBody::ball(2, 1.0).unwrap();
        let eta = vec![3.0, 4.0];
        let vp = VectorProblem::new(ops.clone(), body, eta.clone()).unwrap();
        let reduced = reduce_to_scalar(&vp).unwrap();
        let (u, _) = psor_solve(&reduced.obstacle, 1.8, 1e-10, 100_000);
        let v = assemble_vector(&u, &eta);

        let report = k1_feasibility_with(&ops, &v, &vp.body).unwrap();
        assert!(report.max_operator_norm <= 1.0 + 10.0 * h, "{report:?}");

        // K1 subset K2: |v(x)| <= d_K(x, dU) + C h.
        for &id in ops.grid.interior_nodes() {
            let mag = norm2(v.node(id));
            assert!(mag <= reduced.distance.values[id] + 5.0 * h);
        }
    }
}
