//! Discrete gradient/divergence pair, graph Laplacian, energies, and a
//! conjugate-gradient solve on a grid.
//!
//! Gradients are forward differences on cells. Each lattice edge joins two
//! non-Exterior nodes of which at least one is interior; cut edges (interior
//! to snapped boundary point) have length `theta * h`. With edge measure
//! `m_e = h^(n-1) * len` and node volumes from the arm lengths, the
//! divergence below is the exact negative adjoint of the gradient, and both
//! solvers minimize the same discrete energy.

use std::sync::Arc;

use crate::field::ScalarField;
use crate::grid::{Arm, GridDomain, NodeClass};

#[derive(Debug, Clone, Copy)]
pub struct Edge {
    /// Anchor node (the cell the edge belongs to).
    pub a: usize,
    /// Neighbor in the +axis direction.
    pub b: usize,
    pub axis: usize,
    /// Geometric length: `h`, or `theta * h` for cut edges.
    pub len: f64,
    /// Stiffness `h^(n-1) / len`.
    pub weight: f64,
    /// Measure `h^(n-1) * len` for gradient-space inner products.
    pub measure: f64,
}

/// Edge/cell structure of a grid, shared by the obstacle and splitting
/// solvers and by the diagnostics.
#[derive(Debug)]
pub struct GridOperators {
    pub grid: Arc<GridDomain>,
    pub edges: Vec<Edge>,
    /// Forward edges per node and axis (the cell layout of the gradient).
    pub cells: Vec<[Option<usize>; 2]>,
    /// Interior node volumes; zero on non-interior nodes.
    pub node_volume: Vec<f64>,
    /// Incident edges per interior node: (edge index, other endpoint).
    incident: Vec<Vec<(usize, usize)>>,
    /// Dense index of interior nodes.
    pub interior_index: Vec<Option<usize>>,
}

impl GridOperators {
    pub fn build(grid: Arc<GridDomain>) -> Arc<Self> {
        let n = grid.node_count();
        let transverse = grid.h.powi(grid.dim as i32 - 1);
        let mut edges = Vec::new();
        let mut cells = vec![[None, None]; n];

        for id in 0..n {
            if grid.class(id) == NodeClass::Exterior {
                continue;
            }
            for axis in 0..grid.dim {
                let dir = 2 * axis; // +x, +y
                let Some(nb) = grid.neighbor(id, dir) else { continue };
                if grid.class(nb) == NodeClass::Exterior {
                    continue;
                }
                let len = match (grid.class(id), grid.class(nb)) {
                    (NodeClass::Interior, NodeClass::Interior) => grid.h,
                    (NodeClass::Interior, NodeClass::Boundary) => match grid.arm(id, dir) {
                        Arm::Cut(theta) => theta * grid.h,
                        // Neighbor inside but classified Boundary cannot happen.
                        _ => grid.h,
                    },
                    (NodeClass::Boundary, NodeClass::Interior) => match grid.arm(nb, dir + 1) {
                        Arm::Cut(theta) => theta * grid.h,
                        _ => grid.h,
                    },
                    _ => continue, // boundary-boundary carries no energy
                };
                let idx = edges.len();
                edges.push(Edge {
                    a: id,
                    b: nb,
                    axis,
                    len,
                    weight: transverse / len,
                    measure: transverse * len,
                });
                cells[id][axis] = Some(idx);
            }
        }

        let mut incident = vec![Vec::new(); n];
        for (idx, e) in edges.iter().enumerate() {
            incident[e.a].push((idx, e.b));
            incident[e.b].push((idx, e.a));
        }

        let mut node_volume = vec![0.0; n];
        for &id in grid.interior_nodes() {
            let mut v = 1.0;
            for axis in 0..grid.dim {
                let arm_len = |dir: usize| match grid.arm(id, dir) {
                    Arm::Full => grid.h,
                    Arm::Cut(theta) => theta * grid.h,
                    Arm::None => grid.h,
                };
                v *= 0.5 * (arm_len(2 * axis) + arm_len(2 * axis + 1));
            }
            node_volume[id] = v;
        }

        let mut interior_index = vec![None; n];
        for (k, &id) in grid.interior_nodes().iter().enumerate() {
            interior_index[id] = Some(k);
        }

        Arc::new(GridOperators { grid, edges, cells, node_volume, incident, interior_index })
    }

    pub fn incident_edges(&self, id: usize) -> &[(usize, usize)] {
        &self.incident[id]
    }
}

/// One value per edge; grouped into per-cell n-vectors through
/// `GridOperators::cells`.
#[derive(Debug, Clone)]
pub struct GradientField {
    pub ops: Arc<GridOperators>,
    pub values: Vec<f64>,
}

impl GradientField {
    pub fn zeros(ops: Arc<GridOperators>) -> Self {
        let n = ops.edges.len();
        GradientField { ops, values: vec![0.0; n] }
    }
}

/// Forward-difference gradient `(v_b - v_a) / len` per edge.
pub fn discrete_gradient(ops: &Arc<GridOperators>, v: &ScalarField) -> GradientField {
    let mut g = GradientField::zeros(ops.clone());
    for (idx, e) in ops.edges.iter().enumerate() {
        g.values[idx] = (v.values[e.b] - v.values[e.a]) / e.len;
    }
    g
}

/// Exact negative adjoint of `discrete_gradient` with respect to the edge
/// measures and interior node volumes: `<grad v, w> = -<v, div w>` for every
/// v vanishing on Boundary nodes. Nonzero on interior nodes only.
pub fn discrete_divergence(w: &GradientField) -> ScalarField {
    let ops = &w.ops;
    let mut out = ScalarField::zeros(ops.grid.clone());
    for (idx, e) in ops.edges.iter().enumerate() {
        let flux = e.measure / e.len * w.values[idx];
        if ops.grid.is_interior(e.a) {
            out.values[e.a] += flux;
        }
        if ops.grid.is_interior(e.b) {
            out.values[e.b] -= flux;
        }
    }
    for &id in ops.grid.interior_nodes() {
        out.values[id] /= ops.node_volume[id];
    }
    out
}

/// `sum_e m_e g_e w_e`.
pub fn edge_inner(a: &GradientField, b: &GradientField) -> f64 {
    a.values
        .iter()
        .zip(&b.values)
        .zip(&a.ops.edges)
        .map(|((x, y), e)| e.measure * x * y)
        .sum()
}

/// `sum_P u_P v_P V_P` over interior nodes.
pub fn node_inner(ops: &GridOperators, u: &ScalarField, v: &ScalarField) -> f64 {
    ops.grid
        .interior_nodes()
        .iter()
        .map(|&id| u.values[id] * v.values[id] * ops.node_volume[id])
        .sum()
}

/// Quadratic part of the energy: `quad_coeff * sum_e m_e |grad v|_e^2`.
/// `quad_coeff` is 0.5 for the obstacle convention and 1.0 for the
/// vector-problem convention.
pub fn dirichlet_energy(ops: &Arc<GridOperators>, v: &ScalarField, quad_coeff: f64) -> f64 {
    let g = discrete_gradient(ops, v);
    quad_coeff * edge_inner(&g, &g)
}

/// Graph Laplacian `(L u)_P = sum_{e at P} weight_e (u_P - u_other)` on
/// interior nodes; boundary values of `u` are read as Dirichlet data.
pub fn apply_laplacian(ops: &GridOperators, u: &ScalarField, out: &mut Vec<f64>) {
    out.clear();
    out.resize(ops.grid.interior_nodes().len(), 0.0);
    for (k, &id) in ops.grid.interior_nodes().iter().enumerate() {
        let mut acc = 0.0;
        for &(eidx, other) in ops.incident_edges(id) {
            acc += ops.edges[eidx].weight * (u.values[id] - u.values[other]);
        }
        out[k] = acc;
    }
}

/// Jacobi-preconditioned conjugate gradients on an SPD operator given as a
/// closure. `precond_inv` is the inverse diagonal (pass `None` for plain
/// CG); `x` carries the initial guess and receives the solution. Returns
/// (iterations, relative residual).
pub fn cg_general(
    apply: impl Fn(&[f64], &mut [f64]),
    precond_inv: Option<&[f64]>,
    b: &[f64],
    x: &mut [f64],
    rel_tol: f64,
    max_iters: usize,
) -> (usize, f64) {
    let n = b.len();
    let mut ax = vec![0.0; n];
    apply(x, &mut ax);
    let mut r: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
    let bnorm = b.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-300);

    let apply_precond = |r: &[f64], z: &mut Vec<f64>| {
        z.clear();
        match precond_inv {
            Some(d) => z.extend(r.iter().zip(d).map(|(ri, di)| ri * di)),
            None => z.extend_from_slice(r),
        }
    };

    let mut z = Vec::with_capacity(n);
    apply_precond(&r, &mut z);
    let mut p = z.clone();
    let mut rz: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
    let mut rnorm: f64 = r.iter().map(|v| v * v).sum::<f64>().sqrt();
    let mut iters = 0;
    let mut ap = vec![0.0; n];

    while rnorm / bnorm > rel_tol && iters < max_iters {
        apply(&p, &mut ap);
        let pap: f64 = p.iter().zip(&ap).map(|(a, b)| a * b).sum();
        if pap <= 0.0 {
            break;
        }
        let step = rz / pap;
        for k in 0..n {
            x[k] += step * p[k];
            r[k] -= step * ap[k];
        }
        apply_precond(&r, &mut z);
        let rz_next: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
        let beta = rz_next / rz;
        for k in 0..n {
            p[k] = z[k] + beta * p[k];
        }
        rz = rz_next;
        rnorm = r.iter().map(|v| v * v).sum::<f64>().sqrt();
        iters += 1;
    }
    (iters, rnorm / bnorm)
}

/// Diagonal of `alpha * L + diag(extra)` on interior nodes.
pub fn interior_diagonal(ops: &GridOperators, alpha: f64, extra: Option<&[f64]>) -> Vec<f64> {
    ops.grid
        .interior_nodes()
        .iter()
        .enumerate()
        .map(|(k, &id)| {
            let mut acc = 0.0;
            for &(eidx, _) in ops.incident_edges(id) {
                acc += ops.edges[eidx].weight;
            }
            alpha * acc + extra.map_or(0.0, |d| d[k])
        })
        .collect()
}

/// Applies `alpha * L + diag(extra)` to an interior vector, with zero
/// Dirichlet data on the boundary.
pub fn apply_interior_operator(
    ops: &GridOperators,
    alpha: f64,
    extra_diag: Option<&[f64]>,
    x: &[f64],
    y: &mut [f64],
) {
    let interior = ops.grid.interior_nodes();
    for (k, &id) in interior.iter().enumerate() {
        let mut acc = 0.0;
        for &(eidx, other) in ops.incident_edges(id) {
            let w = ops.edges[eidx].weight;
            acc += w * x[k];
            if let Some(ko) = ops.interior_index[other] {
                acc -= w * x[ko];
            }
        }
        y[k] = alpha * acc;
        if let Some(d) = extra_diag {
            y[k] += d[k] * x[k];
        }
    }
}

/// Solves `alpha * L u = rhs` for the interior values of `u` by conjugate
/// gradients, treating Boundary entries of `u` as fixed Dirichlet data and
/// the current interior entries as the initial guess. Returns (iterations,
/// relative residual).
pub fn cg_solve(
    ops: &GridOperators,
    alpha: f64,
    rhs: &[f64],
    u: &mut ScalarField,
    rel_tol: f64,
    max_iters: usize,
) -> (usize, f64) {
    let interior = ops.grid.interior_nodes();
    let n = interior.len();
    assert_eq!(rhs.len(), n);

    // Fold Dirichlet columns into the right-hand side.
    let mut b = rhs.to_vec();
    for (k, &id) in interior.iter().enumerate() {
        for &(eidx, other) in ops.incident_edges(id) {
            if !ops.grid.is_interior(other) {
                b[k] += alpha * ops.edges[eidx].weight * u.values[other];
            }
        }
    }

    let mut x: Vec<f64> = interior.iter().map(|&id| u.values[id]).collect();
    let inv_diag: Vec<f64> = interior_diagonal(ops, alpha, None)
        .iter()
        .map(|d| 1.0 / d)
        .collect();
    let (iters, res) = cg_general(
        |v, y| apply_interior_operator(ops, alpha, None, v, y),
        Some(&inv_diag),
        &b,
        &mut x,
        rel_tol,
        max_iters,
    );
    for (k, &id) in interior.iter().enumerate() {
        u.values[id] = x[k];
    }
    (iters, res)
}

/// Max over edges of `|u_a - u_b| - k * gauge(step)`, the excess over the
/// discrete gauge-Lipschitz bound. `polar_body` is the metric body for the
/// step vectors.
pub fn max_lipschitz_excess(
    ops: &GridOperators,
    u: &ScalarField,
    polar_body: &crate::convex::ConvexBody,
    k: f64,
) -> f64 {
    let mut worst = f64::NEG_INFINITY;
    for e in &ops.edges {
        let mut step = vec![0.0; ops.grid.dim];
        step[e.axis] = e.len;
        let bound = k * polar_body.gauge_raw(&step);
        let diff = (u.values[e.a] - u.values[e.b]).abs();
        worst = worst.max(diff - bound);
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{build_grid, DomainShape};
    use rand::{Rng, SeedableRng};

    fn square_ops(h: f64) -> Arc<GridOperators> {
        let grid = Arc::new(
            build_grid(DomainShape::Rectangle { corner: [0.0, 0.0], widths: [1.0, 1.0] }, h)
                .unwrap(),
        );
        GridOperators::build(grid)
    }

    #[test]
    fn gradient_exact_for_affine() {
        let ops = square_ops(0.125);
        let v = ScalarField::from_fn(ops.grid.clone(), |p| 2.0 * p[0] - 3.0 * p[1] + 0.5);
        let g = discrete_gradient(&ops, &v);
        for (idx, e) in ops.edges.iter().enumerate() {
            let expect = if e.axis == 0 { 2.0 } else { -3.0 };
            assert!((g.values[idx] - expect).abs() < 1e-12);
        }

        let c = ScalarField::constant(ops.grid.clone(), 4.0);
        let gc = discrete_gradient(&ops, &c);
        assert!(gc.values.iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn divergence_is_negative_adjoint() {
        for shape in [
            DomainShape::Rectangle { corner: [0.0, 0.0], widths: [1.0, 1.0] },
            DomainShape::Disk { center: [0.0, 0.0], radius: 1.0 },
            DomainShape::Interval { a: -1.0, b: 1.0 },
        ] {
            let grid = Arc::new(build_grid(shape, 0.11).unwrap());
            let ops = GridOperators::build(grid);
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);

            let mut v = ScalarField::zeros(ops.grid.clone());
            for &id in ops.grid.interior_nodes() {
                v.values[id] = rng.gen_range(-1.0..1.0);
            }
            let mut w = GradientField::zeros(ops.clone());
            for val in w.values.iter_mut() {
                *val = rng.gen_range(-1.0..1.0);
            }

            let gv = discrete_gradient(&ops, &v);
            let dw = discrete_divergence(&w);
            let lhs = edge_inner(&gv, &w);
            let rhs = -node_inner(&ops, &v, &dw);
            let scale = 1.0 + lhs.abs() + rhs.abs();
            assert!((lhs - rhs).abs() <= 1e-12 * scale, "{lhs} vs {rhs}");
        }
    }

    #[test]
    fn cg_solves_poisson() {
        let ops = square_ops(0.0625);
        // -Laplace u = 2 pi^2 sin(pi x) sin(pi y) has the separable solution.
        let pi = std::f64::consts::PI;
        let rhs: Vec<f64> = ops
            .grid
            .interior_nodes()
            .iter()
            .map(|&id| {
                let p = ops.grid.position(id);
                2.0 * pi * pi * (pi * p[0]).sin() * (pi * p[1]).sin() * ops.node_volume[id]
            })
            .collect();
        let mut u = ScalarField::zeros(ops.grid.clone());
        let (_, res) = cg_solve(&ops, 1.0, &rhs, &mut u, 1e-12, 10_000);
        assert!(res <= 1e-12);
        for &id in ops.grid.interior_nodes() {
            let p = ops.grid.position(id);
            let exact = (pi * p[0]).sin() * (pi * p[1]).sin();
            assert!((u.values[id] - exact).abs() < 5e-3, "at {p:?}");
        }
    }
}
