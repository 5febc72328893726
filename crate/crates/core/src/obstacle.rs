//! Projected SOR for the discrete double-obstacle problem: minimize
//! `sum 1/2 |grad v|^2 + g(v)` over `lower <= v <= upper` with `v = c` on the
//! boundary, and expose the active sets and KKT residuals.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::grid::NodeClass;
use crate::operators::{dirichlet_energy, GridOperators};
use crate::stats::SolveStats;

/// Zero-order term of the energy. The linear form contributes `-eta * v`;
/// a pluggable form supplies a convex `g` and its derivative.
#[derive(Clone)]
pub enum ZeroOrderTerm {
    Linear { eta: f64 },
    PluggableConvex {
        value: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
        derivative: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    },
}

impl fmt::Debug for ZeroOrderTerm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ZeroOrderTerm::Linear { eta } => write!(f, "Linear {{ eta: {eta} }}"),
            ZeroOrderTerm::PluggableConvex { .. } => write!(f, "PluggableConvex {{ .. }}"),
        }
    }
}

impl ZeroOrderTerm {
    pub fn value(&self, v: f64) -> f64 {
        match self {
            ZeroOrderTerm::Linear { eta } => -eta * v,
            ZeroOrderTerm::PluggableConvex { value, .. } => value(v),
        }
    }

    pub fn derivative(&self, v: f64) -> f64 {
        match self {
            ZeroOrderTerm::Linear { eta } => -eta,
            ZeroOrderTerm::PluggableConvex { derivative, .. } => derivative(v),
        }
    }

    /// Certifies that the derivative is nondecreasing on a 1000-point sample
    /// of `[lo, hi]`.
    fn certify_convex(&self, lo: f64, hi: f64) -> Result<()> {
        if let ZeroOrderTerm::PluggableConvex { derivative, .. } = self {
            let n = 1000;
            let span = (hi - lo).max(1e-9);
            let mut prev = f64::NEG_INFINITY;
            for i in 0..=n {
                let v = lo + span * i as f64 / n as f64;
                let d = derivative(v);
                if !d.is_finite() {
                    return Err(Error::Precondition(format!(
                        "zero-order derivative not finite at v = {v}"
                    )));
                }
                if d < prev - 1e-12 * (1.0 + d.abs() + prev.abs()) {
                    return Err(Error::Precondition(format!(
                        "zero-order derivative decreases near v = {v}: not convex"
                    )));
                }
                prev = prev.max(d);
            }
        }
        Ok(())
    }
}

/// Discrete double-obstacle problem. Obstacles must satisfy
/// `lower <= upper` everywhere and equal the boundary value on Boundary
/// nodes.
#[derive(Debug, Clone)]
pub struct ObstacleProblem {
    pub ops: Arc<GridOperators>,
    pub lower: ScalarField,
    pub upper: ScalarField,
    pub boundary_value: f64,
    pub zero_order: ZeroOrderTerm,
}

impl ObstacleProblem {
    pub fn new(
        ops: Arc<GridOperators>,
        lower: ScalarField,
        upper: ScalarField,
        boundary_value: f64,
        zero_order: ZeroOrderTerm,
    ) -> Result<Self> {
        lower.check_finite()?;
        upper.check_finite()?;
        let grid = &ops.grid;
        let mut range = (f64::INFINITY, f64::NEG_INFINITY);
        for id in 0..grid.node_count() {
            match grid.class(id) {
                NodeClass::Exterior => {}
                NodeClass::Boundary => {
                    let scale = 1.0 + boundary_value.abs();
                    if (lower.values[id] - boundary_value).abs() > 1e-10 * scale
                        || (upper.values[id] - boundary_value).abs() > 1e-10 * scale
                    {
                        return Err(Error::InconsistentObstacles(format!(
                            "obstacles must equal the boundary value {boundary_value} on Boundary nodes (node {id})"
                        )));
                    }
                }
                NodeClass::Interior => {
                    if lower.values[id] > upper.values[id] {
                        return Err(Error::InconsistentObstacles(format!(
                            "lower > upper at node {id}"
                        )));
                    }
                    range.0 = range.0.min(lower.values[id]);
                    range.1 = range.1.max(upper.values[id]);
                }
            }
        }
        zero_order.certify_convex(range.0.min(boundary_value), range.1.max(boundary_value))?;
        Ok(ObstacleProblem { ops, lower, upper, boundary_value, zero_order })
    }

    /// Discrete energy `1/2 |grad v|^2 + g(v)` of a feasible iterate.
    pub fn energy(&self, v: &ScalarField) -> f64 {
        total_energy(&self.ops, v, &self.zero_order, 0.5)
    }
}

/// Discrete energy `quad_coeff * |grad v|^2 + g(v)` with the given zero-order
/// term; shared by both solvers so cross-formulation energies are comparable.
pub fn total_energy(
    ops: &Arc<GridOperators>,
    v: &ScalarField,
    zero_order: &ZeroOrderTerm,
    quad_coeff: f64,
) -> f64 {
    let quad = dirichlet_energy(ops, v, quad_coeff);
    let zero: f64 = ops
        .grid
        .interior_nodes()
        .iter()
        .map(|&id| zero_order.value(v.values[id]) * ops.node_volume[id])
        .sum();
    quad + zero
}

/// Unconstrained Gauss-Seidel target at one node: the minimizer of the nodal
/// energy with neighbors frozen. `s` is the weighted neighbor sum, `w` the
/// total stencil weight, `vol` the node volume.
fn nodal_minimizer(problem: &ObstacleProblem, current: f64, s: f64, w: f64, vol: f64) -> f64 {
    match &problem.zero_order {
        ZeroOrderTerm::Linear { eta } => (s + eta * vol) / w,
        ZeroOrderTerm::PluggableConvex { derivative, .. } => {
            // F(u) = w u - s + g'(u) vol is strictly increasing; Newton with
            // a bisection fallback.
            let f = |u: f64| w * u - s + derivative(u) * vol;
            let mut u = current;
            let mut converged = false;
            for _ in 0..30 {
                let fu = f(u);
                if fu.abs() <= 1e-14 * (1.0 + w * u.abs()) {
                    converged = true;
                    break;
                }
                let step = 1e-6 * (1.0 + u.abs());
                let dfu = (f(u + step) - f(u - step)) / (2.0 * step);
                if !(dfu > 0.0) {
                    break;
                }
                let next = u - fu / dfu;
                if !next.is_finite() {
                    break;
                }
                if (next - u).abs() <= 1e-15 * (1.0 + u.abs()) {
                    u = next;
                    converged = true;
                    break;
                }
                u = next;
            }
            if converged {
                return u;
            }
            // Bisection fallback on an expanding bracket.
            let mut lo = u - 1.0;
            let mut hi = u + 1.0;
            let mut width = 1.0;
            while f(lo) > 0.0 {
                width *= 2.0;
                lo -= width;
            }
            while f(hi) < 0.0 {
                width *= 2.0;
                hi += width;
            }
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if f(mid) > 0.0 {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            0.5 * (lo + hi)
        }
    }
}

fn stencil(problem: &ObstacleProblem, u: &ScalarField, id: usize) -> (f64, f64) {
    let ops = &problem.ops;
    let mut s = 0.0;
    let mut w = 0.0;
    for &(eidx, other) in ops.incident_edges(id) {
        let we = ops.edges[eidx].weight;
        s += we * u.values[other];
        w += we;
    }
    (s, w)
}

/// Strict fixed-point residual: max over interior nodes of the distance
/// between the current value and its clipped Gauss-Seidel update, without
/// modifying the iterate.
fn fixed_point_residual(problem: &ObstacleProblem, u: &ScalarField) -> f64 {
    let ops = &problem.ops;
    let mut worst = 0.0_f64;
    for &id in ops.grid.interior_nodes() {
        let (s, w) = stencil(problem, u, id);
        let target = nodal_minimizer(problem, u.values[id], s, w, ops.node_volume[id]);
        let clipped = target.clamp(problem.lower.values[id], problem.upper.values[id]);
        worst = worst.max((clipped - u.values[id]).abs());
    }
    worst
}

/// Projected SOR solve. Sweeps alternate lexicographic and
/// reverse-lexicographic order; each nodal update is over-relaxed by `omega`
/// and clipped into the obstacle interval, so every sweep ends feasible.
/// Convergence means the strict fixed-point residual is at most `tol`.
pub fn psor_solve(
    problem: &ObstacleProblem,
    omega: f64,
    tol: f64,
    max_sweeps: usize,
) -> (ScalarField, SolveStats) {
    assert!(omega > 0.0 && omega < 2.0, "omega must lie in (0, 2)");
    let ops = problem.ops.clone();
    let grid = &ops.grid;

    let mut u = ScalarField::zeros(grid.clone());
    for id in 0..grid.node_count() {
        match grid.class(id) {
            NodeClass::Exterior => {}
            NodeClass::Boundary => u.values[id] = problem.boundary_value,
            NodeClass::Interior => {
                u.values[id] = problem
                    .boundary_value
                    .clamp(problem.lower.values[id], problem.upper.values[id]);
            }
        }
    }

    let mut stats = SolveStats::new();
    stats.energy_trace.push(problem.energy(&u));

    let interior: Vec<usize> = grid.interior_nodes().to_vec();
    let mut sweep = 0;
    while sweep < max_sweeps {
        let mut in_sweep_res = 0.0_f64;
        let order: Box<dyn Iterator<Item = &usize>> = if sweep % 2 == 0 {
            Box::new(interior.iter())
        } else {
            Box::new(interior.iter().rev())
        };
        for &id in order {
            let lo = problem.lower.values[id];
            let hi = problem.upper.values[id];
            if hi - lo <= 0.0 {
                // Pinched obstacles pin the value (lower side wins the tie).
                in_sweep_res = in_sweep_res.max((u.values[id] - lo).abs());
                u.values[id] = lo;
                continue;
            }
            let (s, w) = stencil(problem, &u, id);
            let target = nodal_minimizer(problem, u.values[id], s, w, ops.node_volume[id]);
            in_sweep_res = in_sweep_res.max((target.clamp(lo, hi) - u.values[id]).abs());
            let relaxed = u.values[id] + omega * (target - u.values[id]);
            u.values[id] = relaxed.clamp(lo, hi);
        }
        sweep += 1;
        stats.energy_trace.push(problem.energy(&u));

        if in_sweep_res <= tol {
            let strict = fixed_point_residual(problem, &u);
            if strict <= tol {
                stats.converged = true;
                stats.residual = strict;
                break;
            }
        }
        stats.residual = in_sweep_res;
    }

    stats.iterations = sweep;
    if !stats.converged {
        stats.residual = fixed_point_residual(problem, &u);
        stats.converged = stats.residual <= tol;
    }
    stats.energy = problem.energy(&u);
    (u, stats)
}

/// Masks partitioning the interior nodes by obstacle contact.
#[derive(Debug, Clone)]
pub struct ActiveSets {
    /// `u <= lower + tol_act`; ties with the upper set resolve here.
    pub lower: Vec<bool>,
    /// `u >= upper - tol_act` and not in `lower`.
    pub upper: Vec<bool>,
    /// The elastic rest.
    pub elastic: Vec<bool>,
}

impl ActiveSets {
    pub fn count(&self) -> (usize, usize, usize) {
        let c = |m: &[bool]| m.iter().filter(|&&b| b).count();
        (c(&self.lower), c(&self.upper), c(&self.elastic))
    }
}

/// Classifies interior nodes into lower-active, upper-active, and elastic
/// sets. `tol_act` defaults to ten times the solver tolerance.
pub fn active_sets(u: &ScalarField, problem: &ObstacleProblem, tol_act: f64) -> ActiveSets {
    let n = problem.ops.grid.node_count();
    let mut sets = ActiveSets {
        lower: vec![false; n],
        upper: vec![false; n],
        elastic: vec![false; n],
    };
    for &id in problem.ops.grid.interior_nodes() {
        if u.values[id] <= problem.lower.values[id] + tol_act {
            sets.lower[id] = true;
        } else if u.values[id] >= problem.upper.values[id] - tol_act {
            sets.upper[id] = true;
        } else {
            sets.elastic[id] = true;
        }
    }
    sets
}

/// Residuals of the discrete complementarity system, in per-volume form
/// (`-lap u + g'(u)` scaling).
#[derive(Debug, Clone, serde::Serialize)]
pub struct KktReport {
    /// Max over elastic nodes of the equation residual magnitude.
    pub max_elastic_residual: f64,
    /// Min over lower-active nodes of the multiplier; should be >= -tol.
    pub min_lower_multiplier: f64,
    /// Max over upper-active nodes of the multiplier; should be <= tol.
    pub max_upper_multiplier: f64,
}

pub fn kkt_residuals(u: &ScalarField, problem: &ObstacleProblem, sets: &ActiveSets) -> KktReport {
    let ops = &problem.ops;
    let mut report = KktReport {
        max_elastic_residual: 0.0,
        min_lower_multiplier: f64::INFINITY,
        max_upper_multiplier: f64::NEG_INFINITY,
    };
    for &id in ops.grid.interior_nodes() {
        let (s, w) = stencil(problem, u, id);
        let grad = (w * u.values[id] - s) / ops.node_volume[id]
            + problem.zero_order.derivative(u.values[id]);
        if sets.elastic[id] {
            report.max_elastic_residual = report.max_elastic_residual.max(grad.abs());
        } else if sets.lower[id] {
            report.min_lower_multiplier = report.min_lower_multiplier.min(grad);
        } else if sets.upper[id] {
            report.max_upper_multiplier = report.max_upper_multiplier.max(grad);
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::convex::ConvexBody;
    use crate::distance::{build_obstacles, gauge_distance_map};
    use crate::grid::{build_grid, DomainShape};

    /// Classical 1-D free-boundary solution on (-1, 1) with k = 1, c = 0:
    /// plastic `1 - |x|` outside `|x| = 1/eta`, elastic parabola inside.
    fn torsion_exact(x: f64, eta: f64) -> f64 {
        let xs = (1.0 / eta).min(1.0);
        if x.abs() >= xs {
            1.0 - x.abs()
        } else {
            eta * (xs * xs - x * x) / 2.0 + 1.0 - xs
        }
    }

    fn torsion_problem(h: f64, eta: f64) -> ObstacleProblem {
        let grid = Arc::new(build_grid(DomainShape::Interval { a: -1.0, b: 1.0 }, h).unwrap());
        let body = ConvexBody::ball(1, 1.0).unwrap();
        let polar = body.polar().unwrap();
        let d = gauge_distance_map(&grid, &polar).unwrap();
        let (lower, upper) = build_obstacles(&d, 0.0, 1.0).unwrap();
        let ops = GridOperators::build(grid);
        ObstacleProblem::new(ops, lower, upper, 0.0, ZeroOrderTerm::Linear { eta }).unwrap()
    }

    #[test]
    fn torsion_matches_analytic_solution() {
        let h = 1.0 / 256.0;
        let problem = torsion_problem(h, 4.0);
        let (u, stats) = psor_solve(&problem, 1.8, 1e-10, 100_000);
        assert!(stats.converged, "residual {}", stats.residual);

        let grid = &problem.ops.grid;
        let mut sup = 0.0_f64;
        for &id in grid.interior_nodes() {
            let x = grid.position(id)[0];
            sup = sup.max((u.values[id] - torsion_exact(x, 4.0)).abs());
        }
        assert!(sup <= 2e-3, "sup error {sup}");

        let center = grid.idx(grid.nx / 2, 0);
        assert!((u.values[center] - 0.875).abs() <= 2e-3);

        // Upper active set starts within 2h of x* = 0.25.
        let sets = active_sets(&u, &problem, 1e-9);
        let mut first_plastic = f64::INFINITY;
        for &id in grid.interior_nodes() {
            let x = grid.position(id)[0];
            if x > 0.0 && sets.upper[id] {
                first_plastic = first_plastic.min(x);
            }
        }
        assert!((first_plastic - 0.25).abs() <= 2.0 * h, "free boundary at {first_plastic}");
    }

    #[test]
    fn fully_elastic_when_constraint_slack() {
        let h = 1.0 / 128.0;
        let problem = torsion_problem(h, 1.0);
        let (u, stats) = psor_solve(&problem, 1.8, 1e-10, 100_000);
        assert!(stats.converged);
        let grid = &problem.ops.grid;
        for &id in grid.interior_nodes() {
            let x = grid.position(id)[0];
            let exact = (1.0 - x * x) / 2.0;
            assert!((u.values[id] - exact).abs() < 1e-6, "at {x}");
        }
        let sets = active_sets(&u, &problem, 1e-9);
        let (nl, nu, ne) = sets.count();
        assert_eq!((nl, nu), (0, 0));
        assert_eq!(ne, grid.interior_nodes().len());
    }

    #[test]
    fn pinched_obstacles_pin_the_constant() {
        let grid = Arc::new(build_grid(DomainShape::Interval { a: -1.0, b: 1.0 }, 0.125).unwrap());
        let ops = GridOperators::build(grid.clone());
        let lower = ScalarField::constant(grid.clone(), 2.0);
        let upper = ScalarField::constant(grid.clone(), 2.0);
        let problem =
            ObstacleProblem::new(ops, lower, upper, 2.0, ZeroOrderTerm::Linear { eta: 7.0 })
                .unwrap();
        let (u, stats) = psor_solve(&problem, 1.8, 1e-10, 1000);
        assert!(stats.converged);
        for &id in grid.interior_nodes() {
            assert_eq!(u.values[id], 2.0);
        }
        let sets = active_sets(&u, &problem, 1e-9);
        let (nl, nu, _) = sets.count();
        assert_eq!(nl, grid.interior_nodes().len(), "ties classify into the lower set");
        assert_eq!(nu, 0);
    }

    #[test]
    fn saturation_at_large_eta() {
        let problem = torsion_problem(1.0 / 128.0, 1e6);
        let (u, stats) = psor_solve(&problem, 1.8, 1e-10, 100_000);
        assert!(stats.converged);
        let sets = active_sets(&u, &problem, 1e-9);
        let (_, nu, _) = sets.count();
        assert_eq!(nu, problem.ops.grid.interior_nodes().len());
    }

    #[test]
    fn energy_is_monotone_and_iterates_feasible() {
        let problem = torsion_problem(1.0 / 64.0, 4.0);
        let (u, stats) = psor_solve(&problem, 1.8, 1e-10, 100_000);
        for pair in stats.energy_trace.windows(2) {
            assert!(
                pair[1] <= pair[0] + 1e-12 * (1.0 + pair[0].abs()),
                "energy increased: {} -> {}",
                pair[0],
                pair[1]
            );
        }
        for &id in problem.ops.grid.interior_nodes() {
            assert!(u.values[id] >= problem.lower.values[id] - 1e-12);
            assert!(u.values[id] <= problem.upper.values[id] + 1e-12);
        }
    }

    #[test]
    fn solution_increases_with_eta() {
        let p1 = torsion_problem(1.0 / 128.0, 1.0);
        let p4 = torsion_problem(1.0 / 128.0, 4.0);
        let (u1, _) = psor_solve(&p1, 1.8, 1e-10, 100_000);
        let (u4, _) = psor_solve(&p4, 1.8, 1e-10, 100_000);
        for &id in p1.ops.grid.interior_nodes() {
            assert!(u4.values[id] >= u1.values[id] - 1e-9);
        }
    }

    #[test]
    fn mesh_convergence_on_torsion() {
        let coarse = torsion_problem(1.0 / 64.0, 4.0);
        let fine = torsion_problem(1.0 / 128.0, 4.0);
        let (uc, _) = psor_solve(&coarse, 1.8, 1e-10, 100_000);
        let (uf, _) = psor_solve(&fine, 1.8, 1e-10, 100_000);
        let gc = &coarse.ops.grid;
        let gf = &fine.ops.grid;
        let mut sup = 0.0_f64;
        for &id in gc.interior_nodes() {
            let (i, _) = gc.coords(id);
            let fid = gf.idx(2 * i, 0);
            sup = sup.max((uc.values[id] - uf.values[fid]).abs());
        }
        assert!(sup <= 1.0 / 64.0, "coarse-fine sup diff {sup}");
    }

    #[test]
    fn kkt_residuals_on_torsion() {
        let h = 1.0 / 256.0;
        let tol = 1e-10;
        let problem = torsion_problem(h, 4.0);
        let (u, _) = psor_solve(&problem, 1.8, tol, 100_000);
        let sets = active_sets(&u, &problem, 1e-9);
        let report = kkt_residuals(&u, &problem, &sets);
        let c_tol = 10.0 * tol / (h * h);
        assert!(report.max_elastic_residual <= c_tol, "{report:?}");
        assert!(report.min_lower_multiplier == f64::INFINITY, "no lower contact expected");
        assert!(report.max_upper_multiplier <= c_tol, "{report:?}");
    }

    #[test]
    fn kkt_vacuous_when_fully_elastic() {
        let problem = torsion_problem(1.0 / 128.0, 1.0);
        let (u, _) = psor_solve(&problem, 1.8, 1e-10, 100_000);
        let sets = active_sets(&u, &problem, 1e-9);
        let report = kkt_residuals(&u, &problem, &sets);
        assert_eq!(report.min_lower_multiplier, f64::INFINITY);
        assert_eq!(report.max_upper_multiplier, f64::NEG_INFINITY);
    }

    #[test]
    fn pluggable_quadratic_term() {
        let grid = Arc::new(
            build_grid(DomainShape::Rectangle { corner: [0.0, 0.0], widths: [1.0, 1.0] }, 0.0625)
                .unwrap(),
        );
        let body = ConvexBody::ball(2, 1.0).unwrap();
        let d = gauge_distance_map(&grid, &body.polar().unwrap()).unwrap();
        let (lower, upper) = build_obstacles(&d, 0.0, 1.0).unwrap();
        let ops = GridOperators::build(grid.clone());
        let g = ZeroOrderTerm::PluggableConvex {
            value: Arc::new(|v| v * v),
            derivative: Arc::new(|v| 2.0 * v),
        };
        let problem = ObstacleProblem::new(ops, lower, upper, 0.0, g).unwrap();
        let tol = 1e-10;
        let (u, stats) = psor_solve(&problem, 1.8, tol, 100_000);
        assert!(stats.converged);
        let sets = active_sets(&u, &problem, 1e-9);
        let report = kkt_residuals(&u, &problem, &sets);
        // -lap u + 2u = 0 in the elastic region.
        let h = grid.h;
        assert!(report.max_elastic_residual <= 10.0 * tol / (h * h), "{report:?}");
    }

    #[test]
    fn convexity_certificate_rejects_concave_terms() {
        let grid = Arc::new(build_grid(DomainShape::Interval { a: -1.0, b: 1.0 }, 0.125).unwrap());
        let body = ConvexBody::ball(1, 1.0).unwrap();
        let d = gauge_distance_map(&grid, &body.polar().unwrap()).unwrap();
        let (lower, upper) = build_obstacles(&d, 0.0, 1.0).unwrap();
        let ops = GridOperators::build(grid);
        let bad = ZeroOrderTerm::PluggableConvex {
            value: Arc::new(|v| -v * v),
            derivative: Arc::new(|v| -2.0 * v),
        };
        assert!(ObstacleProblem::new(ops, lower, upper, 0.0, bad).is_err());
    }
}
