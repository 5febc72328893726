//! Anisotropic boundary distance `d(x) = min_{y on dU} gauge(x - y)` and the
//! extremal obstacles `c -/+ k d` built from it.
//!
//! The minimum over the boundary of a convex shape is computed exactly: per
//! boundary edge the 1-D problem is convex and solved by golden section; the
//! disk uses a multistart over the boundary angle. No eikonal discretization
//! error enters the obstacles.

use std::sync::Arc;

use crate::convex::ConvexBody;
use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::grid::{BoundaryPieces, GridDomain, NodeClass};

const GOLDEN_TOL: f64 = 1e-12;
const GOLDEN_MAX_ITERS: usize = 200;

/// Golden-section minimization of a unimodal function on [a, b], to a
/// bracket of width `GOLDEN_TOL * (b - a)`.
fn golden_section(f: impl Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let tol = GOLDEN_TOL * (b - a);
    let (mut lo, mut hi) = (a, b);
    let mut x1 = hi - INV_PHI * (hi - lo);
    let mut x2 = lo + INV_PHI * (hi - lo);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    for _ in 0..GOLDEN_MAX_ITERS {
        if hi - lo <= tol {
            break;
        }
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - INV_PHI * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + INV_PHI * (hi - lo);
            f2 = f(x2);
        }
    }
    f(0.5 * (lo + hi)).min(f(a)).min(f(b))
}

fn gauge_between(body: &ConvexBody, dim: usize, x: [f64; 2], y: [f64; 2]) -> f64 {
    if dim == 1 {
        body.gauge_raw(&[x[0] - y[0]])
    } else {
        body.gauge_raw(&[x[0] - y[0], x[1] - y[1]])
    }
}

fn distance_to_boundary(grid: &GridDomain, body: &ConvexBody, x: [f64; 2]) -> f64 {
    match grid.shape.boundary_pieces() {
        BoundaryPieces::Points(points) => points
            .iter()
            .map(|&y| gauge_between(body, grid.dim, x, y))
            .fold(f64::INFINITY, f64::min),
        BoundaryPieces::Segments(segments) => segments
            .iter()
            .map(|&(u, v)| {
                golden_section(
                    |t| {
                        gauge_between(
                            body,
                            grid.dim,
                            x,
                            [u[0] + t * (v[0] - u[0]), u[1] + t * (v[1] - u[1])],
                        )
                    },
                    0.0,
                    1.0,
                )
            })
            .fold(f64::INFINITY, f64::min),
        BoundaryPieces::Circle { center, radius } => {
            const STARTS: usize = 64;
            let tau = 2.0 * std::f64::consts::PI;
            let f = |phi: f64| {
                gauge_between(
                    body,
                    grid.dim,
                    x,
                    [center[0] + radius * phi.cos(), center[1] + radius * phi.sin()],
                )
            };
            let samples: Vec<f64> = (0..STARTS).map(|i| f(tau * i as f64 / STARTS as f64)).collect();
            let mut best = f64::INFINITY;
            for i in 0..STARTS {
                let prev = samples[(i + STARTS - 1) % STARTS];
                let next = samples[(i + 1) % STARTS];
                // Refine around sampled local minima only.
                if samples[i] <= prev && samples[i] <= next {
                    let lo = tau * (i as f64 - 1.0) / STARTS as f64;
                    let hi = tau * (i as f64 + 1.0) / STARTS as f64;
                    best = best.min(golden_section(f, lo, hi));
                }
            }
            best
        }
    }
}

/// Distance field `d(x) = min_{y on dU} gauge_body(x - y)`: zero on Boundary
/// nodes, positive on Interior ones. The body argument plays the role of the
/// polar body whose gauge defines the obstacle metric.
pub fn gauge_distance_map(grid: &Arc<GridDomain>, body: &ConvexBody) -> Result<ScalarField> {
    if body.dim != grid.dim {
        return Err(Error::DimensionMismatch { expected: grid.dim, got: body.dim });
    }
    let mut field = ScalarField::zeros(grid.clone());
    for id in 0..grid.node_count() {
        if grid.class(id) == NodeClass::Interior {
            field.values[id] = distance_to_boundary(grid, body, grid.position(id));
        }
    }
    Ok(field)
}

/// Extremal obstacles `(c - k d, c + k d)`; both equal `c` on the boundary.
pub fn build_obstacles(dist: &ScalarField, c: f64, k: f64) -> Result<(ScalarField, ScalarField)> {
    if dist.values.iter().any(|&v| v < 0.0) {
        return Err(Error::Precondition("distance field must be nonnegative".into()));
    }
    let mut lower = ScalarField::zeros(dist.grid.clone());
    let mut upper = ScalarField::zeros(dist.grid.clone());
    for id in 0..dist.grid.node_count() {
        if dist.grid.class(id) != NodeClass::Exterior {
            lower.values[id] = c - k * dist.values[id];
            upper.values[id] = c + k * dist.values[id];
        }
    }
    Ok((lower, upper))
}
