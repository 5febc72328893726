//! Lattice grids over open convex domains with interior/boundary
//! classification and cut-cell boundary offsets.
//!
//! Boundary geometry is resolved by snapping: for every interior node and
//! axis direction whose lattice neighbor leaves the domain, we store the
//! fraction `theta` of the spacing at which the segment crosses the domain
//! boundary. Values stored at Boundary lattice nodes stand for the value at
//! the snapped crossing point.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Supported open domains. Polygons are counterclockwise and convex
/// (collinear vertices are removed on construction).
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum DomainShape {
    Interval { a: f64, b: f64 },
    Rectangle { corner: [f64; 2], widths: [f64; 2] },
    Disk { center: [f64; 2], radius: f64 },
    Polygon { vertices: Vec<[f64; 2]> },
}

impl DomainShape {
    pub fn validated(self) -> Result<Self> {
        match self {
            DomainShape::Interval { a, b } => {
                if !(b > a) || !a.is_finite() || !b.is_finite() {
                    return Err(Error::InvalidShape(format!("interval ({a}, {b}) has no measure")));
                }
                Ok(self)
            }
            DomainShape::Rectangle { corner, widths } => {
                if widths.iter().any(|&w| !(w > 0.0 && w.is_finite()))
                    || corner.iter().any(|c| !c.is_finite())
                {
                    return Err(Error::InvalidShape("rectangle widths must be positive".into()));
                }
                Ok(self)
            }
            DomainShape::Disk { center, radius } => {
                if !(radius > 0.0 && radius.is_finite()) || center.iter().any(|c| !c.is_finite()) {
                    return Err(Error::InvalidShape("disk radius must be positive".into()));
                }
                Ok(self)
            }
            DomainShape::Polygon { vertices } => {
                let cleaned = clean_convex_polygon(vertices)?;
                Ok(DomainShape::Polygon { vertices: cleaned })
            }
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            DomainShape::Interval { .. } => 1,
            _ => 2,
        }
    }

    pub fn bounding_box(&self) -> ([f64; 2], [f64; 2]) {
        match self {
            DomainShape::Interval { a, b } => ([*a, 0.0], [*b, 0.0]),
            DomainShape::Rectangle { corner, widths } => {
                (*corner, [corner[0] + widths[0], corner[1] + widths[1]])
            }
            DomainShape::Disk { center, radius } => (
                [center[0] - radius, center[1] - radius],
                [center[0] + radius, center[1] + radius],
            ),
            DomainShape::Polygon { vertices } => {
                let mut lo = [f64::INFINITY; 2];
                let mut hi = [f64::NEG_INFINITY; 2];
                for v in vertices {
                    for d in 0..2 {
                        lo[d] = lo[d].min(v[d]);
                        hi[d] = hi[d].max(v[d]);
                    }
                }
                (lo, hi)
            }
        }
    }

    /// Strict interior test.
    pub fn contains(&self, p: [f64; 2]) -> bool {
        match self {
            DomainShape::Interval { a, b } => p[0] > *a && p[0] < *b,
            DomainShape::Rectangle { corner, widths } => {
                p[0] > corner[0]
                    && p[0] < corner[0] + widths[0]
                    && p[1] > corner[1]
                    && p[1] < corner[1] + widths[1]
            }
            DomainShape::Disk { center, radius } => {
                let dx = p[0] - center[0];
                let dy = p[1] - center[1];
                dx * dx + dy * dy < radius * radius
            }
            DomainShape::Polygon { vertices } => {
                let m = vertices.len();
                (0..m).all(|i| {
                    let u = vertices[i];
                    let v = vertices[(i + 1) % m];
                    (v[0] - u[0]) * (p[1] - u[1]) - (v[1] - u[1]) * (p[0] - u[0]) > 0.0
                })
            }
        }
    }

    /// Distance along the ray `p + t * dir` (unit axis direction) from an
    /// interior point to the domain boundary. Unique for convex shapes.
    pub fn exit_distance(&self, p: [f64; 2], dir: [f64; 2]) -> f64 {
        match self {
            DomainShape::Interval { a, b } => {
                if dir[0] > 0.0 {
                    b - p[0]
                } else {
                    p[0] - a
                }
            }
            DomainShape::Rectangle { corner, widths } => {
                let mut t = f64::INFINITY;
                for d in 0..2 {
                    if dir[d] > 0.0 {
                        t = t.min(corner[d] + widths[d] - p[d]);
                    } else if dir[d] < 0.0 {
                        t = t.min(p[d] - corner[d]);
                    }
                }
                t
            }
            DomainShape::Disk { center, radius } => {
                let q = [p[0] - center[0], p[1] - center[1]];
                let b = q[0] * dir[0] + q[1] * dir[1];
                let c = q[0] * q[0] + q[1] * q[1] - radius * radius;
                -b + (b * b - c).max(0.0).sqrt()
            }
            DomainShape::Polygon { vertices } => {
                let m = vertices.len();
                let mut best = f64::INFINITY;
                for i in 0..m {
                    let u = vertices[i];
                    let v = vertices[(i + 1) % m];
                    let e = [v[0] - u[0], v[1] - u[1]];
                    let det = dir[0] * (-e[1]) - dir[1] * (-e[0]);
                    if det.abs() < 1e-300 {
                        continue;
                    }
                    let rx = u[0] - p[0];
                    let ry = u[1] - p[1];
                    let t = (rx * (-e[1]) - ry * (-e[0])) / det;
                    let s = (dir[0] * ry - dir[1] * rx) / det;
                    if t > 0.0 && (-1e-12..=1.0 + 1e-12).contains(&s) {
                        best = best.min(t);
                    }
                }
                best
            }
        }
    }

    /// Boundary as parameterized pieces for exact distance minimization:
    /// segments for polygonal shapes, the full circle for disks, the two
    /// endpoints for intervals.
    pub fn boundary_pieces(&self) -> BoundaryPieces {
        match self {
            DomainShape::Interval { a, b } => BoundaryPieces::Points(vec![[*a, 0.0], [*b, 0.0]]),
            DomainShape::Rectangle { corner, widths } => {
                let c = *corner;
                let (w, h) = (widths[0], widths[1]);
                let pts = [
                    c,
                    [c[0] + w, c[1]],
                    [c[0] + w, c[1] + h],
                    [c[0], c[1] + h],
                ];
                BoundaryPieces::Segments(
                    (0..4).map(|i| (pts[i], pts[(i + 1) % 4])).collect(),
                )
            }
            DomainShape::Disk { center, radius } => {
                BoundaryPieces::Circle { center: *center, radius: *radius }
            }
            DomainShape::Polygon { vertices } => {
                let m = vertices.len();
                BoundaryPieces::Segments(
                    (0..m).map(|i| (vertices[i], vertices[(i + 1) % m])).collect(),
                )
            }
        }
    }

    pub fn diameter(&self) -> f64 {
        match self {
            DomainShape::Interval { a, b } => b - a,
            DomainShape::Rectangle { widths, .. } => {
                (widths[0] * widths[0] + widths[1] * widths[1]).sqrt()
            }
            DomainShape::Disk { radius, .. } => 2.0 * radius,
            DomainShape::Polygon { vertices } => {
                let mut d = 0.0_f64;
                for (i, u) in vertices.iter().enumerate() {
                    for v in &vertices[i + 1..] {
                        d = d.max(((u[0] - v[0]).powi(2) + (u[1] - v[1]).powi(2)).sqrt());
                    }
                }
                d
            }
        }
    }

    fn min_feature(&self) -> f64 {
        match self {
            DomainShape::Interval { a, b } => b - a,
            DomainShape::Rectangle { widths, .. } => widths[0].min(widths[1]),
            DomainShape::Disk { radius, .. } => *radius,
            DomainShape::Polygon { .. } => {
                let (lo, hi) = self.bounding_box();
                (hi[0] - lo[0]).min(hi[1] - lo[1])
            }
        }
    }
}

pub enum BoundaryPieces {
    Points(Vec<[f64; 2]>),
    Segments(Vec<([f64; 2], [f64; 2])>),
    Circle { center: [f64; 2], radius: f64 },
}

fn clean_convex_polygon(vertices: Vec<[f64; 2]>) -> Result<Vec<[f64; 2]>> {
    if vertices.len() < 3 {
        return Err(Error::InvalidShape("polygon needs at least 3 vertices".into()));
    }
    // Drop collinear middle vertices.
    let mut cleaned: Vec<[f64; 2]> = Vec::with_capacity(vertices.len());
    let m = vertices.len();
    for i in 0..m {
        let prev = vertices[(i + m - 1) % m];
        let cur = vertices[i];
        let next = vertices[(i + 1) % m];
        let cross = (cur[0] - prev[0]) * (next[1] - cur[1]) - (cur[1] - prev[1]) * (next[0] - cur[0]);
        let scale = (cur[0] - prev[0]).hypot(cur[1] - prev[1])
            * (next[0] - cur[0]).hypot(next[1] - cur[1]);
        if cross.abs() > 1e-12 * (1.0 + scale) {
            cleaned.push(cur);
        }
    }
    if cleaned.len() < 3 {
        return Err(Error::InvalidShape("polygon degenerates after removing collinear vertices".into()));
    }
    let m = cleaned.len();
    for i in 0..m {
        let a = cleaned[i];
        let b = cleaned[(i + 1) % m];
        let c = cleaned[(i + 2) % m];
        let cross = (b[0] - a[0]) * (c[1] - b[1]) - (b[1] - a[1]) * (c[0] - b[0]);
        if cross <= 0.0 {
            return Err(Error::InvalidShape(
                "polygon must be strictly convex with counterclockwise vertices".into(),
            ));
        }
    }
    Ok(cleaned)
}

/// Classification of a lattice node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NodeClass {
    Interior,
    Boundary,
    Exterior,
}

/// State of one axis arm of an interior node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Arm {
    /// Neighbor lattice node is interior; full spacing h.
    Full,
    /// Domain boundary crosses the arm at `theta * h` (theta in (0, 1]).
    Cut(f64),
    /// No neighbor in this direction (unused axis or non-interior node).
    None,
}

/// Axis directions in arm order: +x, -x, +y, -y.
pub const DIRS: [(isize, isize); 4] = [(1, 0), (-1, 0), (0, 1), (0, -1)];

/// A rectangular lattice covering a domain, with per-node classification and
/// cut-cell offsets on interior arms.
#[derive(Debug)]
pub struct GridDomain {
    pub shape: DomainShape,
    pub h: f64,
    pub dim: usize,
    pub nx: usize,
    pub ny: usize,
    pub origin: [f64; 2],
    class: Vec<NodeClass>,
    arms: Vec<[Arm; 4]>,
    interior: Vec<usize>,
}

/// Builds the lattice aligned to the shape's bounding box and classifies its
/// nodes. Fails if `h` leaves no interior node or exceeds a quarter of the
/// smallest feature size.
pub fn build_grid(shape: DomainShape, h: f64) -> Result<GridDomain> {
    let shape = shape.validated()?;
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::GridTooCoarse { h, reason: "spacing must be positive".into() });
    }
    let coarse_limit = shape.min_feature() / 4.0;
    if h > coarse_limit * (1.0 + 1e-12) {
        return Err(Error::GridTooCoarse {
            h,
            reason: format!("needs h <= {coarse_limit} (min feature / 4)"),
        });
    }
    let dim = shape.dim();
    let (lo, hi) = shape.bounding_box();
    let cells = |extent: f64| -> usize {
        let n = extent / h;
        if (n - n.round()).abs() < 1e-9 * (1.0 + n.abs()) {
            n.round() as usize
        } else {
            n.ceil() as usize
        }
    };
    let nx = cells(hi[0] - lo[0]) + 1;
    let ny = if dim == 1 { 1 } else { cells(hi[1] - lo[1]) + 1 };
    let n = nx * ny;

    let pos = |i: usize, j: usize| -> [f64; 2] { [lo[0] + i as f64 * h, lo[1] + j as f64 * h] };

    let mut inside = vec![false; n];
    for j in 0..ny {
        for i in 0..nx {
            inside[j * nx + i] = shape.contains(pos(i, j));
        }
    }

    let ndirs = 2 * dim;
    let mut class = vec![NodeClass::Exterior; n];
    for j in 0..ny {
        for i in 0..nx {
            let id = j * nx + i;
            if inside[id] {
                class[id] = NodeClass::Interior;
                continue;
            }
            let near_interior = DIRS[..ndirs].iter().any(|&(di, dj)| {
                let ii = i as isize + di;
                let jj = j as isize + dj;
                ii >= 0
                    && jj >= 0
                    && (ii as usize) < nx
                    && (jj as usize) < ny
                    && inside[jj as usize * nx + ii as usize]
            });
            if near_interior {
                class[id] = NodeClass::Boundary;
            }
        }
    }

    let mut arms = vec![[Arm::None; 4]; n];
    let mut interior = Vec::new();
    for j in 0..ny {
        for i in 0..nx {
            let id = j * nx + i;
            if class[id] != NodeClass::Interior {
                continue;
            }
            interior.push(id);
            let p = pos(i, j);
            for (d, &(di, dj)) in DIRS[..ndirs].iter().enumerate() {
                let ii = i as isize + di;
                let jj = j as isize + dj;
                let neighbor_inside = ii >= 0
                    && jj >= 0
                    && (ii as usize) < nx
                    && (jj as usize) < ny
                    && inside[jj as usize * nx + ii as usize];
                if neighbor_inside {
                    arms[id][d] = Arm::Full;
                } else {
                    let dir = [di as f64, dj as f64];
                    let exit = shape.exit_distance(p, dir);
                    // theta in (0, 1]. Arms shorter than h/100 are clamped:
                    // the boundary-position error is below every contracted
                    // tolerance, while unclamped slivers would put weights
                    // of order 1/theta into the stencil and wreck the
                    // conditioning of the linear solves.
                    let theta = (exit / h).min(1.0).max(1e-2);
                    arms[id][d] = Arm::Cut(theta);
                }
            }
        }
    }

    if interior.is_empty() {
        return Err(Error::GridTooCoarse { h, reason: "no interior node".into() });
    }

    Ok(GridDomain { shape, h, dim, nx, ny, origin: lo, class, arms, interior })
}

impl GridDomain {
    pub fn node_count(&self) -> usize {
        self.nx * self.ny
    }

    pub fn idx(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    pub fn coords(&self, id: usize) -> (usize, usize) {
        (id % self.nx, id / self.nx)
    }

    pub fn position(&self, id: usize) -> [f64; 2] {
        let (i, j) = self.coords(id);
        [self.origin[0] + i as f64 * self.h, self.origin[1] + j as f64 * self.h]
    }

    pub fn class(&self, id: usize) -> NodeClass {
        self.class[id]
    }

    pub fn is_interior(&self, id: usize) -> bool {
        self.class[id] == NodeClass::Interior
    }

    /// Interior node ids in lexicographic order.
    pub fn interior_nodes(&self) -> &[usize] {
        &self.interior
    }

    pub fn arm(&self, id: usize, dir: usize) -> Arm {
        self.arms[id][dir]
    }

    /// Lattice neighbor id in arm direction `dir`, if it exists.
    pub fn neighbor(&self, id: usize, dir: usize) -> Option<usize> {
        let (i, j) = self.coords(id);
        let (di, dj) = DIRS[dir];
        let ii = i as isize + di;
        let jj = j as isize + dj;
        if ii < 0 || jj < 0 || ii as usize >= self.nx || jj as usize >= self.ny {
            return None;
        }
        Some(self.idx(ii as usize, jj as usize))
    }

    /// Number of arm directions in use (2 in 1-D, 4 in 2-D).
    pub fn ndirs(&self) -> usize {
        2 * self.dim
    }

    /// Position of the snapped boundary point on a cut arm.
    pub fn boundary_point(&self, id: usize, dir: usize) -> Option<[f64; 2]> {
        match self.arm(id, dir) {
            Arm::Cut(theta) => {
                let p = self.position(id);
                let (di, dj) = DIRS[dir];
                Some([
                    p[0] + theta * self.h * di as f64,
                    p[1] + theta * self.h * dj as f64,
                ])
            }
            _ => None,
        }
    }

    /// Compact textual form of the shape for field-file headers.
    pub fn shape_token(&self) -> String {
        crate::io::shape_token(&self.shape)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interval_grid_counts() {
        let g = build_grid(DomainShape::Interval { a: -1.0, b: 1.0 }, 0.5).unwrap();
        assert_eq!(g.node_count(), 5);
        assert_eq!(g.interior_nodes().len(), 3);
        assert_eq!(g.class(g.idx(0, 0)), NodeClass::Boundary);
        assert_eq!(g.class(g.idx(4, 0)), NodeClass::Boundary);
    }

    #[test]
    fn rectangle_grid_counts() {
        let g = build_grid(
            DomainShape::Rectangle { corner: [0.0, 0.0], widths: [1.0, 1.0] },
            0.25,
        )
        .unwrap();
        assert_eq!((g.nx, g.ny), (5, 5));
        assert_eq!(g.interior_nodes().len(), 9);
    }

    #[test]
    fn disk_interior_matches_brute_force() {
        let shape = DomainShape::Disk { center: [0.0, 0.0], radius: 1.0 };
        let g = build_grid(shape.clone(), 0.1).unwrap();
        let mut count = 0;
        for j in 0..g.ny {
            for i in 0..g.nx {
                let p = g.position(g.idx(i, j));
                if p[0] * p[0] + p[1] * p[1] < 1.0 {
                    count += 1;
                }
            }
        }
        assert_eq!(g.interior_nodes().len(), count);
    }

    #[test]
    fn interior_arms_are_classified() {
        let g = build_grid(DomainShape::Disk { center: [0.0, 0.0], radius: 1.0 }, 0.125).unwrap();
        for &id in g.interior_nodes() {
            for d in 0..g.ndirs() {
                match g.arm(id, d) {
                    Arm::Full => {
                        let nb = g.neighbor(id, d).unwrap();
                        assert_eq!(g.class(nb), NodeClass::Interior);
                    }
                    Arm::Cut(theta) => {
                        assert!(theta > 0.0 && theta <= 1.0);
                        let nb = g.neighbor(id, d).unwrap();
                        assert_eq!(g.class(nb), NodeClass::Boundary);
                        // Snapped point sits on the domain boundary.
                        let bp = g.boundary_point(id, d).unwrap();
                        let r = (bp[0] * bp[0] + bp[1] * bp[1]).sqrt();
                        assert!((r - 1.0).abs() < 1e-9, "snapped radius {r}");
                    }
                    Arm::None => panic!("interior node with missing arm"),
                }
            }
        }
    }

    #[test]
    fn too_coarse_is_rejected() {
        let err = build_grid(DomainShape::Interval { a: 0.0, b: 1.0 }, 0.4);
        assert!(err.is_err());
    }

    #[test]
    fn polygon_validation() {
        // Clockwise ordering is rejected.
        let cw = DomainShape::Polygon {
            vertices: vec![[0.0, 0.0], [0.0, 1.0], [1.0, 1.0], [1.0, 0.0]],
        };
        assert!(cw.validated().is_err());

        // Collinear midpoints are dropped.
        let with_collinear = DomainShape::Polygon {
            vertices: vec![[0.0, 0.0], [0.5, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]],
        };
        match with_collinear.validated().unwrap() {
            DomainShape::Polygon { vertices } => assert_eq!(vertices.len(), 4),
            _ => unreachable!(),
        }
    }
}
