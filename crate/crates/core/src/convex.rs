//! Balanced convex bodies with exact gauge (Minkowski functional) and polar
//! evaluation.
//!
//! All supported families have closed-form gauges, so polar duality and the
//! obstacle constructions downstream are not confounded by geometry error.
//! A body is balanced (K = -K) and has 0 in its interior, which makes the
//! gauge a norm.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One halfspace `normal . x <= offset` of a polytope body. Normals are unit
/// vectors and offsets strictly positive.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Halfspace {
    pub normal: Vec<f64>,
    pub offset: f64,
}

/// Closed-form family of a convex body.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum BodyFamily {
    /// Euclidean ball of the given radius.
    Ball { radius: f64 },
    /// p-norm ball `{ ||x||_p <= radius }`, p >= 1.
    PBall { p: f64, radius: f64 },
    /// Axis-aligned box `{ |x_i| <= half_widths[i] }`.
    Box { half_widths: Vec<f64> },
    /// Cross-polytope `{ ||x||_1 <= scale }`.
    Cross { scale: f64 },
    /// Intersection of halfspace pairs; must be balanced and bounded.
    Polytope { halfspaces: Vec<Halfspace> },
}

/// A balanced compact convex set with 0 in its interior, together with its
/// dimension. Carries exact gauge and polar-gauge evaluators.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ConvexBody {
    pub dim: usize,
    #[serde(flatten)]
    pub family: BodyFamily,
}

impl ConvexBody {
    /// Validates the family data and returns the body.
    ///
    /// Polytope halfspaces must come in `±` pairs (balance) and are
    /// normalized to unit normals; all offsets must be strictly positive
    /// (0 in the interior).
    pub fn new(dim: usize, family: BodyFamily) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidBody("dimension must be positive".into()));
        }
        let family = match family {
            BodyFamily::Ball { radius } => {
                if !(radius > 0.0 && radius.is_finite()) {
                    return Err(Error::InvalidBody(format!("ball radius {radius} must be positive")));
                }
                BodyFamily::Ball { radius }
            }
            BodyFamily::PBall { p, radius } => {
                if !(p >= 1.0 && p.is_finite()) {
                    return Err(Error::InvalidBody(format!("p-ball exponent {p} must be >= 1")));
                }
                if !(radius > 0.0 && radius.is_finite()) {
                    return Err(Error::InvalidBody(format!("p-ball radius {radius} must be positive")));
                }
                BodyFamily::PBall { p, radius }
            }
            BodyFamily::Box { half_widths } => {
                if half_widths.len() != dim {
                    return Err(Error::DimensionMismatch { expected: dim, got: half_widths.len() });
                }
                if half_widths.iter().any(|&w| !(w > 0.0 && w.is_finite())) {
                    return Err(Error::InvalidBody("box half-widths must be positive".into()));
                }
                BodyFamily::Box { half_widths }
            }
            BodyFamily::Cross { scale } => {
                if !(scale > 0.0 && scale.is_finite()) {
                    return Err(Error::InvalidBody(format!("cross-polytope scale {scale} must be positive")));
                }
                BodyFamily::Cross { scale }
            }
            BodyFamily::Polytope { halfspaces } => {
                BodyFamily::Polytope { halfspaces: normalize_halfspaces(dim, halfspaces)? }
            }
        };
        Ok(ConvexBody { dim, family })
    }

    pub fn ball(dim: usize, radius: f64) -> Result<Self> {
        Self::new(dim, BodyFamily::Ball { radius })
    }

    pub fn pball(dim: usize, p: f64, radius: f64) -> Result<Self> {
        Self::new(dim, BodyFamily::PBall { p, radius })
    }

    pub fn cuboid(half_widths: &[f64]) -> Result<Self> {
        Self::new(half_widths.len(), BodyFamily::Box { half_widths: half_widths.to_vec() })
    }

    pub fn cross(dim: usize, scale: f64) -> Result<Self> {
        Self::new(dim, BodyFamily::Cross { scale })
    }

    pub fn polytope(dim: usize, halfspaces: Vec<Halfspace>) -> Result<Self> {
        Self::new(dim, BodyFamily::Polytope { halfspaces })
    }

    /// Regular 2m-gon polytope: m halfspace pairs with normals equally spaced
    /// over the half-circle, all at the given offset.
    pub fn regular_polygon(pairs: usize, offset: f64) -> Result<Self> {
        let mut hs = Vec::with_capacity(2 * pairs);
        for i in 0..pairs {
            let a = std::f64::consts::PI * i as f64 / pairs as f64;
            hs.push(Halfspace { normal: vec![a.cos(), a.sin()], offset });
            hs.push(Halfspace { normal: vec![-a.cos(), -a.sin()], offset });
        }
        Self::polytope(2, hs)
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, got: x.len() });
        }
        Ok(())
    }

    /// Gauge (Minkowski functional) `inf { t > 0 : x in t K }`, evaluated in
    /// closed form per family.
    pub fn gauge(&self, x: &[f64]) -> Result<f64> {
        self.check_dim(x)?;
        Ok(self.gauge_raw(x))
    }

    pub(crate) fn gauge_raw(&self, x: &[f64]) -> f64 {
        match &self.family {
            BodyFamily::Ball { radius } => norm2(x) / radius,
            BodyFamily::PBall { p, radius } => pnorm(x, *p) / radius,
            BodyFamily::Box { half_widths } => x
                .iter()
                .zip(half_widths)
                .map(|(xi, wi)| (xi / wi).abs())
                .fold(0.0, f64::max),
            BodyFamily::Cross { scale } => x.iter().map(|v| v.abs()).sum::<f64>() / scale,
            BodyFamily::Polytope { halfspaces } => halfspaces
                .iter()
                .map(|hs| dot(&hs.normal, x) / hs.offset)
                .fold(0.0, f64::max),
        }
    }

    /// The polar body `K° = { y : y . k <= 1 for all k in K }`.
    ///
    /// All pairings are closed form; polytope polars use 2-D vertex
    /// enumeration and are unsupported above dimension 2.
    pub fn polar(&self) -> Result<ConvexBody> {
        let family = match &self.family {
            BodyFamily::Ball { radius } => BodyFamily::Ball { radius: 1.0 / radius },
            BodyFamily::PBall { p, radius } => {
                if *p == 1.0 {
                    // Dual exponent is infinity: the polar is a cube.
                    BodyFamily::Box { half_widths: vec![1.0 / radius; self.dim] }
                } else {
                    BodyFamily::PBall { p: p / (p - 1.0), radius: 1.0 / radius }
                }
            }
            BodyFamily::Box { half_widths } => {
                // Polar of a box is the weighted cross-polytope whose facets
                // correspond to the box vertices.
                if self.dim > 16 {
                    return Err(Error::UnsupportedFamily(format!(
                        "box polar enumerates 2^n vertices; n = {} too large",
                        self.dim
                    )));
                }
                let mut hs = Vec::with_capacity(1 << self.dim);
                for mask in 0..(1usize << self.dim) {
                    let v: Vec<f64> = half_widths
                        .iter()
                        .enumerate()
                        .map(|(i, w)| if mask >> i & 1 == 1 { -w } else { *w })
                        .collect();
                    let n = norm2(&v);
                    hs.push(Halfspace { normal: v.iter().map(|c| c / n).collect(), offset: 1.0 / n });
                }
                BodyFamily::Polytope { halfspaces: hs }
            }
            BodyFamily::Cross { scale } => BodyFamily::Box { half_widths: vec![1.0 / scale; self.dim] },
            BodyFamily::Polytope { halfspaces } => {
                let vertices = polytope_vertices(self.dim, halfspaces)?;
                let mut hs = Vec::with_capacity(vertices.len());
                for v in &vertices {
                    let n = norm2(v);
                    if n < 1e-14 {
                        return Err(Error::InvalidBody("polytope vertex at origin".into()));
                    }
                    hs.push(Halfspace { normal: v.iter().map(|c| c / n).collect(), offset: 1.0 / n });
                }
                BodyFamily::Polytope { halfspaces: hs }
            }
        };
        ConvexBody::new(self.dim, family)
    }

    /// `gamma_K(x) * gamma_Ko(y) - x . y`; nonnegative up to roundoff for all
    /// inputs (the gauge duality inequality).
    pub fn duality_gap(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        self.check_dim(x)?;
        self.check_dim(y)?;
        let polar = self.polar()?;
        Ok(self.gauge_raw(x) * polar.gauge_raw(y) - dot(x, y))
    }

    /// Centered second difference of the gauge along `z`, divided by `h^2`.
    ///
    /// Preconditions: `gauge(z) = 1` within 1e-10 (callers normalize by
    /// dividing by the gauge) and `0 < h < gauge(x)`.
    pub fn second_difference(&self, x: &[f64], z: &[f64], h: f64) -> Result<f64> {
        self.check_dim(x)?;
        self.check_dim(z)?;
        let gz = self.gauge_raw(z);
        if (gz - 1.0).abs() > 1e-10 {
            return Err(Error::Precondition(format!(
                "direction must have unit gauge, got {gz}"
            )));
        }
        let gx = self.gauge_raw(x);
        if !(h > 0.0 && h < gx) {
            return Err(Error::Precondition(format!(
                "step h={h} must lie in (0, gauge(x)={gx})"
            )));
        }
        let plus: Vec<f64> = x.iter().zip(z).map(|(a, b)| a + h * b).collect();
        let minus: Vec<f64> = x.iter().zip(z).map(|(a, b)| a - h * b).collect();
        Ok((self.gauge_raw(&plus) + self.gauge_raw(&minus) - 2.0 * gx) / (h * h))
    }
}

/// Second-difference constant `2(p-1)` for p-norm gauges, p >= 2.
pub fn pnorm_b_constant(p: f64) -> Result<f64> {
    if !(p >= 2.0) {
        return Err(Error::Precondition(format!("p = {p} must be >= 2")));
    }
    Ok(2.0 * (p - 1.0))
}

fn normalize_halfspaces(dim: usize, halfspaces: Vec<Halfspace>) -> Result<Vec<Halfspace>> {
    if halfspaces.is_empty() {
        return Err(Error::InvalidBody("polytope needs at least one halfspace pair".into()));
    }
    let mut out = Vec::with_capacity(halfspaces.len());
    for hs in &halfspaces {
        if hs.normal.len() != dim {
            return Err(Error::DimensionMismatch { expected: dim, got: hs.normal.len() });
        }
        let n = norm2(&hs.normal);
        if n < 1e-14 {
            return Err(Error::InvalidBody("zero normal in polytope".into()));
        }
        if !(hs.offset > 0.0 && hs.offset.is_finite()) {
            return Err(Error::InvalidBody("polytope offsets must be strictly positive".into()));
        }
        out.push(Halfspace {
            normal: hs.normal.iter().map(|c| c / n).collect(),
            offset: hs.offset / n,
        });
    }
    // Balance: every halfspace needs its mirror.
    for a in &out {
        let found = out.iter().any(|b| {
            (a.offset - b.offset).abs() <= 1e-12 * (1.0 + a.offset.abs())
                && a.normal
                    .iter()
                    .zip(&b.normal)
                    .all(|(x, y)| (x + y).abs() <= 1e-12)
        });
        if !found {
            return Err(Error::InvalidBody(
                "polytope halfspaces must come in +/- pairs (balanced body)".into(),
            ));
        }
    }
    // Boundedness: the gauge must be positive in every axis direction.
    for axis in 0..dim {
        for sign in [1.0, -1.0] {
            let mut e = vec![0.0; dim];
            e[axis] = sign;
            let g = out
                .iter()
                .map(|hs| dot(&hs.normal, &e) / hs.offset)
                .fold(0.0, f64::max);
            if g <= 1e-14 {
                return Err(Error::InvalidBody("polytope is unbounded".into()));
            }
        }
    }
    Ok(out)
}

/// Vertices of a bounded H-polytope; used by `polar`. Supports dimensions 1
/// and 2, which is all the solver domains need.
fn polytope_vertices(dim: usize, halfspaces: &[Halfspace]) -> Result<Vec<Vec<f64>>> {
    match dim {
        1 => {
            let m = halfspaces
                .iter()
                .filter(|hs| hs.normal[0] > 0.0)
                .map(|hs| hs.offset / hs.normal[0])
                .fold(f64::INFINITY, f64::min);
            Ok(vec![vec![m], vec![-m]])
        }
        2 => {
            let mut vertices: Vec<Vec<f64>> = Vec::new();
            let m = halfspaces.len();
            for i in 0..m {
                for j in (i + 1)..m {
                    let (a, b) = (&halfspaces[i], &halfspaces[j]);
                    let det = a.normal[0] * b.normal[1] - a.normal[1] * b.normal[0];
                    if det.abs() < 1e-12 {
                        continue;
                    }
                    let x = (a.offset * b.normal[1] - b.offset * a.normal[1]) / det;
                    let y = (a.normal[0] * b.offset - b.normal[0] * a.offset) / det;
                    let p = vec![x, y];
                    let scale = 1.0 + norm2(&p);
                    let feasible = halfspaces
                        .iter()
                        .all(|hs| dot(&hs.normal, &p) <= hs.offset + 1e-9 * scale);
                    if feasible
                        && !vertices
                            .iter()
                            .any(|q| (q[0] - x).abs() + (q[1] - y).abs() <= 1e-9 * scale)
                    {
                        vertices.push(p);
                    }
                }
            }
            if vertices.len() < 2 {
                return Err(Error::InvalidBody("degenerate polytope: fewer than 2 vertices".into()));
            }
            vertices.sort_by(|p, q| {
                p[1].atan2(p[0])
                    .partial_cmp(&q[1].atan2(q[0]))
                    .expect("vertex angles are finite")
            });
            Ok(vertices)
        }
        _ => Err(Error::UnsupportedFamily(format!(
            "polytope vertex enumeration implemented for dim <= 2, got {dim}"
        ))),
    }
}

/// Deterministic quasi-uniform unit directions: the sign pair in 1-D, equally
/// spaced angles in 2-D, a Fibonacci sphere in 3-D, and a fixed-seed Gaussian
/// sample above that. Sampled suprema over these sets are one-sided (never
/// exceed the true value).
pub fn unit_directions(dim: usize, count: usize) -> Vec<Vec<f64>> {
    match dim {
        0 => Vec::new(),
        1 => vec![vec![1.0], vec![-1.0]],
        2 => (0..count)
            .map(|i| {
                let a = 2.0 * std::f64::consts::PI * i as f64 / count as f64;
                vec![a.cos(), a.sin()]
            })
            .collect(),
        3 => {
            let golden = (1.0 + 5.0_f64.sqrt()) / 2.0;
            (0..count)
                .map(|i| {
                    let z = 1.0 - 2.0 * (i as f64 + 0.5) / count as f64;
                    let r = (1.0 - z * z).sqrt();
                    let a = 2.0 * std::f64::consts::PI * i as f64 / golden;
                    vec![r * a.cos(), r * a.sin(), z]
                })
                .collect()
        }
        _ => {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0x5eed_d14);
            (0..count)
                .map(|_| {
                    loop {
                        let v: Vec<f64> = (0..dim)
                            .map(|_| {
                                // Box-Muller from two uniforms.
                                let u1: f64 = rng.gen_range(1e-12..1.0);
                                let u2: f64 = rng.gen::<f64>();
                                (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
                            })
                            .collect();
                        let n = norm2(&v);
                        if n > 1e-8 {
                            return v.iter().map(|c| c / n).collect();
                        }
                    }
                })
                .collect()
        }
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm2(x: &[f64]) -> f64 {
    dot(x, x).sqrt()
}

fn pnorm(x: &[f64], p: f64) -> f64 {
    let m = x.iter().map(|v| v.abs()).fold(0.0, f64::max);
    if m == 0.0 {
        return 0.0;
    }
    // Scale out the max to avoid overflow for large p.
    m * x.iter().map(|v| (v.abs() / m).powf(p)).sum::<f64>().powf(1.0 / p)
}
