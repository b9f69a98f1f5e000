//! Small 3D kernel: vectors, triangles, half-spaces, convex polygon clipping
//! and exact quadrature of affine densities over planar polygons.

use std::ops::{Add, AddAssign, Div, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vec3 {
    pub const ZERO: Vec3 = Vec3::new(0.0, 0.0, 0.0);

    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Vec3 { x, y, z }
    }

    pub fn from_array(a: [f64; 3]) -> Self {
        Vec3::new(a[0], a[1], a[2])
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    #[inline]
    pub fn dot(self, o: Vec3) -> f64 {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    #[inline]
    pub fn cross(self, o: Vec3) -> Vec3 {
        Vec3::new(
            self.y * o.z - self.z * o.y,
            self.z * o.x - self.x * o.z,
            self.x * o.y - self.y * o.x,
        )
    }

    #[inline]
    pub fn norm_squared(self) -> f64 {
        self.dot(self)
    }

    #[inline]
    pub fn norm(self) -> f64 {
        self.norm_squared().sqrt()
    }

    #[inline]
    pub fn distance(self, o: Vec3) -> f64 {
        (self - o).norm()
    }

    #[inline]
    pub fn distance_squared(self, o: Vec3) -> f64 {
        (self - o).norm_squared()
    }

    pub fn normalized(self) -> Option<Vec3> {
        let n = self.norm();
        (n > 0.0 && n.is_finite()).then(|| self / n)
    }

    pub fn min(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x.min(o.x), self.y.min(o.y), self.z.min(o.z))
    }

    pub fn max(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x.max(o.x), self.y.max(o.y), self.z.max(o.z))
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn axis(self, k: usize) -> f64 {
        match k {
            0 => self.x,
            1 => self.y,
            _ => self.z,
        }
    }
}

impl Add for Vec3 {
    type Output = Vec3;
    #[inline]
    fn add(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl AddAssign for Vec3 {
    #[inline]
    fn add_assign(&mut self, o: Vec3) {
        self.x += o.x;
        self.y += o.y;
        self.z += o.z;
    }
}

impl Sub for Vec3 {
    type Output = Vec3;
    #[inline]
    fn sub(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl Mul<f64> for Vec3 {
    type Output = Vec3;
    #[inline]
    fn mul(self, s: f64) -> Vec3 {
        Vec3::new(self.x * s, self.y * s, self.z * s)
    }
}

impl Mul<Vec3> for f64 {
    type Output = Vec3;
    #[inline]
    fn mul(self, v: Vec3) -> Vec3 {
        v * self
    }
}

impl Div<f64> for Vec3 {
    type Output = Vec3;
    #[inline]
    fn div(self, s: f64) -> Vec3 {
        Vec3::new(self.x / s, self.y / s, self.z / s)
    }
}

impl Neg for Vec3 {
    type Output = Vec3;
    #[inline]
    fn neg(self) -> Vec3 {
        Vec3::new(-self.x, -self.y, -self.z)
    }
}

/// Axis-aligned box.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aabb {
    pub min: Vec3,
    pub max: Vec3,
}

impl Aabb {
    pub const EMPTY: Aabb = Aabb {
        min: Vec3::new(f64::INFINITY, f64::INFINITY, f64::INFINITY),
        max: Vec3::new(f64::NEG_INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY),
    };

    pub fn from_points<'a>(pts: impl IntoIterator<Item = &'a Vec3>) -> Aabb {
        pts.into_iter().fold(Aabb::EMPTY, |b, p| b.grow(*p))
    }

    pub fn grow(self, p: Vec3) -> Aabb {
        Aabb {
            min: self.min.min(p),
            max: self.max.max(p),
        }
    }

    pub fn union(self, o: Aabb) -> Aabb {
        Aabb {
            min: self.min.min(o.min),
            max: self.max.max(o.max),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.min.x > self.max.x
    }

    pub fn diagonal(&self) -> f64 {
        if self.is_empty() {
            0.0
        } else {
            (self.max - self.min).norm()
        }
    }

    pub fn center(&self) -> Vec3 {
        (self.min + self.max) * 0.5
    }

    /// Squared distance from `p` to the box (zero inside).
    pub fn distance_squared(&self, p: Vec3) -> f64 {
        let dx = (self.min.x - p.x).max(0.0).max(p.x - self.max.x);
        let dy = (self.min.y - p.y).max(0.0).max(p.y - self.max.y);
        let dz = (self.min.z - p.z).max(0.0).max(p.z - self.max.z);
        dx * dx + dy * dy + dz * dz
    }

    pub fn longest_axis(&self) -> usize {
        let e = self.max - self.min;
        if e.x >= e.y && e.x >= e.z {
            0
        } else if e.y >= e.z {
            1
        } else {
            2
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Triangle {
    pub a: Vec3,
    pub b: Vec3,
    pub c: Vec3,
}

impl Triangle {
    pub fn new(a: Vec3, b: Vec3, c: Vec3) -> Self {
        Triangle { a, b, c }
    }

    pub fn vertices(&self) -> [Vec3; 3] {
        [self.a, self.b, self.c]
    }

    /// Non-normalized normal; its norm is twice the area.
    pub fn scaled_normal(&self) -> Vec3 {
        (self.b - self.a).cross(self.c - self.a)
    }

    pub fn area(&self) -> f64 {
        0.5 * self.scaled_normal().norm()
    }

    pub fn centroid(&self) -> Vec3 {
        (self.a + self.b + self.c) / 3.0
    }

    pub fn longest_edge(&self) -> f64 {
        (self.b - self.a)
            .norm()
            .max((self.c - self.b).norm())
            .max((self.a - self.c).norm())
    }

    /// Degenerate when the area is below `1e-9 · longest_edge²`.
    pub fn is_degenerate(&self) -> bool {
        let l = self.longest_edge();
        !(self.area() > 1e-9 * l * l)
    }

    pub fn unit_normal(&self) -> Result<Vec3> {
        if self.is_degenerate() {
            return Err(Error::Geometry("degenerate triangle".into()));
        }
        self.scaled_normal()
            .normalized()
            .ok_or_else(|| Error::Geometry("degenerate triangle".into()))
    }

    pub fn aabb(&self) -> Aabb {
        Aabb::from_points(&[self.a, self.b, self.c])
    }

    /// Smallest sphere centered at the centroid enclosing the triangle.
    pub fn bounding_sphere(&self) -> (Vec3, f64) {
        let c = self.centroid();
        let r = c
            .distance(self.a)
            .max(c.distance(self.b))
            .max(c.distance(self.c));
        (c, r)
    }
}

/// Removes the component of `v` along the triangle normal.
pub fn tangent_projection(v: Vec3, tri: &Triangle) -> Result<Vec3> {
    let n = tri.unit_normal()?;
    Ok(v - n * v.dot(n))
}

/// Euclidean distance from `p` to the closed triangle.
pub fn point_triangle_distance(p: Vec3, tri: &Triangle) -> f64 {
    closest_point_on_triangle(p, tri).distance(p)
}

/// Closest point by Voronoi-region classification of `p` (vertex, edge, face).
pub fn closest_point_on_triangle(p: Vec3, tri: &Triangle) -> Vec3 {
    let (a, b, c) = (tri.a, tri.b, tri.c);
    let ab = b - a;
    let ac = c - a;
    let ap = p - a;
    let d1 = ab.dot(ap);
    let d2 = ac.dot(ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return a;
    }
    let bp = p - b;
    let d3 = ab.dot(bp);
    let d4 = ac.dot(bp);
    if d3 >= 0.0 && d4 <= d3 {
        return b;
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        let v = d1 / (d1 - d3);
        return a + ab * v;
    }
    let cp = p - c;
    let d5 = ab.dot(cp);
    let d6 = ac.dot(cp);
    if d6 >= 0.0 && d5 <= d6 {
        return c;
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        let w = d2 / (d2 - d6);
        return a + ac * w;
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        let w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return b + (c - b) * w;
    }
    let denom = 1.0 / (va + vb + vc);
    let v = vb * denom;
    let w = vc * denom;
    a + ab * v + ac * w
}

/// Where a polygon edge came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Provenance {
    /// Edge `k` of the parent triangle (from vertex `k` to vertex `k+1`).
    MeshEdge(u8),
    /// Bisector against the given site.
    Bisector(usize),
}

/// The closed half-space `{x : <x, normal> <= offset}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HalfspaceConstraint {
    pub normal: Vec3,
    pub offset: f64,
    pub provenance: Provenance,
}

impl HalfspaceConstraint {
    pub fn new(normal: Vec3, offset: f64, provenance: Provenance) -> Self {
        HalfspaceConstraint {
            normal,
            offset,
            provenance,
        }
    }

    /// Signed distance to the boundary plane, positive outside.
    pub fn signed_distance(&self, p: Vec3) -> f64 {
        (p.dot(self.normal) - self.offset) / self.normal.norm()
    }

    pub fn contains(&self, p: Vec3) -> bool {
        p.dot(self.normal) <= self.offset
    }

    /// The complementary closed half-space (same boundary plane).
    pub fn flipped(&self) -> Self {
        HalfspaceConstraint {
            normal: -self.normal,
            offset: -self.offset,
            provenance: self.provenance,
        }
    }
}

/// Planar convex polygon lying in a triangle of the soup.
///
/// `tags[k]` is the provenance of the edge from `vertices[k]` to
/// `vertices[k + 1]` (cyclically). Vertices are counter-clockwise around
/// `normal`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvexPolygon3 {
    pub vertices: Vec<Vec3>,
    pub tags: Vec<Provenance>,
    pub parent_triangle: usize,
    pub normal: Vec3,
}

impl ConvexPolygon3 {
    pub fn from_triangle(tri: &Triangle, parent_triangle: usize) -> Result<Self> {
        let normal = tri.unit_normal()?;
        Ok(ConvexPolygon3 {
            vertices: vec![tri.a, tri.b, tri.c],
            tags: vec![
                Provenance::MeshEdge(0),
                Provenance::MeshEdge(1),
                Provenance::MeshEdge(2),
            ],
            parent_triangle,
            normal,
        })
    }

    /// Builds a polygon from a planar CCW loop, all edges tagged as mesh edges.
    pub fn from_loop(vertices: Vec<Vec3>, normal: Vec3, parent_triangle: usize) -> Self {
        let tags = (0..vertices.len())
            .map(|k| Provenance::MeshEdge((k % 3) as u8))
            .collect();
        ConvexPolygon3 {
            vertices,
            tags,
            parent_triangle,
            normal,
        }
    }

    pub fn empty(parent_triangle: usize, normal: Vec3) -> Self {
        ConvexPolygon3 {
            vertices: Vec::new(),
            tags: Vec::new(),
            parent_triangle,
            normal,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.len() < 3
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn area(&self) -> f64 {
        self.fan().map(|t| t.area()).sum()
    }

    pub fn perimeter(&self) -> f64 {
        self.edges().map(|(a, b, _)| a.distance(b)).sum()
    }

    /// Largest vertex-to-vertex distance.
    pub fn diameter(&self) -> f64 {
        let mut d: f64 = 0.0;
        for (i, a) in self.vertices.iter().enumerate() {
            for b in &self.vertices[i + 1..] {
                d = d.max(a.distance(*b));
            }
        }
        d
    }

    /// Unweighted vertex average; always inside a convex polygon.
    pub fn vertex_mean(&self) -> Vec3 {
        let n = self.vertices.len().max(1) as f64;
        self.vertices.iter().fold(Vec3::ZERO, |s, v| s + *v) / n
    }

    /// Edges as `(start, end, provenance)`.
    pub fn edges(&self) -> impl Iterator<Item = (Vec3, Vec3, Provenance)> + '_ {
        let n = self.vertices.len();
        (0..n).map(move |k| (self.vertices[k], self.vertices[(k + 1) % n], self.tags[k]))
    }

    /// Fan triangulation from the first vertex.
    pub fn fan(&self) -> impl Iterator<Item = Triangle> + '_ {
        let n = self.vertices.len();
        let v0 = self.vertices.first().copied().unwrap_or(Vec3::ZERO);
        (1..n.saturating_sub(1)).map(move |k| Triangle::new(v0, self.vertices[k], self.vertices[k + 1]))
    }

    /// Point-in-polygon test with tolerance `eps`, for points in the polygon plane.
    pub fn contains(&self, p: Vec3, eps: f64) -> bool {
        if self.is_empty() {
            return false;
        }
        self.edges().all(|(a, b, _)| {
            let inward = self.normal.cross(b - a);
            let len = inward.norm();
            len == 0.0 || (p - a).dot(inward) / len >= -eps
        })
    }
}

/// Intersects `poly` with the half-space `h`.
///
/// Vertices within `eps` of the cut plane count as on it; they are kept and
/// snapped onto the plane by a move inside the polygon plane. New edges lying
/// on the cut carry `h.provenance`.
pub fn clip_polygon(poly: &ConvexPolygon3, h: &HalfspaceConstraint, eps: f64) -> ConvexPolygon3 {
    clip_polygon_checked(poly, h, eps).0
}

/// A clip that emptied the polygon while one of its edges lay on the cut
/// plane: the region between two coincident planes has collapsed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Collapse {
    /// Length of the polygon part lying on the cut plane.
    pub length: f64,
    /// Provenance of the polygon edge lying on the cut plane.
    pub edge: Option<Provenance>,
}

/// [`clip_polygon`], additionally reporting a [`Collapse`] when the result is
/// empty but the input touched the cut plane along a segment.
pub fn clip_polygon_checked(
    poly: &ConvexPolygon3,
    h: &HalfspaceConstraint,
    eps: f64,
) -> (ConvexPolygon3, Option<Collapse>) {
    clip_impl(poly, h, eps)
}

fn clip_impl(poly: &ConvexPolygon3, h: &HalfspaceConstraint, eps: f64) -> (ConvexPolygon3, Option<Collapse>) {
    let n = poly.vertices.len();
    if n < 3 {
        return (ConvexPolygon3::empty(poly.parent_triangle, poly.normal), None);
    }
    let nn = h.normal.norm();
    let dist: Vec<f64> = poly
        .vertices
        .iter()
        .map(|v| (v.dot(h.normal) - h.offset) / nn)
        .collect();
    // -1 inside, 0 on, +1 outside
    let side: Vec<i8> = dist
        .iter()
        .map(|&d| {
            if d < -eps {
                -1
            } else if d > eps {
                1
            } else {
                0
            }
        })
        .collect();
    if side.iter().all(|&s| s < 0) {
        return (poly.clone(), None);
    }
    if side.iter().all(|&s| s > 0) {
        return (ConvexPolygon3::empty(poly.parent_triangle, poly.normal), None);
    }

    // In-plane direction along which on-plane vertices are snapped.
    let unit_n = h.normal / nn;
    let u = unit_n - poly.normal * unit_n.dot(poly.normal);
    let u2 = u.norm_squared();
    let snap = |v: Vec3, d: f64| -> Vec3 {
        if u2 > 0.01 {
            v - u * (d / u2)
        } else {
            v
        }
    };

    let mut verts = Vec::with_capacity(n + 2);
    let mut tags = Vec::with_capacity(n + 2);
    for k in 0..n {
        let l = (k + 1) % n;
        let (a, b) = (poly.vertices[k], poly.vertices[l]);
        let (sa, sb) = (side[k], side[l]);
        let tag = poly.tags[k];
        match (sa, sb) {
            (-1, 1) => {
                verts.push(a);
                tags.push(tag);
                let t = dist[k] / (dist[k] - dist[l]);
                verts.push(a + (b - a) * t);
                tags.push(h.provenance);
            }
            (-1, _) => {
                verts.push(a);
                tags.push(tag);
            }
            (0, 1) => {
                verts.push(snap(a, dist[k]));
                tags.push(h.provenance);
            }
            (0, _) => {
                verts.push(snap(a, dist[k]));
                tags.push(tag);
            }
            (1, -1) => {
                let t = dist[k] / (dist[k] - dist[l]);
                verts.push(a + (b - a) * t);
                tags.push(tag);
            }
            _ => {}
        }
    }

    // Collapse consecutive duplicates; the surviving vertex keeps the tag of
    // the longer (following) edge.
    let mut k = 0;
    while verts.len() >= 2 && k < verts.len() {
        let l = (k + 1) % verts.len();
        if verts[k].distance(verts[l]) <= eps {
            tags[k] = tags[l];
            verts.remove(l);
            tags.remove(l);
            if l < k {
                k -= 1;
            }
        } else {
            k += 1;
        }
    }
    if verts.len() < 3 {
        let collapse = if side.iter().all(|&s| s >= 0) {
            let on: Vec<usize> = (0..n).filter(|&k| side[k] == 0).collect();
            let mut length: f64 = 0.0;
            for (x, &a) in on.iter().enumerate() {
                for &b in &on[x + 1..] {
                    length = length.max(poly.vertices[a].distance(poly.vertices[b]));
                }
            }
            let edge = (0..n)
                .find(|&k| side[k] == 0 && side[(k + 1) % n] == 0)
                .map(|k| poly.tags[k]);
            (on.len() >= 2).then_some(Collapse { length, edge })
        } else {
            None
        };
        return (ConvexPolygon3::empty(poly.parent_triangle, poly.normal), collapse);
    }
    (
        ConvexPolygon3 {
            vertices: verts,
            tags,
            parent_triangle: poly.parent_triangle,
            normal: poly.normal,
        },
        None,
    )
}

/// Density that is affine on a triangle, given by its three vertex values.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffineDensity {
    values: [f64; 3],
    origin: Vec3,
    gradient: Vec3,
}

impl AffineDensity {
    pub fn new(tri: &Triangle, values: [f64; 3]) -> Self {
        let e1 = tri.b - tri.a;
        let e2 = tri.c - tri.a;
        let (g11, g12, g22) = (e1.dot(e1), e1.dot(e2), e2.dot(e2));
        let det = g11 * g22 - g12 * g12;
        let (r1, r2) = (values[1] - values[0], values[2] - values[0]);
        let gradient = if det > 0.0 {
            let alpha = (g22 * r1 - g12 * r2) / det;
            let beta = (g11 * r2 - g12 * r1) / det;
            e1 * alpha + e2 * beta
        } else {
            Vec3::ZERO
        };
        AffineDensity {
            values,
            origin: tri.a,
            gradient,
        }
    }

    pub fn constant(value: f64) -> Self {
        AffineDensity {
            values: [value; 3],
            origin: Vec3::ZERO,
            gradient: Vec3::ZERO,
        }
    }

    pub fn values(&self) -> [f64; 3] {
        self.values
    }

    #[inline]
    pub fn eval(&self, x: Vec3) -> f64 {
        self.values[0] + self.gradient.dot(x - self.origin)
    }

    pub fn scaled(&self, s: f64) -> Self {
        AffineDensity {
            values: self.values.map(|v| v * s),
            origin: self.origin,
            gradient: self.gradient * s,
        }
    }
}

/// `∫_poly ρ dH²`, centroid rule on each fan triangle (exact for affine ρ).
pub fn integrate_affine_area(poly: &ConvexPolygon3, rho: &AffineDensity) -> f64 {
    poly.fan().map(|t| t.area() * rho.eval(t.centroid())).sum()
}

/// `∫_[a,b] ρ dH¹`, trapezoid rule (exact for affine ρ).
pub fn integrate_affine_edge(a: Vec3, b: Vec3, rho: &AffineDensity) -> f64 {
    a.distance(b) * 0.5 * (rho.eval(a) + rho.eval(b))
}

/// `∫_poly x ρ(x) dH²`, edge-midpoint rule (exact for quadratics).
pub fn integrate_first_moment(poly: &ConvexPolygon3, rho: &AffineDensity) -> Vec3 {
    poly.fan().fold(Vec3::ZERO, |acc, t| {
        let w = t.area() / 3.0;
        let m = [(t.a + t.b) * 0.5, (t.b + t.c) * 0.5, (t.c + t.a) * 0.5];
        acc + m.iter().fold(Vec3::ZERO, |s, p| s + *p * rho.eval(*p)) * w
    })
}

// Degree-3 symmetric rule: centroid weight -27/48, three points at
// barycentric (3/5, 1/5, 1/5) with weight 25/48 each.
const CUBIC_CENTER_WEIGHT: f64 = -27.0 / 48.0;
const CUBIC_OUTER_WEIGHT: f64 = 25.0 / 48.0;

fn cubic_rule(t: &Triangle, f: impl Fn(Vec3) -> f64) -> f64 {
    let c = t.centroid();
    let p = |u: Vec3, v: Vec3, w: Vec3| u * 0.6 + v * 0.2 + w * 0.2;
    let outer = f(p(t.a, t.b, t.c)) + f(p(t.b, t.c, t.a)) + f(p(t.c, t.a, t.b));
    t.area() * (CUBIC_CENTER_WEIGHT * f(c) + CUBIC_OUTER_WEIGHT * outer)
}

/// `∫_poly ‖x − y‖² ρ(x) dH²`, exact for affine ρ.
pub fn integrate_quadratic_cost(poly: &ConvexPolygon3, rho: &AffineDensity, y: Vec3) -> f64 {
    poly.fan()
        .map(|t| cubic_rule(&t, |x| x.distance_squared(y) * rho.eval(x)))
        .sum()
}
