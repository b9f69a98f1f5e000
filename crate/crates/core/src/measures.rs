//! Source measure (triangle soup with affine densities) and target measure
//! (weighted point set).

use std::collections::HashMap;
use std::ops::{Deref, DerefMut};

use serde::{Deserialize, Serialize};

use crate::geometry::{integrate_affine_area, Aabb, AffineDensity, ConvexPolygon3, Triangle, Vec3};
use crate::spatial::TriangleBvh;
use crate::error::{Error, Result};

/// Relative geometric tolerance; multiplied by the bounding-box diagonal.
pub const REL_EPS_GEOM: f64 = 1e-9;

/// Triangle soup carrying a non-negative density, affine on each triangle.
#[derive(Debug, Clone)]
pub struct SimplexSoup {
    positions: Vec<Vec3>,
    triangles: Vec<[usize; 3]>,
    density: Vec<f64>,
    geometry: Vec<Triangle>,
    normals: Vec<Vec3>,
    densities: Vec<AffineDensity>,
    bounds: Aabb,
    bvh: TriangleBvh,
    warnings: Vec<String>,
}

impl SimplexSoup {
    /// Validates and builds a soup. `density` is per vertex; `None` means ρ ≡ 1.
    pub fn new(positions: Vec<Vec3>, triangles: Vec<[usize; 3]>, density: Option<Vec<f64>>) -> Result<Self> {
        let density = density.unwrap_or_else(|| vec![1.0; positions.len()]);
        if density.len() != positions.len() {
            return Err(Error::Validation(format!(
                "density has {} values for {} vertices",
                density.len(),
                positions.len()
            )));
        }
        if let Some(i) = positions.iter().position(|p| !p.is_finite()) {
            return Err(Error::Validation(format!("vertex {i} is not finite")));
        }
        if let Some(i) = density.iter().position(|d| !d.is_finite() || *d < 0.0) {
            return Err(Error::Validation(format!("vertex {i} has invalid density {}", density[i])));
        }
        let bounds = Aabb::from_points(&positions);
        let diag = bounds.diagonal();
        let mut geometry = Vec::with_capacity(triangles.len());
        let mut normals = Vec::with_capacity(triangles.len());
        let mut densities = Vec::with_capacity(triangles.len());
        for (t, tri) in triangles.iter().enumerate() {
            if let Some(&bad) = tri.iter().find(|&&i| i >= positions.len()) {
                return Err(Error::Validation(format!("triangle {t} references missing vertex {bad}")));
            }
            let g = Triangle::new(positions[tri[0]], positions[tri[1]], positions[tri[2]]);
            let eps = REL_EPS_GEOM * diag;
            if g.is_degenerate() || g.area() <= eps * eps {
                return Err(Error::Validation(format!("triangle {t} is degenerate")));
            }
            normals.push(g.unit_normal()?);
            densities.push(AffineDensity::new(&g, [density[tri[0]], density[tri[1]], density[tri[2]]]));
            geometry.push(g);
        }
        let mut warnings = Vec::new();
        let used: Vec<bool> = {
            let mut u = vec![false; positions.len()];
            triangles.iter().flatten().for_each(|&i| u[i] = true);
            u
        };
        let zeros = density.iter().zip(&used).filter(|(d, u)| **u && **d == 0.0).count();
        if zeros > 0 {
            let w = format!("{zeros} vertices carry zero density; the support may lose strong connectedness");
            log::warn!("{w}");
            warnings.push(w);
        }
        let bvh = TriangleBvh::new(geometry.clone());
        Ok(SimplexSoup {
            positions,
            triangles,
            density,
            geometry,
            normals,
            densities,
            bounds,
            bvh,
            warnings,
        })
    }

    pub fn positions(&self) -> &[Vec3] {
        &self.positions
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn density(&self) -> &[f64] {
        &self.density
    }

    pub fn len(&self) -> usize {
        self.triangles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triangles.is_empty()
    }

    pub fn triangle(&self, t: usize) -> &Triangle {
        &self.geometry[t]
    }

    pub fn triangle_geometry(&self) -> &[Triangle] {
        &self.geometry
    }

    pub fn normal(&self, t: usize) -> Vec3 {
        self.normals[t]
    }

    pub fn affine_density(&self, t: usize) -> &AffineDensity {
        &self.densities[t]
    }

    pub fn bounds(&self) -> Aabb {
        self.bounds
    }

    /// Bounding-box diagonal.
    pub fn scale(&self) -> f64 {
        self.bounds.diagonal()
    }

    pub fn eps_geom(&self) -> f64 {
        REL_EPS_GEOM * self.scale()
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    pub fn area(&self) -> f64 {
        self.geometry.iter().map(|t| t.area()).sum()
    }

    /// `μ(K)`: integral of the density over all triangles.
    pub fn total_mass(&self) -> f64 {
        self.geometry
            .iter()
            .zip(&self.densities)
            .enumerate()
            .map(|(t, (g, rho))| match ConvexPolygon3::from_triangle(g, t) {
                Ok(p) => integrate_affine_area(&p, rho),
                Err(_) => 0.0,
            })
            .sum()
    }

    /// Rescales the density so that the total mass is one.
    pub fn normalize(&self) -> Result<Self> {
        let mass = self.total_mass();
        if !(mass > 0.0) {
            return Err(Error::Validation("soup has zero total mass".into()));
        }
        let density = self.density.iter().map(|d| d / mass).collect();
        let mut out = self.clone();
        out.densities = self.densities.iter().map(|r| r.scaled(1.0 / mass)).collect();
        out.density = density;
        Ok(out)
    }

    /// Same soup with a new per-vertex density.
    pub fn with_density(&self, density: Vec<f64>) -> Result<Self> {
        SimplexSoup::new(self.positions.clone(), self.triangles.clone(), Some(density))
    }

    /// Applies `f` to every vertex.
    pub fn map_positions(&self, f: impl Fn(Vec3) -> Vec3) -> Result<Self> {
        SimplexSoup::new(
            self.positions.iter().map(|p| f(*p)).collect(),
            self.triangles.clone(),
            Some(self.density.clone()),
        )
    }

    /// Exact distance from `p` to the soup.
    pub fn distance(&self, p: Vec3) -> f64 {
        self.bvh.nearest(p).map(|(_, d)| d).unwrap_or(f64::INFINITY)
    }

    /// Edge-adjacency connectivity of the triangles. Vertices closer than
    /// the geometric tolerance are identified, so duplicated vertices (e.g.
    /// for densities discontinuous across edges) still connect.
    pub fn check_strong_connectedness(&self) -> ConnectivityReport {
        let welded = weld_vertices(&self.positions, self.eps_geom());
        let mut uf = UnionFind::new(self.triangles.len());
        let mut edge_owner: HashMap<(usize, usize), usize> = HashMap::new();
        for (t, tri) in self.triangles.iter().enumerate() {
            for k in 0..3 {
                let (a, b) = (welded[tri[k]], welded[tri[(k + 1) % 3]]);
                let key = (a.min(b), a.max(b));
                match edge_owner.get(&key) {
                    Some(&o) => uf.union(o, t),
                    None => {
                        edge_owner.insert(key, t);
                    }
                }
            }
        }
        let mut groups: HashMap<usize, Vec<usize>> = HashMap::new();
        for t in 0..self.triangles.len() {
            groups.entry(uf.find(t)).or_default().push(t);
        }
        let mut components: Vec<Vec<usize>> = groups.into_values().collect();
        components.sort_by_key(|c| c[0]);
        ConnectivityReport {
            connected: components.len() <= 1,
            components,
        }
    }
}

/// Result of [`SimplexSoup::check_strong_connectedness`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConnectivityReport {
    pub connected: bool,
    /// Triangle indices per component, each sorted; components ordered by first triangle.
    pub components: Vec<Vec<usize>>,
}

fn weld_vertices(positions: &[Vec3], eps: f64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..positions.len()).collect();
    order.sort_by(|&a, &b| positions[a].x.total_cmp(&positions[b].x).then(a.cmp(&b)));
    let mut uf = UnionFind::new(positions.len());
    for (k, &i) in order.iter().enumerate() {
        for &j in &order[k + 1..] {
            if positions[j].x - positions[i].x > eps {
                break;
            }
            if positions[i].distance(positions[j]) <= eps {
                uf.union(i, j);
            }
        }
    }
    (0..positions.len()).map(|i| uf.find(i)).collect()
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind { parent: (0..n).collect() }
    }

    fn find(&mut self, mut i: usize) -> usize {
        while self.parent[i] != i {
            self.parent[i] = self.parent[self.parent[i]];
            i = self.parent[i];
        }
        i
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            // smallest index becomes the root; keeps results order-independent
            let (lo, hi) = (ra.min(rb), ra.max(rb));
            self.parent[hi] = lo;
        }
    }
}

/// Finitely supported target measure `Σ ν_i δ_{y_i}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SiteSet {
    positions: Vec<Vec3>,
    masses: Vec<f64>,
}

impl SiteSet {
    /// Validates positions and masses and normalizes masses to sum to one.
    pub fn new(positions: Vec<Vec3>, masses: Vec<f64>) -> Result<Self> {
        if positions.is_empty() {
            return Err(Error::Validation("no sites".into()));
        }
        if masses.len() != positions.len() {
            return Err(Error::Validation(format!(
                "{} masses for {} sites",
                masses.len(),
                positions.len()
            )));
        }
        if let Some(i) = positions.iter().position(|p| !p.is_finite()) {
            return Err(Error::Validation(format!("site {i} is not finite")));
        }
        if let Some(i) = masses.iter().position(|m| !(m.is_finite() && *m > 0.0)) {
            return Err(Error::Validation(format!(
                "site {i} has non-positive target mass {}",
                masses[i]
            )));
        }
        let dups = duplicate_pairs(&positions, REL_EPS_GEOM * Aabb::from_points(&positions).diagonal());
        if !dups.is_empty() {
            return Err(Error::Validation(format!("duplicate sites: {dups:?}")));
        }
        let total: f64 = masses.iter().sum();
        let masses = masses.iter().map(|m| m / total).collect();
        Ok(SiteSet { positions, masses })
    }

    pub fn uniform(positions: Vec<Vec3>) -> Result<Self> {
        let n = positions.len();
        SiteSet::new(positions, vec![1.0; n])
    }

    pub fn positions(&self) -> &[Vec3] {
        &self.positions
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    /// Masses rescaled to sum to `total` (typically `μ(K)`).
    pub fn masses_scaled_to(&self, total: f64) -> Vec<f64> {
        self.masses.iter().map(|m| m * total).collect()
    }

    /// Same masses, new positions.
    pub fn with_positions(&self, positions: Vec<Vec3>) -> Result<Self> {
        SiteSet::new(positions, self.masses.clone())
    }
}

/// Pairs `(i, j)`, `i < j`, of points closer than `eps`.
pub fn duplicate_pairs(positions: &[Vec3], eps: f64) -> Vec<(usize, usize)> {
    let mut order: Vec<usize> = (0..positions.len()).collect();
    order.sort_by(|&a, &b| positions[a].x.total_cmp(&positions[b].x).then(a.cmp(&b)));
    let mut out = Vec::new();
    for (k, &i) in order.iter().enumerate() {
        for &j in &order[k + 1..] {
            if positions[j].x - positions[i].x > eps {
                break;
            }
            if positions[i].distance(positions[j]) <= eps {
                out.push((i.min(j), i.max(j)));
            }
        }
    }
    out.sort_unstable();
    out
}

/// Weights `ψ`, one per site.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct WeightVector(pub Vec<f64>);

impl WeightVector {
    pub fn zeros(n: usize) -> Self {
        WeightVector(vec![0.0; n])
    }

    /// `ψ + s · v`
    pub fn step(&self, v: &[f64], s: f64) -> Self {
        WeightVector(self.0.iter().zip(v).map(|(p, d)| p + s * d).collect())
    }

    pub fn shifted(&self, c: f64) -> Self {
        WeightVector(self.0.iter().map(|p| p + c).collect())
    }

    /// `max_{i,j} |ψ_i − ψ_j|`
    pub fn spread(&self) -> f64 {
        let (lo, hi) = self
            .0
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &p| (lo.min(p), hi.max(p)));
        if self.0.is_empty() {
            0.0
        } else {
            hi - lo
        }
    }
}

impl Deref for WeightVector {
    type Target = Vec<f64>;
    fn deref(&self) -> &Vec<f64> {
        &self.0
    }
}

impl DerefMut for WeightVector {
    fn deref_mut(&mut self) -> &mut Vec<f64> {
        &mut self.0
    }
}

impl From<Vec<f64>> for WeightVector {
    fn from(v: Vec<f64>) -> Self {
        WeightVector(v)
    }
}

/// `diam(K ∪ Y)` computed over soup vertices and sites.
pub fn joint_diameter(soup: &SimplexSoup, sites: &SiteSet) -> f64 {
    let pts: Vec<Vec3> = soup.positions().iter().chain(sites.positions()).copied().collect();
    // exact diameter of the convex hull vertices; quadratic but only used for certificates
    let mut d2: f64 = 0.0;
    for (i, a) in pts.iter().enumerate() {
        for b in &pts[i + 1..] {
            d2 = d2.max(a.distance_squared(*b));
        }
    }
    d2.sqrt()
}
