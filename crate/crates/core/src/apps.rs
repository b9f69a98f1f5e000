//! Applications on top of the solver: Lloyd-style quantization, remeshing
//! through the dual of the final diagram, and OT-ICP rigid registration.

use std::collections::{BTreeMap, BTreeSet};

use nalgebra::{Matrix3, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Provenance, Vec3};
use crate::laguerre::RestrictedLaguerreDiagram;
use crate::measures::{SimplexSoup, SiteSet};
use crate::shapes::sample_points;
use crate::solver::{damped_newton, SolveReport, SolverConfig};
use crate::transport::transport_cost;

/// `x ↦ R x + t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RigidTransform {
    pub rotation: [[f64; 3]; 3],
    pub translation: Vec3,
}

impl Default for RigidTransform {
    fn default() -> Self {
        Self::IDENTITY
    }
}

fn to_matrix(r: &[[f64; 3]; 3]) -> Matrix3<f64> {
    Matrix3::from_fn(|i, j| r[i][j])
}

fn from_matrix(m: &Matrix3<f64>) -> [[f64; 3]; 3] {
    std::array::from_fn(|i| std::array::from_fn(|j| m[(i, j)]))
}

fn to_na(v: Vec3) -> Vector3<f64> {
    Vector3::new(v.x, v.y, v.z)
}

fn from_na(v: Vector3<f64>) -> Vec3 {
    Vec3::new(v.x, v.y, v.z)
}

impl RigidTransform {
    pub const IDENTITY: RigidTransform = RigidTransform {
        rotation: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
        translation: Vec3::ZERO,
    };

    /// Rotation by `angle` radians about `axis`, followed by `translation`.
    pub fn from_axis_angle(axis: Vec3, angle: f64, translation: Vec3) -> Result<Self> {
        let axis = axis
            .normalized()
            .ok_or_else(|| Error::Validation("rotation axis is zero".into()))?;
        let r = nalgebra::Rotation3::from_axis_angle(&nalgebra::Unit::new_unchecked(to_na(axis)), angle);
        Ok(RigidTransform {
            rotation: from_matrix(r.matrix()),
            translation,
        })
    }

    pub fn apply(&self, p: Vec3) -> Vec3 {
        from_na(to_matrix(&self.rotation) * to_na(p)) + self.translation
    }

    /// `self ∘ other`
    pub fn compose(&self, other: &RigidTransform) -> RigidTransform {
        let r = to_matrix(&self.rotation) * to_matrix(&other.rotation);
        RigidTransform {
            rotation: from_matrix(&r),
            translation: self.apply(other.translation),
        }
    }

    pub fn inverse(&self) -> RigidTransform {
        let rt = to_matrix(&self.rotation).transpose();
        RigidTransform {
            rotation: from_matrix(&rt),
            translation: -from_na(rt * to_na(self.translation)),
        }
    }

    /// Rotation angle in radians.
    pub fn angle(&self) -> f64 {
        let r = &self.rotation;
        let c = ((r[0][0] + r[1][1] + r[2][2] - 1.0) / 2.0).clamp(-1.0, 1.0);
        c.acos()
    }

    /// `‖RᵀR − I‖_max` and `det R`.
    pub fn orthonormality(&self) -> (f64, f64) {
        let r = to_matrix(&self.rotation);
        let e = (r.transpose() * r - Matrix3::identity()).abs().max();
        (e, r.determinant())
    }

    /// Least-squares rigid motion taking `src[i]` to `dst[i]`.
    ///
    /// Closed form from the SVD of the cross-covariance; a reflection is
    /// turned into a rotation by flipping the weakest singular direction.
    pub fn fit(src: &[Vec3], dst: &[Vec3]) -> Result<RigidTransform> {
        if src.len() != dst.len() || src.len() < 3 {
            return Err(Error::Registration("need at least three correspondences".into()));
        }
        let n = src.len() as f64;
        let cs = src.iter().fold(Vec3::ZERO, |a, p| a + *p) / n;
        let cd = dst.iter().fold(Vec3::ZERO, |a, p| a + *p) / n;
        let mut h = Matrix3::zeros();
        for (s, d) in src.iter().zip(dst) {
            h += to_na(*s - cs) * to_na(*d - cd).transpose();
        }
        let svd = h.svd(true, true);
        let (u, vt) = (svd.u.unwrap(), svd.v_t.unwrap());
        let sv = svd.singular_values;
        let mut order = [0usize, 1, 2];
        order.sort_by(|&a, &b| sv[b].total_cmp(&sv[a]));
        if !(sv[order[1]] > 1e-12 * sv[order[0]]) {
            return Err(Error::Registration(
                "degenerate cross-covariance: correspondences are collinear".into(),
            ));
        }
        let v = vt.transpose();
        let mut d = Matrix3::identity();
        if (v * u.transpose()).determinant() < 0.0 {
            d[(order[2], order[2])] = -1.0;
        }
        let r = v * d * u.transpose();
        let t = cd - from_na(r * to_na(cs));
        Ok(RigidTransform {
            rotation: from_matrix(&r),
            translation: t,
        })
    }
}

/// One Lloyd round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantizeRound {
    /// Transport cost of the optimal plan for the sites entering the round.
    pub cost: f64,
    pub residual: f64,
    pub newton_iterations: usize,
    pub max_displacement: f64,
}

#[derive(Debug, Clone)]
pub struct Quantization {
    pub sites: SiteSet,
    pub history: Vec<QuantizeRound>,
    /// Cost of the optimal plan for the returned sites.
    pub final_cost: f64,
    pub reports: Vec<SolveReport>,
}

/// Optimal quantization by alternating transport solves and centroid moves.
pub fn quantize(soup: &SimplexSoup, n: usize, outer_iters: usize, config: &SolverConfig) -> Result<Quantization> {
    if n == 0 {
        return Err(Error::Validation("need at least one point".into()));
    }
    let initial = if n == soup.positions().len() {
        soup.positions().to_vec()
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        sample_points(soup, n, &mut rng)
    };
    let mut sites = SiteSet::uniform(initial)?;
    let tol = 1e-8 * soup.scale();
    let mut history = Vec::new();
    let mut reports = Vec::new();
    for k in 0..outer_iters {
        let out = damped_newton(soup, &sites, config).map_err(|e| e.with_context(format!("quantize iteration {k}")))?;
        let summary = transport_cost(&out.diagram, &out.sites);
        let centroids = out.diagram.cell_centroids()?;
        let moved = out
            .sites
            .positions()
            .iter()
            .zip(&centroids)
            .map(|(a, b)| a.distance(*b))
            .fold(0.0, f64::max);
        log::info!("quantize {k}: cost {:.6e}, displacement {moved:.3e}", summary.total_cost);
        history.push(QuantizeRound {
            cost: summary.total_cost,
            residual: out.report.residuals.last().copied().unwrap_or(0.0),
            newton_iterations: out.report.iterations,
            max_displacement: moved,
        });
        reports.push(out.report);
        sites = out.sites.with_positions(centroids)?;
        if moved < tol {
            break;
        }
    }
    let out = damped_newton(soup, &sites, config).map_err(|e| e.with_context("quantize final solve"))?;
    let final_cost = transport_cost(&out.diagram, &out.sites).total_cost;
    reports.push(out.report);
    Ok(Quantization {
        sites,
        history,
        final_cost,
        reports,
    })
}

/// Where a dual face came from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FaceOrigin {
    pub triangle: usize,
    /// The diagram point where the three cells meet.
    pub point: Vec3,
}

/// Dual of a restricted Laguerre diagram: one vertex per cell, one triangle
/// per point where exactly three cells meet.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualMesh {
    pub vertices: Vec<Vec3>,
    pub faces: Vec<[usize; 3]>,
    pub provenance: Vec<FaceOrigin>,
    pub warnings: Vec<String>,
}

impl DualMesh {
    /// Undirected edges, sorted.
    pub fn edges(&self) -> BTreeSet<(usize, usize)> {
        self.faces
            .iter()
            .flat_map(|f| [(f[0], f[1]), (f[1], f[2]), (f[2], f[0])])
            .map(|(a, b)| (a.min(b), a.max(b)))
            .collect()
    }

    /// `V − E + F`, counting only vertices used by a face.
    pub fn euler_characteristic(&self) -> i64 {
        let used: BTreeSet<usize> = self.faces.iter().flatten().copied().collect();
        used.len() as i64 - self.edges().len() as i64 + self.faces.len() as i64
    }

    /// Faces whose cells are not pairwise adjacent in `diagram`.
    pub fn unsupported_faces(&self, diagram: &RestrictedLaguerreDiagram) -> Vec<usize> {
        let adjacent: BTreeSet<(usize, usize)> = diagram
            .interface_jacobian_entries()
            .into_iter()
            .filter(|e| e.2 > 0.0)
            .map(|e| (e.0, e.1))
            .collect();
        (0..self.faces.len())
            .filter(|&f| {
                let [a, b, c] = self.faces[f];
                ![(a, b), (b, c), (a, c)]
                    .iter()
                    .all(|&(x, y)| adjacent.contains(&(x.min(y), x.max(y))))
            })
            .collect()
    }

    pub fn face_normal(&self, f: usize) -> Vec3 {
        let [a, b, c] = self.faces[f].map(|i| self.vertices[i]);
        (b - a).cross(c - a)
    }
}

/// Builds the dual mesh from triple points of the diagram.
pub fn dual_mesh(soup: &SimplexSoup, diagram: &RestrictedLaguerreDiagram) -> Result<DualMesh> {
    let centroids = diagram.cell_centroids()?;
    let cluster_tol = 1e3 * soup.eps_geom();
    let mut faces: BTreeMap<[usize; 3], ([usize; 3], FaceOrigin)> = BTreeMap::new();
    let mut warnings = Vec::new();
    for (t, pieces) in diagram.pieces.iter().enumerate() {
        // (point, cells meeting there)
        let mut clusters: Vec<(Vec3, BTreeSet<usize>)> = Vec::new();
        for piece in pieces {
            let poly = &piece.polygon;
            let m = poly.len();
            for k in 0..m {
                let (Provenance::Bisector(a), Provenance::Bisector(b)) = (poly.tags[(k + m - 1) % m], poly.tags[k]) else {
                    continue;
                };
                if a == b {
                    continue;
                }
                let p = poly.vertices[k];
                match clusters.iter_mut().find(|c| c.0.distance(p) <= cluster_tol) {
                    Some(c) => c.1.extend([piece.site, a, b]),
                    None => clusters.push((p, [piece.site, a, b].into_iter().collect())),
                }
            }
        }
        let normal = soup.normal(t);
        for (p, cells) in clusters {
            if cells.len() != 3 {
                let w = format!("{}-fold diagram point in triangle {t} at {p:?}; dual face skipped", cells.len());
                log::warn!("{w}");
                warnings.push(w);
                continue;
            }
            let key: [usize; 3] = {
                let v: Vec<usize> = cells.iter().copied().collect();
                [v[0], v[1], v[2]]
            };
            if faces.contains_key(&key) {
                continue;
            }
            // order the cells counter-clockwise around p, seen from the triangle normal
            let local = |i: usize| {
                pieces
                    .iter()
                    .find(|q| q.site == i)
                    .map(|q| q.polygon.vertex_mean())
                    .unwrap_or(centroids[i])
            };
            let e1 = (local(key[0]) - p - normal * (local(key[0]) - p).dot(normal))
                .normalized()
                .unwrap_or_else(|| any_tangent(normal));
            let e2 = normal.cross(e1);
            let mut ordered = key;
            ordered.sort_by(|&a, &b| {
                let ang = |i: usize| {
                    let d = local(i) - p;
                    d.dot(e2).atan2(d.dot(e1)).rem_euclid(std::f64::consts::TAU)
                };
                ang(a).total_cmp(&ang(b))
            });
            faces.insert(key, (ordered, FaceOrigin { triangle: t, point: p }));
        }
    }
    let (faces, provenance) = faces.into_values().unzip();
    Ok(DualMesh {
        vertices: centroids,
        faces,
        provenance,
        warnings,
    })
}

fn any_tangent(n: Vec3) -> Vec3 {
    let a = if n.x.abs() < 0.9 { Vec3::new(1.0, 0.0, 0.0) } else { Vec3::new(0.0, 1.0, 0.0) };
    n.cross(a).normalized().unwrap_or(a)
}

#[derive(Debug, Clone)]
pub struct Remesh {
    pub mesh: DualMesh,
    pub diagram: RestrictedLaguerreDiagram,
    pub report: SolveReport,
}

/// Solves transport to the uniform measure on the soup's vertices and
/// returns the dual of the final diagram.
pub fn remesh(soup: &SimplexSoup, config: &SolverConfig) -> Result<Remesh> {
    let sites = SiteSet::uniform(soup.positions().to_vec())?;
    let out = damped_newton(soup, &sites, config)?;
    let mesh = dual_mesh(soup, &out.diagram)?;
    let mut report = out.report;
    report.warnings.extend(mesh.warnings.iter().cloned());
    Ok(Remesh {
        mesh,
        diagram: out.diagram,
        report,
    })
}

#[derive(Debug, Clone)]
pub struct Registration {
    /// Maps the input cloud onto the soup.
    pub transform: RigidTransform,
    /// RMS distance between sites and their cell centroids, per outer iteration.
    pub history: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub reports: Vec<SolveReport>,
}

/// OT-ICP: nearest-neighbour correspondences replaced by cell centroids of
/// the optimal transport plan.
pub fn register(soup: &SimplexSoup, cloud: &SiteSet, max_outer: usize, config: &SolverConfig) -> Result<Registration> {
    let diam = soup.scale();
    let mut transform = RigidTransform::IDENTITY;
    let mut history = Vec::new();
    let mut reports = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    for k in 0..max_outer {
        let moved: Vec<Vec3> = cloud.positions().iter().map(|p| transform.apply(*p)).collect();
        let sites = cloud.with_positions(moved)?;
        let out = damped_newton(soup, &sites, config).map_err(|e| e.with_context(format!("register iteration {k}")))?;
        let centroids = out.diagram.cell_centroids()?;
        let current = out.sites.positions();
        let rms = (current.iter().zip(&centroids).map(|(a, b)| a.distance_squared(*b)).sum::<f64>()
            / current.len() as f64)
            .sqrt();
        history.push(rms);
        reports.push(out.report);
        let step = RigidTransform::fit(current, &centroids)?;
        transform = step.compose(&transform);
        iterations = k + 1;
        let change = step.angle() + step.translation.norm() / diam;
        log::info!("register {k}: rms {rms:.3e}, change {change:.3e}");
        if change < 1e-6 {
            converged = true;
            break;
        }
    }
    Ok(Registration {
        transform,
        history,
        iterations,
        converged,
        reports,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::shapes;
    use rand::Rng;

    #[test]
    fn kabsch_recovers_motion() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let pts: Vec<Vec3> = (0..20)
            .map(|_| Vec3::new(rng.random(), rng.random(), rng.random()))
            .collect();
        let m = RigidTransform::from_axis_angle(Vec3::new(1.0, 2.0, -0.5), 0.7, Vec3::new(0.1, -0.3, 2.0)).unwrap();
        let dst: Vec<Vec3> = pts.iter().map(|p| m.apply(*p)).collect();
        let fit = RigidTransform::fit(&pts, &dst).unwrap();
        for (a, b) in fit.rotation.iter().flatten().zip(m.rotation.iter().flatten()) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!(fit.translation.distance(m.translation) < 1e-12);
        let (e, det) = fit.orthonormality();
        assert!(e < 1e-10 && (det - 1.0).abs() < 1e-10);
        let id = m.compose(&m.inverse());
        assert!(id.angle() < 1e-7 && id.translation.norm() < 1e-12);
    }

    #[test]
    fn kabsch_never_reflects() {
        // planar mirror images: best orthogonal map is a reflection
        let src = [
            Vec3::new(1.0, 0.0, 0.0),
            Vec3::new(0.0, 1.0, 0.0),
            Vec3::new(-1.0, -1.0, 0.0),
            Vec3::new(0.3, 0.2, 0.0),
        ];
        let dst: Vec<Vec3> = src.iter().map(|p| Vec3::new(p.x, -p.y, p.z)).collect();
        let fit = RigidTransform::fit(&src, &dst).unwrap();
        assert!((fit.orthonormality().1 - 1.0).abs() < 1e-10);
    }

    #[test]
    fn kabsch_rejects_collinear() {
        let src: Vec<Vec3> = (0..5).map(|i| Vec3::new(i as f64, 0.0, 0.0)).collect();
        assert!(matches!(RigidTransform::fit(&src, &src), Err(Error::Registration(_))));
    }

    #[test]
    fn quantize_single_point_goes_to_centroid() {
        let sq = shapes::unit_square();
        let q = quantize(&sq, 1, 3, &SolverConfig::default()).unwrap();
        assert!(q.sites.positions()[0].distance(Vec3::new(0.5, 0.5, 0.0)) < 1e-12);
        assert!(q.history.len() <= 2);
        assert!((q.final_cost - 1.0 / 6.0).abs() < 1e-12);
    }

    #[test]
    fn symmetric_pair_is_a_fixed_point() {
        let sq = shapes::unit_square();
        let s = SiteSet::uniform(vec![Vec3::new(0.25, 0.5, 0.0), Vec3::new(0.75, 0.5, 0.0)]).unwrap();
        let out = damped_newton(&sq, &s, &SolverConfig::default()).unwrap();
        let c = out.diagram.cell_centroids().unwrap();
        assert!(c[0].distance(s.positions()[0]) < 1e-12);
        assert!(c[1].distance(s.positions()[1]) < 1e-12);
    }

    #[test]
    fn flat_remesh_is_consistently_oriented() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let grid = shapes::grid_square(6, 0.2, &mut rng);
        let r = remesh(&grid, &SolverConfig::default()).unwrap();
        assert!(!r.mesh.faces.is_empty());
        assert!(r.mesh.unsupported_faces(&r.diagram).is_empty());
        for f in 0..r.mesh.faces.len() {
            assert!(r.mesh.face_normal(f).z > 0.0, "face {f} flipped");
        }
        let unique: BTreeSet<[usize; 3]> = r
            .mesh
            .faces
            .iter()
            .map(|f| {
                let mut s = *f;
                s.sort();
                s
            })
            .collect();
        assert_eq!(unique.len(), r.mesh.faces.len());
    }

    #[test]
    fn sphere_remesh_is_closed() {
        let s = shapes::icosphere(2);
        let r = remesh(&s, &SolverConfig::default()).unwrap();
        assert!(r.mesh.warnings.is_empty(), "{:?}", r.mesh.warnings);
        assert_eq!(r.mesh.euler_characteristic(), 2);
        assert!(r.mesh.unsupported_faces(&r.diagram).is_empty());
        // every interface shows up as a dual edge
        let edges = r.mesh.edges();
        for (i, j, h) in r.diagram.interface_jacobian_entries() {
            if h > 0.0 {
                assert!(edges.contains(&(i, j)), "missing dual edge {i}-{j}");
            }
        }
    }
}
