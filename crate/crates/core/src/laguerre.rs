//! Laguerre (power) diagram restricted to a triangle soup.
//!
//! Every triangle is processed on its own: the cell of site `i` inside the
//! triangle is the triangle clipped by the bisector half-spaces of `i`
//! against every candidate site. Candidates are found with a kd-tree over the
//! sites and a sound power-distance bound, so no cell is ever missed.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{DegeneracyKind, Error, Result};
use crate::geometry::{
    clip_polygon_checked, integrate_affine_area, integrate_affine_edge, integrate_first_moment,
    integrate_quadratic_cost, tangent_projection, Aabb, ConvexPolygon3, HalfspaceConstraint,
    Provenance, Vec3,
};
use crate::measures::{SimplexSoup, SiteSet};
use crate::spatial::SiteTree;

/// Relative floor (times the soup scale) on `‖Π(y_i − y_j)‖` for interfaces.
pub const REL_EPS_PROJ: f64 = 1e-7;

/// A collapsed cell is only reported when its on-plane segment is longer
/// than this many geometric tolerances.
const COLLAPSE_FACTOR: f64 = 1e3;

/// Candidate-site pruning policy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Pruning {
    /// Prune when there are more than 64 sites.
    Auto,
    Always,
    Never,
}

const AUTO_PRUNE_THRESHOLD: usize = 64;

/// The half-space where site `i` has a power value no larger than site `j`:
/// `{x : <x, y_j − y_i> ≤ (‖y_j‖² − ‖y_i‖² + ψ_j − ψ_i) / 2}`.
pub fn bisector_constraint(i: usize, j: usize, positions: &[Vec3], psi: &[f64]) -> Result<HalfspaceConstraint> {
    let (yi, yj) = (positions[i], positions[j]);
    let normal = yj - yi;
    if i == j || normal.norm_squared() == 0.0 {
        return Err(Error::Validation(format!("sites {i} and {j} coincide")));
    }
    // midpoint form avoids cancellation in ‖y_j‖² − ‖y_i‖² far from the origin
    let mid = (yi + yj) * 0.5;
    let offset = mid.dot(normal) + 0.5 * (psi[j] - psi[i]);
    Ok(HalfspaceConstraint::new(normal, offset, Provenance::Bisector(j)))
}

/// Power distance `‖x − y‖² + ψ`.
#[inline]
pub fn power(x: Vec3, y: Vec3, psi: f64) -> f64 {
    x.distance_squared(y) + psi
}

/// One convex piece of a cell inside one triangle.
#[derive(Debug, Clone, PartialEq)]
pub struct CellPiece {
    pub site: usize,
    pub polygon: ConvexPolygon3,
    pub mass: f64,
}

/// Shared boundary of two cells inside one triangle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InterfaceRecord {
    /// `(i, j)` with `i < j`.
    pub sites: (usize, usize),
    pub triangle: usize,
    /// `∫ ρ dH¹` over the shared segment.
    pub integral: f64,
    pub length: f64,
    /// `‖Π_σ(y_i − y_j)‖`, the tangential part of the site difference.
    pub projected_gap: f64,
    pub segment: [Vec3; 2],
}

#[derive(Debug, Clone)]
pub struct RestrictedLaguerreDiagram {
    /// Cell pieces per triangle, ordered by site index.
    pub pieces: Vec<Vec<CellPiece>>,
    /// `G_i(ψ)`.
    pub masses: Vec<f64>,
    /// `∫_{Lag_i} x ρ(x) dx`.
    pub moments: Vec<Vec3>,
    /// `∫_{Lag_i} ‖x − y_i‖² ρ(x) dx`.
    pub costs: Vec<f64>,
    pub interfaces: Vec<InterfaceRecord>,
}

impl RestrictedLaguerreDiagram {
    pub fn num_sites(&self) -> usize {
        self.masses.len()
    }

    pub fn total_mass(&self) -> f64 {
        self.masses.iter().sum()
    }

    /// Density-weighted centroid of every cell.
    pub fn cell_centroids(&self) -> Result<Vec<Vec3>> {
        self.masses
            .iter()
            .zip(&self.moments)
            .enumerate()
            .map(|(i, (&m, &mom))| {
                if m > 0.0 {
                    Ok(mom / m)
                } else {
                    Err(Error::EmptyCell { site: i })
                }
            })
            .collect()
    }

    /// Off-diagonal Jacobian entries `(i, j, ∂G_i/∂ψ_j)`, `i < j`: the sum over
    /// triangles of the interface integral divided by twice the projected gap
    /// on that triangle.
    pub fn interface_jacobian_entries(&self) -> Vec<(usize, usize, f64)> {
        let mut acc: BTreeMap<(usize, usize), f64> = BTreeMap::new();
        for rec in &self.interfaces {
            *acc.entry(rec.sites).or_insert(0.0) += rec.integral / (2.0 * rec.projected_gap);
        }
        acc.into_iter().map(|((i, j), h)| (i, j, h)).collect()
    }

    /// Iterates over every `(triangle, piece)`.
    pub fn all_pieces(&self) -> impl Iterator<Item = &CellPiece> {
        self.pieces.iter().flatten()
    }
}

/// Reusable state for evaluating diagrams of one soup and one site set at
/// many weight vectors.
#[derive(Debug, Clone)]
pub struct DiagramBuilder<'a> {
    soup: &'a SimplexSoup,
    positions: Vec<Vec3>,
    tree: SiteTree,
    pruning: Pruning,
}

impl<'a> DiagramBuilder<'a> {
    pub fn new(soup: &'a SimplexSoup, positions: &[Vec3]) -> Self {
        DiagramBuilder {
            soup,
            positions: positions.to_vec(),
            tree: SiteTree::new(positions),
            pruning: Pruning::Auto,
        }
    }

    pub fn with_pruning(mut self, pruning: Pruning) -> Self {
        self.pruning = pruning;
        self
    }

    pub fn positions(&self) -> &[Vec3] {
        &self.positions
    }

    pub fn soup(&self) -> &SimplexSoup {
        self.soup
    }

    fn prunes(&self) -> bool {
        match self.pruning {
            Pruning::Always => true,
            Pruning::Never => false,
            Pruning::Auto => self.positions.len() > AUTO_PRUNE_THRESHOLD,
        }
    }

    pub fn compute(&self, psi: &[f64]) -> Result<RestrictedLaguerreDiagram> {
        let n = self.positions.len();
        if psi.len() != n {
            return Err(Error::Validation(format!("{} weights for {n} sites", psi.len())));
        }
        if let Some(i) = psi.iter().position(|p| !p.is_finite()) {
            return Err(Error::Validation(format!("weight {i} is not finite")));
        }
        let node_mins = if self.prunes() {
            Some(self.tree.node_min_weights(psi))
        } else {
            None
        };
        let per_triangle: Vec<Result<TriangleCells>> = (0..self.soup.len())
            .into_par_iter()
            .map(|t| self.triangle_cells(t, psi, node_mins.as_deref()))
            .collect();

        // fixed triangle order: bitwise reproducible regardless of thread count
        let mut masses = vec![0.0; n];
        let mut moments = vec![Vec3::ZERO; n];
        let mut costs = vec![0.0; n];
        let mut pieces = Vec::with_capacity(self.soup.len());
        let mut interfaces = Vec::new();
        for r in per_triangle {
            let cells = r?;
            for (p, stats) in cells.pieces.iter().zip(&cells.stats) {
                masses[p.site] += p.mass;
                moments[p.site] += stats.0;
                costs[p.site] += stats.1;
            }
            pieces.push(cells.pieces);
            interfaces.extend(cells.interfaces);
        }
        Ok(RestrictedLaguerreDiagram {
            pieces,
            masses,
            moments,
            costs,
            interfaces,
        })
    }

    /// Sites that can own part of triangle `t`, sorted by index.
    pub fn candidates(&self, t: usize, psi: &[f64], node_mins: Option<&[f64]>) -> Vec<usize> {
        let Some(node_mins) = node_mins else {
            return (0..self.positions.len()).collect();
        };
        let tri = self.soup.triangle(t);
        let verts = tri.vertices();
        let pos = &self.positions;
        // U bounds min_k power_k from above on the whole triangle: each power
        // function is convex, so its maximum over the triangle is at a vertex.
        let (_, upper) = self
            .tree
            .minimize(
                node_mins,
                |b: &Aabb, w| verts.iter().map(|v| b.distance_squared(*v)).fold(0.0, f64::max) + w,
                |k| verts.iter().map(|v| power(*v, pos[k], psi[k])).fold(f64::NEG_INFINITY, f64::max),
            )
            .expect("non-empty site set");
        let (c, r) = tri.bounding_sphere();
        let scale = self.soup.scale();
        let limit = upper + 1e-9 * (upper.abs() + scale * scale);
        let lower = |d: f64, w: f64| {
            let gap = (d - r).max(0.0);
            gap * gap + w
        };
        self.tree.collect(
            node_mins,
            |b, w| lower(b.distance_squared(c).sqrt(), w) <= limit,
            |j| lower(c.distance(pos[j]), psi[j]) <= limit,
        )
    }

    fn triangle_cells(&self, t: usize, psi: &[f64], node_mins: Option<&[f64]>) -> Result<TriangleCells> {
        let soup = self.soup;
        let tri = soup.triangle(t);
        let rho = soup.affine_density(t);
        let eps = soup.eps_geom();
        let eps_proj = REL_EPS_PROJ * soup.scale();
        let pos = &self.positions;
        let candidates = self.candidates(t, psi, node_mins);
        let base = ConvexPolygon3::from_triangle(tri, t)?;
        let tri_normal = soup.normal(t);

        let mut out = TriangleCells::default();
        for &i in &candidates {
            let mut poly = base.clone();
            for &j in &candidates {
                if j == i {
                    continue;
                }
                let h = bisector_constraint(i, j, pos, psi)?;
                let tangential = h.normal - tri_normal * h.normal.dot(tri_normal);
                if tangential.norm() <= eps_proj
                    && poly.vertices.iter().all(|v| h.signed_distance(*v).abs() <= eps)
                {
                    // the bisector plane contains the triangle piece
                    return Err(Error::Degenerate {
                        kind: DegeneracyKind::ProjectedGap,
                        sites: vec![i.min(j), i.max(j)],
                        triangle: t,
                    });
                }
                let (clipped, collapse) = clip_polygon_checked(&poly, &h, eps);
                if let Some(c) = collapse {
                    if c.length > COLLAPSE_FACTOR * eps {
                        let mut sites = vec![i, j];
                        if let Some(Provenance::Bisector(k)) = c.edge {
                            sites.push(k);
                        }
                        return Err(Error::Degenerate {
                            kind: DegeneracyKind::CollapsedCell,
                            sites,
                            triangle: t,
                        });
                    }
                }
                poly = clipped;
                if poly.is_empty() {
                    break;
                }
            }
            if poly.is_empty() {
                continue;
            }
            let area = poly.area();
            if area < eps * eps || area < eps * poly.diameter() {
                let diam = poly.diameter();
                if diam > COLLAPSE_FACTOR * eps {
                    let mut sites = vec![i];
                    sites.extend(poly.tags.iter().filter_map(|p| match p {
                        Provenance::Bisector(k) => Some(*k),
                        _ => None,
                    }));
                    sites.dedup();
                    return Err(Error::Degenerate {
                        kind: DegeneracyKind::CollapsedCell,
                        sites,
                        triangle: t,
                    });
                }
                continue;
            }
            let mass = integrate_affine_area(&poly, rho);
            let moment = integrate_first_moment(&poly, rho);
            let cost = integrate_quadratic_cost(&poly, rho, pos[i]);
            for (a, b, tag) in poly.edges() {
                let Provenance::Bisector(j) = tag else { continue };
                if j <= i {
                    continue;
                }
                let length = a.distance(b);
                if length <= eps {
                    continue;
                }
                let integral = integrate_affine_edge(a, b, rho);
                let gap = tangent_projection(pos[i] - pos[j], tri)?.norm();
                if gap <= eps_proj && integral > 0.0 {
                    return Err(Error::Degenerate {
                        kind: DegeneracyKind::ProjectedGap,
                        sites: vec![i, j],
                        triangle: t,
                    });
                }
                out.interfaces.push(InterfaceRecord {
                    sites: (i, j),
                    triangle: t,
                    integral,
                    length,
                    projected_gap: gap,
                    segment: [a, b],
                });
            }
            out.pieces.push(CellPiece {
                site: i,
                polygon: poly,
                mass,
            });
            out.stats.push((moment, cost));
        }
        Ok(out)
    }
}

#[derive(Debug, Default)]
struct TriangleCells {
    pieces: Vec<CellPiece>,
    stats: Vec<(Vec3, f64)>,
    interfaces: Vec<InterfaceRecord>,
}

/// Restricted Laguerre diagram of `sites` at weights `psi`.
pub fn compute_diagram(soup: &SimplexSoup, sites: &SiteSet, psi: &[f64]) -> Result<RestrictedLaguerreDiagram> {
    DiagramBuilder::new(soup, sites.positions()).compute(psi)
}
