//! Procedural test meshes and surface sampling.

use std::collections::HashMap;

use rand::Rng;

use crate::geometry::Vec3;
use crate::measures::SimplexSoup;

fn soup(positions: Vec<Vec3>, triangles: Vec<[usize; 3]>) -> SimplexSoup {
    SimplexSoup::new(positions, triangles, None).expect("procedural mesh is valid")
}

/// `[0,1]²` in the `z = 0` plane, split along the diagonal into two triangles.
pub fn unit_square() -> SimplexSoup {
    soup(
        vec![
            Vec3::new(0.0, 0.0, 0.0),
            Vec3::new(1.0, 0.0, 0.0),
            Vec3::new(1.0, 1.0, 0.0),
            Vec3::new(0.0, 1.0, 0.0),
        ],
        vec![[0, 1, 2], [0, 2, 3]],
    )
}

/// Regular `n × n` grid triangulation of `[0,1]²`; interior vertices are
/// displaced by up to `jitter` cells (uniformly, deterministic in `rng`).
pub fn grid_square(n: usize, jitter: f64, rng: &mut impl Rng) -> SimplexSoup {
    let h = 1.0 / n as f64;
    let mut positions = Vec::with_capacity((n + 1) * (n + 1));
    for j in 0..=n {
        for i in 0..=n {
            let interior = i > 0 && i < n && j > 0 && j < n;
            let (dx, dy) = if interior && jitter > 0.0 {
                (
                    rng.random_range(-jitter..jitter) * h,
                    rng.random_range(-jitter..jitter) * h,
                )
            } else {
                (0.0, 0.0)
            };
            positions.push(Vec3::new(i as f64 * h + dx, j as f64 * h + dy, 0.0));
        }
    }
    let idx = |i: usize, j: usize| j * (n + 1) + i;
    let mut triangles = Vec::with_capacity(2 * n * n);
    for j in 0..n {
        for i in 0..n {
            triangles.push([idx(i, j), idx(i + 1, j), idx(i + 1, j + 1)]);
            triangles.push([idx(i, j), idx(i + 1, j + 1), idx(i, j + 1)]);
        }
    }
    soup(positions, triangles)
}

/// Two triangles touching at a single vertex (not strongly connected).
pub fn vertex_contact_soup() -> SimplexSoup {
    soup(
        vec![
            Vec3::new(0.0, 0.0, 0.0),
            Vec3::new(-1.0, -0.5, 0.0),
            Vec3::new(-1.0, 0.5, 0.0),
            Vec3::new(1.0, -0.5, 0.0),
            Vec3::new(1.0, 0.5, 0.0),
        ],
        vec![[0, 2, 1], [0, 3, 4]],
    )
}

/// Unit sphere approximation by `subdivisions` rounds of 4-to-1 splitting
/// of an icosahedron (20 · 4^s triangles).
pub fn icosphere(subdivisions: usize) -> SimplexSoup {
    let (positions, triangles) = icosphere_mesh(subdivisions);
    soup(positions, triangles)
}

pub fn icosphere_mesh(subdivisions: usize) -> (Vec<Vec3>, Vec<[usize; 3]>) {
    let t = (1.0 + 5f64.sqrt()) / 2.0;
    let raw = [
        (-1.0, t, 0.0),
        (1.0, t, 0.0),
        (-1.0, -t, 0.0),
        (1.0, -t, 0.0),
        (0.0, -1.0, t),
        (0.0, 1.0, t),
        (0.0, -1.0, -t),
        (0.0, 1.0, -t),
        (t, 0.0, -1.0),
        (t, 0.0, 1.0),
        (-t, 0.0, -1.0),
        (-t, 0.0, 1.0),
    ];
    let mut positions: Vec<Vec3> = raw
        .iter()
        .map(|&(x, y, z)| Vec3::new(x, y, z).normalized().unwrap())
        .collect();
    let mut triangles: Vec<[usize; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    for _ in 0..subdivisions {
        let mut mid: HashMap<(usize, usize), usize> = HashMap::new();
        let mut midpoint = |a: usize, b: usize, positions: &mut Vec<Vec3>| -> usize {
            *mid.entry((a.min(b), a.max(b))).or_insert_with(|| {
                positions.push(((positions[a] + positions[b]) * 0.5).normalized().unwrap());
                positions.len() - 1
            })
        };
        let mut next = Vec::with_capacity(triangles.len() * 4);
        for [a, b, c] in triangles {
            let ab = midpoint(a, b, &mut positions);
            let bc = midpoint(b, c, &mut positions);
            let ca = midpoint(c, a, &mut positions);
            next.extend([[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
        }
        triangles = next;
    }
    (positions, triangles)
}

/// Torus around the z axis with radii `major`, `minor`; `nu × nv` quads split in two.
pub fn torus(major: f64, minor: f64, nu: usize, nv: usize) -> SimplexSoup {
    let mut positions = Vec::with_capacity(nu * nv);
    for i in 0..nu {
        let u = i as f64 / nu as f64 * std::f64::consts::TAU;
        for j in 0..nv {
            let v = j as f64 / nv as f64 * std::f64::consts::TAU;
            let r = major + minor * v.cos();
            positions.push(Vec3::new(r * u.cos(), r * u.sin(), minor * v.sin()));
        }
    }
    let idx = |i: usize, j: usize| (i % nu) * nv + (j % nv);
    let mut triangles = Vec::with_capacity(2 * nu * nv);
    for i in 0..nu {
        for j in 0..nv {
            triangles.push([idx(i, j), idx(i + 1, j), idx(i + 1, j + 1)]);
            triangles.push([idx(i, j), idx(i + 1, j + 1), idx(i, j + 1)]);
        }
    }
    soup(positions, triangles)
}

/// Icosphere deformed into an asymmetric bumpy ellipsoid with well separated
/// axes (2.2 : 1 : 0.45); useful where the shape must pin down a rigid motion.
pub fn lumpy_ellipsoid(subdivisions: usize) -> SimplexSoup {
    let (positions, triangles) = icosphere_mesh(subdivisions);
    let positions = positions
        .into_iter()
        .map(|p| {
            let bump = 1.0 + 0.15 * (2.0 * p.x + 0.5).sin() * (1.5 * p.y).cos() + 0.1 * p.z * p.x;
            Vec3::new(2.2 * p.x, 1.0 * p.y, 0.45 * p.z) * bump
        })
        .collect();
    soup(positions, triangles)
}

/// Two icospheres sharing exactly one vertex position (one mesh, separate indices).
pub fn two_spheres_touching() -> SimplexSoup {
    let (mut pos, mut tris) = icosphere_mesh(1);
    let n = pos.len();
    // icosphere vertex 3 is (1, -t, 0)/‖·‖; mirror through it
    let contact = pos[3];
    let mirrored: Vec<Vec3> = pos.iter().map(|p| contact * 2.0 - *p).collect();
    pos.extend(mirrored);
    let extra: Vec<[usize; 3]> = tris.iter().map(|t| [t[0] + n, t[2] + n, t[1] + n]).collect();
    tris.extend(extra);
    soup(pos, tris)
}

/// `n` points distributed according to the soup's measure: triangle chosen
/// with probability proportional to its mass, then a density-weighted
/// point inside it (rejection against the affine density).
pub fn sample_points(soup: &SimplexSoup, n: usize, rng: &mut impl Rng) -> Vec<Vec3> {
    use crate::geometry::{integrate_affine_area, ConvexPolygon3};
    let masses: Vec<f64> = (0..soup.len())
        .map(|t| {
            let p = ConvexPolygon3::from_triangle(soup.triangle(t), t).expect("valid soup");
            integrate_affine_area(&p, soup.affine_density(t)).max(0.0)
        })
        .collect();
    let mut cumulative = Vec::with_capacity(masses.len());
    let mut acc = 0.0;
    for m in &masses {
        acc += m;
        cumulative.push(acc);
    }
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let r = rng.random_range(0.0..acc);
        let t = cumulative.partition_point(|&c| c <= r).min(masses.len() - 1);
        let tri = soup.triangle(t);
        let rho = soup.affine_density(t);
        let vmax = rho.values().iter().copied().fold(0.0, f64::max);
        let (mut u, mut v): (f64, f64) = (rng.random(), rng.random());
        if u + v > 1.0 {
            u = 1.0 - u;
            v = 1.0 - v;
        }
        let p = tri.a + (tri.b - tri.a) * u + (tri.c - tri.a) * v;
        if vmax > 0.0 && rng.random::<f64>() * vmax <= rho.eval(p) {
            out.push(p);
        }
    }
    out
}
