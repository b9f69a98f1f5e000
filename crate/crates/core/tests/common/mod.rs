//! Random instance generators shared by the integration tests.
#![allow(dead_code)]

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use sdot_core::geometry::Vec3;
use sdot_core::measures::{SimplexSoup, SiteSet};
use sdot_core::shapes;

pub struct Instance {
    pub label: String,
    pub soup: SimplexSoup,
    pub sites: SiteSet,
}

fn random_density(soup: &SimplexSoup, rng: &mut ChaCha8Rng) -> SimplexSoup {
    let d: Vec<f64> = (0..soup.positions().len()).map(|_| rng.random_range(0.5..2.0)).collect();
    soup.with_density(d).unwrap().normalize().unwrap()
}

/// Jittered grid on the unit square, sites slightly off the plane.
pub fn flat(rng: &mut ChaCha8Rng, n: usize) -> Instance {
    let cells = rng.random_range(3..8);
    let soup = shapes::grid_square(cells, 0.25, rng);
    let soup = random_density(&soup, rng);
    let pos = (0..n)
        .map(|_| Vec3::new(rng.random(), rng.random(), rng.random_range(-0.05..0.05)))
        .collect();
    Instance {
        label: format!("flat grid {cells}x{cells}, N={n}"),
        soup,
        sites: SiteSet::uniform(pos).unwrap(),
    }
}

/// Icosphere, torus or lumpy ellipsoid with surface samples plus Gaussian noise.
pub fn curved(rng: &mut ChaCha8Rng, n: usize, noise: f64) -> Instance {
    let (name, soup) = match rng.random_range(0..3) {
        0 => ("icosphere", shapes::icosphere(rng.random_range(1..3))),
        1 => ("torus", shapes::torus(1.0, 0.35, 18, 9)),
        _ => ("lumpy ellipsoid", shapes::lumpy_ellipsoid(2)),
    };
    let soup = random_density(&soup, rng);
    let sites = noisy_samples(&soup, n, noise, rng);
    Instance {
        label: format!("{name}, N={n}"),
        soup,
        sites,
    }
}

/// `n` samples of the soup measure displaced by `N(0, (noise · scale)²)` per axis.
pub fn noisy_samples(soup: &SimplexSoup, n: usize, noise: f64, rng: &mut ChaCha8Rng) -> SiteSet {
    let normal = Normal::new(0.0, noise * soup.scale()).unwrap();
    let pos = shapes::sample_points(soup, n, rng)
        .into_iter()
        .map(|p| p + Vec3::new(normal.sample(rng), normal.sample(rng), normal.sample(rng)))
        .collect();
    SiteSet::uniform(pos).unwrap()
}

pub fn random_weights(rng: &mut ChaCha8Rng, n: usize, amplitude: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-amplitude..amplitude)).collect()
}
