//! The transport map `T_ψ`, transport costs, and a brute-force discrete
//! oracle for small instances.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Vec3;
use crate::laguerre::{power, RestrictedLaguerreDiagram};
use crate::measures::{SimplexSoup, SiteSet};

/// `argmin_i ‖x − y_i‖² + ψ_i`, ties going to the lowest index.
pub fn transport_map_eval(x: Vec3, positions: &[Vec3], psi: &[f64]) -> usize {
    let mut best = (0, f64::INFINITY);
    for (i, (y, w)) in positions.iter().zip(psi).enumerate() {
        let p = power(x, *y, *w);
        if p < best.1 {
            best = (i, p);
        }
    }
    best.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransportSummary {
    pub masses: Vec<f64>,
    /// `∫_{Lag_i} ‖x − y_i‖² ρ`
    pub costs: Vec<f64>,
    pub total_cost: f64,
    /// `‖G(ψ) − ν‖` with `ν` scaled to the diagram's total mass.
    pub residual: f64,
}

pub fn transport_cost(diagram: &RestrictedLaguerreDiagram, sites: &SiteSet) -> TransportSummary {
    let nu = sites.masses_scaled_to(diagram.total_mass());
    let residual = diagram
        .masses
        .iter()
        .zip(&nu)
        .map(|(g, n)| (g - n) * (g - n))
        .sum::<f64>()
        .sqrt();
    TransportSummary {
        masses: diagram.masses.clone(),
        costs: diagram.costs.clone(),
        total_cost: diagram.costs.iter().sum(),
        residual,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleSolution {
    pub cost: f64,
    /// Mass received by each site.
    pub masses: Vec<f64>,
    pub samples: usize,
}

pub const ORACLE_MAX_SITES: usize = 10;
pub const ORACLE_MAX_SAMPLES: usize = 5000;

/// Point masses approximating the soup measure: each triangle is cut into
/// `n²` congruent sub-triangles and each carries `ρ(centroid) · area / n²`,
/// which is exact in total for affine densities.
pub fn discretize(soup: &SimplexSoup, n: usize) -> Vec<(Vec3, f64)> {
    let mut out = Vec::with_capacity(soup.len() * n * n);
    let nf = n as f64;
    for t in 0..soup.len() {
        let tri = soup.triangle(t);
        let rho = soup.affine_density(t);
        let sub_area = tri.area() / (nf * nf);
        let at = |u: f64, v: f64| tri.a + (tri.b - tri.a) * (u / nf) + (tri.c - tri.a) * (v / nf);
        for i in 0..n {
            for j in 0..n - i {
                let (fi, fj) = (i as f64, j as f64);
                let p = at(fi + 1.0 / 3.0, fj + 1.0 / 3.0);
                out.push((p, rho.eval(p).max(0.0) * sub_area));
                if i + j + 1 < n {
                    let q = at(fi + 2.0 / 3.0, fj + 2.0 / 3.0);
                    out.push((q, rho.eval(q).max(0.0) * sub_area));
                }
            }
        }
    }
    out
}

/// Exact discrete optimal transport from [`discretize`]`(soup, subdivisions)`
/// to the sites with masses `nu` (which must sum to `μ(K)`).
///
/// Successive shortest paths: samples are inserted one at a time and their
/// supply is routed along shortest residual paths. Paths alternate between
/// sinks, so Bellman-Ford runs on a compressed graph over the `N` sites only.
pub fn lp_oracle(soup: &SimplexSoup, sites: &SiteSet, nu: &[f64], subdivisions: usize) -> Result<OracleSolution> {
    let n = sites.len();
    if n > ORACLE_MAX_SITES {
        return Err(Error::Validation(format!("oracle supports at most {ORACLE_MAX_SITES} sites")));
    }
    if nu.len() != n {
        return Err(Error::Validation(format!("{} target masses for {n} sites", nu.len())));
    }
    if subdivisions == 0 {
        return Err(Error::Validation("need at least one subdivision".into()));
    }
    let samples = discretize(soup, subdivisions);
    if samples.len() > ORACLE_MAX_SAMPLES {
        return Err(Error::Validation(format!(
            "{} samples exceed the oracle limit of {ORACLE_MAX_SAMPLES}",
            samples.len()
        )));
    }
    let supply: f64 = samples.iter().map(|s| s.1).sum();
    let demand: f64 = nu.iter().sum();
    if (supply - demand).abs() > 1e-9 * supply.max(demand) {
        return Err(Error::Validation(format!(
            "target mass {demand} differs from source mass {supply}"
        )));
    }
    let ys = sites.positions();
    let cost = |s: usize, j: usize| samples[s].0.distance_squared(ys[j]);
    let tiny = 1e-15 * supply;
    let max_cost = (0..samples.len())
        .flat_map(|s| (0..n).map(move |j| (s, j)))
        .map(|(s, j)| cost(s, j))
        .fold(0.0, f64::max);
    // relaxations must beat rounding, or zero-cost cycles can spin
    let relax_tol = 1e-12 * max_cost.max(f64::MIN_POSITIVE);

    let mut capacity: Vec<f64> = nu.iter().map(|m| m * supply / demand).collect();
    // flows[s] = [(sink, amount)]; sparse since a basic solution has ≤ S + N − 1 arcs
    let mut flows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); samples.len()];
    let mut senders: Vec<Vec<usize>> = vec![Vec::new(); n];

    for s in 0..samples.len() {
        let mut left = samples[s].1;
        while left > tiny {
            // compressed arc j → k: move one sample s' off j onto k
            let mut arc = vec![vec![(f64::INFINITY, usize::MAX); n]; n];
            for j in 0..n {
                for &sp in &senders[j] {
                    let base = cost(sp, j);
                    for k in 0..n {
                        if k != j {
                            let c = cost(sp, k) - base;
                            if c < arc[j][k].0 {
                                arc[j][k] = (c, sp);
                            }
                        }
                    }
                }
            }
            let mut dist: Vec<f64> = (0..n).map(|j| cost(s, j)).collect();
            let mut pred = vec![usize::MAX; n];
            for _ in 0..n {
                let mut changed = false;
                for j in 0..n {
                    for k in 0..n {
                        let (c, _) = arc[j][k];
                        if c.is_finite() && dist[j] + c < dist[k] - relax_tol {
                            dist[k] = dist[j] + c;
                            pred[k] = j;
                            changed = true;
                        }
                    }
                }
                if !changed {
                    break;
                }
            }
            let Some(target) = (0..n)
                .filter(|&k| capacity[k] > 0.0)
                .min_by(|&a, &b| dist[a].total_cmp(&dist[b]).then(a.cmp(&b)))
            else {
                // rounding leftovers only
                if left <= 1e-9 * supply {
                    break;
                }
                return Err(Error::Validation("oracle ran out of target capacity".into()));
            };
            // walk back to the sink fed directly by s
            let mut path = vec![target];
            let mut amount = left.min(capacity[target]);
            let mut k = target;
            while pred[k] != usize::MAX {
                let j = pred[k];
                let sp = arc[j][k].1;
                amount = amount.min(flow_of(&flows[sp], j));
                path.push(j);
                k = j;
                if path.len() > n {
                    return Err(Error::Geometry("oracle found a negative cycle".into()));
                }
            }
            path.reverse();
            add_flow(&mut flows, &mut senders, s, path[0], amount, tiny);
            for w in path.windows(2) {
                let sp = arc[w[0]][w[1]].1;
                add_flow(&mut flows, &mut senders, sp, w[0], -amount, tiny);
                add_flow(&mut flows, &mut senders, sp, w[1], amount, tiny);
            }
            capacity[target] -= amount;
            left -= amount;
        }
    }

    let mut masses = vec![0.0; n];
    let mut total = 0.0;
    for (s, f) in flows.iter().enumerate() {
        for &(j, a) in f {
            masses[j] += a;
            total += a * cost(s, j);
        }
    }
    Ok(OracleSolution {
        cost: total,
        masses,
        samples: samples.len(),
    })
}

fn flow_of(f: &[(usize, f64)], j: usize) -> f64 {
    f.iter().find(|e| e.0 == j).map_or(0.0, |e| e.1)
}

fn add_flow(flows: &mut [Vec<(usize, f64)>], senders: &mut [Vec<usize>], s: usize, j: usize, delta: f64, tiny: f64) {
    let f = &mut flows[s];
    match f.iter().position(|e| e.0 == j) {
        Some(p) => {
            f[p].1 += delta;
            if f[p].1 <= tiny {
                f.swap_remove(p);
                senders[j].retain(|&x| x != s);
            }
        }
        None if delta > tiny => {
            f.push((j, delta));
            senders[j].push(s);
        }
        None => {}
    }
}
