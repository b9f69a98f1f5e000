//! Damped Newton iteration for `G(ψ) = ν`.
//!
//! Each step solves `DG(ψ) v = ν − G(ψ)` on zero-mean vectors with a
//! projected, Jacobi-preconditioned conjugate gradient, then halves the step
//! until every cell keeps at least `ε₀` mass and the residual decreases by the
//! factor `1 − 2^{−(ℓ+1)}`.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Vec3;
use crate::laguerre::{DiagramBuilder, Pruning, RestrictedLaguerreDiagram};
use crate::measures::{joint_diameter, SimplexSoup, SiteSet, WeightVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum JitterPolicy {
    Off,
    /// Perturb the sites and restart when a genericity violation is hit.
    OnDegeneracy,
}

/// How `ε₀` is derived from the initial masses and the targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Epsilon0Rule {
    /// `½ · min(min_i G_i(ψ⁰), min_i ν_i)`
    Half,
    /// `min(min_i G_i(ψ⁰), min_i ν_i)`
    Strict,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub eta: f64,
    pub max_iterations: usize,
    pub max_line_search: u32,
    pub linear_tolerance: f64,
    pub jitter: JitterPolicy,
    pub max_restarts: usize,
    pub epsilon0: Epsilon0Rule,
    pub pruning: Pruning,
    pub seed: u64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            eta: 1e-6,
            max_iterations: 100,
            max_line_search: 40,
            linear_tolerance: 1e-10,
            jitter: JitterPolicy::OnDegeneracy,
            max_restarts: 3,
            epsilon0: Epsilon0Rule::Half,
            pruning: Pruning::Auto,
            seed: 0,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.eta > 0.0) || !(self.linear_tolerance > 0.0) || self.max_iterations == 0 || self.max_line_search == 0 {
            return Err(Error::Validation("solver parameters must be positive".into()));
        }
        Ok(())
    }
}

/// One accepted Newton step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    /// Damping exponent: the step taken is `2^{-ℓ} v`.
    pub exponent: u32,
    pub residual_before: f64,
    pub residual_after: f64,
    pub min_mass: f64,
    /// `residual_after / residual_before`
    pub decrease_factor: f64,
    pub cg_iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SolveReport {
    pub converged: bool,
    pub iterations: usize,
    /// Euclidean `‖G(ψ^k) − ν‖`, starting at `ψ⁰`.
    pub residuals: Vec<f64>,
    /// Max-norm residuals, diagnostics only.
    pub residuals_max_norm: Vec<f64>,
    pub steps: Vec<StepRecord>,
    pub epsilon0: f64,
    pub eta: f64,
    /// Largest observed `‖G(ψ^{k+1}) − ν‖ / ‖G(ψ^k) − ν‖`.
    pub worst_decrease_factor: f64,
    pub restarts: usize,
    pub warnings: Vec<String>,
    pub wall_time_s: f64,
}

/// Result of [`damped_newton`].
#[derive(Debug, Clone)]
pub struct SolveOutcome {
    pub weights: WeightVector,
    /// Sites actually used; differs from the input only after jitter restarts.
    pub sites: SiteSet,
    pub diagram: RestrictedLaguerreDiagram,
    pub report: SolveReport,
}

/// `DG(ψ)`: symmetric, off-diagonals non-negative, zero row sums.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseJacobian {
    n: usize,
    diag: Vec<f64>,
    /// `(i, j, H_ij)` with `i < j`, each unordered pair once.
    upper: Vec<(usize, usize, f64)>,
    rows: Vec<Vec<(usize, f64)>>,
}

impl SparseJacobian {
    pub fn from_offdiagonal(n: usize, entries: &[(usize, usize, f64)]) -> Self {
        let mut diag = vec![0.0; n];
        let mut rows = vec![Vec::new(); n];
        let mut upper = Vec::with_capacity(entries.len());
        for &(i, j, h) in entries {
            let (a, b) = (i.min(j), i.max(j));
            upper.push((a, b, h));
            rows[a].push((b, h));
            rows[b].push((a, h));
            diag[a] -= h;
            diag[b] -= h;
        }
        SparseJacobian { n, diag, upper, rows }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn diagonal(&self) -> &[f64] {
        &self.diag
    }

    pub fn off_diagonal(&self) -> &[(usize, usize, f64)] {
        &self.upper
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        if i == j {
            return self.diag[i];
        }
        self.rows[i].iter().filter(|(k, _)| *k == j).map(|(_, h)| h).sum()
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|i| self.diag[i] * x[i] + self.rows[i].iter().map(|&(j, h)| h * x[j]).sum::<f64>())
            .collect()
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut m = vec![vec![0.0; self.n]; self.n];
        for i in 0..self.n {
            m[i][i] = self.diag[i];
            for &(j, h) in &self.rows[i] {
                m[i][j] += h;
            }
        }
        m
    }
}

/// `G(ψ)` together with the diagram it was read from.
pub fn evaluate_g(builder: &DiagramBuilder<'_>, psi: &[f64]) -> Result<(Vec<f64>, RestrictedLaguerreDiagram)> {
    let d = builder.compute(psi)?;
    Ok((d.masses.clone(), d))
}

pub fn assemble_jacobian(diagram: &RestrictedLaguerreDiagram) -> SparseJacobian {
    SparseJacobian::from_offdiagonal(diagram.num_sites(), &diagram.interface_jacobian_entries())
}

const INIT_ROUNDS: usize = 10;

/// `ψ⁰_i = −d(y_i, K)²`, then bounded nudging of any cell that is non-empty
/// but carries no measurable mass.
pub fn init_weights(builder: &DiagramBuilder<'_>) -> Result<WeightVector> {
    let soup = builder.soup();
    let mut psi: WeightVector = builder
        .positions()
        .iter()
        .map(|y| {
            let d = soup.distance(*y);
            -d * d
        })
        .collect::<Vec<_>>()
        .into();
    let floor = 1e-12 * soup.total_mass();
    let nudge = 1e-6 * soup.scale() * soup.scale();
    for _ in 0..INIT_ROUNDS {
        let d = builder.compute(&psi)?;
        let starving: Vec<usize> = (0..psi.len()).filter(|&i| d.masses[i] <= floor).collect();
        if starving.is_empty() {
            return Ok(psi);
        }
        for i in starving {
            psi[i] -= nudge;
        }
    }
    let d = builder.compute(&psi)?;
    let starving: Vec<usize> = (0..psi.len()).filter(|&i| d.masses[i] <= floor).collect();
    if starving.is_empty() {
        Ok(psi)
    } else {
        Err(Error::Initialization { sites: starving })
    }
}

fn project_zero_mean(v: &mut [f64]) {
    if v.is_empty() {
        return;
    }
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    v.iter_mut().for_each(|x| *x -= mean);
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Solves `H v = r` with `Σ v_i = 0`, i.e. `v = H⁺ r` for connected adjacency.
///
/// Conjugate gradients on the positive semidefinite `−H`, with a Jacobi
/// preconditioner sandwiched between zero-mean projections.
pub fn solve_newton_system(h: &SparseJacobian, r: &[f64], tol: f64) -> Result<(Vec<f64>, usize)> {
    let n = h.dim();
    let mut b: Vec<f64> = r.iter().map(|x| -x).collect();
    project_zero_mean(&mut b);
    let b_norm = norm(&b);
    let mut x = vec![0.0; n];
    if b_norm == 0.0 {
        return Ok((x, 0));
    }
    let inv_diag: Vec<f64> = h
        .diagonal()
        .iter()
        .map(|d| if *d < 0.0 { -1.0 / d } else { 1.0 })
        .collect();
    let diag_max = h.diagonal().iter().fold(0.0f64, |m, d| m.max(-d));
    let apply_a = |v: &[f64]| -> Vec<f64> { h.mul_vec(v).into_iter().map(|y| -y).collect() };
    let precondition = |v: &[f64]| -> Vec<f64> {
        let mut z: Vec<f64> = v.iter().zip(&inv_diag).map(|(a, m)| a * m).collect();
        project_zero_mean(&mut z);
        z
    };

    let max_iter = 10 * n.max(1);
    let mut res = b.clone();
    let mut z = precondition(&res);
    let mut p = z.clone();
    let mut rz = dot(&res, &z);
    let mut rel = 1.0;
    for it in 1..=max_iter {
        let ap = apply_a(&p);
        let pap = dot(&p, &ap);
        if !(pap > f64::EPSILON * dot(&p, &p) * diag_max) {
            return Err(Error::SingularSystem {
                iterations: it,
                residual: rel,
            });
        }
        let alpha = rz / pap;
        x.iter_mut().zip(&p).for_each(|(xi, pi)| *xi += alpha * pi);
        res.iter_mut().zip(&ap).for_each(|(ri, ai)| *ri -= alpha * ai);
        project_zero_mean(&mut x);
        project_zero_mean(&mut res);
        rel = norm(&res) / b_norm;
        if rel <= tol {
            // confirm with the true residual; recursion drift can fool the test
            let true_res: Vec<f64> = apply_a(&x).iter().zip(&b).map(|(a, bi)| bi - a).collect();
            let true_rel = norm(&true_res) / b_norm;
            if true_rel <= tol {
                return Ok((x, it));
            }
            res = true_res;
            project_zero_mean(&mut res);
        }
        z = precondition(&res);
        let rz_new = dot(&res, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        p.iter_mut().zip(&z).for_each(|(pi, zi)| *pi = zi + beta * *pi);
    }
    Err(Error::SingularSystem {
        iterations: max_iter,
        residual: rel,
    })
}

fn residual(g: &[f64], nu: &[f64]) -> (Vec<f64>, f64, f64) {
    let d: Vec<f64> = g.iter().zip(nu).map(|(a, b)| a - b).collect();
    let e = norm(&d);
    let m = d.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    (d, e, m)
}

/// Solves `G(ψ) = ν`, where `ν` are the site masses scaled to `μ(K)`.
pub fn damped_newton(soup: &SimplexSoup, sites: &SiteSet, config: &SolverConfig) -> Result<SolveOutcome> {
    config.validate()?;
    if soup.is_empty() || !(soup.total_mass() > 0.0) {
        return Err(Error::Validation("soup carries no mass".into()));
    }
    let start = Instant::now();
    let mut warnings = Vec::new();
    let conn = soup.check_strong_connectedness();
    if !conn.connected {
        let w = format!(
            "support is not strongly connected ({} edge-connected components); the Newton system may be singular",
            conn.components.len()
        );
        log::warn!("{w}");
        warnings.push(w);
    }
    warnings.extend(soup.warnings().iter().cloned());

    let mut current = sites.clone();
    let mut restarts = 0;
    loop {
        match newton_loop(soup, &current, config, warnings.clone(), restarts, start) {
            Err(e) if matches!(e, Error::Degenerate { .. })
                && config.jitter == JitterPolicy::OnDegeneracy
                && restarts < config.max_restarts =>
            {
                restarts += 1;
                let w = format!("{e}; restarting with jittered sites (restart {restarts}, seed {})", config.seed);
                log::warn!("{w}");
                warnings.push(w);
                current = jitter_sites(sites, soup.scale(), config.seed, restarts)?;
            }
            other => return other,
        }
    }
}

/// Moves every site by a random vector of length `1e-6 · scale`.
pub fn jitter_sites(sites: &SiteSet, scale: f64, seed: u64, round: usize) -> Result<SiteSet> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(round as u64));
    let magnitude = 1e-6 * scale;
    let moved = sites
        .positions()
        .iter()
        .map(|p| {
            let dir = loop {
                let v = Vec3::new(
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                );
                let n2 = v.norm_squared();
                if n2 > 1e-4 && n2 <= 1.0 {
                    break v / n2.sqrt();
                }
            };
            *p + dir * magnitude
        })
        .collect();
    sites.with_positions(moved)
}

fn newton_loop(
    soup: &SimplexSoup,
    sites: &SiteSet,
    config: &SolverConfig,
    warnings: Vec<String>,
    restarts: usize,
    start: Instant,
) -> Result<SolveOutcome> {
    let builder = DiagramBuilder::new(soup, sites.positions()).with_pruning(config.pruning);
    let nu = sites.masses_scaled_to(soup.total_mass());
    let mut psi = init_weights(&builder)?;
    let (mut g, mut diagram) = evaluate_g(&builder, &psi)?;
    let min_g0 = g.iter().copied().fold(f64::INFINITY, f64::min);
    let min_nu = nu.iter().copied().fold(f64::INFINITY, f64::min);
    let epsilon0 = match config.epsilon0 {
        Epsilon0Rule::Half => 0.5 * min_g0.min(min_nu),
        Epsilon0Rule::Strict => min_g0.min(min_nu),
    };
    let (_, mut res, res_max) = residual(&g, &nu);
    let mut report = SolveReport {
        residuals: vec![res],
        residuals_max_norm: vec![res_max],
        epsilon0,
        eta: config.eta,
        restarts,
        warnings,
        ..Default::default()
    };
    log::info!("newton 0: residual {res:.3e}, eps0 {epsilon0:.3e}");

    let mut k = 0;
    while res >= config.eta {
        if k >= config.max_iterations {
            report.wall_time_s = start.elapsed().as_secs_f64();
            return Err(Error::NonConvergence {
                iterations: k,
                residual: res,
                report: Box::new(report),
            });
        }
        let h = assemble_jacobian(&diagram);
        let rhs: Vec<f64> = nu.iter().zip(&g).map(|(a, b)| a - b).collect();
        let (v, cg_iterations) = solve_newton_system(&h, &rhs, config.linear_tolerance)?;

        let mut accepted = None;
        for l in 0..=config.max_line_search {
            let step = 0.5f64.powi(l as i32);
            let trial = psi.step(&v, step);
            let (tg, td) = evaluate_g(&builder, &trial)?;
            let min_mass = tg.iter().copied().fold(f64::INFINITY, f64::min);
            let (_, tres, tmax) = residual(&tg, &nu);
            let factor = 1.0 - 0.5f64.powi(l as i32 + 1);
            if min_mass >= epsilon0 && tres <= factor * res {
                accepted = Some((l, trial, tg, td, tres, tmax, min_mass));
                break;
            }
        }
        let Some((l, trial, tg, td, tres, tmax, min_mass)) = accepted else {
            report.iterations = k;
            let nearest = diagram
                .interfaces
                .iter()
                .min_by(|a, b| a.projected_gap.total_cmp(&b.projected_gap))
                .map(|r| format!("nearest degenerate pair {:?} (projected gap {:.3e})", r.sites, r.projected_gap));
            report.warnings.extend(nearest);
            report.wall_time_s = start.elapsed().as_secs_f64();
            return Err(Error::LineSearch {
                iteration: k,
                max_exponent: config.max_line_search,
                report: Box::new(report),
            });
        };
        report.steps.push(StepRecord {
            exponent: l,
            residual_before: res,
            residual_after: tres,
            min_mass,
            decrease_factor: tres / res,
            cg_iterations,
        });
        report.worst_decrease_factor = report.worst_decrease_factor.max(tres / res);
        psi = trial;
        g = tg;
        diagram = td;
        res = tres;
        report.residuals.push(tres);
        report.residuals_max_norm.push(tmax);
        k += 1;
        log::info!("newton {k}: residual {res:.3e}, step 2^-{l}, cg {cg_iterations}");
    }
    report.converged = true;
    report.iterations = k;
    report.wall_time_s = start.elapsed().as_secs_f64();
    Ok(SolveOutcome {
        weights: psi,
        sites: sites.clone(),
        diagram,
        report,
    })
}

/// Independent check of a solution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub residual: f64,
    pub eta: f64,
    pub min_mass: f64,
    pub epsilon0: f64,
    pub weight_spread: f64,
    /// `diam(K ∪ Y)²`
    pub spread_bound: f64,
    pub residual_ok: bool,
    pub masses_ok: bool,
    pub spread_ok: bool,
    pub passed: bool,
}

/// Recomputes `G(ψ*)` from scratch and checks residual, mass floor and the
/// weight-spread bound.
pub fn verify_solution(
    soup: &SimplexSoup,
    sites: &SiteSet,
    psi: &[f64],
    eta: f64,
    epsilon0: f64,
) -> Result<Certificate> {
    let d = DiagramBuilder::new(soup, sites.positions()).compute(psi)?;
    let nu = sites.masses_scaled_to(soup.total_mass());
    let (_, res, _) = residual(&d.masses, &nu);
    let min_mass = d.masses.iter().copied().fold(f64::INFINITY, f64::min);
    let spread = WeightVector(psi.to_vec()).spread();
    let diam = joint_diameter(soup, sites);
    let bound = diam * diam;
    let residual_ok = res < eta;
    let masses_ok = min_mass >= epsilon0;
    let spread_ok = spread <= bound;
    Ok(Certificate {
        residual: res,
        eta,
        min_mass,
        epsilon0,
        weight_spread: spread,
        spread_bound: bound,
        residual_ok,
        masses_ok,
        spread_ok,
        passed: residual_ok && masses_ok && spread_ok,
    })
}
