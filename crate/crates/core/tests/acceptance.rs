//! Acceptance gate: one PASS/FAIL line per criterion, non-zero exit on any failure.

mod common;

use std::process::ExitCode;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sdot_core::apps::{quantize, register, remesh, RigidTransform};
use sdot_core::error::{DegeneracyKind, Error};
use sdot_core::geometry::Vec3;
use sdot_core::laguerre::DiagramBuilder;
use sdot_core::measures::{SimplexSoup, SiteSet};
use sdot_core::shapes;
use sdot_core::solver::{
    assemble_jacobian, damped_newton, init_weights, verify_solution, SolveOutcome, SolveReport, SolverConfig,
};
use sdot_core::transport::{lp_oracle, transport_cost};

// tolerances, pinned
const MASS_SUM_REL: f64 = 1e-9;
const SHIFT_ABS: f64 = 1e-12;
const ROW_SUM_REL: f64 = 1e-12;
const INVARIANT_BUDGET_S: f64 = 60.0;
const FD_REL: f64 = 1e-4;
const FD_FLOOR: f64 = 1e-6;
const FD_STEP_REL: f64 = 1e-5;
const ETA: f64 = 1e-6;
const MICRO_MAX_ITERS: usize = 10;
const MICRO_BUDGET_S: f64 = 1.0;
const SPHERE_MAX_ITERS: usize = 30;
const SPHERE_BUDGET_S: f64 = 120.0;
const ORACLE_COST_REL: f64 = 0.01;
const ORACLE_MASS_ABS: f64 = 1e-3;
const ORACLE_MAX_SAMPLES: usize = 2500;
const REGISTER_RMS_REL: f64 = 1e-3;
const REGISTER_MAX_OUTER: usize = 10;
const ORTHO_TOL: f64 = 1e-10;
// relative slack on "non-increasing" cost, absorbing summation order only
const COST_MONOTONE_SLACK: f64 = 1e-12;

type Check = Result<String, String>;

#[derive(Default)]
struct Ledger {
    reports: Vec<(String, SolveReport)>,
    spreads: Vec<(String, f64, f64)>,
    certificate_failures: Vec<String>,
}

impl Ledger {
    fn record(&mut self, label: &str, soup: &SimplexSoup, out: &SolveOutcome) {
        self.reports.push((label.to_string(), out.report.clone()));
        match verify_solution(soup, &out.sites, &out.weights, ETA, out.report.epsilon0) {
            Ok(c) => {
                self.spreads.push((label.to_string(), c.weight_spread, c.spread_bound));
                if !c.passed {
                    self.certificate_failures.push(format!("{label}: {c:?}"));
                }
            }
            Err(e) => self.certificate_failures.push(format!("{label}: {e}")),
        }
    }

    fn solve(&mut self, label: &str, soup: &SimplexSoup, sites: &SiteSet, cfg: &SolverConfig) -> Result<SolveOutcome, String> {
        let out = damped_newton(soup, sites, cfg).map_err(|e| format!("{label}: {e}"))?;
        self.record(label, soup, &out);
        Ok(out)
    }
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

/// Draws instances until one is free of genericity violations at `psi`.
fn generic_instance(
    seed: u64,
    make: impl Fn(&mut ChaCha8Rng) -> (common::Instance, Vec<f64>),
) -> (common::Instance, Vec<f64>, usize) {
    for attempt in 0..20 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed * 1000 + attempt);
        let (inst, psi) = make(&mut rng);
        let b = DiagramBuilder::new(&inst.soup, inst.sites.positions());
        match b.compute(&psi) {
            Err(Error::Degenerate { .. }) => continue,
            _ => return (inst, psi, attempt as usize),
        }
    }
    panic!("no generic instance for seed {seed}");
}

fn c1_invariants() -> Check {
    let start = Instant::now();
    let mut worst = (0.0f64, 0.0f64, 0.0f64);
    let mut redraws = 0;
    for k in 0..50u64 {
        let n = 2 + (k as usize * 7) % 49;
        let (inst, psi, r) = generic_instance(k, |rng| {
            let inst = if k % 2 == 0 { common::flat(rng, n) } else { common::curved(rng, n, 0.02) };
            let s2 = inst.soup.scale().powi(2);
            let psi = common::random_weights(rng, n, 0.01 * s2);
            (inst, psi)
        });
        redraws += r;
        let b = DiagramBuilder::new(&inst.soup, inst.sites.positions());
        let d = b.compute(&psi).map_err(|e| format!("{}: {e}", inst.label))?;
        let mu = inst.soup.total_mass();
        let sum_err = (d.total_mass() - mu).abs() / mu;
        let mut rng = ChaCha8Rng::seed_from_u64(k);
        let c = rng.random_range(-1.0..1.0) * inst.soup.scale().powi(2);
        let shifted: Vec<f64> = psi.iter().map(|p| p + c).collect();
        let ds = b.compute(&shifted).map_err(|e| format!("{}: {e}", inst.label))?;
        let shift_err = d.masses.iter().zip(&ds.masses).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        let h = assemble_jacobian(&d).to_dense();
        let scale = (0..n).map(|i| h[i][i].abs()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
        let mut row_err = 0.0f64;
        for i in 0..n {
            for j in 0..n {
                ensure(h[i][j] == h[j][i], || format!("{}: H not symmetric at ({i},{j})", inst.label))?;
                ensure(i == j || h[i][j] >= 0.0, || format!("{}: negative off-diagonal ({i},{j})", inst.label))?;
            }
            row_err = row_err.max(h[i].iter().sum::<f64>().abs() / scale);
        }
        ensure(sum_err <= MASS_SUM_REL, || format!("{}: mass sum error {sum_err:e}", inst.label))?;
        ensure(shift_err <= SHIFT_ABS, || format!("{}: shift error {shift_err:e}", inst.label))?;
        ensure(row_err <= ROW_SUM_REL, || format!("{}: row sum error {row_err:e}", inst.label))?;
        worst = (worst.0.max(sum_err), worst.1.max(shift_err), worst.2.max(row_err));
    }
    let t = start.elapsed().as_secs_f64();
    ensure(t < INVARIANT_BUDGET_S, || format!("took {t:.1}s"))?;
    Ok(format!(
        "50 instances in {t:.2}s; worst mass-sum {:.1e}, shift {:.1e}, row-sum {:.1e}; {redraws} non-generic redraws",
        worst.0, worst.1, worst.2
    ))
}

fn c2_finite_differences() -> Check {
    let mut worst = 0.0f64;
    let mut checked = 0;
    for k in 0..10u64 {
        let n = 5 + (k as usize * 3) % 16;
        let (inst, psi, _) = generic_instance(100 + k, |rng| {
            let inst = if k % 2 == 0 { common::flat(rng, n) } else { common::curved(rng, n, 0.02) };
            let psi = common::random_weights(rng, n, 0.005 * inst.soup.scale().powi(2));
            (inst, psi)
        });
        let b = DiagramBuilder::new(&inst.soup, inst.sites.positions());
        let h = assemble_jacobian(&b.compute(&psi).unwrap()).to_dense();
        let step = FD_STEP_REL * inst.soup.scale().powi(2);
        for j in 0..n {
            let mut plus = psi.clone();
            plus[j] += step;
            let mut minus = psi.clone();
            minus[j] -= step;
            let gp = b.compute(&plus).map_err(|e| format!("{}: {e}", inst.label))?.masses;
            let gm = b.compute(&minus).map_err(|e| format!("{}: {e}", inst.label))?.masses;
            for i in 0..n {
                let fd = (gp[i] - gm[i]) / (2.0 * step);
                let size = fd.abs().max(h[i][j].abs());
                if size > FD_FLOOR {
                    let rel = (fd - h[i][j]).abs() / size;
                    checked += 1;
                    ensure(rel <= FD_REL, || {
                        format!("{}: entry ({i},{j}) analytic {} vs fd {fd} (rel {rel:e})", inst.label, h[i][j])
                    })?;
                    worst = worst.max(rel);
                }
            }
        }
    }
    Ok(format!("10 instances, {checked} entries, worst relative error {worst:.2e}"))
}

fn square_two_sites(nu: [f64; 2]) -> SiteSet {
    SiteSet::new(vec![Vec3::new(0.25, 0.5, 0.0), Vec3::new(0.75, 0.5, 0.0)], nu.to_vec()).unwrap()
}

fn c3_micro_solve(ledger: &mut Ledger) -> Check {
    let sq = shapes::unit_square();
    let start = Instant::now();
    let out = ledger.solve("square micro-solve", &sq, &square_two_sites([0.6, 0.4]), &SolverConfig::default())?;
    let t = start.elapsed().as_secs_f64();
    let diff = out.weights[1] - out.weights[0];
    let res = *out.report.residuals.last().unwrap();
    ensure((diff - 0.1).abs() <= ETA, || format!("ψ2 − ψ1 = {diff}"))?;
    ensure(res < ETA, || format!("residual {res:e}"))?;
    ensure(out.report.iterations <= MICRO_MAX_ITERS, || format!("{} iterations", out.report.iterations))?;
    ensure(t < MICRO_BUDGET_S, || format!("took {t:.3}s"))?;
    Ok(format!(
        "ψ2 − ψ1 = {diff:.9}, residual {res:.1e}, {} iterations, {:.1} ms",
        out.report.iterations,
        t * 1e3
    ))
}

fn c5_sphere(ledger: &mut Ledger) -> Check {
    let soup = shapes::icosphere(3);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let sites = common::noisy_samples(&soup, 100, 0.01, &mut rng);
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let start = Instant::now();
    let out = pool.install(|| ledger.solve("icosphere N=100", &soup, &sites, &SolverConfig::default()))?;
    let t = start.elapsed().as_secs_f64();
    let it = out.report.iterations;
    ensure(out.report.converged, || "not converged".into())?;
    ensure(it <= SPHERE_MAX_ITERS, || format!("{it} iterations"))?;
    ensure(t < SPHERE_BUDGET_S, || format!("took {t:.1}s"))?;
    Ok(format!(
        "{} triangles, {it} iterations, residual {:.1e}, {t:.2}s single-threaded",
        soup.len(),
        out.report.residuals.last().unwrap()
    ))
}

fn c6_initialization() -> Check {
    let soup = shapes::icosphere(2);
    let mut min_mass = f64::INFINITY;
    for k in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(600 + k);
        let n = rng.random_range(10..80);
        let noise = rng.random_range(0.005..0.05);
        let sites = common::noisy_samples(&soup, n, noise, &mut rng);
        let b = DiagramBuilder::new(&soup, sites.positions());
        let psi = init_weights(&b).map_err(|e| format!("configuration {k}: {e}"))?;
        let d = b.compute(&psi).map_err(|e| format!("configuration {k}: {e}"))?;
        let m = d.masses.iter().copied().fold(f64::INFINITY, f64::min);
        ensure(m > 0.0, || format!("configuration {k}: empty cell"))?;
        min_mass = min_mass.min(m);
    }
    Ok(format!("20 configurations, smallest initial cell mass {min_mass:.2e}"))
}

fn bent_square() -> SimplexSoup {
    SimplexSoup::new(
        vec![
            Vec3::new(0.0, 0.0, 0.0),
            Vec3::new(1.0, 0.0, 0.0),
            Vec3::new(1.0, 1.0, 0.6),
            Vec3::new(0.0, 1.0, 0.0),
        ],
        vec![[0, 1, 2], [0, 2, 3]],
        None,
    )
    .unwrap()
    .normalize()
    .unwrap()
}

fn c7_oracle(ledger: &mut Ledger) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut random_sites = |n: usize, z: f64| {
        let pos: Vec<Vec3> = (0..n)
            .map(|_| Vec3::new(rng.random(), rng.random(), rng.random_range(-z..=z)))
            .collect();
        let nu: Vec<f64> = (0..n).map(|_| rng.random_range(0.5..1.5)).collect();
        SiteSet::new(pos, nu).unwrap()
    };
    let dense_square = shapes::unit_square().with_density(vec![1.0, 2.0, 0.5, 3.0]).unwrap().normalize().unwrap();
    let cases: Vec<(&str, SimplexSoup, SiteSet, usize)> = vec![
        ("square ν=(0.6,0.4)", shapes::unit_square(), square_two_sites([0.6, 0.4]), 35),
        ("affine density, N=3", dense_square, random_sites(3, 0.0), 35),
        ("bent square, N=4", bent_square(), random_sites(4, 0.3), 35),
        ("icosahedron, N=5", shapes::icosphere(0).normalize().unwrap(), {
            let mut r = ChaCha8Rng::seed_from_u64(70);
            common::noisy_samples(&shapes::icosphere(0), 5, 0.05, &mut r)
        }, 11),
        ("square off-plane, N=5", shapes::unit_square(), random_sites(5, 0.2), 35),
    ];
    let mut worst = (0.0f64, 0.0f64);
    for (label, soup, sites, sub) in cases {
        let out = ledger.solve(label, &soup, &sites, &SolverConfig::default())?;
        let cost = transport_cost(&out.diagram, &out.sites).total_cost;
        let nu = sites.masses_scaled_to(soup.total_mass());
        let o = lp_oracle(&soup, &sites, &nu, sub).map_err(|e| format!("{label}: {e}"))?;
        ensure(o.samples <= ORACLE_MAX_SAMPLES, || format!("{label}: {} samples", o.samples))?;
        let rel = (cost - o.cost).abs() / o.cost;
        let dm = o
            .masses
            .iter()
            .zip(&out.diagram.masses)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        ensure(rel <= ORACLE_COST_REL, || format!("{label}: cost {cost} vs oracle {} ({rel:.2e})", o.cost))?;
        ensure(dm <= ORACLE_MASS_ABS, || format!("{label}: mass deviation {dm:e}"))?;
        worst = (worst.0.max(rel), worst.1.max(dm));
    }
    Ok(format!("5 instances, worst cost gap {:.2e}, worst mass gap {:.1e}", worst.0, worst.1))
}

fn c9_applications(ledger: &mut Ledger) -> Check {
    // quantization
    let sphere = shapes::icosphere(3).normalize().unwrap();
    let q = quantize(&sphere, 100, 10, &SolverConfig::default()).map_err(|e| format!("quantize: {e}"))?;
    for (k, r) in q.history.iter().enumerate() {
        ensure(r.residual < ETA, || format!("quantize round {k}: residual {:e}", r.residual))?;
    }
    for (k, rep) in q.reports.iter().enumerate() {
        ledger.reports.push((format!("quantize solve {k}"), rep.clone()));
    }
    let mut costs: Vec<f64> = q.history.iter().map(|r| r.cost).collect();
    costs.push(q.final_cost);
    for w in costs.windows(2) {
        ensure(w[1] <= w[0] * (1.0 + COST_MONOTONE_SLACK), || format!("quantize cost rose: {costs:?}"))?;
    }

    // remeshing
    let r = remesh(&sphere, &SolverConfig::default()).map_err(|e| format!("remesh: {e}"))?;
    ledger.reports.push(("remesh".into(), r.report.clone()));
    let chi = r.mesh.euler_characteristic();
    let bad = r.mesh.unsupported_faces(&r.diagram);
    ensure(chi == 2, || format!("dual Euler characteristic {chi}"))?;
    ensure(bad.is_empty(), || format!("{} faces without adjacency support", bad.len()))?;

    // registration
    let shape = shapes::lumpy_ellipsoid(2).normalize().unwrap();
    let diam = shape.scale();
    let settled = quantize(&shape, 60, 100, &SolverConfig::default()).map_err(|e| format!("register setup: {e}"))?;
    let truth = settled.sites.positions().to_vec();
    let motion = RigidTransform::from_axis_angle(
        Vec3::new(0.3, 1.0, 0.2),
        25f64.to_radians(),
        Vec3::new(1.0, -0.5, 0.3).normalized().unwrap() * (0.08 * diam),
    )
    .unwrap();
    let cloud = settled.sites.with_positions(truth.iter().map(|p| motion.apply(*p)).collect()).unwrap();
    let reg = register(&shape, &cloud, REGISTER_MAX_OUTER, &SolverConfig::default()).map_err(|e| format!("register: {e}"))?;
    for (k, rep) in reg.reports.iter().enumerate() {
        ledger.reports.push((format!("register solve {k}"), rep.clone()));
    }
    let rms = (cloud
        .positions()
        .iter()
        .zip(&truth)
        .map(|(c, t)| reg.transform.apply(*c).distance_squared(*t))
        .sum::<f64>()
        / truth.len() as f64)
        .sqrt();
    let (ortho, det) = reg.transform.orthonormality();
    ensure(rms <= REGISTER_RMS_REL * diam, || {
        format!("registration RMS {rms:e} > {:e} after {} iterations", REGISTER_RMS_REL * diam, reg.iterations)
    })?;
    ensure(reg.iterations <= REGISTER_MAX_OUTER, || format!("{} outer iterations", reg.iterations))?;
    ensure(ortho <= ORTHO_TOL && (det - 1.0).abs() <= ORTHO_TOL, || format!("rotation off: {ortho:e}, det {det}"))?;
    ensure(reg.history.iter().all(|x| x.is_finite()), || "non-finite RMS history".into())?;

    Ok(format!(
        "quantize cost {:.5e} -> {:.5e} over {} rounds; remesh {} faces, chi = {chi}; register RMS {:.1e}·diam in {} iterations",
        costs[0],
        q.final_cost,
        q.history.len(),
        r.mesh.faces.len(),
        rms / diam,
        reg.iterations
    ))
}

fn c10_pathology(ledger: &mut Ledger) -> Check {
    let soup = shapes::vertex_contact_soup();
    let conn = soup.check_strong_connectedness();
    ensure(!conn.connected && conn.components.len() == 2, || format!("connectivity {conn:?}"))?;
    let mut notes = Vec::new();
    let configs = [
        ([Vec3::new(-0.6, 0.0, 0.0), Vec3::new(0.6, 0.0, 0.0)], [0.5, 0.5]),
        ([Vec3::new(-0.6, 0.0, 0.0), Vec3::new(0.6, 0.0, 0.0)], [0.6, 0.4]),
        ([Vec3::new(-0.8, 0.1, 0.0), Vec3::new(-0.3, -0.1, 0.0)], [0.5, 0.5]),
    ];
    for (k, (pos, nu)) in configs.iter().enumerate() {
        let sites = SiteSet::new(pos.to_vec(), nu.to_vec()).unwrap();
        let start = Instant::now();
        match damped_newton(&soup, &sites, &SolverConfig::default()) {
            Ok(out) => {
                ensure(out.report.warnings.iter().any(|w| w.contains("not strongly connected")), || {
                    format!("config {k}: converged without a connectedness warning")
                })?;
                ledger.record(&format!("vertex contact {k}"), &soup, &out);
                notes.push(format!("converged({})", out.report.iterations));
            }
            Err(e @ (Error::SingularSystem { .. } | Error::LineSearch { .. } | Error::NonConvergence { .. })) => {
                notes.push(short_kind(&e).to_string());
            }
            Err(e) => return Err(format!("config {k}: unexpected error {e}")),
        }
        ensure(start.elapsed().as_secs_f64() < 10.0, || format!("config {k} ran for too long"))?;
    }

    // remark example: cells 1 and 3 only meet when cell 2's bisector lands on theirs
    let sq = shapes::unit_square();
    let y = vec![Vec3::new(0.5, 0.0, 0.0), Vec3::new(-0.5, 0.0, 0.0), Vec3::new(1.0, 0.0, 0.0)];
    let b = DiagramBuilder::new(&sq, &y);
    let mut fired = Vec::new();
    for t in [-1.8, -1.6, -1.5, -1.4, -1.0, -0.5] {
        match b.compute(&[0.0, t, 0.0]) {
            Ok(_) => {}
            Err(Error::Degenerate { kind, sites, .. }) => {
                ensure(kind == DegeneracyKind::CollapsedCell && sites.contains(&0) && sites.contains(&2), || {
                    format!("t = {t}: flagged {kind:?} {sites:?}")
                })?;
                fired.push(t);
            }
            Err(e) => return Err(format!("t = {t}: {e}")),
        }
    }
    ensure(fired == vec![-1.5], || format!("detector fired at t = {fired:?}"))?;
    Ok(format!(
        "vertex contact: 2 components, solves [{}]; remark pair (1,3) flagged only at t = -1.5",
        notes.join(", ")
    ))
}

fn short_kind(e: &Error) -> &'static str {
    match e {
        Error::SingularSystem { .. } => "singular system",
        Error::LineSearch { .. } => "line-search failure",
        Error::NonConvergence { .. } => "non-convergence",
        _ => "other",
    }
}

fn c4_line_search(ledger: &Ledger) -> Check {
    let mut steps = 0;
    let mut worst = 0.0f64;
    for (label, rep) in &ledger.reports {
        for (k, s) in rep.steps.iter().enumerate() {
            let bound = 1.0 - 0.5f64.powi(s.exponent as i32 + 1);
            ensure(s.residual_after <= bound * s.residual_before, || format!("{label}, step {k}: decrease violated"))?;
            ensure(s.min_mass >= rep.epsilon0, || format!("{label}, step {k}: mass {} < ε₀ {}", s.min_mass, rep.epsilon0))?;
            steps += 1;
        }
        ensure(rep.residuals.windows(2).all(|w| w[1] < w[0]), || format!("{label}: residuals not decreasing"))?;
        worst = worst.max(rep.worst_decrease_factor);
    }
    Ok(format!("{} solves, {steps} accepted steps, worst decrease factor {worst:.3}", ledger.reports.len()))
}

fn c8_spread(ledger: &Ledger) -> Check {
    ensure(ledger.certificate_failures.is_empty(), || ledger.certificate_failures.join("; "))?;
    let mut ratio = 0.0f64;
    for (label, spread, bound) in &ledger.spreads {
        ensure(spread <= bound, || format!("{label}: spread {spread} > {bound}"))?;
        ratio = ratio.max(spread / bound);
    }
    Ok(format!("{} converged solutions, largest spread / diam² = {ratio:.3}", ledger.spreads.len()))
}

fn main() -> ExitCode {
    let mut ledger = Ledger::default();
    let mut results: Vec<(usize, &str, Check, f64)> = Vec::new();
    let mut run = |id, name, f: &mut dyn FnMut(&mut Ledger) -> Check, ledger: &mut Ledger| {
        let start = Instant::now();
        let r = f(ledger);
        results.push((id, name, r, start.elapsed().as_secs_f64()));
    };
    run(1, "invariant suite", &mut |_| c1_invariants(), &mut ledger);
    run(2, "jacobian vs finite differences", &mut |_| c2_finite_differences(), &mut ledger);
    run(3, "analytic micro-solve", &mut c3_micro_solve, &mut ledger);
    run(5, "desk-scale convergence", &mut c5_sphere, &mut ledger);
    run(6, "initialization guarantee", &mut |_| c6_initialization(), &mut ledger);
    run(7, "discrete oracle equivalence", &mut c7_oracle, &mut ledger);
    run(9, "applications", &mut c9_applications, &mut ledger);
    run(10, "pathology detection", &mut c10_pathology, &mut ledger);
    run(4, "line-search contract", &mut |l| c4_line_search(l), &mut ledger);
    run(8, "weight-spread bound", &mut |l| c8_spread(l), &mut ledger);
    results.sort_by_key(|r| r.0);

    let mut failed = 0;
    for (id, name, r, t) in &results {
        match r {
            Ok(detail) => println!("PASS [{id:2}] {name} ({t:.2}s): {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL [{id:2}] {name} ({t:.2}s): {why}");
            }
        }
    }
    println!("{} of {} criteria passed", results.len() - failed, results.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
