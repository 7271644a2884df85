//! Acceptance criteria. Each test prints one `criterion N: PASS|FAIL` line to
//! stderr (bypassing output capture) and then asserts. The tests share a
//! lock so timing measurements never overlap with other criteria.

use std::io::Write;
use std::sync::{Arc, Mutex, MutexGuard};

use rand::{Rng, SeedableRng};

use ptproc::ais::{ais_run, AisConfig};
use ptproc::cftp::{cftp_sample, run_sandwich_checked, CftpConfig, DominatingTrajectory};
use ptproc::geometry::{close_pair_count_grid, close_pair_count_naive, uniform_point};
use ptproc::harness::{
    benchmark, brute_force_expectation, estimate, presets, replicate, Budget, Case, EngineSettings, OracleSpec,
};
use ptproc::mh::{log_birth_ratio, log_death_ratio};
use ptproc::models::{
    k_boundary_count, k_papangelou_origin, InhomStrauss, InhomStraussParams, Model, PointCount, Strauss,
    StraussParams,
};
use ptproc::rng::SimRng;
use ptproc::{EngineKind, EstimateReport, Point, PointPattern, Window};

static SERIAL: Mutex<()> = Mutex::new(());

fn serial() -> MutexGuard<'static, ()> {
    SERIAL.lock().unwrap_or_else(|e| e.into_inner())
}

fn verdict(n: u32, ok: bool, detail: &str) {
    let line = format!("criterion {n}: {} ({detail})\n", if ok { "PASS" } else { "FAIL" });
    let _ = std::io::stderr().write_all(line.as_bytes());
    assert!(ok, "criterion {n} failed: {detail}");
}

fn pool<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap().install(f)
}

fn unit() -> Arc<Window> {
    Arc::new(Window::unit_square_centered())
}

fn tiny() -> Arc<Window> {
    Arc::new(Window::square(0.0, 0.2).unwrap())
}

fn strauss(window: Arc<Window>, beta: f64, gamma: f64) -> Arc<dyn Model> {
    Arc::new(Strauss::new(StraussParams::new(beta, gamma, 0.1).unwrap(), window).unwrap())
}

fn inhom(beta: f64, gamma: f64) -> Arc<dyn Model> {
    Arc::new(InhomStrauss::new(InhomStraussParams::new(beta, gamma, 0.1, 1.0).unwrap(), unit()).unwrap())
}

/// Series oracle on `[0, 0.2]²`, `β = 50`, `γ = 0.5`, `r = 0.1`, `K = n`,
/// `n_max = 12`, 10⁶ draws, seed 0.
const TINY_MU: f64 = 1.4134441374220066;
const TINY_MC_SE: f64 = 1.96e-4;

const TARGET: f64 = 0.05;

#[test]
fn criterion_1_poisson_reduction() {
    let _g = serial();
    let settings = EngineSettings::default();
    let mut failures = Vec::new();
    for beta in [50.0, 100.0] {
        let m = strauss(unit(), beta, 1.0);
        for (i, engine) in EngineKind::ALL.into_iter().enumerate() {
            let r = estimate(engine, m.as_ref(), &PointCount, TARGET, &settings, 100 + i as u64).unwrap().report;
            if (r.mu_hat - beta).abs() > 3.0 * r.se {
                failures.push(format!("{engine} β={beta}: {:.3} ± {:.3}", r.mu_hat, r.se));
            }
        }
        // Exact draws at γ = 1 are Poisson(β): mean and variance both β.
        let reps = 1000;
        let counts: Vec<f64> = (0..reps)
            .map(|i| {
                let mut rng = SimRng::seed_from_u64(10_000 + i);
                cftp_sample(m.as_ref(), &CftpConfig::default(), &mut rng).unwrap().pattern.len() as f64
            })
            .collect();
        let n = reps as f64;
        let mean = counts.iter().sum::<f64>() / n;
        let var = counts.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / (n - 1.0);
        let se_mean = (beta / n).sqrt();
        // Var(s²) = (μ₄ − σ⁴)/R for large R; μ₄ = β + 3β² for Poisson.
        let se_var = ((beta + 2.0 * beta * beta) / n).sqrt();
        if (mean - beta).abs() > 3.0 * se_mean || (var - beta).abs() > 3.0 * se_var {
            failures.push(format!("CFTP dispersion β={beta}: mean {mean:.3}, var {var:.3}"));
        }
    }
    verdict(1, failures.is_empty(), &format_failures(&failures, "all engines within 3 s.e. of β; CFTP equidispersed"));
}

fn format_failures(failures: &[String], ok: &str) -> String {
    if failures.is_empty() { ok.to_string() } else { failures.join("; ") }
}

#[test]
fn criterion_2_oracle_equivalence() {
    let _g = serial();
    let m = strauss(tiny(), 50.0, 0.5);
    let oracle = brute_force_expectation(m.as_ref(), &PointCount, &OracleSpec::default()).unwrap();
    let mut failures = Vec::new();
    if oracle.tail_bound >= 1e-6 {
        failures.push(format!("tail bound {:e}", oracle.tail_bound));
    }
    if (oracle.mu - TINY_MU).abs() > 1e-12 {
        failures.push(format!("oracle no longer reproduces the frozen value: {}", oracle.mu));
    }
    let mut detail = Vec::new();
    for (i, engine) in EngineKind::ALL.into_iter().enumerate() {
        let r = estimate(engine, m.as_ref(), &PointCount, 0.01, &EngineSettings::default(), 200 + i as u64)
            .unwrap()
            .report;
        let tol = 3.0 * (r.se * r.se + TINY_MC_SE * TINY_MC_SE).sqrt();
        detail.push(format!("{engine} {:.4}±{:.4}", r.mu_hat, r.se));
        if (r.mu_hat - TINY_MU).abs() > tol {
            failures.push(format!("{engine}: {:.5} vs {TINY_MU:.5} (tol {tol:.5})", r.mu_hat));
        }
    }
    let ok = format!("oracle {TINY_MU:.5}; {}", detail.join(", "));
    verdict(2, failures.is_empty(), &format_failures(&failures, &ok));
}

/// `(engine, γ, μ, s.e.)` for the stationary Strauss, `β = 50`.
const STATIONARY_PUBLISHED: [(EngineKind, f64, f64, f64); 9] = [
    (EngineKind::Mh, 0.4, 25.553, 1.273),
    (EngineKind::Cftp, 0.4, 28.049, 1.396),
    (EngineKind::Ais, 0.4, 28.933, 1.422),
    (EngineKind::Mh, 0.6, 30.456, 1.508),
    (EngineKind::Cftp, 0.6, 31.517, 1.565),
    (EngineKind::Ais, 0.6, 30.024, 1.461),
    (EngineKind::Mh, 0.8, 38.499, 1.896),
    (EngineKind::Cftp, 0.8, 37.175, 1.804),
    (EngineKind::Ais, 0.8, 39.256, 1.416),
];

const STATIONARY_SEED: u64 = 31;

fn stationary_grid() -> Vec<EstimateReport> {
    STATIONARY_PUBLISHED
        .iter()
        .enumerate()
        .map(|(i, &(engine, gamma, _, _))| {
            let m = strauss(unit(), 50.0, gamma);
            let k = k_papangelou_origin(m.clone()).unwrap();
            estimate(engine, m.as_ref(), &k, TARGET, &EngineSettings::default(), STATIONARY_SEED + i as u64)
                .unwrap()
                .report
        })
        .collect()
}

fn compare_published(
    published: &[(EngineKind, f64, f64, f64)],
    reports: &[EstimateReport],
) -> (Vec<String>, Vec<String>) {
    let mut failures = Vec::new();
    let mut detail = Vec::new();
    for (&(engine, gamma, mu, se), r) in published.iter().zip(reports) {
        let tol = 3.0 * (r.se * r.se + se * se).sqrt();
        detail.push(format!("{engine} γ={gamma}: {:.3}±{:.3}", r.mu_hat, r.se));
        if (r.mu_hat - mu).abs() > tol {
            failures.push(format!("{engine} γ={gamma}: {:.3} vs {mu} (tol {tol:.3})", r.mu_hat));
        }
    }
    (failures, detail)
}

#[test]
fn criterion_3_stationary_table() {
    let _g = serial();
    let reports = stationary_grid();
    let (failures, detail) = compare_published(&STATIONARY_PUBLISHED, &reports);
    verdict(3, failures.is_empty(), &format_failures(&failures, &detail.join(", ")));
}

#[test]
fn criterion_4_inhomogeneous_table() {
    let _g = serial();
    let published = [
        (EngineKind::Mh, 0.4, 0.608, 0.030),
        (EngineKind::Cftp, 0.4, 0.608, 0.030),
        (EngineKind::Ais, 0.4, 0.608, 0.030),
        (EngineKind::Mh, 0.8, 0.686, 0.033),
        (EngineKind::Cftp, 0.8, 0.686, 0.033),
        (EngineKind::Ais, 0.8, 0.686, 0.033),
    ];
    let k = k_boundary_count(0.49);
    let reports: Vec<EstimateReport> = published
        .iter()
        .enumerate()
        .map(|(i, &(engine, gamma, _, _))| {
            estimate(engine, inhom(50.0, gamma).as_ref(), &k, TARGET, &EngineSettings::default(), 400 + i as u64)
                .unwrap()
                .report
        })
        .collect();
    let (failures, detail) = compare_published(&published, &reports);
    verdict(4, failures.is_empty(), &format_failures(&failures, &detail.join(", ")));
}

#[test]
fn criterion_5_time_variance_ordering() {
    let _g = serial();
    // Median over repeated single-threaded runs; one run lasts milliseconds.
    const REPEATS: usize = 5;
    let cases: Vec<Case> = vec![presets::stationary(50.0, 0.8), presets::inhomogeneous(50.0, 0.8)];
    let mut failures = Vec::new();
    let mut detail = Vec::new();
    for (ci, case) in cases.iter().enumerate() {
        let mut tv: Vec<Vec<f64>> = vec![Vec::new(); 3];
        for rep in 0..REPEATS {
            let rows = pool(1, || {
                benchmark(std::slice::from_ref(case), TARGET, &EngineSettings::default(), 500 + (ci * REPEATS + rep) as u64)
            })
            .unwrap();
            for row in rows {
                let slot = EngineKind::ALL.iter().position(|&e| e == row.engine).unwrap();
                tv[slot].push(row.time_variance);
            }
        }
        let med: Vec<f64> = tv.iter_mut().map(|v| median(v)).collect();
        let (mh, cftp, ais) = (med[0], med[1], med[2]);
        let label = if ci == 0 { "stationary" } else { "inhomogeneous" };
        detail.push(format!(
            "{label}: TV AIS {ais:.3e}, MH {mh:.3e}, CFTP {cftp:.3e}, MH/AIS {:.2}, CFTP/AIS {:.2}",
            mh / ais,
            cftp / ais
        ));
        if !(ais < mh && mh < cftp && mh / ais > 5.0) {
            failures.push(detail.last().unwrap().clone());
        }
    }
    verdict(5, failures.is_empty(), &detail.join("; "));
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) }
}

#[test]
fn criterion_6_ais_calibration_and_coverage() {
    let _g = serial();
    const ITERATIONS: u64 = 20;
    let m = strauss(tiny(), 50.0, 0.5);
    let s = replicate(
        EngineKind::Ais,
        m.as_ref(),
        &PointCount,
        Budget::Fixed(ITERATIONS),
        500,
        TINY_MU,
        &EngineSettings::default(),
        600,
    )
    .unwrap();
    let calibration_ok = (s.calibration_ratio - 1.0).abs() <= 0.25;
    let coverage_ok = (0.91..=0.99).contains(&s.coverage);
    verdict(
        6,
        calibration_ok && coverage_ok,
        &format!(
            "empirical var {:.3e} vs mean reported {:.3e} (ratio {:.3}), coverage {:.3}",
            s.empirical_variance, s.mean_reported_variance, s.calibration_ratio, s.coverage
        ),
    );
}

/// `h ↦ c·h`; every engine quantity that is a ratio of weights is unchanged.
#[derive(Debug)]
struct Scaled {
    inner: Arc<dyn Model>,
    log_c: f64,
}

impl Model for Scaled {
    fn window(&self) -> &Arc<Window> {
        self.inner.window()
    }
    fn log_h(&self, x: &PointPattern) -> f64 {
        self.inner.log_h(x) + self.log_c
    }
    fn log_papangelou(&self, x: &PointPattern, xi: &[f64]) -> f64 {
        self.inner.log_papangelou(x, xi)
    }
    fn log_phi(&self, xi: &[f64]) -> f64 {
        self.inner.log_phi(xi)
    }
    fn phi_integral(&self) -> f64 {
        self.inner.phi_integral()
    }
    fn sample_phi_proposal(&self, rng: &mut dyn rand::RngCore) -> Point {
        self.inner.sample_phi_proposal(rng)
    }
    fn interaction_range(&self) -> f64 {
        self.inner.interaction_range()
    }
}

fn random_pattern(w: &Arc<Window>, n: usize, rng: &mut SimRng) -> PointPattern {
    let mut x = PointPattern::with_capacity(w.clone(), n);
    for _ in 0..n {
        x.push(&uniform_point(w, rng));
    }
    x
}

fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1e-300)
}

#[test]
fn criterion_7_invariant_suites() {
    let _g = serial();
    const CASES: usize = 1000;
    let mut failures: Vec<String> = Vec::new();
    let mut rng = SimRng::seed_from_u64(7007);

    // Birth and death ratios are exact reciprocals.
    let mut bad = 0;
    for _ in 0..CASES {
        let m = strauss(unit(), rng.random_range(1.0..150.0), rng.random_range(0.05..1.0));
        let n = rng.random_range(0..120);
        let x = random_pattern(m.window(), n, &mut rng);
        let xi = uniform_point(m.window(), &mut rng);
        let p = rng.random_range(0.05..0.95);
        let s = log_birth_ratio(m.as_ref(), &x, &xi, p) + log_death_ratio(m.as_ref(), &x, &xi, p);
        if s.abs() > 1e-12 {
            bad += 1;
        }
    }
    if bad > 0 {
        failures.push(format!("reciprocity: {bad}"));
    }

    // Sandwich holds at every event; coalesced output is stable under doubling.
    let mut bad = 0;
    for i in 0..CASES {
        let mut rng = SimRng::seed_from_u64(70_000 + i as u64);
        let m = strauss(unit(), rng.random_range(10.0..60.0), rng.random_range(0.2..1.0));
        let mut traj = DominatingTrajectory::from_equilibrium(m.as_ref(), 1.0, &mut rng);
        let first = loop {
            match run_sandwich_checked(m.as_ref(), &traj) {
                Ok(s) if s.coalesced() => break Some(s.lower),
                Ok(_) => traj.extend_backward(m.as_ref(), &mut rng),
                Err(_) => break None,
            }
        };
        traj.extend_backward(m.as_ref(), &mut rng);
        let again = run_sandwich_checked(m.as_ref(), &traj).ok().filter(|s| s.coalesced()).map(|s| s.lower);
        match (first, again) {
            (Some(a), Some(b)) if sorted(&a) == sorted(&b) => {}
            _ => bad += 1,
        }
    }
    if bad > 0 {
        failures.push(format!("sandwich/funnelling: {bad}"));
    }

    // AIS estimates are invariant to rescaling h.
    let mut bad = 0;
    let cfg = AisConfig { n1: 40, n_t: 20, max_steps: 3, stopping: false, ..AisConfig::default() };
    for i in 0..CASES {
        let m = strauss(unit(), rng.random_range(5.0..80.0), rng.random_range(0.1..1.0));
        let scaled = Scaled { inner: m.clone(), log_c: rng.random_range(-700.0..700.0) };
        let a = ais_run(m.as_ref(), &PointCount, &cfg, i as u64).unwrap().state;
        let b = ais_run(&scaled, &PointCount, &cfg, i as u64).unwrap().state;
        if !(rel_close(a.mu_hat(), b.mu_hat(), 1e-9)
            && rel_close(a.rho_hat(), b.rho_hat(), 1e-9)
            && rel_close(a.sigma2_hat(), b.sigma2_hat(), 1e-8))
        {
            bad += 1;
        }
    }
    if bad > 0 {
        failures.push(format!("AIS scale invariance: {bad}"));
    }

    // Grid and naive pair counts agree.
    let mut bad = 0;
    for _ in 0..CASES {
        let lo = rng.random_range(-2.0..0.0);
        let w = Arc::new(Window::square(lo, lo + rng.random_range(0.1..3.0)).unwrap());
        let x = random_pattern(&w, rng.random_range(0..400), &mut rng);
        let r = rng.random_range(0.0..0.5);
        if close_pair_count_grid(&x, r) != close_pair_count_naive(&x, r) {
            bad += 1;
        }
    }
    if bad > 0 {
        failures.push(format!("pair counting: {bad}"));
    }

    // log λ(x, ξ) = log h(x ∪ ξ) − log h(x).
    let mut bad = 0;
    for i in 0..CASES {
        let (beta, gamma) = (rng.random_range(1.0..200.0), rng.random_range(0.01..1.0));
        let m = if i % 2 == 0 { strauss(unit(), beta, gamma) } else { inhom(beta, gamma) };
        let x = random_pattern(m.window(), rng.random_range(0..150), &mut rng);
        let xi = uniform_point(m.window(), &mut rng);
        let direct = m.log_h(&x.with_point(&xi)) - m.log_h(&x);
        let lp = m.log_papangelou(&x, &xi);
        if (lp - direct).abs() > 1e-9 * (1.0 + m.log_h(&x).abs()) {
            bad += 1;
        }
    }
    if bad > 0 {
        failures.push(format!("papangelou consistency: {bad}"));
    }

    verdict(7, failures.is_empty(), &format_failures(&failures, &format!("5 suites x {CASES} cases, 0 failures")));
}

fn sorted(x: &PointPattern) -> Vec<Vec<u64>> {
    let mut v: Vec<Vec<u64>> = x.iter().map(|p| p.iter().map(|c| c.to_bits()).collect()).collect();
    v.sort();
    v
}

fn numeric(r: &EstimateReport) -> (u64, u64, Option<u64>, u64, u64) {
    (r.mu_hat.to_bits(), r.se.to_bits(), r.rho_final.map(f64::to_bits), r.steps, r.n_total)
}

#[test]
fn criterion_8_determinism_across_thread_counts() {
    let _g = serial();
    let one: Vec<_> = pool(1, stationary_grid).iter().map(numeric).collect();
    let eight: Vec<_> = pool(8, stationary_grid).iter().map(numeric).collect();
    verdict(8, one == eight, &format!("{} estimates compared bitwise at 1 and 8 threads", one.len()));
}
