//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Run all criteria with `cargo test --release --test acceptance`, or a
//! subset by number: `cargo test --release --test acceptance -- 2 8 11`.

mod common;

use std::path::Path;
use std::process::Command;
use std::time::Instant;

use proptest::test_runner::{Config, RngAlgorithm, TestRng, TestRunner};
use tonsim::experiments::{capacity_sweep, grid_sweep, CapacitySample, ExperimentOptions, GridSample};
use tonsim::fitting::{
    capacity_law, delta_relation_check, fit_capacity_law, fit_m0_vs_rho0, fit_r0_vs_r1, fit_surface,
    fit_surface_points, m0_from_rho0, predict_ln_r1, r0_from_r1, SurfaceFit,
};
use tonsim::flatten::{compare_flattened, flat_cost, prime_impact_factor, verify_flattening};
use tonsim::rng::SimRng;
use tonsim::sim::{run_simulation, total_txn_cost, CostLedger, TonConfig};

const ALPHAS: [f64; 5] = [0.6, 0.8, 1.0, 1.2, 1.4];
const PSIS: [f64; 5] = [0.25, 0.5, 1.0, 2.0, 4.0];
const PEAK_RANGE: (f64, f64) = (0.5, 1.5);

fn desk() -> TonConfig {
    TonConfig::desk()
}

fn opts() -> ExperimentOptions {
    ExperimentOptions::default()
}

/// Expensive measurements, computed on first use and shared by criteria.
#[derive(Default)]
struct Shared {
    capacity_dense: Option<Vec<CapacitySample>>,
    grids: Vec<(usize, Vec<GridSample>)>,
}

impl Shared {
    /// d = 0.5 capacity sweep with m0, C in {4, 5, 6, 7, 8, 10, 12}.
    fn capacity_dense(&mut self) -> &[CapacitySample] {
        self.capacity_dense.get_or_insert_with(|| {
            capacity_sweep(&desk(), &[4.0, 5.0, 6.0, 7.0, 8.0, 10.0, 12.0], &opts(), true).unwrap()
        })
    }

    fn grid(&mut self, l: usize) -> &[GridSample] {
        if !self.grids.iter().any(|(k, _)| *k == l) {
            let cfg = TonConfig { txn_length: l, ..desk() };
            let g = grid_sweep(&cfg, &ALPHAS, &PSIS, &opts(), false).unwrap();
            self.grids.push((l, g));
        }
        &self.grids.iter().find(|(k, _)| *k == l).unwrap().1
    }

    fn surface(&mut self, l: usize) -> SurfaceFit<f64> {
        fit_surface(self.grid(l)).unwrap()
    }
}

type Verdict = (bool, String);

fn within(x: f64, lo: f64, hi: f64) -> bool {
    (lo..=hi).contains(&x)
}

fn rel_err(got: f64, want: f64) -> f64 {
    (got - want).abs() / want.abs().max(1e-300)
}

fn criterion_1() -> Verdict {
    let start = Instant::now();
    let cases = 1000;
    let mut runner = TestRunner::new_with_rng(
        Config { cases, failure_persistence: None, ..Config::default() },
        TestRng::deterministic_rng(RngAlgorithm::ChaCha),
    );
    let events = std::cell::Cell::new(0u64);
    let traced = runner.run(&common::small_config(), |cfg| {
        events.set(events.get() + run_simulation(&cfg).unwrap().injected);
        common::check_traced_run(&cfg)
    });
    let determinism = runner.run(&common::small_config(), |cfg| common::check_determinism(&cfg));
    let algebra = runner.run(
        &(0.01f64..10.0, 0.1f64..3.0, 1usize..=20, 0.0f64..1e3, 0.1f64..100.0, 0.0f64..200.0, 0.0f64..200.0),
        |(psi0, alpha, l, xi, h, t1, t2)| {
            let direct: f64 = (0..l).map(|i| psi0 * alpha.powi(i as i32)).sum();
            let total = total_txn_cost(psi0, alpha, l);
            proptest::prop_assert!((total - direct).abs() <= 1e-12 * direct);
            let mut a = CostLedger::with_costs(vec![xi], h);
            a.apply_decay(0, t1);
            let stepped = a.apply_decay(0, t1 + t2);
            let direct = CostLedger::with_costs(vec![xi], h).apply_decay(0, t1 + t2);
            proptest::prop_assert!((stepped - direct).abs() <= 1e-12 * direct.max(1e-300) || direct < 1e-300);
            Ok(())
        },
    );
    let secs = start.elapsed().as_secs_f64();
    let failures: Vec<String> = [
        ("traced", traced.err().map(|e| e.to_string())),
        ("determinism", determinism.err().map(|e| e.to_string())),
        ("algebra", algebra.err().map(|e| e.to_string())),
    ]
    .into_iter()
    .filter_map(|(n, e)| e.map(|e| format!("{n}: {e}")))
    .collect();
    (
        failures.is_empty() && secs < 60.0,
        format!(
            "3 x {cases} cases ({} transactions in traced runs), {} failures, {secs:.1} s (limit 60 s) {}",
            events.get(),
            failures.len(),
            failures.join("; ")
        ),
    )
}

fn criterion_2() -> Verdict {
    let total: f64 = total_txn_cost(1.0, 2.0, 3);
    let decayed = CostLedger::with_costs(vec![10.0], 30.0).apply_decay(0, 30.0);
    let want = 10.0 / std::f64::consts::E;
    (
        (total - 7.0).abs() <= 1e-12 && (decayed - want).abs() <= 1e-12,
        format!("total_txn_cost(1,2,3) = {total}, decay(10, H) = {decayed:.15} (10/e = {want:.15})"),
    )
}

fn r1_exponent(samples: &[CapacitySample]) -> f64 {
    let pts: Vec<(f64, f64)> = samples.iter().map(|s| (s.capacity, s.r1)).collect();
    fit_capacity_law(&pts).unwrap().beta
}

fn criterion_3(shared: &mut Shared) -> Verdict {
    let caps = [4.0, 6.0, 8.0, 10.0, 12.0];
    let dense: Vec<CapacitySample> =
        shared.capacity_dense().iter().filter(|s| caps.contains(&s.capacity)).cloned().collect();
    let sparse = capacity_sweep(&TonConfig { density: 0.05, ..desk() }, &caps, &opts(), false).unwrap();
    let b_dense = r1_exponent(&dense);
    let b_sparse = r1_exponent(&sparse);
    let r0_pts: Vec<(f64, f64)> = dense.iter().map(|s| (s.capacity, s.r0)).collect();
    let b0 = fit_capacity_law(&r0_pts).map(|f| f.beta).unwrap_or(f64::NAN);
    (
        within(b_dense, 1.5, 2.5) && b_sparse < b_dense,
        format!(
            "beta1(d=0.5) = {b_dense:.3} (band [1.5, 2.5]), beta1(d=0.05) = {b_sparse:.3} (must be smaller); beta0(d=0.5) = {b0:.3}"
        ),
    )
}

fn m0_pairs(samples: &[CapacitySample]) -> Vec<(f64, f64)> {
    samples.iter().filter_map(|s| s.m0.map(|m| (s.rho0, m))).collect()
}

fn criterion_4(shared: &mut Shared) -> Verdict {
    let pts = m0_pairs(shared.capacity_dense());
    let slope = delta_relation_check(&pts).unwrap_or(f64::NAN);
    (
        pts.len() >= 6 && within(slope, -1.25, -0.75),
        format!("{} (rho0, m0) points, OLS slope = {slope:.3} (band [-1.25, -0.75])", pts.len()),
    )
}

fn criterion_5(shared: &mut Shared) -> Verdict {
    let data = shared.capacity_dense().to_vec();
    let r_pts: Vec<(f64, f64)> = data.iter().map(|s| (s.r1, s.r0)).collect();
    let m_pts = m0_pairs(&data);
    let (r, m) = match (fit_r0_vs_r1(&r_pts), fit_m0_vs_rho0(&m_pts)) {
        (Ok(r), Ok(m)) => (r, m),
        (r, m) => return (false, format!("fit error: {:?} / {:?}", r.err(), m.err())),
    };
    let pass = r.goodness >= 0.9
        && m.goodness >= 0.9
        && (r.a - 1.0).abs() <= 0.3
        && within(r.b, 1.0, 10.0)
        && within(m.delta_m, 0.9, 1.7)
        && within(m.lambda, 0.05, 0.5);
    (
        pass,
        format!(
            "r0-r1: a = {:.3}, b = {:.3}, R2 = {:.3}; m0-rho0: dm = {:.3}, lambda = {:.3}, R2 = {:.3}",
            r.a, r.b, r.goodness, m.delta_m, m.lambda, m.goodness
        ),
    )
}

fn criterion_6(shared: &mut Shared) -> Verdict {
    let g = shared.grid(10).to_vec();
    let n = PSIS.len();
    let mut violations = Vec::new();
    let check = |a: &GridSample, b: &GridSample, v: &mut Vec<String>| {
        if b.ln_r1 > a.ln_r1 + 2.0 * a.stderr.max(b.stderr) {
            v.push(format!("({}, {}) -> ({}, {})", a.alpha, a.psi0, b.alpha, b.psi0));
        }
    };
    for i in 0..ALPHAS.len() {
        for j in 0..n {
            if j + 1 < n {
                check(&g[i * n + j], &g[i * n + j + 1], &mut violations);
            }
            if i + 1 < ALPHAS.len() {
                check(&g[i * n + j], &g[(i + 1) * n + j], &mut violations);
            }
        }
    }
    let floored = g.iter().filter(|s| s.r1_flag.is_some()).count();
    (
        violations.is_empty(),
        format!(
            "5x5 grid, L = 10: {} monotonicity violations {}; {floored} cells choke at the rate floor",
            violations.len(),
            violations.join(" ")
        ),
    )
}

fn criterion_7(shared: &mut Shared) -> Verdict {
    let f = shared.surface(10);
    let pass = f.goodness >= 0.9
        && within(f.b_psi, 0.45, 1.35)
        && within(f.delta_alpha, -0.8, 0.0)
        && within(f.gamma_alpha, 0.5, 1.5);
    (
        pass,
        format!(
            "R2 = {:.4}, B_psi = {:.3} [0.45, 1.35], delta = {:.3} [-0.8, 0], gamma = {:.3} [0.5, 1.5] (A = {:.4}, B_alpha = {:.3}, c = {:.3})",
            f.goodness, f.b_psi, f.delta_alpha, f.gamma_alpha, f.big_a, f.b_alpha, f.c
        ),
    )
}

fn criterion_8() -> Verdict {
    let mut rng = SimRng::new(8);
    let mut u = |lo: f64, hi: f64| lo + (hi - lo) * rng.unit();
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let fit = SurfaceFit::new(-u(1e-3, 2.0), u(0.3, 2.0), u(0.5, 15.0), u(0.1, 2.0), u(-1.0, 0.5), u(0.0, 6.0));
        let y = fit.c - u(1e-6, 8.0);
        let back = predict_ln_r1(&fit, 1.0, flat_cost(&fit, y).unwrap()).unwrap();
        worst = worst.max((back - y).abs() / y.abs().max(1.0));
    }
    (worst <= 1e-9, format!("1000 random inputs, max |predict(flatten(x)) - x| / max(1, |x|) = {worst:.2e}"))
}

fn criterion_9(shared: &mut Shared) -> Verdict {
    let fit = shared.surface(10);
    let o = opts();
    let mut pass = true;
    let mut parts = Vec::new();
    for alpha in [0.8, 1.2] {
        let cfg = TonConfig { alpha, psi0: 1.0, ..desk() };
        let rep = verify_flattening(&cfg, &fit, &o, 0.15).unwrap();
        let neg = compare_flattened(&cfg, 4.0 * rep.psi0_prime, &o, 0.15).unwrap();
        pass &= rep.equivalent && !neg.equivalent;
        parts.push(format!(
            "alpha {alpha}: psi0' = {:.3}, r1 {:.3} vs {:.3} (rel diff {:.3}); 4 psi0': r1 {:.3} (rel diff {:.3})",
            rep.psi0_prime, rep.original.r1, rep.flattened.r1, rep.r1_rel_diff, neg.flattened.r1, neg.r1_rel_diff
        ));
    }
    (pass, parts.join("; "))
}

fn criterion_10(shared: &mut Shared) -> Verdict {
    let (lo, hi) = PEAK_RANGE;
    let mut pass = true;
    let mut parts = Vec::new();
    for l in [6, 8, 10, 14] {
        let fit = shared.surface(l);
        let pf = prime_impact_factor(&fit, 1.0, l, PEAK_RANGE, 1e-4).unwrap();
        let interior = pf.alpha_prime > lo + 0.01 && pf.alpha_prime < hi - 0.01;
        let ok = match l {
            8 => interior && pf.psi_at_peak >= 1.0 && pf.alpha_prime > 1.0,
            14 => interior && pf.psi_at_peak >= 1.0 && pf.alpha_prime < 1.0,
            _ => interior && pf.psi_at_peak >= 1.0,
        };
        pass &= ok;
        parts.push(format!("L={l}: alpha' = {:.3}, psi = {:.4}", pf.alpha_prime, pf.psi_at_peak));
    }
    (pass, parts.join("; ") + " (need L=14 left of 1, L=8 right of 1)")
}

fn criterion_11() -> Verdict {
    let start = Instant::now();
    let mut errs = Vec::new();

    let cap: Vec<(f64, f64)> = (4..=12).map(|c| (c as f64, capacity_law(0.1, 2.0, c as f64))).collect();
    let f = fit_capacity_law(&cap).unwrap();
    errs.push(("capacity", rel_err(f.a_coef, 0.1).max(rel_err(f.beta, 2.0)), 1e-6));

    let rr: Vec<(f64, f64)> = (1..=12).map(|i| (0.5 * i as f64, r0_from_r1(1.0, 5.0, 0.5 * i as f64))).collect();
    let f = fit_r0_vs_r1(&rr).unwrap();
    errs.push(("r0-r1", rel_err(f.a, 1.0).max(rel_err(f.b, 5.0)), 1e-6));

    let mm: Vec<(f64, f64)> = (0..=10).map(|i| (0.08 * i as f64, m0_from_rho0(1.2, 0.25, 0.08 * i as f64))).collect();
    let f = fit_m0_vs_rho0(&mm).unwrap();
    errs.push(("m0-rho0", rel_err(f.delta_m, 1.2).max(rel_err(f.lambda, 0.25)), 1e-6));

    let truth = SurfaceFit::new(-0.5, 0.9, 3.0, 1.0, -0.4, 3.0);
    let mut pts = Vec::new();
    for a in ALPHAS {
        for p in PSIS {
            pts.push((a, p, predict_ln_r1(&truth, a, p).unwrap(), 0.0));
        }
    }
    let f = fit_surface_points::<f64>(&pts).unwrap();
    let worst = f.to_array().iter().zip(truth.to_array()).map(|(g, w)| rel_err(*g, w)).fold(0.0, f64::max);
    errs.push(("surface", worst, 1e-4));

    let secs = start.elapsed().as_secs_f64();
    let pass = errs.iter().all(|(_, e, tol)| e <= tol) && secs < 60.0;
    let detail = errs
        .iter()
        .map(|(n, e, tol)| format!("{n} {e:.1e} (tol {tol:.0e})"))
        .collect::<Vec<_>>()
        .join(", ");
    (pass, format!("max relative parameter error: {detail}; {secs:.2} s"))
}

const CLI_SPEC: &str = "\
[config]
n_nodes = 60
sim_duration = 600.0
psi0 = 1.0
alpha = 0.9

[grids]
alpha = [0.8, 1.0, 1.2]
psi0 = [0.5, 1.0, 2.0]
capacity = [4.0, 6.0, 8.0, 10.0]
txn_length = [8, 14]

[experiment]
with_m0 = true
with_r0 = true

[flatten]
alphas = [0.8, 1.2]
";

const SURFACE_CSV: &str = "model,parameter,value\nsurface,A,-0.3\nsurface,B_psi,0.9\nsurface,B_alpha,8.8\n\
surface,gamma_alpha,1.0\nsurface,delta_alpha,-0.6\nsurface,c,4.0\n";

fn criterion_12() -> Verdict {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("spec.toml"), CLI_SPEC).unwrap();
    std::fs::write(d.join("surface.csv"), SURFACE_CSV).unwrap();
    let run = |args: &[&str], jobs: &str, out: &str, cwd: &Path| -> Result<Vec<u8>, String> {
        let o = Command::new(env!("CARGO_BIN_EXE_tonsim"))
            .args(args)
            .args(["--config", "spec.toml", "--jobs", jobs, "--out", out])
            .current_dir(cwd)
            .output()
            .map_err(|e| e.to_string())?;
        if !o.status.success() {
            return Err(String::from_utf8_lossy(&o.stderr).into_owned());
        }
        std::fs::read(cwd.join(out)).map_err(|e| e.to_string())
    };
    let commands: [(&str, &[&str]); 8] = [
        ("simulate", &["simulate", "--seeds", "4"]),
        ("profile", &["profile"]),
        ("sweep-grid", &["sweep-grid", "--format", "json"]),
        ("sweep-capacity", &["sweep-capacity"]),
        ("fit", &["fit", "--set", "fit.input=\"cap_a.csv\"", "--set", "fit.model=\"r0-r1\""]),
        ("flatten", &["flatten", "--set", "flatten.surface=\"surface.csv\""]),
        ("flatten --verify", &["flatten", "--set", "flatten.surface=\"surface.csv\"", "--set", "flatten.verify=true"]),
        ("prime-alpha", &["prime-alpha", "--set", "flatten.surface=\"surface.csv\""]),
    ];
    let mut bad = Vec::new();
    for (name, args) in commands {
        let tag = name.replace([' ', '-'], "_");
        let a = run(args, "1", &format!("{tag}_a.csv"), d);
        let b = run(args, "4", &format!("{tag}_b.csv"), d);
        match (a, b) {
            (Ok(a), Ok(b)) if a == b && !a.is_empty() => {}
            (Ok(_), Ok(_)) => bad.push(format!("{name}: payloads differ")),
            (Err(e), _) | (_, Err(e)) => bad.push(format!("{name}: {}", e.trim())),
        }
        if name == "sweep-capacity" {
            let _ = std::fs::copy(d.join("sweep_capacity_a.csv"), d.join("cap_a.csv"));
        }
    }
    (
        bad.is_empty(),
        format!("8 commands run with --jobs 1 and --jobs 4: {}", if bad.is_empty() { "byte-identical".into() } else { bad.join("; ") }),
    )
}

fn main() {
    let selected: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let wanted = |n: u32| selected.is_empty() || selected.contains(&n);
    let mut shared = Shared::default();
    let mut failed = Vec::new();
    for n in 1..=12u32 {
        if !wanted(n) {
            continue;
        }
        let start = Instant::now();
        let (pass, detail) = match n {
            1 => criterion_1(),
            2 => criterion_2(),
            3 => criterion_3(&mut shared),
            4 => criterion_4(&mut shared),
            5 => criterion_5(&mut shared),
            6 => criterion_6(&mut shared),
            7 => criterion_7(&mut shared),
            8 => criterion_8(),
            9 => criterion_9(&mut shared),
            10 => criterion_10(&mut shared),
            11 => criterion_11(),
            _ => criterion_12(),
        };
        println!(
            "criterion {n:>2}: {}  {detail}  [{:.1} s]",
            if pass { "PASS" } else { "FAIL" },
            start.elapsed().as_secs_f64()
        );
        if !pass {
            failed.push(n);
        }
    }
    if !failed.is_empty() {
        println!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}
