use tonsim::experiments::{
    find_m0, find_r0, find_r1, grid_sweep, m0_under_fault_ramp, resilience_profile, Ensemble,
    ExperimentOptions, Pooled, SearchFlag, SearchOptions,
};
use tonsim::sim::TonConfig;

fn reference() -> TonConfig {
    TonConfig::desk()
}

fn small() -> TonConfig {
    TonConfig { n_nodes: 40, sim_duration: 400.0, ..TonConfig::default() }
}

fn opts() -> ExperimentOptions {
    ExperimentOptions::default()
}

#[test]
fn empty_graph_has_zero_thresholds() {
    // The floor probe must carry traffic (about 20 transactions per run).
    let cfg = TonConfig { density: 0.0, ..small() };
    let o = ExperimentOptions {
        search: SearchOptions { rate_floor: 0.05, ..SearchOptions::default() },
        ..opts()
    };
    let r0 = find_r0(&cfg, &o).unwrap();
    let r1 = find_r1(&cfg, &o).unwrap();
    assert_eq!((r0.rate, r0.flag), (0.0, Some(SearchFlag::AlwaysTrue)));
    assert_eq!((r1.rate, r1.flag), (0.0, Some(SearchFlag::AlwaysTrue)));
}

#[test]
fn unreachable_capacity_never_aborts_or_chokes() {
    let cfg = TonConfig { capacity: 1e12, ..small() };
    let o = ExperimentOptions {
        search: SearchOptions { rate_ceiling: 20.0, ..SearchOptions::default() },
        ..opts()
    };
    let r0 = find_r0(&cfg, &o).unwrap();
    let r1 = find_r1(&cfg, &o).unwrap();
    assert_eq!((r0.rate, r0.flag), (20.0, Some(SearchFlag::NeverTrue)));
    assert_eq!((r1.rate, r1.flag), (20.0, Some(SearchFlag::NeverTrue)));
}

#[test]
fn r0_bracket_is_consistent_and_stable() {
    let cfg = reference();
    let o = opts();
    let t = find_r0(&cfg, &o).unwrap();
    assert!(t.flag.is_none(), "{:?}", t.flag);
    assert!(t.upper / t.lower <= 1.0 + o.search.rel_resolution + 1e-12);
    // Independent re-evaluation of the predicate at both bracket ends.
    let at = |r: f64| {
        let runs = o.ensemble.run(&TonConfig { injection_rate: r, ..cfg.clone() }, &o.choke).unwrap();
        Pooled::of(&runs).aborts_reached()
    };
    assert!(!at(t.lower));
    assert!(at(t.upper));
    assert_eq!(find_r0(&cfg, &o).unwrap().rate, t.rate);
}

#[test]
fn r1_exceeds_r0_on_reference() {
    let p = resilience_profile(&reference(), &opts(), false).unwrap();
    assert!(p.r1 > p.r0, "{p:?}");
    assert!((0.0..=1.0).contains(&p.rho0));
    let o = opts();
    let t = find_r1(&reference(), &o).unwrap();
    let at = |r: f64| {
        let cfg = TonConfig { injection_rate: r, ..reference() };
        Pooled::of(&o.ensemble.run(&cfg, &o.choke).unwrap()).majority_choked()
    };
    assert!(!at(t.lower));
    assert!(at(t.upper));
}

#[test]
fn m0_on_reference() {
    let cfg = reference();
    let o = opts();
    let r0 = find_r0(&cfg, &o).unwrap().rate;

    // Without failures the network does not choke at r0.
    let runs = o.ensemble.run(&TonConfig { injection_rate: r0, ..cfg.clone() }, &o.choke).unwrap();
    assert!(!Pooled::of(&runs).majority_choked());

    let a = find_m0(&cfg, r0, &o).unwrap();
    let m = a.m0.unwrap();
    assert!(m > 0.0 && m < 1.0, "{m}");
    assert_eq!(a.choked_runs(), o.ensemble.seeds);

    let other = ExperimentOptions { ensemble: Ensemble::new(8, 99), ..o.clone() };
    let b = find_m0(&cfg, r0, &other).unwrap();
    let spread = 3.0 * (a.stderr.unwrap().powi(2) + b.stderr.unwrap().powi(2)).sqrt();
    assert!((m - b.m0.unwrap()).abs() <= spread.max(0.02), "{a:?} vs {b:?}");
}

#[test]
fn immediate_faults_choke_in_first_window() {
    let cfg = TonConfig { fault_mean_delay: Some(1e-3), ..small() };
    let o = opts();
    let est = m0_under_fault_ramp(&cfg, 1.0, &o).unwrap();
    assert_eq!(est.choked_runs(), o.ensemble.seeds);
    let runs = o.ensemble.run(&TonConfig { injection_rate: 1.0, ..cfg }, &o.choke).unwrap();
    for r in runs {
        assert!(r.choke_time.unwrap() < 1.0);
    }
}

#[test]
fn single_cell_grid_matches_find_r1() {
    let cfg = TonConfig { alpha: 0.9, psi0: 1.5, ..small() };
    let o = opts();
    let g = grid_sweep(&cfg, &[0.9], &[1.5], &o, true).unwrap();
    assert_eq!(g.len(), 1);
    assert_eq!(g[0].ln_r1, find_r1(&cfg, &o).unwrap().rate.ln());
    assert_eq!(g[0].ln_r0, Some(find_r0(&cfg, &o).unwrap().rate.ln()));
    assert_eq!(g, grid_sweep(&cfg, &[0.9], &[1.5], &o, true).unwrap());
}

#[test]
fn grid_orders_costs() {
    let cfg = small();
    let o = opts();
    let g = grid_sweep(&cfg, &[0.8, 1.2], &[0.5, 1.0, 2.0], &o, false).unwrap();
    for row in g.chunks(3) {
        for w in row.windows(2) {
            assert!(w[1].ln_r1 <= w[0].ln_r1 + 2.0 * w[0].stderr.max(w[1].stderr), "{w:?}");
        }
    }
    for j in 0..3 {
        assert!(g[j].ln_r1 >= g[3 + j].ln_r1);
    }
}
