use std::collections::BTreeSet;

use cellbal::scenario::{
    annotate_and_stations, connected_watts_strogatz, generate_suite, is_connected, nominal_drain_ah,
    random_walk_mission, sample_cells, scenario_seed, watts_strogatz,
};
use cellbal::{Scenario, ScenarioConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn phi(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Standard normal CDF by Simpson integration of the density from -10.
fn cdf(z: f64) -> f64 {
    let (a, n) = (-10.0, 20_000);
    let h = (z - a) / n as f64;
    let mut s = phi(a) + phi(z);
    for k in 1..n {
        s += phi(a + k as f64 * h) * if k % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * h / 3.0
}

#[test]
fn lattice_rewiring_is_seeded() {
    let a = watts_strogatz(30, 6, 0.3, &mut rng(5)).unwrap();
    let b = watts_strogatz(30, 6, 0.3, &mut rng(5)).unwrap();
    let c = watts_strogatz(30, 6, 0.3, &mut rng(6)).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, c);
    assert_eq!(a.len(), 90);
    assert!(a.iter().all(|&(u, v)| u < v && v < 30));
    let g = connected_watts_strogatz(30, 6, 0.3, 100, &mut rng(5)).unwrap();
    assert!(is_connected(30, &g));
    // a graph with isolated halves is not connected
    assert!(!is_connected(4, &[(0, 1), (2, 3)]));
}

#[test]
fn annotations_stay_in_range() {
    let cfg = ScenarioConfig::default();
    for seed in 0..20 {
        let mut r = rng(seed);
        let topo = connected_watts_strogatz(30, 6, 0.3, 100, &mut r).unwrap();
        let g = annotate_and_stations(30, &topo, &cfg, &mut r).unwrap();
        for out in &g.transitions {
            let total: f64 = out.iter().map(|t| t.weight).sum();
            assert!((total - 1.0).abs() < 1e-12);
            assert!(out.iter().all(|t| t.weight > 0.0));
        }
        for e in &g.edges {
            assert!((1.25..=5.0).contains(&e.current_a), "{e:?}");
            let minutes = e.travel_time_h * 60.0;
            assert!((cfg.edge_time_min[0] - 1e-9..=cfg.edge_time_min[1] + 1e-9).contains(&minutes));
        }
        let stations: BTreeSet<_> = g.stations.iter().copied().collect();
        assert_eq!(stations.len(), 4);
        assert!(stations.iter().all(|&s| s < 30));
    }
}

#[test]
fn walks_drive_ten_edges_from_a_station() {
    let cfg = ScenarioConfig::default();
    let mut r = rng(9);
    let topo = connected_watts_strogatz(30, 6, 0.3, 100, &mut r).unwrap();
    let g = annotate_and_stations(30, &topo, &cfg, &mut r).unwrap();
    for _ in 0..200 {
        let m = random_walk_mission(&g, &cfg, &mut r).unwrap();
        let segs = m.segments();
        assert_eq!(segs.iter().filter(|s| s.current_a > 0.0).count(), 10);
        assert_eq!(segs[0].current_a, -cfg.charge_current_a);
        assert_eq!(m.start_h(), 0.0);
        for w in segs.windows(2) {
            assert_eq!(w[0].t_end_h, w[1].t_start_h);
        }
        for s in segs.iter().filter(|s| s.is_idle()) {
            let minutes = s.duration_h() * 60.0;
            assert!((cfg.idle_min[0] - 1e-9..=cfg.idle_min[1] + 1e-9).contains(&minutes));
        }
        // charging happens only right after arriving somewhere (or at the start)
        for (k, s) in segs.iter().enumerate().skip(1) {
            if s.is_charging() {
                assert!(segs[k - 1].current_a > 0.0);
            }
        }
    }
}

#[test]
fn cell_spread_matches_its_distributions() {
    let cells = sample_cells(10_000, &mut rng(17)).unwrap();
    let n = cells.len() as f64;
    assert!(cells.iter().all(|c| (2.2..=2.8).contains(&c.q_max_ah)));
    assert!(cells.iter().all(|c| c.i_sd_a >= 0.01e-3));
    assert!(cells.iter().all(|c| (0.996..=1.0).contains(&c.alpha_c)));
    assert!(cells.iter().all(|c| (1.0..=1.001).contains(&c.alpha_d)));

    let mean_q = cells.iter().map(|c| c.q_max_ah).sum::<f64>() / n;
    assert!((mean_q / 2.5 - 1.0).abs() < 0.005, "{mean_q}");
    // a normal truncated at +-3 sd keeps 1 - 6 phi(3) / (2 Phi(3) - 1) of its variance
    let sd_want = 2.5 * 0.04 * (1.0 - 6.0 * phi(3.0) / (2.0 * cdf(3.0) - 1.0)).sqrt();
    let sd_q = (cells.iter().map(|c| (c.q_max_ah - mean_q).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    assert!((sd_q / sd_want - 1.0).abs() < 0.03, "{sd_q} vs {sd_want}");

    // lower truncation at 0.01 mA shifts the mean by sd phi(a) / (1 - Phi(a))
    let alpha = (0.01 - 0.175) / 0.1;
    let mean_want = 0.175 + 0.1 * phi(alpha) / (1.0 - cdf(alpha));
    let mean_isd = cells.iter().map(|c| c.i_sd_a * 1e3).sum::<f64>() / n;
    assert!((mean_isd / mean_want - 1.0).abs() < 0.02, "{mean_isd} vs {mean_want}");

    assert!(sample_cells(1, &mut rng(1)).is_err());
}

#[test]
fn scenarios_replay_exactly() {
    let cfg = ScenarioConfig {
        walks_per_scenario: 40,
        ..ScenarioConfig::default()
    };
    let a = Scenario::generate(&cfg, 3, 1234).unwrap();
    let b = Scenario::generate(&cfg, 3, 1234).unwrap();
    let c = Scenario::generate(&cfg, 3, 1235).unwrap();
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    assert_ne!(a.graph, c.graph);
    assert_eq!(a.missions.len(), 40);
    assert_eq!(a.pack.len(), 12);
    assert!(is_connected(a.graph.n_nodes, &a.graph.edges.iter().map(|e| (e.a, e.b)).collect::<Vec<_>>()));
    for m in &a.missions {
        assert!(m.segments()[0].is_charging());
        assert!(nominal_drain_ah(m, 2.5) <= cfg.max_drain_ah);
    }

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("s.json");
    a.save(&path).unwrap();
    assert_eq!(Scenario::load(&path).unwrap(), a);
    std::fs::write(&path, "{\"id\": 0}").unwrap();
    assert!(Scenario::load(&path).is_err());
}

#[test]
fn suites_use_distinct_derived_seeds() {
    let cfg = ScenarioConfig {
        walks_per_scenario: 5,
        ..ScenarioConfig::default()
    };
    let suite = generate_suite(&cfg, 4, 42).unwrap();
    let seeds: BTreeSet<u64> = suite.iter().map(|s| s.seed).collect();
    assert_eq!(seeds.len(), 4);
    for (i, s) in suite.iter().enumerate() {
        assert_eq!(s.id, i);
        assert_eq!(s.seed, scenario_seed(42, i));
    }
    assert_eq!(scenario_seed(42, 0), scenario_seed(42, 0));
    assert_ne!(scenario_seed(42, 0), scenario_seed(43, 0));
}

#[test]
fn bad_configs_are_rejected() {
    for cfg in [
        ScenarioConfig { k_neighbors: 5, ..ScenarioConfig::default() },
        ScenarioConfig { k_neighbors: 30, ..ScenarioConfig::default() },
        ScenarioConfig { rewire_p: 1.5, ..ScenarioConfig::default() },
        ScenarioConfig { walk_length: 0, ..ScenarioConfig::default() },
        ScenarioConfig { n_stations: 0, ..ScenarioConfig::default() },
        ScenarioConfig { edge_current_a: [5.0, 1.0], ..ScenarioConfig::default() },
    ] {
        assert!(cfg.validate().is_err(), "{cfg:?}");
    }
}
