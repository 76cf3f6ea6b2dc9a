//! Seeded road-graph scenarios: small-world topology, edge annotations,
//! charging stations, random-walk missions and per-cell manufacturing spread.

use std::collections::BTreeSet;
use std::path::Path;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::cell::{CellParams, PackConfig};
use crate::error::{invalid, Error, Result};
use crate::mission::Mission;

/// Generation parameters. Ranges are `[low, high]`, sampled uniformly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioConfig {
    pub n_nodes: usize,
    pub k_neighbors: usize,
    pub rewire_p: f64,
    pub n_stations: usize,
    pub walk_length: usize,
    pub n_cells: usize,
    pub uc_fraction: f64,
    pub edge_time_min: [f64; 2],
    pub edge_current_a: [f64; 2],
    pub idle_min: [f64; 2],
    pub charge_min: [f64; 2],
    /// Magnitude of the station charging current.
    pub charge_current_a: f64,
    /// Missions kept per scenario.
    pub walks_per_scenario: usize,
    /// Deepest discharge, below full, that a kept walk may cause on a nominal cell.
    pub max_drain_ah: f64,
    pub connect_retries: usize,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            n_nodes: 30,
            k_neighbors: 6,
            rewire_p: 0.3,
            n_stations: 4,
            walk_length: 10,
            n_cells: 12,
            uc_fraction: 0.2,
            edge_time_min: [2.0, 6.0],
            edge_current_a: [1.25, 5.0],
            idle_min: [10.0, 120.0],
            charge_min: [30.0, 120.0],
            charge_current_a: 2.5,
            walks_per_scenario: 200,
            max_drain_ah: 1.5,
            connect_retries: 100,
        }
    }
}

fn check_range(name: &str, r: [f64; 2], min: f64) -> Result<()> {
    if !(r[0].is_finite() && r[1].is_finite() && r[0] >= min && r[0] <= r[1]) {
        return Err(invalid(format!("{name} must be an ordered range above {min}, got {r:?}")));
    }
    Ok(())
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        check_ws(self.n_nodes, self.k_neighbors, self.rewire_p)?;
        if self.n_stations == 0 || self.n_stations > self.n_nodes {
            return Err(invalid(format!(
                "n_stations must lie in 1..={}, got {}",
                self.n_nodes, self.n_stations
            )));
        }
        if self.walk_length == 0 {
            return Err(invalid("walk_length must be at least 1"));
        }
        if self.n_cells < 2 {
            return Err(invalid(format!("n_cells must be at least 2, got {}", self.n_cells)));
        }
        if !(0.0..1.0).contains(&self.uc_fraction) {
            return Err(invalid(format!("uc_fraction must lie in [0, 1), got {}", self.uc_fraction)));
        }
        check_range("edge_time_min", self.edge_time_min, 0.0)?;
        check_range("edge_current_a", self.edge_current_a, 0.0)?;
        check_range("idle_min", self.idle_min, 0.0)?;
        check_range("charge_min", self.charge_min, 0.0)?;
        if self.edge_time_min[1] <= 0.0 || self.edge_current_a[1] <= 0.0 {
            return Err(invalid("drive segments need positive time and current"));
        }
        if !(self.charge_current_a > 0.0 && self.charge_current_a.is_finite()) {
            return Err(invalid("charge_current_a must be positive"));
        }
        if self.walks_per_scenario == 0 {
            return Err(invalid("walks_per_scenario must be at least 1"));
        }
        if !(self.max_drain_ah > 0.0) {
            return Err(invalid("max_drain_ah must be positive"));
        }
        if self.connect_retries == 0 {
            return Err(invalid("connect_retries must be at least 1"));
        }
        Ok(())
    }
}

fn check_ws(n: usize, k: usize, p: f64) -> Result<()> {
    if k % 2 != 0 || k == 0 || k >= n {
        return Err(invalid(format!("need an even k with 0 < k < n, got n={n} k={k}")));
    }
    if !(0.0..=1.0).contains(&p) {
        return Err(invalid(format!("rewiring probability must lie in [0, 1], got {p}")));
    }
    Ok(())
}

/// Undirected edge `a < b`.
pub type EdgeKey = (usize, usize);

/// Ring lattice on `n` nodes, each joined to its `k` nearest neighbours, with
/// every lattice edge rewired to a random new endpoint with probability `p`.
/// Rewiring never creates self-loops or duplicate edges.
pub fn watts_strogatz(n: usize, k: usize, p: f64, rng: &mut impl Rng) -> Result<Vec<EdgeKey>> {
    check_ws(n, k, p)?;
    let key = |a: usize, b: usize| (a.min(b), a.max(b));
    let mut edges: BTreeSet<EdgeKey> = BTreeSet::new();
    for j in 1..=k / 2 {
        for u in 0..n {
            edges.insert(key(u, (u + j) % n));
        }
    }
    let mut degree = vec![k; n];
    for j in 1..=k / 2 {
        for u in 0..n {
            let v = (u + j) % n;
            if !rng.random_bool(p) || degree[u] >= n - 1 || !edges.contains(&key(u, v)) {
                continue;
            }
            let w = loop {
                let w = rng.random_range(0..n);
                if w != u && !edges.contains(&key(u, w)) {
                    break w;
                }
            };
            edges.remove(&key(u, v));
            edges.insert(key(u, w));
            degree[v] -= 1;
            degree[w] += 1;
        }
    }
    Ok(edges.into_iter().collect())
}

pub fn is_connected(n: usize, edges: &[EdgeKey]) -> bool {
    let mut adj = vec![Vec::new(); n];
    for &(a, b) in edges {
        adj[a].push(b);
        adj[b].push(a);
    }
    let mut seen = vec![false; n];
    let mut stack = vec![0];
    seen[0] = true;
    while let Some(u) = stack.pop() {
        for &v in &adj[u] {
            if !seen[v] {
                seen[v] = true;
                stack.push(v);
            }
        }
    }
    seen.into_iter().all(|s| s)
}

/// Draws Watts-Strogatz graphs until one is connected.
pub fn connected_watts_strogatz(n: usize, k: usize, p: f64, retries: usize, rng: &mut impl Rng) -> Result<Vec<EdgeKey>> {
    for _ in 0..retries {
        let edges = watts_strogatz(n, k, p, rng)?;
        if is_connected(n, &edges) {
            return Ok(edges);
        }
    }
    Err(Error::Disconnected(retries))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Edge {
    pub a: usize,
    pub b: usize,
    pub travel_time_h: f64,
    /// Pack discharge current while driving the edge.
    pub current_a: f64,
}

/// One outgoing choice from a node.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Transition {
    pub edge: usize,
    pub to: usize,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoadGraph {
    pub n_nodes: usize,
    pub edges: Vec<Edge>,
    /// Outgoing transitions of each node; weights sum to one.
    pub transitions: Vec<Vec<Transition>>,
    /// Charging-station nodes, ascending.
    pub stations: Vec<usize>,
}

impl RoadGraph {
    pub fn is_station(&self, node: usize) -> bool {
        self.stations.binary_search(&node).is_ok()
    }
}

fn uniform(rng: &mut impl Rng, r: [f64; 2]) -> f64 {
    if r[0] == r[1] {
        r[0]
    } else {
        rng.random_range(r[0]..=r[1])
    }
}

/// Adds travel times, currents, transition weights and stations to a topology.
pub fn annotate_and_stations(n: usize, topology: &[EdgeKey], cfg: &ScenarioConfig, rng: &mut impl Rng) -> Result<RoadGraph> {
    if cfg.n_stations == 0 || cfg.n_stations > n {
        return Err(invalid(format!("cannot place {} stations on {n} nodes", cfg.n_stations)));
    }
    let edges: Vec<Edge> = topology
        .iter()
        .map(|&(a, b)| Edge {
            a,
            b,
            travel_time_h: uniform(rng, cfg.edge_time_min) / 60.0,
            current_a: uniform(rng, cfg.edge_current_a),
        })
        .collect();
    let mut transitions: Vec<Vec<Transition>> = vec![Vec::new(); n];
    for (e, edge) in edges.iter().enumerate() {
        transitions[edge.a].push(Transition {
            edge: e,
            to: edge.b,
            weight: 0.0,
        });
        transitions[edge.b].push(Transition {
            edge: e,
            to: edge.a,
            weight: 0.0,
        });
    }
    for out in &mut transitions {
        for t in out.iter_mut() {
            t.weight = rng.random_range(f64::EPSILON..1.0);
        }
        let total: f64 = out.iter().map(|t| t.weight).sum();
        for t in out.iter_mut() {
            t.weight /= total;
        }
    }
    let mut stations = rand::seq::index::sample(rng, n, cfg.n_stations).into_vec();
    stations.sort_unstable();
    Ok(RoadGraph {
        n_nodes: n,
        edges,
        transitions,
        stations,
    })
}

fn pick(out: &[Transition], rng: &mut impl Rng) -> Transition {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for t in out {
        acc += t.weight;
        if u < acc {
            return *t;
        }
    }
    *out.last().expect("connected graphs have no isolated nodes")
}

/// A random walk of `walk_length` edges from a random station, as a mission
/// starting at time 0.
///
/// Each edge becomes a drive segment. Reaching a station adds a charging
/// segment, and consecutive drives are separated by an idle segment. A walk
/// starting at a station therefore opens with a charging segment.
pub fn random_walk_mission(graph: &RoadGraph, cfg: &ScenarioConfig, rng: &mut impl Rng) -> Result<Mission> {
    let charge = |rng: &mut _| (-cfg.charge_current_a, uniform(rng, cfg.charge_min) / 60.0);
    let mut node = graph.stations[rng.random_range(0..graph.stations.len())];
    let mut pieces = vec![charge(rng)];
    for step in 0..cfg.walk_length {
        if step > 0 {
            pieces.push((0.0, uniform(rng, cfg.idle_min) / 60.0));
        }
        let t = pick(&graph.transitions[node], rng);
        let edge = graph.edges[t.edge];
        pieces.push((edge.current_a, edge.travel_time_h));
        node = t.to;
        if graph.is_station(node) {
            pieces.push(charge(rng));
        }
    }
    pieces.retain(|p| p.1 > 0.0);
    Mission::from_durations(0.0, &pieces)
}

/// Deepest discharge below full that a mission causes on a lossless cell of
/// `q_ah` that starts full and stops charging when full.
pub fn nominal_drain_ah(mission: &Mission, q_ah: f64) -> f64 {
    let mut q = q_ah;
    let mut lowest = q_ah;
    for s in mission.segments() {
        q = (q - s.current_a * s.duration_h()).min(q_ah);
        lowest = lowest.min(q);
    }
    q_ah - lowest
}

/// Per-cell manufacturing spread around a 2.5 Ah cell.
pub fn sample_cells(n_cells: usize, rng: &mut impl Rng) -> Result<Vec<CellParams>> {
    if n_cells < 2 {
        return Err(invalid(format!("n_cells must be at least 2, got {n_cells}")));
    }
    let cap = Normal::new(1.0, 0.04).expect("valid normal");
    let isd_ma = Normal::new(0.175, 0.1).expect("valid normal");
    let mut cells = Vec::with_capacity(n_cells);
    for _ in 0..n_cells {
        let scale = loop {
            let x: f64 = cap.sample(rng);
            if (x - 1.0).abs() <= 0.12 {
                break x;
            }
        };
        let i_sd_ma = loop {
            let x: f64 = isd_ma.sample(rng);
            if x >= 0.01 {
                break x;
            }
        };
        cells.push(CellParams {
            q_max_ah: 2.5 * scale,
            i_sd_a: i_sd_ma * 1e-3,
            alpha_c: rng.random_range(0.996..=1.0),
            alpha_d: rng.random_range(1.0..=1.001),
            ..CellParams::default()
        });
    }
    Ok(cells)
}

/// Everything needed to replay one scenario under any strategy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub id: usize,
    pub seed: u64,
    pub config: ScenarioConfig,
    pub graph: RoadGraph,
    pub pack: PackConfig,
    /// Pool of daily missions, each starting at time 0.
    pub missions: Vec<Mission>,
}

fn stream(seed: u64, s: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(s);
    rng
}

/// Seed of scenario `index` in a suite drawn from `master_seed`.
pub fn scenario_seed(master_seed: u64, index: usize) -> u64 {
    stream(master_seed, index as u64).next_u64()
}

impl Scenario {
    /// Builds the scenario from independent random streams for the graph, the
    /// cells and the missions.
    pub fn generate(cfg: &ScenarioConfig, id: usize, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut rng = stream(seed, 1);
        let topo = connected_watts_strogatz(cfg.n_nodes, cfg.k_neighbors, cfg.rewire_p, cfg.connect_retries, &mut rng)?;
        let graph = annotate_and_stations(cfg.n_nodes, &topo, cfg, &mut rng)?;
        let cells = sample_cells(cfg.n_cells, &mut stream(seed, 2))?;
        let pack = PackConfig::new(cells, cfg.uc_fraction)?;

        let mut rng = stream(seed, 3);
        let nominal = CellParams::default().q_max_ah;
        let attempts = cfg.walks_per_scenario * 100;
        let mut missions = Vec::with_capacity(cfg.walks_per_scenario);
        for _ in 0..attempts {
            let m = random_walk_mission(&graph, cfg, &mut rng)?;
            if nominal_drain_ah(&m, nominal) <= cfg.max_drain_ah {
                missions.push(m);
                if missions.len() == cfg.walks_per_scenario {
                    break;
                }
            }
        }
        if missions.is_empty() {
            return Err(invalid(format!(
                "no walk out of {attempts} stays within max_drain_ah = {}",
                cfg.max_drain_ah
            )));
        }
        Ok(Self {
            id,
            seed,
            config: cfg.clone(),
            graph,
            pack,
            missions,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let s: Scenario = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        s.config.validate()?;
        s.pack.validate()?;
        Ok(s)
    }
}

/// `n` scenarios with seeds derived from `master_seed`.
pub fn generate_suite(cfg: &ScenarioConfig, n: usize, master_seed: u64) -> Result<Vec<Scenario>> {
    (0..n).map(|i| Scenario::generate(cfg, i, scenario_seed(master_seed, i))).collect()
}
