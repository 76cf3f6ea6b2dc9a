//! Day-by-day lifespan simulation of a pack under one strategy and usage
//! pattern, the scenario x strategy x pattern grid, and strategy comparison.

use std::collections::BTreeMap;
use std::time::Duration;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cell::{apply_aging, evolve_charge, AgingParams, CellState, PackConfig, VoltageMap, BOUND_TOL_AH};
use crate::error::{invalid, Error, Result};
use crate::mission::{check_bounds, time_to_first_full, with_charger_cutoff, Mission, Violation, ViolationKind};
use crate::optimizer::{verify_plan, TransferPlan, WlaInstance};
use crate::physics::ArchParams;
use crate::scenario::Scenario;
use crate::solver::SolverAdapter;
use crate::strategies::{apply_transfers_from, plan_idle_period, plan_window, window_len, PlanContext, PlanStats, StrategyKind};

/// How often the vehicle is driven.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum UsagePattern {
    /// Every day.
    A,
    /// Every second day.
    B,
    /// Every third day.
    C,
}

impl UsagePattern {
    pub const ALL: [UsagePattern; 3] = [Self::A, Self::B, Self::C];

    pub fn period_days(self) -> u64 {
        match self {
            Self::A => 1,
            Self::B => 2,
            Self::C => 3,
        }
    }

    pub fn is_drive_day(self, day: u64) -> bool {
        day % self.period_days() == 0
    }

    pub fn label(self) -> &'static str {
        match self {
            Self::A => "A",
            Self::B => "B",
            Self::C => "C",
        }
    }

    fn stream(self) -> u64 {
        self.period_days()
    }
}

/// Simulation knobs shared by every run of a grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimConfig {
    pub arch: ArchParams,
    pub aging: AgingParams,
    pub voltage: VoltageMap,
    /// Length of a simulated day; longer missions stretch their day.
    pub day_h: f64,
    /// Shortest idle period appended after each day's mission.
    pub overnight_h: f64,
    /// Charge every cell to full before each drive day.
    pub top_up: bool,
    /// WLA safety margin against the charge bounds.
    pub margin_ah: f64,
    pub solver_budget_s: f64,
    /// Stop after this many days even without reaching end of life.
    pub max_days: u64,
    /// Individual violation events kept per run; all are counted.
    pub max_logged_events: usize,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            arch: ArchParams::default(),
            aging: AgingParams::default(),
            voltage: VoltageMap::default(),
            day_h: 24.0,
            overnight_h: 8.0,
            top_up: true,
            margin_ah: 0.002,
            solver_budget_s: 5.0,
            max_days: 100_000,
            max_logged_events: 20,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        self.arch.validate()?;
        self.aging.validate()?;
        self.voltage.validate()?;
        if !(self.day_h > 0.0 && self.day_h.is_finite()) {
            return Err(invalid(format!("day_h must be positive, got {}", self.day_h)));
        }
        if !(self.overnight_h >= 0.0 && self.overnight_h.is_finite()) {
            return Err(invalid(format!("overnight_h must be non-negative, got {}", self.overnight_h)));
        }
        if !(self.margin_ah >= 0.0 && self.margin_ah.is_finite()) {
            return Err(invalid(format!("margin_ah must be non-negative, got {}", self.margin_ah)));
        }
        if !(self.solver_budget_s > 0.0 && self.solver_budget_s.is_finite()) {
            return Err(invalid(format!(
                "solver_budget_s must be positive, got {}",
                self.solver_budget_s
            )));
        }
        if self.max_days == 0 {
            return Err(invalid("max_days must be at least 1"));
        }
        Ok(())
    }

    pub fn budget(&self) -> Duration {
        Duration::from_secs_f64(self.solver_budget_s)
    }
}

/// A bound crossing observed while running the pack.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DayEvent {
    pub day: u64,
    /// `true` when caused by applying transfers rather than by the mission.
    pub from_transfers: bool,
    pub violation: Violation,
}

/// Outcome of one lifespan simulation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimResult {
    pub scenario_id: usize,
    pub scenario_seed: u64,
    pub strategy: String,
    pub kind: StrategyKind,
    pub pattern: UsagePattern,
    /// Days completed when the weakest cell reached end of life.
    pub lifespan_days: u64,
    pub reached_end_of_life: bool,
    pub drive_days: u64,
    /// Idle periods in which at least one transfer cycle ran.
    pub balancing_periods: u64,
    pub balancing_cycles: u64,
    pub plan_stats: PlanStats,
    pub floor_violations: u64,
    /// Floor violations inside windows (or, for opportunistic, periods) whose
    /// solve fell back to no balancing.
    pub fallback_floor_violations: u64,
    pub ceiling_violations: u64,
    /// Bound crossings caused by the transfers themselves.
    pub transfer_events: u64,
    pub events: Vec<DayEvent>,
    /// Largest gap between a WLA plan's predicted window-end charge and the
    /// charge actually reached.
    pub max_plan_drift_ah: f64,
    /// Lowest and mean SOH after each simulated day.
    pub min_soh_trace: Vec<f64>,
    pub mean_soh_trace: Vec<f64>,
    pub final_soh: Vec<f64>,
}

struct Run<'a> {
    ctx: PlanContext<'a>,
    kind: StrategyKind,
    max_logged: usize,
    states: Vec<CellState>,
    day: u64,
    /// Whether the plan in force fell back to no balancing.
    fallback: bool,
    result: SimResult,
}

impl Run<'_> {
    fn log(&mut self, from_transfers: bool, v: Violation) {
        match (from_transfers, v.kind) {
            (true, _) => self.result.transfer_events += 1,
            (false, ViolationKind::Floor) => {
                self.result.floor_violations += 1;
                if self.fallback {
                    self.result.fallback_floor_violations += 1;
                }
            }
            (false, ViolationKind::Ceiling) => self.result.ceiling_violations += 1,
        }
        if self.result.events.len() < self.max_logged {
            self.result.events.push(DayEvent {
                day: self.day,
                from_transfers,
                violation: v,
            });
        }
    }

    /// Books the transfers of an idle period that started at `start`.
    fn transfer(&mut self, plan: &TransferPlan, start: &[CellState], segment: usize, duration_h: f64) -> Result<()> {
        let owned;
        let transfers = match self.kind {
            StrategyKind::None => None,
            StrategyKind::Wla { .. } => plan.period(segment),
            StrategyKind::Opportunistic => {
                let (t, status) = plan_idle_period(&self.ctx, start, duration_h)?;
                self.result.plan_stats.record(status);
                self.fallback = !status.has_solution();
                owned = t;
                owned.as_ref()
            }
        };
        let Some(t) = transfers else { return Ok(()) };
        let applied = apply_transfers_from(self.ctx.pack, start, &mut self.states, t, self.ctx.arch, self.ctx.vmap)?;
        if applied.cycles > 0 {
            self.result.balancing_periods += 1;
            self.result.balancing_cycles += applied.cycles;
        }
        for v in applied.events {
            self.log(true, v);
        }
        Ok(())
    }

    /// Runs one segment, stopping any charge as soon as a cell is full.
    fn evolve(&mut self, current_a: f64, duration_h: f64) -> Result<()> {
        let pack = self.ctx.pack;
        let bounds = pack.bounds(&self.states);
        let active = if current_a < 0.0 {
            time_to_first_full(pack, &self.states, &bounds, current_a, duration_h)
        } else {
            duration_h
        };
        for (p, s) in pack.cells.iter().zip(self.states.iter_mut()) {
            *s = evolve_charge(s, p, current_a, active)?;
            if active < duration_h {
                *s = evolve_charge(s, p, 0.0, duration_h - active)?;
            }
        }
        Ok(())
    }

    /// Records bound crossings at the end of `segment` and clamps the
    /// charges to what the cells can physically hold.
    fn check(&mut self, segment: usize) {
        let pack = self.ctx.pack;
        let bounds = pack.bounds(&self.states);
        for i in 0..pack.len() {
            if let Some(v) = check_bounds(i, segment, self.states[i].charge_ah, bounds[i]) {
                self.log(false, v);
            }
            let s = &mut self.states[i];
            s.charge_ah = s.charge_ah.clamp(0.0, bounds[i].1);
        }
    }

    fn run_mission(&mut self, mission: &Mission) -> Result<()> {
        let n = mission.len();
        let mut k = 0;
        while k < n {
            let rest = mission.window(k..n)?;
            let w = window_len(self.kind, &rest);
            let mut plan = TransferPlan::zero();
            let mut predicted = None;
            if let StrategyKind::Wla { .. } = self.kind {
                let out = plan_window(self.kind, &self.ctx, &self.states, &rest)?;
                self.result.plan_stats.add(&out.stats);
                self.fallback = out.stats.timeouts + out.stats.infeasible > 0;
                if !out.plan.is_zero() {
                    let mut inst = WlaInstance::new(
                        self.ctx.pack.clone(),
                        self.states.clone(),
                        rest.window(0..w)?,
                        *self.ctx.arch,
                        *self.ctx.vmap,
                    );
                    inst.margin_ah = self.ctx.margin_ah;
                    let report = verify_plan(&out.plan, &inst)?;
                    predicted = Some(report.charges_ah.iter().map(|c| c[w]).collect::<Vec<_>>());
                }
                plan = out.plan;
            } else {
                self.result.plan_stats.windows += 1;
            }
            for (s, seg) in rest.segments()[..w].iter().enumerate() {
                if seg.is_idle() {
                    // transfers run during the idle time and are booked at its end
                    let start = self.states.clone();
                    self.evolve(0.0, seg.duration_h())?;
                    self.transfer(&plan, &start, s, seg.duration_h())?;
                } else {
                    self.evolve(seg.current_a, seg.duration_h())?;
                }
                self.check(k + s);
            }
            if let Some(pred) = predicted {
                let drift = pred
                    .iter()
                    .zip(&self.states)
                    .map(|(p, s)| (p - s.charge_ah).abs())
                    .fold(0.0, f64::max);
                self.result.max_plan_drift_ah = self.result.max_plan_drift_ah.max(drift);
            }
            k += w;
        }
        Ok(())
    }

    fn top_up(&mut self) {
        for (p, s) in self.ctx.pack.cells.iter().zip(self.states.iter_mut()) {
            let cap = s.effective_capacity_ah(p);
            if s.charge_ah < cap {
                s.ah_throughput += cap - s.charge_ah;
                s.charge_ah = cap;
            }
        }
    }

    fn age(&mut self, aging: &AgingParams) -> Result<()> {
        for (p, s) in self.ctx.pack.cells.iter().zip(self.states.iter_mut()) {
            apply_aging(s, p, aging)?;
            s.charge_ah = s.charge_ah.min(s.effective_capacity_ah(p));
        }
        Ok(())
    }
}

/// Random stream deciding which pooled mission each drive day uses. It
/// depends only on the scenario and the pattern, so every strategy drives the
/// same days.
fn mission_rng(seed: u64, pattern: UsagePattern) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(100 + pattern.stream());
    rng
}

/// The mission of one drive day: the pooled walk with charging stopped at the
/// first full cell, followed by idle time up to the end of the day.
pub fn day_mission(pack: &PackConfig, states: &[CellState], walk: &Mission, cfg: &SimConfig) -> Result<Mission> {
    let m = with_charger_cutoff(pack, states, &walk.starting_at(0.0))?;
    let idle = (cfg.day_h - m.duration_h()).max(cfg.overnight_h);
    if idle <= 0.0 {
        return Ok(m);
    }
    Ok(m.extended(0.0, idle)?.merge_idle())
}

/// Simulates days until the weakest cell reaches end of life.
///
/// Drive days draw a mission from the scenario pool; rest days are one idle
/// period. Aging is applied after every day.
pub fn simulate_lifespan(
    scenario: &Scenario,
    kind: StrategyKind,
    pattern: UsagePattern,
    cfg: &SimConfig,
    solver: &dyn SolverAdapter,
) -> Result<SimResult> {
    kind.validate()?;
    cfg.validate()?;
    if scenario.missions.is_empty() {
        return Err(invalid("scenario has no missions"));
    }
    let pack = &scenario.pack;
    let mut run = Run {
        ctx: PlanContext {
            pack,
            arch: &cfg.arch,
            vmap: &cfg.voltage,
            solver,
            budget: cfg.budget(),
            margin_ah: cfg.margin_ah,
        },
        kind,
        max_logged: cfg.max_logged_events,
        states: pack.full_states(),
        day: 0,
        fallback: false,
        result: SimResult {
            scenario_id: scenario.id,
            scenario_seed: scenario.seed,
            strategy: kind.label(),
            kind,
            pattern,
            lifespan_days: 0,
            reached_end_of_life: false,
            drive_days: 0,
            balancing_periods: 0,
            balancing_cycles: 0,
            plan_stats: PlanStats::default(),
            floor_violations: 0,
            fallback_floor_violations: 0,
            ceiling_violations: 0,
            transfer_events: 0,
            events: Vec::new(),
            max_plan_drift_ah: 0.0,
            min_soh_trace: Vec::new(),
            mean_soh_trace: Vec::new(),
            final_soh: Vec::new(),
        },
    };
    let rest_day = Mission::from_durations(0.0, &[(0.0, cfg.day_h)])?;
    let mut rng = mission_rng(scenario.seed, pattern);
    while run.day < cfg.max_days {
        if pattern.is_drive_day(run.day) {
            let walk = &scenario.missions[rng.random_range(0..scenario.missions.len())];
            if cfg.top_up {
                run.top_up();
            }
            let mission = day_mission(pack, &run.states, walk, cfg)?;
            run.run_mission(&mission)?;
            run.result.drive_days += 1;
        } else {
            run.run_mission(&rest_day)?;
        }
        run.age(&cfg.aging)?;
        run.day += 1;
        let soh: Vec<f64> = run.states.iter().map(CellState::soh_pct).collect();
        let min = soh.iter().copied().fold(f64::INFINITY, f64::min);
        run.result.min_soh_trace.push(min);
        run.result.mean_soh_trace.push(soh.iter().sum::<f64>() / soh.len() as f64);
        if min <= crate::cell::END_OF_LIFE_SOH_PCT {
            run.result.reached_end_of_life = true;
            break;
        }
    }
    let mut result = run.result;
    result.lifespan_days = run.day;
    result.final_soh = run.states.iter().map(CellState::soh_pct).collect();
    debug_assert!(run
        .states
        .iter()
        .zip(&pack.cells)
        .all(|(s, p)| s.charge_ah <= s.effective_capacity_ah(p) + BOUND_TOL_AH));
    log::debug!(
        "scenario {} {} {}: {} days, {} balancing periods",
        result.scenario_id,
        result.strategy,
        pattern.label(),
        result.lifespan_days,
        result.balancing_periods
    );
    Ok(result)
}

/// Builds one solver per simulation.
pub type SolverFactory<'a> = dyn Fn() -> Box<dyn SolverAdapter> + Sync + 'a;

/// Runs every (scenario, strategy, pattern) combination on `jobs` worker
/// threads. Results come back in key order regardless of completion order.
pub fn run_grid(
    scenarios: &[Scenario],
    strategies: &[StrategyKind],
    patterns: &[UsagePattern],
    cfg: &SimConfig,
    jobs: usize,
    make_solver: &SolverFactory<'_>,
) -> Result<Vec<SimResult>> {
    let mut tasks = Vec::new();
    for s in scenarios {
        for &k in strategies {
            for &p in patterns {
                tasks.push((s, k, p));
            }
        }
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| invalid(format!("worker pool: {e}")))?;
    pool.install(|| {
        tasks
            .par_iter()
            .map(|&(s, k, p)| simulate_lifespan(s, k, p, cfg, make_solver().as_ref()))
            .collect()
    })
}

/// One (scenario, pattern) row of a two-strategy comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub scenario_id: usize,
    pub pattern: UsagePattern,
    pub lifespan_a: u64,
    pub lifespan_b: u64,
    /// `lifespan_a - lifespan_b`.
    pub delta_days: i64,
    pub periods_a: u64,
    pub periods_b: u64,
    /// `periods_a / periods_b`, absent when `b` never balanced.
    pub op_ratio: Option<f64>,
    pub floor_violations_a: u64,
    pub floor_violations_b: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatternSummary {
    pub pattern: UsagePattern,
    pub rows: usize,
    pub mean_delta_days: f64,
    /// Total balancing periods of `a` over those of `b`.
    pub op_ratio: Option<f64>,
    pub floor_violations_a: u64,
    pub floor_violations_b: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub a: String,
    pub b: String,
    pub rows: Vec<ComparisonRow>,
    pub per_pattern: Vec<PatternSummary>,
}

fn ratio(a: u64, b: u64) -> Option<f64> {
    (b > 0).then(|| a as f64 / b as f64)
}

/// Compares strategy `a` against strategy `b` on every (scenario, pattern)
/// they share. All results must agree on each scenario's seed.
pub fn compare(results: &[SimResult], a: &str, b: &str) -> Result<Comparison> {
    let mut seeds: BTreeMap<usize, u64> = BTreeMap::new();
    for r in results {
        if let Some(&s) = seeds.get(&r.scenario_id) {
            if s != r.scenario_seed {
                return Err(Error::SeedMismatch(format!(
                    "scenario {} has seeds {s} and {}",
                    r.scenario_id, r.scenario_seed
                )));
            }
        } else {
            seeds.insert(r.scenario_id, r.scenario_seed);
        }
    }
    let pick = |name: &str| -> BTreeMap<(usize, UsagePattern), &SimResult> {
        results
            .iter()
            .filter(|r| r.strategy == name)
            .map(|r| ((r.scenario_id, r.pattern), r))
            .collect()
    };
    let (ra, rb) = (pick(a), pick(b));
    let rows: Vec<ComparisonRow> = ra
        .iter()
        .filter_map(|(key, x)| rb.get(key).map(|y| (x, y)))
        .map(|(x, y)| ComparisonRow {
            scenario_id: x.scenario_id,
            pattern: x.pattern,
            lifespan_a: x.lifespan_days,
            lifespan_b: y.lifespan_days,
            delta_days: x.lifespan_days as i64 - y.lifespan_days as i64,
            periods_a: x.balancing_periods,
            periods_b: y.balancing_periods,
            op_ratio: ratio(x.balancing_periods, y.balancing_periods),
            floor_violations_a: x.floor_violations,
            floor_violations_b: y.floor_violations,
        })
        .collect();
    let mut per_pattern = Vec::new();
    for p in UsagePattern::ALL {
        let sel: Vec<&ComparisonRow> = rows.iter().filter(|r| r.pattern == p).collect();
        if sel.is_empty() {
            continue;
        }
        let sum = |f: fn(&ComparisonRow) -> u64| sel.iter().map(|r| f(r)).sum::<u64>();
        per_pattern.push(PatternSummary {
            pattern: p,
            rows: sel.len(),
            mean_delta_days: sel.iter().map(|r| r.delta_days as f64).sum::<f64>() / sel.len() as f64,
            op_ratio: ratio(sum(|r| r.periods_a), sum(|r| r.periods_b)),
            floor_violations_a: sum(|r| r.floor_violations_a),
            floor_violations_b: sum(|r| r.floor_violations_b),
        });
    }
    Ok(Comparison {
        a: a.to_string(),
        b: b.to_string(),
        rows,
        per_pattern,
    })
}

/// Outcome of one directional check over a result set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

/// Directional lifespan and mission-completion checks of the WLA strategy
/// against the `none` and `opportunistic` baselines:
///
/// - WLA lives at least as long as opportunistic in every (scenario, pattern);
/// - WLA lives within 1% of no balancing;
/// - WLA balances in at most 10% as many idle periods as opportunistic;
/// - WLA runs whose every window was solved record no floor violation, while
///   no balancing records at least one somewhere.
pub fn desk_checks(results: &[SimResult]) -> Result<Vec<Check>> {
    let vs_opp = compare(results, "wla", "opportunistic")?;
    let vs_none = compare(results, "wla", "none")?;
    if vs_opp.rows.is_empty() || vs_none.rows.is_empty() {
        return Err(invalid("the checks need none, opportunistic and wla results"));
    }
    let row_key = |r: &ComparisonRow| format!("scenario {} pattern {}", r.scenario_id, r.pattern.label());
    let failing = |rows: Vec<String>| if rows.is_empty() { "all rows".to_string() } else { rows.join(", ") };

    let bad: Vec<String> = vs_opp.rows.iter().filter(|r| r.lifespan_a < r.lifespan_b).map(row_key).collect();
    let lifespan_vs_opp = Check {
        name: "lifespan(wla) >= lifespan(opportunistic)".into(),
        passed: bad.is_empty(),
        detail: failing(bad),
    };
    let bad: Vec<String> = vs_none
        .rows
        .iter()
        .filter(|r| (r.delta_days.unsigned_abs() as f64) > 0.01 * r.lifespan_b as f64)
        .map(row_key)
        .collect();
    let lifespan_vs_none = Check {
        name: "lifespan(wla) within 1% of lifespan(none)".into(),
        passed: bad.is_empty(),
        detail: failing(bad),
    };
    let bad: Vec<String> = vs_opp
        .rows
        .iter()
        .filter(|r| r.periods_a as f64 > 0.1 * r.periods_b as f64)
        .map(row_key)
        .collect();
    let ops = Check {
        name: "balancing periods(wla) <= 10% of opportunistic".into(),
        passed: bad.is_empty(),
        detail: failing(bad),
    };
    let bad: Vec<String> = results
        .iter()
        .filter(|r| r.strategy == "wla" && r.plan_stats.infeasible + r.plan_stats.timeouts == 0 && r.floor_violations > 0)
        .map(|r| format!("scenario {} pattern {}", r.scenario_id, r.pattern.label()))
        .collect();
    let none_fails = results.iter().any(|r| r.strategy == "none" && r.floor_violations > 0);
    let completion = Check {
        name: "wla floor violations only where a window fell back; none fails somewhere".into(),
        passed: bad.is_empty() && none_fails,
        detail: if !none_fails {
            "no-balancing runs record no floor violation".into()
        } else {
            failing(bad)
        },
    };
    Ok(vec![lifespan_vs_opp, lifespan_vs_none, ops, completion])
}
