//! The three balancing policies behind one interface, and the physical
//! application of transfer counts to a pack.

use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::cell::{evolve_charge, CellState, PackConfig, VoltageMap, BOUND_TOL_AH};
use crate::error::{invalid, Result};
use crate::mission::{feasibility_report, Mission, Violation, ViolationKind};
use crate::optimizer::{solve_opportunistic, solve_wla, OppInstance, PeriodTransfers, TransferPlan, WlaInstance};
use crate::optimizer::{voltages_at, PeriodCoefs};
use crate::physics::ArchParams;
use crate::solver::{SolveStatus, SolverAdapter};

/// Which balancing policy drives a pack.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum StrategyKind {
    /// Never transfer charge.
    None,
    /// Equalise SOC in every idle period.
    Opportunistic,
    /// Minimise the peak Ah throughput over a knowledge window of
    /// `window_segments` segments; `None` means the whole day.
    Wla {
        #[serde(default)]
        window_segments: Option<usize>,
    },
}

impl StrategyKind {
    pub fn wla() -> Self {
        Self::Wla { window_segments: None }
    }

    pub fn validate(&self) -> Result<()> {
        if let Self::Wla {
            window_segments: Some(0),
        } = self
        {
            return Err(invalid("the knowledge window needs at least one segment"));
        }
        Ok(())
    }

    /// Short stable name used in result tables.
    pub fn label(&self) -> String {
        match self {
            Self::None => "none".into(),
            Self::Opportunistic => "opportunistic".into(),
            Self::Wla { window_segments: None } => "wla".into(),
            Self::Wla {
                window_segments: Some(w),
            } => format!("wla-w{w}"),
        }
    }
}

/// Everything a policy needs besides the pack state.
#[derive(Clone, Copy)]
pub struct PlanContext<'a> {
    pub pack: &'a PackConfig,
    pub arch: &'a ArchParams,
    pub vmap: &'a VoltageMap,
    pub solver: &'a dyn SolverAdapter,
    /// Time budget handed to each solver call.
    pub budget: Duration,
    /// Safety margin for the WLA bound rows, in Ah.
    pub margin_ah: f64,
}

/// Solver bookkeeping accumulated while planning.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanStats {
    pub windows: u64,
    pub solver_calls: u64,
    pub timeouts: u64,
    pub infeasible: u64,
}

impl PlanStats {
    pub(crate) fn record(&mut self, status: SolveStatus) {
        self.solver_calls += 1;
        match status {
            SolveStatus::Timeout => self.timeouts += 1,
            SolveStatus::Infeasible => self.infeasible += 1,
            SolveStatus::Optimal | SolveStatus::Feasible => {}
        }
    }

    pub fn add(&mut self, other: &PlanStats) {
        self.windows += other.windows;
        self.solver_calls += other.solver_calls;
        self.timeouts += other.timeouts;
        self.infeasible += other.infeasible;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WindowPlan {
    /// Transfers keyed by segment index inside the planned mission.
    pub plan: TransferPlan,
    pub stats: PlanStats,
}

/// Number of segments a policy plans at once from the start of `mission`.
pub fn window_len(kind: StrategyKind, mission: &Mission) -> usize {
    match kind {
        StrategyKind::Wla {
            window_segments: Some(w),
        } => w.min(mission.len()),
        _ => mission.len(),
    }
}

/// Plans transfers for the first [`window_len`] segments of `mission`,
/// starting from `states`.
///
/// WLA solves once for the whole window, and skips the solver when the window
/// is already feasible without balancing. Opportunistic solves once per idle
/// period, walking the prediction forward through its own transfers. Any
/// solver failure leaves the affected window or period without transfers.
pub fn plan_window(
    kind: StrategyKind,
    ctx: &PlanContext<'_>,
    states: &[CellState],
    mission: &Mission,
) -> Result<WindowPlan> {
    kind.validate()?;
    let w = window_len(kind, mission);
    let window = mission.window(0..w)?;
    let mut stats = PlanStats {
        windows: 1,
        ..PlanStats::default()
    };
    let plan = match kind {
        StrategyKind::None => TransferPlan::zero(),
        StrategyKind::Wla { .. } => {
            let mut inst = WlaInstance::new(ctx.pack.clone(), states.to_vec(), window, *ctx.arch, *ctx.vmap);
            inst.margin_ah = ctx.margin_ah;
            if feasibility_report(&inst.trajectory()?).is_empty() {
                TransferPlan::zero()
            } else {
                let out = solve_wla(&inst, ctx.solver, ctx.budget)?;
                stats.record(out.status);
                out.plan
            }
        }
        StrategyKind::Opportunistic => {
            let mut states = states.to_vec();
            let mut periods = Vec::new();
            for (l, seg) in window.segments().iter().enumerate() {
                let start = states.clone();
                for (p, s) in ctx.pack.cells.iter().zip(states.iter_mut()) {
                    *s = evolve_charge(s, p, seg.current_a, seg.duration_h())?;
                }
                if seg.is_idle() {
                    let (transfers, status) = plan_idle_period(ctx, &start, seg.duration_h())?;
                    stats.record(status);
                    if let Some(mut t) = transfers {
                        t.segment = l;
                        apply_transfers_from(ctx.pack, &start, &mut states, &t, ctx.arch, ctx.vmap)?;
                        periods.push(t);
                    }
                }
            }
            TransferPlan { periods }
        }
    };
    Ok(WindowPlan { plan, stats })
}

/// One opportunistic decision for an idle period of `duration_h` that starts
/// at `states`. Returns the transfers (filed under segment 0) when there are
/// any, and the solver status.
pub fn plan_idle_period(
    ctx: &PlanContext<'_>,
    states: &[CellState],
    duration_h: f64,
) -> Result<(Option<PeriodTransfers>, SolveStatus)> {
    let inst = OppInstance {
        pack: ctx.pack.clone(),
        states: states.to_vec(),
        duration_h,
        arch: *ctx.arch,
        vmap: *ctx.vmap,
        count_cap: None,
    };
    let out = solve_opportunistic(&inst, ctx.solver, ctx.budget)?;
    Ok((out.plan.periods.into_iter().next(), out.status))
}

/// What applying one period's transfers did.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Applied {
    /// Transfer cycles executed.
    pub cycles: u64,
    /// Cells pushed outside `[0, capacity]` by the transfers.
    pub events: Vec<Violation>,
}

/// Runs the transfer cycles of one idle period on the pack.
///
/// Per-cycle charges are evaluated at the voltages the cells have right now,
/// which can differ slightly from those the plan was built with.
pub fn apply_transfers(
    pack: &PackConfig,
    states: &mut [CellState],
    transfers: &PeriodTransfers,
    arch: &ArchParams,
    vmap: &VoltageMap,
) -> Result<Applied> {
    let start = states.to_vec();
    apply_transfers_from(pack, &start, states, transfers, arch, vmap)
}

/// Like [`apply_transfers`], with per-cycle charges evaluated at the voltages
/// of `start`, the states at the beginning of the idle period. Used to book
/// the transfers at the end of the period, after its self-discharge.
pub fn apply_transfers_from(
    pack: &PackConfig,
    start: &[CellState],
    states: &mut [CellState],
    transfers: &PeriodTransfers,
    arch: &ArchParams,
    vmap: &VoltageMap,
) -> Result<Applied> {
    if transfers.counts.is_empty() {
        return Ok(Applied::default());
    }
    let charges: Vec<f64> = start.iter().map(|s| s.charge_ah).collect();
    let volts = voltages_at(pack, start, &charges, vmap);
    let coefs = PeriodCoefs::at_voltages(pack, &volts, arch)?;
    let mut cycles = 0;
    for &(i, j, c) in &transfers.counts {
        let pair = coefs
            .pairs
            .iter()
            .find(|p| p.from == i && p.to == j)
            .ok_or_else(|| invalid(format!("cells {i} -> {j} cannot exchange charge")))?;
        let sent = c as f64 * coefs.tx[i] / 3600.0;
        let got = c as f64 * pair.rx / 3600.0;
        states[i].charge_ah -= sent;
        states[i].ah_throughput += sent;
        states[j].charge_ah += got;
        states[j].ah_throughput += got;
        cycles += c;
    }
    let mut events = Vec::new();
    for (cell, (p, s)) in pack.cells.iter().zip(states.iter()).enumerate() {
        let cap = s.effective_capacity_ah(p);
        let kind = if s.charge_ah < -BOUND_TOL_AH {
            Some((ViolationKind::Floor, -s.charge_ah))
        } else if s.charge_ah > cap + BOUND_TOL_AH {
            Some((ViolationKind::Ceiling, s.charge_ah - cap))
        } else {
            None
        };
        if let Some((kind, magnitude_ah)) = kind {
            events.push(Violation {
                cell,
                segment: transfers.segment,
                kind,
                magnitude_ah,
            });
        }
    }
    Ok(Applied { cycles, events })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cell::CellParams;
    use crate::solver::{MicrolpAdapter, TimeoutAdapter};

    fn pack(n: usize) -> PackConfig {
        PackConfig::new(vec![CellParams::default(); n], 0.2).unwrap()
    }

    fn ctx<'a>(pack: &'a PackConfig, solver: &'a dyn SolverAdapter, arch: &'a ArchParams, vmap: &'a VoltageMap) -> PlanContext<'a> {
        PlanContext {
            pack,
            arch,
            vmap,
            solver,
            budget: Duration::from_secs(5),
            margin_ah: 0.0,
        }
    }

    #[test]
    fn labels_and_validation() {
        assert_eq!(StrategyKind::None.label(), "none");
        assert_eq!(StrategyKind::wla().label(), "wla");
        assert_eq!(StrategyKind::Wla { window_segments: Some(4) }.label(), "wla-w4");
        assert!(StrategyKind::Wla { window_segments: Some(0) }.validate().is_err());
        let text = serde_json::to_string(&StrategyKind::Wla { window_segments: Some(3) }).unwrap();
        assert_eq!(text, r#"{"kind":"wla","window_segments":3}"#);
        let back: StrategyKind = serde_json::from_str(r#"{"kind":"wla"}"#).unwrap();
        assert_eq!(back, StrategyKind::wla());
    }

    #[test]
    fn none_plans_nothing_and_skips_the_solver() {
        let pack = pack(3);
        let (arch, vmap) = (ArchParams::default(), VoltageMap::default());
        let solver = TimeoutAdapter::default();
        let c = ctx(&pack, &solver, &arch, &vmap);
        let mission = Mission::from_durations(0.0, &[(2.0, 0.5), (0.0, 1.0)]).unwrap();
        let out = plan_window(StrategyKind::None, &c, &pack.full_states(), &mission).unwrap();
        assert!(out.plan.is_zero());
        assert_eq!(solver.calls(), 0);
    }

    #[test]
    fn opportunistic_with_equal_socs_plans_nothing() {
        let pack = PackConfig::new(
            vec![
                CellParams {
                    i_sd_a: 0.0,
                    ..CellParams::default()
                };
                3
            ],
            0.2,
        )
        .unwrap();
        let (arch, vmap) = (ArchParams::default(), VoltageMap::default());
        let solver = MicrolpAdapter::default();
        let c = ctx(&pack, &solver, &arch, &vmap);
        let mission = Mission::from_durations(0.0, &[(0.0, 0.5), (1.0, 0.5), (0.0, 0.5)]).unwrap();
        let out = plan_window(StrategyKind::Opportunistic, &c, &pack.full_states(), &mission).unwrap();
        assert!(out.plan.is_zero());
        assert_eq!(out.stats.solver_calls, 2);
    }

    #[test]
    fn zero_transfers_leave_states_alone() {
        let pack = pack(2);
        let mut states = pack.full_states();
        let before = states.clone();
        let t = PeriodTransfers {
            segment: 0,
            counts: vec![],
        };
        let out = apply_transfers(&pack, &mut states, &t, &ArchParams::default(), &VoltageMap::default()).unwrap();
        assert_eq!(out.cycles, 0);
        assert_eq!(states, before);
    }
}
