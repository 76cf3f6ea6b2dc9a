use std::time::Duration;

use crate::cell::{CellState, PackConfig, VoltageMap, BOUND_TOL_AH};
use crate::error::Result;
use crate::ilp::{Cmp, IlpModel, VarId};
use crate::mission::{predict_trajectory, ChargeTrajectory, Mission};
use crate::physics::ArchParams;
use crate::solver::{SolveStatus, SolverAdapter};

use super::{count_upper_bound, voltages_at, PeriodCoefs, TransferPlan};

/// Weight of the total balancing throughput, in the objective, relative to
/// the maximum per-cell throughput. It only separates plans that tie on the
/// maximum, e.g. it rules out transfers that nothing needs.
pub const TIE_BREAK: f64 = 1e-5;

/// Idle time held back from every period, in seconds, to absorb solver
/// feasibility tolerances.
pub(crate) const TIME_GUARD_S: f64 = 1e-6;

/// Everything the planner knows at the start of a knowledge window.
#[derive(Debug, Clone, PartialEq)]
pub struct WlaInstance {
    pub pack: PackConfig,
    pub states: Vec<CellState>,
    pub window: Mission,
    pub arch: ArchParams,
    pub vmap: VoltageMap,
    /// Optional cap on every count variable.
    pub count_cap: Option<u64>,
    /// Extra charge, in Ah, kept between a balanced cell and a bound it would
    /// otherwise cross. Absorbs the drift between planning and application
    /// voltages.
    pub margin_ah: f64,
}

impl WlaInstance {
    pub fn new(pack: PackConfig, states: Vec<CellState>, window: Mission, arch: ArchParams, vmap: VoltageMap) -> Self {
        Self {
            pack,
            states,
            window,
            arch,
            vmap,
            count_cap: None,
            margin_ah: 0.0,
        }
    }

    pub fn trajectory(&self) -> Result<ChargeTrajectory> {
        predict_trajectory(&self.pack, &self.states, &self.window)
    }

    /// Bounds a balanced charge must respect at boundary `k` (after `k`
    /// segments). Where the unbalanced prediction is within its bound, the
    /// margin never asks for more than that prediction already achieves, so a
    /// feasible window stays feasible without transfers. Where it is not, the
    /// full margin applies.
    pub fn required_bounds(&self, traj: &ChargeTrajectory, cell: usize, k: usize) -> (f64, f64) {
        let (floor, ceiling) = traj.bounds[cell];
        let q = traj.charges[cell][k];
        let lo = if q >= floor - BOUND_TOL_AH {
            (floor + self.margin_ah).min(q)
        } else {
            floor + self.margin_ah
        };
        let hi = if q <= ceiling + BOUND_TOL_AH {
            (ceiling - self.margin_ah).max(q)
        } else {
            ceiling - self.margin_ah
        };
        (lo, hi)
    }

    /// Transfer time available in an idle segment, in seconds.
    pub fn time_budget_s(&self, segment: usize) -> f64 {
        (self.window.segments()[segment].duration_h() * 3600.0 - TIME_GUARD_S).max(0.0)
    }

    /// Idle segments of the window, in order.
    pub fn idle_segments(&self) -> Vec<usize> {
        self.window.idle_indices(self.window.len()).expect("window is non-empty")
    }

    /// Ah throughput of each cell at the window end without balancing.
    pub fn base_throughput(&self, traj: &ChargeTrajectory) -> Vec<f64> {
        self.states
            .iter()
            .zip(&traj.throughput)
            .map(|(s, seg)| s.ah_throughput + seg.iter().sum::<f64>())
            .collect()
    }
}

/// The WLA program together with what is needed to read a plan back.
#[derive(Debug, Clone)]
pub struct WlaProgram {
    pub model: IlpModel,
    /// `(segment, from, to, variable)` for every count variable.
    pub vars: Vec<(usize, usize, usize, VarId)>,
    pub z: VarId,
    pub trajectory: ChargeTrajectory,
    pub base_ah: Vec<f64>,
    /// Bound rows that no idle period can influence and that are already violated.
    pub fixed_violations: usize,
}

impl WlaProgram {
    pub fn decode(&self, values: &[f64]) -> TransferPlan {
        TransferPlan::from_entries(
            self.vars
                .iter()
                .map(|&(l, i, j, v)| (l, i, j, values[v.0].round().max(0.0) as u64)),
        )
    }
}

/// Builds the min-max throughput program over the knowledge window.
///
/// All rows are in coulombs. With `F` the largest unbalanced throughput, the
/// objective is `3600 F + z` where `z >= 3600 (base_i - F) + throughput_i(c)`
/// for every cell, so the model value divided by 3600 is the maximum
/// end-of-window Ah throughput.
pub fn build_wla_ilp(inst: &WlaInstance) -> Result<WlaProgram> {
    inst.pack.validate()?;
    inst.arch.validate()?;
    let traj = inst.trajectory()?;
    let n = inst.pack.len();
    let n_seg = inst.window.len();
    let base = inst.base_throughput(&traj);
    let f = base.iter().copied().fold(f64::NEG_INFINITY, f64::max);

    let mut model = IlpModel::new();
    model.obj_offset = 3600.0 * f;
    let z = model.add_var("z", false, (0.0, f64::INFINITY), 1.0);

    // net charge (C) and throughput (C) of each cell, per idle period
    let mut vars = Vec::new();
    let mut net: Vec<Vec<Vec<(VarId, f64)>>> = vec![Vec::new(); n];
    let mut thr: Vec<Vec<(VarId, f64)>> = vec![Vec::new(); n];
    let idle = inst.idle_segments();
    for &l in &idle {
        let charges: Vec<f64> = traj.charges.iter().map(|c| c[l]).collect();
        let volts = voltages_at(&inst.pack, &inst.states, &charges, &inst.vmap);
        let coefs = PeriodCoefs::at_voltages(&inst.pack, &volts, &inst.arch)?;
        let budget = inst.time_budget_s(l);
        let ub = count_upper_bound(budget, coefs.min_cycle_time(), inst.count_cap);
        let mut time_row = Vec::with_capacity(coefs.pairs.len());
        let mut period_net: Vec<Vec<(VarId, f64)>> = vec![Vec::new(); n];
        for p in &coefs.pairs {
            let tx = coefs.tx[p.from];
            let v = model.add_var(format!("c_{}_{}_{}", p.from, p.to, l), true, (0.0, ub), TIE_BREAK * (tx + p.rx));
            vars.push((l, p.from, p.to, v));
            time_row.push((v, p.tc));
            period_net[p.from].push((v, -tx));
            period_net[p.to].push((v, p.rx));
            thr[p.from].push((v, tx));
            thr[p.to].push((v, p.rx));
        }
        if !time_row.is_empty() {
            model.add_row(format!("time_{l}"), time_row, Cmp::Le, budget);
        }
        for (i, terms) in period_net.into_iter().enumerate() {
            net[i].push(terms);
        }
    }

    let mut fixed_violations = 0;
    for i in 0..n {
        for k in 1..=n_seg {
            // idle periods that end at or before boundary k
            let terms: Vec<(VarId, f64)> = idle
                .iter()
                .zip(&net[i])
                .filter(|(&l, _)| l < k)
                .flat_map(|(_, t)| t.iter().copied())
                .collect();
            let (lo, hi) = inst.required_bounds(&traj, i, k);
            let q = traj.charges[i][k];
            if terms.is_empty() {
                if q < lo || q > hi {
                    fixed_violations += 1;
                }
                continue;
            }
            model.add_row(format!("floor_{i}_{k}"), terms.clone(), Cmp::Ge, 3600.0 * (lo - q));
            model.add_row(format!("ceil_{i}_{k}"), terms, Cmp::Le, 3600.0 * (hi - q));
        }
        let mut row = thr[i].iter().map(|&(v, c)| (v, -c)).collect::<Vec<_>>();
        row.push((z, 1.0));
        model.add_row(format!("maxthr_{i}"), row, Cmp::Ge, 3600.0 * (base[i] - f));
    }

    Ok(WlaProgram {
        model,
        vars,
        z,
        trajectory: traj,
        base_ah: base,
        fixed_violations,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct WlaOutcome {
    pub status: SolveStatus,
    /// The all-zero plan unless the status carries a solution.
    pub plan: TransferPlan,
    /// Largest end-of-window Ah throughput under the plan.
    pub objective_ah: Option<f64>,
}

/// Builds and solves the program; anything short of a solution falls back to
/// the all-zero plan.
pub fn solve_wla(inst: &WlaInstance, solver: &dyn SolverAdapter, budget: Duration) -> Result<WlaOutcome> {
    let program = build_wla_ilp(inst)?;
    if program.fixed_violations > 0 {
        return Ok(WlaOutcome {
            status: SolveStatus::Infeasible,
            plan: TransferPlan::zero(),
            objective_ah: None,
        });
    }
    let sol = solver.solve(&program.model, budget)?;
    if !sol.status.has_solution() {
        return Ok(WlaOutcome {
            status: sol.status,
            plan: TransferPlan::zero(),
            objective_ah: None,
        });
    }
    let plan = program.decode(&sol.values);
    let objective = program.model.obj_offset + sol.values[program.z.0];
    Ok(WlaOutcome {
        status: sol.status,
        plan,
        objective_ah: Some(objective / 3600.0),
    })
}
