use std::time::Duration;

use crate::cell::{evolve_charge, CellState, PackConfig, VoltageMap};
use crate::error::Result;
use crate::ilp::{Cmp, IlpModel, VarId};
use crate::physics::ArchParams;
use crate::solver::{SolveStatus, SolverAdapter};

use super::{count_upper_bound, voltages_at, PeriodCoefs, TransferPlan};

/// One idle period as seen by the SOC-equalising baseline.
#[derive(Debug, Clone, PartialEq)]
pub struct OppInstance {
    pub pack: PackConfig,
    /// States at the start of the idle period.
    pub states: Vec<CellState>,
    pub duration_h: f64,
    pub arch: ArchParams,
    pub vmap: VoltageMap,
    pub count_cap: Option<u64>,
}

impl OppInstance {
    /// Charges at the end of the period without balancing.
    pub fn idle_end_charges(&self) -> Result<Vec<f64>> {
        self.pack
            .cells
            .iter()
            .zip(&self.states)
            .map(|(p, s)| Ok(evolve_charge(s, p, 0.0, self.duration_h)?.charge_ah))
            .collect()
    }

    /// Largest minus smallest SOC after applying `net_c` coulombs per cell.
    pub fn spread_after(&self, net_c: &[f64]) -> Result<f64> {
        let end = self.idle_end_charges()?;
        let socs: Vec<f64> = (0..self.pack.len())
            .map(|i| (end[i] + net_c[i] / 3600.0) / self.states[i].effective_capacity_ah(&self.pack.cells[i]))
            .collect();
        let hi = socs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lo = socs.iter().copied().fold(f64::INFINITY, f64::min);
        Ok(hi - lo)
    }
}

#[derive(Debug, Clone)]
pub struct OppProgram {
    pub model: IlpModel,
    /// `(from, to, variable)` per count variable.
    pub vars: Vec<(usize, usize, VarId)>,
    /// Scale turning SOC into the model's spread units.
    pub soc_scale: f64,
}

/// Builds the spread-minimising program for one idle period.
///
/// Spread variables are SOC multiplied by `3600 * q_ref` (the mean aged
/// capacity in coulombs), which keeps every coefficient near one.
pub fn build_opportunistic_ilp(inst: &OppInstance) -> Result<OppProgram> {
    inst.pack.validate()?;
    inst.arch.validate()?;
    let n = inst.pack.len();
    let charges: Vec<f64> = inst.states.iter().map(|s| s.charge_ah).collect();
    let volts = voltages_at(&inst.pack, &inst.states, &charges, &inst.vmap);
    let coefs = PeriodCoefs::at_voltages(&inst.pack, &volts, &inst.arch)?;
    let end = inst.idle_end_charges()?;
    let bounds = inst.pack.bounds(&inst.states);
    let caps: Vec<f64> = bounds.iter().map(|b| b.1).collect();
    let q_ref = caps.iter().sum::<f64>() / n as f64;
    let scale = 3600.0 * q_ref;

    let mut model = IlpModel::new();
    let s_max = model.add_var("s_max", false, (f64::NEG_INFINITY, f64::INFINITY), 1.0);
    let s_min = model.add_var("s_min", false, (f64::NEG_INFINITY, f64::INFINITY), -1.0);
    let budget = (inst.duration_h * 3600.0 - super::wla::TIME_GUARD_S).max(0.0);
    let ub = count_upper_bound(budget, coefs.min_cycle_time(), inst.count_cap);
    let mut vars = Vec::with_capacity(coefs.pairs.len());
    let mut net: Vec<Vec<(VarId, f64)>> = vec![Vec::new(); n];
    let mut time_row = Vec::with_capacity(coefs.pairs.len());
    for p in &coefs.pairs {
        let v = model.add_var(format!("c_{}_{}", p.from, p.to), true, (0.0, ub), 0.0);
        vars.push((p.from, p.to, v));
        time_row.push((v, p.tc));
        net[p.from].push((v, -coefs.tx[p.from]));
        net[p.to].push((v, p.rx));
    }
    if !time_row.is_empty() {
        model.add_row("time", time_row, Cmp::Le, budget);
    }
    for i in 0..n {
        let (floor, ceiling) = bounds[i];
        if !net[i].is_empty() {
            model.add_row(format!("floor_{i}"), net[i].clone(), Cmp::Ge, 3600.0 * (floor - end[i]));
            model.add_row(format!("ceil_{i}"), net[i].clone(), Cmp::Le, 3600.0 * (ceiling - end[i]));
        }
        // scaled SOC_i = (3600 end_i + net_i) * q_ref / cap_i
        let w = q_ref / caps[i];
        let soc0 = 3600.0 * end[i] * w;
        let mut hi: Vec<_> = net[i].iter().map(|&(v, c)| (v, -c * w)).collect();
        hi.push((s_max, 1.0));
        model.add_row(format!("smax_{i}"), hi, Cmp::Ge, soc0);
        let mut lo: Vec<_> = net[i].iter().map(|&(v, c)| (v, -c * w)).collect();
        lo.push((s_min, 1.0));
        model.add_row(format!("smin_{i}"), lo, Cmp::Le, soc0);
    }
    Ok(OppProgram {
        model,
        vars,
        soc_scale: scale,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct OppOutcome {
    pub status: SolveStatus,
    /// Transfers for the period, filed under segment 0.
    pub plan: TransferPlan,
    /// SOC spread at the period end under the plan, when solved.
    pub spread: Option<f64>,
}

pub fn solve_opportunistic(inst: &OppInstance, solver: &dyn SolverAdapter, budget: Duration) -> Result<OppOutcome> {
    let program = build_opportunistic_ilp(inst)?;
    let sol = solver.solve(&program.model, budget)?;
    if !sol.status.has_solution() {
        return Ok(OppOutcome {
            status: sol.status,
            plan: TransferPlan::zero(),
            spread: None,
        });
    }
    let plan = TransferPlan::from_entries(
        program
            .vars
            .iter()
            .map(|&(i, j, v)| (0, i, j, sol.values[v.0].round().max(0.0) as u64)),
    );
    Ok(OppOutcome {
        status: sol.status,
        plan,
        spread: sol.objective.map(|o| o / program.soc_scale),
    })
}
