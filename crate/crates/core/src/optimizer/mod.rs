//! Integer programs that decide how many transfer cycles to run in each idle
//! period, plus an independent checker and an exhaustive oracle.

mod brute;
mod opportunistic;
mod plan;
mod verify;
mod wla;

pub use brute::brute_force_optimum;
pub use opportunistic::{build_opportunistic_ilp, solve_opportunistic, OppInstance, OppOutcome, OppProgram};
pub use plan::{PeriodTransfers, TransferPlan};
pub use verify::{verify_plan, BoundSlack, VerifyReport};
pub use wla::{build_wla_ilp, solve_wla, WlaInstance, WlaOutcome, WlaProgram, TIE_BREAK};

use crate::cell::{CellState, PackConfig, VoltageMap};
use crate::error::Result;
use crate::physics::{compatible_set, q_rx, q_tx, r_path, r_source, transfer_cycle_time, ArchParams};

/// Per-cycle quantities of one `from -> to` pair during one idle period.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct PairCoef {
    pub from: usize,
    pub to: usize,
    /// Coulombs received by `to`.
    pub rx: f64,
    /// Cycle time in seconds.
    pub tc: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct PeriodCoefs {
    /// Coulombs drawn from each cell per cycle it sources.
    pub tx: Vec<f64>,
    pub pairs: Vec<PairCoef>,
}

impl PeriodCoefs {
    pub fn at_voltages(pack: &PackConfig, voltages: &[f64], arch: &ArchParams) -> Result<Self> {
        let n = pack.len();
        let tx = pack
            .cells
            .iter()
            .zip(voltages)
            .map(|(c, &v)| q_tx(v, r_source(c, arch), arch))
            .collect::<Result<Vec<_>>>()?;
        let mut pairs = Vec::new();
        for i in 0..n {
            for j in compatible_set(i, n, arch) {
                pairs.push(PairCoef {
                    from: i,
                    to: j,
                    rx: q_rx(voltages[j], r_path(i, j, &pack.cells[j], arch)?, arch)?,
                    tc: transfer_cycle_time(voltages[i], voltages[j], i.abs_diff(j), arch),
                });
            }
        }
        Ok(Self { tx, pairs })
    }

    pub fn min_cycle_time(&self) -> f64 {
        self.pairs.iter().map(|p| p.tc).fold(f64::INFINITY, f64::min)
    }
}

/// Cell voltages implied by charges, relative to each cell's aged capacity.
pub(crate) fn voltages_at(pack: &PackConfig, states: &[CellState], charges: &[f64], vmap: &VoltageMap) -> Vec<f64> {
    pack.cells
        .iter()
        .zip(states)
        .zip(charges)
        .map(|((p, s), &q)| vmap.at_soc_clamped(q / s.effective_capacity_ah(p)))
        .collect()
}

/// Largest count a single variable can take in an idle period of `budget_s` seconds.
pub(crate) fn count_upper_bound(budget_s: f64, min_cycle_s: f64, cap: Option<u64>) -> f64 {
    let by_time = (budget_s / min_cycle_s).floor().max(0.0);
    match cap {
        Some(c) => by_time.min(c as f64),
        None => by_time,
    }
}
