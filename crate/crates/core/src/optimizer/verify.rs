use serde::Serialize;

use crate::cell::BOUND_TOL_AH;
use crate::error::Result;
use crate::physics::{q_rx, q_tx, r_path, r_source, transfer_cycle_time};

use super::wla::WlaInstance;
use super::TransferPlan;

/// Coefficient tables rebuilt straight from the physics functions, without
/// going through the program builder.
pub(crate) struct Evaluator {
    pub n: usize,
    pub n_seg: usize,
    pub charges: Vec<Vec<f64>>,
    pub bounds: Vec<(f64, f64)>,
    /// `required[i][k]`, the planner's bounds at boundary `k`.
    pub required: Vec<Vec<(f64, f64)>>,
    pub base: Vec<f64>,
    pub periods: Vec<EvalPeriod>,
}

pub(crate) struct EvalPeriod {
    pub segment: usize,
    pub duration_s: f64,
    pub budget_s: f64,
    pub tx: Vec<f64>,
    /// `rx[i][j]` and `tc[i][j]`, `None` for pairs that cannot transfer.
    pub rx: Vec<Vec<Option<f64>>>,
    pub tc: Vec<Vec<Option<f64>>>,
}

impl Evaluator {
    pub fn new(inst: &WlaInstance) -> Result<Self> {
        let traj = inst.trajectory()?;
        let n = inst.pack.len();
        let n_seg = inst.window.len();
        let mut periods = Vec::new();
        for (l, seg) in inst.window.segments().iter().enumerate() {
            if seg.current_a != 0.0 {
                continue;
            }
            let volts: Vec<f64> = (0..n)
                .map(|i| {
                    let cap = inst.states[i].effective_capacity_ah(&inst.pack.cells[i]);
                    inst.vmap.at_soc_clamped(traj.charges[i][l] / cap)
                })
                .collect();
            let tx = (0..n)
                .map(|i| q_tx(volts[i], r_source(&inst.pack.cells[i], &inst.arch), &inst.arch))
                .collect::<Result<Vec<_>>>()?;
            let mut rx = vec![vec![None; n]; n];
            let mut tc = vec![vec![None; n]; n];
            for i in 0..n {
                for j in 0..n {
                    let d = i.abs_diff(j);
                    if d == 0 || d > inst.arch.max_distance {
                        continue;
                    }
                    let r = r_path(i, j, &inst.pack.cells[j], &inst.arch)?;
                    rx[i][j] = Some(q_rx(volts[j], r, &inst.arch)?);
                    tc[i][j] = Some(transfer_cycle_time(volts[i], volts[j], d, &inst.arch));
                }
            }
            periods.push(EvalPeriod {
                segment: l,
                duration_s: seg.duration_h() * 3600.0,
                budget_s: inst.time_budget_s(l),
                tx,
                rx,
                tc,
            });
        }
        let required = (0..n)
            .map(|i| (0..=n_seg).map(|k| inst.required_bounds(&traj, i, k)).collect())
            .collect();
        Ok(Self {
            n,
            n_seg,
            base: inst.base_throughput(&traj),
            bounds: traj.bounds.clone(),
            charges: traj.charges,
            required,
            periods,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundSlack {
    pub cell: usize,
    /// Segment at whose end the charge is checked.
    pub segment: usize,
    pub floor_ah: f64,
    pub ceiling_ah: f64,
}

/// Constraint slacks of a plan; negative slack means a violated constraint.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyReport {
    pub shape_errors: Vec<String>,
    /// `(segment, seconds left)` for every idle segment of the window.
    pub time_slack_s: Vec<(usize, f64)>,
    pub bound_slack: Vec<BoundSlack>,
    /// Balanced charge of each cell after every segment.
    pub charges_ah: Vec<Vec<f64>>,
    pub throughput_ah: Vec<f64>,
    pub max_throughput_ah: f64,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.shape_errors.is_empty()
            && self.time_slack_s.iter().all(|t| t.1 >= 0.0)
            && self
                .bound_slack
                .iter()
                .all(|b| b.floor_ah >= -BOUND_TOL_AH && b.ceiling_ah >= -BOUND_TOL_AH)
    }

    pub fn min_bound_slack(&self) -> f64 {
        self.bound_slack
            .iter()
            .map(|b| b.floor_ah.min(b.ceiling_ah))
            .fold(f64::INFINITY, f64::min)
    }
}

/// Replays a plan on the predicted window and measures every time and charge
/// constraint against the pack's real bounds.
pub fn verify_plan(plan: &TransferPlan, inst: &WlaInstance) -> Result<VerifyReport> {
    let ev = Evaluator::new(inst)?;
    let n = ev.n;
    let mut shape_errors = Vec::new();
    let mut net = vec![vec![0.0; ev.n_seg]; n];
    let mut thr = vec![0.0; n];
    let mut used = vec![0.0; ev.periods.len()];
    for period in &plan.periods {
        let Some(pi) = ev.periods.iter().position(|p| p.segment == period.segment) else {
            shape_errors.push(format!("segment {} is not an idle segment of the window", period.segment));
            continue;
        };
        let p = &ev.periods[pi];
        for &(i, j, c) in &period.counts {
            let (Some(rx), Some(tc)) = (
                p.rx.get(i).and_then(|r| r.get(j)).copied().flatten(),
                p.tc.get(i).and_then(|r| r.get(j)).copied().flatten(),
            ) else {
                shape_errors.push(format!("cells {i} -> {j} cannot transfer"));
                continue;
            };
            let c = c as f64;
            used[pi] += c * tc;
            net[i][period.segment] -= c * p.tx[i];
            net[j][period.segment] += c * rx;
            thr[i] += c * p.tx[i];
            thr[j] += c * rx;
        }
    }

    let time_slack_s = ev.periods.iter().zip(&used).map(|(p, u)| (p.segment, p.duration_s - u)).collect();
    let mut bound_slack = Vec::with_capacity(n * ev.n_seg);
    let mut charges_ah = Vec::with_capacity(n);
    for i in 0..n {
        let (floor, ceiling) = ev.bounds[i];
        let mut moved = 0.0;
        let mut row = vec![ev.charges[i][0]];
        for k in 1..=ev.n_seg {
            moved += net[i][k - 1];
            let q = ev.charges[i][k] + moved / 3600.0;
            row.push(q);
            bound_slack.push(BoundSlack {
                cell: i,
                segment: k - 1,
                floor_ah: q - floor,
                ceiling_ah: ceiling - q,
            });
        }
        charges_ah.push(row);
    }
    let throughput_ah: Vec<f64> = ev.base.iter().zip(&thr).map(|(b, t)| b + t / 3600.0).collect();
    let max_throughput_ah = throughput_ah.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(VerifyReport {
        shape_errors,
        time_slack_s,
        bound_slack,
        charges_ah,
        throughput_ah,
        max_throughput_ah,
    })
}
