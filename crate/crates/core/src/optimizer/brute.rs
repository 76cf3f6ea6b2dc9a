use crate::error::{Error, Result};
use crate::solver::SolveStatus;

use super::verify::Evaluator;
use super::wla::{WlaInstance, WlaOutcome, TIE_BREAK};
use super::TransferPlan;

const MAX_CELLS: usize = 4;
const MAX_PERIODS: usize = 2;
const MAX_CAP: u64 = 6;
/// Upper limit on the number of complete assignments.
const MAX_ASSIGNMENTS: f64 = 1e8;

struct Var {
    period: usize,
    from: usize,
    to: usize,
    tx: f64,
    rx: f64,
    tc: f64,
    ub: u64,
}

struct Search<'a> {
    ev: &'a Evaluator,
    vars: Vec<Var>,
    counts: Vec<u64>,
    used: Vec<f64>,
    /// net[i][p]: coulombs gained by cell i in period p
    net: Vec<Vec<f64>>,
    thr: Vec<f64>,
    extra: f64,
    best: Option<(f64, Vec<u64>)>,
}

impl Search<'_> {
    /// Objective with the tie-break term, in coulombs.
    fn value(&self) -> f64 {
        let peak = self
            .ev
            .base
            .iter()
            .zip(&self.thr)
            .map(|(b, t)| 3600.0 * b + t)
            .fold(f64::NEG_INFINITY, f64::max);
        peak + TIE_BREAK * self.extra
    }

    fn feasible(&self) -> bool {
        let ev = self.ev;
        (0..ev.n).all(|i| {
            (1..=ev.n_seg).all(|k| {
                let moved: f64 = ev
                    .periods
                    .iter()
                    .enumerate()
                    .filter(|(_, p)| p.segment < k)
                    .map(|(pi, _)| self.net[i][pi])
                    .sum();
                let q = ev.charges[i][k] + moved / 3600.0;
                let (lo, hi) = ev.required[i][k];
                q >= lo && q <= hi
            })
        })
    }

    fn run(&mut self, v: usize) {
        // every coefficient is non-negative, so adding counts never lowers the value
        if let Some((best, _)) = &self.best {
            if self.value() >= *best {
                return;
            }
        }
        if v == self.vars.len() {
            if self.feasible() {
                self.best = Some((self.value(), self.counts.clone()));
            }
            return;
        }
        let (p, i, j, tx, rx, tc, ub) = {
            let x = &self.vars[v];
            (x.period, x.from, x.to, x.tx, x.rx, x.tc, x.ub)
        };
        let budget = self.ev.periods[p].budget_s;
        for c in 0..=ub {
            if c > 0 {
                if self.used[p] + tc > budget {
                    break;
                }
                self.used[p] += tc;
                self.net[i][p] -= tx;
                self.net[j][p] += rx;
                self.thr[i] += tx;
                self.thr[j] += rx;
                self.extra += tx + rx;
            }
            self.counts[v] = c;
            self.run(v + 1);
        }
        let c = self.counts[v] as f64;
        self.used[p] -= c * tc;
        self.net[i][p] += c * tx;
        self.net[j][p] -= c * rx;
        self.thr[i] -= c * tx;
        self.thr[j] -= c * rx;
        self.extra -= c * (tx + rx);
        self.counts[v] = 0;
    }
}

/// Exhaustive search over every count assignment up to `count_cap`, for tiny
/// instances. Uses the same objective and bounds as the WLA program, but
/// rebuilds all coefficients from the physics functions.
pub fn brute_force_optimum(inst: &WlaInstance, count_cap: u64) -> Result<WlaOutcome> {
    let ev = Evaluator::new(inst)?;
    if ev.n > MAX_CELLS || ev.periods.len() > MAX_PERIODS || count_cap > MAX_CAP {
        return Err(Error::InstanceTooLarge(format!(
            "{} cells, {} idle periods, cap {count_cap}",
            ev.n,
            ev.periods.len()
        )));
    }
    let mut vars = Vec::new();
    for (pi, p) in ev.periods.iter().enumerate() {
        for i in 0..ev.n {
            for j in 0..ev.n {
                if let (Some(rx), Some(tc)) = (p.rx[i][j], p.tc[i][j]) {
                    let by_time = (p.budget_s / tc).floor().max(0.0) as u64;
                    vars.push(Var {
                        period: pi,
                        from: i,
                        to: j,
                        tx: p.tx[i],
                        rx,
                        tc,
                        ub: count_cap.min(by_time),
                    });
                }
            }
        }
    }
    let assignments: f64 = vars.iter().map(|v| (v.ub + 1) as f64).product();
    if assignments > MAX_ASSIGNMENTS {
        return Err(Error::InstanceTooLarge(format!("{assignments:e} assignments")));
    }
    let mut s = Search {
        ev: &ev,
        counts: vec![0; vars.len()],
        used: vec![0.0; ev.periods.len()],
        net: vec![vec![0.0; ev.periods.len()]; ev.n],
        thr: vec![0.0; ev.n],
        extra: 0.0,
        best: None,
        vars,
    };
    s.run(0);
    let Some((_, counts)) = s.best.take() else {
        return Ok(WlaOutcome {
            status: SolveStatus::Infeasible,
            plan: TransferPlan::zero(),
            objective_ah: None,
        });
    };
    let plan = TransferPlan::from_entries(
        s.vars
            .iter()
            .zip(&counts)
            .map(|(v, &c)| (ev.periods[v.period].segment, v.from, v.to, c)),
    );
    let peak = ev
        .base
        .iter()
        .enumerate()
        .map(|(i, b)| {
            let t: f64 = s
                .vars
                .iter()
                .zip(&counts)
                .map(|(v, &c)| {
                    let c = c as f64;
                    (if v.from == i { c * v.tx } else { 0.0 }) + (if v.to == i { c * v.rx } else { 0.0 })
                })
                .sum();
            b + t / 3600.0
        })
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(WlaOutcome {
        status: SolveStatus::Optimal,
        plan,
        objective_ah: Some(peak),
    })
}
