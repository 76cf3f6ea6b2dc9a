//! Solver backends behind a small adapter trait.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::{Duration, Instant};

use microlp::{
    ComparisonOp, OptimizationDirection, Problem, ResumeOptions, Solution, SolveOptions, SolveOutcome,
    TerminationReason, Variable,
};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ilp::{Cmp, IlpModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Optimal,
    Feasible,
    Infeasible,
    Timeout,
}

impl SolveStatus {
    pub fn has_solution(self) -> bool {
        matches!(self, SolveStatus::Optimal | SolveStatus::Feasible)
    }
}

/// Raw backend answer on an [`IlpModel`].
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSolution {
    pub status: SolveStatus,
    /// One value per model variable; empty without a solution.
    pub values: Vec<f64>,
    pub objective: Option<f64>,
}

impl ModelSolution {
    pub fn without_solution(status: SolveStatus) -> Self {
        Self {
            status,
            values: Vec::new(),
            objective: None,
        }
    }
}

pub trait SolverAdapter: Send + Sync {
    fn name(&self) -> &str;

    fn solve(&self, model: &IlpModel, budget: Duration) -> Result<ModelSolution>;
}

/// Branch and bound through the `microlp` crate.
///
/// The search runs in node chunks so it can stop on an absolute gap as well as
/// a relative one. The node budget keeps runs reproducible; the wall-clock
/// budget is a last resort and yields [`SolveStatus::Timeout`].
#[derive(Debug, Clone)]
pub struct MicrolpAdapter {
    pub abs_gap: f64,
    pub rel_gap: f64,
    pub node_chunk: u64,
    pub node_budget: Option<u64>,
}

impl Default for MicrolpAdapter {
    fn default() -> Self {
        Self {
            abs_gap: 0.1,
            rel_gap: 1e-9,
            node_chunk: 200,
            node_budget: Some(20_000),
        }
    }
}

impl MicrolpAdapter {
    /// Settings that only stop at a proven optimum.
    pub fn exact() -> Self {
        Self {
            abs_gap: 0.0,
            rel_gap: 0.0,
            node_chunk: 10_000,
            node_budget: None,
        }
    }
}

fn int_bound(x: f64) -> Result<i32> {
    if x < i32::MIN as f64 || x > i32::MAX as f64 {
        return Err(Error::Solver(format!("integer bound {x} does not fit the backend")));
    }
    Ok(x as i32)
}

fn backend(e: microlp::Error) -> Error {
    Error::Solver(e.to_string())
}

fn build_problem(model: &IlpModel, relax: bool) -> Result<(Problem, Vec<Variable>)> {
    let mut p = Problem::new(OptimizationDirection::Minimize);
    let vars: Vec<_> = model
        .vars
        .iter()
        .map(|v| {
            Ok(if v.integer && !relax {
                p.add_integer_var(v.obj, (int_bound(v.lower.ceil())?, int_bound(v.upper.floor())?))
            } else {
                p.add_var(v.obj, (v.lower, v.upper))
            })
        })
        .collect::<Result<_>>()?;
    for r in &model.rows {
        let op = match r.cmp {
            Cmp::Le => ComparisonOp::Le,
            Cmp::Ge => ComparisonOp::Ge,
            Cmp::Eq => ComparisonOp::Eq,
        };
        let expr: Vec<_> = r.terms.iter().map(|&(v, c)| (vars[v.0], c)).collect();
        p.add_constraint(expr, op, r.rhs);
    }
    Ok((p, vars))
}

enum Relaxation {
    Infeasible,
    OutOfTime,
    Solved { bound: f64, incumbent: Option<Vec<f64>> },
}

const INT_TOL: f64 = 1e-6;

fn fractional(model: &IlpModel, sol: &Solution, vars: &[Variable]) -> Option<(usize, f64)> {
    // least fractional first: those roundings are the safest bets
    model
        .vars
        .iter()
        .zip(vars)
        .enumerate()
        .filter(|(_, (d, _))| d.integer)
        .map(|(k, (_, &v))| (k, sol.var_value_raw(v)))
        .filter(|(_, x)| (x - x.round()).abs() > INT_TOL)
        .min_by(|a, b| {
            let fa = (a.1 - a.1.round()).abs();
            let fb = (b.1 - b.1.round()).abs();
            fa.total_cmp(&fb).then(a.0.cmp(&b.0))
        })
}

/// Solves the LP relaxation and looks for an integer point near it: first by
/// rounding down, then by diving (repeatedly fixing the least fractional
/// integer variable to its nearest integer, or the other side when that is
/// infeasible, and re-solving).
fn relax_and_round(model: &IlpModel, abs_gap: f64, deadline: Instant) -> Result<Relaxation> {
    let (p, vars) = build_problem(model, true)?;
    let mut opts = SolveOptions::default();
    opts.time_limit = Some(deadline.saturating_duration_since(Instant::now()));
    let sol = match p.solve_with(opts) {
        Ok(SolveOutcome::Solution(s)) => s,
        Ok(SolveOutcome::Interrupted(_)) => return Ok(Relaxation::OutOfTime),
        Err(microlp::Error::Infeasible) => return Ok(Relaxation::Infeasible),
        Err(e) => return Err(backend(e)),
    };
    let bound = sol.objective();
    let floored = complete_floor(model, &sol, &vars, deadline)?;
    if let Some(x) = &floored {
        let inc = model.objective_value(x) - model.obj_offset;
        if inc - bound <= abs_gap {
            return Ok(Relaxation::Solved { bound, incumbent: floored });
        }
    }
    let dived = dive(model, sol, &vars, deadline)?;
    let incumbent = match (floored, dived) {
        (Some(a), Some(b)) => Some(if model.objective_value(&b) < model.objective_value(&a) { b } else { a }),
        (a, b) => a.or(b),
    };
    Ok(Relaxation::Solved { bound, incumbent })
}

/// Rounds every integer variable of the relaxation down and re-optimises the
/// continuous variables alone.
fn complete_floor(model: &IlpModel, sol: &Solution, vars: &[Variable], deadline: Instant) -> Result<Option<Vec<f64>>> {
    let mut x: Vec<f64> = model
        .vars
        .iter()
        .zip(vars)
        .map(|(d, &v)| {
            let raw = sol.var_value_raw(v);
            if d.integer {
                (raw + INT_TOL).floor().clamp(d.lower, d.upper)
            } else {
                raw
            }
        })
        .collect();
    let continuous: Vec<usize> = (0..model.vars.len()).filter(|&k| !model.vars[k].integer).collect();
    if continuous.is_empty() {
        return Ok((model.max_violation(&x) <= 1e-9).then_some(x));
    }
    let mut p = Problem::new(OptimizationDirection::Minimize);
    let mut slot = vec![None; model.vars.len()];
    for &k in &continuous {
        let d = &model.vars[k];
        slot[k] = Some(p.add_var(d.obj, (d.lower, d.upper)));
    }
    for r in &model.rows {
        let mut rhs = r.rhs;
        let mut expr = Vec::new();
        for &(v, c) in &r.terms {
            match slot[v.0] {
                Some(var) => expr.push((var, c)),
                None => rhs -= c * x[v.0],
            }
        }
        let ok = match r.cmp {
            Cmp::Le => rhs >= -1e-9,
            Cmp::Ge => rhs <= 1e-9,
            Cmp::Eq => rhs.abs() <= 1e-9,
        };
        if expr.is_empty() {
            if !ok {
                return Ok(None);
            }
            continue;
        }
        let op = match r.cmp {
            Cmp::Le => ComparisonOp::Le,
            Cmp::Ge => ComparisonOp::Ge,
            Cmp::Eq => ComparisonOp::Eq,
        };
        p.add_constraint(expr, op, rhs);
    }
    let mut opts = SolveOptions::default();
    opts.time_limit = Some(deadline.saturating_duration_since(Instant::now()));
    match p.solve_with(opts) {
        Ok(SolveOutcome::Solution(s)) => {
            for &k in &continuous {
                x[k] = s.var_value_raw(slot[k].expect("continuous slot"));
            }
            Ok(Some(x))
        }
        Ok(SolveOutcome::Interrupted(_)) | Err(microlp::Error::Infeasible) => Ok(None),
        Err(e) => Err(backend(e)),
    }
}

fn dive(model: &IlpModel, mut sol: Solution, vars: &[Variable], deadline: Instant) -> Result<Option<Vec<f64>>> {
    while let Some((k, x)) = fractional(model, &sol, &vars) {
        if Instant::now() >= deadline {
            return Ok(None);
        }
        let near = x.round();
        let far = if near > x { near - 1.0 } else { near + 1.0 };
        let mut next = None;
        for target in [near, far] {
            let d = &model.vars[k];
            if target < d.lower || target > d.upper {
                continue;
            }
            match sol.clone().fix_var(vars[k], target) {
                Ok(SolveOutcome::Solution(s)) => {
                    next = Some(s);
                    break;
                }
                Ok(SolveOutcome::Interrupted(_)) => return Ok(None),
                Err(microlp::Error::Infeasible) => {}
                Err(e) => return Err(backend(e)),
            }
        }
        match next {
            Some(s) => sol = s,
            None => return Ok(None),
        }
    }
    let values = model
        .vars
        .iter()
        .zip(vars)
        .map(|(d, &v)| {
            let x = sol.var_value_raw(v);
            if d.integer {
                x.round()
            } else {
                x
            }
        })
        .collect();
    Ok(Some(values))
}

impl MicrolpAdapter {
    fn gap_closed(&self, incumbent: f64, bound: f64) -> bool {
        let gap = incumbent - bound;
        gap <= self.abs_gap || gap <= self.rel_gap * incumbent.abs()
    }
}

impl SolverAdapter for MicrolpAdapter {
    fn name(&self) -> &str {
        "microlp"
    }

    fn solve(&self, model: &IlpModel, budget: Duration) -> Result<ModelSolution> {
        model.validate()?;
        let deadline = Instant::now() + budget;
        let solution = |status, values: Vec<f64>| ModelSolution {
            status,
            objective: Some(model.objective_value(&values)),
            values,
        };

        let hint = match relax_and_round(model, self.abs_gap, deadline)? {
            Relaxation::Infeasible => return Ok(ModelSolution::without_solution(SolveStatus::Infeasible)),
            Relaxation::OutOfTime => return Ok(ModelSolution::without_solution(SolveStatus::Timeout)),
            Relaxation::Solved { bound, incumbent } => {
                if let Some(x) = &incumbent {
                    let inc = model.objective_value(x) - model.obj_offset;
                    if inc - bound <= 0.0 {
                        return Ok(solution(SolveStatus::Optimal, incumbent.unwrap()));
                    }
                    if self.gap_closed(inc, bound) {
                        return Ok(solution(SolveStatus::Feasible, incumbent.unwrap()));
                    }
                }
                incumbent
            }
        };

        let (p, vars) = build_problem(model, false)?;
        let remaining = || deadline.saturating_duration_since(Instant::now());
        let mut opts = SolveOptions::default();
        opts.time_limit = Some(remaining());
        opts.node_limit = Some(self.node_chunk);
        opts.mip_gap = self.rel_gap;
        opts.warm_start = hint.map(|x| {
            model
                .vars
                .iter()
                .zip(&vars)
                .zip(x)
                .filter(|((d, _), _)| d.integer)
                .map(|((_, &v), x)| (v, x))
                .collect()
        });
        let mut outcome = match p.solve_with(opts) {
            Ok(o) => o,
            Err(microlp::Error::Infeasible) => return Ok(ModelSolution::without_solution(SolveStatus::Infeasible)),
            Err(e) => return Err(backend(e)),
        };
        let status = loop {
            let stats = outcome.stats();
            match outcome.termination_reason() {
                TerminationReason::ProvenOptimal => break SolveStatus::Optimal,
                TerminationReason::MipGap => break SolveStatus::Feasible,
                TerminationReason::TimeLimit => return Ok(ModelSolution::without_solution(SolveStatus::Timeout)),
                _ => {}
            }
            if let (Some(sol), Some(bound)) = (outcome.solution(), stats.best_bound) {
                if self.gap_closed(sol.objective(), bound) {
                    break SolveStatus::Feasible;
                }
            }
            if self.node_budget.is_some_and(|b| stats.nodes_solved >= b) {
                if outcome.solution().is_some() {
                    break SolveStatus::Feasible;
                }
                return Ok(ModelSolution::without_solution(SolveStatus::Timeout));
            }
            let mut resume = ResumeOptions::default();
            resume.time_limit = Some(remaining());
            resume.node_limit = Some(self.node_chunk);
            resume.mip_gap = Some(self.rel_gap);
            outcome = match outcome.resume_with(resume) {
                Ok(o) => o,
                Err(microlp::Error::Infeasible) => {
                    return Ok(ModelSolution::without_solution(SolveStatus::Infeasible))
                }
                Err(e) => return Err(backend(e)),
            };
        };
        let sol = outcome
            .solution()
            .ok_or_else(|| Error::Solver("finished without an incumbent".into()))?;
        let values: Vec<f64> = model
            .vars
            .iter()
            .zip(&vars)
            .map(|(d, &v)| if d.integer { sol.var_value(v).round() } else { sol.var_value(v) })
            .collect();
        Ok(solution(status, values))
    }
}

/// Adapter that always runs out of time, counting how often it was asked.
#[derive(Debug, Default)]
pub struct TimeoutAdapter {
    calls: AtomicUsize,
}

impl TimeoutAdapter {
    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::Relaxed)
    }
}

impl SolverAdapter for TimeoutAdapter {
    fn name(&self) -> &str {
        "timeout"
    }

    fn solve(&self, _model: &IlpModel, _budget: Duration) -> Result<ModelSolution> {
        self.calls.fetch_add(1, Ordering::Relaxed);
        Ok(ModelSolution::without_solution(SolveStatus::Timeout))
    }
}

/// Wraps another adapter and writes every model it receives to
/// `dir/model_NNNNNN.lp` before solving.
pub struct LpDumpAdapter<S> {
    pub inner: S,
    pub dir: std::path::PathBuf,
    count: AtomicUsize,
}

impl<S: SolverAdapter> LpDumpAdapter<S> {
    pub fn new(inner: S, dir: impl Into<std::path::PathBuf>) -> Result<Self> {
        let dir = dir.into();
        std::fs::create_dir_all(&dir)?;
        Ok(Self {
            inner,
            dir,
            count: AtomicUsize::new(0),
        })
    }
}

impl<S: SolverAdapter> SolverAdapter for LpDumpAdapter<S> {
    fn name(&self) -> &str {
        self.inner.name()
    }

    fn solve(&self, model: &IlpModel, budget: Duration) -> Result<ModelSolution> {
        let k = self.count.fetch_add(1, Ordering::Relaxed);
        std::fs::write(self.dir.join(format!("model_{k:06}.lp")), model.to_lp_string())?;
        self.inner.solve(model, budget)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn knapsack() -> IlpModel {
        // max 5a + 4b + 3c  s.t. 2a + 3b + c <= 5, 4a + b + 2c <= 11, 3a + 4b + 2c <= 8
        let mut m = IlpModel::new();
        let a = m.add_var("a", true, (0.0, 10.0), -5.0);
        let b = m.add_var("b", true, (0.0, 10.0), -4.0);
        let c = m.add_var("c", true, (0.0, 10.0), -3.0);
        m.add_row("r0", vec![(a, 2.0), (b, 3.0), (c, 1.0)], Cmp::Le, 5.0);
        m.add_row("r1", vec![(a, 4.0), (b, 1.0), (c, 2.0)], Cmp::Le, 11.0);
        m.add_row("r2", vec![(a, 3.0), (b, 4.0), (c, 2.0)], Cmp::Le, 8.0);
        m
    }

    #[test]
    fn solves_small_integer_program() {
        let out = MicrolpAdapter::exact()
            .solve(&knapsack(), Duration::from_secs(5))
            .unwrap();
        assert_eq!(out.status, SolveStatus::Optimal);
        // enumerated by hand: a=2, b=0, c=1 gives 13
        assert_eq!(out.objective, Some(-13.0));
        assert_eq!(knapsack().max_violation(&out.values), 0.0);
    }

    #[test]
    fn reports_infeasible() {
        let mut m = IlpModel::new();
        let x = m.add_var("x", true, (0.0, 3.0), 1.0);
        m.add_row("r", vec![(x, 2.0)], Cmp::Eq, 3.0);
        let out = MicrolpAdapter::exact().solve(&m, Duration::from_secs(5)).unwrap();
        assert_eq!(out.status, SolveStatus::Infeasible);
        assert!(out.values.is_empty());
    }

    #[test]
    fn timeout_mock_counts_calls() {
        let t = TimeoutAdapter::default();
        let out = t.solve(&knapsack(), Duration::from_secs(5)).unwrap();
        assert_eq!(out.status, SolveStatus::Timeout);
        assert_eq!(t.calls(), 1);
    }
}
