//! Backend-neutral mixed-integer linear program (always a minimisation).

use std::fmt::Write as _;

use crate::error::{invalid, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct VarId(pub usize);

#[derive(Debug, Clone, PartialEq)]
pub struct VarDef {
    pub name: String,
    pub integer: bool,
    pub lower: f64,
    pub upper: f64,
    pub obj: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Cmp {
    Le,
    Ge,
    Eq,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub name: String,
    pub terms: Vec<(VarId, f64)>,
    pub cmp: Cmp,
    pub rhs: f64,
}

impl Row {
    pub fn activity(&self, x: &[f64]) -> f64 {
        self.terms.iter().map(|&(v, c)| c * x[v.0]).sum()
    }

    /// Signed slack: non-negative when satisfied.
    pub fn slack(&self, x: &[f64]) -> f64 {
        let a = self.activity(x);
        match self.cmp {
            Cmp::Le => self.rhs - a,
            Cmp::Ge => a - self.rhs,
            Cmp::Eq => -(a - self.rhs).abs(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct IlpModel {
    pub vars: Vec<VarDef>,
    pub rows: Vec<Row>,
    /// Constant added to the linear objective.
    pub obj_offset: f64,
}

impl IlpModel {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_var(&mut self, name: impl Into<String>, integer: bool, bounds: (f64, f64), obj: f64) -> VarId {
        self.vars.push(VarDef {
            name: name.into(),
            integer,
            lower: bounds.0,
            upper: bounds.1,
            obj,
        });
        VarId(self.vars.len() - 1)
    }

    pub fn add_row(&mut self, name: impl Into<String>, terms: Vec<(VarId, f64)>, cmp: Cmp, rhs: f64) {
        self.rows.push(Row {
            name: name.into(),
            terms,
            cmp,
            rhs,
        });
    }

    pub fn n_vars(&self) -> usize {
        self.vars.len()
    }

    pub fn n_integer(&self) -> usize {
        self.vars.iter().filter(|v| v.integer).count()
    }

    pub fn validate(&self) -> Result<()> {
        for v in &self.vars {
            if v.lower.is_nan() || v.upper.is_nan() || v.lower > v.upper || v.lower == f64::INFINITY {
                return Err(invalid(format!("variable {} has bounds [{}, {}]", v.name, v.lower, v.upper)));
            }
            if v.integer && !(v.lower.is_finite() && v.upper.is_finite()) {
                return Err(invalid(format!("integer variable {} needs finite bounds", v.name)));
            }
            if !v.obj.is_finite() {
                return Err(invalid(format!("variable {} has objective {}", v.name, v.obj)));
            }
        }
        for r in &self.rows {
            if !r.rhs.is_finite() {
                return Err(invalid(format!("row {} has rhs {}", r.name, r.rhs)));
            }
            for &(v, c) in &r.terms {
                if v.0 >= self.vars.len() {
                    return Err(invalid(format!("row {} references undeclared variable {}", r.name, v.0)));
                }
                if !c.is_finite() {
                    return Err(invalid(format!("row {} has coefficient {c}", r.name)));
                }
            }
        }
        Ok(())
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.obj_offset + self.vars.iter().zip(x).map(|(v, xi)| v.obj * xi).sum::<f64>()
    }

    /// Largest bound, row or integrality violation of `x` (0 when feasible).
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let mut worst = 0.0f64;
        for (v, &xi) in self.vars.iter().zip(x) {
            worst = worst.max(v.lower - xi).max(xi - v.upper);
            if v.integer {
                worst = worst.max((xi - xi.round()).abs());
            }
        }
        for r in &self.rows {
            worst = worst.max(-r.slack(x));
        }
        worst
    }

    /// CPLEX LP text, for feeding the model to an external solver.
    pub fn to_lp_string(&self) -> String {
        let mut out = String::from("\\ cellbal model\nMinimize\n obj:");
        let mut any = false;
        for v in self.vars.iter().filter(|v| v.obj != 0.0) {
            write_term(&mut out, v.obj, &v.name);
            any = true;
        }
        if !any {
            out.push_str(" 0");
        }
        if self.obj_offset != 0.0 {
            let _ = write!(out, "\n\\ objective offset {:e}", self.obj_offset);
        }
        out.push_str("\nSubject To\n");
        for r in &self.rows {
            let _ = write!(out, " {}:", r.name);
            for &(v, c) in &r.terms {
                write_term(&mut out, c, &self.vars[v.0].name);
            }
            let op = match r.cmp {
                Cmp::Le => "<=",
                Cmp::Ge => ">=",
                Cmp::Eq => "=",
            };
            let _ = writeln!(out, " {op} {:e}", r.rhs);
        }
        out.push_str("Bounds\n");
        for v in &self.vars {
            let lo = if v.lower == f64::NEG_INFINITY {
                "-inf".to_string()
            } else {
                format!("{:e}", v.lower)
            };
            let hi = if v.upper == f64::INFINITY {
                "+inf".to_string()
            } else {
                format!("{:e}", v.upper)
            };
            let _ = writeln!(out, " {lo} <= {} <= {hi}", v.name);
        }
        let ints: Vec<_> = self.vars.iter().filter(|v| v.integer).map(|v| v.name.as_str()).collect();
        if !ints.is_empty() {
            out.push_str("General\n");
            for chunk in ints.chunks(8) {
                let _ = writeln!(out, " {}", chunk.join(" "));
            }
        }
        out.push_str("End\n");
        out
    }
}

fn write_term(out: &mut String, c: f64, name: &str) {
    let sign = if c < 0.0 { '-' } else { '+' };
    let _ = write!(out, " {sign} {:e} {name}", c.abs());
}
