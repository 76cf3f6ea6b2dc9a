//! Series-cell electrical state, charge evolution under load and empirical aging.
//!
//! Each cell in a [`PackConfig`] stands for one parallel group of the physical
//! pack. Charges are in ampere-hours, currents in amperes (positive while
//! discharging), times in hours.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// State of health at or below which a cell is at end of life.
pub const END_OF_LIFE_SOH_PCT: f64 = 80.0;

/// Absolute slack (Ah) used when comparing charges against their bounds.
pub const BOUND_TOL_AH: f64 = 1e-9;

/// Static manufacturing parameters of one series cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CellParams {
    /// Nominal capacity of the new cell.
    pub q_max_ah: f64,
    /// Self-discharge current.
    pub i_sd_a: f64,
    /// Charging efficiency, `<= 1`.
    pub alpha_c: f64,
    /// Discharge overhead factor, `>= 1`.
    pub alpha_d: f64,
    /// Internal resistance.
    pub r_cell_ohm: f64,
}

impl Default for CellParams {
    fn default() -> Self {
        Self {
            q_max_ah: 2.5,
            i_sd_a: 0.175e-3,
            alpha_c: 1.0,
            alpha_d: 1.0,
            r_cell_ohm: 0.025,
        }
    }
}

impl CellParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.q_max_ah > 0.0 && self.q_max_ah.is_finite()) {
            return Err(invalid(format!("q_max_ah must be positive, got {}", self.q_max_ah)));
        }
        if !(self.i_sd_a >= 0.0 && self.i_sd_a.is_finite()) {
            return Err(invalid(format!("i_sd_a must be non-negative, got {}", self.i_sd_a)));
        }
        if !(self.alpha_c > 0.0 && self.alpha_c <= 1.0) {
            return Err(invalid(format!("alpha_c must lie in (0, 1], got {}", self.alpha_c)));
        }
        if !(self.alpha_d >= 1.0 && self.alpha_d.is_finite()) {
            return Err(invalid(format!("alpha_d must be >= 1, got {}", self.alpha_d)));
        }
        if !(self.r_cell_ohm > 0.0 && self.r_cell_ohm.is_finite()) {
            return Err(invalid(format!("r_cell_ohm must be positive, got {}", self.r_cell_ohm)));
        }
        Ok(())
    }

    /// Rate factor applied to the load current: `alpha_c` while charging,
    /// `alpha_d` while discharging and zero when idle.
    pub fn rate(&self, current_a: f64) -> f64 {
        if current_a < 0.0 {
            self.alpha_c
        } else if current_a > 0.0 {
            self.alpha_d
        } else {
            0.0
        }
    }
}

/// Evolving state of one cell.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct CellState {
    /// Remaining charge.
    pub charge_ah: f64,
    /// Cumulative charged plus discharged charge, including balancing transfers.
    pub ah_throughput: f64,
    /// Cumulative elapsed time.
    pub usage_time_h: f64,
    /// Capacity lost so far, in percentage points of the nominal capacity.
    pub capacity_loss_pct: f64,
}

impl CellState {
    /// A new cell charged to its nominal capacity.
    pub fn full(params: &CellParams) -> Self {
        Self {
            charge_ah: params.q_max_ah,
            ..Self::default()
        }
    }

    pub fn soh_pct(&self) -> f64 {
        100.0 - self.capacity_loss_pct
    }

    /// Nominal capacity scaled by the current state of health.
    pub fn effective_capacity_ah(&self, params: &CellParams) -> f64 {
        params.q_max_ah * self.soh_pct() / 100.0
    }

    pub fn soc(&self, params: &CellParams) -> f64 {
        self.charge_ah / self.effective_capacity_ah(params)
    }
}

/// Coefficients of the empirical capacity-loss model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgingParams {
    pub a: f64,
    pub b: f64,
}

impl Default for AgingParams {
    /// Values fitted for a 22 °C operating point.
    fn default() -> Self {
        Self {
            a: 0.00083,
            b: 0.3789,
        }
    }
}

impl AgingParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.a > 0.0 && self.a.is_finite()) || !(self.b > 0.0 && self.b.is_finite()) {
            return Err(invalid(format!(
                "aging coefficients must be positive, got a={} b={}",
                self.a, self.b
            )));
        }
        Ok(())
    }
}

/// Ordered series chain of cells plus the usable-capacity floor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PackConfig {
    pub cells: Vec<CellParams>,
    /// Minimum charge as a fraction of each cell's capacity.
    pub uc_fraction: f64,
}

impl PackConfig {
    pub fn new(cells: Vec<CellParams>, uc_fraction: f64) -> Result<Self> {
        let pack = Self { cells, uc_fraction };
        pack.validate()?;
        Ok(pack)
    }

    pub fn validate(&self) -> Result<()> {
        if self.cells.len() < 2 {
            return Err(invalid(format!(
                "a pack needs at least 2 cells, got {}",
                self.cells.len()
            )));
        }
        if !(0.0..1.0).contains(&self.uc_fraction) {
            return Err(invalid(format!(
                "uc_fraction must lie in [0, 1), got {}",
                self.uc_fraction
            )));
        }
        self.cells.iter().try_for_each(CellParams::validate)
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    /// Fresh, fully charged states for every cell.
    pub fn full_states(&self) -> Vec<CellState> {
        self.cells.iter().map(CellState::full).collect()
    }

    /// Per-cell `(floor, ceiling)` charge bounds in Ah for the given states.
    pub fn bounds(&self, states: &[CellState]) -> Vec<(f64, f64)> {
        self.cells
            .iter()
            .zip(states)
            .map(|(p, s)| {
                let cap = s.effective_capacity_ah(p);
                (self.uc_fraction * cap, cap)
            })
            .collect()
    }
}

/// Linear open-circuit voltage model, `V = v_min + (v_max - v_min) * SOC`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VoltageMap {
    pub v_min: f64,
    pub v_max: f64,
}

impl Default for VoltageMap {
    fn default() -> Self {
        Self {
            v_min: 3.0,
            v_max: 4.2,
        }
    }
}

impl VoltageMap {
    pub fn validate(&self) -> Result<()> {
        if !(self.v_min > 0.0 && self.v_max > self.v_min && self.v_max.is_finite()) {
            return Err(invalid(format!(
                "voltage map needs 0 < v_min < v_max, got {} / {}",
                self.v_min, self.v_max
            )));
        }
        Ok(())
    }

    pub fn at_soc(&self, soc: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&soc) {
            return Err(Error::SocOutOfRange(soc));
        }
        Ok(self.v_min + (self.v_max - self.v_min) * soc)
    }

    /// Like [`VoltageMap::at_soc`], with the SOC clamped into `[0, 1]`.
    ///
    /// Planners use this on predicted trajectories, which may leave the
    /// physical range before balancing corrects them.
    pub fn at_soc_clamped(&self, soc: f64) -> f64 {
        self.v_min + (self.v_max - self.v_min) * soc.clamp(0.0, 1.0)
    }

    pub fn voltage(&self, params: &CellParams, state: &CellState) -> Result<f64> {
        self.at_soc(state.soc(params))
    }
}

/// Evolves one cell under a constant current for `dt_h` hours.
///
/// The charge is not clamped: callers compare against the pack bounds and
/// record violations themselves.
pub fn evolve_charge(
    state: &CellState,
    params: &CellParams,
    current_a: f64,
    dt_h: f64,
) -> Result<CellState> {
    if dt_h.is_nan() || dt_h < 0.0 {
        return Err(Error::NegativeTimeStep(dt_h));
    }
    let rate = params.rate(current_a);
    Ok(CellState {
        charge_ah: state.charge_ah - (rate * current_a + params.i_sd_a) * dt_h,
        ah_throughput: state.ah_throughput + (rate * current_a.abs() + params.i_sd_a) * dt_h,
        usage_time_h: state.usage_time_h + dt_h,
        capacity_loss_pct: state.capacity_loss_pct,
    })
}

/// Percentage of capacity lost after `ah_throughput` Ah at average C-rate `c_rate`.
pub fn capacity_loss(aging: &AgingParams, c_rate: f64, ah_throughput: f64) -> Result<f64> {
    if c_rate.is_nan() || c_rate < 0.0 {
        return Err(invalid(format!("C-rate must be non-negative, got {c_rate}")));
    }
    if ah_throughput.is_nan() || ah_throughput < 0.0 {
        return Err(invalid(format!(
            "Ah throughput must be non-negative, got {ah_throughput}"
        )));
    }
    Ok(aging.a * (aging.b * c_rate).exp() * ah_throughput)
}

/// State of health derived from a capacity loss.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Soh {
    pub pct: f64,
    pub end_of_life: bool,
}

pub fn soh(capacity_loss_pct: f64) -> Soh {
    let pct = 100.0 - capacity_loss_pct;
    Soh {
        pct,
        end_of_life: pct <= END_OF_LIFE_SOH_PCT,
    }
}

/// Lifetime-average C-rate: throughput over capacity times usage time.
pub fn crate_of(ah_throughput: f64, q_max_ah: f64, usage_time_h: f64) -> Result<f64> {
    if !(usage_time_h > 0.0) {
        return Err(Error::ZeroUsageTime);
    }
    Ok(ah_throughput / (q_max_ah * usage_time_h))
}

/// Recomputes the capacity loss of a cell from its cumulative throughput and
/// usage time. Loss never decreases: rest periods lower the average C-rate but
/// do not restore capacity.
pub fn apply_aging(state: &mut CellState, params: &CellParams, aging: &AgingParams) -> Result<()> {
    if state.usage_time_h <= 0.0 {
        return Ok(());
    }
    let c_rate = crate_of(
        state.ah_throughput,
        state.effective_capacity_ah(params),
        state.usage_time_h,
    )?;
    let loss = capacity_loss(aging, c_rate, state.ah_throughput)?.min(100.0);
    state.capacity_loss_pct = state.capacity_loss_pct.max(loss);
    Ok(())
}
