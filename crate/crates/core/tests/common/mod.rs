#![allow(dead_code)]

use cellbal::cell::{CellParams, CellState, PackConfig, VoltageMap};
use cellbal::error::Error;
use cellbal::mission::{predict_trajectory, Mission};
use cellbal::optimizer::{brute_force_optimum, WlaInstance};
use cellbal::physics::ArchParams;
use rand::Rng;

pub const UC: f64 = 0.2;

pub fn cell(q_max_ah: f64, i_sd_a: f64) -> CellParams {
    CellParams {
        q_max_ah,
        i_sd_a,
        ..CellParams::default()
    }
}

pub fn pack(cells: Vec<CellParams>) -> PackConfig {
    PackConfig::new(cells, UC).unwrap()
}

pub fn states(charges: &[f64]) -> Vec<CellState> {
    charges
        .iter()
        .map(|&q| CellState {
            charge_ah: q,
            ..CellState::default()
        })
        .collect()
}

pub fn instance(pack: PackConfig, states: Vec<CellState>, window: Mission) -> WlaInstance {
    WlaInstance::new(pack, states, window, ArchParams::default(), VoltageMap::default())
}

const MS_TO_H: f64 = 1.0 / 3.6e6;

/// A tiny WLA window whose cells finish within a few micro-amp-hours of
/// their floors, so that a handful of transfer cycles decides feasibility.
///
/// The window opens with an idle period (so every bound row can be reached by
/// some transfer) and has one or two idle periods of a few milliseconds each.
/// The count cap is the largest value up to 5 that keeps exhaustive search
/// tractable.
pub fn small_wla_instance(rng: &mut impl Rng) -> WlaInstance {
    let n = rng.random_range(2..=4usize);
    let cells: Vec<CellParams> = (0..n)
        .map(|_| CellParams {
            q_max_ah: rng.random_range(2.3..2.7),
            i_sd_a: rng.random_range(0.0..0.3e-3),
            alpha_c: 1.0,
            alpha_d: rng.random_range(1.0..1.001),
            r_cell_ohm: rng.random_range(0.015..0.04),
        })
        .collect();
    let pack = pack(cells);
    let idle = |rng: &mut dyn rand::RngCore| (0.0, rng.random_range(0.3..3.0) * MS_TO_H);
    let drive = |rng: &mut dyn rand::RngCore| (rng.random_range(0.5..3.0), rng.random_range(0.01..0.3));
    let mut pieces = vec![idle(rng), drive(rng)];
    if rng.random_bool(0.5) {
        pieces.push(idle(rng));
        pieces.push(drive(rng));
    }
    let window = Mission::from_durations(rng.random_range(0.0..100.0), &pieces).unwrap();

    let mut st: Vec<CellState> = pack
        .cells
        .iter()
        .map(|c| CellState {
            charge_ah: c.q_max_ah,
            ah_throughput: rng.random_range(0.0..5e-6),
            usage_time_h: 0.0,
            capacity_loss_pct: rng.random_range(0.0..10.0),
        })
        .collect();
    // the trajectory is the start charge plus a fixed offset, so shifting the
    // start puts each cell's lowest point exactly where we want it
    let traj = predict_trajectory(&pack, &st, &window).unwrap();
    for (i, s) in st.iter_mut().enumerate() {
        let lowest = traj.charges[i][1..].iter().copied().fold(f64::INFINITY, f64::min) - s.charge_ah;
        let floor = traj.bounds[i].0;
        s.charge_ah = floor + rng.random_range(-1.5e-6..3e-6) - lowest;
    }
    let mut inst = instance(pack, st, window);
    inst.margin_ah = if rng.random_bool(0.5) { 0.0 } else { 5e-7 };
    let mut cap = 5;
    loop {
        match brute_force_optimum(&inst, cap) {
            Err(Error::InstanceTooLarge(_)) if cap > 1 => cap -= 1,
            _ => break,
        }
    }
    inst.count_cap = Some(cap);
    inst
}

/// Charge carried while an RL branch driven by `v` ramps from zero to
/// `i_peak` (`sign = 1`), or while it decays from `i_peak` to zero against
/// `v` (`sign = -1`). Integrates `L di/dt = sign v - r i` and `dq/dt = i`
/// with classical Runge-Kutta steps, then closes the final partial step by
/// linear interpolation on the current.
pub fn rl_charge(v: f64, r: f64, l: f64, i_peak: f64, sign: f64) -> f64 {
    let f = |i: f64| (sign * v - r * i) / l;
    let (start, stop) = if sign > 0.0 { (0.0, i_peak) } else { (i_peak, 0.0) };
    let dt = l * i_peak / v / 200_000.0;
    let (mut i, mut q) = (start, 0.0);
    loop {
        let k1 = f(i);
        let k2 = f(i + 0.5 * dt * k1);
        let k3 = f(i + 0.5 * dt * k2);
        let k4 = f(i + dt * k3);
        let next = i + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        let crossed = if sign > 0.0 { next >= stop } else { next <= stop };
        if crossed {
            let frac = (stop - i) / (next - i);
            return q + frac * dt * 0.5 * (i + stop);
        }
        // charge over the step, Simpson's rule on the RK stages
        let mid = i + 0.5 * dt * k2;
        q += dt / 6.0 * (i + 4.0 * mid + next);
        i = next;
    }
}
