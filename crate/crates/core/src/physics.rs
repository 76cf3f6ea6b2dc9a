//! Charge moved by one flyback transfer cycle, path resistances and cycle
//! times for a transformer-coupled non-neighbour balancing architecture.

use serde::{Deserialize, Serialize};

use crate::cell::CellParams;
use crate::error::{invalid, Error, Result};

/// Constants of the balancing hardware, in SI units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArchParams {
    /// Secondary winding inductance.
    pub inductance_h: f64,
    pub i_peak_a: f64,
    /// Largest index distance between a source and a destination cell.
    pub max_distance: usize,
    pub r_wind_ohm: f64,
    pub r_switch_ohm: f64,
    /// Switching overhead per hop of the balancing path.
    pub t_switch_s: f64,
}

impl Default for ArchParams {
    fn default() -> Self {
        Self {
            inductance_h: 100e-6,
            i_peak_a: 12.0,
            max_distance: 6,
            r_wind_ohm: 0.010,
            r_switch_ohm: 0.005,
            t_switch_s: 10e-6,
        }
    }
}

impl ArchParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("inductance_h", self.inductance_h),
            ("i_peak_a", self.i_peak_a),
            ("r_wind_ohm", self.r_wind_ohm),
            ("r_switch_ohm", self.r_switch_ohm),
            ("t_switch_s", self.t_switch_s),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(invalid(format!("{name} must be positive, got {v}")));
            }
        }
        if self.max_distance < 1 {
            return Err(invalid("max_distance must be at least 1"));
        }
        Ok(())
    }
}

/// Resistance seen while the source cell charges the primary winding.
pub fn r_source(cell: &CellParams, arch: &ArchParams) -> f64 {
    cell.r_cell_ohm + arch.r_wind_ohm + 2.0 * arch.r_switch_ohm
}

/// Resistance of the discharge path from the winding into cell `j`.
pub fn r_path(i: usize, j: usize, cell_j: &CellParams, arch: &ArchParams) -> Result<f64> {
    let distance = i.abs_diff(j);
    if distance == 0 || distance > arch.max_distance {
        return Err(Error::DistanceExceeded {
            i,
            j,
            distance,
            max: arch.max_distance,
        });
    }
    Ok(cell_j.r_cell_ohm + arch.r_wind_ohm + (2.0 + distance as f64) * arch.r_switch_ohm)
}

/// Charge in coulombs drawn from a source at `v` volts to ramp the winding
/// current up to the peak through `r_s`.
pub fn q_tx(v: f64, r_s: f64, arch: &ArchParams) -> Result<f64> {
    let (l, ip) = (arch.inductance_h, arch.i_peak_a);
    let drop = ip * r_s;
    if !(v > drop) || !(r_s > 0.0) {
        return Err(Error::VoltageTooLow { v, i_peak: ip, r: r_s });
    }
    // ln(v/(v-x)) = -ln_1p(-x/v), kept in this form for small r_s
    let x = drop / v;
    Ok(-(-x).ln_1p() * l * v / (r_s * r_s) - l * ip / r_s)
}

/// Charge in coulombs delivered to a destination at `v` volts while the
/// winding current decays from the peak through `r_d`.
pub fn q_rx(v: f64, r_d: f64, arch: &ArchParams) -> Result<f64> {
    let (l, ip) = (arch.inductance_h, arch.i_peak_a);
    if !(v > 0.0) || !(r_d > 0.0) {
        return Err(invalid(format!("q_rx needs v > 0 and r_d > 0, got {v} / {r_d}")));
    }
    let x = ip * r_d / v;
    Ok(-x.ln_1p() * l * v / (r_d * r_d) + l * ip / r_d)
}

/// Duration in seconds of one transfer cycle across `hops` cells.
pub fn transfer_cycle_time(v_src: f64, v_dst: f64, hops: usize, arch: &ArchParams) -> f64 {
    let ramp = arch.inductance_h * arch.i_peak_a;
    ramp / v_src + ramp / v_dst + hops as f64 * arch.t_switch_s
}

/// Cells that cell `i` may exchange charge with.
pub fn compatible_set(i: usize, n_cells: usize, arch: &ArchParams) -> Vec<usize> {
    let lo = i.saturating_sub(arch.max_distance);
    let hi = (i + arch.max_distance).min(n_cells.saturating_sub(1));
    (lo..=hi).filter(|&j| j != i).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn arch() -> ArchParams {
        ArchParams::default()
    }

    fn lossless(v: f64) -> f64 {
        let a = arch();
        a.inductance_h * a.i_peak_a * a.i_peak_a / (2.0 * v)
    }

    #[test]
    fn resistances() {
        let cell = CellParams::default();
        assert!((r_source(&cell, &arch()) - 0.045).abs() < 1e-15);
        let no_sw = ArchParams {
            r_switch_ohm: 0.0,
            ..arch()
        };
        assert_eq!(r_source(&cell, &no_sw), cell.r_cell_ohm + no_sw.r_wind_ohm);
        let doubled = CellParams {
            r_cell_ohm: 0.05,
            ..cell
        };
        assert!((r_source(&doubled, &arch()) - r_source(&cell, &arch()) - 0.025).abs() < 1e-15);

        assert!((r_path(0, 1, &cell, &arch()).unwrap() - 0.050).abs() < 1e-15);
        assert!((r_path(4, 1, &cell, &arch()).unwrap() - 0.060).abs() < 1e-15);
        let mut prev = 0.0;
        for j in 1..=6 {
            let r = r_path(0, j, &cell, &arch()).unwrap();
            assert!(r > prev);
            prev = r;
        }
        assert!(matches!(r_path(0, 7, &cell, &arch()), Err(Error::DistanceExceeded { .. })));
        assert!(r_path(3, 3, &cell, &arch()).is_err());
    }

    #[test]
    fn transfer_charges() {
        // arbitrary-precision references
        let tx = q_tx(3.7, 0.045, &arch()).unwrap();
        assert!((tx / 2.158_762_004_445_66e-3 - 1.0).abs() < 1e-12, "{tx}");
        let rx = q_rx(3.7, 0.060, &arch()).unwrap();
        assert!((rx / 1.725_404_365_947_68e-3 - 1.0).abs() < 1e-12, "{rx}");

        // near-zero resistance: relative offset from the lossless packet is
        // +-(2/3)(i_peak r / v) to first order
        for r in [1e-6, 1e-7] {
            let first_order = 2.0 / 3.0 * 12.0 * r / 3.7;
            let tx = q_tx(3.7, r, &arch()).unwrap() / lossless(3.7) - 1.0;
            let rx = q_rx(3.7, r, &arch()).unwrap() / lossless(3.7) - 1.0;
            assert!(tx > 0.0 && rx < 0.0);
            assert!((tx - first_order).abs() < 1e-8, "{tx}");
            assert!((rx + first_order).abs() < 1e-8, "{rx}");
        }
        assert!((q_tx(3.7, 1e-7, &arch()).unwrap() / lossless(3.7) - 1.0).abs() < 1e-6);
        assert!((q_rx(3.7, 1e-7, &arch()).unwrap() / lossless(3.7) - 1.0).abs() < 1e-6);

        let off = ArchParams {
            i_peak_a: 1e-300,
            ..arch()
        };
        assert!(q_tx(3.7, 0.045, &off).unwrap().abs() < 1e-300);
        assert!(q_rx(3.7, 0.060, &off).unwrap().abs() < 1e-300);

        assert!(matches!(q_tx(0.5, 0.045, &arch()), Err(Error::VoltageTooLow { .. })));
    }

    #[test]
    fn cycle_time() {
        let t = transfer_cycle_time(3.7, 3.7, 3, &arch());
        assert!((t - 678.648_648_648_648_6e-6).abs() < 1e-15, "{t}");
        let d = transfer_cycle_time(3.7, 3.9, 6, &arch()) - transfer_cycle_time(3.7, 3.9, 1, &arch());
        assert!((d - 5.0 * arch().t_switch_s).abs() < 1e-15);
        let big_l = ArchParams {
            inductance_h: 2.0 * arch().inductance_h,
            ..arch()
        };
        let ramp = |a: &ArchParams| transfer_cycle_time(3.7, 4.0, 2, a) - 2.0 * a.t_switch_s;
        assert!((ramp(&big_l) - 2.0 * ramp(&arch())).abs() < 1e-15);
    }

    #[test]
    fn compatibility() {
        assert_eq!(compatible_set(0, 4, &arch()), vec![1, 2, 3]);
        let p = compatible_set(5, 96, &arch());
        assert_eq!(p.len(), 11);
        assert_eq!(p, (0..5).chain(6..12).collect::<Vec<_>>());
        let bad = ArchParams {
            max_distance: 0,
            ..arch()
        };
        assert!(bad.validate().is_err());
    }

    proptest! {
        #[test]
        fn transfers_are_lossy(v in 3.0f64..4.2, r_s in 0.001f64..0.2, r_d in 0.001f64..0.2) {
            let rx = q_rx(v, r_d, &arch()).unwrap();
            let tx = q_tx(v, r_s, &arch()).unwrap();
            prop_assert!(rx < lossless(v));
            prop_assert!(lossless(v) < tx);
        }

        #[test]
        fn monotone_in_resistance(v in 3.0f64..4.2, r in 0.005f64..0.19, dr in 0.001f64..0.01) {
            prop_assert!(q_tx(v, r + dr, &arch()).unwrap() > q_tx(v, r, &arch()).unwrap());
            prop_assert!(q_rx(v, r + dr, &arch()).unwrap() < q_rx(v, r, &arch()).unwrap());
        }

        #[test]
        fn compatibility_is_symmetric(n in 2usize..40, d in 1usize..10, i in 0usize..40, j in 0usize..40) {
            let a = ArchParams { max_distance: d, ..arch() };
            let (i, j) = (i % n, j % n);
            prop_assert_eq!(compatible_set(i, n, &a).contains(&j), compatible_set(j, n, &a).contains(&i));
        }
    }
}
