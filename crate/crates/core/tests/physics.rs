mod common;

use cellbal::cell::CellParams;
use cellbal::physics::{q_rx, q_tx, r_path, r_source, ArchParams};
use common::rl_charge;

fn grid() -> impl Iterator<Item = (f64, f64)> {
    let volts = (0..=12).map(|k| 3.0 + 0.1 * k as f64);
    volts.flat_map(|v| [0.010, 0.020, 0.035, 0.050, 0.075, 0.100, 0.150, 0.200].map(move |r| (v, r)))
}

#[test]
fn transfer_charges_match_integrated_waveforms() {
    let a = ArchParams::default();
    let mut worst: f64 = 0.0;
    for (v, r) in grid() {
        let tx = q_tx(v, r, &a).unwrap();
        let rx = q_rx(v, r, &a).unwrap();
        let tx_ref = rl_charge(v, r, a.inductance_h, a.i_peak_a, 1.0);
        let rx_ref = rl_charge(v, r, a.inductance_h, a.i_peak_a, -1.0);
        worst = worst.max((tx / tx_ref - 1.0).abs()).max((rx / rx_ref - 1.0).abs());
        assert!((tx / tx_ref - 1.0).abs() < 1e-3, "q_tx at {v} V, {r} ohm: {tx} vs {tx_ref}");
        assert!((rx / rx_ref - 1.0).abs() < 1e-3, "q_rx at {v} V, {r} ohm: {rx} vs {rx_ref}");
        let lossless = a.inductance_h * a.i_peak_a * a.i_peak_a / (2.0 * v);
        assert!(rx < lossless && lossless < tx, "{v} V, {r} ohm");
    }
    assert!(worst < 1e-6, "{worst}");
}

#[test]
fn default_architecture_examples() {
    let a = ArchParams::default();
    let cell = CellParams::default();
    let tx = q_tx(3.7, r_source(&cell, &a), &a).unwrap();
    let rx = q_rx(3.7, r_path(0, 3, &cell, &a).unwrap(), &a).unwrap();
    let tx_ref = rl_charge(3.7, 0.045, a.inductance_h, a.i_peak_a, 1.0);
    let rx_ref = rl_charge(3.7, 0.060, a.inductance_h, a.i_peak_a, -1.0);
    assert!((tx / tx_ref - 1.0).abs() < 1e-6);
    assert!((rx / rx_ref - 1.0).abs() < 1e-6);
    // about 2 mC per cycle at roughly 80% efficiency over three hops
    assert!((tx - 2.158e-3).abs() < 1e-6);
    assert!((0.75..0.85).contains(&(rx / tx)));
}
