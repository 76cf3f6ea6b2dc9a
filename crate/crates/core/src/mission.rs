//! Missions as piecewise-constant current profiles, and charge prediction
//! over them without balancing.

use serde::{Deserialize, Serialize};

use crate::cell::{evolve_charge, CellState, PackConfig, BOUND_TOL_AH};
use crate::error::{Error, Result};

/// Contiguity slack between consecutive segments, in hours.
const CONTIGUITY_TOL_H: f64 = 1e-9;

/// One constant-current piece of a mission. Positive current discharges,
/// negative current charges, zero current is idle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Segment {
    pub current_a: f64,
    pub t_start_h: f64,
    pub t_end_h: f64,
}

impl Segment {
    pub fn duration_h(&self) -> f64 {
        self.t_end_h - self.t_start_h
    }

    pub fn is_idle(&self) -> bool {
        self.current_a == 0.0
    }

    pub fn is_charging(&self) -> bool {
        self.current_a < 0.0
    }
}

/// Ordered, contiguous, non-empty sequence of segments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Segment>", into = "Vec<Segment>")]
pub struct Mission {
    segments: Vec<Segment>,
}

impl TryFrom<Vec<Segment>> for Mission {
    type Error = Error;

    fn try_from(segments: Vec<Segment>) -> Result<Self> {
        Mission::new(segments)
    }
}

impl From<Mission> for Vec<Segment> {
    fn from(m: Mission) -> Self {
        m.segments
    }
}

impl Mission {
    pub fn new(segments: Vec<Segment>) -> Result<Self> {
        if segments.is_empty() {
            return Err(Error::EmptyMission);
        }
        for (index, s) in segments.iter().enumerate() {
            if !s.current_a.is_finite() || !s.t_start_h.is_finite() || !s.t_end_h.is_finite() {
                return Err(Error::BadSegment {
                    index,
                    reason: "non-finite value".into(),
                });
            }
            if s.t_end_h <= s.t_start_h {
                return Err(Error::BadSegment {
                    index,
                    reason: format!("t_end_h {} <= t_start_h {}", s.t_end_h, s.t_start_h),
                });
            }
        }
        for (index, w) in segments.windows(2).enumerate() {
            if (w[1].t_start_h - w[0].t_end_h).abs() > CONTIGUITY_TOL_H {
                return Err(Error::BadSegment {
                    index: index + 1,
                    reason: format!(
                        "starts at {} h but the previous segment ends at {} h",
                        w[1].t_start_h, w[0].t_end_h
                    ),
                });
            }
        }
        Ok(Self { segments })
    }

    /// Builds a contiguous mission from `(current, duration)` pairs starting at `t0_h`.
    pub fn from_durations(t0_h: f64, pieces: &[(f64, f64)]) -> Result<Self> {
        let mut t = t0_h;
        let segments = pieces
            .iter()
            .map(|&(current_a, dur)| {
                let s = Segment {
                    current_a,
                    t_start_h: t,
                    t_end_h: t + dur,
                };
                t = s.t_end_h;
                s
            })
            .collect();
        Self::new(segments)
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn len(&self) -> usize {
        self.segments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    pub fn start_h(&self) -> f64 {
        self.segments[0].t_start_h
    }

    pub fn end_h(&self) -> f64 {
        self.segments[self.segments.len() - 1].t_end_h
    }

    pub fn duration_h(&self) -> f64 {
        self.end_h() - self.start_h()
    }

    /// Current drawn at time `t`, using half-open segment intervals.
    pub fn current_at(&self, t_h: f64) -> Result<f64> {
        let (start, end) = (self.start_h(), self.end_h());
        if !(t_h >= start && t_h < end) {
            return Err(Error::OutsideMission { t: t_h, start, end });
        }
        // first segment whose end lies strictly after t
        let k = self.segments.partition_point(|s| s.t_end_h <= t_h);
        Ok(self.segments[k].current_a)
    }

    /// Indices (0-based) of idle segments among the first `k` segments.
    pub fn idle_indices(&self, k: usize) -> Result<Vec<usize>> {
        if k == 0 || k > self.len() {
            return Err(Error::SegmentOutOfRange { k, n: self.len() });
        }
        Ok(self.segments[..k]
            .iter()
            .enumerate()
            .filter(|(_, s)| s.is_idle())
            .map(|(l, _)| l)
            .collect())
    }

    /// Same profile shifted to start at `t0_h`.
    pub fn starting_at(&self, t0_h: f64) -> Mission {
        let pieces: Vec<_> = self
            .segments
            .iter()
            .map(|s| (s.current_a, s.duration_h()))
            .collect();
        Self::from_durations(t0_h, &pieces).expect("shifting keeps a valid mission valid")
    }

    /// Appends a segment of `duration_h` at the end.
    pub fn extended(&self, current_a: f64, duration_h: f64) -> Result<Mission> {
        let mut segments = self.segments.clone();
        segments.push(Segment {
            current_a,
            t_start_h: self.end_h(),
            t_end_h: self.end_h() + duration_h,
        });
        Self::new(segments)
    }

    /// Sub-mission over the segment range.
    pub fn window(&self, range: std::ops::Range<usize>) -> Result<Mission> {
        if range.start >= range.end || range.end > self.len() {
            return Err(Error::SegmentOutOfRange {
                k: range.end,
                n: self.len(),
            });
        }
        Self::new(self.segments[range].to_vec())
    }

    /// Merges runs of adjacent idle segments into single idle periods.
    pub fn merge_idle(&self) -> Mission {
        let mut out: Vec<Segment> = Vec::with_capacity(self.len());
        for s in &self.segments {
            match out.last_mut() {
                Some(prev) if prev.is_idle() && s.is_idle() => prev.t_end_h = s.t_end_h,
                _ => out.push(*s),
            }
        }
        Self { segments: out }
    }

    pub fn load_json(path: &std::path::Path) -> Result<Mission> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Predicted per-cell charges at every segment boundary of a mission.
#[derive(Debug, Clone, PartialEq)]
pub struct ChargeTrajectory {
    /// `charges[i][k]`: charge of cell `i` after `k` segments (`k = 0` is the start).
    pub charges: Vec<Vec<f64>>,
    /// `throughput[i][k]`: Ah throughput of cell `i` during segment `k`.
    pub throughput: Vec<Vec<f64>>,
    /// Per-cell `(floor, ceiling)` bounds in effect for this prediction.
    pub bounds: Vec<(f64, f64)>,
}

impl ChargeTrajectory {
    pub fn n_cells(&self) -> usize {
        self.charges.len()
    }

    pub fn n_segments(&self) -> usize {
        self.throughput.first().map_or(0, Vec::len)
    }

    pub fn final_charges(&self) -> Vec<f64> {
        self.charges.iter().map(|c| c[c.len() - 1]).collect()
    }
}

/// Integrates the mission on every cell assuming no balancing.
pub fn predict_trajectory(
    pack: &PackConfig,
    states: &[CellState],
    mission: &Mission,
) -> Result<ChargeTrajectory> {
    if states.len() != pack.len() {
        return Err(crate::error::invalid(format!(
            "{} states for a pack of {} cells",
            states.len(),
            pack.len()
        )));
    }
    let n = mission.len();
    let mut charges = Vec::with_capacity(pack.len());
    let mut throughput = Vec::with_capacity(pack.len());
    for (params, state) in pack.cells.iter().zip(states) {
        let mut q = Vec::with_capacity(n + 1);
        let mut thr = Vec::with_capacity(n);
        q.push(state.charge_ah);
        let mut s = *state;
        for seg in mission.segments() {
            let next = evolve_charge(&s, params, seg.current_a, seg.duration_h())?;
            q.push(next.charge_ah);
            thr.push(next.ah_throughput - s.ah_throughput);
            s = next;
        }
        charges.push(q);
        throughput.push(thr);
    }
    Ok(ChargeTrajectory {
        charges,
        throughput,
        bounds: pack.bounds(states),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    Floor,
    Ceiling,
}

/// A predicted or observed charge outside the usable window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub cell: usize,
    /// Segment (0-based) at whose end the bound is crossed.
    pub segment: usize,
    pub kind: ViolationKind,
    /// Distance beyond the bound, in Ah.
    pub magnitude_ah: f64,
}

/// Bound check of a charge against `(floor, ceiling)`.
pub fn check_bounds(cell: usize, segment: usize, charge: f64, bounds: (f64, f64)) -> Option<Violation> {
    let (floor, ceiling) = bounds;
    if charge < floor - BOUND_TOL_AH {
        Some(Violation {
            cell,
            segment,
            kind: ViolationKind::Floor,
            magnitude_ah: floor - charge,
        })
    } else if charge > ceiling + BOUND_TOL_AH {
        Some(Violation {
            cell,
            segment,
            kind: ViolationKind::Ceiling,
            magnitude_ah: charge - ceiling,
        })
    } else {
        None
    }
}

/// Every (cell, boundary) of the trajectory outside the usable window.
///
/// The starting boundary is not checked: nothing planned inside the mission can
/// change it. An empty report means the mission is achievable without balancing.
pub fn feasibility_report(traj: &ChargeTrajectory) -> Vec<Violation> {
    let mut out = Vec::new();
    for (cell, (charges, bounds)) in traj.charges.iter().zip(&traj.bounds).enumerate() {
        for (k, &q) in charges.iter().enumerate().skip(1) {
            out.extend(check_bounds(cell, k - 1, q, *bounds));
        }
    }
    out
}

/// Time, capped at `limit_h`, until the first cell reaches its ceiling under
/// the charging current `current_a`.
pub fn time_to_first_full(
    pack: &PackConfig,
    states: &[CellState],
    bounds: &[(f64, f64)],
    current_a: f64,
    limit_h: f64,
) -> f64 {
    let mut t = limit_h;
    for ((p, s), &(_, cap)) in pack.cells.iter().zip(states).zip(bounds) {
        let net_rate = p.alpha_c * -current_a - p.i_sd_a;
        if net_rate > 0.0 {
            t = t.min(((cap - s.charge_ah) / net_rate).max(0.0));
        }
    }
    t
}

/// Resizes charging segments so that, without balancing, charging stops when
/// the first cell reaches its capacity. The unused part of a charging slot
/// becomes idle, and adjacent idle segments are merged.
pub fn with_charger_cutoff(
    pack: &PackConfig,
    states: &[CellState],
    mission: &Mission,
) -> Result<Mission> {
    let bounds = pack.bounds(states);
    let mut states = states.to_vec();
    let mut pieces: Vec<(f64, f64)> = Vec::with_capacity(mission.len() + 2);
    for seg in mission.segments() {
        let dur = seg.duration_h();
        let charge_time = if seg.is_charging() {
            time_to_first_full(pack, &states, &bounds, seg.current_a, dur)
        } else {
            dur
        };
        let split = [(seg.current_a, charge_time), (0.0, dur - charge_time)];
        for &(current, d) in split.iter().filter(|(_, d)| *d > 1e-9) {
            for (p, s) in pack.cells.iter().zip(states.iter_mut()) {
                *s = evolve_charge(s, p, current, d)?;
            }
            pieces.push((current, d));
        }
    }
    Ok(Mission::from_durations(mission.start_h(), &pieces)?.merge_idle())
}
