//! Co-occurrence events between user pairs and their kernel-weighted score.
//!
//! Two stays co-occur when the spatial kernel on the distance between their
//! representative locations and the temporal kernel on the gap between their
//! intervals (zero when the intervals overlap) have a positive product. The
//! score of a pair is the sum of those products over all record pairs.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::geo::{haversine_m, EARTH_RADIUS_M};
use crate::grid::{Cell, GridSpec};
use crate::traj::{Instant, StayRecord, Trajectory, UserId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Kernel {
    /// 1 within the threshold, 0 beyond.
    Indicator,
    /// `exp(-distance / alpha)`, truncated to 0 beyond `3 * alpha`.
    Exponential,
}

impl Kernel {
    pub fn eval(self, distance: f64, alpha: f64) -> f64 {
        match self {
            Kernel::Indicator => {
                if distance <= alpha {
                    1.0
                } else {
                    0.0
                }
            }
            Kernel::Exponential => {
                if distance > 3.0 * alpha {
                    0.0
                } else {
                    libm::exp(-distance / alpha)
                }
            }
        }
    }

    /// Largest distance with a non-zero kernel value.
    pub fn reach(self, alpha: f64) -> f64 {
        match self {
            Kernel::Indicator => alpha,
            Kernel::Exponential => 3.0 * alpha,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CoLocationConfig {
    /// Spatial threshold in meters.
    pub alpha_d: f64,
    /// Temporal threshold in seconds.
    pub alpha_t: f64,
    pub spatial_kernel: Kernel,
    pub temporal_kernel: Kernel,
}

impl Default for CoLocationConfig {
    fn default() -> Self {
        CoLocationConfig {
            alpha_d: 250.0,
            alpha_t: 1800.0,
            spatial_kernel: Kernel::Indicator,
            temporal_kernel: Kernel::Indicator,
        }
    }
}

impl CoLocationConfig {
    pub fn weight(&self, a: &StayRecord, b: &StayRecord) -> f64 {
        let ks = self
            .spatial_kernel
            .eval(haversine_m(a.location(), b.location()), self.alpha_d);
        if ks == 0.0 {
            return 0.0;
        }
        let kt = self.temporal_kernel.eval(interval_gap(a, b) as f64, self.alpha_t);
        ks * kt
    }
}

/// Seconds between two intervals, 0 when they overlap or touch.
pub fn interval_gap(a: &StayRecord, b: &StayRecord) -> i64 {
    (a.start_time.max(b.start_time) - a.stop_time.min(b.stop_time)).max(0)
}

/// One co-occurrence between the stays `stay_a` of `user_a` and `stay_b` of
/// `user_b`, with `user_a < user_b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoEvent {
    pub user_a: UserId,
    pub user_b: UserId,
    pub stay_a: usize,
    pub stay_b: usize,
    /// Cell of `user_a`'s stay, saturated to the grid border.
    pub cell: Cell,
    pub overlap_start: Instant,
    /// Equal to `overlap_start` when the stays are separated by a gap.
    pub overlap_end: Instant,
    pub weight: f64,
}

impl CoEvent {
    pub fn overlap_s(&self) -> i64 {
        self.overlap_end - self.overlap_start
    }

    pub fn pair(&self) -> (&UserId, &UserId) {
        (&self.user_a, &self.user_b)
    }
}

struct Flat<'a> {
    user: usize,
    stay: usize,
    rec: &'a StayRecord,
    band: i64,
}

fn make_event(
    grid: &GridSpec,
    users: &[&UserId],
    (ua, sa, ra): (usize, usize, &StayRecord),
    (ub, sb, rb): (usize, usize, &StayRecord),
    weight: f64,
) -> CoEvent {
    let (ua, sa, ra, ub, sb, rb) = if users[ua] < users[ub] {
        (ua, sa, ra, ub, sb, rb)
    } else {
        (ub, sb, rb, ua, sa, ra)
    };
    let start = ra.start_time.max(rb.start_time);
    let end = ra.stop_time.min(rb.stop_time);
    let (overlap_start, overlap_end) = if start <= end { (start, end) } else { (end, end) };
    CoEvent {
        user_a: users[ua].clone(),
        user_b: users[ub].clone(),
        stay_a: sa,
        stay_b: sb,
        cell: grid.clamp_cell(ra.location()),
        overlap_start,
        overlap_end,
        weight,
    }
}

/// All co-occurrence events between distinct users.
///
/// Candidate record pairs are pruned by latitude band (great-circle distance
/// is never shorter than the meridional arc) and by a start-time sweep, so the
/// result is identical to evaluating every record pair.
pub fn extract_coevents(
    trajectories: &BTreeMap<UserId, Trajectory>,
    cfg: &CoLocationConfig,
    grid: &GridSpec,
) -> Vec<CoEvent> {
    let users: Vec<&UserId> = trajectories.keys().collect();
    let reach_d = cfg.spatial_kernel.reach(cfg.alpha_d) * (1.0 + 1e-9) + 1e-9;
    let reach_t = libm::ceil(cfg.temporal_kernel.reach(cfg.alpha_t)) as i64;

    let mut flat: Vec<Flat<'_>> = Vec::new();
    let mut max_duration = 0i64;
    for (ui, traj) in trajectories.values().enumerate() {
        for (si, rec) in traj.stays().iter().enumerate() {
            let band = libm::floor(rec.location().lat.to_radians() * EARTH_RADIUS_M / reach_d) as i64;
            max_duration = max_duration.max(rec.duration_s());
            flat.push(Flat {
                user: ui,
                stay: si,
                rec,
                band,
            });
        }
    }

    let mut bands: BTreeMap<i64, Vec<usize>> = BTreeMap::new();
    for (i, f) in flat.iter().enumerate() {
        bands.entry(f.band).or_default().push(i);
    }
    for list in bands.values_mut() {
        list.sort_by_key(|&i| (flat[i].rec.start_time, i));
    }

    let mut events = Vec::new();
    for (i, fi) in flat.iter().enumerate() {
        let lo = fi.rec.start_time - reach_t - max_duration;
        let hi = fi.rec.stop_time + reach_t;
        for band in fi.band - 1..=fi.band + 1 {
            let Some(list) = bands.get(&band) else { continue };
            let first = list.partition_point(|&j| flat[j].rec.start_time < lo);
            for &j in &list[first..] {
                let fj = &flat[j];
                if fj.rec.start_time > hi {
                    break;
                }
                if j <= i || fj.user == fi.user {
                    continue;
                }
                let w = cfg.weight(fi.rec, fj.rec);
                if w > 0.0 {
                    events.push(make_event(
                        grid,
                        &users,
                        (fi.user, fi.stay, fi.rec),
                        (fj.user, fj.stay, fj.rec),
                        w,
                    ));
                }
            }
        }
    }
    sort_events(&mut events);
    events
}

/// Canonical ordering: pair, then overlap start, then stay indices.
pub fn sort_events(events: &mut [CoEvent]) {
    events.sort_by(|a, b| {
        (&a.user_a, &a.user_b, a.overlap_start, a.stay_a, a.stay_b).cmp(&(
            &b.user_a,
            &b.user_b,
            b.overlap_start,
            b.stay_a,
            b.stay_b,
        ))
    });
}

/// Kernel-weighted co-occurrence score of one pair: the sum of event weights.
/// With indicator kernels this is the co-occurrence count.
pub fn coevent_score(events: &[CoEvent]) -> f64 {
    events.iter().map(|e| e.weight).sum()
}

/// Events grouped by `(user_a, user_b)`, preserving input order.
pub fn events_by_pair(events: &[CoEvent]) -> BTreeMap<(UserId, UserId), Vec<CoEvent>> {
    let mut out: BTreeMap<(UserId, UserId), Vec<CoEvent>> = BTreeMap::new();
    for e in events {
        out.entry((e.user_a.clone(), e.user_b.clone()))
            .or_default()
            .push(e.clone());
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geo::{LatLon, LocalProjection, PlanarPoint};
    use alloc::vec;

    fn grid() -> GridSpec {
        GridSpec::new(LatLon { lat: 28.0, lon: 112.9 }, 250.0, 80, 80, 60).unwrap()
    }

    fn traj(user: &str, stays: &[(i64, i64, f64, f64)]) -> Trajectory {
        let proj = LocalProjection::new(LatLon { lat: 28.0, lon: 112.9 });
        let recs = stays
            .iter()
            .map(|&(s, e, x, y)| StayRecord::at(user.into(), s, e, proj.to_latlon(PlanarPoint::new(x, y))).unwrap())
            .collect();
        Trajectory::new(user.into(), recs).unwrap()
    }

    fn world(ts: Vec<Trajectory>) -> BTreeMap<UserId, Trajectory> {
        ts.into_iter().map(|t| (t.user_id().clone(), t)).collect()
    }

    #[test]
    fn identical_stays_give_one_event() {
        let w = world(vec![
            traj("a", &[(0, 3600, 1000.0, 1000.0)]),
            traj("b", &[(0, 3600, 1000.0, 1000.0)]),
        ]);
        let ev = extract_coevents(&w, &CoLocationConfig::default(), &grid());
        assert_eq!(ev.len(), 1);
        assert_eq!(ev[0].weight, 1.0);
        assert_eq!((ev[0].overlap_start, ev[0].overlap_end), (0, 3600));
        assert_eq!(ev[0].cell, Cell::new(4, 4));
    }

    #[test]
    fn far_apart_stays_excluded() {
        let w = world(vec![
            traj("a", &[(0, 3600, 1000.0, 1000.0)]),
            traj("b", &[(0, 3600, 1500.0, 1000.0)]),
        ]);
        assert!(extract_coevents(&w, &CoLocationConfig::default(), &grid()).is_empty());
    }

    #[test]
    fn gap_within_threshold_is_zero_length_event() {
        let w = world(vec![
            traj("a", &[(0, 3600, 1000.0, 1000.0)]),
            traj("b", &[(3600 + 1800, 9000, 1000.0, 1100.0)]),
        ]);
        let ev = extract_coevents(&w, &CoLocationConfig::default(), &grid());
        assert_eq!(ev.len(), 1);
        assert_eq!(ev[0].overlap_s(), 0);
        assert_eq!(ev[0].overlap_start, 3600);

        let w = world(vec![
            traj("a", &[(0, 3600, 1000.0, 1000.0)]),
            traj("b", &[(3600 + 1801, 9000, 1000.0, 1100.0)]),
        ]);
        assert!(extract_coevents(&w, &CoLocationConfig::default(), &grid()).is_empty());
    }

    #[test]
    fn pair_is_ordered_regardless_of_record_order() {
        let w = world(vec![
            traj("z", &[(0, 100, 0.0, 0.0)]),
            traj("m", &[(50, 150, 0.0, 0.0)]),
        ]);
        let ev = extract_coevents(&w, &CoLocationConfig::default(), &grid());
        assert_eq!(ev[0].pair(), (&UserId::from("m"), &UserId::from("z")));
    }

    #[test]
    fn score_sums_weights() {
        assert_eq!(coevent_score(&[]), 0.0);
        let e = |w: f64| CoEvent {
            user_a: "a".into(),
            user_b: "b".into(),
            stay_a: 0,
            stay_b: 0,
            cell: Cell::new(0, 0),
            overlap_start: 0,
            overlap_end: 0,
            weight: w,
        };
        assert_eq!(coevent_score(&[e(1.0), e(1.0), e(1.0), e(1.0)]), 4.0);
        let s = coevent_score(&[e(0.9), e(0.4), e(0.1)]);
        assert!((s - 1.4).abs() < 1e-12);
    }

    #[test]
    fn exponential_kernel_truncates() {
        assert_eq!(Kernel::Exponential.eval(0.0, 10.0), 1.0);
        assert!((Kernel::Exponential.eval(10.0, 10.0) - libm::exp(-1.0)).abs() < 1e-15);
        assert!(Kernel::Exponential.eval(30.0, 10.0) > 0.0);
        assert_eq!(Kernel::Exponential.eval(30.000001, 10.0), 0.0);
        assert_eq!(Kernel::Indicator.eval(10.0, 10.0), 1.0);
    }
}
