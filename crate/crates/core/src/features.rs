//! The six pairwise co-occurrence metrics and feature-subset projection.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::colocation::CoEvent;
use crate::grid::{day_index, is_weekend, Cell, GridSpec};
use crate::stats::entropy_of_counts;
use crate::traj::{Instant, Trajectory, UserId};

/// One of the six co-occurrence metrics, in canonical order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Metric {
    Fre,
    Pop,
    Div,
    Int,
    Stay,
    Hol,
}

impl Metric {
    pub const ALL: [Metric; 6] = [
        Metric::Fre,
        Metric::Pop,
        Metric::Div,
        Metric::Int,
        Metric::Stay,
        Metric::Hol,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Metric::Fre => "f_fre",
            Metric::Pop => "f_pop",
            Metric::Div => "f_div",
            Metric::Int => "f_int",
            Metric::Stay => "f_stay",
            Metric::Hol => "f_hol",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_name(s: &str) -> Option<Metric> {
        let s = s.trim();
        let s = s.strip_prefix("f_").unwrap_or(s);
        Metric::ALL.into_iter().find(|m| m.name().strip_prefix("f_") == Some(s))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FeatureError {
    #[error("empty feature subset")]
    EmptySubset,
    #[error("unknown feature or subset name: {0}")]
    UnknownName(String),
}

/// Non-empty selection of metrics, kept in canonical order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSubset {
    name: String,
    metrics: BTreeSet<Metric>,
}

impl FeatureSubset {
    pub fn new(name: impl Into<String>, metrics: impl IntoIterator<Item = Metric>) -> Result<Self, FeatureError> {
        let metrics: BTreeSet<Metric> = metrics.into_iter().collect();
        if metrics.is_empty() {
            return Err(FeatureError::EmptySubset);
        }
        Ok(FeatureSubset {
            name: name.into(),
            metrics,
        })
    }

    pub fn all() -> Self {
        Self::new("all", Metric::ALL).unwrap()
    }

    pub fn spatial() -> Self {
        Self::new("spatial", [Metric::Fre, Metric::Pop, Metric::Div]).unwrap()
    }

    pub fn temporal() -> Self {
        Self::new("temporal", [Metric::Int, Metric::Stay, Metric::Hol]).unwrap()
    }

    pub fn single(m: Metric) -> Self {
        Self::new(m.name(), [m]).unwrap()
    }

    /// Parses `all`, `spatial`, `temporal`, a metric name, or metric names
    /// joined by `+` (e.g. `f_fre+f_pop+f_stay`).
    pub fn parse(s: &str) -> Result<Self, FeatureError> {
        let s = s.trim();
        match s {
            "all" => return Ok(Self::all()),
            "spatial" => return Ok(Self::spatial()),
            "temporal" => return Ok(Self::temporal()),
            _ => {}
        }
        let metrics = s
            .split('+')
            .map(|part| Metric::from_name(part).ok_or_else(|| FeatureError::UnknownName(String::from(s))))
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(s, metrics)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn metrics(&self) -> impl Iterator<Item = Metric> + '_ {
        self.metrics.iter().copied()
    }

    pub fn len(&self) -> usize {
        self.metrics.len()
    }

    pub fn is_empty(&self) -> bool {
        self.metrics.is_empty()
    }
}

impl fmt::Display for FeatureSubset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairFeatures {
    pub user_a: UserId,
    pub user_b: UserId,
    pub f_fre: f64,
    pub f_pop: f64,
    pub f_div: f64,
    pub f_int: f64,
    pub f_stay: f64,
    pub f_hol: f64,
    pub label: Option<bool>,
}

impl PairFeatures {
    pub fn values(&self) -> [f64; 6] {
        [self.f_fre, self.f_pop, self.f_div, self.f_int, self.f_stay, self.f_hol]
    }

    pub fn get(&self, m: Metric) -> f64 {
        self.values()[m.index()]
    }
}

/// Visitor counts per cell, used for location entropy.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct VisitStats {
    visits: BTreeMap<Cell, BTreeMap<UserId, u32>>,
}

impl VisitStats {
    pub fn from_trajectories<'a>(trajectories: impl IntoIterator<Item = &'a Trajectory>, grid: &GridSpec) -> Self {
        let mut s = VisitStats::default();
        for t in trajectories {
            for stay in t.stays() {
                s.record(grid.clamp_cell(stay.location()), t.user_id());
            }
        }
        s
    }

    pub fn record(&mut self, cell: Cell, user: &UserId) {
        *self.visits.entry(cell).or_default().entry(user.clone()).or_insert(0) += 1;
    }

    pub fn covers(&self, cell: Cell) -> bool {
        self.visits.contains_key(&cell)
    }

    /// Shannon entropy (nats) of the visiting-user distribution of `cell`;
    /// 0 for a cell nobody visited.
    pub fn entropy(&self, cell: Cell) -> f64 {
        self.visits
            .get(&cell)
            .map(|m| entropy_of_counts(m.values().map(|&c| c as f64)))
            .unwrap_or(0.0)
    }
}

pub trait HolidayCalendar {
    fn is_holiday(&self, t: Instant) -> bool;
}

/// Saturdays and Sundays (UTC).
#[derive(Debug, Clone, Copy, Default)]
pub struct Weekends;

impl HolidayCalendar for Weekends {
    fn is_holiday(&self, t: Instant) -> bool {
        is_weekend(t)
    }
}

/// Explicit holiday days (days since epoch), optionally plus weekends.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct HolidayList {
    pub days: BTreeSet<i64>,
    pub include_weekends: bool,
}

impl HolidayCalendar for HolidayList {
    fn is_holiday(&self, t: Instant) -> bool {
        (self.include_weekends && is_weekend(t)) || self.days.contains(&day_index(t))
    }
}

impl<F: Fn(Instant) -> bool> HolidayCalendar for F {
    fn is_holiday(&self, t: Instant) -> bool {
        self(t)
    }
}

/// Six-metric vector for one pair from that pair's events.
///
/// With no events every metric is 0. With a single event the interval metric
/// is 1 (no gap to average).
pub fn compute_features(
    user_a: &UserId,
    user_b: &UserId,
    events: &[CoEvent],
    visit_stats: &VisitStats,
    holidays: &dyn HolidayCalendar,
) -> PairFeatures {
    let mut f = PairFeatures {
        user_a: user_a.clone(),
        user_b: user_b.clone(),
        f_fre: 0.0,
        f_pop: 0.0,
        f_div: 0.0,
        f_int: 0.0,
        f_stay: 0.0,
        f_hol: 0.0,
        label: None,
    };
    if events.is_empty() {
        return f;
    }
    let n = events.len() as f64;
    f.f_fre = n;
    f.f_pop = events.iter().map(|e| libm::exp(-visit_stats.entropy(e.cell))).sum();

    let mut per_cell: BTreeMap<Cell, u32> = BTreeMap::new();
    for e in events {
        *per_cell.entry(e.cell).or_insert(0) += 1;
    }
    f.f_div = entropy_of_counts(per_cell.values().map(|&c| c as f64));

    let mut starts: Vec<Instant> = events.iter().map(|e| e.overlap_start).collect();
    starts.sort_unstable();
    f.f_int = if starts.len() < 2 {
        1.0
    } else {
        let total: i64 = starts.windows(2).map(|w| w[1] - w[0]).sum();
        let mean_h = total as f64 / (starts.len() - 1) as f64 / 3600.0;
        1.0 / (1.0 + mean_h)
    };
    f.f_stay = events.iter().map(|e| e.overlap_s() as f64).sum::<f64>() / 3600.0;
    f.f_hol = events.iter().filter(|e| holidays.is_holiday(e.overlap_start)).count() as f64 / n;
    f
}

/// Selected metrics in canonical order.
pub fn project(features: &PairFeatures, subset: &FeatureSubset) -> Vec<f64> {
    subset.metrics().map(|m| features.get(m)).collect()
}

/// Per-column z-score transform.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    /// Fits column means and population standard deviations. Constant columns
    /// get unit scale.
    pub fn fit(rows: &[Vec<f64>]) -> Self {
        let d = rows.first().map_or(0, |r| r.len());
        let n = rows.len().max(1) as f64;
        let mut mean = alloc::vec![0.0; d];
        for r in rows {
            for (m, v) in mean.iter_mut().zip(r) {
                *m += v / n;
            }
        }
        let mut std = alloc::vec![0.0; d];
        for r in rows {
            for ((s, v), m) in std.iter_mut().zip(r).zip(&mean) {
                *s += (v - m) * (v - m) / n;
            }
        }
        for s in std.iter_mut() {
            *s = libm::sqrt(*s);
            if !(*s > 1e-12) {
                *s = 1.0;
            }
        }
        Standardizer { mean, std }
    }

    pub fn transform(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(v, (m, s))| (v - m) / s)
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    // 2019-09-16 00:00 UTC, a Monday.
    const MONDAY: Instant = 1_568_592_000;

    fn ev(cell: Cell, start: Instant, overlap: i64) -> CoEvent {
        CoEvent {
            user_a: "a".into(),
            user_b: "b".into(),
            stay_a: 0,
            stay_b: 0,
            cell,
            overlap_start: start,
            overlap_end: start + overlap,
            weight: 1.0,
        }
    }

    fn stats() -> VisitStats {
        let mut s = VisitStats::default();
        for u in ["a", "b", "c", "d"] {
            s.record(Cell::new(0, 0), &u.into());
        }
        s.record(Cell::new(1, 0), &"a".into());
        s
    }

    #[test]
    fn zero_events_is_all_zero() {
        let f = compute_features(&"a".into(), &"b".into(), &[], &stats(), &Weekends);
        assert_eq!(f.values(), [0.0; 6]);
    }

    #[test]
    fn hand_computed_three_events() {
        let sat = MONDAY + 5 * 86_400 + 2 * 3600;
        // Friday 22:00, Friday 23:00, Saturday 02:00.
        let events = [
            ev(Cell::new(0, 0), sat - 4 * 3600, 1800),
            ev(Cell::new(0, 0), sat - 3 * 3600, 1800),
            ev(Cell::new(1, 0), sat, 1800),
        ];
        let f = compute_features(&"a".into(), &"b".into(), &events, &stats(), &Weekends);
        assert_eq!(f.f_fre, 3.0);
        assert!((f.f_int - 1.0 / 3.0).abs() < 1e-12);
        assert!((f.f_stay - 1.5).abs() < 1e-12);
        assert!((f.f_hol - 1.0 / 3.0).abs() < 1e-12);
        let div = -(2.0 / 3.0 * libm::log(2.0 / 3.0) + 1.0 / 3.0 * libm::log(1.0 / 3.0));
        assert!((f.f_div - div).abs() < 1e-12);
        // Cell (0,0) has four equally frequent visitors, cell (1,0) one.
        let pop = 2.0 * libm::exp(-libm::log(4.0)) + 1.0;
        assert!((f.f_pop - pop).abs() < 1e-12);
    }

    #[test]
    fn single_cell_has_zero_diversity_and_unit_interval() {
        let events = [ev(Cell::new(0, 0), MONDAY, 60)];
        let f = compute_features(&"a".into(), &"b".into(), &events, &stats(), &Weekends);
        assert_eq!(f.f_div, 0.0);
        assert_eq!(f.f_int, 1.0);
    }

    #[test]
    fn doubling_events() {
        let events = vec![
            ev(Cell::new(0, 0), MONDAY, 600),
            ev(Cell::new(1, 0), MONDAY + 5 * 86_400, 1200),
            ev(Cell::new(1, 0), MONDAY + 7200, 300),
        ];
        let mut doubled = events.clone();
        doubled.extend(events.iter().cloned());
        let f1 = compute_features(&"a".into(), &"b".into(), &events, &stats(), &Weekends);
        let f2 = compute_features(&"a".into(), &"b".into(), &doubled, &stats(), &Weekends);
        assert_eq!(f2.f_fre, 2.0 * f1.f_fre);
        assert!((f2.f_stay - 2.0 * f1.f_stay).abs() < 1e-12);
        assert!((f2.f_div - f1.f_div).abs() < 1e-12);
        assert_eq!(f2.f_hol, f1.f_hol);
    }

    #[test]
    fn diversity_bounded_by_log_cells() {
        let events = [
            ev(Cell::new(0, 0), MONDAY, 1),
            ev(Cell::new(1, 0), MONDAY, 1),
            ev(Cell::new(2, 0), MONDAY, 1),
        ];
        let f = compute_features(&"a".into(), &"b".into(), &events, &stats(), &Weekends);
        assert!((f.f_div - libm::log(3.0)).abs() < 1e-12);
    }

    #[test]
    fn projection_and_parsing() {
        let mut f = compute_features(&"a".into(), &"b".into(), &[], &stats(), &Weekends);
        f.f_fre = 3.0;
        f.f_pop = 0.5;
        f.f_div = 0.25;
        assert_eq!(project(&f, &FeatureSubset::single(Metric::Fre)), vec![3.0]);
        assert_eq!(project(&f, &FeatureSubset::spatial()), vec![3.0, 0.5, 0.25]);
        assert_eq!(project(&f, &FeatureSubset::all()).len(), 6);
        let s = FeatureSubset::parse("f_stay+f_fre+f_pop").unwrap();
        assert_eq!(
            s.metrics().collect::<Vec<_>>(),
            vec![Metric::Fre, Metric::Pop, Metric::Stay]
        );
        assert!(FeatureSubset::parse("f_nope").is_err());
        assert_eq!(FeatureSubset::new("x", []).unwrap_err(), FeatureError::EmptySubset);
    }

    #[test]
    fn holiday_list() {
        let cal = HolidayList {
            days: [day_index(MONDAY)].into_iter().collect(),
            include_weekends: false,
        };
        assert!(cal.is_holiday(MONDAY + 3600));
        assert!(!cal.is_holiday(MONDAY + 5 * 86_400));
    }

    #[test]
    fn standardizer() {
        let rows = vec![vec![1.0, 5.0], vec![3.0, 5.0]];
        let s = Standardizer::fit(&rows);
        assert_eq!(s.transform(&[1.0, 5.0]), vec![-1.0, 0.0]);
    }
}
