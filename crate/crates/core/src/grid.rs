//! Spatial cells and daily time slots.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geo::{LatLon, LocalProjection, PlanarPoint};
use crate::traj::Instant;

pub const SECONDS_PER_DAY: i64 = 86_400;

// Snap tolerance, in cell units, so points built from cell corners land on the
// intended side of a boundary despite projection round-off.
const EDGE_SNAP: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GridError {
    #[error("cell size must be positive and finite, got {0}")]
    CellSize(f64),
    #[error("grid must have at least one cell per axis")]
    Empty,
    #[error("time slot of {0} minutes does not divide a day")]
    SlotLength(u32),
    #[error("point ({lat}, {lon}) lies outside the grid")]
    OutOfGrid { lat: f64, lon: f64 },
}

/// Grid cell index; `x` grows east, `y` grows north.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Cell {
    pub x: u32,
    pub y: u32,
}

impl Cell {
    pub fn new(x: u32, y: u32) -> Self {
        Cell { x, y }
    }
}

/// Regular meter-scaled grid anchored at its south-west corner, plus the
/// time-slot length used for temporal bucketing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub origin_lat: f64,
    pub origin_lon: f64,
    pub cell_size_m: f64,
    pub n_x: u32,
    pub n_y: u32,
    pub time_slot_minutes: u32,
}

/// Slot of day plus calendar flags.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TimeSlot {
    pub slot: u32,
    /// Monday = 0 .. Sunday = 6.
    pub weekday: u8,
    pub weekend: bool,
}

impl GridSpec {
    pub fn new(
        origin: LatLon,
        cell_size_m: f64,
        n_x: u32,
        n_y: u32,
        time_slot_minutes: u32,
    ) -> Result<Self, GridError> {
        let g = GridSpec {
            origin_lat: origin.lat,
            origin_lon: origin.lon,
            cell_size_m,
            n_x,
            n_y,
            time_slot_minutes,
        };
        g.validate()?;
        Ok(g)
    }

    /// Smallest grid anchored at the south-west corner of `points` that covers
    /// all of them, padded by one cell on each side.
    pub fn covering(points: &[LatLon], cell_size_m: f64, time_slot_minutes: u32) -> Result<Self, GridError> {
        if points.is_empty() {
            return Err(GridError::Empty);
        }
        let min_lat = points.iter().map(|p| p.lat).fold(f64::INFINITY, f64::min);
        let min_lon = points.iter().map(|p| p.lon).fold(f64::INFINITY, f64::min);
        let max_lat = points.iter().map(|p| p.lat).fold(f64::NEG_INFINITY, f64::max);
        let max_lon = points.iter().map(|p| p.lon).fold(f64::NEG_INFINITY, f64::max);
        let probe = LocalProjection::new(LatLon {
            lat: min_lat,
            lon: min_lon,
        });
        let corner = probe.to_latlon(PlanarPoint::new(-cell_size_m, -cell_size_m));
        let proj = LocalProjection::new(corner);
        let far = proj.to_plane(LatLon {
            lat: max_lat,
            lon: max_lon,
        });
        let n_x = libm::floor(far.x / cell_size_m) as u32 + 2;
        let n_y = libm::floor(far.y / cell_size_m) as u32 + 2;
        Self::new(corner, cell_size_m, n_x, n_y, time_slot_minutes)
    }

    pub fn validate(&self) -> Result<(), GridError> {
        if !(self.cell_size_m.is_finite() && self.cell_size_m > 0.0) {
            return Err(GridError::CellSize(self.cell_size_m));
        }
        if self.n_x == 0 || self.n_y == 0 {
            return Err(GridError::Empty);
        }
        if self.time_slot_minutes == 0 || 1440 % self.time_slot_minutes != 0 {
            return Err(GridError::SlotLength(self.time_slot_minutes));
        }
        Ok(())
    }

    pub fn origin(&self) -> LatLon {
        LatLon {
            lat: self.origin_lat,
            lon: self.origin_lon,
        }
    }

    pub fn projection(&self) -> LocalProjection {
        LocalProjection::new(self.origin())
    }

    pub fn slot_seconds(&self) -> i64 {
        self.time_slot_minutes as i64 * 60
    }

    pub fn slots_per_day(&self) -> u32 {
        1440 / self.time_slot_minutes
    }

    fn fractional_index(&self, point: LatLon) -> (f64, f64) {
        let p = self.projection().to_plane(point);
        (p.x / self.cell_size_m, p.y / self.cell_size_m)
    }

    /// Cell containing `point`; lower cell edges are inclusive.
    pub fn to_cell(&self, point: LatLon) -> Result<Cell, GridError> {
        let (fx, fy) = self.fractional_index(point);
        let ix = libm::floor(fx + EDGE_SNAP);
        let iy = libm::floor(fy + EDGE_SNAP);
        if !(ix >= 0.0 && iy >= 0.0 && ix < self.n_x as f64 && iy < self.n_y as f64) {
            return Err(GridError::OutOfGrid {
                lat: point.lat,
                lon: point.lon,
            });
        }
        Ok(Cell::new(ix as u32, iy as u32))
    }

    /// Like [`to_cell`](Self::to_cell) but saturates out-of-grid points to the
    /// nearest border cell.
    pub fn clamp_cell(&self, point: LatLon) -> Cell {
        let (fx, fy) = self.fractional_index(point);
        let clamp = |f: f64, n: u32| {
            let i = libm::floor(f + EDGE_SNAP);
            if i.is_nan() || i < 0.0 {
                0
            } else if i >= n as f64 {
                n - 1
            } else {
                i as u32
            }
        };
        Cell::new(clamp(fx, self.n_x), clamp(fy, self.n_y))
    }

    pub fn contains(&self, cell: Cell) -> bool {
        cell.x < self.n_x && cell.y < self.n_y
    }

    /// South-west corner of `cell`.
    pub fn cell_corner(&self, cell: Cell) -> LatLon {
        let s = self.cell_size_m;
        self.projection()
            .to_latlon(PlanarPoint::new(cell.x as f64 * s, cell.y as f64 * s))
    }

    pub fn cell_center(&self, cell: Cell) -> LatLon {
        let s = self.cell_size_m;
        self.projection()
            .to_latlon(PlanarPoint::new((cell.x as f64 + 0.5) * s, (cell.y as f64 + 0.5) * s))
    }

    pub fn time_slot(&self, t: Instant) -> TimeSlot {
        time_slot(t, self.time_slot_minutes)
    }

    /// Index of the slot containing `t`, counted from the epoch.
    pub fn absolute_slot(&self, t: Instant) -> i64 {
        t.div_euclid(self.slot_seconds())
    }
}

pub fn day_index(t: Instant) -> i64 {
    t.div_euclid(SECONDS_PER_DAY)
}

/// Monday = 0 .. Sunday = 6 (the epoch fell on a Thursday).
pub fn weekday(t: Instant) -> u8 {
    (day_index(t) + 3).rem_euclid(7) as u8
}

pub fn is_weekend(t: Instant) -> bool {
    weekday(t) >= 5
}

pub fn time_slot(t: Instant, slot_minutes: u32) -> TimeSlot {
    let minutes = t.rem_euclid(SECONDS_PER_DAY) / 60;
    let wd = weekday(t);
    TimeSlot {
        slot: (minutes / slot_minutes as i64) as u32,
        weekday: wd,
        weekend: wd >= 5,
    }
}
