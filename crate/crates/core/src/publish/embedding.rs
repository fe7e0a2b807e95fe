//! Sparse stay-embedding tensors `M(x, y, k) = (t, d)`: the `k`-th stay in
//! cell `(x, y)` starts in slot `t` and lasts `d` slots.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::PublishError;
use crate::grid::{Cell, GridSpec};
use crate::traj::{StayRecord, Trajectory, UserId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct EmbeddingEntry {
    pub x: u32,
    pub y: u32,
    pub k: usize,
    /// Start slot counted from the epoch.
    pub t: i64,
    /// Duration in slots, at least 1.
    pub d: i64,
}

impl EmbeddingEntry {
    pub fn cell(&self) -> Cell {
        Cell::new(self.x, self.y)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StayEmbedding {
    pub user_id: UserId,
    pub grid: GridSpec,
    /// Maximum number of stays per cell.
    pub depth: usize,
    /// Sorted by `(x, y, k)`.
    pub entries: Vec<EmbeddingEntry>,
}

impl StayEmbedding {
    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, x: u32, y: u32, k: usize) -> Option<&EmbeddingEntry> {
        self.entries
            .binary_search_by(|e| (e.x, e.y, e.k).cmp(&(x, y, k)))
            .ok()
            .map(|i| &self.entries[i])
    }

    /// Checks ordering, depth and per-cell contiguity of `k`.
    pub fn validate(&self) -> Result<(), PublishError> {
        for w in self.entries.windows(2) {
            if (w[0].x, w[0].y, w[0].k) >= (w[1].x, w[1].y, w[1].k) {
                return Err(PublishError::Malformed("entries not sorted by (x, y, k)"));
            }
        }
        let mut prev: Option<&EmbeddingEntry> = None;
        for e in &self.entries {
            if !self.grid.contains(e.cell()) {
                return Err(PublishError::Malformed("entry outside the grid"));
            }
            if e.k >= self.depth {
                return Err(PublishError::Malformed("k exceeds the embedding depth"));
            }
            if e.d < 1 {
                return Err(PublishError::Malformed("duration below one slot"));
            }
            let same_cell = prev.is_some_and(|p| p.cell() == e.cell());
            let expected_k = if same_cell { prev.unwrap().k + 1 } else { 0 };
            if e.k != expected_k {
                return Err(PublishError::Malformed("k indices are not contiguous from 0"));
            }
            if same_cell && prev.unwrap().t >= e.t {
                return Err(PublishError::Malformed("stays in a cell are not time-ordered"));
            }
            prev = Some(e);
        }
        Ok(())
    }
}

/// Encodes a trajectory: start times floor to their slot and durations round
/// up to whole slots. Visits to one cell that land in the same start slot
/// merge into a single entry.
pub fn embed_trajectory(t: &Trajectory, grid: &GridSpec, depth: usize) -> Result<StayEmbedding, PublishError> {
    let slot_s = grid.slot_seconds();
    let mut per_cell: BTreeMap<Cell, Vec<(i64, i64)>> = BTreeMap::new();
    for s in t.stays() {
        let cell = grid.to_cell(s.location())?;
        let start = grid.absolute_slot(s.start_time);
        let d = (s.stop_time - start * slot_s + slot_s - 1).div_euclid(slot_s).max(1);
        let visits = per_cell.entry(cell).or_default();
        match visits.last_mut() {
            Some(last) if last.0 == start => last.1 = last.1.max(d),
            _ => visits.push((start, d)),
        }
    }
    let mut entries = Vec::new();
    for (cell, visits) in per_cell {
        if visits.len() > depth {
            return Err(PublishError::CellOverflow {
                cell,
                count: visits.len(),
            });
        }
        entries.extend(visits.into_iter().enumerate().map(|(k, (t, d))| EmbeddingEntry {
            x: cell.x,
            y: cell.y,
            k,
            t,
            d,
        }));
    }
    Ok(StayEmbedding {
        user_id: t.user_id().clone(),
        grid: *grid,
        depth,
        entries,
    })
}

/// Rebuilds a trajectory at cell centers and slot boundaries. Where decoded
/// stays overlap, the later one is trimmed to start when the earlier ends,
/// and dropped if nothing remains.
pub fn decode_embedding(m: &StayEmbedding) -> Result<Trajectory, PublishError> {
    m.validate()?;
    let slot_s = m.grid.slot_seconds();
    let mut spans: Vec<(i64, i64, Cell)> = m.entries.iter().map(|e| (e.t, e.t + e.d, e.cell())).collect();
    spans.sort();
    let mut stays = Vec::with_capacity(spans.len());
    let mut last_end = i64::MIN;
    for (a, b, cell) in spans {
        let a = a.max(last_end);
        if a >= b {
            continue;
        }
        let loc = m.grid.cell_center(cell);
        stays.push(StayRecord {
            user_id: m.user_id.clone(),
            start_time: a * slot_s,
            stop_time: b * slot_s,
            start: loc,
            stop: loc,
        });
        last_end = b;
    }
    Trajectory::new(m.user_id.clone(), stays).map_err(|_| PublishError::Malformed("decoded stays are invalid"))
}

/// The trajectory as the embedding sees it.
pub fn quantize(t: &Trajectory, grid: &GridSpec) -> Result<Trajectory, PublishError> {
    decode_embedding(&embed_trajectory(t, grid, usize::MAX)?)
}
