//! Stay records and per-user trajectories.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geo::LatLon;

/// Instant in UTC seconds since the Unix epoch.
pub type Instant = i64;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TrajError {
    #[error("stay interval is inverted or empty ({start} >= {stop})")]
    InvertedInterval { start: Instant, stop: Instant },
    #[error("coordinate out of range: lat={lat}, lon={lon}")]
    CoordinateOutOfRange { lat: f64, lon: f64 },
    #[error("stay {index} belongs to user {found}, expected {expected}")]
    MixedUsers {
        index: usize,
        expected: UserId,
        found: UserId,
    },
    #[error("stays {index} and {} overlap in time", index + 1)]
    Overlap { index: usize },
}

/// Opaque user identifier.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct UserId(pub String);

impl fmt::Display for UserId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for UserId {
    fn from(s: &str) -> Self {
        UserId(String::from(s))
    }
}

impl From<String> for UserId {
    fn from(s: String) -> Self {
        UserId(s)
    }
}

/// One user stay. The start coordinate is the representative location.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StayRecord {
    pub user_id: UserId,
    pub start_time: Instant,
    pub stop_time: Instant,
    pub start: LatLon,
    pub stop: LatLon,
}

impl StayRecord {
    pub fn new(
        user_id: UserId,
        start_time: Instant,
        stop_time: Instant,
        start: LatLon,
        stop: LatLon,
    ) -> Result<Self, TrajError> {
        let rec = StayRecord {
            user_id,
            start_time,
            stop_time,
            start,
            stop,
        };
        rec.validate()?;
        Ok(rec)
    }

    /// A stay whose start and stop coordinates coincide.
    pub fn at(user_id: UserId, start_time: Instant, stop_time: Instant, loc: LatLon) -> Result<Self, TrajError> {
        Self::new(user_id, start_time, stop_time, loc, loc)
    }

    pub fn validate(&self) -> Result<(), TrajError> {
        if self.start_time >= self.stop_time {
            return Err(TrajError::InvertedInterval {
                start: self.start_time,
                stop: self.stop_time,
            });
        }
        for p in [self.start, self.stop] {
            if !p.is_valid() {
                return Err(TrajError::CoordinateOutOfRange { lat: p.lat, lon: p.lon });
            }
        }
        Ok(())
    }

    pub fn location(&self) -> LatLon {
        self.start
    }

    pub fn duration_s(&self) -> i64 {
        self.stop_time - self.start_time
    }
}

/// Time-ordered, non-overlapping stays of a single user.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    user_id: UserId,
    stays: Vec<StayRecord>,
}

impl Trajectory {
    /// Sorts `stays` by start time and checks the trajectory invariants.
    pub fn new(user_id: UserId, mut stays: Vec<StayRecord>) -> Result<Self, TrajError> {
        stays.sort_by_key(|s| (s.start_time, s.stop_time));
        for (index, s) in stays.iter().enumerate() {
            if s.user_id != user_id {
                return Err(TrajError::MixedUsers {
                    index,
                    expected: user_id.clone(),
                    found: s.user_id.clone(),
                });
            }
            s.validate()?;
        }
        if let Some(index) = stays.windows(2).position(|w| w[1].start_time < w[0].stop_time) {
            return Err(TrajError::Overlap { index });
        }
        Ok(Trajectory { user_id, stays })
    }

    pub fn user_id(&self) -> &UserId {
        &self.user_id
    }

    pub fn stays(&self) -> &[StayRecord] {
        &self.stays
    }

    pub fn len(&self) -> usize {
        self.stays.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stays.is_empty()
    }

    pub fn into_stays(self) -> Vec<StayRecord> {
        self.stays
    }

    /// `(first start, last stop)`, or `None` when empty.
    pub fn window(&self) -> Option<(Instant, Instant)> {
        Some((self.stays.first()?.start_time, self.stays.last()?.stop_time))
    }
}

/// Groups records by user into validated trajectories.
pub fn group_by_user(records: &[StayRecord]) -> Result<BTreeMap<UserId, Trajectory>, TrajError> {
    let mut by_user: BTreeMap<UserId, Vec<StayRecord>> = BTreeMap::new();
    for r in records {
        by_user.entry(r.user_id.clone()).or_default().push(r.clone());
    }
    by_user
        .into_iter()
        .map(|(u, stays)| Trajectory::new(u.clone(), stays).map(|t| (u, t)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn p() -> LatLon {
        LatLon { lat: 28.0, lon: 113.0 }
    }

    #[test]
    fn inverted_interval_rejected() {
        let e = StayRecord::at("a".into(), 10, 10, p()).unwrap_err();
        assert_eq!(e, TrajError::InvertedInterval { start: 10, stop: 10 });
    }

    #[test]
    fn trajectory_sorts_and_rejects_overlap() {
        let a = StayRecord::at("a".into(), 100, 200, p()).unwrap();
        let b = StayRecord::at("a".into(), 0, 50, p()).unwrap();
        let t = Trajectory::new("a".into(), vec![a.clone(), b.clone()]).unwrap();
        assert_eq!(t.stays()[0], b);
        assert_eq!(t.window(), Some((0, 200)));

        let c = StayRecord::at("a".into(), 150, 250, p()).unwrap();
        assert_eq!(
            Trajectory::new("a".into(), vec![a, c]).unwrap_err(),
            TrajError::Overlap { index: 0 }
        );
    }

    #[test]
    fn mixed_users_rejected() {
        let a = StayRecord::at("a".into(), 0, 10, p()).unwrap();
        let b = StayRecord::at("b".into(), 20, 30, p()).unwrap();
        assert!(matches!(
            Trajectory::new("a".into(), vec![a.clone(), b.clone()]),
            Err(TrajError::MixedUsers { index: 1, .. })
        ));
        let g = group_by_user(&[a, b]).unwrap();
        assert_eq!(g.len(), 2);
    }
}
