#![no_std]
//! Algorithms for inferring social ties from stay-record trajectories and for
//! defending trajectories against that inference.
//!
//! The crate needs only `alloc`. File formats, the synthetic evaluation world
//! and the command-line tool live in the `trajsoc` crate.

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod anonymize;
pub mod colocation;
pub mod features;
pub mod geo;
pub mod gmm;
pub mod grid;
pub mod mobility;
pub mod nn;
pub mod publish;
pub mod stats;
pub mod traj;

pub use colocation::{coevent_score, extract_coevents, CoEvent, CoLocationConfig, Kernel};
pub use features::{compute_features, project, FeatureSubset, Metric, PairFeatures, VisitStats};
pub use geo::{haversine_m, LatLon, LocalProjection, PlanarPoint};
pub use grid::{Cell, GridSpec, TimeSlot};
pub use traj::{Instant, StayRecord, Trajectory, UserId};
