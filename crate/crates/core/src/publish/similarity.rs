//! Distance between a real and a synthetic trajectory set along four
//! dimensions.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::semantic::{purpose_posterior, stay_features, SemanticModel};
use crate::colocation::{extract_coevents, CoLocationConfig};
use crate::features::VisitStats;
use crate::grid::{Cell, GridSpec};
use crate::stats::jensen_shannon;
use crate::traj::{Trajectory, UserId};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimilarityReport {
    /// JSD of cell-visit distributions.
    pub spatial_jsd: f64,
    /// JSD of start-slot-of-day distributions.
    pub temporal_jsd: f64,
    /// JSD of most likely visit-purpose distributions.
    pub semantic_jsd: f64,
    /// Jaccard index of the co-occurrence edge sets.
    pub social_jaccard: f64,
}

fn jsd_of<K: Ord + Clone>(a: &BTreeMap<K, f64>, b: &BTreeMap<K, f64>) -> f64 {
    let support: BTreeSet<&K> = a.keys().chain(b.keys()).collect();
    let p: Vec<f64> = support.iter().map(|k| a.get(*k).copied().unwrap_or(0.0)).collect();
    let q: Vec<f64> = support.iter().map(|k| b.get(*k).copied().unwrap_or(0.0)).collect();
    jensen_shannon(&p, &q)
}

fn histogram<K: Ord>(keys: impl IntoIterator<Item = K>) -> BTreeMap<K, f64> {
    let mut h = BTreeMap::new();
    for k in keys {
        *h.entry(k).or_insert(0.0) += 1.0;
    }
    h
}

/// Pairs whose summed event weight reaches `edge_threshold`.
pub fn coevent_edges(
    set: &BTreeMap<UserId, Trajectory>,
    cfg: &CoLocationConfig,
    grid: &GridSpec,
    edge_threshold: f64,
) -> BTreeSet<(UserId, UserId)> {
    let mut weight: BTreeMap<(UserId, UserId), f64> = BTreeMap::new();
    for e in extract_coevents(set, cfg, grid) {
        let (a, b) = e.pair();
        *weight.entry((a.clone(), b.clone())).or_default() += e.weight;
    }
    weight
        .into_iter()
        .filter(|(_, w)| *w >= edge_threshold)
        .map(|(p, _)| p)
        .collect()
}

pub fn jaccard<T: Ord>(a: &BTreeSet<T>, b: &BTreeSet<T>) -> f64 {
    let union = a.union(b).count();
    if union == 0 {
        return 1.0;
    }
    a.intersection(b).count() as f64 / union as f64
}

struct Profile {
    cells: BTreeMap<Cell, f64>,
    slots: BTreeMap<u32, f64>,
    purposes: BTreeMap<usize, f64>,
    edges: BTreeSet<(UserId, UserId)>,
}

fn profile(
    set: &BTreeMap<UserId, Trajectory>,
    grid: &GridSpec,
    semantic: &SemanticModel,
    cfg: &CoLocationConfig,
    edge_threshold: f64,
) -> Profile {
    let visits = VisitStats::from_trajectories(set.values(), grid);
    let stays = || set.values().flat_map(|t| t.stays());
    Profile {
        cells: histogram(stays().map(|s| grid.clamp_cell(s.location()))),
        slots: histogram(stays().map(|s| grid.time_slot(s.start_time).slot)),
        purposes: histogram(stays().map(|s| {
            let post = purpose_posterior(semantic, &stay_features(s, &visits, grid));
            (0..post.len()).fold(0, |best, j| if post[j] > post[best] { j } else { best })
        })),
        edges: coevent_edges(set, cfg, grid, edge_threshold),
    }
}

/// Each set is profiled on its own: cell entropies for the semantic features
/// and co-occurrence edges come from that set alone, so the report is
/// symmetric in its arguments.
pub fn similarity_report(
    real: &BTreeMap<UserId, Trajectory>,
    synth: &BTreeMap<UserId, Trajectory>,
    grid: &GridSpec,
    semantic: &SemanticModel,
    cfg: &CoLocationConfig,
    edge_threshold: f64,
) -> SimilarityReport {
    let a = profile(real, grid, semantic, cfg, edge_threshold);
    let b = profile(synth, grid, semantic, cfg, edge_threshold);
    SimilarityReport {
        spatial_jsd: jsd_of(&a.cells, &b.cells),
        temporal_jsd: jsd_of(&a.slots, &b.slots),
        semantic_jsd: jsd_of(&a.purposes, &b.purposes),
        social_jaccard: jaccard(&a.edges, &b.edges),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geo::LatLon;
    use crate::gmm::{DiagGaussian, Mixture};
    use crate::traj::StayRecord;
    use alloc::vec;

    fn grid() -> GridSpec {
        GridSpec::new(LatLon { lat: 28.0, lon: 112.9 }, 250.0, 10, 10, 60).unwrap()
    }

    fn semantic() -> SemanticModel {
        SemanticModel {
            mixture: Mixture {
                weights: vec![0.5, 0.5],
                components: vec![
                    DiagGaussian {
                        mean: vec![1.0, 10.0, 0.0, 0.0],
                        var: vec![1.0; 4],
                    },
                    DiagGaussian {
                        mean: vec![8.0, 20.0, 0.0, 0.0],
                        var: vec![1.0; 4],
                    },
                ],
            },
            trace: Vec::new(),
        }
    }

    fn set(cells: &[(u32, u32)], users: &[&str]) -> BTreeMap<UserId, Trajectory> {
        let g = grid();
        users
            .iter()
            .map(|u| {
                let stays = cells
                    .iter()
                    .enumerate()
                    .map(|(i, &(x, y))| {
                        let t0 = 1_568_592_000 + i as i64 * 7200;
                        StayRecord::at((*u).into(), t0, t0 + 3600, g.cell_center(Cell::new(x, y))).unwrap()
                    })
                    .collect();
                ((*u).into(), Trajectory::new((*u).into(), stays).unwrap())
            })
            .collect()
    }

    #[test]
    fn identical_sets() {
        let a = set(&[(1, 1), (2, 2), (3, 3)], &["a", "b", "c"]);
        let r = similarity_report(&a, &a, &grid(), &semantic(), &CoLocationConfig::default(), 1.0);
        assert_eq!(
            r,
            SimilarityReport {
                spatial_jsd: 0.0,
                temporal_jsd: 0.0,
                semantic_jsd: 0.0,
                social_jaccard: 1.0
            }
        );
    }

    #[test]
    fn disjoint_cells_and_symmetry() {
        let a = set(&[(1, 1), (2, 2)], &["a", "b"]);
        let b = set(&[(7, 7), (8, 8)], &["a", "c"]);
        let cfg = CoLocationConfig::default();
        let r = similarity_report(&a, &b, &grid(), &semantic(), &cfg, 1.0);
        assert!((r.spatial_jsd - 1.0).abs() < 1e-12);
        assert_eq!(r.temporal_jsd, 0.0);
        assert_eq!(r.social_jaccard, 0.0);
        let s = similarity_report(&b, &a, &grid(), &semantic(), &cfg, 1.0);
        assert_eq!(r, s);
    }
}
