//! Visit-purpose model: a diagonal Gaussian mixture over per-stay feature
//! vectors `(duration_h, start_hour, weekend, cell_entropy)`.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::PublishError;
use crate::colocation::CoEvent;
use crate::features::VisitStats;
use crate::gmm::{fit_em, Component, DiagGaussian, EmOptions, Mixture};
use crate::grid::{is_weekend, GridSpec, SECONDS_PER_DAY};
use crate::traj::{StayRecord, Trajectory, UserId};

pub const DEFAULT_PURPOSES: usize = 4;
pub const FEATURE_DIM: usize = 4;
pub const SEMANTIC_VAR_FLOOR: f64 = 1e-2;

pub fn stay_features(stay: &StayRecord, visits: &VisitStats, grid: &GridSpec) -> [f64; FEATURE_DIM] {
    [
        stay.duration_s() as f64 / 3600.0,
        stay.start_time.rem_euclid(SECONDS_PER_DAY) as f64 / 3600.0,
        is_weekend(stay.start_time) as u8 as f64,
        visits.entropy(grid.clamp_cell(stay.location())),
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SemanticModel {
    pub mixture: Mixture<DiagGaussian>,
    /// Log-likelihood before EM and after each iteration.
    pub trace: Vec<f64>,
}

impl SemanticModel {
    pub fn n_purposes(&self) -> usize {
        self.mixture.len()
    }
}

pub fn fit_semantic(
    features: &[[f64; FEATURE_DIM]],
    n_purposes: usize,
    seed: u64,
) -> Result<SemanticModel, PublishError> {
    let pts: Vec<Vec<f64>> = features.iter().map(|f| f.to_vec()).collect();
    let fit = fit_em::<DiagGaussian>(&pts, &EmOptions::new(n_purposes, SEMANTIC_VAR_FLOOR, seed))?;
    Ok(SemanticModel {
        mixture: fit.mixture,
        trace: fit.trace,
    })
}

/// `pi_l N(v | mu_l, S_l) / sum_l' pi_l' N(v | mu_l', S_l')`, evaluated in
/// log space.
pub fn purpose_posterior(model: &SemanticModel, v: &[f64]) -> Vec<f64> {
    model.mixture.responsibilities(v)
}

/// Posterior over purposes for every stay of every user.
pub fn stay_posteriors(
    trajectories: &BTreeMap<UserId, Trajectory>,
    model: &SemanticModel,
    visits: &VisitStats,
    grid: &GridSpec,
) -> BTreeMap<UserId, Vec<Vec<f64>>> {
    trajectories
        .iter()
        .map(|(u, t)| {
            let post = t
                .stays()
                .iter()
                .map(|s| purpose_posterior(model, &stay_features(s, visits, grid)))
                .collect();
            (u.clone(), post)
        })
        .collect()
}

/// Mean purpose posterior over both stays of every co-occurrence event of a
/// pair; all zeros when the pair never co-occurs.
pub fn pair_purpose_profile(
    events: &[CoEvent],
    posteriors: &BTreeMap<UserId, Vec<Vec<f64>>>,
    n_purposes: usize,
) -> Vec<f64> {
    let mut acc = vec![0.0; n_purposes];
    let mut n = 0usize;
    for e in events {
        for (u, i) in [(&e.user_a, e.stay_a), (&e.user_b, e.stay_b)] {
            if let Some(p) = posteriors.get(u).and_then(|v| v.get(i)) {
                acc.iter_mut().zip(p).for_each(|(a, x)| *a += x);
                n += 1;
            }
        }
    }
    if n > 0 {
        acc.iter_mut().for_each(|a| *a /= n as f64);
    }
    acc
}

/// Features of all stays, with cell entropies taken from the same data.
pub fn collect_features(trajectories: &BTreeMap<UserId, Trajectory>, grid: &GridSpec) -> Vec<[f64; FEATURE_DIM]> {
    let visits = VisitStats::from_trajectories(trajectories.values(), grid);
    trajectories
        .values()
        .flat_map(|t| t.stays().iter().map(|s| stay_features(s, &visits, grid)))
        .collect()
}

impl SemanticModel {
    /// Component means, one row per purpose.
    pub fn means(&self) -> Vec<Vec<f64>> {
        self.mixture.components.iter().map(|c| c.mean().to_vec()).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::rng_from;
    use rand::Rng;
    use rand_distr::{Distribution, Normal};

    fn archetypes() -> [([f64; 4], [f64; 4]); 4] {
        // (mean, std) with the weekend column holding a probability.
        [
            ([3.0, 20.0, 0.6, 1.5], [0.4, 1.0, 0.0, 0.2]),
            ([1.0, 13.0, 0.3, 2.5], [0.2, 1.0, 0.0, 0.2]),
            ([10.0, 21.0, 0.3, 0.0], [0.8, 1.0, 0.0, 0.05]),
            ([0.5, 10.0, 0.0, 1.0], [0.1, 0.8, 0.0, 0.2]),
        ]
    }

    fn planted(seed: u64) -> (Vec<[f64; 4]>, Vec<usize>) {
        let mut rng = rng_from(seed, 0);
        let mut pts = Vec::new();
        let mut labels = Vec::new();
        for (a, (mu, sd)) in archetypes().iter().enumerate() {
            for _ in 0..80 {
                let mut v = [0.0; 4];
                for d in 0..4 {
                    v[d] = if d == 2 {
                        (rng.random::<f64>() < mu[2]) as u8 as f64
                    } else {
                        Normal::new(mu[d], sd[d]).unwrap().sample(&mut rng)
                    };
                }
                pts.push(v);
                labels.push(a);
            }
        }
        (pts, labels)
    }

    #[test]
    fn one_purpose_is_feature_mean() {
        let (pts, _) = planted(1);
        let m = fit_semantic(&pts, 1, 0).unwrap();
        for d in 0..4 {
            let mean = pts.iter().map(|p| p[d]).sum::<f64>() / pts.len() as f64;
            assert!((m.means()[0][d] - mean).abs() < 1e-9);
        }
    }

    #[test]
    fn planted_purposes_are_recovered() {
        let mut good = 0;
        for seed in 0..10 {
            let (pts, labels) = planted(seed);
            let m = fit_semantic(&pts, 4, seed).unwrap();
            assert!(m.trace.windows(2).all(|w| w[1] >= w[0] - 1e-9));
            let mut majority = Vec::new();
            for a in 0..4 {
                let mut votes = [0usize; 4];
                for (p, &l) in pts.iter().zip(&labels) {
                    if l == a {
                        votes[m.mixture.assign(p)] += 1;
                    }
                }
                majority.push((0..4).max_by_key(|&j| (votes[j], core::cmp::Reverse(j))).unwrap());
            }
            majority.sort_unstable();
            majority.dedup();
            good += (majority.len() == 4) as usize;
        }
        assert!(good >= 8, "{good}/10");
    }

    fn two_component(sep: f64) -> SemanticModel {
        SemanticModel {
            mixture: Mixture {
                weights: vec![0.5, 0.5],
                components: vec![
                    DiagGaussian {
                        mean: vec![0.0; 4],
                        var: vec![1.0; 4],
                    },
                    DiagGaussian {
                        mean: vec![sep, 0.0, 0.0, 0.0],
                        var: vec![1.0; 4],
                    },
                ],
            },
            trace: Vec::new(),
        }
    }

    #[test]
    fn posterior_properties() {
        let m = two_component(10.0);
        assert!(purpose_posterior(&m, &[0.0; 4])[0] > 0.99);
        assert!(purpose_posterior(&m, &[10.0, 0.0, 0.0, 0.0])[1] > 0.99);
        let same = two_component(0.0);
        assert!(purpose_posterior(&same, &[3.0, 1.0, 0.0, 2.0])
            .iter()
            .all(|p| (p - 0.5).abs() < 1e-15));
        let p = purpose_posterior(&m, &[1e6, -1e6, 5.0, 0.0]);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9 && p.iter().all(|x| x.is_finite()));
    }

    #[test]
    fn posterior_is_permutation_equivariant() {
        let m = two_component(3.0);
        let mut swapped = m.clone();
        swapped.mixture.weights.reverse();
        swapped.mixture.components.reverse();
        for x in [0.0, 1.0, 1.5, 2.2, 7.0] {
            let v = [x, 0.3, 1.0, 0.2];
            let a = purpose_posterior(&m, &v);
            let b = purpose_posterior(&swapped, &v);
            assert!((a[0] - b[1]).abs() < 1e-12 && (a[1] - b[0]).abs() < 1e-12);
        }
    }
}
