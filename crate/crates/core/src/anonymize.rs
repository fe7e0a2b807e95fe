//! Trajectory k-anonymity by statistically constrained dummy synthesis.
//!
//! Each published trajectory is hidden among `k - 1` dummies drawn from the
//! owner's mobility model. A candidate dummy is accepted only when every
//! chosen summary statistic lies within a relative tolerance `l` of the real
//! trajectory's value.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geo::{haversine_m, LatLon, LocalProjection, PlanarPoint};
use crate::grid::GridSpec;
use crate::mobility::{sample_location, MobilityModel3D};
use crate::stats::rng_from;
use crate::traj::{StayRecord, Trajectory};

/// Floor on `|f(real)|` in the relative deviation.
pub const DEVIATION_EPSILON: f64 = 1e-9;

const SHUFFLE_STREAM: u64 = u64::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Statistic {
    StayCount,
    TotalDurationH,
    RadiusOfGyrationM,
    SocialVisitFraction,
}

impl Statistic {
    pub const ALL: [Statistic; 4] = [
        Statistic::StayCount,
        Statistic::TotalDurationH,
        Statistic::RadiusOfGyrationM,
        Statistic::SocialVisitFraction,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Statistic::StayCount => "stay_count",
            Statistic::TotalDurationH => "total_duration_h",
            Statistic::RadiusOfGyrationM => "radius_of_gyration_m",
            Statistic::SocialVisitFraction => "social_visit_fraction",
        }
    }
}

impl fmt::Display for Statistic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Statistic {
    type Err = AnonymizeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Statistic::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or(AnonymizeError::InvalidPolicy("unknown statistic"))
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnonymizeError {
    #[error("trajectory is empty")]
    EmptyTrajectory,
    #[error("invalid policy: {0}")]
    InvalidPolicy(&'static str),
    #[error(
        "only {accepted} of {needed} dummies accepted in {attempts} attempts (acceptance rate {acceptance_rate:.4})"
    )]
    InsufficientCandidates {
        accepted: usize,
        needed: usize,
        attempts: usize,
        acceptance_rate: f64,
    },
}

/// What `social_visit_fraction` is measured against.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct StatsContext {
    pub social_centers: Vec<LatLon>,
    pub alpha_d: f64,
}

impl StatsContext {
    pub fn from_model(model: &MobilityModel3D, alpha_d: f64) -> Self {
        StatsContext {
            social_centers: model.social_centers(),
            alpha_d,
        }
    }
}

fn radius_of_gyration(stays: &[StayRecord]) -> f64 {
    let locs: Vec<LatLon> = stays.iter().map(|s| s.location()).collect();
    let Some(proj) = LocalProjection::centered_on(&locs) else {
        return 0.0;
    };
    let pts: Vec<PlanarPoint> = locs.iter().map(|&l| proj.to_plane(l)).collect();
    let n = pts.len() as f64;
    let cx = pts.iter().map(|p| p.x).sum::<f64>() / n;
    let cy = pts.iter().map(|p| p.y).sum::<f64>() / n;
    let c = PlanarPoint::new(cx, cy);
    libm::sqrt(pts.iter().map(|p| p.distance(&c).powi(2)).sum::<f64>() / n)
}

pub fn trajectory_stat(t: &Trajectory, stat: Statistic, ctx: &StatsContext) -> Result<f64, AnonymizeError> {
    if t.is_empty() {
        return Err(AnonymizeError::EmptyTrajectory);
    }
    let stays = t.stays();
    Ok(match stat {
        Statistic::StayCount => stays.len() as f64,
        Statistic::TotalDurationH => stays.iter().map(|s| s.duration_s()).sum::<i64>() as f64 / 3600.0,
        Statistic::RadiusOfGyrationM => radius_of_gyration(stays),
        Statistic::SocialVisitFraction => {
            let near = stays
                .iter()
                .filter(|s| {
                    ctx.social_centers
                        .iter()
                        .any(|&c| haversine_m(s.location(), c) <= ctx.alpha_d)
                })
                .count();
            near as f64 / stays.len() as f64
        }
    })
}

pub fn trajectory_stats(
    t: &Trajectory,
    stats: &BTreeSet<Statistic>,
    ctx: &StatsContext,
) -> Result<BTreeMap<Statistic, f64>, AnonymizeError> {
    stats.iter().map(|&s| Ok((s, trajectory_stat(t, s, ctx)?))).collect()
}

pub fn relative_deviation(candidate: f64, real: f64) -> f64 {
    (candidate - real).abs() / real.abs().max(DEVIATION_EPSILON)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnonymityPolicy {
    pub k: usize,
    pub l: f64,
    pub stats: BTreeSet<Statistic>,
    pub max_attempts: usize,
}

impl AnonymityPolicy {
    pub fn new(
        k: usize,
        l: f64,
        stats: impl IntoIterator<Item = Statistic>,
        max_attempts: usize,
    ) -> Result<Self, AnonymizeError> {
        let p = AnonymityPolicy {
            k,
            l,
            stats: stats.into_iter().collect(),
            max_attempts,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), AnonymizeError> {
        if self.k == 0 {
            return Err(AnonymizeError::InvalidPolicy("k must be at least 1"));
        }
        if !(self.l > 0.0 && self.l < 1.0) {
            return Err(AnonymizeError::InvalidPolicy("l must lie in (0, 1)"));
        }
        if self.stats.is_empty() {
            return Err(AnonymizeError::InvalidPolicy("statistic set is empty"));
        }
        if self.max_attempts < self.k {
            return Err(AnonymizeError::InvalidPolicy("max_attempts must be at least k"));
        }
        Ok(())
    }
}

/// Private record of how a set was built. Never part of the published data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Audit {
    /// Position of the real trajectory in [`AnonymitySet::members`].
    pub real_position: usize,
    pub real_stats: BTreeMap<Statistic, f64>,
    /// Relative deviation of each accepted dummy, in dummy order.
    pub deviations: Vec<BTreeMap<Statistic, f64>>,
    pub attempts: usize,
    pub acceptance_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnonymitySet {
    pub real: Trajectory,
    pub dummies: Vec<Trajectory>,
    /// `order[i]` is 0 for the real trajectory and `j + 1` for `dummies[j]`.
    pub order: Vec<usize>,
    pub audit: Audit,
}

impl AnonymitySet {
    pub fn k(&self) -> usize {
        self.order.len()
    }

    /// Members in published order.
    pub fn members(&self) -> impl Iterator<Item = &Trajectory> + '_ {
        self.order
            .iter()
            .map(move |&i| if i == 0 { &self.real } else { &self.dummies[i - 1] })
    }
}

/// Synthesizes one dummy: every template stay keeps its times, and its
/// location is drawn from the model at the stay's starting slot and snapped
/// to the center of its grid cell. `influence`, when given, holds one
/// cluster influence map per slot of the day.
pub fn generate_dummy(
    model: &MobilityModel3D,
    template: &Trajectory,
    influence: Option<&[BTreeMap<usize, f64>]>,
    grid: &GridSpec,
    seed: u64,
) -> Trajectory {
    let mut rng = rng_from(seed, 0);
    let spd = model.slots_per_day();
    let stays = template
        .stays()
        .iter()
        .map(|s| {
            let slot = crate::grid::time_slot(s.start_time, model.slot_minutes).slot % spd;
            let map = influence.and_then(|t| t.get(slot as usize));
            let draw = sample_location(model, slot, map, &mut rng);
            let loc = grid.cell_center(grid.clamp_cell(model.to_latlon(draw.point)));
            StayRecord {
                user_id: template.user_id().clone(),
                start_time: s.start_time,
                stop_time: s.stop_time,
                start: loc,
                stop: loc,
            }
        })
        .collect();
    Trajectory::new(template.user_id().clone(), stays).expect("template times are valid and disjoint")
}

/// Rejection-samples `k - 1` dummies. Candidate `i` is generated from the
/// `i`-th seeded stream, so the outcome does not depend on evaluation order.
pub fn k_anonymize(
    real: &Trajectory,
    model: &MobilityModel3D,
    policy: &AnonymityPolicy,
    ctx: &StatsContext,
    influence: Option<&[BTreeMap<usize, f64>]>,
    grid: &GridSpec,
    seed: u64,
) -> Result<AnonymitySet, AnonymizeError> {
    policy.validate()?;
    let real_stats = trajectory_stats(real, &policy.stats, ctx)?;
    let needed = policy.k - 1;
    let mut dummies = Vec::with_capacity(needed);
    let mut deviations = Vec::with_capacity(needed);
    let mut attempts = 0;
    while dummies.len() < needed && attempts < policy.max_attempts {
        let cand = generate_dummy(
            model,
            real,
            influence,
            grid,
            crate::stats::mix_seed(seed, attempts as u64),
        );
        attempts += 1;
        let stats = trajectory_stats(&cand, &policy.stats, ctx)?;
        let dev: BTreeMap<Statistic, f64> = stats
            .iter()
            .map(|(&s, &v)| (s, relative_deviation(v, real_stats[&s])))
            .collect();
        if dev.values().all(|&d| d <= policy.l) {
            dummies.push(cand);
            deviations.push(dev);
        }
    }
    let acceptance_rate = if attempts == 0 {
        1.0
    } else {
        dummies.len() as f64 / attempts as f64
    };
    if dummies.len() < needed {
        return Err(AnonymizeError::InsufficientCandidates {
            accepted: dummies.len(),
            needed,
            attempts,
            acceptance_rate,
        });
    }
    let mut order: Vec<usize> = (0..policy.k).collect();
    order.shuffle(&mut rng_from(seed, SHUFFLE_STREAM));
    let real_position = order.iter().position(|&i| i == 0).expect("real member present");
    Ok(AnonymitySet {
        real: real.clone(),
        dummies,
        order,
        audit: Audit {
            real_position,
            real_stats,
            deviations,
            attempts,
            acceptance_rate,
        },
    })
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AuditViolation {
    #[error("set has {found} members, expected {expected}")]
    Size { expected: usize, found: usize },
    #[error("order is not a permutation of the members")]
    Order,
    #[error("member {member} spans a different time window")]
    Window { member: usize },
    #[error("member {member} deviates by {deviation} on {stat}")]
    Deviation {
        member: usize,
        stat: Statistic,
        deviation: f64,
    },
    #[error("member {member} has no stays")]
    Empty { member: usize },
}

/// Re-checks a set against `policy` from scratch, recomputing every
/// statistic rather than trusting the recorded audit.
pub fn audit(
    set: &AnonymitySet,
    policy: &AnonymityPolicy,
    ctx: &StatsContext,
    slot_seconds: i64,
) -> Result<(), AuditViolation> {
    if set.dummies.len() + 1 != policy.k || set.order.len() != policy.k {
        return Err(AuditViolation::Size {
            expected: policy.k,
            found: set.order.len(),
        });
    }
    let mut seen = set.order.clone();
    seen.sort_unstable();
    if seen.iter().enumerate().any(|(i, &v)| i != v) || set.order[set.audit.real_position] != 0 {
        return Err(AuditViolation::Order);
    }
    let Some((start, end)) = set.real.window() else {
        return Err(AuditViolation::Empty { member: 0 });
    };
    for (j, d) in set.dummies.iter().enumerate() {
        let member = j + 1;
        let (s, e) = d.window().ok_or(AuditViolation::Empty { member })?;
        if (s - start).abs() > slot_seconds || (e - end).abs() > slot_seconds {
            return Err(AuditViolation::Window { member });
        }
        for &stat in &policy.stats {
            let real = trajectory_stat(&set.real, stat, ctx).map_err(|_| AuditViolation::Empty { member: 0 })?;
            let v = trajectory_stat(d, stat, ctx).map_err(|_| AuditViolation::Empty { member })?;
            let deviation = relative_deviation(v, real);
            if deviation > policy.l {
                return Err(AuditViolation::Deviation {
                    member,
                    stat,
                    deviation,
                });
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gmm::Gaussian2;
    use crate::mobility::Cluster;
    use alloc::vec;

    const DAY: i64 = 1_568_592_000;

    fn proj() -> LocalProjection {
        LocalProjection::new(LatLon { lat: 28.1, lon: 112.95 })
    }

    fn traj(points: &[(f64, f64, i64, i64)]) -> Trajectory {
        let p = proj();
        let stays = points
            .iter()
            .map(|&(x, y, a, b)| {
                StayRecord::at("u".into(), DAY + a, DAY + b, p.to_latlon(PlanarPoint::new(x, y))).unwrap()
            })
            .collect();
        Trajectory::new("u".into(), stays).unwrap()
    }

    fn all() -> BTreeSet<Statistic> {
        Statistic::ALL.into_iter().collect()
    }

    #[test]
    fn single_stay_and_pair_radius() {
        let ctx = StatsContext::default();
        let one = traj(&[(10.0, 10.0, 0, 60)]);
        assert_eq!(trajectory_stat(&one, Statistic::RadiusOfGyrationM, &ctx).unwrap(), 0.0);
        let pair = traj(&[(0.0, 0.0, 0, 60), (0.0, 2000.0, 100, 200)]);
        let r = trajectory_stat(&pair, Statistic::RadiusOfGyrationM, &ctx).unwrap();
        assert!((r - 1000.0).abs() < 1e-3, "{r}");
    }

    #[test]
    fn five_stay_hand_values() {
        // Corners of a 300 x 400 m rectangle plus its center.
        let t = traj(&[
            (0.0, 0.0, 0, 3600),
            (300.0, 0.0, 4000, 5800),
            (0.0, 400.0, 6000, 13_200),
            (300.0, 400.0, 14_000, 15_800),
            (150.0, 200.0, 16_000, 23_200),
        ]);
        let p = proj();
        let ctx = StatsContext {
            social_centers: vec![
                p.to_latlon(PlanarPoint::new(0.0, 0.0)),
                p.to_latlon(PlanarPoint::new(300.0, 400.0)),
            ],
            alpha_d: 100.0,
        };
        let s = trajectory_stats(&t, &all(), &ctx).unwrap();
        assert_eq!(s[&Statistic::StayCount], 5.0);
        // 1 + 0.5 + 2 + 0.5 + 2 hours.
        assert!((s[&Statistic::TotalDurationH] - 6.0).abs() < 1e-12);
        // Four corners at 250 m from the center, the center at 0: sqrt(4 * 250^2 / 5).
        assert!((s[&Statistic::RadiusOfGyrationM] - 223.606_797_749_979).abs() < 1e-2);
        assert!((s[&Statistic::SocialVisitFraction] - 0.4).abs() < 1e-12);
        let empty = Trajectory::new("u".into(), Vec::new()).unwrap();
        assert_eq!(
            trajectory_stats(&empty, &all(), &ctx).unwrap_err(),
            AnonymizeError::EmptyTrajectory
        );
    }

    fn model(means: &[[f64; 2]], row: &[f64]) -> MobilityModel3D {
        let m = means.len();
        MobilityModel3D {
            user_id: "u".into(),
            projection: proj(),
            clusters: means
                .iter()
                .map(|&mean| Cluster {
                    gaussian: Gaussian2 {
                        mean,
                        cov: [[2500.0, 0.0], [0.0, 2500.0]],
                    },
                    weight: 1.0 / m as f64,
                })
                .collect(),
            slot_minutes: 60,
            temporal_profile: vec![row.to_vec(); 24],
            social_flags: vec![false; m],
            visit_counts: vec![1; m],
        }
    }

    fn grid() -> GridSpec {
        let p = proj();
        GridSpec::new(p.to_latlon(PlanarPoint::new(-5000.0, -5000.0)), 250.0, 40, 40, 60).unwrap()
    }

    #[test]
    fn dummy_keeps_skeleton() {
        let m = model(&[[1000.0, 1000.0]], &[1.0]);
        let t = traj(&[(0.0, 0.0, 3600, 7200)]);
        let d = generate_dummy(&m, &t, None, &grid(), 3);
        assert_eq!(d.len(), 1);
        let s = &d.stays()[0];
        assert_eq!((s.start_time, s.stop_time), (DAY + 3600, DAY + 7200));
        let dist = proj()
            .to_plane(s.location())
            .distance(&PlanarPoint::new(1000.0, 1000.0));
        assert!(dist < 400.0, "{dist}");
        let g = grid();
        assert_eq!(g.cell_center(g.to_cell(s.location()).unwrap()), s.location());
    }

    #[test]
    fn dummy_cluster_usage_follows_profile() {
        let m = model(&[[-3000.0, 0.0], [3000.0, 0.0]], &[0.3, 0.7]);
        let t = traj(&[(0.0, 0.0, 0, 600), (0.0, 0.0, 3600, 4200), (0.0, 0.0, 7200, 7800)]);
        let mut east = 0usize;
        let mut total = 0usize;
        for seed in 0..100 {
            for s in generate_dummy(&m, &t, None, &grid(), seed).stays() {
                east += (proj().to_plane(s.location()).x > 0.0) as usize;
                total += 1;
            }
        }
        let chi2 = {
            let (e1, e0) = (0.7 * total as f64, 0.3 * total as f64);
            (east as f64 - e1).powi(2) / e1 + ((total - east) as f64 - e0).powi(2) / e0
        };
        assert!(chi2 < 6.635, "chi2 {chi2}");
        for seed in 0..20 {
            assert_eq!(generate_dummy(&m, &t, None, &grid(), seed).len(), t.len());
        }
    }

    fn fixture() -> (Trajectory, MobilityModel3D) {
        let t = traj(&[
            (-1000.0, 0.0, 0, 3600),
            (900.0, 50.0, 7200, 14_400),
            (-1050.0, 20.0, 18_000, 25_200),
            (1000.0, -30.0, 30_000, 36_000),
        ]);
        (t, model(&[[-1000.0, 0.0], [1000.0, 0.0]], &[0.5, 0.5]))
    }

    #[test]
    fn k_one_is_identity() {
        let (t, m) = fixture();
        let p = AnonymityPolicy::new(1, 0.5, all(), 1).unwrap();
        let set = k_anonymize(&t, &m, &p, &StatsContext::default(), None, &grid(), 0).unwrap();
        assert!(set.dummies.is_empty());
        assert_eq!(set.members().collect::<Vec<_>>(), vec![&t]);
    }

    #[test]
    fn permissive_succeeds_and_strict_fails() {
        let (t, m) = fixture();
        let ctx = StatsContext::default();
        let stats: BTreeSet<Statistic> = [
            Statistic::StayCount,
            Statistic::TotalDurationH,
            Statistic::RadiusOfGyrationM,
        ]
        .into();
        let p = AnonymityPolicy::new(3, 0.99, stats.clone(), 200).unwrap();
        let set = k_anonymize(&t, &m, &p, &ctx, None, &grid(), 7).unwrap();
        assert_eq!(set.k(), 3);
        assert!(set.audit.deviations.iter().flat_map(|d| d.values()).all(|&d| d <= 0.99));
        audit(&set, &p, &ctx, 3600).unwrap();
        assert_eq!(set, k_anonymize(&t, &m, &p, &ctx, None, &grid(), 7).unwrap());

        let strict = AnonymityPolicy::new(10, 1e-6, stats, 200).unwrap();
        match k_anonymize(&t, &m, &strict, &ctx, None, &grid(), 7) {
            Err(AnonymizeError::InsufficientCandidates { needed, attempts, .. }) => {
                assert_eq!((needed, attempts), (9, 200));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn audit_catches_tampering() {
        let (t, m) = fixture();
        let ctx = StatsContext::default();
        let p = AnonymityPolicy::new(3, 0.99, [Statistic::StayCount, Statistic::RadiusOfGyrationM], 200).unwrap();
        let mut set = k_anonymize(&t, &m, &p, &ctx, None, &grid(), 1).unwrap();
        let mut stays = set.dummies[0].clone().into_stays();
        stays.pop();
        set.dummies[0] = Trajectory::new("u".into(), stays).unwrap();
        assert!(audit(&set, &p, &ctx, 3600).is_err());
    }

    #[test]
    fn policy_validation() {
        assert!(AnonymityPolicy::new(0, 0.5, all(), 10).is_err());
        assert!(AnonymityPolicy::new(2, 1.0, all(), 10).is_err());
        assert!(AnonymityPolicy::new(2, 0.5, [], 10).is_err());
        assert!(AnonymityPolicy::new(5, 0.5, all(), 4).is_err());
        assert_eq!(
            "radius_of_gyration_m".parse::<Statistic>().unwrap(),
            Statistic::RadiusOfGyrationM
        );
    }
}
