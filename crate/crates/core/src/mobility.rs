//! Per-user space-time-social mobility model.
//!
//! Spatial behavior is a Gaussian mixture over stay locations in a local
//! planar frame. Temporal behavior is, for every slot of the day, a
//! categorical distribution over the mixture clusters. Social behavior is a
//! per-cluster flag marking places visited mostly while meeting friends, and
//! the influence a friend's model exerts on where the user goes next.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::colocation::CoEvent;
use crate::geo::{LatLon, LocalProjection, PlanarPoint};
use crate::gmm::{fit_em, fit_em_bic, Component, EmFit, EmOptions, Gaussian2, GmmError, Mixture};
use crate::grid::SECONDS_PER_DAY;
use crate::stats::normalize;
use crate::traj::{Trajectory, UserId};

pub const VARIANCE_FLOOR_M2: f64 = 25.0;
pub const MAX_AUTO_COMPONENTS: usize = 6;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MobilityError {
    #[error(transparent)]
    Gmm(#[from] GmmError),
    #[error("trajectory is empty")]
    EmptyTrajectory,
    #[error("invalid influence parameters: {0}")]
    InvalidParams(&'static str),
    #[error("invalid model: {0}")]
    InvalidModel(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ComponentChoice {
    /// BIC over `1..=6` components.
    Auto,
    Fixed(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cluster {
    pub gaussian: Gaussian2,
    pub weight: f64,
}

impl Cluster {
    pub fn mean(&self) -> PlanarPoint {
        PlanarPoint::new(self.gaussian.mean[0], self.gaussian.mean[1])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MobilityModel3D {
    pub user_id: UserId,
    /// Frame in which cluster means and covariances are expressed.
    pub projection: LocalProjection,
    pub clusters: Vec<Cluster>,
    pub slot_minutes: u32,
    /// `temporal_profile[slot][j]` is the probability of being in cluster `j`
    /// during that slot of the day.
    pub temporal_profile: Vec<Vec<f64>>,
    pub social_flags: Vec<bool>,
    pub visit_counts: Vec<u32>,
}

/// Fits a planar Gaussian mixture with the location variance floor.
pub fn fit_gmm(points: &[PlanarPoint], m: usize, seed: u64) -> Result<EmFit<Gaussian2>, MobilityError> {
    let pts: Vec<Vec<f64>> = points.iter().map(|p| vec![p.x, p.y]).collect();
    Ok(fit_em::<Gaussian2>(&pts, &EmOptions::new(m, VARIANCE_FLOOR_M2, seed))?)
}

/// Fits the full model to one user's trajectory. Social flags start cleared;
/// see [`label_social`].
pub fn fit_mobility(
    traj: &Trajectory,
    slot_minutes: u32,
    components: ComponentChoice,
    seed: u64,
) -> Result<MobilityModel3D, MobilityError> {
    if traj.is_empty() {
        return Err(MobilityError::EmptyTrajectory);
    }
    if slot_minutes == 0 || 1440 % slot_minutes != 0 {
        return Err(MobilityError::InvalidModel("slot length must divide a day"));
    }
    let locs: Vec<LatLon> = traj.stays().iter().map(|s| s.location()).collect();
    let projection = LocalProjection::centered_on(&locs).expect("non-empty");
    let pts: Vec<Vec<f64>> = locs
        .iter()
        .map(|&l| {
            let p = projection.to_plane(l);
            vec![p.x, p.y]
        })
        .collect();
    let opts = EmOptions::new(1, VARIANCE_FLOOR_M2, seed);
    let fit = match components {
        ComponentChoice::Auto => fit_em_bic::<Gaussian2>(&pts, MAX_AUTO_COMPONENTS, &opts)?,
        ComponentChoice::Fixed(m) => fit_em::<Gaussian2>(&pts, &EmOptions { components: m, ..opts })?,
    };
    let mixture = fit.mixture;
    let m = mixture.len();

    let slot_s = slot_minutes as i64 * 60;
    let spd = (1440 / slot_minutes) as usize;
    let mut profile = vec![vec![0.0; m]; spd];
    let mut visit_counts = vec![0u32; m];
    for (stay, p) in traj.stays().iter().zip(&pts) {
        visit_counts[mixture.assign(p)] += 1;
        let r = mixture.responsibilities(p);
        let mut t = stay.start_time;
        while t < stay.stop_time {
            let slot_end = (t.div_euclid(slot_s) + 1) * slot_s;
            let end = slot_end.min(stay.stop_time);
            let slot = (t.rem_euclid(SECONDS_PER_DAY) / slot_s) as usize;
            let secs = (end - t) as f64;
            for (acc, rk) in profile[slot].iter_mut().zip(&r) {
                *acc += rk * secs;
            }
            t = end;
        }
    }
    for row in profile.iter_mut() {
        if !normalize(row) {
            row.copy_from_slice(&mixture.weights);
        }
    }
    let clusters = mixture
        .components
        .into_iter()
        .zip(mixture.weights)
        .map(|(gaussian, weight)| Cluster { gaussian, weight })
        .collect();
    Ok(MobilityModel3D {
        user_id: traj.user_id().clone(),
        projection,
        clusters,
        slot_minutes,
        temporal_profile: profile,
        social_flags: vec![false; m],
        visit_counts,
    })
}

impl MobilityModel3D {
    /// Checks the structural invariants of a hand-built or deserialized model.
    pub fn validate(&self) -> Result<(), MobilityError> {
        let m = self.clusters.len();
        if m == 0 {
            return Err(MobilityError::InvalidModel("no clusters"));
        }
        if self.slot_minutes == 0 || 1440 % self.slot_minutes != 0 {
            return Err(MobilityError::InvalidModel("slot length must divide a day"));
        }
        if self.temporal_profile.len() != (1440 / self.slot_minutes) as usize {
            return Err(MobilityError::InvalidModel("profile needs one row per slot"));
        }
        if self.social_flags.len() != m || self.visit_counts.len() != m {
            return Err(MobilityError::InvalidModel("per-cluster vectors have wrong length"));
        }
        let wsum: f64 = self.clusters.iter().map(|c| c.weight).sum();
        if (wsum - 1.0).abs() > 1e-9 {
            return Err(MobilityError::InvalidModel("mixture weights must sum to 1"));
        }
        for row in &self.temporal_profile {
            if row.len() != m || (row.iter().sum::<f64>() - 1.0).abs() > 1e-9 || row.iter().any(|&v| v < 0.0) {
                return Err(MobilityError::InvalidModel("profile rows must be distributions"));
            }
        }
        for c in &self.clusters {
            let g = &c.gaussian;
            if g.cov[0][1] != g.cov[1][0] || g.eigenvalues()[1] < VARIANCE_FLOOR_M2 * (1.0 - 1e-9) {
                return Err(MobilityError::InvalidModel("covariance must be symmetric and floored"));
            }
        }
        Ok(())
    }

    pub fn slots_per_day(&self) -> u32 {
        1440 / self.slot_minutes
    }

    pub fn profile_row(&self, slot: u32) -> &[f64] {
        &self.temporal_profile[(slot % self.slots_per_day()) as usize]
    }

    pub fn to_plane(&self, p: LatLon) -> PlanarPoint {
        self.projection.to_plane(p)
    }

    pub fn to_latlon(&self, p: PlanarPoint) -> LatLon {
        self.projection.to_latlon(p)
    }

    /// Cluster with the highest mixture weight (lowest index on ties).
    pub fn dominant_cluster(&self) -> usize {
        (0..self.clusters.len()).fold(0, |best, j| {
            if self.clusters[j].weight > self.clusters[best].weight {
                j
            } else {
                best
            }
        })
    }

    /// Profile-weighted mean of the cluster centers at `slot`.
    pub fn expected_center(&self, slot: u32) -> PlanarPoint {
        let row = self.profile_row(slot);
        let mut p = PlanarPoint::default();
        for (c, w) in self.clusters.iter().zip(row) {
            p.x += w * c.gaussian.mean[0];
            p.y += w * c.gaussian.mean[1];
        }
        p
    }

    /// Most likely cluster for a planar point.
    pub fn assign(&self, p: PlanarPoint) -> usize {
        self.mixture().assign(&[p.x, p.y])
    }

    pub fn mixture(&self) -> Mixture<Gaussian2> {
        Mixture {
            weights: self.clusters.iter().map(|c| c.weight).collect(),
            components: self.clusters.iter().map(|c| c.gaussian.clone()).collect(),
        }
    }

    pub fn social_centers(&self) -> Vec<LatLon> {
        self.clusters
            .iter()
            .zip(&self.social_flags)
            .filter(|(_, &s)| s)
            .map(|(c, _)| self.to_latlon(c.mean()))
            .collect()
    }
}

/// `sum_j N(point; cluster j) * Pr[cluster j at slot]`.
pub fn location_density(model: &MobilityModel3D, point: PlanarPoint, slot: u32) -> f64 {
    let x = [point.x, point.y];
    model
        .clusters
        .iter()
        .zip(model.profile_row(slot))
        .map(|(c, w)| w * libm::exp(c.gaussian.log_pdf(&x)))
        .sum()
}

/// Fraction of each cluster's stays that took part in at least one event
/// with a partner accepted by `partner`.
pub fn coevent_fraction_per_cluster(
    model: &MobilityModel3D,
    traj: &Trajectory,
    events: &[CoEvent],
    partner: impl Fn(&UserId) -> bool,
) -> Vec<f64> {
    let uid = traj.user_id();
    let mut shared = vec![false; traj.len()];
    for e in events {
        if &e.user_a == uid && partner(&e.user_b) {
            if let Some(s) = shared.get_mut(e.stay_a) {
                *s = true;
            }
        } else if &e.user_b == uid && partner(&e.user_a) {
            if let Some(s) = shared.get_mut(e.stay_b) {
                *s = true;
            }
        }
    }
    let m = model.clusters.len();
    let mut hits = vec![0u32; m];
    let mut totals = vec![0u32; m];
    for (stay, &is_shared) in traj.stays().iter().zip(&shared) {
        let j = model.assign(model.to_plane(stay.location()));
        totals[j] += 1;
        hits[j] += is_shared as u32;
    }
    hits.iter()
        .zip(&totals)
        .map(|(&h, &t)| if t == 0 { 0.0 } else { h as f64 / t as f64 })
        .collect()
}

/// A cluster is social iff its co-occurrence fraction reaches `tau_soc`.
pub fn label_social(fractions: &[f64], tau_soc: f64) -> Vec<bool> {
    fractions.iter().map(|&f| f >= tau_soc).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InfluenceParams {
    pub pi1: f64,
    pub pi2: f64,
    pub omega_s: f64,
    pub omega_t: f64,
    /// Floor on the distance normalizer, meters.
    pub epsilon_d: f64,
}

impl InfluenceParams {
    pub fn new(pi1: f64, pi2: f64, omega_s: f64, omega_t: f64, epsilon_d: f64) -> Result<Self, MobilityError> {
        if !(pi1 > 0.0 && pi2 > 0.0) {
            return Err(MobilityError::InvalidParams("pi1 and pi2 must be positive"));
        }
        if !(omega_s >= 0.0 && omega_t >= 0.0) || (omega_s + omega_t - 1.0).abs() > 1e-9 {
            return Err(MobilityError::InvalidParams(
                "omega_s and omega_t must be non-negative and sum to 1",
            ));
        }
        if !(epsilon_d > 0.0) {
            return Err(MobilityError::InvalidParams("epsilon_d must be positive"));
        }
        Ok(InfluenceParams {
            pi1,
            pi2,
            omega_s,
            omega_t,
            epsilon_d,
        })
    }
}

impl Default for InfluenceParams {
    fn default() -> Self {
        InfluenceParams {
            pi1: 1.0,
            pi2: 1.0,
            omega_s: 0.5,
            omega_t: 0.5,
            epsilon_d: 50.0,
        }
    }
}

/// Spatial pull of a friend on `point` (in the friend's frame) at `slot`:
/// `pi1 * exp(-pi2 * |point - c1| / max(|c1 - c_slot|, eps))`, where `c1` is
/// the friend's dominant cluster center and `c_slot` the friend's expected
/// center at that slot.
pub fn social_influence(friend: &MobilityModel3D, point: PlanarPoint, slot: u32, params: &InfluenceParams) -> f64 {
    let c1 = friend.clusters[friend.dominant_cluster()].mean();
    let c_slot = friend.expected_center(slot);
    let denom = c1.distance(&c_slot).max(params.epsilon_d);
    params.pi1 * libm::exp(-params.pi2 * point.distance(&c1) / denom)
}

/// Probability mass the friend puts on its social clusters at `slot`.
pub fn temporal_influence(friend: &MobilityModel3D, slot: u32) -> f64 {
    friend
        .profile_row(slot)
        .iter()
        .zip(&friend.social_flags)
        .filter(|(_, &s)| s)
        .map(|(w, _)| w)
        .sum()
}

pub fn combined_influence(si: f64, ti: f64, params: &InfluenceParams) -> f64 {
    params.omega_s * si + params.omega_t * ti
}

/// Mean combined influence of `friends` on each of `user`'s social clusters
/// at `slot`. Non-social clusters are absent from the map.
pub fn influence_map(
    user: &MobilityModel3D,
    friends: &[&MobilityModel3D],
    slot: u32,
    params: &InfluenceParams,
) -> BTreeMap<usize, f64> {
    let mut out = BTreeMap::new();
    if friends.is_empty() {
        return out;
    }
    for (j, c) in user.clusters.iter().enumerate() {
        if !user.social_flags[j] {
            continue;
        }
        let at = user.to_latlon(c.mean());
        let total: f64 = friends
            .iter()
            .map(|f| {
                let si = social_influence(f, f.to_plane(at), slot, params);
                let ti = temporal_influence(f, slot);
                combined_influence(si, ti, params)
            })
            .sum();
        out.insert(j, total / friends.len() as f64);
    }
    out
}

/// [`influence_map`] for every slot of the day.
pub fn influence_table(
    user: &MobilityModel3D,
    friends: &[&MobilityModel3D],
    params: &InfluenceParams,
) -> Vec<BTreeMap<usize, f64>> {
    (0..user.slots_per_day())
        .map(|slot| influence_map(user, friends, slot, params))
        .collect()
}

/// Cluster probabilities at `slot`: the profile row with social clusters
/// reweighted by `1 + I_j`, renormalized.
pub fn cluster_weights(model: &MobilityModel3D, slot: u32, influence: Option<&BTreeMap<usize, f64>>) -> Vec<f64> {
    let mut w: Vec<f64> = model.profile_row(slot).to_vec();
    if let Some(map) = influence {
        for (j, wj) in w.iter_mut().enumerate() {
            if model.social_flags[j] {
                *wj *= 1.0 + map.get(&j).copied().unwrap_or(0.0);
            }
        }
    }
    if !normalize(&mut w) {
        w = model.clusters.iter().map(|c| c.weight).collect();
    }
    w
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocationSample {
    pub cluster: usize,
    pub point: PlanarPoint,
}

/// Draws a cluster from [`cluster_weights`] and a point from its Gaussian.
pub fn sample_location<R: Rng + ?Sized>(
    model: &MobilityModel3D,
    slot: u32,
    influence: Option<&BTreeMap<usize, f64>>,
    rng: &mut R,
) -> LocationSample {
    let w = cluster_weights(model, slot, influence);
    let mut u = rng.random::<f64>();
    let mut cluster = w.len() - 1;
    for (j, wj) in w.iter().enumerate() {
        if u < *wj {
            cluster = j;
            break;
        }
        u -= wj;
    }
    let z = [StandardNormal.sample(rng), StandardNormal.sample(rng)];
    let [x, y] = model.clusters[cluster].gaussian.transform_standard(z);
    LocationSample {
        cluster,
        point: PlanarPoint::new(x, y),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::rng_from;
    use crate::traj::StayRecord;
    use core::f64::consts::PI;
    use rand::Rng;

    fn single(mean: [f64; 2], var: f64) -> MobilityModel3D {
        MobilityModel3D {
            user_id: "u".into(),
            projection: LocalProjection::new(LatLon { lat: 28.1, lon: 112.9 }),
            clusters: vec![Cluster {
                gaussian: Gaussian2 {
                    mean,
                    cov: [[var, 0.0], [0.0, var]],
                },
                weight: 1.0,
            }],
            slot_minutes: 60,
            temporal_profile: vec![vec![1.0]; 24],
            social_flags: vec![false],
            visit_counts: vec![1],
        }
    }

    fn two(means: [[f64; 2]; 2], row: [f64; 2], social: [bool; 2]) -> MobilityModel3D {
        let mut m = single(means[0], 10_000.0);
        m.clusters.push(Cluster {
            gaussian: Gaussian2 {
                mean: means[1],
                cov: [[10_000.0, 0.0], [0.0, 10_000.0]],
            },
            weight: 0.5,
        });
        m.clusters[0].weight = 0.5;
        m.temporal_profile = vec![row.to_vec(); 24];
        m.social_flags = social.to_vec();
        m.visit_counts = vec![1, 1];
        m
    }

    #[test]
    fn density_at_peak() {
        let m = single([10.0, 20.0], 100.0);
        let d = location_density(&m, PlanarPoint::new(10.0, 20.0), 3);
        assert!((d - 1.0 / (2.0 * PI * 100.0)).abs() < 1e-15);
    }

    #[test]
    fn density_zero_when_slot_ignores_nearby_cluster() {
        let m = two([[0.0, 0.0], [50_000.0, 0.0]], [0.0, 1.0], [false, false]);
        assert!(location_density(&m, PlanarPoint::new(0.0, 0.0), 0) < 1e-100);
    }

    #[test]
    fn social_labels() {
        assert_eq!(label_social(&[0.0, 0.2], 0.0), vec![true, true]);
        assert_eq!(label_social(&[0.5, 0.1], 0.3), vec![true, false]);
    }

    #[test]
    fn social_influence_cases() {
        let p = InfluenceParams::default();
        // Dominant cluster 0 at origin, slot expectation between clusters.
        let mut f = two([[0.0, 0.0], [2000.0, 0.0]], [0.5, 0.5], [false, true]);
        f.clusters[0].weight = 0.6;
        f.clusters[1].weight = 0.4;
        assert!((social_influence(&f, PlanarPoint::new(0.0, 0.0), 0, &p) - 1.0).abs() < 1e-15);
        // Denominator |c1 - c_slot| = 1000 m, numerator 2000 m.
        let si = social_influence(&f, PlanarPoint::new(0.0, 2000.0), 0, &p);
        assert!((si - libm::exp(-2.0)).abs() < 1e-12);
        assert!((si - 0.1353).abs() < 1e-4);
        let steep = InfluenceParams { pi2: 1e6, ..p };
        assert!(social_influence(&f, PlanarPoint::new(0.0, 10.0), 0, &steep) < 1e-12);
    }

    #[test]
    fn temporal_influence_cases() {
        let none = two([[0.0, 0.0], [1.0, 0.0]], [0.7, 0.3], [false, false]);
        assert_eq!(temporal_influence(&none, 0), 0.0);
        let all = two([[0.0, 0.0], [1.0, 0.0]], [0.7, 0.3], [true, true]);
        assert!((temporal_influence(&all, 0) - 1.0).abs() < 1e-15);
        let some = two([[0.0, 0.0], [1.0, 0.0]], [0.7, 0.3], [true, false]);
        assert!((temporal_influence(&some, 0) - 0.7).abs() < 1e-15);
    }

    #[test]
    fn combined() {
        let p = InfluenceParams::default();
        assert!((combined_influence(0.2, 0.6, &p) - 0.4).abs() < 1e-15);
        let s = InfluenceParams::new(1.0, 1.0, 1.0, 0.0, 1.0).unwrap();
        assert_eq!(combined_influence(0.3, 0.9, &s), 0.3);
        assert!(InfluenceParams::new(1.0, 1.0, 0.6, 0.6, 1.0).is_err());
    }

    #[test]
    fn sampling_degenerate_and_single() {
        let m = two([[0.0, 0.0], [5000.0, 0.0]], [0.0, 1.0], [false, false]);
        let mut rng = rng_from(1, 2);
        for _ in 0..100 {
            assert_eq!(sample_location(&m, 5, None, &mut rng).cluster, 1);
        }
        let s = single([100.0, -50.0], 400.0);
        let n = 10_000;
        let (mut sx, mut sy) = (0.0, 0.0);
        for _ in 0..n {
            let p = sample_location(&s, 0, None, &mut rng).point;
            sx += p.x;
            sy += p.y;
        }
        let bound = 3.0 * 20.0 / libm::sqrt(n as f64);
        assert!((sx / n as f64 - 100.0).abs() < bound);
        assert!((sy / n as f64 + 50.0).abs() < bound);
    }

    #[test]
    fn zero_influence_is_identity_reweighting() {
        let m = two([[0.0, 0.0], [5000.0, 0.0]], [0.25, 0.75], [true, true]);
        let zero: BTreeMap<usize, f64> = [(0, 0.0), (1, 0.0)].into_iter().collect();
        assert_eq!(cluster_weights(&m, 0, Some(&zero)), cluster_weights(&m, 0, None));
        let half: BTreeMap<usize, f64> = [(0, 2.0)].into_iter().collect();
        let w = cluster_weights(&m, 0, Some(&half));
        assert!((w[0] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn fitted_model_is_valid() {
        let base = LatLon { lat: 28.1, lon: 112.95 };
        let proj = LocalProjection::new(base);
        let mut stays = Vec::new();
        for d in 0..5i64 {
            let day = 1_568_592_000 + d * 86_400;
            let home = proj.to_latlon(PlanarPoint::new(d as f64 * 3.0, 0.0));
            let work = proj.to_latlon(PlanarPoint::new(4000.0 + d as f64 * 2.0, 1500.0));
            stays.push(StayRecord::at("u".into(), day, day + 8 * 3600, home).unwrap());
            stays.push(StayRecord::at("u".into(), day + 9 * 3600, day + 17 * 3600, work).unwrap());
            stays.push(StayRecord::at("u".into(), day + 18 * 3600, day + 86_400, home).unwrap());
        }
        let t = Trajectory::new("u".into(), stays).unwrap();
        let m = fit_mobility(&t, 60, ComponentChoice::Fixed(2), 3).unwrap();
        m.validate().unwrap();
        let work = m.assign(m.to_plane(proj.to_latlon(PlanarPoint::new(4000.0, 1500.0))));
        assert!(m.profile_row(12)[work] > 0.99);
        assert!(m.profile_row(3)[work] < 0.01);
        assert_eq!(m.visit_counts.iter().sum::<u32>(), 15);
        let auto = fit_mobility(&t, 60, ComponentChoice::Auto, 3).unwrap();
        auto.validate().unwrap();
        assert!(auto.clusters.len() >= 2);
    }

    fn three() -> MobilityModel3D {
        let mut m = two([[0.0, 0.0], [900.0, 300.0]], [0.5, 0.5], [false, true]);
        m.clusters[0].gaussian.cov = [[40_000.0, 15_000.0], [15_000.0, 20_000.0]];
        m.clusters.push(Cluster {
            gaussian: Gaussian2 {
                mean: [-600.0, 700.0],
                cov: [[9_000.0, -2_000.0], [-2_000.0, 30_000.0]],
            },
            weight: 0.2,
        });
        m.clusters[0].weight = 0.3;
        m.temporal_profile = vec![vec![0.2, 0.5, 0.3]; 24];
        m.temporal_profile[7] = vec![0.6, 0.1, 0.3];
        m.social_flags = vec![false, true, true];
        m.visit_counts = vec![1, 1, 1];
        m.validate().unwrap();
        m
    }

    fn gaussian_oracle(mu: [f64; 2], s: [[f64; 2]; 2], p: [f64; 2]) -> f64 {
        let det = s[0][0] * s[1][1] - s[0][1] * s[1][0];
        let (dx, dy) = (p[0] - mu[0], p[1] - mu[1]);
        let q = (s[1][1] * dx * dx - 2.0 * s[0][1] * dx * dy + s[0][0] * dy * dy) / det;
        libm::exp(-0.5 * q) / (2.0 * PI * libm::sqrt(det))
    }

    #[test]
    fn density_matches_direct_formula() {
        let m = three();
        let mut rng = rng_from(4, 4);
        for _ in 0..200 {
            let p = PlanarPoint::new(rng.random_range(-1500.0..1500.0), rng.random_range(-1500.0..1500.0));
            let slot = rng.random_range(0..24u32);
            let row = &m.temporal_profile[slot as usize];
            let want: f64 = (0..3)
                .map(|j| row[j] * gaussian_oracle(m.clusters[j].gaussian.mean, m.clusters[j].gaussian.cov, [p.x, p.y]))
                .sum();
            let got = location_density(&m, p, slot);
            assert!((got - want).abs() <= 1e-10 * want.max(1e-300) + 1e-300);
        }
    }

    #[test]
    fn density_integrates_to_one() {
        let m = three();
        let h = 10.0;
        for slot in [0, 7] {
            let mut total = 0.0;
            let mut x = -3000.0;
            while x < 3000.0 {
                let mut y = -3000.0;
                while y < 3000.0 {
                    total += location_density(&m, PlanarPoint::new(x + h / 2.0, y + h / 2.0), slot) * h * h;
                    y += h;
                }
                x += h;
            }
            assert!((total - 1.0).abs() < 0.02, "slot {slot}: {total}");
        }
    }

    #[test]
    fn social_influence_is_translation_invariant() {
        let p = InfluenceParams::default();
        let m = three();
        let mut moved = m.clone();
        for c in moved.clusters.iter_mut() {
            c.gaussian.mean[0] += 12_345.0;
            c.gaussian.mean[1] -= 6_789.0;
        }
        for slot in 0..24 {
            let a = social_influence(&m, PlanarPoint::new(100.0, 250.0), slot, &p);
            let b = social_influence(&moved, PlanarPoint::new(12_445.0, -6_539.0), slot, &p);
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn cluster_frequencies_follow_reweighted_profile() {
        let m = three();
        let influence: BTreeMap<usize, f64> = [(1, 0.4), (2, 0.1)].into_iter().collect();
        let w = cluster_weights(&m, 7, Some(&influence));
        let raw = [0.6, 0.1 * 1.4, 0.3 * 1.1];
        let z: f64 = raw.iter().sum();
        for j in 0..3 {
            assert!((w[j] - raw[j] / z).abs() < 1e-15);
        }
        let n = 10_000;
        let mut counts = [0usize; 3];
        let mut rng = rng_from(1, 8);
        for _ in 0..n {
            counts[sample_location(&m, 7, Some(&influence), &mut rng).cluster] += 1;
        }
        let chi2: f64 = (0..3)
            .map(|j| {
                let e = w[j] * n as f64;
                (counts[j] as f64 - e).powi(2) / e
            })
            .sum();
        // 99th percentile of chi-square with 2 degrees of freedom.
        assert!(chi2 < 9.2103, "chi2 {chi2}, counts {counts:?}");
    }

    #[test]
    fn influence_map_covers_social_clusters_only() {
        let p = InfluenceParams::default();
        let user = three();
        let friend = three();
        let map = influence_map(&user, &[&friend], 7, &p);
        assert_eq!(map.keys().copied().collect::<Vec<_>>(), vec![1, 2]);
        for v in map.values() {
            assert!(*v > 0.0 && *v <= 1.0);
        }
        assert!(influence_map(&user, &[], 7, &p).is_empty());
    }

    #[test]
    fn empty_trajectory_rejected() {
        let t = Trajectory::new("u".into(), Vec::new()).unwrap();
        assert_eq!(
            fit_mobility(&t, 60, ComponentChoice::Auto, 0).unwrap_err(),
            MobilityError::EmptyTrajectory
        );
    }
}
