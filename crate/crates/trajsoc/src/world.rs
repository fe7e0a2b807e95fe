//! Synthetic city with a known friendship graph.
//!
//! Every user lives at a home, works weekdays at one of a few shared
//! workplaces, may attend a weekly routine (a class or club at a popular
//! venue) and occasionally visits venues alone. Friend pairs meet in evening
//! and weekend slots, either at one of their homes or at a venue, usually the
//! pair's favourite. Workplaces, routines, homes and solo trips are drawn
//! independently of the graph, so non-friends co-occur only through them or
//! by chance.

use std::collections::{BTreeMap, BTreeSet};

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::Normal;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use trajsoc_core::grid::{is_weekend, weekday, SECONDS_PER_DAY};
use trajsoc_core::stats::rng_from;
use trajsoc_core::traj::group_by_user;
use trajsoc_core::{GridSpec, Instant, LatLon, LocalProjection, PlanarPoint, StayRecord, Trajectory, UserId};

/// 2019-09-16 00:00:00 UTC, a Monday.
pub const DEFAULT_START: Instant = 1_568_592_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum FriendGraph {
    /// Ring lattice with `k` neighbours per node, each edge rewired with
    /// probability `p`.
    RingRewire { k: usize, p: f64 },
    /// Node `i` belongs to community `i % communities`.
    PlantedPartition { communities: usize, p_in: f64, p_out: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WorldConfig {
    pub n_users: usize,
    pub n_days: usize,
    /// Midnight UTC of the first day.
    pub start: Instant,
    pub graph: FriendGraph,
    pub center: LatLon,
    pub radius_m: f64,
    pub n_workplaces: usize,
    pub n_venues: usize,
    /// Exponent of the Zipf popularity of venues.
    pub venue_zipf: f64,
    /// Chance that a friend pair meets in one eligible slot.
    pub p_meet: f64,
    /// Multiplier on `p_meet` at weekends.
    pub weekend_boost: f64,
    /// Chance that a meeting takes place at one of the two homes.
    pub p_home_meet: f64,
    /// Chance that a venue meeting takes place at the pair's favourite venue.
    pub p_favourite: f64,
    /// Number of weekly routines.
    pub n_routines: usize,
    /// Chance that a user joins one routine.
    pub p_routine: f64,
    /// Chance that a routine falls on the weekend rather than on weekday
    /// evenings.
    pub p_weekend_routine: f64,
    /// The most popular venues double as morning cafés.
    pub n_cafes: usize,
    /// Chance that a user has a regular café.
    pub p_cafe_habit: f64,
    /// Chance per weekday that a user with a café stops there before work.
    pub p_cafe_visit: f64,
    /// Chance per user and day of one solo venue visit.
    pub p_solo: f64,
    /// Standard deviation of location jitter in meters.
    pub noise_m: f64,
    pub cell_size_m: f64,
    pub slot_minutes: u32,
    pub seed: u64,
}

impl Default for WorldConfig {
    fn default() -> Self {
        WorldConfig {
            n_users: 64,
            n_days: 14,
            start: DEFAULT_START,
            graph: FriendGraph::RingRewire { k: 4, p: 0.1 },
            center: LatLon {
                lat: 28.10,
                lon: 112.97,
            },
            radius_m: 5000.0,
            n_workplaces: 6,
            n_venues: 24,
            venue_zipf: 1.0,
            p_meet: 0.08,
            weekend_boost: 2.0,
            p_home_meet: 0.3,
            p_favourite: 0.7,
            n_routines: 4,
            p_routine: 0.8,
            p_weekend_routine: 1.0,
            n_cafes: 4,
            p_cafe_habit: 0.5,
            p_cafe_visit: 0.5,
            p_solo: 0.3,
            noise_m: 30.0,
            cell_size_m: 250.0,
            slot_minutes: 60,
            seed: 42,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum WorldError {
    #[error("need at least two users, got {0}")]
    TooFewUsers(usize),
    #[error("{name} = {value} is outside [0, 1]")]
    Probability { name: &'static str, value: f64 },
    #[error("invalid parameter: {0}")]
    Parameter(&'static str),
}

impl WorldConfig {
    pub fn validate(&self) -> Result<(), WorldError> {
        if self.n_users < 2 {
            return Err(WorldError::TooFewUsers(self.n_users));
        }
        let mut probs = vec![
            ("p_meet", self.p_meet),
            ("p_home_meet", self.p_home_meet),
            ("p_favourite", self.p_favourite),
            ("p_routine", self.p_routine),
            ("p_weekend_routine", self.p_weekend_routine),
            ("p_cafe_habit", self.p_cafe_habit),
            ("p_cafe_visit", self.p_cafe_visit),
            ("p_solo", self.p_solo),
        ];
        match self.graph {
            FriendGraph::RingRewire { k, p } => {
                if k == 0 || k % 2 == 1 || k >= self.n_users {
                    return Err(WorldError::Parameter(
                        "ring degree must be even, positive and below n_users",
                    ));
                }
                probs.push(("p", p));
            }
            FriendGraph::PlantedPartition {
                communities,
                p_in,
                p_out,
            } => {
                if communities == 0 {
                    return Err(WorldError::Parameter("at least one community"));
                }
                probs.push(("p_in", p_in));
                probs.push(("p_out", p_out));
            }
        }
        if let Some((name, value)) = probs.into_iter().find(|(_, v)| !(0.0..=1.0).contains(v)) {
            return Err(WorldError::Probability { name, value });
        }
        if self.n_cafes > self.n_venues {
            return Err(WorldError::Parameter("more cafés than venues"));
        }
        if self.n_days == 0 || self.n_workplaces == 0 || self.n_venues == 0 {
            return Err(WorldError::Parameter("days, workplaces and venues must be positive"));
        }
        if self.start.rem_euclid(SECONDS_PER_DAY) != 0 {
            return Err(WorldError::Parameter("start must be a UTC midnight"));
        }
        let positive = [self.radius_m, self.cell_size_m, self.weekend_boost + 1.0];
        if positive.iter().any(|v| !(v.is_finite() && *v > 0.0)) || !(self.noise_m >= 0.0 && self.venue_zipf >= 0.0) {
            return Err(WorldError::Parameter(
                "distances and exponents must be finite and non-negative",
            ));
        }
        if self.slot_minutes == 0 || 1440 % self.slot_minutes != 0 {
            return Err(WorldError::Parameter("slot length must divide a day"));
        }
        Ok(())
    }

    /// Grid covering the whole city with room for location jitter.
    pub fn grid(&self) -> GridSpec {
        let half = self.radius_m + 5.0 * self.noise_m + self.cell_size_m;
        let origin = LocalProjection::new(self.center).to_latlon(PlanarPoint::new(-half, -half));
        let n = (2.0 * half / self.cell_size_m).ceil() as u32;
        GridSpec::new(origin, self.cell_size_m, n, n, self.slot_minutes).expect("validated config")
    }
}

/// Where a meeting took place.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Place {
    Venue(usize),
    /// Home of the given user index.
    Home(usize),
}

/// A weekly appointment at a venue: same start hour on the listed weekdays.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Routine {
    pub venue: usize,
    /// Monday = 0 .. Sunday = 6.
    pub weekdays: Vec<u8>,
    pub hour: i64,
    pub minutes: i64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Meeting {
    pub user_a: UserId,
    pub user_b: UserId,
    pub place: Place,
    pub start: Instant,
    pub stop: Instant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct World {
    pub config: WorldConfig,
    pub grid: GridSpec,
    pub users: Vec<UserId>,
    pub homes: Vec<LatLon>,
    pub workplaces: Vec<LatLon>,
    /// Workplace index per user.
    pub employer: Vec<usize>,
    pub venues: Vec<LatLon>,
    /// Café venue per user, if any.
    pub cafe_of: Vec<Option<usize>>,
    pub routines: Vec<Routine>,
    /// Routine index per user, if any.
    pub routine_of: Vec<Option<usize>>,
    /// Sorted pairs with `user_a < user_b`.
    pub friends: Vec<(UserId, UserId)>,
    pub meetings: Vec<Meeting>,
    /// Sorted by user, then start time.
    pub records: Vec<StayRecord>,
}

impl World {
    pub fn trajectories(&self) -> BTreeMap<UserId, Trajectory> {
        group_by_user(&self.records).expect("generated stays are valid")
    }

    pub fn friend_set(&self) -> BTreeSet<(UserId, UserId)> {
        self.friends.iter().cloned().collect()
    }
}

pub fn user_ids(n: usize) -> Vec<UserId> {
    let width = (n.max(2) - 1).to_string().len();
    (0..n).map(|i| UserId(format!("u{i:0width$}"))).collect()
}

fn ordered(a: usize, b: usize) -> (usize, usize) {
    (a.min(b), a.max(b))
}

pub fn friend_edges<R: Rng + ?Sized>(n: usize, graph: FriendGraph, rng: &mut R) -> BTreeSet<(usize, usize)> {
    let mut edges = BTreeSet::new();
    match graph {
        FriendGraph::RingRewire { k, p } => {
            for i in 0..n {
                for j in 1..=k / 2 {
                    edges.insert(ordered(i, (i + j) % n));
                }
            }
            for j in 1..=k / 2 {
                for i in 0..n {
                    let e = ordered(i, (i + j) % n);
                    if !edges.contains(&e) || rng.random::<f64>() >= p {
                        continue;
                    }
                    let free: Vec<usize> = (0..n).filter(|&v| v != i && !edges.contains(&ordered(i, v))).collect();
                    if let Some(&v) = free.get(rng.random_range(0..free.len().max(1))) {
                        edges.remove(&e);
                        edges.insert(ordered(i, v));
                    }
                }
            }
        }
        FriendGraph::PlantedPartition {
            communities,
            p_in,
            p_out,
        } => {
            for i in 0..n {
                for j in i + 1..n {
                    let p = if i % communities == j % communities {
                        p_in
                    } else {
                        p_out
                    };
                    if rng.random::<f64>() < p {
                        edges.insert((i, j));
                    }
                }
            }
        }
    }
    edges
}

fn uniform_in_disk<R: Rng + ?Sized>(rng: &mut R, proj: &LocalProjection, radius: f64) -> LatLon {
    let r = radius * rng.random::<f64>().sqrt();
    let a = rng.random_range(0.0..std::f64::consts::TAU);
    proj.to_latlon(PlanarPoint::new(r * a.cos(), r * a.sin()))
}

struct Jitter {
    proj: LocalProjection,
    normal: Option<Normal<f64>>,
}

impl Jitter {
    fn apply<R: Rng + ?Sized>(&self, rng: &mut R, at: LatLon) -> LatLon {
        match &self.normal {
            None => at,
            Some(n) => {
                let p = self.proj.to_plane(at);
                self.proj
                    .to_latlon(PlanarPoint::new(p.x + n.sample(rng), p.y + n.sample(rng)))
            }
        }
    }
}

#[derive(Clone, Copy)]
struct Activity {
    start: Instant,
    stop: Instant,
    at: LatLon,
}

fn is_free(day: &[Activity], start: Instant, stop: Instant) -> bool {
    day.iter().all(|a| stop <= a.start || a.stop <= start)
}

pub fn generate_world(cfg: &WorldConfig) -> Result<World, WorldError> {
    cfg.validate()?;
    let n = cfg.n_users;
    let proj = LocalProjection::new(cfg.center);
    let users = user_ids(n);

    let mut rng = rng_from(cfg.seed, 0);
    let homes: Vec<LatLon> = (0..n).map(|_| uniform_in_disk(&mut rng, &proj, cfg.radius_m)).collect();
    let workplaces: Vec<LatLon> = (0..cfg.n_workplaces)
        .map(|_| uniform_in_disk(&mut rng, &proj, cfg.radius_m))
        .collect();
    let employer: Vec<usize> = (0..n).map(|_| rng.random_range(0..cfg.n_workplaces)).collect();
    let venues: Vec<LatLon> = (0..cfg.n_venues)
        .map(|_| uniform_in_disk(&mut rng, &proj, cfg.radius_m))
        .collect();
    let popularity = WeightedIndex::new((0..cfg.n_venues).map(|r| (r as f64 + 1.0).powf(-cfg.venue_zipf)))
        .expect("positive weights");

    let edges: Vec<(usize, usize)> = friend_edges(n, cfg.graph, &mut rng_from(cfg.seed, 1))
        .into_iter()
        .collect();
    let favourite: Vec<usize> = {
        let mut r = rng_from(cfg.seed, 2);
        edges.iter().map(|_| r.random_range(0..cfg.n_venues)).collect()
    };
    let (routines, routine_of) = {
        let mut r = rng_from(cfg.seed, 4);
        let routines: Vec<Routine> = (0..cfg.n_routines)
            .map(|_| {
                let venue = popularity.sample(&mut r);
                let (weekdays, hour) = if r.random::<f64>() >= cfg.p_weekend_routine {
                    let mut days: Vec<u8> = (0..5).collect();
                    days.shuffle(&mut r);
                    days.truncate(r.random_range(2..=3));
                    days.sort_unstable();
                    (days, r.random_range(18..=19))
                } else {
                    let days = match r.random_range(0..3) {
                        0 => vec![5],
                        1 => vec![6],
                        _ => vec![5, 6],
                    };
                    (days, r.random_range(10..=15))
                };
                Routine {
                    venue,
                    weekdays,
                    hour,
                    minutes: r.random_range(60..=120),
                }
            })
            .collect();
        let of: Vec<Option<usize>> = (0..n)
            .map(|_| {
                let joins = r.random::<f64>() < cfg.p_routine && !routines.is_empty();
                let which = r.random_range(0..routines.len().max(1));
                joins.then_some(which)
            })
            .collect();
        (routines, of)
    };

    let cafe_of: Vec<Option<usize>> = {
        let mut r = rng_from(cfg.seed, 5);
        (0..n)
            .map(|_| {
                let has = r.random::<f64>() < cfg.p_cafe_habit && cfg.n_cafes > 0;
                let which = r.random_range(0..cfg.n_cafes.max(1));
                has.then_some(which)
            })
            .collect()
    };

    let jitter = Jitter {
        proj,
        normal: (cfg.noise_m > 0.0).then(|| Normal::new(0.0, cfg.noise_m).expect("finite sigma")),
    };
    let mut rng = rng_from(cfg.seed, 3);
    let mut records = Vec::new();
    let mut meetings = Vec::new();
    let minutes = |m: f64| (m * 60.0).round() as i64;

    for d in 0..cfg.n_days as i64 {
        let t0 = cfg.start + d * SECONDS_PER_DAY;
        let weekend = is_weekend(t0);
        let mut plan: Vec<Vec<Activity>> = vec![Vec::new(); n];

        if !weekend {
            for (u, day) in plan.iter_mut().enumerate() {
                let start = t0 + minutes(510.0 + rng.random_range(-30.0..30.0));
                let stop = t0 + minutes(1050.0 + rng.random_range(-30.0..20.0));
                day.push(Activity {
                    start,
                    stop,
                    at: workplaces[employer[u]],
                });
            }
        }

        for (u, day) in plan.iter_mut().enumerate() {
            let go = rng.random::<f64>() < cfg.p_cafe_visit;
            let start = t0 + 7 * 3600 + 1800 + rng.random_range(0..1200);
            let stop = start + rng.random_range(900..=1800);
            if let (Some(c), false, true) = (cafe_of[u], weekend, go) {
                if is_free(day, start, stop) {
                    day.push(Activity {
                        start,
                        stop,
                        at: venues[c],
                    });
                }
            }
        }

        let dow = weekday(t0);
        for (u, day) in plan.iter_mut().enumerate() {
            let Some(r) = routine_of[u].map(|i| &routines[i]) else {
                continue;
            };
            let start = t0 + r.hour * 3600 + rng.random_range(-600..=600);
            let stop = start + r.minutes * 60 + rng.random_range(-600..=600);
            if r.weekdays.contains(&dow) && is_free(day, start, stop) {
                day.push(Activity {
                    start,
                    stop,
                    at: venues[r.venue],
                });
            }
        }

        let hours = if weekend { 10..20 } else { 18..21 };
        let p = (cfg.p_meet * if weekend { cfg.weekend_boost } else { 1.0 }).min(1.0);
        let mut met = vec![false; edges.len()];
        let mut order: Vec<usize> = (0..edges.len()).collect();
        for h in hours.clone() {
            order.shuffle(&mut rng);
            for &e in &order {
                let draw = rng.random::<f64>();
                if met[e] || draw >= p {
                    continue;
                }
                let (a, b) = edges[e];
                let base = t0 + h * 3600 + rng.random_range(0..1200);
                let len = rng.random_range(3600..=5400);
                let mut span = || {
                    let s = base + rng.random_range(-300..=300);
                    (s, base + len + rng.random_range(-300..=300))
                };
                let (sa, sb) = (span(), span());
                if !(is_free(&plan[a], sa.0, sa.1) && is_free(&plan[b], sb.0, sb.1)) {
                    continue;
                }
                let place = if rng.random::<f64>() < cfg.p_home_meet {
                    Place::Home(if rng.random::<bool>() { a } else { b })
                } else if rng.random::<f64>() < cfg.p_favourite {
                    Place::Venue(favourite[e])
                } else {
                    Place::Venue(popularity.sample(&mut rng))
                };
                let at = match place {
                    Place::Venue(v) => venues[v],
                    Place::Home(h) => homes[h],
                };
                met[e] = true;
                plan[a].push(Activity {
                    start: sa.0,
                    stop: sa.1,
                    at,
                });
                plan[b].push(Activity {
                    start: sb.0,
                    stop: sb.1,
                    at,
                });
                meetings.push(Meeting {
                    user_a: users[a].clone(),
                    user_b: users[b].clone(),
                    place,
                    start: sa.0.min(sb.0),
                    stop: sa.1.max(sb.1),
                });
            }
        }

        for day in plan.iter_mut() {
            let go = rng.random::<f64>() < cfg.p_solo;
            let h = rng.random_range(hours.clone());
            let start = t0 + h * 3600 + rng.random_range(0..1800);
            let stop = start + rng.random_range(1800..=7200);
            let venue = popularity.sample(&mut rng);
            if go && stop < t0 + SECONDS_PER_DAY && is_free(day, start, stop) {
                day.push(Activity {
                    start,
                    stop,
                    at: venues[venue],
                });
            }
        }

        for (u, mut day) in plan.into_iter().enumerate() {
            day.sort_by_key(|a| a.start);
            let mut cursor = t0;
            let mut filled = Vec::with_capacity(2 * day.len() + 1);
            for a in day.into_iter().chain(std::iter::once(Activity {
                start: t0 + SECONDS_PER_DAY,
                stop: t0 + SECONDS_PER_DAY,
                at: homes[u],
            })) {
                if a.start - cursor >= 60 {
                    filled.push(Activity {
                        start: cursor,
                        stop: a.start,
                        at: homes[u],
                    });
                }
                if a.stop > a.start {
                    filled.push(a);
                }
                cursor = a.stop;
            }
            for a in filled {
                let at = jitter.apply(&mut rng, a.at);
                records.push(StayRecord::at(users[u].clone(), a.start, a.stop, at).expect("non-empty activity"));
            }
        }
    }

    records.sort_by(|a, b| (&a.user_id, a.start_time).cmp(&(&b.user_id, b.start_time)));
    let mut friends: Vec<(UserId, UserId)> = edges
        .iter()
        .map(|&(a, b)| (users[a].clone(), users[b].clone()))
        .collect();
    friends.sort();
    Ok(World {
        config: cfg.clone(),
        grid: cfg.grid(),
        users,
        homes,
        workplaces,
        employer,
        venues,
        cafe_of,
        routines,
        routine_of,
        friends,
        meetings,
        records,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ring_without_rewiring_is_regular() {
        let e = friend_edges(10, FriendGraph::RingRewire { k: 4, p: 0.0 }, &mut rng_from(0, 0));
        assert_eq!(e.len(), 20);
        for v in 0..10 {
            assert_eq!(e.iter().filter(|(a, b)| *a == v || *b == v).count(), 4);
        }
    }

    #[test]
    fn rewiring_keeps_edge_count() {
        let e = friend_edges(30, FriendGraph::RingRewire { k: 4, p: 0.5 }, &mut rng_from(3, 0));
        assert_eq!(e.len(), 60);
        assert!(e.iter().all(|(a, b)| a < b));
    }

    #[test]
    fn planted_partition_extremes() {
        let g = FriendGraph::PlantedPartition {
            communities: 3,
            p_in: 1.0,
            p_out: 0.0,
        };
        let e = friend_edges(9, g, &mut rng_from(0, 0));
        assert_eq!(e.len(), 9);
        assert!(e.iter().all(|(a, b)| a % 3 == b % 3));
    }

    #[test]
    fn config_validation() {
        assert!(WorldConfig::default().validate().is_ok());
        let bad = WorldConfig {
            p_meet: 1.5,
            ..WorldConfig::default()
        };
        assert_eq!(
            bad.validate(),
            Err(WorldError::Probability {
                name: "p_meet",
                value: 1.5
            })
        );
        let one = WorldConfig {
            n_users: 1,
            ..WorldConfig::default()
        };
        assert_eq!(one.validate(), Err(WorldError::TooFewUsers(1)));
    }

    #[test]
    fn user_ids_are_zero_padded() {
        let ids = user_ids(64);
        assert_eq!(ids[0].0, "u00");
        assert_eq!(ids[63].0, "u63");
    }

    #[test]
    fn days_are_fully_covered() {
        let cfg = WorldConfig {
            n_users: 8,
            n_days: 3,
            graph: FriendGraph::RingRewire { k: 2, p: 0.0 },
            ..WorldConfig::default()
        };
        let w = generate_world(&cfg).unwrap();
        for t in w.trajectories().values() {
            let (a, b) = t.window().unwrap();
            assert_eq!((a, b), (cfg.start, cfg.start + 3 * SECONDS_PER_DAY));
            let gaps: i64 = t.stays().windows(2).map(|w| w[1].start_time - w[0].stop_time).sum();
            assert!(gaps < 3 * 60 * 10);
            for s in t.stays() {
                assert!(w.grid.to_cell(s.location()).is_ok());
            }
        }
    }
}
