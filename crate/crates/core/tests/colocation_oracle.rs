use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use trajsoc_core::{extract_coevents, CoLocationConfig, GridSpec, Kernel, LatLon, StayRecord, Trajectory, UserId};

fn great_circle(a: LatLon, b: LatLon) -> f64 {
    // Vincenty's spherical formula, with both terms rewritten around the
    // half-angle sine of the longitude difference to avoid cancellation.
    let (p1, p2) = (a.lat.to_radians(), b.lat.to_radians());
    let dp = p2 - p1;
    let dl = (b.lon - a.lon).to_radians();
    let hs = (dl / 2.0).sin();
    let east = p2.cos() * dl.sin();
    let north = dp.sin() + 2.0 * p1.sin() * p2.cos() * hs * hs;
    let x = dp.cos() - 2.0 * p1.cos() * p2.cos() * hs * hs;
    6_371_000.0 * east.hypot(north).atan2(x)
}

fn kernel(k: Kernel, x: f64, alpha: f64) -> f64 {
    match k {
        Kernel::Indicator => (x <= alpha) as u8 as f64,
        Kernel::Exponential if x <= 3.0 * alpha => (-x / alpha).exp(),
        Kernel::Exponential => 0.0,
    }
}

type Key = (UserId, UserId, usize, usize);

fn brute_force(trajs: &BTreeMap<UserId, Trajectory>, cfg: &CoLocationConfig) -> BTreeMap<Key, f64> {
    let mut out = BTreeMap::new();
    let users: Vec<&UserId> = trajs.keys().collect();
    for (i, ua) in users.iter().enumerate() {
        for ub in &users[i + 1..] {
            for (sa, a) in trajs[*ua].stays().iter().enumerate() {
                for (sb, b) in trajs[*ub].stays().iter().enumerate() {
                    let d = great_circle(a.location(), b.location());
                    let gap = if a.stop_time < b.start_time {
                        b.start_time - a.stop_time
                    } else if b.stop_time < a.start_time {
                        a.start_time - b.stop_time
                    } else {
                        0
                    };
                    let w = kernel(cfg.spatial_kernel, d, cfg.alpha_d)
                        * kernel(cfg.temporal_kernel, gap as f64, cfg.alpha_t);
                    if w > 0.0 {
                        out.insert(((*ua).clone(), (*ub).clone(), sa, sb), w);
                    }
                }
            }
        }
    }
    out
}

fn random_instance(rng: &mut ChaCha8Rng) -> (BTreeMap<UserId, Trajectory>, CoLocationConfig) {
    let n_users = rng.random_range(2..8);
    let budget = rng.random_range(2..=100);
    let lat0 = rng.random_range(-60.0..60.0);
    let lon0 = rng.random_range(-170.0..170.0);
    let mut per_user: Vec<Vec<StayRecord>> = vec![Vec::new(); n_users];
    let mut clocks = vec![1_568_592_000i64; n_users];
    for _ in 0..budget {
        let u = rng.random_range(0..n_users);
        let start = clocks[u] + rng.random_range(0..7200);
        let stop = start + rng.random_range(60..14_400);
        clocks[u] = stop;
        let loc = LatLon {
            lat: lat0 + rng.random_range(-0.01..0.01),
            lon: lon0 + rng.random_range(-0.01..0.01),
        };
        per_user[u].push(StayRecord::at(UserId(format!("u{u}")), start, stop, loc).unwrap());
    }
    let trajs = per_user
        .into_iter()
        .enumerate()
        .filter(|(_, s)| !s.is_empty())
        .map(|(u, s)| {
            let id = UserId(format!("u{u}"));
            (id.clone(), Trajectory::new(id, s).unwrap())
        })
        .collect();
    let kernels = [Kernel::Indicator, Kernel::Exponential];
    let cfg = CoLocationConfig {
        alpha_d: rng.random_range(50.0..600.0),
        alpha_t: rng.random_range(0.0..3600.0),
        spatial_kernel: kernels[rng.random_range(0..2)],
        temporal_kernel: kernels[rng.random_range(0..2)],
    };
    (trajs, cfg)
}

#[test]
fn extraction_matches_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut total_events = 0;
    for _ in 0..100 {
        let (trajs, cfg) = random_instance(&mut rng);
        let lat0 = trajs.values().next().unwrap().stays()[0].location().lat;
        let grid = GridSpec::new(
            LatLon {
                lat: lat0 - 0.02,
                lon: -180.0,
            },
            1000.0,
            10,
            10,
            60,
        )
        .unwrap();
        let want = brute_force(&trajs, &cfg);
        let got: BTreeMap<Key, f64> = extract_coevents(&trajs, &cfg, &grid)
            .into_iter()
            .map(|e| ((e.user_a, e.user_b, e.stay_a, e.stay_b), e.weight))
            .collect();
        assert_eq!(got.keys().collect::<Vec<_>>(), want.keys().collect::<Vec<_>>());
        let exact = cfg.spatial_kernel == Kernel::Indicator && cfg.temporal_kernel == Kernel::Indicator;
        for (k, w) in &want {
            if exact {
                assert_eq!(got[k], *w);
            } else {
                assert!((got[k] - w).abs() <= 1e-12, "{k:?}: {} vs {w}", got[k]);
            }
        }
        total_events += want.len();
    }
    assert!(total_events > 500, "instances too sparse: {total_events}");
}
