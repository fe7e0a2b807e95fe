use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use trajsoc_core::publish::{decode_embedding, embed_trajectory, quantize};
use trajsoc_core::{Cell, GridSpec, LatLon, StayRecord, Trajectory, UserId};

/// Stays at cell centers with slot-aligned, non-overlapping times.
fn quantized(rng: &mut ChaCha8Rng, grid: &GridSpec) -> Trajectory {
    let slot = grid.slot_seconds();
    let user = UserId::from("q");
    let mut t = 1_568_592_000 / slot + rng.random_range(0..48);
    let stays = (0..rng.random_range(0..40))
        .map(|_| {
            t += rng.random_range(0..4);
            let d = rng.random_range(1..10);
            let c = grid.cell_center(Cell::new(rng.random_range(0..grid.n_x), rng.random_range(0..grid.n_y)));
            let s = StayRecord::at(user.clone(), t * slot, (t + d) * slot, c).unwrap();
            t += d;
            s
        })
        .collect();
    Trajectory::new(user, stays).unwrap()
}

#[test]
fn decode_inverts_embed_on_quantized_trajectories() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for i in 0..100 {
        let slot_min = [15, 30, 60][i % 3];
        let grid = GridSpec::new(LatLon { lat: 28.05, lon: 112.9 }, 250.0, 6, 5, slot_min).unwrap();
        let t = quantized(&mut rng, &grid);
        let m = embed_trajectory(&t, &grid, 64).unwrap();
        m.validate().unwrap();
        assert_eq!(decode_embedding(&m).unwrap(), t);
        assert_eq!(quantize(&t, &grid).unwrap(), t);
    }
}

#[test]
fn quantization_is_idempotent() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let grid = GridSpec::new(LatLon { lat: 28.05, lon: 112.9 }, 250.0, 6, 5, 60).unwrap();
    let proj = grid.projection();
    for _ in 0..100 {
        let mut t = 1_568_592_000;
        let stays = (0..rng.random_range(1..30))
            .map(|_| {
                t += rng.random_range(0..5000);
                let d = rng.random_range(60..20_000);
                let p = trajsoc_core::PlanarPoint::new(rng.random_range(0.0..1500.0), rng.random_range(0.0..1250.0));
                let s = StayRecord::at("r".into(), t, t + d, proj.to_latlon(p)).unwrap();
                t += d;
                s
            })
            .collect();
        let raw = Trajectory::new("r".into(), stays).unwrap();
        let q = quantize(&raw, &grid).unwrap();
        assert_eq!(quantize(&q, &grid).unwrap(), q);
    }
}
