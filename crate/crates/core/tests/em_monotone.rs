use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use trajsoc_core::geo::PlanarPoint;
use trajsoc_core::mobility::fit_gmm;
use trajsoc_core::publish::fit_semantic;

fn assert_monotone(trace: &[f64]) {
    assert!(trace.len() >= 2);
    for w in trace.windows(2) {
        assert!(w[1] >= w[0] - 1e-9, "log-likelihood fell from {} to {}", w[0], w[1]);
    }
}

#[test]
fn spatial_em_is_monotone() {
    for seed in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let k = rng.random_range(2..5);
        let mut pts = Vec::new();
        for _ in 0..k {
            let (cx, cy) = (rng.random_range(-3000.0..3000.0), rng.random_range(-3000.0..3000.0));
            let sd = rng.random_range(5.0..400.0);
            let n = Normal::new(0.0, sd).unwrap();
            for _ in 0..rng.random_range(5..60) {
                pts.push(PlanarPoint::new(cx + n.sample(&mut rng), cy + n.sample(&mut rng)));
            }
        }
        // Repeated identical stays stress the variance floor.
        pts.extend(std::iter::repeat_n(pts[0], 10));
        let fit = fit_gmm(&pts, k + 1, seed).unwrap();
        assert_monotone(&fit.trace);
    }
}

#[test]
fn semantic_em_is_monotone() {
    for seed in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
        let feats: Vec<[f64; 4]> = (0..200)
            .map(|_| {
                let long = rng.random::<bool>();
                [
                    if long {
                        rng.random_range(4.0..12.0)
                    } else {
                        rng.random_range(0.2..2.0)
                    },
                    rng.random_range(0.0..24.0),
                    rng.random_range(0..2) as f64,
                    if long { 0.0 } else { rng.random_range(0.0..3.0) },
                ]
            })
            .collect();
        let m = fit_semantic(&feats, 4, seed).unwrap();
        assert_monotone(&m.trace);
    }
}
