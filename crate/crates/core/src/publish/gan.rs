//! Toy adversarial generator over flattened stay embeddings.
//!
//! Embeddings are flattened to fixed-length vectors over the most frequently
//! used cells: for every (cell, k) pair the normalized start slot of the day
//! and the duration relative to the longest fitted one, both in `[0, 1]`, with
//! a zero duration marking an empty position.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::embedding::{EmbeddingEntry, StayEmbedding};
use super::PublishError;
use crate::grid::{Cell, GridSpec};
use crate::nn::{Activation, DenseNet, Loss, OutputActivation};
use crate::stats::{mix_seed, rng_from};
use crate::traj::UserId;

pub const DEFAULT_CELLS: usize = 16;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Flattener {
    pub cells: Vec<Cell>,
    pub depth: usize,
    pub slots_per_day: u32,
    /// Duration, in slots, that maps to 1.
    pub max_slots: u32,
}

impl Flattener {
    /// Keeps the `n_cells` cells holding the most entries across `embeddings`
    /// (ties broken by cell order) and scales durations by the longest entry.
    pub fn fit(embeddings: &[StayEmbedding], n_cells: usize, depth: usize, slots_per_day: u32) -> Self {
        let mut counts: BTreeMap<Cell, usize> = BTreeMap::new();
        let mut max_slots = 1;
        for e in embeddings.iter().flat_map(|m| &m.entries) {
            *counts.entry(e.cell()).or_default() += 1;
            max_slots = max_slots.max(e.d.clamp(1, u32::MAX as i64) as u32);
        }
        let mut ranked: Vec<(Cell, usize)> = counts.into_iter().collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
        Flattener {
            cells: ranked.into_iter().take(n_cells).map(|(c, _)| c).collect(),
            depth,
            slots_per_day,
            max_slots,
        }
    }

    pub fn dim(&self) -> usize {
        self.cells.len() * self.depth * 2
    }

    fn max_duration(&self) -> f64 {
        self.max_slots.max(1) as f64
    }

    /// Entries outside the kept cells or beyond the depth are dropped.
    pub fn flatten(&self, m: &StayEmbedding) -> Vec<f64> {
        let spd = self.slots_per_day as i64;
        let mut v = vec![0.0; self.dim()];
        for (ci, c) in self.cells.iter().enumerate() {
            for k in 0..self.depth {
                if let Some(e) = m.get(c.x, c.y, k) {
                    let at = 2 * (ci * self.depth + k);
                    v[at] = (e.t.rem_euclid(spd) as f64 + 0.5) / spd as f64;
                    v[at + 1] = (e.d as f64).min(self.max_duration()) / self.max_duration();
                }
            }
        }
        v
    }

    /// Inverse of [`flatten`](Self::flatten) for the given day. Values are
    /// clamped to `[0, 1]`, durations rounding below one slot mark empty
    /// positions, and each cell's stays are re-indexed in time order with
    /// duplicate start slots merged.
    pub fn unflatten(
        &self,
        v: &[f64],
        user_id: UserId,
        grid: &GridSpec,
        day: i64,
    ) -> Result<StayEmbedding, PublishError> {
        if v.len() != self.dim() {
            return Err(PublishError::Dimension {
                expected: self.dim(),
                found: v.len(),
            });
        }
        let spd = self.slots_per_day as i64;
        let mut entries = Vec::new();
        for (ci, c) in self.cells.iter().enumerate() {
            let mut spans: BTreeMap<i64, i64> = BTreeMap::new();
            for k in 0..self.depth {
                let at = 2 * (ci * self.depth + k);
                let t_norm = v[at].clamp(0.0, 1.0);
                let d_norm = v[at + 1].clamp(0.0, 1.0);
                let d = libm::round(d_norm * self.max_duration()) as i64;
                if d < 1 {
                    continue;
                }
                let slot = (libm::floor(t_norm * spd as f64) as i64).clamp(0, spd - 1);
                spans.entry(day * spd + slot).or_insert(d);
            }
            entries.extend(spans.into_iter().enumerate().map(|(k, (t, d))| EmbeddingEntry {
                x: c.x,
                y: c.y,
                k,
                t,
                d,
            }));
        }
        entries.sort();
        let m = StayEmbedding {
            user_id,
            grid: *grid,
            depth: self.depth,
            entries,
        };
        m.validate()?;
        Ok(m)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GanConfig {
    pub noise_dim: usize,
    pub gen_hidden: usize,
    pub disc_hidden: usize,
    pub learning_rate: f64,
    pub steps: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for GanConfig {
    fn default() -> Self {
        GanConfig {
            noise_dim: 8,
            gen_hidden: 32,
            disc_hidden: 32,
            learning_rate: 0.05,
            steps: 6000,
            batch_size: 32,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GanStep {
    pub disc_loss: f64,
    pub gen_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyGan {
    pub generator: DenseNet,
    pub discriminator: DenseNet,
    pub noise_dim: usize,
    pub trace: Vec<GanStep>,
}

fn noise<R: Rng + ?Sized>(rng: &mut R, n: usize, dim: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| (0..dim).map(|_| StandardNormal.sample(rng)).collect())
        .collect()
}

impl ToyGan {
    /// `n` generated vectors, each in `[0, 1]^dim`.
    pub fn sample(&self, n: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = rng_from(seed, 0);
        noise(&mut rng, n, self.noise_dim)
            .iter()
            .map(|z| {
                self.generator
                    .forward(z)
                    .expect("noise matches generator input")
                    .into_iter()
                    .map(|x| x.clamp(0.0, 1.0))
                    .collect()
            })
            .collect()
    }
}

fn check_set(set: &[Vec<f64>], name: &'static str) -> Result<usize, PublishError> {
    let dim = set.first().ok_or(PublishError::Empty(name))?.len();
    if dim == 0 {
        return Err(PublishError::Empty(name));
    }
    if let Some(v) = set.iter().find(|v| v.len() != dim) {
        return Err(PublishError::Dimension {
            expected: dim,
            found: v.len(),
        });
    }
    Ok(dim)
}

fn batch<R: Rng + ?Sized>(rng: &mut R, set: &[Vec<f64>], n: usize) -> Vec<Vec<f64>> {
    (0..n).map(|_| set[rng.random_range(0..set.len())].clone()).collect()
}

/// Alternating minimax training: per step one discriminator update on a real
/// and a generated batch, then one generator update on the non-saturating
/// objective `-ln D(G(z))`.
pub fn train_toy_gan(real: &[Vec<f64>], cfg: &GanConfig) -> Result<ToyGan, PublishError> {
    let dim = check_set(real, "real set")?;
    let mut gen = DenseNet::new(
        cfg.noise_dim,
        cfg.gen_hidden,
        dim,
        Activation::Relu,
        OutputActivation::Sigmoid,
        None,
        mix_seed(cfg.seed, 1),
    );
    let mut disc = DenseNet::new(
        dim,
        cfg.disc_hidden,
        1,
        Activation::Relu,
        OutputActivation::Linear,
        None,
        mix_seed(cfg.seed, 2),
    );
    let mut rng = rng_from(cfg.seed, 3);
    let b = cfg.batch_size.max(1);
    let ones = vec![vec![1.0]; b];
    let mut targets = ones.clone();
    targets.extend(vec![vec![0.0]; b]);
    let mut trace = Vec::with_capacity(cfg.steps);
    for step in 0..cfg.steps {
        let mut inputs = batch(&mut rng, real, b);
        for z in noise(&mut rng, b, cfg.noise_dim) {
            inputs.push(gen.forward(&z)?);
        }
        let disc_loss = disc.loss(&inputs, &targets, Loss::GanMinimax)?;
        let g = disc.backprop_grads(&inputs, &targets, Loss::GanMinimax)?;
        disc.apply_gradients(&g, cfg.learning_rate);

        let z = noise(&mut rng, b, cfg.noise_dim);
        let fake: Vec<Vec<f64>> = z.iter().map(|z| gen.forward(z)).collect::<Result<_, _>>()?;
        let gen_loss = disc.loss(&fake, &ones, Loss::GanMinimax)?;
        let (_, dx) = disc.backprop_with_inputs(&fake, &ones, Loss::GanMinimax)?;
        let g = gen.backprop_from_output(&z, &dx)?;
        gen.apply_gradients(&g, cfg.learning_rate);

        if !(disc_loss.is_finite() && gen_loss.is_finite() && gen.is_finite() && disc.is_finite()) {
            return Err(PublishError::Divergence { step });
        }
        trace.push(GanStep { disc_loss, gen_loss });
    }
    Ok(ToyGan {
        generator: gen,
        discriminator: disc,
        noise_dim: cfg.noise_dim,
        trace,
    })
}

/// Fraction of `real` scored as real and `fake` scored as fake.
pub fn discriminator_accuracy(disc: &DenseNet, real: &[Vec<f64>], fake: &[Vec<f64>]) -> Result<f64, PublishError> {
    let mut correct = 0;
    for (set, want) in [(real, true), (fake, false)] {
        for x in set {
            correct += ((disc.forward(x)?[0] >= 0.0) == want) as usize;
        }
    }
    Ok(correct as f64 / (real.len() + fake.len()) as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiscriminatorRun {
    pub net: DenseNet,
    /// Accuracy on the full sets after each step.
    pub accuracy: Vec<f64>,
}

/// Trains only the discriminator to tell `real` from `fake`.
pub fn train_discriminator(
    real: &[Vec<f64>],
    fake: &[Vec<f64>],
    cfg: &GanConfig,
) -> Result<DiscriminatorRun, PublishError> {
    let dim = check_set(real, "real set")?;
    if check_set(fake, "fake set")? != dim {
        return Err(PublishError::Dimension {
            expected: dim,
            found: fake[0].len(),
        });
    }
    let mut disc = DenseNet::new(
        dim,
        cfg.disc_hidden,
        1,
        Activation::Relu,
        OutputActivation::Linear,
        None,
        mix_seed(cfg.seed, 2),
    );
    let mut rng = rng_from(cfg.seed, 3);
    let b = cfg.batch_size.max(1);
    let mut targets = vec![vec![1.0]; b];
    targets.extend(vec![vec![0.0]; b]);
    let mut accuracy = Vec::with_capacity(cfg.steps);
    for step in 0..cfg.steps {
        let mut inputs = batch(&mut rng, real, b);
        inputs.extend(batch(&mut rng, fake, b));
        let g = disc.backprop_grads(&inputs, &targets, Loss::GanMinimax)?;
        disc.apply_gradients(&g, cfg.learning_rate);
        if !disc.is_finite() {
            return Err(PublishError::Divergence { step });
        }
        accuracy.push(discriminator_accuracy(&disc, real, fake)?);
    }
    Ok(DiscriminatorRun { net: disc, accuracy })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geo::LatLon;

    fn grid() -> GridSpec {
        GridSpec::new(LatLon { lat: 28.0, lon: 112.9 }, 250.0, 4, 4, 60).unwrap()
    }

    fn emb(entries: Vec<EmbeddingEntry>) -> StayEmbedding {
        StayEmbedding {
            user_id: "u".into(),
            grid: grid(),
            depth: 2,
            entries,
        }
    }

    #[test]
    fn flatten_round_trip() {
        let a = emb(vec![
            EmbeddingEntry {
                x: 0,
                y: 0,
                k: 0,
                t: 24 + 8,
                d: 9,
            },
            EmbeddingEntry {
                x: 0,
                y: 0,
                k: 1,
                t: 24 + 19,
                d: 5,
            },
            EmbeddingEntry {
                x: 2,
                y: 1,
                k: 0,
                t: 24 + 17,
                d: 2,
            },
        ]);
        let b = emb(vec![EmbeddingEntry {
            x: 0,
            y: 0,
            k: 0,
            t: 7,
            d: 1,
        }]);
        let f = Flattener::fit(&[a.clone(), b], 16, 2, 24);
        assert_eq!(f.cells, vec![Cell::new(0, 0), Cell::new(2, 1)]);
        assert_eq!(f.dim(), 8);
        let v = f.flatten(&a);
        assert!(v.iter().all(|x| (0.0..=1.0).contains(x)));
        assert_eq!(f.unflatten(&v, "u".into(), &grid(), 1).unwrap(), a);
        assert!(f.unflatten(&v[..3], "u".into(), &grid(), 1).is_err());
    }

    #[test]
    fn unflatten_clamps_and_reorders() {
        let f = Flattener {
            cells: vec![Cell::new(1, 1)],
            depth: 3,
            slots_per_day: 24,
            max_slots: 24,
        };
        let v = [0.9, 0.1, 1.7, -0.3, 0.2, 0.05];
        let m = f.unflatten(&v, "u".into(), &grid(), 0).unwrap();
        assert_eq!(
            m.entries,
            vec![
                EmbeddingEntry {
                    x: 1,
                    y: 1,
                    k: 0,
                    t: 4,
                    d: 1
                },
                EmbeddingEntry {
                    x: 1,
                    y: 1,
                    k: 1,
                    t: 21,
                    d: 2
                },
            ]
        );
    }

    fn separable(seed: u64) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
        let mut rng = rng_from(seed, 5);
        let real = (0..200)
            .map(|_| (0..6).map(|_| 0.6 + 0.4 * rng.random::<f64>()).collect())
            .collect();
        let fake = (0..200)
            .map(|_| (0..6).map(|_| 0.4 * rng.random::<f64>()).collect())
            .collect();
        (real, fake)
    }

    #[test]
    fn discriminator_separates_within_500_steps() {
        let (real, fake) = separable(1);
        let cfg = GanConfig {
            steps: 500,
            ..GanConfig::default()
        };
        let run = train_discriminator(&real, &fake, &cfg).unwrap();
        assert!(*run.accuracy.last().unwrap() > 0.9);
    }

    #[test]
    fn generator_shape_and_determinism() {
        let (real, _) = separable(2);
        let cfg = GanConfig {
            steps: 50,
            ..GanConfig::default()
        };
        let gan = train_toy_gan(&real, &cfg).unwrap();
        assert_eq!(gan.trace.len(), 50);
        let s = gan.sample(10, 4);
        assert!(s
            .iter()
            .all(|v| v.len() == 6 && v.iter().all(|x| (0.0..=1.0).contains(x))));
        assert_eq!(gan, train_toy_gan(&real, &cfg).unwrap());
        assert!(train_toy_gan(&[], &cfg).is_err());
    }
}
