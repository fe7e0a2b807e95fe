//! Attack and defense experiments over labeled user pairs.
//!
//! The attack extracts co-occurrence events, turns each labeled pair into a
//! metric vector, standardizes it on the training split and fits the fusion
//! network. Defenses rewrite the trajectories and the identical attack is
//! rerun on the result.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use trajsoc_core::anonymize::{
    audit, k_anonymize, AnonymityPolicy, AnonymitySet, AnonymizeError, Statistic, StatsContext,
};
use trajsoc_core::colocation::events_by_pair;
use trajsoc_core::features::{HolidayCalendar, Standardizer, Weekends};
use trajsoc_core::grid::day_index;
use trajsoc_core::mobility::{
    coevent_fraction_per_cluster, fit_mobility, influence_table, label_social, ComponentChoice, InfluenceParams,
    MobilityError, MobilityModel3D,
};
use trajsoc_core::nn::{evaluate, train, Activation, DenseNet, NnError, OutputActivation, TrainConfig};
use trajsoc_core::publish::gan::{train_toy_gan, Flattener, GanConfig};
use trajsoc_core::publish::semantic::{collect_features, fit_semantic, pair_purpose_profile, stay_posteriors};
use trajsoc_core::publish::similarity::{similarity_report, SimilarityReport};
use trajsoc_core::publish::{decode_embedding, embed_trajectory, EmbeddingEntry, PublishError, StayEmbedding};
use trajsoc_core::stats::{mix_seed, rng_from};
use trajsoc_core::{
    compute_features, extract_coevents, project, CoEvent, CoLocationConfig, FeatureSubset, GridSpec, PairFeatures,
    Trajectory, UserId, VisitStats,
};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("split leaves the {0} set without both classes")]
    DegenerateSplit(&'static str),
    #[error("no labeled pairs")]
    NoPairs,
    #[error("unknown user {0}")]
    UnknownUser(UserId),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Mobility(#[from] MobilityError),
    #[error("anonymizing user {user}")]
    Anonymize {
        user: UserId,
        #[source]
        source: AnonymizeError,
    },
    #[error("user {user}: emitted set fails audit: {reason}")]
    Audit { user: UserId, reason: String },
    #[error(transparent)]
    Publish(#[from] PublishError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AttackConfig {
    pub colocation: CoLocationConfig,
    pub train_fraction: f64,
    /// Negatives sampled per positive.
    pub negative_ratio: f64,
    pub hidden: usize,
    pub training: TrainConfig,
    pub threshold: f64,
    /// Independent stratified splits whose held-out predictions are pooled.
    pub repeats: usize,
    /// Append the pair's visit-purpose profile to its metric vector.
    pub semantic: bool,
    pub n_purposes: usize,
}

impl Default for AttackConfig {
    fn default() -> Self {
        AttackConfig {
            colocation: CoLocationConfig::default(),
            train_fraction: 0.7,
            negative_ratio: 1.0,
            hidden: 16,
            training: TrainConfig {
                learning_rate: 0.1,
                epochs: 300,
                batch_size: 16,
                ..TrainConfig::default()
            },
            threshold: 0.5,
            repeats: 5,
            semantic: false,
            n_purposes: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct LabeledPair {
    pub user_a: UserId,
    pub user_b: UserId,
    pub friends: bool,
}

/// All friend edges as positives plus `ratio` times as many non-edges drawn
/// uniformly without replacement.
pub fn sample_pairs(users: &[UserId], friends: &[(UserId, UserId)], ratio: f64, seed: u64) -> Vec<LabeledPair> {
    let edges: BTreeSet<(UserId, UserId)> = friends
        .iter()
        .map(|(a, b)| {
            if a < b {
                (a.clone(), b.clone())
            } else {
                (b.clone(), a.clone())
            }
        })
        .collect();
    let mut sorted: Vec<&UserId> = users.iter().collect();
    sorted.sort();
    sorted.dedup();
    let mut non_edges = Vec::new();
    for (i, a) in sorted.iter().enumerate() {
        for b in &sorted[i + 1..] {
            if !edges.contains(&((*a).clone(), (*b).clone())) {
                non_edges.push(((*a).clone(), (*b).clone()));
            }
        }
    }
    let want = ((edges.len() as f64 * ratio).round() as usize).min(non_edges.len());
    let mut rng = rng_from(seed, 0);
    let mut pairs: Vec<LabeledPair> = non_edges
        .choose_multiple(&mut rng, want)
        .map(|(a, b)| LabeledPair {
            user_a: a.clone(),
            user_b: b.clone(),
            friends: false,
        })
        .collect();
    pairs.extend(edges.into_iter().map(|(user_a, user_b)| LabeledPair {
        user_a,
        user_b,
        friends: true,
    }));
    pairs.sort();
    pairs
}

/// Metric vectors of the labeled pairs, with purpose profiles when the
/// semantic module is on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairData {
    pub features: Vec<PairFeatures>,
    pub purposes: Option<Vec<Vec<f64>>>,
}

impl PairData {
    pub fn labels(&self) -> Vec<bool> {
        self.features.iter().map(|f| f.label == Some(true)).collect()
    }

    fn row(&self, i: usize, subset: &FeatureSubset) -> Vec<f64> {
        let mut v = project(&self.features[i], subset);
        if let Some(p) = &self.purposes {
            v.extend_from_slice(&p[i]);
        }
        v
    }
}

pub fn pair_features(
    trajectories: &BTreeMap<UserId, Trajectory>,
    events: &[CoEvent],
    pairs: &[LabeledPair],
    grid: &GridSpec,
    holidays: &dyn HolidayCalendar,
) -> Result<Vec<PairFeatures>, ExperimentError> {
    let visits = VisitStats::from_trajectories(trajectories.values(), grid);
    let by_pair = events_by_pair(events);
    pairs
        .iter()
        .map(|p| {
            for u in [&p.user_a, &p.user_b] {
                if !trajectories.contains_key(u) {
                    return Err(ExperimentError::UnknownUser(u.clone()));
                }
            }
            let key = if p.user_a < p.user_b {
                (p.user_a.clone(), p.user_b.clone())
            } else {
                (p.user_b.clone(), p.user_a.clone())
            };
            let ev = by_pair.get(&key).map(Vec::as_slice).unwrap_or(&[]);
            let mut f = compute_features(&key.0, &key.1, ev, &visits, holidays);
            f.label = Some(p.friends);
            Ok(f)
        })
        .collect()
}

pub fn build_pair_data(
    trajectories: &BTreeMap<UserId, Trajectory>,
    pairs: &[LabeledPair],
    grid: &GridSpec,
    cfg: &AttackConfig,
    seed: u64,
) -> Result<PairData, ExperimentError> {
    let events = extract_coevents(trajectories, &cfg.colocation, grid);
    let features = pair_features(trajectories, &events, pairs, grid, &Weekends)?;
    let purposes = if cfg.semantic {
        let stays = collect_features(trajectories, grid);
        let model = fit_semantic(&stays, cfg.n_purposes, mix_seed(seed, 5))?;
        let visits = VisitStats::from_trajectories(trajectories.values(), grid);
        let post = stay_posteriors(trajectories, &model, &visits, grid);
        let by_pair = events_by_pair(&events);
        let rows = features
            .iter()
            .map(|f| {
                let ev = by_pair
                    .get(&(f.user_a.clone(), f.user_b.clone()))
                    .map(Vec::as_slice)
                    .unwrap_or(&[]);
                pair_purpose_profile(ev, &post, model.n_purposes())
            })
            .collect();
        Some(rows)
    } else {
        None
    };
    Ok(PairData { features, purposes })
}

/// Stratified split: each class is shuffled and cut at `fraction`.
pub fn stratified_split(
    labels: &[bool],
    fraction: f64,
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>), ExperimentError> {
    if labels.is_empty() {
        return Err(ExperimentError::NoPairs);
    }
    let mut rng = rng_from(seed, 0);
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for class in [true, false] {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        idx.shuffle(&mut rng);
        let cut = (idx.len() as f64 * fraction).round() as usize;
        train.extend_from_slice(&idx[..cut.min(idx.len())]);
        test.extend_from_slice(&idx[cut.min(idx.len())..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    for (name, set) in [("training", &train), ("test", &test)] {
        let pos = set.iter().filter(|&&i| labels[i]).count();
        if pos == 0 || pos == set.len() {
            return Err(ExperimentError::DegenerateSplit(name));
        }
    }
    Ok((train, test))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub auc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackRow {
    pub subset: String,
    pub semantic: bool,
    #[serde(flatten)]
    pub metrics: Metrics,
    pub n_train: usize,
    pub n_test: usize,
}

/// Scores of the held-out pairs from a network trained on the rest.
pub fn fit_and_score(
    data: &PairData,
    labels: &[bool],
    subset: &FeatureSubset,
    train_idx: &[usize],
    test_idx: &[usize],
    cfg: &AttackConfig,
    seed: u64,
) -> Result<Vec<f64>, ExperimentError> {
    let rows = |idx: &[usize]| idx.iter().map(|&i| data.row(i, subset)).collect::<Vec<_>>();
    let raw_train = rows(train_idx);
    let scaler = Standardizer::fit(&raw_train);
    let x_train: Vec<Vec<f64>> = raw_train.iter().map(|r| scaler.transform(r)).collect();
    let y_train: Vec<Vec<f64>> = train_idx.iter().map(|&i| vec![labels[i] as u8 as f64]).collect();
    let d = x_train[0].len();
    let tc = TrainConfig {
        seed: mix_seed(seed, 1),
        ..cfg.training.clone()
    };
    let net = DenseNet::new(
        d,
        cfg.hidden,
        1,
        Activation::Relu,
        OutputActivation::Sigmoid,
        tc.init_scale,
        mix_seed(seed, 2),
    );
    let trained = train(&net, &x_train, &y_train, &tc)?;
    rows(test_idx)
        .iter()
        .map(|r| Ok(trained.net.forward(&scaler.transform(r))?[0]))
        .collect()
}

pub fn run_attack_on(
    data: &PairData,
    labels: &[bool],
    subsets: &[FeatureSubset],
    cfg: &AttackConfig,
    seed: u64,
) -> Result<Vec<AttackRow>, ExperimentError> {
    let splits = (0..cfg.repeats.max(1) as u64)
        .map(|r| stratified_split(labels, cfg.train_fraction, mix_seed(seed, 2 + 16 * r)))
        .collect::<Result<Vec<_>, _>>()?;
    let truth: Vec<bool> = splits
        .iter()
        .flat_map(|(_, test)| test.iter().map(|&i| labels[i]))
        .collect();
    let (train_idx, test_idx) = &splits[0];
    subsets
        .iter()
        .map(|s| {
            let mut scores = Vec::with_capacity(truth.len());
            for (r, (train, test)) in splits.iter().enumerate() {
                scores.extend(fit_and_score(
                    data,
                    labels,
                    s,
                    train,
                    test,
                    cfg,
                    mix_seed(seed, 3 + 16 * r as u64),
                )?);
            }
            let e = evaluate(&scores, &truth, cfg.threshold)?;
            Ok(AttackRow {
                subset: s.name().to_string(),
                semantic: data.purposes.is_some(),
                metrics: Metrics {
                    precision: e.precision,
                    recall: e.recall,
                    f1: e.f1,
                    auc: e.auc.expect("split holds both classes"),
                },
                n_train: train_idx.len(),
                n_test: test_idx.len(),
            })
        })
        .collect()
}

/// Full attack: features of `pairs` from `trajectories`, then one row per
/// subset. Every subset sees the same split.
pub fn run_attack(
    trajectories: &BTreeMap<UserId, Trajectory>,
    pairs: &[LabeledPair],
    grid: &GridSpec,
    subsets: &[FeatureSubset],
    cfg: &AttackConfig,
    seed: u64,
) -> Result<Vec<AttackRow>, ExperimentError> {
    let data = build_pair_data(trajectories, pairs, grid, cfg, seed)?;
    run_attack_on(&data, &data.labels(), subsets, cfg, seed)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KAnonymityConfig {
    pub k: usize,
    pub l: f64,
    pub stats: Vec<Statistic>,
    pub max_attempts: usize,
    /// Share of a cluster's stays with friends needed to call it social.
    pub tau_social: f64,
    pub influence: InfluenceParams,
    /// Fixed mixture size; `None` selects by BIC.
    pub components: Option<usize>,
}

impl Default for KAnonymityConfig {
    fn default() -> Self {
        KAnonymityConfig {
            k: 5,
            l: 0.3,
            stats: vec![
                Statistic::StayCount,
                Statistic::TotalDurationH,
                Statistic::RadiusOfGyrationM,
            ],
            max_attempts: 5000,
            tau_social: 0.2,
            influence: InfluenceParams::default(),
            components: None,
        }
    }
}

impl KAnonymityConfig {
    pub fn policy(&self) -> Result<AnonymityPolicy, AnonymizeError> {
        AnonymityPolicy::new(self.k, self.l, self.stats.iter().copied(), self.max_attempts)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub gan: GanConfig,
    pub n_cells: usize,
    pub depth: usize,
    /// Summed event weight that makes a pair a co-occurrence edge.
    pub edge_threshold: f64,
    pub n_purposes: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            gan: GanConfig::default(),
            n_cells: 32,
            depth: 3,
            edge_threshold: 1.0,
            n_purposes: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Defense {
    None,
    KAnonymity(KAnonymityConfig),
    PublishSynthetic(SynthConfig),
}

impl Defense {
    pub fn name(&self) -> &'static str {
        match self {
            Defense::None => "none",
            Defense::KAnonymity(_) => "k_anonymity",
            Defense::PublishSynthetic(_) => "publish_synthetic",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnonymitySummary {
    pub users: usize,
    pub real_published: usize,
    pub mean_acceptance_rate: f64,
    pub min_acceptance_rate: f64,
    pub audits_passed: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Defended {
    pub trajectories: BTreeMap<UserId, Trajectory>,
    pub anonymity: Option<AnonymitySummary>,
    pub similarity: Option<SimilarityReport>,
}

fn sorted_pair(a: &UserId, b: &UserId) -> (UserId, UserId) {
    if a < b {
        (a.clone(), b.clone())
    } else {
        (b.clone(), a.clone())
    }
}

/// Per-user mobility models with social clusters labeled from co-occurrences
/// with the user's own friends.
pub fn fit_models(
    trajectories: &BTreeMap<UserId, Trajectory>,
    friends: &[(UserId, UserId)],
    events: &[CoEvent],
    components: Option<usize>,
    slot_minutes: u32,
    tau_social: f64,
    seed: u64,
) -> Result<BTreeMap<UserId, MobilityModel3D>, ExperimentError> {
    let edges: BTreeSet<(UserId, UserId)> = friends.iter().map(|(a, b)| sorted_pair(a, b)).collect();
    let choice = components.map_or(ComponentChoice::Auto, ComponentChoice::Fixed);
    let mut models = BTreeMap::new();
    for (i, (u, t)) in trajectories.iter().enumerate() {
        if t.is_empty() {
            continue;
        }
        let mut m = fit_mobility(t, slot_minutes, choice, mix_seed(seed, i as u64))?;
        let fractions = coevent_fraction_per_cluster(&m, t, events, |p| edges.contains(&sorted_pair(u, p)));
        m.social_flags = label_social(&fractions, tau_social);
        models.insert(u.clone(), m);
    }
    Ok(models)
}

/// One audited anonymity set per non-empty trajectory, each built from the
/// user's own mobility model and the influence of the user's friends.
pub fn anonymize_all(
    trajectories: &BTreeMap<UserId, Trajectory>,
    friends: &[(UserId, UserId)],
    grid: &GridSpec,
    cfg: &KAnonymityConfig,
    colocation: &CoLocationConfig,
    seed: u64,
) -> Result<BTreeMap<UserId, AnonymitySet>, ExperimentError> {
    let policy = cfg.policy().map_err(|source| ExperimentError::Anonymize {
        user: UserId(String::new()),
        source,
    })?;
    let events = extract_coevents(trajectories, colocation, grid);
    let models = fit_models(
        trajectories,
        friends,
        &events,
        cfg.components,
        grid.time_slot_minutes,
        cfg.tau_social,
        mix_seed(seed, 1),
    )?;
    let mut out = BTreeMap::new();
    for (i, (u, t)) in trajectories.iter().enumerate() {
        let Some(model) = models.get(u) else {
            continue;
        };
        let friend_models: Vec<&MobilityModel3D> = friends
            .iter()
            .filter_map(|(a, b)| match (a == u, b == u) {
                (true, _) => models.get(b),
                (_, true) => models.get(a),
                _ => None,
            })
            .collect();
        let table = influence_table(model, &friend_models, &cfg.influence);
        let ctx = StatsContext::from_model(model, colocation.alpha_d);
        let set = k_anonymize(t, model, &policy, &ctx, Some(&table), grid, member_seed(seed, i)).map_err(|source| {
            ExperimentError::Anonymize {
                user: u.clone(),
                source,
            }
        })?;
        audit(&set, &policy, &ctx, grid.slot_seconds()).map_err(|e| ExperimentError::Audit {
            user: u.clone(),
            reason: e.to_string(),
        })?;
        out.insert(u.clone(), set);
    }
    Ok(out)
}

fn member_seed(seed: u64, user_index: usize) -> u64 {
    mix_seed(seed, 1000 + user_index as u64)
}

fn k_anonymity_defense(
    trajectories: &BTreeMap<UserId, Trajectory>,
    friends: &[(UserId, UserId)],
    grid: &GridSpec,
    cfg: &KAnonymityConfig,
    colocation: &CoLocationConfig,
    seed: u64,
) -> Result<Defended, ExperimentError> {
    let sets = anonymize_all(trajectories, friends, grid, cfg, colocation, seed)?;
    let mut out = BTreeMap::new();
    let mut rates = Vec::new();
    let mut real_published = 0;
    for (i, (u, t)) in trajectories.iter().enumerate() {
        let Some(set) = sets.get(u) else {
            out.insert(u.clone(), t.clone());
            continue;
        };
        rates.push(set.audit.acceptance_rate);
        let pick = rng_from(member_seed(seed, i), 7).random_range(0..set.k());
        real_published += (pick == set.audit.real_position) as usize;
        let published = set.members().nth(pick).expect("pick < k").clone();
        out.insert(u.clone(), published);
    }
    let n = rates.len();
    Ok(Defended {
        trajectories: out,
        anonymity: Some(AnonymitySummary {
            users: n,
            real_published,
            mean_acceptance_rate: if n == 0 {
                1.0
            } else {
                rates.iter().sum::<f64>() / n as f64
            },
            min_acceptance_rate: rates.iter().copied().fold(1.0, f64::min),
            audits_passed: n,
        }),
        similarity: None,
    })
}

/// Splits a trajectory into its days, keyed by day index.
pub fn split_days(t: &Trajectory) -> BTreeMap<i64, Trajectory> {
    let mut days: BTreeMap<i64, Vec<_>> = BTreeMap::new();
    for s in t.stays() {
        days.entry(day_index(s.start_time)).or_default().push(s.clone());
    }
    days.into_iter()
        .map(|(d, stays)| {
            (
                d,
                Trajectory::new(t.user_id().clone(), stays).expect("subset of a valid trajectory"),
            )
        })
        .collect()
}

/// Joins embeddings of one user into a single one, re-indexing each cell.
fn merge_embeddings(user: &UserId, grid: &GridSpec, parts: &[StayEmbedding]) -> StayEmbedding {
    let mut spans: Vec<(u32, u32, i64, i64)> = parts
        .iter()
        .flat_map(|m| m.entries.iter().map(|e| (e.x, e.y, e.t, e.d)))
        .collect();
    spans.sort();
    spans.dedup_by(|b, a| (a.0, a.1, a.2) == (b.0, b.1, b.2));
    let mut entries = Vec::with_capacity(spans.len());
    let mut k = 0;
    for (i, &(x, y, t, d)) in spans.iter().enumerate() {
        k = if i > 0 && (spans[i - 1].0, spans[i - 1].1) == (x, y) {
            k + 1
        } else {
            0
        };
        entries.push(EmbeddingEntry { x, y, k, t, d });
    }
    StayEmbedding {
        user_id: user.clone(),
        grid: *grid,
        depth: usize::MAX,
        entries,
    }
}

fn synthetic_defense(
    trajectories: &BTreeMap<UserId, Trajectory>,
    grid: &GridSpec,
    cfg: &SynthConfig,
    colocation: &CoLocationConfig,
    seed: u64,
) -> Result<Defended, ExperimentError> {
    let mut slots = Vec::new();
    let mut embeddings = Vec::new();
    for (u, t) in trajectories {
        for (d, day) in split_days(t) {
            embeddings.push(embed_trajectory(&day, grid, usize::MAX)?);
            slots.push((u.clone(), d));
        }
    }
    let flat = Flattener::fit(&embeddings, cfg.n_cells, cfg.depth, grid.slots_per_day());
    let real: Vec<Vec<f64>> = embeddings.iter().map(|m| flat.flatten(m)).collect();
    let gan_cfg = GanConfig {
        seed: mix_seed(seed, 1),
        ..cfg.gan
    };
    let gan = train_toy_gan(&real, &gan_cfg)?;
    let samples = gan.sample(real.len(), mix_seed(seed, 2));
    let mut per_user: BTreeMap<UserId, Vec<StayEmbedding>> =
        trajectories.keys().map(|u| (u.clone(), Vec::new())).collect();
    for ((u, d), v) in slots.iter().zip(&samples) {
        let m = flat.unflatten(v, u.clone(), grid, *d)?;
        per_user.get_mut(u).expect("known user").push(m);
    }
    let mut synth = BTreeMap::new();
    for (u, parts) in per_user {
        let t = decode_embedding(&merge_embeddings(&u, grid, &parts))?;
        synth.insert(u, t);
    }
    let semantic = fit_semantic(&collect_features(trajectories, grid), cfg.n_purposes, mix_seed(seed, 3))?;
    let similarity = similarity_report(trajectories, &synth, grid, &semantic, colocation, cfg.edge_threshold);
    Ok(Defended {
        trajectories: synth,
        anonymity: None,
        similarity: Some(similarity),
    })
}

pub fn apply_defense(
    trajectories: &BTreeMap<UserId, Trajectory>,
    friends: &[(UserId, UserId)],
    grid: &GridSpec,
    defense: &Defense,
    colocation: &CoLocationConfig,
    seed: u64,
) -> Result<Defended, ExperimentError> {
    match defense {
        Defense::None => Ok(Defended {
            trajectories: trajectories.clone(),
            anonymity: None,
            similarity: None,
        }),
        Defense::KAnonymity(c) => k_anonymity_defense(trajectories, friends, grid, c, colocation, seed),
        Defense::PublishSynthetic(c) => synthetic_defense(trajectories, grid, c, colocation, seed),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DefenseRow {
    pub defense: String,
    pub subset: String,
    pub semantic: bool,
    pub raw: Metrics,
    pub defended: Metrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DefenseOutcome {
    pub rows: Vec<DefenseRow>,
    pub anonymity: Option<AnonymitySummary>,
    pub similarity: Option<SimilarityReport>,
}

/// Runs the attack on raw and defended data with the same pairs and seeds.
#[allow(clippy::too_many_arguments)]
pub fn run_defense(
    trajectories: &BTreeMap<UserId, Trajectory>,
    friends: &[(UserId, UserId)],
    pairs: &[LabeledPair],
    grid: &GridSpec,
    defense: &Defense,
    subsets: &[FeatureSubset],
    cfg: &AttackConfig,
    seed: u64,
) -> Result<DefenseOutcome, ExperimentError> {
    let raw = run_attack(trajectories, pairs, grid, subsets, cfg, seed)?;
    let defended = apply_defense(trajectories, friends, grid, defense, &cfg.colocation, mix_seed(seed, 4))?;
    let after = run_attack(&defended.trajectories, pairs, grid, subsets, cfg, seed)?;
    Ok(DefenseOutcome {
        rows: raw
            .into_iter()
            .zip(after)
            .map(|(r, d)| DefenseRow {
                defense: defense.name().to_string(),
                subset: r.subset,
                semantic: r.semantic,
                raw: r.metrics,
                defended: d.metrics,
            })
            .collect(),
        anonymity: defended.anonymity,
        similarity: defended.similarity,
    })
}
