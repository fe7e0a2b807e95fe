//! The benchmark run: one synthetic world, the feature ablation, the semantic
//! comparison and every configured defense, collected into one report.

use std::path::Path;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;
use trajsoc_core::features::{FeatureError, Metric};
use trajsoc_core::publish::similarity::SimilarityReport;
use trajsoc_core::stats::mix_seed;
use trajsoc_core::FeatureSubset;

use crate::experiment::{
    build_pair_data, run_attack_on, run_defense, sample_pairs, AnonymitySummary, AttackConfig, AttackRow, Defense,
    DefenseRow, ExperimentError, KAnonymityConfig, LabeledPair, Metrics, SynthConfig,
};
use crate::io::{write_json, write_table, IoError};
use crate::world::{generate_world, World, WorldConfig, WorldError};

pub const REPORT_HEADER: [&str; 9] = [
    "table",
    "defense",
    "stage",
    "subset",
    "semantic",
    "precision",
    "recall",
    "f1",
    "auc",
];
pub const PLOT_HEADER: [&str; 4] = ["figure", "series", "x", "y"];

#[derive(Debug, Error)]
pub enum ReportError {
    #[error(transparent)]
    World(#[from] WorldError),
    #[error(transparent)]
    Experiment(#[from] ExperimentError),
    #[error(transparent)]
    Subset(#[from] FeatureError),
    #[error(transparent)]
    Io(#[from] IoError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchmarkConfig {
    pub world: WorldConfig,
    pub attack: AttackConfig,
    /// Subsets of the ablation, by name.
    pub subsets: Vec<String>,
    /// Subset attacked with and without the semantic module.
    pub semantic_subset: Option<String>,
    pub defenses: Vec<Defense>,
    pub defense_subsets: Vec<String>,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        let mut subsets = vec!["all".to_string(), "spatial".to_string(), "temporal".to_string()];
        subsets.extend(Metric::ALL.iter().map(|m| m.name().to_string()));
        BenchmarkConfig {
            world: WorldConfig::default(),
            attack: AttackConfig::default(),
            subsets,
            semantic_subset: Some("all".to_string()),
            defenses: vec![
                Defense::None,
                Defense::KAnonymity(KAnonymityConfig::default()),
                Defense::PublishSynthetic(SynthConfig::default()),
            ],
            defense_subsets: vec!["all".to_string()],
        }
    }
}

pub fn parse_subsets(names: &[String]) -> Result<Vec<FeatureSubset>, FeatureError> {
    names.iter().map(|n| FeatureSubset::parse(n)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldSummary {
    pub users: usize,
    pub days: usize,
    pub stays: usize,
    pub friend_edges: usize,
    pub meetings: usize,
    pub labeled_pairs: usize,
}

impl WorldSummary {
    pub fn new(world: &World, pairs: &[LabeledPair]) -> Self {
        WorldSummary {
            users: world.users.len(),
            days: world.config.n_days,
            stays: world.records.len(),
            friend_edges: world.friends.len(),
            meetings: world.meetings.len(),
            labeled_pairs: pairs.len(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DefenseSection {
    pub defense: String,
    pub rows: Vec<DefenseRow>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub anonymity: Option<AnonymitySummary>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub similarity: Option<SimilarityReport>,
}

/// Everything the benchmark measures. Wall-clock timings are kept out so that
/// equal seeds give equal bytes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub seed: u64,
    pub config: BenchmarkConfig,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub world: Option<WorldSummary>,
    pub attack: Vec<AttackRow>,
    pub defenses: Vec<DefenseSection>,
}

pub type Timings = Vec<(String, Duration)>;

impl ExperimentReport {
    pub fn attack_row(&self, subset: &str, semantic: bool) -> Option<&AttackRow> {
        self.attack
            .iter()
            .find(|r| r.subset == subset && r.semantic == semantic)
    }

    pub fn defense(&self, name: &str) -> Option<&DefenseSection> {
        self.defenses.iter().find(|d| d.defense == name)
    }

    pub fn all_metrics(&self) -> Vec<Metrics> {
        let mut out: Vec<Metrics> = self.attack.iter().map(|r| r.metrics).collect();
        for d in &self.defenses {
            for r in &d.rows {
                out.push(r.raw);
                out.push(r.defended);
            }
        }
        out
    }

    /// Every metric lies in [0, 1] and every F1 is the harmonic mean of its
    /// precision and recall.
    pub fn check(&self) -> Result<(), String> {
        for m in self.all_metrics() {
            for (name, v) in [
                ("precision", m.precision),
                ("recall", m.recall),
                ("f1", m.f1),
                ("auc", m.auc),
            ] {
                if !(0.0..=1.0).contains(&v) {
                    return Err(format!("{name} = {v} outside [0, 1]"));
                }
            }
            let want = if m.precision + m.recall == 0.0 {
                0.0
            } else {
                2.0 * m.precision * m.recall / (m.precision + m.recall)
            };
            if (m.f1 - want).abs() > 1e-12 {
                return Err(format!("f1 = {} but 2PR/(P+R) = {want}", m.f1));
            }
        }
        Ok(())
    }

    fn table_rows(&self) -> Vec<Vec<String>> {
        let row = |table: &str, defense: &str, stage: &str, subset: &str, semantic: bool, m: &Metrics| {
            vec![
                table.to_string(),
                defense.to_string(),
                stage.to_string(),
                subset.to_string(),
                semantic.to_string(),
                m.precision.to_string(),
                m.recall.to_string(),
                m.f1.to_string(),
                m.auc.to_string(),
            ]
        };
        let mut rows: Vec<Vec<String>> = self
            .attack
            .iter()
            .map(|r| row("attack", "none", "raw", &r.subset, r.semantic, &r.metrics))
            .collect();
        for d in &self.defenses {
            for r in &d.rows {
                rows.push(row("defense", &r.defense, "raw", &r.subset, r.semantic, &r.raw));
                rows.push(row(
                    "defense",
                    &r.defense,
                    "defended",
                    &r.subset,
                    r.semantic,
                    &r.defended,
                ));
            }
        }
        rows
    }

    fn plot_rows(&self) -> Vec<[String; 4]> {
        let mut out = Vec::new();
        let mut push = |figure: &str, series: String, x: &str, y: f64| {
            out.push([figure.to_string(), series, x.to_string(), y.to_string()]);
        };
        for r in self.attack.iter().filter(|r| !r.semantic) {
            for (name, v) in metric_pairs(&r.metrics) {
                push("ablation", name.to_string(), &r.subset, v);
            }
        }
        if let Some(sub) = &self.config.semantic_subset {
            for semantic in [false, true] {
                if let Some(r) = self.attack_row(sub, semantic) {
                    let series = if semantic { "with_semantic" } else { "without_semantic" };
                    for (name, v) in metric_pairs(&r.metrics) {
                        push("semantic_lift", series.to_string(), name, v);
                    }
                }
            }
        }
        for d in &self.defenses {
            for r in &d.rows {
                for (stage, m) in [("raw", &r.raw), ("defended", &r.defended)] {
                    for (name, v) in metric_pairs(m) {
                        push("defense", format!("{}:{}:{stage}", r.defense, r.subset), name, v);
                    }
                }
            }
            if let Some(s) = &d.similarity {
                for (name, v) in similarity_pairs(s) {
                    push("similarity", d.defense.clone(), name, v);
                }
            }
        }
        out
    }

    /// Writes `report.json`, `report.csv` and `plot_data.csv` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<(), IoError> {
        write_json(&dir.join("report.json"), self)?;
        write_table(&dir.join("report.csv"), &REPORT_HEADER, self.table_rows())?;
        write_table(
            &dir.join("plot_data.csv"),
            &PLOT_HEADER,
            self.plot_rows().into_iter().map(Vec::from),
        )
    }
}

fn metric_pairs(m: &Metrics) -> [(&'static str, f64); 4] {
    [
        ("precision", m.precision),
        ("recall", m.recall),
        ("f1", m.f1),
        ("auc", m.auc),
    ]
}

pub fn similarity_pairs(s: &SimilarityReport) -> [(&'static str, f64); 4] {
    [
        ("spatial_jsd", s.spatial_jsd),
        ("temporal_jsd", s.temporal_jsd),
        ("semantic_jsd", s.semantic_jsd),
        ("social_jaccard", s.social_jaccard),
    ]
}

/// Generates the world from `seed` and runs every configured experiment on it.
pub fn run_benchmark(cfg: &BenchmarkConfig, seed: u64) -> Result<(ExperimentReport, Timings), ReportError> {
    let mut timings = Timings::new();
    let mut clock = Instant::now();
    let mut lap = |name: &str, timings: &mut Timings| {
        timings.push((name.to_string(), clock.elapsed()));
        clock = Instant::now();
    };
    let subsets = parse_subsets(&cfg.subsets)?;
    let defense_subsets = parse_subsets(&cfg.defense_subsets)?;
    let semantic_subset = cfg.semantic_subset.as_deref().map(FeatureSubset::parse).transpose()?;

    let world_cfg = WorldConfig {
        seed,
        ..cfg.world.clone()
    };
    let world = generate_world(&world_cfg)?;
    let trajs = world.trajectories();
    let pairs = sample_pairs(
        &world.users,
        &world.friends,
        cfg.attack.negative_ratio,
        mix_seed(seed, 1),
    );
    lap("world", &mut timings);

    let data = build_pair_data(&trajs, &pairs, &world.grid, &cfg.attack, seed)?;
    let labels = data.labels();
    let mut attack = run_attack_on(&data, &labels, &subsets, &cfg.attack, seed)?;
    lap("attack", &mut timings);

    if let Some(s) = &semantic_subset {
        if !subsets.iter().any(|x| x.name() == s.name()) {
            attack.extend(run_attack_on(
                &data,
                &labels,
                std::slice::from_ref(s),
                &cfg.attack,
                seed,
            )?);
        }
        let sem_cfg = AttackConfig {
            semantic: true,
            ..cfg.attack.clone()
        };
        let sem = build_pair_data(&trajs, &pairs, &world.grid, &sem_cfg, seed)?;
        attack.extend(run_attack_on(&sem, &labels, std::slice::from_ref(s), &sem_cfg, seed)?);
        lap("semantic", &mut timings);
    }

    let mut defenses = Vec::new();
    for d in &cfg.defenses {
        let out = run_defense(
            &trajs,
            &world.friends,
            &pairs,
            &world.grid,
            d,
            &defense_subsets,
            &cfg.attack,
            seed,
        )?;
        defenses.push(DefenseSection {
            defense: d.name().to_string(),
            rows: out.rows,
            anonymity: out.anonymity,
            similarity: out.similarity,
        });
        lap(d.name(), &mut timings);
    }

    let report = ExperimentReport {
        seed,
        config: BenchmarkConfig {
            world: world_cfg,
            ..cfg.clone()
        },
        world: Some(WorldSummary::new(&world, &pairs)),
        attack,
        defenses,
    };
    Ok((report, timings))
}
