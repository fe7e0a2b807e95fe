//! Command-line entry point.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::json;
use trajsoc_core::anonymize::{Audit, Statistic};
use trajsoc_core::mobility::MobilityModel3D;
use trajsoc_core::publish::semantic::{collect_features, fit_semantic};
use trajsoc_core::publish::similarity::{similarity_report, SimilarityReport};
use trajsoc_core::stats::mix_seed;
use trajsoc_core::traj::group_by_user;
use trajsoc_core::{extract_coevents, CoLocationConfig, GridSpec, Kernel, LatLon, StayRecord, Trajectory, UserId};

use crate::experiment::{
    anonymize_all, apply_defense, build_pair_data, fit_models, run_attack_on, sample_pairs, AttackConfig, Defense,
    KAnonymityConfig, SynthConfig,
};
use crate::io::{
    read_friends, read_json, read_stays, write_features, write_friends, write_json, write_jsonl, write_stays,
    ParseMode, StayLine,
};
use crate::report::{parse_subsets, run_benchmark, similarity_pairs, BenchmarkConfig, ExperimentReport, WorldSummary};
use crate::world::generate_world;

#[derive(Debug, Parser)]
#[command(
    name = "trajsoc",
    version,
    about = "Social-link inference attack and trajectory privacy defenses"
)]
struct Cli {
    /// Benchmark configuration (JSON).
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Seed for every random choice; defaults to the configured world seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, value_name = "DIR", default_value = ".")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic world: stays.csv, friends.csv, world.json.
    Simulate {
        #[arg(long)]
        users: Option<usize>,
        #[arg(long)]
        days: Option<usize>,
    },
    /// Validate a stay CSV and export it as stays.jsonl, dropping bad rows.
    Ingest {
        input: PathBuf,
        /// Fail on the first bad row instead of dropping it.
        #[arg(long)]
        strict: bool,
    },
    /// Pair features (features.csv) and co-occurrence events (coevents.jsonl).
    Features {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        coloc: ColocArgs,
    },
    /// Run the social-link attack: report.csv, report.json, plot_data.csv.
    Attack {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        coloc: ColocArgs,
        /// Comma-separated subsets: all, spatial, temporal, f_fre, f_pop+f_stay, ...
        #[arg(long, value_delimiter = ',', default_value = "all,spatial,temporal")]
        subsets: Vec<String>,
        /// Append visit-purpose profiles to the pair features.
        #[arg(long)]
        semantic: bool,
    },
    /// Fit per-user mobility models: models.json.
    FitMobility {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        coloc: ColocArgs,
        /// Mixture size, or `auto` for BIC selection.
        #[arg(long, default_value = "auto")]
        components: Components,
    },
    /// Build k-anonymity sets: published.jsonl and audit.json.
    Anonymize {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        coloc: ColocArgs,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        l: Option<f64>,
        /// Comma-separated statistics: stay_count, total_duration_h, radius_of_gyration_m, social_visit_fraction.
        #[arg(long, value_delimiter = ',')]
        stats: Option<Vec<String>>,
    },
    /// Synthetic trajectory publishing.
    Publish {
        #[command(subcommand)]
        command: PublishCommand,
    },
    /// Full benchmark: ablation, semantic comparison and defenses.
    Report,
}

#[derive(Debug, Subcommand)]
enum PublishCommand {
    /// Train the generator and publish synthetic.csv with similarity.json.
    Synth {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        coloc: ColocArgs,
    },
    /// Compare two stay files: similarity.json.
    Similarity {
        #[arg(long)]
        real: PathBuf,
        #[arg(long)]
        synth: PathBuf,
        #[command(flatten)]
        coloc: ColocArgs,
    },
}

/// Input data; without `--stays` a world is simulated from the configuration.
#[derive(Debug, Args)]
struct DataArgs {
    #[arg(long, value_name = "CSV")]
    stays: Option<PathBuf>,
    #[arg(long, value_name = "CSV")]
    friends: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ColocArgs {
    /// Spatial co-occurrence threshold in meters.
    #[arg(long)]
    alpha_d: Option<f64>,
    /// Temporal co-occurrence threshold in seconds.
    #[arg(long)]
    alpha_t: Option<f64>,
    /// Kernel for both thresholds: indicator or exponential.
    #[arg(long, value_parser = parse_kernel)]
    kernel: Option<Kernel>,
}

impl ColocArgs {
    fn apply(&self, base: CoLocationConfig) -> CoLocationConfig {
        CoLocationConfig {
            alpha_d: self.alpha_d.unwrap_or(base.alpha_d),
            alpha_t: self.alpha_t.unwrap_or(base.alpha_t),
            spatial_kernel: self.kernel.unwrap_or(base.spatial_kernel),
            temporal_kernel: self.kernel.unwrap_or(base.temporal_kernel),
        }
    }
}

fn parse_kernel(s: &str) -> Result<Kernel, String> {
    match s {
        "indicator" => Ok(Kernel::Indicator),
        "exponential" => Ok(Kernel::Exponential),
        _ => Err(format!("unknown kernel {s:?}")),
    }
}

#[derive(Debug, Clone, Copy)]
struct Components(Option<usize>);

impl FromStr for Components {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "auto" => Ok(Components(None)),
            n => match n.parse::<usize>() {
                Ok(m) if m > 0 => Ok(Components(Some(m))),
                _ => Err(format!("expected `auto` or a positive count, got {n:?}")),
            },
        }
    }
}

/// Parses `args`, runs the command and maps the outcome to an exit status:
/// 0 on success, 1 on a domain error, 2 on a usage error.
pub fn run<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

struct Dataset {
    trajectories: BTreeMap<UserId, Trajectory>,
    users: Vec<UserId>,
    friends: Vec<(UserId, UserId)>,
    grid: GridSpec,
    world: Option<crate::world::World>,
}

struct Session {
    cfg: BenchmarkConfig,
    seed: u64,
    out: PathBuf,
}

impl Session {
    fn load(&self, data: &DataArgs) -> anyhow::Result<Dataset> {
        let Some(stays) = &data.stays else {
            let world = generate_world(&crate::world::WorldConfig {
                seed: self.seed,
                ..self.cfg.world.clone()
            })?;
            return Ok(Dataset {
                trajectories: world.trajectories(),
                users: world.users.clone(),
                friends: world.friends.clone(),
                grid: world.grid,
                world: Some(world),
            });
        };
        let records = read_stays(stays, ParseMode::Strict)?.records;
        let trajectories = group_by_user(&records)?;
        let friends = match &data.friends {
            Some(p) => read_friends(p)?,
            None => Vec::new(),
        };
        for (a, b) in &friends {
            for u in [a, b] {
                if !trajectories.contains_key(u) {
                    bail!("friend list names user {u} who has no stays");
                }
            }
        }
        Ok(Dataset {
            users: trajectories.keys().cloned().collect(),
            grid: self.grid_for(&[&records])?,
            trajectories,
            friends,
            world: None,
        })
    }

    fn grid_for(&self, sets: &[&[StayRecord]]) -> anyhow::Result<GridSpec> {
        let points: Vec<LatLon> = sets
            .iter()
            .flat_map(|s| s.iter().flat_map(|r| [r.start, r.stop]))
            .collect();
        Ok(GridSpec::covering(
            &points,
            self.cfg.world.cell_size_m,
            self.cfg.world.slot_minutes,
        )?)
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn k_anonymity(&self) -> KAnonymityConfig {
        self.cfg
            .defenses
            .iter()
            .find_map(|d| match d {
                Defense::KAnonymity(c) => Some(c.clone()),
                _ => None,
            })
            .unwrap_or_default()
    }

    fn synth(&self) -> SynthConfig {
        self.cfg
            .defenses
            .iter()
            .find_map(|d| match d {
                Defense::PublishSynthetic(c) => Some(c.clone()),
                _ => None,
            })
            .unwrap_or_default()
    }
}

fn labeled(ds: &Dataset, attack: &AttackConfig, seed: u64) -> anyhow::Result<Vec<crate::experiment::LabeledPair>> {
    if ds.friends.is_empty() {
        bail!("labeled pairs need a friend list (--friends)");
    }
    Ok(sample_pairs(
        &ds.users,
        &ds.friends,
        attack.negative_ratio,
        mix_seed(seed, 1),
    ))
}

fn execute(cli: Cli) -> anyhow::Result<()> {
    let cfg: BenchmarkConfig = match &cli.config {
        Some(p) => read_json(p).with_context(|| format!("reading configuration {}", p.display()))?,
        None => BenchmarkConfig::default(),
    };
    let seed = cli.seed.unwrap_or(cfg.world.seed);
    fs::create_dir_all(&cli.out).with_context(|| format!("creating {}", cli.out.display()))?;
    let ctx = Session {
        cfg,
        seed,
        out: cli.out,
    };
    match cli.command {
        Command::Simulate { users, days } => simulate(&ctx, users, days),
        Command::Ingest { input, strict } => ingest(&ctx, &input, strict),
        Command::Features { data, coloc } => features(&ctx, &data, &coloc),
        Command::Attack {
            data,
            coloc,
            subsets,
            semantic,
        } => attack(&ctx, &data, &coloc, &subsets, semantic),
        Command::FitMobility {
            data,
            coloc,
            components,
        } => fit_mobility(&ctx, &data, &coloc, components),
        Command::Anonymize {
            data,
            coloc,
            k,
            l,
            stats,
        } => anonymize(&ctx, &data, &coloc, k, l, stats),
        Command::Publish {
            command: PublishCommand::Synth { data, coloc },
        } => publish_synth(&ctx, &data, &coloc),
        Command::Publish {
            command: PublishCommand::Similarity { real, synth, coloc },
        } => publish_similarity(&ctx, &real, &synth, &coloc),
        Command::Report => report(&ctx),
    }
}

fn simulate(ctx: &Session, users: Option<usize>, days: Option<usize>) -> anyhow::Result<()> {
    let mut cfg = ctx.cfg.world.clone();
    cfg.seed = ctx.seed;
    cfg.n_users = users.unwrap_or(cfg.n_users);
    cfg.n_days = days.unwrap_or(cfg.n_days);
    let world = generate_world(&cfg)?;
    write_stays(&ctx.path("stays.csv"), &world.records)?;
    write_friends(&ctx.path("friends.csv"), &world.friends)?;
    let truth = json!({
        "config": world.config,
        "grid": world.grid,
        "users": world.users,
        "homes": world.homes,
        "workplaces": world.workplaces,
        "employer": world.employer,
        "venues": world.venues,
        "cafe_of": world.cafe_of,
        "routines": world.routines,
        "routine_of": world.routine_of,
        "meetings": world.meetings,
    });
    write_json(&ctx.path("world.json"), &truth)?;
    println!(
        "{} users, {} stays, {} friend edges, {} meetings",
        world.users.len(),
        world.records.len(),
        world.friends.len(),
        world.meetings.len()
    );
    Ok(())
}

fn ingest(ctx: &Session, input: &Path, strict: bool) -> anyhow::Result<()> {
    let mode = if strict { ParseMode::Strict } else { ParseMode::Skip };
    let parsed = read_stays(input, mode)?;
    for e in &parsed.skipped {
        eprintln!("skipped {e}");
    }
    write_jsonl(
        &ctx.path("stays.jsonl"),
        parsed.records.iter().map(|r| StayLine::new(r, None)),
    )?;
    println!("{} records, {} skipped", parsed.records.len(), parsed.skipped.len());
    Ok(())
}

fn features(ctx: &Session, data: &DataArgs, coloc: &ColocArgs) -> anyhow::Result<()> {
    let ds = ctx.load(data)?;
    let attack = AttackConfig {
        colocation: coloc.apply(ctx.cfg.attack.colocation),
        ..ctx.cfg.attack.clone()
    };
    let pairs = labeled(&ds, &attack, ctx.seed)?;
    let events = extract_coevents(&ds.trajectories, &attack.colocation, &ds.grid);
    let rows = crate::experiment::pair_features(
        &ds.trajectories,
        &events,
        &pairs,
        &ds.grid,
        &trajsoc_core::features::Weekends,
    )?;
    write_features(&ctx.path("features.csv"), &rows)?;
    write_jsonl(&ctx.path("coevents.jsonl"), &events)?;
    println!("{} pairs, {} co-occurrence events", rows.len(), events.len());
    Ok(())
}

fn attack(ctx: &Session, data: &DataArgs, coloc: &ColocArgs, subsets: &[String], semantic: bool) -> anyhow::Result<()> {
    let ds = ctx.load(data)?;
    let attack = AttackConfig {
        colocation: coloc.apply(ctx.cfg.attack.colocation),
        semantic,
        ..ctx.cfg.attack.clone()
    };
    let parsed = parse_subsets(subsets)?;
    let pairs = labeled(&ds, &attack, ctx.seed)?;
    let pair_data = build_pair_data(&ds.trajectories, &pairs, &ds.grid, &attack, ctx.seed)?;
    let rows = run_attack_on(&pair_data, &pair_data.labels(), &parsed, &attack, ctx.seed)?;
    let mut world = ctx.cfg.world.clone();
    world.seed = ctx.seed;
    let report = ExperimentReport {
        seed: ctx.seed,
        config: BenchmarkConfig {
            world,
            attack,
            subsets: subsets.to_vec(),
            semantic_subset: None,
            defenses: Vec::new(),
            defense_subsets: Vec::new(),
        },
        world: ds.world.as_ref().map(|w| WorldSummary::new(w, &pairs)),
        attack: rows,
        defenses: Vec::new(),
    };
    report.check().map_err(|e| anyhow!(e))?;
    report.write(&ctx.out)?;
    print_attack(&report);
    Ok(())
}

fn print_attack(report: &ExperimentReport) {
    println!(
        "{:<24} {:>9} {:>9} {:>9} {:>9}",
        "subset", "precision", "recall", "f1", "auc"
    );
    for r in &report.attack {
        let name = if r.semantic {
            format!("{} +semantic", r.subset)
        } else {
            r.subset.clone()
        };
        let m = &r.metrics;
        println!(
            "{name:<24} {:>9.3} {:>9.3} {:>9.3} {:>9.3}",
            m.precision, m.recall, m.f1, m.auc
        );
    }
}

fn fit_mobility(ctx: &Session, data: &DataArgs, coloc: &ColocArgs, components: Components) -> anyhow::Result<()> {
    let ds = ctx.load(data)?;
    let k = ctx.k_anonymity();
    let colocation = coloc.apply(ctx.cfg.attack.colocation);
    let events = extract_coevents(&ds.trajectories, &colocation, &ds.grid);
    let models = fit_models(
        &ds.trajectories,
        &ds.friends,
        &events,
        components.0.or(k.components),
        ds.grid.time_slot_minutes,
        k.tau_social,
        ctx.seed,
    )?;
    let list: Vec<&MobilityModel3D> = models.values().collect();
    write_json(&ctx.path("models.json"), &list)?;
    let clusters: usize = list.iter().map(|m| m.clusters.len()).sum();
    let social: usize = list.iter().map(|m| m.social_flags.iter().filter(|&&f| f).count()).sum();
    println!("{} models, {clusters} clusters, {social} social", list.len());
    Ok(())
}

#[derive(Serialize)]
struct AuditEntry<'a> {
    user_id: &'a UserId,
    k: usize,
    #[serde(flatten)]
    audit: &'a Audit,
}

fn anonymize(
    ctx: &Session,
    data: &DataArgs,
    coloc: &ColocArgs,
    k: Option<usize>,
    l: Option<f64>,
    stats: Option<Vec<String>>,
) -> anyhow::Result<()> {
    let ds = ctx.load(data)?;
    let mut cfg = ctx.k_anonymity();
    cfg.k = k.unwrap_or(cfg.k);
    cfg.l = l.unwrap_or(cfg.l);
    if let Some(names) = stats {
        cfg.stats = names.iter().map(|s| s.parse::<Statistic>()).collect::<Result<_, _>>()?;
    }
    let colocation = coloc.apply(ctx.cfg.attack.colocation);
    let sets = anonymize_all(&ds.trajectories, &ds.friends, &ds.grid, &cfg, &colocation, ctx.seed)?;
    let lines = sets.values().flat_map(|set| {
        set.members()
            .enumerate()
            .flat_map(|(m, t)| t.stays().iter().map(move |s| StayLine::new(s, Some(m))))
    });
    write_jsonl(&ctx.path("published.jsonl"), lines)?;
    let audits: Vec<AuditEntry> = sets
        .iter()
        .map(|(u, set)| AuditEntry {
            user_id: u,
            k: set.k(),
            audit: &set.audit,
        })
        .collect();
    write_json(&ctx.path("audit.json"), &audits)?;
    let mean = audits.iter().map(|a| a.audit.acceptance_rate).sum::<f64>() / audits.len().max(1) as f64;
    println!(
        "{} sets of {} members, mean acceptance rate {mean:.3}",
        sets.len(),
        cfg.k
    );
    Ok(())
}

fn print_similarity(s: &SimilarityReport) {
    for (name, v) in similarity_pairs(s) {
        println!("{name:<16} {v:.4}");
    }
}

fn publish_synth(ctx: &Session, data: &DataArgs, coloc: &ColocArgs) -> anyhow::Result<()> {
    let ds = ctx.load(data)?;
    let colocation = coloc.apply(ctx.cfg.attack.colocation);
    let defense = Defense::PublishSynthetic(ctx.synth());
    let out = apply_defense(&ds.trajectories, &ds.friends, &ds.grid, &defense, &colocation, ctx.seed)?;
    let records: Vec<StayRecord> = out
        .trajectories
        .values()
        .flat_map(|t| t.stays().iter().cloned())
        .collect();
    write_stays(&ctx.path("synthetic.csv"), &records)?;
    let sim = out.similarity.expect("synthetic publishing reports similarity");
    write_json(&ctx.path("similarity.json"), &sim)?;
    println!("{} synthetic stays", records.len());
    print_similarity(&sim);
    Ok(())
}

fn publish_similarity(ctx: &Session, real: &Path, synth: &Path, coloc: &ColocArgs) -> anyhow::Result<()> {
    let a = read_stays(real, ParseMode::Strict)?.records;
    let b = read_stays(synth, ParseMode::Strict)?.records;
    let grid = ctx.grid_for(&[&a, &b])?;
    let (ta, tb) = (group_by_user(&a)?, group_by_user(&b)?);
    let cfg = ctx.synth();
    let semantic = fit_semantic(&collect_features(&ta, &grid), cfg.n_purposes, mix_seed(ctx.seed, 3))?;
    let sim = similarity_report(
        &ta,
        &tb,
        &grid,
        &semantic,
        &coloc.apply(ctx.cfg.attack.colocation),
        cfg.edge_threshold,
    );
    write_json(&ctx.path("similarity.json"), &sim)?;
    print_similarity(&sim);
    Ok(())
}

fn report(ctx: &Session) -> anyhow::Result<()> {
    let (report, timings) = run_benchmark(&ctx.cfg, ctx.seed)?;
    report.check().map_err(|e| anyhow!(e))?;
    report.write(&ctx.out)?;
    print_attack(&report);
    for d in &report.defenses {
        for r in &d.rows {
            println!(
                "defense {:<18} {:<10} f1 {:.3} -> {:.3}  auc {:.3} -> {:.3}",
                r.defense, r.subset, r.raw.f1, r.defended.f1, r.raw.auc, r.defended.auc
            );
        }
        if let Some(s) = &d.similarity {
            print_similarity(s);
        }
    }
    for (name, t) in timings {
        eprintln!("time {name} {:.2}s", t.as_secs_f64());
    }
    Ok(())
}
