use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use trajsoc::report::ExperimentReport;

fn trajsoc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_trajsoc")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> Output {
    let out = trajsoc(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

const SMALL: &str = r#"{
  "world": {"n_users": 24, "n_days": 7},
  "attack": {"repeats": 1, "training": {"learning_rate": 0.1, "epochs": 60, "batch_size": 16}},
  "subsets": ["all", "f_fre"],
  "defenses": [
    {"kind": "none"},
    {"kind": "k_anonymity", "k": 3, "l": 0.3},
    {"kind": "publish_synthetic", "gan": {"steps": 200}}
  ]
}"#;

fn small_config(dir: &Path) -> String {
    let path = dir.join("small.json");
    fs::write(&path, SMALL).unwrap();
    p(&path).to_string()
}

fn simulate(dir: &Path, cfg: &str) {
    ok(&["--config", cfg, "--seed", "5", "--out", p(dir), "simulate"]);
}

#[test]
fn simulate_is_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for dir in [&a, &b] {
        ok(&[
            "simulate",
            "--users",
            "16",
            "--days",
            "3",
            "--seed",
            "42",
            "--out",
            p(dir),
        ]);
    }
    for f in ["stays.csv", "friends.csv", "world.json"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    let stays = fs::read_to_string(a.join("stays.csv")).unwrap();
    assert!(stays.starts_with("ID,Start time,Start lat,Start lon,Stop time,Stop lat,Stop lon\n"));
}

#[test]
fn attack_report_has_one_row_per_subset() {
    let tmp = tempfile::tempdir().unwrap();
    ok(&[
        "attack",
        "--subsets",
        "all,spatial,temporal",
        "--seed",
        "7",
        "--out",
        p(tmp.path()),
    ]);
    let csv = fs::read_to_string(tmp.path().join("report.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 4);
    assert_eq!(lines[0], "table,defense,stage,subset,semantic,precision,recall,f1,auc");
    let report: ExperimentReport =
        serde_json::from_str(&fs::read_to_string(tmp.path().join("report.json")).unwrap()).unwrap();
    assert_eq!(report.seed, 7);
    assert_eq!(report.attack.len(), 3);
    report.check().unwrap();
    let plot = fs::read_to_string(tmp.path().join("plot_data.csv")).unwrap();
    assert!(plot.starts_with("figure,series,x,y\n"));
    assert_eq!(plot.lines().count(), 1 + 3 * 4);
}

#[test]
fn missing_input_names_the_file() {
    let tmp = tempfile::tempdir().unwrap();
    let out = trajsoc(&["ingest", "no_such_stays.csv", "--out", p(tmp.path())]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("no_such_stays.csv"));
    let out = trajsoc(&[
        "attack",
        "--stays",
        "gone.csv",
        "--friends",
        "gone_too.csv",
        "--out",
        p(tmp.path()),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("gone.csv"));
}

#[test]
fn usage_errors_exit_with_two() {
    for args in [
        &["attack", "--bogus"][..],
        &["frobnicate"],
        &["fit-mobility", "--components", "0"],
        &["attack", "--seed", "x"],
        &[],
    ] {
        let out = trajsoc(args);
        assert_eq!(out.status.code(), Some(2), "{args:?}");
        let err = String::from_utf8_lossy(&out.stderr);
        assert!(err.contains("Usage") || err.contains("--help"), "{args:?}: {err}");
    }
    assert_eq!(trajsoc(&["--help"]).status.code(), Some(0));
}

#[test]
fn ingest_skips_bad_rows_unless_strict() {
    let tmp = tempfile::tempdir().unwrap();
    let input = tmp.path().join("in.csv");
    fs::write(
        &input,
        "ID,Start time,Start lat,Start lon,Stop time,Stop lat,Stop lon\n\
         399387,16/09/2019 15:44:57,28.027098,112.973641,16/09/2019 15:50:11,28.032458,112.988596\n\
         1,16/09/2019 15:50:11,28.0,112.9,16/09/2019 15:44:57,28.0,112.9\n",
    )
    .unwrap();
    let out = ok(&["ingest", p(&input), "--out", p(tmp.path())]);
    assert!(String::from_utf8_lossy(&out.stdout).contains("1 records, 1 skipped"));
    assert!(String::from_utf8_lossy(&out.stderr).contains("row 2: inverted_interval"));
    let jsonl = fs::read_to_string(tmp.path().join("stays.jsonl")).unwrap();
    assert_eq!(jsonl.lines().count(), 1);
    assert!(jsonl.contains("\"start_time\":\"2019-09-16T15:44:57Z\""));
    let strict = trajsoc(&["ingest", "--strict", p(&input), "--out", p(tmp.path())]);
    assert_eq!(strict.status.code(), Some(1));
}

#[test]
fn file_pipeline() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let cfg = small_config(dir);
    simulate(dir, &cfg);
    let stays = dir.join("stays.csv");
    let friends = dir.join("friends.csv");
    let data = ["--stays", p(&stays), "--friends", p(&friends)];
    let run = |cmd: &[&str]| {
        let mut args = vec!["--config", cfg.as_str(), "--seed", "5", "--out", p(dir)];
        args.extend_from_slice(cmd);
        ok(&args)
    };

    run(&[&["features"][..], &data].concat());
    let features = fs::read_to_string(dir.join("features.csv")).unwrap();
    let friend_count = fs::read_to_string(&friends).unwrap().lines().count() - 1;
    assert_eq!(features.lines().count(), 1 + 2 * friend_count);
    assert!(fs::read_to_string(dir.join("coevents.jsonl")).unwrap().lines().count() > 0);

    run(&[&["fit-mobility", "--components", "2"][..], &data].concat());
    let models: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.join("models.json")).unwrap()).unwrap();
    let models = models.as_array().unwrap();
    assert_eq!(models.len(), 24);
    assert!(models.iter().all(|m| m["clusters"].as_array().unwrap().len() == 2));

    run(&[
        &[
            "anonymize",
            "--k",
            "3",
            "--l",
            "0.5",
            "--stats",
            "stay_count,total_duration_h",
        ][..],
        &data,
    ]
    .concat());
    let published = fs::read_to_string(dir.join("published.jsonl")).unwrap();
    assert!(!published.contains("real"));
    let stay_count = fs::read_to_string(&stays).unwrap().lines().count() - 1;
    assert_eq!(published.lines().count(), 3 * stay_count);
    let audit: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.join("audit.json")).unwrap()).unwrap();
    for entry in audit.as_array().unwrap() {
        assert_eq!(entry["k"], 3);
        assert!(entry["real_position"].as_u64().unwrap() < 3);
        for dev in entry["deviations"].as_array().unwrap() {
            assert!(dev.as_object().unwrap().values().all(|v| v.as_f64().unwrap() <= 0.5));
        }
    }

    run(&[&["publish", "synth"][..], &data].concat());
    let synth = dir.join("synthetic.csv");
    let sim: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.join("similarity.json")).unwrap()).unwrap();
    for key in ["spatial_jsd", "temporal_jsd", "semantic_jsd", "social_jaccard"] {
        let v = sim[key].as_f64().unwrap();
        assert!((0.0..=1.0).contains(&v), "{key} = {v}");
    }

    run(&["publish", "similarity", "--real", p(&stays), "--synth", p(&stays)]);
    let same: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.join("similarity.json")).unwrap()).unwrap();
    assert_eq!(same["spatial_jsd"], 0.0);
    assert_eq!(same["temporal_jsd"], 0.0);
    assert_eq!(same["semantic_jsd"], 0.0);
    assert_eq!(same["social_jaccard"], 1.0);
    run(&["publish", "similarity", "--real", p(&stays), "--synth", p(&synth)]);

    run(&[&["attack", "--semantic", "--subsets", "all"][..], &data].concat());
    let csv = fs::read_to_string(dir.join("report.csv")).unwrap();
    assert!(csv.lines().nth(1).unwrap().starts_with("attack,none,raw,all,true,"));
}

#[test]
fn report_is_reproducible_and_consistent() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path());
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for dir in [&a, &b] {
        ok(&["--config", &cfg, "--seed", "3", "--out", p(dir), "report"]);
    }
    for f in ["report.json", "report.csv", "plot_data.csv"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    let report: ExperimentReport = serde_json::from_str(&fs::read_to_string(a.join("report.json")).unwrap()).unwrap();
    report.check().unwrap();
    assert_eq!(report.attack.len(), 3);
    assert_eq!(report.defenses.len(), 3);
    let none = report.defense("none").unwrap();
    assert!(none.rows.iter().all(|r| r.raw == r.defended));
    assert!(report.defense("k_anonymity").unwrap().anonymity.is_some());
    assert!(report.defense("publish_synthetic").unwrap().similarity.is_some());
}
