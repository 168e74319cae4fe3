use std::process::Command;

use deepair::baselines::{cf_centers, place_and_connect, random_centers, PlacementMethod};
use deepair::config::PipelineConfig;
use deepair::geometry::Point2;
use deepair::harness::{emit, run_experiment, ExperimentSpec, ResultTable, AGGREGATE_FILE, ROWS_FILE};
use deepair::scenario::{generate_scenario, ArenaConfig, Scenario, TaskProfile};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn spec(methods: Vec<PlacementMethod>, users: Vec<usize>, fleets: Vec<usize>, seeds: u64) -> ExperimentSpec {
    ExperimentSpec {
        methods,
        users,
        fleets,
        points: vec![3],
        seeds: (0..seeds).collect(),
        duration: 200.0,
    }
}

#[test]
fn thirty_rows_and_identical_reruns() {
    let s = spec(vec![PlacementMethod::Cf(16)], vec![60, 80, 100], vec![10], 10);
    let cfg = PipelineConfig::default();
    let a = run_experiment(&s, &cfg);
    assert_eq!(a.rows.len(), 30);
    assert!(!a.has_failures());
    assert_eq!(a, run_experiment(&s, &cfg));

    let (d1, d2) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let f1 = emit(&a, d1.path()).unwrap();
    let f2 = emit(&run_experiment(&s, &cfg), d2.path()).unwrap();
    for (p, q) in f1.iter().zip(&f2) {
        assert_eq!(std::fs::read(p).unwrap(), std::fs::read(q).unwrap(), "{}", p.display());
    }
    let rows = std::fs::read_to_string(d1.path().join(ROWS_FILE)).unwrap();
    assert_eq!(rows.lines().count(), 31);
    assert_eq!(
        rows.lines().next().unwrap(),
        "method,seed,users,fleet,detectors_used,success_rate"
    );
}

#[test]
fn empty_table_writes_headers_only() {
    let dir = tempfile::tempdir().unwrap();
    emit(&ResultTable::default(), dir.path()).unwrap();
    let rows = std::fs::read_to_string(dir.path().join(ROWS_FILE)).unwrap();
    assert_eq!(rows, "method,seed,users,fleet,detectors_used,success_rate\n");
    let agg = std::fs::read_to_string(dir.path().join(AGGREGATE_FILE)).unwrap();
    assert_eq!(agg.lines().count(), 1);
}

#[test]
fn aggregates_recomputed_from_rows() {
    let s = spec(vec![PlacementMethod::Random(8)], vec![60], vec![4, 10], 5);
    let t = run_experiment(&s, &PipelineConfig::default());
    let aggs = t.aggregates();
    assert_eq!(aggs.len(), 2);
    for a in aggs {
        let rates: Vec<f64> = t
            .rows
            .iter()
            .filter(|r| r.fleet == a.fleet)
            .map(|r| r.metrics.success_rate)
            .collect();
        assert_eq!(a.runs, rates.len());
        let mean = rates.iter().sum::<f64>() / rates.len() as f64;
        let var = rates.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (rates.len() - 1) as f64;
        assert!((a.mean_success_rate - mean).abs() < 1e-12);
        assert!((a.stddev_success_rate - var.sqrt()).abs() < 1e-12);
    }
}

#[test]
fn failed_cells_are_recorded() {
    // Three points cannot be packed 150 m apart into a 100 m arena.
    let mut cfg = PipelineConfig::default();
    cfg.arena.x_max = 100.0;
    cfg.arena.y_max = 100.0;
    let t = run_experiment(&spec(vec![PlacementMethod::Cf(4)], vec![20], vec![2], 2), &cfg);
    assert!(t.rows.is_empty());
    assert_eq!(t.failures.len(), 2);
}

fn uniform_scenario(seed: u64, users: usize) -> Scenario {
    let mut s = generate_scenario(seed, users, 1, &ArenaConfig::default(), &TaskProfile::default()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for u in s.users.iter_mut() {
        u.position = Point2::new(rng.random_range(0.0..=500.0), rng.random_range(0.0..=500.0));
    }
    s
}

#[test]
fn more_cf_detectors_connect_more_users() {
    let cfg = ArenaConfig::default();
    let (mut c4, mut c16) = (0, 0);
    for seed in 0..10 {
        let mut s = uniform_scenario(seed, 200);
        c4 += place_and_connect(&cf_centers(4, &cfg), &mut s).total_connected;
        let mut s = uniform_scenario(seed, 200);
        c16 += place_and_connect(&cf_centers(16, &cfg), &mut s).total_connected;
    }
    assert!(c16 > c4, "CF-16 {c16} vs CF-4 {c4}");
}

#[test]
fn a_user_connects_at_most_once() {
    let cfg = ArenaConfig::default();
    for seed in 0..20 {
        let mut s = uniform_scenario(seed, 100);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let centers = random_centers(16, &cfg, &mut rng);
        let result = place_and_connect(&centers, &mut s);
        let mut ids: Vec<usize> = result
            .reports
            .iter()
            .flat_map(|r| r.new_connection_ids.iter().copied())
            .collect();
        let n = ids.len();
        ids.sort_unstable();
        ids.dedup();
        assert_eq!(ids.len(), n);
        assert_eq!(n, result.total_connected);
        assert_eq!(n, s.connected_count());
        // Each connected user went to its nearest center.
        for r in &result.reports {
            for &id in &r.new_connection_ids {
                let p = s.users[id].position;
                let mine = r.hover_position.horizontal_distance(&p);
                for c in &centers {
                    assert!(mine <= c.distance(&p) + 1e-9);
                }
            }
        }
    }
}

#[test]
fn method_names_round_trip() {
    for name in ["DeepAir", "CF-16", "CF-4", "Random-8"] {
        let m: PlacementMethod = name.parse().unwrap();
        assert_eq!(m.to_string(), name);
    }
    assert!("Grid-3".parse::<PlacementMethod>().is_err());
}

fn cli() -> Command {
    Command::new(env!("CARGO_BIN_EXE_deepair"))
}

#[test]
fn cli_experiment_writes_results() {
    let dir = tempfile::tempdir().unwrap();
    let status = cli()
        .args(["experiment", "--method", "CF-4,Random-4", "--users", "20", "--seeds", "2"])
        .args(["--duration", "50", "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
    let rows = std::fs::read_to_string(dir.path().join(ROWS_FILE)).unwrap();
    assert_eq!(rows.lines().count(), 5);
}

#[test]
fn cli_output_dir_from_env_and_config_override() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("cfg.toml");
    std::fs::write(&config, "[simulation]\nduration = 20.0\n[serving]\ncapacity = 6e8\n").unwrap();
    let out = dir.path().join("env-out");
    let run = cli()
        .env("DEEPAIR_OUT", &out)
        .args(["simulate", "--method", "CF-16", "--users", "30", "--fleet", "4", "--config"])
        .arg(&config)
        .output()
        .unwrap();
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    let metrics: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("metrics.json")).unwrap()).unwrap();
    assert!(metrics["generated"].as_u64().unwrap() > 0);

    std::fs::write(&config, "[serving]\nspeed = 1\n").unwrap();
    let bad = cli().args(["generate", "--config"]).arg(&config).arg("--out").arg(&out).output().unwrap();
    assert!(!bad.status.success());
}

#[test]
fn cli_failed_cells_exit_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("cfg.toml");
    std::fs::write(&config, "[arena]\nx_max = 100.0\ny_max = 100.0\n").unwrap();
    let run = cli()
        .args(["experiment", "--method", "CF-4", "--users", "20", "--seeds", "1", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(run.status.code(), Some(2));
}

#[test]
fn cli_generate_and_plan() {
    let dir = tempfile::tempdir().unwrap();
    let run = cli().args(["generate", "--seed", "3", "--users", "40", "--out"]).arg(dir.path()).output().unwrap();
    assert!(run.status.success());
    let scenario = Scenario::load(&dir.path().join("scenario.jsonl")).unwrap();
    assert_eq!(scenario.users.len(), 40);
    let run = cli()
        .args(["plan", "--method", "CF-16", "--fleet", "6", "--scenario"])
        .arg(dir.path().join("scenario.jsonl"))
        .arg("--out")
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    assert!(dir.path().join("plan.json").exists());
}
