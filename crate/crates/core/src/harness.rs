//! Experiment sweeps: scenario, detector placement, allocation and
//! simulation for every cell and seed, plus result files.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::allocation::{area_demands, deploy, DeploymentPlan};
use crate::baselines::{cf_centers, place_and_connect, random_centers, PlacementMethod};
use crate::config::PipelineConfig;
use crate::error::{Error, Result};
use crate::localization::{find_locations, LocalizationResult};
use crate::mec_sim::{simulate, RunMetrics};
use crate::scenario::{generate_scenario_with, Scenario};

pub const ROWS_FILE: &str = "results.csv";
pub const AGGREGATE_FILE: &str = "aggregate.csv";
pub const SCORES_FILE: &str = "scores.csv";
pub const FAILURES_FILE: &str = "failures.csv";

const ROWS_HEADER: &str = "method,seed,users,fleet,detectors_used,success_rate";

/// Independent random streams derived from one run seed.
#[derive(Debug, Clone, Copy)]
#[repr(u64)]
enum Stream {
    Localization = 1,
    RandomCenters = 2,
    Simulation = 3,
}

fn stream_rng(seed: u64, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub methods: Vec<PlacementMethod>,
    pub users: Vec<usize>,
    pub fleets: Vec<usize>,
    pub points: Vec<usize>,
    pub seeds: Vec<u64>,
    pub duration: f64,
}

impl ExperimentSpec {
    pub fn validate(&self) -> std::result::Result<(), String> {
        for (name, empty) in [
            ("methods", self.methods.is_empty()),
            ("users", self.users.is_empty()),
            ("fleets", self.fleets.is_empty()),
            ("points", self.points.is_empty()),
            ("seeds", self.seeds.is_empty()),
        ] {
            if empty {
                return Err(format!("experiment needs at least one entry in `{name}`"));
            }
        }
        if !(self.duration > 0.0) {
            return Err(format!("duration must be positive, got {}", self.duration));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub method: PlacementMethod,
    pub seed: u64,
    pub users: usize,
    pub points: usize,
    pub fleet: usize,
    pub detectors_used: usize,
    pub connected: usize,
    pub served: usize,
    pub metrics: RunMetrics,
}

impl ResultRow {
    pub fn success_rate(&self) -> f64 {
        self.metrics.success_rate
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailedCell {
    pub method: PlacementMethod,
    pub seed: u64,
    pub users: usize,
    pub points: usize,
    pub fleet: Option<usize>,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreCurve {
    pub method: PlacementMethod,
    pub seed: u64,
    pub users: usize,
    pub points: usize,
    /// Detector index; the rejected final iteration comes last.
    pub iteration: usize,
    pub scores: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub method: PlacementMethod,
    pub users: usize,
    pub points: usize,
    pub fleet: usize,
    pub runs: usize,
    pub mean_success_rate: f64,
    pub stddev_success_rate: f64,
    pub mean_detectors_used: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ResultTable {
    pub rows: Vec<ResultRow>,
    pub failures: Vec<FailedCell>,
    pub curves: Vec<ScoreCurve>,
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

impl ResultTable {
    /// Mean and sample standard deviation per (method, users, points, fleet).
    pub fn aggregates(&self) -> Vec<Aggregate> {
        let mut cells: BTreeMap<(PlacementMethod, usize, usize, usize), Vec<&ResultRow>> =
            BTreeMap::new();
        for r in &self.rows {
            cells
                .entry((r.method, r.users, r.points, r.fleet))
                .or_default()
                .push(r);
        }
        cells
            .into_iter()
            .map(|((method, users, points, fleet), rows)| {
                let rates: Vec<f64> = rows.iter().map(|r| r.success_rate()).collect();
                let (mean, std) = mean_std(&rates);
                Aggregate {
                    method,
                    users,
                    points,
                    fleet,
                    runs: rows.len(),
                    mean_success_rate: mean,
                    stddev_success_rate: std,
                    mean_detectors_used: rows.iter().map(|r| r.detectors_used as f64).sum::<f64>()
                        / rows.len() as f64,
                }
            })
            .collect()
    }

    /// Mean success rate of one cell over all its rows and point counts.
    pub fn mean_success(&self, method: PlacementMethod, users: usize, fleet: usize) -> Option<f64> {
        let rates: Vec<f64> = self
            .rows
            .iter()
            .filter(|r| r.method == method && r.users == users && r.fleet == fleet)
            .map(ResultRow::success_rate)
            .collect();
        (!rates.is_empty()).then(|| mean_std(&rates).0)
    }

    pub fn has_failures(&self) -> bool {
        !self.failures.is_empty()
    }
}

/// Places detectors with `method`, connecting users in `scenario`.
pub fn place_detectors(
    method: PlacementMethod,
    scenario: &mut Scenario,
    config: &PipelineConfig,
    seed: u64,
) -> Result<LocalizationResult> {
    Ok(match method {
        PlacementMethod::DeepAir => {
            let mut rng = stream_rng(seed, Stream::Localization);
            find_locations(scenario, &config.localization, &config.radio, &mut rng)?
        }
        PlacementMethod::Cf(k) => place_and_connect(&cf_centers(k, &scenario.config), scenario),
        PlacementMethod::Random(k) => {
            let mut rng = stream_rng(seed, Stream::RandomCenters);
            let centers = random_centers(k, &scenario.config, &mut rng);
            place_and_connect(&centers, scenario)
        }
    })
}

pub fn generate(seed: u64, users: usize, points: usize, config: &PipelineConfig) -> Result<Scenario> {
    Ok(generate_scenario_with(
        seed,
        users,
        points,
        &config.arena,
        &config.task,
        &config.generation,
    )?)
}

/// Allocation for a placed scenario.
pub fn plan_fleet(
    scenario: &Scenario,
    placement: &LocalizationResult,
    fleet: usize,
    config: &PipelineConfig,
) -> Result<DeploymentPlan> {
    let demands = area_demands(&placement.reports, scenario, &config.serving, &config.radio)?;
    Ok(deploy(
        &demands,
        fleet,
        &placement.reports,
        scenario,
        &config.serving,
        &config.radio,
    ))
}

pub fn simulate_plan(
    scenario: &Scenario,
    plan: &DeploymentPlan,
    config: &PipelineConfig,
    seed: u64,
) -> RunMetrics {
    let mut rng = stream_rng(seed, Stream::Simulation);
    simulate(plan, scenario, &config.simulation, &config.radio, &mut rng)
}

/// Runs every cell of `spec`. Detector placement is done once per
/// (method, users, points, seed) and shared by all fleet sizes. Failures
/// are recorded, not raised.
pub fn run_experiment(spec: &ExperimentSpec, config: &PipelineConfig) -> ResultTable {
    run_experiment_with(spec, config, |_| {})
}

/// Where a running experiment is: placements done out of total.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Progress {
    pub method: PlacementMethod,
    pub users: usize,
    pub points: usize,
    pub seed: u64,
    pub done: usize,
    pub total: usize,
}

/// [`run_experiment`] calling `progress` after each placement.
pub fn run_experiment_with(
    spec: &ExperimentSpec,
    config: &PipelineConfig,
    mut progress: impl FnMut(Progress),
) -> ResultTable {
    let total = spec.methods.len() * spec.users.len() * spec.points.len() * spec.seeds.len();
    let mut done = 0;
    let mut config = config.clone();
    config.simulation.duration = spec.duration;
    let mut table = ResultTable::default();
    for &method in &spec.methods {
        for &users in &spec.users {
            for &points in &spec.points {
                for &seed in &spec.seeds {
                    run_seed(&mut table, method, users, points, seed, &spec.fleets, &config);
                    done += 1;
                    progress(Progress {
                        method,
                        users,
                        points,
                        seed,
                        done,
                        total,
                    });
                }
            }
        }
    }
    table.rows.sort_by(|a, b| {
        (a.method, a.users, a.points, a.fleet, a.seed).cmp(&(b.method, b.users, b.points, b.fleet, b.seed))
    });
    table
}

fn run_seed(
    table: &mut ResultTable,
    method: PlacementMethod,
    users: usize,
    points: usize,
    seed: u64,
    fleets: &[usize],
    config: &PipelineConfig,
) {
    let fail = |fleet: Option<usize>, e: &Error| FailedCell {
        method,
        seed,
        users,
        points,
        fleet,
        error: e.to_string(),
    };
    let placed = generate(seed, users, points, config).and_then(|mut scenario| {
        let placement = place_detectors(method, &mut scenario, config, seed)?;
        Ok((scenario, placement))
    });
    let (scenario, placement) = match placed {
        Ok(v) => v,
        Err(e) => {
            table.failures.push(fail(None, &e));
            return;
        }
    };
    if method == PlacementMethod::DeepAir {
        let iterations = placement.reports.iter().chain(placement.rejected.iter());
        for (iteration, r) in iterations.enumerate() {
            table.curves.push(ScoreCurve {
                method,
                seed,
                users,
                points,
                iteration,
                scores: r.episode_scores.clone(),
            });
        }
    }
    for &fleet in fleets {
        match plan_fleet(&scenario, &placement, fleet, config) {
            Ok(plan) => {
                let metrics = simulate_plan(&scenario, &plan, config, seed);
                table.rows.push(ResultRow {
                    method,
                    seed,
                    users,
                    points,
                    fleet,
                    detectors_used: placement.detectors_used(),
                    connected: placement.total_connected,
                    served: plan.served_count(),
                    metrics,
                });
            }
            Err(e) => table.failures.push(fail(Some(fleet), &e)),
        }
    }
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Writes the row, aggregate, score-curve and failure files into `dir`.
pub fn emit(table: &ResultTable, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;

    let mut rows = format!("{ROWS_HEADER}\n");
    for r in &table.rows {
        writeln!(
            rows,
            "{},{},{},{},{},{}",
            r.method,
            r.seed,
            r.users,
            r.fleet,
            r.detectors_used,
            r.success_rate()
        )
        .unwrap();
    }

    let mut agg = String::from(
        "method,users,points,fleet,runs,mean_success_rate,stddev_success_rate,mean_detectors_used\n",
    );
    for a in table.aggregates() {
        writeln!(
            agg,
            "{},{},{},{},{},{},{},{}",
            a.method,
            a.users,
            a.points,
            a.fleet,
            a.runs,
            a.mean_success_rate,
            a.stddev_success_rate,
            a.mean_detectors_used
        )
        .unwrap();
    }

    let mut scores = String::from("method,seed,users,points,iteration,episode,score\n");
    for c in &table.curves {
        for (episode, s) in c.scores.iter().enumerate() {
            writeln!(
                scores,
                "{},{},{},{},{},{},{}",
                c.method, c.seed, c.users, c.points, c.iteration, episode, s
            )
            .unwrap();
        }
    }

    let mut failures = String::from("method,seed,users,points,fleet,error\n");
    for f in &table.failures {
        let fleet = f.fleet.map(|v| v.to_string()).unwrap_or_default();
        let error = f.error.replace('"', "'");
        writeln!(
            failures,
            "{},{},{},{},{},\"{}\"",
            f.method, f.seed, f.users, f.points, fleet, error
        )
        .unwrap();
    }

    let mut written = Vec::new();
    for (name, text) in [
        (ROWS_FILE, rows),
        (AGGREGATE_FILE, agg),
        (SCORES_FILE, scores),
        (FAILURES_FILE, failures),
    ] {
        let path = dir.join(name);
        write_file(&path, &text)?;
        written.push(path);
    }
    Ok(written)
}
