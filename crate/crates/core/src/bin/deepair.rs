use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use deepair::baselines::PlacementMethod;
use deepair::config::PipelineConfig;
use deepair::dqn::train_agent;
use deepair::harness::{self, ExperimentSpec};
use deepair::rl_env::{EnvParams, LocalizationEnv};
use deepair::scenario::Scenario;
use deepair::{Error, Result};

#[derive(Parser)]
#[command(name = "deepair", version, about = "UAV user localization, serving-UAV allocation and MEC offloading simulation")]
struct Cli {
    /// TOML file overriding default parameters.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory.
    #[arg(long, global = true, env = "DEEPAIR_OUT", default_value = "deepair-out")]
    out: PathBuf,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct World {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 60)]
    users: usize,
    #[arg(long, default_value_t = 3)]
    points: usize,
    /// Load this scenario instead of generating one.
    #[arg(long)]
    scenario: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a scenario file.
    Generate {
        #[command(flatten)]
        world: World,
    },
    /// Train one detector agent on a scenario and save its weights and scores.
    Train {
        #[command(flatten)]
        world: World,
        /// Override the learning rate.
        #[arg(long)]
        learning_rate: Option<f64>,
    },
    /// Place detectors and report connections.
    Localize {
        #[command(flatten)]
        world: World,
        #[arg(long, default_value = "DeepAir")]
        method: PlacementMethod,
    },
    /// Place detectors and allocate serving UAVs.
    Plan {
        #[command(flatten)]
        world: World,
        #[arg(long, default_value = "DeepAir")]
        method: PlacementMethod,
        #[arg(long, default_value_t = 10)]
        fleet: usize,
    },
    /// Run the full pipeline once and simulate offloading.
    Simulate {
        #[command(flatten)]
        world: World,
        #[arg(long, default_value = "DeepAir")]
        method: PlacementMethod,
        #[arg(long, default_value_t = 10)]
        fleet: usize,
        /// Simulated seconds.
        #[arg(long)]
        duration: Option<f64>,
    },
    /// Sweep methods, user counts, fleet sizes and seeds.
    Experiment {
        #[arg(long, value_delimiter = ',', default_value = "DeepAir,CF-16,Random-16")]
        method: Vec<PlacementMethod>,
        #[arg(long, value_delimiter = ',', default_value = "60,80,100")]
        users: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_value = "10")]
        fleet: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_value = "3")]
        points: Vec<usize>,
        /// First seed.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Number of consecutive seeds.
        #[arg(long, default_value_t = 10)]
        seeds: u64,
        #[arg(long)]
        duration: Option<f64>,
    },
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).expect("results serialize to JSON");
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

fn scenario_for(world: &World, config: &PipelineConfig) -> Result<Scenario> {
    match &world.scenario {
        Some(path) => Scenario::load(path),
        None => harness::generate(world.seed, world.users, world.points, config),
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    let mut config = match &cli.config {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::default(),
    };
    let out = &cli.out;
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;

    match cli.command {
        Command::Generate { world } => {
            let scenario = scenario_for(&world, &config)?;
            let path = out.join("scenario.jsonl");
            scenario.save(&path)?;
            println!(
                "{} users around {} points -> {}",
                scenario.users.len(),
                scenario.attraction_points.len(),
                path.display()
            );
        }
        Command::Train {
            world,
            learning_rate,
        } => {
            if let Some(lr) = learning_rate {
                config.localization.train.learning_rate = lr;
            }
            let scenario = scenario_for(&world, &config)?;
            let params = EnvParams {
                step_distance: config.localization.step_distance,
                episode_length: config.localization.episode_length,
                stationed_detectors: Vec::new(),
            };
            let env = LocalizationEnv::new(&scenario, params, config.radio);
            let mut rng = ChaCha8Rng::seed_from_u64(world.seed);
            let outcome = train_agent::<f32, _>(&env, &config.localization.train, &mut rng);
            let weights = out.join("weights.qnet");
            std::fs::write(&weights, outcome.network.to_text()).map_err(|e| Error::io(&weights, e))?;
            let mut scores = String::from("episode,score\n");
            for (i, s) in outcome.scores.iter().enumerate() {
                scores.push_str(&format!("{i},{s}\n"));
            }
            let path = out.join("scores.csv");
            std::fs::write(&path, scores).map_err(|e| Error::io(&path, e))?;
            println!(
                "{} episodes, plateau at {}, final score {:.1} -> {}",
                outcome.episodes(),
                outcome
                    .converged_at
                    .map_or_else(|| "none".to_string(), |e| e.to_string()),
                outcome.scores.last().copied().unwrap_or(0.0),
                out.display()
            );
        }
        Command::Localize { world, method } => {
            let mut scenario = scenario_for(&world, &config)?;
            let result = harness::place_detectors(method, &mut scenario, &config, world.seed)?;
            write_json(&out.join("localization.json"), &result)?;
            scenario.save(&out.join("scenario.jsonl"))?;
            println!(
                "{method}: {} detectors, {}/{} users connected",
                result.detectors_used(),
                result.total_connected,
                scenario.users.len()
            );
        }
        Command::Plan {
            world,
            method,
            fleet,
        } => {
            let mut scenario = scenario_for(&world, &config)?;
            let placement = harness::place_detectors(method, &mut scenario, &config, world.seed)?;
            let plan = harness::plan_fleet(&scenario, &placement, fleet, &config)?;
            write_json(&out.join("plan.json"), &plan)?;
            println!(
                "{method}: grants {:?}, {} users served, {} connected but unserved",
                plan.grants,
                plan.served_count(),
                plan.unserved.len()
            );
        }
        Command::Simulate {
            world,
            method,
            fleet,
            duration,
        } => {
            if let Some(d) = duration {
                config.simulation.duration = d;
            }
            config.validate().map_err(|message| Error::Config {
                path: PathBuf::from("--duration"),
                message,
            })?;
            let mut scenario = scenario_for(&world, &config)?;
            let placement = harness::place_detectors(method, &mut scenario, &config, world.seed)?;
            let plan = harness::plan_fleet(&scenario, &placement, fleet, &config)?;
            let metrics = harness::simulate_plan(&scenario, &plan, &config, world.seed);
            write_json(&out.join("metrics.json"), &metrics)?;
            println!(
                "{method}: success rate {:.4} ({} of {} tasks)",
                metrics.success_rate, metrics.succeeded, metrics.generated
            );
        }
        Command::Experiment {
            method,
            users,
            fleet,
            points,
            seed,
            seeds,
            duration,
        } => {
            let spec = ExperimentSpec {
                methods: method,
                users,
                fleets: fleet,
                points,
                seeds: (seed..seed + seeds).collect(),
                duration: duration.unwrap_or(config.simulation.duration),
            };
            spec.validate().map_err(|message| Error::Config {
                path: PathBuf::from("experiment"),
                message,
            })?;
            let table = harness::run_experiment_with(&spec, &config, |p| {
                eprintln!(
                    "[{}/{}] {} users={} points={} seed={}",
                    p.done, p.total, p.method, p.users, p.points, p.seed
                );
            });
            for path in harness::emit(&table, out)? {
                println!("wrote {}", path.display());
            }
            for a in table.aggregates() {
                println!(
                    "{:<10} users={:<4} fleet={:<3} mean={:.4} sd={:.4}",
                    a.method.to_string(),
                    a.users,
                    a.fleet,
                    a.mean_success_rate,
                    a.stddev_success_rate
                );
            }
            if table.has_failures() {
                eprintln!("{} cells failed; see {}", table.failures.len(), harness::FAILURES_FILE);
                return Ok(ExitCode::from(2));
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
