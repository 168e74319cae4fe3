//! Iterative detector dispatch: one agent is trained per iteration on the
//! users that still emit, hovers at the best point of its greedy rollout,
//! and connects everyone in range. Iterations stop once a detector would
//! connect fewer users than the threshold.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dqn::{greedy_rollout, train_agent, TrainConfig};
use crate::error::LocalizationError;
use crate::geometry::Point3;
use crate::radio::RadioParams;
use crate::rl_env::{AgentState, EnvParams, LocalizationEnv};
use crate::scenario::Scenario;

/// How the hover point is picked from the trained agent's greedy rollout.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HoverRule {
    /// Visited state that would connect the most emitting users; ties go to
    /// the higher reward, then the earlier visit.
    #[default]
    MaxConnectable,
    /// Visited state with the highest reward; ties go to the earlier visit.
    MaxReward,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LocalizationConfig {
    pub train: TrainConfig,
    pub step_distance: f64,
    pub episode_length: usize,
    /// Minimum new connections for a detector to be kept.
    pub threshold: usize,
    pub max_iterations: usize,
    pub hover_rule: HoverRule,
}

impl Default for LocalizationConfig {
    fn default() -> Self {
        let env = EnvParams::default();
        Self {
            train: TrainConfig::default(),
            step_distance: env.step_distance,
            episode_length: env.episode_length,
            threshold: 1,
            max_iterations: 12,
            hover_rule: HoverRule::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorReport {
    pub hover_position: Point3,
    pub new_connection_ids: Vec<usize>,
    pub episode_scores: Vec<f64>,
    /// Episodes after which training plateaued, if it did.
    #[serde(default)]
    pub converged_at: Option<usize>,
}

impl DetectorReport {
    pub fn connection_count(&self) -> usize {
        self.new_connection_ids.len()
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct LocalizationResult {
    pub reports: Vec<DetectorReport>,
    pub total_connected: usize,
    /// The last, rejected iteration (fewer connections than the threshold).
    /// Its connections have been rolled back.
    #[serde(default)]
    pub rejected: Option<DetectorReport>,
}

impl LocalizationResult {
    pub fn from_reports(reports: Vec<DetectorReport>) -> Self {
        let total_connected = reports.iter().map(DetectorReport::connection_count).sum();
        Self {
            reports,
            total_connected,
            rejected: None,
        }
    }

    pub fn detectors_used(&self) -> usize {
        self.reports.len()
    }
}

/// Picks the hover point among `path` according to `rule`. States that do
/// not satisfy the separation constraint are skipped.
pub fn choose_hover(
    env: &LocalizationEnv,
    path: &[(AgentState, f64)],
    rule: HoverRule,
) -> Option<Point3> {
    let mut best: Option<(usize, f64, Point3)> = None;
    for (state, reward) in path {
        let p = state.position;
        if !env.is_admissible(&p) {
            continue;
        }
        let count = match rule {
            HoverRule::MaxConnectable => env.connectable_at(&p),
            HoverRule::MaxReward => 0,
        };
        let better = match best {
            None => true,
            Some((c, r, _)) => count > c || (count == c && *reward > r),
        };
        if better {
            best = Some((count, *reward, p));
        }
    }
    best.map(|(_, _, p)| p)
}

/// Connects every emitting user within the detector radius of `hover`.
pub fn connect_in_range(scenario: &mut Scenario, hover: &Point3, detector: usize) -> Vec<usize> {
    let radius = scenario.config.detector_radius;
    let mut ids = Vec::new();
    for u in scenario.users.iter_mut().filter(|u| u.emitting) {
        if hover.horizontal_distance(&u.position) <= radius {
            u.connect(detector);
            ids.push(u.id);
        }
    }
    ids
}

fn disconnect(scenario: &mut Scenario, ids: &[usize]) {
    for u in scenario.users.iter_mut().filter(|u| ids.contains(&u.id)) {
        u.disconnect();
    }
}

/// Trains one agent against the currently emitting users and connects the
/// users around its hover point to detector `detector`.
pub fn run_iteration<R: Rng>(
    scenario: &mut Scenario,
    stationed: &[Point3],
    detector: usize,
    config: &LocalizationConfig,
    radio: &RadioParams,
    rng: &mut R,
) -> DetectorReport {
    let params = EnvParams {
        step_distance: config.step_distance,
        episode_length: config.episode_length,
        stationed_detectors: stationed.to_vec(),
    };
    let env = LocalizationEnv::new(scenario, params, *radio);
    let base = env.reset().position;
    if env.emitters().is_empty() {
        return DetectorReport {
            hover_position: base,
            new_connection_ids: Vec::new(),
            episode_scores: Vec::new(),
            converged_at: None,
        };
    }

    let outcome = train_agent::<f32, _>(&env, &config.train, rng);
    let path = greedy_rollout(&outcome.network, &env);
    let (hover_position, new_connection_ids) = match choose_hover(&env, &path, config.hover_rule) {
        Some(p) => (p, connect_in_range(scenario, &p, detector)),
        None => (base, Vec::new()),
    };
    DetectorReport {
        hover_position,
        new_connection_ids,
        episode_scores: outcome.scores,
        converged_at: outcome.converged_at,
    }
}

/// Dispatches detectors until one connects fewer than `config.threshold`
/// users. The rejected iteration's connections are undone.
pub fn find_locations<R: Rng>(
    scenario: &mut Scenario,
    config: &LocalizationConfig,
    radio: &RadioParams,
    rng: &mut R,
) -> Result<LocalizationResult, LocalizationError> {
    assert!(config.threshold >= 1, "threshold must be at least 1");
    let mut reports: Vec<DetectorReport> = Vec::new();
    loop {
        if reports.len() >= config.max_iterations {
            return Err(LocalizationError::IterationCap {
                cap: config.max_iterations,
            });
        }
        let stationed: Vec<Point3> = reports.iter().map(|r| r.hover_position).collect();
        let report = run_iteration(scenario, &stationed, reports.len(), config, radio, rng);
        if report.connection_count() < config.threshold {
            disconnect(scenario, &report.new_connection_ids);
            let mut result = LocalizationResult::from_reports(reports);
            result.rejected = Some(report);
            return Ok(result);
        }
        reports.push(report);
    }
}
