//! The localization MDP a detector agent is trained on.
//!
//! The state is the agent's position. Five discrete actions move it one
//! fixed step along an axis or keep it in place. Reward is the scaled
//! cumulative RSSI at the new position, or `-1` when a move would leave the
//! arena or come closer than the minimum separation to a stationed detector.
//! A rejected move leaves the agent where it was.

use serde::{Deserialize, Serialize};

use crate::geometry::{Point2, Point3};
use crate::radio::{cumulative_rssi, RadioParams};
use crate::scenario::{ArenaConfig, Scenario, User};

pub const VIOLATION_REWARD: f64 = -1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Action {
    Left,
    Right,
    Up,
    Down,
    NoMove,
}

impl Action {
    pub const ALL: [Action; 5] = [
        Action::Left,
        Action::Right,
        Action::Up,
        Action::Down,
        Action::NoMove,
    ];
    pub const COUNT: usize = Self::ALL.len();

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Option<Action> {
        Self::ALL.get(index).copied()
    }

    /// Flight angle in radians; `None` for hovering.
    pub fn heading(self) -> Option<f64> {
        use std::f64::consts::{FRAC_PI_2, PI};
        match self {
            Action::Right => Some(0.0),
            Action::Up => Some(FRAC_PI_2),
            Action::Left => Some(PI),
            Action::Down => Some(3.0 * FRAC_PI_2),
            Action::NoMove => None,
        }
    }

    /// Displacement `(d cos h, d sin h)`, with the axis-aligned unit vectors
    /// written out exactly so positions stay on the step lattice.
    pub fn displacement(self, distance: f64) -> (f64, f64) {
        let (ux, uy) = match self {
            Action::Right => (1.0, 0.0),
            Action::Up => (0.0, 1.0),
            Action::Left => (-1.0, 0.0),
            Action::Down => (0.0, -1.0),
            Action::NoMove => (0.0, 0.0),
        };
        (ux * distance, uy * distance)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvParams {
    pub step_distance: f64,
    pub episode_length: usize,
    #[serde(default)]
    pub stationed_detectors: Vec<Point3>,
}

impl Default for EnvParams {
    fn default() -> Self {
        Self {
            step_distance: 25.0,
            episode_length: 100,
            stationed_detectors: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AgentState {
    pub position: Point3,
    pub step_index: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub state: AgentState,
    pub reward: f64,
    pub done: bool,
}

/// Normalized network input `(x / x_max, y / y_max, z / altitude)`.
pub fn observe(state: &AgentState, config: &ArenaConfig) -> [f64; 3] {
    [
        state.position.x / config.x_max,
        state.position.y / config.y_max,
        state.position.z / config.uav_altitude,
    ]
}

/// One detector's view of a scenario, frozen at construction. Users that
/// connect later are not seen until a new environment is built.
#[derive(Debug, Clone)]
pub struct LocalizationEnv {
    config: ArenaConfig,
    params: EnvParams,
    radio: RadioParams,
    emitters: Vec<User>,
}

impl LocalizationEnv {
    pub fn new(scenario: &Scenario, params: EnvParams, radio: RadioParams) -> Self {
        Self {
            config: scenario.config,
            params,
            radio,
            emitters: scenario.users.iter().filter(|u| u.emitting).cloned().collect(),
        }
    }

    pub fn config(&self) -> &ArenaConfig {
        &self.config
    }

    pub fn params(&self) -> &EnvParams {
        &self.params
    }

    pub fn emitters(&self) -> &[User] {
        &self.emitters
    }

    /// Agent at the base, `(0, 0)` at flight altitude.
    pub fn reset(&self) -> AgentState {
        AgentState {
            position: Point3::new(0.0, 0.0, self.config.uav_altitude),
            step_index: 0,
        }
    }

    /// True when `p` is inside the arena and keeps the minimum separation
    /// from every stationed detector.
    pub fn is_admissible(&self, p: &Point3) -> bool {
        self.config.contains(&p.ground())
            && self
                .params
                .stationed_detectors
                .iter()
                .all(|d| d.distance(p) >= self.config.min_uav_separation)
    }

    /// Scaled cumulative RSSI at `p`.
    pub fn signal_reward(&self, p: &Point3) -> f64 {
        self.radio.rssi_reward_scale * cumulative_rssi(p, &self.emitters, &self.radio)
    }

    /// Emitting users a detector hovering at `p` could connect.
    pub fn connectable_at(&self, p: &Point3) -> usize {
        self.emitters
            .iter()
            .filter(|u| p.horizontal_distance(&u.position) <= self.config.detector_radius)
            .count()
    }

    pub fn step(&self, state: &AgentState, action: Action) -> StepOutcome {
        let (dx, dy) = action.displacement(self.params.step_distance);
        let candidate = Point3::new(state.position.x + dx, state.position.y + dy, state.position.z);
        let (position, reward) = if self.is_admissible(&candidate) {
            (candidate, self.signal_reward(&candidate))
        } else {
            (state.position, VIOLATION_REWARD)
        };
        let step_index = state.step_index + 1;
        StepOutcome {
            state: AgentState {
                position,
                step_index,
            },
            reward,
            done: step_index >= self.params.episode_length,
        }
    }

    pub fn observe(&self, state: &AgentState) -> [f64; 3] {
        observe(state, &self.config)
    }
}

/// Ground-plane lattice reachable from the base with the given step.
pub fn lattice(config: &ArenaConfig, step: f64) -> impl Iterator<Item = Point2> + '_ {
    let nx = (config.x_max / step).floor() as usize;
    let ny = (config.y_max / step).floor() as usize;
    (0..=nx).flat_map(move |i| (0..=ny).map(move |j| Point2::new(i as f64 * step, j as f64 * step)))
}
