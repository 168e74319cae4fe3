//! The hidden world: arena bounds, attraction points and the users clustered
//! around them.
//!
//! All quantities use canonical units: meters, bits, cycles and seconds.
//! A scenario is a pure function of `(seed, counts, config)`, so every
//! experiment can regenerate its ground truth from the seed alone.

use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::ScenarioError;
use crate::geometry::Point2;

/// Standard deviation of the user cloud around an attraction point.
pub const DEFAULT_USER_SPREAD_M: f64 = 25.0;

/// Draws allowed per attraction point before a restart.
const POINT_ATTEMPTS: usize = 500;
/// Full restarts of attraction point placement before giving up.
const PLACEMENT_RESTARTS: usize = 200;
/// Draws allowed per user before the in-bounds resampling gives up.
const USER_ATTEMPTS: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArenaConfig {
    pub x_max: f64,
    pub y_max: f64,
    pub uav_altitude: f64,
    pub detector_radius: f64,
    pub serving_radius: f64,
    pub min_uav_separation: f64,
}

impl Default for ArenaConfig {
    fn default() -> Self {
        Self {
            x_max: 500.0,
            y_max: 500.0,
            uav_altitude: 200.0,
            detector_radius: 75.0,
            serving_radius: 75.0,
            min_uav_separation: 10.0,
        }
    }
}

impl ArenaConfig {
    pub fn validate(&self) -> Result<(), ScenarioError> {
        let fields = [
            ("x_max", self.x_max),
            ("y_max", self.y_max),
            ("uav_altitude", self.uav_altitude),
            ("detector_radius", self.detector_radius),
            ("serving_radius", self.serving_radius),
            ("min_uav_separation", self.min_uav_separation),
        ];
        for (name, value) in fields {
            if !(value.is_finite() && value > 0.0) {
                return Err(ScenarioError::InvalidConfig { field: name, value });
            }
        }
        Ok(())
    }

    pub fn contains(&self, p: &Point2) -> bool {
        (0.0..=self.x_max).contains(&p.x) && (0.0..=self.y_max).contains(&p.y)
    }
}

/// A task profile `(size, cycles per bit, arrival rate, deadline)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TaskProfile {
    pub size_bits: f64,
    pub cycles_per_bit: f64,
    pub arrival_rate: f64,
    pub max_delay: f64,
}

impl Default for TaskProfile {
    fn default() -> Self {
        Self {
            size_bits: 5.0e5,
            cycles_per_bit: 90.0,
            arrival_rate: 0.30,
            max_delay: 1.0,
        }
    }
}

impl TaskProfile {
    /// CPU cycles needed to process one task.
    pub fn cycles(&self) -> f64 {
        self.size_bits * self.cycles_per_bit
    }

    /// Offered load in cycles per second.
    pub fn load(&self) -> f64 {
        self.arrival_rate * self.cycles()
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        let fields = [
            ("size_bits", self.size_bits),
            ("cycles_per_bit", self.cycles_per_bit),
            ("arrival_rate", self.arrival_rate),
            ("max_delay", self.max_delay),
        ];
        for (name, value) in fields {
            if !(value > 0.0) {
                return Err(ScenarioError::InvalidConfig { field: name, value });
            }
        }
        Ok(())
    }
}

/// Default arena and task profile.
pub fn default_config() -> (ArenaConfig, TaskProfile) {
    (ArenaConfig::default(), TaskProfile::default())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct User {
    pub id: usize,
    pub position: Point2,
    /// Index of the attraction point the user was drawn around (ground truth).
    pub cluster: usize,
    pub task: TaskProfile,
    pub emitting: bool,
    pub connected_to: Option<usize>,
}

impl User {
    /// Connects the user to a detector; it stops emitting its beacon.
    pub fn connect(&mut self, detector: usize) {
        self.emitting = false;
        self.connected_to = Some(detector);
    }

    pub fn disconnect(&mut self) {
        self.emitting = true;
        self.connected_to = None;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttractionPoint {
    pub position: Point2,
    pub assigned_user_count: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub config: ArenaConfig,
    pub attraction_points: Vec<AttractionPoint>,
    pub users: Vec<User>,
    pub seed: u64,
}

/// Knobs of the hidden-world generator that are not part of the arena.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenerationParams {
    pub user_spread: f64,
}

impl Default for GenerationParams {
    fn default() -> Self {
        Self {
            user_spread: DEFAULT_USER_SPREAD_M,
        }
    }
}

pub fn generate_scenario(
    seed: u64,
    n_users: usize,
    n_attraction_points: usize,
    config: &ArenaConfig,
    task: &TaskProfile,
) -> Result<Scenario, ScenarioError> {
    generate_scenario_with(
        seed,
        n_users,
        n_attraction_points,
        config,
        task,
        &GenerationParams::default(),
    )
}

pub fn generate_scenario_with(
    seed: u64,
    n_users: usize,
    n_attraction_points: usize,
    config: &ArenaConfig,
    task: &TaskProfile,
    params: &GenerationParams,
) -> Result<Scenario, ScenarioError> {
    config.validate()?;
    task.validate()?;
    if n_attraction_points == 0 {
        return Err(ScenarioError::NoAttractionPoints);
    }
    if n_users < n_attraction_points {
        return Err(ScenarioError::TooFewUsers {
            users: n_users,
            points: n_attraction_points,
        });
    }
    if !(params.user_spread > 0.0) {
        return Err(ScenarioError::InvalidConfig {
            field: "user_spread",
            value: params.user_spread,
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centers = place_attraction_points(&mut rng, n_attraction_points, config)?;

    let base = n_users / n_attraction_points;
    let extra = n_users % n_attraction_points;
    let counts: Vec<usize> = (0..n_attraction_points)
        .map(|i| base + usize::from(i < extra))
        .collect();

    let spread = Normal::new(0.0, params.user_spread).expect("spread validated above");
    let mut users = Vec::with_capacity(n_users);
    for (cluster, (center, &count)) in centers.iter().zip(&counts).enumerate() {
        for _ in 0..count {
            let position = sample_user(&mut rng, center, &spread, config)?;
            users.push(User {
                id: users.len(),
                position,
                cluster,
                task: *task,
                emitting: true,
                connected_to: None,
            });
        }
    }

    let attraction_points = centers
        .into_iter()
        .zip(counts)
        .map(|(position, assigned_user_count)| AttractionPoint {
            position,
            assigned_user_count,
        })
        .collect();

    Ok(Scenario {
        config: *config,
        attraction_points,
        users,
        seed,
    })
}

/// Uniform draws inside the arena inset by the detector radius, rejecting
/// any candidate closer than two detector radii to an accepted point.
fn place_attraction_points<R: Rng>(
    rng: &mut R,
    count: usize,
    config: &ArenaConfig,
) -> Result<Vec<Point2>, ScenarioError> {
    let inset = config.detector_radius;
    let separation = 2.0 * config.detector_radius;
    if config.x_max <= 2.0 * inset || config.y_max <= 2.0 * inset {
        return Err(ScenarioError::PlacementFailed {
            points: count,
            separation,
        });
    }

    'restart: for _ in 0..PLACEMENT_RESTARTS {
        let mut points: Vec<Point2> = Vec::with_capacity(count);
        for _ in 0..count {
            let candidate = (0..POINT_ATTEMPTS)
                .map(|_| {
                    Point2::new(
                        rng.random_range(inset..=config.x_max - inset),
                        rng.random_range(inset..=config.y_max - inset),
                    )
                })
                .find(|c| points.iter().all(|p| p.distance(c) >= separation));
            match candidate {
                Some(c) => points.push(c),
                None => continue 'restart,
            }
        }
        return Ok(points);
    }
    Err(ScenarioError::PlacementFailed {
        points: count,
        separation,
    })
}

fn sample_user<R: Rng>(
    rng: &mut R,
    center: &Point2,
    spread: &Normal<f64>,
    config: &ArenaConfig,
) -> Result<Point2, ScenarioError> {
    for _ in 0..USER_ATTEMPTS {
        let p = Point2::new(
            center.x + spread.sample(rng),
            center.y + spread.sample(rng),
        );
        if config.contains(&p) {
            return Ok(p);
        }
    }
    Err(ScenarioError::UserPlacementFailed)
}

impl Scenario {
    pub fn emitting_count(&self) -> usize {
        self.users.iter().filter(|u| u.emitting).count()
    }

    pub fn connected_count(&self) -> usize {
        self.users.len() - self.emitting_count()
    }

    /// Returns every user to the unconnected, emitting state.
    pub fn reset_connections(&mut self) {
        self.users.iter_mut().for_each(User::disconnect);
    }

    /// Serializes to JSON lines: one header record, then one record per
    /// attraction point and per user.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let mut push = |record: &Record| {
            let line = serde_json::to_string(record).expect("scenario records serialize");
            writeln!(out, "{line}").expect("writing to a String");
        };
        push(&Record::Scenario {
            seed: self.seed,
            config: self.config,
        });
        for (index, p) in self.attraction_points.iter().enumerate() {
            push(&Record::Point {
                index,
                position: p.position,
                assigned_user_count: p.assigned_user_count,
            });
        }
        for u in &self.users {
            push(&Record::User(u.clone()));
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self, ScenarioError> {
        let mut header = None;
        let mut points = Vec::new();
        let mut users = Vec::new();
        for (n, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let record: Record = serde_json::from_str(line).map_err(|e| ScenarioError::Parse {
                line: n + 1,
                message: e.to_string(),
            })?;
            match record {
                Record::Scenario { seed, config } => header = Some((seed, config)),
                Record::Point {
                    index,
                    position,
                    assigned_user_count,
                } => {
                    if index != points.len() {
                        return Err(ScenarioError::Parse {
                            line: n + 1,
                            message: format!("attraction point {index} out of order"),
                        });
                    }
                    points.push(AttractionPoint {
                        position,
                        assigned_user_count,
                    });
                }
                Record::User(u) => users.push(u),
            }
        }
        let (seed, config) = header.ok_or(ScenarioError::Parse {
            line: 0,
            message: "missing scenario header record".into(),
        })?;
        Ok(Scenario {
            config,
            attraction_points: points,
            users,
            seed,
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), crate::Error> {
        std::fs::write(path, self.to_text()).map_err(|e| crate::Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self, crate::Error> {
        let text = std::fs::read_to_string(path).map_err(|e| crate::Error::io(path, e))?;
        Ok(Self::from_text(&text)?)
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum Record {
    Scenario {
        seed: u64,
        config: ArenaConfig,
    },
    Point {
        index: usize,
        position: Point2,
        assigned_user_count: usize,
    },
    User(User),
}

#[cfg(test)]
mod tests {
    use super::*;

    fn defaults() -> (ArenaConfig, TaskProfile) {
        default_config()
    }

    #[test]
    fn default_values() {
        let (arena, task) = defaults();
        assert_eq!(arena.detector_radius, 75.0);
        assert_eq!(arena.serving_radius, 75.0);
        assert_eq!(arena.x_max, 500.0);
        assert_eq!(arena.y_max, 500.0);
        assert_eq!(arena.uav_altitude, 200.0);
        assert_eq!(task.max_delay, 1.0);
        assert_eq!(task.size_bits, 500_000.0);
        assert_eq!(task.cycles_per_bit, 90.0);
        assert_eq!(task.arrival_rate, 0.30);
    }

    #[test]
    fn even_split() {
        let (arena, task) = defaults();
        let s = generate_scenario(7, 60, 3, &arena, &task).unwrap();
        assert_eq!(s.attraction_points.len(), 3);
        for (i, p) in s.attraction_points.iter().enumerate() {
            assert_eq!(p.assigned_user_count, 20);
            assert_eq!(s.users.iter().filter(|u| u.cluster == i).count(), 20);
        }
    }

    #[test]
    fn remainder_round_robin() {
        let (arena, task) = defaults();
        let s = generate_scenario(7, 80, 3, &arena, &task).unwrap();
        let counts: Vec<_> = s
            .attraction_points
            .iter()
            .map(|p| p.assigned_user_count)
            .collect();
        assert_eq!(counts, vec![27, 27, 26]);
    }

    #[test]
    fn same_seed_same_bytes() {
        let (arena, task) = defaults();
        let a = generate_scenario(7, 60, 3, &arena, &task).unwrap();
        let b = generate_scenario(7, 60, 3, &arena, &task).unwrap();
        assert_eq!(a.to_text(), b.to_text());
        let c = generate_scenario(8, 60, 3, &arena, &task).unwrap();
        assert_ne!(a.to_text(), c.to_text());
    }

    #[test]
    fn text_round_trip() {
        let (arena, task) = defaults();
        let mut s = generate_scenario(11, 25, 4, &arena, &task).unwrap();
        s.users[3].connect(2);
        let back = Scenario::from_text(&s.to_text()).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn packing_impossible() {
        // 30 points need pairwise 150 m inside a 350 m square; at most
        // (350 / 150 + 1)^2 = 11 such points fit, so placement must fail.
        let (arena, task) = defaults();
        let err = generate_scenario(1, 60, 30, &arena, &task).unwrap_err();
        assert!(matches!(err, ScenarioError::PlacementFailed { points: 30, .. }));
    }

    #[test]
    fn rejects_bad_counts_and_config() {
        let (arena, task) = defaults();
        assert!(matches!(
            generate_scenario(1, 10, 0, &arena, &task),
            Err(ScenarioError::NoAttractionPoints)
        ));
        assert!(matches!(
            generate_scenario(1, 2, 3, &arena, &task),
            Err(ScenarioError::TooFewUsers { .. })
        ));
        let bad = ArenaConfig {
            uav_altitude: 0.0,
            ..arena
        };
        assert!(matches!(
            generate_scenario(1, 10, 1, &bad, &task),
            Err(ScenarioError::InvalidConfig {
                field: "uav_altitude",
                ..
            })
        ));
    }

    #[test]
    fn users_in_bounds_and_points_separated() {
        let (arena, task) = defaults();
        for seed in 0..1000 {
            let s = generate_scenario(seed, 30, 3, &arena, &task).unwrap();
            assert!(s.users.iter().all(|u| arena.contains(&u.position)));
            for (i, a) in s.attraction_points.iter().enumerate() {
                for b in &s.attraction_points[i + 1..] {
                    assert!(a.position.distance(&b.position) >= 2.0 * arena.detector_radius);
                }
            }
        }
    }

    #[test]
    fn connect_toggles_emitting() {
        let (arena, task) = defaults();
        let mut s = generate_scenario(3, 5, 1, &arena, &task).unwrap();
        s.users[0].connect(4);
        assert!(!s.users[0].emitting);
        assert_eq!(s.users[0].connected_to, Some(4));
        assert_eq!(s.emitting_count(), 4);
        s.reset_connections();
        assert_eq!(s.emitting_count(), 5);
        assert!(s.users.iter().all(|u| u.connected_to.is_none()));
    }
}
