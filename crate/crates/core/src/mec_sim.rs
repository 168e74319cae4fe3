//! Event-driven simulation of task offloading to serving UAVs.
//!
//! Every connected user generates tasks as a Poisson process. A served user
//! sends each task to the reachable UAV that would finish it soonest given
//! the exact backlog; the UAV serves tasks first-come first-served with
//! exponentially distributed work. Tasks of users without a serving UAV
//! fail. Tasks still in service when the run ends are not counted.

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;

use rand::Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use crate::allocation::DeploymentPlan;
use crate::geometry::Point3;
use crate::queueing::{meets_deadline, DelayBreakdown, ServingSpec};
use crate::radio::{transmission_delay, RadioParams};
use crate::scenario::Scenario;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    /// Simulated seconds.
    pub duration: f64,
    pub serving: ServingSpec,
    /// Keep every task record in the metrics.
    pub record_tasks: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            duration: 1000.0,
            serving: ServingSpec::default(),
            record_tasks: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TaskInstance {
    pub user: usize,
    pub created: f64,
    pub uav: Option<usize>,
    pub departure: f64,
    pub breakdown: DelayBreakdown,
}

/// FIFO single-server queue of one serving UAV.
#[derive(Debug, Clone, PartialEq)]
pub struct UavQueueState {
    pub id: usize,
    pub position: Point3,
    /// Time the server finishes all work it has accepted.
    pub busy_until: f64,
}

impl UavQueueState {
    /// Completion time of a task reaching the UAV at `arrival` needing
    /// `service` seconds.
    pub fn completion(&self, arrival: f64, service: f64) -> f64 {
        arrival.max(self.busy_until) + service
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct AreaMetrics {
    pub generated: usize,
    pub succeeded: usize,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RunMetrics {
    pub generated: usize,
    pub succeeded: usize,
    pub success_rate: f64,
    /// Tasks still in service at the end, excluded from the counts.
    pub in_flight: usize,
    /// Mean time from reaching a UAV to completion, over completed tasks.
    pub mean_sojourn: f64,
    /// Mean total delay (uplink plus sojourn) over completed tasks.
    pub mean_total_delay: f64,
    /// Per detector area, indexed like the detector reports.
    pub per_area: Vec<AreaMetrics>,
    /// Users that no detector connected.
    pub undetected: AreaMetrics,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub tasks: Vec<TaskInstance>,
}

/// Reachable UAV with the smallest predicted completion for a task created
/// at `now`; ties go to the lowest id. `None` when no UAV is in range.
pub fn choose_uav(
    user_position: &crate::geometry::Point2,
    queues: &[UavQueueState],
    radius: f64,
    now: f64,
    uplink: f64,
    service: f64,
) -> Option<usize> {
    let mut best: Option<(f64, usize)> = None;
    for q in queues {
        if q.position.horizontal_distance(user_position) > radius {
            continue;
        }
        let done = q.completion(now + uplink, service);
        if best.is_none_or(|(t, _)| done < t) {
            best = Some((done, q.id));
        }
    }
    best.map(|(_, id)| id)
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Arrival {
    time: f64,
    user: usize,
}

impl Eq for Arrival {}

impl Ord for Arrival {
    fn cmp(&self, other: &Self) -> Ordering {
        self.time
            .total_cmp(&other.time)
            .then(self.user.cmp(&other.user))
    }
}

impl PartialOrd for Arrival {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

pub fn simulate<R: Rng>(
    plan: &DeploymentPlan,
    scenario: &Scenario,
    config: &SimConfig,
    radio: &RadioParams,
    rng: &mut R,
) -> RunMetrics {
    assert!(config.duration > 0.0, "duration must be positive");
    let areas = scenario
        .users
        .iter()
        .filter_map(|u| u.connected_to)
        .max()
        .map_or(0, |a| a + 1)
        .max(plan.grants.len());
    let mut metrics = RunMetrics {
        per_area: vec![AreaMetrics::default(); areas],
        ..RunMetrics::default()
    };
    let mut queues: Vec<UavQueueState> = plan
        .uavs
        .iter()
        .map(|u| UavQueueState {
            id: u.id,
            position: u.position,
            busy_until: 0.0,
        })
        .collect();
    let served: Vec<bool> = scenario
        .users
        .iter()
        .map(|u| plan.assigned_uav(u.id).is_some())
        .collect();

    let mut heap = BinaryHeap::new();
    let next_arrival = |user: usize, from: f64, rng: &mut R| -> Option<Arrival> {
        let rate = scenario.users[user].task.arrival_rate;
        if rate <= 0.0 {
            return None;
        }
        let gap = Exp::new(rate).expect("positive rate").sample(rng);
        Some(Arrival {
            time: from + gap,
            user,
        })
    };
    // Every user generates tasks; those of unserved users fail.
    for u in &scenario.users {
        if let Some(a) = next_arrival(u.id, 0.0, rng) {
            heap.push(Reverse(a));
        }
    }

    let mut completed = 0usize;
    let mut sojourn_sum = 0.0;
    let mut total_sum = 0.0;
    while let Some(Reverse(Arrival { time, user })) = heap.pop() {
        if time > config.duration {
            break;
        }
        if let Some(next) = next_arrival(user, time, rng) {
            heap.push(Reverse(next));
        }
        let u = &scenario.users[user];
        let task = &u.task;
        let work = Exp::new(1.0 / task.cycles())
            .expect("positive work")
            .sample(rng);
        let service = work / config.serving.capacity;
        let uplink = transmission_delay(task, radio);

        let target = if served[user] {
            choose_uav(
                &u.position,
                &queues,
                scenario.config.serving_radius,
                time,
                uplink,
                service,
            )
        } else {
            None
        };
        let record = match target {
            Some(j) => {
                let arrival = time + uplink;
                let departure = queues[j].completion(arrival, service);
                queues[j].busy_until = departure;
                if departure > config.duration {
                    metrics.in_flight += 1;
                    continue;
                }
                let breakdown = DelayBreakdown::new(uplink, departure - arrival, task.max_delay);
                completed += 1;
                sojourn_sum += departure - arrival;
                total_sum += breakdown.total;
                TaskInstance {
                    user,
                    created: time,
                    uav: Some(j),
                    departure,
                    breakdown,
                }
            }
            None => TaskInstance {
                user,
                created: time,
                uav: None,
                departure: time,
                breakdown: DelayBreakdown {
                    network: 0.0,
                    service: f64::INFINITY,
                    total: f64::INFINITY,
                    success: false,
                },
            },
        };
        debug_assert_eq!(
            record.breakdown.success,
            record.uav.is_some() && meets_deadline(record.breakdown.total, task.max_delay)
        );
        metrics.generated += 1;
        let bucket = match u.connected_to {
            Some(a) => &mut metrics.per_area[a],
            None => &mut metrics.undetected,
        };
        bucket.generated += 1;
        if record.breakdown.success {
            metrics.succeeded += 1;
            bucket.succeeded += 1;
        }
        if config.record_tasks {
            metrics.tasks.push(record);
        }
    }

    metrics.success_rate = if metrics.generated == 0 {
        0.0
    } else {
        metrics.succeeded as f64 / metrics.generated as f64
    };
    if completed > 0 {
        metrics.mean_sojourn = sojourn_sum / completed as f64;
        metrics.mean_total_delay = total_sum / completed as f64;
    }
    metrics
}
