//! Delay model for local and offloaded execution, and the M/M/1 capacity
//! math used to size serving-UAV fleets.
//!
//! [`mm1_total_delay`] keeps the planning form used for allocation: the
//! numerator sums the work of every co-located user. The textbook per-task
//! sojourn time is available separately as [`mm1_sojourn_time`]; the event
//! simulator is checked against that one.

use serde::{Deserialize, Serialize};

use crate::error::QueueingError;
use crate::radio::{transmission_delay, RadioParams};
use crate::scenario::TaskProfile;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServingSpec {
    /// CPU capacity, cycles/s.
    pub capacity: f64,
}

impl Default for ServingSpec {
    fn default() -> Self {
        // 300 Mcycles/s
        Self { capacity: 3.0e8 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DelayBreakdown {
    pub network: f64,
    pub service: f64,
    pub total: f64,
    pub success: bool,
}

impl DelayBreakdown {
    pub fn new(network: f64, service: f64, max_delay: f64) -> Self {
        let total = network + service;
        Self {
            network,
            service,
            total,
            success: meets_deadline(total, max_delay),
        }
    }
}

/// Success predicate. A task that finishes exactly at its deadline succeeds.
pub fn meets_deadline(total_delay: f64, max_delay: f64) -> bool {
    total_delay <= max_delay
}

pub fn local_delay(task: &TaskProfile, f_user: f64) -> f64 {
    debug_assert!(f_user > 0.0);
    task.cycles() / f_user
}

pub fn uav_service_time(task: &TaskProfile, spec: &ServingSpec) -> f64 {
    local_delay(task, spec.capacity)
}

fn spare_capacity(users: &[TaskProfile], spec: &ServingSpec) -> Result<f64, QueueingError> {
    let load: f64 = users.iter().map(TaskProfile::load).sum();
    let spare = spec.capacity - load;
    if spare > 0.0 {
        Ok(spare)
    } else {
        Err(QueueingError::CapacityExceeded {
            load,
            capacity: spec.capacity,
        })
    }
}

/// Planning delay at a serving UAV: total work of all co-located users over
/// the capacity left after their offered load.
pub fn mm1_total_delay(users: &[TaskProfile], spec: &ServingSpec) -> Result<f64, QueueingError> {
    let spare = spare_capacity(users, spec)?;
    let work: f64 = users.iter().map(TaskProfile::cycles).sum();
    Ok(work / spare)
}

/// Queueing share of the planning delay for one task among `co_users`.
pub fn mm1_queueing_delay(
    task: &TaskProfile,
    co_users: &[TaskProfile],
    spec: &ServingSpec,
) -> Result<f64, QueueingError> {
    Ok(mm1_total_delay(co_users, spec)? - uav_service_time(task, spec))
}

/// Standard M/M/1 mean sojourn time of one task, `1 / (mu - lambda)` in the
/// homogeneous case.
pub fn mm1_sojourn_time(
    task: &TaskProfile,
    co_users: &[TaskProfile],
    spec: &ServingSpec,
) -> Result<f64, QueueingError> {
    Ok(task.cycles() / spare_capacity(co_users, spec)?)
}

/// Delay composition for one task. Offloaded tasks pay the uplink plus
/// service and queueing at the UAV; local tasks pay only local execution.
pub fn total_task_delay(
    offloaded: bool,
    task: &TaskProfile,
    spec: &ServingSpec,
    co_users: &[TaskProfile],
    radio: &RadioParams,
    f_user: f64,
) -> Result<DelayBreakdown, QueueingError> {
    let (network, service) = if offloaded {
        let service =
            uav_service_time(task, spec) + mm1_queueing_delay(task, co_users, spec)?;
        (transmission_delay(task, radio), service)
    } else {
        (0.0, local_delay(task, f_user))
    };
    Ok(DelayBreakdown::new(network, service, task.max_delay))
}

/// Planned delay for `n` identical users sharing one UAV, uplink included.
pub fn planned_delay(
    n: usize,
    task: &TaskProfile,
    spec: &ServingSpec,
    radio: &RadioParams,
) -> Result<f64, QueueingError> {
    let users = vec![*task; n];
    Ok(transmission_delay(task, radio) + mm1_total_delay(&users, spec)?)
}

/// Largest number of identical users one serving UAV can host while staying
/// stable and meeting the deadline under the planning delay. Zero means the
/// profile is infeasible even for a single user.
pub fn max_users_per_uav(task: &TaskProfile, spec: &ServingSpec, radio: &RadioParams) -> usize {
    let work = task.cycles();
    let load = task.load();
    let slack = task.max_delay - transmission_delay(task, radio);
    if !(slack >= 0.0) || work <= 0.0 {
        return 0;
    }

    // Stability: n * load < capacity.
    let stable = if load > 0.0 {
        (spec.capacity / load).ceil() - 1.0
    } else {
        f64::INFINITY
    };
    // Deadline: n * work / (capacity - n * load) <= slack
    //       <=> n <= slack * capacity / (work + slack * load).
    let deadline = if slack.is_finite() {
        (slack * spec.capacity / (work + slack * load)).floor()
    } else {
        f64::INFINITY
    };
    let estimate = stable.min(deadline);
    if !estimate.is_finite() {
        return usize::MAX;
    }

    // The closed form can be off by one at the boundary from rounding, so
    // settle the answer against the delay model itself.
    let fits = |n: usize| {
        n == 0
            || planned_delay(n, task, spec, radio)
                .map(|d| meets_deadline(d, task.max_delay))
                .unwrap_or(false)
    };
    let mut n = estimate.max(0.0) as usize;
    while n > 0 && !fits(n) {
        n -= 1;
    }
    while fits(n + 1) {
        n += 1;
    }
    n
}
