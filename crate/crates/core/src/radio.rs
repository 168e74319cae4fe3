//! Free-space channel model used for sensing, plus coverage and uplink delay.
//!
//! Channel gain uses the slant (3D) distance between a ground user and a UAV
//! at altitude. Coverage uses the horizontal distance only.

use serde::{Deserialize, Serialize};

use crate::error::RadioError;
use crate::geometry::{Point2, Point3};
use crate::scenario::{TaskProfile, User};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RadioParams {
    /// Channel power gain at the reference distance of 1 m.
    pub channel_power_gain: f64,
    /// Uplink data rate, bit/s.
    pub data_rate: f64,
    /// Multiplier applied to cumulative RSSI when it is used as a reward.
    pub rssi_reward_scale: f64,
}

impl Default for RadioParams {
    fn default() -> Self {
        Self {
            channel_power_gain: 1.42e-4,
            data_rate: 1.0e8,
            rssi_reward_scale: 1.0e9,
        }
    }
}

/// Free-space gain `g / d^2` with `d` the 3D user to UAV distance.
pub fn channel_gain(user: &Point2, uav: &Point3, params: &RadioParams) -> Result<f64, RadioError> {
    let d2 = uav.distance_squared(&user.at_altitude(0.0));
    if d2 == 0.0 {
        return Err(RadioError::ZeroDistance);
    }
    Ok(params.channel_power_gain / d2)
}

/// Sum of channel gains from every user that is still emitting.
///
/// Connected users contribute nothing. A user exactly under a UAV at zero
/// altitude would contribute an infinite term; positive altitude rules
/// that out.
pub fn cumulative_rssi(uav: &Point3, users: &[User], params: &RadioParams) -> f64 {
    users
        .iter()
        .filter(|u| u.emitting)
        .map(|u| params.channel_power_gain / uav.distance_squared(&u.position.at_altitude(0.0)))
        .sum()
}

/// True iff the user lies within `radius` of the UAV's ground projection.
/// The boundary is inclusive.
pub fn in_coverage(user: &Point2, uav: &Point3, radius: f64) -> bool {
    uav.horizontal_distance(user) <= radius
}

/// Uplink time for one task, seconds.
pub fn transmission_delay(task: &TaskProfile, params: &RadioParams) -> f64 {
    task.size_bits / params.data_rate
}
