//! Serving-UAV sizing per detected area and deployment of a limited fleet.

use serde::{Deserialize, Serialize};

use crate::error::QueueingError;
use crate::geometry::{Point2, Point3};
use crate::localization::DetectorReport;
use crate::queueing::{max_users_per_uav, meets_deadline, mm1_total_delay, ServingSpec};
use crate::radio::{transmission_delay, RadioParams};
use crate::scenario::{Scenario, TaskProfile};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AreaDemand {
    /// Index of the detector report the area came from.
    pub area: usize,
    pub user_ids: Vec<usize>,
    pub required_uavs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServingUav {
    pub id: usize,
    pub area: usize,
    pub position: Point3,
    pub user_ids: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct DeploymentPlan {
    /// UAVs granted to each area, indexed like the demands.
    pub grants: Vec<usize>,
    pub uavs: Vec<ServingUav>,
    /// Connected users left without a serving UAV.
    pub unserved: Vec<usize>,
}

impl DeploymentPlan {
    pub fn assigned_uav(&self, user: usize) -> Option<usize> {
        self.uavs
            .iter()
            .find(|u| u.user_ids.contains(&user))
            .map(|u| u.id)
    }

    pub fn served_count(&self) -> usize {
        self.uavs.iter().map(|u| u.user_ids.len()).sum()
    }
}

/// Group sizes for `n` items over `k` groups, larger groups first.
pub fn balanced_sizes(n: usize, k: usize) -> Vec<usize> {
    if k == 0 {
        return Vec::new();
    }
    (0..k).map(|i| n / k + usize::from(i < n % k)).collect()
}

/// True when every member of `group` meets its deadline under the planning
/// delay of the group and the UAV stays stable.
pub fn group_feasible(group: &[TaskProfile], spec: &ServingSpec, radio: &RadioParams) -> bool {
    if group.is_empty() {
        return true;
    }
    match mm1_total_delay(group, spec) {
        Ok(d) => group
            .iter()
            .all(|t| meets_deadline(transmission_delay(t, radio) + d, t.max_delay)),
        Err(_) => false,
    }
}

/// Distinct profiles of `users` with their multiplicities.
fn profile_counts(users: &[TaskProfile]) -> (Vec<TaskProfile>, Vec<usize>) {
    let mut kinds: Vec<TaskProfile> = Vec::new();
    let mut counts = Vec::new();
    for t in users {
        match kinds.iter().position(|k| k == t) {
            Some(i) => counts[i] += 1,
            None => {
                kinds.push(*t);
                counts.push(1);
            }
        }
    }
    (kinds, counts)
}

/// Exact search for a balanced split into groups of the given `sizes` where
/// every group is feasible. Groups are described by how many users of each
/// profile they hold; equal-sized groups are kept in non-increasing order to
/// skip permutations, and dead ends are memoized.
struct SplitSearch<'a> {
    kinds: &'a [TaskProfile],
    sizes: Vec<usize>,
    spec: &'a ServingSpec,
    radio: &'a RadioParams,
    dead: std::collections::HashSet<(usize, Vec<usize>)>,
}

impl SplitSearch<'_> {
    fn feasible(&self, take: &[usize]) -> bool {
        let group: Vec<TaskProfile> = self
            .kinds
            .iter()
            .zip(take)
            .flat_map(|(t, &n)| std::iter::repeat_n(*t, n))
            .collect();
        group_feasible(&group, self.spec, self.radio)
    }

    fn solve(&mut self, g: usize, remaining: &mut Vec<usize>, prev: Option<&[usize]>) -> bool {
        if g == self.sizes.len() {
            return true;
        }
        let same_size = g > 0 && self.sizes[g - 1] == self.sizes[g];
        let bound = if same_size { prev } else { None };
        if bound.is_none() && self.dead.contains(&(g, remaining.clone())) {
            return false;
        }
        let mut take = vec![0; remaining.len()];
        let found = self.fill(g, 0, self.sizes[g], &mut take, remaining, bound);
        if !found && bound.is_none() {
            self.dead.insert((g, remaining.clone()));
        }
        found
    }

    /// Chooses how many users of profile `i..` go into group `g`.
    fn fill(
        &mut self,
        g: usize,
        i: usize,
        left: usize,
        take: &mut Vec<usize>,
        remaining: &mut Vec<usize>,
        bound: Option<&[usize]>,
    ) -> bool {
        if i == take.len() {
            if left > 0 {
                return false;
            }
            if let Some(b) = bound {
                if take.as_slice() > b {
                    return false;
                }
            }
            if !self.feasible(take) {
                return false;
            }
            for (r, t) in remaining.iter_mut().zip(take.iter()) {
                *r -= t;
            }
            let chosen = take.clone();
            let ok = self.solve(g + 1, remaining, Some(&chosen));
            for (r, t) in remaining.iter_mut().zip(take.iter()) {
                *r += t;
            }
            return ok;
        }
        let most = left.min(remaining[i]);
        for n in (0..=most).rev() {
            take[i] = n;
            if self.fill(g, i + 1, left - n, take, remaining, bound) {
                return true;
            }
        }
        take[i] = 0;
        false
    }
}

/// True when `users` can be split into `k` feasible groups whose sizes
/// differ by at most one.
pub fn balanced_split_exists(
    users: &[TaskProfile],
    k: usize,
    spec: &ServingSpec,
    radio: &RadioParams,
) -> bool {
    if k == 0 {
        return users.is_empty();
    }
    let (kinds, mut counts) = profile_counts(users);
    let mut search = SplitSearch {
        kinds: &kinds,
        sizes: balanced_sizes(users.len(), k),
        spec,
        radio,
        dead: Default::default(),
    };
    search.solve(0, &mut counts, None)
}

/// Smallest number of UAVs admitting a feasible balanced split of `users`.
pub fn required_uavs(
    users: &[TaskProfile],
    spec: &ServingSpec,
    radio: &RadioParams,
) -> Result<usize, QueueingError> {
    if users.is_empty() {
        return Ok(0);
    }
    if users.iter().any(|t| !group_feasible(std::slice::from_ref(t), spec, radio)) {
        return Err(QueueingError::InfeasibleProfile);
    }
    // Singletons are feasible, so the search ends by k = n.
    Ok((1..=users.len())
        .find(|&k| balanced_split_exists(users, k, spec, radio))
        .unwrap_or(users.len()))
}

/// Demand of every detected area from the users its detector connected.
pub fn area_demands(
    reports: &[DetectorReport],
    scenario: &Scenario,
    spec: &ServingSpec,
    radio: &RadioParams,
) -> Result<Vec<AreaDemand>, QueueingError> {
    reports
        .iter()
        .enumerate()
        .map(|(area, r)| {
            let tasks: Vec<TaskProfile> = r
                .new_connection_ids
                .iter()
                .map(|&id| scenario.users[id].task)
                .collect();
            Ok(AreaDemand {
                area,
                user_ids: r.new_connection_ids.clone(),
                required_uavs: required_uavs(&tasks, spec, radio)?,
            })
        })
        .collect()
}

/// Hands out `fleet` UAVs one at a time to the area with the largest unmet
/// need. Ties go to the area granted fewer so far, then the lower index,
/// which makes equal needs alternate.
pub fn grant_fleet(needs: &[usize], fleet: usize) -> Vec<usize> {
    let mut grants = vec![0; needs.len()];
    for _ in 0..fleet {
        let pick = (0..needs.len())
            .filter(|&i| grants[i] < needs[i])
            .max_by(|&a, &b| {
                (needs[a] - grants[a])
                    .cmp(&(needs[b] - grants[b]))
                    .then(grants[b].cmp(&grants[a]))
                    .then(b.cmp(&a))
            });
        match pick {
            Some(i) => grants[i] += 1,
            None => break,
        }
    }
    grants
}

/// `count` positions around `hover` on a square lattice of pitch `spacing`,
/// nearest first, inside the arena. The first is the hover point itself
/// when it is inside.
pub fn stack_positions(
    hover: &Point3,
    count: usize,
    spacing: f64,
    x_max: f64,
    y_max: f64,
) -> Vec<Point3> {
    if count == 0 {
        return Vec::new();
    }
    let mut reach = 1i64;
    loop {
        let mut cells: Vec<(i64, i64)> = Vec::new();
        for i in -reach..=reach {
            for j in -reach..=reach {
                let x = hover.x + i as f64 * spacing;
                let y = hover.y + j as f64 * spacing;
                if (0.0..=x_max).contains(&x) && (0.0..=y_max).contains(&y) {
                    cells.push((i, j));
                }
            }
        }
        if cells.len() >= count {
            cells.sort_by_key(|&(i, j)| (i * i + j * j, i, j));
            return cells
                .into_iter()
                .take(count)
                .map(|(i, j)| {
                    Point3::new(
                        hover.x + i as f64 * spacing,
                        hover.y + j as f64 * spacing,
                        hover.z,
                    )
                })
                .collect();
        }
        reach += 1;
    }
}

/// Kuhn-style augmenting path search over UAV slots.
fn try_assign(
    user: usize,
    reach: &[Vec<usize>],
    slot_owner: &mut [Option<usize>],
    slot_uav: &[usize],
    seen: &mut [bool],
) -> bool {
    for (slot, &uav) in slot_uav.iter().enumerate() {
        if seen[slot] || !reach[user].contains(&uav) {
            continue;
        }
        seen[slot] = true;
        match slot_owner[slot] {
            None => {
                slot_owner[slot] = Some(user);
                return true;
            }
            Some(other) => {
                if try_assign(other, reach, slot_owner, slot_uav, seen) {
                    slot_owner[slot] = Some(user);
                    return true;
                }
            }
        }
    }
    false
}

/// Assigns users to UAVs with at most `sizes[j]` users on UAV `j`, only
/// where the user is within `radius`. Users are considered in the given
/// order; the matching is maximum.
fn assign_users(
    users: &[(usize, Point2)],
    uavs: &[Point3],
    sizes: &[usize],
    radius: f64,
) -> Vec<Vec<usize>> {
    let reach: Vec<Vec<usize>> = users
        .iter()
        .map(|(_, p)| {
            (0..uavs.len())
                .filter(|&j| uavs[j].horizontal_distance(p) <= radius)
                .collect()
        })
        .collect();
    let slot_uav: Vec<usize> = sizes
        .iter()
        .enumerate()
        .flat_map(|(j, &s)| std::iter::repeat_n(j, s))
        .collect();
    let mut slot_owner = vec![None; slot_uav.len()];
    for u in 0..users.len() {
        let mut seen = vec![false; slot_uav.len()];
        try_assign(u, &reach, &mut slot_owner, &slot_uav, &mut seen);
    }
    let mut out = vec![Vec::new(); uavs.len()];
    for (slot, owner) in slot_owner.iter().enumerate() {
        if let Some(u) = owner {
            out[slot_uav[slot]].push(users[*u].0);
        }
    }
    for list in &mut out {
        list.sort_unstable();
    }
    out
}

/// Grants the fleet, stacks each area's UAVs around its hover point and
/// splits the area's users evenly over them, up to what each UAV can host.
pub fn deploy(
    demands: &[AreaDemand],
    fleet: usize,
    reports: &[DetectorReport],
    scenario: &Scenario,
    spec: &ServingSpec,
    radio: &RadioParams,
) -> DeploymentPlan {
    let needs: Vec<usize> = demands.iter().map(|d| d.required_uavs).collect();
    let grants = grant_fleet(&needs, fleet);
    let config = &scenario.config;
    let mut plan = DeploymentPlan {
        grants: grants.clone(),
        ..DeploymentPlan::default()
    };

    for (demand, &granted) in demands.iter().zip(&grants) {
        let hover = reports[demand.area].hover_position;
        if granted == 0 {
            plan.unserved.extend(&demand.user_ids);
            continue;
        }
        // Mixed profiles use the most restrictive per-UAV capacity.
        let per_uav = demand
            .user_ids
            .iter()
            .map(|&id| max_users_per_uav(&scenario.users[id].task, spec, radio))
            .min()
            .unwrap_or(0);
        let hosted = demand.user_ids.len().min(granted.saturating_mul(per_uav));
        let sizes = balanced_sizes(hosted, granted);
        let positions = stack_positions(
            &hover,
            granted,
            config.min_uav_separation,
            config.x_max,
            config.y_max,
        );
        let users: Vec<(usize, Point2)> = demand
            .user_ids
            .iter()
            .map(|&id| (id, scenario.users[id].position))
            .collect();
        let assigned = assign_users(&users, &positions, &sizes, config.serving_radius);
        for id in &demand.user_ids {
            if !assigned.iter().any(|a| a.contains(id)) {
                plan.unserved.push(*id);
            }
        }
        for (position, user_ids) in positions.into_iter().zip(assigned) {
            plan.uavs.push(ServingUav {
                id: plan.uavs.len(),
                area: demand.area,
                position,
                user_ids,
            });
        }
    }
    plan.unserved.sort_unstable();
    plan
}
