//! Non-learning detector placements: a regular grid of community centers
//! and uniformly random centers.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::geometry::Point2;
use crate::localization::{DetectorReport, LocalizationResult};
use crate::scenario::{ArenaConfig, Scenario};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum PlacementMethod {
    DeepAir,
    Cf(usize),
    Random(usize),
}

impl fmt::Display for PlacementMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PlacementMethod::DeepAir => write!(f, "DeepAir"),
            PlacementMethod::Cf(k) => write!(f, "CF-{k}"),
            PlacementMethod::Random(k) => write!(f, "Random-{k}"),
        }
    }
}

impl FromStr for PlacementMethod {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("deepair") {
            return Ok(PlacementMethod::DeepAir);
        }
        let (name, k) = s
            .split_once('-')
            .ok_or_else(|| format!("unknown method `{s}` (expected DeepAir, CF-k or Random-k)"))?;
        let k: usize = k.parse().map_err(|_| format!("bad detector count in `{s}`"))?;
        if k == 0 {
            return Err(format!("`{s}` needs at least one detector"));
        }
        match name.to_ascii_lowercase().as_str() {
            "cf" => Ok(PlacementMethod::Cf(k)),
            "random" => Ok(PlacementMethod::Random(k)),
            _ => Err(format!("unknown method `{s}` (expected DeepAir, CF-k or Random-k)")),
        }
    }
}

impl TryFrom<String> for PlacementMethod {
    type Error = String;
    fn try_from(s: String) -> Result<Self, String> {
        s.parse()
    }
}

impl From<PlacementMethod> for String {
    fn from(m: PlacementMethod) -> String {
        m.to_string()
    }
}

/// Rows and columns of the most square grid with `k` cells, rows <= columns.
pub fn grid_shape(k: usize) -> (usize, usize) {
    let mut r = k.isqrt();
    while r > 1 && k % r != 0 {
        r -= 1;
    }
    (r.max(1), k / r.max(1))
}

/// Centers of an r x c partition of the arena, rows along x.
pub fn cf_centers(k: usize, config: &ArenaConfig) -> Vec<Point2> {
    assert!(k >= 1, "need at least one community");
    let (r, c) = grid_shape(k);
    let (w, h) = (config.x_max / r as f64, config.y_max / c as f64);
    let mut out = Vec::with_capacity(k);
    for i in 0..r {
        for j in 0..c {
            out.push(Point2::new((i as f64 + 0.5) * w, (j as f64 + 0.5) * h));
        }
    }
    out
}

pub fn random_centers<R: Rng>(k: usize, config: &ArenaConfig, rng: &mut R) -> Vec<Point2> {
    (0..k)
        .map(|_| {
            Point2::new(
                rng.random_range(0.0..=config.x_max),
                rng.random_range(0.0..=config.y_max),
            )
        })
        .collect()
}

/// Stations a detector at every center; each emitting user within range
/// connects to its nearest center, the lower index on ties.
pub fn place_and_connect(centers: &[Point2], scenario: &mut Scenario) -> LocalizationResult {
    let config = scenario.config;
    let mut ids: Vec<Vec<usize>> = vec![Vec::new(); centers.len()];
    for u in scenario.users.iter_mut().filter(|u| u.emitting) {
        let mut best: Option<(f64, usize)> = None;
        for (i, c) in centers.iter().enumerate() {
            let d = c.distance(&u.position);
            if d <= config.detector_radius && best.is_none_or(|(bd, _)| d < bd) {
                best = Some((d, i));
            }
        }
        if let Some((_, i)) = best {
            u.connect(i);
            ids[i].push(u.id);
        }
    }
    let reports = centers
        .iter()
        .zip(ids)
        .map(|(c, new_connection_ids)| DetectorReport {
            hover_position: c.at_altitude(config.uav_altitude),
            new_connection_ids,
            episode_scores: Vec::new(),
            converged_at: None,
        })
        .collect();
    LocalizationResult::from_reports(reports)
}
