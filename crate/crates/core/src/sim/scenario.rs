//! Scenario files: world, start, agents, perception timing and the tuning
//! of the planner and controller used inside trials.

use std::path::Path;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::SimError;
use crate::dynamics::{DynamicsParams, State};
use crate::geometry::{AxisBox, Corridor};
use crate::mpc::{MpcConfig, StateBounds};
use crate::search::PlannerConfig;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Camera {
    pub fov_deg: f64,
    pub range_m: f64,
    /// Angle of the optical axis below the horizontal.
    pub tilt_deg: f64,
}

impl Default for Camera {
    fn default() -> Self {
        Self {
            fov_deg: 120.0,
            range_m: 6.0,
            tilt_deg: 45.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StaticObstacle {
    pub bounds: AxisBox,
    pub class: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Motion {
    /// Visit the points in order at the agent's speed.
    Waypoints {
        points: Vec<[f64; 3]>,
        #[serde(default)]
        cyclic: bool,
    },
    /// Heading diffuses with `sigma` rad/sqrt(s); the agent reflects off `bounds`.
    RandomWalk { sigma: f64, bounds: AxisBox },
    /// Seeded crossing of the landing area: the agent waits `delay_s`, walks
    /// in from a random bearing, visits `legs` random points within
    /// `pass_radius` of `center` and leaves on the far side.
    Crossing {
        center: [f64; 2],
        spawn_radius: [f64; 2],
        bearing_deg: [f64; 2],
        speed: [f64; 2],
        delay_s: [f64; 2],
        pass_radius: f64,
        legs: [usize; 2],
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DynamicAgent {
    pub class: String,
    /// Footprint center; ignored by `Crossing`, which spawns on its own.
    pub p: [f64; 3],
    pub speed: f64,
    pub motion: Motion,
    pub half_extents: [f64; 3],
    /// Caption noun phrase; defaults from the class.
    #[serde(default)]
    pub caption: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub schema_version: u32,
    pub name: String,
    pub world_bounds: AxisBox,
    pub target: [f64; 3],
    pub start: State,
    #[serde(default)]
    pub static_obstacles: Vec<StaticObstacle>,
    #[serde(default)]
    pub agents: Vec<DynamicAgent>,
    pub corridor: Corridor,
    pub perception_period: f64,
    pub perception_latency: f64,
    #[serde(default)]
    pub camera: Camera,
    pub trial_timeout: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub tuning: Tuning,
}

/// Knobs shared by every trial of a scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Tuning {
    pub dt: f64,
    /// Semantic buffers larger than this are capped.
    pub buffer_cap: f64,
    /// Fixed inflation of detected footprints in the geometric baseline.
    pub baseline_inflation: f64,
    /// Inflation of mapped static obstacles.
    pub static_margin: f64,
    /// The altitude floor applies within `buffer + floor_margin` of a region.
    pub floor_margin: f64,
    /// Dynamic regions expire after this many perception periods without
    /// re-confirmation.
    pub expiry_periods: f64,
    /// Distance from the landing target within which captions say
    /// "near the landing area".
    pub near_radius: f64,
    pub planner: PlannerConfig,
    /// Fields left out keep the trial defaults below, not `MpcConfig::default`.
    #[serde(deserialize_with = "mpc_over_trial_defaults")]
    pub mpc: MpcConfig,
    pub model: DynamicsParams,
    pub state_bounds: StateBounds,
}

fn trial_mpc() -> MpcConfig {
    MpcConfig {
        horizon: 15,
        sqp_max_iters: 2,
        ..MpcConfig::default()
    }
}

fn mpc_over_trial_defaults<'de, D: serde::Deserializer<'de>>(d: D) -> Result<MpcConfig, D::Error> {
    use serde::de::Error;
    let given = serde_json::Value::deserialize(d)?;
    let mut merged = serde_json::to_value(trial_mpc()).map_err(D::Error::custom)?;
    match (given, &mut merged) {
        (serde_json::Value::Object(fields), serde_json::Value::Object(base)) => base.extend(fields),
        _ => return Err(D::Error::custom("mpc must be an object")),
    }
    serde_json::from_value(merged).map_err(D::Error::custom)
}

impl Default for Tuning {
    fn default() -> Self {
        Self {
            dt: 0.05,
            buffer_cap: 10.0,
            baseline_inflation: 0.3,
            static_margin: 0.3,
            floor_margin: 1.0,
            expiry_periods: 2.0,
            near_radius: 3.0,
            planner: PlannerConfig {
                max_expansions: 20_000,
                ..PlannerConfig::default()
            },
            mpc: trial_mpc(),
            model: DynamicsParams::default(),
            state_bounds: StateBounds::default(),
        }
    }
}

/// Caption noun phrase for a class label.
pub fn caption_noun(class: &str) -> &str {
    match class {
        "pedestrian" => "person walking",
        "vehicle" => "car",
        "animal" => "dog running",
        "bicycle" => "cyclist riding a bicycle",
        "building" => "building",
        "tree" => "tree",
        "rock" => "rock",
        "bush" => "bush",
        "bench" => "bench",
        "pole" => "pole",
        "water" => "pond",
        other => other,
    }
}

impl Scenario {
    pub fn target(&self) -> Vector3<f64> {
        Vector3::from(self.target)
    }

    pub fn ground(&self) -> f64 {
        self.world_bounds.lo[2]
    }

    pub fn from_json(text: &str) -> Result<Self, SimError> {
        let s: Scenario =
            serde_json::from_str(text).map_err(|e| SimError::InvalidScenario(e.to_string()))?;
        s.validate()?;
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self, SimError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| SimError::Io(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: String| Err(SimError::InvalidScenario(m));
        if self.schema_version != SCHEMA_VERSION {
            return bad(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                self.schema_version
            ));
        }
        if !self.world_bounds.is_valid() {
            return bad("world_bounds is not a valid box".into());
        }
        if !self.world_bounds.contains(&self.start.p) || !self.world_bounds.contains(&self.target())
        {
            return bad("start and target must lie inside world_bounds".into());
        }
        if self.corridor.boxes.is_empty() || self.corridor.boxes.iter().any(|b| !b.is_valid()) {
            return bad("corridor needs at least one valid box".into());
        }
        if !(self.perception_latency >= 0.0) {
            return bad("perception_latency must be >= 0".into());
        }
        if !(self.perception_period > 0.0 && self.trial_timeout > 0.0) {
            return bad("perception_period and trial_timeout must be positive".into());
        }
        let c = &self.camera;
        if !(c.fov_deg > 0.0
            && c.fov_deg <= 360.0
            && c.range_m > 0.0
            && (-90.0..=90.0).contains(&c.tilt_deg))
        {
            return bad(
                "camera needs fov in (0, 360], positive range and tilt in [-90, 90]".into(),
            );
        }
        let t = &self.tuning;
        if !(t.dt > 0.0
            && t.buffer_cap >= 0.0
            && t.baseline_inflation >= 0.0
            && t.static_margin >= 0.0)
        {
            return bad("tuning: dt must be positive and margins non-negative".into());
        }
        if !(t.floor_margin >= 0.0 && t.expiry_periods > 0.0 && t.near_radius >= 0.0) {
            return bad("tuning: floor_margin, expiry_periods and near_radius out of range".into());
        }
        if (t.mpc.dt - t.dt).abs() > 1e-12 {
            return bad("tuning: mpc.dt must equal the simulation dt".into());
        }
        t.mpc
            .validate()
            .map_err(|e| SimError::InvalidScenario(e.to_string()))?;
        t.planner
            .validate()
            .map_err(|e| SimError::InvalidScenario(e.to_string()))?;
        t.model.validate().map_err(SimError::InvalidScenario)?;
        for o in &self.static_obstacles {
            if !o.bounds.is_valid() {
                return bad(format!("static obstacle '{}' has an invalid box", o.class));
            }
        }
        for (i, a) in self.agents.iter().enumerate() {
            if !(a.speed >= 0.0) || a.half_extents.iter().any(|h| !(*h >= 0.0)) {
                return bad(format!("agent {i}: speed and half_extents must be >= 0"));
            }
            match &a.motion {
                Motion::Waypoints { points, .. } if points.is_empty() => {
                    return bad(format!("agent {i}: waypoint list is empty"));
                }
                Motion::RandomWalk { sigma, bounds } => {
                    if !(*sigma >= 0.0)
                        || !bounds.is_valid()
                        || !bounds.contains(&Vector3::from(a.p))
                    {
                        return bad(format!(
                            "agent {i}: random walk needs sigma >= 0 and a start inside its bounds"
                        ));
                    }
                }
                Motion::Crossing {
                    spawn_radius,
                    bearing_deg,
                    speed,
                    delay_s,
                    pass_radius,
                    legs,
                    ..
                } => {
                    let ordered = |r: &[f64; 2]| r[0] <= r[1];
                    if !(ordered(spawn_radius)
                        && ordered(bearing_deg)
                        && ordered(speed)
                        && ordered(delay_s))
                        || legs[0] > legs[1]
                        || speed[0] < 0.0
                        || delay_s[0] < 0.0
                        || spawn_radius[0] < 0.0
                        || *pass_radius < 0.0
                    {
                        return bad(format!(
                            "agent {i}: crossing ranges must be ordered and non-negative"
                        ));
                    }
                }
                _ => {}
            }
        }
        Ok(())
    }
}

/// Scenario files shipped with the crate.
pub fn builtin(name: &str) -> Option<Scenario> {
    let text = match name {
        "open_field" => include_str!("../../scenarios/open_field.json"),
        "urban" => include_str!("../../scenarios/urban.json"),
        "grassland" => include_str!("../../scenarios/grassland.json"),
        _ => return None,
    };
    Some(Scenario::from_json(text).expect("bundled scenario is valid"))
}

pub const BUILTIN_SCENARIOS: [&str; 3] = ["open_field", "urban", "grassland"];

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtins_load_and_round_trip() {
        for name in BUILTIN_SCENARIOS {
            let s = builtin(name).unwrap();
            assert_eq!(Scenario::from_json(&s.to_json()).unwrap(), s);
        }
    }

    #[test]
    fn partial_mpc_keeps_trial_defaults() {
        let mut v: serde_json::Value =
            serde_json::from_str(&builtin("open_field").unwrap().to_json()).unwrap();
        v["tuning"] = serde_json::json!({ "mpc": { "qp_max_iters": 500 } });
        let s = Scenario::from_json(&v.to_string()).unwrap();
        assert_eq!(s.tuning.mpc.qp_max_iters, 500);
        assert_eq!(s.tuning.mpc.horizon, Tuning::default().mpc.horizon);
        assert_eq!(s.tuning.mpc.sqp_max_iters, 2);
    }

    #[test]
    fn rejects_wrong_schema_version() {
        let mut s = builtin("open_field").unwrap();
        s.schema_version = 2;
        assert!(matches!(
            Scenario::from_json(&s.to_json()),
            Err(SimError::InvalidScenario(_))
        ));
    }

    #[test]
    fn rejects_start_outside_world() {
        let mut s = builtin("open_field").unwrap();
        s.start.p.z = 50.0;
        assert!(s.validate().is_err());
    }
}
