//! Trial outcome classification from a recorded trace.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::scenario::Scenario;
use super::trial::TraceRecord;
use super::{CLOSE_CALL_RADIUS, SUCCESS_RADIUS, TOUCHDOWN_HEIGHT, TOUCHDOWN_SPEED};
use crate::geometry::AxisBox;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Outcome {
    pub success: bool,
    pub close_call: bool,
    pub collision: bool,
    pub touched_down: bool,
    pub touchdown_error: f64,
    pub min_agent_distance: Option<f64>,
}

fn agent_half(scenario: &Scenario, i: usize) -> [f64; 3] {
    scenario
        .agents
        .get(i)
        .map(|a| a.half_extents)
        .unwrap_or([0.0; 3])
}

/// Collision: the UAV point inside an agent footprint or a static obstacle.
/// Close call: closer than 1 m to an agent center. Success: touchdown within
/// 0.5 m of the target with neither.
pub fn classify_outcome(trace: &[TraceRecord], scenario: &Scenario) -> Outcome {
    let mut collision = false;
    let mut min_d: Option<f64> = None;
    for r in trace {
        let p = r.state.p;
        for (i, a) in r.agents.iter().enumerate() {
            let d = (p - a).norm();
            min_d = Some(min_d.map_or(d, |m: f64| m.min(d)));
            if AxisBox::from_center(a, &agent_half(scenario, i)).contains(&p) {
                collision = true;
            }
        }
        if scenario
            .static_obstacles
            .iter()
            .any(|o| o.bounds.contains(&p))
        {
            collision = true;
        }
    }
    let close_call = min_d.is_some_and(|d| d < CLOSE_CALL_RADIUS);
    let (touched_down, touchdown_error) = match trace.last() {
        Some(r) => {
            let s = &r.state;
            let down =
                s.p.z <= scenario.ground() + TOUCHDOWN_HEIGHT && s.v.norm() <= TOUCHDOWN_SPEED;
            let target: Vector3<f64> = scenario.target();
            (down, (s.p.xy() - target.xy()).norm())
        }
        None => (false, f64::INFINITY),
    };
    Outcome {
        success: touched_down && touchdown_error <= SUCCESS_RADIUS && !collision && !close_call,
        close_call,
        collision,
        touched_down,
        touchdown_error,
        min_agent_distance: min_d,
    }
}
