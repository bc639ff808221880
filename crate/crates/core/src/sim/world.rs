//! World state, agent motion and the caption proxy.

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::scenario::{caption_noun, Camera, DynamicAgent, Motion, Scenario};
use crate::dynamics::{self, ControlInput, DynamicsParams, State};
use crate::geometry::AxisBox;
use crate::semantics::Caption;

pub const EMPTY_SCENE: &str = "an open area with no obstacles";

#[derive(Debug, Clone, PartialEq)]
enum Mover {
    Waypoints {
        points: Vec<Vector3<f64>>,
        next: usize,
        cyclic: bool,
    },
    RandomWalk {
        sigma: f64,
        bounds: AxisBox,
        heading: f64,
    },
}

/// Crossing agents walk out to this multiple of the outer spawn radius.
pub const EXIT_FACTOR: f64 = 4.0;

#[derive(Debug, Clone, PartialEq)]
pub struct AgentState {
    pub class: String,
    pub caption: String,
    /// Footprint center.
    pub p: Vector3<f64>,
    pub v: Vector3<f64>,
    pub speed: f64,
    pub half_extents: [f64; 3],
    /// The agent stands still until this time.
    pub start_time: f64,
    mover: Mover,
}

impl AgentState {
    pub fn footprint(&self) -> AxisBox {
        AxisBox::from_center(&self.p, &self.half_extents)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct World {
    pub t: f64,
    pub uav: State,
    /// Input applied to the UAV on the next step.
    pub u_last: ControlInput,
    /// Input after actuator lag.
    pub u_applied: ControlInput,
    pub agents: Vec<AgentState>,
    pub model: DynamicsParams,
    pub ground: f64,
    rng: ChaCha8Rng,
}

fn range_sample(rng: &mut ChaCha8Rng, r: [f64; 2]) -> f64 {
    if r[1] > r[0] {
        rng.random_range(r[0]..r[1])
    } else {
        r[0]
    }
}

fn spawn(agent: &DynamicAgent, rng: &mut ChaCha8Rng) -> AgentState {
    let caption = agent
        .caption
        .clone()
        .unwrap_or_else(|| caption_noun(&agent.class).to_string());
    let z = agent.p[2];
    let (p, speed, start_time, mover) = match &agent.motion {
        Motion::Waypoints { points, cyclic } => (
            Vector3::from(agent.p),
            agent.speed,
            0.0,
            Mover::Waypoints {
                points: points.iter().map(|q| Vector3::from(*q)).collect(),
                next: 0,
                cyclic: *cyclic,
            },
        ),
        Motion::RandomWalk { sigma, bounds } => {
            let heading = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
            (
                Vector3::from(agent.p),
                agent.speed,
                0.0,
                Mover::RandomWalk {
                    sigma: *sigma,
                    bounds: *bounds,
                    heading,
                },
            )
        }
        Motion::Crossing {
            center,
            spawn_radius,
            bearing_deg,
            speed,
            delay_s,
            pass_radius,
            legs,
        } => {
            let c = Vector3::new(center[0], center[1], z);
            let bearing = range_sample(rng, *bearing_deg).to_radians();
            let dir = Vector3::new(bearing.cos(), bearing.sin(), 0.0);
            let start = c + dir * range_sample(rng, *spawn_radius);
            let n_legs = if legs[1] > legs[0] {
                rng.random_range(legs[0]..=legs[1])
            } else {
                legs[0]
            };
            let mut points = Vec::with_capacity(n_legs + 1);
            for _ in 0..n_legs {
                let r = pass_radius * rng.random::<f64>().sqrt();
                let a = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
                points.push(c + Vector3::new(r * a.cos(), r * a.sin(), 0.0));
            }
            // leave on the side opposite the spawn, with some spread, and keep
            // walking well past the spawn ring
            let exit_bearing = bearing + std::f64::consts::PI + rng.random_range(-0.5..0.5);
            points.push(
                c + Vector3::new(exit_bearing.cos(), exit_bearing.sin(), 0.0)
                    * spawn_radius[1].max(1.0)
                    * EXIT_FACTOR,
            );
            (
                start,
                range_sample(rng, *speed),
                range_sample(rng, *delay_s),
                Mover::Waypoints {
                    points,
                    next: 0,
                    cyclic: false,
                },
            )
        }
    };
    AgentState {
        class: agent.class.clone(),
        caption,
        p,
        v: Vector3::zeros(),
        speed,
        half_extents: agent.half_extents,
        start_time,
        mover,
    }
}

fn reflect(p: &mut Vector3<f64>, heading: &mut f64, bounds: &AxisBox) {
    for d in 0..2 {
        let (lo, hi) = (bounds.lo[d], bounds.hi[d]);
        let mut flipped = false;
        if p[d] < lo {
            p[d] = (2.0 * lo - p[d]).min(hi);
            flipped = true;
        } else if p[d] > hi {
            p[d] = (2.0 * hi - p[d]).max(lo);
            flipped = true;
        }
        if flipped {
            *heading = if d == 0 {
                std::f64::consts::PI - *heading
            } else {
                -*heading
            };
        }
    }
}

fn advance_agent(a: &mut AgentState, t: f64, dt: f64, rng: &mut ChaCha8Rng) {
    if t < a.start_time {
        a.v = Vector3::zeros();
        return;
    }
    let before = a.p;
    match &mut a.mover {
        Mover::Waypoints {
            points,
            next,
            cyclic,
        } => {
            if *next < points.len() {
                let step = a.speed * dt;
                let to = points[*next] - a.p;
                let dist = to.norm();
                if dist <= step {
                    a.p = points[*next];
                    *next += 1;
                    if *cyclic && *next == points.len() {
                        *next = 0;
                    }
                } else {
                    a.p += to * (step / dist);
                }
            }
        }
        Mover::RandomWalk {
            sigma,
            bounds,
            heading,
        } => {
            let n: f64 = StandardNormal.sample(rng);
            *heading += *sigma * dt.sqrt() * n;
            a.p += Vector3::new(heading.cos(), heading.sin(), 0.0) * (a.speed * dt);
            reflect(&mut a.p, heading, bounds);
        }
    }
    a.v = (a.p - before) / dt;
}

impl World {
    pub fn new(scenario: &Scenario) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(scenario.seed);
        let agents = scenario.agents.iter().map(|a| spawn(a, &mut rng)).collect();
        let model = scenario.tuning.model;
        Self {
            t: 0.0,
            uav: scenario.start,
            u_last: ControlInput::hover(&model),
            u_applied: ControlInput::hover(&model),
            agents,
            model,
            ground: scenario.ground(),
            rng,
        }
    }
}

/// Advance agents and the UAV by `dt`; the UAV receives `u_last` through
/// the optional first-order actuator lag and is clamped at the ground.
pub fn step_world(world: &mut World, dt: f64) {
    let t = world.t;
    for a in &mut world.agents {
        advance_agent(a, t, dt, &mut world.rng);
    }
    let tau = world.model.tau_act;
    if tau > 0.0 {
        let k = dt / (tau + dt);
        let (a, c) = (world.u_applied.to_vector(), world.u_last.to_vector());
        world.u_applied = ControlInput::from_vector(&(a + (c - a) * k));
    } else {
        world.u_applied = world.u_last;
    }
    world.uav = dynamics::step(&world.uav, &world.u_applied, &world.model, dt);
    if world.uav.p.z < world.ground {
        world.uav.p.z = world.ground;
        world.uav.v.z = world.uav.v.z.max(0.0);
    }
    world.t = t + dt;
}

/// Unit optical axis: along the yaw heading, pitched down by the tilt.
pub fn camera_axis(uav: &State, camera: &Camera) -> Vector3<f64> {
    let (yaw, tilt) = (uav.yaw(), camera.tilt_deg.to_radians());
    Vector3::new(yaw.cos() * tilt.cos(), yaw.sin() * tilt.cos(), -tilt.sin())
}

/// Angle between the optical axis and the ray to `p`, when `p` lies in the
/// viewing cone.
pub fn view_angle(uav: &State, camera: &Camera, p: &Vector3<f64>) -> Option<f64> {
    let d = p - uav.p;
    let dist = d.norm();
    if dist > camera.range_m {
        return None;
    }
    if dist < 1e-9 {
        return Some(0.0);
    }
    let axis = camera_axis(uav, camera);
    let angle = d.cross(&axis).norm().atan2(d.dot(&axis));
    (angle <= 0.5 * camera.fov_deg.to_radians()).then_some(angle)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EntityRef {
    Agent(usize),
    Static(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sighting {
    pub entity: EntityRef,
    pub distance: f64,
    pub angle: f64,
}

/// Entities inside the viewing cone, nearest first. Occlusion is ignored.
pub fn visible_entities(scenario: &Scenario, world: &World) -> Vec<Sighting> {
    let cam = &scenario.camera;
    let mut out: Vec<Sighting> = Vec::new();
    let candidates = world
        .agents
        .iter()
        .enumerate()
        .map(|(i, a)| (EntityRef::Agent(i), a.p))
        .chain(
            scenario
                .static_obstacles
                .iter()
                .enumerate()
                .map(|(i, o)| (EntityRef::Static(i), o.bounds.center())),
        );
    for (entity, c) in candidates {
        if let Some(angle) = view_angle(&world.uav, cam, &c) {
            out.push(Sighting {
                entity,
                distance: (c - world.uav.p).norm(),
                angle,
            });
        }
    }
    out.sort_by(|a, b| a.distance.total_cmp(&b.distance));
    out
}

fn relation(scenario: &Scenario, uav: &State, p: &Vector3<f64>) -> &'static str {
    let target = scenario.target();
    if (p.xy() - target.xy()).norm() <= scenario.tuning.near_radius {
        return "near the landing area";
    }
    let d = p - uav.p;
    let bearing = dynamics::wrap_angle(d.y.atan2(d.x) - uav.yaw());
    if bearing.abs() < 20f64.to_radians() {
        "ahead"
    } else if bearing > 0.0 {
        "to the left"
    } else {
        "to the right"
    }
}

/// Templated caption listing the visible entities nearest first.
pub fn generate_caption(scenario: &Scenario, world: &World) -> Caption {
    let parts: Vec<String> = visible_entities(scenario, world)
        .iter()
        .map(|s| {
            let (noun, p) = match s.entity {
                EntityRef::Agent(i) => (world.agents[i].caption.as_str(), world.agents[i].p),
                EntityRef::Static(i) => {
                    let o = &scenario.static_obstacles[i];
                    (caption_noun(&o.class), o.bounds.center())
                }
            };
            format!("a {noun} {}", relation(scenario, &world.uav, &p))
        })
        .collect();
    let text = if parts.is_empty() {
        EMPTY_SCENE.to_string()
    } else {
        parts.join(" and ")
    };
    Caption {
        text,
        capture_time: world.t,
    }
}
