//! Closed-loop trial: perception with injected latency, unsafe-region
//! bookkeeping, replanning and receding-horizon tracking.

use std::collections::VecDeque;
use std::time::Duration;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::outcome::{classify_outcome, Outcome};
use super::scenario::Scenario;
use super::world::{camera_axis, generate_caption, step_world, visible_entities, EntityRef, World};
use super::SimError;
use crate::dynamics::{ControlInput, State};
use crate::geometry::{box_to_polytope, free_box_around, AxisBox, UnsafeRegion};
use crate::mpc::{self, MpcSolution, MpcStatus, RefPoint};
use crate::search::{self, ReferenceTrajectory, SearchError, StartState};
use crate::semantics::{
    self, AlwaysMalformed, DeterministicBackend, KnowledgeBase, NoisyBackend, ParseLimits,
    ReasonerBackend, RemoteBackend, RemoteConfig, SafetySpec,
};

/// The final reference point sits this far below the target so the
/// controller settles on the ground instead of hovering just above it.
pub const TOUCHDOWN_SINK: f64 = 0.1;
/// Offset between a trial seed and the seed of its noisy backend.
pub const NOISE_SEED_OFFSET: u64 = 0x9e37_79b9;
const ESCAPE_MARGIN: f64 = 0.3;
const ESCAPE_SPEED: f64 = 2.0;
/// Sideways escape moves cost this much more than vertical ones.
const ESCAPE_SIDEWAYS_WEIGHT: f64 = 8.0;
/// Targets farther than this are approached through intermediate goals.
const STAGE_LEN: f64 = 3.0;
/// Boxes within this horizontal distance count when choosing a waiting altitude.
const WAIT_REACH: f64 = 1.0;
const PHANTOM_HALF: [f64; 3] = [0.25, 0.25, 0.9];
const EPS_T: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    Deterministic,
    Noisy,
    Malformed,
    Remote(RemoteConfig),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Variant {
    /// Geometric detection with a fixed small inflation, no semantics.
    Baseline,
    /// Unreliable reasoner without fallback.
    NoisyReasoner,
    /// Reasoner with validation and fallback.
    Full,
}

impl Variant {
    pub fn label(&self) -> &'static str {
        match self {
            Variant::Baseline => "Baseline",
            Variant::NoisyReasoner => "NoisyReasoner",
            Variant::Full => "Full",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Pipeline {
    pub variant: Variant,
    /// Backend used by `Full`; the other variants ignore it.
    pub backend: BackendKind,
    /// Overrides the scenario's perception latency for reasoning variants.
    pub latency: Option<f64>,
    pub deadline_s: f64,
    pub limits: ParseLimits,
}

impl Default for Pipeline {
    fn default() -> Self {
        Self::new(Variant::Full)
    }
}

impl Pipeline {
    pub fn new(variant: Variant) -> Self {
        Self {
            variant,
            backend: BackendKind::Deterministic,
            latency: None,
            deadline_s: semantics::DEFAULT_DEADLINE.as_secs_f64(),
            limits: ParseLimits::default(),
        }
    }

    pub fn full(backend: BackendKind) -> Self {
        Self {
            backend,
            ..Self::new(Variant::Full)
        }
    }

    pub fn with_latency(mut self, latency: f64) -> Self {
        self.latency = Some(latency);
        self
    }

    /// Latency between capture and availability for this pipeline.
    pub fn effective_latency(&self, scenario: &Scenario) -> f64 {
        match self.variant {
            Variant::Baseline => 0.0,
            _ => self.latency.unwrap_or(scenario.perception_latency),
        }
    }

    /// The standard three-way comparison.
    pub fn standard_set(backend: BackendKind) -> Vec<Pipeline> {
        vec![
            Pipeline::new(Variant::Baseline),
            Pipeline::new(Variant::NoisyReasoner),
            Pipeline::full(backend),
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub seed: u64,
    pub variant: Variant,
    pub success: bool,
    pub close_call: bool,
    pub collision: bool,
    pub touched_down: bool,
    /// Horizontal distance to the target at the end of the trial.
    pub touchdown_error: f64,
    pub duration: f64,
    /// `None` when the scenario has no agents.
    pub min_agent_distance: Option<f64>,
    pub replan_count: usize,
    pub spec_log: Vec<SafetySpec>,
    pub trace_path: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Track,
    Hold,
    Escape,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActiveSpec {
    pub class: String,
    pub is_dynamic: bool,
    pub z_min: f64,
    pub buffer: f64,
    pub capture_time: f64,
    pub available_at: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub t: f64,
    pub state: State,
    pub input: ControlInput,
    pub mode: Mode,
    pub reference: Vector3<f64>,
    /// Distinct position boxes over the horizon, in step order.
    pub polytopes: Vec<AxisBox>,
    /// Inflated perceived regions and altitude-floor boxes.
    pub unsafe_boxes: Vec<AxisBox>,
    pub specs: Vec<ActiveSpec>,
    pub agents: Vec<Vector3<f64>>,
    pub mpc_status: Option<MpcStatus>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialRun {
    pub result: TrialResult,
    pub trace: Vec<TraceRecord>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum RegionKey {
    Agent(usize),
    Static(usize),
    Phantom(u64),
}

#[derive(Debug, Clone)]
struct Region {
    key: RegionKey,
    class: String,
    /// Box at `observed_at`; dynamic regions drift with `velocity`.
    base: AxisBox,
    velocity: Vector3<f64>,
    observed_at: f64,
    expires_at: f64,
    buffer: f64,
    is_dynamic: bool,
    z_floor: f64,
    capture_time: f64,
    available_at: f64,
}

impl Region {
    fn bounds(&self, t: f64) -> AxisBox {
        let shift = self.velocity * (t - self.observed_at);
        let mut b = self.base;
        for d in 0..2 {
            b.lo[d] += shift[d];
            b.hi[d] += shift[d];
        }
        b
    }
}

#[derive(Debug, Clone)]
struct Pending {
    capture_time: f64,
    available_at: f64,
    spec: Option<SafetySpec>,
    agent: Option<usize>,
    agent_box_at_capture: Option<AxisBox>,
    /// Nearest visible mapped obstacle, used when no agent is in view.
    nearest_static: Option<usize>,
    aim: Vector3<f64>,
}

#[derive(Debug, Clone)]
enum Guidance {
    /// `staged` trajectories end at an intermediate point short of the target.
    Track {
        traj: ReferenceTrajectory,
        t0: f64,
        staged: bool,
    },
    Hold {
        p: Vector3<f64>,
    },
    Escape {
        from: Vector3<f64>,
        to: Vector3<f64>,
        t0: f64,
    },
}

fn make_backend(p: &Pipeline, seed: u64) -> Result<Option<Box<dyn ReasonerBackend>>, SimError> {
    Ok(match (p.variant, &p.backend) {
        (Variant::Baseline, _) => None,
        (Variant::NoisyReasoner, _) => Some(Box::new(NoisyBackend::new(
            seed.wrapping_add(NOISE_SEED_OFFSET),
        ))),
        (Variant::Full, BackendKind::Deterministic) => Some(Box::new(DeterministicBackend)),
        (Variant::Full, BackendKind::Noisy) => Some(Box::new(NoisyBackend::new(
            seed.wrapping_add(NOISE_SEED_OFFSET),
        ))),
        (Variant::Full, BackendKind::Malformed) => Some(Box::new(AlwaysMalformed)),
        (Variant::Full, BackendKind::Remote(cfg)) => Some(Box::new(
            RemoteBackend::new(cfg.clone()).map_err(SimError::InvalidScenario)?,
        )),
    })
}

struct Trial<'a> {
    sc: &'a Scenario,
    pipeline: &'a Pipeline,
    kb: &'a KnowledgeBase,
    backend: Option<Box<dyn ReasonerBackend>>,
    world: World,
    latency: f64,
    pending: VecDeque<Pending>,
    regions: Vec<Region>,
    statics: Vec<UnsafeRegion>,
    guidance: Guidance,
    prev_sol: Option<MpcSolution>,
    next_capture: f64,
    phantom_count: u64,
    replans: usize,
    spec_log: Vec<SafetySpec>,
    trace: Vec<TraceRecord>,
}

/// Backup command when the MPC has no usable solution: a PD pull toward
/// `target` with bounded acceleration, turned into thrust and attitude-rate
/// commands. Keeps the vehicle braking and level instead of coasting on its
/// last tilt.
pub fn recovery_input(
    s: &State,
    target: &Vector3<f64>,
    yaw_ref: f64,
    model: &crate::dynamics::DynamicsParams,
) -> ControlInput {
    const KP: f64 = 1.5;
    const KD: f64 = 2.5;
    const A_MAX: f64 = 3.0;
    const K_ATT: f64 = 4.0;
    const TILT_MAX: f64 = 0.5;
    let mut a = (target - s.p) * KP - s.v * KD;
    if a.norm() > A_MAX {
        a *= A_MAX / a.norm();
    }
    let f = a + Vector3::new(0.0, 0.0, model.g);
    let yaw = s.att.z;
    let (sy, cy) = yaw.sin_cos();
    let fx = cy * f.x + sy * f.y;
    let fy = -sy * f.x + cy * f.y;
    let pitch = fx.atan2(f.z).clamp(-TILT_MAX, TILT_MAX);
    let roll = (-fy)
        .atan2((fx * fx + f.z * f.z).sqrt())
        .clamp(-TILT_MAX, TILT_MAX);
    let yaw_err = (yaw_ref - yaw + std::f64::consts::PI).rem_euclid(2.0 * std::f64::consts::PI)
        - std::f64::consts::PI;
    ControlInput {
        rate_cmd: Vector3::new(
            K_ATT * (roll - s.att.x),
            K_ATT * (pitch - s.att.y),
            K_ATT * yaw_err,
        ),
        thrust_cmd: f.norm(),
    }
    .clamped(model)
}

fn is_free(p: &Vector3<f64>, boxes: &[AxisBox]) -> bool {
    !boxes.iter().any(|b| b.interior_contains(p))
}

impl<'a> Trial<'a> {
    fn t(&self) -> f64 {
        self.world.t
    }

    fn region_obstacles(&self) -> Vec<UnsafeRegion> {
        let t = self.t();
        let ground = self.sc.ground();
        let mut out = self.statics.clone();
        for r in &self.regions {
            let b = r.bounds(t);
            out.push(UnsafeRegion {
                bounds: b,
                semantic_class: r.class.clone(),
                buffer: r.buffer,
                is_dynamic: r.is_dynamic,
                created_at: r.available_at,
            });
            if r.z_floor > ground {
                let reach = r.buffer + self.sc.tuning.floor_margin;
                let floor = AxisBox {
                    lo: [b.lo[0] - reach, b.lo[1] - reach, ground - 1.0],
                    hi: [b.hi[0] + reach, b.hi[1] + reach, r.z_floor],
                };
                out.push(UnsafeRegion {
                    bounds: floor,
                    semantic_class: format!("{} floor", r.class),
                    buffer: 0.0,
                    is_dynamic: r.is_dynamic,
                    created_at: r.available_at,
                });
            }
        }
        out
    }

    /// Capture a caption (or detections). Returns whether the unsafe set
    /// changed immediately, which only happens without a reasoner.
    fn perceive(&mut self) -> bool {
        let t = self.t();
        let sightings = visible_entities(self.sc, &self.world);
        let Some(backend) = self.backend.as_mut() else {
            // geometric detection: every visible agent, replaced each capture
            let had = !self.regions.is_empty();
            self.regions.clear();
            for s in &sightings {
                if let EntityRef::Agent(i) = s.entity {
                    let a = &self.world.agents[i];
                    self.regions.push(Region {
                        key: RegionKey::Agent(i),
                        class: a.class.clone(),
                        base: a.footprint(),
                        velocity: Vector3::zeros(),
                        observed_at: t,
                        expires_at: t + self.sc.perception_period + EPS_T,
                        buffer: self.sc.tuning.baseline_inflation,
                        is_dynamic: true,
                        z_floor: self.sc.ground(),
                        capture_time: t,
                        available_at: t,
                    });
                }
            }
            return had || !self.regions.is_empty();
        };
        let caption = generate_caption(self.sc, &self.world);
        let deadline = Duration::from_secs_f64(self.pipeline.deadline_s);
        let limits = &self.pipeline.limits;
        let spec = if self.pipeline.variant == Variant::NoisyReasoner {
            semantics::infer_safety_strict(self.kb, &caption, backend.as_mut(), deadline, limits)
                .ok()
        } else {
            Some(semantics::infer_safety(
                self.kb,
                &caption,
                backend.as_mut(),
                deadline,
                limits,
            ))
        };
        if let Some(s) = &spec {
            self.spec_log.push(s.clone());
        }
        let agent = sightings
            .iter()
            .filter_map(|s| match s.entity {
                EntityRef::Agent(i) => Some((i, s.angle)),
                EntityRef::Static(_) => None,
            })
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .map(|(i, _)| i);
        let axis = camera_axis(&self.world.uav, &self.sc.camera);
        let reach = if axis.z < -1e-6 {
            ((self.world.uav.p.z - self.sc.ground()) / -axis.z).min(self.sc.camera.range_m)
        } else {
            self.sc.camera.range_m
        };
        let mut aim = self.world.uav.p + axis * reach;
        aim.z = self.sc.ground() + PHANTOM_HALF[2];
        self.pending.push_back(Pending {
            capture_time: t,
            available_at: t + self.latency,
            spec,
            agent,
            agent_box_at_capture: agent.map(|i| self.world.agents[i].footprint()),
            nearest_static: sightings.iter().find_map(|s| match s.entity {
                EntityRef::Static(j) => Some(j),
                EntityRef::Agent(_) => None,
            }),
            aim,
        });
        false
    }

    /// Apply specs that have become available. Returns whether the unsafe
    /// set changed.
    fn apply_pending(&mut self) -> bool {
        let t = self.t();
        let mut changed = false;
        while self
            .pending
            .front()
            .is_some_and(|p| p.available_at <= t + EPS_T)
        {
            let p = self.pending.pop_front().expect("front checked");
            let Some(spec) = p.spec else { continue };
            let buffer = spec.buffer_radius.min(self.sc.tuning.buffer_cap);
            let expires_at = t + self.sc.tuning.expiry_periods * self.sc.perception_period;
            let (key, base, velocity, class) = match (spec.is_dynamic, p.agent) {
                (true, Some(i)) => {
                    let a = &self.world.agents[i];
                    (RegionKey::Agent(i), a.footprint(), a.v, a.class.clone())
                }
                (true, None) if p.nearest_static.is_some() => {
                    let j = p.nearest_static.expect("guarded");
                    (
                        RegionKey::Static(j),
                        self.sc.static_obstacles[j].bounds,
                        Vector3::zeros(),
                        spec.matched_class.clone(),
                    )
                }
                (true, None) => {
                    self.phantom_count += 1;
                    (
                        RegionKey::Phantom(self.phantom_count),
                        AxisBox::from_center(&p.aim, &PHANTOM_HALF),
                        Vector3::zeros(),
                        spec.matched_class.clone(),
                    )
                }
                (false, Some(i)) => (
                    RegionKey::Agent(i),
                    p.agent_box_at_capture.expect("set with agent"),
                    Vector3::zeros(),
                    spec.matched_class.clone(),
                ),
                (false, None) => continue,
            };
            self.regions.retain(|r| r.key != key);
            self.regions.push(Region {
                key,
                class,
                base,
                velocity,
                observed_at: t,
                expires_at,
                buffer,
                is_dynamic: spec.is_dynamic,
                z_floor: spec.z_min + self.sc.ground(),
                capture_time: p.capture_time,
                available_at: p.available_at,
            });
            changed = true;
        }
        changed
    }

    fn expire(&mut self) -> bool {
        let t = self.t();
        let before = self.regions.len();
        self.regions.retain(|r| r.expires_at > t + EPS_T);
        self.regions.len() != before
    }

    fn escape_point(&self, p: &Vector3<f64>, boxes: &[AxisBox]) -> Option<Vector3<f64>> {
        let world = &self.sc.world_bounds;
        let mut frontier = vec![*p];
        let mut best: Option<(f64, Vector3<f64>)> = None;
        for _ in 0..3 {
            let mut next = Vec::new();
            for q in &frontier {
                for b in boxes.iter().filter(|b| b.interior_contains(q)) {
                    for d in 0..3 {
                        for (edge, sign) in [(b.lo[d], -1.0), (b.hi[d], 1.0)] {
                            let mut c = *q;
                            c[d] = edge + sign * ESCAPE_MARGIN;
                            if !world.contains(&c) {
                                continue;
                            }
                            if is_free(&c, boxes) {
                                let d = c - p;
                                let dist = d.z.abs() + ESCAPE_SIDEWAYS_WEIGHT * d.xy().norm();
                                if best.is_none_or(|(bd, _)| dist < bd) {
                                    best = Some((dist, c));
                                }
                            } else {
                                next.push(c);
                            }
                        }
                    }
                }
            }
            if best.is_some() || next.is_empty() {
                break;
            }
            frontier = next;
        }
        best.map(|(_, c)| c)
    }

    /// Where to wait when no plan exists: straight up, clear of the tops of
    /// nearby unsafe boxes.
    fn wait_guidance(&self, p: &Vector3<f64>, boxes: &[AxisBox]) -> Guidance {
        let world = &self.sc.world_bounds;
        let mut z = p.z;
        for b in boxes {
            let near = (0..2).all(|d| p[d] >= b.lo[d] - WAIT_REACH && p[d] <= b.hi[d] + WAIT_REACH);
            if near {
                z = z.max(b.hi[2] + ESCAPE_MARGIN);
            }
        }
        let z = z.min(world.hi[2] - ESCAPE_MARGIN);
        let to = Vector3::new(p.x, p.y, z);
        if z > p.z + 1e-3 && is_free(&to, boxes) {
            Guidance::Escape {
                from: *p,
                to,
                t0: self.t(),
            }
        } else {
            Guidance::Hold { p: *p }
        }
    }

    fn replan(&mut self, initial: bool) -> Result<(), SimError> {
        let t = self.t();
        let obstacles = self.region_obstacles();
        let boxes: Vec<AxisBox> = obstacles.iter().map(UnsafeRegion::inflated).collect();
        let p = self.world.uav.p;
        if !initial {
            self.replans += 1;
        }
        if !is_free(&p, &boxes) {
            self.guidance = match self.escape_point(&p, &boxes) {
                Some(to) => Guidance::Escape { from: p, to, t0: t },
                None => Guidance::Hold { p },
            };
            return Ok(());
        }
        let start = StartState {
            p,
            v: self.world.uav.v,
        };
        let target = self.sc.target();
        let planner = &self.sc.tuning.planner;
        let dist = (target - p).norm();
        // long approaches go through an intermediate goal on the straight
        // line, since search effort grows quickly with distance
        let staged = (dist > STAGE_LEN + 1.0)
            .then(|| p + (target - p) * (STAGE_LEN / dist))
            .filter(|g| is_free(g, &boxes))
            .and_then(|g| search::plan(&start, &g, &self.sc.corridor, &obstacles, planner).ok());
        let result = match staged {
            Some(traj) => Ok((traj, true)),
            None => search::plan(&start, &target, &self.sc.corridor, &obstacles, planner)
                .map(|traj| (traj, false)),
        };
        match result {
            Ok((traj, staged)) => {
                self.guidance = Guidance::Track {
                    traj,
                    t0: t,
                    staged,
                }
            }
            Err(e) if initial => return Err(SimError::ScenarioInfeasible(e.to_string())),
            Err(SearchError::Config(m)) => return Err(SimError::InvalidScenario(m)),
            Err(_) => self.guidance = self.wait_guidance(&p, &boxes),
        }
        Ok(())
    }

    fn mode(&self) -> Mode {
        match self.guidance {
            Guidance::Track { .. } => Mode::Track,
            Guidance::Hold { .. } => Mode::Hold,
            Guidance::Escape { .. } => Mode::Escape,
        }
    }

    fn window(&self) -> Vec<RefPoint> {
        let n = self.sc.tuning.mpc.horizon;
        let dt = self.sc.tuning.dt;
        let yaw = self.sc.tuning.planner.yaw_ref;
        let t = self.t();
        let sink = self.sc.target() - Vector3::new(0.0, 0.0, TOUCHDOWN_SINK);
        (0..=n)
            .map(|k| {
                let tk = t + k as f64 * dt;
                let p = match &self.guidance {
                    Guidance::Track { traj, t0, staged } => {
                        let i = ((tk - t0) / self.sc.tuning.planner.sample_dt)
                            .round()
                            .max(0.0) as usize;
                        let end = if *staged {
                            traj.final_position().unwrap_or(sink)
                        } else {
                            sink
                        };
                        traj.samples.get(i).map(|s| s.p).unwrap_or(end)
                    }
                    Guidance::Hold { p } => *p,
                    Guidance::Escape { from, to, t0 } => {
                        let len = (to - from).norm();
                        let s = if len > 0.0 {
                            ((tk - t0) * ESCAPE_SPEED / len).min(1.0)
                        } else {
                            1.0
                        };
                        from + (to - from) * s
                    }
                };
                RefPoint { p, yaw }
            })
            .collect()
    }

    fn clamp_world(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.sc.world_bounds.closest_point(p)
    }

    fn free_box(&self, p: &Vector3<f64>, boxes: &[AxisBox]) -> Option<AxisBox> {
        self.sc
            .corridor
            .boxes
            .iter()
            .filter(|c| c.contains(p))
            .filter_map(|c| free_box_around(p, c, boxes))
            .max_by(|a, b| a.volume().total_cmp(&b.volume()))
    }

    /// Per-step position boxes: around each reference point while it is
    /// free, otherwise the previous step's box.
    fn step_boxes(&self, window: &[RefPoint], boxes: &[AxisBox]) -> Option<Vec<AxisBox>> {
        let first_anchor = match &self.guidance {
            Guidance::Escape { to, .. } => *to,
            _ => self.clamp_world(&self.world.uav.p),
        };
        let mut prev = self.free_box(&first_anchor, boxes)?;
        let mut out = Vec::with_capacity(window.len());
        out.push(prev);
        for r in &window[1..] {
            let anchor = self.clamp_world(&r.p);
            if is_free(&anchor, boxes) {
                if let Some(b) = self.free_box(&anchor, boxes) {
                    prev = b;
                }
            }
            out.push(prev);
        }
        Some(out)
    }

    fn reference_invalid(&self, window: &[RefPoint], boxes: &[AxisBox]) -> bool {
        match &self.guidance {
            Guidance::Track { .. } => window[1..]
                .iter()
                .any(|r| !is_free(&self.clamp_world(&r.p), boxes)),
            Guidance::Hold { p } => !is_free(p, boxes),
            Guidance::Escape { to, .. } => !is_free(to, boxes),
        }
    }

    fn control(
        &mut self,
        window: &[RefPoint],
        steps: &[AxisBox],
    ) -> (ControlInput, Option<MpcStatus>, bool) {
        let polys: Vec<_> = steps.iter().map(box_to_polytope).collect();
        let tuning = &self.sc.tuning;
        let mut cfg = tuning.mpc.clone();
        cfg.slack_mode = matches!(self.guidance, Guidance::Escape { .. });
        let backup = recovery_input(
            &self.world.uav,
            &self.clamp_world(&window[1].p),
            tuning.planner.yaw_ref,
            &tuning.model,
        );
        let attempt = |cfg: &mpc::MpcConfig, prev: Option<&MpcSolution>| {
            mpc::track_step(
                prev,
                &self.world.uav,
                window,
                &polys,
                &tuning.model,
                &tuning.state_bounds,
                cfg,
            )
            .ok()
        };
        let mut out = attempt(&cfg, self.prev_sol.as_ref());
        let mut replan = false;
        if out.as_ref().is_none_or(|o| o.replan) && !cfg.slack_mode {
            replan = true;
            cfg.slack_mode = true;
            out = attempt(&cfg, None);
        }
        match out {
            Some(o) if !o.replan => {
                let status = o.sol.status;
                self.prev_sol = Some(o.sol);
                (o.u0, Some(status), replan)
            }
            Some(o) => {
                self.prev_sol = None;
                (backup, Some(o.sol.status), true)
            }
            None => {
                self.prev_sol = None;
                (backup, None, true)
            }
        }
    }

    fn active_specs(&self) -> Vec<ActiveSpec> {
        self.regions
            .iter()
            .map(|r| ActiveSpec {
                class: r.class.clone(),
                is_dynamic: r.is_dynamic,
                z_min: r.z_floor - self.sc.ground(),
                buffer: r.buffer,
                capture_time: r.capture_time,
                available_at: r.available_at,
            })
            .collect()
    }

    fn record(
        &mut self,
        input: ControlInput,
        reference: Vector3<f64>,
        steps: &[AxisBox],
        boxes: Vec<AxisBox>,
        status: Option<MpcStatus>,
    ) {
        let mut polytopes: Vec<AxisBox> = Vec::new();
        for b in steps.iter().skip(1) {
            if polytopes.last() != Some(b) {
                polytopes.push(*b);
            }
        }
        self.trace.push(TraceRecord {
            t: self.t(),
            state: self.world.uav,
            input,
            mode: self.mode(),
            reference,
            polytopes,
            unsafe_boxes: boxes,
            specs: self.active_specs(),
            agents: self.world.agents.iter().map(|a| a.p).collect(),
            mpc_status: status,
        });
    }

    fn terminal(&self) -> bool {
        let s = &self.world.uav;
        let touchdown = s.p.z <= self.sc.ground() + super::TOUCHDOWN_HEIGHT
            && s.v.norm() <= super::TOUCHDOWN_SPEED;
        let collision = self
            .world
            .agents
            .iter()
            .any(|a| a.footprint().contains(&s.p))
            || self
                .sc
                .static_obstacles
                .iter()
                .any(|o| o.bounds.contains(&s.p));
        touchdown || collision || self.t() >= self.sc.trial_timeout - EPS_T
    }

    fn tick(&mut self) -> Result<(), SimError> {
        let mut changed = false;
        let mut capture_tick = false;
        if self.t() + EPS_T >= self.next_capture {
            changed |= self.perceive();
            self.next_capture += self.sc.perception_period;
            capture_tick = true;
        }
        changed |= self.apply_pending();
        changed |= self.expire();

        let semantic: Vec<AxisBox> = self.region_obstacles()[self.statics.len()..]
            .iter()
            .map(UnsafeRegion::inflated)
            .collect();
        let all: Vec<AxisBox> = self
            .statics
            .iter()
            .map(UnsafeRegion::inflated)
            .chain(semantic.iter().copied())
            .collect();

        let stage_done = match &self.guidance {
            Guidance::Track {
                traj,
                t0,
                staged: true,
            } => self.t() >= t0 + traj.duration() - EPS_T,
            _ => false,
        };
        let stalled =
            stage_done || (capture_tick && !matches!(self.guidance, Guidance::Track { .. }));
        let mut window = self.window();
        if changed
            || stalled
            || self.reference_invalid(&window, &all)
            || !is_free(&self.world.uav.p, &all)
        {
            self.replan(false)?;
            window = self.window();
        }
        let steps = match self.step_boxes(&window, &all) {
            Some(s) => s,
            None => {
                // boxed in with no free anchor: fall back and retry next tick
                let tuning = &self.sc.tuning;
                let u = recovery_input(
                    &self.world.uav,
                    &self.clamp_world(&window[1].p),
                    tuning.planner.yaw_ref,
                    &tuning.model,
                );
                self.record(u, window[1].p, &[], semantic, None);
                self.world.u_last = u;
                return Ok(());
            }
        };
        let (u, status, want_replan) = self.control(&window, &steps);
        self.record(u, window[1].p, &steps, semantic, status);
        self.world.u_last = u;
        if want_replan {
            self.replan(false)?;
        }
        Ok(())
    }
}

/// Run one trial of `scenario` (seeded by `scenario.seed`) with `pipeline`.
pub fn run_trial(
    scenario: &Scenario,
    pipeline: &Pipeline,
    kb: &KnowledgeBase,
) -> Result<TrialRun, SimError> {
    scenario.validate()?;
    let seed = scenario.seed;
    let statics = scenario
        .static_obstacles
        .iter()
        .map(|o| UnsafeRegion {
            bounds: o.bounds,
            semantic_class: o.class.clone(),
            buffer: scenario.tuning.static_margin,
            is_dynamic: false,
            created_at: 0.0,
        })
        .collect();
    let mut trial = Trial {
        sc: scenario,
        pipeline,
        kb,
        backend: make_backend(pipeline, seed)?,
        world: World::new(scenario),
        latency: pipeline.effective_latency(scenario),
        pending: VecDeque::new(),
        regions: Vec::new(),
        statics,
        guidance: Guidance::Hold {
            p: scenario.start.p,
        },
        prev_sol: None,
        next_capture: 0.0,
        phantom_count: 0,
        replans: 0,
        spec_log: Vec::new(),
        trace: Vec::new(),
    };
    trial.replan(true)?;
    let dt = scenario.tuning.dt;
    while !trial.terminal() {
        trial.tick()?;
        step_world(&mut trial.world, dt);
    }
    let last_u = trial.world.u_last;
    let window = trial.window();
    trial.record(last_u, window[0].p, &[], Vec::new(), None);

    let Outcome {
        success,
        close_call,
        collision,
        touched_down,
        touchdown_error,
        min_agent_distance,
    } = classify_outcome(&trial.trace, scenario);
    Ok(TrialRun {
        result: TrialResult {
            seed,
            variant: pipeline.variant,
            success,
            close_call,
            collision,
            touched_down,
            touchdown_error,
            duration: trial.world.t,
            min_agent_distance,
            replan_count: trial.replans,
            spec_log: trial.spec_log,
            trace_path: None,
        },
        trace: trial.trace,
    })
}
