//! Kinodynamic best-first search over double-integrator motion primitives.
//!
//! Nodes carry position and velocity; each expansion applies one of the 27
//! per-axis accelerations in `{-a_max, 0, +a_max}` for `tau` seconds. Node
//! cost accumulates `(|a|^2 + rho) * tau`, and the queue is ordered by
//! `g + h0 + lambda * penalty`, where the penalty is the squared distance to
//! the safe part of the corridor.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap};

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{self, AxisBox, Corridor, UnsafeRegion};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SearchError {
    #[error("no path found after {expansions} expansions")]
    NoPath { expansions: usize },
    #[error("start lies inside an inflated unsafe region")]
    StartBlocked,
    #[error("goal lies inside an inflated unsafe region")]
    GoalBlocked,
    #[error("{0} lies outside the corridor")]
    OutsideCorridor(&'static str),
    #[error("invalid planner config: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlannerConfig {
    pub a_max: f64,
    pub v_max: f64,
    pub tau: f64,
    pub rho: f64,
    pub lambda: f64,
    pub eps: f64,
    pub goal_tol: f64,
    /// Largest speed accepted at the goal.
    pub goal_speed_tol: f64,
    pub max_expansions: usize,
    pub clearance_radius: f64,
    /// The penalty's zero set excludes unsafe boxes grown by this margin.
    pub penalty_margin: f64,
    /// Reference sample period, also the chord length of collision checks.
    pub sample_dt: f64,
    pub dedup_pos: f64,
    pub dedup_vel: f64,
    pub yaw_ref: f64,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        Self {
            a_max: 2.0,
            v_max: 2.0,
            tau: 0.4,
            rho: 10.0,
            lambda: 1.0,
            eps: 1e-3,
            goal_tol: 0.2,
            goal_speed_tol: 1.0,
            max_expansions: 20_000,
            clearance_radius: 0.4,
            penalty_margin: 0.5,
            sample_dt: 0.05,
            dedup_pos: 0.1,
            dedup_vel: 0.2,
            yaw_ref: 0.0,
        }
    }
}

impl PlannerConfig {
    pub fn validate(&self) -> Result<(), SearchError> {
        let positive = [
            ("a_max", self.a_max),
            ("v_max", self.v_max),
            ("tau", self.tau),
            ("rho", self.rho),
            ("eps", self.eps),
            ("goal_tol", self.goal_tol),
            ("goal_speed_tol", self.goal_speed_tol),
            ("sample_dt", self.sample_dt),
            ("dedup_pos", self.dedup_pos),
            ("dedup_vel", self.dedup_vel),
        ];
        for (name, v) in positive {
            if !(v > 0.0) {
                return Err(SearchError::Config(format!("{name} must be positive")));
            }
        }
        if self.lambda < 0.0 || self.clearance_radius < 0.0 || self.penalty_margin < 0.0 {
            return Err(SearchError::Config(
                "lambda, clearance_radius and penalty_margin must be >= 0".into(),
            ));
        }
        if self.max_expansions == 0 {
            return Err(SearchError::Config(
                "max_expansions must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// One constant-acceleration segment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Primitive {
    pub p0: Vector3<f64>,
    pub v0: Vector3<f64>,
    pub accel: Vector3<f64>,
    pub duration: f64,
}

impl Primitive {
    pub fn position(&self, t: f64) -> Vector3<f64> {
        self.p0 + self.v0 * t + self.accel * (0.5 * t * t)
    }

    pub fn velocity(&self, t: f64) -> Vector3<f64> {
        self.v0 + self.accel * t
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RefSample {
    pub t: f64,
    pub p: Vector3<f64>,
    pub yaw: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceTrajectory {
    pub samples: Vec<RefSample>,
    /// Corridor box assigned to each sample.
    pub boxes: Vec<AxisBox>,
    pub primitives: Vec<Primitive>,
    pub cost: f64,
}

impl ReferenceTrajectory {
    pub fn duration(&self) -> f64 {
        self.samples.last().map_or(0.0, |s| s.t)
    }

    pub fn final_position(&self) -> Option<Vector3<f64>> {
        self.samples.last().map(|s| s.p)
    }

    /// Whether any chord between consecutive samples touches one of `boxes`.
    pub fn intersects_any(&self, boxes: &[AxisBox]) -> bool {
        if self.samples.len() == 1 {
            return boxes.iter().any(|b| b.contains(&self.samples[0].p));
        }
        self.samples.windows(2).any(|w| {
            boxes
                .iter()
                .any(|b| geometry::segment_intersects_box(&w[0].p, &w[1].p, b))
        })
    }
}

/// Start condition for [`plan`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StartState {
    pub p: Vector3<f64>,
    pub v: Vector3<f64>,
}

/// Self-contained planning query, as read by the `plan` subcommand.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanRequest {
    pub start: StartState,
    pub goal: Vector3<f64>,
    pub corridor: Corridor,
    #[serde(default)]
    pub unsafe_regions: Vec<UnsafeRegion>,
    #[serde(default)]
    pub config: PlannerConfig,
}

pub fn plan_request(req: &PlanRequest) -> Result<ReferenceTrajectory, SearchError> {
    plan(
        &req.start,
        &req.goal,
        &req.corridor,
        &req.unsafe_regions,
        &req.config,
    )
}

/// Admissible remaining-cost estimate: minimal time at top speed times rho.
pub fn h0(p: &Vector3<f64>, _v: &Vector3<f64>, goal: &Vector3<f64>, cfg: &PlannerConfig) -> f64 {
    cfg.rho * (p - goal).norm() / cfg.v_max
}

/// Sample a primitive chain every `dt` seconds with the closed-form
/// double-integrator solution. Yaw is held at `yaw`.
pub fn densify(path: &[Primitive], start: &Vector3<f64>, dt: f64, yaw: f64) -> Vec<RefSample> {
    let total: f64 = path.iter().map(|p| p.duration).sum();
    if path.is_empty() || total <= 0.0 {
        return vec![RefSample {
            t: 0.0,
            p: *start,
            yaw,
        }];
    }
    let count = (total / dt - 1e-9).ceil() as usize + 1;
    let mut out = Vec::with_capacity(count);
    let mut seg = 0;
    let mut seg_start = 0.0;
    for k in 0..count {
        let t = (k as f64 * dt).min(total);
        while seg + 1 < path.len() && t > seg_start + path[seg].duration + 1e-12 {
            seg_start += path[seg].duration;
            seg += 1;
        }
        let local = (t - seg_start).clamp(0.0, path[seg].duration);
        out.push(RefSample {
            t,
            p: path[seg].position(local),
            yaw,
        });
    }
    out
}

#[derive(Debug, Clone, Copy)]
struct Node {
    p: Vector3<f64>,
    v: Vector3<f64>,
    g: f64,
    parent: Option<usize>,
    accel: Vector3<f64>,
}

#[derive(Debug, Clone, Copy)]
struct QueueEntry {
    f: f64,
    g: f64,
    counter: u64,
    node: usize,
}

impl PartialEq for QueueEntry {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for QueueEntry {}
impl PartialOrd for QueueEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for QueueEntry {
    // Reversed: BinaryHeap is a max-heap and we pop the smallest (f, g, counter).
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .f
            .total_cmp(&self.f)
            .then_with(|| other.g.total_cmp(&self.g))
            .then_with(|| other.counter.cmp(&self.counter))
    }
}

type CellKey = [i64; 6];

fn cell_key(p: &Vector3<f64>, v: &Vector3<f64>, cfg: &PlannerConfig) -> CellKey {
    let q = |x: f64, r: f64| (x / r).floor() as i64;
    [
        q(p.x, cfg.dedup_pos),
        q(p.y, cfg.dedup_pos),
        q(p.z, cfg.dedup_pos),
        q(v.x, cfg.dedup_vel),
        q(v.y, cfg.dedup_vel),
        q(v.z, cfg.dedup_vel),
    ]
}

struct Obstacle {
    bounds: AxisBox,
    /// Clearance cubes inside which this obstacle is ignored.
    exempt: Vec<AxisBox>,
}

/// Plan a reference trajectory from `start` to `goal` inside `corridor`,
/// avoiding every inflated unsafe region.
pub fn plan(
    start: &StartState,
    goal: &Vector3<f64>,
    corridor: &Corridor,
    unsafe_regions: &[UnsafeRegion],
    cfg: &PlannerConfig,
) -> Result<ReferenceTrajectory, SearchError> {
    cfg.validate()?;
    if !corridor.contains(&start.p) {
        return Err(SearchError::OutsideCorridor("start"));
    }
    if !corridor.contains(goal) {
        return Err(SearchError::OutsideCorridor("goal"));
    }

    let inflated: Vec<AxisBox> = unsafe_regions.iter().map(geometry::inflate).collect();
    let start_clear = AxisBox::from_center(&start.p, &[cfg.clearance_radius; 3]);
    let goal_clear = AxisBox::from_center(goal, &[cfg.clearance_radius; 3]);

    let mut obstacles = Vec::with_capacity(inflated.len());
    for b in &inflated {
        let mut exempt = Vec::new();
        for (pt, clear, err) in [
            (&start.p, start_clear, SearchError::StartBlocked),
            (goal, goal_clear, SearchError::GoalBlocked),
        ] {
            if b.interior_contains(pt) {
                let deep = b.grown(-cfg.clearance_radius);
                if deep.is_valid() && deep.contains(pt) {
                    return Err(err);
                }
                exempt.push(clear);
            }
        }
        obstacles.push(Obstacle { bounds: *b, exempt });
    }

    let grown: Vec<AxisBox> = inflated
        .iter()
        .map(|b| b.grown(cfg.penalty_margin))
        .collect();
    let safe_boxes = geometry::carve_all(&corridor.boxes, &grown);
    let clearances = [start_clear, goal_clear];
    let penalty = |p: &Vector3<f64>| {
        if cfg.lambda == 0.0 || safe_boxes.is_empty() {
            0.0
        } else {
            cfg.lambda * geometry::penalty(p, &safe_boxes, &clearances, cfg.eps)
        }
    };

    let is_goal = |p: &Vector3<f64>, v: &Vector3<f64>| {
        (p - goal).norm() <= cfg.goal_tol && v.norm() <= cfg.goal_speed_tol
    };

    let mut nodes = vec![Node {
        p: start.p,
        v: start.v,
        g: 0.0,
        parent: None,
        accel: Vector3::zeros(),
    }];
    let mut heap = BinaryHeap::new();
    let mut counter = 0u64;
    heap.push(QueueEntry {
        f: h0(&start.p, &start.v, goal, cfg) + penalty(&start.p),
        g: 0.0,
        counter,
        node: 0,
    });
    let mut best_g: HashMap<CellKey, f64> = HashMap::new();
    best_g.insert(cell_key(&start.p, &start.v, cfg), 0.0);
    let mut closed: HashMap<CellKey, ()> = HashMap::new();

    let levels = [-cfg.a_max, 0.0, cfg.a_max];
    let chords = ((cfg.tau / cfg.sample_dt) - 1e-9).ceil().max(1.0) as usize;
    let chord_dt = cfg.tau / chords as f64;
    // Max deviation of the parabola from its chords.
    let arc_slack = cfg.a_max * 3f64.sqrt() * chord_dt * chord_dt / 8.0 + 1e-9;

    let mut expansions = 0usize;
    while let Some(entry) = heap.pop() {
        let node = nodes[entry.node];
        if is_goal(&node.p, &node.v) {
            return Ok(build_trajectory(
                &nodes, entry.node, start, corridor, &inflated, cfg,
            ));
        }
        let key = cell_key(&node.p, &node.v, cfg);
        if closed.insert(key, ()).is_some() {
            continue;
        }
        expansions += 1;
        if expansions > cfg.max_expansions {
            break;
        }
        for ax in levels {
            for ay in levels {
                for az in levels {
                    let accel = Vector3::new(ax, ay, az);
                    let prim = Primitive {
                        p0: node.p,
                        v0: node.v,
                        accel,
                        duration: cfg.tau,
                    };
                    let v1 = prim.velocity(cfg.tau);
                    if v1.norm() > cfg.v_max + 1e-9 {
                        continue;
                    }
                    let p1 = prim.position(cfg.tau);
                    if !primitive_is_free(&prim, chords, chord_dt, arc_slack, corridor, &obstacles)
                    {
                        continue;
                    }
                    let g = node.g + (accel.norm_squared() + cfg.rho) * cfg.tau;
                    let child_key = cell_key(&p1, &v1, cfg);
                    if closed.contains_key(&child_key) {
                        continue;
                    }
                    if best_g.get(&child_key).is_some_and(|&old| old <= g) {
                        continue;
                    }
                    best_g.insert(child_key, g);
                    nodes.push(Node {
                        p: p1,
                        v: v1,
                        g,
                        parent: Some(entry.node),
                        accel,
                    });
                    counter += 1;
                    heap.push(QueueEntry {
                        f: g + h0(&p1, &v1, goal, cfg) + penalty(&p1),
                        g,
                        counter,
                        node: nodes.len() - 1,
                    });
                }
            }
        }
    }
    Err(SearchError::NoPath { expansions })
}

fn primitive_is_free(
    prim: &Primitive,
    chords: usize,
    chord_dt: f64,
    arc_slack: f64,
    corridor: &Corridor,
    obstacles: &[Obstacle],
) -> bool {
    let mut prev = prim.p0;
    for i in 1..=chords {
        let next = prim.position(i as f64 * chord_dt);
        if !corridor.contains(&next) {
            return false;
        }
        for obs in obstacles {
            let exempt = obs
                .exempt
                .iter()
                .any(|c| c.contains(&prev) && c.contains(&next));
            if !exempt
                && geometry::segment_intersects_box(&prev, &next, &obs.bounds.grown(arc_slack))
            {
                return false;
            }
        }
        prev = next;
    }
    true
}

fn build_trajectory(
    nodes: &[Node],
    goal_idx: usize,
    start: &StartState,
    corridor: &Corridor,
    inflated: &[AxisBox],
    cfg: &PlannerConfig,
) -> ReferenceTrajectory {
    let mut chain = Vec::new();
    let mut idx = goal_idx;
    while let Some(parent) = nodes[idx].parent {
        let pn = &nodes[parent];
        chain.push(Primitive {
            p0: pn.p,
            v0: pn.v,
            accel: nodes[idx].accel,
            duration: cfg.tau,
        });
        idx = parent;
    }
    chain.reverse();
    let samples = densify(&chain, &start.p, cfg.sample_dt, cfg.yaw_ref);
    let boxes = assign_boxes(&samples, corridor, inflated);
    ReferenceTrajectory {
        samples,
        boxes,
        primitives: chain,
        cost: nodes[goal_idx].g,
    }
}

/// Per-sample safe box: the containing corridor box clipped away from every
/// unsafe box. Samples inside an exempted clearance zone borrow the next
/// sample's box.
pub fn assign_boxes(
    samples: &[RefSample],
    corridor: &Corridor,
    obstacles: &[AxisBox],
) -> Vec<AxisBox> {
    let mut boxes: Vec<Option<AxisBox>> = samples
        .iter()
        .map(|s| {
            corridor
                .boxes
                .iter()
                .filter(|b| b.contains(&s.p))
                .filter_map(|b| geometry::free_box_around(&s.p, b, obstacles))
                .max_by(|a, b| a.volume().total_cmp(&b.volume()))
        })
        .collect();
    let mut next: Option<AxisBox> = None;
    for b in boxes.iter_mut().rev() {
        match b {
            Some(found) => next = Some(*found),
            None => *b = next,
        }
    }
    let mut prev: Option<AxisBox> = None;
    boxes
        .into_iter()
        .zip(samples)
        .map(|(b, s)| {
            let out = b
                .or(prev)
                .unwrap_or_else(|| AxisBox::from_center(&s.p, &[0.0; 3]));
            prev = Some(out);
            out
        })
        .collect()
}
