//! Static SVG of a trial trace: top-down path on the left, altitude over
//! time on the right.
//!
//! The top-down view covers the square around every plotted point (UAV,
//! agents, unsafe boxes, target) padded by `PAD_M` on each side, centered on
//! that bounding box. World y points up. The altitude strip spans
//! `[0, t_end]` by `[0, z_top]` where `z_top` is the highest altitude or floor
//! plus `PAD_M`.

use std::fmt::Write;
use std::path::Path;

use nalgebra::Vector3;

use crate::geometry::AxisBox;
use crate::sim::{read_trace, SimError, TraceRecord, SUCCESS_RADIUS};

pub const WIDTH: f64 = 900.0;
pub const HEIGHT: f64 = 480.0;
/// Pixel frame of the top-down panel.
pub const MAP_FRAME: Frame = Frame {
    left: 40.0,
    top: 40.0,
    width: 400.0,
    height: 400.0,
};
/// Pixel frame of the altitude strip.
pub const STRIP_FRAME: Frame = Frame {
    left: 500.0,
    top: 40.0,
    width: 360.0,
    height: 400.0,
};
pub const PAD_M: f64 = 1.0;
/// Extent used when a trace has nothing to plot.
const EMPTY_HALF_M: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Frame {
    pub left: f64,
    pub top: f64,
    pub width: f64,
    pub height: f64,
}

/// Affine map from a data rectangle onto a pixel frame, y flipped.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transform {
    pub frame: Frame,
    pub x_min: f64,
    pub y_min: f64,
    pub sx: f64,
    pub sy: f64,
}

impl Transform {
    pub fn new(frame: Frame, x: [f64; 2], y: [f64; 2]) -> Self {
        Self {
            frame,
            x_min: x[0],
            y_min: y[0],
            sx: frame.width / (x[1] - x[0]),
            sy: frame.height / (y[1] - y[0]),
        }
    }

    pub fn apply(&self, x: f64, y: f64) -> (f64, f64) {
        (
            self.frame.left + (x - self.x_min) * self.sx,
            self.frame.top + self.frame.height - (y - self.y_min) * self.sy,
        )
    }
}

fn floor_at(r: &TraceRecord) -> f64 {
    r.specs.iter().map(|s| s.z_min).fold(0.0, f64::max)
}

fn target_of(trace: &[TraceRecord], target: Option<Vector3<f64>>) -> Option<Vector3<f64>> {
    target.or_else(|| trace.last().map(|r| r.reference))
}

/// Top-down transform for `trace`.
pub fn map_transform(trace: &[TraceRecord], target: Option<Vector3<f64>>) -> Transform {
    let mut pts: Vec<(f64, f64)> = Vec::new();
    for r in trace {
        pts.push((r.state.p.x, r.state.p.y));
        pts.extend(r.agents.iter().map(|a| (a.x, a.y)));
        for b in &r.unsafe_boxes {
            pts.push((b.lo[0], b.lo[1]));
            pts.push((b.hi[0], b.hi[1]));
        }
    }
    if let Some(t) = target_of(trace, target) {
        pts.push((t.x, t.y));
    }
    if pts.is_empty() {
        return Transform::new(
            MAP_FRAME,
            [-EMPTY_HALF_M, EMPTY_HALF_M],
            [-EMPTY_HALF_M, EMPTY_HALF_M],
        );
    }
    let (mut x0, mut x1, mut y0, mut y1) = (
        f64::INFINITY,
        f64::NEG_INFINITY,
        f64::INFINITY,
        f64::NEG_INFINITY,
    );
    for (x, y) in pts {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    let half = 0.5 * (x1 - x0).max(y1 - y0) + PAD_M;
    let (cx, cy) = (0.5 * (x0 + x1), 0.5 * (y0 + y1));
    Transform::new(MAP_FRAME, [cx - half, cx + half], [cy - half, cy + half])
}

/// Time/altitude transform for `trace`.
pub fn strip_transform(trace: &[TraceRecord]) -> Transform {
    let t_end = trace.last().map_or(0.0, |r| r.t).max(1.0);
    let z_top = trace
        .iter()
        .map(|r| r.state.p.z.max(floor_at(r)))
        .fold(0.0, f64::max)
        + PAD_M;
    Transform::new(STRIP_FRAME, [0.0, t_end], [0.0, z_top])
}

fn polyline(out: &mut String, pts: impl Iterator<Item = (f64, f64)>, style: &str) {
    let coords: Vec<String> = pts.map(|(x, y)| format!("{x:.2},{y:.2}")).collect();
    if !coords.is_empty() {
        let _ = writeln!(
            out,
            r#"<polyline class="{style}" points="{}"/>"#,
            coords.join(" ")
        );
    }
}

fn frame_axes(out: &mut String, f: &Frame, x_label: &str, y_label: &str) {
    let _ = writeln!(
        out,
        r#"<rect class="frame" x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}"/>"#,
        f.left, f.top, f.width, f.height
    );
    let _ = writeln!(
        out,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{x_label}</text>"#,
        f.left + 0.5 * f.width,
        f.top + f.height + 28.0
    );
    let _ = writeln!(
        out,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle" transform="rotate(-90 {:.2} {:.2})">{y_label}</text>"#,
        f.left - 14.0,
        f.top + 0.5 * f.height,
        f.left - 14.0,
        f.top + 0.5 * f.height
    );
}

fn tick_labels(out: &mut String, tr: &Transform, x: [f64; 2], y: [f64; 2]) {
    for (v, (px, py)) in [(x[0], tr.apply(x[0], y[0])), (x[1], tr.apply(x[1], y[0]))] {
        let _ = writeln!(
            out,
            r#"<text class="tick" x="{px:.2}" y="{:.2}" text-anchor="middle">{v:.1}</text>"#,
            py + 14.0
        );
    }
    for (v, (px, py)) in [(y[0], tr.apply(x[0], y[0])), (y[1], tr.apply(x[0], y[1]))] {
        let _ = writeln!(
            out,
            r#"<text class="tick" x="{:.2}" y="{py:.2}" text-anchor="end">{v:.1}</text>"#,
            px - 4.0
        );
    }
}

/// Distinct unsafe boxes over the trace, rounded to 0.1 m.
fn distinct_boxes(trace: &[TraceRecord]) -> Vec<AxisBox> {
    let key = |b: &AxisBox| -> [i64; 4] {
        [b.lo[0], b.lo[1], b.hi[0], b.hi[1]].map(|v| (v * 10.0).round() as i64)
    };
    let mut seen = std::collections::BTreeSet::new();
    let mut out = Vec::new();
    for r in trace {
        for b in &r.unsafe_boxes {
            if seen.insert(key(b)) {
                out.push(*b);
            }
        }
    }
    out
}

/// Render `trace` as an SVG 1.1 document. `target` defaults to the final
/// reference point.
pub fn render_svg(trace: &[TraceRecord], target: Option<Vector3<f64>>) -> String {
    let mut out = String::new();
    let _ = writeln!(out, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    );
    out.push_str(
        "<style>.frame{fill:none;stroke:#333}.unsafe{fill:#d62728;fill-opacity:0.08;stroke:#d62728;stroke-opacity:0.3}\
.uav{fill:none;stroke:#1f77b4;stroke-width:1.5}.agent{fill:none;stroke:#ff7f0e;stroke-dasharray:4 2}\
.target{fill:none;stroke:#2ca02c;stroke-width:1.5}.floor{fill:none;stroke:#d62728;stroke-dasharray:6 3}\
text{font-family:sans-serif;font-size:12px}.tick{font-size:10px}</style>\n",
    );

    let map = map_transform(trace, target);
    let f = map.frame;
    let x_range = [map.x_min, map.x_min + f.width / map.sx];
    let y_range = [map.y_min, map.y_min + f.height / map.sy];
    frame_axes(&mut out, &f, "x [m]", "y [m]");
    tick_labels(&mut out, &map, x_range, y_range);

    for b in distinct_boxes(trace) {
        let (x0, y1) = map.apply(b.lo[0], b.hi[1]);
        let (x1, y0) = map.apply(b.hi[0], b.lo[1]);
        let _ = writeln!(
            out,
            r#"<rect class="unsafe" x="{x0:.2}" y="{y1:.2}" width="{:.2}" height="{:.2}"/>"#,
            x1 - x0,
            y0 - y1
        );
    }
    let n_agents = trace.iter().map(|r| r.agents.len()).max().unwrap_or(0);
    for i in 0..n_agents {
        polyline(
            &mut out,
            trace
                .iter()
                .filter_map(|r| r.agents.get(i))
                .map(|a| map.apply(a.x, a.y)),
            "agent",
        );
    }
    polyline(
        &mut out,
        trace.iter().map(|r| map.apply(r.state.p.x, r.state.p.y)),
        "uav",
    );
    if let Some(t) = target_of(trace, target) {
        let (cx, cy) = map.apply(t.x, t.y);
        let _ = writeln!(
            out,
            r#"<circle class="target" cx="{cx:.2}" cy="{cy:.2}" r="{:.2}"/>"#,
            SUCCESS_RADIUS * map.sx
        );
    }

    let strip = strip_transform(trace);
    let f = strip.frame;
    frame_axes(&mut out, &f, "t [s]", "z [m]");
    tick_labels(
        &mut out,
        &strip,
        [0.0, f.width / strip.sx],
        [0.0, f.height / strip.sy],
    );
    polyline(
        &mut out,
        trace.iter().map(|r| strip.apply(r.t, floor_at(r))),
        "floor",
    );
    polyline(
        &mut out,
        trace.iter().map(|r| strip.apply(r.t, r.state.p.z)),
        "uav",
    );
    out.push_str("</svg>\n");
    out
}

/// Read a JSON-lines trace and write its SVG.
pub fn plot_trace(
    trace_path: &Path,
    out_path: &Path,
    target: Option<Vector3<f64>>,
) -> Result<(), SimError> {
    let trace = read_trace(trace_path)?;
    std::fs::write(out_path, render_svg(&trace, target))
        .map_err(|e| SimError::Io(format!("{}: {e}", out_path.display())))
}
