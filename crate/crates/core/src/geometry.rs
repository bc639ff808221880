//! Corridor geometry: half-space polytopes, axis-aligned boxes, unsafe-set
//! carving and the soft corridor penalty used by the search heuristic.

use nalgebra::{DMatrix, DVector, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Row-wise tolerance of [`Polytope::contains`].
pub const CONTAINS_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("unsafe box covers the whole corridor box")]
    FullyBlocked,
    #[error("invalid box: lo {lo:?} exceeds hi {hi:?}")]
    InvalidBox { lo: [f64; 3], hi: [f64; 3] },
    #[error("polytope has a zero normal in row {0}")]
    ZeroNormal(usize),
    #[error("polytope row count mismatch: {rows} normals, {offsets} offsets")]
    Shape { rows: usize, offsets: usize },
}

/// `{x : A x <= b}` with `A` of shape k x 3.
#[derive(Debug, Clone, PartialEq)]
pub struct Polytope {
    a: DMatrix<f64>,
    b: DVector<f64>,
}

impl Polytope {
    pub fn new(a: DMatrix<f64>, b: DVector<f64>) -> Result<Self, GeometryError> {
        if a.nrows() != b.len() || a.ncols() != 3 {
            return Err(GeometryError::Shape {
                rows: a.nrows(),
                offsets: b.len(),
            });
        }
        for (i, row) in a.row_iter().enumerate() {
            if row.iter().all(|c| *c == 0.0) {
                return Err(GeometryError::ZeroNormal(i));
            }
        }
        Ok(Self { a, b })
    }

    pub fn normals(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn offsets(&self) -> &DVector<f64> {
        &self.b
    }

    pub fn rows(&self) -> usize {
        self.b.len()
    }

    pub fn contains(&self, p: &Vector3<f64>) -> bool {
        (0..self.rows()).all(|i| self.row_value(i, p) <= self.b[i] + CONTAINS_TOL)
    }

    /// `a_i . p` for row `i`.
    pub fn row_value(&self, i: usize, p: &Vector3<f64>) -> f64 {
        self.a[(i, 0)] * p.x + self.a[(i, 1)] * p.y + self.a[(i, 2)] * p.z
    }

    /// Largest row violation `max_i (a_i . p - b_i)`, negative inside.
    pub fn max_violation(&self, p: &Vector3<f64>) -> f64 {
        (0..self.rows())
            .map(|i| self.row_value(i, p) - self.b[i])
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Closed axis-aligned box `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AxisBox {
    pub lo: [f64; 3],
    pub hi: [f64; 3],
}

impl AxisBox {
    pub fn new(lo: [f64; 3], hi: [f64; 3]) -> Result<Self, GeometryError> {
        if (0..3).any(|d| !(lo[d] <= hi[d])) {
            return Err(GeometryError::InvalidBox { lo, hi });
        }
        Ok(Self { lo, hi })
    }

    pub fn from_center(center: &Vector3<f64>, half: &[f64; 3]) -> Self {
        Self {
            lo: [center.x - half[0], center.y - half[1], center.z - half[2]],
            hi: [center.x + half[0], center.y + half[1], center.z + half[2]],
        }
    }

    pub fn is_valid(&self) -> bool {
        (0..3).all(|d| self.lo[d] <= self.hi[d])
    }

    pub fn center(&self) -> Vector3<f64> {
        Vector3::new(
            0.5 * (self.lo[0] + self.hi[0]),
            0.5 * (self.lo[1] + self.hi[1]),
            0.5 * (self.lo[2] + self.hi[2]),
        )
    }

    pub fn contains(&self, p: &Vector3<f64>) -> bool {
        (0..3).all(|d| p[d] >= self.lo[d] - CONTAINS_TOL && p[d] <= self.hi[d] + CONTAINS_TOL)
    }

    /// Strict interior test.
    pub fn interior_contains(&self, p: &Vector3<f64>) -> bool {
        (0..3).all(|d| p[d] > self.lo[d] && p[d] < self.hi[d])
    }

    /// Whether the interiors overlap.
    pub fn overlaps(&self, other: &AxisBox) -> bool {
        (0..3).all(|d| self.lo[d] < other.hi[d] && other.lo[d] < self.hi[d])
    }

    pub fn intersection(&self, other: &AxisBox) -> Option<AxisBox> {
        let mut out = *self;
        for d in 0..3 {
            out.lo[d] = self.lo[d].max(other.lo[d]);
            out.hi[d] = self.hi[d].min(other.hi[d]);
            if out.lo[d] > out.hi[d] {
                return None;
            }
        }
        Some(out)
    }

    /// Grow (or shrink, for negative `margin`) every face.
    pub fn grown(&self, margin: f64) -> AxisBox {
        AxisBox {
            lo: [
                self.lo[0] - margin,
                self.lo[1] - margin,
                self.lo[2] - margin,
            ],
            hi: [
                self.hi[0] + margin,
                self.hi[1] + margin,
                self.hi[2] + margin,
            ],
        }
    }

    pub fn volume(&self) -> f64 {
        (0..3).map(|d| (self.hi[d] - self.lo[d]).max(0.0)).product()
    }

    /// Closest point of the box to `p`.
    pub fn closest_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        Vector3::new(
            p.x.clamp(self.lo[0], self.hi[0]),
            p.y.clamp(self.lo[1], self.hi[1]),
            p.z.clamp(self.lo[2], self.hi[2]),
        )
    }

    pub fn squared_distance(&self, p: &Vector3<f64>) -> f64 {
        (p - self.closest_point(p)).norm_squared()
    }

    pub fn distance(&self, p: &Vector3<f64>) -> f64 {
        self.squared_distance(p).sqrt()
    }

    /// Horizontal (xy) distance from `p` to the box footprint.
    pub fn horizontal_distance(&self, p: &Vector3<f64>) -> f64 {
        let dx = (self.lo[0] - p.x).max(p.x - self.hi[0]).max(0.0);
        let dy = (self.lo[1] - p.y).max(p.y - self.hi[1]).max(0.0);
        dx.hypot(dy)
    }
}

/// Semantic unsafe region: a hazard box plus its safety buffer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnsafeRegion {
    #[serde(rename = "box")]
    pub bounds: AxisBox,
    pub semantic_class: String,
    pub buffer: f64,
    pub is_dynamic: bool,
    pub created_at: f64,
}

impl UnsafeRegion {
    pub fn inflated(&self) -> AxisBox {
        inflate(self)
    }
}

/// Ordered overlapping boxes from start to goal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Corridor {
    pub boxes: Vec<AxisBox>,
}

impl Corridor {
    pub fn single(b: AxisBox) -> Self {
        Self { boxes: vec![b] }
    }

    pub fn contains(&self, p: &Vector3<f64>) -> bool {
        self.boxes.iter().any(|b| b.contains(p))
    }

    /// Index of the first box containing `p`.
    pub fn box_index(&self, p: &Vector3<f64>) -> Option<usize> {
        self.boxes.iter().position(|b| b.contains(p))
    }

    /// Consecutive boxes must overlap with non-empty interior.
    pub fn is_connected(&self) -> bool {
        self.boxes.windows(2).all(|w| w[0].overlaps(&w[1]))
    }
}

pub fn contains(poly: &Polytope, p: &Vector3<f64>) -> bool {
    poly.contains(p)
}

/// Grow the region's box by its buffer on all six faces.
pub fn inflate(region: &UnsafeRegion) -> AxisBox {
    region.bounds.grown(region.buffer.max(0.0))
}

/// Axis-aligned difference `corridor_box \ unsafe` as at most six boxes with
/// pairwise disjoint interiors.
pub fn carve(corridor_box: &AxisBox, unsafe_box: &AxisBox) -> Result<Vec<AxisBox>, GeometryError> {
    let Some(inter) = corridor_box.intersection(unsafe_box) else {
        return Ok(vec![*corridor_box]);
    };
    if (0..3).all(|d| inter.lo[d] <= corridor_box.lo[d] && inter.hi[d] >= corridor_box.hi[d]) {
        return Err(GeometryError::FullyBlocked);
    }
    if !corridor_box.overlaps(unsafe_box) {
        // Touching faces only: nothing of the interior is removed.
        return Ok(vec![*corridor_box]);
    }
    let mut out = Vec::with_capacity(6);
    let mut rest = *corridor_box;
    for d in 0..3 {
        if rest.lo[d] < inter.lo[d] {
            let mut slab = rest;
            slab.hi[d] = inter.lo[d];
            out.push(slab);
        }
        if inter.hi[d] < rest.hi[d] {
            let mut slab = rest;
            slab.lo[d] = inter.hi[d];
            out.push(slab);
        }
        rest.lo[d] = inter.lo[d];
        rest.hi[d] = inter.hi[d];
    }
    Ok(out)
}

/// Carve every box of `boxes` by every obstacle. Fully blocked pieces drop out.
pub fn carve_all(boxes: &[AxisBox], obstacles: &[AxisBox]) -> Vec<AxisBox> {
    let mut pieces: Vec<AxisBox> = boxes.to_vec();
    for obs in obstacles {
        let mut next = Vec::with_capacity(pieces.len() + 4);
        for piece in &pieces {
            if let Ok(parts) = carve(piece, obs) {
                next.extend(parts);
            }
        }
        pieces = next;
    }
    pieces
}

/// Soft corridor penalty: zero inside any safe or clearance box, otherwise
/// the smallest per-box sum of squared axis violations plus `eps`.
pub fn penalty(p: &Vector3<f64>, safe_boxes: &[AxisBox], clearances: &[AxisBox], eps: f64) -> f64 {
    if clearances.iter().any(|b| b.contains(p)) {
        return 0.0;
    }
    let mut best = f64::INFINITY;
    for b in safe_boxes {
        let mut sum = 0.0;
        for d in 0..3 {
            if p[d] < b.lo[d] {
                sum += (p[d] - b.lo[d]).powi(2);
            } else if p[d] > b.hi[d] {
                sum += (p[d] - b.hi[d]).powi(2);
            }
        }
        if sum == 0.0 {
            return 0.0;
        }
        best = best.min(sum);
    }
    if best.is_finite() {
        best + eps
    } else {
        0.0
    }
}

/// Slab test on the closed segment `p0 -> p1` against the closed box.
pub fn segment_intersects_box(p0: &Vector3<f64>, p1: &Vector3<f64>, b: &AxisBox) -> bool {
    let dir = p1 - p0;
    let mut t0 = 0.0_f64;
    let mut t1 = 1.0_f64;
    for d in 0..3 {
        if dir[d].abs() < 1e-15 {
            if p0[d] < b.lo[d] || p0[d] > b.hi[d] {
                return false;
            }
        } else {
            let inv = 1.0 / dir[d];
            let mut ta = (b.lo[d] - p0[d]) * inv;
            let mut tb = (b.hi[d] - p0[d]) * inv;
            if ta > tb {
                std::mem::swap(&mut ta, &mut tb);
            }
            t0 = t0.max(ta);
            t1 = t1.min(tb);
            if t0 > t1 {
                return false;
            }
        }
    }
    true
}

/// Six half-spaces `+e_d . x <= hi_d`, `-e_d . x <= -lo_d`.
pub fn box_to_polytope(b: &AxisBox) -> Polytope {
    let mut a = DMatrix::zeros(6, 3);
    let mut off = DVector::zeros(6);
    for d in 0..3 {
        a[(d, d)] = 1.0;
        off[d] = b.hi[d];
        a[(d + 3, d)] = -1.0;
        off[d + 3] = -b.lo[d];
    }
    Polytope { a, b: off }
}

/// Largest sub-box of `container` around `p` that avoids every obstacle
/// interior, clipping each intersecting obstacle at the face `p` is furthest
/// outside of. `None` when `p` sits inside an obstacle or outside the
/// container.
pub fn free_box_around(
    p: &Vector3<f64>,
    container: &AxisBox,
    obstacles: &[AxisBox],
) -> Option<AxisBox> {
    if !container.contains(p) {
        return None;
    }
    let mut out = *container;
    for obs in obstacles {
        if !out.overlaps(obs) {
            continue;
        }
        // (separation, axis, upper side)
        let mut best: Option<(f64, usize, bool)> = None;
        for d in 0..3 {
            let below = obs.lo[d] - p[d];
            let above = p[d] - obs.hi[d];
            for (sep, upper) in [(below, false), (above, true)] {
                if best.is_none_or(|(s, _, _)| sep > s) {
                    best = Some((sep, d, upper));
                }
            }
        }
        let (sep, d, upper) = best?;
        if sep < -CONTAINS_TOL {
            return None;
        }
        if upper {
            out.lo[d] = out.lo[d].max(obs.hi[d]);
        } else {
            out.hi[d] = out.hi[d].min(obs.lo[d]);
        }
        if !out.is_valid() {
            return None;
        }
    }
    Some(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn unit() -> AxisBox {
        AxisBox::new([0.0; 3], [1.0; 3]).unwrap()
    }

    fn random_box(rng: &mut ChaCha8Rng, span: f64) -> AxisBox {
        let mut lo = [0.0; 3];
        let mut hi = [0.0; 3];
        for d in 0..3 {
            let a = rng.random_range(-span..span);
            let b = rng.random_range(-span..span);
            lo[d] = a.min(b);
            hi[d] = a.max(b);
        }
        AxisBox { lo, hi }
    }

    #[test]
    fn polytope_contains_basic() {
        let cube = box_to_polytope(&AxisBox::new([-1.0; 3], [1.0; 3]).unwrap());
        assert!(contains(&cube, &Vector3::zeros()));
        assert!(!contains(&cube, &Vector3::new(2.0, 0.0, 0.0)));
    }

    #[test]
    fn polytope_rejects_zero_row() {
        let a = DMatrix::from_row_slice(2, 3, &[1.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        let b = DVector::from_vec(vec![1.0, 1.0]);
        assert_eq!(Polytope::new(a, b), Err(GeometryError::ZeroNormal(1)));
    }

    #[test]
    fn polytope_matches_row_evaluation() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let k = rng.random_range(1..7);
            let a = DMatrix::from_fn(k, 3, |_, _| rng.random_range(-1.0..1.0));
            let b = DVector::from_fn(k, |_, _| rng.random_range(-1.0..1.0));
            let poly = Polytope::new(a.clone(), b.clone()).unwrap();
            let p = Vector3::new(
                rng.random_range(-2.0..2.0),
                rng.random_range(-2.0..2.0),
                rng.random_range(-2.0..2.0),
            );
            let mut inside = true;
            for i in 0..k {
                let s = a[(i, 0)] * p.x + a[(i, 1)] * p.y + a[(i, 2)] * p.z;
                inside &= s <= b[i] + 1e-9;
            }
            assert_eq!(poly.contains(&p), inside);
        }
    }

    #[test]
    fn inflate_by_buffers() {
        let region = UnsafeRegion {
            bounds: unit(),
            semantic_class: "pedestrian".into(),
            buffer: 3.0,
            is_dynamic: true,
            created_at: 0.0,
        };
        assert_eq!(inflate(&region), AxisBox::new([-3.0; 3], [4.0; 3]).unwrap());
        let still = UnsafeRegion {
            buffer: 0.0,
            ..region.clone()
        };
        assert_eq!(inflate(&still), unit());
        let vehicle = UnsafeRegion {
            buffer: 5.0,
            semantic_class: "vehicle".into(),
            ..region
        };
        let grown = inflate(&vehicle);
        for d in 0..3 {
            assert!((grown.hi[d] - grown.lo[d] - 11.0).abs() < 1e-12);
        }
    }

    #[test]
    fn carve_disjoint_and_blocked() {
        let far = AxisBox::new([5.0; 3], [6.0; 3]).unwrap();
        assert_eq!(carve(&unit(), &far).unwrap(), vec![unit()]);
        let big = AxisBox::new([-1.0; 3], [2.0; 3]).unwrap();
        assert_eq!(carve(&unit(), &big), Err(GeometryError::FullyBlocked));
    }

    #[test]
    fn carve_center_hole_gives_six_pieces() {
        let corridor = AxisBox::new([0.0; 3], [3.0; 3]).unwrap();
        let hole = AxisBox::new([1.0; 3], [2.0; 3]).unwrap();
        let parts = carve(&corridor, &hole).unwrap();
        assert_eq!(parts.len(), 6);
        let vol: f64 = parts.iter().map(AxisBox::volume).sum();
        assert!((vol - 26.0).abs() < 1e-12);
        for (i, a) in parts.iter().enumerate() {
            assert!(!a.overlaps(&hole));
            for b in &parts[i + 1..] {
                assert!(!a.overlaps(b));
            }
        }
    }

    #[test]
    fn carve_point_sampling_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let corridor = random_box(&mut rng, 3.0);
            let hole = random_box(&mut rng, 3.0);
            let Ok(parts) = carve(&corridor, &hole) else {
                continue;
            };
            for _ in 0..2000 {
                let p = Vector3::from_fn(|d, _| {
                    rng.random_range(corridor.lo[d] - 0.5..corridor.hi[d] + 0.5)
                });
                let expected = corridor.contains(&p) && !hole.interior_contains(&p);
                let got = parts.iter().any(|b| b.contains(&p));
                assert_eq!(got, expected, "p={p:?}");
            }
        }
    }

    #[test]
    fn penalty_cases() {
        let b = unit();
        assert_eq!(penalty(&Vector3::new(0.5, 0.5, 0.5), &[b], &[], 1e-3), 0.0);
        let p = Vector3::new(2.0, 0.5, 0.5);
        assert!((penalty(&p, &[b], &[], 1e-3) - 1.001).abs() < 1e-12);
        let clear = AxisBox::new([1.5, 0.0, 0.0], [2.5, 1.0, 1.0]).unwrap();
        assert_eq!(penalty(&p, &[b], &[clear], 1e-3), 0.0);
    }

    #[test]
    fn penalty_is_continuous_off_corners() {
        let boxes = [
            unit(),
            AxisBox::new([2.0, 0.0, 0.0], [3.0, 2.0, 1.0]).unwrap(),
        ];
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..2000 {
            let p = Vector3::from_fn(|_, _| rng.random_range(-1.0..4.0));
            let dp = Vector3::from_fn(|_, _| rng.random_range(-1.0..1.0)).normalize() * 1e-6;
            let a = penalty(&p, &boxes, &[], 1e-3);
            let b = penalty(&(p + dp), &boxes, &[], 1e-3);
            // The eps jump at the boundary is the only discontinuity.
            if (a == 0.0) == (b == 0.0) {
                assert!((a - b).abs() <= 1e-4);
            }
        }
    }

    #[test]
    fn segment_slab_cases() {
        let b = unit();
        assert!(segment_intersects_box(
            &Vector3::new(0.2, 0.2, 0.2),
            &Vector3::new(0.8, 0.8, 0.8),
            &b
        ));
        assert!(!segment_intersects_box(
            &Vector3::new(3.0, 0.0, 0.0),
            &Vector3::new(4.0, 1.0, 1.0),
            &b
        ));
        assert!(segment_intersects_box(
            &Vector3::new(-1.0, 0.5, 0.5),
            &Vector3::new(2.0, 0.5, 0.5),
            &b
        ));
    }

    #[test]
    fn segment_matches_dense_sampling() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..500 {
            let b = random_box(&mut rng, 2.0);
            let p0 = Vector3::from_fn(|_, _| rng.random_range(-3.0..3.0));
            let p1 = Vector3::from_fn(|_, _| rng.random_range(-3.0..3.0));
            let res = (p1 - p0).norm() / 999.0;
            let grown = b.grown(res);
            let shrunk = b.grown(-res);
            let hits_grown =
                (0..1000).any(|i| grown.contains(&(p0 + (p1 - p0) * (i as f64 / 999.0))));
            let hits_shrunk = shrunk.is_valid()
                && (0..1000).any(|i| shrunk.contains(&(p0 + (p1 - p0) * (i as f64 / 999.0))));
            let got = segment_intersects_box(&p0, &p1, &b);
            if hits_shrunk {
                assert!(got);
            }
            if !hits_grown {
                assert!(!got);
            }
        }
    }

    #[test]
    fn box_polytope_rows() {
        let poly = box_to_polytope(&unit());
        assert_eq!(poly.offsets().as_slice(), &[1.0, 1.0, 1.0, 0.0, 0.0, 0.0]);
        let point = AxisBox::new([0.5; 3], [0.5; 3]).unwrap();
        let pp = box_to_polytope(&point);
        assert!(pp.contains(&Vector3::new(0.5, 0.5, 0.5)));
        assert!(!pp.contains(&Vector3::new(0.5, 0.5, 0.5 + 1e-6)));
    }

    #[test]
    fn free_box_excludes_obstacles() {
        let container = AxisBox::new([-5.0; 3], [5.0; 3]).unwrap();
        let obs = [AxisBox::new([0.0, -1.0, -5.0], [1.0, 1.0, 5.0]).unwrap()];
        let p = Vector3::new(-1.0, 0.0, 0.0);
        let fb = free_box_around(&p, &container, &obs).unwrap();
        assert!(fb.contains(&p));
        assert!(!fb.overlaps(&obs[0]));
        assert!(free_box_around(&Vector3::new(0.5, 0.0, 0.0), &container, &obs).is_none());
    }
}
