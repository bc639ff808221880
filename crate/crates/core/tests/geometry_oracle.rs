use nalgebra::{DMatrix, DVector, Vector3};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use semland::geometry::*;

fn random_box(rng: &mut ChaCha8Rng, span: f64, max_side: f64) -> AxisBox {
    let lo: [f64; 3] = std::array::from_fn(|_| rng.random_range(-span..span));
    let hi: [f64; 3] = std::array::from_fn(|d| lo[d] + rng.random_range(0.05..max_side));
    AxisBox::new(lo, hi).unwrap()
}

fn random_point(rng: &mut ChaCha8Rng, span: f64) -> Vector3<f64> {
    Vector3::new(
        rng.random_range(-span..span),
        rng.random_range(-span..span),
        rng.random_range(-span..span),
    )
}

/// Squared distance to the nearest point of the box, found by clamping each
/// coordinate independently.
fn closest_sq(p: &Vector3<f64>, b: &AxisBox) -> f64 {
    let q = Vector3::from_fn(|d, _| p[d].max(b.lo[d]).min(b.hi[d]));
    (p - q).norm_squared()
}

#[test]
fn penalty_matches_closest_point_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let eps = 1e-3;
    for _ in 0..10_000 {
        let n = rng.random_range(1..=3);
        let boxes: Vec<AxisBox> = (0..n).map(|_| random_box(&mut rng, 4.0, 3.0)).collect();
        let p = random_point(&mut rng, 6.0);
        let d = boxes
            .iter()
            .map(|b| closest_sq(&p, b))
            .fold(f64::INFINITY, f64::min);
        let want = if d == 0.0 { 0.0 } else { d + eps };
        assert!((penalty(&p, &boxes, &[], eps) - want).abs() <= 1e-9);
    }
}

#[test]
fn penalty_is_zero_in_clearance_boxes() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..1000 {
        let safe = [random_box(&mut rng, 4.0, 2.0)];
        let clear = random_box(&mut rng, 4.0, 2.0);
        let t = Vector3::from_fn(|_, _| rng.random_range(0.0..1.0));
        let p = Vector3::from_fn(|d, _| clear.lo[d] + t[d] * (clear.hi[d] - clear.lo[d]));
        assert_eq!(penalty(&p, &safe, &[clear], 1e-3), 0.0);
    }
}

#[test]
fn penalty_one_dimensional_case() {
    let b = AxisBox::new([0.0, -5.0, -5.0], [1.0, 5.0, 5.0]).unwrap();
    assert!((penalty(&Vector3::new(2.0, 0.0, 0.0), &[b], &[], 1e-3) - 1.001).abs() < 1e-12);
    assert_eq!(penalty(&b.center(), &[b], &[], 1e-3), 0.0);
}

#[test]
fn carve_matches_point_sampling() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut checked = 0;
    while checked < 200 {
        let corridor = random_box(&mut rng, 2.0, 4.0);
        let hole = random_box(&mut rng, 2.0, 3.0);
        if !corridor.overlaps(&hole) {
            continue;
        }
        let Ok(pieces) = carve(&corridor, &hole) else {
            continue;
        };
        checked += 1;
        assert!(pieces.len() <= 6);
        for (i, a) in pieces.iter().enumerate() {
            assert!(a.is_valid());
            assert!((0..3).all(|d| a.lo[d] >= corridor.lo[d] && a.hi[d] <= corridor.hi[d]));
            assert!(!a.overlaps(&hole), "piece meets the hole interior");
            for b in &pieces[i + 1..] {
                assert!(!a.overlaps(b), "pieces overlap");
            }
        }
        let mut miss = 0;
        for _ in 0..100_000 {
            let p = Vector3::from_fn(|d, _| {
                rng.random_range(corridor.lo[d] - 0.5..corridor.hi[d] + 0.5)
            });
            let want = corridor.contains(&p) && !hole.interior_contains(&p);
            let got = pieces.iter().any(|b| b.contains(&p));
            if want != got {
                miss += 1;
            }
        }
        assert_eq!(miss, 0);
    }
}

#[test]
fn carve_trivial_cases() {
    let c = AxisBox::new([0.0; 3], [1.0; 3]).unwrap();
    let far = AxisBox::new([5.0; 3], [6.0; 3]).unwrap();
    assert_eq!(carve(&c, &far).unwrap(), vec![c]);
    let cover = AxisBox::new([-1.0; 3], [2.0; 3]).unwrap();
    assert_eq!(carve(&c, &cover), Err(GeometryError::FullyBlocked));
}

#[test]
fn inflate_buffers() {
    let region = |buffer| UnsafeRegion {
        bounds: AxisBox::new([0.0; 3], [1.0; 3]).unwrap(),
        semantic_class: "pedestrian".into(),
        buffer,
        is_dynamic: true,
        created_at: 0.0,
    };
    assert_eq!(
        inflate(&region(3.0)),
        AxisBox::new([-3.0; 3], [4.0; 3]).unwrap()
    );
    assert_eq!(inflate(&region(0.0)), region(0.0).bounds);
    let v = inflate(&region(5.0));
    assert!((0..3).all(|d| (v.hi[d] - v.lo[d] - 11.0).abs() < 1e-12));
}

#[test]
fn segment_matches_dense_sampling() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..2000 {
        let b = random_box(&mut rng, 2.0, 2.0);
        let p0 = random_point(&mut rng, 4.0);
        let p1 = random_point(&mut rng, 4.0);
        let n = 1000;
        let res = (p1 - p0).norm() / n as f64;
        let hit_dense = (0..=n).any(|i| b.contains(&(p0 + (p1 - p0) * (i as f64 / n as f64))));
        let hit_grown = (0..=n).any(|i| {
            b.grown(res)
                .contains(&(p0 + (p1 - p0) * (i as f64 / n as f64)))
        });
        let got = segment_intersects_box(&p0, &p1, &b);
        // dense sampling can only miss a hit by less than its resolution
        if hit_dense {
            assert!(got);
        }
        if !hit_grown {
            assert!(!got);
        }
    }
}

#[test]
fn random_polytopes_match_row_check() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..1000 {
        let k = rng.random_range(1..8);
        let a = DMatrix::from_fn(k, 3, |_, _| rng.random_range(-1.0..1.0));
        if (0..k).any(|i| a.row(i).norm() == 0.0) {
            continue;
        }
        let b = DVector::from_fn(k, |_, _| rng.random_range(-1.0..2.0));
        let poly = Polytope::new(a.clone(), b.clone()).unwrap();
        let p = random_point(&mut rng, 2.0);
        let want = (0..k).all(|i| (0..3).map(|j| a[(i, j)] * p[j]).sum::<f64>() <= b[i] + 1e-9);
        assert_eq!(contains(&poly, &p), want);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn box_polytope_agrees_with_bounds(
        lo in prop::array::uniform3(-3.0..3.0f64),
        ext in prop::array::uniform3(0.0..2.0f64),
        p in prop::array::uniform3(-4.0..4.0f64),
    ) {
        let hi = [lo[0] + ext[0], lo[1] + ext[1], lo[2] + ext[2]];
        let b = AxisBox::new(lo, hi).unwrap();
        let p = Vector3::from(p);
        prop_assert_eq!(contains(&box_to_polytope(&b), &p), b.contains(&p));
    }

    #[test]
    fn penalty_is_continuous_off_corners(
        seed in 0u64..10_000,
        dir in prop::array::uniform3(-1.0..1.0f64),
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let boxes = [random_box(&mut rng, 3.0, 2.0), random_box(&mut rng, 3.0, 2.0)];
        let p = random_point(&mut rng, 5.0);
        let d = Vector3::from(dir);
        prop_assume!(d.norm() > 1e-3);
        let delta = d.normalize() * 1e-6;
        let a = penalty(&p, &boxes, &[], 1e-3);
        let b = penalty(&(p + delta), &boxes, &[], 1e-3);
        // eps makes the boundary of the safe union a jump; away from it the
        // change is bounded
        let on_boundary = (a == 0.0) != (b == 0.0);
        prop_assert!(on_boundary || (a - b).abs() <= 1e-4);
    }

    #[test]
    fn penalty_zero_exactly_on_safe_union(seed in 0u64..10_000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let boxes = [random_box(&mut rng, 3.0, 2.0), random_box(&mut rng, 3.0, 2.0)];
        let p = random_point(&mut rng, 5.0);
        let inside = boxes.iter().any(|b| b.contains(&p));
        prop_assert_eq!(penalty(&p, &boxes, &[], 1e-3) == 0.0, inside);
    }
}
