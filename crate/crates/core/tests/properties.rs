mod common;

use eann_core::ann::{brute_force, AnnIndex};
use eann_core::distances::{make_mahalanobis, make_minkowski};
use eann_core::envelope::{build_envelope, direct_min, AffineFamily};
use eann_core::geom::{dist_point_cell, enclosing_ball, separation_ratio, AlignedBox, BbdCell, EuclideanBall, Vector};
use eann_core::instances::{bregman_spec, InstanceKind};
use eann_core::pointfile::{format_points, parse_points};
use nalgebra::DMatrix;
use proptest::prelude::*;

fn coord() -> impl Strategy<Value = f64> {
    -10.0..10.0f64
}

fn point(d: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(coord(), d)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn separation_ratio_is_scale_and_shift_invariant(
        p in point(3), c in point(3), r in 0.01..5.0f64, s in 0.1..10.0f64, t in point(3)
    ) {
        let b = EuclideanBall::new(Vector::from_vec(c.clone()), r).unwrap();
        let a = separation_ratio(&p, &b).unwrap();
        let map = |x: &[f64]| -> Vec<f64> { x.iter().zip(&t).map(|(a, b)| s * a + b).collect() };
        let b2 = EuclideanBall::new(Vector::from_vec(map(&c)), s * r).unwrap();
        let a2 = separation_ratio(&map(&p), &b2).unwrap();
        prop_assert!((a - a2).abs() <= 1e-9 * (1.0 + a));
    }

    #[test]
    fn enclosing_ball_covers_cell_corners(lo in point(3), ext in prop::collection::vec(0.01..5.0f64, 3)) {
        let hi: Vec<f64> = lo.iter().zip(&ext).map(|(a, e)| a + e).collect();
        let cell = BbdCell::from_box(AlignedBox::new(Vector::from_vec(lo.clone()), Vector::from_vec(hi.clone())).unwrap());
        let b = enclosing_ball(&cell);
        for mask in 0..8u32 {
            let corner: Vec<f64> = (0..3).map(|i| if mask >> i & 1 == 1 { hi[i] } else { lo[i] }).collect();
            prop_assert!(b.contains(&corner));
        }
    }

    #[test]
    fn cell_distance_vanishes_exactly_inside(lo in point(2), ext in prop::collection::vec(0.1..5.0f64, 2), q in point(2)) {
        let hi: Vec<f64> = lo.iter().zip(&ext).map(|(a, e)| a + e).collect();
        let bx = AlignedBox::new(Vector::from_vec(lo), Vector::from_vec(hi)).unwrap();
        let cell = BbdCell::from_box(bx.clone());
        let dq = dist_point_cell(&q, &cell).unwrap();
        prop_assert_eq!(dq == 0.0, bx.contains(&q));
        prop_assert!((dq - bx.dist_to_point(&q)).abs() < 1e-12);
    }

    #[test]
    fn minkowski_distances_are_homogeneous_and_symmetric(
        p in point(3), u in point(3), k in 1.2..6.0f64, w in 0.5..3.0f64, t in 0.01..20.0f64
    ) {
        let f = make_minkowski(Vector::from_vec(p.clone()), k, w).unwrap();
        let x: Vec<f64> = p.iter().zip(&u).map(|(a, b)| a + b).collect();
        let y: Vec<f64> = p.iter().zip(&u).map(|(a, b)| a + t * b).collect();
        let m: Vec<f64> = p.iter().zip(&u).map(|(a, b)| a - b).collect();
        let fx = f.evaluate(&x).unwrap();
        prop_assert!((f.evaluate(&y).unwrap() - t * fx).abs() <= 1e-9 * (1.0 + t * fx));
        prop_assert!((f.evaluate(&m).unwrap() - fx).abs() <= 1e-9 * (1.0 + fx));
    }

    #[test]
    fn mahalanobis_triangle_inequality(a in point(2), b in point(2), c in point(2), s in -0.9..0.9f64) {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, s, s, 1.0]);
        let fa = make_mahalanobis(Vector::from_vec(a.clone()), m.clone()).unwrap();
        let fb = make_mahalanobis(Vector::from_vec(b.clone()), m).unwrap();
        let ab = fa.evaluate(&b).unwrap();
        prop_assert!(fa.evaluate(&c).unwrap() <= ab + fb.evaluate(&c).unwrap() + 1e-9);
    }

    #[test]
    fn divergences_are_nonnegative_and_vanish_on_the_diagonal(
        q in prop::collection::vec(0.1..1.0f64, 2), p in prop::collection::vec(0.1..1.0f64, 2), which in 0..3usize
    ) {
        let kind = [InstanceKind::SquaredEuclidean, InstanceKind::Kl, InstanceKind::ItakuraSaito][which];
        let spec = bregman_spec(kind, 2).unwrap();
        prop_assert!(spec.divergence(&q, &p).unwrap() >= -1e-15);
        prop_assert!(spec.divergence(&q, &q).unwrap().abs() <= 1e-15);
    }

    #[test]
    fn point_files_round_trip(pts in prop::collection::vec(point(3), 1..20)) {
        let v: Vec<Vector> = pts.into_iter().map(Vector::from_vec).collect();
        prop_assert_eq!(parse_points(&format_points(&v)).unwrap(), v);
    }

    #[test]
    fn constant_envelope_is_exact(vals in prop::collection::vec(0.2..0.8f64, 1..8), q in prop::collection::vec(-0.7..0.7f64, 2)) {
        let env = build_envelope(AffineFamily::constants(&vals, 2), 0.05).unwrap();
        let (v, w) = env.query_absolute(&q).unwrap();
        let (m, wm) = direct_min(env.family(), &q);
        prop_assert_eq!(v, m);
        prop_assert_eq!(w, wm);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn small_indices_answer_within_eps(
        sites in prop::collection::vec(prop::collection::vec(0.0..1.0f64, 2), 1..25),
        queries in prop::collection::vec(prop::collection::vec(-0.5..1.5f64, 2), 1..20),
        k in prop::sample::select(vec![1.5, 2.0, 3.0]),
        eps in prop::sample::select(vec![0.1, 0.25, 0.5]),
    ) {
        let fs: Vec<_> = sites
            .into_iter()
            .map(|p| make_minkowski(Vector::from_vec(p), k, 1.0).unwrap())
            .collect();
        let index = AnnIndex::build(fs.clone(), eps).unwrap();
        for q in &queries {
            let (w, v) = index.query(q).unwrap();
            let (_, best) = brute_force(&fs, q).unwrap();
            prop_assert_eq!(v, fs[w].evaluate(q).unwrap());
            prop_assert!(common::relative_ok(v, best, eps), "{} vs {}", v, best);
        }
    }
}
