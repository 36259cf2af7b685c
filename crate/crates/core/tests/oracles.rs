mod common;

use eann_core::admissibility::{finite_difference_gradient, finite_difference_hessian};
use eann_core::convexify::{convexify, normalize};
use eann_core::distances::SiteFunction;
use eann_core::geom::{dist, norm, sym_norm};
use eann_core::instances::{bregman_spec, random_queries, random_sites, InstanceKind};
use rand::Rng;

use common::*;

fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    dist(a, b) / norm(b).max(1e-8)
}

fn check_derivatives(f: &SiteFunction, x: &[f64], label: &str) {
    let v = |y: &[f64]| f.value_unchecked(y);
    let g = f.gradient(x).unwrap();
    let fd = finite_difference_gradient(&v, x);
    assert!(rel_err(&g, &fd) < 1e-5, "{label} gradient at {x:?}: {g:?} vs {fd:?}");
    let h = f.hessian(x).unwrap();
    let fdh = finite_difference_hessian(&v, x);
    let diff = sym_norm(&(&h - &fdh));
    assert!(diff <= 1e-4 * sym_norm(&h).max(1e-3), "{label} hessian at {x:?}: {h} vs {fdh}");
}

#[test]
fn site_function_derivatives_match_finite_differences() {
    for kind in InstanceKind::ALL {
        for d in [2, 3] {
            let sites = random_sites(kind, 8, d, 7).unwrap();
            let qs = random_queries(kind, 8, d, 8);
            for (f, q) in sites.iter().zip(&qs) {
                if dist(f.site(), q) < 0.05 {
                    continue;
                }
                // keep off the coordinate hyperplanes of the site for l_k
                if f.site().iter().zip(q).any(|(a, b)| (a - b).abs() < 1e-2) {
                    continue;
                }
                check_derivatives(f, q, kind.name());
            }
        }
    }
}

#[test]
fn divergence_gradient_matches_finite_differences() {
    let mut r = rng(9);
    for kind in DIVERGENCES {
        for d in [2, 3] {
            let spec = bregman_spec(kind, d).unwrap();
            for _ in 0..20 {
                let q: Vec<f64> = (0..d).map(|_| 0.15 + 0.8 * r.random::<f64>()).collect();
                let p: Vec<f64> = (0..d).map(|_| 0.15 + 0.8 * r.random::<f64>()).collect();
                let g = spec.divergence_gradient(&q, &p).unwrap();
                let fd = finite_difference_gradient(&|x: &[f64]| spec.divergence(x, &p).unwrap(), &q);
                assert!(rel_err(&g, &fd) < 1e-5, "{kind}: {g:?} vs {fd:?}");
                let gf = spec.grad_f(&q).unwrap();
                let fdf = finite_difference_gradient(&|x: &[f64]| spec.f(x).unwrap(), &q);
                assert!(rel_err(&gf, &fdf) < 1e-6);
            }
        }
    }
}

#[test]
fn normalized_family_derivatives_match_finite_differences() {
    for seed in 0..15u64 {
        let (fs, ball) = separated_family(700 + seed);
        let cf = convexify(normalize(&fs, &ball).unwrap());
        let mut r = rng(seed);
        let unit = eann_core::geom::EuclideanBall::new(eann_core::geom::Vector::zeros(cf.dim()), 1.0).unwrap();
        for _ in 0..10 {
            let x = point_in_ball(&mut r, &unit);
            for i in 0..cf.len() {
                let v = |y: &[f64]| cf.value(i, y);
                let g = cf.gradient(i, &x).unwrap();
                let fd = finite_difference_gradient(&v, &x);
                assert!(dist(&g, &fd) < 1e-7, "family {seed}: {g:?} vs {fd:?}");
                let h = cf.hessian(i, &x).unwrap();
                let fdh = finite_difference_hessian(&v, &x);
                assert!(sym_norm(&(&h - &fdh)) < 1e-5);
            }
        }
    }
}
