#![allow(dead_code)]

use std::sync::Arc;

use eann_core::distances::{make_bregman, BregmanSpec, SiteFunction};
use eann_core::geom::{separation_ratio, EuclideanBall, Vector};
use eann_core::instances::{bregman_spec, random_sites, InstanceKind};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const SCALING_KINDS: [InstanceKind; 5] = [
    InstanceKind::L2,
    InstanceKind::L15,
    InstanceKind::L3,
    InstanceKind::WeightedL2,
    InstanceKind::Mahalanobis,
];

pub const DIVERGENCES: [InstanceKind; 3] = [InstanceKind::SquaredEuclidean, InstanceKind::Kl, InstanceKind::ItakuraSaito];

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn unit_direction(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..d).map(|_| 2.0 * rng.random::<f64>() - 1.0).collect();
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-3 && n <= 1.0 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

pub fn point_in_ball(rng: &mut ChaCha8Rng, b: &EuclideanBall) -> Vec<f64> {
    let d = b.dim();
    let u = unit_direction(rng, d);
    let r = b.radius * rng.random::<f64>().powf(1.0 / d as f64);
    b.center.iter().zip(&u).map(|(c, x)| c + r * x).collect()
}

/// A ball and a family whose sites are each at least `2 tau`-separated from it.
pub fn separated_family(seed: u64) -> (Vec<SiteFunction>, EuclideanBall) {
    let mut r = rng(seed);
    let d = 2 + (seed % 2) as usize;
    let m = r.random_range(1..=12);
    let all: Vec<InstanceKind> = SCALING_KINDS.iter().chain(DIVERGENCES.iter()).copied().collect();
    let kind = all[r.random_range(0..all.len())];
    match kind {
        InstanceKind::Kl | InstanceKind::ItakuraSaito => {
            let spec = bregman_spec(kind, d).unwrap();
            bregman_family(&mut r, &spec, d, m)
        }
        _ => {
            let base = random_sites(kind, m, d, seed).unwrap();
            let c: Vec<f64> = (0..d).map(|_| 4.0 * r.random::<f64>() - 2.0).collect();
            let radius = 0.5 + 1.5 * r.random::<f64>();
            let ball = EuclideanBall::new(Vector::from_vec(c.clone()), radius).unwrap();
            let fs = base
                .iter()
                .map(|f| {
                    let ratio = 2.0 * f.tau() * (1.0 + 3.0 * r.random::<f64>());
                    let u = unit_direction(&mut r, d);
                    let dist = radius + ratio * 2.0 * radius;
                    let p: Vec<f64> = c.iter().zip(&u).map(|(a, b)| a + dist * b).collect();
                    f.resited(Vector::from_vec(p)).unwrap()
                })
                .collect();
            (fs, ball)
        }
    }
}

fn bregman_family(r: &mut ChaCha8Rng, spec: &Arc<BregmanSpec>, d: usize, m: usize) -> (Vec<SiteFunction>, EuclideanBall) {
    let tau = spec.tau();
    let radius = 0.002 + 0.004 * r.random::<f64>();
    let c: Vec<f64> = (0..d).map(|_| 0.3 + 0.5 * r.random::<f64>()).collect();
    let ball = EuclideanBall::new(Vector::from_vec(c), radius).unwrap();
    let mut fs = Vec::new();
    while fs.len() < m {
        let p: Vec<f64> = (0..d).map(|_| 0.1 + 1e-6 + (0.9 - 2e-6) * r.random::<f64>()).collect();
        if separation_ratio(&p, &ball).unwrap() >= 2.0 * tau {
            fs.push(make_bregman(spec, Vector::from_vec(p)).unwrap());
        }
    }
    (fs, ball)
}

/// Pass iff every query lands within `1 + eps` of the brute-force minimum.
pub fn relative_ok(value: f64, best: f64, eps: f64) -> bool {
    value <= (1.0 + eps) * best
}
