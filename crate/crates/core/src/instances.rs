//! Seeded random instances.
//!
//! Sites and queries are uniform in the unit box. Weights are log-uniform in
//! `[1, 2]`. Mahalanobis matrices are random rotations of diagonals with
//! eigenvalues log-uniform in `[1, 4]`. Divergence sites and queries live in
//! `[0.1, 1]^d`.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;
use std::sync::{Arc, Mutex, OnceLock};

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::distances::{make_bregman, make_mahalanobis, make_minkowski, BregmanSpec, SiteFunction};
use crate::error::{Error, Result};
use crate::geom::{AlignedBox, Vector};

pub const BREGMAN_LOW: f64 = 0.1;
pub const BREGMAN_HIGH: f64 = 1.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum InstanceKind {
    L2,
    L15,
    L3,
    WeightedL2,
    Mahalanobis,
    SquaredEuclidean,
    Kl,
    ItakuraSaito,
}

impl InstanceKind {
    pub const ALL: [InstanceKind; 8] = [
        InstanceKind::L2,
        InstanceKind::L15,
        InstanceKind::L3,
        InstanceKind::WeightedL2,
        InstanceKind::Mahalanobis,
        InstanceKind::SquaredEuclidean,
        InstanceKind::Kl,
        InstanceKind::ItakuraSaito,
    ];

    pub fn name(self) -> &'static str {
        match self {
            InstanceKind::L2 => "l2",
            InstanceKind::L15 => "l1.5",
            InstanceKind::L3 => "l3",
            InstanceKind::WeightedL2 => "weighted-l2",
            InstanceKind::Mahalanobis => "mahalanobis",
            InstanceKind::SquaredEuclidean => "squared-euclidean",
            InstanceKind::Kl => "kl",
            InstanceKind::ItakuraSaito => "itakura-saito",
        }
    }

    pub fn is_bregman(self) -> bool {
        matches!(
            self,
            InstanceKind::SquaredEuclidean | InstanceKind::Kl | InstanceKind::ItakuraSaito
        )
    }
}

impl fmt::Display for InstanceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for InstanceKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        InstanceKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown instance kind {s:?}")))
    }
}

/// `[0.1, 1]^d`.
pub fn bregman_box(d: usize) -> AlignedBox {
    AlignedBox {
        low: Vector::from_vec(vec![BREGMAN_LOW; d]),
        high: Vector::from_vec(vec![BREGMAN_HIGH; d]),
    }
}

type SpecCache = HashMap<(InstanceKind, usize), Arc<BregmanSpec>>;

/// Divergence for a kind, certified once per dimension.
pub fn bregman_spec(kind: InstanceKind, d: usize) -> Result<Arc<BregmanSpec>> {
    static CACHE: OnceLock<Mutex<SpecCache>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(s) = cache.lock().unwrap().get(&(kind, d)) {
        return Ok(s.clone());
    }
    let spec = match kind {
        InstanceKind::SquaredEuclidean => BregmanSpec::squared_euclidean(d)?,
        InstanceKind::Kl => BregmanSpec::generalized_kl(bregman_box(d))?,
        InstanceKind::ItakuraSaito => BregmanSpec::itakura_saito(bregman_box(d))?,
        other => return Err(Error::InvalidParameter(format!("{other} is not a divergence"))),
    };
    Ok(cache.lock().unwrap().entry((kind, d)).or_insert(spec).clone())
}

fn log_uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    (lo.ln() + (hi.ln() - lo.ln()) * rng.random::<f64>()).exp()
}

/// Haar-random rotation from the QR factorization of a Gaussian matrix.
pub fn random_rotation(d: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let g = DMatrix::from_fn(d, d, |_, _| rng.sample::<f64, _>(StandardNormal));
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..d {
        if r[(j, j)] < 0.0 {
            for i in 0..d {
                q[(i, j)] = -q[(i, j)];
            }
        }
    }
    q
}

/// `R diag(lambda) R^T` with `lambda` log-uniform in `[1, 4]`.
pub fn random_mahalanobis_matrix(d: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let r = random_rotation(d, rng);
    let diag = DMatrix::from_diagonal(&nalgebra::DVector::from_fn(d, |_, _| log_uniform(rng, 1.0, 4.0)));
    let m = &r * diag * r.transpose();
    (&m + m.transpose()) * 0.5
}

fn uniform_point(rng: &mut ChaCha8Rng, d: usize, lo: f64, hi: f64) -> Vector {
    Vector::from_vec((0..d).map(|_| lo + (hi - lo) * rng.random::<f64>()).collect())
}

/// Strictly inside the divergence box.
fn interior_point(rng: &mut ChaCha8Rng, d: usize) -> Vector {
    let m = 1e-6;
    uniform_point(rng, d, BREGMAN_LOW + m, BREGMAN_HIGH - m)
}

pub fn random_sites(kind: InstanceKind, n: usize, d: usize, seed: u64) -> Result<Vec<SiteFunction>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let spec = if kind.is_bregman() { Some(bregman_spec(kind, d)?) } else { None };
    (0..n)
        .map(|_| match kind {
            InstanceKind::L2 => make_minkowski(uniform_point(&mut rng, d, 0.0, 1.0), 2.0, 1.0),
            InstanceKind::L15 => make_minkowski(uniform_point(&mut rng, d, 0.0, 1.0), 1.5, 1.0),
            InstanceKind::L3 => make_minkowski(uniform_point(&mut rng, d, 0.0, 1.0), 3.0, 1.0),
            InstanceKind::WeightedL2 => {
                let p = uniform_point(&mut rng, d, 0.0, 1.0);
                make_minkowski(p, 2.0, log_uniform(&mut rng, 1.0, 2.0))
            }
            InstanceKind::Mahalanobis => {
                let p = uniform_point(&mut rng, d, 0.0, 1.0);
                make_mahalanobis(p, random_mahalanobis_matrix(d, &mut rng))
            }
            InstanceKind::SquaredEuclidean => make_bregman(spec.as_ref().unwrap(), uniform_point(&mut rng, d, 0.0, 1.0)),
            InstanceKind::Kl | InstanceKind::ItakuraSaito => make_bregman(spec.as_ref().unwrap(), interior_point(&mut rng, d)),
        })
        .collect()
}

/// `clusters` tight groups of `per_cluster` sites each, offsets uniform in a
/// cube of half-side `spread` around uniform centers.
pub fn clustered_sites(kind: InstanceKind, clusters: usize, per_cluster: usize, spread: f64, d: usize, seed: u64) -> Result<Vec<SiteFunction>> {
    let base = random_sites(kind, clusters * per_cluster, d, seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9);
    let (lo, hi) = if kind.is_bregman() && kind != InstanceKind::SquaredEuclidean {
        (BREGMAN_LOW + spread + 1e-6, BREGMAN_HIGH - spread - 1e-6)
    } else {
        (0.0, 1.0)
    };
    let centers: Vec<Vector> = (0..clusters).map(|_| uniform_point(&mut rng, d, lo, hi)).collect();
    base.iter()
        .enumerate()
        .map(|(i, f)| {
            let c = &centers[i / per_cluster.max(1)];
            let p: Vec<f64> = c.iter().map(|x| x + spread * (2.0 * rng.random::<f64>() - 1.0)).collect();
            f.resited(Vector::from_vec(p))
        })
        .collect()
}

/// Queries from the same region as the sites of `kind`.
pub fn random_queries(kind: InstanceKind, n: usize, d: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (lo, hi) = match kind {
        InstanceKind::Kl | InstanceKind::ItakuraSaito => (BREGMAN_LOW, BREGMAN_HIGH),
        _ => (0.0, 1.0),
    };
    (0..n).map(|_| uniform_point(&mut rng, d, lo, hi).into_inner()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::sym_eig_extremes;

    #[test]
    fn mahalanobis_eigen_ratio() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for d in 2..=4 {
            let m = random_mahalanobis_matrix(d, &mut rng);
            let (lo, hi) = sym_eig_extremes(&m);
            assert!(lo >= 1.0 - 1e-9 && hi <= 4.0 + 1e-9 && hi / lo <= 4.0 + 1e-9);
        }
    }

    #[test]
    fn kinds_parse() {
        for k in InstanceKind::ALL {
            assert_eq!(k.name().parse::<InstanceKind>().unwrap(), k);
        }
        assert!("l7".parse::<InstanceKind>().is_err());
    }

    #[test]
    fn deterministic_sites() {
        let a = random_sites(InstanceKind::WeightedL2, 5, 2, 3).unwrap();
        let b = random_sites(InstanceKind::WeightedL2, 5, 2, 3).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.site(), y.site());
        }
    }
}
