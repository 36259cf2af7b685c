//! Fatness/smoothness parameters of convex unit balls and the resulting
//! admissibility constant.

use std::collections::HashMap;
use std::fmt::Debug;
use std::sync::{Mutex, OnceLock};

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::geom::sym_eig_extremes;

/// `gamma`: inscribed-to-circumscribed radius ratio of the unit ball.
/// `sigma`: diameter of the largest ball rolling freely inside it, relative to its diameter.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct GaugeParams {
    pub gamma: f64,
    pub sigma: f64,
}

impl GaugeParams {
    pub fn new(gamma: f64, sigma: f64) -> Result<Self> {
        let ok = |x: f64| x > 0.0 && x <= 1.0;
        if !ok(gamma) || !ok(sigma) {
            return Err(Error::InvalidParameter(format!(
                "gauge parameters gamma={gamma}, sigma={sigma} must lie in (0,1]"
            )));
        }
        Ok(GaugeParams { gamma, sigma })
    }
}

/// `sqrt(2 / (sigma * gamma^3))`, clamped below at 1.
pub fn tau_for_gauge(g: GaugeParams) -> f64 {
    (2.0 / (g.sigma * g.gamma.powi(3))).sqrt().max(1.0)
}

/// A user-supplied 1-homogeneous gauge evaluated at the offset `u = x - p`.
pub trait Gauge: Send + Sync + Debug {
    fn value(&self, u: &[f64]) -> f64;
    fn gradient(&self, u: &[f64]) -> Vec<f64>;
    fn hessian(&self, u: &[f64]) -> DMatrix<f64>;
}

fn lk_norm(u: &[f64], k: f64) -> f64 {
    u.iter().map(|x| x.abs().powf(k)).sum::<f64>().powf(1.0 / k)
}

/// Unweighted gradient of the `l_k` norm at `u != 0`.
pub(crate) fn lk_gradient(u: &[f64], k: f64) -> Vec<f64> {
    let n = lk_norm(u, k);
    u.iter()
        .map(|x| x.signum() * (x.abs() / n).powf(k - 1.0))
        .collect()
}

/// Unweighted Hessian of the `l_k` norm at `u != 0`.
/// Returns `None` when a zero coordinate makes it blow up (`k < 2`).
pub(crate) fn lk_hessian(u: &[f64], k: f64) -> Option<DMatrix<f64>> {
    let d = u.len();
    let n = lk_norm(u, k);
    if k < 2.0 && u.contains(&0.0) {
        return None;
    }
    let a: Vec<f64> = u.iter().map(|x| x.abs() / n).collect();
    let s: Vec<f64> = u.iter().map(|x| x.signum()).collect();
    let c = (k - 1.0) / n;
    Some(DMatrix::from_fn(d, d, |i, j| {
        let diag = if i == j { a[i].powf(k - 2.0) } else { 0.0 };
        c * (diag - s[i] * s[j] * a[i].powf(k - 1.0) * a[j].powf(k - 1.0))
    }))
}

/// Largest principal curvature of the level set of the `l_k` norm through `u`.
fn lk_max_curvature(u: &[f64], k: f64) -> f64 {
    let d = u.len();
    let g = lk_gradient(u, k);
    let gn = crate::geom::norm(&g);
    let Some(h) = lk_hessian(u, k) else {
        return f64::INFINITY;
    };
    let nrm: Vec<f64> = g.iter().map(|x| x / gn).collect();
    let p = DMatrix::from_fn(d, d, |i, j| (if i == j { 1.0 } else { 0.0 }) - nrm[i] * nrm[j]);
    let shape = &p * h * &p / gn;
    sym_eig_extremes(&shape).1
}

fn scan_resolution(d: usize) -> usize {
    let budget = 200_000.0 / d as f64;
    (budget.powf(1.0 / (d as f64 - 1.0)).floor() as usize).clamp(8, 512)
}

/// Visits boundary directions of the positive orthant: points of the cube
/// surface `max t_i = 1` sampled at cell midpoints.
fn for_each_orthant_direction(d: usize, g: usize, mut f: impl FnMut(&[f64])) {
    let mut idx = vec![0usize; d - 1];
    let mut t = vec![0.0; d];
    for face in 0..d {
        idx.iter_mut().for_each(|x| *x = 0);
        loop {
            let mut c = 0;
            for (j, tj) in t.iter_mut().enumerate() {
                if j == face {
                    *tj = 1.0;
                } else {
                    *tj = (idx[c] as f64 + 0.5) / g as f64;
                    c += 1;
                }
            }
            f(&t);
            let mut carry = 0;
            while carry < d - 1 {
                idx[carry] += 1;
                if idx[carry] < g {
                    break;
                }
                idx[carry] = 0;
                carry += 1;
            }
            if carry == d - 1 {
                break;
            }
        }
    }
}

fn compute_minkowski_params(k: f64, d: usize) -> GaugeParams {
    let gamma = (d as f64).powf(-(0.5 - 1.0 / k).abs());
    if d == 1 {
        return GaugeParams { gamma: 1.0, sigma: 1.0 };
    }
    let circ = if k >= 2.0 {
        (d as f64).powf(0.5 - 1.0 / k)
    } else {
        1.0
    };
    let mut kmax: f64 = 0.0;
    for_each_orthant_direction(d, scan_resolution(d), |t| {
        let n = lk_norm(t, k);
        let u: Vec<f64> = t.iter().map(|x| x / n).collect();
        kmax = kmax.max(lk_max_curvature(&u, k));
    });
    let sigma = if kmax > 0.0 && kmax.is_finite() {
        ((1.0 / kmax) / circ).min(1.0)
    } else {
        1.0
    };
    GaugeParams { gamma, sigma }
}

/// Gauge parameters of the `l_k` unit ball in `R^d`.
///
/// `gamma = d^-|1/2 - 1/k|`. `sigma` comes from a fixed-resolution scan of
/// principal curvatures over the boundary; for `k < 2` the curvature is
/// unbounded near the coordinate hyperplanes, so the value reflects the scan
/// resolution.
pub fn minkowski_gauge_params(k: f64, d: usize) -> GaugeParams {
    static CACHE: OnceLock<Mutex<HashMap<(u64, usize), GaugeParams>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let key = (k.to_bits(), d);
    if let Some(p) = cache.lock().unwrap().get(&key) {
        return *p;
    }
    let p = compute_minkowski_params(k, d);
    cache.lock().unwrap().insert(key, p);
    p
}

/// Gauge parameters of an ellipsoidal unit ball with extreme eigenvalues
/// `lmin <= lmax`: semi-axes `1/sqrt(lambda)`, smallest curvature radius
/// `a_min^2 / a_max`.
pub fn mahalanobis_gauge_params(lmin: f64, lmax: f64) -> GaugeParams {
    let r = lmin / lmax;
    GaugeParams {
        gamma: r.sqrt(),
        sigma: r,
    }
}
