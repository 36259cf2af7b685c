//! Inner clusters of scaling distances.
//!
//! All cluster functions are re-sited to the cluster center `p'`. Their exact
//! argmin is then constant along rays from `p'`, so a query is projected onto
//! the side-2 cube around `p'` and answered by a relative AVR built for the
//! boundary patch it lands on.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use crate::distances::SiteFunction;
use crate::envelope::{build_relative_with_ids, RelativeAvr};
use crate::error::{Error, Result};
use crate::geom::{EuclideanBall, Vector};

/// Exit point of the ray from `p_prime` through `q` on the cube
/// `{x : |x - p_prime|_inf = 1}`.
pub fn ray_to_hypercube_boundary(p_prime: &[f64], q: &[f64]) -> Result<Vector> {
    if p_prime.len() != q.len() {
        return Err(Error::DimensionMismatch {
            expected: p_prime.len(),
            got: q.len(),
        });
    }
    let m = q
        .iter()
        .zip(p_prime)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    if m == 0.0 {
        return Err(Error::InvalidParameter("query coincides with the cluster center".into()));
    }
    let t = 1.0 / m;
    Ok(Vector::from_vec(
        q.iter().zip(p_prime).map(|(a, b)| b + t * (a - b)).collect(),
    ))
}

/// Number of patches along each face axis: `ceil(2 sqrt(d) (2 tau + 1))`.
pub fn patches_per_axis(tau: f64, d: usize) -> usize {
    (2.0 * (d as f64).sqrt() * (2.0 * tau + 1.0)).ceil() as usize
}

/// Boundary patches of the side-2 cube around a cluster center.
#[derive(Debug)]
pub struct InnerPatchSet {
    center: Vector,
    per_axis: usize,
    eps: f64,
    site_ids: Vec<usize>,
    perturbed: Vec<SiteFunction>,
    patches: Mutex<HashMap<u32, Arc<RelativeAvr>>>,
}

impl InnerPatchSet {
    /// `site_ids` and `functions` are parallel; `eps` is the per-patch error.
    pub fn new(center: Vector, tau: f64, eps: f64, site_ids: Vec<usize>, functions: &[SiteFunction]) -> Result<Self> {
        let perturbed = functions
            .iter()
            .map(|f| f.resited(center.clone()))
            .collect::<Result<Vec<_>>>()?;
        Ok(InnerPatchSet {
            per_axis: patches_per_axis(tau, center.dim()),
            center,
            eps,
            site_ids,
            perturbed,
            patches: Mutex::new(HashMap::new()),
        })
    }

    pub fn center(&self) -> &Vector {
        &self.center
    }

    pub fn per_axis(&self) -> usize {
        self.per_axis
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn site_ids(&self) -> &[usize] {
        &self.site_ids
    }

    pub fn perturbed(&self) -> &[SiteFunction] {
        &self.perturbed
    }

    /// `2 d m^(d-1)` boundary patches.
    pub fn patch_count(&self) -> usize {
        let d = self.center.dim();
        2 * d * self.per_axis.pow(d as u32 - 1)
    }

    /// Patches built so far, by id.
    pub fn built(&self) -> Vec<(u32, Arc<RelativeAvr>)> {
        let mut v: Vec<_> = self
            .patches
            .lock()
            .unwrap()
            .iter()
            .map(|(k, a)| (*k, a.clone()))
            .collect();
        v.sort_by_key(|p| p.0);
        v
    }

    pub(crate) fn insert_built(&self, id: u32, avr: RelativeAvr) {
        self.patches.lock().unwrap().insert(id, Arc::new(avr));
    }

    /// Patch id of a point on the cube boundary.
    pub fn patch_of(&self, q_prime: &[f64]) -> u32 {
        let d = self.center.dim();
        let m = self.per_axis;
        let u: Vec<f64> = q_prime.iter().zip(self.center.iter()).map(|(a, b)| a - b).collect();
        let mut face = 0;
        for j in 1..d {
            if u[j].abs() > u[face].abs() {
                face = j;
            }
        }
        let sign = usize::from(u[face] >= 0.0);
        let mut idx = 0usize;
        for (j, x) in u.iter().enumerate().rev() {
            if j == face {
                continue;
            }
            let k = (((x + 1.0) * 0.5 * m as f64).floor() as i64).clamp(0, m as i64 - 1) as usize;
            idx = idx * m + k;
        }
        ((face * 2 + sign) * m.pow(d as u32 - 1) + idx) as u32
    }

    /// Circumscribed ball of a patch.
    pub fn patch_ball(&self, id: u32) -> EuclideanBall {
        let d = self.center.dim();
        let m = self.per_axis;
        let per_face = m.pow(d as u32 - 1);
        let fs = id as usize / per_face;
        let mut idx = id as usize % per_face;
        let (face, sign) = (fs / 2, fs % 2);
        let mut c = self.center.as_slice().to_vec();
        for (j, cj) in c.iter_mut().enumerate() {
            if j == face {
                *cj += if sign == 1 { 1.0 } else { -1.0 };
            } else {
                let k = idx % m;
                idx /= m;
                *cj += -1.0 + (k as f64 + 0.5) * 2.0 / m as f64;
            }
        }
        let radius = ((d as f64 - 1.0).sqrt()).max(1.0) / m as f64;
        EuclideanBall {
            center: Vector::from_vec(c),
            radius,
        }
    }

    /// Relative AVR of patch `id`, built on first use.
    pub fn patch(&self, id: u32) -> Result<Arc<RelativeAvr>> {
        if let Some(p) = self.patches.lock().unwrap().get(&id) {
            return Ok(p.clone());
        }
        let ball = self.patch_ball(id);
        let items: Vec<(usize, &SiteFunction)> = self.site_ids.iter().copied().zip(self.perturbed.iter()).collect();
        let avr = Arc::new(build_relative_with_ids(&items, &ball, self.eps)?);
        Ok(self
            .patches
            .lock()
            .unwrap()
            .entry(id)
            .or_insert(avr)
            .clone())
    }

    /// Site nominated for `q`, or `None` when `q` is the center itself.
    pub fn nominate(&self, q: &[f64]) -> Result<Option<usize>> {
        let qp = match ray_to_hypercube_boundary(&self.center, q) {
            Ok(v) => v,
            Err(Error::InvalidParameter(_)) => return Ok(None),
            Err(e) => return Err(e),
        };
        let avr = self.patch(self.patch_of(&qp))?;
        Ok(Some(avr.query(&qp)?.0))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distances::make_minkowski;

    #[test]
    fn ray_examples() {
        let q = ray_to_hypercube_boundary(&[0.0, 0.0], &[0.5, 0.25]).unwrap();
        assert_eq!(q.as_slice(), &[1.0, 0.5]);
        let q = ray_to_hypercube_boundary(&[0.0, 0.0], &[-3.0, 0.0]).unwrap();
        assert_eq!(q.as_slice(), &[-1.0, 0.0]);
        assert!(ray_to_hypercube_boundary(&[1.0, 1.0], &[1.0, 1.0]).is_err());
    }

    #[test]
    fn patch_balls_are_separated_and_cover() {
        let fs: Vec<SiteFunction> = [[0.0, 0.0, 0.0], [0.01, 0.0, 0.0]]
            .iter()
            .map(|p| make_minkowski(Vector::from_vec(p.to_vec()), 2.0, 1.0).unwrap())
            .collect();
        let tau = fs[0].tau();
        let set = InnerPatchSet::new(Vector::from_vec(vec![0.0; 3]), tau, 0.1, vec![0, 1], &fs).unwrap();
        assert!(set.patch_count() as f64 <= 24.0 * (2.0 * tau + 2.0).powi(2) * 3.0);
        for id in (0..set.patch_count() as u32).step_by(7) {
            let b = set.patch_ball(id);
            let ratio = crate::geom::separation_ratio(&[0.0; 3], &b).unwrap();
            assert!(ratio >= 2.0 * tau, "ratio {ratio}");
        }
        for q in [[0.3, -0.2, 0.9], [-1.0, 0.99, 0.0], [0.0, 0.0, -2.0]] {
            let qp = ray_to_hypercube_boundary(&[0.0; 3], &q).unwrap();
            let b = set.patch_ball(set.patch_of(&qp));
            assert!(b.contains(&qp));
        }
    }
}
