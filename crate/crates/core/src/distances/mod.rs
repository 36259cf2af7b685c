//! Distance functions: scaling (gauge) distances and Bregman divergences.
//!
//! Every function is attached to a site `p` and evaluated at a point `x`.
//! Scaling distances are positively 1-homogeneous about `p`; Bregman
//! divergences take the query as their first argument, `f_p(q) = D(q, p)`.

mod bregman;
mod gauge;

use std::sync::Arc;

use nalgebra::DMatrix;

pub use bregman::{BregmanSpec, ConvexGenerator, Domain, Generator};
pub(crate) use bregman::{
    divergence as bregman_divergence, divergence_gradient as bregman_divergence_gradient,
    hessian_extremes as bregman_hessian_extremes,
};
pub use gauge::{mahalanobis_gauge_params, minkowski_gauge_params, tau_for_gauge, Gauge, GaugeParams};

use crate::error::{Error, Result};
use crate::geom::{sym_eig_extremes, Vector};

/// Family a distance function belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FamilyKind {
    Scaling,
    Bregman,
}

#[derive(Clone, Debug)]
pub enum DistanceKind {
    Minkowski { k: f64, weight: f64 },
    Mahalanobis { matrix: Arc<DMatrix<f64>> },
    CustomGauge { gauge: Arc<dyn Gauge>, params: GaugeParams },
    Bregman(Arc<BregmanSpec>),
}

/// A distance function attached to a site.
#[derive(Clone, Debug)]
pub struct SiteFunction {
    site: Vector,
    kind: DistanceKind,
    tau: f64,
    gauge: Option<GaugeParams>,
}

pub(crate) fn check_spd(m: &DMatrix<f64>) -> Result<(f64, f64)> {
    if !m.is_square() {
        return Err(Error::NotPositiveDefinite);
    }
    let scale = m.iter().fold(0.0f64, |a, b| a.max(b.abs())).max(1e-300);
    let sym = (0..m.nrows())
        .all(|i| (0..m.ncols()).all(|j| (m[(i, j)] - m[(j, i)]).abs() <= 1e-12 * scale));
    if !sym || m.iter().any(|v| !v.is_finite()) {
        return Err(Error::NotPositiveDefinite);
    }
    let (lo, hi) = sym_eig_extremes(m);
    if lo <= 0.0 {
        return Err(Error::NotPositiveDefinite);
    }
    Ok((lo, hi))
}

/// `weight * ||x - p||_k`.
pub fn make_minkowski(p: Vector, k: f64, weight: f64) -> Result<SiteFunction> {
    if !(k > 1.0) || !k.is_finite() {
        return Err(Error::NotSmooth(k));
    }
    if !(weight > 0.0) || !weight.is_finite() {
        return Err(Error::InvalidWeight(weight));
    }
    let params = minkowski_gauge_params(k, p.dim());
    Ok(SiteFunction {
        tau: tau_for_gauge(params),
        site: p,
        kind: DistanceKind::Minkowski { k, weight },
        gauge: Some(params),
    })
}

/// `sqrt((x - p)^T M (x - p))`.
pub fn make_mahalanobis(p: Vector, m: DMatrix<f64>) -> Result<SiteFunction> {
    if m.nrows() != p.dim() {
        return Err(Error::DimensionMismatch {
            expected: p.dim(),
            got: m.nrows(),
        });
    }
    let (lo, hi) = check_spd(&m)?;
    let params = mahalanobis_gauge_params(lo, hi);
    Ok(SiteFunction {
        tau: tau_for_gauge(params),
        site: p,
        kind: DistanceKind::Mahalanobis {
            matrix: Arc::new(m),
        },
        gauge: Some(params),
    })
}

/// A caller-supplied gauge with declared parameters.
pub fn make_custom_gauge(p: Vector, gauge: Arc<dyn Gauge>, params: GaugeParams) -> SiteFunction {
    SiteFunction {
        tau: tau_for_gauge(params),
        site: p,
        kind: DistanceKind::CustomGauge { gauge, params },
        gauge: Some(params),
    }
}

/// `D(., p)` for the divergence of `spec`.
pub fn make_bregman(spec: &Arc<BregmanSpec>, p: Vector) -> Result<SiteFunction> {
    if p.dim() != spec.dim() {
        return Err(Error::DimensionMismatch {
            expected: spec.dim(),
            got: p.dim(),
        });
    }
    if !spec.domain().interior_contains(&p) {
        return Err(Error::SiteOutsideDomain);
    }
    Ok(SiteFunction {
        tau: spec.tau(),
        site: p,
        kind: DistanceKind::Bregman(spec.clone()),
        gauge: None,
    })
}

pub fn evaluate(f: &SiteFunction, x: &[f64]) -> Result<f64> {
    f.evaluate(x)
}

pub fn gradient(f: &SiteFunction, x: &[f64]) -> Result<Vec<f64>> {
    f.gradient(x)
}

pub fn hessian(f: &SiteFunction, x: &[f64]) -> Result<DMatrix<f64>> {
    f.hessian(x)
}

impl SiteFunction {
    pub fn site(&self) -> &Vector {
        &self.site
    }

    pub fn kind(&self) -> &DistanceKind {
        &self.kind
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn gauge_params(&self) -> Option<GaugeParams> {
        self.gauge
    }

    pub fn dim(&self) -> usize {
        self.site.dim()
    }

    pub fn family(&self) -> FamilyKind {
        match self.kind {
            DistanceKind::Bregman(_) => FamilyKind::Bregman,
            _ => FamilyKind::Scaling,
        }
    }

    pub fn bregman_spec(&self) -> Option<&Arc<BregmanSpec>> {
        match &self.kind {
            DistanceKind::Bregman(s) => Some(s),
            _ => None,
        }
    }

    /// Replaces the admissibility constant (e.g. with a measured value).
    pub fn with_tau(mut self, tau: f64) -> Self {
        self.tau = tau;
        self
    }

    /// The same function re-attached to a different site.
    pub fn resited(&self, p: Vector) -> Result<SiteFunction> {
        if p.dim() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: p.dim(),
            });
        }
        if let DistanceKind::Bregman(s) = &self.kind {
            if !s.domain().interior_contains(&p) {
                return Err(Error::SiteOutsideDomain);
            }
        }
        Ok(SiteFunction {
            site: p,
            kind: self.kind.clone(),
            tau: self.tau,
            gauge: self.gauge,
        })
    }

    /// Whether `x` lies where the function is defined.
    pub fn in_domain(&self, x: &[f64]) -> bool {
        match &self.kind {
            DistanceKind::Bregman(s) => s.domain().contains(x),
            _ => true,
        }
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: x.len(),
            });
        }
        Ok(())
    }

    pub fn evaluate(&self, x: &[f64]) -> Result<f64> {
        self.check_dim(x)?;
        if !self.in_domain(x) {
            return Err(Error::QueryOutsideDomain);
        }
        Ok(self.value_unchecked(x))
    }

    /// Value at `x` without dimension or domain checks.
    #[inline]
    pub fn value_unchecked(&self, x: &[f64]) -> f64 {
        let p = self.site.as_slice();
        match &self.kind {
            DistanceKind::Minkowski { k, weight } => {
                if *k == 2.0 {
                    weight * crate::geom::dist(x, p)
                } else {
                    let s: f64 = x.iter().zip(p).map(|(a, b)| (a - b).abs().powf(*k)).sum();
                    weight * s.powf(1.0 / k)
                }
            }
            DistanceKind::Mahalanobis { matrix } => {
                let u: Vec<f64> = x.iter().zip(p).map(|(a, b)| a - b).collect();
                bregman::quad_form(matrix, &u, &u).max(0.0).sqrt()
            }
            DistanceKind::CustomGauge { gauge, .. } => {
                let u: Vec<f64> = x.iter().zip(p).map(|(a, b)| a - b).collect();
                gauge.value(&u)
            }
            DistanceKind::Bregman(s) => bregman::divergence(s.generator(), x, p),
        }
    }

    fn offset_nonzero(&self, x: &[f64]) -> Result<Vec<f64>> {
        let u: Vec<f64> = x.iter().zip(self.site.iter()).map(|(a, b)| a - b).collect();
        if u.iter().all(|v| *v == 0.0) {
            return Err(Error::GradientUndefinedAtSite);
        }
        Ok(u)
    }

    pub fn gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(x)?;
        match &self.kind {
            DistanceKind::Minkowski { k, weight } => {
                let u = self.offset_nonzero(x)?;
                Ok(gauge::lk_gradient(&u, *k).into_iter().map(|g| weight * g).collect())
            }
            DistanceKind::Mahalanobis { matrix } => {
                let u = self.offset_nonzero(x)?;
                let mu = bregman::mat_vec(matrix, &u);
                let f = crate::geom::dot(&u, &mu).sqrt();
                Ok(mu.into_iter().map(|v| v / f).collect())
            }
            DistanceKind::CustomGauge { gauge, .. } => {
                let u = self.offset_nonzero(x)?;
                Ok(gauge.gradient(&u))
            }
            DistanceKind::Bregman(s) => {
                if !s.domain().contains(x) {
                    return Err(Error::QueryOutsideDomain);
                }
                Ok(bregman::divergence_gradient(s.generator(), x, &self.site))
            }
        }
    }

    pub fn hessian(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        self.check_dim(x)?;
        match &self.kind {
            DistanceKind::Minkowski { k, weight } => {
                let u = self.offset_nonzero(x)?;
                gauge::lk_hessian(&u, *k)
                    .map(|h| h * *weight)
                    .ok_or_else(|| Error::HessianUndefined(x.to_vec()))
            }
            DistanceKind::Mahalanobis { matrix } => {
                let u = self.offset_nonzero(x)?;
                let mu = bregman::mat_vec(matrix, &u);
                let f = crate::geom::dot(&u, &mu).sqrt();
                let d = u.len();
                Ok(DMatrix::from_fn(d, d, |i, j| {
                    (matrix[(i, j)] - mu[i] * mu[j] / (f * f)) / f
                }))
            }
            DistanceKind::CustomGauge { gauge, .. } => {
                let u = self.offset_nonzero(x)?;
                Ok(gauge.hessian(&u))
            }
            DistanceKind::Bregman(s) => {
                if !s.domain().contains(x) {
                    return Err(Error::QueryOutsideDomain);
                }
                Ok(bregman::generator_hessian(s.generator(), x))
            }
        }
    }

    /// Whether two functions may share one index.
    pub fn compatible_with(&self, other: &SiteFunction) -> bool {
        if self.dim() != other.dim() {
            return false;
        }
        match (&self.kind, &other.kind) {
            (DistanceKind::Bregman(a), DistanceKind::Bregman(b)) => Arc::ptr_eq(a, b),
            (DistanceKind::Bregman(_), _) | (_, DistanceKind::Bregman(_)) => false,
            _ => true,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(x: &[f64]) -> Vector {
        Vector::new(x.to_vec()).unwrap()
    }

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * (1.0 + b.abs())
    }

    #[test]
    fn minkowski_examples() {
        let f = make_minkowski(v(&[0.0, 0.0]), 2.0, 1.0).unwrap();
        assert_eq!(f.evaluate(&[3.0, 4.0]).unwrap(), 5.0);
        let f2 = make_minkowski(v(&[0.0, 0.0]), 2.0, 2.0).unwrap();
        assert_eq!(f2.evaluate(&[3.0, 4.0]).unwrap(), 10.0);
        let f3 = make_minkowski(v(&[0.0, 0.0]), 3.0, 1.0).unwrap();
        assert!(close(f3.evaluate(&[1.0, 1.0]).unwrap(), 2f64.powf(1.0 / 3.0), 1e-14));
        assert!(matches!(make_minkowski(v(&[0.0]), 1.0, 1.0), Err(Error::NotSmooth(_))));
        assert!(make_minkowski(v(&[0.0]), 2.0, 0.0).is_err());
    }

    #[test]
    fn euclidean_tau_from_formula() {
        let f = make_minkowski(v(&[0.0, 0.0]), 2.0, 3.0).unwrap();
        assert!(close(f.tau(), 2f64.sqrt(), 1e-6));
    }

    #[test]
    fn mahalanobis_examples() {
        let id = make_mahalanobis(v(&[0.0, 0.0]), DMatrix::identity(2, 2)).unwrap();
        let l2 = make_minkowski(v(&[0.0, 0.0]), 2.0, 1.0).unwrap();
        for x in [[3.0, 4.0], [-1.0, 0.5], [0.2, -7.0]] {
            assert!(close(id.evaluate(&x).unwrap(), l2.evaluate(&x).unwrap(), 1e-14));
        }
        let m = make_mahalanobis(v(&[0.0, 0.0]), DMatrix::from_row_slice(2, 2, &[4.0, 0.0, 0.0, 1.0]))
            .unwrap();
        assert!(close(m.evaluate(&[1.0, 1.0]).unwrap(), 5f64.sqrt(), 1e-14));
        assert_eq!(m.gauge_params().unwrap().gamma, 0.5);
        let bad = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(matches!(make_mahalanobis(v(&[0.0, 0.0]), bad), Err(Error::NotPositiveDefinite)));
        let asym = DMatrix::from_row_slice(2, 2, &[1.0, 0.1, 0.0, 1.0]);
        assert!(make_mahalanobis(v(&[0.0, 0.0]), asym).is_err());
    }

    #[test]
    fn bregman_examples() {
        let sq = BregmanSpec::squared_euclidean(2).unwrap();
        let f = make_bregman(&sq, v(&[0.0, 0.0])).unwrap();
        assert_eq!(f.evaluate(&[1.0, 2.0]).unwrap(), 5.0);
        assert_eq!(f.evaluate(&[0.0, 0.0]).unwrap(), 0.0);
        assert_eq!(f.gradient(&[1.0, 0.0]).unwrap(), vec![2.0, 0.0]);
        let h = f.hessian(&[0.3, 0.1]).unwrap();
        assert_eq!(h, DMatrix::identity(2, 2) * 2.0);

        let dom = crate::geom::AlignedBox::new(v(&[0.1]), v(&[4.0])).unwrap();
        let kl = BregmanSpec::generalized_kl(dom.clone()).unwrap();
        let fk = make_bregman(&kl, v(&[1.0])).unwrap();
        assert!(close(fk.evaluate(&[2.0]).unwrap(), 2.0 * 2f64.ln() - 1.0, 1e-14));
        assert!(close(fk.hessian(&[2.0]).unwrap()[(0, 0)], 0.5, 1e-15));
        assert!(matches!(make_bregman(&kl, v(&[5.0])), Err(Error::SiteOutsideDomain)));
        assert!(matches!(fk.evaluate(&[0.01]), Err(Error::QueryOutsideDomain)));

        let is = BregmanSpec::itakura_saito(dom).unwrap();
        let fi = make_bregman(&is, v(&[1.0])).unwrap();
        assert!(close(fi.evaluate(&[2.0]).unwrap(), 1.0 - 2f64.ln(), 1e-14));
        assert!(close(fi.gradient(&[2.0]).unwrap()[0], 0.5, 1e-15));

        let kl2 = BregmanSpec::generalized_kl(
            crate::geom::AlignedBox::new(v(&[0.1, 0.1]), v(&[2.0, 2.0])).unwrap(),
        )
        .unwrap();
        let f2 = make_bregman(&kl2, v(&[1.0, 1.0])).unwrap();
        assert_eq!(f2.evaluate(&[1.0, 1.0]).unwrap(), 0.0);
    }

    #[test]
    fn gradient_examples() {
        let f = make_minkowski(v(&[0.0, 0.0]), 2.0, 1.0).unwrap();
        let g = f.gradient(&[3.0, 4.0]).unwrap();
        assert!(close(g[0], 0.6, 1e-15) && close(g[1], 0.8, 1e-15));
        assert!(matches!(f.gradient(&[0.0, 0.0]), Err(Error::GradientUndefinedAtSite)));
        let h = f.hessian(&[1.0, 0.0]).unwrap();
        assert!(h[(0, 0)].abs() < 1e-15 && close(h[(1, 1)], 1.0, 1e-15));
    }

    #[test]
    fn compatibility_rules() {
        let a = make_minkowski(v(&[0.0, 0.0]), 2.0, 1.0).unwrap();
        let b = make_mahalanobis(v(&[1.0, 0.0]), DMatrix::identity(2, 2)).unwrap();
        let sq = BregmanSpec::squared_euclidean(2).unwrap();
        let c = make_bregman(&sq, v(&[0.0, 0.0])).unwrap();
        assert!(a.compatible_with(&b));
        assert!(!a.compatible_with(&c));
        let c2 = make_bregman(&sq, v(&[1.0, 0.0])).unwrap();
        assert!(c.compatible_with(&c2));
    }
}
