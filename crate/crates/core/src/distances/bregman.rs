//! Bregman generators and their divergences.

use std::fmt::Debug;
use std::sync::Arc;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::geom::{dot, sym_eig_extremes, AlignedBox};

/// A strictly convex generator supplied by the caller.
pub trait ConvexGenerator: Send + Sync + Debug {
    fn name(&self) -> &str;
    fn value(&self, x: &[f64]) -> f64;
    fn gradient(&self, x: &[f64]) -> Vec<f64>;
    fn hessian(&self, x: &[f64]) -> DMatrix<f64>;
}

#[derive(Clone, Debug)]
pub enum Generator {
    /// `F(x) = x^T M x`; `M = I` gives the squared Euclidean distance.
    SquaredMahalanobis(Arc<DMatrix<f64>>),
    /// `F(x) = sum x_i ln x_i`.
    GeneralizedKl,
    /// `F(x) = -sum ln x_i`.
    ItakuraSaito,
    Custom(Arc<dyn ConvexGenerator>),
}

impl Generator {
    pub fn name(&self) -> &str {
        match self {
            Generator::SquaredMahalanobis(_) => "squared-mahalanobis",
            Generator::GeneralizedKl => "kl",
            Generator::ItakuraSaito => "itakura-saito",
            Generator::Custom(g) => g.name(),
        }
    }

    fn needs_positive(&self) -> bool {
        matches!(self, Generator::GeneralizedKl | Generator::ItakuraSaito)
    }
}

/// Working domain of a divergence.
#[derive(Clone, Debug, PartialEq)]
pub enum Domain {
    Whole,
    Box(AlignedBox),
    /// `{x : x_i > 0, sum x_i < 1}`.
    Simplex,
}

impl Domain {
    /// Closed membership (queries).
    pub fn contains(&self, x: &[f64]) -> bool {
        match self {
            Domain::Whole => true,
            Domain::Box(b) => b.contains(x),
            Domain::Simplex => x.iter().all(|v| *v > 0.0) && x.iter().sum::<f64>() < 1.0,
        }
    }

    /// Strict interior membership (sites).
    pub fn interior_contains(&self, x: &[f64]) -> bool {
        match self {
            Domain::Whole => true,
            Domain::Box(b) => b.interior_contains(x),
            Domain::Simplex => self.contains(x),
        }
    }

    pub fn contains_ball(&self, b: &crate::geom::EuclideanBall) -> bool {
        match self {
            Domain::Whole => true,
            Domain::Box(bx) => bx.contains_ball(b),
            Domain::Simplex => {
                let r = b.radius;
                let d = b.center.dim() as f64;
                b.center.iter().all(|c| c - r > 0.0)
                    && b.center.iter().sum::<f64>() + r * d.sqrt() < 1.0
            }
        }
    }
}

/// A Bregman divergence: generator, domain and certified admissibility constant.
#[derive(Debug)]
pub struct BregmanSpec {
    generator: Generator,
    domain: Domain,
    dim: usize,
    tau: f64,
}

impl BregmanSpec {
    /// Validates the generator/domain pair and certifies `tau` over the domain.
    pub fn new(generator: Generator, domain: Domain, dim: usize) -> Result<Arc<Self>> {
        Self::validate(&generator, &domain, dim)?;
        let tau = crate::admissibility::certify_generator_tau(&generator, &domain, dim)?;
        Ok(Arc::new(BregmanSpec {
            generator,
            domain,
            dim,
            tau,
        }))
    }

    /// Same as [`BregmanSpec::new`] with a caller-declared `tau`.
    pub fn with_tau(generator: Generator, domain: Domain, dim: usize, tau: f64) -> Result<Arc<Self>> {
        Self::validate(&generator, &domain, dim)?;
        if !(tau >= 1.0) || !tau.is_finite() {
            return Err(Error::TauGate(tau));
        }
        Ok(Arc::new(BregmanSpec {
            generator,
            domain,
            dim,
            tau,
        }))
    }

    pub fn squared_euclidean(dim: usize) -> Result<Arc<Self>> {
        Self::new(
            Generator::SquaredMahalanobis(Arc::new(DMatrix::identity(dim, dim))),
            Domain::Whole,
            dim,
        )
    }

    pub fn generalized_kl(domain: AlignedBox) -> Result<Arc<Self>> {
        let d = domain.dim();
        Self::new(Generator::GeneralizedKl, Domain::Box(domain), d)
    }

    pub fn itakura_saito(domain: AlignedBox) -> Result<Arc<Self>> {
        let d = domain.dim();
        Self::new(Generator::ItakuraSaito, Domain::Box(domain), d)
    }

    fn validate(generator: &Generator, domain: &Domain, dim: usize) -> Result<()> {
        if dim == 0 {
            return Err(Error::InvalidParameter("dimension 0".into()));
        }
        if let Domain::Box(b) = domain {
            if b.dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: b.dim(),
                });
            }
        }
        if let Generator::SquaredMahalanobis(m) = generator {
            if m.nrows() != dim || m.ncols() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: m.nrows(),
                });
            }
            crate::distances::check_spd(m)?;
        }
        if generator.needs_positive() {
            let ok = match domain {
                Domain::Box(b) => b.low.iter().all(|l| *l > 0.0),
                Domain::Simplex => true,
                Domain::Whole => false,
            };
            if !ok {
                return Err(Error::InvalidParameter(format!(
                    "{} needs a domain inside the positive orthant",
                    generator.name()
                )));
            }
        }
        Ok(())
    }

    pub fn generator(&self) -> &Generator {
        &self.generator
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    fn check(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: x.len(),
            });
        }
        if !self.domain.contains(x) {
            return Err(Error::QueryOutsideDomain);
        }
        Ok(())
    }

    /// `F(x)`.
    pub fn f(&self, x: &[f64]) -> Result<f64> {
        self.check(x)?;
        Ok(generator_value(&self.generator, x))
    }

    /// `grad F(x)`.
    pub fn grad_f(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check(x)?;
        Ok(generator_gradient(&self.generator, x))
    }

    /// `hess F(x)`.
    pub fn hess_f(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        self.check(x)?;
        Ok(generator_hessian(&self.generator, x))
    }

    /// `D(q, p)`.
    pub fn divergence(&self, q: &[f64], p: &[f64]) -> Result<f64> {
        self.check(q)?;
        self.check(p)?;
        Ok(divergence(&self.generator, q, p))
    }

    /// Gradient of `D(., p)` at `q`.
    pub fn divergence_gradient(&self, q: &[f64], p: &[f64]) -> Result<Vec<f64>> {
        self.check(q)?;
        self.check(p)?;
        Ok(divergence_gradient(&self.generator, q, p))
    }

    /// Extreme eigenvalues of `hess F(x)`.
    pub fn hessian_extremes(&self, x: &[f64]) -> Result<(f64, f64)> {
        self.check(x)?;
        Ok(hessian_extremes(&self.generator, x))
    }
}

pub(crate) fn generator_value(g: &Generator, x: &[f64]) -> f64 {
    match g {
        Generator::SquaredMahalanobis(m) => quad_form(m, x, x),
        Generator::GeneralizedKl => x.iter().map(|v| v * v.ln()).sum(),
        Generator::ItakuraSaito => -x.iter().map(|v| v.ln()).sum::<f64>(),
        Generator::Custom(c) => c.value(x),
    }
}

pub(crate) fn generator_gradient(g: &Generator, x: &[f64]) -> Vec<f64> {
    match g {
        Generator::SquaredMahalanobis(m) => mat_vec(m, x).into_iter().map(|v| 2.0 * v).collect(),
        Generator::GeneralizedKl => x.iter().map(|v| v.ln() + 1.0).collect(),
        Generator::ItakuraSaito => x.iter().map(|v| -1.0 / v).collect(),
        Generator::Custom(c) => c.gradient(x),
    }
}

pub(crate) fn generator_hessian(g: &Generator, x: &[f64]) -> DMatrix<f64> {
    let d = x.len();
    match g {
        Generator::SquaredMahalanobis(m) => m.as_ref() * 2.0,
        Generator::GeneralizedKl => DMatrix::from_fn(d, d, |i, j| if i == j { 1.0 / x[i] } else { 0.0 }),
        Generator::ItakuraSaito => {
            DMatrix::from_fn(d, d, |i, j| if i == j { 1.0 / (x[i] * x[i]) } else { 0.0 })
        }
        Generator::Custom(c) => c.hessian(x),
    }
}

pub(crate) fn hessian_extremes(g: &Generator, x: &[f64]) -> (f64, f64) {
    let diag = |vals: &mut dyn Iterator<Item = f64>| {
        vals.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
            (lo.min(v), hi.max(v))
        })
    };
    match g {
        Generator::GeneralizedKl => diag(&mut x.iter().map(|v| 1.0 / v)),
        Generator::ItakuraSaito => diag(&mut x.iter().map(|v| 1.0 / (v * v))),
        _ => sym_eig_extremes(&generator_hessian(g, x)),
    }
}

/// `D(q, p)` using closed forms where available for accuracy.
pub(crate) fn divergence(g: &Generator, q: &[f64], p: &[f64]) -> f64 {
    match g {
        Generator::SquaredMahalanobis(m) => {
            let u: Vec<f64> = q.iter().zip(p).map(|(a, b)| a - b).collect();
            quad_form(m, &u, &u)
        }
        Generator::GeneralizedKl => q
            .iter()
            .zip(p)
            .map(|(a, b)| a * (a / b).ln() - a + b)
            .sum(),
        Generator::ItakuraSaito => q
            .iter()
            .zip(p)
            .map(|(a, b)| {
                let r = a / b;
                r - r.ln() - 1.0
            })
            .sum(),
        Generator::Custom(c) => {
            let gp = c.gradient(p);
            let u: Vec<f64> = q.iter().zip(p).map(|(a, b)| a - b).collect();
            c.value(q) - c.value(p) - dot(&gp, &u)
        }
    }
}

pub(crate) fn divergence_gradient(g: &Generator, q: &[f64], p: &[f64]) -> Vec<f64> {
    match g {
        Generator::SquaredMahalanobis(m) => {
            let u: Vec<f64> = q.iter().zip(p).map(|(a, b)| a - b).collect();
            mat_vec(m, &u).into_iter().map(|v| 2.0 * v).collect()
        }
        Generator::GeneralizedKl => q.iter().zip(p).map(|(a, b)| (a / b).ln()).collect(),
        Generator::ItakuraSaito => q.iter().zip(p).map(|(a, b)| 1.0 / b - 1.0 / a).collect(),
        Generator::Custom(c) => {
            let gq = c.gradient(q);
            let gp = c.gradient(p);
            gq.iter().zip(&gp).map(|(a, b)| a - b).collect()
        }
    }
}

pub(crate) fn mat_vec(m: &DMatrix<f64>, x: &[f64]) -> Vec<f64> {
    let d = x.len();
    (0..d)
        .map(|i| (0..d).map(|j| m[(i, j)] * x[j]).sum())
        .collect()
}

pub(crate) fn quad_form(m: &DMatrix<f64>, x: &[f64], y: &[f64]) -> f64 {
    let d = x.len();
    let mut s = 0.0;
    for i in 0..d {
        let mut r = 0.0;
        for j in 0..d {
            r += m[(i, j)] * y[j];
        }
        s += x[i] * r;
    }
    s
}
