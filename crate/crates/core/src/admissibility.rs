//! Measured admissibility constants, Bregman complexity measures and
//! numerical validators for the separation bounds.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::distances::{BregmanSpec, Domain, Generator, SiteFunction};
use crate::error::{Error, Result};
use crate::geom::{dot, norm, sym_eig_extremes, sym_norm, AlignedBox, EuclideanBall, Vector};
use crate::par::{self, Execution};

/// Largest admissibility constant accepted by the index builders.
pub const TAU_GATE: f64 = 1e3;

/// Inflation applied to sampled suprema before they are used as constants.
pub const SAFETY: f64 = 1.1;

/// Ratios below this are excluded to avoid 0/0.
const TINY: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub enum Region {
    Box(AlignedBox),
    Ball(EuclideanBall),
}

impl Region {
    pub fn dim(&self) -> usize {
        match self {
            Region::Box(b) => b.dim(),
            Region::Ball(b) => b.dim(),
        }
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        match self {
            Region::Box(b) => b
                .low
                .iter()
                .zip(b.high.iter())
                .map(|(l, h)| l + (h - l) * rng.random::<f64>())
                .collect(),
            Region::Ball(b) => {
                let d = b.dim();
                let r = b.radius * rng.random::<f64>().powf(1.0 / d as f64);
                let dir = random_direction(d, rng);
                b.center.iter().zip(&dir).map(|(c, u)| c + r * u).collect()
            }
        }
    }
}

pub(crate) fn random_direction(d: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    loop {
        let g: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        let n = norm(&g);
        if n > 1e-12 {
            return g.into_iter().map(|x| x / n).collect();
        }
    }
}

/// Uniform samples from a region, deterministic given the seed.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleSpec {
    pub region: Region,
    pub count: usize,
    pub seed: u64,
}

impl SampleSpec {
    pub fn new(region: Region, count: usize, seed: u64) -> Result<Self> {
        if count == 0 {
            return Err(Error::InvalidParameter("sample count must be positive".into()));
        }
        Ok(SampleSpec { region, count, seed })
    }

    pub fn points(&self) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        (0..self.count).map(|_| self.region.sample(&mut rng)).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(tag = "state", rename_all = "lowercase")]
pub enum Similarity {
    /// `D(q,p) / ||q-p||^2` lies in `[1, mu]` after multiplying `F` by `rescale`.
    Bounded { mu: f64, rescale: f64 },
    Unbounded,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ComplexityReport {
    pub samples_used: usize,
    pub tau_grad: f64,
    pub tau_hess: f64,
    pub tau: f64,
    pub mu_asym: Option<f64>,
    pub mu_sim: Option<Similarity>,
    pub mu_dir: f64,
}

impl ComplexityReport {
    /// One `key: value` pair per line.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        s.push_str(&format!("samples_used: {}\n", self.samples_used));
        s.push_str(&format!("tau_grad: {}\n", self.tau_grad));
        s.push_str(&format!("tau_hess: {}\n", self.tau_hess));
        s.push_str(&format!("tau: {}\n", self.tau));
        match self.mu_asym {
            Some(m) => s.push_str(&format!("mu_asym: {m}\n")),
            None => s.push_str("mu_asym: n/a\n"),
        }
        match self.mu_sim {
            Some(Similarity::Bounded { mu, rescale }) => {
                s.push_str(&format!("mu_sim: {mu}\nmu_sim_rescale: {rescale}\n"))
            }
            Some(Similarity::Unbounded) => s.push_str("mu_sim: unbounded\n"),
            None => s.push_str("mu_sim: n/a\n"),
        }
        s.push_str(&format!("mu_dir: {}\n", self.mu_dir));
        s
    }
}

#[derive(Clone, Copy, Default)]
struct Maxes {
    used: usize,
    tg: f64,
    th: f64,
    dir: f64,
}

impl Maxes {
    fn merge(self, o: Maxes) -> Maxes {
        Maxes {
            used: self.used + o.used,
            tg: self.tg.max(o.tg),
            th: self.th.max(o.th),
            dir: self.dir.max(o.dir),
        }
    }
}

/// Sample maxima of the admissibility ratios of `f` over `s`.
pub fn measure_admissibility(f: &SiteFunction, s: &SampleSpec) -> Result<ComplexityReport> {
    let pts = s.points();
    let p = f.site().as_slice().to_vec();
    let per = par::map(Execution::best(), &pts, |x| {
        let mut m = Maxes::default();
        if !f.in_domain(x) {
            return m;
        }
        let Ok(v) = f.evaluate(x) else { return m };
        if v < TINY {
            return m;
        }
        let u: Vec<f64> = x.iter().zip(&p).map(|(a, b)| a - b).collect();
        let un = norm(&u);
        let Ok(g) = f.gradient(x) else { return m };
        m.used = 1;
        m.tg = norm(&g) * un / v;
        m.dir = dot(&g, &u) / v;
        m.th = match f.hessian(x) {
            Ok(h) => (sym_norm(&h) * un * un / v).sqrt(),
            Err(_) => f64::INFINITY,
        };
        m
    });
    let m = per.into_iter().fold(Maxes::default(), Maxes::merge);
    if m.used < 10 {
        return Err(Error::DegenerateSample { usable: m.used });
    }
    Ok(ComplexityReport {
        samples_used: m.used,
        tau_grad: m.tg,
        tau_hess: m.th,
        tau: m.tg.max(m.th).max(1.0),
        mu_asym: None,
        mu_sim: None,
        mu_dir: m.dir,
    })
}

#[derive(Clone, Copy)]
struct PairStats {
    used: usize,
    tg: f64,
    th: f64,
    dir: f64,
    asym: f64,
    sim_lo: f64,
    sim_hi: f64,
}

impl Default for PairStats {
    fn default() -> Self {
        PairStats {
            used: 0,
            tg: 0.0,
            th: 0.0,
            dir: 0.0,
            asym: 0.0,
            sim_lo: f64::INFINITY,
            sim_hi: 0.0,
        }
    }
}

impl PairStats {
    fn merge(self, o: PairStats) -> PairStats {
        PairStats {
            used: self.used + o.used,
            tg: self.tg.max(o.tg),
            th: self.th.max(o.th),
            dir: self.dir.max(o.dir),
            asym: self.asym.max(o.asym),
            sim_lo: self.sim_lo.min(o.sim_lo),
            sim_hi: self.sim_hi.max(o.sim_hi),
        }
    }
}

/// Statistics of the ordered pair `(q, p)`.
fn ordered_pair_stats(g: &Generator, q: &[f64], p: &[f64]) -> PairStats {
    let mut s = PairStats::default();
    let dqp = divergence(g, q, p);
    let dpq = divergence(g, p, q);
    if !(dqp >= TINY) || !(dpq >= TINY) {
        return s;
    }
    let u: Vec<f64> = q.iter().zip(p).map(|(a, b)| a - b).collect();
    let un = norm(&u);
    let grad = divergence_gradient(g, q, p);
    let (lo, hi) = hessian_extremes(g, q);
    s.used = 1;
    s.tg = norm(&grad) * un / dqp;
    s.th = (lo.abs().max(hi.abs()) * un * un / dqp).sqrt();
    s.dir = dot(&grad, &u) / dqp;
    s.asym = dqp / dpq;
    let r = dqp / (un * un);
    s.sim_lo = r;
    s.sim_hi = r;
    s
}

fn divergence(g: &Generator, q: &[f64], p: &[f64]) -> f64 {
    crate::distances::bregman_divergence(g, q, p)
}

fn divergence_gradient(g: &Generator, q: &[f64], p: &[f64]) -> Vec<f64> {
    crate::distances::bregman_divergence_gradient(g, q, p)
}

fn hessian_extremes(g: &Generator, x: &[f64]) -> (f64, f64) {
    crate::distances::bregman_hessian_extremes(g, x)
}

fn report_from_pairs(s: PairStats) -> Result<ComplexityReport> {
    if s.used == 0 {
        return Err(Error::DegenerateSample { usable: 0 });
    }
    let mu_sim = if s.sim_lo.is_finite() && s.sim_lo > TINY && s.sim_hi.is_finite() {
        if s.sim_lo >= 1.0 {
            Similarity::Bounded {
                mu: s.sim_hi,
                rescale: 1.0,
            }
        } else {
            Similarity::Bounded {
                mu: s.sim_hi / s.sim_lo,
                rescale: 1.0 / s.sim_lo,
            }
        }
    } else {
        Similarity::Unbounded
    };
    Ok(ComplexityReport {
        samples_used: s.used,
        tau_grad: s.tg,
        tau_hess: s.th,
        tau: s.tg.max(s.th).max(1.0),
        mu_asym: Some(s.asym),
        mu_sim: Some(mu_sim),
        mu_dir: s.dir,
    })
}

/// Complexity of a divergence over `count` random pairs from the region.
/// Every pair is used in both orders.
pub fn measure_bregman_complexity(spec: &BregmanSpec, s: &SampleSpec) -> Result<ComplexityReport> {
    let pts = SampleSpec {
        count: 2 * s.count,
        ..s.clone()
    }
    .points();
    let dom = spec.domain();
    let g = spec.generator();
    let per = par::map_range(Execution::best(), s.count, |i| {
        let (q, p) = (&pts[2 * i], &pts[2 * i + 1]);
        if !dom.contains(q) || !dom.contains(p) {
            return PairStats::default();
        }
        ordered_pair_stats(g, q, p).merge(ordered_pair_stats(g, p, q))
    });
    report_from_pairs(per.into_iter().fold(PairStats::default(), PairStats::merge))
}

/// Certified admissibility constant of a divergence over its domain.
///
/// Quadratic generators use the exact supremum. Others take the sample
/// maximum over far pairs, near-coincident pairs and domain corners, then
/// inflate it by [`SAFETY`].
pub(crate) fn certify_generator_tau(g: &Generator, domain: &Domain, dim: usize) -> Result<f64> {
    if let Generator::SquaredMahalanobis(m) = g {
        let (lo, hi) = sym_eig_extremes(m);
        let tg = (lo + hi) / (lo * hi).sqrt();
        let th = (2.0 * hi / lo).sqrt();
        return Ok(tg.max(th).max(1.0));
    }
    let bx = match domain {
        Domain::Box(b) => b.clone(),
        Domain::Simplex => AlignedBox::new(Vector::zeros(dim), Vector::from_vec(vec![1.0; dim]))?,
        Domain::Whole => {
            return Err(Error::InvalidParameter(
                "certifying tau needs a bounded domain; declare tau explicitly".into(),
            ))
        }
    };
    let base = 3000usize;
    let mut rng = ChaCha8Rng::seed_from_u64(0x7a0_5eed);
    let mut anchors: Vec<Vec<f64>> = Vec::with_capacity(base + (1 << dim.min(10)));
    for i in 0..base {
        let x: Vec<f64> = (0..dim)
            .map(|j| {
                let (l, h) = (bx.low[j], bx.high[j]);
                if i % 2 == 1 && rng.random::<f64>() < 0.5 {
                    if rng.random::<bool>() {
                        l
                    } else {
                        h
                    }
                } else {
                    l + (h - l) * rng.random::<f64>()
                }
            })
            .collect();
        anchors.push(x);
    }
    if dim <= 10 {
        for mask in 0..(1usize << dim) {
            anchors.push(
                (0..dim)
                    .map(|j| if mask >> j & 1 == 1 { bx.high[j] } else { bx.low[j] })
                    .collect(),
            );
        }
    }
    let partners: Vec<Vec<Vec<f64>>> = anchors
        .iter()
        .map(|x| {
            let mut ps = Vec::with_capacity(dim + 2);
            ps.push(Region::Box(bx.clone()).sample(&mut rng));
            let local = |dir: &[f64]| -> Vec<f64> {
                x.iter()
                    .zip(dir)
                    .enumerate()
                    .map(|(j, (xj, dj))| {
                        let h = 1e-3 * (bx.high[j] - bx.low[j]);
                        let c = xj + h * dj;
                        if c > bx.high[j] || c < bx.low[j] {
                            xj - h * dj
                        } else {
                            c
                        }
                    })
                    .collect()
            };
            for j in 0..dim {
                let mut e = vec![0.0; dim];
                e[j] = 1.0;
                ps.push(local(&e));
            }
            ps.push(local(&random_direction(dim, &mut rng)));
            ps
        })
        .collect();
    let stats = par::map_range(Execution::best(), anchors.len(), |i| {
        let x = &anchors[i];
        partners[i]
            .iter()
            .filter(|p| domain.contains(p) && domain.contains(x))
            .fold(PairStats::default(), |acc, p| {
                acc.merge(ordered_pair_stats(g, x, p))
                    .merge(ordered_pair_stats(g, p, x))
            })
    })
    .into_iter()
    .fold(PairStats::default(), PairStats::merge);
    if stats.used == 0 {
        return Err(Error::DegenerateSample { usable: 0 });
    }
    let tau = (stats.tg.max(stats.th) * SAFETY).max(1.0);
    if !tau.is_finite() || tau > TAU_GATE {
        return Err(Error::TauGate(tau));
    }
    Ok(tau)
}

/// Measured extremes of a function and its derivatives over a ball.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BoundReport {
    pub holds: bool,
    pub f_plus: f64,
    pub f_minus: f64,
    pub grad_plus: f64,
    pub hess_plus: f64,
    pub kappa: f64,
}

/// Checks `f+ <= f- k/(k-1)`, `|grad f|+ <= f+/(k diam)` and
/// `|hess f|+ <= f+/(k diam)^2` over `s.count` samples of `b` (half of them
/// on its boundary), each with slack `1 + 1e-9`.
pub fn check_bound_lemma(
    f: &SiteFunction,
    b: &EuclideanBall,
    kappa: f64,
    s: &SampleSpec,
) -> Result<BoundReport> {
    if !(kappa > 1.0) {
        return Err(Error::InvalidParameter(format!("kappa {kappa} must exceed 1")));
    }
    let required = f.tau() * kappa;
    let ratio = crate::geom::separation_ratio(f.site(), b)?;
    if ratio < required {
        return Err(Error::InsufficientSeparation {
            index: 0,
            ratio,
            required,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(s.seed);
    let d = b.dim();
    let pts: Vec<Vec<f64>> = (0..s.count.max(2))
        .map(|i| {
            if i % 2 == 0 {
                Region::Ball(b.clone()).sample(&mut rng)
            } else {
                let u = random_direction(d, &mut rng);
                b.center.iter().zip(&u).map(|(c, x)| c + b.radius * x).collect()
            }
        })
        .collect();
    let per = par::map(Execution::best(), &pts, |x| -> Result<(f64, f64, f64)> {
        let v = f.evaluate(x)?;
        let g = norm(&f.gradient(x)?);
        let h = f.hessian(x).map(|h| sym_norm(&h)).unwrap_or(0.0);
        Ok((v, g, h))
    });
    let (mut fp, mut fm, mut gp, mut hp) = (0.0f64, f64::INFINITY, 0.0f64, 0.0f64);
    for r in per {
        let (v, g, h) = r?;
        fp = fp.max(v);
        fm = fm.min(v);
        gp = gp.max(g);
        hp = hp.max(h);
    }
    let slack = 1.0 + 1e-9;
    let kd = kappa * b.diam();
    let holds = fp <= fm * kappa / (kappa - 1.0) * slack
        && gp <= fp / kd * slack
        && hp <= fp / (kd * kd) * slack;
    Ok(BoundReport {
        holds,
        f_plus: fp,
        f_minus: fm,
        grad_plus: gp,
        hess_plus: hp,
        kappa,
    })
}

/// Residual of the three-point identity
/// `D(q,p2) + D(p2,p1) - D(q,p1) - <q - p2, grad F(p1) - grad F(p2)>`.
pub fn check_three_point(spec: &BregmanSpec, q: &[f64], p1: &[f64], p2: &[f64]) -> Result<f64> {
    let a = spec.divergence(q, p2)?;
    let b = spec.divergence(p2, p1)?;
    let c = spec.divergence(q, p1)?;
    let g1 = spec.grad_f(p1)?;
    let g2 = spec.grad_f(p2)?;
    let inner: f64 = q
        .iter()
        .zip(p2)
        .zip(g1.iter().zip(&g2))
        .map(|((qi, pi), (a1, a2))| (qi - pi) * (a1 - a2))
        .sum();
    Ok((a + b - c - inner).abs())
}

/// Residual of `<grad_q D(q,p), q - p> = D(q,p) + D(p,q)`.
pub fn check_directional_identity(spec: &BregmanSpec, q: &[f64], p: &[f64]) -> Result<f64> {
    let g = spec.divergence_gradient(q, p)?;
    let u: Vec<f64> = q.iter().zip(p).map(|(a, b)| a - b).collect();
    Ok((dot(&g, &u) - spec.divergence(q, p)? - spec.divergence(p, q)?).abs())
}

/// Eigenvalue sandwich of `D(q,p)` and `|grad_q D(q,p)|` along the segment,
/// using `segment_samples` interior points plus both endpoints.
pub fn check_eigen_sandwich(spec: &BregmanSpec, q: &[f64], p: &[f64], segment_samples: usize) -> Result<bool> {
    let dqp = spec.divergence(q, p)?;
    let grad = norm(&spec.divergence_gradient(q, p)?);
    let u: Vec<f64> = q.iter().zip(p).map(|(a, b)| a - b).collect();
    let un = norm(&u);
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    let m = segment_samples + 1;
    for j in 0..=m {
        let t = j as f64 / m as f64;
        let x: Vec<f64> = p.iter().zip(&u).map(|(a, b)| a + t * b).collect();
        let (a, b) = spec.hessian_extremes(&x)?;
        lo = lo.min(a);
        hi = hi.max(b);
    }
    let slack = 1.0 + 1e-6;
    let tiny = 1e-300;
    Ok(0.5 * lo * un * un <= dqp * slack + tiny
        && dqp <= 0.5 * hi * un * un * slack + tiny
        && lo * un <= grad * slack + tiny
        && grad <= hi * un * slack + tiny)
}

/// Central finite-difference gradient with step `1e-5 (1 + |x|)`.
pub fn finite_difference_gradient(f: &dyn Fn(&[f64]) -> f64, x: &[f64]) -> Vec<f64> {
    let h = 1e-5 * (1.0 + norm(x));
    let mut y = x.to_vec();
    (0..x.len())
        .map(|i| {
            y[i] = x[i] + h;
            let a = f(&y);
            y[i] = x[i] - h;
            let b = f(&y);
            y[i] = x[i];
            (a - b) / (2.0 * h)
        })
        .collect()
}

/// Central finite-difference Hessian with step `1e-4 (1 + |x|)`.
pub fn finite_difference_hessian(f: &dyn Fn(&[f64]) -> f64, x: &[f64]) -> nalgebra::DMatrix<f64> {
    let d = x.len();
    let h = 1e-4 * (1.0 + norm(x));
    let mut y = x.to_vec();
    let mut eval = |i: usize, si: f64, j: usize, sj: f64| {
        y.copy_from_slice(x);
        y[i] += si * h;
        y[j] += sj * h;
        f(&y)
    };
    let mut m = nalgebra::DMatrix::zeros(d, d);
    for i in 0..d {
        for j in i..d {
            let v = if i == j {
                let a = eval(i, 1.0, i, 0.0);
                let c = eval(i, -1.0, i, 0.0);
                let b = f(x);
                (a - 2.0 * b + c) / (h * h)
            } else {
                (eval(i, 1.0, j, 1.0) - eval(i, 1.0, j, -1.0) - eval(i, -1.0, j, 1.0)
                    + eval(i, -1.0, j, -1.0))
                    / (4.0 * h * h)
            };
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    m
}
