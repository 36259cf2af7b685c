//! Pruning, normalization to the unit ball and convexification of a family of
//! distance functions whose sites are well separated from a ball.
//!
//! With `h = 5 f1-(B)` and `g_i(x) = f_i(r x + c) / h`, every kept `g_i` takes
//! values in `[1/5, 4/5]` on the unit ball with gradient norm at most `1/4`
//! and Hessian norm at most `1/16`. Adding `phi(x) = (1 - |x|^2)/8` makes all
//! members concave without changing any argmin.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::admissibility::random_direction;
use crate::distances::SiteFunction;
use crate::error::{Error, Result};
use crate::geom::{dot, norm, separation_ratio, EuclideanBall};

/// Relative tolerance of the minimum estimate, absorbed into the prune rule.
pub const MIN_TOLERANCE: f64 = 0.01;

const DESCENT_STEPS: usize = 50;
const POLISH_STEPS: usize = 400;

/// Estimated minimum of a function over a ball and where it was found.
#[derive(Clone, Debug, PartialEq)]
pub struct MinEstimate {
    pub value: f64,
    pub argmin: Vec<f64>,
}

/// Default seed budget for dimension `d`.
pub fn default_budget(d: usize) -> usize {
    256usize.max(4usize.saturating_pow(d as u32))
}

fn check_separated(index: usize, f: &SiteFunction, b: &EuclideanBall) -> Result<f64> {
    let required = 2.0 * f.tau();
    let ratio = if b.radius > 0.0 {
        separation_ratio(f.site(), b)?
    } else if b.dist_to_point(f.site()) > 0.0 {
        f64::INFINITY
    } else {
        0.0
    };
    if ratio < required {
        return Err(Error::InsufficientSeparation {
            index,
            ratio,
            required,
        });
    }
    if let Some(spec) = f.bregman_spec() {
        if !spec.domain().contains_ball(b) {
            return Err(Error::QueryOutsideDomain);
        }
    }
    Ok(ratio)
}

/// Seed points: the center, a lattice inside the ball and points on its sphere.
fn seeds(b: &EuclideanBall, budget: usize) -> Vec<Vec<f64>> {
    let d = b.dim();
    let c = b.center.as_slice();
    let mut pts = vec![c.to_vec()];
    let inner = budget / 2;
    let mut m = 2usize;
    let lattice = loop {
        let mut v = Vec::new();
        let mut idx = vec![0usize; d];
        loop {
            let u: Vec<f64> = idx
                .iter()
                .map(|&k| -1.0 + (2.0 * k as f64 + 1.0) / m as f64)
                .collect();
            if norm(&u) <= 1.0 {
                v.push(u);
            }
            let mut j = 0;
            while j < d {
                idx[j] += 1;
                if idx[j] < m {
                    break;
                }
                idx[j] = 0;
                j += 1;
            }
            if j == d {
                break;
            }
        }
        if v.len() >= inner || m > 64 {
            break v;
        }
        m += 1;
    };
    for u in lattice {
        pts.push(c.iter().zip(&u).map(|(a, x)| a + b.radius * x).collect());
    }
    let outer = budget - budget / 2;
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    for i in 0..outer {
        let u = if d == 2 {
            let t = std::f64::consts::TAU * i as f64 / outer as f64;
            vec![t.cos(), t.sin()]
        } else if d == 1 {
            vec![if i % 2 == 0 { 1.0 } else { -1.0 }]
        } else {
            random_direction(d, &mut rng)
        };
        pts.push(c.iter().zip(&u).map(|(a, x)| a + b.radius * x).collect());
    }
    pts
}

fn project(b: &EuclideanBall, x: &mut [f64]) {
    let c = b.center.as_slice();
    let n = crate::geom::dist(x, c);
    if n > b.radius {
        let s = b.radius / n;
        for (xi, ci) in x.iter_mut().zip(c) {
            *xi = ci + (*xi - ci) * s;
        }
    }
}

/// Projected gradient descent with backtracking from `x0`.
fn descend(f: &SiteFunction, b: &EuclideanBall, x0: &[f64], v0: f64, steps: usize) -> (f64, Vec<f64>) {
    let mut x = x0.to_vec();
    let mut v = v0;
    let mut t = b.radius.max(1e-300);
    for _ in 0..steps {
        let Ok(g) = f.gradient(&x) else { break };
        let gn = norm(&g);
        if gn == 0.0 {
            break;
        }
        let mut accepted = false;
        let mut step = t / gn;
        for _ in 0..60 {
            let mut y: Vec<f64> = x.iter().zip(&g).map(|(a, gi)| a - step * gi).collect();
            project(b, &mut y);
            let dx: Vec<f64> = x.iter().zip(&y).map(|(a, c)| a - c).collect();
            let fy = f.value_unchecked(&y);
            if fy <= v - 1e-4 * dot(&g, &dx) && fy <= v {
                let moved = norm(&dx);
                x = y;
                let improved = v - fy;
                v = fy;
                accepted = true;
                t = (step * gn * 2.0).min(2.0 * b.radius);
                if moved <= 1e-15 * (1.0 + b.radius) || improved <= 1e-16 * v.abs() {
                    return (v, x);
                }
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    (v, x)
}

/// Estimates `min f` over `b` by seeding `budget` points and descending from
/// the best few.
pub fn estimate_min_on_ball(f: &SiteFunction, b: &EuclideanBall, budget: usize) -> Result<MinEstimate> {
    check_separated(0, f, b)?;
    Ok(estimate_unchecked(f, b, budget))
}

fn estimate_unchecked(f: &SiteFunction, b: &EuclideanBall, budget: usize) -> MinEstimate {
    let pts = seeds(b, budget.max(4));
    let mut vals: Vec<(f64, usize)> = pts
        .iter()
        .enumerate()
        .map(|(i, x)| (f.value_unchecked(x), i))
        .collect();
    vals.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let mut best = (vals[0].0, pts[vals[0].1].clone());
    for &(v0, i) in vals.iter().take(4) {
        let (v, x) = descend(f, b, &pts[i], v0, DESCENT_STEPS);
        if v < best.0 {
            best = (v, x);
        }
    }
    let (v, x) = descend(f, b, &best.1.clone(), best.0, POLISH_STEPS);
    if v < best.0 {
        best = (v, x);
    }
    MinEstimate {
        value: best.0,
        argmin: best.1,
    }
}

/// A kept member of a normalized family.
#[derive(Clone, Debug)]
pub struct KeptFunction {
    /// Index in the caller's numbering.
    pub index: usize,
    pub function: SiteFunction,
    /// Estimated minimum over the base ball.
    pub min_estimate: f64,
}

/// `g_i(x) = f_i(r x + c) / h` for the kept members.
#[derive(Clone, Debug)]
pub struct NormalizedFamily {
    pub base_ball: EuclideanBall,
    pub scale_h: f64,
    pub kept: Vec<KeptFunction>,
    pub pruned: Vec<usize>,
}

/// Normalizes a family; member `i` of the result refers to `family[i]`.
pub fn normalize(family: &[SiteFunction], b: &EuclideanBall) -> Result<NormalizedFamily> {
    let items: Vec<(usize, &SiteFunction)> = family.iter().enumerate().collect();
    normalize_with_ids(&items, b)
}

/// Normalizes a family whose members carry caller-chosen ids.
pub fn normalize_with_ids(items: &[(usize, &SiteFunction)], b: &EuclideanBall) -> Result<NormalizedFamily> {
    if items.is_empty() {
        return Err(Error::EmptyFamily);
    }
    if !(b.radius > 0.0) {
        return Err(Error::DegenerateBall);
    }
    let d = b.dim();
    let c = b.center.as_slice();
    // Center values bound each minimum from both sides: f- <= f(c) and,
    // by the separation bound, f- >= f(c) (k - 1)/k with k = ratio/tau >= 2.
    let mut pre = Vec::with_capacity(items.len());
    for &(id, f) in items {
        let ratio = check_separated(id, f, b)?;
        let kappa = ratio / f.tau();
        let vc = f.value_unchecked(c);
        let lower = if kappa.is_finite() {
            vc * (kappa - 1.0) / kappa
        } else {
            vc
        };
        pre.push((id, f, vc, lower));
    }
    let m = pre.iter().map(|p| p.2).fold(f64::INFINITY, f64::min);
    let threshold = 2.0 * (1.0 + MIN_TOLERANCE);
    let budget = default_budget(d);
    let mut survivors = Vec::new();
    let mut pruned = Vec::new();
    for (id, f, _, lower) in pre {
        if lower > threshold * m {
            pruned.push(id);
        } else {
            let est = estimate_unchecked(f, b, budget).value;
            survivors.push((id, f, est));
        }
    }
    let f1 = survivors.iter().map(|s| s.2).fold(f64::INFINITY, f64::min);
    if !(f1 > 0.0) || !f1.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "minimum estimate {f1} over the ball is not positive"
        )));
    }
    let mut kept = Vec::new();
    for (id, f, est) in survivors {
        if est > threshold * f1 {
            pruned.push(id);
        } else {
            kept.push(KeptFunction {
                index: id,
                function: f.clone(),
                min_estimate: est,
            });
        }
    }
    kept.sort_by_key(|k| k.index);
    pruned.sort_unstable();
    Ok(NormalizedFamily {
        base_ball: b.clone(),
        scale_h: 5.0 * f1,
        kept,
        pruned,
    })
}

impl NormalizedFamily {
    pub fn len(&self) -> usize {
        self.kept.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kept.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.base_ball.dim()
    }

    /// World point `r x + c` for a unit-ball point `x`.
    pub fn to_world(&self, x: &[f64]) -> Vec<f64> {
        let r = self.base_ball.radius;
        x.iter()
            .zip(self.base_ball.center.iter())
            .map(|(a, c)| r * a + c)
            .collect()
    }

    /// Unit-ball point for a world point.
    pub fn to_unit(&self, y: &[f64]) -> Vec<f64> {
        let r = self.base_ball.radius;
        y.iter()
            .zip(self.base_ball.center.iter())
            .map(|(a, c)| (a - c) / r)
            .collect()
    }

    pub fn value(&self, i: usize, x: &[f64]) -> f64 {
        self.kept[i].function.value_unchecked(&self.to_world(x)) / self.scale_h
    }

    pub fn gradient(&self, i: usize, x: &[f64]) -> Result<Vec<f64>> {
        let s = self.base_ball.radius / self.scale_h;
        Ok(self.kept[i]
            .function
            .gradient(&self.to_world(x))?
            .into_iter()
            .map(|g| g * s)
            .collect())
    }

    pub fn hessian(&self, i: usize, x: &[f64]) -> Result<DMatrix<f64>> {
        let r = self.base_ball.radius;
        Ok(self.kept[i].function.hessian(&self.to_world(x))? * (r * r / self.scale_h))
    }
}

/// `phi(x) = (1 - |x|^2) / 8`.
pub fn phi(x: &[f64]) -> f64 {
    (1.0 - dot(x, x)) / 8.0
}

/// `g_i + phi` for every kept member.
#[derive(Clone, Debug)]
pub struct ConvexifiedFamily {
    pub normalized: NormalizedFamily,
}

pub fn convexify(nf: NormalizedFamily) -> ConvexifiedFamily {
    ConvexifiedFamily { normalized: nf }
}

impl ConvexifiedFamily {
    pub fn len(&self) -> usize {
        self.normalized.len()
    }

    pub fn is_empty(&self) -> bool {
        self.normalized.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.normalized.dim()
    }

    pub fn value(&self, i: usize, x: &[f64]) -> f64 {
        self.normalized.value(i, x) + phi(x)
    }

    pub fn gradient(&self, i: usize, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self
            .normalized
            .gradient(i, x)?
            .into_iter()
            .zip(x)
            .map(|(g, xi)| g - 0.25 * xi)
            .collect())
    }

    pub fn hessian(&self, i: usize, x: &[f64]) -> Result<DMatrix<f64>> {
        let d = x.len();
        Ok(self.normalized.hessian(i, x)? - DMatrix::identity(d, d) * 0.25)
    }
}
