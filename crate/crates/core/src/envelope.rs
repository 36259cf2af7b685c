//! Absolute and relative AVR queries on the lower envelope of a concave family
//! over the unit ball, by sampling tangent hyperplanes on a grid.
//!
//! Each grid cell holds one tangent sample at its anchor plus a certified
//! candidate list: every member that could win anywhere in the cell. A query
//! evaluates the candidates of its cell and returns the smallest, so the
//! returned value is never below the envelope.

use std::collections::HashMap;
use std::io::{Read, Write};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use crate::convexify::{convexify, normalize_with_ids, phi, ConvexifiedFamily, KeptFunction, NormalizedFamily};
use crate::distances::SiteFunction;
use crate::error::{Error, Result};
use crate::geom::{dot, norm, EuclideanBall, Vector};

const NONE: u32 = u32::MAX;
const BALL_SLACK: f64 = 1e-9;

/// A family of concave functions on the unit ball with values and gradient
/// norms in `[0, 1]`.
pub trait ConcaveFamily: Send + Sync {
    fn dim(&self) -> usize;
    fn len(&self) -> usize;
    fn value(&self, i: usize, x: &[f64]) -> f64;
    fn gradient(&self, i: usize, x: &[f64]) -> Vec<f64>;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Index reported as witness for member `i`.
    fn original_index(&self, i: usize) -> usize {
        i
    }

    /// Bound on the Hessian norm of any difference of two members, when known.
    fn difference_curvature(&self) -> Option<f64> {
        None
    }
}

impl ConcaveFamily for ConvexifiedFamily {
    fn dim(&self) -> usize {
        ConvexifiedFamily::dim(self)
    }

    fn len(&self) -> usize {
        ConvexifiedFamily::len(self)
    }

    fn value(&self, i: usize, x: &[f64]) -> f64 {
        ConvexifiedFamily::value(self, i, x)
    }

    fn gradient(&self, i: usize, x: &[f64]) -> Vec<f64> {
        ConvexifiedFamily::gradient(self, i, x).unwrap_or_else(|_| vec![f64::NAN; x.len()])
    }

    fn original_index(&self, i: usize) -> usize {
        self.normalized.kept[i].index
    }

    // Member Hessians have eigenvalues in [-5/16, -3/16].
    fn difference_curvature(&self) -> Option<f64> {
        Some(0.125)
    }
}

/// Affine members `a_i + <b_i, x>`.
#[derive(Clone, Debug)]
pub struct AffineFamily {
    pub offsets: Vec<f64>,
    pub slopes: Vec<Vec<f64>>,
}

impl AffineFamily {
    pub fn constants(values: &[f64], d: usize) -> Self {
        AffineFamily {
            offsets: values.to_vec(),
            slopes: vec![vec![0.0; d]; values.len()],
        }
    }
}

impl ConcaveFamily for AffineFamily {
    fn dim(&self) -> usize {
        self.slopes.first().map_or(0, Vec::len)
    }

    fn len(&self) -> usize {
        self.offsets.len()
    }

    fn value(&self, i: usize, x: &[f64]) -> f64 {
        self.offsets[i] + dot(&self.slopes[i], x)
    }

    fn gradient(&self, i: usize, _x: &[f64]) -> Vec<f64> {
        self.slopes[i].clone()
    }
}

/// Supporting hyperplane of the envelope at an anchor.
#[derive(Clone, Debug, PartialEq)]
pub struct TangentSample {
    pub anchor: Vec<f64>,
    pub value: f64,
    pub grad: Vec<f64>,
    /// Member index within the family.
    pub member: u32,
    /// Index reported for the member.
    pub witness: usize,
}

impl TangentSample {
    pub fn tangent(&self, q: &[f64]) -> f64 {
        self.value + self.grad.iter().zip(q).zip(&self.anchor).map(|((g, x), a)| g * (x - a)).sum::<f64>()
    }
}

/// Grid-indexed tangent samples over the unit ball.
#[derive(Clone, Debug)]
pub struct ConcaveEnvelope<F> {
    family: F,
    d: usize,
    delta: f64,
    eps_abs: f64,
    half: i64,
    slots: Vec<u32>,
    cells: Vec<Vec<i32>>,
    samples: Vec<TangentSample>,
    cand_start: Vec<u32>,
    cand: Vec<u32>,
}

/// `sqrt(16 eps_abs / 5)`: radius within which a tangent overestimates by at
/// most `eps_abs / 2` under curvature `5/16`.
pub fn covering_radius(eps_abs: f64) -> f64 {
    (16.0 * eps_abs / 5.0).sqrt()
}

fn grid_spacing(eps_abs: f64, d: usize, curvature: Option<f64>) -> f64 {
    match curvature {
        Some(_) => 2.0 * covering_radius(eps_abs) / (d as f64).sqrt(),
        None => eps_abs / 2.0,
    }
}

fn for_each_cell(d: usize, half: i64, mut f: impl FnMut(&[i64])) {
    let mut k = vec![-half; d];
    loop {
        f(&k);
        let mut j = 0;
        while j < d {
            k[j] += 1;
            if k[j] < half {
                break;
            }
            k[j] = -half;
            j += 1;
        }
        if j == d {
            return;
        }
    }
}

impl<F: ConcaveFamily> ConcaveEnvelope<F> {
    fn slot_of(&self, k: &[i64]) -> Option<usize> {
        let side = 2 * self.half;
        let mut s = 0i64;
        for &kj in k.iter().rev() {
            let c = kj + self.half;
            if c < 0 || c >= side {
                return None;
            }
            s = s * side + c;
        }
        Some(s as usize)
    }

    fn cell_bounds(&self, k: &[i64]) -> Vec<(f64, f64)> {
        k.iter()
            .map(|&kj| (kj as f64 * self.delta, (kj + 1) as f64 * self.delta))
            .collect()
    }

    pub fn family(&self) -> &F {
        &self.family
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn spacing(&self) -> f64 {
        self.delta
    }

    pub fn eps_abs(&self) -> f64 {
        self.eps_abs
    }

    pub fn sample_count(&self) -> usize {
        self.samples.len()
    }

    pub fn samples(&self) -> &[TangentSample] {
        &self.samples
    }

    /// Total length of all candidate lists.
    pub fn candidate_total(&self) -> usize {
        self.cand.len()
    }

    pub fn candidates(&self, sample: usize) -> &[u32] {
        &self.cand[self.cand_start[sample] as usize..self.cand_start[sample + 1] as usize]
    }

    fn better(&self, a: (f64, usize), b: (f64, usize)) -> bool {
        a.0 < b.0 || (a.0 == b.0 && a.1 < b.1)
    }

    fn min_over(&self, members: impl Iterator<Item = usize>, q: &[f64]) -> (f64, usize) {
        let mut best = (f64::INFINITY, usize::MAX);
        for i in members {
            let c = (self.family.value(i, q), self.family.original_index(i));
            if self.better(c, best) {
                best = c;
            }
        }
        best
    }

    /// Returns `(value, witness)` with `G(q) <= value <= G(q) + eps_abs`.
    pub fn query_absolute(&self, q: &[f64]) -> Result<(f64, usize)> {
        if q.len() != self.d {
            return Err(Error::DimensionMismatch {
                expected: self.d,
                got: q.len(),
            });
        }
        let n = norm(q);
        if !n.is_finite() || n > 1.0 + BALL_SLACK {
            return Err(Error::QueryOutsideEnvelope);
        }
        let clamped;
        let q = if n > 1.0 {
            clamped = q.iter().map(|x| x / n).collect::<Vec<_>>();
            &clamped[..]
        } else {
            q
        };
        let k: Vec<i64> = q
            .iter()
            .map(|x| ((x / self.delta).floor() as i64).clamp(-self.half, self.half - 1))
            .collect();
        let slot = self.slot_of(&k).map_or(NONE, |s| self.slots[s]);
        if slot == NONE {
            return Ok(self.min_over(0..self.family.len(), q));
        }
        let list = self.candidates(slot as usize);
        Ok(self.min_over(list.iter().map(|&i| i as usize), q))
    }
}

/// Samples the envelope of `family` at absolute error `eps_abs`.
pub fn build_envelope<F: ConcaveFamily>(family: F, eps_abs: f64) -> Result<ConcaveEnvelope<F>> {
    if !(eps_abs > 0.0) || !eps_abs.is_finite() {
        return Err(Error::EpsOutOfRange(eps_abs));
    }
    if family.is_empty() {
        return Err(Error::EmptyFamily);
    }
    let d = family.dim();
    let m = family.len();
    let curvature = family.difference_curvature();
    let delta = grid_spacing(eps_abs.min(1.0), d, curvature);
    let half = (1.0 / delta).ceil().max(1.0) as i64;
    let side = (2 * half) as usize;
    let mut env = ConcaveEnvelope {
        family,
        d,
        delta,
        eps_abs,
        half,
        slots: vec![NONE; side.pow(d as u32)],
        cells: Vec::new(),
        samples: Vec::new(),
        cand_start: vec![0],
        cand: Vec::new(),
    };
    let mut certified: Vec<Vec<u32>> = Vec::new();
    let mut keys: Vec<Vec<i64>> = Vec::new();
    let mut vals = vec![0.0; m];
    let mut grads = vec![Vec::new(); m];
    for_each_cell(d, half, |k| {
        let bounds = env.cell_bounds(k);
        let near: f64 = bounds
            .iter()
            .map(|&(lo, hi)| if lo > 0.0 { lo } else if hi < 0.0 { -hi } else { 0.0 })
            .map(|x| x * x)
            .sum::<f64>()
            .sqrt();
        if near > 1.0 {
            return;
        }
        let center: Vec<f64> = bounds.iter().map(|&(lo, hi)| 0.5 * (lo + hi)).collect();
        let cn = norm(&center);
        let anchor = if cn > 1.0 { center.iter().map(|x| x / cn).collect() } else { center };
        // Farthest point of the cell from the anchor.
        let rho = bounds
            .iter()
            .zip(&anchor)
            .map(|(&(lo, hi), a)| (a - lo).abs().max((hi - a).abs()).powi(2))
            .sum::<f64>()
            .sqrt();
        let mut w = 0usize;
        for i in 0..m {
            vals[i] = env.family.value(i, &anchor);
            grads[i] = env.family.gradient(i, &anchor);
            let (vi, oi) = (vals[i], env.family.original_index(i));
            if i > 0 && (vi < vals[w] || (vi == vals[w] && oi < env.family.original_index(w))) {
                w = i;
            }
        }
        let mut list = Vec::new();
        for i in 0..m {
            let psi = vals[i] - vals[w];
            let keep = if i == w {
                true
            } else {
                let gi = &grads[i];
                let slack = match curvature {
                    Some(c) => {
                        let gd: Vec<f64> = gi.iter().zip(&grads[w]).map(|(a, b)| a - b).collect();
                        let gn = norm(&gd);
                        if gn.is_finite() {
                            gn * rho + 0.5 * c * rho * rho
                        } else {
                            f64::INFINITY
                        }
                    }
                    None => 2.0 * rho,
                };
                !(psi - slack > 1e-12)
            };
            if keep {
                list.push(i as u32);
            }
        }
        let s = env.samples.len();
        let slot = env.slot_of(k).expect("cell in grid");
        env.slots[slot] = s as u32;
        env.samples.push(TangentSample {
            anchor,
            value: vals[w],
            grad: grads[w].clone(),
            member: w as u32,
            witness: env.family.original_index(w),
        });
        env.cells.push(k.iter().map(|&x| x as i32).collect());
        keys.push(k.to_vec());
        certified.push(list);
    });
    // Union with the witnesses of the 3^d neighborhood.
    for (s, k) in keys.iter().enumerate() {
        let mut list = std::mem::take(&mut certified[s]);
        let mut off = vec![-1i64; d];
        loop {
            let nk: Vec<i64> = k.iter().zip(&off).map(|(a, b)| a + b).collect();
            if let Some(slot) = env.slot_of(&nk) {
                let t = env.slots[slot];
                if t != NONE {
                    list.push(env.samples[t as usize].member);
                }
            }
            let mut j = 0;
            while j < d {
                off[j] += 1;
                if off[j] <= 1 {
                    break;
                }
                off[j] = -1;
                j += 1;
            }
            if j == d {
                break;
            }
        }
        list.sort_unstable();
        list.dedup();
        env.cand.extend_from_slice(&list);
        env.cand_start.push(env.cand.len() as u32);
    }
    Ok(env)
}

impl<F: ConcaveFamily> ConcaveEnvelope<F> {
    /// Writes header `(d, delta, eps_abs, count)` and one record per sample:
    /// cell, anchor, value, grad, witness, candidate list.
    pub fn write_to(&self, w: &mut dyn Write) -> Result<()> {
        w.write_u32::<LittleEndian>(self.d as u32)?;
        w.write_f64::<LittleEndian>(self.delta)?;
        w.write_f64::<LittleEndian>(self.eps_abs)?;
        w.write_u32::<LittleEndian>(self.samples.len() as u32)?;
        for (s, t) in self.samples.iter().enumerate() {
            for &c in &self.cells[s] {
                w.write_i32::<LittleEndian>(c)?;
            }
            for &a in &t.anchor {
                w.write_f64::<LittleEndian>(a)?;
            }
            w.write_f64::<LittleEndian>(t.value)?;
            for &g in &t.grad {
                w.write_f64::<LittleEndian>(g)?;
            }
            w.write_u32::<LittleEndian>(t.witness as u32)?;
            let list = self.candidates(s);
            w.write_u32::<LittleEndian>(list.len() as u32)?;
            for &c in list {
                w.write_u32::<LittleEndian>(self.family.original_index(c as usize) as u32)?;
            }
        }
        Ok(())
    }

    /// Reads an envelope written by [`ConcaveEnvelope::write_to`] over `family`.
    pub fn read_from(r: &mut dyn Read, family: F) -> Result<Self> {
        let d = r.read_u32::<LittleEndian>()? as usize;
        if d != family.dim() {
            return Err(Error::Format(format!("envelope dimension {d} != family dimension {}", family.dim())));
        }
        let delta = r.read_f64::<LittleEndian>()?;
        let eps_abs = r.read_f64::<LittleEndian>()?;
        if !(delta > 0.0) || !(eps_abs > 0.0) {
            return Err(Error::Format("bad envelope header".into()));
        }
        let count = r.read_u32::<LittleEndian>()? as usize;
        let local: HashMap<usize, u32> = (0..family.len()).map(|i| (family.original_index(i), i as u32)).collect();
        let lookup = |o: u32| -> Result<u32> {
            local
                .get(&(o as usize))
                .copied()
                .ok_or_else(|| Error::Format(format!("envelope refers to unknown member {o}")))
        };
        let half = (1.0 / delta).ceil().max(1.0) as i64;
        let side = (2 * half) as usize;
        let mut env = ConcaveEnvelope {
            family,
            d,
            delta,
            eps_abs,
            half,
            slots: vec![NONE; side.pow(d as u32)],
            cells: Vec::with_capacity(count),
            samples: Vec::with_capacity(count),
            cand_start: vec![0],
            cand: Vec::new(),
        };
        let read_vec = |r: &mut dyn Read| -> Result<Vec<f64>> {
            (0..d).map(|_| Ok(r.read_f64::<LittleEndian>()?)).collect()
        };
        for s in 0..count {
            let cell: Vec<i32> = (0..d).map(|_| r.read_i32::<LittleEndian>()).collect::<std::io::Result<_>>()?;
            let anchor = read_vec(r)?;
            let value = r.read_f64::<LittleEndian>()?;
            let grad = read_vec(r)?;
            let witness = r.read_u32::<LittleEndian>()?;
            let member = lookup(witness)?;
            let nc = r.read_u32::<LittleEndian>()? as usize;
            for _ in 0..nc {
                let c = r.read_u32::<LittleEndian>()?;
                env.cand.push(lookup(c)?);
            }
            env.cand_start.push(env.cand.len() as u32);
            let k: Vec<i64> = cell.iter().map(|&c| c as i64).collect();
            let slot = env
                .slot_of(&k)
                .ok_or_else(|| Error::Format(format!("envelope cell {cell:?} outside grid")))?;
            env.slots[slot] = s as u32;
            env.cells.push(cell);
            env.samples.push(TangentSample {
                anchor,
                value,
                grad,
                member,
                witness: witness as usize,
            });
        }
        Ok(env)
    }
}

/// Relative AVR structure for a family separated from a ball.
#[derive(Clone, Debug)]
pub struct RelativeAvr {
    env: ConcaveEnvelope<ConvexifiedFamily>,
    eps: f64,
}

/// Builds a relative `eps`-AVR; witnesses index into `family`.
pub fn build_relative(family: &[SiteFunction], b: &EuclideanBall, eps: f64) -> Result<RelativeAvr> {
    let items: Vec<(usize, &SiteFunction)> = family.iter().enumerate().collect();
    build_relative_with_ids(&items, b, eps)
}

/// Builds a relative `eps`-AVR whose witnesses are the given ids.
pub fn build_relative_with_ids(items: &[(usize, &SiteFunction)], b: &EuclideanBall, eps: f64) -> Result<RelativeAvr> {
    if !(eps > 0.0 && eps <= 1.0) {
        return Err(Error::EpsOutOfRange(eps));
    }
    let nf = normalize_with_ids(items, b)?;
    let env = build_envelope(convexify(nf), eps / 5.0)?;
    Ok(RelativeAvr { env, eps })
}

impl RelativeAvr {
    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn envelope(&self) -> &ConcaveEnvelope<ConvexifiedFamily> {
        &self.env
    }

    pub fn normalized(&self) -> &NormalizedFamily {
        &self.env.family().normalized
    }

    pub fn ball(&self) -> &EuclideanBall {
        &self.normalized().base_ball
    }

    pub fn scale_h(&self) -> f64 {
        self.normalized().scale_h
    }

    pub fn sample_count(&self) -> usize {
        self.env.sample_count()
    }

    /// Returns `(witness, value)` where `value` is the witness function at `x`.
    pub fn query(&self, x: &[f64]) -> Result<(usize, f64)> {
        let nf = self.normalized();
        let mut u = nf.to_unit(x);
        let n = norm(&u);
        if n > 1.0 + BALL_SLACK || !n.is_finite() {
            return Err(Error::QueryOutsideEnvelope);
        }
        if n > 1.0 {
            u.iter_mut().for_each(|v| *v /= n);
        }
        let (v, w) = self.env.query_absolute(&u)?;
        Ok((w, (v - phi(&u)) * nf.scale_h))
    }

    pub fn write_to(&self, w: &mut dyn Write) -> Result<()> {
        let nf = self.normalized();
        w.write_f64::<LittleEndian>(self.eps)?;
        w.write_u32::<LittleEndian>(nf.dim() as u32)?;
        for &c in nf.base_ball.center.iter() {
            w.write_f64::<LittleEndian>(c)?;
        }
        w.write_f64::<LittleEndian>(nf.base_ball.radius)?;
        w.write_f64::<LittleEndian>(nf.scale_h)?;
        w.write_u32::<LittleEndian>(nf.kept.len() as u32)?;
        for k in &nf.kept {
            w.write_u32::<LittleEndian>(k.index as u32)?;
            w.write_f64::<LittleEndian>(k.min_estimate)?;
        }
        w.write_u32::<LittleEndian>(nf.pruned.len() as u32)?;
        for &p in &nf.pruned {
            w.write_u32::<LittleEndian>(p as u32)?;
        }
        self.env.write_to(w)
    }

    /// Reads a structure written by [`RelativeAvr::write_to`]; `fetch` returns
    /// the function for a stored id.
    pub fn read_from(r: &mut dyn Read, fetch: &dyn Fn(usize) -> Result<SiteFunction>) -> Result<Self> {
        let eps = r.read_f64::<LittleEndian>()?;
        let d = r.read_u32::<LittleEndian>()? as usize;
        let center: Vec<f64> = (0..d).map(|_| r.read_f64::<LittleEndian>()).collect::<std::io::Result<_>>()?;
        let radius = r.read_f64::<LittleEndian>()?;
        let scale_h = r.read_f64::<LittleEndian>()?;
        let base_ball = EuclideanBall::new(Vector::new(center)?, radius)?;
        let nk = r.read_u32::<LittleEndian>()? as usize;
        let mut kept = Vec::with_capacity(nk);
        for _ in 0..nk {
            let index = r.read_u32::<LittleEndian>()? as usize;
            let min_estimate = r.read_f64::<LittleEndian>()?;
            kept.push(KeptFunction {
                index,
                function: fetch(index)?,
                min_estimate,
            });
        }
        let np = r.read_u32::<LittleEndian>()? as usize;
        let pruned = (0..np)
            .map(|_| Ok(r.read_u32::<LittleEndian>()? as usize))
            .collect::<Result<Vec<_>>>()?;
        let nf = NormalizedFamily {
            base_ball,
            scale_h,
            kept,
            pruned,
        };
        let env = ConcaveEnvelope::read_from(r, convexify(nf))?;
        Ok(RelativeAvr { env, eps })
    }
}

/// Direct minimum over all members, ties to the lowest reported index.
pub fn direct_min<F: ConcaveFamily>(family: &F, q: &[f64]) -> (f64, usize) {
    let mut best = (f64::INFINITY, usize::MAX);
    for i in 0..family.len() {
        let c = (family.value(i, q), family.original_index(i));
        if c.0 < best.0 || (c.0 == best.0 && c.1 < best.1) {
            best = c;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::convexify::normalize;
    use crate::distances::make_minkowski;
    use crate::geom::dist;

    fn v(x: &[f64]) -> Vector {
        Vector::new(x.to_vec()).unwrap()
    }

    fn anchor_gap<F: ConcaveFamily>(env: &ConcaveEnvelope<F>, q: &[f64]) -> f64 {
        env.samples().iter().map(|s| dist(&s.anchor, q)).fold(f64::INFINITY, f64::min)
    }

    fn grid(step: f64) -> Vec<Vec<f64>> {
        let mut out = Vec::new();
        let n = (2.0 / step) as i64;
        for i in 0..=n {
            for j in 0..=n {
                let p = vec![-1.0 + i as f64 * step, -1.0 + j as f64 * step];
                if norm(&p) <= 1.0 {
                    out.push(p);
                }
            }
        }
        out
    }

    #[test]
    fn affine_single_member_is_exact() {
        let env = build_envelope(AffineFamily::constants(&[0.5], 2), 0.1).unwrap();
        for q in grid(0.1) {
            assert_eq!(env.query_absolute(&q).unwrap(), (0.5, 0));
        }
    }

    #[test]
    fn constants_pick_smallest() {
        let env = build_envelope(AffineFamily::constants(&[0.5, 0.3], 2), 0.1).unwrap();
        assert!(env.samples().iter().all(|s| s.witness == 1));
        assert_eq!(env.query_absolute(&[0.2, 0.2]).unwrap(), (0.3, 1));
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(
            build_envelope(AffineFamily::constants(&[0.5], 2), 0.0),
            Err(Error::EpsOutOfRange(_))
        ));
        let env = build_envelope(AffineFamily::constants(&[0.5], 2), 0.1).unwrap();
        assert!(matches!(env.query_absolute(&[1.0, 1.0]), Err(Error::QueryOutsideEnvelope)));
    }

    fn family() -> ConvexifiedFamily {
        let fam: Vec<SiteFunction> = [[5.0, 1.0], [-4.5, 3.0], [0.0, -5.5], [4.0, -4.0], [-4.0, -4.0]]
            .iter()
            .map(|p| make_minkowski(v(p), 2.0, 1.0).unwrap().with_tau(1.0))
            .collect();
        convexify(normalize(&fam, &EuclideanBall::new(v(&[0.0, 0.0]), 1.0).unwrap()).unwrap())
    }

    #[test]
    fn absolute_error_on_probe_grid() {
        let cf = family();
        let env = build_envelope(cf.clone(), 0.02).unwrap();
        for q in grid(env.spacing() / 3.0) {
            let (val, w) = env.query_absolute(&q).unwrap();
            let (exact, _) = direct_min(&cf, &q);
            assert!(val >= exact && val - exact <= 0.02, "q={q:?}");
            let local = (0..cf.len()).find(|&i| cf.original_index(i) == w).unwrap();
            assert_eq!(cf.value(local, &q), val);
        }
    }

    #[test]
    fn anchor_query_returns_stored_sample() {
        let env = build_envelope(family(), 0.02).unwrap();
        for s in env.samples() {
            let (val, w) = env.query_absolute(&s.anchor).unwrap();
            assert_eq!((val, w), (s.value, s.witness));
        }
    }

    #[test]
    fn tangents_overestimate() {
        let cf = family();
        let env = build_envelope(cf.clone(), 0.02).unwrap();
        for s in env.samples().iter().step_by(3) {
            for q in grid(0.2) {
                assert!(s.tangent(&q) >= direct_min(&cf, &q).0 - 1e-12);
            }
        }
    }

    #[test]
    fn sample_count_growth() {
        let a = build_envelope(family(), 0.04).unwrap().sample_count() as f64;
        let b = build_envelope(family(), 0.02).unwrap().sample_count() as f64;
        assert!(b / a <= 2f64.powf(2.0));
    }

    #[test]
    fn every_point_has_nearby_anchor() {
        let env = build_envelope(family(), 0.02).unwrap();
        let r = covering_radius(0.02);
        for q in grid(0.05) {
            assert!(anchor_gap(&env, &q) <= r);
        }
    }

    #[test]
    fn relative_single_function() {
        let f = make_minkowski(v(&[5.0, 0.0]), 2.0, 1.0).unwrap().with_tau(1.0);
        let b = EuclideanBall::new(v(&[0.0, 0.0]), 1.0).unwrap();
        let avr = build_relative(std::slice::from_ref(&f), &b, 0.1).unwrap();
        let (w, val) = avr.query(&[0.3, -0.4]).unwrap();
        assert_eq!(w, 0);
        assert!((val - f.evaluate(&[0.3, -0.4]).unwrap()).abs() < 1e-12);
        assert!(matches!(avr.query(&[3.0, 0.0]), Err(Error::QueryOutsideEnvelope)));
    }

    #[test]
    fn envelope_round_trip() {
        let fam: Vec<SiteFunction> = [[5.0, 1.0], [-4.5, 3.0], [0.0, -5.5]]
            .iter()
            .map(|p| make_minkowski(v(p), 2.0, 1.0).unwrap().with_tau(1.0))
            .collect();
        let b = EuclideanBall::new(v(&[0.0, 0.0]), 1.0).unwrap();
        let avr = build_relative(&fam, &b, 0.1).unwrap();
        let mut buf = Vec::new();
        avr.write_to(&mut buf).unwrap();
        let back = RelativeAvr::read_from(&mut &buf[..], &|i| Ok(fam[i].clone())).unwrap();
        for q in grid(0.1) {
            assert_eq!(avr.query(&q).unwrap(), back.query(&q).unwrap());
        }
    }
}
