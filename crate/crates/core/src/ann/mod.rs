//! End-to-end approximate nearest neighbor index.
//!
//! Each leaf of the diagram nominates a few candidates: its single site, the
//! witness of a relative AVR over the outer cluster and one site for the
//! inner cluster. The true distance of every candidate is evaluated at the
//! query and the smallest wins, so every internal approximation shows up in a
//! single checkable inequality.

mod patches;
mod persist;

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use serde::Serialize;

pub use patches::{patches_per_axis, ray_to_hypercube_boundary, InnerPatchSet};

use crate::admissibility::TAU_GATE;
use crate::avd::{build_avd_with_bounds, AvdConfig, AvdLeaf, AvdTree, Location, TreeStats, DEFAULT_MAX_DEPTH};
use crate::distances::{BregmanSpec, Domain, FamilyKind, SiteFunction};
use crate::envelope::{build_relative_with_ids, RelativeAvr};
use crate::error::{Error, Result};
use crate::geom::{enclosing_ball, Vector};
use crate::par::{self, Execution};

/// Exact argmin and minimum of `f_i(q)`; ties go to the lowest index.
pub fn brute_force(sites: &[SiteFunction], q: &[f64]) -> Result<(usize, f64)> {
    if sites.is_empty() {
        return Err(Error::NoSites);
    }
    let mut best = (usize::MAX, f64::INFINITY);
    for (i, f) in sites.iter().enumerate() {
        let v = f.evaluate(q)?;
        if v < best.1 {
            best = (i, v);
        }
    }
    if best.0 == usize::MAX {
        return Err(Error::NonFinite);
    }
    Ok(best)
}

/// Nominations of the outer cluster.
#[derive(Debug)]
pub enum OuterPart {
    Avr(Box<RelativeAvr>),
    /// The leaf ball leaves the divergence domain; outer sites are scanned.
    Scan,
}

/// Nominations of the inner cluster.
#[derive(Debug)]
pub enum InnerPart {
    /// Every site of a cluster that sits at one location.
    Direct(Vec<usize>),
    /// Bregman clusters collapse to their lowest site index.
    Representative(usize),
    Patches(InnerPatchSet),
}

/// Query structures attached to a leaf.
#[derive(Debug)]
pub struct LeafAttachment {
    pub outer: Option<OuterPart>,
    pub inner: Option<InnerPart>,
}

impl LeafAttachment {
    pub fn sample_count(&self) -> usize {
        let outer = match &self.outer {
            Some(OuterPart::Avr(a)) => a.sample_count(),
            _ => 0,
        };
        let inner = match &self.inner {
            Some(InnerPart::Patches(p)) => p.built().iter().map(|(_, a)| a.sample_count()).sum(),
            _ => 0,
        };
        outer + inner
    }
}

#[derive(Debug, Default)]
struct Counters {
    queries: AtomicU64,
    visits: AtomicU64,
    outside: AtomicU64,
    scans: AtomicU64,
    inner_answers: AtomicU64,
}

/// Query counters since build or load.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct QueryStats {
    pub queries: u64,
    pub locate_visits: u64,
    /// Queries outside the root box, answered by brute force.
    pub outside_fallbacks: u64,
    /// Leaves whose outer cluster was scanned instead of queried.
    pub scan_fallbacks: u64,
    /// Queries whose winner came from an inner cluster.
    pub inner_answers: u64,
}

/// Options for [`AnnIndex::build_with`].
#[derive(Clone, Copy, Debug)]
pub struct BuildOptions {
    pub max_depth: usize,
    /// Expand the whole tree and every leaf attachment up front.
    pub eager: bool,
    pub exec: Execution,
}

impl Default for BuildOptions {
    fn default() -> Self {
        BuildOptions {
            max_depth: DEFAULT_MAX_DEPTH,
            eager: false,
            exec: Execution::best(),
        }
    }
}

/// Build-side counts.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct IndexStats {
    pub tree: TreeStats,
    pub attached_leaves: usize,
    pub envelope_samples: usize,
    pub patches_built: usize,
}

/// Approximate nearest neighbor index.
#[derive(Debug)]
pub struct AnnIndex {
    sites: Vec<SiteFunction>,
    family: FamilyKind,
    eps: f64,
    tau: f64,
    tree: AvdTree<LeafAttachment>,
    counters: Counters,
}

fn check_family(sites: &[SiteFunction]) -> Result<(FamilyKind, usize)> {
    let first = sites.first().ok_or(Error::NoSites)?;
    let d = first.dim();
    for f in sites {
        if f.dim() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: f.dim(),
            });
        }
        if f.family() != first.family() || !f.compatible_with(first) {
            return Err(Error::MixedKinds);
        }
    }
    Ok((first.family(), d))
}

impl AnnIndex {
    pub fn build(sites: Vec<SiteFunction>, eps: f64) -> Result<Self> {
        Self::build_with(sites, eps, BuildOptions::default())
    }

    pub fn build_with(sites: Vec<SiteFunction>, eps: f64, opts: BuildOptions) -> Result<Self> {
        let (family, _) = check_family(&sites)?;
        if !(eps > 0.0 && eps <= 1.0) {
            return Err(Error::EpsOutOfRange(eps));
        }
        let tau = sites.iter().map(SiteFunction::tau).fold(1.0, f64::max);
        if !tau.is_finite() || tau > TAU_GATE {
            return Err(Error::TauGate(tau));
        }
        let (alpha, beta) = Self::parameters(family, tau, eps);
        let cfg = AvdConfig::new(alpha, beta)?.with_max_depth(opts.max_depth);
        let extra = match sites[0].bregman_spec().map(|s| s.domain()) {
            Some(Domain::Box(b)) => Some(b.clone()),
            _ => None,
        };
        let points: Vec<Vector> = sites.iter().map(|f| f.site().clone()).collect();
        let tree = build_avd_with_bounds(&points, cfg, extra.as_ref())?;
        let index = AnnIndex {
            sites,
            family,
            eps,
            tau,
            tree,
            counters: Counters::default(),
        };
        if opts.eager {
            index.materialize(opts.exec)?;
        }
        Ok(index)
    }

    /// `(alpha, beta)` for a family: `(2 tau, 10 tau / eps)` for scaling
    /// distances, `(2 tau, 4 tau^2 / eps)` for divergences.
    pub fn parameters(family: FamilyKind, tau: f64, eps: f64) -> (f64, f64) {
        match family {
            FamilyKind::Scaling => (2.0 * tau, 10.0 * tau / eps),
            FamilyKind::Bregman => (2.0 * tau, 4.0 * tau * tau / eps),
        }
    }

    pub(crate) fn from_parts(sites: Vec<SiteFunction>, eps: f64, tau: f64, tree: AvdTree<LeafAttachment>) -> Result<Self> {
        let (family, _) = check_family(&sites)?;
        Ok(AnnIndex {
            sites,
            family,
            eps,
            tau,
            tree,
            counters: Counters::default(),
        })
    }

    pub fn sites(&self) -> &[SiteFunction] {
        &self.sites
    }

    pub fn family(&self) -> FamilyKind {
        self.family
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn alpha(&self) -> f64 {
        self.tree.config().alpha
    }

    pub fn beta(&self) -> f64 {
        self.tree.config().beta
    }

    pub fn dim(&self) -> usize {
        self.tree.dim()
    }

    pub fn tree(&self) -> &AvdTree<LeafAttachment> {
        &self.tree
    }

    pub fn bregman_spec(&self) -> Option<&Arc<BregmanSpec>> {
        self.sites[0].bregman_spec()
    }

    /// `(1 + 2 tau / beta)^2 (1 + eps / 3)`: worst ratio of an inner-cluster
    /// answer for scaling distances.
    pub fn scaling_error_bound(&self) -> f64 {
        (1.0 + 2.0 * self.tau / self.beta()).powi(2) * (1.0 + self.eps / 3.0)
    }

    fn site_ids(&self, locs: impl Iterator<Item = u32>) -> Vec<usize> {
        let mut v: Vec<usize> = locs.flat_map(|l| self.tree.members(l).iter().copied()).collect();
        v.sort_unstable();
        v
    }

    fn attach(&self, leaf: &AvdLeaf<LeafAttachment>) -> LeafAttachment {
        let n_loc = self.tree.locations().len();
        let outer_ids = self.site_ids(leaf.outer(n_loc).into_iter());
        let outer = if outer_ids.is_empty() {
            None
        } else {
            let items: Vec<(usize, &SiteFunction)> = outer_ids.iter().map(|&i| (i, &self.sites[i])).collect();
            match build_relative_with_ids(&items, &enclosing_ball(&leaf.cell), self.eps) {
                Ok(avr) => Some(OuterPart::Avr(Box::new(avr))),
                Err(_) => Some(OuterPart::Scan),
            }
        };
        let inner = leaf.inner.as_ref().map(|g| {
            let ids = self.site_ids(g.members.iter().copied());
            match self.family {
                FamilyKind::Bregman => InnerPart::Representative(ids[0]),
                FamilyKind::Scaling if g.members.len() == 1 => InnerPart::Direct(ids),
                FamilyKind::Scaling => {
                    let fs: Vec<SiteFunction> = ids.iter().map(|&i| self.sites[i].clone()).collect();
                    match InnerPatchSet::new(g.ball.center.clone(), self.tau, self.eps / 3.0, ids.clone(), &fs) {
                        Ok(p) => InnerPart::Patches(p),
                        Err(_) => InnerPart::Direct(ids),
                    }
                }
            }
        });
        LeafAttachment { outer, inner }
    }

    fn leaf_attachment<'a>(&'a self, leaf: &'a AvdLeaf<LeafAttachment>) -> &'a LeafAttachment {
        leaf.attachment_or_init(|| self.attach(leaf))
    }

    /// Expands the whole tree and every leaf attachment. Inner patches stay
    /// lazy.
    pub fn materialize(&self, exec: Execution) -> Result<()> {
        self.tree.materialize_all(exec);
        let st = self.tree.stats();
        if st.failed > 0 {
            return Err(Error::MaxDepthExceeded(self.tree.config().max_depth));
        }
        let leaves = self.tree.leaves();
        par::map(exec, &leaves, |l| {
            self.leaf_attachment(l);
        });
        Ok(())
    }

    fn scan(&self, ids: impl Iterator<Item = usize>, q: &[f64], best: &mut (usize, f64)) -> Result<()> {
        for i in ids {
            let v = self.sites[i].evaluate(q)?;
            if v < best.1 || (v == best.1 && i < best.0) {
                *best = (i, v);
            }
        }
        Ok(())
    }

    /// Approximate nearest site and its distance.
    pub fn query(&self, q: &[f64]) -> Result<(usize, f64)> {
        self.query_counted(q).map(|(w, v, _)| (w, v))
    }

    /// Query that also reports the number of tree nodes visited.
    pub fn query_counted(&self, q: &[f64]) -> Result<(usize, f64, usize)> {
        if q.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: q.len(),
            });
        }
        if q.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite);
        }
        if !self.sites[0].in_domain(q) {
            return Err(Error::QueryOutsideDomain);
        }
        self.counters.queries.fetch_add(1, Ordering::Relaxed);
        let (loc, visits) = self.tree.locate(q)?;
        self.counters.visits.fetch_add(visits as u64, Ordering::Relaxed);
        let leaf = match loc {
            Location::Outside => {
                self.counters.outside.fetch_add(1, Ordering::Relaxed);
                let (w, v) = brute_force(&self.sites, q)?;
                return Ok((w, v, visits));
            }
            Location::Leaf(l) => l,
        };
        let att = self.leaf_attachment(leaf);
        let mut best = (usize::MAX, f64::INFINITY);
        if let Some(s) = leaf.single {
            self.scan(self.tree.members(s).iter().copied(), q, &mut best)?;
        }
        match &att.outer {
            Some(OuterPart::Avr(avr)) => {
                let (w, _) = avr.query(q)?;
                self.scan(std::iter::once(w), q, &mut best)?;
            }
            Some(OuterPart::Scan) => {
                self.counters.scans.fetch_add(1, Ordering::Relaxed);
                let ids = self.site_ids(leaf.outer(self.tree.locations().len()).into_iter());
                self.scan(ids.into_iter(), q, &mut best)?;
            }
            None => {}
        }
        let before = best;
        match &att.inner {
            Some(InnerPart::Direct(ids)) => self.scan(ids.iter().copied(), q, &mut best)?,
            Some(InnerPart::Representative(i)) => self.scan(std::iter::once(*i), q, &mut best)?,
            Some(InnerPart::Patches(p)) => match p.nominate(q)? {
                Some(w) => self.scan(std::iter::once(w), q, &mut best)?,
                None => self.scan(p.site_ids().iter().copied(), q, &mut best)?,
            },
            None => {}
        }
        if best != before {
            self.counters.inner_answers.fetch_add(1, Ordering::Relaxed);
        }
        if best.0 == usize::MAX {
            return Err(Error::InvalidParameter("leaf nominated no candidate".into()));
        }
        Ok((best.0, best.1, visits))
    }

    /// Answers every query, in order.
    pub fn query_batch(&self, queries: &[Vec<f64>], exec: Execution) -> Vec<Result<(usize, f64)>> {
        par::map(exec, queries, |q| self.query(q))
    }

    pub fn query_stats(&self) -> QueryStats {
        QueryStats {
            queries: self.counters.queries.load(Ordering::Relaxed),
            locate_visits: self.counters.visits.load(Ordering::Relaxed),
            outside_fallbacks: self.counters.outside.load(Ordering::Relaxed),
            scan_fallbacks: self.counters.scans.load(Ordering::Relaxed),
            inner_answers: self.counters.inner_answers.load(Ordering::Relaxed),
        }
    }

    pub fn reset_query_stats(&self) {
        for c in [
            &self.counters.queries,
            &self.counters.visits,
            &self.counters.outside,
            &self.counters.scans,
            &self.counters.inner_answers,
        ] {
            c.store(0, Ordering::Relaxed);
        }
    }

    /// Counts over what has been built so far.
    pub fn stats(&self) -> IndexStats {
        let tree = self.tree.stats();
        let mut s = IndexStats {
            tree,
            ..Default::default()
        };
        for leaf in self.tree.leaves() {
            if let Some(a) = leaf.attachment() {
                s.attached_leaves += 1;
                s.envelope_samples += a.sample_count();
                if let Some(InnerPart::Patches(p)) = &a.inner {
                    s.patches_built += p.built().len();
                }
            }
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distances::{make_bregman, make_minkowski};
    use crate::geom::AlignedBox;

    fn v(x: &[f64]) -> Vector {
        Vector::new(x.to_vec()).unwrap()
    }

    #[test]
    fn brute_force_examples() {
        let s = vec![
            make_minkowski(v(&[0.0, 0.0]), 2.0, 1.0).unwrap(),
            make_minkowski(v(&[10.0, 0.0]), 2.0, 1.0).unwrap(),
        ];
        assert_eq!(brute_force(&s, &[1.0, 0.0]).unwrap(), (0, 1.0));
        assert_eq!(brute_force(&s, &[5.0, 0.0]).unwrap().0, 0);
        let spec = BregmanSpec::generalized_kl(AlignedBox::new(v(&[0.1]), v(&[3.0])).unwrap()).unwrap();
        let kl = vec![make_bregman(&spec, v(&[0.5])).unwrap(), make_bregman(&spec, v(&[2.0])).unwrap()];
        let (w, val) = brute_force(&kl, &[1.0]).unwrap();
        assert_eq!(w, 0);
        assert!((val - (2f64.ln() - 0.5)).abs() < 1e-12);
    }

    #[test]
    fn parameters_match_family() {
        let (a, b) = AnnIndex::parameters(FamilyKind::Scaling, 1.0, 0.1);
        assert_eq!(a, 2.0);
        assert!((b - 100.0).abs() < 1e-9);
        let (_, b) = AnnIndex::parameters(FamilyKind::Bregman, 2.0, 0.1);
        assert!((b - 160.0).abs() < 1e-9);
    }

    #[test]
    fn single_site_index() {
        let idx = AnnIndex::build(vec![make_minkowski(v(&[0.3, 0.3]), 2.0, 1.0).unwrap()], 0.1).unwrap();
        for q in [[0.0, 0.0], [0.3, 0.3], [5.0, -2.0]] {
            assert_eq!(idx.query(&q).unwrap().0, 0);
        }
        assert_eq!(idx.query(&[0.3, 0.3]).unwrap().1, 0.0);
    }

    #[test]
    fn build_errors() {
        let f = make_minkowski(v(&[0.0, 0.0]), 2.0, 1.0).unwrap();
        assert!(matches!(AnnIndex::build(vec![], 0.1), Err(Error::NoSites)));
        assert!(matches!(AnnIndex::build(vec![f.clone()], 0.0), Err(Error::EpsOutOfRange(_))));
        let spec = BregmanSpec::squared_euclidean(2).unwrap();
        let g = make_bregman(&spec, v(&[1.0, 1.0])).unwrap();
        assert!(matches!(AnnIndex::build(vec![f, g], 0.1), Err(Error::MixedKinds)));
    }
}
