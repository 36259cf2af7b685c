//! Approximate Voronoi diagram: a box-decomposition tree whose leaves split
//! the sites into at most one site inside the cell, an outer cluster far from
//! the cell's enclosing ball and an inner cluster inside a small ball far from
//! the cell.
//!
//! Nodes are expanded on first touch and memoized, so a query only pays for
//! the path it walks. [`AvdTree::materialize_all`] forces the whole tree; the
//! result is the same either way.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::sync::OnceLock;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::geom::{dist, dist_ball_cell, enclosing_ball, AlignedBox, BbdCell, EuclideanBall, Vector};
use crate::par::{self, Execution};

pub const DEFAULT_MAX_DEPTH: usize = 400;

/// Separation parameters of the diagram.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct AvdConfig {
    pub alpha: f64,
    pub beta: f64,
    pub max_depth: usize,
}

impl AvdConfig {
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        if !(alpha >= 2.0 && alpha.is_finite()) || !(beta >= 2.0 && beta.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "alpha = {alpha} and beta = {beta} must both be at least 2"
            )));
        }
        Ok(AvdConfig {
            alpha,
            beta,
            max_depth: DEFAULT_MAX_DEPTH,
        })
    }

    pub fn with_max_depth(mut self, max_depth: usize) -> Self {
        self.max_depth = max_depth;
        self
    }
}

/// Sites of a leaf that sit inside a ball well separated from the cell.
#[derive(Clone, Debug, PartialEq)]
pub struct InnerGroup {
    pub ball: EuclideanBall,
    /// Location ids.
    pub members: Vec<u32>,
}

/// A leaf cell and its site groups. Every location that is neither the
/// single site nor an inner member belongs to the outer cluster.
#[derive(Debug)]
pub struct AvdLeaf<A> {
    pub cell: BbdCell,
    pub depth: usize,
    pub single: Option<u32>,
    pub inner: Option<InnerGroup>,
    near: Vec<u32>,
    attachment: OnceLock<A>,
}

impl<A> AvdLeaf<A> {
    /// Locations in the single or inner group, sorted.
    pub fn near(&self) -> &[u32] {
        &self.near
    }

    pub fn is_outer(&self, loc: u32) -> bool {
        self.near.binary_search(&loc).is_err()
    }

    /// Outer cluster given the number of locations.
    pub fn outer(&self, locations: usize) -> Vec<u32> {
        (0..locations as u32).filter(|&l| self.is_outer(l)).collect()
    }

    pub fn attachment(&self) -> Option<&A> {
        self.attachment.get()
    }

    pub fn attachment_or_init(&self, f: impl FnOnce() -> A) -> &A {
        self.attachment.get_or_init(f)
    }
}

#[derive(Debug)]
enum NodeKind<A> {
    Leaf(AvdLeaf<A>),
    Split {
        axis: usize,
        mid: f64,
        lower: Option<Box<Node<A>>>,
        upper: Option<Box<Node<A>>>,
    },
    Shrink {
        inner: Box<Node<A>>,
        outer: Box<Node<A>>,
    },
    Failed,
}

#[derive(Debug)]
struct Node<A> {
    cell: BbdCell,
    depth: usize,
    local: Vec<u32>,
    kind: OnceLock<NodeKind<A>>,
}

impl<A> Node<A> {
    fn new(cell: BbdCell, depth: usize, local: Vec<u32>) -> Self {
        Node {
            cell,
            depth,
            local,
            kind: OnceLock::new(),
        }
    }
}

/// Result of point location.
#[derive(Debug)]
pub enum Location<'a, A> {
    Leaf(&'a AvdLeaf<A>),
    /// The point lies outside the root box.
    Outside,
}

/// Counts over the materialized part of a tree.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct TreeStats {
    pub nodes: usize,
    pub leaves: usize,
    pub pending: usize,
    pub failed: usize,
    pub max_depth: usize,
    pub mean_leaf_depth: f64,
    pub single_leaves: usize,
    pub inner_leaves: usize,
}

impl TreeStats {
    pub fn to_text(&self) -> String {
        format!(
            "nodes {}\nleaves {}\npending {}\nfailed {}\nmax_depth {}\nmean_leaf_depth {:.3}\nsingle_leaves {}\ninner_leaves {}\n",
            self.nodes,
            self.leaves,
            self.pending,
            self.failed,
            self.max_depth,
            self.mean_leaf_depth,
            self.single_leaves,
            self.inner_leaves
        )
    }
}

/// Box-decomposition tree over distinct site locations.
#[derive(Debug)]
pub struct AvdTree<A> {
    cfg: AvdConfig,
    root_box: AlignedBox,
    locations: Vec<Vector>,
    members: Vec<Vec<usize>>,
    location_of: Vec<usize>,
    root: Node<A>,
}

fn dedup(sites: &[Vector]) -> (Vec<Vector>, Vec<Vec<usize>>, Vec<usize>) {
    let mut map: HashMap<Vec<u64>, usize> = HashMap::new();
    let mut locations = Vec::new();
    let mut members: Vec<Vec<usize>> = Vec::new();
    let mut location_of = Vec::with_capacity(sites.len());
    for (i, s) in sites.iter().enumerate() {
        // -0.0 and 0.0 are the same point.
        let key: Vec<u64> = s.iter().map(|x| (x + 0.0).to_bits()).collect();
        let l = *map.entry(key).or_insert_with(|| {
            locations.push(s.clone());
            members.push(Vec::new());
            locations.len() - 1
        });
        members[l].push(i);
        location_of.push(l);
    }
    (locations, members, location_of)
}

fn root_cube(points: &[Vector], extra: Option<&AlignedBox>) -> AlignedBox {
    let d = points[0].dim();
    let mut lo = points[0].as_slice().to_vec();
    let mut hi = lo.clone();
    for p in points {
        for j in 0..d {
            lo[j] = lo[j].min(p[j]);
            hi[j] = hi[j].max(p[j]);
        }
    }
    if let Some(b) = extra {
        for j in 0..d {
            lo[j] = lo[j].min(b.low[j]);
            hi[j] = hi[j].max(b.high[j]);
        }
    }
    let half = (0..d).map(|j| 0.5 * (hi[j] - lo[j])).fold(0.0, f64::max);
    let half = if half > 0.0 { half * 1.1 } else { 1.0 };
    let c: Vec<f64> = (0..d).map(|j| 0.5 * (lo[j] + hi[j])).collect();
    AlignedBox {
        low: Vector::from_vec(c.iter().map(|x| x - half).collect()),
        high: Vector::from_vec(c.iter().map(|x| x + half).collect()),
    }
}

/// Children cells of a midpoint split of `cell` along `axis`; a child that
/// would coincide with the hole is `None`.
fn split_cells(cell: &BbdCell, axis: usize) -> (f64, Option<BbdCell>, Option<BbdCell>) {
    let (lo, hi) = cell.outer.split(axis);
    let mid = lo.high[axis];
    let wrap = |b: AlignedBox| -> Option<BbdCell> {
        match &cell.inner {
            Some(h) if b.contains_box(h) => {
                if &b == h {
                    None
                } else {
                    Some(BbdCell {
                        outer: b,
                        inner: Some(h.clone()),
                    })
                }
            }
            _ => Some(BbdCell::from_box(b)),
        }
    };
    (mid, wrap(lo), wrap(hi))
}

/// Build the diagram over `sites`.
pub fn build_avd<A>(sites: &[Vector], cfg: AvdConfig) -> Result<AvdTree<A>> {
    build_avd_with_bounds(sites, cfg, None)
}

/// Build the diagram with a root box that also covers `extra`.
pub fn build_avd_with_bounds<A>(sites: &[Vector], cfg: AvdConfig, extra: Option<&AlignedBox>) -> Result<AvdTree<A>> {
    if sites.is_empty() {
        return Err(Error::NoSites);
    }
    let d = sites[0].dim();
    for s in sites {
        if s.dim() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: s.dim(),
            });
        }
        if s.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite);
        }
    }
    AvdConfig::new(cfg.alpha, cfg.beta)?;
    let (locations, members, location_of) = dedup(sites);
    let root_box = root_cube(&locations, extra);
    let local = (0..locations.len() as u32).collect();
    let root = Node::new(BbdCell::from_box(root_box.clone()), 0, local);
    Ok(AvdTree {
        cfg,
        root_box,
        locations,
        members,
        location_of,
        root,
    })
}

impl<A> AvdTree<A> {
    pub fn config(&self) -> &AvdConfig {
        &self.cfg
    }

    pub fn root_box(&self) -> &AlignedBox {
        &self.root_box
    }

    pub fn dim(&self) -> usize {
        self.root_box.dim()
    }

    /// Distinct site locations.
    pub fn locations(&self) -> &[Vector] {
        &self.locations
    }

    /// Site indices sharing each location, ascending.
    pub fn members(&self, loc: u32) -> &[usize] {
        &self.members[loc as usize]
    }

    pub fn location_of(&self, site: usize) -> u32 {
        self.location_of[site] as u32
    }

    pub fn site_count(&self) -> usize {
        self.location_of.len()
    }

    fn loc(&self, l: u32) -> &[f64] {
        &self.locations[l as usize]
    }

    /// Leaf groups of `cell`, or `None` when it must be refined.
    fn classify(&self, cell: &BbdCell, local: &[u32]) -> Option<(Option<u32>, Option<InnerGroup>, Vec<u32>)> {
        let eb = enclosing_ball(cell);
        let reach = (1.0 + 2.0 * self.cfg.alpha) * eb.radius;
        let near: Vec<u32> = local
            .iter()
            .copied()
            .filter(|&l| dist(self.loc(l), &eb.center) < reach)
            .collect();
        let mut single = None;
        let mut rest = Vec::new();
        for &l in &near {
            if cell.contains(self.loc(l)) {
                if single.is_some() {
                    return None;
                }
                single = Some(l);
            } else {
                rest.push(l);
            }
        }
        if rest.is_empty() {
            return Some((single, None, near));
        }
        let ball = if rest.len() == 1 {
            EuclideanBall {
                center: self.locations[rest[0] as usize].clone(),
                radius: 0.0,
            }
        } else {
            let d = self.dim();
            let mut c = vec![0.0; d];
            for &l in &rest {
                for (cj, x) in c.iter_mut().zip(self.loc(l)) {
                    *cj += x;
                }
            }
            c.iter_mut().for_each(|x| *x /= rest.len() as f64);
            let r = rest.iter().map(|&l| dist(self.loc(l), &c)).fold(0.0, f64::max);
            EuclideanBall {
                center: Vector::from_vec(c),
                radius: r * (1.0 + 1e-9),
            }
        };
        let gap = dist_ball_cell(&ball, cell).ok()?;
        if gap >= self.cfg.beta * ball.diam() && (ball.radius > 0.0 || gap > 0.0) {
            Some((single, Some(InnerGroup { ball, members: rest }), near))
        } else {
            None
        }
    }

    fn child(&self, parent: &Node<A>, cell: BbdCell) -> Box<Node<A>> {
        let eb = enclosing_ball(&cell);
        let reach = (2.0 + 2.0 * self.cfg.alpha) * eb.radius;
        let local = parent
            .local
            .iter()
            .copied()
            .filter(|&l| dist(self.loc(l), &eb.center) < reach)
            .collect();
        Box::new(Node::new(cell, parent.depth + 1, local))
    }

    /// Quadtree box holding more than 2/3 of the cell's sites with at most
    /// half its diameter.
    fn shrink_box(&self, cell: &BbdCell, inside: &[u32]) -> Option<AlignedBox> {
        if cell.inner.is_some() || inside.len() < 2 {
            return None;
        }
        let target = cell.outer.diameter() * 0.5;
        let mut b = cell.outer.clone();
        let mut pts: Vec<u32> = inside.to_vec();
        let total = inside.len();
        while b.diameter() > target {
            let axis = b.longest_axis();
            let (lo, hi) = b.split(axis);
            let mid = lo.high[axis];
            let (l, h): (Vec<u32>, Vec<u32>) = pts.iter().partition(|&&p| self.loc(p)[axis] < mid);
            let (nb, np) = if l.len() >= h.len() { (lo, l) } else { (hi, h) };
            if 3 * np.len() <= 2 * total {
                return None;
            }
            b = nb;
            pts = np;
        }
        Some(b)
    }

    fn expand<'a>(&'a self, node: &'a Node<A>) -> &'a NodeKind<A> {
        node.kind.get_or_init(|| {
            if let Some((single, inner, near)) = self.classify(&node.cell, &node.local) {
                return NodeKind::Leaf(AvdLeaf {
                    cell: node.cell.clone(),
                    depth: node.depth,
                    single,
                    inner,
                    near,
                    attachment: OnceLock::new(),
                });
            }
            if node.depth >= self.cfg.max_depth {
                return NodeKind::Failed;
            }
            let inside: Vec<u32> = node
                .local
                .iter()
                .copied()
                .filter(|&l| node.cell.contains(self.loc(l)))
                .collect();
            if let Some(ib) = self.shrink_box(&node.cell, &inside) {
                let outer = BbdCell {
                    outer: node.cell.outer.clone(),
                    inner: Some(ib.clone()),
                };
                return NodeKind::Shrink {
                    inner: self.child(node, BbdCell::from_box(ib)),
                    outer: self.child(node, outer),
                };
            }
            let axis = node.cell.outer.longest_axis();
            let (mid, lo, hi) = split_cells(&node.cell, axis);
            NodeKind::Split {
                axis,
                mid,
                lower: lo.map(|c| self.child(node, c)),
                upper: hi.map(|c| self.child(node, c)),
            }
        })
    }

    /// Leaf containing `q` and the number of nodes visited.
    pub fn locate(&self, q: &[f64]) -> Result<(Location<'_, A>, usize)> {
        if q.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: q.len(),
            });
        }
        if !self.root_box.contains(q) {
            return Ok((Location::Outside, 0));
        }
        let mut node = &self.root;
        let mut visits = 0;
        loop {
            visits += 1;
            match self.expand(node) {
                NodeKind::Leaf(leaf) => return Ok((Location::Leaf(leaf), visits)),
                NodeKind::Failed => return Err(Error::MaxDepthExceeded(self.cfg.max_depth)),
                NodeKind::Shrink { inner, outer } => {
                    node = if inner.cell.outer.contains(q) { inner } else { outer };
                }
                NodeKind::Split {
                    axis, mid, lower, upper, ..
                } => {
                    let (first, second) = if q[*axis] < *mid { (lower, upper) } else { (upper, lower) };
                    node = first
                        .as_deref()
                        .or(second.as_deref())
                        .ok_or_else(|| Error::Format("split node without children".into()))?;
                }
            }
        }
    }

    /// Expands every node.
    pub fn materialize_all(&self, exec: Execution)
    where
        A: Send + Sync,
    {
        self.materialize(&self.root, exec);
    }

    fn materialize(&self, node: &Node<A>, exec: Execution)
    where
        A: Send + Sync,
    {
        match self.expand(node) {
            NodeKind::Split { lower, upper, .. } => {
                par::join(
                    exec,
                    || lower.as_deref().map(|n| self.materialize(n, exec)),
                    || upper.as_deref().map(|n| self.materialize(n, exec)),
                );
            }
            NodeKind::Shrink { inner, outer } => {
                par::join(exec, || self.materialize(inner, exec), || self.materialize(outer, exec));
            }
            _ => {}
        }
    }

    fn visit<'a>(&'a self, node: &'a Node<A>, f: &mut dyn FnMut(&'a Node<A>)) {
        f(node);
        match node.kind.get() {
            Some(NodeKind::Split { lower, upper, .. }) => {
                for c in [lower, upper].into_iter().flatten() {
                    self.visit(c, f);
                }
            }
            Some(NodeKind::Shrink { inner, outer }) => {
                self.visit(inner, f);
                self.visit(outer, f);
            }
            _ => {}
        }
    }

    /// Materialized leaves in preorder.
    pub fn leaves(&self) -> Vec<&AvdLeaf<A>> {
        let mut out = Vec::new();
        self.visit(&self.root, &mut |n| {
            if let Some(NodeKind::Leaf(l)) = n.kind.get() {
                out.push(l);
            }
        });
        out
    }

    pub fn stats(&self) -> TreeStats {
        let mut s = TreeStats::default();
        let mut depth_sum = 0usize;
        self.visit(&self.root, &mut |n| {
            s.nodes += 1;
            s.max_depth = s.max_depth.max(n.depth);
            match n.kind.get() {
                None => s.pending += 1,
                Some(NodeKind::Failed) => s.failed += 1,
                Some(NodeKind::Leaf(l)) => {
                    s.leaves += 1;
                    depth_sum += l.depth;
                    if l.single.is_some() {
                        s.single_leaves += 1;
                    }
                    if l.inner.is_some() {
                        s.inner_leaves += 1;
                    }
                }
                _ => {}
            }
        });
        if s.leaves > 0 {
            s.mean_leaf_depth = depth_sum as f64 / s.leaves as f64;
        }
        s
    }

    /// Checks the leaf invariants from scratch against every location.
    pub fn check_leaf(&self, leaf: &AvdLeaf<A>) -> std::result::Result<(), String> {
        let eb = enclosing_ball(&leaf.cell);
        let inner_members: &[u32] = leaf.inner.as_ref().map_or(&[], |g| &g.members);
        for l in 0..self.locations.len() as u32 {
            let p = self.loc(l);
            let is_single = leaf.single == Some(l);
            let is_inner = inner_members.contains(&l);
            let is_outer = leaf.is_outer(l);
            if is_single as u8 + is_inner as u8 + is_outer as u8 != 1 {
                return Err(format!("location {l} is in {} groups", is_single as u8 + is_inner as u8 + is_outer as u8));
            }
            if leaf.cell.contains(p) && !is_single {
                return Err(format!("location {l} lies in the cell but is not the single site"));
            }
            if is_single && !leaf.cell.contains(p) {
                return Err(format!("single location {l} is outside the cell"));
            }
            if is_outer && eb.dist_to_point(p) < self.cfg.alpha * eb.diam() {
                return Err(format!("outer location {l} is not alpha-separated"));
            }
        }
        if let Some(g) = &leaf.inner {
            for &l in &g.members {
                if !g.ball.contains(self.loc(l)) {
                    return Err(format!("inner location {l} is outside B_w"));
                }
            }
            let gap = dist_ball_cell(&g.ball, &leaf.cell).map_err(|e| e.to_string())?;
            if gap < self.cfg.beta * g.ball.diam() {
                return Err("inner ball is not beta-separated".into());
            }
        }
        Ok(())
    }
}

const TAG_PENDING: u8 = 0;
const TAG_LEAF: u8 = 1;
const TAG_SPLIT: u8 = 2;
const TAG_SHRINK: u8 = 3;
const TAG_ABSENT: u8 = 4;
const TAG_FAILED: u8 = 5;
const NO_SITE: u32 = u32::MAX;

fn write_ids(w: &mut dyn Write, ids: &[u32]) -> Result<()> {
    w.write_u32::<LittleEndian>(ids.len() as u32)?;
    for &i in ids {
        w.write_u32::<LittleEndian>(i)?;
    }
    Ok(())
}

fn read_ids(r: &mut dyn Read) -> Result<Vec<u32>> {
    let n = r.read_u32::<LittleEndian>()? as usize;
    (0..n).map(|_| Ok(r.read_u32::<LittleEndian>()?)).collect()
}

fn write_vec(w: &mut dyn Write, v: &[f64]) -> Result<()> {
    for &x in v {
        w.write_f64::<LittleEndian>(x)?;
    }
    Ok(())
}

fn read_vec(r: &mut dyn Read, d: usize) -> Result<Vec<f64>> {
    (0..d).map(|_| Ok(r.read_f64::<LittleEndian>()?)).collect()
}

/// Writes an attachment blob.
pub type AttachmentWriter<'a, A> = &'a dyn Fn(&A, &mut dyn Write) -> Result<()>;
/// Reads an attachment blob.
pub type AttachmentReader<'a, A> = &'a dyn Fn(&mut dyn Read) -> Result<A>;

impl<A> AvdTree<A> {
    /// Serializes the tree in preorder. Unexpanded nodes are stored with
    /// their candidate sets so they expand identically after loading.
    pub fn write_to(&self, w: &mut dyn Write, att: AttachmentWriter<'_, A>) -> Result<()> {
        let d = self.dim();
        w.write_u32::<LittleEndian>(d as u32)?;
        w.write_f64::<LittleEndian>(self.cfg.alpha)?;
        w.write_f64::<LittleEndian>(self.cfg.beta)?;
        w.write_u32::<LittleEndian>(self.cfg.max_depth as u32)?;
        write_vec(w, &self.root_box.low)?;
        write_vec(w, &self.root_box.high)?;
        w.write_u32::<LittleEndian>(self.location_of.len() as u32)?;
        for &l in &self.location_of {
            w.write_u32::<LittleEndian>(l as u32)?;
        }
        w.write_u32::<LittleEndian>(self.locations.len() as u32)?;
        for p in &self.locations {
            write_vec(w, p)?;
        }
        self.write_node(&self.root, w, att)
    }

    fn write_node(&self, node: &Node<A>, w: &mut dyn Write, att: AttachmentWriter<'_, A>) -> Result<()> {
        match node.kind.get() {
            None => {
                w.write_u8(TAG_PENDING)?;
                write_ids(w, &node.local)?;
            }
            Some(NodeKind::Failed) => w.write_u8(TAG_FAILED)?,
            Some(NodeKind::Leaf(l)) => {
                w.write_u8(TAG_LEAF)?;
                w.write_u32::<LittleEndian>(l.single.unwrap_or(NO_SITE))?;
                write_ids(w, &l.near)?;
                match &l.inner {
                    Some(g) => {
                        w.write_u8(1)?;
                        write_vec(w, &g.ball.center)?;
                        w.write_f64::<LittleEndian>(g.ball.radius)?;
                        write_ids(w, &g.members)?;
                    }
                    None => w.write_u8(0)?,
                }
                match l.attachment.get() {
                    Some(a) => {
                        w.write_u8(1)?;
                        att(a, w)?;
                    }
                    None => w.write_u8(0)?,
                }
            }
            Some(NodeKind::Split {
                axis, mid, lower, upper, ..
            }) => {
                w.write_u8(TAG_SPLIT)?;
                w.write_u32::<LittleEndian>(*axis as u32)?;
                w.write_f64::<LittleEndian>(*mid)?;
                for c in [lower, upper] {
                    match c {
                        Some(n) => self.write_node(n, w, att)?,
                        None => w.write_u8(TAG_ABSENT)?,
                    }
                }
            }
            Some(NodeKind::Shrink { inner, outer }) => {
                w.write_u8(TAG_SHRINK)?;
                write_vec(w, &inner.cell.outer.low)?;
                write_vec(w, &inner.cell.outer.high)?;
                self.write_node(inner, w, att)?;
                self.write_node(outer, w, att)?;
            }
        }
        Ok(())
    }

    /// Reads a tree written by [`AvdTree::write_to`].
    pub fn read_from(r: &mut dyn Read, att: AttachmentReader<'_, A>) -> Result<Self> {
        let d = r.read_u32::<LittleEndian>()? as usize;
        if d == 0 {
            return Err(Error::Format("zero dimension".into()));
        }
        let alpha = r.read_f64::<LittleEndian>()?;
        let beta = r.read_f64::<LittleEndian>()?;
        let max_depth = r.read_u32::<LittleEndian>()? as usize;
        let cfg = AvdConfig::new(alpha, beta)?.with_max_depth(max_depth);
        let root_box = AlignedBox::new(Vector::new(read_vec(r, d)?)?, Vector::new(read_vec(r, d)?)?)?;
        let n = r.read_u32::<LittleEndian>()? as usize;
        let location_of: Vec<usize> = (0..n)
            .map(|_| Ok(r.read_u32::<LittleEndian>()? as usize))
            .collect::<Result<_>>()?;
        let nl = r.read_u32::<LittleEndian>()? as usize;
        let locations: Vec<Vector> = (0..nl)
            .map(|_| Vector::new(read_vec(r, d)?))
            .collect::<Result<_>>()?;
        let mut members = vec![Vec::new(); nl];
        for (i, &l) in location_of.iter().enumerate() {
            members
                .get_mut(l)
                .ok_or_else(|| Error::Format(format!("site {i} refers to missing location {l}")))?
                .push(i);
        }
        let mut tree = AvdTree {
            cfg,
            root_box: root_box.clone(),
            locations,
            members,
            location_of,
            root: Node::new(BbdCell::from_box(root_box), 0, Vec::new()),
        };
        let cell = tree.root.cell.clone();
        tree.root = tree.read_node(r, cell, 0, att)?.ok_or_else(|| Error::Format("empty tree".into()))?;
        Ok(tree)
    }

    fn read_node(&self, r: &mut dyn Read, cell: BbdCell, depth: usize, att: AttachmentReader<'_, A>) -> Result<Option<Node<A>>> {
        let d = self.dim();
        let tag = r.read_u8()?;
        let mut node = Node::new(cell, depth, Vec::new());
        let kind = match tag {
            TAG_ABSENT => return Ok(None),
            TAG_PENDING => {
                node.local = read_ids(r)?;
                return Ok(Some(node));
            }
            TAG_FAILED => NodeKind::Failed,
            TAG_LEAF => {
                let s = r.read_u32::<LittleEndian>()?;
                let near = read_ids(r)?;
                let inner = if r.read_u8()? == 1 {
                    let center = Vector::new(read_vec(r, d)?)?;
                    let radius = r.read_f64::<LittleEndian>()?;
                    Some(InnerGroup {
                        ball: EuclideanBall::new(center, radius)?,
                        members: read_ids(r)?,
                    })
                } else {
                    None
                };
                let attachment = OnceLock::new();
                if r.read_u8()? == 1 {
                    let _ = attachment.set(att(r)?);
                }
                NodeKind::Leaf(AvdLeaf {
                    cell: node.cell.clone(),
                    depth,
                    single: (s != NO_SITE).then_some(s),
                    inner,
                    near,
                    attachment,
                })
            }
            TAG_SPLIT => {
                let axis = r.read_u32::<LittleEndian>()? as usize;
                let mid = r.read_f64::<LittleEndian>()?;
                if axis >= d {
                    return Err(Error::Format(format!("split axis {axis}")));
                }
                let (m, lo, hi) = split_cells(&node.cell, axis);
                if m.to_bits() != mid.to_bits() {
                    return Err(Error::Format("split midpoint mismatch".into()));
                }
                let mut kids = [None, None];
                for (k, c) in kids.iter_mut().zip([lo, hi]) {
                    let child = match c {
                        Some(c) => self.read_node(r, c, depth + 1, att)?,
                        None => {
                            if r.read_u8()? != TAG_ABSENT {
                                return Err(Error::Format("expected absent child".into()));
                            }
                            None
                        }
                    };
                    *k = child.map(Box::new);
                }
                let [lower, upper] = kids;
                NodeKind::Split { axis, mid, lower, upper }
            }
            TAG_SHRINK => {
                let ib = AlignedBox::new(Vector::new(read_vec(r, d)?)?, Vector::new(read_vec(r, d)?)?)?;
                let outer = BbdCell {
                    outer: node.cell.outer.clone(),
                    inner: Some(ib.clone()),
                };
                let inner = self
                    .read_node(r, BbdCell::from_box(ib), depth + 1, att)?
                    .ok_or_else(|| Error::Format("missing shrink child".into()))?;
                let outer = self
                    .read_node(r, outer, depth + 1, att)?
                    .ok_or_else(|| Error::Format("missing shrink child".into()))?;
                NodeKind::Shrink {
                    inner: Box::new(inner),
                    outer: Box::new(outer),
                }
            }
            t => return Err(Error::Format(format!("unknown node tag {t}"))),
        };
        let _ = node.kind.set(kind);
        Ok(Some(node))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn pts(n: usize, d: usize, seed: u64) -> Vec<Vector> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| Vector::from_vec((0..d).map(|_| rng.random::<f64>()).collect()))
            .collect()
    }

    #[test]
    fn single_site_leaves() {
        let t: AvdTree<()> = build_avd(&[Vector::from_vec(vec![0.5, 0.5])], AvdConfig::new(2.0, 4.0).unwrap()).unwrap();
        t.materialize_all(Execution::Sequential);
        for leaf in t.leaves() {
            assert!(leaf.inner.is_none() || leaf.inner.as_ref().unwrap().members == vec![0]);
            t.check_leaf(leaf).unwrap();
        }
    }

    #[test]
    fn two_sites_invariants() {
        let s = vec![Vector::from_vec(vec![0.0, 0.0]), Vector::from_vec(vec![1.0, 0.0])];
        let t: AvdTree<()> = build_avd(&s, AvdConfig::new(2.0, 4.0).unwrap()).unwrap();
        t.materialize_all(Execution::Sequential);
        assert!(t.stats().failed == 0);
        for leaf in t.leaves() {
            t.check_leaf(leaf).unwrap();
        }
    }

    #[test]
    fn random_sites_leaf_count_and_invariants() {
        let s = pts(100, 2, 7);
        let t: AvdTree<()> = build_avd(&s, AvdConfig::new(2.0, 100.0).unwrap()).unwrap();
        t.materialize_all(Execution::best());
        let st = t.stats();
        assert_eq!(st.failed, 0);
        assert_eq!(st.pending, 0);
        let bound = 50.0 * 4.0 * 100.0 * 100f64.ln();
        assert!((st.leaves as f64) <= bound, "{} leaves", st.leaves);
        for leaf in t.leaves() {
            t.check_leaf(leaf).unwrap();
        }
    }

    #[test]
    fn locate_contains_query() {
        let s = pts(50, 2, 3);
        let t: AvdTree<()> = build_avd(&s, AvdConfig::new(2.0, 20.0).unwrap()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..500 {
            let q: Vec<f64> = (0..2).map(|_| rng.random::<f64>()).collect();
            match t.locate(&q).unwrap().0 {
                Location::Leaf(l) => assert!(l.cell.contains(&q)),
                Location::Outside => panic!("inside query located outside"),
            }
        }
        assert!(matches!(t.locate(&[50.0, 50.0]).unwrap().0, Location::Outside));
        let (loc, _) = t.locate(&s[4]).unwrap();
        let Location::Leaf(l) = loc else { panic!() };
        assert_eq!(l.single, Some(t.location_of(4)));
    }

    #[test]
    fn duplicates_are_merged() {
        let s = vec![
            Vector::from_vec(vec![0.0, 0.0]),
            Vector::from_vec(vec![1.0, 1.0]),
            Vector::from_vec(vec![0.0, 0.0]),
        ];
        let t: AvdTree<()> = build_avd(&s, AvdConfig::new(2.0, 4.0).unwrap()).unwrap();
        assert_eq!(t.locations().len(), 2);
        assert_eq!(t.members(0), &[0, 2]);
    }

    #[test]
    fn lazy_and_eager_agree() {
        let s = pts(40, 2, 11);
        let cfg = AvdConfig::new(3.0, 30.0).unwrap();
        let lazy: AvdTree<()> = build_avd(&s, cfg).unwrap();
        let eager: AvdTree<()> = build_avd(&s, cfg).unwrap();
        eager.materialize_all(Execution::best());
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..300 {
            let q: Vec<f64> = (0..2).map(|_| rng.random::<f64>()).collect();
            let (Location::Leaf(a), va) = lazy.locate(&q).unwrap() else { panic!() };
            let (Location::Leaf(b), vb) = eager.locate(&q).unwrap() else { panic!() };
            assert_eq!(a.cell, b.cell);
            assert_eq!(a.near(), b.near());
            assert_eq!(va, vb);
        }
    }

    #[test]
    fn serialization_round_trip() {
        let s = pts(30, 2, 2);
        let t: AvdTree<u32> = build_avd(&s, AvdConfig::new(2.0, 10.0).unwrap()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for i in 0..50 {
            let q: Vec<f64> = (0..2).map(|_| rng.random::<f64>()).collect();
            if let (Location::Leaf(l), _) = t.locate(&q).unwrap() {
                l.attachment_or_init(|| i);
            }
        }
        let mut buf = Vec::new();
        t.write_to(&mut buf, &|a, w| Ok(w.write_u32::<LittleEndian>(*a)?)).unwrap();
        let back: AvdTree<u32> = AvdTree::read_from(&mut &buf[..], &|r| Ok(r.read_u32::<LittleEndian>()?)).unwrap();
        let mut buf2 = Vec::new();
        back.write_to(&mut buf2, &|a, w| Ok(w.write_u32::<LittleEndian>(*a)?)).unwrap();
        assert_eq!(buf, buf2);
        back.materialize_all(Execution::Sequential);
        t.materialize_all(Execution::Sequential);
        assert_eq!(back.stats(), t.stats());
    }

    #[test]
    fn bad_config() {
        assert!(AvdConfig::new(1.0, 4.0).is_err());
        assert!(matches!(build_avd::<()>(&[], AvdConfig::new(2.0, 4.0).unwrap()), Err(Error::NoSites)));
    }
}
