//! Binary index files.
//!
//! Layout, little-endian throughout: magic `EANN`, version `u16`, kind `u8`,
//! `d` and `n` as `u32`, then `eps`, `tau`, `alpha`, `beta` as `f64`, the
//! site functions, the preorder tree and the leaf attachment blobs.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::sync::Arc;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use nalgebra::DMatrix;

use super::{AnnIndex, InnerPart, InnerPatchSet, LeafAttachment, OuterPart};
use crate::avd::AvdTree;
use crate::distances::{make_bregman, make_mahalanobis, make_minkowski, BregmanSpec, DistanceKind, Domain, FamilyKind, Generator, SiteFunction};
use crate::envelope::RelativeAvr;
use crate::error::{Error, Result};
use crate::geom::{AlignedBox, Vector};

pub const MAGIC: &[u8; 4] = b"EANN";
pub const VERSION: u16 = 1;

const SITE_MINKOWSKI: u8 = 0;
const SITE_MAHALANOBIS: u8 = 1;
const SITE_BREGMAN: u8 = 2;

fn write_f64s(w: &mut dyn Write, v: &[f64]) -> Result<()> {
    for &x in v {
        w.write_f64::<LittleEndian>(x)?;
    }
    Ok(())
}

fn read_f64s(r: &mut dyn Read, n: usize) -> Result<Vec<f64>> {
    (0..n).map(|_| Ok(r.read_f64::<LittleEndian>()?)).collect()
}

fn write_matrix(w: &mut dyn Write, m: &DMatrix<f64>) -> Result<()> {
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            w.write_f64::<LittleEndian>(m[(i, j)])?;
        }
    }
    Ok(())
}

fn read_matrix(r: &mut dyn Read, d: usize) -> Result<DMatrix<f64>> {
    Ok(DMatrix::from_row_slice(d, d, &read_f64s(r, d * d)?))
}

fn write_spec(w: &mut dyn Write, s: &BregmanSpec) -> Result<()> {
    match s.generator() {
        Generator::SquaredMahalanobis(m) => {
            w.write_u8(0)?;
            write_matrix(w, m)?;
        }
        Generator::GeneralizedKl => w.write_u8(1)?,
        Generator::ItakuraSaito => w.write_u8(2)?,
        Generator::Custom(_) => return Err(Error::Format("custom generators cannot be serialized".into())),
    }
    match s.domain() {
        Domain::Whole => w.write_u8(0)?,
        Domain::Box(b) => {
            w.write_u8(1)?;
            write_f64s(w, &b.low)?;
            write_f64s(w, &b.high)?;
        }
        Domain::Simplex => w.write_u8(2)?,
    }
    w.write_f64::<LittleEndian>(s.tau())?;
    Ok(())
}

fn read_spec(r: &mut dyn Read, d: usize) -> Result<Arc<BregmanSpec>> {
    let generator = match r.read_u8()? {
        0 => Generator::SquaredMahalanobis(Arc::new(read_matrix(r, d)?)),
        1 => Generator::GeneralizedKl,
        2 => Generator::ItakuraSaito,
        t => return Err(Error::Format(format!("unknown generator tag {t}"))),
    };
    let domain = match r.read_u8()? {
        0 => Domain::Whole,
        1 => Domain::Box(AlignedBox::new(Vector::new(read_f64s(r, d)?)?, Vector::new(read_f64s(r, d)?)?)?),
        2 => Domain::Simplex,
        t => return Err(Error::Format(format!("unknown domain tag {t}"))),
    };
    let tau = r.read_f64::<LittleEndian>()?;
    BregmanSpec::with_tau(generator, domain, d, tau)
}

fn write_sites(w: &mut dyn Write, sites: &[SiteFunction]) -> Result<()> {
    if let Some(spec) = sites[0].bregman_spec() {
        write_spec(w, spec)?;
    }
    for f in sites {
        match f.kind() {
            DistanceKind::Minkowski { k, weight } => {
                w.write_u8(SITE_MINKOWSKI)?;
                w.write_f64::<LittleEndian>(*k)?;
                w.write_f64::<LittleEndian>(*weight)?;
            }
            DistanceKind::Mahalanobis { matrix } => {
                w.write_u8(SITE_MAHALANOBIS)?;
                write_matrix(w, matrix)?;
            }
            DistanceKind::Bregman(_) => w.write_u8(SITE_BREGMAN)?,
            DistanceKind::CustomGauge { .. } => {
                return Err(Error::Format("custom gauges cannot be serialized".into()));
            }
        }
        write_f64s(w, f.site())?;
        w.write_f64::<LittleEndian>(f.tau())?;
    }
    Ok(())
}

fn read_sites(r: &mut dyn Read, kind: FamilyKind, d: usize, n: usize) -> Result<Vec<SiteFunction>> {
    let spec = match kind {
        FamilyKind::Bregman => Some(read_spec(r, d)?),
        FamilyKind::Scaling => None,
    };
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let tag = r.read_u8()?;
        let f = match tag {
            SITE_MINKOWSKI => {
                let k = r.read_f64::<LittleEndian>()?;
                let weight = r.read_f64::<LittleEndian>()?;
                make_minkowski(Vector::new(read_f64s(r, d)?)?, k, weight)?
            }
            SITE_MAHALANOBIS => {
                let m = read_matrix(r, d)?;
                make_mahalanobis(Vector::new(read_f64s(r, d)?)?, m)?
            }
            SITE_BREGMAN => {
                let spec = spec.as_ref().ok_or_else(|| Error::Format("divergence site in scaling index".into()))?;
                make_bregman(spec, Vector::new(read_f64s(r, d)?)?)?
            }
            t => return Err(Error::Format(format!("unknown site tag {t}"))),
        };
        let tau = r.read_f64::<LittleEndian>()?;
        out.push(f.with_tau(tau));
    }
    Ok(out)
}

fn write_ids(w: &mut dyn Write, ids: &[usize]) -> Result<()> {
    w.write_u32::<LittleEndian>(ids.len() as u32)?;
    for &i in ids {
        w.write_u32::<LittleEndian>(i as u32)?;
    }
    Ok(())
}

fn read_ids(r: &mut dyn Read, n: usize) -> Result<Vec<usize>> {
    let len = r.read_u32::<LittleEndian>()? as usize;
    (0..len)
        .map(|_| {
            let i = r.read_u32::<LittleEndian>()? as usize;
            if i >= n {
                return Err(Error::Format(format!("site id {i} out of range")));
            }
            Ok(i)
        })
        .collect()
}

fn write_attachment(a: &LeafAttachment, w: &mut dyn Write) -> Result<()> {
    match &a.outer {
        None => w.write_u8(0)?,
        Some(OuterPart::Avr(avr)) => {
            w.write_u8(1)?;
            avr.write_to(w)?;
        }
        Some(OuterPart::Scan) => w.write_u8(2)?,
    }
    match &a.inner {
        None => w.write_u8(0)?,
        Some(InnerPart::Direct(ids)) => {
            w.write_u8(1)?;
            write_ids(w, ids)?;
        }
        Some(InnerPart::Representative(i)) => {
            w.write_u8(2)?;
            w.write_u32::<LittleEndian>(*i as u32)?;
        }
        Some(InnerPart::Patches(p)) => {
            w.write_u8(3)?;
            write_f64s(w, p.center())?;
            w.write_f64::<LittleEndian>(p.eps())?;
            write_ids(w, p.site_ids())?;
            let built = p.built();
            w.write_u32::<LittleEndian>(built.len() as u32)?;
            for (id, avr) in built {
                w.write_u32::<LittleEndian>(id)?;
                avr.write_to(w)?;
            }
        }
    }
    Ok(())
}

fn read_attachment(r: &mut dyn Read, sites: &[SiteFunction], tau: f64) -> Result<LeafAttachment> {
    let n = sites.len();
    let d = sites[0].dim();
    let fetch = |i: usize| -> Result<SiteFunction> {
        sites
            .get(i)
            .cloned()
            .ok_or_else(|| Error::Format(format!("site id {i} out of range")))
    };
    let outer = match r.read_u8()? {
        0 => None,
        1 => Some(OuterPart::Avr(Box::new(RelativeAvr::read_from(r, &fetch)?))),
        2 => Some(OuterPart::Scan),
        t => return Err(Error::Format(format!("unknown outer tag {t}"))),
    };
    let inner = match r.read_u8()? {
        0 => None,
        1 => Some(InnerPart::Direct(read_ids(r, n)?)),
        2 => {
            let i = r.read_u32::<LittleEndian>()? as usize;
            if i >= n {
                return Err(Error::Format(format!("site id {i} out of range")));
            }
            Some(InnerPart::Representative(i))
        }
        3 => {
            let center = Vector::new(read_f64s(r, d)?)?;
            let eps = r.read_f64::<LittleEndian>()?;
            let ids = read_ids(r, n)?;
            let fs: Vec<SiteFunction> = ids.iter().map(|&i| sites[i].clone()).collect();
            let set = InnerPatchSet::new(center.clone(), tau, eps, ids, &fs)?;
            let built = r.read_u32::<LittleEndian>()? as usize;
            let resited = |i: usize| -> Result<SiteFunction> { fetch(i)?.resited(center.clone()) };
            for _ in 0..built {
                let id = r.read_u32::<LittleEndian>()?;
                set.insert_built(id, RelativeAvr::read_from(r, &resited)?);
            }
            Some(InnerPart::Patches(set))
        }
        t => return Err(Error::Format(format!("unknown inner tag {t}"))),
    };
    Ok(LeafAttachment { outer, inner })
}

impl AnnIndex {
    /// Writes the index with everything built so far.
    pub fn write_to(&self, w: &mut dyn Write) -> Result<()> {
        w.write_all(MAGIC)?;
        w.write_u16::<LittleEndian>(VERSION)?;
        w.write_u8(match self.family {
            FamilyKind::Scaling => 0,
            FamilyKind::Bregman => 1,
        })?;
        w.write_u32::<LittleEndian>(self.dim() as u32)?;
        w.write_u32::<LittleEndian>(self.sites.len() as u32)?;
        for x in [self.eps, self.tau, self.alpha(), self.beta()] {
            w.write_f64::<LittleEndian>(x)?;
        }
        write_sites(w, &self.sites)?;
        self.tree.write_to(w, &write_attachment)
    }

    pub fn read_from(r: &mut dyn Read) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Format("bad magic".into()));
        }
        let version = r.read_u16::<LittleEndian>()?;
        if version != VERSION {
            return Err(Error::Format(format!("unsupported version {version}")));
        }
        let kind = match r.read_u8()? {
            0 => FamilyKind::Scaling,
            1 => FamilyKind::Bregman,
            t => return Err(Error::Format(format!("unknown kind {t}"))),
        };
        let d = r.read_u32::<LittleEndian>()? as usize;
        let n = r.read_u32::<LittleEndian>()? as usize;
        if d == 0 || n == 0 {
            return Err(Error::Format("empty index".into()));
        }
        let eps = r.read_f64::<LittleEndian>()?;
        let tau = r.read_f64::<LittleEndian>()?;
        let alpha = r.read_f64::<LittleEndian>()?;
        let beta = r.read_f64::<LittleEndian>()?;
        let sites = read_sites(r, kind, d, n)?;
        let tree: AvdTree<LeafAttachment> = AvdTree::read_from(r, &|r| read_attachment(r, &sites, tau))?;
        if tree.config().alpha.to_bits() != alpha.to_bits() || tree.config().beta.to_bits() != beta.to_bits() {
            return Err(Error::Format("header parameters disagree with the tree".into()));
        }
        if tree.site_count() != n || tree.dim() != d {
            return Err(Error::Format("tree does not match the site list".into()));
        }
        AnnIndex::from_parts(sites, eps, tau, tree)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let mut r = BufReader::new(File::open(path)?);
        Self::read_from(&mut r)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::par::Execution;

    #[test]
    fn round_trip_preserves_answers() {
        let sites: Vec<SiteFunction> = (0..20)
            .map(|i| {
                let t = i as f64 * 0.7;
                make_minkowski(Vector::from_vec(vec![t.cos() * (1.0 + 0.05 * i as f64), t.sin()]), 2.0, 1.0).unwrap()
            })
            .collect();
        let idx = AnnIndex::build(sites, 0.25).unwrap();
        let qs: Vec<Vec<f64>> = (0..200).map(|i| vec![(i as f64 * 0.37).sin() * 1.5, (i as f64 * 0.11).cos()]).collect();
        let before = idx.query_batch(&qs[..100], Execution::Sequential);
        let mut buf = Vec::new();
        idx.write_to(&mut buf).unwrap();
        assert_eq!(&buf[..4], b"EANN");
        let back = AnnIndex::read_from(&mut &buf[..]).unwrap();
        for (q, a) in qs.iter().zip(&before) {
            assert_eq!(back.query(q).unwrap(), *a.as_ref().unwrap());
        }
        for q in &qs[100..] {
            assert_eq!(back.query(q).unwrap(), idx.query(q).unwrap());
        }
    }

    #[test]
    fn rejects_bad_magic() {
        assert!(matches!(AnnIndex::read_from(&mut &b"NOPE"[..]), Err(Error::Format(_))));
    }
}
