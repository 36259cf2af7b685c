//! TOML distance configuration.
//!
//! ```toml
//! kind = "minkowski"      # minkowski | mahalanobis | bregman
//! k = 3.0                 # minkowski exponent
//! weight = 1.0            # or weights = [..], one per site
//! # matrix = [4.0, 0.0, 0.0, 1.0]          mahalanobis, row-major
//! # generator = "kl"                       squared-euclidean | squared-mahalanobis | kl | itakura-saito
//! # domain_low = [0.1, 0.1]
//! # domain_high = [1.0, 1.0]
//! ```

use std::path::Path;
use std::sync::Arc;

use nalgebra::DMatrix;
use serde::Deserialize;

use crate::distances::{make_bregman, make_mahalanobis, make_minkowski, BregmanSpec, Domain, Generator, SiteFunction};
use crate::error::{Error, Result};
use crate::geom::{AlignedBox, Vector};

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct DistanceConfig {
    pub kind: String,
    pub k: Option<f64>,
    pub weight: Option<f64>,
    pub weights: Option<Vec<f64>>,
    pub matrix: Option<Vec<f64>>,
    pub generator: Option<String>,
    pub domain_low: Option<Vec<f64>>,
    pub domain_high: Option<Vec<f64>>,
}

fn bad(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}

impl DistanceConfig {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse {
            line: e.span().map_or(0, |s| text[..s.start].lines().count().max(1)),
            message: e.message().to_string(),
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    fn matrix(&self, d: usize) -> Result<DMatrix<f64>> {
        let m = self.matrix.as_ref().ok_or_else(|| bad("matrix is required"))?;
        if m.len() != d * d {
            return Err(Error::DimensionMismatch {
                expected: d * d,
                got: m.len(),
            });
        }
        Ok(DMatrix::from_row_slice(d, d, m))
    }

    /// Divergence for dimension `d`.
    pub fn bregman_spec(&self, d: usize) -> Result<Arc<BregmanSpec>> {
        let gen = self.generator.as_deref().ok_or_else(|| bad("generator is required"))?;
        let domain = match (&self.domain_low, &self.domain_high) {
            (Some(l), Some(h)) => Domain::Box(AlignedBox::new(Vector::new(l.clone())?, Vector::new(h.clone())?)?),
            (None, None) => Domain::Whole,
            _ => return Err(bad("domain_low and domain_high go together")),
        };
        let generator = match gen {
            "squared-euclidean" => Generator::SquaredMahalanobis(Arc::new(DMatrix::identity(d, d))),
            "squared-mahalanobis" => Generator::SquaredMahalanobis(Arc::new(self.matrix(d)?)),
            "kl" => Generator::GeneralizedKl,
            "itakura-saito" => Generator::ItakuraSaito,
            other => return Err(bad(format!("unknown generator {other:?}"))),
        };
        BregmanSpec::new(generator, domain, d)
    }

    /// One function per point.
    pub fn make_sites(&self, points: &[Vector]) -> Result<Vec<SiteFunction>> {
        let Some(d) = points.first().map(Vector::dim) else {
            return Err(Error::NoSites);
        };
        let weight_of = |i: usize| -> Result<f64> {
            match (&self.weights, self.weight) {
                (Some(ws), _) => ws.get(i).copied().ok_or_else(|| bad(format!("{} weights for {} points", ws.len(), points.len()))),
                (None, Some(w)) => Ok(w),
                (None, None) => Ok(1.0),
            }
        };
        match self.kind.as_str() {
            "minkowski" => {
                let k = self.k.unwrap_or(2.0);
                points
                    .iter()
                    .enumerate()
                    .map(|(i, p)| make_minkowski(p.clone(), k, weight_of(i)?))
                    .collect()
            }
            "mahalanobis" => {
                let m = self.matrix(d)?;
                points.iter().map(|p| make_mahalanobis(p.clone(), m.clone())).collect()
            }
            "bregman" => {
                let spec = self.bregman_spec(d)?;
                points.iter().map(|p| make_bregman(&spec, p.clone())).collect()
            }
            other => Err(bad(format!("unknown kind {other:?}"))),
        }
    }
}
