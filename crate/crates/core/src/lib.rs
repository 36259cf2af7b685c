//! Approximate nearest neighbor search under scaling distances and Bregman
//! divergences.
//!
//! An index partitions space with an approximate Voronoi diagram whose leaves
//! separate the sites into at most one site inside the cell, an outer cluster
//! far away relative to the cell and an inner cluster that looks like a single
//! point from the cell. Outer clusters are answered by sampling the lower
//! envelope of the normalized, convexified distance functions; inner clusters
//! collapse to a common site.
//!
//! ```
//! use eann_core::prelude::*;
//!
//! let sites: Vec<SiteFunction> = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]
//!     .iter()
//!     .map(|p| make_minkowski(Vector::new(p.to_vec()).unwrap(), 2.0, 1.0).unwrap())
//!     .collect();
//! let index = AnnIndex::build(sites, 0.25).unwrap();
//! let (witness, value) = index.query(&[0.9, 0.2]).unwrap();
//! assert_eq!(witness, 1);
//! assert!(value < 0.3);
//! ```

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod admissibility;
pub mod ann;
pub mod avd;
pub mod config;
pub mod convexify;
pub mod distances;
pub mod envelope;
pub mod error;
pub mod geom;
pub mod instances;
pub mod par;
pub mod pointfile;

pub use error::{Error, Result};

pub mod prelude {
    pub use crate::ann::{brute_force, AnnIndex};
    pub use crate::distances::{
        make_bregman, make_mahalanobis, make_minkowski, BregmanSpec, FamilyKind, SiteFunction,
    };
    pub use crate::error::{Error, Result};
    pub use crate::geom::{AlignedBox, EuclideanBall, Vector};
    pub use crate::par::Execution;
}
