//! Simultaneous Lipschitz extension operators on finite metric spaces.
//!
//! The crate builds a linear extension operator `E: Lip(S) -> Lip(M)` from a
//! Whitney-type partition of unity and a family of doubling measures
//! `{mu_m}`, computes its exact operator norm through Kantorovich-Rubinstein
//! transport, and certifies the quantitative lemmas that bound it.
//!
//! Module map:
//! - [`metric`], [`generators`]: finite metric spaces and test corpora
//! - [`nets`]: maximal separated nets and cover orders
//! - [`measures`], [`product`]: measure families, their constants, tensor products
//! - [`lift`]: the lifted space `M x l1^n` and its radial ball-mass profiles
//! - [`whitney`]: the cover, partition of unity and pre-extension matrix
//! - [`extension`]: the averaged extension operator, norms and bound reports
//! - [`free_space`]: transport (free-space) norms and their LP dual
//! - [`io`], [`corpus`]: file formats and corpus sweeps

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod corpus;
pub mod error;
pub mod extension;
pub mod free_space;
pub mod generators;
pub mod io;
pub mod lift;
pub mod measures;
pub mod metric;
pub mod nets;
pub mod product;
pub mod whitney;

pub use error::{Error, Result};
pub use metric::{Exponent, FiniteMetricSpace, PointId};
