//! Isoform-level abundance estimation from RNA-Seq read positions.
//!
//! Reads are modelled as independent Poisson counts per read type,
//! `n_j ~ Po(θ·a_j)`, where `a_{i,j}` is the rate at which isoform `i`
//! produces read type `j`. The crate covers:
//!
//! - gene models, read types and read enumeration ([`model`]);
//! - uniform and insert-length sampling rates ([`rates`]);
//! - maximal collapsing of read types into sufficient categories ([`collapse`]);
//! - the constrained maximum-likelihood solver ([`mle`]);
//! - Fisher information, design comparisons and posterior intervals ([`inference`]);
//! - read simulation and the relative-error harness ([`simulate`]);
//! - file formats ([`io`]).

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod collapse;
pub mod error;
pub mod inference;
pub mod io;
pub mod mle;
pub mod model;
pub mod rates;
pub mod simulate;

pub use collapse::{maximal_collapse, maximal_collapse_observed, CategorySet};
pub use error::{Error, Result};
pub use mle::{solve_mle, Method, SolverOptions, ThetaEstimate};
pub use model::{enumerate_read_types, CountsVector, GeneModel, Protocol, ReadType};
pub use rates::{InsertLengthDist, Rate, RateMatrix, RateModel};
