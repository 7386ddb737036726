//! Learn Perron–Frobenius operators from snapshot data and synthesize
//! navigation controllers that keep the collision probability below a bound.
//!
//! The pipeline runs in five stages:
//!
//! 1. [`dynamics`] generates snapshot pairs `(x, s_dt(x))` from a vector field.
//! 2. [`operator`] fits a Markov matrix on a Gaussian RBF dictionary ([`basis`]) and
//!    turns it into a generator.
//! 3. [`synthesis`] solves the density feasibility LP with the in-repo interior point
//!    solver in [`lp`].
//! 4. [`controller`] turns the density pair `(v, w)` into the feedback `k(x) = Ψᵀw / Ψᵀv`,
//!    with an LQR handoff near the target.
//! 5. [`safety`] estimates the collision probability by Monte Carlo.
//!
//! [`config`] and [`pipeline`] wire everything to a TOML experiment file. The
//! `pfnav` binary exposes the stages as subcommands.

// `!(x > 0.0)` also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod basis;
pub mod config;
pub mod controller;
pub mod dynamics;
pub mod lp;
pub mod matio;
pub mod operator;
pub mod pipeline;
pub mod region;
pub mod safety;
pub mod synthesis;

mod numfmt;

pub use basis::RbfBasis;
pub use dynamics::{BoxDomain, SnapshotSet, Trajectory, VectorField};
pub use region::Region;

use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("integration produced a non-finite value at state {state:?}")]
    Integration { state: Vec<f64> },
    #[error("no valid snapshot pairs")]
    NoSnapshots,
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid argument: {0}")]
    Invalid(String),
    #[error("rank deficient design matrix (rank {rank} < {n}); use ridge > 0")]
    RankDeficient { rank: usize, n: usize },
    #[error("region has zero volume")]
    ZeroVolume,
    #[error("matrix is not positive definite even after jitter {jitter:e}")]
    NotPositiveDefinite { jitter: f64 },
    #[error("LP did not converge after {iterations} iterations (primal {primal:e}, dual {dual:e}, gap {gap:e})")]
    LpNotConverged {
        iterations: usize,
        primal: f64,
        dual: f64,
        gap: f64,
    },
    #[error("unstabilizable pair (numerically)")]
    Unstabilizable,
    #[error("expression `{expr}`: {msg}")]
    Expression { expr: String, msg: String },
    #[error("config: {path}: {msg}")]
    Config { path: String, msg: String },
    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
    #[error("{path}: {msg}")]
    Format { path: PathBuf, msg: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn stage(stage: &'static str) -> impl FnOnce(Error) -> Error {
        move |e| Error::Stage {
            stage,
            source: Box::new(e),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
