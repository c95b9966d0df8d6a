//! Ribaucour transforms of Legendre submanifolds in Lie sphere geometry.
//!
//! A Legendre frame `(f, ξ)` and one scalar field `τ` determine an enveloped
//! sphere congruence, a second Legendre frame `(f̂, ξ̂)` enveloping it, and a
//! 1-form `α_τ` whose closedness decides whether the pair is Ribaucour. All
//! derivatives are carried exactly by second-order jets ([`jet::Jet2`]).

// `!(x <= tol)` style gates are deliberate: NaN must fail them.
// Index loops mirror the component formulas.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod chart;
pub mod config;
pub mod demoulin;
pub mod error;
pub mod export;
pub mod expr;
pub mod jet;
pub mod jet_matrix;
pub mod lie;
pub mod oracle;
pub mod grid;
pub mod sweep;
pub mod transform;

pub use chart::{Chart, ChartSpec, Domain};
pub use config::Tolerances;
pub use error::{Error, Result};
pub use expr::{parse_tau, Expr};
pub use jet::Jet2;
pub use lie::{LegendreFrame, LieJet, LieVector};
pub use transform::{transform, TransformResult};
