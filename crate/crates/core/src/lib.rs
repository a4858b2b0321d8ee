//! DMACOS: deliberation multi-task code summarization.
//!
//! Three coupled tasks over method bodies flattened with an
//! AST-structure-preserving traversal (aSBT):
//!
//! - method name generation (MNG), the first decoding pass;
//! - method name informativeness prediction (MNIP), a regression that
//!   scores how much of a name reappears in the summary;
//! - code summarization (COS), the second pass, which attends over the
//!   body, the human-written name, and the generated name, fuses the two
//!   name contexts with MNIP-derived weights, and can copy tokens from
//!   all three sources.
//!
//! The crate is self-contained: it ships its own reverse-mode tensor
//! engine ([`autodiff`]), corpus pipeline ([`ast`], [`corpus`]), model
//! ([`model`]), trainer ([`training`]), and metric suite ([`eval`]).

pub mod ast;
pub mod autodiff;
pub mod corpus;
pub mod error;
pub mod eval;
pub mod model;
pub mod rng;
pub mod training;

pub use error::{CoreError, Result};
