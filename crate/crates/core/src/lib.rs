//! Large-deviation toolkit for the strongly damped Langevin equation.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod action;
pub mod error;
pub mod exit;
pub mod expr;
pub mod fields;
pub mod front;
pub mod ldpcheck;
pub mod noise;
pub mod optimize;
pub mod output;
pub mod quasipotential;
pub mod sde;
pub mod stats;
pub mod suite;

pub use error::{Error, Result};
pub use expr::{parse_expression, ScalarExpr};
pub use fields::{presets, validate_hypotheses, ProblemDefinition, ProblemFile};
