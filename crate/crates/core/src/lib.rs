// NaN-rejecting checks are written as negated comparisons on purpose.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod dynamics;
pub mod geometry;
pub mod mpc;
pub mod search;
pub mod semantics;
pub mod sim;
