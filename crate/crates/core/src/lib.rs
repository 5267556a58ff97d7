// Negated float comparisons are used on purpose so NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
// Tape ops return `Result`, so they cannot implement the operator traits.
#![allow(clippy::should_implement_trait)]

pub mod cluster;
pub mod degree;
pub mod graph;
pub mod harness;
pub mod metrics;
pub mod model;
pub mod objectives;
pub mod tensor;
