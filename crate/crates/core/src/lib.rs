//! Guided embedding refinement for sequential recommendation.

pub mod aspects;
pub mod corpus;
pub mod guided;
pub mod harness;
pub mod metrics;
pub mod scorer;
pub mod seqrec;
