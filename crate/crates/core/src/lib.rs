//! Verified math word problem generation via symbolic program mutation.
//!
//! The crate builds problems as small symbolic programs (exact-rational
//! constants, unknowns with domains, constraints, one answer expression),
//! solves them mechanically for ground truth, mutates them under a weighted
//! operator policy, renders them to natural language from themed templates,
//! and closes the loop against a student model: batches are generated,
//! graded, and the policy is updated until the student's pass rate drops
//! below a target. Every external service (generator, judge, student,
//! embeddings) sits behind a client interface with a deterministic offline
//! substitute, so the whole system runs and tests without network access.

pub mod clients;
pub mod dsl;
pub mod expr;
pub mod fixtures;
pub mod mutate;
pub mod optim;
pub mod pipeline;
pub mod rational;
pub mod render;
pub mod rng;
pub mod smt;
pub mod solver;

pub use expr::{Env, EvalError, Expr};
pub use rational::Rational;
