//! Multi-task actor-critic with dynamic task weighting on tabular MDPs.
//!
//! The crate pairs the learning algorithm with exact dynamic-programming
//! oracles. Projected TD(0) critics feed a task-weight update, which is
//! either conflict-avoidant (many steps) or fast (one averaged step), and
//! the weighted gradient drives a softmax actor. On small problems every
//! quantity the convergence theory talks about can be measured exactly.
//!
//! - [`mdp`]: multi-task MDPs with features and environment sampling
//! - [`policy`]: softmax-linear policy and its score function
//! - [`critic`]: TD(0) with ball projection
//! - [`direction`]: simplex geometry and the CA / FC weight updates
//! - [`driver`]: the outer actor-critic loop and theory constants
//! - [`oracle`]: exact Q, visitation, gradients, TD fixed points, min-norm weights
//! - [`experiment`]: config files and batch runs with their on-disk outputs

// `!(x > 0.0)` is used on purpose throughout: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod critic;
pub mod direction;
pub mod driver;
pub mod error;
pub mod experiment;
pub mod mdp;
pub mod oracle;
pub mod policy;

pub use error::{Error, Result};
