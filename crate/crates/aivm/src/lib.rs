//! Adaptive incremental view maintenance (IVM) for join queries.
//!
//! The library plans and executes the maintenance of a join query under a
//! stream of single-tuple inserts and deletes:
//!
//! * **Planning** ([`query`], [`viewtree`], [`constraints`], [`polymatroid`],
//!   [`planner`]): enumerate view trees, derive degree constraints per
//!   heavy/light configuration of the join variables, bound every delta view
//!   symbolically in the threshold exponent `eps`, and pick the tree per
//!   configuration together with the optimal threshold `eps*`. The optimal
//!   worst-case exponent of the per-update cost is the *maintenance width*.
//! * **Execution** ([`storage`], [`engine`], [`rebalance`], [`enumerate`]):
//!   partition each relation by the heavy/light classification of its join
//!   variable values, materialize one view tree per configuration, propagate
//!   deltas bottom-up on every update, rebalance when values cross the degree
//!   threshold or the database size drifts, and enumerate the output with
//!   constant delay from the owner views of the active trees.
//! * **Validation** ([`oracle`], [`audit`]): naive re-evaluation and an
//!   independent LP solver for differential testing, plus structural
//!   invariant audits used by tests and the `check` command.
//!
//! All planner arithmetic is exact rational; no floating point participates
//! in any width or threshold decision.

pub mod audit;
pub mod constraints;
pub mod engine;
pub mod enumerate;
pub mod oracle;
pub mod piecewise;
pub mod planner;
pub mod polymatroid;
pub mod query;
pub mod rebalance;
pub mod storage;
pub mod viewtree;

/// Exact rational scalar used throughout the planner.
pub type Rat = num::BigRational;

/// Convenience constructor for a rational from an integer pair.
pub fn rat(num: i64, den: i64) -> Rat {
    Rat::new(num.into(), den.into())
}
