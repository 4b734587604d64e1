//! Non-counterfactual post-hoc baselines: Monte-Carlo Shapley values and
//! greedy anchor rules.

mod anchors;
mod shapley;

pub use anchors::{anchor_rule, AnchorCondition, AnchorPredicate, AnchorRule};
pub use shapley::{shapley_estimate, Attribution};
