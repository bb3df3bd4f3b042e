//! Multi-armed bandits whose rewards are modulated by a hidden Markov regime.
//!
//! The crate provides, end to end:
//!
//! - the generative model and a paired-randomness simulator ([`model`],
//!   [`sim`]);
//! - the Bayesian forward filter on the belief simplex, with its robustness
//!   and forgetting constants ([`belief`]);
//! - a method-of-moments estimator that recovers the transition matrix and
//!   the per-state mean rewards from uniform-exploration data, together with
//!   confidence radii ([`spectral`], [`tensor`]);
//! - an average-reward planner on a discretized belief simplex, the bias-span
//!   bound, and an optimistic search over a confidence region ([`planner`]);
//! - the episodic explore/exploit learning agent built from those pieces
//!   ([`seeu`]), reference baselines ([`baselines`]), and a benchmark harness
//!   that reproduces the regret-slope separation between them ([`bench`]).
//!
//! The accompanying guide in `book/` walks through each component with the
//! same two-state, two-arm running example as [`model::example_2x2`].
//!
//! ```
//! use regime_bandits::model::{example_2x2, Belief};
//! use regime_bandits::belief::{belief_update, expected_reward};
//!
//! let model = example_2x2();
//! let b = Belief::uniform(2);
//! // Pulling arm 0 under a 50/50 belief pays 0.5 * 0.9 + 0.5 * 0.5.
//! assert!((expected_reward(&model, &b, 0) - 0.7).abs() < 1e-12);
//! let next = belief_update(&model, &b, 0, 1).unwrap();
//! assert!((next.components()[0] - 27.0 / 56.0).abs() < 1e-12);
//! ```

pub mod baselines;
pub mod belief;
pub mod bench;
pub mod error;
pub mod io;
pub mod linalg;
pub mod model;
pub mod planner;
pub mod rng;
pub mod seeu;
pub mod sim;
pub mod spectral;
pub mod tensor;

pub use error::{BeliefError, HarnessError, ModelError, PlannerError, SpectralError};
