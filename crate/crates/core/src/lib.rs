//! Reward environment for training code-editing feedback models.
//!
//! Feedback on a wrong program is scored by handing it to an editor model,
//! running the edited program against hidden unit tests in a sandbox, and
//! taking the pass ratio. The crate also covers the surrounding data work:
//! corpus hygiene, test-suite synthesis and audit, preference-pair
//! construction, and an HTTP service exposing the reward.

pub mod cli;
pub mod clients;
pub mod config;
pub mod corpus;
pub mod data;
pub mod gate;
pub mod pairing;
pub mod pipeline;
pub mod reward;
pub mod sandbox;
pub mod service;
pub mod testgen;
