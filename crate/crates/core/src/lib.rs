//! Desk-scale workbench for O-RAN slice resource management.
//!
//! The crate covers the whole loop: per-slice traffic synthesis and replay
//! ([`traffic`]), a queueing gNB that reports KPIs every 250 ms ([`env`]),
//! per-slice performance scores ([`scoring`]), the PRB-allocation MDP
//! ([`mdp`]), offline tabular and deep Q-learning ([`agents`]), Bellman-error
//! policy selection and trial statistics ([`selection`]), the
//! train-test-improve loop ([`pipeline`]) and the KPI-window CNN traffic
//! classifier ([`classifier`]).

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod agents;
pub mod classifier;
pub mod config;
pub mod env;
pub mod error;
pub mod mdp;
pub mod nn;
pub mod pipeline;
pub mod report;
pub mod scoring;
pub mod seed;
pub mod selection;
pub mod slice;
pub mod traffic;

pub use config::Config;
pub use error::{Error, Result};
pub use mdp::{Action, RbAllocation, State, Transition, UserTuple};
pub use slice::Slice;
