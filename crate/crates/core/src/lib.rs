//! Core library for experiments whose treatments are administered by
//! self-interested agents.
//!
//! An experiment of this kind induces a game: each agent picks a hidden
//! version of its treatment, units are randomized to agents, outcomes are
//! observed, and a score function declares a winner. The library models the
//! parametric outcome families of that game, evaluates exact-asymptotic and
//! Monte Carlo winning probabilities, certifies (or refutes) that playing
//! one's best treatment version is a dominant strategy over a finite action
//! grid, builds variance-stabilizing score transforms, and compares the
//! power of competing designs — including a spillover-robust split design
//! for settings where one agent's campaign leaks into another's test units.
//!
//! Modules map onto the moving parts of a design:
//!
//! * [`outcome_models`] — parametric outcome families, performance, sampling
//! * [`scoring`] — statistics, score transforms and the winner rule
//! * [`asymptotics`] — closed-form win probabilities, delta-method
//!   covariances, incentive-compatibility certification, stabilizers
//! * [`interference`] — the linear algebra of the four-cell spillover design
//! * [`simulator`] — reproducible Monte Carlo engine for the full game
//!
//! Supporting numerics live in [`stats`], [`linalg`], [`quadrature`] and
//! [`rng`].

// negated float comparisons are deliberate throughout: `!(x > 0.0)`
// rejects NaN where `x <= 0.0` would accept it
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod asymptotics;
pub mod interference;
pub mod linalg;
pub mod outcome_models;
pub mod quadrature;
pub mod rng;
pub mod scoring;
pub mod simulator;
pub mod stats;

pub use asymptotics::{
    analytic_best_response, analytic_win_prob, build_stabilizer, check_ic_sufficiency,
    check_ic_via_statistic, delta_covariance, identifying_covariance, pairwise_variance,
    power_compare, score_law, AsymptoticScoreLaw, AsymptoticsError, CertMethod, Design,
    ICCertificate, ICVerdict, PowerMethod, PowerReport, StabilizedTransform, StabilizerSpec,
    SufficiencyReport, Witness,
};
pub use interference::{build_algebra, InterferenceAlgebra, InterferenceError};
pub use outcome_models::{
    performance, sample_assignment, sample_outcomes, Action, ActionProfile, ActionSpace,
    Assignment, Family, ModelError, ObservedOutcomes, OutcomeModel,
};
pub use scoring::{
    apply_transform, compute_statistic, declare_winner, MonotoneTable, ScoreError, ScoreFunction,
    Statistic, Transform,
};
pub use simulator::{
    estimate_win_prob, mc_best_response, run_game_once, run_transform_study, Aggregation,
    BestResponseOptions, GameOutcome, MCEstimate, Scenario, SimError, TransformStudyCell,
};
