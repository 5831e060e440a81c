//! Distributed binary hypothesis testing over regular tree networks under
//! Byzantine data falsification.
//!
//! The analytic modules are generic over the scalar type: channel algebra
//! over [`Scalar`] (including exact rationals), divergence and identification
//! analytics over [`Real`]. The aliases below fix the common choices.

pub mod attack;
pub mod divergence;
pub mod error;
pub mod fusion;
pub mod identification;
pub mod mc;
pub mod normal;
pub mod scalar;
pub mod stackelberg;
pub mod topology;

pub use attack::{
    beta_aggregates, channels, is_blinding, level_channel, min_byzantines_to_blind, FlipPair, FlipStrategy,
    LevelChannel, OperatingPoint,
};
pub use divergence::{
    best_split_test_at_false_alarm, bernoulli_kld, fusion_weights, gaussian_roc_point, grid_min_kld, kld_partial_wrt_separation,
    kld_surface, kld_vs_coverage, level_kld, min_level_kld, min_total_kld, optimal_attack_strategy, roc_sweep, total_kld,
    total_kld_from_fractions, GaussianSensorModel, KldReport, SurfacePoint,
};
pub use error::{Error, Result};
pub use fusion::{
    calibrate_threshold, regression_slope, replicate_placement, replication_slope, run_fusion_experiment, run_model_experiment,
    run_trial, FusionModel, FusionReport, ReplicationReport, TrialRecord,
};
pub use identification::{
    asymptotic_lower_bound, binomial_head, binomial_tail, compute_threshold, honest_isolation_exact, in_normal_regime,
    isolation_analytics, p_diff_byzantine, p_diff_honest, p_iso_exact, p_iso_normal, p_iso_recursive, p_iso_shared_anchor, simulate_identification,
    thresholds, HypothesisMode, IdentificationParams, IsolationReport,
};
pub use mc::Proportion;
pub use normal::{q_function, q_inverse};
pub use scalar::{Real, Scalar};
pub use stackelberg::{
    attack_cost, attacker_profit, bilevel_bruteforce, check_cost_structure, dominance, game_payoff, llp_bruteforce, llp_greedy,
    payoff_table, solve_bilevel, Budgets, CostModel, Dominance, GameOutcome, GameSolution, PayoffRow,
    DEFAULT_ENUMERATION_LIMIT,
};
pub use topology::{coverage_fraction, corrupted_path_count, sample_placement, AttackConfig, AttackPlacement, TreeTopology};

/// Exact rational used for coverage fractions and blinding checks.
pub type Rational = num_rational::Rational64;

pub type Point = OperatingPoint<f64>;
pub type ExactPoint = OperatingPoint<Rational>;
pub type Strategy = FlipStrategy<f64>;
pub type ExactStrategy = FlipStrategy<Rational>;
pub type Channel = LevelChannel<f64>;
pub type ExactChannel = LevelChannel<Rational>;
