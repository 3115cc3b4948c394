//! Random walks on Z with jumps in `{-1, 1, ..., R}` in a random environment:
//! simulation, the multitype branching structure of the first ladder path,
//! exit and crossing-back probabilities, and the invariant density and drift
//! that follow from them.

pub mod analytics;
pub mod decompose;
pub mod env;
pub mod exitprob;
pub mod layout;
pub mod rng;
pub mod stats;
pub mod walk;

pub use analytics::{
    drift, empirical_velocity, estimate_density_mc, expected_t1, geometric_series_mean_matrix,
    homogeneous_closed_forms, invariant_density, kernel_step, wald_check, AnalyticsError, DriftReport,
    HomogeneousSolution, SeriesOptions, WaldReport,
};
pub use decompose::{
    decompose_general, decompose_r2, empirical_offspring, verify_time_identity, BranchingRecord, DecomposeError,
    OffspringTables,
};
pub use env::{sample_environment, EnvError, Environment, EnvironmentLaw, LawKind, SiteLaw};
pub use exitprob::{
    companion_matrix, crossing_back_probs_general, crossing_back_probs_r2, exit_probs_finite, exit_probs_limit,
    mean_matrix, CrossingBackProbs, ExitDistribution, ExitError, ExitOptions, MeanMatrix, Quenched,
};
pub use layout::{CrossingType, TypeLayout, TYPE_A, TYPE_B, TYPE_C};
pub use stats::{Estimate, MeanVar};
pub use walk::{local_times, simulate_fixed_n, simulate_until_ladder, LocalTimes, WalkError, WalkPath};
