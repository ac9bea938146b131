//! Simulation and verification harness for a mean-field particle system
//! with critical `n^{3/4}` fluctuations: the particle SDE, its quartic
//! limit diffusion, an equilibrium sampler, the generator calculus relating
//! them, statistical checks and an experiment runner.

pub mod config;
pub mod error;
pub mod exec;
pub mod experiments;
pub mod generator;
pub mod limit;
pub mod model;
pub mod particle;
pub mod report;
pub mod rng;
pub mod sampler;
pub mod special;
pub mod stats;
pub mod verify;

pub use config::{Experiment, ExperimentConfig};
pub use error::{Error, Result};
pub use exec::Execution;
pub use experiments::{run_diagram, run_experiment, Report, RunOutcome};
pub use generator::{
    apply_g_sigma, apply_g_tilde_n, collapsing_inequality_check, martingale_residual, perturbation_terms,
    remainder_sup, sqrtn_ln_psi, CollapsingConstants, Fn2d, GeneratorPoint, Perturbed, Poly2, TestFunction,
};
pub use limit::{simulate_limit, LimitRunConfig, QuarticLaw};
pub use model::{grad_log_density_star, log_density_star, ParticleState, PhiModel, StarDensity};
pub use particle::{simulate_replicas, simulate_system, RescaledPath, SdeRunConfig};
pub use sampler::{sample_equilibrium, sample_equilibrium_chains, ChainDiagnostics, MalaConfig};
pub use stats::{ks_one_sample, ks_two_sample, path_extrema, GofReport};
pub use verify::{verify_generators, VerificationConfig, VerificationReport};
