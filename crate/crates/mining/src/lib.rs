//! Requirement mining: search the kernel-embedding space for a formula that
//! separates two classes of trajectories, using a Gaussian-process surrogate
//! with an upper-confidence-bound acquisition and the trained decoder to
//! turn candidate embeddings into formulae.

pub mod error;
pub mod gp;
pub mod mine;
pub mod objective;
pub mod problems;
pub mod ucb;

pub use error::{MiningError, Result};
pub use gp::{gp_fit, GPConfig, GPPosterior};
pub use mine::{mine, MiningConfig, MiningResult, TraceRecord, INVALID_PENALTY};
pub use objective::{classification_report, objective_g, ClassificationReport, G_EPS};
pub use problems::{synthetic_problem, MiningProblem, ProblemKind, SyntheticConfig};
pub use ucb::{ucb_maximize, Candidate, UCBConfig};
