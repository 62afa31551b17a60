//! Signal Temporal Logic toolkit: formula syntax, discrete-time robustness
//! semantics, Monte Carlo kernel embeddings over an anchor set, and the
//! dataset builders that pair formulae with their embeddings.

pub mod binio;
pub mod dataset;
pub mod error;
pub mod formula;
pub mod kernel;
pub mod metrics;
pub mod robustness;
pub mod sampler;
pub mod store;
pub mod syntax;
pub mod trajectory;
pub mod vocab;

pub use error::{Error, Result};
pub use formula::{Atom, Comparison, Formula, Interval, StructureStats};
pub use kernel::{AnchorSet, Embedding, KernelConfig, Squash};
pub use robustness::{robustness, robustness_vector, satisfaction, RobustnessVector};
pub use sampler::{sample_formula, SamplerConfig};
pub use syntax::{parse, print, SyntaxError};
pub use trajectory::{sample_trajectories, BaseMeasureConfig, Trajectory, TrajectoryBatch};
pub use vocab::{TokenSequence, Vocabulary};
