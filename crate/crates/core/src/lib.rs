//! Coverage-guided fuzzing with a semantic novelty signal.

pub mod campaign;
pub mod executor;
pub mod hash;
pub mod mutation;
pub mod provider;
pub mod scheduler;
pub mod semantic;
pub mod signals;
pub mod sync;
pub mod target_model;
pub mod testbed;
