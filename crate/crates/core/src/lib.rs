//! Incremental, containerized builds of LaTeX documents whose results come
//! from a program run in a container, with byte-level reproducibility checks
//! of the produced PDF.

pub mod artifacts;
pub mod depgraph;
pub mod executor;
pub mod latexbuild;
pub mod manifest;
pub mod pipeline;
pub mod reprocheck;
pub mod scaffold;

pub use depgraph::{
    BuildGraph, BuildPlan, ContentDigest, NodeId, NodeKind, StaleReason, Staleness, StepKind,
};
pub use executor::{Executor, FakeExecutor, LocalExecutor};
pub use manifest::{discover, BuildMode, ProjectManifest};
pub use pipeline::{
    build, clean, graph_dot, status, verify_reproducibility, Backend, BuildOptions, BuildOutcome,
    Error,
};
pub use reprocheck::{DiffClass, ReproReport};
