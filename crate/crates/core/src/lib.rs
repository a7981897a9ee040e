pub mod annotate;
pub mod blocks;
pub mod coverage;
pub mod error;
pub mod gen;
pub mod lang;
pub mod logic;
pub mod pipeline;
pub mod prove;
pub mod status;
pub mod vcgen;

pub use error::{Error, Result};
pub use annotate::{AnnotatedProgram, Criterion, Label};
pub use blocks::{CoReachedGroup, PairCounts};
pub use coverage::{CoverageReport, CoverageVector, LikelyMarks, OracleVerdict};
pub use lang::ast::{LabelId, LocationId, Program};
pub use lang::interp::TestDatum;
pub use lang::value::Value;
pub use pipeline::{PipelineConfig, Report, RunOutcome};
pub use prove::{ProofResult, ProverConfig, SolverBackend, Verdict};
pub use status::{LabelStatus, Status, StatusMap};
pub use vcgen::{Assertion, Purpose, VerificationCondition};
