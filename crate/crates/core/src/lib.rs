//! A four-stage small-model council: role-specialized generation, anonymized
//! cross-review with Borda aggregation, chairman synthesis and
//! agreement-based claim labelling, with the baselines, cost accounting and
//! statistics needed to evaluate it.
//!
//! Everything runs against a [`gateway::ChatBackend`]: the live
//! [`gateway::HttpBackend`] or the scripted [`gateway::MockBackend`], which
//! makes whole runs reproducible byte for byte.

pub mod accounting;
pub mod council;
pub mod evalharness;
pub mod gateway;
pub mod schemas;
pub mod synthetic;
pub mod verifier;

pub use accounting::{CallTrace, PricingModel, QueryUsage, Stage};
pub use council::{run_council, CouncilConfig, CouncilResult, StageToggles, SystemOutput};
pub use evalharness::{BenchmarkSet, MethodResult, MethodSpec, StatReport};
pub use gateway::{EndpointConfig, Gateway, MockBackend};
pub use schemas::{CandidateAnswer, Letter, Question, QuestionKind, RoleId};
pub use verifier::{ClaimTag, ClaimVerdict, VerificationReport};
