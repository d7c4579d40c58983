//! Batch LLM grading pipeline.
//!
//! The crate is organized around the flow of an assignment through the
//! system:
//!
//! - [`model`] — domain types (questions, schemes, submissions, records,
//!   survey responses) and pure validation/splitting logic
//! - [`io`] — on-disk formats: assignment and submission files, append-safe
//!   grade-record logs, survey CSVs
//! - [`prompt`] — deterministic construction of the three prompt kinds
//!   (scheme refinement, submission evaluation, issue summarization)
//! - [`llm`] — provider-agnostic chat transport with retries, a concurrency
//!   gate, and a deterministic offline mock
//! - [`engine`] — orchestration: refine schemes, grade a corpus, parse and
//!   validate model replies into records
//! - [`report`] — student feedback documents and the teacher performance
//!   summary
//! - [`stats`] — the agreement and survey statistics kernel

pub mod engine;
pub mod io;
pub mod llm;
pub mod model;
pub mod prompt;
pub mod report;
pub mod stats;
