//! View-adaptive dynamic reachability labels for fine-grained workflow
//! provenance.
//!
//! A workflow grammar is analyzed once ([`analysis::Schema`]). Runs are
//! derived step by step ([`run::RunState`]) and every data item receives an
//! immutable label at creation ([`label`]). A view is labeled separately
//! ([`view_label::ViewLabel`]); [`decode::decode`] then answers whether one
//! item depends on another under that view from the two data labels and the
//! view label alone. [`oracle`] is an independent brute-force reference and
//! [`synth`] generates grammars, runs and views for testing and benchmarks.

pub mod analysis;
pub mod decode;
pub mod error;
pub mod format;
pub mod label;
pub mod matrix;
pub mod model;
pub mod oracle;
pub mod run;
pub mod synth;
pub mod view_label;

pub use analysis::{EdgeId, RecursionClass, Schema};
pub use decode::{decode, QueryVerdict};
pub use error::{AnalysisError, CodecError, DecodeError, ModelError, RunError};
pub use label::{DataLabel, EdgeLabel, PortLabel};
pub use matrix::DependencyMatrix;
pub use model::{DependencyAssignment, View, WorkflowGrammar};
pub use run::{NodeId, RunState};
pub use view_label::{Variant, ViewLabel};
