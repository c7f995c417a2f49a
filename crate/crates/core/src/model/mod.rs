//! The DADL document model: parsing, validation, effective tool resolution,
//! static HTTP closure and coverage summaries.

mod closure;
mod coverage;
pub mod duration;
pub mod fixtures;
mod parse;
mod resolve;
mod schema;
mod types;
mod validate;

pub use closure::{
    composite_references, path_placeholders, static_closure, ClosureViolation, EndpointEntry,
    EndpointSurface,
};
pub use coverage::{coverage_report, CoverageReport, CoverageSummary, CoverageTotals};
pub use parse::{parse_document, serialize_document, ParseError};
pub use resolve::{effective_tool, ResolveError, ResolvedParam, ResolvedTool, DEFAULT_TOOL_TIMEOUT};
pub use schema::document_schema;
pub use types::*;
pub use validate::{is_valid_name, validate, Finding, ValidationReport};
