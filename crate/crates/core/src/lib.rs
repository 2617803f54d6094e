//! Progressive retrieval of scientific data with guaranteed error control on
//! derivable quantities of interest.

// `!(x > 0.0)` style checks are deliberate: NaN must take the rejecting branch.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bitplane;
pub mod codec;
pub mod error;
pub mod harness;
pub mod qoi;
pub mod retrieve;
pub mod snapshot;

pub use codec::{
    build_mask, constant_mask, refactor_variable, CodecConfig, CodecKind, Manifest, OutlierMask,
    RetrievalState, Segment, SegmentStore, VariableData,
};
pub use error::{Error, Result};
pub use qoi::{parse_qoi, ErrorBound, ParseError, PointContext, QoiExpr};
pub use retrieve::{
    retrieve, QoiRequest, RetrievalReport, RetrieveOptions, Session, ToleranceMode,
};
