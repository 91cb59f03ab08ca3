//! Temporal grounding of basketball broadcast footage.
//!
//! Per-frame scoreboard readings (time remaining and period) are gated,
//! parsed against the scoreboard grammar, cleaned of temporally
//! inconsistent values and interpolated into a per-frame clock timeline.
//! Play-by-play events are then bound to frames of that timeline.
//!
//! Stages, in pipeline order:
//!
//! 1. [`pipeline`]: frame stepping, backend access and worker fan-out.
//! 2. [`gate`]: confidence gating and static-ROI consensus.
//! 3. [`parser`]: grammar-constrained parsing of clock and period text.
//! 4. [`denoise`]: outlier rejection, interpolation, period vote.
//! 5. [`align`]: event grounding and clip windows.

pub mod align;
pub mod bench;
pub mod cli;
pub mod denoise;
pub mod gate;
pub mod model;
pub mod parser;
pub mod pipeline;
pub mod wire;

pub use align::{align_corpus, ground_event, AlignedEvent, AlignmentReport, PlayByPlayEvent};
pub use denoise::{ground_series, select_consistent_subset, RawSeries, TimestampSeries};
pub use model::{ClockTime, Fps, PipelineConfig, QuarterLabel, VideoMeta};
pub use pipeline::{run_extraction, BackendDescriptor, ExtractionResult};
