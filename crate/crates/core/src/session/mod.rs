//! Session orchestration: the event log, the archive format, replay, the
//! feed protocol and the engagement metrics computed from the log.

mod archive;
mod engine;
mod events;
mod metrics;
pub mod wire;

pub use archive::{Archive, ArchiveError, ArchiveHeader, ArchiveItem, ArchiveWriter, ARCHIVE_VERSION};
pub use engine::{replay, ReplayReport, Session, SessionConfig, SessionError, SessionSource, Verdict};
pub use events::{Event, EventKind, EventLog, SessionMode, WindowSummary};
pub use metrics::{compute_metrics, is_clarification, EngagementMetrics, CLARIFICATION_CUES};
pub use wire::{ClientMessage, ServerMessage, WIRE_VERSION};
