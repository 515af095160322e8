//! Timestamped multi-rate stream transport.
//!
//! Every source stamps its samples on one session-monotonic microsecond clock.
//! The [`Merger`] keeps one [`RingBuffer`] per continuous stream and cuts
//! overlapping [`AlignedWindow`]s (5 s long, hopped every second) that hold the
//! EEG and eye samples falling in the same `[start, end)` interval.
//!
//! Samples are binned by timestamp, never by arrival order, so cross-stream
//! delivery jitter does not move window boundaries.

mod descriptor;
mod merger;
mod record;
mod ring;

pub use descriptor::{eye_channel, StreamDescriptor, StreamKind, EYE_CHANNEL_LABELS};
pub use merger::{
    AlignedWindow, Merger, MergerConfig, ProbeResponse, StreamHandle, StreamStats, WindowPoll,
};
pub use record::{read_record_line, write_record_line, RecordError, RecordLine, RecordReader};
pub use ring::RingBuffer;

use smallvec::SmallVec;

/// Microseconds on the shared session clock.
pub type Micros = i64;

pub const US_PER_SEC: Micros = 1_000_000;
/// Window length.
pub const WINDOW_US: Micros = 5 * US_PER_SEC;
/// Distance between consecutive window ends.
pub const HOP_US: Micros = US_PER_SEC;
/// A continuous stream that falls this far behind the others is reported as stalled.
pub const STALL_US: Micros = US_PER_SEC;

/// How much eye history precedes each window.
pub const EYE_LEAD_IN_US: Micros = 400_000;

pub type SampleValues = SmallVec<[f64; 6]>;

/// One multi-channel reading on a named stream.
#[derive(Debug, Clone, PartialEq)]
pub struct TimestampedSample {
    pub ts_us: Micros,
    pub values: SampleValues,
}

impl TimestampedSample {
    pub fn new(ts_us: Micros, values: impl IntoIterator<Item = f64>) -> Self {
        Self {
            ts_us,
            values: values.into_iter().collect(),
        }
    }

    pub fn scalar(ts_us: Micros, value: f64) -> Self {
        let mut values = SampleValues::new();
        values.push(value);
        Self { ts_us, values }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum StreamError {
    #[error("stream `{0}` is already open")]
    DuplicateStream(String),
    #[error("a {0:?} stream is already open")]
    DuplicateKind(StreamKind),
    #[error("descriptor mismatch: {0}")]
    DescriptorMismatch(String),
    #[error("unknown stream handle")]
    UnknownHandle,
    #[error("out-of-order sample on `{stream}`: {ts_us} <= last {last_us}")]
    OutOfOrderSample {
        stream: String,
        ts_us: Micros,
        last_us: Micros,
    },
    #[error("malformed sample on `{stream}`: {reason}")]
    MalformedSample { stream: String, reason: String },
    #[error("stream `{stream}` stalled at window ending {window_end_us}")]
    StreamStalled {
        stream: String,
        window_end_us: Micros,
    },
}
