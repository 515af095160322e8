use serde::{Deserialize, Serialize};

use super::{Micros, StreamError, US_PER_SEC};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum StreamKind {
    Eeg,
    Eye,
    Marker,
    Probe,
}

impl StreamKind {
    /// Continuous streams have a nominal rate and take part in windowing.
    pub fn is_continuous(self) -> bool {
        matches!(self, StreamKind::Eeg | StreamKind::Eye)
    }
}

/// Channel layout of an eye-tracker sample.
pub mod eye_channel {
    pub const GAZE_X: usize = 0;
    pub const GAZE_Y: usize = 1;
    pub const PUPIL_LEFT: usize = 2;
    pub const PUPIL_RIGHT: usize = 3;
    pub const VALIDITY: usize = 4;
    pub const BLINK: usize = 5;
}

pub const EYE_CHANNEL_LABELS: [&str; 6] = [
    "gaze_x_norm",
    "gaze_y_norm",
    "pupil_left_mm",
    "pupil_right_mm",
    "validity_flag",
    "blink_flag",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamDescriptor {
    pub name: String,
    pub kind: StreamKind,
    /// Samples per second; 0 for irregular (marker/probe) streams.
    pub nominal_rate: f64,
    pub channel_count: usize,
    pub channel_labels: Vec<String>,
}

impl StreamDescriptor {
    pub fn new(
        name: impl Into<String>,
        kind: StreamKind,
        nominal_rate: f64,
        channel_labels: impl IntoIterator<Item = impl Into<String>>,
    ) -> Self {
        let channel_labels: Vec<String> = channel_labels.into_iter().map(Into::into).collect();
        Self {
            name: name.into(),
            kind,
            nominal_rate,
            channel_count: channel_labels.len(),
            channel_labels,
        }
    }

    /// Single-channel 250 Hz headset.
    pub fn eeg(name: impl Into<String>) -> Self {
        Self::new(name, StreamKind::Eeg, 250.0, ["Fp1"])
    }

    /// 60 Hz binocular eye tracker.
    pub fn eye(name: impl Into<String>) -> Self {
        Self::new(name, StreamKind::Eye, 60.0, EYE_CHANNEL_LABELS)
    }

    /// Task-block markers: one value, the state code of the block starting
    /// at that timestamp or -1 for an unlabeled (rest) period.
    pub fn marker(name: impl Into<String>) -> Self {
        Self::new(name, StreamKind::Marker, 0.0, ["block_state"])
    }

    /// Thought-probe responses: one value, the 1-5 rating.
    pub fn probe(name: impl Into<String>) -> Self {
        Self::new(name, StreamKind::Probe, 0.0, ["rating"])
    }

    pub fn validate(&self) -> Result<(), StreamError> {
        if self.name.is_empty() {
            return Err(StreamError::DescriptorMismatch("empty stream name".into()));
        }
        if self.channel_count == 0 {
            return Err(StreamError::DescriptorMismatch(format!(
                "`{}` has no channels",
                self.name
            )));
        }
        if self.channel_labels.len() != self.channel_count {
            return Err(StreamError::DescriptorMismatch(format!(
                "`{}` declares {} channels but {} labels",
                self.name,
                self.channel_count,
                self.channel_labels.len()
            )));
        }
        let rate_ok = if self.kind.is_continuous() {
            self.nominal_rate.is_finite() && self.nominal_rate > 0.0
        } else {
            self.nominal_rate == 0.0
        };
        if !rate_ok {
            return Err(StreamError::DescriptorMismatch(format!(
                "`{}` has invalid nominal rate {} for a {:?} stream",
                self.name, self.nominal_rate, self.kind
            )));
        }
        if self.kind == StreamKind::Eye && self.channel_count != EYE_CHANNEL_LABELS.len() {
            return Err(StreamError::DescriptorMismatch(format!(
                "eye stream `{}` must carry {} channels",
                self.name,
                EYE_CHANNEL_LABELS.len()
            )));
        }
        Ok(())
    }

    /// Nominal sample period rounded up to whole microseconds.
    pub fn period_us(&self) -> Option<Micros> {
        if self.nominal_rate > 0.0 {
            Some((US_PER_SEC as f64 / self.nominal_rate).ceil() as Micros)
        } else {
            None
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        for d in [
            StreamDescriptor::eeg("eeg"),
            StreamDescriptor::eye("eye"),
            StreamDescriptor::marker("markers"),
            StreamDescriptor::probe("probes"),
        ] {
            d.validate().unwrap();
        }
        assert_eq!(StreamDescriptor::eeg("eeg").period_us(), Some(4000));
        assert_eq!(StreamDescriptor::eye("eye").period_us(), Some(16667));
        assert_eq!(StreamDescriptor::marker("m").period_us(), None);
    }

    #[test]
    fn label_count_must_match() {
        let mut d = StreamDescriptor::eye("eye");
        d.channel_labels.pop();
        assert!(matches!(d.validate(), Err(StreamError::DescriptorMismatch(_))));
    }

    #[test]
    fn irregular_streams_use_zero_rate() {
        let mut d = StreamDescriptor::marker("m");
        d.nominal_rate = 10.0;
        assert!(d.validate().is_err());
        let mut d = StreamDescriptor::eeg("eeg");
        d.nominal_rate = 0.0;
        assert!(d.validate().is_err());
    }
}
