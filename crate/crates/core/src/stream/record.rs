//! NDJSON recording format: one `{"stream", "ts_us", "values"}` object per line.
//!
//! Finite values round-trip bit-exactly. Non-finite values are written as
//! `null` and read back as NaN.

use std::io::{self, BufRead, Write};

use serde::{Deserialize, Serialize};

use super::{Micros, SampleValues, TimestampedSample};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordLine {
    pub stream: String,
    pub ts_us: Micros,
    pub values: Vec<Option<f64>>,
}

impl RecordLine {
    pub fn from_sample(stream: &str, sample: &TimestampedSample) -> Self {
        Self {
            stream: stream.to_string(),
            ts_us: sample.ts_us,
            values: sample
                .values
                .iter()
                .map(|v| v.is_finite().then_some(*v))
                .collect(),
        }
    }

    pub fn into_sample(self) -> (String, TimestampedSample) {
        let values: SampleValues = self
            .values
            .into_iter()
            .map(|v| v.unwrap_or(f64::NAN))
            .collect();
        (
            self.stream,
            TimestampedSample {
                ts_us: self.ts_us,
                values,
            },
        )
    }
}

pub fn write_record_line<W: Write>(
    out: &mut W,
    stream: &str,
    sample: &TimestampedSample,
) -> io::Result<()> {
    serde_json::to_writer(&mut *out, &RecordLine::from_sample(stream, sample))?;
    out.write_all(b"\n")
}

pub fn read_record_line(line: &str) -> Result<(String, TimestampedSample), serde_json::Error> {
    serde_json::from_str::<RecordLine>(line).map(RecordLine::into_sample)
}

#[derive(Debug, thiserror::Error)]
pub enum RecordError {
    #[error("line {line}: {source}")]
    Parse {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Iterates a recording, skipping blank lines. Line numbers are 1-based.
pub struct RecordReader<R> {
    inner: io::Lines<R>,
    line: usize,
}

impl<R: BufRead> RecordReader<R> {
    pub fn new(reader: R) -> Self {
        Self {
            inner: reader.lines(),
            line: 0,
        }
    }
}

impl<R: BufRead> Iterator for RecordReader<R> {
    type Item = Result<(String, TimestampedSample), RecordError>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            let line = match self.inner.next()? {
                Ok(l) => l,
                Err(e) => return Some(Err(e.into())),
            };
            self.line += 1;
            if line.trim().is_empty() {
                continue;
            }
            return Some(read_record_line(&line).map_err(|source| RecordError::Parse {
                line: self.line,
                source,
            }));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn format_matches_documented_shape() {
        let mut buf = Vec::new();
        write_record_line(&mut buf, "eeg", &TimestampedSample::scalar(4000, 1.5)).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "{\"stream\":\"eeg\",\"ts_us\":4000,\"values\":[1.5]}\n"
        );
    }

    #[test]
    fn non_finite_becomes_null_then_nan() {
        let mut buf = Vec::new();
        let s = TimestampedSample::new(1, [f64::NAN, 2.0]);
        write_record_line(&mut buf, "eye", &s).unwrap();
        assert!(String::from_utf8_lossy(&buf).contains("[null,2.0]"));
        let (_, back) = read_record_line(std::str::from_utf8(&buf).unwrap().trim()).unwrap();
        assert!(back.values[0].is_nan());
    }

    #[test]
    fn reader_reports_line_numbers() {
        let text = "{\"stream\":\"a\",\"ts_us\":1,\"values\":[1.0]}\n\n{broken\n";
        let results: Vec<_> = RecordReader::new(text.as_bytes()).collect();
        assert!(results[0].is_ok());
        match &results[1] {
            Err(RecordError::Parse { line, .. }) => assert_eq!(*line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    proptest! {
        #[test]
        fn finite_values_round_trip_bit_exact(
            ts in any::<i64>(),
            values in prop::collection::vec(prop::num::f64::NORMAL | prop::num::f64::SUBNORMAL | prop::num::f64::ZERO, 1..8),
        ) {
            let s = TimestampedSample::new(ts, values.iter().copied());
            let mut buf = Vec::new();
            write_record_line(&mut buf, "x", &s).unwrap();
            let (name, back) = read_record_line(std::str::from_utf8(&buf).unwrap().trim()).unwrap();
            prop_assert_eq!(name, "x");
            prop_assert_eq!(back.ts_us, ts);
            for (a, b) in back.values.iter().zip(&values) {
                prop_assert_eq!(a.to_bits(), b.to_bits());
            }
        }
    }
}
