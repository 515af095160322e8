use std::collections::VecDeque;

use super::{Micros, StreamDescriptor, TimestampedSample, WINDOW_US};

/// Bounded FIFO holding the most recent `capacity_us` of one stream.
///
/// Invariant: `newest.ts_us - oldest.ts_us <= capacity_us`.
#[derive(Debug, Clone)]
pub struct RingBuffer {
    desc: StreamDescriptor,
    capacity_us: Micros,
    samples: VecDeque<TimestampedSample>,
}

impl RingBuffer {
    pub fn new(desc: StreamDescriptor) -> Self {
        Self::with_capacity_us(desc, WINDOW_US)
    }

    pub fn with_capacity_us(desc: StreamDescriptor, capacity_us: Micros) -> Self {
        // +2 absorbs the inclusive end and rounding of the nominal period
        let expected = desc
            .period_us()
            .map(|p| (capacity_us / p) as usize + 2)
            .unwrap_or(16);
        Self {
            desc,
            capacity_us,
            samples: VecDeque::with_capacity(expected),
        }
    }

    pub fn descriptor(&self) -> &StreamDescriptor {
        &self.desc
    }

    pub fn capacity_us(&self) -> Micros {
        self.capacity_us
    }

    /// Appends and evicts from the front until the span fits the capacity.
    /// Ordering is the caller's responsibility.
    pub fn push(&mut self, sample: TimestampedSample) {
        let newest = sample.ts_us;
        self.samples.push_back(sample);
        while let Some(front) = self.samples.front() {
            if newest - front.ts_us > self.capacity_us {
                self.samples.pop_front();
            } else {
                break;
            }
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn oldest(&self) -> Option<&TimestampedSample> {
        self.samples.front()
    }

    pub fn newest(&self) -> Option<&TimestampedSample> {
        self.samples.back()
    }

    pub fn span_us(&self) -> Micros {
        match (self.oldest(), self.newest()) {
            (Some(a), Some(b)) => b.ts_us - a.ts_us,
            _ => 0,
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = &TimestampedSample> {
        self.samples.iter()
    }

    /// Samples with `start <= ts < end`, in order.
    pub fn range(&self, start: Micros, end: Micros) -> impl Iterator<Item = &TimestampedSample> {
        let first = self.samples.partition_point(|s| s.ts_us < start);
        self.samples
            .range(first..)
            .take_while(move |s| s.ts_us < end)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn six_seconds_at_250hz_keeps_last_five() {
        let mut rb = RingBuffer::new(StreamDescriptor::eeg("eeg"));
        for k in 0..1500 {
            rb.push(TimestampedSample::scalar(k * 4000, k as f64));
        }
        assert!((1249..=1251).contains(&rb.len()), "len {}", rb.len());
        assert!(rb.span_us() <= WINDOW_US);
        assert_eq!(rb.newest().unwrap().ts_us, 1499 * 4000);
    }

    #[test]
    fn range_is_half_open() {
        let mut rb = RingBuffer::new(StreamDescriptor::eeg("eeg"));
        for k in 0..10 {
            rb.push(TimestampedSample::scalar(k * 1000, 0.0));
        }
        let ts: Vec<_> = rb.range(2000, 5000).map(|s| s.ts_us).collect();
        assert_eq!(ts, vec![2000, 3000, 4000]);
    }
}
