use std::collections::VecDeque;

use crate::classifier::Classification;
use crate::state::AttentionState;

pub const DEFAULT_K: usize = 2;
pub const HISTORY_LEN: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrackerUpdate {
    pub emitted: AttentionState,
    pub changed: bool,
}

/// Debounces the per-window classifications: the emitted state only moves
/// after `k` consecutive windows agree on a different state.
#[derive(Debug, Clone)]
pub struct StateTracker {
    current: AttentionState,
    candidate: Option<AttentionState>,
    streak: usize,
    k: usize,
    history: VecDeque<Classification>,
    confidence_degraded: bool,
}

impl StateTracker {
    pub fn new(initial: AttentionState, k: usize) -> Self {
        assert!(k >= 1, "k must be at least 1");
        Self {
            current: initial,
            candidate: None,
            streak: 0,
            k,
            history: VecDeque::with_capacity(HISTORY_LEN),
            confidence_degraded: false,
        }
    }

    pub fn current(&self) -> AttentionState {
        self.current
    }

    pub fn candidate(&self) -> Option<AttentionState> {
        self.candidate
    }

    pub fn streak(&self) -> usize {
        self.streak
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn confidence_degraded(&self) -> bool {
        self.confidence_degraded
    }

    pub fn history(&self) -> impl Iterator<Item = &Classification> {
        self.history.iter()
    }

    pub fn update(&mut self, c: &Classification) -> TrackerUpdate {
        if self.history.len() == HISTORY_LEN {
            self.history.pop_front();
        }
        self.history.push_back(*c);
        self.confidence_degraded = false;
        if c.state == self.current {
            self.candidate = None;
            self.streak = 0;
            return TrackerUpdate {
                emitted: self.current,
                changed: false,
            };
        }
        if self.candidate == Some(c.state) {
            self.streak += 1;
        } else {
            self.candidate = Some(c.state);
            self.streak = 1;
        }
        let changed = self.streak >= self.k;
        if changed {
            self.current = c.state;
            self.candidate = None;
            self.streak = 0;
        }
        TrackerUpdate {
            emitted: self.current,
            changed,
        }
    }

    /// A window without a usable classification: hold the state, restart the streak.
    pub fn mark_degraded(&mut self) {
        self.candidate = None;
        self.streak = 0;
        self.confidence_degraded = true;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::state::AttentionState::*;
    use proptest::prelude::*;

    fn cls(s: AttentionState) -> Classification {
        let mut probs = [0.0; 5];
        probs[s.index()] = 1.0;
        Classification {
            state: s,
            probs,
            window_end_us: 0,
            latency_us: 0,
        }
    }

    fn changes(t: &mut StateTracker, seq: &[AttentionState]) -> Vec<bool> {
        seq.iter().map(|s| t.update(&cls(*s)).changed).collect()
    }

    #[test]
    fn needs_two_in_a_row() {
        let mut t = StateTracker::new(HighAttention, 2);
        assert_eq!(changes(&mut t, &[DroppingAttention]), vec![false]);
        assert_eq!(changes(&mut t, &[DroppingAttention]), vec![true]);
        assert_eq!(t.current(), DroppingAttention);
    }

    #[test]
    fn alternating_never_switches() {
        let mut t = StateTracker::new(HighAttention, 2);
        let seq = [DroppingAttention, HighAttention, DroppingAttention, HighAttention];
        assert!(changes(&mut t, &seq).iter().all(|c| !c));
    }

    #[test]
    fn degraded_window_breaks_streak() {
        let mut t = StateTracker::new(StableAttention, 2);
        t.update(&cls(Distraction));
        t.mark_degraded();
        assert!(t.confidence_degraded());
        assert!(!t.update(&cls(Distraction)).changed);
        assert!(!t.confidence_degraded());
        assert!(t.update(&cls(Distraction)).changed);
    }

    proptest! {
        #[test]
        fn change_count_bounded(seq in prop::collection::vec(0usize..5, 0..400), k in 1usize..5) {
            let mut t = StateTracker::new(StableAttention, k);
            let n = seq
                .iter()
                .filter(|i| t.update(&cls(AttentionState::from_index(**i).unwrap())).changed)
                .count();
            prop_assert!(n <= seq.len().div_ceil(k));
        }
    }
}
