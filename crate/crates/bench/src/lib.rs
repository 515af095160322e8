//! Fixtures shared by the criterion benches.

use neuroadapt::classifier::MlpModel;
use neuroadapt::features::FeatureConfig;
use neuroadapt::pipeline::{train_default_model, SimStreams};
use neuroadapt::sim::{ScenarioPlayer, ScenarioScript, SimEvent};
use neuroadapt::stream::{AlignedWindow, Merger, MergerConfig};

/// The first `n` aligned windows of the default script.
pub fn windows(n: usize, seed: u64) -> Vec<AlignedWindow> {
    let mut merger = Merger::new(MergerConfig::default());
    let streams = SimStreams::open(&mut merger).expect("fresh merger");
    let mut out = Vec::with_capacity(n);
    for batch in ScenarioPlayer::new(&ScenarioScript::default_script(seed)) {
        for ev in batch {
            if let SimEvent::Sample(d) = ev {
                let _ = streams.push(&mut merger, &d);
            }
        }
        out.extend(merger.poll().into_iter().flatten());
        if out.len() >= n {
            out.truncate(n);
            break;
        }
    }
    out
}

pub fn model() -> MlpModel {
    train_default_model(0..1, FeatureConfig::default())
        .expect("default training set is valid")
        .0
}

#[cfg(test)]
mod tests {
    #[test]
    fn fixture_windows_are_full_length() {
        let w = super::windows(10, 0);
        assert_eq!(w.len(), 10);
        assert!(w.iter().all(|w| w.end_us - w.start_us == neuroadapt::stream::WINDOW_US));
    }
}
