//! Acceptance runner: one PASS/FAIL line per criterion, non-zero exit on any failure.

use std::f64::consts::PI;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use neuroadapt::adapt::{DirectiveSet, StateTracker, VisualFeedback};
use neuroadapt::classifier::{
    cross_validate, init_model, loss_and_grad, mean_loss, param, set_param, Classification, TrainConfig,
};
use neuroadapt::features::{band_powers, engagement_index, BandPower, FeatureConfig};
use neuroadapt::latency;
use neuroadapt::pipeline::{default_training_set, train_default_model, SimStreams, DEFAULT_MODEL_SEEDS};
use neuroadapt::preprocess::{filter_eeg, LowPassFir};
use neuroadapt::session::{replay, Archive, EventKind, Session, SessionConfig, SessionMode, SessionSource};
use neuroadapt::sim::{ScenarioPlayer, ScenarioScript, SimEvent};
use neuroadapt::stream::{
    Merger, MergerConfig, StreamDescriptor, TimestampedSample, US_PER_SEC, WINDOW_US,
};
use neuroadapt::{AttentionState, NUM_STATES};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(elapsed: Duration, limit: Duration) -> Result<(), String> {
    ensure(elapsed < limit, || format!("took {elapsed:.2?}, limit {limit:?}"))
}

fn sine(freq: f64, amp: f64, n: usize, rate: f64) -> Vec<f64> {
    (0..n).map(|i| amp * (2.0 * PI * freq * i as f64 / rate).sin()).collect()
}

fn band_power_oracle() -> Outcome {
    let t = Instant::now();
    let bp = band_powers(&sine(10.0, 1.0, 1250, 250.0), 250.0);
    within(t.elapsed(), Duration::from_secs(1))?;
    // Parseval: mean square of a unit sine is 1/2
    let rel = (bp.alpha - 0.5).abs() / 0.5;
    ensure(rel < 0.05, || format!("alpha {:.5}, {:.2}% off 0.5", bp.alpha, rel * 100.0))?;
    ensure(bp.theta < 0.01 * bp.alpha && bp.beta < 0.01 * bp.alpha, || {
        format!("leakage theta {:.2e} beta {:.2e}", bp.theta, bp.beta)
    })?;
    Ok(format!(
        "alpha {:.4} ({:.2}% off), theta/alpha {:.1e}, beta/alpha {:.1e}",
        bp.alpha,
        rel * 100.0,
        bp.theta / bp.alpha,
        bp.beta / bp.alpha
    ))
}

fn engagement() -> Outcome {
    let e = |theta, alpha, beta| engagement_index(&BandPower { theta, alpha, beta }).value;
    let eq = e(3.0, 3.0, 3.0);
    ensure((eq - 0.5).abs() <= 1e-9, || format!("equal bands gave {eq}"))?;
    ensure(e(2.0, 5.0, 0.0) == 0.0, || "beta = 0 is not 0".into())?;
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let (t, a, b) = (
            rng.random_range(1e-3..1e3),
            rng.random_range(1e-3..1e3),
            rng.random_range(0.0..1e3),
        );
        let oracle = b / (a + t);
        let rel = (e(t, a, b) - oracle).abs() / oracle.max(1e-300);
        worst = worst.max(if oracle == 0.0 { e(t, a, b) } else { rel });
    }
    ensure(worst < 1e-9, || format!("worst relative error {worst:.2e}"))?;
    Ok(format!("equal bands {eq:.12}, 1000 triples worst rel err {worst:.1e}"))
}

fn eye(ts: i64) -> TimestampedSample {
    TimestampedSample::new(ts, [0.5, 0.5, 4.0, 4.0, 1.0, 0.0])
}

fn windowing() -> Outcome {
    // 7 s dual stream, pushed in timestamp order
    let mut m = Merger::default();
    let eeg = m.open_stream(StreamDescriptor::eeg("eeg")).unwrap();
    let eye_h = m.open_stream(StreamDescriptor::eye("eye")).unwrap();
    let mut samples: Vec<(i64, bool)> = (0..1750).map(|k| (k * 4000, true)).collect();
    samples.extend((0..420).map(|k| ((k as f64 * 1e6 / 60.0).round() as i64, false)));
    samples.sort();
    for (ts, is_eeg) in samples {
        if is_eeg {
            m.push(eeg, TimestampedSample::scalar(ts, 0.0)).unwrap();
        } else {
            m.push(eye_h, eye(ts)).unwrap();
        }
    }
    let ws: Vec<_> = m.poll().into_iter().map(Result::unwrap).collect();
    ensure(ws.len() == 3, || format!("{} windows from 7 s", ws.len()))?;
    let overlap = ws[0].end_us - ws[1].start_us;
    ensure(overlap == 4 * US_PER_SEC, || format!("overlap {overlap} us"))?;

    // 10 minutes of the simulator with ±2 ms delivery jitter
    let mut m = Merger::new(MergerConfig::default());
    let streams = SimStreams::open(&mut m).unwrap();
    let mut pushed = [0usize; 2];
    let mut tiles = [0usize; 2];
    let mut last_ts = [i64::MIN; 2];
    let mut max_skew = 0;
    let mut tiled_until = 0;
    let mut player = ScenarioPlayer::live(AttentionState::StableAttention, 3, 2.0);
    for _ in 0..600 {
        for ev in player.next_batch().unwrap() {
            if let SimEvent::Sample(d) = ev {
                if d.stream == "eeg" || d.stream == "eye" {
                    streams.push(&mut m, &d).map_err(|e| format!("push rejected: {e}"))?;
                    if d.sample.ts_us < 600 * US_PER_SEC {
                        pushed[(d.stream == "eye") as usize] += 1;
                    }
                }
            }
        }
        for w in m.poll() {
            let w = w.map_err(|e| e.to_string())?;
            max_skew = max_skew.max(w.boundary_skew_us());
            // non-overlapping tiling: every fifth window
            if w.end_us % WINDOW_US == 0 && w.end_us <= 600 * US_PER_SEC {
                for (i, s) in [&w.eeg, &w.eye].into_iter().enumerate() {
                    for x in s {
                        ensure(x.ts_us > last_ts[i], || format!("duplicate or reordered sample at {}", x.ts_us))?;
                        last_ts[i] = x.ts_us;
                    }
                    tiles[i] += s.len();
                }
                tiled_until = w.end_us;
            }
        }
    }
    ensure(tiled_until == 600 * US_PER_SEC, || format!("tiling stopped at {tiled_until}"))?;
    ensure(pushed == tiles, || format!("pushed {pushed:?}, windowed {tiles:?}"))?;
    ensure(max_skew < 1000, || format!("boundary skew {max_skew} us"))?;
    Ok(format!(
        "3 windows / 4 s overlap; 600 s: eeg {} eye {} samples, no loss or duplication; max skew {max_skew} us",
        pushed[0], pushed[1]
    ))
}

fn classifier_accuracy() -> Outcome {
    let t = Instant::now();
    let data = default_training_set(DEFAULT_MODEL_SEEDS, FeatureConfig::default());
    let counts = data.class_counts();
    ensure(counts.iter().all(|&c| c >= 60), || format!("class counts {counts:?}"))?;
    let cv = cross_validate(&data, 5, &TrainConfig::default()).map_err(|e| e.to_string())?;
    within(t.elapsed(), Duration::from_secs(120))?;
    ensure(cv.mean_accuracy >= 0.70, || format!("mean accuracy {:.4}", cv.mean_accuracy))?;
    let note = if cv.mean_accuracy >= 0.90 { "meets" } else { "BELOW" };
    Ok(format!(
        "5-fold mean {:.4} over {} windows {counts:?}; {note} the 0.90 expectation; {:.1?}",
        cv.mean_accuracy,
        data.len(),
        t.elapsed()
    ))
}

fn gradient_check() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let d = rng.random_range(2..8);
        let h = rng.random_range(2..10);
        let m = init_model(d, h, vec![], &mut rng);
        let n = rng.random_range(4..16);
        let z: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| rng.random_range(-2.0..2.0)).collect()).collect();
        let refs: Vec<&[f64]> = z.iter().map(Vec::as_slice).collect();
        let y: Vec<usize> = (0..n).map(|_| rng.random_range(0..NUM_STATES)).collect();
        let (_, g) = loss_and_grad(&m, &refs, &y);
        let step = 1e-5;
        let num: Vec<f64> = (0..g.len())
            .map(|k| {
                let mut p = m.clone();
                let w = param(&m, k);
                set_param(&mut p, k, w + step);
                let up = mean_loss(&p, &refs, &y);
                set_param(&mut p, k, w - step);
                (up - mean_loss(&p, &refs, &y)) / (2.0 * step)
            })
            .collect();
        let diff = g.iter().zip(&num).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let norm = g.iter().zip(&num).map(|(a, b)| a * a + b * b).sum::<f64>().sqrt();
        worst = worst.max(diff / norm.max(1e-300));
    }
    ensure(worst < 1e-4, || format!("worst relative error {worst:.2e}"))?;
    Ok(format!("20 models, worst relative error {worst:.1e}"))
}

fn latency_budget() -> Outcome {
    let (model, _) = train_default_model(DEFAULT_MODEL_SEEDS, FeatureConfig::default()).map_err(|e| e.to_string())?;
    let r = latency::measure(&model, 10_000, 0);
    ensure(r.windows + r.failed == 10_000, || format!("only {} windows", r.windows + r.failed))?;
    ensure(r.total.p99_us < 100_000, || format!("p99 {} us", r.total.p99_us))?;
    let ms = |us: u64| us as f64 / 1000.0;
    Ok(format!(
        "10000 windows p99 {:.3} ms (filter {:.3}, features {:.3}, forward {:.3}); max {:.3} ms",
        ms(r.total.p99_us),
        ms(r.preprocess.p99_us),
        ms(r.features.p99_us),
        ms(r.forward.p99_us),
        ms(r.total.max_us)
    ))
}

fn classification(state: AttentionState, t: i64) -> Classification {
    let mut probs = [0.0; NUM_STATES];
    probs[state.index()] = 1.0;
    Classification {
        state,
        probs,
        window_end_us: t,
        latency_us: 0,
    }
}

fn hysteresis() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut worst = 0;
    for _ in 0..200 {
        let mut tr = StateTracker::new(AttentionState::StableAttention, 2);
        let mut changes = 0;
        for t in 0..1000 {
            let s = AttentionState::ALL[rng.random_range(0..NUM_STATES)];
            changes += tr.update(&classification(s, t)).changed as usize;
        }
        worst = worst.max(changes);
    }
    ensure(worst <= 500, || format!("{worst} changes in 1000"))?;
    for a in AttentionState::ALL {
        for b in AttentionState::ALL {
            if a == b {
                continue;
            }
            let mut tr = StateTracker::new(AttentionState::StableAttention, 2);
            let changes: usize = (0..1000)
                .map(|t| tr.update(&classification(if t % 2 == 0 { a } else { b }, t)).changed as usize)
                .sum();
            ensure(changes == 0, || format!("alternating {a:?}/{b:?} changed {changes} times"))?;
        }
    }
    Ok(format!("200 random runs, worst {worst} changes; 20 alternating pairs, 0 changes"))
}

fn directive_totality() -> Outcome {
    let set = DirectiveSet::builtin();
    let table = [
        (AttentionState::HighAttention, VisualFeedback::FocusMode),
        (AttentionState::StableAttention, VisualFeedback::Default),
        (AttentionState::DroppingAttention, VisualFeedback::HighlightCues),
        (AttentionState::CognitiveOverload, VisualFeedback::SoftenedUI),
        (AttentionState::Distraction, VisualFeedback::AnimatedCues),
    ];
    let mut ids = std::collections::BTreeSet::new();
    let mut prompts = std::collections::BTreeSet::new();
    for (state, visual) in table {
        let d = set.directive_for(state);
        ensure(d.state == state, || format!("{state:?} maps to {:?}", d.state))?;
        ensure(d.visual_feedback == visual, || format!("{state:?} has {:?}", d.visual_feedback))?;
        ids.insert(d.id.clone());
        prompts.insert(d.system_prompt.clone());
    }
    ensure(ids.len() == 5 && prompts.len() == 5, || "directives not distinct".into())?;
    Ok("5 states, 5 distinct directives, visual table matches".into())
}

fn session(mode: SessionMode, model: &Arc<neuroadapt::classifier::MlpModel>) -> Session {
    let mut s = Session::new(
        format!("{mode:?}"),
        SessionConfig {
            mode,
            ..SessionConfig::default()
        },
        model.clone(),
        Arc::new(DirectiveSet::builtin()),
        SessionSource::Scripted(ScenarioScript::default_script(21)),
    )
    .expect("session");
    s.run_to_end().expect("run");
    s.close();
    s
}

fn replay_determinism() -> Outcome {
    let (model, _) = train_default_model(DEFAULT_MODEL_SEEDS, FeatureConfig::default()).map_err(|e| e.to_string())?;
    let model = Arc::new(model);
    let a = session(SessionMode::Adaptive, &model);
    ensure(a.clock_us() >= 420 * US_PER_SEC, || format!("session ran {} us", a.clock_us()))?;
    let archive = Archive::read_bytes(a.archive().unwrap()).map_err(|e| e.to_string())?;
    let report = replay(&archive, model.clone(), Arc::new(DirectiveSet::builtin())).map_err(|e| e.to_string())?;
    ensure(report.is_match(), || report.summary())?;

    // independent bit-level comparison against a second live run
    let bits = |s: &Session| -> Vec<(i64, String, Vec<u64>)> {
        s.events()
            .iter()
            .filter_map(|e| match &e.kind {
                EventKind::Classification { window_end_us, state, probs, emitted } => Some((
                    *window_end_us,
                    format!("{state:?}->{emitted:?}"),
                    probs.iter().map(|p| p.to_bits()).collect(),
                )),
                EventKind::StateChange { window_end_us, from, to } => {
                    Some((*window_end_us, format!("{from:?}=>{to:?}"), vec![]))
                }
                _ => None,
            })
            .collect()
    };
    let again = session(SessionMode::Adaptive, &model);
    ensure(bits(&a) == bits(&again), || "second live run differs".into())?;

    let b = session(SessionMode::Baseline, &model);
    let rest = |s: &Session| -> Vec<(i64, EventKind)> {
        s.events()
            .iter()
            .filter(|e| !matches!(e.kind, EventKind::Directive(_) | EventKind::Chat { .. }))
            .map(|e| (e.ts_us, e.kind.clone()))
            .collect()
    };
    ensure(rest(&a) == rest(&b), || "baseline differs outside directive/chat events".into())?;
    ensure(b.log().directive_changes() == 0, || "baseline logged directives".into())?;
    let n_class = bits(&a).len();
    Ok(format!(
        "{}; {n_class} classification/state-change events bit-identical; baseline differs by {} directive events only",
        report.summary(),
        a.log().directive_changes()
    ))
}

fn rms(x: &[f64]) -> f64 {
    (x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64).sqrt()
}

fn filter_properties() -> Outcome {
    let fir = LowPassFir::eeg_default();
    let n = 1250;
    let edge = fir.taps().len();

    let dc = vec![37.5; n];
    let out = filter_eeg(&fir, &dc).map_err(|e| e.to_string())?;
    let peak = out.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    ensure(peak < 1e-6 * 37.5, || format!("DC residue {peak:.2e}"))?;

    let gain_db = |f: f64| {
        let x = sine(f, 1.0, n, 250.0);
        let y = fir.apply(&x);
        20.0 * (rms(&y[edge..n - edge]) / rms(&x[edge..n - edge])).log10()
    };
    let mut stop_worst = f64::NEG_INFINITY;
    for f in (60..=120).step_by(5) {
        stop_worst = stop_worst.max(gain_db(f as f64));
    }
    ensure(stop_worst <= -20.0, || format!("stopband gain {stop_worst:.1} dB"))?;
    let g60 = gain_db(60.0);
    let mut pass_worst: f64 = 0.0;
    for f in 1..=30 {
        pass_worst = pass_worst.max(gain_db(f as f64).abs());
    }
    ensure(pass_worst < 0.1, || format!("passband deviation {pass_worst:.3} dB"))?;

    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let x: Vec<f64> = (0..n).map(|_| rng.random_range(-100.0..100.0)).collect();
        let y: Vec<f64> = (0..n).map(|_| rng.random_range(-100.0..100.0)).collect();
        let (a, b) = (rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0));
        let mix: Vec<f64> = x.iter().zip(&y).map(|(p, q)| a * p + b * q).collect();
        let (fx, fy, fm) = (fir.apply(&x), fir.apply(&y), fir.apply(&mix));
        for i in 0..n {
            worst = worst.max((fm[i] - (a * fx[i] + b * fy[i])).abs());
        }
    }
    ensure(worst < 1e-9, || format!("linearity error {worst:.2e}"))?;
    Ok(format!(
        "DC residue {peak:.1e}; 60 Hz {g60:.1} dB, 60-120 Hz worst {stop_worst:.1} dB; 1-30 Hz within {pass_worst:.3} dB; linearity {worst:.1e}"
    ))
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("band-power oracle", band_power_oracle),
        ("engagement index", engagement),
        ("windowing", windowing),
        ("classifier accuracy", classifier_accuracy),
        ("gradient check", gradient_check),
        ("latency", latency_budget),
        ("hysteresis", hysteresis),
        ("directive totality", directive_totality),
        ("replay determinism", replay_determinism),
        ("filter properties", filter_properties),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let t = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        let secs = t.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS  {name:<20} {detail} [{secs:.2}s]"),
            Err(why) => {
                failed += 1;
                println!("FAIL  {name:<20} {why} [{secs:.2}s]");
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
