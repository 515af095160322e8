use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};

use neuroadapt::features::{band_powers, FeatureConfig};
use neuroadapt::pipeline::Pipeline;
use neuroadapt::preprocess::{clean_window, LowPassFir};
use neuroadapt_bench::{model, windows};

fn stages(c: &mut Criterion) {
    let ws = windows(50, 1);
    let model = model();
    let pipeline = Pipeline::new(FeatureConfig::default());
    let fir = LowPassFir::eeg_default();
    let eeg: Vec<f64> = ws[0].eeg.iter().map(|s| s.values[0]).collect();
    let x = pipeline.process(&ws[0], None).unwrap().features.vector.to_vec();

    c.bench_function("fir_zero_phase_1250", |b| b.iter(|| fir.apply(black_box(&eeg))));
    c.bench_function("welch_band_powers_1250", |b| b.iter(|| band_powers(black_box(&eeg), 250.0)));
    c.bench_function("clean_window", |b| b.iter(|| clean_window(&fir, black_box(&ws[0]))));
    c.bench_function("mlp_forward", |b| b.iter(|| model.probs(black_box(&x))));

    let mut i = 0;
    c.bench_function("window_to_classification", |b| {
        b.iter(|| {
            i = (i + 1) % ws.len();
            pipeline.process(black_box(&ws[i]), Some(&model))
        })
    });
}

criterion_group!(benches, stages);
criterion_main!(benches);
