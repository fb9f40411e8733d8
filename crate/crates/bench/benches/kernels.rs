use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use sinmt::autodiff::OptimizerState;
use sinmt::evaluation::compute_eer;
use sinmt::model::ModelConfig;
use sinmt::synthdata::{generate_utterance, CorpusConfig};
use sinmt::training::{train_step, Batch, StepConfig};
use sinmt::{Mode, SInMTNetwork, Tape, Tensor};

fn wave(n: usize, phase: f64) -> Vec<f64> {
    (0..n).map(|i| (i as f64 * 0.17 + phase).sin() * 0.5).collect()
}

fn tape_kernels(c: &mut Criterion) {
    let a = Tensor::matrix(64, 32, wave(64 * 32, 0.0)).unwrap();
    let b = Tensor::matrix(32, 64, wave(32 * 64, 1.0)).unwrap();
    c.bench_function("matmul 64x32x64 forward+backward", |bench| {
        bench.iter(|| {
            let mut tape = Tape::new();
            let x = tape.param(a.clone());
            let y = tape.param(b.clone());
            let z = tape.matmul(x, y).unwrap();
            let s = tape.sum(z);
            black_box(tape.backward(s).unwrap());
        })
    });
}

fn network(c: &mut Criterion) {
    let net = SInMTNetwork::new(&ModelConfig::default(), Mode::SpeakerInvariant, 1.0, 0.1, 16, 0).unwrap();
    let clip = wave(4000, 0.3);
    c.bench_function("infer 1 s utterance", |bench| bench.iter(|| black_box(net.infer(black_box(&clip)).unwrap())));

    let batch = Batch {
        waveforms: (0..8).map(|k| wave(1000, k as f64)).collect(),
        spoof_labels: (0..8).map(|k| k % 2).collect(),
        speaker_labels: Some((0..8).collect()),
    };
    let cfg = StepConfig::default();
    c.bench_function("ivspk train_step batch 8 x 1000", |bench| {
        bench.iter_batched(
            || (net.clone(), OptimizerState::adam(1e-3, 0.9, 0.999, 1e-8)),
            |(mut n, mut opt)| black_box(train_step(&mut n, &batch, &cfg, &mut opt).unwrap()),
            criterion::BatchSize::LargeInput,
        )
    });
}

fn scoring_and_data(c: &mut Criterion) {
    let bona: Vec<f64> = wave(5000, 0.0).iter().map(|v| v + 0.3).collect();
    let spoof = wave(5000, 2.0);
    c.bench_function("compute_eer 5000 + 5000", |bench| bench.iter(|| black_box(compute_eer(&bona, &spoof).unwrap())));

    let cfg = CorpusConfig::default();
    c.bench_function("generate one spoofed utterance", |bench| {
        bench.iter(|| black_box(generate_utterance(&cfg, 3, 25).unwrap()))
    });
}

criterion_group!(benches, tape_kernels, network, scoring_and_data);
criterion_main!(benches);
