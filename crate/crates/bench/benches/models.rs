use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use hierseg::corpus::{generate_synthetic_corpus, segment_session, Segment, SegmentationConfig, SyntheticSpec};
use hierseg::encoder::{EncoderConfig, EncoderModel, Vocabulary};
use hierseg::nn::{BiLstm, Grads};
use hierseg::sqe::{run_refinement, RefinementConfig, SqeConfig, SqeMode, SqeModel, SqeSession};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn bilstm(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let layer = BiLstm::new("b", 32, 32, &mut rng);
    let t_len = 10;
    let xs: Vec<f64> = (0..t_len * 32).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mask = vec![true; t_len];
    let dout = vec![0.1; t_len * 64];
    c.bench_function("bilstm_forward_10x32", |b| b.iter(|| black_box(layer.run(black_box(&xs), &mask))));
    c.bench_function("bilstm_forward_backward_10x32", |b| {
        b.iter(|| {
            let trace = layer.run(&xs, &mask);
            let mut g = Grads::zeros_like(layer.params());
            black_box(layer.backward_pass(&xs, &trace, &dout, &mut g.0))
        })
    });
}

fn segments() -> Vec<Segment> {
    let corpus = generate_synthetic_corpus(&SyntheticSpec { n_sessions: 20, ..Default::default() }).unwrap();
    let seg = SegmentationConfig::new(40).unwrap();
    corpus.sessions.iter().flat_map(|s| segment_session(s, &seg).unwrap()).collect()
}

fn encoder(c: &mut Criterion) {
    let segs = segments();
    let model = EncoderModel::new(Vocabulary::build(&segs), &EncoderConfig::default(), 0).unwrap();
    c.bench_function("encoder_encode_segment", |b| b.iter(|| black_box(model.encode(black_box(&segs[0])).unwrap())));
}

fn sqe(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let session = SqeSession {
        session_id: "s".into(),
        embeddings: (0..8).map(|_| (0..32).map(|_| rng.random_range(-1.0..1.0)).collect()).collect(),
        utterance_counts: vec![40; 8],
        target: 0.2,
    };
    for mode in [SqeMode::Even, SqeMode::Uneven] {
        let model = SqeModel::new(32, &SqeConfig::default(), mode, 0).unwrap();
        c.bench_function(&format!("sqe_local_estimates_{mode:?}").to_lowercase(), |b| {
            b.iter(|| black_box(model.local_estimates(black_box(&session)).unwrap()))
        });
    }
}

fn refinement(c: &mut Criterion) {
    let corpus = generate_synthetic_corpus(&SyntheticSpec { n_sessions: 40, ..Default::default() }).unwrap();
    let mut cfg = RefinementConfig { k: 1, ..Default::default() };
    cfg.encoder_train.max_epochs = 3;
    cfg.sqe_train.max_epochs = 5;
    let mut group = c.benchmark_group("refinement");
    group.sample_size(10);
    group.bench_function("k1_40_sessions", |b| {
        b.iter_batched(|| cfg.clone(), |cfg| black_box(run_refinement(&corpus.sessions, &cfg, None).unwrap()), BatchSize::SmallInput)
    });
    group.finish();
}

criterion_group!(benches, bilstm, encoder, sqe, refinement);
criterion_main!(benches);
