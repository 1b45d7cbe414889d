//! Forward passes checked against a straightforward matrix re-implementation.

use hierseg::nn::{BiLstm, Lstm};
use hierseg::predictor::{PredictorConfig, PredictorModel, Task};
use hierseg::sqe::{SqeConfig, SqeMode, SqeModel, SqeSession};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn mat(values: &[f64], rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_row_slice(rows, cols, values)
}

fn lstm_states(l: &Lstm, xs: &[DVector<f64>]) -> Vec<DVector<f64>> {
    let h = l.hidden_dim();
    let wx = mat(l.w_x.values(), 4 * h, l.input_dim());
    let wh = mat(l.w_h.values(), 4 * h, h);
    let b = DVector::from_column_slice(l.b.values());
    let (mut hs, mut c) = (DVector::zeros(h), DVector::zeros(h));
    let mut out = Vec::new();
    for x in xs {
        let z = &wx * x + &wh * &hs + &b;
        let i = z.rows(0, h).map(sigmoid);
        let f = z.rows(h, h).map(sigmoid);
        let g = z.rows(2 * h, h).map(f64::tanh);
        let o = z.rows(3 * h, h).map(sigmoid);
        c = f.component_mul(&c) + i.component_mul(&g);
        hs = o.component_mul(&c.map(f64::tanh));
        out.push(hs.clone());
    }
    out
}

fn bilstm_states(l: &BiLstm, xs: &[DVector<f64>]) -> Vec<DVector<f64>> {
    let fwd = lstm_states(&l.forward, xs);
    let rev: Vec<_> = xs.iter().rev().cloned().collect();
    let mut bwd = lstm_states(&l.backward, &rev);
    bwd.reverse();
    fwd.iter()
        .zip(&bwd)
        .map(|(a, b)| DVector::from_iterator(a.len() + b.len(), a.iter().chain(b.iter()).copied()))
        .collect()
}

fn attention_weights(w: &[f64], b: &[f64], u: &[f64], hs: &[DVector<f64>]) -> Vec<f64> {
    let a = b.len();
    let w = mat(w, a, hs[0].len());
    let b = DVector::from_column_slice(b);
    let u = DVector::from_column_slice(u);
    let scores: Vec<f64> = hs.iter().map(|h| u.dot(&(&w * h + &b).map(f64::tanh))).collect();
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.iter().map(|e| e / total).collect()
}

fn random_embeddings(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Vec<Vec<f64>> {
    (0..n).map(|_| (0..d).map(|_| rng.random_range(-1.0..1.0)).collect()).collect()
}

fn randomize_biases(model_biases: Vec<&mut hierseg::nn::Param>, rng: &mut ChaCha8Rng) {
    for p in model_biases {
        for v in p.values_mut() {
            *v = rng.random_range(-0.5..0.5);
        }
    }
}

#[test]
fn predictor_matches_matrix_oracle() {
    for (seed, task) in [(0, Task::Regression), (1, Task::Classification), (2, Task::Regression)] {
        let cfg = PredictorConfig { hidden: 3, attention_dim: 4, max_segments: 5 };
        let mut model = PredictorModel::new(4, &cfg, task, seed).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        randomize_biases(
            vec![&mut model.bilstm.forward.b, &mut model.bilstm.backward.b, &mut model.attention.b, &mut model.head.bias],
            &mut rng,
        );
        for n in 1..=3 {
            let emb = random_embeddings(&mut rng, n, 4);
            let p = model.predict_session("s", &emb).unwrap();

            let xs: Vec<DVector<f64>> = emb.iter().map(|e| DVector::from_column_slice(e)).collect();
            let hs = bilstm_states(&model.bilstm, &xs);
            let a = &model.attention;
            let alpha = attention_weights(a.w.values(), a.b.values(), a.u.values(), &hs);
            let pooled = hs.iter().zip(&alpha).fold(DVector::zeros(6), |acc, (h, w)| acc + h * *w);
            let pre = model.head.bias.values()[0] + pooled.dot(&DVector::from_column_slice(model.head.weight.values()));

            for (got, want) in p.attention.iter().zip(&alpha) {
                assert!((got - want).abs() < 1e-10);
            }
            match task {
                Task::Regression => assert!((p.score_normalized.unwrap() - pre).abs() < 1e-10),
                Task::Classification => assert!((p.probability_high.unwrap() - sigmoid(pre)).abs() < 1e-10),
            }
        }
    }
}

#[test]
fn sqe_matches_matrix_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for mode in [SqeMode::Even, SqeMode::Uneven] {
        let mut model = SqeModel::new(3, &SqeConfig { hidden: 2, attention_dim: 3 }, mode, 4).unwrap();
        randomize_biases(vec![&mut model.bilstm.forward.b, &mut model.bilstm.backward.b, &mut model.head.bias], &mut rng);
        let emb = random_embeddings(&mut rng, 2, 3);
        let counts = vec![30, 10];
        let session = SqeSession {
            session_id: "s".into(),
            embeddings: emb.clone(),
            utterance_counts: counts.clone(),
            target: 0.4,
        };
        let est = model.local_estimates(&session).unwrap();

        let xs: Vec<DVector<f64>> = emb.iter().map(|e| DVector::from_column_slice(e)).collect();
        let hs = bilstm_states(&model.bilstm, &xs);
        let alpha = match &model.attention {
            None => vec![0.75, 0.25],
            Some(a) => attention_weights(a.w.values(), a.b.values(), a.u.values(), &hs),
        };
        let head = DVector::from_column_slice(model.head.weight.values());
        let bias = model.head.bias.values()[0];
        let s_hat_i: Vec<f64> = hs.iter().map(|h| h.dot(&head) + bias).collect();
        let pooled = hs.iter().zip(&alpha).fold(DVector::zeros(4), |acc, (h, w)| acc + h * *w);
        let s_hat = pooled.dot(&head) + bias;

        assert!((est.s_hat - s_hat).abs() < 1e-10);
        for i in 0..2 {
            assert!((est.alpha[i] - alpha[i]).abs() < 1e-10);
            assert!((est.s_hat_i[i] - s_hat_i[i]).abs() < 1e-10);
            assert!((est.s_bar_i[i] - (s_hat_i[i] + 0.4 - s_hat)).abs() < 1e-10);
        }
    }
}
