//! InfoNCE against an independent brute-force softmax cross-entropy oracle.

use patchgroup_core::moco::infonce_loss;
use patchgroup_core::nn::Feat;
use patchgroup_core::rng::{normal, StreamKey};
use patchgroup_core::tensor::{l2_normalize, Tensor};
use rand::Rng;

/// Straight-line oracle: build every logit by explicit dot product, exponent
/// by direct `exp`, positive at index 0. No shared code with the library
/// path beyond the inputs.
fn oracle_loss(q: &[Vec<f64>], k: &[Vec<f64>], queue: &[Vec<f64>], tau: f64) -> f64 {
    let b = q.len();
    let mut total = 0.0;
    for i in 0..b {
        let mut logits = Vec::with_capacity(1 + queue.len());
        let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
        logits.push(dot(&q[i], &k[i]) / tau);
        for neg in queue {
            logits.push(dot(&q[i], neg) / tau);
        }
        let denom: f64 = logits.iter().map(|&l| l.exp()).sum();
        total += -(logits[0].exp() / denom).ln();
    }
    total / b as f64
}

fn random_unit(d: usize, rng: &mut rand_chacha::ChaCha8Rng) -> Vec<f64> {
    let mut v: Vec<f64> = (0..d).map(|_| normal(rng)).collect();
    l2_normalize(&mut v);
    v
}

fn to_feat(rows: &[Vec<f64>]) -> Feat {
    let d = rows[0].len();
    let data: Vec<f64> = rows.iter().flatten().copied().collect();
    Feat::from_data(rows.len(), d, 1, 1, data).unwrap()
}

fn to_queue(rows: &[Vec<f64>]) -> Tensor {
    let d = rows[0].len();
    let data: Vec<f64> = rows.iter().flatten().copied().collect();
    Tensor::from_vec(&[rows.len(), d], data).unwrap()
}

#[test]
fn matches_oracle_on_random_instances() {
    let mut rng = StreamKey::new(20240817).rng();
    let mut worst: f64 = 0.0;
    for trial in 0..100 {
        let b = rng.gen_range(1..=4usize);
        let k = rng.gen_range(1..=16usize);
        let d = rng.gen_range(2..=8usize);
        let tau = rng.gen_range(0.05..2.0);
        let q: Vec<Vec<f64>> = (0..b).map(|_| random_unit(d, &mut rng)).collect();
        let kp: Vec<Vec<f64>> = (0..b).map(|_| random_unit(d, &mut rng)).collect();
        let queue: Vec<Vec<f64>> = (0..k).map(|_| random_unit(d, &mut rng)).collect();

        let got = infonce_loss(&to_feat(&q), &to_feat(&kp), &to_queue(&queue), tau).unwrap();
        let want = oracle_loss(&q, &kp, &queue, tau);
        let rel = (got - want).abs() / want.abs().max(1e-12);
        worst = worst.max(rel);
        assert!(rel <= 1e-6, "trial {trial}: rel err {rel} (got {got}, oracle {want})");
    }
    assert!(worst <= 1e-6, "worst relative error {worst}");
}

/// Frozen oracle values for the documented hand geometries.
#[test]
fn frozen_hand_values() {
    let e3 = vec![1.0, 0.0, 0.0];
    let q = vec![e3.clone()];
    let k = vec![e3];
    let queue = vec![vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]];

    // logits (1,0,0), tau=1: oracle gives -ln(e/(e+2)) = 0.5514447139...
    let want = oracle_loss(&q, &k, &queue, 1.0);
    assert!((want - 0.551_444_713_932_051_2).abs() < 1e-12);
    let got = infonce_loss(&to_feat(&q), &to_feat(&k), &to_queue(&queue), 1.0).unwrap();
    assert!((got - want).abs() < 1e-12);

    // logits (2,0,0) at tau=0.5: -ln(e^2/(e^2+2)) = 0.2395447...
    let got = infonce_loss(&to_feat(&q), &to_feat(&k), &to_queue(&queue), 0.5).unwrap();
    assert!((got - 0.239_544_766_221_884_5).abs() < 1e-12);
}

/// True bound: 0 < loss <= ln(1 + K*exp(2/tau)), with loss = ln(K+1) exactly
/// at uniform logits.
#[test]
fn loss_bounds_on_random_inputs() {
    let mut rng = StreamKey::new(7).rng();
    for _ in 0..200 {
        let b = rng.gen_range(1..=4usize);
        let k = rng.gen_range(1..=16usize);
        let d = rng.gen_range(2..=8usize);
        let tau = rng.gen_range(1.0..3.0);
        let q: Vec<Vec<f64>> = (0..b).map(|_| random_unit(d, &mut rng)).collect();
        let kp: Vec<Vec<f64>> = (0..b).map(|_| random_unit(d, &mut rng)).collect();
        let queue: Vec<Vec<f64>> = (0..k).map(|_| random_unit(d, &mut rng)).collect();
        let loss = infonce_loss(&to_feat(&q), &to_feat(&kp), &to_queue(&queue), tau).unwrap();
        let bound = (1.0 + k as f64 * (2.0 / tau).exp()).ln();
        assert!(loss > 0.0);
        assert!(loss <= bound + 1e-12, "loss {loss} above bound {bound}");
    }
    // uniform logits: q orthogonal to key and queue
    let q = vec![vec![1.0, 0.0, 0.0, 0.0]];
    let k = vec![vec![0.0, 1.0, 0.0, 0.0]];
    let queue = vec![vec![0.0, 0.0, 1.0, 0.0]; 3];
    let loss = infonce_loss(&to_feat(&q), &to_feat(&k), &to_queue(&queue), 1.0).unwrap();
    assert!((loss - 4.0f64.ln()).abs() < 1e-12);
}
