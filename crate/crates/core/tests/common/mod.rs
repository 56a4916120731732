#![allow(dead_code)]

use quadnc::nn::{self, NetworkModel};
use quadnc::{ClassLabel, FeatureVector};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Two-sample Kolmogorov-Smirnov statistic.
pub fn ks_statistic(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (n, m) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j, mut d) = (0usize, 0usize, 0.0f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / n - j as f64 / m).abs());
    }
    d
}

/// Asymptotic two-sample critical value at significance `alpha`.
pub fn ks_critical(n: usize, m: usize, alpha: f64) -> f64 {
    let c = (-(alpha / 2.0).ln() / 2.0).sqrt();
    c * ((n + m) as f64 / (n as f64 * m as f64)).sqrt()
}

/// A small network with random weights and biases plus a random batch.
pub fn random_instance(seed: u64) -> (NetworkModel, Vec<FeatureVector>, Vec<ClassLabel>) {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let depth = r.gen_range(1..=3);
    let mut dims = vec![r.gen_range(2..=8)];
    for _ in 0..depth {
        dims.push(r.gen_range(2..=6));
    }
    dims.push(2);
    let mut model = NetworkModel::init(&dims, seed).unwrap();
    for b in model.biases.iter_mut().flatten() {
        *b = r.gen_range(-0.5..0.5);
    }
    for w in model.weights.iter_mut().flatten() {
        *w += r.gen_range(-0.3..0.3);
    }
    let batch = r.gen_range(1..=6);
    let inputs = (0..batch)
        .map(|_| FeatureVector { bins: (0..dims[0]).map(|_| r.gen_range(0.0..1.0)).collect(), kept: 1, dropped: 0 })
        .collect();
    let labels =
        (0..batch).map(|_| if r.gen_bool(0.5) { ClassLabel::Nonclassical } else { ClassLabel::Classical }).collect();
    (model, inputs, labels)
}

fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let diff = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let scale = a.iter().map(|x| x * x).sum::<f64>().sqrt().max(b.iter().map(|x| x * x).sum::<f64>().sqrt());
    if scale < 1e-10 {
        diff
    } else {
        diff / scale
    }
}

/// Largest per-layer relative error between backprop and central
/// differences, over weights and biases separately.
pub fn max_gradient_error(model: &NetworkModel, inputs: &[FeatureVector], labels: &[ClassLabel]) -> f64 {
    const H: f64 = 1e-6;
    let g = nn::gradient(model, inputs, labels).unwrap();
    let mut worst = 0.0f64;
    for l in 0..model.weights.len() {
        let fd = |get: &dyn Fn(&mut NetworkModel) -> &mut Vec<f64>, k: usize| {
            let mut p = model.clone();
            get(&mut p)[k] += H;
            let up = nn::loss(&p, inputs, labels).unwrap();
            get(&mut p)[k] -= 2.0 * H;
            let down = nn::loss(&p, inputs, labels).unwrap();
            (up - down) / (2.0 * H)
        };
        let fd_w: Vec<f64> = (0..model.weights[l].len()).map(|k| fd(&|m| &mut m.weights[l], k)).collect();
        let fd_b: Vec<f64> = (0..model.biases[l].len()).map(|k| fd(&|m| &mut m.biases[l], k)).collect();
        worst = worst.max(rel_err(&g.weights[l], &fd_w)).max(rel_err(&g.biases[l], &fd_b));
    }
    worst
}
