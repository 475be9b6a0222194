#![allow(dead_code)]

use cpr_core::learner::{loss, loss_and_grad, PolicyParams, PpoHyper, SampleBatch};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

/// Random batch whose behaviour policy sits close to `params`, keeping every
/// ratio and value inside the clip ranges so the loss is smooth at `params`.
pub fn random_batch<R: Rng>(params: &PolicyParams, n: usize, rng: &mut R) -> SampleBatch {
    let g = params.signal_dim();
    let mut b = SampleBatch::default();
    for _ in 0..n {
        let mut obs = vec![rng.random_range(0.0..params.e_max()), rng.random_range(-1.0..1.0)];
        let hot = rng.random_range(0..g);
        obs.extend((0..g).map(|i| if i == hot { 1.0 } else { 0.0 }));
        let out = params.forward(&obs).unwrap();
        let eps: f64 = StandardNormal.sample(rng);
        let raw = out.mean + out.std * eps;
        let logp = cpr_core::learner::gaussian_log_prob(raw, out.mean, params.log_std());
        b.obs.push(obs);
        b.raw_actions.push(raw);
        b.old_log_probs.push(logp + rng.random_range(-0.1..0.1));
        b.old_means.push(out.mean + rng.random_range(-0.05..0.05));
        b.old_log_stds.push(params.log_std() + rng.random_range(-0.05..0.05));
        b.old_values.push(out.value + rng.random_range(-1.0..1.0));
        b.advantages.push(StandardNormal.sample(rng));
        b.returns.push(out.value + rng.random_range(-2.0..2.0));
    }
    b
}

/// Largest relative discrepancy between the analytic gradient of the total
/// loss and central finite differences with step `h`. Entries where both
/// magnitudes are below `floor` are compared against `floor` instead.
pub fn gradient_check(params: &PolicyParams, batch: &SampleBatch, hyper: &PpoHyper, h: f64, floor: f64) -> f64 {
    let idx: Vec<usize> = (0..batch.len()).collect();
    let flat = params.as_flat().to_vec();
    let (_, grad) = loss_and_grad(params, &flat, batch, &idx, hyper);
    let mut worst: f64 = 0.0;
    let mut x = flat.clone();
    for i in 0..flat.len() {
        x[i] = flat[i] + h;
        let up = loss(params, &x, batch, &idx, hyper).total;
        x[i] = flat[i] - h;
        let down = loss(params, &x, batch, &idx, hyper).total;
        x[i] = flat[i];
        let fd = (up - down) / (2.0 * h);
        let denom = grad[i].abs().max(fd.abs()).max(floor);
        worst = worst.max((grad[i] - fd).abs() / denom);
    }
    worst
}
