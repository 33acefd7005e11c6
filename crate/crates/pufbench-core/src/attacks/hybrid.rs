//! Hybrid attack: cross-entropy regression combined with a reliability
//! correlation reward and a between-row dissimilarity penalty, optimized
//! jointly over all modeled members by mini-batch Adam.
//!
//! loss = eps1·BCE − eps2·Σ_j |ρ(|w_j·Φ|, h)| + eps3·Σ_{j1<j2}|ρ(w_j1, w_j2)|

use std::time::Instant;

use rand::seq::SliceRandom;
use rayon::prelude::*;

use crate::challenge::FeatureVector;
use crate::crp::CrpDataset;
use crate::error::{Error, Result};
use crate::rng::RngSeed;

use super::lr::dataset_features;
use super::model::{SoftOaxModel, lr_loss_grad};
use super::{AttackReport, evaluate_accuracy};

#[derive(Debug, Clone, PartialEq)]
pub struct HybridConfig {
    pub eps1: f64,
    pub eps2: f64,
    pub eps3: f64,
    pub trials: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
}

impl Default for HybridConfig {
    fn default() -> Self {
        Self {
            eps1: 12.0,
            eps2: 1.0,
            eps3: 0.2,
            trials: 6,
            epochs: 60,
            batch_size: 256,
            learning_rate: 0.02,
        }
    }
}

/// Pearson correlation of `a` against `b` plus dρ/da_i, by the quotient
/// rule on the centered sums. A constant input contributes zero (no
/// direction to move in), not an error, so training never aborts on a
/// degenerate mini-batch.
fn pearson_with_grad(a: &[f64], b: &[f64]) -> (f64, Vec<f64>) {
    let n = a.len() as f64;
    let mean_a = a.iter().sum::<f64>() / n;
    let mean_b = b.iter().sum::<f64>() / n;
    let mut saa = 0.0;
    let mut sbb = 0.0;
    let mut sab = 0.0;
    for (&x, &y) in a.iter().zip(b) {
        saa += (x - mean_a) * (x - mean_a);
        sbb += (y - mean_b) * (y - mean_b);
        sab += (x - mean_a) * (y - mean_b);
    }
    if saa < 1e-30 || sbb < 1e-30 {
        return (0.0, vec![0.0; a.len()]);
    }
    let denom = (saa * sbb).sqrt();
    let rho = sab / denom;
    let grad = a
        .iter()
        .zip(b)
        .map(|(&x, &y)| ((y - mean_b) - rho * (sbb / saa).sqrt() * (x - mean_a)) / denom)
        .collect();
    (rho, grad)
}

/// Full hybrid loss and gradient over one batch. With eps2 = eps3 = 0 this
/// equals eps1 times the plain regression loss, gradients included.
pub fn hybrid_loss_grad(
    m: &SoftOaxModel,
    phis: &[FeatureVector],
    responses: &[u8],
    h: &[f64],
    config: &HybridConfig,
) -> Result<(f64, Vec<Vec<f64>>)> {
    if h.len() != phis.len() {
        return Err(Error::DimensionMismatch { expected: phis.len(), got: h.len() });
    }
    let (bce, mut grad) = lr_loss_grad(m, phis, responses)?;
    let mut loss = config.eps1 * bce;
    for row in grad.iter_mut() {
        for g in row.iter_mut() {
            *g *= config.eps1;
        }
    }

    if config.eps2 != 0.0 {
        // reward correlation between each row's |w·Φ| profile and h
        for (j, w) in m.rows().iter().enumerate() {
            let dots: Vec<f64> = phis
                .iter()
                .map(|phi| w.iter().zip(phi.phi()).map(|(a, b)| a * b).sum())
                .collect();
            let abs_dots: Vec<f64> = dots.iter().map(|d| d.abs()).collect();
            let (rho, drho) = pearson_with_grad(&abs_dots, h);
            loss -= config.eps2 * rho.abs();
            let sign_rho = if rho >= 0.0 { 1.0 } else { -1.0 };
            for ((phi, dot), dr) in phis.iter().zip(&dots).zip(&drho) {
                // d|w·Φ|/dw = sign(w·Φ)·Φ (measure-zero kink at 0 ignored)
                let chain = -config.eps2 * sign_rho * dr * dot.signum();
                for (g, f) in grad[j].iter_mut().zip(phi.phi()) {
                    *g += chain * f;
                }
            }
        }
    }

    if config.eps3 != 0.0 {
        // penalize similarity between different rows' weight vectors
        let k = m.rows().len();
        for j1 in 0..k {
            for j2 in j1 + 1..k {
                let (rho, d1) = pearson_with_grad(m.rows()[j1].as_slice(), m.rows()[j2].as_slice());
                let (_, d2) = pearson_with_grad(m.rows()[j2].as_slice(), m.rows()[j1].as_slice());
                loss += config.eps3 * rho.abs();
                let sign_rho = if rho >= 0.0 { 1.0 } else { -1.0 };
                for (g, d) in grad[j1].iter_mut().zip(&d1) {
                    *g += config.eps3 * sign_rho * d;
                }
                for (g, d) in grad[j2].iter_mut().zip(&d2) {
                    *g += config.eps3 * sign_rho * d;
                }
            }
        }
    }
    Ok((loss, grad))
}

struct Adam {
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: i32,
}

impl Adam {
    fn new(model: &SoftOaxModel) -> Self {
        Self { m: model.zeros_like(), v: model.zeros_like(), t: 0 }
    }

    fn step(&mut self, model: &mut SoftOaxModel, grad: &[Vec<f64>], lr: f64) {
        const B1: f64 = 0.9;
        const B2: f64 = 0.999;
        const EPS: f64 = 1e-8;
        self.t += 1;
        let bc1 = 1.0 - B1.powi(self.t);
        let bc2 = 1.0 - B2.powi(self.t);
        for (j, row) in model.rows_mut().iter_mut().enumerate() {
            for (d, w) in row.iter_mut().enumerate() {
                let g = grad[j][d];
                let m1 = &mut self.m[j][d];
                let v1 = &mut self.v[j][d];
                *m1 = B1 * *m1 + (1.0 - B1) * g;
                *v1 = B2 * *v1 + (1.0 - B2) * g * g;
                *w -= lr * (*m1 / bc1) / ((*v1 / bc2).sqrt() + EPS);
            }
        }
    }
}

fn train_one(
    topology: (usize, usize, usize),
    n: usize,
    phis: &[FeatureVector],
    responses: &[u8],
    h: &[f64],
    config: &HybridConfig,
    seed: RngSeed,
) -> Result<SoftOaxModel> {
    let mut model = SoftOaxModel::random(topology, n, seed)?;
    let mut adam = Adam::new(&model);
    let mut order: Vec<usize> = (0..phis.len()).collect();
    let mut shuffle_rng = seed.derive(1).rng();
    for epoch in 0..config.epochs {
        order.shuffle(&mut shuffle_rng);
        for batch in order.chunks(config.batch_size) {
            if batch.len() < 2 {
                continue; // correlation terms need at least two rows
            }
            let bphis: Vec<FeatureVector> = batch.iter().map(|&i| phis[i].clone()).collect();
            let bresp: Vec<u8> = batch.iter().map(|&i| responses[i]).collect();
            let bh: Vec<f64> = batch.iter().map(|&i| h[i]).collect();
            let (loss, grad) = hybrid_loss_grad(&model, &bphis, &bresp, &bh, config)?;
            if !loss.is_finite() {
                return Err(Error::Diverged(format!("non-finite loss at epoch {epoch}")));
            }
            adam.step(&mut model, &grad, config.learning_rate);
        }
    }
    Ok(model)
}

/// Trains `config.trials` independent models on responses plus reliability
/// hints; returns the best by test accuracy.
pub fn hybrid_attack(
    train: &CrpDataset,
    test: &CrpDataset,
    topology: (usize, usize, usize),
    config: &HybridConfig,
    seed: RngSeed,
) -> Result<(SoftOaxModel, AttackReport)> {
    if train.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let h = train.reliability_vector()?;
    let start = Instant::now();
    let phis = dataset_features(train);
    let outcomes: Vec<Result<(SoftOaxModel, f64)>> = (0..config.trials)
        .into_par_iter()
        .map(|t| {
            let model = train_one(
                topology,
                train.stage_count,
                &phis,
                &train.responses,
                &h.values,
                config,
                seed.derive(t as u64),
            )?;
            let acc = evaluate_accuracy(&model, test)?;
            Ok((model, acc))
        })
        .collect();
    let mut best: Option<(SoftOaxModel, f64)> = None;
    let mut trial_accuracies = Vec::with_capacity(config.trials);
    for outcome in outcomes {
        let (model, acc) = outcome?;
        trial_accuracies.push(acc);
        if best.as_ref().is_none_or(|(_, b)| acc > *b) {
            best = Some((model, acc));
        }
    }
    let (model, accuracy) = best.expect("trials >= 1");
    let report = AttackReport::from_accuracy(
        accuracy,
        start.elapsed().as_secs_f64(),
        None,
        trial_accuracies,
    );
    Ok((model, report))
}
