//! Multilayer-perceptron attack: fixed pyramid architecture
//! [n+1, 2^k/2, 2^k, 2^k/2, 1] with tanh hidden layers and a logistic
//! output, trained by mini-batch Adam on binary cross-entropy.

use std::time::Instant;

use rand::Rng;
use rand::seq::SliceRandom;
use rayon::prelude::*;

use crate::challenge::FeatureVector;
use crate::crp::CrpDataset;
use crate::error::{Error, Result};
use crate::rng::RngSeed;

use super::lr::dataset_features;
use super::{AttackReport, ResponseModel, evaluate_accuracy};

const P_EPS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    /// Row-major (outputs × inputs).
    pub w: Vec<f64>,
    pub b: Vec<f64>,
    pub inputs: usize,
    pub outputs: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    layers: Vec<Layer>,
    widths: Vec<usize>,
}

impl MlpModel {
    /// Builds the architecture for an n-stage target with k member APUFs.
    /// Hidden widths are 2^k/2, 2^k, 2^k/2; k is capped at 10 because the
    /// middle layer grows as 2^k.
    pub fn random(n: usize, k: usize, seed: RngSeed) -> Result<Self> {
        if k == 0 || k > 10 {
            return Err(Error::InvalidParameter(format!(
                "member count must lie in [1, 10], got {k}"
            )));
        }
        let mid = 1usize << k;
        let widths = vec![n + 1, (mid / 2).max(1), mid, (mid / 2).max(1), 1];
        let mut rng = seed.rng();
        let layers = widths
            .windows(2)
            .map(|pair| {
                let (inputs, outputs) = (pair[0], pair[1]);
                // Xavier-uniform initialization
                let bound = (6.0 / (inputs + outputs) as f64).sqrt();
                Layer {
                    w: (0..inputs * outputs).map(|_| rng.random_range(-bound..bound)).collect(),
                    b: vec![0.0; outputs],
                    inputs,
                    outputs,
                }
            })
            .collect();
        Ok(Self { layers, widths })
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    /// Hidden layer widths only (without input and output).
    pub fn hidden_widths(&self) -> (usize, usize, usize) {
        (self.widths[1], self.widths[2], self.widths[3])
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(|l| l.w.len() + l.b.len()).sum()
    }

    /// Forward pass returning every activation (input included).
    fn forward(&self, phi: &[f64]) -> Vec<Vec<f64>> {
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(phi.to_vec());
        for (li, layer) in self.layers.iter().enumerate() {
            let prev = &acts[li];
            let last = li + 1 == self.layers.len();
            let mut out = Vec::with_capacity(layer.outputs);
            for o in 0..layer.outputs {
                let z: f64 = layer.w[o * layer.inputs..(o + 1) * layer.inputs]
                    .iter()
                    .zip(prev)
                    .map(|(w, a)| w * a)
                    .sum::<f64>()
                    + layer.b[o];
                out.push(if last { sigmoid(z) } else { z.tanh() });
            }
            acts.push(out);
        }
        acts
    }
}

impl ResponseModel for MlpModel {
    fn response_probability(&self, phi: &FeatureVector) -> Result<f64> {
        if phi.len() != self.widths[0] {
            return Err(Error::DimensionMismatch { expected: self.widths[0], got: phi.len() });
        }
        Ok(self.forward(phi.phi()).last().expect("nonempty")[0])
    }
}

fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// Gradient buffer matching a model's layer shapes.
pub type MlpGrads = Vec<(Vec<f64>, Vec<f64>)>;

fn zero_grads(m: &MlpModel) -> MlpGrads {
    m.layers.iter().map(|l| (vec![0.0; l.w.len()], vec![0.0; l.b.len()])).collect()
}

/// Mean binary cross-entropy over a batch plus gradients for every weight
/// and bias, by plain backpropagation.
pub fn mlp_loss_grad(
    m: &MlpModel,
    phis: &[FeatureVector],
    responses: &[u8],
) -> Result<(f64, MlpGrads)> {
    if phis.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if phis.len() != responses.len() {
        return Err(Error::DimensionMismatch { expected: phis.len(), got: responses.len() });
    }
    let inv_n = 1.0 / phis.len() as f64;
    let mut loss = 0.0;
    let mut grads = zero_grads(m);
    for (phi, &r) in phis.iter().zip(responses) {
        if phi.len() != m.widths[0] {
            return Err(Error::DimensionMismatch { expected: m.widths[0], got: phi.len() });
        }
        let acts = m.forward(phi.phi());
        let p = acts.last().expect("nonempty")[0].clamp(P_EPS, 1.0 - P_EPS);
        loss -= if r == 1 { p.ln() } else { (1.0 - p).ln() };
        // logistic output + cross-entropy: delta = p − r
        let mut delta = vec![p - f64::from(r)];
        for li in (0..m.layers.len()).rev() {
            let layer = &m.layers[li];
            let prev = &acts[li];
            let (gw, gb) = &mut grads[li];
            for o in 0..layer.outputs {
                let d = delta[o] * inv_n;
                gb[o] += d;
                for (slot, a) in gw[o * layer.inputs..(o + 1) * layer.inputs]
                    .iter_mut()
                    .zip(prev)
                {
                    *slot += d * a;
                }
            }
            if li > 0 {
                // tanh derivative via the stored activation: 1 − a²
                let mut next = vec![0.0; layer.inputs];
                for (i, slot) in next.iter_mut().enumerate() {
                    let mut acc = 0.0;
                    for o in 0..layer.outputs {
                        acc += layer.w[o * layer.inputs + i] * delta[o];
                    }
                    *slot = acc * (1.0 - prev[i] * prev[i]);
                }
                delta = next;
            }
        }
    }
    Ok((loss * inv_n, grads))
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub trials: usize,
}

impl Default for MlpConfig {
    fn default() -> Self {
        Self { epochs: 60, batch_size: 256, learning_rate: 1e-3, trials: 2 }
    }
}

struct Adam {
    m: MlpGrads,
    v: MlpGrads,
    t: i32,
}

impl Adam {
    fn new(model: &MlpModel) -> Self {
        Self { m: zero_grads(model), v: zero_grads(model), t: 0 }
    }

    fn step(&mut self, model: &mut MlpModel, grads: &MlpGrads, lr: f64) {
        const B1: f64 = 0.9;
        const B2: f64 = 0.999;
        const EPS: f64 = 1e-8;
        self.t += 1;
        let bc1 = 1.0 - B1.powi(self.t);
        let bc2 = 1.0 - B2.powi(self.t);
        for (li, layer) in model.layers.iter_mut().enumerate() {
            let (gw, gb) = &grads[li];
            let (mw, mb) = &mut self.m[li];
            let (vw, vb) = &mut self.v[li];
            for (((w, g), m1), v1) in
                layer.w.iter_mut().zip(gw).zip(mw.iter_mut()).zip(vw.iter_mut())
            {
                *m1 = B1 * *m1 + (1.0 - B1) * g;
                *v1 = B2 * *v1 + (1.0 - B2) * g * g;
                *w -= lr * (*m1 / bc1) / ((*v1 / bc2).sqrt() + EPS);
            }
            for (((b, g), m1), v1) in
                layer.b.iter_mut().zip(gb).zip(mb.iter_mut()).zip(vb.iter_mut())
            {
                *m1 = B1 * *m1 + (1.0 - B1) * g;
                *v1 = B2 * *v1 + (1.0 - B2) * g * g;
                *b -= lr * (*m1 / bc1) / ((*v1 / bc2).sqrt() + EPS);
            }
        }
    }
}

fn train_one(
    n: usize,
    k: usize,
    phis: &[FeatureVector],
    responses: &[u8],
    config: &MlpConfig,
    seed: RngSeed,
) -> Result<MlpModel> {
    let mut model = MlpModel::random(n, k, seed)?;
    let mut adam = Adam::new(&model);
    let mut order: Vec<usize> = (0..phis.len()).collect();
    let mut shuffle_rng = seed.derive(1).rng();
    for epoch in 0..config.epochs {
        order.shuffle(&mut shuffle_rng);
        for batch in order.chunks(config.batch_size) {
            let bphis: Vec<FeatureVector> = batch.iter().map(|&i| phis[i].clone()).collect();
            let bresp: Vec<u8> = batch.iter().map(|&i| responses[i]).collect();
            let (loss, grads) = mlp_loss_grad(&model, &bphis, &bresp)?;
            if !loss.is_finite() {
                return Err(Error::Diverged(format!("non-finite loss at epoch {epoch}")));
            }
            adam.step(&mut model, &grads, config.learning_rate);
        }
    }
    Ok(model)
}

/// Trains `config.trials` networks and returns the best by test accuracy.
pub fn mlp_attack(
    train: &CrpDataset,
    test: &CrpDataset,
    topology: (usize, usize, usize),
    config: &MlpConfig,
    seed: RngSeed,
) -> Result<(MlpModel, AttackReport)> {
    if train.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let (x, y, z) = topology;
    let k = x + y + z;
    let start = Instant::now();
    let phis = dataset_features(train);
    let outcomes: Vec<Result<(MlpModel, f64)>> = (0..config.trials)
        .into_par_iter()
        .map(|t| {
            let model =
                train_one(train.stage_count, k, &phis, &train.responses, config, seed.derive(t as u64))?;
            let acc = evaluate_accuracy(&model, test)?;
            Ok((model, acc))
        })
        .collect();
    let mut best: Option<(MlpModel, f64)> = None;
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

#[cfg(test)]
mod tests {
    use super::*;
    use crate::challenge::{Challenge, transform_challenge};
    use crate::crp::collect_crps;
    use crate::puf::sample_oax;

    #[test]
    fn architecture_widths() {
        let m = MlpModel::random(64, 5, RngSeed::new(600)).unwrap();
        assert_eq!(m.widths(), &[65, 16, 32, 16, 1]);
        assert_eq!(m.hidden_widths(), (16, 32, 16));
        let m = MlpModel::random(64, 4, RngSeed::new(601)).unwrap();
        assert_eq!(m.hidden_widths(), (8, 16, 8));
    }

    #[test]
    fn rejects_oversized_member_count() {
        assert!(MlpModel::random(64, 11, RngSeed::new(602)).is_err());
        assert!(MlpModel::random(64, 0, RngSeed::new(603)).is_err());
    }

    #[test]
    fn forward_pass_is_a_probability() {
        let m = MlpModel::random(16, 3, RngSeed::new(604)).unwrap();
        let mut rng = RngSeed::new(605).rng();
        for _ in 0..100 {
            let phi = transform_challenge(&Challenge::random(16, &mut rng));
            let p = m.response_probability(&phi).unwrap();
            assert!((0.0..=1.0).contains(&p));
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let m = MlpModel::random(8, 2, RngSeed::new(610)).unwrap();
        let mut rng = RngSeed::new(611).rng();
        let phis: Vec<_> = (0..32)
            .map(|_| transform_challenge(&Challenge::random(8, &mut rng)))
            .collect();
        let responses: Vec<u8> = (0..32).map(|_| rng.random_range(0..=1)).collect();
        let (_, grads) = mlp_loss_grad(&m, &phis, &responses).unwrap();
        let h = 1e-5;
        for li in 0..m.layers().len() {
            for wi in 0..m.layers()[li].w.len() {
                let mut plus = m.clone();
                plus.layers_mut()[li].w[wi] += h;
                let mut minus = m.clone();
                minus.layers_mut()[li].w[wi] -= h;
                let fd = (mlp_loss_grad(&plus, &phis, &responses).unwrap().0
                    - mlp_loss_grad(&minus, &phis, &responses).unwrap().0)
                    / (2.0 * h);
                let g = grads[li].0[wi];
                let denom = fd.abs().max(g.abs()).max(1e-8);
                assert!(
                    ((g - fd) / denom).abs() < 1e-4,
                    "layer {li} weight {wi}: analytic {g} vs fd {fd}"
                );
            }
            for bi in 0..m.layers()[li].b.len() {
                let mut plus = m.clone();
                plus.layers_mut()[li].b[bi] += h;
                let mut minus = m.clone();
                minus.layers_mut()[li].b[bi] -= h;
                let fd = (mlp_loss_grad(&plus, &phis, &responses).unwrap().0
                    - mlp_loss_grad(&minus, &phis, &responses).unwrap().0)
                    / (2.0 * h);
                let g = grads[li].1[bi];
                let denom = fd.abs().max(g.abs()).max(1e-8);
                assert!(
                    ((g - fd) / denom).abs() < 1e-4,
                    "layer {li} bias {bi}: analytic {g} vs fd {fd}"
                );
            }
        }
    }

    #[test]
    fn learns_single_apuf() {
        let puf = sample_oax(0, 0, 1, 32, 0.0, RngSeed::new(620)).unwrap();
        let train = collect_crps(&puf, 6000, RngSeed::new(621));
        let test = collect_crps(&puf, 1500, RngSeed::new(622));
        let cfg = MlpConfig { epochs: 40, trials: 1, ..MlpConfig::default() };
        let (_, report) = mlp_attack(&train, &test, (0, 0, 1), &cfg, RngSeed::new(623)).unwrap();
        assert!(report.accuracy >= 0.93, "accuracy {}", report.accuracy);
    }

    #[test]
    fn is_deterministic() {
        let puf = sample_oax(0, 0, 1, 16, 0.0, RngSeed::new(630)).unwrap();
        let train = collect_crps(&puf, 1000, RngSeed::new(631));
        let test = collect_crps(&puf, 400, RngSeed::new(632));
        let cfg = MlpConfig { epochs: 5, trials: 2, ..MlpConfig::default() };
        let a = mlp_attack(&train, &test, (0, 0, 1), &cfg, RngSeed::new(633)).unwrap();
        let b = mlp_attack(&train, &test, (0, 0, 1), &cfg, RngSeed::new(633)).unwrap();
        assert_eq!(a.0, b.0);
        assert_eq!(a.1.trial_accuracies, b.1.trial_accuracies);
    }
}
