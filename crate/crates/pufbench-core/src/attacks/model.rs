//! Differentiable soft-logic relaxation of the OR-AND-XOR composition.
//!
//! Each modeled member is a linear boundary w_i; its soft response is
//! p_i = σ(−w_i·Φ). Block outputs combine as products of probabilities,
//! which is exact in the 0/1 limit and reduces to the plain product
//! boundary for pure-XOR topologies.

use crate::challenge::FeatureVector;
use crate::error::{Error, Result};
use crate::rng::RngSeed;
use rand_distr::{Distribution, Normal};

use super::ResponseModel;

/// Probability clamp keeping the cross-entropy finite.
const P_EPS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct SoftOaxModel {
    /// One row of n+1 weights per modeled member, OR then AND then XOR.
    rows: Vec<Vec<f64>>,
    topology: (usize, usize, usize),
}

impl SoftOaxModel {
    pub fn new(rows: Vec<Vec<f64>>, topology: (usize, usize, usize)) -> Result<Self> {
        let (x, y, z) = topology;
        if x + y + z == 0 {
            return Err(Error::EmptyTopology);
        }
        if rows.len() != x + y + z {
            return Err(Error::DimensionMismatch { expected: x + y + z, got: rows.len() });
        }
        let dim = rows[0].len();
        if dim < 2 || rows.iter().any(|r| r.len() != dim) {
            return Err(Error::InvalidParameter(
                "all weight rows must share one dimension >= 2".into(),
            ));
        }
        Ok(Self { rows, topology })
    }

    /// Random initialization with i.i.d. N(0, 1) weights.
    pub fn random(topology: (usize, usize, usize), n: usize, seed: RngSeed) -> Result<Self> {
        let (x, y, z) = topology;
        if x + y + z == 0 {
            return Err(Error::EmptyTopology);
        }
        let mut rng = seed.rng();
        let normal = Normal::new(0.0, 1.0).expect("valid stddev");
        let rows = (0..x + y + z)
            .map(|_| (0..=n).map(|_| normal.sample(&mut rng)).collect())
            .collect();
        Self::new(rows, topology)
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn rows_mut(&mut self) -> &mut [Vec<f64>] {
        &mut self.rows
    }

    pub fn topology(&self) -> (usize, usize, usize) {
        self.topology
    }

    pub fn dim(&self) -> usize {
        self.rows[0].len()
    }

    /// Zero-valued gradient buffer with this model's shape.
    pub fn zeros_like(&self) -> Vec<Vec<f64>> {
        self.rows.iter().map(|r| vec![0.0; r.len()]).collect()
    }

    fn member_probs(&self, phi: &FeatureVector) -> Result<Vec<f64>> {
        if phi.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: phi.len() });
        }
        Ok(self
            .rows
            .iter()
            .map(|w| {
                let a: f64 = w.iter().zip(phi.phi()).map(|(wi, pi)| wi * pi).sum();
                sigmoid(-a)
            })
            .collect())
    }
}

impl ResponseModel for SoftOaxModel {
    fn response_probability(&self, phi: &FeatureVector) -> Result<f64> {
        soft_response_probability(self, phi)
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

/// P(response = 1) under the soft-logic relaxation.
///
/// With per-member p_i = σ(−w_i·Φ): q_or = 1−∏(1−p_i), q_and = ∏p_i,
/// q_xor = (1−∏(1−2p_i))/2, empty blocks give q = 0, and the blocks merge
/// by the parity identity (1−(1−2q_or)(1−2q_and)(1−2q_xor))/2.
pub fn soft_response_probability(m: &SoftOaxModel, phi: &FeatureVector) -> Result<f64> {
    let p = m.member_probs(phi)?;
    let (x, y, _z) = m.topology;
    // (1−2q) per block; empty block → q = 0 → factor 1
    let s_or: f64 = 2.0 * p[..x].iter().map(|pi| 1.0 - pi).product::<f64>() - 1.0;
    let s_or = if x == 0 { 1.0 } else { s_or };
    let s_and: f64 = 1.0 - 2.0 * p[x..x + y].iter().product::<f64>();
    let s_and = if y == 0 { 1.0 } else { s_and };
    let s_xor: f64 = p[x + y..].iter().map(|pi| 1.0 - 2.0 * pi).product();
    Ok((1.0 - s_or * s_and * s_xor) / 2.0)
}

/// Mean binary cross-entropy of the soft response against observed bits,
/// plus its gradient with respect to every weight. This is the whole loss
/// of the plain regression attack and term one of the hybrid loss.
pub fn lr_loss_grad(
    m: &SoftOaxModel,
    phis: &[FeatureVector],
    responses: &[u8],
) -> Result<(f64, Vec<Vec<f64>>)> {
    if phis.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if phis.len() != responses.len() {
        return Err(Error::DimensionMismatch { expected: phis.len(), got: responses.len() });
    }
    let (x, y, _z) = m.topology;
    let k = m.rows.len();
    let inv_n = 1.0 / phis.len() as f64;
    let mut loss = 0.0;
    let mut grad = m.zeros_like();
    // leave-one-out factors per block, rebuilt per sample (blocks are small)
    let mut dp = vec![0.0; k];
    for (phi, &r) in phis.iter().zip(responses) {
        let p = m.member_probs(phi)?;
        let s_or_prod: f64 = p[..x].iter().map(|pi| 1.0 - pi).product();
        let s_and_prod: f64 = p[x..x + y].iter().product();
        let s_or = if x == 0 { 1.0 } else { 2.0 * s_or_prod - 1.0 };
        let s_and = if y == 0 { 1.0 } else { 1.0 - 2.0 * s_and_prod };
        let s_xor: f64 = p[x + y..].iter().map(|pi| 1.0 - 2.0 * pi).product();
        let prob = ((1.0 - s_or * s_and * s_xor) / 2.0).clamp(P_EPS, 1.0 - P_EPS);
        loss -= if r == 1 { prob.ln() } else { (1.0 - prob).ln() };
        // dL/dP for Bernoulli targets
        let dl_dp = (prob - f64::from(r)) / (prob * (1.0 - prob));
        // dP/dp_j per member: leave-one-out product times the other blocks
        for j in 0..x {
            let loo: f64 = p[..x]
                .iter()
                .enumerate()
                .filter(|(i, _)| *i != j)
                .map(|(_, pi)| 1.0 - pi)
                .product();
            dp[j] = loo * s_and * s_xor;
        }
        for j in x..x + y {
            let loo: f64 = p[x..x + y]
                .iter()
                .enumerate()
                .filter(|(i, _)| *i != j - x)
                .map(|(_, pi)| *pi)
                .product();
            dp[j] = s_or * loo * s_xor;
        }
        for j in x + y..k {
            let loo: f64 = p[x + y..]
                .iter()
                .enumerate()
                .filter(|(i, _)| *i != j - x - y)
                .map(|(_, pi)| 1.0 - 2.0 * pi)
                .product();
            dp[j] = s_or * s_and * loo;
        }
        for j in 0..k {
            // dp_j/da_j for p = σ(−a)
            let chain = dl_dp * dp[j] * (-p[j] * (1.0 - p[j])) * inv_n;
            for (g, f) in grad[j].iter_mut().zip(phi.phi()) {
                *g += chain * f;
            }
        }
    }
    Ok((loss * inv_n, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::challenge::{Challenge, transform_challenge};
    use crate::puf::sample_oax;
    use crate::rng::RngSeed;
    use rand::Rng;

    fn random_phis(count: usize, n: usize, seed: u64) -> Vec<FeatureVector> {
        let mut rng = RngSeed::new(seed).rng();
        (0..count)
            .map(|_| transform_challenge(&Challenge::random(n, &mut rng)))
            .collect()
    }

    #[test]
    fn zero_rows_give_total_uncertainty() {
        let m = SoftOaxModel::new(vec![vec![0.0; 9]; 4], (1, 1, 2)).unwrap();
        for phi in random_phis(20, 8, 400) {
            assert_eq!(soft_response_probability(&m, &phi).unwrap(), 0.5);
        }
    }

    #[test]
    fn certain_xor_pair_gives_zero() {
        // two rows with huge negative boundary: p_i → 1, XOR of two 1s → 0
        let phi = transform_challenge(&Challenge::new(vec![0; 4]).unwrap());
        let m = SoftOaxModel::new(vec![vec![1000.0; 5]; 2], (0, 0, 2)).unwrap();
        let p = soft_response_probability(&m, &phi).unwrap();
        assert!(p < 1e-9, "p = {p}");
    }

    #[test]
    fn pure_xor_sign_matches_product_boundary() {
        let mut rng = RngSeed::new(401).rng();
        for k in 1..=4 {
            let m = SoftOaxModel::random((0, 0, k), 8, RngSeed::new(402 + k as u64)).unwrap();
            for _ in 0..200 {
                let phi = transform_challenge(&Challenge::random(8, &mut rng));
                let product: f64 = m
                    .rows()
                    .iter()
                    .map(|w| w.iter().zip(phi.phi()).map(|(a, b)| a * b).sum::<f64>())
                    .product();
                let p = soft_response_probability(&m, &phi).unwrap();
                assert_eq!(
                    0.5 - p > 0.0,
                    product > 0.0,
                    "sign of (0.5 − p) must match the member delay product"
                );
            }
        }
    }

    #[test]
    fn thresholded_soft_model_matches_hard_xor_exhaustively() {
        let m = SoftOaxModel::random((0, 0, 3), 6, RngSeed::new(410)).unwrap();
        for i in 0..1u64 << 6 {
            let phi = transform_challenge(&Challenge::from_index(i, 6));
            let p = soft_response_probability(&m, &phi).unwrap();
            if (p - 0.5).abs() < 1e-12 {
                continue;
            }
            let hard: u8 = m
                .rows()
                .iter()
                .map(|w| {
                    let a: f64 = w.iter().zip(phi.phi()).map(|(x, y)| x * y).sum();
                    u8::from(a < 0.0)
                })
                .fold(0, |acc, b| acc ^ b);
            assert_eq!(u8::from(p >= 0.5), hard);
        }
    }

    #[test]
    fn true_weights_predict_noiseless_xor_exactly() {
        // for pure-XOR topologies the soft model's sign equals the hard
        // XOR at any weight scale, so the generating weights score 1.0
        let puf = sample_oax(0, 0, 3, 10, 0.0, RngSeed::new(420)).unwrap();
        let rows = puf.members().map(|a| a.weights().to_vec()).collect();
        let m = SoftOaxModel::new(rows, puf.topology()).unwrap();
        let test = crate::crp::collect_crps(&puf, 2000, RngSeed::new(421));
        let acc = super::super::evaluate_accuracy(&m, &test).unwrap();
        assert_eq!(acc, 1.0);
    }

    #[test]
    fn scaled_true_weights_predict_mixed_topology() {
        // OR/AND blocks mix member probabilities, so raw weights are only
        // approximate; in the large-scale limit the soft logic hardens and
        // the generating weights become exact
        let puf = sample_oax(1, 2, 1, 10, 0.0, RngSeed::new(425)).unwrap();
        let rows = puf
            .members()
            .map(|a| a.weights().iter().map(|w| w * 1e4).collect())
            .collect();
        let m = SoftOaxModel::new(rows, puf.topology()).unwrap();
        let test = crate::crp::collect_crps(&puf, 2000, RngSeed::new(426));
        let acc = super::super::evaluate_accuracy(&m, &test).unwrap();
        assert_eq!(acc, 1.0);
    }

    #[test]
    fn random_model_near_chance_on_balanced_data() {
        let puf = sample_oax(0, 0, 2, 12, 0.0, RngSeed::new(430)).unwrap();
        let test = crate::crp::collect_crps(&puf, 4000, RngSeed::new(431));
        let mut accs = Vec::new();
        for i in 0..5 {
            let m = SoftOaxModel::random((0, 0, 2), 12, RngSeed::new(440 + i)).unwrap();
            accs.push(super::super::evaluate_accuracy(&m, &test).unwrap());
        }
        let mean = accs.iter().sum::<f64>() / accs.len() as f64;
        assert!((mean - 0.5).abs() < 0.06, "mean chance accuracy {mean}");
    }

    #[test]
    fn row_count_must_match_topology() {
        assert!(SoftOaxModel::new(vec![vec![0.0; 5]; 2], (1, 1, 1)).is_err());
    }

    #[test]
    fn loss_decreases_along_negative_gradient() {
        let m = SoftOaxModel::random((1, 1, 1), 8, RngSeed::new(450)).unwrap();
        let phis = random_phis(200, 8, 451);
        let mut rng = RngSeed::new(452).rng();
        let responses: Vec<u8> = (0..200).map(|_| rng.random_range(0..=1)).collect();
        let (loss, grad) = lr_loss_grad(&m, &phis, &responses).unwrap();
        let mut stepped = m.clone();
        for (row, grow) in stepped.rows_mut().iter_mut().zip(&grad) {
            for (w, g) in row.iter_mut().zip(grow) {
                *w -= 1e-3 * g;
            }
        }
        let (loss2, _) = lr_loss_grad(&stepped, &phis, &responses).unwrap();
        assert!(loss2 < loss, "{loss2} !< {loss}");
    }

    #[test]
    fn lr_gradient_matches_finite_differences() {
        let m = SoftOaxModel::random((1, 1, 2), 6, RngSeed::new(460)).unwrap();
        let phis = random_phis(64, 6, 461);
        let mut rng = RngSeed::new(462).rng();
        let responses: Vec<u8> = (0..64).map(|_| rng.random_range(0..=1)).collect();
        let (_, grad) = lr_loss_grad(&m, &phis, &responses).unwrap();
        let h = 1e-5;
        for j in 0..m.rows().len() {
            for d in 0..m.dim() {
                let mut plus = m.clone();
                plus.rows_mut()[j][d] += h;
                let mut minus = m.clone();
                minus.rows_mut()[j][d] -= h;
                let fd = (lr_loss_grad(&plus, &phis, &responses).unwrap().0
                    - lr_loss_grad(&minus, &phis, &responses).unwrap().0)
                    / (2.0 * h);
                let g = grad[j][d];
                let denom = fd.abs().max(g.abs()).max(1e-8);
                assert!(
                    ((g - fd) / denom).abs() < 1e-4,
                    "row {j} dim {d}: analytic {g} vs fd {fd}"
                );
            }
        }
    }

    #[test]
    fn empty_batch_rejected() {
        let m = SoftOaxModel::random((0, 0, 1), 4, RngSeed::new(470)).unwrap();
        assert!(lr_loss_grad(&m, &[], &[]).is_err());
    }
}
