//! Reliability-based divide-and-conquer attack driven by a covariance
//! matrix adaptation evolution strategy (CMA-ES).
//!
//! Each run searches the (n+2)-dimensional space of one member boundary w
//! plus an error band ε. A candidate's hypothetical stability h̃_i = 1 iff
//! |w·Φ_i| ≥ ε; fitness is |Pearson(h̃, h)| against the measured
//! reliability hints. Converged runs model one member APUF each.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::challenge::{Challenge, transform_challenge};
use crate::crp::CrpDataset;
use crate::error::{Error, Result};
use crate::puf::OaxPuf;
use crate::rng::RngSeed;

use super::{AttackReport, pearson};

/// One evolved model: member boundary, error band, and its fitness.
#[derive(Debug, Clone, PartialEq)]
pub struct EsCandidate {
    /// Learned boundary, normalized to unit Euclidean norm (fitness is
    /// invariant under joint positive scaling of w and ε).
    pub w: Vec<f64>,
    pub epsilon: f64,
    /// |Pearson(h̃, h)| at the reported (w, ε).
    pub fitness: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CmaesConfig {
    pub max_iters: usize,
    /// Stop when 1 − fitness drops below this residual.
    pub fitness_tol: f64,
    /// Stop when the best fitness has not improved for this many iterations.
    pub stagnation_window: usize,
    pub sigma0: f64,
    /// Noiseless CRPs used for accuracy evaluation and member attribution.
    pub eval_crps: usize,
}

impl Default for CmaesConfig {
    fn default() -> Self {
        Self {
            max_iters: 30_000,
            fitness_tol: 1e-10,
            stagnation_window: 500,
            sigma0: 1.0,
            eval_crps: 10_000,
        }
    }
}

/// Response agreement threshold for attributing a converged run to one
/// true member.
const ATTRIBUTION_THRESHOLD: f64 = 0.9;

struct Objective<'a> {
    /// Row-major features, rows of length `dim_w`.
    features: &'a [f64],
    dim_w: usize,
    h: &'a [f64],
}

impl Objective<'_> {
    /// 1 − |Pearson(h̃, h)|; a degenerate (constant) h̃ scores worst.
    fn cost(&self, cand: &[f64]) -> f64 {
        let (w, eps) = cand.split_at(self.dim_w);
        let eps = eps[0].abs();
        let htilde: Vec<f64> = self
            .features
            .chunks_exact(self.dim_w)
            .map(|row| {
                let a: f64 = row.iter().zip(w).map(|(f, wi)| f * wi).sum();
                f64::from(a.abs() >= eps)
            })
            .collect();
        match pearson(&htilde, self.h) {
            Ok(rho) => 1.0 - rho.abs(),
            Err(_) => 1.0,
        }
    }
}

/// Standard CMA-ES minimizer state for one run.
struct CmaEs {
    dim: usize,
    lambda: usize,
    mu: usize,
    weights: Vec<f64>,
    mu_eff: f64,
    cc: f64,
    cs: f64,
    c1: f64,
    cmu: f64,
    damps: f64,
    chi_n: f64,
    mean: DVector<f64>,
    sigma: f64,
    cov: DMatrix<f64>,
    p_sigma: DVector<f64>,
    p_cov: DVector<f64>,
}

impl CmaEs {
    fn new(mean: DVector<f64>, sigma: f64) -> Self {
        let dim = mean.len();
        let d = dim as f64;
        let lambda = 4 + (3.0 * d.ln()).floor() as usize;
        let mu = lambda / 2;
        let mut weights: Vec<f64> =
            (1..=mu).map(|i| ((mu as f64) + 0.5).ln() - (i as f64).ln()).collect();
        let sum: f64 = weights.iter().sum();
        for w in &mut weights {
            *w /= sum;
        }
        let mu_eff = 1.0 / weights.iter().map(|w| w * w).sum::<f64>();
        let cc = (4.0 + mu_eff / d) / (d + 4.0 + 2.0 * mu_eff / d);
        let cs = (mu_eff + 2.0) / (d + mu_eff + 5.0);
        let c1 = 2.0 / ((d + 1.3).powi(2) + mu_eff);
        let cmu = (1.0 - c1)
            .min(2.0 * (mu_eff - 2.0 + 1.0 / mu_eff) / ((d + 2.0).powi(2) + mu_eff));
        let damps = 1.0 + 2.0 * (((mu_eff - 1.0) / (d + 1.0)).sqrt() - 1.0).max(0.0) + cs;
        let chi_n = d.sqrt() * (1.0 - 1.0 / (4.0 * d) + 1.0 / (21.0 * d * d));
        Self {
            dim,
            lambda,
            mu,
            weights,
            mu_eff,
            cc,
            cs,
            c1,
            cmu,
            damps,
            chi_n,
            mean,
            sigma: sigma.max(f64::MIN_POSITIVE),
            cov: DMatrix::identity(dim, dim),
            p_sigma: DVector::zeros(dim),
            p_cov: DVector::zeros(dim),
        }
    }

    /// One generation. Returns the best (cost, candidate) of the batch.
    fn step(&mut self, obj: &Objective, rng: &mut impl rand::Rng) -> (f64, Vec<f64>) {
        // eigendecomposition C = B diag(d²) Bᵀ; dims are small (n+2)
        let eig = self.cov.clone().symmetric_eigen();
        let d_sqrt: DVector<f64> = eig.eigenvalues.map(|v| v.max(1e-30).sqrt());
        let b = &eig.eigenvectors;

        let zs: Vec<DVector<f64>> = (0..self.lambda)
            .map(|_| {
                DVector::from_iterator(
                    self.dim,
                    (0..self.dim).map(|_| StandardNormal.sample(rng)),
                )
            })
            .collect();
        let ys: Vec<DVector<f64>> =
            zs.iter().map(|z| b * z.component_mul(&d_sqrt)).collect();
        let xs: Vec<DVector<f64>> =
            ys.iter().map(|y| &self.mean + self.sigma * y).collect();

        let mut scored: Vec<(f64, usize)> = xs
            .par_iter()
            .enumerate()
            .map(|(i, x)| (obj.cost(x.as_slice()), i))
            .collect();
        scored.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));

        let mut new_mean = DVector::zeros(self.dim);
        let mut y_w = DVector::zeros(self.dim);
        let mut z_w = DVector::zeros(self.dim);
        for (rank, &(_, idx)) in scored[..self.mu].iter().enumerate() {
            let w = self.weights[rank];
            new_mean += w * &xs[idx];
            y_w += w * &ys[idx];
            z_w += w * &zs[idx];
        }
        self.mean = new_mean;

        // C^(-1/2)·(m_new − m_old)/σ expressed through the sampled z's
        let c_inv_sqrt_step = b * &z_w;
        self.p_sigma = (1.0 - self.cs) * &self.p_sigma
            + (self.cs * (2.0 - self.cs) * self.mu_eff).sqrt() * c_inv_sqrt_step;
        let ps_norm = self.p_sigma.norm();
        let h_sigma = f64::from(
            ps_norm / (1.0 - (1.0 - self.cs).powi(2)).sqrt() / self.chi_n
                < 1.4 + 2.0 / (self.dim as f64 + 1.0),
        );
        self.p_cov = (1.0 - self.cc) * &self.p_cov
            + h_sigma * (self.cc * (2.0 - self.cc) * self.mu_eff).sqrt() * &y_w;

        let mut rank_mu = DMatrix::zeros(self.dim, self.dim);
        for (rank, &(_, idx)) in scored[..self.mu].iter().enumerate() {
            rank_mu += self.weights[rank] * (&ys[idx] * ys[idx].transpose());
        }
        let delta_h = (1.0 - h_sigma) * self.cc * (2.0 - self.cc);
        self.cov = (1.0 - self.c1 - self.cmu) * &self.cov
            + self.c1 * (&self.p_cov * self.p_cov.transpose() + delta_h * &self.cov)
            + self.cmu * rank_mu;
        // keep C symmetric against drift
        self.cov = (&self.cov + self.cov.transpose()) * 0.5;

        self.sigma *= ((self.cs / self.damps) * (ps_norm / self.chi_n - 1.0)).exp();

        let (best_cost, best_idx) = scored[0];
        (best_cost, xs[best_idx].as_slice().to_vec())
    }
}

fn run_single(
    obj: &Objective,
    dim_w: usize,
    config: &CmaesConfig,
    seed: RngSeed,
) -> (Vec<f64>, f64, usize) {
    let mut rng = seed.rng();
    // initial mean: standard-normal boundary, ε at the mean |w·Φ| it induces
    let w0: Vec<f64> = (0..dim_w).map(|_| StandardNormal.sample(&mut rng)).collect();
    let eps0 = {
        let mut acc = 0.0;
        let mut rows = 0usize;
        for row in obj.features.chunks_exact(dim_w) {
            acc += row.iter().zip(&w0).map(|(f, w)| f * w).sum::<f64>().abs();
            rows += 1;
        }
        acc / rows as f64
    };
    let mut mean = w0;
    mean.push(eps0);
    let mut es = CmaEs::new(DVector::from_vec(mean), config.sigma0);

    let mut best_cost = f64::INFINITY;
    let mut best_cand: Vec<f64> = Vec::new();
    let mut last_improvement = 0usize;
    let mut iters = 0usize;
    for iter in 0..config.max_iters {
        iters = iter + 1;
        let (cost, cand) = es.step(obj, &mut rng);
        if cost < best_cost - config.fitness_tol {
            best_cost = cost;
            best_cand = cand;
            last_improvement = iter;
        }
        if best_cost < config.fitness_tol {
            break;
        }
        if iter - last_improvement >= config.stagnation_window {
            break;
        }
    }
    (best_cand, 1.0 - best_cost, iters)
}

/// Runs `runs` independent evolution-strategy searches against one PUF's
/// reliability data. Each run reports the accuracy of its best candidate
/// against the true member it matches most closely (noiseless responses),
/// with attribution when the agreement clears 90%.
pub fn cmaes_reliability_attack(
    puf: &OaxPuf,
    train: &CrpDataset,
    runs: usize,
    config: &CmaesConfig,
    seed: RngSeed,
) -> Result<Vec<(EsCandidate, AttackReport)>> {
    if runs == 0 {
        return Err(Error::InvalidParameter("runs must be positive".into()));
    }
    let h = train.reliability_vector()?;
    if h.values.iter().all(|v| v == &h.values[0]) {
        return Err(Error::UndefinedCorrelation);
    }
    let dim_w = train.stage_count + 1;
    let mut features = Vec::with_capacity(train.len() * dim_w);
    for c in &train.challenges {
        features.extend_from_slice(transform_challenge(c).phi());
    }
    let obj = Objective { features: &features, dim_w, h: &h.values };

    // shared noiseless evaluation set for accuracy and attribution
    let eval_seed = seed.derive(u64::MAX - 1);
    let mut eval_rng = eval_seed.rng();
    let eval_phis: Vec<_> = (0..config.eval_crps)
        .map(|_| transform_challenge(&Challenge::random(train.stage_count, &mut eval_rng)))
        .collect();
    let member_bits: Vec<Vec<u8>> = puf
        .members()
        .map(|m| {
            eval_phis
                .iter()
                .map(|phi| m.eval(phi, false, &mut eval_rng).expect("stage counts match"))
                .collect()
        })
        .collect();

    let results: Vec<(EsCandidate, AttackReport)> = (0..runs)
        .into_par_iter()
        .map(|r| {
            let start = Instant::now();
            let (cand, fitness, _iters) = run_single(&obj, dim_w, config, seed.derive(r as u64));
            let (w_raw, eps_raw) = cand.split_at(dim_w);
            let norm = w_raw.iter().map(|v| v * v).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
            let candidate = EsCandidate {
                w: w_raw.iter().map(|v| v / norm).collect(),
                epsilon: eps_raw[0].abs() / norm,
                fitness,
            };
            // agreement with each true member on the shared noiseless set
            let predictions: Vec<u8> = eval_phis
                .iter()
                .map(|phi| {
                    let a: f64 =
                        candidate.w.iter().zip(phi.phi()).map(|(w, f)| w * f).sum();
                    u8::from(a < 0.0)
                })
                .collect();
            let mut best_member = 0usize;
            let mut best_signed = 0.5;
            let mut best_score = -1.0;
            for (j, bits) in member_bits.iter().enumerate() {
                let agree = predictions
                    .iter()
                    .zip(bits)
                    .filter(|(a, b)| a == b)
                    .count() as f64
                    / predictions.len() as f64;
                let score = agree.max(1.0 - agree);
                if score > best_score {
                    best_score = score;
                    best_signed = agree;
                    best_member = j;
                }
            }
            let attributed = (best_score >= ATTRIBUTION_THRESHOLD).then_some(best_member);
            let report = AttackReport::from_accuracy(
                best_signed,
                start.elapsed().as_secs_f64(),
                attributed,
                vec![best_signed],
            );
            (candidate, report)
        })
        .collect();
    Ok(results)
}
