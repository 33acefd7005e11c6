//! Arbiter PUF simulation via the linear additive delay model, and the
//! OR-AND-XOR composition built on top of it.

use crate::challenge::{Challenge, FeatureVector, transform_challenge};
use crate::error::{Error, Result};
use crate::rng::RngSeed;
use crate::stats::normal_tail;
use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

/// One simulated arbiter PUF: a nominal weight vector plus the magnitude of
/// the per-evaluation Gaussian weight noise. Immutable after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct ApufInstance {
    weights: Vec<f64>,
    sigma_noise: f64,
    stage_count: usize,
}

impl ApufInstance {
    pub fn new(weights: Vec<f64>, sigma_noise: f64) -> Result<Self> {
        if weights.len() < 2 {
            return Err(Error::InvalidParameter(
                "weight vector needs at least 2 entries (n >= 1)".into(),
            ));
        }
        if sigma_noise < 0.0 || !sigma_noise.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "sigma_noise must be a nonnegative real, got {sigma_noise}"
            )));
        }
        let stage_count = weights.len() - 1;
        Ok(Self { weights, sigma_noise, stage_count })
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn sigma_noise(&self) -> f64 {
        self.sigma_noise
    }

    pub fn stage_count(&self) -> usize {
        self.stage_count
    }

    pub fn set_sigma_noise(&mut self, sigma_noise: f64) -> Result<()> {
        if sigma_noise < 0.0 || !sigma_noise.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "sigma_noise must be a nonnegative real, got {sigma_noise}"
            )));
        }
        self.sigma_noise = sigma_noise;
        Ok(())
    }

    /// Delay difference Δ = (w + η)·Φ, with η a fresh i.i.d. N(0, σ_noise²)
    /// draw per weight when `noisy`. Every Φ entry is ±1, so η·Φ collapses
    /// to a single N(0, σ_noise²·(n+1)) draw.
    pub fn delay_delta(&self, phi: &FeatureVector, noisy: bool, rng: &mut impl Rng) -> Result<f64> {
        if phi.len() != self.weights.len() {
            return Err(Error::DimensionMismatch {
                expected: self.weights.len(),
                got: phi.len(),
            });
        }
        let mut delta: f64 = self
            .weights
            .iter()
            .zip(phi.phi())
            .map(|(w, p)| w * p)
            .sum();
        if noisy && self.sigma_noise > 0.0 {
            let std = self.sigma_noise * (self.weights.len() as f64).sqrt();
            let z: f64 = StandardNormal.sample(rng);
            delta += std * z;
        }
        Ok(delta)
    }

    /// Response bit: 1 if Δ < 0, else 0 (Δ = 0 falls in the 0 branch).
    pub fn eval(&self, phi: &FeatureVector, noisy: bool, rng: &mut impl Rng) -> Result<u8> {
        Ok(u8::from(self.delay_delta(phi, noisy, rng)? < 0.0))
    }
}

/// Samples an APUF with i.i.d. standard-normal weights.
pub fn sample_apuf(n: usize, sigma_noise: f64, seed: RngSeed) -> Result<ApufInstance> {
    if n == 0 {
        return Err(Error::InvalidParameter("stage count must be positive".into()));
    }
    let mut rng = seed.rng();
    let normal = Normal::new(0.0, 1.0).expect("valid stddev");
    let weights = (0..=n).map(|_| normal.sample(&mut rng)).collect();
    ApufInstance::new(weights, sigma_noise)
}

/// Expected noisy-vs-noiseless bit error rate of this instance, computed by
/// averaging the exact per-challenge flip probability over `probes` random
/// challenges. Deterministic for a fixed seed.
pub fn expected_apuf_ber(apuf: &ApufInstance, probes: usize, seed: RngSeed) -> f64 {
    expected_ber_at_sigma(apuf, apuf.sigma_noise, probes, seed)
}

fn expected_ber_at_sigma(apuf: &ApufInstance, sigma: f64, probes: usize, seed: RngSeed) -> f64 {
    if sigma == 0.0 {
        return 0.0;
    }
    let mut rng = seed.rng();
    let n = apuf.stage_count();
    let noise_std = sigma * ((n + 1) as f64).sqrt();
    let mut acc = 0.0;
    for _ in 0..probes {
        let c = Challenge::random(n, &mut rng);
        let phi = transform_challenge(&c);
        let delta: f64 = apuf
            .weights()
            .iter()
            .zip(phi.phi())
            .map(|(w, p)| w * p)
            .sum();
        acc += normal_tail(delta.abs() / noise_std);
    }
    acc / probes as f64
}

/// Adjusts `sigma_noise` so the expected BER of this instance hits `target`.
/// Solved by bisection on the monotone expected-BER curve.
pub fn tune_noise_to_ber(apuf: &mut ApufInstance, target: f64, probes: usize, seed: RngSeed) -> Result<()> {
    if !(0.0..0.5).contains(&target) {
        return Err(Error::InvalidParameter(format!(
            "target BER must lie in [0, 0.5), got {target}"
        )));
    }
    if target == 0.0 {
        apuf.set_sigma_noise(0.0)?;
        return Ok(());
    }
    let mut lo = 0.0f64;
    let mut hi = 1.0f64;
    while expected_ber_at_sigma(apuf, hi, probes, seed) < target {
        hi *= 2.0;
        if hi > 1e6 {
            return Err(Error::Diverged("noise calibration failed to bracket target".into()));
        }
    }
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if expected_ber_at_sigma(apuf, mid, probes, seed) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    apuf.set_sigma_noise(0.5 * (lo + hi))
}

/// An (x,y,z)-OAX-PUF: three ordered banks of APUFs whose block outputs
/// (OR, AND, XOR) are XORed into one response bit. An empty OR block and an
/// empty AND block each contribute 0, which makes the (0,0,l) topology
/// bit-identical to an l-input XOR of its members.
#[derive(Debug, Clone, PartialEq)]
pub struct OaxPuf {
    or_block: Vec<ApufInstance>,
    and_block: Vec<ApufInstance>,
    xor_block: Vec<ApufInstance>,
}

impl OaxPuf {
    pub fn new(
        or_block: Vec<ApufInstance>,
        and_block: Vec<ApufInstance>,
        xor_block: Vec<ApufInstance>,
    ) -> Result<Self> {
        if or_block.is_empty() && and_block.is_empty() && xor_block.is_empty() {
            return Err(Error::EmptyTopology);
        }
        let n = or_block
            .iter()
            .chain(&and_block)
            .chain(&xor_block)
            .next()
            .expect("nonempty")
            .stage_count();
        for a in or_block.iter().chain(&and_block).chain(&xor_block) {
            if a.stage_count() != n {
                return Err(Error::InvalidParameter(
                    "all member APUFs must share one stage count".into(),
                ));
            }
        }
        Ok(Self { or_block, and_block, xor_block })
    }

    pub fn topology(&self) -> (usize, usize, usize) {
        (self.or_block.len(), self.and_block.len(), self.xor_block.len())
    }

    pub fn stage_count(&self) -> usize {
        self.members().next().expect("nonempty").stage_count()
    }

    pub fn or_block(&self) -> &[ApufInstance] {
        &self.or_block
    }

    pub fn and_block(&self) -> &[ApufInstance] {
        &self.and_block
    }

    pub fn xor_block(&self) -> &[ApufInstance] {
        &self.xor_block
    }

    /// All members in OR, AND, XOR order.
    pub fn members(&self) -> impl Iterator<Item = &ApufInstance> {
        self.or_block.iter().chain(&self.and_block).chain(&self.xor_block)
    }

    pub fn member_count(&self) -> usize {
        self.or_block.len() + self.and_block.len() + self.xor_block.len()
    }

    /// r_or ⊕ r_and ⊕ r_xor. Noise draws are independent per member.
    pub fn eval(&self, phi: &FeatureVector, noisy: bool, rng: &mut impl Rng) -> Result<u8> {
        let mut r_or = 0u8;
        for a in &self.or_block {
            r_or |= a.eval(phi, noisy, rng)?;
        }
        let mut r_and = if self.and_block.is_empty() { 0u8 } else { 1u8 };
        for a in &self.and_block {
            r_and &= a.eval(phi, noisy, rng)?;
        }
        let mut r_xor = 0u8;
        for a in &self.xor_block {
            r_xor ^= a.eval(phi, noisy, rng)?;
        }
        Ok(r_or ^ r_and ^ r_xor)
    }
}

/// Samples a full (x,y,z)-OAX-PUF; member i draws from substream i.
pub fn sample_oax(
    x: usize,
    y: usize,
    z: usize,
    n: usize,
    sigma_noise: f64,
    seed: RngSeed,
) -> Result<OaxPuf> {
    if x + y + z == 0 {
        return Err(Error::EmptyTopology);
    }
    let mut members = Vec::with_capacity(x + y + z);
    for i in 0..x + y + z {
        members.push(sample_apuf(n, sigma_noise, seed.derive(i as u64))?);
    }
    let xor_block = members.split_off(x + y);
    let and_block = members.split_off(x);
    OaxPuf::new(members, and_block, xor_block)
}

/// Samples an OAX-PUF and tunes every member's noise so its expected BER
/// matches `target_ber`. Used where experiments need member BERs inside a
/// stated band rather than a raw sigma.
pub fn sample_oax_with_ber(
    x: usize,
    y: usize,
    z: usize,
    n: usize,
    target_ber: f64,
    seed: RngSeed,
) -> Result<OaxPuf> {
    let mut puf = sample_oax(x, y, z, n, 0.05, seed)?;
    let cal = seed.derive(u64::MAX);
    for (i, block) in [&mut puf.or_block, &mut puf.and_block, &mut puf.xor_block]
        .into_iter()
        .enumerate()
    {
        for (j, a) in block.iter_mut().enumerate() {
            tune_noise_to_ber(a, target_ber, 20_000, cal.derive((i * 1000 + j) as u64))?;
        }
    }
    Ok(puf)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::challenge::transform_challenge;

    fn phi(vals: &[f64]) -> FeatureVector {
        // build through a challenge when possible; here construct directly
        // via the transform of a crafted challenge is awkward, so go through
        // the public API with a challenge that yields the wanted phi.
        // For unit tests we only need phi = [-1, 1, 1]: challenge [1, 0].
        assert_eq!(vals, &[-1.0, 1.0, 1.0]);
        transform_challenge(&Challenge::new(vec![1, 0]).unwrap())
    }

    #[test]
    fn delay_delta_dot_product() {
        let a = ApufInstance::new(vec![1.0, 0.0, 0.0], 0.0).unwrap();
        let p = phi(&[-1.0, 1.0, 1.0]);
        let mut rng = RngSeed::new(0).rng();
        assert_eq!(a.delay_delta(&p, false, &mut rng).unwrap(), -1.0);
    }

    #[test]
    fn delay_delta_zero_weights() {
        let a = ApufInstance::new(vec![0.0, 0.0, 0.0], 0.0).unwrap();
        let p = phi(&[-1.0, 1.0, 1.0]);
        let mut rng = RngSeed::new(0).rng();
        assert_eq!(a.delay_delta(&p, false, &mut rng).unwrap(), 0.0);
    }

    #[test]
    fn noisy_delta_stays_within_six_sigma() {
        // var of the noise term is 3·σ² for n=2; bound at 6 std devs
        let a = ApufInstance::new(vec![1.0, 0.0, 0.0], 0.05).unwrap();
        let p = phi(&[-1.0, 1.0, 1.0]);
        let bound = 0.05 * 3f64.sqrt() * 6.0;
        let mut rng = RngSeed::new(7).rng();
        for _ in 0..10_000 {
            let d = a.delay_delta(&p, true, &mut rng).unwrap();
            assert!((d + 1.0).abs() < bound, "delta {d} outside band");
        }
    }

    #[test]
    fn response_sign_rule() {
        let p = phi(&[-1.0, 1.0, 1.0]);
        let mut rng = RngSeed::new(0).rng();
        let neg = ApufInstance::new(vec![1.0, 0.0, 0.0], 0.0).unwrap(); // Δ = −1
        assert_eq!(neg.eval(&p, false, &mut rng).unwrap(), 1);
        let zero = ApufInstance::new(vec![0.0, 0.0, 0.0], 0.0).unwrap(); // Δ = 0
        assert_eq!(zero.eval(&p, false, &mut rng).unwrap(), 0);
        let pos = ApufInstance::new(vec![-2.5, 0.0, 0.0], 0.0).unwrap(); // Δ = +2.5
        assert_eq!(pos.eval(&p, false, &mut rng).unwrap(), 0);
    }

    #[test]
    fn sample_rejects_zero_stages() {
        assert!(sample_apuf(0, 0.05, RngSeed::new(1)).is_err());
    }

    #[test]
    fn sample_is_deterministic() {
        let a = sample_apuf(64, 0.0, RngSeed::new(5)).unwrap();
        let b = sample_apuf(64, 0.0, RngSeed::new(5)).unwrap();
        assert_eq!(a.weights(), b.weights());
    }

    #[test]
    fn sample_mean_near_zero() {
        let a = sample_apuf(64, 0.05, RngSeed::new(11)).unwrap();
        let mean: f64 = a.weights().iter().sum::<f64>() / a.weights().len() as f64;
        assert!(mean.abs() < 0.5, "sample mean {mean} implausible for N(0,1)");
    }

    #[test]
    fn noiseless_eval_is_pure() {
        let a = sample_apuf(16, 0.05, RngSeed::new(3)).unwrap();
        let mut rng = RngSeed::new(4).rng();
        let c = Challenge::random(16, &mut rng);
        let p = transform_challenge(&c);
        let first = a.eval(&p, false, &mut rng).unwrap();
        for _ in 0..1000 {
            assert_eq!(a.eval(&p, false, &mut rng).unwrap(), first);
        }
    }

    #[test]
    fn positive_weight_scaling_preserves_responses() {
        let a = sample_apuf(12, 0.0, RngSeed::new(8)).unwrap();
        let scaled =
            ApufInstance::new(a.weights().iter().map(|w| w * 17.5).collect(), 0.0).unwrap();
        let mut rng = RngSeed::new(9).rng();
        for _ in 0..500 {
            let c = Challenge::random(12, &mut rng);
            let p = transform_challenge(&c);
            assert_eq!(
                a.eval(&p, false, &mut rng).unwrap(),
                scaled.eval(&p, false, &mut rng).unwrap()
            );
        }
    }

    #[test]
    fn oax_truth_table_case() {
        // member bits OR:{1,0} AND:{1,0} XOR:{1,1} -> 1 ^ 0 ^ 0 = 1
        // realized with constant-weight APUFs: w = [∓1, 0] on a 1-stage PUF
        let one = ApufInstance::new(vec![0.0, -1.0], 0.0).unwrap(); // Δ = −1 → 1
        let zero = ApufInstance::new(vec![0.0, 1.0], 0.0).unwrap(); // Δ = +1 → 0
        let p = transform_challenge(&Challenge::new(vec![0]).unwrap());
        let puf = OaxPuf::new(
            vec![one.clone(), zero.clone()],
            vec![one.clone(), zero.clone()],
            vec![one.clone(), one.clone()],
        )
        .unwrap();
        let mut rng = RngSeed::new(0).rng();
        assert_eq!(puf.eval(&p, false, &mut rng).unwrap(), 1);
    }

    #[test]
    fn empty_topology_rejected() {
        assert!(OaxPuf::new(vec![], vec![], vec![]).is_err());
        assert!(sample_oax(0, 0, 0, 8, 0.05, RngSeed::new(1)).is_err());
    }

    #[test]
    fn pure_xor_topology_equals_member_xor() {
        let puf = sample_oax(0, 0, 2, 16, 0.0, RngSeed::new(21)).unwrap();
        let mut rng = RngSeed::new(22).rng();
        for _ in 0..10_000 {
            let c = Challenge::random(16, &mut rng);
            let p = transform_challenge(&c);
            let expected = puf
                .members()
                .map(|a| a.eval(&p, false, &mut rng).unwrap())
                .fold(0u8, |acc, b| acc ^ b);
            assert_eq!(puf.eval(&p, false, &mut rng).unwrap(), expected);
        }
    }

    #[test]
    fn noise_tuning_hits_target() {
        let mut a = sample_apuf(64, 0.05, RngSeed::new(33)).unwrap();
        tune_noise_to_ber(&mut a, 0.06, 20_000, RngSeed::new(34)).unwrap();
        // on the calibration challenge set the bisection is essentially exact
        let on_set = expected_apuf_ber(&a, 20_000, RngSeed::new(34));
        assert!((on_set - 0.06).abs() < 1e-6, "calibration residual {on_set}");
        // on a fresh challenge set only sampling error remains
        let held_out = expected_apuf_ber(&a, 20_000, RngSeed::new(35));
        assert!((held_out - 0.06).abs() < 0.005, "held-out BER {held_out}");
    }
}
