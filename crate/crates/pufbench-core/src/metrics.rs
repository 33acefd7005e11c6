//! Closed-form reliability and uniformity predictions for OAX-PUFs, the
//! exact enumeration oracle for block bit error rates, and the Monte-Carlo
//! estimators used to validate them.

use crate::challenge::{Challenge, transform_challenge};
use crate::error::{Error, Result};
use crate::puf::OaxPuf;
use crate::rng::RngSeed;
use crate::stats::par_chunked;

const MC_CHUNK: usize = 1024;

/// Analytic per-block and combined bit error rates for one (x,y,z,β) point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlockBer {
    pub beta: f64,
    pub x: usize,
    pub y: usize,
    pub z: usize,
    pub beta_or: f64,
    pub beta_and: f64,
    pub beta_xor: f64,
    pub beta_oax: f64,
}

impl BlockBer {
    pub fn compute(x: usize, y: usize, z: usize, beta: f64) -> Result<Self> {
        Ok(Self {
            beta,
            x,
            y,
            z,
            beta_or: if x == 0 { 0.0 } else { beta_or(x, beta)? },
            beta_and: if y == 0 { 0.0 } else { beta_and(y, beta)? },
            beta_xor: if z == 0 { 0.0 } else { beta_xor(z, beta)? },
            beta_oax: beta_oax(x, y, z, beta)?,
        })
    }
}

fn check_beta(beta: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&beta) {
        return Err(Error::InvalidParameter(format!(
            "beta must lie in [0, 1], got {beta}"
        )));
    }
    Ok(())
}

fn check_size(name: &str, k: usize) -> Result<()> {
    if k == 0 {
        return Err(Error::InvalidParameter(format!("{name} must be positive")));
    }
    Ok(())
}

fn binom(n: usize, k: usize) -> f64 {
    let mut acc = 1.0f64;
    for i in 0..k {
        acc = acc * (n - i) as f64 / (i + 1) as f64;
    }
    acc
}

/// Summation form of the x-OR-block BER: each i-flip pattern changes the OR
/// output with probability (C(x,i)+1)/((x+1)·C(x,i)).
pub fn beta_or_summation(x: usize, beta: f64) -> Result<f64> {
    check_size("x", x)?;
    check_beta(beta)?;
    let mut acc = 0.0;
    for i in 1..=x {
        let c = binom(x, i);
        let factor = (c + 1.0) / ((x as f64 + 1.0) * c);
        acc += factor * c * beta.powi(i as i32) * (1.0 - beta).powi((x - i) as i32);
    }
    Ok(acc)
}

/// Closed-form x-OR-block BER. The (2β−1) denominator is a removable
/// singularity; near β = 1/2 the summation form is used instead.
pub fn beta_or(x: usize, beta: f64) -> Result<f64> {
    check_size("x", x)?;
    check_beta(beta)?;
    if (2.0 * beta - 1.0).abs() < 1e-9 {
        return beta_or_summation(x, beta);
    }
    let xf = x as f64;
    let q = 1.0 - beta;
    Ok((1.0 - q.powf(xf) + beta * (beta.powf(xf) - q.powf(xf)) / (2.0 * beta - 1.0))
        / (xf + 1.0))
}

/// y-AND-block BER; the formula mirrors the OR block.
pub fn beta_and(y: usize, beta: f64) -> Result<f64> {
    check_size("y", y)?;
    beta_or(y, beta)
}

/// z-XOR-block BER: flips iff an odd number of members flip.
pub fn beta_xor(z: usize, beta: f64) -> Result<f64> {
    check_size("z", z)?;
    check_beta(beta)?;
    Ok((1.0 - (1.0 - 2.0 * beta).powi(z as i32)) / 2.0)
}

/// Combined OAX BER: the final XOR flips when exactly one block flips or
/// all three do.
pub fn beta_oax(x: usize, y: usize, z: usize, beta: f64) -> Result<f64> {
    if x + y + z == 0 {
        return Err(Error::EmptyTopology);
    }
    check_beta(beta)?;
    let a = if x == 0 { 0.0 } else { beta_or(x, beta)? };
    let b = if y == 0 { 0.0 } else { beta_and(y, beta)? };
    let c = if z == 0 { 0.0 } else { beta_xor(z, beta)? };
    Ok(a * b * c
        + a * (1.0 - b) * (1.0 - c)
        + b * (1.0 - a) * (1.0 - c)
        + c * (1.0 - a) * (1.0 - b))
}

/// Closed-form uniformity of each block and of the composition.
///
/// `u1` is evaluated through the full four-term parity expansion rather
/// than hard-coded to 1/2, so the algebraic identity stays testable.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UniformityProfile {
    pub u_or0: f64,
    pub u_or1: f64,
    pub u_and0: f64,
    pub u_and1: f64,
    pub u_xor0: f64,
    pub u_xor1: f64,
    pub u0: f64,
    pub u1: f64,
}

pub fn uniformity_profile(x: usize, y: usize, z: usize) -> Result<UniformityProfile> {
    if x + y + z == 0 {
        return Err(Error::EmptyTopology);
    }
    // empty OR and AND blocks contribute a constant 0; an empty XOR block
    // likewise (probability of output 0 is then 1)
    let u_or0 = 0.5f64.powi(x as i32); // x = 0 gives 1, the constant-0 block
    let u_or1 = 1.0 - u_or0;
    let u_and1 = if y == 0 { 0.0 } else { 0.5f64.powi(y as i32) };
    let u_and0 = 1.0 - u_and1;
    let u_xor0 = if z == 0 { 1.0 } else { 0.5 };
    let u_xor1 = 1.0 - u_xor0;
    // parity expansion: final bit is 1 iff an odd number of block bits are 1
    let u1 = u_or1 * u_and1 * u_xor1
        + u_or1 * u_and0 * u_xor0
        + u_and1 * u_or0 * u_xor0
        + u_xor1 * u_and0 * u_or0;
    let u0 = 1.0 - u1;
    Ok(UniformityProfile { u_or0, u_or1, u_and0, u_and1, u_xor0, u_xor1, u0, u1 })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlockKind {
    Or,
    And,
    Xor,
}

/// Exact block BER by enumerating all 2^size equiprobable response patterns
/// against all 2^size flip patterns weighted by β^i (1−β)^(size−i).
///
/// Independent of the closed forms above; it quantifies the gap left by the
/// averaged per-flip factor in the OR/AND formulas.
pub fn exact_flip_oracle(kind: BlockKind, size: usize, beta: f64) -> Result<f64> {
    if !(1..=6).contains(&size) {
        return Err(Error::InvalidParameter(format!(
            "oracle block size must lie in [1, 6], got {size}"
        )));
    }
    check_beta(beta)?;
    let combine = |state: u32| -> u8 {
        match kind {
            BlockKind::Or => u8::from(state != 0),
            BlockKind::And => u8::from(state == (1u32 << size) - 1),
            BlockKind::Xor => (state.count_ones() & 1) as u8,
        }
    };
    let patterns = 1u32 << size;
    let mut total = 0.0;
    for state in 0..patterns {
        let before = combine(state);
        for flips in 0..patterns {
            let i = flips.count_ones() as i32;
            let p = beta.powi(i) * (1.0 - beta).powi(size as i32 - i);
            if combine(state ^ flips) != before {
                total += p;
            }
        }
    }
    Ok(total / patterns as f64)
}

/// A Monte-Carlo estimate together with its sampling effort, so callers can
/// build binomial confidence bounds instead of hard-coding tolerances.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmpiricalEstimate {
    pub value: f64,
    pub sample_count: usize,
    pub repeats: usize,
}

impl EmpiricalEstimate {
    pub fn total_trials(&self) -> usize {
        self.sample_count * self.repeats.max(1)
    }

    /// Binomial standard error of the estimate.
    pub fn std_error(&self) -> f64 {
        let n = self.total_trials() as f64;
        (self.value * (1.0 - self.value) / n).sqrt()
    }
}

/// Empirical BER: fraction of noisy (challenge, repeat) evaluations that
/// differ from the noiseless reference response.
pub fn measure_ber(
    puf: &OaxPuf,
    num_challenges: usize,
    repeats: usize,
    seed: RngSeed,
) -> EmpiricalEstimate {
    let n = puf.stage_count();
    let flips: usize = par_chunked(num_challenges, MC_CHUNK, |chunk_idx, range| {
        let mut rng = seed.derive(chunk_idx as u64).rng();
        let mut flips = 0usize;
        for _ in range {
            let c = Challenge::random(n, &mut rng);
            let phi = transform_challenge(&c);
            let reference = puf.eval(&phi, false, &mut rng).expect("stage counts match");
            for _ in 0..repeats {
                if puf.eval(&phi, true, &mut rng).expect("stage counts match") != reference {
                    flips += 1;
                }
            }
        }
        flips
    })
    .into_iter()
    .sum();
    EmpiricalEstimate {
        value: flips as f64 / (num_challenges * repeats) as f64,
        sample_count: num_challenges,
        repeats,
    }
}

/// Empirical uniformity: fraction of noiseless responses equal to 0 over
/// fresh uniform challenges. `value` is u0; u1 is its complement.
pub fn measure_uniformity(puf: &OaxPuf, num_challenges: usize, seed: RngSeed) -> EmpiricalEstimate {
    let n = puf.stage_count();
    let zeros: usize = par_chunked(num_challenges, MC_CHUNK, |chunk_idx, range| {
        let mut rng = seed.derive(chunk_idx as u64).rng();
        let mut zeros = 0usize;
        for _ in range {
            let c = Challenge::random(n, &mut rng);
            let phi = transform_challenge(&c);
            if puf.eval(&phi, false, &mut rng).expect("stage counts match") == 0 {
                zeros += 1;
            }
        }
        zeros
    })
    .into_iter()
    .sum();
    EmpiricalEstimate {
        value: zeros as f64 / num_challenges as f64,
        sample_count: num_challenges,
        repeats: 1,
    }
}

/// Empirical uniformity under ideal members: each member bit is a fair
/// coin, blocks combine by OR/AND/XOR. This isolates the composition logic
/// from per-instance bias (a single sampled APUF can sit a few percent off
/// 0.5, which would drown the composition effect).
pub fn simulate_uniformity(
    x: usize,
    y: usize,
    z: usize,
    samples: usize,
    seed: RngSeed,
) -> Result<EmpiricalEstimate> {
    if x + y + z == 0 {
        return Err(Error::EmptyTopology);
    }
    let zeros: usize = par_chunked(samples, MC_CHUNK, |chunk_idx, range| {
        let mut rng = seed.derive(chunk_idx as u64).rng();
        let mut zeros = 0usize;
        let bit = |rng: &mut rand_chacha::ChaCha12Rng| -> u8 {
            use rand::Rng;
            rng.random_range(0..=1u8)
        };
        for _ in range {
            let r_or = (0..x).fold(0u8, |acc, _| acc | bit(&mut rng));
            let r_and = if y == 0 { 0 } else { (0..y).fold(1u8, |acc, _| acc & bit(&mut rng)) };
            let r_xor = (0..z).fold(0u8, |acc, _| acc ^ bit(&mut rng));
            if r_or ^ r_and ^ r_xor == 0 {
                zeros += 1;
            }
        }
        zeros
    })
    .into_iter()
    .sum();
    Ok(EmpiricalEstimate { value: zeros as f64 / samples as f64, sample_count: samples, repeats: 1 })
}

/// Monte-Carlo combined BER of the probability model the closed forms sum:
/// each block's noiseless response pattern has uniformly distributed Hamming
/// weight (every pattern of weight k equally likely), and each member flips
/// independently with probability `beta`.
///
/// Two other estimators bracket this model: [`exact_flip_oracle`] enumerates
/// uniform iid response bits, and [`measure_ber`] runs real delay-model
/// instances whose flip probabilities vary per challenge; both deviate from
/// the closed forms by design, increasingly so for larger OR/AND blocks.
pub fn simulate_ber(
    x: usize,
    y: usize,
    z: usize,
    beta: f64,
    samples: usize,
    seed: RngSeed,
) -> Result<EmpiricalEstimate> {
    if x + y + z == 0 {
        return Err(Error::EmptyTopology);
    }
    check_beta(beta)?;
    let flips: usize = par_chunked(samples, MC_CHUNK, |chunk_idx, range| {
        use rand::Rng;
        use rand::seq::SliceRandom;
        let mut rng = seed.derive(chunk_idx as u64).rng();
        let mut flips = 0usize;
        let mut bits = vec![0u8; x.max(y).max(z)];
        for _ in range {
            let mut combine = |count: usize, init: u8, op: fn(u8, u8) -> u8| {
                let ones = rng.random_range(0..=count);
                let pattern = &mut bits[..count];
                pattern.iter_mut().enumerate().for_each(|(i, b)| *b = u8::from(i < ones));
                pattern.shuffle(&mut rng);
                let mut clean = init;
                let mut noisy = init;
                for &bit in pattern.iter() {
                    let flipped = if rng.random::<f64>() < beta { bit ^ 1 } else { bit };
                    clean = op(clean, bit);
                    noisy = op(noisy, flipped);
                }
                (clean, noisy)
            };
            let (or_c, or_n) = combine(x, 0, |a, b| a | b);
            let (and_c, and_n) = if y == 0 { (0, 0) } else { combine(y, 1, |a, b| a & b) };
            let (xor_c, xor_n) = combine(z, 0, |a, b| a ^ b);
            if (or_c ^ and_c ^ xor_c) != (or_n ^ and_n ^ xor_n) {
                flips += 1;
            }
        }
        flips
    })
    .into_iter()
    .sum();
    Ok(EmpiricalEstimate { value: flips as f64 / samples as f64, sample_count: samples, repeats: 1 })
}

/// Short-term reliability R = N/M: the fraction of '1' responses among M
/// noisy repeats of one challenge.
pub fn measure_reliability(puf: &OaxPuf, c: &Challenge, m: usize, seed: RngSeed) -> Result<f64> {
    if m == 0 {
        return Err(Error::InvalidParameter("repeat count must be positive".into()));
    }
    let phi = transform_challenge(c);
    let mut rng = seed.rng();
    let mut ones = 0usize;
    for _ in 0..m {
        ones += usize::from(puf.eval(&phi, true, &mut rng)?);
    }
    Ok(ones as f64 / m as f64)
}
