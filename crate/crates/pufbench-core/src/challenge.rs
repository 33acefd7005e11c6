//! Challenges and their parity feature transform.

use crate::error::{Error, Result};
use rand::Rng;

/// An n-bit challenge. Every element is 0 or 1.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Challenge {
    bits: Vec<u8>,
}

impl Challenge {
    pub fn new(bits: Vec<u8>) -> Result<Self> {
        if bits.is_empty() {
            return Err(Error::InvalidParameter("challenge must be non-empty".into()));
        }
        if let Some(&b) = bits.iter().find(|&&b| b > 1) {
            return Err(Error::InvalidParameter(format!(
                "challenge bits must be 0 or 1, got {b}"
            )));
        }
        Ok(Self { bits })
    }

    pub fn random(n: usize, rng: &mut impl Rng) -> Self {
        let bits = (0..n).map(|_| rng.random_range(0..=1u8)).collect();
        Self { bits }
    }

    /// Builds the challenge whose bits are the big-endian binary digits of
    /// `index`; used by the exhaustive oracles.
    pub fn from_index(index: u64, n: usize) -> Self {
        let bits = (0..n).map(|i| ((index >> (n - 1 - i)) & 1) as u8).collect();
        Self { bits }
    }

    pub fn bits(&self) -> &[u8] {
        &self.bits
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    /// Packs bits into hex, c[0] in the most significant bit of the first
    /// nibble. Trailing pad bits (when n is not a multiple of 4) are zero.
    pub fn to_hex(&self) -> String {
        let n = self.bits.len();
        let nibbles = n.div_ceil(4);
        let mut out = String::with_capacity(nibbles);
        for g in 0..nibbles {
            let mut v = 0u8;
            for j in 0..4 {
                let idx = g * 4 + j;
                let bit = if idx < n { self.bits[idx] } else { 0 };
                v = (v << 1) | bit;
            }
            out.push(char::from_digit(v as u32, 16).unwrap());
        }
        out
    }

    pub fn from_hex(s: &str, n: usize) -> Result<Self> {
        let nibbles = n.div_ceil(4);
        if s.len() != nibbles {
            return Err(Error::InvalidParameter(format!(
                "expected {nibbles} hex digits for n={n}, got {}",
                s.len()
            )));
        }
        let mut bits = Vec::with_capacity(n);
        for c in s.chars() {
            let v = c
                .to_digit(16)
                .ok_or_else(|| Error::InvalidParameter(format!("invalid hex digit {c:?}")))?
                as u8;
            for j in (0..4).rev() {
                bits.push((v >> j) & 1);
            }
        }
        // pad bits must be zero
        for &b in &bits[n..] {
            if b != 0 {
                return Err(Error::InvalidParameter("nonzero padding bits".into()));
            }
        }
        bits.truncate(n);
        Self::new(bits)
    }
}

/// The ±1 parity vector of a challenge; Φ[n] is always 1.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    phi: Vec<f64>,
}

impl FeatureVector {
    pub fn phi(&self) -> &[f64] {
        &self.phi
    }

    pub fn len(&self) -> usize {
        self.phi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.phi.is_empty()
    }
}

/// Parity transform: Φ[i] = ∏_{j=i}^{n-1} (1 − 2 c[j]), Φ[n] = 1.
pub fn transform_challenge(c: &Challenge) -> FeatureVector {
    let n = c.len();
    let bits = c.bits();
    let mut phi = vec![1.0; n + 1];
    for i in (0..n).rev() {
        phi[i] = phi[i + 1] * (1.0 - 2.0 * f64::from(bits[i]));
    }
    FeatureVector { phi }
}
