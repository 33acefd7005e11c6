//! Independent cross-checking utilities: exhaustive truth tables for small
//! stage counts and a reference correlation implementation.
//!
//! These deliberately avoid sharing code paths with the estimators they
//! check (dataset sampling, the streaming correlation in the attack module),
//! so a bug in one side cannot hide in the other.

use crate::challenge::{Challenge, transform_challenge};
use crate::error::{Error, Result};
use crate::puf::OaxPuf;

/// Noiseless responses over all 2^n challenges, indexed by the big-endian
/// integer value of the challenge bits.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExhaustiveTruthTable {
    pub stage_count: usize,
    pub responses: Vec<u8>,
}

impl ExhaustiveTruthTable {
    pub fn response(&self, c: &Challenge) -> u8 {
        let idx = c
            .bits()
            .iter()
            .fold(0usize, |acc, &b| (acc << 1) | usize::from(b));
        self.responses[idx]
    }

    /// Fraction of challenges answering 0.
    pub fn uniformity_zero(&self) -> f64 {
        let zeros = self.responses.iter().filter(|&&r| r == 0).count();
        zeros as f64 / self.responses.len() as f64
    }
}

/// Enumerates every challenge of a small PUF. Capped at n = 12 to keep the
/// table in the tens of kilobytes.
pub fn exhaustive_responses(puf: &OaxPuf) -> Result<ExhaustiveTruthTable> {
    let n = puf.stage_count();
    if n > 12 {
        return Err(Error::InvalidParameter(format!(
            "exhaustive enumeration capped at 12 stages, got {n}"
        )));
    }
    let mut rng = crate::rng::RngSeed::new(0).rng(); // unused: noiseless eval
    let responses = (0..1u64 << n)
        .map(|i| {
            let c = Challenge::from_index(i, n);
            puf.eval(&transform_challenge(&c), false, &mut rng)
        })
        .collect::<Result<Vec<u8>>>()?;
    Ok(ExhaustiveTruthTable { stage_count: n, responses })
}

/// Pearson correlation computed the textbook way: mean-centering first,
/// then one pass for the three sums. Serves as the reference for the
/// streaming implementation used inside the attacks.
pub fn reference_pearson(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch { expected: a.len(), got: b.len() });
    }
    if a.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let n = a.len() as f64;
    let mean_a = a.iter().sum::<f64>() / n;
    let mean_b = b.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut var_a = 0.0;
    let mut var_b = 0.0;
    for (&x, &y) in a.iter().zip(b) {
        let dx = x - mean_a;
        let dy = y - mean_b;
        cov += dx * dy;
        var_a += dx * dx;
        var_b += dy * dy;
    }
    if var_a == 0.0 || var_b == 0.0 {
        return Err(Error::UndefinedCorrelation);
    }
    Ok(cov / (var_a * var_b).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::puf::sample_oax;
    use crate::rng::RngSeed;

    #[test]
    fn truth_table_indexing_matches_eval() {
        let puf = sample_oax(1, 1, 1, 8, 0.0, RngSeed::new(200)).unwrap();
        let table = exhaustive_responses(&puf).unwrap();
        assert_eq!(table.responses.len(), 256);
        let mut rng = RngSeed::new(0).rng();
        for i in [0u64, 1, 17, 128, 255] {
            let c = Challenge::from_index(i, 8);
            let direct = puf.eval(&transform_challenge(&c), false, &mut rng).unwrap();
            assert_eq!(table.response(&c), direct);
        }
    }

    #[test]
    fn enumeration_cap() {
        let puf = sample_oax(0, 0, 1, 13, 0.0, RngSeed::new(201)).unwrap();
        assert!(exhaustive_responses(&puf).is_err());
    }

    #[test]
    fn single_apuf_truth_table_near_balanced() {
        // per-instance bias is large at small n, so average across instances
        let mut acc = 0.0;
        for i in 0..16 {
            let puf = sample_oax(0, 0, 1, 10, 0.0, RngSeed::new(202 + i)).unwrap();
            acc += exhaustive_responses(&puf).unwrap().uniformity_zero();
        }
        let u0 = acc / 16.0;
        assert!((u0 - 0.5).abs() < 0.05, "mean u0 = {u0}");
    }

    #[test]
    fn pearson_known_value() {
        // frozen from a by-hand calculation
        let rho = reference_pearson(&[1.0, 2.0, 3.0, 4.0], &[1.0, 3.0, 2.0, 4.0]).unwrap();
        assert!((rho - 0.8).abs() < 1e-12);
    }

    #[test]
    fn pearson_perfect_and_inverse() {
        let a = [1.0, 2.0, 3.0];
        assert!((reference_pearson(&a, &[2.0, 4.0, 6.0]).unwrap() - 1.0).abs() < 1e-12);
        assert!((reference_pearson(&a, &[3.0, 2.0, 1.0]).unwrap() + 1.0).abs() < 1e-12);
    }

    #[test]
    fn pearson_constant_input_is_undefined() {
        assert!(matches!(
            reference_pearson(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]),
            Err(Error::UndefinedCorrelation)
        ));
    }

    #[test]
    fn pearson_length_mismatch() {
        assert!(reference_pearson(&[1.0], &[1.0, 2.0]).is_err());
    }
}
