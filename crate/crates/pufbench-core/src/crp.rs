//! Challenge-response datasets: generation, repeated-measurement
//! reliability vectors, and a line-oriented text file format (CRPB1).

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::challenge::{Challenge, transform_challenge};
use crate::error::{Error, Result};
use crate::puf::OaxPuf;
use crate::rng::RngSeed;
use crate::stats::par_chunked;

const CRP_CHUNK: usize = 2048;

/// A set of challenges with their (noiseless or majority-voted) responses,
/// plus enough generation metadata to regenerate or validate the file form.
#[derive(Debug, Clone, PartialEq)]
pub struct CrpDataset {
    pub challenges: Vec<Challenge>,
    pub responses: Vec<u8>,
    /// Number of noisy repeats behind each response; 0 means noiseless.
    pub repeats: usize,
    /// Count of '1' outcomes per challenge across the repeats. Empty when
    /// `repeats == 0`.
    pub one_counts: Vec<usize>,
    pub stage_count: usize,
    pub topology: (usize, usize, usize),
    pub seed: RngSeed,
}

impl CrpDataset {
    pub fn len(&self) -> usize {
        self.challenges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.challenges.is_empty()
    }

    /// Reliability side-channel hint h_i = |m/2 − (count of 1s)| per
    /// challenge. Requires repeated measurements.
    pub fn reliability_vector(&self) -> Result<ReliabilityVector> {
        if self.repeats == 0 || self.one_counts.len() != self.len() {
            return Err(Error::InvalidParameter(
                "reliability vector needs repeated measurements".into(),
            ));
        }
        let m = self.repeats as f64;
        Ok(ReliabilityVector {
            values: self
                .one_counts
                .iter()
                .map(|&ones| (m / 2.0 - ones as f64).abs())
                .collect(),
            repeats: self.repeats,
        })
    }
}

/// Per-challenge reliability hints h_i ∈ [0, m/2]; large values mean the
/// response is stable under noise.
#[derive(Debug, Clone, PartialEq)]
pub struct ReliabilityVector {
    pub values: Vec<f64>,
    pub repeats: usize,
}

/// Draws `count` uniform challenges from the seed (duplicates possible, as
/// with physical query access).
pub fn generate_challenges(count: usize, n: usize, seed: RngSeed) -> Vec<Challenge> {
    let mut rng = seed.rng();
    (0..count).map(|_| Challenge::random(n, &mut rng)).collect()
}

/// Collects noiseless CRPs over fresh uniform challenges.
pub fn collect_crps(puf: &OaxPuf, count: usize, seed: RngSeed) -> CrpDataset {
    let n = puf.stage_count();
    let mut pairs: Vec<(Challenge, u8)> = Vec::with_capacity(count);
    for chunk in par_chunked(count, CRP_CHUNK, |chunk_idx, range| {
        let mut rng = seed.derive(chunk_idx as u64).rng();
        range
            .map(|_| {
                let c = Challenge::random(n, &mut rng);
                let phi = transform_challenge(&c);
                let r = puf.eval(&phi, false, &mut rng).expect("stage counts match");
                (c, r)
            })
            .collect::<Vec<_>>()
    }) {
        pairs.extend(chunk);
    }
    let (challenges, responses) = pairs.into_iter().unzip();
    CrpDataset {
        challenges,
        responses,
        repeats: 0,
        one_counts: Vec::new(),
        stage_count: n,
        topology: puf.topology(),
        seed,
    }
}

/// Collects CRPs with `repeats` noisy measurements per challenge. The stored
/// response is the majority vote; exact ties resolve to 0.
pub fn collect_reliability(puf: &OaxPuf, count: usize, repeats: usize, seed: RngSeed) -> Result<CrpDataset> {
    if repeats == 0 {
        return Err(Error::InvalidParameter("repeat count must be positive".into()));
    }
    let n = puf.stage_count();
    let mut rows: Vec<(Challenge, u8, usize)> = Vec::with_capacity(count);
    for chunk in par_chunked(count, CRP_CHUNK, |chunk_idx, range| {
        let mut rng = seed.derive(chunk_idx as u64).rng();
        range
            .map(|_| {
                let c = Challenge::random(n, &mut rng);
                let phi = transform_challenge(&c);
                let mut ones = 0usize;
                for _ in 0..repeats {
                    ones += usize::from(
                        puf.eval(&phi, true, &mut rng).expect("stage counts match"),
                    );
                }
                let majority = u8::from(2 * ones > repeats);
                (c, majority, ones)
            })
            .collect::<Vec<_>>()
    }) {
        rows.extend(chunk);
    }
    let mut challenges = Vec::with_capacity(count);
    let mut responses = Vec::with_capacity(count);
    let mut one_counts = Vec::with_capacity(count);
    for (c, r, ones) in rows {
        challenges.push(c);
        responses.push(r);
        one_counts.push(ones);
    }
    Ok(CrpDataset {
        challenges,
        responses,
        repeats,
        one_counts,
        stage_count: n,
        topology: puf.topology(),
        seed,
    })
}

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x100_0000_01b3;

fn fnv1a64(bytes: &[u8]) -> u64 {
    bytes.iter().fold(FNV_OFFSET, |h, &b| (h ^ u64::from(b)).wrapping_mul(FNV_PRIME))
}

fn render_records(ds: &CrpDataset) -> String {
    let mut body = String::new();
    for i in 0..ds.len() {
        body.push_str(&ds.challenges[i].to_hex());
        let _ = write!(body, "\t{}", ds.responses[i]);
        if ds.repeats > 0 {
            let _ = write!(body, "\t{}", ds.one_counts[i]);
        }
        body.push('\n');
    }
    body
}

/// Writes the dataset in the CRPB1 text format:
///
/// ```text
/// CRPB1 n=<stages> count=<records> repeats=<m> topology=<x>,<y>,<z> seed=<u64> checksum=<fnv64 hex>
/// <hex challenge>\t<response>[\t<one count>]
/// ```
///
/// The checksum is FNV-1a 64 over the record bytes exactly as written.
pub fn save_dataset(ds: &CrpDataset, path: &Path) -> Result<()> {
    if ds.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let body = render_records(ds);
    let (x, y, z) = ds.topology;
    let header = format!(
        "CRPB1 n={} count={} repeats={} topology={},{},{} seed={} checksum={:016x}\n",
        ds.stage_count,
        ds.len(),
        ds.repeats,
        x,
        y,
        z,
        ds.seed.seed,
        fnv1a64(body.as_bytes()),
    );
    fs::write(path, header + &body).map_err(|source| Error::Io { path: path.to_path_buf(), source })
}

fn header_field<'a>(fields: &'a [(&'a str, &'a str)], key: &str) -> Result<&'a str> {
    fields
        .iter()
        .find(|(k, _)| *k == key)
        .map(|(_, v)| *v)
        .ok_or_else(|| Error::MalformedHeader(format!("missing field {key:?}")))
}

fn parse_usize(key: &str, v: &str) -> Result<usize> {
    v.parse()
        .map_err(|_| Error::MalformedHeader(format!("field {key}={v:?} is not a valid integer")))
}

/// Loads and validates a CRPB1 file. Detects a wrong magic, missing or
/// malformed header fields, truncation against the declared count, checksum
/// mismatches, and malformed records — each as a distinct error.
pub fn load_dataset(path: &Path) -> Result<CrpDataset> {
    let text = fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let (header, body) = text
        .split_once('\n')
        .ok_or_else(|| Error::MalformedHeader("file has no header line".into()))?;
    let mut tokens = header.split_whitespace();
    let magic = tokens.next().unwrap_or("");
    if magic != "CRPB1" {
        return Err(Error::UnsupportedVersion(magic.to_string()));
    }
    let fields: Vec<(&str, &str)> = tokens
        .map(|t| {
            t.split_once('=')
                .ok_or_else(|| Error::MalformedHeader(format!("field {t:?} has no '='")))
        })
        .collect::<Result<_>>()?;
    let n = parse_usize("n", header_field(&fields, "n")?)?;
    let count = parse_usize("count", header_field(&fields, "count")?)?;
    let repeats = parse_usize("repeats", header_field(&fields, "repeats")?)?;
    let topo = header_field(&fields, "topology")?;
    let topo_parts: Vec<usize> = topo
        .split(',')
        .map(|p| parse_usize("topology", p))
        .collect::<Result<_>>()?;
    let [x, y, z] = topo_parts[..] else {
        return Err(Error::MalformedHeader(format!(
            "topology must have three components, got {topo:?}"
        )));
    };
    let seed_v = header_field(&fields, "seed")?;
    let seed: u64 = seed_v
        .parse()
        .map_err(|_| Error::MalformedHeader(format!("field seed={seed_v:?} is not a valid integer")))?;
    let sum_v = header_field(&fields, "checksum")?;
    let declared_sum = u64::from_str_radix(sum_v, 16)
        .map_err(|_| Error::MalformedHeader(format!("field checksum={sum_v:?} is not hex")))?;
    if n == 0 {
        return Err(Error::MalformedHeader("n must be positive".into()));
    }

    let body_sum = fnv1a64(body.as_bytes());
    if body_sum != declared_sum {
        return Err(Error::ChecksumMismatch { header: declared_sum, body: body_sum });
    }

    let mut challenges = Vec::with_capacity(count);
    let mut responses = Vec::with_capacity(count);
    let mut one_counts = Vec::with_capacity(if repeats > 0 { count } else { 0 });
    for (i, line) in body.lines().enumerate() {
        let lineno = i + 2; // 1-based, after the header
        let mut cols = line.split('\t');
        let hex = cols
            .next()
            .filter(|h| !h.is_empty())
            .ok_or_else(|| Error::MalformedRecord { line: lineno, msg: "empty record".into() })?;
        let c = Challenge::from_hex(hex, n).map_err(|e| Error::MalformedRecord {
            line: lineno,
            msg: e.to_string(),
        })?;
        let r: u8 = cols
            .next()
            .and_then(|v| v.parse().ok())
            .filter(|r| *r <= 1)
            .ok_or_else(|| Error::MalformedRecord {
                line: lineno,
                msg: "response column must be 0 or 1".into(),
            })?;
        if repeats > 0 {
            let ones: usize = cols
                .next()
                .and_then(|v| v.parse().ok())
                .filter(|o| *o <= repeats)
                .ok_or_else(|| Error::MalformedRecord {
                    line: lineno,
                    msg: format!("one-count column must lie in [0, {repeats}]"),
                })?;
            one_counts.push(ones);
        }
        if cols.next().is_some() {
            return Err(Error::MalformedRecord {
                line: lineno,
                msg: "unexpected extra column".into(),
            });
        }
        challenges.push(c);
        responses.push(r);
    }
    if challenges.len() != count {
        return Err(Error::Truncated { declared: count, found: challenges.len() });
    }
    Ok(CrpDataset {
        challenges,
        responses,
        repeats,
        one_counts,
        stage_count: n,
        topology: (x, y, z),
        seed: RngSeed::new(seed),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::puf::sample_oax;
    use proptest::prelude::*;

    fn small_puf() -> OaxPuf {
        sample_oax(1, 1, 1, 16, 0.1, RngSeed::new(100)).unwrap()
    }

    #[test]
    fn collect_crps_is_deterministic_and_noiseless() {
        let puf = small_puf();
        let a = collect_crps(&puf, 500, RngSeed::new(101));
        let b = collect_crps(&puf, 500, RngSeed::new(101));
        assert_eq!(a, b);
        // re-evaluating any challenge noiselessly reproduces the response
        let mut rng = RngSeed::new(0).rng();
        for (c, &r) in a.challenges.iter().zip(&a.responses) {
            let phi = transform_challenge(c);
            assert_eq!(puf.eval(&phi, false, &mut rng).unwrap(), r);
        }
    }

    #[test]
    fn collect_reliability_majority_and_tie_rule() {
        let puf = small_puf();
        let ds = collect_reliability(&puf, 300, 11, RngSeed::new(102)).unwrap();
        for (&r, &ones) in ds.responses.iter().zip(&ds.one_counts) {
            assert_eq!(r, u8::from(2 * ones > 11));
        }
        // even repeat count: an exact tie must give 0
        let ds = collect_reliability(&puf, 300, 10, RngSeed::new(103)).unwrap();
        for (&r, &ones) in ds.responses.iter().zip(&ds.one_counts) {
            if ones == 5 {
                assert_eq!(r, 0, "tie must resolve to 0");
            }
        }
    }

    #[test]
    fn reliability_vector_matches_definition() {
        let puf = small_puf();
        let ds = collect_reliability(&puf, 200, 11, RngSeed::new(104)).unwrap();
        let h = ds.reliability_vector().unwrap();
        for (hv, &ones) in h.values.iter().zip(&ds.one_counts) {
            assert_eq!(*hv, (5.5 - ones as f64).abs());
            assert!((0.0..=5.5).contains(hv));
        }
    }

    #[test]
    fn reliability_vector_rejects_noiseless_dataset() {
        let ds = collect_crps(&small_puf(), 10, RngSeed::new(105));
        assert!(ds.reliability_vector().is_err());
    }

    #[test]
    fn zero_noise_reliability_is_extreme() {
        let puf = sample_oax(1, 1, 1, 16, 0.0, RngSeed::new(106)).unwrap();
        let ds = collect_reliability(&puf, 200, 10, RngSeed::new(107)).unwrap();
        let h = ds.reliability_vector().unwrap();
        for hv in &h.values {
            assert_eq!(*hv, 5.0, "noiseless responses must be fully stable");
        }
    }

    #[test]
    fn save_load_round_trip_noiseless() {
        let ds = collect_crps(&small_puf(), 400, RngSeed::new(108));
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.crpb");
        save_dataset(&ds, &path).unwrap();
        assert_eq!(load_dataset(&path).unwrap(), ds);
    }

    #[test]
    fn save_load_round_trip_with_repeats() {
        let ds = collect_reliability(&small_puf(), 400, 11, RngSeed::new(109)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("b.crpb");
        save_dataset(&ds, &path).unwrap();
        assert_eq!(load_dataset(&path).unwrap(), ds);
    }

    #[test]
    fn save_rejects_empty_dataset() {
        let mut ds = collect_crps(&small_puf(), 1, RngSeed::new(110));
        ds.challenges.clear();
        ds.responses.clear();
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            save_dataset(&ds, &dir.path().join("c.crpb")),
            Err(Error::EmptyDataset)
        ));
    }

    fn saved_file(ds: &CrpDataset) -> (tempfile::TempDir, std::path::PathBuf, String) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.crpb");
        save_dataset(ds, &path).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        (dir, path, text)
    }

    #[test]
    fn load_detects_wrong_magic() {
        let ds = collect_crps(&small_puf(), 5, RngSeed::new(111));
        let (_dir, path, text) = saved_file(&ds);
        fs::write(&path, text.replacen("CRPB1", "CRPB2", 1)).unwrap();
        assert!(matches!(load_dataset(&path), Err(Error::UnsupportedVersion(v)) if v == "CRPB2"));
    }

    #[test]
    fn load_detects_missing_field() {
        let ds = collect_crps(&small_puf(), 5, RngSeed::new(112));
        let (_dir, path, text) = saved_file(&ds);
        fs::write(&path, text.replacen(" repeats=0", "", 1)).unwrap();
        assert!(matches!(load_dataset(&path), Err(Error::MalformedHeader(_))));
    }

    #[test]
    fn load_detects_truncation() {
        let ds = collect_crps(&small_puf(), 5, RngSeed::new(113));
        let (_dir, path, text) = saved_file(&ds);
        // drop the final record and re-stamp the checksum so truncation is
        // the first failure seen
        let (header, body) = text.split_once('\n').unwrap();
        let shorter: String = body.lines().take(4).map(|l| format!("{l}\n")).collect();
        let sum = fnv1a64(shorter.as_bytes());
        let header = {
            let idx = header.find("checksum=").unwrap();
            format!("{}checksum={:016x}", &header[..idx], sum)
        };
        fs::write(&path, format!("{header}\n{shorter}")).unwrap();
        assert!(matches!(
            load_dataset(&path),
            Err(Error::Truncated { declared: 5, found: 4 })
        ));
    }

    #[test]
    fn load_detects_corrupted_body() {
        let ds = collect_crps(&small_puf(), 5, RngSeed::new(114));
        let (_dir, path, text) = saved_file(&ds);
        // flip one response bit without updating the checksum
        let pos = text.rfind("\t0\n").or_else(|| text.rfind("\t1\n")).unwrap();
        let mut bytes = text.into_bytes();
        bytes[pos + 1] ^= 1; // '0' <-> '1'
        fs::write(&path, bytes).unwrap();
        assert!(matches!(load_dataset(&path), Err(Error::ChecksumMismatch { .. })));
    }

    #[test]
    fn load_detects_malformed_record() {
        let ds = collect_crps(&small_puf(), 3, RngSeed::new(115));
        let (_dir, path, text) = saved_file(&ds);
        let (header_line, body) = text.split_once('\n').unwrap();
        let bad_body = body.replacen('\t', "\tx", 1);
        let sum = fnv1a64(bad_body.as_bytes());
        let idx = header_line.find("checksum=").unwrap();
        let header_line = format!("{}checksum={:016x}", &header_line[..idx], sum);
        fs::write(&path, format!("{header_line}\n{bad_body}")).unwrap();
        assert!(matches!(load_dataset(&path), Err(Error::MalformedRecord { line: 2, .. })));
    }

    #[test]
    fn load_missing_file_is_io_error() {
        assert!(matches!(
            load_dataset(Path::new("/nonexistent/x.crpb")),
            Err(Error::Io { .. })
        ));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        #[test]
        fn reliability_hint_identity(seed in 0u64..1000, repeats in 1usize..16) {
            // h_i + min(ones, m - ones) = m / 2 for every record
            let puf = sample_oax(0, 0, 2, 8, 0.2, RngSeed::new(seed)).unwrap();
            let ds = collect_reliability(&puf, 50, repeats, RngSeed::new(seed ^ 0xabcd)).unwrap();
            let h = ds.reliability_vector().unwrap();
            for (hv, &ones) in h.values.iter().zip(&ds.one_counts) {
                let minority = ones.min(repeats - ones) as f64;
                prop_assert!((hv + minority - repeats as f64 / 2.0).abs() < 1e-12);
            }
        }

        #[test]
        fn round_trip_random_datasets(seed in 0u64..500, count in 1usize..64) {
            let puf = sample_oax(1, 0, 1, 10, 0.1, RngSeed::new(seed)).unwrap();
            let ds = collect_reliability(&puf, count, 11, RngSeed::new(seed ^ 0x77)).unwrap();
            let dir = tempfile::tempdir().unwrap();
            let path = dir.path().join("rt.crpb");
            save_dataset(&ds, &path).unwrap();
            prop_assert_eq!(load_dataset(&path).unwrap(), ds);
        }
    }
}
