//! Simulation and analysis toolkit for OR-AND-XOR recomposited arbiter PUFs.
//!
//! The crate covers the full loop of a modeling study: sampling PUF
//! instances ([`puf`]), predicting their reliability and uniformity in
//! closed form ([`metrics`]), generating and persisting challenge-response
//! data ([`crp`]), and attacking instances with machine-learning and
//! reliability-based methods ([`attacks`]). The [`oracle`] module holds
//! slow, independent re-implementations used only to cross-check the rest.

pub mod attacks;
pub mod challenge;
pub mod crp;
pub mod error;
pub mod metrics;
pub mod oracle;
pub mod puf;
pub mod rng;
pub mod stats;

pub use attacks::{
    AttackReport, CmaesConfig, EsCandidate, HybridConfig, LrConfig, MlpConfig, MlpModel,
    ResponseModel, SoftOaxModel, cmaes_reliability_attack, evaluate_accuracy, hybrid_attack,
    lr_attack, mlp_attack, pearson,
};
pub use challenge::{Challenge, FeatureVector, transform_challenge};
pub use crp::{CrpDataset, ReliabilityVector, collect_crps, collect_reliability, generate_challenges, load_dataset, save_dataset};
pub use error::{Error, Result};
pub use metrics::{
    BlockBer, BlockKind, EmpiricalEstimate, UniformityProfile, beta_and, beta_oax, beta_or,
    beta_xor, exact_flip_oracle, measure_ber, measure_reliability, measure_uniformity,
    simulate_ber, simulate_uniformity, uniformity_profile,
};
pub use puf::{
    ApufInstance, OaxPuf, expected_apuf_ber, sample_apuf, sample_oax, sample_oax_with_ber,
    tune_noise_to_ber,
};
pub use rng::RngSeed;
