//! Experiment driver: generates instances and datasets, validates the
//! analytic metrics against simulation, and runs the modeling attacks.
//!
//! Every report embeds the fully resolved configuration and root seed, so
//! a run can be reproduced from its report alone. Exit status is nonzero
//! only for configuration and I/O failures; an attack that fails to
//! converge is a result, not an error.

mod config;

use std::path::Path;
use std::process::ExitCode;

use anyhow::{Context, Result, bail};
use clap::{Parser, Subcommand};
use serde::Serialize;

use pufbench_core::{
    BlockBer, BlockKind, CmaesConfig, HybridConfig, LrConfig, MlpConfig, OaxPuf, RngSeed,
    beta_oax, collect_crps, collect_reliability, exact_flip_oracle, expected_apuf_ber,
    measure_ber, measure_uniformity, sample_oax, sample_oax_with_ber, save_dataset,
    simulate_uniformity, uniformity_profile,
};

use config::{CommonArgs, Resolved, resolve};

#[derive(Parser)]
#[command(name = "pufbench", version, about = "OAX-PUF simulation and attack workbench")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a challenge-response dataset file
    Gen(CommonArgs),
    /// Measure empirical reliability and uniformity of a sampled instance
    Eval(CommonArgs),
    /// Print closed-form reliability and uniformity predictions
    Metrics(CommonArgs),
    /// Run a modeling attack (lr | mlp | cmaes | hybrid)
    Attack(CommonArgs),
    /// Cross-check analytic formulas against simulation sweeps
    Validate(CommonArgs),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Gen(args) => cmd_gen(&args),
        Command::Eval(args) => cmd_eval(&args),
        Command::Metrics(args) => cmd_metrics(&args),
        Command::Attack(args) => cmd_attack(&args),
        Command::Validate(args) => cmd_validate(&args),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

#[derive(Serialize)]
struct Report<'a, T: Serialize> {
    command: &'a str,
    config: &'a Resolved,
    results: T,
}

fn emit<T: Serialize>(command: &str, cfg: &Resolved, results: T) -> Result<()> {
    let doc = toml::to_string_pretty(&Report { command, config: cfg, results })
        .context("report serialization failed")?;
    match &cfg.out {
        Some(path) => std::fs::write(path, &doc)
            .with_context(|| format!("cannot write report to {}", path.display()))?,
        None => print!("{doc}"),
    }
    Ok(())
}

fn build_instance(cfg: &Resolved) -> Result<OaxPuf> {
    let (x, y, z) = cfg.topology;
    let seed = RngSeed::new(cfg.seed).derive(0xA11CE);
    let puf = match cfg.target_ber {
        Some(ber) => sample_oax_with_ber(x, y, z, cfg.stages, ber, seed),
        None => sample_oax(x, y, z, cfg.stages, cfg.sigma_noise, seed),
    }?;
    Ok(puf)
}

fn cmd_gen(args: &CommonArgs) -> Result<()> {
    let cfg = resolve(args)?;
    let out = cfg
        .out
        .clone()
        .unwrap_or_else(|| Path::new("dataset.crpb1").to_path_buf());
    let puf = build_instance(&cfg)?;
    let ds_seed = RngSeed::new(cfg.seed);
    let ds = if cfg.repeats == 0 {
        collect_crps(&puf, cfg.crps, ds_seed)
    } else {
        collect_reliability(&puf, cfg.crps, cfg.repeats, ds_seed)?
    };
    save_dataset(&ds, &out)?;
    eprintln!(
        "wrote {} records (topology {},{},{}, n={}, repeats={}) to {}",
        ds.len(),
        cfg.topology.0,
        cfg.topology.1,
        cfg.topology.2,
        cfg.stages,
        cfg.repeats,
        out.display()
    );
    Ok(())
}

#[derive(Serialize)]
struct EvalResults {
    member_expected_ber: Vec<f64>,
    empirical_ber: f64,
    empirical_ber_std_error: f64,
    empirical_u0: f64,
    empirical_u0_std_error: f64,
    analytic_beta_oax_at_mean_member_ber: f64,
}

fn cmd_eval(args: &CommonArgs) -> Result<()> {
    let cfg = resolve(args)?;
    let puf = build_instance(&cfg)?;
    let (x, y, z) = cfg.topology;
    let seed = RngSeed::new(cfg.seed);
    let member_expected_ber: Vec<f64> = puf
        .members()
        .enumerate()
        .map(|(i, m)| expected_apuf_ber(m, 20_000, seed.derive(0xBE7 + i as u64)))
        .collect();
    let mean_beta =
        member_expected_ber.iter().sum::<f64>() / member_expected_ber.len() as f64;
    let ber = measure_ber(&puf, cfg.crps, cfg.repeats.max(1), seed.derive(1));
    let u0 = measure_uniformity(&puf, cfg.crps, seed.derive(2));
    emit(
        "eval",
        &cfg,
        EvalResults {
            member_expected_ber,
            empirical_ber: ber.value,
            empirical_ber_std_error: ber.std_error(),
            empirical_u0: u0.value,
            empirical_u0_std_error: u0.std_error(),
            analytic_beta_oax_at_mean_member_ber: beta_oax(x, y, z, mean_beta)?,
        },
    )
}

#[derive(Serialize)]
struct MetricsResults {
    beta_or: f64,
    beta_and: f64,
    beta_xor: f64,
    beta_oax: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    oracle_beta_or: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    oracle_beta_and: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    oracle_beta_xor: Option<f64>,
    u_or0: f64,
    u_and1: f64,
    u_xor0: f64,
    u0: f64,
    u1: f64,
}

fn cmd_metrics(args: &CommonArgs) -> Result<()> {
    let cfg = resolve(args)?;
    let (x, y, z) = cfg.topology;
    let beta = cfg.member_ber;
    let b = BlockBer::compute(x, y, z, beta)?;
    let u = uniformity_profile(x, y, z)?;
    let oracle = |kind: BlockKind, size: usize| -> Option<f64> {
        (1..=6).contains(&size).then(|| exact_flip_oracle(kind, size, beta).expect("size checked"))
    };
    emit(
        "metrics",
        &cfg,
        MetricsResults {
            beta_or: b.beta_or,
            beta_and: b.beta_and,
            beta_xor: b.beta_xor,
            beta_oax: b.beta_oax,
            oracle_beta_or: oracle(BlockKind::Or, x),
            oracle_beta_and: oracle(BlockKind::And, y),
            oracle_beta_xor: oracle(BlockKind::Xor, z),
            u_or0: u.u_or0,
            u_and1: u.u_and1,
            u_xor0: u.u_xor0,
            u0: u.u0,
            u1: u.u1,
        },
    )
}

#[derive(Serialize)]
struct AttackResults {
    method: String,
    accuracy: f64,
    converged: bool,
    wall_time_seconds: f64,
    trial_accuracies: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    attributed_member: Option<usize>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    runs: Vec<EsRunRow>,
    #[serde(skip_serializing_if = "Option::is_none")]
    mlp_hidden_widths: Option<(usize, usize, usize)>,
}

#[derive(Serialize)]
struct EsRunRow {
    run: usize,
    fitness: f64,
    accuracy: f64,
    converged: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    attributed_member: Option<usize>,
}

fn cmd_attack(args: &CommonArgs) -> Result<()> {
    let cfg = resolve(args)?;
    let method = cfg
        .method
        .clone()
        .ok_or_else(|| anyhow::anyhow!("--method is required (lr | mlp | cmaes | hybrid)"))?;
    let puf = build_instance(&cfg)?;
    let seed = RngSeed::new(cfg.seed);
    let test = collect_crps(&puf, cfg.test_crps, seed.derive(2));
    let attack_seed = seed.derive(3);

    let results = match method.as_str() {
        "lr" => {
            let train = collect_crps(&puf, cfg.crps, seed.derive(1));
            let mut lc = LrConfig { restarts: cfg.trials, ..LrConfig::default() };
            if cfg.epochs > 0 {
                lc.epochs = cfg.epochs;
            }
            let (_, report) =
                pufbench_core::lr_attack(&train, &test, cfg.topology, &lc, attack_seed)?;
            AttackResults {
                method,
                accuracy: report.accuracy,
                converged: report.converged,
                wall_time_seconds: report.wall_time,
                trial_accuracies: report.trial_accuracies,
                attributed_member: None,
                runs: vec![],
                mlp_hidden_widths: None,
            }
        }
        "mlp" => {
            let train = collect_crps(&puf, cfg.crps, seed.derive(1));
            let mut mc = MlpConfig {
                trials: cfg.trials,
                batch_size: cfg.batch_size,
                ..MlpConfig::default()
            };
            if cfg.epochs > 0 {
                mc.epochs = cfg.epochs;
            }
            let (model, report) =
                pufbench_core::mlp_attack(&train, &test, cfg.topology, &mc, attack_seed)?;
            AttackResults {
                method,
                accuracy: report.accuracy,
                converged: report.converged,
                wall_time_seconds: report.wall_time,
                trial_accuracies: report.trial_accuracies,
                attributed_member: None,
                runs: vec![],
                mlp_hidden_widths: Some(model.hidden_widths()),
            }
        }
        "cmaes" => {
            if cfg.repeats == 0 {
                bail!("cmaes needs repeated measurements; set --repeats >= 2");
            }
            let train = collect_reliability(&puf, cfg.crps, cfg.repeats, seed.derive(1))?;
            let outcomes = pufbench_core::cmaes_reliability_attack(
                &puf,
                &train,
                cfg.runs,
                &CmaesConfig::default(),
                attack_seed,
            )?;
            let rows: Vec<EsRunRow> = outcomes
                .iter()
                .enumerate()
                .map(|(i, (cand, rep))| EsRunRow {
                    run: i,
                    fitness: cand.fitness,
                    accuracy: rep.accuracy,
                    converged: rep.converged,
                    attributed_member: rep.attributed_member,
                })
                .collect();
            let best = outcomes
                .iter()
                .max_by(|a, b| a.0.fitness.total_cmp(&b.0.fitness))
                .expect("runs >= 1");
            AttackResults {
                method,
                accuracy: best.1.accuracy,
                converged: best.1.converged,
                wall_time_seconds: outcomes.iter().map(|(_, r)| r.wall_time).sum(),
                trial_accuracies: rows.iter().map(|r| r.accuracy).collect(),
                attributed_member: best.1.attributed_member,
                runs: rows,
                mlp_hidden_widths: None,
            }
        }
        "hybrid" => {
            if cfg.repeats == 0 {
                bail!("hybrid needs repeated measurements; set --repeats >= 2");
            }
            let train = collect_reliability(&puf, cfg.crps, cfg.repeats, seed.derive(1))?;
            let mut hc = HybridConfig {
                trials: cfg.trials,
                batch_size: cfg.batch_size,
                ..HybridConfig::default()
            };
            if cfg.epochs > 0 {
                hc.epochs = cfg.epochs;
            }
            let (_, report) =
                pufbench_core::hybrid_attack(&train, &test, cfg.topology, &hc, attack_seed)?;
            AttackResults {
                method,
                accuracy: report.accuracy,
                converged: report.converged,
                wall_time_seconds: report.wall_time,
                trial_accuracies: report.trial_accuracies,
                attributed_member: None,
                runs: vec![],
                mlp_hidden_widths: None,
            }
        }
        other => bail!("unknown method {other:?} (expected lr | mlp | cmaes | hybrid)"),
    };
    emit("attack", &cfg, results)
}

#[derive(Serialize)]
struct SweepRow {
    x: usize,
    y: usize,
    z: usize,
    analytic_beta_oax: f64,
    empirical_beta_oax: f64,
    std_error: f64,
}

#[derive(Serialize)]
struct UniformityRow {
    x: usize,
    y: usize,
    z: usize,
    analytic_u1: f64,
    simulated_u0: f64,
    std_error: f64,
}

#[derive(Serialize)]
struct ValidateResults {
    reliability_sweep: Vec<SweepRow>,
    uniformity_grid: Vec<UniformityRow>,
}

/// The uniformity validation grid: every (x,y,z) evaluated in simulation.
pub const UNIFORMITY_GRID: [(usize, usize, usize); 19] = [
    (1, 2, 2),
    (2, 1, 2),
    (2, 2, 1),
    (2, 2, 2),
    (1, 3, 2),
    (3, 1, 2),
    (2, 3, 1),
    (3, 2, 2),
    (2, 3, 2),
    (2, 2, 3),
    (2, 4, 1),
    (4, 2, 2),
    (2, 4, 2),
    (2, 2, 4),
    (2, 5, 1),
    (5, 2, 2),
    (2, 5, 2),
    (2, 2, 5),
    (2, 6, 1),
];

fn cmd_validate(args: &CommonArgs) -> Result<()> {
    let cfg = resolve(args)?;
    let beta = cfg.member_ber;
    let seed = RngSeed::new(cfg.seed);
    let mut reliability_sweep = Vec::new();
    let sweeps: Vec<(usize, usize, usize)> = (2..=6)
        .map(|z| (2, 2, z))
        .chain((2..=6).map(|x| (x, 2, 2)))
        .chain((2..=6).map(|y| (2, y, 2)))
        .collect();
    for (i, (x, y, z)) in sweeps.into_iter().enumerate() {
        let puf = sample_oax_with_ber(x, y, z, cfg.stages, beta, seed.derive(100 + i as u64))?;
        let est = measure_ber(&puf, cfg.crps, 1, seed.derive(200 + i as u64));
        reliability_sweep.push(SweepRow {
            x,
            y,
            z,
            analytic_beta_oax: beta_oax(x, y, z, beta)?,
            empirical_beta_oax: est.value,
            std_error: est.std_error(),
        });
    }
    let mut uniformity_grid = Vec::new();
    for (i, (x, y, z)) in UNIFORMITY_GRID.into_iter().enumerate() {
        let est = simulate_uniformity(x, y, z, 10_000, seed.derive(300 + i as u64))?;
        uniformity_grid.push(UniformityRow {
            x,
            y,
            z,
            analytic_u1: uniformity_profile(x, y, z)?.u1,
            simulated_u0: est.value,
            std_error: est.std_error(),
        });
    }
    emit("validate", &cfg, ValidateResults { reliability_sweep, uniformity_grid })
}
