//! Single executable with subcommands for sampling, partition estimation,
//! spectral verification, and the benchmark experiments, all driven by one
//! TOML config. Every run writes a manifest (config hash, resolved config,
//! seed, thread cap, version) next to its outputs so it can be reproduced
//! exactly.
//!
//! Exit codes: 0 success, 2 config error, 3 numeric failure,
//! 4 verification failed.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use sha2::{Digest, Sha256};

use tempering::config::{Config, EstimateConfig, VerifyConfig, ZhatKind};
use tempering::error::Error;
use tempering::experiments::{
    run_accuracy_experiment, run_scaling_experiment, write_accuracy_csv, write_scaling_csv,
};
use tempering::kernels::{replicate_rng, run_chain_traced, StConfig, StState};
use tempering::ladder::{estimate_partitions, ladder_with_quadrature_zhat, Ladder};
use tempering::spectral::{
    projected_ddg_paths, random_instance, stationary_vector, verify_canonical_path_bound,
    verify_decomposition_theorem, verify_dirichlet_decomposition, verify_mixing_bound,
    verify_sandwich_and_gap_ratio, InitialDistribution, InstanceDesign, MaskSelect,
};

const EXIT_CONFIG: u8 = 2;
const EXIT_NUMERIC: u8 = 3;
const EXIT_VERIFICATION: u8 = 4;

#[derive(Parser)]
#[command(
    name = "tempering",
    about = "Simulated tempering Metropolis-Hastings with spectral verification and benchmarks",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct CommonOpts {
    /// Path to the TOML config.
    #[arg(long)]
    config: PathBuf,
    /// Root seed; overrides the config's `seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Cap on worker threads (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
    /// Output directory for artifacts and the manifest.
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
    /// Field overrides of the form section.field=value; may repeat.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Run the tempering chain and write the trajectory.
    Sample(CommonOpts),
    /// Estimate partition functions level by level and write the ladder.
    #[command(name = "estimate-z")]
    EstimateZ(CommonOpts),
    /// Run the randomized spectral verification suite.
    Verify(CommonOpts),
    /// Run the scaling or accuracy experiment.
    Experiment(CommonOpts),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (name, opts) = match &cli.command {
        Command::Sample(o) => ("sample", o.clone()),
        Command::EstimateZ(o) => ("estimate-z", o.clone()),
        Command::Verify(o) => ("verify", o.clone()),
        Command::Experiment(o) => ("experiment", o.clone()),
    };
    match run(name, &opts) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err}");
            match err {
                Error::Config(_) | Error::Argument(_) => ExitCode::from(EXIT_CONFIG),
                _ => ExitCode::from(EXIT_NUMERIC),
            }
        }
    }
}

fn run(command: &str, opts: &CommonOpts) -> Result<ExitCode, Error> {
    let text = fs::read_to_string(&opts.config)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", opts.config.display())))?;
    let mut doc: toml::Table = toml::from_str(&text).map_err(|e| Error::Config(e.to_string()))?;
    for assignment in &opts.overrides {
        Config::apply_override(&mut doc, assignment)?;
    }
    let resolved = toml::Value::Table(doc.clone());
    let config: Config = resolved
        .clone()
        .try_into()
        .map_err(|e| Error::Config(e.to_string()))?;
    let seed = opts.seed.or(config.seed).unwrap_or(0);

    fs::create_dir_all(&opts.out_dir)
        .map_err(|e| Error::Config(format!("cannot create {}: {e}", opts.out_dir.display())))?;
    write_manifest(command, opts, &text, &resolved, seed)?;

    let inner = || -> Result<ExitCode, Error> {
        match command {
            "sample" => cmd_sample(&config, seed, &opts.out_dir),
            "estimate-z" => cmd_estimate_z(&config, seed, &opts.out_dir),
            "verify" => cmd_verify(&config, &opts.out_dir),
            "experiment" => cmd_experiment(&config, seed, opts.threads, &opts.out_dir),
            _ => unreachable!(),
        }
    };
    match opts.threads {
        // Experiments manage their own pool so the thread cap also applies
        // when rayon was already initialized.
        None => inner(),
        Some(_) if command == "experiment" => inner(),
        Some(k) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(k.max(1))
                .build()
                .map_err(|e| Error::Numeric(format!("thread pool: {e}")))?;
            pool.install(inner)
        }
    }
}

fn write_manifest(
    command: &str,
    opts: &CommonOpts,
    raw_config: &str,
    resolved: &toml::Value,
    seed: u64,
) -> Result<(), Error> {
    let mut hasher = Sha256::new();
    hasher.update(raw_config.as_bytes());
    let digest = hasher.finalize();
    let manifest = serde_json::json!({
        "command": command,
        "config_path": opts.config.display().to_string(),
        "config_sha256": format!("{digest:x}"),
        "overrides": opts.overrides,
        "seed": seed,
        "threads": opts.threads,
        "version": env!("CARGO_PKG_VERSION"),
        "resolved_config": resolved,
    });
    let path = opts.out_dir.join("manifest.json");
    fs::write(&path, serde_json::to_string_pretty(&manifest).unwrap())
        .map_err(|e| Error::Config(format!("cannot write {}: {e}", path.display())))?;
    Ok(())
}

fn build_ladder(
    config: &Config,
    target: &tempering::target::GaussianMixtureTarget,
    schedule: &tempering::ladder::ScheduleParams,
    zhat: &ZhatKind,
    estimate: &EstimateConfig,
    seed: u64,
) -> Result<Ladder, Error> {
    let _ = config;
    match zhat {
        ZhatKind::Quadrature => ladder_with_quadrature_zhat(target, &schedule.betas),
        ZhatKind::Unit => Ladder::with_unit_zhat(schedule.betas.clone()),
        ZhatKind::Estimate => estimate_partitions(
            target,
            schedule,
            estimate.samples_per_level,
            estimate.steps_per_run,
            estimate.cap(),
            seed ^ 0x5eed_2a11,
        ),
    }
}

fn cmd_sample(config: &Config, seed: u64, out_dir: &Path) -> Result<ExitCode, Error> {
    let target = config.require_target()?;
    let schedule = config.require_schedule(&target)?;
    for w in &schedule.warnings {
        eprintln!("warning: {w}");
    }
    let sampler = config
        .sampler
        .as_ref()
        .ok_or_else(|| Error::Config("missing [sampler] section".into()))?;
    let estimate = config.estimate.clone().unwrap_or_default();
    let ladder = build_ladder(config, &target, &schedule, &sampler.zhat, &estimate, seed)?;

    let cfg = StConfig {
        ladder,
        lambda: schedule.lambda,
        eta: schedule.eta,
        lazy: sampler.lazy,
        zeta: sampler.zeta,
        seed,
    };
    let mut rng = replicate_rng(seed, 0);
    let trace = run_chain_traced(
        &target,
        &cfg,
        sampler.init.clone(),
        sampler.init_level,
        sampler.steps,
        &mut rng,
        sampler.record_every,
    )?;

    let path = out_dir.join("samples.csv");
    let mut file = fs::File::create(&path)
        .map_err(|e| Error::Config(format!("cannot write {}: {e}", path.display())))?;
    let dim = target.dim();
    let header: Vec<String> = (1..=dim).map(|k| format!("x{k}")).collect();
    writeln!(file, "step,level,{}", header.join(",")).map_err(io_err)?;
    let write_row = |file: &mut fs::File, step: u64, state: &StState| -> Result<(), Error> {
        let coords: Vec<String> = state.position.iter().map(|v| v.to_string()).collect();
        writeln!(file, "{},{},{}", step, state.level, coords.join(",")).map_err(io_err)
    };
    write_row(
        &mut file,
        0,
        &StState {
            level: sampler.init_level,
            position: sampler.init.clone(),
        },
    )?;
    for (k, state) in trace.iter().enumerate() {
        write_row(&mut file, (k as u64 + 1) * sampler.record_every, state)?;
    }
    println!(
        "sample: {} steps on {} levels, {} rows -> {}",
        sampler.steps,
        cfg.ladder.levels(),
        trace.len() + 1,
        path.display()
    );
    Ok(ExitCode::SUCCESS)
}

fn cmd_estimate_z(config: &Config, seed: u64, out_dir: &Path) -> Result<ExitCode, Error> {
    let target = config.require_target()?;
    let schedule = config.require_schedule(&target)?;
    let estimate = config.estimate.clone().unwrap_or_default();
    let ladder = estimate_partitions(
        &target,
        &schedule,
        estimate.samples_per_level,
        estimate.steps_per_run,
        estimate.cap(),
        seed,
    )?;
    let path = out_dir.join("ladder.csv");
    let mut file = fs::File::create(&path)
        .map_err(|e| Error::Config(format!("cannot write {}: {e}", path.display())))?;
    writeln!(file, "i,beta,log_zhat").map_err(io_err)?;
    for (idx, (&beta, &lz)) in ladder.betas().iter().zip(ladder.log_zhat()).enumerate() {
        writeln!(file, "{},{},{}", idx + 1, beta, lz).map_err(io_err)?;
    }
    println!("estimate-z: {} levels -> {}", ladder.levels(), path.display());
    Ok(ExitCode::SUCCESS)
}

/// One verification row; kept in sync with the report header below.
struct VerifyRow {
    seed: u64,
    levels: usize,
    components: usize,
    points: usize,
    gap: f64,
    c1: f64,
    c2: f64,
    c3: f64,
    theta: f64,
    phi: f64,
    c_m: f64,
    holds: bool,
    lazy: bool,
    l2_bound_ok: Option<bool>,
    db_residual: f64,
    stationarity_err: f64,
    dirichlet_err: f64,
    sandwich_ok: bool,
    gap_ratio_ok: bool,
    canonical_ok: bool,
    mixing_tv: f64,
    mixing_ok: bool,
}

impl VerifyRow {
    fn all_ok(&self) -> bool {
        self.holds
            && self.sandwich_ok
            && self.gap_ratio_ok
            && self.canonical_ok
            && self.mixing_ok
            && self.db_residual <= 1e-12
            && self.stationarity_err <= 1e-10
            && self.dirichlet_err <= 1e-10
    }
}

fn verify_one(seed: u64, vc: &VerifyConfig) -> Result<VerifyRow, Error> {
    let design = InstanceDesign {
        lambda: vc.lambda,
        zeta: vc.zeta,
        min_points: vc.min_points,
        max_points: vc.max_points,
        phi_floor: vc.phi_floor,
        mask: None,
    };
    let inst = random_instance(seed, &design)?;

    let eigen_pi = stationary_vector(&inst.chain.full)?;
    let stationarity_err = (&eigen_pi - &inst.chain.stationary).abs().max();

    let mut rng = replicate_rng(seed, 0xd1a1);
    let dirichlet = verify_dirichlet_decomposition(&inst.chain, vc.dirichlet_trials, &mut rng);

    let mut theorem = verify_decomposition_theorem(&inst.chain, &inst.projected)?;
    if (vc.c3_scale_hook - 1.0).abs() > 0.0 {
        let c3 = theorem.c3 * vc.c3_scale_hook;
        let lambda = inst.chain.lambda;
        theorem.c3 = c3;
        theorem.c_m = (3.0 * theorem.theta * c3).max(
            theorem.theta * theorem.c1 * theorem.c2 * ((2.0 + lambda) * c3 + 1.0)
                / (theorem.phi * (1.0 - lambda)),
        );
        theorem.holds = theorem.gap * theorem.c_m >= 1.0 - 1e-9;
    }

    let sandwich = verify_sandwich_and_gap_ratio(&inst.chain, &inst.star)?;

    let paths = projected_ddg_paths(inst.projected.levels, inst.projected.components);
    let mut rng = replicate_rng(seed, 0xca40);
    let canonical =
        verify_canonical_path_bound(&inst.projected.chain, &paths, vc.path_trials, &mut rng)?;

    // Mixing runs on the same target with a full-grid restriction so the
    // start-mass hypothesis holds for a point start at the mode.
    let full_design = InstanceDesign {
        mask: Some(MaskSelect::Full),
        ..design
    };
    let full_inst = random_instance(seed, &full_design)?;
    let mode = full_inst.chain.mode_state();
    let mixing = verify_mixing_bound(
        &full_inst.chain,
        &full_inst.projected,
        &InitialDistribution::PointMass(mode),
        vc.mixing_eps,
    )?;

    Ok(VerifyRow {
        seed,
        levels: inst.chain.levels,
        components: inst.chain.components,
        points: inst.grid_spec.points_per_axis,
        gap: theorem.gap,
        c1: theorem.c1,
        c2: theorem.c2,
        c3: theorem.c3,
        theta: theorem.theta,
        phi: theorem.phi,
        c_m: theorem.c_m,
        holds: theorem.holds,
        lazy: theorem.lazy,
        l2_bound_ok: theorem.l2_bound_ok,
        db_residual: inst.projected.max_db_residual,
        stationarity_err,
        dirichlet_err: dirichlet.max_rel_err,
        sandwich_ok: sandwich.sandwich_ok,
        gap_ratio_ok: sandwich.ratio_ok,
        canonical_ok: canonical.holds,
        mixing_tv: mixing.tv,
        mixing_ok: mixing.holds,
    })
}

fn cmd_verify(config: &Config, out_dir: &Path) -> Result<ExitCode, Error> {
    use rayon::prelude::*;
    let vc = config.verify.clone().unwrap_or_default();
    if vc.instances == 0 {
        return Err(Error::Config("verify.instances must be at least 1".into()));
    }
    let seeds: Vec<u64> = (0..vc.instances as u64).map(|k| vc.start_seed + k).collect();
    let rows: Vec<Result<VerifyRow, Error>> =
        seeds.par_iter().map(|&s| verify_one(s, &vc)).collect();

    let path = out_dir.join("report.csv");
    let mut file = fs::File::create(&path)
        .map_err(|e| Error::Config(format!("cannot write {}: {e}", path.display())))?;
    writeln!(
        file,
        "# decomposition constant: C_M = max{{3 theta C3, theta C1 C2 ((2+lambda) C3 + 1) / (phi (1-lambda))}}"
    )
    .map_err(io_err)?;
    writeln!(
        file,
        "# conventions: no trailing Dirichlet-form factor in C_M; the second ladder-ratio bound is applied as 1 + fraction"
    )
    .map_err(io_err)?;
    writeln!(
        file,
        "seed,L,n,m,gap,C1,C2,C3,theta,phi,C_M,holds,lazy,l2_bound_ok,db_residual,stationarity_err,dirichlet_err,sandwich_ok,gap_ratio_ok,canonical_ok,mixing_tv,mixing_ok"
    )
    .map_err(io_err)?;

    let mut all_ok = true;
    for row in rows {
        let row = row?;
        let ok = row.all_ok();
        all_ok &= ok;
        writeln!(
            file,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            row.seed,
            row.levels,
            row.components,
            row.points,
            row.gap,
            row.c1,
            row.c2,
            row.c3,
            row.theta,
            row.phi,
            row.c_m,
            row.holds,
            row.lazy,
            row.l2_bound_ok.map(|b| b.to_string()).unwrap_or_default(),
            row.db_residual,
            row.stationarity_err,
            row.dirichlet_err,
            row.sandwich_ok,
            row.gap_ratio_ok,
            row.canonical_ok,
            row.mixing_tv,
            row.mixing_ok,
        )
        .map_err(io_err)?;
        println!(
            "instance {}: L={} n={} m={} gap={:.3e} 1/C_M={:.3e} {}",
            row.seed,
            row.levels,
            row.components,
            row.points,
            row.gap,
            1.0 / row.c_m,
            if ok { "ok" } else { "FAILED" }
        );
    }
    println!("report -> {}", path.display());
    if all_ok {
        Ok(ExitCode::SUCCESS)
    } else {
        eprintln!("verification failed: see {}", path.display());
        Ok(ExitCode::from(EXIT_VERIFICATION))
    }
}

fn cmd_experiment(
    config: &Config,
    seed: u64,
    threads: Option<usize>,
    out_dir: &Path,
) -> Result<ExitCode, Error> {
    let exp = config
        .experiment
        .as_ref()
        .ok_or_else(|| Error::Config("missing [experiment] section".into()))?;
    match exp.kind.as_str() {
        "scaling" => {
            let rows = run_scaling_experiment(&exp.scaling(seed)?, threads)?;
            let path = out_dir.join("scaling.csv");
            let mut file = fs::File::create(&path)
                .map_err(|e| Error::Config(format!("cannot write {}: {e}", path.display())))?;
            write_scaling_csv(&rows, &mut file).map_err(io_err)?;
            for r in &rows {
                println!(
                    "{} D={}: crossing_N={} censored={}",
                    r.algorithm.tag(),
                    r.separation,
                    r.crossing_n.map(|v| v.to_string()).unwrap_or_else(|| "-".into()),
                    r.censored
                );
            }
            println!("scaling table -> {}", path.display());
        }
        "accuracy" => {
            let rows = run_accuracy_experiment(&exp.accuracy(seed)?, threads)?;
            let path = out_dir.join("accuracy.csv");
            let mut file = fs::File::create(&path)
                .map_err(|e| Error::Config(format!("cannot write {}: {e}", path.display())))?;
            write_accuracy_csv(&rows, &mut file).map_err(io_err)?;
            println!("accuracy table ({} rows) -> {}", rows.len(), path.display());
        }
        other => {
            return Err(Error::Config(format!(
                "unknown experiment.kind '{other}' (scaling | accuracy)"
            )));
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn io_err(e: std::io::Error) -> Error {
    Error::Numeric(format!("io: {e}"))
}
