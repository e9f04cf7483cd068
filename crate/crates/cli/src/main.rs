//! `metawave` command-line runner.
//!
//! Exit codes: 0 success, 1 configuration error, 2 solver failure,
//! 3 validation failure.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use metawave_core::runner::{FailureKind, RunMode, RunReport, ScenarioConfig};
use metawave_core::{parse_config, parse_config_str, run_mu_sweep, run_scenario, run_sweep, verify_oracle, Error};

const DEFAULT_OUT: &str = "metawave-out";
const ORACLE_DRAWS: usize = 100;
const ORACLE_TOL: f64 = 1e-10;

#[derive(Parser)]
#[command(name = "metawave", version, about = "Slab transmission through periodic meta-materials")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// JSON scenario configuration (defaults when omitted)
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (overrides `output` in the configuration)
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for parallel sweeps
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Seed for the randomized coefficient check
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
}

#[derive(Subcommand)]
enum Command {
    /// Closed-form slab coefficients for all four geometries
    Coeffs,
    /// Effective tensors from the unit-cell problems
    Cell,
    /// Effective permeability over a frequency grid
    MuSweep,
    /// Full-resolution solves for the configured polarizations
    SolveFine,
    /// Homogenized pipeline with corrector reconstruction
    SolveHmm,
    /// Every mode listed in the configuration
    Run,
    /// The configured modes at every frequency of the sweep grid
    Sweep,
}

fn load(common: &Common) -> Result<ScenarioConfig, Error> {
    match &common.config {
        Some(path) => parse_config(path),
        None => parse_config_str("{}"),
    }
}

fn with_modes(mut cfg: ScenarioConfig, modes: &[RunMode]) -> ScenarioConfig {
    cfg.modes = modes.to_vec();
    cfg
}

fn summarize(report: &RunReport) {
    if let Some(rows) = &report.coeffs {
        for r in rows {
            println!(
                "{:<7} |R| = {:.6}  |T| = {:.6}",
                r.geometry.name(),
                r.coeffs.r.norm(),
                r.coeffs.t.norm()
            );
        }
    }
    if let Some(c) = &report.cell {
        if let Some(g) = c.gamma {
            println!("gamma = {g:.6}");
        }
        if let Some(mu) = c.mu_pc {
            println!("mu_pc = diag({:.6}, {:.6}, {:.6})", mu[0], mu[1], mu[2]);
        }
        println!(
            "A_eff = [[{:.6}, {:.3e}], [{:.3e}, {:.6}]]",
            c.a_eff[0][0], c.a_eff[0][1], c.a_eff[1][0], c.a_eff[1][1]
        );
        if let Some(mu) = c.mu_hc {
            println!("mu_eff = {:.6} {:+.6}i", mu.re, mu.im);
        }
    }
    if let Some(h) = &report.hmm {
        println!(
            "hmm: T_macro = {:.4}  T_fine = {:.4}  rel_err_QL = {:.4}  rel_err_QM = {:.4}",
            h.t_num_macro, h.t_num_fine, h.rel_err_ql, h.rel_err_qm
        );
    }
    for f in &report.fine {
        println!(
            "{:<10} T_num = {:.4}  |u|_QM = {:.4e}  |u|_inclusions = {:.4e}",
            f.mode.name(),
            f.t_num,
            f.norm_qm,
            f.norm_inclusions
        );
    }
    if let Some(rows) = &report.sweep {
        let failed = rows.iter().filter(|r| r.error.is_some()).count();
        println!("sweep: {} samples, {failed} failed", rows.len());
    }
    for f in &report.failures {
        eprintln!("failed: {} ({:?}): {}", f.stage, f.kind, f.message);
    }
}

fn execute(cli: &Cli) -> Result<i32, Error> {
    let cfg = load(&cli.common)?;
    let out: PathBuf = cli
        .common
        .out
        .clone()
        .or_else(|| cfg.output.clone())
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT));
    let out = Some(out.as_path());
    let report = match cli.command {
        Command::Coeffs => {
            let report = run_scenario(&with_modes(cfg, &[RunMode::Coeffs]), out)?;
            let check = verify_oracle(ORACLE_DRAWS, cli.common.seed)?;
            write_json(out, "oracle_check.json", &check)?;
            println!(
                "oracle check (seed {}): max deviation {:.2e}, energy defect {:.2e}",
                check.seed, check.max_deviation, check.max_energy_defect
            );
            if !check.passed(ORACLE_TOL) {
                eprintln!("closed-form coefficients disagree with the interface-matching oracle");
                return Ok(report.exit_code().max(FailureKind::Validation.exit_code()));
            }
            report
        }
        Command::Cell => run_scenario(&with_modes(cfg, &[RunMode::Cell]), out)?,
        Command::MuSweep => {
            let curve = run_mu_sweep(&cfg, out)?;
            for i in curve.sign_changes() {
                let (sa, sb) = (&curve.samples[i], &curve.samples[i + 1]);
                println!("Re mu_eff changes sign for k0 in [{:.4}, {:.4}]", sa.k0, sb.k0);
            }
            let failed = curve.failed();
            if failed > 0 {
                eprintln!("{failed} samples failed");
                return Ok(FailureKind::Solver.exit_code());
            }
            return Ok(0);
        }
        Command::SolveFine => {
            let mut modes: Vec<RunMode> = cfg
                .modes
                .iter()
                .copied()
                .filter(|m| matches!(m, RunMode::EParallel | RunMode::HParallel))
                .collect();
            if modes.is_empty() {
                modes = vec![RunMode::EParallel, RunMode::HParallel];
            }
            run_scenario(&with_modes(cfg, &modes), out)?
        }
        Command::SolveHmm => run_scenario(&with_modes(cfg, &[RunMode::Hmm]), out)?,
        Command::Run => run_scenario(&cfg, out)?,
        Command::Sweep => run_sweep(&cfg, out)?,
    };
    summarize(&report);
    Ok(report.exit_code())
}

fn write_json<T: serde::Serialize>(out: Option<&Path>, name: &str, value: &T) -> Result<(), Error> {
    if let Some(dir) = out {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join(name), serde_json::to_string_pretty(value)?)?;
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Some(n) = cli.common.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot configure {n} threads: {e}");
            return ExitCode::from(1);
        }
    }
    let code = match execute(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            FailureKind::of(&e).exit_code()
        }
    };
    ExitCode::from(code as u8)
}
