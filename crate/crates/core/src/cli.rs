//! Command-line front end: spectra, gap scans, finite-size scaling, adiabatic
//! sweeps, perturbed protection runs, the duality cross-check, and lattice
//! dumps. JSON in, JSON/CSV out.
//!
//! Exit codes: 0 success (and PASS for check commands), 2 configuration
//! error, 3 numerical failure, 4 a requested check ran but FAILed.

use crate::evolve::{
    perturbed_protection_experiment, propagate, EvolutionSpace, EvolveError, SweepConfig,
};
use crate::lattice::build_torus;
use crate::model::{interpolated_hamiltonian, ModelParams, Schedule};
use crate::sector::{enumerate_sector, project_hamiltonian, SectorLabel};
use crate::spectral::{duality_spectrum_check, gap_scan, low_spectrum, SolverOptions, SpectralError};
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::json;
use std::io::Write as _;
use std::path::{Path, PathBuf};

const EXIT_OK: i32 = 0;
const EXIT_CONFIG: i32 = 2;
const EXIT_NUMERICAL: i32 = 3;
const EXIT_CHECK_FAILED: i32 = 4;

#[derive(Parser)]
#[command(name = "toric-sim", version, about = "Exact toric-code phase-transition and adiabatic-sweep simulator")]
struct Cli {
    /// Worker threads for the matrix-free kernels (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Seed for the eigensolver start vectors.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Write the JSON report here instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Serialize, Deserialize)]
struct ModelArgs {
    /// Linear lattice size L (2..=5).
    #[arg(long, default_value_t = 2)]
    #[serde(default = "default_l")]
    l: usize,
    /// Star coupling U.
    #[arg(long, default_value_t = 10.0)]
    #[serde(default = "default_u")]
    u: f64,
    /// Plaquette coupling g.
    #[arg(long, default_value_t = 1.0)]
    #[serde(default = "default_one")]
    g: f64,
    /// String tension ξ.
    #[arg(long, default_value_t = 1.0)]
    #[serde(default = "default_one")]
    xi: f64,
    /// Interpolation schedule.
    #[arg(long, value_enum, default_value_t = ScheduleArg::TrigSmooth)]
    #[serde(default = "default_schedule")]
    schedule: ScheduleArg,
}

fn default_l() -> usize {
    2
}

fn default_u() -> f64 {
    10.0
}

fn default_one() -> f64 {
    1.0
}

fn default_schedule() -> ScheduleArg {
    ScheduleArg::TrigSmooth
}

#[derive(clap::ValueEnum, Clone, Copy, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
enum ScheduleArg {
    Linear,
    TrigSmooth,
}

impl From<ScheduleArg> for Schedule {
    fn from(s: ScheduleArg) -> Schedule {
        match s {
            ScheduleArg::Linear => Schedule::Linear,
            ScheduleArg::TrigSmooth => Schedule::TrigSmooth,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Lowest eigenvalues of H(τ) in the sector-(0,0) block.
    Spectrum {
        #[command(flatten)]
        model: ModelArgs,
        /// Interpolation parameter τ in [0, 1].
        #[arg(long, default_value_t = 1.0)]
        tau: f64,
        /// Number of eigenvalues.
        #[arg(long, default_value_t = 4)]
        m: usize,
    },
    /// Sector-(0,0) gap along the schedule, with a refined minimum.
    GapScan {
        #[command(flatten)]
        model: ModelArgs,
        /// Number of uniform τ grid points.
        #[arg(long, default_value_t = 41)]
        points: usize,
        /// Also write a CSV table (tau, f, lambda1/lambda2, gap).
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Minimum gap vs L and the log-log scaling slope.
    Scaling {
        #[command(flatten)]
        model: ModelArgs,
        /// Lattice sizes, e.g. --sizes 2 --sizes 3 --sizes 4.
        #[arg(long = "sizes", default_values_t = [2usize, 3, 4])]
        sizes: Vec<usize>,
        #[arg(long, default_value_t = 21)]
        points: usize,
    },
    /// Adiabatic sweep from the polarized state to the topological phase.
    Sweep {
        /// JSON sweep configuration file; flags below override its fields.
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        model: ModelArgs,
        /// Total physical sweep time T.
        #[arg(long, default_value_t = 50.0)]
        total_time: f64,
        #[arg(long, default_value_t = 21)]
        checkpoints: usize,
        /// Uniform σ^x perturbation strength V.
        #[arg(long, default_value_t = 0.0)]
        perturbation: f64,
        /// Also write a CSV table (tau, fidelity, energy, weights).
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Perturbed sweeps vs the topological protection bound.
    Protect {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, default_value_t = 50.0)]
        total_time: f64,
        /// Perturbation strengths V, e.g. --strengths 0.1 --strengths 0.25.
        #[arg(long = "strengths", default_values_t = [0.1, 0.25, 0.5])]
        strengths: Vec<f64>,
        #[arg(long, default_value_t = 21)]
        checkpoints: usize,
    },
    /// Gauge-block vs dual-Ising spectrum comparison.
    Duality {
        #[arg(long, default_value_t = 2)]
        l: usize,
        #[arg(long, default_value_t = 1.0)]
        lambda1: f64,
        #[arg(long, default_value_t = 1.0)]
        lambda2: f64,
        /// Number of levels to compare.
        #[arg(long, default_value_t = 8)]
        m: usize,
        #[arg(long, default_value_t = 1e-9)]
        tol: f64,
    },
    /// Serialize the lattice geometry and sector structure.
    LatticeDump {
        #[arg(long, default_value_t = 2)]
        l: usize,
    },
}

#[derive(Debug)]
enum CliError {
    Config(String),
    Numerical(String),
    CheckFailed,
    Io(std::io::Error),
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e)
    }
}

impl From<SpectralError> for CliError {
    fn from(e: SpectralError) -> Self {
        match e {
            SpectralError::Model(m) => CliError::Config(m.to_string()),
            SpectralError::Lattice(l) => CliError::Config(l.to_string()),
            other => CliError::Numerical(other.to_string()),
        }
    }
}

impl From<EvolveError> for CliError {
    fn from(e: EvolveError) -> Self {
        match e {
            EvolveError::NonPositiveTime(_)
            | EvolveError::NegativeStrength(_)
            | EvolveError::PerturbedTooLarge(_) => CliError::Config(e.to_string()),
            EvolveError::Model(m) => CliError::Config(m.to_string()),
            EvolveError::Lattice(l) => CliError::Config(l.to_string()),
            other => CliError::Numerical(other.to_string()),
        }
    }
}

impl From<crate::model::ModelError> for CliError {
    fn from(e: crate::model::ModelError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<crate::lattice::LatticeError> for CliError {
    fn from(e: crate::lattice::LatticeError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<crate::sector::SectorError> for CliError {
    fn from(e: crate::sector::SectorError) -> Self {
        CliError::Numerical(e.to_string())
    }
}

/// 17 significant digits: round-trips every f64 exactly.
fn full_precision(v: f64) -> String {
    format!("{v:.16e}")
}

fn write_csv(path: &Path, header: &str, rows: &[Vec<f64>]) -> Result<(), CliError> {
    let mut file = std::fs::File::create(path)?;
    writeln!(file, "{header}")?;
    for row in rows {
        let line: Vec<String> = row.iter().map(|&v| full_precision(v)).collect();
        writeln!(file, "{}", line.join(","))?;
    }
    Ok(())
}

fn emit(out: &Option<PathBuf>, report: &serde_json::Value) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(report).expect("report serializes");
    match out {
        Some(path) => std::fs::write(path, text + "\n")?,
        None => println!("{text}"),
    }
    Ok(())
}

fn model_params(model: &ModelArgs) -> Result<ModelParams, CliError> {
    ModelParams::new(model.u, model.g, model.xi).map_err(|e| CliError::Config(e.to_string()))
}

fn solver_options(seed: Option<u64>) -> SolverOptions {
    let mut opts = SolverOptions::default();
    if let Some(seed) = seed {
        opts.seed = seed;
    }
    opts
}

fn meta(resolved: serde_json::Value) -> serde_json::Value {
    json!({
        "version": env!("CARGO_PKG_VERSION"),
        "resolved_config": resolved,
    })
}

pub fn run() -> i32 {
    let cli = Cli::parse();
    if let Some(threads) = cli.threads {
        // A second initialization (e.g. in tests) is harmless to ignore.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
    }
    match dispatch(&cli) {
        Ok(()) => EXIT_OK,
        Err(CliError::Config(msg)) => {
            eprintln!("configuration error: {msg}");
            EXIT_CONFIG
        }
        Err(CliError::Numerical(msg)) => {
            eprintln!("numerical failure: {msg}");
            EXIT_NUMERICAL
        }
        Err(CliError::CheckFailed) => EXIT_CHECK_FAILED,
        Err(CliError::Io(e)) => {
            eprintln!("i/o error: {e}");
            EXIT_CONFIG
        }
    }
}

fn dispatch(cli: &Cli) -> Result<(), CliError> {
    let opts = solver_options(cli.seed);
    match &cli.command {
        Command::Spectrum { model, tau, m } => {
            let params = model_params(model)?;
            let lat = build_torus(model.l)?;
            let basis = enumerate_sector(&lat, &SectorLabel::neutral(&lat, (0, 0)))?;
            let h = interpolated_hamiltonian(&lat, &params, model.schedule.into(), *tau)?;
            let block = project_hamiltonian(&lat, &h, &basis)?;
            let m = (*m).clamp(1, block.dim());
            let spec = low_spectrum(&block, m, &opts)?;
            emit(
                &cli.out,
                &json!({
                    "meta": meta(json!({
                        "model": model, "tau": tau, "m": m, "solver": opts,
                    })),
                    "block_dim": block.dim(),
                    "eigenvalues": spec.eigenvalues,
                    "residuals": spec.residuals,
                }),
            )
        }
        Command::GapScan { model, points, csv } => {
            let params = model_params(model)?;
            if *points < 3 {
                return Err(CliError::Config("gap scan needs at least 3 points".into()));
            }
            let lat = build_torus(model.l)?;
            let grid: Vec<f64> =
                (0..*points).map(|k| k as f64 / (*points - 1) as f64).collect();
            let scan = gap_scan(&lat, &params, model.schedule.into(), &grid, &opts)?;
            if let Some(path) = csv {
                let rows: Vec<Vec<f64>> = (0..scan.taus.len())
                    .map(|i| vec![scan.taus[i], scan.fs[i], scan.coupling_ratios[i], scan.gaps[i]])
                    .collect();
                write_csv(path, "tau,f,coupling_ratio,gap", &rows)?;
            }
            emit(
                &cli.out,
                &json!({
                    "meta": meta(json!({ "model": model, "points": points, "solver": opts })),
                    "scan": scan,
                }),
            )
        }
        Command::Scaling { model, sizes, points } => {
            let params = model_params(model)?;
            if sizes.len() < 2 {
                return Err(CliError::Config("scaling needs at least 2 sizes".into()));
            }
            let grid: Vec<f64> =
                (0..*points).map(|k| k as f64 / (*points - 1) as f64).collect();
            let mut per_l = Vec::new();
            let mut logs = Vec::new();
            for &l in sizes {
                let lat = build_torus(l)?;
                let scan = gap_scan(&lat, &params, model.schedule.into(), &grid, &opts)?;
                logs.push(((l as f64).ln(), scan.gap_min.ln()));
                per_l.push(json!({
                    "l": l,
                    "gap_min": scan.gap_min,
                    "tau_star": scan.tau_star,
                    "ratio_at_min": scan.ratio_at_min,
                }));
            }
            let slope = least_squares_slope(&logs);
            emit(
                &cli.out,
                &json!({
                    "meta": meta(json!({
                        "model": model, "sizes": sizes, "points": points, "solver": opts,
                    })),
                    "per_l": per_l,
                    "log_log_slope": slope,
                }),
            )
        }
        Command::Sweep { config, model, total_time, checkpoints, perturbation, csv } => {
            let mut sweep = match config {
                Some(path) => {
                    let text = std::fs::read_to_string(path)?;
                    serde_json::from_str::<SweepConfig>(&text)
                        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?
                }
                None => {
                    let params = model_params(model)?;
                    let mut c = SweepConfig::new(
                        model.l,
                        params,
                        model.schedule.into(),
                        *total_time,
                    );
                    c.checkpoints = *checkpoints;
                    c.perturbation = *perturbation;
                    if *perturbation > 0.0 {
                        c.space = EvolutionSpace::Full;
                    }
                    c
                }
            };
            ModelParams::new(sweep.params.u, sweep.params.g, sweep.params.xi)
                .map_err(|e| CliError::Config(e.to_string()))?;
            if sweep.perturbation > 0.0 {
                sweep.space = EvolutionSpace::Full;
            }
            let result = propagate(&sweep)?;
            if let Some(path) = csv {
                let rows: Vec<Vec<f64>> = result
                    .checkpoints
                    .iter()
                    .map(|c| {
                        vec![
                            c.tau,
                            c.fidelity,
                            c.energy,
                            c.weights[0],
                            c.weights[1],
                            c.weights[2],
                            c.weights[3],
                            c.charged_weight,
                        ]
                    })
                    .collect();
                write_csv(
                    path,
                    "tau,fidelity,energy,weight_00,weight_10,weight_01,weight_11,charged_weight",
                    &rows,
                )?;
            }
            emit(
                &cli.out,
                &json!({
                    "meta": meta(serde_json::to_value(&result.config).expect("config serializes")),
                    "result": result,
                }),
            )
        }
        Command::Protect { model, total_time, strengths, checkpoints } => {
            let params = model_params(model)?;
            if strengths.iter().any(|&v| v < 0.0) {
                return Err(CliError::Config("perturbation strengths must be nonnegative".into()));
            }
            let mut base = SweepConfig::new(model.l, params, model.schedule.into(), *total_time);
            base.checkpoints = *checkpoints;
            let report = perturbed_protection_experiment(&base, strengths)?;
            let pass = report.pass;
            emit(
                &cli.out,
                &json!({
                    "meta": meta(json!({
                        "model": model, "total_time": total_time,
                        "strengths": strengths, "checkpoints": checkpoints,
                    })),
                    "report": report,
                    "verdict": if pass { "PASS" } else { "FAIL" },
                }),
            )?;
            if pass {
                Ok(())
            } else {
                Err(CliError::CheckFailed)
            }
        }
        Command::Duality { l, lambda1, lambda2, m, tol } => {
            if *lambda1 < 0.0 || *lambda2 < 0.0 || !(*tol > 0.0) || *m == 0 {
                return Err(CliError::Config(
                    "duality needs lambda1, lambda2 >= 0, tol > 0, m >= 1".into(),
                ));
            }
            let report = duality_spectrum_check(*l, *lambda1, *lambda2, *m, *tol, &opts)?;
            let pass = report.pass;
            emit(
                &cli.out,
                &json!({
                    "meta": meta(json!({
                        "l": l, "lambda1": lambda1, "lambda2": lambda2, "m": m, "tol": tol,
                    })),
                    "report": report,
                    "verdict": if pass { "PASS" } else { "FAIL" },
                }),
            )?;
            if pass {
                Ok(())
            } else {
                Err(CliError::CheckFailed)
            }
        }
        Command::LatticeDump { l } => {
            let lat = build_torus(*l)?;
            let block00 = enumerate_sector(&lat, &SectorLabel::neutral(&lat, (0, 0)))?;
            emit(
                &cli.out,
                &json!({
                    "meta": meta(json!({ "l": l })),
                    "lattice": lat.dump(),
                    "sector_00": block00.dump(16),
                }),
            )
        }
    }
}

fn least_squares_slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let sx: f64 = points.iter().map(|p| p.0).sum();
    let sy: f64 = points.iter().map(|p| p.1).sum();
    let sxx: f64 = points.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = points.iter().map(|p| p.0 * p.1).sum();
    (n * sxy - sx * sy) / (n * sxx - sx * sx)
}
