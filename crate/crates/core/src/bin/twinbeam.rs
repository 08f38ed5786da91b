//! `twinbeam`: simulate, analyze, evaluate and sweep the twin-beam model.
//!
//! Exit codes: 0 success, 2 usage error, 3 domain error, 4 I/O or parse
//! error, 5 validation failure.

use std::fs::File;
use std::io::{self, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use twinbeam::analysis::{self_consistent_report, AnalysisConfig, ConditioningConfig};
use twinbeam::config::RunConfig;
use twinbeam::grid::{parse_counts, parse_grid};
use twinbeam::records::{parse_records, write_records};
use twinbeam::report::{
    analysis_text, conditional_csv, evaluate_theory, fmt_sig, sweep_csv, theory_text,
};
use twinbeam::sweep::{
    find_optimum, run_sweep, Axis, Direction, Objective, SweepSpec, DEFAULT_DIVERGENCE,
};
use twinbeam::validate::{default_grid, product_grid, validate, ValidationConfig, LIMIT_POINT};
use twinbeam::{sample_run, Error, SeedSpec};

const EXIT_DOMAIN: u8 = 3;
const EXIT_IO: u8 = 4;
const EXIT_VALIDATION: u8 = 5;

#[derive(Parser)]
#[command(
    name = "twinbeam",
    version,
    about = "Photon-number statistics of multimode twin beams"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample pulse records from the model and write them as CSV.
    Simulate {
        #[command(flatten)]
        params: ParamArgs,
        /// Worker threads; the output does not depend on this.
        #[arg(long, default_value_t = 1)]
        workers: usize,
        #[command(flatten)]
        out: OutArg,
    },
    /// Run the calibration-free analysis on a records CSV.
    Analyze {
        /// Records CSV (`-` for standard input).
        #[arg(short, long)]
        input: PathBuf,
        /// Optional configuration supplying m2, min_samples, seed, nrf_variant.
        #[command(flatten)]
        params: ParamArgs,
        /// Also write the conditional-state table to this CSV file.
        #[arg(long)]
        table: Option<PathBuf>,
        /// Bootstrap resamples for the conditional Fano standard errors.
        #[arg(long, default_value_t = 200)]
        bootstrap: usize,
        #[command(flatten)]
        out: OutArg,
    },
    /// Evaluate exact and closed-form predictions at one parameter point.
    Theory {
        #[command(flatten)]
        params: ParamArgs,
        #[command(flatten)]
        out: OutArg,
    },
    /// Evaluate objectives along one parameter axis and write a CSV table.
    Sweep {
        #[command(flatten)]
        params: ParamArgs,
        /// Swept parameter: M, mu, eta or m2.
        #[arg(long)]
        axis: String,
        /// Values: `a,b,c`, `lin:START:STOP:COUNT` or `log:START:STOP:COUNT`.
        #[arg(long)]
        grid: String,
        /// Objectives (repeatable or comma separated): conditional_fano_exact,
        /// conditional_fano_formula, nrf_exact, heralding.
        #[arg(long, value_delimiter = ',', required = true)]
        objective: Vec<String>,
        #[arg(long, default_value_t = 1)]
        workers: usize,
        /// Report the extremal row of this column on standard error.
        #[arg(long)]
        optimize: Option<String>,
        #[arg(long, default_value = "min")]
        direction: String,
        /// Flag points where closed-form and exact Fano differ by more than this.
        #[arg(long, default_value_t = DEFAULT_DIVERGENCE)]
        divergence: f64,
        #[command(flatten)]
        out: OutArg,
    },
    /// Compare closed forms and the sampler against exact enumeration.
    Validate {
        /// Detected means (grid syntax).
        #[arg(long = "M")]
        detected_mean: Option<String>,
        /// Mode counts (grid syntax).
        #[arg(long)]
        mu: Option<String>,
        /// Efficiencies (grid syntax).
        #[arg(long)]
        eta: Option<String>,
        /// Idler conditioning values.
        #[arg(long)]
        m2: Option<String>,
        /// Skip the large-mode vacuum-herald point.
        #[arg(long)]
        no_limit_point: bool,
        /// Monte Carlo shots per point; 0 disables the sampling checks.
        #[arg(long, default_value_t = 200_000)]
        mc_shots: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1)]
        workers: usize,
        /// Largest accepted |z| of a Monte Carlo estimate.
        #[arg(long, default_value_t = 5.0)]
        z_tol: f64,
        /// Relative tolerance of the corrected noise-reduction form.
        #[arg(long, default_value_t = 1e-9)]
        nrf_tol: f64,
        #[command(flatten)]
        out: OutArg,
    },
}

#[derive(Args)]
struct ParamArgs {
    /// `key = value` configuration file.
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// Override a configuration key (repeatable), e.g. `-s mu=10`.
    #[arg(short = 's', long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

impl ParamArgs {
    fn load(&self) -> Result<RunConfig, Error> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        for o in &self.overrides {
            cfg.apply_override(o)?;
        }
        Ok(cfg)
    }
}

#[derive(Args)]
struct OutArg {
    /// Output file (default: standard output).
    #[arg(short, long)]
    out: Option<PathBuf>,
}

impl OutArg {
    fn writer(&self) -> Result<Box<dyn Write>, Error> {
        Ok(match &self.out {
            Some(path) => Box::new(BufWriter::new(
                File::create(path).map_err(|e| Error::file(path, e))?,
            )),
            None => Box::new(BufWriter::new(io::stdout().lock())),
        })
    }

    fn write_str(&self, text: &str) -> Result<(), Error> {
        let mut w = self.writer()?;
        w.write_all(text.as_bytes())?;
        w.flush()?;
        Ok(())
    }
}

enum Failure {
    Error(Error),
    Validation,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Error(e)
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Error(e.into())
    }
}

fn read_input(path: &Path) -> Result<(String, String), Error> {
    if path == Path::new("-") {
        let mut text = String::new();
        io::stdin().read_to_string(&mut text)?;
        Ok((text, "<stdin>".into()))
    } else {
        let text = std::fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
        Ok((text, path.display().to_string()))
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Simulate {
            params,
            workers,
            out,
        } => {
            let cfg = params.load()?;
            let p = cfg.params()?;
            let set = sample_run(&p, cfg.shots(), SeedSpec::new(cfg.seed(), workers))?;
            let mut w = out.writer()?;
            write_records(&set, &mut w)?;
        }
        Command::Analyze {
            input,
            params,
            table,
            bootstrap,
            out,
        } => {
            let cfg = params.load()?;
            let (text, source) = read_input(&input)?;
            let records = parse_records(&text, &source)?;
            let config = AnalysisConfig {
                conditioning: cfg.conditioning(),
                conditioning_config: ConditioningConfig {
                    min_samples: cfg.min_samples(),
                    bootstrap_resamples: bootstrap,
                    seed: cfg.seed(),
                },
                nrf_variant: cfg.nrf_variant(),
            };
            let report = self_consistent_report(&records, &config);
            out.write_str(&analysis_text(&report))?;
            if let Some(path) = table {
                std::fs::write(&path, conditional_csv(&report))
                    .map_err(|e| Error::file(&path, e))?;
            }
        }
        Command::Theory { params, out } => {
            let cfg = params.load()?;
            let p = cfg.params()?;
            let t = evaluate_theory(&p, &cfg.conditioning(), cfg.eps(), cfg.nrf_variant())?;
            out.write_str(&theory_text(&t))?;
        }
        Command::Sweep {
            params,
            axis,
            grid,
            objective,
            workers,
            optimize,
            direction,
            divergence,
            out,
        } => {
            let axis: Axis = axis.parse()?;
            let direction: Direction = direction.parse()?;
            let objectives = objective
                .iter()
                .map(|o| o.trim().parse())
                .collect::<Result<Vec<Objective>, Error>>()?;
            let grid = parse_grid(&grid)?;
            let mut cfg = params.load()?;
            // The swept field needs no value of its own; fill a placeholder.
            match axis {
                Axis::DetectedMean if cfg.mean_photons.is_none() && cfg.detected_mean.is_none() => {
                    cfg.detected_mean = Some(1.0)
                }
                Axis::DetectedMean => {
                    if cfg.mean_photons.take().is_some() {
                        cfg.detected_mean = Some(1.0);
                    }
                }
                Axis::Modes if cfg.modes.is_none() => cfg.modes = Some(1.0),
                Axis::Efficiency => {
                    cfg.eta1 = Some(0.5);
                    cfg.eta2 = Some(0.5);
                }
                _ => {}
            }
            let fixed = cfg.model_point()?;
            let spec = SweepSpec {
                axis,
                grid,
                fixed,
                conditioning: cfg.conditioning(),
                objectives,
                eps: cfg.eps(),
                divergence_threshold: divergence,
            };
            let table = run_sweep(&spec, workers)?;
            out.write_str(&sweep_csv(&table))?;
            if let Some(column) = optimize {
                let row = find_optimum(&table, &column, direction)?;
                let idx = table
                    .column_index(&column)
                    .expect("column found by find_optimum");
                eprintln!(
                    "optimum: {} = {}, {column} = {}",
                    axis.name(),
                    fmt_sig(row.axis_value),
                    fmt_sig(row.values[idx])
                );
            }
        }
        Command::Validate {
            detected_mean,
            mu,
            eta,
            m2,
            no_limit_point,
            mc_shots,
            seed,
            workers,
            z_tol,
            nrf_tol,
            out,
        } => {
            let custom = detected_mean.is_some() || mu.is_some() || eta.is_some() || m2.is_some();
            let mut grid = if custom {
                let axis =
                    |v: &Option<String>, default: &str| parse_grid(v.as_deref().unwrap_or(default));
                product_grid(
                    &axis(&detected_mean, "0.5,1,2,3.2")?,
                    &axis(&mu, "2,10,100")?,
                    &axis(&eta, "0.15")?,
                    &parse_counts(m2.as_deref().unwrap_or("1,2"))?,
                )
            } else {
                let mut g = default_grid();
                g.retain(|p| *p != LIMIT_POINT);
                g
            };
            if !no_limit_point {
                grid.push(LIMIT_POINT);
            }
            let config = ValidationConfig {
                mc_shots,
                seed,
                workers,
                z_tol,
                nrf_tol,
                ..ValidationConfig::default()
            };
            let report = validate(&grid, &config)?;
            out.write_str(&report.to_csv())?;
            if !report.passed() {
                return Err(Failure::Validation);
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Validation) => {
            eprintln!("twinbeam: validation failed");
            ExitCode::from(EXIT_VALIDATION)
        }
        Err(Failure::Error(e)) => {
            eprintln!("twinbeam: {e}");
            ExitCode::from(if e.is_io() { EXIT_IO } else { EXIT_DOMAIN })
        }
    }
}
