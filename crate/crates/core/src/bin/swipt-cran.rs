use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use swipt_cran::energymax::solve_qmax;
use swipt_cran::harness::{
    emit, energy_from_uw, generate_scenario, power_uw, rate_mbps, run_experiment, run_scheme, trial_seed,
    write_csv, write_json, ExperimentResult, OutputFormat, QGrid, ScenarioConfig, Scheme,
};
use swipt_cran::model::check_causality;
use swipt_cran::{Error, Scenario};

#[derive(Parser)]
#[command(name = "swipt-cran", version, about = "Energy-throughput tradeoffs for energy-harvesting Cloud-RAN downlinks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample each trial's energy-throughput boundary at evenly spaced floors.
    Sweep {
        #[command(flatten)]
        run: RunArgs,
        /// Number of floors between 0 and q_max (inclusive).
        #[arg(long, default_value_t = 10)]
        q_points: usize,
    },
    /// Compare schemes at common average charging powers.
    Compare {
        #[command(flatten)]
        run: RunArgs,
        /// Comma-separated average charging powers in µW.
        #[arg(long, value_delimiter = ',', default_value = "0,0.1,0.2,0.3,0.4")]
        q_grid: Vec<f64>,
        /// Comma-separated per-BS harvest means in W; one output file each.
        #[arg(long, value_delimiter = ',')]
        ph_grid: Option<Vec<f64>>,
    },
    /// Closed-form maximum RF charged energy of one scenario.
    Qmax {
        #[command(flatten)]
        source: SourceArgs,
    },
    /// Solve one scenario with one scheme.
    Solve {
        #[command(flatten)]
        source: SourceArgs,
        /// RF floor in Joules.
        #[arg(long, conflicts_with = "q_uw")]
        q: Option<f64>,
        /// RF floor as average charging power in µW.
        #[arg(long)]
        q_uw: Option<f64>,
        #[arg(long, value_enum, default_value_t = SchemeArg::Offline)]
        scheme: SchemeArg,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct RunArgs {
    /// JSON experiment configuration; defaults apply to missing fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    trials: Option<usize>,
    /// Output file; standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = FormatArg::Csv)]
    format: FormatArg,
    /// Scheme to run (repeatable); all schemes when omitted.
    #[arg(long, value_enum)]
    scheme: Vec<SchemeArg>,
    /// Include full beamforming schedules in JSON output.
    #[arg(long)]
    with_schedules: bool,
}

#[derive(Args)]
struct SourceArgs {
    /// Scenario JSON file.
    #[arg(long, conflicts_with_all = ["config", "seed", "trial"])]
    scenario: Option<PathBuf>,
    /// Generate the scenario from this configuration instead.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Trial index whose realization to generate.
    #[arg(long, default_value_t = 0)]
    trial: usize,
}

#[derive(Clone, Copy, ValueEnum)]
enum SchemeArg {
    Offline,
    Online,
    Baseline,
}

impl From<SchemeArg> for Scheme {
    fn from(s: SchemeArg) -> Self {
        match s {
            SchemeArg::Offline => Scheme::Offline,
            SchemeArg::Online => Scheme::Online,
            SchemeArg::Baseline => Scheme::Baseline,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Json,
}

impl From<FormatArg> for OutputFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Csv => OutputFormat::Csv,
            FormatArg::Json => OutputFormat::Json,
        }
    }
}

fn load_config(path: Option<&Path>, seed: Option<u64>, trials: Option<usize>) -> Result<ScenarioConfig, Error> {
    let mut cfg = match path {
        Some(p) => ScenarioConfig::load(p)?,
        None => ScenarioConfig::default(),
    };
    if let Some(s) = seed {
        cfg.rng_seed = s;
    }
    if let Some(t) = trials {
        cfg.trials = t;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn schemes(args: &RunArgs) -> Vec<Scheme> {
    if args.scheme.is_empty() {
        Scheme::ALL.to_vec()
    } else {
        let mut v: Vec<Scheme> = args.scheme.iter().map(|&s| s.into()).collect();
        v.sort();
        v.dedup();
        v
    }
}

fn write_result(result: &ExperimentResult, out: Option<&Path>, format: OutputFormat) -> Result<(), Error> {
    match out {
        Some(p) => emit(result, p, format),
        None => {
            let stdout = std::io::stdout().lock();
            match format {
                OutputFormat::Csv => write_csv(result, stdout),
                OutputFormat::Json => write_json(result, stdout),
            }
        }
    }
}

fn report_failures(result: &ExperimentResult) {
    if result.failures.is_empty() {
        return;
    }
    let infeasible = result.failures.iter().filter(|f| f.infeasible).count();
    eprintln!(
        "{} point(s) skipped: {} infeasible, {} solver failures",
        result.failures.len(),
        infeasible,
        result.failures.len() - infeasible
    );
}

/// `results.csv` with P_H = 0.05 becomes `results_ph0.05.csv`.
fn tagged_path(path: &Path, ph: f64) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let name = match path.extension() {
        Some(ext) => format!("{stem}_ph{ph}.{}", ext.to_string_lossy()),
        None => format!("{stem}_ph{ph}"),
    };
    path.with_file_name(name)
}

fn load_scenario(source: &SourceArgs) -> Result<Scenario, Error> {
    match &source.scenario {
        Some(p) => Scenario::load(p),
        None => {
            let cfg = load_config(source.config.as_deref(), source.seed, None)?;
            generate_scenario(&cfg, trial_seed(cfg.rng_seed, source.trial))
        }
    }
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Sweep { run, q_points } => {
            if q_points < 2 {
                return Err(Error::InvalidParameter("--q-points must be at least 2".into()));
            }
            let cfg = load_config(run.config.as_deref(), run.seed, run.trials)?;
            let result = run_experiment(&cfg, &schemes(&run), &QGrid::region(q_points), run.with_schedules)?;
            report_failures(&result);
            write_result(&result, run.out.as_deref(), run.format.into())
        }
        Command::Compare { run, q_grid, ph_grid } => {
            let cfg = load_config(run.config.as_deref(), run.seed, run.trials)?;
            let grid = QGrid::MicroWatts(q_grid);
            let list = schemes(&run);
            match ph_grid {
                None => {
                    let result = run_experiment(&cfg, &list, &grid, run.with_schedules)?;
                    report_failures(&result);
                    write_result(&result, run.out.as_deref(), run.format.into())
                }
                Some(values) => {
                    let out = run.out.as_deref().ok_or_else(|| {
                        Error::InvalidParameter("--ph-grid writes one file per value and needs --out".into())
                    })?;
                    for ph in values {
                        let mut c = cfg.clone();
                        c.poisson_means = vec![ph; c.num_bs()];
                        let result = run_experiment(&c, &list, &grid, run.with_schedules)?;
                        report_failures(&result);
                        emit(&result, &tagged_path(out, ph), run.format.into())?;
                    }
                    Ok(())
                }
            }
        }
        Command::Qmax { source } => {
            let s = load_scenario(&source)?;
            let sol = solve_qmax(&s.profile, &s.channels.g, &s.params)?;
            let value = json!({
                "q_max_J": sol.q_max,
                "q_max_uW": power_uw(sol.q_max, s.params.num_slots, s.params.slot_length),
                "w0_re": sol.w0.iter().map(|x| x.re).collect::<Vec<_>>(),
                "w0_im": sol.w0.iter().map(|x| x.im).collect::<Vec<_>>(),
                "power_schedule": sol.power_schedule,
            });
            println!("{}", serde_json::to_string_pretty(&value)?);
            Ok(())
        }
        Command::Solve { source, q, q_uw, scheme, out } => {
            let s = load_scenario(&source)?;
            let q = match (q, q_uw) {
                (Some(q), _) => q,
                (None, Some(u)) => energy_from_uw(u, s.params.num_slots, s.params.slot_length),
                (None, None) => 0.0,
            };
            let (run, _) = run_scheme(&s, scheme.into(), q, None)?;
            let p = &s.params;
            let value = json!({
                "scheme": Scheme::from(scheme).name(),
                "q_target_J": q,
                "throughput_nats": run.throughput,
                "rf_energy_J": run.rf_energy,
                "shortfall_J": run.shortfall,
                "r_avg_mbps": rate_mbps(run.throughput, p.num_slots, p.bandwidth),
                "q_avg_uW": power_uw(run.rf_energy, p.num_slots, p.slot_length),
                "causal": check_causality(&run.schedule, &s.profile).is_causal(),
                "schedule": run.schedule,
            });
            let text = serde_json::to_string_pretty(&value)?;
            match out {
                Some(path) => std::fs::write(path, text + "\n")?,
                None => writeln!(std::io::stdout(), "{text}")?,
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Infeasible { .. } => ExitCode::from(2),
                _ => ExitCode::from(1),
            }
        }
    }
}
