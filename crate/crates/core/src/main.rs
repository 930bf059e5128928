use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use softfoot::bench::{run_bench, sensitivity_sweep, summarize, BenchSetup, ExperimentalRecord, SensitivityDeltas};
use softfoot::io::{self, mjcf, svg, tables, ReportFile, RunManifest};
use softfoot::solver::SolverSettings;
use softfoot::{validate_model, Error, FootModel, Result};

/// Planar simulator and obstacle bench for a modular compliant foot.
#[derive(Parser)]
#[command(name = "softfoot", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct SolverFlags {
    /// Integration timestep (s).
    #[arg(long)]
    timestep: Option<f64>,
    /// Maximum simulated time per trial (s).
    #[arg(long)]
    duration: Option<f64>,
    /// Worker threads; 0 uses every core.
    #[arg(long, default_value_t = 0)]
    workers: usize,
}

impl SolverFlags {
    fn settings(&self) -> (SolverSettings, Vec<String>) {
        let mut s = SolverSettings::default();
        let mut overrides = Vec::new();
        if let Some(dt) = self.timestep {
            s.timestep = dt;
            overrides.push(format!("timestep={dt}"));
        }
        if let Some(d) = self.duration {
            s.duration = d;
            overrides.push(format!("duration={d}"));
        }
        (s, overrides)
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Mjcf,
}

#[derive(Subcommand)]
enum Command {
    /// Check a model file and list every violated invariant.
    Validate { model: PathBuf },
    /// Run the 48-trial bench and write results.csv, report.json and charts.
    Bench {
        model: PathBuf,
        /// Measured forces and rotations to compare against.
        #[arg(long)]
        exp: Option<PathBuf>,
        /// Output directory.
        #[arg(long, default_value = "bench_out")]
        out: PathBuf,
        #[command(flatten)]
        solver: SolverFlags,
    },
    /// Re-run the bench with displaced supports and inclined feet.
    Sensitivity {
        model: PathBuf,
        /// Heel support shift, applied as ± (mm).
        #[arg(long, default_value_t = 4.0)]
        heel_dx: f64,
        /// Metatarsus support shift, applied as ± (mm).
        #[arg(long, default_value_t = 4.0)]
        meta_dx: f64,
        /// Sweep initial inclinations 1° up to this value.
        #[arg(long, value_parser = clap::value_parser!(u32).range(1..=5))]
        incline: Option<u32>,
        /// Measured data used as the reference; the unperturbed run otherwise.
        #[arg(long)]
        exp: Option<PathBuf>,
        /// Output CSV; standard output when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        solver: SolverFlags,
    },
    /// Write the model as a scene for an external physics engine.
    Export {
        model: PathBuf,
        #[arg(long, value_enum)]
        format: Format,
        /// Output file; standard output when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn load_valid(path: &Path) -> Result<FootModel> {
    let model = io::load_model(path)?;
    let violations = validate_model(&model);
    if violations.is_empty() {
        Ok(model)
    } else {
        Err(Error::InvalidModel(violations.iter().map(ToString::to_string).collect()))
    }
}

fn load_experimental(path: Option<&Path>) -> Result<Option<Vec<ExperimentalRecord>>> {
    path.map(|p| tables::read_experimental(fs::File::open(p)?)).transpose()
}

fn fmt_pct(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".into(), |v| format!("{v:.1}"))
}

fn cmd_validate(path: &Path) -> Result<()> {
    let model = io::load_model(path)?;
    let violations = validate_model(&model);
    if violations.is_empty() {
        println!("{}: ok", path.display());
        return Ok(());
    }
    for v in &violations {
        println!("{v}");
    }
    Err(Error::InvalidModel(violations.iter().map(ToString::to_string).collect()))
}

fn cmd_bench(model_path: &Path, exp: Option<&Path>, out: &Path, flags: &SolverFlags) -> Result<()> {
    let model = load_valid(model_path)?;
    let experimental = load_experimental(exp)?;
    let (settings, overrides) = flags.settings();
    settings.check()?;
    let setup = BenchSetup::default();
    let manifest = RunManifest::new(model_path, overrides, out, &model, &settings, &setup)?;
    log::info!("config hash {}", manifest.config_hash);

    let results = run_bench(&model, &settings, &setup, flags.workers)?;
    let report = summarize(&model, &results, experimental.as_deref());

    fs::create_dir_all(out)?;
    fs::write(out.join("results.csv"), tables::results_to_string(&model, &results)?)?;
    fs::write(out.join("report.json"), ReportFile::new(&manifest, report.clone()).to_json()?)?;
    for (name, text) in svg::bench_charts(&results, &report) {
        fs::write(out.join(name), text)?;
    }

    let d = &report.diagnostics;
    println!(
        "{} trials, {} failed; max force balance error {:.3}%, max closure residual {:.2e} m",
        d.trials,
        d.failed,
        100.0 * d.max_force_balance_error,
        d.max_closure_residual
    );
    for c in &report.components {
        println!(
            "{:<11} mean |e_b| {:>6}%  filtered {:>6}%  ({} undefined)",
            c.component,
            fmt_pct(c.unfiltered_mean_pct),
            fmt_pct(c.filtered_mean_pct),
            c.n_undefined
        );
    }
    println!("outputs written to {}", out.display());
    if d.failed == d.trials {
        let first = results.iter().find_map(|r| r.failure.clone()).unwrap_or_default();
        return Err(Error::Divergence {
            time: f64::NAN,
            coordinate: format!("all trials failed; first: {first}"),
        });
    }
    Ok(())
}

fn cmd_sensitivity(
    model_path: &Path,
    deltas: SensitivityDeltas,
    exp: Option<&Path>,
    out: Option<&Path>,
    flags: &SolverFlags,
) -> Result<()> {
    let model = load_valid(model_path)?;
    let experimental = load_experimental(exp)?;
    let (settings, _) = flags.settings();
    settings.check()?;
    let table = sensitivity_sweep(
        &model,
        &settings,
        &BenchSetup::default(),
        &deltas,
        experimental.as_deref(),
        flags.workers,
    )?;
    let m = table.baseline_mean_pct;
    eprintln!(
        "unperturbed mean |e_b|: heel {}%, modules {}%, metatarsus {}%",
        fmt_pct(m[0]),
        fmt_pct(m[1]),
        fmt_pct(m[2])
    );
    match out {
        Some(p) => tables::write_sensitivity(fs::File::create(p)?, &table.rows)?,
        None => tables::write_sensitivity(std::io::stdout().lock(), &table.rows)?,
    }
    if table.baseline.iter().all(|r| !r.ok()) {
        return Err(Error::Divergence {
            time: f64::NAN,
            coordinate: "all unperturbed trials failed".into(),
        });
    }
    Ok(())
}

fn cmd_export(model_path: &Path, format: Format, out: Option<&Path>) -> Result<()> {
    let model = load_valid(model_path)?;
    let text = match format {
        Format::Mjcf => mjcf::export_mjcf(&model),
    };
    match out {
        Some(p) => fs::write(p, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Validate { model } => cmd_validate(&model),
        Command::Bench { model, exp, out, solver } => cmd_bench(&model, exp.as_deref(), &out, &solver),
        Command::Sensitivity {
            model,
            heel_dx,
            meta_dx,
            incline,
            exp,
            out,
            solver,
        } => {
            let deltas = SensitivityDeltas {
                heel_dx: heel_dx * 1e-3,
                meta_dx: meta_dx * 1e-3,
                max_incline_deg: incline.unwrap_or(0),
            };
            cmd_sensitivity(&model, deltas, exp.as_deref(), out.as_deref(), &solver)
        }
        Command::Export { model, format, out } => cmd_export(&model, format, out.as_deref()),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("SOFTFOOT_LOG", "warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
