//! Simulator front end: scenario runs, synthetic datasets, model training.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand, ValueEnum};

use shelfwatch_core::classify::{fit_selected, kfold_cv, read_dataset, write_dataset, CvConfig, CvReport, ModelKind};
use shelfwatch_core::Sample;
use shelfwatch_sim::pose::{DEFAULT_DATASET_SEED, DEFAULT_SIGMA};
use shelfwatch_sim::{generate, generate_pose_dataset, run_scenario, PoseParams, RunReport, Scenario};

#[derive(Parser)]
#[command(name = "shelfwatch-sim", version, about = "Deterministic store simulator")]
struct Args {
    #[arg(long, global = true, default_value = "warn")]
    log_level: String,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run scenarios end to end and score them. Exits nonzero if any run
    /// failed or broke an invariant.
    Run {
        /// Scenario files or built-in names.
        #[arg(required = true)]
        scenarios: Vec<String>,
        #[arg(long)]
        seed: Option<u64>,
        /// Write the JSON reports here (one array).
        #[arg(long)]
        report: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Format::Table)]
        format: Format,
    },
    /// Print reports saved by `run --report`.
    Report {
        path: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Table)]
        format: Format,
    },
    /// List the built-in scenarios.
    List,
    /// Write a scenario's landmark frames as NDJSON, ready for the edge agent.
    Frames {
        scenario: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write a labelled synthetic pose dataset as NDJSON.
    GenerateDataset {
        #[arg(long, default_value_t = 1103)]
        n: usize,
        #[arg(long, default_value_t = DEFAULT_DATASET_SEED)]
        seed: u64,
        #[arg(long, default_value_t = DEFAULT_SIGMA)]
        sigma: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Cross-validate kNN and the linear model on a dataset.
    Cv {
        data: PathBuf,
        #[command(flatten)]
        cv: CvArgs,
        #[arg(long, value_enum, default_value_t = Format::Table)]
        format: Format,
    },
    /// Cross-validate, then fit the better model on all of the data.
    Train {
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        cv: CvArgs,
    },
}

#[derive(clap::Args)]
struct CvArgs {
    #[arg(long, default_value_t = 10)]
    folds: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl CvArgs {
    fn config(&self) -> CvConfig {
        CvConfig {
            fold_count: self.folds,
            seed: self.seed,
            ..CvConfig::default()
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Table,
    Json,
}

fn main() -> anyhow::Result<ExitCode> {
    let args = Args::parse();
    shelfwatch_cli::init_logging(&args.log_level)?;
    match args.command {
        Command::Run {
            scenarios,
            seed,
            report,
            format,
        } => {
            let mut reports = Vec::new();
            for spec in &scenarios {
                let mut scenario = Scenario::load(spec).with_context(|| format!("loading scenario {spec}"))?;
                if let Some(seed) = seed {
                    scenario.seed = seed;
                }
                reports.push(run_scenario(&scenario));
            }
            if let Some(path) = report {
                let mut out =
                    BufWriter::new(File::create(&path).with_context(|| format!("creating {}", path.display()))?);
                serde_json::to_writer_pretty(&mut out, &reports)?;
                writeln!(out)?;
                out.flush()?;
            }
            print_reports(&reports, format)?;
            Ok(exit_for(&reports))
        }
        Command::Report { path, format } => {
            let reports: Vec<RunReport> = serde_json::from_reader(BufReader::new(
                File::open(&path).with_context(|| format!("opening {}", path.display()))?,
            ))
            .with_context(|| format!("parsing {}", path.display()))?;
            print_reports(&reports, format)?;
            Ok(exit_for(&reports))
        }
        Command::List => {
            for name in Scenario::builtin_names() {
                println!("{name}");
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Frames { scenario, out } => {
            let scenario = Scenario::load(&scenario)?;
            let run = generate(&scenario)?;
            write_output(out.as_deref(), &run.frames_ndjson())?;
            Ok(ExitCode::SUCCESS)
        }
        Command::GenerateDataset { n, seed, sigma, out } => {
            let params = PoseParams {
                sigma,
                ..PoseParams::default()
            };
            let data = generate_pose_dataset(&params, n, seed)?;
            let mut buf = Vec::new();
            write_dataset(&data, &mut buf)?;
            write_output(out.as_deref(), &buf)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Cv { data, cv, format } => {
            let samples = load_dataset(&data)?;
            let report = kfold_cv(&samples, &cv.config())?;
            match format {
                Format::Json => println!("{}", serde_json::to_string_pretty(&report)?),
                Format::Table => print!("{}", cv_table(&report)),
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Train { data, out, cv } => {
            let samples = load_dataset(&data)?;
            let config = cv.config();
            let report = kfold_cv(&samples, &config)?;
            let model = fit_selected(&samples, &report, &config)?;
            model.save(&out).with_context(|| format!("writing {}", out.display()))?;
            print!("{}", cv_table(&report));
            println!("wrote {}", out.display());
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn exit_for(reports: &[RunReport]) -> ExitCode {
    if reports.iter().all(RunReport::passed) {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

fn print_reports(reports: &[RunReport], format: Format) -> anyhow::Result<()> {
    match format {
        Format::Json => println!("{}", serde_json::to_string_pretty(reports)?),
        Format::Table => {
            for (i, r) in reports.iter().enumerate() {
                if i > 0 {
                    println!();
                }
                print!("{}", r.table());
            }
        }
    }
    Ok(())
}

fn write_output(path: Option<&Path>, bytes: &[u8]) -> anyhow::Result<()> {
    match path {
        Some(path) => std::fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))?,
        None => std::io::stdout().lock().write_all(bytes)?,
    }
    Ok(())
}

fn load_dataset(path: &Path) -> anyhow::Result<Vec<Sample>> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    read_dataset(BufReader::new(file)).with_context(|| format!("reading {}", path.display()))
}

fn cv_table(report: &CvReport) -> String {
    let mut out = format!("{} folds, seed {}\n", report.fold_count, report.seed);
    for r in &report.knn_sweep {
        out.push_str(&format!(
            "  kNN k={:<3} {:.4}\n",
            r.k.unwrap_or_default(),
            r.mean_accuracy
        ));
    }
    out.push_str(&format!("  linear     {:.4}\n", report.linear.mean_accuracy));
    let selected = match report.selected_kind {
        ModelKind::Knn => format!("kNN k={}", report.knn.k.unwrap_or_default()),
        ModelKind::Linear => "linear".to_owned(),
    };
    out.push_str(&format!(
        "selected {selected} ({:.4})\n",
        report.selected().mean_accuracy
    ));
    out
}
