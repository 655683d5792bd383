use std::io::{self, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use lelp_kd::data;
use lelp_kd::harness::{
    self, emit_report, load_report, render_table, Experiment, ExperimentConfig, ReportBundle, ReportFormat,
    SourceKind,
};

/// Subclass knowledge distillation experiments.
#[derive(Parser)]
#[command(name = "lelp", version)]
struct Cli {
    /// Override the config's base seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Override the config's output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train the teacher once and run every configured method over every seed.
    Run { config: PathBuf },
    /// Repeat the roster on subsampled distillation sets.
    SweepData {
        config: PathBuf,
        /// Fractions in (0, 1]; defaults to the config's list.
        #[arg(long, value_delimiter = ',', num_args = 1..)]
        fractions: Vec<f64>,
    },
    /// Teacher trained on a labelled subset pseudo-labels the rest.
    Semi { config: PathBuf },
    /// Re-render a finished run directory.
    Report {
        run_dir: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Table)]
        format: Format,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Table,
    Json,
    Csv,
}

impl From<Format> for ReportFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Table => ReportFormat::Table,
            Format::Json => ReportFormat::Json,
            Format::Csv => ReportFormat::Csv,
        }
    }
}

fn load_config(path: &Path, cli: &Cli) -> Result<ExperimentConfig> {
    let mut config =
        ExperimentConfig::load(path).with_context(|| format!("loading config {}", path.display()))?;
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(out) = &cli.out {
        config.out = out.clone();
    }
    Ok(config)
}

/// Writes to stdout; a closed pipe (e.g. `| head`) is not an error.
fn print_out(text: &str) -> Result<()> {
    match io::stdout().lock().write_all(text.as_bytes()) {
        Err(e) if e.kind() == io::ErrorKind::BrokenPipe => Ok(()),
        other => Ok(other?),
    }
}

fn write_outputs(config: &ExperimentConfig, bundle: &ReportBundle) -> Result<()> {
    let dir = &config.out;
    for format in [ReportFormat::Json, ReportFormat::Table, ReportFormat::Csv] {
        emit_report(bundle, format, dir).with_context(|| format!("writing report to {}", dir.display()))?;
    }
    std::fs::write(dir.join("config.toml"), config.to_toml()?)?;
    if config.data.source == SourceKind::Synthetic {
        data::write_manifest(&config.data.synthetic, dir.join("dataset.toml"))?;
    }
    print_out(&render_table(bundle))?;
    eprintln!("wrote {}", dir.display());
    Ok(())
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match &cli.command {
        Command::Run { config } => {
            let config = load_config(config, &cli)?;
            let exp = Experiment::prepare(&config)?;
            let report = exp.run()?;
            exp.save_artifacts(&config.out)?;
            write_outputs(&config, &ReportBundle::new(&config, vec![report]))
        }
        Command::SweepData { config, fractions } => {
            let config = load_config(config, &cli)?;
            let fractions = if fractions.is_empty() {
                config.fractions.clone()
            } else {
                fractions.clone()
            };
            let reports = harness::data_efficiency_sweep(&config, &fractions)?;
            write_outputs(&config, &ReportBundle::new(&config, reports))
        }
        Command::Semi { config } => {
            let mut config = load_config(config, &cli)?;
            config.semi.enabled = true;
            let report = harness::semi_supervised_run(&config)?;
            write_outputs(&config, &ReportBundle::new(&config, vec![report]))
        }
        Command::Report { run_dir, format } => {
            let bundle = load_report(run_dir).with_context(|| format!("reading {}", run_dir.display()))?;
            let text = match format {
                Format::Table => render_table(&bundle),
                Format::Json => harness::render_json(&bundle)? + "\n",
                Format::Csv => harness::render_csv(&bundle)?,
            };
            print_out(&text)?;
            if let Some(out) = &cli.out {
                for p in emit_report(&bundle, (*format).into(), out)? {
                    eprintln!("wrote {}", p.display());
                }
            }
            Ok(())
        }
    }
}
