use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use promforge::pipeline::{
    build_database, export_histories, load_database, persist_database, read_report, run_benchmark, write_report,
    PipelineError, RunConfig,
};

#[derive(Parser)]
#[command(name = "promforge", version, about = "Parametric reduced-order models for nonlinear structures")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build the training and validation ROM database.
    Build {
        #[arg(long)]
        config: PathBuf,
        /// Output directory; the database is written to `<out>/database.prdb`.
        #[arg(long)]
        out: PathBuf,
        /// Scalar overrides, `section.key=value`.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Select shape parameters and fit the interpolants into the database.
    Fit {
        #[arg(long)]
        db: PathBuf,
        /// Write the fitted database here instead of in place.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Run the five-model benchmark at the test points.
    Bench {
        #[arg(long)]
        db: PathBuf,
        /// Directory receiving `report.json` and `timings.json`.
        #[arg(long)]
        out: PathBuf,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Write CSV histories and `summary.json` from a benchmark report.
    Export {
        #[arg(long)]
        report: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print a database overview.
    Inspect { db: PathBuf },
}

fn run(cli: Cli) -> Result<(), PipelineError> {
    match cli.command {
        Command::Build { config, out, overrides } => {
            let cfg = RunConfig::load(&config)?.with_overrides(&overrides)?;
            let db = build_database(&cfg)?;
            let path = out.join("database.prdb");
            persist_database(&db, &path)?;
            println!("wrote {} ({} training ROMs, n = {}, m = {})", path.display(), db.records.len(), db.n(), db.m());
        }
        Command::Fit { db, out, overrides } => {
            let mut database = load_database(&db)?;
            database.config = database.config.with_overrides(&overrides)?;
            database.fit()?;
            let path = out.unwrap_or(db);
            persist_database(&database, &path)?;
            if let Some(r) = &database.report {
                for (op, eps) in &r.selected {
                    println!("{:>6}  eps = {eps:.4e}", op.name());
                }
            }
            println!("wrote {}", path.display());
        }
        Command::Bench { db, out, overrides } => {
            let mut database = load_database(&db)?;
            database.config = database.config.with_overrides(&overrides)?;
            let (report, timings) = run_benchmark(&database, None)?;
            write_report(&report, &timings, &out)?;
            for (i, p) in report.points.iter().enumerate() {
                for m in &p.models {
                    match m.rel_error {
                        Some(e) => println!("point {i} {:>12}  rel. L2 error {e:.3e}", m.kind.name()),
                        None => println!("point {i} {:>12}  {:?}", m.kind.name(), m.status),
                    }
                }
            }
            println!("wrote {}", out.join("report.json").display());
        }
        Command::Export { report, out } => {
            let r = read_report(&report)?;
            let files = export_histories(&r, &out)?;
            println!("wrote {} files to {}", files.len(), out.display());
        }
        Command::Inspect { db } => {
            let d = load_database(&db)?;
            println!("training ROMs     {}", d.records.len());
            println!("validation ROMs   {}", d.validation_records.len());
            println!("full-order DOFs   {}", d.n());
            println!("basis size        {} ({} modes + {} companions)", d.m(), d.basis.m_phi, d.basis.m_theta);
            println!("reorder start     sample {}", d.start);
            for (i, r) in d.records.iter().enumerate() {
                let f1 = r.omega.iter().copied().fold(f64::INFINITY, f64::min) / (2.0 * std::f64::consts::PI);
                println!(
                    "  sample {i}: p = {:?}, f1 = {f1:.2} Hz, {} evaluations, min MAC {:.4}, reference {:?}",
                    r.params,
                    r.counts.ident_forces + r.counts.ident_tangents,
                    r.lineage.matched_mac.iter().copied().fold(1.0, f64::min),
                    r.lineage.reference
                );
            }
            match &d.report {
                Some(rep) => {
                    for (op, eps) in &rep.selected {
                        println!("  eps[{}] = {eps:.4e}", op.name());
                    }
                }
                None => println!("no parametric model fitted"),
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                eprintln!("  caused by: {s}");
                source = s.source();
            }
            ExitCode::FAILURE
        }
    }
}
