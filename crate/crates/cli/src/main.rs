use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use drsr::archive::{read_jsonl, DescriptorQuery};

mod aggregate;
mod error;
mod experiment;
mod query;

use error::{CliError, CliResult};
use experiment::Experiment;

#[derive(Parser, Debug)]
#[command(name = "drsr", version, about = "Diversified-residual symbolic regression experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run the trials described by a JSON config.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Output directory; overrides `output_dir` in the config.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Number of trials; overrides `trials` in the config.
        #[arg(long)]
        trials: Option<usize>,
        /// Trials run concurrently (defaults to the number of CPUs).
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Summarise the trials under a run directory with bootstrap intervals.
    Aggregate {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// List the fittest archive elites inside a descriptor box.
    Query {
        #[arg(long)]
        archive: PathBuf,
        /// Node-count range `a:b`, inclusive.
        #[arg(long, default_value = "1:20")]
        rep: String,
        /// Transcendental-count range `a:b`, inclusive.
        #[arg(long, default_value = "0:4")]
        trans: String,
        /// Comma-separated cluster indices; all clusters if omitted.
        #[arg(long)]
        clusters: Option<String>,
        #[arg(long, default_value_t = 6)]
        top: usize,
    },
}

fn run(command: Command) -> CliResult<()> {
    match command {
        Command::Run { config, out, trials, jobs } => {
            let mut exp = Experiment::load(&config)?;
            if let Some(t) = trials {
                if t == 0 {
                    return Err(CliError::invalid("--trials: must be at least 1"));
                }
                exp.trials = t;
            }
            let out = out
                .or_else(|| exp.output_dir.clone())
                .ok_or_else(|| CliError::invalid("output_dir: required (set it in the config or pass --out)"))?;
            let jobs = match jobs {
                Some(0) => return Err(CliError::invalid("--jobs: must be at least 1")),
                Some(j) => j,
                None => std::thread::available_parallelism().map_or(1, |n| n.get()),
            };
            experiment::run_trials(&exp, &out, jobs)?;
            println!("wrote {} trial(s) to {}", exp.trials, out.display());
        }
        Command::Aggregate { input, out } => {
            let trials = aggregate::read_trials(&input)?;
            let rows = aggregate::summarise(&trials)?;
            if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
                fs::create_dir_all(parent)?;
            }
            let mut w = BufWriter::new(File::create(&out)?);
            aggregate::write_summary(&trials, &rows, &mut w)?;
            w.flush()?;
            println!("summarised {} trial(s) into {} rows at {}", trials.len(), rows.len(), out.display());
        }
        Command::Query { archive, rep, trans, clusters, top } => {
            let query = DescriptorQuery {
                rep: query::parse_range("--rep", &rep)?,
                trans: query::parse_range("--trans", &trans)?,
                clusters: clusters.as_deref().map(query::parse_clusters).transpose()?,
                top_k: top,
            };
            let file = File::open(&archive).map_err(|e| CliError::invalid(format!("--archive {}: {e}", archive.display())))?;
            let records = read_jsonl(BufReader::new(file))?;
            print!("{}", query::render_table(&query.run(&records)));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse().command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprint!("{e}");
            if matches!(e, CliError::Runtime(_)) {
                eprintln!();
            }
            ExitCode::from(e.exit_code())
        }
    }
}
