//! Command-line front end.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 data error,
//! 3 stage failure.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::classify::{evaluate, LabeledFeatures};
use crate::config::{parse_assignment, parse_list, read_key_values, Configurable};
use crate::embed::{train, NodeVectors};
use crate::error::{Error, Result, StageExt};
use crate::graph::build_graph_for;
use crate::pipeline::{
    bias_entities, bias_table, prepare_dataset, prepare_graph, run_pipeline, sweep, with_threads, write_json, write_sweep_table, PipelineConfig,
    SweepParameter,
};
use crate::synth::{generate, SynthConfig};
use crate::walker::{generate_corpus, WalkCorpus};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_STAGE: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "deepcity", version, about = "Task-specific embeddings for check-in data")]
pub struct Cli {
    /// Log progress to stderr.
    #[arg(short, long, global = true)]
    pub verbose: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct ConfigArgs {
    /// Key-value configuration file.
    #[arg(short, long)]
    pub config: Option<PathBuf>,
    /// Override one key, e.g. `--set s=40`. Repeatable; applied after the file.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    /// Force single-threaded execution everywhere.
    #[arg(long)]
    pub deterministic: bool,
}

impl ConfigArgs {
    fn apply_to<C: Configurable>(&self, target: &mut C) -> Result<()> {
        if let Some(path) = &self.config {
            target.apply(&read_key_values(path)?)?;
        }
        let overrides: Vec<(String, String)> =
            self.overrides.iter().map(|s| parse_assignment(s)).collect::<Result<_>>()?;
        target.apply(&overrides)
    }

    fn pipeline(&self) -> Result<PipelineConfig> {
        let mut c = PipelineConfig::default();
        self.apply_to(&mut c)?;
        c.deterministic |= self.deterministic;
        c.validate()?;
        Ok(c)
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic corpus into a directory.
    Synth {
        #[arg(short, long)]
        out: PathBuf,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Parse and filter the input files and print counts.
    Ingest {
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Write the unbiased bipartite graph as `src dst weight` lines.
    Graph {
        #[arg(short, long)]
        out: PathBuf,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Write the per-node bias values for the configured task.
    Bias {
        #[arg(short, long)]
        out: PathBuf,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Generate the walk corpus for the configured variant.
    Walk {
        #[arg(short, long)]
        out: PathBuf,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Train skip-gram vectors on a walk file.
    Embed {
        #[arg(short, long)]
        walks: PathBuf,
        #[arg(short, long)]
        out: PathBuf,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Evaluate an embedding file with logistic regression.
    Classify {
        #[arg(short, long)]
        embeddings: PathBuf,
        #[arg(short, long)]
        out: PathBuf,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Run every stage and write walks, embeddings and a report.
    Pipeline {
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Rerun the pipeline over values of one parameter.
    Sweep {
        /// One of s, r, d, min_checkins.
        #[arg(short, long)]
        param: String,
        /// Comma-separated values.
        #[arg(long)]
        values: String,
        /// Results table; stdout when omitted.
        #[arg(short, long)]
        table: Option<PathBuf>,
        #[command(flatten)]
        config: ConfigArgs,
    },
}

/// Maps an error onto the process exit code.
pub fn exit_code(e: &Error) -> i32 {
    if e.is_data_error() {
        EXIT_DATA
    } else if matches!(e, Error::Stage { .. }) {
        EXIT_STAGE
    } else {
        EXIT_USAGE
    }
}

fn write_text(path: &Path, body: impl FnOnce(&mut std::io::BufWriter<std::fs::File>) -> std::io::Result<()>) -> Result<()> {
    crate::ingest::write_file(path, body)
}

fn print(line: &str) {
    let mut out = std::io::stdout().lock();
    // A closed stdout is not worth failing the run over.
    let _ = writeln!(out, "{line}");
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth { out, config } => {
            let mut c = SynthConfig::default();
            config.apply_to(&mut c)?;
            let corpus = generate(&c).stage("synth")?;
            corpus.write_to(&out).stage("synth")?;
            print(&format!(
                "wrote {} check-ins, {} users, {} locations to {}",
                corpus.checkins.len(),
                corpus.manifest.users.len(),
                corpus.manifest.locations.len(),
                out.display()
            ));
        }
        Command::Ingest { config } => {
            let c = config.pipeline()?;
            let (_, summary, warnings) = prepare_dataset(&c).stage("ingest")?;
            warnings.iter().for_each(|w| log::warn!("{w}"));
            print(&serde_json::to_string_pretty(&summary).expect("summary serializes"));
        }
        Command::Graph { out, config } => {
            let c = config.pipeline()?;
            let (dataset, _, _) = prepare_dataset(&c).stage("ingest")?;
            let graph = build_graph_for(&dataset, c.task.target_partition()).stage("graph")?;
            write_text(&out, |w| graph.write_dump(w)).stage("graph")?;
        }
        Command::Bias { out, config } => {
            let c = config.pipeline()?;
            let (dataset, _, _) = prepare_dataset(&c).stage("ingest")?;
            let table = bias_table(&c, &dataset).stage("bias")?;
            write_text(&out, |w| table.write_dump(w)).stage("bias")?;
        }
        Command::Walk { out, config } => {
            let c = config.pipeline()?;
            with_threads(c.deterministic, || -> Result<()> {
                let (dataset, _, _) = prepare_dataset(&c).stage("ingest")?;
                let graph = prepare_graph(&c, &dataset)?;
                generate_corpus(&graph, &c.walk)
                    .and_then(|corpus| corpus.save(&out))
                    .stage("walk")
            })??;
        }
        Command::Embed { walks, out, config } => {
            let c = config.pipeline()?;
            let mut sg = c.skipgram;
            if c.deterministic {
                sg.threads = 1;
            }
            let corpus = WalkCorpus::load(&walks).stage("embed")?;
            train(&corpus, &sg)
                .and_then(|m| m.into_vectors().save(&out))
                .stage("embed")?;
        }
        Command::Classify { embeddings, out, config } => {
            let c = config.pipeline()?;
            with_threads(c.deterministic, || -> Result<()> {
                let (dataset, _, _) = prepare_dataset(&c).stage("ingest")?;
                let vectors = NodeVectors::load(&embeddings).stage("classify")?;
                let (mut features, missing) =
                    LabeledFeatures::from_vectors(&vectors, &dataset, c.task).stage("classify")?;
                if let Some(reserved) = bias_entities(&c, &dataset) {
                    features = features.without(&reserved).stage("classify")?;
                }
                if missing > 0 {
                    log::warn!("{missing} labeled entities have no embedding");
                }
                let report = evaluate(&features, &c.eval).stage("classify")?;
                write_json(&out, &report).stage("classify")
            })??;
        }
        Command::Pipeline { config } => {
            let c = config.pipeline()?;
            let outcome = run_pipeline(&c)?;
            print(&serde_json::to_string_pretty(&outcome.report.metrics.mean).expect("metrics serialize"));
            print(&format!("report: {}", outcome.artifacts.report.display()));
        }
        Command::Sweep {
            param,
            values,
            table,
            config,
        } => {
            let c = config.pipeline()?;
            let parameter: SweepParameter = param.parse()?;
            let values: Vec<usize> = parse_list("values", &values)?;
            let rows = sweep(&c, parameter, &values)?;
            match table {
                Some(path) => write_text(&path, |w| write_sweep_table(w, parameter, &rows)).stage("sweep")?,
                None => write_sweep_table(std::io::stdout().lock(), parameter, &rows)
                    .map_err(|e| Error::io("<stdout>", e))?,
            }
        }
    }
    Ok(())
}

/// Parses `args`, runs the command and returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let level = if cli.verbose { "info" } else { "warn" };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).try_init();
    match run(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes() {
        assert_eq!(exit_code(&Error::InvalidConfig("x".into())), EXIT_USAGE);
        assert_eq!(exit_code(&Error::Malformed("x".into())), EXIT_DATA);
        let wrapped = Err::<(), _>(Error::Empty("x")).stage("ingest").unwrap_err();
        assert_eq!(exit_code(&wrapped), EXIT_DATA);
        let failed = Err::<(), _>(Error::DimensionMismatch { expected: 1, actual: 2 })
            .stage("classify")
            .unwrap_err();
        assert_eq!(exit_code(&failed), EXIT_STAGE);
    }

    #[test]
    fn usage_errors_exit_one_and_help_exits_zero() {
        assert_eq!(main_with_args(["deepcity", "frobnicate"]), EXIT_USAGE);
        assert_eq!(main_with_args(["deepcity", "--help"]), EXIT_OK);
        assert_eq!(main_with_args(["deepcity", "pipeline", "--set", "variant=nope"]), EXIT_USAGE);
    }
}
