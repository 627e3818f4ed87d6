use std::ffi::OsString;
use std::io::{self, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use ats_core::config::ExperimentConfig;
use ats_core::dataset::{read_asap, read_tsv};
use ats_core::profiler::train_from_config;
use ats_core::{Dataset, Error, MetricReport, Profiler};
use clap::{Parser, Subcommand, ValueEnum};

use crate::server;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "ats", version, about = "Train, evaluate and serve feature-based text scoring models")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum InputFormat {
    /// `label<TAB>text` per line
    Tsv,
    /// ASAP-AES training file (needs --prompt)
    Asap,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OutputFormat {
    Text,
    Json,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a model from a configuration file and save it as an artifact.
    Train { config: PathBuf, artifact_dir: PathBuf },
    /// Score a labelled dataset with a saved artifact.
    Evaluate {
        artifact_dir: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long, value_enum, default_value_t = InputFormat::Tsv)]
        format: InputFormat,
        #[arg(long, required_if_eq("format", "asap"))]
        prompt: Option<i64>,
        #[arg(long, value_enum, default_value_t = OutputFormat::Text)]
        output_format: OutputFormat,
    },
    /// Predict one document per input line; prints `label<TAB>score`.
    Predict {
        artifact_dir: PathBuf,
        /// Input file; standard input when omitted.
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Serve the interpretation API (and UI files, if given).
    Interpret {
        artifact_dir: PathBuf,
        #[arg(long, default_value_t = 8321)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        /// Labelled TSV dataset to browse.
        #[arg(long)]
        data: Option<PathBuf>,
        /// Directory with built UI files served at `/`.
        #[arg(long)]
        ui_dir: Option<PathBuf>,
    },
}

/// Parses arguments and runs the command; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli.command) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_RUNTIME
        }
    }
}

fn execute(cmd: Command) -> Result<(), Error> {
    match cmd {
        Command::Train { config, artifact_dir } => train(&config, &artifact_dir),
        Command::Evaluate {
            artifact_dir,
            input,
            format,
            prompt,
            output_format,
        } => evaluate(&artifact_dir, &input, format, prompt, output_format),
        Command::Predict { artifact_dir, input } => predict(&artifact_dir, input.as_deref()),
        Command::Interpret {
            artifact_dir,
            port,
            host,
            data,
            ui_dir,
        } => interpret(&artifact_dir, &host, port, data.as_deref(), ui_dir),
    }
}

fn stdout_err(e: io::Error) -> Error {
    Error::io("<stdout>", e)
}

fn write_report(out: &mut impl Write, report: &MetricReport) -> io::Result<()> {
    for (name, v) in report.ordered() {
        writeln!(out, "{name}: {v:.4}")?;
    }
    Ok(())
}

pub fn train(config: &Path, artifact_dir: &Path) -> Result<(), Error> {
    let start = Instant::now();
    let cfg = ExperimentConfig::from_file(config)?;
    let outcome = train_from_config(&cfg)?;
    outcome.profiler.save(artifact_dir)?;

    let p = &outcome.profiler;
    let mut out = io::stdout().lock();
    (|| -> io::Result<()> {
        writeln!(out, "task: {}", p.task())?;
        writeln!(out, "model: {}", p.model().type_name())?;
        writeln!(out, "train instances: {}", outcome.n_train)?;
        writeln!(out, "feature dims: {} ({})", p.pipeline().dims(), p.feature_names().join(", "))?;
        writeln!(out, "label range: {}", p.label_spec())?;
        if let Some((n, report)) = &outcome.heldout {
            writeln!(out, "held-out instances: {n}")?;
            write_report(&mut out, report)?;
        }
        writeln!(out, "artifact: {}", artifact_dir.display())
    })()
    .map_err(stdout_err)?;
    eprintln!("wall time: {:.2}s", start.elapsed().as_secs_f64());
    Ok(())
}

fn load_eval_data(p: &Profiler, input: &Path, format: InputFormat, prompt: Option<i64>) -> Result<Dataset, Error> {
    let spec = Some(p.label_spec());
    match format {
        InputFormat::Tsv => read_tsv(input, spec),
        InputFormat::Asap => read_asap(input, prompt.unwrap_or(1), spec),
    }
}

pub fn evaluate(
    artifact_dir: &Path,
    input: &Path,
    format: InputFormat,
    prompt: Option<i64>,
    output_format: OutputFormat,
) -> Result<(), Error> {
    let start = Instant::now();
    let p = Profiler::load(artifact_dir)?;
    let ds = load_eval_data(&p, input, format, prompt)?;
    if ds.is_empty() {
        return Err(Error::EmptyDataset.context(input.display().to_string()));
    }
    let report = p.evaluate(&ds)?;
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    let mut out = io::stdout().lock();
    match output_format {
        OutputFormat::Text => write_report(&mut out, &report).map_err(stdout_err)?,
        OutputFormat::Json => {
            let mut obj = serde_json::Map::new();
            for (k, v) in &report.metrics {
                obj.insert(k.clone(), serde_json::json!(v));
            }
            obj.insert("n".into(), serde_json::json!(report.n));
            writeln!(out, "{}", serde_json::Value::Object(obj)).map_err(stdout_err)?;
        }
    }
    eprintln!("wall time: {:.2}s", start.elapsed().as_secs_f64());
    Ok(())
}

pub fn predict(artifact_dir: &Path, input: Option<&Path>) -> Result<(), Error> {
    let p = Profiler::load(artifact_dir)?;
    let text = match input {
        Some(path) => std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?,
        None => {
            let mut s = String::new();
            io::stdin().read_to_string(&mut s).map_err(|e| Error::io("<stdin>", e))?;
            s
        }
    };
    let mut out = BufWriter::new(io::stdout().lock());
    for line in text.lines() {
        let pred = p.predict(line)?;
        writeln!(out, "{}\t{:.6}", pred.label, pred.score).map_err(stdout_err)?;
    }
    out.flush().map_err(stdout_err)
}

pub fn interpret(
    artifact_dir: &Path,
    host: &str,
    port: u16,
    data: Option<&Path>,
    ui_dir: Option<PathBuf>,
) -> Result<(), Error> {
    let p = Profiler::load(artifact_dir)?;
    let ds = data
        .map(|path| read_tsv(path, Some(p.label_spec())))
        .transpose()?;
    let state = server::AppState::new(Arc::new(p), ds.map(Arc::new))?;
    let rt = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|e| Error::io("<runtime>", e))?;
    rt.block_on(async move {
        let addr = format!("{host}:{port}");
        let listener = tokio::net::TcpListener::bind(&addr)
            .await
            .map_err(|e| Error::io(&addr, e))?;
        println!("serving on http://{addr}/");
        server::serve(listener, state, ui_dir, shutdown_signal())
            .await
            .map_err(|e| Error::io(&addr, e))
    })
}

async fn shutdown_signal() {
    if tokio::signal::ctrl_c().await.is_err() {
        std::future::pending::<()>().await;
    }
    eprintln!("shutting down");
}
