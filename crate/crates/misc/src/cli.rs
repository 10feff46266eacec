//! Command-line front end.

use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};
use misc_core::container::ContainerError;
use misc_core::eval::{bpp_table, normalize, Column, MetricsTable, Row};
use misc_core::pipeline::{decode, encode, roundtrip_report, PipelineError};
use misc_core::pixel::PixelError;
use misc_core::{AblationFlags, Backend, BackendError, LevelPolicy, MiscContainer};
use thiserror::Error;

use crate::handle::BackendHandle;
use crate::io::{read_image, write_png, RasterError};
use crate::remote::{RemoteConfig, DEFAULT_RETRIES};
use crate::report::{self, Format, ReportError};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Io(String),
    #[error("{0}")]
    Format(String),
    #[error("{0}")]
    Backend(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            Self::Usage(_) => 2,
            Self::Io(_) => 3,
            Self::Format(_) => 4,
            Self::Backend(_) => 5,
        }
    }
}

impl From<RasterError> for CliError {
    fn from(e: RasterError) -> Self {
        match e {
            RasterError::Io { .. } => Self::Io(e.to_string()),
            RasterError::Format(_) => Self::Format(e.to_string()),
        }
    }
}

impl From<ContainerError> for CliError {
    fn from(e: ContainerError) -> Self {
        Self::Format(format!("container: {e}"))
    }
}

impl From<ReportError> for CliError {
    fn from(e: ReportError) -> Self {
        match e {
            ReportError::UnknownFormat(_) => Self::Usage(e.to_string()),
            _ => Self::Format(e.to_string()),
        }
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::Backend(_) | PipelineError::Pixel(PixelError::Backend(_)) | PipelineError::DimensionMismatch { .. } => {
                Self::Backend(e.to_string())
            }
            PipelineError::Policy(_) => Self::Usage(e.to_string()),
            _ => Self::Format(e.to_string()),
        }
    }
}

impl From<BackendError> for CliError {
    fn from(e: BackendError) -> Self {
        Self::Backend(format!("backend: {e}"))
    }
}

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

#[derive(Parser, Debug)]
#[command(name = "misc", version, about = "Semantic image compression at ultra-low bitrates")]
pub struct Cli {
    #[command(flatten)]
    pub backend: BackendArgs,

    /// Process up to N input files concurrently.
    #[arg(long, global = true, default_value_t = 1, value_parser = clap::value_parser!(u16).range(1..))]
    pub jobs: u16,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum BackendMode {
    /// Deterministic in-process stand-in; no network.
    Mock,
    /// Model service over HTTP.
    Remote,
}

#[derive(Args, Debug)]
pub struct BackendArgs {
    #[arg(long, global = true, value_enum, default_value_t = BackendMode::Mock)]
    pub backend: BackendMode,

    /// Model service base URL (remote backend).
    #[arg(long, global = true, env = "MISC_ENDPOINT")]
    pub endpoint: Option<String>,

    /// Bearer token sent to the model service.
    #[arg(long, global = true, env = "MISC_TOKEN", hide_env_values = true)]
    pub token: Option<String>,

    /// Seed for the mock backend and for remote describe/embed requests.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,

    /// Per-request timeout in seconds (remote backend).
    #[arg(long, global = true, default_value_t = 120)]
    pub timeout: u64,
}

#[derive(Args, Debug, Clone)]
pub struct EncodeArgs {
    /// Compression level: 1 and 2 carry item maps, 3 spends the budget on pixels.
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u8).range(1..=3))]
    pub level: u8,
    /// Omit all name/detail/map groups.
    #[arg(long)]
    pub drop_ndm: bool,
    /// Omit the whole-image description.
    #[arg(long)]
    pub drop_detail_all: bool,
    /// Omit the pixel bitstream; decoding starts from a gray canvas.
    #[arg(long)]
    pub drop_bitstream: bool,
    /// Keep at most this many name/detail/map groups.
    #[arg(long, value_parser = clap::value_parser!(u8).range(0..=3))]
    pub ndm_keep: Option<u8>,
}

impl EncodeArgs {
    fn policy(&self) -> Result<(LevelPolicy, AblationFlags), CliError> {
        let policy = LevelPolicy::for_level(self.level)?;
        let ablation = AblationFlags {
            drop_ndm: self.drop_ndm,
            drop_detail_all: self.drop_detail_all,
            drop_bitstream: self.drop_bitstream,
            ndm_keep: self.ndm_keep,
        };
        ablation.validate(&policy)?;
        Ok((policy, ablation))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum FormatArg {
    Json,
    Csv,
}

impl From<FormatArg> for Format {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Json => Format::Json,
            FormatArg::Csv => Format::Csv,
        }
    }
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Compress PNG/PPM rasters into .mscb containers.
    Encode {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        /// Output file, or directory when several inputs are given.
        #[arg(short, long)]
        output: Option<PathBuf>,
        #[command(flatten)]
        encode: EncodeArgs,
    },
    /// Reconstruct PNG rasters from .mscb containers.
    Decode {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        /// Output file, or directory when several inputs are given.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Encode, decode and report rate and quality for each input.
    Roundtrip {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        /// Directory for the .mscb and .rec.png outputs (default: next to each input).
        #[arg(short, long)]
        output: Option<PathBuf>,
        #[command(flatten)]
        encode: EncodeArgs,
        #[arg(long, value_enum, default_value_t = FormatArg::Json)]
        format: FormatArg,
        /// Write the report here instead of stdout.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Print a container's header, texts, maps and rate breakdown.
    Inspect { input: PathBuf },
    /// Normalize a metrics table and print per-row signed averages.
    Evaluate {
        /// CSV (with a direction row) or JSON metrics table.
        #[arg(long)]
        table: PathBuf,
        #[arg(long, value_enum, default_value_t = FormatArg::Json)]
        format: FormatArg,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
}

fn backend(args: &BackendArgs) -> Result<BackendHandle, CliError> {
    match args.backend {
        BackendMode::Mock => Ok(BackendHandle::mock(args.seed)),
        BackendMode::Remote => {
            let endpoint = args
                .endpoint
                .clone()
                .ok_or_else(|| CliError::Usage("--backend remote needs --endpoint or MISC_ENDPOINT".into()))?;
            Ok(BackendHandle::remote(RemoteConfig {
                endpoint,
                token: args.token.clone(),
                timeout: Duration::from_secs(args.timeout),
                retries: DEFAULT_RETRIES,
                seed: args.seed,
            }))
        }
    }
}

/// One output path per input. A single input writes to `output` itself;
/// several inputs treat it as a directory.
fn output_paths(inputs: &[PathBuf], output: Option<&Path>, ext: &str) -> Result<Vec<PathBuf>, CliError> {
    match output {
        Some(out) if inputs.len() == 1 => Ok(vec![out.to_path_buf()]),
        Some(dir) => in_dir(inputs, dir, ext),
        None => Ok(inputs.iter().map(|p| p.with_extension(ext)).collect()),
    }
}

fn in_dir(inputs: &[PathBuf], dir: &Path, ext: &str) -> Result<Vec<PathBuf>, CliError> {
    std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    Ok(inputs.iter().map(|p| dir.join(p.file_name().unwrap_or_default()).with_extension(ext)).collect())
}

/// Runs `f` over `items` on up to `jobs` threads, keeping input order.
fn fan_out<T, R, F>(items: &[T], jobs: usize, f: F) -> Vec<Result<R, CliError>>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> Result<R, CliError> + Sync,
{
    let next = AtomicUsize::new(0);
    let slots: Vec<Mutex<Option<Result<R, CliError>>>> = items.iter().map(|_| Mutex::new(None)).collect();
    std::thread::scope(|s| {
        for _ in 0..jobs.min(items.len()).max(1) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= items.len() {
                    break;
                }
                *slots[i].lock().unwrap() = Some(f(&items[i]));
            });
        }
    });
    slots.into_iter().map(|m| m.into_inner().unwrap().expect("every slot is filled")).collect()
}

fn first_error<R>(results: Vec<Result<R, CliError>>) -> Result<Vec<R>, CliError> {
    results.into_iter().collect()
}

fn read_container(path: &Path) -> Result<MiscContainer, CliError> {
    let bytes = std::fs::read(path).map_err(|e| io_err(path, e))?;
    MiscContainer::parse(&bytes).map_err(|e| CliError::Format(format!("{}: {e}", path.display())))
}

fn write_out(path: Option<&Path>, bytes: &[u8]) -> Result<(), CliError> {
    match path {
        Some(p) => std::fs::write(p, bytes).map_err(|e| io_err(p, e)),
        None => std::io::stdout().write_all(bytes).map_err(|e| CliError::Io(format!("stdout: {e}"))),
    }
}

fn label(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| path.display().to_string())
}

/// Bpp columns for every container plus whichever backend metrics have a
/// known direction.
fn roundtrip_table(rows: Vec<(MiscContainer, String, misc_core::MetricRecord)>) -> Result<MetricsTable, CliError> {
    let pairs: Vec<(MiscContainer, String)> = rows.iter().map(|(c, l, _)| (c.clone(), l.clone())).collect();
    let base = bpp_table(&pairs).map_err(|e| CliError::Format(e.to_string()))?;
    let extra: Vec<Column> = rows[0]
        .2
        .values
        .iter()
        .filter_map(|(name, _)| report::metric_direction(name).map(|d| Column::new(name.clone(), d)))
        .collect();
    let mut columns = base.columns().to_vec();
    columns.extend(extra.iter().cloned());
    let table_rows = base
        .rows()
        .iter()
        .zip(&rows)
        .map(|(row, (_, _, metrics))| {
            let mut values = row.values.clone();
            for c in &extra {
                values.push(metrics.get(&c.name).ok_or_else(|| CliError::Backend(format!("metric {} missing for {}", c.name, row.label)))?);
            }
            Ok(Row::new(row.label.clone(), values))
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    MetricsTable::new(columns, table_rows).map_err(|e| CliError::Format(e.to_string()))
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    let jobs = cli.jobs as usize;
    match cli.command {
        Command::Encode { inputs, output, encode: args } => {
            let (policy, ablation) = args.policy()?;
            let b = backend(&cli.backend)?;
            let outs = output_paths(&inputs, output.as_deref(), "mscb")?;
            let work: Vec<(PathBuf, PathBuf)> = inputs.into_iter().zip(outs).collect();
            first_error(fan_out(&work, jobs, |(input, out)| {
                let img = read_image(input)?;
                let bytes = encode(&img, &policy, &ablation, &b)?.serialize()?;
                std::fs::write(out, bytes).map_err(|e| io_err(out, e))
            }))?;
        }
        Command::Decode { inputs, output } => {
            let b = backend(&cli.backend)?;
            let outs = output_paths(&inputs, output.as_deref(), "rec.png")?;
            let work: Vec<(PathBuf, PathBuf)> = inputs.into_iter().zip(outs).collect();
            first_error(fan_out(&work, jobs, |(input, out)| {
                let c = read_container(input)?;
                let policy = LevelPolicy::for_level(c.level)?;
                let img = decode(&c, &policy, &b)?;
                Ok(write_png(out, &img)?)
            }))?;
        }
        Command::Roundtrip { inputs, output, encode: args, format, report: report_path } => {
            let (policy, ablation) = args.policy()?;
            let b = backend(&cli.backend)?;
            let containers = match &output {
                Some(dir) => in_dir(&inputs, dir, "mscb")?,
                None => inputs.iter().map(|p| p.with_extension("mscb")).collect(),
            };
            let work: Vec<(PathBuf, PathBuf)> = inputs.into_iter().zip(containers).collect();
            let rows = first_error(fan_out(&work, jobs, |(input, out)| {
                let img = read_image(input)?;
                let rt = roundtrip_report(&img, &policy, &ablation, &b)?;
                std::fs::write(out, &rt.bytes).map_err(|e| io_err(out, e))?;
                let png = out.with_extension("rec.png");
                write_png(&png, &rt.reconstruction)?;
                let metrics = b.metrics(&rt.reconstruction, &img)?;
                Ok((rt.container, label(input), metrics))
            }))?;
            let table = roundtrip_table(rows)?;
            write_out(report_path.as_deref(), &report::emit_table(&table, format.into())?)?;
        }
        Command::Inspect { input } => {
            let c = read_container(&input)?;
            write_out(None, crate::inspect::render(&c)?.as_bytes())?;
        }
        Command::Evaluate { table, format, output } => {
            let bytes = std::fs::read(&table).map_err(|e| io_err(&table, e))?;
            let t = report::parse_table(&bytes, Format::from_path(&table))
                .map_err(|e| CliError::Format(format!("{}: {e}", table.display())))?;
            let normalized = normalize(&t).map_err(|e| CliError::Format(format!("{}: {e}", table.display())))?;
            write_out(output.as_deref(), &report::emit_report(&normalized, format.into())?)?;
        }
    }
    Ok(())
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("misc: {e}");
            e.exit_code()
        }
    }
}
