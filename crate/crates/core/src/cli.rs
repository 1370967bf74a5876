//! Command-line entry point: experiments, classification, tables and trace
//! export.
//!
//! Every failure is reported as one line `error: <kind>: <message>` with a
//! nonzero exit status.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};

use crate::classify::{render_tables, TableFormat, TableSelection, TRACING_COLUMNS};
use crate::config::{ConfigError, ExperimentConfig};
use crate::harness::{build_report, golden_suite, run_variants, write_artifacts, HarnessError, Variant, ALL_MODES};
use crate::platform::ProfileName;
use crate::trace::{SamplerConfig, TracingMode};

pub const DEFAULT_OUT_DIR: &str = "out";

#[derive(Debug, Parser)]
#[command(name = "faas-observe", version, about = "Simulate FaaS tracing architectures and classify fault observability")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub flags: Flags,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Run the experiment variants and write report and artifacts.
    Run,
    /// Classify the golden scenario runs and print the verdict matrix as JSON.
    Classify,
    /// Print the observability tables.
    Tables,
    /// Run the experiment variants and write only their Zipkin traces.
    ExportTraces,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Md,
}

#[derive(Debug, Clone, Default, clap::Args)]
pub struct Flags {
    /// Experiment config file (TOML); flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Variant name or `all`. For tables and classify it filters tracing modes.
    #[arg(long, global = true)]
    pub variant: Option<String>,
    #[arg(long, global = true, value_parser = parse_profile)]
    pub profile: Option<ProfileName>,
    #[arg(long, global = true)]
    pub requests: Option<u32>,
    #[arg(long, global = true)]
    pub records: Option<u32>,
    /// Probability-based sampling rate in [0, 1].
    #[arg(long, global = true, value_parser = parse_sampling)]
    pub sampling: Option<f64>,
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
}

fn parse_profile(s: &str) -> Result<ProfileName, String> {
    ProfileName::parse(s).ok_or_else(|| format!("unknown profile `{s}` (expected aws_like or openwhisk_like)"))
}

fn parse_sampling(s: &str) -> Result<f64, String> {
    let p: f64 = s.parse().map_err(|_| format!("`{s}` is not a number"))?;
    if (0.0..=1.0).contains(&p) {
        Ok(p)
    } else {
        Err(format!("sampling rate {p} is outside [0, 1]"))
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Harness(#[from] HarnessError),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
}

impl CliError {
    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "usage",
            CliError::Config(ConfigError::Harness(e)) | CliError::Harness(e) => match e {
                HarnessError::Io { .. } => "io",
                HarnessError::Classify(_) => "classify",
                HarnessError::Mismatch(_) => "runtime",
                HarnessError::Platform(_) | HarnessError::Fault(_) => "validation",
            },
            CliError::Config(ConfigError::Read { .. }) | CliError::Io { .. } => "io",
            CliError::Config(_) => "config",
        }
    }

    /// The single-line diagnostic.
    pub fn diagnostic(&self) -> String {
        let msg = self.to_string().replace('\n', " ");
        format!("error: {}: {}", self.kind(), msg.trim())
    }
}

impl Flags {
    /// Loads the config file (or defaults) and applies flag overrides.
    pub fn resolve(&self) -> Result<ExperimentConfig, CliError> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig::default(),
        };
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(profile) = self.profile {
            cfg.profile = profile;
        }
        if let Some(requests) = self.requests {
            cfg.workload.requests = requests;
        }
        if let Some(records) = self.records {
            cfg.workload.records = records;
        }
        if let Some(p) = self.sampling {
            cfg.tracing.sampling = SamplerConfig::probability(p);
        }
        if let Some(v) = &self.variant {
            cfg.variants = parse_variants(v)?;
        }
        Ok(cfg)
    }

    fn out_dir(&self) -> PathBuf {
        self.out.clone().unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR))
    }

    fn profiles(&self, cfg: &ExperimentConfig) -> Vec<ProfileName> {
        match (self.profile, &self.config) {
            (Some(p), _) => vec![p],
            (None, Some(_)) => vec![cfg.profile],
            (None, None) => ProfileName::ALL.to_vec(),
        }
    }

    /// Tracing modes selected by `--variant`, for tables and classify.
    fn modes(&self) -> Result<Vec<TracingMode>, CliError> {
        match self.variant.as_deref() {
            None | Some("all") => Ok(ALL_MODES.to_vec()),
            Some(v) => TracingMode::parse(v)
                .map(|m| vec![m])
                .ok_or_else(|| CliError::Usage(format!("unknown variant `{v}`"))),
        }
    }
}

pub fn parse_variants(s: &str) -> Result<Vec<Variant>, CliError> {
    if s == "all" {
        return Ok(Variant::ALL.to_vec());
    }
    let mut out = Vec::new();
    for part in s.split(',') {
        let v = Variant::parse(part.trim())
            .ok_or_else(|| CliError::Usage(format!("unknown variant `{part}` (expected none, developer_driven, platform_supported or all)")))?;
        if !out.contains(&v) {
            out.push(v);
        }
    }
    Ok(out)
}

/// Runs a parsed command, writing its primary output to `stdout`.
pub fn execute(cli: &Cli, stdout: &mut dyn Write) -> Result<(), CliError> {
    match cli.command {
        Command::Run => cmd_run(&cli.flags, stdout),
        Command::Classify => cmd_classify(&cli.flags, stdout),
        Command::Tables => cmd_tables(&cli.flags, stdout),
        Command::ExportTraces => cmd_export_traces(&cli.flags, stdout),
    }
}

fn emit(stdout: &mut dyn Write, text: &str) -> Result<(), CliError> {
    stdout.write_all(text.as_bytes()).map_err(|source| CliError::Io {
        path: "<stdout>".into(),
        source,
    })
}

fn write_out(path: &Path, text: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|source| CliError::Io {
            path: dir.display().to_string(),
            source,
        })?;
    }
    std::fs::write(path, text).map_err(|source| CliError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn cmd_run(flags: &Flags, stdout: &mut dyn Write) -> Result<(), CliError> {
    let cfg = flags.resolve()?;
    let setup = cfg.setup()?;
    let artifacts = run_variants(&cfg.variants, &setup)?;
    let modes: Vec<TracingMode> = cfg.variants.iter().map(|v| v.mode()).collect();
    let suite = golden_suite(&[setup.profile], &modes, setup.seed)?;
    let report = build_report(&setup, &artifacts, &suite.catalog)?;
    let dir = flags.out_dir();
    write_artifacts(&dir, &report, &artifacts)?;
    for a in &artifacts {
        emit(
            stdout,
            &format!(
                "{}: {} invocations, {} spans\n",
                a.variant.as_str(),
                a.ledger.len(),
                a.collector.spans().len()
            ),
        )?;
    }
    emit(stdout, &format!("wrote {}\n", dir.display()))
}

pub fn cmd_classify(flags: &Flags, stdout: &mut dyn Write) -> Result<(), CliError> {
    if flags.format == Some(Format::Md) {
        return Err(CliError::Usage("classify only emits json".into()));
    }
    let cfg = flags.resolve_golden()?;
    let suite = golden_suite(&flags.profiles(&cfg), &flags.modes()?, cfg.seed)?;
    let json = suite.matrix.to_json() + "\n";
    match &flags.out {
        Some(dir) => write_out(&dir.join("verdicts.json"), &json),
        None => emit(stdout, &json),
    }
}

pub fn cmd_tables(flags: &Flags, stdout: &mut dyn Write) -> Result<(), CliError> {
    let cfg = flags.resolve_golden()?;
    let modes = flags.modes()?;
    // Improvement marks compare against the response and log channels, so
    // every profile and mode is classified and the selection only filters.
    let suite = golden_suite(&ProfileName::ALL, &ALL_MODES, cfg.seed)?;
    let selection = TableSelection {
        profiles: flags.profiles(&cfg),
        modes: TRACING_COLUMNS
            .iter()
            .map(|c| c.mode)
            .filter(|m| modes.contains(m))
            .collect(),
    };
    let (format, name) = match flags.format.unwrap_or(Format::Md) {
        Format::Md => (TableFormat::Markdown, "tables.md"),
        Format::Json => (TableFormat::Json, "tables.json"),
    };
    let text = render_tables(&suite.matrix, &selection, format).map_err(HarnessError::from)?;
    match &flags.out {
        Some(dir) => write_out(&dir.join(name), &text),
        None => emit(stdout, &text),
    }
}

pub fn cmd_export_traces(flags: &Flags, stdout: &mut dyn Write) -> Result<(), CliError> {
    let cfg = flags.resolve()?;
    let setup = cfg.setup()?;
    let artifacts = run_variants(&cfg.variants, &setup)?;
    let dir = flags.out_dir();
    for a in &artifacts {
        let path = dir.join(format!("traces-{}.json", a.variant.as_str()));
        let json = String::from_utf8(a.zipkin()).expect("zipkin export is utf-8");
        write_out(&path, &json)?;
        emit(stdout, &format!("{}\n", path.display()))?;
    }
    Ok(())
}

impl Flags {
    /// Config for golden runs: `--variant` selects modes there, so it is not
    /// interpreted as an experiment variant.
    fn resolve_golden(&self) -> Result<ExperimentConfig, CliError> {
        Flags {
            variant: None,
            ..self.clone()
        }
        .resolve()
    }
}

/// Parses arguments, runs the command and returns the exit status.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return 0;
            }
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or("invalid arguments");
            eprintln!("error: usage: {}", first.trim_start_matches("error: "));
            return 2;
        }
    };
    let mut stdout = std::io::stdout().lock();
    match execute(&cli, &mut stdout) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{}", e.diagnostic());
            1
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sampling_is_range_checked() {
        assert_eq!(parse_sampling("0"), Ok(0.0));
        assert_eq!(parse_sampling("1"), Ok(1.0));
        assert!(parse_sampling("1.5").is_err());
        assert!(parse_sampling("-0.1").is_err());
        assert!(parse_sampling("x").is_err());
    }

    #[test]
    fn variant_all_expands() {
        assert_eq!(parse_variants("all").unwrap(), Variant::ALL.to_vec());
        assert_eq!(parse_variants("none,none").unwrap(), vec![Variant::None]);
        assert!(parse_variants("xray").is_err());
    }

    #[test]
    fn flags_override_config() {
        let cli = Cli::try_parse_from(["faas-observe", "run", "--seed", "7", "--records", "3", "--sampling", "0.5", "--variant", "none"]).unwrap();
        let cfg = cli.flags.resolve().unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.workload.records, 3);
        assert_eq!(cfg.tracing.sampling.probability, 0.5);
        assert_eq!(cfg.variants, vec![Variant::None]);
    }

    #[test]
    fn diagnostics_are_single_line() {
        let e = CliError::Config(ExperimentConfig::parse("seed = \"x\"\n").unwrap_err());
        let d = e.diagnostic();
        assert!(d.starts_with("error: config: "));
        assert!(!d.contains('\n'));
    }
}
