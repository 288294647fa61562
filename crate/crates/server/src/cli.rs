//! Operator command line.
//!
//! `ESD_DATA_DIR`, `ESD_PORT` and `ESD_CREDENTIALS` take precedence over the
//! corresponding flags.

use std::fs;
use std::io::{self, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context};
use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand};
use serde_json::json;

use esd_core::bundle::ImportBundle;
use esd_core::evvr::validate_record;
use esd_core::fixtures::synthetic_corpus;
use esd_core::moderation::SystemClock;
use esd_core::query::{FilterSpec, NumericField, SummaryStats};
use esd_core::record::ExperimentRecord;
use esd_core::store::{FileBackend, Store};
use esd_core::{ModerationDesk, ReleaseArchive};

use crate::api::{self, DEFAULT_BINS, DEFAULT_STATS_FIELDS};
use crate::auth::Credentials;
use crate::App;

pub const ENV_DATA_DIR: &str = "ESD_DATA_DIR";
pub const ENV_PORT: &str = "ESD_PORT";
pub const ENV_CREDENTIALS: &str = "ESD_CREDENTIALS";

#[derive(Debug, Parser)]
#[command(name = "esd", version, about = "Electrospinning data repository")]
pub struct Cli {
    /// Repository data directory.
    #[arg(long, global = true, default_value = "esd-data")]
    pub data: PathBuf,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Validate a record document; exits 0 only when every rule passes.
    Validate { file: PathBuf },
    /// Trusted batch import: validate and accept every passing record.
    Import { file: PathBuf },
    /// Run the HTTP service.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        #[arg(long)]
        credentials: Option<PathBuf>,
    },
    /// Cut, list and fetch dataset releases
    #[command(subcommand)]
    Release(ReleaseCommand),
    /// Filter accepted records and optionally summarize them.
    Query(Box<QueryArgs>),
    /// Write a snapshot archive of the store.
    Snapshot { path: PathBuf },
    /// Rebuild an empty data directory from a snapshot archive.
    Restore { path: PathBuf },
    /// Generate a synthetic import file
    #[command(subcommand)]
    Fixtures(FixturesCommand),
}

#[derive(Debug, Subcommand)]
pub enum ReleaseCommand {
    /// Cut the next release from all accepted records.
    Cut {
        #[arg(long)]
        force: bool,
        /// Release date, YYYY-MM-DD; today when omitted.
        #[arg(long)]
        date: Option<NaiveDate>,
    },
    List {
        #[arg(long)]
        json: bool,
    },
    /// Write one artifact of a release to a file or stdout.
    Fetch {
        label: String,
        artifact: String,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
}

#[derive(Debug, Subcommand)]
pub enum FixturesCommand {
    /// Write a deterministic synthetic import file.
    Generate {
        #[arg(long, default_value_t = 1000)]
        count: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(short, long)]
        output: PathBuf,
    },
}

#[derive(Debug, Clone, Default, Args)]
pub struct QueryArgs {
    #[arg(long)]
    pub polymer: Vec<String>,
    #[arg(long)]
    pub solvent: Vec<String>,
    /// Require every polymer and solvent to be in the requested sets.
    #[arg(long)]
    pub exclusive: bool,
    #[arg(long)]
    pub needle: Option<String>,
    #[arg(long)]
    pub collector: Option<String>,
    #[arg(long)]
    pub instability: Vec<String>,
    #[arg(long)]
    pub has_images: Option<bool>,
    /// `axis=term`, e.g. `shape=Cylinder`.
    #[arg(long)]
    pub morphology: Vec<String>,
    #[arg(long, value_name = "MIN:MAX")]
    pub fiber_diameter: Option<String>,
    #[arg(long, value_name = "MIN:MAX")]
    pub voltage: Option<String>,
    #[arg(long, value_name = "MIN:MAX")]
    pub flow_rate: Option<String>,
    #[arg(long, value_name = "MIN:MAX")]
    pub concentration: Option<String>,
    #[arg(long, value_name = "MIN:MAX")]
    pub distance: Option<String>,
    #[arg(long, value_name = "MIN:MAX")]
    pub temperature: Option<String>,
    #[arg(long, value_name = "MIN:MAX")]
    pub humidity: Option<String>,
    /// Any numeric field, `FIELD=MIN:MAX`.
    #[arg(long, value_name = "FIELD=MIN:MAX")]
    pub range: Vec<String>,
    /// Print summary statistics instead of records.
    #[arg(long)]
    pub stats: bool,
    /// Comma-separated fields to summarize.
    #[arg(long)]
    pub fields: Option<String>,
    #[arg(long)]
    pub histogram: Option<String>,
    #[arg(long, default_value_t = DEFAULT_BINS)]
    pub bins: usize,
    #[arg(long)]
    pub json: bool,
    #[arg(long, default_value_t = api::DEFAULT_LIMIT)]
    pub limit: usize,
}

impl QueryArgs {
    /// The same parameter list the HTTP query string would carry.
    pub fn params(&self) -> anyhow::Result<Vec<(String, String)>> {
        let mut out = Vec::new();
        let mut push = |k: &str, v: &str| out.push((k.to_owned(), v.to_owned()));
        for p in &self.polymer {
            push("polymer", p);
        }
        for s in &self.solvent {
            push("solvent", s);
        }
        if self.exclusive {
            push("exclusive", "true");
        }
        if let Some(n) = &self.needle {
            push("needle", n);
        }
        if let Some(c) = &self.collector {
            push("collector", c);
        }
        for i in &self.instability {
            push("instability", i);
        }
        if let Some(h) = self.has_images {
            push("has_images", if h { "true" } else { "false" });
        }
        for m in &self.morphology {
            let (axis, term) = m.split_once('=').context("--morphology expects axis=term")?;
            push(&format!("morphology.{axis}"), term);
        }
        let named = [
            ("fiber_diameter", &self.fiber_diameter),
            ("voltage", &self.voltage),
            ("flow_rate", &self.flow_rate),
            ("concentration", &self.concentration),
            ("tip_collector_distance", &self.distance),
            ("temperature", &self.temperature),
            ("humidity", &self.humidity),
        ];
        for (field, value) in named {
            if let Some(v) = value {
                push(field, v);
            }
        }
        for r in &self.range {
            let (field, v) = r.split_once('=').context("--range expects FIELD=MIN:MAX")?;
            push(field, v);
        }
        Ok(out)
    }

    pub fn filter(&self) -> anyhow::Result<FilterSpec> {
        let params = self.params()?;
        Ok(FilterSpec::from_params(params.iter().map(|(k, v)| (k.as_str(), v.as_str())))?)
    }

    pub fn stat_fields(&self) -> anyhow::Result<Vec<NumericField>> {
        match &self.fields {
            None => Ok(DEFAULT_STATS_FIELDS.to_vec()),
            Some(list) => Ok(list
                .split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(str::parse)
                .collect::<Result<_, _>>()?),
        }
    }
}

fn env_override<T: std::str::FromStr>(name: &str, flag: T) -> anyhow::Result<T>
where
    T::Err: std::fmt::Display,
{
    match std::env::var(name) {
        Ok(v) if !v.trim().is_empty() => v.trim().parse().map_err(|e| anyhow::anyhow!("{name}={v:?}: {e}")),
        _ => Ok(flag),
    }
}

pub fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

pub fn run(cli: Cli) -> anyhow::Result<ExitCode> {
    let data = env_override(ENV_DATA_DIR, cli.data)?;
    match cli.command {
        Command::Validate { file } => validate(&file),
        Command::Import { file } => import(&data, &file),
        Command::Serve { port, host, credentials } => {
            let port = env_override(ENV_PORT, port)?;
            let credentials = match std::env::var_os(ENV_CREDENTIALS).filter(|v| !v.is_empty()) {
                Some(p) => Some(PathBuf::from(p)),
                None => credentials.or_else(|| Some(data.join("credentials.json")).filter(|p| p.exists())),
            };
            serve(&data, &host, port, credentials.as_deref())
        }
        Command::Release(cmd) => release(&data, cmd),
        Command::Query(args) => query(&data, &args),
        Command::Snapshot { path } => {
            let store = Store::open_dir(&data)?;
            let manifest = store.snapshot(&path)?;
            println!("{}", serde_json::to_string_pretty(&manifest)?);
            Ok(ExitCode::SUCCESS)
        }
        Command::Restore { path } => {
            let (_, manifest) = Store::restore(&path, Arc::new(FileBackend::open(&data)?))?;
            println!("{}", serde_json::to_string_pretty(&manifest)?);
            Ok(ExitCode::SUCCESS)
        }
        Command::Fixtures(FixturesCommand::Generate { count, seed, output }) => {
            fs::write(&output, synthetic_corpus(count, seed).to_json())
                .with_context(|| format!("writing {}", output.display()))?;
            println!("wrote {count} records to {}", output.display());
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn validate(file: &Path) -> anyhow::Result<ExitCode> {
    let text = fs::read_to_string(file).with_context(|| format!("reading {}", file.display()))?;
    let record: ExperimentRecord = serde_json::from_str(&text).context("malformed record document")?;
    let report = validate_record(&record);
    println!("{}", serde_json::to_string_pretty(&report)?);
    if report.passed {
        Ok(ExitCode::SUCCESS)
    } else {
        for v in &report.violations {
            eprintln!("{} {}: {}", v.rule_id, v.field_path, v.message);
        }
        Ok(ExitCode::from(1))
    }
}

fn import(data: &Path, file: &Path) -> anyhow::Result<ExitCode> {
    let text = fs::read_to_string(file).with_context(|| format!("reading {}", file.display()))?;
    let bundle = ImportBundle::from_json(&text)?;
    let desk = ModerationDesk::new(Arc::new(Store::open_dir(data)?), Arc::new(SystemClock));
    let outcome = desk.import_trusted(&bundle)?;
    println!(
        "{}",
        serde_json::to_string_pretty(&json!({
            "accepted": outcome.accepted.len(),
            "failed": outcome.failed,
        }))?
    );
    Ok(if outcome.failed.is_empty() { ExitCode::SUCCESS } else { ExitCode::from(1) })
}

fn serve(data: &Path, host: &str, port: u16, credentials: Option<&Path>) -> anyhow::Result<ExitCode> {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()))
        .init();
    let credentials = match credentials {
        Some(p) => Credentials::load(p)?,
        None => {
            tracing::warn!("no credential file; write endpoints will refuse every request");
            Credentials::default()
        }
    };
    let app = Arc::new(App::open(data, credentials)?);
    let addr: SocketAddr = format!("{host}:{port}").parse().with_context(|| format!("bad listen address {host}:{port}"))?;
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind(addr).await?;
        tracing::info!(%addr, backing = %app.store.backing(), "listening");
        axum::serve(listener, app.router())
            .with_graceful_shutdown(async {
                tokio::signal::ctrl_c().await.ok();
            })
            .await?;
        anyhow::Ok(())
    })?;
    Ok(ExitCode::SUCCESS)
}

fn release(data: &Path, cmd: ReleaseCommand) -> anyhow::Result<ExitCode> {
    let store = Store::open_dir(data)?;
    let archive = ReleaseArchive::open(store.backend())?;
    match cmd {
        ReleaseCommand::Cut { force, date } => {
            let date = date.unwrap_or_else(|| chrono::Utc::now().date_naive());
            let manifest = archive.cut(&store, date, force)?;
            println!("{}", serde_json::to_string_pretty(&manifest)?);
        }
        ReleaseCommand::List { json } => {
            let list = archive.list();
            if json {
                println!("{}", serde_json::to_string_pretty(&list)?);
            } else {
                println!("{:<8} {:<12} {:>8} {:>8}  dataset_digest", "label", "released", "records", "images");
                for m in list {
                    println!(
                        "{:<8} {:<12} {:>8} {:>8}  {}",
                        m.label, m.released_at, m.record_count, m.image_count, m.dataset_digest
                    );
                }
            }
        }
        ReleaseCommand::Fetch { label, artifact, output } => {
            let (_, bytes) = archive.fetch(&label, &artifact)?;
            match output {
                Some(p) => fs::write(&p, bytes.as_slice()).with_context(|| format!("writing {}", p.display()))?,
                None => io::stdout().write_all(&bytes)?,
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn query(data: &Path, args: &QueryArgs) -> anyhow::Result<ExitCode> {
    if args.bins == 0 {
        bail!("--bins must be at least 1");
    }
    let spec = args.filter()?;
    let store = Store::open_dir(data)?;
    let to_anyhow = |e: crate::ApiError| anyhow::anyhow!("{}", e.detail);
    if args.stats {
        let histogram = match &args.histogram {
            Some(f) => Some((f.parse::<NumericField>()?, args.bins)),
            None => None,
        };
        let stats = api::compute_stats(&store, &spec, &args.stat_fields()?, histogram).map_err(to_anyhow)?;
        if args.json {
            println!("{}", serde_json::to_string_pretty(&stats)?);
        } else {
            print_stats(&stats);
        }
    } else {
        let page = api::list_page(&store, &spec, args.limit, 0).map_err(to_anyhow)?;
        if args.json {
            println!("{}", serde_json::to_string_pretty(&page)?);
        } else {
            println!("{} matching records", page.total);
            println!(
                "{:<11} {:<16} {:<16} {:>8} {:>8} {:>10}",
                "record", "polymers", "solvents", "kV", "cm", "diam nm"
            );
            let cell = |v: Option<f64>| v.map(esd_core::emcv::render_number).unwrap_or_else(|| "-".into());
            for r in &page.items {
                println!(
                    "{:<11} {:<16} {:<16} {:>8} {:>8} {:>10}",
                    r.record_id.to_string(),
                    r.polymers.join(";"),
                    r.solvents.join(";"),
                    cell(r.voltage_kv),
                    cell(r.distance_cm),
                    cell(r.fiber_diameter_nm)
                );
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn print_stats(stats: &SummaryStats) {
    let cell = |v: Option<f64>| v.map(esd_core::emcv::render_number).unwrap_or_else(|| "-".into());
    println!("n = {}", stats.n);
    println!(
        "{:<24} {:<8} {:>6} {:>12} {:>12} {:>12} {:>12} {:>12}",
        "field", "unit", "n", "median", "q1", "q3", "min", "max"
    );
    for f in &stats.fields {
        println!(
            "{:<24} {:<8} {:>6} {:>12} {:>12} {:>12} {:>12} {:>12}",
            f.field.key(),
            f.unit,
            f.n,
            cell(f.median),
            cell(f.q1),
            cell(f.q3),
            cell(f.min),
            cell(f.max)
        );
    }
    if let Some(h) = &stats.histogram {
        println!("histogram of {} ({})", h.field.key(), h.unit);
        for b in &h.bins {
            println!("  [{}, {}] {}", cell(Some(b.lower)), cell(Some(b.upper)), b.count);
        }
    }
}
