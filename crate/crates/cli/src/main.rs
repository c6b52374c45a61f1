use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use dynamicare::dataset::{build_dataset, BuildOptions, FilterCriteria};
use dynamicare::eval::annotation::{export_annotation_sheets, render_annotation_table, score_annotation_sheets};
use dynamicare::eval::mcq::{load_mcq_cases, render_mcq_table, McqReport};
use dynamicare::eval::report::{render_chapter_table, render_main_table, MetricReport};
use dynamicare::eval::{aggregate, NormalizationCache, Normalizer, OntologySearchClient, TerminologyService};
use dynamicare::gateway::{AuditLog, ChatBackend, Gateway, LiveBackend, LiveConfig, ScriptedBackend};
use dynamicare::run::{
    execute_mcq_run, execute_run, load_records, load_run, truth_table, LiveSettings, RunConfig, RunOptions, MCQ_REPORT,
    METRICS_FILE,
};
use dynamicare::transcript::write_atomic;
use dynamicare::workflow::Protocol;

#[derive(Debug, Parser)]
#[command(name = "dynamicare", version, about = "Multi-agent diagnosis simulation and evaluation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum BackendKind {
    Live,
    Scripted,
}

#[derive(Debug, clap::Args)]
struct BackendArgs {
    /// Chat backend: `live` reads DYNAMICARE_LLM_URL and DYNAMICARE_LLM_KEY.
    #[arg(long, value_enum, default_value = "scripted")]
    backend: BackendKind,
    /// JSONL script for the scripted backend.
    #[arg(long)]
    script: Option<PathBuf>,
    /// Append every live request and reply to this JSONL file.
    #[arg(long)]
    audit_log: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Select, sample and structure admissions into patient record files.
    BuildDataset {
        #[arg(long)]
        tables: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "gpt-4.1")]
        model: String,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        #[command(flatten)]
        backend: BackendArgs,
    },
    /// Simulate one session per patient record (or per MCQ case).
    Run {
        /// Directory of patient record files.
        #[arg(long, required_unless_present = "mcq", conflicts_with = "mcq")]
        patients: Option<PathBuf>,
        /// JSONL multiple-choice cases instead of patient records.
        #[arg(long)]
        mcq: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Run directory; defaults to runs/<UTC timestamp>.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        /// Replace results already in the run directory.
        #[arg(long)]
        force: bool,
        #[arg(long)]
        max_rounds: Option<u32>,
        #[arg(long, value_enum)]
        protocol: Option<ProtocolArg>,
        #[arg(long)]
        agreement_threshold: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
        /// Model for the central agent and specialists.
        #[arg(long)]
        model: Option<String>,
        #[command(flatten)]
        backend: BackendArgs,
    },
    /// Score a run against ground truth and write metrics.json.
    Evaluate {
        #[arg(long)]
        run: PathBuf,
        /// Directory of patient records holding the ground truth.
        #[arg(long)]
        truth: PathBuf,
        /// Name-to-code TSV cache; created if missing.
        #[arg(long)]
        cache: Option<PathBuf>,
    },
    /// Print the summary tables for an evaluated run.
    Report {
        #[arg(long)]
        run: PathBuf,
        /// Row label; defaults to the run's protocol.
        #[arg(long)]
        agent: Option<String>,
        /// Also score filled annotation sheets in this directory.
        #[arg(long)]
        annotations: Option<PathBuf>,
    },
    /// Write blank rating sheets for a sample of sessions.
    ExportAnnotations {
        #[arg(long)]
        run: PathBuf,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ProtocolArg {
    Solo,
    Multi,
}

fn gateway(args: &BackendArgs, live: &LiveSettings) -> Result<Gateway> {
    let backend: Arc<dyn ChatBackend> = match args.backend {
        BackendKind::Scripted => {
            let path = args.script.as_deref().context("--backend scripted needs --script FILE")?;
            Arc::new(ScriptedBackend::from_path(path)?)
        }
        BackendKind::Live => {
            let mut config = LiveConfig::from_env()?;
            live.apply(&mut config);
            let mut backend = LiveBackend::new(config);
            if let Some(path) = &args.audit_log {
                let audit = AuditLog::open(path).with_context(|| format!("opening {}", path.display()))?;
                backend = backend.with_audit_log(audit);
            }
            Arc::new(backend)
        }
    };
    Ok(Gateway::new(backend))
}

fn backend_label(args: &BackendArgs) -> &'static str {
    match args.backend {
        BackendKind::Live => "live",
        BackendKind::Scripted => "scripted",
    }
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value)? + "\n";
    write_atomic(path, text.as_bytes()).with_context(|| format!("writing {}", path.display()))
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn protocol_label(p: Protocol) -> &'static str {
    match p {
        Protocol::Solo => "Single",
        Protocol::Multi => "Multi",
    }
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::BuildDataset { tables, out, n, seed, model, jobs, backend } => {
            let gw = gateway(&backend, &LiveSettings::default())?;
            std::fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
            let options = BuildOptions { n, seed, criteria: FilterCriteria::default(), model, jobs };
            let manifest = build_dataset(&tables, &out, &options, &gw)?;
            let c = &manifest.counts;
            println!(
                "admissions {} -> filtered {} -> unique patients {} -> sampled {} -> written {}",
                c.admissions, c.filtered, c.unique_patients, c.sampled, c.written
            );
            for w in &manifest.warnings {
                eprintln!("warning: {w}");
            }
        }
        Command::Run {
            patients,
            mcq,
            config,
            out,
            jobs,
            force,
            max_rounds,
            protocol,
            agreement_threshold,
            seed,
            model,
            backend,
        } => {
            let (mut run_config, source) = match &config {
                Some(path) => {
                    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
                    (RunConfig::from_toml(&text)?, Some(text))
                }
                None => (RunConfig::default(), None),
            };
            let session = &mut run_config.session;
            if let Some(v) = max_rounds {
                session.max_rounds = v;
            }
            if let Some(p) = protocol {
                session.protocol = match p {
                    ProtocolArg::Solo => Protocol::Solo,
                    ProtocolArg::Multi => Protocol::Multi,
                };
            }
            if let Some(v) = agreement_threshold {
                session.agreement_threshold = v;
            }
            if let Some(v) = seed {
                session.seed = v;
            }
            if let Some(m) = model {
                session.models.central = m.clone();
                session.models.specialist = m;
            }
            session.validate()?;

            let run_dir = out
                .unwrap_or_else(|| PathBuf::from("runs").join(chrono::Utc::now().format("%Y%m%dT%H%M%SZ").to_string()));
            let gw = gateway(&backend, &run_config.live)?;
            let options = RunOptions {
                run_dir: run_dir.clone(),
                config: run_config,
                config_source: source,
                backend: backend_label(&backend).into(),
                jobs,
                force,
            };
            if let Some(path) = mcq {
                let cases = load_mcq_cases(&path)?;
                let (manifest, report) = execute_mcq_run(&cases, &gw, &options)?;
                println!(
                    "run {}: {} completed, {} aborted, accuracy {:.1}% ({}/{})",
                    manifest.run_id,
                    manifest.counts.completed,
                    manifest.counts.aborted,
                    report.accuracy * 100.0,
                    report.correct,
                    report.n
                );
            } else {
                let dir = patients.expect("clap requires --patients without --mcq");
                let records = load_records(&dir)?;
                let manifest = execute_run(&records, &gw, &options)?;
                println!(
                    "run {}: {} completed, {} aborted -> {}",
                    manifest.run_id,
                    manifest.counts.completed,
                    manifest.counts.aborted,
                    run_dir.display()
                );
            }
        }
        Command::Evaluate { run, truth, cache } => {
            let loaded = load_run(&run)?;
            if loaded.results.is_empty() {
                bail!("{} has no completed sessions to evaluate", run.display());
            }
            let truths = truth_table(&load_records(&truth)?);
            let cache = match &cache {
                Some(path) => NormalizationCache::open(path)?,
                None => NormalizationCache::in_memory(),
            };
            let service = OntologySearchClient::from_env().map(|c| Box::new(c) as Box<dyn TerminologyService>);
            let normalizer = Normalizer::new(cache, service);
            let report = aggregate(&loaded.results, &truths, &normalizer, loaded.aborted.len())?;
            write_json(&run.join(METRICS_FILE), &report)?;
            let session = &loaded.manifest.config.session;
            print!(
                "{}",
                render_main_table(&[(protocol_label(session.protocol), &session.models.specialist, &report.aggregate)])
            );
            for w in &report.warnings {
                eprintln!("warning: {w}");
            }
        }
        Command::Report { run, agent, annotations } => {
            let loaded = load_run(&run)?;
            let session = &loaded.manifest.config.session;
            let agent = agent.unwrap_or_else(|| protocol_label(session.protocol).into());
            let metrics_path = run.join(METRICS_FILE);
            let mcq_path = run.join(MCQ_REPORT);
            let mut printed = false;
            if metrics_path.is_file() {
                let report: MetricReport = read_json(&metrics_path)?;
                println!("{}", render_main_table(&[(&agent, &session.models.specialist, &report.aggregate)]));
                println!("{}", render_chapter_table(&report.per_chapter));
                if report.aggregate.aborted > 0 {
                    println!("{} aborted sessions excluded", report.aggregate.aborted);
                }
                printed = true;
            }
            if mcq_path.is_file() {
                let report: McqReport = read_json(&mcq_path)?;
                println!("{}", render_mcq_table(&[(&agent, &loaded.manifest.run_id, report.accuracy)]));
                printed = true;
            }
            if let Some(dir) = annotations {
                println!("{}", render_annotation_table(&score_annotation_sheets(&dir)?));
                printed = true;
            }
            if !printed {
                bail!("{} has no {METRICS_FILE} or {MCQ_REPORT}; run `dynamicare evaluate` first", run.display());
            }
        }
        Command::ExportAnnotations { run, n, seed, out } => {
            let loaded = load_run(&run)?;
            let ids = export_annotation_sheets(&loaded.results, n, seed, &out)?;
            println!("wrote sheets for {} sessions to {}", ids.len(), out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "warn".into()))
        .with_writer(std::io::stderr)
        .init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(u8::try_from(e.exit_code()).unwrap_or(2));
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
