use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use rust_decimal::Decimal;

use vulnresolver::harness::config::{AblationVariant, RunConfig};
use vulnresolver::harness::embed::{Embedder, HashingEmbedder};
use vulnresolver::harness::evaluate::{evaluate, Evaluation, ExternalVerifier, HarnessVerifier, Verifier};
use vulnresolver::harness::instance::{load_instances, IssueInstance};
use vulnresolver::harness::live::{LiveBackend, LiveConfig, RemoteEmbedder};
use vulnresolver::harness::llm::{CostMeter, LlmBackend};
use vulnresolver::harness::pipeline::{load_predictions, run_batch, Backends, PipelineTelemetry};
use vulnresolver::harness::replay::ReplayBackend;
use vulnresolver::harness::telemetry::ScriptCallStats;

#[derive(Parser)]
#[command(name = "vulnresolver", version, about = "Repair vulnerabilities in C/C++ repositories from issue reports")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the repair pipeline over a batch of instances.
    Run(RunArgs),
    /// Verify the predictions of a finished run.
    Evaluate(EvaluateArgs),
    /// Summarize a finished run.
    Report {
        #[arg(long)]
        run: PathBuf,
    },
}

#[derive(Parser)]
struct RunArgs {
    #[arg(long)]
    instances: PathBuf,
    /// TOML run configuration; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Apply a named ablation variant on top of the configuration.
    #[arg(long)]
    variant: Option<String>,
    /// `live`, or `replay:<script.json>` / `replay:<dir>` holding `<instance_id>.json`.
    #[arg(long)]
    backend: String,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value = "run")]
    run_id: String,
    /// Chat model for the live backend.
    #[arg(long, default_value = "gpt-4o")]
    model: String,
    #[arg(long, default_value = "https://api.openai.com/v1")]
    base_url: String,
    #[arg(long, default_value = "OPENAI_API_KEY")]
    api_key_env: String,
    /// `hashing`, or `remote:<embedding model>` on the live endpoint.
    #[arg(long, default_value = "hashing")]
    embedder: String,
}

#[derive(Parser)]
struct EvaluateArgs {
    /// Run directory containing predictions.jsonl.
    #[arg(long)]
    predictions: PathBuf,
    #[arg(long)]
    instances: PathBuf,
    /// Configuration used by the built-in verifier.
    #[arg(long)]
    config: Option<PathBuf>,
    /// External verifier command; receives VR_INSTANCE_ID and VR_PATCH_FILE.
    #[arg(long)]
    verifier: Option<String>,
    #[arg(long, default_value_t = 1800)]
    verifier_timeout: u64,
}

enum BackendSpec {
    Live(LiveConfig),
    ReplayFile(PathBuf),
    ReplayDir(PathBuf),
}

impl BackendSpec {
    fn parse(args: &RunArgs) -> Result<Self> {
        if args.backend == "live" {
            let mut live = LiveConfig::new(&args.model);
            live.base_url = args.base_url.clone();
            live.api_key_env = args.api_key_env.clone();
            return Ok(Self::Live(live));
        }
        let Some(path) = args.backend.strip_prefix("replay:") else {
            bail!("unknown backend '{}'; expected live or replay:<path>", args.backend);
        };
        let path = PathBuf::from(path);
        if path.is_dir() {
            Ok(Self::ReplayDir(path))
        } else if path.is_file() {
            Ok(Self::ReplayFile(path))
        } else {
            bail!("replay path {} does not exist", path.display())
        }
    }

    fn model_name(&self) -> String {
        match self {
            Self::Live(live) => live.model.clone(),
            Self::ReplayFile(p) | Self::ReplayDir(p) => format!("replay:{}", p.display()),
        }
    }
}

fn load_config(path: Option<&Path>, variant: Option<&str>) -> Result<RunConfig> {
    let mut config = match path {
        Some(p) => RunConfig::load(p).with_context(|| format!("loading {}", p.display()))?,
        None => RunConfig::default(),
    };
    if let Some(name) = variant {
        let v = AblationVariant::parse(name).with_context(|| {
            let known: Vec<&str> = AblationVariant::ALL.iter().map(|v| v.name()).collect();
            format!("unknown variant '{name}'; expected one of {}", known.join(", "))
        })?;
        config = v.apply(&config);
    }
    config.validate()?;
    Ok(config)
}

fn make_embedder(spec: &str, backend: &BackendSpec, meter: &CostMeter) -> Result<Arc<dyn Embedder>, String> {
    if spec == "hashing" {
        return Ok(Arc::new(HashingEmbedder::default()));
    }
    let Some(model) = spec.strip_prefix("remote:") else {
        return Err(format!("unknown embedder '{spec}'"));
    };
    let BackendSpec::Live(live) = backend else {
        return Err("a remote embedder needs the live backend".into());
    };
    let mut config = live.clone();
    config.model = model.to_string();
    Ok(Arc::new(RemoteEmbedder::new(&config, Some(meter.clone())).map_err(|e| e.to_string())?))
}

fn run(args: RunArgs) -> Result<()> {
    let config = load_config(args.config.as_deref(), args.variant.as_deref())?;
    let instances = load_instances(&args.instances)?;
    let backend = BackendSpec::parse(&args)?;
    let run_dir = args.out.join(&args.run_id);
    let backends_for = |instance: &IssueInstance| -> Result<Backends, String> {
        let meter = CostMeter::new(config.prices.clone());
        let llm: Arc<dyn LlmBackend> = match &backend {
            BackendSpec::Live(live) => Arc::new(LiveBackend::new(live).map_err(|e| e.to_string())?),
            BackendSpec::ReplayFile(p) => Arc::new(ReplayBackend::from_path(p).map_err(|e| e.to_string())?),
            BackendSpec::ReplayDir(dir) => {
                let p = dir.join(format!("{}.json", instance.instance_id));
                Arc::new(ReplayBackend::from_path(&p).map_err(|e| format!("{}: {e}", p.display()))?)
            }
        };
        let embedder = make_embedder(&args.embedder, &backend, &meter)?;
        Ok(Backends { llm, embedder, meter })
    };
    let predictions = run_batch(&instances, &config, &run_dir, &backend.model_name(), &backends_for)?;
    let failed = predictions.iter().filter(|p| p.error.is_some()).count();
    let patched = predictions.iter().filter(|p| !p.diff.is_empty()).count();
    for p in predictions.iter().filter(|p| p.error.is_some()) {
        log::warn!("{}: {}", p.instance_id, p.error.as_deref().unwrap_or_default());
    }
    println!("{} instances, {patched} patched, {failed} with errors; results in {}", predictions.len(), run_dir.display());
    Ok(())
}

fn evaluate_cmd(args: EvaluateArgs) -> Result<()> {
    let records = load_predictions(&args.predictions).with_context(|| format!("reading predictions in {}", args.predictions.display()))?;
    let instances = load_instances(&args.instances)?;
    let verifier: Box<dyn Verifier> = match args.verifier {
        Some(command) => Box::new(ExternalVerifier { command, timeout: Duration::from_secs(args.verifier_timeout) }),
        None => Box::new(HarnessVerifier { config: load_config(args.config.as_deref(), None)? }),
    };
    let evaluation = evaluate(&records, &instances, verifier.as_ref());
    let path = args.predictions.join("evaluation.json");
    std::fs::write(&path, serde_json::to_string_pretty(&evaluation)?)?;
    for v in &evaluation.verdicts {
        let mark = if v.resolved { "resolved" } else if v.flagged { "error" } else { "unresolved" };
        println!("{:<32} {mark:<10} {}", v.instance_id, v.detail);
    }
    println!("{}", evaluation.metrics);
    Ok(())
}

fn read_telemetry(run_dir: &Path) -> Result<Vec<(String, PipelineTelemetry)>> {
    let mut out = Vec::new();
    for record in load_predictions(run_dir)? {
        let path = run_dir.join(&record.instance_id).join("telemetry.json");
        match std::fs::read_to_string(&path) {
            Ok(text) => out.push((record.instance_id, serde_json::from_str(&text).with_context(|| path.display().to_string())?)),
            Err(e) => log::warn!("{}: {e}", path.display()),
        }
    }
    Ok(out)
}

fn report(run_dir: &Path) -> Result<()> {
    let eval_path = run_dir.join("evaluation.json");
    if eval_path.is_file() {
        let evaluation: Evaluation = serde_json::from_str(&std::fs::read_to_string(&eval_path)?)?;
        println!("{}", evaluation.metrics);
    } else {
        let records = load_predictions(run_dir)?;
        let patched = records.iter().filter(|r| !r.model_patch.is_empty()).count();
        let cost = records.iter().map(|r| r.cost).sum::<Decimal>();
        println!("not evaluated; {patched} of {} instances patched, total cost ${:.2}", records.len(), cost.round_dp(2));
    }
    let telemetry = read_telemetry(run_dir)?;
    let mut tools: BTreeMap<String, usize> = BTreeMap::new();
    let mut scripts = ScriptCallStats::default();
    let mut chosen = 0;
    for (_, t) in &telemetry {
        for (tool, n) in &t.tool_calls {
            *tools.entry(tool.clone()).or_default() += n;
        }
        scripts.merge(&t.script_calls);
        chosen += usize::from(t.chosen.is_some());
    }
    println!("\n{} instances with telemetry, {chosen} with a selected patch", telemetry.len());
    let total: usize = tools.values().sum();
    println!("\n{:<24} {:>8} {:>8}", "tool", "calls", "share");
    for (tool, n) in &tools {
        let share = if total == 0 { 0.0 } else { 100.0 * *n as f64 / total as f64 };
        println!("{tool:<24} {n:>8} {share:>7.1}%");
    }
    println!("\n{:<24} {:>8} {:>8}", "script category", "calls", "share");
    let rows = [
        ("poc", scripts.poc),
        ("string", scripts.string),
        ("int", scripts.int),
        ("think", scripts.think),
        ("forbidden", scripts.forbidden),
        ("other", scripts.other),
    ];
    for (name, n) in rows {
        println!("{name:<24} {n:>8} {:>7.1}%", scripts.share(n));
    }
    Ok(())
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match Cli::parse().command {
        Command::Run(args) => run(args),
        Command::Evaluate(args) => evaluate_cmd(args),
        Command::Report { run } => report(&run),
    }
}
