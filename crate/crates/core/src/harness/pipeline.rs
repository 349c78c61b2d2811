use std::collections::BTreeMap;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use rust_decimal::Decimal;
use serde::{Deserialize, Serialize};

use super::config::{EnhanceStage, InputType, RunConfig};
use super::embed::Embedder;
use super::instance::IssueInstance;
use super::llm::{CostMeter, CostRecord, LlmBackend, MeteredLlm};
use super::telemetry::{classify_script_calls, ScriptCallStats};
use super::workspace::{materialize, poc_toolkit, sandbox_for};
use crate::agents::{build_enhanced_report, run_cpc_agent, run_spa_agent, AgentReport, RunStatus, Telemetry, Toolbox, ToolboxLimits, Transcript};
use crate::edit_engine::EditHistory;
use crate::execution::{LogStore, PythonInterpreter, ScriptRunner};
use crate::localization::{localize_elements, localize_files_prompt, localize_files_retrieval, merge_file_lists, PromptRanking, RetrievalRanking};
use crate::repair::{build_patch_context, generate_patches, prepare_candidate, select_patch, validate_candidate, PatchCandidate, SelectionStrategy};
use crate::repo_model::{render_repo_tree, snapshot, RepoLayout};

/// Model and embedding backends for one instance. The pipeline meters the
/// model backend; embedders record their own cost into `meter`.
#[derive(Clone)]
pub struct Backends {
    pub llm: Arc<dyn LlmBackend>,
    pub embedder: Arc<dyn Embedder>,
    pub meter: CostMeter,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageStatus {
    Ok,
    Skipped,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: String,
    pub status: StageStatus,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentSummary {
    pub status: RunStatus,
    pub report_parsed: bool,
    pub telemetry: Telemetry,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PipelineTelemetry {
    pub variant: Option<String>,
    pub stages: Vec<StageRecord>,
    pub agents: BTreeMap<String, AgentSummary>,
    pub tool_calls: BTreeMap<String, usize>,
    pub script_calls: ScriptCallStats,
    pub candidates: usize,
    pub poc_passing: usize,
    pub chosen: Option<usize>,
    pub functional_check: Option<bool>,
    pub workspace_restored: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prediction {
    pub instance_id: String,
    /// Empty when no patch was produced.
    pub diff: String,
    pub cost: CostRecord,
    pub telemetry: PipelineTelemetry,
    pub error: Option<String>,
}

/// One line of `predictions.jsonl`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub instance_id: String,
    pub model_name_or_path: String,
    pub diff_path: String,
    pub model_patch: String,
    pub cost: Decimal,
    pub error: Option<String>,
}

pub const PREDICTIONS_FILE: &str = "predictions.jsonl";

#[derive(Debug)]
struct StageFailure {
    stage: &'static str,
    message: String,
}

fn fail<E: std::fmt::Display>(stage: &'static str) -> impl FnOnce(E) -> StageFailure {
    move |e| StageFailure { stage, message: e.to_string() }
}

fn write_text(path: &Path, text: &str) -> std::io::Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(path, text)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> std::io::Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(std::io::Error::other)?;
    text.push('\n');
    write_text(path, &text)
}

struct Run<'a> {
    instance: &'a IssueInstance,
    config: &'a RunConfig,
    llm: &'a dyn LlmBackend,
    embedder: &'a dyn Embedder,
    out: &'a Path,
    telemetry: PipelineTelemetry,
    transcripts: Vec<Transcript>,
    logs: Vec<LogStore>,
}

impl Run<'_> {
    fn record(&mut self, stage: &str, status: StageStatus, detail: impl Into<String>) {
        self.telemetry.stages.push(StageRecord { stage: stage.to_string(), status, detail: detail.into() });
    }

    fn persist(&self, rel: &str, text: &str) -> Result<(), StageFailure> {
        write_text(&self.out.join(rel), text).map_err(fail("persist"))
    }

    fn persist_json<T: Serialize>(&self, rel: &str, value: &T) -> Result<(), StageFailure> {
        write_json(&self.out.join(rel), value).map_err(fail("persist"))
    }

    fn agent_done<R>(&mut self, name: &str, report: &AgentReport<R>) -> Result<(), StageFailure> {
        self.persist_json(&format!("transcripts/{name}.json"), &report.transcript)?;
        self.telemetry.agents.insert(
            name.to_string(),
            AgentSummary { status: report.status, report_parsed: report.report.is_some(), telemetry: report.transcript.telemetry.clone() },
        );
        self.transcripts.push(report.transcript.clone());
        let detail = format!(
            "status={:?} turns={} tool_calls={} parsed={}",
            report.status,
            report.transcript.telemetry.model_turns,
            report.transcript.telemetry.total_tool_calls(),
            report.report.is_some()
        );
        self.record(name, StageStatus::Ok, detail);
        Ok(())
    }

    fn execute(&mut self, workspace: &Path) -> Result<String, StageFailure> {
        let config = self.config;
        let layout = RepoLayout::default();

        let issue = match config.input_type {
            InputType::IssueReport => self.instance.issue_report.clone(),
            InputType::SanitizerLog => self
                .instance
                .sanitizer_log
                .clone()
                .ok_or_else(|| StageFailure { stage: "input", message: "instance has no sanitizer_log".into() })?,
        };
        let input_name = match config.input_type {
            InputType::IssueReport => "issue_report",
            InputType::SanitizerLog => "sanitizer_log",
        };
        self.persist("reports/input.md", &issue)?;
        self.record("input", StageStatus::Ok, format!("source={input_name}"));

        let history = Arc::new(Mutex::new(EditHistory::open(workspace, &layout).map_err(fail("setup"))?));
        let base_digest = history.lock().expect("history poisoned").base().digest.clone();
        let tree = render_repo_tree(workspace, &layout).map_err(fail("setup"))?.text;
        self.persist("reports/repo_tree.txt", &tree)?;

        let mut context_report = None;
        let mut property_report = None;
        if config.any_agent() {
            let agent_logs = LogStore::default();
            self.logs.push(agent_logs.clone());
            let sandbox = sandbox_for(self.instance, config, workspace).map_err(fail("setup"))?;
            let poc = Arc::new(poc_toolkit(self.instance, config, sandbox, agent_logs.clone()));
            let scripts = ScriptRunner::new(Arc::new(PythonInterpreter::new(config.python.clone())), agent_logs)
                .with_limits(config.caps.script_output_bytes, Duration::from_secs(config.timeouts.script_secs));
            let toolbox = Toolbox::new(workspace, layout.clone(), config.symbols.clone())
                .with_limits(ToolboxLimits {
                    search_results: config.caps.search_results,
                    reference_cap: config.caps.reference_results,
                    read_radius: config.caps.read_radius,
                })
                .with_poc(poc)
                .with_history(history.clone())
                .with_scripts(scripts);

            if config.enable_cpc {
                let report = run_cpc_agent(&issue, &tree, &toolbox, self.llm, config.cpc_max_steps).map_err(fail("cpc_agent"))?;
                self.persist("reports/context_report.md", &report.rendered)?;
                self.agent_done("cpc_agent", &report)?;
                context_report = Some(report.rendered);
            } else {
                self.record("cpc_agent", StageStatus::Skipped, "disabled");
            }
            if config.enable_spa {
                let report = run_spa_agent(&issue, context_report.as_deref(), &tree, &toolbox, self.llm, config.spa_max_steps)
                    .map_err(fail("spa_agent"))?;
                self.persist("reports/property_report.md", &report.rendered)?;
                self.agent_done("spa_agent", &report)?;
                property_report = Some(report.rendered);
            } else {
                self.record("spa_agent", StageStatus::Skipped, "disabled");
            }
            toolbox.shutdown();
        } else {
            self.record("cpc_agent", StageStatus::Skipped, "disabled");
            self.record("spa_agent", StageStatus::Skipped, "disabled");
        }

        let enhanced = if config.any_agent() {
            build_enhanced_report(&issue, context_report.as_deref(), property_report.as_deref()).render()
        } else {
            issue.clone()
        };
        self.persist("reports/enhanced_report.md", &enhanced)?;
        let pick = |stage| if config.enhances(stage) { (&enhanced, "enhanced") } else { (&issue, input_name) };
        let (loc_report, loc_kind) = pick(EnhanceStage::Localization);
        let (gen_report, gen_kind) = pick(EnhanceStage::Generation);
        let sources = [
            Some(input_name),
            context_report.as_ref().map(|_| "context"),
            property_report.as_ref().map(|_| "property"),
        ];
        let sources: Vec<&str> = sources.into_iter().flatten().collect();
        self.record("enhanced_report", StageStatus::Ok, format!("sources={}", sources.join("+")));

        let prompt = localize_files_prompt(loc_report, &tree, workspace, &layout, self.llm, config.n_files)
            .map_err(fail("file_localization"))?;
        let retrieval = localize_files_retrieval(
            loc_report,
            &tree,
            workspace,
            &layout,
            self.llm,
            self.embedder,
            config.n_files,
            config.chunk_lines,
        )
        .map_err(fail("file_localization"))?;
        let files = merge_file_lists(&prompt.files, &retrieval.files);
        #[derive(Serialize)]
        struct FileRanking<'a> {
            prompt: &'a PromptRanking,
            retrieval: &'a RetrievalRanking,
            merged: &'a [String],
        }
        self.persist_json("rankings/files.json", &FileRanking { prompt: &prompt, retrieval: &retrieval, merged: &files })?;
        self.record("file_localization", StageStatus::Ok, format!("report={loc_kind} files={}", files.join(",")));

        let elements = localize_elements(&files, loc_report, workspace, self.llm).map_err(fail("element_localization"))?;
        self.persist_json("rankings/elements.json", &elements)?;
        let ids: Vec<String> = elements.refs.iter().map(|r| format!("{}:{}", r.file, r.id)).collect();
        self.record("element_localization", StageStatus::Ok, format!("report={loc_kind} elements={}", ids.join(",")));
        if elements.refs.is_empty() {
            return Err(StageFailure { stage: "element_localization", message: "no code elements localized".into() });
        }

        let context = build_patch_context(&elements.refs, workspace, config.margin).map_err(fail("patch_context"))?;
        self.persist("reports/patch_context.md", &context.rendered)?;

        let mut candidates = generate_patches(gen_report, &context, self.llm, config.t_patches).map_err(fail("patch_generation"))?;
        for c in &mut candidates {
            prepare_candidate(c, workspace, &config.normalizer);
        }
        let applicable = candidates.iter().filter(|c| c.applied).count();
        self.record(
            "patch_generation",
            StageStatus::Ok,
            format!("report={gen_kind} candidates={} applicable={applicable}", candidates.len()),
        );

        if config.selection_strategy == SelectionStrategy::PocVoting {
            let logs = LogStore::default();
            self.logs.push(logs.clone());
            let sandbox = sandbox_for(self.instance, config, workspace).map_err(fail("validation"))?;
            let poc = poc_toolkit(self.instance, config, sandbox, logs);
            let mut h = history.lock().expect("history poisoned");
            for c in &mut candidates {
                validate_candidate(c, &mut h, &poc).map_err(fail("validation"))?;
            }
            let passing = candidates.iter().filter(|c| c.poc_pass == Some(true)).count();
            self.telemetry.poc_passing = passing;
            self.record("validation", StageStatus::Ok, format!("passing={passing}/{}", candidates.len()));
        } else {
            self.record("validation", StageStatus::Skipped, "simple voting");
        }
        self.telemetry.candidates = candidates.len();
        for c in &candidates {
            self.persist_json(&format!("candidates/candidate-{}.json", c.index), &CandidateArtifact::from(c))?;
        }

        let selection = select_patch(&candidates, config.selection_strategy);
        self.persist_json("candidates/selection.json", &selection)?;
        self.telemetry.chosen = selection.chosen;
        let chosen = selection.chosen.map_or_else(|| "none".to_string(), |i| i.to_string());
        self.record("selection", StageStatus::Ok, format!("strategy={:?} chosen={chosen}", config.selection_strategy));
        let diff = selection.diff.unwrap_or_default();

        if let (Some(command), Some(index)) = (&config.functional_check, selection.chosen) {
            let candidate = candidates.iter().find(|c| c.index == index).expect("chosen candidate exists");
            let passed = self.functional_check(command, candidate, workspace, &history).map_err(fail("functional_check"))?;
            self.telemetry.functional_check = Some(passed);
            self.record("functional_check", StageStatus::Ok, format!("passed={passed}"));
        }

        let now = snapshot(workspace, &layout).map_err(fail("cleanup"))?;
        self.telemetry.workspace_restored = now.digest == base_digest;
        if !self.telemetry.workspace_restored {
            return Err(StageFailure { stage: "cleanup", message: "workspace differs from its base state".into() });
        }
        Ok(diff)
    }

    fn functional_check(
        &self,
        command: &str,
        candidate: &PatchCandidate,
        workspace: &Path,
        history: &Mutex<EditHistory>,
    ) -> Result<bool, String> {
        let sandbox = sandbox_for(self.instance, self.config, workspace).map_err(|e| e.to_string())?;
        let mut h = history.lock().expect("history poisoned");
        h.apply_edits("functional-check", &candidate.edits).map_err(|e| e.to_string())?;
        let out = sandbox.exec(command, Duration::from_secs(self.config.timeouts.poc_secs));
        h.rollback_the_latest_one_edit_set().map_err(|e| e.to_string())?;
        let out = out.map_err(|e| e.to_string())?;
        Ok(out.exit_code == Some(0) && !out.timed_out)
    }
}

/// Candidate fields worth keeping; execution logs are stored separately.
#[derive(Serialize)]
struct CandidateArtifact<'a> {
    index: usize,
    temperature: f64,
    raw: &'a str,
    edits: &'a [crate::edit_engine::SearchReplaceEdit],
    parse_error: &'a Option<String>,
    applied: bool,
    apply_error: &'a Option<String>,
    poc_pass: Option<bool>,
    poc_run: Option<&'a str>,
    poc_compiled: Option<bool>,
    sanitizer_triggered: Option<bool>,
    fingerprint: &'a Option<String>,
    normalization_fallback: bool,
    diff: &'a Option<String>,
}

impl<'a> From<&'a PatchCandidate> for CandidateArtifact<'a> {
    fn from(c: &'a PatchCandidate) -> Self {
        Self {
            index: c.index,
            temperature: c.temperature,
            raw: &c.raw,
            edits: &c.edits,
            parse_error: &c.parse_error,
            applied: c.applied,
            apply_error: &c.apply_error,
            poc_pass: c.poc_pass,
            poc_run: c.poc.as_ref().map(|p| p.fixed_name.as_str()),
            poc_compiled: c.poc.as_ref().map(|p| p.compiled()),
            sanitizer_triggered: c.poc.as_ref().map(|p| p.sanitizer_triggered),
            fingerprint: &c.fingerprint,
            normalization_fallback: c.normalization_fallback,
            diff: &c.diff,
        }
    }
}

/// Resolve one instance and persist every stage artifact under `out`.
/// Stage errors end the run with an empty diff instead of propagating.
pub fn run_pipeline(instance: &IssueInstance, config: &RunConfig, backends: &Backends, out: &Path) -> Prediction {
    let llm = MeteredLlm::new(backends.llm.clone(), backends.meter.clone());
    let mut run = Run {
        instance,
        config,
        llm: &llm,
        embedder: backends.embedder.as_ref(),
        out,
        telemetry: PipelineTelemetry { variant: config.variant().map(|v| v.name().to_string()), ..Default::default() },
        transcripts: Vec::new(),
        logs: Vec::new(),
    };
    let result = match tempfile::Builder::new().prefix("vr-ws-").tempdir() {
        Ok(scratch) => {
            let workspace = scratch.path().join("repo");
            match materialize(instance, config, &workspace) {
                Ok(()) => run.execute(&workspace),
                Err(e) => Err(StageFailure { stage: "setup", message: e.to_string() }),
            }
        }
        Err(e) => Err(StageFailure { stage: "setup", message: e.to_string() }),
    };
    let (diff, error) = match result {
        Ok(diff) => (diff, None),
        Err(f) => {
            log::error!("{}: stage {} failed: {}", instance.instance_id, f.stage, f.message);
            run.record(f.stage, StageStatus::Failed, f.message.clone());
            (String::new(), Some(format!("{}: {}", f.stage, f.message)))
        }
    };

    run.telemetry.script_calls = classify_script_calls(&run.transcripts);
    for t in &run.transcripts {
        for (tool, n) in &t.telemetry.tool_calls {
            *run.telemetry.tool_calls.entry(tool.clone()).or_default() += n;
        }
    }
    let cost = backends.meter.record_snapshot();
    let prediction = Prediction { instance_id: instance.instance_id.clone(), diff, cost, telemetry: run.telemetry, error };

    let mut persisted = write_text(&out.join("prediction.diff"), &prediction.diff)
        .and_then(|_| write_json(&out.join("telemetry.json"), &prediction.telemetry))
        .and_then(|_| write_json(&out.join("cost.json"), &prediction.cost));
    for store in &run.logs {
        for (name, log) in store.snapshot() {
            persisted = persisted.and_then(|_| write_text(&out.join("logs").join(format!("{name}.log")), &log));
        }
    }
    if let Err(e) = persisted {
        log::error!("{}: cannot persist artifacts: {e}", instance.instance_id);
    }
    prediction
}

/// Run every instance with a bounded worker pool and write
/// `predictions.jsonl` in input order.
pub fn run_batch(
    instances: &[IssueInstance],
    config: &RunConfig,
    run_dir: &Path,
    model_name: &str,
    backends_for: &(dyn Fn(&IssueInstance) -> Result<Backends, String> + Sync),
) -> std::io::Result<Vec<Prediction>> {
    std::fs::create_dir_all(run_dir)?;
    write_text(&run_dir.join("config.toml"), &config.to_toml())?;
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<Prediction>>> = Mutex::new(vec![None; instances.len()]);
    let workers = config.workers.min(instances.len()).max(1);
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(instance) = instances.get(i) else { break };
                let out = run_dir.join(&instance.instance_id);
                let prediction = match backends_for(instance) {
                    Ok(backends) => run_pipeline(instance, config, &backends, &out),
                    Err(e) => Prediction {
                        instance_id: instance.instance_id.clone(),
                        diff: String::new(),
                        cost: CostRecord::default(),
                        telemetry: PipelineTelemetry::default(),
                        error: Some(format!("setup: {e}")),
                    },
                };
                results.lock().expect("results poisoned")[i] = Some(prediction);
            });
        }
    });
    let predictions: Vec<Prediction> = results.into_inner().expect("results poisoned").into_iter().flatten().collect();
    let mut index = String::new();
    for p in &predictions {
        let record = PredictionRecord {
            instance_id: p.instance_id.clone(),
            model_name_or_path: model_name.to_string(),
            diff_path: format!("{}/prediction.diff", p.instance_id),
            model_patch: p.diff.clone(),
            cost: p.cost.total_dollars,
            error: p.error.clone(),
        };
        index.push_str(&serde_json::to_string(&record).map_err(std::io::Error::other)?);
        index.push('\n');
    }
    write_text(&run_dir.join(PREDICTIONS_FILE), &index)?;
    Ok(predictions)
}

pub fn load_predictions(run_dir: &Path) -> std::io::Result<Vec<PredictionRecord>> {
    let text = std::fs::read_to_string(run_dir.join(PREDICTIONS_FILE))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e)))
        .collect()
}
