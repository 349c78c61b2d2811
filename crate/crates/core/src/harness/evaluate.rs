use std::collections::HashMap;
use std::fmt;
use std::path::Path;
use std::process::Command;
use std::time::Duration;

use rust_decimal::Decimal;
use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use super::instance::IssueInstance;
use super::pipeline::PredictionRecord;
use super::workspace::{materialize, poc_toolkit, sandbox_for};
use crate::execution::{LogStore, PocPhase};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdict {
    pub instance_id: String,
    pub resolved: bool,
    /// The verifier itself failed; counted as unresolved.
    pub flagged: bool,
    pub detail: String,
    pub cost: Decimal,
}

pub trait Verifier: Sync {
    /// `Ok(false)` is an unresolved patch, `Err` a verifier failure.
    fn verify(&self, instance: &IssueInstance, diff: &str) -> Result<(bool, String), String>;
}

/// Applies the diff to a fresh copy of the repository, then builds and runs
/// the PoC. Resolved means the diff applies and no sanitizer fires.
pub struct HarnessVerifier {
    pub config: RunConfig,
}

fn git_apply(workspace: &Path, patch: &Path) -> Result<(), String> {
    let out = Command::new("git")
        .args(["apply", "--whitespace=nowarn", "-p1"])
        .arg(patch)
        .current_dir(workspace)
        .env("GIT_CONFIG_NOSYSTEM", "1")
        .env("GIT_CONFIG_GLOBAL", "/dev/null")
        .output()
        .map_err(|e| format!("cannot run git apply: {e}"))?;
    if out.status.success() {
        Ok(())
    } else {
        Err(String::from_utf8_lossy(&out.stderr).trim().to_string())
    }
}

impl Verifier for HarnessVerifier {
    fn verify(&self, instance: &IssueInstance, diff: &str) -> Result<(bool, String), String> {
        if diff.trim().is_empty() {
            return Ok((false, "no patch".into()));
        }
        let scratch = tempfile::Builder::new().prefix("vr-verify-").tempdir().map_err(|e| e.to_string())?;
        let workspace = scratch.path().join("repo");
        materialize(instance, &self.config, &workspace).map_err(|e| e.to_string())?;
        let patch = scratch.path().join("prediction.diff");
        std::fs::write(&patch, diff).map_err(|e| e.to_string())?;
        if let Err(e) = git_apply(&workspace, &patch) {
            return Ok((false, format!("patch does not apply: {e}")));
        }
        let sandbox = sandbox_for(instance, &self.config, &workspace).map_err(|e| e.to_string())?;
        let poc = poc_toolkit(instance, &self.config, sandbox, LogStore::default());
        let run = poc.run_poc("verify").map_err(|e| e.to_string())?;
        let resolved = run.phase == PocPhase::Ran && !run.timed_out && !run.sanitizer_triggered;
        let detail = match (run.phase, run.timed_out, run.sanitizer_triggered) {
            (PocPhase::CompileError, _, _) => "build failed".to_string(),
            (_, true, _) => "PoC timed out".to_string(),
            (_, _, true) => "sanitizer still triggered".to_string(),
            _ => format!("PoC clean (exit code {:?})", run.exit_code),
        };
        Ok((resolved, detail))
    }
}

/// Delegates to an external command, run with `sh -c`, that receives
/// `VR_INSTANCE_ID` and `VR_PATCH_FILE`. Exit code 0 means resolved, 1
/// unresolved; anything else is a verifier failure.
pub struct ExternalVerifier {
    pub command: String,
    pub timeout: Duration,
}

impl Verifier for ExternalVerifier {
    fn verify(&self, instance: &IssueInstance, diff: &str) -> Result<(bool, String), String> {
        let scratch = tempfile::tempdir().map_err(|e| e.to_string())?;
        let patch = scratch.path().join("prediction.diff");
        std::fs::write(&patch, diff).map_err(|e| e.to_string())?;
        let sandbox = crate::execution::LocalSandbox::new(scratch.path())
            .map_err(|e| e.to_string())?
            .with_env("VR_INSTANCE_ID", &instance.instance_id)
            .with_env("VR_PATCH_FILE", &patch.display().to_string());
        use crate::execution::Sandbox;
        let out = sandbox.exec(&self.command, self.timeout).map_err(|e| e.to_string())?;
        let tail = out.stdout.lines().last().unwrap_or_default().to_string();
        match (out.timed_out, out.exit_code) {
            (true, _) => Err("verifier timed out".into()),
            (false, Some(0)) => Ok((true, tail)),
            (false, Some(1)) => Ok((false, tail)),
            (false, code) => Err(format!("verifier exited with {code:?}: {}", out.stderr.trim())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Metrics {
    pub resolved_count: usize,
    pub total: usize,
    /// resolved_count / total.
    pub resolved_rate: Decimal,
    pub total_cost: Decimal,
    /// total_cost / total.
    pub avg_cost: Decimal,
}

impl Metrics {
    pub fn from_verdicts(verdicts: &[Verdict]) -> Self {
        let total = verdicts.len();
        let resolved_count = verdicts.iter().filter(|v| v.resolved).count();
        let total_cost: Decimal = verdicts.iter().map(|v| v.cost).sum();
        let (resolved_rate, avg_cost) = if total == 0 {
            (Decimal::ZERO, Decimal::ZERO)
        } else {
            let n = Decimal::from(total as u64);
            (Decimal::from(resolved_count as u64) / n, total_cost / n)
        };
        Self { resolved_count, total, resolved_rate, total_cost, avg_cost }
    }

    /// Resolved rate in percent, one decimal place.
    pub fn resolved_percent(&self) -> Decimal {
        (self.resolved_rate * Decimal::ONE_HUNDRED).round_dp(1)
    }

    /// Average cost rounded to the cent.
    pub fn avg_cost_cents(&self) -> Decimal {
        self.avg_cost.round_dp(2)
    }
}

impl fmt::Display for Metrics {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "resolved {} of {} ({:.1}%), avg cost ${:.2}",
            self.resolved_count,
            self.total,
            self.resolved_percent(),
            self.avg_cost_cents()
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Evaluation {
    pub metrics: Metrics,
    pub verdicts: Vec<Verdict>,
}

/// Verify every instance's prediction. Instances without a prediction count
/// as unresolved at zero cost.
pub fn evaluate(predictions: &[PredictionRecord], instances: &[IssueInstance], verifier: &dyn Verifier) -> Evaluation {
    let by_id: HashMap<&str, &PredictionRecord> = predictions.iter().map(|p| (p.instance_id.as_str(), p)).collect();
    let verdicts: Vec<Verdict> = instances
        .iter()
        .map(|instance| {
            let Some(p) = by_id.get(instance.instance_id.as_str()) else {
                return Verdict {
                    instance_id: instance.instance_id.clone(),
                    resolved: false,
                    flagged: false,
                    detail: "no prediction".into(),
                    cost: Decimal::ZERO,
                };
            };
            let (resolved, flagged, detail) = match verifier.verify(instance, &p.model_patch) {
                Ok((resolved, detail)) => (resolved, false, detail),
                Err(e) => {
                    log::warn!("{}: verifier failed: {e}", instance.instance_id);
                    (false, true, e)
                }
            };
            Verdict { instance_id: instance.instance_id.clone(), resolved, flagged, detail, cost: p.cost }
        })
        .collect();
    Evaluation { metrics: Metrics::from_verdicts(&verdicts), verdicts }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::str::FromStr;

    fn verdict(resolved: bool, cost: &str) -> Verdict {
        Verdict { instance_id: String::new(), resolved, flagged: false, detail: String::new(), cost: Decimal::from_str(cost).unwrap() }
    }

    #[test]
    fn arithmetic() {
        let mut v: Vec<Verdict> = (0..80).map(|i| verdict(i < 60, "0")).collect();
        let m = Metrics::from_verdicts(&v);
        assert_eq!(m.resolved_percent(), Decimal::from_str("75.0").unwrap());
        assert_eq!(m.to_string(), "resolved 60 of 80 (75.0%), avg cost $0.00");
        v = vec![verdict(true, "0.05"), verdict(false, "0.09")];
        assert_eq!(Metrics::from_verdicts(&v).avg_cost, Decimal::from_str("0.07").unwrap());
        let none = Metrics::from_verdicts(&[verdict(false, "0"), verdict(false, "0")]);
        assert_eq!(none.resolved_percent(), Decimal::ZERO);
        assert_eq!(Metrics::from_verdicts(&[]).total, 0);
    }

    #[test]
    fn external_exit_codes() {
        let instance = IssueInstance {
            instance_id: "x-1".into(),
            workspace: super::super::instance::WorkspaceSource::Local("/nonexistent".into()),
            issue_report: String::new(),
            sanitizer_log: None,
            build_command: None,
            repro_command: "true".into(),
            language: "c".into(),
        };
        let verifier = |cmd: &str| ExternalVerifier { command: cmd.into(), timeout: Duration::from_secs(10) };
        let ok = verifier("test \"$VR_INSTANCE_ID\" = x-1 && grep -q fix \"$VR_PATCH_FILE\" && echo PASS");
        assert_eq!(ok.verify(&instance, "fix").unwrap(), (true, "PASS".into()));
        assert!(!verifier("exit 1").verify(&instance, "").unwrap().0);
        assert!(verifier("exit 7").verify(&instance, "").is_err());
    }
}
