use std::path::Path;
use std::process::Command;
use std::sync::Arc;
use std::time::Duration;

use super::config::RunConfig;
use super::instance::{IssueInstance, WorkspaceSource};
use crate::execution::{ContainerSandbox, ExecError, LocalSandbox, LogStore, PocConfig, PocToolkit, Sandbox, SanitizerSignatures};

/// Copy a directory tree, skipping tool state directories.
pub fn copy_tree(from: &Path, to: &Path) -> std::io::Result<()> {
    if !from.is_dir() {
        return Err(std::io::Error::new(std::io::ErrorKind::NotFound, format!("{} is not a directory", from.display())));
    }
    for entry in walkdir::WalkDir::new(from).sort_by_file_name().into_iter().filter_entry(|e| e.file_name() != ".vulnresolver") {
        let entry = entry.map_err(std::io::Error::other)?;
        let rel = entry.path().strip_prefix(from).expect("walk stays under root");
        let target = to.join(rel);
        let kind = entry.file_type();
        if kind.is_dir() {
            std::fs::create_dir_all(&target)?;
        } else if kind.is_symlink() {
            std::os::unix::fs::symlink(std::fs::read_link(entry.path())?, &target)?;
        } else {
            std::fs::copy(entry.path(), &target)?;
        }
    }
    Ok(())
}

fn runtime(runtime: &str, args: &[&str]) -> Result<String, ExecError> {
    let out = Command::new(runtime)
        .args(args)
        .output()
        .map_err(|e| ExecError::SandboxUnavailable(format!("cannot run {runtime}: {e}")))?;
    if !out.status.success() {
        return Err(ExecError::SandboxUnavailable(format!(
            "{runtime} {} failed: {}",
            args.join(" "),
            String::from_utf8_lossy(&out.stderr).trim()
        )));
    }
    Ok(String::from_utf8_lossy(&out.stdout).trim().to_string())
}

/// Place a private copy of the instance repository at `dest`.
pub fn materialize(instance: &IssueInstance, config: &RunConfig, dest: &Path) -> Result<(), ExecError> {
    match &instance.workspace {
        WorkspaceSource::Local(src) => {
            copy_tree(src, dest).map_err(|e| ExecError::SandboxUnavailable(format!("cannot copy {}: {e}", src.display())))
        }
        WorkspaceSource::Image { image, workdir } => {
            std::fs::create_dir_all(dest)?;
            let rt = config.container_runtime.as_str();
            let id = runtime(rt, &["create", image])?;
            let source = format!("{id}:{}/.", workdir.trim_end_matches('/'));
            let copied = runtime(rt, &["cp", &source, &dest.display().to_string()]);
            let removed = runtime(rt, &["rm", &id]);
            copied.and(removed).map(|_| ())
        }
    }
}

/// A sandbox executing the instance's commands over `workspace`.
pub fn sandbox_for(instance: &IssueInstance, config: &RunConfig, workspace: &Path) -> Result<Arc<dyn Sandbox>, ExecError> {
    Ok(match &instance.workspace {
        WorkspaceSource::Local(_) => Arc::new(LocalSandbox::new(workspace)?),
        WorkspaceSource::Image { image, workdir } => {
            Arc::new(ContainerSandbox::new(workspace, image, &config.container_runtime).with_mount_point(workdir))
        }
    })
}

pub fn signatures(config: &RunConfig) -> SanitizerSignatures {
    match &config.sanitizer_signatures {
        Some(patterns) => SanitizerSignatures::new(patterns).expect("validated config"),
        None => SanitizerSignatures::default(),
    }
}

pub fn poc_toolkit(instance: &IssueInstance, config: &RunConfig, sandbox: Arc<dyn Sandbox>, logs: LogStore) -> PocToolkit {
    let mut poc = PocConfig::new(instance.build_command.clone(), instance.repro_command.clone());
    poc.timeout = Duration::from_secs(config.timeouts.poc_secs);
    poc.head_lines = config.caps.poc_head_lines;
    poc.tail_lines = config.caps.poc_tail_lines;
    PocToolkit::new(sandbox, poc, signatures(config), logs)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn copies_without_tool_state() {
        let src = tempfile::tempdir().unwrap();
        std::fs::create_dir_all(src.path().join("a/.vulnresolver")).unwrap();
        std::fs::create_dir_all(src.path().join(".vulnresolver")).unwrap();
        std::fs::write(src.path().join("a/x.c"), "int x;\n").unwrap();
        std::fs::write(src.path().join(".vulnresolver/p.h"), "").unwrap();
        let dst = tempfile::tempdir().unwrap();
        copy_tree(src.path(), dst.path()).unwrap();
        assert_eq!(std::fs::read_to_string(dst.path().join("a/x.c")).unwrap(), "int x;\n");
        assert!(!dst.path().join(".vulnresolver").exists());
        assert!(copy_tree(&src.path().join("missing"), dst.path()).is_err());
    }
}
