use std::io::Read;
use std::os::unix::process::CommandExt;
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::ExecError;
use crate::repo_model::resolve_in_repo;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum SandboxDescriptor {
    LocalProcess { workspace: PathBuf },
    Container { image: String, runtime: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExecOutput {
    pub exit_code: Option<i32>,
    pub stdout: String,
    pub stderr: String,
    pub timed_out: bool,
}

/// Where reproduction commands run. File access is always relative to the
/// workspace root.
pub trait Sandbox: Send + Sync {
    fn workspace(&self) -> &Path;
    fn descriptor(&self) -> SandboxDescriptor;
    fn exec(&self, command: &str, timeout: Duration) -> Result<ExecOutput, ExecError>;
    /// Set an environment variable for later `exec` calls.
    fn set_env(&self, key: &str, value: &str);
    /// A variable previously set with `set_env`.
    fn env_var(&self, key: &str) -> Option<String>;

    /// How commands inside the sandbox name a workspace-relative path.
    fn path_in_sandbox(&self, rel: &str) -> String {
        self.workspace().join(rel).display().to_string()
    }

    fn read_file(&self, rel: &str) -> Result<Vec<u8>, ExecError> {
        let path = resolve_in_repo(self.workspace(), rel).map_err(|e| ExecError::Io(std::io::Error::other(e.to_string())))?;
        Ok(std::fs::read(path)?)
    }

    fn write_file(&self, rel: &str, bytes: &[u8]) -> Result<(), ExecError> {
        let path = resolve_in_repo(self.workspace(), rel).map_err(|e| ExecError::Io(std::io::Error::other(e.to_string())))?;
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir)?;
        }
        Ok(std::fs::write(path, bytes)?)
    }
}

#[derive(Debug, Default)]
struct EnvVars(Mutex<Vec<(String, String)>>);

impl EnvVars {
    fn set(&self, key: &str, value: &str) {
        let mut vars = self.0.lock().expect("env poisoned");
        vars.retain(|(k, _)| k != key);
        vars.push((key.to_string(), value.to_string()));
    }

    fn get(&self, key: &str) -> Option<String> {
        self.0.lock().expect("env poisoned").iter().find(|(k, _)| k == key).map(|(_, v)| v.clone())
    }

    fn all(&self) -> Vec<(String, String)> {
        self.0.lock().expect("env poisoned").clone()
    }
}

/// Run `command` with a hard deadline, killing its whole process group when
/// the deadline passes.
pub(crate) fn run_with_timeout(mut command: Command, timeout: Duration) -> Result<ExecOutput, ExecError> {
    command.stdin(Stdio::null()).stdout(Stdio::piped()).stderr(Stdio::piped()).process_group(0);
    let mut child = command.spawn().map_err(|e| ExecError::SandboxUnavailable(e.to_string()))?;
    let pid = child.id() as i32;
    let mut out = child.stdout.take().expect("piped stdout");
    let mut err = child.stderr.take().expect("piped stderr");
    let out_reader = std::thread::spawn(move || {
        let mut buf = Vec::new();
        let _ = out.read_to_end(&mut buf);
        buf
    });
    let err_reader = std::thread::spawn(move || {
        let mut buf = Vec::new();
        let _ = err.read_to_end(&mut buf);
        buf
    });
    let deadline = Instant::now() + timeout;
    let mut timed_out = false;
    let status = loop {
        if let Some(status) = child.try_wait()? {
            break status;
        }
        if Instant::now() >= deadline {
            timed_out = true;
            // SAFETY: signalling the process group this call just created.
            unsafe {
                libc::kill(-pid, libc::SIGKILL);
            }
            break child.wait()?;
        }
        std::thread::sleep(Duration::from_millis(5));
    };
    if !timed_out {
        // Stray background children must not keep the pipes open.
        unsafe {
            libc::kill(-pid, libc::SIGKILL);
        }
    }
    let stdout = out_reader.join().unwrap_or_default();
    let stderr = err_reader.join().unwrap_or_default();
    Ok(ExecOutput {
        exit_code: status.code(),
        stdout: String::from_utf8_lossy(&stdout).into_owned(),
        stderr: String::from_utf8_lossy(&stderr).into_owned(),
        timed_out,
    })
}

/// Runs commands with `sh -c` directly in a host workspace directory.
/// `VR_BUILD_DIR` points at a private scratch directory for build outputs.
pub struct LocalSandbox {
    workspace: PathBuf,
    env: EnvVars,
    build_dir: tempfile::TempDir,
}

impl LocalSandbox {
    pub fn new(workspace: &Path) -> Result<Self, ExecError> {
        if !workspace.is_dir() {
            return Err(ExecError::SandboxUnavailable(format!("{} is not a directory", workspace.display())));
        }
        Ok(Self {
            workspace: workspace.to_path_buf(),
            env: EnvVars::default(),
            build_dir: tempfile::Builder::new().prefix("vr-build-").tempdir()?,
        })
    }

    pub fn with_env(self, key: &str, value: &str) -> Self {
        self.env.set(key, value);
        self
    }

    pub fn build_dir(&self) -> &Path {
        self.build_dir.path()
    }
}

impl Sandbox for LocalSandbox {
    fn workspace(&self) -> &Path {
        &self.workspace
    }

    fn descriptor(&self) -> SandboxDescriptor {
        SandboxDescriptor::LocalProcess { workspace: self.workspace.clone() }
    }

    fn exec(&self, command: &str, timeout: Duration) -> Result<ExecOutput, ExecError> {
        let mut cmd = Command::new("sh");
        cmd.arg("-c").arg(command).current_dir(&self.workspace);
        cmd.env("VR_BUILD_DIR", self.build_dir.path());
        for (k, v) in self.env.all() {
            cmd.env(k, v);
        }
        run_with_timeout(cmd, timeout)
    }

    fn set_env(&self, key: &str, value: &str) {
        self.env.set(key, value);
    }

    fn env_var(&self, key: &str) -> Option<String> {
        self.env.get(key)
    }
}

/// Runs commands inside a per-instance container image through a container
/// runtime CLI. The host workspace is bind-mounted, so file access stays on
/// the host side.
pub struct ContainerSandbox {
    workspace: PathBuf,
    image: String,
    runtime: String,
    mount_point: String,
    env: EnvVars,
}

impl ContainerSandbox {
    pub fn new(workspace: &Path, image: &str, runtime: &str) -> Self {
        Self {
            workspace: workspace.to_path_buf(),
            image: image.to_string(),
            runtime: runtime.to_string(),
            mount_point: "/workspace".to_string(),
            env: EnvVars::default(),
        }
    }

    pub fn with_env(self, key: &str, value: &str) -> Self {
        self.env.set(key, value);
        self
    }

    /// Mount the workspace at `path` inside the container.
    pub fn with_mount_point(mut self, path: &str) -> Self {
        self.mount_point = path.trim_end_matches('/').to_string();
        self
    }

    /// The runtime invocation for `command`.
    pub fn argv(&self, command: &str) -> Vec<String> {
        let mut argv = vec![
            self.runtime.clone(),
            "run".into(),
            "--rm".into(),
            "--network".into(),
            "none".into(),
            "-v".into(),
            format!("{}:{}", self.workspace.display(), self.mount_point),
            "-w".into(),
            self.mount_point.clone(),
            "-e".into(),
            "VR_BUILD_DIR=/tmp/vr-build".into(),
        ];
        for (k, v) in self.env.all() {
            argv.push("-e".into());
            argv.push(format!("{k}={v}"));
        }
        argv.push(self.image.clone());
        argv.extend(["sh".to_string(), "-c".to_string(), format!("mkdir -p /tmp/vr-build && {command}")]);
        argv
    }
}

impl Sandbox for ContainerSandbox {
    fn workspace(&self) -> &Path {
        &self.workspace
    }

    fn descriptor(&self) -> SandboxDescriptor {
        SandboxDescriptor::Container { image: self.image.clone(), runtime: self.runtime.clone() }
    }

    fn exec(&self, command: &str, timeout: Duration) -> Result<ExecOutput, ExecError> {
        let argv = self.argv(command);
        let mut cmd = Command::new(&argv[0]);
        cmd.args(&argv[1..]);
        run_with_timeout(cmd, timeout)
    }

    fn set_env(&self, key: &str, value: &str) {
        self.env.set(key, value);
    }

    fn env_var(&self, key: &str) -> Option<String> {
        self.env.get(key)
    }

    fn path_in_sandbox(&self, rel: &str) -> String {
        format!("{}/{}", self.mount_point, rel.trim_start_matches('/'))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn local_exec_and_timeout() {
        let dir = tempfile::tempdir().unwrap();
        let sb = LocalSandbox::new(dir.path()).unwrap().with_env("VR_TEST", "1");
        let out = sb.exec("echo hi; echo err >&2; echo $VR_TEST; exit 3", Duration::from_secs(10)).unwrap();
        assert_eq!(out.exit_code, Some(3));
        assert_eq!(out.stdout, "hi\n1\n");
        assert_eq!(out.stderr, "err\n");
        let start = Instant::now();
        let slow = sb.exec("sleep 5; echo late", Duration::from_millis(200)).unwrap();
        assert!(slow.timed_out);
        assert!(start.elapsed() < Duration::from_secs(3));
        sb.write_file("x/y.txt", b"data").unwrap();
        assert_eq!(sb.read_file("x/y.txt").unwrap(), b"data");
        assert!(sb.read_file("../escape").is_err());
    }

    #[test]
    fn container_argv() {
        let sb = ContainerSandbox::new(Path::new("/tmp/ws"), "secb/issue:1", "docker").with_env("CFLAGS", "-g");
        let argv = sb.argv("secb repro");
        assert_eq!(argv[0], "docker");
        assert!(argv.contains(&"/tmp/ws:/workspace".to_string()));
        assert!(argv.contains(&"CFLAGS=-g".to_string()));
        let image_at = argv.iter().position(|a| a == "secb/issue:1").unwrap();
        assert_eq!(&argv[image_at + 1..image_at + 3], ["sh", "-c"]);
        assert!(argv.last().unwrap().ends_with("secb repro"));
        let moved = ContainerSandbox::new(Path::new("/tmp/ws"), "img", "podman").with_mount_point("/src/proj/");
        assert!(moved.argv("true").contains(&"/tmp/ws:/src/proj".to_string()));
        assert_eq!(moved.path_in_sandbox("a/b.h"), "/src/proj/a/b.h");
    }
}
