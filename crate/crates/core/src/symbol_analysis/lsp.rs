use std::collections::HashSet;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::time::{Duration, Instant};

use serde_json::{json, Value};
use url::Url;

use super::{BackendError, SymbolBackend, SymbolLocation};
use crate::repo_model::{read_source, slice_lines, LineRange};

/// Language Server Protocol client over a child process's stdio.
pub struct LspBackend {
    root: PathBuf,
    child: Child,
    stdin: ChildStdin,
    incoming: Receiver<Value>,
    next_id: i64,
    opened: HashSet<String>,
    timeout: Duration,
    label: String,
}

fn read_message(reader: &mut impl BufRead) -> Option<Value> {
    let mut length = None;
    loop {
        let mut line = String::new();
        if reader.read_line(&mut line).ok()? == 0 {
            return None;
        }
        let line = line.trim_end();
        if line.is_empty() {
            break;
        }
        if let Some((key, value)) = line.split_once(':') {
            if key.eq_ignore_ascii_case("content-length") {
                length = value.trim().parse::<usize>().ok();
            }
        }
    }
    let mut body = vec![0; length?];
    reader.read_exact(&mut body).ok()?;
    serde_json::from_slice(&body).ok()
}

fn language_id(path: &str) -> &'static str {
    if path.ends_with(".c") || path.ends_with(".h") {
        "c"
    } else {
        "cpp"
    }
}

/// 0-based UTF-16 column of a 1-based byte column on `line_text`.
fn utf16_column(line_text: &str, byte_column: usize) -> usize {
    let end = (byte_column - 1).min(line_text.len());
    line_text[..end].encode_utf16().count()
}

impl LspBackend {
    /// Spawn `command` in `root` and complete the initialize handshake.
    pub fn start(root: &Path, command: &[String], timeout: Duration) -> Result<Self, BackendError> {
        let (program, args) = command
            .split_first()
            .ok_or_else(|| BackendError("empty language server command".into()))?;
        let mut child = Command::new(program)
            .args(args)
            .current_dir(root)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::null())
            .spawn()
            .map_err(|e| BackendError(format!("cannot start {program}: {e}")))?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = child.stdout.take().expect("piped stdout");
        let (tx, rx) = mpsc::channel();
        std::thread::spawn(move || {
            let mut reader = BufReader::new(stdout);
            while let Some(msg) = read_message(&mut reader) {
                if tx.send(msg).is_err() {
                    break;
                }
            }
        });
        let root = root.canonicalize().map_err(|e| BackendError(e.to_string()))?;
        let mut backend = Self {
            root,
            child,
            stdin,
            incoming: rx,
            next_id: 1,
            opened: HashSet::new(),
            timeout,
            label: format!("lsp:{program}"),
        };
        let root_uri = Url::from_directory_path(&backend.root)
            .map_err(|_| BackendError("root is not an absolute path".into()))?;
        backend.request(
            "initialize",
            json!({
                "processId": std::process::id(),
                "rootUri": root_uri.as_str(),
                "capabilities": {
                    "textDocument": {
                        "definition": { "linkSupport": false },
                        "references": {}
                    }
                },
                "workspaceFolders": [{ "uri": root_uri.as_str(), "name": "workspace" }]
            }),
        )?;
        backend.notify("initialized", json!({}))?;
        Ok(backend)
    }

    fn send(&mut self, msg: &Value) -> Result<(), BackendError> {
        let body = serde_json::to_vec(msg).map_err(|e| BackendError(e.to_string()))?;
        let header = format!("Content-Length: {}\r\n\r\n", body.len());
        self.stdin
            .write_all(header.as_bytes())
            .and_then(|_| self.stdin.write_all(&body))
            .and_then(|_| self.stdin.flush())
            .map_err(|e| BackendError(format!("language server pipe closed: {e}")))
    }

    fn notify(&mut self, method: &str, params: Value) -> Result<(), BackendError> {
        self.send(&json!({ "jsonrpc": "2.0", "method": method, "params": params }))
    }

    fn request(&mut self, method: &str, params: Value) -> Result<Value, BackendError> {
        let id = self.next_id;
        self.next_id += 1;
        self.send(&json!({ "jsonrpc": "2.0", "id": id, "method": method, "params": params }))?;
        let deadline = Instant::now() + self.timeout;
        loop {
            let remaining = deadline.saturating_duration_since(Instant::now());
            let msg = match self.incoming.recv_timeout(remaining) {
                Ok(m) => m,
                Err(RecvTimeoutError::Timeout) => {
                    return Err(BackendError(format!("{method} timed out after {:?}", self.timeout)))
                }
                Err(RecvTimeoutError::Disconnected) => {
                    return Err(BackendError("language server exited".into()))
                }
            };
            // Requests from the server get an empty answer.
            if msg.get("method").is_some() {
                if let Some(server_id) = msg.get("id") {
                    self.send(&json!({ "jsonrpc": "2.0", "id": server_id, "result": null }))?;
                }
                continue;
            }
            if msg.get("id") != Some(&json!(id)) {
                continue;
            }
            if let Some(err) = msg.get("error") {
                return Err(BackendError(format!("{method} failed: {err}")));
            }
            return Ok(msg.get("result").cloned().unwrap_or(Value::Null));
        }
    }

    fn uri_for(&self, file: &str) -> Result<Url, BackendError> {
        Url::from_file_path(self.root.join(file)).map_err(|_| BackendError(format!("bad path {file}")))
    }

    fn ensure_open(&mut self, file: &str) -> Result<String, BackendError> {
        let text = read_source(&self.root, file).map_err(|e| BackendError(e.to_string()))?;
        if self.opened.insert(file.to_string()) {
            let uri = self.uri_for(file)?;
            self.notify(
                "textDocument/didOpen",
                json!({
                    "textDocument": {
                        "uri": uri.as_str(),
                        "languageId": language_id(file),
                        "version": 1,
                        "text": text
                    }
                }),
            )?;
        }
        Ok(text)
    }

    fn position_params(&mut self, file: &str, line: usize, column: usize) -> Result<Value, BackendError> {
        let text = self.ensure_open(file)?;
        let line_text = crate::text::split_lines(&text).get(line - 1).copied().unwrap_or("");
        Ok(json!({
            "textDocument": { "uri": self.uri_for(file)?.as_str() },
            "position": { "line": line - 1, "character": utf16_column(line_text, column) }
        }))
    }

    fn to_locations(&self, result: &Value) -> Vec<SymbolLocation> {
        let items: Vec<&Value> = match result {
            Value::Array(a) => a.iter().collect(),
            Value::Null => Vec::new(),
            other => vec![other],
        };
        let mut out = Vec::new();
        for item in items {
            let uri = item.get("uri").or_else(|| item.get("targetUri")).and_then(Value::as_str);
            let range = item.get("range").or_else(|| item.get("targetRange"));
            let (Some(uri), Some(range)) = (uri, range) else { continue };
            let Some(path) = Url::parse(uri).ok().and_then(|u| u.to_file_path().ok()) else { continue };
            let Ok(rel) = path.strip_prefix(&self.root) else { continue };
            let rel = rel.to_string_lossy().replace('\\', "/");
            let line_of = |key: &str| range.get(key)?.get("line")?.as_u64().map(|l| l as usize + 1);
            let (Some(start), Some(end)) = (line_of("start"), line_of("end")) else { continue };
            let lines = LineRange::new(start, end.max(start));
            let preview = read_source(&self.root, &rel).map(|s| slice_lines(&s, lines)).unwrap_or_default();
            out.push(SymbolLocation { file: rel, lines, preview });
        }
        out
    }
}

impl SymbolBackend for LspBackend {
    fn name(&self) -> &str {
        &self.label
    }

    fn references_include_declaration(&self) -> bool {
        true
    }

    fn definition(&mut self, file: &str, line: usize, column: usize) -> Result<Vec<SymbolLocation>, BackendError> {
        let params = self.position_params(file, line, column)?;
        let result = self.request("textDocument/definition", params)?;
        Ok(self.to_locations(&result))
    }

    fn references(&mut self, file: &str, line: usize, column: usize) -> Result<Vec<SymbolLocation>, BackendError> {
        let mut params = self.position_params(file, line, column)?;
        params["context"] = json!({ "includeDeclaration": true });
        let result = self.request("textDocument/references", params)?;
        Ok(self.to_locations(&result))
    }

    fn shutdown(&mut self) {
        let previous = self.timeout;
        self.timeout = Duration::from_secs(2).min(previous);
        let _ = self.request("shutdown", Value::Null);
        let _ = self.notify("exit", Value::Null);
        let deadline = Instant::now() + Duration::from_secs(2);
        while Instant::now() < deadline {
            if let Ok(Some(_)) = self.child.try_wait() {
                return;
            }
            std::thread::sleep(Duration::from_millis(20));
        }
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

impl Drop for LspBackend {
    fn drop(&mut self) {
        if let Ok(None) = self.child.try_wait() {
            let _ = self.child.kill();
            let _ = self.child.wait();
        }
    }
}
