use std::path::{Path, PathBuf};
use std::time::Duration;

use vulnresolver::repo_model::{LineRange, RepoLayout};
use vulnresolver::symbol_analysis::{
    open_backend, resolve_code_symbol, ChainedBackend, FallbackIndex, LspBackend, QueryOutcome, SymbolBackend,
    SymbolBackendConfig,
};

fn offbyone() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/repos/offbyone")
}

fn server(extra: &[&str]) -> Vec<String> {
    let script = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/lsp/mock_lsp.py");
    let mut cmd = vec!["python3".to_string(), script.display().to_string()];
    cmd.extend(extra.iter().map(|s| s.to_string()));
    cmd
}

const QUERY: &str = "### src/main.c
<<<<<<< SEARCH
    name = copy_name(line, len);
=======
    name = FIND_DEFINITION(copy_name)(line, len);
>>>>>>> REPLACE
";

#[test]
fn language_server_answers_definitions_and_references() {
    let root = offbyone();
    let mut lsp = LspBackend::start(&root, &server(&[]), Duration::from_secs(10)).unwrap();
    let result = resolve_code_symbol(&root, QUERY, &mut lsp, 50).unwrap();
    let QueryOutcome::Locations { locations, .. } = &result.outcomes[0].outcome else { panic!("{result:?}") };
    assert_eq!(locations.len(), 1);
    assert_eq!((locations[0].file.as_str(), locations[0].lines), ("src/buf.c", LineRange::new(7, 7)));
    assert!(locations[0].preview.contains("char *copy_name"));

    let refs = lsp.references("src/main.c", 29, 12).unwrap();
    let mut files: Vec<(String, usize)> = refs.iter().map(|l| (l.file.clone(), l.lines.start)).collect();
    files.sort();
    assert!(files.contains(&("src/main.c".into(), 29)), "{files:?}");
    assert!(files.iter().any(|(f, _)| f == "src/buf.h"), "{files:?}");
    lsp.shutdown();
}

#[test]
fn dead_server_defers_to_fallback() {
    let root = offbyone();
    let lsp = LspBackend::start(&root, &server(&["--die-after-init"]), Duration::from_secs(5)).unwrap();
    let index = FallbackIndex::build(&root, &RepoLayout::default()).unwrap();
    let mut chained = ChainedBackend::new(Box::new(lsp), Box::new(index));
    let result = resolve_code_symbol(&root, QUERY, &mut chained, 50).unwrap();
    let QueryOutcome::Locations { locations, .. } = &result.outcomes[0].outcome else { panic!("{result:?}") };
    assert!(locations.iter().any(|l| l.file == "src/buf.c" && l.lines == LineRange::new(7, 21)), "{locations:?}");
}

#[test]
fn missing_server_opens_fallback_when_allowed() {
    let root = offbyone();
    let missing = SymbolBackendConfig::Lsp { command: vec!["/nonexistent/clangd".into()], timeout_secs: 2, fallback: true };
    let backend = open_backend(&missing, &root, &RepoLayout::default()).unwrap();
    assert_eq!(backend.name(), "fallback-index");
    let strict = SymbolBackendConfig::Lsp { command: vec!["/nonexistent/clangd".into()], timeout_secs: 2, fallback: false };
    assert!(open_backend(&strict, &root, &RepoLayout::default()).is_err());
}
