use crate::execution::Sandbox;

use super::AgentError;

/// Workspace-relative location of the generated header.
pub const PRELUDE_PATH: &str = ".vulnresolver/spa_prelude.h";

/// Evaluates `cond` as the safety condition: PASS when it holds, FAIL when
/// it is violated. Never aborts.
pub const ASSERT_MACRO: &str = r#"#ifndef VULNRESOLVER_SPA_PRELUDE_H
#define VULNRESOLVER_SPA_PRELUDE_H
#include <stdio.h>
#define SAFETY_PROPERTY_ASSERT(cond, id)                                   \
    do {                                                                   \
        if (cond)                                                          \
            fprintf(stderr, "[SPA] %s PASS\n", #id);                       \
        else                                                               \
            fprintf(stderr, "[SPA] %s FAIL expr=\"%s\"\n", #id, #cond);    \
        fflush(stderr);                                                    \
    } while (0)
#endif
"#;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PreludeInfo {
    pub header: String,
    /// The flag appended to CFLAGS and CXXFLAGS.
    pub include_flag: String,
}

/// Write the macro header into the workspace and force-include it through
/// the compiler flag variables of later sandbox commands.
pub fn install_assert_prelude(sandbox: &dyn Sandbox) -> Result<PreludeInfo, AgentError> {
    sandbox
        .write_file(PRELUDE_PATH, ASSERT_MACRO.as_bytes())
        .map_err(|e| AgentError::WriteFailure(e.to_string()))?;
    let include_flag = format!("-include {}", sandbox.path_in_sandbox(PRELUDE_PATH));
    for var in ["CFLAGS", "CXXFLAGS"] {
        let value = match sandbox.env_var(var) {
            Some(v) if v.contains(&include_flag) => v,
            Some(v) if !v.trim().is_empty() => format!("{v} {include_flag}"),
            _ => include_flag.clone(),
        };
        sandbox.set_env(var, &value);
    }
    Ok(PreludeInfo { header: PRELUDE_PATH.to_string(), include_flag })
}

#[cfg(test)]
mod tests {
    use std::time::Duration;

    use super::*;
    use crate::execution::{summarize_assertions, LocalSandbox};

    #[test]
    fn macro_compiles_and_logs() {
        let dir = tempfile::tempdir().unwrap();
        let sb = LocalSandbox::new(dir.path()).unwrap().with_env("CFLAGS", "-O0");
        let info = install_assert_prelude(&sb).unwrap();
        install_assert_prelude(&sb).unwrap();
        assert_eq!(sb.env_var("CFLAGS").unwrap(), format!("-O0 {}", info.include_flag));
        sb.write_file(
            "t.c",
            b"int main(void) { int i; for (i = 0; i < 3; i++) SAFETY_PROPERTY_ASSERT(i < 2, bound); \
              if (0) SAFETY_PROPERTY_ASSERT(1, never); return 0; }\n",
        )
        .unwrap();
        let out = sb.exec("cc $CFLAGS -o \"$VR_BUILD_DIR/t\" t.c && \"$VR_BUILD_DIR/t\"", Duration::from_secs(60)).unwrap();
        assert_eq!(out.exit_code, Some(0), "{}", out.stderr);
        assert_eq!(out.stderr, "[SPA] bound PASS\n[SPA] bound PASS\n[SPA] bound FAIL expr=\"i < 2\"\n");
        let s = summarize_assertions(&out.stderr);
        assert_eq!((s.passed, s.failed), (2, 1));
        assert!(!s.per_id.contains_key("never"));
    }
}
