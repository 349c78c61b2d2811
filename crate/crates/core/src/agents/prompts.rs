/// Versioned prompt assets with `{{slot}}` placeholders.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PromptTemplate {
    CpcSystem,
    CpcTask,
    ContextReportFormat,
    SpaSystem,
    SpaTask,
    PropertyReportFormat,
    Reask,
    LocalizeFiles,
    IgnoreFolders,
    LocalizeElements,
    Generation,
}

impl PromptTemplate {
    pub fn text(self) -> &'static str {
        match self {
            PromptTemplate::CpcSystem => include_str!("../../assets/prompts/cpc_system.md"),
            PromptTemplate::CpcTask => include_str!("../../assets/prompts/cpc_task.md"),
            PromptTemplate::ContextReportFormat => include_str!("../../assets/prompts/context_report_format.md"),
            PromptTemplate::SpaSystem => include_str!("../../assets/prompts/spa_system.md"),
            PromptTemplate::SpaTask => include_str!("../../assets/prompts/spa_task.md"),
            PromptTemplate::PropertyReportFormat => include_str!("../../assets/prompts/property_report_format.md"),
            PromptTemplate::Reask => include_str!("../../assets/prompts/reask.md"),
            PromptTemplate::LocalizeFiles => include_str!("../../assets/prompts/localize_files.md"),
            PromptTemplate::IgnoreFolders => include_str!("../../assets/prompts/ignore_folders.md"),
            PromptTemplate::LocalizeElements => include_str!("../../assets/prompts/localize_elements.md"),
            PromptTemplate::Generation => include_str!("../../assets/prompts/generation.md"),
        }
    }

    pub fn render(self, slots: &[(&str, &str)]) -> String {
        render_template(self.text(), slots)
    }
}

/// Fill `{{name}}` slots in a single pass, so slot values are never
/// themselves expanded.
pub fn render_template(template: &str, slots: &[(&str, &str)]) -> String {
    let mut out = String::with_capacity(template.len());
    let mut rest = template;
    while let Some(start) = rest.find("{{") {
        out.push_str(&rest[..start]);
        let after = &rest[start + 2..];
        match after.find("}}") {
            Some(end) => {
                let key = &after[..end];
                match slots.iter().find(|(k, _)| *k == key) {
                    Some((_, v)) => out.push_str(v),
                    None => out.push_str(&rest[start..start + 2 + end + 2]),
                }
                rest = &after[end + 2..];
            }
            None => {
                out.push_str(&rest[start..]);
                rest = "";
            }
        }
    }
    out.push_str(rest);
    out
}
