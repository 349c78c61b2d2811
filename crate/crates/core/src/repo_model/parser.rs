use std::ops::Range;
use std::path::Path;

use tree_sitter::{Node, Parser, Tree};

use super::{read_source, CodeElement, ElementKind, LineRange, RepoError};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Dialect {
    C,
    Cpp,
}

/// Everything one walk of a syntax tree produces.
pub(crate) struct Extraction {
    pub elements: Vec<CodeElement>,
    /// Byte ranges of function bodies (`{ ... }` blocks) in source order.
    pub bodies: Vec<Range<usize>>,
}

/// Extract the top-level and class-member elements of a repo-relative file.
pub fn parse_elements(root: &Path, file: &str) -> Result<Vec<CodeElement>, RepoError> {
    let source = read_source(root, file)?;
    parse_source(file, &source)
}

/// Extract elements from in-memory source; `file` selects the dialect and is
/// copied into every element.
pub fn parse_source(file: &str, source: &str) -> Result<Vec<CodeElement>, RepoError> {
    Ok(extract(file, source)?.elements)
}

pub(crate) fn extract(file: &str, source: &str) -> Result<Extraction, RepoError> {
    if source.is_empty() {
        return Ok(Extraction { elements: Vec::new(), bodies: Vec::new() });
    }
    let tree = parse_tree(file, source)?;
    let mut walker = Walker {
        file,
        source,
        lines: crate::text::split_lines(source),
        elements: Vec::new(),
        bodies: Vec::new(),
    };
    let root = tree.root_node();
    walker.walk_items(root, &[]);
    walker.elements.sort_by_key(|e| e.lines.start);
    walker.bodies.sort_by_key(|r| r.start);
    Ok(Extraction { elements: walker.elements, bodies: walker.bodies })
}

fn dialect_for(file: &str) -> Option<Dialect> {
    let ext = file.rsplit_once('.').map(|(_, e)| e.to_ascii_lowercase())?;
    match ext.as_str() {
        "c" => Some(Dialect::C),
        "h" => None,
        _ => Some(Dialect::Cpp),
    }
}

fn parse_with(dialect: Dialect, source: &str) -> Option<Tree> {
    let mut parser = Parser::new();
    let language = match dialect {
        Dialect::C => tree_sitter_c::language(),
        Dialect::Cpp => tree_sitter_cpp::language(),
    };
    parser.set_language(&language).ok()?;
    parser.parse(source, None)
}

fn error_count(node: Node) -> usize {
    if !node.has_error() {
        return 0;
    }
    let own = usize::from(node.is_error() || node.is_missing());
    let mut cursor = node.walk();
    own + node.children(&mut cursor).map(error_count).sum::<usize>()
}

fn parse_tree(file: &str, source: &str) -> Result<Tree, RepoError> {
    let failure = || RepoError::ParseFailure {
        file: file.to_string(),
        reason: "parser produced no tree".into(),
    };
    match dialect_for(file) {
        Some(d) => parse_with(d, source).ok_or_else(failure),
        None => {
            // Headers are ambiguous: prefer C unless C++ parses strictly better.
            let c = parse_with(Dialect::C, source).ok_or_else(failure)?;
            if !c.root_node().has_error() {
                return Ok(c);
            }
            match parse_with(Dialect::Cpp, source) {
                Some(cpp) if error_count(cpp.root_node()) < error_count(c.root_node()) => Ok(cpp),
                _ => Ok(c),
            }
        }
    }
}

struct Walker<'a> {
    file: &'a str,
    source: &'a str,
    lines: Vec<&'a str>,
    elements: Vec<CodeElement>,
    bodies: Vec<Range<usize>>,
}

fn node_text<'s>(node: Node, source: &'s str) -> &'s str {
    &source[node.byte_range()]
}

fn end_line(node: Node) -> usize {
    let start = node.start_position();
    let end = node.end_position();
    if end.column == 0 && end.row > start.row {
        end.row
    } else {
        end.row + 1
    }
}

impl<'a> Walker<'a> {
    fn push(&mut self, name: String, scope: &[String], kind: ElementKind, first: Node, last: Node) {
        if name.is_empty() {
            return;
        }
        let start = first.start_position().row + 1;
        let end = end_line(last).max(start);
        let text = self.lines[start - 1..end.min(self.lines.len())].join("\n");
        self.elements.push(CodeElement {
            name,
            qualifier: (!scope.is_empty()).then(|| scope.join("::")),
            kind,
            file: self.file.to_string(),
            lines: LineRange::new(start, end),
            text,
        });
    }

    /// Visit a sequence of file-level (or namespace-level) items.
    fn walk_items(&mut self, parent: Node, scope: &[String]) {
        let mut cursor = parent.walk();
        let children: Vec<Node> = parent.children(&mut cursor).collect();
        for (i, child) in children.iter().enumerate() {
            let next = children.get(i + 1).copied();
            self.item(*child, next, scope, *child);
        }
    }

    fn item(&mut self, node: Node, next: Option<Node>, scope: &[String], outer: Node) {
        match node.kind() {
            "function_definition" => self.function(node, scope, outer),
            "declaration" => self.declaration(node, scope, outer),
            "type_definition" => self.typedef(node, scope, outer),
            "struct_specifier" | "union_specifier" | "enum_specifier" | "class_specifier" => {
                // A bare specifier at file level is followed by its own `;`.
                let last = match next {
                    Some(n) if n.kind() == ";" => n,
                    _ => outer,
                };
                self.type_specifier(node, None, scope, outer, last);
            }
            "preproc_def" | "preproc_function_def" => {
                if let Some(name) = node.child_by_field_name("name") {
                    let name = node_text(name, self.source).to_string();
                    self.push(name, scope, ElementKind::Macro, outer, outer);
                }
            }
            "template_declaration" => {
                let mut cursor = node.walk();
                let inner: Vec<Node> = node.named_children(&mut cursor).collect();
                if let Some(last) = inner.last() {
                    self.item(*last, None, scope, outer);
                }
            }
            "namespace_definition" => {
                let mut inner_scope = scope.to_vec();
                if let Some(name) = node.child_by_field_name("name") {
                    inner_scope.push(node_text(name, self.source).to_string());
                }
                if let Some(body) = node.child_by_field_name("body") {
                    self.walk_items(body, &inner_scope);
                }
            }
            "linkage_specification" => {
                if let Some(body) = node.child_by_field_name("body") {
                    if body.kind() == "declaration_list" {
                        self.walk_items(body, scope);
                    } else {
                        self.item(body, None, scope, body);
                    }
                }
            }
            "preproc_if" | "preproc_ifdef" | "preproc_else" | "preproc_elif" | "preproc_elifdef"
            | "ERROR" | "declaration_list" => self.walk_items(node, scope),
            _ => {}
        }
    }

    fn function(&mut self, node: Node, scope: &[String], outer: Node) {
        let Some(declarator) = node.child_by_field_name("declarator") else {
            return;
        };
        let chain = declarator_chain(declarator);
        // `T x = 0;` inside a class parses as a pure-virtual definition.
        let (Some(name_node), true) = (chain.name, chain.saw_function) else {
            return;
        };
        let (mut qualifier, name) = split_name(name_node, self.source);
        let mut full_scope = scope.to_vec();
        full_scope.append(&mut qualifier);
        if let Some(body) = node.child_by_field_name("body") {
            if body.kind() == "compound_statement" {
                self.bodies.push(body.byte_range());
            }
        }
        self.push(name, &full_scope, ElementKind::Function, outer, outer);
    }

    fn declaration(&mut self, node: Node, scope: &[String], outer: Node) {
        if let Some(ty) = node.child_by_field_name("type") {
            if is_type_with_body(ty) {
                self.type_specifier(ty, None, scope, outer, outer);
            }
        }
        let mut is_extern = false;
        let mut cursor = node.walk();
        for child in node.children(&mut cursor) {
            if child.kind() == "storage_class_specifier" && node_text(child, self.source) == "extern" {
                is_extern = true;
            }
        }
        let mut cursor = node.walk();
        let declarators: Vec<Node> = node.children_by_field_name("declarator", &mut cursor).collect();
        for d in declarators {
            let chain = declarator_chain(d);
            if chain.is_function_prototype() {
                continue;
            }
            if is_extern && d.kind() != "init_declarator" {
                continue;
            }
            let Some(name_node) = chain.name else { continue };
            let (mut qualifier, name) = split_name(name_node, self.source);
            let mut full_scope = scope.to_vec();
            full_scope.append(&mut qualifier);
            self.push(name, &full_scope, ElementKind::GlobalVariable, outer, outer);
        }
    }

    fn typedef(&mut self, node: Node, scope: &[String], outer: Node) {
        let Some(ty) = node.child_by_field_name("type") else { return };
        if !is_type_with_body(ty) {
            return;
        }
        let alias = node
            .child_by_field_name("declarator")
            .and_then(|d| declarator_chain(d).name)
            .map(|n| node_text(n, self.source).to_string());
        self.type_specifier(ty, alias, scope, outer, outer);
    }

    fn type_specifier(
        &mut self,
        node: Node,
        alias: Option<String>,
        scope: &[String],
        first: Node,
        last: Node,
    ) {
        let kind = match node.kind() {
            "struct_specifier" => ElementKind::Struct,
            "union_specifier" => ElementKind::Union,
            "enum_specifier" => ElementKind::Enum,
            "class_specifier" => ElementKind::Class,
            _ => return,
        };
        let Some(body) = node.child_by_field_name("body") else { return };
        let tag = node.child_by_field_name("name").map(|n| split_name(n, self.source));
        let (mut qualifier, name) = match (tag, alias) {
            (Some(t), _) => t,
            (None, Some(a)) => (Vec::new(), a),
            (None, None) => return,
        };
        let mut full_scope = scope.to_vec();
        full_scope.append(&mut qualifier);
        self.push(name.clone(), &full_scope, kind, first, last);
        if matches!(kind, ElementKind::Class | ElementKind::Struct | ElementKind::Union)
            && body.kind() == "field_declaration_list"
        {
            full_scope.push(name);
            self.members(body, &full_scope);
        }
    }

    fn members(&mut self, body: Node, scope: &[String]) {
        let mut cursor = body.walk();
        let children: Vec<Node> = body.named_children(&mut cursor).collect();
        for child in children {
            match child.kind() {
                "function_definition" => self.function(child, scope, child),
                "template_declaration" => {
                    let mut c = child.walk();
                    let inner: Vec<Node> = child.named_children(&mut c).collect();
                    if let Some(last) = inner.last() {
                        if last.kind() == "function_definition" {
                            self.function(*last, scope, child);
                        }
                    }
                }
                "field_declaration" => {
                    if let Some(ty) = child.child_by_field_name("type") {
                        if is_type_with_body(ty) {
                            self.type_specifier(ty, None, scope, child, child);
                        }
                    }
                }
                "preproc_def" | "preproc_function_def" => self.item(child, None, scope, child),
                _ => {}
            }
        }
    }
}

fn is_type_with_body(node: Node) -> bool {
    matches!(
        node.kind(),
        "struct_specifier" | "union_specifier" | "enum_specifier" | "class_specifier"
    ) && node.child_by_field_name("body").is_some()
}

#[derive(Default)]
struct DeclaratorChain<'t> {
    name: Option<Node<'t>>,
    saw_function: bool,
    /// A pointer declarator nested inside a function declarator's target,
    /// as in `int (*fp)(int)`: a variable, not a prototype.
    pointer_to_function: bool,
}

impl DeclaratorChain<'_> {
    fn is_function_prototype(&self) -> bool {
        self.saw_function && !self.pointer_to_function
    }
}

fn declarator_chain(node: Node) -> DeclaratorChain {
    let mut chain = DeclaratorChain::default();
    let mut current = node;
    loop {
        match current.kind() {
            "identifier" | "field_identifier" | "type_identifier" | "qualified_identifier"
            | "destructor_name" | "operator_name" | "template_function" | "operator_cast" => {
                chain.name = Some(current);
                return chain;
            }
            "function_declarator" => chain.saw_function = true,
            "pointer_declarator" if chain.saw_function => chain.pointer_to_function = true,
            "pointer_declarator" | "reference_declarator" | "array_declarator"
            | "init_declarator" | "parenthesized_declarator" | "attributed_declarator" => {}
            _ => return chain,
        }
        let next = current.child_by_field_name("declarator").or_else(|| {
            let mut cursor = current.walk();
            let found = current
                .named_children(&mut cursor)
                .find(|c| c.kind().ends_with("declarator") || c.kind().ends_with("identifier"));
            found
        });
        match next {
            Some(n) => current = n,
            None => return chain,
        }
    }
}

/// Split a possibly qualified name node into (scope components, name).
fn split_name(node: Node, source: &str) -> (Vec<String>, String) {
    let mut scope = Vec::new();
    let mut current = node;
    loop {
        match current.kind() {
            "qualified_identifier" => {
                if let Some(s) = current.child_by_field_name("scope") {
                    scope.push(strip_template_args(node_text(s, source)));
                }
                match current.child_by_field_name("name") {
                    Some(n) => current = n,
                    None => break,
                }
            }
            "template_function" | "template_type" => {
                match current.child_by_field_name("name") {
                    Some(n) => current = n,
                    None => break,
                }
            }
            _ => break,
        }
    }
    (scope, node_text(current, source).trim().to_string())
}

fn strip_template_args(s: &str) -> String {
    match s.find('<') {
        Some(i) => s[..i].trim().to_string(),
        None => s.trim().to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kinds(source: &str, file: &str) -> Vec<(String, Option<String>, ElementKind)> {
        parse_source(file, source)
            .unwrap()
            .into_iter()
            .map(|e| (e.name, e.qualifier, e.kind))
            .collect()
    }

    #[test]
    fn c_items() {
        let src = "#define A 1\n#define MAX(a, b) ((a) > (b) ? (a) : (b))\n\
                   struct s {\n    int x;\n};\nunion u { int a; float b; };\n\
                   enum e { E1, E2 };\ntypedef struct { int y; } anon_t;\n\
                   int g = 1, h;\nextern int ext;\nint proto(int);\n\
                   static int (*fp)(int) = 0;\nint f(void)\n{\n    return 0;\n}\n";
        let got = kinds(src, "a.c");
        let names: Vec<_> = got.iter().map(|(n, _, k)| (n.as_str(), *k)).collect();
        assert_eq!(
            names,
            vec![
                ("A", ElementKind::Macro),
                ("MAX", ElementKind::Macro),
                ("s", ElementKind::Struct),
                ("u", ElementKind::Union),
                ("e", ElementKind::Enum),
                ("anon_t", ElementKind::Struct),
                ("g", ElementKind::GlobalVariable),
                ("h", ElementKind::GlobalVariable),
                ("fp", ElementKind::GlobalVariable),
                ("f", ElementKind::Function),
            ]
        );
    }

    #[test]
    fn ranges_cover_terminating_semicolon() {
        let src = "struct s {\n    int x;\n};\n#define B 2\nint f(void)\n{\n    return 0;\n}\n";
        let elems = parse_source("a.c", src).unwrap();
        assert_eq!(elems[0].lines, LineRange::new(1, 3));
        assert_eq!(elems[0].text, "struct s {\n    int x;\n};");
        assert_eq!(elems[1].lines, LineRange::new(4, 4));
        assert_eq!(elems[2].lines, LineRange::new(5, 8));
    }

    #[test]
    fn cpp_methods_carry_qualifiers() {
        let src = "namespace io {\nclass File {\npublic:\n    int size() const { return 0; }\n    \
                   void open();\n};\nvoid File::open() {}\n}\nint open_file() { return 1; }\n";
        let got = kinds(src, "f.cpp");
        assert!(got.contains(&("File".into(), Some("io".into()), ElementKind::Class)));
        assert!(got.contains(&("size".into(), Some("io::File".into()), ElementKind::Function)));
        assert!(got.contains(&("open".into(), Some("io::File".into()), ElementKind::Function)));
        assert!(got.contains(&("open_file".into(), None, ElementKind::Function)));
        assert_eq!(got.iter().filter(|(n, _, _)| n == "open").count(), 1);
    }

    #[test]
    fn malformed_code_is_best_effort() {
        let src = "int ok(void) { return 1; }\nint broken( { \nint later(void) { return 2; }\n";
        let got = kinds(src, "m.c");
        assert!(got.iter().any(|(n, _, _)| n == "ok"));
    }

    #[test]
    fn empty_source_has_no_elements() {
        assert!(parse_source("e.c", "").unwrap().is_empty());
    }
}
