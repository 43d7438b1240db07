//! Dialog Markup Language.
//!
//! A dialog is described by one XML-like document built from a fixed set of
//! eight tags. Parsing checks the vocabulary, attribute names, required
//! attributes and id uniqueness; [`validate_structure`] then enforces the
//! parent-child table and the per-dialog object limit.

mod parser;
mod validate;
pub mod vocabulary;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use parser::parse_template;
pub use validate::{validate_structure, ValidatedTemplate, DEFAULT_MAX_OBJECTS};
pub use vocabulary::{AttributeSpec, ObjectType};

/// Raw template text plus its content fingerprint.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TemplateSource {
    pub name: String,
    pub text: String,
    pub fingerprint: String,
}

impl TemplateSource {
    pub fn new(name: impl Into<String>, text: impl Into<String>) -> Self {
        let text = text.into();
        let fingerprint = fingerprint(&text);
        TemplateSource {
            name: name.into(),
            text,
            fingerprint,
        }
    }
}

/// Hex SHA-256 of the template text.
pub fn fingerprint(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

/// Dialog names double as file stems: `[a-z0-9_-]+`.
pub fn is_valid_dialog_name(name: &str) -> bool {
    !name.is_empty()
        && name
            .bytes()
            .all(|b| b.is_ascii_lowercase() || b.is_ascii_digit() || b == b'_' || b == b'-')
}

/// Object ids: `[A-Za-z][A-Za-z0-9_]*`.
pub fn is_valid_object_id(id: &str) -> bool {
    let mut bytes = id.bytes();
    matches!(bytes.next(), Some(b) if b.is_ascii_alphabetic())
        && bytes.all(|b| b.is_ascii_alphanumeric() || b == b'_')
}

/// 1-based line and column (columns count characters, not bytes).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Location {
    pub line: u32,
    pub column: u32,
}

impl fmt::Display for Location {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.column)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DiagnosticKind {
    Syntax,
    UnknownTag,
    UnknownAttribute,
    DuplicateId,
    ParentChildViolation,
    MissingRequiredAttribute,
    ObjectLimitExceeded,
}

impl DiagnosticKind {
    pub fn as_str(self) -> &'static str {
        match self {
            DiagnosticKind::Syntax => "syntax",
            DiagnosticKind::UnknownTag => "unknown-tag",
            DiagnosticKind::UnknownAttribute => "unknown-attribute",
            DiagnosticKind::DuplicateId => "duplicate-id",
            DiagnosticKind::ParentChildViolation => "parent-child-violation",
            DiagnosticKind::MissingRequiredAttribute => "missing-required-attribute",
            DiagnosticKind::ObjectLimitExceeded => "object-limit-exceeded",
        }
    }
}

impl fmt::Display for DiagnosticKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, thiserror::Error)]
#[error("{location}: {kind}: {message}")]
pub struct ParseDiagnostic {
    pub kind: DiagnosticKind,
    pub location: Location,
    pub message: String,
}

impl ParseDiagnostic {
    pub fn new(kind: DiagnosticKind, location: Location, message: impl Into<String>) -> Self {
        ParseDiagnostic {
            kind,
            location,
            message: message.into(),
        }
    }
}

/// One object (tag) of a dialog.
///
/// `defaults` holds only the attributes written in the template, minus `id`.
#[derive(Debug, Clone)]
pub struct ObjectDecl {
    pub id: String,
    pub object_type: ObjectType,
    pub defaults: BTreeMap<String, String>,
    pub children: Vec<ObjectDecl>,
    pub location: Location,
}

impl ObjectDecl {
    /// Structural equality: everything except source locations.
    pub fn same_structure(&self, other: &ObjectDecl) -> bool {
        self.id == other.id
            && self.object_type == other.object_type
            && self.defaults == other.defaults
            && self.children.len() == other.children.len()
            && self
                .children
                .iter()
                .zip(&other.children)
                .all(|(a, b)| a.same_structure(b))
    }

    /// Pre-order traversal including `self`.
    pub fn walk(&self) -> impl Iterator<Item = &ObjectDecl> {
        let mut stack = vec![self];
        std::iter::from_fn(move || {
            let next = stack.pop()?;
            stack.extend(next.children.iter().rev());
            Some(next)
        })
    }
}

/// A parsed dialog template.
#[derive(Debug, Clone)]
pub struct TemplateAST {
    pub name: String,
    pub fingerprint: String,
    pub root: ObjectDecl,
    pub object_count: usize,
    /// id -> child-index path from the root.
    object_index: BTreeMap<String, Vec<usize>>,
}

impl TemplateAST {
    pub(crate) fn new(name: String, fingerprint: String, root: ObjectDecl) -> Self {
        let mut object_index = BTreeMap::new();
        index_objects(&root, &mut Vec::new(), &mut object_index);
        TemplateAST {
            name,
            fingerprint,
            object_count: object_index.len(),
            root,
            object_index,
        }
    }

    pub fn object(&self, id: &str) -> Option<&ObjectDecl> {
        let path = self.object_index.get(id)?;
        let mut node = &self.root;
        for &i in path {
            node = &node.children[i];
        }
        Some(node)
    }

    pub fn object_ids(&self) -> impl Iterator<Item = &str> {
        self.object_index.keys().map(String::as_str)
    }

    pub fn same_structure(&self, other: &TemplateAST) -> bool {
        self.root.same_structure(&other.root)
    }

    /// Canonical text form: two-space indentation, attributes sorted by name.
    pub fn serialize(&self) -> String {
        let mut out = String::new();
        write_object(&self.root, 0, &mut out);
        out
    }
}

fn index_objects(
    node: &ObjectDecl,
    path: &mut Vec<usize>,
    index: &mut BTreeMap<String, Vec<usize>>,
) {
    index.insert(node.id.clone(), path.clone());
    for (i, child) in node.children.iter().enumerate() {
        path.push(i);
        index_objects(child, path, index);
        path.pop();
    }
}

fn write_object(node: &ObjectDecl, depth: usize, out: &mut String) {
    for _ in 0..depth {
        out.push_str("  ");
    }
    out.push('<');
    out.push_str(node.object_type.as_str());
    let mut attrs: Vec<(&str, &str)> = node
        .defaults
        .iter()
        .map(|(k, v)| (k.as_str(), v.as_str()))
        .collect();
    attrs.push(("id", &node.id));
    attrs.sort_unstable();
    for (name, value) in attrs {
        out.push(' ');
        out.push_str(name);
        out.push_str("=\"");
        escape_attribute(value, out);
        out.push('"');
    }
    if node.children.is_empty() {
        out.push_str("/>\n");
        return;
    }
    out.push_str(">\n");
    for child in &node.children {
        write_object(child, depth + 1, out);
    }
    for _ in 0..depth {
        out.push_str("  ");
    }
    out.push_str("</");
    out.push_str(node.object_type.as_str());
    out.push_str(">\n");
}

fn escape_attribute(value: &str, out: &mut String) {
    for c in value.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            _ => out.push(c),
        }
    }
}
