//! Compiles validated templates into immutable render plans.

mod registry;

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::Serialize;

use crate::dml::{ObjectDecl, ObjectType, ValidatedTemplate};

pub use registry::{
    CompilationRegistry, CompileMode, CompileStatus, DirectoryLoader, PrecompileSummary,
    TemplateError, TemplateLoader,
};

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CompiledObject {
    pub id: String,
    pub object_type: ObjectType,
    /// Index of the parent in [`CompiledDialog::objects`].
    pub parent: Option<usize>,
    /// Template values with implicit defaults filled in; never contains `id`.
    pub defaults: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct QueryBinding {
    pub object_id: String,
    pub query: String,
    pub page_size: Option<u32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ActionKind {
    Submit,
    Procedure,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ActionBinding {
    pub object_id: String,
    pub kind: ActionKind,
    pub procedure: Option<String>,
}

/// Value flows from `source` to `target` when the source changes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct BindEdge {
    pub source: String,
    pub target: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CompiledDialog {
    pub name: String,
    pub fingerprint: String,
    /// Pre-order flattening of the tag tree.
    pub objects: Vec<CompiledObject>,
    pub query_bindings: Vec<QueryBinding>,
    pub action_bindings: Vec<ActionBinding>,
    pub bind_edges: Vec<BindEdge>,
    pub language_dependent_props: BTreeSet<(String, String)>,
    #[serde(skip)]
    index: HashMap<String, usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, thiserror::Error)]
#[error("object `{object_id}`: {message}")]
pub struct CompileError {
    pub object_id: String,
    pub message: String,
}

fn semantic(object_id: &str, message: impl Into<String>) -> CompileError {
    CompileError {
        object_id: object_id.to_string(),
        message: message.into(),
    }
}

impl CompiledDialog {
    pub fn object(&self, id: &str) -> Option<&CompiledObject> {
        self.index.get(id).map(|&i| &self.objects[i])
    }

    pub fn object_index(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn children(&self, index: usize) -> impl Iterator<Item = (usize, &CompiledObject)> {
        self.objects
            .iter()
            .enumerate()
            .filter(move |(_, o)| o.parent == Some(index))
    }

    pub fn query_binding(&self, object_id: &str) -> Option<&QueryBinding> {
        self.query_bindings.iter().find(|b| b.object_id == object_id)
    }

    pub fn action_binding(&self, object_id: &str) -> Option<&ActionBinding> {
        self.action_bindings.iter().find(|b| b.object_id == object_id)
    }

    pub fn bind_source(&self, target: &str) -> Option<&str> {
        self.bind_edges
            .iter()
            .find(|e| e.target == target)
            .map(|e| e.source.as_str())
    }

    pub fn is_language_dependent(&self, object_id: &str, property: &str) -> bool {
        self.language_dependent_props
            .contains(&(object_id.to_string(), property.to_string()))
    }

    /// The nearest enclosing form of an object, if any.
    pub fn enclosing_form(&self, object_id: &str) -> Option<&CompiledObject> {
        let mut at = self.object(object_id)?.parent;
        while let Some(i) = at {
            let o = &self.objects[i];
            if o.object_type == ObjectType::Form {
                return Some(o);
            }
            at = o.parent;
        }
        None
    }

    /// The procedure a button ultimately calls: its own `proc:` action, or for
    /// `submit`, the action of its enclosing form.
    pub fn button_procedure(&self, button_id: &str) -> Option<&str> {
        let binding = self.action_binding(button_id)?;
        match binding.kind {
            ActionKind::Procedure => binding.procedure.as_deref(),
            ActionKind::Submit => {
                let form = self.enclosing_form(button_id)?;
                self.action_binding(&form.id)?.procedure.as_deref()
            }
        }
    }
}

pub fn compile(template: &ValidatedTemplate) -> Result<CompiledDialog, CompileError> {
    let mut objects = Vec::with_capacity(template.object_count);
    flatten(&template.root, None, &mut objects);
    let index: HashMap<String, usize> = objects
        .iter()
        .enumerate()
        .map(|(i, o)| (o.id.clone(), i))
        .collect();

    let mut dialog = CompiledDialog {
        name: template.name.clone(),
        fingerprint: template.fingerprint.clone(),
        objects: Vec::new(),
        query_bindings: Vec::new(),
        action_bindings: Vec::new(),
        bind_edges: Vec::new(),
        language_dependent_props: BTreeSet::new(),
        index,
    };

    for object in &objects {
        let id = object.id.as_str();
        for spec in object.object_type.attributes().iter().filter(|a| a.text) {
            dialog
                .language_dependent_props
                .insert((id.to_string(), spec.name.to_string()));
        }
        if let Some(kind) = object.defaults.get("type") {
            if !matches!(kind.as_str(), "text" | "number" | "hidden") {
                return Err(semantic(id, format!("unknown field type `{kind}`")));
            }
        }
        if let Some(required) = object.defaults.get("required") {
            if !matches!(required.as_str(), "true" | "false") {
                return Err(semantic(id, format!("required must be true or false, got `{required}`")));
            }
        }
        if let Some(action) = object.defaults.get("action") {
            dialog.action_bindings.push(parse_action(id, action)?);
        }
        if let Some(source) = object.defaults.get("source") {
            let query = source
                .strip_prefix("query:")
                .map(str::trim)
                .ok_or_else(|| semantic(id, format!("source must start with `query:`, got `{source}`")))?;
            if query.is_empty() {
                return Err(semantic(id, "empty query text"));
            }
            let page_size = match object.defaults.get("page-size") {
                Some(raw) => Some(parse_page_size(raw).ok_or_else(|| {
                    semantic(id, format!("page-size must be a positive integer, got `{raw}`"))
                })?),
                None => None,
            };
            dialog.query_bindings.push(QueryBinding {
                object_id: id.to_string(),
                query: query.to_string(),
                page_size,
            });
        }
        if let Some(source) = object.defaults.get("bind") {
            check_bind(&dialog, &objects, object, source)?;
            dialog.bind_edges.push(BindEdge {
                source: source.clone(),
                target: id.to_string(),
            });
        }
    }

    dialog.objects = objects;
    Ok(dialog)
}

pub fn parse_page_size(raw: &str) -> Option<u32> {
    raw.trim().parse::<u32>().ok().filter(|&n| n > 0)
}

fn parse_action(id: &str, action: &str) -> Result<ActionBinding, CompileError> {
    if action == "submit" {
        return Ok(ActionBinding {
            object_id: id.to_string(),
            kind: ActionKind::Submit,
            procedure: None,
        });
    }
    let name = action
        .strip_prefix("proc:")
        .ok_or_else(|| semantic(id, format!("action must be `submit` or `proc:<name>`, got `{action}`")))?;
    if name.is_empty() {
        return Err(semantic(id, "empty procedure name"));
    }
    Ok(ActionBinding {
        object_id: id.to_string(),
        kind: ActionKind::Procedure,
        procedure: Some(name.to_string()),
    })
}

fn check_bind(
    dialog: &CompiledDialog,
    objects: &[CompiledObject],
    target: &CompiledObject,
    source: &str,
) -> Result<(), CompileError> {
    let id = target.id.as_str();
    let Some(&source_index) = dialog.index.get(source) else {
        return Err(semantic(id, format!("unknown bind target {source}")));
    };
    if source == id {
        return Err(semantic(id, "an object cannot bind to itself"));
    }
    let source_obj = &objects[source_index];
    if !matches!(source_obj.object_type, ObjectType::Field | ObjectType::Select) {
        return Err(semantic(
            id,
            format!("bind target {source} is a {}, not a field or select", source_obj.object_type),
        ));
    }
    if source_obj.parent != target.parent {
        return Err(semantic(id, format!("bind target {source} belongs to another form")));
    }
    Ok(())
}

fn flatten(node: &ObjectDecl, parent: Option<usize>, out: &mut Vec<CompiledObject>) {
    let mut defaults = BTreeMap::new();
    for spec in node.object_type.attributes() {
        if spec.name == "id" {
            continue;
        }
        if let Some(v) = node
            .object_type
            .effective_default(spec.name, &node.id, &node.defaults)
        {
            defaults.insert(spec.name.to_string(), v.to_string());
        }
    }
    let here = out.len();
    out.push(CompiledObject {
        id: node.id.clone(),
        object_type: node.object_type,
        parent,
        defaults,
    });
    for child in &node.children {
        flatten(child, Some(here), out);
    }
}
