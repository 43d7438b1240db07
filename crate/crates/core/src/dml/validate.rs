use std::ops::Deref;

use super::{DiagnosticKind, ParseDiagnostic, TemplateAST};

/// Default per-dialog object limit.
pub const DEFAULT_MAX_OBJECTS: usize = 256;

/// A template whose tree respects the parent-child table and the object limit.
#[derive(Debug, Clone)]
pub struct ValidatedTemplate(TemplateAST);

impl ValidatedTemplate {
    pub fn ast(&self) -> &TemplateAST {
        &self.0
    }

    pub fn into_ast(self) -> TemplateAST {
        self.0
    }
}

impl Deref for ValidatedTemplate {
    type Target = TemplateAST;

    fn deref(&self) -> &TemplateAST {
        &self.0
    }
}

pub fn validate_structure(
    ast: TemplateAST,
    max_objects: usize,
) -> Result<ValidatedTemplate, ParseDiagnostic> {
    for parent in ast.root.walk() {
        for child in &parent.children {
            if !parent.object_type.allows_child(child.object_type) {
                return Err(ParseDiagnostic::new(
                    DiagnosticKind::ParentChildViolation,
                    child.location,
                    format!(
                        "`{}` (id `{}`) is not allowed inside `{}` (id `{}`)",
                        child.object_type, child.id, parent.object_type, parent.id
                    ),
                ));
            }
        }
    }
    if ast.object_count > max_objects {
        return Err(ParseDiagnostic::new(
            DiagnosticKind::ObjectLimitExceeded,
            ast.root.location,
            format!(
                "dialog has {} objects, the limit is {}",
                ast.object_count, max_objects
            ),
        ));
    }
    Ok(ValidatedTemplate(ast))
}
