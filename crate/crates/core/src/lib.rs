//! Core of the web dialog framework: the dialog markup language, its
//! compiler and compilation cache, the configuration store with role and
//! language aware property resolution, the business database adapter and
//! the HTML renderer.

pub mod bizdb;
pub mod compiler;
pub mod conf;
pub mod dml;
pub mod render;

pub use bizdb::{BusinessDb, ResultSet};
pub use compiler::{compile, CompilationRegistry, CompileMode, CompiledDialog, TemplateError};
pub use conf::{ConfError, ConfStore, ResolvedDialog};
pub use render::{render_dialog, RenderInput};
pub use dml::{parse_template, validate_structure, TemplateAST, TemplateSource, ValidatedTemplate};
