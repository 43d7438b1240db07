use std::path::PathBuf;
use std::time::Duration;

use webdialog_core::bizdb::DEFAULT_TIMEOUT;
use webdialog_core::conf::DEFAULT_LANGUAGE;
use webdialog_core::dml::DEFAULT_MAX_OBJECTS;
use webdialog_core::render::DEFAULT_ALERT_POLL_MS;
use webdialog_core::CompileMode;

/// Everything the service needs to start.
#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub templates: PathBuf,
    /// Configuration store file; in memory when absent.
    pub conf_db: Option<PathBuf>,
    /// Business database file; in memory when absent.
    pub business_db: Option<PathBuf>,
    /// SQL script run against the business database at startup.
    pub seed: Option<PathBuf>,
    pub procedures: Option<PathBuf>,
    /// Compile every template at startup. Implied by eager mode.
    pub precompile: bool,
    pub max_objects: usize,
    pub default_language: String,
    pub mode: CompileMode,
    /// Directory holding `runtime.js` and `style.css`; built-in copies otherwise.
    pub static_dir: Option<PathBuf>,
    pub alert_poll_ms: u64,
    pub query_timeout: Duration,
    pub pepper: Option<String>,
}

impl ServiceConfig {
    pub fn new(templates: impl Into<PathBuf>) -> Self {
        ServiceConfig {
            templates: templates.into(),
            conf_db: None,
            business_db: None,
            seed: None,
            procedures: None,
            precompile: false,
            max_objects: DEFAULT_MAX_OBJECTS,
            default_language: DEFAULT_LANGUAGE.to_string(),
            mode: CompileMode::Lazy,
            static_dir: None,
            alert_poll_ms: DEFAULT_ALERT_POLL_MS,
            query_timeout: DEFAULT_TIMEOUT,
            pepper: None,
        }
    }

    pub fn precompile_at_startup(&self) -> bool {
        self.precompile || self.mode == CompileMode::Eager
    }
}
