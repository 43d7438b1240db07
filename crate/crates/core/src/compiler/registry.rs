use std::collections::HashMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use parking_lot::{Mutex, RwLock};
use tracing::{debug, warn};

use super::{compile, CompileError, CompiledDialog};
use crate::dml::{
    is_valid_dialog_name, parse_template, validate_structure, ParseDiagnostic, TemplateSource,
};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TemplateError {
    #[error("unknown dialog `{0}`")]
    UnknownDialog(String),
    #[error(transparent)]
    Parse(#[from] ParseDiagnostic),
    #[error(transparent)]
    Compile(#[from] CompileError),
    #[error("template directory: {0}")]
    Io(String),
}

impl From<io::Error> for TemplateError {
    fn from(e: io::Error) -> Self {
        TemplateError::Io(e.to_string())
    }
}

/// Where template sources come from.
pub trait TemplateLoader: Send + Sync {
    /// `Ok(None)` when no template of that name exists.
    fn load(&self, name: &str) -> io::Result<Option<TemplateSource>>;

    /// File names of every template candidate, sorted.
    fn list(&self) -> io::Result<Vec<String>>;
}

/// `<dir>/<dialog-name>.dml`, one dialog per file.
#[derive(Debug, Clone)]
pub struct DirectoryLoader {
    dir: PathBuf,
}

impl DirectoryLoader {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        DirectoryLoader { dir: dir.into() }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn path_for(&self, name: &str) -> PathBuf {
        self.dir.join(format!("{name}.dml"))
    }

    /// Writes a template atomically (temp file + rename).
    pub fn store(&self, name: &str, text: &str) -> io::Result<()> {
        let tmp = self.dir.join(format!(".{name}.dml.tmp"));
        fs::write(&tmp, text)?;
        fs::rename(&tmp, self.path_for(name))
    }
}

impl TemplateLoader for DirectoryLoader {
    fn load(&self, name: &str) -> io::Result<Option<TemplateSource>> {
        if !is_valid_dialog_name(name) {
            return Ok(None);
        }
        match fs::read_to_string(self.path_for(name)) {
            Ok(text) => Ok(Some(TemplateSource::new(name, text))),
            Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(e),
        }
    }

    fn list(&self) -> io::Result<Vec<String>> {
        let mut names = Vec::new();
        for entry in fs::read_dir(&self.dir)? {
            let entry = entry?;
            if !entry.file_type()?.is_file() {
                continue;
            }
            let file = entry.file_name().to_string_lossy().into_owned();
            if file.ends_with(".dml") && !file.starts_with('.') {
                names.push(file);
            }
        }
        names.sort();
        Ok(names)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CompileMode {
    /// Trust the startup registry; never re-read sources.
    Eager,
    /// Re-check the source fingerprint on every lookup.
    #[default]
    Lazy,
}

/// How a lookup was satisfied.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CompileStatus {
    Cached,
    Compiled,
    /// The source changed but no longer compiles; the last good version is served.
    Stale(TemplateError),
}

#[derive(Debug, Default)]
pub struct PrecompileSummary {
    pub compiled: Vec<String>,
    /// (file name, error) for every template that failed.
    pub errors: Vec<(String, TemplateError)>,
}

impl PrecompileSummary {
    pub fn compiled_count(&self) -> usize {
        self.compiled.len()
    }
}

/// Compiled dialogs keyed by name, recompiled only when their source changes.
pub struct CompilationRegistry {
    mode: CompileMode,
    max_objects: usize,
    entries: RwLock<HashMap<String, Arc<CompiledDialog>>>,
    /// Last failing fingerprint per name, so a broken source is not
    /// recompiled on every request.
    failures: RwLock<HashMap<String, (String, TemplateError)>>,
    name_locks: Mutex<HashMap<String, Arc<Mutex<()>>>>,
    compile_count: AtomicU64,
}

impl CompilationRegistry {
    pub fn new(mode: CompileMode, max_objects: usize) -> Self {
        CompilationRegistry {
            mode,
            max_objects,
            entries: RwLock::new(HashMap::new()),
            failures: RwLock::new(HashMap::new()),
            name_locks: Mutex::new(HashMap::new()),
            compile_count: AtomicU64::new(0),
        }
    }

    pub fn mode(&self) -> CompileMode {
        self.mode
    }

    pub fn max_objects(&self) -> usize {
        self.max_objects
    }

    pub fn compile_count(&self) -> u64 {
        self.compile_count.load(Ordering::Relaxed)
    }

    pub fn get(&self, name: &str) -> Option<Arc<CompiledDialog>> {
        self.entries.read().get(name).cloned()
    }

    pub fn names(&self) -> Vec<String> {
        let mut names: Vec<String> = self.entries.read().keys().cloned().collect();
        names.sort();
        names
    }

    /// Parse, validate and compile without touching the registry.
    pub fn compile_source(&self, source: &TemplateSource) -> Result<CompiledDialog, TemplateError> {
        let ast = parse_template(source)?;
        let validated = validate_structure(ast, self.max_objects)?;
        Ok(compile(&validated)?)
    }

    /// Stores a freshly compiled dialog, replacing any previous version.
    pub fn install(&self, compiled: CompiledDialog) -> Arc<CompiledDialog> {
        let compiled = Arc::new(compiled);
        self.compile_count.fetch_add(1, Ordering::Relaxed);
        self.failures.write().remove(&compiled.name);
        self.entries
            .write()
            .insert(compiled.name.clone(), Arc::clone(&compiled));
        compiled
    }

    pub fn get_or_compile(
        &self,
        name: &str,
        loader: &dyn TemplateLoader,
    ) -> Result<Arc<CompiledDialog>, TemplateError> {
        self.get_or_compile_with_status(name, loader)
            .map(|(dialog, _)| dialog)
    }

    pub fn get_or_compile_with_status(
        &self,
        name: &str,
        loader: &dyn TemplateLoader,
    ) -> Result<(Arc<CompiledDialog>, CompileStatus), TemplateError> {
        let unknown = || TemplateError::UnknownDialog(name.to_string());
        if !is_valid_dialog_name(name) {
            return Err(unknown());
        }
        if self.mode == CompileMode::Eager {
            return self
                .get(name)
                .map(|d| (d, CompileStatus::Cached))
                .ok_or_else(unknown);
        }

        let Some(source) = loader.load(name)? else {
            self.entries.write().remove(name);
            return Err(unknown());
        };
        if let Some(hit) = self.lookup(name, &source.fingerprint) {
            return hit;
        }

        let lock = Arc::clone(self.name_locks.lock().entry(name.to_string()).or_default());
        let _guard = lock.lock();
        if let Some(hit) = self.lookup(name, &source.fingerprint) {
            return hit;
        }
        match self.compile_source(&source) {
            Ok(compiled) => {
                debug!(dialog = name, "compiled");
                Ok((self.install(compiled), CompileStatus::Compiled))
            }
            Err(err) => {
                self.failures
                    .write()
                    .insert(name.to_string(), (source.fingerprint.clone(), err.clone()));
                self.stale_or(name, err)
            }
        }
    }

    fn lookup(
        &self,
        name: &str,
        fingerprint: &str,
    ) -> Option<Result<(Arc<CompiledDialog>, CompileStatus), TemplateError>> {
        if let Some(entry) = self.entries.read().get(name) {
            if entry.fingerprint == fingerprint {
                return Some(Ok((Arc::clone(entry), CompileStatus::Cached)));
            }
        }
        let failures = self.failures.read();
        let (failed_fp, err) = failures.get(name)?;
        (failed_fp == fingerprint).then(|| self.stale_or(name, err.clone()))
    }

    fn stale_or(
        &self,
        name: &str,
        err: TemplateError,
    ) -> Result<(Arc<CompiledDialog>, CompileStatus), TemplateError> {
        match self.get(name) {
            Some(last_good) => {
                warn!(dialog = name, error = %err, "recompile failed; serving last good version");
                Ok((last_good, CompileStatus::Stale(err)))
            }
            None => Err(err),
        }
    }

    /// Compiles every `.dml` file the loader lists, collecting failures.
    pub fn precompile_all(
        &self,
        loader: &dyn TemplateLoader,
    ) -> Result<PrecompileSummary, TemplateError> {
        let mut summary = PrecompileSummary::default();
        for file in loader.list()? {
            let stem = file.trim_end_matches(".dml");
            let result = if is_valid_dialog_name(stem) {
                match loader.load(stem) {
                    Ok(Some(source)) => self.compile_source(&source),
                    Ok(None) => Err(TemplateError::UnknownDialog(stem.to_string())),
                    Err(e) => Err(e.into()),
                }
            } else {
                Err(TemplateError::UnknownDialog(stem.to_string()))
            };
            match result {
                Ok(compiled) => {
                    self.install(compiled);
                    summary.compiled.push(stem.to_string());
                }
                Err(err) => summary.errors.push((file, err)),
            }
        }
        Ok(summary)
    }
}
