use std::collections::BTreeMap;
use std::net::IpAddr;
use std::sync::Arc;

use anyhow::Context;
use serde::Serialize;
use webdialog_core::bizdb::{BusinessDb, Page, ResultSet};
use webdialog_core::compiler::{
    parse_page_size, CompilationRegistry, CompileStatus, DirectoryLoader, PrecompileSummary,
};
use webdialog_core::conf::{AccessDecision, ConfError, ConfStore, DialogView, UserRecord};
use webdialog_core::dml::ObjectType;
use webdialog_core::render::visible_objects;
use webdialog_core::CompiledDialog;

use crate::cache::{CacheKey, ResolvedCache};
use crate::config::ServiceConfig;
use crate::error::ApiError;
use crate::session::Sessions;

pub const BUILTIN_RUNTIME: &str = include_str!("../assets/runtime.js");
pub const BUILTIN_STYLESHEET: &str = include_str!("../assets/style.css");

#[derive(Debug, Clone)]
pub struct Assets {
    pub runtime: String,
    pub stylesheet: String,
}

impl Assets {
    pub fn builtin() -> Self {
        Assets {
            runtime: BUILTIN_RUNTIME.to_string(),
            stylesheet: BUILTIN_STYLESHEET.to_string(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Metrics {
    pub conf_store_reads: u64,
    pub cache_hits: u64,
    pub cache_misses: u64,
    pub compile_count: u64,
    pub bizdb_queries: u64,
    pub cache_entries: u64,
    pub cache_invalidated: u64,
    pub sessions: u64,
}

pub struct AppState {
    pub config: ServiceConfig,
    pub registry: CompilationRegistry,
    pub loader: DirectoryLoader,
    pub conf: Arc<ConfStore>,
    pub bizdb: BusinessDb,
    pub cache: Arc<ResolvedCache>,
    pub sessions: Sessions,
    pub assets: Assets,
    /// Result of the startup compilation pass, if one ran.
    pub precompile: Option<PrecompileSummary>,
}

impl AppState {
    /// Opens the stores named in `config` and prepares the service.
    pub fn build(config: ServiceConfig) -> anyhow::Result<Arc<Self>> {
        let mut conf = match &config.conf_db {
            Some(path) => ConfStore::open(path, config.default_language.clone())
                .with_context(|| format!("opening configuration store {}", path.display()))?,
            None => ConfStore::new(
                Box::new(webdialog_core::conf::MemoryBackend::new()),
                config.default_language.clone(),
            ),
        };
        if let Some(pepper) = &config.pepper {
            conf = conf.with_pepper(pepper.clone());
        }
        let bizdb = match &config.business_db {
            Some(path) => BusinessDb::open(path)
                .with_context(|| format!("opening business database {}", path.display()))?,
            None => BusinessDb::open_in_memory()?,
        }
        .with_timeout(config.query_timeout);
        if let Some(seed) = &config.seed {
            bizdb
                .seed_file(seed)
                .with_context(|| format!("running seed script {}", seed.display()))?;
        }
        if let Some(path) = &config.procedures {
            let manifest = std::fs::read_to_string(path)
                .with_context(|| format!("reading procedure manifest {}", path.display()))?;
            let n = bizdb.load_manifest(&manifest)?;
            tracing::info!(procedures = n, "procedures registered");
        }
        Self::from_parts(config, conf, bizdb)
    }

    /// Assembles the service around already opened stores.
    pub fn from_parts(config: ServiceConfig, conf: ConfStore, bizdb: BusinessDb) -> anyhow::Result<Arc<Self>> {
        let assets = match &config.static_dir {
            Some(dir) => Assets {
                runtime: std::fs::read_to_string(dir.join("runtime.js"))
                    .with_context(|| format!("reading {}/runtime.js", dir.display()))?,
                stylesheet: std::fs::read_to_string(dir.join("style.css"))
                    .with_context(|| format!("reading {}/style.css", dir.display()))?,
            },
            None => Assets::builtin(),
        };
        let conf = Arc::new(conf);
        let cache = Arc::new(ResolvedCache::new(conf.default_language()));
        {
            let cache = Arc::clone(&cache);
            conf.subscribe(move |event| cache.invalidate(event));
        }
        let registry = CompilationRegistry::new(config.mode, config.max_objects);
        let loader = DirectoryLoader::new(&config.templates);

        let precompile = if config.precompile_at_startup() {
            let summary = registry.precompile_all(&loader)?;
            for name in &summary.compiled {
                if let Some(compiled) = registry.get(name) {
                    conf.sync_dialog(&compiled)?;
                }
            }
            for (file, err) in &summary.errors {
                tracing::warn!(%file, error = %err, "template failed to compile");
            }
            tracing::info!(
                compiled = summary.compiled_count(),
                failed = summary.errors.len(),
                "precompiled templates"
            );
            Some(summary)
        } else {
            None
        };

        Ok(Arc::new(AppState {
            config,
            registry,
            loader,
            conf,
            bizdb,
            cache,
            sessions: Sessions::new(),
            assets,
            precompile,
        }))
    }

    pub fn metrics(&self) -> Metrics {
        Metrics {
            conf_store_reads: self.conf.reads(),
            cache_hits: self.cache.hits(),
            cache_misses: self.cache.misses(),
            compile_count: self.registry.compile_count(),
            bizdb_queries: self.bizdb.query_count(),
            cache_entries: self.cache.len() as u64,
            cache_invalidated: self.cache.invalidated(),
            sessions: self.sessions.len() as u64,
        }
    }

    /// The current compiled form of a dialog, registering its inventory in
    /// the configuration store whenever it was (re)compiled.
    pub fn compiled(&self, name: &str) -> Result<Arc<CompiledDialog>, ApiError> {
        let (compiled, status) = self.registry.get_or_compile_with_status(name, &self.loader)?;
        match status {
            CompileStatus::Compiled => {
                self.conf.sync_dialog(&compiled)?;
            }
            CompileStatus::Stale(err) => {
                tracing::warn!(dialog = name, error = %err, "serving last good version");
            }
            CompileStatus::Cached => {}
        }
        Ok(compiled)
    }

    /// Resolution, rights and access inputs, from the cache when possible.
    pub fn view(&self, compiled: &CompiledDialog, user_id: &str, language: &str) -> Result<Arc<DialogView>, ApiError> {
        let key = CacheKey::new(&compiled.name, user_id, language);
        if let Some(view) = self.cache.lookup(&key, &compiled.fingerprint) {
            return Ok(view);
        }
        let ticket = self.cache.begin_fill();
        let view = match self.conf.dialog_view(compiled, user_id, language) {
            // Another request compiled it and has not registered it yet.
            Err(ConfError::UnknownDialog(_)) => {
                self.conf.sync_dialog(compiled)?;
                self.conf.dialog_view(compiled, user_id, language)?
            }
            other => other?,
        };
        let view = Arc::new(view);
        self.cache.fill(key, Arc::clone(&view), ticket);
        Ok(view)
    }

    pub fn check_access(&self, view: &DialogView, terminal: IpAddr) -> Result<(), ApiError> {
        match view.access(terminal) {
            AccessDecision::Allow => Ok(()),
            AccessDecision::DenyTerminal => Err(ApiError::forbidden("not permitted from this terminal")),
            AccessDecision::DenyDialog => Err(ApiError::forbidden("no right to open this dialog")),
        }
    }

    /// Rejects requests from terminals the user is not bound to.
    pub fn check_terminal(&self, user_id: &str, terminal: IpAddr) -> Result<(), ApiError> {
        if self.conf.check_terminal(user_id, terminal)? {
            Ok(())
        } else {
            Err(ApiError::forbidden("not permitted from this terminal"))
        }
    }

    pub fn user(&self, user_id: &str) -> Result<UserRecord, ApiError> {
        self.conf.user(user_id)?.ok_or_else(ApiError::unauthorized)
    }

    pub fn require_admin(&self, user_id: &str) -> Result<UserRecord, ApiError> {
        let user = self.user(user_id)?;
        if user.is_admin {
            Ok(user)
        } else {
            Err(ApiError::forbidden("administrator right required"))
        }
    }

    /// Runs the query of every visible query-bound object; grids fetch the
    /// requested 1-based page.
    pub fn fetch_data(
        &self,
        compiled: &CompiledDialog,
        view: &DialogView,
        page: u32,
    ) -> Result<BTreeMap<String, ResultSet>, ApiError> {
        let mut data = BTreeMap::new();
        for index in visible_objects(compiled, &view.rights) {
            let object = &compiled.objects[index];
            let Some(binding) = compiled.query_binding(&object.id) else {
                continue;
            };
            let page = (object.object_type == ObjectType::Grid).then(|| {
                let size = view
                    .resolved
                    .get(&object.id, "page-size")
                    .and_then(parse_page_size)
                    .or(binding.page_size)
                    .unwrap_or(20);
                Page {
                    offset: u64::from(page.saturating_sub(1)) * u64::from(size),
                    size: u64::from(size),
                }
            });
            data.insert(object.id.clone(), self.bizdb.execute_query(&binding.query, page)?);
        }
        Ok(data)
    }
}
