use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use tracing_subscriber::EnvFilter;
use webdialog_cli::{router, AppState, ServiceConfig};
use webdialog_core::compiler::{CompilationRegistry, DirectoryLoader};
use webdialog_core::conf::{ConfStore, Right, DEFAULT_LANGUAGE};
use webdialog_core::dml::DEFAULT_MAX_OBJECTS;
use webdialog_core::CompileMode;

#[derive(Debug, Parser)]
#[command(name = "webdialog", version, about = "Template-driven web dialogs over a business database")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the HTTP service.
    Serve(ServeArgs),
    /// Compile every template in a directory and report errors.
    Check {
        #[arg(long, env = "WEBDIALOG_TEMPLATES")]
        templates: PathBuf,
        #[arg(long, env = "WEBDIALOG_MAX_OBJECTS", default_value_t = DEFAULT_MAX_OBJECTS)]
        max_objects: usize,
    },
    /// Create a user (and its auto-role).
    AddUser {
        #[command(flatten)]
        store: StoreArgs,
        user_id: String,
        #[arg(long)]
        display_name: Option<String>,
        #[arg(long)]
        admin: bool,
        #[arg(long, env = "WEBDIALOG_USER_SECRET")]
        secret: String,
    },
    AddRole {
        #[command(flatten)]
        store: StoreArgs,
        role_id: String,
    },
    AssignRole {
        #[command(flatten)]
        store: StoreArgs,
        user_id: String,
        role_id: String,
        #[arg(long)]
        priority: u32,
    },
    /// Grant a right on a dialog, or on one object with `--object`.
    Grant {
        #[command(flatten)]
        store: StoreArgs,
        dialog: String,
        role_id: String,
        #[arg(value_enum)]
        right: RightArg,
        #[arg(long)]
        object: Option<String>,
    },
    /// Revoke a right on one object.
    Revoke {
        #[command(flatten)]
        store: StoreArgs,
        dialog: String,
        role_id: String,
        #[arg(value_enum)]
        right: RightArg,
        #[arg(long)]
        object: String,
    },
    BindTerminal {
        #[command(flatten)]
        store: StoreArgs,
        user_id: String,
        address: String,
    },
    PushAlert {
        #[command(flatten)]
        store: StoreArgs,
        user_id: String,
        message: String,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum RightArg {
    Open,
    Act,
}

impl From<RightArg> for Right {
    fn from(r: RightArg) -> Self {
        match r {
            RightArg::Open => Right::Open,
            RightArg::Act => Right::Act,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ModeArg {
    Eager,
    Lazy,
}

#[derive(Debug, Args)]
struct StoreArgs {
    /// Configuration store file.
    #[arg(long, env = "WEBDIALOG_DB")]
    db: PathBuf,
    #[arg(long, env = "WEBDIALOG_DEFAULT_LANGUAGE", default_value = DEFAULT_LANGUAGE)]
    default_language: String,
}

impl StoreArgs {
    fn open(&self) -> anyhow::Result<ConfStore> {
        let store = ConfStore::open(&self.db, self.default_language.clone())
            .with_context(|| format!("opening {}", self.db.display()))?;
        Ok(match std::env::var("WEBDIALOG_SECRET_PEPPER") {
            Ok(p) if !p.is_empty() => store.with_pepper(p),
            _ => store,
        })
    }
}

#[derive(Debug, Args)]
struct ServeArgs {
    #[arg(long, env = "WEBDIALOG_TEMPLATES")]
    templates: PathBuf,
    /// Configuration store file; in memory when omitted.
    #[arg(long, env = "WEBDIALOG_DB")]
    db: Option<PathBuf>,
    /// Business database file; in memory when omitted.
    #[arg(long, env = "WEBDIALOG_BUSINESS_DB")]
    business_db: Option<PathBuf>,
    #[arg(long, env = "WEBDIALOG_SEED")]
    seed: Option<PathBuf>,
    #[arg(long, env = "WEBDIALOG_PROCEDURES")]
    procedures: Option<PathBuf>,
    #[arg(long, env = "WEBDIALOG_HOST", default_value = "127.0.0.1")]
    host: String,
    #[arg(long, env = "WEBDIALOG_PORT", default_value_t = 8080)]
    port: u16,
    #[arg(long, env = "WEBDIALOG_PRECOMPILE")]
    precompile: bool,
    #[arg(long, env = "WEBDIALOG_MAX_OBJECTS", default_value_t = DEFAULT_MAX_OBJECTS)]
    max_objects: usize,
    #[arg(long, env = "WEBDIALOG_DEFAULT_LANGUAGE", default_value = DEFAULT_LANGUAGE)]
    default_language: String,
    #[arg(long, env = "WEBDIALOG_MODE", value_enum, default_value = "lazy")]
    mode: ModeArg,
    /// Directory with `runtime.js` and `style.css` replacing the built-in copies.
    #[arg(long, env = "WEBDIALOG_STATIC_DIR")]
    static_dir: Option<PathBuf>,
    /// Alert polling interval announced to clients, in milliseconds.
    #[arg(long, env = "WEBDIALOG_ALERT_INTERVAL", default_value_t = webdialog_core::render::DEFAULT_ALERT_POLL_MS)]
    alert_interval: u64,
    /// Business query timeout, in milliseconds.
    #[arg(long, env = "WEBDIALOG_QUERY_TIMEOUT", default_value_t = 5000)]
    query_timeout: u64,
}

impl ServeArgs {
    fn into_config(self) -> ServiceConfig {
        let mut config = ServiceConfig::new(self.templates);
        config.conf_db = self.db;
        config.business_db = self.business_db;
        config.seed = self.seed;
        config.procedures = self.procedures;
        config.precompile = self.precompile;
        config.max_objects = self.max_objects;
        config.default_language = self.default_language;
        config.mode = match self.mode {
            ModeArg::Eager => CompileMode::Eager,
            ModeArg::Lazy => CompileMode::Lazy,
        };
        config.static_dir = self.static_dir;
        config.alert_poll_ms = self.alert_interval;
        config.query_timeout = Duration::from_millis(self.query_timeout);
        config.pepper = std::env::var("WEBDIALOG_SECRET_PEPPER").ok().filter(|p| !p.is_empty());
        config
    }
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("info")))
        .init();
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<ExitCode> {
    match cli.command {
        Command::Serve(args) => serve(args)?,
        Command::Check { templates, max_objects } => return check(templates, max_objects),
        Command::AddUser { store, user_id, display_name, admin, secret } => {
            let display = display_name.unwrap_or_else(|| user_id.clone());
            store.open()?.create_user(&user_id, &display, admin, &secret)?;
            println!("created user {user_id}");
        }
        Command::AddRole { store, role_id } => {
            store.open()?.create_role(&role_id)?;
            println!("created role {role_id}");
        }
        Command::AssignRole { store, user_id, role_id, priority } => {
            store.open()?.assign_role(&user_id, &role_id, priority)?;
            println!("assigned {role_id} to {user_id} at priority {priority}");
        }
        Command::Grant { store, dialog, role_id, right, object } => {
            store.open()?.grant(&dialog, &role_id, right.into(), object.as_deref())?;
            println!("granted");
        }
        Command::Revoke { store, dialog, role_id, right, object } => {
            store.open()?.revoke(&dialog, &role_id, right.into(), &object)?;
            println!("revoked");
        }
        Command::BindTerminal { store, user_id, address } => {
            let added = store.open()?.bind_terminal(&user_id, &address)?;
            println!("{}", if added { "bound" } else { "already bound" });
        }
        Command::PushAlert { store, user_id, message } => {
            let alert = store.open()?.push_alert(&user_id, &message)?;
            println!("queued alert {}", alert.alert_id);
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn check(templates: PathBuf, max_objects: usize) -> anyhow::Result<ExitCode> {
    if !templates.is_dir() {
        bail!("{} is not a directory", templates.display());
    }
    let registry = CompilationRegistry::new(CompileMode::Eager, max_objects);
    let summary = registry.precompile_all(&DirectoryLoader::new(&templates))?;
    for name in &summary.compiled {
        println!("ok     {name}");
    }
    for (file, err) in &summary.errors {
        println!("error  {file}: {err}");
    }
    println!("{} compiled, {} failed", summary.compiled_count(), summary.errors.len());
    Ok(if summary.errors.is_empty() { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}

fn serve(args: ServeArgs) -> anyhow::Result<()> {
    let addr: SocketAddr = format!("{}:{}", args.host, args.port)
        .parse()
        .context("invalid listen address")?;
    let state = AppState::build(args.into_config())?;
    let runtime = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind(addr)
            .await
            .with_context(|| format!("binding {addr}"))?;
        tracing::info!(%addr, "listening");
        axum::serve(listener, router(state).into_make_service_with_connect_info::<SocketAddr>())
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
                tracing::info!("shutting down");
            })
            .await?;
        anyhow::Ok(())
    })
}
