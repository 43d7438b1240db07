//! The configuration store: users, prioritized roles, per-role and
//! per-language property overrides, access rights, terminal bindings,
//! history and alerts.
//!
//! Template files hold the default value of every property; the store only
//! holds deltas. [`ConfStore::resolve_properties`] merges the two for one
//! user and language.

mod backend;
mod memory;
pub mod resolve;
mod sqlite;
mod types;

use std::net::IpAddr;
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};

use chrono::Utc;
use parking_lot::{Mutex, RwLock};
use sha2::{Digest, Sha256};

use crate::compiler::{parse_page_size, CompiledDialog};
use crate::dml::ObjectType;

pub use backend::{BackendResult, ConfBackend};
pub use memory::MemoryBackend;
pub use sqlite::SqliteBackend;
pub use types::*;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ConfError {
    #[error("user `{0}` already exists")]
    DuplicateUser(String),
    #[error("role `{0}` already exists")]
    DuplicateRole(String),
    #[error("unknown user `{0}`")]
    UnknownUser(String),
    #[error("unknown role `{0}`")]
    UnknownRole(String),
    #[error("priority 0 reserved for the auto-role")]
    ReservedPriority,
    #[error("user `{user_id}` already has a role at priority {priority}")]
    DuplicatePriority { user_id: String, priority: u32 },
    #[error("user `{user_id}` already has role `{role_id}`")]
    DuplicateAssignment { user_id: String, role_id: String },
    #[error("`{0}` is an auto-role and cannot be assigned or removed")]
    AutoRole(String),
    #[error("permission denied: {0}")]
    PermissionDenied(String),
    #[error("unknown dialog `{0}`")]
    UnknownDialog(String),
    #[error("dialog `{dialog}` has no object `{object_id}`")]
    UnknownObject { dialog: String, object_id: String },
    #[error("object `{object_id}` has no overridable property `{property}`")]
    UnknownProperty { object_id: String, property: String },
    #[error("{0}")]
    LanguageRule(String),
    #[error("invalid value for `{property}`: {message}")]
    InvalidValue { property: String, message: String },
    #[error("invalid {what} `{value}`")]
    Invalid { what: &'static str, value: String },
    #[error("storage: {0}")]
    Backend(String),
}

type Result<T> = std::result::Result<T, ConfError>;

pub const DEFAULT_LANGUAGE: &str = "en";

/// User and role identifiers: `[A-Za-z0-9_.-]+`.
pub fn is_valid_identifier(id: &str) -> bool {
    !id.is_empty()
        && id
            .bytes()
            .all(|b| b.is_ascii_alphanumeric() || matches!(b, b'_' | b'.' | b'-'))
}

/// Language codes: a 2-3 letter primary tag with optional `-subtag`s, e.g. `en`, `ro`, `pt-BR`.
pub fn is_valid_language(code: &str) -> bool {
    let mut parts = code.split('-');
    let primary = parts.next().unwrap_or_default();
    (2..=3).contains(&primary.len())
        && primary.bytes().all(|b| b.is_ascii_lowercase())
        && parts.all(|p| (2..=8).contains(&p.len()) && p.bytes().all(|b| b.is_ascii_alphanumeric()))
}

fn parse_terminal(address: &str) -> Result<IpAddr> {
    address
        .trim()
        .parse::<IpAddr>()
        .map(|a| a.to_canonical())
        .map_err(|_| ConfError::Invalid {
            what: "terminal address",
            value: address.to_string(),
        })
}

type Listener = Box<dyn Fn(&Invalidation) + Send + Sync>;

pub struct ConfStore {
    backend: Mutex<Box<dyn ConfBackend>>,
    pepper: String,
    default_language: String,
    reads: AtomicU64,
    listeners: RwLock<Vec<Listener>>,
}

impl ConfStore {
    pub fn new(backend: Box<dyn ConfBackend>, default_language: impl Into<String>) -> Self {
        ConfStore {
            backend: Mutex::new(backend),
            pepper: String::new(),
            default_language: default_language.into(),
            reads: AtomicU64::new(0),
            listeners: RwLock::new(Vec::new()),
        }
    }

    pub fn in_memory() -> Self {
        Self::new(Box::new(MemoryBackend::new()), DEFAULT_LANGUAGE)
    }

    pub fn open(path: impl AsRef<Path>, default_language: impl Into<String>) -> Result<Self> {
        Ok(Self::new(
            Box::new(SqliteBackend::open(path)?),
            default_language,
        ))
    }

    /// Secret mixed into every credential hash.
    pub fn with_pepper(mut self, pepper: impl Into<String>) -> Self {
        self.pepper = pepper.into();
        self
    }

    pub fn default_language(&self) -> &str {
        &self.default_language
    }

    /// Number of backend reads so far.
    pub fn reads(&self) -> u64 {
        self.reads.load(Ordering::Relaxed)
    }

    pub fn subscribe(&self, listener: impl Fn(&Invalidation) + Send + Sync + 'static) {
        self.listeners.write().push(Box::new(listener));
    }

    fn notify(&self, event: Invalidation) {
        for listener in self.listeners.read().iter() {
            listener(&event);
        }
    }

    /// Counts one backend read.
    fn r<T>(&self, result: Result<T>) -> Result<T> {
        self.reads.fetch_add(1, Ordering::Relaxed);
        result
    }

    fn hash_secret(&self, user_id: &str, secret: &str) -> String {
        let mut h = Sha256::new();
        h.update(self.pepper.as_bytes());
        h.update([0]);
        h.update(user_id.as_bytes());
        h.update([0]);
        h.update(secret.as_bytes());
        hex::encode(h.finalize())
    }

    fn require_user(&self, b: &mut dyn ConfBackend, user_id: &str) -> Result<UserRecord> {
        self.r(b.user(user_id))?
            .ok_or_else(|| ConfError::UnknownUser(user_id.to_string()))
    }

    // ---- users and roles ----

    /// Creates a user together with its auto-role (same id, priority 0).
    pub fn create_user(
        &self,
        user_id: &str,
        display_name: &str,
        is_admin: bool,
        secret: &str,
    ) -> Result<UserRecord> {
        if !is_valid_identifier(user_id) {
            return Err(ConfError::Invalid {
                what: "user id",
                value: user_id.to_string(),
            });
        }
        if display_name.trim().is_empty() {
            return Err(ConfError::Invalid {
                what: "display name",
                value: display_name.to_string(),
            });
        }
        let mut b = self.backend.lock();
        if self.r(b.user(user_id))?.is_some() {
            return Err(ConfError::DuplicateUser(user_id.to_string()));
        }
        if self.r(b.role(user_id))?.is_some() {
            return Err(ConfError::DuplicateRole(user_id.to_string()));
        }
        let user = UserRecord {
            user_id: user_id.to_string(),
            display_name: display_name.to_string(),
            is_admin,
            secret_hash: self.hash_secret(user_id, secret),
        };
        b.create_user(&user)?;
        Ok(user)
    }

    pub fn user(&self, user_id: &str) -> Result<Option<UserRecord>> {
        let mut b = self.backend.lock();
        self.r(b.user(user_id))
    }

    /// Returns the user when the secret matches.
    pub fn verify_credentials(&self, user_id: &str, secret: &str) -> Result<Option<UserRecord>> {
        let user = self.user(user_id)?;
        let hash = self.hash_secret(user_id, secret);
        Ok(user.filter(|u| constant_time_eq(u.secret_hash.as_bytes(), hash.as_bytes())))
    }

    pub fn create_role(&self, role_id: &str) -> Result<RoleRecord> {
        if !is_valid_identifier(role_id) {
            return Err(ConfError::Invalid {
                what: "role id",
                value: role_id.to_string(),
            });
        }
        let mut b = self.backend.lock();
        if self.r(b.role(role_id))?.is_some() || self.r(b.user(role_id))?.is_some() {
            return Err(ConfError::DuplicateRole(role_id.to_string()));
        }
        let role = RoleRecord {
            role_id: role_id.to_string(),
            is_auto: false,
        };
        b.insert_role(&role)?;
        Ok(role)
    }

    pub fn assign_role(&self, user_id: &str, role_id: &str, priority: u32) -> Result<RoleAssignment> {
        if priority == 0 {
            return Err(ConfError::ReservedPriority);
        }
        let mut b = self.backend.lock();
        self.require_user(&mut **b, user_id)?;
        let role = self
            .r(b.role(role_id))?
            .ok_or_else(|| ConfError::UnknownRole(role_id.to_string()))?;
        if role.is_auto {
            return Err(ConfError::AutoRole(role_id.to_string()));
        }
        for existing in self.r(b.assignments(user_id))? {
            if existing.role_id == role_id {
                return Err(ConfError::DuplicateAssignment {
                    user_id: user_id.to_string(),
                    role_id: role_id.to_string(),
                });
            }
            if existing.priority == priority {
                return Err(ConfError::DuplicatePriority {
                    user_id: user_id.to_string(),
                    priority,
                });
            }
        }
        let assignment = RoleAssignment {
            user_id: user_id.to_string(),
            role_id: role_id.to_string(),
            priority,
        };
        b.insert_assignment(&assignment)?;
        drop(b);
        self.notify(Invalidation::User(user_id.to_string()));
        Ok(assignment)
    }

    pub fn unassign_role(&self, user_id: &str, role_id: &str) -> Result<bool> {
        if user_id == role_id {
            return Err(ConfError::AutoRole(role_id.to_string()));
        }
        let removed = self.backend.lock().remove_assignment(user_id, role_id)?;
        if removed {
            self.notify(Invalidation::User(user_id.to_string()));
        }
        Ok(removed)
    }

    /// The user's assignments, highest priority (auto-role) first.
    pub fn assignments(&self, user_id: &str) -> Result<Vec<RoleAssignment>> {
        let mut b = self.backend.lock();
        self.r(b.assignments(user_id))
    }

    // ---- dialogs and overrides ----

    /// Saves a dialog's object and property inventory. Requires an administrator.
    pub fn register_dialog(&self, actor: &str, compiled: &CompiledDialog) -> Result<Registration> {
        let admin = self.user(actor)?.is_some_and(|u| u.is_admin);
        if !admin {
            return Err(ConfError::PermissionDenied(format!(
                "`{actor}` may not save dialogs"
            )));
        }
        self.sync_dialog(compiled)
    }

    /// Records a compiled dialog's inventory without a permission check; used
    /// when the server itself compiles templates from its directory.
    pub fn sync_dialog(&self, compiled: &CompiledDialog) -> Result<Registration> {
        let mut records: Vec<DialogObjectRecord> = compiled
            .objects
            .iter()
            .map(|o| {
                let mut properties: Vec<PropertyRecord> = o
                    .object_type
                    .attributes()
                    .iter()
                    .filter(|a| a.overridable)
                    .map(|a| PropertyRecord {
                        name: a.name.to_string(),
                        default: o.defaults.get(a.name).cloned(),
                    })
                    .collect();
                properties.sort_by(|a, b| a.name.cmp(&b.name));
                DialogObjectRecord {
                    object_id: o.id.clone(),
                    object_type: o.object_type,
                    properties,
                }
            })
            .collect();
        records.sort_by(|a, b| a.object_id.cmp(&b.object_id));
        let removed = self
            .backend
            .lock()
            .replace_dialog_objects(&compiled.name, &records)?;
        self.notify(Invalidation::Dialog(compiled.name.clone()));
        Ok(Registration {
            dialog: compiled.name.clone(),
            objects: records.len(),
            removed_objects: removed,
        })
    }

    pub fn dialog_objects(&self, dialog: &str) -> Result<Vec<DialogObjectRecord>> {
        let mut b = self.backend.lock();
        self.r(b.dialog_objects(dialog))
    }

    fn check_override_scope(&self, b: &mut dyn ConfBackend, actor: &str, role_id: &str) -> Result<()> {
        let actor_user = self.require_user(b, actor)?;
        if !actor_user.is_admin && role_id != actor {
            return Err(ConfError::PermissionDenied(format!(
                "`{actor}` may only change its own properties"
            )));
        }
        if self.r(b.role(role_id))?.is_none() {
            return Err(ConfError::UnknownRole(role_id.to_string()));
        }
        Ok(())
    }

    /// Validates an override key against the registered inventory and
    /// returns the object type and the template default of the property.
    fn check_override_key(
        &self,
        b: &mut dyn ConfBackend,
        key: &OverrideKey,
    ) -> Result<(ObjectType, Option<String>)> {
        let objects = self.r(b.dialog_objects(&key.dialog))?;
        if objects.is_empty() {
            return Err(ConfError::UnknownDialog(key.dialog.clone()));
        }
        let object = objects
            .iter()
            .find(|o| o.object_id == key.object_id)
            .ok_or_else(|| ConfError::UnknownObject {
                dialog: key.dialog.clone(),
                object_id: key.object_id.clone(),
            })?;
        let property = object
            .properties
            .iter()
            .find(|p| p.name == key.property)
            .ok_or_else(|| ConfError::UnknownProperty {
                object_id: key.object_id.clone(),
                property: key.property.clone(),
            })?;
        let text = object.object_type.is_text_property(&key.property);
        match (&key.language, text) {
            (Some(lang), true) if !is_valid_language(lang) => Err(ConfError::Invalid {
                what: "language",
                value: lang.clone(),
            }),
            (Some(_), true) | (None, false) => Ok((object.object_type, property.default.clone())),
            (None, true) => Err(ConfError::LanguageRule(format!(
                "`{}` is language-dependent; a language is required",
                key.property
            ))),
            (Some(_), false) => Err(ConfError::LanguageRule(format!(
                "`{}` is not language-dependent; no language may be given",
                key.property
            ))),
        }
    }

    /// Stores an override. Non-administrators may only write their own
    /// auto-role. A value equal to the template default removes the
    /// override instead, so the store only ever holds deltas; in that case
    /// `Ok(None)` is returned.
    pub fn set_override(&self, actor: &str, value: PropertyOverride) -> Result<Option<PropertyOverride>> {
        let key = value.key();
        let mut b = self.backend.lock();
        self.check_override_scope(&mut **b, actor, &key.role_id)?;
        let (object_type, default) = self.check_override_key(&mut **b, &key)?;
        check_value(object_type, &key.property, &value.value)?;
        let stored = if default.as_deref() == Some(value.value.as_str()) {
            b.delete_override(&key)?;
            None
        } else {
            b.upsert_override(&value)?;
            Some(value)
        };
        drop(b);
        self.notify(Invalidation::Override {
            dialog: key.dialog,
            role_id: key.role_id,
            language: key.language,
        });
        Ok(stored)
    }

    pub fn delete_override(&self, actor: &str, key: &OverrideKey) -> Result<bool> {
        let mut b = self.backend.lock();
        self.check_override_scope(&mut **b, actor, &key.role_id)?;
        self.check_override_key(&mut **b, key)?;
        let removed = b.delete_override(key)?;
        drop(b);
        if removed {
            self.notify(Invalidation::Override {
                dialog: key.dialog.clone(),
                role_id: key.role_id.clone(),
                language: key.language.clone(),
            });
        }
        Ok(removed)
    }

    pub fn overrides(&self, dialog: &str) -> Result<Vec<PropertyOverride>> {
        let mut b = self.backend.lock();
        self.r(b.overrides(dialog))
    }

    fn check_resolve_args(&self, b: &mut dyn ConfBackend, dialog: &str, user_id: &str, language: &str) -> Result<()> {
        if !is_valid_language(language) {
            return Err(ConfError::Invalid {
                what: "language",
                value: language.to_string(),
            });
        }
        self.require_user(b, user_id)?;
        if self.r(b.dialog_objects(dialog))?.is_empty() {
            return Err(ConfError::UnknownDialog(dialog.to_string()));
        }
        Ok(())
    }

    pub fn resolve_properties(
        &self,
        compiled: &CompiledDialog,
        user_id: &str,
        language: &str,
    ) -> Result<ResolvedDialog> {
        let mut b = self.backend.lock();
        self.check_resolve_args(&mut **b, &compiled.name, user_id, language)?;
        let assignments = self.r(b.assignments(user_id))?;
        let overrides = self.r(b.overrides(&compiled.name))?;
        Ok(resolve::resolve(
            compiled,
            user_id,
            language,
            &self.default_language,
            &assignments,
            &overrides,
        ))
    }

    /// Resolution, rights and the access inputs for one request, from one snapshot.
    pub fn dialog_view(
        &self,
        compiled: &CompiledDialog,
        user_id: &str,
        language: &str,
    ) -> Result<DialogView> {
        let mut b = self.backend.lock();
        self.check_resolve_args(&mut **b, &compiled.name, user_id, language)?;
        let assignments = self.r(b.assignments(user_id))?;
        let overrides = self.r(b.overrides(&compiled.name))?;
        let grants = self.r(b.grants(&compiled.name))?;
        let terminals = self.r(b.terminals(user_id))?;
        drop(b);
        let roles = resolve::roles_by_priority(&assignments);
        Ok(DialogView {
            resolved: resolve::resolve(
                compiled,
                user_id,
                language,
                &self.default_language,
                &assignments,
                &overrides,
            ),
            rights: resolve::object_rights(compiled, &roles, &grants),
            dialog_open: resolve::dialog_open(&roles, &grants),
            terminals,
            roles,
        })
    }

    // ---- access ----

    pub fn grant(&self, dialog: &str, role_id: &str, right: Right, object_id: Option<&str>) -> Result<()> {
        self.put_grant(dialog, role_id, right, object_id, false)
    }

    /// Stores an object-level revocation.
    pub fn revoke(&self, dialog: &str, role_id: &str, right: Right, object_id: &str) -> Result<()> {
        self.put_grant(dialog, role_id, right, Some(object_id), true)
    }

    fn put_grant(
        &self,
        dialog: &str,
        role_id: &str,
        right: Right,
        object_id: Option<&str>,
        negative: bool,
    ) -> Result<()> {
        let mut b = self.backend.lock();
        if self.r(b.role(role_id))?.is_none() {
            return Err(ConfError::UnknownRole(role_id.to_string()));
        }
        b.upsert_grant(&AccessGrant {
            dialog: dialog.to_string(),
            role_id: role_id.to_string(),
            right,
            object_id: object_id.map(str::to_string),
            negative,
        })?;
        drop(b);
        self.notify(Invalidation::Dialog(dialog.to_string()));
        Ok(())
    }

    pub fn bind_terminal(&self, user_id: &str, address: &str) -> Result<bool> {
        let address = parse_terminal(address)?;
        let mut b = self.backend.lock();
        self.require_user(&mut **b, user_id)?;
        let added = b.insert_terminal(user_id, address)?;
        drop(b);
        self.notify(Invalidation::User(user_id.to_string()));
        Ok(added)
    }

    pub fn terminals(&self, user_id: &str) -> Result<Vec<IpAddr>> {
        let mut b = self.backend.lock();
        self.r(b.terminals(user_id))
    }

    /// Terminal check only; used at login.
    pub fn check_terminal(&self, user_id: &str, terminal: IpAddr) -> Result<bool> {
        let terminals = self.terminals(user_id)?;
        Ok(terminals.is_empty() || terminals.contains(&terminal.to_canonical()))
    }

    pub fn check_access(&self, user_id: &str, terminal: IpAddr, dialog: &str) -> Result<AccessDecision> {
        let mut b = self.backend.lock();
        let assignments = self.r(b.assignments(user_id))?;
        if assignments.is_empty() {
            return Err(ConfError::UnknownUser(user_id.to_string()));
        }
        if self.r(b.dialog_objects(dialog))?.is_empty() {
            return Err(ConfError::UnknownDialog(dialog.to_string()));
        }
        let grants = self.r(b.grants(dialog))?;
        let terminals = self.r(b.terminals(user_id))?;
        let roles = resolve::roles_by_priority(&assignments);
        Ok(resolve::access_decision(
            &terminals,
            resolve::dialog_open(&roles, &grants),
            terminal,
        ))
    }

    pub fn effective_object_rights(&self, user_id: &str, compiled: &CompiledDialog) -> Result<RightsMap> {
        let mut b = self.backend.lock();
        let assignments = self.r(b.assignments(user_id))?;
        let grants = self.r(b.grants(&compiled.name))?;
        let roles = resolve::roles_by_priority(&assignments);
        Ok(resolve::object_rights(compiled, &roles, &grants))
    }

    // ---- history and alerts ----

    /// Appends to the history. Callers log failures rather than abort the
    /// action being recorded.
    pub fn record_history(&self, entry: NewHistoryEntry) -> Result<HistoryEntry> {
        self.backend.lock().append_history(&entry, Utc::now())
    }

    pub fn list_history(&self, filter: &HistoryFilter) -> Result<Vec<HistoryEntry>> {
        let mut b = self.backend.lock();
        self.r(b.history(filter))
    }

    pub fn push_alert(&self, user_id: &str, message: &str) -> Result<Alert> {
        let mut b = self.backend.lock();
        self.require_user(&mut **b, user_id)?;
        b.insert_alert(user_id, message, Utc::now())
    }

    /// Undelivered alerts in creation order; each alert is returned exactly once.
    pub fn drain_alerts(&self, user_id: &str) -> Result<Vec<Alert>> {
        let mut b = self.backend.lock();
        self.require_user(&mut **b, user_id)?;
        self.r(b.take_undelivered_alerts(user_id))
    }
}

fn check_value(object_type: ObjectType, property: &str, value: &str) -> Result<()> {
    let bad = |message: &str| {
        Err(ConfError::InvalidValue {
            property: property.to_string(),
            message: message.to_string(),
        })
    };
    match (object_type, property) {
        (ObjectType::Field, "type") if !matches!(value, "text" | "number" | "hidden") => {
            bad("expected text, number or hidden")
        }
        (ObjectType::Field, "required") if !matches!(value, "true" | "false") => {
            bad("expected true or false")
        }
        (ObjectType::Grid, "page-size") if parse_page_size(value).is_none() => {
            bad("expected a positive integer")
        }
        _ => Ok(()),
    }
}

fn constant_time_eq(a: &[u8], b: &[u8]) -> bool {
    a.len() == b.len() && a.iter().zip(b).fold(0u8, |acc, (x, y)| acc | (x ^ y)) == 0
}
