use std::net::IpAddr;

use chrono::{DateTime, Utc};

use super::types::{
    AccessGrant, Alert, DialogObjectRecord, HistoryEntry, HistoryFilter, NewHistoryEntry,
    OverrideKey, PropertyOverride, RoleAssignment, RoleRecord, UserRecord,
};
use super::ConfError;

pub type BackendResult<T> = Result<T, ConfError>;

/// Storage behind [`ConfStore`](super::ConfStore).
///
/// Backends are dumb tables: validation, permissions and resolution live in
/// the store. Methods that touch several tables must apply atomically.
pub trait ConfBackend: Send {
    /// Inserts the user, its auto-role and the priority-0 assignment.
    fn create_user(&mut self, user: &UserRecord) -> BackendResult<()>;
    fn user(&mut self, user_id: &str) -> BackendResult<Option<UserRecord>>;

    fn insert_role(&mut self, role: &RoleRecord) -> BackendResult<()>;
    fn role(&mut self, role_id: &str) -> BackendResult<Option<RoleRecord>>;

    fn insert_assignment(&mut self, assignment: &RoleAssignment) -> BackendResult<()>;
    fn remove_assignment(&mut self, user_id: &str, role_id: &str) -> BackendResult<bool>;
    /// Ordered by priority.
    fn assignments(&mut self, user_id: &str) -> BackendResult<Vec<RoleAssignment>>;

    fn upsert_override(&mut self, value: &PropertyOverride) -> BackendResult<()>;
    fn delete_override(&mut self, key: &OverrideKey) -> BackendResult<bool>;
    fn overrides(&mut self, dialog: &str) -> BackendResult<Vec<PropertyOverride>>;

    /// Replaces the registered objects of a dialog. Overrides and object
    /// grants whose object (or overridden property) no longer exists are
    /// deleted. Returns the ids of removed objects.
    fn replace_dialog_objects(
        &mut self,
        dialog: &str,
        objects: &[DialogObjectRecord],
    ) -> BackendResult<Vec<String>>;
    fn dialog_objects(&mut self, dialog: &str) -> BackendResult<Vec<DialogObjectRecord>>;

    /// Replaces any grant with the same (dialog, role, right, object).
    fn upsert_grant(&mut self, grant: &AccessGrant) -> BackendResult<()>;
    fn grants(&mut self, dialog: &str) -> BackendResult<Vec<AccessGrant>>;

    /// Returns false if the binding already existed.
    fn insert_terminal(&mut self, user_id: &str, address: IpAddr) -> BackendResult<bool>;
    fn terminals(&mut self, user_id: &str) -> BackendResult<Vec<IpAddr>>;

    fn append_history(
        &mut self,
        entry: &NewHistoryEntry,
        at: DateTime<Utc>,
    ) -> BackendResult<HistoryEntry>;
    fn history(&mut self, filter: &HistoryFilter) -> BackendResult<Vec<HistoryEntry>>;

    fn insert_alert(
        &mut self,
        user_id: &str,
        message: &str,
        at: DateTime<Utc>,
    ) -> BackendResult<Alert>;
    /// Returns undelivered alerts in creation order and marks them delivered.
    fn take_undelivered_alerts(&mut self, user_id: &str) -> BackendResult<Vec<Alert>>;
}
