use std::collections::{BTreeMap, HashMap, HashSet};
use std::net::IpAddr;

use chrono::{DateTime, Utc};

use super::backend::{BackendResult, ConfBackend};
use super::types::{
    AccessGrant, Alert, DialogObjectRecord, HistoryEntry, HistoryFilter, NewHistoryEntry,
    OverrideKey, PropertyOverride, RoleAssignment, RoleRecord, UserRecord,
};

/// Volatile backend, mostly for tests.
#[derive(Debug, Default)]
pub struct MemoryBackend {
    users: HashMap<String, UserRecord>,
    roles: HashMap<String, RoleRecord>,
    assignments: Vec<RoleAssignment>,
    overrides: BTreeMap<OverrideKey, String>,
    dialog_objects: HashMap<String, Vec<DialogObjectRecord>>,
    grants: Vec<AccessGrant>,
    terminals: Vec<(String, IpAddr)>,
    history: Vec<HistoryEntry>,
    alerts: Vec<Alert>,
}

impl MemoryBackend {
    pub fn new() -> Self {
        Self::default()
    }
}

impl ConfBackend for MemoryBackend {
    fn create_user(&mut self, user: &UserRecord) -> BackendResult<()> {
        self.users.insert(user.user_id.clone(), user.clone());
        self.roles.insert(
            user.user_id.clone(),
            RoleRecord {
                role_id: user.user_id.clone(),
                is_auto: true,
            },
        );
        self.assignments.push(RoleAssignment {
            user_id: user.user_id.clone(),
            role_id: user.user_id.clone(),
            priority: 0,
        });
        Ok(())
    }

    fn user(&mut self, user_id: &str) -> BackendResult<Option<UserRecord>> {
        Ok(self.users.get(user_id).cloned())
    }

    fn insert_role(&mut self, role: &RoleRecord) -> BackendResult<()> {
        self.roles.insert(role.role_id.clone(), role.clone());
        Ok(())
    }

    fn role(&mut self, role_id: &str) -> BackendResult<Option<RoleRecord>> {
        Ok(self.roles.get(role_id).cloned())
    }

    fn insert_assignment(&mut self, assignment: &RoleAssignment) -> BackendResult<()> {
        self.assignments.push(assignment.clone());
        Ok(())
    }

    fn remove_assignment(&mut self, user_id: &str, role_id: &str) -> BackendResult<bool> {
        let before = self.assignments.len();
        self.assignments
            .retain(|a| !(a.user_id == user_id && a.role_id == role_id));
        Ok(self.assignments.len() != before)
    }

    fn assignments(&mut self, user_id: &str) -> BackendResult<Vec<RoleAssignment>> {
        let mut v: Vec<RoleAssignment> = self
            .assignments
            .iter()
            .filter(|a| a.user_id == user_id)
            .cloned()
            .collect();
        v.sort_by_key(|a| a.priority);
        Ok(v)
    }

    fn upsert_override(&mut self, value: &PropertyOverride) -> BackendResult<()> {
        self.overrides.insert(value.key(), value.value.clone());
        Ok(())
    }

    fn delete_override(&mut self, key: &OverrideKey) -> BackendResult<bool> {
        Ok(self.overrides.remove(key).is_some())
    }

    fn overrides(&mut self, dialog: &str) -> BackendResult<Vec<PropertyOverride>> {
        Ok(self
            .overrides
            .iter()
            .filter(|(k, _)| k.dialog == dialog)
            .map(|(k, v)| PropertyOverride {
                dialog: k.dialog.clone(),
                object_id: k.object_id.clone(),
                property: k.property.clone(),
                role_id: k.role_id.clone(),
                language: k.language.clone(),
                value: v.clone(),
            })
            .collect())
    }

    fn replace_dialog_objects(
        &mut self,
        dialog: &str,
        objects: &[DialogObjectRecord],
    ) -> BackendResult<Vec<String>> {
        let keep_objects: HashSet<&str> = objects.iter().map(|o| o.object_id.as_str()).collect();
        let keep_props: HashSet<(&str, &str)> = objects
            .iter()
            .flat_map(|o| o.properties.iter().map(move |p| (o.object_id.as_str(), p.name.as_str())))
            .collect();
        let mut removed: Vec<String> = self
            .dialog_objects
            .get(dialog)
            .into_iter()
            .flatten()
            .filter(|o| !keep_objects.contains(o.object_id.as_str()))
            .map(|o| o.object_id.clone())
            .collect();
        removed.sort();
        self.overrides.retain(|k, _| {
            k.dialog != dialog || keep_props.contains(&(k.object_id.as_str(), k.property.as_str()))
        });
        self.grants.retain(|g| {
            g.dialog != dialog
                || g.object_id
                    .as_deref()
                    .is_none_or(|o| keep_objects.contains(o))
        });
        self.dialog_objects
            .insert(dialog.to_string(), objects.to_vec());
        Ok(removed)
    }

    fn dialog_objects(&mut self, dialog: &str) -> BackendResult<Vec<DialogObjectRecord>> {
        Ok(self.dialog_objects.get(dialog).cloned().unwrap_or_default())
    }

    fn upsert_grant(&mut self, grant: &AccessGrant) -> BackendResult<()> {
        self.grants.retain(|g| !g.same_target(grant));
        self.grants.push(grant.clone());
        Ok(())
    }

    fn grants(&mut self, dialog: &str) -> BackendResult<Vec<AccessGrant>> {
        Ok(self
            .grants
            .iter()
            .filter(|g| g.dialog == dialog)
            .cloned()
            .collect())
    }

    fn insert_terminal(&mut self, user_id: &str, address: IpAddr) -> BackendResult<bool> {
        if self
            .terminals
            .iter()
            .any(|(u, a)| u == user_id && *a == address)
        {
            return Ok(false);
        }
        self.terminals.push((user_id.to_string(), address));
        Ok(true)
    }

    fn terminals(&mut self, user_id: &str) -> BackendResult<Vec<IpAddr>> {
        Ok(self
            .terminals
            .iter()
            .filter(|(u, _)| u == user_id)
            .map(|(_, a)| *a)
            .collect())
    }

    fn append_history(
        &mut self,
        entry: &NewHistoryEntry,
        at: DateTime<Utc>,
    ) -> BackendResult<HistoryEntry> {
        let stored = HistoryEntry {
            seq: self.history.len() as u64 + 1,
            user_id: entry.user_id.clone(),
            terminal: entry.terminal.clone(),
            action: entry.action,
            target: entry.target.clone(),
            timestamp: at,
            detail: entry.detail.clone(),
        };
        self.history.push(stored.clone());
        Ok(stored)
    }

    fn history(&mut self, filter: &HistoryFilter) -> BackendResult<Vec<HistoryEntry>> {
        Ok(self
            .history
            .iter()
            .filter(|e| filter.matches(e))
            .cloned()
            .collect())
    }

    fn insert_alert(
        &mut self,
        user_id: &str,
        message: &str,
        at: DateTime<Utc>,
    ) -> BackendResult<Alert> {
        let alert = Alert {
            alert_id: self.alerts.len() as u64 + 1,
            user_id: user_id.to_string(),
            message: message.to_string(),
            created: at,
            delivered: false,
        };
        self.alerts.push(alert.clone());
        Ok(alert)
    }

    fn take_undelivered_alerts(&mut self, user_id: &str) -> BackendResult<Vec<Alert>> {
        let mut taken = Vec::new();
        for alert in self
            .alerts
            .iter_mut()
            .filter(|a| a.user_id == user_id && !a.delivered)
        {
            alert.delivered = true;
            taken.push(alert.clone());
        }
        Ok(taken)
    }
}
