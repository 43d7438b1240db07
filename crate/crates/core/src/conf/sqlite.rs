use std::collections::HashSet;
use std::net::IpAddr;
use std::path::Path;
use std::time::Duration;

use chrono::{DateTime, Utc};
use rusqlite::{params, Connection, OptionalExtension, Row, TransactionBehavior};

use super::backend::{BackendResult, ConfBackend};
use super::types::{
    AccessGrant, Alert, DialogObjectRecord, HistoryAction, HistoryEntry, HistoryFilter,
    NewHistoryEntry, OverrideKey, PropertyOverride, PropertyRecord, Right, RoleAssignment,
    RoleRecord, UserRecord,
};
use super::ConfError;

const SCHEMA: &str = r#"
CREATE TABLE IF NOT EXISTS users (
    user_id      TEXT PRIMARY KEY,
    display_name TEXT NOT NULL,
    is_admin     INTEGER NOT NULL,
    secret_hash  TEXT NOT NULL
);
CREATE TABLE IF NOT EXISTS roles (
    role_id TEXT PRIMARY KEY,
    is_auto INTEGER NOT NULL
);
CREATE TABLE IF NOT EXISTS role_assignments (
    user_id  TEXT NOT NULL,
    role_id  TEXT NOT NULL,
    priority INTEGER NOT NULL,
    PRIMARY KEY (user_id, role_id),
    UNIQUE (user_id, priority)
);
CREATE TABLE IF NOT EXISTS overrides (
    dialog    TEXT NOT NULL,
    object_id TEXT NOT NULL,
    property  TEXT NOT NULL,
    role_id   TEXT NOT NULL,
    language  TEXT,
    value     TEXT NOT NULL
);
CREATE UNIQUE INDEX IF NOT EXISTS overrides_key
    ON overrides (dialog, object_id, property, role_id, IFNULL(language, ''));
CREATE TABLE IF NOT EXISTS dialog_objects (
    dialog      TEXT NOT NULL,
    object_id   TEXT NOT NULL,
    object_type TEXT NOT NULL,
    PRIMARY KEY (dialog, object_id)
);
CREATE TABLE IF NOT EXISTS dialog_properties (
    dialog        TEXT NOT NULL,
    object_id     TEXT NOT NULL,
    property_name TEXT NOT NULL,
    default_value TEXT,
    PRIMARY KEY (dialog, object_id, property_name)
);
CREATE TABLE IF NOT EXISTS access_grants (
    dialog    TEXT NOT NULL,
    role_id   TEXT NOT NULL,
    right     TEXT NOT NULL,
    object_id TEXT,
    negative  INTEGER NOT NULL
);
CREATE TABLE IF NOT EXISTS terminal_bindings (
    user_id TEXT NOT NULL,
    address TEXT NOT NULL,
    PRIMARY KEY (user_id, address)
);
CREATE TABLE IF NOT EXISTS history (
    seq      INTEGER PRIMARY KEY AUTOINCREMENT,
    user_id  TEXT NOT NULL,
    terminal TEXT NOT NULL,
    action   TEXT NOT NULL,
    target   TEXT NOT NULL,
    ts       TEXT NOT NULL,
    detail   TEXT NOT NULL
);
CREATE TABLE IF NOT EXISTS alerts (
    alert_id  INTEGER PRIMARY KEY AUTOINCREMENT,
    user_id   TEXT NOT NULL,
    message   TEXT NOT NULL,
    created   TEXT NOT NULL,
    delivered INTEGER NOT NULL
);
"#;

/// Persistent backend in an embedded SQLite file.
pub struct SqliteBackend {
    conn: Connection,
}

impl From<rusqlite::Error> for ConfError {
    fn from(e: rusqlite::Error) -> Self {
        ConfError::Backend(e.to_string())
    }
}

fn corrupt(what: impl std::fmt::Display) -> ConfError {
    ConfError::Backend(format!("corrupt row: {what}"))
}

impl SqliteBackend {
    pub fn open(path: impl AsRef<Path>) -> BackendResult<Self> {
        let conn = Connection::open(path)?;
        conn.busy_timeout(Duration::from_secs(5))?;
        conn.pragma_update(None, "journal_mode", "WAL")?;
        Self::init(conn)
    }

    pub fn open_in_memory() -> BackendResult<Self> {
        Self::init(Connection::open_in_memory()?)
    }

    fn init(conn: Connection) -> BackendResult<Self> {
        conn.execute_batch(SCHEMA)?;
        Ok(SqliteBackend { conn })
    }
}

fn user_from_row(row: &Row<'_>) -> rusqlite::Result<UserRecord> {
    Ok(UserRecord {
        user_id: row.get(0)?,
        display_name: row.get(1)?,
        is_admin: row.get(2)?,
        secret_hash: row.get(3)?,
    })
}

fn parse_time(raw: &str) -> BackendResult<DateTime<Utc>> {
    DateTime::parse_from_rfc3339(raw)
        .map(|t| t.with_timezone(&Utc))
        .map_err(corrupt)
}

fn history_from_row(row: &Row<'_>) -> rusqlite::Result<(i64, String, String, String, String, String, String)> {
    Ok((
        row.get(0)?,
        row.get(1)?,
        row.get(2)?,
        row.get(3)?,
        row.get(4)?,
        row.get(5)?,
        row.get(6)?,
    ))
}

impl ConfBackend for SqliteBackend {
    fn create_user(&mut self, user: &UserRecord) -> BackendResult<()> {
        let tx = self.conn.transaction()?;
        tx.execute(
            "INSERT INTO users (user_id, display_name, is_admin, secret_hash) VALUES (?1, ?2, ?3, ?4)",
            params![user.user_id, user.display_name, user.is_admin, user.secret_hash],
        )?;
        tx.execute(
            "INSERT INTO roles (role_id, is_auto) VALUES (?1, 1)",
            params![user.user_id],
        )?;
        tx.execute(
            "INSERT INTO role_assignments (user_id, role_id, priority) VALUES (?1, ?1, 0)",
            params![user.user_id],
        )?;
        tx.commit()?;
        Ok(())
    }

    fn user(&mut self, user_id: &str) -> BackendResult<Option<UserRecord>> {
        Ok(self
            .conn
            .query_row(
                "SELECT user_id, display_name, is_admin, secret_hash FROM users WHERE user_id = ?1",
                params![user_id],
                user_from_row,
            )
            .optional()?)
    }

    fn insert_role(&mut self, role: &RoleRecord) -> BackendResult<()> {
        self.conn.execute(
            "INSERT INTO roles (role_id, is_auto) VALUES (?1, ?2)",
            params![role.role_id, role.is_auto],
        )?;
        Ok(())
    }

    fn role(&mut self, role_id: &str) -> BackendResult<Option<RoleRecord>> {
        Ok(self
            .conn
            .query_row(
                "SELECT role_id, is_auto FROM roles WHERE role_id = ?1",
                params![role_id],
                |row| {
                    Ok(RoleRecord {
                        role_id: row.get(0)?,
                        is_auto: row.get(1)?,
                    })
                },
            )
            .optional()?)
    }

    fn insert_assignment(&mut self, assignment: &RoleAssignment) -> BackendResult<()> {
        self.conn.execute(
            "INSERT INTO role_assignments (user_id, role_id, priority) VALUES (?1, ?2, ?3)",
            params![assignment.user_id, assignment.role_id, assignment.priority],
        )?;
        Ok(())
    }

    fn remove_assignment(&mut self, user_id: &str, role_id: &str) -> BackendResult<bool> {
        let n = self.conn.execute(
            "DELETE FROM role_assignments WHERE user_id = ?1 AND role_id = ?2",
            params![user_id, role_id],
        )?;
        Ok(n > 0)
    }

    fn assignments(&mut self, user_id: &str) -> BackendResult<Vec<RoleAssignment>> {
        let mut stmt = self.conn.prepare_cached(
            "SELECT user_id, role_id, priority FROM role_assignments WHERE user_id = ?1 ORDER BY priority",
        )?;
        let rows = stmt.query_map(params![user_id], |row| {
            Ok(RoleAssignment {
                user_id: row.get(0)?,
                role_id: row.get(1)?,
                priority: row.get(2)?,
            })
        })?;
        Ok(rows.collect::<Result<_, _>>()?)
    }

    fn upsert_override(&mut self, value: &PropertyOverride) -> BackendResult<()> {
        let tx = self.conn.transaction()?;
        tx.execute(
            "DELETE FROM overrides WHERE dialog = ?1 AND object_id = ?2 AND property = ?3 AND role_id = ?4 AND language IS ?5",
            params![value.dialog, value.object_id, value.property, value.role_id, value.language],
        )?;
        tx.execute(
            "INSERT INTO overrides (dialog, object_id, property, role_id, language, value) VALUES (?1, ?2, ?3, ?4, ?5, ?6)",
            params![value.dialog, value.object_id, value.property, value.role_id, value.language, value.value],
        )?;
        tx.commit()?;
        Ok(())
    }

    fn delete_override(&mut self, key: &OverrideKey) -> BackendResult<bool> {
        let n = self.conn.execute(
            "DELETE FROM overrides WHERE dialog = ?1 AND object_id = ?2 AND property = ?3 AND role_id = ?4 AND language IS ?5",
            params![key.dialog, key.object_id, key.property, key.role_id, key.language],
        )?;
        Ok(n > 0)
    }

    fn overrides(&mut self, dialog: &str) -> BackendResult<Vec<PropertyOverride>> {
        let mut stmt = self.conn.prepare_cached(
            "SELECT dialog, object_id, property, role_id, language, value FROM overrides WHERE dialog = ?1
             ORDER BY object_id, property, role_id, language",
        )?;
        let rows = stmt.query_map(params![dialog], |row| {
            Ok(PropertyOverride {
                dialog: row.get(0)?,
                object_id: row.get(1)?,
                property: row.get(2)?,
                role_id: row.get(3)?,
                language: row.get(4)?,
                value: row.get(5)?,
            })
        })?;
        Ok(rows.collect::<Result<_, _>>()?)
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

        let tx = self.conn.transaction()?;
        let existing: Vec<String> = {
            let mut stmt = tx.prepare("SELECT object_id FROM dialog_objects WHERE dialog = ?1 ORDER BY object_id")?;
            let rows = stmt.query_map(params![dialog], |row| row.get(0))?;
            rows.collect::<Result<_, _>>()?
        };
        let removed: Vec<String> = existing
            .into_iter()
            .filter(|id| !keep_objects.contains(id.as_str()))
            .collect();

        let stale_overrides: Vec<(String, String)> = {
            let mut stmt = tx.prepare("SELECT DISTINCT object_id, property FROM overrides WHERE dialog = ?1")?;
            let rows = stmt.query_map(params![dialog], |row| Ok((row.get(0)?, row.get(1)?)))?;
            rows.collect::<Result<Vec<(String, String)>, _>>()?
                .into_iter()
                .filter(|(o, p)| !keep_props.contains(&(o.as_str(), p.as_str())))
                .collect()
        };
        for (object_id, property) in &stale_overrides {
            tx.execute(
                "DELETE FROM overrides WHERE dialog = ?1 AND object_id = ?2 AND property = ?3",
                params![dialog, object_id, property],
            )?;
        }
        let grant_objects: Vec<String> = {
            let mut stmt = tx.prepare(
                "SELECT DISTINCT object_id FROM access_grants WHERE dialog = ?1 AND object_id IS NOT NULL",
            )?;
            let rows = stmt.query_map(params![dialog], |row| row.get(0))?;
            rows.collect::<Result<_, _>>()?
        };
        for object_id in grant_objects.iter().filter(|o| !keep_objects.contains(o.as_str())) {
            tx.execute(
                "DELETE FROM access_grants WHERE dialog = ?1 AND object_id = ?2",
                params![dialog, object_id],
            )?;
        }

        tx.execute("DELETE FROM dialog_objects WHERE dialog = ?1", params![dialog])?;
        tx.execute("DELETE FROM dialog_properties WHERE dialog = ?1", params![dialog])?;
        for object in objects {
            tx.execute(
                "INSERT INTO dialog_objects (dialog, object_id, object_type) VALUES (?1, ?2, ?3)",
                params![dialog, object.object_id, object.object_type.as_str()],
            )?;
            for property in &object.properties {
                tx.execute(
                    "INSERT INTO dialog_properties (dialog, object_id, property_name, default_value) VALUES (?1, ?2, ?3, ?4)",
                    params![dialog, object.object_id, property.name, property.default],
                )?;
            }
        }
        tx.commit()?;
        Ok(removed)
    }

    fn dialog_objects(&mut self, dialog: &str) -> BackendResult<Vec<DialogObjectRecord>> {
        let mut stmt = self.conn.prepare_cached(
            "SELECT o.object_id, o.object_type, p.property_name, p.default_value
             FROM dialog_objects o
             LEFT JOIN dialog_properties p ON p.dialog = o.dialog AND p.object_id = o.object_id
             WHERE o.dialog = ?1
             ORDER BY o.object_id, p.property_name",
        )?;
        let rows = stmt.query_map(params![dialog], |row| {
            Ok((
                row.get::<_, String>(0)?,
                row.get::<_, String>(1)?,
                row.get::<_, Option<String>>(2)?,
                row.get::<_, Option<String>>(3)?,
            ))
        })?;
        let mut out: Vec<DialogObjectRecord> = Vec::new();
        for row in rows {
            let (object_id, object_type, property, default) = row?;
            if out.last().is_none_or(|o| o.object_id != object_id) {
                out.push(DialogObjectRecord {
                    object_id,
                    object_type: object_type.parse().map_err(corrupt)?,
                    properties: Vec::new(),
                });
            }
            if let Some(name) = property {
                out.last_mut()
                    .expect("pushed above")
                    .properties
                    .push(PropertyRecord { name, default });
            }
        }
        Ok(out)
    }

    fn upsert_grant(&mut self, grant: &AccessGrant) -> BackendResult<()> {
        let tx = self.conn.transaction()?;
        tx.execute(
            "DELETE FROM access_grants WHERE dialog = ?1 AND role_id = ?2 AND right = ?3 AND object_id IS ?4",
            params![grant.dialog, grant.role_id, grant.right.as_str(), grant.object_id],
        )?;
        tx.execute(
            "INSERT INTO access_grants (dialog, role_id, right, object_id, negative) VALUES (?1, ?2, ?3, ?4, ?5)",
            params![grant.dialog, grant.role_id, grant.right.as_str(), grant.object_id, grant.negative],
        )?;
        tx.commit()?;
        Ok(())
    }

    fn grants(&mut self, dialog: &str) -> BackendResult<Vec<AccessGrant>> {
        let mut stmt = self.conn.prepare_cached(
            "SELECT dialog, role_id, right, object_id, negative FROM access_grants WHERE dialog = ?1 ORDER BY rowid",
        )?;
        let rows = stmt.query_map(params![dialog], |row| {
            Ok((
                row.get::<_, String>(0)?,
                row.get::<_, String>(1)?,
                row.get::<_, String>(2)?,
                row.get::<_, Option<String>>(3)?,
                row.get::<_, bool>(4)?,
            ))
        })?;
        rows.map(|row| {
            let (dialog, role_id, right, object_id, negative) = row?;
            Ok(AccessGrant {
                dialog,
                role_id,
                right: right.parse::<Right>().map_err(corrupt)?,
                object_id,
                negative,
            })
        })
        .collect()
    }

    fn insert_terminal(&mut self, user_id: &str, address: IpAddr) -> BackendResult<bool> {
        let n = self.conn.execute(
            "INSERT OR IGNORE INTO terminal_bindings (user_id, address) VALUES (?1, ?2)",
            params![user_id, address.to_string()],
        )?;
        Ok(n > 0)
    }

    fn terminals(&mut self, user_id: &str) -> BackendResult<Vec<IpAddr>> {
        let mut stmt = self.conn.prepare_cached(
            "SELECT address FROM terminal_bindings WHERE user_id = ?1 ORDER BY address",
        )?;
        let rows = stmt.query_map(params![user_id], |row| row.get::<_, String>(0))?;
        rows.map(|raw| raw?.parse::<IpAddr>().map_err(corrupt))
            .collect()
    }

    fn append_history(
        &mut self,
        entry: &NewHistoryEntry,
        at: DateTime<Utc>,
    ) -> BackendResult<HistoryEntry> {
        self.conn.execute(
            "INSERT INTO history (user_id, terminal, action, target, ts, detail) VALUES (?1, ?2, ?3, ?4, ?5, ?6)",
            params![
                entry.user_id,
                entry.terminal,
                entry.action.as_str(),
                entry.target,
                at.to_rfc3339(),
                entry.detail
            ],
        )?;
        Ok(HistoryEntry {
            seq: self.conn.last_insert_rowid() as u64,
            user_id: entry.user_id.clone(),
            terminal: entry.terminal.clone(),
            action: entry.action,
            target: entry.target.clone(),
            timestamp: at,
            detail: entry.detail.clone(),
        })
    }

    fn history(&mut self, filter: &HistoryFilter) -> BackendResult<Vec<HistoryEntry>> {
        let mut stmt = self.conn.prepare_cached(
            "SELECT seq, user_id, terminal, action, target, ts, detail FROM history
             WHERE (?1 IS NULL OR user_id = ?1) AND (?2 IS NULL OR action = ?2)
             ORDER BY seq",
        )?;
        let rows = stmt.query_map(
            params![filter.user, filter.action.map(HistoryAction::as_str)],
            history_from_row,
        )?;
        let mut out = Vec::new();
        for row in rows {
            let (seq, user_id, terminal, action, target, ts, detail) = row?;
            let entry = HistoryEntry {
                seq: seq as u64,
                user_id,
                terminal,
                action: action.parse().map_err(corrupt)?,
                target,
                timestamp: parse_time(&ts)?,
                detail,
            };
            if filter.matches(&entry) {
                out.push(entry);
            }
        }
        Ok(out)
    }

    fn insert_alert(
        &mut self,
        user_id: &str,
        message: &str,
        at: DateTime<Utc>,
    ) -> BackendResult<Alert> {
        self.conn.execute(
            "INSERT INTO alerts (user_id, message, created, delivered) VALUES (?1, ?2, ?3, 0)",
            params![user_id, message, at.to_rfc3339()],
        )?;
        Ok(Alert {
            alert_id: self.conn.last_insert_rowid() as u64,
            user_id: user_id.to_string(),
            message: message.to_string(),
            created: at,
            delivered: false,
        })
    }

    fn take_undelivered_alerts(&mut self, user_id: &str) -> BackendResult<Vec<Alert>> {
        // Immediate: another process draining the same user must wait, not race.
        let tx = self
            .conn
            .transaction_with_behavior(TransactionBehavior::Immediate)?;
        let pending = {
            let mut stmt = tx.prepare(
                "SELECT alert_id, user_id, message, created FROM alerts
                 WHERE user_id = ?1 AND delivered = 0 ORDER BY alert_id",
            )?;
            let rows = stmt.query_map(params![user_id], |row| {
                Ok((
                    row.get::<_, i64>(0)?,
                    row.get::<_, String>(1)?,
                    row.get::<_, String>(2)?,
                    row.get::<_, String>(3)?,
                ))
            })?;
            rows.collect::<Result<Vec<_>, _>>()?
        };
        let mut taken = Vec::with_capacity(pending.len());
        for (alert_id, user_id, message, created) in pending {
            tx.execute(
                "UPDATE alerts SET delivered = 1 WHERE alert_id = ?1",
                params![alert_id],
            )?;
            taken.push(Alert {
                alert_id: alert_id as u64,
                user_id,
                message,
                created: parse_time(&created)?,
                delivered: true,
            });
        }
        tx.commit()?;
        Ok(taken)
    }
}
