use std::collections::BTreeMap;
use std::fmt;
use std::net::IpAddr;
use std::str::FromStr;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::dml::ObjectType;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct UserRecord {
    pub user_id: String,
    pub display_name: String,
    pub is_admin: bool,
    #[serde(skip)]
    pub secret_hash: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RoleRecord {
    pub role_id: String,
    pub is_auto: bool,
}

/// Lower priority number wins; 0 belongs to the user's auto-role.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RoleAssignment {
    pub user_id: String,
    pub role_id: String,
    pub priority: u32,
}

/// The unique key of a stored override.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct OverrideKey {
    pub dialog: String,
    pub object_id: String,
    pub property: String,
    pub role_id: String,
    pub language: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PropertyOverride {
    pub dialog: String,
    pub object_id: String,
    pub property: String,
    pub role_id: String,
    pub language: Option<String>,
    pub value: String,
}

impl PropertyOverride {
    pub fn key(&self) -> OverrideKey {
        OverrideKey {
            dialog: self.dialog.clone(),
            object_id: self.object_id.clone(),
            property: self.property.clone(),
            role_id: self.role_id.clone(),
            language: self.language.clone(),
        }
    }

    pub fn matches(&self, key: &OverrideKey) -> bool {
        self.dialog == key.dialog
            && self.object_id == key.object_id
            && self.property == key.property
            && self.role_id == key.role_id
            && self.language == key.language
    }
}

/// A registered object and its overridable properties with template defaults.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DialogObjectRecord {
    pub object_id: String,
    pub object_type: ObjectType,
    pub properties: Vec<PropertyRecord>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PropertyRecord {
    pub name: String,
    pub default: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Registration {
    pub dialog: String,
    pub objects: usize,
    pub removed_objects: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Right {
    Open,
    Act,
}

impl Right {
    pub fn as_str(self) -> &'static str {
        match self {
            Right::Open => "open",
            Right::Act => "act",
        }
    }
}

impl FromStr for Right {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "open" => Ok(Right::Open),
            "act" => Ok(Right::Act),
            other => Err(format!("unknown right `{other}`")),
        }
    }
}

/// A grant (or, with `negative`, a revocation) of a right to a role.
/// `object_id: None` scopes it to the whole dialog.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AccessGrant {
    pub dialog: String,
    pub role_id: String,
    pub right: Right,
    pub object_id: Option<String>,
    pub negative: bool,
}

impl AccessGrant {
    pub fn same_target(&self, other: &AccessGrant) -> bool {
        self.dialog == other.dialog
            && self.role_id == other.role_id
            && self.right == other.right
            && self.object_id == other.object_id
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum AccessDecision {
    Allow,
    DenyDialog,
    DenyTerminal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ObjectRights {
    pub visible: bool,
    pub actionable: bool,
}

pub type RightsMap = BTreeMap<String, ObjectRights>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HistoryAction {
    OpenDialog,
    InvokeAction,
    SetOverride,
    SaveDialog,
    Login,
}

impl HistoryAction {
    pub fn as_str(self) -> &'static str {
        match self {
            HistoryAction::OpenDialog => "open-dialog",
            HistoryAction::InvokeAction => "invoke-action",
            HistoryAction::SetOverride => "set-override",
            HistoryAction::SaveDialog => "save-dialog",
            HistoryAction::Login => "login",
        }
    }
}

impl fmt::Display for HistoryAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for HistoryAction {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        [
            HistoryAction::OpenDialog,
            HistoryAction::InvokeAction,
            HistoryAction::SetOverride,
            HistoryAction::SaveDialog,
            HistoryAction::Login,
        ]
        .into_iter()
        .find(|a| a.as_str() == s)
        .ok_or_else(|| format!("unknown history action `{s}`"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct HistoryEntry {
    pub seq: u64,
    pub user_id: String,
    pub terminal: String,
    pub action: HistoryAction,
    /// `dialog`, `dialog/object` or `dialog/object/property`.
    pub target: String,
    pub timestamp: DateTime<Utc>,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NewHistoryEntry {
    pub user_id: String,
    pub terminal: String,
    pub action: HistoryAction,
    pub target: String,
    pub detail: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Deserialize)]
pub struct HistoryFilter {
    pub dialog: Option<String>,
    pub user: Option<String>,
    pub action: Option<HistoryAction>,
}

impl HistoryFilter {
    pub fn matches(&self, entry: &HistoryEntry) -> bool {
        self.user.as_ref().is_none_or(|u| *u == entry.user_id)
            && self.action.is_none_or(|a| a == entry.action)
            && self.dialog.as_ref().is_none_or(|d| {
                entry.target == *d
                    || entry
                        .target
                        .strip_prefix(d.as_str())
                        .is_some_and(|rest| rest.starts_with('/'))
            })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Alert {
    pub alert_id: u64,
    pub user_id: String,
    pub message: String,
    pub created: DateTime<Utc>,
    pub delivered: bool,
}

/// Fully resolved property values of one dialog for one user and language.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ResolvedDialog {
    pub dialog: String,
    pub user_id: String,
    pub language: String,
    pub fingerprint: String,
    /// object id -> property -> value. Properties without any value are absent.
    pub values: BTreeMap<String, BTreeMap<String, String>>,
}

impl ResolvedDialog {
    pub fn get(&self, object_id: &str, property: &str) -> Option<&str> {
        self.values.get(object_id)?.get(property).map(String::as_str)
    }
}

/// Everything the service needs to open a dialog, read under one lock.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DialogView {
    pub resolved: ResolvedDialog,
    pub rights: RightsMap,
    /// Whether any of the user's roles holds a dialog-level open grant.
    pub dialog_open: bool,
    pub terminals: Vec<IpAddr>,
    /// The user's roles, highest priority first.
    pub roles: Vec<String>,
}

impl DialogView {
    pub fn access(&self, terminal: IpAddr) -> AccessDecision {
        super::resolve::access_decision(&self.terminals, self.dialog_open, terminal)
    }
}

/// Which cached resolutions a write may have made stale.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Invalidation {
    Override {
        dialog: String,
        role_id: String,
        language: Option<String>,
    },
    Dialog(String),
    User(String),
}
