//! Property resolution and object rights, as pure functions over a snapshot
//! of the store.

use std::collections::{BTreeMap, HashMap};
use std::net::IpAddr;

use super::types::{
    AccessDecision, AccessGrant, ObjectRights, PropertyOverride, ResolvedDialog, RightsMap,
    Right, RoleAssignment,
};
use crate::compiler::CompiledDialog;

/// Resolves every property of every object.
///
/// For each (object, property) the first hit wins:
/// 1. the user's auto-role override in the requested language,
/// 2. the other roles' overrides in that language, lowest priority number first,
/// 3. for text properties only, 1 and 2 again with `default_language`,
/// 4. the template default.
///
/// Non-text properties match only overrides stored without a language.
pub fn resolve(
    compiled: &CompiledDialog,
    user_id: &str,
    language: &str,
    default_language: &str,
    assignments: &[RoleAssignment],
    overrides: &[PropertyOverride],
) -> ResolvedDialog {
    let roles = roles_by_priority(assignments);
    let mut table: HashMap<(&str, &str, &str, Option<&str>), &str> = HashMap::new();
    for o in overrides.iter().filter(|o| o.dialog == compiled.name) {
        table.insert(
            (&o.object_id, &o.property, &o.role_id, o.language.as_deref()),
            &o.value,
        );
    }

    let text_languages: Vec<Option<&str>> = if language == default_language {
        vec![Some(language)]
    } else {
        vec![Some(language), Some(default_language)]
    };
    let plain_language: [Option<&str>; 1] = [None];

    let mut values = BTreeMap::new();
    for object in &compiled.objects {
        let mut props = BTreeMap::new();
        for spec in object.object_type.attributes() {
            if spec.name == "id" {
                continue;
            }
            let languages: &[Option<&str>] = if spec.text {
                &text_languages
            } else {
                &plain_language
            };
            let stored = languages.iter().find_map(|&lang| {
                roles.iter().find_map(|role| {
                    table
                        .get(&(object.id.as_str(), spec.name, role.as_str(), lang))
                        .copied()
                })
            });
            let value = stored.or_else(|| object.defaults.get(spec.name).map(String::as_str));
            if let Some(v) = value {
                props.insert(spec.name.to_string(), v.to_string());
            }
        }
        values.insert(object.id.clone(), props);
    }

    ResolvedDialog {
        dialog: compiled.name.clone(),
        user_id: user_id.to_string(),
        language: language.to_string(),
        fingerprint: compiled.fingerprint.clone(),
        values,
    }
}

/// Role ids ordered from highest priority (auto-role) to lowest.
pub fn roles_by_priority(assignments: &[RoleAssignment]) -> Vec<String> {
    let mut sorted: Vec<&RoleAssignment> = assignments.iter().collect();
    sorted.sort_by_key(|a| a.priority);
    sorted.into_iter().map(|a| a.role_id.clone()).collect()
}

pub fn dialog_open(roles: &[String], grants: &[AccessGrant]) -> bool {
    grants.iter().any(|g| {
        g.object_id.is_none() && g.right == Right::Open && !g.negative && roles.contains(&g.role_id)
    })
}

/// Terminal restriction is opt-in: a user without bindings may connect from anywhere.
pub fn access_decision(terminals: &[IpAddr], dialog_open: bool, terminal: IpAddr) -> AccessDecision {
    let terminal = terminal.to_canonical();
    if !terminals.is_empty() && !terminals.contains(&terminal) {
        AccessDecision::DenyTerminal
    } else if !dialog_open {
        AccessDecision::DenyDialog
    } else {
        AccessDecision::Allow
    }
}

/// Object-level rights. Every object starts visible and actionable; an
/// object-scoped record for one of the user's roles decides, the highest
/// priority role with a record winning. Children inherit their parent's
/// restrictions, and an invisible object is never actionable.
pub fn object_rights(
    compiled: &CompiledDialog,
    roles: &[String],
    grants: &[AccessGrant],
) -> RightsMap {
    let decide = |object_id: &str, right: Right| -> bool {
        roles
            .iter()
            .find_map(|role| {
                grants.iter().find(|g| {
                    g.right == right
                        && g.role_id == *role
                        && g.object_id.as_deref() == Some(object_id)
                })
            })
            .is_none_or(|g| !g.negative)
    };

    let mut computed: Vec<ObjectRights> = Vec::with_capacity(compiled.objects.len());
    for object in &compiled.objects {
        let inherited = object.parent.map(|p| computed[p]).unwrap_or(ObjectRights {
            visible: true,
            actionable: true,
        });
        let visible = inherited.visible && decide(&object.id, Right::Open);
        let actionable = visible && inherited.actionable && decide(&object.id, Right::Act);
        computed.push(ObjectRights {
            visible,
            actionable,
        });
    }
    compiled
        .objects
        .iter()
        .zip(computed)
        .map(|(o, r)| (o.id.clone(), r))
        .collect()
}
