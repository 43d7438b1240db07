//! The fixed tag vocabulary: object types, their attributes, and which
//! children each type may contain.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ObjectType {
    Dialog,
    Form,
    Grid,
    Label,
    Field,
    Select,
    Button,
    Column,
}

/// How an attribute obtains a value when the template does not set it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ImplicitDefault {
    None,
    Literal(&'static str),
    /// Copy the value of another attribute of the same object.
    CopyOf(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AttributeSpec {
    pub name: &'static str,
    pub required: bool,
    /// Language-dependent display text.
    pub text: bool,
    /// Whether the configuration store may override the value per role.
    /// Structural attributes (ids, queries, actions, bindings) never are.
    pub overridable: bool,
    pub default: ImplicitDefault,
}

const fn attr(
    name: &'static str,
    required: bool,
    text: bool,
    overridable: bool,
    default: ImplicitDefault,
) -> AttributeSpec {
    AttributeSpec {
        name,
        required,
        text,
        overridable,
        default,
    }
}

use ImplicitDefault::{CopyOf, Literal};
const NO_DEFAULT: ImplicitDefault = ImplicitDefault::None;

const ID: AttributeSpec = attr("id", true, false, false, NO_DEFAULT);

const DIALOG_ATTRS: &[AttributeSpec] = &[ID, attr("title", false, true, true, CopyOf("id"))];
const FORM_ATTRS: &[AttributeSpec] = &[ID, attr("action", true, false, false, NO_DEFAULT)];
const LABEL_ATTRS: &[AttributeSpec] = &[ID, attr("text", true, true, true, NO_DEFAULT)];
const FIELD_ATTRS: &[AttributeSpec] = &[
    ID,
    attr("label", false, true, true, NO_DEFAULT),
    attr("type", false, false, true, Literal("text")),
    attr("value", false, false, true, NO_DEFAULT),
    attr("required", false, false, true, Literal("false")),
    attr("bind", false, false, false, NO_DEFAULT),
];
const SELECT_ATTRS: &[AttributeSpec] = &[
    ID,
    attr("label", false, true, true, NO_DEFAULT),
    attr("source", true, false, false, NO_DEFAULT),
    attr("bind", false, false, false, NO_DEFAULT),
];
const BUTTON_ATTRS: &[AttributeSpec] = &[
    ID,
    attr("text", true, true, true, NO_DEFAULT),
    attr("action", true, false, false, NO_DEFAULT),
];
const GRID_ATTRS: &[AttributeSpec] = &[
    ID,
    attr("source", true, false, false, NO_DEFAULT),
    attr("page-size", false, false, true, Literal("20")),
];
const COLUMN_ATTRS: &[AttributeSpec] = &[
    ID,
    attr("field", true, false, false, NO_DEFAULT),
    attr("header", false, true, true, CopyOf("field")),
];

impl ObjectType {
    pub const ALL: [ObjectType; 8] = [
        ObjectType::Dialog,
        ObjectType::Form,
        ObjectType::Grid,
        ObjectType::Label,
        ObjectType::Field,
        ObjectType::Select,
        ObjectType::Button,
        ObjectType::Column,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ObjectType::Dialog => "dialog",
            ObjectType::Form => "form",
            ObjectType::Grid => "grid",
            ObjectType::Label => "label",
            ObjectType::Field => "field",
            ObjectType::Select => "select",
            ObjectType::Button => "button",
            ObjectType::Column => "column",
        }
    }

    pub fn attributes(self) -> &'static [AttributeSpec] {
        match self {
            ObjectType::Dialog => DIALOG_ATTRS,
            ObjectType::Form => FORM_ATTRS,
            ObjectType::Grid => GRID_ATTRS,
            ObjectType::Label => LABEL_ATTRS,
            ObjectType::Field => FIELD_ATTRS,
            ObjectType::Select => SELECT_ATTRS,
            ObjectType::Button => BUTTON_ATTRS,
            ObjectType::Column => COLUMN_ATTRS,
        }
    }

    pub fn attribute(self, name: &str) -> Option<&'static AttributeSpec> {
        self.attributes().iter().find(|a| a.name == name)
    }

    pub fn allowed_children(self) -> &'static [ObjectType] {
        match self {
            ObjectType::Dialog => &[ObjectType::Form, ObjectType::Grid, ObjectType::Label],
            ObjectType::Form => &[
                ObjectType::Label,
                ObjectType::Field,
                ObjectType::Select,
                ObjectType::Button,
            ],
            ObjectType::Grid => &[ObjectType::Column],
            _ => &[],
        }
    }

    pub fn allows_child(self, child: ObjectType) -> bool {
        self.allowed_children().contains(&child)
    }

    /// Whether `property` is a language-dependent text attribute of this type.
    pub fn is_text_property(self, property: &str) -> bool {
        self.attribute(property).is_some_and(|a| a.text)
    }

    /// The value an attribute takes given the attributes the template set.
    pub fn effective_default<'a>(
        self,
        property: &str,
        id: &'a str,
        explicit: &'a std::collections::BTreeMap<String, String>,
    ) -> Option<&'a str> {
        if property == "id" {
            return Some(id);
        }
        if let Some(v) = explicit.get(property) {
            return Some(v.as_str());
        }
        match self.attribute(property)?.default {
            ImplicitDefault::None => None,
            ImplicitDefault::Literal(v) => Some(v),
            ImplicitDefault::CopyOf(other) => self.effective_default(other, id, explicit),
        }
    }
}

impl fmt::Display for ObjectType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown object type `{0}`")]
pub struct UnknownObjectType(pub String);

impl FromStr for ObjectType {
    type Err = UnknownObjectType;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ObjectType::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| UnknownObjectType(s.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeMap;

    #[test]
    fn every_type_declares_a_required_id() {
        for t in ObjectType::ALL {
            let id = t.attribute("id").unwrap();
            assert!(id.required && !id.overridable, "{t}");
        }
    }

    #[test]
    fn text_properties_match_the_starred_attributes() {
        let mut text: Vec<(ObjectType, &str)> = Vec::new();
        for t in ObjectType::ALL {
            for a in t.attributes().iter().filter(|a| a.text) {
                text.push((t, a.name));
            }
        }
        assert_eq!(
            text,
            vec![
                (ObjectType::Dialog, "title"),
                (ObjectType::Label, "text"),
                (ObjectType::Field, "label"),
                (ObjectType::Select, "label"),
                (ObjectType::Button, "text"),
                (ObjectType::Column, "header"),
            ]
        );
    }

    #[test]
    fn implicit_defaults() {
        let mut explicit = BTreeMap::new();
        assert_eq!(ObjectType::Dialog.effective_default("title", "d1", &explicit), Some("d1"));
        assert_eq!(ObjectType::Field.effective_default("type", "f", &explicit), Some("text"));
        assert_eq!(ObjectType::Field.effective_default("required", "f", &explicit), Some("false"));
        assert_eq!(ObjectType::Field.effective_default("value", "f", &explicit), None);
        assert_eq!(ObjectType::Grid.effective_default("page-size", "g", &explicit), Some("20"));
        explicit.insert("field".to_string(), "amount".to_string());
        assert_eq!(ObjectType::Column.effective_default("header", "c", &explicit), Some("amount"));
    }

    #[test]
    fn names_round_trip() {
        for t in ObjectType::ALL {
            assert_eq!(t.as_str().parse::<ObjectType>().unwrap(), t);
        }
        assert!("widget".parse::<ObjectType>().is_err());
    }
}
