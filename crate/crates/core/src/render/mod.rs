//! HTML rendering of a compiled dialog.
//!
//! Every widget carries `data-object-id` and `data-object-type`; bound
//! widgets carry `data-bind-source`, buttons and forms carry `data-action`.
//! Objects that are not visible are left out together with their subtree.
//! The output depends only on the input, so identical input gives identical
//! bytes.

use std::collections::BTreeMap;
use std::fmt::Write;

use crate::bizdb::ResultSet;
use crate::compiler::{parse_page_size, CompiledDialog, CompiledObject};
use crate::conf::{ObjectRights, ResolvedDialog, RightsMap};
use crate::dml::ObjectType;

pub const RUNTIME_PATH: &str = "/static/runtime.js";
pub const STYLESHEET_PATH: &str = "/static/style.css";
pub const DEFAULT_ALERT_POLL_MS: u64 = 10_000;

#[derive(Debug, Clone, Copy)]
pub struct RenderInput<'a> {
    pub compiled: &'a CompiledDialog,
    pub resolved: &'a ResolvedDialog,
    pub rights: &'a RightsMap,
    /// Current page of every visible query-bound object, keyed by object id.
    pub data: &'a BTreeMap<String, ResultSet>,
    pub language: &'a str,
    /// 1-based grid page the data was fetched for.
    pub page: u32,
    /// Alert polling interval handed to the client runtime.
    pub alert_poll_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RenderError {
    #[error("no data supplied for query-bound object `{0}`")]
    MissingData(String),
    #[error("grid `{grid}` has no result column `{field}`")]
    UnknownColumn { grid: String, field: String },
    #[error("resolution for `{resolved}` does not match dialog `{compiled}`")]
    Mismatch { compiled: String, resolved: String },
}

const FULL_RIGHTS: ObjectRights = ObjectRights {
    visible: true,
    actionable: true,
};

fn rights_of(rights: &RightsMap, id: &str) -> ObjectRights {
    rights.get(id).copied().unwrap_or(FULL_RIGHTS)
}

/// Indices of objects that will be rendered: visible themselves and below a
/// visible parent.
pub fn visible_objects(compiled: &CompiledDialog, rights: &RightsMap) -> Vec<usize> {
    let mut shown = vec![false; compiled.objects.len()];
    for (i, o) in compiled.objects.iter().enumerate() {
        let parent_shown = o.parent.is_none_or(|p| shown[p]);
        shown[i] = parent_shown && rights_of(rights, &o.id).visible;
    }
    (0..shown.len()).filter(|&i| shown[i]).collect()
}

/// Grid page count for `total_rows` at `page_size` rows per page; at least 1.
pub fn page_count(total_rows: u64, page_size: u32) -> u64 {
    total_rows.div_ceil(u64::from(page_size.max(1))).max(1)
}

pub fn escape(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for c in text.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&#39;"),
            c => out.push(c),
        }
    }
    out
}

pub fn render_dialog(input: &RenderInput<'_>) -> Result<String, RenderError> {
    if input.resolved.dialog != input.compiled.name {
        return Err(RenderError::Mismatch {
            compiled: input.compiled.name.clone(),
            resolved: input.resolved.dialog.clone(),
        });
    }
    let mut r = Renderer { input, out: String::with_capacity(4096) };
    r.document()?;
    Ok(r.out)
}

struct Renderer<'i, 'a> {
    input: &'i RenderInput<'a>,
    out: String,
}

impl<'a> Renderer<'_, 'a> {
    fn prop(&self, object: &CompiledObject, property: &str) -> &'a str {
        self.input.resolved.get(&object.id, property).unwrap_or_default()
    }

    fn rights(&self, object: &CompiledObject) -> ObjectRights {
        rights_of(self.input.rights, &object.id)
    }

    fn push(&mut self, s: &str) {
        self.out.push_str(s);
    }

    fn text(&mut self, s: &str) {
        self.out.push_str(&escape(s));
    }

    fn attr(&mut self, name: &str, value: &str) {
        let _ = write!(self.out, " {name}=\"{}\"", escape(value));
    }

    /// Opens a widget tag with the identifying data attributes.
    fn open(&mut self, tag: &str, object: &CompiledObject) {
        let _ = write!(self.out, "<{tag}");
        self.attr("data-object-id", &object.id);
        self.attr("data-object-type", object.object_type.as_str());
        if let Some(source) = self.input.compiled.bind_source(&object.id) {
            self.attr("data-bind-source", source);
        }
    }

    fn document(&mut self) -> Result<(), RenderError> {
        let compiled = self.input.compiled;
        let root = &compiled.objects[0];
        let title = self.prop(root, "title").to_string();
        self.push("<!DOCTYPE html>\n<html");
        self.attr("lang", self.input.language);
        self.attr("data-dialog", &compiled.name);
        self.attr("data-alert-interval", &self.input.alert_poll_ms.to_string());
        self.push(">\n<head>\n<meta charset=\"utf-8\">\n<title>");
        self.text(&title);
        self.push("</title>\n");
        let _ = writeln!(self.out, "<link rel=\"stylesheet\" href=\"{STYLESHEET_PATH}\">");
        let _ = writeln!(self.out, "<script src=\"{RUNTIME_PATH}\" defer></script>");
        self.push("</head>\n<body>\n");
        if self.rights(root).visible {
            self.object(0)?;
        }
        self.push("<div class=\"wd-status\" data-status-region role=\"status\"></div>\n");
        self.push("<aside class=\"wd-alerts\" data-alert-region></aside>\n");
        self.push("</body>\n</html>\n");
        Ok(())
    }

    fn children(&mut self, index: usize) -> Result<(), RenderError> {
        let compiled = self.input.compiled;
        for (child, object) in compiled.children(index) {
            if self.rights(object).visible {
                self.object(child)?;
            }
        }
        Ok(())
    }

    fn object(&mut self, index: usize) -> Result<(), RenderError> {
        let object = &self.input.compiled.objects[index];
        match object.object_type {
            ObjectType::Dialog => {
                self.open("main", object);
                self.push(" class=\"wd-dialog\">\n<h1>");
                self.text(self.prop(object, "title"));
                self.push("</h1>\n");
                self.children(index)?;
                self.push("</main>\n");
            }
            ObjectType::Form => {
                self.open("form", object);
                self.attr("data-action", self.prop(object, "action"));
                self.push(" class=\"wd-form\">\n");
                self.children(index)?;
                self.push("</form>\n");
            }
            ObjectType::Label => {
                self.open("p", object);
                self.push(" class=\"wd-label\">");
                self.text(self.prop(object, "text"));
                self.push("</p>\n");
            }
            ObjectType::Field => self.field(object),
            ObjectType::Select => self.select(object)?,
            ObjectType::Button => {
                self.open("button", object);
                self.push(" type=\"button\"");
                self.attr("data-action", self.prop(object, "action"));
                if !self.rights(object).actionable {
                    self.push(" disabled");
                }
                self.push(">");
                self.text(self.prop(object, "text"));
                self.push("</button>\n");
            }
            ObjectType::Grid => self.grid(index, object)?,
            // Columns are rendered as part of their grid.
            ObjectType::Column => {}
        }
        Ok(())
    }

    fn control_label(&mut self, object: &CompiledObject) {
        let label = self.prop(object, "label");
        if !label.is_empty() {
            self.push("<label");
            self.attr("for", &format!("wd-{}", object.id));
            self.push(">");
            self.text(label);
            self.push("</label>\n");
        }
    }

    fn field(&mut self, object: &CompiledObject) {
        let kind = match self.prop(object, "type") {
            "number" => "number",
            "hidden" => "hidden",
            _ => "text",
        };
        self.push("<div class=\"wd-field\">\n");
        if kind != "hidden" {
            self.control_label(object);
        }
        self.open("input", object);
        self.attr("id", &format!("wd-{}", object.id));
        self.attr("name", &object.id);
        self.attr("type", kind);
        self.attr("value", self.prop(object, "value"));
        if self.prop(object, "required") == "true" {
            self.push(" required");
        }
        if !self.rights(object).actionable {
            self.push(" readonly");
        }
        self.push(">\n</div>\n");
    }

    fn data(&self, object: &CompiledObject) -> Result<&'a ResultSet, RenderError> {
        self.input
            .data
            .get(&object.id)
            .ok_or_else(|| RenderError::MissingData(object.id.clone()))
    }

    fn select(&mut self, object: &CompiledObject) -> Result<(), RenderError> {
        let data = self.data(object)?;
        self.push("<div class=\"wd-field\">\n");
        self.control_label(object);
        self.open("select", object);
        self.attr("id", &format!("wd-{}", object.id));
        self.attr("name", &object.id);
        if !self.rights(object).actionable {
            self.push(" disabled");
        }
        self.push(">\n");
        // First column is the option value, second (if any) its caption.
        for row in &data.rows {
            let value = row.first().map(String::as_str).unwrap_or_default();
            let caption = row.get(1).map(String::as_str).unwrap_or(value);
            self.push("<option");
            self.attr("value", value);
            self.push(">");
            self.text(caption);
            self.push("</option>\n");
        }
        self.push("</select>\n</div>\n");
        Ok(())
    }

    fn grid(&mut self, index: usize, object: &CompiledObject) -> Result<(), RenderError> {
        let compiled = self.input.compiled;
        let data = self.data(object)?;
        let columns: Vec<&CompiledObject> = compiled
            .children(index)
            .map(|(_, c)| c)
            .filter(|c| self.rights(c).visible)
            .collect();
        let mut cells = Vec::with_capacity(columns.len());
        for column in &columns {
            let field = self.prop(column, "field");
            cells.push(data.column_index(field).ok_or_else(|| RenderError::UnknownColumn {
                grid: object.id.clone(),
                field: field.to_string(),
            })?);
        }

        self.open("table", object);
        self.push(" class=\"wd-grid\">\n<thead>\n<tr>");
        for column in &columns {
            self.open("th", column);
            self.push(">");
            self.text(self.prop(column, "header"));
            self.push("</th>");
        }
        self.push("</tr>\n</thead>\n<tbody>\n");
        for row in &data.rows {
            self.push("<tr>");
            for &cell in &cells {
                self.push("<td>");
                self.text(row.get(cell).map(String::as_str).unwrap_or_default());
                self.push("</td>");
            }
            self.push("</tr>\n");
        }
        self.push("</tbody>\n</table>\n");

        let page_size = parse_page_size(self.prop(object, "page-size"))
            .or_else(|| compiled.query_binding(&object.id).and_then(|q| q.page_size))
            .unwrap_or(20);
        self.pager(object, data.total_rows, page_size);
        Ok(())
    }

    fn pager(&mut self, object: &CompiledObject, total_rows: u64, page_size: u32) {
        let pages = page_count(total_rows, page_size);
        let page = u64::from(self.input.page.max(1)).min(pages);
        let lang = self.input.language;
        self.push("<nav class=\"wd-pager\"");
        self.attr("data-pager-for", &object.id);
        self.push(">");
        if page > 1 {
            self.push("<a rel=\"prev\"");
            self.attr("href", &format!("?page={}&lang={lang}", page - 1));
            self.push(">&laquo;</a> ");
        }
        let _ = write!(self.out, "<span>{page} / {pages}</span>");
        if page < pages {
            self.push(" <a rel=\"next\"");
            self.attr("href", &format!("?page={}&lang={lang}", page + 1));
            self.push(">&raquo;</a>");
        }
        self.push("</nav>\n");
    }
}
