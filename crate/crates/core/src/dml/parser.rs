use std::collections::{BTreeMap, HashSet};

use super::{
    is_valid_object_id, DiagnosticKind, Location, ObjectDecl, ObjectType, ParseDiagnostic,
    TemplateAST, TemplateSource,
};

type Result<T> = std::result::Result<T, ParseDiagnostic>;

/// Parses a template, stopping at the first error.
pub fn parse_template(source: &TemplateSource) -> Result<TemplateAST> {
    let mut parser = Parser {
        cursor: Cursor::new(&source.text),
        seen_ids: HashSet::new(),
    };
    let root = parser.document()?;
    Ok(TemplateAST::new(
        source.name.clone(),
        source.fingerprint.clone(),
        root,
    ))
}

struct Cursor<'a> {
    text: &'a str,
    pos: usize,
    line: u32,
    column: u32,
}

impl<'a> Cursor<'a> {
    fn new(text: &'a str) -> Self {
        Cursor {
            text,
            pos: 0,
            line: 1,
            column: 1,
        }
    }

    fn location(&self) -> Location {
        Location {
            line: self.line,
            column: self.column,
        }
    }

    fn peek(&self) -> Option<char> {
        self.text[self.pos..].chars().next()
    }

    fn starts_with(&self, s: &str) -> bool {
        self.text[self.pos..].starts_with(s)
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.peek()?;
        self.pos += c.len_utf8();
        if c == '\n' {
            self.line += 1;
            self.column = 1;
        } else {
            self.column += 1;
        }
        Some(c)
    }

    /// Skips whitespace; returns whether any was consumed.
    fn skip_ws(&mut self) -> bool {
        let start = self.pos;
        while self.peek().is_some_and(char::is_whitespace) {
            self.bump();
        }
        self.pos != start
    }

    fn name(&mut self) -> &'a str {
        let start = self.pos;
        if self.peek().is_some_and(|c| c.is_ascii_alphabetic()) {
            while self
                .peek()
                .is_some_and(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_')
            {
                self.bump();
            }
        }
        &self.text[start..self.pos]
    }
}

struct Parser<'a> {
    cursor: Cursor<'a>,
    seen_ids: HashSet<String>,
}

fn syntax(location: Location, message: impl Into<String>) -> ParseDiagnostic {
    ParseDiagnostic::new(DiagnosticKind::Syntax, location, message)
}

impl<'a> Parser<'a> {
    fn document(&mut self) -> Result<ObjectDecl> {
        self.cursor.skip_ws();
        let root = self.element(None)?;
        self.cursor.skip_ws();
        if self.cursor.peek().is_some() {
            return Err(syntax(
                self.cursor.location(),
                "unexpected content after the root element",
            ));
        }
        Ok(root)
    }

    fn expect(&mut self, c: char, what: &str) -> Result<()> {
        let at = self.cursor.location();
        match self.cursor.bump() {
            Some(found) if found == c => Ok(()),
            Some(found) => Err(syntax(at, format!("expected {what}, found `{found}`"))),
            None => Err(syntax(at, format!("expected {what}, found end of input"))),
        }
    }

    fn element(&mut self, parent: Option<ObjectType>) -> Result<ObjectDecl> {
        let start = self.cursor.location();
        self.expect('<', "`<`")?;
        let name_at = self.cursor.location();
        let name = self.cursor.name();
        if name.is_empty() {
            return Err(syntax(name_at, "expected a tag name"));
        }
        let object_type: ObjectType = name.parse().map_err(|_| {
            ParseDiagnostic::new(
                DiagnosticKind::UnknownTag,
                start,
                format!("unknown tag `{name}`"),
            )
        })?;
        if parent.is_none() && object_type != ObjectType::Dialog {
            return Err(ParseDiagnostic::new(
                DiagnosticKind::ParentChildViolation,
                start,
                format!("the root element must be `dialog`, found `{name}`"),
            ));
        }

        let mut attrs: BTreeMap<String, String> = BTreeMap::new();
        let mut id_at = start;
        let self_closing = loop {
            let had_ws = self.cursor.skip_ws();
            let at = self.cursor.location();
            match self.cursor.peek() {
                Some('/') => {
                    self.cursor.bump();
                    self.expect('>', "`>` after `/`")?;
                    break true;
                }
                Some('>') => {
                    self.cursor.bump();
                    break false;
                }
                None => return Err(syntax(at, format!("unterminated `<{name}` tag"))),
                Some(_) => {}
            }
            if !had_ws {
                return Err(syntax(at, "expected whitespace before attribute"));
            }
            let attr_name = self.cursor.name();
            if attr_name.is_empty() {
                let found = self.cursor.peek().unwrap_or(' ');
                return Err(syntax(at, format!("unexpected `{found}` in tag `{name}`")));
            }
            if object_type.attribute(attr_name).is_none() {
                return Err(ParseDiagnostic::new(
                    DiagnosticKind::UnknownAttribute,
                    at,
                    format!("`{name}` has no attribute `{attr_name}`"),
                ));
            }
            if attrs.contains_key(attr_name) {
                return Err(syntax(at, format!("attribute `{attr_name}` repeated")));
            }
            self.cursor.skip_ws();
            self.expect('=', "`=`")?;
            self.cursor.skip_ws();
            let value_at = self.cursor.location();
            let value = self.quoted()?;
            if attr_name == "id" {
                id_at = value_at;
            }
            attrs.insert(attr_name.to_string(), value);
        };

        for spec in object_type.attributes().iter().filter(|a| a.required) {
            if !attrs.contains_key(spec.name) {
                return Err(ParseDiagnostic::new(
                    DiagnosticKind::MissingRequiredAttribute,
                    start,
                    format!("`{name}` requires attribute `{}`", spec.name),
                ));
            }
        }
        let id = attrs.remove("id").unwrap_or_default();
        if !is_valid_object_id(&id) {
            return Err(syntax(id_at, format!("invalid object id `{id}`")));
        }
        if !self.seen_ids.insert(id.clone()) {
            return Err(ParseDiagnostic::new(
                DiagnosticKind::DuplicateId,
                id_at,
                format!("duplicate object id `{id}`"),
            ));
        }

        let mut children = Vec::new();
        if !self_closing {
            loop {
                self.cursor.skip_ws();
                let at = self.cursor.location();
                if self.cursor.starts_with("</") {
                    self.cursor.bump();
                    self.cursor.bump();
                    let close = self.cursor.name();
                    if close != name {
                        return Err(syntax(
                            at,
                            format!("closing tag `</{close}>` does not match `<{name}>`"),
                        ));
                    }
                    self.cursor.skip_ws();
                    self.expect('>', "`>`")?;
                    break;
                }
                match self.cursor.peek() {
                    Some('<') => children.push(self.element(Some(object_type))?),
                    Some(_) => return Err(syntax(at, "text content is not allowed")),
                    None => return Err(syntax(at, format!("unclosed element `<{name}>`"))),
                }
            }
        }

        Ok(ObjectDecl {
            id,
            object_type,
            defaults: attrs,
            children,
            location: start,
        })
    }

    fn quoted(&mut self) -> Result<String> {
        let at = self.cursor.location();
        let quote = match self.cursor.peek() {
            Some(q @ ('"' | '\'')) => q,
            _ => return Err(syntax(at, "expected a quoted attribute value")),
        };
        self.cursor.bump();
        let mut value = String::new();
        loop {
            let c_at = self.cursor.location();
            match self.cursor.bump() {
                None => return Err(syntax(at, "unterminated attribute value")),
                Some(c) if c == quote => return Ok(value),
                Some('<') => return Err(syntax(c_at, "`<` is not allowed in attribute values")),
                Some('&') => value.push(self.entity(c_at)?),
                Some(c) => value.push(c),
            }
        }
    }

    fn entity(&mut self, at: Location) -> Result<char> {
        let start = self.cursor.pos;
        while self.cursor.peek().is_some_and(|c| c != ';' && c != '"' && c != '\'') {
            if self.cursor.pos - start > 10 {
                break;
            }
            self.cursor.bump();
        }
        let body = &self.cursor.text[start..self.cursor.pos];
        if self.cursor.peek() != Some(';') {
            return Err(syntax(at, "unterminated character reference"));
        }
        self.cursor.bump();
        let decoded = match body {
            "lt" => Some('<'),
            "gt" => Some('>'),
            "amp" => Some('&'),
            "quot" => Some('"'),
            "apos" => Some('\''),
            _ => body
                .strip_prefix("#x")
                .and_then(|hex| u32::from_str_radix(hex, 16).ok())
                .or_else(|| body.strip_prefix('#').and_then(|dec| dec.parse().ok()))
                .and_then(char::from_u32),
        };
        decoded.ok_or_else(|| syntax(at, format!("unknown character reference `&{body};`")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<TemplateAST> {
        parse_template(&TemplateSource::new("t", text))
    }

    fn err(text: &str) -> ParseDiagnostic {
        parse(text).expect_err("expected a diagnostic")
    }

    #[test]
    fn minimal_document() {
        let ast = parse(r#"<dialog id="d"><form id="f" action="proc:noop"/></dialog>"#).unwrap();
        assert_eq!(ast.object_count, 2);
        assert_eq!(ast.root.id, "d");
        assert_eq!(ast.root.object_type, ObjectType::Dialog);
        assert_eq!(ast.object("f").unwrap().defaults["action"], "proc:noop");
    }

    #[test]
    fn unknown_tag_is_located_at_the_element() {
        let d = err(r#"<dialog id="d"><widget id="w"/></dialog>"#);
        assert_eq!(d.kind, DiagnosticKind::UnknownTag);
        assert_eq!(d.location, Location { line: 1, column: 16 });
    }

    #[test]
    fn duplicate_id_is_dialog_wide() {
        let d = err(r#"<dialog id="d"><form id="d" action="proc:p"/></dialog>"#);
        assert_eq!(d.kind, DiagnosticKind::DuplicateId);
        assert!(d.message.contains("`d`"));
        assert_eq!(d.location, Location { line: 1, column: 25 });
    }

    #[test]
    fn unknown_attribute() {
        let d = err("<dialog id=\"d\">\n  <label id=\"l\" txt=\"x\"/>\n</dialog>");
        assert_eq!(d.kind, DiagnosticKind::UnknownAttribute);
        assert_eq!(d.location, Location { line: 2, column: 17 });
    }

    #[test]
    fn missing_required_attribute() {
        let d = err("<dialog id=\"d\">\n<form id=\"f\"/></dialog>");
        assert_eq!(d.kind, DiagnosticKind::MissingRequiredAttribute);
        assert_eq!(d.location, Location { line: 2, column: 1 });
        let d = err("<dialog/>");
        assert_eq!(d.kind, DiagnosticKind::MissingRequiredAttribute);
    }

    #[test]
    fn root_must_be_a_dialog() {
        let d = err(r#"<form id="f" action="submit"/>"#);
        assert_eq!(d.kind, DiagnosticKind::ParentChildViolation);
    }

    #[test]
    fn syntax_errors() {
        let cases = [
            ("", Location { line: 1, column: 1 }),
            ("<dialog id=\"d\">", Location { line: 1, column: 16 }),
            ("<dialog id=\"d\"></form>", Location { line: 1, column: 16 }),
            ("<dialog id=d/>", Location { line: 1, column: 12 }),
            ("<dialog id=\"d\">hello</dialog>", Location { line: 1, column: 16 }),
            ("<dialog id=\"d\"/><dialog id=\"e\"/>", Location { line: 1, column: 17 }),
            ("<dialog id=\"d\"title=\"x\"/>", Location { line: 1, column: 15 }),
            ("<dialog id=\"d\" id=\"e\"/>", Location { line: 1, column: 16 }),
            ("<dialog id=\"1d\"/>", Location { line: 1, column: 12 }),
            ("<dialog id=\"d\" title=\"&bogus;\"/>", Location { line: 1, column: 23 }),
            ("<dialog id=\"d\" title=\"a<b\"/>", Location { line: 1, column: 24 }),
            ("<dialog id=\"d\"", Location { line: 1, column: 15 }),
        ];
        for (text, location) in cases {
            let d = err(text);
            assert_eq!(d.kind, DiagnosticKind::Syntax, "{text}: {d}");
            assert_eq!(d.location, location, "{text}: {d}");
        }
    }

    #[test]
    fn entities_and_single_quotes() {
        let ast = parse("<dialog id='d' title='&lt;&#65;&#x42;&apos;&gt;'/>").unwrap();
        assert_eq!(ast.root.defaults["title"], "<AB'>");
    }

    #[test]
    fn columns_count_characters_not_bytes() {
        let d = err("<dialog id=\"d\" title=\"ăîș\" bogus=\"1\"/>");
        assert_eq!(d.location, Location { line: 1, column: 28 });
    }

    #[test]
    fn whitespace_and_nesting() {
        let text = "\n  <dialog id=\"d\" >\n    <grid id=\"g\" source=\"query:select 1\">\n      <column id=\"c\" field=\"a\" />\n    </grid >\n  </dialog>\n\n";
        let ast = parse(text).unwrap();
        assert_eq!(ast.object_count, 3);
        assert_eq!(ast.root.location, Location { line: 2, column: 3 });
        let ids: Vec<&str> = ast.root.walk().map(|o| o.id.as_str()).collect();
        assert_eq!(ids, ["d", "g", "c"]);
    }
}
