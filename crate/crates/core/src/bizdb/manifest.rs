//! Procedure manifest: one procedure per line.
//!
//! ```text
//! # comment
//! name(param type, ...) = body
//! ```
//!
//! `type` is `text` or `number`. The body is a single SQL statement using
//! `:param` placeholders, or `@noop`. A line ending in `\` continues on the
//! next line.

use super::{BizDbError, ParamType, ProcedureBody, ProcedureParam, ProcedureRegistration};

pub fn parse_manifest(text: &str) -> Result<Vec<ProcedureRegistration>, BizDbError> {
    let mut out = Vec::new();
    let mut pending = String::new();
    let mut start_line = 0;
    for (i, raw) in text.lines().enumerate() {
        if pending.is_empty() {
            start_line = i + 1;
            let trimmed = raw.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
        }
        match raw.trim_end().strip_suffix('\\') {
            Some(head) => {
                pending.push_str(head);
                pending.push(' ');
            }
            None => {
                pending.push_str(raw);
                out.push(parse_line(pending.trim(), start_line)?);
                pending.clear();
            }
        }
    }
    if !pending.is_empty() {
        out.push(parse_line(pending.trim(), start_line)?);
    }
    Ok(out)
}

fn parse_line(line: &str, number: usize) -> Result<ProcedureRegistration, BizDbError> {
    let err = |message: &str| BizDbError::Manifest {
        line: number,
        message: message.to_string(),
    };
    let (signature, body) = line
        .split_once('=')
        .ok_or_else(|| err("expected `name(params) = body`"))?;
    let signature = signature.trim();
    let (name, rest) = signature
        .split_once('(')
        .ok_or_else(|| err("expected `(` after the procedure name"))?;
    let params_text = rest
        .strip_suffix(')')
        .ok_or_else(|| err("expected `)` before `=`"))?;
    let mut params = Vec::new();
    for param in params_text.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let mut words = param.split_whitespace();
        let (Some(pname), Some(ptype), None) = (words.next(), words.next(), words.next()) else {
            return Err(err(&format!("expected `name type`, got `{param}`")));
        };
        let param_type = match ptype {
            "text" => ParamType::Text,
            "number" => ParamType::Number,
            other => return Err(err(&format!("unknown parameter type `{other}`"))),
        };
        params.push(ProcedureParam {
            name: pname.to_string(),
            param_type,
        });
    }
    let body = match body.trim() {
        "" => return Err(err("empty body")),
        "@noop" => ProcedureBody::Noop,
        b if b.starts_with('@') => return Err(err(&format!("unknown built-in `{b}`"))),
        sql => ProcedureBody::Sql(sql.to_string()),
    };
    Ok(ProcedureRegistration {
        name: name.trim().to_string(),
        params,
        body,
    })
}
