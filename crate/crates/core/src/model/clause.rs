//! `namespace; attr[:Type]=value; directive:=value` clauses.
//!
//! Values may be wrapped in single quotes; inside quotes `\'` is a quote
//! and `\\` a backslash, any other backslash is kept verbatim so filter
//! escapes like `\*` pass through untouched.

use std::collections::BTreeMap;

use thiserror::Error;

use super::{Capability, ModelError, Requirement, ResolutionMode};
use crate::filter::value::is_valid_name;
use crate::filter::{parse_filter, FilterError, PropertyError, PropertyMap, PropertyType, PropertyValue, ScalarType};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ClauseError {
    #[error("syntax error: {0}")]
    Syntax(String),
    #[error("duplicate-attribute: {0}")]
    DuplicateAttribute(String),
    #[error("duplicate directive: {0}")]
    DuplicateDirective(String),
    #[error("bad-typed-value: {0}")]
    BadTypedValue(String),
    #[error("bad-filter: {0}")]
    BadFilter(#[from] FilterError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

impl From<PropertyError> for ClauseError {
    fn from(e: PropertyError) -> Self {
        match e {
            PropertyError::Duplicate(name) => ClauseError::DuplicateAttribute(name),
            PropertyError::InvalidName(name) => ClauseError::Syntax(format!("invalid attribute name {name:?}")),
            other => ClauseError::BadTypedValue(other.to_string()),
        }
    }
}

#[derive(Debug, PartialEq)]
pub(crate) enum Part {
    Attribute { name: String, ty: Option<String>, value: String },
    Directive { name: String, value: String },
}

/// Splits on `;` outside quotes.
fn split_parts(text: &str) -> Result<Vec<&str>, ClauseError> {
    let mut parts = Vec::new();
    let mut start = 0;
    let mut in_quote = false;
    let mut escaped = false;
    for (i, c) in text.char_indices() {
        match c {
            _ if escaped => escaped = false,
            '\\' if in_quote => escaped = true,
            '\'' => in_quote = !in_quote,
            ';' if !in_quote => {
                parts.push(&text[start..i]);
                start = i + 1;
            }
            _ => {}
        }
    }
    if in_quote {
        return Err(ClauseError::Syntax("unterminated quoted value".to_string()));
    }
    parts.push(&text[start..]);
    Ok(parts)
}

fn unquote(raw: &str) -> Result<String, ClauseError> {
    let raw = raw.trim();
    let Some(body) = raw.strip_prefix('\'') else {
        return Ok(raw.to_string());
    };
    let mut out = String::new();
    let mut chars = body.chars();
    loop {
        match chars.next() {
            None => return Err(ClauseError::Syntax("unterminated quoted value".to_string())),
            Some('\'') => break,
            Some('\\') => match chars.next() {
                Some(c @ ('\'' | '\\')) => out.push(c),
                Some(c) => {
                    out.push('\\');
                    out.push(c);
                }
                None => return Err(ClauseError::Syntax("unterminated quoted value".to_string())),
            },
            Some(c) => out.push(c),
        }
    }
    if !chars.as_str().trim().is_empty() {
        return Err(ClauseError::Syntax(format!("unexpected text after quoted value in {raw:?}")));
    }
    Ok(out)
}

pub(crate) fn quote(value: &str) -> String {
    let mut out = String::from("'");
    let mut chars = value.chars().peekable();
    while let Some(c) = chars.next() {
        match c {
            '\'' => out.push_str("\\'"),
            '\\' if matches!(chars.peek(), None | Some('\'') | Some('\\')) => out.push_str("\\\\"),
            _ => out.push(c),
        }
    }
    out.push('\'');
    out
}

fn needs_quotes(value: &str) -> bool {
    value.is_empty() || value.trim() != value || value.contains([';', '\''])
}

fn render_value(value: &str) -> String {
    if needs_quotes(value) {
        quote(value)
    } else {
        value.to_string()
    }
}

fn parse_part(raw: &str) -> Result<Part, ClauseError> {
    let eq = raw.find('=').ok_or_else(|| ClauseError::Syntax(format!("expected `name=value` in {:?}", raw.trim())))?;
    let (head, value) = (&raw[..eq], unquote(&raw[eq + 1..])?);
    if let Some(name) = head.strip_suffix(':') {
        let name = name.trim();
        if !is_valid_name(name) {
            return Err(ClauseError::Syntax(format!("invalid directive name {name:?}")));
        }
        return Ok(Part::Directive { name: name.to_string(), value });
    }
    let (name, ty) = match head.split_once(':') {
        Some((name, ty)) => (name.trim(), Some(ty.trim().to_string())),
        None => (head.trim(), None),
    };
    if !is_valid_name(name) {
        return Err(ClauseError::Syntax(format!("invalid attribute name {name:?}")));
    }
    Ok(Part::Attribute { name: name.to_string(), ty, value })
}

/// Returns the leading token and the attribute/directive parts.
pub(crate) fn parse_clause(text: &str) -> Result<(String, Vec<Part>), ClauseError> {
    let raw_parts = split_parts(text)?;
    let head = raw_parts[0].trim().to_string();
    if head.is_empty() {
        return Err(ClauseError::Syntax("missing namespace".to_string()));
    }
    let parts =
        raw_parts[1..].iter().filter(|p| !p.trim().is_empty()).map(|p| parse_part(p)).collect::<Result<_, _>>()?;
    Ok((head, parts))
}

pub(crate) fn typed_value(name: &str, ty: Option<&str>, value: &str) -> Result<PropertyValue, ClauseError> {
    let ty: PropertyType = match ty {
        None => PropertyType::Scalar(ScalarType::String),
        Some(t) => t.parse().map_err(|_| ClauseError::BadTypedValue(format!("{name}: unknown type {t:?}")))?,
    };
    PropertyValue::parse_typed(ty, value).map_err(|e| ClauseError::BadTypedValue(format!("{name}: {e}")))
}

pub fn parse_capability_clause(text: &str) -> Result<Capability, ClauseError> {
    let (namespace, parts) = parse_clause(text)?;
    let mut properties = PropertyMap::new();
    let mut directives = BTreeMap::new();
    for part in parts {
        match part {
            Part::Attribute { name, ty, value } => {
                let value = typed_value(&name, ty.as_deref(), &value)?;
                properties.insert(name, value)?;
            }
            Part::Directive { name, value } => {
                if directives.insert(name.clone(), value).is_some() {
                    return Err(ClauseError::DuplicateDirective(name));
                }
            }
        }
    }
    let mut cap = Capability::new(namespace, properties)?;
    cap.directives = directives;
    Ok(cap)
}

/// Parses `namespace; filter:='(...)'; resolution:=optional`.
pub fn parse_requirement_clause(text: &str) -> Result<Requirement, ClauseError> {
    let (namespace, parts) = parse_clause(text)?;
    let mut filter = None;
    let mut resolution = None;
    for part in parts {
        match part {
            Part::Directive { name, value } if name == "filter" => {
                if filter.replace(parse_filter(&value)?).is_some() {
                    return Err(ClauseError::DuplicateDirective(name));
                }
            }
            Part::Directive { name, value } if name == "resolution" => {
                let mode = match value.as_str() {
                    "mandatory" => ResolutionMode::Mandatory,
                    "optional" => ResolutionMode::Optional,
                    other => return Err(ClauseError::Syntax(format!("unknown resolution {other:?}"))),
                };
                if resolution.replace(mode).is_some() {
                    return Err(ClauseError::DuplicateDirective(name));
                }
            }
            Part::Directive { name, .. } => {
                return Err(ClauseError::Syntax(format!("unknown requirement directive {name:?}")))
            }
            Part::Attribute { name, .. } => {
                return Err(ClauseError::Syntax(format!("requirements take no attributes, found {name:?}")))
            }
        }
    }
    let mut req = Requirement::new(namespace, filter)?;
    req.resolution = resolution.unwrap_or_default();
    Ok(req)
}

pub(crate) fn render_capability(cap: &Capability) -> String {
    let mut out = cap.namespace.clone();
    for (name, value) in cap.properties.iter() {
        out.push_str("; ");
        out.push_str(name);
        let ty = value.property_type();
        if ty != PropertyType::Scalar(ScalarType::String) {
            out.push(':');
            out.push_str(&ty.to_string());
        }
        out.push('=');
        out.push_str(&render_value(&value.render()));
    }
    for (name, value) in &cap.directives {
        out.push_str(&format!("; {name}:={}", render_value(value)));
    }
    out
}

pub(crate) fn render_requirement(req: &Requirement) -> String {
    let mut out = req.namespace.clone();
    if let Some(filter) = &req.filter {
        out.push_str("; filter:=");
        out.push_str(&quote(&filter.to_string()));
    }
    if req.resolution == ResolutionMode::Optional {
        out.push_str("; resolution:=optional");
    }
    out
}
