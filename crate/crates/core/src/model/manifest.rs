//! The manifest text format.
//!
//! ```text
//! Package-Name: mnist-model
//! Package-Version: 1.0.0
//! Provide-Capability: ml.model; dataset=MNIST; input=image; input.height:Long=28
//! Require-Capability: runtime.ops; filter:='(&(ops=conv2d)(ops=relu))'
//! Content: model/graph.bin; sha256=<hex>; size=1024
//! ```
//!
//! Lines starting with a single space continue the previous header; lines
//! starting with `#` are comments.

use thiserror::Error;

use super::clause::{
    parse_capability_clause, parse_clause, parse_requirement_clause, render_capability, render_requirement,
    ClauseError, Part,
};
use super::{Content, ModelError, Resource};
use crate::semver::parse_version;

pub const PACKAGE_NAME: &str = "Package-Name";
pub const PACKAGE_VERSION: &str = "Package-Version";
pub const PROVIDE_CAPABILITY: &str = "Provide-Capability";
pub const REQUIRE_CAPABILITY: &str = "Require-Capability";
pub const CONTENT: &str = "Content";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ManifestError {
    #[error("missing-header: {0}")]
    MissingHeader(&'static str),
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("line {line}: duplicate-attribute: {name}")]
    DuplicateAttribute { line: usize, name: String },
    #[error("line {line}: bad-typed-value: {message}")]
    BadTypedValue { line: usize, message: String },
    #[error("line {line}: bad-filter: {source}")]
    BadFilter { line: usize, source: crate::filter::FilterError },
    #[error("line {line}: {source}")]
    Invalid { line: usize, source: ModelError },
}

impl ManifestError {
    fn from_clause(line: usize, err: ClauseError) -> Self {
        match err {
            ClauseError::Syntax(message) => ManifestError::Syntax { line, message },
            ClauseError::DuplicateDirective(name) => {
                ManifestError::Syntax { line, message: format!("duplicate directive {name:?}") }
            }
            ClauseError::DuplicateAttribute(name) => ManifestError::DuplicateAttribute { line, name },
            ClauseError::BadTypedValue(message) => ManifestError::BadTypedValue { line, message },
            ClauseError::BadFilter(source) => ManifestError::BadFilter { line, source },
            ClauseError::Model(source) => ManifestError::Invalid { line, source },
        }
    }
}

struct Header {
    line: usize,
    name: String,
    value: String,
}

fn split_headers(text: &str) -> Result<Vec<Header>, ManifestError> {
    let mut headers: Vec<Header> = Vec::new();
    for (idx, line) in text.split('\n').enumerate() {
        let line_no = idx + 1;
        if let Some(rest) = line.strip_prefix(' ') {
            match headers.last_mut() {
                Some(h) => h.value.push_str(rest),
                None => {
                    return Err(ManifestError::Syntax {
                        line: line_no,
                        message: "continuation without a header".into(),
                    })
                }
            }
            continue;
        }
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (name, value) = line.split_once(':').ok_or_else(|| ManifestError::Syntax {
            line: line_no,
            message: format!("expected `Name: value`, found {line:?}"),
        })?;
        if name.is_empty() || !name.bytes().all(|b| b.is_ascii_alphanumeric() || b == b'-') {
            return Err(ManifestError::Syntax { line: line_no, message: format!("invalid header name {name:?}") });
        }
        headers.push(Header { line: line_no, name: name.to_string(), value: value.trim_start().to_string() });
    }
    Ok(headers)
}

fn parse_content(line: usize, value: &str) -> Result<Content, ManifestError> {
    let (uri, parts) = parse_clause(value).map_err(|e| ManifestError::from_clause(line, e))?;
    let mut content = Content { uri, sha256: None, size: None };
    for part in parts {
        let bad = |message: String| ManifestError::BadTypedValue { line, message };
        match part {
            Part::Attribute { name, ty: None, value } if name == "sha256" => {
                if content.sha256.replace(value.parse().map_err(|e| bad(format!("{e}")))?).is_some() {
                    return Err(ManifestError::DuplicateAttribute { line, name });
                }
            }
            Part::Attribute { name, ty: None, value } if name == "size" => {
                let size = value.parse().map_err(|_| bad(format!("size {value:?} is not a byte count")))?;
                if content.size.replace(size).is_some() {
                    return Err(ManifestError::DuplicateAttribute { line, name });
                }
            }
            other => {
                return Err(ManifestError::Syntax { line, message: format!("unexpected Content attribute {other:?}") })
            }
        }
    }
    Ok(content)
}

pub fn parse_manifest(text: &str) -> Result<Resource, ManifestError> {
    let headers = split_headers(text)?;
    let single = |wanted: &'static str| -> Result<&Header, ManifestError> {
        let mut found = headers.iter().filter(|h| h.name == wanted);
        let first = found.next().ok_or(ManifestError::MissingHeader(wanted))?;
        if let Some(dup) = found.next() {
            return Err(ManifestError::Syntax { line: dup.line, message: format!("repeated header {wanted}") });
        }
        Ok(first)
    };
    let name = single(PACKAGE_NAME)?;
    let version = single(PACKAGE_VERSION)?;
    let parsed_version = parse_version(version.value.trim())
        .map_err(|e| ManifestError::BadTypedValue { line: version.line, message: e.to_string() })?;
    let mut resource = Resource::new(name.value.trim(), parsed_version)
        .map_err(|source| ManifestError::Invalid { line: name.line, source })?;

    for header in &headers {
        let line = header.line;
        let invalid = |source| ManifestError::Invalid { line, source };
        match header.name.as_str() {
            PACKAGE_NAME | PACKAGE_VERSION => {}
            PROVIDE_CAPABILITY => {
                let cap = parse_capability_clause(&header.value).map_err(|e| ManifestError::from_clause(line, e))?;
                resource.add_capability(cap).map_err(invalid)?;
            }
            REQUIRE_CAPABILITY => {
                let req = parse_requirement_clause(&header.value).map_err(|e| ManifestError::from_clause(line, e))?;
                resource.add_requirement(req).map_err(invalid)?;
            }
            CONTENT => {
                let content = parse_content(line, &header.value)?;
                resource.add_content(content).map_err(invalid)?;
            }
            other => {
                return Err(ManifestError::Syntax { line, message: format!("unknown header {other:?}") });
            }
        }
    }
    Ok(resource)
}

/// Deterministic rendering: fixed header order, clauses in resource order,
/// attributes sorted by name.
pub fn serialize_manifest(resource: &Resource) -> String {
    let mut out = String::new();
    out.push_str(&format!("{PACKAGE_NAME}: {}\n", resource.identity()));
    out.push_str(&format!("{PACKAGE_VERSION}: {}\n", resource.version()));
    for cap in resource.declared_capabilities() {
        out.push_str(&format!("{PROVIDE_CAPABILITY}: {}\n", render_capability(cap)));
    }
    for req in resource.requirements() {
        out.push_str(&format!("{REQUIRE_CAPABILITY}: {}\n", render_requirement(req)));
    }
    for content in resource.content() {
        out.push_str(&format!("{CONTENT}: {}", content.uri));
        if let Some(digest) = &content.sha256 {
            out.push_str(&format!("; sha256={digest}"));
        }
        if let Some(size) = content.size {
            out.push_str(&format!("; size={size}"));
        }
        out.push('\n');
    }
    out
}
