//! Typed property values and the attribute maps capabilities carry.

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

use crate::semver::{parse_version, Version};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PropertyError {
    #[error("invalid attribute name {0:?}")]
    InvalidName(String),
    #[error("duplicate-attribute: {0}")]
    Duplicate(String),
    #[error("bad-typed-value: {value:?} is not a valid {ty}")]
    BadValue { ty: PropertyType, value: String },
    #[error("unknown type {0:?}")]
    UnknownType(String),
}

/// Attribute and namespace names: non-empty, `[A-Za-z0-9._-]`.
pub fn is_valid_name(name: &str) -> bool {
    !name.is_empty() && name.bytes().all(|b| b.is_ascii_alphanumeric() || matches!(b, b'.' | b'_' | b'-'))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ScalarType {
    String,
    Long,
    Double,
    Version,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PropertyType {
    Scalar(ScalarType),
    List(ScalarType),
}

impl ScalarType {
    fn name(self) -> &'static str {
        match self {
            ScalarType::String => "String",
            ScalarType::Long => "Long",
            ScalarType::Double => "Double",
            ScalarType::Version => "Version",
        }
    }

    fn from_name(name: &str) -> Option<Self> {
        Some(match name {
            "String" => ScalarType::String,
            "Long" => ScalarType::Long,
            "Double" => ScalarType::Double,
            "Version" => ScalarType::Version,
            _ => return None,
        })
    }
}

impl fmt::Display for PropertyType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PropertyType::Scalar(s) => f.write_str(s.name()),
            PropertyType::List(s) => write!(f, "List<{}>", s.name()),
        }
    }
}

impl std::str::FromStr for PropertyType {
    type Err = PropertyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let unknown = || PropertyError::UnknownType(s.to_string());
        if let Some(inner) = s.strip_prefix("List<").and_then(|r| r.strip_suffix('>')) {
            return ScalarType::from_name(inner).map(PropertyType::List).ok_or_else(unknown);
        }
        ScalarType::from_name(s).map(PropertyType::Scalar).ok_or_else(unknown)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum PropertyList {
    String(Vec<String>),
    Long(Vec<i64>),
    Double(Vec<f64>),
    Version(Vec<Version>),
}

#[derive(Debug, Clone, PartialEq)]
pub enum PropertyValue {
    String(String),
    Long(i64),
    Double(f64),
    Version(Version),
    List(PropertyList),
}

impl PropertyValue {
    pub fn property_type(&self) -> PropertyType {
        match self {
            PropertyValue::String(_) => PropertyType::Scalar(ScalarType::String),
            PropertyValue::Long(_) => PropertyType::Scalar(ScalarType::Long),
            PropertyValue::Double(_) => PropertyType::Scalar(ScalarType::Double),
            PropertyValue::Version(_) => PropertyType::Scalar(ScalarType::Version),
            PropertyValue::List(PropertyList::String(_)) => PropertyType::List(ScalarType::String),
            PropertyValue::List(PropertyList::Long(_)) => PropertyType::List(ScalarType::Long),
            PropertyValue::List(PropertyList::Double(_)) => PropertyType::List(ScalarType::Double),
            PropertyValue::List(PropertyList::Version(_)) => PropertyType::List(ScalarType::Version),
        }
    }

    pub fn as_str(&self) -> Option<&str> {
        match self {
            PropertyValue::String(s) => Some(s),
            _ => None,
        }
    }

    pub fn as_long(&self) -> Option<i64> {
        match self {
            PropertyValue::Long(n) => Some(*n),
            _ => None,
        }
    }

    pub fn as_version(&self) -> Option<Version> {
        match self {
            PropertyValue::Version(v) => Some(*v),
            _ => None,
        }
    }

    /// Parses `text` as a value of type `ty`. List elements are separated by
    /// unescaped commas; `\,` and `\\` escape inside elements. An empty text
    /// is the empty list, and elements themselves may not be empty.
    pub fn parse_typed(ty: PropertyType, text: &str) -> Result<Self, PropertyError> {
        let bad = || PropertyError::BadValue { ty, value: text.to_string() };
        match ty {
            PropertyType::Scalar(scalar) => parse_scalar(scalar, text).ok_or_else(bad),
            PropertyType::List(scalar) => {
                let items = if text.is_empty() { Vec::new() } else { split_list(text) };
                if items.iter().any(String::is_empty) {
                    return Err(bad());
                }
                let list = match scalar {
                    ScalarType::String => PropertyList::String(items),
                    ScalarType::Long => {
                        PropertyList::Long(items.iter().map(|i| parse_long(i)).collect::<Option<_>>().ok_or_else(bad)?)
                    }
                    ScalarType::Double => PropertyList::Double(
                        items.iter().map(|i| parse_double(i)).collect::<Option<_>>().ok_or_else(bad)?,
                    ),
                    ScalarType::Version => PropertyList::Version(
                        items.iter().map(|i| parse_version(i).ok()).collect::<Option<_>>().ok_or_else(bad)?,
                    ),
                };
                Ok(PropertyValue::List(list))
            }
        }
    }

    /// Inverse of [`PropertyValue::parse_typed`] for this value's own type.
    pub fn render(&self) -> String {
        match self {
            PropertyValue::String(s) => s.clone(),
            PropertyValue::Long(n) => n.to_string(),
            PropertyValue::Double(d) => d.to_string(),
            PropertyValue::Version(v) => v.to_string(),
            PropertyValue::List(list) => {
                let items: Vec<String> = match list {
                    PropertyList::String(xs) => xs.iter().map(|s| escape_list_item(s)).collect(),
                    PropertyList::Long(xs) => xs.iter().map(i64::to_string).collect(),
                    PropertyList::Double(xs) => xs.iter().map(f64::to_string).collect(),
                    PropertyList::Version(xs) => xs.iter().map(Version::to_string).collect(),
                };
                items.join(",")
            }
        }
    }
}

impl From<&str> for PropertyValue {
    fn from(s: &str) -> Self {
        PropertyValue::String(s.to_string())
    }
}

impl From<String> for PropertyValue {
    fn from(s: String) -> Self {
        PropertyValue::String(s)
    }
}

impl From<i64> for PropertyValue {
    fn from(n: i64) -> Self {
        PropertyValue::Long(n)
    }
}

impl From<Version> for PropertyValue {
    fn from(v: Version) -> Self {
        PropertyValue::Version(v)
    }
}

pub(crate) fn parse_long(text: &str) -> Option<i64> {
    text.parse().ok()
}

/// Finite decimal floats only.
pub(crate) fn parse_double(text: &str) -> Option<f64> {
    let lower = text.to_ascii_lowercase();
    if lower.contains("inf") || lower.contains("nan") {
        return None;
    }
    text.parse::<f64>().ok().filter(|d| d.is_finite())
}

fn parse_scalar(scalar: ScalarType, text: &str) -> Option<PropertyValue> {
    Some(match scalar {
        ScalarType::String => PropertyValue::String(text.to_string()),
        ScalarType::Long => PropertyValue::Long(parse_long(text)?),
        ScalarType::Double => PropertyValue::Double(parse_double(text)?),
        ScalarType::Version => PropertyValue::Version(parse_version(text).ok()?),
    })
}

fn split_list(text: &str) -> Vec<String> {
    let mut items = Vec::new();
    let mut current = String::new();
    let mut chars = text.chars().peekable();
    while let Some(c) = chars.next() {
        match c {
            '\\' if matches!(chars.peek(), Some(',') | Some('\\')) => {
                current.push(chars.next().unwrap());
            }
            ',' => items.push(std::mem::take(&mut current)),
            _ => current.push(c),
        }
    }
    items.push(current);
    items
}

fn escape_list_item(item: &str) -> String {
    let mut out = String::with_capacity(item.len());
    let mut chars = item.chars().peekable();
    while let Some(c) = chars.next() {
        match c {
            ',' => out.push_str("\\,"),
            // a backslash only needs doubling where it would read as an escape
            '\\' if matches!(chars.peek(), None | Some(',') | Some('\\')) => out.push_str("\\\\"),
            _ => out.push(c),
        }
    }
    out
}

/// Attribute name to value, ordered by name.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PropertyMap(BTreeMap<String, PropertyValue>);

impl PropertyMap {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, value: impl Into<PropertyValue>) -> Result<(), PropertyError> {
        let name = name.into();
        if !is_valid_name(&name) {
            return Err(PropertyError::InvalidName(name));
        }
        let value = value.into();
        let valid = match &value {
            PropertyValue::Double(d) => d.is_finite(),
            PropertyValue::List(PropertyList::Double(ds)) => ds.iter().all(|d| d.is_finite()),
            PropertyValue::List(PropertyList::String(xs)) => xs.iter().all(|x| !x.is_empty()),
            _ => true,
        };
        if !valid {
            return Err(PropertyError::BadValue { ty: value.property_type(), value: value.render() });
        }
        if self.0.contains_key(&name) {
            return Err(PropertyError::Duplicate(name));
        }
        self.0.insert(name, value);
        Ok(())
    }

    /// Builder-style insert for literals known to be valid.
    pub fn with(mut self, name: &str, value: impl Into<PropertyValue>) -> Self {
        self.insert(name, value).expect("valid property");
        self
    }

    pub fn get(&self, name: &str) -> Option<&PropertyValue> {
        self.0.get(name)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.0.contains_key(name)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &PropertyValue)> {
        self.0.iter().map(|(k, v)| (k.as_str(), v))
    }
}
