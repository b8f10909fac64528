//! The attribute filter language requirements use to select capabilities.
//!
//! Surface syntax follows the LDAP string-filter family:
//!
//! ```text
//! (&(input=image)(input.width>=28)(|(dataset=MNIST)(dataset=SVHN)))
//! ```
//!
//! Literals are untyped text; they are coerced to the kind of the stored
//! property at evaluation time, so the same filter compares `Long`s
//! numerically and `String`s byte-wise.

mod eval;
mod parser;
pub mod value;

use std::fmt;

pub use eval::eval_filter;
pub use parser::{parse_filter, parse_filter_with_limit, FilterError, DEFAULT_MAX_DEPTH};
pub use value::{PropertyError, PropertyList, PropertyMap, PropertyType, PropertyValue, ScalarType};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CompareOp {
    Eq,
    Ge,
    Le,
}

impl CompareOp {
    pub fn symbol(self) -> &'static str {
        match self {
            CompareOp::Eq => "=",
            CompareOp::Ge => ">=",
            CompareOp::Le => "<=",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Filter {
    And(Vec<Filter>),
    Or(Vec<Filter>),
    Not(Box<Filter>),
    Compare {
        attr: String,
        op: CompareOp,
        literal: String,
    },
    Present(String),
    /// `chunks` are the literal pieces between wildcards: at least two, with
    /// only the first and last allowed to be empty, and not all empty.
    Substring {
        attr: String,
        chunks: Vec<String>,
    },
}

impl Filter {
    pub fn eq(attr: impl Into<String>, literal: impl Into<String>) -> Self {
        Filter::Compare { attr: attr.into(), op: CompareOp::Eq, literal: literal.into() }
    }

    pub fn ge(attr: impl Into<String>, literal: impl Into<String>) -> Self {
        Filter::Compare { attr: attr.into(), op: CompareOp::Ge, literal: literal.into() }
    }

    pub fn le(attr: impl Into<String>, literal: impl Into<String>) -> Self {
        Filter::Compare { attr: attr.into(), op: CompareOp::Le, literal: literal.into() }
    }

    pub fn present(attr: impl Into<String>) -> Self {
        Filter::Present(attr.into())
    }

    #[allow(clippy::should_implement_trait)]
    pub fn not(inner: Filter) -> Self {
        Filter::Not(Box::new(inner))
    }

    pub fn depth(&self) -> usize {
        match self {
            Filter::And(children) | Filter::Or(children) => 1 + children.iter().map(Filter::depth).max().unwrap_or(0),
            Filter::Not(child) => 1 + child.depth(),
            _ => 1,
        }
    }

    pub fn matches(&self, props: &PropertyMap) -> bool {
        eval_filter(self, props)
    }
}

fn write_escaped(f: &mut fmt::Formatter<'_>, literal: &str) -> fmt::Result {
    for c in literal.chars() {
        if matches!(c, '(' | ')' | '*' | '\\') {
            f.write_str("\\")?;
        }
        write!(f, "{c}")?;
    }
    Ok(())
}

/// Canonical form: no whitespace, children in order, minimal escaping.
impl fmt::Display for Filter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("(")?;
        match self {
            Filter::And(children) | Filter::Or(children) => {
                f.write_str(if matches!(self, Filter::And(_)) { "&" } else { "|" })?;
                for child in children {
                    write!(f, "{child}")?;
                }
            }
            Filter::Not(child) => write!(f, "!{child}")?,
            Filter::Compare { attr, op, literal } => {
                write!(f, "{attr}{}", op.symbol())?;
                write_escaped(f, literal)?;
            }
            Filter::Present(attr) => write!(f, "{attr}=*")?,
            Filter::Substring { attr, chunks } => {
                write!(f, "{attr}=")?;
                for (i, chunk) in chunks.iter().enumerate() {
                    if i > 0 {
                        f.write_str("*")?;
                    }
                    write_escaped(f, chunk)?;
                }
            }
        }
        f.write_str(")")
    }
}

pub fn serialize_filter(filter: &Filter) -> String {
    filter.to_string()
}

impl std::str::FromStr for Filter {
    type Err = FilterError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_filter(s)
    }
}
