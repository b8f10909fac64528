use std::cmp::Ordering;

use super::value::{parse_double, parse_long, PropertyList, PropertyMap, PropertyValue};
use super::{CompareOp, Filter};
use crate::semver::parse_version;

/// Evaluates `filter` against `props`. Total: absent attributes and
/// literals that do not coerce to the stored kind evaluate to `false`.
pub fn eval_filter(filter: &Filter, props: &PropertyMap) -> bool {
    match filter {
        Filter::And(children) => children.iter().all(|c| eval_filter(c, props)),
        Filter::Or(children) => children.iter().any(|c| eval_filter(c, props)),
        Filter::Not(child) => !eval_filter(child, props),
        Filter::Present(attr) => props.contains(attr),
        Filter::Compare { attr, op, literal } => match props.get(attr) {
            None => false,
            Some(PropertyValue::List(list)) => compare_list(list, *op, literal),
            Some(value) => compare_scalar(value, *op, literal),
        },
        Filter::Substring { attr, chunks } => match props.get(attr) {
            Some(PropertyValue::String(s)) => substring_match(s, chunks),
            Some(PropertyValue::List(PropertyList::String(xs))) => xs.iter().any(|s| substring_match(s, chunks)),
            _ => false,
        },
    }
}

fn apply(op: CompareOp, ord: Option<Ordering>) -> bool {
    match (op, ord) {
        (_, None) => false,
        (CompareOp::Eq, Some(o)) => o == Ordering::Equal,
        (CompareOp::Ge, Some(o)) => o != Ordering::Less,
        (CompareOp::Le, Some(o)) => o != Ordering::Greater,
    }
}

fn compare_scalar(value: &PropertyValue, op: CompareOp, literal: &str) -> bool {
    let ord = match value {
        PropertyValue::String(s) => Some(s.as_bytes().cmp(literal.as_bytes())),
        PropertyValue::Long(n) => parse_long(literal).map(|l| n.cmp(&l)),
        PropertyValue::Double(d) => parse_double(literal).and_then(|l| d.partial_cmp(&l)),
        PropertyValue::Version(v) => parse_version(literal).ok().map(|l| v.cmp(&l)),
        PropertyValue::List(_) => None,
    };
    apply(op, ord)
}

fn compare_list(list: &PropertyList, op: CompareOp, literal: &str) -> bool {
    match list {
        PropertyList::String(xs) => xs.iter().any(|s| apply(op, Some(s.as_bytes().cmp(literal.as_bytes())))),
        PropertyList::Long(xs) => match parse_long(literal) {
            Some(l) => xs.iter().any(|n| apply(op, Some(n.cmp(&l)))),
            None => false,
        },
        PropertyList::Double(xs) => match parse_double(literal) {
            Some(l) => xs.iter().any(|d| apply(op, d.partial_cmp(&l))),
            None => false,
        },
        PropertyList::Version(xs) => match parse_version(literal) {
            Ok(l) => xs.iter().any(|v| apply(op, Some(v.cmp(&l)))),
            Err(_) => false,
        },
    }
}

fn substring_match(text: &str, chunks: &[String]) -> bool {
    let (first, rest) = match chunks.split_first() {
        Some(split) => split,
        None => return false,
    };
    let (last, middle) = match rest.split_last() {
        Some(split) => split,
        None => return text == first,
    };
    if text.len() < first.len() + last.len() || !text.starts_with(first.as_str()) || !text.ends_with(last.as_str()) {
        return false;
    }
    let mut window = &text[first.len()..text.len() - last.len()];
    for chunk in middle {
        match window.find(chunk.as_str()) {
            Some(at) => window = &window[at + chunk.len()..],
            None => return false,
        }
    }
    true
}
