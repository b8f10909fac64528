use thiserror::Error;

use super::value::is_valid_name;
use super::{CompareOp, Filter};

pub const DEFAULT_MAX_DEPTH: usize = 64;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FilterError {
    #[error("syntax-error at byte {offset}: {message}")]
    Syntax { offset: usize, message: String },
    #[error("depth-limit-exceeded: filter nests deeper than {limit}")]
    DepthLimitExceeded { limit: usize },
}

pub fn parse_filter(text: &str) -> Result<Filter, FilterError> {
    parse_filter_with_limit(text, DEFAULT_MAX_DEPTH)
}

pub fn parse_filter_with_limit(text: &str, max_depth: usize) -> Result<Filter, FilterError> {
    let mut parser = Parser { src: text.as_bytes(), pos: 0, max_depth };
    parser.skip_ws();
    let filter = parser.filter(1)?;
    parser.skip_ws();
    if parser.pos != parser.src.len() {
        return Err(parser.error("unexpected input after filter"));
    }
    Ok(filter)
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
    max_depth: usize,
}

enum ValuePiece {
    Literal(String),
    Wildcard,
}

impl Parser<'_> {
    fn error(&self, message: &str) -> FilterError {
        FilterError::Syntax { offset: self.pos, message: message.to_string() }
    }

    fn peek(&self) -> Option<u8> {
        self.src.get(self.pos).copied()
    }

    fn skip_ws(&mut self) {
        while matches!(self.peek(), Some(b' ' | b'\t' | b'\n' | b'\r')) {
            self.pos += 1;
        }
    }

    fn expect(&mut self, byte: u8) -> Result<(), FilterError> {
        match self.peek() {
            Some(b) if b == byte => {
                self.pos += 1;
                Ok(())
            }
            Some(_) => Err(self.error(&format!("expected '{}'", byte as char))),
            None => Err(self.error(&format!("unexpected end of input, expected '{}'", byte as char))),
        }
    }

    fn filter(&mut self, depth: usize) -> Result<Filter, FilterError> {
        if depth > self.max_depth {
            return Err(FilterError::DepthLimitExceeded { limit: self.max_depth });
        }
        self.expect(b'(')?;
        let filter = match self.peek() {
            Some(b'&') => {
                self.pos += 1;
                Filter::And(self.filter_list(depth)?)
            }
            Some(b'|') => {
                self.pos += 1;
                Filter::Or(self.filter_list(depth)?)
            }
            Some(b'!') => {
                self.pos += 1;
                self.skip_ws();
                let child = self.filter(depth + 1)?;
                self.skip_ws();
                Filter::Not(Box::new(child))
            }
            _ => self.item()?,
        };
        self.expect(b')')?;
        Ok(filter)
    }

    fn filter_list(&mut self, depth: usize) -> Result<Vec<Filter>, FilterError> {
        let mut children = Vec::new();
        loop {
            self.skip_ws();
            if self.peek() != Some(b'(') {
                break;
            }
            children.push(self.filter(depth + 1)?);
        }
        if children.is_empty() {
            return Err(self.error("expected at least one sub-filter"));
        }
        Ok(children)
    }

    fn item(&mut self) -> Result<Filter, FilterError> {
        let start = self.pos;
        while matches!(self.peek(), Some(b) if b.is_ascii_alphanumeric() || matches!(b, b'.' | b'_' | b'-')) {
            self.pos += 1;
        }
        let attr = std::str::from_utf8(&self.src[start..self.pos]).expect("ascii");
        if !is_valid_name(attr) {
            return Err(self.error("expected attribute name"));
        }
        let attr = attr.to_string();
        let op = match (self.peek(), self.src.get(self.pos + 1).copied()) {
            (Some(b'='), _) => {
                self.pos += 1;
                CompareOp::Eq
            }
            (Some(b'>'), Some(b'=')) => {
                self.pos += 2;
                CompareOp::Ge
            }
            (Some(b'<'), Some(b'=')) => {
                self.pos += 2;
                CompareOp::Le
            }
            (Some(b'~'), Some(b'=')) => return Err(self.error("approximate match is not supported")),
            _ => return Err(self.error("expected '=', '>=' or '<='")),
        };
        let value_start = self.pos;
        let pieces = self.value()?;
        let wildcards = pieces.iter().filter(|p| matches!(p, ValuePiece::Wildcard)).count();
        if wildcards == 0 {
            let literal = match pieces.into_iter().next() {
                Some(ValuePiece::Literal(s)) => s,
                _ => String::new(),
            };
            return Ok(Filter::Compare { attr, op, literal });
        }
        if op != CompareOp::Eq {
            return Err(FilterError::Syntax {
                offset: value_start,
                message: "wildcards are only allowed with '='".to_string(),
            });
        }
        let mut chunks = vec![String::new()];
        for piece in pieces {
            match piece {
                ValuePiece::Literal(s) => chunks.last_mut().unwrap().push_str(&s),
                ValuePiece::Wildcard => chunks.push(String::new()),
            }
        }
        if chunks.iter().all(String::is_empty) {
            if wildcards == 1 {
                return Ok(Filter::Present(attr));
            }
            return Err(FilterError::Syntax {
                offset: value_start,
                message: "substring pattern has no literal text".to_string(),
            });
        }
        // consecutive wildcards collapse into one
        let last = chunks.len() - 1;
        let chunks = chunks
            .into_iter()
            .enumerate()
            .filter(|(i, c)| *i == 0 || *i == last || !c.is_empty())
            .map(|(_, c)| c)
            .collect();
        Ok(Filter::Substring { attr, chunks })
    }

    fn value(&mut self) -> Result<Vec<ValuePiece>, FilterError> {
        let mut pieces = Vec::new();
        let mut literal: Vec<u8> = Vec::new();
        let flush = |literal: &mut Vec<u8>, pieces: &mut Vec<ValuePiece>| {
            if !literal.is_empty() {
                // splitting only happens at ASCII delimiters, so each piece stays valid UTF-8
                let text = String::from_utf8(std::mem::take(literal)).expect("utf-8 input");
                pieces.push(ValuePiece::Literal(text));
            }
        };
        loop {
            match self.peek() {
                None => return Err(self.error("unterminated filter value")),
                Some(b')') => break,
                Some(b'(') => return Err(self.error("unescaped '(' in value")),
                Some(b'*') => {
                    flush(&mut literal, &mut pieces);
                    pieces.push(ValuePiece::Wildcard);
                    self.pos += 1;
                }
                Some(b'\\') => match self.src.get(self.pos + 1) {
                    Some(&c @ (b'(' | b')' | b'*' | b'\\')) => {
                        literal.push(c);
                        self.pos += 2;
                    }
                    _ => return Err(self.error("invalid escape sequence")),
                },
                Some(b) => {
                    literal.push(b);
                    self.pos += 1;
                }
            }
        }
        flush(&mut literal, &mut pieces);
        Ok(pieces)
    }
}
