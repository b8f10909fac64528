//! Three-component semantic versions and interval ranges over them.
//!
//! Versions are strictly `MAJOR.MINOR.PATCH`; pre-release and build
//! qualifiers are rejected. Ranges use interval notation (`[1.2.3,2.0.0)`),
//! and a bare version `v` denotes `[v, +inf)`.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum VersionError {
    #[error("malformed-version: {0:?}")]
    Malformed(String),
    #[error("malformed-range: {0:?}")]
    MalformedRange(String),
    #[error("empty-range: {0:?}")]
    EmptyRange(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct Version {
    pub major: u64,
    pub minor: u64,
    pub patch: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BumpKind {
    Major,
    Minor,
    Patch,
}

impl Version {
    pub const fn new(major: u64, minor: u64, patch: u64) -> Self {
        Self { major, minor, patch }
    }

    /// Increments one component and resets the lower ones.
    pub fn bump(self, kind: BumpKind) -> Self {
        match kind {
            BumpKind::Major => Self::new(self.major + 1, 0, 0),
            BumpKind::Minor => Self::new(self.major, self.minor + 1, 0),
            BumpKind::Patch => Self::new(self.major, self.minor, self.patch + 1),
        }
    }
}

impl fmt::Display for Version {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}.{}", self.major, self.minor, self.patch)
    }
}

fn parse_component(segment: &str) -> Option<u64> {
    if segment.is_empty() || !segment.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    // leading zeros normalize to the numeric value
    segment.parse().ok()
}

/// Parses `INT.INT.INT` exactly.
pub fn parse_version(text: &str) -> Result<Version, VersionError> {
    let malformed = || VersionError::Malformed(text.to_string());
    let mut parts = text.split('.');
    let mut next = || parts.next().and_then(parse_component).ok_or_else(malformed);
    let version = Version::new(next()?, next()?, next()?);
    if parts.next().is_some() {
        return Err(malformed());
    }
    Ok(version)
}

impl FromStr for Version {
    type Err = VersionError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_version(s)
    }
}

pub fn compare(a: &Version, b: &Version) -> Ordering {
    a.cmp(b)
}

/// A closed, half-open or open interval of versions. `high == None` means
/// unbounded above.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct VersionRange {
    low: Version,
    low_inclusive: bool,
    high: Option<Version>,
    high_inclusive: bool,
}

impl VersionRange {
    pub fn new(
        low: Version,
        low_inclusive: bool,
        high: Option<Version>,
        high_inclusive: bool,
    ) -> Result<Self, VersionError> {
        if let Some(high) = high {
            let empty = match low.cmp(&high) {
                Ordering::Greater => true,
                Ordering::Equal => !(low_inclusive && high_inclusive),
                Ordering::Less => false,
            };
            if empty {
                let probe = Self { low, low_inclusive, high: Some(high), high_inclusive };
                return Err(VersionError::EmptyRange(probe.to_string()));
            }
        }
        Ok(Self { low, low_inclusive, high, high_inclusive: high.is_some() && high_inclusive })
    }

    /// `[low, +inf)`
    pub fn at_least(low: Version) -> Self {
        Self { low, low_inclusive: true, high: None, high_inclusive: false }
    }

    pub fn low(&self) -> Version {
        self.low
    }

    pub fn low_inclusive(&self) -> bool {
        self.low_inclusive
    }

    pub fn high(&self) -> Option<Version> {
        self.high
    }

    pub fn high_inclusive(&self) -> bool {
        self.high_inclusive
    }

    pub fn contains(&self, v: &Version) -> bool {
        let above_low = match v.cmp(&self.low) {
            Ordering::Greater => true,
            Ordering::Equal => self.low_inclusive,
            Ordering::Less => false,
        };
        let below_high = match self.high {
            None => true,
            Some(high) => match v.cmp(&high) {
                Ordering::Less => true,
                Ordering::Equal => self.high_inclusive,
                Ordering::Greater => false,
            },
        };
        above_low && below_high
    }
}

impl fmt::Display for VersionRange {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.high {
            None if self.low_inclusive => write!(f, "{}", self.low),
            None => write!(f, "({},)", self.low),
            Some(high) => write!(
                f,
                "{}{},{}{}",
                if self.low_inclusive { '[' } else { '(' },
                self.low,
                high,
                if self.high_inclusive { ']' } else { ')' },
            ),
        }
    }
}

/// Parses `[v,w)`, `[v,w]`, `(v,w)`, `(v,w]` or a bare `v`. Whitespace is
/// only allowed directly after the comma.
pub fn parse_range(text: &str) -> Result<VersionRange, VersionError> {
    let malformed = || VersionError::MalformedRange(text.to_string());
    let low_inclusive = match text.as_bytes().first() {
        Some(b'[') => true,
        Some(b'(') => false,
        Some(_) => {
            let low = parse_version(text).map_err(|_| malformed())?;
            return Ok(VersionRange::at_least(low));
        }
        None => return Err(malformed()),
    };
    let high_inclusive = match text.as_bytes().last() {
        Some(b']') if text.len() > 1 => true,
        Some(b')') if text.len() > 1 => false,
        _ => return Err(malformed()),
    };
    let inner = &text[1..text.len() - 1];
    let (low, high) = inner.split_once(',').ok_or_else(malformed)?;
    let high = high.trim_start_matches([' ', '\t']);
    let low = parse_version(low).map_err(|_| malformed())?;
    let high = parse_version(high).map_err(|_| malformed())?;
    VersionRange::new(low, low_inclusive, Some(high), high_inclusive).map_err(|e| match e {
        VersionError::EmptyRange(_) => VersionError::EmptyRange(text.to_string()),
        other => other,
    })
}

impl FromStr for VersionRange {
    type Err = VersionError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_range(s)
    }
}
