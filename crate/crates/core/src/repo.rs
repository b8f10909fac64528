//! Repository indexes: an ordered set of resources plus an inverted
//! namespace index, persisted as a checksummed text file.
//!
//! ```text
//! capstan-index 1
//! sha256 <digest of every byte after this line>
//! name <repository name>
//! ---
//! <manifest>
//! ---
//! <manifest>
//! ```

use std::collections::BTreeMap;

use thiserror::Error;

use crate::digest::Sha256Digest;
use crate::filter::value::is_valid_name;
use crate::model::{matches, parse_manifest, serialize_manifest, Capability, ManifestError, Requirement, Resource};
use crate::semver::Version;

pub const FORMAT_TAG: &str = "capstan-index";
pub const FORMAT_VERSION: u32 = 1;
const SEPARATOR: &str = "---";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum IndexError {
    #[error("duplicate-resource: {identity} {version} given by both {first} and {second}")]
    DuplicateResource { identity: String, version: Version, first: String, second: String },
    #[error("invalid repository name {0:?}")]
    InvalidName(String),
    #[error("unsupported-format-version: {0:?}")]
    UnsupportedFormatVersion(String),
    #[error("corrupt-index: {0}")]
    CorruptIndex(String),
    #[error("corrupt-index: resource block {block}: {source}")]
    Manifest { block: usize, source: ManifestError },
}

#[derive(Debug, Clone, PartialEq)]
pub struct RepositoryIndex {
    name: String,
    resources: Vec<Resource>,
    /// namespace -> (resource ordinal, capability ordinal)
    namespace_index: BTreeMap<String, Vec<(usize, usize)>>,
}

/// A capability offered by a resource of an index, with its ordinals.
#[derive(Debug, Clone, Copy)]
pub struct Provider<'a> {
    pub resource_ordinal: usize,
    pub capability_ordinal: usize,
    pub resource: &'a Resource,
    pub capability: &'a Capability,
}

fn invert(resources: &[Resource]) -> BTreeMap<String, Vec<(usize, usize)>> {
    let mut index: BTreeMap<String, Vec<(usize, usize)>> = BTreeMap::new();
    for (r, resource) in resources.iter().enumerate() {
        for (c, cap) in resource.capabilities().iter().enumerate() {
            index.entry(cap.namespace.clone()).or_default().push((r, c));
        }
    }
    index
}

/// Builds an index, ordering resources by identity then version. Duplicate
/// `(identity, version)` pairs are reported as `#<position>` origins.
pub fn build_index(name: &str, resources: Vec<Resource>) -> Result<RepositoryIndex, IndexError> {
    build_index_with_origins(name, resources.into_iter().enumerate().map(|(i, r)| (format!("#{i}"), r)).collect())
}

/// Like [`build_index`], with a caller-supplied origin (e.g. a file name)
/// per resource for duplicate diagnostics.
pub fn build_index_with_origins(name: &str, entries: Vec<(String, Resource)>) -> Result<RepositoryIndex, IndexError> {
    if !is_valid_name(name) {
        return Err(IndexError::InvalidName(name.to_string()));
    }
    let mut entries = entries;
    entries.sort_by(|(_, a), (_, b)| (a.identity(), a.version()).cmp(&(b.identity(), b.version())));
    for pair in entries.windows(2) {
        let ((first, a), (second, b)) = (&pair[0], &pair[1]);
        if a.identity() == b.identity() && a.version() == b.version() {
            return Err(IndexError::DuplicateResource {
                identity: a.identity().to_string(),
                version: a.version(),
                first: first.clone(),
                second: second.clone(),
            });
        }
    }
    let resources: Vec<Resource> = entries.into_iter().map(|(_, r)| r).collect();
    let namespace_index = invert(&resources);
    Ok(RepositoryIndex { name: name.to_string(), resources, namespace_index })
}

impl RepositoryIndex {
    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn resources(&self) -> &[Resource] {
        &self.resources
    }

    pub fn len(&self) -> usize {
        self.resources.len()
    }

    pub fn is_empty(&self) -> bool {
        self.resources.is_empty()
    }

    pub fn namespace_entries(&self, namespace: &str) -> &[(usize, usize)] {
        self.namespace_index.get(namespace).map_or(&[], Vec::as_slice)
    }

    /// Checks that the namespace index is exactly the inverted view of the
    /// resources' capabilities.
    pub fn verify(&self) -> bool {
        self.namespace_index == invert(&self.resources)
    }

    /// Every capability matching `req`, newest provider first, then by
    /// resource and capability ordinal.
    pub fn find_providers(&self, req: &Requirement) -> Vec<Provider<'_>> {
        let mut found: Vec<Provider<'_>> = self
            .namespace_entries(&req.namespace)
            .iter()
            .map(|&(r, c)| Provider {
                resource_ordinal: r,
                capability_ordinal: c,
                resource: &self.resources[r],
                capability: &self.resources[r].capabilities()[c],
            })
            .filter(|p| matches(req, p.capability))
            .collect();
        found.sort_by(|a, b| {
            b.resource
                .version()
                .cmp(&a.resource.version())
                .then(a.resource_ordinal.cmp(&b.resource_ordinal))
                .then(a.capability_ordinal.cmp(&b.capability_ordinal))
        });
        found
    }
}

pub fn find_providers<'a>(idx: &'a RepositoryIndex, req: &Requirement) -> Vec<Provider<'a>> {
    idx.find_providers(req)
}

pub fn save_index(idx: &RepositoryIndex) -> Vec<u8> {
    let mut body = format!("name {}\n", idx.name);
    // resources are kept sorted by identity then version at build time
    for resource in &idx.resources {
        body.push_str(SEPARATOR);
        body.push('\n');
        body.push_str(&serialize_manifest(resource));
    }
    let digest = Sha256Digest::of(body.as_bytes());
    format!("{FORMAT_TAG} {FORMAT_VERSION}\nsha256 {digest}\n{body}").into_bytes()
}

fn split_line(bytes: &[u8]) -> Option<(&[u8], &[u8])> {
    let nl = bytes.iter().position(|&b| b == b'\n')?;
    Some((&bytes[..nl], &bytes[nl + 1..]))
}

pub fn load_index(bytes: &[u8]) -> Result<RepositoryIndex, IndexError> {
    let corrupt = |m: &str| IndexError::CorruptIndex(m.to_string());
    let (tag_line, rest) = split_line(bytes).ok_or_else(|| corrupt("missing format line"))?;
    let tag_line = std::str::from_utf8(tag_line).map_err(|_| corrupt("format line is not UTF-8"))?;
    match tag_line.split_once(' ') {
        Some((FORMAT_TAG, version)) if version == FORMAT_VERSION.to_string() => {}
        Some((FORMAT_TAG, version)) => return Err(IndexError::UnsupportedFormatVersion(version.to_string())),
        _ => return Err(corrupt("not a repository index")),
    }
    let (sum_line, body) = split_line(rest).ok_or_else(|| corrupt("missing checksum line"))?;
    let expected = std::str::from_utf8(sum_line)
        .ok()
        .and_then(|l| l.strip_prefix("sha256 "))
        .and_then(|d| d.parse::<Sha256Digest>().ok())
        .ok_or_else(|| corrupt("malformed checksum line"))?;
    if Sha256Digest::of(body) != expected {
        return Err(corrupt("checksum mismatch"));
    }
    let body = std::str::from_utf8(body).map_err(|_| corrupt("body is not UTF-8"))?;
    let (name_line, blocks) = body.split_once('\n').ok_or_else(|| corrupt("missing name line"))?;
    let name = name_line.strip_prefix("name ").ok_or_else(|| corrupt("missing name line"))?;

    let mut resources = Vec::new();
    let mut current: Option<String> = None;
    for line in blocks.split_inclusive('\n') {
        if line.trim_end_matches('\n') == SEPARATOR {
            resources.extend(current.replace(String::new()));
        } else {
            current.as_mut().ok_or_else(|| corrupt("content before the first resource separator"))?.push_str(line);
        }
    }
    resources.extend(current);
    let resources = resources
        .iter()
        .enumerate()
        .map(|(block, text)| parse_manifest(text).map_err(|source| IndexError::Manifest { block, source }))
        .collect::<Result<Vec<_>, _>>()?;
    build_index(name, resources)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::filter::{parse_filter, PropertyMap};
    use crate::model::{parse_requirement_clause, Capability};
    use proptest::prelude::*;

    fn res(name: &str, version: (u64, u64, u64), caps: Vec<Capability>) -> Resource {
        let mut r = Resource::new(name, Version::new(version.0, version.1, version.2)).unwrap();
        for c in caps {
            r.add_capability(c).unwrap();
        }
        r
    }

    fn cap(ns: &str, props: PropertyMap) -> Capability {
        Capability::new(ns, props).unwrap()
    }

    fn mnist() -> Resource {
        let props = PropertyMap::new()
            .with("input", "image")
            .with("input.height", 28i64)
            .with("input.width", 28i64)
            .with("output.type", "digit")
            .with("output.size", 10i64)
            .with("dataset", "MNIST")
            .with("version", "1.0.0");
        res("mnist-model", (1, 0, 0), vec![cap("ml.model", props)])
    }

    fn fixture() -> Vec<Resource> {
        vec![
            res("runtime", (1, 0, 0), vec![cap("runtime.ops", PropertyMap::new().with("ops", "tensor"))]),
            mnist(),
            res("consumer", (0, 1, 0), vec![]),
        ]
    }

    #[test]
    fn build_and_find() {
        let idx = build_index("local", fixture()).unwrap();
        assert_eq!(idx.len(), 3);
        assert!(idx.verify());
        // manual count over the fixture: only mnist-model offers ml.model
        assert_eq!(idx.namespace_entries("ml.model").len(), 1);
        assert_eq!(idx.namespace_entries("id").len(), 3);
        let req = parse_requirement_clause(
            "ml.model; filter:='(&(input=image)(input.width>=28)(input.height>=28)(output.type=digit)(|(dataset=MNIST)(dataset=SVHN)))'",
        )
        .unwrap();
        let found = idx.find_providers(&req);
        assert_eq!(found.len(), 1);
        assert_eq!(found[0].resource.identity(), "mnist-model");
        assert_eq!(found[0].capability.namespace, "ml.model");
        assert!(idx.find_providers(&Requirement::new("absent.ns", None).unwrap()).is_empty());
    }

    #[test]
    fn resources_are_sorted_by_identity_then_version() {
        let idx = build_index("local", fixture()).unwrap();
        let names: Vec<_> = idx.resources().iter().map(|r| r.identity()).collect();
        assert_eq!(names, ["consumer", "mnist-model", "runtime"]);
    }

    #[test]
    fn newest_provider_first() {
        let p = || PropertyMap::new().with("ops", "tensor");
        let idx = build_index(
            "local",
            vec![
                res("rt", (1, 0, 0), vec![cap("runtime.ops", p())]),
                res("rt", (1, 1, 0), vec![cap("runtime.ops", p())]),
            ],
        )
        .unwrap();
        let found = idx.find_providers(&Requirement::new("runtime.ops", None).unwrap());
        let versions: Vec<_> = found.iter().map(|p| p.resource.version().to_string()).collect();
        assert_eq!(versions, ["1.1.0", "1.0.0"]);
    }

    #[test]
    fn duplicate_resources_rejected() {
        let err = build_index("local", vec![mnist(), fixture()[0].clone(), mnist()]).unwrap_err();
        assert_eq!(
            err,
            IndexError::DuplicateResource {
                identity: "mnist-model".into(),
                version: Version::new(1, 0, 0),
                first: "#0".into(),
                second: "#2".into()
            }
        );
    }

    #[test]
    fn persistence_round_trip() {
        let idx = build_index("local", fixture()).unwrap();
        let bytes = save_index(&idx);
        assert_eq!(load_index(&bytes), Ok(idx.clone()));
        assert_eq!(save_index(&build_index("local", fixture().into_iter().rev().collect()).unwrap()), bytes);
        let text = String::from_utf8(bytes).unwrap();
        assert!(text.starts_with("capstan-index 1\nsha256 "));
    }

    #[test]
    fn empty_index_file() {
        let idx = build_index("empty", vec![]).unwrap();
        let bytes = save_index(&idx);
        let text = std::str::from_utf8(&bytes).unwrap();
        assert_eq!(text.lines().count(), 3);
        assert!(!text.contains(SEPARATOR));
        assert_eq!(load_index(&bytes).unwrap(), idx);
    }

    #[test]
    fn tampering_is_detected() {
        let bytes = save_index(&build_index("local", fixture()).unwrap());
        let header_len = bytes.iter().enumerate().filter(|(_, &b)| b == b'\n').nth(1).unwrap().0 + 1;
        for pos in [header_len, header_len + 10, bytes.len() - 2] {
            let mut tampered = bytes.clone();
            tampered[pos] ^= 0x01;
            assert!(matches!(load_index(&tampered), Err(IndexError::CorruptIndex(_))), "byte {pos}");
        }
    }

    #[test]
    fn format_version_checked() {
        let text = String::from_utf8(save_index(&build_index("local", fixture()).unwrap())).unwrap();
        let bumped = text.replacen("capstan-index 1", "capstan-index 2", 1);
        assert_eq!(load_index(bumped.as_bytes()), Err(IndexError::UnsupportedFormatVersion("2".into())));
        assert!(matches!(load_index(b"hello\n"), Err(IndexError::CorruptIndex(_))));
        assert!(matches!(load_index(b""), Err(IndexError::CorruptIndex(_))));
    }

    fn arb_resources() -> impl Strategy<Value = Vec<Resource>> {
        let one = (
            prop::sample::select(vec!["a", "b", "c", "d"]),
            0u64..3,
            prop::collection::vec(
                (prop::sample::select(vec!["x", "y"]), 0i64..4, prop::sample::select(vec!["p", "q"])),
                0..3,
            ),
        )
            .prop_map(|(name, minor, caps)| {
                let caps =
                    caps.into_iter().map(|(ns, n, s)| cap(ns, PropertyMap::new().with("n", n).with("s", s))).collect();
                res(name, (1, minor, 0), caps)
            });
        prop::collection::vec(one, 0..6).prop_map(|mut v| {
            v.sort_by(|a, b| (a.identity(), a.version()).cmp(&(b.identity(), b.version())));
            v.dedup_by(|a, b| a.identity() == b.identity() && a.version() == b.version());
            v
        })
    }

    proptest! {
        #[test]
        fn find_providers_equals_brute_force(resources in arb_resources(), ns in prop::sample::select(vec!["x", "y", "id"]), filter in prop::sample::select(vec!["(n>=2)", "(s=p)", "(|(n=0)(s=q))", "(name=b)"])) {
            let idx = build_index("r", resources).unwrap();
            let req = Requirement::new(ns, Some(parse_filter(filter).unwrap())).unwrap();
            let got: Vec<(usize, usize)> = idx.find_providers(&req).iter().map(|p| (p.resource_ordinal, p.capability_ordinal)).collect();
            let mut expected = Vec::new();
            for (r, resource) in idx.resources().iter().enumerate() {
                for (c, capability) in resource.capabilities().iter().enumerate() {
                    if matches(&req, capability) {
                        expected.push((r, c));
                    }
                }
            }
            expected.sort_by(|a, b| idx.resources()[b.0].version().cmp(&idx.resources()[a.0].version()).then(a.cmp(b)));
            prop_assert_eq!(got, expected);
        }

        #[test]
        fn save_load_identity(resources in arb_resources()) {
            let idx = build_index("r", resources).unwrap();
            let bytes = save_index(&idx);
            prop_assert_eq!(save_index(&load_index(&bytes).unwrap()), bytes);
            prop_assert_eq!(load_index(&save_index(&idx)), Ok(idx));
        }
    }
}
