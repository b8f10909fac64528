//! ML model packages: archive layout, the `ml.model` schema, validation and
//! assembly of a resolved closure into a deployment descriptor.

use std::collections::BTreeSet;
use std::fmt;
use std::io::{Cursor, Read, Write};

use thiserror::Error;
use zip::write::SimpleFileOptions;
use zip::{CompressionMethod, DateTime, ZipArchive, ZipWriter};

use crate::digest::Sha256Digest;
use crate::filter::value::is_valid_name;
use crate::filter::{CompareOp, Filter, PropertyList, PropertyMap, PropertyType, PropertyValue, ScalarType};
use crate::model::{parse_manifest, serialize_manifest, Capability, Content, ManifestError, Requirement, Resource};
use crate::resolver::Resolution;
use crate::semver::{parse_version, Version};

pub const MODEL_NAMESPACE: &str = "ml.model";
pub const RUNTIME_NAMESPACE: &str = "runtime.ops";
pub const HARDWARE_NAMESPACE: &str = "hw";

pub const MANIFEST_ENTRY: &str = "META/MANIFEST";
pub const GRAPH_ENTRY: &str = "model/graph.bin";
pub const PARAMS_ENTRY: &str = "model/params.bin";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PackageError {
    #[error("invalid-descriptor: {0}")]
    InvalidDescriptor(String),
    #[error("descriptor line {line}: {message}")]
    DescriptorSyntax { line: usize, message: String },
    #[error("empty-payload: {0} is empty")]
    EmptyPayload(&'static str),
    #[error("layout-error: {0}")]
    Layout(String),
    #[error("manifest-error: {0}")]
    Manifest(#[from] ManifestError),
    #[error("schema-error: attribute `{attribute}` {problem}")]
    Schema { attribute: String, problem: String },
    #[error("digest-mismatch: {entry}")]
    DigestMismatch { entry: String },
    #[error("missing-content: {identity} {version} has no content with a digest")]
    MissingContent { identity: String, version: Version },
}

impl PackageError {
    fn schema(attribute: &str, problem: impl Into<String>) -> Self {
        PackageError::Schema { attribute: attribute.to_string(), problem: problem.into() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Hardware {
    pub gpu: bool,
    pub min_memory_mb: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelDescriptor {
    pub name: String,
    pub version: Version,
    pub input_kind: String,
    pub input_width: u64,
    pub input_height: u64,
    pub output_type: String,
    pub output_size: u64,
    pub dataset: String,
    pub dataset_version: Option<Version>,
    pub required_ops: Vec<String>,
    pub hardware: Option<Hardware>,
}

fn positive_long(attr: &str, n: u64) -> Result<i64, PackageError> {
    match i64::try_from(n) {
        Ok(v) if v >= 1 => Ok(v),
        _ => Err(PackageError::InvalidDescriptor(format!("{attr} must be between 1 and {}", i64::MAX))),
    }
}

impl ModelDescriptor {
    pub fn validate(&self) -> Result<(), PackageError> {
        let invalid = |m: String| Err(PackageError::InvalidDescriptor(m));
        if !is_valid_name(&self.name) {
            return invalid(format!("name {:?} is not a valid identity", self.name));
        }
        positive_long("input.width", self.input_width)?;
        positive_long("input.height", self.input_height)?;
        positive_long("output.size", self.output_size)?;
        for (attr, value) in
            [("input", &self.input_kind), ("output.type", &self.output_type), ("dataset", &self.dataset)]
        {
            if value.is_empty() {
                return invalid(format!("{attr} is empty"));
            }
            if value.trim() != value.as_str() {
                return invalid(format!("{attr} has surrounding whitespace"));
            }
        }
        if self.required_ops.iter().any(|op| op.is_empty() || op.trim() != op) {
            return invalid("ops contains an empty or padded operation name".into());
        }
        if let Some(hw) = self.hardware {
            positive_long("hw.memory.mb", hw.min_memory_mb)?;
        }
        Ok(())
    }

    /// Reads `name[:Type]=value` lines. Blank lines and `#` comments are
    /// skipped. Recognised keys: name, version, input, input.width,
    /// input.height, output.type, output.size, dataset, dataset.version,
    /// ops (List<String>), hw.gpu (`true`/`false`), hw.memory.mb.
    pub fn from_attributes(text: &str) -> Result<Self, PackageError> {
        let mut props = PropertyMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let syntax = |message: String| PackageError::DescriptorSyntax { line, message };
            let trimmed = raw.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let (key, value) = trimmed.split_once('=').ok_or_else(|| syntax("expected name=value".into()))?;
            let (name, declared) = match key.trim().split_once(':') {
                Some((n, t)) => (n.trim(), Some(t.trim().parse::<PropertyType>().map_err(|e| syntax(e.to_string()))?)),
                None => (key.trim(), None),
            };
            let expected = descriptor_key_type(name).ok_or_else(|| syntax(format!("unknown key {name:?}")))?;
            if declared.is_some_and(|d| d != expected) {
                return Err(syntax(format!("{name} must be typed {expected}")));
            }
            let value = PropertyValue::parse_typed(expected, value.trim()).map_err(|e| syntax(e.to_string()))?;
            props.insert(name, value).map_err(|e| syntax(e.to_string()))?;
        }

        let missing = |key: &str| PackageError::InvalidDescriptor(format!("missing {key}"));
        let string =
            |key: &str| props.get(key).and_then(|v| v.as_str()).map(str::to_string).ok_or_else(|| missing(key));
        let long = |key: &str| -> Result<u64, PackageError> {
            let n = props.get(key).and_then(PropertyValue::as_long).ok_or_else(|| missing(key))?;
            u64::try_from(n).map_err(|_| PackageError::InvalidDescriptor(format!("{key} must be positive")))
        };
        let version = |key: &str| props.get(key).and_then(PropertyValue::as_version);

        let hardware = match (props.get("hw.gpu"), props.contains("hw.memory.mb")) {
            (None, false) => None,
            (Some(gpu), true) => {
                Some(Hardware { gpu: parse_bool("hw.gpu", gpu.as_str())?, min_memory_mb: long("hw.memory.mb")? })
            }
            _ => return Err(PackageError::InvalidDescriptor("hw.gpu and hw.memory.mb go together".into())),
        };
        let required_ops = match props.get("ops") {
            Some(PropertyValue::List(PropertyList::String(ops))) => ops.clone(),
            _ => Vec::new(),
        };
        let desc = ModelDescriptor {
            name: string("name")?,
            version: version("version").ok_or_else(|| missing("version"))?,
            input_kind: string("input")?,
            input_width: long("input.width")?,
            input_height: long("input.height")?,
            output_type: string("output.type")?,
            output_size: long("output.size")?,
            dataset: string("dataset")?,
            dataset_version: version("dataset.version"),
            required_ops,
            hardware,
        };
        desc.validate()?;
        Ok(desc)
    }

    /// Inverse of [`ModelDescriptor::from_attributes`].
    pub fn to_attributes(&self) -> String {
        let mut out = format!(
            "name={}\nversion:Version={}\ninput={}\ninput.width:Long={}\ninput.height:Long={}\n\
             output.type={}\noutput.size:Long={}\ndataset={}\n",
            self.name,
            self.version,
            self.input_kind,
            self.input_width,
            self.input_height,
            self.output_type,
            self.output_size,
            self.dataset
        );
        if let Some(v) = self.dataset_version {
            out.push_str(&format!("dataset.version:Version={v}\n"));
        }
        if !self.required_ops.is_empty() {
            let ops = PropertyValue::List(PropertyList::String(self.required_ops.clone()));
            out.push_str(&format!("ops:List<String>={}\n", ops.render()));
        }
        if let Some(hw) = self.hardware {
            out.push_str(&format!("hw.gpu={}\nhw.memory.mb:Long={}\n", hw.gpu, hw.min_memory_mb));
        }
        out
    }
}

fn descriptor_key_type(name: &str) -> Option<PropertyType> {
    use ScalarType::*;
    Some(match name {
        "name" | "input" | "output.type" | "dataset" | "hw.gpu" => PropertyType::Scalar(String),
        "version" | "dataset.version" => PropertyType::Scalar(Version),
        "input.width" | "input.height" | "output.size" | "hw.memory.mb" => PropertyType::Scalar(Long),
        "ops" => PropertyType::List(String),
        _ => return None,
    })
}

fn parse_bool(attr: &str, text: Option<&str>) -> Result<bool, PackageError> {
    match text {
        Some("true") => Ok(true),
        Some("false") => Ok(false),
        _ => Err(PackageError::InvalidDescriptor(format!("{attr} must be true or false"))),
    }
}

/// The `ml.model` capability a package built from `d` provides. Carries
/// `version` as a String for compatibility and `model.version` as a Version
/// for ordered comparisons.
pub fn capability_of(d: &ModelDescriptor) -> Capability {
    let mut props = PropertyMap::new()
        .with("input", d.input_kind.as_str())
        .with("input.height", d.input_height as i64)
        .with("input.width", d.input_width as i64)
        .with("output.type", d.output_type.as_str())
        .with("output.size", d.output_size as i64)
        .with("dataset", d.dataset.as_str())
        .with("version", d.version.to_string())
        .with("model.version", d.version);
    if let Some(v) = d.dataset_version {
        props = props.with("dataset.version", v);
    }
    Capability::new(MODEL_NAMESPACE, props).expect("ml.model is a valid namespace")
}

pub fn requirements_of(d: &ModelDescriptor) -> Vec<Requirement> {
    let mut reqs = Vec::new();
    if !d.required_ops.is_empty() {
        let filter = Filter::And(d.required_ops.iter().map(|op| Filter::eq("ops", op.as_str())).collect());
        reqs.push(Requirement::new(RUNTIME_NAMESPACE, Some(filter)).expect("valid namespace"));
    }
    if let Some(hw) = d.hardware {
        let filter = Filter::And(vec![
            Filter::eq("gpu", hw.gpu.to_string()),
            Filter::ge("memory.mb", hw.min_memory_mb.to_string()),
        ]);
        reqs.push(Requirement::new(HARDWARE_NAMESPACE, Some(filter)).expect("valid namespace"));
    }
    reqs
}

/// The resource described by a package manifest, before payload content.
fn base_resource(d: &ModelDescriptor) -> Resource {
    let mut res = Resource::new(d.name.as_str(), d.version).expect("validated identity");
    res.add_capability(capability_of(d)).expect("not the identity namespace");
    for req in requirements_of(d) {
        res.add_requirement(req).expect("valid requirement");
    }
    res
}

fn zip_options() -> SimpleFileOptions {
    SimpleFileOptions::default()
        .compression_method(CompressionMethod::Stored)
        .last_modified_time(DateTime::DEFAULT)
        .unix_permissions(0o644)
}

pub fn create_package(d: &ModelDescriptor, graph: &[u8], params: &[u8]) -> Result<Vec<u8>, PackageError> {
    d.validate()?;
    if graph.is_empty() {
        return Err(PackageError::EmptyPayload("graph"));
    }
    if params.is_empty() {
        return Err(PackageError::EmptyPayload("params"));
    }
    let mut res = base_resource(d);
    for (entry, bytes) in [(GRAPH_ENTRY, graph), (PARAMS_ENTRY, params)] {
        res.add_content(Content {
            uri: entry.into(),
            sha256: Some(Sha256Digest::of(bytes)),
            size: Some(bytes.len() as u64),
        })
        .expect("valid uri");
    }
    let manifest = serialize_manifest(&res);

    let mut zip = ZipWriter::new(Cursor::new(Vec::new()));
    let io = |e: zip::result::ZipError| PackageError::Layout(e.to_string());
    for (entry, bytes) in [(MANIFEST_ENTRY, manifest.as_bytes()), (GRAPH_ENTRY, graph), (PARAMS_ENTRY, params)] {
        zip.start_file(entry, zip_options()).map_err(io)?;
        zip.write_all(bytes).map_err(|e| PackageError::Layout(e.to_string()))?;
    }
    Ok(zip.finish().map_err(io)?.into_inner())
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelPackage {
    pub resource: Resource,
    pub graph: Vec<u8>,
    pub graph_sha256: Sha256Digest,
    pub params: Vec<u8>,
    pub params_sha256: Sha256Digest,
}

pub fn validate_package(archive: &[u8]) -> Result<ModelPackage, PackageError> {
    let mut zip =
        ZipArchive::new(Cursor::new(archive)).map_err(|e| PackageError::Layout(format!("not a zip archive: {e}")))?;
    let names: BTreeSet<String> = zip
        .file_names()
        .map(|n| n.map(|n| n.into_owned()))
        .collect::<Result<_, _>>()
        .map_err(|e| PackageError::Layout(e.to_string()))?;
    let expected: BTreeSet<String> = [MANIFEST_ENTRY, GRAPH_ENTRY, PARAMS_ENTRY].map(String::from).into();
    if zip.len() != expected.len() || names != expected {
        let found: Vec<&str> = names.iter().map(String::as_str).collect();
        return Err(PackageError::Layout(format!(
            "expected entries {MANIFEST_ENTRY}, {GRAPH_ENTRY}, {PARAMS_ENTRY}; found {}",
            found.join(", ")
        )));
    }

    let manifest =
        read_entry(&mut zip, MANIFEST_ENTRY).map_err(|e| PackageError::Layout(format!("{MANIFEST_ENTRY}: {e}")))?;
    let manifest =
        String::from_utf8(manifest).map_err(|_| PackageError::Layout(format!("{MANIFEST_ENTRY} is not UTF-8")))?;
    let resource = parse_manifest(&manifest)?;
    check_schema(&resource)?;

    let mut payloads = Vec::new();
    for entry in [GRAPH_ENTRY, PARAMS_ENTRY] {
        let content = resource
            .content()
            .iter()
            .find(|c| c.uri == entry)
            .ok_or_else(|| PackageError::Layout(format!("manifest has no Content header for {entry}")))?;
        let declared = content
            .sha256
            .clone()
            .ok_or_else(|| PackageError::Layout(format!("Content header for {entry} has no sha256")))?;
        // a failed CRC check means the stored bytes changed
        let bytes = read_entry(&mut zip, entry).map_err(|_| PackageError::DigestMismatch { entry: entry.into() })?;
        let actual = Sha256Digest::of(&bytes);
        if actual != declared || content.size.is_some_and(|s| s != bytes.len() as u64) {
            return Err(PackageError::DigestMismatch { entry: entry.into() });
        }
        payloads.push((bytes, actual));
    }
    let (params, params_sha256) = payloads.pop().expect("two payloads");
    let (graph, graph_sha256) = payloads.pop().expect("two payloads");
    Ok(ModelPackage { resource, graph, graph_sha256, params, params_sha256 })
}

fn read_entry(zip: &mut ZipArchive<Cursor<&[u8]>>, name: &str) -> std::io::Result<Vec<u8>> {
    let mut file = zip.by_name(name).map_err(std::io::Error::other)?;
    let mut bytes = Vec::new();
    file.read_to_end(&mut bytes)?;
    Ok(bytes)
}

const SCHEMA: [(&str, ScalarType); 7] = [
    ("input", ScalarType::String),
    ("input.height", ScalarType::Long),
    ("input.width", ScalarType::Long),
    ("output.type", ScalarType::String),
    ("output.size", ScalarType::Long),
    ("dataset", ScalarType::String),
    ("version", ScalarType::String),
];

fn check_schema(res: &Resource) -> Result<(), PackageError> {
    let caps: Vec<&Capability> = res.capabilities_in(MODEL_NAMESPACE).collect();
    let [cap] = caps.as_slice() else {
        return Err(PackageError::schema(
            MODEL_NAMESPACE,
            format!("expected exactly one capability, found {}", caps.len()),
        ));
    };
    for (attr, ty) in SCHEMA {
        let value = cap.properties.get(attr).ok_or_else(|| PackageError::schema(attr, "is missing"))?;
        if value.property_type() != PropertyType::Scalar(ty) {
            return Err(PackageError::schema(attr, format!("must be {ty:?}, found {}", value.property_type())));
        }
        if value.as_long().is_some_and(|n| n < 1) || value.as_str() == Some("") {
            return Err(PackageError::schema(attr, "must be non-empty and positive"));
        }
    }
    for attr in ["model.version", "dataset.version"] {
        if let Some(value) = cap.properties.get(attr) {
            if value.as_version().is_none() {
                return Err(PackageError::schema(attr, format!("must be Version, found {}", value.property_type())));
            }
        }
    }
    Ok(())
}

/// Recovers the descriptor a valid package was created from.
pub fn inspect(archive: &[u8]) -> Result<ModelDescriptor, PackageError> {
    let pkg = validate_package(archive)?;
    descriptor_of(&pkg.resource)
}

pub fn descriptor_of(res: &Resource) -> Result<ModelDescriptor, PackageError> {
    check_schema(res)?;
    let cap = res.capabilities_in(MODEL_NAMESPACE).next().expect("schema checked");
    let get = |attr: &str| cap.properties.get(attr).expect("schema checked");
    let string = |attr: &str| get(attr).as_str().expect("schema checked").to_string();
    let long = |attr: &str| get(attr).as_long().expect("schema checked") as u64;

    let mut required_ops = Vec::new();
    let mut hardware = None;
    for req in res.requirements() {
        match req.namespace.as_str() {
            RUNTIME_NAMESPACE => required_ops = ops_of(req.filter.as_ref())?,
            HARDWARE_NAMESPACE => hardware = Some(hardware_of(req.filter.as_ref())?),
            _ => {}
        }
    }
    Ok(ModelDescriptor {
        name: res.identity().to_string(),
        version: res.version(),
        input_kind: string("input"),
        input_width: long("input.width"),
        input_height: long("input.height"),
        output_type: string("output.type"),
        output_size: long("output.size"),
        dataset: string("dataset"),
        dataset_version: cap.properties.get("dataset.version").and_then(PropertyValue::as_version),
        required_ops,
        hardware,
    })
}

fn ops_of(filter: Option<&Filter>) -> Result<Vec<String>, PackageError> {
    let bad = || PackageError::schema("ops", "runtime.ops filter is not a conjunction of (ops=name)");
    let Some(Filter::And(items)) = filter else { return Err(bad()) };
    items
        .iter()
        .map(|f| match f {
            Filter::Compare { attr, op: CompareOp::Eq, literal } if attr == "ops" => Ok(literal.clone()),
            _ => Err(bad()),
        })
        .collect()
}

fn hardware_of(filter: Option<&Filter>) -> Result<Hardware, PackageError> {
    let bad = || PackageError::schema("hw", "hw filter is not (&(gpu=..)(memory.mb>=..))");
    let Some(Filter::And(items)) = filter else { return Err(bad()) };
    match items.as_slice() {
        [Filter::Compare { attr: g, op: CompareOp::Eq, literal: gpu }, Filter::Compare { attr: m, op: CompareOp::Ge, literal: mem }]
            if g == "gpu" && m == "memory.mb" =>
        {
            let gpu = parse_bool("gpu", Some(gpu)).map_err(|_| bad())?;
            let min_memory_mb = mem.parse().map_err(|_| bad())?;
            Ok(Hardware { gpu, min_memory_mb })
        }
        _ => Err(bad()),
    }
}

/// The resource an index records for a package archive: the manifest plus a
/// leading content entry for the archive file itself.
pub fn package_resource(archive: &[u8], file_name: &str) -> Result<Resource, PackageError> {
    let pkg = validate_package(archive)?;
    let mut content = vec![Content {
        uri: file_name.to_string(),
        sha256: Some(Sha256Digest::of(archive)),
        size: Some(archive.len() as u64),
    }];
    content.extend(pkg.resource.content().iter().cloned());
    let mut res = pkg.resource;
    res.set_content(content).map_err(|e| PackageError::Layout(format!("archive name: {e}")))?;
    Ok(res)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Role {
    Model,
    Runtime,
    Consumer,
    Other,
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Role::Model => "model",
            Role::Runtime => "runtime",
            Role::Consumer => "consumer",
            Role::Other => "other",
        })
    }
}

pub fn role_of(res: &Resource) -> Role {
    if res.capabilities_in(MODEL_NAMESPACE).next().is_some() {
        Role::Model
    } else if res.capabilities_in(RUNTIME_NAMESPACE).next().is_some() {
        Role::Runtime
    } else if res.requirements().iter().any(|r| r.namespace == MODEL_NAMESPACE) {
        Role::Consumer
    } else {
        Role::Other
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DeploymentEntry {
    pub identity: String,
    pub version: Version,
    pub role: Role,
    pub uri: String,
    pub sha256: Sha256Digest,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DeploymentDescriptor {
    /// Sorted by identity.
    pub entries: Vec<DeploymentEntry>,
}

impl fmt::Display for DeploymentDescriptor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for e in &self.entries {
            writeln!(f, "{} {} {} {} {}", e.identity, e.version, e.role, e.uri, e.sha256)?;
        }
        Ok(())
    }
}

/// One entry per closure member, using each member's first content entry.
pub fn assemble(res: &Resolution) -> Result<DeploymentDescriptor, PackageError> {
    let mut entries = Vec::with_capacity(res.closure.len());
    for member in &res.closure {
        let content = member.content().first().filter(|c| c.sha256.is_some()).ok_or_else(|| {
            PackageError::MissingContent { identity: member.identity().to_string(), version: member.version() }
        })?;
        entries.push(DeploymentEntry {
            identity: member.identity().to_string(),
            version: member.version(),
            role: role_of(member),
            uri: content.uri.clone(),
            sha256: content.sha256.clone().expect("checked above"),
        });
    }
    entries.sort_by(|a, b| (&a.identity, a.version).cmp(&(&b.identity, b.version)));
    Ok(DeploymentDescriptor { entries })
}

/// Parses a deployment descriptor back from its text form.
pub fn parse_deployment(text: &str) -> Option<DeploymentDescriptor> {
    let entries = text
        .lines()
        .map(|line| {
            let [identity, version, role, uri, sha256] = line.split(' ').collect::<Vec<_>>().try_into().ok()?;
            let role = match role {
                "model" => Role::Model,
                "runtime" => Role::Runtime,
                "consumer" => Role::Consumer,
                "other" => Role::Other,
                _ => return None,
            };
            Some(DeploymentEntry {
                identity: identity.to_string(),
                version: parse_version(version).ok()?,
                role,
                uri: uri.to_string(),
                sha256: sha256.parse().ok()?,
            })
        })
        .collect::<Option<_>>()?;
    Some(DeploymentDescriptor { entries })
}

#[cfg(test)]
mod tests;
