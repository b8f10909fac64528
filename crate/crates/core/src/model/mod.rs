//! Capabilities, requirements and the resources that group them.

mod clause;
mod manifest;

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

use crate::digest::Sha256Digest;
use crate::filter::value::is_valid_name;
use crate::filter::{eval_filter, Filter, PropertyMap};
use crate::semver::Version;

pub use clause::{parse_capability_clause, parse_requirement_clause, ClauseError};
pub use manifest::{parse_manifest, serialize_manifest, ManifestError};

/// Namespace of the capability every resource carries for its own
/// name and version.
pub const IDENTITY_NAMESPACE: &str = "id";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ModelError {
    #[error("invalid namespace {0:?}")]
    InvalidNamespace(String),
    #[error("namespace `id` is reserved for the synthesized identity capability")]
    ReservedNamespace,
    #[error("invalid resource identity {0:?}")]
    InvalidIdentity(String),
    #[error("line breaks are not allowed in {0}")]
    LineBreak(String),
    #[error("invalid content uri {0:?}")]
    InvalidUri(String),
}

fn check_namespace(namespace: &str) -> Result<(), ModelError> {
    if is_valid_name(namespace) {
        Ok(())
    } else {
        Err(ModelError::InvalidNamespace(namespace.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Capability {
    pub namespace: String,
    pub properties: PropertyMap,
    pub directives: BTreeMap<String, String>,
}

impl Capability {
    pub fn new(namespace: impl Into<String>, properties: PropertyMap) -> Result<Self, ModelError> {
        let namespace = namespace.into();
        check_namespace(&namespace)?;
        Ok(Self { namespace, properties, directives: BTreeMap::new() })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum ResolutionMode {
    #[default]
    Mandatory,
    Optional,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Requirement {
    pub namespace: String,
    /// `None` matches every capability in the namespace.
    pub filter: Option<Filter>,
    pub resolution: ResolutionMode,
}

impl Requirement {
    pub fn new(namespace: impl Into<String>, filter: Option<Filter>) -> Result<Self, ModelError> {
        let namespace = namespace.into();
        check_namespace(&namespace)?;
        Ok(Self { namespace, filter, resolution: ResolutionMode::Mandatory })
    }

    pub fn optional(mut self) -> Self {
        self.resolution = ResolutionMode::Optional;
        self
    }

    pub fn is_mandatory(&self) -> bool {
        self.resolution == ResolutionMode::Mandatory
    }

    /// A mandatory requirement selecting the resource named `name`.
    pub fn for_identity(name: &str) -> Self {
        Self {
            namespace: IDENTITY_NAMESPACE.to_string(),
            filter: Some(Filter::eq("name", name)),
            resolution: ResolutionMode::Mandatory,
        }
    }
}

/// True iff the namespaces agree and the filter (if any) accepts the
/// capability's properties.
pub fn matches(req: &Requirement, cap: &Capability) -> bool {
    req.namespace == cap.namespace && req.filter.as_ref().is_none_or(|f| eval_filter(f, &cap.properties))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Content {
    pub uri: String,
    pub sha256: Option<Sha256Digest>,
    pub size: Option<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Resource {
    identity: String,
    version: Version,
    capabilities: Vec<Capability>,
    requirements: Vec<Requirement>,
    content: Vec<Content>,
}

impl Resource {
    /// A resource carrying only its identity capability.
    pub fn new(identity: impl Into<String>, version: Version) -> Result<Self, ModelError> {
        let identity = identity.into();
        if !is_valid_name(&identity) {
            return Err(ModelError::InvalidIdentity(identity));
        }
        let props = PropertyMap::new().with("name", identity.as_str()).with("version", version);
        let id_cap = Capability::new(IDENTITY_NAMESPACE, props).expect("identity namespace is valid");
        Ok(Self { identity, version, capabilities: vec![id_cap], requirements: Vec::new(), content: Vec::new() })
    }

    pub fn add_capability(&mut self, cap: Capability) -> Result<(), ModelError> {
        if cap.namespace == IDENTITY_NAMESPACE {
            return Err(ModelError::ReservedNamespace);
        }
        check_namespace(&cap.namespace)?;
        for (name, value) in cap.properties.iter() {
            if value.render().contains(['\n', '\r']) {
                return Err(ModelError::LineBreak(format!("attribute {name}")));
            }
        }
        if cap.directives.iter().any(|(k, v)| !is_valid_name(k) || v.contains(['\n', '\r'])) {
            return Err(ModelError::LineBreak("directives".to_string()));
        }
        self.capabilities.push(cap);
        Ok(())
    }

    pub fn add_requirement(&mut self, req: Requirement) -> Result<(), ModelError> {
        check_namespace(&req.namespace)?;
        if req.filter.as_ref().is_some_and(|f| f.to_string().contains(['\n', '\r'])) {
            return Err(ModelError::LineBreak("filter".to_string()));
        }
        self.requirements.push(req);
        Ok(())
    }

    pub fn add_content(&mut self, content: Content) -> Result<(), ModelError> {
        if content.uri.is_empty() || content.uri.contains(|c: char| c.is_whitespace() || c == ';' || c == '\'') {
            return Err(ModelError::InvalidUri(content.uri));
        }
        self.content.push(content);
        Ok(())
    }

    pub fn with_capability(mut self, cap: Capability) -> Result<Self, ModelError> {
        self.add_capability(cap)?;
        Ok(self)
    }

    pub fn with_requirement(mut self, req: Requirement) -> Result<Self, ModelError> {
        self.add_requirement(req)?;
        Ok(self)
    }

    pub fn with_content(mut self, content: Content) -> Result<Self, ModelError> {
        self.add_content(content)?;
        Ok(self)
    }

    /// Replaces the content list, e.g. to point at the archive that carries
    /// this resource.
    pub fn set_content(&mut self, content: Vec<Content>) -> Result<(), ModelError> {
        self.content.clear();
        content.into_iter().try_for_each(|c| self.add_content(c))
    }

    pub fn identity(&self) -> &str {
        &self.identity
    }

    pub fn version(&self) -> Version {
        self.version
    }

    /// All capabilities; the identity capability is always first.
    pub fn capabilities(&self) -> &[Capability] {
        &self.capabilities
    }

    /// Capabilities other than the synthesized identity one.
    pub fn declared_capabilities(&self) -> &[Capability] {
        &self.capabilities[1..]
    }

    pub fn requirements(&self) -> &[Requirement] {
        &self.requirements
    }

    pub fn content(&self) -> &[Content] {
        &self.content
    }

    pub fn capabilities_in<'a>(&'a self, namespace: &'a str) -> impl Iterator<Item = &'a Capability> + 'a {
        self.capabilities.iter().filter(move |c| c.namespace == namespace)
    }
}

impl fmt::Display for Resource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}", self.identity, self.version)
    }
}

impl fmt::Display for Requirement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&clause::render_requirement(self))
    }
}

impl fmt::Display for Capability {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&clause::render_capability(self))
    }
}
