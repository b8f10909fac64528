//! Backtracking resolution of requirements into a closure of resources.
//!
//! The search is depth-first over requirements in FIFO discovery order.
//! A requirement already satisfied by a selected resource is wired to it
//! without branching: any closure extending the current selection contains
//! that resource anyway, so alternatives cannot succeed where it fails.
//! Otherwise each candidate not clashing with a selected identity is tried
//! in order (version descending, repository order, resource ordinal), and
//! its mandatory requirements are appended to the queue.
//!
//! Optional requirements are processed after the mandatory closure is
//! found. Each is satisfied if possible, but its failure never undoes the
//! mandatory solution.

use std::collections::{BTreeMap, HashMap, HashSet, VecDeque};
use std::fmt;
use std::rc::Rc;

use thiserror::Error;

use crate::model::{matches, Capability, Requirement, Resource};
use crate::repo::RepositoryIndex;
use crate::semver::Version;

pub const DEFAULT_MAX_BACKTRACKS: usize = 100_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Limits {
    pub max_backtracks: usize,
}

impl Default for Limits {
    fn default() -> Self {
        Self { max_backtracks: DEFAULT_MAX_BACKTRACKS }
    }
}

#[derive(Debug, Clone, Default)]
pub struct ResolveContext {
    pub repositories: Vec<RepositoryIndex>,
    pub initial_requirements: Vec<Requirement>,
    /// Resources that are part of the closure from the start.
    pub root_resources: Vec<Resource>,
    pub limits: Limits,
}

impl ResolveContext {
    pub fn new(repositories: Vec<RepositoryIndex>, initial_requirements: Vec<Requirement>) -> Self {
        Self { repositories, initial_requirements, ..Default::default() }
    }
}

/// `(identity, version)` of a resource.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ResourceKey {
    pub identity: String,
    pub version: Version,
}

impl ResourceKey {
    pub fn of(resource: &Resource) -> Self {
        Self { identity: resource.identity().to_string(), version: resource.version() }
    }
}

impl fmt::Display for ResourceKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}", self.identity, self.version)
    }
}

/// Where a wired requirement was declared.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Origin {
    Initial,
    Resource(ResourceKey),
}

impl fmt::Display for Origin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Origin::Initial => f.write_str("<initial>"),
            Origin::Resource(key) => key.fmt(f),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Wire {
    pub requirement: Requirement,
    pub provider: ResourceKey,
    pub capability_ordinal: usize,
    pub capability: Capability,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Stats {
    pub candidates_considered: usize,
    pub backtracks: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Resolution {
    /// Sorted by identity.
    pub closure: Vec<Resource>,
    /// Keyed by (declaring origin, requirement ordinal).
    pub wires: BTreeMap<(Origin, usize), Wire>,
    pub stats: Stats,
}

impl Resolution {
    pub fn member(&self, identity: &str) -> Option<&Resource> {
        self.closure.iter().find(|r| r.identity() == identity)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RejectReason {
    /// Another version of the same identity was already selected.
    IdentityConflict {
        selected: Version,
    },
    OwnRequirementsUnsatisfiable,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rejection {
    pub candidate: ResourceKey,
    pub reason: RejectReason,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChainLink {
    pub origin: Origin,
    pub requirement: Requirement,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ResolutionError {
    pub failed_requirement: Requirement,
    /// From the initial requirement (or root resource) down to the failure.
    pub dependency_chain: Vec<ChainLink>,
    /// Number of capabilities matching the failed requirement across all
    /// repositories, before any rejection.
    pub candidates_found: usize,
    pub candidates_rejected: Vec<Rejection>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ResolveError {
    #[error("unresolvable: {}", .0.failed_requirement)]
    Unresolvable(Box<ResolutionError>),
    #[error("backtrack-limit-exceeded: gave up after {limit} backtracks")]
    BacktrackLimitExceeded { limit: usize },
    #[error("invalid resolve context: {0}")]
    InvalidContext(String),
}

type Id = usize;
type Candidates = Rc<Vec<(Id, usize)>>;

struct Entry<'a> {
    resource: &'a Resource,
    key: ResourceKey,
}

#[derive(Clone)]
struct Pending {
    /// `None` for initial requirements.
    owner: Option<Id>,
    ordinal: usize,
    chain: Rc<Vec<(Option<Id>, usize)>>,
}

#[derive(Clone)]
struct State {
    selected: Vec<Id>,
    selected_set: HashSet<Id>,
    by_identity: HashMap<String, Id>,
    queue: VecDeque<Pending>,
    optional: VecDeque<Pending>,
    wires: Vec<(Option<Id>, usize, Id, usize)>,
}

enum Failure {
    Dead,
    Limit,
}

struct DeadEnd {
    chain: Rc<Vec<(Option<Id>, usize)>>,
    candidates_found: usize,
    rejected: Vec<Rejection>,
}

struct Search<'a> {
    universe: Vec<Entry<'a>>,
    roots: usize,
    /// (repository, resource ordinal) -> universe id; absent for duplicates
    by_location: HashMap<(usize, usize), Id>,
    repositories: &'a [RepositoryIndex],
    initial: &'a [Requirement],
    candidate_cache: HashMap<(Option<Id>, usize), Candidates>,
    limits: Limits,
    stats: Stats,
    deepest: Option<DeadEnd>,
}

impl<'a> Search<'a> {
    fn new(ctx: &'a ResolveContext) -> Result<Self, ResolveError> {
        let mut universe = Vec::new();
        let mut seen: HashSet<ResourceKey> = HashSet::new();
        let mut root_names: HashSet<&str> = HashSet::new();
        for root in &ctx.root_resources {
            if !root_names.insert(root.identity()) {
                return Err(ResolveError::InvalidContext(format!(
                    "two root resources share identity {}",
                    root.identity()
                )));
            }
            seen.insert(ResourceKey::of(root));
            universe.push(Entry { resource: root, key: ResourceKey::of(root) });
        }
        let roots = universe.len();
        let mut by_location = HashMap::new();
        for (repo_idx, repo) in ctx.repositories.iter().enumerate() {
            for (ordinal, resource) in repo.resources().iter().enumerate() {
                let key = ResourceKey::of(resource);
                // the same (identity, version) in a later repository is shadowed
                if seen.insert(key.clone()) {
                    by_location.insert((repo_idx, ordinal), universe.len());
                    universe.push(Entry { resource, key });
                }
            }
        }
        Ok(Self {
            universe,
            roots,
            by_location,
            repositories: &ctx.repositories,
            initial: &ctx.initial_requirements,
            candidate_cache: HashMap::new(),
            limits: ctx.limits,
            stats: Stats::default(),
            deepest: None,
        })
    }

    fn requirement(&self, owner: Option<Id>, ordinal: usize) -> &'a Requirement {
        match owner {
            None => &self.initial[ordinal],
            Some(id) => &self.universe[id].resource.requirements()[ordinal],
        }
    }

    /// Providers of a requirement as (resource, first matching capability),
    /// roots first, then version descending, repository order, ordinal.
    fn candidates(&mut self, owner: Option<Id>, ordinal: usize) -> Candidates {
        if let Some(found) = self.candidate_cache.get(&(owner, ordinal)) {
            return found.clone();
        }
        let req = self.requirement(owner, ordinal);
        let mut found: Vec<(Id, usize)> = Vec::new();
        for id in 0..self.roots {
            if let Some(c) = self.universe[id].resource.capabilities().iter().position(|cap| matches(req, cap)) {
                found.push((id, c));
            }
        }
        let mut from_repos: Vec<(Version, usize, usize, Id, usize)> = Vec::new();
        let mut taken: HashSet<Id> = HashSet::new();
        for (repo_idx, repo) in self.repositories.iter().enumerate() {
            for provider in repo.find_providers(req) {
                let Some(&id) = self.by_location.get(&(repo_idx, provider.resource_ordinal)) else {
                    continue;
                };
                if taken.insert(id) {
                    from_repos.push((
                        provider.resource.version(),
                        repo_idx,
                        provider.resource_ordinal,
                        id,
                        provider.capability_ordinal,
                    ));
                } else if let Some(existing) = from_repos.iter_mut().find(|e| e.3 == id) {
                    existing.4 = existing.4.min(provider.capability_ordinal);
                }
            }
        }
        from_repos.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
        found.extend(from_repos.into_iter().map(|(_, _, _, id, cap)| (id, cap)));
        let found = Rc::new(found);
        self.candidate_cache.insert((owner, ordinal), found.clone());
        found
    }

    fn select(&self, state: &mut State, id: Id, chain: &Rc<Vec<(Option<Id>, usize)>>) {
        state.selected.push(id);
        state.selected_set.insert(id);
        state.by_identity.insert(self.universe[id].key.identity.clone(), id);
        for (ordinal, req) in self.universe[id].resource.requirements().iter().enumerate() {
            let mut link = chain.as_ref().clone();
            link.push((Some(id), ordinal));
            let pending = Pending { owner: Some(id), ordinal, chain: Rc::new(link) };
            if req.is_mandatory() {
                state.queue.push_back(pending);
            } else {
                state.optional.push_back(pending);
            }
        }
    }

    fn record_dead_end(&mut self, pending: &Pending, candidates_found: usize, rejected: Vec<Rejection>) {
        let deeper = self.deepest.as_ref().is_none_or(|d| pending.chain.len() > d.chain.len());
        if deeper {
            self.deepest = Some(DeadEnd { chain: pending.chain.clone(), candidates_found, rejected });
        }
    }

    /// Drains the mandatory queue, branching where needed.
    fn search(&mut self, mut state: State) -> Result<State, Failure> {
        while let Some(pending) = state.queue.pop_front() {
            let candidates = self.candidates(pending.owner, pending.ordinal);
            if let Some(&(id, cap)) = candidates.iter().find(|(id, _)| state.selected_set.contains(id)) {
                state.wires.push((pending.owner, pending.ordinal, id, cap));
                continue;
            }
            let mut rejected = Vec::new();
            let mut viable = Vec::new();
            for &(id, cap) in candidates.iter() {
                match state.by_identity.get(&self.universe[id].key.identity) {
                    Some(&other) => rejected.push(Rejection {
                        candidate: self.universe[id].key.clone(),
                        reason: RejectReason::IdentityConflict { selected: self.universe[other].key.version },
                    }),
                    None => viable.push((id, cap)),
                }
            }
            for (id, cap) in viable {
                self.stats.candidates_considered += 1;
                let mut next = state.clone();
                next.wires.push((pending.owner, pending.ordinal, id, cap));
                self.select(&mut next, id, &pending.chain);
                match self.search(next) {
                    Ok(done) => return Ok(done),
                    Err(Failure::Limit) => return Err(Failure::Limit),
                    Err(Failure::Dead) => {
                        self.stats.backtracks += 1;
                        if self.stats.backtracks > self.limits.max_backtracks {
                            return Err(Failure::Limit);
                        }
                        rejected.push(Rejection {
                            candidate: self.universe[id].key.clone(),
                            reason: RejectReason::OwnRequirementsUnsatisfiable,
                        });
                    }
                }
            }
            rejected.sort_by(|a, b| a.candidate.cmp(&b.candidate));
            self.record_dead_end(&pending, candidates.len(), rejected);
            return Err(Failure::Dead);
        }
        Ok(state)
    }

    fn satisfy_optional(&mut self, mut state: State) -> State {
        while let Some(pending) = state.optional.pop_front() {
            let candidates = self.candidates(pending.owner, pending.ordinal);
            if let Some(&(id, cap)) = candidates.iter().find(|(id, _)| state.selected_set.contains(id)) {
                state.wires.push((pending.owner, pending.ordinal, id, cap));
                continue;
            }
            for &(id, cap) in candidates.iter() {
                if state.by_identity.contains_key(&self.universe[id].key.identity) {
                    continue;
                }
                self.stats.candidates_considered += 1;
                let mut trial = state.clone();
                trial.wires.push((pending.owner, pending.ordinal, id, cap));
                self.select(&mut trial, id, &pending.chain);
                match self.search(trial) {
                    Ok(done) => {
                        state = done;
                        break;
                    }
                    Err(Failure::Dead) => self.stats.backtracks += 1,
                    // optional requirements never fail the resolution; stop trying
                    Err(Failure::Limit) => return state,
                }
            }
        }
        state
    }

    fn origin(&self, owner: Option<Id>) -> Origin {
        match owner {
            None => Origin::Initial,
            Some(id) => Origin::Resource(self.universe[id].key.clone()),
        }
    }

    fn error_from(&self, dead: DeadEnd) -> ResolutionError {
        let dependency_chain: Vec<ChainLink> = dead
            .chain
            .iter()
            .map(|&(owner, ordinal)| ChainLink {
                origin: self.origin(owner),
                requirement: self.requirement(owner, ordinal).clone(),
            })
            .collect();
        ResolutionError {
            failed_requirement: dependency_chain.last().expect("non-empty chain").requirement.clone(),
            dependency_chain,
            candidates_found: dead.candidates_found,
            candidates_rejected: dead.rejected,
        }
    }
}

pub fn resolve(ctx: &ResolveContext) -> Result<Resolution, ResolveError> {
    if ctx.initial_requirements.is_empty() && ctx.root_resources.is_empty() {
        return Err(ResolveError::InvalidContext("no initial requirements or root resources".to_string()));
    }
    let mut search = Search::new(ctx)?;
    let mut state = State {
        selected: Vec::new(),
        selected_set: HashSet::new(),
        by_identity: HashMap::new(),
        queue: VecDeque::new(),
        optional: VecDeque::new(),
        wires: Vec::new(),
    };
    for (ordinal, req) in ctx.initial_requirements.iter().enumerate() {
        let pending = Pending { owner: None, ordinal, chain: Rc::new(vec![(None, ordinal)]) };
        if req.is_mandatory() {
            state.queue.push_back(pending);
        } else {
            state.optional.push_back(pending);
        }
    }
    for id in 0..search.roots {
        search.select(&mut state, id, &Rc::new(Vec::new()));
    }

    let state = match search.search(state) {
        Ok(state) => state,
        Err(Failure::Limit) => return Err(ResolveError::BacktrackLimitExceeded { limit: ctx.limits.max_backtracks }),
        Err(Failure::Dead) => {
            let dead = search.deepest.take().expect("a failed search records a dead end");
            return Err(ResolveError::Unresolvable(Box::new(search.error_from(dead))));
        }
    };
    let state = search.satisfy_optional(state);

    let mut closure: Vec<Resource> = state.selected.iter().map(|&id| search.universe[id].resource.clone()).collect();
    closure.sort_by(|a, b| a.identity().cmp(b.identity()));
    let wires = state
        .wires
        .iter()
        .map(|&(owner, ordinal, provider, cap)| {
            let resource = search.universe[provider].resource;
            let wire = Wire {
                requirement: search.requirement(owner, ordinal).clone(),
                provider: search.universe[provider].key.clone(),
                capability_ordinal: cap,
                capability: resource.capabilities()[cap].clone(),
            };
            ((search.origin(owner), ordinal), wire)
        })
        .collect();
    Ok(Resolution { closure, wires, stats: search.stats })
}

/// True iff identities are unique and every mandatory requirement of every
/// member, and every mandatory initial requirement, is matched by some
/// capability of some member.
pub fn verify_closure(resources: &[Resource], initial: &[Requirement]) -> bool {
    let mut names = HashSet::new();
    if !resources.iter().all(|r| names.insert(r.identity())) {
        return false;
    }
    let satisfied = |req: &Requirement| {
        !req.is_mandatory() || resources.iter().any(|r| r.capabilities().iter().any(|c| matches(req, c)))
    };
    initial.iter().all(satisfied) && resources.iter().all(|r| r.requirements().iter().all(satisfied))
}

/// Deterministic report of a resolution: closure by identity, then wires by
/// origin.
pub fn render_report(res: &Resolution, verbose: bool) -> String {
    let mut out = format!("closure ({}):\n", res.closure.len());
    for member in &res.closure {
        out.push_str(&format!("  {member}\n"));
    }
    out.push_str(&format!("wires ({}):\n", res.wires.len()));
    for ((origin, ordinal), wire) in &res.wires {
        out.push_str(&format!(
            "  {origin} [{ordinal}] {} -> {} ({})\n",
            wire.requirement, wire.provider, wire.capability.namespace
        ));
    }
    if verbose {
        out.push_str(&format!(
            "stats: candidates_considered={} backtracks={}\n",
            res.stats.candidates_considered, res.stats.backtracks
        ));
    }
    out
}

/// Multi-line, deterministic description of a resolution failure.
pub fn explain(err: &ResolutionError) -> String {
    let mut out = format!("unresolvable requirement: {}\n", err.failed_requirement);
    match &err.failed_requirement.filter {
        Some(filter) => {
            out.push_str(&format!("  namespace: {}\n  filter: {filter}\n", err.failed_requirement.namespace))
        }
        None => out.push_str(&format!("  namespace: {}\n  filter: <none>\n", err.failed_requirement.namespace)),
    }
    out.push_str("dependency chain:\n");
    for (depth, link) in err.dependency_chain.iter().enumerate() {
        out.push_str(&format!("{}{} requires {}\n", "  ".repeat(depth + 1), link.origin, link.requirement));
    }
    out.push_str(&format!("{} candidates\n", err.candidates_found));
    for rejection in &err.candidates_rejected {
        let reason = match &rejection.reason {
            RejectReason::IdentityConflict { selected } => {
                format!("identity-conflict: {} {} is already selected", rejection.candidate.identity, selected)
            }
            RejectReason::OwnRequirementsUnsatisfiable => "own-requirements-unsatisfiable".to_string(),
        };
        out.push_str(&format!("  rejected {}: {reason}\n", rejection.candidate));
    }
    out
}
