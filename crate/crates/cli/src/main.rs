use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use capstan_core::mlpkg::{self, ModelDescriptor, PackageError};
use capstan_core::model::{parse_manifest, parse_requirement_clause, Requirement, Resource};
use capstan_core::repo::{build_index_with_origins, load_index, save_index};
use capstan_core::resolver::{self, Resolution, ResolveContext, ResolveError};
use clap::{Args, Parser, Subcommand};

const RESOLUTION_FAILURE: u8 = 1;
const VALIDATION_FAILURE: u8 = 2;
const USAGE_ERROR: u8 = 3;

/// Package ML models with capability metadata, index them and resolve
/// deployable closures.
#[derive(Parser)]
#[command(name = "capstan", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a model package from a descriptor and the two payload files.
    Create { descriptor: PathBuf, graph: PathBuf, params: PathBuf, out: PathBuf },
    /// Validate a model package and print its metadata.
    Inspect { package: PathBuf },
    /// Build a repository index from packages or plain manifests.
    Index {
        inputs: Vec<PathBuf>,
        #[arg(short, long)]
        out: PathBuf,
        #[arg(long, default_value = "local")]
        name: String,
    },
    /// Resolve requirements against indexes and print the resolution report.
    Resolve {
        #[command(flatten)]
        query: Query,
        /// Also write the deployment descriptor here.
        #[arg(long)]
        deploy: Option<PathBuf>,
        /// Include resolver statistics.
        #[arg(long)]
        verbose: bool,
    },
    /// Resolve and print only the deployment descriptor.
    Assemble {
        #[command(flatten)]
        query: Query,
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct Query {
    indexes: Vec<PathBuf>,
    /// A single requirement clause, e.g. `ml.model; filter:='(dataset=MNIST)'`.
    #[arg(long)]
    require: Option<String>,
    /// File with one requirement clause per line; ignored when --require is given.
    #[arg(long)]
    requirements: Option<PathBuf>,
    /// Manifest or package that is always part of the closure.
    #[arg(long)]
    root: Vec<PathBuf>,
}

struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn new(code: u8, message: impl Into<String>) -> Self {
        Self { code, message: message.into() }
    }
}

fn read(path: &Path) -> Result<Vec<u8>, Failure> {
    fs::read(path).map_err(|e| Failure::new(USAGE_ERROR, format!("cannot read {}: {e}", path.display())))
}

fn read_text(path: &Path) -> Result<String, Failure> {
    String::from_utf8(read(path)?).map_err(|_| Failure::new(USAGE_ERROR, format!("{} is not UTF-8", path.display())))
}

fn write(path: &Path, bytes: &[u8]) -> Result<(), Failure> {
    fs::write(path, bytes).map_err(|e| Failure::new(USAGE_ERROR, format!("cannot write {}: {e}", path.display())))
}

fn invalid(path: &Path, err: impl std::fmt::Display) -> Failure {
    Failure::new(VALIDATION_FAILURE, format!("{}: {err}", path.display()))
}

/// A package archive (by its zip magic) or a plain text manifest.
fn load_resource(path: &Path) -> Result<Resource, Failure> {
    let bytes = read(path)?;
    if bytes.starts_with(b"PK") {
        let file_name = path.file_name().and_then(|n| n.to_str()).unwrap_or_default();
        return mlpkg::package_resource(&bytes, file_name).map_err(|e| invalid(path, e));
    }
    let text = String::from_utf8(bytes).map_err(|_| invalid(path, "neither a package nor a UTF-8 manifest"))?;
    parse_manifest(&text).map_err(|e| invalid(path, format!("manifest-error: {e}")))
}

fn create(descriptor: &Path, graph: &Path, params: &Path, out: &Path) -> Result<String, Failure> {
    let text = read_text(descriptor)?;
    let (graph, params) = (read(graph)?, read(params)?);
    let desc = ModelDescriptor::from_attributes(&text).map_err(|e| match e {
        PackageError::DescriptorSyntax { .. } => Failure::new(USAGE_ERROR, format!("{}: {e}", descriptor.display())),
        _ => invalid(descriptor, e),
    })?;
    let archive =
        mlpkg::create_package(&desc, &graph, &params).map_err(|e| Failure::new(VALIDATION_FAILURE, e.to_string()))?;
    write(out, &archive)?;
    let mut report = format!("{}\n", mlpkg::capability_of(&desc));
    for req in mlpkg::requirements_of(&desc) {
        report.push_str(&format!("{req}\n"));
    }
    Ok(report)
}

fn inspect(path: &Path) -> Result<String, Failure> {
    let bytes = read(path)?;
    let pkg = mlpkg::validate_package(&bytes).map_err(|e| invalid(path, e))?;
    let res = &pkg.resource;
    let mut out = format!("package: {res}\n");
    for cap in res.declared_capabilities() {
        out.push_str(&format!("capability: {cap}\n"));
    }
    for req in res.requirements() {
        out.push_str(&format!("requirement: {req}\n"));
    }
    for content in res.content() {
        let digest = content.sha256.as_ref().map(|d| d.to_string()).unwrap_or_default();
        out.push_str(&format!("content: {} {} {}\n", content.uri, content.size.unwrap_or(0), digest));
    }
    out.push_str(&format!("archive: {}\n", capstan_core::digest::Sha256Digest::of(&bytes)));
    Ok(out)
}

fn index(inputs: &[PathBuf], out: &Path, name: &str) -> Result<String, Failure> {
    let mut entries = Vec::with_capacity(inputs.len());
    for path in inputs {
        entries.push((path.display().to_string(), load_resource(path)?));
    }
    let idx = build_index_with_origins(name, entries).map_err(|e| Failure::new(VALIDATION_FAILURE, e.to_string()))?;
    write(out, &save_index(&idx))?;
    let mut report = format!("index {} ({} resources)\n", idx.name(), idx.len());
    for res in idx.resources() {
        report.push_str(&format!("  {res}\n"));
    }
    Ok(report)
}

fn requirements(query: &Query) -> Result<Vec<Requirement>, Failure> {
    let bad = |e: capstan_core::model::ClauseError| Failure::new(USAGE_ERROR, format!("bad requirement: {e}"));
    if let Some(clause) = &query.require {
        return Ok(vec![parse_requirement_clause(clause).map_err(bad)?]);
    }
    let Some(path) = &query.requirements else { return Ok(Vec::new()) };
    read_text(path)?
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(|l| parse_requirement_clause(l).map_err(bad))
        .collect()
}

fn run_resolve(query: &Query) -> Result<Resolution, Failure> {
    let initial = requirements(query)?;
    let mut ctx = ResolveContext::new(Vec::new(), initial);
    for path in &query.indexes {
        let idx =
            load_index(&read(path)?).map_err(|e| Failure::new(USAGE_ERROR, format!("{}: {e}", path.display())))?;
        ctx.repositories.push(idx);
    }
    for path in &query.root {
        ctx.root_resources.push(load_resource(path)?);
    }
    if ctx.initial_requirements.is_empty() && ctx.root_resources.is_empty() {
        return Err(Failure::new(USAGE_ERROR, "nothing to resolve: give --require, --requirements or --root"));
    }
    resolver::resolve(&ctx).map_err(|e| match e {
        ResolveError::Unresolvable(err) => Failure::new(RESOLUTION_FAILURE, resolver::explain(&err)),
        ResolveError::InvalidContext(_) => Failure::new(USAGE_ERROR, e.to_string()),
        ResolveError::BacktrackLimitExceeded { .. } => Failure::new(RESOLUTION_FAILURE, e.to_string()),
    })
}

fn deployment(res: &Resolution) -> Result<String, Failure> {
    mlpkg::assemble(res).map(|d| d.to_string()).map_err(|e| Failure::new(VALIDATION_FAILURE, e.to_string()))
}

fn resolve(query: &Query, deploy: Option<&Path>, verbose: bool) -> Result<String, Failure> {
    let res = run_resolve(query)?;
    if let Some(path) = deploy {
        write(path, deployment(&res)?.as_bytes())?;
    }
    Ok(resolver::render_report(&res, verbose))
}

fn assemble(query: &Query, out: Option<&Path>) -> Result<String, Failure> {
    let text = deployment(&run_resolve(query)?)?;
    match out {
        Some(path) => write(path, text.as_bytes()).map(|_| String::new()),
        None => Ok(text),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let code = if err.use_stderr() { USAGE_ERROR } else { 0 };
            let _ = err.print();
            return ExitCode::from(code);
        }
    };
    let result = match &cli.command {
        Command::Create { descriptor, graph, params, out } => create(descriptor, graph, params, out),
        Command::Inspect { package } => inspect(package),
        Command::Index { inputs, out, name } => index(inputs, out, name),
        Command::Resolve { query, deploy, verbose } => resolve(query, deploy.as_deref(), *verbose),
        Command::Assemble { query, out } => assemble(query, out.as_deref()),
    };
    match result {
        Ok(output) => {
            print!("{output}");
            ExitCode::SUCCESS
        }
        Err(failure) => {
            eprint!("{}", failure.message);
            if !failure.message.ends_with('\n') {
                eprintln!();
            }
            ExitCode::from(failure.code)
        }
    }
}
