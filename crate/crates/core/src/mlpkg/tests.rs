use std::io::{Cursor, Write};

use proptest::prelude::*;

use super::*;
use crate::filter::{eval_filter, parse_filter};
use crate::model::{matches, parse_capability_clause, parse_requirement_clause};
use crate::repo::build_index;
use crate::resolver::{resolve, ResolveContext};

const CONSUMER_FILTER: &str =
    "(&(input=image)(input.width>=28)(input.height>=28)(output.type=digit)(|(dataset=MNIST)(dataset=SVHN)))";

const LISTED_CAPABILITY: &str = "ml.model; input=image; input.height:Long=28; input.width:Long=28; \
     output.type=digit; output.size:Long=10; dataset=MNIST; version:String=1.0.0";

fn descriptor(name: &str, side: u64, dataset: &str) -> ModelDescriptor {
    ModelDescriptor {
        name: name.into(),
        version: Version::new(1, 0, 0),
        input_kind: "image".into(),
        input_width: side,
        input_height: side,
        output_type: "digit".into(),
        output_size: 10,
        dataset: dataset.into(),
        dataset_version: None,
        required_ops: vec!["conv2d".into(), "relu".into()],
        hardware: None,
    }
}

fn mnist() -> ModelDescriptor {
    descriptor("mnist-model", 28, "MNIST")
}

fn zip_of(entries: &[(&str, &[u8])]) -> Vec<u8> {
    let mut zip = zip::ZipWriter::new(Cursor::new(Vec::new()));
    for (name, bytes) in entries {
        zip.start_file(*name, zip_options()).unwrap();
        zip.write_all(bytes).unwrap();
    }
    zip.finish().unwrap().into_inner()
}

fn manifest_of(archive: &[u8]) -> String {
    let mut zip = ZipArchive::new(Cursor::new(archive)).unwrap();
    String::from_utf8(read_entry(&mut zip, MANIFEST_ENTRY).unwrap()).unwrap()
}

#[test]
fn mnist_capability_extends_the_listing() {
    let cap = capability_of(&mnist());
    let listed = parse_capability_clause(LISTED_CAPABILITY).unwrap();
    assert_eq!(cap.namespace, listed.namespace);
    for (name, value) in listed.properties.iter() {
        assert_eq!(cap.properties.get(name), Some(value), "{name}");
    }
    let extra: Vec<&str> = cap.properties.iter().map(|(n, _)| n).filter(|n| !listed.properties.contains(n)).collect();
    assert_eq!(extra, ["model.version"]);
    assert_eq!(cap.properties.get("model.version"), Some(&PropertyValue::Version(Version::new(1, 0, 0))));
}

#[test]
fn svhn_satisfies_the_consumer_filter() {
    let filter = parse_filter(CONSUMER_FILTER).unwrap();
    let cap = capability_of(&descriptor("svhn-model", 32, "SVHN"));
    assert_eq!(cap.properties.get("dataset").and_then(|v| v.as_str()), Some("SVHN"));
    assert!(eval_filter(&filter, &cap.properties));
}

#[test]
fn consumer_filter_over_a_descriptor_grid() {
    let filter = parse_filter(CONSUMER_FILTER).unwrap();
    for width in [1, 27, 28, 29, 224] {
        for height in [1, 27, 28, 100] {
            for dataset in ["MNIST", "SVHN", "CIFAR", "mnist"] {
                for output in ["digit", "letter"] {
                    let mut d = descriptor("m", 1, dataset);
                    (d.input_width, d.input_height, d.output_type) = (width, height, output.into());
                    let expected =
                        width >= 28 && height >= 28 && output == "digit" && (dataset == "MNIST" || dataset == "SVHN");
                    let cap = capability_of(&d);
                    assert_eq!(eval_filter(&filter, &cap.properties), expected, "{d:?}");
                    assert!(matches(&Requirement::new(MODEL_NAMESPACE, None).unwrap(), &cap));
                }
            }
        }
    }
}

#[test]
fn descriptor_invariants() {
    let mut d = mnist();
    d.output_size = 0;
    assert!(matches!(d.validate(), Err(PackageError::InvalidDescriptor(_))));
    let mut d = mnist();
    d.dataset.clear();
    assert!(matches!(d.validate(), Err(PackageError::InvalidDescriptor(_))));
    let mut d = mnist();
    d.input_width = u64::MAX;
    assert!(d.validate().is_err());
    let mut d = mnist();
    d.name = "bad name".into();
    assert!(d.validate().is_err());
    let mut d = mnist();
    d.output_type = " digit".into();
    assert!(d.validate().is_err());
    assert!(create_package(&descriptor("m", 0, "MNIST"), b"g", b"p").is_err());
}

#[test]
fn requirement_generation() {
    let reqs = requirements_of(&mnist());
    assert_eq!(reqs.len(), 1);
    assert_eq!(reqs[0].namespace, RUNTIME_NAMESPACE);
    assert_eq!(reqs[0].filter.as_ref().unwrap().to_string(), "(&(ops=conv2d)(ops=relu))");
    let runtime = parse_capability_clause("runtime.ops; ops:List<String>=conv2d,relu,matmul").unwrap();
    assert!(matches(&reqs[0], &runtime));
    let partial = parse_capability_clause("runtime.ops; ops:List<String>=conv2d,matmul").unwrap();
    assert!(!matches(&reqs[0], &partial));

    let mut d = mnist();
    d.required_ops.clear();
    assert!(requirements_of(&d).is_empty());

    d.hardware = Some(Hardware { gpu: true, min_memory_mb: 4096 });
    let reqs = requirements_of(&d);
    assert_eq!(reqs.len(), 1);
    assert_eq!(reqs[0].namespace, HARDWARE_NAMESPACE);
    assert_eq!(reqs[0].filter.as_ref().unwrap().to_string(), "(&(gpu=true)(memory.mb>=4096))");
    let board = parse_capability_clause("hw; gpu=true; memory.mb:Long=8192").unwrap();
    assert!(matches(&reqs[0], &board));
    let small = parse_capability_clause("hw; gpu=true; memory.mb:Long=2048").unwrap();
    assert!(!matches(&reqs[0], &small));
}

#[test]
fn created_manifest_round_trips() {
    let archive = create_package(&mnist(), b"graph", b"params").unwrap();
    let text = manifest_of(&archive);
    let res = parse_manifest(&text).unwrap();
    assert_eq!(serialize_manifest(&res), text);
    assert!(text.contains(
        "Provide-Capability: ml.model; dataset=MNIST; input=image; input.height:Long=28; input.width:Long=28; \
         model.version:Version=1.0.0; output.size:Long=10; output.type=digit; version=1.0.0\n"
    ));
    assert!(text.contains(&format!("Content: model/graph.bin; sha256={}; size=5\n", Sha256Digest::of(b"graph"))));
    assert!(text.contains(&format!("Content: model/params.bin; sha256={}; size=6\n", Sha256Digest::of(b"params"))));

    let pkg = validate_package(&archive).unwrap();
    assert_eq!(pkg.graph, b"graph");
    assert_eq!(pkg.params_sha256, Sha256Digest::of(b"params"));
    assert_eq!(inspect(&archive).unwrap(), mnist());
    assert_eq!(create_package(&mnist(), b"graph", b"params").unwrap(), archive);
}

#[test]
fn empty_payloads() {
    assert_eq!(create_package(&mnist(), b"", b"p"), Err(PackageError::EmptyPayload("graph")));
    assert_eq!(create_package(&mnist(), b"g", b""), Err(PackageError::EmptyPayload("params")));
}

#[test]
fn truncated_params_are_detected() {
    let archive = create_package(&mnist(), b"graph", b"params").unwrap();
    let manifest = manifest_of(&archive);
    let rebuilt = zip_of(&[(MANIFEST_ENTRY, manifest.as_bytes()), (GRAPH_ENTRY, b"graph"), (PARAMS_ENTRY, b"param")]);
    let err = validate_package(&rebuilt).unwrap_err();
    assert_eq!(err, PackageError::DigestMismatch { entry: PARAMS_ENTRY.into() });
    assert!(err.to_string().starts_with("digest-mismatch"));
}

#[test]
fn layout_errors() {
    let archive = create_package(&mnist(), b"graph", b"params").unwrap();
    let manifest = manifest_of(&archive);
    let m = manifest.as_bytes();
    let cases = [
        zip_of(&[(MANIFEST_ENTRY, m), (GRAPH_ENTRY, b"graph")]),
        zip_of(&[(MANIFEST_ENTRY, m), (GRAPH_ENTRY, b"graph"), (PARAMS_ENTRY, b"params"), ("extra", b"x")]),
        b"not a zip".to_vec(),
        Vec::new(),
    ];
    for bytes in cases {
        let err = validate_package(&bytes).unwrap_err();
        assert!(matches!(err, PackageError::Layout(_)), "{err}");
        assert!(err.to_string().starts_with("layout-error"));
    }
    let broken = zip_of(&[(MANIFEST_ENTRY, b"Package-Name: x\n"), (GRAPH_ENTRY, b"g"), (PARAMS_ENTRY, b"p")]);
    let err = validate_package(&broken).unwrap_err();
    assert!(err.to_string().starts_with("manifest-error"), "{err}");
}

fn with_manifest(edit: impl Fn(&str) -> String) -> Result<ModelPackage, PackageError> {
    let archive = create_package(&mnist(), b"graph", b"params").unwrap();
    let manifest = edit(&manifest_of(&archive));
    validate_package(&zip_of(&[
        (MANIFEST_ENTRY, manifest.as_bytes()),
        (GRAPH_ENTRY, b"graph"),
        (PARAMS_ENTRY, b"params"),
    ]))
}

#[test]
fn schema_errors_name_the_attribute() {
    let err = with_manifest(|m| m.replace("dataset=MNIST; ", "")).unwrap_err();
    assert_eq!(err, PackageError::schema("dataset", "is missing"));
    assert!(err.to_string().contains("`dataset`"));

    let err = with_manifest(|m| m.replace("input.height:Long=28", "input.height=28")).unwrap_err();
    assert!(matches!(&err, PackageError::Schema { attribute, .. } if attribute == "input.height"), "{err}");
    assert!(err.to_string().starts_with("schema-error"));

    let err = with_manifest(|m| m.replace("output.size:Long=10", "output.size:Long=0")).unwrap_err();
    assert!(matches!(&err, PackageError::Schema { attribute, .. } if attribute == "output.size"));

    let err = with_manifest(|m| m.replace("model.version:Version=1.0.0", "model.version=one")).unwrap_err();
    assert!(matches!(&err, PackageError::Schema { attribute, .. } if attribute == "model.version"));

    let err = with_manifest(|m| m.replace("Provide-Capability: ml.model", "Provide-Capability: ml.other")).unwrap_err();
    assert!(matches!(&err, PackageError::Schema { attribute, .. } if attribute == MODEL_NAMESPACE));

    let err = with_manifest(|m| m.replace("Content: model/graph.bin", "Content: model/other.bin")).unwrap_err();
    assert!(matches!(err, PackageError::Layout(_)));
}

#[test]
fn descriptor_attribute_text() {
    let text = "\
# MNIST classifier
name=mnist-model
version:Version=1.0.0
input=image
input.width:Long=28
input.height=28
output.type=digit
output.size:Long=10
dataset=MNIST
ops:List<String>=conv2d,relu
";
    assert_eq!(ModelDescriptor::from_attributes(text).unwrap(), mnist());

    let mut full = mnist();
    full.dataset_version = Some(Version::new(2, 0, 0));
    full.hardware = Some(Hardware { gpu: false, min_memory_mb: 512 });
    full.required_ops.push("mat,mul".into());
    assert_eq!(ModelDescriptor::from_attributes(&full.to_attributes()).unwrap(), full);

    let bad = [
        ("output.size:Long=0", "invalid-descriptor"),
        ("output.size:String=10", "descriptor line"),
        ("colour=red", "descriptor line"),
        ("output.size", "descriptor line"),
        ("hw.gpu=maybe\nhw.memory.mb=1", "invalid-descriptor"),
        ("hw.gpu=true", "invalid-descriptor"),
    ];
    for (line, kind) in bad {
        let text = format!("{}{line}\n", text.replace("output.size:Long=10\n", ""));
        let err = ModelDescriptor::from_attributes(&text).unwrap_err();
        assert!(err.to_string().starts_with(kind), "{line}: {err}");
    }
    let missing = text.replace("dataset=MNIST\n", "");
    assert_eq!(
        ModelDescriptor::from_attributes(&missing),
        Err(PackageError::InvalidDescriptor("missing dataset".into()))
    );
}

#[test]
fn package_resource_describes_the_archive() {
    let archive = create_package(&mnist(), b"graph", b"params").unwrap();
    let res = package_resource(&archive, "mnist-model-1.0.0.zip").unwrap();
    assert_eq!(res.content().len(), 3);
    assert_eq!(res.content()[0].uri, "mnist-model-1.0.0.zip");
    assert_eq!(res.content()[0].sha256, Some(Sha256Digest::of(&archive)));
    assert_eq!(res.content()[0].size, Some(archive.len() as u64));
    assert!(package_resource(&archive, "bad name.zip").is_err());
}

fn with_content(manifest: &str, uri: &str, bytes: &[u8]) -> Resource {
    let mut res = parse_manifest(manifest).unwrap();
    res.add_content(Content { uri: uri.into(), sha256: Some(Sha256Digest::of(bytes)), size: Some(bytes.len() as u64) })
        .unwrap();
    res
}

#[test]
fn assemble_the_fixture_closure() {
    let archive = create_package(&mnist(), b"graph", b"params").unwrap();
    let model = package_resource(&archive, "mnist.zip").unwrap();
    let runtime = with_content("Package-Name: runtime\nPackage-Version: 2.1.0\nProvide-Capability: runtime.ops; ops:List<String>=conv2d,relu\n", "rt.so", b"rt");
    let consumer = with_content(
        &format!("Package-Name: consumer\nPackage-Version: 0.3.0\nRequire-Capability: ml.model; filter:='{CONSUMER_FILTER}'\n"),
        "app.py",
        b"app",
    );
    let ctx = ResolveContext {
        repositories: vec![build_index("repo", vec![model, runtime]).unwrap()],
        root_resources: vec![consumer],
        ..Default::default()
    };
    let resolution = resolve(&ctx).unwrap();
    let deployment = assemble(&resolution).unwrap();
    let expected = format!(
        "consumer 0.3.0 consumer app.py {}\nmnist-model 1.0.0 model mnist.zip {}\nruntime 2.1.0 runtime rt.so {}\n",
        Sha256Digest::of(b"app"),
        Sha256Digest::of(&archive),
        Sha256Digest::of(b"rt")
    );
    assert_eq!(deployment.to_string(), expected);
    assert_eq!(parse_deployment(&expected), Some(deployment.clone()));
    assert_eq!(assemble(&resolve(&ctx).unwrap()).unwrap().to_string(), expected);

    let bare = ResolveContext {
        root_resources: vec![Resource::new("root", Version::new(1, 0, 0)).unwrap()],
        ..Default::default()
    };
    let err = assemble(&resolve(&bare).unwrap()).unwrap_err();
    assert!(matches!(err, PackageError::MissingContent { .. }));
    assert!(err.to_string().starts_with("missing-content"));
}

#[test]
fn roles() {
    let req = parse_requirement_clause("ml.model").unwrap();
    let consumer = Resource::new("c", Version::new(1, 0, 0)).unwrap().with_requirement(req).unwrap();
    assert_eq!(role_of(&consumer), Role::Consumer);
    assert_eq!(role_of(&Resource::new("o", Version::new(1, 0, 0)).unwrap()), Role::Other);
}

fn arb_descriptor() -> impl Strategy<Value = ModelDescriptor> {
    (
        "[a-z][a-z0-9-]{0,8}",
        (0u64..20, 0u64..20, 0u64..20),
        ("[a-z]{1,6}", 1u64..2048, 1u64..2048, "[a-z]( ?[a-z]){0,4}", 1u64..1000, "[A-Za-z0-9;']{1,6}"),
        prop::option::of((0u64..5, 0u64..5, 0u64..5)),
        prop::collection::vec("[a-z0-9,()*\\\\]{1,6}", 0..4),
        prop::option::of((any::<bool>(), 1u64..100_000)),
    )
        .prop_map(|(name, (a, b, c), (input, w, h, output, size, dataset), dv, ops, hw)| ModelDescriptor {
            name,
            version: Version::new(a, b, c),
            input_kind: input,
            input_width: w,
            input_height: h,
            output_type: output,
            output_size: size,
            dataset,
            dataset_version: dv.map(|(a, b, c)| Version::new(a, b, c)),
            required_ops: ops,
            hardware: hw.map(|(gpu, min_memory_mb)| Hardware { gpu, min_memory_mb }),
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn create_validate_inspect_is_identity(
        d in arb_descriptor(),
        graph in prop::collection::vec(any::<u8>(), 1..64),
        params in prop::collection::vec(any::<u8>(), 1..64),
    ) {
        let archive = create_package(&d, &graph, &params).unwrap();
        let pkg = validate_package(&archive).unwrap();
        prop_assert_eq!(&pkg.graph, &graph);
        prop_assert_eq!(&pkg.params, &params);
        prop_assert_eq!(inspect(&archive).unwrap(), d.clone());
        prop_assert_eq!(ModelDescriptor::from_attributes(&d.to_attributes()).unwrap(), d);
    }

    #[test]
    fn single_byte_corruption_is_detected(
        params in prop::collection::vec(any::<u8>(), 32..96),
        pos in any::<prop::sample::Index>(),
        flip in 1u8..=255,
        which in any::<bool>(),
    ) {
        let graph = b"graph payload bytes".to_vec();
        let archive = create_package(&mnist(), &graph, &params).unwrap();
        let payload: &[u8] = if which { &graph } else { &params };
        let start = archive.windows(payload.len()).position(|w| w == payload).unwrap();
        let mut corrupted = archive.clone();
        corrupted[start + pos.index(payload.len())] ^= flip;
        let entry = if which { GRAPH_ENTRY } else { PARAMS_ENTRY };
        prop_assert_eq!(validate_package(&corrupted), Err(PackageError::DigestMismatch { entry: entry.into() }));
    }
}
