mod common;

use rand::rngs::StdRng;
use rand::SeedableRng;
use sha2::{Digest, Sha256};

use tinydet::model::build_reference_model;
use tinydet::quant::{quantize_model, quantize_tensor, QuantizedModel};
use tinydet::synth::{emit_headers, emit_test_vector, parse_headers, parse_test_vector, SynthBundle};

use common::{random_quantized_model, uniform_tensor};

fn digest(bundle: &SynthBundle) -> Vec<u8> {
    let mut h = Sha256::new();
    for f in &bundle.files {
        h.update(f.name.as_bytes());
        h.update([0]);
        h.update(f.contents.as_bytes());
    }
    h.finalize().to_vec()
}

fn reference_qmodel() -> (QuantizedModel, StdRng) {
    let mut rng = StdRng::seed_from_u64(61);
    let model = build_reference_model().fold_batchnorm().unwrap();
    let calib = vec![uniform_tensor(&mut rng, model.input_shape, 1.0)];
    (quantize_model(&model, &calib).unwrap(), rng)
}

#[test]
fn random_models_round_trip() {
    let mut rng = StdRng::seed_from_u64(62);
    for _ in 0..200 {
        let m = random_quantized_model(&mut rng);
        let bundle = emit_headers(&m, "net").unwrap();
        assert_eq!(parse_headers(&bundle).unwrap(), m);
        assert_eq!(digest(&bundle), digest(&emit_headers(&m, "net").unwrap()));
    }
}

#[test]
fn reference_headers_on_disk() {
    let (m, _) = reference_qmodel();
    let bundle = emit_headers(&m, "tinydet").unwrap();
    assert_eq!(bundle.files.len(), 1 + m.layers.len());
    assert!(bundle.files.iter().all(|f| f.contents.ends_with('\n') && !f.contents.contains('\r')));

    let dir = tempfile::tempdir().unwrap();
    bundle.write_to(dir.path()).unwrap();
    let loaded = SynthBundle::read_from(dir.path()).unwrap();
    assert_eq!(loaded, bundle);
    assert_eq!(parse_headers(&loaded).unwrap(), m);

    let again = tempfile::tempdir().unwrap();
    emit_headers(&m, "tinydet").unwrap().write_to(again.path()).unwrap();
    for f in &bundle.files {
        assert_eq!(
            std::fs::read(dir.path().join(&f.name)).unwrap(),
            std::fs::read(again.path().join(&f.name)).unwrap()
        );
    }
}

#[test]
fn manifest_rejects_size_drift() {
    let (m, _) = reference_qmodel();
    let dir = tempfile::tempdir().unwrap();
    emit_headers(&m, "tinydet").unwrap().write_to(dir.path()).unwrap();
    let path = dir.path().join("tinydet_l0.h");
    let mut text = std::fs::read_to_string(&path).unwrap();
    text.push('\n');
    std::fs::write(&path, text).unwrap();
    assert!(SynthBundle::read_from(dir.path()).is_err());
}

#[test]
fn reference_test_vector_replays() {
    let (m, mut rng) = reference_qmodel();
    let x = quantize_tensor(&uniform_tensor(&mut rng, m.input_shape, 1.0), m.input).unwrap();
    let text = emit_test_vector(&m, "tinydet", &x).unwrap();
    let tv = parse_test_vector(&text, "tinydet").unwrap();
    assert!(tv.wide);
    assert_eq!(tv.input, x);
    assert!(tv.check(&m).unwrap());
}
