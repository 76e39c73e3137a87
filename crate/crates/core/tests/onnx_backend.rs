#[path = "support/onnx.rs"]
mod onnx;

use conv_core::embeddings::OnnxBackend;
use conv_core::{consistency_score, BackboneManifest, DetectorConfig, Embedder, ImageTensor};

fn manifest(input_size: usize, output_dim: usize) -> BackboneManifest {
    BackboneManifest {
        backbone_id: Some("test".into()),
        input_size,
        mean: [0.5, 0.5, 0.5],
        std: [0.25, 0.25, 0.25],
        output_dim,
    }
}

#[test]
fn mean_pool_graph_matches_closed_form() {
    let backend = OnnxBackend::from_bytes(&onnx::mean_pool_backbone(8), manifest(8, 3), "m".into())
        .unwrap()
        .with_normalization(false);
    assert_eq!(backend.output_dim(), 3);
    let img = ImageTensor::filled(8, 8, [0.75, 0.5, 0.25]).unwrap();
    let v = backend.embed(&img).unwrap();
    assert_eq!(v.values(), &[1.0, 0.0, -1.0]);
    assert!(!v.is_normalized());
}

#[test]
fn normalized_output_has_unit_norm() {
    let backend = OnnxBackend::from_bytes(&onnx::conv_backbone(16, 32, 1), manifest(32, 16), "c".into()).unwrap();
    let img = ImageTensor::filled(32, 32, [0.2, 0.6, 0.9]).unwrap();
    let v = backend.embed(&img).unwrap();
    assert!((v.norm() - 1.0).abs() < 1e-6);
    assert_eq!(backend.embed(&img).unwrap(), v);
}

#[test]
fn load_reads_sidecar() {
    let dir = tempfile::tempdir().unwrap();
    let path = onnx::write_backbone(dir.path(), "tiny.onnx", &onnx::conv_backbone(8, 16, 2), 16, 8);
    let backend = OnnxBackend::load(&path).unwrap();
    assert_eq!(backend.backbone_id(), "tiny");
    assert_eq!(backend.input_size(), 16);
}

#[test]
fn missing_sidecar_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bare.onnx");
    std::fs::write(&path, onnx::conv_backbone(8, 16, 2)).unwrap();
    let err = OnnxBackend::load(&path).unwrap_err().to_string();
    assert!(err.contains("manifest.json"), "{err}");
}

#[test]
fn manifest_dimension_mismatch_is_rejected() {
    let err = OnnxBackend::from_bytes(&onnx::conv_backbone(8, 16, 2), manifest(16, 9), "c".into()).unwrap_err();
    assert!(err.to_string().contains("output_dim"), "{err}");
}

#[test]
fn wrong_image_size_is_rejected() {
    let backend = OnnxBackend::from_bytes(&onnx::mean_pool_backbone(8), manifest(8, 3), "m".into()).unwrap();
    let img = ImageTensor::filled(9, 9, [0.5; 3]).unwrap();
    assert!(backend.embed(&img).is_err());
}

#[test]
fn garbage_bytes_are_a_backend_error() {
    assert!(OnnxBackend::from_bytes(b"not a graph", manifest(8, 3), "x".into()).is_err());
}

#[test]
fn consistency_score_runs_through_graph() {
    let backend = OnnxBackend::from_bytes(&onnx::conv_backbone(16, 32, 3), manifest(32, 16), "c".into()).unwrap();
    let mut data = Vec::with_capacity(3 * 32 * 32);
    for c in 0..3 {
        for y in 0..32 {
            for x in 0..32 {
                data.push(((x * 7 + y * 3 + c * 11) % 17) as f32 / 16.0);
            }
        }
    }
    let img = ImageTensor::new(32, 32, data).unwrap();
    let config = DetectorConfig {
        rounds: 4,
        ..Default::default()
    };
    let a = consistency_score(&backend, &img, "x", &config).unwrap();
    let b = consistency_score(&backend, &img, "x", &config).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.similarities.len(), 4);
    assert!(a.score > 0.0 && a.score < 2.0, "{}", a.score);
}
