//! Small ONNX graphs built in memory for tests.

use prost::Message;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tract_onnx::pb::{
    attribute_proto::AttributeType, tensor_proto::DataType, tensor_shape_proto, type_proto, AttributeProto,
    GraphProto, ModelProto, NodeProto, OperatorSetIdProto, TensorProto, TensorShapeProto, TypeProto, ValueInfoProto,
};

fn ints(name: &str, v: &[i64]) -> AttributeProto {
    AttributeProto {
        name: name.into(),
        r#type: AttributeType::Ints as i32,
        ints: v.to_vec(),
        ..Default::default()
    }
}

fn int(name: &str, v: i64) -> AttributeProto {
    AttributeProto {
        name: name.into(),
        r#type: AttributeType::Int as i32,
        i: v,
        ..Default::default()
    }
}

fn node(op: &str, inputs: &[&str], output: &str, attribute: Vec<AttributeProto>) -> NodeProto {
    NodeProto {
        op_type: op.into(),
        name: output.into(),
        input: inputs.iter().map(|s| s.to_string()).collect(),
        output: vec![output.into()],
        attribute,
        ..Default::default()
    }
}

fn value_info(name: &str, dims: &[i64]) -> ValueInfoProto {
    let dim = dims
        .iter()
        .map(|&d| tensor_shape_proto::Dimension {
            value: Some(tensor_shape_proto::dimension::Value::DimValue(d)),
            ..Default::default()
        })
        .collect();
    ValueInfoProto {
        name: name.into(),
        r#type: Some(TypeProto {
            value: Some(type_proto::Value::TensorType(type_proto::Tensor {
                elem_type: DataType::Float as i32,
                shape: Some(TensorShapeProto { dim }),
            })),
            ..Default::default()
        }),
        ..Default::default()
    }
}

fn tensor(name: &str, dims: &[i64], data: Vec<f32>) -> TensorProto {
    TensorProto {
        name: name.into(),
        dims: dims.to_vec(),
        data_type: DataType::Float as i32,
        float_data: data,
        ..Default::default()
    }
}

fn model(graph: GraphProto) -> Vec<u8> {
    ModelProto {
        ir_version: 7,
        opset_import: vec![OperatorSetIdProto {
            domain: String::new(),
            version: 13,
        }],
        graph: Some(graph),
        ..Default::default()
    }
    .encode_to_vec()
}

/// `(1,3,S,S) -> Conv3x3/2 -> Relu -> GlobalAveragePool -> Flatten -> (1,D)`
/// with seeded weights. Sensitive to flips, colour and blur.
pub fn conv_backbone(dim: usize, input_size: usize, seed: u64) -> Vec<u8> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = dim as i64;
    let w: Vec<f32> = (0..dim * 27).map(|_| rng.random_range(-1.0..1.0)).collect();
    let b: Vec<f32> = (0..dim).map(|_| rng.random_range(0.0..0.5)).collect();
    let s = input_size as i64;
    model(GraphProto {
        name: "conv_backbone".into(),
        node: vec![
            node(
                "Conv",
                &["input", "w", "b"],
                "conv",
                vec![ints("kernel_shape", &[3, 3]), ints("strides", &[2, 2]), ints("pads", &[1, 1, 1, 1])],
            ),
            node("Relu", &["conv"], "relu", vec![]),
            node("GlobalAveragePool", &["relu"], "pool", vec![]),
            node("Flatten", &["pool"], "output", vec![int("axis", 1)]),
        ],
        initializer: vec![tensor("w", &[d, 3, 3, 3], w), tensor("b", &[d], b)],
        input: vec![value_info("input", &[1, 3, s, s])],
        output: vec![value_info("output", &[1, d])],
        ..Default::default()
    })
}

/// Per-channel spatial mean: `(1,3,S,S) -> (1,3)`. Its output is known in closed form.
pub fn mean_pool_backbone(input_size: usize) -> Vec<u8> {
    let s = input_size as i64;
    model(GraphProto {
        name: "mean_pool".into(),
        node: vec![
            node("GlobalAveragePool", &["input"], "pool", vec![]),
            node("Flatten", &["pool"], "output", vec![int("axis", 1)]),
        ],
        input: vec![value_info("input", &[1, 3, s, s])],
        output: vec![value_info("output", &[1, 3])],
        ..Default::default()
    })
}

/// Write `bytes` to `dir/name` with its manifest sidecar; returns the model path.
pub fn write_backbone(
    dir: &std::path::Path,
    name: &str,
    bytes: &[u8],
    input_size: usize,
    output_dim: usize,
) -> std::path::PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, bytes).unwrap();
    let manifest = serde_json::json!({
        "backbone_id": name.trim_end_matches(".onnx"),
        "input_size": input_size,
        "mean": [0.5, 0.5, 0.5],
        "std": [0.25, 0.25, 0.25],
        "output_dim": output_dim,
    });
    let mut sidecar = path.clone().into_os_string();
    sidecar.push(".manifest.json");
    std::fs::write(sidecar, manifest.to_string()).unwrap();
    path
}
