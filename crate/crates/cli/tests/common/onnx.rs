//! Tiny ONNX models for tests and fixtures, built from tract's protobuf types.

#![allow(dead_code)]

use std::fs;
use std::path::Path;

use prost::Message;
use tract_onnx::pb::{
    tensor_proto::DataType, tensor_shape_proto::dimension, tensor_shape_proto::Dimension, type_proto, AttributeProto,
    GraphProto, ModelProto, NodeProto, OperatorSetIdProto, TensorProto, TensorShapeProto, TypeProto, ValueInfoProto,
};

fn value_info(name: &str, shape: &[usize]) -> ValueInfoProto {
    let dims = shape
        .iter()
        .map(|&d| Dimension {
            value: Some(dimension::Value::DimValue(d as i64)),
            ..Default::default()
        })
        .collect();
    ValueInfoProto {
        name: name.into(),
        r#type: Some(TypeProto {
            value: Some(type_proto::Value::TensorType(type_proto::Tensor {
                elem_type: DataType::Float as i32,
                shape: Some(TensorShapeProto { dim: dims }),
            })),
            ..Default::default()
        }),
        ..Default::default()
    }
}

fn initializer(name: &str, dims: &[usize], values: Vec<f32>) -> TensorProto {
    assert_eq!(dims.iter().product::<usize>(), values.len());
    TensorProto {
        name: name.into(),
        dims: dims.iter().map(|&d| d as i64).collect(),
        data_type: DataType::Float as i32,
        float_data: values,
        ..Default::default()
    }
}

fn node(op: &str, inputs: &[&str], output: &str, attributes: Vec<AttributeProto>) -> NodeProto {
    NodeProto {
        op_type: op.into(),
        input: inputs.iter().map(|s| s.to_string()).collect(),
        output: vec![output.into()],
        name: output.into(),
        attribute: attributes,
        ..Default::default()
    }
}

fn int_attr(name: &str, v: i64) -> AttributeProto {
    AttributeProto {
        name: name.into(),
        r#type: tract_onnx::pb::attribute_proto::AttributeType::Int as i32,
        i: v,
        ..Default::default()
    }
}

fn save(path: &Path, nodes: Vec<NodeProto>, inits: Vec<TensorProto>, input_shape: &[usize], output_shape: &[usize]) {
    let model = ModelProto {
        ir_version: 8,
        opset_import: vec![OperatorSetIdProto {
            domain: String::new(),
            version: 13,
        }],
        producer_name: "claimcheck-tests".into(),
        graph: Some(GraphProto {
            name: "g".into(),
            node: nodes,
            initializer: inits,
            input: vec![value_info("input", input_shape)],
            output: vec![value_info("output", output_shape)],
            ..Default::default()
        }),
        ..Default::default()
    };
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).unwrap();
    }
    fs::write(path, model.encode_to_vec()).unwrap();
}

/// input [1,C,H,W] → channel means [1,C] → linear map to `out_dim` values.
pub fn linear_descriptor(path: &Path, input_shape: [usize; 4], out_dim: usize) {
    let c = input_shape[1];
    let weights = (0..c * out_dim).map(|k| ((k * 7 % 11) as f32 - 5.0) / 5.0).collect();
    save(
        path,
        vec![
            node("GlobalAveragePool", &["input"], "pooled", vec![]),
            node("Flatten", &["pooled"], "flat", vec![int_attr("axis", 1)]),
            node("MatMul", &["flat", "w"], "output", vec![]),
        ],
        vec![initializer("w", &[c, out_dim], weights)],
        &input_shape,
        &[1, out_dim],
    );
}

/// Outputs `values` for every input (after a zero-weighted dependence on it).
pub fn constant_outputs(path: &Path, input_shape: [usize; 4], values: &[f32]) {
    let c = input_shape[1];
    let k = values.len();
    save(
        path,
        vec![
            node("GlobalAveragePool", &["input"], "pooled", vec![]),
            node("Flatten", &["pooled"], "flat", vec![int_attr("axis", 1)]),
            node("MatMul", &["flat", "w"], "zero", vec![]),
            node("Add", &["zero", "b"], "output", vec![]),
        ],
        vec![initializer("w", &[c, k], vec![0.0; c * k]), initializer("b", &[k], values.to_vec())],
        &input_shape,
        &[1, k],
    );
}

/// Two-class softmax over a linear function of the channel means.
pub fn softmax_classifier(path: &Path, input_shape: [usize; 4], weights: &[[f32; 2]], bias: [f32; 2]) {
    let c = input_shape[1];
    assert_eq!(weights.len(), c);
    save(
        path,
        vec![
            node("GlobalAveragePool", &["input"], "pooled", vec![]),
            node("Flatten", &["pooled"], "flat", vec![int_attr("axis", 1)]),
            node("MatMul", &["flat", "w"], "lin", vec![]),
            node("Add", &["lin", "b"], "logits", vec![]),
            node("Softmax", &["logits"], "output", vec![int_attr("axis", 1)]),
        ],
        vec![
            initializer("w", &[c, 2], weights.iter().flatten().copied().collect()),
            initializer("b", &[2], bias.to_vec()),
        ],
        &input_shape,
        &[1, 2],
    );
}
