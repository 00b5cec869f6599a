//! Tiny ONNX graphs standing in for an exported CNN backbone.

#![allow(dead_code)]

use std::path::Path;

use prost::Message;
use tract_onnx::pb;

#[derive(Debug, Clone, Copy)]
pub enum Pool {
    /// GlobalAveragePool + Flatten: one mean per channel, D = 3.
    Global,
    /// AveragePool with a k x k window and stride k, then Flatten.
    Grid(i64),
    /// GlobalAveragePool alone, leaving a rank-4 output.
    Unflattened,
}

fn value_info(name: &str, dims: &[Option<i64>]) -> pb::ValueInfoProto {
    use pb::tensor_shape_proto::{dimension::Value, Dimension};
    let dim = dims
        .iter()
        .map(|d| Dimension {
            denotation: String::new(),
            value: Some(match d {
                Some(v) => Value::DimValue(*v),
                None => Value::DimParam("N".into()),
            }),
        })
        .collect();
    pb::ValueInfoProto {
        name: name.into(),
        r#type: Some(pb::TypeProto {
            denotation: String::new(),
            value: Some(pb::type_proto::Value::TensorType(pb::type_proto::Tensor {
                elem_type: pb::tensor_proto::DataType::Float as i32,
                shape: Some(pb::TensorShapeProto { dim }),
            })),
        }),
        doc_string: String::new(),
    }
}

fn ints(name: &str, values: &[i64]) -> pb::AttributeProto {
    pb::AttributeProto {
        name: name.into(),
        r#type: pb::attribute_proto::AttributeType::Ints as i32,
        ints: values.to_vec(),
        ..Default::default()
    }
}

fn node(op: &str, input: &str, output: &str, attribute: Vec<pb::AttributeProto>) -> pb::NodeProto {
    pb::NodeProto {
        input: vec![input.into()],
        output: vec![output.into()],
        name: format!("{op}_{output}"),
        op_type: op.into(),
        attribute,
        ..Default::default()
    }
}

/// Encoded model taking `[N, 3, size, size]` float input.
pub fn pooling_model_bytes(size: i64, pool: Pool) -> Vec<u8> {
    let (nodes, out_dims): (Vec<pb::NodeProto>, Vec<Option<i64>>) = match pool {
        Pool::Global => (
            vec![node("GlobalAveragePool", "x", "p", vec![]), node("Flatten", "p", "y", vec![])],
            vec![None, Some(3)],
        ),
        Pool::Grid(k) => {
            let cells = size / k;
            (
                vec![
                    node(
                        "AveragePool",
                        "x",
                        "p",
                        vec![ints("kernel_shape", &[k, k]), ints("strides", &[k, k])],
                    ),
                    node("Flatten", "p", "y", vec![]),
                ],
                vec![None, Some(3 * cells * cells)],
            )
        }
        Pool::Unflattened => (
            vec![node("GlobalAveragePool", "x", "y", vec![])],
            vec![None, Some(3), Some(1), Some(1)],
        ),
    };
    let model = pb::ModelProto {
        ir_version: 7,
        opset_import: vec![pb::OperatorSetIdProto { domain: String::new(), version: 13 }],
        producer_name: "lai-tests".into(),
        graph: Some(pb::GraphProto {
            node: nodes,
            name: "pool".into(),
            input: vec![value_info("x", &[None, Some(3), Some(size), Some(size)])],
            output: vec![value_info("y", &out_dims)],
            ..Default::default()
        }),
        ..Default::default()
    };
    model.encode_to_vec()
}

pub fn write_pooling_model(path: &Path, size: i64, pool: Pool) {
    std::fs::write(path, pooling_model_bytes(size, pool)).unwrap();
}
