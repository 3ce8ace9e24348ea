//! Versioned JSON model files. Every parameter is written with 17
//! significant digits, which round-trips an `f64` exactly.

use std::fs;
use std::path::Path;

use serde_json::Value;

use super::{Architecture, ClassifierModel, ConvGapModel, MlpModel, Network};
use crate::core_math::Tensor;
use crate::error::{Error, ModelLoadError, Result};
use crate::losses_mi::LossSpec;

pub const MODEL_FORMAT_VERSION: &str = "miest-model/1";

/// `v` with 17 significant digits in scientific notation (valid JSON).
pub(crate) fn exact_number(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn to_json_string(model: &ClassifierModel) -> Result<String> {
    // Parameters are emitted by hand so every value keeps exactly 17 digits.
    let mut out = String::new();
    out.push_str("{\"format_version\":");
    out.push_str(&serde_json::to_string(MODEL_FORMAT_VERSION)?);
    out.push_str(",\"architecture\":");
    out.push_str(&serde_json::to_string(&model.network.architecture())?);
    out.push_str(",\"head\":");
    out.push_str(&serde_json::to_string(&model.head)?);
    out.push_str(",\"parameters\":[");
    for (i, (name, t)) in model
        .network
        .param_names()
        .into_iter()
        .zip(model.network.params())
        .enumerate()
    {
        if i > 0 {
            out.push(',');
        }
        out.push_str("{\"name\":");
        out.push_str(&serde_json::to_string(&name)?);
        out.push_str(",\"shape\":");
        out.push_str(&serde_json::to_string(t.shape())?);
        out.push_str(",\"data\":[");
        for (j, &v) in t.data().iter().enumerate() {
            if j > 0 {
                out.push(',');
            }
            out.push_str(&exact_number(v));
        }
        out.push_str("]}");
    }
    out.push_str("]}\n");
    Ok(out)
}

pub fn save_model(model: &ClassifierModel, path: &Path) -> Result<()> {
    let text = to_json_string(model)?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn malformed(msg: impl Into<String>) -> Error {
    ModelLoadError::Malformed(msg.into()).into()
}

fn inconsistent(msg: impl Into<String>) -> Error {
    ModelLoadError::ShapeInconsistency(msg.into()).into()
}

fn parse_tensor(entry: &Value) -> Result<(String, Tensor)> {
    let name = entry
        .get("name")
        .and_then(Value::as_str)
        .ok_or_else(|| malformed("parameter without a name"))?
        .to_string();
    let shape = entry
        .get("shape")
        .and_then(Value::as_array)
        .ok_or_else(|| malformed(format!("{name}: missing shape")))?
        .iter()
        .map(|d| {
            d.as_u64()
                .map(|d| d as usize)
                .ok_or_else(|| malformed(format!("{name}: bad extent {d}")))
        })
        .collect::<Result<Vec<_>>>()?;
    let data = entry
        .get("data")
        .and_then(Value::as_array)
        .ok_or_else(|| malformed(format!("{name}: missing data")))?
        .iter()
        .map(|v| {
            v.as_f64()
                .ok_or_else(|| malformed(format!("{name}: non-numeric value {v}")))
        })
        .collect::<Result<Vec<_>>>()?;
    let tensor = Tensor::new(shape.clone(), data)
        .map_err(|_| inconsistent(format!("{name}: data length does not match shape {shape:?}")))?;
    Ok((name, tensor))
}

pub fn from_json_str(text: &str) -> Result<ClassifierModel> {
    let doc: Value = serde_json::from_str(text).map_err(|e| malformed(e.to_string()))?;
    let version = doc
        .get("format_version")
        .and_then(Value::as_str)
        .ok_or_else(|| malformed("missing format_version"))?;
    if version != MODEL_FORMAT_VERSION {
        return Err(ModelLoadError::VersionMismatch {
            expected: MODEL_FORMAT_VERSION.into(),
            found: version.into(),
        }
        .into());
    }
    let arch: Architecture = serde_json::from_value(
        doc.get("architecture")
            .cloned()
            .ok_or_else(|| malformed("missing architecture"))?,
    )
    .map_err(|e| malformed(format!("architecture: {e}")))?;
    let head: LossSpec = serde_json::from_value(
        doc.get("head")
            .cloned()
            .ok_or_else(|| malformed("missing head"))?,
    )
    .map_err(|e| malformed(format!("head: {e}")))?;
    let params = doc
        .get("parameters")
        .and_then(Value::as_array)
        .ok_or_else(|| malformed("missing parameters"))?
        .iter()
        .map(parse_tensor)
        .collect::<Result<Vec<_>>>()?;

    let expected_shapes: Vec<Vec<usize>> = match &arch {
        Architecture::Mlp { layer_dims } => {
            MlpModel::validate_dims(layer_dims).map_err(|e| malformed(e.to_string()))?;
            layer_dims
                .windows(2)
                .flat_map(|w| [vec![w[1], w[0]], vec![w[1]]])
                .collect()
        }
        Architecture::ConvGap(a) => a.param_shapes().map_err(|e| malformed(e.to_string()))?,
    };
    if params.len() != expected_shapes.len() {
        return Err(inconsistent(format!(
            "architecture needs {} parameter tensors, file has {}",
            expected_shapes.len(),
            params.len()
        )));
    }
    for ((name, t), want) in params.iter().zip(&expected_shapes) {
        if t.shape() != want.as_slice() {
            return Err(inconsistent(format!(
                "{name} has shape {:?}, architecture implies {want:?}",
                t.shape()
            )));
        }
    }
    let tensors: Vec<Tensor> = params.into_iter().map(|(_, t)| t).collect();
    let network = match arch {
        Architecture::Mlp { layer_dims } => Network::Mlp(MlpModel::from_params(&layer_dims, tensors)?),
        Architecture::ConvGap(a) => Network::ConvGap(ConvGapModel::from_params(a, tensors)?),
    };
    ClassifierModel::new(network, head).map_err(|e| inconsistent(e.to_string()))
}

pub fn load_model(path: &Path) -> Result<ClassifierModel> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    from_json_str(&text)
}
