//! Weight files: `manifest.json` plus one little-endian f32 blob per tensor.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::NnError;
use crate::layers::{LayerSpec, Network, Param};
use crate::tensor::Tensor;

const FORMAT: &str = "resgen-weights/1";
const MANIFEST: &str = "manifest.json";

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
    trainable: bool,
    file: String,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Manifest {
    format: String,
    dtype: String,
    seed: u64,
    input_shape: Vec<usize>,
    layers: Vec<LayerSpec>,
    tensors: Vec<TensorEntry>,
    #[serde(default)]
    metadata: serde_json::Value,
}

fn file_name(name: &str) -> String {
    let safe: String = name
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '.' || c == '_' || c == '-' { c } else { '_' })
        .collect();
    format!("{safe}.bin")
}

/// Writes `net` into directory `dir`, creating it if needed. `metadata` is
/// stored verbatim in the manifest.
pub fn save_network(net: &Network<f32>, dir: &Path, metadata: serde_json::Value) -> Result<(), NnError> {
    fs::create_dir_all(dir)?;
    let mut tensors = Vec::new();
    let all = net
        .params()
        .iter()
        .map(|p| (p, true))
        .chain(net.state().iter().map(|p| (p, false)));
    for (p, trainable) in all {
        let file = file_name(&p.name);
        let bytes: Vec<u8> = p.tensor.data().iter().flat_map(|x| x.to_le_bytes()).collect();
        fs::write(dir.join(&file), bytes)?;
        tensors.push(TensorEntry {
            name: p.name.clone(),
            shape: p.tensor.shape().to_vec(),
            trainable,
            file,
        });
    }
    let manifest = Manifest {
        format: FORMAT.into(),
        dtype: "f32".into(),
        seed: net.seed(),
        input_shape: net.input_shape().to_vec(),
        layers: net.layers().to_vec(),
        tensors,
        metadata,
    };
    fs::write(dir.join(MANIFEST), serde_json::to_string_pretty(&manifest)?)?;
    Ok(())
}

/// Reads a network written by [`save_network`], returning it with its metadata.
pub fn load_network(dir: &Path) -> Result<(Network<f32>, serde_json::Value), NnError> {
    let manifest: Manifest = serde_json::from_str(&fs::read_to_string(dir.join(MANIFEST))?)?;
    if manifest.format != FORMAT || manifest.dtype != "f32" {
        return Err(NnError::Format(format!(
            "unsupported format {} / dtype {}",
            manifest.format, manifest.dtype
        )));
    }
    let mut net = Network::new(&manifest.input_shape, manifest.layers, manifest.seed)?;
    let mut params = Vec::new();
    let mut state = Vec::new();
    for entry in manifest.tensors {
        let bytes = fs::read(dir.join(&entry.file))?;
        if bytes.len() % 4 != 0 {
            return Err(NnError::Format(format!("blob for '{}' is truncated", entry.name)));
        }
        let data = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        let p = Param {
            tensor: Tensor::new(&entry.shape, data)?,
            name: entry.name,
        };
        if entry.trainable {
            params.push(p);
        } else {
            state.push(p);
        }
    }
    net.load_tensors(params, state)?;
    Ok((net, manifest.metadata))
}
