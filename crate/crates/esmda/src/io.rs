use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::EsmdaError;
use crate::workflow::{Ensemble, Space};

const FORMAT: &str = "resgen-ensemble/1";

#[derive(Serialize, Deserialize)]
struct Manifest {
    format: String,
    space: Space,
    iteration: usize,
    members: usize,
    dim: usize,
    file: String,
}

/// Writes `<name>.json` and a packed little-endian float32 `<name>.f32`.
pub fn write_ensemble(ensemble: &Ensemble, dir: &Path, name: &str) -> Result<(), EsmdaError> {
    fs::create_dir_all(dir)?;
    let file = format!("{name}.f32");
    let mut bytes = Vec::with_capacity(ensemble.len() * ensemble.dim() * 4);
    for m in &ensemble.members {
        for v in m {
            bytes.extend_from_slice(&(*v as f32).to_le_bytes());
        }
    }
    fs::write(dir.join(&file), bytes)?;
    let manifest = Manifest {
        format: FORMAT.into(),
        space: ensemble.space,
        iteration: ensemble.iteration,
        members: ensemble.len(),
        dim: ensemble.dim(),
        file,
    };
    fs::write(dir.join(format!("{name}.json")), serde_json::to_string_pretty(&manifest)?)?;
    Ok(())
}

pub fn read_ensemble(dir: &Path, name: &str) -> Result<Ensemble, EsmdaError> {
    let manifest: Manifest = serde_json::from_str(&fs::read_to_string(dir.join(format!("{name}.json")))?)?;
    if manifest.format != FORMAT {
        return Err(EsmdaError::Format(format!("unsupported format {}", manifest.format)));
    }
    let bytes = fs::read(dir.join(&manifest.file))?;
    if bytes.len() != manifest.members * manifest.dim * 4 {
        return Err(EsmdaError::Format(format!(
            "{} holds {} bytes, expected {}",
            manifest.file,
            bytes.len(),
            manifest.members * manifest.dim * 4
        )));
    }
    let values: Vec<f64> =
        bytes.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64).collect();
    let members = values.chunks(manifest.dim.max(1)).map(|c| c.to_vec()).collect();
    Ensemble::new(members, manifest.space, manifest.iteration)
}
