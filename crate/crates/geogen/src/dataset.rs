//! Training datasets and their on-disk format.
//!
//! File layout: the 8-byte magic `RESGENDS`, a little-endian `u32` header
//! length, a JSON [`DatasetHeader`], then `count × nx × ny` little-endian f32
//! log-permeability values.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channels::{channel_field, facies_logperm, ChannelParams};
use crate::continuous::{continuous_field, ContinuousParams};
use crate::error::GeoError;
use crate::field::{FieldKind, Grid, Normalization, Realization};

const MAGIC: &[u8; 8] = b"RESGENDS";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Case {
    Categorical,
    Continuous,
}

impl std::str::FromStr for Case {
    type Err = GeoError;

    fn from_str(s: &str) -> Result<Self, GeoError> {
        match s {
            "categorical" => Ok(Case::Categorical),
            "continuous" => Ok(Case::Continuous),
            _ => Err(GeoError::Format(format!("unknown case '{s}' (categorical|continuous)"))),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DatasetParams {
    pub channels: ChannelParams,
    pub continuous: ContinuousParams,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetHeader {
    pub grid: Grid,
    pub case: Case,
    pub kind: FieldKind,
    pub count: usize,
    pub normalization: Normalization,
    pub seed: u64,
    pub num_classes: usize,
    pub labels: Vec<usize>,
    pub params: DatasetParams,
}

/// Log-permeability fields with class labels.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub header: DatasetHeader,
    values: Vec<f32>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.header.count
    }

    pub fn is_empty(&self) -> bool {
        self.header.count == 0
    }

    pub fn field(&self, k: usize) -> &[f32] {
        let n = self.header.grid.cells();
        &self.values[k * n..(k + 1) * n]
    }

    pub fn realization(&self, k: usize) -> Realization {
        Realization {
            grid: self.header.grid,
            values: self.field(k).iter().map(|&v| f64::from(v)).collect(),
            kind: self.header.kind,
        }
    }

    /// Field `k` mapped to [−1, 1].
    pub fn normalized(&self, k: usize) -> Vec<f32> {
        let norm = self.header.normalization;
        self.field(k).iter().map(|&v| norm.forward(f64::from(v)) as f32).collect()
    }

    /// Normalized levels of the three facies, for categorical data.
    pub fn facies_levels(&self) -> Option<[f64; 3]> {
        (self.header.case == Case::Categorical).then(|| {
            let n = self.header.normalization;
            [0, 1, 2].map(|c| n.forward(facies_logperm(c)))
        })
    }

    pub fn write(&self, path: &Path) -> Result<(), GeoError> {
        if let Some(dir) = path.parent() {
            if !dir.as_os_str().is_empty() {
                fs::create_dir_all(dir)?;
            }
        }
        let header = serde_json::to_vec(&self.header)?;
        let mut f = std::io::BufWriter::new(fs::File::create(path)?);
        f.write_all(MAGIC)?;
        f.write_all(&(header.len() as u32).to_le_bytes())?;
        f.write_all(&header)?;
        for v in &self.values {
            f.write_all(&v.to_le_bytes())?;
        }
        f.flush()?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self, GeoError> {
        let mut f = std::io::BufReader::new(fs::File::open(path)?);
        let mut magic = [0u8; 8];
        f.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(GeoError::Format(format!("{} is not a dataset file", path.display())));
        }
        let mut len = [0u8; 4];
        f.read_exact(&mut len)?;
        let mut header = vec![0u8; u32::from_le_bytes(len) as usize];
        f.read_exact(&mut header)?;
        let header: DatasetHeader = serde_json::from_slice(&header)?;
        let mut body = Vec::new();
        f.read_to_end(&mut body)?;
        let expected = header.count * header.grid.cells() * 4;
        if body.len() != expected || header.labels.len() != header.count {
            return Err(GeoError::Format(format!(
                "expected {expected} value bytes and {} labels, found {} bytes and {} labels",
                header.count,
                body.len(),
                header.labels.len()
            )));
        }
        let values = body
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        Ok(Self { header, values })
    }
}

/// Generates `count` fields; field `k` uses seed `seed + k`, so the result
/// does not depend on thread count.
pub fn generate_dataset(
    case: Case,
    grid: Grid,
    count: usize,
    seed: u64,
    params: &DatasetParams,
) -> Result<Dataset, GeoError> {
    grid.validate()?;
    let fields: Vec<(Realization, usize)> = match case {
        Case::Categorical => {
            params.channels.validate()?;
            (0..count as u64)
                .into_par_iter()
                .map(|k| {
                    let f = channel_field(grid, &params.channels, seed.wrapping_add(k))?;
                    Ok((f.logperm(), f.label))
                })
                .collect::<Result<_, GeoError>>()?
        }
        Case::Continuous => {
            let sampler = params.continuous.sampler(grid)?;
            (0..count as u64)
                .into_par_iter()
                .map(|k| continuous_field(&sampler, &params.continuous, seed.wrapping_add(k)))
                .collect()
        }
    };
    let (normalization, num_classes) = match case {
        Case::Categorical => (
            Normalization::new(facies_logperm(0), facies_logperm(2))?,
            ChannelParams::NUM_CLASSES,
        ),
        Case::Continuous => (
            if fields.is_empty() {
                Normalization::new(params.continuous.clip[0], params.continuous.clip[1])?
            } else {
                Normalization::fit(fields.iter().map(|(r, _)| r.values.as_slice()))?
            },
            params.continuous.streaks[1] + 1,
        ),
    };
    let labels = fields.iter().map(|(_, l)| *l).collect();
    let values = fields
        .iter()
        .flat_map(|(r, _)| r.values.iter().map(|&v| v as f32))
        .collect();
    Ok(Dataset {
        header: DatasetHeader {
            grid,
            case,
            kind: FieldKind::ContinuousLogperm,
            count,
            normalization,
            seed,
            num_classes,
            labels,
            params: params.clone(),
        },
        values,
    })
}
