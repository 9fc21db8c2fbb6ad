use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::ExperimentConfig;
use crate::error::HarnessError;

pub const MANIFEST_FILE: &str = "manifest.json";
const FORMAT: &str = "resgen-run/1";

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stage {
    GenData,
    TrainClassifier,
    Train,
    Assimilate,
    Metrics,
    Report,
}

impl Stage {
    pub const ALL: [Stage; 6] =
        [Stage::GenData, Stage::TrainClassifier, Stage::Train, Stage::Assimilate, Stage::Metrics, Stage::Report];

    pub fn name(self) -> &'static str {
        match self {
            Stage::GenData => "gen-data",
            Stage::TrainClassifier => "train-classifier",
            Stage::Train => "train",
            Stage::Assimilate => "assimilate",
            Stage::Metrics => "metrics",
            Stage::Report => "report",
        }
    }
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StageStatus {
    Running,
    Done,
    Failed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: Stage,
    pub status: StageStatus,
    pub wall_seconds: Option<f64>,
    /// SHA-256 of every output file, keyed by path relative to the run.
    pub checksums: BTreeMap<String, String>,
    /// Named scalar diagnostics, e.g. the largest mass-balance error.
    pub diagnostics: BTreeMap<String, f64>,
    pub error: Option<String>,
}

/// All seeds the stages draw from, resolved from the configuration.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Seeds {
    pub dataset: u64,
    pub classifier: u64,
    pub training: u64,
    pub prior: u64,
    pub truth: u64,
    pub noise: u64,
    pub update: u64,
    pub metrics: u64,
}

impl Seeds {
    pub fn from_config(cfg: &ExperimentConfig) -> Self {
        Self {
            dataset: cfg.dataset.seed,
            classifier: cfg.seed.wrapping_add(1),
            training: cfg.seed,
            prior: cfg.assimilation.prior_seed,
            truth: cfg.assimilation.truth_seed,
            noise: cfg.assimilation.noise_seed,
            update: cfg.assimilation.update_seed,
            metrics: cfg.seed.wrapping_add(2),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub format: String,
    pub code_version: String,
    pub config: ExperimentConfig,
    pub seeds: Seeds,
    pub stages: Vec<StageRecord>,
}

impl RunManifest {
    pub fn new(config: ExperimentConfig) -> Self {
        Self {
            format: FORMAT.into(),
            code_version: env!("CARGO_PKG_VERSION").into(),
            seeds: Seeds::from_config(&config),
            config,
            stages: Vec::new(),
        }
    }

    pub fn read(path: &Path) -> Result<Self, HarnessError> {
        let text = fs::read_to_string(path).map_err(|e| HarnessError::Missing {
            path: path.to_path_buf(),
            reason: format!("cannot read run manifest ({e})"),
        })?;
        let m: Self = serde_json::from_str(&text)
            .map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?;
        if m.format != FORMAT {
            return Err(HarnessError::Config(format!("{}: unsupported format {}", path.display(), m.format)));
        }
        m.config.validate()?;
        Ok(m)
    }

    pub fn write(&self, path: &Path) -> Result<(), HarnessError> {
        fs::write(path, serde_json::to_string_pretty(self)? + "\n")?;
        Ok(())
    }

    pub fn record(&self, stage: Stage) -> Option<&StageRecord> {
        self.stages.iter().find(|r| r.stage == stage)
    }

    fn set(&mut self, rec: StageRecord) {
        match self.stages.iter_mut().find(|r| r.stage == rec.stage) {
            Some(r) => *r = rec,
            None => {
                self.stages.push(rec);
                self.stages.sort_by_key(|r| r.stage);
            }
        }
    }
}

/// Lowercase hex SHA-256 of a file.
pub fn sha256_file(path: &Path) -> std::io::Result<String> {
    let bytes = fs::read(path)?;
    Ok(Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect())
}

/// What a stage produced.
#[derive(Debug, Default)]
pub struct StageOutput {
    /// Files or directories, relative to the run directory.
    pub files: Vec<PathBuf>,
    pub diagnostics: BTreeMap<String, f64>,
}

/// A run directory with its manifest.
#[derive(Debug)]
pub struct Run {
    pub dir: PathBuf,
    pub manifest: RunManifest,
    /// Where the generative model lives; `<dir>/model` by default.
    pub model_dir: PathBuf,
}

impl Run {
    /// Opens `dir`, creating it and its manifest when needed. An existing
    /// manifest with a different configuration is replaced and its stage
    /// records dropped.
    pub fn open(dir: &Path, config: ExperimentConfig) -> Result<Self, HarnessError> {
        config.validate()?;
        fs::create_dir_all(dir)?;
        let path = dir.join(MANIFEST_FILE);
        let manifest = match RunManifest::read(&path) {
            Ok(m) if m.config == config => m,
            _ => RunManifest::new(config),
        };
        manifest.write(&path)?;
        Ok(Self { dir: dir.to_path_buf(), manifest, model_dir: dir.join("model") })
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.manifest.config
    }

    pub fn seeds(&self) -> &Seeds {
        &self.manifest.seeds
    }

    pub fn path(&self, rel: impl AsRef<Path>) -> PathBuf {
        self.dir.join(rel)
    }

    fn save(&self) -> Result<(), HarnessError> {
        self.manifest.write(&self.dir.join(MANIFEST_FILE))
    }

    /// Runs one stage: records it as running, executes `body`, then stores
    /// checksums, timing and diagnostics, or the failure.
    pub fn stage<F>(&mut self, stage: Stage, body: F) -> Result<(), HarnessError>
    where
        F: FnOnce(&Run) -> Result<StageOutput, HarnessError>,
    {
        let mut rec = StageRecord {
            stage,
            status: StageStatus::Running,
            wall_seconds: None,
            checksums: BTreeMap::new(),
            diagnostics: BTreeMap::new(),
            error: None,
        };
        self.manifest.set(rec.clone());
        self.save()?;
        let start = Instant::now();
        let result = body(self).and_then(|out| {
            let checksums = self.checksums(&out.files)?;
            Ok((out, checksums))
        });
        rec.wall_seconds = Some(start.elapsed().as_secs_f64());
        let outcome = match result {
            Ok((out, checksums)) => {
                rec.status = StageStatus::Done;
                rec.checksums = checksums;
                rec.diagnostics = out.diagnostics;
                Ok(())
            }
            Err(e) => {
                rec.status = StageStatus::Failed;
                rec.error = Some(e.to_string());
                Err(HarnessError::Stage { stage: stage.name().into(), source: Box::new(e) })
            }
        };
        self.manifest.set(rec);
        self.save()?;
        outcome
    }

    fn checksums(&self, files: &[PathBuf]) -> Result<BTreeMap<String, String>, HarnessError> {
        let mut out = BTreeMap::new();
        let mut stack: Vec<PathBuf> = files.to_vec();
        while let Some(rel) = stack.pop() {
            let full = self.dir.join(&rel);
            if full.is_dir() {
                for entry in fs::read_dir(&full)? {
                    stack.push(rel.join(entry?.file_name()));
                }
            } else {
                let key = rel.to_string_lossy().replace('\\', "/");
                out.insert(key, sha256_file(&full)?);
            }
        }
        Ok(out)
    }
}
