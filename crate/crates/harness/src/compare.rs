//! Side-by-side comparison of runs that differ only in the generative model.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::HarnessError;
use crate::manifest::{RunManifest, MANIFEST_FILE};
use crate::pipeline::{read_summary, RunSummary};
use crate::plot::table_csv;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Better {
    Lower,
    Higher,
}

/// Column name, direction, and how to read it from a summary.
type Column = (&'static str, Better, fn(&RunSummary) -> Option<f64>);

pub const COLUMNS: [Column; 10] = [
    ("frd", Better::Lower, |s| Some(s.metrics.frd)),
    ("final_data_mismatch", Better::Lower, |s| Some(s.assimilation.final_dm)),
    ("final_rmse", Better::Lower, |s| Some(s.assimilation.final_rmse)),
    // Larger spread means less ensemble collapse.
    ("final_spread", Better::Higher, |s| Some(s.assimilation.final_spread)),
    ("balanced_accuracy", Better::Higher, |s| s.assimilation.final_ba),
    ("variogram_mse", Better::Lower, |s| Some(s.metrics.geostats.variogram_mse)),
    ("connectivity_mse", Better::Lower, |s| Some(s.metrics.geostats.connectivity_mse)),
    ("histogram_kl", Better::Lower, |s| Some(s.metrics.geostats.histogram_kl)),
    ("pca_correlation", Better::Higher, |s| Some(s.metrics.geostats.pca_correlation)),
    ("mds_mmd", Better::Lower, |s| Some(s.metrics.geostats.mds_mmd)),
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub run: PathBuf,
    pub kind: String,
    pub values: Vec<Option<f64>>,
    /// Differences from the first row.
    pub deltas: Vec<Option<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub columns: Vec<String>,
    pub rows: Vec<ComparisonRow>,
    /// Row index of the best value per column; `None` when no run has one.
    pub best: Vec<Option<usize>>,
}

fn flatten(prefix: &str, v: &Value, out: &mut Vec<(String, Value)>) {
    match v {
        Value::Object(map) => {
            for (k, x) in map {
                let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                flatten(&key, x, out);
            }
        }
        other => out.push((prefix.to_string(), other.clone())),
    }
}

/// Configuration paths, outside `model`, whose values differ.
pub fn config_differences(a: &RunManifest, b: &RunManifest) -> Result<Vec<String>, HarnessError> {
    let strip = |m: &RunManifest| -> Result<Vec<(String, Value)>, HarnessError> {
        let mut v = serde_json::to_value(&m.config)?;
        if let Value::Object(map) = &mut v {
            map.remove("model");
        }
        let mut out = Vec::new();
        flatten("", &v, &mut out);
        Ok(out)
    };
    let (fa, fb) = (strip(a)?, strip(b)?);
    let mut keys: Vec<&String> = fa.iter().chain(&fb).map(|(k, _)| k).collect();
    keys.sort();
    keys.dedup();
    let get = |f: &[(String, Value)], k: &str| f.iter().find(|(x, _)| x == k).map(|(_, v)| v.clone());
    Ok(keys.into_iter().filter(|k| get(&fa, k) != get(&fb, k)).cloned().collect())
}

/// Loads the manifest and summary of each run and tabulates them. Runs must
/// agree on every setting outside the model section.
pub fn compare_models(dirs: &[PathBuf]) -> Result<Comparison, HarnessError> {
    if dirs.is_empty() {
        return Err(HarnessError::Config("no runs to compare".into()));
    }
    let mut manifests = Vec::new();
    let mut summaries = Vec::new();
    for d in dirs {
        manifests.push(RunManifest::read(&d.join(MANIFEST_FILE))?);
        summaries.push(read_summary(d)?);
    }
    let mut diffs = Vec::new();
    for (d, m) in dirs.iter().zip(&manifests).skip(1) {
        for k in config_differences(&manifests[0], m)? {
            diffs.push(format!("{k} ({})", d.display()));
        }
    }
    if !diffs.is_empty() {
        return Err(HarnessError::Mismatch(diffs));
    }
    let values: Vec<Vec<Option<f64>>> = summaries.iter().map(|s| COLUMNS.iter().map(|c| (c.2)(s)).collect()).collect();
    let rows = dirs
        .iter()
        .zip(&summaries)
        .zip(&values)
        .map(|((d, s), v)| ComparisonRow {
            run: d.clone(),
            kind: s.kind.to_string(),
            values: v.clone(),
            deltas: v.iter().zip(&values[0]).map(|(a, b)| Some(a.as_ref()? - b.as_ref()?)).collect(),
        })
        .collect();
    let best = COLUMNS
        .iter()
        .enumerate()
        .map(|(c, col)| {
            let mut best: Option<(usize, f64)> = None;
            for (r, v) in values.iter().enumerate() {
                let Some(x) = v[c] else { continue };
                let wins = match best {
                    None => true,
                    Some((_, b)) => match col.1 {
                        Better::Lower => x < b,
                        Better::Higher => x > b,
                    },
                };
                if wins {
                    best = Some((r, x));
                }
            }
            best.map(|b| b.0)
        })
        .collect();
    Ok(Comparison { columns: COLUMNS.iter().map(|c| c.0.to_string()).collect(), rows, best })
}

fn cell(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl Comparison {
    pub fn to_csv(&self) -> String {
        let mut header = vec!["run".to_string(), "kind".to_string()];
        header.extend(self.columns.iter().cloned());
        header.extend(self.columns.iter().map(|c| format!("delta_{c}")));
        let rows: Vec<Vec<String>> = self
            .rows
            .iter()
            .map(|r| {
                let mut row = vec![r.run.display().to_string(), r.kind.clone()];
                row.extend(r.values.iter().map(|v| cell(*v)));
                row.extend(r.deltas.iter().map(|v| cell(*v)));
                row
            })
            .collect();
        let h: Vec<&str> = header.iter().map(String::as_str).collect();
        table_csv(&h, &rows)
    }

    pub fn to_markdown(&self) -> String {
        let mut s = String::from("| model |");
        for c in &self.columns {
            let _ = write!(s, " {c} |");
        }
        s.push_str("\n|---|");
        s.push_str(&"---|".repeat(self.columns.len()));
        s.push('\n');
        for (r, row) in self.rows.iter().enumerate() {
            let _ = write!(s, "| {} |", row.kind);
            for (c, v) in row.values.iter().enumerate() {
                let mark = if self.best[c] == Some(r) { "**" } else { "" };
                let text = v.map_or("n/a".to_string(), |x| format!("{x:.4}"));
                let _ = write!(s, " {mark}{text}{mark} |");
            }
            s.push('\n');
        }
        s.push_str("\nBest per column:\n\n");
        for (c, b) in self.columns.iter().zip(&self.best) {
            let who = b.map_or("n/a".to_string(), |r| self.rows[r].kind.clone());
            let _ = writeln!(s, "- {c}: {who}");
        }
        s
    }

    /// Writes `comparison.csv`, `comparison.md` and `comparison.json`.
    pub fn write(&self, dir: &Path) -> Result<(), HarnessError> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("comparison.csv"), self.to_csv())?;
        std::fs::write(dir.join("comparison.md"), self.to_markdown())?;
        std::fs::write(dir.join("comparison.json"), serde_json::to_string_pretty(self)? + "\n")?;
        Ok(())
    }
}
