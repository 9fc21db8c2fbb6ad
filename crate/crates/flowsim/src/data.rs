use std::io::Write;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::config::{ChannelKind, FlowConfig, Role};

/// One entry of the data vector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DataLabel {
    pub report: usize,
    pub time: f64,
    pub well: String,
    pub role: Role,
    pub channel: ChannelKind,
    pub std: f64,
}

/// Ordering of the data vector: report time, then well (producers before
/// injectors), then channel. `d`, `d_obs` and `C_D` all share it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DataLayout {
    pub labels: Vec<DataLabel>,
    pub report_times: Vec<f64>,
    pub wells: Vec<(String, Role)>,
    pub producer_channels: Vec<ChannelKind>,
    pub injector_channels: Vec<ChannelKind>,
}

impl DataLayout {
    pub fn new(config: &FlowConfig) -> Self {
        let report_times = config.schedule.report_times();
        let wells: Vec<(String, Role)> = config.data_wells().iter().map(|w| (w.name.clone(), w.role)).collect();
        let mut labels = Vec::new();
        for (report, &time) in report_times.iter().enumerate() {
            for (name, role) in &wells {
                let chans = match role {
                    Role::Producer => &config.channels.producer,
                    Role::Injector => &config.channels.injector,
                };
                for &channel in chans {
                    labels.push(DataLabel {
                        report,
                        time,
                        well: name.clone(),
                        role: *role,
                        channel,
                        std: config.noise.std_for(channel),
                    });
                }
            }
        }
        Self {
            labels,
            report_times,
            wells,
            producer_channels: config.channels.producer.clone(),
            injector_channels: config.channels.injector.clone(),
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn stds(&self) -> Vec<f64> {
        self.labels.iter().map(|l| l.std).collect()
    }

    /// Indices of one well/channel series across report times.
    pub fn series(&self, well: &str, channel: ChannelKind) -> Vec<usize> {
        self.labels
            .iter()
            .enumerate()
            .filter(|(_, l)| l.well == well && l.channel == channel)
            .map(|(k, _)| k)
            .collect()
    }

    /// Writes one row per entry with the ordering columns followed by one
    /// column per named vector.
    pub fn write_csv(&self, path: &Path, columns: &[(&str, &[f64])]) -> std::io::Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        write!(out, "index,report,time_days,well,role,channel,std")?;
        for (name, _) in columns {
            write!(out, ",{name}")?;
        }
        writeln!(out)?;
        for (k, l) in self.labels.iter().enumerate() {
            let role = match l.role {
                Role::Producer => "producer",
                Role::Injector => "injector",
            };
            write!(out, "{k},{},{},{},{role},{},{}", l.report, l.time, l.well, l.channel.name(), l.std)?;
            for (_, v) in columns {
                write!(out, ",{}", v[k])?;
            }
            writeln!(out)?;
        }
        out.flush()
    }
}

/// Noisy observation and the diagonal of its error covariance.
#[derive(Clone, Debug, PartialEq)]
pub struct Observation {
    pub d_obs: Vec<f64>,
    pub cd_diag: Vec<f64>,
}

/// `d_obs = d_true + ε`, `ε ~ N(0, diag(std²))`. Zero stds give zero
/// variances, which downstream consumers must reject.
pub fn observe(d_true: &[f64], stds: &[f64], seed: u64) -> Observation {
    assert_eq!(d_true.len(), stds.len(), "data and noise lengths differ");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d_obs = d_true
        .iter()
        .zip(stds)
        .map(|(d, s)| {
            let e: f64 = StandardNormal.sample(&mut rng);
            d + s * e
        })
        .collect();
    Observation { d_obs, cd_diag: stds.iter().map(|s| s * s).collect() }
}
