//! The stages of an experiment, each reading its inputs from the run
//! directory and writing its outputs back into it.

use std::cell::Cell;
use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use resgen_esmda::{
    run_latent_assimilation, write_ensemble, Assimilation, Ensemble, EsmdaError, ForwardModel, Identity,
    Parameterization, Space,
};
use resgen_flowsim::{observe, simulate, simulate_ensemble, ChannelKind, DataLayout, FlowConfig};
use resgen_genmodels::{sample_latent, sample_prior, split_validation, train, GenerativeModel, ModelKind, Provenance};
use resgen_geogen::{facies_logperm, generate_dataset, Case, Dataset, Normalization};
use resgen_metrics::{
    balanced_accuracy, ensemble_mean, ensemble_std, frechet_distance, geostats_report, mean_data_mismatch,
    nearest_level, rmse_ensemble, spread, train_reservoir_classifier, FeatureModel, FieldSet, GeoStatsReport,
    MetricRecord,
};
use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, ParamMode};
use crate::error::HarnessError;
use crate::manifest::{sha256_file, Run, Stage, StageOutput};
use crate::plot::{field_csv, heatmap, line_chart, table_csv, write_figure, Series};

pub const DATASET_FILE: &str = "data/train.ds";
pub const CLASSIFIER_DIR: &str = "classifier";
pub const MODEL_DIR: &str = "model";
pub const TRAINING_DIR: &str = "training";
pub const ASSIMILATION_DIR: &str = "assimilation";
pub const METRICS_DIR: &str = "metrics";
pub const SUMMARY_FILE: &str = "summary.json";
pub const REPORT_FILE: &str = "report.md";

const GRAY: &str = "#888888";
const BLUE: &str = "#1f5fbf";
const RED: &str = "#d62728";
const GREEN: &str = "#2ca02c";
const ORANGE: &str = "#ff7f0e";

fn missing(path: PathBuf, reason: &str) -> HarnessError {
    HarnessError::Missing { path, reason: reason.into() }
}

pub fn load_dataset(run: &Run) -> Result<Dataset, HarnessError> {
    let path = run.path(DATASET_FILE);
    if !path.is_file() {
        return Err(missing(path, "training data not found; run `resgen gen-data` first"));
    }
    Ok(Dataset::read(&path)?)
}

pub fn load_classifier(run: &Run) -> Result<FeatureModel, HarnessError> {
    let dir = run.path(CLASSIFIER_DIR);
    if !dir.is_dir() {
        return Err(missing(dir, "classifier directory not found; run `resgen train-classifier` first"));
    }
    Ok(FeatureModel::load(&dir)?)
}

pub fn load_model(dir: &Path) -> Result<GenerativeModel, HarnessError> {
    if !dir.join("model.json").is_file() {
        return Err(missing(
            dir.to_path_buf(),
            "model directory not found or incomplete; run `resgen train` first or pass --model",
        ));
    }
    Ok(GenerativeModel::load(dir)?)
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path, hint: &str) -> Result<T, HarnessError> {
    let text = fs::read_to_string(path).map_err(|e| missing(path.to_path_buf(), &format!("{e}; {hint}")))?;
    Ok(serde_json::from_str(&text)?)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), HarnessError> {
    fs::write(path, serde_json::to_string_pretty(value)? + "\n")?;
    Ok(())
}

fn normalized_fields(ds: &Dataset) -> Vec<Vec<f32>> {
    (0..ds.len()).map(|k| ds.normalized(k)).collect()
}

fn to_f64(fields: &[Vec<f32>]) -> Vec<Vec<f64>> {
    fields.iter().map(|f| f.iter().map(|&v| f64::from(v)).collect()).collect()
}

/// Runs one stage and records it in the manifest.
pub fn run_stage(run: &mut Run, stage: Stage) -> Result<(), HarnessError> {
    run.stage(stage, |r| match stage {
        Stage::GenData => gen_data(r),
        Stage::TrainClassifier => train_classifier(r),
        Stage::Train => train_model(r),
        Stage::Assimilate => assimilate(r),
        Stage::Metrics => metrics(r),
        Stage::Report => report(r),
    })
}

/// Every stage in order.
pub fn run_experiment(config: ExperimentConfig, dir: &Path) -> Result<Run, HarnessError> {
    let mut run = Run::open(dir, config)?;
    for stage in Stage::ALL {
        run_stage(&mut run, stage)?;
    }
    Ok(run)
}

fn field_figure(dir: &Path, stem: &str, title: &str, values: &[f64], nx: usize, ny: usize, range: (f64, f64)) -> std::io::Result<()> {
    write_figure(dir, stem, &heatmap(title, values, nx, ny, range.0, range.1), &field_csv(values, nx))
}

/// Line chart of per-epoch or per-iteration columns with a matching CSV.
fn curve_figure(dir: &Path, stem: &str, title: &str, x_name: &str, x: &[f64], cols: &[(&str, &'static str, Vec<f64>)]) -> std::io::Result<()> {
    let series: Vec<Series> = cols.iter().map(|(n, c, y)| Series::line(*n, c, x.to_vec(), y.clone())).collect();
    let mut header = vec![x_name];
    header.extend(cols.iter().map(|c| c.0));
    let rows: Vec<Vec<String>> = x
        .iter()
        .enumerate()
        .map(|(k, xv)| {
            let mut r = vec![xv.to_string()];
            r.extend(cols.iter().map(|c| c.2[k].to_string()));
            r
        })
        .collect();
    write_figure(dir, stem, &line_chart(title, x_name, "", &series), &table_csv(&header, &rows))
}

fn gen_data(run: &Run) -> Result<StageOutput, HarnessError> {
    let cfg = run.config();
    let ds = generate_dataset(cfg.case, cfg.grid, cfg.dataset.count, run.seeds().dataset, &cfg.dataset.params)?;
    let data_dir = run.path("data");
    fs::create_dir_all(&data_dir)?;
    ds.write(&run.path(DATASET_FILE))?;
    let n = ds.header.normalization;
    for k in 0..ds.len().min(2) {
        let r = ds.realization(k);
        field_figure(&data_dir, &format!("sample_{}", k + 1), &format!("Training sample {}", k + 1), &r.values, cfg.grid.nx, cfg.grid.ny, (n.min, n.max))?;
    }
    let mut out = StageOutput { files: vec![PathBuf::from("data")], ..Default::default() };
    out.diagnostics.insert("count".into(), ds.len() as f64);
    out.diagnostics.insert("num_classes".into(), ds.header.num_classes as f64);
    Ok(out)
}

fn train_classifier(run: &Run) -> Result<StageOutput, HarnessError> {
    let cfg = run.config();
    let ds = load_dataset(run)?;
    let fields = normalized_fields(&ds);
    let (model, report) = train_reservoir_classifier(
        &fields,
        &ds.header.labels,
        [cfg.grid.ny, cfg.grid.nx],
        ds.header.num_classes,
        &cfg.classifier,
        run.seeds().classifier,
    )?;
    let dir = run.path(CLASSIFIER_DIR);
    fs::create_dir_all(&dir)?;
    model.save(&dir)?;
    write_json(&dir.join("report.json"), &report)?;
    let epochs: Vec<f64> = (1..=report.train_loss.len()).map(|e| e as f64).collect();
    curve_figure(&dir, "loss", "Classifier training loss", "epoch", &epochs, &[("cross_entropy", BLUE, report.train_loss.clone())])?;
    let mut out = StageOutput { files: vec![PathBuf::from(CLASSIFIER_DIR)], ..Default::default() };
    out.diagnostics.insert("heldout_accuracy".into(), report.heldout_accuracy);
    out.diagnostics.insert("majority_baseline".into(), report.majority_baseline);
    Ok(out)
}

fn train_model(run: &Run) -> Result<StageOutput, HarnessError> {
    let cfg = run.config();
    let ds = load_dataset(run)?;
    let critic = load_classifier(run)?;
    let fields = normalized_fields(&ds);
    let seed = run.seeds().training;
    let mut model = GenerativeModel::new(cfg.model.clone(), [1, cfg.grid.ny, cfg.grid.nx], seed)?;
    let n = ds.header.normalization;
    model.provenance = Provenance {
        normalization: Some([n.min, n.max]),
        dataset_fingerprint: Some(sha256_file(&run.path(DATASET_FILE))?),
    };
    let trace = train(&mut model, &fields, Some(&critic), seed)?;
    model.save(&run.path(MODEL_DIR))?;

    let dir = run.path(TRAINING_DIR);
    fs::create_dir_all(&dir)?;
    fs::write(dir.join("history.csv"), trace.to_csv())?;
    write_json(&dir.join("trace.json"), &trace)?;
    let r = &trace.records;
    let epochs: Vec<f64> = r.iter().map(|e| e.epoch as f64).collect();
    let opt = |v: Option<f64>| v.unwrap_or(f64::NAN);
    if model.kind().has_encoder() {
        curve_figure(&dir, "reconstruction", "Reconstruction loss", "epoch", &epochs, &[
            ("train", BLUE, r.iter().map(|e| e.recon).collect()),
            ("validation_mse", ORANGE, r.iter().map(|e| opt(e.val_mse)).collect()),
        ])?;
        curve_figure(&dir, "kl", "KL divergence", "epoch", &epochs, &[("kl", GREEN, r.iter().map(|e| e.kl).collect())])?;
        curve_figure(&dir, "total", "Total loss", "epoch", &epochs, &[
            ("train", BLUE, r.iter().map(|e| e.total).collect()),
            ("validation", ORANGE, r.iter().map(|e| opt(e.val_loss)).collect()),
        ])?;
    }
    if model.kind().has_discriminator() {
        curve_figure(&dir, "adversarial", "Adversarial losses", "epoch", &epochs, &[
            ("generator", BLUE, r.iter().map(|e| e.generator).collect()),
            ("discriminator", RED, r.iter().map(|e| e.discriminator).collect()),
        ])?;
    }
    if model.kind() == ModelKind::Dcgan {
        curve_figure(&dir, "frd", "Validation FRD", "epoch", &epochs, &[("frd", BLUE, r.iter().map(|e| opt(e.frd)).collect())])?;
    }

    let mut out = StageOutput { files: vec![PathBuf::from(MODEL_DIR), PathBuf::from(TRAINING_DIR)], ..Default::default() };
    out.diagnostics.insert("epochs".into(), r.len() as f64);
    if let Some(b) = trace.best_epoch {
        out.diagnostics.insert("best_epoch".into(), b as f64);
    }
    if let Some(v) = trace.final_val_mse {
        out.diagnostics.insert("final_val_mse".into(), v);
    }
    Ok(out)
}

/// Decodes latent vectors into log-permeability.
pub struct LatentParam {
    pub model: GenerativeModel,
    pub normalization: Normalization,
}

impl Parameterization for LatentParam {
    fn dim(&self) -> usize {
        self.model.latent_dim()
    }

    fn decode(&self, members: &[Vec<f64>]) -> Result<Vec<Vec<f64>>, EsmdaError> {
        let fields = self.model.decode(members).map_err(|e| EsmdaError::Parameterization(e.to_string()))?;
        Ok(fields
            .iter()
            .map(|f| f.iter().map(|&u| self.normalization.inverse(f64::from(u))).collect())
            .collect())
    }
}

/// The flow simulator as the forward operator. Tracks the largest
/// mass-balance error over every call.
pub struct SimForward<'a> {
    pub config: &'a FlowConfig,
    pub max_balance_error: Cell<f64>,
}

impl<'a> SimForward<'a> {
    pub fn new(config: &'a FlowConfig) -> Self {
        Self { config, max_balance_error: Cell::new(0.0) }
    }
}

impl ForwardModel for SimForward<'_> {
    fn forward(&self, models: &[Vec<f64>]) -> Result<Vec<Vec<f64>>, EsmdaError> {
        let results = simulate_ensemble(self.config, models).map_err(|e| match e {
            resgen_flowsim::FlowError::Member { member, source } => EsmdaError::Forward { member, message: source.to_string() },
            other => EsmdaError::Forward { member: 0, message: other.to_string() },
        })?;
        let worst = results.iter().map(|r| r.diagnostics.max_balance_error).fold(self.max_balance_error.get(), f64::max);
        self.max_balance_error.set(worst);
        Ok(results.into_iter().map(|r| r.data).collect())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AssimilationSummary {
    pub param: ParamMode,
    pub n_d: usize,
    pub n_e: usize,
    pub n_a: usize,
    pub records: Vec<MetricRecord>,
    pub prior_dm: f64,
    pub final_dm: f64,
    pub prior_spread: f64,
    pub final_spread: f64,
    pub prior_rmse: f64,
    pub final_rmse: f64,
    pub prior_ba: Option<f64>,
    pub final_ba: Option<f64>,
    pub max_balance_error: f64,
}

/// Per-iteration records; RMSE, spread and balanced accuracy are computed
/// on normalized fields.
pub fn assimilation_records(
    result: &Assimilation,
    truth: &[f64],
    norm: &Normalization,
    levels: Option<[f64; 3]>,
    d_obs: &[f64],
    cd_diag: &[f64],
) -> Result<Vec<MetricRecord>, HarnessError> {
    let fwd = |v: &[f64]| -> Vec<f64> { v.iter().map(|&x| norm.forward(x)).collect() };
    let truth_n = fwd(truth);
    let truth_codes = levels.map(|l| nearest_level(&truth_n, &l));
    let mut records = Vec::with_capacity(result.snapshots.len());
    for snap in &result.snapshots {
        let models: Vec<Vec<f64>> = snap.models.iter().map(|m| fwd(m)).collect();
        let (_, dm) = mean_data_mismatch(&snap.predictions, d_obs, cd_diag)?;
        let rmse = rmse_ensemble(&models, &truth_n)?;
        let rmse_mean = rmse.iter().sum::<f64>() / rmse.len() as f64;
        let balanced = match (levels, &truth_codes) {
            (Some(l), Some(codes)) => {
                let mut s = 0.0;
                for m in &models {
                    s += balanced_accuracy(&nearest_level(m, &l), codes, l.len())?.value;
                }
                Some(s / models.len() as f64)
            }
            _ => None,
        };
        records.push(MetricRecord {
            iteration: snap.iteration,
            mean_data_mismatch: dm,
            rmse,
            rmse_mean,
            spread: spread(&models)?,
            balanced_accuracy: balanced,
            frd: None,
        });
    }
    Ok(records)
}

fn opt_str(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn records_csv(records: &[MetricRecord]) -> String {
    let rows: Vec<Vec<String>> = records
        .iter()
        .map(|r| {
            let lo = r.rmse.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = r.rmse.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            vec![
                r.iteration.to_string(),
                r.mean_data_mismatch.to_string(),
                r.rmse_mean.to_string(),
                lo.to_string(),
                hi.to_string(),
                r.spread.to_string(),
                opt_str(r.balanced_accuracy),
            ]
        })
        .collect();
    table_csv(&["iteration", "mean_data_mismatch", "rmse_mean", "rmse_min", "rmse_max", "spread", "balanced_accuracy"], &rows)
}

fn assimilate(run: &Run) -> Result<StageOutput, HarnessError> {
    let cfg = run.config();
    let seeds = run.seeds();
    let (nx, ny) = (cfg.grid.nx, cfg.grid.ny);
    let flow = cfg.flow_config();
    let layout = DataLayout::new(&flow);
    let mda = &cfg.assimilation.mda;
    let model = match cfg.assimilation.param {
        ParamMode::Latent => Some(load_model(&run.model_dir)?),
        ParamMode::Identity => None,
    };
    let norm = match model.as_ref().and_then(|m| m.provenance.normalization) {
        Some([lo, hi]) => Normalization::new(lo, hi)?,
        None => load_dataset(run)?.header.normalization,
    };

    let truth = generate_dataset(cfg.case, cfg.grid, 1, seeds.truth, &cfg.dataset.params)?.realization(0).values;
    let truth_sim = simulate(&flow, &truth)?;
    let obs = observe(&truth_sim.data, &layout.stds(), seeds.noise);
    let prior_ds = generate_dataset(cfg.case, cfg.grid, mda.n_e, seeds.prior, &cfg.dataset.params)?;

    let (param, members, space): (Box<dyn Parameterization>, _, _) = match model {
        Some(model) => {
            if model.input_shape != [1, ny, nx] {
                return Err(HarnessError::Config(format!(
                    "model at {} expects fields of shape {:?}, the grid is {ny}x{nx}",
                    run.model_dir.display(),
                    model.input_shape
                )));
            }
            let z = if model.kind().has_encoder() {
                let fields: Vec<Vec<f32>> = (0..prior_ds.len())
                    .map(|k| prior_ds.field(k).iter().map(|&v| norm.forward(f64::from(v)) as f32).collect())
                    .collect();
                model.encode(&fields)?.mu
            } else {
                sample_prior(mda.n_e, model.latent_dim(), seeds.prior)
            };
            (Box::new(LatentParam { model, normalization: norm }), z, Space::Latent)
        }
        None => {
            let m: Vec<Vec<f64>> = (0..prior_ds.len()).map(|k| prior_ds.realization(k).values).collect();
            (Box::new(Identity { dim: nx * ny }), m, Space::Model)
        }
    };
    let forward = SimForward::new(&flow);
    forward.max_balance_error.set(truth_sim.diagnostics.max_balance_error);
    let result = run_latent_assimilation(
        param.as_ref(),
        Ensemble::new(members, space, 0)?,
        &forward,
        &obs.d_obs,
        &obs.cd_diag,
        mda,
        seeds.update,
    )?;
    let levels = match cfg.case {
        Case::Categorical => Some([0, 1, 2].map(|c| norm.forward(facies_logperm(c)))),
        Case::Continuous => None,
    };
    let records = assimilation_records(&result, &truth, &norm, levels, &obs.d_obs, &obs.cd_diag)?;

    let dir = run.path(ASSIMILATION_DIR);
    fs::create_dir_all(&dir)?;
    let prior = result.prior();
    let post = result.posterior();
    write_ensemble(&prior.params, &dir.join("ensembles"), "prior")?;
    write_ensemble(&post.params, &dir.join("ensembles"), "posterior")?;
    fs::write(dir.join("metrics.csv"), records_csv(&records))?;

    let prior_pred_mean = ensemble_mean(&prior.predictions)?;
    let post_pred_mean = ensemble_mean(&post.predictions)?;
    layout.write_csv(&dir.join("data.csv"), &[
        ("true", &truth_sim.data),
        ("observed", &obs.d_obs),
        ("prior_mean", &prior_pred_mean),
        ("posterior_mean", &post_pred_mean),
    ])?;

    let its: Vec<f64> = records.iter().map(|r| r.iteration as f64).collect();
    let plots = dir.join("plots");
    curve_figure(&plots, "data_mismatch", "Mean data mismatch", "iteration", &its, &[("mean_data_mismatch", BLUE, records.iter().map(|r| r.mean_data_mismatch).collect())])?;
    curve_figure(&plots, "rmse", "RMSE to the reference", "iteration", &its, &[("rmse_mean", BLUE, records.iter().map(|r| r.rmse_mean).collect())])?;
    curve_figure(&plots, "spread", "Ensemble spread", "iteration", &its, &[("spread", BLUE, records.iter().map(|r| r.spread).collect())])?;
    if cfg.case == Case::Categorical {
        curve_figure(&plots, "balanced_accuracy", "Balanced accuracy", "iteration", &its, &[(
            "balanced_accuracy",
            BLUE,
            records.iter().map(|r| r.balanced_accuracy.unwrap_or(f64::NAN)).collect(),
        )])?;
    }

    let fields_dir = dir.join("fields");
    let range = (norm.min, norm.max);
    let prior_std = ensemble_std(&prior.models)?;
    let post_std = ensemble_std(&post.models)?;
    let std_max = prior_std.iter().chain(&post_std).copied().fold(0.0, f64::max);
    field_figure(&fields_dir, "truth", "Reference log-permeability", &truth, nx, ny, range)?;
    field_figure(&fields_dir, "prior_mean", "Prior mean", &ensemble_mean(&prior.models)?, nx, ny, range)?;
    field_figure(&fields_dir, "posterior_mean", "Posterior mean", &ensemble_mean(&post.models)?, nx, ny, range)?;
    field_figure(&fields_dir, "prior_std", "Prior standard deviation", &prior_std, nx, ny, (0.0, std_max))?;
    field_figure(&fields_dir, "posterior_std", "Posterior standard deviation", &post_std, nx, ny, (0.0, std_max))?;
    field_figure(&fields_dir, "member1_prior", "Member 1 before assimilation", &prior.models[0], nx, ny, range)?;
    field_figure(&fields_dir, "member1_posterior", "Member 1 after assimilation", &post.models[0], nx, ny, range)?;

    well_figures(&dir.join("wells"), &flow, &layout, &result, &obs.d_obs, &truth_sim.data)?;

    let first = &records[0];
    let last = records.last().expect("prior record");
    let summary = AssimilationSummary {
        param: cfg.assimilation.param,
        n_d: layout.len(),
        n_e: mda.n_e,
        n_a: mda.n_a,
        prior_dm: first.mean_data_mismatch,
        final_dm: last.mean_data_mismatch,
        prior_spread: first.spread,
        final_spread: last.spread,
        prior_rmse: first.rmse_mean,
        final_rmse: last.rmse_mean,
        prior_ba: first.balanced_accuracy,
        final_ba: last.balanced_accuracy,
        max_balance_error: forward.max_balance_error.get(),
        records: records.clone(),
    };
    write_json(&dir.join(SUMMARY_FILE), &summary)?;

    let mut out = StageOutput { files: vec![PathBuf::from(ASSIMILATION_DIR)], ..Default::default() };
    out.diagnostics.insert("n_d".into(), layout.len() as f64);
    out.diagnostics.insert("prior_dm".into(), summary.prior_dm);
    out.diagnostics.insert("final_dm".into(), summary.final_dm);
    out.diagnostics.insert("max_balance_error".into(), summary.max_balance_error);
    Ok(out)
}

/// Producer rate series: prior members gray, posterior members blue,
/// observations red.
fn well_figures(
    dir: &Path,
    flow: &FlowConfig,
    layout: &DataLayout,
    result: &Assimilation,
    d_obs: &[f64],
    d_true: &[f64],
) -> Result<(), HarnessError> {
    let prior = &result.prior().predictions;
    let post = &result.posterior().predictions;
    let rates = [ChannelKind::OilRate, ChannelKind::WaterRate, ChannelKind::LiquidRate];
    for well in flow.producers() {
        for &ch in flow.channels.producer.iter().filter(|c| rates.contains(c)) {
            let idx = layout.series(&well.name, ch);
            if idx.is_empty() {
                continue;
            }
            let t: Vec<f64> = idx.iter().map(|&k| layout.labels[k].time).collect();
            let pick = |d: &[f64]| -> Vec<f64> { idx.iter().map(|&k| d[k]).collect() };
            let mut series = Vec::new();
            for p in prior {
                series.push(Series::line("prior", GRAY, t.clone(), pick(p)).faint(1.0, 0.35));
            }
            for p in post {
                series.push(Series::line("posterior", BLUE, t.clone(), pick(p)).faint(1.0, 0.35));
            }
            series.push(Series::points("observed", RED, t.clone(), pick(d_obs)));
            let title = format!("{} {}", well.name, ch.name());
            let svg = line_chart(&title, "time (days)", "rate (m3/day)", &series);

            let mut header: Vec<String> = vec!["time_days".into(), "observed".into(), "true".into()];
            header.extend((1..=prior.len()).map(|k| format!("prior_{k}")));
            header.extend((1..=post.len()).map(|k| format!("posterior_{k}")));
            let rows: Vec<Vec<String>> = idx
                .iter()
                .enumerate()
                .map(|(r, &k)| {
                    let mut row = vec![t[r].to_string(), d_obs[k].to_string(), d_true[k].to_string()];
                    row.extend(prior.iter().chain(post).map(|p| p[k].to_string()));
                    row
                })
                .collect();
            let header_ref: Vec<&str> = header.iter().map(String::as_str).collect();
            write_figure(dir, &format!("{}_{}", well.name, ch.name()), &svg, &table_csv(&header_ref, &rows))?;
        }
    }
    Ok(())
}

/// Per-coordinate moments of sampled latent codes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatentStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub max_abs_mean: f64,
    pub min_std: f64,
    pub max_std: f64,
}

impl LatentStats {
    pub fn from_samples(z: &[Vec<f64>]) -> Self {
        let n = z.len() as f64;
        let dim = z.first().map_or(0, Vec::len);
        let mean: Vec<f64> = (0..dim).map(|j| z.iter().map(|r| r[j]).sum::<f64>() / n).collect();
        let std: Vec<f64> = (0..dim)
            .map(|j| (z.iter().map(|r| (r[j] - mean[j]).powi(2)).sum::<f64>() / (n - 1.0)).sqrt())
            .collect();
        Self {
            max_abs_mean: mean.iter().map(|m| m.abs()).fold(0.0, f64::max),
            min_std: std.iter().copied().fold(f64::INFINITY, f64::min),
            max_std: std.iter().copied().fold(0.0, f64::max),
            mean,
            std,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsSummary {
    pub samples: usize,
    /// FRD between generated and training fields.
    pub frd: f64,
    /// FRD between uniform noise fields and training fields.
    pub frd_noise: f64,
    pub geostats: GeoStatsReport,
    /// Encoded validation and held-out fields, sampled from their posteriors.
    pub latent: Option<LatentStats>,
}

/// Fields of i.i.d. uniform noise on [−1, 1].
pub fn noise_fields(count: usize, len: usize, seed: u64) -> Vec<Vec<f32>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|_| (0..len).map(|_| rng.random_range(-1.0f32..1.0)).collect()).collect()
}

fn metrics(run: &Run) -> Result<StageOutput, HarnessError> {
    let cfg = run.config();
    let seeds = run.seeds();
    let (nx, ny) = (cfg.grid.nx, cfg.grid.ny);
    let ds = load_dataset(run)?;
    let critic = load_classifier(run)?;
    let model = load_model(&run.model_dir)?;
    let n = cfg.metrics.samples.min(ds.len());
    let reference: Vec<Vec<f32>> = (0..n).map(|k| ds.normalized(k)).collect();
    let generated = model.generate(n, seeds.metrics)?;
    let noise = noise_fields(n, nx * ny, seeds.metrics.wrapping_add(1));
    let ref_features = critic.features(&reference)?;
    let frd = frechet_distance(&critic.features(&generated)?, &ref_features)?;
    let frd_noise = frechet_distance(&critic.features(&noise)?, &ref_features)?;
    let (ref64, gen64) = (to_f64(&reference), to_f64(&generated));
    let geostats = geostats_report(
        &FieldSet::new(&ref64, nx, ny)?,
        &FieldSet::new(&gen64, nx, ny)?,
        cfg.metrics.connectivity_threshold,
    )?;

    let dir = run.path(METRICS_DIR);
    fs::create_dir_all(&dir)?;
    let latent = if model.kind().has_encoder() {
        let (_, val) = split_validation(ds.len(), cfg.model.train.validation_fraction, seeds.training);
        let mut fields: Vec<Vec<f32>> = val.iter().map(|&k| ds.normalized(k)).collect();
        // Training used seeds dataset..dataset + count, so these are disjoint.
        if cfg.metrics.latent_fields > 0 {
            let seed = seeds.dataset.wrapping_add(ds.len() as u64);
            let extra = generate_dataset(cfg.case, cfg.grid, cfg.metrics.latent_fields, seed, &cfg.dataset.params)?;
            let norm = ds.header.normalization;
            fields.extend(
                (0..extra.len()).map(|k| extra.field(k).iter().map(|&v| norm.forward(f64::from(v)) as f32).collect()),
            );
        }
        let post = model.encode(&fields)?;
        let z = sample_latent(&post.mu, &post.logvar, seeds.metrics)?;
        let stats = LatentStats::from_samples(&z);
        let coords: Vec<f64> = (0..stats.mean.len()).map(|j| j as f64).collect();
        curve_figure(&dir, "latent", "Encoded held-out latents", "coordinate", &coords, &[
            ("mean", BLUE, stats.mean.clone()),
            ("std", ORANGE, stats.std.clone()),
        ])?;
        Some(stats)
    } else {
        None
    };
    for (k, v) in gen64.iter().take(generated.len().min(4)).enumerate() {
        field_figure(&dir, &format!("generated_{}", k + 1), &format!("Generated sample {}", k + 1), v, nx, ny, (-1.0, 1.0))?;
    }
    let g = &geostats;
    let rows = vec![
        vec!["frd".into(), frd.to_string()],
        vec!["frd_noise".into(), frd_noise.to_string()],
        vec!["variogram_mse".into(), g.variogram_mse.to_string()],
        vec!["connectivity_mse".into(), g.connectivity_mse.to_string()],
        vec!["histogram_kl".into(), g.histogram_kl.to_string()],
        vec!["pca_correlation".into(), g.pca_correlation.to_string()],
        vec!["mds_mmd".into(), g.mds_mmd.to_string()],
    ];
    fs::write(dir.join("metrics.csv"), table_csv(&["metric", "value"], &rows))?;
    let summary = MetricsSummary { samples: n, frd, frd_noise, geostats, latent };
    write_json(&dir.join(SUMMARY_FILE), &summary)?;

    let mut out = StageOutput { files: vec![PathBuf::from(METRICS_DIR)], ..Default::default() };
    out.diagnostics.insert("frd".into(), frd);
    out.diagnostics.insert("frd_noise".into(), frd_noise);
    Ok(out)
}

/// The headline numbers of one run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub kind: ModelKind,
    pub case: Case,
    pub epochs: usize,
    pub final_val_mse: Option<f64>,
    pub metrics: MetricsSummary,
    pub assimilation: AssimilationSummary,
}

pub fn read_summary(dir: &Path) -> Result<RunSummary, HarnessError> {
    read_json(&dir.join(SUMMARY_FILE), "run `resgen report` first")
}

fn report(run: &Run) -> Result<StageOutput, HarnessError> {
    let cfg = run.config();
    let metrics: MetricsSummary = read_json(&run.path(METRICS_DIR).join(SUMMARY_FILE), "run `resgen metrics` first")?;
    let assimilation: AssimilationSummary =
        read_json(&run.path(ASSIMILATION_DIR).join(SUMMARY_FILE), "run `resgen assimilate` first")?;
    let train = run.manifest.record(Stage::Train).map(|r| r.diagnostics.clone()).unwrap_or_default();
    let summary = RunSummary {
        kind: cfg.model.kind,
        case: cfg.case,
        epochs: train.get("epochs").copied().unwrap_or(0.0) as usize,
        final_val_mse: train.get("final_val_mse").copied(),
        metrics,
        assimilation,
    };
    write_json(&run.path(SUMMARY_FILE), &summary)?;
    fs::write(run.path(REPORT_FILE), render_report(cfg, &summary, &run.dir))?;
    Ok(StageOutput { files: vec![PathBuf::from(SUMMARY_FILE), PathBuf::from(REPORT_FILE)], diagnostics: BTreeMap::new() })
}

fn fmt(v: f64) -> String {
    if v != 0.0 && (v.abs() >= 1e4 || v.abs() < 1e-3) {
        format!("{v:.3e}")
    } else {
        format!("{v:.4}")
    }
}

fn render_report(cfg: &ExperimentConfig, s: &RunSummary, dir: &Path) -> String {
    use std::fmt::Write as _;
    let a = &s.assimilation;
    let m = &s.metrics;
    let mut r = String::new();
    let _ = writeln!(r, "# Run report: {} on the {} case\n", s.kind, case_name(s.case));
    let _ = writeln!(
        r,
        "Grid {}x{}, {} training fields, latent dimension {}, N_e = {}, N_a = {}, N_d = {}, parameterization {:?}.\n",
        cfg.grid.nx, cfg.grid.ny, cfg.dataset.count, cfg.model.latent_dim, a.n_e, a.n_a, a.n_d, a.param
    );
    let _ = writeln!(r, "## Training\n");
    let _ = writeln!(r, "{} epochs; final validation MSE {}.\n", s.epochs, s.final_val_mse.map_or("n/a".into(), fmt));
    for stem in ["reconstruction", "kl", "total", "adversarial", "frd"] {
        if dir.join(TRAINING_DIR).join(format!("{stem}.svg")).is_file() {
            let _ = writeln!(r, "![{stem}]({TRAINING_DIR}/{stem}.svg)");
        }
    }
    let _ = writeln!(r, "\n## Generative quality\n");
    let _ = writeln!(r, "| metric | value |\n|---|---|");
    let g = &m.geostats;
    for (k, v) in [
        ("FRD (generated vs training)", m.frd),
        ("FRD (noise vs training)", m.frd_noise),
        ("Variogram MSE", g.variogram_mse),
        ("Connectivity MSE", g.connectivity_mse),
        ("Histogram KL", g.histogram_kl),
        ("PCA correlation", g.pca_correlation),
        ("MDS MMD", g.mds_mmd),
    ] {
        let _ = writeln!(r, "| {k} | {} |", fmt(v));
    }
    if let Some(l) = &m.latent {
        let _ = writeln!(
            r,
            "\nEncoded validation latents: max |mean| {}, std in [{}, {}].\n\n![latent]({METRICS_DIR}/latent.svg)",
            fmt(l.max_abs_mean),
            fmt(l.min_std),
            fmt(l.max_std)
        );
    }
    let _ = writeln!(r, "\n## History matching\n");
    let categorical = s.case == Case::Categorical;
    let _ = write!(r, "| iteration | data mismatch | RMSE | spread |");
    let _ = writeln!(r, "{}", if categorical { " balanced accuracy |" } else { "" });
    let _ = writeln!(r, "|---|---|---|---|{}", if categorical { "---|" } else { "" });
    for rec in &a.records {
        let _ = write!(r, "| {} | {} | {} | {} |", rec.iteration, fmt(rec.mean_data_mismatch), fmt(rec.rmse_mean), fmt(rec.spread));
        let _ = writeln!(r, "{}", if categorical { format!(" {} |", rec.balanced_accuracy.map_or("n/a".into(), fmt)) } else { String::new() });
    }
    let _ = writeln!(r, "\nLargest simulator mass-balance error: {}.\n", fmt(a.max_balance_error));
    let _ = writeln!(r, "### Data mismatch\n\n![data mismatch]({ASSIMILATION_DIR}/plots/data_mismatch.svg)\n");
    let _ = writeln!(r, "### RMSE\n\n![rmse]({ASSIMILATION_DIR}/plots/rmse.svg)\n");
    let _ = writeln!(r, "### Spread\n\n![spread]({ASSIMILATION_DIR}/plots/spread.svg)\n");
    if categorical {
        let _ = writeln!(r, "### Balanced accuracy\n\n![balanced accuracy]({ASSIMILATION_DIR}/plots/balanced_accuracy.svg)\n");
    }
    let _ = writeln!(r, "### Fields\n");
    for stem in ["truth", "prior_mean", "posterior_mean", "prior_std", "posterior_std", "member1_prior", "member1_posterior"] {
        let _ = writeln!(r, "![{stem}]({ASSIMILATION_DIR}/fields/{stem}.svg)");
    }
    let _ = writeln!(r, "\n### Well rates\n");
    let mut wells: Vec<String> = fs::read_dir(dir.join(ASSIMILATION_DIR).join("wells"))
        .map(|it| {
            it.filter_map(|e| e.ok())
                .map(|e| e.file_name().to_string_lossy().into_owned())
                .filter(|n| n.ends_with(".svg"))
                .collect()
        })
        .unwrap_or_default();
    wells.sort();
    for w in wells {
        let _ = writeln!(r, "![{w}]({ASSIMILATION_DIR}/wells/{w})");
    }
    r
}

fn case_name(case: Case) -> &'static str {
    match case {
        Case::Categorical => "categorical",
        Case::Continuous => "continuous",
    }
}
