//! Acceptance suite: one PASS/FAIL line per criterion. Exits non-zero when
//! any criterion fails. The desk-scale runs are kept under the Cargo target
//! directory for inspection.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use resgen_esmda::{analysis_step_with_obs, run_latent_assimilation, Ensemble, EsmdaError, ForwardModel, Identity, MdaConfig, Space};
use resgen_flowsim::{simulate, ChannelKind, DataLayout, FlowConfig, Role, Schedule, TransportMode, WellSpec};
use resgen_genmodels::losses::{elbo_loss, gan_losses, kl_divergence, r1_penalty, reparameterize};
use resgen_genmodels::ModelKind;
use resgen_geogen::{generate_dataset, Case, DatasetParams, Grid};
use resgen_harness::{
    read_summary, run_experiment, run_stage, ExperimentConfig, Run, RunManifest, RunSummary, Stage, MANIFEST_FILE,
};
use resgen_metrics::{balanced_accuracy, frechet_from_moments, geostats_report, mean_data_mismatch, FieldSet, GeoStatsReport};
use resgen_nn::gradcheck::check_gradients;
use resgen_nn::{Activation, ForwardCtx, Graph, LayerSpec, Network, NnError, Padding, Tensor, Var};

type Check = Result<String, String>;

fn ensure(ok: bool, msg: String) -> Check {
    if ok {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn run_check(id: usize, name: &str, f: impl FnOnce() -> Check) -> bool {
    let start = Instant::now();
    let out = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
        let msg = p
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_default();
        Err(format!("panicked: {msg}"))
    });
    let secs = start.elapsed().as_secs_f64();
    let (tag, detail) = match &out {
        Ok(d) => ("PASS", d),
        Err(d) => ("FAIL", d),
    };
    println!("{tag} criterion {id} ({name}): {detail} [{secs:.1} s]");
    out.is_ok()
}

// 1. ---------------------------------------------------------------------

struct Linear;

impl ForwardModel for Linear {
    fn forward(&self, models: &[Vec<f64>]) -> Result<Vec<Vec<f64>>, EsmdaError> {
        Ok(models.to_vec())
    }
}

fn criterion_1() -> Check {
    let start = Instant::now();
    let n_e = 10_000;
    let d_obs = 1.3;
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    let prior: Vec<Vec<f64>> = (0..n_e).map(|_| vec![StandardNormal.sample(&mut rng)]).collect();
    let cfg = MdaConfig { n_a: 4, n_e, ..MdaConfig::default() };
    let out = run_latent_assimilation(
        &Identity { dim: 1 },
        Ensemble::new(prior, Space::Model, 0).map_err(|e| e.to_string())?,
        &Linear,
        &[d_obs],
        &[1.0],
        &cfg,
        7,
    )
    .map_err(|e| e.to_string())?;
    let post: Vec<f64> = out.posterior().params.members.iter().map(|m| m[0]).collect();
    let mean = post.iter().sum::<f64>() / n_e as f64;
    let var = post.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n_e - 1) as f64;
    let secs = start.elapsed().as_secs_f64();
    let ok = (mean - d_obs / 2.0).abs() < 0.05 && (var - 0.5).abs() < 0.1 && secs < 10.0;
    ensure(ok, format!("posterior mean {mean:.4} (analytic {:.4}), variance {var:.4} (analytic 0.5), {secs:.2} s", d_obs / 2.0))
}

// 2. ---------------------------------------------------------------------

fn criterion_2() -> Check {
    let start = Instant::now();
    let members = vec![vec![0.0], vec![2.0]];
    let obs = vec![vec![2.0], vec![2.0]];
    let out = analysis_step_with_obs(&members, &members, &obs, &[1.0], 1.0).map_err(|e| e.to_string())?;
    let (a, b) = (out[0][0], out[1][0]);
    let secs = start.elapsed().as_secs_f64();
    let ok = (a - 4.0 / 3.0).abs() < 1e-12 && (b - 2.0).abs() < 1e-12 && secs < 1.0;
    ensure(ok, format!("updated members {{{a:.15}, {b:.15}}}, expected {{4/3, 2}}"))
}

// 3. ---------------------------------------------------------------------

const H: f64 = 1e-3;
const FLOOR: f64 = 1e-6;

fn dense(units: usize, activation: Activation, sn: bool) -> LayerSpec {
    LayerSpec::Dense { units, activation, spectral_norm: sn }
}

fn conv(filters: usize, stride: usize, padding: Padding, activation: Activation, sn: bool) -> LayerSpec {
    LayerSpec::Conv2d { filters, kernel: 3, stride, padding, activation, spectral_norm: sn }
}

fn network_error(input: &[usize], layers: Vec<LayerSpec>, training: bool) -> Result<f64, NnError> {
    let mut net = Network::<f64>::new(input, layers, 13)?;
    net.refresh_spectral(500)?;
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let mut xs = vec![3];
    xs.extend_from_slice(input);
    let x = Tensor::<f64>::randn(&xs, 1.0, &mut rng);
    let mut os = vec![3];
    os.extend_from_slice(net.output_shape());
    let r = Tensor::<f64>::randn(&os, 1.0, &mut rng);
    let mut inputs = vec![x];
    inputs.extend(net.params().iter().map(|p| p.tensor.clone()));
    let rep = check_gradients(&inputs, H, FLOOR, |g: &mut Graph<f64>, v: &[Var]| {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut ctx = ForwardCtx { training, update_state: false, rng: &mut rng };
        let y = net.forward(g, &v[1..], v[0], &mut ctx)?;
        let rv = g.input(r.clone());
        let p = g.mul(y, rv)?;
        Ok(g.sum(p))
    })?;
    Ok(rep.max_rel_error)
}

fn critic_layers() -> Vec<LayerSpec> {
    vec![
        conv(2, 1, Padding::Same, Activation::LeakyRelu(0.2), false),
        LayerSpec::AvgPool { size: 2 },
        LayerSpec::Flatten {},
        dense(1, Activation::Linear, true),
    ]
}

fn elbo_error() -> Result<f64, NnError> {
    let net = Network::<f64>::new(&[3], vec![dense(5, Activation::Tanh, false), dense(4, Activation::Tanh, false)], 21)?;
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let eps = Tensor::<f64>::randn(&[2, 3], 1.0, &mut rng);
    let x = Tensor::<f64>::randn(&[2, 4], 0.5, &mut rng);
    let mut inputs = vec![Tensor::<f64>::randn(&[2, 3], 1.0, &mut rng), Tensor::<f64>::randn(&[2, 3], 0.5, &mut rng)];
    inputs.extend(net.params().iter().map(|p| p.tensor.clone()));
    let rep = check_gradients(&inputs, H, FLOOR, |g: &mut Graph<f64>, v: &[Var]| {
        let z = reparameterize(g, v[0], v[1], eps.clone())?;
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let xh = net.forward(g, &v[2..], z, &mut ForwardCtx::eval(&mut rng))?;
        let xv = g.input(x.clone());
        Ok(elbo_loss(g, xv, xh, v[0], v[1], 0.3)?.total)
    })?;
    Ok(rep.max_rel_error)
}

fn gan_r1_error() -> Result<f64, NnError> {
    let mut net = Network::<f64>::new(&[1, 4, 4], critic_layers(), 23)?;
    net.refresh_spectral(500)?;
    let mut rng = ChaCha8Rng::seed_from_u64(24);
    let real = Tensor::<f64>::randn(&[2, 1, 4, 4], 1.0, &mut rng);
    let mut inputs = vec![Tensor::<f64>::randn(&[2, 1, 4, 4], 1.0, &mut rng)];
    inputs.extend(net.params().iter().map(|p| p.tensor.clone()));
    let rep = check_gradients(&inputs, H, FLOOR, |g: &mut Graph<f64>, v: &[Var]| {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let rv = g.input(real.clone());
        let dr = net.forward(g, &v[1..], rv, &mut ForwardCtx::eval(&mut rng))?;
        let df = net.forward(g, &v[1..], v[0], &mut ForwardCtx::eval(&mut rng))?;
        let terms = gan_losses(g, dr, df)?;
        let pen = r1_penalty(g, rv, dr, 10.0)?;
        let d = g.add(terms.discriminator, pen)?;
        g.add(d, terms.generator)
    })?;
    Ok(rep.max_rel_error)
}

fn criterion_3() -> Check {
    let start = Instant::now();
    let t = |a| LayerSpec::Activation { activation: a };
    let mut cases: Vec<(String, Vec<usize>, Vec<LayerSpec>, bool)> = Vec::new();
    for a in [Activation::Linear, Activation::Relu, Activation::LeakyRelu(0.2), Activation::Tanh, Activation::Sigmoid] {
        cases.push((format!("dense {a:?}"), vec![4], vec![dense(3, a, false)], false));
    }
    cases.extend([
        ("dense spectral".into(), vec![5], vec![dense(4, Activation::Tanh, true)], false),
        ("conv2d same".into(), vec![2, 5, 5], vec![conv(3, 1, Padding::Same, Activation::Tanh, false)], false),
        ("conv2d strided".into(), vec![2, 5, 5], vec![conv(3, 2, Padding::Same, Activation::Tanh, false)], false),
        ("conv2d valid".into(), vec![1, 6, 6], vec![conv(2, 1, Padding::Valid, Activation::Linear, false)], false),
        ("conv2d spectral".into(), vec![2, 5, 5], vec![conv(3, 2, Padding::Same, Activation::Tanh, true)], false),
        (
            "conv2d-transpose".into(),
            vec![3, 3, 3],
            vec![LayerSpec::Conv2dTranspose {
                filters: 2,
                kernel: 3,
                stride: 2,
                padding: Padding::Same,
                output_shape: None,
                activation: Activation::Sigmoid,
                spectral_norm: false,
            }],
            false,
        ),
        ("batch-norm training".into(), vec![2, 3, 3], vec![LayerSpec::BatchNorm {}, t(Activation::Tanh)], true),
        ("batch-norm inference".into(), vec![2, 3, 3], vec![LayerSpec::BatchNorm {}, t(Activation::Tanh)], false),
        (
            "reshape + flatten".into(),
            vec![8],
            vec![LayerSpec::Reshape { shape: vec![2, 2, 2] }, t(Activation::Tanh), LayerSpec::Flatten {}],
            false,
        ),
        ("global-avg-pool".into(), vec![3, 4, 4], vec![LayerSpec::GlobalAvgPool {}], false),
        ("avg-pool".into(), vec![2, 4, 6], vec![LayerSpec::AvgPool { size: 2 }], false),
        ("resize".into(), vec![2, 3, 3], vec![LayerSpec::Resize { height: 5, width: 7 }], false),
        ("dropout".into(), vec![10], vec![LayerSpec::Dropout { rate: 0.4 }, t(Activation::Tanh)], true),
        ("gaussian-noise".into(), vec![10], vec![LayerSpec::GaussianNoise { std: 0.3 }, t(Activation::Tanh)], true),
    ]);
    let mut worst = (0.0f64, String::new());
    for (name, input, layers, training) in cases {
        let e = network_error(&input, layers, training).map_err(|e| format!("{name}: {e}"))?;
        if e >= worst.0 {
            worst = (e, name);
        }
    }
    for (name, e) in [("ELBO via reparameterization", elbo_error()), ("GAN + R1", gan_r1_error())] {
        let e = e.map_err(|e| format!("{name}: {e}"))?;
        if e >= worst.0 {
            worst = (e, name.into());
        }
    }
    let secs = start.elapsed().as_secs_f64();
    ensure(worst.0 < 1e-4 && secs < 60.0, format!("largest relative error {:.2e} ({}), {secs:.1} s", worst.0, worst.1))
}

// 4. ---------------------------------------------------------------------

fn criterion_4() -> Check {
    let mut g = Graph::<f64>::new();
    let mu = g.input(Tensor::new(&[1, 1], vec![1.0]).unwrap());
    let lv = g.input(Tensor::new(&[1, 1], vec![0.0]).unwrap());
    let kl_v = kl_divergence(&mut g, mu, lv).map_err(|e| e.to_string())?;
    let kl = g.value(kl_v).data()[0];
    // KL(N(m, s²) || N(0, 1)) = (s² + m² − 1 − ln s²) / 2
    let kl_oracle = 0.5 * (1.0 + 1.0 - 1.0 - 0.0);

    let one = DMatrix::from_element(1, 1, 1.0);
    let fd = frechet_from_moments(&DVector::from_element(1, 0.0), &one, &DVector::from_element(1, 1.0), &one)
        .map_err(|e| e.to_string())?;

    // Class 0 recall 2/2, class 1 recall 2/4.
    let truth = [0, 0, 1, 1, 1, 1];
    let pred = [0, 0, 1, 1, 0, 0];
    let ba = balanced_accuracy(&pred, &truth, 2).map_err(|e| e.to_string())?.value;

    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let n_d = 40;
    let d_obs: Vec<f64> = (0..n_d).map(|k| 100.0 + k as f64).collect();
    let cd: Vec<f64> = (0..n_d).map(|k| 0.5 + 0.1 * k as f64).collect();
    let draws: Vec<Vec<f64>> = (0..10_000)
        .map(|_| {
            d_obs
                .iter()
                .zip(&cd)
                .map(|(d, v)| d + v.sqrt() * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng))
                .collect()
        })
        .collect();
    let (_, o_bar) = mean_data_mismatch(&draws, &d_obs, &cd).map_err(|e| e.to_string())?;

    let ok = (kl - 0.5).abs() < 1e-9
        && (kl - kl_oracle).abs() < 1e-9
        && (fd - 1.0).abs() < 1e-9
        && ba == 0.75
        && (o_bar - 1.0).abs() < 0.05;
    ensure(ok, format!("KL {kl:.12}, Frechet {fd:.12}, balanced accuracy {ba}, O-bar {o_bar:.4}"))
}

// 5. ---------------------------------------------------------------------

fn producer_rates(cfg: &FlowConfig, m: &[f64]) -> Result<Vec<f64>, String> {
    let r = simulate(cfg, m).map_err(|e| e.to_string())?;
    let layout = DataLayout::new(cfg);
    Ok(cfg
        .producers()
        .flat_map(|p| {
            [ChannelKind::OilRate, ChannelKind::WaterRate].map(|c| r.data[*layout.series(&p.name, c).last().unwrap()])
        })
        .collect())
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-12)
}

/// Largest relative rate discrepancy between producers that the five-spot
/// layout makes equivalent on a homogeneous field.
fn symmetry_error() -> Result<f64, String> {
    let mut worst = 0.0f64;
    let cfg = FlowConfig::five_spot(Grid::square(33));
    let q = producer_rates(&cfg, &vec![100f64.ln(); 33 * 33])?;
    for group in [[0, 2, 6, 8], [1, 3, 5, 7]] {
        for &k in &group[1..] {
            for c in 0..2 {
                worst = worst.max(rel(q[2 * group[0] + c], q[2 * k + c]));
            }
        }
    }
    let cfg = FlowConfig::five_spot(Grid::square(32));
    let q = producer_rates(&cfg, &vec![100f64.ln(); 32 * 32])?;
    for (a, b) in [(1, 3), (2, 6), (5, 7)] {
        for c in 0..2 {
            worst = worst.max(rel(q[2 * a + c], q[2 * b + c]));
        }
    }
    Ok(worst)
}

fn corey_f(s: f64) -> f64 {
    let se = ((s - 0.2) / 0.6).clamp(0.0, 1.0);
    se * se / (se * se + (1.0 - se) * (1.0 - se))
}

/// Relative error of the simulated water front against the Welge tangent
/// construction for the default Corey fluid.
fn buckley_leverett_error() -> Result<f64, String> {
    let dfds = |s: f64| (corey_f(s + 1e-7) - corey_f(s - 1e-7)) / 2e-7;
    let tangent = |s: f64| dfds(s) * (s - 0.2) - corey_f(s);
    let (mut lo, mut hi) = (0.25, 0.79);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if tangent(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let sf = 0.5 * (lo + hi);
    let slope = corey_f(sf) / (sf - 0.2);

    let n = 200;
    let g = Grid { nx: n, ny: 1, dx: 10.0, dy: 10.0 };
    let (q, t) = (100.0, 120.0);
    let well = |name: &str, i, role, control| WellSpec { name: name.into(), i, j: 0, role, control, radius: 0.1, max_bhp: None };
    let cfg = FlowConfig {
        wells: vec![well("I", 0, Role::Injector, q), well("P", n - 1, Role::Producer, 200.0)],
        schedule: Schedule {
            total_days: t,
            report_interval: t,
            pressure_step: 1.0,
            transport_substeps: 1,
            transport: TransportMode::Implicit,
        },
        ..FlowConfig::five_spot(g)
    };
    let res = simulate(&cfg, &vec![100f64.ln(); n]).map_err(|e| e.to_string())?;
    let exact = q * t * slope / (g.dy * cfg.rock.thickness * cfg.rock.porosity);
    let mid = 0.5 * (sf + 0.2);
    let s = &res.state.saturation;
    let k = (0..n - 1).find(|&k| s[k] >= mid && s[k + 1] < mid).ok_or("no front found")?;
    let x = (k as f64 + 0.5 + (s[k] - mid) / (s[k] - s[k + 1])) * g.dx;
    Ok((x - exact).abs() / exact)
}

fn criterion_5(desk: &[(ModelKind, Result<RunSummary, String>)]) -> Check {
    let mut balance = 0.0f64;
    for (kind, s) in desk {
        let s = s.as_ref().map_err(|e| format!("{kind} desk run failed: {e}"))?;
        balance = balance.max(s.assimilation.max_balance_error);
    }
    let sym = symmetry_error()?;
    let bl = buckley_leverett_error()?;
    ensure(
        balance < 1e-8 && sym < 1e-6 && bl < 0.05,
        format!("max mass-balance error {balance:.2e} over desk runs, five-spot asymmetry {sym:.2e}, Buckley-Leverett front error {:.2}%", 100.0 * bl),
    )
}

// 6-9 --------------------------------------------------------------------

fn desk_config(kind: ModelKind) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::desk(Case::Categorical, kind);
    match kind {
        ModelKind::Dcvae => cfg.model.train.epochs = 40,
        ModelKind::Vaegan => cfg.model.train.epochs = 25,
        ModelKind::Dcgan => cfg.model.train.epochs = 16,
    }
    cfg
}

fn desk_run(root: &Path, kind: ModelKind) -> Result<RunSummary, String> {
    let dir = root.join(kind.name());
    let start = Instant::now();
    let cfg = desk_config(kind);
    if kind == ModelKind::Dcgan {
        // Only the generative-quality stages; latent assimilation is run for the VAE family.
        let mut run = Run::open(&dir, cfg).map_err(|e| e.to_string())?;
        for stage in [Stage::GenData, Stage::TrainClassifier, Stage::Train, Stage::Metrics] {
            run_stage(&mut run, stage).map_err(|e| format!("{e}: {:?}", std::error::Error::source(&e).map(|s| s.to_string())))?;
        }
        let metrics = std::fs::read_to_string(dir.join("metrics/summary.json")).map_err(|e| e.to_string())?;
        let metrics = serde_json::from_str(&metrics).map_err(|e| e.to_string())?;
        eprintln!("  {kind} desk run: {:.0} s", start.elapsed().as_secs_f64());
        return Ok(RunSummary {
            kind,
            case: Case::Categorical,
            epochs: 0,
            final_val_mse: None,
            metrics,
            assimilation: placeholder_assimilation(),
        });
    }
    run_experiment(cfg, &dir).map_err(|e| format!("{e}: {:?}", std::error::Error::source(&e).map(|s| s.to_string())))?;
    eprintln!("  {kind} desk run: {:.0} s", start.elapsed().as_secs_f64());
    read_summary(&dir).map_err(|e| e.to_string())
}

fn placeholder_assimilation() -> resgen_harness::AssimilationSummary {
    resgen_harness::AssimilationSummary {
        param: resgen_harness::ParamMode::Latent,
        n_d: 0,
        n_e: 0,
        n_a: 0,
        records: Vec::new(),
        prior_dm: f64::NAN,
        final_dm: f64::NAN,
        prior_spread: f64::NAN,
        final_spread: f64::NAN,
        prior_rmse: f64::NAN,
        final_rmse: f64::NAN,
        prior_ba: None,
        final_ba: None,
        max_balance_error: 0.0,
    }
}

fn summary_of(desk: &[(ModelKind, Result<RunSummary, String>)], kind: ModelKind) -> Result<&RunSummary, String> {
    let (_, s) = desk.iter().find(|(k, _)| *k == kind).ok_or(format!("no {kind} run"))?;
    s.as_ref().map_err(|e| format!("{kind} desk run failed: {e}"))
}

fn criterion_6(desk: &[(ModelKind, Result<RunSummary, String>)]) -> Check {
    let mut parts = Vec::new();
    let mut ok = true;
    for kind in [ModelKind::Dcvae, ModelKind::Vaegan] {
        let a = &summary_of(desk, kind)?.assimilation;
        let pass = a.final_dm < 0.5 * a.prior_dm && a.final_spread < a.prior_spread && a.final_spread > 0.0;
        ok &= pass;
        parts.push(format!(
            "{kind}: O-bar {:.2} -> {:.2} (ratio {:.3}), spread {:.4} -> {:.4}",
            a.prior_dm,
            a.final_dm,
            a.final_dm / a.prior_dm,
            a.prior_spread,
            a.final_spread
        ));
    }
    ensure(ok, parts.join("; "))
}

fn criterion_7(desk: &[(ModelKind, Result<RunSummary, String>)]) -> Check {
    let mut parts = Vec::new();
    let mut ok = true;
    for kind in [ModelKind::Dcvae, ModelKind::Vaegan] {
        let l = summary_of(desk, kind)?.metrics.latent.as_ref().ok_or(format!("{kind}: no latent statistics"))?;
        let pass = l.max_abs_mean < 0.25 && l.min_std >= 0.6 && l.max_std <= 1.4;
        ok &= pass;
        parts.push(format!("{kind}: max |mean| {:.3}, std in [{:.3}, {:.3}]", l.max_abs_mean, l.min_std, l.max_std));
    }
    ensure(ok, parts.join("; "))
}

fn geostat_values(r: &GeoStatsReport) -> [f64; 5] {
    // Oriented so that larger is worse.
    [r.variogram_mse, r.connectivity_mse, r.histogram_kl, 1.0 - r.pca_correlation, r.mds_mmd]
}

fn geostat_sweep() -> Result<String, String> {
    let grid = Grid::square(32);
    let ds = generate_dataset(Case::Categorical, grid, 120, 77, &DatasetParams::default()).map_err(|e| e.to_string())?;
    let a: Vec<Vec<f64>> = (0..ds.len()).map(|k| ds.normalized(k).iter().map(|&v| f64::from(v)).collect()).collect();
    let set_a = FieldSet::new(&a, 32, 32).map_err(|e| e.to_string())?;
    let same = geostats_report(&set_a, &set_a, 0.0).map_err(|e| e.to_string())?;
    let v0 = geostat_values(&same);
    if v0.iter().any(|v| v.abs() > 1e-9) {
        return Err(format!("identity is not perfect: {same:?}"));
    }
    let mut prev = v0;
    let mut rng = ChaCha8Rng::seed_from_u64(78);
    for sigma in [0.1, 0.3, 0.9] {
        let b: Vec<Vec<f64>> = a
            .iter()
            .map(|f| f.iter().map(|v| v + sigma * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng)).collect())
            .collect();
        let r = geostats_report(&set_a, &FieldSet::new(&b, 32, 32).map_err(|e| e.to_string())?, 0.0).map_err(|e| e.to_string())?;
        let v = geostat_values(&r);
        if let Some(k) = (0..5).find(|&k| v[k] <= prev[k]) {
            return Err(format!("metric {k} did not worsen at noise {sigma}: {prev:?} -> {v:?}"));
        }
        prev = v;
    }
    Ok("geostat suite perfect under identity and strictly worse at noise 0.1, 0.3, 0.9".into())
}

fn criterion_8(desk: &[(ModelKind, Result<RunSummary, String>)]) -> Check {
    let mut parts = Vec::new();
    let mut ok = true;
    for kind in ModelKind::ALL {
        let m = &summary_of(desk, kind)?.metrics;
        ok &= m.frd < m.frd_noise;
        parts.push(format!("{kind} FRD {:.2} vs noise {:.2}", m.frd, m.frd_noise));
    }
    match geostat_sweep() {
        Ok(s) => parts.push(s),
        Err(e) => {
            ok = false;
            parts.push(e);
        }
    }
    ensure(ok, parts.join("; "))
}

fn csv_files(dir: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        let Ok(entries) = std::fs::read_dir(&d) else { continue };
        for e in entries.flatten() {
            let p = e.path();
            if p.is_dir() {
                stack.push(p);
            } else if p.extension().is_some_and(|x| x == "csv") {
                out.push(p.strip_prefix(dir).unwrap().to_path_buf());
            }
        }
    }
    out.sort();
    out
}

fn snapshot(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    csv_files(dir).into_iter().map(|f| (f.clone(), std::fs::read(dir.join(&f)).unwrap())).collect()
}

fn criterion_9(root: &Path, desk: &[(ModelKind, Result<RunSummary, String>)]) -> Check {
    // A small end-to-end run repeated from its manifest in a fresh directory.
    let mut cfg = ExperimentConfig::desk(Case::Categorical, ModelKind::Vaegan);
    cfg.grid = Grid::square(16);
    cfg.dataset.count = 96;
    cfg.classifier.epochs = 2;
    cfg.model.latent_dim = 8;
    cfg.model.width_scale = 0.125;
    cfg.model.train.epochs = 2;
    cfg.model.train.frd_samples = 32;
    cfg.assimilation.mda.n_e = 16;
    cfg.metrics.samples = 32;
    cfg.metrics.latent_fields = 32;
    let (a, b) = (root.join("determinism/a"), root.join("determinism/b"));
    for d in [&a, &b] {
        let _ = std::fs::remove_dir_all(d);
    }
    run_experiment(cfg, &a).map_err(|e| e.to_string())?;
    let manifest = RunManifest::read(&a.join(MANIFEST_FILE)).map_err(|e| e.to_string())?;
    run_experiment(manifest.config, &b).map_err(|e| e.to_string())?;
    let (sa, sb) = (snapshot(&a), snapshot(&b));
    if sa != sb {
        let diff: Vec<String> = sa.iter().zip(&sb).filter(|(x, y)| x != y).map(|(x, _)| x.0.display().to_string()).collect();
        return Err(format!("fresh rerun differs in {diff:?}"));
    }

    // Stages of a desk run rerun in place from its own manifest.
    summary_of(desk, ModelKind::Dcvae)?;
    let desk_dir = root.join(ModelKind::Dcvae.name());
    let before = snapshot(&desk_dir);
    let manifest = RunManifest::read(&desk_dir.join(MANIFEST_FILE)).map_err(|e| e.to_string())?;
    let mut run = Run::open(&desk_dir, manifest.config).map_err(|e| e.to_string())?;
    for stage in [Stage::Assimilate, Stage::Metrics, Stage::Report] {
        run_stage(&mut run, stage).map_err(|e| e.to_string())?;
    }
    let after = snapshot(&desk_dir);
    ensure(
        before == after,
        format!("{} CSV files identical across a fresh rerun; {} desk CSV files identical after rerunning assimilate, metrics and report", sa.len(), after.len()),
    )
}

fn main() {
    // `cargo test --test acceptance -- 3 4` runs only the listed criteria.
    let only: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let wanted = |id: usize| only.is_empty() || only.contains(&id);
    // Single-threaded mode for the determinism criterion.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(1).build_global();
    let root = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("acceptance");
    std::fs::create_dir_all(&root).expect("acceptance directory");

    let mut ok = true;
    let mut check = |id: usize, name: &str, f: &dyn Fn() -> Check| {
        if wanted(id) {
            ok &= run_check(id, name, f);
        }
    };
    check(1, "ESMDA analytic oracle", &criterion_1);
    check(2, "hand-computed analysis step", &criterion_2);
    check(3, "gradient suite", &criterion_3);
    check(4, "closed-form metrics", &criterion_4);

    let desk: Vec<(ModelKind, Result<RunSummary, String>)> = if (5..=9).any(wanted) {
        eprintln!("desk runs under {}", root.display());
        [ModelKind::Dcvae, ModelKind::Vaegan, ModelKind::Dcgan]
            .into_iter()
            .map(|k| {
                let r = catch_unwind(AssertUnwindSafe(|| desk_run(&root, k))).unwrap_or_else(|_| Err("panicked".into()));
                (k, r)
            })
            .collect()
    } else {
        Vec::new()
    };

    check(5, "simulator conservation", &|| criterion_5(&desk));
    check(6, "end-to-end desk pipeline", &|| criterion_6(&desk));
    check(7, "latent Gaussianization", &|| criterion_7(&desk));
    check(8, "FRD and geostatistics substitutes", &|| criterion_8(&desk));
    check(9, "determinism", &|| criterion_9(&root, &desk));
    if !ok {
        std::process::exit(1);
    }
}
