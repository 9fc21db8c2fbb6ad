use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use resgen_nn::{io, Activation, Adam, ForwardCtx, Graph, LayerSpec, Network, Padding, Tensor};
use serde::{Deserialize, Serialize};

use crate::error::MetricsError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClassifierConfig {
    /// Filters of the strided 3×3 convolutions.
    pub conv_filters: Vec<usize>,
    /// Width of the penultimate dense layer, which supplies the features.
    pub feature_width: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub holdout_fraction: f64,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        Self {
            conv_filters: vec![8, 16, 32],
            feature_width: 32,
            epochs: 12,
            batch_size: 32,
            learning_rate: 1e-3,
            holdout_fraction: 0.2,
        }
    }
}

/// A trained classifier used as a feature extractor.
#[derive(Clone, Debug)]
pub struct FeatureModel {
    pub net: Network<f32>,
    pub num_classes: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassifierReport {
    pub train_loss: Vec<f64>,
    pub heldout_accuracy: f64,
    pub majority_baseline: f64,
    pub heldout: usize,
}

impl FeatureModel {
    pub fn architecture(config: &ClassifierConfig, num_classes: usize) -> Vec<LayerSpec> {
        let mut layers: Vec<LayerSpec> = config
            .conv_filters
            .iter()
            .map(|&filters| LayerSpec::Conv2d {
                filters,
                kernel: 3,
                stride: 2,
                padding: Padding::Same,
                activation: Activation::LeakyRelu(0.2),
                spectral_norm: false,
            })
            .collect();
        layers.push(LayerSpec::Flatten {});
        layers.push(LayerSpec::Dense {
            units: config.feature_width,
            activation: Activation::Relu,
            spectral_norm: false,
        });
        layers.push(LayerSpec::Dense {
            units: num_classes,
            activation: Activation::Linear,
            spectral_norm: false,
        });
        layers
    }

    /// Number of leading layers that produce the features.
    pub fn feature_layer(&self) -> usize {
        self.net.layers().len() - 1
    }

    pub fn feature_dim(&self) -> usize {
        self.net.layer_output_shape(self.feature_layer() - 1)[0]
    }

    fn batches<'a>(&'a self, fields: &'a [Vec<f32>]) -> impl Iterator<Item = Result<Tensor<f32>, MetricsError>> + 'a {
        let shape = self.net.input_shape().to_vec();
        fields.chunks(64).map(move |chunk| {
            let mut data = Vec::with_capacity(chunk.len() * chunk[0].len());
            for f in chunk {
                data.extend_from_slice(f);
            }
            let mut s = vec![chunk.len()];
            s.extend_from_slice(&shape);
            Ok(Tensor::new(&s, data)?)
        })
    }

    /// Penultimate activations for normalized fields.
    pub fn features(&self, fields: &[Vec<f32>]) -> Result<Vec<Vec<f64>>, MetricsError> {
        let mut out = Vec::with_capacity(fields.len());
        for batch in self.batches(fields) {
            let y = self.net.predict_until(&batch?, self.feature_layer())?;
            let w = y.len() / y.batch();
            out.extend(y.data().chunks(w).map(|c| c.iter().map(|v| *v as f64).collect()));
        }
        Ok(out)
    }

    pub fn predict_labels(&self, fields: &[Vec<f32>]) -> Result<Vec<usize>, MetricsError> {
        let mut out = Vec::with_capacity(fields.len());
        for batch in self.batches(fields) {
            let y = self.net.predict(&batch?)?;
            out.extend(y.data().chunks(self.num_classes).map(argmax));
        }
        Ok(out)
    }

    pub fn save(&self, dir: &Path) -> Result<(), MetricsError> {
        io::save_network(&self.net, dir, serde_json::json!({ "num_classes": self.num_classes }))?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self, MetricsError> {
        let (net, meta) = io::load_network(dir)?;
        let num_classes = meta["num_classes"]
            .as_u64()
            .ok_or_else(|| resgen_nn::NnError::Format("classifier metadata lacks num_classes".into()))?
            as usize;
        Ok(Self { net, num_classes })
    }
}

fn argmax(v: &[f32]) -> usize {
    v.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).map(|(k, _)| k).unwrap_or(0)
}

/// Trains the classifier on normalized fields (`[ny, nx]` each) and labels,
/// holding out a fraction for the accuracy check.
pub fn train_reservoir_classifier(
    fields: &[Vec<f32>],
    labels: &[usize],
    shape: [usize; 2],
    num_classes: usize,
    config: &ClassifierConfig,
    seed: u64,
) -> Result<(FeatureModel, ClassifierReport), MetricsError> {
    crate::ensemble::check_len(fields.len(), labels.len())?;
    if fields.len() < 4 {
        return Err(MetricsError::Empty("classifier training set"));
    }
    if let Some(&label) = labels.iter().find(|l| **l >= num_classes) {
        return Err(MetricsError::Label { label, classes: num_classes });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..fields.len()).collect();
    order.shuffle(&mut rng);
    let n_hold = ((fields.len() as f64 * config.holdout_fraction).round() as usize).clamp(1, fields.len() - 1);
    let (hold, train) = order.split_at(n_hold);
    let mut train = train.to_vec();

    let net = Network::new(&[1, shape[0], shape[1]], FeatureModel::architecture(config, num_classes), seed)?;
    let mut model = FeatureModel { net, num_classes };
    let mut adam = Adam::new(config.learning_rate);
    let cells = shape[0] * shape[1];
    let mut losses = Vec::new();
    for epoch in 0..config.epochs {
        train.shuffle(&mut rng);
        let (mut total, mut count) = (0.0, 0usize);
        for chunk in train.chunks(config.batch_size.max(1)) {
            let mut data = Vec::with_capacity(chunk.len() * cells);
            for &k in chunk {
                data.extend_from_slice(&fields[k]);
            }
            let batch_labels: Vec<usize> = chunk.iter().map(|&k| labels[k]).collect();
            let x = Tensor::new(&[chunk.len(), 1, shape[0], shape[1]], data)?;
            let mut g = Graph::new();
            let params = model.net.bind(&mut g);
            let xv = g.input(x);
            let mut ctx = ForwardCtx::train(&mut rng);
            let logits = model.net.forward_mut(&mut g, &params, xv, &mut ctx)?;
            let loss = g.softmax_cross_entropy(logits, &batch_labels)?;
            let value = g.value(loss).data()[0] as f64;
            if !value.is_finite() {
                return Err(MetricsError::Diverged(epoch));
            }
            let grads = g.backward(loss, &params)?;
            adam.step(model.net.params_mut(), &grads)?;
            total += value * chunk.len() as f64;
            count += chunk.len();
        }
        losses.push(total / count as f64);
    }

    let held_fields: Vec<Vec<f32>> = hold.iter().map(|&k| fields[k].clone()).collect();
    let predicted = model.predict_labels(&held_fields)?;
    let correct = predicted.iter().zip(hold).filter(|(p, k)| **p == labels[**k]).count();
    let mut counts = vec![0usize; num_classes];
    hold.iter().for_each(|&k| counts[labels[k]] += 1);
    let majority = *counts.iter().max().unwrap_or(&0) as f64 / hold.len() as f64;
    let report = ClassifierReport {
        train_loss: losses,
        heldout_accuracy: correct as f64 / hold.len() as f64,
        majority_baseline: majority,
        heldout: hold.len(),
    };
    Ok((model, report))
}
