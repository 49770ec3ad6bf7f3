use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{LabeledBatch, LayerShape, ParameterVector};
use crate::error::{Error, Result};
use crate::rng::{self, Purpose};

/// Model architecture.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelArch {
    /// Multinomial logistic regression, `logits = W x + b`.
    Logistic {
        feature_dim: usize,
        num_classes: usize,
    },
    /// `logits = W2 tanh(W1 x + b1) + b2`.
    Mlp {
        feature_dim: usize,
        hidden_dim: usize,
        num_classes: usize,
    },
}

impl ModelArch {
    pub fn feature_dim(&self) -> usize {
        match *self {
            ModelArch::Logistic { feature_dim, .. } | ModelArch::Mlp { feature_dim, .. } => {
                feature_dim
            }
        }
    }

    pub fn num_classes(&self) -> usize {
        match *self {
            ModelArch::Logistic { num_classes, .. } | ModelArch::Mlp { num_classes, .. } => {
                num_classes
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            ModelArch::Logistic {
                feature_dim,
                num_classes,
            } => feature_dim >= 1 && num_classes >= 1,
            ModelArch::Mlp {
                feature_dim,
                hidden_dim,
                num_classes,
            } => feature_dim >= 1 && hidden_dim >= 1 && num_classes >= 1,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!(
                "all architecture dimensions must be >= 1: {self:?}"
            )))
        }
    }

    /// Layer layout. Weight tensors are `[out, in]`.
    pub fn schema(&self) -> Vec<LayerShape> {
        match *self {
            ModelArch::Logistic {
                feature_dim,
                num_classes,
            } => vec![
                LayerShape::new("linear.weight", vec![num_classes, feature_dim]),
                LayerShape::new("linear.bias", vec![num_classes]),
            ],
            ModelArch::Mlp {
                feature_dim,
                hidden_dim,
                num_classes,
            } => vec![
                LayerShape::new("hidden.weight", vec![hidden_dim, feature_dim]),
                LayerShape::new("hidden.bias", vec![hidden_dim]),
                LayerShape::new("output.weight", vec![num_classes, hidden_dim]),
                LayerShape::new("output.bias", vec![num_classes]),
            ],
        }
    }

    pub fn num_params(&self) -> usize {
        self.schema().iter().map(LayerShape::numel).sum()
    }

    /// Multiply-accumulates of one forward pass.
    pub fn forward_macs(&self) -> usize {
        match *self {
            ModelArch::Logistic {
                feature_dim,
                num_classes,
            } => feature_dim * num_classes,
            ModelArch::Mlp {
                feature_dim,
                hidden_dim,
                num_classes,
            } => feature_dim * hidden_dim + hidden_dim * num_classes,
        }
    }

    /// Recovers the architecture from a parameter schema.
    pub fn from_schema(schema: &[LayerShape]) -> Result<Self> {
        let arch = match schema {
            [w, _] if w.dims.len() == 2 => ModelArch::Logistic {
                feature_dim: w.dims[1],
                num_classes: w.dims[0],
            },
            [w1, _, w2, _] if w1.dims.len() == 2 && w2.dims.len() == 2 => ModelArch::Mlp {
                feature_dim: w1.dims[1],
                hidden_dim: w1.dims[0],
                num_classes: w2.dims[0],
            },
            _ => {
                return Err(Error::SchemaMismatch(
                    "schema matches neither logistic nor mlp layout".into(),
                ))
            }
        };
        if arch.schema() != schema {
            return Err(Error::SchemaMismatch(format!(
                "schema is not a valid {arch:?} layout"
            )));
        }
        Ok(arch)
    }
}

/// Fresh parameters: weights uniform in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`,
/// biases zero.
pub fn init_model(arch: &ModelArch, seed: u64) -> Result<ParameterVector> {
    arch.validate()?;
    let schema = arch.schema();
    let mut rng = rng::stream(seed, Purpose::Init, &[]);
    let mut values = Vec::with_capacity(arch.num_params());
    for layer in &schema {
        if layer.dims.len() == 2 {
            let bound = 1.0 / (layer.dims[1] as f64).sqrt();
            values.extend((0..layer.numel()).map(|_| rng.random_range(-bound..=bound)));
        } else {
            values.extend(std::iter::repeat_n(0.0, layer.numel()));
        }
    }
    ParameterVector::new(schema, values)
}

struct Net<'a> {
    arch: ModelArch,
    p: &'a [f64],
}

struct SampleOut {
    loss: f64,
    probs: Vec<f64>,
    hidden: Vec<f64>,
}

impl<'a> Net<'a> {
    fn new(w: &'a ParameterVector, data: &LabeledBatch) -> Result<Self> {
        let arch = ModelArch::from_schema(w.schema())?;
        if data.feature_dim() != arch.feature_dim() {
            return Err(Error::Shape(format!(
                "batch has {} features, model expects {}",
                data.feature_dim(),
                arch.feature_dim()
            )));
        }
        data.check_labels(arch.num_classes())?;
        Ok(Self {
            arch,
            p: w.as_slice(),
        })
    }

    fn affine(weight: &[f64], bias: &[f64], x: &[f64], out: &mut Vec<f64>) {
        let n_in = x.len();
        out.clear();
        out.extend(bias.iter().enumerate().map(|(j, b)| {
            b + weight[j * n_in..(j + 1) * n_in]
                .iter()
                .zip(x)
                .map(|(w, xi)| w * xi)
                .sum::<f64>()
        }));
    }

    fn forward(&self, x: &[f64], label: usize) -> SampleOut {
        let mut hidden = Vec::new();
        let mut logits = Vec::new();
        match self.arch {
            ModelArch::Logistic {
                feature_dim: d,
                num_classes: k,
            } => {
                Self::affine(&self.p[..k * d], &self.p[k * d..k * d + k], x, &mut logits);
            }
            ModelArch::Mlp {
                feature_dim: d,
                hidden_dim: h,
                num_classes: k,
            } => {
                let (w1, rest) = self.p.split_at(h * d);
                let (b1, rest) = rest.split_at(h);
                let (w2, b2) = rest.split_at(k * h);
                Self::affine(w1, b1, x, &mut hidden);
                hidden.iter_mut().for_each(|a| *a = a.tanh());
                Self::affine(w2, b2, &hidden, &mut logits);
            }
        }
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
        let probs = logits.iter().map(|z| (z - lse).exp()).collect();
        SampleOut {
            loss: lse - logits[label],
            probs,
            hidden,
        }
    }

    /// Adds the gradient of this sample's loss to `grad`.
    fn backward(&self, x: &[f64], label: usize, out: &SampleOut, grad: &mut [f64]) {
        let mut dz = out.probs.clone();
        dz[label] -= 1.0;
        match self.arch {
            ModelArch::Logistic {
                feature_dim: d,
                num_classes: k,
            } => {
                for (j, &g) in dz.iter().enumerate() {
                    for (gw, xi) in grad[j * d..(j + 1) * d].iter_mut().zip(x) {
                        *gw += g * xi;
                    }
                    grad[k * d + j] += g;
                }
            }
            ModelArch::Mlp {
                feature_dim: d,
                hidden_dim: h,
                num_classes: k,
            } => {
                let w2 = &self.p[h * d + h..h * d + h + k * h];
                let (gw1, rest) = grad.split_at_mut(h * d);
                let (gb1, rest) = rest.split_at_mut(h);
                let (gw2, gb2) = rest.split_at_mut(k * h);
                let mut dh = vec![0.0; h];
                for (j, &g) in dz.iter().enumerate() {
                    for m in 0..h {
                        gw2[j * h + m] += g * out.hidden[m];
                        dh[m] += w2[j * h + m] * g;
                    }
                    gb2[j] += g;
                }
                for m in 0..h {
                    let da = dh[m] * (1.0 - out.hidden[m] * out.hidden[m]);
                    for (gw, xi) in gw1[m * d..(m + 1) * d].iter_mut().zip(x) {
                        *gw += da * xi;
                    }
                    gb1[m] += da;
                }
            }
        }
    }
}

/// Mean cross-entropy over `batch` and its exact gradient.
pub fn loss_and_grad(w: &ParameterVector, batch: &LabeledBatch) -> Result<(f64, ParameterVector)> {
    if batch.is_empty() {
        return Err(Error::Empty("loss_and_grad batch"));
    }
    let net = Net::new(w, batch)?;
    let mut grad = vec![0.0; w.len()];
    let mut total = 0.0;
    for (i, &label) in batch.labels().iter().enumerate() {
        let x = batch.row(i);
        let out = net.forward(x, label);
        total += out.loss;
        net.backward(x, label, &out, &mut grad);
    }
    let n = batch.len() as f64;
    grad.iter_mut().for_each(|g| *g /= n);
    let loss = total / n;
    if !loss.is_finite() {
        return Err(Error::NonFinite(format!("loss is {loss}")));
    }
    Ok((loss, w.with_values(grad)?))
}

/// `w - lr * grad`.
pub fn sgd_step(w: &ParameterVector, grad: &ParameterVector, lr: f64) -> Result<ParameterVector> {
    if !(lr > 0.0) {
        return Err(Error::InvalidArgument(format!("learning rate must be > 0, got {lr}")));
    }
    w.add_scaled(-lr, grad)
}

/// Cross-entropy of every row, in row order.
pub fn per_sample_losses(w: &ParameterVector, data: &LabeledBatch) -> Result<Vec<f64>> {
    if data.is_empty() {
        return Err(Error::Empty("per_sample_losses data"));
    }
    let net = Net::new(w, data)?;
    Ok(data
        .labels()
        .iter()
        .enumerate()
        .map(|(i, &l)| net.forward(data.row(i), l).loss)
        .collect())
}

/// Predicted class per row. Ties go to the lowest class index.
pub fn predict(w: &ParameterVector, data: &LabeledBatch) -> Result<Vec<usize>> {
    let net = Net::new(w, data)?;
    Ok((0..data.len())
        .map(|i| {
            let probs = net.forward(data.row(i), 0).probs;
            argmax(&probs)
        })
        .collect())
}

/// Maximum softmax probability per row.
pub fn confidences(w: &ParameterVector, data: &LabeledBatch) -> Result<Vec<f64>> {
    let net = Net::new(w, data)?;
    Ok((0..data.len())
        .map(|i| {
            net.forward(data.row(i), 0)
                .probs
                .into_iter()
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .collect())
}

/// Fraction of rows whose argmax prediction equals the label.
pub fn predict_accuracy(w: &ParameterVector, data: &LabeledBatch) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::Empty("predict_accuracy data"));
    }
    let correct = predict(w, data)?
        .iter()
        .zip(data.labels())
        .filter(|(p, l)| p == l)
        .count();
    Ok(correct as f64 / data.len() as f64)
}

fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}
