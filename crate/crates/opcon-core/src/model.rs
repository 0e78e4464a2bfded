//! Trainable predictors: an exact min-norm linear interpolant for the
//! regression analysis and a ridge-regularized logistic classifier for the
//! synthetic tasks. Training is full-batch and deterministic.

use serde::{Deserialize, Serialize};

use crate::concept::{is_positive_label, ConceptDataset, Example};
use crate::error::{Error, Result};
use crate::minnorm::min_norm_interpolant;
use crate::subspace::dot;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    MinNormLinear,
    RidgeLogistic,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainMeta {
    pub epochs_run: usize,
    pub final_loss: f64,
    pub warm_start: bool,
}

/// A trained predictor. `bias` is only meaningful for the classifier.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Model {
    pub kind: ModelKind,
    pub weights: Vec<f64>,
    pub bias: f64,
    pub train_meta: TrainMeta,
}

impl Model {
    /// Wrap fixed weights as a min-norm linear model (handy in tests and for
    /// frozen oracles).
    pub fn from_weights(kind: ModelKind, weights: Vec<f64>, bias: f64) -> Self {
        Model {
            kind,
            weights,
            bias,
            train_meta: TrainMeta {
                epochs_run: 0,
                final_loss: 0.0,
                warm_start: false,
            },
        }
    }

    pub fn dim(&self) -> usize {
        self.weights.len()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub l2_penalty: f64,
    pub warm_start: bool,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1.0,
            epochs: 400,
            l2_penalty: 1e-3,
            warm_start: true,
            seed: 0,
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<()> {
        if self.learning_rate <= 0.0 {
            return Err(Error::InvalidConfig(
                "learning_rate must be positive".into(),
            ));
        }
        if self.epochs == 0 {
            return Err(Error::InvalidConfig("epochs must be at least 1".into()));
        }
        if self.l2_penalty < 0.0 {
            return Err(Error::InvalidConfig(
                "l2_penalty must be nonnegative".into(),
            ));
        }
        Ok(())
    }
}

fn labeled_rows<'a>(examples: &[&'a Example]) -> Result<(Vec<&'a [f64]>, Vec<f64>)> {
    if examples.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let dim = examples[0].features.len();
    let mut xs = Vec::with_capacity(examples.len());
    let mut ys = Vec::with_capacity(examples.len());
    for e in examples {
        if e.features.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: e.features.len(),
            });
        }
        match e.label {
            Some(y) => {
                xs.push(e.features.as_slice());
                ys.push(y);
            }
            None => {
                return Err(Error::UnlabeledExample { id: e.id.clone() });
            }
        }
    }
    Ok((xs, ys))
}

/// Train a fresh model of the given kind on a dataset.
pub fn train(data: &ConceptDataset, config: &TrainConfig, kind: ModelKind) -> Result<Model> {
    let refs: Vec<&Example> = data.examples.iter().collect();
    train_on_examples(&refs, config, kind)
}

/// Train on the union of several datasets (base plus concepts).
pub fn train_on_union(
    datasets: &[&ConceptDataset],
    config: &TrainConfig,
    kind: ModelKind,
) -> Result<Model> {
    let refs: Vec<&Example> = datasets
        .iter()
        .flat_map(|d| d.examples.iter())
        .collect();
    train_on_examples(&refs, config, kind)
}

pub fn train_on_examples(
    examples: &[&Example],
    config: &TrainConfig,
    kind: ModelKind,
) -> Result<Model> {
    config.validate()?;
    let (xs, ys) = labeled_rows(examples)?;
    match kind {
        ModelKind::MinNormLinear => {
            let dim = xs[0].len();
            let rows: Vec<Vec<f64>> = xs.iter().map(|r| r.to_vec()).collect();
            let weights = min_norm_interpolant(dim, &rows, &ys)?;
            let final_loss = 0.0;
            Ok(Model {
                kind,
                weights,
                bias: 0.0,
                train_meta: TrainMeta {
                    epochs_run: 0,
                    final_loss,
                    warm_start: false,
                },
            })
        }
        ModelKind::RidgeLogistic => {
            let dim = xs[0].len();
            gradient_descent(vec![0.0; dim], 0.0, &xs, &ys, config, false)
        }
    }
}

/// Continue training from an existing model's weights. For the min-norm
/// kind there is no meaningful warm start, so this simply refits on the
/// given data (callers pass the union).
pub fn finetune(model: &Model, data: &ConceptDataset, config: &TrainConfig) -> Result<Model> {
    config.validate()?;
    let refs: Vec<&Example> = data.examples.iter().collect();
    finetune_on_examples(model, &refs, config)
}

pub fn finetune_on_examples(
    model: &Model,
    examples: &[&Example],
    config: &TrainConfig,
) -> Result<Model> {
    match model.kind {
        ModelKind::MinNormLinear => train_on_examples(examples, config, ModelKind::MinNormLinear),
        ModelKind::RidgeLogistic => {
            let (xs, ys) = labeled_rows(examples)?;
            if xs[0].len() != model.dim() {
                return Err(Error::DimensionMismatch {
                    expected: model.dim(),
                    got: xs[0].len(),
                });
            }
            gradient_descent(model.weights.clone(), model.bias, &xs, &ys, config, true)
        }
    }
}

/// Raw score: w.x for the linear kind, positive-class probability for the
/// classifier.
pub fn predict(model: &Model, x: &[f64]) -> Result<f64> {
    if x.len() != model.dim() {
        return Err(Error::DimensionMismatch {
            expected: model.dim(),
            got: x.len(),
        });
    }
    let score = dot(&model.weights, x) + model.bias;
    Ok(match model.kind {
        ModelKind::MinNormLinear => score,
        ModelKind::RidgeLogistic => sigmoid(score),
    })
}

/// Fraction of examples the model gets right. For the classifier,
/// `threshold` is the probability cut (ties count as positive); for the
/// regression kind it is the absolute tolerance on the prediction.
pub fn accuracy(model: &Model, data: &ConceptDataset, threshold: f64) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut correct = 0usize;
    for e in &data.examples {
        let label = e.label.ok_or_else(|| Error::UnlabeledExample {
            id: e.id.clone(),
        })?;
        if example_correct(model, &e.features, label, threshold)? {
            correct += 1;
        }
    }
    Ok(correct as f64 / data.len() as f64)
}

/// Correctness of one prediction under the same threshold rule as
/// [`accuracy`].
pub fn example_correct(model: &Model, x: &[f64], label: f64, threshold: f64) -> Result<bool> {
    let score = predict(model, x)?;
    Ok(match model.kind {
        ModelKind::RidgeLogistic => (score >= threshold) == is_positive_label(label),
        ModelKind::MinNormLinear => (score - label).abs() <= threshold,
    })
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// ln(1 + exp(-z)) without overflow.
fn log1p_exp_neg(z: f64) -> f64 {
    if z > 0.0 {
        (-z).exp().ln_1p()
    } else {
        -z + z.exp().ln_1p()
    }
}

/// Mean regularized logistic loss and its gradient; public so tests can
/// check the analytic gradient against finite differences.
pub fn logistic_loss_grad(
    weights: &[f64],
    bias: f64,
    xs: &[&[f64]],
    labels: &[f64],
    l2_penalty: f64,
) -> (f64, Vec<f64>, f64) {
    let n = xs.len() as f64;
    let mut loss = 0.0;
    let mut grad_w = vec![0.0; weights.len()];
    let mut grad_b = 0.0;
    for (x, &label) in xs.iter().zip(labels.iter()) {
        let t = if is_positive_label(label) { 1.0 } else { -1.0 };
        let z = t * (dot(weights, x) + bias);
        loss += log1p_exp_neg(z);
        // d/dz ln(1+exp(-z)) = -sigmoid(-z)
        let coef = -t * sigmoid(-z);
        for (g, &xi) in grad_w.iter_mut().zip(x.iter()) {
            *g += coef * xi;
        }
        grad_b += coef;
    }
    loss /= n;
    grad_b /= n;
    let mut reg = 0.0;
    for (g, &w) in grad_w.iter_mut().zip(weights.iter()) {
        *g = *g / n + l2_penalty * w;
        reg += w * w;
    }
    loss += 0.5 * l2_penalty * reg;
    (loss, grad_w, grad_b)
}

/// Full-batch gradient descent with per-epoch backtracking so the recorded
/// loss never increases.
fn gradient_descent(
    mut weights: Vec<f64>,
    mut bias: f64,
    xs: &[&[f64]],
    labels: &[f64],
    config: &TrainConfig,
    warm_start: bool,
) -> Result<Model> {
    let (mut loss, mut grad_w, mut grad_b) = logistic_loss_grad(&weights, bias, xs, labels, config.l2_penalty);
    let mut epochs_run = 0;
    'epochs: for _ in 0..config.epochs {
        let grad_norm_sq: f64 = grad_w.iter().map(|g| g * g).sum::<f64>() + grad_b * grad_b;
        if grad_norm_sq.sqrt() < 1e-12 {
            break;
        }
        let mut step = config.learning_rate;
        loop {
            let cand_w: Vec<f64> = weights
                .iter()
                .zip(grad_w.iter())
                .map(|(w, g)| w - step * g)
                .collect();
            let cand_b = bias - step * grad_b;
            let (cand_loss, cand_gw, cand_gb) =
                logistic_loss_grad(&cand_w, cand_b, xs, labels, config.l2_penalty);
            if cand_loss <= loss {
                weights = cand_w;
                bias = cand_b;
                loss = cand_loss;
                grad_w = cand_gw;
                grad_b = cand_gb;
                break;
            }
            step *= 0.5;
            if step < 1e-18 {
                break 'epochs;
            }
        }
        epochs_run += 1;
    }
    Ok(Model {
        kind: ModelKind::RidgeLogistic,
        weights,
        bias,
        train_meta: TrainMeta {
            epochs_run,
            final_loss: loss,
            warm_start,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::concept::{ConceptDataset, Example};
    use approx::assert_relative_eq;

    fn labeled(id: &str, features: Vec<f64>, label: f64) -> Example {
        Example::new(id, features, 1).with_label(label)
    }

    fn dataset(examples: Vec<Example>) -> ConceptDataset {
        ConceptDataset::from_examples(1, examples).unwrap()
    }

    #[test]
    fn min_norm_training_matches_interpolant() {
        let ds = dataset(vec![labeled("a", vec![1.0, 1.0, 0.0], 2.0)]);
        let m = train(&ds, &TrainConfig::default(), ModelKind::MinNormLinear).unwrap();
        assert_relative_eq!(m.weights[0], 1.0, epsilon = 1e-9);
        assert_relative_eq!(m.weights[1], 1.0, epsilon = 1e-9);
        assert_relative_eq!(m.weights[2], 0.0, epsilon = 1e-9);
    }

    #[test]
    fn predict_worked_example_values() {
        let local = Model::from_weights(ModelKind::MinNormLinear, vec![0.0, 2.0, 0.0], 0.0);
        assert_relative_eq!(predict(&local, &[0.0, 0.0, 1.0]).unwrap(), 0.0);
        let global = Model::from_weights(
            ModelKind::MinNormLinear,
            vec![2.0 / 3.0, 4.0 / 3.0, 2.0 / 3.0],
            0.0,
        );
        assert_relative_eq!(
            predict(&global, &[0.0, 0.0, 1.0]).unwrap(),
            2.0 / 3.0,
            epsilon = 1e-12
        );
    }

    #[test]
    fn zero_logistic_predicts_half() {
        let m = Model::from_weights(ModelKind::RidgeLogistic, vec![0.0, 0.0], 0.0);
        assert_relative_eq!(predict(&m, &[3.0, -1.0]).unwrap(), 0.5);
    }

    #[test]
    fn separable_two_points_reach_full_accuracy() {
        let ds = dataset(vec![
            labeled("p", vec![1.0, 0.0], 1.0),
            labeled("n", vec![-1.0, 0.0], -1.0),
        ]);
        let m = train(&ds, &TrainConfig::default(), ModelKind::RidgeLogistic).unwrap();
        assert_relative_eq!(accuracy(&m, &ds, 0.5).unwrap(), 1.0);
        assert!(m.train_meta.final_loss.is_finite());
    }

    #[test]
    fn training_is_deterministic() {
        let ds = dataset(vec![
            labeled("a", vec![0.2, 1.0], 1.0),
            labeled("b", vec![-0.4, 0.3], -1.0),
            labeled("c", vec![1.4, -0.5], 1.0),
        ]);
        let cfg = TrainConfig::default();
        let m1 = train(&ds, &cfg, ModelKind::RidgeLogistic).unwrap();
        let m2 = train(&ds, &cfg, ModelKind::RidgeLogistic).unwrap();
        assert_eq!(m1.weights, m2.weights);
        assert_eq!(m1.bias, m2.bias);
    }

    #[test]
    fn accuracy_of_constant_half_on_balanced_data() {
        // 10 examples, 5 positive; p = 0.5 everywhere and ties go positive,
        // so exactly the positives are counted correct.
        let mut examples = Vec::new();
        for i in 0..10 {
            let label = if i < 5 { 1.0 } else { -1.0 };
            examples.push(labeled(&format!("e{i}"), vec![i as f64], label));
        }
        let ds = dataset(examples);
        let m = Model::from_weights(ModelKind::RidgeLogistic, vec![0.0], 0.0);
        assert_relative_eq!(accuracy(&m, &ds, 0.5).unwrap(), 0.5);
    }

    #[test]
    fn accuracy_on_empty_dataset_is_an_error() {
        let ds = ConceptDataset::new(1);
        let m = Model::from_weights(ModelKind::RidgeLogistic, vec![0.0], 0.0);
        assert!(matches!(accuracy(&m, &ds, 0.5), Err(Error::EmptyDataset)));
    }

    #[test]
    fn finetune_with_zero_effective_epochs_keeps_weights() {
        let ds = dataset(vec![
            labeled("p", vec![1.0], 1.0),
            labeled("n", vec![-1.0], -1.0),
        ]);
        let m = train(&ds, &TrainConfig::default(), ModelKind::RidgeLogistic).unwrap();
        // A learning rate so small the update is below noise, one epoch.
        let cfg = TrainConfig {
            learning_rate: 1e-300,
            epochs: 1,
            ..TrainConfig::default()
        };
        let m2 = finetune(&m, &ds, &cfg).unwrap();
        for (a, b) in m.weights.iter().zip(m2.weights.iter()) {
            assert_relative_eq!(a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn finetune_on_high_margin_points_keeps_old_accuracy() {
        let old = dataset(vec![
            labeled("a", vec![3.0, 0.0], 1.0),
            labeled("b", vec![-3.0, 0.0], -1.0),
            labeled("c", vec![2.5, 0.5], 1.0),
            labeled("d", vec![-2.5, -0.5], -1.0),
        ]);
        let m = train(&old, &TrainConfig::default(), ModelKind::RidgeLogistic).unwrap();
        assert_relative_eq!(accuracy(&m, &old, 0.5).unwrap(), 1.0);
        // new points the model already classifies with large margin
        let new = dataset(vec![
            labeled("e", vec![4.0, 0.0], 1.0),
            labeled("f", vec![-4.0, 0.0], -1.0),
        ]);
        let cfg = TrainConfig {
            learning_rate: 1e-4,
            epochs: 10,
            ..TrainConfig::default()
        };
        let m2 = finetune(&m, &new, &cfg).unwrap();
        assert_relative_eq!(accuracy(&m2, &old, 0.5).unwrap(), 1.0);
    }

    #[test]
    fn warm_start_matches_cold_start_accuracy() {
        // seeded synthetic task: two shifted blobs with deterministic grid points
        let mut old_examples = Vec::new();
        let mut all = Vec::new();
        for i in 0..20 {
            let t = i as f64 / 10.0 - 1.0;
            old_examples.push(labeled(&format!("o{i}"), vec![2.0 + t, t], 1.0));
            old_examples.push(labeled(&format!("on{i}"), vec![-2.0 + t, -t], -1.0));
        }
        all.extend(old_examples.clone());
        for i in 0..10 {
            let t = i as f64 / 5.0 - 1.0;
            all.push(labeled(&format!("x{i}"), vec![1.5 - t, 2.0 + t], 1.0));
            all.push(labeled(&format!("xn{i}"), vec![-1.5 + t, -2.0 - t], -1.0));
        }
        let old_ds = dataset(old_examples);
        let union = dataset(all);
        let cfg = TrainConfig::default();
        let cold = train(&union, &cfg, ModelKind::RidgeLogistic).unwrap();
        let warm_base = train(&old_ds, &cfg, ModelKind::RidgeLogistic).unwrap();
        let warm = finetune(&warm_base, &union, &cfg).unwrap();
        let ac = accuracy(&cold, &union, 0.5).unwrap();
        let aw = accuracy(&warm, &union, 0.5).unwrap();
        assert!((ac - aw).abs() <= 0.02, "cold {ac} vs warm {aw}");
    }

    #[test]
    fn gradient_matches_central_differences() {
        let xs_owned = vec![
            vec![0.3, -1.2, 0.7],
            vec![1.1, 0.4, -0.2],
            vec![-0.8, 0.9, 1.5],
            vec![0.0, -0.3, -1.0],
        ];
        let xs: Vec<&[f64]> = xs_owned.iter().map(|v| v.as_slice()).collect();
        let labels = [1.0, -1.0, 1.0, -1.0];
        let w = [0.25, -0.75, 0.5];
        let b = 0.1;
        let l2 = 0.05;
        let (_, grad_w, grad_b) = logistic_loss_grad(&w, b, &xs, &labels, l2);
        let h = 1e-5;
        for i in 0..w.len() {
            let mut wp = w.to_vec();
            let mut wm = w.to_vec();
            wp[i] += h;
            wm[i] -= h;
            let (lp, _, _) = logistic_loss_grad(&wp, b, &xs, &labels, l2);
            let (lm, _, _) = logistic_loss_grad(&wm, b, &xs, &labels, l2);
            let fd = (lp - lm) / (2.0 * h);
            let rel = (grad_w[i] - fd).abs() / fd.abs().max(1e-8);
            assert!(rel < 1e-4, "weight {i}: analytic {} vs fd {fd}", grad_w[i]);
        }
        let (lp, _, _) = logistic_loss_grad(&w, b + h, &xs, &labels, l2);
        let (lm, _, _) = logistic_loss_grad(&w, b - h, &xs, &labels, l2);
        let fd = (lp - lm) / (2.0 * h);
        assert!((grad_b - fd).abs() / fd.abs().max(1e-8) < 1e-4);
    }

    #[test]
    fn stronger_l2_never_grows_the_weights() {
        let ds = dataset(vec![
            labeled("a", vec![1.0, 0.4], 1.0),
            labeled("b", vec![0.9, -0.2], 1.0),
            labeled("c", vec![-1.1, 0.1], -1.0),
            labeled("d", vec![-0.8, -0.4], -1.0),
        ]);
        let mut last_norm = f64::INFINITY;
        for &l2 in &[1e-4, 1e-3, 1e-2, 1e-1, 1.0] {
            let cfg = TrainConfig {
                l2_penalty: l2,
                epochs: 5000,
                ..TrainConfig::default()
            };
            let m = train(&ds, &cfg, ModelKind::RidgeLogistic).unwrap();
            let norm = m.weights.iter().map(|w| w * w).sum::<f64>().sqrt();
            assert!(
                norm <= last_norm + 1e-9,
                "norm grew from {last_norm} to {norm} at l2 {l2}"
            );
            last_norm = norm;
        }
    }

    #[test]
    fn unlabeled_example_is_an_error() {
        let mut ds = ConceptDataset::new(1);
        ds.push(Example::new("u", vec![1.0], 1)).unwrap();
        assert!(matches!(
            train(&ds, &TrainConfig::default(), ModelKind::RidgeLogistic),
            Err(Error::UnlabeledExample { .. })
        ));
    }
}
