use serde::{Deserialize, Serialize};

use super::config::{LossKind, NetConfig, OptimizerKind};
use super::layers::Param;
use super::network::{softmax, Network, OutputKind};
use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::features::FeatureMatrix;
use crate::rng::Rng;

/// Mean squared error over all elements and its gradient.
pub fn mse_loss(output: &Tensor, target: &Tensor) -> (f64, Tensor) {
    assert!(output.same_shape(target), "mse shapes differ");
    let n = output.data.len().max(1) as f64;
    let mut grad = output.clone();
    let mut loss = 0.0;
    for (g, t) in grad.data.iter_mut().zip(&target.data) {
        let d = *g - t;
        loss += d * d;
        *g = 2.0 * d / n;
    }
    (loss / n, grad)
}

/// Softmax cross-entropy averaged over the batch, with its logit gradient.
pub fn cross_entropy_loss(logits: &Tensor, labels: &[usize]) -> (f64, Tensor) {
    let width = logits.sample_len();
    assert_eq!(labels.len(), logits.batch, "one label per sample");
    let b = logits.batch.max(1) as f64;
    let mut grad = logits.clone();
    let mut loss = 0.0;
    for (i, &y) in labels.iter().enumerate() {
        let p = softmax(logits.sample(i));
        loss -= p[y].max(f64::MIN_POSITIVE).ln();
        for (k, pk) in p.iter().enumerate() {
            grad.data[i * width + k] = (pk - if k == y { 1.0 } else { 0.0 }) / b;
        }
    }
    (loss / b, grad)
}

/// Adds `l2 · w` to the gradients of decaying parameters.
pub fn apply_l2(params: &mut [&mut Param], l2: f64) {
    if l2 == 0.0 {
        return;
    }
    for p in params.iter_mut().filter(|p| p.decay) {
        for (g, w) in p.grad.iter_mut().zip(&p.value) {
            *g += l2 * w;
        }
    }
}

#[derive(Debug, Clone)]
pub struct Optimizer {
    kind: OptimizerKind,
    learning_rate: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    steps: u64,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, learning_rate: f64) -> Self {
        Self {
            kind,
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            steps: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    /// One update from the accumulated gradients.
    pub fn step(&mut self, params: &mut [&mut Param]) {
        self.steps += 1;
        let lr = self.learning_rate;
        match self.kind {
            OptimizerKind::Sgd => {
                for p in params.iter_mut() {
                    for (w, g) in p.value.iter_mut().zip(&p.grad) {
                        *w -= lr * g;
                    }
                }
            }
            OptimizerKind::Adam => {
                let t = self.steps as i32;
                let c1 = 1.0 - self.beta1.powi(t);
                let c2 = 1.0 - self.beta2.powi(t);
                for p in params.iter_mut() {
                    let n = p.value.len();
                    if p.first_moment.len() != n {
                        p.first_moment = vec![0.0; n];
                        p.second_moment = vec![0.0; n];
                    }
                    for i in 0..n {
                        let g = p.grad[i];
                        let m = self.beta1 * p.first_moment[i] + (1.0 - self.beta1) * g;
                        let v = self.beta2 * p.second_moment[i] + (1.0 - self.beta2) * g * g;
                        p.first_moment[i] = m;
                        p.second_moment[i] = v;
                        p.value[i] -= lr * (m / c1) / ((v / c2).sqrt() + self.eps);
                    }
                }
            }
        }
    }
}

/// What the network output is compared with.
#[derive(Debug, Clone, Copy)]
pub enum Targets<'a> {
    /// Reconstruct the (clean) input.
    Reconstruction,
    Classes(&'a [usize]),
}

#[derive(Debug, Clone, Copy)]
pub struct Samples<'a> {
    pub inputs: &'a FeatureMatrix,
    pub targets: Targets<'a>,
}

impl<'a> Samples<'a> {
    pub fn reconstruction(inputs: &'a FeatureMatrix) -> Self {
        Self { inputs, targets: Targets::Reconstruction }
    }

    /// Class targets taken from the matrix labels.
    pub fn classes(inputs: &'a FeatureMatrix) -> Self {
        Self { inputs, targets: Targets::Classes(inputs.labels()) }
    }

    fn len(&self) -> usize {
        self.inputs.n_rows()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct History {
    pub train_loss: Vec<f64>,
    pub val_loss: Vec<f64>,
    /// Zero-based epoch whose parameters were kept.
    pub best_epoch: usize,
}

impl History {
    pub fn epochs_run(&self) -> usize {
        self.train_loss.len()
    }
}

fn batch_loss(net_out: &Tensor, x: &Tensor, samples: &Samples, idx: &[usize], loss: LossKind) -> (f64, Tensor) {
    match (samples.targets, loss) {
        (Targets::Classes(labels), LossKind::CategoricalCrossEntropy) => {
            let y: Vec<usize> = idx.iter().map(|&i| labels[i]).collect();
            cross_entropy_loss(net_out, &y)
        }
        (Targets::Reconstruction, LossKind::Mse) => mse_loss(net_out, x),
        _ => unreachable!("checked by check_compatible"),
    }
}

fn check_compatible(net: &Network, samples: &Samples, loss: LossKind) -> Result<()> {
    let ok = matches!(
        (net.output_kind(), samples.targets, loss),
        (OutputKind::Softmax, Targets::Classes(_), LossKind::CategoricalCrossEntropy)
            | (OutputKind::Linear, Targets::Reconstruction, LossKind::Mse)
    );
    if !ok {
        return Err(Error::InvalidConfig(format!(
            "{loss:?} loss does not fit a {:?} network with these targets",
            net.output_kind()
        )));
    }
    if samples.inputs.n_cols() != net.input_width() {
        return Err(Error::DimMismatch {
            expected: net.input_width(),
            found: samples.inputs.n_cols(),
        });
    }
    if let Targets::Classes(labels) = samples.targets {
        if labels.len() != samples.len() {
            return Err(Error::LengthMismatch { expected: samples.len(), found: labels.len() });
        }
        let classes = net.blueprint().output_shape()?.0;
        if let Some(&bad) = labels.iter().find(|&&l| l >= classes) {
            return Err(Error::InvalidConfig(format!("label {bad} exceeds {classes} network outputs")));
        }
    }
    Ok(())
}

/// Mean loss in inference mode.
pub fn evaluate_loss(net: &Network, samples: &Samples, loss: LossKind) -> Result<f64> {
    check_compatible(net, samples, loss)?;
    let idx: Vec<usize> = (0..samples.len()).collect();
    let mut total = 0.0;
    for chunk in idx.chunks(64) {
        let x = Tensor::from_rows(samples.inputs, chunk, net.input_shape().0)?;
        let (l, _) = batch_loss(&net.infer(&x), &x, samples, chunk, loss);
        total += l * chunk.len() as f64;
    }
    Ok(total / samples.len().max(1) as f64)
}

/// Mini-batch training with early stopping on the validation loss.
///
/// Training stops once more than `patience` consecutive epochs fail to
/// improve the best validation loss; the best parameters are returned.
/// An empty validation set monitors the training loss instead.
pub fn train_network(
    mut net: Network,
    train: Samples,
    validation: Samples,
    config: &NetConfig,
    rng: &mut Rng,
) -> Result<(Network, History)> {
    config.validate()?;
    if train.len() == 0 {
        return Err(Error::EmptyTrainSet);
    }
    check_compatible(&net, &train, config.loss)?;
    if validation.len() > 0 {
        check_compatible(&net, &validation, config.loss)?;
    }
    let channels = net.input_shape().0;
    let mut optimizer = Optimizer::new(config.optimizer, config.learning_rate);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut history = History { train_loss: Vec::new(), val_loss: Vec::new(), best_epoch: 0 };
    let mut best: Option<(f64, Network)> = None;
    let mut stale = 0usize;

    for epoch in 0..config.epochs {
        rng.shuffle(&mut order);
        let mut total = 0.0;
        for idx in order.chunks(config.batch_size) {
            let clean = Tensor::from_rows(train.inputs, idx, channels)?;
            let mut x = clean.clone();
            if config.input_noise_std > 0.0 {
                for v in &mut x.data {
                    *v += config.input_noise_std * rng.normal();
                }
            }
            let out = net.forward_train(&x);
            let (loss, grad) = batch_loss(&out, &clean, &train, idx, config.loss);
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss { epoch, train_loss: loss });
            }
            total += loss * idx.len() as f64;
            net.zero_grad();
            net.backward(&grad);
            let mut params = net.params_mut();
            apply_l2(&mut params, config.l2);
            optimizer.step(&mut params);
        }
        net.clear_cache();
        let train_loss = total / train.len() as f64;
        let val_loss = if validation.len() > 0 {
            evaluate_loss(&net, &validation, config.loss)?
        } else {
            train_loss
        };
        if !val_loss.is_finite() {
            return Err(Error::NonFiniteLoss { epoch, train_loss });
        }
        log::debug!("epoch {epoch}: train {train_loss:.6} val {val_loss:.6}");
        history.train_loss.push(train_loss);
        history.val_loss.push(val_loss);
        if best.as_ref().is_none_or(|(b, _)| val_loss < *b) {
            best = Some((val_loss, net.clone()));
            history.best_epoch = epoch;
            stale = 0;
        } else {
            stale += 1;
            if stale > config.patience {
                break;
            }
        }
    }
    let (_, best_net) = best.expect("at least one epoch");
    Ok((best_net, history))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn param(v: &[f64]) -> Param {
        Param::new(v.to_vec(), true)
    }

    #[test]
    fn sgd_step_on_half_squared_norm() {
        let w0 = [1.5, -2.0, 0.25];
        let mut p = param(&w0);
        p.grad = p.value.clone();
        let mut opt = Optimizer::new(OptimizerKind::Sgd, 0.1);
        opt.step(&mut [&mut p]);
        for (a, b) in p.value.iter().zip(w0) {
            assert!((a - 0.9 * b).abs() < 1e-15);
        }
    }

    #[test]
    fn optimizers_reach_quadratic_minimizer() {
        let target = [3.0, -1.0, 0.5];
        let curvature = [1.0, 4.0, 0.5];
        for (kind, lr, steps) in [(OptimizerKind::Sgd, 0.2, 2000), (OptimizerKind::Adam, 0.01, 20000)] {
            let mut p = param(&[0.0; 3]);
            let mut opt = Optimizer::new(kind, lr);
            for _ in 0..steps {
                p.grad = (0..3).map(|i| curvature[i] * (p.value[i] - target[i])).collect();
                opt.step(&mut [&mut p]);
            }
            for (w, t) in p.value.iter().zip(target) {
                assert!((w - t).abs() < 1e-6, "{kind:?}: {w} vs {t}");
            }
        }
    }

    #[test]
    fn zero_l2_leaves_gradients_untouched() {
        let mut p = param(&[1.0, 2.0]);
        p.grad = vec![0.3, -0.7];
        let before = p.grad.clone();
        apply_l2(&mut [&mut p], 0.0);
        assert_eq!(p.grad, before);
        apply_l2(&mut [&mut p], 0.5);
        let want = [0.3 + 0.5 * 1.0, -0.7 + 0.5 * 2.0];
        assert!(p.grad.iter().zip(want).all(|(g, w)| (g - w).abs() < 1e-15));
    }

    #[test]
    fn cross_entropy_is_shift_invariant() {
        let a = Tensor::from_vec(vec![1.0, 2.0, 0.5], 1, 3, 1).unwrap();
        let b = Tensor::from_vec(vec![101.0, 102.0, 100.5], 1, 3, 1).unwrap();
        let (la, ga) = cross_entropy_loss(&a, &[1]);
        let (lb, gb) = cross_entropy_loss(&b, &[1]);
        assert!((la - lb).abs() < 1e-12);
        for (x, y) in ga.data.iter().zip(&gb.data) {
            assert!((x - y).abs() < 1e-12);
        }
    }
}
