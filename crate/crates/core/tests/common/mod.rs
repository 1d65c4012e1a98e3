#![allow(dead_code)]

use nilm_core::nn::{cross_entropy_loss, mse_loss, BatchNorm, Conv1d, Dense, Layer, LeakyRelu, MaxPool, Tensor, Upsample};
use nilm_core::Rng;

pub const STEP: f64 = 1e-5;

/// `‖a − b‖ / (‖a‖ + ‖b‖)`, zero when both vanish.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let norm = a.iter().map(|x| x * x).sum::<f64>().sqrt() + b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 {
        0.0
    } else {
        diff / norm
    }
}

pub fn random_tensor(rng: &mut Rng, batch: usize, channels: usize, len: usize) -> Tensor {
    let data = (0..batch * channels * len).map(|_| rng.normal()).collect();
    Tensor::from_vec(data, batch, channels, len).unwrap()
}

fn projected(layer: &mut Layer, x: &Tensor, r: &[f64]) -> f64 {
    layer.forward_train(x).data.iter().zip(r).map(|(a, b)| a * b).sum()
}

/// Worst relative error between analytic and central-difference gradients
/// of `r · layer(x)` with respect to the input and every parameter.
pub fn layer_gradient_error(mut layer: Layer, x: &Tensor, rng: &mut Rng) -> f64 {
    let out = layer.forward_train(x);
    let r: Vec<f64> = (0..out.data.len()).map(|_| rng.normal()).collect();
    let grad_out = Tensor::from_vec(r.clone(), out.batch, out.channels, out.len).unwrap();
    layer.params_mut().into_iter().for_each(|p| p.zero_grad());
    let analytic_x = layer.backward(&grad_out).data;
    let analytic_p: Vec<Vec<f64>> = layer.params().iter().map(|p| p.grad.clone()).collect();

    let mut numeric_x = vec![0.0; x.data.len()];
    let mut probe = x.clone();
    for i in 0..x.data.len() {
        probe.data[i] = x.data[i] + STEP;
        let up = projected(&mut layer, &probe, &r);
        probe.data[i] = x.data[i] - STEP;
        let down = projected(&mut layer, &probe, &r);
        probe.data[i] = x.data[i];
        numeric_x[i] = (up - down) / (2.0 * STEP);
    }
    let mut worst = relative_error(&analytic_x, &numeric_x);

    for (k, analytic) in analytic_p.iter().enumerate() {
        let mut numeric = vec![0.0; analytic.len()];
        for i in 0..analytic.len() {
            let orig = layer.params()[k].value[i];
            layer.params_mut()[k].value[i] = orig + STEP;
            let up = projected(&mut layer, x, &r);
            layer.params_mut()[k].value[i] = orig - STEP;
            let down = projected(&mut layer, x, &r);
            layer.params_mut()[k].value[i] = orig;
            numeric[i] = (up - down) / (2.0 * STEP);
        }
        worst = worst.max(relative_error(analytic, &numeric));
    }
    worst
}

/// Every layer type on random small shapes, for one seed.
pub fn layer_cases(seed: u64) -> Vec<(&'static str, f64)> {
    let mut rng = Rng::new(seed);
    let mut out = Vec::new();
    let x = random_tensor(&mut rng, 3, 2, 6);
    let l = Layer::Dense(Dense::new(12, 4, &mut rng));
    out.push(("dense", layer_gradient_error(l, &x, &mut rng)));

    let kernel = [1, 3, 5][rng.below(3)];
    let x = random_tensor(&mut rng, 2, 3, 7);
    let l = Layer::Conv1d(Conv1d::new(3, 2, kernel, &mut rng));
    out.push(("conv1d", layer_gradient_error(l, &x, &mut rng)));

    let x = random_tensor(&mut rng, 2, 2, 6);
    out.push(("max_pool", layer_gradient_error(Layer::MaxPool(MaxPool::new(3)), &x, &mut rng)));

    let x = random_tensor(&mut rng, 2, 2, 3);
    out.push(("upsample", layer_gradient_error(Layer::Upsample(Upsample { factor: 2 }), &x, &mut rng)));

    let x = random_tensor(&mut rng, 4, 3, 5);
    let mut bn = BatchNorm::new(3);
    bn.gamma.value = (0..3).map(|_| 0.5 + rng.uniform()).collect();
    bn.beta.value = (0..3).map(|_| rng.normal()).collect();
    out.push(("batch_norm", layer_gradient_error(Layer::BatchNorm(bn), &x, &mut rng)));

    let x = random_tensor(&mut rng, 2, 2, 5);
    out.push(("leaky_relu", layer_gradient_error(Layer::LeakyRelu(LeakyRelu::new(0.01)), &x, &mut rng)));

    out.push(("mse_loss", mse_gradient_error(&mut rng)));
    out.push(("cross_entropy_loss", cross_entropy_gradient_error(&mut rng)));
    out
}

fn numeric_gradient(x: &Tensor, f: impl Fn(&Tensor) -> f64) -> Vec<f64> {
    let mut probe = x.clone();
    (0..x.data.len())
        .map(|i| {
            probe.data[i] = x.data[i] + STEP;
            let up = f(&probe);
            probe.data[i] = x.data[i] - STEP;
            let down = f(&probe);
            probe.data[i] = x.data[i];
            (up - down) / (2.0 * STEP)
        })
        .collect()
}

pub fn mse_gradient_error(rng: &mut Rng) -> f64 {
    let y = random_tensor(rng, 3, 2, 4);
    let t = random_tensor(rng, 3, 2, 4);
    let (_, g) = mse_loss(&y, &t);
    relative_error(&g.data, &numeric_gradient(&y, |p| mse_loss(p, &t).0))
}

pub fn cross_entropy_gradient_error(rng: &mut Rng) -> f64 {
    let z = random_tensor(rng, 4, 5, 1);
    let labels: Vec<usize> = (0..4).map(|_| rng.below(5)).collect();
    let (_, g) = cross_entropy_loss(&z, &labels);
    relative_error(&g.data, &numeric_gradient(&z, |p| cross_entropy_loss(p, &labels).0))
}

/// Cyclic Jacobi eigen-decomposition of a symmetric matrix.
/// Returns eigenvalues descending with eigenvectors as columns of `v`.
pub fn jacobi_eigen(a: &[Vec<f64>]) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = a.len();
    let mut a: Vec<Vec<f64>> = a.to_vec();
    let mut v: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect();
    for _sweep in 0..100 {
        let off: f64 = (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j))).map(|(i, j)| a[i][j].powi(2)).sum();
        let total: f64 = a.iter().flatten().map(|x| x * x).sum();
        if off <= 1e-30 * total.max(1e-300) {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[k][p], a[k][q]);
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[p][k], a[q][k]);
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
                for row in v.iter_mut() {
                    let (vp, vq) = (row[p], row[q]);
                    row[p] = c * vp - s * vq;
                    row[q] = s * vp + c * vq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[j][j].total_cmp(&a[i][i]));
    let values = order.iter().map(|&i| a[i][i]).collect();
    let vectors = (0..n).map(|r| order.iter().map(|&i| v[r][i]).collect()).collect();
    (values, vectors)
}

/// Column means and the `n − 1` covariance of `rows`.
pub fn covariance(rows: &[Vec<f64>]) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = rows.len();
    let d = rows[0].len();
    let mean: Vec<f64> = (0..d).map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / n as f64).collect();
    let mut cov = vec![vec![0.0; d]; d];
    for r in rows {
        for i in 0..d {
            for j in 0..d {
                cov[i][j] += (r[i] - mean[i]) * (r[j] - mean[j]);
            }
        }
    }
    let denom = (n - 1) as f64;
    cov.iter_mut().flatten().for_each(|x| *x /= denom);
    (mean, cov)
}

/// Worst deviation of `fit_pca` from the Jacobi oracle (explained variances
/// and reconstructions) on a random `n × d` matrix with `k` components.
pub fn pca_oracle_error(rng: &mut Rng, n: usize, d: usize, k: usize) -> f64 {
    use nilm_core::transform::fit_pca;
    use nilm_core::FeatureMatrix;
    let scales: Vec<f64> = (0..d).map(|_| 0.5 + 3.0 * rng.uniform()).collect();
    let rows: Vec<Vec<f64>> = (0..n).map(|_| scales.iter().map(|s| s * rng.normal() + 1.0).collect()).collect();
    let m = FeatureMatrix::from_rows(&rows).unwrap();
    let pca = fit_pca(&m, k).unwrap();
    let (mean, cov) = covariance(&rows);
    let (values, vectors) = jacobi_eigen(&cov);
    let mut worst: f64 = 0.0;
    for (got, want) in pca.explained_variances().iter().zip(&values) {
        worst = worst.max((got - want).abs() / want.abs().max(1.0));
    }
    for row in &rows {
        let centered: Vec<f64> = row.iter().zip(&mean).map(|(x, m)| x - m).collect();
        let mut want = mean.clone();
        for c in 0..k {
            let coef: f64 = (0..d).map(|j| vectors[j][c] * centered[j]).sum();
            for j in 0..d {
                want[j] += coef * vectors[j][c];
            }
        }
        let got = pca.reconstruct_row(&pca.project_row(row));
        for (g, w) in got.iter().zip(&want) {
            worst = worst.max((g - w).abs() / w.abs().max(1.0));
        }
    }
    worst
}

/// Random (n, d, k) for the PCA oracle, up to 30 × 10.
pub fn pca_case(rng: &mut Rng) -> (usize, usize, usize) {
    let n = 2 + rng.below(29);
    let d = 1 + rng.below(10);
    let k = 1 + rng.below((n - 1).min(d));
    (n, d, k)
}

/// Piecewise-constant power trace with noise and occasional spikes.
pub fn random_trace(rng: &mut Rng) -> nilm_core::ingest::PowerSeries {
    let n = 20 + rng.below(300);
    let mut level = 0.0;
    let power = (0..n)
        .map(|_| {
            if rng.uniform() < 0.1 {
                level = if rng.uniform() < 0.4 { 0.0 } else { 3000.0 * rng.uniform() };
            }
            let spike = if rng.uniform() < 0.02 { 2000.0 * rng.normal() } else { 0.0 };
            (level + 5.0 * rng.normal() + spike).max(0.0)
        })
        .collect();
    nilm_core::ingest::PowerSeries::uniform(100.0 * rng.uniform(), 6.0, power).unwrap()
}

/// Checks alternation, strictly increasing timestamps and that raising the
/// ON threshold never adds ON events.
pub fn event_properties_hold(rng: &mut Rng) -> Result<(), String> {
    use nilm_core::events::{detect_events, EventKind, EventThresholds};
    let series = random_trace(rng);
    let off = 1000.0 * rng.uniform();
    let on = off + 1.0 + 1500.0 * rng.uniform();
    let th = EventThresholds::new(on, off).unwrap();
    let events = detect_events(&series, &th);
    if events.first().is_some_and(|e| e.kind != EventKind::On) {
        return Err("first event is not ON".into());
    }
    if events.windows(2).any(|w| w[0].kind == w[1].kind) {
        return Err("kinds do not alternate".into());
    }
    if events.windows(2).any(|w| w[1].timestamp <= w[0].timestamp) {
        return Err("timestamps not strictly increasing".into());
    }
    let ons = |evs: &[nilm_core::events::DetectedEvent]| evs.iter().filter(|e| e.kind == EventKind::On).count();
    let higher = EventThresholds::new(on + 500.0 * rng.uniform(), off).unwrap();
    if ons(&detect_events(&series, &higher)) > ons(&events) {
        return Err(format!("raising the ON threshold above {on} added events"));
    }
    Ok(())
}

/// Per-class (precision, recall, F) by explicit counting, plus macro F.
pub fn naive_metrics(truth: &[usize], pred: &[usize], n_classes: usize) -> (Vec<(f64, f64, f64)>, f64) {
    let mut per = Vec::new();
    for c in 0..n_classes {
        let mut tp = 0.0;
        let mut fp = 0.0;
        let mut fn_ = 0.0;
        for i in 0..truth.len() {
            match (truth[i] == c, pred[i] == c) {
                (true, true) => tp += 1.0,
                (false, true) => fp += 1.0,
                (true, false) => fn_ += 1.0,
                (false, false) => {}
            }
        }
        let pr = if tp + fp > 0.0 { tp / (tp + fp) } else { 0.0 };
        let re = if tp + fn_ > 0.0 { tp / (tp + fn_) } else { 0.0 };
        let f = if pr + re > 0.0 { 2.0 * pr * re / (pr + re) } else { 0.0 };
        per.push((pr, re, f));
    }
    let macro_f = per.iter().map(|p| p.2).sum::<f64>() / n_classes as f64;
    (per, macro_f)
}

/// Worst deviation of `macro_metrics` from the naive oracle on a random
/// label vector.
pub fn metric_oracle_error(rng: &mut Rng) -> f64 {
    let n_classes = 2 + rng.below(6);
    let n = 1 + rng.below(60);
    let truth: Vec<usize> = (0..n).map(|_| rng.below(n_classes)).collect();
    let pred: Vec<usize> = truth
        .iter()
        .map(|&t| if rng.uniform() < 0.6 { t } else { rng.below(n_classes) })
        .collect();
    let got = nilm_core::eval::macro_metrics(&truth, &pred, n_classes).unwrap();
    let (want, want_macro) = naive_metrics(&truth, &pred, n_classes);
    let mut worst = (got.f_score - want_macro).abs();
    for (g, w) in got.per_class.iter().zip(&want) {
        worst = worst.max((g.precision - w.0).abs()).max((g.recall - w.1).abs()).max((g.f_score - w.2).abs());
    }
    worst
}
