use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use wivi_core::csi::{ActivityLabel, CsiSample};
use wivi_core::sim::{SkeletonHeatmap, HEATMAP_LEN, HEATMAP_SIDE};

use super::adam::{Adam, AdamConfig};
use super::data::batch_tensor;
use super::layers::{mse_loss, softmax_cross_entropy};
use super::net::{Cnn, NetConfig, Winn};
use super::tensor::{Param, Scalar, Tensor4};
use super::NnError;

/// Samples per inference chunk. Fixed so results never depend on thread count.
const INFER_CHUNK: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub loss: f64,
    pub train_acc: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainLog {
    pub epochs: Vec<EpochStats>,
}

impl TrainLog {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("epoch,loss,train_acc\n");
        for e in &self.epochs {
            s.push_str(&format!("{},{:.6e},{:.6}\n", e.epoch, e.loss, e.train_acc));
        }
        s
    }

    pub fn last(&self) -> Option<&EpochStats> {
        self.epochs.last()
    }
}

trait Trainable<T: Scalar> {
    fn forward_train(&mut self, x: &Tensor4<T>) -> Result<Tensor4<T>, NnError>;
    fn backward(&mut self, dy: &Tensor4<T>) -> Result<Tensor4<T>, NnError>;
    fn params_mut(&mut self) -> Vec<&mut Param<T>>;
}

impl<T: Scalar> Trainable<T> for Cnn<T> {
    fn forward_train(&mut self, x: &Tensor4<T>) -> Result<Tensor4<T>, NnError> {
        Cnn::forward_train(self, x)
    }
    fn backward(&mut self, dy: &Tensor4<T>) -> Result<Tensor4<T>, NnError> {
        Cnn::backward(self, dy)
    }
    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        Cnn::params_mut(self)
    }
}

impl<T: Scalar> Trainable<T> for Winn<T> {
    fn forward_train(&mut self, x: &Tensor4<T>) -> Result<Tensor4<T>, NnError> {
        Winn::forward_train(self, x)
    }
    fn backward(&mut self, dy: &Tensor4<T>) -> Result<Tensor4<T>, NnError> {
        Winn::backward(self, dy)
    }
    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        Winn::params_mut(self)
    }
}

/// Per-batch objective: output and batch indices → (mean loss, ∂loss/∂output,
/// correct predictions counted in samples).
type Objective<'a, T> = dyn FnMut(&Tensor4<T>, &[usize]) -> Result<(f64, Vec<T>, f64), NnError> + 'a;

fn fit<T: Scalar, N: Trainable<T>>(
    net: &mut N,
    cfg: &NetConfig,
    samples: &[CsiSample],
    objective: &mut Objective<'_, T>,
    progress: &mut dyn FnMut(&EpochStats),
) -> Result<TrainLog, NnError> {
    let adam_cfg = AdamConfig {
        lr: cfg.lr,
        weight_decay: cfg.weight_decay,
        ..AdamConfig::default()
    };
    let mut opt = Adam::new(adam_cfg, &net.params_mut());
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(7);
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut log = TrainLog::default();
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let (mut loss_sum, mut seen, mut hits) = (0.0, 0usize, 0.0);
        for idx in order.chunks(cfg.batch) {
            // a single-sample batch has no batch statistics to normalize with
            if idx.len() < 2 {
                continue;
            }
            let x = batch_tensor::<T>(samples, idx, cfg.input_side, cfg.input_channels)?;
            let out = net.forward_train(&x)?;
            let (loss, grad, h) = objective(&out, idx)?;
            if !loss.is_finite() {
                return Err(NnError::NonFinite);
            }
            let dy = Tensor4::from_vec(out.dims(), grad)?;
            let mut params = net.params_mut();
            params.iter_mut().for_each(|p| p.zero_grad());
            drop(params);
            net.backward(&dy)?;
            opt.step(&mut net.params_mut())?;
            loss_sum += loss * idx.len() as f64;
            seen += idx.len();
            hits += h;
        }
        let stats = EpochStats {
            epoch,
            loss: loss_sum / seen.max(1) as f64,
            train_acc: hits / seen.max(1) as f64,
        };
        progress(&stats);
        log.epochs.push(stats);
    }
    Ok(log)
}

fn class_index(l: ActivityLabel) -> usize {
    l.id() as usize
}

fn argmax<T: Scalar>(row: &[T]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

fn check_labels(samples: &[CsiSample], cfg: &NetConfig) -> Result<Vec<usize>, NnError> {
    let labels: Vec<usize> = samples.iter().map(|s| class_index(s.label)).collect();
    if let Some(&bad) = labels.iter().find(|&&l| l >= cfg.num_classes) {
        return Err(NnError::Label(bad));
    }
    Ok(labels)
}

pub fn train_cnn(samples: &[CsiSample], cfg: &NetConfig) -> Result<(Cnn<f32>, TrainLog), NnError> {
    train_cnn_with(samples, cfg, &mut |_| {})
}

pub fn train_cnn_with<T: Scalar>(
    samples: &[CsiSample],
    cfg: &NetConfig,
    progress: &mut dyn FnMut(&EpochStats),
) -> Result<(Cnn<T>, TrainLog), NnError> {
    if samples.is_empty() {
        return Err(NnError::EmptySet);
    }
    let labels = check_labels(samples, cfg)?;
    let mut net = Cnn::new(cfg)?;
    let k = cfg.num_classes;
    let mut objective = |out: &Tensor4<T>, idx: &[usize]| {
        let y: Vec<usize> = idx.iter().map(|&i| labels[i]).collect();
        let (loss, grad) = softmax_cross_entropy(out.data(), k, &y)?;
        let hits = out.data().chunks(k).zip(&y).filter(|(r, &l)| argmax(r) == l).count();
        Ok((loss.as_f64(), grad, hits as f64))
    };
    let log = fit(&mut net, cfg, samples, &mut objective, progress)?;
    Ok((net, log))
}

fn chunked<R: Send>(
    n: usize,
    f: impl Fn(&[usize]) -> Result<Vec<R>, NnError> + Sync + Send,
) -> Result<Vec<R>, NnError> {
    let idx: Vec<usize> = (0..n).collect();
    let parts: Vec<Vec<R>> = idx.par_chunks(INFER_CHUNK).map(f).collect::<Result<_, _>>()?;
    Ok(parts.into_iter().flatten().collect())
}

/// Logits per sample, inference mode.
pub fn cnn_logits<T: Scalar>(model: &Cnn<T>, samples: &[CsiSample]) -> Result<Vec<Vec<T>>, NnError> {
    let cfg = &model.config;
    chunked(samples.len(), |idx| {
        let x = batch_tensor::<T>(samples, idx, cfg.input_side, cfg.input_channels)?;
        let out = model.forward(&x)?;
        Ok(out.data().chunks(cfg.num_classes).map(<[T]>::to_vec).collect())
    })
}

/// Argmax of the logits.
pub fn eval_cnn<T: Scalar>(model: &Cnn<T>, samples: &[CsiSample]) -> Result<Vec<ActivityLabel>, NnError> {
    if samples.is_empty() {
        return Err(NnError::EmptySet);
    }
    cnn_logits(model, samples)?
        .iter()
        .map(|r| ActivityLabel::from_id(argmax(r) as u8).ok_or(NnError::Label(argmax(r))))
        .collect()
}

/// Mean cross-entropy in inference mode.
pub fn cnn_mean_loss<T: Scalar>(model: &Cnn<T>, samples: &[CsiSample]) -> Result<f64, NnError> {
    if samples.is_empty() {
        return Err(NnError::EmptySet);
    }
    let labels = check_labels(samples, &model.config)?;
    let logits = cnn_logits(model, samples)?;
    let mut total = 0.0;
    for (row, &l) in logits.iter().zip(&labels) {
        total += softmax_cross_entropy(row, row.len(), &[l])?.0.as_f64();
    }
    Ok(total / samples.len() as f64)
}

fn peak_hits<T: Scalar>(pred: &[T], target: &[f64]) -> usize {
    let plane = HEATMAP_SIDE * HEATMAP_SIDE;
    (0..2)
        .filter(|&c| {
            let p = argmax(&pred[c * plane..(c + 1) * plane]);
            let t = argmax(&target[c * plane..(c + 1) * plane]);
            let (pr, pc) = (p / HEATMAP_SIDE, p % HEATMAP_SIDE);
            let (tr, tc) = (t / HEATMAP_SIDE, t % HEATMAP_SIDE);
            pr.abs_diff(tr) <= 1 && pc.abs_diff(tc) <= 1
        })
        .count()
}

pub fn train_winn(
    samples: &[CsiSample],
    targets: &[SkeletonHeatmap],
    cfg: &NetConfig,
) -> Result<(Winn<f32>, TrainLog), NnError> {
    train_winn_with(samples, targets, cfg, &mut |_| {})
}

/// Trains the skeleton decoder with MSE against `targets`. The logged
/// `train_acc` is the fraction of heatmap channels whose peak lands within
/// one cell of the target peak.
pub fn train_winn_with<T: Scalar>(
    samples: &[CsiSample],
    targets: &[SkeletonHeatmap],
    cfg: &NetConfig,
    progress: &mut dyn FnMut(&EpochStats),
) -> Result<(Winn<T>, TrainLog), NnError> {
    if samples.is_empty() {
        return Err(NnError::EmptySet);
    }
    if samples.len() != targets.len() {
        return Err(NnError::Misaligned {
            samples: samples.len(),
            targets: targets.len(),
        });
    }
    let mut net = Winn::new(cfg)?;
    let mut objective = |out: &Tensor4<T>, idx: &[usize]| {
        let mut t = Vec::with_capacity(idx.len() * HEATMAP_LEN);
        for &i in idx {
            t.extend(targets[i].values().iter().map(|&v| T::lit(v)));
        }
        let (loss, grad) = mse_loss(out.data(), &t)?;
        let hits: usize = idx
            .iter()
            .enumerate()
            .map(|(b, &i)| peak_hits(out.item(b), targets[i].values()))
            .sum();
        Ok((loss.as_f64(), grad, hits as f64 / 2.0))
    };
    let log = fit(&mut net, cfg, samples, &mut objective, progress)?;
    Ok((net, log))
}

/// Normalized `2×18×18` heatmaps, inference mode.
pub fn winn_heatmaps<T: Scalar>(model: &Winn<T>, samples: &[CsiSample]) -> Result<Vec<Vec<f64>>, NnError> {
    let cfg = &model.config;
    chunked(samples.len(), |idx| {
        let x = batch_tensor::<T>(samples, idx, cfg.input_side, cfg.input_channels)?;
        let out = model.forward(&x)?;
        Ok(out
            .data()
            .chunks(HEATMAP_LEN)
            .map(|r| r.iter().map(|v| v.as_f64()).collect())
            .collect())
    })
}

/// 648-element SVM feature: the flattened heatmap pair.
pub fn winn_features_for_svm<T: Scalar>(model: &Winn<T>, sample: &CsiSample) -> Result<Vec<f64>, NnError> {
    Ok(winn_heatmaps(model, std::slice::from_ref(sample))?.remove(0))
}

pub fn winn_mean_mse<T: Scalar>(
    model: &Winn<T>,
    samples: &[CsiSample],
    targets: &[SkeletonHeatmap],
) -> Result<f64, NnError> {
    if samples.len() != targets.len() {
        return Err(NnError::Misaligned {
            samples: samples.len(),
            targets: targets.len(),
        });
    }
    if samples.is_empty() {
        return Err(NnError::EmptySet);
    }
    let maps = winn_heatmaps(model, samples)?;
    let mut total = 0.0;
    for (m, t) in maps.iter().zip(targets) {
        total += m.iter().zip(t.values()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / HEATMAP_LEN as f64;
    }
    Ok(total / samples.len() as f64)
}
