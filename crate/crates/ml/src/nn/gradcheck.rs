//! Finite-difference checks of every layer's backward pass, in `f64`.
//!
//! Each case draws a random shape, evaluates a scalar loss (a fixed random
//! projection of the layer output, or the real loss for the heads) and compares
//! analytic gradients of the input and of every parameter tensor with central
//! differences on a random subset of coordinates.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::layers::{
    mse_loss, softmax_cross_entropy, BatchNorm2d, Conv2d, GlobalAvgPool, Linear, MaxPool2d, Relu, Resize,
    SpatialSoftmax,
};
use super::net::{BasicBlock, Cnn, NetConfig, Winn, WinnHead};
use super::tensor::{Param, Tensor4};
use super::NnError;

const STEP: f64 = 1e-5;
/// Coordinates probed per tensor.
const PROBES: usize = 24;

#[derive(Debug, Clone, PartialEq)]
pub struct GradReport {
    pub case: String,
    pub shape: String,
    /// Relative error of the input gradient.
    pub input_err: f64,
    /// Worst relative error over parameter tensors (0 when there are none).
    pub param_err: f64,
}

impl GradReport {
    pub fn max_err(&self) -> f64 {
        self.input_err.max(self.param_err)
    }
}

/// `‖a − n‖ / max(‖a‖ + ‖n‖, 1e-8)`. The floor sits just above the
/// central-difference noise, so exactly-zero gradients (a bias feeding a
/// softmax, say) do not read as large relative errors.
pub fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let diff: f64 = analytic.iter().zip(numeric).map(|(a, n)| (a - n).powi(2)).sum::<f64>().sqrt();
    let na: f64 = analytic.iter().map(|a| a * a).sum::<f64>().sqrt();
    let nn: f64 = numeric.iter().map(|a| a * a).sum::<f64>().sqrt();
    diff / (na + nn).max(1e-8)
}

fn random_tensor(dims: [usize; 4], rng: &mut ChaCha8Rng) -> Tensor4<f64> {
    let n = dims.iter().product();
    Tensor4::from_vec(dims, (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).expect("finite")
}

fn probes(len: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    if len <= PROBES {
        (0..len).collect()
    } else {
        (0..PROBES).map(|_| rng.random_range(0..len)).collect()
    }
}

/// Loss `Σ r ⊙ y` for fixed `r`; gradient is `r`.
fn dot_loss(y: &Tensor4<f64>, r: &[f64]) -> (f64, Tensor4<f64>) {
    let l = y.data().iter().zip(r).map(|(a, b)| a * b).sum();
    (l, Tensor4::from_vec(y.dims(), r.to_vec()).expect("finite"))
}

/// `eval(state, x, backward)` returns the loss and, when asked, `dL/dx` after
/// accumulating parameter gradients.
fn check<S>(
    case: &str,
    shape: String,
    state: &mut S,
    x: Tensor4<f64>,
    eval: impl Fn(&mut S, &Tensor4<f64>, bool) -> Result<(f64, Option<Tensor4<f64>>), NnError>,
    params: impl Fn(&mut S) -> Vec<&mut Param<f64>>,
    rng: &mut ChaCha8Rng,
) -> Result<GradReport, NnError> {
    params(state).into_iter().for_each(Param::zero_grad);
    let (_, dx) = eval(state, &x, true)?;
    let dx = dx.ok_or_else(|| NnError::Shape("missing input gradient".into()))?;
    let analytic_params: Vec<Vec<f64>> = params(state).iter().map(|p| p.grad.clone()).collect();

    let mut xp = x.clone();
    let (mut a, mut n) = (Vec::new(), Vec::new());
    for i in probes(x.data().len(), rng) {
        let orig = xp.data()[i];
        xp.data_mut()[i] = orig + STEP;
        let (lp, _) = eval(state, &xp, false)?;
        xp.data_mut()[i] = orig - STEP;
        let (lm, _) = eval(state, &xp, false)?;
        xp.data_mut()[i] = orig;
        a.push(dx.data()[i]);
        n.push((lp - lm) / (2.0 * STEP));
    }
    let input_err = relative_error(&a, &n);

    let mut param_err = 0.0f64;
    for (k, grad) in analytic_params.iter().enumerate() {
        let (mut a, mut n) = (Vec::new(), Vec::new());
        for i in probes(grad.len(), rng) {
            let orig = params(state)[k].value[i];
            params(state)[k].value[i] = orig + STEP;
            let (lp, _) = eval(state, &x, false)?;
            params(state)[k].value[i] = orig - STEP;
            let (lm, _) = eval(state, &x, false)?;
            params(state)[k].value[i] = orig;
            a.push(grad[i]);
            n.push((lp - lm) / (2.0 * STEP));
        }
        param_err = param_err.max(relative_error(&a, &n));
    }
    Ok(GradReport {
        case: case.to_string(),
        shape,
        input_err,
        param_err,
    })
}

/// Layer-style case: `fwd` runs the training forward pass, `bwd` the backward.
fn check_layer<L>(
    case: &str,
    layer: &mut L,
    x: Tensor4<f64>,
    fwd: impl Fn(&mut L, &Tensor4<f64>) -> Result<Tensor4<f64>, NnError>,
    bwd: impl Fn(&mut L, &Tensor4<f64>) -> Result<Tensor4<f64>, NnError>,
    params: impl Fn(&mut L) -> Vec<&mut Param<f64>>,
    rng: &mut ChaCha8Rng,
) -> Result<GradReport, NnError> {
    let y0 = fwd(layer, &x)?;
    let r: Vec<f64> = (0..y0.data().len()).map(|_| rng.random_range(-1.0..1.0)).collect();
    let shape = format!("{:?} -> {:?}", x.dims(), y0.dims());
    check(
        case,
        shape,
        layer,
        x,
        |l, x, back| {
            let y = fwd(l, x)?;
            let (loss, dy) = dot_loss(&y, &r);
            let dx = if back { Some(bwd(l, &dy)?) } else { None };
            Ok((loss, dx))
        },
        params,
        rng,
    )
}

pub const CASE_KINDS: [&str; 13] = [
    "conv2d",
    "batchnorm2d",
    "relu",
    "maxpool2d",
    "global_avg_pool",
    "linear",
    "resize",
    "spatial_softmax",
    "basic_block",
    "classifier_head",
    "decoder_head",
    "cnn",
    "winn",
];

/// Runs case `index` (kind `index % CASE_KINDS.len()`) with shapes drawn from `seed`.
pub fn run_case(index: usize, seed: u64) -> Result<GradReport, NnError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    let kind = CASE_KINDS[index % CASE_KINDS.len()];
    let b = rng.random_range(2..=3);
    let c = rng.random_range(1..=4);
    let h = rng.random_range(3..=7);
    let w = rng.random_range(3..=7);
    match kind {
        "conv2d" => {
            let k = [1, 3, 5][rng.random_range(0..3)];
            let stride = rng.random_range(1..=2);
            let pad = rng.random_range(0..=k / 2);
            let (h, w) = (h.max(k), w.max(k));
            let cout = rng.random_range(1..=4);
            let bias = rng.random_bool(0.5);
            let mut l = Conv2d::<f64>::new(c, cout, k, stride, pad, bias, &mut rng);
            let x = random_tensor([b, c, h, w], &mut rng);
            check_layer(
                &format!("conv2d k{k} s{stride} p{pad}"),
                &mut l,
                x,
                |l, x| l.forward_train(x),
                |l, d| l.backward(d),
                |l| l.params_mut(),
                &mut rng,
            )
        }
        "batchnorm2d" => {
            let mut l = BatchNorm2d::<f64>::new(c);
            for (g, bb) in l.gamma.value.iter_mut().zip(l.beta.value.iter_mut()) {
                *g = rng.random_range(0.5..1.5);
                *bb = rng.random_range(-0.5..0.5);
            }
            let x = random_tensor([b, c, h, w], &mut rng);
            check_layer(kind, &mut l, x, |l, x| l.forward_train(x), |l, d| l.backward(d), |l| l.params_mut(), &mut rng)
        }
        "relu" => {
            let x = random_tensor([b, c, h, w], &mut rng);
            check_layer(kind, &mut Relu::default(), x, |l, x| Ok(l.forward_train(x)), |l, d| l.backward(d), |_| vec![], &mut rng)
        }
        "maxpool2d" => {
            let k = rng.random_range(2..=3);
            let s = rng.random_range(1..=2);
            let p = rng.random_range(0..=k / 2);
            let x = random_tensor([b, c, h, w], &mut rng);
            check_layer(
                &format!("maxpool2d k{k} s{s} p{p}"),
                &mut MaxPool2d::new(k, s, p),
                x,
                |l, x| l.forward_train(x),
                |l, d| l.backward(d),
                |_| vec![],
                &mut rng,
            )
        }
        "global_avg_pool" => {
            let x = random_tensor([b, c, h, w], &mut rng);
            check_layer(kind, &mut GlobalAvgPool::default(), x, |l, x| Ok(l.forward_train(x)), |l, d| l.backward(d), |_| vec![], &mut rng)
        }
        "linear" => {
            let out = rng.random_range(1..=6);
            let mut l = Linear::<f64>::new(c * 2, out, &mut rng);
            let x = random_tensor([b, c * 2, 1, 1], &mut rng);
            check_layer(kind, &mut l, x, |l, x| l.forward_train(x), |l, d| l.backward(d), |l| l.params_mut(), &mut rng)
        }
        "resize" => {
            let (ih, iw) = (rng.random_range(1..=5), rng.random_range(1..=5));
            let (oh, ow) = (rng.random_range(2..=9), rng.random_range(2..=9));
            let x = random_tensor([b, c, ih, iw], &mut rng);
            check_layer(kind, &mut Resize::new(oh, ow), x, |l, x| Ok(l.forward_train(x)), |l, d| l.backward(d), |_| vec![], &mut rng)
        }
        "spatial_softmax" => {
            let x = random_tensor([b, c, h, w], &mut rng);
            check_layer(
                kind,
                &mut SpatialSoftmax::<f64>::default(),
                x,
                |l, x| Ok(l.forward_train(x)),
                |l, d| l.backward(d),
                |_| vec![],
                &mut rng,
            )
        }
        "basic_block" => {
            let stride = rng.random_range(1..=2);
            let cout = if rng.random_bool(0.5) { c } else { rng.random_range(1..=5) };
            let mut blk = BasicBlock::<f64>::new(c, cout, stride, &mut rng);
            let x = random_tensor([b, c, h, w], &mut rng);
            check_layer(
                &format!("basic_block s{stride} {c}->{cout}"),
                &mut blk,
                x,
                |l, x| l.forward_train(x),
                |l, d| l.backward(d),
                |l| l.params_mut(),
                &mut rng,
            )
        }
        "classifier_head" => {
            let k = rng.random_range(2..=9);
            let labels: Vec<usize> = (0..b).map(|_| rng.random_range(0..k)).collect();
            let mut state = (GlobalAvgPool::default(), Linear::<f64>::new(c, k, &mut rng));
            let x = random_tensor([b, c, h, w], &mut rng);
            let shape = format!("{:?} -> {k} classes", x.dims());
            check(
                kind,
                shape,
                &mut state,
                x,
                |(gap, fc), x, back| {
                    let z = fc.forward_train(&gap.forward_train(x))?;
                    let (loss, g) = softmax_cross_entropy(z.data(), k, &labels)?;
                    if !back {
                        return Ok((loss, None));
                    }
                    let dz = Tensor4::from_vec(z.dims(), g)?;
                    Ok((loss, Some(gap.backward(&fc.backward(&dz)?)?)))
                },
                |(_, fc)| fc.params_mut(),
                &mut rng,
            )
        }
        "decoder_head" => {
            let hidden = rng.random_range(1..=4);
            let side = rng.random_range(3..=8);
            let mut state = (Resize::new(side, side), WinnHead::<f64>::new(c, hidden, &mut rng));
            let x = random_tensor([b, c, rng.random_range(1..=3), rng.random_range(1..=3)], &mut rng);
            let target: Vec<f64> = (0..b * 2 * side * side).map(|_| rng.random_range(0.0..0.2)).collect();
            let shape = format!("{:?} -> [{b}, 2, {side}, {side}]", x.dims());
            check(
                kind,
                shape,
                &mut state,
                x,
                |(rs, head), x, back| {
                    let y = head.forward_train(&rs.forward_train(x))?;
                    let (loss, g) = mse_loss(y.data(), &target)?;
                    if !back {
                        return Ok((loss, None));
                    }
                    let dy = Tensor4::from_vec(y.dims(), g)?;
                    Ok((loss, Some(rs.backward(&head.backward(&dy)?)?)))
                },
                |(_, head)| head.params_mut(),
                &mut rng,
            )
        }
        "cnn" | "winn" => {
            // Side 16 and batch ≥ 3 keep ≥ 12 values per normalized channel;
            // smaller nets make batch norm nearly degenerate.
            let b = b + 1;
            let cfg = NetConfig {
                input_side: 16,
                input_channels: rng.random_range(1..=3),
                blocks: vec![rng.random_range(2..=4), rng.random_range(2..=4)],
                depth: 1,
                num_classes: rng.random_range(2..=5),
                batch: 2,
                seed: rng.random(),
                winn_hidden: 3,
                ..NetConfig::default()
            };
            let x = random_tensor([b, cfg.input_channels, 16, 16], &mut rng);
            let shape = format!("{:?} blocks {:?}", x.dims(), cfg.blocks);
            if kind == "cnn" {
                let mut net = Cnn::<f64>::new(&cfg)?;
                let labels: Vec<usize> = (0..b).map(|_| rng.random_range(0..cfg.num_classes)).collect();
                let k = cfg.num_classes;
                check(
                    kind,
                    shape,
                    &mut net,
                    x,
                    |net, x, back| {
                        let z = net.forward_train(x)?;
                        let (loss, g) = softmax_cross_entropy(z.data(), k, &labels)?;
                        if !back {
                            return Ok((loss, None));
                        }
                        Ok((loss, Some(net.backward(&Tensor4::from_vec(z.dims(), g)?)?)))
                    },
                    |net| net.params_mut(),
                    &mut rng,
                )
            } else {
                let mut net = Winn::<f64>::new(&cfg)?;
                let target: Vec<f64> = (0..b * 2 * 18 * 18).map(|_| rng.random_range(0.0..0.01)).collect();
                check(
                    kind,
                    shape,
                    &mut net,
                    x,
                    |net, x, back| {
                        let y = net.forward_train(x)?;
                        let (loss, g) = mse_loss(y.data(), &target)?;
                        if !back {
                            return Ok((loss, None));
                        }
                        Ok((loss, Some(net.backward(&Tensor4::from_vec(y.dims(), g)?)?)))
                    },
                    |net| net.params_mut(),
                    &mut rng,
                )
            }
        }
        _ => unreachable!("unknown case kind"),
    }
}

/// `cases` consecutive cases, cycling through every kind.
pub fn run_suite(cases: usize, seed: u64) -> Result<Vec<GradReport>, NnError> {
    (0..cases).map(|i| run_case(i, seed)).collect()
}
