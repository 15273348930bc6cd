//! Layers with hand-written backward passes.
//!
//! Every layer has `forward` (inference, `&self`, no caching) and
//! `forward_train` (caches what `backward` needs). `backward` consumes the
//! cache, accumulates parameter gradients and returns the input gradient.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::tensor::{gemm, Param, Scalar, Tensor4};
use super::NnError;

fn missing_cache(layer: &str) -> NnError {
    NnError::Shape(format!("{layer}: backward called without a training forward pass"))
}

fn check_grad_dims<T: Scalar>(dy: &Tensor4<T>, want: [usize; 4], layer: &str) -> Result<(), NnError> {
    if dy.dims() != want {
        return Err(NnError::Shape(format!("{layer}: gradient dims {:?}, expected {want:?}", dy.dims())));
    }
    Ok(())
}

/// He-normal initial values: N(0, 2/fan_in).
pub fn he_init<T: Scalar, R: Rng>(len: usize, fan_in: usize, rng: &mut R) -> Vec<T> {
    let normal = Normal::new(0.0, (2.0 / fan_in.max(1) as f64).sqrt()).expect("positive std");
    (0..len).map(|_| T::lit(normal.sample(rng))).collect()
}

#[derive(Debug, Clone)]
struct ConvCache<T> {
    x: Tensor4<T>,
    out_hw: (usize, usize),
}

/// Column-buffer budget (elements) per GEMM call; batches are processed in
/// sample chunks so the unfolded input stays cache-resident.
const COL_BUDGET: usize = 1 << 18;

/// 2-D cross-correlation with zero padding, via im2col + GEMM.
#[derive(Debug, Clone)]
pub struct Conv2d<T> {
    pub cin: usize,
    pub cout: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
    /// `(cout, cin, k, k)` row-major.
    pub weight: Param<T>,
    pub bias: Option<Param<T>>,
    cache: Option<ConvCache<T>>,
}

impl<T: Scalar> Conv2d<T> {
    pub fn new<R: Rng>(
        cin: usize,
        cout: usize,
        kernel: usize,
        stride: usize,
        pad: usize,
        bias: bool,
        rng: &mut R,
    ) -> Self {
        let fan_in = cin * kernel * kernel;
        Self {
            cin,
            cout,
            kernel,
            stride,
            pad,
            weight: Param::new(he_init(cout * fan_in, fan_in, rng)),
            bias: bias.then(|| Param::new(vec![T::zero(); cout])),
            cache: None,
        }
    }

    pub fn from_weights(
        weight: Tensor4<T>,
        bias: Option<Vec<T>>,
        stride: usize,
        pad: usize,
    ) -> Result<Self, NnError> {
        let [cout, cin, kh, kw] = weight.dims();
        if kh != kw || kh == 0 || stride == 0 {
            return Err(NnError::Shape(format!("conv kernel {kh}×{kw}, stride {stride}")));
        }
        if bias.as_ref().is_some_and(|b| b.len() != cout) {
            return Err(NnError::Shape("conv bias length != cout".into()));
        }
        Ok(Self {
            cin,
            cout,
            kernel: kh,
            stride,
            pad,
            weight: Param::new(weight.into_data()),
            bias: bias.map(Param::new),
            cache: None,
        })
    }

    pub fn out_hw(&self, h: usize, w: usize) -> Result<(usize, usize), NnError> {
        let (hp, wp) = (h + 2 * self.pad, w + 2 * self.pad);
        if hp < self.kernel || wp < self.kernel {
            return Err(NnError::Shape(format!("conv input {h}×{w} smaller than kernel {}", self.kernel)));
        }
        Ok(((hp - self.kernel) / self.stride + 1, (wp - self.kernel) / self.stride + 1))
    }

    /// Output columns `ow` whose input column `ow·stride + kj − pad` lies in `0..w`.
    fn valid_cols(&self, kj: usize, w: usize, wo: usize) -> (usize, usize) {
        let (s, p) = (self.stride, self.pad);
        let lo = if kj >= p { 0 } else { (p - kj).div_ceil(s) };
        let hi = if w + p > kj { ((w + p - kj - 1) / s + 1).min(wo) } else { 0 };
        (lo, hi.max(lo))
    }

    /// Samples per chunk for an output of `hw` pixels.
    fn chunk(&self, hw: usize) -> usize {
        (COL_BUDGET / (self.cin * self.kernel * self.kernel * hw).max(1)).max(1)
    }

    /// Unfolds samples `batch` of `x` into a `(cin·k·k) × (len·ho·wo)` matrix.
    fn im2col(&self, x: &Tensor4<T>, batch: std::ops::Range<usize>, ho: usize, wo: usize) -> Vec<T> {
        let [_, c, h, w] = x.dims();
        let (k, s, p) = (self.kernel, self.stride, self.pad);
        let b = batch.len();
        let n = b * ho * wo;
        let mut col = vec![T::zero(); c * k * k * n];
        let xd = x.data();
        for ci in 0..c {
            for ki in 0..k {
                for kj in 0..k {
                    let row = (ci * k + ki) * k + kj;
                    let dst = &mut col[row * n..(row + 1) * n];
                    let (lo, hi) = self.valid_cols(kj, w, wo);
                    if lo == hi {
                        continue;
                    }
                    let off = lo * s + kj - p;
                    for bi in 0..b {
                        let base = ((batch.start + bi) * c + ci) * h * w;
                        for oh in 0..ho {
                            let Some(ih) = (oh * s + ki).checked_sub(p).filter(|&v| v < h) else {
                                continue;
                            };
                            let src = &xd[base + ih * w..base + (ih + 1) * w];
                            let d = &mut dst[(bi * ho + oh) * wo + lo..(bi * ho + oh) * wo + hi];
                            if s == 1 {
                                d.copy_from_slice(&src[off..off + (hi - lo)]);
                            } else {
                                for (j, out) in d.iter_mut().enumerate() {
                                    *out = src[off + j * s];
                                }
                            }
                        }
                    }
                }
            }
        }
        col
    }

    /// Folds a column gradient for samples `batch` back into `dx`.
    fn col2im(&self, col: &[T], dx: &mut Tensor4<T>, batch: std::ops::Range<usize>, ho: usize, wo: usize) {
        let [_, c, h, w] = dx.dims();
        let (k, s, p) = (self.kernel, self.stride, self.pad);
        let b = batch.len();
        let n = b * ho * wo;
        let xd = dx.data_mut();
        for ci in 0..c {
            for ki in 0..k {
                for kj in 0..k {
                    let row = (ci * k + ki) * k + kj;
                    let src = &col[row * n..(row + 1) * n];
                    let (lo, hi) = self.valid_cols(kj, w, wo);
                    if lo == hi {
                        continue;
                    }
                    let off = lo * s + kj - p;
                    for bi in 0..b {
                        let base = ((batch.start + bi) * c + ci) * h * w;
                        for oh in 0..ho {
                            let Some(ih) = (oh * s + ki).checked_sub(p).filter(|&v| v < h) else {
                                continue;
                            };
                            let g = &src[(bi * ho + oh) * wo + lo..(bi * ho + oh) * wo + hi];
                            let d = &mut xd[base + ih * w..base + (ih + 1) * w];
                            if s == 1 {
                                for (o, &v) in d[off..off + (hi - lo)].iter_mut().zip(g) {
                                    *o = *o + v;
                                }
                            } else {
                                for (j, &v) in g.iter().enumerate() {
                                    d[off + j * s] = d[off + j * s] + v;
                                }
                            }
                        }
                    }
                }
            }
        }
    }

    fn run(&self, x: &Tensor4<T>) -> Result<(Tensor4<T>, (usize, usize)), NnError> {
        x.expect_dims(self.cin, "conv2d")?;
        let (ho, wo) = self.out_hw(x.height(), x.width())?;
        let b = x.batch();
        let kk = self.cin * self.kernel * self.kernel;
        let hw = ho * wo;
        let mut y = Tensor4::zeros([b, self.cout, ho, wo]);
        let step = self.chunk(hw);
        let mut ymat = Vec::new();
        for b0 in (0..b).step_by(step) {
            let b1 = (b0 + step).min(b);
            let n = (b1 - b0) * hw;
            let col = self.im2col(x, b0..b1, ho, wo);
            ymat.resize(self.cout * n, T::zero());
            gemm(self.cout, kk, n, &self.weight.value, false, &col, false, &mut ymat, T::zero());
            let yd = y.data_mut();
            for o in 0..self.cout {
                let bias = self.bias.as_ref().map_or(T::zero(), |p| p.value[o]);
                for bi in b0..b1 {
                    let src = &ymat[o * n + (bi - b0) * hw..o * n + (bi - b0 + 1) * hw];
                    let dst = &mut yd[(bi * self.cout + o) * hw..(bi * self.cout + o + 1) * hw];
                    for (d, &s) in dst.iter_mut().zip(src) {
                        *d = s + bias;
                    }
                }
            }
        }
        Ok((y, (ho, wo)))
    }

    pub fn forward(&self, x: &Tensor4<T>) -> Result<Tensor4<T>, NnError> {
        Ok(self.run(x)?.0)
    }

    pub fn forward_train(&mut self, x: &Tensor4<T>) -> Result<Tensor4<T>, NnError> {
        let (y, out_hw) = self.run(x)?;
        self.cache = Some(ConvCache { x: x.clone(), out_hw });
        Ok(y)
    }

    pub fn backward(&mut self, dy: &Tensor4<T>) -> Result<Tensor4<T>, NnError> {
        let cache = self.cache.take().ok_or_else(|| missing_cache("conv2d"))?;
        let (ho, wo) = cache.out_hw;
        let x = &cache.x;
        let b = x.batch();
        check_grad_dims(dy, [b, self.cout, ho, wo], "conv2d")?;
        let hw = ho * wo;
        let kk = self.cin * self.kernel * self.kernel;
        let dyd = dy.data();
        let mut dx = Tensor4::zeros(x.dims());
        let step = self.chunk(hw);
        let (mut dymat, mut dcol) = (Vec::new(), Vec::new());
        for b0 in (0..b).step_by(step) {
            let b1 = (b0 + step).min(b);
            let n = (b1 - b0) * hw;
            dymat.resize(self.cout * n, T::zero());
            for o in 0..self.cout {
                for bi in b0..b1 {
                    dymat[o * n + (bi - b0) * hw..o * n + (bi - b0 + 1) * hw]
                        .copy_from_slice(&dyd[(bi * self.cout + o) * hw..(bi * self.cout + o + 1) * hw]);
                }
            }
            let col = self.im2col(x, b0..b1, ho, wo);
            gemm(self.cout, n, kk, &dymat, false, &col, true, &mut self.weight.grad, T::one());
            if let Some(bias) = self.bias.as_mut() {
                for o in 0..self.cout {
                    let s: T = dymat[o * n..(o + 1) * n].iter().copied().sum();
                    bias.grad[o] = bias.grad[o] + s;
                }
            }
            dcol.resize(kk * n, T::zero());
            gemm(kk, self.cout, n, &self.weight.value, true, &dymat, false, &mut dcol, T::zero());
            self.col2im(&dcol, &mut dx, b0..b1, ho, wo);
        }
        Ok(dx)
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        let mut v = vec![&mut self.weight];
        if let Some(b) = self.bias.as_mut() {
            v.push(b);
        }
        v
    }

    pub fn params(&self) -> Vec<&Param<T>> {
        let mut v = vec![&self.weight];
        if let Some(b) = self.bias.as_ref() {
            v.push(b);
        }
        v
    }
}

#[derive(Debug, Clone)]
struct BnCache<T> {
    x_hat: Vec<T>,
    inv_std: Vec<T>,
    dims: [usize; 4],
}

/// Per-channel batch normalization over `(batch, height, width)`.
#[derive(Debug, Clone)]
pub struct BatchNorm2d<T> {
    pub channels: usize,
    pub gamma: Param<T>,
    pub beta: Param<T>,
    pub running_mean: Vec<T>,
    /// Unbiased batch variance, exponentially averaged.
    pub running_var: Vec<T>,
    pub momentum: T,
    pub eps: T,
    cache: Option<BnCache<T>>,
}

impl<T: Scalar> BatchNorm2d<T> {
    pub fn new(channels: usize) -> Self {
        Self {
            channels,
            gamma: Param::new(vec![T::one(); channels]),
            beta: Param::new(vec![T::zero(); channels]),
            running_mean: vec![T::zero(); channels],
            running_var: vec![T::one(); channels],
            momentum: T::lit(0.1),
            eps: T::lit(1e-5),
            cache: None,
        }
    }

    pub fn forward(&self, x: &Tensor4<T>) -> Result<Tensor4<T>, NnError> {
        x.expect_dims(self.channels, "batchnorm")?;
        let [b, c, h, w] = x.dims();
        let hw = h * w;
        let mut y = x.clone();
        let yd = y.data_mut();
        for ci in 0..c {
            let inv = T::one() / (self.running_var[ci] + self.eps).sqrt();
            let (g, be, m) = (self.gamma.value[ci], self.beta.value[ci], self.running_mean[ci]);
            for bi in 0..b {
                for v in &mut yd[(bi * c + ci) * hw..(bi * c + ci + 1) * hw] {
                    *v = g * (*v - m) * inv + be;
                }
            }
        }
        Ok(y)
    }

    pub fn forward_train(&mut self, x: &Tensor4<T>) -> Result<Tensor4<T>, NnError> {
        x.expect_dims(self.channels, "batchnorm")?;
        let [b, c, h, w] = x.dims();
        let hw = h * w;
        let count = b * hw;
        if count < 2 {
            return Err(NnError::Shape("batchnorm training needs at least 2 values per channel".into()));
        }
        let nt = T::lit(count as f64);
        let xd = x.data();
        let mut x_hat = vec![T::zero(); xd.len()];
        let mut inv_std = vec![T::zero(); c];
        let mut y = Tensor4::zeros(x.dims());
        let yd = y.data_mut();
        for ci in 0..c {
            let chunks = || (0..b).map(move |bi| (bi * c + ci) * hw..(bi * c + ci + 1) * hw);
            let mut sum = T::zero();
            for r in chunks() {
                sum = sum + xd[r].iter().copied().sum::<T>();
            }
            let mean = sum / nt;
            let mut sq = T::zero();
            for r in chunks() {
                sq = sq + xd[r].iter().map(|&v| (v - mean) * (v - mean)).sum::<T>();
            }
            let var = sq / nt;
            let inv = T::one() / (var + self.eps).sqrt();
            inv_std[ci] = inv;
            let (g, be) = (self.gamma.value[ci], self.beta.value[ci]);
            for r in chunks() {
                for k in r {
                    let xh = (xd[k] - mean) * inv;
                    x_hat[k] = xh;
                    yd[k] = g * xh + be;
                }
            }
            let m = self.momentum;
            let unbiased = sq / T::lit((count - 1) as f64);
            self.running_mean[ci] = (T::one() - m) * self.running_mean[ci] + m * mean;
            self.running_var[ci] = (T::one() - m) * self.running_var[ci] + m * unbiased;
        }
        self.cache = Some(BnCache {
            x_hat,
            inv_std,
            dims: x.dims(),
        });
        Ok(y)
    }

    pub fn backward(&mut self, dy: &Tensor4<T>) -> Result<Tensor4<T>, NnError> {
        let cache = self.cache.take().ok_or_else(|| missing_cache("batchnorm"))?;
        check_grad_dims(dy, cache.dims, "batchnorm")?;
        let [b, c, h, w] = cache.dims;
        let hw = h * w;
        let nt = T::lit((b * hw) as f64);
        let dyd = dy.data();
        let mut dx = Tensor4::zeros(cache.dims);
        let dxd = dx.data_mut();
        for ci in 0..c {
            let ranges = || (0..b).map(move |bi| (bi * c + ci) * hw..(bi * c + ci + 1) * hw);
            let (mut sdy, mut sdyx) = (T::zero(), T::zero());
            for r in ranges() {
                for k in r {
                    sdy = sdy + dyd[k];
                    sdyx = sdyx + dyd[k] * cache.x_hat[k];
                }
            }
            self.gamma.grad[ci] = self.gamma.grad[ci] + sdyx;
            self.beta.grad[ci] = self.beta.grad[ci] + sdy;
            let scale = self.gamma.value[ci] * cache.inv_std[ci] / nt;
            for r in ranges() {
                for k in r {
                    dxd[k] = scale * (nt * dyd[k] - sdy - cache.x_hat[k] * sdyx);
                }
            }
        }
        Ok(dx)
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        vec![&mut self.gamma, &mut self.beta]
    }

    pub fn params(&self) -> Vec<&Param<T>> {
        vec![&self.gamma, &self.beta]
    }

    pub fn buffers_mut(&mut self) -> Vec<&mut Vec<T>> {
        vec![&mut self.running_mean, &mut self.running_var]
    }

    pub fn buffers(&self) -> Vec<&Vec<T>> {
        vec![&self.running_mean, &self.running_var]
    }
}

#[derive(Debug, Clone, Default)]
pub struct Relu {
    mask: Option<(Vec<bool>, [usize; 4])>,
}

impl Relu {
    pub fn forward<T: Scalar>(&self, x: &Tensor4<T>) -> Tensor4<T> {
        let mut y = x.clone();
        y.data_mut().iter_mut().for_each(|v| *v = v.max(T::zero()));
        y
    }

    pub fn forward_train<T: Scalar>(&mut self, x: &Tensor4<T>) -> Tensor4<T> {
        self.mask = Some((x.data().iter().map(|&v| v > T::zero()).collect(), x.dims()));
        self.forward(x)
    }

    pub fn backward<T: Scalar>(&mut self, dy: &Tensor4<T>) -> Result<Tensor4<T>, NnError> {
        let (mask, dims) = self.mask.take().ok_or_else(|| missing_cache("relu"))?;
        check_grad_dims(dy, dims, "relu")?;
        let mut dx = dy.clone();
        for (g, &m) in dx.data_mut().iter_mut().zip(&mask) {
            if !m {
                *g = T::zero();
            }
        }
        Ok(dx)
    }
}

/// Max pooling; padded cells never win.
#[derive(Debug, Clone)]
pub struct MaxPool2d {
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
    cache: Option<(Vec<usize>, [usize; 4], [usize; 4])>,
}

impl MaxPool2d {
    pub fn new(kernel: usize, stride: usize, pad: usize) -> Self {
        Self {
            kernel,
            stride,
            pad,
            cache: None,
        }
    }

    pub fn out_hw(&self, h: usize, w: usize) -> Result<(usize, usize), NnError> {
        if h + 2 * self.pad < self.kernel || w + 2 * self.pad < self.kernel || self.pad >= self.kernel {
            return Err(NnError::Shape(format!("maxpool input {h}×{w}")));
        }
        Ok((
            (h + 2 * self.pad - self.kernel) / self.stride + 1,
            (w + 2 * self.pad - self.kernel) / self.stride + 1,
        ))
    }

    fn run<T: Scalar>(&self, x: &Tensor4<T>) -> Result<(Tensor4<T>, Vec<usize>), NnError> {
        let [b, c, h, w] = x.dims();
        let (ho, wo) = self.out_hw(h, w)?;
        let mut y = Tensor4::zeros([b, c, ho, wo]);
        let mut arg = vec![0usize; b * c * ho * wo];
        let xd = x.data();
        let yd = y.data_mut();
        for plane in 0..b * c {
            let base = plane * h * w;
            for oh in 0..ho {
                for ow in 0..wo {
                    let mut best = T::neg_infinity();
                    let mut bi = usize::MAX;
                    for ki in 0..self.kernel {
                        let ih = (oh * self.stride + ki) as isize - self.pad as isize;
                        if ih < 0 || ih >= h as isize {
                            continue;
                        }
                        for kj in 0..self.kernel {
                            let iw = (ow * self.stride + kj) as isize - self.pad as isize;
                            if iw < 0 || iw >= w as isize {
                                continue;
                            }
                            let idx = base + ih as usize * w + iw as usize;
                            if bi == usize::MAX || xd[idx] > best {
                                best = xd[idx];
                                bi = idx;
                            }
                        }
                    }
                    let o = (plane * ho + oh) * wo + ow;
                    yd[o] = best;
                    arg[o] = bi;
                }
            }
        }
        Ok((y, arg))
    }

    pub fn forward<T: Scalar>(&self, x: &Tensor4<T>) -> Result<Tensor4<T>, NnError> {
        Ok(self.run(x)?.0)
    }

    pub fn forward_train<T: Scalar>(&mut self, x: &Tensor4<T>) -> Result<Tensor4<T>, NnError> {
        let (y, arg) = self.run(x)?;
        self.cache = Some((arg, x.dims(), y.dims()));
        Ok(y)
    }

    pub fn backward<T: Scalar>(&mut self, dy: &Tensor4<T>) -> Result<Tensor4<T>, NnError> {
        let (arg, in_dims, out_dims) = self.cache.take().ok_or_else(|| missing_cache("maxpool"))?;
        check_grad_dims(dy, out_dims, "maxpool")?;
        let mut dx = Tensor4::zeros(in_dims);
        let dxd = dx.data_mut();
        for (&i, &g) in arg.iter().zip(dy.data()) {
            dxd[i] = dxd[i] + g;
        }
        Ok(dx)
    }
}

/// Global average pool: `(b, c, h, w)` → `(b, c, 1, 1)`.
#[derive(Debug, Clone, Default)]
pub struct GlobalAvgPool {
    in_dims: Option<[usize; 4]>,
}

impl GlobalAvgPool {
    pub fn forward<T: Scalar>(&self, x: &Tensor4<T>) -> Tensor4<T> {
        let [b, c, h, w] = x.dims();
        let hw = h * w;
        let inv = T::one() / T::lit(hw as f64);
        let data = x.data().chunks(hw).map(|p| p.iter().copied().sum::<T>() * inv).collect();
        Tensor4::from_vec([b, c, 1, 1], data).expect("pooled shape")
    }

    pub fn forward_train<T: Scalar>(&mut self, x: &Tensor4<T>) -> Tensor4<T> {
        self.in_dims = Some(x.dims());
        self.forward(x)
    }

    pub fn backward<T: Scalar>(&mut self, dy: &Tensor4<T>) -> Result<Tensor4<T>, NnError> {
        let dims = self.in_dims.take().ok_or_else(|| missing_cache("avgpool"))?;
        let [b, c, h, w] = dims;
        check_grad_dims(dy, [b, c, 1, 1], "avgpool")?;
        let hw = h * w;
        let inv = T::one() / T::lit(hw as f64);
        let mut dx = Tensor4::zeros(dims);
        for (p, &g) in dx.data_mut().chunks_mut(hw).zip(dy.data()) {
            p.iter_mut().for_each(|v| *v = g * inv);
        }
        Ok(dx)
    }
}

/// Fully connected layer on `(b, in, 1, 1)` (any trailing dims are flattened).
#[derive(Debug, Clone)]
pub struct Linear<T> {
    pub inputs: usize,
    pub outputs: usize,
    /// `(outputs, inputs)` row-major.
    pub weight: Param<T>,
    pub bias: Param<T>,
    cache: Option<(Vec<T>, [usize; 4])>,
}

impl<T: Scalar> Linear<T> {
    pub fn new<R: Rng>(inputs: usize, outputs: usize, rng: &mut R) -> Self {
        Self {
            inputs,
            outputs,
            weight: Param::new(he_init(inputs * outputs, inputs, rng)),
            bias: Param::new(vec![T::zero(); outputs]),
            cache: None,
        }
    }

    pub fn forward(&self, x: &Tensor4<T>) -> Result<Tensor4<T>, NnError> {
        if x.item_len() != self.inputs {
            return Err(NnError::Shape(format!("linear: {} inputs, got {:?}", self.inputs, x.dims())));
        }
        let b = x.batch();
        let mut y = vec![T::zero(); b * self.outputs];
        for row in y.chunks_mut(self.outputs) {
            row.copy_from_slice(&self.bias.value);
        }
        gemm(b, self.inputs, self.outputs, x.data(), false, &self.weight.value, true, &mut y, T::one());
        Tensor4::from_vec([b, self.outputs, 1, 1], y)
    }

    pub fn forward_train(&mut self, x: &Tensor4<T>) -> Result<Tensor4<T>, NnError> {
        let y = self.forward(x)?;
        self.cache = Some((x.data().to_vec(), x.dims()));
        Ok(y)
    }

    pub fn backward(&mut self, dy: &Tensor4<T>) -> Result<Tensor4<T>, NnError> {
        let (x, dims) = self.cache.take().ok_or_else(|| missing_cache("linear"))?;
        let b = dims[0];
        check_grad_dims(dy, [b, self.outputs, 1, 1], "linear")?;
        gemm(self.outputs, b, self.inputs, dy.data(), true, &x, false, &mut self.weight.grad, T::one());
        for row in dy.data().chunks(self.outputs) {
            for (g, &d) in self.bias.grad.iter_mut().zip(row) {
                *g = *g + d;
            }
        }
        let mut dx = vec![T::zero(); b * self.inputs];
        gemm(b, self.outputs, self.inputs, dy.data(), false, &self.weight.value, false, &mut dx, T::zero());
        Tensor4::from_vec(dims, dx)
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        vec![&mut self.weight, &mut self.bias]
    }

    pub fn params(&self) -> Vec<&Param<T>> {
        vec![&self.weight, &self.bias]
    }
}

/// Source taps `(i0, i1, frac)` for align-corners bilinear sampling.
pub fn bilinear_taps(input: usize, output: usize) -> Vec<(usize, usize, f64)> {
    (0..output)
        .map(|o| {
            if input == 1 || output == 1 {
                return (0, 0, 0.0);
            }
            let src = o as f64 * (input - 1) as f64 / (output - 1) as f64;
            let i0 = (src.floor() as usize).min(input - 1);
            let i1 = (i0 + 1).min(input - 1);
            (i0, i1, src - i0 as f64)
        })
        .collect()
}

/// Bilinear resize of a single row-major `h×w` plane (align corners).
pub fn resize_plane(src: &[f64], h: usize, w: usize, out_h: usize, out_w: usize) -> Vec<f64> {
    let ty = bilinear_taps(h, out_h);
    let tx = bilinear_taps(w, out_w);
    let mut out = Vec::with_capacity(out_h * out_w);
    for &(y0, y1, fy) in &ty {
        for &(x0, x1, fx) in &tx {
            let top = src[y0 * w + x0] * (1.0 - fx) + src[y0 * w + x1] * fx;
            let bot = src[y1 * w + x0] * (1.0 - fx) + src[y1 * w + x1] * fx;
            out.push(top * (1.0 - fy) + bot * fy);
        }
    }
    out
}

/// Bilinear spatial resize to a fixed output size (align corners).
#[derive(Debug, Clone)]
pub struct Resize {
    pub out_h: usize,
    pub out_w: usize,
    in_dims: Option<[usize; 4]>,
}

impl Resize {
    pub fn new(out_h: usize, out_w: usize) -> Self {
        Self {
            out_h,
            out_w,
            in_dims: None,
        }
    }

    pub fn forward<T: Scalar>(&self, x: &Tensor4<T>) -> Tensor4<T> {
        let [b, c, h, w] = x.dims();
        let ty = bilinear_taps(h, self.out_h);
        let tx = bilinear_taps(w, self.out_w);
        let mut y = Tensor4::zeros([b, c, self.out_h, self.out_w]);
        let xd = x.data();
        let yd = y.data_mut();
        let one = T::one();
        for plane in 0..b * c {
            let src = &xd[plane * h * w..(plane + 1) * h * w];
            let dst = &mut yd[plane * self.out_h * self.out_w..(plane + 1) * self.out_h * self.out_w];
            for (oy, &(y0, y1, fy)) in ty.iter().enumerate() {
                let fy = T::lit(fy);
                for (ox, &(x0, x1, fx)) in tx.iter().enumerate() {
                    let fx = T::lit(fx);
                    let top = src[y0 * w + x0] * (one - fx) + src[y0 * w + x1] * fx;
                    let bot = src[y1 * w + x0] * (one - fx) + src[y1 * w + x1] * fx;
                    dst[oy * self.out_w + ox] = top * (one - fy) + bot * fy;
                }
            }
        }
        y
    }

    pub fn forward_train<T: Scalar>(&mut self, x: &Tensor4<T>) -> Tensor4<T> {
        self.in_dims = Some(x.dims());
        self.forward(x)
    }

    pub fn backward<T: Scalar>(&mut self, dy: &Tensor4<T>) -> Result<Tensor4<T>, NnError> {
        let dims = self.in_dims.take().ok_or_else(|| missing_cache("resize"))?;
        let [b, c, h, w] = dims;
        check_grad_dims(dy, [b, c, self.out_h, self.out_w], "resize")?;
        let ty = bilinear_taps(h, self.out_h);
        let tx = bilinear_taps(w, self.out_w);
        let mut dx = Tensor4::zeros(dims);
        let dxd = dx.data_mut();
        let dyd = dy.data();
        let one = T::one();
        for plane in 0..b * c {
            let g = &dyd[plane * self.out_h * self.out_w..(plane + 1) * self.out_h * self.out_w];
            let d = &mut dxd[plane * h * w..(plane + 1) * h * w];
            for (oy, &(y0, y1, fy)) in ty.iter().enumerate() {
                let fy = T::lit(fy);
                for (ox, &(x0, x1, fx)) in tx.iter().enumerate() {
                    let fx = T::lit(fx);
                    let v = g[oy * self.out_w + ox];
                    d[y0 * w + x0] = d[y0 * w + x0] + v * (one - fy) * (one - fx);
                    d[y0 * w + x1] = d[y0 * w + x1] + v * (one - fy) * fx;
                    d[y1 * w + x0] = d[y1 * w + x0] + v * fy * (one - fx);
                    d[y1 * w + x1] = d[y1 * w + x1] + v * fy * fx;
                }
            }
        }
        Ok(dx)
    }
}

/// Softmax over each channel's `h·w` cells.
#[derive(Debug, Clone, Default)]
pub struct SpatialSoftmax<T> {
    out: Option<Tensor4<T>>,
}

impl<T: Scalar> SpatialSoftmax<T> {
    pub fn forward(&self, x: &Tensor4<T>) -> Tensor4<T> {
        let hw = x.height() * x.width();
        let mut y = x.clone();
        for p in y.data_mut().chunks_mut(hw) {
            let m = p.iter().copied().fold(T::neg_infinity(), T::max);
            let mut s = T::zero();
            for v in p.iter_mut() {
                *v = (*v - m).exp();
                s = s + *v;
            }
            p.iter_mut().for_each(|v| *v = *v / s);
        }
        y
    }

    pub fn forward_train(&mut self, x: &Tensor4<T>) -> Tensor4<T> {
        let y = self.forward(x);
        self.out = Some(y.clone());
        y
    }

    pub fn backward(&mut self, dy: &Tensor4<T>) -> Result<Tensor4<T>, NnError> {
        let s = self.out.take().ok_or_else(|| missing_cache("softmax"))?;
        check_grad_dims(dy, s.dims(), "softmax")?;
        let hw = s.height() * s.width();
        let mut dx = dy.clone();
        for (d, p) in dx.data_mut().chunks_mut(hw).zip(s.data().chunks(hw)) {
            let dot: T = d.iter().zip(p).map(|(&g, &v)| g * v).sum();
            for (g, &v) in d.iter_mut().zip(p) {
                *g = v * (*g - dot);
            }
        }
        Ok(dx)
    }
}

/// Mean softmax cross-entropy over the batch. `logits` is `(b, k)` row-major.
/// Returns the loss and `∂loss/∂logits`.
pub fn softmax_cross_entropy<T: Scalar>(logits: &[T], k: usize, labels: &[usize]) -> Result<(T, Vec<T>), NnError> {
    if k == 0 || logits.len() != labels.len() * k || labels.is_empty() {
        return Err(NnError::Shape(format!(
            "cross-entropy: {} logits for {} labels × {k} classes",
            logits.len(),
            labels.len()
        )));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= k) {
        return Err(NnError::Label(bad));
    }
    let b = T::lit(labels.len() as f64);
    let mut loss = T::zero();
    let mut grad = vec![T::zero(); logits.len()];
    for ((row, g), &l) in logits.chunks(k).zip(grad.chunks_mut(k)).zip(labels) {
        let m = row.iter().copied().fold(T::neg_infinity(), T::max);
        let s: T = row.iter().map(|&v| (v - m).exp()).sum();
        let log_s = s.ln();
        loss = loss + (log_s + m - row[l]);
        for (gi, &v) in g.iter_mut().zip(row) {
            *gi = (v - m).exp() / s / b;
        }
        g[l] = g[l] - T::one() / b;
    }
    Ok((loss / b, grad))
}

/// Mean squared error over all elements, with its gradient.
pub fn mse_loss<T: Scalar>(pred: &[T], target: &[T]) -> Result<(T, Vec<T>), NnError> {
    if pred.len() != target.len() || pred.is_empty() {
        return Err(NnError::Shape(format!("mse: {} vs {} values", pred.len(), target.len())));
    }
    let n = T::lit(pred.len() as f64);
    let two = T::lit(2.0);
    let mut loss = T::zero();
    let grad = pred
        .iter()
        .zip(target)
        .map(|(&p, &t)| {
            loss = loss + (p - t) * (p - t);
            two * (p - t) / n
        })
        .collect();
    Ok((loss / n, grad))
}
