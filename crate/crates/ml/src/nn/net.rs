use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use wivi_core::sim::HEATMAP_SIDE;

use super::layers::{BatchNorm2d, Conv2d, GlobalAvgPool, Linear, MaxPool2d, Relu, Resize, SpatialSoftmax};
use super::tensor::{Param, Scalar, Tensor4};
use super::NnError;

#[derive(Debug, Clone, PartialEq)]
pub struct NetConfig {
    pub input_side: usize,
    pub input_channels: usize,
    /// Channel width of each residual stage.
    pub blocks: Vec<usize>,
    /// Basic blocks per stage (2 gives the 18-layer layout).
    pub depth: usize,
    pub num_classes: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    pub batch: usize,
    pub seed: u64,
    /// Hidden channels between the two skeleton-decoder convolutions.
    pub winn_hidden: usize,
}

impl Default for NetConfig {
    fn default() -> Self {
        Self {
            input_side: 56,
            input_channels: 6,
            blocks: vec![16, 32, 64, 128],
            depth: 2,
            num_classes: 9,
            lr: 1e-3,
            weight_decay: 0.01,
            epochs: 5,
            batch: 32,
            seed: 0,
            winn_hidden: 16,
        }
    }
}

impl NetConfig {
    /// Widths used by the original full-size network (224 px input).
    pub fn paper_scale() -> Self {
        Self {
            input_side: 224,
            blocks: vec![64, 128, 256, 512],
            winn_hidden: 64,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), NnError> {
        let bad = |m: String| Err(NnError::InvalidConfig(m));
        if self.input_side == 0 || !self.input_side.is_multiple_of(8) {
            return bad(format!("input_side {} must be a positive multiple of 8", self.input_side));
        }
        if self.input_channels == 0 || self.num_classes < 2 {
            return bad("input_channels must be ≥ 1 and num_classes ≥ 2".into());
        }
        if self.blocks.is_empty() || self.blocks.contains(&0) || self.depth == 0 {
            return bad("blocks must be non-empty positive widths and depth ≥ 1".into());
        }
        if self.epochs == 0 || self.batch < 2 || self.winn_hidden == 0 {
            return bad("epochs ≥ 1, batch ≥ 2 and winn_hidden ≥ 1 required".into());
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) || !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return bad(format!("lr {} / weight_decay {} out of range", self.lr, self.weight_decay));
        }
        Ok(())
    }

    pub fn last_width(&self) -> usize {
        *self.blocks.last().expect("validated")
    }
}

/// conv-bn-relu-conv-bn plus identity or 1×1 projection skip, then relu.
#[derive(Debug, Clone)]
pub struct BasicBlock<T> {
    pub conv1: Conv2d<T>,
    pub bn1: BatchNorm2d<T>,
    relu1: Relu,
    pub conv2: Conv2d<T>,
    pub bn2: BatchNorm2d<T>,
    pub proj: Option<(Conv2d<T>, BatchNorm2d<T>)>,
    relu_out: Relu,
}

impl<T: Scalar> BasicBlock<T> {
    pub fn new(cin: usize, cout: usize, stride: usize, rng: &mut ChaCha8Rng) -> Self {
        let proj = (cin != cout || stride != 1)
            .then(|| (Conv2d::new(cin, cout, 1, stride, 0, false, rng), BatchNorm2d::new(cout)));
        Self {
            conv1: Conv2d::new(cin, cout, 3, stride, 1, false, rng),
            bn1: BatchNorm2d::new(cout),
            relu1: Relu::default(),
            conv2: Conv2d::new(cout, cout, 3, 1, 1, false, rng),
            bn2: BatchNorm2d::new(cout),
            proj,
            relu_out: Relu::default(),
        }
    }

    pub fn skip(&self, x: &Tensor4<T>) -> Result<Tensor4<T>, NnError> {
        match &self.proj {
            Some((c, b)) => b.forward(&c.forward(x)?),
            None => Ok(x.clone()),
        }
    }

    pub fn forward(&self, x: &Tensor4<T>) -> Result<Tensor4<T>, NnError> {
        let r = self.bn2.forward(&self.conv2.forward(&self.relu1.forward(&self.bn1.forward(&self.conv1.forward(x)?)?))?)?;
        let s = self.skip(x)?;
        Ok(self.relu_out.forward(&add(r, &s)?))
    }

    pub fn forward_train(&mut self, x: &Tensor4<T>) -> Result<Tensor4<T>, NnError> {
        let h = self.bn1.forward_train(&self.conv1.forward_train(x)?)?;
        let h = self.relu1.forward_train(&h);
        let r = self.bn2.forward_train(&self.conv2.forward_train(&h)?)?;
        let s = match &mut self.proj {
            Some((c, b)) => b.forward_train(&c.forward_train(x)?)?,
            None => x.clone(),
        };
        Ok(self.relu_out.forward_train(&add(r, &s)?))
    }

    pub fn backward(&mut self, dy: &Tensor4<T>) -> Result<Tensor4<T>, NnError> {
        let d = self.relu_out.backward(dy)?;
        let dr = self.bn2.backward(&d)?;
        let dr = self.conv2.backward(&dr)?;
        let dr = self.relu1.backward(&dr)?;
        let dr = self.bn1.backward(&dr)?;
        let dx = self.conv1.backward(&dr)?;
        let ds = match &mut self.proj {
            Some((c, b)) => c.backward(&b.backward(&d)?)?,
            None => d,
        };
        add(dx, &ds)
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        let mut v = self.conv1.params_mut();
        v.extend(self.bn1.params_mut());
        v.extend(self.conv2.params_mut());
        v.extend(self.bn2.params_mut());
        if let Some((c, b)) = &mut self.proj {
            v.extend(c.params_mut());
            v.extend(b.params_mut());
        }
        v
    }

    pub fn params(&self) -> Vec<&Param<T>> {
        let mut v = self.conv1.params();
        v.extend(self.bn1.params());
        v.extend(self.conv2.params());
        v.extend(self.bn2.params());
        if let Some((c, b)) = &self.proj {
            v.extend(c.params());
            v.extend(b.params());
        }
        v
    }

    pub fn norms_mut(&mut self) -> Vec<&mut BatchNorm2d<T>> {
        let mut v = vec![&mut self.bn1, &mut self.bn2];
        if let Some((_, b)) = &mut self.proj {
            v.push(b);
        }
        v
    }

    pub fn norms(&self) -> Vec<&BatchNorm2d<T>> {
        let mut v = vec![&self.bn1, &self.bn2];
        if let Some((_, b)) = &self.proj {
            v.push(b);
        }
        v
    }
}

pub(crate) fn add<T: Scalar>(mut a: Tensor4<T>, b: &Tensor4<T>) -> Result<Tensor4<T>, NnError> {
    if a.dims() != b.dims() {
        return Err(NnError::Shape(format!("add: {:?} vs {:?}", a.dims(), b.dims())));
    }
    for (x, &y) in a.data_mut().iter_mut().zip(b.data()) {
        *x = *x + y;
    }
    Ok(a)
}

/// Stem (3×3 stride-2 conv, norm, relu, 3×3 stride-2 max pool) followed by
/// residual stages; the first stage keeps resolution, later ones halve it.
#[derive(Debug, Clone)]
pub struct Backbone<T> {
    pub stem: Conv2d<T>,
    pub stem_bn: BatchNorm2d<T>,
    stem_relu: Relu,
    pool: MaxPool2d,
    pub blocks: Vec<BasicBlock<T>>,
}

impl<T: Scalar> Backbone<T> {
    pub fn new(cfg: &NetConfig, rng: &mut ChaCha8Rng) -> Self {
        let w0 = cfg.blocks[0];
        let stem = Conv2d::new(cfg.input_channels, w0, 3, 2, 1, false, rng);
        let mut blocks = Vec::new();
        let mut cin = w0;
        for (s, &w) in cfg.blocks.iter().enumerate() {
            for d in 0..cfg.depth {
                let stride = if s > 0 && d == 0 { 2 } else { 1 };
                blocks.push(BasicBlock::new(cin, w, stride, rng));
                cin = w;
            }
        }
        Self {
            stem,
            stem_bn: BatchNorm2d::new(w0),
            stem_relu: Relu::default(),
            pool: MaxPool2d::new(3, 2, 1),
            blocks,
        }
    }

    pub fn forward(&self, x: &Tensor4<T>) -> Result<Tensor4<T>, NnError> {
        let mut h = self.pool.forward(&self.stem_relu.forward(&self.stem_bn.forward(&self.stem.forward(x)?)?))?;
        for b in &self.blocks {
            h = b.forward(&h)?;
        }
        Ok(h)
    }

    pub fn forward_train(&mut self, x: &Tensor4<T>) -> Result<Tensor4<T>, NnError> {
        let h = self.stem_bn.forward_train(&self.stem.forward_train(x)?)?;
        let h = self.stem_relu.forward_train(&h);
        let mut h = self.pool.forward_train(&h)?;
        for b in &mut self.blocks {
            h = b.forward_train(&h)?;
        }
        Ok(h)
    }

    pub fn backward(&mut self, dy: &Tensor4<T>) -> Result<Tensor4<T>, NnError> {
        let mut d = dy.clone();
        for b in self.blocks.iter_mut().rev() {
            d = b.backward(&d)?;
        }
        let d = self.pool.backward(&d)?;
        let d = self.stem_relu.backward(&d)?;
        let d = self.stem_bn.backward(&d)?;
        self.stem.backward(&d)
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        let mut v = self.stem.params_mut();
        v.extend(self.stem_bn.params_mut());
        for b in &mut self.blocks {
            v.extend(b.params_mut());
        }
        v
    }

    pub fn params(&self) -> Vec<&Param<T>> {
        let mut v = self.stem.params();
        v.extend(self.stem_bn.params());
        for b in &self.blocks {
            v.extend(b.params());
        }
        v
    }

    pub fn norms_mut(&mut self) -> Vec<&mut BatchNorm2d<T>> {
        let mut v = vec![&mut self.stem_bn];
        for b in &mut self.blocks {
            v.extend(b.norms_mut());
        }
        v
    }

    pub fn norms(&self) -> Vec<&BatchNorm2d<T>> {
        let mut v = vec![&self.stem_bn];
        for b in &self.blocks {
            v.extend(b.norms());
        }
        v
    }

    /// 3×3 convolutions on the main path (stem included, 1×1 projections not),
    /// the count that names residual networks together with the final linear layer.
    pub fn conv_layers(&self) -> usize {
        1 + 2 * self.blocks.len()
    }
}

/// Residual classifier: backbone → global average pool → linear.
#[derive(Debug, Clone)]
pub struct Cnn<T> {
    pub config: NetConfig,
    pub backbone: Backbone<T>,
    gap: GlobalAvgPool,
    pub fc: Linear<T>,
}

impl<T: Scalar> Cnn<T> {
    pub fn new(cfg: &NetConfig) -> Result<Self, NnError> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let backbone = Backbone::new(cfg, &mut rng);
        let fc = Linear::new(cfg.last_width(), cfg.num_classes, &mut rng);
        Ok(Self {
            config: cfg.clone(),
            backbone,
            gap: GlobalAvgPool::default(),
            fc,
        })
    }

    fn check_input(&self, x: &Tensor4<T>) -> Result<(), NnError> {
        let c = &self.config;
        if x.dims()[1..] != [c.input_channels, c.input_side, c.input_side] {
            return Err(NnError::Shape(format!(
                "network expects (_, {}, {}, {}), got {:?}",
                c.input_channels,
                c.input_side,
                c.input_side,
                x.dims()
            )));
        }
        Ok(())
    }

    /// Logits `(b, num_classes, 1, 1)` using running normalization statistics.
    pub fn forward(&self, x: &Tensor4<T>) -> Result<Tensor4<T>, NnError> {
        self.check_input(x)?;
        self.fc.forward(&self.gap.forward(&self.backbone.forward(x)?))
    }

    pub fn forward_train(&mut self, x: &Tensor4<T>) -> Result<Tensor4<T>, NnError> {
        self.check_input(x)?;
        let h = self.backbone.forward_train(x)?;
        let h = self.gap.forward_train(&h);
        self.fc.forward_train(&h)
    }

    pub fn backward(&mut self, dlogits: &Tensor4<T>) -> Result<Tensor4<T>, NnError> {
        let d = self.fc.backward(dlogits)?;
        let d = self.gap.backward(&d)?;
        self.backbone.backward(&d)
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        let mut v = self.backbone.params_mut();
        v.extend(self.fc.params_mut());
        v
    }

    pub fn params(&self) -> Vec<&Param<T>> {
        let mut v = self.backbone.params();
        v.extend(self.fc.params());
        v
    }

    pub fn num_params(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }
}

/// Two 3×3 convolutions (relu between) to 2 channels, then per-channel softmax.
#[derive(Debug, Clone)]
pub struct WinnHead<T> {
    pub conv1: Conv2d<T>,
    relu: Relu,
    pub conv2: Conv2d<T>,
    softmax: SpatialSoftmax<T>,
}

impl<T: Scalar> WinnHead<T> {
    pub fn new(cin: usize, hidden: usize, rng: &mut ChaCha8Rng) -> Self {
        Self {
            conv1: Conv2d::new(cin, hidden, 3, 1, 1, true, rng),
            relu: Relu::default(),
            conv2: Conv2d::new(hidden, 2, 3, 1, 1, true, rng),
            softmax: SpatialSoftmax::default(),
        }
    }

    pub fn forward(&self, f: &Tensor4<T>) -> Result<Tensor4<T>, NnError> {
        Ok(self.softmax.forward(&self.conv2.forward(&self.relu.forward(&self.conv1.forward(f)?))?))
    }

    pub fn forward_train(&mut self, f: &Tensor4<T>) -> Result<Tensor4<T>, NnError> {
        let h = self.conv1.forward_train(f)?;
        let h = self.relu.forward_train(&h);
        let h = self.conv2.forward_train(&h)?;
        Ok(self.softmax.forward_train(&h))
    }

    pub fn backward(&mut self, dy: &Tensor4<T>) -> Result<Tensor4<T>, NnError> {
        let d = self.softmax.backward(dy)?;
        let d = self.conv2.backward(&d)?;
        let d = self.relu.backward(&d)?;
        self.conv1.backward(&d)
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        let mut v = self.conv1.params_mut();
        v.extend(self.conv2.params_mut());
        v
    }

    pub fn params(&self) -> Vec<&Param<T>> {
        let mut v = self.conv1.params();
        v.extend(self.conv2.params());
        v
    }
}

/// Skeleton-decoding network: backbone → bilinear resize to 18×18 → [`WinnHead`].
#[derive(Debug, Clone)]
pub struct Winn<T> {
    pub config: NetConfig,
    pub backbone: Backbone<T>,
    resize: Resize,
    pub head: WinnHead<T>,
}

impl<T: Scalar> Winn<T> {
    pub fn new(cfg: &NetConfig) -> Result<Self, NnError> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let backbone = Backbone::new(cfg, &mut rng);
        let head = WinnHead::new(cfg.last_width(), cfg.winn_hidden, &mut rng);
        Ok(Self {
            config: cfg.clone(),
            backbone,
            resize: Resize::new(HEATMAP_SIDE, HEATMAP_SIDE),
            head,
        })
    }

    fn check_input(&self, x: &Tensor4<T>) -> Result<(), NnError> {
        let c = &self.config;
        if x.dims()[1..] != [c.input_channels, c.input_side, c.input_side] {
            return Err(NnError::Shape(format!(
                "network expects (_, {}, {}, {}), got {:?}",
                c.input_channels,
                c.input_side,
                c.input_side,
                x.dims()
            )));
        }
        Ok(())
    }

    /// Extractor output `(b, width, 18, 18)`.
    pub fn extract(&self, x: &Tensor4<T>) -> Result<Tensor4<T>, NnError> {
        self.check_input(x)?;
        Ok(self.resize.forward(&self.backbone.forward(x)?))
    }

    pub fn decode(&self, features: &Tensor4<T>) -> Result<Tensor4<T>, NnError> {
        self.head.forward(features)
    }

    /// Normalized heatmaps `(b, 2, 18, 18)`.
    pub fn forward(&self, x: &Tensor4<T>) -> Result<Tensor4<T>, NnError> {
        self.decode(&self.extract(x)?)
    }

    pub fn forward_train(&mut self, x: &Tensor4<T>) -> Result<Tensor4<T>, NnError> {
        self.check_input(x)?;
        let h = self.backbone.forward_train(x)?;
        let h = self.resize.forward_train(&h);
        self.head.forward_train(&h)
    }

    pub fn backward(&mut self, dy: &Tensor4<T>) -> Result<Tensor4<T>, NnError> {
        let d = self.head.backward(dy)?;
        let d = self.resize.backward(&d)?;
        self.backbone.backward(&d)
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        let mut v = self.backbone.params_mut();
        v.extend(self.head.params_mut());
        v
    }

    pub fn params(&self) -> Vec<&Param<T>> {
        let mut v = self.backbone.params();
        v.extend(self.head.params());
        v
    }

    pub fn num_params(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }
}
