//! A small multidigit classifier: an input transform, tanh hidden layers and
//! 13 independent 10-way softmax heads, trained with summed per-digit
//! cross-entropy or with the distillation loss
//! `(1 - alpha) * CE + alpha * T^2 * KL(teacher_T || student_T)`.

use std::fs;
use std::io::Write;
use std::path::Path;

use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::imaging::{Image, Sample};
use crate::soft_decoder::{LogitMatrix, LogitSource};
use crate::symbology::{DigitSequence, LEN};

const HEADS: usize = LEN;
const CLASSES: usize = 10;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("loss became non-finite at epoch {epoch}")]
    DivergedLoss { epoch: usize },
    #[error("empty training set")]
    EmptyDataset,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Turns an image into the network's input vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InputTransform {
    /// Box-filter resize to `width x height` of darkness mapped to [-1, 1]
    /// (white -1, black 1), flattened row-major.
    Resize { width: usize, height: usize },
}

impl Default for InputTransform {
    fn default() -> Self {
        // wide enough to keep every module of a 95-module symbol distinct
        InputTransform::Resize { width: 285, height: 1 }
    }
}

impl InputTransform {
    pub fn len(&self) -> usize {
        match *self {
            InputTransform::Resize { width, height } => width * height,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn apply(&self, img: &Image) -> Vec<f64> {
        match *self {
            InputTransform::Resize { width, height } => {
                let (iw, ih) = (img.width() as f64, img.height() as f64);
                let mut out = vec![0.0; width * height];
                for oy in 0..height {
                    let (y0, y1) = (oy as f64 * ih / height as f64, (oy + 1) as f64 * ih / height as f64);
                    for ox in 0..width {
                        let (x0, x1) = (ox as f64 * iw / width as f64, (ox + 1) as f64 * iw / width as f64);
                        out[oy * width + ox] = 2.0 * box_mean(img, x0, x1, y0, y1) - 1.0;
                    }
                }
                out
            }
        }
    }
}

/// Mean darkness over a fractional pixel rectangle.
fn box_mean(img: &Image, x0: f64, x1: f64, y0: f64, y1: f64) -> f64 {
    let mut acc = 0.0;
    let mut area = 0.0;
    let mut y = y0.floor() as usize;
    while (y as f64) < y1 && y < img.height() {
        let wy = (y1.min(y as f64 + 1.0) - y0.max(y as f64)).max(0.0);
        let mut x = x0.floor() as usize;
        while (x as f64) < x1 && x < img.width() {
            let wx = (x1.min(x as f64 + 1.0) - x0.max(x as f64)).max(0.0);
            acc += wx * wy * (255.0 - img.get(x, y) as f64) / 255.0;
            area += wx * wy;
            x += 1;
        }
        y += 1;
    }
    if area > 0.0 {
        acc / area
    } else {
        0.0
    }
}

/// Distillation weights.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KdConfig {
    pub alpha: f64,
    pub temperature: f64,
}

impl Default for KdConfig {
    fn default() -> Self {
        Self { alpha: 0.7, temperature: 2.0 }
    }
}

impl KdConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(TrainError::InvalidConfig("alpha must lie in [0, 1]".into()));
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(TrainError::InvalidConfig("temperature must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    /// Initial Adam step size; it follows a cosine schedule down to zero
    /// over the epochs.
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { learning_rate: 2e-3, batch_size: 32, epochs: 30, seed: 0 }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(TrainError::InvalidConfig("learning rate must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(TrainError::InvalidConfig("batch size must be positive".into()));
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Losses over row-major `rows x classes` logits
// ---------------------------------------------------------------------------

fn softmax_scaled(row: &[f64], temperature: f64) -> Vec<f64> {
    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = row.iter().map(|v| ((v - max) / temperature).exp()).collect();
    let sum: f64 = e.iter().sum();
    e.into_iter().map(|v| v / sum).collect()
}

fn log_softmax_scaled(row: &[f64], temperature: f64) -> Vec<f64> {
    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = row.iter().map(|v| ((v - max) / temperature).exp()).sum::<f64>().ln();
    row.iter().map(|v| (v - max) / temperature - lse).collect()
}

/// Summed cross-entropy and its gradient with respect to the logits.
pub fn cross_entropy_rows(logits: &[f64], classes: usize, targets: &[usize]) -> (f64, Vec<f64>) {
    let mut loss = 0.0;
    let mut grad = vec![0.0; logits.len()];
    for (r, &t) in targets.iter().enumerate() {
        let row = &logits[r * classes..(r + 1) * classes];
        let lp = log_softmax_scaled(row, 1.0);
        loss -= lp[t];
        for c in 0..classes {
            grad[r * classes + c] = lp[c].exp() - if c == t { 1.0 } else { 0.0 };
        }
    }
    (loss, grad)
}

/// Distillation loss and gradient with respect to the student logits.
pub fn distillation_rows(
    student: &[f64],
    teacher: &[f64],
    classes: usize,
    targets: &[usize],
    kd: &KdConfig,
) -> (f64, Vec<f64>) {
    let (hard, hard_grad) = cross_entropy_rows(student, classes, targets);
    let t = kd.temperature;
    let mut kl = 0.0;
    let mut kl_grad = vec![0.0; student.len()];
    for r in 0..targets.len() {
        let span = r * classes..(r + 1) * classes;
        let log_pt = log_softmax_scaled(&teacher[span.clone()], t);
        let log_ps = log_softmax_scaled(&student[span.clone()], t);
        for c in 0..classes {
            let pt = log_pt[c].exp();
            if pt > 0.0 {
                kl += pt * (log_pt[c] - log_ps[c]);
            }
            // d(T^2 KL)/dz = T * (p_student - p_teacher)
            kl_grad[r * classes + c] = t * (log_ps[c].exp() - pt);
        }
    }
    let kl = kl * t * t;
    let loss = (1.0 - kd.alpha) * hard + kd.alpha * kl;
    let grad = hard_grad.iter().zip(&kl_grad).map(|(h, k)| (1.0 - kd.alpha) * h + kd.alpha * k).collect();
    (loss, grad)
}

fn flat(lm: &LogitMatrix) -> Vec<f64> {
    lm.rows().iter().flatten().copied().collect()
}

fn targets_of(truth: &DigitSequence) -> Vec<usize> {
    truth.digits().iter().map(|&d| d as usize).collect()
}

/// Sum over the 13 digits of the cross-entropy against the true digit.
pub fn hard_loss(lm: &LogitMatrix, truth: &DigitSequence) -> f64 {
    cross_entropy_rows(&flat(lm), CLASSES, &targets_of(truth)).0
}

/// `(1 - alpha) * hard_loss + alpha * T^2 * sum_rows KL(softmax(teacher/T) || softmax(student/T))`.
pub fn kd_loss(student: &LogitMatrix, teacher: &LogitMatrix, truth: &DigitSequence, cfg: &KdConfig) -> f64 {
    distillation_rows(&flat(student), &flat(teacher), CLASSES, &targets_of(truth), cfg).0
}

/// Softmax of one row at temperature `t`; exposed for reports and tests.
pub fn tempered_softmax(row: &[f64], t: f64) -> Vec<f64> {
    softmax_scaled(row, t)
}

// ---------------------------------------------------------------------------
// Network
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
struct Dense {
    /// out x in
    w: Array2<f64>,
    b: Array1<f64>,
}

/// Fully connected tanh network with `heads x classes` linear outputs.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    layers: Vec<Dense>,
    heads: usize,
    classes: usize,
}

struct Cache {
    /// activations[0] is the input; activations[k] the output of layer k-1
    activations: Vec<Array2<f64>>,
}

impl Mlp {
    /// `hidden` widths between `inputs` and the `heads * classes` outputs;
    /// Xavier-uniform weights, zero biases.
    pub fn new(inputs: usize, hidden: &[usize], heads: usize, classes: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut sizes = vec![inputs];
        sizes.extend_from_slice(hidden);
        sizes.push(heads * classes);
        let layers = sizes
            .windows(2)
            .map(|w| {
                let limit = (6.0 / (w[0] + w[1]) as f64).sqrt();
                Dense {
                    w: Array2::from_shape_fn((w[1], w[0]), |_| rng.random_range(-limit..limit)),
                    b: Array1::zeros(w[1]),
                }
            })
            .collect();
        Self { layers, heads, classes }
    }

    pub fn zeroed(mut self) -> Self {
        for l in &mut self.layers {
            l.w.fill(0.0);
            l.b.fill(0.0);
        }
        self
    }

    pub fn inputs(&self) -> usize {
        self.layers[0].w.ncols()
    }

    pub fn heads(&self) -> usize {
        self.heads
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    /// Widths of every layer, input first.
    pub fn layer_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![self.inputs()];
        sizes.extend(self.layers.iter().map(|l| l.w.nrows()));
        sizes
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.w.len() + l.b.len()).sum()
    }

    pub fn params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for l in &self.layers {
            out.extend(l.w.iter());
            out.extend(l.b.iter());
        }
        out
    }

    pub fn set_params(&mut self, params: &[f64]) {
        assert_eq!(params.len(), self.param_count(), "parameter vector length");
        let mut i = 0;
        for l in &mut self.layers {
            for v in l.w.iter_mut().chain(l.b.iter_mut()) {
                *v = params[i];
                i += 1;
            }
        }
    }

    fn forward_cached(&self, x: ArrayView2<f64>) -> Cache {
        let mut activations = vec![x.to_owned()];
        let last = self.layers.len() - 1;
        for (k, l) in self.layers.iter().enumerate() {
            let mut z = activations[k].dot(&l.w.t());
            z += &l.b;
            if k < last {
                z.mapv_inplace(f64::tanh);
            }
            activations.push(z);
        }
        Cache { activations }
    }

    /// Logits for a batch of inputs (one row per sample).
    pub fn forward_batch(&self, x: ArrayView2<f64>) -> Array2<f64> {
        self.forward_cached(x).activations.pop().expect("output layer")
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        let view = ArrayView2::from_shape((1, x.len()), x).expect("input row");
        self.forward_batch(view).into_raw_vec_and_offset().0
    }

    /// Mean loss over the batch and its gradient in [`Mlp::params`] order.
    /// With `teacher` given, the distillation loss is used.
    pub fn loss_and_grad(
        &self,
        x: ArrayView2<f64>,
        targets: &[Vec<usize>],
        teacher: Option<(ArrayView2<f64>, &KdConfig)>,
    ) -> (f64, Vec<f64>) {
        let n = x.nrows();
        let cache = self.forward_cached(x);
        let out = cache.activations.last().expect("output");
        let mut delta = Array2::<f64>::zeros(out.raw_dim());
        let mut loss = 0.0;
        for i in 0..n {
            let row = out.row(i).to_vec();
            let (l, g) = match teacher {
                None => cross_entropy_rows(&row, self.classes, &targets[i]),
                Some((t, kd)) => distillation_rows(&row, &t.row(i).to_vec(), self.classes, &targets[i], kd),
            };
            loss += l;
            for (d, gv) in delta.row_mut(i).iter_mut().zip(g) {
                *d = gv / n as f64;
            }
        }

        let mut grads: Vec<(Array2<f64>, Array1<f64>)> = Vec::with_capacity(self.layers.len());
        for k in (0..self.layers.len()).rev() {
            let input = &cache.activations[k];
            let gw = delta.t().dot(input);
            let gb = delta.sum_axis(Axis(0));
            if k > 0 {
                let mut back = delta.dot(&self.layers[k].w);
                // tanh' = 1 - a^2 on the layer's own output
                back.zip_mut_with(input, |d, a| *d *= 1.0 - a * a);
                delta = back;
            }
            grads.push((gw, gb));
        }
        grads.reverse();
        let mut flat = Vec::with_capacity(self.param_count());
        for (gw, gb) in grads {
            flat.extend(gw.iter());
            flat.extend(gb.iter());
        }
        (loss / n as f64, flat)
    }
}

/// Multidigit classifier: input transform plus an [`Mlp`] with 13 heads of 10.
#[derive(Debug, Clone, PartialEq)]
pub struct MultidigitModel {
    pub transform: InputTransform,
    pub net: Mlp,
}

impl MultidigitModel {
    pub fn new(transform: InputTransform, hidden: &[usize], seed: u64) -> Self {
        Self { transform, net: Mlp::new(transform.len(), hidden, HEADS, CLASSES, seed) }
    }

    pub fn param_count(&self) -> usize {
        self.net.param_count()
    }

    pub fn forward_features(&self, features: &[f64]) -> LogitMatrix {
        let out = self.net.forward(features);
        let mut m = [[0.0; CLASSES]; HEADS];
        for (i, row) in m.iter_mut().enumerate() {
            row.copy_from_slice(&out[i * CLASSES..(i + 1) * CLASSES]);
        }
        LogitMatrix(m)
    }

    pub fn forward(&self, img: &Image) -> LogitMatrix {
        self.forward_features(&self.transform.apply(img))
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint {
            format: CHECKPOINT_FORMAT.to_string(),
            version: CHECKPOINT_VERSION,
            transform: self.transform,
            layer_sizes: self.net.layer_sizes(),
            heads: HEADS,
            classes: CLASSES,
            params: self.net.params(),
        }
    }

    pub fn from_checkpoint(c: &Checkpoint) -> Result<Self, TrainError> {
        let bad = |m: &str| Err(TrainError::Checkpoint(m.to_string()));
        if c.format != CHECKPOINT_FORMAT || c.version != CHECKPOINT_VERSION {
            return bad("unsupported format or version");
        }
        if c.heads != HEADS || c.classes != CLASSES {
            return bad("model must have 13 heads of 10 classes");
        }
        if c.layer_sizes.len() < 2
            || c.layer_sizes[0] != c.transform.len()
            || *c.layer_sizes.last().unwrap() != HEADS * CLASSES
        {
            return bad("layer sizes do not match the transform and heads");
        }
        if c.params.iter().any(|p| !p.is_finite()) {
            return bad("non-finite parameter");
        }
        let hidden = &c.layer_sizes[1..c.layer_sizes.len() - 1];
        let mut model = Self::new(c.transform, hidden, 0);
        if model.param_count() != c.params.len() {
            return bad("parameter count does not match layer sizes");
        }
        model.net.set_params(&c.params);
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), TrainError> {
        let json = serde_json::to_string(&self.to_checkpoint()).map_err(|e| TrainError::Checkpoint(e.to_string()))?;
        fs::write(path, json)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, TrainError> {
        let text = fs::read_to_string(path)?;
        let c: Checkpoint = serde_json::from_str(&text).map_err(|e| TrainError::Checkpoint(e.to_string()))?;
        Self::from_checkpoint(&c)
    }
}

impl LogitSource for MultidigitModel {
    fn logits(&self, img: &Image) -> LogitMatrix {
        self.forward(img)
    }
}

pub const CHECKPOINT_FORMAT: &str = "smartbar-multidigit-mlp";
pub const CHECKPOINT_VERSION: u32 = 1;

/// JSON checkpoint: shape metadata, input transform and flat parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub transform: InputTransform,
    pub layer_sizes: Vec<usize>,
    pub heads: usize,
    pub classes: usize,
    pub params: Vec<f64>,
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

/// Mean training loss per epoch.
pub type LossHistory = Vec<f64>;

pub fn write_history_csv(path: impl AsRef<Path>, history: &[f64]) -> Result<(), TrainError> {
    let mut f = fs::File::create(path)?;
    writeln!(f, "epoch,loss")?;
    for (e, l) in history.iter().enumerate() {
        writeln!(f, "{},{}", e + 1, l)?;
    }
    Ok(())
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    fn new(n: usize) -> Self {
        Self { m: vec![0.0; n], v: vec![0.0; n], t: 0 }
    }

    fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        const B1: f64 = 0.9;
        const B2: f64 = 0.999;
        self.t += 1;
        let (c1, c2) = (1.0 - B1.powi(self.t), 1.0 - B2.powi(self.t));
        for i in 0..params.len() {
            self.m[i] = B1 * self.m[i] + (1.0 - B1) * grad[i];
            self.v[i] = B2 * self.v[i] + (1.0 - B2) * grad[i] * grad[i];
            params[i] -= lr * (self.m[i] / c1) / ((self.v[i] / c2).sqrt() + 1e-8);
        }
    }
}

/// Features, targets and optional teacher logits, ready for training.
pub struct Prepared {
    features: Array2<f64>,
    targets: Vec<Vec<usize>>,
    teacher: Option<Array2<f64>>,
}

impl Prepared {
    pub fn new(transform: &InputTransform, samples: &[Sample], teacher: Option<&MultidigitModel>) -> Self {
        let dim = transform.len();
        let mut features = Array2::zeros((samples.len(), dim));
        for (i, s) in samples.iter().enumerate() {
            features.row_mut(i).assign(&Array1::from(transform.apply(&s.image)));
        }
        let teacher = teacher.map(|t| {
            let mut out = Array2::zeros((samples.len(), HEADS * CLASSES));
            for (i, s) in samples.iter().enumerate() {
                out.row_mut(i).assign(&Array1::from(flat(&t.forward(&s.image))));
            }
            out
        });
        let targets = samples.iter().map(|s| targets_of(&s.truth)).collect();
        Self { features, targets, teacher }
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }
}

/// Mini-batch training with Adam; shuffling is seeded by `cfg.seed`.
/// `kd` switches the loss to distillation against the prepared teacher logits.
pub fn train_prepared(
    model: &MultidigitModel,
    data: &Prepared,
    cfg: &TrainConfig,
    kd: Option<&KdConfig>,
) -> Result<(MultidigitModel, LossHistory), TrainError> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    if let Some(kd) = kd {
        kd.validate()?;
        if data.teacher.is_none() {
            return Err(TrainError::InvalidConfig("distillation needs teacher logits".into()));
        }
    }
    let mut model = model.clone();
    let mut params = model.net.params();
    let mut adam = Adam::new(params.len());
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);
    let dim = data.features.ncols();

    for epoch in 0..cfg.epochs {
        let lr = cfg.learning_rate * 0.5 * (1.0 + (std::f64::consts::PI * epoch as f64 / cfg.epochs as f64).cos());
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let mut x = Array2::zeros((batch.len(), dim));
            let mut t = data.teacher.as_ref().map(|_| Array2::zeros((batch.len(), HEADS * CLASSES)));
            let mut targets = Vec::with_capacity(batch.len());
            for (r, &i) in batch.iter().enumerate() {
                x.row_mut(r).assign(&data.features.row(i));
                if let (Some(t), Some(src)) = (t.as_mut(), data.teacher.as_ref()) {
                    t.row_mut(r).assign(&src.row(i));
                }
                targets.push(data.targets[i].clone());
            }
            let teacher = match (kd, t.as_ref()) {
                (Some(kd), Some(t)) => Some((t.view(), kd)),
                _ => None,
            };
            let (loss, grad) = model.net.loss_and_grad(x.view(), &targets, teacher);
            if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(TrainError::DivergedLoss { epoch: epoch + 1 });
            }
            total += loss * batch.len() as f64;
            adam.step(&mut params, &grad, lr);
            model.net.set_params(&params);
        }
        history.push(total / data.len() as f64);
    }
    Ok((model, history))
}

/// Trains on samples, optionally distilling from `kd = (teacher, config)`.
pub fn train(
    model: &MultidigitModel,
    samples: &[Sample],
    cfg: &TrainConfig,
    kd: Option<(&MultidigitModel, &KdConfig)>,
) -> Result<(MultidigitModel, LossHistory), TrainError> {
    if samples.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    let data = Prepared::new(&model.transform, samples, kd.map(|(t, _)| t));
    train_prepared(model, &data, cfg, kd.map(|(_, c)| c))
}

/// Two-stage schedule: train on `warmup` until the epoch loss drops to
/// `warmup_target` (or `max_warmup_epochs` pass), then train `cfg.epochs`
/// on `warmup` and `full` together.
pub fn train_curriculum(
    model: &MultidigitModel,
    warmup: &[Sample],
    full: &[Sample],
    cfg: &TrainConfig,
    kd: Option<(&MultidigitModel, &KdConfig)>,
    warmup_target: f64,
    max_warmup_epochs: usize,
) -> Result<(MultidigitModel, LossHistory), TrainError> {
    let teacher = kd.map(|(t, _)| t);
    let stage1 = Prepared::new(&model.transform, warmup, teacher);
    let mut current = model.clone();
    let mut history = Vec::new();
    for epoch in 0..max_warmup_epochs {
        let one = TrainConfig { epochs: 1, seed: crate::mix_seed(cfg.seed, epoch as u64), ..*cfg };
        let (m, h) = train_prepared(&current, &stage1, &one, kd.map(|(_, c)| c))?;
        current = m;
        history.extend(h);
        if *history.last().unwrap() <= warmup_target {
            break;
        }
    }
    let mut both: Vec<Sample> = warmup.to_vec();
    both.extend_from_slice(full);
    let stage2 = Prepared::new(&model.transform, &both, teacher);
    let (m, h) = train_prepared(&current, &stage2, cfg, kd.map(|(_, c)| c))?;
    history.extend(h);
    Ok((m, history))
}

/// Greedy sequence accuracy of `model` on `samples`.
pub fn greedy_accuracy(model: &MultidigitModel, samples: &[Sample]) -> f64 {
    if samples.is_empty() {
        return 0.0;
    }
    let data = Prepared::new(&model.transform, samples, None);
    let out = model.net.forward_batch(data.features.view());
    let correct = (0..samples.len())
        .filter(|&i| {
            let row = out.slice(s![i, ..]);
            (0..HEADS).all(|h| {
                let cells = row.slice(s![h * CLASSES..(h + 1) * CLASSES]);
                let mut best = 0;
                for c in 1..CLASSES {
                    if cells[c] > cells[best] {
                        best = c;
                    }
                }
                best == data.targets[i][h]
            })
        })
        .count();
    correct as f64 / samples.len() as f64
}
