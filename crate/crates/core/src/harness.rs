//! Desk-scale experiments: seeded synthetic classification tasks, a frozen
//! random featurizer with trainable residual adapters and head, SGD training,
//! evaluation and prune-fraction sweeps.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::adapter::{augment, AdapterLayer};
use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;
use crate::optimizer::{self, OptimConfig};
use crate::strategies::{self, combined_select, Method, PruneScope};

/// Mixes a base seed with a purpose tag so that data, init and training
/// draw from unrelated streams.
pub fn derive_seed(seed: u64, tag: u64) -> u64 {
    let mut z = seed ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

const TAG_DATA: u64 = 1;
const TAG_INIT: u64 = 2;
const TAG_TRAIN: u64 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskKind {
    Blobs,
    Moons,
    XorGrid,
}

impl TaskKind {
    pub fn name(self) -> &'static str {
        match self {
            TaskKind::Blobs => "blobs",
            TaskKind::Moons => "moons",
            TaskKind::XorGrid => "xorgrid",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticTask {
    pub kind: TaskKind,
    pub n_train: usize,
    pub n_dev: usize,
    pub n_test: usize,
    pub input_dim: usize,
    pub classes: usize,
    pub noise: f64,
    /// Usually supplied by the run rather than the task description.
    #[serde(default)]
    pub seed: u64,
}

impl SyntheticTask {
    pub fn validate(&self) -> Result<()> {
        if self.n_train == 0 || self.n_dev == 0 || self.n_test == 0 {
            return Err(Error::InvalidArgument("every split needs at least one example".into()));
        }
        if self.input_dim == 0 {
            return Err(Error::InvalidArgument("input_dim must be positive".into()));
        }
        if self.classes < 2 {
            return Err(Error::InvalidArgument("need at least two classes".into()));
        }
        if !(self.noise.is_finite() && self.noise >= 0.0) {
            return Err(Error::InvalidArgument("noise must be finite and non-negative".into()));
        }
        match self.kind {
            TaskKind::Moons | TaskKind::XorGrid if self.classes != 2 => Err(Error::InvalidArgument(format!(
                "{} tasks have exactly two classes",
                self.kind.name()
            ))),
            TaskKind::Moons | TaskKind::XorGrid if self.input_dim < 2 => Err(Error::InvalidArgument(format!(
                "{} tasks need input_dim >= 2",
                self.kind.name()
            ))),
            _ => Ok(()),
        }
    }

    pub fn generate(&self) -> Result<Splits> {
        generate_task(self)
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset {
    pub x: Vec<Vec<f64>>,
    pub y: Vec<usize>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Splits {
    pub train: Dataset,
    pub dev: Dataset,
    pub test: Dataset,
    pub input_dim: usize,
    pub classes: usize,
}

fn gauss(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

/// Deterministic, disjoint train/dev/test splits. Labels are assigned
/// round-robin before shuffling, so every class has `n/k` examples up to one.
pub fn generate_task(spec: &SyntheticTask) -> Result<Splits> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, TAG_DATA));
    let n = spec.n_train + spec.n_dev + spec.n_test;
    let dim = spec.input_dim;

    let centers: Vec<Vec<f64>> = (0..spec.classes)
        .map(|_| {
            let v: Vec<f64> = (0..dim).map(|_| gauss(&mut rng)).collect();
            let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt().max(1e-12);
            v.iter().map(|a| 2.0 * a / norm).collect()
        })
        .collect();

    let mut labels: Vec<usize> = (0..n).map(|i| i % spec.classes).collect();
    labels.shuffle(&mut rng);

    let mut x = Vec::with_capacity(n);
    for &label in &labels {
        let mut point = match spec.kind {
            TaskKind::Blobs => centers[label].clone(),
            TaskKind::Moons => {
                let t = rng.random_range(0.0..std::f64::consts::PI);
                let mut p = vec![0.0; dim];
                if label == 0 {
                    p[0] = t.cos();
                    p[1] = t.sin();
                } else {
                    p[0] = 1.0 - t.cos();
                    p[1] = 0.5 - t.sin();
                }
                p
            }
            TaskKind::XorGrid => {
                let s0: f64 = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
                // label 1 iff the first two signs differ
                let s1 = if label == 1 { -s0 } else { s0 };
                let mut p = vec![0.0; dim];
                p[0] = s0 * rng.random_range(0.1..1.0);
                p[1] = s1 * rng.random_range(0.1..1.0);
                for v in p.iter_mut().skip(2) {
                    *v = rng.random_range(-1.0..1.0);
                }
                p
            }
        };
        if spec.noise > 0.0 {
            for v in &mut point {
                *v += spec.noise * gauss(&mut rng);
            }
        }
        x.push(point);
    }

    let take = |count: usize, offset: usize| Dataset {
        x: x[offset..offset + count].to_vec(),
        y: labels[offset..offset + count].to_vec(),
    };
    let train = take(spec.n_train, 0);
    let dev = take(spec.n_dev, spec.n_train);
    let test = take(spec.n_test, spec.n_train + spec.n_dev);
    Ok(Splits {
        train,
        dev,
        test,
        input_dim: dim,
        classes: spec.classes,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    /// Hidden width of the featurizer and adapters.
    pub d: usize,
    /// Adapter bottleneck width.
    pub r: usize,
    /// Number of stacked residual adapters.
    #[serde(default = "default_layers")]
    pub layers: usize,
}

fn default_layers() -> usize {
    2
}

impl Default for ModelSpec {
    fn default() -> Self {
        Self { d: 16, r: 4, layers: 2 }
    }
}

/// Frozen `ReLU(W[x;1])` featurizer, a stack of residual adapters and a
/// linear head `H[h;1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct TinyModel {
    featurizer: DenseMatrix,
    adapters: Vec<AdapterLayer>,
    head: DenseMatrix,
}

impl TinyModel {
    /// Random init. Adapters start with a small up-projection so the stack is
    /// close to the identity.
    pub fn init(spec: &ModelSpec, input_dim: usize, classes: usize, seed: u64) -> Result<Self> {
        if spec.d == 0 || spec.r == 0 || spec.layers == 0 || input_dim == 0 || classes < 2 {
            return Err(Error::InvalidArgument(format!(
                "invalid model dims d={} r={} layers={} input={input_dim} classes={classes}",
                spec.d, spec.r, spec.layers
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, TAG_INIT));
        let mut normal = |rows, cols, std: f64| DenseMatrix::from_fn(rows, cols, |_, _| std * gauss(&mut rng));
        let featurizer = normal(spec.d, input_dim + 1, (2.0 / (input_dim + 1) as f64).sqrt());
        let adapters = (0..spec.layers)
            .map(|_| {
                let a = normal(spec.r, spec.d + 1, (1.0 / (spec.d + 1) as f64).sqrt());
                let b = normal(spec.d, spec.r, 0.01);
                AdapterLayer::new(a, b)
            })
            .collect::<Result<Vec<_>>>()?;
        let head = normal(classes, spec.d + 1, (1.0 / (spec.d + 1) as f64).sqrt());
        Self::from_parts(featurizer, adapters, head)
    }

    pub fn from_parts(featurizer: DenseMatrix, adapters: Vec<AdapterLayer>, head: DenseMatrix) -> Result<Self> {
        let d = featurizer.rows();
        if d == 0 || featurizer.cols() < 2 {
            return Err(Error::ShapeMismatch("featurizer must be d x (input+1)".into()));
        }
        for (i, l) in adapters.iter().enumerate() {
            if l.d() != d {
                return Err(Error::ShapeMismatch(format!("adapter {i} has width {}, featurizer {d}", l.d())));
            }
        }
        if head.cols() != d + 1 || head.rows() < 2 {
            return Err(Error::ShapeMismatch(format!(
                "head is {}x{}, expected k x {}",
                head.rows(),
                head.cols(),
                d + 1
            )));
        }
        Ok(Self {
            featurizer,
            adapters,
            head,
        })
    }

    pub fn featurizer(&self) -> &DenseMatrix {
        &self.featurizer
    }

    pub fn adapters(&self) -> &[AdapterLayer] {
        &self.adapters
    }

    pub fn head(&self) -> &DenseMatrix {
        &self.head
    }

    pub fn d(&self) -> usize {
        self.featurizer.rows()
    }

    pub fn input_dim(&self) -> usize {
        self.featurizer.cols() - 1
    }

    pub fn classes(&self) -> usize {
        self.head.rows()
    }

    /// Same featurizer and head with different adapters of matching shape.
    pub fn with_adapters(&self, adapters: Vec<AdapterLayer>) -> Result<Self> {
        if adapters.len() != self.adapters.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} adapters given, model has {}",
                adapters.len(),
                self.adapters.len()
            )));
        }
        for (new, old) in adapters.iter().zip(&self.adapters) {
            new.a().check_same_shape(old.a())?;
            new.b().check_same_shape(old.b())?;
        }
        Self::from_parts(self.featurizer.clone(), adapters, self.head.clone())
    }

    pub fn features(&self, x: &[f64]) -> Result<Vec<f64>> {
        let z = self.featurizer.matvec(&augment(x))?;
        Ok(z.into_iter().map(|v| v.max(0.0)).collect())
    }

    /// Representation after all adapters.
    pub fn hidden(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut h = self.features(x)?;
        for l in &self.adapters {
            h = l.forward(&h, true)?;
        }
        Ok(h)
    }

    pub fn logits(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.head.matvec(&augment(&self.hidden(x)?))
    }

    pub fn predict(&self, x: &[f64]) -> Result<usize> {
        Ok(argmax(&self.logits(x)?))
    }
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub steps: usize,
    pub lr: f64,
    pub batch: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            steps: 2000,
            lr: 0.05,
            batch: 32,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(Error::InvalidArgument("lr must be positive".into()));
        }
        if self.batch == 0 {
            return Err(Error::InvalidArgument("batch must be positive".into()));
        }
        Ok(())
    }
}

fn softmax_xent(logits: &[f64], label: usize) -> (f64, Vec<f64>) {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    let loss = sum.ln() - (logits[label] - max);
    let mut grad: Vec<f64> = exps.iter().map(|e| e / sum).collect();
    grad[label] -= 1.0;
    (loss, grad)
}

struct Grads {
    a: Vec<DenseMatrix>,
    b: Vec<DenseMatrix>,
    head: DenseMatrix,
}

impl Grads {
    fn zeros(model: &TinyModel) -> Self {
        Self {
            a: model.adapters.iter().map(|l| DenseMatrix::zeros(l.r(), l.d() + 1)).collect(),
            b: model.adapters.iter().map(|l| DenseMatrix::zeros(l.d(), l.r())).collect(),
            head: DenseMatrix::zeros(model.head.rows(), model.head.cols()),
        }
    }
}

fn add_outer(m: &mut DenseMatrix, u: &[f64], v: &[f64], scale: f64) {
    for (i, ui) in u.iter().enumerate() {
        if *ui == 0.0 {
            continue;
        }
        for (dst, vj) in m.row_mut(i).iter_mut().zip(v) {
            *dst += scale * ui * vj;
        }
    }
}

/// Loss of one example and accumulation of its gradient into `g`.
fn backprop(model: &TinyModel, x: &[f64], label: usize, g: &mut Grads, scale: f64) -> Result<f64> {
    let mut hs = vec![model.features(x)?];
    let mut pre = Vec::with_capacity(model.adapters.len());
    for l in &model.adapters {
        let h = hs.last().expect("non-empty");
        let z = l.pre_activation(h)?;
        let next = l.forward(h, true)?;
        pre.push(z);
        hs.push(next);
    }
    let top = augment(hs.last().expect("non-empty"));
    let logits = model.head.matvec(&top)?;
    let (loss, dlogits) = softmax_xent(&logits, label);

    add_outer(&mut g.head, &dlogits, &top, scale);
    let d = model.d();
    let mut dh = vec![0.0; d];
    for (k, dl) in dlogits.iter().enumerate() {
        for (j, w) in model.head.row(k)[..d].iter().enumerate() {
            dh[j] += dl * w;
        }
    }
    for (li, l) in model.adapters.iter().enumerate().rev() {
        let z = &pre[li];
        let u: Vec<f64> = z.iter().map(|v| v.max(0.0)).collect();
        add_outer(&mut g.b[li], &dh, &u, scale);
        let mut dz = vec![0.0; l.r()];
        for (k, dzk) in dz.iter_mut().enumerate() {
            if z[k] > 0.0 {
                *dzk = (0..d).map(|i| l.b().get(i, k) * dh[i]).sum();
            }
        }
        let h_aug = augment(&hs[li]);
        add_outer(&mut g.a[li], &dz, &h_aug, scale);
        for (k, dzk) in dz.iter().enumerate() {
            if *dzk == 0.0 {
                continue;
            }
            for (j, dhj) in dh.iter_mut().enumerate() {
                *dhj += dzk * l.a().get(k, j);
            }
        }
    }
    Ok(loss)
}

/// Mini-batch SGD on softmax cross-entropy over adapters and head. Returns
/// the trained model and the per-step mean batch loss.
pub fn train(model: &TinyModel, data: &Dataset, config: &TrainConfig, seed: u64) -> Result<(TinyModel, Vec<f64>)> {
    config.validate()?;
    if config.steps == 0 {
        return Ok((model.clone(), Vec::new()));
    }
    if data.is_empty() {
        return Err(Error::Empty("training set"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, TAG_TRAIN));
    let mut order: Vec<usize> = (0..data.len()).collect();
    order.shuffle(&mut rng);
    let mut cursor = 0;

    let mut m = model.clone();
    let mut trace = Vec::with_capacity(config.steps);
    let batch = config.batch.min(data.len());
    let scale = 1.0 / batch as f64;
    for _ in 0..config.steps {
        let mut g = Grads::zeros(&m);
        let mut loss = 0.0;
        for _ in 0..batch {
            if cursor == order.len() {
                order.shuffle(&mut rng);
                cursor = 0;
            }
            let i = order[cursor];
            cursor += 1;
            loss += backprop(&m, &data.x[i], data.y[i], &mut g, scale)? * scale;
        }
        if !loss.is_finite() {
            return Err(Error::NonFinite("training loss"));
        }
        trace.push(loss);
        let step = |p: &DenseMatrix, d: &DenseMatrix| {
            let mut out = p.clone();
            for (v, gv) in out.data_mut().iter_mut().zip(d.data()) {
                *v -= config.lr * gv;
            }
            out
        };
        m.adapters = m
            .adapters
            .iter()
            .enumerate()
            .map(|(li, l)| l.with_params(step(l.a(), &g.a[li]), step(l.b(), &g.b[li])))
            .collect::<Result<_>>()?;
        m.head = step(&m.head, &g.head);
        if !m.head.is_finite() {
            return Err(Error::NonFinite("model parameters"));
        }
    }
    Ok((m, trace))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    #[default]
    Accuracy,
    MacroF1,
}

pub fn accuracy(truth: &[usize], pred: &[usize]) -> Result<f64> {
    if truth.is_empty() {
        return Err(Error::Empty("evaluation split"));
    }
    if truth.len() != pred.len() {
        return Err(Error::DimensionMismatch {
            expected: truth.len(),
            found: pred.len(),
        });
    }
    let hits = truth.iter().zip(pred).filter(|(t, p)| t == p).count();
    Ok(hits as f64 / truth.len() as f64)
}

/// Unweighted mean of per-class F1 over classes that occur in the truth or
/// the predictions.
pub fn macro_f1(truth: &[usize], pred: &[usize]) -> Result<f64> {
    accuracy(truth, pred)?;
    let k = truth.iter().chain(pred).max().map_or(0, |m| m + 1);
    let mut tp = vec![0usize; k];
    let mut fp = vec![0usize; k];
    let mut fneg = vec![0usize; k];
    for (&t, &p) in truth.iter().zip(pred) {
        if t == p {
            tp[t] += 1;
        } else {
            fp[p] += 1;
            fneg[t] += 1;
        }
    }
    let mut sum = 0.0;
    let mut present = 0;
    for c in 0..k {
        let denom = 2 * tp[c] + fp[c] + fneg[c];
        if denom > 0 {
            sum += 2.0 * tp[c] as f64 / denom as f64;
            present += 1;
        }
    }
    Ok(sum / present as f64)
}

pub fn predictions(model: &TinyModel, data: &Dataset) -> Result<Vec<usize>> {
    data.x.iter().map(|x| model.predict(x)).collect()
}

pub fn evaluate(model: &TinyModel, data: &Dataset, metric: Metric) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::Empty("evaluation split"));
    }
    let pred = predictions(model, data)?;
    match metric {
        Metric::Accuracy => accuracy(&data.y, &pred),
        Metric::MacroF1 => macro_f1(&data.y, &pred),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub task: String,
    pub method: Method,
    pub scope: PruneScope,
    pub p: f64,
    pub p_hat: f64,
    pub dev_metric: f64,
    pub test_metric: f64,
    pub seed: u64,
    /// Method whose mask produced the metrics; differs from `method` only
    /// for Combined.
    pub selected: Method,
}

impl SweepRecord {
    pub fn retained_pct(&self) -> f64 {
        100.0 * (1.0 - self.p_hat)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub task: String,
    pub fractions: Vec<f64>,
    pub scopes: Vec<PruneScope>,
    pub methods: Vec<Method>,
    pub optim: OptimConfig,
    pub metric: Metric,
    pub seed: u64,
}

struct Cell {
    p_hat: f64,
    dev: f64,
    test: f64,
}

/// Prune-fraction sweep over `fractions × scopes × methods`, emitted in that
/// nesting order. The optimizer result does not depend on `p` or the scope,
/// so it is computed once per layer.
pub fn sweep(model: &TinyModel, splits: &Splits, spec: &SweepSpec) -> Result<Vec<SweepRecord>> {
    for &p in &spec.fractions {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::InvalidArgument(format!("fraction {p} outside [0, 1]")));
        }
    }
    let original = model.adapters();
    let optimized = original
        .iter()
        .map(|l| optimizer::run(l, &spec.optim)?.to_layer(l))
        .collect::<Result<Vec<_>>>()?;

    let score = |mask: &strategies::PruneMask| -> Result<Cell> {
        let pruned = model.with_adapters(strategies::apply_mask(original, mask)?)?;
        Ok(Cell {
            p_hat: mask.fraction(),
            dev: evaluate(&pruned, &splits.dev, spec.metric)?,
            test: evaluate(&pruned, &splits.test, spec.metric)?,
        })
    };

    let mut records = Vec::new();
    for &p in &spec.fractions {
        for &scope in &spec.scopes {
            let (trop_mask, p_hat) = strategies::tropical_mask(original, &optimized, p, scope)?;
            let std_mask = strategies::standard_mask(original, p_hat, scope)?;
            let trop = score(&trop_mask)?;
            let std = score(&std_mask)?;
            for &method in &spec.methods {
                let selected = match method {
                    Method::Combined => combined_select(std.dev, trop.dev),
                    m => m,
                };
                let cell = if selected == Method::Standard { &std } else { &trop };
                records.push(SweepRecord {
                    task: spec.task.clone(),
                    method,
                    scope,
                    p,
                    p_hat: cell.p_hat,
                    dev_metric: cell.dev,
                    test_metric: cell.test,
                    seed: spec.seed,
                    selected,
                });
            }
        }
    }
    Ok(records)
}

/// Generate the task, train a fresh model and sweep it, all from one seed.
pub fn run_pipeline(
    task: &SyntheticTask,
    model_spec: &ModelSpec,
    train_config: &TrainConfig,
    sweep_spec: &SweepSpec,
    seed: u64,
) -> Result<(TinyModel, Vec<SweepRecord>)> {
    let task = SyntheticTask { seed, ..task.clone() };
    let splits = task.generate()?;
    let model = TinyModel::init(model_spec, splits.input_dim, splits.classes, seed)?;
    let (model, _) = train(&model, &splits.train, train_config, seed)?;
    let records = sweep(&model, &splits, &SweepSpec { seed, ..sweep_spec.clone() })?;
    Ok((model, records))
}
