//! Multi-label MLP: sparse TF-IDF input, two ReLU hidden layers, one sigmoid
//! unit per label, trained on mean binary cross-entropy.

use std::collections::BTreeSet;
use std::path::Path;

use ndarray::{Array1, Array2, Axis, Zip};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::annotate::AnnotatedVerbatim;
use crate::binio::{Reader, Writer};
use crate::vectorize::{LabelRegistry, VectorizeError, Vocabulary, IDF_FORMULA};

pub const BUNDLE_MAGIC: &[u8; 5] = b"VFMB1";
pub const BUNDLE_VERSION: u32 = 1;
/// Probability clamp used by the loss.
pub const BCE_EPSILON: f64 = 1e-7;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("shape mismatch: expected {expected}, got {got}")]
    Shape { expected: usize, got: usize },
    #[error("loss became {loss} in epoch {epoch}; try a smaller learning rate")]
    Diverged { epoch: usize, loss: f64 },
    #[error("corrupt model bundle: {0}")]
    Corrupt(String),
    #[error("row {0} has no text attached")]
    MissingText(String),
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error(transparent)]
    Vectorize(#[from] VectorizeError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Optimizer {
    Adam,
    Sgd,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub optimizer: Optimizer,
    pub seed: u64,
    pub threshold: f64,
    pub hidden: [usize; 2],
    pub max_features: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 50,
            batch_size: 128,
            learning_rate: 1e-3,
            optimizer: Optimizer::Adam,
            seed: 42,
            threshold: 0.5,
            hidden: [512, 256],
            max_features: crate::vectorize::DEFAULT_MAX_FEATURES,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: &str| Err(ModelError::Config(m.to_string()));
        if self.epochs == 0 {
            return bad("epochs must be at least 1");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if !(0.0..=1.0).contains(&self.threshold) {
            return bad("threshold must be in [0, 1]");
        }
        if self.hidden.contains(&0) {
            return bad("hidden layer sizes must be at least 1");
        }
        if self.max_features == 0 {
            return bad("max_features must be at least 1");
        }
        Ok(())
    }
}

/// Weights are stored input-major: `w1` is features x hidden[0].
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    pub w2: Array2<f64>,
    pub b2: Array1<f64>,
    pub w3: Array2<f64>,
    pub b3: Array1<f64>,
}

/// Non-zero feature values of one example, sorted by index.
pub type SparseRow = Vec<(u32, f64)>;

impl ModelParams {
    pub fn zeros(n_in: usize, h1: usize, h2: usize, n_out: usize) -> Self {
        ModelParams {
            w1: Array2::zeros((n_in, h1)),
            b1: Array1::zeros(h1),
            w2: Array2::zeros((h1, h2)),
            b2: Array1::zeros(h2),
            w3: Array2::zeros((h2, n_out)),
            b3: Array1::zeros(n_out),
        }
    }

    /// He-normal hidden layers, Glorot-normal output layer, zero biases.
    pub fn init(n_in: usize, h1: usize, h2: usize, n_out: usize, rng: &mut ChaCha8Rng) -> Self {
        let mut p = Self::zeros(n_in, h1, h2, n_out);
        let mut fill = |w: &mut Array2<f64>, std: f64| {
            let d = Normal::new(0.0, std).expect("finite std");
            w.iter_mut().for_each(|x| *x = d.sample(rng));
        };
        fill(&mut p.w1, (2.0 / n_in.max(1) as f64).sqrt());
        fill(&mut p.w2, (2.0 / h1 as f64).sqrt());
        fill(&mut p.w3, (2.0 / (h2 + n_out) as f64).sqrt());
        p
    }

    pub fn n_inputs(&self) -> usize {
        self.w1.nrows()
    }

    pub fn n_outputs(&self) -> usize {
        self.w3.ncols()
    }

    pub fn hidden(&self) -> [usize; 2] {
        [self.w1.ncols(), self.w2.ncols()]
    }

    pub fn is_finite(&self) -> bool {
        self.tensors()
            .iter()
            .all(|t| t.iter().all(|x| x.is_finite()))
    }

    fn tensors(&self) -> [&[f64]; 6] {
        [
            self.w1.as_slice().expect("standard layout"),
            self.b1.as_slice().expect("standard layout"),
            self.w2.as_slice().expect("standard layout"),
            self.b2.as_slice().expect("standard layout"),
            self.w3.as_slice().expect("standard layout"),
            self.b3.as_slice().expect("standard layout"),
        ]
    }
}

pub fn relu(x: f64) -> f64 {
    x.max(0.0)
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

struct Activations {
    z1: Array2<f64>,
    a1: Array2<f64>,
    z2: Array2<f64>,
    a2: Array2<f64>,
    p: Array2<f64>,
}

fn check_rows(params: &ModelParams, rows: &[SparseRow]) -> Result<(), ModelError> {
    let n = params.n_inputs();
    for r in rows {
        if let Some(&(j, _)) = r.iter().find(|(j, _)| *j as usize >= n) {
            return Err(ModelError::Shape {
                expected: n,
                got: j as usize + 1,
            });
        }
    }
    Ok(())
}

fn forward_all(params: &ModelParams, rows: &[SparseRow]) -> Activations {
    let h1 = params.w1.ncols();
    let mut z1 = Array2::zeros((rows.len(), h1));
    for (mut out, row) in z1.outer_iter_mut().zip(rows) {
        out.assign(&params.b1);
        for &(j, x) in row {
            out.scaled_add(x, &params.w1.row(j as usize));
        }
    }
    let a1 = z1.mapv(relu);
    let z2 = a1.dot(&params.w2) + &params.b2;
    let a2 = z2.mapv(relu);
    let p = (a2.dot(&params.w3) + &params.b3).mapv(sigmoid);
    Activations { z1, a1, z2, a2, p }
}

/// Scores for a batch of sparse rows, one row of outputs per input.
pub fn forward_batch(params: &ModelParams, rows: &[SparseRow]) -> Result<Array2<f64>, ModelError> {
    check_rows(params, rows)?;
    Ok(forward_all(params, rows).p)
}

/// Scores for one dense feature vector.
pub fn forward(params: &ModelParams, x: &[f64]) -> Result<Vec<f64>, ModelError> {
    if x.len() != params.n_inputs() {
        return Err(ModelError::Shape {
            expected: params.n_inputs(),
            got: x.len(),
        });
    }
    let row: SparseRow = x
        .iter()
        .enumerate()
        .filter(|(_, &v)| v != 0.0)
        .map(|(i, &v)| (i as u32, v))
        .collect();
    Ok(forward_all(params, &[row]).p.row(0).to_vec())
}

/// Mean over labels of the clamped binary cross-entropy.
pub fn bce_loss(y_pred: &[f64], y_true: &[f64]) -> f64 {
    let n = y_pred.len().max(1) as f64;
    y_pred
        .iter()
        .zip(y_true)
        .map(|(&p, &y)| {
            let p = p.clamp(BCE_EPSILON, 1.0 - BCE_EPSILON);
            -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
        })
        .sum::<f64>()
        / n
}

fn batch_loss(p: &Array2<f64>, y: &Array2<f64>) -> f64 {
    let rows = p.nrows().max(1) as f64;
    p.outer_iter()
        .zip(y.outer_iter())
        .map(|(pr, yr)| bce_loss(pr.as_slice().expect("row"), yr.as_slice().expect("row")))
        .sum::<f64>()
        / rows
}

/// Mean binary cross-entropy of the model over a batch.
pub fn loss(
    params: &ModelParams,
    rows: &[SparseRow],
    targets: &Array2<f64>,
) -> Result<f64, ModelError> {
    check_rows(params, rows)?;
    Ok(batch_loss(&forward_all(params, rows).p, targets))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    pub w2: Array2<f64>,
    pub b2: Array1<f64>,
    pub w3: Array2<f64>,
    pub b3: Array1<f64>,
}

/// Gradient of the first layer kept only for the feature rows present in the
/// batch.
struct SparseGradients {
    w1_rows: Vec<u32>,
    w1: Array2<f64>,
    b1: Array1<f64>,
    w2: Array2<f64>,
    b2: Array1<f64>,
    w3: Array2<f64>,
    b3: Array1<f64>,
}

fn standard(a: Array2<f64>) -> Array2<f64> {
    if a.is_standard_layout() {
        a
    } else {
        a.as_standard_layout().into_owned()
    }
}

fn backward(params: &ModelParams, rows: &[SparseRow], y: &Array2<f64>) -> (f64, SparseGradients) {
    let act = forward_all(params, rows);
    let loss = batch_loss(&act.p, y);
    // d(mean BCE)/d(logit) = (p - y) / (batch * labels)
    let scale = 1.0 / (rows.len() * params.n_outputs()) as f64;
    let dz3 = (&act.p - y) * scale;
    let gw3 = standard(act.a2.t().dot(&dz3));
    let gb3 = dz3.sum_axis(Axis(0));
    let mut dz2 = dz3.dot(&params.w3.t());
    Zip::from(&mut dz2).and(&act.z2).for_each(|d, &z| {
        if z <= 0.0 {
            *d = 0.0
        }
    });
    let gw2 = standard(act.a1.t().dot(&dz2));
    let gb2 = dz2.sum_axis(Axis(0));
    let mut dz1 = dz2.dot(&params.w2.t());
    Zip::from(&mut dz1).and(&act.z1).for_each(|d, &z| {
        if z <= 0.0 {
            *d = 0.0
        }
    });
    let gb1 = dz1.sum_axis(Axis(0));

    let touched: BTreeSet<u32> = rows
        .iter()
        .flat_map(|r| r.iter().map(|&(j, _)| j))
        .collect();
    let w1_rows: Vec<u32> = touched.into_iter().collect();
    let mut gw1 = Array2::zeros((w1_rows.len(), params.w1.ncols()));
    for (r, row) in rows.iter().enumerate() {
        let d = dz1.row(r);
        for &(j, x) in row {
            let k = w1_rows.binary_search(&j).expect("collected above");
            gw1.row_mut(k).scaled_add(x, &d);
        }
    }
    (
        loss,
        SparseGradients {
            w1_rows,
            w1: gw1,
            b1: gb1,
            w2: gw2,
            b2: gb2,
            w3: gw3,
            b3: gb3,
        },
    )
}

/// Analytic gradients of the mean batch loss. The ReLU derivative at zero is
/// taken as zero.
pub fn gradients(
    params: &ModelParams,
    rows: &[SparseRow],
    targets: &Array2<f64>,
) -> Result<Gradients, ModelError> {
    if rows.is_empty() {
        return Err(ModelError::EmptyTrainingSet);
    }
    check_rows(params, rows)?;
    let (_, g) = backward(params, rows, targets);
    let mut w1 = Array2::zeros(params.w1.raw_dim());
    for (k, &j) in g.w1_rows.iter().enumerate() {
        w1.row_mut(j as usize).assign(&g.w1.row(k));
    }
    Ok(Gradients {
        w1,
        b1: g.b1,
        w2: g.w2,
        b2: g.b2,
        w3: g.w3,
        b3: g.b3,
    })
}

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

struct Moments {
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Moments {
    fn new(n: usize) -> Self {
        Moments {
            m: vec![0.0; n],
            v: vec![0.0; n],
        }
    }
}

struct OptimizerState {
    kind: Optimizer,
    lr: f64,
    t: i32,
    moments: Vec<Moments>,
}

impl OptimizerState {
    fn new(kind: Optimizer, lr: f64, params: &ModelParams) -> Self {
        let moments = match kind {
            Optimizer::Adam => params
                .tensors()
                .iter()
                .map(|t| Moments::new(t.len()))
                .collect(),
            Optimizer::Sgd => Vec::new(),
        };
        OptimizerState {
            kind,
            lr,
            t: 0,
            moments,
        }
    }

    fn step(&mut self, params: &mut ModelParams, g: &SparseGradients) {
        self.t += 1;
        let h1 = params.w1.ncols();
        let lr = self.lr;
        let c1 = 1.0 / (1.0 - BETA1.powi(self.t));
        let c2 = 1.0 / (1.0 - BETA2.powi(self.t));
        let w1 = params.w1.as_slice_mut().expect("standard layout");
        let gw1 = g.w1.as_slice().expect("standard layout");
        let rest: [(&mut [f64], &[f64]); 5] = [
            (
                params.b1.as_slice_mut().expect("layout"),
                g.b1.as_slice().expect("layout"),
            ),
            (
                params.w2.as_slice_mut().expect("layout"),
                g.w2.as_slice().expect("layout"),
            ),
            (
                params.b2.as_slice_mut().expect("layout"),
                g.b2.as_slice().expect("layout"),
            ),
            (
                params.w3.as_slice_mut().expect("layout"),
                g.w3.as_slice().expect("layout"),
            ),
            (
                params.b3.as_slice_mut().expect("layout"),
                g.b3.as_slice().expect("layout"),
            ),
        ];
        match self.kind {
            Optimizer::Sgd => {
                for (k, &j) in g.w1_rows.iter().enumerate() {
                    let j = j as usize;
                    sgd(
                        &mut w1[j * h1..(j + 1) * h1],
                        &gw1[k * h1..(k + 1) * h1],
                        lr,
                    );
                }
                for (w, gr) in rest {
                    sgd(w, gr, lr);
                }
            }
            Optimizer::Adam => {
                let (first, others) = self.moments.split_first_mut().expect("adam moments");
                // rows absent from the batch have zero gradient but their
                // moments still decay and they still move
                let mut touched = g.w1_rows.iter().enumerate().peekable();
                for (j, ((w, m), v)) in w1
                    .chunks_mut(h1)
                    .zip(first.m.chunks_mut(h1))
                    .zip(first.v.chunks_mut(h1))
                    .enumerate()
                {
                    let grad = match touched.peek() {
                        Some(&(k, &row)) if row as usize == j => {
                            touched.next();
                            Some(&gw1[k * h1..(k + 1) * h1])
                        }
                        _ => None,
                    };
                    adam(w, grad, m, v, lr, c1, c2);
                }
                for ((w, gr), mom) in rest.into_iter().zip(others) {
                    adam(w, Some(gr), &mut mom.m, &mut mom.v, lr, c1, c2);
                }
            }
        }
    }
}

fn sgd(w: &mut [f64], g: &[f64], lr: f64) {
    for (wi, gi) in w.iter_mut().zip(g) {
        *wi -= lr * gi;
    }
}

fn adam(w: &mut [f64], g: Option<&[f64]>, m: &mut [f64], v: &mut [f64], lr: f64, c1: f64, c2: f64) {
    match g {
        Some(g) => {
            for i in 0..w.len() {
                m[i] = BETA1 * m[i] + (1.0 - BETA1) * g[i];
                v[i] = BETA2 * v[i] + (1.0 - BETA2) * g[i] * g[i];
                w[i] -= lr * (m[i] * c1) / ((v[i] * c2).sqrt() + ADAM_EPS);
            }
        }
        None => {
            for i in 0..w.len() {
                m[i] *= BETA1;
                v[i] *= BETA2;
                w[i] -= lr * (m[i] * c1) / ((v[i] * c2).sqrt() + ADAM_EPS);
            }
        }
    }
}

/// One training example: sparse features and a multi-hot target.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub x: SparseRow,
    pub y: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: Option<f64>,
    /// Share of validation rows whose non-empty predicted set lies inside
    /// the true set.
    pub val_accuracy: Option<f64>,
}

fn stack_targets(batch: &[&Example], n_out: usize) -> Array2<f64> {
    let mut y = Array2::zeros((batch.len(), n_out));
    for (mut row, e) in y.outer_iter_mut().zip(batch) {
        row.assign(&ndarray::ArrayView1::from(&e.y[..]));
    }
    y
}

/// Mini-batch training for exactly `config.epochs` epochs.
pub fn train(
    train: &[Example],
    validation: &[Example],
    n_features: usize,
    n_labels: usize,
    config: &TrainConfig,
) -> Result<(ModelParams, Vec<EpochStats>), ModelError> {
    config.validate()?;
    if train.is_empty() {
        return Err(ModelError::EmptyTrainingSet);
    }
    for e in train.iter().chain(validation) {
        if e.y.len() != n_labels {
            return Err(ModelError::Shape {
                expected: n_labels,
                got: e.y.len(),
            });
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let [h1, h2] = config.hidden;
    let mut params = ModelParams::init(n_features, h1, h2, n_labels, &mut rng);
    let rows: Vec<SparseRow> = train.iter().map(|e| e.x.clone()).collect();
    check_rows(&params, &rows)?;
    let mut opt = OptimizerState::new(config.optimizer, config.learning_rate, &params);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut history = Vec::with_capacity(config.epochs);

    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<&Example> = chunk.iter().map(|&i| &train[i]).collect();
            let x: Vec<SparseRow> = batch.iter().map(|e| e.x.clone()).collect();
            let y = stack_targets(&batch, n_labels);
            let (l, g) = backward(&params, &x, &y);
            if !l.is_finite() {
                return Err(ModelError::Diverged { epoch, loss: l });
            }
            loss_sum += l * chunk.len() as f64;
            opt.step(&mut params, &g);
        }
        let train_loss = loss_sum / train.len() as f64;
        if !train_loss.is_finite() || !params.is_finite() {
            return Err(ModelError::Diverged {
                epoch,
                loss: train_loss,
            });
        }
        let (val_loss, val_accuracy) = if validation.is_empty() {
            (None, None)
        } else {
            let x: Vec<SparseRow> = validation.iter().map(|e| e.x.clone()).collect();
            let refs: Vec<&Example> = validation.iter().collect();
            let y = stack_targets(&refs, n_labels);
            let p = forward_all(&params, &x).p;
            let hits = p
                .outer_iter()
                .zip(validation)
                .filter(|(pr, e)| {
                    let pred: Vec<usize> = (0..n_labels)
                        .filter(|&k| pr[k] >= config.threshold)
                        .collect();
                    !pred.is_empty() && pred.iter().all(|&k| e.y[k] == 1.0)
                })
                .count();
            (
                Some(batch_loss(&p, &y)),
                Some(hits as f64 / validation.len() as f64),
            )
        };
        log::info!("epoch {epoch} train loss {train_loss:.6}");
        history.push(EpochStats {
            epoch,
            train_loss,
            val_loss,
            val_accuracy,
        });
    }
    Ok((params, history))
}

/// Everything needed to classify raw text.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelBundle {
    pub vocabulary: Vocabulary,
    pub labels: LabelRegistry,
    /// Domain of each label, empty for labels outside any domain.
    pub domains: Vec<String>,
    pub config: TrainConfig,
    pub params: ModelParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub label: String,
    pub domain: String,
    pub score: f64,
    pub predicted: bool,
}

fn text_of(row: &AnnotatedVerbatim) -> Result<&str, ModelError> {
    row.text
        .as_deref()
        .ok_or_else(|| ModelError::MissingText(row.verbatim_id.clone()))
}

/// Fits the vocabulary on the training texts, encodes both sets and trains.
/// `labels` pairs every output label with its domain.
pub fn train_bundle(
    train_rows: &[AnnotatedVerbatim],
    validation_rows: &[AnnotatedVerbatim],
    labels: &[(String, String)],
    config: &TrainConfig,
) -> Result<(ModelBundle, Vec<EpochStats>), ModelError> {
    config.validate()?;
    if train_rows.is_empty() {
        return Err(ModelError::EmptyTrainingSet);
    }
    let texts: Vec<&str> = train_rows.iter().map(text_of).collect::<Result<_, _>>()?;
    let vocabulary = Vocabulary::fit_texts(&texts, config.max_features)?;
    let registry = LabelRegistry::new(labels.iter().map(|(l, _)| l.clone()).collect())?;
    let encode = |rows: &[AnnotatedVerbatim]| -> Result<Vec<Example>, ModelError> {
        rows.iter()
            .map(|r| {
                Ok(Example {
                    x: vocabulary.tfidf_text(text_of(r)?),
                    y: registry.encode(r.labels.iter().map(String::as_str))?,
                })
            })
            .collect()
    };
    let tr = encode(train_rows)?;
    let va = encode(validation_rows)?;
    let (params, history) = train(&tr, &va, vocabulary.len(), registry.len(), config)?;
    Ok((
        ModelBundle {
            vocabulary,
            labels: registry,
            domains: labels.iter().map(|(_, d)| d.clone()).collect(),
            config: config.clone(),
            params,
        },
        history,
    ))
}

impl ModelBundle {
    pub fn scores(&self, text: &str) -> Vec<f64> {
        let row = self.vocabulary.tfidf_text(text);
        forward_all(&self.params, &[row]).p.row(0).to_vec()
    }

    pub fn scores_batch<S: AsRef<str>>(&self, texts: &[S]) -> Array2<f64> {
        let rows: Vec<SparseRow> = texts
            .iter()
            .map(|t| self.vocabulary.tfidf_text(t.as_ref()))
            .collect();
        forward_all(&self.params, &rows).p
    }

    /// Every label with its score, highest first.
    pub fn classify(&self, text: &str) -> Vec<Prediction> {
        let scores = self.scores(text);
        let mut out: Vec<Prediction> = self
            .labels
            .labels()
            .iter()
            .zip(&self.domains)
            .zip(scores)
            .map(|((l, d), s)| Prediction {
                label: l.clone(),
                domain: d.clone(),
                score: s,
                predicted: s >= self.config.threshold,
            })
            .collect();
        out.sort_by(|a, b| b.score.total_cmp(&a.score));
        out
    }

    /// Labels meeting the threshold for each text.
    pub fn predict_batch<S: AsRef<str>>(&self, texts: &[S]) -> Vec<BTreeSet<String>> {
        let p = self.scores_batch(texts);
        p.outer_iter()
            .map(|row| {
                self.labels
                    .labels()
                    .iter()
                    .zip(row.iter())
                    .filter(|(_, &s)| s >= self.config.threshold)
                    .map(|(l, _)| l.clone())
                    .collect()
            })
            .collect()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.bytes(BUNDLE_MAGIC);
        w.u32(BUNDLE_VERSION);
        w.str(IDF_FORMULA);
        w.str(&serde_json::to_string(&self.config).expect("config serializes"));
        w.u32(self.vocabulary.n_docs());
        w.len_u32(self.vocabulary.len());
        let idf = self.vocabulary.idf();
        for (i, (t, &df)) in self
            .vocabulary
            .terms()
            .iter()
            .zip(self.vocabulary.document_frequencies())
            .enumerate()
        {
            w.str(t);
            w.u32(df);
            w.f64(idf[i]);
        }
        w.len_u32(self.labels.len());
        for (l, d) in self.labels.labels().iter().zip(&self.domains) {
            w.str(l);
            w.str(d);
        }
        let [h1, h2] = self.params.hidden();
        w.len_u32(h1);
        w.len_u32(h2);
        for t in self.params.tensors() {
            for &x in t {
                w.f64(x);
            }
        }
        w.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, ModelError> {
        let corrupt = |e: std::io::Error| ModelError::Corrupt(e.to_string());
        let mut r = Reader::new(bytes);
        r.expect_magic(BUNDLE_MAGIC).map_err(corrupt)?;
        let version = r.u32().map_err(corrupt)?;
        if version != BUNDLE_VERSION {
            return Err(ModelError::Corrupt(format!(
                "unsupported version {version}"
            )));
        }
        let formula = r.str().map_err(corrupt)?;
        if formula != IDF_FORMULA {
            return Err(ModelError::Corrupt(format!(
                "unknown idf formula {formula:?}"
            )));
        }
        let config: TrainConfig = serde_json::from_str(&r.str().map_err(corrupt)?)
            .map_err(|e| ModelError::Corrupt(format!("config: {e}")))?;
        let n_docs = r.u32().map_err(corrupt)?;
        let v = r.len().map_err(corrupt)?;
        let (mut terms, mut df, mut idf) = (
            Vec::with_capacity(v),
            Vec::with_capacity(v),
            Vec::with_capacity(v),
        );
        for _ in 0..v {
            terms.push(r.str().map_err(corrupt)?);
            df.push(r.u32().map_err(corrupt)?);
            idf.push(r.f64().map_err(corrupt)?);
        }
        let vocabulary = Vocabulary::from_parts(terms, df, n_docs)
            .map_err(|e| ModelError::Corrupt(e.to_string()))?;
        // stored weights must agree with the formula tag
        if let Some(i) = (0..v).find(|&i| vocabulary.idf()[i].to_bits() != idf[i].to_bits()) {
            return Err(ModelError::Corrupt(format!(
                "idf of {:?} does not match df",
                vocabulary.terms()[i]
            )));
        }
        let nl = r.len().map_err(corrupt)?;
        let (mut labels, mut domains) = (Vec::with_capacity(nl), Vec::with_capacity(nl));
        for _ in 0..nl {
            labels.push(r.str().map_err(corrupt)?);
            domains.push(r.str().map_err(corrupt)?);
        }
        let labels = LabelRegistry::new(labels).map_err(|e| ModelError::Corrupt(e.to_string()))?;
        let h1 = r.u32().map_err(corrupt)? as usize;
        let h2 = r.u32().map_err(corrupt)? as usize;
        let mut params = ModelParams::zeros(v, h1, h2, nl);
        let mut read_into = |t: &mut [f64]| -> Result<(), ModelError> {
            for x in t.iter_mut() {
                *x = r.f64().map_err(corrupt)?;
            }
            Ok(())
        };
        read_into(params.w1.as_slice_mut().expect("layout"))?;
        read_into(params.b1.as_slice_mut().expect("layout"))?;
        read_into(params.w2.as_slice_mut().expect("layout"))?;
        read_into(params.b2.as_slice_mut().expect("layout"))?;
        read_into(params.w3.as_slice_mut().expect("layout"))?;
        read_into(params.b3.as_slice_mut().expect("layout"))?;
        r.finish().map_err(corrupt)?;
        if !params.is_finite() {
            return Err(ModelError::Corrupt("non-finite parameter".into()));
        }
        Ok(ModelBundle {
            vocabulary,
            labels,
            domains,
            config,
            params,
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), ModelError> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, ModelError> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}
