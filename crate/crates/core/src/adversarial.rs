//! Adversarial debiasing baseline.
//!
//! A two-layer tanh filter `E` maps inputs to an embedding; a linear
//! predictor `P` regresses the labels from it and a linear discriminator `D`
//! classifies the protected category. Each mini-batch does two steps, in
//! this order:
//!
//! 1. update `E` and `P` to minimize `MSE(y, P(E(x))) - lambda1 CE(c, D(E(x)))`;
//! 2. update `D` to minimize `lambda2 CE(c, D(E(x)))` on the same batch.
//!
//! Both steps use Adam with bias correction and their own moment estimates.

use std::fmt::Write as _;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::data::ProtectedAttr;
use crate::error::{Error, Result};
use crate::fmt_f64;
use crate::rng::{self, stage};

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdvConfig {
    pub learning_rate: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub hidden: [usize; 2],
    pub seed: u64,
}

impl Default for AdvConfig {
    fn default() -> Self {
        AdvConfig {
            learning_rate: 1e-3,
            lambda1: 1e-3,
            lambda2: 1e-3,
            epochs: 20,
            batch_size: 128,
            hidden: [64, 32],
            seed: 0,
        }
    }
}

impl AdvConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64| v > 0.0 && v.is_finite();
        let nonneg = |v: f64| v >= 0.0 && v.is_finite();
        if !positive(self.learning_rate) || !nonneg(self.lambda1) || !nonneg(self.lambda2) {
            return Err(Error::InvalidArgument(
                "learning rate must be positive, lambdas non-negative".into(),
            ));
        }
        if self.epochs == 0 || self.batch_size == 0 || self.hidden.contains(&0) {
            return Err(Error::InvalidArgument("epochs, batch size and widths must be positive".into()));
        }
        Ok(())
    }
}

/// Dense layer; the bias is a `1 x out` row.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub w: DMatrix<f64>,
    pub b: DMatrix<f64>,
}

impl Layer {
    fn xavier(inputs: usize, outputs: usize, rng: &mut rng::Rng) -> Self {
        let limit = (6.0 / (inputs + outputs) as f64).sqrt();
        Layer {
            w: DMatrix::from_fn(inputs, outputs, |_, _| rng.random_range(-limit..limit)),
            b: DMatrix::zeros(1, outputs),
        }
    }

    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Layer {
            w: DMatrix::zeros(inputs, outputs),
            b: DMatrix::zeros(1, outputs),
        }
    }

    fn forward(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = x * &self.w;
        for mut row in out.row_iter_mut() {
            row += &self.b;
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlpParams {
    pub filter1: Layer,
    pub filter2: Layer,
    pub predictor: Layer,
    pub discriminator: Layer,
}

impl MlpParams {
    pub fn init(inputs: usize, outputs: usize, classes: usize, hidden: [usize; 2], seed: u64) -> Self {
        let mut rng = rng::stream(seed, stage::ADVERSARIAL, 0);
        MlpParams {
            filter1: Layer::xavier(inputs, hidden[0], &mut rng),
            filter2: Layer::xavier(hidden[0], hidden[1], &mut rng),
            predictor: Layer::xavier(hidden[1], outputs, &mut rng),
            discriminator: Layer::xavier(hidden[1], classes, &mut rng),
        }
    }

    /// Filter and predictor tensors, in gradient order.
    pub fn predictor_side(&self) -> [&DMatrix<f64>; 6] {
        [
            &self.filter1.w,
            &self.filter1.b,
            &self.filter2.w,
            &self.filter2.b,
            &self.predictor.w,
            &self.predictor.b,
        ]
    }

    pub fn predictor_side_mut(&mut self) -> [&mut DMatrix<f64>; 6] {
        [
            &mut self.filter1.w,
            &mut self.filter1.b,
            &mut self.filter2.w,
            &mut self.filter2.b,
            &mut self.predictor.w,
            &mut self.predictor.b,
        ]
    }

    pub fn discriminator_side_mut(&mut self) -> [&mut DMatrix<f64>; 2] {
        [&mut self.discriminator.w, &mut self.discriminator.b]
    }

    fn input_dim(&self) -> usize {
        self.filter1.w.nrows()
    }

    fn is_finite(&self) -> bool {
        self.predictor_side()
            .into_iter()
            .chain([&self.discriminator.w, &self.discriminator.b])
            .all(|m| m.iter().all(|v| v.is_finite()))
    }
}

struct Forward {
    hidden1: DMatrix<f64>,
    embedding: DMatrix<f64>,
    prediction: DMatrix<f64>,
    logits: DMatrix<f64>,
}

fn forward(params: &MlpParams, x: &DMatrix<f64>) -> Forward {
    let hidden1 = params.filter1.forward(x).map(f64::tanh);
    let embedding = params.filter2.forward(&hidden1).map(f64::tanh);
    Forward {
        prediction: params.predictor.forward(&embedding),
        logits: params.discriminator.forward(&embedding),
        hidden1,
        embedding,
    }
}

fn mse(prediction: &DMatrix<f64>, y: &DMatrix<f64>) -> f64 {
    (prediction - y).norm_squared() / prediction.len() as f64
}

/// Mean softmax cross-entropy and its gradient with respect to the logits.
fn cross_entropy(logits: &DMatrix<f64>, classes: &[usize]) -> (f64, DMatrix<f64>) {
    let batch = logits.nrows() as f64;
    let mut grad = DMatrix::zeros(logits.nrows(), logits.ncols());
    let mut loss = 0.0;
    for (i, row) in logits.row_iter().enumerate() {
        let max = row.max();
        let sum: f64 = row.iter().map(|v| (v - max).exp()).sum();
        let log_norm = max + sum.ln();
        loss += log_norm - row[classes[i]];
        for j in 0..row.len() {
            grad[(i, j)] = (row[j] - log_norm).exp() / batch;
        }
        grad[(i, classes[i])] -= 1.0 / batch;
    }
    (loss / batch, grad)
}

fn accuracy(logits: &DMatrix<f64>, classes: &[usize]) -> f64 {
    let hits = logits
        .row_iter()
        .zip(classes)
        .filter(|(row, &c)| row.transpose().argmax().0 == c)
        .count();
    hits as f64 / classes.len() as f64
}

fn column_sums(m: &DMatrix<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(1, m.ncols(), |_, j| m.column(j).sum())
}

/// `MSE(y, P(E(x))) - lambda1 CE(c, D(E(x)))`.
pub fn predictor_objective(params: &MlpParams, x: &DMatrix<f64>, y: &DMatrix<f64>, classes: &[usize], lambda1: f64) -> f64 {
    let f = forward(params, x);
    mse(&f.prediction, y) - lambda1 * cross_entropy(&f.logits, classes).0
}

/// `lambda2 CE(c, D(E(x)))`.
pub fn discriminator_objective(params: &MlpParams, x: &DMatrix<f64>, classes: &[usize], lambda2: f64) -> f64 {
    lambda2 * cross_entropy(&forward(params, x).logits, classes).0
}

/// Gradients of [`predictor_objective`] for the tensors of
/// [`MlpParams::predictor_side`], plus the objective value.
pub fn predictor_gradients(
    params: &MlpParams,
    x: &DMatrix<f64>,
    y: &DMatrix<f64>,
    classes: &[usize],
    lambda1: f64,
) -> (f64, [DMatrix<f64>; 6]) {
    let f = forward(params, x);
    let residual = &f.prediction - y;
    let mse_value = residual.norm_squared() / residual.len() as f64;
    let (ce, d_logits) = cross_entropy(&f.logits, classes);

    let d_pred = residual * (2.0 / f.prediction.len() as f64);
    let d_logits = d_logits * (-lambda1);
    let d_embedding = &d_pred * params.predictor.w.transpose() + &d_logits * params.discriminator.w.transpose();
    let d_pre2 = d_embedding.zip_map(&f.embedding, |g, z| g * (1.0 - z * z));
    let d_hidden1 = &d_pre2 * params.filter2.w.transpose();
    let d_pre1 = d_hidden1.zip_map(&f.hidden1, |g, a| g * (1.0 - a * a));

    let grads = [
        x.transpose() * &d_pre1,
        column_sums(&d_pre1),
        f.hidden1.transpose() * &d_pre2,
        column_sums(&d_pre2),
        f.embedding.transpose() * &d_pred,
        column_sums(&d_pred),
    ];
    (mse_value - lambda1 * ce, grads)
}

/// Gradients of [`discriminator_objective`] for `[D.w, D.b]`.
pub fn discriminator_gradients(
    params: &MlpParams,
    x: &DMatrix<f64>,
    classes: &[usize],
    lambda2: f64,
) -> (f64, [DMatrix<f64>; 2]) {
    let f = forward(params, x);
    let (ce, d_logits) = cross_entropy(&f.logits, classes);
    let d_logits = d_logits * lambda2;
    (
        lambda2 * ce,
        [f.embedding.transpose() * &d_logits, column_sums(&d_logits)],
    )
}

/// Adam with bias correction.
#[derive(Clone, Debug)]
pub struct Adam {
    lr: f64,
    step: i32,
    first: Vec<DMatrix<f64>>,
    second: Vec<DMatrix<f64>>,
}

impl Adam {
    pub fn new(lr: f64, shapes: &[(usize, usize)]) -> Self {
        let zeros = || shapes.iter().map(|&(r, c)| DMatrix::zeros(r, c)).collect();
        Adam {
            lr,
            step: 0,
            first: zeros(),
            second: zeros(),
        }
    }

    pub fn step<'a>(&mut self, params: impl IntoIterator<Item = &'a mut DMatrix<f64>>, grads: &[DMatrix<f64>]) {
        self.step += 1;
        let c1 = 1.0 - ADAM_BETA1.powi(self.step);
        let c2 = 1.0 - ADAM_BETA2.powi(self.step);
        for (k, p) in params.into_iter().enumerate() {
            let g = &grads[k];
            let (m, v) = (&mut self.first[k], &mut self.second[k]);
            for i in 0..g.len() {
                m[i] = ADAM_BETA1 * m[i] + (1.0 - ADAM_BETA1) * g[i];
                v[i] = ADAM_BETA2 * v[i] + (1.0 - ADAM_BETA2) * g[i] * g[i];
                let m_hat = m[i] / c1;
                let v_hat = v[i] / c2;
                p[i] -= self.lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub mse: f64,
    pub ce: f64,
    pub disc_acc: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AdvTrace {
    pub epochs: Vec<EpochRecord>,
}

impl AdvTrace {
    /// `epoch,mse,ce,disc_acc` rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,mse,ce,disc_acc\n");
        for r in &self.epochs {
            let _ = writeln!(out, "{},{},{},{}", r.epoch, fmt_f64(r.mse), fmt_f64(r.ce), fmt_f64(r.disc_acc));
        }
        out
    }

    pub fn last(&self) -> Option<&EpochRecord> {
        self.epochs.last()
    }
}

/// Trains filter, predictor and discriminator on `(x, y)` against the
/// protected attribute.
pub fn adv_train(
    x: &DMatrix<f64>,
    y: &DMatrix<f64>,
    attr: &ProtectedAttr,
    config: &AdvConfig,
) -> Result<(MlpParams, AdvTrace)> {
    config.validate()?;
    let n = x.nrows();
    if n == 0 || y.nrows() != n || attr.len() != n {
        return Err(Error::Shape(format!(
            "{n} feature rows, {} label rows, {} attribute entries",
            y.nrows(),
            attr.len()
        )));
    }
    if attr.n_categories() < 2 {
        return Err(Error::InvalidArgument("adversarial training needs at least two categories".into()));
    }
    let classes = attr.codes();
    let mut params = MlpParams::init(x.ncols(), y.ncols(), attr.n_categories(), config.hidden, config.seed);
    let shapes = |ms: &[&DMatrix<f64>]| ms.iter().map(|m| m.shape()).collect::<Vec<_>>();
    let mut adam_pe = Adam::new(config.learning_rate, &shapes(&params.predictor_side()));
    let mut adam_d = Adam::new(
        config.learning_rate,
        &shapes(&[&params.discriminator.w, &params.discriminator.b]),
    );
    let mut rng = rng::stream(config.seed, stage::ADVERSARIAL, 1);
    let mut order: Vec<usize> = (0..n).collect();
    let mut trace = AdvTrace::default();

    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(config.batch_size) {
            let bx = x.select_rows(batch);
            let by = y.select_rows(batch);
            let bc: Vec<usize> = batch.iter().map(|&i| classes[i]).collect();

            let (loss, grads) = predictor_gradients(&params, &bx, &by, &bc, config.lambda1);
            if !loss.is_finite() {
                return Err(Error::Diverged { epoch });
            }
            adam_pe.step(params.predictor_side_mut(), &grads);

            let (loss, grads) = discriminator_gradients(&params, &bx, &bc, config.lambda2);
            if !loss.is_finite() {
                return Err(Error::Diverged { epoch });
            }
            adam_d.step(params.discriminator_side_mut(), &grads);
        }
        let f = forward(&params, x);
        let record = EpochRecord {
            epoch,
            mse: mse(&f.prediction, y),
            ce: cross_entropy(&f.logits, classes).0,
            disc_acc: accuracy(&f.logits, classes),
        };
        if !record.mse.is_finite() || !record.ce.is_finite() || !params.is_finite() {
            return Err(Error::Diverged { epoch });
        }
        trace.epochs.push(record);
    }
    Ok((params, trace))
}

/// `P(E(x))`.
pub fn adv_predict(params: &MlpParams, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if x.ncols() != params.input_dim() {
        return Err(Error::Shape(format!(
            "network expects {} inputs, got {}",
            params.input_dim(),
            x.ncols()
        )));
    }
    Ok(forward(params, x).prediction)
}

/// Discriminator accuracy of trained parameters on `(x, attr)`.
pub fn discriminator_accuracy(params: &MlpParams, x: &DMatrix<f64>, attr: &ProtectedAttr) -> f64 {
    accuracy(&forward(params, x).logits, attr.codes())
}
