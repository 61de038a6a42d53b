use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::adam::{Adam, AdamConfig};
use super::model::{flatten, Architecture, Link, ModelParams};
use super::regularizer::{regularizer, RegularizerKernels};
use crate::data::{DatasetTable, Task};
use crate::error::{Error, Result};
use crate::kernels::median_heuristic;
use crate::operators::{Notion, DEFAULT_EPSILON};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Loss {
    CrossEntropy,
    Mse,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lambda: f64,
    pub notion: Notion,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub seed: u64,
    pub adam: AdamConfig,
    pub loss: Loss,
    pub architecture: Architecture,
    /// Leave the sensitive columns out of the model inputs.
    pub unaware: bool,
    pub epsilon: f64,
}

impl TrainConfig {
    /// Defaults for `task`: one hidden layer of 64 units, batch 128,
    /// learning rate 1e-3, 100 epochs, no penalty.
    pub fn for_task(task: Task, notion: Notion) -> Self {
        Self {
            lambda: 0.0,
            notion,
            batch_size: 128,
            learning_rate: 1e-3,
            epochs: 100,
            seed: 0,
            adam: AdamConfig::default(),
            loss: match task {
                Task::Classification => Loss::CrossEntropy,
                Task::Regression => Loss::Mse,
            },
            architecture: Architecture::two_layer(64),
            unaware: false,
            epsilon: DEFAULT_EPSILON,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return bad(format!(
                "lambda must be a nonnegative number, got {}",
                self.lambda
            ));
        }
        if self.batch_size < 2 {
            return bad(format!(
                "batch size must be at least 2, got {}",
                self.batch_size
            ));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            ));
        }
        if self.epochs == 0 {
            return bad("epochs must be positive".into());
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return bad(format!("epsilon must be positive, got {}", self.epsilon));
        }
        let AdamConfig { beta1, beta2, eps } = self.adam;
        if !((0.0..1.0).contains(&beta1) && (0.0..1.0).contains(&beta2) && eps > 0.0) {
            return bad(format!("invalid Adam parameters {:?}", self.adam));
        }
        Ok(())
    }
}

/// One mini-batch: model inputs, sensitive attributes and a single target
/// column.
#[derive(Debug, Clone, Copy)]
pub struct Batch<'a> {
    pub x: &'a DMatrix<f64>,
    pub a: &'a DMatrix<f64>,
    pub y: &'a DMatrix<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveValue {
    pub loss_total: f64,
    pub loss_pred: f64,
    pub reg_value: f64,
}

fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

/// Mean prediction loss and its derivative with respect to the raw
/// (pre-link) outputs.
fn prediction_loss(
    loss: Loss,
    link: Link,
    raw: &DMatrix<f64>,
    out: &DMatrix<f64>,
    y: &DMatrix<f64>,
) -> Result<(f64, DMatrix<f64>)> {
    let n = raw.nrows() as f64;
    match (loss, link) {
        (Loss::CrossEntropy, Link::Sigmoid) => {
            let value = raw.zip_map(y, |z, t| softplus(z) - t * z).sum() / n;
            Ok((value, (out - y) / n))
        }
        (Loss::CrossEntropy, Link::Identity) => Err(Error::InvalidArgument(
            "cross-entropy loss needs a sigmoid-output model".into(),
        )),
        (Loss::Mse, link) => {
            let diff = out - y;
            let value = diff.norm_squared() / n;
            let mut d = diff * (2.0 / n);
            if link == Link::Sigmoid {
                d.zip_apply(out, |g, p| *g *= p * (1.0 - p));
            }
            Ok((value, d))
        }
    }
}

fn check_batch(batch: &Batch<'_>) -> Result<()> {
    let n = batch.x.nrows();
    if n < 2 {
        return Err(Error::InvalidArgument(format!(
            "batch needs at least 2 rows, got {n}"
        )));
    }
    if batch.a.nrows() != n || batch.y.nrows() != n {
        return Err(Error::Dimension("batch parts differ in length".into()));
    }
    if batch.y.ncols() != 1 {
        return Err(Error::Dimension(format!(
            "training needs a single target column, got {}",
            batch.y.ncols()
        )));
    }
    Ok(())
}

fn evaluate_objective(
    batch: &Batch<'_>,
    model: &ModelParams,
    config: &TrainConfig,
    kernels: &RegularizerKernels,
    with_gradient: bool,
) -> Result<(ObjectiveValue, Vec<f64>)> {
    check_batch(batch)?;
    let pass = model.forward(batch.x)?;
    if pass.outputs.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("non-finite model output".into()));
    }
    let (loss_pred, mut d_raw) =
        prediction_loss(config.loss, model.link, pass.raw(), &pass.outputs, batch.y)?;
    let penalize = with_gradient && config.lambda > 0.0;
    let reg = regularizer(
        config.notion,
        &pass.outputs,
        batch.a,
        Some(batch.y),
        kernels,
        penalize,
    )?;
    let reg_value = reg.value;
    if penalize {
        if reg.gradient.iter().any(|g| !g.is_finite()) {
            return Err(Error::Numerical("non-finite regularizer gradient".into()));
        }
        let mut g = reg.gradient * config.lambda;
        if model.link == Link::Sigmoid {
            g.zip_apply(&pass.outputs, |v, p| *v *= p * (1.0 - p));
        }
        d_raw += g;
    }
    let value = ObjectiveValue {
        loss_total: loss_pred + config.lambda * reg_value,
        loss_pred,
        reg_value,
    };
    let grad = if with_gradient {
        flatten(&model.backward(&pass, &d_raw))
    } else {
        Vec::new()
    };
    Ok((value, grad))
}

/// `loss_total = loss_pred + λ·I` on one batch.
pub fn objective(
    batch: &Batch<'_>,
    model: &ModelParams,
    config: &TrainConfig,
    kernels: &RegularizerKernels,
) -> Result<ObjectiveValue> {
    evaluate_objective(batch, model, config, kernels, false).map(|(v, _)| v)
}

/// Objective and its gradient with respect to the flattened parameters
/// (layer by layer, weights column-major then bias).
pub fn objective_gradient(
    batch: &Batch<'_>,
    model: &ModelParams,
    config: &TrainConfig,
    kernels: &RegularizerKernels,
) -> Result<(ObjectiveValue, Vec<f64>)> {
    evaluate_objective(batch, model, config, kernels, true)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss_pred: f64,
    pub train_reg_value: f64,
    pub val_loss_pred: f64,
    pub val_reg_value: f64,
    pub val_loss_total: f64,
    /// Accuracy at threshold 0.5 for classification, MSE for regression.
    pub val_metric: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub epochs: Vec<EpochLog>,
    pub best_epoch: usize,
    pub sensitive_sigma: f64,
    pub target_sigma: f64,
}

/// Kernels for A and Y fitted on the training split.
pub fn fit_kernels(train: &DatasetTable, epsilon: f64) -> Result<RegularizerKernels> {
    Ok(RegularizerKernels {
        prediction: None,
        sensitive: median_heuristic(&train.a)?.kernel(),
        target: Some(median_heuristic(&train.y)?.kernel()),
        epsilon,
    })
}

fn chunks(order: &[usize], size: usize) -> impl Iterator<Item = &[usize]> {
    order.chunks(size).filter(|c| c.len() >= 2)
}

struct Split {
    x: DMatrix<f64>,
    a: DMatrix<f64>,
    y: DMatrix<f64>,
}

impl Split {
    fn new(t: &DatasetTable, unaware: bool) -> Self {
        Self {
            x: t.inputs(unaware),
            a: t.a.clone(),
            y: t.y.clone(),
        }
    }

    fn rows(&self, idx: &[usize]) -> Split {
        Split {
            x: self.x.select_rows(idx),
            a: self.a.select_rows(idx),
            y: self.y.select_rows(idx),
        }
    }

    fn batch(&self) -> Batch<'_> {
        Batch {
            x: &self.x,
            a: &self.a,
            y: &self.y,
        }
    }
}

fn validation(
    val: &Split,
    model: &ModelParams,
    config: &TrainConfig,
    kernels: &RegularizerKernels,
    task: Task,
) -> Result<(f64, f64, f64)> {
    let pass = model.forward(&val.x)?;
    let (loss_pred, _) =
        prediction_loss(config.loss, model.link, pass.raw(), &pass.outputs, &val.y)?;
    let order: Vec<usize> = (0..val.x.nrows()).collect();
    let mut reg_sum = 0.0;
    let mut count = 0usize;
    for idx in chunks(&order, config.batch_size) {
        let out = pass.outputs.select_rows(idx);
        let r = regularizer(
            config.notion,
            &out,
            &val.a.select_rows(idx),
            Some(&val.y.select_rows(idx)),
            kernels,
            false,
        )?;
        reg_sum += r.value;
        count += 1;
    }
    let reg = if count > 0 {
        reg_sum / count as f64
    } else {
        0.0
    };
    let metric = match task {
        Task::Classification => {
            let hits = pass
                .outputs
                .iter()
                .zip(val.y.iter())
                .filter(|(p, t)| (**p >= 0.5) == (**t >= 0.5))
                .count();
            hits as f64 / val.y.nrows() as f64
        }
        Task::Regression => (&pass.outputs - &val.y).norm_squared() / val.y.nrows() as f64,
    };
    Ok((loss_pred, reg, metric))
}

/// Mini-batch Adam on `train`, keeping the parameters with the lowest
/// validation `loss_total` over a fixed epoch budget.
pub fn train(
    train: &DatasetTable,
    val: &DatasetTable,
    config: &TrainConfig,
) -> Result<(ModelParams, TrainLog)> {
    config.validate()?;
    if train.y.ncols() != 1 {
        return Err(Error::Dimension(
            "training needs a single target column".into(),
        ));
    }
    if train.len() < 2 || val.len() < 2 {
        return Err(Error::Data(
            "train and validation splits need at least 2 rows".into(),
        ));
    }
    let kernels = fit_kernels(train, config.epsilon)?;
    let tr = Split::new(train, config.unaware);
    let va = Split::new(val, config.unaware);
    if tr.x.ncols() == 0 {
        return Err(Error::Data("no model inputs".into()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut model = ModelParams::init(
        config.architecture.clone(),
        train.task,
        tr.x.ncols(),
        &mut rng,
    )?;
    let mut params = model.flat();
    let mut opt = Adam::new(params.len(), config.learning_rate, config.adam);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut log = TrainLog {
        epochs: Vec::with_capacity(config.epochs),
        best_epoch: 0,
        sensitive_sigma: kernels.sensitive.sigma(),
        target_sigma: kernels.target.map_or(f64::NAN, |k| k.sigma()),
    };
    let mut best: Option<(f64, ModelParams)> = None;

    for epoch in 0..config.epochs {
        let diverged = |e: Error| match e {
            Error::Numerical(reason) => Error::Diverged { epoch, reason },
            other => other,
        };
        order.shuffle(&mut rng);
        let (mut pred_sum, mut reg_sum, mut rows) = (0.0, 0.0, 0usize);
        for idx in chunks(&order, config.batch_size) {
            let b = tr.rows(idx);
            let (value, grad) =
                objective_gradient(&b.batch(), &model, config, &kernels).map_err(diverged)?;
            if !value.loss_total.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::Diverged {
                    epoch,
                    reason: "non-finite loss or gradient".into(),
                });
            }
            opt.step(&mut params, &grad);
            model.apply_flat(&params);
            pred_sum += value.loss_pred * idx.len() as f64;
            reg_sum += value.reg_value * idx.len() as f64;
            rows += idx.len();
        }
        if !model.is_finite() {
            return Err(Error::Diverged {
                epoch,
                reason: "non-finite parameters".into(),
            });
        }
        let (val_pred, val_reg, val_metric) =
            validation(&va, &model, config, &kernels, train.task).map_err(diverged)?;
        let val_total = val_pred + config.lambda * val_reg;
        if !val_total.is_finite() {
            return Err(Error::Diverged {
                epoch,
                reason: "non-finite validation loss".into(),
            });
        }
        let rows = rows.max(1) as f64;
        log.epochs.push(EpochLog {
            epoch,
            train_loss_pred: pred_sum / rows,
            train_reg_value: reg_sum / rows,
            val_loss_pred: val_pred,
            val_reg_value: val_reg,
            val_loss_total: val_total,
            val_metric,
        });
        log::debug!("epoch {epoch}: val loss {val_total:.5} metric {val_metric:.4}");
        if best.as_ref().is_none_or(|(b, _)| val_total < *b) {
            best = Some((val_total, model.clone()));
            log.best_epoch = epoch;
        }
    }
    let (_, model) = best.expect("at least one epoch");
    Ok((model, log))
}
