//! Classical group-fairness and accuracy metrics, and the evaluation report
//! that combines them with kernel dependence scores.

use std::fmt::Write as _;

use nalgebra::DMatrix;

use crate::data::{binarise_at_median, DType, DatasetTable, Task};
use crate::error::{Error, Result};
use crate::fairlearn::{predict, ModelParams};
use crate::inference::{permutation_test, PermutationTestConfig};
use crate::operators::Notion;
use crate::score::{score_from_data, ScoreOptions};

fn check_len(lens: &[usize]) -> Result<()> {
    if lens.windows(2).any(|w| w[0] != w[1]) {
        return Err(Error::Dimension(format!(
            "metric inputs differ in length: {lens:?}"
        )));
    }
    Ok(())
}

fn positive_rate(pred: &[bool], mask: impl Fn(usize) -> bool) -> Option<f64> {
    let (mut hits, mut total) = (0usize, 0usize);
    for (i, &p) in pred.iter().enumerate() {
        if mask(i) {
            total += 1;
            hits += usize::from(p);
        }
    }
    (total > 0).then(|| hits as f64 / total as f64)
}

/// Difference in equal opportunity `|P(Ŷ=1 | A=1, Y=1) − P(Ŷ=1 | A=0, Y=1)|`.
pub fn deo(pred: &[bool], target: &[bool], sensitive: &[bool]) -> Result<f64> {
    check_len(&[pred.len(), target.len(), sensitive.len()])?;
    let rate = |g: bool| {
        positive_rate(pred, |i| target[i] && sensitive[i] == g)
            .ok_or_else(|| Error::Undefined(format!("no samples with A={} and Y=1", u8::from(g))))
    };
    Ok((rate(true)? - rate(false)?).abs())
}

/// Disparate impact `P(Ŷ=1 | A=1) / P(Ŷ=1 | A=0)`.
pub fn di(pred: &[bool], sensitive: &[bool]) -> Result<f64> {
    check_len(&[pred.len(), sensitive.len()])?;
    let num = positive_rate(pred, |i| sensitive[i])
        .ok_or_else(|| Error::Undefined("no samples with A=1".into()))?;
    let den = positive_rate(pred, |i| !sensitive[i]).unwrap_or(0.0);
    if den == 0.0 {
        return Err(Error::Undefined("no positive predictions with A=0".into()));
    }
    Ok(num / den)
}

pub fn accuracy(pred: &[bool], target: &[bool]) -> Result<f64> {
    check_len(&[pred.len(), target.len()])?;
    if pred.is_empty() {
        return Err(Error::Undefined("accuracy of an empty sample".into()));
    }
    Ok(pred.iter().zip(target).filter(|(p, t)| p == t).count() as f64 / pred.len() as f64)
}

pub fn mse(pred: &[f64], target: &[f64]) -> Result<f64> {
    check_len(&[pred.len(), target.len()])?;
    if pred.is_empty() {
        return Err(Error::Undefined("MSE of an empty sample".into()));
    }
    Ok(pred
        .iter()
        .zip(target)
        .map(|(p, t)| (p - t) * (p - t))
        .sum::<f64>()
        / pred.len() as f64)
}

/// Metrics for one model on one split. Undefined metrics are `None`.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub task: Task,
    pub notion: Notion,
    /// Accuracy for classification, MSE for regression.
    pub performance: f64,
    /// `(attribute, DEO)` per sensitive column.
    pub deo: Vec<(String, Option<f64>)>,
    pub di: Vec<(String, Option<f64>)>,
    pub cocco_joint: f64,
    pub cocco: Vec<(String, f64)>,
    /// Names of the scores that hit the degenerate path.
    pub degenerate: Vec<String>,
    pub p_value: Option<f64>,
}

fn fmt_value(v: Option<f64>) -> String {
    match v {
        Some(x) if x.is_finite() => format!("{x}"),
        _ => "nan".into(),
    }
}

impl EvalReport {
    pub fn performance_key(&self) -> &'static str {
        match self.task {
            Task::Classification => "acc",
            Task::Regression => "mse",
        }
    }

    /// `key = value` lines; undefined values are written as `nan`.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let task = match self.task {
            Task::Classification => "classification",
            Task::Regression => "regression",
        };
        writeln!(out, "task = {task}").unwrap();
        writeln!(out, "notion = {}", self.notion).unwrap();
        writeln!(
            out,
            "{} = {}",
            self.performance_key(),
            fmt_value(Some(self.performance))
        )
        .unwrap();
        for (name, v) in &self.deo {
            writeln!(out, "deo.{name} = {}", fmt_value(*v)).unwrap();
        }
        for (name, v) in &self.di {
            writeln!(out, "di.{name} = {}", fmt_value(*v)).unwrap();
        }
        writeln!(out, "cocco.joint = {}", fmt_value(Some(self.cocco_joint))).unwrap();
        for (name, v) in &self.cocco {
            writeln!(out, "cocco.{name} = {}", fmt_value(Some(*v))).unwrap();
        }
        if let Some(p) = self.p_value {
            writeln!(out, "pvalue.{} = {}", self.notion, fmt_value(Some(p))).unwrap();
        }
        for name in &self.degenerate {
            writeln!(out, "note = degenerate {name}").unwrap();
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalOptions {
    pub notion: Notion,
    pub score: ScoreOptions,
    /// Drop the sensitive columns from the model inputs.
    pub unaware: bool,
    /// `(permutations, seed)` for a permutation test on the joint score.
    pub permutation_test: Option<(usize, u64)>,
}

impl EvalOptions {
    pub fn new(notion: Notion) -> Self {
        Self {
            notion,
            score: ScoreOptions::default(),
            unaware: false,
            permutation_test: None,
        }
    }
}

/// Binary view of a sensitive column: binary columns as coded, others split
/// at the median.
pub fn binary_attribute(values: &[f64], dtype: DType) -> Vec<bool> {
    match dtype {
        DType::Binary => values.iter().map(|v| *v > 0.5).collect(),
        _ => binarise_at_median(values),
    }
}

/// Evaluates precomputed predictions (class-1 probabilities or regression
/// outputs) against `table`.
pub fn evaluate_predictions(
    predictions: &DMatrix<f64>,
    table: &DatasetTable,
    options: &EvalOptions,
) -> Result<EvalReport> {
    let n = table.len();
    if table.a.ncols() == 0 || table.sensitive_columns.is_empty() {
        return Err(Error::Data("no sensitive columns to evaluate".into()));
    }
    if predictions.nrows() != n || predictions.ncols() != 1 || table.y.ncols() != 1 {
        return Err(Error::Dimension(format!(
            "evaluation needs N×1 predictions and target, got {:?} and {:?} for N={n}",
            predictions.shape(),
            table.y.shape()
        )));
    }
    let pred: Vec<f64> = predictions.iter().copied().collect();
    let target: Vec<f64> = table.y.iter().copied().collect();
    let (performance, pred_bin, target_bin) = match table.task {
        Task::Classification => {
            let p: Vec<bool> = pred.iter().map(|v| *v >= 0.5).collect();
            let t: Vec<bool> = target.iter().map(|v| *v >= 0.5).collect();
            (accuracy(&p, &t)?, p, t)
        }
        Task::Regression => {
            let mut sorted = target.clone();
            sorted.sort_by(f64::total_cmp);
            let cut = sorted[(n - 1) / 2];
            let p = pred.iter().map(|v| *v > cut).collect();
            let t = target.iter().map(|v| *v > cut).collect();
            (mse(&pred, &target)?, p, t)
        }
    };

    let mut report = EvalReport {
        task: table.task,
        notion: options.notion,
        performance,
        deo: Vec::new(),
        di: Vec::new(),
        cocco_joint: 0.0,
        cocco: Vec::new(),
        degenerate: Vec::new(),
        p_value: None,
    };
    let joint = score_from_data(
        options.notion,
        predictions,
        &table.a,
        Some(&table.y),
        &options.score,
    )?;
    report.cocco_joint = joint.normalized_score;
    if joint.degenerate {
        report.degenerate.push("joint".into());
    }
    for (k, spec) in table.sensitive_columns.iter().enumerate() {
        let column = table.sensitive_column(k);
        let values: Vec<f64> = column.iter().copied().collect();
        let a = binary_attribute(&values, spec.dtype);
        report
            .deo
            .push((spec.name.clone(), deo(&pred_bin, &target_bin, &a).ok()));
        report.di.push((spec.name.clone(), di(&pred_bin, &a).ok()));
        let s = score_from_data(
            options.notion,
            predictions,
            &column,
            Some(&table.y),
            &options.score,
        )?;
        if s.degenerate {
            report.degenerate.push(spec.name.clone());
        }
        report.cocco.push((spec.name.clone(), s.normalized_score));
    }
    if let Some((permutations, seed)) = options.permutation_test {
        let mut cfg = PermutationTestConfig::new(options.notion, permutations, seed);
        cfg.epsilon = options.score.epsilon;
        let result = permutation_test(predictions, &table.a, Some(&table.y), &cfg)?;
        report.p_value = Some(result.p_value);
    }
    Ok(report)
}

/// Predicts with `model` on `table` and evaluates the predictions.
pub fn evaluate(
    model: &ModelParams,
    table: &DatasetTable,
    options: &EvalOptions,
) -> Result<EvalReport> {
    let predictions = predict(model, &table.inputs(options.unaware))?;
    evaluate_predictions(&predictions, table, options)
}
