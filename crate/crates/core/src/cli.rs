//! Command-line front end. Exit codes: 0 on success, 2 for configuration or
//! input errors, 3 for numerical failures.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::data::{ingest, load_manifest, DatasetTable, Splits, Task};
use crate::error::{Error, Result};
use crate::fairlearn::{
    load_checkpoint, predict, save_checkpoint, train, Architecture, Checkpoint, TrainConfig,
};
use crate::inference::{permutation_test, PermutationTestConfig};
use crate::metrics::{evaluate, EvalOptions, EvalReport};
use crate::operators::{Notion, DEFAULT_EPSILON};
use crate::score::{score_from_data, LowRankOptions, ScoreOptions};

pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "faircocco",
    version,
    about = "Kernel dependence fairness scores, tests and fair training"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Joint and per-attribute scores of a prediction column or a model.
    Score(ScoreArgs),
    /// Permutation test of the joint statistic.
    Test(TestArgs),
    /// Train a penalized model and write a checkpoint.
    Train(TrainArgs),
    /// Evaluate a checkpoint on a split.
    Eval(EvalArgs),
    /// Train and evaluate over a grid of penalty weights and seeds.
    Sweep(SweepArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SplitName {
    Train,
    Val,
    Test,
    /// Every retained row, in file order.
    All,
}

#[derive(Debug, Clone, Args)]
pub struct DataArgs {
    /// Dataset manifest (TOML).
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long, default_value = "eo")]
    pub notion: Notion,
    #[arg(long, value_enum, default_value = "test")]
    pub split: SplitName,
    /// Output file; standard output when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct KernelArgs {
    /// Ridge parameter of the regularized inverse.
    #[arg(long, default_value_t = DEFAULT_EPSILON)]
    pub epsilon: f64,
    /// Maximum rank of the incomplete Cholesky factors; enables the
    /// low-rank path.
    #[arg(long)]
    pub lowrank_rank: Option<usize>,
    /// Pivot tolerance of the incomplete Cholesky factors; enables the
    /// low-rank path.
    #[arg(long)]
    pub lowrank_tol: Option<f64>,
}

impl KernelArgs {
    fn options(&self) -> ScoreOptions {
        let lowrank = (self.lowrank_rank.is_some() || self.lowrank_tol.is_some()).then(|| {
            let d = LowRankOptions::default();
            LowRankOptions {
                tol: self.lowrank_tol.unwrap_or(d.tol),
                max_rank: self.lowrank_rank.unwrap_or(d.max_rank),
            }
        });
        ScoreOptions {
            epsilon: self.epsilon,
            lowrank,
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct ScoreArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub kernel: KernelArgs,
    /// Score this model's predictions instead of the manifest's prediction column.
    #[arg(long)]
    pub model: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct TestArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, default_value_t = 199)]
    pub permutations: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = DEFAULT_EPSILON)]
    pub epsilon: f64,
    #[arg(long)]
    pub model: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct TrainingArgs {
    #[arg(long, default_value_t = 128)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    #[arg(long, default_value_t = 100)]
    pub epochs: usize,
    /// Hidden layer widths, comma separated; `0` trains a linear or
    /// logistic model.
    #[arg(long, value_delimiter = ',', default_value = "64")]
    pub hidden: Vec<usize>,
    /// Exclude the sensitive columns from the model inputs.
    #[arg(long)]
    pub unaware: bool,
    #[arg(long, default_value_t = DEFAULT_EPSILON)]
    pub epsilon: f64,
}

impl TrainingArgs {
    fn config(&self, task: Task, notion: Notion, lambda: f64, seed: u64) -> TrainConfig {
        let mut cfg = TrainConfig::for_task(task, notion);
        cfg.lambda = lambda;
        cfg.seed = seed;
        cfg.batch_size = self.batch_size;
        cfg.learning_rate = self.lr;
        cfg.epochs = self.epochs;
        cfg.unaware = self.unaware;
        cfg.epsilon = self.epsilon;
        cfg.architecture = match (self.hidden.as_slice(), task) {
            ([0], Task::Classification) => Architecture::Logistic,
            ([0], Task::Regression) => Architecture::Linear,
            (h, _) => Architecture::Mlp { hidden: h.to_vec() },
        };
        cfg
    }
}

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long, default_value = "eo")]
    pub notion: Notion,
    #[arg(long, default_value_t = 0.0)]
    pub lambda: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub training: TrainingArgs,
    /// Checkpoint path.
    #[arg(long)]
    pub out: PathBuf,
    /// Also write the per-epoch training log as JSON.
    #[arg(long)]
    pub log: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub kernel: KernelArgs,
    #[arg(long)]
    pub model: PathBuf,
    /// Add a permutation test of the joint statistic with this many permutations.
    #[arg(long)]
    pub permutations: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long, default_value = "eo")]
    pub notion: Notion,
    /// Penalty weights, comma separated (at least two).
    #[arg(long, value_delimiter = ',', default_value = "0,0.5,1,2,5")]
    pub lambdas: Vec<f64>,
    /// Training seeds, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "0")]
    pub seeds: Vec<u64>,
    #[command(flatten)]
    pub training: TrainingArgs,
    #[arg(long, value_enum, default_value = "test")]
    pub split: SplitName,
    /// CSV output; standard output when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Parses `args` (including the program name), runs the command and
/// returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { 0 };
        }
    };
    match configure_threads().and_then(|()| run(&cli)) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_numerical() {
                EXIT_NUMERIC
            } else {
                EXIT_CONFIG
            }
        }
    }
}

/// Caps the global thread pool at `FAIRCOCCO_THREADS` when set.
fn configure_threads() -> Result<()> {
    let Ok(value) = std::env::var("FAIRCOCCO_THREADS") else {
        return Ok(());
    };
    let n: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| {
            Error::InvalidArgument(format!(
                "FAIRCOCCO_THREADS must be a positive integer, got `{value}`"
            ))
        })?;
    // a second call in the same process (tests) keeps the first pool
    let _ = rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global();
    Ok(())
}

pub fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Score(a) => cmd_score(a),
        Command::Test(a) => cmd_test(a),
        Command::Train(a) => cmd_train(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Sweep(a) => cmd_sweep(a),
    }
}

fn load(manifest: &Path) -> Result<Splits> {
    ingest(&load_manifest(manifest)?)
}

fn pick(splits: Splits, name: SplitName) -> DatasetTable {
    match name {
        SplitName::Train => splits.train,
        SplitName::Val => splits.val,
        SplitName::Test => splits.test,
        SplitName::All => {
            let mut all: Vec<(usize, usize, usize)> = Vec::new();
            let parts = [&splits.train, &splits.val, &splits.test];
            for (p, t) in parts.iter().enumerate() {
                all.extend(t.rows.iter().enumerate().map(|(i, &r)| (r, p, i)));
            }
            all.sort_unstable();
            let stack = |f: &dyn Fn(&DatasetTable) -> &DMatrix<f64>| {
                let cols = f(parts[0]).ncols();
                DMatrix::from_fn(all.len(), cols, |i, j| {
                    let (_, p, k) = all[i];
                    f(parts[p])[(k, j)]
                })
            };
            let predictions = splits.train.predictions.as_ref().map(|_| {
                stack(&|t: &DatasetTable| {
                    t.predictions
                        .as_ref()
                        .expect("all splits carry predictions")
                })
            });
            DatasetTable {
                task: splits.train.task,
                x: stack(&|t| &t.x),
                a: stack(&|t| &t.a),
                y: stack(&|t| &t.y),
                predictions,
                feature_columns: splits.train.feature_columns.clone(),
                sensitive_columns: splits.train.sensitive_columns.clone(),
                target_columns: splits.train.target_columns.clone(),
                rows: all.iter().map(|t| t.0).collect(),
            }
        }
    }
}

fn write_output(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => std::fs::write(path, text).map_err(|e| Error::io(path, e)),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn model_inputs(ckpt: &Checkpoint, table: &DatasetTable) -> Result<DMatrix<f64>> {
    let x = table.inputs(ckpt.config.unaware);
    if x.ncols() != ckpt.input_columns.len() {
        return Err(Error::Dimension(format!(
            "checkpoint expects {} inputs, manifest provides {}",
            ckpt.input_columns.len(),
            x.ncols()
        )));
    }
    Ok(x)
}

fn predictions_for(table: &DatasetTable, model: Option<&Path>) -> Result<DMatrix<f64>> {
    match model {
        Some(path) => {
            let ckpt = load_checkpoint(path)?;
            predict(&ckpt.model()?, &model_inputs(&ckpt, table)?)
        }
        None => table.predictions.clone().ok_or_else(|| {
            Error::InvalidArgument("manifest has no prediction column; pass --model".into())
        }),
    }
}

fn input_names(table: &DatasetTable, unaware: bool) -> Vec<String> {
    let mut names: Vec<String> = table
        .feature_columns
        .iter()
        .map(|c| c.name.clone())
        .collect();
    if !unaware {
        names.extend(table.sensitive_columns.iter().map(|c| c.name.clone()));
    }
    names
}

fn cmd_score(args: &ScoreArgs) -> Result<()> {
    let table = pick(load(&args.data.manifest)?, args.data.split);
    let pred = predictions_for(&table, args.model.as_deref())?;
    let notion = args.data.notion;
    let opts = args.kernel.options();
    let target = Some(&table.y);
    let mut out = String::new();
    let mut degenerate = Vec::new();
    writeln!(out, "notion = {notion}").unwrap();
    writeln!(out, "n = {}", table.len()).unwrap();
    let joint = score_from_data(notion, &pred, &table.a, target, &opts)?;
    writeln!(out, "cocco.joint = {}", joint.normalized_score).unwrap();
    writeln!(out, "statistic.joint = {}", joint.value).unwrap();
    if joint.degenerate {
        degenerate.push("joint".to_string());
    }
    for (k, spec) in table.sensitive_columns.iter().enumerate() {
        let s = score_from_data(notion, &pred, &table.sensitive_column(k), target, &opts)?;
        writeln!(out, "cocco.{} = {}", spec.name, s.normalized_score).unwrap();
        if s.degenerate {
            degenerate.push(spec.name.clone());
        }
    }
    for name in degenerate {
        writeln!(out, "note = degenerate {name}").unwrap();
    }
    write_output(args.data.out.as_deref(), &out)
}

fn cmd_test(args: &TestArgs) -> Result<()> {
    let table = pick(load(&args.data.manifest)?, args.data.split);
    let pred = predictions_for(&table, args.model.as_deref())?;
    let mut cfg = PermutationTestConfig::new(args.data.notion, args.permutations, args.seed);
    cfg.epsilon = args.epsilon;
    let r = permutation_test(&pred, &table.a, Some(&table.y), &cfg)?;
    let text = format!(
        "notion = {}\nobserved = {}\npvalue = {}\npermutations = {}\nseed = {}\n",
        r.notion, r.observed, r.p_value, r.num_permutations, r.seed
    );
    write_output(args.data.out.as_deref(), &text)
}

fn cmd_train(args: &TrainArgs) -> Result<()> {
    let splits = load(&args.manifest)?;
    let task = splits.train.task;
    let cfg = args
        .training
        .config(task, args.notion, args.lambda, args.seed);
    let (model, log) = train(&splits.train, &splits.val, &cfg)?;
    let ckpt = Checkpoint::new(&model, task, &cfg, input_names(&splits.train, cfg.unaware))?;
    save_checkpoint(&args.out, &ckpt)?;
    if let Some(path) = &args.log {
        let text =
            serde_json::to_string_pretty(&log).map_err(|e| Error::Checkpoint(e.to_string()))?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))?;
    }
    let best = &log.epochs[log.best_epoch];
    println!(
        "best epoch {} val loss {} val metric {}",
        log.best_epoch, best.val_loss_total, best.val_metric
    );
    Ok(())
}

fn cmd_eval(args: &EvalArgs) -> Result<()> {
    let ckpt = load_checkpoint(&args.model)?;
    let table = pick(load(&args.data.manifest)?, args.data.split);
    model_inputs(&ckpt, &table)?;
    let mut opts = EvalOptions::new(args.data.notion);
    opts.score = args.kernel.options();
    opts.unaware = ckpt.config.unaware;
    opts.permutation_test = args.permutations.map(|p| (p, args.seed));
    let report = evaluate(&ckpt.model()?, &table, &opts)?;
    write_output(args.data.out.as_deref(), &report.to_text())
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = if values.len() > 1 {
        values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (mean, var.sqrt())
}

fn report_row(r: &EvalReport) -> Vec<f64> {
    let mut row = vec![r.performance];
    row.extend(r.deo.iter().map(|(_, v)| v.unwrap_or(f64::NAN)));
    row.push(r.cocco_joint);
    row.extend(r.cocco.iter().map(|(_, v)| *v));
    row
}

fn cell(v: f64) -> String {
    if v.is_finite() {
        format!("{v}")
    } else {
        "nan".into()
    }
}

fn cmd_sweep(args: &SweepArgs) -> Result<()> {
    if args.lambdas.len() < 2 {
        return Err(Error::InvalidArgument(
            "a sweep needs at least two lambda values".into(),
        ));
    }
    if args.seeds.is_empty() {
        return Err(Error::InvalidArgument(
            "a sweep needs at least one seed".into(),
        ));
    }
    let splits = load(&args.manifest)?;
    let task = splits.train.task;
    let eval_table = pick(splits.clone(), args.split);
    let cells: Vec<(f64, u64)> = args
        .lambdas
        .iter()
        .flat_map(|&l| args.seeds.iter().map(move |&s| (l, s)))
        .collect();
    let rows: Vec<Result<EvalReport>> = cells
        .par_iter()
        .map(|&(lambda, seed)| {
            let cfg = args.training.config(task, args.notion, lambda, seed);
            let (model, _) = train(&splits.train, &splits.val, &cfg)?;
            let mut opts = EvalOptions::new(args.notion);
            opts.unaware = cfg.unaware;
            evaluate(&model, &eval_table, &opts)
        })
        .collect();
    let reports = rows.into_iter().collect::<Result<Vec<_>>>()?;

    let first = &reports[0];
    let mut header = vec![
        "lambda".to_string(),
        "seed".to_string(),
        first.performance_key().to_string(),
    ];
    header.extend(first.deo.iter().map(|(n, _)| format!("deo.{n}")));
    header.push("cocco.joint".into());
    header.extend(first.cocco.iter().map(|(n, _)| format!("cocco.{n}")));
    let mut out = header.join(",") + "\n";
    for ((lambda, seed), r) in cells.iter().zip(&reports) {
        let values: Vec<String> = report_row(r).into_iter().map(cell).collect();
        writeln!(out, "{lambda},{seed},{}", values.join(",")).unwrap();
    }
    for &lambda in &args.lambdas {
        let group: Vec<Vec<f64>> = cells
            .iter()
            .zip(&reports)
            .filter(|((l, _), _)| *l == lambda)
            .map(|(_, r)| report_row(r))
            .collect();
        let width = group[0].len();
        let stats: Vec<(f64, f64)> = (0..width)
            .map(|k| mean_std(&group.iter().map(|row| row[k]).collect::<Vec<_>>()))
            .collect();
        let means: Vec<String> = stats.iter().map(|s| cell(s.0)).collect();
        let stds: Vec<String> = stats.iter().map(|s| cell(s.1)).collect();
        writeln!(out, "{lambda},mean,{}", means.join(",")).unwrap();
        writeln!(out, "{lambda},std,{}", stds.join(",")).unwrap();
    }
    write_output(args.out.as_deref(), &out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_every_subcommand() {
        let parse = |s: &str| Cli::try_parse_from(s.split_whitespace());
        assert!(parse("faircocco score --manifest m.toml --notion dp --lowrank-rank 64").is_ok());
        assert!(parse("faircocco test --manifest m.toml --permutations 99 --seed 3").is_ok());
        assert!(parse("faircocco train --manifest m.toml --lambda 0.5 --out x.json").is_ok());
        assert!(parse("faircocco eval --manifest m.toml --model x.json --split val").is_ok());
        assert!(parse("faircocco sweep --manifest m.toml --lambdas 0,1 --seeds 0,1,2").is_ok());
        assert!(parse("faircocco score --manifest m.toml --notion xx").is_err());
    }

    #[test]
    fn lowrank_flags_enable_the_lowrank_path() {
        let k = KernelArgs {
            epsilon: 1e-4,
            lowrank_rank: None,
            lowrank_tol: None,
        };
        assert!(k.options().lowrank.is_none());
        let k = KernelArgs {
            lowrank_tol: Some(1e-3),
            ..k
        };
        assert_eq!(
            k.options().lowrank.unwrap().max_rank,
            LowRankOptions::default().max_rank
        );
    }

    #[test]
    fn summary_uses_sample_std() {
        let (m, s) = mean_std(&[1.0, 2.0, 3.0]);
        assert_eq!(m, 2.0);
        assert_eq!(s, 1.0);
        assert_eq!(mean_std(&[4.0]).1, 0.0);
    }
}
