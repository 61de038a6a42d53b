//! Accuracy against fairness over a penalty grid on synthetic data where the
//! label leans on the attribute, averaged over three seeds. At the top of
//! the grid the penalty swamps the loss and accuracy falls to chance.
//!
//!     cargo run --release --example tradeoff_sweep

use faircocco::data::{ColumnSpec, DType, DatasetTable, Role, Task};
use faircocco::fairlearn::{train, TrainConfig};
use faircocco::metrics::{evaluate, EvalOptions};
use faircocco::Notion;
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn column(name: &str, role: Role, dtype: DType) -> ColumnSpec {
    ColumnSpec {
        name: name.into(),
        role,
        dtype,
    }
}

fn table(n: usize, rng: &mut ChaCha8Rng) -> DatasetTable {
    let a = DMatrix::from_fn(n, 1, |_, _| f64::from(rng.random_bool(0.5)));
    let z = DMatrix::from_fn(n, 1, |_, _| rng.random_range(-1.5..1.5));
    let y = DMatrix::from_fn(n, 1, |i, _| {
        f64::from(z[(i, 0)] + a[(i, 0)] - 0.5 + rng.random_range(-0.5..0.5) > 0.0)
    });
    let x = DMatrix::from_fn(n, 2, |i, j| {
        if j == 0 {
            z[(i, 0)]
        } else {
            a[(i, 0)] + 0.3 * rng.random_range(-1.0..1.0)
        }
    });
    DatasetTable {
        task: Task::Classification,
        feature_columns: vec![
            column("z", Role::Feature, DType::Continuous),
            column("proxy", Role::Feature, DType::Continuous),
        ],
        sensitive_columns: vec![column("a", Role::Sensitive, DType::Binary)],
        target_columns: vec![column("y", Role::Target, DType::Binary)],
        x,
        a,
        y,
        predictions: None,
        rows: (0..n).collect(),
    }
}

fn main() -> faircocco::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (tr, va, te) = (
        table(1200, &mut rng),
        table(400, &mut rng),
        table(400, &mut rng),
    );
    println!("{:>7} {:>7} {:>7}", "lambda", "acc", "eo");
    for lambda in [0.0, 0.05, 0.1, 0.2, 0.5] {
        let (mut acc, mut score) = (0.0, 0.0);
        for seed in 0..3 {
            let mut cfg = TrainConfig::for_task(Task::Classification, Notion::Eo);
            cfg.lambda = lambda;
            cfg.seed = seed;
            cfg.epochs = 40;
            let (model, _) = train(&tr, &va, &cfg)?;
            let r = evaluate(&model, &te, &EvalOptions::new(Notion::Eo))?;
            acc += r.performance / 3.0;
            score += r.cocco_joint / 3.0;
        }
        println!("{lambda:>7} {acc:>7.3} {score:>7.4}");
    }
    Ok(())
}
