//! End-to-end training runs: penalized models on synthetic data and the
//! penalty sweep on the bundled regression benchmark.

mod common;

use faircocco::data::{DType, Task};
use faircocco::fairlearn::{train, TrainConfig};
use faircocco::metrics::{evaluate, EvalOptions};
use faircocco::{ingest, load_manifest, Notion};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Target equal to the attribute; the features carry the attribute plus noise.
fn target_is_attribute(n: usize, seed: u64) -> faircocco::DatasetTable {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = DMatrix::from_fn(n, 1, |_, _| f64::from(rng.random_bool(0.7)));
    let x = DMatrix::from_fn(n, 3, |i, j| match j {
        0 => a[(i, 0)] + 0.5 * rng.random_range(-1.0..1.0),
        _ => rng.random_range(-1.0..1.0),
    });
    common::table(Task::Classification, x, a.clone(), a, DType::Binary)
}

#[test]
fn strong_parity_penalty_removes_the_dependence() {
    let data = target_is_attribute(1500, 3);
    let (tr, va, te) = common::split(&data, 900, 300);
    let mut cfg = TrainConfig::for_task(Task::Classification, Notion::Dp);
    cfg.lambda = 5.0;
    cfg.epochs = 60;
    let (model, _) = train(&tr, &va, &cfg).unwrap();
    let mut opts = EvalOptions::new(Notion::Dp);
    opts.permutation_test = Some((199, 0));
    let r = evaluate(&model, &te, &opts).unwrap();
    let p = r.p_value.unwrap();
    let majority = te.y.iter().filter(|&&v| v == 1.0).count() as f64 / te.len() as f64;
    let majority = majority.max(1.0 - majority);
    assert!(p > 0.05, "p-value {p}, score {}", r.cocco_joint);
    assert!(
        (r.performance - majority).abs() < 0.05,
        "accuracy {} vs majority rate {majority}",
        r.performance
    );

    // unpenalized, the same model recovers the attribute
    cfg.lambda = 0.0;
    let (model, _) = train(&tr, &va, &cfg).unwrap();
    let r = evaluate(&model, &te, &opts).unwrap();
    assert!(r.performance > 0.9 && r.p_value.unwrap() < 0.01, "{r:?}");
}

#[test]
fn unaware_models_never_see_the_attribute() {
    let data = target_is_attribute(300, 4);
    let (tr, va, _) = common::split(&data, 200, 50);
    let mut cfg = TrainConfig::for_task(Task::Classification, Notion::Eo);
    cfg.epochs = 2;
    cfg.unaware = true;
    let (model, _) = train(&tr, &va, &cfg).unwrap();
    assert_eq!(model.n_inputs(), 3);
    cfg.unaware = false;
    assert_eq!(train(&tr, &va, &cfg).unwrap().0.n_inputs(), 4);
}

/// Held-out equalized-odds score over the default penalty grid on the
/// regression benchmark, with library-default training settings: the score
/// should be nonincreasing in the penalty, allowing one inversion.
#[test]
fn crime_penalty_sweep_is_nearly_monotone() {
    let manifest = load_manifest(common::data_manifest("crime")).unwrap();
    let splits = ingest(&manifest).unwrap();
    let mut scores = Vec::new();
    for lambda in [0.0, 0.5, 1.0, 2.0, 5.0] {
        let mut cfg = TrainConfig::for_task(Task::Regression, Notion::Eo);
        cfg.lambda = lambda;
        let (model, _) = train(&splits.train, &splits.val, &cfg).unwrap();
        let r = evaluate(&model, &splits.test, &EvalOptions::new(Notion::Eo)).unwrap();
        scores.push(r.cocco_joint);
    }
    let inversions = scores.windows(2).filter(|w| w[1] > w[0]).count();
    assert!(scores[0] > scores[4], "{scores:?}");
    assert!(inversions <= 1, "{inversions} inversions in {scores:?}");
}
