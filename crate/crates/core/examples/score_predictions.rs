//! Scores three synthetic predictors under every notion: one that ignores
//! the attribute, one that leans on it, and one that copies it. The target
//! itself depends on A, so the blind predictor meets parity but not
//! equalized odds (given Y, its input z still carries A).
//!
//!     cargo run --release --example score_predictions

use faircocco::{score_from_data, Notion, ScoreOptions};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> faircocco::Result<()> {
    let n = 500;
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let a = DMatrix::from_fn(n, 1, |_, _| f64::from(rng.random_bool(0.5)));
    let z = DMatrix::from_fn(n, 1, |_, _| rng.random_range(-1.0..1.0));
    let y = DMatrix::from_fn(n, 1, |i, _| z[(i, 0)] + 0.5 * a[(i, 0)]);
    let noise = |rng: &mut ChaCha8Rng| 0.2 * rng.random_range(-1.0..1.0);

    let predictors = [
        (
            "blind",
            DMatrix::from_fn(n, 1, |i, _| z[(i, 0)] + noise(&mut rng)),
        ),
        (
            "leaning",
            DMatrix::from_fn(n, 1, |i, _| y[(i, 0)] + a[(i, 0)] + noise(&mut rng)),
        ),
        ("copy of A", a.clone()),
    ];
    let opts = ScoreOptions::default();
    println!("{:<10} {:>8} {:>8} {:>8}", "predictor", "dp", "eo", "cal");
    for (name, pred) in &predictors {
        let s: Vec<f64> = [Notion::Dp, Notion::Eo, Notion::Cal]
            .iter()
            .map(|&notion| {
                score_from_data(notion, pred, &a, Some(&y), &opts).map(|s| s.normalized_score)
            })
            .collect::<faircocco::Result<_>>()?;
        println!("{name:<10} {:>8.4} {:>8.4} {:>8.4}", s[0], s[1], s[2]);
    }
    Ok(())
}
