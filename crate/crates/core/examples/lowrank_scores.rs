//! Dense versus incomplete-Cholesky scores as N grows. The dense path is
//! cubic in N; the low-rank path stays linear at fixed rank.
//!
//!     cargo run --release --example lowrank_scores

use std::time::Instant;

use faircocco::score::{LowRankOptions, ScoreOptions};
use faircocco::{score_from_data, Notion};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> faircocco::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let low = ScoreOptions {
        lowrank: Some(LowRankOptions {
            tol: 1e-8,
            max_rank: 100,
        }),
        ..Default::default()
    };
    println!(
        "{:>6} {:>10} {:>10} {:>9} {:>9}",
        "n", "dense", "low-rank", "dense s", "low s"
    );
    for n in [500, 1000, 2000, 4000] {
        let a = DMatrix::from_fn(n, 1, |_, _| rng.random_range(-1.0..1.0));
        let y = DMatrix::from_fn(n, 1, |i, _| a[(i, 0)] + rng.random_range(-1.0..1.0));
        let p = DMatrix::from_fn(n, 1, |i, _| {
            y[(i, 0)] + 0.4 * a[(i, 0)] + 0.3 * rng.random_range(-1.0..1.0)
        });
        let t = Instant::now();
        let l = score_from_data(Notion::Eo, &p, &a, Some(&y), &low)?;
        let low_s = t.elapsed().as_secs_f64();
        // dense beyond 2000 rows takes a while and is the point of the comparison
        let (dense, dense_s) = if n <= 2000 {
            let t = Instant::now();
            let d = score_from_data(Notion::Eo, &p, &a, Some(&y), &ScoreOptions::default())?;
            (
                format!("{:.5}", d.normalized_score),
                format!("{:.3}", t.elapsed().as_secs_f64()),
            )
        } else {
            ("-".into(), "-".into())
        };
        println!(
            "{n:>6} {dense:>10} {:>10.5} {dense_s:>9} {low_s:>9.3}",
            l.normalized_score
        );
    }
    Ok(())
}
