//! The low-rank score path should grow roughly linearly in N at fixed rank.
//! Lives in its own test binary so nothing else competes for the CPU.

use std::time::Instant;

use faircocco::score::{Bandwidths, LowRankOptions, ScoreOptions};
use faircocco::{score_from_data, Notion};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn sample(n: usize, rng: &mut ChaCha8Rng) -> (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>) {
    let a = DMatrix::from_fn(n, 1, |_, _| rng.random_range(-1.0..1.0));
    let y = DMatrix::from_fn(n, 1, |i, _| a[(i, 0)] + rng.random_range(-1.0..1.0));
    let p = DMatrix::from_fn(n, 1, |i, _| {
        y[(i, 0)] + 0.3 * a[(i, 0)] + rng.random_range(-0.5..0.5)
    });
    (p, a, y)
}

#[test]
fn lowrank_time_is_near_linear_in_n() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    // fixed bandwidths keep the O(N²) median heuristic out of the timing
    let opts = ScoreOptions {
        lowrank: Some(LowRankOptions {
            tol: 1e-12,
            max_rank: 50,
        }),
        bandwidths: Bandwidths {
            prediction: Some(1.0),
            sensitive: Some(1.0),
            target: Some(1.0),
        },
        ..Default::default()
    };
    let sizes = [1000usize, 2000, 4000];
    let mut times = Vec::new();
    for &n in &sizes {
        let (p, a, y) = sample(n, &mut rng);
        let best = (0..5)
            .map(|_| {
                let t = Instant::now();
                let s = score_from_data(Notion::Eo, &p, &a, Some(&y), &opts).unwrap();
                assert!(s.normalized_score.is_finite());
                t.elapsed().as_secs_f64()
            })
            .fold(f64::INFINITY, f64::min);
        times.push(best);
    }
    // least-squares slope of log t against log N
    let xs: Vec<f64> = sizes.iter().map(|&n| (n as f64).ln()).collect();
    let ys: Vec<f64> = times.iter().map(|t| t.ln()).collect();
    let (mx, my) = (xs.iter().sum::<f64>() / 3.0, ys.iter().sum::<f64>() / 3.0);
    let slope = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (x - mx) * (y - my))
        .sum::<f64>()
        / xs.iter().map(|x| (x - mx) * (x - mx)).sum::<f64>();
    assert!(slope < 1.3, "log-log slope {slope:.3}, times {times:?}");
}
