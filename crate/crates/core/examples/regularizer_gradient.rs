//! The differentiable penalty on one mini-batch, with a central-difference
//! check of a few gradient entries.
//!
//!     cargo run --release --example regularizer_gradient

use faircocco::fairlearn::{regularizer, RegularizerKernels};
use faircocco::kernels::median_heuristic;
use faircocco::Notion;
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> faircocco::Result<()> {
    let n = 64;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let a = DMatrix::from_fn(n, 1, |_, _| f64::from(rng.random_bool(0.5)));
    let y = DMatrix::from_fn(n, 1, |i, _| a[(i, 0)] + rng.random_range(-1.0..1.0));
    let pred = DMatrix::from_fn(n, 1, |i, _| {
        y[(i, 0)] + 0.5 * a[(i, 0)] + 0.2 * rng.random_range(-1.0..1.0)
    });
    // fixing the prediction bandwidth makes the value a smooth function of pred
    let kernels = RegularizerKernels {
        prediction: Some(median_heuristic(&pred)?.kernel()),
        sensitive: median_heuristic(&a)?.kernel(),
        target: Some(median_heuristic(&y)?.kernel()),
        epsilon: 1e-4,
    };
    for notion in [Notion::Dp, Notion::Eo, Notion::Cal] {
        let r = regularizer(notion, &pred, &a, Some(&y), &kernels, true)?;
        let h = 1e-5;
        let mut worst = 0.0f64;
        for i in [0, 17, 42] {
            let mut up = pred.clone();
            up[(i, 0)] += h;
            let mut down = pred.clone();
            down[(i, 0)] -= h;
            let fd = (regularizer(notion, &up, &a, Some(&y), &kernels, false)?.value
                - regularizer(notion, &down, &a, Some(&y), &kernels, false)?.value)
                / (2.0 * h);
            worst = worst.max((fd - r.gradient[(i, 0)]).abs());
        }
        println!(
            "{notion}: value {:.5}, |grad| {:.4}, worst fd error {worst:.2e}",
            r.value,
            r.gradient.norm()
        );
    }
    Ok(())
}
