//! Joint versus per-attribute scores with two sensitive attributes. The
//! prediction depends on their XOR, so each attribute alone looks almost
//! independent of it while the joint score does not.
//!
//!     cargo run --release --example multi_attribute

use faircocco::inference::{permutation_test, PermutationTestConfig};
use faircocco::{score_from_data, Notion, ScoreOptions};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> faircocco::Result<()> {
    let n = 400;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let a = DMatrix::from_fn(n, 2, |_, _| f64::from(rng.random_bool(0.5)));
    let pred = DMatrix::from_fn(n, 1, |i, _| {
        let xor = f64::from(a[(i, 0)] != a[(i, 1)]);
        xor + 0.5 * rng.random_range(-1.0..1.0)
    });
    let opts = ScoreOptions::default();
    let cfg = PermutationTestConfig::new(Notion::Dp, 199, 0);
    let report = |name: &str, sens: &DMatrix<f64>| -> faircocco::Result<()> {
        let s = score_from_data(Notion::Dp, &pred, sens, None, &opts)?;
        let t = permutation_test(&pred, sens, None, &cfg)?;
        println!(
            "{name:<6} score {:.4}  p = {:.3}",
            s.normalized_score, t.p_value
        );
        Ok(())
    };
    report("a0", &a.columns(0, 1).into_owned())?;
    report("a1", &a.columns(1, 1).into_owned())?;
    report("joint", &a)?;
    Ok(())
}
