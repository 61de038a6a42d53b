//! Trains an equalized-odds penalized network on the bundled German credit
//! data and reports held-out accuracy, DEO and the score per penalty weight.
//!
//!     cargo run --release --example train_fair_classifier

use faircocco::fairlearn::{train, TrainConfig};
use faircocco::metrics::{evaluate, EvalOptions};
use faircocco::{ingest, load_manifest, Notion};

fn main() -> faircocco::Result<()> {
    let path = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/german.toml");
    let splits = ingest(&load_manifest(path)?)?;
    println!("{:>7} {:>7} {:>7} {:>7}", "lambda", "acc", "deo", "score");
    for lambda in [0.0, 0.5, 2.0] {
        let mut cfg = TrainConfig::for_task(splits.train.task, Notion::Eo);
        cfg.lambda = lambda;
        cfg.batch_size = 64;
        let (model, log) = train(&splits.train, &splits.val, &cfg)?;
        let r = evaluate(&model, &splits.test, &EvalOptions::new(Notion::Eo))?;
        let deo = r.deo[0].1.unwrap_or(f64::NAN);
        println!(
            "{lambda:>7} {:>7.3} {deo:>7.3} {:>7.4}   (best epoch {})",
            r.performance, r.cocco_joint, log.best_epoch
        );
    }
    Ok(())
}
