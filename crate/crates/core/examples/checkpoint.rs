//! Trains a small model, writes a JSON checkpoint, reloads it and checks the
//! predictions are bit-identical.
//!
//!     cargo run --release --example checkpoint

use faircocco::fairlearn::{
    load_checkpoint, predict, save_checkpoint, train, Checkpoint, TrainConfig,
};
use faircocco::{ingest, load_manifest, Notion};

fn main() -> faircocco::Result<()> {
    let path = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/german.toml");
    let splits = ingest(&load_manifest(path)?)?;
    let mut cfg = TrainConfig::for_task(splits.train.task, Notion::Eo);
    cfg.lambda = 0.5;
    cfg.epochs = 10;
    let (model, _) = train(&splits.train, &splits.val, &cfg)?;

    let mut inputs: Vec<String> = splits
        .train
        .feature_columns
        .iter()
        .map(|c| c.name.clone())
        .collect();
    inputs.extend(
        splits
            .train
            .sensitive_columns
            .iter()
            .map(|c| c.name.clone()),
    );
    let ckpt = Checkpoint::new(&model, splits.train.task, &cfg, inputs)?;
    let file = std::env::temp_dir().join("faircocco-example-checkpoint.json");
    save_checkpoint(&file, &ckpt)?;
    let back = load_checkpoint(&file)?;
    println!(
        "wrote {} ({} bytes), config hash {}",
        file.display(),
        std::fs::metadata(&file).map(|m| m.len()).unwrap_or(0),
        back.config_hash
    );

    let x = splits.test.inputs(false);
    let same = predict(&model, &x)? == predict(&back.model()?, &x)?;
    println!(
        "{} parameters, predictions identical after reload: {same}",
        model.n_params()
    );
    std::fs::remove_file(&file).ok();
    Ok(())
}
