use serde_json::json;
use sparsebench::data::stratified_split;
use sparsebench::persist;
use sparsebench::{Result, Scores};

use crate::io;
use crate::SplitArgs;

pub fn run(args: &SplitArgs) -> Result<()> {
    let matrix = io::read_matrix(&args.input)?;
    let scores: Scores = matrix.percent_scores();
    let split = stratified_split(
        &scores,
        args.split.test_frac,
        args.split.val_frac,
        args.split.bins,
        args.seed,
    )?;

    io::ensure_dir(&args.output)?;
    persist::save_model(
        &args.output.join("split.json"),
        &split,
        Some(args.seed),
        &json!({
            "input": args.input.display().to_string(),
            "test_frac": args.split.test_frac,
            "val_frac": args.split.val_frac,
            "bins": args.split.bins,
        }),
    )?;

    println!(
        "split {} subjects into {} train / {} validation / {} test",
        scores.len(),
        split.train_ids.len(),
        split.validation_ids.len(),
        split.test_ids.len(),
    );
    Ok(())
}
