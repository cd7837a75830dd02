use serde_json::json;
use sparsebench::data::stratified_split;
use sparsebench::persist;
use sparsebench::select::{tune_selection, FilterSearchSpace, TuneConfig};
use sparsebench::{Result, Scores};

use crate::model::clamp_k;
use crate::{io, TuneArgs};

pub fn run(args: &TuneArgs) -> Result<()> {
    let matrix = io::read_matrix(&args.input)?;
    let scores: Scores = matrix.percent_scores();
    let split = stratified_split(
        &scores,
        args.split.test_frac,
        args.split.val_frac,
        args.split.bins,
        args.seed,
    )?;
    let k = clamp_k(args.k, matrix.n_items(), matrix.benchmark_name());
    let cfg = TuneConfig {
        lambda: args.lambda,
        budget: args.budget,
        seed: args.seed,
    };
    let space = FilterSearchSpace::for_target(k);
    let (winner, subset) = tune_selection(&matrix, &scores, &split, &cfg, &space)?;

    io::ensure_dir(&args.output)?;
    let config = json!({
        "input": args.input.display().to_string(),
        "lambda": args.lambda,
        "budget": args.budget,
        "k_target": k,
        "test_frac": args.split.test_frac,
        "val_frac": args.split.val_frac,
        "bins": args.split.bins,
        "winner": winner,
    });
    persist::save_model(&args.output.join("subset.json"), &subset, Some(args.seed), &config)?;
    persist::save_model(&args.output.join("split.json"), &split, Some(args.seed), &config)?;

    println!(
        "winner: {:?} items over {} chunks (threshold {:.4}); k = {}, validation RMSE {:.4}, test RMSE {:.4}",
        winner.model_kind,
        winner.quantiles,
        winner.info_threshold,
        subset.k,
        subset.val_rmse.unwrap_or(f64::NAN),
        subset.test_rmse.unwrap_or(f64::NAN),
    );
    Ok(())
}
