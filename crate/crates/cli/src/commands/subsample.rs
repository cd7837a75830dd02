use serde_json::json;
use sparsebench::data::stratified_split;
use sparsebench::persist;
use sparsebench::select::random_subsample_sweep;
use sparsebench::{Result, Scores};

use crate::model::clamp_k;
use crate::{io, SubsampleArgs};

pub fn run(args: &SubsampleArgs) -> Result<()> {
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
    let (best, records) = random_subsample_sweep(&matrix, &scores, &split, k, args.reps, args.seed)?;

    io::ensure_dir(&args.output)?;
    let mut csv = io::CsvWriter::new("rep,val_rmse,test_rmse");
    for r in &records {
        csv.row(&[
            r.rep.to_string(),
            io::fmt_f64(r.val_rmse),
            io::fmt_f64(r.test_rmse),
        ]);
    }
    csv.write(&args.output.join("sweep.csv"))?;

    let config = json!({
        "input": args.input.display().to_string(),
        "k_requested": args.k,
        "k": k,
        "reps": args.reps,
        "test_frac": args.split.test_frac,
        "val_frac": args.split.val_frac,
        "bins": args.split.bins,
    });
    persist::save_model(
        &args.output.join("best_subset.json"),
        &best,
        Some(args.seed),
        &config,
    )?;
    persist::save_model(&args.output.join("split.json"), &split, Some(args.seed), &config)?;

    println!(
        "best of {} random {}-item subsets: validation RMSE {:.4}, test RMSE {:.4}",
        args.reps,
        k,
        best.val_rmse.unwrap_or(f64::NAN),
        best.test_rmse.unwrap_or(f64::NAN),
    );
    Ok(())
}
