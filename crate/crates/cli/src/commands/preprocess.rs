use serde_json::json;
use sparsebench::data::preprocess;
use sparsebench::persist;
use sparsebench::Result;

use crate::io;
use crate::PreprocessArgs;

pub fn run(args: &PreprocessArgs) -> Result<()> {
    let matrix = io::read_matrix(&args.input)?;
    let cfg = args.thresholds.to_config();
    let (cleaned, report) = preprocess(&matrix, &cfg)?;

    io::ensure_dir(&args.output)?;
    io::write_matrix_csv(&args.output.join("cleaned.csv"), &cleaned)?;
    persist::save_model(
        &args.output.join("preprocess_report.json"),
        &report,
        Some(args.seed),
        &json!({
            "input": args.input.display().to_string(),
            "low_score_quantile": cfg.low_score_quantile,
            "min_item_sd": cfg.min_item_sd,
            "max_item_mean": cfg.max_item_mean,
            "pbis_zero_band": cfg.pbis_zero_band,
        }),
    )?;

    println!(
        "kept {} of {} subjects and {} of {} items ({} low-score subjects, {} degenerate items removed)",
        cleaned.n_subjects(),
        matrix.n_subjects(),
        cleaned.n_items(),
        matrix.n_items(),
        report.removed_subjects.len(),
        report.removed_items.len(),
    );
    println!("wrote {}", args.output.join("cleaned.csv").display());
    Ok(())
}
