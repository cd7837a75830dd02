use serde_json::json;
use sparsebench::fa::{explained_variance, factor_scores, fit_minres};
use sparsebench::persist::{self, FORMAT_VERSION};
use sparsebench::{Error, Result};

use crate::model::correlation_matrix;
use crate::{io, FaArgs};

pub fn run(args: &FaArgs) -> Result<()> {
    let table = io::read_numeric_table(&args.input)?;
    let d = table.columns.len();
    if args.factors >= d {
        return Err(Error::InvalidInput(format!(
            "{} factors need at least {} columns, table has {d}",
            args.factors,
            args.factors + 1
        )));
    }
    let (corr, means, sds) = correlation_matrix(&table.rows, &table.columns)?;
    let fit = fit_minres(&corr, args.factors)?;
    let proportions = explained_variance(&fit, d as f64)?;

    // The fit lives on the correlation scale, so score standardized rows.
    let mut score_rows: Vec<Vec<f64>> = Vec::with_capacity(table.rows.len());
    for row in &table.rows {
        let z: Vec<f64> = row
            .iter()
            .enumerate()
            .map(|(j, &v)| (v - means[j]) / sds[j])
            .collect();
        score_rows.push(factor_scores(&fit, &z, args.ridge)?);
    }

    io::ensure_dir(&args.output)?;
    let config = json!({
        "input": args.input.display().to_string(),
        "factors": args.factors,
        "ridge": args.ridge,
        "columns": table.columns,
    });
    persist::save_model(
        &args.output.join("factor_model.json"),
        &fit,
        Some(args.seed),
        &config,
    )?;

    let loadings_by_variable: Vec<Vec<f64>> = (0..d).map(|j| fit.loadings.row(j).to_vec()).collect();
    io::write_json(
        &args.output.join("factor_analysis.json"),
        &json!({
            "format_version": FORMAT_VERSION,
            "seed": args.seed,
            "config": config,
            "columns": table.columns,
            "loadings": loadings_by_variable,
            "uniquenesses": fit.uniquenesses,
            "proportions": proportions,
            "residual_ss": fit.residual_ss,
            "heywood": fit.heywood,
        }),
    )?;

    let header = std::iter::once("subject_id".to_string())
        .chain((1..=args.factors).map(|f| format!("f{f}")))
        .collect::<Vec<_>>()
        .join(",");
    let mut csv = io::CsvWriter::new(&header);
    for (id, scores) in table.row_ids.iter().zip(&score_rows) {
        let mut fields = vec![id.clone()];
        fields.extend(scores.iter().map(|&s| io::fmt_f64(s)));
        csv.row(&fields);
    }
    csv.write(&args.output.join("factor_scores.csv"))?;

    let shares = proportions
        .iter()
        .enumerate()
        .map(|(i, p)| format!("factor {}: {:.1}%", i + 1, 100.0 * p))
        .collect::<Vec<_>>()
        .join(", ");
    println!("explained variance — {shares}");
    Ok(())
}
