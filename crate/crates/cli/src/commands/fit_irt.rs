use serde_json::json;
use sparsebench::irt::{estimate_abilities, fit_em, EmConfig, ModelKind};
use sparsebench::persist;
use sparsebench::quad::QuadratureGrid;
use sparsebench::Result;

use crate::{io, FitIrtArgs};

pub fn run(args: &FitIrtArgs) -> Result<()> {
    let matrix = io::read_matrix(&args.input)?;
    let kind: ModelKind = args.model.into();
    let grid = QuadratureGrid::<f64>::default_ability_grid();
    let em = EmConfig {
        max_cycles: args.max_cycles,
        param_tol: args.param_tol,
    };
    let model = fit_em(&matrix, kind, &grid, &em)?;
    let abilities = estimate_abilities(&matrix, &model, args.estimator.into())?;

    io::ensure_dir(&args.output)?;
    persist::save_model(
        &args.output.join("model.json"),
        &model,
        Some(args.seed),
        &json!({
            "input": args.input.display().to_string(),
            "model": kind,
            "max_cycles": args.max_cycles,
            "param_tol": args.param_tol,
        }),
    )?;
    let mut csv = io::CsvWriter::new("subject_id,theta");
    for (id, theta) in abilities.subject_ids.iter().zip(&abilities.values) {
        csv.row(&[id.clone(), io::fmt_f64(*theta)]);
    }
    csv.write(&args.output.join("abilities.csv"))?;

    println!(
        "fitted {} items on {} subjects in {} EM cycles (converged: {}), final log-likelihood {:.4}",
        model.n_items(),
        matrix.n_subjects(),
        model.em_cycles,
        model.converged,
        model.final_log_likelihood(),
    );
    Ok(())
}
