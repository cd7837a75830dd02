use serde_json::json;
use sparsebench::irt::{estimate_abilities, fit_em, AbilityEstimator, EmConfig};
use sparsebench::persist;
use sparsebench::quad::QuadratureGrid;
use sparsebench::select::{information_filter, FilterConfig};
use sparsebench::{IrtModel, Result};

use crate::{io, FilterArgs};

pub fn run(args: &FilterArgs) -> Result<()> {
    let matrix = io::read_matrix(&args.input)?;
    let model: IrtModel = match &args.model_file {
        Some(path) => persist::load_model::<IrtModel>(path)?.payload,
        None => {
            let grid = QuadratureGrid::<f64>::default_ability_grid();
            fit_em(&matrix, args.model.into(), &grid, &EmConfig::default())?
        }
    };
    let estimator: AbilityEstimator = args.estimator.into();
    let abilities = estimate_abilities(&matrix, &model, estimator)?;
    let cfg = FilterConfig {
        quantiles: args.k,
        info_threshold: args.tau,
        model_kind: model.kind,
        estimator,
    };
    let subset = information_filter(&model, &abilities, &cfg)?;

    io::ensure_dir(&args.output)?;
    persist::save_model(
        &args.output.join("subset.json"),
        &subset,
        Some(args.seed),
        &json!({
            "input": args.input.display().to_string(),
            "model_file": args.model_file.as_ref().map(|p| p.display().to_string()),
            "k": args.k,
            "tau": args.tau,
            "filter": cfg,
        }),
    )?;

    println!(
        "selected {} of {} items (threshold {})",
        subset.k,
        matrix.n_items(),
        args.tau,
    );
    Ok(())
}
