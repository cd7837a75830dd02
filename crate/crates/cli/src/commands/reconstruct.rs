use serde_json::json;
use sparsebench::data::stratified_split;
use sparsebench::irt::{estimate_abilities, fit_em, AbilityEstimator, EmConfig};
use sparsebench::persist::{self, FORMAT_VERSION};
use sparsebench::quad::QuadratureGrid;
use sparsebench::reconstruct::{
    assemble_marginal, fit_weighted_average, interval_for_point, marginal_predictor_names,
    IntervalConfig,
};
use sparsebench::select::{information_filter, FilterConfig};
use sparsebench::{Result, Scores};

use crate::model::{clamp_k, fit_and_eval, metrics_json, restrict_model, split_labels};
use crate::{io, ReconstructArgs};

pub fn run(args: &ReconstructArgs) -> Result<()> {
    let matrix = io::read_matrix(&args.input)?;
    let scores: Scores = matrix.percent_scores();
    let split = stratified_split(
        &scores,
        args.split.test_frac,
        args.split.val_frac,
        args.split.bins,
        args.seed,
    )?;
    let estimator: AbilityEstimator = args.estimator.into();
    let k = clamp_k(args.k, matrix.n_items(), matrix.benchmark_name());

    // Select on the training split only, then score every subject from the
    // selected items alone — the situation a distilled benchmark is used in.
    let train = matrix.subset_subjects_by_id(&split.train_ids)?;
    let grid = QuadratureGrid::<f64>::default_ability_grid();
    let model = fit_em(&train, args.model.into(), &grid, &EmConfig::default())?;
    let ab_train = estimate_abilities(&train, &model, estimator)?;
    let cfg = FilterConfig {
        quantiles: k,
        info_threshold: args.tau,
        model_kind: model.kind,
        estimator,
    };
    let subset = information_filter(&model, &ab_train, &cfg)?;

    let sub_matrix = matrix.subset_items_by_id(&subset.item_ids)?;
    let restricted = restrict_model(&model, &subset.item_ids)?;
    let abilities = estimate_abilities(&sub_matrix, &restricted, estimator)?;
    let subscore: Scores = sub_matrix.percent_scores();

    let sub_train = sub_matrix.subset_subjects_by_id(&split.train_ids)?;
    let wa = fit_weighted_average(&sub_train, &scores.subset(&split.train_ids)?)?;
    let wa_pred: Vec<f64> = wa.predict(&sub_matrix)?;

    let x = assemble_marginal(&abilities, &subscore)?;
    let fit = fit_and_eval(&x, &marginal_predictor_names(), &scores, &split)?;

    io::ensure_dir(&args.output)?;
    let config = json!({
        "input": args.input.display().to_string(),
        "k_target": k,
        "tau": args.tau,
        "filter": cfg,
        "test_frac": args.split.test_frac,
        "val_frac": args.split.val_frac,
        "bins": args.split.bins,
    });
    persist::save_model(&args.output.join("subset.json"), &subset, Some(args.seed), &config)?;
    persist::save_model(&args.output.join("gam.json"), &fit.gam, Some(args.seed), &config)?;
    persist::save_model(
        &args.output.join("weighted_average.json"),
        &wa,
        Some(args.seed),
        &config,
    )?;

    let labels = split_labels(&split);
    let icfg = IntervalConfig::default();
    let mut csv = io::CsvWriter::new("subject_id,split,truth,point,lower,upper");
    for (j, id) in matrix.subject_ids().iter().enumerate() {
        let interval = interval_for_point(fit.predictions[j], &fit.store, &icfg)?;
        csv.row(&[
            id.clone(),
            labels.get(id.as_str()).copied().unwrap_or("train").to_string(),
            io::fmt_f64(scores.values()[j]),
            io::fmt_f64(interval.point),
            io::fmt_f64(interval.lower),
            io::fmt_f64(interval.upper),
        ]);
    }
    csv.write(&args.output.join("predictions.csv"))?;

    io::write_json(
        &args.output.join("reconstruction.json"),
        &json!({
            "format_version": FORMAT_VERSION,
            "seed": args.seed,
            "config": config,
            "benchmark": matrix.benchmark_name(),
            "k": subset.k,
            "item_ids": subset.item_ids,
            "wa_prediction_rmse_test": sparsebench::reconstruct::metrics(
                wa_pred.subset(&split.test_ids)?.values(),
                scores.subset(&split.test_ids)?.values(),
            )?.rmse,
            "metrics": {
                "validation": metrics_json(&fit.val),
                "test": metrics_json(&fit.test),
            },
        }),
    )?;

    println!(
        "reconstructed {} from {} items: test RMSE {:.4}, MAE {:.4}, Spearman {}",
        matrix.benchmark_name(),
        subset.k,
        fit.test.rmse,
        fit.test.mae,
        fit.test
            .spearman
            .value()
            .map_or("degenerate".to_string(), |s| format!("{s:.4}")),
    );
    Ok(())
}
