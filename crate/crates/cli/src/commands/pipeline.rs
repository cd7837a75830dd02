//! End-to-end distillation: per-benchmark preprocessing, a shared subject
//! split stratified by the grand-mean score, tuned information filtering
//! with a random-subset comparison, marginal/joint/grand-mean score
//! reconstructions with prediction intervals, and a one-factor analysis of
//! the ability estimates.
//!
//! Seed derivation tree (master seed `s`): the split uses
//! `derive_seed(s, "split", 0)`; benchmark `b` (input order) tunes with
//! `derive_seed(s, "tune", b)` and draws random subsets with
//! `derive_seed(s, "sweep", b)`. The derived values are echoed in
//! `summary.json`.

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use serde_json::{json, Map, Value};
use sparsebench::data::{preprocess, stratified_split, ResponseMatrix};
use sparsebench::fa::{explained_variance, factor_scores, fit_minres};
use sparsebench::irt::{estimate_abilities, fit_em, EmConfig};
use sparsebench::persist::{self, FORMAT_VERSION};
use sparsebench::quad::QuadratureGrid;
use sparsebench::reconstruct::{
    assemble_joint, assemble_marginal, fit_weighted_average, interval_for_point,
    joint_predictor_names, marginal_predictor_names, IntervalConfig,
};
use sparsebench::seeding::derive_seed;
use sparsebench::select::{
    random_subsample_sweep, tune_selection, FilterConfig, FilterSearchSpace, SweepRecord,
    TuneConfig,
};
use sparsebench::{Abilities, Error, Result, Scores, Subset};

use crate::model::{
    clamp_k, correlation_matrix, fit_and_eval, metrics_json, restrict_model, split_labels,
    subscore_route_rmse, FitEval,
};
use crate::{io, PipelineArgs};

/// Items to drop before preprocessing, read from `--exclude-items`.
enum Exclusions {
    /// One id list applied to every benchmark.
    Global(Vec<String>),
    /// (benchmark name, ids) pairs; benchmarks not listed keep all items.
    PerBenchmark(Vec<(String, Vec<String>)>),
}

fn string_array(path: &Path, what: &str, value: &Value) -> Result<Vec<String>> {
    let arr = value.as_array().ok_or_else(|| {
        Error::Parse(format!("{}: {what} must be an array", path.display()))
    })?;
    arr.iter()
        .map(|v| {
            v.as_str().map(str::to_string).ok_or_else(|| {
                Error::Parse(format!(
                    "{}: {what} must contain only strings",
                    path.display()
                ))
            })
        })
        .collect()
}

fn read_exclusions(path: &Path) -> Result<Exclusions> {
    let text = fs::read_to_string(path).map_err(|e| io::io_err(path, e))?;
    let value: Value = serde_json::from_str(&text)
        .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;

    if value.is_array() {
        return Ok(Exclusions::Global(string_array(path, "exclusion list", &value)?));
    }
    if let Some(benchmarks) = value.get("benchmarks").and_then(Value::as_array) {
        let mut per = Vec::with_capacity(benchmarks.len());
        for (i, entry) in benchmarks.iter().enumerate() {
            let name = entry
                .get("name")
                .and_then(Value::as_str)
                .ok_or_else(|| {
                    Error::Parse(format!(
                        "{}: benchmarks[{i}].name is missing or not a string",
                        path.display()
                    ))
                })?;
            let ids = entry.get("item_ids").ok_or_else(|| {
                Error::Parse(format!(
                    "{}: benchmarks[{i}].item_ids is missing",
                    path.display()
                ))
            })?;
            per.push((
                name.to_string(),
                string_array(path, &format!("benchmarks[{i}].item_ids"), ids)?,
            ));
        }
        return Ok(Exclusions::PerBenchmark(per));
    }
    if value.get("kind").and_then(Value::as_str) == Some("item-subset") {
        let loaded = persist::load_model::<Subset>(path)?;
        return Ok(Exclusions::Global(loaded.payload.item_ids));
    }
    if let Some(ids) = value.get("item_ids") {
        return Ok(Exclusions::Global(string_array(path, "item_ids", ids)?));
    }
    Err(Error::Parse(format!(
        "{}: unrecognized exclusion format; expected a pipeline selection.json, an item-subset \
         artifact, a JSON array of item ids, or an object with an item_ids array",
        path.display()
    )))
}

/// Everything the pipeline derives for one benchmark.
struct BenchOut {
    subset: Subset,
    winner: FilterConfig<f64>,
    sweep: Vec<SweepRecord<f64>>,
    /// Validation/test RMSE of the selection through the same
    /// subscore-only route the random subsets are scored with.
    subscore_val_rmse: f64,
    subscore_test_rmse: f64,
    /// Percent of random equal-size subsets with a higher test RMSE.
    pct_better_than_random: f64,
    abilities: Abilities,
    subscore: Scores,
    wa_pred: Scores,
    marginal: FitEval,
}

fn prediction_rows(
    csv: &mut io::CsvWriter,
    ids: &[String],
    labels: &std::collections::HashMap<&str, &'static str>,
    truth: &Scores,
    fits: &[&FitEval],
) -> Result<()> {
    let icfg = IntervalConfig::default();
    for (j, id) in ids.iter().enumerate() {
        let mut fields = vec![
            id.clone(),
            labels.get(id.as_str()).copied().unwrap_or("train").to_string(),
            io::fmt_f64(truth.values()[j]),
        ];
        for fit in fits {
            let interval = interval_for_point(fit.predictions.values()[j], &fit.store, &icfg)?;
            fields.push(io::fmt_f64(interval.point));
            fields.push(io::fmt_f64(interval.lower));
            fields.push(io::fmt_f64(interval.upper));
        }
        csv.row(&fields);
    }
    Ok(())
}

pub fn run(args: &PipelineArgs) -> Result<()> {
    // ---- load benchmarks ----
    let mut names: Vec<String> = Vec::new();
    let mut raw: Vec<ResponseMatrix> = Vec::new();
    for path in &args.input {
        let m = io::read_matrix(path)?;
        if names.iter().any(|n| n == m.benchmark_name()) {
            return Err(Error::InvalidInput(format!(
                "duplicate benchmark name '{}': input file stems must be unique",
                m.benchmark_name()
            )));
        }
        names.push(m.benchmark_name().to_string());
        raw.push(m);
    }
    let b_count = raw.len();
    io::ensure_dir(&args.output)?;

    // ---- exclusions (applied before preprocessing, so excluded items can
    // never reach the selection stage) ----
    let exclusions = args.exclude_items.as_deref().map(read_exclusions).transpose()?;
    let mut excluded_sets: Vec<HashSet<String>> = Vec::with_capacity(b_count);
    for name in &names {
        excluded_sets.push(match &exclusions {
            None => HashSet::new(),
            Some(Exclusions::Global(ids)) => ids.iter().cloned().collect(),
            Some(Exclusions::PerBenchmark(per)) => per
                .iter()
                .filter(|(n, _)| n == name)
                .flat_map(|(_, ids)| ids.iter().cloned())
                .collect(),
        });
    }
    let mut excluded_counts = vec![0usize; b_count];
    let mut matrices: Vec<ResponseMatrix> = Vec::with_capacity(b_count);
    for (i, m) in raw.into_iter().enumerate() {
        if excluded_sets[i].is_empty() {
            matrices.push(m);
        } else {
            let before = m.n_items();
            let reduced = m.without_items(&excluded_sets[i])?;
            excluded_counts[i] = before - reduced.n_items();
            matrices.push(reduced);
        }
    }

    // ---- preprocessing ----
    let pre_cfg = args.thresholds.to_config();
    let mut cleaned = Vec::with_capacity(b_count);
    let mut reports = Vec::with_capacity(b_count);
    for m in &matrices {
        let (c, r) = preprocess(m, &pre_cfg)?;
        cleaned.push(c);
        reports.push(r);
    }

    // ---- shared subjects, grand-mean score, split ----
    let shared: Vec<String> = cleaned[0]
        .subject_ids()
        .iter()
        .filter(|id| cleaned[1..].iter().all(|m| m.subject_index(id).is_some()))
        .cloned()
        .collect();
    if shared.len() < 4 {
        return Err(Error::InvalidInput(format!(
            "only {} subjects survive preprocessing in every benchmark; need at least 4",
            shared.len()
        )));
    }
    let benches: Vec<ResponseMatrix> = cleaned
        .iter()
        .map(|m| m.subset_subjects_by_id(&shared))
        .collect::<Result<_>>()?;
    let scores: Vec<Scores> = benches.iter().map(|m| m.percent_scores()).collect();
    let grand_values: Vec<f64> = (0..shared.len())
        .map(|j| scores.iter().map(|s| s.values()[j]).sum::<f64>() / b_count as f64)
        .collect();
    let grand = Scores::new(shared.clone(), grand_values)?;
    let split_seed = derive_seed(args.seed, "split", 0);
    let split = stratified_split(
        &grand,
        args.split.test_frac,
        args.split.val_frac,
        args.split.bins,
        split_seed,
    )?;

    // ---- per-benchmark selection and marginal reconstruction ----
    let grid = QuadratureGrid::<f64>::default_ability_grid();
    let mut tune_seeds = Vec::with_capacity(b_count);
    let mut sweep_seeds = Vec::with_capacity(b_count);
    let mut outs: Vec<BenchOut> = Vec::with_capacity(b_count);
    for (b, bench) in benches.iter().enumerate() {
        let k_target = clamp_k(args.k, bench.n_items(), &names[b]);
        let tune_seed = derive_seed(args.seed, "tune", b as u64);
        let sweep_seed = derive_seed(args.seed, "sweep", b as u64);
        tune_seeds.push(tune_seed);
        sweep_seeds.push(sweep_seed);

        let (winner, subset) = tune_selection(
            bench,
            &scores[b],
            &split,
            &TuneConfig {
                lambda: args.lambda,
                budget: args.budget,
                seed: tune_seed,
            },
            &FilterSearchSpace::for_target(k_target),
        )?;
        if let Some(hit) = subset
            .item_ids
            .iter()
            .find(|id| excluded_sets[b].contains(id.as_str()))
        {
            return Err(Error::InvalidInput(format!(
                "excluded item '{hit}' was selected for benchmark '{}'",
                names[b]
            )));
        }

        let (_, sweep) =
            random_subsample_sweep(bench, &scores[b], &split, subset.k, args.reps, sweep_seed)?;
        let (subscore_val_rmse, subscore_test_rmse) =
            subscore_route_rmse(bench, &scores[b], &split, &subset.item_ids)?;
        let beaten = sweep
            .iter()
            .filter(|r| r.test_rmse > subscore_test_rmse)
            .count();
        let pct_better_than_random = 100.0 * beaten as f64 / sweep.len() as f64;

        // Refit with the winning configuration, then score every subject
        // from the selected items alone.
        let train = bench.subset_subjects_by_id(&split.train_ids)?;
        let model = fit_em(&train, winner.model_kind, &grid, &EmConfig::default())?;
        let sub_all = bench.subset_items_by_id(&subset.item_ids)?;
        let restricted = restrict_model(&model, &subset.item_ids)?;
        let abilities = estimate_abilities(&sub_all, &restricted, winner.estimator)?;
        let subscore: Scores = sub_all.percent_scores();
        let sub_train = sub_all.subset_subjects_by_id(&split.train_ids)?;
        let wa = fit_weighted_average(&sub_train, &scores[b].subset(&split.train_ids)?)?;
        let wa_pred = Scores::new(shared.clone(), wa.predict(&sub_all)?)?;
        let x = assemble_marginal(&abilities, &subscore)?;
        let marginal = fit_and_eval(&x, &marginal_predictor_names(), &scores[b], &split)?;

        outs.push(BenchOut {
            subset,
            winner,
            sweep,
            subscore_val_rmse,
            subscore_test_rmse,
            pct_better_than_random,
            abilities,
            subscore,
            wa_pred,
            marginal,
        });
    }

    // ---- joint and grand-mean reconstructions, factor analysis ----
    let mut joints: Vec<Option<FitEval>> = (0..b_count).map(|_| None).collect();
    let mut grand_fit: Option<FitEval> = None;
    let mut fa_summary: Option<Value> = None;
    if b_count >= 2 {
        let all_thetas: Vec<Abilities> = outs.iter().map(|o| o.abilities.clone()).collect();
        let all_subscores: Vec<Scores> = outs.iter().map(|o| o.subscore.clone()).collect();
        let all_wa: Vec<Scores> = outs.iter().map(|o| o.wa_pred.clone()).collect();
        for b in 0..b_count {
            let x = assemble_joint(
                &all_thetas,
                Some((&all_subscores[b], &all_wa[b])),
                &all_subscores,
                &all_wa,
            )?;
            let predictor_names = joint_predictor_names(&names, Some(&names[b]));
            joints[b] = Some(fit_and_eval(&x, &predictor_names, &scores[b], &split)?);
        }
        let xg = assemble_joint(&all_thetas, None, &all_subscores, &all_wa)?;
        grand_fit = Some(fit_and_eval(
            &xg,
            &joint_predictor_names(&names, None),
            &grand,
            &split,
        )?);

        let rows: Vec<Vec<f64>> = (0..shared.len())
            .map(|j| outs.iter().map(|o| o.abilities.values[j]).collect())
            .collect();
        let (corr, means, sds) = correlation_matrix(&rows, &names)?;
        let fit = fit_minres(&corr, 1)?;
        let proportions = explained_variance(&fit, b_count as f64)?;
        let ridge = 0.05;
        let mut csv = io::CsvWriter::new("subject_id,f1");
        for (j, id) in shared.iter().enumerate() {
            let z: Vec<f64> = (0..b_count)
                .map(|b| (rows[j][b] - means[b]) / sds[b])
                .collect();
            let factor = factor_scores(&fit, &z, ridge)?;
            csv.row(&[id.clone(), io::fmt_f64(factor[0])]);
        }
        csv.write(&args.output.join("factor_scores.csv"))?;
        fa_summary = Some(json!({
            "loadings": (0..b_count).map(|v| fit.loadings.row(v)[0]).collect::<Vec<f64>>(),
            "uniquenesses": fit.uniquenesses,
            "proportion": proportions[0],
            "heywood": fit.heywood,
            "ridge": ridge,
        }));
    }

    // ---- artifacts ----
    let config = json!({
        "inputs": args.input.iter().map(|p| p.display().to_string()).collect::<Vec<_>>(),
        "k": args.k,
        "lambda": args.lambda,
        "budget": args.budget,
        "reps": args.reps,
        "test_frac": args.split.test_frac,
        "val_frac": args.split.val_frac,
        "bins": args.split.bins,
        "preprocess": {
            "low_score_quantile": pre_cfg.low_score_quantile,
            "min_item_sd": pre_cfg.min_item_sd,
            "max_item_mean": pre_cfg.max_item_mean,
            "pbis_zero_band": pre_cfg.pbis_zero_band,
        },
        "exclude_items": args.exclude_items.as_ref().map(|p| p.display().to_string()),
    });

    persist::save_model(
        &args.output.join("split.json"),
        &split,
        Some(args.seed),
        &json!({ "derived_seed": split_seed, "pipeline": config }),
    )?;

    let labels = split_labels(&split);
    for (b, out) in outs.iter().enumerate() {
        persist::save_model(
            &args.output.join(format!("preprocess_{}.json", names[b])),
            &reports[b],
            Some(args.seed),
            &config,
        )?;

        let mut sweep_csv = io::CsvWriter::new("rep,val_rmse,test_rmse");
        for r in &out.sweep {
            sweep_csv.row(&[
                r.rep.to_string(),
                io::fmt_f64(r.val_rmse),
                io::fmt_f64(r.test_rmse),
            ]);
        }
        sweep_csv.write(&args.output.join(format!("sweep_{}.csv", names[b])))?;

        let header = if joints[b].is_some() {
            "subject_id,split,truth,marginal,marginal_lower,marginal_upper,joint,joint_lower,joint_upper"
        } else {
            "subject_id,split,truth,marginal,marginal_lower,marginal_upper"
        };
        let mut pred_csv = io::CsvWriter::new(header);
        let fits: Vec<&FitEval> = match &joints[b] {
            Some(joint) => vec![&out.marginal, joint],
            None => vec![&out.marginal],
        };
        prediction_rows(&mut pred_csv, &shared, &labels, &scores[b], &fits)?;
        pred_csv.write(&args.output.join(format!("predictions_{}.csv", names[b])))?;
    }
    if let Some(g) = &grand_fit {
        let mut pred_csv = io::CsvWriter::new("subject_id,split,truth,point,lower,upper");
        prediction_rows(&mut pred_csv, &shared, &labels, &grand, &[g])?;
        pred_csv.write(&args.output.join("predictions_grand_mean.csv"))?;
    }

    let selection = json!({
        "format_version": FORMAT_VERSION,
        "seed": args.seed,
        "config": config,
        "benchmarks": (0..b_count).map(|b| json!({
            "name": names[b],
            "k": outs[b].subset.k,
            "item_ids": outs[b].subset.item_ids,
            "provenance": outs[b].subset.provenance,
            "winner": outs[b].winner,
            "val_rmse": outs[b].subset.val_rmse,
            "test_rmse": outs[b].subset.test_rmse,
        })).collect::<Vec<_>>(),
    });
    io::write_json(&args.output.join("selection.json"), &selection)?;

    let mut tune_map = Map::new();
    let mut sweep_map = Map::new();
    for b in 0..b_count {
        tune_map.insert(names[b].clone(), json!(tune_seeds[b]));
        sweep_map.insert(names[b].clone(), json!(sweep_seeds[b]));
    }
    let summary = json!({
        "format_version": FORMAT_VERSION,
        "seed": args.seed,
        "derived_seeds": { "split": split_seed, "tune": tune_map, "sweep": sweep_map },
        "config": config,
        "subjects": {
            "shared": shared.len(),
            "train": split.train_ids.len(),
            "validation": split.validation_ids.len(),
            "test": split.test_ids.len(),
        },
        "benchmarks": (0..b_count).map(|b| json!({
            "name": names[b],
            "items_excluded": excluded_counts[b],
            "items_after_preprocess": benches[b].n_items(),
            "k": outs[b].subset.k,
            "winner": outs[b].winner,
            "subscore_route": {
                "val_rmse": outs[b].subscore_val_rmse,
                "test_rmse": outs[b].subscore_test_rmse,
            },
            "pct_better_than_random": outs[b].pct_better_than_random,
            "metrics": {
                "marginal": {
                    "validation": metrics_json(&outs[b].marginal.val),
                    "test": metrics_json(&outs[b].marginal.test),
                },
                "joint": joints[b].as_ref().map(|j| json!({
                    "validation": metrics_json(&j.val),
                    "test": metrics_json(&j.test),
                })),
            },
        })).collect::<Vec<_>>(),
        "grand_mean": grand_fit.as_ref().map(|g| json!({
            "metrics": {
                "validation": metrics_json(&g.val),
                "test": metrics_json(&g.test),
            },
        })),
        "factor_analysis": fa_summary,
    });
    io::write_json(&args.output.join("summary.json"), &summary)?;

    // ---- console report ----
    for (b, out) in outs.iter().enumerate() {
        let joint_txt = joints[b]
            .as_ref()
            .map_or("n/a".to_string(), |j| format!("{:.3}", j.test.rmse));
        println!(
            "{}: {} items; test RMSE marginal {:.3}, joint {}; beats {:.0}% of {} random subsets",
            names[b],
            out.subset.k,
            out.marginal.test.rmse,
            joint_txt,
            out.pct_better_than_random,
            out.sweep.len(),
        );
    }
    if let Some(g) = &grand_fit {
        println!("grand mean: test RMSE {:.3}", g.test.rmse);
    }
    if let Some(fa) = &fa_summary {
        if let Some(p) = fa.get("proportion").and_then(Value::as_f64) {
            println!("one factor explains {:.1}% of the ability variance", 100.0 * p);
        }
    }
    println!("artifacts written to {}", args.output.display());
    Ok(())
}
