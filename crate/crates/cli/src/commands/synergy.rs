use serde_json::json;
use sparsebench::persist::FORMAT_VERSION;
use sparsebench::synth::synergy_grid;
use sparsebench::{Error, Result};

use crate::{io, SynergyArgs};

pub fn run(args: &SynergyArgs) -> Result<()> {
    if args.reps == 0 {
        return Err(Error::InvalidInput("--reps must be at least 1".into()));
    }
    let seeds: Vec<u64> = (0..args.reps as u64)
        .map(|r| args.seed.wrapping_add(r))
        .collect();
    let cells = synergy_grid(&args.rhos, &args.alphas, &seeds, args.subjects, args.items)?;

    io::ensure_dir(&args.output)?;
    let mut csv = io::CsvWriter::new("rho,alpha,seed,single_rmse,joint_rmse,boost");
    for cell in &cells {
        csv.row(&[
            io::fmt_f64(cell.rho),
            io::fmt_f64(cell.alpha),
            cell.seed.to_string(),
            io::fmt_f64(cell.outcome.single_rmse),
            io::fmt_f64(cell.outcome.joint_rmse),
            io::fmt_f64(cell.outcome.boost),
        ]);
    }
    csv.write(&args.output.join("synergy.csv"))?;

    let mut cell_means = Vec::new();
    println!("mean boost over {} seeds (percent points):", args.reps);
    for &rho in &args.rhos {
        for &alpha in &args.alphas {
            let outcomes: Vec<_> = cells
                .iter()
                .filter(|c| c.rho == rho && c.alpha == alpha)
                .collect();
            let n = outcomes.len() as f64;
            let mean_boost = outcomes.iter().map(|c| c.outcome.boost).sum::<f64>() / n;
            let mean_single = outcomes.iter().map(|c| c.outcome.single_rmse).sum::<f64>() / n;
            let mean_joint = outcomes.iter().map(|c| c.outcome.joint_rmse).sum::<f64>() / n;
            cell_means.push(json!({
                "rho": rho,
                "alpha": alpha,
                "mean_single_rmse": mean_single,
                "mean_joint_rmse": mean_joint,
                "mean_boost": mean_boost,
            }));
            println!("  rho {rho:4}, alpha {alpha:4}: {mean_boost:+.3}");
        }
    }
    io::write_json(
        &args.output.join("synergy_summary.json"),
        &json!({
            "format_version": FORMAT_VERSION,
            "seed": args.seed,
            "config": {
                "reps": args.reps,
                "seeds": seeds,
                "rhos": args.rhos,
                "alphas": args.alphas,
                "subjects": args.subjects,
                "items": args.items,
            },
            "cells": cell_means,
        }),
    )?;
    Ok(())
}
