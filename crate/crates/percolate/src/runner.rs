//! Experiment execution: turn a resolved [`RunConfig`] into output files.
//!
//! Every run writes a `manifest.txt` (the resolved configuration, the
//! library version, and the wall time) next to the experiment's data
//! files. Data files are byte-identical across reruns of the same
//! config; the manifest's wall-time line is the one deliberate
//! exception.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;

use crate::clusters::{
    build_intersection_graph, label_clusters, labeling_csv, spanning_clusters,
};
use crate::config::{Payload, RunConfig};
use crate::error::Result;
use crate::estimators::{
    self, a_set_membership, bb_sweep, crossing_sweep, lambda_bb_estimate, lambda_c_estimate,
    report_csv, space_label, spanning_multiplicity_histogram, stability_sweep, Estimate,
    ReportRow, SweepTable, ThresholdOutcome,
};
use crate::pointprocess::{
    derive_seed, fmt_f64, restrict, sample_configuration, write_configuration,
};

/// Files written by a run plus a short human summary for the terminal.
#[derive(Debug)]
pub struct RunOutput {
    pub files: Vec<PathBuf>,
    pub summary: String,
}

pub fn execute(config: &RunConfig) -> Result<RunOutput> {
    let started = Instant::now();
    std::fs::create_dir_all(&config.output_dir)?;
    let mut files = Vec::new();
    let summary = dispatch(config, &mut files)?;

    let manifest_path = config.output_dir.join("manifest.txt");
    let mut manifest = config.resolved_text();
    let _ = writeln!(manifest, "library_version = {}", env!("CARGO_PKG_VERSION"));
    let _ = writeln!(
        manifest,
        "wall_time_seconds = {:.3}",
        started.elapsed().as_secs_f64()
    );
    std::fs::write(&manifest_path, manifest)?;
    files.push(manifest_path);

    Ok(RunOutput { files, summary })
}

fn write_file(dir: &Path, name: &str, contents: &str, files: &mut Vec<PathBuf>) -> Result<()> {
    let path = dir.join(name);
    std::fs::write(&path, contents)?;
    files.push(path);
    Ok(())
}

fn meta_text(pairs: &[(&str, String)]) -> String {
    let mut out = String::new();
    for (k, v) in pairs {
        let _ = writeln!(out, "{k} = {v}");
    }
    out
}

fn dispatch(config: &RunConfig, files: &mut Vec<PathBuf>) -> Result<String> {
    let dir = &config.output_dir;
    let space = &config.space;
    let name = config.experiment.name();
    let label = space_label(space);

    match &config.payload {
        Payload::Sample => {
            let sampled =
                sample_configuration(space, &config.window, config.lambda_max, config.seed)?;
            write_configuration(
                &sampled,
                &dir.join("configuration.csv"),
                &dir.join("configuration.meta"),
            )?;
            files.push(dir.join("configuration.csv"));
            files.push(dir.join("configuration.meta"));
            Ok(format!(
                "sampled {} points at lambda_max = {}",
                sampled.points.len(),
                config.lambda_max
            ))
        }

        Payload::Clusters { lambda, bands } => {
            let sampled =
                sample_configuration(space, &config.window, config.lambda_max, config.seed)?;
            write_configuration(
                &sampled,
                &dir.join("configuration.csv"),
                &dir.join("configuration.meta"),
            )?;
            files.push(dir.join("configuration.csv"));
            files.push(dir.join("configuration.meta"));

            let active = restrict(&sampled, *lambda)?;
            let graph = build_intersection_graph(space, &sampled, &active);
            let labeling = label_clusters(space, &sampled, &graph);
            write_file(dir, "clusters.csv", &labeling_csv(&labeling), files)?;

            let mut meta = vec![
                ("lambda", fmt_f64(*lambda)),
                ("active_points", active.ids.len().to_string()),
                ("cluster_count", labeling.clusters.len().to_string()),
            ];
            let spanning_note = if let Some(b) = bands {
                let n = spanning_clusters(space, &labeling, *b).len();
                meta.push(("spanning_count", n.to_string()));
                format!(", {n} spanning")
            } else {
                String::new()
            };
            write_file(dir, "clusters.meta", &meta_text(&meta), files)?;
            Ok(format!(
                "labeled {} clusters over {} active points{spanning_note}",
                labeling.clusters.len(),
                active.ids.len()
            ))
        }

        Payload::CrossingSweep { bands, .. } => {
            let plan = config.sweep_plan()?;
            let table = crossing_sweep(&plan, *bands)?;
            let rows = table_rows(
                name,
                &label,
                &table,
                fmt_f64(bands.r_inner),
                fmt_f64(bands.r_outer),
                config.seed,
            );
            write_file(dir, "report.csv", &report_csv(&rows), files)?;
            Ok(format!("{} grid cells written", table.cells.len()))
        }

        Payload::LambdaC {
            bands, threshold, ..
        } => {
            let plan = config.sweep_plan()?;
            let est = lambda_c_estimate(&plan, *bands, *threshold)?;
            let rows = table_rows(
                name,
                &label,
                &est.table,
                fmt_f64(bands.r_inner),
                fmt_f64(bands.r_outer),
                config.seed,
            );
            write_file(dir, "report.csv", &report_csv(&rows), files)?;
            write_file(
                dir,
                "estimate.meta",
                &meta_text(&[
                    ("threshold", fmt_f64(est.threshold)),
                    ("lambda_lo", fmt_f64(est.lo)),
                    ("lambda_hi", fmt_f64(est.hi)),
                    ("p_lo", fmt_f64(est.p_lo)),
                    ("p_hi", fmt_f64(est.p_hi)),
                ]),
                files,
            )?;
            Ok(format!(
                "threshold {} bracketed by [{:.6}, {:.6}]",
                est.threshold, est.lo, est.hi
            ))
        }

        Payload::BbSweep {
            region_radius,
            separations,
            ..
        } => {
            let plan = config.sweep_plan()?;
            let sweep = bb_sweep(&plan, *region_radius, separations)?;
            let rows = bb_rows(name, &label, &sweep, config.seed);
            write_file(dir, "report.csv", &report_csv(&rows), files)?;
            Ok(format!(
                "{} separations x {} grid cells written",
                separations.len(),
                plan.lambda_grid.len()
            ))
        }

        Payload::LambdaBb {
            region_radius,
            separations,
            target,
            ..
        } => {
            let plan = config.sweep_plan()?;
            let est = lambda_bb_estimate(&plan, *region_radius, separations, *target)?;
            let rows = bb_rows(name, &label, &est.sweep, config.seed);
            write_file(dir, "report.csv", &report_csv(&rows), files)?;
            let (meta, summary) = match est.outcome {
                ThresholdOutcome::Reached { lambda, bracket_lo } => (
                    meta_text(&[
                        ("target", fmt_f64(est.target)),
                        ("outcome", "reached".into()),
                        ("lambda", fmt_f64(lambda)),
                        ("bracket_lo", fmt_f64(bracket_lo)),
                    ]),
                    format!("target {} first reached at lambda = {lambda}", est.target),
                ),
                ThresholdOutcome::NotReached {
                    best_lambda,
                    best_value,
                } => (
                    meta_text(&[
                        ("target", fmt_f64(est.target)),
                        ("outcome", "not-reached".into()),
                        ("best_lambda", fmt_f64(best_lambda)),
                        ("best_value", fmt_f64(best_value)),
                    ]),
                    format!(
                        "target {} not reached; best {best_value:.4} at lambda = {best_lambda}",
                        est.target
                    ),
                ),
            };
            write_file(dir, "estimate.meta", &meta, files)?;
            Ok(summary)
        }

        Payload::Stability {
            lambda1,
            lambda2,
            bands,
            trials,
        } => {
            let pooled = stability_sweep(
                space,
                &config.window,
                config.lambda_max,
                *lambda1,
                *lambda2,
                *bands,
                *trials,
                config.seed,
            )?;
            let mut rows = Vec::new();
            if pooled.fraction.is_some() {
                let est = Estimate {
                    successes: pooled.n_stable,
                    trials: pooled.n_spanning2,
                };
                rows.push(ReportRow {
                    experiment: name.into(),
                    space: label.clone(),
                    lambda: *lambda2,
                    param1: fmt_f64(*lambda1),
                    param2: fmt_f64(bands.r_outer),
                    estimate: est.value(),
                    half_width: est.half_width(),
                    trials: pooled.n_spanning2,
                    seed: config.seed,
                });
            }
            write_file(dir, "report.csv", &report_csv(&rows), files)?;
            write_file(
                dir,
                "estimate.meta",
                &meta_text(&[
                    ("configs", pooled.trials.to_string()),
                    ("n_spanning2", pooled.n_spanning2.to_string()),
                    ("n_stable", pooled.n_stable.to_string()),
                    (
                        "fraction",
                        pooled
                            .fraction
                            .map(fmt_f64)
                            .unwrap_or_else(|| "undefined".into()),
                    ),
                ]),
                files,
            )?;
            Ok(match pooled.fraction {
                Some(f) => format!(
                    "{} of {} spanning clusters stable (fraction {f:.4})",
                    pooled.n_stable, pooled.n_spanning2
                ),
                None => "no spanning cluster at the higher intensity in any trial".into(),
            })
        }

        Payload::ASets {
            lambda,
            lambda_star,
            r,
            n,
            z_axis,
            bands,
            trials,
        } => {
            let z = space.axis_point(*z_axis);
            let memberships: Vec<estimators::ASetMembership> = (0..*trials)
                .into_par_iter()
                .map(|t| -> Result<estimators::ASetMembership> {
                    let seed = derive_seed(config.seed, estimators::experiment::A_SETS, t as u64);
                    let sampled =
                        sample_configuration(space, &config.window, config.lambda_max, seed)?;
                    a_set_membership(
                        space,
                        &sampled,
                        *bands,
                        &z,
                        *r,
                        *n,
                        *lambda,
                        *lambda_star,
                    )
                })
                .collect::<Result<_>>()?;
            let param2 = format!("r={};n={}", r, n);
            let count = |f: fn(&estimators::ASetMembership) -> bool| {
                memberships.iter().filter(|m| f(m)).count()
            };
            let sets = [
                ("A1", count(|m| m.in_a1)),
                ("A2", count(|m| m.in_a2)),
                ("A3", count(|m| m.in_a3)),
            ];
            let rows: Vec<ReportRow> = sets
                .iter()
                .map(|(set, successes)| {
                    let est = Estimate {
                        successes: *successes,
                        trials: *trials,
                    };
                    ReportRow {
                        experiment: name.into(),
                        space: label.clone(),
                        lambda: *lambda,
                        param1: (*set).into(),
                        param2: param2.clone(),
                        estimate: est.value(),
                        half_width: est.half_width(),
                        trials: *trials,
                        seed: config.seed,
                    }
                })
                .collect();
            write_file(dir, "report.csv", &report_csv(&rows), files)?;
            Ok(format!(
                "membership frequencies A1 = {:.3}, A2 = {:.3}, A3 = {:.3} over {} configs",
                sets[0].1 as f64 / *trials as f64,
                sets[1].1 as f64 / *trials as f64,
                sets[2].1 as f64 / *trials as f64,
                trials
            ))
        }

        Payload::Multiplicity { bands, .. } => {
            let plan = config.sweep_plan()?;
            let hist = spanning_multiplicity_histogram(&plan, *bands)?;
            let mut rows = Vec::new();
            for cell in &hist.cells {
                for (&multiplicity, &count) in &cell.counts {
                    let est = Estimate {
                        successes: count,
                        trials: hist.trials,
                    };
                    rows.push(ReportRow {
                        experiment: name.into(),
                        space: label.clone(),
                        lambda: cell.lambda,
                        param1: multiplicity.to_string(),
                        param2: fmt_f64(bands.r_outer),
                        estimate: est.value(),
                        half_width: est.half_width(),
                        trials: hist.trials,
                        seed: config.seed,
                    });
                }
            }
            write_file(dir, "report.csv", &report_csv(&rows), files)?;
            Ok(format!(
                "multiplicity histogram over {} intensities written",
                hist.cells.len()
            ))
        }
    }
}

fn table_rows(
    experiment: &str,
    space: &str,
    table: &SweepTable,
    param1: String,
    param2: String,
    seed: u64,
) -> Vec<ReportRow> {
    table
        .cells
        .iter()
        .map(|c| ReportRow {
            experiment: experiment.into(),
            space: space.into(),
            lambda: c.lambda,
            param1: param1.clone(),
            param2: param2.clone(),
            estimate: c.estimate.value(),
            half_width: c.estimate.half_width(),
            trials: c.estimate.trials,
            seed,
        })
        .collect()
}

fn bb_rows(
    experiment: &str,
    space: &str,
    sweep: &estimators::BbSweep,
    seed: u64,
) -> Vec<ReportRow> {
    let mut rows = Vec::new();
    for (sep, table) in sweep.separations.iter().zip(&sweep.tables) {
        rows.extend(table_rows(
            experiment,
            space,
            table,
            fmt_f64(sweep.region_radius),
            fmt_f64(*sep),
            seed,
        ));
    }
    rows
}

/// `validate` output: "OK" plus the resolved configuration echo.
pub fn validate_text(config: &RunConfig) -> String {
    let mut out = String::from("OK\n");
    out.push_str(&config.resolved_text());
    out
}
