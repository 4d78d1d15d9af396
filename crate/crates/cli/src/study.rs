//! Multi-run studies: data scaling over nested training fractions, and
//! scratch against finetuned-from-pretrained training.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use icfinv_core::data::Dataset;
use icfinv_core::training::{EpochMetrics, Init};
use rayon::prelude::*;

use crate::commands::{load_data, train_run, write, RunSummary};
use crate::config::RunConfig;
use crate::error::{CliError, CliResult};
use crate::svg::{self, Panel, Series};
use crate::{CompareArgs, ScaleArgs, StudyArgs};

pub const SCALE_SUMMARY: &str = "scale_summary.csv";
pub const SCALE_MEDIANS: &str = "scale_medians.csv";
pub const SCALE_CURVES: &str = "scale_curves.csv";
pub const SCALE_SVG: &str = "loss_curves.svg";
pub const COMPARE_CSV: &str = "compare.csv";
pub const COMPARE_MEDIANS: &str = "compare_medians.csv";
pub const COMPARE_SVG: &str = "compare.svg";

/// Median; the mean of the two middle values for even counts.
pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    match n {
        0 => f64::NAN,
        _ if n % 2 == 1 => v[n / 2],
        _ => 0.5 * (v[n / 2 - 1] + v[n / 2]),
    }
}

impl StudyArgs {
    fn apply(&self, cfg: &mut RunConfig) -> CliResult<()> {
        if let Some(f) = &self.fractions {
            cfg.study.fractions = f.clone();
        }
        if let Some(s) = self.seeds {
            cfg.study.seeds = s;
        }
        if self.jobs == 0 {
            return Err(CliError::Usage("--jobs must be at least 1".into()));
        }
        Ok(())
    }
}

fn run_dir(root: &Path, fraction: f64, seed: u64) -> PathBuf {
    root.join(format!("f{fraction:.2}_s{seed}"))
}

fn percent(f: f64) -> String {
    format!("{:.0}%", 100.0 * f)
}

/// `(fraction, seed)` for every run, fractions outermost.
fn grid(cfg: &RunConfig) -> Vec<(f64, u64)> {
    cfg.study
        .fractions
        .iter()
        .flat_map(|&f| (0..cfg.study.seeds as u64).map(move |s| (f, cfg.train.seed + s)))
        .collect()
}

fn run_config(cfg: &RunConfig, fraction: f64, seed: u64, init: Init) -> RunConfig {
    let mut c = cfg.clone();
    c.split.fraction = Some(fraction);
    c.train.seed = seed;
    c.train.init = init;
    c
}

/// Train every configuration on a pool of `jobs` threads. Each run is
/// single-threaded and seeded, so the results do not depend on `jobs`.
fn run_all(
    data: &Dataset,
    runs: &[(RunConfig, PathBuf)],
    jobs: usize,
) -> CliResult<Vec<RunSummary>> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| CliError::Usage(format!("cannot start {jobs} worker threads: {e}")))?;
    pool.install(|| {
        runs.par_iter()
            .map(|(cfg, dir)| {
                let run = train_run(data, cfg, dir)?;
                eprintln!(
                    "{}: n_train {} tsh_test_mse {:.4e} recon_test_mse {:.4e}",
                    dir.display(),
                    run.n_train,
                    run.metrics.reg_mse,
                    run.metrics.recon_mse
                );
                Ok(run)
            })
            .collect()
    })
}

fn by_fraction<'a>(runs: &'a [RunSummary], fractions: &[f64]) -> Vec<(f64, Vec<&'a RunSummary>)> {
    fractions
        .iter()
        .map(|&f| (f, runs.iter().filter(|r| r.fraction == f).collect()))
        .collect()
}

/// Per-epoch medians across seeds of one fraction.
fn median_curve(runs: &[&RunSummary]) -> Vec<EpochMetrics> {
    let epochs = runs.iter().map(|r| r.log.rows.len()).min().unwrap_or(0);
    (0..epochs)
        .map(|e| {
            let col = |f: fn(&EpochMetrics) -> f64| {
                median(&runs.iter().map(|r| f(&r.log.rows[e])).collect::<Vec<_>>())
            };
            EpochMetrics {
                epoch: e,
                lr_backbone: col(|m| m.lr_backbone),
                lr_tsh: col(|m| m.lr_tsh),
                backbone_train_mse: col(|m| m.backbone_train_mse),
                backbone_val_mse: col(|m| m.backbone_val_mse),
                tsh_train_mse: col(|m| m.tsh_train_mse),
                tsh_val_mse: col(|m| m.tsh_val_mse),
            }
        })
        .collect()
}

fn scale_svg(curves: &[(f64, Vec<EpochMetrics>)]) -> String {
    let columns: [(&str, fn(&EpochMetrics) -> f64); 4] = [
        ("Backbone train", |m| m.backbone_train_mse),
        ("Backbone val", |m| m.backbone_val_mse),
        ("TSH train", |m| m.tsh_train_mse),
        ("TSH val", |m| m.tsh_val_mse),
    ];
    let panels: Vec<Panel> = columns
        .iter()
        .map(|(title, f)| Panel {
            title: (*title).into(),
            x_label: "epoch".into(),
            y_label: "MSE (median over seeds)".into(),
            log_x: true,
            log_y: true,
            series: curves
                .iter()
                .map(|(frac, rows)| Series {
                    label: percent(*frac),
                    points: rows.iter().map(|m| ((m.epoch + 1) as f64, f(m))).collect(),
                })
                .collect(),
        })
        .collect();
    svg::line_chart("Loss curves by training fraction", &panels, 2)
}

pub fn scale(args: &ScaleArgs) -> CliResult<()> {
    let mut cfg = RunConfig::load(args.config.as_deref())?;
    args.overrides.apply(&mut cfg);
    args.study.apply(&mut cfg)?;
    cfg.train.init = Init::Scratch;
    cfg.validate()?;
    let data = load_data(&args.data)?;
    cfg.write_effective(&args.out)?;
    let runs: Vec<(RunConfig, PathBuf)> = grid(&cfg)
        .into_iter()
        .map(|(f, s)| {
            (
                run_config(&cfg, f, s, Init::Scratch),
                run_dir(&args.out.join("runs"), f, s),
            )
        })
        .collect();
    let results = run_all(&data, &runs, args.study.jobs)?;

    let targets = results[0].metrics.targets.clone();
    let mut summary = String::from("fraction,seed,n_train,tsh_test_mse,recon_test_mse");
    for t in &targets {
        write!(summary, ",r2_param{t}").unwrap();
    }
    summary.push('\n');
    for r in &results {
        write!(
            summary,
            "{},{},{},{:e},{:e}",
            r.fraction, r.seed, r.n_train, r.metrics.reg_mse, r.metrics.recon_mse
        )
        .unwrap();
        for v in &r.metrics.r2 {
            write!(summary, ",{v:e}").unwrap();
        }
        summary.push('\n');
    }
    write(&args.out.join(SCALE_SUMMARY), &summary)?;

    let groups = by_fraction(&results, &cfg.study.fractions);
    let mut medians = String::from("fraction,median_tsh_test_mse,median_recon_test_mse\n");
    let mut curves_csv = String::from(
        "fraction,epoch,backbone_train_mse,backbone_val_mse,tsh_train_mse,tsh_val_mse\n",
    );
    let mut curves = Vec::new();
    for (f, runs) in &groups {
        let tsh: Vec<f64> = runs.iter().map(|r| r.metrics.reg_mse).collect();
        let rec: Vec<f64> = runs.iter().map(|r| r.metrics.recon_mse).collect();
        writeln!(medians, "{f},{:e},{:e}", median(&tsh), median(&rec)).unwrap();
        println!("{}: median TSH test MSE {:.4e}", percent(*f), median(&tsh));
        let curve = median_curve(runs);
        for m in &curve {
            writeln!(
                curves_csv,
                "{f},{},{:e},{:e},{:e},{:e}",
                m.epoch, m.backbone_train_mse, m.backbone_val_mse, m.tsh_train_mse, m.tsh_val_mse
            )
            .unwrap();
        }
        curves.push((*f, curve));
    }
    write(&args.out.join(SCALE_MEDIANS), &medians)?;
    write(&args.out.join(SCALE_CURVES), &curves_csv)?;
    write(&args.out.join(SCALE_SVG), &scale_svg(&curves))?;
    Ok(())
}

pub fn compare(args: &CompareArgs) -> CliResult<()> {
    let mut cfg = RunConfig::load(args.config.as_deref())?;
    args.overrides.apply(&mut cfg);
    args.study.apply(&mut cfg)?;
    cfg.validate()?;
    if !args.pretrain_ckpt.is_file() {
        return Err(CliError::Usage(format!(
            "pretrain checkpoint {} not found",
            args.pretrain_ckpt.display()
        )));
    }
    let ckpt =
        fs::canonicalize(&args.pretrain_ckpt).map_err(|e| CliError::io(&args.pretrain_ckpt, e))?;
    let data = load_data(&args.data)?;
    cfg.train.init = Init::Scratch;
    cfg.write_effective(&args.out)?;
    let mut runs = Vec::new();
    for (f, s) in grid(&cfg) {
        runs.push((
            run_config(&cfg, f, s, Init::Scratch),
            run_dir(&args.out.join("scratch"), f, s),
        ));
        runs.push((
            run_config(&cfg, f, s, Init::Checkpoint(ckpt.clone())),
            run_dir(&args.out.join("finetune"), f, s),
        ));
    }
    let results = run_all(&data, &runs, args.study.jobs)?;

    let mut table =
        String::from("fraction,seed,scratch_tsh_test_mse,finetune_tsh_test_mse,advantage\n");
    let mut medians = String::from("fraction,median_scratch,median_finetune,median_advantage\n");
    let (mut scratch_pts, mut fine_pts) = (Vec::new(), Vec::new());
    for &f in &cfg.study.fractions {
        let (mut sc, mut fi, mut adv) = (Vec::new(), Vec::new(), Vec::new());
        for pair in results.chunks(2).filter(|p| p[0].fraction == f) {
            let (a, b) = (&pair[0], &pair[1]);
            let gain = a.metrics.reg_mse - b.metrics.reg_mse;
            writeln!(
                table,
                "{f},{},{:e},{:e},{gain:e}",
                a.seed, a.metrics.reg_mse, b.metrics.reg_mse
            )
            .unwrap();
            sc.push(a.metrics.reg_mse);
            fi.push(b.metrics.reg_mse);
            adv.push(gain);
        }
        let (ms, mf, ma) = (median(&sc), median(&fi), median(&adv));
        writeln!(medians, "{f},{ms:e},{mf:e},{ma:e}").unwrap();
        println!(
            "{}: median scratch {ms:.4e}, finetune {mf:.4e}, advantage {ma:.4e}",
            percent(f)
        );
        scratch_pts.push((f, ms));
        fine_pts.push((f, mf));
    }
    write(&args.out.join(COMPARE_CSV), &table)?;
    write(&args.out.join(COMPARE_MEDIANS), &medians)?;
    let panel = Panel {
        title: "Test regression MSE (median over seeds)".into(),
        x_label: "training fraction".into(),
        y_label: "MSE (standardized)".into(),
        log_x: true,
        log_y: true,
        series: vec![
            Series {
                label: "scratch".into(),
                points: scratch_pts,
            },
            Series {
                label: "finetune".into(),
                points: fine_pts,
            },
        ],
    };
    write(
        &args.out.join(COMPARE_SVG),
        &svg::line_chart("Scratch vs finetune", &[panel], 1),
    )?;
    Ok(())
}
