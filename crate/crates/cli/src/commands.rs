use std::fs;
use std::path::{Path, PathBuf};

use icfinv_core::data::{split, subsample, Dataset, SplitSpec, Splits};
use icfinv_core::sensitivity::{build_report, SensitivityReport};
use icfinv_core::training::{
    initialize_model, metrics_from_predictions, predict, pretrain_backbone, train_joint, Init,
    MetricsLog, Predictions, TestMetrics,
};

use crate::config::{RunConfig, EFFECTIVE_CONFIG};
use crate::error::{CliError, CliResult};
use crate::svg::{self, Panel, Series};
use crate::{
    GenerateArgs, InitArg, PretrainArgs, ReportArgs, SensitivityArgs, TrainArgs, TrainOverrides,
};

pub const METRICS_CSV: &str = "metrics.csv";
pub const TEST_METRICS_JSON: &str = "test_metrics.json";
pub const PREDICTIONS_CSV: &str = "pred_vs_true.csv";
pub const SENSITIVITY_CSV: &str = "sensitivity.csv";
pub const SENSITIVITY_SVG: &str = "sensitivity.svg";
pub const LAST_CHECKPOINT: &str = "last.json";
pub const BEST_CHECKPOINT: &str = "best.json";
pub const PRETRAIN_CHECKPOINT: &str = "pretrain.json";

pub(crate) fn write(path: &Path, contents: &str) -> CliResult<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    fs::write(path, contents).map_err(|e| CliError::io(path, e))
}

pub(crate) fn read(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

pub(crate) fn load_data(dir: &Path) -> CliResult<Dataset> {
    Ok(Dataset::load(dir)?)
}

impl TrainOverrides {
    pub(crate) fn apply(&self, cfg: &mut RunConfig) {
        let t = &mut cfg.train;
        if let Some(v) = self.epochs {
            t.epochs = v;
        }
        if let Some(v) = self.seed {
            t.seed = v;
        }
        if let Some(v) = self.warmup_epochs {
            t.warmup_epochs = v;
        }
        if let Some(v) = self.batch_size {
            t.batch_size = v;
        }
        if let Some(v) = self.lr_backbone {
            t.lr_backbone = v;
        }
        if let Some(v) = self.lr_tsh {
            t.lr_tsh = v;
        }
    }
}

/// Train/val/test partition from `spec` with the training subset drawn by
/// the training seed, so study seeds vary which samples a fraction keeps
/// while the test split stays fixed.
pub fn run_splits(n: usize, spec: &SplitSpec, train_seed: u64) -> CliResult<Splits> {
    let mut s = split(
        n,
        &SplitSpec {
            fraction: None,
            ..spec.clone()
        },
    )?;
    if let Some(f) = spec.fraction {
        s.train = subsample(&s.train, f, train_seed)?;
    }
    Ok(s)
}

/// Outcome of one training run.
#[derive(Clone, Debug)]
pub struct RunSummary {
    pub fraction: f64,
    pub seed: u64,
    pub n_train: usize,
    pub metrics: TestMetrics,
    pub log: MetricsLog,
}

/// Joint training and test evaluation of the final model under `cfg`,
/// writing the run's artifacts into `dir`.
pub fn train_run(data: &Dataset, cfg: &RunConfig, dir: &Path) -> CliResult<RunSummary> {
    cfg.validate()?;
    cfg.write_effective(dir)?;
    let s = run_splits(data.len(), &cfg.split, cfg.train.seed)?;
    let (train, val, test) = (
        data.subset(&s.train)?,
        data.subset(&s.val)?,
        data.subset(&s.test)?,
    );
    let model = initialize_model(&cfg.model, &cfg.train, &train)?;
    let out = train_joint(model, &train, &val, &cfg.train)?;
    out.last_checkpoint(&cfg.train)
        .save(&dir.join(LAST_CHECKPOINT))?;
    out.best_checkpoint(&cfg.train)
        .save(&dir.join(BEST_CHECKPOINT))?;
    write(&dir.join(METRICS_CSV), &out.log.to_csv())?;
    let (recon, pred) = predict(&out.model, &test)?;
    let metrics = metrics_from_predictions(recon, &pred, &out.model.normalizer)?;
    write(&dir.join(PREDICTIONS_CSV), &pred.to_csv())?;
    let json = serde_json::to_string_pretty(&metrics.to_map()).expect("metrics serialize");
    write(&dir.join(TEST_METRICS_JSON), &(json + "\n"))?;
    Ok(RunSummary {
        fraction: cfg.split.fraction.unwrap_or(1.0),
        seed: cfg.train.seed,
        n_train: train.len(),
        metrics,
        log: out.log,
    })
}

pub fn generate(args: &GenerateArgs) -> CliResult<()> {
    let mut cfg = RunConfig::load(args.config.as_deref())?;
    let g = &mut cfg.generate;
    if let Some(v) = args.n {
        g.n = v;
    }
    if let Some(v) = args.size {
        g.size = v;
    }
    if let Some(v) = args.seed {
        g.seed = v;
    }
    if let Some(v) = args.regime {
        g.regime = v.into();
    }
    let ds = Dataset::generate(g.n, g.size, g.seed, g.regime)?;
    ds.save(&args.out)?;
    cfg.write_effective(&args.out)?;
    println!(
        "wrote {} samples of {}x{}x4 to {}",
        ds.len(),
        ds.size(),
        ds.size(),
        args.out.display()
    );
    Ok(())
}

fn sensitivity_svg(
    feature_labels: &[String],
    target_labels: &[String],
    coefficients: &[Vec<f64>],
    k: usize,
) -> String {
    let by_target: Vec<Vec<f64>> = (0..target_labels.len())
        .map(|j| coefficients.iter().map(|row| row[j]).collect())
        .collect();
    svg::heatmap(
        "Ridge sensitivity: standardized coefficients",
        feature_labels,
        target_labels,
        &by_target,
        k.checked_sub(1),
    )
}

fn pc_count(labels: &[String]) -> usize {
    labels.iter().filter(|l| l.starts_with("PC")).count()
}

pub fn sensitivity(args: &SensitivityArgs) -> CliResult<()> {
    let mut cfg = RunConfig::load(args.config.as_deref())?;
    let s = &mut cfg.sensitivity;
    if let Some(v) = args.k {
        s.k = v;
    }
    if let Some(v) = args.lambda {
        s.lambda = v;
    }
    if let Some(v) = args.r2_threshold {
        s.r2_threshold = v;
    }
    if let Some(v) = args.seed {
        s.seed = v;
    }
    let ds = load_data(&args.data)?;
    let report: SensitivityReport = build_report(&ds, &cfg.sensitivity)?;
    cfg.write_effective(&args.out)?;
    write(&args.out.join(SENSITIVITY_CSV), &report.to_csv())?;
    write(
        &args.out.join(SENSITIVITY_SVG),
        &sensitivity_svg(
            &report.feature_labels,
            &report.target_labels,
            &report.coefficients,
            report.k,
        ),
    )?;
    for (label, r2) in report.target_labels.iter().zip(&report.held_out_r2) {
        println!("{label}: held-out R2 {r2:.4}");
    }
    println!("weakly identifiable: {:?}", report.flagged());
    Ok(())
}

fn checkpoint_init(
    init: Option<InitArg>,
    checkpoint: Option<&Path>,
    current: &Init,
) -> CliResult<Init> {
    match (init, checkpoint) {
        (Some(InitArg::Checkpoint), Some(p)) | (None, Some(p)) => {
            Ok(Init::Checkpoint(p.to_path_buf()))
        }
        (Some(InitArg::Checkpoint), None) => match current {
            Init::Checkpoint(p) => Ok(Init::Checkpoint(p.clone())),
            Init::Scratch => Err(CliError::Usage(
                "--init checkpoint needs --checkpoint <path>".into(),
            )),
        },
        (Some(InitArg::Scratch), Some(_)) => Err(CliError::Usage(
            "--checkpoint conflicts with --init scratch".into(),
        )),
        (Some(InitArg::Scratch), None) => Ok(Init::Scratch),
        (None, None) => Ok(current.clone()),
    }
}

pub fn train(args: &TrainArgs) -> CliResult<()> {
    let mut cfg = RunConfig::load(args.config.as_deref())?;
    args.overrides.apply(&mut cfg);
    cfg.train.init = checkpoint_init(args.init, args.checkpoint.as_deref(), &cfg.train.init)?;
    if let Some(f) = args.fraction {
        cfg.split.fraction = Some(f);
    }
    cfg.validate()?;
    let ds = load_data(&args.data)?;
    let run = train_run(&ds, &cfg, &args.out)?;
    println!(
        "trained on {} samples for {} epochs",
        run.n_train,
        run.log.rows.len()
    );
    for (k, v) in run.metrics.to_map() {
        println!("{k}: {v:.6e}");
    }
    Ok(())
}

pub fn pretrain(args: &PretrainArgs) -> CliResult<()> {
    let mut cfg = RunConfig::load(args.config.as_deref())?;
    args.overrides.apply(&mut cfg);
    cfg.train.init = Init::Scratch;
    cfg.validate()?;
    let ds = load_data(&args.data)?;
    cfg.write_effective(&args.out)?;
    let s = run_splits(ds.len(), &cfg.split, cfg.train.seed)?;
    let (train, val) = (ds.subset(&s.train)?, ds.subset(&s.val)?);
    let model = initialize_model(&cfg.model, &cfg.train, &train)?;
    let out = pretrain_backbone(model, &train, &val, &cfg.train)?;
    out.last_checkpoint(&cfg.train)
        .save(&args.out.join(PRETRAIN_CHECKPOINT))?;
    write(&args.out.join(METRICS_CSV), &out.log.to_csv())?;
    let last = out.log.rows.last().expect("at least two epochs");
    println!(
        "pretrained backbone on {} samples: val reconstruction MSE {:.6e}",
        train.len(),
        last.backbone_val_mse
    );
    Ok(())
}

/// Loss-curve panels from a metrics log, skipping columns that are all NaN.
fn run_panels(log: &MetricsLog) -> Vec<Panel> {
    let curve = |label: &str, f: &dyn Fn(&icfinv_core::training::EpochMetrics) -> f64| Series {
        label: label.into(),
        points: log
            .rows
            .iter()
            .map(|r| ((r.epoch + 1) as f64, f(r)))
            .filter(|p| p.1.is_finite())
            .collect(),
    };
    let mut panels = vec![Panel {
        title: "Backbone reconstruction MSE".into(),
        x_label: "epoch".into(),
        y_label: "MSE".into(),
        log_x: true,
        log_y: true,
        series: vec![
            curve("train", &|r| r.backbone_train_mse),
            curve("val", &|r| r.backbone_val_mse),
        ],
    }];
    let head = vec![
        curve("train", &|r| r.tsh_train_mse),
        curve("val", &|r| r.tsh_val_mse),
    ];
    if head.iter().any(|s| !s.points.is_empty()) {
        panels.push(Panel {
            title: "TSH regression MSE (standardized)".into(),
            x_label: "epoch".into(),
            y_label: "MSE".into(),
            log_x: true,
            log_y: true,
            series: head,
        });
    }
    panels
}

/// Render a run directory's stored CSVs into `out`. Only reads files.
pub fn report(args: &ReportArgs) -> CliResult<()> {
    let dir = &args.run_dir;
    let metrics_path = dir.join(METRICS_CSV);
    if !metrics_path.is_file() {
        return Err(CliError::Format(format!(
            "{} has no {METRICS_CSV}",
            dir.display()
        )));
    }
    let log = MetricsLog::from_csv(&read(&metrics_path)?)?;
    fs::create_dir_all(&args.out).map_err(|e| CliError::io(&args.out, e))?;
    let echo = dir.join(EFFECTIVE_CONFIG);
    let cfg = if echo.is_file() {
        RunConfig::load(Some(&echo))?
    } else {
        RunConfig::default()
    };
    cfg.write_effective(&args.out)?;
    let mut written = vec![PathBuf::from("loss_curves.svg")];
    write(
        &args.out.join("loss_curves.svg"),
        &svg::line_chart("Loss curves", &run_panels(&log), 2),
    )?;

    let pred_path = dir.join(PREDICTIONS_CSV);
    if pred_path.is_file() {
        let pred = Predictions::from_csv(&read(&pred_path)?)?;
        let m = pred.targets.len();
        for (j, t) in pred.targets.iter().enumerate() {
            let points: Vec<(f64, f64)> = (0..pred.len())
                .map(|i| (pred.truth[i * m + j], pred.predicted[i * m + j]))
                .collect();
            let name = format!("scatter_param{t}.svg");
            let chart = svg::scatter(
                &format!("param{t}: predicted vs true"),
                "true",
                "predicted",
                &points,
            );
            write(&args.out.join(&name), &chart)?;
            written.push(name.into());
        }
    }
    let tm_path = dir.join(TEST_METRICS_JSON);
    if tm_path.is_file() {
        let map: std::collections::BTreeMap<String, f64> =
            serde_json::from_str(&read(&tm_path)?)
                .map_err(|e| CliError::Format(format!("{}: {e}", tm_path.display())))?;
        let mut csv = String::from("metric,value\n");
        for (k, v) in map {
            csv.push_str(&format!("{k},{v:e}\n"));
        }
        write(&args.out.join("test_metrics.csv"), &csv)?;
        written.push("test_metrics.csv".into());
    }
    let sens_path = dir.join(SENSITIVITY_CSV);
    if sens_path.is_file() {
        let (features, targets, coefficients, _) =
            SensitivityReport::parse_csv(&read(&sens_path)?)?;
        let chart = sensitivity_svg(&features, &targets, &coefficients, pc_count(&features));
        write(&args.out.join(SENSITIVITY_SVG), &chart)?;
        written.push(SENSITIVITY_SVG.into());
    }
    for w in written {
        println!("{}", args.out.join(w).display());
    }
    Ok(())
}
