//! `gen`, `train`, `allocate` and `report`.

use std::fmt::Write as _;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;

use super::config::RunConfig;
use super::ModelChoice;
use crate::allocator::write_decisions;
use crate::error::{Error, Result};
use crate::eval::{
    auc, budget_sweep, logloss, monotonicity_report, render_reports, render_sweep, run_ab, write_monotonicity_csv,
    write_reports_csv, write_sweep_csv, GroundTruth,
};
use crate::iidn::io::{load_samples, save_samples};
use crate::iidn::{
    menu_with_null, split_by_user, train, write_loss_curve, IidnModel, IntentModel, LabeledSample, LrConfig, LrModel,
    TrainOptions, TrainedModel,
};
use crate::simulator::{label_rates, write_ground_truth, Population, Simulator};

pub const MANIFEST: &str = "manifest.json";
pub const GROUND_TRUTH: &str = "ground_truth.csv";
pub const TRAIN_METRICS: &str = "train_metrics.csv";
pub const DUAL: &str = "dual.json";
pub const DECISIONS: &str = "decisions.csv";
pub const AB_REPORT: &str = "ab_report.csv";
pub const SWEEP: &str = "sweep.csv";
pub const MONOTONICITY: &str = "monotonicity.csv";
pub const MONOTONE_USERS: &str = "monotone_users.csv";
pub const SUMMARY: &str = "summary.txt";

const MANIFEST_SCHEMA: &str = "coupon-alloc/manifest/v1";
const TRAIN_METRICS_HEADER: &str = "variant,pay_auc,pay_logloss,stay_auc,stay_logloss,epochs";

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn ensure_parent(path: &Path) -> Result<()> {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => ensure_dir(p),
        _ => Ok(()),
    }
}

fn write_with<F>(path: &Path, f: F) -> Result<()>
where
    F: FnOnce(&mut BufWriter<fs::File>) -> std::io::Result<()>,
{
    ensure_parent(path)?;
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    f(&mut w).and_then(|_| w.flush()).map_err(|e| Error::io(path, e))
}

fn simulator(cfg: &RunConfig) -> Result<Simulator> {
    Ok(Simulator {
        population: Population::new(cfg.simulator.population.clone(), cfg.seeds.population)?,
        session: cfg.simulator.session.clone(),
    })
}

#[derive(Serialize)]
struct Manifest<'a> {
    schema: &'static str,
    created_unix: u64,
    seed: u64,
    samples: usize,
    offset: u64,
    stay_rate: f64,
    pay_rate: f64,
    dataset: &'a Path,
    ground_truth: &'a Path,
}

/// Generates the labeled dataset, its ground-truth table and a manifest.
pub fn cmd_gen(cfg: &RunConfig) -> Result<String> {
    let sim = simulator(cfg)?;
    let d = &cfg.dataset;
    let samples = sim.make_dataset(&d.exposure, d.offset, d.samples)?;
    ensure_parent(&cfg.paths.dataset)?;
    save_samples(&cfg.paths.dataset, &samples)?;

    ensure_dir(&cfg.paths.reports)?;
    let truth_path = cfg.paths.reports.join(GROUND_TRUTH);
    let users = sim.population.users(d.offset, d.samples);
    let menu = menu_with_null(&cfg.menu()?);
    write_with(&truth_path, |w| write_ground_truth(w, &users, &menu))?;

    let (stay_rate, pay_rate) = label_rates(&samples);
    let manifest = Manifest {
        schema: MANIFEST_SCHEMA,
        created_unix: SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |t| t.as_secs()),
        seed: cfg.seeds.population,
        samples: samples.len(),
        offset: d.offset,
        stay_rate,
        pay_rate,
        dataset: &cfg.paths.dataset,
        ground_truth: &truth_path,
    };
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n";
    let manifest_path = cfg.paths.reports.join(MANIFEST);
    fs::write(&manifest_path, text).map_err(|e| Error::io(&manifest_path, e))?;
    Ok(format!(
        "wrote {} samples to {} (stay rate {stay_rate:.4}, pay rate {pay_rate:.4})\n",
        samples.len(),
        cfg.paths.dataset.display()
    ))
}

/// Validation metrics for one trained model.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainMetrics {
    pub variant: String,
    pub pay_auc: Option<f64>,
    pub pay_logloss: f64,
    pub stay_auc: Option<f64>,
    pub stay_logloss: f64,
    pub epochs: usize,
}

fn auc_or_none(scores: &[f64], labels: &[bool]) -> Result<Option<f64>> {
    match auc(scores, labels) {
        Ok(v) => Ok(Some(v)),
        Err(Error::UndefinedMetric(_)) => Ok(None),
        Err(e) => Err(e),
    }
}

pub fn evaluate<M: IntentModel + ?Sized>(
    model: &M,
    valid: &[LabeledSample],
) -> Result<(Option<f64>, f64, Option<f64>, f64)> {
    let mut pay = Vec::with_capacity(valid.len());
    let mut stay = Vec::with_capacity(valid.len());
    for s in valid {
        let sc = model.score(&s.x)?;
        pay.push(sc.p_pay);
        stay.push(sc.p_stay);
    }
    let yp: Vec<bool> = valid.iter().map(|s| s.y_p).collect();
    let ys: Vec<bool> = valid.iter().map(|s| s.y_s).collect();
    Ok((
        auc_or_none(&pay, &yp)?,
        logloss(&pay, &yp)?,
        auc_or_none(&stay, &ys)?,
        logloss(&stay, &ys)?,
    ))
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".into(), |v| format!("{v:.6}"))
}

impl TrainMetrics {
    fn csv_row(&self) -> String {
        format!(
            "{},{},{:.6},{},{:.6},{}",
            self.variant,
            opt(self.pay_auc),
            self.pay_logloss,
            opt(self.stay_auc),
            self.stay_logloss,
            self.epochs
        )
    }
}

/// Trains each requested variant, saving the model and its loss curve.
pub fn cmd_train(cfg: &RunConfig, variants: &[ModelChoice]) -> Result<String> {
    let data = load_samples(&cfg.paths.dataset)?;
    if !(0.0..1.0).contains(&cfg.dataset.valid_fraction) {
        return Err(Error::config("valid_fraction must be in [0, 1)"));
    }
    let (train_set, valid) = split_by_user(&data, cfg.dataset.valid_fraction, cfg.seeds.split);
    let opts = TrainOptions {
        epochs: cfg.train.epochs,
        batch_size: cfg.train.batch_size,
        seed: cfg.seeds.train,
        adam: cfg.adam,
        final_lr_scale: cfg.train.final_lr_scale,
    };
    ensure_dir(&cfg.paths.models)?;
    ensure_dir(&cfg.paths.reports)?;

    let mut rows = Vec::new();
    for &choice in variants {
        let model = match choice.variant() {
            Some(v) => {
                let mut m = IidnModel::new(cfg.model.clone().with_variant(v), cfg.seeds.model)?;
                let curve = train(&mut m, &train_set, &opts)?;
                save_curve(cfg, choice, &curve)?;
                TrainedModel::Iidn(m)
            }
            None => {
                let mut m = LrModel::new(LrConfig::from(&cfg.model), cfg.seeds.model)?;
                let curve = train(&mut m, &train_set, &opts)?;
                save_curve(cfg, choice, &curve)?;
                TrainedModel::Lr(m)
            }
        };
        model.save(&model_path(cfg, choice))?;
        let (pay_auc, pay_logloss, stay_auc, stay_logloss) = if valid.is_empty() {
            (None, f64::NAN, None, f64::NAN)
        } else {
            evaluate(&model, &valid)?
        };
        rows.push(TrainMetrics {
            variant: choice.name().into(),
            pay_auc,
            pay_logloss,
            stay_auc,
            stay_logloss,
            epochs: cfg.train.epochs,
        });
    }
    let merged = merge_metrics(&cfg.paths.reports.join(TRAIN_METRICS), &rows)?;
    write_with(&cfg.paths.reports.join(TRAIN_METRICS), |w| {
        w.write_all(merged.as_bytes())
    })?;
    Ok(render_csv(&merged))
}

fn save_curve(cfg: &RunConfig, choice: ModelChoice, curve: &[crate::iidn::EpochLoss]) -> Result<()> {
    let path = cfg.paths.reports.join(format!("loss_{}.csv", choice.name()));
    write_with(&path, |w| write_loss_curve(w, curve))
}

pub fn model_path(cfg: &RunConfig, choice: ModelChoice) -> PathBuf {
    cfg.paths.models.join(format!("{}.json", choice.name()))
}

/// Replaces this run's rows in an existing metrics file, keeping variant order.
fn merge_metrics(path: &Path, rows: &[TrainMetrics]) -> Result<String> {
    let mut lines: Vec<(usize, String)> = Vec::new();
    if path.exists() {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        for line in text.lines().skip(1) {
            let name = line.split(',').next().unwrap_or_default();
            let Some(choice) = ModelChoice::from_name(name) else {
                return Err(Error::parse(
                    "training metrics",
                    path,
                    format!("unknown variant `{name}`"),
                ));
            };
            if !rows.iter().any(|r| r.variant == name) {
                lines.push((choice.order(), line.to_string()));
            }
        }
    }
    for r in rows {
        let order = ModelChoice::from_name(&r.variant).map_or(usize::MAX, ModelChoice::order);
        lines.push((order, r.csv_row()));
    }
    lines.sort_by_key(|l| l.0);
    let mut out = format!("{TRAIN_METRICS_HEADER}\n");
    for (_, l) in lines {
        out.push_str(&l);
        out.push('\n');
    }
    Ok(out)
}

/// Dual estimation, the four-arm A/B run, an optional sweep and the monotonicity check.
pub fn cmd_allocate(cfg: &RunConfig, model_file: Option<&Path>) -> Result<String> {
    let choice = ModelChoice::from_name(&cfg.allocation.variant)
        .filter(|c| *c != ModelChoice::All)
        .ok_or_else(|| {
            Error::config(format!(
                "unknown scoring variant `{}` (expected one of {})",
                cfg.allocation.variant,
                ModelChoice::single_names().join(", ")
            ))
        })?;
    let path = model_file.map_or_else(|| model_path(cfg, choice), Path::to_path_buf);
    let model = TrainedModel::load(&path)?;
    let sim = simulator(cfg)?;
    let exp = cfg.experiment()?;
    let sweep = cfg.sweep()?;
    let reports = &cfg.paths.reports;
    ensure_dir(reports)?;

    let ab = run_ab(&sim, &model, &exp)?;
    let mut out = render_reports(&ab.reports);
    if let Some(mut dual) = ab.dual.clone() {
        dual.beta = None;
        dual.save(&reports.join(DUAL))?;
        let _ = writeln!(out, "\ndual price alpha = {:.8}", dual.alpha);
    }
    write_with(&reports.join(DECISIONS), |w| write_decisions(w, &ab.decisions))?;
    write_with(&reports.join(AB_REPORT), |w| write_reports_csv(w, &ab.reports))?;

    if !sweep.is_empty() {
        let rows = budget_sweep(&sim, &model, &exp, &sweep)?;
        write_with(&reports.join(SWEEP), |w| write_sweep_csv(w, &rows))?;
        out.push('\n');
        out.push_str(&render_sweep(&rows));
    }

    let held_out = sim.arrivals(cfg.allocation.monotonicity_offset, cfg.allocation.monotonicity_users);
    let model_mono = monotonicity_report(&model, &held_out, &exp.menu)?;
    let truth_mono = monotonicity_report(&GroundTruth, &held_out, &exp.menu)?;
    let name = model.name();
    let mut buf = Vec::new();
    write_monotonicity_csv(&mut buf, &[("ground-truth", &truth_mono), (name, &model_mono)])?;
    write_with(&reports.join(MONOTONICITY), |w| w.write_all(&buf))?;
    write_with(&reports.join(MONOTONE_USERS), |w| {
        writeln!(w, "model,users,monotone,fraction")?;
        for (n, r) in [("ground-truth", &truth_mono), (name, &model_mono)] {
            writeln!(w, "{n},{},{},{:.6}", r.per_user.len(), r.monotone_users(), r.fraction())?;
        }
        Ok(())
    })?;
    let _ = writeln!(
        out,
        "\nmonotone users: {name} {:.1}%, ground truth {:.1}%",
        100.0 * model_mono.fraction(),
        100.0 * truth_mono.fraction()
    );
    Ok(out)
}

const REQUIRED: [&str; 4] = [AB_REPORT, DUAL, MONOTONICITY, MONOTONE_USERS];
const OPTIONAL: [&str; 3] = [TRAIN_METRICS, SWEEP, DECISIONS];

/// Renders every artifact in `dir` as text tables and writes `summary.txt`.
pub fn cmd_report(dir: &Path) -> Result<String> {
    let missing: Vec<&str> = REQUIRED.iter().copied().filter(|f| !dir.join(f).is_file()).collect();
    if !missing.is_empty() {
        let mut expected: Vec<String> = REQUIRED.iter().map(|s| s.to_string()).collect();
        expected.extend(OPTIONAL.iter().map(|s| format!("{s} (optional)")));
        return Err(Error::MissingArtifacts {
            dir: dir.to_path_buf(),
            expected,
        });
    }
    let read = |name: &str| -> Result<String> {
        let p = dir.join(name);
        fs::read_to_string(&p).map_err(|e| Error::io(&p, e))
    };
    let mut out = String::new();
    let sections: [(&str, &str, bool); 5] = [
        ("Offline model comparison", TRAIN_METRICS, false),
        ("Policy comparison", AB_REPORT, true),
        ("Budget sweep", SWEEP, false),
        ("Monotone users", MONOTONE_USERS, true),
        ("Mean purchase intent by amount", MONOTONICITY, true),
    ];
    for (title, file, required) in sections {
        if !required && !dir.join(file).is_file() {
            continue;
        }
        let _ = writeln!(out, "== {title} ==");
        out.push_str(&render_csv(&read(file)?));
        out.push('\n');
    }
    let dual = crate::allocator::DualState::load(&dir.join(DUAL))?;
    let _ = writeln!(
        out,
        "dual price alpha = {:.8} (sample {}, scaled budget {})",
        dual.alpha, dual.sample_size, dual.scaled_budget
    );
    let summary = dir.join(SUMMARY);
    fs::write(&summary, &out).map_err(|e| Error::io(&summary, e))?;
    Ok(out)
}

/// Aligns a small CSV into columns; numbers right-aligned.
pub fn render_csv(text: &str) -> String {
    let rows: Vec<Vec<&str>> = text
        .lines()
        .filter(|l| !l.is_empty())
        .map(|l| l.split(',').collect())
        .collect();
    let cols = rows.iter().map(Vec::len).max().unwrap_or(0);
    let widths: Vec<usize> = (0..cols)
        .map(|c| rows.iter().filter_map(|r| r.get(c)).map(|s| s.len()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for r in &rows {
        let cells: Vec<String> = r
            .iter()
            .enumerate()
            .map(|(c, s)| {
                if c > 0 && s.parse::<f64>().is_ok() {
                    format!("{s:>w$}", w = widths[c])
                } else {
                    format!("{s:<w$}", w = widths[c])
                }
            })
            .collect();
        out.push_str(cells.join("  ").trim_end());
        out.push('\n');
    }
    out
}
