//! Experiment orchestration: train each configured mode on each seed,
//! evaluate clean and attacked test error, and emit CSV / JSON / SVG
//! artifacts. Evaluation is a pure function of the final parameters.

use crate::config::{ExperimentConfig, TrainEntry};
use crate::dataset::generate_dataset;
use crate::error::{HarnessError, Result};
use crate::plot::{line_chart, Series};
use serde::{Deserialize, Serialize};
use ssdrl_core::adversary::{pgm_attack, solve_inner_max, AttackConfig};
use ssdrl_core::models::{Example, LossModel, ModelSpec, ParamVector};
use ssdrl_core::trainer::{train, TrainTrace};
use ssdrl_core::Error as CoreError;
use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

pub const CSV_HEADER: &str = "mode,gamma,lambda,seed,metric,value";

/// One measured value: the CSV row schema.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub mode: String,
    pub gamma: f64,
    pub lambda: f64,
    pub seed: u64,
    pub metric: String,
    pub value: f64,
}

fn fmt_num(v: f64) -> String {
    if v == f64::INFINITY {
        "inf".into()
    } else if v == f64::NEG_INFINITY {
        "-inf".into()
    } else {
        format!("{v}")
    }
}

impl MetricRow {
    pub fn to_csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{}",
            self.mode,
            fmt_num(self.gamma),
            fmt_num(self.lambda),
            self.seed,
            self.metric,
            fmt_num(self.value)
        )
    }
}

/// Mean and standard deviation of one metric across seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub mode: String,
    pub metric: String,
    pub mean: f64,
    pub stddev: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub rows: Vec<MetricRow>,
    pub aggregates: Vec<Aggregate>,
}

/// Saved model: architecture plus final parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelFile {
    pub spec: ModelSpec,
    pub theta: ParamVector,
}

/// Fraction of test examples the model misclassifies.
pub fn clean_error(model: &ModelSpec, theta: &ParamVector, test: &[Example]) -> Result<f64> {
    let mut wrong = 0usize;
    for ex in test {
        let want = ex.label.ok_or(CoreError::MissingLabel)?;
        if model.predict(theta, &ex.features)? != want {
            wrong += 1;
        }
    }
    Ok(wrong as f64 / test.len() as f64)
}

/// Error rate and mean adversarial loss under the inner-maximization attack
/// at the given evaluation γ.
pub fn adversarial_eval(
    model: &ModelSpec,
    theta: &ParamVector,
    test: &[Example],
    attack: &AttackConfig,
) -> Result<(f64, f64)> {
    let mut wrong = 0usize;
    let mut loss_sum = 0.0;
    for ex in test {
        let want = ex.label.ok_or(CoreError::MissingLabel)?;
        let res = solve_inner_max(model, theta, ex, attack)?;
        loss_sum += res.objective;
        if model.predict(theta, &res.z_star.features)? != want {
            wrong += 1;
        }
    }
    let n = test.len() as f64;
    Ok((wrong as f64 / n, loss_sum / n))
}

/// Error rate and mean clean loss on PGM-attacked test examples.
pub fn pgm_eval(
    model: &ModelSpec,
    theta: &ParamVector,
    test: &[Example],
    epsilon: f64,
    steps: usize,
) -> Result<(f64, f64)> {
    let mut wrong = 0usize;
    let mut loss_sum = 0.0;
    for ex in test {
        let want = ex.label.ok_or(CoreError::MissingLabel)?;
        let adv = pgm_attack(model, theta, ex, epsilon, steps)?;
        loss_sum += model.loss(theta, &adv)?;
        if model.predict(theta, &adv.features)? != want {
            wrong += 1;
        }
    }
    let n = test.len() as f64;
    Ok((wrong as f64 / n, loss_sum / n))
}

fn aggregate(rows: &[MetricRow]) -> Vec<Aggregate> {
    let mut groups: BTreeMap<(String, String), Vec<f64>> = BTreeMap::new();
    for row in rows {
        groups
            .entry((row.mode.clone(), row.metric.clone()))
            .or_default()
            .push(row.value);
    }
    groups
        .into_iter()
        .map(|((mode, metric), values)| {
            let n = values.len() as f64;
            let mean = values.iter().sum::<f64>() / n;
            let var = if values.len() > 1 {
                values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)
            } else {
                0.0
            };
            Aggregate {
                mode,
                metric,
                mean,
                stddev: var.sqrt(),
                count: values.len(),
            }
        })
        .collect()
}

/// Trace and test set of a successful run; None when training diverged,
/// which is recorded as a row rather than treated as fatal.
type CellOutcome = Option<(TrainTrace, Vec<Example>)>;

/// Train and evaluate one (entry, seed) cell.
fn run_cell(
    cfg: &ExperimentConfig,
    entry: &TrainEntry,
    seed: u64,
) -> Result<(Vec<MetricRow>, CellOutcome)> {
    let mut spec = cfg.dataset.clone();
    spec.seed = cfg.dataset.seed.wrapping_add(seed);
    let (data, test) = generate_dataset(&spec)?;
    let train_cfg = entry.to_train_config(data.n(), seed)?;
    let model = cfg.model.clone().validated()?;
    let theta0 = ParamVector::random(model.param_count(), entry.init_scale, seed);
    let mode = entry.mode.as_str().to_string();
    let row = |metric: &str, value: f64| MetricRow {
        mode: mode.clone(),
        gamma: train_cfg.gamma,
        lambda: train_cfg.lambda.value(),
        seed,
        metric: metric.into(),
        value,
    };
    let trace = match train(&model, &theta0, &data, &train_cfg) {
        Ok(trace) => trace,
        Err(CoreError::DivergedTraining { .. }) | Err(CoreError::DivergedAttack) => {
            return Ok((vec![row("diverged", 1.0)], None));
        }
        Err(e) => return Err(e.into()),
    };
    let theta = &trace.theta_final;
    let mut rows = Vec::new();
    rows.push(row("clean_error", clean_error(&model, theta, &test)?));
    rows.push(row(
        "final_risk",
        *trace.risk_history.last().unwrap_or(&f64::NAN),
    ));
    for &gamma_eval in &cfg.attacks.eval_gammas {
        let attack = AttackConfig {
            gamma: gamma_eval,
            kappa: cfg.attacks.kappa,
            steps: cfg.attacks.eval_ascent_steps,
            delta: 0.0,
        };
        let (err, loss) = adversarial_eval(&model, theta, &test, &attack)?;
        rows.push(row(
            &format!("adv_error_gamma_{}", fmt_num(gamma_eval)),
            err,
        ));
        rows.push(row(
            &format!("adv_loss_gamma_{}", fmt_num(gamma_eval)),
            loss,
        ));
    }
    for &eps in &cfg.attacks.pgm_epsilons {
        let (err, loss) = pgm_eval(&model, theta, &test, eps, cfg.attacks.pgm_steps)?;
        rows.push(row(&format!("pgm_error_eps_{}", fmt_num(eps)), err));
        rows.push(row(&format!("pgm_loss_eps_{}", fmt_num(eps)), loss));
    }
    Ok((rows, Some((trace, test))))
}

/// Run the whole experiment grid and write artifacts under the output
/// directory: `results.csv`, `report.json`, per-cell model files, and the
/// SVG charts. Returns the in-memory report.
pub fn run_experiment(cfg: &ExperimentConfig, out_dir: &Path) -> Result<ExperimentReport> {
    fs::create_dir_all(out_dir)?;
    let mut rows: Vec<MetricRow> = Vec::new();
    for entry in &cfg.train {
        for &seed in &cfg.seeds {
            let (cell_rows, outcome) = run_cell(cfg, entry, seed)?;
            rows.extend(cell_rows);
            if let Some((trace, _)) = outcome {
                write_trace_csv(
                    &trace,
                    &out_dir.join(format!("trace_{}_{seed}.csv", entry.mode.as_str())),
                )?;
                let model_file = ModelFile {
                    spec: cfg.model.clone(),
                    theta: trace.theta_final,
                };
                let path = out_dir.join(format!("model_{}_{seed}.json", entry.mode.as_str()));
                fs::write(path, serde_json::to_string_pretty(&model_file)?)?;
            }
        }
    }
    let report = ExperimentReport {
        aggregates: aggregate(&rows),
        rows,
    };
    write_csv(&report.rows, &out_dir.join("results.csv"))?;
    fs::write(
        out_dir.join("report.json"),
        serde_json::to_string_pretty(&report)?,
    )?;
    if cfg.emit_svg {
        write_charts(&report, out_dir)?;
    }
    Ok(report)
}

/// Per-iteration training record: `iteration,risk,gradnorm`.
pub fn write_trace_csv(trace: &TrainTrace, path: &Path) -> Result<()> {
    let mut text = String::from("iteration,risk,gradnorm\n");
    for (i, (risk, gradnorm)) in trace
        .risk_history
        .iter()
        .zip(&trace.gradnorm_history)
        .enumerate()
    {
        text.push_str(&format!("{i},{risk},{gradnorm}\n"));
    }
    fs::write(path, text)?;
    Ok(())
}

pub fn write_csv(rows: &[MetricRow], path: &Path) -> Result<()> {
    let mut text = String::from(CSV_HEADER);
    text.push('\n');
    for row in rows {
        text.push_str(&row.to_csv_line());
        text.push('\n');
    }
    fs::write(path, text)?;
    Ok(())
}

pub fn read_csv(path: &Path) -> Result<Vec<MetricRow>> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h == CSV_HEADER => {}
        other => {
            return Err(HarnessError::format(format!(
                "unexpected CSV header: {other:?}"
            )));
        }
    }
    let parse_num = |s: &str| -> Result<f64> {
        match s {
            "inf" => Ok(f64::INFINITY),
            "-inf" => Ok(f64::NEG_INFINITY),
            _ => s
                .parse::<f64>()
                .map_err(|_| HarnessError::format(format!("bad number {s:?}"))),
        }
    };
    let mut rows = Vec::new();
    for line in lines {
        if line.is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != 6 {
            return Err(HarnessError::format(format!("bad CSV line: {line:?}")));
        }
        rows.push(MetricRow {
            mode: parts[0].into(),
            gamma: parse_num(parts[1])?,
            lambda: parse_num(parts[2])?,
            seed: parts[3]
                .parse()
                .map_err(|_| HarnessError::format(format!("bad seed {:?}", parts[3])))?,
            metric: parts[4].into(),
            value: parse_num(parts[5])?,
        });
    }
    Ok(rows)
}

/// Mean metric value per mode keyed by a numeric suffix extracted from the
/// metric name (the attack strength).
fn series_by_suffix(
    report: &ExperimentReport,
    prefix: &str,
    x_map: impl Fn(f64) -> f64,
) -> Vec<Series> {
    let mut per_mode: BTreeMap<String, Vec<(f64, f64)>> = BTreeMap::new();
    for agg in &report.aggregates {
        if let Some(suffix) = agg.metric.strip_prefix(prefix) {
            let raw = if suffix == "inf" {
                f64::INFINITY
            } else {
                suffix.parse().unwrap_or(f64::NAN)
            };
            if raw.is_nan() {
                continue;
            }
            let x = x_map(raw);
            if x.is_finite() {
                per_mode
                    .entry(agg.mode.clone())
                    .or_default()
                    .push((x, agg.mean));
            }
        }
    }
    per_mode
        .into_iter()
        .map(|(name, points)| Series { name, points })
        .collect()
}

pub fn write_charts(report: &ExperimentReport, out_dir: &Path) -> Result<PathBuf> {
    let plots = out_dir.join("plots");
    fs::create_dir_all(&plots)?;
    type XMap = Box<dyn Fn(f64) -> f64>;
    let charts: [(&str, &str, &str, XMap); 4] = [
        (
            "adv_error_gamma_",
            "error_vs_inv_gamma.svg",
            "test error",
            Box::new(|g| 1.0 / g),
        ),
        (
            "adv_loss_gamma_",
            "adv_loss_vs_inv_gamma.svg",
            "mean adversarial loss",
            Box::new(|g| 1.0 / g),
        ),
        (
            "pgm_error_eps_",
            "error_vs_pgm_eps.svg",
            "test error",
            Box::new(|e| e),
        ),
        (
            "pgm_loss_eps_",
            "pgm_loss_vs_eps.svg",
            "mean loss",
            Box::new(|e| e),
        ),
    ];
    for (prefix, file, ylabel, x_map) in charts {
        let series = series_by_suffix(report, prefix, x_map);
        if series.is_empty() {
            continue;
        }
        let xlabel = if prefix.contains("gamma") {
            "1 / gamma_eval"
        } else {
            "pgm epsilon"
        };
        let svg = line_chart(&format!("{ylabel} vs {xlabel}"), xlabel, ylabel, &series);
        fs::write(plots.join(file), svg)?;
    }
    Ok(plots)
}
