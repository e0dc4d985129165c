//! Command-line front: dataset generation, training runs, attack
//! evaluation, finite-instance theory experiments, and report rendering.

use clap::{Args, Parser, Subcommand};
use ssdrl_core::adversary::AttackConfig;
use ssdrl_core::softmin::LambdaParam;
use ssdrl_core::theory::{
    discrete_wasserstein, duality_check, gap_gamma_lambda, msr, rho_lambda, ssm_rademacher,
    FiniteInstance, MsrQuery,
};
use ssdrl_harness::config::ExperimentConfig;
use ssdrl_harness::dataset::{generate_dataset, DatasetSpec, SavedDataset};
use ssdrl_harness::error::{HarnessError, Result};
use ssdrl_harness::experiment::{
    adversarial_eval, clean_error, pgm_eval, read_csv, run_experiment, write_charts, Aggregate,
    ExperimentReport, MetricRow, ModelFile,
};
use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "ssdrl",
    about = "Semi-supervised distributionally robust learning"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a dataset from a spec file and save it as JSON.
    Gen(GenArgs),
    /// Run the experiment grid described by a config file.
    Train(TrainArgs),
    /// Evaluate attacks against a saved model on a saved dataset.
    Attack(AttackArgs),
    /// Finite-instance theory experiments.
    Theory(TheoryArgs),
    /// Re-render the aggregate table and charts from a results directory.
    Report(ReportArgs),
}

#[derive(Args)]
struct GenArgs {
    /// Dataset spec JSON file.
    #[arg(long)]
    spec: PathBuf,
    /// Output dataset file.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    /// Experiment config JSON file.
    #[arg(long)]
    config: PathBuf,
    /// Override the config's output directory.
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Args)]
struct AttackArgs {
    /// Saved model file (from `train`).
    #[arg(long)]
    model: PathBuf,
    /// Saved dataset file (from `gen`).
    #[arg(long)]
    data: PathBuf,
    /// Evaluation γ values for the inner-maximization attack.
    #[arg(long, value_delimiter = ',')]
    gammas: Vec<f64>,
    /// PGM ε values.
    #[arg(long, value_delimiter = ',')]
    epsilons: Vec<f64>,
    /// Ascent iterations for the inner-maximization attack.
    #[arg(long, default_value_t = 15)]
    steps: usize,
}

#[derive(Args)]
struct TheoryArgs {
    /// Finite instance JSON file; a random demo instance is generated when
    /// absent.
    #[arg(long)]
    instance: Option<PathBuf>,
    /// Seed for the demo instance.
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Output directory.
    #[arg(long, default_value = "theory-out")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct ReportArgs {
    /// Directory containing results.csv.
    #[arg(long)]
    dir: PathBuf,
}

fn output_dir(cfg: &ExperimentConfig, cli_override: Option<PathBuf>) -> PathBuf {
    if let Some(dir) = cli_override {
        return dir;
    }
    if let Ok(dir) = std::env::var("SSDRL_OUT_DIR") {
        if !dir.is_empty() {
            return PathBuf::from(dir);
        }
    }
    PathBuf::from(&cfg.output_dir)
}

fn cmd_gen(args: GenArgs) -> Result<()> {
    let text = fs::read_to_string(&args.spec)?;
    let spec: DatasetSpec = serde_json::from_str(&text)
        .map_err(|e| HarnessError::config(format!("cannot parse dataset spec: {e}")))?;
    let (data, test) = generate_dataset(&spec)?;
    let saved = SavedDataset::from_parts(&data, &test);
    fs::write(&args.out, serde_json::to_string(&saved)?)?;
    println!(
        "wrote {} ({} train / {} labeled / {} test)",
        args.out.display(),
        data.n(),
        data.n_labeled(),
        test.len()
    );
    Ok(())
}

fn cmd_train(args: TrainArgs) -> Result<()> {
    let text = fs::read_to_string(&args.config)?;
    let cfg = ExperimentConfig::from_json(&text)?;
    let out = output_dir(&cfg, args.out_dir);
    let report = run_experiment(&cfg, &out)?;
    print_aggregates(&report.aggregates);
    println!("artifacts in {}", out.display());
    Ok(())
}

fn cmd_attack(args: AttackArgs) -> Result<()> {
    let model: ModelFile = serde_json::from_str(&fs::read_to_string(&args.model)?)?;
    let saved: SavedDataset = serde_json::from_str(&fs::read_to_string(&args.data)?)?;
    let (_, test) = saved.into_parts()?;
    let spec = model.spec.clone().validated()?;
    println!(
        "clean_error {:.4}",
        clean_error(&spec, &model.theta, &test)?
    );
    for &gamma in &args.gammas {
        let attack = AttackConfig {
            gamma,
            kappa: 1.0,
            steps: args.steps,
            delta: 0.0,
        };
        let (err, loss) = adversarial_eval(&spec, &model.theta, &test, &attack)?;
        println!("adv gamma {gamma}: error {err:.4} mean_phi {loss:.4}");
    }
    for &eps in &args.epsilons {
        let (err, loss) = pgm_eval(&spec, &model.theta, &test, eps, 15)?;
        println!("pgm eps {eps}: error {err:.4} mean_loss {loss:.4}");
    }
    Ok(())
}

fn cmd_theory(args: TheoryArgs) -> Result<()> {
    fs::create_dir_all(&args.out_dir)?;
    let inst = match &args.instance {
        Some(path) => FiniteInstance::from_json(&fs::read_to_string(path)?)?,
        None => {
            let inst = FiniteInstance::random_with_baseline(3, 2, 3, args.seed)?;
            let path = args.out_dir.join("instance.json");
            fs::write(&path, inst.to_json()?)?;
            println!("generated demo instance at {}", path.display());
            inst
        }
    };
    let lambdas = [-5.0, -1.0, 0.0, 1.0, 5.0];
    println!("rho_lambda table ({} functions):", inst.num_functions());
    for j in 0..inst.num_functions() {
        let row: Vec<String> = lambdas
            .iter()
            .map(|&l| {
                format!(
                    "{:+.4}",
                    rho_lambda(&inst, j, LambdaParam::new(l).unwrap()).unwrap()
                )
            })
            .collect();
        let report = gap_gamma_lambda(&inst, &[j])?;
        println!(
            "  phi_{j}: [{}]  Lambda({{phi_{j}}}) = {:+.4}",
            row.join(", "),
            report.lambda_threshold
        );
    }
    let mut msr_csv = String::from("lambda,margin,msr\n");
    for &l in &lambdas {
        for margin in [0.0, 0.1, 0.3] {
            let value = msr(&inst, &MsrQuery::new(LambdaParam::new(l).unwrap(), margin)?)?;
            msr_csv.push_str(&format!("{l},{margin},{value}\n"));
        }
    }
    let msr_path = args.out_dir.join("msr_grid.csv");
    fs::write(&msr_path, msr_csv)?;

    let nz = inst.num_points();
    let uniform = vec![1.0 / nz as f64; nz];
    let w = discrete_wasserstein(&inst.p0, &uniform, &inst.cost)?;
    println!("wasserstein(p0, uniform) = {w:.6}");

    let ell = inst.phi_matrix[0].clone();
    let lo = ell.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = ell.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min_cost = inst
        .cost
        .iter()
        .enumerate()
        .flat_map(|(i, row)| {
            row.iter()
                .enumerate()
                .filter(move |&(j, _)| j != i)
                .map(|(_, &c)| c)
        })
        .filter(|&c| c > 0.0)
        .fold(f64::INFINITY, f64::min);
    let gamma_max = ((hi - lo) / min_cost + 1.0).max(1.0);
    let grid: Vec<f64> = (0..=120).map(|i| gamma_max * i as f64 / 120.0).collect();
    for eps in [0.0, 0.1, 0.5] {
        let report = duality_check(&inst, &ell, &inst.p0, eps, &grid)?;
        println!(
            "duality eps {eps}: primal {:.6} dual {:.6} gap {:+.2e}",
            report.primal, report.dual, report.gap
        );
    }
    let est = ssm_rademacher(&inst.phi_matrix, &inst, 0.1, 0.5, 32, 200, args.seed)?;
    println!(
        "ssm rademacher (eps 0.1, eta 0.5, n 32): {:.4} +- {:.4}",
        est.estimate, est.stderr
    );
    println!("msr grid written to {}", msr_path.display());
    Ok(())
}

fn cmd_report(args: ReportArgs) -> Result<()> {
    let rows = read_csv(&args.dir.join("results.csv"))?;
    let report = rebuild_report(rows);
    print_aggregates(&report.aggregates);
    let plots = write_charts(&report, &args.dir)?;
    println!("charts in {}", plots.display());
    Ok(())
}

fn rebuild_report(rows: Vec<MetricRow>) -> ExperimentReport {
    use std::collections::BTreeMap;
    let mut groups: BTreeMap<(String, String), Vec<f64>> = BTreeMap::new();
    for row in &rows {
        groups
            .entry((row.mode.clone(), row.metric.clone()))
            .or_default()
            .push(row.value);
    }
    let aggregates = groups
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
        .collect();
    ExperimentReport { rows, aggregates }
}

fn print_aggregates(aggregates: &[Aggregate]) {
    println!(
        "{:<10} {:<28} {:>10} {:>10} {:>6}",
        "mode", "metric", "mean", "stddev", "n"
    );
    for a in aggregates {
        println!(
            "{:<10} {:<28} {:>10.4} {:>10.4} {:>6}",
            a.mode, a.metric, a.mean, a.stddev, a.count
        );
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Gen(args) => cmd_gen(args),
        Command::Train(args) => cmd_train(args),
        Command::Attack(args) => cmd_attack(args),
        Command::Theory(args) => cmd_theory(args),
        Command::Report(args) => cmd_report(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(HarnessError::Config(msg)) => {
            eprintln!("config error: {msg}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
