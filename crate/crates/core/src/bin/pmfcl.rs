//! Benchmark harness CLI.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 verification
//! failure. Output-directory precedence: `--out` flag, then the `PMFCL_OUT`
//! environment variable, then the config file value.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use pmfcl::bench::{self, BenchConfig, LearnerSpec};
use pmfcl::federated::{run_rounds, write_round_logs, FedConfig};
use pmfcl::tasks::{generate_regression_sequence, write_tasks_csv};
use pmfcl::util::fmt_f64;

#[derive(Parser)]
#[command(name = "pmfcl", version, about = "Continual-learning benchmark harness")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
struct CommonOverrides {
    /// JSON config file; omitted fields take defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed override.
    #[arg(long)]
    seed: Option<u64>,
    /// Trial-count override.
    #[arg(long)]
    trials: Option<usize>,
    /// Output directory override (beats PMFCL_OUT and the config file).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Comma-separated learner list override (default hyperparameters).
    #[arg(long, value_delimiter = ',')]
    learners: Option<Vec<String>>,
}

#[derive(Subcommand)]
enum Command {
    /// Emit the synthetic task datasets as CSV.
    Generate(CommonOverrides),
    /// Execute the benchmark across trials and learners.
    Run(CommonOverrides),
    /// Execute the federated scenario.
    Fed {
        /// JSON config file for the federated scenario.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Summarize a finished results directory.
    Compare {
        /// Results directory containing manifest.json.
        dir: PathBuf,
    },
    /// Run the full verification suite; exits 2 on any failed criterion.
    Verify {
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn resolve_config(overrides: &CommonOverrides) -> Result<BenchConfig, pmfcl::Error> {
    let mut config = match &overrides.config {
        Some(path) => BenchConfig::from_file(path)?,
        None => BenchConfig::default(),
    };
    if let Ok(env_out) = std::env::var("PMFCL_OUT") {
        if !env_out.is_empty() {
            config.out_dir = PathBuf::from(env_out);
        }
    }
    if let Some(seed) = overrides.seed {
        config.seed = seed;
    }
    if let Some(trials) = overrides.trials {
        config.trials = trials;
    }
    if let Some(out) = &overrides.out {
        config.out_dir = out.clone();
    }
    if let Some(names) = &overrides.learners {
        config.learners = names.iter().map(|n| LearnerSpec::named(n)).collect();
    }
    config.validate()?;
    Ok(config)
}

fn resolve_out(flag: &Option<PathBuf>, config_dir: PathBuf) -> PathBuf {
    if let Some(out) = flag {
        return out.clone();
    }
    if let Ok(env_out) = std::env::var("PMFCL_OUT") {
        if !env_out.is_empty() {
            return PathBuf::from(env_out);
        }
    }
    config_dir
}

fn cmd_generate(overrides: &CommonOverrides) -> Result<(), pmfcl::Error> {
    let config = resolve_config(overrides)?;
    std::fs::create_dir_all(&config.out_dir)?;
    let sequence = generate_regression_sequence(
        config.seed,
        config.d,
        config.num_tasks,
        config.n_per_task,
        config.shift_sigma,
        config.noise_sigma,
    )?;
    let tasks_path = config.out_dir.join("tasks.csv");
    write_tasks_csv(std::fs::File::create(&tasks_path)?, &sequence.tasks)?;

    let truth_path = config.out_dir.join("ground_truth.csv");
    let mut writer = csv::Writer::from_writer(std::fs::File::create(&truth_path)?);
    let mut header = vec!["task_id".to_string()];
    header.extend((0..config.d).map(|j| format!("theta{j}")));
    writer.write_record(&header)?;
    for (t, theta) in sequence.ground_truth.iter().enumerate() {
        let mut record = vec![t.to_string()];
        record.extend(theta.iter().map(|&v| fmt_f64(v)));
        writer.write_record(&record)?;
    }
    writer.flush()?;
    println!(
        "wrote {} tasks to {} (+ ground_truth.csv)",
        sequence.tasks.len(),
        tasks_path.display()
    );
    Ok(())
}

fn cmd_run(overrides: &CommonOverrides) -> Result<(), pmfcl::Error> {
    let config = resolve_config(overrides)?;
    let summary = bench::run_benchmark(&config)?;
    println!(
        "{} rows over {} trials -> {}",
        summary.rows.len(),
        config.trials,
        summary.out_dir.display()
    );
    for failure in &summary.failures {
        eprintln!(
            "warning: trial {} learner {} failed: {}",
            failure.trial, failure.learner, failure.message
        );
    }
    Ok(())
}

fn cmd_fed(
    config_path: &Option<PathBuf>,
    seed: Option<u64>,
    out: &Option<PathBuf>,
) -> Result<(), pmfcl::Error> {
    let mut config: FedConfig = match config_path {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| pmfcl::Error::ConfigParse(format!("{}: {e}", path.display())))?;
            serde_json::from_str(&text)
                .map_err(|e| pmfcl::Error::ConfigParse(format!("{}: {e}", path.display())))?
        }
        None => FedConfig::default(),
    };
    if let Some(seed) = seed {
        config.seed = seed;
    }
    let out_dir = resolve_out(out, PathBuf::from("results"));
    std::fs::create_dir_all(&out_dir)?;

    let run = run_rounds(&config)?;
    write_round_logs(std::fs::File::create(out_dir.join("rounds.csv"))?, &run.logs)?;

    let mut writer = csv::Writer::from_writer(std::fs::File::create(out_dir.join("trajectory.csv"))?);
    let mut header = vec!["round".to_string()];
    header.extend((0..config.d).map(|j| format!("theta{j}")));
    writer.write_record(&header)?;
    for (round, theta) in run.trajectory.iter().enumerate() {
        let mut record = vec![round.to_string()];
        record.extend(theta.iter().map(|&v| fmt_f64(v)));
        writer.write_record(&record)?;
    }
    writer.flush()?;
    println!(
        "{} rounds x {} clients -> {}",
        config.rounds,
        config.clients,
        out_dir.display()
    );
    Ok(())
}

fn cmd_compare(dir: &std::path::Path) -> Result<(), pmfcl::Error> {
    let report = bench::compare_report(dir)?;
    print!("{}", report.to_text());
    let csv_path = dir.join(bench::report::REPORT_FILE);
    report.write_csv(std::fs::File::create(&csv_path)?)?;
    println!("table written to {}", csv_path.display());
    Ok(())
}

fn cmd_verify(seed: Option<u64>, out: &Option<PathBuf>) -> Result<i32, pmfcl::Error> {
    let seed = seed.unwrap_or(42);
    let out_dir = resolve_out(out, PathBuf::from("verify_results"));
    let results = bench::run_all(seed, &out_dir)?;
    for result in &results {
        println!("{result}  ({:.2} s)", result.runtime_seconds);
    }
    let code = bench::exit_code(&results);
    if code == 0 {
        println!("all {} criteria passed; report in {}", results.len(), out_dir.display());
    } else {
        eprintln!("verification failed; report in {}", out_dir.display());
    }
    Ok(code)
}

fn main() -> ExitCode {
    env_logger::init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            // Help and version requests are successes, not usage errors.
            use clap::error::ErrorKind;
            let code = match err.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = err.print();
            return ExitCode::from(code);
        }
    };
    let outcome = match &cli.command {
        Command::Generate(overrides) => cmd_generate(overrides).map(|_| 0),
        Command::Run(overrides) => cmd_run(overrides).map(|_| 0),
        Command::Fed { config, seed, out } => cmd_fed(config, *seed, out).map(|_| 0),
        Command::Compare { dir } => cmd_compare(dir).map(|_| 0),
        Command::Verify { seed, out } => cmd_verify(*seed, out),
    };
    match outcome {
        Ok(code) => ExitCode::from(code as u8),
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(1)
        }
    }
}
