use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use raes_core::data::{generate_dataset, SignalConfig};
use raes_core::gradcheck::{run_suite, DEFAULT_TOLERANCE};
use raes_core::harness::{
    median_epoch_time, run_experiment, run_grid, write_report, ExperimentConfig, ExperimentResult,
    RunOutcome,
};
use raes_core::models::{ConvParams, ModelVariant, VariantKind};
use raes_core::optim::AdamConfig;

#[derive(Parser)]
#[command(
    name = "raes-lab",
    version,
    about = "Training-speed benchmark for RAE, RAES and RAESC autoencoders"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train the selected variants for one (features, sigma) setting.
    Run {
        #[arg(long, default_value_t = 1)]
        features: usize,
        #[arg(long, default_value_t = 1.0)]
        sigma: f64,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Train the selected variants over a features x sigma grid.
    Grid {
        #[arg(long, value_delimiter = ',', default_value = "1,2,4,8")]
        features: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_value = "0.25,0.5,1.0")]
        sigmas: Vec<f64>,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Check every layer's gradients against central finite differences.
    Gradcheck {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 10)]
        instances: usize,
        #[arg(long, default_value_t = DEFAULT_TOLERANCE)]
        tolerance: f64,
    },
    /// Write a synthetic dataset file.
    Generate {
        #[arg(long, default_value_t = 1)]
        features: usize,
        #[arg(long, default_value_t = 200)]
        seq_len: usize,
        #[arg(long, default_value_t = 5000)]
        n_sequences: usize,
        #[arg(long, default_value_t = 3)]
        components: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ModelArg {
    Rae,
    Raes,
    Raesc,
    RaesStretch,
    /// rae, raes and raesc
    All,
}

#[derive(Args)]
struct CommonArgs {
    #[arg(long, value_enum, default_value = "all")]
    model: ModelArg,
    #[arg(long, default_value_t = 200)]
    seq_len: usize,
    #[arg(long, default_value_t = 100)]
    epochs: usize,
    /// Stop a variant once its cumulative training time reaches this many seconds.
    #[arg(long)]
    time_budget_s: Option<f64>,
    #[arg(long, default_value_t = 5000)]
    n_sequences: usize,
    #[arg(long, default_value_t = 100)]
    batch_size: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 3)]
    kernel_size: usize,
    #[arg(long, default_value_t = 2)]
    pool_size: usize,
    /// Defaults to the pool size.
    #[arg(long)]
    pool_stride: Option<usize>,
    /// Decoder GRU width; defaults to the context size n_C.
    #[arg(long)]
    decoder_hidden: Option<usize>,
    #[arg(long, default_value_t = 1e-3)]
    lr: f64,
    /// Sinusoids summed per feature channel of generated signals.
    #[arg(long, default_value_t = 3)]
    components: usize,
    /// Load sequences from a dataset file instead of generating them.
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long, default_value = "results")]
    out: PathBuf,
    /// Train variants concurrently (epoch timings become unreliable).
    #[arg(long)]
    parallel: bool,
}

impl CommonArgs {
    fn config(&self, features: usize, sigma: f64) -> ExperimentConfig {
        let conv = ConvParams {
            kernel_size: self.kernel_size,
            pool_size: self.pool_size,
            pool_stride: self.pool_stride.unwrap_or(self.pool_size),
        };
        let kinds = match self.model {
            ModelArg::Rae => vec![VariantKind::Rae],
            ModelArg::Raes => vec![VariantKind::Raes],
            ModelArg::Raesc => vec![VariantKind::Raesc],
            ModelArg::RaesStretch => vec![VariantKind::RaesStretch],
            ModelArg::All => vec![VariantKind::Rae, VariantKind::Raes, VariantKind::Raesc],
        };
        ExperimentConfig {
            variants: kinds
                .into_iter()
                .map(|kind| ModelVariant { kind, conv })
                .collect(),
            features,
            seq_len: self.seq_len,
            sigma,
            epochs: self.epochs,
            time_budget_s: self.time_budget_s,
            batch_size: self.batch_size,
            seed: self.seed,
            adam: AdamConfig {
                lr: self.lr,
                ..AdamConfig::default()
            },
            decoder_hidden: self.decoder_hidden,
            n_sequences: self.n_sequences,
            components_per_feature: self.components,
            parallel: self.parallel,
            dataset_path: self.dataset.clone(),
        }
    }
}

fn print_results(results: &[ExperimentResult]) {
    for res in results {
        for run in &res.runs {
            let head = format!(
                "m_X={} sigma={} n_C={} {:<12}",
                res.features,
                res.sigma,
                res.n_c,
                run.variant.name()
            );
            match &run.outcome {
                RunOutcome::Trained { records, .. } => {
                    let last = records.last().expect("at least one epoch");
                    let median = median_epoch_time(records).unwrap_or(f64::NAN);
                    println!(
                        "{head} epochs={:<4} median_epoch_s={median:.4} final_train_mse={:.6} final_val_mse={:.6}",
                        records.len(),
                        last.train_mse,
                        last.val_mse
                    );
                }
                RunOutcome::Skipped { reason } => println!("{head} skipped: {reason}"),
            }
        }
    }
}

fn run(cli: Cli) -> raes_core::Result<bool> {
    match cli.command {
        Command::Run {
            features,
            sigma,
            common,
        } => {
            let results = vec![run_experiment::<f64>(&common.config(features, sigma))?];
            write_report(&results, &common.out)?;
            print_results(&results);
            println!("report written to {}", common.out.display());
        }
        Command::Grid {
            features,
            sigmas,
            common,
        } => {
            let results = run_grid::<f64>(&common.config(1, 1.0), &features, &sigmas)?;
            write_report(&results, &common.out)?;
            print_results(&results);
            println!("report written to {}", common.out.display());
        }
        Command::Gradcheck {
            seed,
            instances,
            tolerance,
        } => {
            let outcomes = run_suite(seed, instances, tolerance)?;
            let mut ok = true;
            for o in &outcomes {
                ok &= o.passed;
                println!(
                    "{:<5} {:<26} instances={} max_rel_error={:.3e} (input {}, element {}: analytic {:.6e}, numeric {:.6e})",
                    if o.passed { "PASS" } else { "FAIL" },
                    o.name,
                    o.instances,
                    o.worst.error,
                    o.worst.input,
                    o.worst.element,
                    o.worst.analytic,
                    o.worst.numeric
                );
            }
            return Ok(ok);
        }
        Command::Generate {
            features,
            seq_len,
            n_sequences,
            components,
            seed,
            out,
        } => {
            let cfg = SignalConfig {
                components_per_feature: components,
                ..SignalConfig::new(n_sequences, seq_len, features, seed)
            };
            generate_dataset(&cfg)?.save(&out)?;
            println!(
                "wrote {n_sequences}x{seq_len}x{features} sequences to {}",
                out.display()
            );
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
