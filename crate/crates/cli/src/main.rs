use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use investesg::experiment::{self, Command, ExperimentSpec, OUT_ENV_VAR};
use investesg::{Algorithm, Error};

const EXIT_CONFIG: u8 = 3;
const EXIT_RUNTIME: u8 = 4;
const EXIT_PARTIAL: u8 = 5;

#[derive(Parser)]
#[command(name = "investesg", version, about = "Climate-investment Markov game: training, simulation and dilemma analysis")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Train agents for every (alpha, seed) and write per-run artifacts.
    Train(Common),
    /// Roll out fixed mitigation rates with investors holding every company.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Mitigation rates to simulate.
        #[arg(long, value_delimiter = ',', default_value = "0,0.005")]
        rates: Vec<f64>,
    },
    /// Train the cross product of alphas, algorithms and seeds.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Algorithms (ippo, mappo, sum_reward, adalign); defaults to the train config's.
        #[arg(long, value_delimiter = ',')]
        algorithms: Vec<Algorithm>,
        /// Concurrent sweep cells (0 = one per core).
        #[arg(long, default_value_t = 0)]
        parallelism: usize,
    },
    /// Classify alphas into dilemma zones and export gradients.
    Analyze(Common),
    /// Schelling diagram for company 0 against the number of cooperators.
    Schelling(Common),
    /// Aggregate every summary.csv under the output directory.
    Summarize(Common),
}

#[derive(Args)]
struct Common {
    /// Config file with [env], [train] and [analyze] sections.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Config file whose [train] section replaces the one in --config.
    #[arg(long)]
    train_config: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', default_value = "0")]
    seeds: Vec<u64>,
    #[arg(long, value_delimiter = ',')]
    alphas: Vec<f64>,
    /// Output directory.
    #[arg(long, env = OUT_ENV_VAR, default_value = "runs")]
    out: PathBuf,
    /// Reduced profile: 8 environments, at most 2M steps, capped mitigation.
    #[arg(long)]
    desk_scale: bool,
    /// Continue runs from their checkpoints.
    #[arg(long)]
    resume: bool,
}

impl Common {
    fn spec(self, command: Command) -> ExperimentSpec {
        ExperimentSpec {
            config: self.config,
            train_config: self.train_config,
            seeds: self.seeds,
            alphas: self.alphas,
            desk_scale: self.desk_scale,
            resume: self.resume,
            ..ExperimentSpec::new(command, self.out)
        }
    }
}

fn fail(e: Error) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(if e.is_config() { EXIT_CONFIG } else { EXIT_RUNTIME })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Cmd::Train(c) => experiment::run_train(&c.spec(Command::Train)).map(|runs| {
            for r in &runs {
                println!(
                    "{}: mtw {:.2} mitigation {:.3} risk {:.3}",
                    r.dir.display(),
                    r.summary.market_total_wealth,
                    r.summary.final_mitigation,
                    r.summary.final_climate_risk
                );
            }
        }),
        Cmd::Simulate { common, rates } => {
            let spec = ExperimentSpec {
                rates,
                ..common.spec(Command::Simulate)
            };
            experiment::run_simulate(&spec).map(|rows| {
                for r in &rows {
                    println!(
                        "alpha {} {} seed {}: mtw {:.2} mitigation {:.3}",
                        r.alpha, r.algorithm, r.seed, r.market_total_wealth, r.final_mitigation
                    );
                }
            })
        }
        Cmd::Sweep {
            common,
            algorithms,
            parallelism,
        } => {
            let spec = ExperimentSpec {
                algorithms,
                parallelism,
                ..common.spec(Command::Sweep)
            };
            match experiment::run_sweep(&spec) {
                Ok(report) => {
                    for a in &report.aggregates {
                        println!(
                            "alpha {} {}: mtw {:.2} ± {:.2} over {} runs",
                            a.alpha, a.algorithm, a.market_total_wealth_mean, a.market_total_wealth_std, a.runs
                        );
                    }
                    if report.is_partial() {
                        for f in &report.failures {
                            eprintln!("failed: alpha {} {} seed {}: {}", f.alpha, f.algorithm, f.seed, f.error);
                        }
                        return ExitCode::from(EXIT_PARTIAL);
                    }
                    Ok(())
                }
                Err(e) => Err(e),
            }
        }
        Cmd::Analyze(c) => experiment::run_analyze(&c.spec(Command::Analyze)).map(|report| {
            for r in &report.thresholds {
                println!(
                    "alpha {}: {:?} (lambda_low {:.4}, lambda_critical {:.4})",
                    r.alpha, r.zone, r.lambda_low, r.lambda_critical
                );
            }
        }),
        Cmd::Schelling(c) => experiment::run_schelling(&c.spec(Command::Schelling)).map(|rows| {
            for r in &rows {
                println!(
                    "alpha {} cooperators {}: coop {:.2} defect {:.2}",
                    r.alpha, r.num_cooperators, r.payoff_coop, r.payoff_defect
                );
            }
        }),
        Cmd::Summarize(c) => experiment::run_summarize(&c.spec(Command::Summarize)).map(|rows| {
            for a in &rows {
                println!(
                    "alpha {} {}: mtw {:.2} ± {:.2}, mitigation {:.3} ± {:.3}",
                    a.alpha,
                    a.algorithm,
                    a.market_total_wealth_mean,
                    a.market_total_wealth_std,
                    a.final_mitigation_mean,
                    a.final_mitigation_std
                );
            }
        }),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(e),
    }
}
