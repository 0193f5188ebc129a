use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use satdesign::discovery::fit_py;
use satdesign::factorial::{d_efficiency, DesignProblem, FactorSpace, ModelSpec};
use satdesign::optimizer::{brute_force_optimum, Algorithm, SearchConfig};
use satdesign::runner::{
    self, report_dir, resume_with, run_to_completion_with, write_report, write_summary, IterationReport, RunConfig,
    RunState, StopReason,
};
use satdesign::species::FrequencyVector;

#[derive(Parser)]
#[command(name = "satdesign", version, about = "Saturated D-optimal designs with a discovery-probability stopping rule")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Start a new run.
    Run {
        /// Level counts, e.g. 2,2,2,2,2,2,2
        #[arg(long)]
        factors: FactorSpace,
        /// "main", "main+2fi", or a term list such as "1 + A1 + A2 + A1*A2"
        #[arg(long, default_value = "main")]
        model: String,
        #[arg(long, default_value = "exchange")]
        algorithm: Algorithm,
        #[arg(long, default_value_t = 10)]
        tries: usize,
        #[arg(long = "p-star", default_value_t = 0.10)]
        p_star: f64,
        #[arg(long = "max-iter", default_value_t = 1000)]
        max_iter: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Continue a saved run with a new threshold and iteration budget.
    Resume {
        #[arg(long)]
        state: PathBuf,
        #[arg(long = "p-star")]
        p_star: f64,
        /// Additional iterations allowed.
        #[arg(long = "max-iter")]
        max_iter: u64,
    },
    /// Forecast the discovery probability after m more iterations.
    Forecast {
        #[arg(long)]
        state: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        m: Vec<u64>,
    },
    /// Fit the discovery model to a frequency file of "r,l_r" lines.
    FitDiscovery {
        #[arg(long)]
        counts: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "0,100,500,1000,2000,5000")]
        m: Vec<u64>,
    },
    /// Enumerate every saturated design of a small problem.
    BruteForce {
        #[arg(long)]
        factors: FactorSpace,
        #[arg(long, default_value = "main")]
        model: String,
    },
    /// Rewrite the report files next to a state file.
    Report {
        #[arg(long)]
        state: PathBuf,
    },
}

fn main() -> ExitCode {
    match dispatch(Cli::parse().command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn stop_code(reason: StopReason) -> ExitCode {
    match reason {
        StopReason::ThresholdReached => ExitCode::SUCCESS,
        StopReason::MaxIterations => ExitCode::from(2),
        StopReason::Running => ExitCode::from(1),
    }
}

fn progress(r: &IterationReport) {
    let u = r.u_now.map_or_else(|| "-".to_string(), |u| format!("{u:.4}"));
    let tag = if r.new_species { " new" } else { "" };
    eprintln!("iteration {:>5}  species {}{}  U {}", r.iteration, r.key, tag, u);
}

fn print_summary(state: &RunState) -> Result<()> {
    write_summary(state, std::io::stdout().lock())?;
    Ok(())
}

fn dispatch(command: Command) -> Result<ExitCode> {
    match command {
        Command::Run {
            factors,
            model,
            algorithm,
            tries,
            p_star,
            max_iter,
            seed,
            out,
        } => {
            let model = ModelSpec::parse(&model, &factors)?;
            let config = RunConfig {
                space: factors,
                model,
                search: SearchConfig {
                    algorithm,
                    tries,
                    seed,
                    ..SearchConfig::default()
                },
                p_star,
                m_star: max_iter,
                out_dir: out,
            };
            let state = run_to_completion_with(&config, progress)?;
            print_summary(&state)?;
            Ok(stop_code(state.stop_reason))
        }
        Command::Resume {
            state,
            p_star,
            max_iter,
        } => {
            let state = resume_with(&state, p_star, max_iter, progress)?;
            print_summary(&state)?;
            Ok(stop_code(state.stop_reason))
        }
        Command::Forecast { state, m } => {
            let state = RunState::load(&state)?;
            println!("m,u");
            for (m, u) in runner::forecast(&state, &m)? {
                println!("{m},{u:.6}");
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::FitDiscovery { counts, m } => {
            let text = fs::read_to_string(&counts).with_context(|| format!("reading {}", counts.display()))?;
            let fv = FrequencyVector::parse_pairs(&text)?;
            let est = fit_py(&fv)?;
            println!("n: {}", est.n);
            println!("j: {}", est.j);
            println!("sigma: {:.6}", est.params.sigma);
            println!("theta: {:.6}", est.params.theta);
            println!("log-likelihood: {:.6}", est.log_lik);
            println!("discovery probability: {:.6}", est.u_now);
            println!("m,u");
            for m in m {
                println!("{m},{:.6}", est.forecast(m));
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::BruteForce { factors, model } => {
            let model = ModelSpec::parse(&model, &factors)?;
            let problem = DesignProblem::new(factors, model)?;
            let bf = brute_force_optimum(&problem)?;
            println!("subsets: {}", bf.subsets);
            println!("max D: {}", bf.max_d);
            println!("efficiency: {:.4}", d_efficiency(bf.max_d, problem.p()));
            let keys: Vec<String> = bf.species.iter().rev().map(|k| k.to_string()).collect();
            println!("species ({}): {}", keys.len(), keys.join(" "));
            println!("best design:");
            for &idx in &bf.best_points {
                let row: Vec<String> = problem.candidates()[idx].iter().map(|l| l.to_string()).collect();
                println!("{}", row.join(","));
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Report { state: path } => {
            let state = RunState::load(&path)?;
            let problem = state.problem()?;
            let paths = write_report(&state, &problem, report_dir(&path))?;
            print_summary(&state)?;
            println!("species table: {}", paths.species.display());
            Ok(ExitCode::SUCCESS)
        }
    }
}
