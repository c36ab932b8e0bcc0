use clap::{Parser, Subcommand};
use graphsplit::analysis::{check_beta_condition, check_gamma_condition, ConditionReport};
use graphsplit::harness::{reproduce, run_experiment, selftest, Figure, RunConfig, Scale};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "graphsplit",
    about = "Asynchronous decentralised consensus optimisation over subgraph covers"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment described by a flat key-value config file.
    Run {
        /// Path to the config (`key = value` lines, `#` comments).
        config: PathBuf,
    },
    /// Regenerate the CSV bundle for a published experiment.
    Reproduce {
        /// pr_fig3 | pr_fig4 | spca_fig5
        figure: String,
        /// desk (shrunk dimension, minutes) or paper (full size)
        #[arg(long, default_value = "desk")]
        scale: String,
        /// Output root; defaults to $GRAPHSPLIT_OUT or ./out
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate the step-size/penalty feasibility condition.
    CheckCondition {
        /// Step size (exclusive with --beta).
        #[arg(long)]
        gamma: Option<f64>,
        /// Penalty parameter (exclusive with --gamma).
        #[arg(long)]
        beta: Option<f64>,
        /// Gradient Lipschitz constant L.
        #[arg(long, short = 'l')]
        lipschitz: f64,
        /// Weak convexity modulus.
        #[arg(long, default_value_t = 0.0)]
        weak_convexity: f64,
        /// Total stacked coordinates p.
        #[arg(long, default_value_t = 1000)]
        p: usize,
        /// Active coordinates per step.
        #[arg(long)]
        active: usize,
    },
    /// Run the built-in property suite.
    Selftest {
        /// Negative control: corrupt an inactive block and expect a failure.
        #[arg(long, hide = true)]
        inject_fault: bool,
    },
}

fn print_report(r: &ConditionReport) {
    match r.beta {
        Some(b) => println!("beta = {b} (gamma = {})", r.gamma),
        None => println!("gamma = {}", r.gamma),
    }
    println!("L = {}, ell = {}, p = {}, active = {}", r.lipschitz, r.weak_convexity, r.p, r.c_size);
    println!("condition value = {} => {}", r.value, if r.feasible { "feasible" } else { "infeasible" });
    if let Some(f) = r.minimal_fraction {
        println!("minimal activation fraction at this step size = {f:.6}");
    } else {
        println!("infeasible even at full activation for this step size");
    }
    if let Some(b) = r.minimal_beta {
        println!("minimal feasible beta at this fraction = {b:.6}");
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { config } => RunConfig::parse_file(&config).and_then(|cfg| {
            let art = run_experiment(&cfg)?;
            println!("wrote {}", art.run_csv.display());
            println!("wrote {}", art.summary.display());
            if let Some(dev) = art.equivalence_max_dev {
                println!("equivalence max deviation = {dev:e}");
                if dev > 1e-9 {
                    return Err(graphsplit::Error::Config {
                        line: None,
                        msg: format!("equivalence deviation {dev:e} exceeds 1e-9"),
                    });
                }
            }
            Ok(())
        }),
        Command::Reproduce { figure, scale, out } => figure
            .parse::<Figure>()
            .and_then(|fig| Ok((fig, scale.parse::<Scale>()?)))
            .and_then(|(fig, scale)| {
                let root = out.unwrap_or_else(RunConfig::default_output_dir);
                reproduce(fig, scale, &root)?;
                println!("bundle written under {}", root.display());
                Ok(())
            }),
        Command::CheckCondition {
            gamma,
            beta,
            lipschitz,
            weak_convexity,
            p,
            active,
        } => match (gamma, beta) {
            (Some(g), None) => {
                print_report(&check_gamma_condition(g, lipschitz, weak_convexity, p, active));
                Ok(())
            }
            (None, Some(b)) => {
                check_beta_condition(b, lipschitz, weak_convexity, p, active)
                    .map(|r| print_report(&r))
            }
            _ => Err(graphsplit::Error::Config {
                line: None,
                msg: "pass exactly one of --gamma or --beta".into(),
            }),
        },
        Command::Selftest { inject_fault } => {
            let mut stdout = std::io::stdout();
            match selftest(inject_fault, &mut stdout) {
                Ok(true) => Ok(()),
                Ok(false) => return ExitCode::FAILURE,
                Err(e) => Err(e),
            }
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
