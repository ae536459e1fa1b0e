//! `lab` — asymptotic predictions, finite-sample simulations and sweep grids
//! for standard/robust risks of linear models in the proportional regime.
//!
//! Exit codes: 0 ok, 2 usage, 3 numerical non-convergence, 4 i/o.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ndarray::Array1;
use rand::Rng;
use rand_distr::StandardNormal;

use proprisk::data::{
    decompose, default_theta_star, generate_dataset, seeded_rng, PerturbationNorm, ProblemConfig,
    Task,
};
use proprisk::linreg::{linreg_asymptotics, min_norm_fit, optimal_lambda, ridge_fit, LambdaGrid};
use proprisk::logreg::{fit_max_margin, fit_regularized, FitOptions};
use proprisk::numerics::QuadratureGrid;
use proprisk::risks::{classification_risks, monte_carlo_risk, regression_risks};
use proprisk::sweep::{emit, preset, run_sweep, OutputFormat, SweepSpec};
use proprisk::theory::{solve_nonseparable, solve_separable};
use proprisk::Error;

#[derive(Parser)]
#[command(name = "lab", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Exact asymptotic predictions (no data involved).
    #[command(subcommand)]
    Theory(TheoryCmd),
    /// Finite-sample simulation of a single configuration.
    #[command(subcommand)]
    Sim(SimCmd),
    /// Run a sweep grid and write CSV / JSON-lines rows.
    Sweep(SweepArgs),
    /// Monte Carlo cross-checks of the closed-form risks.
    #[command(subcommand)]
    Oracle(OracleCmd),
}

#[derive(Subcommand)]
enum TheoryCmd {
    /// Ridge / min-norm linear regression risks.
    Linreg(TheoryLinreg),
    /// Adversarially trained logistic regression risks.
    Logreg(TheoryLogreg),
}

#[derive(Args)]
struct TheoryLinreg {
    #[arg(long)]
    gamma: f64,
    #[arg(long, default_value_t = 0.0)]
    lambda: f64,
    #[arg(long, default_value_t = 0.0)]
    sigma2: f64,
    #[arg(long, default_value_t = 0.0)]
    eps: f64,
    /// Also search for the robust-risk-optimal lambda.
    #[arg(long)]
    optimize_lambda: bool,
}

#[derive(Args)]
struct TheoryLogreg {
    #[arg(long)]
    gamma: f64,
    /// Dimension-normalized attack radius eps0 = eps sqrt(d).
    #[arg(long)]
    eps0: f64,
    /// Ridge weight; mutually exclusive with --separable.
    #[arg(long, conflicts_with = "separable")]
    lambda: Option<f64>,
    /// Solve the robust max-margin regime instead.
    #[arg(long)]
    separable: bool,
    #[arg(long, default_value_t = 0.0)]
    flip: f64,
}

#[derive(Subcommand)]
enum SimCmd {
    Linreg(SimLinreg),
    Logreg(SimLogreg),
}

#[derive(Args)]
struct SimLinreg {
    #[arg(long)]
    gamma: f64,
    #[arg(long, default_value_t = 0.0)]
    lambda: f64,
    #[arg(long, default_value_t = 0.0)]
    sigma2: f64,
    #[arg(long, default_value_t = 0.4)]
    eps: f64,
    #[arg(long, default_value_t = 1000)]
    n: usize,
    #[arg(long, default_value_t = 1)]
    seeds: usize,
    #[arg(long, default_value_t = 1)]
    base_seed: u64,
}

#[derive(Args)]
struct SimLogreg {
    #[arg(long)]
    gamma: f64,
    /// Ridge weight; 0 requests the robust max-margin interpolator.
    #[arg(long, default_value_t = 0.0)]
    lambda: f64,
    #[arg(long, default_value_t = 0.05)]
    eps: f64,
    #[arg(long, default_value_t = 0.0)]
    flip: f64,
    #[arg(long, default_value_t = 1000)]
    n: usize,
    #[arg(long, default_value_t = 1)]
    seeds: usize,
    #[arg(long, default_value_t = 1)]
    base_seed: u64,
    /// Train with inconsistent (unrestricted) perturbations.
    #[arg(long)]
    inconsistent: bool,
}

#[derive(Args)]
struct SweepArgs {
    /// Preset name: fig2a fig2b fig3 fig4a fig4b fig5 fig6.
    #[arg(long, conflicts_with = "spec")]
    preset: Option<String>,
    /// JSON file describing a SweepSpec.
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// csv or jsonl.
    #[arg(long, default_value = "csv")]
    format: String,
    /// Override the number of seeds.
    #[arg(long)]
    seeds: Option<usize>,
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Record wall-clock times (makes output non-reproducible).
    #[arg(long)]
    timing: bool,
}

#[derive(Subcommand)]
enum OracleCmd {
    /// Compare closed-form risks against Monte Carlo with the explicit
    /// worst-case perturbation, for a random estimator.
    Risks(OracleRisks),
}

#[derive(Args)]
struct OracleRisks {
    #[arg(long, value_parser = parse_task)]
    task: Task,
    #[arg(long, default_value_t = 1_000_000)]
    samples: usize,
    #[arg(long, default_value_t = 0.4)]
    eps: f64,
    #[arg(long, default_value_t = 8)]
    d: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

fn parse_task(s: &str) -> Result<Task, String> {
    match s {
        "regression" => Ok(Task::Regression),
        "classification" => Ok(Task::Classification),
        _ => Err("expected 'regression' or 'classification'".into()),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let code = match e {
                Error::Config(_) | Error::Domain(_) => 2,
                Error::Io { .. } => 4,
                _ => 3,
            };
            ExitCode::from(code)
        }
    }
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Theory(TheoryCmd::Linreg(a)) => theory_linreg(a),
        Command::Theory(TheoryCmd::Logreg(a)) => theory_logreg(a),
        Command::Sim(SimCmd::Linreg(a)) => sim_linreg(a),
        Command::Sim(SimCmd::Logreg(a)) => sim_logreg(a),
        Command::Sweep(a) => sweep(a),
        Command::Oracle(OracleCmd::Risks(a)) => oracle_risks(a),
    }
}

fn theory_linreg(a: TheoryLinreg) -> Result<(), Error> {
    let asym = linreg_asymptotics(a.lambda, a.gamma, a.sigma2, a.eps)?;
    println!(
        "gamma={} lambda={} sigma2={} eps={}",
        a.gamma, a.lambda, a.sigma2, a.eps
    );
    println!(
        "m={:.12e} bias={:.12e} variance={:.12e}",
        asym.m, asym.bias, asym.variance
    );
    println!(
        "sr={:.12e} perp_mass={:.12e} ar={:.12e}",
        asym.sr, asym.perp_mass, asym.ar
    );
    if a.optimize_lambda {
        let (l, ar) = optimal_lambda(a.gamma, a.sigma2, a.eps, &LambdaGrid::default())?;
        println!("lambda_opt={l:.12e} ar_opt={ar:.12e}");
    }
    Ok(())
}

fn theory_logreg(a: TheoryLogreg) -> Result<(), Error> {
    let grid = QuadratureGrid::default_grid();
    let pred = if a.separable {
        solve_separable(a.gamma, a.eps0, a.flip, None, &grid)?
    } else {
        let lambda = a.lambda.ok_or_else(|| {
            Error::Config("pass --lambda or --separable".into())
        })?;
        solve_nonseparable(a.gamma, a.eps0, lambda, a.flip, None, &grid)?
    };
    let (nu_par, nu_perp, delta) = pred.alignment();
    println!(
        "regime={:?} gamma={} eps0={} flip={}",
        pred.regime, a.gamma, a.eps0, a.flip
    );
    println!("nu_par={nu_par:.12e} nu_perp={nu_perp:.12e} delta={delta:.12e}");
    println!(
        "sr={:.12e} ar={:.12e} residual_norm={:.3e}",
        pred.sr, pred.ar, pred.residual_norm
    );
    Ok(())
}

fn sim_linreg(a: SimLinreg) -> Result<(), Error> {
    let d = (a.gamma * a.n as f64).round() as usize;
    println!("seed,sr,ar,nu_par,perp_l2");
    for seed_ix in 0..a.seeds {
        let config = ProblemConfig {
            d,
            n: a.n,
            task: Task::Regression,
            sigma2: a.sigma2,
            label_flip_prob: 0.0,
            eps_train: 0.0,
            eps_test: a.eps,
            perturbation_norm: PerturbationNorm::L2,
            consistent: true,
            lambda: a.lambda,
            seed: a.base_seed.wrapping_add(seed_ix as u64),
        };
        let ds = generate_dataset(&config, &default_theta_star(d))?;
        let est = if a.lambda > 0.0 {
            ridge_fit(&ds, a.lambda)?
        } else {
            min_norm_fit(&ds)?
        };
        let risks = regression_risks(&est, a.eps);
        println!(
            "{seed_ix},{:.12e},{:.12e},{:.12e},{:.12e}",
            risks.sr, risks.ar, est.nu_par, est.perp_l2
        );
    }
    Ok(())
}

fn sim_logreg(a: SimLogreg) -> Result<(), Error> {
    let d = (a.gamma * a.n as f64).round() as usize;
    println!("seed,sr,ar,nu_par,perp_l2,perp_l1_scaled,robust_margin,l1_over_l2,status");
    for seed_ix in 0..a.seeds {
        let config = ProblemConfig {
            d,
            n: a.n,
            task: Task::Classification,
            sigma2: 0.0,
            label_flip_prob: a.flip,
            eps_train: a.eps,
            eps_test: a.eps,
            perturbation_norm: PerturbationNorm::Linf,
            consistent: !a.inconsistent,
            lambda: a.lambda,
            seed: a.base_seed.wrapping_add(seed_ix as u64),
        };
        let ds = generate_dataset(&config, &default_theta_star(d))?;
        let opts = FitOptions::default();
        let (fit, status) = if a.lambda > 0.0 {
            (
                fit_regularized(&ds, a.eps, config.perturbation_norm, config.consistent, a.lambda, &opts)?,
                "ok",
            )
        } else {
            match fit_max_margin(&ds, a.eps, config.perturbation_norm, config.consistent, &opts) {
                Ok(fit) => (fit, "ok"),
                Err(Error::Infeasible(_)) => (
                    fit_regularized(
                        &ds,
                        a.eps,
                        config.perturbation_norm,
                        config.consistent,
                        1e-6,
                        &opts,
                    )?,
                    "maxmargin infeasible; lambda=1e-6 fit",
                ),
                Err(e) => return Err(e),
            }
        };
        let risks = classification_risks(&fit.estimator, a.eps)?;
        println!(
            "{seed_ix},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{status}",
            risks.sr,
            risks.ar,
            fit.estimator.nu_par,
            fit.estimator.perp_l2,
            fit.estimator.perp_l1 / (d as f64).sqrt(),
            fit.robust_margin,
            fit.l1_over_l2
        );
    }
    Ok(())
}

fn sweep(a: SweepArgs) -> Result<(), Error> {
    let mut spec: SweepSpec = match (&a.preset, &a.spec) {
        (Some(name), None) => preset(name)?,
        (None, Some(path)) => {
            let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
                path: path.display().to_string(),
                source,
            })?;
            serde_json::from_str(&text)
                .map_err(|e| Error::Config(format!("bad spec file: {e}")))?
        }
        _ => return Err(Error::Config("pass exactly one of --preset / --spec".into())),
    };
    if let Some(seeds) = a.seeds {
        spec.seeds = seeds;
    }
    spec.timing = a.timing;
    if let Ok(base_seed) = std::env::var("LAB_BASE_SEED") {
        spec.base.seed = base_seed
            .parse()
            .map_err(|_| Error::Config("LAB_BASE_SEED must be an integer".into()))?;
    }
    let format = match a.format.as_str() {
        "csv" => OutputFormat::Csv,
        "jsonl" | "json-lines" => OutputFormat::JsonLines,
        other => return Err(Error::Config(format!("unknown format '{other}'"))),
    };
    let rows = run_sweep(&spec, a.jobs)?;
    emit(&rows, format, &a.out)?;
    eprintln!("wrote {} rows to {}", rows.len(), a.out.display());
    Ok(())
}

fn oracle_risks(a: OracleRisks) -> Result<(), Error> {
    let theta_star = default_theta_star(a.d);
    let mut rng = seeded_rng(a.seed, "oracle.estimator", &[a.d as u64]);
    let theta = Array1::from_iter((0..a.d).map(|_| rng.sample::<f64, _>(StandardNormal)));
    let est = decompose(&theta, &theta_star);
    let (norm, consistent) = match a.task {
        Task::Regression => (PerturbationNorm::L2, true),
        Task::Classification => (PerturbationNorm::Linf, true),
    };
    let closed = match a.task {
        Task::Regression => {
            let r = regression_risks(&est, a.eps);
            (r.sr, r.ar)
        }
        Task::Classification => {
            let r = classification_risks(&est, a.eps)?;
            (r.sr, r.ar)
        }
    };
    let mc = monte_carlo_risk(
        &est, &theta_star, a.eps, norm, consistent, a.task, a.samples, a.seed,
    )?;
    println!("closed: sr={:.9e} ar={:.9e}", closed.0, closed.1);
    println!(
        "montecarlo: sr={:.9e} (se {:.2e})  ar={:.9e} (se {:.2e})",
        mc.sr, mc.sr_stderr, mc.ar, mc.ar_stderr
    );
    let sr_gap = (mc.sr - closed.0).abs() / mc.sr_stderr.max(1e-12);
    let ar_gap = (mc.ar - closed.1).abs() / mc.ar_stderr.max(1e-12);
    println!("gaps: sr {sr_gap:.2} se, ar {ar_gap:.2} se");
    if sr_gap > 4.0 || ar_gap > 4.0 {
        return Err(Error::Evaluation(
            "Monte Carlo disagrees with the closed form beyond 4 standard errors".into(),
        ));
    }
    Ok(())
}
