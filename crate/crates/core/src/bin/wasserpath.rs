use clap::{Args, Parser, Subcommand};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;
use wasserpath::experiments::{
    ExperimentConfig, RateReport, SuiteReport, fmt_f64, run_lookback_bias, run_marginal_rate, run_ot_check,
    run_pathwise_rate, run_strong_rate, run_verify, with_workers,
};

#[derive(Parser)]
#[command(name = "wasserpath", version, about = "Euler-scheme rate experiments for one-dimensional diffusions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// E[sup_k |X - Xbar|^2]^(1/2) over grid.N
    StrongRate(Common),
    /// sup_t W_p between diffusion and Euler marginal laws
    MarginalRate(Common),
    /// Bridge coupling error against the synchronous Euler error
    PathwiseRate(Common),
    /// Lookback payoff bias with bridge maxima
    LookbackBias(Common),
    /// Verification suite
    Verify(Common),
    /// Sorted matching against brute-force optimal transport
    OtCheck(Common),
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// Output directory (default: `output.dir` from the config, else `out/<command>`)
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides `seed` from the config
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (default: all cores); results do not depend on it
    #[arg(long)]
    workers: Option<usize>,
    /// Directory for marginal laws at T (marginal-rate only)
    #[arg(long)]
    dump_laws: Option<PathBuf>,
}

fn print_rate(r: &RateReport) {
    println!("{} ({}), {}", r.experiment, r.model, r.estimate_label);
    println!("{:>6} {:>5} {:>24} {:>24} {:>8}", "N", "m", "estimate", "std_error", "censored");
    for row in &r.rows {
        println!("{:>6} {:>5} {:>24} {:>24} {:>8}", row.n, row.m, fmt_f64(row.estimate), fmt_f64(row.std_error), row.censored);
    }
    match &r.fit {
        Some(f) => println!(
            "slope {:.4} (95% CI {:.4} .. {:.4}), R^2 {:.4}, {} points",
            f.slope, f.slope_ci.0, f.slope_ci.1, f.r_squared, f.points
        ),
        None => println!("no fit"),
    }
    for n in &r.notes {
        println!("note: {n}");
    }
}

fn print_suite(r: &SuiteReport) {
    for c in &r.checks {
        println!("{} {:<40} value {:>12.4e} threshold {:>10.3e}  {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.value, c.threshold, c.detail);
    }
    println!("{}: {}", r.experiment, if r.passed { "all checks passed" } else { "some checks failed" });
}

fn run(name: &str, cmd: &Command, args: &Common) -> wasserpath::Result<bool> {
    let cfg = ExperimentConfig::from_file(&args.config, args.seed)?;
    let out = args.out.clone().or_else(|| cfg.output_dir.clone()).unwrap_or_else(|| Path::new("out").join(name));
    let start = Instant::now();
    let passed = with_workers(args.workers, || -> wasserpath::Result<bool> {
        match cmd {
            Command::StrongRate(_) => {
                let r = run_strong_rate(&cfg)?;
                r.write(&out)?;
                print_rate(&r);
            }
            Command::MarginalRate(_) => {
                let r = run_marginal_rate(&cfg, args.dump_laws.as_deref())?;
                r.write(&out)?;
                print_rate(&r);
            }
            Command::PathwiseRate(_) => {
                let r = run_pathwise_rate(&cfg)?;
                r.write(&out)?;
                print_rate(&r.report);
            }
            Command::LookbackBias(_) => {
                let r = run_lookback_bias(&cfg)?;
                r.write(&out)?;
                print_rate(&r);
            }
            Command::Verify(_) => {
                let r = run_verify(&cfg)?;
                r.write(&out)?;
                print_suite(&r);
                return Ok(r.passed);
            }
            Command::OtCheck(_) => {
                let r = run_ot_check(&cfg)?;
                r.write(&out)?;
                print_suite(&r);
                return Ok(r.passed);
            }
        }
        Ok(true)
    })??;
    eprintln!("wrote {} in {:.1} s", out.display(), start.elapsed().as_secs_f64());
    Ok(passed)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (name, args) = match &cli.command {
        Command::StrongRate(a) => ("strong-rate", a),
        Command::MarginalRate(a) => ("marginal-rate", a),
        Command::PathwiseRate(a) => ("pathwise-rate", a),
        Command::LookbackBias(a) => ("lookback-bias", a),
        Command::Verify(a) => ("verify", a),
        Command::OtCheck(a) => ("ot-check", a),
    };
    match run(name, &cli.command, args) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
