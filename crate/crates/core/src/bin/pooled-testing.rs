//! Command-line interface: closed-form ETI evaluation, the reference
//! tables, (r, s) optimization, explicit design export, seeded Monte
//! Carlo simulation, and the asymptotic rate curve as CSV.

use clap::{Args, Parser, Subcommand, ValueEnum};
use pooled_testing::analytic::{self, rate_point};
use pooled_testing::design::{
    grid_design, hypercube_design, random_regular_design, write_code_csv, write_design_csv,
    SaffronBlockCode,
};
use pooled_testing::error::Error;
use pooled_testing::model::{DesignParams, PracticalParams};
use pooled_testing::optimize::{optimize_design, reference_grid};
use pooled_testing::simulate::{
    simulate_individual, simulate_saffron, simulate_two_stage, SimulationConfig,
};
use serde_json::json;
use std::fs::File;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "pooled-testing",
    version,
    about = "Pooled-testing design, evaluation and simulation under a fixed test budget"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Pretty,
    Csv,
    Json,
}

#[derive(Args)]
struct OutputOpts {
    /// Output format.
    #[arg(long, value_enum, default_value = "pretty")]
    format: Format,
    /// Write to this file instead of standard output.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Significant figures for displayed values.
    #[arg(long, default_value_t = 3)]
    sig_figs: u32,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SimMode {
    TwoStage,
    Individual,
    Saffron,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum DesignCli {
    Random,
    Grid,
    Hypercube,
    Saffron,
}

#[derive(Subcommand)]
enum Command {
    /// Closed-form ETI of a testing scheme.
    Eti {
        /// Prevalence, in (0,1).
        #[arg(long)]
        p: f64,
        /// Test sensitivity, in (0,1].
        #[arg(long)]
        u: f64,
        /// Stage-1 tests per individual.
        #[arg(long, conflicts_with = "individual")]
        r: Option<u32>,
        /// Individuals per stage-1 pool.
        #[arg(long, conflicts_with = "individual")]
        s: Option<u32>,
        /// Evaluate individual non-pooled testing.
        #[arg(long)]
        individual: bool,
        #[command(flatten)]
        out: OutputOpts,
    },
    /// Reference ETI tables over the standard prevalence/sensitivity grid.
    Tables {
        /// 1 = individual testing, 2 = optimized pooled testing.
        #[arg(long, value_parser = clap::value_parser!(u8).range(1..=2))]
        which: u8,
        #[arg(long, default_value_t = 5)]
        r_max: u32,
        #[arg(long, default_value_t = 200)]
        s_max: u32,
        #[command(flatten)]
        out: OutputOpts,
    },
    /// Exhaustive (r, s) search minimizing ETI.
    Optimize {
        #[arg(long)]
        p: f64,
        #[arg(long)]
        u: f64,
        #[arg(long, default_value_t = 5)]
        r_max: u32,
        #[arg(long, default_value_t = 200)]
        s_max: u32,
        #[command(flatten)]
        out: OutputOpts,
    },
    /// Seeded Monte Carlo simulation; emits a JSON report.
    Simulate {
        #[arg(long, value_enum)]
        mode: SimMode,
        /// Prevalence, in (0,1).
        #[arg(long)]
        p: f64,
        /// Sensitivity; required for the practical-model modes.
        #[arg(long)]
        u: Option<f64>,
        /// Stage-1 design family for two-stage mode.
        #[arg(long, value_enum, default_value = "random")]
        kind: DesignCli,
        #[arg(long)]
        r: Option<u32>,
        #[arg(long)]
        s: Option<u32>,
        /// Hypercube side length.
        #[arg(long)]
        a: Option<u32>,
        /// Individuals per replicate (population for saffron mode).
        #[arg(long)]
        m: usize,
        #[arg(long, default_value_t = 100)]
        replicates: usize,
        /// RNG seed; always explicit, never taken from the environment.
        #[arg(long)]
        seed: u64,
        /// Worker threads; must not change any result.
        #[arg(long)]
        threads: Option<usize>,
        /// Write the JSON report to this file instead of standard output.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Construct an explicit design and export it as CSV.
    Design {
        #[arg(long, value_enum)]
        kind: DesignCli,
        /// Number of individuals (ignored for saffron codes).
        #[arg(long, default_value_t = 0)]
        m: usize,
        #[arg(long)]
        r: Option<u32>,
        #[arg(long)]
        s: Option<u32>,
        /// Hypercube side length.
        #[arg(long)]
        a: Option<u32>,
        /// Block size for saffron codes (power of two).
        #[arg(long)]
        block_size: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Write the CSV to this file instead of standard output.
        #[arg(long)]
        export: Option<PathBuf>,
    },
    /// Asymptotic rate curve over a sparsity-exponent grid, as CSV.
    RateCurve {
        #[arg(long, default_value_t = 0.0)]
        alpha_min: f64,
        #[arg(long, default_value_t = 0.999)]
        alpha_max: f64,
        #[arg(long, default_value_t = 1000)]
        steps: usize,
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code(&err))
        }
    }
}

fn exit_code(err: &CliError) -> u8 {
    match err {
        CliError::Usage(_) => 2,
        CliError::Lib(Error::Infeasible(_)) => 3,
        CliError::Lib(
            Error::InvalidPrevalence(_)
            | Error::InvalidSensitivity(_)
            | Error::InvalidDesign(_)
            | Error::InvalidTheoretical(_),
        ) => 2,
        CliError::Lib(_) => 4,
    }
}

enum CliError {
    Usage(String),
    Lib(Error),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(msg) => write!(f, "{msg}"),
            CliError::Lib(err) => write!(f, "{err}"),
        }
    }
}

impl From<Error> for CliError {
    fn from(err: Error) -> Self {
        CliError::Lib(err)
    }
}

type CliResult = Result<(), CliError>;

fn run(cli: Cli) -> CliResult {
    match cli.command {
        Command::Eti {
            p,
            u,
            r,
            s,
            individual,
            out,
        } => cmd_eti(p, u, r, s, individual, &out),
        Command::Tables {
            which,
            r_max,
            s_max,
            out,
        } => cmd_tables(which, r_max, s_max, &out),
        Command::Optimize {
            p,
            u,
            r_max,
            s_max,
            out,
        } => cmd_optimize(p, u, r_max, s_max, &out),
        Command::Simulate {
            mode,
            p,
            u,
            kind,
            r,
            s,
            a,
            m,
            replicates,
            seed,
            threads,
            output,
        } => cmd_simulate(mode, p, u, kind, r, s, a, m, replicates, seed, threads, output),
        Command::Design {
            kind,
            m,
            r,
            s,
            a,
            block_size,
            seed,
            export,
        } => cmd_design(kind, m, r, s, a, block_size, seed, export),
        Command::RateCurve {
            alpha_min,
            alpha_max,
            steps,
            output,
        } => cmd_rate_curve(alpha_min, alpha_max, steps, output),
    }
}

/// Render `x` with the given number of significant figures.
fn format_sig(x: f64, sig: u32) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let exp = x.abs().log10().floor() as i32;
    let decimals = sig as i32 - 1 - exp;
    if decimals <= 0 {
        let scale = 10f64.powi(-decimals);
        format!("{:.0}", (x / scale).round() * scale)
    } else {
        format!("{:.*}", decimals as usize, x)
    }
}

fn emit(path: &Option<PathBuf>, body: &str) -> CliResult {
    match path {
        Some(path) => {
            let mut file = File::create(path).map_err(Error::from)?;
            file.write_all(body.as_bytes()).map_err(Error::from)?;
        }
        None => print!("{body}"),
    }
    Ok(())
}

fn cmd_eti(
    p: f64,
    u: f64,
    r: Option<u32>,
    s: Option<u32>,
    individual: bool,
    out: &OutputOpts,
) -> CliResult {
    let params = PracticalParams::new(p, u)?;
    let sig = out.sig_figs.max(1);
    let body = if individual {
        let eti = analytic::eti_individual(&params);
        match out.format {
            Format::Pretty => format!("ETI (individual testing): {}\n", format_sig(eti, sig)),
            Format::Csv => format!("p,u,r,s,eti\n{p},{u},1,1,{eti}\n"),
            Format::Json => format!(
                "{}\n",
                serde_json::to_string_pretty(&json!({
                    "p": p, "u": u, "r": 1, "s": 1, "eti": eti
                }))
                .expect("serializable")
            ),
        }
    } else {
        let (r, s) = match (r, s) {
            (Some(r), Some(s)) => (r, s),
            _ => {
                return Err(CliError::Usage(
                    "provide both --r and --s, or --individual".into(),
                ))
            }
        };
        let b = analytic::eti_pooled_rs(&params, r, s)?;
        match out.format {
            Format::Pretty => format!(
                "ETI (r = {r}, s = {s}): {}\n  stage-1 tests per individual: {}\n  stage-2 tests per individual: {}\n  find probability per individual: {}\n",
                format_sig(b.eti, sig),
                format_sig(b.stage1_tests_per_individual, sig),
                format_sig(b.stage2_tests_per_individual, sig),
                format_sig(b.find_probability_per_individual, sig),
            ),
            Format::Csv => format!(
                "p,u,r,s,stage1_tests_per_individual,stage2_tests_per_individual,find_probability_per_individual,eti\n{p},{u},{r},{s},{},{},{},{}\n",
                b.stage1_tests_per_individual,
                b.stage2_tests_per_individual,
                b.find_probability_per_individual,
                b.eti,
            ),
            Format::Json => format!(
                "{}\n",
                serde_json::to_string_pretty(&json!({
                    "p": p, "u": u, "r": r, "s": s, "breakdown": b
                }))
                .expect("serializable")
            ),
        }
    };
    emit(&out.output, &body)
}

fn cmd_tables(which: u8, r_max: u32, s_max: u32, out: &OutputOpts) -> CliResult {
    let grid = reference_grid();
    let sig = out.sig_figs.max(1);
    let cells: Vec<(PracticalParams, u32, u32, f64)> = grid
        .iter()
        .map(|params| {
            if which == 1 {
                (*params, 1, 1, analytic::eti_individual(params))
            } else {
                let opt = optimize_design(params, r_max, s_max);
                (*params, opt.design.r(), opt.design.s(), opt.eti)
            }
        })
        .collect();

    let body = match out.format {
        Format::Csv => {
            let mut body = String::from("p,u,r,s,eti\n");
            for (params, r, s, eti) in &cells {
                body.push_str(&format!("{},{},{r},{s},{eti}\n", params.p(), params.u()));
            }
            body
        }
        Format::Json => {
            let rows: Vec<_> = cells
                .iter()
                .map(|(params, r, s, eti)| {
                    json!({"p": params.p(), "u": params.u(), "r": r, "s": s, "eti": eti})
                })
                .collect();
            format!(
                "{}\n",
                serde_json::to_string_pretty(&rows).expect("serializable")
            )
        }
        Format::Pretty => {
            let us: Vec<f64> = vec![0.6, 0.7, 0.8, 0.9];
            let mut body = String::from(if which == 1 {
                "ETI for individual non-pooled testing\n"
            } else {
                "ETI for optimized pooled testing, optimal (r, s) in brackets\n"
            });
            body.push_str("       p");
            for u in &us {
                body.push_str(&format!(" | {:>14}", format!("u = {u}")));
            }
            body.push('\n');
            for row in cells.chunks(us.len()) {
                body.push_str(&format!("{:>8}", row[0].0.p()));
                for (_, r, s, eti) in row {
                    let cell = if which == 1 {
                        format_sig(*eti, sig)
                    } else {
                        format!("{} ({r},{s})", format_sig(*eti, sig))
                    };
                    body.push_str(&format!(" | {cell:>14}"));
                }
                body.push('\n');
            }
            body
        }
    };
    emit(&out.output, &body)
}

fn cmd_optimize(p: f64, u: f64, r_max: u32, s_max: u32, out: &OutputOpts) -> CliResult {
    let params = PracticalParams::new(p, u)?;
    if r_max < 1 || s_max < 2 {
        return Err(CliError::Usage(
            "search bounds must satisfy r-max >= 1 and s-max >= 2".into(),
        ));
    }
    let opt = optimize_design(&params, r_max, s_max);
    let sig = out.sig_figs.max(1);
    let body = match out.format {
        Format::Pretty => {
            let mut body = format!(
                "optimal design: r = {}, s = {} ({:?}), ETI = {}\n",
                opt.design.r(),
                opt.design.s(),
                opt.design.kind(),
                format_sig(opt.eti, sig)
            );
            if let Some((second, eti)) = &opt.runner_up {
                body.push_str(&format!(
                    "runner-up:      r = {}, s = {}, ETI = {}\n",
                    second.r(),
                    second.s(),
                    format_sig(*eti, sig)
                ));
            }
            body
        }
        Format::Csv => format!(
            "p,u,r,s,eti\n{p},{u},{},{},{}\n",
            opt.design.r(),
            opt.design.s(),
            opt.eti
        ),
        Format::Json => format!(
            "{}\n",
            serde_json::to_string_pretty(&json!({
                "p": p, "u": u, "optimum": opt
            }))
            .expect("serializable")
        ),
    };
    emit(&out.output, &body)
}

#[allow(clippy::too_many_arguments)]
fn cmd_simulate(
    mode: SimMode,
    p: f64,
    u: Option<f64>,
    kind: DesignCli,
    r: Option<u32>,
    s: Option<u32>,
    a: Option<u32>,
    m: usize,
    replicates: usize,
    seed: u64,
    threads: Option<usize>,
    output: Option<PathBuf>,
) -> CliResult {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.unwrap_or(0))
        .build()
        .map_err(|e| CliError::Usage(format!("cannot build thread pool: {e}")))?;

    let started = std::time::Instant::now();
    let (report, config_echo) = pool.install(|| -> Result<_, CliError> {
        match mode {
            SimMode::Individual => {
                let params = practical(p, u)?;
                let report = simulate_individual(&params, m, replicates, seed);
                let echo = json!({
                    "mode": "individual", "p": p, "u": params.u(),
                    "m": m, "replicates": replicates, "seed": seed
                });
                Ok((report, echo))
            }
            SimMode::TwoStage => {
                let params = practical(p, u)?;
                let design = design_params(kind, r, s, a)?;
                let config = SimulationConfig {
                    params,
                    design,
                    m,
                    replicates,
                    seed,
                };
                let report = simulate_two_stage(&config)?;
                let echo = json!({
                    "mode": "two-stage", "p": p, "u": params.u(),
                    "design": design, "m": m, "replicates": replicates, "seed": seed
                });
                Ok((report, echo))
            }
            SimMode::Saffron => {
                let report = simulate_saffron(m, p, replicates, seed)?;
                let echo = json!({
                    "mode": "saffron", "p": p, "n": m,
                    "replicates": replicates, "seed": seed
                });
                Ok((report, echo))
            }
        }
    })?;
    // wall time goes to stderr so reports stay byte-identical across runs
    eprintln!("wall time: {:.3}s", started.elapsed().as_secs_f64());

    let body = format!(
        "{}\n",
        serde_json::to_string_pretty(&json!({
            "config": config_echo,
            "report": report,
        }))
        .expect("serializable")
    );
    emit(&output, &body)
}

fn practical(p: f64, u: Option<f64>) -> Result<PracticalParams, CliError> {
    let u = u.ok_or_else(|| CliError::Usage("--u is required for this mode".into()))?;
    Ok(PracticalParams::new(p, u)?)
}

fn design_params(
    kind: DesignCli,
    r: Option<u32>,
    s: Option<u32>,
    a: Option<u32>,
) -> Result<DesignParams, CliError> {
    let missing = |flag: &str| CliError::Usage(format!("{flag} is required for this design kind"));
    match kind {
        DesignCli::Random => Ok(DesignParams::random_regular(
            r.ok_or_else(|| missing("--r"))?,
            s.ok_or_else(|| missing("--s"))?,
        )?),
        DesignCli::Grid => Ok(DesignParams::grid(s.ok_or_else(|| missing("--s"))?)?),
        DesignCli::Hypercube => Ok(DesignParams::hypercube(
            r.ok_or_else(|| missing("--r"))?,
            a.ok_or_else(|| missing("--a"))?,
        )?),
        DesignCli::Saffron => Err(CliError::Usage(
            "saffron is not a stage-1 pooling design; use --mode saffron".into(),
        )),
    }
}

#[allow(clippy::too_many_arguments)]
fn cmd_design(
    kind: DesignCli,
    m: usize,
    r: Option<u32>,
    s: Option<u32>,
    a: Option<u32>,
    block_size: Option<usize>,
    seed: u64,
    export: Option<PathBuf>,
) -> CliResult {
    let missing = |flag: &str| CliError::Usage(format!("{flag} is required for this design kind"));
    let mut buf = Vec::new();
    match kind {
        DesignCli::Random => {
            let design = random_regular_design(
                m,
                r.ok_or_else(|| missing("--r"))?,
                s.ok_or_else(|| missing("--s"))?,
                seed,
            )?;
            write_design_csv(&design, &mut buf)?;
        }
        DesignCli::Grid => {
            let design = grid_design(m, s.ok_or_else(|| missing("--s"))?)?;
            write_design_csv(&design, &mut buf)?;
        }
        DesignCli::Hypercube => {
            let design = hypercube_design(
                m,
                r.ok_or_else(|| missing("--r"))?,
                a.ok_or_else(|| missing("--a"))?,
            )?;
            write_design_csv(&design, &mut buf)?;
        }
        DesignCli::Saffron => {
            let code = SaffronBlockCode::new(block_size.ok_or_else(|| missing("--block-size"))?)?;
            write_code_csv(&code, &mut buf)?;
        }
    }
    emit(&export, &String::from_utf8(buf).expect("csv is utf-8"))
}

fn cmd_rate_curve(
    alpha_min: f64,
    alpha_max: f64,
    steps: usize,
    output: Option<PathBuf>,
) -> CliResult {
    if steps < 2 || !(0.0..1.0).contains(&alpha_min) || !(alpha_min..1.0).contains(&alpha_max) {
        return Err(CliError::Usage(format!(
            "need steps >= 2 and 0 <= alpha-min <= alpha-max < 1, \
             got alpha-min = {alpha_min}, alpha-max = {alpha_max}, steps = {steps}"
        )));
    }
    let mut body = String::from("alpha,R_full,R_saff,R\n");
    for i in 0..steps {
        let alpha = alpha_min + (alpha_max - alpha_min) * i as f64 / (steps - 1) as f64;
        let pt = rate_point(alpha);
        body.push_str(&format!(
            "{alpha},{},{},{}\n",
            pt.rate_full, pt.rate_saffron, pt.rate
        ));
    }
    emit(&output, &body)
}
