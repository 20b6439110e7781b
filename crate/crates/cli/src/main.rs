use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use approx_sharp::experiments::{list_suites, run_suite, ExperimentConfig};
use approx_sharp::{Error, PNorm};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "approx-sharp", version, about = "Error bounds and sharpness experiments for shallow networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the suite catalog
    List {
        /// emit JSON instead of text
        #[arg(long)]
        json: bool,
    },
    /// Run one suite and write its report bundle
    Run(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    suite: String,
    /// JSON config file; flags override its fields
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// grid cells
    #[arg(long)]
    grid: Option<usize>,
    /// output directory (default: results)
    #[arg(long)]
    out: Option<PathBuf>,
    /// worker threads
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long = "n-max")]
    n_max: Option<usize>,
    /// abstract modulus, e.g. power:0.5
    #[arg(long)]
    omega: Option<String>,
    /// truncation depth of the hump schedule
    #[arg(long = "K")]
    k: Option<usize>,
    /// activation, e.g. heaviside, arctan, elu:0.5
    #[arg(long)]
    kind: Option<String>,
    #[arg(long)]
    eps: Option<f64>,
    /// norm exponent or inf
    #[arg(long)]
    p: Option<String>,
    #[arg(long)]
    r: Option<usize>,
    #[arg(long)]
    restarts: Option<usize>,
    /// largest index the schedule search may use
    #[arg(long)]
    cap: Option<u64>,
    /// VC budget constant
    #[arg(long = "E")]
    e: Option<f64>,
}

fn config_from(args: &RunArgs) -> Result<ExperimentConfig, Error> {
    let mut c = match &args.config {
        Some(path) => ExperimentConfig::from_json(&fs::read_to_string(path)?)?,
        None => ExperimentConfig::default(),
    };
    c.suite = args.suite.clone();
    if let Some(v) = args.seed {
        c.seed = v;
    }
    if let Some(v) = args.grid {
        c.grid = v;
    }
    if let Some(v) = &args.out {
        c.out = Some(v.clone());
    }
    if let Some(v) = args.n_max {
        c.n_max = Some(v);
    }
    if let Some(v) = &args.omega {
        c.omega = v.clone();
    }
    if let Some(v) = args.k {
        c.k = v;
    }
    if let Some(v) = &args.kind {
        c.kind = Some(v.clone());
    }
    if let Some(v) = args.eps {
        c.eps = Some(v);
    }
    if let Some(v) = &args.p {
        c.p = PNorm::parse(v)?;
    }
    if let Some(v) = args.r {
        c.r = v;
    }
    if let Some(v) = args.restarts {
        c.restarts = v;
    }
    if let Some(v) = args.cap {
        c.cap = v;
    }
    if let Some(v) = args.e {
        c.e = v;
    }
    Ok(c)
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Violation(_) | Error::SearchCapExceeded { .. } => 1,
        _ => 2,
    }
}

fn run(args: RunArgs) -> Result<bool, Error> {
    let cfg = config_from(&args)?;
    cfg.validate()?;
    if let Some(t) = args.threads {
        if t == 0 {
            return Err(Error::InvalidArgument("threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| Error::InvalidArgument(e.to_string()))?;
    }
    let bundle = run_suite(&cfg)?;
    let out = cfg.out.clone().unwrap_or_else(|| PathBuf::from("results"));
    let dir = bundle.write(&out)?;
    println!("{} [{}]", bundle.suite, bundle.statement);
    for c in &bundle.checks {
        let status = if c.passed { "PASS" } else { "FAIL" };
        let level = if c.certified { "certified" } else { "measured" };
        if c.detail.is_empty() {
            println!("  {status} {} ({level})", c.name);
        } else {
            println!("  {status} {} ({level}): {}", c.name, c.detail);
        }
    }
    println!("report: {}", dir.display());
    Ok(bundle.ok())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::List { json } => {
            if json {
                println!("{}", serde_json::to_string_pretty(list_suites()).expect("catalog serializes"));
            } else {
                for s in list_suites() {
                    println!("{:<18} {:<52} {}", s.name, s.statement, s.summary);
                }
            }
            ExitCode::SUCCESS
        }
        Command::Run(args) => match run(args) {
            Ok(true) => ExitCode::SUCCESS,
            Ok(false) => {
                eprintln!("certified check failed");
                ExitCode::from(1)
            }
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(exit_code(&e))
            }
        },
    }
}
