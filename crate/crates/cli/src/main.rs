use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use icqs::dynamics::{DynamicsConfig, Mode};
use icqs::finite::{self, MixedProfile};
use icqs::instgen::{self, Builtin, NegativeSpec, PricingSpec, RandomSpec};
use icqs::io;
use icqs::iqp::IqpConfig;
use icqs::pipeline::{self, RunRecord, SolveConfig};
use icqs::{scenarios, Error, IcqsInstance};

const EXIT_PARSE: u8 = 2;
const EXIT_SOLVER: u8 = 3;
const EXIT_REPLICATION: u8 = 4;

#[derive(Parser)]
#[command(name = "icqs", version, about = "Best-response dynamics and approximate equilibria for integer convex quadratic games")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a generated or built-in instance document.
    Generate(GenerateArgs),
    /// Print the adequacy classification of an instance.
    Classify(InstanceArgs),
    /// Run best-response dynamics and recover an equilibrium.
    Solve(SolveArgs),
    /// Check a reported mixed profile against deviations in the full game.
    Verify(VerifyArgs),
    /// Re-run a built-in example and print a checklist.
    Replicate(ReplicateArgs),
    /// Solve a seeded batch and emit a results table.
    Bench(BenchArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Family {
    Pricing,
    Random,
    Negative,
    Builtin,
}

#[derive(Args)]
struct GenerateArgs {
    family: Family,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    players: Option<usize>,
    /// Variables per player (random and negative families).
    #[arg(long)]
    vars: Option<usize>,
    /// Built-in name: example1, cycling, counterexample.
    #[arg(long)]
    name: Option<String>,
    #[arg(long = "M")]
    m: Option<i64>,
    /// Output file; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct InstanceArgs {
    /// Instance document path.
    #[arg(required_unless_present = "builtin")]
    instance: Option<PathBuf>,
    /// Use a built-in instance instead of a file.
    #[arg(long, conflicts_with = "instance")]
    builtin: Option<String>,
    #[arg(long = "M")]
    m: Option<i64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Integer,
    Continuous,
}

#[derive(Args)]
struct SolveArgs {
    #[command(flatten)]
    source: InstanceArgs,
    /// Start profile: comma list per player, semicolon between players.
    #[arg(long)]
    start: Option<String>,
    #[arg(long, default_value_t = icqs::dynamics::DEFAULT_MAX_ITERS)]
    max_iters: usize,
    #[arg(long, value_enum, default_value = "integer")]
    mode: ModeArg,
    #[arg(long)]
    flatness_constant: Option<f64>,
    /// Directory for report.json and trace.csv.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct VerifyArgs {
    #[command(flatten)]
    source: InstanceArgs,
    /// A report written by `solve`.
    #[arg(long)]
    report: PathBuf,
    #[arg(long)]
    flatness_constant: Option<f64>,
}

#[derive(Args)]
struct ReplicateArgs {
    name: String,
    #[arg(long = "M")]
    m: Option<i64>,
}

#[derive(Args)]
struct BenchArgs {
    /// Batch specification (JSON).
    spec: PathBuf,
    /// Directory for records.csv and profile.csv; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize, Serialize)]
#[serde(default, deny_unknown_fields)]
struct BenchSpec {
    family: BenchFamily,
    count: usize,
    seed: u64,
    max_iters: Option<usize>,
    pricing: PricingSpec,
    random: RandomSpec,
    negative: NegativeSpec,
}

#[derive(Debug, Default, Clone, Copy, Deserialize, Serialize)]
#[serde(rename_all = "lowercase")]
enum BenchFamily {
    #[default]
    Pricing,
    Random,
    Negative,
}

struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Parse(_) | Error::Io(_) | Error::UnknownBuiltin(_) | Error::InvalidM(_) => EXIT_PARSE,
            _ => EXIT_SOLVER,
        };
        Failure { code, message: e.to_string() }
    }
}

type CliResult = Result<(), Failure>;

fn iqp_config(flatness: Option<f64>) -> IqpConfig {
    IqpConfig { flatness_override: flatness, ..IqpConfig::default() }
}

fn load(args: &InstanceArgs) -> Result<IcqsInstance, Error> {
    if let Some(name) = &args.builtin {
        instgen::builtin(Builtin::parse(name, args.m)?)
    } else {
        io::load_instance(args.instance.as_deref().expect("clap requires one source"))
    }
}

fn emit(out: Option<&Path>, text: &str) -> Result<(), Error> {
    match out {
        Some(p) => io::write_text(p, text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn cmd_generate(args: GenerateArgs) -> CliResult {
    let inst = match args.family {
        Family::Pricing => {
            let mut spec = PricingSpec { seed: args.seed, ..Default::default() };
            if let Some(k) = args.players {
                spec.n_players = k;
            }
            instgen::gen_pricing(&spec)?
        }
        Family::Random => {
            let mut spec = RandomSpec { seed: args.seed, ..Default::default() };
            if let Some(k) = args.players {
                spec.n_players = k;
            }
            if let Some(n) = args.vars {
                spec.vars_per_player = n;
            }
            instgen::gen_random(&spec)?
        }
        Family::Negative => {
            let mut spec = NegativeSpec { seed: args.seed, ..Default::default() };
            if let Some(n) = args.vars {
                spec.vars_per_player = n;
            }
            instgen::gen_negative(&spec)?
        }
        Family::Builtin => {
            let name = args.name.as_deref().ok_or_else(|| Error::Parse("--name is required for builtin".into()))?;
            instgen::builtin(Builtin::parse(name, args.m)?)?
        }
    };
    emit(args.out.as_deref(), &io::instance_to_json(&inst))?;
    Ok(())
}

fn cmd_classify(args: InstanceArgs) -> CliResult {
    let inst = load(&args)?;
    print!("{}", io::to_json_pretty(&inst.classify()?));
    Ok(())
}

fn cmd_solve(args: SolveArgs) -> CliResult {
    let inst = load(&args.source)?;
    let start = args.start.as_deref().map(io::parse_profile).transpose()?;
    let cfg = SolveConfig {
        mode: match args.mode {
            ModeArg::Integer => Mode::Integer,
            ModeArg::Continuous => Mode::Continuous,
        },
        dynamics: DynamicsConfig {
            max_iters: args.max_iters.max(1),
            iqp: iqp_config(args.flatness_constant),
            ..DynamicsConfig::default()
        },
        ..SolveConfig::default()
    };
    let report = pipeline::solve(&inst, start.as_deref(), &cfg)?;
    let record = RunRecord::from_report(0, inst.n_players(), &report);
    let json = io::to_json_pretty(&serde_json::json!({ "report": report, "record": record }));
    if let Some(dir) = &args.out {
        std::fs::create_dir_all(dir).map_err(|e| Error::Io(format!("{}: {e}", dir.display())))?;
        io::write_text(&dir.join("report.json"), &json)?;
        if let Some(trace) = &report.trace {
            io::write_text(&dir.join("trace.csv"), &trace.to_csv())?;
        }
    }
    print!("{json}");
    if let Some(eq) = &report.equilibrium {
        if eq.delta_bounded == Some(false) {
            eprintln!("warning: a deviation gain exceeds the a-priori bound");
        } else if eq.delta_bounded.is_none() {
            eprintln!("note: game is not positively adequate; gains are NOT Δ-bounded");
        }
    }
    Ok(())
}

#[derive(Deserialize)]
struct ReportFile {
    report: ReportBody,
}

#[derive(Deserialize)]
struct ReportBody {
    equilibrium: Option<pipeline::EquilibriumReport>,
}

fn cmd_verify(args: VerifyArgs) -> CliResult {
    let inst = load(&args.source)?;
    let text = std::fs::read_to_string(&args.report).map_err(|e| Error::Io(format!("{}: {e}", args.report.display())))?;
    let file: ReportFile = serde_json::from_str(&text).map_err(|e| Error::Parse(e.to_string()))?;
    let eq = file.report.equilibrium.ok_or_else(|| Error::Parse("report holds no equilibrium".into()))?;
    let cycle = icqs::dynamics::CycleSets { sets: eq.strategies };
    let fg = finite::restrict(&inst, &cycle)?;
    let profile = MixedProfile { probabilities: eq.probabilities };
    let delta = finite::verify_delta(&inst, &fg, &profile, &iqp_config(args.flatness_constant))?;
    print!("{}", io::to_json_pretty(&delta));
    Ok(())
}

fn cmd_replicate(args: ReplicateArgs) -> CliResult {
    let which = Builtin::parse(&args.name, args.m)?;
    let checks = scenarios::replicate(which)?;
    let mut ok = true;
    for c in &checks {
        ok &= c.passed;
        let mark = if c.passed { "PASS" } else { "FAIL" };
        if c.detail.is_empty() {
            println!("{mark} {}: {}", which.name(), c.name);
        } else {
            println!("{mark} {}: {} ({})", which.name(), c.name, c.detail);
        }
    }
    if ok {
        Ok(())
    } else {
        Err(Failure { code: EXIT_REPLICATION, message: "replication check failed".into() })
    }
}

fn bench_instance(spec: &BenchSpec, id: usize) -> Result<IcqsInstance, Error> {
    let seed = spec.seed.wrapping_add(id as u64);
    match spec.family {
        BenchFamily::Pricing => instgen::gen_pricing(&PricingSpec { seed, ..spec.pricing.clone() }),
        BenchFamily::Random => instgen::gen_random(&RandomSpec { seed, ..spec.random.clone() }),
        BenchFamily::Negative => instgen::gen_negative(&NegativeSpec { seed, ..spec.negative.clone() }),
    }
}

fn cmd_bench(args: BenchArgs) -> CliResult {
    let text = std::fs::read_to_string(&args.spec).map_err(|e| Error::Io(format!("{}: {e}", args.spec.display())))?;
    let spec: BenchSpec = serde_json::from_str(&text).map_err(|e| Error::Parse(e.to_string()))?;
    let mut cfg = SolveConfig::default();
    if let Some(m) = spec.max_iters {
        cfg.dynamics.max_iters = m.max(1);
    }
    // collect keeps instance-id order regardless of completion order
    let records: Vec<RunRecord> = (0..spec.count)
        .into_par_iter()
        .map(|id| {
            let inst = match bench_instance(&spec, id) {
                Ok(i) => i,
                Err(e) => return RunRecord::failed(id, 0, &e),
            };
            match pipeline::solve(&inst, None, &cfg) {
                Ok(r) => RunRecord::from_report(id, inst.n_players(), &r),
                Err(e) => RunRecord::failed(id, inst.n_players(), &e),
            }
        })
        .collect();
    let table = pipeline::records_csv(&records);
    let profile = pipeline::profile_csv(&pipeline::performance_profile(&records));
    match &args.out {
        Some(dir) => {
            std::fs::create_dir_all(dir).map_err(|e| Error::Io(format!("{}: {e}", dir.display())))?;
            io::write_text(&dir.join("records.csv"), &table)?;
            io::write_text(&dir.join("profile.csv"), &profile)?;
        }
        None => print!("{table}\n{profile}"),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_PARSE) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Command::Generate(a) => cmd_generate(a),
        Command::Classify(a) => cmd_classify(a),
        Command::Solve(a) => cmd_solve(a),
        Command::Verify(a) => cmd_verify(a),
        Command::Replicate(a) => cmd_replicate(a),
        Command::Bench(a) => cmd_bench(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
