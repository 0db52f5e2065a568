//! `mspinn`: run multistage PINN experiments and inspect their artifacts.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use mspinn::io::{
    load_checkpoint, load_config, load_report, solution_table, spectrum_table, write_run_artifacts,
    Checkpoint, Table,
};
use mspinn::multistage::{evaluate_error, run, Method, RunConfig, RunReport};
use mspinn::problems::ProblemConfig;
use mspinn::Error;

/// Overrides the output root when `--out` is not given.
const OUTPUT_ROOT_ENV: &str = "MSPINN_OUTPUT_ROOT";

#[derive(Parser)]
#[command(name = "mspinn", version, about = "Multistage physics-informed neural networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a configured run and write its artifacts to a new directory.
    Run(RunArgs),
    /// Tabulate relative L2 errors of completed runs by method.
    Compare(CompareArgs),
    /// Dump the interior-residual spectrum of a checkpoint.
    Spectrum(SpectrumArgs),
    /// Evaluate a checkpoint against the reference solution.
    Evaluate(EvaluateArgs),
    /// Export the reference solution on a grid.
    Reference(ReferenceArgs),
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Output root; a fresh timestamped directory is created inside it.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    stages: Option<usize>,
}

#[derive(Args)]
struct CompareArgs {
    /// Directory searched recursively for `report.toml` files.
    #[arg(long)]
    config: PathBuf,
    /// Output CSV (default: `comparison.csv` inside the searched directory).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SpectrumArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Run config whose problem must match the checkpoint's; defaults to the embedded problem.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_parser = parse_grid, default_value = "64x64")]
    grid: [usize; 2],
    /// Dominant modes listed after the grid rows.
    #[arg(long, default_value_t = 20)]
    modes: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_parser = parse_grid, default_value = "101x101")]
    grid: [usize; 2],
    /// Solution grid CSV; errors are printed either way.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ReferenceArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long, value_parser = parse_grid, default_value = "101x101")]
    grid: [usize; 2],
    #[arg(long)]
    out: PathBuf,
}

fn parse_grid(s: &str) -> Result<[usize; 2], String> {
    let (a, b) = s.split_once('x').ok_or("expected NXxNY, e.g. 64x64")?;
    let n = |v: &str| v.trim().parse::<usize>().map_err(|e| format!("{v:?}: {e}"));
    let grid = [n(a)?, n(b)?];
    if grid.iter().any(|&v| v < 2) {
        return Err("each axis needs at least 2 nodes".into());
    }
    Ok(grid)
}

/// A failure with the process exit status it maps to.
struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::Training { .. } => 3,
            Error::InvalidArgument(_) | Error::Format(_) => 2,
            _ => 1,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

fn invalid(message: String) -> Failure {
    Failure { code: 2, message }
}

fn read_config(path: &Path) -> Result<RunConfig, Failure> {
    load_config(path).map_err(|e| match e {
        Error::Io(io) => invalid(format!("cannot read {}: {io}", path.display())),
        e => invalid(format!("invalid config {}: {e}", path.display())),
    })
}

fn output_root(flag: Option<&Path>, cfg: &RunConfig) -> PathBuf {
    flag.map(Path::to_path_buf)
        .or_else(|| std::env::var_os(OUTPUT_ROOT_ENV).map(PathBuf::from))
        .or_else(|| cfg.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("runs"))
}

/// A directory that did not exist before, named after the run and the current time.
fn fresh_run_dir(root: &Path, stem: &str, method: Method) -> Result<PathBuf, Failure> {
    std::fs::create_dir_all(root)
        .map_err(|e| invalid(format!("output root {} is not writable: {e}", root.display())))?;
    let stamp = chrono::Local::now().format("%Y%m%dT%H%M%S%.3f");
    let base = format!("{stem}-{}-{stamp}", method.as_str());
    for attempt in 0.. {
        let name = if attempt == 0 { base.clone() } else { format!("{base}-{attempt}") };
        let dir = root.join(name);
        match std::fs::create_dir(&dir) {
            Ok(()) => return Ok(dir),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => continue,
            Err(e) => return Err(invalid(format!("cannot create {}: {e}", dir.display()))),
        }
    }
    unreachable!()
}

fn cmd_run(args: RunArgs) -> Result<(), Failure> {
    let mut cfg = read_config(&args.config)?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(stages) = args.stages {
        cfg.stages = stages;
    }
    cfg.validate().map_err(|e| invalid(format!("invalid override: {e}")))?;
    let stem = args
        .config
        .file_stem()
        .map_or("run".into(), |s| s.to_string_lossy().into_owned());
    let dir = fresh_run_dir(&output_root(args.out.as_deref(), &cfg), &stem, cfg.method)?;
    log::info!("writing artifacts to {}", dir.display());
    let outcome = run(&cfg)?;
    let report = write_run_artifacts(&dir, &outcome)?;
    print_summary(&report);
    println!("artifacts: {}", dir.display());
    Ok(())
}

fn print_summary(r: &RunReport) {
    println!("method: {}  problem: {}  stages trained: {}", r.method.as_str(), r.problem, r.stages_trained);
    let eps: Vec<String> = r.residual_rms.iter().map(|v| format!("{v:.3e}")).collect();
    println!("residual rms by stage: {}", eps.join(" -> "));
    for (c, e) in &r.l2_errors {
        println!("relative L2 error {c}: {e:.3e}");
    }
    if !r.monotone_epsilon {
        println!("FAILED: residual rms is not strictly decreasing");
    }
}

/// Column label distinguishing problem variants, e.g. `eps_r=1.5`.
fn variant(problem: &ProblemConfig) -> String {
    match problem {
        ProblemConfig::Burgers(b) => format!("nu={}", b.viscosity),
        ProblemConfig::Helmholtz(h) => format!("eps_r={}", h.eps_r),
    }
}

fn method_label(m: Method) -> &'static str {
    match m {
        Method::Pinn => "PINN",
        Method::Msnn => "MSNN",
        Method::SiMspinn => "SI-MSPINNs",
        Method::RffMspinn => "RFF-MSPINNs",
    }
}

fn cmd_compare(args: CompareArgs) -> Result<(), Failure> {
    let mut paths: Vec<PathBuf> = walkdir::WalkDir::new(&args.config)
        .into_iter()
        .filter_map(|e| match e {
            Ok(e) => Some(e),
            Err(err) => {
                log::warn!("skipping unreadable entry: {err}");
                None
            }
        })
        .filter(|e| e.file_type().is_file() && e.file_name() == "report.toml")
        .map(|e| e.into_path())
        .collect();
    paths.sort();
    let mut reports = Vec::new();
    for p in &paths {
        match load_report(p) {
            Ok(r) => reports.push(r),
            Err(e) => log::warn!("skipping {}: {e}", p.display()),
        }
    }
    if reports.is_empty() {
        return Err(invalid(format!("no readable run reports under {}", args.config.display())));
    }
    let table = comparison_table(&reports);
    let out = args.out.unwrap_or_else(|| args.config.join("comparison.csv"));
    table.save(&out)?;
    let mut stdout = Vec::new();
    table.write(&mut stdout)?;
    print!("{}", String::from_utf8_lossy(&stdout));
    Ok(())
}

fn comparison_table(reports: &[RunReport]) -> Table {
    // (component, variant) columns in first-seen order per problem.
    let mut columns: Vec<(String, String)> = Vec::new();
    let mut cells: BTreeMap<(Method, String, String), f64> = BTreeMap::new();
    let mut methods: Vec<Method> = Vec::new();
    for r in reports {
        let v = variant(&r.config.problem);
        if !methods.contains(&r.method) {
            methods.push(r.method);
        }
        for c in r.config.problem.as_problem().components() {
            let key = (c.to_string(), v.clone());
            if !columns.contains(&key) {
                columns.push(key.clone());
            }
            if let Some(e) = r.l2_errors.get(*c) {
                if cells.insert((r.method, key.0, key.1), *e).is_some() {
                    log::warn!("several {} runs for {c} {v}; keeping the last", r.method.as_str());
                }
            }
        }
    }
    methods.sort_by_key(|m| Method::ALL.iter().position(|a| a == m));
    let mut header = vec!["method".to_string()];
    header.extend(columns.iter().map(|(c, v)| format!("L2({c}) {v}")));
    let mut table = Table::new(header);
    for m in methods {
        let mut row = vec![method_label(m).to_string()];
        for (c, v) in &columns {
            row.push(
                cells
                    .get(&(m, c.clone(), v.clone()))
                    .map_or("n/a".into(), |e| format!("{e:.6e}")),
            );
        }
        table.rows.push(row);
    }
    table
}

fn checkpoint_for(path: &Path, config: Option<&Path>) -> Result<Checkpoint, Failure> {
    let ckpt = load_checkpoint(path).map_err(|e| invalid(format!("bad checkpoint {}: {e}", path.display())))?;
    if let Some(c) = config {
        let cfg = read_config(c)?;
        ckpt.check_problem(cfg.problem.as_problem())?;
        if cfg.problem != ckpt.problem {
            return Err(invalid(format!(
                "checkpoint problem parameters differ from {}",
                c.display()
            )));
        }
    }
    Ok(ckpt)
}

fn cmd_spectrum(args: SpectrumArgs) -> Result<(), Failure> {
    let ckpt = checkpoint_for(&args.checkpoint, args.config.as_deref())?;
    let table = spectrum_table(&ckpt.solution, ckpt.problem.as_problem(), args.grid, args.modes)?;
    table.save(&args.out)?;
    println!("{} rows written to {}", table.rows.len(), args.out.display());
    Ok(())
}

fn cmd_evaluate(args: EvaluateArgs) -> Result<(), Failure> {
    let ckpt = checkpoint_for(&args.checkpoint, args.config.as_deref())?;
    let problem = ckpt.problem.as_problem();
    let errors = evaluate_error(&ckpt.solution, problem, args.grid)?;
    for (c, e) in problem.components().iter().zip(errors) {
        println!("{c} = {e:.17e}");
    }
    if let Some(out) = args.out {
        solution_table(&ckpt.solution, problem, args.grid)?.save(&out)?;
    }
    Ok(())
}

fn cmd_reference(args: ReferenceArgs) -> Result<(), Failure> {
    let cfg = read_config(&args.config)?;
    mspinn::io::reference_table(cfg.problem.as_problem(), args.grid)?.save(&args.out)?;
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Compare(a) => cmd_compare(a),
        Command::Spectrum(a) => cmd_spectrum(a),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::Reference(a) => cmd_reference(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
