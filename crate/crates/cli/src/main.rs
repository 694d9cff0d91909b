//! `hybrid-cp` command-line driver.
//!
//! Exit codes: 0 on success, 2 for argument errors (including unknown flags),
//! 3 for data errors.

mod config;

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{ArgGroup, Args, Parser, Subcommand};
use hybrid_cp::completion::{self, CompletionConfig};
use hybrid_cp::{io, mor, Error, Mask, Tensor3};

use config::CompleteSettings;

#[derive(Parser)]
#[command(name = "hybrid-cp", version, about = "Low-rank CP tensor completion with automatic regularization")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Complete a partially observed tensor (TNS3) or colour image (PPM).
    Complete(CompleteArgs),
    /// Write an observation mask (MSK3).
    Mask(MaskArgs),
    /// Build CP-derived and POD reduced bases for the diffusion problem and
    /// compare their projection errors.
    MorDemo(MorArgs),
    /// POD basis of a snapshot tensor.
    Pod(PodArgs),
    /// Convert a CSV trace or error table to whitespace-separated data.
    Report(ReportArgs),
}

#[derive(Args)]
struct CompleteArgs {
    /// Input tensor: TNS3 file or P3/P6 pixmap.
    #[arg(long)]
    input: PathBuf,
    /// Observed entries (MSK3); everything is observed if omitted.
    #[arg(long)]
    mask: Option<PathBuf>,
    /// Upper bound on the rank.
    #[arg(long)]
    rank: Option<usize>,
    /// `hybrid` or `fixed:<lambda>`.
    #[arg(long)]
    mode: Option<String>,
    #[arg(long)]
    max_iter: Option<usize>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Relative cut-off for discarding components after convergence.
    #[arg(long)]
    truncate_eps: Option<f64>,
    /// key=value file; flags take precedence over it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Truncated model (CPM1).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Per-iteration trace (CSV).
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Record wall-clock time in the trace.
    #[arg(long)]
    timing: bool,
    /// Completed tensor; written as a pixmap when the name ends in `.ppm`.
    #[arg(long)]
    completed: Option<PathBuf>,
    /// Lambda history of the last inner hybrid solve (CSV).
    #[arg(long)]
    lambda_log: Option<PathBuf>,
    /// Ground truth for reporting the relative error.
    #[arg(long)]
    reference: Option<PathBuf>,
}

#[derive(Args)]
#[command(group(ArgGroup::new("kind").required(true).args(["fraction", "rect"])))]
#[command(group(ArgGroup::new("shape").required(true).args(["dims", "like"])))]
struct MaskArgs {
    /// Fraction of entries to remove uniformly at random.
    #[arg(long)]
    fraction: Option<f64>,
    /// Remove the block of columns x0..=x1 and rows y0..=y1 (zero-based) in
    /// every channel.
    #[arg(long, value_name = "X0,Y0,X1,Y1")]
    rect: Option<String>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_name = "I,J,K")]
    dims: Option<String>,
    /// Take the dimensions from this tensor or pixmap.
    #[arg(long)]
    like: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct MorArgs {
    #[arg(long, default_value_t = 40)]
    nx: usize,
    /// Points per parameter direction of the training grid.
    #[arg(long, default_value_t = 9)]
    grid: usize,
    #[arg(long, default_value_t = 50)]
    rank0: usize,
    #[arg(long, default_value_t = 1e-2)]
    eps: f64,
    #[arg(long, default_value_t = 10)]
    tests: usize,
    #[arg(long, default_value_t = 20)]
    pod_rank: usize,
    #[arg(long, default_value_t = 500)]
    max_iter: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Directory for bases (MAT1), errors.csv and ratios.txt.
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Args)]
struct PodArgs {
    /// Snapshot tensor (TNS3); generated from `--nx` and `--grid` if omitted.
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long, default_value_t = 40)]
    nx: usize,
    #[arg(long, default_value_t = 9)]
    grid: usize,
    #[arg(long, default_value_t = 20)]
    rank: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ReportArgs {
    #[arg(long)]
    input: PathBuf,
    /// Defaults to the input name with a `.dat` extension.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Data(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        if e.is_argument_error() {
            Failure::Usage(e.to_string())
        } else {
            Failure::Data(e.to_string())
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Data(e.to_string())
    }
}

type Outcome = std::result::Result<(), Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Complete(a) => run_complete(a),
        Command::Mask(a) => run_mask(a),
        Command::MorDemo(a) => run_mor(a),
        Command::Pod(a) => run_pod(a),
        Command::Report(a) => run_report(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Data(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(3)
        }
    }
}

/// Loads a TNS3 tensor or a pixmap, deciding by the leading bytes.
fn load_input(path: &Path) -> Result<Tensor3, Failure> {
    let bytes = fs::read(path).map_err(|e| Failure::Data(format!("{}: {e}", path.display())))?;
    let t = if bytes.starts_with(b"P3") || bytes.starts_with(b"P6") {
        io::decode_ppm(&bytes)
    } else {
        io::decode_tensor(&bytes)
    };
    t.map_err(|e| Failure::Data(format!("{}: {e}", path.display())))
}

fn is_ppm(path: &Path) -> bool {
    path.extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("ppm"))
}

fn create(path: &Path) -> Result<BufWriter<File>, Failure> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Failure::Data(format!("{}: {e}", path.display())))
}

fn run_complete(a: CompleteArgs) -> Outcome {
    let mut settings = CompleteSettings::default();
    if let Some(path) = &a.config {
        let text = fs::read_to_string(path)
            .map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
        settings.apply_file(&text).map_err(Failure::Usage)?;
    }
    settings.apply_flags(a.rank, a.mode.as_deref(), a.max_iter, a.tol, a.seed, a.truncate_eps)
        .map_err(Failure::Usage)?;
    let cfg: CompletionConfig = settings.into_config();
    cfg.validate()?;

    let t = load_input(&a.input)?;
    let mask = match &a.mask {
        Some(p) => io::load_mask(p).map_err(|e| Failure::Data(format!("{}: {e}", p.display())))?,
        None => Mask::full(t.dims())?,
    };
    if mask.dims() != t.dims() {
        return Err(Failure::Usage(format!(
            "mask dimensions {:?} do not match input {:?}",
            mask.dims(),
            t.dims()
        )));
    }
    let res = completion::complete(&t, &mask, &cfg)?;

    if let Some(p) = &a.out {
        io::save_model(&res.model, p)?;
    }
    if let Some(p) = &a.trace {
        let mut w = create(p)?;
        io::write_trace(&res.trace, a.timing, &mut w)?;
        w.flush()?;
    }
    if let Some(p) = &a.lambda_log {
        let mut w = create(p)?;
        let (l, r) = res
            .last_hybrid
            .as_ref()
            .map(|h| (h.lambda_history.as_slice(), h.residual_history.as_slice()))
            .unwrap_or((&[], &[]));
        io::write_lambda_history(l, r, &mut w)?;
        w.flush()?;
    }
    if let Some(p) = &a.completed {
        if is_ppm(p) {
            io::save_ppm(&res.completed, p)?;
        } else {
            io::save_tensor(&res.completed, p)?;
        }
    }
    let last = res.trace.last().map(|r| r.residual).unwrap_or(f64::NAN);
    println!(
        "iterations {}  converged {}  observed residual {last:.6e}  rank {}",
        res.trace.len(),
        res.converged,
        res.rank()
    );
    if let Some(p) = &a.reference {
        let truth = load_input(p)?;
        println!("relative error {:.6e}", completion::relative_error(&res.completed, &truth)?);
    }
    Ok(())
}

fn parse_list<T: std::str::FromStr>(s: &str, n: usize, what: &str) -> Result<Vec<T>, Failure> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    if parts.len() != n {
        return Err(Failure::Usage(format!("{what} needs {n} comma-separated values, got {s:?}")));
    }
    parts
        .iter()
        .map(|p| p.parse::<T>().map_err(|_| Failure::Usage(format!("bad {what} value {p:?}"))))
        .collect()
}

fn run_mask(a: MaskArgs) -> Outcome {
    let dims = match (&a.dims, &a.like) {
        (Some(d), _) => {
            let v: Vec<usize> = parse_list(d, 3, "--dims")?;
            (v[0], v[1], v[2])
        }
        (None, Some(p)) => load_input(p)?.dims(),
        (None, None) => unreachable!("clap enforces one of --dims/--like"),
    };
    let mask = if let Some(f) = a.fraction {
        if !(0.0..1.0).contains(&f) {
            return Err(Failure::Usage(format!("--fraction must lie in [0, 1), got {f}")));
        }
        completion::make_random_mask(dims, 1.0 - f, a.seed)?
    } else {
        let v: Vec<usize> = parse_list(a.rect.as_deref().unwrap_or_default(), 4, "--rect")?;
        completion::make_rect_mask(dims, v[0], v[1], v[2], v[3])?
    };
    io::save_mask(&mask, &a.out)?;
    println!("observed {} of {} entries", mask.len(), dims.0 * dims.1 * dims.2);
    Ok(())
}

fn run_mor(a: MorArgs) -> Outcome {
    let mut cfg = mor::MorDemoConfig {
        nx: a.nx,
        grid: a.grid,
        tests: a.tests,
        seed: a.seed,
        pod_rank: a.pod_rank,
        ..Default::default()
    };
    cfg.cp.completion.rank = a.rank0;
    cfg.cp.completion.truncate_eps = a.eps;
    cfg.cp.completion.max_iter = a.max_iter;
    cfg.cp.completion.validate()?;
    let rep = mor::run_demo(&cfg)?;

    println!("snapshot tensor {:?}", rep.dims);
    println!("CP basis size {} (from rank bound {})", rep.cp.basis.len(), a.rank0);
    println!("POD basis size {}", rep.pod.len());
    println!("max collocation residual {:.3e}", rep.max_residual);
    println!("compression ratio cp {:.2}  pod {:.2}", rep.cp_ratio, rep.pod_ratio);
    println!("test  mu1  mu2  cp_error  pod_error");
    for (k, ((m1, m2), (c, p))) in rep
        .test_params
        .iter()
        .zip(rep.cp_errors.iter().zip(&rep.pod_errors))
        .enumerate()
    {
        println!("{k:>4}  {m1:+.4}  {m2:+.4}  {c:.4e}  {p:.4e}");
    }

    if let Some(dir) = &a.out_dir {
        fs::create_dir_all(dir)?;
        io::save_matrix(&rep.cp.basis.phi, dir.join("cp_basis.mat1"))?;
        io::save_matrix(&rep.pod.phi, dir.join("pod_basis.mat1"))?;
        let mut w = create(&dir.join("errors.csv"))?;
        writeln!(w, "test,mu1,mu2,cp_error,pod_error")?;
        for (k, ((m1, m2), (c, p))) in rep
            .test_params
            .iter()
            .zip(rep.cp_errors.iter().zip(&rep.pod_errors))
            .enumerate()
        {
            writeln!(w, "{k},{m1},{m2},{c:e},{p:e}")?;
        }
        w.flush()?;
        let mut w = create(&dir.join("ratios.txt"))?;
        writeln!(w, "dims {:?}", rep.dims)?;
        writeln!(w, "cp rank {} ratio {:.4}", rep.cp.rank, rep.cp_ratio)?;
        writeln!(w, "pod rank {} ratio {:.4}", rep.pod.len(), rep.pod_ratio)?;
        w.flush()?;
    }
    Ok(())
}

fn run_pod(a: PodArgs) -> Outcome {
    let snaps = match &a.input {
        Some(p) => load_input(p)?,
        None => mor::assemble_snapshots(&mor::parameter_grid(a.grid), a.nx)?,
    };
    let basis = mor::pod_basis(&snaps, a.rank)?;
    io::save_matrix(&basis.phi, &a.out)?;
    println!("POD basis {} x {} written to {}", basis.phi.nrows(), basis.len(), a.out.display());
    Ok(())
}

fn run_report(a: ReportArgs) -> Outcome {
    let out = a.out.unwrap_or_else(|| a.input.with_extension("dat"));
    let mut rdr = csv::Reader::from_path(&a.input)
        .map_err(|e| Failure::Data(format!("{}: {e}", a.input.display())))?;
    let headers = rdr
        .headers()
        .map_err(|e| Failure::Data(e.to_string()))?
        .clone();
    let mut w = create(&out)?;
    writeln!(w, "# {}", headers.iter().collect::<Vec<_>>().join(" "))?;
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Failure::Data(e.to_string()))?;
        let fields: Vec<&str> = rec
            .iter()
            .map(|f| if f.trim().is_empty() { "NaN" } else { f.trim() })
            .collect();
        writeln!(w, "{}", fields.join(" "))?;
    }
    w.flush()?;
    println!("wrote {}", out.display());
    Ok(())
}
