use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use segloss::formats::{parse_distance_map, parse_mask, parse_probability_map};
use segloss::gradcheck::run_gradcheck;
use segloss::harness::{parse_shape, run_matrix, FitConfig, Init, LossReport};
use segloss::metrics::{binarize, boundary_hausdorff, hard_confusion};
use segloss::registry::auto_phi;
use segloss::{loss_value, LossConfig, LossId, SegLossError, SyntheticMaskSpec};

/// Segmentation losses: evaluate, verify gradients, fit synthetic masks.
#[derive(Parser)]
#[command(name = "segloss", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the value of one loss for a mask and a probability map.
    Eval {
        /// Ground truth, PGM.
        #[arg(long)]
        truth: PathBuf,
        /// Prediction, CSV probabilities.
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        loss: String,
        /// Loss coefficient override, `key=value`; repeatable.
        #[arg(long = "config", value_name = "KEY=VALUE")]
        config: Vec<String>,
        /// Distance map (CSV) for distance_penalized_ce.
        #[arg(long, conflicts_with = "auto_phi")]
        phi: Option<PathBuf>,
        /// Derive the distance map from the truth boundary, scaled to [0, 1].
        #[arg(long)]
        auto_phi: bool,
        /// With --auto-phi, keep distances in pixels.
        #[arg(long, requires = "auto_phi")]
        phi_raw: bool,
    },
    /// Compare analytic gradients with central finite differences.
    Gradcheck {
        /// Loss name or `all`.
        #[arg(long, default_value = "all")]
        loss: String,
        #[arg(long, default_value = "8x8")]
        size: String,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long, default_value_t = 1e-5)]
        tol: f64,
    },
    /// Thresholded dice, sensitivity, specificity and boundary Hausdorff.
    Metrics {
        #[arg(long)]
        truth: PathBuf,
        #[arg(long)]
        pred: PathBuf,
        #[arg(long, default_value_t = 0.5)]
        threshold: f64,
    },
    /// Fit logits and write one trace per run plus a summary.
    Fit(RunArgs),
    /// Fit logits and write only the summary table.
    Report(RunArgs),
}

#[derive(clap::Args)]
struct RunArgs {
    /// Comma-separated loss names.
    #[arg(long, alias = "loss", value_delimiter = ',', required = true)]
    losses: Vec<String>,
    /// Mask recipe such as `disk:32x32`; repeatable.
    #[arg(long = "mask-spec", required = true)]
    mask_spec: Vec<String>,
    #[arg(long, default_value_t = 500)]
    steps: usize,
    #[arg(long, default_value_t = 0.5)]
    lr: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = InitArg::Zeros)]
    init: InitArg,
    #[arg(long, default_value_t = 1)]
    record_every: usize,
    #[arg(long = "config", value_name = "KEY=VALUE")]
    config: Vec<String>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
}

#[derive(Clone, Copy, ValueEnum)]
enum InitArg {
    Zeros,
    Random,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Md,
}

/// Failure with its exit code.
struct Failure {
    code: u8,
    message: String,
}

impl From<SegLossError> for Failure {
    fn from(e: SegLossError) -> Self {
        let code = match e {
            SegLossError::ShapeMismatch { .. } => 3,
            _ => 2,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

fn usage(message: impl Into<String>) -> Failure {
    Failure {
        code: 2,
        message: message.into(),
    }
}

fn read(path: &Path) -> Result<Vec<u8>, Failure> {
    fs::read(path).map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn in_file<T>(path: &Path, r: segloss::Result<T>) -> Result<T, Failure> {
    r.map_err(|e| {
        let mut f = Failure::from(e);
        if f.code == 2 {
            f.message = format!("{}: {}", path.display(), f.message);
        }
        f
    })
}

fn loss_config(pairs: &[String]) -> Result<LossConfig, Failure> {
    let mut cfg = LossConfig::default();
    for pair in pairs {
        cfg.apply_override(pair)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Writes `contents` next to `path` and renames it into place.
fn write_atomic(path: &Path, contents: &str) -> Result<(), Failure> {
    let fail = |e: std::io::Error| usage(format!("{}: {e}", path.display()));
    let tmp = path.with_extension("tmp");
    let mut file = fs::File::create(&tmp).map_err(fail)?;
    file.write_all(contents.as_bytes()).map_err(fail)?;
    file.sync_all().map_err(fail)?;
    fs::rename(&tmp, path).map_err(fail)
}

fn eval(
    truth: &Path,
    pred: &Path,
    loss: &str,
    config: &[String],
    phi: Option<&Path>,
    auto: bool,
    raw: bool,
) -> Result<(), Failure> {
    let id: LossId = loss.parse()?;
    let cfg = loss_config(config)?;
    let y = in_file(truth, parse_mask(&read(truth)?))?;
    let p = in_file(pred, parse_probability_map(&read(pred)?))?;
    y.shape().ensure_same(p.shape())?;
    let aux = match (phi, auto) {
        (Some(path), _) => {
            let map = in_file(path, parse_distance_map(&read(path)?))?;
            y.shape().ensure_same(map.shape())?;
            Some(map)
        }
        (None, true) => Some(auto_phi(&y, !raw)),
        (None, false) if id.needs_distance_map() => {
            return Err(usage(format!("{id} needs --phi FILE or --auto-phi")))
        }
        (None, false) => None,
    };
    let v = loss_value(id, &y, &p, &cfg, aux.as_ref())?;
    println!("{id}\t{v:.9}");
    Ok(())
}

fn gradcheck(loss: &str, size: &str, seed: u64, tol: f64) -> Result<bool, Failure> {
    let ids = if loss == "all" {
        LossId::ALL.to_vec()
    } else {
        loss.split(',')
            .map(str::parse)
            .collect::<segloss::Result<Vec<LossId>>>()?
    };
    let shape = parse_shape(size)?;
    if shape.height() < 2 || shape.width() < 2 {
        return Err(usage("--size must be at least 2x2"));
    }
    if tol.is_nan() || tol < 0.0 {
        return Err(usage("--tol must be non-negative"));
    }
    let results = run_gradcheck(&ids, seed, shape, tol)?;
    println!("loss\tmax_rel_error\tmax_abs_error\tworst_pixel\tstatus");
    for r in &results {
        println!(
            "{}\t{:.3e}\t{:.3e}\t{},{}\t{}",
            r.loss,
            r.max_rel_error,
            r.max_abs_error,
            r.worst_pixel.0,
            r.worst_pixel.1,
            if r.passed { "pass" } else { "FAIL" }
        );
    }
    Ok(results.iter().all(|r| r.passed))
}

fn metrics(truth: &Path, pred: &Path, threshold: f64) -> Result<(), Failure> {
    let y = in_file(truth, parse_mask(&read(truth)?))?;
    let p = in_file(pred, parse_probability_map(&read(pred)?))?;
    y.shape().ensure_same(p.shape())?;
    let b = binarize(&p, threshold)?;
    let c = hard_confusion(&b, &y)?;
    println!("tp\t{}", c.tp);
    println!("fp\t{}", c.fp);
    println!("tn\t{}", c.tn);
    println!("fn\t{}", c.fn_);
    println!("dice_coefficient\t{:.9}", c.dice());
    println!("sensitivity\t{:.9}", c.sensitivity());
    println!("specificity\t{:.9}", c.specificity());
    match boundary_hausdorff(&b, &y)? {
        Some(h) => println!("hausdorff\t{h:.9}"),
        None => println!("hausdorff\tundefined"),
    }
    Ok(())
}

fn run(args: &RunArgs, traces: bool) -> Result<(), Failure> {
    let losses = args
        .losses
        .iter()
        .map(|s| s.parse())
        .collect::<segloss::Result<Vec<LossId>>>()?;
    let specs = args
        .mask_spec
        .iter()
        .map(|s| s.parse())
        .collect::<segloss::Result<Vec<SyntheticMaskSpec>>>()?;
    let template = FitConfig {
        steps: args.steps,
        learning_rate: args.lr,
        seed: args.seed,
        init: match args.init {
            InitArg::Zeros => Init::Zeros,
            InitArg::Random => Init::RandomUniform,
        },
        record_every: args.record_every,
        loss_config: loss_config(&args.config)?,
        ..FitConfig::new(losses[0])
    };
    template.validate()?;
    fs::create_dir_all(&args.out)
        .map_err(|e| usage(format!("{}: {e}", args.out.display())))?;

    let report: LossReport = run_matrix(&losses, &specs, &template)?;
    if traces {
        let per_loss = specs.len();
        for (i, row) in report.rows.iter().enumerate() {
            let name = format!("trace_{}_{}.csv", row.loss, i % per_loss);
            write_atomic(&args.out.join(name), &row.trace.to_csv())?;
        }
    }
    let (name, table) = match args.format {
        Format::Csv => ("summary.csv", report.to_csv()),
        Format::Md => ("summary.md", report.to_markdown()),
    };
    write_atomic(&args.out.join(name), &table)?;
    print!("{table}");
    for row in report.rows.iter().filter(|r| r.diverged) {
        log::warn!("{} on {} diverged", row.loss, row.mask);
    }
    Ok(())
}

fn configure_threads() {
    let Ok(value) = std::env::var("SEGLOSS_THREADS") else {
        return;
    };
    match value.trim().parse::<usize>() {
        Ok(n) if n > 0 => {
            if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
                log::warn!("SEGLOSS_THREADS ignored: {e}");
            }
        }
        _ => log::warn!("SEGLOSS_THREADS=`{value}` is not a positive integer; ignored"),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    configure_threads();

    let outcome = match &cli.command {
        Command::Eval {
            truth,
            pred,
            loss,
            config,
            phi,
            auto_phi,
            phi_raw,
        } => eval(truth, pred, loss, config, phi.as_deref(), *auto_phi, *phi_raw).map(|_| true),
        Command::Gradcheck {
            loss,
            size,
            seed,
            tol,
        } => gradcheck(loss, size, *seed, *tol),
        Command::Metrics {
            truth,
            pred,
            threshold,
        } => metrics(truth, pred, *threshold).map(|_| true),
        Command::Fit(args) => run(args, true).map(|_| true),
        Command::Report(args) => run(args, false).map(|_| true),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
