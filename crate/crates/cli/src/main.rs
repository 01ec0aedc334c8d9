use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use dkepool::bench::bench_pooling;
use dkepool::data::{locate_tu, parse_tu_with, Dataset, TuOptions, DEFAULT_MAX_DEGREE};
use dkepool::gradcheck::{run_suite, GradCheckOptions, DEFAULT_STEP};
use dkepool::pooling::PoolKind;
use dkepool::train::{
    default_snr_for, run_cv_with, settings_fingerprint, sweep, write_sweep_csv, FoldReport, GnnArch, RunOptions, SweepAxis, TrainConfig,
};
use dkepool::Error;

const EXIT_FAILURE: u8 = 1;
const EXIT_USAGE: u8 = 2;
const EXIT_DATA: u8 = 3;
const EXIT_NUMERIC: u8 = 4;

#[derive(Parser)]
#[command(name = "dkepool", version, about = "Graph classification with covariance-mapped mean pooling")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run k-fold cross-validation and print a JSON report.
    Train(TrainArgs),
    /// Validate and summarise a saved report.
    Eval {
        #[arg(long)]
        report: PathBuf,
    },
    /// Compare analytic gradients with central differences.
    Gradcheck {
        /// Only run the named op.
        #[arg(long)]
        op: Option<String>,
        #[arg(long, default_value_t = DEFAULT_STEP)]
        step: f64,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long, hide = true)]
        inject_fault: bool,
    },
    /// Cross-validate over the d or snr grid and write CSV.
    Sweep {
        #[arg(long, value_parser = parse_axis)]
        axis: SweepAxis,
        #[command(flatten)]
        train: TrainArgs,
    },
    /// Time pooling forward and backward passes.
    Bench {
        #[arg(long, default_value_t = 30)]
        nodes: usize,
        #[arg(long, default_value_t = 16)]
        features: usize,
        #[arg(long, default_value_t = 200)]
        d: usize,
        #[arg(long, default_value_t = 50)]
        reps: usize,
    },
    /// Print dataset statistics.
    Inspect {
        #[command(flatten)]
        data: DataArgs,
    },
}

#[derive(Args)]
struct DataArgs {
    /// Directory with the TU files, or their parent.
    #[arg(long, default_value = "data")]
    dataset: PathBuf,
    /// Dataset prefix, e.g. MUTAG.
    #[arg(long)]
    name: String,
    /// Degree one-hot cap for datasets without node labels.
    #[arg(long, default_value_t = DEFAULT_MAX_DEGREE)]
    max_degree: usize,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    data: DataArgs,
    /// JSON file with config fields; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_parser = parse_pool)]
    pool: Option<PoolKind>,
    #[arg(long)]
    d: Option<usize>,
    /// Noise SNR in dB, or "off".
    #[arg(long, value_parser = parse_snr)]
    snr: Option<Snr>,
    #[arg(long)]
    ns_iters: Option<usize>,
    #[arg(long)]
    folds: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    hidden: Option<usize>,
    #[arg(long, value_parser = parse_gnn)]
    gnn: Option<GnnArch>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    weight_decay: Option<f64>,
    /// Train folds one after another instead of in parallel.
    #[arg(long)]
    serial: bool,
    /// Also write the output to this file.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy)]
struct Snr(Option<f64>);

fn parse_pool(s: &str) -> Result<PoolKind, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_gnn(s: &str) -> Result<GnnArch, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_axis(s: &str) -> Result<SweepAxis, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_snr(s: &str) -> Result<Snr, String> {
    if s.eq_ignore_ascii_case("off") {
        return Ok(Snr(None));
    }
    match s.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(Snr(Some(v))),
        _ => Err(format!("expected a finite dB value or \"off\", got {s:?}")),
    }
}

impl TrainArgs {
    fn config(&self) -> Result<TrainConfig, Error> {
        let file: serde_json::Value = match &self.config {
            Some(path) => {
                let text = fs::read_to_string(path).map_err(|source| Error::Load {
                    path: path.clone(),
                    source,
                })?;
                serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?
            }
            None => serde_json::json!({}),
        };
        let snr_in_file = file.get("snr_db").is_some();
        let mut c: TrainConfig =
            serde_json::from_value(file).map_err(|e| Error::Config(format!("config file: {e}")))?;
        if let Some(v) = self.pool {
            c.pool = v;
        }
        match self.snr {
            Some(Snr(v)) => c.snr_db = v,
            None if !snr_in_file => c.snr_db = default_snr_for(c.pool),
            None => {}
        }
        if let Some(v) = self.d {
            c.d = v;
        }
        if let Some(v) = self.ns_iters {
            c.ns_iterations = v;
        }
        if let Some(v) = self.folds {
            c.folds = v;
        }
        if let Some(v) = self.seed {
            c.seed = v;
        }
        if let Some(v) = self.epochs {
            c.epochs = v;
        }
        if let Some(v) = self.hidden {
            c.hidden = v;
        }
        if let Some(v) = self.gnn {
            c.gnn = v;
        }
        if let Some(v) = self.batch_size {
            c.batch_size = v;
        }
        if let Some(v) = self.lr {
            c.learning_rate = v;
        }
        if let Some(v) = self.weight_decay {
            c.weight_decay = v;
        }
        c.validate()?;
        Ok(c)
    }

    fn options(&self) -> RunOptions {
        RunOptions { parallel: !self.serial }
    }
}

fn load(args: &DataArgs) -> Result<Dataset, Error> {
    let dir = locate_tu(&args.dataset, &args.name);
    parse_tu_with(
        &dir,
        &args.name,
        TuOptions {
            max_degree: args.max_degree,
        },
    )
}

fn emit(text: &str, out: Option<&Path>) -> Result<(), Error> {
    println!("{text}");
    if let Some(path) = out {
        fs::write(path, format!("{text}\n"))?;
    }
    Ok(())
}

fn echo_settings(settings: &serde_json::Value) {
    eprintln!("config {} {settings}", settings_fingerprint(settings));
}

fn echo_config(c: &TrainConfig) {
    eprintln!(
        "config {} {}",
        c.fingerprint(),
        serde_json::to_string(c).expect("config serialises")
    );
}

fn run(cli: Cli) -> Result<u8, Error> {
    match cli.command {
        Command::Train(args) => {
            let config = args.config()?;
            echo_config(&config);
            let dataset = load(&args.data)?;
            let run = run_cv_with(&dataset, &config, args.options())?;
            for f in &run.folds {
                eprintln!(
                    "fold {} acc {:.4} final loss {:.4}",
                    f.fold,
                    f.accuracy,
                    f.epoch_losses.last().copied().unwrap_or(f64::NAN)
                );
            }
            emit(&run.report.to_json(), args.out.as_deref())?;
            Ok(0)
        }
        Command::Eval { report } => {
            echo_settings(&serde_json::json!({ "command": "eval", "report": report }));
            let text = fs::read_to_string(&report).map_err(|source| Error::Load {
                path: report.clone(),
                source,
            })?;
            let r: FoldReport = serde_json::from_str(&text).map_err(|e| Error::Data {
                file: report.display().to_string(),
                line: e.line(),
                message: e.to_string(),
            })?;
            if !r.is_consistent() {
                return Err(Error::Data {
                    file: report.display().to_string(),
                    line: 0,
                    message: "mean/std do not match per_fold".into(),
                });
            }
            println!(
                "{} [{}]: {:.2} ± {:.2} % over {} folds ({:.1} s)",
                r.dataset,
                r.config_fingerprint,
                100.0 * r.mean,
                100.0 * r.std,
                r.per_fold_accuracy.len(),
                r.wallclock_seconds
            );
            Ok(0)
        }
        Command::Gradcheck {
            op,
            step,
            seed,
            inject_fault,
        } => {
            echo_settings(&serde_json::json!({
                "command": "gradcheck", "op": op, "step": step, "seed": seed, "inject_fault": inject_fault
            }));
            let options = GradCheckOptions {
                step,
                inject_fault,
                seed,
            };
            let results = run_suite(op.as_deref(), &options)?;
            let mut failed = 0;
            for r in &results {
                let status = if r.passed { "ok" } else { "FAIL" };
                println!("{:<18} {:>10.3e}  tol {:.0e}  {status}", r.op, r.max_rel_error, r.tolerance);
                failed += usize::from(!r.passed);
            }
            if failed > 0 {
                eprintln!("{failed} of {} gradient checks failed", results.len());
                return Ok(EXIT_FAILURE);
            }
            Ok(0)
        }
        Command::Sweep { axis, train } => {
            let config = train.config()?;
            echo_config(&config);
            let dataset = load(&train.data)?;
            let rows = sweep(&dataset, &config, axis, train.options());
            let mut buf = Vec::new();
            write_sweep_csv(&rows, &mut buf)?;
            let text = String::from_utf8(buf).expect("csv is utf-8");
            print!("{text}");
            if let Some(path) = &train.out {
                fs::write(path, &text)?;
            }
            Ok(0)
        }
        Command::Bench {
            nodes,
            features,
            d,
            reps,
        } => {
            echo_settings(&serde_json::json!({
                "command": "bench", "nodes": nodes, "features": features, "d": d, "reps": reps
            }));
            for row in bench_pooling(&PoolKind::ALL, nodes, features, d, reps)? {
                println!(
                    "{:<11} n={} f={} d={} out={:<5} {:>10.1} us",
                    row.pool, row.nodes, row.features, row.d, row.output_dim, row.micros
                );
            }
            Ok(0)
        }
        Command::Inspect { data } => {
            echo_settings(&serde_json::json!({
                "command": "inspect", "dataset": data.dataset, "name": data.name, "max_degree": data.max_degree
            }));
            let ds = load(&data)?;
            println!("name          {}", ds.name);
            println!("graphs        {}", ds.len());
            println!("classes       {} {:?}", ds.num_classes, ds.class_counts());
            println!("feature_dim   {}", ds.feature_dim);
            println!("avg_nodes     {:.2}", ds.average_nodes());
            println!("avg_edges     {:.2}", ds.average_edges());
            Ok(0)
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    if e.is_data_error() {
        EXIT_DATA
    } else if e.is_numeric_error() {
        EXIT_NUMERIC
    } else if matches!(e, Error::Config(_)) {
        EXIT_USAGE
    } else {
        EXIT_FAILURE
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            if let Error::FoldAborted { partial, .. } = &e {
                eprintln!("partial report: {}", partial.to_json());
            }
            ExitCode::from(exit_code(&e))
        }
    }
}
