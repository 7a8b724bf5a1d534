//! Command-line front end: marginal queries, mass-circuit conversion,
//! training, evaluation and semantic checking.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.

use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand};

use pgc::circuit;
use pgc::data::{self, Dataset};
use pgc::learn::{self, TrainConfig};
use pgc::pc;
use pgc::Circuit;

#[derive(Debug)]
enum Failure {
    Usage(String),
    Data(String),
    Numerical(String),
}

impl Failure {
    fn code(&self) -> i32 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Data(_) => 2,
            Failure::Numerical(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Usage(m) | Failure::Data(m) | Failure::Numerical(m) => m,
        }
    }
}

impl From<pgc::Error> for Failure {
    fn from(e: pgc::Error) -> Self {
        match &e {
            pgc::Error::Parse { .. } | pgc::Error::Io(_) => Failure::Data(e.to_string()),
            pgc::Error::Numerical(_) => Failure::Numerical(e.to_string()),
            pgc::Error::Contract(_) | pgc::Error::Refused(_) => Failure::Usage(e.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Data(e.to_string())
    }
}

type CliResult<T> = Result<T, Failure>;

#[derive(Parser)]
#[command(name = "pgc", version, about = "Generating-circuit inference and learning")]
struct Cli {
    /// Internal parallelism bound; 1 keeps runs reproducible.
    #[arg(long, global = true, default_value_t = 1, env = "PGC_THREADS")]
    threads: usize,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Print a marginal probability of a serialized circuit.
    Marginal {
        circuit: PathBuf,
        /// Query like "X1=1,X3=0"; unlisted variables are summed out.
        #[arg(long, default_value = "")]
        query: String,
    },
    /// Convert a probabilistic mass circuit (pmc) to a generating circuit.
    Convert {
        input: PathBuf,
        /// Output file; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train a mixture of determinantal generating circuits.
    Train {
        /// Dataset directory, a `<name>.train.data` file, or a basket file
        /// (with --baskets).
        data: PathBuf,
        #[arg(long = "K", default_value_t = 2, env = "PGC_K")]
        k: usize,
        #[arg(long = "C", default_value_t = 4, env = "PGC_C")]
        c: usize,
        #[arg(long, default_value_t = 0.05, env = "PGC_LR")]
        lr: f64,
        #[arg(long, default_value_t = 100, env = "PGC_EPOCHS")]
        epochs: usize,
        #[arg(long, default_value_t = 256, env = "PGC_BATCH")]
        batch: usize,
        #[arg(long, default_value_t = 1e-4, env = "PGC_WEIGHT_DECAY")]
        weight_decay: f64,
        #[arg(long, default_value_t = 0, env = "PGC_SEED")]
        seed: u64,
        /// Search the K x C grid instead of a single cell.
        #[arg(long, default_value_t = false)]
        grid: bool,
        /// Determinant backend; training gradients always interpolate.
        #[arg(long, default_value = "bird", env = "PGC_BACKEND")]
        backend: String,
        /// Treat the input as a basket file (1-based item indices per line).
        #[arg(long, default_value_t = false)]
        baskets: bool,
        /// Item count for basket files; inferred from the data when omitted.
        #[arg(long)]
        items: Option<usize>,
        /// Checkpoint output path.
        #[arg(long, default_value = "model.ckpt")]
        out: PathBuf,
        /// Machine-readable report path; defaults to `<out>.report`.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Average log-likelihood of a checkpoint on a dataset split.
    Eval {
        checkpoint: PathBuf,
        data: PathBuf,
        #[arg(long, default_value = "test")]
        split: String,
        #[arg(long, default_value_t = false)]
        baskets: bool,
        #[arg(long)]
        items: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Check that a serialized circuit is syntactically valid and encodes a
    /// probability distribution (by enumeration).
    OracleCheck {
        circuit: PathBuf,
        /// Largest variable count enumerated.
        #[arg(long, default_value_t = 20)]
        limit: usize,
    },
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // clap's help/version output is a success path
            if e.use_stderr() {
                eprintln!("{e}");
                std::process::exit(1);
            }
            print!("{e}");
            std::process::exit(0);
        }
    };
    if let Err(e) = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads)
        .build_global()
    {
        eprintln!("error: cannot configure {} threads: {e}", cli.threads);
        std::process::exit(1);
    }
    match run(cli.cmd) {
        Ok(()) => {}
        Err(f) => {
            eprintln!("error: {}", f.message());
            std::process::exit(f.code());
        }
    }
}

fn run(cmd: Cmd) -> CliResult<()> {
    match cmd {
        Cmd::Marginal { circuit, query } => cmd_marginal(&circuit, &query),
        Cmd::Convert { input, out } => cmd_convert(&input, out.as_deref()),
        Cmd::Train {
            data,
            k,
            c,
            lr,
            epochs,
            batch,
            weight_decay,
            seed,
            grid,
            backend,
            baskets,
            items,
            out,
            report,
        } => {
            if !matches!(backend.as_str(), "bird" | "evalinterp") {
                return Err(Failure::Usage(format!(
                    "unknown backend `{backend}` (expected bird or evalinterp)"
                )));
            }
            let config = TrainConfig {
                k,
                c,
                lr,
                epochs,
                batch,
                weight_decay,
                seed,
                ..TrainConfig::default()
            };
            let report = report.unwrap_or_else(|| {
                let mut p = out.as_os_str().to_owned();
                p.push(".report");
                PathBuf::from(p)
            });
            cmd_train(&data, &config, grid, &backend, baskets, items, &out, &report)
        }
        Cmd::Eval { checkpoint, data, split, baskets, items, seed } => {
            cmd_eval(&checkpoint, &data, &split, baskets, items, seed)
        }
        Cmd::OracleCheck { circuit, limit } => cmd_oracle_check(&circuit, limit),
    }
}

fn read_circuit(path: &Path) -> CliResult<Circuit> {
    let text = std::fs::read_to_string(path)?;
    Ok(circuit::from_text(&text)?)
}

/// Parse "X1=1,X3=0" into a marginal query over an n-variable circuit.
fn parse_query(query: &str, n: usize) -> CliResult<pgc::MarginalQuery> {
    let mut ones = Vec::new();
    let mut zeros = Vec::new();
    for part in query.split(',') {
        let part = part.trim();
        if part.is_empty() {
            continue;
        }
        let usage =
            || Failure::Usage(format!("bad query term `{part}` (expected X<i>=0 or X<i>=1)"));
        let (var, val) = part.split_once('=').ok_or_else(usage)?;
        let var = var.trim();
        if !var.starts_with('X') && !var.starts_with('x') {
            return Err(usage());
        }
        let i: usize = var[1..].parse().map_err(|_| usage())?;
        if i == 0 || i > n {
            return Err(Failure::Usage(format!(
                "variable X{i} outside this circuit's range 1..{n}"
            )));
        }
        if ones.contains(&(i - 1)) || zeros.contains(&(i - 1)) {
            return Err(Failure::Usage(format!("variable X{i} listed twice")));
        }
        match val.trim() {
            "1" => ones.push(i - 1),
            "0" => zeros.push(i - 1),
            _ => return Err(usage()),
        }
    }
    Ok(pgc::MarginalQuery::new(ones, zeros)?)
}

fn sig12(v: f64) -> String {
    format!("{:.11e}", v)
}

fn cmd_marginal(path: &Path, query: &str) -> CliResult<()> {
    let circuit = read_circuit(path)?;
    let q = parse_query(query, circuit.nvars())?;
    let p = circuit.marginal(&q)?;
    println!("probability {}", sig12(p));
    Ok(())
}

fn cmd_convert(input: &Path, out: Option<&Path>) -> CliResult<()> {
    let text = std::fs::read_to_string(input)?;
    let mass = pc::from_text::<f64>(&text)?;
    let converted = mass.to_pgc()?;
    let serialized = circuit::to_text(&converted)?;
    match out {
        Some(path) => std::fs::write(path, serialized)?,
        None => print!("{serialized}"),
    }
    Ok(())
}

/// Locate and load a dataset. Accepts a directory holding one
/// `<name>.train.data` triple, a `.train.data` file directly, a basket file
/// (with `baskets`), or a plain CSV matrix split 70/10/20 with `seed`.
fn load_dataset(
    path: &Path,
    baskets: bool,
    items: Option<usize>,
    seed: u64,
) -> CliResult<Dataset> {
    let triple = |train: &Path| -> CliResult<Dataset> {
        let name = train.to_string_lossy();
        let stem = name
            .strip_suffix(".train.data")
            .ok_or_else(|| Failure::Usage(format!("`{name}` does not end in .train.data")))?
            .to_string();
        Ok(data::load_binary_csv(
            train,
            Path::new(&format!("{stem}.valid.data")),
            Path::new(&format!("{stem}.test.data")),
        )?)
    };
    if path.is_dir() {
        let mut trains: Vec<PathBuf> = std::fs::read_dir(path)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.to_string_lossy().ends_with(".train.data"))
            .collect();
        trains.sort();
        match trains.len() {
            0 => Err(Failure::Data(format!(
                "no *.train.data file in {}",
                path.display()
            ))),
            1 => triple(&trains[0]),
            _ => Err(Failure::Usage(format!(
                "{} holds several datasets; point at one .train.data file",
                path.display()
            ))),
        }
    } else if path.to_string_lossy().ends_with(".train.data") {
        triple(path)
    } else if baskets {
        let text = std::fs::read_to_string(path)?;
        let n = match items {
            Some(n) => n,
            None => text
                .split_whitespace()
                .filter_map(|t| t.parse::<usize>().ok())
                .max()
                .ok_or_else(|| Failure::Data("basket file holds no item indices".into()))?,
        };
        if n < data::MIN_RECOMMENDED_VARS {
            eprintln!(
                "warning: only {n} variables; categories this small are usually excluded"
            );
        }
        Ok(data::split(data::parse_baskets(&text, n)?, seed)?)
    } else {
        let rows = data::parse_binary_csv(&std::fs::read_to_string(path)?)?;
        Ok(data::split(rows, seed)?)
    }
}

#[allow(clippy::too_many_arguments)]
fn cmd_train(
    path: &Path,
    config: &TrainConfig,
    grid: bool,
    backend: &str,
    baskets: bool,
    items: Option<usize>,
    out: &Path,
    report_path: &Path,
) -> CliResult<()> {
    let dataset = load_dataset(path, baskets, items, config.seed)?;
    let start = Instant::now();
    let mut report = vec![
        ("schema".to_string(), "pgc-report 1".to_string()),
        ("command".to_string(), "train".to_string()),
        ("data".to_string(), path.display().to_string()),
        ("n".to_string(), dataset.n.to_string()),
        ("seed".to_string(), config.seed.to_string()),
        ("lr".to_string(), config.lr.to_string()),
        ("epochs".to_string(), config.epochs.to_string()),
        ("batch".to_string(), config.batch.to_string()),
        ("weight_decay".to_string(), config.weight_decay.to_string()),
        ("backend".to_string(), backend.to_string()),
    ];
    let model = if grid {
        let result = learn::grid_search(&dataset, config)?;
        for cell in &result.cells {
            let value = match (&cell.valid_nll, &cell.error) {
                (Some(v), _) => sig12(-v),
                (None, Some(e)) => format!("failed: {e}"),
                _ => "failed".to_string(),
            };
            report.push((format!("grid.K{}.C{}.valid_ll", cell.k, cell.c), value));
        }
        report.push(("K".to_string(), result.best_k.to_string()));
        report.push(("C".to_string(), result.best_c.to_string()));
        report.push(("test_ll".to_string(), sig12(-result.test_nll)));
        result.model
    } else {
        report.push(("K".to_string(), config.k.to_string()));
        report.push(("C".to_string(), config.c.to_string()));
        let (model, log) = learn::train(&dataset, config)?;
        report.push(("best_epoch".to_string(), log.best_epoch.to_string()));
        if !dataset.test.is_empty() {
            report.push((
                "test_ll".to_string(),
                sig12(-learn::avg_nll(&model, &dataset.test)?),
            ));
        }
        model
    };
    // final split scores under the selected parameters
    report.push((
        "train_ll".to_string(),
        sig12(-learn::avg_nll(&model, &dataset.train)?),
    ));
    if !dataset.valid.is_empty() {
        report.push((
            "valid_ll".to_string(),
            sig12(-learn::avg_nll(&model, &dataset.valid)?),
        ));
    }
    report.push(("model_params".to_string(), model.pack().len().to_string()));
    let elapsed = start.elapsed().as_secs_f64();
    std::fs::write(out, learn::checkpoint_to_text(&model))?;
    let machine: String = report
        .iter()
        .map(|(k, v)| format!("{k} {v}\n"))
        .collect();
    std::fs::write(report_path, machine)?;
    for (k, v) in &report {
        println!("{k}: {v}");
    }
    println!("train_time_s: {elapsed:.2}");
    println!("checkpoint: {}", out.display());
    println!("report: {}", report_path.display());
    Ok(())
}

fn cmd_eval(
    checkpoint: &Path,
    path: &Path,
    split: &str,
    baskets: bool,
    items: Option<usize>,
    seed: u64,
) -> CliResult<()> {
    let model = learn::checkpoint_from_text(&std::fs::read_to_string(checkpoint)?)?;
    let dataset = load_dataset(path, baskets, items, seed)?;
    let rows = match split {
        "train" => &dataset.train,
        "valid" => &dataset.valid,
        "test" => &dataset.test,
        other => {
            return Err(Failure::Usage(format!(
                "unknown split `{other}` (expected train, valid or test)"
            )))
        }
    };
    if rows.is_empty() {
        return Err(Failure::Usage(format!("split `{split}` is empty")));
    }
    if dataset.n != model.n() {
        return Err(Failure::Usage(format!(
            "checkpoint has {} variables but the data has {}",
            model.n(),
            dataset.n
        )));
    }
    let avg_ll = -learn::avg_nll(&model, rows)?;
    println!("split {split}");
    println!("rows {}", rows.len());
    println!("avg_log_likelihood {}", sig12(avg_ll));
    Ok(())
}

fn cmd_oracle_check(path: &Path, limit: usize) -> CliResult<()> {
    let circuit = read_circuit(path)?;
    let violations = circuit.validate_syntax();
    if !violations.is_empty() {
        println!("syntax fail");
        for v in &violations {
            println!("violation {v}");
        }
        return Err(Failure::Usage(format!("{} syntax violations", violations.len())));
    }
    println!("syntax pass");
    let report = circuit.validate_semantics(limit)?;
    println!("nonnegative {}", if report.nonnegative { "pass" } else { "fail" });
    println!("normalized {}", if report.normalized { "pass" } else { "fail" });
    println!("max_violation {}", sig12(report.max_violation));
    if report.nonnegative && report.normalized {
        println!("semantics pass");
        Ok(())
    } else {
        println!("semantics fail");
        Err(Failure::Numerical(format!(
            "distribution check failed (max violation {})",
            report.max_violation
        )))
    }
}
