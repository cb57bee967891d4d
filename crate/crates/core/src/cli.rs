//! Command-line front end.
//!
//! Inputs start at LLVM IR text. Produce it from C/C++ with
//! `clang -S -emit-llvm -O0 file.c -o file.ll`.

use std::ffi::OsString;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;

use crate::analytics::{export_features_csv, topo_features, TopoFeatures};
use crate::corpus::{generate, CorpusSpec};
use crate::depgraph::{build_graph, BuildOptions, DepGraph, Label};
use crate::ir::{parse_ll, parse_trace};
use crate::pipeline::{
    eval_per_family, history_csv, load_graph, load_model, save_model, train_with, EvalReport,
    Manifest, PipelineError, TrainConfig, VocabScope, DEFAULT_THRESHOLD,
};
use crate::sage::{Activation, ArchConfig, ABLATION_DEPTHS};

/// Process exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitStatus {
    Success = 0,
    /// Bad input data or an unreadable/unwritable file.
    Operational = 1,
    /// Bad flags or arguments.
    Usage = 2,
}

#[derive(Debug)]
struct Failure {
    status: ExitStatus,
    message: String,
}

impl Failure {
    fn op(e: impl std::fmt::Display) -> Self {
        Failure {
            status: ExitStatus::Operational,
            message: e.to_string(),
        }
    }

    fn usage(e: impl std::fmt::Display) -> Self {
        Failure {
            status: ExitStatus::Usage,
            message: e.to_string(),
        }
    }
}

impl From<PipelineError> for Failure {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::InvalidConfig(_) => Failure::usage(e),
            _ => Failure::op(e),
        }
    }
}

type CmdResult = Result<(), Failure>;

#[derive(Debug, Parser)]
#[command(name = "irgraph", version, about = "Classify IR dependency graphs with GraphSAGE")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Compile .ll or .trace files (or directories of them) into graph JSON.
    Compile(CompileArgs),
    /// Generate a labeled synthetic trace corpus.
    Corpus(CorpusArgs),
    /// Train a classifier on a manifest.
    Train(TrainArgs),
    /// Score graphs with a trained model.
    Predict(PredictArgs),
    /// Evaluate a model on a labeled manifest.
    Eval(EvalArgs),
    /// Export topological features as CSV.
    Features(FeaturesArgs),
}

#[derive(Debug, Args)]
struct CompileArgs {
    /// Input files or directories.
    #[arg(required = true)]
    inputs: Vec<PathBuf>,
    /// Output directory (default: next to each input).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Add terminator → next-instruction edges.
    #[arg(long)]
    control_edges: bool,
    /// Add store → load edges on equal address annotations.
    #[arg(long)]
    mem_deps: bool,
    #[arg(long, value_parser = clap::value_parser!(u8).range(0..=1))]
    label: Option<u8>,
    #[arg(long)]
    family: Option<String>,
}

#[derive(Debug, Args)]
struct CorpusArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 500, value_parser = clap::value_parser!(u64).range(1..))]
    benign: u64,
    #[arg(long, default_value_t = 500, value_parser = clap::value_parser!(u64).range(1..))]
    malicious: u64,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Let each class use a few opcodes of its own.
    #[arg(long)]
    easy: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ActivationArg {
    Relu,
    LeakyRelu,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum VocabScopeArg {
    Train,
    All,
}

fn parse_layers(s: &str) -> Result<usize, String> {
    let n: usize = s.parse().map_err(|e| format!("{e}"))?;
    if ABLATION_DEPTHS.contains(&n) {
        Ok(n)
    } else {
        Err(format!("must be one of {ABLATION_DEPTHS:?}"))
    }
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// Model output path.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 30, value_parser = clap::value_parser!(u64).range(1..))]
    epochs: u64,
    #[arg(long, default_value_t = 32, value_parser = clap::value_parser!(u64).range(1..))]
    batch_size: u64,
    #[arg(long, default_value_t = 1e-3)]
    lr: f64,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Number of SAGE layers: 4, 6, 8 or 10.
    #[arg(long, default_value_t = 6, value_parser = parse_layers)]
    layers: usize,
    #[arg(long, default_value_t = 128, value_parser = clap::value_parser!(u64).range(1..))]
    hidden: u64,
    #[arg(long, default_value_t = 128, value_parser = clap::value_parser!(u64).range(1..))]
    embed_dim: u64,
    /// Feed one-hot opcodes straight into the first SAGE layer.
    #[arg(long)]
    no_embedding: bool,
    #[arg(long, value_enum, default_value = "leaky-relu")]
    activation: ActivationArg,
    /// Fraction of each class used for training.
    #[arg(long, default_value_t = 0.8)]
    split: f64,
    #[arg(long, value_enum, default_value = "train")]
    vocab_scope: VocabScopeArg,
    /// Per-node neighbor sampling cap during training.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    sample_cap: Option<u64>,
    /// Write per-epoch history CSV here.
    #[arg(long)]
    history: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct PredictArgs {
    #[arg(long)]
    model: PathBuf,
    /// Graph JSON, .ll or .trace files.
    #[arg(required = true)]
    graphs: Vec<PathBuf>,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    manifest: PathBuf,
    /// Also print per-family accuracy.
    #[arg(long)]
    per_family: bool,
    /// Print the full report as one JSON document.
    #[arg(long)]
    json: bool,
}

#[derive(Debug, Args)]
struct FeaturesArgs {
    #[arg(long, conflicts_with = "graphs")]
    manifest: Option<PathBuf>,
    /// Graph JSON, .ll or .trace files.
    graphs: Vec<PathBuf>,
    /// Write CSV here instead of stdout.
    #[arg(long)]
    csv: Option<PathBuf>,
}

/// Parses `args` (including the program name), runs the command and returns
/// the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitStatus::Usage as i32
            } else {
                ExitStatus::Success as i32
            };
        }
    };
    if let Err(f) = configure_threads() {
        eprintln!("error: {}", f.message);
        return f.status as i32;
    }
    let result = match cli.command {
        Command::Compile(a) => compile(a),
        Command::Corpus(a) => corpus(a),
        Command::Train(a) => train(a),
        Command::Predict(a) => predict(a),
        Command::Eval(a) => eval(a),
        Command::Features(a) => features(a),
    };
    match result {
        Ok(()) => ExitStatus::Success as i32,
        Err(f) => {
            eprintln!("error: {}", f.message);
            f.status as i32
        }
    }
}

/// Honors `MGN_THREADS` by sizing the global worker pool.
fn configure_threads() -> CmdResult {
    let Ok(raw) = std::env::var("MGN_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n >= 1)
        .ok_or_else(|| Failure::usage(format!("MGN_THREADS must be a positive integer, got `{raw}`")))?;
    // A pool may already exist when embedded; keep it in that case.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

fn plural(n: usize, word: &str) -> String {
    if n == 1 {
        format!("{n} {word}")
    } else {
        format!("{n} {word}s")
    }
}

fn is_ir_file(p: &Path) -> bool {
    matches!(p.extension().and_then(|e| e.to_str()), Some("ll" | "trace"))
}

/// Expands directories to their `.ll` / `.trace` files in name order.
fn expand_inputs(inputs: &[PathBuf]) -> Result<Vec<PathBuf>, Failure> {
    let mut files = Vec::new();
    for p in inputs {
        if p.is_dir() {
            let rd = std::fs::read_dir(p).map_err(|e| Failure::op(format!("{}: {e}", p.display())))?;
            let mut found: Vec<PathBuf> = rd
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|f| f.is_file() && is_ir_file(f))
                .collect();
            found.sort();
            files.extend(found);
        } else {
            files.push(p.clone());
        }
    }
    Ok(files)
}

fn io_failure(path: &Path, e: std::io::Error) -> Failure {
    Failure::op(format!("{}: {e}", path.display()))
}

fn compile(a: CompileArgs) -> CmdResult {
    if a.family.as_deref() == Some("") {
        return Err(Failure::usage("--family must not be empty"));
    }
    let label = a.label.map(|l| Label::from_u8(l).expect("validated by clap"));
    let opts = BuildOptions {
        control_edges: a.control_edges,
        memory_edges: a.mem_deps,
    };
    let files = expand_inputs(&a.inputs)?;
    if let Some(out) = &a.out {
        std::fs::create_dir_all(out).map_err(|e| io_failure(out, e))?;
    }
    let results: Vec<Result<(PathBuf, usize, usize), Failure>> = files
        .par_iter()
        .map(|path| {
            let text = std::fs::read_to_string(path).map_err(|e| io_failure(path, e))?;
            let unit = if path.extension().and_then(|e| e.to_str()) == Some("ll") {
                parse_ll(&text, path)
            } else {
                parse_trace(&text, path)
            }
            .map_err(|e| Failure::op(format!("{}: {e}", path.display())))?;
            let g = build_graph(&unit, opts).with_label(label, a.family.clone());
            let stem = path.file_stem().unwrap_or_default();
            let dest = match &a.out {
                Some(dir) => dir.join(stem).with_extension("json"),
                None => path.with_extension("json"),
            };
            std::fs::write(&dest, g.to_json()).map_err(|e| io_failure(&dest, e))?;
            Ok((dest, g.num_nodes(), g.num_edges()))
        })
        .collect();
    let mut stdout = std::io::stdout().lock();
    for (path, r) in files.iter().zip(results) {
        let (dest, n, e) = r?;
        let _ = writeln!(
            stdout,
            "{}: {}, {} -> {}",
            path.display(),
            plural(n, "node"),
            plural(e, "edge"),
            dest.display()
        );
    }
    Ok(())
}

fn corpus(a: CorpusArgs) -> CmdResult {
    let spec = CorpusSpec {
        easy: a.easy,
        ..CorpusSpec::new(a.benign as usize, a.malicious as usize, a.seed)
    };
    let manifest = generate(&spec, &a.out).map_err(Failure::op)?;
    println!(
        "{} traces ({} benign, {} malicious) -> {}",
        manifest.len(),
        a.benign,
        a.malicious,
        a.out.join("manifest.jsonl").display()
    );
    Ok(())
}

fn train(a: TrainArgs) -> CmdResult {
    let manifest = Manifest::load(&a.manifest)?;
    let cfg = TrainConfig {
        arch: ArchConfig {
            embed_dim: a.embed_dim as usize,
            hidden_dim: a.hidden as usize,
            num_sage_layers: a.layers,
            use_embedding: !a.no_embedding,
            activation: match a.activation {
                ActivationArg::Relu => Activation::Relu,
                ActivationArg::LeakyRelu => Activation::LeakyRelu,
            },
            sample_cap: a.sample_cap.map(|c| c as usize),
            ..ArchConfig::new(1)
        },
        epochs: a.epochs as usize,
        batch_size: a.batch_size as usize,
        lr: a.lr,
        seed: a.seed,
        split_fraction: a.split,
        vocab_scope: match a.vocab_scope {
            VocabScopeArg::Train => VocabScope::Train,
            VocabScopeArg::All => VocabScope::All,
        },
    };
    cfg.validate()?;
    let outcome = train_with(&manifest, &cfg, |r| {
        let auroc = r.test_auroc.map(|v| format!("{v:.4}")).unwrap_or_else(|| "n/a".into());
        eprintln!(
            "epoch {:>3}  loss {:.4}  test acc {:.4}  test auroc {auroc}",
            r.epoch, r.train_loss, r.test_acc
        );
    })?;
    save_model(&outcome.model, &a.out)?;
    if let Some(h) = &a.history {
        std::fs::write(h, history_csv(&outcome.history)).map_err(|e| io_failure(h, e))?;
    }
    let report = eval_per_family(&outcome.model, &outcome.test)?;
    print_summary(&report);
    Ok(())
}

fn print_summary(r: &EvalReport) {
    println!("ACC {}", r.acc);
    match r.auroc {
        Some(a) => println!("AUROC {a}"),
        None => eprintln!("warning: single-class evaluation set, AUROC omitted"),
    }
    println!("F1 {}", r.f1);
}

fn predict(a: PredictArgs) -> CmdResult {
    let model = load_model(&a.model)?;
    let graphs = a
        .graphs
        .par_iter()
        .map(|p| load_graph(p))
        .collect::<Result<Vec<DepGraph>, _>>()?;
    let scores = model.score_graphs(&graphs)?;
    let mut stdout = std::io::stdout().lock();
    for (path, s) in a.graphs.iter().zip(scores) {
        let verdict = if s >= DEFAULT_THRESHOLD { "malicious" } else { "benign" };
        let _ = writeln!(stdout, "{}\t{s:.6}\t{verdict}", path.display());
    }
    Ok(())
}

fn eval(a: EvalArgs) -> CmdResult {
    let model = load_model(&a.model)?;
    let manifest = Manifest::load(&a.manifest)?;
    let report = eval_per_family(&model, &manifest)?;
    if a.json {
        if report.auroc.is_none() {
            eprintln!("warning: single-class evaluation set, AUROC omitted");
        }
        println!("{}", serde_json::to_string(&report).expect("report serializes"));
        return Ok(());
    }
    print_summary(&report);
    if a.per_family {
        println!("family\tsamples\tacc");
        for (family, s) in &report.per_family {
            println!("{family}\t{}\t{}", s.samples, s.acc);
        }
    }
    Ok(())
}

fn features(a: FeaturesArgs) -> CmdResult {
    let inputs: Vec<(PathBuf, Option<Label>)> = match &a.manifest {
        Some(m) => Manifest::load(m)?
            .entries
            .into_iter()
            .map(|e| (e.path, Some(e.label)))
            .collect(),
        None if a.graphs.is_empty() => {
            return Err(Failure::usage("give --manifest or at least one graph path"));
        }
        None => a.graphs.iter().map(|p| (p.clone(), None)).collect(),
    };
    let rows = inputs
        .par_iter()
        .map(|(path, label)| {
            let g = load_graph(path)?;
            let f = topo_features(&g).map_err(|e| Failure::op(format!("{}: {e}", path.display())))?;
            Ok((path.display().to_string(), label.or(g.label), f))
        })
        .collect::<Result<Vec<(String, Option<Label>, TopoFeatures)>, Failure>>()?;
    let csv = export_features_csv(rows.iter().map(|(p, l, f)| (p.as_str(), *l, f)));
    match &a.csv {
        Some(out) => std::fs::write(out, csv).map_err(|e| io_failure(out, e))?,
        None => print!("{csv}"),
    }
    Ok(())
}
