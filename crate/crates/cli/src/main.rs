//! `cogscreen`: validate corpora, run evaluations, analyze and tabulate
//! results, generate synthetic corpora.
//!
//! Exit status: 0 on success, 1 on a data or computation error, 2 on a
//! usage error.

mod render;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};

use cogscreen::analysis::{
    cell_overlap, cooccurrence, cross_label_confusion, misclassification_breakdown, predictions_for,
};
use cogscreen::corpus::{class_counts_of, load_manifest, Corpus, LabelKind};
use cogscreen::features::FeatureStore;
use cogscreen::pooling::PoolingKind;
use cogscreen::protocol::{
    default_pooling, run_cross, run_mixed, run_within, ExperimentResult, ExperimentSpec, HyperGrid, Protocol,
};
use cogscreen::report::format_report;
use cogscreen::svm::KernelKind;
use cogscreen::synth::{generate, SynthSpec, TestScoreModel, MANIFEST_NAME};

#[derive(Parser)]
#[command(name = "cogscreen", version, about = "Cross-corpus HC/MCI/DEM evaluation harness")]
struct Cli {
    /// More log output (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Load manifests, check every feature file and print class counts.
    Validate {
        #[arg(required = true)]
        manifests: Vec<PathBuf>,
    },
    /// Run one experiment and write its JSON and text reports.
    Eval(EvalArgs),
    /// Error analysis against depression labels.
    Analyze(AnalyzeArgs),
    /// Tabulate result files as UAR tables.
    Report {
        #[arg(required = true)]
        results: Vec<PathBuf>,
        /// Also write the tables as JSON.
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Generate a synthetic corpus.
    Synth(SynthArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum ProtocolArg {
    Within,
    Cross,
    Mixed,
}

#[derive(Clone, Copy, ValueEnum)]
enum TargetArg {
    Cognitive,
    Depression,
}

#[derive(Clone, Copy, ValueEnum)]
enum PoolingArg {
    Mean,
    Sum,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum KernelArg {
    Linear,
    Rbf,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long, value_enum)]
    protocol: ProtocolArg,
    /// Manifest for the within-corpus protocol.
    #[arg(long, required_if_eq("protocol", "within"), conflicts_with_all = ["train", "test_corpus"])]
    corpus: Option<PathBuf>,
    /// Training manifest (first corpus for mixed).
    #[arg(long, required_if_eq_any([("protocol", "cross"), ("protocol", "mixed")]))]
    train: Option<PathBuf>,
    /// Test manifest (second corpus for mixed).
    #[arg(long, required_if_eq_any([("protocol", "cross"), ("protocol", "mixed")]))]
    test_corpus: Option<PathBuf>,
    /// Cognitive test whose sessions are used, e.g. sVFT.
    #[arg(long = "test")]
    test_id: String,
    /// Feature family: a feature set name, or a layered family such as w2v2.
    #[arg(long)]
    features: String,
    #[arg(long, value_enum, default_value = "cognitive")]
    target: TargetArg,
    /// Defaults to sum for bert and mean otherwise.
    #[arg(long, value_enum)]
    pooling: Option<PoolingArg>,
    #[arg(long, default_value_t = 5)]
    folds: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Comma-separated C values.
    #[arg(long, value_delimiter = ',')]
    c: Option<Vec<f64>>,
    /// Comma-separated RBF gamma values.
    #[arg(long, value_delimiter = ',')]
    gamma: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',', value_enum)]
    kernels: Option<Vec<KernelArg>>,
    /// Comma-separated layers for layered families.
    #[arg(long, value_delimiter = ',')]
    layers: Option<Vec<u32>>,
    #[arg(long, env = "COGSCREEN_OUT_DIR", default_value = ".")]
    out: PathBuf,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Mode {
    Cooccur,
    CrossLabel,
    Overlap,
    Breakdown,
}

#[derive(Args)]
struct AnalyzeArgs {
    #[arg(long, value_enum)]
    mode: Mode,
    #[arg(long)]
    manifest: PathBuf,
    /// Result JSON written by `eval`; required except for cooccur.
    #[arg(long, required_if_eq_any([("mode", "cross-label"), ("mode", "overlap"), ("mode", "breakdown")]))]
    result: Option<PathBuf>,
    /// Restrict to one cognitive test (defaults to the result's test).
    #[arg(long = "test")]
    test_id: Option<String>,
    /// Also write the analysis as JSON.
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Args)]
struct SynthArgs {
    /// Output directory for manifest.jsonl and emb/.
    #[arg(long)]
    out: PathBuf,
    /// JSON file with a full synth spec; other flags are then ignored.
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long, default_value = "SYN")]
    corpus_id: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Speakers per class (HC,MCI,DEM).
    #[arg(long, value_delimiter = ',', default_values_t = [20usize, 20, 20])]
    speakers: Vec<usize>,
    #[arg(long, default_value_t = 16)]
    dim: usize,
    /// Inclusive frame-count range.
    #[arg(long, value_delimiter = ',', default_values_t = [20usize, 40])]
    frames: Vec<usize>,
    /// Class-mean separation in units of frame noise.
    #[arg(long, default_value_t = 5.0)]
    separation: f64,
    /// Length of a corpus-wide offset.
    #[arg(long, default_value_t = 0.0)]
    shift: f64,
    #[arg(long, value_delimiter = ',', default_value = "sVFT")]
    tests: Vec<String>,
    #[arg(long, default_value = "w2v2")]
    family: String,
    /// Write twelve layers with signal in this one only.
    #[arg(long)]
    layer: Option<u32>,
    /// Nine comma-separated joint (cognitive, depression) weights, row-major.
    #[arg(long, value_delimiter = ',')]
    cooccurrence: Option<Vec<f64>>,
    /// Class means of a test score (HC,MCI,DEM), unit noise.
    #[arg(long, value_delimiter = ',')]
    scores: Option<Vec<f64>>,
}

/// Usage errors exit with 2, everything else with 1.
#[derive(Debug)]
struct UsageError(String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    let outcome = match cli.command {
        Command::Validate { manifests } => cmd_validate(&manifests),
        Command::Eval(a) => cmd_eval(&a),
        Command::Analyze(a) => cmd_analyze(&a),
        Command::Report { results, json } => cmd_report(&results, json.as_deref()),
        Command::Synth(a) => cmd_synth(&a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", error_chain(&e));
            if e.downcast_ref::<UsageError>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}

/// The cause chain joined by `: `, skipping causes that the previous
/// message already quotes.
fn error_chain(e: &anyhow::Error) -> String {
    let mut out = String::new();
    for cause in e.chain() {
        let msg = cause.to_string();
        if out.contains(&msg) {
            continue;
        }
        if !out.is_empty() {
            out.push_str(": ");
        }
        out.push_str(&msg);
    }
    out
}

fn load(path: &Path) -> anyhow::Result<Corpus> {
    load_manifest(path).with_context(|| format!("loading {}", path.display()))
}

fn cmd_validate(manifests: &[PathBuf]) -> anyhow::Result<()> {
    for path in manifests {
        let corpus = load(path)?;
        println!("{}: corpus {} with {} sessions", path.display(), corpus.corpus_id(), corpus.len());
        println!("{}", render::class_count_table(&corpus));
    }
    Ok(())
}

fn same_file(a: &Path, b: &Path) -> bool {
    match (fs::canonicalize(a), fs::canonicalize(b)) {
        (Ok(x), Ok(y)) => x == y,
        _ => a == b,
    }
}

fn build_grid(a: &EvalArgs) -> HyperGrid {
    let mut grid = HyperGrid::default();
    if let Some(c) = &a.c {
        grid.c_set = c.clone();
    }
    if let Some(g) = &a.gamma {
        grid.gamma_set = g.clone();
    }
    if let Some(k) = &a.kernels {
        grid.kernels = k
            .iter()
            .map(|k| match k {
                KernelArg::Linear => KernelKind::Linear,
                KernelArg::Rbf => KernelKind::Rbf,
            })
            .collect();
    }
    grid.layer_set = a.layers.clone();
    grid
}

fn result_stem(spec: &ExperimentSpec) -> String {
    let raw = format!(
        "{}_{}_{}_{}_{}_{}_seed{}",
        spec.protocol, spec.train_corpus, spec.test_corpus, spec.test_id, spec.feature_family, spec.target_label, spec.seed
    );
    raw.chars()
        .map(|c| if c.is_ascii_alphanumeric() || "-_.".contains(c) { c } else { '-' })
        .collect()
}

fn cmd_eval(a: &EvalArgs) -> anyhow::Result<()> {
    let protocol = match a.protocol {
        ProtocolArg::Within => Protocol::Within,
        ProtocolArg::Cross => Protocol::Cross,
        ProtocolArg::Mixed => Protocol::Mixed,
    };
    if a.folds < 2 {
        return Err(usage(format!("--folds must be at least 2, got {}", a.folds)));
    }
    if protocol == Protocol::Within && (a.train.is_some() || a.test_corpus.is_some()) {
        return Err(usage("--protocol within takes --corpus, not --train/--test-corpus"));
    }
    if protocol != Protocol::Within && a.corpus.is_some() {
        return Err(usage(format!("--protocol {protocol} takes --train and --test-corpus, not --corpus")));
    }
    if let (Some(t), Some(u)) = (&a.train, &a.test_corpus) {
        if same_file(t, u) {
            return Err(usage(format!("--protocol {protocol} needs two different corpora")));
        }
    }
    let grid = build_grid(a);
    grid.validate().map_err(|e| usage(e.to_string()))?;

    let first = load(a.corpus.as_ref().or(a.train.as_ref()).expect("checked by clap"))?;
    let second = match &a.test_corpus {
        Some(p) => Some(load(p)?),
        None => None,
    };
    let second_id = second.as_ref().map_or(first.corpus_id(), |c| c.corpus_id());
    let mut spec = ExperimentSpec::new(protocol, first.corpus_id(), second_id, &a.test_id, &a.features, a.seed);
    spec.k = a.folds;
    spec.target_label = match a.target {
        TargetArg::Cognitive => LabelKind::Cognitive,
        TargetArg::Depression => LabelKind::Depression,
    };
    spec.pooling = match a.pooling {
        Some(PoolingArg::Mean) => PoolingKind::Mean,
        Some(PoolingArg::Sum) => PoolingKind::Sum,
        None => default_pooling(&a.features),
    };
    spec.validate().map_err(|e| usage(e.to_string()))?;

    let store = FeatureStore::new();
    let result = match (protocol, &second) {
        (Protocol::Within, _) => run_within(&first, &spec, &grid, &store)?,
        (Protocol::Cross, Some(b)) => run_cross(&first, b, &spec, &grid, &store)?,
        (Protocol::Mixed, Some(b)) => run_mixed(&first, b, &spec, &grid, &store)?,
        _ => unreachable!("second corpus required by clap"),
    };

    fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    let stem = result_stem(&spec);
    let json_path = a.out.join(format!("{stem}.json"));
    let text_path = a.out.join(format!("{stem}.txt"));
    fs::write(&json_path, result.to_json() + "\n").with_context(|| format!("writing {}", json_path.display()))?;
    let text = render::result_text(&result);
    fs::write(&text_path, &text).with_context(|| format!("writing {}", text_path.display()))?;
    print!("{text}");
    println!("wrote {} and {}", json_path.display(), text_path.display());
    Ok(())
}

fn read_result(path: &Path) -> anyhow::Result<ExperimentResult> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing result {}", path.display()))
}

fn cmd_analyze(a: &AnalyzeArgs) -> anyhow::Result<()> {
    let corpus = load(&a.manifest)?;
    let result = match &a.result {
        Some(p) => Some(read_result(p)?),
        None => None,
    };
    let test_id = a.test_id.clone().or_else(|| result.as_ref().map(|r| r.spec.test_id.clone()));
    let test = test_id.as_deref();
    if let Some(r) = &result {
        if !r.corpora.iter().any(|c| c == corpus.corpus_id()) {
            bail!(
                "result {} has no predictions for corpus {:?}",
                a.result.as_ref().unwrap().display(),
                corpus.corpus_id()
            );
        }
    }
    let json = match a.mode {
        Mode::Cooccur => {
            let m = cooccurrence(&corpus, test)?;
            println!("Co-occurrence, rows cognitive, columns depression");
            println!("{}", render::grid(&m.counts, "cog", "dep"));
            serde_json::to_string_pretty(&m)?
        }
        Mode::CrossLabel => {
            let r = result.as_ref().expect("required by clap");
            let m = cross_label_confusion(&predictions_for(r, &corpus), &corpus, test)?;
            println!("Cross-label confusion, rows depression, columns predicted class");
            println!("{}", render::grid(&m.counts, "dep", "pred"));
            serde_json::to_string_pretty(&m)?
        }
        Mode::Overlap => {
            let r = result.as_ref().expect("required by clap");
            let reference = cooccurrence(&corpus, test)?.transposed();
            let cross = cross_label_confusion(&predictions_for(r, &corpus), &corpus, test)?;
            let overlap = cell_overlap(&reference, &cross)?;
            println!("Overlap of cross-label cells with co-occurrence cells, rows depression, columns cognitive/predicted");
            println!("{}", render::overlap_grid(&overlap));
            serde_json::to_string_pretty(&overlap)?
        }
        Mode::Breakdown => {
            let r = result.as_ref().expect("required by clap");
            let b = misclassification_breakdown(r, &corpus)?;
            println!("{}", render::breakdown(&b));
            serde_json::to_string_pretty(&b)?
        }
    };
    if let Some(p) = &a.json {
        fs::write(p, json + "\n").with_context(|| format!("writing {}", p.display()))?;
    }
    Ok(())
}

fn cmd_report(results: &[PathBuf], json: Option<&Path>) -> anyhow::Result<()> {
    let mut all = Vec::new();
    for p in results {
        all.push(read_result(p)?);
    }
    let report = format_report(&all);
    print!("{}", report.to_text());
    if let Some(p) = json {
        fs::write(p, report.to_json() + "\n").with_context(|| format!("writing {}", p.display()))?;
    }
    Ok(())
}

fn check_len<T>(flag: &str, values: &[T], n: usize) -> anyhow::Result<()> {
    if values.len() == n {
        Ok(())
    } else {
        Err(usage(format!("{flag} takes {n} comma-separated values, got {}", values.len())))
    }
}

fn cmd_synth(a: &SynthArgs) -> anyhow::Result<()> {
    let spec = match &a.spec {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            serde_json::from_str::<SynthSpec>(&text).with_context(|| format!("parsing synth spec {}", p.display()))?
        }
        None => {
            check_len("--speakers", &a.speakers, 3)?;
            check_len("--frames", &a.frames, 2)?;
            if let Some(w) = &a.cooccurrence {
                check_len("--cooccurrence", w, 9)?;
            }
            if let Some(m) = &a.scores {
                check_len("--scores", m, 3)?;
            }
            let mut s = SynthSpec::new(&a.corpus_id, a.seed);
            s.speakers_per_class = [a.speakers[0], a.speakers[1], a.speakers[2]];
            s.dim = a.dim;
            s.frames = (a.frames[0], a.frames[1]);
            s.separation = a.separation;
            s.corpus_shift = a.shift;
            s.test_ids = a.tests.clone();
            s.feature_family = a.family.clone();
            s.informative_layer = a.layer;
            s.cooccurrence = a.cooccurrence.as_ref().map(|w| {
                let total: f64 = w.iter().sum();
                std::array::from_fn(|i| std::array::from_fn(|j| w[3 * i + j] / total))
            });
            s.test_score = a.scores.as_ref().map(|m| TestScoreModel {
                class_means: [m[0], m[1], m[2]],
                noise_std: 1.0,
            });
            s
        }
    };
    spec.validate().map_err(|e| usage(e.to_string()))?;
    let corpus = generate(&spec, &a.out)?;
    let counts = class_counts_of(corpus.sessions().iter(), LabelKind::Cognitive)?;
    println!(
        "wrote {} ({} sessions, class counts {:?})",
        a.out.join(MANIFEST_NAME).display(),
        corpus.len(),
        counts
    );
    Ok(())
}
