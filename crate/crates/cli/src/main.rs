use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use pdspeech::classical::{
    ClassifierFamily, ClassifierSpec, ForestConfig, Gamma, KernelSpec, SvmParams,
};
use pdspeech::corpus::{generate_synthetic_corpus, load_manifest, SyntheticConfig};
use pdspeech::eval::{
    prepare_corpus, run_pipeline, run_sweep, write_outputs, Branch, EvaluationReport, FeatureTable,
    PipelineConfig,
};
use pdspeech::features::{write_feature_csv, FeatureVector, Standardizer};
use pdspeech::selection::{rank_features, LabeledMatrix, RankMethod};

#[derive(Parser)]
#[command(
    name = "pdspeech",
    version,
    about = "Parkinson's disease speech classification pipeline"
)]
struct Cli {
    /// Worker threads (0 = one per core)
    #[arg(long, global = true, env = "PDSPEECH_THREADS", default_value_t = 0)]
    threads: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic two-group corpus (WAV files plus manifest.csv)
    Synth(SynthArgs),
    /// Extract the 480 statistical MFCC features of every segment to CSV
    Extract(ExtractArgs),
    /// Rank features on the whole corpus and write the ranking to CSV
    Rank(RankArgs),
    /// Leave-one-subject-out evaluation; writes report.json and CSVs
    Evaluate(EvaluateArgs),
    /// LOSO AUC for each feature subset size m; writes report.json and sweep.csv
    Sweep(SweepArgs),
}

#[derive(Args)]
struct SynthArgs {
    /// Output directory
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    #[arg(long, default_value_t = 10)]
    subjects_per_group: usize,
    #[arg(long, default_value_t = 8)]
    segments_per_subject: usize,
    /// Segment length in seconds
    #[arg(long, default_value_t = 1.0)]
    duration: f64,
    /// Class separation in [0, 1]; 0 makes both groups identically distributed
    #[arg(long, default_value_t = 1.0)]
    separation: f64,
}

/// Corpus selection shared by every subcommand that reads a manifest.
#[derive(Args)]
struct InputArgs {
    /// JSON pipeline config; flags override its values [default: built-in defaults]
    #[arg(long)]
    config: Option<PathBuf>,
    /// Corpus manifest CSV [default: manifest.csv]
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Task code: 1 image description, 2 DDK, 3 text reading [default: all tasks]
    #[arg(long)]
    task: Option<u8>,
}

#[derive(Args)]
struct ExtractArgs {
    #[command(flatten)]
    input: InputArgs,
    /// Output CSV
    #[arg(long, default_value = "features.csv")]
    out: PathBuf,
}

#[derive(Args)]
struct RankArgs {
    #[command(flatten)]
    input: InputArgs,
    /// Ranking method: fisher, relieff, trace_ratio, rfs, ls_l21, ll_l21, gini, f_score, t_score [default: ls_l21]
    #[arg(long)]
    method: Option<RankMethod>,
    /// Output CSV
    #[arg(long, default_value = "ranking.csv")]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum BranchArg {
    Classical,
    Cnn,
    Both,
}

#[derive(Clone, Copy, ValueEnum)]
enum FamilyArg {
    SvmRbf,
    SvmLinear,
    SvmPoly,
    Knn,
    Forest,
}

impl FamilyArg {
    fn family(self) -> ClassifierFamily {
        match self {
            FamilyArg::SvmRbf => ClassifierFamily::SvmRbf,
            FamilyArg::SvmLinear => ClassifierFamily::SvmLinear,
            FamilyArg::SvmPoly => ClassifierFamily::SvmPoly,
            FamilyArg::Knn => ClassifierFamily::Knn,
            FamilyArg::Forest => ClassifierFamily::Forest,
        }
    }

    fn spec(self) -> ClassifierSpec {
        let svm = |kernel| ClassifierSpec::Svm(SvmParams::new(kernel, 4.0));
        match self {
            FamilyArg::SvmRbf => svm(KernelSpec::rbf(Gamma::Scale)),
            FamilyArg::SvmLinear => svm(KernelSpec::linear()),
            FamilyArg::SvmPoly => svm(KernelSpec::polynomial(3, Gamma::Scale)),
            FamilyArg::Knn => ClassifierSpec::Knn { k: 5 },
            FamilyArg::Forest => ClassifierSpec::Forest(ForestConfig::default()),
        }
    }
}

/// Options common to `evaluate` and `sweep`.
#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    input: InputArgs,
    /// Ranking method: fisher, relieff, trace_ratio, rfs, ls_l21, ll_l21, gini, f_score, t_score [default: ls_l21]
    #[arg(long)]
    method: Option<RankMethod>,
    /// Classifier with its default hyperparameters (SVMs C=4, gamma=scale; kNN k=5; forest 100 trees) [default: svm-rbf]
    #[arg(long, value_enum)]
    classifier: Option<FamilyArg>,
    /// SVM penalty C [default: 4]
    #[arg(long)]
    svm_c: Option<f64>,
    /// Neighbours for kNN [default: 5]
    #[arg(long)]
    knn_k: Option<usize>,
    /// Tune over this family's default grid inside each training fold [default: no tuning]
    #[arg(long, value_enum)]
    grid: Option<FamilyArg>,
    /// Seed for every stochastic stage [default: 0]
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory [default: results]
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EvaluateArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Branches to run [default: classical]
    #[arg(long, value_enum)]
    branch: Option<BranchArg>,
    /// Number of top-ranked features [default: 100]
    #[arg(long)]
    m: Option<usize>,
    /// CNN training epochs per fold [default: 100]
    #[arg(long)]
    epochs: Option<usize>,
    /// CNN mini-batch size [default: 64]
    #[arg(long)]
    batch_size: Option<usize>,
    /// CNN Adam learning rate [default: 0.001]
    #[arg(long)]
    learning_rate: Option<f64>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Subset sizes: comma-separated values or ranges a:b or a:b:step, e.g. 1:480 [default: 10,20,50,100,200,480]
    #[arg(long, value_parser = parse_m_spec)]
    m: Option<MValues>,
}

#[derive(Clone)]
struct MValues(Vec<usize>);

/// Parses `10,20,50`, `1:480` or `10:480:10` (inclusive ranges).
fn parse_m_spec(s: &str) -> std::result::Result<MValues, String> {
    let num = |t: &str| t.trim().parse::<usize>().map_err(|e| format!("{t:?}: {e}"));
    let mut out = Vec::new();
    for part in s.split(',') {
        let pieces: Vec<&str> = part.split(':').collect();
        match pieces.as_slice() {
            [v] => out.push(num(v)?),
            [a, b] | [a, b, _] => {
                let (a, b) = (num(a)?, num(b)?);
                let step = if pieces.len() == 3 {
                    num(pieces[2])?
                } else {
                    1
                };
                if step == 0 || a > b {
                    return Err(format!("bad range {part:?}"));
                }
                out.extend((a..=b).step_by(step));
            }
            _ => return Err(format!("bad m item {part:?}")),
        }
    }
    if out.is_empty() {
        return Err("no m values".into());
    }
    Ok(MValues(out))
}

/// Default config, then the JSON file, then explicit flags.
fn base_config(input: &InputArgs) -> Result<PipelineConfig> {
    let mut config = match &input.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).with_context(|| {
                format!("stage config: cannot read config file {}", path.display())
            })?;
            serde_json::from_str(&text)
                .with_context(|| format!("stage config: invalid config file {}", path.display()))?
        }
        None => PipelineConfig::default(),
    };
    if let Some(m) = &input.manifest {
        config.manifest = m.clone();
    }
    if let Some(t) = input.task {
        config.task = Some(t);
    }
    Ok(config)
}

fn apply_run_args(config: &mut PipelineConfig, run: &RunArgs) {
    let c = &mut config.classical;
    if let Some(method) = run.method {
        c.ranking = method;
    }
    if let Some(f) = run.classifier {
        c.classifier = f.spec();
    }
    match &mut c.classifier {
        ClassifierSpec::Svm(p) => {
            if let Some(v) = run.svm_c {
                p.c = v;
            }
        }
        ClassifierSpec::Knn { k } => {
            if let Some(v) = run.knn_k {
                *k = v;
            }
        }
        ClassifierSpec::Forest(_) => {}
    }
    if let Some(g) = run.grid {
        c.grid = Some(g.family());
    }
    if let Some(s) = run.seed {
        config.seed = s;
    }
    if let Some(o) = &run.out {
        config.output_dir = Some(o.clone());
    }
}

fn finish(report: &EvaluationReport, config: &PipelineConfig) -> Result<()> {
    let dir = config
        .output_dir
        .clone()
        .unwrap_or_else(|| PathBuf::from("results"));
    let written = write_outputs(report, &dir).context("stage report")?;
    for p in &written {
        log::info!("wrote {}", p.display());
    }
    println!("{}", dir.join("report.json").display());
    Ok(())
}

fn summarize(report: &EvaluationReport) {
    for (name, b) in [("classical", &report.classical), ("cnn", &report.cnn)] {
        if let Some(b) = b {
            let auc = b
                .metrics
                .auc
                .map_or("n/a".to_string(), |a| format!("{a:.4}"));
            eprintln!(
                "{name}: ACC {:.4} AUC {auc} over {} segments",
                b.metrics.classification.accuracy, b.metrics.n_segments
            );
        }
    }
    if let Some(s) = &report.sweep {
        eprintln!(
            "sweep {}: {} points, best m {:?}",
            s.method,
            s.points.len(),
            s.best_m
        );
    }
}

fn synth(args: &SynthArgs) -> Result<()> {
    let config = SyntheticConfig {
        subjects_per_group: args.subjects_per_group,
        segments_per_subject: args.segments_per_subject,
        duration_sec: args.duration,
        separation: args.separation,
        seed: args.seed,
    };
    let manifest = generate_synthetic_corpus(&config, &args.out).context("stage synth")?;
    eprintln!(
        "{} segments written to {}",
        manifest.entries.len(),
        args.out.display()
    );
    Ok(())
}

fn load_table(config: &PipelineConfig) -> Result<(pdspeech::corpus::CorpusManifest, FeatureTable)> {
    config.validate().context("stage config")?;
    let mut manifest = load_manifest(&config.manifest).context("stage ingest")?;
    if let Some(t) = config.task_filter() {
        manifest.entries.retain(|e| e.task == t);
    }
    let corpus = prepare_corpus(&manifest, &config.dsp, None)?;
    Ok((manifest, FeatureTable::from_corpus(&corpus)))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)
            .with_context(|| format!("stage output: {}", parent.display()))?;
    }
    Ok(BufWriter::new(File::create(path).with_context(|| {
        format!("stage output: {}", path.display())
    })?))
}

fn extract(args: &ExtractArgs) -> Result<()> {
    let config = base_config(&args.input)?;
    let (manifest, table) = load_table(&config)?;
    let ids: Vec<Vec<String>> = manifest
        .entries
        .iter()
        .map(|e| {
            vec![
                e.path.display().to_string(),
                e.subject.to_string(),
                e.group.as_str().to_string(),
                e.task.code().to_string(),
            ]
        })
        .collect();
    let rows = table
        .x
        .into_iter()
        .map(FeatureVector::new)
        .collect::<pdspeech::Result<Vec<_>>>()
        .context("stage features")?;
    let out = create(&args.out)?;
    write_feature_csv(
        out,
        &["path", "subject", "group", "task"],
        &ids,
        &rows,
        &config.dsp,
    )
    .context("stage output")?;
    println!("{}", args.out.display());
    Ok(())
}

fn rank(args: &RankArgs) -> Result<()> {
    let mut config = base_config(&args.input)?;
    if let Some(m) = args.method {
        config.classical.ranking = m;
    }
    let (_, table) = load_table(&config)?;
    let standardizer = Standardizer::fit(&table.x).context("stage features")?;
    let data = LabeledMatrix::new(standardizer.transform(&table.x), table.y, table.subjects)
        .context("stage rank")?;
    let ranking = rank_features(&data, config.classical.ranking, &config.classical.ranker)
        .context("stage rank")?;
    ranking
        .write_csv(create(&args.out)?)
        .context("stage output")?;
    println!("{}", args.out.display());
    Ok(())
}

fn evaluate(args: &EvaluateArgs) -> Result<()> {
    let mut config = base_config(&args.run.input)?;
    apply_run_args(&mut config, &args.run);
    if let Some(b) = args.branch {
        config.branch = match b {
            BranchArg::Classical => Branch::Classical,
            BranchArg::Cnn => Branch::Cnn,
            BranchArg::Both => Branch::Both,
        };
    }
    if let Some(m) = args.m {
        config.classical.m = m;
    }
    if let Some(e) = args.epochs {
        config.cnn.max_epochs = e;
    }
    if let Some(b) = args.batch_size {
        config.cnn.batch_size = b;
    }
    if let Some(lr) = args.learning_rate {
        config.cnn.learning_rate = lr;
    }
    let report = run_pipeline(&config)?;
    summarize(&report);
    finish(&report, &config)
}

fn sweep(args: &SweepArgs) -> Result<()> {
    let mut config = base_config(&args.run.input)?;
    apply_run_args(&mut config, &args.run);
    if let Some(m) = &args.m {
        config.classical.sweep_m = m.0.clone();
    }
    let report = run_sweep(&config)?;
    summarize(&report);
    finish(&report, &config)
}

fn run(cli: &Cli) -> Result<()> {
    if cli.threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cli.threads)
            .build_global()
            .context("stage setup")?;
    }
    match &cli.command {
        Command::Synth(a) => synth(a),
        Command::Extract(a) => extract(a),
        Command::Rank(a) => rank(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Sweep(a) => sweep(a),
    }
}

/// Error chain joined by ": ", skipping causes already spelled out by the
/// message that wraps them.
fn describe(e: &anyhow::Error) -> String {
    let mut text = String::new();
    for cause in e.chain() {
        let part = cause.to_string();
        if !text.contains(&part) {
            if !text.is_empty() {
                text.push_str(": ");
            }
            text.push_str(&part);
        }
    }
    text
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", describe(&e));
            ExitCode::FAILURE
        }
    }
}
