mod output;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use output::Run;
use revfeat::conllu::{parse_corpus, serialize_corpus};
use revfeat::embedding::{load_embeddings, mock_embed};
use revfeat::humaneval::{parse_records_tsv, summarize, vote_items, ControlPolicy};
use revfeat::metrics::{aggregate_folds, compute_beta, score, Level, TimingSample, DEFAULT_BETA};
use revfeat::select::{select_instances, RankOrder, SelectionConfig, DEFAULT_FRACTIONS};
use revfeat::split::{split_in_domain, split_out_of_domain, FoldPlan, DEFAULT_K, DEFAULT_SEED};
use revfeat::stats::compute_stats;
use revfeat::transfer::{parse_feature_tsv, transfer_annotations, Occurrence, Overwrite, TransferConfig};
use revfeat::{AnnotatedCorpus, EmbeddingStore, FeatureSet, MatchOn};

/// Feature-annotated review corpora: annotation transfer, instance
/// selection, fold plans and scoring.
#[derive(Parser)]
#[command(name = "revfeat", version, about)]
struct Cli {
    /// Seed for every randomized step
    #[arg(long, global = true, default_value_t = DEFAULT_SEED)]
    seed: u64,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Label a corpus with B/I-feature tags from per-app feature phrases
    Transfer(TransferArgs),
    /// Build nested training partitions from distances to feature centroids
    Select(SelectArgs),
    /// Write a cross-validation fold plan
    Split(SplitArgs),
    /// Score predicted labels against gold labels
    Score(ScoreArgs),
    /// Derive beta from mean annotation timings
    Beta(BetaArgs),
    /// Filter annotators, vote, and summarize questionnaire answers
    Humaneval(HumanevalArgs),
    /// Per-category corpus statistics
    Stats(StatsArgs),
    /// Deterministic bag-of-lemmas embeddings for testing
    MockEmbed(MockEmbedArgs),
    /// Check a corpus for BIO and metadata errors
    Validate(ValidateArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum MatchArg {
    Lemma,
    Surface,
}

impl From<MatchArg> for MatchOn {
    fn from(m: MatchArg) -> Self {
        match m {
            MatchArg::Lemma => MatchOn::Lemma,
            MatchArg::Surface => MatchOn::Surface,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum OccurrenceArg {
    First,
    All,
}

#[derive(Clone, Copy, ValueEnum)]
enum OverwriteArg {
    Skip,
    Literal,
}

#[derive(Clone, Copy, ValueEnum)]
enum OrderArg {
    FarthestFirst,
    NearestFirst,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    InDomain,
    OutOfDomain,
}

#[derive(Clone, Copy, ValueEnum)]
enum LevelArg {
    Token,
    Span,
}

#[derive(Args)]
struct TransferArgs {
    #[arg(long)]
    corpus: PathBuf,
    /// TSV with columns app_id, feature_phrase[, feature_lemmas]
    #[arg(long)]
    features: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Per-feature counts as JSON
    #[arg(long)]
    report: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "lemma")]
    match_on: MatchArg,
    #[arg(long, value_enum, default_value = "first")]
    occurrence: OccurrenceArg,
    #[arg(long, value_enum, default_value = "skip")]
    overwrite: OverwriteArg,
    /// Reset existing labels to O before transferring
    #[arg(long)]
    clear: bool,
}

#[derive(Args)]
struct SelectArgs {
    /// Labeled corpus
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    features: PathBuf,
    /// JSON Lines, one {"review_id", "vector"} per line
    #[arg(long)]
    embeddings: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Per-feature ranking as TSV
    #[arg(long)]
    audit: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_FRACTIONS.to_vec())]
    fractions: Vec<f64>,
    #[arg(long, value_enum, default_value = "farthest-first")]
    order: OrderArg,
    #[arg(long, value_enum, default_value = "lemma")]
    match_on: MatchArg,
    /// Fold plan; with --fold, only that fold's training reviews are used
    #[arg(long, requires = "fold")]
    folds: Option<PathBuf>,
    #[arg(long, requires = "folds")]
    fold: Option<String>,
}

#[derive(Args)]
struct SplitArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long, value_enum, default_value = "in-domain")]
    mode: ModeArg,
    #[arg(long, default_value_t = DEFAULT_K)]
    k: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ScoreArgs {
    #[arg(long)]
    gold: PathBuf,
    #[arg(long)]
    pred: PathBuf,
    #[arg(long, value_enum, default_value = "token")]
    level: LevelArg,
    #[arg(long, default_value_t = DEFAULT_BETA)]
    beta: f64,
    /// Score each fold's test set and aggregate
    #[arg(long)]
    folds: Option<PathBuf>,
    /// JSON report; printed to stdout when omitted
    #[arg(long)]
    out: Option<PathBuf>,
    /// Plain-text report
    #[arg(long)]
    text: Option<PathBuf>,
}

#[derive(Args)]
struct BetaArgs {
    /// Mean seconds to extract features by hand
    #[arg(long = "a-t")]
    a_t: f64,
    /// Mean seconds to check an extracted feature
    #[arg(long = "a-small-t")]
    a_small_t: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct HumanevalArgs {
    #[arg(long)]
    records: PathBuf,
    /// Corpus used to look up categories missing from the records
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[arg(long, default_value_t = 5)]
    controls: usize,
    #[arg(long, default_value_t = 4)]
    min_correct: usize,
    #[arg(long, default_value_t = 5)]
    min_annotators: usize,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    text: Option<PathBuf>,
}

#[derive(Args)]
struct StatsArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    features: PathBuf,
    /// TSV table
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Args)]
struct MockEmbedArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long, default_value_t = 64)]
    dim: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ValidateArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    features: Option<PathBuf>,
}

fn load_corpus(run: &mut Run, path: &Path) -> Result<AnnotatedCorpus> {
    let text = run.read(path)?;
    parse_corpus(&text).with_context(|| path.display().to_string())
}

fn load_features(run: &mut Run, path: &Path) -> Result<FeatureSet> {
    let text = run.read(path)?;
    parse_feature_tsv(&text).with_context(|| path.display().to_string())
}

fn pretty(value: &impl serde::Serialize) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

fn transfer(args: TransferArgs) -> Result<()> {
    let mut run = Run::new("transfer");
    let mut corpus = load_corpus(&mut run, &args.corpus)?;
    if args.clear {
        corpus = AnnotatedCorpus::new(corpus.reviews().iter().map(|r| r.cleared()).collect())?;
    }
    let features = load_features(&mut run, &args.features)?;
    let config = TransferConfig {
        match_on: args.match_on.into(),
        occurrence: match args.occurrence {
            OccurrenceArg::First => Occurrence::First,
            OccurrenceArg::All => Occurrence::AllNonOverlapping,
        },
        overwrite: match args.overwrite {
            OverwriteArg::Skip => Overwrite::SkipConflicts,
            OverwriteArg::Literal => Overwrite::LiteralOverwrite,
        },
    };
    let (labeled, report) = transfer_annotations(&corpus, &features, &config)?;
    log::info!(
        "{} annotations in {} reviews, {} conflicts skipped",
        report.annotations_made,
        report.reviews_touched,
        report.conflicts_skipped
    );
    run.output(&args.out, serialize_corpus(&labeled));
    if let Some(path) = &args.report {
        run.output(path, pretty(&report)?);
    }
    run.finish(json!({ "transfer": config, "clear": args.clear }))
}

fn select(args: SelectArgs) -> Result<()> {
    let mut run = Run::new("select");
    let mut corpus = load_corpus(&mut run, &args.corpus)?;
    if let (Some(path), Some(name)) = (&args.folds, &args.fold) {
        let plan = FoldPlan::from_json(&run.read(path)?)?;
        let Some((i, _)) = plan.fold(name) else {
            bail!("fold `{name}` not in {}", path.display());
        };
        let train = plan.train(i, &corpus);
        corpus = corpus.filter(|r| train.contains(r.review_id()));
        log::info!("restricted to {} training reviews of {name}", corpus.len());
    }
    let features = load_features(&mut run, &args.features)?;
    let store: EmbeddingStore = load_embeddings(&run.read(&args.embeddings)?)?;
    let mut config = SelectionConfig::new(args.fractions)?;
    config.order = match args.order {
        OrderArg::FarthestFirst => RankOrder::FarthestFirst,
        OrderArg::NearestFirst => RankOrder::NearestFirst,
    };
    config.match_on = args.match_on.into();
    let plan = select_instances(&corpus, &features, &store, &config)?;
    run.output(&args.out, pretty(&plan.to_json())?);
    if let Some(path) = &args.audit {
        run.output(path, plan.audit_tsv());
    }
    run.finish(json!({ "selection": config, "fold": args.fold }))
}

fn split(args: SplitArgs, seed: u64) -> Result<()> {
    let mut run = Run::new("split");
    let corpus = load_corpus(&mut run, &args.corpus)?;
    let plan = match args.mode {
        ModeArg::InDomain => split_in_domain(&corpus, args.k, seed)?,
        ModeArg::OutOfDomain => split_out_of_domain(&corpus)?,
    };
    for w in &plan.warnings {
        log::warn!("{w}");
    }
    let mut text = plan.to_json();
    text.push('\n');
    run.output(&args.out, text);
    run.finish(json!({ "mode": plan.mode, "k": plan.k, "seed": plan.seed }))
}

fn score_cmd(args: ScoreArgs) -> Result<()> {
    let mut run = Run::new("score");
    let gold = load_corpus(&mut run, &args.gold)?;
    let pred = load_corpus(&mut run, &args.pred)?;
    let level = match args.level {
        LevelArg::Token => Level::Token,
        LevelArg::Span => Level::Span,
    };
    let (json_text, text) = match &args.folds {
        None => {
            let report = score(level, &gold, &pred, args.beta)?;
            (pretty(&report)?, report.to_text())
        }
        Some(path) => {
            let plan = FoldPlan::from_json(&run.read(path)?)?;
            let mut reports = Vec::with_capacity(plan.folds.len());
            for fold in &plan.folds {
                let g = gold.filter(|r| fold.test.contains(r.review_id()));
                let p = pred.filter(|r| fold.test.contains(r.review_id()));
                let report = score(level, &g, &p, args.beta).with_context(|| format!("fold {}", fold.name))?;
                log::info!("{}: f_beta {:.4}", fold.name, report.f_beta);
                reports.push(report);
            }
            let summary = aggregate_folds(&reports)?;
            let names: Vec<&str> = plan.folds.iter().map(|f| f.name.as_str()).collect();
            let value = json!({ "folds": names, "per_fold": reports, "summary": summary });
            (pretty(&value)?, summary.to_text())
        }
    };
    match &args.out {
        Some(path) => run.output(path, json_text),
        None => print!("{json_text}"),
    }
    if let Some(path) = &args.text {
        run.output(path, text);
    }
    run.finish(json!({ "level": level, "beta": args.beta, "folds": args.folds }))
}

fn beta(args: BetaArgs) -> Result<()> {
    let sample = TimingSample::new(args.a_t, args.a_small_t)?;
    let beta = compute_beta(&sample);
    println!("{beta:.3}");
    if let Some(path) = &args.out {
        let mut run = Run::new("beta");
        run.output(path, pretty(&json!({ "beta": beta }))?);
        run.finish(json!({ "a_t": args.a_t, "a_small_t": args.a_small_t }))?;
    }
    Ok(())
}

fn humaneval(args: HumanevalArgs) -> Result<()> {
    let mut run = Run::new("humaneval");
    let records = parse_records_tsv(&run.read(&args.records)?)?;
    let corpus = match &args.corpus {
        Some(path) => Some(load_corpus(&mut run, path)?),
        None => None,
    };
    let policy = ControlPolicy::new(args.controls, args.min_correct)?;
    let category_of = |id: &str| corpus.as_ref().and_then(|c| c.get(id)).map(|r| r.category().to_string());
    let (items, rejected, coverage) = vote_items(&records, &policy, args.min_annotators, category_of)?;
    log::info!(
        "{} items voted, {} below {} annotators, {} annotator sessions rejected",
        coverage.voted,
        coverage.insufficient.len(),
        args.min_annotators,
        rejected.len()
    );
    let summary = summarize(&items)?;
    let value = json!({
        "summary": summary,
        "items": items,
        "rejected": rejected,
        "coverage": coverage,
    });
    run.output(&args.out, pretty(&value)?);
    if let Some(path) = &args.text {
        run.output(path, summary.to_text());
    }
    run.finish(json!({
        "controls": args.controls,
        "min_correct": args.min_correct,
        "min_annotators": args.min_annotators,
    }))
}

fn stats(args: StatsArgs) -> Result<()> {
    let mut run = Run::new("stats");
    let corpus = load_corpus(&mut run, &args.corpus)?;
    let features = load_features(&mut run, &args.features)?;
    let stats = compute_stats(&corpus, &features)?;
    for app in &stats.multi_category_apps {
        log::warn!("app {app} appears in several categories");
    }
    run.output(&args.out, stats.to_tsv());
    if let Some(path) = &args.json {
        run.output(path, pretty(&stats)?);
    }
    run.finish(json!({}))
}

fn mock(args: MockEmbedArgs) -> Result<()> {
    if args.dim == 0 {
        bail!("--dim must be positive");
    }
    let mut run = Run::new("mock-embed");
    let corpus = load_corpus(&mut run, &args.corpus)?;
    let store = EmbeddingStore::from_pairs(
        corpus
            .reviews()
            .iter()
            .map(|r| (r.review_id().to_string(), mock_embed::<f64>(r, args.dim))),
    )?;
    run.output(&args.out, store.to_jsonl());
    run.finish(json!({ "dim": args.dim }))
}

fn validate(args: ValidateArgs) -> Result<()> {
    let mut run = Run::new("validate");
    let corpus = load_corpus(&mut run, &args.corpus)?;
    corpus.check_bio().with_context(|| args.corpus.display().to_string())?;
    if let Some(path) = &args.features {
        let features = load_features(&mut run, path)?;
        let apps: std::collections::BTreeSet<&str> = corpus.reviews().iter().map(|r| r.app_id()).collect();
        for f in features.features() {
            if !apps.contains(f.app_id()) {
                log::warn!("feature `{}` names app {} which has no reviews", f.text(), f.app_id());
            }
        }
    }
    println!("{}: {} reviews, ok", args.corpus.display(), corpus.len());
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("FREX_LOG", "warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Command::Transfer(a) => transfer(a),
        Command::Select(a) => select(a),
        Command::Split(a) => split(a, cli.seed),
        Command::Score(a) => score_cmd(a),
        Command::Beta(a) => beta(a),
        Command::Humaneval(a) => humaneval(a),
        Command::Stats(a) => stats(a),
        Command::MockEmbed(a) => mock(a),
        Command::Validate(a) => validate(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
