//! Command-line entry point: `gen`, `train`, `eval`, `rank`, `correlate`,
//! and `analyze` subcommands over the file formats of the dataset and
//! analysis modules.
//!
//! Options can come from a TOML config file (`--config`); flags win over
//! file values. Paths in the config file resolve relative to the config's
//! directory.

use std::collections::HashSet;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use crate::analysis::{
    correlation_table, disagreement, e_class, e_time, load_analysis_table, load_lexicon,
    load_probability_matrix, text_counts, tokenize, AnalysisTable,
};
use crate::dataset::{
    generate_synthetic, load_features, load_pairs, load_ratings, load_splits, split_captions,
    write_features, write_pairs, write_ratings, write_splits, FeatureTable, PairSet, Subset,
};
use crate::error::{Error, Result};
use crate::metrics::{evaluate_retrieval, rank_all_queries, spearman};
use crate::model::{
    load_checkpoint, save_checkpoint, train, LossMode, TrainConfig, TrainData,
};

#[derive(Parser)]
#[command(name = "relrank", version, about = "Audio-text relevance learning experiments")]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset (features, ratings, pairs, splits)
    Gen(GenArgs),
    /// Train dual-encoder models over repeated seeds
    Train(TrainArgs),
    /// Evaluate checkpoints with retrieval metrics (mAP, R@k)
    Eval(EvalArgs),
    /// Dump per-query audio rankings for one checkpoint
    Rank(RankArgs),
    /// Rank-correlate model similarities against relevance ratings
    Correlate(CorrelateArgs),
    /// Build the feature-vs-rating correlation table
    Analyze(AnalyzeArgs),
}

/// Optional TOML config file mirroring the common flags.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    #[serde(default)]
    paths: PathsSection,
    #[serde(default)]
    train: TrainSection,
    #[serde(default)]
    eval: EvalSection,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct PathsSection {
    audio_features: Option<PathBuf>,
    caption_features: Option<PathBuf>,
    ratings: Option<PathBuf>,
    pairs: Option<PathBuf>,
    splits: Option<PathBuf>,
    output_dir: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct TrainSection {
    loss: Option<String>,
    omega: Option<f64>,
    tau: Option<f64>,
    alpha: Option<f64>,
    lr0: Option<f64>,
    plateau_patience: Option<usize>,
    lr_factor: Option<f64>,
    stop_patience: Option<usize>,
    max_epochs: Option<usize>,
    batch_size: Option<usize>,
    embed_dim: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct EvalSection {
    k: Option<usize>,
    repeat: Option<usize>,
    base_seed: Option<u64>,
}

fn load_config(path: Option<&Path>) -> Result<(FileConfig, PathBuf)> {
    match path {
        None => Ok((FileConfig::default(), PathBuf::from("."))),
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            let config: FileConfig =
                toml::from_str(&text).map_err(|e| Error::parse(p, None, e.to_string()))?;
            let dir = p.parent().unwrap_or(Path::new(".")).to_path_buf();
            Ok((config, dir))
        }
    }
}

/// Flag wins; a config-file path resolves relative to the config dir.
fn resolve_path(
    flag: Option<PathBuf>,
    from_config: Option<&PathBuf>,
    config_dir: &Path,
    what: &str,
) -> Result<PathBuf> {
    if let Some(p) = flag {
        return Ok(p);
    }
    if let Some(p) = from_config {
        return Ok(config_dir.join(p));
    }
    Err(Error::config(format!(
        "missing {what}: pass the flag or set it in the config file"
    )))
}

#[derive(Args)]
struct GenArgs {
    /// Output directory for the generated files
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Number of captions (each gets one positive audio and one rated list)
    #[arg(long, default_value_t = 600)]
    captions: usize,
    /// Number of audio items in the pool
    #[arg(long, default_value_t = 1009)]
    audio: usize,
    /// Observed feature dimension for both modalities
    #[arg(long, default_value_t = 24)]
    dim: usize,
    /// Rated audio items per caption
    #[arg(long, default_value_t = 17)]
    list_size: usize,
    /// Isotropic feature noise scale
    #[arg(long, default_value_t = 0.5)]
    noise: f64,
    /// Fraction of captions in the development split
    #[arg(long, default_value_t = 0.6)]
    dev_frac: f64,
    /// Fraction of captions in the validation split
    #[arg(long, default_value_t = 0.2)]
    val_frac: f64,
}

#[derive(Args)]
struct DataArgs {
    /// TOML config file with [paths]/[train]/[eval] sections
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    audio_features: Option<PathBuf>,
    #[arg(long)]
    caption_features: Option<PathBuf>,
    #[arg(long)]
    ratings: Option<PathBuf>,
    #[arg(long)]
    pairs: Option<PathBuf>,
    #[arg(long)]
    splits: Option<PathBuf>,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Output directory for checkpoints and reports
    #[arg(long)]
    out: Option<PathBuf>,
    /// Objective: listnet, infonce, or joint
    #[arg(long)]
    loss: Option<String>,
    #[arg(long)]
    omega: Option<f64>,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    lr0: Option<f64>,
    #[arg(long)]
    plateau_patience: Option<usize>,
    #[arg(long)]
    lr_factor: Option<f64>,
    #[arg(long)]
    stop_patience: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    embed_dim: Option<usize>,
    /// Number of repeated runs (seeds base_seed + 0..repeat)
    #[arg(long)]
    repeat: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Checkpoint files to evaluate (repeatable)
    #[arg(long = "checkpoint", required = true)]
    checkpoints: Vec<PathBuf>,
    #[arg(long)]
    k: Option<usize>,
    /// Report output path (stdout when omitted)
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RankArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    checkpoint: PathBuf,
    /// Output CSV of per-query rankings
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct CorrelateArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    checkpoint: PathBuf,
    /// Report output path (stdout when omitted)
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct AnalyzeArgs {
    /// Analysis table CSV with pair_id plus precomputed columns
    #[arg(long)]
    table: PathBuf,
    /// Directory of per-clip probability matrices (<audio_id>.csv)
    #[arg(long)]
    prob_dir: Option<PathBuf>,
    /// Captions CSV (pair_id,audio_id,caption) for text count features
    #[arg(long)]
    captions: Option<PathBuf>,
    /// Frequent-word lexicon, one word per line, most frequent first
    #[arg(long)]
    freq_words: Option<PathBuf>,
    /// Content-word lexicon, one word per line
    #[arg(long)]
    content_words: Option<PathBuf>,
    /// Cutoff applied to the frequent-word lexicon
    #[arg(long, default_value_t = 500)]
    freq_cutoff: usize,
    /// Target columns, comma separated
    #[arg(long, default_value = "HR,MR,D(H,M),APT")]
    targets: String,
    /// Feature columns, comma separated (defaults to every non-target column)
    #[arg(long)]
    features: Option<String>,
    /// Output CSV for the correlation table
    #[arg(long)]
    out: PathBuf,
}

/// Parses argv and runs the selected subcommand.
pub fn run<I, T>(args: I) -> Result<()>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = Cli::parse_from(args);
    match cli.command {
        Command::Gen(args) => cmd_gen(args),
        Command::Train(args) => cmd_train(args),
        Command::Eval(args) => cmd_eval(args),
        Command::Rank(args) => cmd_rank(args),
        Command::Correlate(args) => cmd_correlate(args),
        Command::Analyze(args) => cmd_analyze(args),
    }
}

fn cmd_gen(args: GenArgs) -> Result<()> {
    let data = generate_synthetic(
        args.seed,
        args.captions,
        args.audio,
        args.dim,
        args.list_size,
        args.noise,
    )?;
    let splits = split_captions(data.captions.ids(), args.seed, args.dev_frac, args.val_frac)?;
    std::fs::create_dir_all(&args.out).map_err(|e| Error::io(&args.out, e))?;
    write_features(&args.out.join("audio_features.csv"), &data.audio)?;
    write_features(&args.out.join("caption_features.csv"), &data.captions)?;
    write_ratings(&args.out.join("ratings.csv"), &data.lists)?;
    write_pairs(&args.out.join("pairs.csv"), &data.pairs)?;
    write_splits(&args.out.join("splits.csv"), &splits)?;
    println!(
        "wrote {} captions x {} audio (list size {}) to {}",
        args.captions,
        args.audio,
        args.list_size,
        args.out.display()
    );
    Ok(())
}

struct LoadedData {
    audio: FeatureTable,
    captions: FeatureTable,
    pairs: Option<PairSet>,
    lists: Option<Vec<crate::dataset::RelevanceList>>,
    splits: crate::dataset::SplitSpec,
}

fn load_data(args: &DataArgs, config: &FileConfig, config_dir: &Path, need_ratings: bool, need_pairs: bool) -> Result<LoadedData> {
    let audio_path = resolve_path(
        args.audio_features.clone(),
        config.paths.audio_features.as_ref(),
        config_dir,
        "--audio-features",
    )?;
    let caption_path = resolve_path(
        args.caption_features.clone(),
        config.paths.caption_features.as_ref(),
        config_dir,
        "--caption-features",
    )?;
    let splits_path = resolve_path(
        args.splits.clone(),
        config.paths.splits.as_ref(),
        config_dir,
        "--splits",
    )?;
    let audio = load_features(&audio_path)?;
    let captions = load_features(&caption_path)?;
    let splits = load_splits(&splits_path)?;

    let lists = if need_ratings {
        let path = resolve_path(
            args.ratings.clone(),
            config.paths.ratings.as_ref(),
            config_dir,
            "--ratings (required by this loss mode)",
        )?;
        let (lists, dropped) = load_ratings(&path)?;
        if dropped > 0 {
            eprintln!("warning: dropped {dropped} all-zero relevance lists from {}", path.display());
        }
        Some(lists)
    } else {
        None
    };
    let pairs = if need_pairs {
        let path = resolve_path(
            args.pairs.clone(),
            config.paths.pairs.as_ref(),
            config_dir,
            "--pairs",
        )?;
        Some(load_pairs(&path)?)
    } else {
        None
    };
    Ok(LoadedData {
        audio,
        captions,
        pairs,
        lists,
        splits,
    })
}

fn build_train_config(args: &TrainArgs, config: &FileConfig) -> Result<(TrainConfig, usize, u64)> {
    let defaults = TrainConfig::default();
    let loss_mode = match args.loss.as_deref().or(config.train.loss.as_deref()) {
        Some(s) => s.parse::<LossMode>()?,
        None => defaults.loss_mode,
    };
    let train_config = TrainConfig {
        loss_mode,
        omega: args.omega.or(config.train.omega).unwrap_or(defaults.omega),
        tau: args.tau.or(config.train.tau).unwrap_or(defaults.tau),
        alpha: args.alpha.or(config.train.alpha).unwrap_or(defaults.alpha),
        lr0: args.lr0.or(config.train.lr0).unwrap_or(defaults.lr0),
        plateau_patience: args
            .plateau_patience
            .or(config.train.plateau_patience)
            .unwrap_or(defaults.plateau_patience),
        lr_factor: args
            .lr_factor
            .or(config.train.lr_factor)
            .unwrap_or(defaults.lr_factor),
        stop_patience: args
            .stop_patience
            .or(config.train.stop_patience)
            .unwrap_or(defaults.stop_patience),
        max_epochs: args
            .epochs
            .or(config.train.max_epochs)
            .unwrap_or(defaults.max_epochs),
        batch_size: args
            .batch_size
            .or(config.train.batch_size)
            .unwrap_or(defaults.batch_size),
        seed: 0,
        embed_dim: args
            .embed_dim
            .or(config.train.embed_dim)
            .unwrap_or(defaults.embed_dim),
    };
    train_config.validate()?;
    let repeat = args.repeat.or(config.eval.repeat).unwrap_or(5);
    if repeat < 1 {
        return Err(Error::config("repeat must be >= 1".to_string()));
    }
    let base_seed = args.seed.or(config.eval.base_seed).unwrap_or(0);
    Ok((train_config, repeat, base_seed))
}

fn cmd_train(args: TrainArgs) -> Result<()> {
    let (config, config_dir) = load_config(args.data.config.as_deref())?;
    let (mut train_config, repeat, base_seed) = build_train_config(&args, &config)?;
    let needs_lists = matches!(train_config.loss_mode, LossMode::ListNet | LossMode::Joint);
    let needs_pairs = matches!(train_config.loss_mode, LossMode::InfoNce | LossMode::Joint);
    let data = load_data(&args.data, &config, &config_dir, needs_lists, needs_pairs)?;
    let out = resolve_path(
        args.out.clone(),
        config.paths.output_dir.as_ref(),
        &config_dir,
        "--out",
    )?;
    std::fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;

    for run in 0..repeat {
        train_config.seed = base_seed + run as u64;
        let train_data = TrainData {
            audio: &data.audio,
            captions: &data.captions,
            pairs: data.pairs.as_ref(),
            lists: data.lists.as_deref(),
            split: &data.splits,
        };
        let (enc, report) = train(&train_data, &train_config)?;
        let ckpt_path = out.join(format!("checkpoint_{run}.json"));
        save_checkpoint(&ckpt_path, &enc, &train_config)?;
        let report_json = serde_json::to_string_pretty(&report)
            .map_err(|e| Error::record(format!("report serialization: {e}")))?;
        let report_path = out.join(format!("report_{run}.json"));
        std::fs::write(&report_path, report_json).map_err(|e| Error::io(&report_path, e))?;
        println!(
            "run {run} (seed {}): best epoch {} of {}, final lr {:e}",
            train_config.seed,
            report.best_epoch,
            report.val_loss.len(),
            report.final_lr
        );
    }
    Ok(())
}

/// Restricts a pair set to captions of one split subset.
fn subset_pairs(pairs: &PairSet, splits: &crate::dataset::SplitSpec, subset: Subset) -> Result<PairSet> {
    let mut out = PairSet::new();
    for (c, a) in pairs.iter() {
        if splits.subset_of(c) == Some(subset) {
            out.insert(c.to_string(), a.to_string())?;
        }
    }
    if out.is_empty() {
        return Err(Error::config(format!(
            "no captions in the {} split",
            subset.as_str()
        )));
    }
    Ok(out)
}

fn write_report(path: Option<&Path>, lines: &[String]) -> Result<()> {
    match path {
        None => {
            for line in lines {
                println!("{line}");
            }
            Ok(())
        }
        Some(p) => {
            let mut out = std::fs::File::create(p).map_err(|e| Error::io(p, e))?;
            for line in lines {
                writeln!(out, "{line}").map_err(|e| Error::io(p, e))?;
            }
            Ok(())
        }
    }
}

fn mean_sd(values: &[f64]) -> (f64, Option<f64>) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, None);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, Some(var.sqrt()))
}

fn summary_line(name: &str, values: &[f64]) -> String {
    match mean_sd(values) {
        (mean, Some(sd)) => format!("{name} {mean:.3} \u{00b1} {sd:.3}"),
        (mean, None) => format!("{name} {mean:.3}"),
    }
}

fn cmd_eval(args: EvalArgs) -> Result<()> {
    let (config, config_dir) = load_config(args.data.config.as_deref())?;
    let data = load_data(&args.data, &config, &config_dir, false, true)?;
    let pairs = data.pairs.as_ref().expect("pairs requested");
    let eval_pairs = subset_pairs(pairs, &data.splits, Subset::Evaluation)?;
    let k = args.k.or(config.eval.k).unwrap_or(10);
    if k == 0 {
        return Err(Error::config("k must be >= 1".to_string()));
    }
    if k > data.audio.len() {
        eprintln!(
            "warning: k = {k} exceeds the audio pool size {}; recall is over the whole pool",
            data.audio.len()
        );
    }

    let mut maps = Vec::new();
    let mut recalls = Vec::new();
    let mut lines = Vec::new();
    for (run, ckpt) in args.checkpoints.iter().enumerate() {
        let (enc, _) = load_checkpoint(ckpt)?;
        let scores = evaluate_retrieval(&enc, &data.audio, &data.captions, &eval_pairs, k)?;
        lines.push(format!("run_{run}_map={}", scores.map));
        lines.push(format!("run_{run}_r_at_{k}={}", scores.recall));
        maps.push(scores.map);
        recalls.push(scores.recall);
    }
    lines.push(summary_line("map", &maps));
    lines.push(summary_line(&format!("r_at_{k}"), &recalls));
    write_report(args.out.as_deref(), &lines)
}

fn cmd_rank(args: RankArgs) -> Result<()> {
    let (config, config_dir) = load_config(args.data.config.as_deref())?;
    let data = load_data(&args.data, &config, &config_dir, false, true)?;
    let pairs = data.pairs.as_ref().expect("pairs requested");
    let eval_pairs = subset_pairs(pairs, &data.splits, Subset::Evaluation)?;
    let (enc, _) = load_checkpoint(&args.checkpoint)?;
    let lists = rank_all_queries(&enc, &data.audio, &data.captions, &eval_pairs)?;
    let mut out = std::fs::File::create(&args.out).map_err(|e| Error::io(&args.out, e))?;
    writeln!(out, "caption_id,rank,audio_id").map_err(|e| Error::io(&args.out, e))?;
    for list in &lists {
        for (rank, audio_id) in list.items.iter().enumerate() {
            writeln!(out, "{},{},{audio_id}", list.query_id, rank + 1)
                .map_err(|e| Error::io(&args.out, e))?;
        }
    }
    println!("wrote rankings for {} queries to {}", lists.len(), args.out.display());
    Ok(())
}

fn cmd_correlate(args: CorrelateArgs) -> Result<()> {
    let (config, config_dir) = load_config(args.data.config.as_deref())?;
    let data = load_data(&args.data, &config, &config_dir, true, false)?;
    let lists = data.lists.as_ref().expect("ratings requested");
    let (enc, _) = load_checkpoint(&args.checkpoint)?;

    let mut ratings = Vec::new();
    let mut sims = Vec::new();
    for list in lists {
        if data.splits.subset_of(&list.caption_id) != Some(Subset::Evaluation) {
            continue;
        }
        let caption_features = data
            .captions
            .require(&list.caption_id, "caption features for correlation")?;
        for (audio_id, rating) in &list.items {
            let audio_features = data
                .audio
                .require(audio_id, "audio features for correlation")?;
            ratings.push(*rating);
            sims.push(enc.score_pair(audio_features, caption_features)?);
        }
    }
    if ratings.is_empty() {
        return Err(Error::config(
            "no rated captions in the evaluation split".to_string(),
        ));
    }
    let result = spearman(&sims, &ratings)?;
    let lines = vec![
        format!("spearman_rho={}", result.coefficient),
        format!("spearman_p={}", result.p_value),
        format!("n={}", result.n),
    ];
    write_report(args.out.as_deref(), &lines)
}

fn cmd_analyze(args: AnalyzeArgs) -> Result<()> {
    let base = load_analysis_table(&args.table)?;
    let pair_ids = base.pair_ids().to_vec();
    let mut table = AnalysisTable::new(pair_ids.clone())?;
    for name in base.column_names().map(str::to_string).collect::<Vec<_>>() {
        table.add_column(&name, base.column(&name)?.to_vec())?;
    }

    // Entropy features from raw probability matrices, when given. The
    // captions CSV supplies the pair -> audio mapping.
    if let (Some(prob_dir), Some(captions_path)) = (&args.prob_dir, &args.captions) {
        let caption_rows = load_caption_rows(captions_path)?;
        let mut e_class_col = Vec::with_capacity(pair_ids.len());
        let mut e_time_col = Vec::with_capacity(pair_ids.len());
        for pid in &pair_ids {
            let row = caption_rows
                .iter()
                .find(|(p, _, _)| p == pid)
                .ok_or_else(|| Error::MissingId {
                    id: pid.clone(),
                    context: format!("pair missing from {}", captions_path.display()),
                })?;
            let matrix = load_probability_matrix(&prob_dir.join(format!("{}.csv", row.1)))?;
            e_class_col.push(e_class(&matrix)?);
            e_time_col.push(e_time(&matrix)?);
        }
        table.add_column("e-class", e_class_col)?;
        table.add_column("e-time", e_time_col)?;
    }

    // Text count features from captions and lexicons, when given.
    if let (Some(captions_path), Some(freq_path), Some(content_path)) =
        (&args.captions, &args.freq_words, &args.content_words)
    {
        let caption_rows = load_caption_rows(captions_path)?;
        let freq = load_lexicon(freq_path, Some(args.freq_cutoff))?;
        let content_list = load_lexicon(content_path, None)?;
        let content: HashSet<String> = content_list.words().map(str::to_string).collect();
        let mut words = Vec::new();
        let mut c_words = Vec::new();
        let mut fr_words = Vec::new();
        let mut fr_c_words = Vec::new();
        for pid in &pair_ids {
            let row = caption_rows
                .iter()
                .find(|(p, _, _)| p == pid)
                .ok_or_else(|| Error::MissingId {
                    id: pid.clone(),
                    context: format!("pair missing from {}", captions_path.display()),
                })?;
            let counts = text_counts(&tokenize(&row.2), &freq, &content);
            words.push(counts.words as f64);
            c_words.push(counts.c_words as f64);
            fr_words.push(counts.fr_words as f64);
            fr_c_words.push(counts.fr_c_words as f64);
        }
        table.add_column("# words", words)?;
        table.add_column("# C-words", c_words)?;
        table.add_column("# fr-words", fr_words)?;
        table.add_column("# fr-C-words", fr_c_words)?;
    }

    // Derive the human/machine disagreement column when both ratings are
    // present and it was not supplied precomputed.
    if table.has_column("HR") && table.has_column("MR") && !table.has_column("D(H,M)") {
        let d = disagreement(table.column("HR")?, table.column("MR")?)?;
        table.add_column("D(H,M)", d)?;
    }

    let requested: Vec<String> = split_column_list(&args.targets);
    let mut targets = Vec::new();
    for t in &requested {
        if table.has_column(t) {
            targets.push(t.as_str());
        } else {
            eprintln!("warning: target column {t:?} not present, skipped");
        }
    }
    if targets.is_empty() {
        return Err(Error::config("no requested target column is present".to_string()));
    }

    let features: Vec<String> = match &args.features {
        Some(spec) => split_column_list(spec),
        None => table
            .column_names()
            .filter(|c| !requested.iter().any(|t| t == c))
            .map(str::to_string)
            .collect(),
    };
    if features.is_empty() {
        return Err(Error::config("no feature columns to correlate".to_string()));
    }
    let feature_refs: Vec<&str> = features.iter().map(String::as_str).collect();

    let result = correlation_table(&table, &targets, &feature_refs)?;
    result.write_csv(&args.out)?;
    println!(
        "wrote {}x{} correlation table to {}",
        result.features.len(),
        result.targets.len(),
        args.out.display()
    );
    Ok(())
}

/// Rows of a captions CSV: (pair_id, audio_id, caption text).
/// Splits a comma-separated column list, ignoring commas inside
/// parentheses so names like `D(H,M)` survive intact.
fn split_column_list(spec: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut depth = 0usize;
    let mut current = String::new();
    for c in spec.chars() {
        match c {
            '(' => {
                depth += 1;
                current.push(c);
            }
            ')' => {
                depth = depth.saturating_sub(1);
                current.push(c);
            }
            ',' if depth == 0 => {
                let name = current.trim();
                if !name.is_empty() {
                    out.push(name.to_string());
                }
                current.clear();
            }
            _ => current.push(c),
        }
    }
    let name = current.trim();
    if !name.is_empty() {
        out.push(name.to_string());
    }
    out
}

fn load_caption_rows(path: &Path) -> Result<Vec<(String, String, String)>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| Error::parse(path, None, e.to_string()))?;
    let mut rows = Vec::new();
    for row in reader.records() {
        let row = row.map_err(|e| Error::parse(path, None, e.to_string()))?;
        let line = row.position().map(|p| p.line());
        if row.len() != 3 {
            return Err(Error::parse(
                path,
                line,
                format!("expected 3 fields (pair_id,audio_id,caption), got {}", row.len()),
            ));
        }
        rows.push((row[0].to_string(), row[1].to_string(), row[2].to_string()));
    }
    Ok(rows)
}
