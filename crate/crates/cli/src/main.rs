//! `tracefl`: featurize traced bug corpora, train and evaluate the ranking
//! model, run ablations and report feature importance.
//!
//! Exit codes: 0 success, 1 I/O or file-format error, 2 invalid
//! configuration or data.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};
use serde_json::json;

use tracefl_core::ablation::{run_ablation, AblationAxis, AblationSpec, Estimate};
use tracefl_core::corpus::bundle::{label_bundles, load_corpus, read_manifest};
use tracefl_core::corpus::matrix::{read_matrix_file, write_matrix_file, FeatureMatrix};
use tracefl_core::corpus::split::{split, SplitSpec};
use tracefl_core::corpus::synth::{write_synthetic, FaultModel, SynthSpec};
use tracefl_core::evalrank::{Method, TOP_N};
use tracefl_core::gbdt::{feature_importance, train, window_level_importance, Hyperparams, Model};
use tracefl_core::pipeline::{
    dataset_from_matrix, eval_bugs_from_matrix, evaluate_methods, featurize_all, format_reports, to_matrix,
    write_bug_ranks, EvalBug, FeatureConfig,
};
use tracefl_core::window::{FeatureSchema, GroupMask, DEFAULT_PAD, DEFAULT_WINDOW};
use tracefl_core::Error;

#[derive(Parser)]
#[command(name = "tracefl", version, about = "Trace-based fault localization")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build the feature matrix CSV for a corpus of bug bundles.
    Featurize(FeaturizeArgs),
    /// Train the ranking model on a feature matrix.
    Train(TrainArgs),
    /// Rank lines and report MFR / MAR / Top-N per method.
    Evaluate(EvaluateArgs),
    /// Retrain under varied window size, feature groups or training size.
    Ablate(AblateArgs),
    /// Gain importance per feature and per window level.
    Importance(ImportanceArgs),
    /// Generate a synthetic bug corpus.
    Synth(SynthArgs),
    /// Write labels.json for bundles that only carry fixed.txt.
    Label(LabelArgs),
}

#[derive(Args, Clone)]
struct FeatureFlags {
    /// Odd window size.
    #[arg(long, default_value_t = DEFAULT_WINDOW)]
    window: usize,
    #[arg(long, default_value_t = 1e-9)]
    epsilon: f64,
    /// Value for context slots outside the executed lines.
    #[arg(long, default_value_t = DEFAULT_PAD, allow_negative_numbers = true)]
    pad: f64,
    /// Comma-separated subset of spectral,formula,flow,lexical, or `all`.
    #[arg(long, default_value = "all")]
    groups: String,
}

impl FeatureFlags {
    fn config(&self) -> Result<FeatureConfig, Error> {
        let config = FeatureConfig {
            window: self.window,
            epsilon: self.epsilon,
            pad_value: self.pad,
            groups: self.groups.parse::<GroupMask>()?,
        };
        config.schema()?;
        config.eps()?;
        Ok(config)
    }
}

#[derive(Args, Clone)]
struct SplitFlags {
    /// Fraction of bugs used for training; the rest is validation.
    #[arg(long, default_value_t = 0.9)]
    train_fraction: f64,
    /// Seed for splitting, training and the random baseline.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args, Clone)]
struct HyperFlags {
    #[arg(long, default_value_t = 200)]
    num_trees: usize,
    #[arg(long, default_value_t = 0.1)]
    learning_rate: f64,
    #[arg(long, default_value_t = 31)]
    max_leaves: usize,
    #[arg(long, default_value_t = 20)]
    min_samples_leaf: usize,
    #[arg(long, default_value_t = 1.0)]
    lambda: f64,
    #[arg(long, default_value_t = 255)]
    max_bins: usize,
    #[arg(long, default_value_t = 1.0)]
    feature_subsample: f64,
}

impl HyperFlags {
    fn hyperparams(&self, seed: u64) -> Result<Hyperparams, Error> {
        let hp = Hyperparams {
            num_trees: self.num_trees,
            learning_rate: self.learning_rate,
            max_leaves: self.max_leaves,
            min_samples_leaf: self.min_samples_leaf,
            l2_leaf_regularization: self.lambda,
            max_bins: self.max_bins,
            feature_subsample: self.feature_subsample,
            seed,
        };
        hp.validate()?;
        Ok(hp)
    }
}

#[derive(Args)]
struct FeaturizeArgs {
    #[arg(long)]
    corpus: PathBuf,
    /// Output CSV path.
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    features: FeatureFlags,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    matrix: PathBuf,
    /// Model output path; the per-round log goes next to it as `.log.csv`.
    #[arg(long)]
    out: PathBuf,
    /// Corpus whose manifest.json fixes the split.
    #[arg(long)]
    corpus: Option<PathBuf>,
    /// Train this many models with seeds seed, seed+1, ...
    #[arg(long, default_value_t = 1)]
    repeat: usize,
    #[command(flatten)]
    split: SplitFlags,
    #[command(flatten)]
    hyper: HyperFlags,
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Required for method `ours`.
    #[arg(long)]
    model: Option<PathBuf>,
    /// Feature matrix to score; without it the corpus is featurized.
    #[arg(long, required_unless_present = "corpus")]
    matrix: Option<PathBuf>,
    /// Bug bundles; with --matrix only its manifest.json is used.
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[arg(long, default_value = "ours,ochiai,dstar2,tarantula,random")]
    methods: String,
    /// Which bugs to evaluate: validation, train or all.
    #[arg(long, default_value = "validation")]
    subset: String,
    /// Report JSON path; per-bug ranks go next to it as `.bugs.csv`.
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    split: SplitFlags,
    #[command(flatten)]
    features: FeatureFlags,
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct AblateArgs {
    #[arg(long)]
    corpus: PathBuf,
    /// window, groups or train_fraction.
    #[arg(long)]
    axis: String,
    #[arg(long, default_value_t = 3)]
    repeat: usize,
    #[arg(long, value_delimiter = ',', default_value = "1,3,5,7")]
    windows: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9,1.0")]
    fractions: Vec<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    split: SplitFlags,
    #[command(flatten)]
    features: FeatureFlags,
    #[command(flatten)]
    hyper: HyperFlags,
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct ImportanceArgs {
    #[arg(long)]
    model: PathBuf,
    /// Rows of the feature table to print.
    #[arg(long, default_value_t = 20)]
    top: usize,
    #[arg(long, default_value_t = DEFAULT_PAD, allow_negative_numbers = true)]
    pad: f64,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 100)]
    num_bugs: usize,
    /// Fault models assigned round-robin: coverage, count, flow.
    #[arg(long, default_value = "coverage,count,flow")]
    faults: String,
    #[arg(long, default_value_t = 8)]
    min_lines: usize,
    #[arg(long, default_value_t = 30)]
    max_lines: usize,
    #[arg(long, default_value_t = 4)]
    min_tests: usize,
    #[arg(long, default_value_t = 10)]
    max_tests: usize,
    #[command(flatten)]
    split: SplitFlags,
}

#[derive(Args)]
struct LabelArgs {
    #[arg(long)]
    corpus: PathBuf,
}

fn write_text(path: &Path, text: &str) -> Result<(), Error> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().unwrap_or_default().to_string_lossy();
    path.with_file_name(format!("{stem}{suffix}"))
}

fn load_model(path: &Path) -> Result<Model, Error> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    if text.trim().is_empty() {
        return Err(Error::Data(format!("model file {} is empty", path.display())));
    }
    Model::from_json(&text)
}

/// Train/validation ids: the corpus manifest when one exists, otherwise a
/// seeded split of `ids`.
fn resolve_split(ids: &[String], corpus: Option<&Path>, flags: &SplitFlags) -> Result<(Vec<String>, Vec<String>), Error> {
    if let Some(manifest) = corpus.map(read_manifest).transpose()?.flatten() {
        let known: BTreeSet<&String> = ids.iter().collect();
        let keep = |v: Vec<String>| v.into_iter().filter(|id| known.contains(id)).collect::<Vec<_>>();
        return Ok((keep(manifest.train), keep(manifest.validation)));
    }
    if flags.train_fraction >= 1.0 {
        return Ok((ids.to_vec(), Vec::new()));
    }
    split(ids, &SplitSpec { train_fraction: flags.train_fraction, seed: flags.seed })
}

fn print_json(value: &serde_json::Value) {
    println!("{}", serde_json::to_string_pretty(value).expect("json value serializes"));
}

fn featurize(args: FeaturizeArgs) -> Result<()> {
    let config = args.features.config()?;
    let bugs = load_corpus(&args.corpus)?;
    let features = featurize_all(&bugs, &config)?;
    let schema = config.schema()?;
    let matrix = to_matrix(&features, &schema);
    write_matrix_file(&args.out, &matrix)?;
    let positives = matrix.rows.iter().filter(|r| r.label == 1).count();
    print_json(&json!({
        "bugs": bugs.len(),
        "rows": matrix.rows.len(),
        "positive_rows": positives,
        "feature_columns": matrix.feature_names.len(),
        "schema_fingerprint": schema.fingerprint(),
        "out": args.out,
    }));
    Ok(())
}

fn train_cmd(args: TrainArgs) -> Result<()> {
    if args.repeat == 0 {
        return Err(Error::Config("--repeat must be at least 1".into()).into());
    }
    let matrix = read_matrix_file(&args.matrix, None)?;
    let ids = matrix.bug_ids();
    let mut runs = Vec::new();
    let mut text = String::new();
    for r in 0..args.repeat as u64 {
        let seed = args.split.seed + r;
        let flags = SplitFlags { seed, ..args.split.clone() };
        let (train_ids, val_ids) = resolve_split(&ids, args.corpus.as_deref(), &flags)?;
        let train_set: BTreeSet<&str> = train_ids.iter().map(String::as_str).collect();
        let data = dataset_from_matrix(&matrix, |id| train_set.contains(id))?;
        let hp = args.hyper.hyperparams(seed)?;
        let (model, log) = train(&data, &hp)?;

        let model_path = if args.repeat == 1 {
            args.out.clone()
        } else {
            sibling(&args.out, &format!(".seed{seed}.json"))
        };
        write_text(&model_path, &model.to_json())?;
        let log_path = sibling(&model_path, ".log.csv");
        let mut log_text = String::from("round,logloss\n");
        for (i, l) in log.logloss.iter().enumerate() {
            log_text += &format!("{},{l}\n", i + 1);
        }
        write_text(&log_path, &log_text)?;

        let val_set: BTreeSet<&str> = val_ids.iter().map(String::as_str).collect();
        let eval = eval_bugs_from_matrix(&matrix, |id| val_set.contains(id));
        let report = if eval.is_empty() {
            None
        } else {
            let (mut res, _) = evaluate_methods(&eval, &[Method::Model], Some(&model), seed)?;
            Some(res.remove(0).report)
        };
        text += &format!(
            "seed {seed}: {} trees, {} train rows, final logloss {:.5}",
            model.trees.len(),
            data.rows(),
            log.logloss.last().copied().unwrap_or(f64::NAN)
        );
        if let Some(rep) = &report {
            text += &format!(", validation MFR {:.3} Top-1 {:.1}%", rep.mfr, rep.top[&1] * 100.0);
        }
        text.push('\n');
        runs.push(json!({
            "seed": seed,
            "model": model_path,
            "log": log_path,
            "train_bugs": train_ids.len(),
            "validation_bugs": val_ids.len(),
            "train_rows": data.rows(),
            "final_logloss": log.logloss.last(),
            "validation": report,
        }));
    }

    let reports: Vec<&serde_json::Value> = runs.iter().map(|r| &r["validation"]).filter(|v| !v.is_null()).collect();
    let aggregate = if reports.len() == runs.len() && !reports.is_empty() {
        let stat = |f: &dyn Fn(&serde_json::Value) -> f64| {
            let xs: Vec<f64> = reports.iter().map(|v| f(v)).collect();
            Estimate::from_samples(&xs)
        };
        let mfr = stat(&|v| v["MFR"].as_f64().unwrap_or(f64::NAN));
        let mar = stat(&|v| v["MAR"].as_f64().unwrap_or(f64::NAN));
        let top: serde_json::Map<String, serde_json::Value> = TOP_N
            .iter()
            .map(|k| (k.to_string(), json!(stat(&|v| v["top"][k.to_string()].as_f64().unwrap_or(f64::NAN)))))
            .collect();
        if args.repeat > 1 {
            text += &format!("aggregate over {} runs: MFR {mfr}, MAR {mar}\n", args.repeat);
        }
        Some(json!({ "MFR": mfr, "MAR": mar, "top": top }))
    } else {
        None
    };
    let out = json!({ "runs": runs, "aggregate": aggregate });
    if args.json {
        print_json(&out);
    } else {
        print!("{text}");
    }
    Ok(())
}

fn parse_methods(text: &str) -> Result<Vec<Method>, Error> {
    let methods: Vec<Method> = text.split(',').filter(|s| !s.trim().is_empty()).map(str::parse).collect::<Result<_, _>>()?;
    if methods.is_empty() {
        return Err(Error::Config("--methods is empty".into()));
    }
    Ok(methods)
}

fn select(ids: &[String], subset: &str, corpus: Option<&Path>, flags: &SplitFlags) -> Result<BTreeSet<String>, Error> {
    Ok(match subset {
        "all" => ids.iter().cloned().collect(),
        "train" => resolve_split(ids, corpus, flags)?.0.into_iter().collect(),
        "validation" => resolve_split(ids, corpus, flags)?.1.into_iter().collect(),
        other => return Err(Error::Config(format!("--subset must be validation, train or all, got {other:?}"))),
    })
}

fn evaluate_cmd(args: EvaluateArgs) -> Result<()> {
    let methods = parse_methods(&args.methods)?;
    let model = args.model.as_deref().map(load_model).transpose()?;
    if methods.contains(&Method::Model) && model.is_none() {
        return Err(Error::Config("method `ours` needs --model".into()).into());
    }

    let eval: Vec<EvalBug> = match (&args.matrix, &args.corpus) {
        (Some(path), _) => {
            let expected = model.as_ref().map(|m| m.feature_names.clone());
            let matrix: FeatureMatrix = read_matrix_file(path, expected.as_deref())?;
            let chosen = select(&matrix.bug_ids(), &args.subset, args.corpus.as_deref(), &args.split)?;
            eval_bugs_from_matrix(&matrix, |id| chosen.contains(id))
        }
        (None, Some(corpus)) => {
            let mut config = args.features.config()?;
            if let Some(m) = &model {
                let schema = FeatureSchema::from_feature_names(&m.feature_names, config.pad_value)?;
                config.window = schema.window;
                config.groups = schema.mask()?;
            }
            let bugs = load_corpus(corpus)?;
            let ids: Vec<String> = bugs.iter().map(|b| b.bug_id.clone()).collect();
            let chosen = select(&ids, &args.subset, Some(corpus), &args.split)?;
            let bugs: Vec<_> = bugs.into_iter().filter(|b| chosen.contains(&b.bug_id)).collect();
            featurize_all(&bugs, &config)?.iter().map(EvalBug::from).collect()
        }
        (None, None) => unreachable!("clap requires --matrix or --corpus"),
    };
    if eval.is_empty() {
        return Err(Error::Data(format!("no bugs in subset {:?}", args.subset)).into());
    }
    let (results, skipped) = evaluate_methods(&eval, &methods, model.as_ref(), args.split.seed)?;
    let reports: Vec<_> = results.iter().map(|r| &r.report).collect();

    let mut files = serde_json::Map::new();
    if let Some(out) = &args.out {
        write_text(out, &(serde_json::to_string_pretty(&reports)? + "\n"))?;
        let csv_path = sibling(out, ".bugs.csv");
        let file = fs::File::create(&csv_path).map_err(|e| Error::io(&csv_path, e))?;
        write_bug_ranks(std::io::BufWriter::new(file), &results)?;
        files.insert("report".into(), json!(out));
        files.insert("bugs".into(), json!(csv_path));
    }
    if args.json {
        print_json(&json!({ "reports": reports, "skipped_bugs": skipped, "files": files }));
    } else {
        print!("{}", format_reports(&reports));
        if !skipped.is_empty() {
            println!("skipped {} bugs without ground truth", skipped.len());
        }
    }
    Ok(())
}

fn ablate_cmd(args: AblateArgs) -> Result<()> {
    let axis: AblationAxis = args.axis.parse()?;
    let bugs = load_corpus(&args.corpus)?;
    let spec = AblationSpec {
        axis,
        features: args.features.config()?,
        hyperparams: args.hyper.hyperparams(args.split.seed)?,
        split: SplitSpec { train_fraction: args.split.train_fraction, seed: args.split.seed },
        repeats: args.repeat,
        windows: args.windows.clone(),
        fractions: args.fractions.clone(),
    };
    let table = run_ablation(&bugs, &spec)?;
    if let Some(out) = &args.out {
        write_text(out, &(serde_json::to_string_pretty(&table)? + "\n"))?;
    }
    if args.json {
        print_json(&serde_json::to_value(&table)?);
    } else {
        print!("{}", table.to_text());
    }
    Ok(())
}

fn importance_cmd(args: ImportanceArgs) -> Result<()> {
    let model = load_model(&args.model)?;
    if model.trees.is_empty() || model.total_split_gain() <= 0.0 {
        return Err(Error::Data("model has no recorded splits".into()).into());
    }
    let schema = FeatureSchema::from_feature_names(&model.feature_names, args.pad)?;
    let features = feature_importance(&model);
    let levels = window_level_importance(&features, &schema)?;
    let out = json!({ "features": features, "levels": levels });
    if let Some(path) = &args.out {
        write_text(path, &(serde_json::to_string_pretty(&out)? + "\n"))?;
    }
    if args.json {
        print_json(&out);
        return Ok(());
    }
    println!("{:<28} {:>12} {:>7}", "Feature", "Gain Score", "Rel.");
    for f in features.iter().take(args.top) {
        println!("{:<28} {:>12.3} {:>7.3}", f.feature, f.gain, f.relative);
    }
    println!();
    println!("{:<8} {:<18} {:>12} {:>7}", "Level", "Description", "Avg. Gain", "Rel.");
    for l in &levels {
        println!("{:<8} {:<18} {:>12.3} {:>7.3}", l.label, l.description, l.avg_gain, l.relative);
    }
    Ok(())
}

fn synth_cmd(args: SynthArgs) -> Result<()> {
    let faults = args.faults.split(',').map(str::parse).collect::<Result<Vec<FaultModel>, _>>()?;
    let spec = SynthSpec {
        num_bugs: args.num_bugs,
        lines: (args.min_lines, args.max_lines),
        tests: (args.min_tests, args.max_tests),
        faults,
        seed: args.split.seed,
    };
    let split_spec = SplitSpec { train_fraction: args.split.train_fraction, seed: args.split.seed };
    if spec.num_bugs >= 2 {
        split_spec.validate()?;
    }
    let bugs = write_synthetic(&args.out, &spec, &split_spec)?;
    print_json(&json!({
        "bugs": bugs.len(),
        "faults": spec.faults,
        "seed": spec.seed,
        "out": args.out,
    }));
    Ok(())
}

fn label_cmd(args: LabelArgs) -> Result<()> {
    let labeled = label_bundles(&args.corpus)?;
    print_json(&json!({ "labeled": labeled }));
    Ok(())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<Error>() {
        Some(e) if e.is_io_or_format() => 1,
        Some(_) => 2,
        None if err.downcast_ref::<serde_json::Error>().is_some() => 1,
        None => 2,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Featurize(a) => featurize(a),
        Command::Train(a) => train_cmd(a),
        Command::Evaluate(a) => evaluate_cmd(a),
        Command::Ablate(a) => ablate_cmd(a),
        Command::Importance(a) => importance_cmd(a),
        Command::Synth(a) => synth_cmd(a),
        Command::Label(a) => label_cmd(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
