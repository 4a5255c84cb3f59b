//! Command-line front end. Settings are layered: built-in defaults, then the
//! JSON file given with `--config`, then explicit flags.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};
use sha2::{Digest, Sha256};

use crate::calibration::{build_calibration_set, CalibrationSet, CalibrationSpec, SourceKind, TemperatureSchedule};
use crate::compress::{block_weight_sparsity, compress_model, CompressionConfig, Method};
use crate::error::{Error, Result};
use crate::harness::{run_configured, Ablation, ExperimentConfig, ExperimentData};
use crate::text_metrics::analyze;
use crate::tiny_lm::corpus::{split_corpus, BUNDLED_CORPUS};
use crate::tiny_lm::{
    bundled_model, eval_windows, evaluate, load_checkpoint, save_checkpoint, train_with_progress, ModelConfig, TinyLm,
    TokenId, Tokenizer, TrainConfig,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "selfcal", version, about = "Self-calibration toolkit for compressing small language models")]
pub struct Cli {
    /// Seed for every random choice of the run.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// JSON file with the subcommand's settings; explicit flags take precedence.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output file (train, gen-calib, compress, eval, analyze) or directory (experiment, ablate).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads; results do not depend on it.
    #[arg(long, global = true, env = "SELFCAL_THREADS")]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a tiny language model on a text corpus.
    Train(TrainArgs),
    /// Build a calibration set (self-generated, corpus windows or random tokens).
    GenCalib(GenCalibArgs),
    /// Compress a model with a calibration set.
    Compress(CompressArgs),
    /// Held-out perplexity, next-token accuracy and weight sparsity of a model.
    Eval(EvalArgs),
    /// Text metrics of a calibration set: PPL, repetitions, coverage, diversity, Zipf.
    Analyze(AnalyzeArgs),
    /// Multi-seed comparison of methods and calibration sources.
    Experiment(ExperimentArgs),
    /// Data-quantity or temperature-grid ablation.
    Ablate(AblateArgs),
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Training text (blank-line separated documents); the bundled corpus by default.
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Optimizer steps.
    #[arg(long)]
    pub steps: Option<usize>,
    /// Windows per batch.
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Adam learning rate.
    #[arg(long)]
    pub lr: Option<f64>,
    /// Transformer blocks.
    #[arg(long)]
    pub layers: Option<usize>,
    /// Attention heads.
    #[arg(long)]
    pub heads: Option<usize>,
    /// Model width.
    #[arg(long)]
    pub dim: Option<usize>,
    /// Feed-forward width.
    #[arg(long)]
    pub ffn_dim: Option<usize>,
    /// Context length in tokens.
    #[arg(long)]
    pub context_len: Option<usize>,
    /// Held-out windows scored before and after training.
    #[arg(long)]
    pub eval_examples: Option<usize>,
}

#[derive(Debug, Args)]
pub struct GenCalibArgs {
    /// Model checkpoint; the bundled model by default.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Source: self, corpus or random_vocab.
    #[arg(long)]
    pub source: Option<SourceKind>,
    /// Number of examples.
    #[arg(long)]
    pub n: Option<usize>,
    /// Tokens per example.
    #[arg(long)]
    pub len: Option<usize>,
    /// Initial sampling temperature (self source).
    #[arg(long)]
    pub t_initial: Option<f64>,
    /// Final sampling temperature (self source).
    #[arg(long)]
    pub t_final: Option<f64>,
    /// Steps over which the temperature ramps (self source).
    #[arg(long)]
    pub ramp: Option<usize>,
    /// Restrict the first generated token to stop-word initial bytes (self source).
    #[arg(long)]
    pub stopword_constraint: bool,
    /// Text sampled by the corpus source; the bundled training split by default.
    #[arg(long)]
    pub corpus: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CompressArgs {
    /// Model checkpoint; the bundled model by default.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Calibration set written by gen-calib.
    #[arg(long)]
    pub calib: Option<PathBuf>,
    /// Method: wanda, sparsegpt, gptq, rtn or aws.
    #[arg(long)]
    pub method: Option<Method>,
    /// Quantization bit width.
    #[arg(long)]
    pub bits: Option<u32>,
    /// Quantization group size.
    #[arg(long)]
    pub group_size: Option<usize>,
    /// Hessian dampening as a fraction of its mean diagonal.
    #[arg(long)]
    pub damp: Option<f64>,
    /// Quantize columns in their original order.
    #[arg(long)]
    pub no_act_order: bool,
    /// Collect every sub-layer's inputs from the uncompressed layer.
    #[arg(long)]
    pub no_true_sequential: bool,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Model checkpoint; the bundled model by default.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Held-out text; the bundled held-out split by default.
    #[arg(long)]
    pub eval_corpus: Option<PathBuf>,
    /// Number of context-length windows scored.
    #[arg(long)]
    pub eval_examples: Option<usize>,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    /// Model used for perplexity; the bundled model by default.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Calibration set written by gen-calib.
    #[arg(long)]
    pub calib: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ExperimentArgs {
    /// Model checkpoint; the bundled model by default.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Comma-separated methods.
    #[arg(long, value_delimiter = ',')]
    pub methods: Option<Vec<Method>>,
    /// Comma-separated calibration sources.
    #[arg(long, value_delimiter = ',')]
    pub sources: Option<Vec<SourceKind>>,
    /// Number of seeds (calibration sets per source).
    #[arg(long)]
    pub num_seeds: Option<usize>,
    /// Examples per calibration set.
    #[arg(long)]
    pub n: Option<usize>,
    /// Tokens per calibration example.
    #[arg(long)]
    pub len: Option<usize>,
    /// Held-out windows scored per run.
    #[arg(long)]
    pub eval_examples: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum AblationKind {
    Quantity,
    TemperatureGrid,
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    /// Which ablation to run.
    #[arg(long, value_enum)]
    pub kind: Option<AblationKind>,
    /// Comma-separated subset sizes (quantity).
    #[arg(long, value_delimiter = ',')]
    pub sizes: Option<Vec<usize>>,
    /// Comma-separated temperatures used for both ends of the schedule (temperature grid).
    #[arg(long, value_delimiter = ',')]
    pub grid: Option<Vec<f64>>,
    #[command(flatten)]
    pub common: ExperimentArgs,
}

/// Failure of a CLI run, split by exit code.
#[derive(Debug)]
enum Failure {
    Usage(String),
    Runtime(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Runtime(e)
    }
}

type CliResult<T> = std::result::Result<T, Failure>;

fn usage(msg: impl Into<String>) -> Failure {
    Failure::Usage(msg.into())
}

/// Merges `over` into `base`; objects merge key by key, anything else replaces.
/// Unknown keys are caught when the result is deserialized.
fn merge(base: &mut Value, over: &Value) {
    match (base, over) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(k) {
                    Some(slot) if slot.is_object() && v.is_object() => merge(slot, v),
                    Some(slot) => *slot = v.clone(),
                    None => {
                        b.insert(k.clone(), v.clone());
                    }
                }
            }
        }
        (b, o) => *b = o.clone(),
    }
}

fn layered<T: Serialize + DeserializeOwned>(defaults: T, config: Option<&Path>, flags: Value) -> CliResult<T> {
    let mut v = serde_json::to_value(&defaults).map_err(Error::from)?;
    if let Some(p) = config {
        let text = fs::read_to_string(p).map_err(|e| usage(format!("{}: {e}", p.display())))?;
        let file: Value = serde_json::from_str(&text).map_err(|e| usage(format!("{}: {e}", p.display())))?;
        if !file.is_object() {
            return Err(usage(format!("{}: expected a JSON object", p.display())));
        }
        merge(&mut v, &file);
    }
    merge(&mut v, &flags);
    serde_json::from_value(v).map_err(|e| usage(format!("invalid configuration: {e}")))
}

/// Object holding only the flags that were given.
fn flags<const N: usize>(pairs: [(&str, Option<Value>); N]) -> Value {
    let mut m = Map::new();
    for (k, v) in pairs {
        if let Some(v) = v {
            let mut parts: Vec<&str> = k.split('.').collect();
            let leaf = parts.pop().unwrap();
            let mut cur = &mut m;
            for p in parts {
                cur = cur
                    .entry(p)
                    .or_insert_with(|| Value::Object(Map::new()))
                    .as_object_mut()
                    .unwrap();
            }
            cur.insert(leaf.into(), v);
        }
    }
    Value::Object(m)
}

fn opt<T: Serialize>(v: &Option<T>) -> Option<Value> {
    v.as_ref().map(|x| serde_json::to_value(x).expect("serializable flag"))
}

fn config_hash<T: Serialize>(cfg: &T) -> String {
    let bytes = serde_json::to_vec(cfg).expect("serializable config");
    hex::encode(Sha256::digest(bytes))
}

fn sidecar_path(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".meta.json");
    PathBuf::from(s)
}

/// Run metadata kept apart from results: timestamps, durations, threads.
fn write_meta<T: Serialize>(path: &Path, command: &str, cfg: &T, started: SystemTime, clock: Instant, extra: Value) -> Result<()> {
    let meta = json!({
        "command": command,
        "version": env!("CARGO_PKG_VERSION"),
        "config_hash": config_hash(cfg),
        "config": cfg,
        "started_unix": started.duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0),
        "seconds": clock.elapsed().as_secs_f64(),
        "threads": rayon::current_num_threads(),
        "details": extra,
    });
    let text = serde_json::to_string_pretty(&meta)? + "\n";
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn load_model(path: &Option<PathBuf>) -> Result<TinyLm> {
    match path {
        Some(p) => Ok(load_checkpoint(p)?),
        None => bundled_model(),
    }
}

fn read_tokens(path: &Path) -> Result<Vec<TokenId>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(Tokenizer::new().encode_documents(&text))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TrainRun {
    model: ModelConfig,
    train: TrainConfig,
    corpus: Option<PathBuf>,
    eval_examples: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GenCalibRun {
    model: Option<PathBuf>,
    source: SourceKind,
    num_examples: usize,
    example_len: usize,
    seed: u64,
    schedule: TemperatureSchedule,
    stopword_constraint: bool,
    corpus: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CompressRun {
    model: Option<PathBuf>,
    calib: Option<PathBuf>,
    compression: CompressionConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EvalRun {
    model: Option<PathBuf>,
    eval_corpus: Option<PathBuf>,
    eval_examples: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct AnalyzeRun {
    model: Option<PathBuf>,
    calib: Option<PathBuf>,
}

struct Ctx<'a> {
    cli: &'a Cli,
    started: SystemTime,
    clock: Instant,
}

impl Ctx<'_> {
    fn out(&self, default: &str) -> PathBuf {
        self.cli.out.clone().unwrap_or_else(|| PathBuf::from(default))
    }

    fn announce<T: Serialize>(&self, cfg: &T) {
        println!("config hash: {}", config_hash(cfg));
    }
}

fn cmd_train(ctx: &Ctx<'_>, a: &TrainArgs) -> CliResult<()> {
    let defaults = TrainRun {
        model: ModelConfig::default(),
        train: TrainConfig::default(),
        corpus: None,
        eval_examples: 32,
    };
    let f = flags([
        ("corpus", opt(&a.corpus)),
        ("train.steps", opt(&a.steps)),
        ("train.batch_size", opt(&a.batch_size)),
        ("train.learning_rate", opt(&a.lr)),
        ("train.seed", opt(&ctx.cli.seed)),
        ("model.layers", opt(&a.layers)),
        ("model.heads", opt(&a.heads)),
        ("model.model_dim", opt(&a.dim)),
        ("model.ffn_dim", opt(&a.ffn_dim)),
        ("model.context_len", opt(&a.context_len)),
        ("eval_examples", opt(&a.eval_examples)),
    ]);
    let run: TrainRun = layered(defaults, ctx.cli.config.as_deref(), f)?;
    run.model.validate().map_err(|e| usage(e.to_string()))?;
    ctx.announce(&run);
    let split = match &run.corpus {
        Some(p) => split_corpus(&fs::read_to_string(p).map_err(|e| Error::io(p, e))?),
        None => split_corpus(BUNDLED_CORPUS),
    };
    let heldout = eval_windows(&split.heldout, run.model.context_len, run.eval_examples);
    let init = TinyLm::init(run.model.clone(), run.train.seed)?;
    let before = if heldout.is_empty() { None } else { Some(evaluate(&init, &heldout)?.ppl) };
    let every = (run.train.steps / 20).max(1);
    let mut model = train_with_progress(&init, &split.train, &run.train, |step, loss| {
        if step % every == 0 || step == run.train.steps {
            println!("step {step:>6}  loss {loss:.4}");
        }
    })?;
    model.snap_to_f32();
    let after = if heldout.is_empty() { None } else { Some(evaluate(&model, &heldout)?.ppl) };
    if let (Some(b), Some(a)) = (before, after) {
        println!("held-out perplexity: {b:.3} -> {a:.3} ({} windows)", heldout.len());
    }
    let out = ctx.out("tiny_lm.tlm");
    save_checkpoint(&model, &out).map_err(Error::from)?;
    println!("wrote {}", out.display());
    write_meta(
        &sidecar_path(&out),
        "train",
        &run,
        ctx.started,
        ctx.clock,
        json!({ "heldout_ppl_before": before, "heldout_ppl_after": after }),
    )?;
    Ok(())
}

fn cmd_gen_calib(ctx: &Ctx<'_>, a: &GenCalibArgs) -> CliResult<()> {
    let defaults = GenCalibRun {
        model: None,
        source: SourceKind::SelfGenerated,
        num_examples: 128,
        example_len: 2048,
        seed: 0,
        schedule: TemperatureSchedule::default(),
        stopword_constraint: false,
        corpus: None,
    };
    let f = flags([
        ("model", opt(&a.model)),
        ("source", opt(&a.source)),
        ("num_examples", opt(&a.n)),
        ("example_len", opt(&a.len)),
        ("seed", opt(&ctx.cli.seed)),
        ("schedule.t_initial", opt(&a.t_initial)),
        ("schedule.t_final", opt(&a.t_final)),
        ("schedule.ramp", opt(&a.ramp)),
        ("stopword_constraint", a.stopword_constraint.then_some(Value::Bool(true))),
        ("corpus", opt(&a.corpus)),
    ]);
    let run: GenCalibRun = layered(defaults, ctx.cli.config.as_deref(), f)?;
    let spec = CalibrationSpec {
        source: run.source,
        num_examples: run.num_examples,
        example_len: run.example_len,
        seed: run.seed,
        schedule: (run.source == SourceKind::SelfGenerated).then_some(run.schedule),
        stopword_constraint: run.stopword_constraint && run.source == SourceKind::SelfGenerated,
        corpus_path: run.corpus.as_ref().map(|p| p.display().to_string()),
    };
    spec.validate().map_err(|e| usage(e.to_string()))?;
    ctx.announce(&run);
    let model = match run.source {
        SourceKind::SelfGenerated => Some(load_model(&run.model)?),
        _ => None,
    };
    let corpus = match (run.source, &run.corpus) {
        (SourceKind::Corpus, Some(p)) => Some(read_tokens(p)?),
        (SourceKind::Corpus, None) => Some(split_corpus(BUNDLED_CORPUS).train),
        _ => None,
    };
    let set = build_calibration_set(&spec, model.as_ref(), corpus.as_deref())?;
    let out = ctx.out("calib.scl");
    set.save(&out)?;
    println!(
        "wrote {} ({} examples x {} tokens, source {})",
        out.display(),
        set.len(),
        set.example_len(),
        run.source.as_str()
    );
    write_meta(&sidecar_path(&out), "gen-calib", &run, ctx.started, ctx.clock, Value::Null)?;
    Ok(())
}

fn cmd_compress(ctx: &Ctx<'_>, a: &CompressArgs) -> CliResult<()> {
    let method = a.method.unwrap_or(Method::Sparsegpt);
    let defaults = CompressRun {
        model: None,
        calib: None,
        compression: CompressionConfig::new(method),
    };
    let f = flags([
        ("model", opt(&a.model)),
        ("calib", opt(&a.calib)),
        ("compression.method", opt(&a.method)),
        ("compression.bits", opt(&a.bits)),
        ("compression.group_size", opt(&a.group_size)),
        ("compression.dampening", opt(&a.damp)),
        ("compression.desc_act_order", a.no_act_order.then_some(Value::Bool(false))),
        ("compression.true_sequential", a.no_true_sequential.then_some(Value::Bool(false))),
    ]);
    let run: CompressRun = layered(defaults, ctx.cli.config.as_deref(), f)?;
    run.compression.validate().map_err(|e| usage(e.to_string()))?;
    let calib_path = run.calib.clone().ok_or_else(|| usage("compress needs --calib"))?;
    ctx.announce(&run);
    let model = load_model(&run.model)?;
    let calib = CalibrationSet::load(&calib_path)?;
    let outcome = compress_model(&model, &calib, &run.compression)?;
    let out = ctx.out("compressed.tlm");
    save_checkpoint(&outcome.model, &out).map_err(Error::from)?;
    let mut report_json = out.as_os_str().to_owned();
    report_json.push(".report.json");
    let mut report_csv = out.as_os_str().to_owned();
    report_csv.push(".report.csv");
    write_text(Path::new(&report_json), &(serde_json::to_string_pretty(&outcome.report).map_err(Error::from)? + "\n"))?;
    outcome.report.write_csv(Path::new(&report_csv))?;
    println!(
        "{}: {} layers, block weight sparsity {:.4}, wrote {}",
        run.compression.method,
        outcome.report.layers.len(),
        outcome.report.overall_sparsity,
        out.display()
    );
    let timings: Map<String, Value> = outcome
        .layer_seconds
        .iter()
        .map(|(k, v)| (k.clone(), json!(v)))
        .collect();
    write_meta(&sidecar_path(&out), "compress", &run, ctx.started, ctx.clock, json!({ "layer_seconds": timings }))?;
    Ok(())
}

#[derive(Debug, Serialize)]
struct EvalReport {
    ppl: f64,
    next_token_acc: f64,
    scored_tokens: usize,
    block_weight_sparsity: f64,
}

fn cmd_eval(ctx: &Ctx<'_>, a: &EvalArgs) -> CliResult<()> {
    let defaults = EvalRun {
        model: None,
        eval_corpus: None,
        eval_examples: 32,
    };
    let f = flags([
        ("model", opt(&a.model)),
        ("eval_corpus", opt(&a.eval_corpus)),
        ("eval_examples", opt(&a.eval_examples)),
    ]);
    let run: EvalRun = layered(defaults, ctx.cli.config.as_deref(), f)?;
    ctx.announce(&run);
    let model = load_model(&run.model)?;
    let stream = match &run.eval_corpus {
        Some(p) => read_tokens(p)?,
        None => split_corpus(BUNDLED_CORPUS).heldout,
    };
    let windows = eval_windows(&stream, model.config.context_len, run.eval_examples);
    if windows.is_empty() {
        return Err(Error::CorpusTooSmall {
            len: stream.len(),
            need: model.config.context_len,
        }
        .into());
    }
    let r = evaluate(&model, &windows)?;
    let report = EvalReport {
        ppl: r.ppl,
        next_token_acc: r.next_token_acc,
        scored_tokens: r.scored_tokens,
        block_weight_sparsity: block_weight_sparsity(&model),
    };
    println!(
        "perplexity {:.4}  next-token accuracy {:.4}  sparsity {:.4}  ({} windows)",
        report.ppl,
        report.next_token_acc,
        report.block_weight_sparsity,
        windows.len()
    );
    let out = ctx.out("eval.json");
    write_text(&out, &(serde_json::to_string_pretty(&report).map_err(Error::from)? + "\n"))?;
    write_meta(&sidecar_path(&out), "eval", &run, ctx.started, ctx.clock, Value::Null)?;
    Ok(())
}

fn cmd_analyze(ctx: &Ctx<'_>, a: &AnalyzeArgs) -> CliResult<()> {
    let f = flags([("model", opt(&a.model)), ("calib", opt(&a.calib))]);
    let run: AnalyzeRun = layered(AnalyzeRun { model: None, calib: None }, ctx.cli.config.as_deref(), f)?;
    let calib_path = run.calib.clone().ok_or_else(|| usage("analyze needs --calib"))?;
    ctx.announce(&run);
    let model = load_model(&run.model)?;
    let calib = CalibrationSet::load(&calib_path)?;
    let report = analyze(&model, &calib.examples)?;
    println!(
        "PPL {:.3}  Rep. {:.4}  Cov. {:.4}  Div. {:.4}  Zipf {:.3}",
        report.ppl, report.repetitions, report.coverage, report.diversity, report.zipf
    );
    let out = ctx.out("metrics.json");
    write_text(&out, &(serde_json::to_string_pretty(&report).map_err(Error::from)? + "\n"))?;
    report.write_csv(out.with_extension("csv"))?;
    write_meta(&sidecar_path(&out), "analyze", &run, ctx.started, ctx.clock, Value::Null)?;
    Ok(())
}

fn experiment_flags(seed: Option<u64>, a: &ExperimentArgs, extra: Vec<(&'static str, Option<Value>)>) -> Value {
    let mut v = flags([
        ("model", opt(&a.model)),
        ("methods", opt(&a.methods)),
        ("sources", opt(&a.sources)),
        ("num_seeds", opt(&a.num_seeds)),
        ("base_seed", opt(&seed)),
        ("num_examples", opt(&a.n)),
        ("example_len", opt(&a.len)),
        ("eval_examples", opt(&a.eval_examples)),
    ]);
    let obj = v.as_object_mut().unwrap();
    for (k, val) in extra {
        if let Some(val) = val {
            obj.insert(k.into(), val);
        }
    }
    v
}

fn run_table(ctx: &Ctx<'_>, command: &str, cfg: ExperimentConfig) -> CliResult<()> {
    cfg.validate().map_err(|e| usage(e.to_string()))?;
    ctx.announce(&cfg);
    let data = ExperimentData::load(&cfg)?;
    println!(
        "uncompressed: ppl {:.4} on {} held-out windows",
        evaluate(&data.model, &data.eval)?.ppl,
        data.eval.len()
    );
    let table = run_configured(&cfg, &data, &mut |line: &str| println!("{line}"))?;
    let dir = cfg
        .output_dir
        .clone()
        .or_else(|| ctx.cli.out.clone())
        .unwrap_or_else(|| PathBuf::from("results"));
    let written = table.write_outputs(&dir)?;
    for r in &table.rows {
        println!(
            "{:<10} {:<13} {:<18} ppl {:.4} ± {:.4}  acc {:.4} ± {:.4}",
            r.method.as_str(),
            r.source.as_str(),
            r.setting.to_string(),
            r.ppl.mean,
            r.ppl.std,
            r.next_token_acc.mean,
            r.next_token_acc.std
        );
    }
    for p in &written {
        println!("wrote {}", p.display());
    }
    if !table.errors.is_empty() {
        eprintln!("{} run(s) failed; see results.json", table.errors.len());
    }
    write_meta(&dir.join("run.meta.json"), command, &cfg, ctx.started, ctx.clock, Value::Null)?;
    Ok(())
}

fn cmd_experiment(ctx: &Ctx<'_>, a: &ExperimentArgs) -> CliResult<()> {
    let f = experiment_flags(ctx.cli.seed, a, vec![("output_dir", opt(&ctx.cli.out))]);
    let cfg: ExperimentConfig = layered(ExperimentConfig::default(), ctx.cli.config.as_deref(), f)?;
    run_table(ctx, "experiment", cfg)
}

fn cmd_ablate(ctx: &Ctx<'_>, a: &AblateArgs) -> CliResult<()> {
    let kind = a.kind.map(|k| match k {
        AblationKind::Quantity => Ablation::Quantity,
        AblationKind::TemperatureGrid => Ablation::TemperatureGrid,
    });
    let f = experiment_flags(
        ctx.cli.seed,
        &a.common,
        vec![
            ("output_dir", opt(&ctx.cli.out)),
            ("ablation", opt(&kind)),
            ("sizes", opt(&a.sizes)),
            ("grid", opt(&a.grid)),
        ],
    );
    let cfg: ExperimentConfig = layered(ExperimentConfig::default(), ctx.cli.config.as_deref(), f)?;
    if cfg.ablation == Ablation::None {
        return Err(usage("ablate needs --kind quantity|temperature-grid"));
    }
    run_table(ctx, "ablate", cfg)
}

fn dispatch(cli: &Cli) -> CliResult<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(usage("--threads must be at least 1"));
        }
        // Fails only if the pool was already built, e.g. when called twice in one process.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let ctx = Ctx {
        cli,
        started: SystemTime::now(),
        clock: Instant::now(),
    };
    match &cli.command {
        Command::Train(a) => cmd_train(&ctx, a),
        Command::GenCalib(a) => cmd_gen_calib(&ctx, a),
        Command::Compress(a) => cmd_compress(&ctx, a),
        Command::Eval(a) => cmd_eval(&ctx, a),
        Command::Analyze(a) => cmd_analyze(&ctx, a),
        Command::Experiment(a) => cmd_experiment(&ctx, a),
        Command::Ablate(a) => cmd_ablate(&ctx, a),
    }
}

/// Parses `args` (including the program name), runs the command and returns
/// the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match dispatch(&cli) {
        Ok(()) => EXIT_OK,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            EXIT_USAGE
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e}");
            EXIT_RUNTIME
        }
    }
}
