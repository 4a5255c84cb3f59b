//! Multi-seed experiments: build calibration sets, compress, evaluate on
//! held-out text and aggregate, plus the data-quantity and temperature-grid
//! ablations.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::calibration::{build_calibration_set, CalibrationSet, CalibrationSpec, SourceKind, TemperatureSchedule};
use crate::compress::{compress_model, CompressionConfig, Method};
use crate::error::{require, Error, Result};
use crate::tiny_lm::{eval_windows, evaluate, load_checkpoint, EvalResult, TinyLm, TokenId, Tokenizer};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ablation {
    #[default]
    None,
    Quantity,
    TemperatureGrid,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Checkpoint to compress; the bundled model when absent.
    pub model: Option<PathBuf>,
    pub methods: Vec<Method>,
    pub sources: Vec<SourceKind>,
    pub num_seeds: usize,
    /// Seeds are `base_seed, base_seed + 1, …` unless listed explicitly.
    pub base_seed: u64,
    pub seeds: Option<Vec<u64>>,
    pub num_examples: usize,
    pub example_len: usize,
    /// Schedule of the self source outside the temperature grid.
    pub schedule: TemperatureSchedule,
    pub stopword_constraint: bool,
    pub ablation: Ablation,
    pub sizes: Vec<usize>,
    pub grid: Vec<f64>,
    pub grid_ramp: usize,
    /// Text file sampled by the corpus source; the bundled training split
    /// when absent.
    pub calib_corpus: Option<PathBuf>,
    /// Held-out text; the bundled held-out split when absent.
    pub eval_corpus: Option<PathBuf>,
    pub eval_examples: usize,
    /// Per-method overrides of compression hyperparameters.
    pub compression: BTreeMap<Method, CompressionConfig>,
    pub output_dir: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            model: None,
            methods: vec![Method::Sparsegpt, Method::Wanda],
            sources: vec![SourceKind::SelfGenerated, SourceKind::Corpus, SourceKind::RandomVocab],
            num_seeds: 5,
            base_seed: 0,
            seeds: None,
            num_examples: 128,
            example_len: 2048,
            schedule: TemperatureSchedule::default(),
            stopword_constraint: false,
            ablation: Ablation::None,
            sizes: vec![1, 2, 4, 8, 16, 32, 64, 128],
            grid: vec![0.0, 0.5, 1.0, 1.5, 2.0],
            grid_ramp: 10,
            calib_corpus: None,
            eval_corpus: None,
            eval_examples: 32,
            compression: BTreeMap::new(),
            output_dir: None,
        }
    }
}

impl ExperimentConfig {
    pub fn seeds(&self) -> Vec<u64> {
        self.seeds
            .clone()
            .unwrap_or_else(|| (0..self.num_seeds as u64).map(|k| self.base_seed + k).collect())
    }

    pub fn compression_for(&self, m: Method) -> CompressionConfig {
        self.compression
            .get(&m)
            .cloned()
            .map(|c| CompressionConfig { method: m, ..c })
            .unwrap_or_else(|| CompressionConfig::new(m))
    }

    pub fn validate(&self) -> Result<()> {
        let seeds = self.seeds();
        require(!seeds.is_empty(), || "at least one seed is required".into())?;
        let distinct: std::collections::BTreeSet<_> = seeds.iter().collect();
        require(distinct.len() == seeds.len(), || "seeds must be distinct".into())?;
        require(!self.methods.is_empty(), || "no compression methods".into())?;
        require(!self.sources.is_empty(), || "no calibration sources".into())?;
        require(self.num_examples >= 1 && self.example_len >= 1, || "empty calibration sets".into())?;
        require(self.eval_examples >= 1, || "eval_examples must be >= 1".into())?;
        self.schedule.validate()?;
        for m in &self.methods {
            self.compression_for(*m).validate()?;
        }
        match self.ablation {
            Ablation::None => {}
            Ablation::Quantity => {
                require(!self.sizes.is_empty(), || "no ablation sizes".into())?;
                require(self.sizes.iter().all(|n| n.is_power_of_two()), || {
                    "ablation sizes must be powers of two".into()
                })?;
                require(self.sizes.windows(2).all(|w| w[0] < w[1]), || {
                    "ablation sizes must be ascending".into()
                })?;
                let top = *self.sizes.last().unwrap();
                require(top <= self.num_examples, || {
                    format!("size {top} exceeds the base set of {} examples", self.num_examples)
                })?;
            }
            Ablation::TemperatureGrid => {
                require(self.sources.contains(&SourceKind::SelfGenerated), || {
                    "the temperature grid needs the self source".into()
                })?;
                require(!self.grid.is_empty(), || "empty temperature grid".into())?;
                for &t in &self.grid {
                    TemperatureSchedule::new(t, t, self.grid_ramp)?;
                }
            }
        }
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// What distinguishes table rows beyond method and source.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Setting {
    Default,
    Size(usize),
    Temperatures { t_initial: f64, t_final: f64 },
}

impl Setting {
    fn sort_key(&self) -> (u8, u64, u64) {
        match *self {
            Setting::Default => (0, 0, 0),
            Setting::Size(n) => (1, n as u64, 0),
            Setting::Temperatures { t_initial, t_final } => (2, t_initial.to_bits(), t_final.to_bits()),
        }
    }
}

impl Eq for Setting {}

impl PartialOrd for Setting {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

// Temperatures are non-negative, so their bit patterns order like the values.
impl Ord for Setting {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.sort_key().cmp(&other.sort_key())
    }
}

impl fmt::Display for Setting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Setting::Default => f.write_str("default"),
            Setting::Size(n) => write!(f, "n={n}"),
            Setting::Temperatures { t_initial, t_final } => write!(f, "ti={t_initial:?} tf={t_final:?}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeedResult {
    pub seed: u64,
    pub ppl: f64,
    pub next_token_acc: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    /// Population standard deviation (divides by the number of seeds).
    pub std: f64,
}

impl Summary {
    pub fn of(values: &[f64]) -> Summary {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        Summary { mean, std: var.sqrt() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub method: Method,
    pub source: SourceKind,
    pub setting: Setting,
    pub per_seed: Vec<SeedResult>,
    pub ppl: Summary,
    pub next_token_acc: Summary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellError {
    pub method: Method,
    pub source: SourceKind,
    pub setting: Setting,
    pub seed: u64,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultTable {
    pub std_convention: String,
    /// The uncompressed model on the same held-out windows.
    pub baseline: EvalResult,
    pub rows: Vec<ResultRow>,
    pub errors: Vec<CellError>,
}

type RowKey = (Method, SourceKind, Setting);

impl ResultTable {
    fn from_cells(baseline: EvalResult, cells: BTreeMap<RowKey, Vec<SeedResult>>, errors: Vec<CellError>) -> Self {
        let rows = cells
            .into_iter()
            .map(|((method, source, setting), per_seed)| {
                let ppl: Vec<f64> = per_seed.iter().map(|r| r.ppl).collect();
                let acc: Vec<f64> = per_seed.iter().map(|r| r.next_token_acc).collect();
                ResultRow {
                    method,
                    source,
                    setting,
                    ppl: Summary::of(&ppl),
                    next_token_acc: Summary::of(&acc),
                    per_seed,
                }
            })
            .collect();
        ResultTable {
            std_convention: "population".into(),
            baseline,
            rows,
            errors,
        }
    }

    pub fn row(&self, method: Method, source: SourceKind, setting: Setting) -> Option<&ResultRow> {
        self.rows
            .iter()
            .find(|r| r.method == method && r.source == source && r.setting == setting)
    }

    /// `method,source,setting,seed,ppl,next_token_acc`, one line per run.
    pub fn per_seed_csv(&self) -> String {
        let mut out = String::from("method,source,setting,seed,ppl,next_token_acc\n");
        for r in &self.rows {
            for s in &r.per_seed {
                out.push_str(&format!(
                    "{},{},{},{},{:?},{:?}\n",
                    r.method, r.source.as_str(), r.setting, s.seed, s.ppl, s.next_token_acc
                ));
            }
        }
        out
    }

    pub fn aggregate_csv(&self) -> String {
        let mut out = String::from("method,source,setting,seeds,ppl_mean,ppl_std,acc_mean,acc_std\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{:?},{:?},{:?},{:?}\n",
                r.method,
                r.source.as_str(),
                r.setting,
                r.per_seed.len(),
                r.ppl.mean,
                r.ppl.std,
                r.next_token_acc.mean,
                r.next_token_acc.std
            ));
        }
        out
    }

    /// Mean perplexity per `(t_initial, t_final)` cell for one method, rows
    /// indexed by `t_initial`.
    pub fn heatmap_csv(&self, method: Method) -> Option<String> {
        let mut grid: BTreeMap<u64, BTreeMap<u64, f64>> = BTreeMap::new();
        let mut finals = std::collections::BTreeSet::new();
        for r in self.rows.iter().filter(|r| r.method == method) {
            if let Setting::Temperatures { t_initial, t_final } = r.setting {
                grid.entry(t_initial.to_bits()).or_default().insert(t_final.to_bits(), r.ppl.mean);
                finals.insert(t_final.to_bits());
            }
        }
        if grid.is_empty() {
            return None;
        }
        let mut out = String::from("t_initial");
        for tf in &finals {
            out.push_str(&format!(",{:?}", f64::from_bits(*tf)));
        }
        out.push('\n');
        for (ti, row) in &grid {
            out.push_str(&format!("{:?}", f64::from_bits(*ti)));
            for tf in &finals {
                out.push(',');
                if let Some(v) = row.get(tf) {
                    out.push_str(&format!("{v:?}"));
                }
            }
            out.push('\n');
        }
        Some(out)
    }

    /// Writes `results.json`, `results.csv`, `results_agg.csv` and, for grid
    /// ablations, `heatmap_<method>.csv`.
    pub fn write_outputs(&self, dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut files = vec![
            ("results.json".to_string(), serde_json::to_string_pretty(self)? + "\n"),
            ("results.csv".to_string(), self.per_seed_csv()),
            ("results_agg.csv".to_string(), self.aggregate_csv()),
        ];
        for m in Method::ALL {
            if let Some(h) = self.heatmap_csv(m) {
                files.push((format!("heatmap_{m}.csv"), h));
            }
        }
        let mut written = Vec::new();
        for (name, body) in files {
            let p = dir.join(name);
            fs::write(&p, body).map_err(|e| Error::io(&p, e))?;
            written.push(p);
        }
        Ok(written)
    }
}

/// Model and token streams an experiment runs on.
#[derive(Debug, Clone)]
pub struct ExperimentData {
    pub model: TinyLm,
    /// Stream sampled by the corpus source.
    pub calib_corpus: Vec<TokenId>,
    /// Held-out evaluation windows.
    pub eval: Vec<Vec<TokenId>>,
}

impl ExperimentData {
    /// Resolves the model and corpora named by `cfg`, falling back to the
    /// bundled model and corpus splits.
    pub fn load(cfg: &ExperimentConfig) -> Result<Self> {
        let model = match &cfg.model {
            Some(p) => load_checkpoint(p)?,
            None => crate::tiny_lm::bundled_model()?,
        };
        let split = crate::tiny_lm::corpus::split_corpus(crate::tiny_lm::corpus::BUNDLED_CORPUS);
        let read = |p: &PathBuf| -> Result<Vec<TokenId>> {
            let text = fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            Ok(Tokenizer::new().encode_documents(&text))
        };
        let calib_corpus = match &cfg.calib_corpus {
            Some(p) => read(p)?,
            None => split.train,
        };
        let heldout = match &cfg.eval_corpus {
            Some(p) => read(p)?,
            None => split.heldout,
        };
        let eval = eval_windows(&heldout, model.config.context_len, cfg.eval_examples);
        require(eval.len() == cfg.eval_examples, || {
            format!("held-out text yields {} of {} evaluation windows", eval.len(), cfg.eval_examples)
        })?;
        Ok(Self {
            model,
            calib_corpus,
            eval,
        })
    }
}

struct Runner<'a> {
    cfg: &'a ExperimentConfig,
    data: &'a ExperimentData,
    cells: BTreeMap<RowKey, Vec<SeedResult>>,
    errors: Vec<CellError>,
    progress: &'a mut dyn FnMut(&str),
}

impl Runner<'_> {
    fn spec(&self, source: SourceKind, seed: u64) -> CalibrationSpec {
        let mut spec = CalibrationSpec::new(source, seed);
        spec.num_examples = self.cfg.num_examples;
        spec.example_len = self.cfg.example_len;
        if source == SourceKind::SelfGenerated {
            spec.schedule = Some(self.cfg.schedule);
            spec.stopword_constraint = self.cfg.stopword_constraint;
        }
        if source == SourceKind::Corpus {
            spec.corpus_path = self.cfg.calib_corpus.as_ref().map(|p| p.display().to_string());
        }
        spec
    }

    fn build(&self, spec: &CalibrationSpec) -> Result<CalibrationSet> {
        build_calibration_set(spec, Some(&self.data.model), Some(&self.data.calib_corpus))
    }

    fn evaluate_cell(&self, method: Method, set: &CalibrationSet) -> Result<EvalResult> {
        let out = compress_model(&self.data.model, set, &self.cfg.compression_for(method))?;
        evaluate(&out.model, &self.data.eval)
    }

    fn record(&mut self, key: RowKey, seed: u64, result: Result<EvalResult>) {
        let (method, source, setting) = key;
        match result {
            Ok(r) => {
                (self.progress)(&format!(
                    "{method} {} {setting} seed {seed}: ppl {:.4} acc {:.4}",
                    source.as_str(),
                    r.ppl,
                    r.next_token_acc
                ));
                self.cells.entry(key).or_default().push(SeedResult {
                    seed,
                    ppl: r.ppl,
                    next_token_acc: r.next_token_acc,
                });
            }
            Err(e) => {
                (self.progress)(&format!("{method} {} {setting} seed {seed}: error: {e}", source.as_str()));
                self.errors.push(CellError {
                    method,
                    source,
                    setting,
                    seed,
                    message: e.to_string(),
                });
            }
        }
    }

    /// Runs every method on `set`, or records the set's error for all of them.
    fn run_methods(&mut self, source: SourceKind, setting: Setting, seed: u64, set: &Result<CalibrationSet>) {
        for &method in &self.cfg.methods.clone() {
            let result = match set {
                Ok(s) => self.evaluate_cell(method, s),
                Err(e) => Err(Error::Contract(format!("calibration set: {e}"))),
            };
            self.record((method, source, setting), seed, result);
        }
    }
}

fn run(
    cfg: &ExperimentConfig,
    data: &ExperimentData,
    progress: &mut dyn FnMut(&str),
    body: impl Fn(&mut Runner<'_>, u64),
) -> Result<ResultTable> {
    cfg.validate()?;
    let baseline = evaluate(&data.model, &data.eval)?;
    let mut runner = Runner {
        cfg,
        data,
        cells: BTreeMap::new(),
        errors: Vec::new(),
        progress,
    };
    for seed in cfg.seeds() {
        body(&mut runner, seed);
    }
    Ok(ResultTable::from_cells(baseline, runner.cells, runner.errors))
}

/// One row per (method, source): every seed's set is compressed by every
/// method and scored on the held-out windows.
pub fn run_experiment(cfg: &ExperimentConfig, data: &ExperimentData, progress: &mut dyn FnMut(&str)) -> Result<ResultTable> {
    run(cfg, data, progress, |r, seed| {
        for &source in &r.cfg.sources {
            let set = r.build(&r.spec(source, seed));
            r.run_methods(source, Setting::Default, seed, &set);
        }
    })
}

/// One row per (method, source, n), each subset being the first `n`
/// examples of the seed's base set.
pub fn ablate_quantity(cfg: &ExperimentConfig, data: &ExperimentData, progress: &mut dyn FnMut(&str)) -> Result<ResultTable> {
    run(cfg, data, progress, |r, seed| {
        for &source in &r.cfg.sources {
            let base = r.build(&r.spec(source, seed));
            for &n in &r.cfg.sizes {
                let subset = base.as_ref().map_err(|e| Error::Contract(e.to_string())).and_then(|b| b.prefix(n));
                r.run_methods(source, Setting::Size(n), seed, &subset);
            }
        }
    })
}

/// One row per (method, t_initial, t_final) over the self source.
pub fn ablate_temperature_grid(
    cfg: &ExperimentConfig,
    data: &ExperimentData,
    progress: &mut dyn FnMut(&str),
) -> Result<ResultTable> {
    run(cfg, data, progress, |r, seed| {
        for &ti in &r.cfg.grid {
            for &tf in &r.cfg.grid {
                let mut spec = r.spec(SourceKind::SelfGenerated, seed);
                let set = TemperatureSchedule::new(ti, tf, r.cfg.grid_ramp).and_then(|s| {
                    spec.schedule = Some(s);
                    r.build(&spec)
                });
                let setting = Setting::Temperatures {
                    t_initial: ti,
                    t_final: tf,
                };
                r.run_methods(SourceKind::SelfGenerated, setting, seed, &set);
            }
        }
    })
}

/// Dispatches on `cfg.ablation`.
pub fn run_configured(cfg: &ExperimentConfig, data: &ExperimentData, progress: &mut dyn FnMut(&str)) -> Result<ResultTable> {
    match cfg.ablation {
        Ablation::None => run_experiment(cfg, data, progress),
        Ablation::Quantity => ablate_quantity(cfg, data, progress),
        Ablation::TemperatureGrid => ablate_temperature_grid(cfg, data, progress),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tiny_lm::{ModelConfig, VOCAB_SIZE};

    fn data() -> ExperimentData {
        let model = TinyLm::init(
            ModelConfig {
                layers: 1,
                heads: 2,
                model_dim: 16,
                ffn_dim: 32,
                context_len: 32,
                vocab_size: VOCAB_SIZE,
                tie_embeddings: true,
            },
            5,
        )
        .unwrap();
        let text = "the quick brown fox jumps over the lazy dog. ".repeat(40);
        let stream = Tokenizer::new().encode_documents(&text);
        ExperimentData {
            model,
            eval: eval_windows(&stream, 32, 3),
            calib_corpus: stream,
        }
    }

    fn cfg() -> ExperimentConfig {
        ExperimentConfig {
            methods: vec![Method::Rtn],
            sources: vec![SourceKind::Corpus, SourceKind::RandomVocab],
            num_seeds: 2,
            num_examples: 4,
            example_len: 24,
            eval_examples: 3,
            ..ExperimentConfig::default()
        }
    }

    #[test]
    fn population_std() {
        let s = Summary::of(&[1.0, 3.0]);
        assert_eq!((s.mean, s.std), (2.0, 1.0));
        assert_eq!(Summary::of(&[4.0]).std, 0.0);
    }

    #[test]
    fn rtn_ignores_calibration_source() {
        let t = run_experiment(&cfg(), &data(), &mut |_| {}).unwrap();
        let a = t.row(Method::Rtn, SourceKind::Corpus, Setting::Default).unwrap();
        let b = t.row(Method::Rtn, SourceKind::RandomVocab, Setting::Default).unwrap();
        assert_eq!(a.per_seed.len(), 2);
        assert_eq!(a.ppl, b.ppl);
        assert!(t.errors.is_empty());
        for r in &t.rows {
            let ppl: Vec<f64> = r.per_seed.iter().map(|s| s.ppl).collect();
            assert_eq!(Summary::of(&ppl), r.ppl);
        }
    }

    #[test]
    fn repeated_runs_are_byte_identical() {
        let c = ExperimentConfig {
            methods: vec![Method::Sparsegpt, Method::Gptq],
            sources: vec![SourceKind::SelfGenerated, SourceKind::RandomVocab],
            ..cfg()
        };
        let d = data();
        let a = run_experiment(&c, &d, &mut |_| {}).unwrap();
        let b = run_experiment(&c, &d, &mut |_| {}).unwrap();
        assert_eq!(a.per_seed_csv(), b.per_seed_csv());
        assert_eq!(a.aggregate_csv(), b.aggregate_csv());
        assert_eq!(a.per_seed_csv().lines().count(), 1 + 2 * 2 * 2);
    }

    #[test]
    fn full_prefix_matches_plain_run() {
        let c = ExperimentConfig {
            methods: vec![Method::Wanda],
            sources: vec![SourceKind::Corpus],
            sizes: vec![1, 2, 4],
            ablation: Ablation::Quantity,
            ..cfg()
        };
        let d = data();
        let q = ablate_quantity(&c, &d, &mut |_| {}).unwrap();
        let plain = run_experiment(&c, &d, &mut |_| {}).unwrap();
        assert_eq!(
            q.row(Method::Wanda, SourceKind::Corpus, Setting::Size(4)).unwrap().per_seed,
            plain.row(Method::Wanda, SourceKind::Corpus, Setting::Default).unwrap().per_seed
        );
        assert_eq!(q.rows.len(), 3);
        let bad = ExperimentConfig { sizes: vec![1, 8], ..c };
        assert!(ablate_quantity(&bad, &d, &mut |_| {}).is_err());
    }

    #[test]
    fn grid_emits_full_heatmap() {
        let c = ExperimentConfig {
            methods: vec![Method::Wanda],
            sources: vec![SourceKind::SelfGenerated],
            num_seeds: 1,
            num_examples: 2,
            grid: vec![0.0, 1.0],
            ablation: Ablation::TemperatureGrid,
            ..cfg()
        };
        let d = data();
        let t = ablate_temperature_grid(&c, &d, &mut |_| {}).unwrap();
        assert_eq!(t.rows.len(), 4);
        let h = t.heatmap_csv(Method::Wanda).unwrap();
        assert_eq!(h.lines().count(), 3);
        assert!(h.lines().all(|l| !l.contains(",,") && !l.ends_with(',')));
        // Cell (1, 1) is the default self-calibration schedule.
        let plain = run_experiment(&ExperimentConfig { ablation: Ablation::None, ..c.clone() }, &d, &mut |_| {}).unwrap();
        let cell = Setting::Temperatures { t_initial: 1.0, t_final: 1.0 };
        assert_eq!(
            t.row(Method::Wanda, SourceKind::SelfGenerated, cell).unwrap().per_seed,
            plain.row(Method::Wanda, SourceKind::SelfGenerated, Setting::Default).unwrap().per_seed
        );
    }

    #[test]
    fn failing_cells_are_recorded() {
        let c = ExperimentConfig {
            example_len: 10_000,
            ..cfg()
        };
        let t = run_experiment(&c, &data(), &mut |_| {}).unwrap();
        // The corpus is too small for such windows; random sets still run.
        assert_eq!(t.errors.len(), 2);
        assert!(t.row(Method::Rtn, SourceKind::RandomVocab, Setting::Default).is_some());
    }

    #[test]
    fn settings_sort_and_print() {
        let mut v = vec![Setting::Size(16), Setting::Size(2), Setting::Default];
        v.sort();
        assert_eq!(v, vec![Setting::Default, Setting::Size(2), Setting::Size(16)]);
        let t = Setting::Temperatures { t_initial: 0.5, t_final: 2.0 };
        assert_eq!(t.to_string(), "ti=0.5 tf=2.0");
    }

    #[test]
    fn config_json_defaults() {
        let c: ExperimentConfig = serde_json::from_str(r#"{"methods":["gptq"],"num_seeds":3}"#).unwrap();
        assert_eq!(c.seeds(), vec![0, 1, 2]);
        assert_eq!(c.sizes.len(), 8);
        assert_eq!(c.grid_ramp, 10);
    }
}
