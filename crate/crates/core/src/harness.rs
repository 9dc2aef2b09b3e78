//! Experiment orchestration: configuration, per-seed runs, sweeps and result files.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::memory::MemoryBuffer;
use crate::metrics::{MetricSet, ResultMatrix};
use crate::nn::{self, ParamSet};
use crate::replay::{self, LossWeighting, Strategy, StrategyKind};
use crate::stream::{self, Dataset, Example, SplitSpec, SyntheticSpec, TaskStream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Benchmark {
    SplitMnist,
    SplitFmnist,
    SplitSynthetic,
}

impl Benchmark {
    fn default_train_per_task(self) -> usize {
        match self {
            Benchmark::SplitMnist => 1000,
            Benchmark::SplitFmnist => 1200,
            Benchmark::SplitSynthetic => 1000,
        }
    }
}

/// Everything a run needs; also the JSON config file schema.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub benchmark: Benchmark,
    pub train_images: Option<PathBuf>,
    pub train_labels: Option<PathBuf>,
    pub test_images: Option<PathBuf>,
    pub test_labels: Option<PathBuf>,
    pub strategy: StrategyKind,
    pub num_tasks: usize,
    pub classes_per_task: usize,
    /// Defaults to 1000 (MNIST, synthetic) or 1200 (Fashion-MNIST).
    pub train_per_task: Option<usize>,
    /// Test examples per class; defaults to 200 for synthetic data and to the
    /// whole test split for IDX data.
    pub test_per_class: Option<usize>,
    pub batch_size: usize,
    pub replay_size: usize,
    pub memory_size: usize,
    pub learning_rate: f64,
    pub tau: f64,
    pub lambda: f64,
    pub iters_per_batch: usize,
    pub hidden_dim: usize,
    pub joint_epochs: usize,
    pub loss_weighting: LossWeighting,
    pub synthetic_dim: usize,
    pub synthetic_separation: f64,
    pub synthetic_noise: f64,
    pub synthetic_shift: f64,
    /// Seed of the synthetic pool; the pool is shared by every run seed.
    pub data_seed: u64,
    pub seeds: Vec<u64>,
    /// Directory receiving the CSV and JSON results.
    pub output: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            benchmark: Benchmark::SplitSynthetic,
            train_images: None,
            train_labels: None,
            test_images: None,
            test_labels: None,
            strategy: StrategyKind::Adaer,
            num_tasks: 5,
            classes_per_task: 2,
            train_per_task: None,
            test_per_class: None,
            batch_size: 20,
            replay_size: 20,
            memory_size: 100,
            learning_rate: 0.05,
            tau: 0.5,
            lambda: 0.0,
            iters_per_batch: 1,
            hidden_dim: 400,
            joint_epochs: 5,
            loss_weighting: LossWeighting::Pooled,
            synthetic_dim: 64,
            synthetic_separation: 5.0,
            synthetic_noise: SyntheticSpec::DEFAULT_NOISE,
            synthetic_shift: SyntheticSpec::DEFAULT_SHIFT,
            data_seed: 0,
            seeds: vec![1, 2, 3, 4, 5],
            output: None,
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn train_per_task(&self) -> usize {
        self.train_per_task
            .unwrap_or_else(|| self.benchmark.default_train_per_task())
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.num_tasks == 0 || self.classes_per_task == 0 {
            return bad("num_tasks and classes_per_task must be positive".into());
        }
        if self.batch_size == 0 || self.iters_per_batch == 0 || self.hidden_dim == 0 {
            return bad("batch_size, iters_per_batch and hidden_dim must be positive".into());
        }
        if self.strategy != StrategyKind::Online && (self.replay_size == 0 || self.memory_size == 0) {
            return bad("replay strategies need replay_size and memory_size >= 1".into());
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning_rate must be finite and >= 0, got {}", self.learning_rate));
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return bad(format!("tau must lie in (0, 1], got {}", self.tau));
        }
        if !(0.0..1.0).contains(&self.lambda) {
            return bad(format!("lambda must lie in [0, 1), got {}", self.lambda));
        }
        if self.seeds.is_empty() {
            return bad("at least one seed is required".into());
        }
        if self.train_per_task() == 0 {
            return bad("train_per_task must be positive".into());
        }
        match self.benchmark {
            Benchmark::SplitSynthetic => {
                if self.synthetic_dim < 2 || !(self.synthetic_separation > 0.0) || !(self.synthetic_noise >= 0.0) {
                    return bad("synthetic_dim >= 2, separation > 0 and noise >= 0 required".into());
                }
            }
            Benchmark::SplitMnist | Benchmark::SplitFmnist => {
                if self.train_images.is_none()
                    || self.train_labels.is_none()
                    || self.test_images.is_none()
                    || self.test_labels.is_none()
                {
                    return bad("IDX benchmarks need train/test image and label paths".into());
                }
            }
        }
        // Ablation pairing: C-CMR keeps reservoir updates, AdaER uses E-BRS.
        let expected = match self.strategy {
            StrategyKind::Online => None,
            StrategyKind::Er | StrategyKind::Mir | StrategyKind::Ccmr => {
                Some(crate::memory::UpdatePolicy::Reservoir)
            }
            StrategyKind::Adaer | StrategyKind::Ebrs => Some(crate::memory::UpdatePolicy::EntropyBalanced),
        };
        if self.strategy.memory_policy() != expected {
            return bad(format!("strategy {} is wired to the wrong memory policy", self.strategy));
        }
        Ok(())
    }

    pub fn strategy(&self) -> Result<Strategy> {
        let replay = self.replay_size.max(1);
        Ok(Strategy::new(self.strategy, replay, self.tau)?.with_weighting(self.loss_weighting))
    }
}

/// Train and test pools the task stream is cut from.
#[derive(Debug, Clone)]
pub struct Pools {
    pub train: Dataset<f64>,
    pub test: Dataset<f64>,
}

pub fn load_pools(config: &RunConfig) -> Result<Pools> {
    match config.benchmark {
        Benchmark::SplitSynthetic => {
            let test_per_class = config.test_per_class.unwrap_or(200);
            let spec = SyntheticSpec {
                num_classes: config.num_tasks * config.classes_per_task,
                dim: config.synthetic_dim,
                per_class: config.train_per_task() + test_per_class,
                separation: config.synthetic_separation,
                noise: config.synthetic_noise,
                shift: config.synthetic_shift,
                seed: config.data_seed,
            };
            let (train, test) = spec.generate::<f64>()?.split_holdout(test_per_class)?;
            Ok(Pools { train, test })
        }
        Benchmark::SplitMnist | Benchmark::SplitFmnist => {
            let path = |p: &Option<PathBuf>| p.clone().unwrap_or_default();
            let train = stream::load_idx(&path(&config.train_images), &path(&config.train_labels))?;
            let test = stream::load_idx(&path(&config.test_images), &path(&config.test_labels))?;
            Ok(Pools { train, test })
        }
    }
}

/// Independent 64-bit seed for sub-stream `k` of a run seed.
pub fn sub_seed(seed: u64, k: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(k);
    rng.next_u64()
}

fn build_stream(config: &RunConfig, pools: &Pools, seed: u64) -> Result<TaskStream<f64>> {
    let spec = SplitSpec {
        num_tasks: config.num_tasks,
        classes_per_task: config.classes_per_task,
        train_per_task: config.train_per_task(),
        lambda: config.lambda,
        batch_size: config.batch_size,
        test_per_class: config.test_per_class.or(match config.benchmark {
            Benchmark::SplitSynthetic => Some(200),
            _ => None,
        }),
        seed: sub_seed(seed, 1),
    };
    stream::split_stream(&pools.train, &pools.test, &spec).map_err(|e| match e {
        Error::InvalidArgument(m) => Error::Config(m),
        other => other,
    })
}

/// Test accuracy of `params` on every task of the stream.
pub fn evaluate(params: &ParamSet<f64>, stream: &TaskStream<f64>) -> Result<Vec<f64>> {
    stream
        .tasks()
        .iter()
        .map(|t| nn::accuracy(params, &stream::as_batch(&t.test)))
        .collect()
}

fn init_for(config: &RunConfig, stream: &TaskStream<f64>, input_dim: usize, seed: u64) -> Result<ParamSet<f64>> {
    let classes = stream.classes().into_iter().max().map_or(0, |c| c + 1);
    nn::init_network(input_dim, config.hidden_dim, classes, sub_seed(seed, 2))
}

fn check_finite(params: &ParamSet<f64>, task: usize, batch: usize) -> Result<()> {
    if params.is_finite() {
        Ok(())
    } else {
        Err(Error::Numeric(format!(
            "non-finite parameters after task {task}, batch {batch}"
        )))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunKind {
    Continual,
    Joint,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedRecord {
    pub seed: u64,
    pub matrix: ResultMatrix,
    pub metrics: Option<MetricSet>,
    /// Set when the seed aborted on a numeric blow-up.
    pub failure: Option<String>,
    pub wall_clock_secs: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub std: f64,
    pub n: usize,
}

impl Stat {
    /// Mean and sample standard deviation; `None` for an empty series.
    pub fn of(values: &[f64]) -> Option<Stat> {
        if values.is_empty() {
            return None;
        }
        let n = values.len();
        let mean = values.iter().sum::<f64>() / n as f64;
        let var = if n > 1 {
            values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64
        } else {
            0.0
        };
        Some(Stat { mean, std: var.sqrt(), n })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub acc: Option<Stat>,
    pub forget: Option<Stat>,
    pub bwt: Option<Stat>,
    pub fwt: Option<Stat>,
}

impl Aggregate {
    pub fn from_seeds(seeds: &[SeedRecord]) -> Self {
        let ok: Vec<&MetricSet> = seeds.iter().filter_map(|s| s.metrics.as_ref()).collect();
        let collect = |f: fn(&MetricSet) -> Option<f64>| -> Option<Stat> {
            let v: Vec<f64> = ok.iter().filter_map(|m| f(m)).collect();
            if v.len() == ok.len() {
                Stat::of(&v)
            } else {
                None
            }
        };
        Self {
            acc: collect(|m| Some(m.acc)),
            forget: collect(|m| m.forget),
            bwt: collect(|m| m.bwt),
            fwt: collect(|m| m.fwt),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub kind: RunKind,
    pub config: RunConfig,
    pub seeds: Vec<SeedRecord>,
    pub aggregate: Aggregate,
}

impl RunRecord {
    fn new(kind: RunKind, config: &RunConfig, seeds: Vec<SeedRecord>) -> Self {
        let aggregate = Aggregate::from_seeds(&seeds);
        Self {
            kind,
            config: config.clone(),
            seeds,
            aggregate,
        }
    }

    pub fn failed_seeds(&self) -> impl Iterator<Item = &SeedRecord> {
        self.seeds.iter().filter(|s| s.failure.is_some())
    }

    /// Per-seed final average accuracy, in seed order (NaN for failed seeds).
    pub fn accuracies(&self) -> Vec<f64> {
        self.seeds
            .iter()
            .map(|s| s.metrics.map_or(f64::NAN, |m| m.acc))
            .collect()
    }

    pub fn mean_accuracy(&self) -> f64 {
        self.aggregate.acc.map_or(f64::NAN, |s| s.mean)
    }
}

fn run_continual_seed(config: &RunConfig, pools: &Pools, seed: u64) -> Result<SeedRecord> {
    let start = Instant::now();
    let stream = build_stream(config, pools, seed)?;
    let strategy = config.strategy()?;
    let mut params = init_for(config, &stream, pools.train.dim(), seed)?;
    let policy = strategy.memory_policy.unwrap_or(crate::memory::UpdatePolicy::Reservoir);
    let mut buffer = MemoryBuffer::new(config.memory_size.max(1), policy, sub_seed(seed, 3))?;
    let mut rng = ChaCha8Rng::seed_from_u64(sub_seed(seed, 4));
    let alpha = config.learning_rate;

    let mut matrix = ResultMatrix::new(stream.num_tasks())?;
    matrix.record_baseline(&evaluate(&params, &stream)?)?;
    let mut failure = None;
    'tasks: for t in 1..=stream.num_tasks() {
        for (b, batch) in stream.batches(t).enumerate() {
            for _ in 0..config.iters_per_batch {
                let step = replay::replay_step(&params, batch, &mut buffer, &strategy, alpha, &mut rng)
                    .and_then(|p| check_finite(&p, t, b).map(|_| p));
                match step {
                    Ok(p) => params = p,
                    Err(Error::Numeric(msg)) => {
                        failure = Some(msg);
                        break 'tasks;
                    }
                    Err(e) => return Err(e),
                }
            }
            replay::remember(&mut buffer, batch, &strategy);
        }
        matrix.record_row(t, &evaluate(&params, &stream)?)?;
    }
    let metrics = match failure {
        None => Some(MetricSet::from_matrix(&matrix)?),
        Some(_) => None,
    };
    Ok(SeedRecord {
        seed,
        matrix,
        metrics,
        failure,
        wall_clock_secs: start.elapsed().as_secs_f64(),
    })
}

fn run_joint_seed(config: &RunConfig, pools: &Pools, seed: u64) -> Result<SeedRecord> {
    let start = Instant::now();
    let stream = build_stream(config, pools, seed)?;
    let mut params = init_for(config, &stream, pools.train.dim(), seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(sub_seed(seed, 4));
    let mut union: Vec<&Example<f64>> = stream.tasks().iter().flat_map(|t| t.train.iter()).collect();

    let mut matrix = ResultMatrix::new(stream.num_tasks())?;
    matrix.record_baseline(&evaluate(&params, &stream)?)?;
    let mut failure = None;
    'epochs: for epoch in 0..config.joint_epochs.max(1) {
        union.shuffle(&mut rng);
        for (b, chunk) in union.chunks(config.batch_size).enumerate() {
            let batch: Vec<_> = chunk.iter().map(|e| e.labeled()).collect();
            let step = nn::backward(&params, &batch)
                .and_then(|g| nn::sgd_step(&params, &g, config.learning_rate))
                .and_then(|p| check_finite(&p, epoch + 1, b).map(|_| p));
            match step {
                Ok(p) => params = p,
                Err(Error::Numeric(msg)) => {
                    failure = Some(msg);
                    break 'epochs;
                }
                Err(e) => return Err(e),
            }
        }
    }
    let metrics = if failure.is_none() {
        matrix.record_row(stream.num_tasks(), &evaluate(&params, &stream)?)?;
        let acc = crate::metrics::average_accuracy(&matrix)?;
        Some(MetricSet {
            acc,
            forget: None,
            bwt: None,
            fwt: None,
        })
    } else {
        None
    };
    Ok(SeedRecord {
        seed,
        matrix,
        metrics,
        failure,
        wall_clock_secs: start.elapsed().as_secs_f64(),
    })
}

/// Continual run over every configured seed.
pub fn run_experiment(config: &RunConfig) -> Result<RunRecord> {
    config.validate()?;
    let pools = load_pools(config)?;
    run_experiment_with(config, &pools)
}

pub fn run_experiment_with(config: &RunConfig, pools: &Pools) -> Result<RunRecord> {
    config.validate()?;
    let seeds = config
        .seeds
        .iter()
        .map(|&s| run_continual_seed(config, pools, s))
        .collect::<Result<Vec<_>>>()?;
    Ok(RunRecord::new(RunKind::Continual, config, seeds))
}

/// Joint (i.i.d.) training on the union of every task: the upper reference.
pub fn run_joint(config: &RunConfig) -> Result<RunRecord> {
    config.validate()?;
    let pools = load_pools(config)?;
    run_joint_with(config, &pools)
}

pub fn run_joint_with(config: &RunConfig, pools: &Pools) -> Result<RunRecord> {
    config.validate()?;
    let seeds = config
        .seeds
        .iter()
        .map(|&s| run_joint_seed(config, pools, s))
        .collect::<Result<Vec<_>>>()?;
    Ok(RunRecord::new(RunKind::Joint, config, seeds))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    MemorySize,
    Tau,
    Lambda,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::MemorySize => "memory_M",
            SweepAxis::Tau => "tau",
            SweepAxis::Lambda => "lambda",
        }
    }

    /// Copy of `config` with this axis set to `value`.
    pub fn apply(self, config: &RunConfig, value: f64) -> Result<RunConfig> {
        let mut c = config.clone();
        match self {
            SweepAxis::MemorySize => {
                if value < 1.0 || value.fract() != 0.0 {
                    return Err(Error::Config(format!("memory size must be a positive integer, got {value}")));
                }
                c.memory_size = value as usize;
            }
            SweepAxis::Tau => c.tau = value,
            SweepAxis::Lambda => c.lambda = value,
        }
        c.validate()?;
        Ok(c)
    }
}

impl fmt::Display for SweepAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "memory_M" | "memory_m" | "memory_size" | "M" => Ok(SweepAxis::MemorySize),
            "tau" => Ok(SweepAxis::Tau),
            "lambda" => Ok(SweepAxis::Lambda),
            other => Err(Error::Config(format!("unknown sweep axis {other:?}"))),
        }
    }
}

/// One continual run per axis value, all sharing the configured seeds.
pub fn sweep(config: &RunConfig, axis: SweepAxis, values: &[f64]) -> Result<Vec<RunRecord>> {
    if values.is_empty() {
        return Err(Error::Config("sweep needs at least one value".into()));
    }
    let configs = values
        .iter()
        .map(|&v| axis.apply(config, v))
        .collect::<Result<Vec<_>>>()?;
    let pools = load_pools(config)?;
    configs.iter().map(|c| run_experiment_with(c, &pools)).collect()
}

/// Mean over successful seeds of the first task's accuracy after each task.
pub fn first_task_curve(record: &RunRecord) -> Result<Vec<f64>> {
    let ok: Vec<&SeedRecord> = record.seeds.iter().filter(|s| s.failure.is_none()).collect();
    if ok.is_empty() {
        return Err(Error::IncompleteRun("no successful seed".into()));
    }
    let t = ok[0].matrix.num_tasks();
    (1..=t)
        .map(|i| {
            let vals = ok
                .iter()
                .map(|s| {
                    s.matrix
                        .get(i, 1)
                        .ok_or_else(|| Error::IncompleteRun(format!("seed {} row {i} missing", s.seed)))
                })
                .collect::<Result<Vec<f64>>>()?;
            Ok(vals.iter().sum::<f64>() / vals.len() as f64)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsvRow {
    pub seed: u64,
    /// 0 marks the random-initialization baseline.
    pub task_learned: usize,
    pub task_evaluated: usize,
    pub accuracy: f64,
}

pub fn csv_rows(record: &RunRecord) -> Vec<CsvRow> {
    let mut rows = Vec::new();
    for s in &record.seeds {
        let t = s.matrix.num_tasks();
        if let Some(base) = s.matrix.baseline() {
            rows.extend(base.iter().enumerate().map(|(j, &a)| CsvRow {
                seed: s.seed,
                task_learned: 0,
                task_evaluated: j + 1,
                accuracy: a,
            }));
        }
        for i in 1..=t {
            if let Some(row) = s.matrix.row(i) {
                rows.extend(row.iter().enumerate().map(|(j, &a)| CsvRow {
                    seed: s.seed,
                    task_learned: i,
                    task_evaluated: j + 1,
                    accuracy: a,
                }));
            }
        }
    }
    rows
}

pub fn write_csv(record: &RunRecord, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::io(path, e.into()))?;
    for row in csv_rows(record) {
        w.serialize(row).map_err(|e| Error::io(path, e.into()))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_summary(record: &RunRecord, path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(record).expect("run records serialize");
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

/// Writes `<dir>/<name>.csv` and `<dir>/<name>.json`.
pub fn write_outputs(record: &RunRecord, dir: &Path, name: &str) -> Result<(PathBuf, PathBuf)> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let csv_path = dir.join(format!("{name}.csv"));
    let json_path = dir.join(format!("{name}.json"));
    write_csv(record, &csv_path)?;
    write_summary(record, &json_path)?;
    Ok((csv_path, json_path))
}

/// Reads every `*.json` run summary in `dir`, sorted by file name.
pub fn read_summaries(dir: &Path) -> Result<Vec<(String, RunRecord)>> {
    let mut entries: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    entries.sort();
    entries
        .into_iter()
        .map(|p| {
            let text = fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?;
            let rec: RunRecord = serde_json::from_str(&text).map_err(|e| Error::Format {
                path: p.clone(),
                offset: e.column() as u64,
                message: e.to_string(),
            })?;
            let name = p.file_stem().unwrap_or_default().to_string_lossy().into_owned();
            Ok((name, rec))
        })
        .collect()
}

fn pct(s: Option<Stat>) -> String {
    s.map_or_else(|| "N/A".to_string(), |s| format!("{:.1} ± {:.1}", 100.0 * s.mean, 100.0 * s.std))
}

/// Plain-text table of aggregate metrics, in percent.
pub fn render_report(records: &[(String, RunRecord)]) -> String {
    let mut out = format!(
        "{:<28} {:<8} {:>5} {:>14} {:>14} {:>14} {:>14}\n",
        "run", "strategy", "seeds", "Acc", "Forget", "Bwt", "Fwt"
    );
    for (name, r) in records {
        let strategy = match r.kind {
            RunKind::Joint => "joint".to_string(),
            RunKind::Continual => r.config.strategy.to_string(),
        };
        out.push_str(&format!(
            "{:<28} {:<8} {:>5} {:>14} {:>14} {:>14} {:>14}\n",
            name,
            strategy,
            r.seeds.len(),
            pct(r.aggregate.acc),
            pct(r.aggregate.forget),
            pct(r.aggregate.bwt),
            pct(r.aggregate.fwt),
        ));
    }
    out
}
