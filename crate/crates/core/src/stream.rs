//! Class-incremental task streams.
//!
//! A labeled pool (IDX images or Gaussian clusters) is split into tasks that
//! take consecutive class groups in ascending label order. Each task's
//! training examples are shuffled once and delivered in fixed-size batches.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::Labeled;
use crate::scalar::Scalar;

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;
pub const SYNTHETIC_CACHE_MAGIC: &[u8; 6] = b"LRSYN1";

/// Labeled input with no task assignment yet.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample<S> {
    pub features: Vec<S>,
    pub label: usize,
}

/// A labeled example set of uniform feature width.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<S> {
    dim: usize,
    samples: Vec<Sample<S>>,
}

impl<S: Scalar> Dataset<S> {
    pub fn new(dim: usize, samples: Vec<Sample<S>>) -> Result<Self> {
        for (i, s) in samples.iter().enumerate() {
            if s.features.len() != dim {
                return Err(Error::invalid(format!(
                    "sample {i} has {} features, expected {dim}",
                    s.features.len()
                )));
            }
            if s.features.iter().any(|v| !v.is_finite()) {
                return Err(Error::invalid(format!("sample {i} has non-finite features")));
            }
        }
        Ok(Self { dim, samples })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn samples(&self) -> &[Sample<S>] {
        &self.samples
    }

    /// One past the largest label present.
    pub fn num_classes(&self) -> usize {
        self.samples.iter().map(|s| s.label + 1).max().unwrap_or(0)
    }

    pub fn class_counts(&self) -> BTreeMap<usize, usize> {
        let mut counts = BTreeMap::new();
        for s in &self.samples {
            *counts.entry(s.label).or_insert(0) += 1;
        }
        counts
    }

    /// Moves the last `per_class` samples of every class into a second set.
    pub fn split_holdout(self, per_class: usize) -> Result<(Dataset<S>, Dataset<S>)> {
        let counts = self.class_counts();
        if let Some((c, n)) = counts.iter().find(|(_, &n)| n < per_class) {
            return Err(Error::invalid(format!(
                "class {c} has {n} samples, cannot hold out {per_class}"
            )));
        }
        let mut seen: BTreeMap<usize, usize> = BTreeMap::new();
        let (mut keep, mut held) = (Vec::new(), Vec::new());
        for s in self.samples {
            let k = seen.entry(s.label).or_insert(0);
            *k += 1;
            if *k > counts[&s.label] - per_class {
                held.push(s);
            } else {
                keep.push(s);
            }
        }
        Ok((
            Dataset {
                dim: self.dim,
                samples: keep,
            },
            Dataset {
                dim: self.dim,
                samples: held,
            },
        ))
    }
}

fn read_u32_be(bytes: &[u8], offset: usize, path: &Path) -> Result<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| Error::Format {
            path: path.to_path_buf(),
            offset: offset as u64,
            message: "truncated header".into(),
        })
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

/// Reads an IDX image/label file pair; pixel bytes are scaled to `[0, 1]`.
pub fn load_idx<S: Scalar>(images_path: &Path, labels_path: &Path) -> Result<Dataset<S>> {
    let images = read_file(images_path)?;
    let labels = read_file(labels_path)?;

    let magic = read_u32_be(&images, 0, images_path)?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(Error::Format {
            path: images_path.to_path_buf(),
            offset: 0,
            message: format!("expected image magic 0x{IDX_IMAGES_MAGIC:08x}, found 0x{magic:08x}"),
        });
    }
    let n_images = read_u32_be(&images, 4, images_path)? as usize;
    let rows = read_u32_be(&images, 8, images_path)? as usize;
    let cols = read_u32_be(&images, 12, images_path)? as usize;
    let dim = rows * cols;
    let needed = 16 + n_images * dim;
    if images.len() < needed {
        return Err(Error::Format {
            path: images_path.to_path_buf(),
            offset: images.len() as u64,
            message: format!("truncated image payload: expected {needed} bytes"),
        });
    }

    let magic = read_u32_be(&labels, 0, labels_path)?;
    if magic != IDX_LABELS_MAGIC {
        return Err(Error::Format {
            path: labels_path.to_path_buf(),
            offset: 0,
            message: format!("expected label magic 0x{IDX_LABELS_MAGIC:08x}, found 0x{magic:08x}"),
        });
    }
    let n_labels = read_u32_be(&labels, 4, labels_path)? as usize;
    if n_labels != n_images {
        return Err(Error::Format {
            path: labels_path.to_path_buf(),
            offset: 4,
            message: format!("label count {n_labels} does not match image count {n_images}"),
        });
    }
    if labels.len() < 8 + n_labels {
        return Err(Error::Format {
            path: labels_path.to_path_buf(),
            offset: labels.len() as u64,
            message: format!("truncated label payload: expected {} bytes", 8 + n_labels),
        });
    }

    let samples = images[16..needed]
        .chunks_exact(dim.max(1))
        .zip(&labels[8..8 + n_labels])
        .map(|(px, &label)| Sample {
            features: px.iter().map(|&b| S::of(b as f64 / 255.0)).collect(),
            label: label as usize,
        })
        .collect();
    Ok(Dataset { dim, samples })
}

/// Gaussian-cluster generator, one isotropic cluster per class.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub num_classes: usize,
    pub dim: usize,
    pub per_class: usize,
    /// Distance between any two class means.
    pub separation: f64,
    /// Per-coordinate standard deviation around each mean.
    pub noise: f64,
    /// Constant added to every coordinate of every mean. Inputs then share a
    /// common component, as natural images do.
    pub shift: f64,
    pub seed: u64,
}

impl SyntheticSpec {
    pub const DEFAULT_SEPARATION: f64 = 6.0;
    pub const DEFAULT_NOISE: f64 = 1.0;
    pub const DEFAULT_SHIFT: f64 = 0.0;

    pub fn new(num_classes: usize, dim: usize, per_class: usize, seed: u64) -> Self {
        Self {
            num_classes,
            dim,
            per_class,
            separation: Self::DEFAULT_SEPARATION,
            noise: Self::DEFAULT_NOISE,
            shift: Self::DEFAULT_SHIFT,
            seed,
        }
    }

    /// Class means. With `num_classes <= dim` they are the vertices of a
    /// centred regular simplex; otherwise random directions on a sphere.
    pub fn class_means(&self) -> Vec<Vec<f64>> {
        let k = self.num_classes;
        let radius = self.separation / std::f64::consts::SQRT_2;
        if k <= self.dim {
            (0..k)
                .map(|c| {
                    (0..self.dim)
                        .map(|d| {
                            let centred = if d < k { -1.0 / k as f64 } else { 0.0 };
                            self.shift + radius * (if d == c { 1.0 } else { 0.0 } + centred)
                        })
                        .collect()
                })
                .collect()
        } else {
            let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ 0x5eed_cafe);
            (0..k)
                .map(|_| {
                    let v: Vec<f64> = (0..self.dim).map(|_| StandardNormal.sample(&mut rng)).collect();
                    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
                    v.into_iter().map(|x| self.shift + radius * x / norm).collect()
                })
                .collect()
        }
    }

    pub fn generate<S: Scalar>(&self) -> Result<Dataset<S>> {
        if self.num_classes < 2 {
            return Err(Error::invalid("synthetic data needs at least 2 classes"));
        }
        if self.dim < 2 {
            return Err(Error::invalid("synthetic data needs at least 2 dimensions"));
        }
        if !(self.separation > 0.0 && self.noise >= 0.0 && self.noise.is_finite() && self.shift.is_finite()) {
            return Err(Error::invalid("synthetic separation must be > 0 and noise >= 0"));
        }
        let means = self.class_means();
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let mut samples = Vec::with_capacity(self.num_classes * self.per_class);
        for (label, mean) in means.iter().enumerate() {
            for _ in 0..self.per_class {
                let features = mean
                    .iter()
                    .map(|&m| {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        S::of(m + self.noise * z)
                    })
                    .collect();
                samples.push(Sample { features, label });
            }
        }
        Ok(Dataset {
            dim: self.dim,
            samples,
        })
    }
}

/// Gaussian clusters with the default separation and noise.
pub fn make_synthetic<S: Scalar>(
    num_classes: usize,
    dim: usize,
    per_class: usize,
    seed: u64,
) -> Result<Dataset<S>> {
    SyntheticSpec::new(num_classes, dim, per_class, seed).generate()
}

/// Writes a dataset as `LRSYN1 | count u64 | dim u32 | classes u32 | f64 LE features | u8 labels`.
pub fn write_synthetic_cache<S: Scalar>(path: &Path, data: &Dataset<S>) -> Result<()> {
    if data.samples.iter().any(|s| s.label > u8::MAX as usize) {
        return Err(Error::invalid("labels above 255 do not fit the cache format"));
    }
    let mut buf = Vec::with_capacity(22 + data.len() * (data.dim * 8 + 1));
    buf.extend_from_slice(SYNTHETIC_CACHE_MAGIC);
    buf.extend_from_slice(&(data.len() as u64).to_le_bytes());
    buf.extend_from_slice(&(data.dim as u32).to_le_bytes());
    buf.extend_from_slice(&(data.num_classes() as u32).to_le_bytes());
    for s in &data.samples {
        for v in &s.features {
            buf.extend_from_slice(&v.as_f64().to_le_bytes());
        }
    }
    buf.extend(data.samples.iter().map(|s| s.label as u8));
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

pub fn read_synthetic_cache<S: Scalar>(path: &Path) -> Result<Dataset<S>> {
    let bytes = read_file(path)?;
    let fmt = |offset: usize, message: String| Error::Format {
        path: path.to_path_buf(),
        offset: offset as u64,
        message,
    };
    if bytes.len() < 22 {
        return Err(fmt(bytes.len(), "truncated header".into()));
    }
    if &bytes[..6] != SYNTHETIC_CACHE_MAGIC {
        return Err(fmt(0, "expected magic LRSYN1".into()));
    }
    let count = u64::from_le_bytes(bytes[6..14].try_into().unwrap()) as usize;
    let dim = u32::from_le_bytes(bytes[14..18].try_into().unwrap()) as usize;
    let classes = u32::from_le_bytes(bytes[18..22].try_into().unwrap()) as usize;
    let feat_end = 22 + count * dim * 8;
    if bytes.len() != feat_end + count {
        return Err(fmt(
            bytes.len(),
            format!("expected {} bytes for {count} samples of width {dim}", feat_end + count),
        ));
    }
    let mut samples = Vec::with_capacity(count);
    for i in 0..count {
        let start = 22 + i * dim * 8;
        let features = bytes[start..start + dim * 8]
            .chunks_exact(8)
            .map(|c| S::of(f64::from_le_bytes(c.try_into().unwrap())))
            .collect();
        let label = bytes[feat_end + i] as usize;
        if label >= classes {
            return Err(fmt(feat_end + i, format!("label {label} >= class count {classes}")));
        }
        samples.push(Sample { features, label });
    }
    Dataset::new(dim, samples)
}

/// Example tagged with the (1-based) task that delivered it.
#[derive(Debug, Clone, PartialEq)]
pub struct Example<S> {
    pub features: Vec<S>,
    pub label: usize,
    pub task_id: usize,
}

impl<S> Example<S> {
    pub fn labeled(&self) -> Labeled<'_, S> {
        Labeled::new(&self.features, self.label)
    }
}

pub fn as_batch<S>(examples: &[Example<S>]) -> Vec<Labeled<'_, S>> {
    examples.iter().map(Example::labeled).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub task_id: usize,
    pub class_set: Vec<usize>,
    /// Training examples per class, aligned with `class_set`.
    pub train_counts: Vec<usize>,
    pub test_counts: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct Task<S> {
    pub spec: TaskSpec,
    /// Shuffled once at construction; batches are consecutive chunks.
    pub train: Vec<Example<S>>,
    pub test: Vec<Example<S>>,
}

/// How a pool is cut into tasks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub num_tasks: usize,
    pub classes_per_task: usize,
    pub train_per_task: usize,
    /// Size ratio of a task's first class to each of its other classes; 0 = balanced.
    pub lambda: f64,
    pub batch_size: usize,
    /// Test examples per class; `None` keeps every available test example.
    pub test_per_class: Option<usize>,
    pub seed: u64,
}

/// Per-class training counts for one task.
///
/// Balanced: `total` split evenly, the remainder going to the first classes.
/// Imbalanced: every class after the first gets `n`, the first gets
/// `round(lambda * n)`, with `n` the largest value keeping the sum within `total`.
pub fn class_budget(total: usize, classes: usize, lambda: f64) -> Result<Vec<usize>> {
    if classes == 0 {
        return Err(Error::invalid("a task needs at least one class"));
    }
    if !(0.0..1.0).contains(&lambda) {
        return Err(Error::invalid(format!("lambda must lie in [0, 1), got {lambda}")));
    }
    if lambda == 0.0 || classes == 1 {
        let base = total / classes;
        let extra = total % classes;
        return Ok((0..classes).map(|c| base + usize::from(c < extra)).collect());
    }
    let first = |n: usize| (lambda * n as f64).round() as usize;
    let mut n = total / (classes - 1);
    while n > 0 && (classes - 1) * n + first(n) > total {
        n -= 1;
    }
    let mut counts = vec![n; classes];
    counts[0] = first(n);
    Ok(counts)
}

fn group_by_class<S: Scalar>(data: &Dataset<S>) -> BTreeMap<usize, Vec<usize>> {
    let mut by_class: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, s) in data.samples.iter().enumerate() {
        by_class.entry(s.label).or_default().push(i);
    }
    by_class
}

/// Ordered tasks with disjoint class sets.
#[derive(Debug, Clone)]
pub struct TaskStream<S> {
    tasks: Vec<Task<S>>,
    batch_size: usize,
    seed: u64,
}

impl<S: Scalar> TaskStream<S> {
    pub fn tasks(&self) -> &[Task<S>] {
        &self.tasks
    }

    pub fn num_tasks(&self) -> usize {
        self.tasks.len()
    }

    pub fn batch_size(&self) -> usize {
        self.batch_size
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Training batches of task `t` (1-based), in delivery order.
    pub fn batches(&self, t: usize) -> std::slice::Chunks<'_, Example<S>> {
        self.tasks[t - 1].train.chunks(self.batch_size)
    }

    /// All classes across tasks, ascending.
    pub fn classes(&self) -> Vec<usize> {
        self.tasks
            .iter()
            .flat_map(|t| t.spec.class_set.iter().copied())
            .collect()
    }
}

/// Cuts `train` and `test` pools into a class-incremental stream.
pub fn split_stream<S: Scalar>(
    train: &Dataset<S>,
    test: &Dataset<S>,
    spec: &SplitSpec,
) -> Result<TaskStream<S>> {
    if spec.num_tasks == 0 || spec.classes_per_task == 0 || spec.batch_size == 0 {
        return Err(Error::invalid(
            "num_tasks, classes_per_task and batch_size must be positive",
        ));
    }
    if train.dim != test.dim {
        return Err(Error::invalid("train and test pools differ in feature width"));
    }
    let train_by_class = group_by_class(train);
    let test_by_class = group_by_class(test);
    let classes: Vec<usize> = train_by_class.keys().copied().collect();
    let needed_classes = spec.num_tasks * spec.classes_per_task;
    if needed_classes > classes.len() {
        return Err(Error::invalid(format!(
            "{} tasks x {} classes needs {needed_classes} classes, pool has {}",
            spec.num_tasks,
            spec.classes_per_task,
            classes.len()
        )));
    }
    let budget = class_budget(spec.train_per_task, spec.classes_per_task, spec.lambda)?;

    let mut deficits = Vec::new();
    for (k, &c) in classes[..needed_classes].iter().enumerate() {
        let need = budget[k % spec.classes_per_task];
        let have = train_by_class.get(&c).map_or(0, Vec::len);
        if have < need {
            deficits.push(format!("class {c} train: need {need}, have {have}"));
        }
        let have_test = test_by_class.get(&c).map_or(0, Vec::len);
        let need_test = spec.test_per_class.unwrap_or(1);
        if have_test < need_test {
            deficits.push(format!("class {c} test: need {need_test}, have {have_test}"));
        }
    }
    if !deficits.is_empty() {
        return Err(Error::invalid(format!(
            "insufficient examples: {}",
            deficits.join("; ")
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut tasks = Vec::with_capacity(spec.num_tasks);
    for t in 0..spec.num_tasks {
        let task_id = t + 1;
        let class_set = classes[t * spec.classes_per_task..(t + 1) * spec.classes_per_task].to_vec();
        let mut train_ex = Vec::with_capacity(spec.train_per_task);
        let mut test_ex = Vec::new();
        let mut test_counts = Vec::with_capacity(class_set.len());
        for (k, &c) in class_set.iter().enumerate() {
            let mut pool = train_by_class[&c].clone();
            pool.shuffle(&mut rng);
            train_ex.extend(pool[..budget[k]].iter().map(|&i| Example {
                features: train.samples[i].features.clone(),
                label: c,
                task_id,
            }));
            let test_pool = &test_by_class[&c];
            let n_test = spec.test_per_class.unwrap_or(test_pool.len());
            test_counts.push(n_test);
            test_ex.extend(test_pool[..n_test].iter().map(|&i| Example {
                features: test.samples[i].features.clone(),
                label: c,
                task_id,
            }));
        }
        train_ex.shuffle(&mut rng);
        tasks.push(Task {
            spec: TaskSpec {
                task_id,
                class_set,
                train_counts: budget.clone(),
                test_counts,
            },
            train: train_ex,
            test: test_ex,
        });
    }
    Ok(TaskStream {
        tasks,
        batch_size: spec.batch_size,
        seed: spec.seed,
    })
}
