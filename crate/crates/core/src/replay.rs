//! Replay selection and the per-batch training step.
//!
//! Contextually-cued recall builds the replay batch from two parts: the
//! top-`p` memories whose loss rises most under a one-step look-ahead on the
//! current batch, and `q` further memories drawn per task in proportion to how
//! often each task appears among those top-`p`.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::memory::{MemoryBuffer, UpdatePolicy};
use crate::nn::{self, Labeled, ParamSet};
use crate::scalar::Scalar;
use crate::stream::Example;

/// Per-slot interference scores, aligned with the buffer's slots.
pub type ScoreVector<S> = Vec<S>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrategyKind {
    /// Plain SGD on the incoming batch, no memory.
    Online,
    /// Uniform replay, reservoir memory.
    Er,
    /// Top interfered replay, reservoir memory.
    Mir,
    /// Contextually-cued replay, reservoir memory.
    Ccmr,
    /// Contextually-cued replay, entropy-balanced memory.
    Adaer,
    /// Top interfered replay, entropy-balanced memory.
    Ebrs,
}

impl StrategyKind {
    pub const ALL: [StrategyKind; 6] = [
        StrategyKind::Online,
        StrategyKind::Er,
        StrategyKind::Mir,
        StrategyKind::Ccmr,
        StrategyKind::Adaer,
        StrategyKind::Ebrs,
    ];

    pub fn name(self) -> &'static str {
        match self {
            StrategyKind::Online => "online",
            StrategyKind::Er => "er",
            StrategyKind::Mir => "mir",
            StrategyKind::Ccmr => "ccmr",
            StrategyKind::Adaer => "adaer",
            StrategyKind::Ebrs => "ebrs",
        }
    }

    pub fn memory_policy(self) -> Option<UpdatePolicy> {
        match self {
            StrategyKind::Online => None,
            StrategyKind::Er | StrategyKind::Mir | StrategyKind::Ccmr => Some(UpdatePolicy::Reservoir),
            StrategyKind::Adaer | StrategyKind::Ebrs => Some(UpdatePolicy::EntropyBalanced),
        }
    }

    /// Whether replay selection needs interference scores.
    pub fn uses_scores(self) -> bool {
        matches!(
            self,
            StrategyKind::Mir | StrategyKind::Ccmr | StrategyKind::Adaer | StrategyKind::Ebrs
        )
    }
}

impl fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for StrategyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        StrategyKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown strategy {s:?}")))
    }
}

/// How replayed and incoming examples share the single SGD step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossWeighting {
    /// One mean over the concatenation of replay and incoming examples.
    #[default]
    Pooled,
    /// Mean over replay plus mean over incoming batch.
    Separate,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Strategy {
    pub kind: StrategyKind,
    pub replay_size: usize,
    /// Fraction of the replay batch taken from the top interfered memories.
    pub tau: f64,
    /// Memory update rule; defaults to the one the strategy kind pairs with.
    pub memory_policy: Option<UpdatePolicy>,
    pub weighting: LossWeighting,
}

impl Strategy {
    pub fn new(kind: StrategyKind, replay_size: usize, tau: f64) -> Result<Self> {
        if kind != StrategyKind::Online && replay_size == 0 {
            return Err(Error::invalid("replay_size must be >= 1"));
        }
        if !(tau > 0.0 && tau <= 1.0) {
            return Err(Error::invalid(format!("tau must lie in (0, 1], got {tau}")));
        }
        Ok(Self {
            kind,
            replay_size,
            tau,
            memory_policy: kind.memory_policy(),
            weighting: LossWeighting::Pooled,
        })
    }

    /// Overrides the memory update rule (ablations only).
    pub fn with_memory_policy(mut self, policy: UpdatePolicy) -> Self {
        self.memory_policy = Some(policy);
        self
    }

    pub fn with_weighting(mut self, weighting: LossWeighting) -> Self {
        self.weighting = weighting;
        self
    }

    /// The τ actually used when building plans: MIR-style strategies pin it to 1.
    pub fn effective_tau(&self) -> f64 {
        match self.kind {
            StrategyKind::Mir | StrategyKind::Ebrs => 1.0,
            _ => self.tau,
        }
    }
}

/// Indices into the memory buffer selected for one replay.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ReplayPlan {
    /// Most interfered slots, by descending score.
    pub interfered: Vec<usize>,
    /// Slots drawn per task from the rest of the buffer.
    pub task_associated: Vec<usize>,
    /// Slots drawn into `task_associated` per task id.
    pub quotas: BTreeMap<usize, usize>,
    pub tau: f64,
}

impl ReplayPlan {
    pub fn len(&self) -> usize {
        self.interfered.len() + self.task_associated.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Interfered indices followed by task-associated ones.
    pub fn indices(&self) -> Vec<usize> {
        self.interfered
            .iter()
            .chain(self.task_associated.iter())
            .copied()
            .collect()
    }
}

/// One SGD step on the current batch alone; `params` is untouched.
pub fn virtual_step<S: Scalar>(
    params: &ParamSet<S>,
    batch: &[Labeled<'_, S>],
    alpha: S,
) -> Result<ParamSet<S>> {
    let grads = nn::backward(params, batch)?;
    nn::sgd_step(params, &grads, alpha)
}

/// Loss under `theta_virtual` minus loss under `theta`, per slot. The scores
/// are also written back into the buffer for the entropy-balanced update.
pub fn compute_scores<S: Scalar>(
    theta: &ParamSet<S>,
    theta_virtual: &ParamSet<S>,
    buffer: &mut MemoryBuffer<S>,
) -> Result<ScoreVector<S>> {
    if buffer.is_empty() {
        return Err(Error::EmptyBuffer);
    }
    let batch: Vec<_> = buffer.slots().iter().map(|s| s.labeled()).collect();
    let before = nn::forward_loss(theta, &batch)?;
    let after = nn::forward_loss(theta_virtual, &batch)?;
    let scores: ScoreVector<S> = after
        .per_example_loss
        .iter()
        .zip(&before.per_example_loss)
        .map(|(&a, &b)| a - b)
        .collect();
    buffer.set_scores(&scores)?;
    Ok(scores)
}

/// Indices of the `p` largest scores, descending; equal scores keep index order.
pub fn select_interfered<S: Scalar>(scores: &[S], p: usize) -> Result<Vec<usize>> {
    if p > scores.len() {
        return Err(Error::invalid(format!(
            "cannot select {p} of {} scores",
            scores.len()
        )));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| {
        scores[b]
            .partial_cmp(&scores[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    order.truncate(p);
    Ok(order)
}

/// Splits `amount` over `weights` by largest remainder; ties go to the
/// earlier entry. Exact integer arithmetic.
fn largest_remainder(amount: usize, weights: &[(usize, usize)]) -> Vec<usize> {
    let total: usize = weights.iter().map(|&(_, w)| w).sum();
    if total == 0 {
        return vec![0; weights.len()];
    }
    let mut shares: Vec<usize> = weights.iter().map(|&(_, w)| amount * w / total).collect();
    let mut left = amount - shares.iter().sum::<usize>();
    let mut by_remainder: Vec<usize> = (0..weights.len()).collect();
    by_remainder.sort_by(|&a, &b| {
        let ra = amount * weights[a].1 % total;
        let rb = amount * weights[b].1 % total;
        rb.cmp(&ra).then(weights[a].0.cmp(&weights[b].0))
    });
    for i in by_remainder {
        if left == 0 {
            break;
        }
        shares[i] += 1;
        left -= 1;
    }
    shares
}

/// Task quotas `q_j ≈ q · p_j / p`, where `p_j` counts task-`j` slots in `r_e`.
///
/// Rounded by largest remainder (ties to the lower task id) and capped at the
/// task's slots outside `r_e`; any surplus is re-spread over uncapped tasks by
/// the same rule. Only tasks present in `r_e` receive quota.
pub fn allocate_task_quota<S: Scalar>(
    buffer: &MemoryBuffer<S>,
    r_e: &[usize],
    q: usize,
) -> BTreeMap<usize, usize> {
    let mut weight: BTreeMap<usize, usize> = BTreeMap::new();
    for &i in r_e {
        *weight.entry(buffer.slot(i).task_id).or_insert(0) += 1;
    }
    let in_re: BTreeSet<usize> = r_e.iter().copied().collect();
    let mut available: BTreeMap<usize, usize> = weight.keys().map(|&t| (t, 0)).collect();
    for (i, s) in buffer.slots().iter().enumerate() {
        if !in_re.contains(&i) {
            if let Some(a) = available.get_mut(&s.task_id) {
                *a += 1;
            }
        }
    }

    let mut quota: BTreeMap<usize, usize> = weight.keys().map(|&t| (t, 0)).collect();
    let mut remaining = q.min(available.values().sum());
    let mut active: Vec<usize> = weight.keys().copied().filter(|t| available[t] > 0).collect();
    while remaining > 0 && !active.is_empty() {
        let weights: Vec<(usize, usize)> = active.iter().map(|&t| (t, weight[&t])).collect();
        let shares = largest_remainder(remaining, &weights);
        for (&t, share) in active.iter().zip(shares) {
            let room = available[&t] - quota[&t];
            let granted = share.min(room);
            *quota.get_mut(&t).unwrap() += granted;
            remaining -= granted;
        }
        active.retain(|t| quota[t] < available[t]);
    }
    quota
}

/// `round(tau * replay_size)` with halves rounded up.
pub fn interfered_count(replay_size: usize, tau: f64) -> usize {
    ((tau * replay_size as f64) + 0.5).floor() as usize
}

/// Composes the replay batch from interfered and task-associated memories.
///
/// With fewer slots than `replay_size` every slot is used once. When the
/// tasks present among the interfered slots cannot fill their quota, the
/// shortfall is drawn uniformly from the remaining slots.
pub fn build_plan<S: Scalar, R: Rng + ?Sized>(
    buffer: &MemoryBuffer<S>,
    scores: &[S],
    replay_size: usize,
    tau: f64,
    rng: &mut R,
) -> Result<ReplayPlan> {
    if replay_size == 0 {
        return Err(Error::invalid("replay_size must be >= 1"));
    }
    if !(tau > 0.0 && tau <= 1.0) {
        return Err(Error::invalid(format!("tau must lie in (0, 1], got {tau}")));
    }
    if buffer.is_empty() {
        return Ok(ReplayPlan {
            tau,
            ..ReplayPlan::default()
        });
    }
    if scores.len() != buffer.len() {
        return Err(Error::invalid(format!(
            "{} scores for {} slots",
            scores.len(),
            buffer.len()
        )));
    }
    let n = buffer.len();
    let target = replay_size.min(n);
    let p = interfered_count(replay_size, tau).min(target);
    let q = target - p;

    let interfered = select_interfered(scores, p)?;
    let mut quotas = allocate_task_quota(buffer, &interfered, q);
    let mut taken: BTreeSet<usize> = interfered.iter().copied().collect();
    let mut task_associated = Vec::with_capacity(q);
    for (&task, &qj) in &quotas {
        if qj == 0 {
            continue;
        }
        let eligible: Vec<usize> = (0..n)
            .filter(|i| buffer.slot(*i).task_id == task && !taken.contains(i))
            .collect();
        for k in index::sample(rng, eligible.len(), qj) {
            task_associated.push(eligible[k]);
        }
    }
    taken.extend(task_associated.iter().copied());

    let shortfall = q - task_associated.len();
    if shortfall > 0 {
        let rest: Vec<usize> = (0..n).filter(|i| !taken.contains(i)).collect();
        for k in index::sample(rng, rest.len(), shortfall) {
            let slot = rest[k];
            task_associated.push(slot);
            *quotas.entry(buffer.slot(slot).task_id).or_insert(0) += 1;
        }
    }
    Ok(ReplayPlan {
        interfered,
        task_associated,
        quotas,
        tau,
    })
}

/// Memory indices to replay alongside `batch`; empty when nothing is replayed.
pub fn select_replay<S: Scalar, R: Rng + ?Sized>(
    theta: &ParamSet<S>,
    batch: &[Labeled<'_, S>],
    buffer: &mut MemoryBuffer<S>,
    strategy: &Strategy,
    alpha: S,
    rng: &mut R,
) -> Result<Vec<usize>> {
    if buffer.is_empty() {
        return Ok(Vec::new());
    }
    match strategy.kind {
        StrategyKind::Online => Ok(Vec::new()),
        StrategyKind::Er => buffer.sample_uniform(strategy.replay_size.min(buffer.len()), rng),
        _ => {
            let theta_virtual = virtual_step(theta, batch, alpha)?;
            let scores = compute_scores(theta, &theta_virtual, buffer)?;
            let plan = build_plan(buffer, &scores, strategy.replay_size, strategy.effective_tau(), rng)?;
            Ok(plan.indices())
        }
    }
}

/// Parameter update for one incoming batch: replay selection followed by a
/// single SGD step on replayed plus incoming examples. The buffer's scores
/// may be refreshed, its contents are not changed.
pub fn replay_step<S: Scalar, R: Rng + ?Sized>(
    theta: &ParamSet<S>,
    batch: &[Example<S>],
    buffer: &mut MemoryBuffer<S>,
    strategy: &Strategy,
    alpha: S,
    rng: &mut R,
) -> Result<ParamSet<S>> {
    let current: Vec<Labeled<'_, S>> = batch.iter().map(Example::labeled).collect();
    let replay = select_replay(theta, &current, buffer, strategy, alpha, rng)?;
    let grads = if replay.is_empty() {
        nn::backward(theta, &current)?
    } else {
        let replayed: Vec<Labeled<'_, S>> = replay.iter().map(|&i| buffer.slot(i).labeled()).collect();
        match strategy.weighting {
            LossWeighting::Pooled => {
                let mut all = replayed;
                all.extend_from_slice(&current);
                nn::backward(theta, &all)?
            }
            LossWeighting::Separate => {
                nn::backward(theta, &replayed)?.add(&nn::backward(theta, &current)?)?
            }
        }
    };
    nn::sgd_step(theta, &grads, alpha)
}

/// Offers every example of `batch` to the buffer (no-op for online).
pub fn remember<S: Scalar>(buffer: &mut MemoryBuffer<S>, batch: &[Example<S>], strategy: &Strategy) {
    if strategy.kind == StrategyKind::Online {
        return;
    }
    for ex in batch {
        buffer.update(ex);
    }
}

/// Replay step followed by the memory update for the same batch.
pub fn train_step<S: Scalar, R: Rng + ?Sized>(
    theta: &ParamSet<S>,
    batch: &[Example<S>],
    buffer: &mut MemoryBuffer<S>,
    strategy: &Strategy,
    alpha: S,
    rng: &mut R,
) -> Result<ParamSet<S>> {
    let next = replay_step(theta, batch, buffer, strategy, alpha, rng)?;
    remember(buffer, batch, strategy);
    Ok(next)
}
