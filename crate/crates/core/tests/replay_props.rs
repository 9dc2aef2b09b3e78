use std::collections::BTreeSet;

use adaer::memory::{MemoryBuffer, UpdatePolicy};
use adaer::nn::{self, Labeled};
use adaer::replay::{self, LossWeighting, Strategy, StrategyKind};
use adaer::stream::{self, Example, SplitSpec};
use adaer::Error;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn examples(n: usize, dim: usize, classes: usize, seed: u64) -> Vec<Example<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let label = rng.gen_range(0..classes);
            Example {
                features: (0..dim).map(|d| rng.gen_range(-1.0..1.0) + if d == label { 1.5 } else { 0.0 }).collect(),
                label,
                task_id: 1 + label / 2,
            }
        })
        .collect()
}

fn filled(ex: &[Example<f64>], policy: UpdatePolicy) -> MemoryBuffer<f64> {
    let mut b = MemoryBuffer::new(ex.len(), policy, 0).unwrap();
    for e in ex {
        b.update(e);
    }
    b
}

#[test]
fn virtual_step_is_one_sgd_step_on_the_batch() {
    let theta = nn::init_network::<f64>(6, 10, 6, 1).unwrap();
    let batch = examples(8, 6, 6, 2);
    let lb = stream::as_batch(&batch);
    let copy = theta.clone();
    let virt = replay::virtual_step(&theta, &lb, 0.1).unwrap();
    assert_eq!(theta, copy);
    let expect = nn::sgd_step(&theta, &nn::backward(&theta, &lb).unwrap(), 0.1).unwrap();
    assert_eq!(virt, expect);
    let before = nn::forward_loss(&theta, &lb).unwrap().mean_loss;
    let after = nn::forward_loss(&virt, &lb).unwrap().mean_loss;
    assert!(after < before, "{after} !< {before}");
    assert!(replay::virtual_step(&theta, &[], 0.1).is_err());
}

#[test]
fn scores_match_slot_by_slot_recomputation() {
    let theta = nn::init_network::<f64>(6, 10, 6, 3).unwrap();
    let batch = examples(10, 6, 6, 4);
    let virt = replay::virtual_step(&theta, &stream::as_batch(&batch), 0.2).unwrap();
    let mut buf = filled(&examples(20, 6, 6, 5), UpdatePolicy::EntropyBalanced);
    let scores = replay::compute_scores(&theta, &virt, &mut buf).unwrap();
    assert_eq!(scores.len(), 20);
    for (i, slot) in buf.slots().iter().enumerate() {
        let one = [Labeled::new(&slot.features[..], slot.label)];
        let a = nn::forward_loss(&virt, &one).unwrap().mean_loss;
        let b = nn::forward_loss(&theta, &one).unwrap().mean_loss;
        assert!((scores[i] - (a - b)).abs() < 1e-12);
        assert_eq!(slot.score, scores[i]);
    }
    let mut empty = MemoryBuffer::<f64>::new(3, UpdatePolicy::Reservoir, 0).unwrap();
    assert!(matches!(
        replay::compute_scores(&theta, &virt, &mut empty),
        Err(Error::EmptyBuffer)
    ));
}

#[test]
fn identical_parameters_give_zero_scores() {
    let theta = nn::init_network::<f64>(4, 5, 4, 9).unwrap();
    let mut buf = filled(&examples(7, 4, 4, 10), UpdatePolicy::Reservoir);
    let scores = replay::compute_scores(&theta, &theta, &mut buf).unwrap();
    assert!(scores.iter().all(|&s| s == 0.0));
}

#[test]
fn quota_examples() {
    let mut b = MemoryBuffer::<f64>::new(30, UpdatePolicy::Reservoir, 0).unwrap();
    for i in 0..30 {
        b.update_parts(&[i as f64], 0, if i < 15 { 1 } else { 2 });
    }
    // R_e holds 7 task-1 and 3 task-2 slots; q = 5 splits 3.5/1.5.
    let r_e: Vec<usize> = (0..7).chain(15..18).collect();
    let q = replay::allocate_task_quota(&b, &r_e, 5);
    assert_eq!(q.into_iter().collect::<Vec<_>>(), vec![(1, 4), (2, 1)]);
    let r_e: Vec<usize> = (0..6).chain(15..19).collect();
    let q = replay::allocate_task_quota(&b, &r_e, 10);
    assert_eq!(q.into_iter().collect::<Vec<_>>(), vec![(1, 6), (2, 4)]);
    // Task 1 has only 3 slots left outside R_e; the surplus moves to task 2.
    let r_e: Vec<usize> = (0..12).chain(15..18).collect();
    let q = replay::allocate_task_quota(&b, &r_e, 8);
    assert_eq!(q.into_iter().collect::<Vec<_>>(), vec![(1, 3), (2, 5)]);
    assert_eq!(replay::interfered_count(20, 0.5), 10);
    assert_eq!(replay::interfered_count(5, 0.5), 3);
    assert_eq!(replay::interfered_count(20, 1.0), 20);
}

#[test]
fn online_step_is_plain_sgd() {
    let theta = nn::init_network::<f64>(5, 8, 6, 11).unwrap();
    let batch = examples(10, 5, 6, 12);
    let online = Strategy::new(StrategyKind::Online, 20, 0.5).unwrap();
    let mut buf = filled(&examples(9, 5, 6, 13), UpdatePolicy::Reservoir);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let next = replay::train_step(&theta, &batch, &mut buf, &online, 0.05, &mut rng).unwrap();
    let lb = stream::as_batch(&batch);
    assert_eq!(next, nn::sgd_step(&theta, &nn::backward(&theta, &lb).unwrap(), 0.05).unwrap());
    assert_eq!(buf.seen(), 9);

    let ccmr = Strategy::new(StrategyKind::Ccmr, 20, 0.5).unwrap();
    let mut empty = MemoryBuffer::new(10, UpdatePolicy::Reservoir, 0).unwrap();
    let first = replay::train_step(&theta, &batch, &mut empty, &ccmr, 0.05, &mut rng).unwrap();
    assert_eq!(first, next);
    assert_eq!(empty.len(), 10);
}

#[test]
fn pooled_and_separate_weightings() {
    let theta = nn::init_network::<f64>(5, 8, 6, 14).unwrap();
    let batch = examples(6, 5, 6, 15);
    let mem = examples(4, 5, 6, 16);
    let er = Strategy::new(StrategyKind::Er, 20, 0.5).unwrap();
    let lb = stream::as_batch(&batch);
    let lm = stream::as_batch(&mem);

    let mut buf = filled(&mem, UpdatePolicy::Reservoir);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let pooled = replay::replay_step(&theta, &batch, &mut buf, &er, 0.1, &mut rng).unwrap();
    // Every slot is replayed once since replay_size exceeds the buffer; the
    // pooled mean does not depend on their order.
    let all: Vec<_> = lm.iter().chain(lb.iter()).copied().collect();
    let g = nn::backward(&theta, &all).unwrap();
    let expect = nn::sgd_step(&theta, &g, 0.1).unwrap();
    for i in 0..theta.num_params() {
        assert!((pooled.get(i) - expect.get(i)).abs() < 1e-14);
    }

    let sep = er.with_weighting(LossWeighting::Separate);
    let separate = replay::replay_step(&theta, &batch, &mut buf, &sep, 0.1, &mut rng).unwrap();
    let g = nn::backward(&theta, &lm).unwrap().add(&nn::backward(&theta, &lb).unwrap()).unwrap();
    let expect = nn::sgd_step(&theta, &g, 0.1).unwrap();
    for i in 0..theta.num_params() {
        assert!((separate.get(i) - expect.get(i)).abs() < 1e-14);
    }
}

fn synthetic_stream(seed: u64) -> adaer::Stream {
    let pool = stream::make_synthetic::<f64>(6, 8, 60, seed).unwrap();
    let (train, test) = pool.split_holdout(10).unwrap();
    stream::split_stream(
        &train,
        &test,
        &SplitSpec {
            num_tasks: 3,
            classes_per_task: 2,
            train_per_task: 100,
            lambda: 0.0,
            batch_size: 10,
            test_per_class: Some(10),
            seed,
        },
    )
    .unwrap()
}

#[test]
fn adaer_with_full_tau_and_reservoir_tracks_mir() {
    let s = synthetic_stream(21);
    let mir = Strategy::new(StrategyKind::Mir, 10, 0.5).unwrap();
    let ada = Strategy::new(StrategyKind::Adaer, 10, 1.0)
        .unwrap()
        .with_memory_policy(UpdatePolicy::Reservoir);
    let run = |strategy: &Strategy| {
        let mut theta = nn::init_network::<f64>(8, 16, 6, 22).unwrap();
        let mut buf = MemoryBuffer::new(25, strategy.memory_policy.unwrap(), 23).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(24);
        let mut trajectory = Vec::new();
        for t in 1..=3 {
            for batch in s.batches(t) {
                theta = replay::train_step(&theta, batch, &mut buf, strategy, 0.05, &mut rng).unwrap();
                trajectory.push(theta.clone());
            }
        }
        trajectory
    };
    let a = run(&mir);
    let b = run(&ada);
    assert!(a.len() >= 30);
    assert_eq!(a, b);
}

#[test]
fn strategy_wiring() {
    use StrategyKind::*;
    assert_eq!(Ccmr.memory_policy(), Some(UpdatePolicy::Reservoir));
    assert_eq!(Adaer.memory_policy(), Some(UpdatePolicy::EntropyBalanced));
    assert_eq!(Online.memory_policy(), None);
    for k in StrategyKind::ALL {
        assert_eq!(k.name().parse::<StrategyKind>().unwrap(), k);
    }
    assert!(matches!("gem".parse::<StrategyKind>(), Err(Error::Config(_))));
    assert!(Strategy::new(Adaer, 20, 0.0).is_err());
    assert_eq!(Strategy::new(Mir, 20, 0.3).unwrap().effective_tau(), 1.0);
}

fn scored_buffer(n: usize, tasks: usize, seed: u64) -> (MemoryBuffer<f64>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut b = MemoryBuffer::new(n, UpdatePolicy::Reservoir, seed).unwrap();
    for i in 0..n {
        let task = rng.gen_range(1..=tasks);
        b.update_parts(&[i as f64], 2 * (task - 1), task);
    }
    let scores: Vec<f64> = (0..n).map(|_| rng.gen_range(-4i32..=4) as f64 * 0.25).collect();
    b.set_scores(&scores).unwrap();
    (b, scores)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn plans_are_disjoint_and_sized(
        n in 1usize..=40,
        tasks in 1usize..=5,
        replay_size in 1usize..=30,
        tau in prop_oneof![Just(1.0), Just(0.5), 0.01f64..=1.0],
        seed in any::<u64>(),
    ) {
        let (buf, scores) = scored_buffer(n, tasks, seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 1);
        let plan = replay::build_plan(&buf, &scores, replay_size, tau, &mut rng).unwrap();
        let target = replay_size.min(n);
        let p = replay::interfered_count(replay_size, tau).min(target);
        prop_assert_eq!(plan.interfered.len(), p);
        prop_assert_eq!(plan.task_associated.len(), target - p);
        prop_assert_eq!(plan.quotas.values().sum::<usize>(), target - p);

        let re: BTreeSet<usize> = plan.interfered.iter().copied().collect();
        let rt: BTreeSet<usize> = plan.task_associated.iter().copied().collect();
        prop_assert_eq!(re.len(), p);
        prop_assert_eq!(rt.len(), target - p);
        prop_assert!(re.is_disjoint(&rt));
        prop_assert!(plan.indices().iter().all(|&i| i < n));

        // R_e is a top-p set: nothing outside beats anything inside.
        let floor = plan.interfered.iter().map(|&i| scores[i]).fold(f64::INFINITY, f64::min);
        for i in (0..n).filter(|i| !re.contains(i)) {
            prop_assert!(scores[i] <= floor);
        }
        for w in plan.interfered.windows(2) {
            prop_assert!(scores[w[0]] > scores[w[1]] || (scores[w[0]] == scores[w[1]] && w[0] < w[1]));
        }
        for (&task, &qj) in &plan.quotas {
            let drawn = plan.task_associated.iter().filter(|&&i| buf.slot(i).task_id == task).count();
            prop_assert_eq!(drawn, qj);
        }
    }

    #[test]
    fn quotas_conserve_and_respect_caps(
        n in 1usize..=40,
        tasks in 1usize..=5,
        p in 0usize..=40,
        q in 0usize..=40,
        seed in any::<u64>(),
    ) {
        let (buf, scores) = scored_buffer(n, tasks, seed);
        let p = p.min(n);
        let r_e = replay::select_interfered(&scores, p).unwrap();
        let quota = replay::allocate_task_quota(&buf, &r_e, q);
        let in_re: BTreeSet<usize> = r_e.iter().copied().collect();
        let present: BTreeSet<usize> = r_e.iter().map(|&i| buf.slot(i).task_id).collect();
        let mut room_total = 0;
        for (&task, &qj) in &quota {
            prop_assert!(present.contains(&task));
            let room = (0..n).filter(|i| !in_re.contains(i) && buf.slot(*i).task_id == task).count();
            prop_assert!(qj <= room);
            room_total += room;
        }
        prop_assert_eq!(quota.values().sum::<usize>(), q.min(room_total));
    }
}
