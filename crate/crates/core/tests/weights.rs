mod common;

use common::*;
use proptest::prelude::*;
use refdec::ensemble::{ContextEnsemble, ReflectiveSampler, Side};
use refdec::lm::{DelegateLm, Direction};
use refdec::vocab::TokenSeq;
use refdec::weights::{learn_weights, prune_weights, WeightLearnConfig, WeightObjective};

struct Problem {
    lm: DelegateLm,
    dir: Direction,
    contexts: Vec<TokenSeq>,
    s_src: TokenSeq,
}

fn problem(seed: u64, k: usize) -> Problem {
    let dir = if seed.is_multiple_of(2) { Direction::Backward } else { Direction::Forward };
    let words = 4;
    let lm = hashed_lm(dir, vocab(words), seed, 3.0);
    let pick = |i: u64| 3 + ((seed.wrapping_mul(31).wrapping_add(i * 17)) % words as u64) as usize;
    let contexts = (0..k as u64).map(|c| (0..=(c % 3)).map(|j| pick(c * 5 + j + 1)).collect()).collect();
    let s_src = (0..5).map(|j| pick(100 + j)).collect();
    Problem { lm, dir, contexts, s_src }
}

fn objective(p: &Problem) -> WeightObjective {
    let e = ContextEnsemble::uniform(p.contexts.clone(), Side::for_decoder(p.dir)).unwrap();
    let sampler = ReflectiveSampler::new(e, &p.lm).unwrap();
    WeightObjective::new(&sampler, &p.s_src).unwrap()
}

#[test]
fn iterates_stay_on_the_simplex_and_improve() {
    for seed in 0..20 {
        let p = problem(seed, 4);
        let learned = learn_weights(p.contexts.clone(), Side::for_decoder(p.dir), &p.s_src, &p.lm, &WeightLearnConfig::default()).unwrap();
        let mut last = f64::NEG_INFINITY;
        for it in &learned.trace.iterates {
            assert!(it.weights.iter().all(|&w| w >= 0.0));
            assert!((it.weights.iter().sum::<f64>() - 1.0).abs() <= 1e-8);
            assert!(it.best_objective.is_finite());
            assert!(it.best_objective >= last);
            last = it.best_objective;
        }
        assert_eq!(learned.objective, last);
        let w = learned.ensemble.weights();
        assert!((objective(&p).value(w) - learned.objective).abs() < 1e-9);
    }
}

#[test]
fn two_contexts_match_grid_search() {
    for seed in 0..20 {
        let p = problem(seed + 1000, 2);
        let obj = objective(&p);
        let grid = (0..=100)
            .map(|i| {
                let a = i as f64 / 100.0;
                obj.value(&[a, 1.0 - a])
            })
            .fold(f64::NEG_INFINITY, f64::max);
        let learned = learn_weights(p.contexts.clone(), Side::for_decoder(p.dir), &p.s_src, &p.lm, &WeightLearnConfig::default()).unwrap();
        assert!(learned.objective >= grid - 1e-3, "seed {seed}: {} < {grid}", learned.objective);
    }
}

#[test]
fn gradient_matches_central_differences() {
    let eps = 1e-5;
    for seed in 0..20 {
        let p = problem(seed + 2000, 3);
        let obj = objective(&p);
        let raw: Vec<f64> = (0..3).map(|i| 0.05 + ((seed * 7 + i * 3) % 10) as f64).collect();
        let total: f64 = raw.iter().sum();
        let w: Vec<f64> = raw.iter().map(|x| x / total).collect();
        let (_, g) = obj.value_and_gradient(&w);
        for i in 0..3 {
            let mut up = w.clone();
            let mut down = w.clone();
            up[i] += eps;
            down[i] -= eps;
            let fd = (obj.value(&up) - obj.value(&down)) / (2.0 * eps);
            let rel = (g[i] - fd).abs() / g[i].abs().max(fd.abs()).max(1e-3);
            assert!(rel < 1e-4, "seed {seed} component {i}: {} vs {fd}", g[i]);
        }
    }
}

proptest! {
    #[test]
    fn pruning_keeps_heaviest_in_order(raw in prop::collection::vec(0.0f64..1.0, 1..10), k in 1usize..12) {
        let total: f64 = raw.iter().sum::<f64>() + 1e-3;
        let mut w: Vec<f64> = raw.iter().map(|x| x / total).collect();
        let rest = 1.0 - w.iter().sum::<f64>();
        w[0] += rest;
        let contexts: Vec<TokenSeq> = (0..w.len()).map(|i| vec![i]).collect();
        let e = ContextEnsemble::new(contexts, w.clone(), Side::Left).unwrap();
        let pruned = prune_weights(&e, k).unwrap();
        prop_assert_eq!(pruned.len(), k.min(w.len()));
        let kept: Vec<usize> = pruned.contexts().iter().map(|c| c[0]).collect();
        prop_assert!(kept.windows(2).all(|p| p[0] < p[1]));
        let min_kept = kept.iter().map(|&i| w[i]).fold(f64::INFINITY, f64::min);
        for i in 0..w.len() {
            if !kept.contains(&i) {
                prop_assert!(w[i] <= min_kept);
            }
        }
        prop_assert!((pruned.weights().iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}
