mod common;

use std::collections::HashMap;

use common::*;
use proptest::prelude::*;
use refdec::ensemble::{ContextEnsemble, ReflectiveSampler, Side};
use refdec::lm::{Direction, LanguageModel};
use refdec::sampling::NucleusParams;
use refdec::vocab::{TokenId, TokenSeq};

fn direction_strategy() -> impl Strategy<Value = Direction> {
    prop_oneof![Just(Direction::Forward), Just(Direction::Backward)]
}

fn seq(max_len: usize, n: usize) -> impl Strategy<Value = TokenSeq> {
    prop::collection::vec(3..n, 0..=max_len)
}

fn simplex(k: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.01f64..1.0, k).prop_map(|v| {
        let s: f64 = v.iter().sum();
        v.iter().map(|x| x / s).collect()
    })
}

fn max_prob_err(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x.exp() - y.exp()).abs()).fold(0.0, f64::max)
}

proptest! {
    #[test]
    fn single_context_reproduces_base_model(
        seed in any::<u64>(),
        words in 1usize..=3,
        dir in direction_strategy(),
        ctx in seq(4, 6),
        partial in seq(3, 6),
        inner in seq(2, 6),
    ) {
        let v = vocab(words);
        let n = v.len();
        let clamp = |s: &TokenSeq| -> TokenSeq { s.iter().map(|&t| t % n).collect() };
        let (ctx, partial, inner) = (clamp(&ctx), clamp(&partial), clamp(&inner));
        let lm = hashed_lm(dir, v, seed, 3.0);
        let side = Side::for_decoder(dir);
        let sampler = ReflectiveSampler::new(ContextEnsemble::uniform(vec![ctx.clone()], side).unwrap(), &lm).unwrap();
        let got = sampler.next_token_dist(&partial, &inner).unwrap();
        let history: TokenSeq = match dir {
            Direction::Backward => [&partial[..], &inner, &ctx].concat(),
            Direction::Forward => [&ctx[..], &inner, &partial].concat(),
        };
        let want = lm.next_token_logprobs(&history).unwrap();
        prop_assert!(max_prob_err(&got, &want) < 1e-9);
    }

    #[test]
    fn distributions_are_normalized(
        seed in any::<u64>(),
        words in 1usize..=3,
        dir in direction_strategy(),
        k in 1usize..=4,
        partial in seq(3, 6),
        wseed in any::<u64>(),
    ) {
        let v = vocab(words);
        let n = v.len();
        let partial: TokenSeq = partial.iter().map(|&t| t % n).collect();
        let lm = hashed_lm(dir, v, seed, 4.0);
        let contexts: Vec<TokenSeq> = (0..k).map(|i| vec![3 + (i % words), 3]).collect();
        let raw: Vec<f64> = (0..k).map(|i| 0.1 + ((wseed >> (8 * i)) & 0xff) as f64).collect();
        let total: f64 = raw.iter().sum();
        let w = raw.iter().map(|x| x / total).collect();
        let e = ContextEnsemble::new(contexts, w, Side::for_decoder(dir)).unwrap();
        let sampler = ReflectiveSampler::new(e, &lm).unwrap();
        let d = sampler.next_token_dist(&partial, &[]).unwrap();
        let mass: f64 = d.iter().map(|x| x.exp()).sum();
        prop_assert!((mass - 1.0).abs() < 1e-6);
    }

    #[test]
    fn context_order_does_not_matter(
        seed in any::<u64>(),
        dir in direction_strategy(),
        w in simplex(3),
        rot in 0usize..3,
        partial in seq(2, 6),
    ) {
        let v = vocab(3);
        let lm = hashed_lm(dir, v, seed, 3.0);
        let side = Side::for_decoder(dir);
        let contexts: Vec<TokenSeq> = vec![vec![3], vec![4, 5], vec![5, 3, 4]];
        let base = ReflectiveSampler::new(ContextEnsemble::new(contexts.clone(), w.clone(), side).unwrap(), &lm).unwrap();
        let mut pc = contexts.clone();
        let mut pw = w.clone();
        pc.rotate_left(rot);
        pw.rotate_left(rot);
        let perm = ReflectiveSampler::new(ContextEnsemble::new(pc, pw, side).unwrap(), &lm).unwrap();
        let a = base.next_token_dist(&partial, &[]).unwrap();
        let b = perm.next_token_dist(&partial, &[]).unwrap();
        prop_assert!(max_prob_err(&a, &b) < 1e-12);
    }

    #[test]
    fn full_weight_on_one_expert_selects_it(
        seed in any::<u64>(),
        dir in direction_strategy(),
        pick in 0usize..3,
        partial in seq(2, 6),
    ) {
        let v = vocab(3);
        let lm = hashed_lm(dir, v, seed, 3.0);
        let side = Side::for_decoder(dir);
        let contexts: Vec<TokenSeq> = vec![vec![3], vec![4, 5], vec![5, 3, 4]];
        let mut w = vec![0.0; 3];
        w[pick] = 1.0;
        let all = ReflectiveSampler::new(ContextEnsemble::new(contexts.clone(), w, side).unwrap(), &lm).unwrap();
        let one = ReflectiveSampler::new(ContextEnsemble::uniform(vec![contexts[pick].clone()], side).unwrap(), &lm).unwrap();
        let a = all.next_token_dist(&partial, &[]).unwrap();
        let b = one.next_token_dist(&partial, &[]).unwrap();
        prop_assert!(max_prob_err(&a, &b) < 1e-12);
    }

    #[test]
    fn sampler_matches_independent_oracle(
        seed in any::<u64>(),
        dir in direction_strategy(),
        w in simplex(2),
        partial in seq(2, 6),
        inner in seq(2, 6),
    ) {
        let v = vocab(3);
        let lm = hashed_lm(dir, v, seed, 5.0);
        let contexts: Vec<TokenSeq> = vec![vec![4, 3], vec![5]];
        let e = ContextEnsemble::new(contexts.clone(), w.clone(), Side::for_decoder(dir)).unwrap();
        let sampler = ReflectiveSampler::new(e, &lm).unwrap();
        let got = sampler.next_token_dist(&partial, &inner).unwrap();
        let history: TokenSeq = match dir {
            Direction::Backward => [&partial[..], &inner].concat(),
            Direction::Forward => [&inner[..], &partial].concat(),
        };
        let want = poe_oracle(&lm, dir, &contexts, &w, &history);
        prop_assert!(max_prob_err(&got, &want) < 1e-12);
    }
}

/// Probability of every sequence up to `max_len` under the oracle, keyed in
/// logical order.
fn enumerate_oracle(
    lm: &refdec::lm::DelegateLm,
    dir: Direction,
    contexts: &[TokenSeq],
    weights: &[f64],
    inner: &[TokenId],
    max_len: usize,
) -> HashMap<TokenSeq, f64> {
    let eos = lm.vocab().eos();
    let n = lm.vocab().len();
    let mut out = HashMap::new();
    // Generation-order prefixes with their probability.
    let mut frontier: Vec<(TokenSeq, f64)> = vec![(Vec::new(), 1.0)];
    for step in 0..=max_len {
        let mut next = Vec::new();
        for (gen, prob) in frontier {
            let logical: TokenSeq = match dir {
                Direction::Forward => gen.clone(),
                Direction::Backward => reversed(&gen),
            };
            if step == max_len {
                *out.entry(logical).or_insert(0.0) += prob;
                continue;
            }
            let history: TokenSeq = match dir {
                Direction::Backward => [&logical[..], inner].concat(),
                Direction::Forward => [inner, &logical[..]].concat(),
            };
            let d = poe_oracle(lm, dir, contexts, weights, &history);
            for t in 0..n {
                let q = prob * d[t].exp();
                if t == eos {
                    *out.entry(logical.clone()).or_insert(0.0) += q;
                } else {
                    let mut g = gen.clone();
                    g.push(t);
                    next.push((g, q));
                }
            }
        }
        frontier = next;
    }
    out
}

#[test]
fn sampling_matches_exhaustive_enumeration() {
    let cases = [
        (Direction::Backward, 2usize, vec![vec![3], vec![4, 3]], vec![0.6, 0.4], 11u64),
        (Direction::Forward, 2, vec![vec![4], vec![3, 3], vec![4, 4]], vec![0.2, 0.5, 0.3], 12),
        (Direction::Backward, 1, vec![vec![3, 3], vec![3]], vec![0.5, 0.5], 13),
    ];
    for (dir, words, contexts, weights, seed) in cases {
        let lm = hashed_lm(dir, vocab(words), seed, 2.5);
        let inner = vec![3];
        let max_len = 3;
        let oracle = enumerate_oracle(&lm, dir, &contexts, &weights, &inner, max_len);
        let total: f64 = oracle.values().sum();
        assert!((total - 1.0).abs() < 1e-9);

        let e = ContextEnsemble::new(contexts, weights, Side::for_decoder(dir)).unwrap();
        let sampler = ReflectiveSampler::new(e, &lm).unwrap();
        let n = 100_000;
        let samples = sampler.sample(&inner, &NucleusParams::new(1.0, max_len, seed).unwrap(), n).unwrap();
        let mut emp: HashMap<TokenSeq, f64> = HashMap::new();
        for s in samples {
            *emp.entry(s).or_insert(0.0) += 1.0 / n as f64;
        }
        let mut tv = 0.0;
        for (k, p) in &oracle {
            tv += (p - emp.get(k).copied().unwrap_or(0.0)).abs();
        }
        for k in emp.keys() {
            assert!(oracle.contains_key(k), "sample outside support: {k:?}");
        }
        tv /= 2.0;
        assert!(tv < 0.01, "total variation {tv}");
    }
}

#[test]
fn mirrored_problem_samples_reversed_text() {
    for seed in 0..10u64 {
        let v = vocab(3);
        let bwd = hashed_lm(Direction::Backward, v.clone(), seed, 3.0);
        let fwd = mirrored_hashed_lm(Direction::Backward, v, seed, 3.0);
        let contexts: Vec<TokenSeq> = vec![vec![3, 4, 5], vec![5, 5], vec![4]];
        let w = vec![0.5, 0.3, 0.2];
        let inner = vec![4, 3];
        let rb = ReflectiveSampler::new(ContextEnsemble::new(contexts.clone(), w.clone(), Side::Right).unwrap(), &bwd).unwrap();
        let rc: Vec<TokenSeq> = contexts.iter().map(|c| reversed(c)).collect();
        let rf = ReflectiveSampler::new(ContextEnsemble::new(rc, w, Side::Left).unwrap(), &fwd).unwrap();
        let params = NucleusParams::new(0.9, 6, seed).unwrap();
        let a = rb.sample(&inner, &params, 20).unwrap();
        let b = rf.sample(&reversed(&inner), &params, 20).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x, &reversed(y));
        }
        let s = &a[0];
        assert_eq!(
            rb.sequence_logprob(s, &inner).unwrap(),
            rf.sequence_logprob(&reversed(s), &reversed(&inner)).unwrap()
        );
    }
}
