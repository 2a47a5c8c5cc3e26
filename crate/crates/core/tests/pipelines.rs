mod common;

use common::*;
use refdec::lm::{sequence_logprob, Direction, LanguageModel};
use refdec::metrics::{bleu, contextual_cross_entropy};
use refdec::ngram::{train_pair, NgramConfig, NgramLm};
use refdec::pipeline::{
    abductive_infill, build_reflective_sampler, paraphrase, paraphrase_score, select_with_novelty_threshold,
    LmPair, PipelineConfig,
};
use refdec::vocab::{TokenSeq, Tokenizer};

fn train(docs: &[String], order: usize) -> (NgramLm, NgramLm) {
    let tok = Tokenizer::default();
    let docs: Vec<Vec<String>> = docs.iter().map(|d| tok.tokenize(d)).collect();
    train_pair(&docs, tok, &NgramConfig::new(order)).unwrap()
}

fn small_paraphrase_config(seed: u64) -> PipelineConfig {
    let mut cfg = PipelineConfig::paraphrase();
    cfg.n_c = 16;
    cfg.len_c = 15;
    cfg.n_samples = 10;
    cfg.seed = seed;
    cfg
}

#[test]
fn paraphrase_ranks_scores_and_reproduces() {
    let (f, b) = train(&templated_corpus(), 3);
    let lms = LmPair::new(&f, &b).unwrap();
    let src = f.encode_text("the cat likes the house .");
    let cfg = small_paraphrase_config(7);
    let out = paraphrase(&src, &lms, &cfg).unwrap();
    assert!(!out.ranked.is_empty());
    assert_eq!(out.sample_len, src.len() + 5);
    assert_eq!(out.samplers.len(), 2);
    assert_eq!(out.samplers[0].direction, Direction::Forward);
    for w in out.ranked.windows(2) {
        assert!(w[0].task_score >= w[1].task_score);
    }
    let right = out.samplers[1].ensemble.contexts();
    let left = out.samplers[0].ensemble.contexts();
    for c in &out.ranked {
        assert!(!c.tokens.is_empty());
        let nov = 100.0 - bleu(&c.tokens, std::slice::from_ref(&src), &cfg.bleu).unwrap();
        assert_eq!(c.novelty, Some(nov));
        let score = paraphrase_score(&c.tokens, &lms, right, left, false).unwrap();
        assert_eq!(c.task_score, score);
    }
    let again = paraphrase(&src, &lms, &cfg).unwrap();
    assert_eq!(out.ranked, again.ranked);
}

#[test]
fn score_halves_are_negative_cross_entropies() {
    let (f, b) = train(&templated_corpus(), 3);
    let lms = LmPair::new(&f, &b).unwrap();
    let src = f.encode_text("a bird finds the river .");
    let mut cfg = small_paraphrase_config(3);
    cfg.score_all_contexts = true;
    let out = paraphrase(&src, &lms, &cfg).unwrap();
    let left = &out.samplers[0].contexts;
    let right = &out.samplers[1].contexts;
    assert_eq!(left.len(), cfg.n_c);
    for c in out.ranked.iter().take(5) {
        let xr = contextual_cross_entropy(&c.tokens, right, &f).unwrap();
        let xl = contextual_cross_entropy(&c.tokens, left, &b).unwrap();
        assert!((c.task_score + xr + xl).abs() < 1e-9);
    }
}

#[test]
fn threshold_selection_raises_novelty() {
    let (f, b) = train(&templated_corpus(), 3);
    let lms = LmPair::new(&f, &b).unwrap();
    let src = f.encode_text("my friend greets the ball .");
    let out = paraphrase(&src, &lms, &small_paraphrase_config(11)).unwrap();
    let nov = |t: f64| {
        let s = select_with_novelty_threshold(&out.ranked, t).unwrap();
        out.ranked[s.index].novelty.unwrap()
    };
    assert!(nov(0.0) <= nov(30.0) && nov(30.0) <= nov(45.0));
}

fn bridging_corpus() -> Vec<String> {
    let mut docs = Vec::new();
    for _ in 0..5 {
        docs.push("it rained all day . the ground got wet . we stayed inside .".to_string());
        docs.push("the sun came out . the ground got dry . we went outside .".to_string());
        docs.push("it rained all day . we stayed inside .".to_string());
    }
    docs
}

#[test]
fn infill_hypotheses_pass_rechecked_filter() {
    let (f, b) = train(&bridging_corpus(), 4);
    let lms = LmPair::new(&f, &b).unwrap();
    let o1 = f.encode_text("it rained all day .");
    let o2 = f.encode_text("we stayed inside .");
    let mut cfg = PipelineConfig::anlg();
    cfg.n_c = 12;
    cfg.len_c = 12;
    cfg.n_samples = 12;
    cfg.seed = 5;
    let out = abductive_infill(&o1, &o2, &lms, &cfg).unwrap();
    let base1 = sequence_logprob(&b, &o1, &o2).unwrap();
    let base2 = sequence_logprob(&f, &o2, &o1).unwrap();
    assert_eq!(out.baselines.o1_given_o2, base1);
    assert_eq!(out.baselines.o2_given_o1, base2);
    assert!(!out.ranked.is_empty(), "no hypothesis explains the bridging record");
    for c in &out.ranked {
        let l1 = sequence_logprob(&b, &o1, &[&c.tokens[..], &o2].concat()).unwrap();
        let l2 = sequence_logprob(&f, &o2, &[&o1[..], &c.tokens].concat()).unwrap();
        assert!(l1 > base1 && l2 > base2);
        assert!(!c.tokens.is_empty());
    }
    for c in &out.rejected {
        assert!(!c.passed_filter);
    }
    let top = f.vocab().decode(&out.ranked[0].tokens);
    assert!(top.contains("ground"), "unexpected top hypothesis {top:?}");
}

#[test]
fn infill_with_identical_observations_completes() {
    let (f, b) = train(&bridging_corpus(), 3);
    let lms = LmPair::new(&f, &b).unwrap();
    let o = f.encode_text("we stayed inside .");
    let mut cfg = PipelineConfig::anlg();
    cfg.n_c = 4;
    cfg.n_samples = 4;
    let out = abductive_infill(&o, &o, &lms, &cfg).unwrap();
    assert!(out.ranked.len() + out.rejected.len() <= 2 * cfg.n_samples);
    assert!(out.ranked.iter().all(|c| c.passed_filter));
    assert!(out.rejected.iter().all(|c| !c.passed_filter));
}

#[test]
fn mirrored_pipeline_reverses_outputs() {
    for seed in 0..10u64 {
        let v = vocab(4);
        let f = hashed_lm(Direction::Forward, v.clone(), seed, 3.0);
        let b = hashed_lm(Direction::Backward, v.clone(), seed + 100, 3.0);
        // Mirror images: f2 reads histories reversed through b, b2 through f.
        let f2 = mirrored_hashed_lm(Direction::Backward, v.clone(), seed + 100, 3.0);
        let b2 = mirrored_hashed_lm(Direction::Forward, v, seed, 3.0);
        let lms = LmPair::new(&f, &b).unwrap();
        let mirror = LmPair::new(&f2, &b2).unwrap();
        let s: TokenSeq = (0..4).map(|i| 3 + ((seed as usize + i * 3) % 4)).collect();
        let mut cfg = PipelineConfig::paraphrase();
        cfg.n_c = 8;
        cfg.len_c = 5;
        cfg.k_c = 3;
        let a = build_reflective_sampler(&s, Direction::Backward, &lms, &cfg, seed).unwrap();
        let m = build_reflective_sampler(&reversed(&s), Direction::Forward, &mirror, &cfg, seed).unwrap();
        let rc: Vec<TokenSeq> = m.contexts.iter().map(|c| reversed(c)).collect();
        assert_eq!(a.contexts, rc);
        assert_eq!(a.sampler.ensemble().weights(), m.sampler.ensemble().weights());
        let params = refdec::sampling::NucleusParams::new(0.8, 6, seed).unwrap();
        let xs = a.sampler.sample(&[], &params, 10).unwrap();
        let ys = m.sampler.sample(&[], &params, 10).unwrap();
        for (x, y) in xs.iter().zip(&ys) {
            assert_eq!(x, &reversed(y));
        }
        assert!(f.vocab() == f2.vocab());
    }
}
