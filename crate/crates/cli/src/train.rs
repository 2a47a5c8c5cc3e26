use refdec::ngram::{perplexity, train_pair, NgramConfig, Smoothing};
use refdec::{LanguageModel, TokenSeq, Tokenizer};

use crate::config::{input, required, RunConfigFile};
use crate::failure::{Context, Failure};
use crate::io::{read_text, write_atomic};
use crate::TrainArgs;

const DEFAULT_ORDER: usize = 4;
const HOLD_OUT_EVERY: usize = 10;

pub fn run(args: TrainArgs) -> Result<(), Failure> {
    let file = RunConfigFile::load(args.common.config.as_deref(), "train-lm")?;
    let corpus_path = input(args.corpus, &file.io.corpus, "corpus")?;
    let held_out_path = match args.held_out.or_else(|| file.io.held_out.clone()) {
        Some(p) => Some(input(Some(p), &None, "held-out")?),
        None => None,
    };
    let fwd_out = required(args.forward_out, &file.io.forward_out, "forward-out")?;
    let bwd_out = required(args.backward_out, &file.io.backward_out, "backward-out")?;
    let order = args.order.map(usize::from).or(file.train.order).unwrap_or(DEFAULT_ORDER);
    let k = args.smoothing_k.or(file.train.smoothing_k).unwrap_or(Smoothing::default().k);
    let tokenizer = Tokenizer {
        lowercase: !args.no_lowercase && file.train.lowercase.unwrap_or(true),
        split_punctuation: !args.keep_punctuation && file.train.split_punctuation.unwrap_or(true),
    };

    let docs = tokenizer.tokenize_corpus(&read_text(&corpus_path)?);
    if docs.is_empty() {
        return Err(Failure::data(format!("{}: corpus has no documents", corpus_path.display())));
    }
    let (train_docs, held_docs, label) = match &held_out_path {
        Some(p) => (docs, tokenizer.tokenize_corpus(&read_text(p)?), "held-out"),
        None if docs.len() >= HOLD_OUT_EVERY => {
            let (held, train): (Vec<_>, Vec<_>) = docs
                .into_iter()
                .enumerate()
                .partition(|(i, _)| i % HOLD_OUT_EVERY == HOLD_OUT_EVERY - 1);
            let strip = |v: Vec<(usize, Vec<String>)>| v.into_iter().map(|(_, d)| d).collect::<Vec<_>>();
            (strip(train), strip(held), "held-out")
        }
        None => (docs.clone(), docs, "training"),
    };

    let cfg = NgramConfig::new(order).with_k(k);
    let (fwd, bwd) = train_pair(&train_docs, tokenizer, &cfg).context("training failed")?;
    write_atomic(&fwd_out, fwd.to_json().as_bytes())?;
    write_atomic(&bwd_out, bwd.to_json().as_bytes())?;

    let encoded: Vec<TokenSeq> = held_docs.iter().map(|d| fwd.vocab().encode(d)).collect();
    println!("vocabulary size: {}", fwd.vocab().len());
    if encoded.is_empty() {
        println!("no held-out documents; perplexity not computed");
    } else {
        println!("forward {label} perplexity: {:.4}", perplexity(&fwd, &encoded)?);
        println!("backward {label} perplexity: {:.4}", perplexity(&bwd, &encoded)?);
    }
    println!("wrote {} and {}", fwd_out.display(), bwd_out.display());
    Ok(())
}
