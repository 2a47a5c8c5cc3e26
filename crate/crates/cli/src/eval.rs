//! The `eval` command: per-line and mean BLEU and novelty.

use refdec::metrics::{bleu, novelty, BleuConfig, BleuSmoothing};
use refdec::{TokenSeq, Tokenizer, Vocabulary};
use serde::{Deserialize, Serialize};

use crate::config::{input, RunConfigFile};
use crate::failure::Failure;
use crate::generate::{NONE_MARKER, SKIPPED_MARKER};
use crate::io::{read_lines, write_json};
use crate::EvalArgs;

pub const EVAL_FORMAT: &str = "refdec-eval";
pub const EVAL_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LineReport {
    pub line: usize,
    pub candidate: String,
    pub source: String,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub references: Vec<String>,
    /// Against the references; absent without references or for unscored lines.
    pub bleu: Option<f64>,
    /// `100 − BLEU` against the source; absent for unscored lines.
    pub novelty: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Aggregate {
    pub lines: usize,
    /// Lines with an empty candidate or a `<none>`/`<skipped>` marker.
    pub unscored: usize,
    pub mean_bleu: Option<f64>,
    pub mean_novelty: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    pub format: String,
    pub version: u32,
    pub bleu: BleuConfig,
    pub tokenizer: Tokenizer,
    pub aggregate: Aggregate,
    pub lines: Vec<LineReport>,
}

/// Candidate, source and reference words of one line.
type Tokenized = (Vec<String>, Vec<String>, Vec<Vec<String>>);

fn mean(xs: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    (n > 0).then(|| sum / n as f64)
}

pub fn run(args: EvalArgs) -> Result<(), Failure> {
    let file = RunConfigFile::load(args.common.config.as_deref(), "eval")?;
    let cand_path = input(args.candidates, &file.io.candidates, "candidates")?;
    let src_path = input(args.sources, &file.io.sources, "sources")?;
    let ref_path = match args.references.or_else(|| file.io.references.clone()) {
        Some(p) => Some(input(Some(p), &None, "references")?),
        None => None,
    };
    let output = args.output.or_else(|| file.io.output.clone());
    let order = args
        .max_ngram_order
        .map(usize::from)
        .or(file.eval.max_ngram_order)
        .unwrap_or(4);
    let smoothing = if args.no_smoothing || file.eval.smoothing == Some(false) {
        BleuSmoothing::None
    } else {
        BleuSmoothing::AddOne
    };
    let cfg = BleuConfig { max_ngram_order: order, smoothing };
    let tokenizer = Tokenizer {
        lowercase: !args.no_lowercase,
        split_punctuation: !args.keep_punctuation,
    };

    let cands = read_lines(&cand_path)?;
    let srcs = read_lines(&src_path)?;
    if cands.len() != srcs.len() {
        return Err(Failure::data(format!(
            "{} has {} lines but {} has {}",
            cand_path.display(),
            cands.len(),
            src_path.display(),
            srcs.len()
        )));
    }
    let refs = match &ref_path {
        Some(p) => {
            let r = read_lines(p)?;
            if r.len() != cands.len() {
                return Err(Failure::data(format!(
                    "{} has {} lines but {} has {}",
                    p.display(),
                    r.len(),
                    cand_path.display(),
                    cands.len()
                )));
            }
            Some(r)
        }
        None => None,
    };
    if cands.is_empty() {
        return Err(Failure::data(format!("{}: no lines", cand_path.display())));
    }

    // BLEU only compares tokens, so any consistent id assignment works.
    let mut words: Vec<String> = Vec::new();
    let tokenized: Vec<Tokenized> = (0..cands.len())
        .map(|i| {
            let r = refs
                .as_ref()
                .map(|r| r[i].split('\t').map(|x| tokenizer.tokenize(x)).filter(|t| !t.is_empty()).collect())
                .unwrap_or_default();
            (tokenizer.tokenize(&cands[i]), tokenizer.tokenize(&srcs[i]), r)
        })
        .collect();
    for (c, s, r) in &tokenized {
        words.extend(c.iter().chain(s).chain(r.iter().flatten()).cloned());
    }
    let vocab = Vocabulary::new(words);
    let enc = |w: &[String]| -> TokenSeq { vocab.encode(w) };

    let mut lines = Vec::with_capacity(cands.len());
    for (i, (c, s, r)) in tokenized.iter().enumerate() {
        let marker = matches!(cands[i].trim(), NONE_MARKER | SKIPPED_MARKER);
        let scorable = !marker && !c.is_empty();
        let cand = enc(c);
        let novelty = if scorable && !s.is_empty() {
            Some(novelty(&cand, &enc(s), &cfg)?)
        } else {
            None
        };
        let bleu = if scorable && !r.is_empty() {
            let refs: Vec<TokenSeq> = r.iter().map(|x| enc(x)).collect();
            Some(bleu(&cand, &refs, &cfg)?)
        } else {
            None
        };
        lines.push(LineReport {
            line: i + 1,
            candidate: cands[i].clone(),
            source: srcs[i].clone(),
            references: refs
                .as_ref()
                .map(|r| r[i].split('\t').map(str::to_string).collect())
                .unwrap_or_default(),
            bleu,
            novelty,
        });
    }
    let aggregate = Aggregate {
        lines: lines.len(),
        unscored: lines.iter().filter(|l| l.novelty.is_none() && l.bleu.is_none()).count(),
        mean_bleu: mean(lines.iter().filter_map(|l| l.bleu)),
        mean_novelty: mean(lines.iter().filter_map(|l| l.novelty)),
    };
    let fmt = |x: Option<f64>| x.map_or("n/a".to_string(), |v| format!("{v:.4}"));
    println!(
        "lines: {}  unscored: {}  mean BLEU: {}  mean novelty: {}",
        aggregate.lines,
        aggregate.unscored,
        fmt(aggregate.mean_bleu),
        fmt(aggregate.mean_novelty)
    );
    let report = EvalReport {
        format: EVAL_FORMAT.into(),
        version: EVAL_VERSION,
        bleu: cfg,
        tokenizer,
        aggregate,
        lines,
    };
    match output {
        Some(p) => write_json(&p, &report)?,
        None => println!(
            "{}",
            serde_json::to_string_pretty(&report).map_err(Failure::data)?
        ),
    }
    Ok(())
}
