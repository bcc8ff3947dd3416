//! Two-step atypical-aspect extraction.
//!
//! A review is first reformulated into short aspect sentences. Each sentence is
//! then classified as containing atypical aspects or not, and the aspects of
//! positive sentences are listed. The second step can run zero-shot, with the
//! fixed example set, or with examples retrieved per sentence from a labelled
//! bank (four positives and four negatives, never from the same item).

use std::cmp::Ordering;
use std::collections::HashSet;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{
    read_jsonl, AspectForm, AtypicalAspect, Corpus, CorpusError, Layer, Provenance, Review,
};
use crate::gateway::{
    parse_step1, parse_step2, render_prompt, EmbeddingVector, Example, Gateway, GatewayError,
    GenParams, GenerationRequest, PromptInput, PromptSet, PromptTemplate,
};
use crate::text::{fold_key, split_sentences};

#[derive(Debug, Error)]
pub enum ExtractionError {
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error("example bank too small: {positives} positives and {negatives} negatives outside the target's item")]
    InsufficientBank { positives: usize, negatives: usize },
    #[error("dynamic example selection needs an example bank")]
    MissingBank,
    #[error("invalid extraction config: {0}")]
    InvalidConfig(String),
    #[error("invalid example bank: {0}")]
    InvalidBank(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AspectSentence {
    pub review_id: String,
    pub index: usize,
    pub text: String,
    #[serde(default)]
    pub gold_positive: Option<bool>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ExtractionMode {
    ZeroShot,
    Fixed8,
    Dynamic8,
}

impl FromStr for ExtractionMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_lowercase().as_str() {
            "0shot" | "zeroshot" | "zero-shot" => Ok(ExtractionMode::ZeroShot),
            "fixed" | "fixed8" => Ok(ExtractionMode::Fixed8),
            "dynamic" | "dynamic8" => Ok(ExtractionMode::Dynamic8),
            _ => Err(format!("unknown extraction mode {s:?}")),
        }
    }
}

impl fmt::Display for ExtractionMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractionConfig {
    pub mode: ExtractionMode,
    pub positives_k: usize,
    pub negatives_k: usize,
    pub layers: Vec<Layer>,
}

impl ExtractionConfig {
    pub fn new(mode: ExtractionMode) -> Self {
        ExtractionConfig {
            mode,
            positives_k: 4,
            negatives_k: 4,
            layers: vec![Layer::Primary],
        }
    }

    pub fn validate(&self) -> Result<(), ExtractionError> {
        if self.mode != ExtractionMode::ZeroShot && self.positives_k + self.negatives_k != 8 {
            return Err(ExtractionError::InvalidConfig(format!(
                "few-shot modes need 8 examples, got {} + {}",
                self.positives_k, self.negatives_k
            )));
        }
        if self.layers.is_empty() {
            return Err(ExtractionError::InvalidConfig("no layers enabled".into()));
        }
        Ok(())
    }
}

/// A labelled sentence in the retrieval bank. This is also the line format of
/// `sentences.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BankEntry {
    pub review_id: String,
    pub index: usize,
    pub text: String,
    pub gold_positive: bool,
    #[serde(default)]
    pub gold_aspects: Vec<String>,
    pub item_id: String,
}

impl BankEntry {
    pub fn as_example(&self) -> Example {
        Example::Step2 {
            sentence: self.text.clone(),
            positive: self.gold_positive,
            aspects: self.gold_aspects.clone(),
        }
    }
}

/// Labelled sentences with one embedding each, grouped by item.
#[derive(Debug, Clone)]
pub struct ExampleBank {
    entries: Vec<BankEntry>,
    embeddings: Vec<EmbeddingVector>,
}

impl ExampleBank {
    pub fn new(
        entries: Vec<BankEntry>,
        embeddings: Vec<EmbeddingVector>,
    ) -> Result<Self, ExtractionError> {
        if entries.len() != embeddings.len() {
            return Err(ExtractionError::InvalidBank(format!(
                "{} entries but {} embeddings",
                entries.len(),
                embeddings.len()
            )));
        }
        let mut seen = HashSet::new();
        for e in &entries {
            if !seen.insert((e.review_id.clone(), e.index)) {
                return Err(ExtractionError::InvalidBank(format!(
                    "duplicate sentence {}#{}",
                    e.review_id, e.index
                )));
            }
            if e.gold_positive == e.gold_aspects.is_empty() {
                return Err(ExtractionError::InvalidBank(format!(
                    "sentence {}#{} label disagrees with its aspects",
                    e.review_id, e.index
                )));
            }
        }
        Ok(ExampleBank {
            entries,
            embeddings,
        })
    }

    /// Embeds every entry's raw text with the gateway's embedder.
    pub fn build(entries: Vec<BankEntry>, gw: &Gateway) -> Result<Self, ExtractionError> {
        let texts: Vec<String> = entries.iter().map(|e| e.text.clone()).collect();
        let embeddings = gw
            .embed_many(&texts)
            .into_iter()
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(entries, embeddings)
    }

    pub fn load(path: &Path, gw: &Gateway) -> Result<Self, ExtractionError> {
        let entries = read_jsonl::<BankEntry>(path)?
            .into_iter()
            .map(|(_, e)| e)
            .collect();
        Self::build(entries, gw)
    }

    pub fn entries(&self) -> &[BankEntry] {
        &self.entries
    }

    pub fn embedding(&self, i: usize) -> &EmbeddingVector {
        &self.embeddings[i]
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Splits every review of the corpus into sentences and labels each one from
/// the gold extractive aspects of the enabled layers: a sentence is positive iff
/// it contains at least one of its review's gold aspects (case-insensitive).
pub fn label_sentences(corpus: &Corpus, layers: &[Layer]) -> Vec<BankEntry> {
    let mut reviews: Vec<&Review> = corpus.reviews().iter().collect();
    reviews.sort_by(|a, b| a.id.cmp(&b.id));
    let mut out = Vec::new();
    for r in reviews {
        let gold: Vec<&AtypicalAspect> = corpus
            .aspects()
            .iter()
            .filter(|a| {
                a.review_id == r.id
                    && a.provenance == Provenance::Gold
                    && a.form == AspectForm::Extractive
                    && layers.contains(&a.layer)
            })
            .collect();
        for (index, text) in split_sentences(&r.text).into_iter().enumerate() {
            let lower = text.to_lowercase();
            let mut found: Vec<String> = Vec::new();
            for a in &gold {
                if lower.contains(&a.surface.to_lowercase())
                    && !found.iter().any(|f| fold_key(f) == fold_key(&a.surface))
                {
                    found.push(a.surface.clone());
                }
            }
            out.push(BankEntry {
                review_id: r.id.clone(),
                index,
                gold_positive: !found.is_empty(),
                gold_aspects: found,
                text,
                item_id: r.item_id.clone(),
            });
        }
    }
    out
}

/// Picks the in-context examples for one sentence: the `positives_k` positive
/// and `negatives_k` negative bank sentences most cosine-similar to the target,
/// skipping every sentence from the target's item. Ties go to the smaller
/// (review id, index). Returns bank indices, positives first, each group in
/// descending similarity.
pub fn select_dynamic_examples(
    target: &EmbeddingVector,
    target_item: &str,
    bank: &ExampleBank,
    cfg: &ExtractionConfig,
) -> Result<Vec<usize>, ExtractionError> {
    let mut pos: Vec<(f64, usize)> = Vec::new();
    let mut neg: Vec<(f64, usize)> = Vec::new();
    for (i, e) in bank.entries.iter().enumerate() {
        if e.item_id == target_item {
            continue;
        }
        let s = target.cosine(&bank.embeddings[i]);
        if e.gold_positive {
            pos.push((s, i));
        } else {
            neg.push((s, i));
        }
    }
    if pos.len() < cfg.positives_k || neg.len() < cfg.negatives_k {
        return Err(ExtractionError::InsufficientBank {
            positives: pos.len(),
            negatives: neg.len(),
        });
    }
    let key = |i: usize| (bank.entries[i].review_id.as_str(), bank.entries[i].index);
    let order = |a: &(f64, usize), b: &(f64, usize)| {
        b.0.partial_cmp(&a.0)
            .unwrap_or(Ordering::Equal)
            .then_with(|| key(a.1).cmp(&key(b.1)))
    };
    pos.sort_by(order);
    neg.sort_by(order);
    Ok(pos
        .iter()
        .take(cfg.positives_k)
        .chain(neg.iter().take(cfg.negatives_k))
        .map(|&(_, i)| i)
        .collect())
}

/// Reformulates a review into aspect sentences. An empty completion yields no
/// sentences and a warning.
pub fn reformulate(
    review: &Review,
    gw: &Gateway,
    tpl: &PromptTemplate,
) -> Result<Vec<AspectSentence>, ExtractionError> {
    let prompt = tpl.render(&PromptInput::Review(review.text.clone()))?;
    let out = gw.generate(&GenerationRequest::new(prompt, GenParams::DETERMINISTIC))?;
    match parse_step1(&out) {
        Ok(sents) => Ok(sents
            .into_iter()
            .enumerate()
            .map(|(index, text)| AspectSentence {
                review_id: review.id.clone(),
                index,
                text,
                gold_positive: None,
            })
            .collect()),
        Err(GatewayError::EmptyOutput) => {
            log::warn!("review {}: reformulation returned no sentences", review.id);
            Ok(Vec::new())
        }
        Err(e) => Err(e.into()),
    }
}

/// Builds the Step 2 prompt for a sentence under the configured mode.
pub fn step2_prompt(
    sentence: &AspectSentence,
    item_id: &str,
    cfg: &ExtractionConfig,
    gw: &Gateway,
    tpl: &PromptTemplate,
    bank: Option<&ExampleBank>,
) -> Result<String, ExtractionError> {
    let input = PromptInput::Sentence(sentence.text.clone());
    let prompt = match cfg.mode {
        ExtractionMode::ZeroShot => tpl.render_zero_shot(&input)?,
        ExtractionMode::Fixed8 => tpl.render(&input)?,
        ExtractionMode::Dynamic8 => {
            let bank = bank.ok_or(ExtractionError::MissingBank)?;
            let emb = gw.embed(&sentence.text)?;
            let picked = select_dynamic_examples(&emb, item_id, bank, cfg)?;
            let examples: Vec<Example> = picked
                .iter()
                .map(|&i| bank.entries[i].as_example())
                .collect();
            render_prompt(tpl, &examples, &input)?
        }
    };
    Ok(prompt)
}

/// Classifies one aspect sentence and lists its atypical aspects. A `<pos>`
/// answer with no aspects, or `<neg>` with some, is logged and read as negative.
pub fn classify_and_extract(
    sentence: &AspectSentence,
    item_id: &str,
    cfg: &ExtractionConfig,
    gw: &Gateway,
    tpl: &PromptTemplate,
    bank: Option<&ExampleBank>,
) -> Result<(bool, Vec<String>), ExtractionError> {
    let prompt = step2_prompt(sentence, item_id, cfg, gw, tpl, bank)?;
    let out = gw.generate(&GenerationRequest::new(prompt, GenParams::DETERMINISTIC))?;
    match parse_step2(&out) {
        Ok(p) => Ok((p.positive, p.aspects)),
        Err(GatewayError::InconsistentResponse(why)) => {
            log::warn!(
                "sentence {}#{}: {why}; treating as negative",
                sentence.review_id,
                sentence.index
            );
            Ok((false, Vec::new()))
        }
        Err(e) => Err(e.into()),
    }
}

/// Per-sentence outcome of an extraction run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SentenceOutcome {
    pub sentence: AspectSentence,
    pub positive: bool,
    pub aspects: Vec<String>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReviewExtraction {
    pub review_id: String,
    pub aspects: Vec<AtypicalAspect>,
    pub sentences: Vec<SentenceOutcome>,
    /// Failures that did not stop the run; non-empty means the result is partial.
    pub failures: Vec<String>,
}

impl ReviewExtraction {
    pub fn is_partial(&self) -> bool {
        !self.failures.is_empty()
    }
}

/// Runs both steps over one review. Sentence-level failures are recorded and
/// the remaining sentences still processed.
pub fn extract_review(
    review: &Review,
    cfg: &ExtractionConfig,
    gw: &Gateway,
    prompts: &PromptSet,
    bank: Option<&ExampleBank>,
) -> Result<ReviewExtraction, ExtractionError> {
    cfg.validate()?;
    if cfg.mode == ExtractionMode::Dynamic8 && bank.is_none() {
        return Err(ExtractionError::MissingBank);
    }
    let mut res = ReviewExtraction {
        review_id: review.id.clone(),
        aspects: Vec::new(),
        sentences: Vec::new(),
        failures: Vec::new(),
    };
    let sentences = match reformulate(review, gw, &prompts.step1) {
        Ok(s) => s,
        Err(e) => {
            res.failures.push(format!("reformulate: {e}"));
            return Ok(res);
        }
    };
    let outcomes = gw.map(&sentences, |s| {
        classify_and_extract(s, &review.item_id, cfg, gw, &prompts.step2, bank)
    });
    let mut seen = HashSet::new();
    for (s, o) in sentences.into_iter().zip(outcomes) {
        let (positive, aspects, error) = match o {
            Ok((p, a)) => (p, a, None),
            Err(e) => {
                res.failures.push(format!("sentence {}: {e}", s.index));
                (false, Vec::new(), Some(e.to_string()))
            }
        };
        for a in &aspects {
            if seen.insert(fold_key(a)) {
                res.aspects.push(AtypicalAspect::system(&review.id, a));
            }
        }
        res.sentences.push(SentenceOutcome {
            sentence: s,
            positive,
            aspects,
            error,
        });
    }
    Ok(res)
}

/// Extracts every review, in the given order.
pub fn extract_reviews(
    reviews: &[Review],
    cfg: &ExtractionConfig,
    gw: &Gateway,
    prompts: &PromptSet,
    bank: Option<&ExampleBank>,
) -> Result<Vec<ReviewExtraction>, ExtractionError> {
    gw.map(reviews, |r| extract_review(r, cfg, gw, prompts, bank))
        .into_iter()
        .collect()
}
