//! User-dependent utility of atypical aspects, and synthetic user profiles.
//!
//! Utility classification asks the model how useful one tagged aspect is to one
//! user profile. In dynamic mode the four in-context examples are the bank
//! triplets that best match the target on both profile and aspect similarity
//! (harmonic mean), after removing every triplet that shares the target's user
//! or item.

use std::cmp::Ordering;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{
    read_jsonl, Corpus, CorpusError, DomainCategory, Review, UserProfile, UtilityLabel,
};
use crate::gateway::{
    parse_profile, parse_utility, render_prompt, EmbeddingVector, Example, Gateway, GatewayError,
    GenParams, GenerationRequest, PromptFamily, PromptInput, PromptTemplate,
};
use crate::text::{fold_key, split_sentences};

#[derive(Debug, Error)]
pub enum PersonalizationError {
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error("similarity {0} outside [0, 1]")]
    DomainError(f64),
    #[error("utility bank has only {eligible} eligible triplets, need {needed}")]
    InsufficientBank { eligible: usize, needed: usize },
    #[error("dynamic utility examples need a bank")]
    MissingBank,
    #[error("model labelled {got:?} but the query asked about {expected:?}")]
    MismatchedAspect { expected: String, got: String },
    #[error("malformed utility query: {0}")]
    MalformedQuery(String),
    #[error("invalid profile generation spec: {0}")]
    InvalidSpec(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum UtilityMode {
    ZeroShot,
    FixedCoT4,
    Dynamic4,
}

impl FromStr for UtilityMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_lowercase().as_str() {
            "0shot" | "zeroshot" | "zero-shot" => Ok(UtilityMode::ZeroShot),
            "fixed" | "fixedcot4" | "fixed-cot" => Ok(UtilityMode::FixedCoT4),
            "dynamic" | "dynamic4" => Ok(UtilityMode::Dynamic4),
            _ => Err(format!("unknown utility mode {s:?}")),
        }
    }
}

impl fmt::Display for UtilityMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

const ATA_OPEN: &str = "<ata>";
const ATA_CLOSE: &str = "</ata>";

/// Returns the span between the single `<ata>…</ata>` pair, or `None` if the
/// text does not hold exactly one well-formed pair.
fn tagged_span(s: &str) -> Option<&str> {
    if s.matches(ATA_OPEN).count() != 1 || s.matches(ATA_CLOSE).count() != 1 {
        return None;
    }
    let a = s.find(ATA_OPEN)? + ATA_OPEN.len();
    let b = s.find(ATA_CLOSE)?;
    (a <= b).then(|| &s[a..b])
}

/// Finds the first review sentence mentioning the aspect and wraps that
/// mention in `<ata>` tags. Falls back to the bare tagged aspect when no
/// sentence mentions it.
pub fn tag_sentence(review_text: &str, aspect: &str) -> String {
    let needle = aspect.to_lowercase();
    for s in split_sentences(review_text) {
        // lowercasing can change byte offsets for some scripts; only trust ASCII-safe hits
        let lower = s.to_lowercase();
        if lower.len() != s.len() {
            continue;
        }
        if let Some(i) = lower.find(&needle) {
            let j = i + needle.len();
            return format!("{}{ATA_OPEN}{}{ATA_CLOSE}{}", &s[..i], &s[i..j], &s[j..]);
        }
    }
    format!("{ATA_OPEN}{aspect}{ATA_CLOSE}")
}

/// One aspect, tagged in its sentence, to be judged against one profile.
#[derive(Debug, Clone, PartialEq)]
pub struct UtilityQuery {
    pub profile: UserProfile,
    pub item_id: String,
    pub review_id: String,
    pub sentence_text: String,
    pub aspect_surface: String,
}

impl UtilityQuery {
    pub fn new(
        profile: UserProfile,
        item_id: &str,
        review_id: &str,
        sentence_text: &str,
        aspect_surface: &str,
    ) -> Result<Self, PersonalizationError> {
        let span = tagged_span(sentence_text).ok_or_else(|| {
            PersonalizationError::MalformedQuery(format!(
                "need exactly one <ata> span: {sentence_text:?}"
            ))
        })?;
        if fold_key(span) != fold_key(aspect_surface) {
            return Err(PersonalizationError::MalformedQuery(format!(
                "tagged span {span:?} is not the aspect {aspect_surface:?}"
            )));
        }
        Ok(UtilityQuery {
            profile,
            item_id: item_id.to_string(),
            review_id: review_id.to_string(),
            sentence_text: sentence_text.to_string(),
            aspect_surface: aspect_surface.to_string(),
        })
    }
}

impl UtilityQuery {
    /// Tags the aspect in the first review sentence that mentions it.
    pub fn for_review(
        profile: UserProfile,
        review: &Review,
        aspect_surface: &str,
    ) -> Result<Self, PersonalizationError> {
        let sentence = tag_sentence(&review.text, aspect_surface);
        Self::new(
            profile,
            &review.item_id,
            &review.id,
            &sentence,
            aspect_surface,
        )
    }
}

/// A labelled ⟨profile, tagged sentence, aspect⟩ triplet. Also the line format
/// of `utility_bank.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtilityTriplet {
    pub id: String,
    pub user_id: String,
    pub item_id: String,
    pub review_id: String,
    pub profile: String,
    /// Sentence with the aspect wrapped in `<ata>` tags.
    pub sentence: String,
    /// Text embedded for retrieval, normally a standalone rewrite of the aspect.
    pub aspect: String,
    /// The aspect as tagged in the sentence.
    pub aspect_surface: String,
    pub label: UtilityLabel,
}

impl UtilityTriplet {
    pub fn as_example(&self) -> Example {
        Example::Utility {
            profile: self.profile.clone(),
            sentence: self.sentence.clone(),
            aspect: self.aspect_surface.clone(),
            label: self.label,
            explanation: None,
        }
    }
}

/// Bank triplets from the corpus's accepted HITs whose user has a profile.
/// Ids are `t{n:04}` in (user, review, aspect) order.
pub fn triplets_from_hits(corpus: &Corpus) -> Vec<UtilityTriplet> {
    let mut hits: Vec<_> = corpus
        .hits()
        .iter()
        .filter(|h| h.accepted && h.consensus.is_some())
        .collect();
    hits.sort_by(|a, b| {
        (&a.user_id, &a.review_id, &a.aspect_surface).cmp(&(
            &b.user_id,
            &b.review_id,
            &b.aspect_surface,
        ))
    });
    let mut out = Vec::new();
    for h in hits {
        let (Some(p), Some(r), Some(label)) = (
            corpus.profile(&h.user_id),
            corpus.review(&h.review_id),
            h.consensus,
        ) else {
            continue;
        };
        out.push(UtilityTriplet {
            id: format!("t{:04}", out.len()),
            user_id: h.user_id.clone(),
            item_id: r.item_id.clone(),
            review_id: r.id.clone(),
            profile: p.biography.clone(),
            sentence: tag_sentence(&r.text, &h.aspect_surface),
            aspect: h.aspect_surface.clone(),
            aspect_surface: h.aspect_surface.clone(),
            label,
        });
    }
    out
}

#[derive(Debug, Clone)]
pub struct UtilityExampleBank {
    triplets: Vec<UtilityTriplet>,
    profile_embeddings: Vec<EmbeddingVector>,
    aspect_embeddings: Vec<EmbeddingVector>,
}

impl UtilityExampleBank {
    pub fn new(
        triplets: Vec<UtilityTriplet>,
        profile_embeddings: Vec<EmbeddingVector>,
        aspect_embeddings: Vec<EmbeddingVector>,
    ) -> Result<Self, PersonalizationError> {
        if triplets.len() != profile_embeddings.len() || triplets.len() != aspect_embeddings.len() {
            return Err(PersonalizationError::MalformedQuery(
                "every triplet needs two embeddings".into(),
            ));
        }
        Ok(UtilityExampleBank {
            triplets,
            profile_embeddings,
            aspect_embeddings,
        })
    }

    pub fn build(
        triplets: Vec<UtilityTriplet>,
        gw: &Gateway,
    ) -> Result<Self, PersonalizationError> {
        let profiles: Vec<String> = triplets.iter().map(|t| t.profile.clone()).collect();
        let aspects: Vec<String> = triplets.iter().map(|t| t.aspect.clone()).collect();
        let pe = gw
            .embed_many(&profiles)
            .into_iter()
            .collect::<Result<Vec<_>, _>>()?;
        let ae = gw
            .embed_many(&aspects)
            .into_iter()
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(triplets, pe, ae)
    }

    pub fn load(path: &Path, gw: &Gateway) -> Result<Self, PersonalizationError> {
        let t = read_jsonl::<UtilityTriplet>(path)?
            .into_iter()
            .map(|(_, t)| t)
            .collect();
        Self::build(t, gw)
    }

    pub fn triplets(&self) -> &[UtilityTriplet] {
        &self.triplets
    }

    pub fn len(&self) -> usize {
        self.triplets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triplets.is_empty()
    }
}

/// Harmonic mean of a profile similarity and an aspect similarity, 0 when both
/// are 0.
pub fn retrieval_score(sim_u: f64, sim_a: f64) -> Result<f64, PersonalizationError> {
    for s in [sim_u, sim_a] {
        if !(0.0..=1.0).contains(&s) {
            return Err(PersonalizationError::DomainError(s));
        }
    }
    if sim_u + sim_a == 0.0 {
        return Ok(0.0);
    }
    Ok(2.0 * sim_u * sim_a / (sim_u + sim_a))
}

/// What retrieval needs to know about the query being answered.
#[derive(Debug, Clone)]
pub struct UtilityTarget<'a> {
    pub user_id: &'a str,
    pub item_id: &'a str,
    pub profile_embedding: &'a EmbeddingVector,
    pub aspect_embedding: &'a EmbeddingVector,
}

/// Indices of the `k` best bank triplets for the target, best first. Triplets
/// sharing the user or the item are excluded; cosines are clamped to [0, 1]
/// before scoring and ties go to the smaller triplet id.
pub fn select_utility_examples(
    target: &UtilityTarget<'_>,
    bank: &UtilityExampleBank,
    k: usize,
) -> Result<Vec<usize>, PersonalizationError> {
    let mut scored = Vec::new();
    for (i, t) in bank.triplets.iter().enumerate() {
        if t.user_id == target.user_id || t.item_id == target.item_id {
            continue;
        }
        let su = target
            .profile_embedding
            .cosine(&bank.profile_embeddings[i])
            .clamp(0.0, 1.0);
        let sa = target
            .aspect_embedding
            .cosine(&bank.aspect_embeddings[i])
            .clamp(0.0, 1.0);
        scored.push((retrieval_score(su, sa)?, i));
    }
    if scored.len() < k {
        return Err(PersonalizationError::InsufficientBank {
            eligible: scored.len(),
            needed: k,
        });
    }
    scored.sort_by(|a, b| {
        b.0.partial_cmp(&a.0)
            .unwrap_or(Ordering::Equal)
            .then_with(|| bank.triplets[a.1].id.cmp(&bank.triplets[b.1].id))
    });
    Ok(scored.into_iter().take(k).map(|(_, i)| i).collect())
}

/// The label and the model's rationale for one query.
#[derive(Debug, Clone, PartialEq)]
pub struct UtilityOutcome {
    pub label: UtilityLabel,
    pub explanation: Option<String>,
}

/// Builds the utility prompt for a query under the given mode.
pub fn utility_prompt(
    q: &UtilityQuery,
    mode: UtilityMode,
    gw: &Gateway,
    tpl: &PromptTemplate,
    bank: Option<&UtilityExampleBank>,
) -> Result<String, PersonalizationError> {
    let input = PromptInput::Utility {
        profile: q.profile.biography.clone(),
        sentence: q.sentence_text.clone(),
    };
    Ok(match mode {
        UtilityMode::ZeroShot => tpl.render_zero_shot(&input)?,
        UtilityMode::FixedCoT4 => tpl.render(&input)?,
        UtilityMode::Dynamic4 => {
            let bank = bank.ok_or(PersonalizationError::MissingBank)?;
            let pe = gw.embed(&q.profile.biography)?;
            let ae = gw.embed(&q.aspect_surface)?;
            let target = UtilityTarget {
                user_id: &q.profile.id,
                item_id: &q.item_id,
                profile_embedding: &pe,
                aspect_embedding: &ae,
            };
            let picked =
                select_utility_examples(&target, bank, PromptFamily::UtilityClassify.slot_count())?;
            let ex: Vec<Example> = picked
                .iter()
                .map(|&i| bank.triplets[i].as_example())
                .collect();
            render_prompt(tpl, &ex, &input)?
        }
    })
}

/// Asks the model for the utility of the query's aspect to its user. The
/// answer must name the queried aspect (case-folded), otherwise the call fails
/// with `MismatchedAspect`.
pub fn classify_utility(
    q: &UtilityQuery,
    mode: UtilityMode,
    gw: &Gateway,
    tpl: &PromptTemplate,
    bank: Option<&UtilityExampleBank>,
) -> Result<UtilityOutcome, PersonalizationError> {
    let prompt = utility_prompt(q, mode, gw, tpl, bank)?;
    let out = gw.generate(&GenerationRequest::new(prompt, GenParams::DETERMINISTIC))?;
    let p = parse_utility(&out)?;
    if fold_key(&p.aspect) != fold_key(&q.aspect_surface) {
        return Err(PersonalizationError::MismatchedAspect {
            expected: q.aspect_surface.clone(),
            got: p.aspect,
        });
    }
    Ok(UtilityOutcome {
        label: p.label,
        explanation: p.explanation,
    })
}

/// One line of `utilities.jsonl`. A failed classification keeps its error and
/// has no label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtilityPrediction {
    pub user_id: String,
    pub item_id: String,
    pub review_id: String,
    pub aspect: String,
    pub label: Option<UtilityLabel>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub explanation: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Default distribution of the number of topics in one profile, for 1..=5.
pub const COUNT_PROBS: [f64; 5] = [0.1, 0.3, 0.3, 0.2, 0.1];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileGenSpec {
    pub count_distribution: [f64; 5],
    pub temperature: f64,
    pub aspect_pool: Vec<String>,
}

impl ProfileGenSpec {
    pub fn new(aspect_pool: Vec<String>) -> Self {
        ProfileGenSpec {
            count_distribution: COUNT_PROBS,
            temperature: GenParams::PROFILE.temperature,
            aspect_pool,
        }
    }

    pub fn validate(&self) -> Result<(), PersonalizationError> {
        let sum: f64 = self.count_distribution.iter().sum();
        if (sum - 1.0).abs() > 1e-9 || self.count_distribution.iter().any(|p| *p < 0.0) {
            return Err(PersonalizationError::InvalidSpec(format!(
                "count probabilities sum to {sum}"
            )));
        }
        if self.aspect_pool.is_empty() {
            return Err(PersonalizationError::InvalidSpec(
                "empty aspect pool".into(),
            ));
        }
        Ok(())
    }
}

/// Draws a topic count in 1..=5 from `probs`.
pub fn sample_aspect_count_with<R: Rng + ?Sized>(probs: &[f64; 5], rng: &mut R) -> usize {
    let d = WeightedIndex::new(probs).expect("valid count distribution");
    d.sample(rng) + 1
}

/// Draws a topic count in 1..=5 from the default distribution.
pub fn sample_aspect_count<R: Rng + ?Sized>(rng: &mut R) -> usize {
    sample_aspect_count_with(&COUNT_PROBS, rng)
}

/// Samples the seed topics of one profile: a count from the spec's
/// distribution, then that many distinct pool entries, uniformly.
pub fn sample_topics<R: Rng + ?Sized>(spec: &ProfileGenSpec, rng: &mut R) -> Vec<String> {
    let n = sample_aspect_count_with(&spec.count_distribution, rng).min(spec.aspect_pool.len());
    spec.aspect_pool.choose_multiple(rng, n).cloned().collect()
}

fn profile_request(
    spec: &ProfileGenSpec,
    tpl: &PromptTemplate,
    topics: &[String],
) -> Result<GenerationRequest, PersonalizationError> {
    if tpl.example_slots.len() != PromptFamily::ProfileGenerate.slot_count() {
        return Err(PersonalizationError::InvalidSpec(
            "profile prompt needs 9 examples".into(),
        ));
    }
    let prompt = tpl.render(&PromptInput::Topics(topics.to_vec()))?;
    Ok(GenerationRequest {
        prompt,
        temperature: spec.temperature,
        max_tokens: GenParams::PROFILE.max_tokens,
    })
}

/// Generates one profile from freshly sampled topics.
pub fn generate_profile<R: Rng + ?Sized>(
    spec: &ProfileGenSpec,
    id: &str,
    domain: DomainCategory,
    gw: &Gateway,
    tpl: &PromptTemplate,
    rng: &mut R,
) -> Result<UserProfile, PersonalizationError> {
    spec.validate()?;
    let topics = sample_topics(spec, rng);
    let req = profile_request(spec, tpl, &topics)?;
    let biography = parse_profile(&gw.generate(&req)?)?;
    Ok(UserProfile {
        id: id.to_string(),
        domain,
        biography,
        seed_topics: topics,
    })
}

/// Generates `count` profiles with ids `{prefix}{n:03}`. Topics are sampled
/// up front from one seeded stream, so the result does not depend on how the
/// model calls are scheduled.
pub fn generate_profiles(
    spec: &ProfileGenSpec,
    domain: DomainCategory,
    count: usize,
    prefix: &str,
    seed: u64,
    gw: &Gateway,
    tpl: &PromptTemplate,
) -> Result<Vec<UserProfile>, PersonalizationError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let jobs: Vec<(String, Vec<String>)> = (0..count)
        .map(|n| (format!("{prefix}{n:03}"), sample_topics(spec, &mut rng)))
        .collect();
    gw.map(
        &jobs,
        |(id, topics)| -> Result<UserProfile, PersonalizationError> {
            let req = profile_request(spec, tpl, topics)?;
            let biography = parse_profile(&gw.generate(&req)?)?;
            Ok(UserProfile {
                id: id.clone(),
                domain,
                biography,
                seed_topics: topics.clone(),
            })
        },
    )
    .into_iter()
    .collect()
}

/// Splits profiles into a train+test part and a trailing dev part.
pub fn split_profiles(
    mut profiles: Vec<UserProfile>,
    dev_count: usize,
) -> (Vec<UserProfile>, Vec<UserProfile>) {
    let at = profiles.len().saturating_sub(dev_count);
    let dev = profiles.split_off(at);
    (profiles, dev)
}
