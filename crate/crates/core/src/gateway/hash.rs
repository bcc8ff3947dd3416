//! Seeded-hash backend: stable pseudo-embeddings and grammar-conformant
//! pseudo-completions for any prompt.

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::prompt::markers;
use super::{EmbedBackend, EmbeddingVector, GatewayError, GenerationRequest, TextGenBackend};
use crate::text::split_sentences;

const DIM: usize = 256;

/// Deterministic backend whose outputs depend only on the input text and seed.
///
/// Embeddings are feature-hashed word unigrams and character trigrams plus a
/// constant bias term, so cosine similarity always lies in (0, 1]. Completions
/// follow the output grammar of whichever prompt family is detected.
#[derive(Debug, Clone)]
pub struct HashBackend {
    seed: u64,
}

impl HashBackend {
    pub fn new(seed: u64) -> Self {
        HashBackend { seed }
    }

    fn rng_for(&self, text: &str) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(fnv1a(text.as_bytes(), self.seed))
    }

    fn vector(&self, text: &str) -> Vec<f64> {
        let mut v = vec![0.0; DIM];
        v[0] = 1.0;
        let lower = text.to_lowercase();
        for w in lower
            .split(|c: char| !c.is_alphanumeric())
            .filter(|w| !w.is_empty())
        {
            v[1 + bucket(w.as_bytes(), self.seed)] += 1.0;
            let padded: Vec<char> = format!(" {w} ").chars().collect();
            for tri in padded.windows(3) {
                let s: String = tri.iter().collect();
                v[1 + bucket(s.as_bytes(), self.seed ^ 0x9e37_79b9)] += 0.5;
            }
        }
        // the exact string, so distinct inputs never collapse to one vector
        v[1 + bucket(text.as_bytes(), self.seed ^ 0x5bd1_e995)] += 0.25;
        v
    }
}

fn fnv1a(bytes: &[u8], seed: u64) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325 ^ seed;
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

fn bucket(bytes: &[u8], seed: u64) -> usize {
    (fnv1a(bytes, seed) % (DIM as u64 - 1)) as usize
}

impl EmbedBackend for HashBackend {
    fn id(&self) -> String {
        format!("hash:{}", self.seed)
    }

    fn embed(&self, text: &str) -> Result<EmbeddingVector, GatewayError> {
        if text.trim().is_empty() {
            return Err(GatewayError::EmptyText);
        }
        EmbeddingVector::normalized(self.vector(text))
    }
}

impl TextGenBackend for HashBackend {
    fn id(&self) -> String {
        format!("hash:{}", self.seed)
    }

    fn generate(&self, req: &GenerationRequest) -> Result<String, GatewayError> {
        let p = &req.prompt;
        let mut rng = self.rng_for(p);
        let out = if let Some(s) = after_last(p, markers::STEP2_QUERY) {
            step2(s, &mut rng)
        } else if let Some(r) = after_last(p, markers::STEP1_QUERY) {
            step1(r, &mut rng)
        } else if p.contains(markers::UTILITY_QUERY_TAIL) {
            utility(p, &mut rng)
        } else if let Some(t) = after_last(p, markers::PROFILE_QUERY) {
            profile(t, &mut rng)
        } else {
            babble(&mut rng)
        };
        Ok(out)
    }
}

fn after_last<'a>(hay: &'a str, marker: &str) -> Option<&'a str> {
    hay.rfind(marker).map(|i| hay[i + marker.len()..].trim())
}

fn words(s: &str) -> Vec<String> {
    s.split_whitespace()
        .map(|w| w.trim_matches(|c: char| !c.is_alphanumeric()).to_string())
        .filter(|w| w.len() >= 4)
        .collect()
}

fn step1(review: &str, rng: &mut ChaCha8Rng) -> String {
    let sents = split_sentences(review);
    let mut kept: Vec<&str> = sents
        .iter()
        .filter(|_| rng.random_bool(0.8))
        .map(String::as_str)
        .collect();
    if kept.is_empty() {
        kept.push(
            sents
                .first()
                .map(String::as_str)
                .unwrap_or("The place is open."),
        );
    }
    kept.join(" ")
}

fn step2(sentence: &str, rng: &mut ChaCha8Rng) -> String {
    let ws = words(sentence);
    if ws.is_empty() || !rng.random_bool(0.4) {
        return "Classification: <neg> Atypical Aspects: <None>".to_string();
    }
    let n = rng.random_range(1..=ws.len().min(2));
    let picked: Vec<String> = ws
        .choose_multiple(rng, n)
        .map(|w| w.to_lowercase())
        .collect();
    format!(
        "Classification: <pos> Atypical Aspects: {}",
        picked.join(", ")
    )
}

fn utility(prompt: &str, rng: &mut ChaCha8Rng) -> String {
    let aspect = prompt
        .rfind("<ata>")
        .and_then(|i| {
            let rest = &prompt[i + 5..];
            rest.find("</ata>").map(|j| rest[..j].trim().to_string())
        })
        .unwrap_or_else(|| "aspect".to_string());
    let label = ["None", "Low", "Medium", "High"]
        .choose(rng)
        .copied()
        .unwrap_or("None");
    format!("A' = [(\"{aspect}\", \"{label}\")]\nExplanation: {aspect}: assigned {label} by the hash backend.")
}

fn profile(topics: &str, rng: &mut ChaCha8Rng) -> String {
    let topics = topics
        .trim_end_matches('.')
        .trim()
        .trim_start_matches('<')
        .trim_end_matches('>');
    let name = ["Avery", "Jordan", "Riley", "Morgan", "Casey", "Quinn"]
        .choose(rng)
        .copied()
        .unwrap_or("Avery");
    let city = ["Tampa", "Reno", "Boise", "Tucson", "Nashville"]
        .choose(rng)
        .copied()
        .unwrap_or("Tampa");
    format!(
        "Let's think step by step, each topic becomes a hobby.\nSo, a good biography would be: {name} lives in {city} and spends free time on {topics}."
    )
}

fn babble(rng: &mut ChaCha8Rng) -> String {
    const W: [&str; 8] = [
        "alpha", "bravo", "charlie", "delta", "echo", "foxtrot", "golf", "hotel",
    ];
    (0..8)
        .map(|_| *W.choose(rng).unwrap_or(&"alpha"))
        .collect::<Vec<_>>()
        .join(" ")
}
