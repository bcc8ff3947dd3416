//! Serendipity and surprise scores, and the re-ranking strategies built on
//! them.
//!
//! An item's serendipity sums, over its atypical aspects, the aspect's utility
//! for the user divided by the aspect's total similarity to all of the item's
//! aspects (itself included). Near-duplicate aspects therefore share credit:
//! identical aspects average out, unrelated aspects add up. Surprise is the same
//! score with every utility set to 1.

use std::cmp::Ordering;
use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::UtilityLabel;
use crate::gateway::{Gateway, GatewayError};
use crate::text::fold_key;

#[derive(Debug, Error)]
pub enum ScoringError {
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error("coverage error: {0}")]
    CoverageError(String),
    #[error("invalid similarity matrix: {0}")]
    InvalidMatrix(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Strategy {
    PlainSeren,
    PlainSur,
    StarSeren,
    StarSur,
    StarOnly,
}

impl Strategy {
    pub const ALL: [Strategy; 5] = [
        Strategy::PlainSeren,
        Strategy::PlainSur,
        Strategy::StarSeren,
        Strategy::StarSur,
        Strategy::StarOnly,
    ];

    pub fn cli_name(self) -> &'static str {
        match self {
            Strategy::PlainSeren => "plain-seren",
            Strategy::PlainSur => "plain-sur",
            Strategy::StarSeren => "star-seren",
            Strategy::StarSur => "star-sur",
            Strategy::StarOnly => "star-only",
        }
    }

    fn uses_serendipity(self) -> bool {
        matches!(self, Strategy::PlainSeren | Strategy::StarSeren)
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

impl FromStr for Strategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let k: String = s
            .chars()
            .filter(|c| c.is_alphanumeric())
            .collect::<String>()
            .to_lowercase();
        Strategy::ALL
            .into_iter()
            .find(|st| st.cli_name().replace('-', "") == k || format!("{st:?}").to_lowercase() == k)
            .ok_or_else(|| format!("unknown strategy {s:?}"))
    }
}

/// Utility per aspect of one item, keyed by case-folded surface.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct UtilityAssignment {
    values: HashMap<String, f64>,
}

impl UtilityAssignment {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, aspect: &str, label: UtilityLabel) {
        self.values.insert(fold_key(aspect), label.numeric());
    }

    /// Every aspect at utility 1.
    pub fn all_ones<S: AsRef<str>>(aspects: &[S]) -> Self {
        let mut u = Self::new();
        for a in aspects {
            u.insert(a.as_ref(), UtilityLabel::High);
        }
        u
    }

    pub fn get(&self, aspect: &str) -> Option<f64> {
        self.values.get(&fold_key(aspect)).copied()
    }
}

/// Pairwise aspect similarities for one item, in [0, 1] with unit diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMatrix {
    aspects: Vec<String>,
    values: Vec<f64>,
}

impl SimilarityMatrix {
    /// Checks shape, symmetry, unit diagonal and range.
    pub fn new(aspects: Vec<String>, values: Vec<f64>) -> Result<Self, ScoringError> {
        let n = aspects.len();
        if values.len() != n * n {
            return Err(ScoringError::InvalidMatrix(format!(
                "{} values for {n} aspects",
                values.len()
            )));
        }
        for i in 0..n {
            if values[i * n + i] != 1.0 {
                return Err(ScoringError::InvalidMatrix(format!(
                    "diagonal entry {i} is {}",
                    values[i * n + i]
                )));
            }
            for j in 0..n {
                let v = values[i * n + j];
                if !(0.0..=1.0).contains(&v) || v != values[j * n + i] {
                    return Err(ScoringError::InvalidMatrix(format!(
                        "entry ({i},{j}) = {v}"
                    )));
                }
            }
        }
        Ok(SimilarityMatrix { aspects, values })
    }

    pub fn identity(aspects: Vec<String>) -> Self {
        let n = aspects.len();
        let values = (0..n * n)
            .map(|k| if k / n == k % n { 1.0 } else { 0.0 })
            .collect();
        SimilarityMatrix { aspects, values }
    }

    /// All entries 1, as if every aspect were the same.
    pub fn ones(aspects: Vec<String>) -> Self {
        let n = aspects.len();
        SimilarityMatrix {
            aspects,
            values: vec![1.0; n * n],
        }
    }

    pub fn aspects(&self) -> &[String] {
        &self.aspects
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.aspects.len() + j]
    }

    fn row_sum(&self, i: usize) -> f64 {
        let n = self.aspects.len();
        self.values[i * n..(i + 1) * n].iter().sum()
    }
}

/// 1 for case-folded equal texts, otherwise the embedding cosine clamped to
/// [0, 1].
pub fn aspect_similarity(a: &str, b: &str, gw: &Gateway) -> Result<f64, ScoringError> {
    if fold_key(a) == fold_key(b) {
        return Ok(1.0);
    }
    let (ea, eb) = (gw.embed(a)?, gw.embed(b)?);
    Ok(ea.cosine(&eb).clamp(0.0, 1.0))
}

/// Builds the similarity matrix over an item's aspects.
pub fn similarity_matrix(
    aspects: &[String],
    gw: &Gateway,
) -> Result<SimilarityMatrix, ScoringError> {
    let n = aspects.len();
    let mut values = vec![1.0; n * n];
    for i in 0..n {
        for j in i + 1..n {
            let s = aspect_similarity(&aspects[i], &aspects[j], gw)?;
            values[i * n + j] = s;
            values[j * n + i] = s;
        }
    }
    SimilarityMatrix::new(aspects.to_vec(), values)
}

fn check_cover(aspects: &[String], sims: &SimilarityMatrix) -> Result<(), ScoringError> {
    if sims.aspects.len() != aspects.len() || sims.aspects.iter().zip(aspects).any(|(a, b)| a != b)
    {
        return Err(ScoringError::CoverageError(
            "similarity matrix is over different aspects".into(),
        ));
    }
    Ok(())
}

/// Σ over aspects of utility / total similarity. 0 for no aspects.
pub fn serendipity_score(
    aspects: &[String],
    utilities: &UtilityAssignment,
    sims: &SimilarityMatrix,
) -> Result<f64, ScoringError> {
    check_cover(aspects, sims)?;
    let mut total = 0.0;
    for (i, a) in aspects.iter().enumerate() {
        let u = utilities
            .get(a)
            .ok_or_else(|| ScoringError::CoverageError(format!("no utility for aspect {a:?}")))?;
        total += u / sims.row_sum(i);
    }
    Ok(total)
}

/// Serendipity with every utility at 1.
pub fn surprise_score(aspects: &[String], sims: &SimilarityMatrix) -> Result<f64, ScoringError> {
    serendipity_score(aspects, &UtilityAssignment::all_ones(aspects), sims)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredItem {
    pub item_id: String,
    pub score: f64,
    pub star: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedList {
    pub strategy: Strategy,
    pub ranking: Vec<ScoredItem>,
}

impl RankedList {
    pub fn item_ids(&self) -> Vec<String> {
        self.ranking.iter().map(|s| s.item_id.clone()).collect()
    }
}

fn plain_order(a: &ScoredItem, b: &ScoredItem) -> Ordering {
    b.score
        .partial_cmp(&a.score)
        .unwrap_or(Ordering::Equal)
        .then_with(|| b.star.partial_cmp(&a.star).unwrap_or(Ordering::Equal))
        .then_with(|| a.item_id.cmp(&b.item_id))
}

/// Star bucket index: 0 for [4,5], 1 for [3,4), 2 for [2,3), 3 for everything
/// below 2.
pub fn star_bucket(star: f64) -> usize {
    if star >= 4.0 {
        0
    } else if star >= 3.0 {
        1
    } else if star >= 2.0 {
        2
    } else {
        3
    }
}

/// Descending score; ties by descending star, then item id.
pub fn rank_plain(items: &[ScoredItem], strategy: Strategy) -> RankedList {
    let mut v = items.to_vec();
    v.sort_by(plain_order);
    RankedList {
        strategy,
        ranking: v,
    }
}

/// Groups items into star buckets, highest first, and orders each bucket as
/// [`rank_plain`] would.
pub fn rank_star_partitioned(items: &[ScoredItem], strategy: Strategy) -> RankedList {
    let mut v = items.to_vec();
    v.sort_by(|a, b| {
        star_bucket(a.star)
            .cmp(&star_bucket(b.star))
            .then_with(|| plain_order(a, b))
    });
    RankedList {
        strategy,
        ranking: v,
    }
}

/// One line of `rankings.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankingRecord {
    pub query: String,
    pub user_id: String,
    pub strategy: Strategy,
    pub ranking: Vec<ScoredItem>,
    pub run_id: String,
}

/// Both scores of one item for one user.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemScores {
    pub item_id: String,
    pub star: f64,
    pub serendipity: f64,
    pub surprise: f64,
}

/// Ranks items under a strategy. The star-only baseline orders by star alone.
pub fn rank(strategy: Strategy, items: &[ItemScores]) -> RankedList {
    let scored: Vec<ScoredItem> = items
        .iter()
        .map(|i| ScoredItem {
            item_id: i.item_id.clone(),
            score: match strategy {
                Strategy::StarOnly => i.star,
                s if s.uses_serendipity() => i.serendipity,
                _ => i.surprise,
            },
            star: i.star,
        })
        .collect();
    match strategy {
        Strategy::PlainSeren | Strategy::PlainSur | Strategy::StarOnly => {
            rank_plain(&scored, strategy)
        }
        Strategy::StarSeren | Strategy::StarSur => rank_star_partitioned(&scored, strategy),
    }
}
