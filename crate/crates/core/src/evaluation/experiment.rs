//! Query × user ranking experiments comparing system rankings with rankings
//! computed from gold aspects and gold utilities.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};

use super::{kendall_tau, EvalError};
use crate::corpus::{Corpus, Item, Layer, Provenance, Query, UtilityLabel};
use crate::gateway::Gateway;
use crate::scoring::{
    rank, serendipity_score, similarity_matrix, surprise_score, ItemScores, SimilarityMatrix,
    Strategy, UtilityAssignment,
};
use crate::text::fold_key;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Side {
    Gt,
    Sys,
}

/// A ranking recipe: which data, which strategy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ranker {
    pub side: Side,
    pub strategy: Strategy,
}

impl fmt::Display for Ranker {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let side = match self.side {
            Side::Gt => "GT",
            Side::Sys => "Sys",
        };
        let tail = match self.strategy {
            Strategy::PlainSeren => "∘Seren",
            Strategy::PlainSur => "∘Sur",
            Strategy::StarSeren => "⋆Seren",
            Strategy::StarSur => "⋆Sur",
            Strategy::StarOnly => "⋆",
        };
        write!(f, "{side}{tail}")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Comparison {
    pub system: Ranker,
    pub reference: Ranker,
}

fn rows(reference: Strategy, seren: Strategy, sur: Strategy) -> Vec<Comparison> {
    let reference = Ranker {
        side: Side::Gt,
        strategy: reference,
    };
    [
        Ranker {
            side: Side::Sys,
            strategy: seren,
        },
        Ranker {
            side: Side::Sys,
            strategy: sur,
        },
        Ranker {
            side: Side::Gt,
            strategy: Strategy::StarOnly,
        },
    ]
    .into_iter()
    .map(|system| Comparison { system, reference })
    .collect()
}

/// Sys∘Seren, Sys∘Sur and GT⋆, each against GT∘Seren.
pub fn table_plain_rows() -> Vec<Comparison> {
    rows(
        Strategy::PlainSeren,
        Strategy::PlainSeren,
        Strategy::PlainSur,
    )
}

/// Sys⋆Seren, Sys⋆Sur and GT⋆, each against GT⋆Seren.
pub fn table_star_rows() -> Vec<Comparison> {
    rows(Strategy::StarSeren, Strategy::StarSeren, Strategy::StarSur)
}

/// Aspects per item and utilities per ⟨user, item, aspect⟩ for one side of
/// the comparison.
#[derive(Debug, Clone, Default)]
pub struct ScoreSource {
    aspects: BTreeMap<String, Vec<String>>,
    utilities: HashMap<(String, String, String), UtilityLabel>,
}

impl ScoreSource {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set_aspects(&mut self, item_id: &str, aspects: Vec<String>) {
        self.aspects.insert(item_id.to_string(), aspects);
    }

    /// Keeps the first label recorded for a key.
    pub fn set_utility(&mut self, user_id: &str, item_id: &str, aspect: &str, label: UtilityLabel) {
        self.utilities
            .entry((user_id.to_string(), item_id.to_string(), fold_key(aspect)))
            .or_insert(label);
    }

    pub fn aspects(&self, item_id: &str) -> &[String] {
        self.aspects.get(item_id).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn utility(&self, user_id: &str, item_id: &str, aspect: &str) -> Option<UtilityLabel> {
        self.utilities
            .get(&(user_id.to_string(), item_id.to_string(), fold_key(aspect)))
            .copied()
    }

    fn from_corpus(
        corpus: &Corpus,
        provenance: Provenance,
        layers: &[Layer],
    ) -> Result<Self, EvalError> {
        let mut s = ScoreSource::new();
        for item in corpus.items() {
            let a = corpus.aspects_of_item(&item.id, provenance, layers)?;
            s.set_aspects(&item.id, a.into_iter().map(|a| a.surface).collect());
        }
        Ok(s)
    }

    /// Gold aspects of the given layers with accepted HIT consensus labels.
    pub fn gold(corpus: &Corpus, layers: &[Layer]) -> Result<Self, EvalError> {
        let mut s = Self::from_corpus(corpus, Provenance::Gold, layers)?;
        for h in corpus.hits() {
            let (Some(label), Some(review)) = (
                h.consensus.filter(|_| h.accepted),
                corpus.review(&h.review_id),
            ) else {
                continue;
            };
            s.set_utility(&h.user_id, &review.item_id, &h.aspect_surface, label);
        }
        Ok(s)
    }

    /// System aspects of the corpus. Utilities are added by the caller.
    pub fn system(corpus: &Corpus) -> Result<Self, EvalError> {
        Self::from_corpus(
            corpus,
            Provenance::System,
            &[Layer::Primary, Layer::Secondary],
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub users_per_query: usize,
    /// A cell needs at least this many items with a positive reference score.
    pub min_positive: usize,
    /// Explicit users per query; otherwise users are assigned by rotation.
    #[serde(default)]
    pub assignment: Option<Vec<Vec<String>>>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            users_per_query: 10,
            min_positive: 3,
            assignment: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum CellFlag {
    InsufficientItems { positive: usize },
}

/// One ⟨query, user⟩ cell. `taus` lines up with the table rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellRecord {
    pub query: usize,
    pub user_id: String,
    pub items: usize,
    pub positive_reference: usize,
    pub flag: Option<CellFlag>,
    pub taus: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TauRow {
    pub system: String,
    pub reference: String,
    pub per_query: Vec<Option<f64>>,
    pub mean: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TauTable {
    pub columns: Vec<String>,
    pub rows: Vec<TauRow>,
    /// How per-query values are formed from cells.
    pub aggregation: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub table: TauTable,
    pub cells: Vec<CellRecord>,
    pub flagged_cells: usize,
    /// Aspects without a utility, scored as 0, per side.
    pub missing_utilities: BTreeMap<Side, usize>,
}

fn mean(v: impl IntoIterator<Item = f64>) -> Option<f64> {
    let v: Vec<f64> = v.into_iter().collect();
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

/// Users for the query at index `q`: the explicit assignment if configured,
/// otherwise `users_per_query` consecutive users in rotation.
pub fn assigned_users(cfg: &ExperimentConfig, users: &[String], q: usize) -> Vec<String> {
    if let Some(a) = &cfg.assignment {
        return a.get(q).cloned().unwrap_or_default();
    }
    let k = cfg.users_per_query.min(users.len());
    (0..k)
        .map(|j| users[(q * k + j) % users.len()].clone())
        .collect()
}

/// Serendipity and surprise for each item under one user. Returns the scores
/// and how many aspects had no utility.
pub fn cell_scores(
    source: &ScoreSource,
    user_id: &str,
    items: &[&Item],
    sims: &HashMap<String, SimilarityMatrix>,
) -> Result<(Vec<ItemScores>, usize), EvalError> {
    let mut missing = 0;
    let mut out = Vec::with_capacity(items.len());
    for item in items {
        let aspects = source.aspects(&item.id);
        let m = sims
            .get(&item.id)
            .cloned()
            .unwrap_or_else(|| SimilarityMatrix::identity(aspects.to_vec()));
        let mut u = UtilityAssignment::new();
        for a in aspects {
            let label = source.utility(user_id, &item.id, a).unwrap_or_else(|| {
                missing += 1;
                UtilityLabel::None
            });
            u.insert(a, label);
        }
        out.push(ItemScores {
            item_id: item.id.clone(),
            star: item.star,
            serendipity: serendipity_score(aspects, &u, &m)?,
            surprise: surprise_score(aspects, &m)?,
        });
    }
    Ok((out, missing))
}

fn reference_score(strategy: Strategy, s: &ItemScores) -> f64 {
    match strategy {
        Strategy::PlainSeren | Strategy::StarSeren => s.serendipity,
        Strategy::PlainSur | Strategy::StarSur => s.surprise,
        Strategy::StarOnly => s.star,
    }
}

fn similarity_cache(
    source: &ScoreSource,
    items: &[&Item],
    gw: &Gateway,
) -> Result<HashMap<String, SimilarityMatrix>, EvalError> {
    let built = gw.map(items, |it| similarity_matrix(source.aspects(&it.id), gw));
    let mut out = HashMap::new();
    for (it, m) in items.iter().zip(built) {
        out.insert(it.id.clone(), m?);
    }
    Ok(out)
}

/// Runs every ⟨query, user⟩ cell and averages the per-user τ of each row
/// within a query. All rows must share one reference ranker.
#[allow(clippy::too_many_arguments)]
pub fn run_ranking_experiment(
    corpus: &Corpus,
    queries: &[Query],
    users: &[String],
    gt: &ScoreSource,
    sys: &ScoreSource,
    comparisons: &[Comparison],
    cfg: &ExperimentConfig,
    gw: &Gateway,
) -> Result<ExperimentResult, EvalError> {
    let reference = comparisons
        .first()
        .ok_or(EvalError::EmptyInput("comparisons"))?
        .reference;
    if comparisons.iter().any(|c| c.reference != reference) {
        return Err(EvalError::SetMismatch(
            "comparisons use different references".into(),
        ));
    }
    let mut all_items: Vec<&Item> = queries
        .iter()
        .flat_map(|q| corpus.items_matching(q))
        .collect();
    all_items.sort_by(|a, b| a.id.cmp(&b.id));
    all_items.dedup_by(|a, b| a.id == b.id);
    let sims = BTreeMap::from([
        (Side::Gt, similarity_cache(gt, &all_items, gw)?),
        (Side::Sys, similarity_cache(sys, &all_items, gw)?),
    ]);

    let mut cells = Vec::new();
    let mut missing = BTreeMap::from([(Side::Gt, 0), (Side::Sys, 0)]);
    for (qi, q) in queries.iter().enumerate() {
        let items = corpus.items_matching(q);
        for user in assigned_users(cfg, users, qi) {
            let mut scores = BTreeMap::new();
            for (side, src) in [(Side::Gt, gt), (Side::Sys, sys)] {
                let (s, m) = cell_scores(src, &user, &items, &sims[&side])?;
                *missing.get_mut(&side).expect("side present") += m;
                scores.insert(side, s);
            }
            let positive = scores[&reference.side]
                .iter()
                .filter(|s| reference_score(reference.strategy, s) > 0.0)
                .count();
            let mut cell = CellRecord {
                query: qi + 1,
                user_id: user.clone(),
                items: items.len(),
                positive_reference: positive,
                flag: None,
                taus: vec![None; comparisons.len()],
            };
            if positive < cfg.min_positive {
                log::info!(
                    "query {} user {user}: {positive} positive items, skipped",
                    qi + 1
                );
                cell.flag = Some(CellFlag::InsufficientItems { positive });
            } else {
                let reference_ids = rank(reference.strategy, &scores[&reference.side]).item_ids();
                for (k, c) in comparisons.iter().enumerate() {
                    let ids = rank(c.system.strategy, &scores[&c.system.side]).item_ids();
                    cell.taus[k] = Some(kendall_tau(&ids, &reference_ids)?);
                }
            }
            cells.push(cell);
        }
    }

    let mut columns: Vec<String> = (1..=queries.len()).map(|i| format!("q{i}")).collect();
    columns.push("Mean".into());
    let rows = comparisons
        .iter()
        .enumerate()
        .map(|(k, c)| {
            let per_query: Vec<Option<f64>> = (1..=queries.len())
                .map(|q| {
                    mean(
                        cells
                            .iter()
                            .filter(|cell| cell.query == q)
                            .filter_map(|cell| cell.taus[k]),
                    )
                })
                .collect();
            TauRow {
                system: c.system.to_string(),
                reference: c.reference.to_string(),
                mean: mean(per_query.iter().flatten().copied()),
                per_query,
            }
        })
        .collect();
    let flagged_cells = cells.iter().filter(|c| c.flag.is_some()).count();
    Ok(ExperimentResult {
        table: TauTable {
            columns,
            rows,
            aggregation: "mean of per-user tau within each query".into(),
        },
        cells,
        flagged_cells,
        missing_utilities: missing,
    })
}
