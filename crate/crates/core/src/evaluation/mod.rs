//! Metrics for every stage: span matching for extraction, cost-weighted
//! agreement for utilities, Kendall τ for rankings and crowd agreement for
//! HITs. The ranking experiment runner and report writer live in submodules.

mod experiment;
mod report;

pub use experiment::{
    assigned_users, cell_scores, run_ranking_experiment, table_plain_rows, table_star_rows,
    CellFlag, CellRecord, Comparison, ExperimentConfig, ExperimentResult, Ranker, ScoreSource,
    Side, TauRow, TauTable,
};
pub use report::{
    compare_rankings, extraction_report, utility_report, DomainReport, EvalReport,
    ExtractionReport, RankingComparison, UtilityReport,
};

use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{HitRecord, UtilityLabel};
use crate::gateway::GatewayError;
use crate::scoring::ScoringError;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("empty input: {0}")]
    EmptyInput(&'static str),
    #[error("empty phrase in span set")]
    EmptyPhrase,
    #[error("rankings are over different item sets: {0}")]
    SetMismatch(String),
    #[error("HIT for user {user_id} review {review_id} has {count} labels, expected 3")]
    MalformedHit {
        user_id: String,
        review_id: String,
        count: usize,
    },
    #[error("invalid cost matrix: {0}")]
    InvalidMatrix(String),
    #[error(transparent)]
    Corpus(#[from] crate::corpus::CorpusError),
    #[error(transparent)]
    Scoring(#[from] ScoringError),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error("report output: {0}")]
    Output(String),
}

/// Case-folds, deletes punctuation, then splits on whitespace.
pub fn tokenize(phrase: &str) -> Vec<String> {
    let stripped: String = phrase
        .chars()
        .filter(|c| !c.is_ascii_punctuation() && !is_unicode_punct(*c))
        .collect();
    stripped.split_whitespace().map(str::to_lowercase).collect()
}

fn is_unicode_punct(c: char) -> bool {
    matches!(c, '“' | '”' | '‘' | '’' | '–' | '—' | '…')
}

/// Phrases as token sequences. Empty phrases are rejected.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SpanSet {
    phrases: Vec<Vec<String>>,
}

impl SpanSet {
    pub fn new<S: AsRef<str>>(phrases: impl IntoIterator<Item = S>) -> Result<Self, EvalError> {
        Self::from_tokens(phrases.into_iter().map(|p| tokenize(p.as_ref())))
    }

    pub fn from_tokens(phrases: impl IntoIterator<Item = Vec<String>>) -> Result<Self, EvalError> {
        let phrases: Vec<Vec<String>> = phrases.into_iter().collect();
        if phrases.iter().any(Vec::is_empty) {
            return Err(EvalError::EmptyPhrase);
        }
        Ok(SpanSet { phrases })
    }

    pub fn phrases(&self) -> &[Vec<String>] {
        &self.phrases
    }

    pub fn len(&self) -> usize {
        self.phrases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.phrases.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl MatchScores {
    pub const PERFECT: MatchScores = MatchScores {
        precision: 1.0,
        recall: 1.0,
        f1: 1.0,
    };

    pub fn from_pr(precision: f64, recall: f64) -> Self {
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        MatchScores {
            precision,
            recall,
            f1,
        }
    }
}

fn ratio(num: f64, den: f64) -> f64 {
    if den > 0.0 {
        num / den
    } else {
        0.0
    }
}

/// Exact-match tallies, summable across reviews.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ExactCounts {
    pub correct: usize,
    pub extracted: usize,
    pub gold: usize,
}

impl ExactCounts {
    pub fn add(&mut self, o: ExactCounts) {
        self.correct += o.correct;
        self.extracted += o.extracted;
        self.gold += o.gold;
    }

    pub fn scores(&self) -> MatchScores {
        if self.extracted == 0 && self.gold == 0 {
            return MatchScores::PERFECT;
        }
        MatchScores::from_pr(
            ratio(self.correct as f64, self.extracted as f64),
            ratio(self.correct as f64, self.gold as f64),
        )
    }
}

/// Counts extracted phrases equal to a gold phrase, pairing each at most once.
pub fn exact_counts(gp: &SpanSet, ep: &SpanSet) -> ExactCounts {
    let mut pool: HashMap<&[String], usize> = HashMap::new();
    for g in &gp.phrases {
        *pool.entry(g.as_slice()).or_default() += 1;
    }
    let mut correct = 0;
    for e in &ep.phrases {
        if let Some(n) = pool.get_mut(e.as_slice()).filter(|n| **n > 0) {
            *n -= 1;
            correct += 1;
        }
    }
    ExactCounts {
        correct,
        extracted: ep.len(),
        gold: gp.len(),
    }
}

pub fn exact_match(gp: &SpanSet, ep: &SpanSet) -> MatchScores {
    exact_counts(gp, ep).scores()
}

/// Partial-match accumulators, summable across reviews.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PartialCounts {
    pub tp_e: f64,
    pub tp_g: f64,
    pub fp: f64,
    pub fn_: f64,
}

impl PartialCounts {
    pub fn add(&mut self, o: PartialCounts) {
        self.tp_e += o.tp_e;
        self.tp_g += o.tp_g;
        self.fp += o.fp;
        self.fn_ += o.fn_;
    }

    pub fn scores(&self) -> MatchScores {
        if self.tp_e + self.tp_g + self.fp + self.fn_ == 0.0 {
            return MatchScores::PERFECT;
        }
        MatchScores::from_pr(
            ratio(self.tp_e, self.tp_e + self.fp),
            ratio(self.tp_g, self.tp_g + self.fn_),
        )
    }
}

fn counts(tokens: &[String]) -> HashMap<&str, usize> {
    let mut m = HashMap::new();
    for t in tokens {
        *m.entry(t.as_str()).or_default() += 1;
    }
    m
}

/// Multiset intersection size.
fn overlap(a: &[String], b: &[String]) -> usize {
    let cb = counts(b);
    counts(a)
        .iter()
        .map(|(t, n)| (*n).min(cb.get(t).copied().unwrap_or(0)))
        .sum()
}

fn jaccard(a: &[String], b: &[String]) -> f64 {
    let inter = overlap(a, b);
    let union = a.len() + b.len() - inter;
    inter as f64 / union as f64
}

/// Greedy partial matching. Each gold phrase, in order, binds the remaining
/// extracted phrase of highest Jaccard (earliest on ties), which is then used
/// up. Extracted phrases left over count as full false positives.
pub fn partial_counts(gp: &SpanSet, ep: &SpanSet) -> PartialCounts {
    let mut remaining: Vec<&Vec<String>> = ep.phrases.iter().collect();
    let mut c = PartialCounts::default();
    for g in &gp.phrases {
        if remaining.is_empty() {
            c.fn_ += 1.0;
            continue;
        }
        let mut best = 0;
        let mut best_j = jaccard(remaining[0], g);
        for (k, e) in remaining.iter().enumerate().skip(1) {
            let j = jaccard(e, g);
            if j > best_j {
                best = k;
                best_j = j;
            }
        }
        let e = remaining.remove(best);
        let inter = overlap(e, g) as f64;
        let (le, lg) = (e.len() as f64, g.len() as f64);
        c.tp_e += inter / le;
        c.tp_g += inter / lg;
        c.fp += (le - inter) / le;
        c.fn_ += (lg - inter) / lg;
    }
    c.fp += remaining.len() as f64;
    c
}

pub fn partial_match(gp: &SpanSet, ep: &SpanSet) -> MatchScores {
    partial_counts(gp, ep).scores()
}

/// Symmetric misclassification costs over the four utility labels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostMatrix {
    costs: [[f64; 4]; 4],
}

impl CostMatrix {
    pub fn new(costs: [[f64; 4]; 4]) -> Result<Self, EvalError> {
        for (i, row) in costs.iter().enumerate() {
            if row[i] != 0.0 {
                return Err(EvalError::InvalidMatrix(format!("nonzero diagonal at {i}")));
            }
            for (j, &c) in row.iter().enumerate() {
                if c != costs[j][i] || !(0.0..=1.0).contains(&c) {
                    return Err(EvalError::InvalidMatrix(format!("entry ({i},{j})")));
                }
            }
        }
        Ok(CostMatrix { costs })
    }

    /// 0 for exact, 0.5 for adjacent labels, 1 otherwise.
    pub fn four_way() -> Self {
        let mut costs = [[1.0; 4]; 4];
        for (i, row) in costs.iter_mut().enumerate() {
            for (j, c) in row.iter_mut().enumerate() {
                *c = match i.abs_diff(j) {
                    0 => 0.0,
                    1 => 0.5,
                    _ => 1.0,
                };
            }
        }
        CostMatrix { costs }
    }

    /// {H,M} against {L,N}: free within a group except M/L at 0.25; crossing
    /// costs 1.
    pub fn two_way() -> Self {
        use UtilityLabel::*;
        let mut m = [[0.0; 4]; 4];
        let mut set = |a: UtilityLabel, b: UtilityLabel, v: f64| {
            m[a.ordinal()][b.ordinal()] = v;
            m[b.ordinal()][a.ordinal()] = v;
        };
        set(Medium, Low, 0.25);
        set(High, Low, 1.0);
        set(High, None, 1.0);
        set(Medium, None, 1.0);
        CostMatrix { costs: m }
    }

    pub fn cost(&self, gold: UtilityLabel, predicted: UtilityLabel) -> f64 {
        self.costs[gold.ordinal()][predicted.ordinal()]
    }
}

/// 1 minus the mean cost.
pub fn utility_accuracy(
    pairs: &[(UtilityLabel, UtilityLabel)],
    matrix: &CostMatrix,
) -> Result<f64, EvalError> {
    if pairs.is_empty() {
        return Err(EvalError::EmptyInput("utility pairs"));
    }
    let total: f64 = pairs.iter().map(|(g, p)| matrix.cost(*g, *p)).sum();
    Ok(1.0 - total / pairs.len() as f64)
}

fn is_positive(l: UtilityLabel) -> bool {
    matches!(l, UtilityLabel::High | UtilityLabel::Medium)
}

/// P/R/F1 of the positive class after collapsing High and Medium to positive.
pub fn binary_prf(pairs: &[(UtilityLabel, UtilityLabel)]) -> Result<MatchScores, EvalError> {
    if pairs.is_empty() {
        return Err(EvalError::EmptyInput("utility pairs"));
    }
    let (mut tp, mut fp, mut fn_) = (0usize, 0usize, 0usize);
    for (g, p) in pairs {
        match (is_positive(*g), is_positive(*p)) {
            (true, true) => tp += 1,
            (false, true) => fp += 1,
            (true, false) => fn_ += 1,
            (false, false) => {}
        }
    }
    Ok(MatchScores::from_pr(
        ratio(tp as f64, (tp + fp) as f64),
        ratio(tp as f64, (tp + fn_) as f64),
    ))
}

/// Kendall τ-a between two total orders over the same items. Fewer than two
/// items count as perfect agreement.
pub fn kendall_tau<S: AsRef<str>>(r1: &[S], r2: &[S]) -> Result<f64, EvalError> {
    let pos: HashMap<&str, usize> = r2
        .iter()
        .enumerate()
        .map(|(i, s)| (s.as_ref(), i))
        .collect();
    let distinct: HashSet<&str> = r1.iter().map(AsRef::as_ref).collect();
    if r1.len() != r2.len() || pos.len() != r2.len() || distinct.len() != r1.len() {
        return Err(EvalError::SetMismatch(format!(
            "{} vs {} entries or duplicates",
            r1.len(),
            r2.len()
        )));
    }
    let mapped: Vec<usize> = r1
        .iter()
        .map(|s| {
            pos.get(s.as_ref())
                .copied()
                .ok_or_else(|| EvalError::SetMismatch(format!("{:?} missing", s.as_ref())))
        })
        .collect::<Result<_, _>>()?;
    let n = mapped.len();
    if n < 2 {
        return Ok(1.0);
    }
    let mut score: i64 = 0;
    for i in 0..n {
        for j in i + 1..n {
            score += if mapped[i] < mapped[j] { 1 } else { -1 };
        }
    }
    Ok(score as f64 / (n * (n - 1) / 2) as f64)
}

/// Numbers assigned to labels for agreement statistics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabelEncoding {
    pub values: [f64; 4],
}

impl LabelEncoding {
    /// None=0, Low=1, Medium=2, High=3.
    pub const ORDINAL: LabelEncoding = LabelEncoding {
        values: [0.0, 1.0, 2.0, 3.0],
    };
    /// The utility values themselves.
    pub const UTILITY: LabelEncoding = LabelEncoding {
        values: [0.0, 0.5, 0.75, 1.0],
    };

    pub fn encode(&self, l: UtilityLabel) -> f64 {
        self.values[l.ordinal()]
    }
}

impl Default for LabelEncoding {
    fn default() -> Self {
        Self::ORDINAL
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgreementStats {
    pub mean_sigma: f64,
    pub median_sigma: f64,
    pub max_sigma: f64,
}

/// Population standard deviation of one HIT's labels.
pub fn hit_sigma(labels: &[UtilityLabel], enc: &LabelEncoding) -> f64 {
    let k = labels.len() as f64;
    let mean = labels.iter().map(|l| enc.encode(*l)).sum::<f64>() / k;
    (labels
        .iter()
        .map(|l| (enc.encode(*l) - mean).powi(2))
        .sum::<f64>()
        / k)
        .sqrt()
}

pub fn agreement_stats(
    hits: &[HitRecord],
    enc: &LabelEncoding,
) -> Result<AgreementStats, EvalError> {
    if hits.is_empty() {
        return Err(EvalError::EmptyInput("HITs"));
    }
    let mut sigmas = Vec::with_capacity(hits.len());
    for h in hits {
        if h.worker_labels.len() != 3 {
            return Err(EvalError::MalformedHit {
                user_id: h.user_id.clone(),
                review_id: h.review_id.clone(),
                count: h.worker_labels.len(),
            });
        }
        sigmas.push(hit_sigma(&h.worker_labels, enc));
    }
    sigmas.sort_by(f64::total_cmp);
    let n = sigmas.len();
    let median = if n % 2 == 1 {
        sigmas[n / 2]
    } else {
        (sigmas[n / 2 - 1] + sigmas[n / 2]) / 2.0
    };
    Ok(AgreementStats {
        mean_sigma: sigmas.iter().sum::<f64>() / n as f64,
        median_sigma: median,
        max_sigma: sigmas[n - 1],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use UtilityLabel::{High as H, Low as L, Medium as M, None as N};

    fn spans(p: &[&str]) -> SpanSet {
        SpanSet::new(p.iter().copied()).unwrap()
    }

    fn close(a: MatchScores, p: f64, r: f64, f: f64) -> bool {
        (a.precision - p).abs() < 1e-12 && (a.recall - r).abs() < 1e-12 && (a.f1 - f).abs() < 1e-12
    }

    #[test]
    fn tokenizer() {
        assert_eq!(tokenize("  Kid's Play-Area, "), vec!["kids", "playarea"]);
        assert!(matches!(
            SpanSet::new(["ok", "!!"]),
            Err(EvalError::EmptyPhrase)
        ));
    }

    #[test]
    fn exact_cases() {
        assert_eq!(
            exact_match(&spans(&["pool table"]), &spans(&["Pool table."])),
            MatchScores::PERFECT
        );
        assert!(close(
            exact_match(&spans(&["garden", "art"]), &spans(&["garden"])),
            1.0,
            0.5,
            2.0 / 3.0
        ));
        assert!(close(
            exact_match(&spans(&["x"]), &spans(&["y"])),
            0.0,
            0.0,
            0.0
        ));
        assert_eq!(exact_match(&spans(&[]), &spans(&[])), MatchScores::PERFECT);
        assert!(close(
            exact_match(&spans(&["x"]), &spans(&[])),
            0.0,
            0.0,
            0.0
        ));
        // duplicates pair once
        assert!(close(
            exact_match(&spans(&["x"]), &spans(&["x", "x"])),
            0.5,
            1.0,
            2.0 / 3.0
        ));
    }

    #[test]
    fn partial_goose_creek() {
        let s = partial_match(&spans(&["goose creek park"]), &spans(&["creek park"]));
        assert!(close(s, 1.0, 2.0 / 3.0, 0.8));
    }

    #[test]
    fn partial_empty_extractions() {
        let c = partial_counts(&spans(&["a b", "c"]), &spans(&[]));
        assert_eq!(
            c,
            PartialCounts {
                tp_e: 0.0,
                tp_g: 0.0,
                fp: 0.0,
                fn_: 2.0
            }
        );
        assert!(close(c.scores(), 0.0, 0.0, 0.0));
        assert_eq!(
            partial_match(&spans(&["a"]), &spans(&["a"])),
            MatchScores::PERFECT
        );
    }

    #[test]
    fn partial_leftovers_and_ties() {
        // "b c" and "c d" tie for "c"; the earlier one binds.
        let c = partial_counts(&spans(&["c"]), &spans(&["b c", "c d", "z"]));
        assert_eq!(
            c,
            PartialCounts {
                tp_e: 0.5,
                tp_g: 1.0,
                fp: 2.5,
                fn_: 0.0
            }
        );
    }

    #[test]
    fn greedy_order_can_cost_recall() {
        let gp = spans(&["a b", "a"]);
        let ep = spans(&["a"]);
        assert_eq!(exact_match(&gp, &ep).recall, 0.5);
        assert_eq!(partial_match(&gp, &ep).recall, 0.25);
    }

    #[test]
    fn summed_counts() {
        let mut c = partial_counts(&spans(&["a"]), &spans(&["a"]));
        c.add(partial_counts(&spans(&["b"]), &spans(&[])));
        assert!(close(c.scores(), 1.0, 0.5, 2.0 / 3.0));
    }

    #[test]
    fn cost_matrices() {
        let p = [(H, H), (H, M), (H, N)];
        assert_eq!(utility_accuracy(&p, &CostMatrix::four_way()).unwrap(), 0.5);
        assert_eq!(
            utility_accuracy(&[(M, L)], &CostMatrix::two_way()).unwrap(),
            0.75
        );
        assert_eq!(
            utility_accuracy(&[(L, N), (H, M)], &CostMatrix::two_way()).unwrap(),
            1.0
        );
        assert!(utility_accuracy(&[], &CostMatrix::four_way()).is_err());
        for m in [CostMatrix::four_way(), CostMatrix::two_way()] {
            assert!(CostMatrix::new(m.costs).is_ok());
        }
        assert!(CostMatrix::new([[0.5; 4]; 4]).is_err());
    }

    #[test]
    fn binary_cases() {
        assert_eq!(binary_prf(&[(H, M)]).unwrap(), MatchScores::PERFECT);
        assert_eq!(binary_prf(&[(L, H)]).unwrap().precision, 0.0);
        let s = binary_prf(&[(H, H), (M, N), (N, L), (L, M)]).unwrap();
        assert!(close(s, 0.5, 0.5, 0.5));
    }

    #[test]
    fn tau_cases() {
        assert_eq!(
            kendall_tau(&["1", "2", "3"], &["1", "2", "3"]).unwrap(),
            1.0
        );
        assert_eq!(
            kendall_tau(&["1", "2", "3"], &["3", "2", "1"]).unwrap(),
            -1.0
        );
        assert_eq!(
            kendall_tau(&["1", "2", "3"], &["1", "3", "2"]).unwrap(),
            1.0 / 3.0
        );
        assert!(matches!(
            kendall_tau(&["1", "2"], &["1", "3"]),
            Err(EvalError::SetMismatch(_))
        ));
        assert!(kendall_tau(&["1", "1"], &["1", "2"]).is_err());
        assert_eq!(kendall_tau::<&str>(&[], &[]).unwrap(), 1.0);
    }

    #[test]
    fn sigma_cases() {
        assert_eq!(hit_sigma(&[M, M, M], &LabelEncoding::ORDINAL), 0.0);
        assert!((hit_sigma(&[H, N, N], &LabelEncoding::ORDINAL) - 2f64.sqrt()).abs() < 1e-12);
        let hits = vec![
            HitRecord::new("u", "r1", "a", [M, M, M]),
            HitRecord::new("u", "r2", "a", [H, N, N]),
            HitRecord::new("u", "r3", "a", [H, H, M]),
        ];
        let s = agreement_stats(&hits, &LabelEncoding::ORDINAL).unwrap();
        assert!((s.median_sigma - (2f64 / 9.0).sqrt()).abs() < 1e-12);
        assert!((s.max_sigma - 2f64.sqrt()).abs() < 1e-12);
        let mut bad = hits[0].clone();
        bad.worker_labels.pop();
        assert!(matches!(
            agreement_stats(&[bad], &LabelEncoding::ORDINAL),
            Err(EvalError::MalformedHit { .. })
        ));
    }

    fn label() -> impl Strategy<Value = UtilityLabel> {
        (0usize..4).prop_map(|i| UtilityLabel::ALL[i])
    }

    fn span_set() -> impl Strategy<Value = SpanSet> {
        prop::collection::vec(
            prop::collection::vec(prop::sample::select(vec!["a", "b", "c", "d"]), 1..4),
            0..4,
        )
        .prop_map(|v| {
            SpanSet::from_tokens(
                v.into_iter()
                    .map(|p| p.into_iter().map(String::from).collect()),
            )
            .unwrap()
        })
    }

    proptest! {
        #[test]
        fn tau_self_and_reverse(n in 2usize..12) {
            let r: Vec<String> = (0..n).map(|i| format!("i{i}")).collect();
            let rev: Vec<String> = r.iter().rev().cloned().collect();
            prop_assert_eq!(kendall_tau(&r, &r).unwrap(), 1.0);
            prop_assert_eq!(kendall_tau(&r, &rev).unwrap(), -1.0);
        }

        #[test]
        fn sigma_permutation_invariant(a in label(), b in label(), c in label()) {
            let e = LabelEncoding::ORDINAL;
            let s = hit_sigma(&[a, b, c], &e);
            prop_assert!((s - hit_sigma(&[c, a, b], &e)).abs() < 1e-12);
            prop_assert!((s - hit_sigma(&[b, c, a], &e)).abs() < 1e-12);
        }

        #[test]
        fn accuracy_one_iff_exact(pairs in prop::collection::vec((label(), label()), 1..10)) {
            let acc = utility_accuracy(&pairs, &CostMatrix::four_way()).unwrap();
            prop_assert_eq!(acc == 1.0, pairs.iter().all(|(g, p)| g == p));
        }

        #[test]
        fn scores_in_unit_range(gp in span_set(), ep in span_set()) {
            for s in [exact_match(&gp, &ep), partial_match(&gp, &ep)] {
                for v in [s.precision, s.recall, s.f1] {
                    prop_assert!((0.0..=1.0).contains(&v));
                }
            }
        }
    }
}
