use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{
    binary_prf, exact_counts, kendall_tau, partial_counts, utility_accuracy, AgreementStats,
    CostMatrix, EvalError, ExactCounts, ExperimentResult, MatchScores, PartialCounts, SpanSet,
};
use crate::corpus::{AspectForm, Corpus, Layer, Provenance, UtilityLabel};
use crate::scoring::RankingRecord;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtractionReport {
    pub reviews: usize,
    pub exact: MatchScores,
    pub partial: MatchScores,
    pub exact_counts: ExactCounts,
    pub partial_counts: PartialCounts,
}

/// Span metrics of system aspects against gold extractive aspects, with the
/// tallies summed over all reviews before scoring.
pub fn extraction_report(corpus: &Corpus, layers: &[Layer]) -> Result<ExtractionReport, EvalError> {
    let mut gold: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    let mut system: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for a in corpus.aspects() {
        match a.provenance {
            Provenance::Gold if a.form == AspectForm::Extractive && layers.contains(&a.layer) => {
                gold.entry(&a.review_id).or_default().push(&a.surface)
            }
            Provenance::System => system.entry(&a.review_id).or_default().push(&a.surface),
            _ => {}
        }
    }
    let mut ec = ExactCounts::default();
    let mut pc = PartialCounts::default();
    for r in corpus.reviews() {
        let gp = SpanSet::new(gold.get(r.id.as_str()).into_iter().flatten())?;
        let ep = SpanSet::new(system.get(r.id.as_str()).into_iter().flatten())?;
        ec.add(exact_counts(&gp, &ep));
        pc.add(partial_counts(&gp, &ep));
    }
    Ok(ExtractionReport {
        reviews: corpus.reviews().len(),
        exact: ec.scores(),
        partial: pc.scores(),
        exact_counts: ec,
        partial_counts: pc,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtilityReport {
    pub pairs: usize,
    /// Gold items with no prediction; left out of the metrics.
    pub unmatched: usize,
    pub accuracy_4way: f64,
    pub accuracy_2way: f64,
    pub binary: MatchScores,
}

pub fn utility_report(
    pairs: &[(UtilityLabel, UtilityLabel)],
    unmatched: usize,
) -> Result<UtilityReport, EvalError> {
    Ok(UtilityReport {
        pairs: pairs.len(),
        unmatched,
        accuracy_4way: utility_accuracy(pairs, &CostMatrix::four_way())?,
        accuracy_2way: utility_accuracy(pairs, &CostMatrix::two_way())?,
        binary: binary_prf(pairs)?,
    })
}

/// τ between two ranking files, matched on ⟨query, user⟩.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankingComparison {
    pub pairs: usize,
    /// Cells present in only one of the files.
    pub unmatched: usize,
    pub per_query: BTreeMap<String, f64>,
    pub per_strategy: BTreeMap<String, f64>,
    pub mean: Option<f64>,
}

type CellKey<'a> = (&'a str, &'a str, String);

fn keyed(records: &[RankingRecord]) -> Result<BTreeMap<CellKey<'_>, &RankingRecord>, EvalError> {
    let mut m = BTreeMap::new();
    for r in records {
        let key = (r.query.as_str(), r.user_id.as_str(), r.strategy.to_string());
        if m.insert(key, r).is_some() {
            return Err(EvalError::SetMismatch(format!(
                "two {} rankings for {:?} / {}",
                r.strategy, r.query, r.user_id
            )));
        }
    }
    Ok(m)
}

fn means(groups: BTreeMap<String, Vec<f64>>) -> BTreeMap<String, f64> {
    groups
        .into_iter()
        .map(|(k, v)| (k, v.iter().sum::<f64>() / v.len() as f64))
        .collect()
}

/// Pairs rankings on (query, user, strategy) and averages τ per query and per
/// strategy. The overall mean is taken over the per-query values.
pub fn compare_rankings(
    system: &[RankingRecord],
    reference: &[RankingRecord],
) -> Result<RankingComparison, EvalError> {
    let (a, b) = (keyed(system)?, keyed(reference)?);
    let mut by_query: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    let mut by_strategy: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    let mut pairs = 0;
    for (key, ra) in &a {
        let Some(rb) = b.get(key) else { continue };
        let ia: Vec<&str> = ra.ranking.iter().map(|s| s.item_id.as_str()).collect();
        let ib: Vec<&str> = rb.ranking.iter().map(|s| s.item_id.as_str()).collect();
        let tau = kendall_tau(&ia, &ib)?;
        by_query.entry(key.0.to_string()).or_default().push(tau);
        by_strategy.entry(key.2.clone()).or_default().push(tau);
        pairs += 1;
    }
    let per_query = means(by_query);
    let mean =
        (!per_query.is_empty()).then(|| per_query.values().sum::<f64>() / per_query.len() as f64);
    Ok(RankingComparison {
        pairs,
        unmatched: a.len() + b.len() - 2 * pairs,
        per_query,
        per_strategy: means(by_strategy),
        mean,
    })
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DomainReport {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub extraction: Option<ExtractionReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub utility: Option<UtilityReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub agreement_all: Option<AgreementStats>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub agreement_accepted: Option<AgreementStats>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ranking_files: Option<RankingComparison>,
    /// Ranking experiments by table name.
    #[serde(default)]
    pub ranking: BTreeMap<String, ExperimentResult>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub run_id: String,
    pub domains: BTreeMap<String, DomainReport>,
}

fn out_err(e: impl std::fmt::Display) -> EvalError {
    EvalError::Output(e.to_string())
}

impl EvalReport {
    pub fn write_json(&self, path: &Path) -> Result<(), EvalError> {
        let mut s = serde_json::to_string_pretty(self).map_err(out_err)?;
        s.push('\n');
        std::fs::write(path, s).map_err(out_err)
    }

    /// One CSV per domain and table, named `tau_{domain}_{table}.csv`.
    /// Returns the files written.
    pub fn write_csv(&self, dir: &Path) -> Result<Vec<String>, EvalError> {
        let mut written = Vec::new();
        for (domain, d) in &self.domains {
            for (name, exp) in &d.ranking {
                let file = format!("tau_{domain}_{name}.csv");
                let mut w = csv::Writer::from_path(dir.join(&file)).map_err(out_err)?;
                let mut header = vec!["system".to_string(), "reference".to_string()];
                header.extend(exp.table.columns.iter().cloned());
                w.write_record(&header).map_err(out_err)?;
                for row in &exp.table.rows {
                    let mut rec = vec![row.system.clone(), row.reference.clone()];
                    rec.extend(row.per_query.iter().chain([&row.mean]).map(|v| match v {
                        Some(x) => format!("{x:+.4}"),
                        None => String::new(),
                    }));
                    w.write_record(&rec).map_err(out_err)?;
                }
                w.flush().map_err(out_err)?;
                written.push(file);
            }
        }
        Ok(written)
    }
}

#[cfg(test)]
mod tests {
    use super::super::{TauRow, TauTable};
    use super::*;
    use UtilityLabel::{High as H, Medium as M, None as N};

    #[test]
    fn utility_summary() {
        let r = utility_report(&[(H, H), (H, M), (H, N)], 2).unwrap();
        assert_eq!(r.accuracy_4way, 0.5);
        assert!((r.accuracy_2way - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(r.unmatched, 2);
        assert!(utility_report(&[], 0).is_err());
    }

    #[test]
    fn csv_grid() {
        let exp = ExperimentResult {
            table: TauTable {
                columns: vec!["q1".into(), "q2".into(), "Mean".into()],
                rows: vec![TauRow {
                    system: "Sys∘Seren".into(),
                    reference: "GT∘Seren".into(),
                    per_query: vec![Some(0.5), None],
                    mean: Some(0.5),
                }],
                aggregation: String::new(),
            },
            cells: vec![],
            flagged_cells: 0,
            missing_utilities: BTreeMap::new(),
        };
        let mut rep = EvalReport::default();
        rep.domains
            .entry("restaurants".into())
            .or_default()
            .ranking
            .insert("plain".into(), exp);
        let dir = tempfile::tempdir().unwrap();
        let files = rep.write_csv(dir.path()).unwrap();
        assert_eq!(files, vec!["tau_restaurants_plain.csv"]);
        let text = std::fs::read_to_string(dir.path().join(&files[0])).unwrap();
        assert_eq!(
            text,
            "system,reference,q1,q2,Mean\nSys∘Seren,GT∘Seren,+0.5000,,+0.5000\n"
        );
        rep.write_json(&dir.path().join("r.json")).unwrap();
    }

    fn rec(q: &str, u: &str, ids: &[&str]) -> RankingRecord {
        RankingRecord {
            query: q.into(),
            user_id: u.into(),
            strategy: crate::scoring::Strategy::StarSeren,
            ranking: ids
                .iter()
                .map(|i| crate::scoring::ScoredItem {
                    item_id: i.to_string(),
                    score: 0.0,
                    star: 3.0,
                })
                .collect(),
            run_id: "x".into(),
        }
    }

    #[test]
    fn ranking_files() {
        let a = vec![
            rec("q", "u1", &["a", "b", "c"]),
            rec("q", "u2", &["a", "b", "c"]),
            rec("p", "u1", &["x", "y"]),
        ];
        let same = compare_rankings(&a, &a).unwrap();
        assert_eq!((same.pairs, same.mean), (3, Some(1.0)));
        let b = vec![
            rec("q", "u1", &["c", "b", "a"]),
            rec("q", "u2", &["a", "b", "c"]),
        ];
        let c = compare_rankings(&a, &b).unwrap();
        assert_eq!(c.per_query["q"], 0.0);
        assert_eq!(c.unmatched, 1);
        assert!(compare_rankings(&[a[0].clone(), a[0].clone()], &a).is_err());
    }
}
