//! Acceptance criteria, run by a custom harness so every
//! `criterion N: PASS|FAIL ...` line is printed whether or not it passes.

use std::collections::HashSet;
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use atars::corpus::{
    accept_hits, load_corpus, DatasetDescriptors, DomainCategory, HitRecord, Layer, UtilityLabel,
};
use atars::evaluation::{
    binary_prf, exact_match, hit_sigma, kendall_tau, partial_match, run_ranking_experiment,
    utility_accuracy, Comparison, CostMatrix, ExperimentConfig, LabelEncoding, MatchScores, Ranker,
    ScoreSource, Side, SpanSet,
};
use atars::extraction::{
    select_dynamic_examples, BankEntry, ExampleBank, ExtractionConfig, ExtractionMode,
};
use atars::gateway::prompt::{step2_answer, utility_answer};
use atars::gateway::{
    parse_profile, parse_step1, parse_step2, parse_utility, Example, PromptFamily, PromptInput,
    PromptSet,
};
use atars::personalization::{
    retrieval_score, sample_aspect_count, select_utility_examples, UtilityExampleBank,
    UtilityTarget, UtilityTriplet,
};
use atars::scoring::{
    rank_plain, rank_star_partitioned, serendipity_score, star_bucket, surprise_score, ScoredItem,
    SimilarityMatrix, Strategy, UtilityAssignment,
};
use atars::{EmbeddingVector, Gateway};
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

static REPORTED: Mutex<Vec<(u32, bool)>> = Mutex::new(Vec::new());

fn report(n: u32, ok: bool, detail: impl AsRef<str>) {
    println!(
        "criterion {n}: {} {}",
        if ok { "PASS" } else { "FAIL" },
        detail.as_ref()
    );
    REPORTED.lock().unwrap().push((n, ok));
}

fn main() {
    let criteria: [(u32, fn()); 13] = [
        (1, criterion_01_partial_match_oracle),
        (2, criterion_02_partial_dominates_exact),
        (3, criterion_03_serendipity_limits),
        (4, criterion_04_star_partition),
        (5, criterion_05_kendall_tau),
        (6, criterion_06_cost_matrix_metrics),
        (7, criterion_07_agreement),
        (8, criterion_08_retrieval),
        (9, criterion_09_harmonic_mean),
        (10, criterion_10_profile_sampling),
        (11, criterion_11_prompt_fidelity),
        (12, criterion_12_end_to_end_determinism),
        (13, criterion_13_corpus_constants),
    ];
    let mut failed = Vec::new();
    for (n, f) in criteria {
        let finished = std::panic::catch_unwind(f).is_ok();
        let reported = REPORTED
            .lock()
            .unwrap()
            .iter()
            .find(|(m, _)| *m == n)
            .map(|&(_, ok)| ok);
        if reported.is_none() {
            println!("criterion {n}: FAIL panicked before reporting");
        }
        if !finished || reported != Some(true) {
            failed.push(n);
        }
    }
    println!(
        "\nacceptance: {} passed, {} failed {failed:?}",
        criteria.len() - failed.len(),
        failed.len()
    );
    if !failed.is_empty() {
        std::process::exit(1);
    }
}

fn manifest_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}

fn scores_close(a: MatchScores, b: MatchScores, tol: f64) -> bool {
    close(a.precision, b.precision, tol) && close(a.recall, b.recall, tol) && close(a.f1, b.f1, tol)
}

const WORDS: [&str; 8] = [
    "pool", "table", "creek", "park", "jazz", "night", "vinyl", "wall",
];

/// A phrase of 1..=3 distinct words.
fn phrase(rng: &mut impl Rng) -> Vec<String> {
    let n = rng.random_range(1..=3);
    let mut words: Vec<&str> = WORDS.to_vec();
    let mut out = Vec::new();
    for _ in 0..n {
        let i = rng.random_range(0..words.len());
        out.push(words.remove(i).to_string());
    }
    out
}

fn phrases(rng: &mut impl Rng, max: usize) -> Vec<Vec<String>> {
    let n = rng.random_range(0..=max);
    (0..n).map(|_| phrase(rng)).collect()
}

fn span_set(p: &[Vec<String>]) -> SpanSet {
    SpanSet::new(p.iter().map(|w| w.join(" "))).unwrap()
}

fn set_jaccard(a: &[String], b: &[String]) -> f64 {
    let sa: HashSet<&String> = a.iter().collect();
    let sb: HashSet<&String> = b.iter().collect();
    sa.intersection(&sb).count() as f64 / sa.union(&sb).count() as f64
}

/// Every injective map from the first min(|gp|,|ep|) gold phrases into the
/// extracted phrases.
fn injections(k: usize, n: usize) -> Vec<Vec<usize>> {
    fn go(k: usize, n: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for j in 0..n {
            if !cur.contains(&j) {
                cur.push(j);
                go(k, n, cur, out);
                cur.pop();
            }
        }
    }
    let mut out = Vec::new();
    go(k, n, &mut Vec::new(), &mut out);
    out
}

/// Scores by exhaustive search: the binding whose Jaccard vector, read in gold
/// order, is lexicographically largest. With distinct Jaccard values this is
/// the binding a greedy pass produces.
fn oracle_partial(gp: &[Vec<String>], ep: &[Vec<String>]) -> MatchScores {
    if gp.is_empty() && ep.is_empty() {
        return MatchScores {
            precision: 1.0,
            recall: 1.0,
            f1: 1.0,
        };
    }
    let k = gp.len().min(ep.len());
    let mut best: Option<(Vec<f64>, Vec<usize>)> = None;
    for m in injections(k, ep.len()) {
        let v: Vec<f64> = m
            .iter()
            .enumerate()
            .map(|(g, &e)| set_jaccard(&gp[g], &ep[e]))
            .collect();
        if best
            .as_ref()
            .is_none_or(|(bv, _)| v.partial_cmp(bv) == Some(std::cmp::Ordering::Greater))
        {
            best = Some((v, m));
        }
    }
    let m = best.map(|b| b.1).unwrap_or_default();
    let mut share_e = 0.0;
    let mut share_g = 0.0;
    for (g, &e) in m.iter().enumerate() {
        let sg: HashSet<&String> = gp[g].iter().collect();
        let inter = ep[e].iter().filter(|t| sg.contains(t)).count() as f64;
        share_e += inter / ep[e].len() as f64;
        share_g += inter / gp[g].len() as f64;
    }
    let p = if ep.is_empty() {
        0.0
    } else {
        share_e / ep.len() as f64
    };
    let r = if gp.is_empty() {
        0.0
    } else {
        share_g / gp.len() as f64
    };
    let f = if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    };
    MatchScores {
        precision: p,
        recall: r,
        f1: f,
    }
}

fn distinct_jaccards(gp: &[Vec<String>], ep: &[Vec<String>]) -> bool {
    let mut seen: Vec<f64> = Vec::new();
    for g in gp {
        for e in ep {
            let j = set_jaccard(g, e);
            if seen.iter().any(|s| close(*s, j, 1e-12)) {
                return false;
            }
            seen.push(j);
        }
    }
    true
}

fn criterion_01_partial_match_oracle() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut checked = 0;
    let mut mismatches = Vec::new();
    while checked < 200 {
        let gp = phrases(&mut rng, 4);
        let ep = phrases(&mut rng, 4);
        if !distinct_jaccards(&gp, &ep) {
            continue;
        }
        let got = partial_match(&span_set(&gp), &span_set(&ep));
        let want = oracle_partial(&gp, &ep);
        if !scores_close(got, want, 1e-12) {
            mismatches.push(format!("{gp:?} / {ep:?}: {got:?} vs {want:?}"));
        }
        checked += 1;
    }
    let hand = partial_match(
        &SpanSet::new(["goose creek park"]).unwrap(),
        &SpanSet::new(["creek park"]).unwrap(),
    );
    let hand_ok = hand.precision == 1.0 && hand.recall == 2.0 / 3.0 && close(hand.f1, 0.8, 1e-15);
    let elapsed = start.elapsed();
    report(
        1,
        mismatches.is_empty() && hand_ok && elapsed < Duration::from_secs(5),
        format!(
            "{checked} random pairs, {} mismatches, hand case {hand:?}, {:.2}s {}",
            mismatches.len(),
            elapsed.as_secs_f64(),
            mismatches.first().cloned().unwrap_or_default()
        ),
    );
}

fn criterion_02_partial_dominates_exact() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut violations = Vec::new();
    for _ in 0..500 {
        let gp = span_set(&phrases(&mut rng, 4));
        let ep = span_set(&phrases(&mut rng, 4));
        let (p, e) = (partial_match(&gp, &ep), exact_match(&gp, &ep));
        let eps = 1e-12;
        if p.precision + eps < e.precision || p.recall + eps < e.recall || p.f1 + eps < e.f1 {
            violations.push(format!(
                "gp={:?} ep={:?} partial={p:?} exact={e:?}",
                gp.phrases(),
                ep.phrases()
            ));
        }
    }
    let elapsed = start.elapsed();
    report(
        2,
        violations.is_empty() && elapsed < Duration::from_secs(5),
        format!(
            "500 random pairs, {} violations, {:.2}s {}",
            violations.len(),
            elapsed.as_secs_f64(),
            violations.first().cloned().unwrap_or_default()
        ),
    );
}

fn random_label(rng: &mut impl Rng) -> UtilityLabel {
    UtilityLabel::ALL[rng.random_range(0..4)]
}

fn random_similarity(rng: &mut impl Rng, aspects: Vec<String>) -> SimilarityMatrix {
    let n = aspects.len();
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
        for j in i + 1..n {
            let s = rng.random_range(0.0..=1.0);
            v[i * n + j] = s;
            v[j * n + i] = s;
        }
    }
    SimilarityMatrix::new(aspects, v).unwrap()
}

fn criterion_03_serendipity_limits() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst_mean: f64 = 0.0;
    let mut worst_sum: f64 = 0.0;
    let mut order_ok = true;
    for _ in 0..100 {
        let n = rng.random_range(1..=8);
        let aspects: Vec<String> = (0..n).map(|i| format!("aspect {i}")).collect();
        let mut u = UtilityAssignment::new();
        let mut vals = Vec::new();
        for a in &aspects {
            let l = random_label(&mut rng);
            u.insert(a, l);
            vals.push(l.numeric());
        }
        let mean = vals.iter().sum::<f64>() / n as f64;
        let sum: f64 = vals.iter().sum();
        let s_ones =
            serendipity_score(&aspects, &u, &SimilarityMatrix::ones(aspects.clone())).unwrap();
        let s_id =
            serendipity_score(&aspects, &u, &SimilarityMatrix::identity(aspects.clone())).unwrap();
        worst_mean = worst_mean.max((s_ones - mean).abs());
        worst_sum = worst_sum.max((s_id - sum).abs());
        let sims = random_similarity(&mut rng, aspects.clone());
        let seren = serendipity_score(&aspects, &u, &sims).unwrap();
        let sur = surprise_score(&aspects, &sims).unwrap();
        order_ok &= 0.0 <= seren && seren <= sur + 1e-12;
    }
    report(
        3,
        worst_mean <= 1e-12 && worst_sum <= 1e-12 && order_ok,
        format!("max |identical - mean| {worst_mean:.1e}, max |identity - sum| {worst_sum:.1e}, 0<=seren<=surprise {order_ok}"),
    );
}

fn criterion_04_star_partition() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let below_four = f64::from_bits(4.0f64.to_bits() - 1);
    let edges = [0.0, 1.0, 2.0, 3.0, below_four, 4.0, 5.0];
    let mut ok = true;
    for _ in 0..200 {
        let n = rng.random_range(1..=12);
        let items: Vec<ScoredItem> = (0..n)
            .map(|i| ScoredItem {
                item_id: format!("i{i:02}"),
                score: (rng.random_range(0..6) as f64) / 4.0,
                star: if rng.random_bool(0.3) {
                    *edges.choose(&mut rng).unwrap()
                } else {
                    (rng.random_range(0..=10) as f64) / 2.0
                },
            })
            .collect();
        let star = rank_star_partitioned(&items, Strategy::StarSeren);
        let plain = rank_plain(&items, Strategy::PlainSeren);
        let buckets: Vec<usize> = star.ranking.iter().map(|i| star_bucket(i.star)).collect();
        ok &= buckets.windows(2).all(|w| w[0] <= w[1]);
        for b in 0..4 {
            let from_star: Vec<&str> = star
                .ranking
                .iter()
                .filter(|i| star_bucket(i.star) == b)
                .map(|i| i.item_id.as_str())
                .collect();
            let from_plain: Vec<&str> = plain
                .ranking
                .iter()
                .filter(|i| star_bucket(i.star) == b)
                .map(|i| i.item_id.as_str())
                .collect();
            ok &= from_star == from_plain;
        }
    }
    let edge_ok = star_bucket(4.0) == 0
        && star_bucket(below_four) == 1
        && star_bucket(3.0) == 1
        && star_bucket(5.0) == 0;
    report(
        4,
        ok && edge_ok,
        format!(
            "200 random item sets ordered {ok}, 4.0 -> bucket 0 and 3.999.. -> bucket 1 {edge_ok}"
        ),
    );
}

fn toy_dir() -> PathBuf {
    manifest_dir().join("fixtures/toy")
}

fn criterion_05_kendall_tau() {
    let r = ["a", "b", "c", "d", "e"];
    let rev: Vec<&str> = r.iter().rev().copied().collect();
    let same = kendall_tau(&r, &r).unwrap();
    let opposite = kendall_tau(&r, &rev).unwrap();
    let third = kendall_tau(&["1", "2", "3"], &["1", "3", "2"]).unwrap();
    let basics = same == 1.0 && opposite == -1.0 && third == 1.0 / 3.0;

    let corpus = load_corpus(&toy_dir(), DomainCategory::Restaurants).unwrap();
    let gt = ScoreSource::gold(&corpus, &[Layer::Primary]).unwrap();
    let users: Vec<String> = corpus.profiles().iter().map(|p| p.id.clone()).collect();
    let gw = Gateway::hash(7, 2);
    let cfg = ExperimentConfig::default();
    let mut all_one = true;
    let mut cells = 0;
    for s in [
        Strategy::PlainSeren,
        Strategy::PlainSur,
        Strategy::StarSeren,
        Strategy::StarSur,
    ] {
        let cmp = Comparison {
            system: Ranker {
                side: Side::Sys,
                strategy: s,
            },
            reference: Ranker {
                side: Side::Gt,
                strategy: s,
            },
        };
        let res = run_ranking_experiment(
            &corpus,
            corpus.queries(),
            &users,
            &gt,
            &gt,
            &[cmp],
            &cfg,
            &gw,
        )
        .unwrap();
        for row in &res.table.rows {
            all_one &= row.mean == Some(1.0) && row.per_query.iter().all(|v| *v == Some(1.0));
        }
        cells += res.cells.iter().filter(|c| c.flag.is_none()).count();
    }
    report(
        5,
        basics && all_one && cells > 0,
        format!("tau(r,r)={same} tau(r,rev)={opposite} tau([1,2,3],[1,3,2])={third}, self-comparison all +1 over {cells} cells {all_one}"),
    );
}

fn criterion_06_cost_matrix_metrics() {
    use UtilityLabel::*;
    let acc4 = utility_accuracy(
        &[(High, High), (High, Medium), (High, None)],
        &CostMatrix::four_way(),
    )
    .unwrap();
    let acc2 = utility_accuracy(&[(Medium, Low)], &CostMatrix::two_way()).unwrap();
    let swap = |l: UtilityLabel, flip: bool| match (l, flip) {
        (High, true) => Medium,
        (Medium, true) => High,
        (Low, true) => None,
        (None, true) => Low,
        (x, false) => x,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut invariant = true;
    for _ in 0..200 {
        let n = rng.random_range(1..=20);
        let pairs: Vec<(UtilityLabel, UtilityLabel)> = (0..n)
            .map(|_| (random_label(&mut rng), random_label(&mut rng)))
            .collect();
        let swapped: Vec<(UtilityLabel, UtilityLabel)> = pairs
            .iter()
            .map(|&(g, p)| (swap(g, rng.random_bool(0.5)), swap(p, rng.random_bool(0.5))))
            .collect();
        invariant &= binary_prf(&pairs).unwrap() == binary_prf(&swapped).unwrap();
    }
    report(
        6,
        acc4 == 0.5 && acc2 == 0.75 && invariant,
        format!("4-way {acc4:.3}, 2-way {acc2:.3}, binary P/R/F1 invariant under H<->M and L<->N {invariant}"),
    );
}

#[allow(clippy::approx_constant)] // the reported value, not √2
fn criterion_07_agreement() {
    use UtilityLabel::*;
    let enc = LabelEncoding::ORDINAL;
    let zero = hit_sigma(&[Medium, Medium, Medium], &enc);
    let max = hit_sigma(&[High, None, None], &enc);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let labels = [
            random_label(&mut rng),
            random_label(&mut rng),
            random_label(&mut rng),
        ];
        let x: Vec<f64> = labels.iter().map(|l| l.ordinal() as f64).collect();
        // population variance as half the mean squared pairwise difference
        let mut pair_sq = 0.0;
        for a in &x {
            for b in &x {
                pair_sq += (a - b) * (a - b);
            }
        }
        let brute = (pair_sq / (2.0 * 9.0)).sqrt();
        worst = worst.max((hit_sigma(&labels, &enc) - brute).abs());
    }
    report(
        7,
        zero == 0.0 && close(max, 1.4142, 1e-4) && worst < 1e-12,
        format!("(M,M,M) {zero}, (H,N,N) {max:.4}, 1000 random HITs max deviation {worst:.1e}"),
    );
}

fn random_unit(rng: &mut impl Rng, dim: usize) -> EmbeddingVector {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        if let Ok(e) = EmbeddingVector::normalized(v) {
            return e;
        }
    }
}

fn dot(a: &EmbeddingVector, b: &EmbeddingVector) -> f64 {
    a.values().iter().zip(b.values()).map(|(x, y)| x * y).sum()
}

/// Repeatedly takes the best remaining candidate.
fn top_k(mut cands: Vec<(f64, usize)>, k: usize) -> Vec<usize> {
    let mut out = Vec::new();
    while out.len() < k && !cands.is_empty() {
        let mut best = 0;
        for i in 1..cands.len() {
            if cands[i].0 > cands[best].0 {
                best = i;
            }
        }
        out.push(cands.remove(best).1);
    }
    out
}

fn criterion_08_retrieval() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let cfg = ExtractionConfig::new(ExtractionMode::Dynamic8);
    let mut ext_ok = 0;
    let mut util_ok = 0;
    let mut failures = Vec::new();
    for round in 0..100 {
        let n = rng.random_range(10..=50);
        let items = ["i0", "i1", "i2", "i3", "i4"];
        let entries: Vec<BankEntry> = (0..n)
            .map(|i| {
                let pos = rng.random_bool(0.5);
                BankEntry {
                    review_id: format!("r{i:03}"),
                    index: 0,
                    text: format!("s{i}"),
                    gold_positive: pos,
                    gold_aspects: if pos {
                        vec![format!("a{i}")]
                    } else {
                        Vec::new()
                    },
                    item_id: items.choose(&mut rng).unwrap().to_string(),
                }
            })
            .collect();
        let embs: Vec<EmbeddingVector> = (0..n).map(|_| random_unit(&mut rng, 8)).collect();
        let bank = ExampleBank::new(entries.clone(), embs.clone()).unwrap();
        let target = random_unit(&mut rng, 8);
        let target_item = items.choose(&mut rng).unwrap();
        let eligible = |want: bool| -> Vec<(f64, usize)> {
            (0..n)
                .filter(|&i| entries[i].item_id != *target_item && entries[i].gold_positive == want)
                .map(|i| (dot(&target, &embs[i]), i))
                .collect()
        };
        let (pos, neg) = (eligible(true), eligible(false));
        let got = select_dynamic_examples(&target, target_item, &bank, &cfg);
        let ok = if pos.len() < 4 || neg.len() < 4 {
            got.is_err()
        } else {
            let mut want = top_k(pos, 4);
            want.extend(top_k(neg, 4));
            got.as_ref()
                .is_ok_and(|g| *g == want && g.iter().all(|&i| entries[i].item_id != *target_item))
        };
        if ok {
            ext_ok += 1;
        } else {
            failures.push(format!("extraction bank {round}"));
        }

        let m = rng.random_range(5..=50);
        let users = ["u0", "u1", "u2", "u3", "u4"];
        let triplets: Vec<UtilityTriplet> = (0..m)
            .map(|i| UtilityTriplet {
                id: format!("t{i:04}"),
                user_id: users.choose(&mut rng).unwrap().to_string(),
                item_id: items.choose(&mut rng).unwrap().to_string(),
                review_id: format!("r{i}"),
                profile: format!("p{i}"),
                sentence: format!("<ata>a{i}</ata>"),
                aspect: format!("a{i}"),
                aspect_surface: format!("a{i}"),
                label: random_label(&mut rng),
            })
            .collect();
        let pe: Vec<EmbeddingVector> = (0..m).map(|_| random_unit(&mut rng, 8)).collect();
        let ae: Vec<EmbeddingVector> = (0..m).map(|_| random_unit(&mut rng, 8)).collect();
        let ubank = UtilityExampleBank::new(triplets.clone(), pe.clone(), ae.clone()).unwrap();
        let (tp, ta) = (random_unit(&mut rng, 8), random_unit(&mut rng, 8));
        let (tu, ti) = (
            *users.choose(&mut rng).unwrap(),
            *items.choose(&mut rng).unwrap(),
        );
        let cands: Vec<(f64, usize)> = (0..m)
            .filter(|&i| triplets[i].user_id != tu && triplets[i].item_id != ti)
            .map(|i| {
                let su = dot(&tp, &pe[i]).clamp(0.0, 1.0);
                let sa = dot(&ta, &ae[i]).clamp(0.0, 1.0);
                let h = if su + sa > 0.0 {
                    2.0 * su * sa / (su + sa)
                } else {
                    0.0
                };
                (h, i)
            })
            .collect();
        let target = UtilityTarget {
            user_id: tu,
            item_id: ti,
            profile_embedding: &tp,
            aspect_embedding: &ta,
        };
        let got = select_utility_examples(&target, &ubank, 4);
        // zero scores tie; the bank breaks those by triplet id, which is index order here
        let ok = if cands.len() < 4 {
            got.is_err()
        } else {
            let want = top_k(cands, 4);
            got.as_ref().is_ok_and(|g| {
                *g == want
                    && g.iter()
                        .all(|&i| triplets[i].user_id != tu && triplets[i].item_id != ti)
            })
        };
        if ok {
            util_ok += 1;
        } else {
            failures.push(format!("utility bank {round}"));
        }
    }
    report(
        8,
        failures.is_empty(),
        format!(
            "dynamic extraction {ext_ok}/100, utility top-4 {util_ok}/100 {}",
            failures.join(", ")
        ),
    );
}

fn criterion_09_harmonic_mean() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut ok = true;
    for _ in 0..1000 {
        let s: f64 = rng.random_range(0.0..=1.0);
        let x: f64 = rng.random_range(0.0..=1.0);
        ok &= close(retrieval_score(s, s).unwrap(), s, 1e-12);
        ok &= retrieval_score(0.0, x).unwrap() == 0.0 && retrieval_score(x, 0.0).unwrap() == 0.0;
    }
    let h = retrieval_score(0.8, 0.4).unwrap();
    report(
        9,
        ok && close(h, 0.5333, 1e-4),
        format!("H(s,s)=s and H(0,x)=0 on 1000 samples {ok}, H(0.8,0.4)={h:.4}"),
    );
}

fn criterion_10_profile_sampling() {
    let expected = [0.1f64, 0.3, 0.3, 0.2, 0.1];
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let draws: Vec<usize> = (0..100_000)
        .map(|_| sample_aspect_count(&mut rng))
        .collect();
    let mut freq = [0.0f64; 5];
    for d in &draws {
        freq[d - 1] += 1.0 / 100_000.0;
    }
    let within = freq
        .iter()
        .zip(expected)
        .all(|(f, e)| (f - e).abs() <= 0.01);
    let mut again = ChaCha8Rng::seed_from_u64(10);
    let replay: Vec<usize> = (0..100_000)
        .map(|_| sample_aspect_count(&mut again))
        .collect();
    let same = replay == draws;
    report(
        10,
        within && same,
        format!("frequencies {freq:.4?}, same seed reproduces sequence {same}"),
    );
}

fn golden_input(fam: PromptFamily) -> PromptInput {
    match fam {
        PromptFamily::Step1Reformulate => PromptInput::Review(
            "The coffee was strong. A live harpist plays on Sunday mornings.".into(),
        ),
        PromptFamily::Step2Extract => {
            PromptInput::Sentence("A live harpist plays on Sunday mornings.".into())
        }
        PromptFamily::UtilityClassify => PromptInput::Utility {
            profile: "I love classical music and play the violin.".into(),
            sentence: "A live <ata>harpist</ata> plays on Sunday mornings.".into(),
        },
        PromptFamily::ProfileGenerate => {
            PromptInput::Topics(vec!["live music".into(), "vintage decor".into()])
        }
    }
}

fn round_trips(ex: &Example) -> bool {
    match ex {
        Example::Step1 { output, .. } => parse_step1(output).is_ok_and(|s| !s.is_empty()),
        Example::Step2 {
            positive, aspects, ..
        } => parse_step2(&step2_answer(*positive, aspects))
            .is_ok_and(|p| p.positive == *positive && p.aspects == *aspects),
        Example::Utility {
            aspect,
            label,
            explanation,
            ..
        } => {
            let mut text = utility_answer(aspect, *label);
            if let Some(e) = explanation {
                text.push_str(&format!("\nExplanation: {e}"));
            }
            parse_utility(&text).is_ok_and(|p| {
                p.aspect == *aspect && p.label == *label && p.explanation == *explanation
            })
        }
        Example::Profile { biography, .. } => parse_profile(&format!(
            "Let's think step by step.\nSo, a good biography would be: {biography}"
        ))
        .is_ok_and(|b| b == *biography),
    }
}

fn criterion_11_prompt_fidelity() {
    let golden = manifest_dir().join("fixtures/golden");
    let mut matched = 0;
    let mut mismatched = Vec::new();
    let mut parsed = 0;
    let mut unparsed = Vec::new();
    for domain in [
        DomainCategory::Restaurants,
        DomainCategory::Hotels,
        DomainCategory::HairSalons,
    ] {
        let set = PromptSet::bundled(domain).unwrap();
        for fam in PromptFamily::ALL {
            let tpl = set.get(fam);
            let rendered = tpl.render(&golden_input(fam)).unwrap();
            let path = golden
                .join(fam.dir_name())
                .join(format!("{}.txt", domain.as_str()));
            if std::fs::read_to_string(&path).is_ok_and(|g| g == rendered) {
                matched += 1;
            } else {
                mismatched.push(format!("{}/{}", fam.dir_name(), domain.as_str()));
            }
            for (i, ex) in tpl.example_slots.iter().enumerate() {
                if round_trips(ex) {
                    parsed += 1;
                } else {
                    unparsed.push(format!(
                        "{}/{} example {}",
                        fam.dir_name(),
                        domain.as_str(),
                        i + 1
                    ));
                }
            }
        }
    }
    let forms = [
        parse_step2("Classification: <neg> Atypical Aspects: <None>")
            .is_ok_and(|p| !p.positive && p.aspects.is_empty()),
        parse_step2("Classification: <pos> Atypical Aspects: pool table, darts")
            .is_ok_and(|p| p.positive && p.aspects == ["pool table", "darts"]),
        parse_utility("A' = [(\"pool table\", \"High\")]")
            .is_ok_and(|p| p.label == UtilityLabel::High),
        parse_utility("A'=[(\"pool table\", \"None\")]\nExplanation: no interest").is_ok_and(|p| {
            p.label == UtilityLabel::None && p.explanation.as_deref() == Some("no interest")
        }),
    ];
    let forms_ok = forms.iter().all(|f| *f);
    report(
        11,
        mismatched.is_empty() && unparsed.is_empty() && forms_ok,
        format!(
            "{matched}/12 golden prompts byte-identical, {parsed} fixture answers round-trip, documented forms parse {forms_ok} {}",
            [mismatched, unparsed].concat().join(", ")
        ),
    );
}

fn cli(args: &[&str]) -> i32 {
    let mut argv = vec!["atars"];
    argv.extend_from_slice(args);
    atars::cli::run(argv)
}

fn pipeline(out: &Path) -> Vec<i32> {
    let toy = toy_dir();
    let s = |p: PathBuf| p.to_string_lossy().into_owned();
    let config = s(toy.join("run.toml"));
    let (c, e, u, r, v) = (
        s(out.join("c")),
        s(out.join("e")),
        s(out.join("u")),
        s(out.join("r")),
        s(out.join("v")),
    );
    let utilities = s(out.join("u").join("utilities.jsonl"));
    let rankings = s(out.join("r").join("rankings.jsonl"));
    vec![
        cli(&[
            "ingest",
            "--config",
            &config,
            "--input",
            &s(toy.clone()),
            "--out",
            &c,
        ]),
        cli(&["extract", "--config", &config, "--corpus", &c, "--out", &e]),
        cli(&[
            "classify-utility",
            "--config",
            &config,
            "--corpus",
            &c,
            "--extractions",
            &e,
            "--out",
            &u,
        ]),
        cli(&[
            "rank",
            "--config",
            &config,
            "--corpus",
            &c,
            "--extractions",
            &e,
            "--utilities",
            &utilities,
            "--out",
            &r,
        ]),
        cli(&[
            "evaluate",
            "--config",
            &config,
            "--corpus",
            &c,
            "--extractions",
            &e,
            "--utilities",
            &utilities,
            "--rankings",
            &rankings,
            "--reference",
            &rankings,
            "--out",
            &v,
        ]),
    ]
}

fn tree(root: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((
                    p.strip_prefix(root).unwrap().to_path_buf(),
                    std::fs::read(&p).unwrap(),
                ));
            }
        }
    }
    out.sort();
    out
}

fn criterion_12_end_to_end_determinism() {
    let start = Instant::now();
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let codes_a = pipeline(a.path());
    let codes_b = pipeline(b.path());
    let (ta, tb) = (tree(a.path()), tree(b.path()));
    let elapsed = start.elapsed();
    let all_zero = codes_a.iter().chain(&codes_b).all(|c| *c == 0);
    let identical = !ta.is_empty() && ta == tb;
    report(
        12,
        all_zero && identical && elapsed < Duration::from_secs(60),
        format!(
            "exit codes {codes_a:?}/{codes_b:?}, {} artifacts byte-identical {identical}, {:.2}s",
            ta.len(),
            elapsed.as_secs_f64()
        ),
    );
}

fn criterion_13_corpus_constants() {
    let d = DatasetDescriptors::bundled();
    let r = &d.domains[&DomainCategory::Restaurants];
    let tt = &r.splits["train_test"];
    let mut ok = tt.reviews == 200 && tt.primary_reviews == 100 && tt.primary_aspects == 253;
    ok &= r.hits.total == 2770 && r.hits.accepted == 2105;
    let mut detail = format!(
        "descriptors: {} reviews, {} primary-atypical, {} primary aspects, HITs {} -> {}",
        tt.reviews, tt.primary_reviews, tt.primary_aspects, r.hits.total, r.hits.accepted
    );

    // The acceptance rule itself, on a HIT set with the same split of
    // majority and no-majority label triples.
    let (h, m, l) = (UtilityLabel::High, UtilityLabel::Medium, UtilityLabel::Low);
    let synthetic: Vec<HitRecord> = (0..2770)
        .map(|i| {
            let labels = if i < 2105 { [h, h, l] } else { [h, m, l] };
            HitRecord::new(&format!("u{i}"), "r", "a", labels)
        })
        .collect();
    let (_, counts) = accept_hits(&synthetic).unwrap();
    ok &= counts.total == 2770 && counts.accepted == 2105;

    match std::env::var_os("ATARS_GOLD_DIR") {
        Some(dir) => {
            let corpus = load_corpus(Path::new(&dir), DomainCategory::Restaurants).unwrap();
            let got = corpus.annotation_counts();
            let (_, hc) = accept_hits(corpus.hits()).unwrap();
            let gold_ok = got.reviews == tt.reviews
                && got.primary_reviews == tt.primary_reviews
                && got.primary_aspects == tt.primary_aspects
                && hc.total == r.hits.total
                && hc.accepted == r.hits.accepted;
            ok &= gold_ok;
            detail.push_str(&format!(
                "; gold files: {} reviews, {} primary-atypical, {} primary aspects, HITs {} -> {}",
                got.reviews, got.primary_reviews, got.primary_aspects, hc.total, hc.accepted
            ));
        }
        None => {
            detail.push_str("; gold annotation files absent (set ATARS_GOLD_DIR to check them)")
        }
    }
    report(13, ok, detail);
}
