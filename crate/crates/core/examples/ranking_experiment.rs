//! Runs the query × user ranking experiment on the toy corpus. The reference
//! side uses gold aspects and consensus utilities; the "system" side keeps the
//! gold aspects but trusts only the first annotator of each HIT, which shows
//! how much a single judge moves the rankings.
//!
//! ```text
//! cargo run --example ranking_experiment
//! ```

use std::path::Path;

use atars::corpus::{load_corpus, Layer};
use atars::evaluation::{
    run_ranking_experiment, table_plain_rows, table_star_rows, ExperimentConfig, ScoreSource,
};
use atars::{DomainCategory, Gateway};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let toy = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/toy");
    let corpus = load_corpus(&toy, DomainCategory::Restaurants)?;
    let layers = [Layer::Primary];
    let gt = ScoreSource::gold(&corpus, &layers)?;

    let mut one_judge = ScoreSource::new();
    for item in corpus.items() {
        one_judge.set_aspects(&item.id, gt.aspects(&item.id).to_vec());
    }
    for h in corpus.hits() {
        if let Some(r) = corpus.review(&h.review_id) {
            one_judge.set_utility(
                &h.user_id,
                &r.item_id,
                &h.aspect_surface,
                h.worker_labels[0],
            );
        }
    }

    let mut users: Vec<String> = corpus.profiles().iter().map(|p| p.id.clone()).collect();
    users.sort();
    let cfg = ExperimentConfig {
        users_per_query: 4,
        ..Default::default()
    };
    let gw = Gateway::hash(7, 4);
    for (name, rows) in [
        ("plain", table_plain_rows()),
        ("star-bucketed", table_star_rows()),
    ] {
        let res = run_ranking_experiment(
            &corpus,
            corpus.queries(),
            &users,
            &gt,
            &one_judge,
            &rows,
            &cfg,
            &gw,
        )?;
        println!(
            "{name}: {} cells, {} flagged",
            res.cells.len(),
            res.flagged_cells
        );
        let head: Vec<String> = res
            .table
            .columns
            .iter()
            .map(|c| format!("{c:>5}"))
            .collect();
        println!("  {:<10} {:<10} {}", "system", "reference", head.join("  "));
        for row in &res.table.rows {
            let cols: Vec<String> = row
                .per_query
                .iter()
                .chain([&row.mean])
                .map(|v| v.map_or("  -  ".into(), |x| format!("{x:+.2}")))
                .collect();
            println!(
                "  {:<10} {:<10} {}",
                row.system,
                row.reference,
                cols.join("  ")
            );
        }
    }
    Ok(())
}
