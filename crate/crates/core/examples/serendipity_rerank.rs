//! Re-ranks a handful of bars by how serendipitous their atypical aspects are
//! for one user, with and without star-rating buckets.
//!
//! ```text
//! cargo run --example serendipity_rerank
//! ```

use atars::scoring::{
    rank, serendipity_score, similarity_matrix, surprise_score, ItemScores, SimilarityMatrix,
    Strategy, UtilityAssignment,
};
use atars::{Gateway, UtilityLabel};

struct Bar {
    id: &'static str,
    star: f64,
    aspects: &'static [(&'static str, UtilityLabel)],
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    use UtilityLabel::*;
    // Utilities as judged for a user who loves jazz and board games.
    let bars = [
        Bar {
            id: "blue-note",
            star: 4.5,
            aspects: &[("live jazz trio", High), ("vinyl listening room", Medium)],
        },
        Bar {
            id: "dice-den",
            star: 3.5,
            aspects: &[("board game library", High), ("chess club nights", High)],
        },
        Bar {
            id: "dockside",
            star: 4.0,
            aspects: &[("boat rentals", Low)],
        },
        Bar {
            id: "corner-pub",
            star: 3.0,
            aspects: &[],
        },
        Bar {
            id: "the-greenhouse",
            star: 2.5,
            aspects: &[("plant swap shelf", None), ("succulent workshop", Low)],
        },
    ];

    // Seeded-hash embeddings stand in for a real embedding model.
    let gw = Gateway::hash(7, 2);
    let mut items = Vec::new();
    for b in &bars {
        let aspects: Vec<String> = b.aspects.iter().map(|(a, _)| a.to_string()).collect();
        let mut util = UtilityAssignment::new();
        for (a, l) in b.aspects {
            util.insert(a, *l);
        }
        let sims = similarity_matrix(&aspects, &gw)?;
        items.push(ItemScores {
            item_id: b.id.into(),
            star: b.star,
            serendipity: serendipity_score(&aspects, &util, &sims)?,
            surprise: surprise_score(&aspects, &sims)?,
        });
    }
    for i in &items {
        println!(
            "{:<15} star {:.1}  serendipity {:.3}  surprise {:.3}",
            i.item_id, i.star, i.serendipity, i.surprise
        );
    }
    for s in Strategy::ALL {
        println!("{:<12} {:?}", s.cli_name(), rank(s, &items).item_ids());
    }

    // With identical aspects the score collapses to utility / n per aspect.
    let a = vec!["pool table".to_string(), "dart board".to_string()];
    let flat = serendipity_score(
        &a,
        &UtilityAssignment::all_ones(&a),
        &SimilarityMatrix::ones(a.clone()),
    )?;
    let apart = serendipity_score(
        &a,
        &UtilityAssignment::all_ones(&a),
        &SimilarityMatrix::identity(a.clone()),
    )?;
    println!("two aspects, all alike: {flat:.1}; all distinct: {apart:.1}");
    Ok(())
}
