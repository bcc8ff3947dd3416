//! Span, label and ranking metrics on small hand-made inputs.
//!
//! ```text
//! cargo run --example span_metrics
//! ```

use atars::evaluation::{
    agreement_stats, binary_prf, exact_match, kendall_tau, partial_match, utility_accuracy,
    CostMatrix, LabelEncoding, SpanSet,
};
use atars::{HitRecord, UtilityLabel};

fn show(name: &str, gold: &[&str], predicted: &[&str]) -> Result<(), atars::evaluation::EvalError> {
    let (g, p) = (SpanSet::new(gold)?, SpanSet::new(predicted)?);
    let e = exact_match(&g, &p);
    let m = partial_match(&g, &p);
    println!("{name}");
    println!("  gold {gold:?}\n  pred {predicted:?}");
    println!(
        "  exact   P {:.3} R {:.3} F1 {:.3}",
        e.precision, e.recall, e.f1
    );
    println!(
        "  partial P {:.3} R {:.3} F1 {:.3}",
        m.precision, m.recall, m.f1
    );
    Ok(())
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    show(
        "overlapping spans",
        &["board games", "live piano on weekends"],
        &["board games", "live piano"],
    )?;
    show(
        "one span missed",
        &["pool table", "dog menu"],
        &["pool table"],
    )?;
    // Greedy matching always pairs each gold span with its best prediction,
    // even at zero overlap, so it can score below exact matching.
    show(
        "greedy pairing without overlap",
        &["creek wall table", "jazz"],
        &["jazz"],
    )?;

    use UtilityLabel::*;
    let pairs = [
        (High, High),
        (High, Medium),
        (Medium, Low),
        (Low, None),
        (None, High),
    ];
    println!("utility pairs {pairs:?}");
    println!(
        "  4-way accuracy {:.3}",
        utility_accuracy(&pairs, &CostMatrix::four_way())?
    );
    println!(
        "  2-way accuracy {:.3}",
        utility_accuracy(&pairs, &CostMatrix::two_way())?
    );
    let b = binary_prf(&pairs)?;
    println!(
        "  useful P {:.3} R {:.3} F1 {:.3}",
        b.precision, b.recall, b.f1
    );

    let a = ["i1", "i2", "i3", "i4", "i5"];
    let b = ["i2", "i1", "i3", "i5", "i4"];
    println!("tau {a:?} vs {b:?} = {:.3}", kendall_tau(&a, &b)?);

    let hits = [
        HitRecord::new("u1", "r1", "pool table", [High, High, Medium]),
        HitRecord::new("u1", "r2", "dog menu", [None, High, Low]),
        HitRecord::new("u2", "r1", "pool table", [Low, Low, Low]),
    ];
    let s = agreement_stats(&hits, &LabelEncoding::ORDINAL)?;
    println!(
        "annotator sigma: mean {:.2} median {:.2} max {:.2}",
        s.mean_sigma, s.median_sigma, s.max_sigma
    );
    Ok(())
}
