//! Every CLI stage in order on the toy corpus, replayed from its cassette:
//! ingest, extract, classify-utility, rank, evaluate. Outputs go to a
//! temporary directory unless one is given.
//!
//! ```text
//! cargo run --example full_pipeline [-- OUT_DIR]
//! ```

use std::path::{Path, PathBuf};

fn atars(args: &[&str]) {
    let argv = std::iter::once("atars").chain(args.iter().copied());
    let code = atars::cli::run(argv);
    assert_eq!(code, 0, "atars {} exited with {code}", args.join(" "));
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let toy = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/toy");
    let tmp = tempfile::tempdir()?;
    let out: PathBuf = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| tmp.path().to_path_buf());
    let p = |x: &str| out.join(x).to_string_lossy().into_owned();
    let config = toy.join("run.toml").to_string_lossy().into_owned();
    let cfg = ["--config", config.as_str()];

    atars(
        &[
            &[
                "ingest",
                "--input",
                &toy.to_string_lossy(),
                "--out",
                &p("corpus"),
            ][..],
            &cfg,
        ]
        .concat(),
    );
    atars(
        &[
            &["extract", "--corpus", &p("corpus"), "--out", &p("extract")][..],
            &cfg,
        ]
        .concat(),
    );
    atars(
        &[
            &[
                "classify-utility",
                "--corpus",
                &p("corpus"),
                "--extractions",
                &p("extract"),
                "--out",
                &p("utility"),
            ][..],
            &cfg,
        ]
        .concat(),
    );
    let utilities = p("utility/utilities.jsonl");
    atars(
        &[
            &[
                "rank",
                "--corpus",
                &p("corpus"),
                "--extractions",
                &p("extract"),
                "--utilities",
                &utilities,
                "--out",
                &p("rank"),
            ][..],
            &cfg,
        ]
        .concat(),
    );
    atars(
        &[
            &[
                "evaluate",
                "--corpus",
                &p("corpus"),
                "--extractions",
                &p("extract"),
                "--utilities",
                &utilities,
                "--out",
                &p("eval"),
            ][..],
            &cfg,
        ]
        .concat(),
    );

    let report: serde_json::Value =
        serde_json::from_slice(&std::fs::read(out.join("eval/eval_report.json"))?)?;
    println!(
        "{}",
        serde_json::to_string_pretty(&report["domains"]["restaurants"]["extraction"])?
    );
    for f in ["tau_restaurants_plain.csv", "tau_restaurants_star.csv"] {
        println!(
            "{f}\n{}",
            std::fs::read_to_string(out.join("eval").join(f))?
        );
    }
    Ok(())
}
