use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use super::artifacts::*;
use super::{sha256_file, BackendKind, CliError, Command, CommonArgs, Manifest, RunConfig, Stage};
use crate::corpus::{
    accept_hits, load_corpus, read_jsonl, write_jsonl, AtypicalAspect, Corpus, Provenance,
    ASPECTS_FILE, HITS_FILE, ITEMS_FILE, PROFILES_FILE, QUERIES_FILE, REVIEWS_FILE,
};
use crate::evaluation::{
    agreement_stats, assigned_users, cell_scores, compare_rankings, extraction_report,
    run_ranking_experiment, table_plain_rows, table_star_rows, utility_report, DomainReport,
    EvalReport, ExperimentConfig, LabelEncoding, ScoreSource,
};
use crate::extraction::{
    extract_reviews, label_sentences, ExampleBank, ExtractionConfig, ExtractionMode,
};
use crate::gateway::{Gateway, PromptSet, RecordingBackend, TextGenBackend};
use crate::personalization::{
    classify_utility, generate_profiles, split_profiles, triplets_from_hits, ProfileGenSpec,
    UtilityExampleBank, UtilityMode, UtilityPrediction, UtilityQuery,
};
use crate::scoring::{rank, similarity_matrix, RankingRecord, Strategy};
use crate::text::fold_key;

thread_local! {
    // Text backend supplied by an embedding program instead of the configured one.
    static TEXT_OVERRIDE: std::cell::RefCell<Option<Arc<dyn TextGenBackend>>> = const { std::cell::RefCell::new(None) };
}

pub(super) fn dispatch(
    cmd: Command,
    text: Option<Arc<dyn TextGenBackend>>,
) -> Result<(), CliError> {
    TEXT_OVERRIDE.with(|t| *t.borrow_mut() = text);
    match cmd {
        Command::Ingest { common, input } => ingest(&common, &input),
        Command::Extract {
            common,
            corpus,
            bank,
        } => extract(&common, &corpus, bank.as_deref()),
        Command::ClassifyUtility {
            common,
            corpus,
            extractions,
            utility_bank,
        } => classify(&common, &corpus, &extractions, utility_bank.as_deref()),
        Command::GenProfiles {
            common,
            corpus,
            count,
            prefix,
            dev,
        } => gen_profiles(&common, &corpus, count, &prefix, dev),
        Command::Rank {
            common,
            corpus,
            extractions,
            utilities,
            strategy,
        } => rank_cmd(
            &common,
            &corpus,
            &extractions,
            &utilities,
            strategy.as_deref(),
        ),
        Command::Evaluate {
            common,
            corpus,
            extractions,
            utilities,
            rankings,
            reference,
        } => evaluate(
            &common,
            &corpus,
            extractions.as_deref(),
            utilities.as_deref(),
            rankings.as_deref().zip(reference.as_deref()),
        ),
    }
}

type Inputs = BTreeMap<String, String>;

fn hash_corpus(inputs: &mut Inputs, dir: &Path) -> Result<(), CliError> {
    for name in [
        ITEMS_FILE,
        REVIEWS_FILE,
        ASPECTS_FILE,
        PROFILES_FILE,
        HITS_FILE,
        QUERIES_FILE,
    ] {
        let p = dir.join(name);
        if p.exists() {
            inputs.insert(format!("corpus/{name}"), sha256_file(&p)?);
        }
    }
    Ok(())
}

fn hash_file(inputs: &mut Inputs, key: &str, path: &Path) -> Result<(), CliError> {
    inputs.insert(key.to_string(), sha256_file(path)?);
    Ok(())
}

struct Run {
    cfg: RunConfig,
    prompts: Option<PromptSet>,
    manifest: Manifest,
    out: PathBuf,
    text: Option<Arc<dyn TextGenBackend>>,
}

impl Run {
    /// Resolves the config and fixes the run id from the inputs.
    fn start(
        common: &CommonArgs,
        stage: Stage,
        mut inputs: Inputs,
        needs_prompts: bool,
    ) -> Result<Run, CliError> {
        let cfg = RunConfig::resolve(common, stage)?;
        let prompts = if needs_prompts {
            let p = cfg.prompt_set()?;
            inputs.insert("prompts".into(), p.fixture_sha256.clone());
            if let (BackendKind::Scripted, Some(c)) = (cfg.backend, &cfg.cassette) {
                hash_file(&mut inputs, "cassette", c)?;
            }
            Some(p)
        } else {
            None
        };
        let config = serde_json::to_value(&cfg).map_err(|e| CliError::Config(e.to_string()))?;
        let manifest = Manifest::new(stage.name(), config, cfg.seed, inputs);
        let out = common
            .out
            .clone()
            .unwrap_or_else(|| Path::new("runs").join(&manifest.run_id[..12]));
        let text = TEXT_OVERRIDE.with(|t| t.borrow().clone());
        Ok(Run {
            cfg,
            prompts,
            manifest,
            out,
            text,
        })
    }

    fn gateway(&self) -> Result<(Gateway, Option<Arc<RecordingBackend>>), CliError> {
        self.cfg.gateway(self.text.clone())
    }

    fn prompts(&self) -> &PromptSet {
        self.prompts.as_ref().expect("stage loads prompts")
    }

    /// The output directory, created on first use so a failed stage leaves
    /// nothing behind.
    fn out_dir(&self) -> Result<&Path, CliError> {
        std::fs::create_dir_all(&self.out)
            .map_err(|e| CliError::Data(format!("{}: {e}", self.out.display())))?;
        Ok(&self.out)
    }

    fn write<T: serde::Serialize>(&mut self, name: &str, records: &[T]) -> Result<(), CliError> {
        write_jsonl(&self.out_dir()?.join(name), records)?;
        self.manifest.add_output(&self.out, name)
    }

    fn finish(self, recorder: Option<Arc<RecordingBackend>>) -> Result<(), CliError> {
        if let (Some(r), Some(path)) = (recorder, &self.cfg.record) {
            r.save_merged(path)?;
            println!("recorded {} exchanges to {}", r.len(), path.display());
        }
        self.manifest.write(self.out_dir()?)?;
        println!("{} -> {}", self.manifest.command, self.out.display());
        Ok(())
    }
}

fn same_dir(a: &Path, b: &Path) -> bool {
    match (a.canonicalize(), b.canonicalize()) {
        (Ok(x), Ok(y)) => x == y,
        _ => false,
    }
}

fn ingest(common: &CommonArgs, input: &Path) -> Result<(), CliError> {
    let mut inputs = Inputs::new();
    hash_corpus(&mut inputs, input)?;
    if let Some(out) = &common.out {
        if same_dir(out, input) {
            return Err(CliError::Config("--out must differ from --input".into()));
        }
    }
    let mut run = Run::start(common, Stage::Ingest, inputs, false)?;
    let corpus = load_corpus(input, run.cfg.domain)?;
    corpus.write_canonical(&run.out)?;
    let counts = [
        ("items", corpus.items().len()),
        ("reviews", corpus.reviews().len()),
        ("aspects", corpus.aspects().len()),
        ("profiles", corpus.profiles().len()),
        ("hits", corpus.hits().len()),
        ("queries", corpus.queries().len()),
    ];
    for (k, n) in counts {
        println!("{k}\t{n}");
        run.manifest.stat(k, n);
    }
    for name in [
        ITEMS_FILE,
        REVIEWS_FILE,
        ASPECTS_FILE,
        PROFILES_FILE,
        HITS_FILE,
        QUERIES_FILE,
    ] {
        if run.out.join(name).exists() {
            run.manifest.add_output(&run.out, name)?;
        }
    }
    run.finish(None)
}

fn extract(
    common: &CommonArgs,
    corpus_dir: &Path,
    bank_path: Option<&Path>,
) -> Result<(), CliError> {
    let mut inputs = Inputs::new();
    hash_corpus(&mut inputs, corpus_dir)?;
    if let Some(b) = bank_path {
        hash_file(&mut inputs, "bank", b)?;
    }
    let mut run = Run::start(common, Stage::Extract, inputs, true)?;
    let corpus = load_corpus(corpus_dir, run.cfg.domain)?;
    let (gw, recorder) = run.gateway()?;
    let mut ecfg = ExtractionConfig::new(run.cfg.extraction_mode);
    ecfg.layers = run.cfg.layers.clone();
    let bank = match (run.cfg.extraction_mode, bank_path) {
        (ExtractionMode::Dynamic8, Some(p)) => Some(ExampleBank::load(p, &gw)?),
        (ExtractionMode::Dynamic8, None) => Some(ExampleBank::build(
            label_sentences(&corpus, &run.cfg.layers),
            &gw,
        )?),
        _ => None,
    };
    let mut reviews = corpus.reviews().to_vec();
    reviews.sort_by(|a, b| a.id.cmp(&b.id));
    let results = extract_reviews(&reviews, &ecfg, &gw, run.prompts(), bank.as_ref())?;
    let aspects: Vec<AtypicalAspect> = results
        .iter()
        .flat_map(|r| r.aspects.iter().cloned())
        .collect();
    let partial = results.iter().filter(|r| r.is_partial()).count();
    if !results.is_empty() && partial == results.len() {
        return Err(CliError::Backend(format!(
            "every review failed, first: {}",
            results[0].failures.join("; ")
        )));
    }
    run.write(SYSTEM_ASPECTS, &aspects)?;
    run.write(EXTRACTIONS, &results)?;
    run.manifest.partial = partial > 0;
    run.manifest.stat("reviews", results.len());
    run.manifest.stat("aspects", aspects.len());
    run.manifest.stat("partial_reviews", partial);
    println!(
        "{} reviews, {} aspects, {partial} partial",
        results.len(),
        aspects.len()
    );
    run.finish(recorder)
}

fn load_with_system(corpus_dir: &Path, extractions: &Path, run: &Run) -> Result<Corpus, CliError> {
    let corpus = load_corpus(corpus_dir, run.cfg.domain)?;
    let sys: Vec<AtypicalAspect> = read_jsonl(&extractions.join(SYSTEM_ASPECTS))?
        .into_iter()
        .map(|(_, a)| a)
        .collect();
    Ok(corpus.with_system_aspects(sys)?)
}

fn user_ids(corpus: &Corpus) -> Result<Vec<String>, CliError> {
    let mut ids: Vec<String> = corpus.profiles().iter().map(|p| p.id.clone()).collect();
    if ids.is_empty() {
        return Err(CliError::Data("the corpus has no user profiles".into()));
    }
    ids.sort();
    Ok(ids)
}

fn experiment_config(cfg: &RunConfig) -> ExperimentConfig {
    ExperimentConfig {
        users_per_query: cfg.users_per_query,
        ..Default::default()
    }
}

fn classify(
    common: &CommonArgs,
    corpus_dir: &Path,
    extractions: &Path,
    bank_path: Option<&Path>,
) -> Result<(), CliError> {
    let mut inputs = Inputs::new();
    hash_corpus(&mut inputs, corpus_dir)?;
    hash_file(
        &mut inputs,
        &format!("extractions/{SYSTEM_ASPECTS}"),
        &extractions.join(SYSTEM_ASPECTS),
    )?;
    if let Some(b) = bank_path {
        hash_file(&mut inputs, "utility_bank", b)?;
    }
    let mut run = Run::start(common, Stage::ClassifyUtility, inputs, true)?;
    let corpus = load_with_system(corpus_dir, extractions, &run)?;
    let users = user_ids(&corpus)?;
    let (gw, recorder) = run.gateway()?;

    // keyed on (user, review, folded aspect) so each judgement is asked once
    let mut jobs: BTreeMap<(String, String, String), (String, String, String)> = BTreeMap::new();
    let mut add = |u: &str, r: &str, a: &str| {
        jobs.entry((u.to_string(), r.to_string(), fold_key(a)))
            .or_insert_with(|| (u.to_string(), r.to_string(), a.to_string()));
    };
    for h in corpus
        .hits()
        .iter()
        .filter(|h| h.accepted && corpus.profile(&h.user_id).is_some())
    {
        add(&h.user_id, &h.review_id, &h.aspect_surface);
    }
    let ecfg = experiment_config(&run.cfg);
    let all_layers = [
        crate::corpus::Layer::Primary,
        crate::corpus::Layer::Secondary,
    ];
    for (qi, q) in corpus.queries().iter().enumerate() {
        for user in assigned_users(&ecfg, &users, qi) {
            for item in corpus.items_matching(q) {
                for a in corpus.aspects_of_item(&item.id, Provenance::System, &all_layers)? {
                    add(&user, &a.review_id, &a.surface);
                }
            }
        }
    }
    let jobs: Vec<(String, String, String)> = jobs.into_values().collect();

    let bank = match (run.cfg.utility_mode, bank_path) {
        (UtilityMode::Dynamic4, Some(p)) => Some(UtilityExampleBank::load(p, &gw)?),
        (UtilityMode::Dynamic4, None) => {
            Some(UtilityExampleBank::build(triplets_from_hits(&corpus), &gw)?)
        }
        _ => None,
    };
    let mode = run.cfg.utility_mode;
    let tpl = &run.prompts().utility;
    let outcomes = gw.map(&jobs, |(u, r, a)| {
        let profile = corpus.profile(u).expect("job users have profiles").clone();
        let review = corpus.review(r).expect("job reviews exist");
        let q = UtilityQuery::for_review(profile, review, a)?;
        classify_utility(&q, mode, &gw, tpl, bank.as_ref())
    });
    let mut records = Vec::with_capacity(jobs.len());
    let mut first_err = None;
    for ((u, r, a), o) in jobs.iter().zip(outcomes) {
        let item_id = corpus.review(r).expect("job reviews exist").item_id.clone();
        let mut rec = UtilityPrediction {
            user_id: u.clone(),
            item_id,
            review_id: r.clone(),
            aspect: a.clone(),
            label: None,
            explanation: None,
            error: None,
        };
        match o {
            Ok(out) => {
                rec.label = Some(out.label);
                rec.explanation = out.explanation;
            }
            Err(e) => {
                log::warn!("{u} / {r} / {a}: {e}");
                rec.error = Some(e.to_string());
                first_err.get_or_insert(e);
            }
        }
        records.push(rec);
    }
    let failed = records.iter().filter(|r| r.label.is_none()).count();
    if failed > 0 && failed == records.len() {
        return Err(first_err.expect("a failure was recorded").into());
    }
    run.write(UTILITIES, &records)?;
    run.manifest.partial = failed > 0;
    run.manifest.stat("judgements", records.len());
    run.manifest.stat("failed", failed);
    println!("{} judgements, {failed} failed", records.len());
    run.finish(recorder)
}

fn gen_profiles(
    common: &CommonArgs,
    corpus_dir: &Path,
    count: usize,
    prefix: &str,
    dev: usize,
) -> Result<(), CliError> {
    let mut inputs = Inputs::new();
    hash_corpus(&mut inputs, corpus_dir)?;
    let mut run = Run::start(common, Stage::GenProfiles, inputs, true)?;
    let corpus = load_corpus(corpus_dir, run.cfg.domain)?;
    let mut pool: BTreeMap<String, String> = BTreeMap::new();
    for a in corpus
        .aspects()
        .iter()
        .filter(|a| a.provenance == Provenance::Gold)
    {
        pool.entry(fold_key(&a.surface))
            .or_insert_with(|| a.surface.clone());
    }
    let spec = ProfileGenSpec::new(pool.into_values().collect());
    let (gw, recorder) = run.gateway()?;
    let profiles = generate_profiles(
        &spec,
        run.cfg.domain,
        count,
        prefix,
        run.cfg.seed,
        &gw,
        &run.prompts().profile,
    )?;
    let (main, dev_part) = split_profiles(profiles, dev);
    run.write(PROFILES, &main)?;
    if !dev_part.is_empty() {
        run.write(PROFILES_DEV, &dev_part)?;
    }
    run.manifest.stat("profiles", main.len());
    run.manifest.stat("dev_profiles", dev_part.len());
    println!("{} profiles, {} dev", main.len(), dev_part.len());
    run.finish(recorder)
}

fn read_predictions(path: &Path) -> Result<Vec<UtilityPrediction>, CliError> {
    Ok(read_jsonl(path)?.into_iter().map(|(_, p)| p).collect())
}

fn system_source(corpus: &Corpus, preds: &[UtilityPrediction]) -> Result<ScoreSource, CliError> {
    let mut s = ScoreSource::system(corpus)?;
    for p in preds {
        if let Some(l) = p.label {
            s.set_utility(&p.user_id, &p.item_id, &p.aspect, l);
        }
    }
    Ok(s)
}

fn rank_cmd(
    common: &CommonArgs,
    corpus_dir: &Path,
    extractions: &Path,
    utilities: &Path,
    strategy: Option<&str>,
) -> Result<(), CliError> {
    let strategies = match strategy {
        Some(s) => vec![s.parse::<Strategy>().map_err(CliError::Config)?],
        None => Strategy::ALL.to_vec(),
    };
    let mut inputs = Inputs::new();
    hash_corpus(&mut inputs, corpus_dir)?;
    hash_file(
        &mut inputs,
        &format!("extractions/{SYSTEM_ASPECTS}"),
        &extractions.join(SYSTEM_ASPECTS),
    )?;
    hash_file(&mut inputs, UTILITIES, utilities)?;
    let mut run = Run::start(common, Stage::Rank, inputs, false)?;
    let corpus = load_with_system(corpus_dir, extractions, &run)?;
    if corpus.queries().is_empty() {
        return Err(CliError::Data("the corpus has no queries".into()));
    }
    let users = user_ids(&corpus)?;
    let source = system_source(&corpus, &read_predictions(utilities)?)?;
    let (gw, _) = run.gateway()?;
    let sims = similarities(&corpus, &source, &gw)?;
    let ecfg = experiment_config(&run.cfg);
    let mut records = Vec::new();
    let mut missing = 0;
    for (qi, q) in corpus.queries().iter().enumerate() {
        let items = corpus.items_matching(q);
        for user in assigned_users(&ecfg, &users, qi) {
            let (scores, m) = cell_scores(&source, &user, &items, &sims)?;
            missing += m;
            for &s in &strategies {
                records.push(RankingRecord {
                    query: q.text.clone(),
                    user_id: user.clone(),
                    strategy: s,
                    ranking: rank(s, &scores).ranking,
                    run_id: run.manifest.run_id.clone(),
                });
            }
        }
    }
    run.write(RANKINGS, &records)?;
    run.manifest.stat("rankings", records.len());
    run.manifest.stat("missing_utilities", missing);
    println!(
        "{} rankings, {missing} aspects without utility",
        records.len()
    );
    run.finish(None)
}

fn similarities(
    corpus: &Corpus,
    source: &ScoreSource,
    gw: &Gateway,
) -> Result<HashMap<String, crate::scoring::SimilarityMatrix>, CliError> {
    let built = gw.map(corpus.items(), |it| {
        similarity_matrix(source.aspects(&it.id), gw)
    });
    let mut out = HashMap::new();
    for (it, m) in corpus.items().iter().zip(built) {
        out.insert(it.id.clone(), m?);
    }
    Ok(out)
}

fn evaluate(
    common: &CommonArgs,
    corpus_dir: &Path,
    extractions: Option<&Path>,
    utilities: Option<&Path>,
    files: Option<(&Path, &Path)>,
) -> Result<(), CliError> {
    let mut inputs = Inputs::new();
    hash_corpus(&mut inputs, corpus_dir)?;
    if let Some(e) = extractions {
        hash_file(
            &mut inputs,
            &format!("extractions/{SYSTEM_ASPECTS}"),
            &e.join(SYSTEM_ASPECTS),
        )?;
    }
    if let Some(u) = utilities {
        hash_file(&mut inputs, UTILITIES, u)?;
    }
    if let Some((a, b)) = files {
        hash_file(&mut inputs, "rankings", a)?;
        hash_file(&mut inputs, "reference", b)?;
    }
    let mut run = Run::start(common, Stage::Evaluate, inputs, false)?;
    let corpus = match extractions {
        Some(e) => load_with_system(corpus_dir, e, &run)?,
        None => load_corpus(corpus_dir, run.cfg.domain)?,
    };
    let mut d = DomainReport::default();

    if !corpus.hits().is_empty() {
        let (accepted, _) = accept_hits(corpus.hits())?;
        d.agreement_all = Some(agreement_stats(corpus.hits(), &LabelEncoding::ORDINAL)?);
        if !accepted.is_empty() {
            d.agreement_accepted = Some(agreement_stats(&accepted, &LabelEncoding::ORDINAL)?);
        }
    }
    if extractions.is_some() {
        d.extraction = Some(extraction_report(&corpus, &run.cfg.layers)?);
    }
    let preds = utilities.map(read_predictions).transpose()?;
    if let Some(preds) = &preds {
        let by_key: HashMap<(&str, &str, String), _> = preds
            .iter()
            .filter_map(|p| {
                p.label.map(|l| {
                    (
                        (
                            p.user_id.as_str(),
                            p.review_id.as_str(),
                            fold_key(&p.aspect),
                        ),
                        l,
                    )
                })
            })
            .collect();
        let mut pairs = Vec::new();
        let mut unmatched = 0;
        for h in corpus.hits().iter().filter(|h| h.accepted) {
            let gold = h.consensus.expect("accepted HITs carry a consensus");
            match by_key.get(&(
                h.user_id.as_str(),
                h.review_id.as_str(),
                fold_key(&h.aspect_surface),
            )) {
                Some(p) => pairs.push((gold, *p)),
                None => unmatched += 1,
            }
        }
        if !pairs.is_empty() {
            d.utility = Some(utility_report(&pairs, unmatched)?);
        }
    }
    if let (Some(_), Some(preds)) = (extractions, &preds) {
        if !corpus.queries().is_empty() {
            let users = user_ids(&corpus)?;
            let gt = ScoreSource::gold(&corpus, &run.cfg.layers)?;
            let sys = system_source(&corpus, preds)?;
            let (gw, _) = run.gateway()?;
            let ecfg = experiment_config(&run.cfg);
            for (name, rows) in [("plain", table_plain_rows()), ("star", table_star_rows())] {
                let r = run_ranking_experiment(
                    &corpus,
                    corpus.queries(),
                    &users,
                    &gt,
                    &sys,
                    &rows,
                    &ecfg,
                    &gw,
                )?;
                d.ranking.insert(name.to_string(), r);
            }
        }
    }
    if let Some((a, b)) = files {
        let ra: Vec<RankingRecord> = read_jsonl(a)?.into_iter().map(|(_, r)| r).collect();
        let rb: Vec<RankingRecord> = read_jsonl(b)?.into_iter().map(|(_, r)| r).collect();
        d.ranking_files = Some(compare_rankings(&ra, &rb)?);
    }

    print_summary(&d);
    let mut report = EvalReport {
        run_id: run.manifest.run_id.clone(),
        domains: BTreeMap::new(),
    };
    report
        .domains
        .insert(run.cfg.domain.as_str().to_string(), d);
    report.write_json(&run.out_dir()?.join(EVAL_REPORT))?;
    run.manifest.add_output(&run.out, EVAL_REPORT)?;
    for f in report.write_csv(&run.out)? {
        run.manifest.add_output(&run.out, &f)?;
    }
    run.finish(None)
}

fn print_summary(d: &DomainReport) {
    if let Some(e) = &d.extraction {
        println!(
            "extraction exact   P {:.3} R {:.3} F1 {:.3}",
            e.exact.precision, e.exact.recall, e.exact.f1
        );
        println!(
            "extraction partial P {:.3} R {:.3} F1 {:.3}",
            e.partial.precision, e.partial.recall, e.partial.f1
        );
    }
    if let Some(u) = &d.utility {
        println!(
            "utility acc4 {:.3} acc2 {:.3} F1 {:.3} ({} pairs)",
            u.accuracy_4way, u.accuracy_2way, u.binary.f1, u.pairs
        );
    }
    for (name, r) in &d.ranking {
        for row in &r.table.rows {
            let mean = row.mean.map_or("-".to_string(), |m| format!("{m:+.2}"));
            println!("tau {name} {} vs {}: {mean}", row.system, row.reference);
        }
    }
    if let Some(f) = &d.ranking_files {
        println!(
            "tau files: {} ({} pairs)",
            f.mean.map_or("-".into(), |m| format!("{m:+.2}")),
            f.pairs
        );
    }
}
