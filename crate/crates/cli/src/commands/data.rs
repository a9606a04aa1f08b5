use std::collections::HashSet;

use dosewatch_core::corpus::{
    balance, class_counts, deduplicate, filter_relevant, load_corpus, load_labeled, split as split_corpus,
    write_labeled, write_posts, BalanceStrategy, Corpus,
};
use dosewatch_core::{DrugClass, Post, SplitConfig};
use serde_json::json;

use super::{normalize_config, normalizer, write_jsonl, Resources};
use crate::args::{IngestArgs, PreprocessArgs, SplitArgs};
use crate::config::FileConfig;
use crate::manifest::RunManifest;
use crate::usage;

fn dedup_and_filter<T: AsRef<Post>>(items: Vec<T>, keep_irrelevant: bool, res: &Resources) -> (Vec<T>, usize, usize) {
    let before = items.len();
    let items = deduplicate(items);
    let duplicates = before - items.len();
    if keep_irrelevant {
        return (items, duplicates, 0);
    }
    let before = items.len();
    let items = filter_relevant(items, &res.lexicon, &res.vocab);
    let irrelevant = before - items.len();
    (items, duplicates, irrelevant)
}

pub fn ingest(args: IngestArgs, file: &FileConfig) -> anyhow::Result<()> {
    let res = Resources::load(&args.lex, file)?;
    let config = json!({
        "labeled": args.labeled,
        "filter_relevant": !args.keep_irrelevant,
        "resources": res.describe(),
    });
    let mut manifest = RunManifest::start("ingest", &config, None)?;
    res.record(&mut manifest)?;

    let mut posts = Vec::new();
    let mut labeled = Vec::new();
    for path in &args.inputs {
        manifest.input(path)?;
        match load_corpus(path, args.labeled, &res.vocab)? {
            Corpus::Unlabeled(p) => posts.extend(p),
            Corpus::Labeled(l) => labeled.extend(l),
        }
    }
    let ids: Vec<&str> = if args.labeled {
        labeled.iter().map(|l| l.post.id.as_str()).collect()
    } else {
        posts.iter().map(|p| p.id.as_str()).collect()
    };
    let mut seen = HashSet::new();
    if let Some(id) = ids.iter().find(|id| !seen.insert(**id)) {
        anyhow::bail!("post id {id:?} appears in more than one input");
    }
    let read = ids.len();

    let (written, duplicates, irrelevant) = if args.labeled {
        let (items, d, i) = dedup_and_filter(labeled, args.keep_irrelevant, &res);
        write_labeled(&args.output, &items, &res.vocab)?;
        (items.len(), d, i)
    } else {
        let (items, d, i) = dedup_and_filter(posts, args.keep_irrelevant, &res);
        write_posts(&args.output, &items)?;
        (items.len(), d, i)
    };
    manifest.output(&args.output);
    manifest.finish(&args.output)?;
    println!(
        "{}",
        json!({"read": read, "duplicates": duplicates, "irrelevant": irrelevant, "written": written})
    );
    Ok(())
}

pub fn preprocess(args: PreprocessArgs, file: &FileConfig) -> anyhow::Result<()> {
    let res = Resources::load(&args.lex, file)?;
    let config = normalize_config(&args.norm, file);
    let normalizer = normalizer(config.clone(), &res)?;
    let mut manifest = RunManifest::start("preprocess", &json!({"normalize": config, "resources": res.describe()}), None)?;
    res.record(&mut manifest)?;
    manifest.input(&args.input)?;
    let posts = dosewatch_core::corpus::load_posts(&args.input)?;
    write_jsonl(&args.output, posts.iter().map(|p| normalizer.normalize(p)))?;
    manifest.output(&args.output);
    manifest.finish(&args.output)?;
    println!("{}", json!({"documents": posts.len()}));
    Ok(())
}

pub fn split(args: SplitArgs, file: &FileConfig) -> anyhow::Result<()> {
    let res = Resources::load(&args.lex, file)?;
    let d = SplitConfig::default();
    let cfg = SplitConfig {
        train_fraction: args.fraction.or(file.split.fraction).unwrap_or(d.train_fraction),
        seed: args.seed.or(file.seed).unwrap_or(d.seed),
        stratify_by_drug: !args.no_stratify && file.split.stratify.unwrap_or(d.stratify_by_drug),
    };
    if !(cfg.train_fraction > 0.0 && cfg.train_fraction < 1.0) {
        return Err(usage(format!("--fraction must lie strictly between 0 and 1, got {}", cfg.train_fraction)));
    }
    let balanced = args.balance || file.split.balance.unwrap_or(false);
    let mut manifest = RunManifest::start(
        "split",
        &json!({"split": cfg, "balance": balanced, "resources": res.describe()}),
        Some(cfg.seed),
    )?;
    res.record(&mut manifest)?;
    manifest.input(&args.input)?;

    let mut corpus = load_labeled(&args.input, &res.vocab)?;
    if balanced {
        corpus = balance(corpus, BalanceStrategy::DownsampleToMin, &DrugClass::ALL, cfg.seed)?;
    }
    let n = corpus.len();
    let parts = split_corpus(corpus, &cfg)?;
    write_labeled(&args.train, &parts.train, &res.vocab)?;
    write_labeled(&args.test, &parts.test, &res.vocab)?;
    manifest.output(&args.train);
    manifest.output(&args.test);
    manifest.finish(&args.train)?;
    let counts = |items: &[dosewatch_core::LabeledPost]| {
        class_counts(items)
            .into_iter()
            .map(|(c, n)| (c.name().to_string(), json!(n)))
            .collect::<serde_json::Map<String, serde_json::Value>>()
    };
    let undersized: Vec<&str> = parts.undersized_classes.iter().map(|c| c.name()).collect();
    println!(
        "{}",
        json!({
            "total": n,
            "train": parts.train.len(),
            "test": parts.test.len(),
            "train_classes": counts(&parts.train),
            "test_classes": counts(&parts.test),
            "undersized_classes": undersized,
        })
    );
    Ok(())
}
