use std::collections::{BTreeSet, HashMap};
use std::io::{BufRead, BufReader};
use std::path::Path;

use anyhow::Context;
use dosewatch_core::annotate::{
    run_round, AnnotationRecord, AnnotatorConfig, DecisionInput, HttpProvider, LexiconMockProvider, LlmProvider,
    PromptTemplate, QueueConfig, QueueStore, Reviewer, RoundContext,
};
use dosewatch_core::corpus::{load_labeled, load_posts};
use dosewatch_core::metrics::{fleiss_kappa, interpret_kappa, multilabel_kappa, rating_table, KappaReport, MultilabelKappa};
use dosewatch_core::{DrugClass, Flag, LabeledPost, SymptomSet, SymptomVocabulary};
use dosewatch_service::ApiConfig;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{with_suffix, write_json, Resources};
use crate::args::{AnnotateRoundArgs, KappaArgs, MergeArg, ProviderArg, ServeArgs};
use crate::config::FileConfig;
use crate::manifest::RunManifest;
use crate::usage;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KappaFile {
    pub annotators: Vec<String>,
    pub n_items: usize,
    pub drug: KappaReport,
    pub drug_band: String,
    pub symptoms: MultilabelKappa,
    pub symptoms_band: Option<String>,
}

fn file_label(path: &Path) -> String {
    path.file_name().map_or_else(|| path.display().to_string(), |n| n.to_string_lossy().into_owned())
}

/// Lines up the annotators' files by post id, in the first file's order.
fn align(files: &[(String, Vec<LabeledPost>)]) -> anyhow::Result<Vec<Vec<&LabeledPost>>> {
    let (first_name, first) = &files[0];
    let ids: BTreeSet<&str> = first.iter().map(|l| l.post.id.as_str()).collect();
    let mut columns = Vec::new();
    for (name, items) in files {
        let by_id: HashMap<&str, &LabeledPost> = items.iter().map(|l| (l.post.id.as_str(), l)).collect();
        let theirs: BTreeSet<&str> = by_id.keys().cloned().collect();
        if theirs != ids {
            let missing: Vec<&&str> = ids.difference(&theirs).take(5).collect();
            let extra: Vec<&&str> = theirs.difference(&ids).take(5).collect();
            anyhow::bail!(
                "{name} and {first_name} cover different posts (missing {missing:?}, extra {extra:?}); every annotator must label the same items"
            );
        }
        columns.push(first.iter().map(|l| by_id[l.post.id.as_str()]).collect());
    }
    Ok(columns)
}

pub fn kappa(args: KappaArgs, file: &FileConfig) -> anyhow::Result<()> {
    let res = Resources::load(&args.lex, file)?;
    let output = args
        .output
        .clone()
        .unwrap_or_else(|| with_suffix(&args.annotations[0], ".kappa.json"));
    let mut manifest = RunManifest::start("kappa", &json!({"resources": res.describe()}), None)?;
    res.record(&mut manifest)?;
    let mut files = Vec::new();
    for path in &args.annotations {
        manifest.input(path)?;
        files.push((file_label(path), load_labeled(path, &res.vocab)?));
    }
    if files[0].1.is_empty() {
        anyhow::bail!("{} has no annotations", files[0].0);
    }
    let columns = align(&files)?;
    let drugs: Vec<Vec<DrugClass>> = columns.iter().map(|c| c.iter().map(|l| l.drug).collect()).collect();
    let symptoms: Vec<Vec<SymptomSet>> = columns
        .iter()
        .map(|c| c.iter().map(|l| l.symptoms.clone()).collect())
        .collect();
    let drug = fleiss_kappa(&rating_table(&drugs, &DrugClass::ALL)?, columns.len())?;
    let symptoms = multilabel_kappa(&symptoms, res.vocab.labels())?;
    let report = KappaFile {
        annotators: files.iter().map(|(n, _)| n.clone()).collect(),
        n_items: drug.n_items,
        drug_band: interpret_kappa(drug.kappa).label().to_string(),
        symptoms_band: symptoms.macro_kappa.map(|k| interpret_kappa(k).label().to_string()),
        drug,
        symptoms,
    };
    println!("items {}  annotators {}", report.n_items, report.annotators.len());
    println!("drug      kappa {:.4}  {}", report.drug.kappa, report.drug_band);
    match report.symptoms.macro_kappa {
        Some(k) => println!(
            "symptoms  kappa {k:.4}  {}  (mean over {} labels)",
            report.symptoms_band.as_deref().unwrap_or_default(),
            report.symptoms.per_label.len()
        ),
        None => println!("symptoms  kappa n/a  (no label had both values)"),
    }
    write_json(&output, &report)?;
    manifest.output(&output);
    manifest.finish(&output)?;
    Ok(())
}

fn queue_config(file: &FileConfig, required: Option<usize>, merge: Option<MergeArg>) -> anyhow::Result<QueueConfig> {
    let d = QueueConfig::default();
    let q = &file.queue;
    let cfg = QueueConfig {
        required_decisions: required.or(q.required_decisions).unwrap_or(d.required_decisions),
        merge: merge.map(Into::into).or(q.merge).unwrap_or(d.merge),
        adjudicator: q.adjudicator.clone().unwrap_or(d.adjudicator),
        snapshot_every: q.snapshot_every.unwrap_or(d.snapshot_every),
    };
    if cfg.required_decisions == 0 {
        return Err(usage("--required must be at least 1"));
    }
    Ok(cfg)
}

#[derive(Debug, Deserialize)]
struct DecisionLine {
    #[serde(alias = "id")]
    post_id: String,
    annotator: String,
    drug: String,
    #[serde(default)]
    symptoms: Vec<String>,
    #[serde(default)]
    flags: Vec<String>,
}

/// Decisions prepared ahead of time, plus optional blanket acceptance of
/// usable suggestions under one annotator id.
struct ScriptedReviewer {
    decisions: HashMap<(String, String), DecisionInput>,
    annotators: Vec<String>,
    accept_as: Option<String>,
    adjudicator: String,
}

impl ScriptedReviewer {
    fn load(path: Option<&Path>, vocab: &SymptomVocabulary, accept_as: Option<String>, adjudicator: &str) -> anyhow::Result<Self> {
        let mut decisions = HashMap::new();
        let mut annotators = BTreeSet::new();
        if let Some(path) = path {
            let f = std::fs::File::open(path).with_context(|| format!("cannot read {}", path.display()))?;
            for (i, line) in BufReader::new(f).lines().enumerate() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                let at = || format!("{} line {}", path.display(), i + 1);
                let d: DecisionLine = serde_json::from_str(&line).with_context(at)?;
                let drug: DrugClass = d.drug.parse().with_context(at)?;
                let symptoms = d
                    .symptoms
                    .iter()
                    .map(|s| vocab.index_of(s).ok_or_else(|| anyhow::anyhow!("{}: unknown symptom {s:?}", at())))
                    .collect::<anyhow::Result<SymptomSet>>()?;
                let flags = d
                    .flags
                    .iter()
                    .map(|f| f.parse::<Flag>().map_err(|e| anyhow::anyhow!("{}: {e}", at())))
                    .collect::<anyhow::Result<BTreeSet<Flag>>>()?;
                if d.annotator != adjudicator {
                    annotators.insert(d.annotator.clone());
                }
                if decisions
                    .insert((d.post_id.clone(), d.annotator.clone()), DecisionInput { drug, symptoms, flags })
                    .is_some()
                {
                    anyhow::bail!("{}: second decision by {} on {}", at(), d.annotator, d.post_id);
                }
            }
        }
        if let Some(a) = &accept_as {
            annotators.insert(a.clone());
        }
        Ok(ScriptedReviewer {
            decisions,
            annotators: annotators.into_iter().collect(),
            accept_as,
            adjudicator: adjudicator.to_string(),
        })
    }
}

impl Reviewer for ScriptedReviewer {
    fn annotators(&self) -> Vec<String> {
        self.annotators.clone()
    }

    fn decide(&mut self, record: &AnnotationRecord, annotator: &str) -> Option<DecisionInput> {
        if let Some(d) = self.decisions.remove(&(record.post.id.clone(), annotator.to_string())) {
            return Some(d);
        }
        if self.accept_as.as_deref() == Some(annotator) {
            let input = DecisionInput::from_suggestion(record.suggestion.as_ref()?)?;
            return (!input.symptoms.is_empty() || !input.flags.is_empty()).then_some(input);
        }
        None
    }

    fn adjudicate(&mut self, record: &AnnotationRecord) -> Option<DecisionInput> {
        self.decisions.remove(&(record.post.id.clone(), self.adjudicator.clone()))
    }
}

fn annotator_config(args: &AnnotateRoundArgs, file: &FileConfig) -> anyhow::Result<AnnotatorConfig> {
    let mut cfg = file.annotator.clone().unwrap_or_default();
    if let Some(v) = &args.endpoint {
        cfg.endpoint = v.clone();
    }
    if let Some(v) = &args.llm_model {
        cfg.model = v.clone();
    }
    if let Some(v) = &args.template {
        cfg.template_id = v.clone();
    }
    if let Some(v) = args.timeout_ms {
        cfg.timeout_ms = v;
    }
    if let Some(v) = args.max_retries {
        cfg.max_retries = v;
    }
    if let Some(v) = &args.credential_env {
        cfg.credential_env = v.clone();
    }
    if let Some(v) = args.parallelism {
        cfg.parallelism = v;
    }
    cfg.validate().map_err(|e| usage(e.to_string()))?;
    Ok(cfg)
}

pub fn annotate_round(args: AnnotateRoundArgs, file: &FileConfig) -> anyhow::Result<()> {
    let res = Resources::load(&args.lex, file)?;
    let queue_cfg = queue_config(file, args.required, args.merge)?;
    let ann_cfg = annotator_config(&args, file)?;
    let template = PromptTemplate::resolve(&ann_cfg.template_id).map_err(|e| usage(e.to_string()))?;
    if args.round == 0 {
        return Err(usage("--round starts at 1"));
    }
    let provider_name = match args.provider {
        ProviderArg::Mock => "mock",
        ProviderArg::Http => "http",
    };
    // The credential itself never reaches the manifest; only the name of
    // the variable it is read from does.
    let mut manifest = RunManifest::start(
        "annotate-round",
        &json!({
            "round": args.round,
            "provider": provider_name,
            "annotator": ann_cfg,
            "queue": queue_cfg,
            "accept_as": args.accept_as,
            "resources": res.describe(),
        }),
        None,
    )?;
    res.record(&mut manifest)?;
    manifest.input(&args.posts)?;
    if let Some(d) = &args.decisions {
        manifest.input(d)?;
    }

    let posts = load_posts(&args.posts)?;
    std::fs::create_dir_all(&args.queue).with_context(|| format!("cannot create {}", args.queue.display()))?;
    let mut store = QueueStore::open(&args.queue, queue_cfg.clone(), res.vocab.clone())?;
    let mut reviewer = ScriptedReviewer::load(
        args.decisions.as_deref(),
        &res.vocab,
        args.accept_as.clone(),
        &queue_cfg.adjudicator,
    )?;
    let provider: Box<dyn LlmProvider> = match args.provider {
        ProviderArg::Mock => Box::new(LexiconMockProvider::new(res.lexicon.clone(), res.vocab.clone())),
        ProviderArg::Http => Box::new(HttpProvider::new(&ann_cfg)?),
    };
    let ctx = RoundContext {
        provider: provider.as_ref(),
        config: &ann_cfg,
        template: &template,
        lexicon: &res.lexicon,
    };
    let report = run_round(&mut store, &ctx, &posts, args.round, &mut reviewer)?;

    let report_path = args.queue.join(format!("round-{}.report.json", args.round));
    write_json(&report_path, &report)?;
    manifest.output(&report_path);
    manifest.output(&args.queue.join(dosewatch_core::annotate::EVENTS_FILE));
    if let Some(gold) = &args.gold {
        store.write_gold(gold, None)?;
        manifest.output(gold);
    }
    manifest.finish(&report_path)?;
    println!(
        "{}",
        json!({
            "round": report.round,
            "closed": report.closed,
            "items": report.items,
            "decided": report.decided,
            "corrected": report.corrected,
            "correction_rate": report.correction_rate,
            "gold_total": report.gold_total,
        })
    );
    Ok(())
}

pub fn serve(args: ServeArgs, file: &FileConfig) -> anyhow::Result<()> {
    let res = Resources::load(&args.lex, file)?;
    let d = ApiConfig::default();
    let s = &file.serve;
    let config = ApiConfig {
        bind: args.bind.or(s.bind).unwrap_or(d.bind),
        port: args.port.or(s.port).unwrap_or(d.port),
        store: args.store.clone().or_else(|| s.store.clone()).unwrap_or(d.store),
        static_dir: args.static_dir.clone().or_else(|| s.static_dir.clone()),
        cors_origins: if args.cors_origins.is_empty() {
            s.cors_origins.clone().unwrap_or_default()
        } else {
            args.cors_origins.clone()
        },
        queue: queue_config(file, args.required, args.merge)?,
    };
    config.validate().map_err(|e| usage(e.to_string()))?;
    let mut manifest = RunManifest::start("serve", &json!({"api": config, "resources": res.describe()}), None)?;
    res.record(&mut manifest)?;
    manifest.output(&config.store);
    manifest.write(&config.store)?;
    let state = dosewatch_service::open_state(&config, res.lexicon, res.vocab)?;
    eprintln!("serving {} on http://{}", config.store.display(), config.addr());
    dosewatch_service::run_blocking(config, state)?;
    Ok(())
}
