use dosewatch_core::classifiers::{
    Algorithm, ForestParams, Hyperparams, KnnParams, LogisticParams, MaxFeatures, ModelSpec, NaiveBayesParams,
    TreeParams,
};
use dosewatch_core::corpus::{load_labeled, load_posts};
use dosewatch_core::features::TfidfParams;
use dosewatch_core::metrics::{render_table, EvalReport, TableRow};
use dosewatch_core::pipeline::{Pipeline, PipelineConfig, Task, TaskModel};
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{normalize_config, read_to_string, with_suffix, write_json, write_jsonl, Resources};
use crate::args::{EvaluateArgs, HyperArgs, PredictArgs, ReportArgs, TrainArgs};
use crate::config::{FileConfig, ModelSection};
use crate::manifest::RunManifest;
use crate::usage;

fn parse_split_features(s: &str) -> anyhow::Result<MaxFeatures> {
    match s.trim().to_ascii_lowercase().as_str() {
        "all" => Ok(MaxFeatures::All),
        "sqrt" => Ok(MaxFeatures::Sqrt),
        n => match n.parse::<usize>() {
            Ok(n) if n > 0 => Ok(MaxFeatures::Count(n)),
            _ => Err(usage(format!("--split-features must be all, sqrt or a positive count, got {s:?}"))),
        },
    }
}

fn tree_params(h: &HyperArgs, m: &ModelSection, d: TreeParams) -> anyhow::Result<TreeParams> {
    let max_features = match h.split_features.as_ref().or(m.split_features.as_ref()) {
        Some(s) => parse_split_features(s)?,
        None => d.max_features,
    };
    Ok(TreeParams {
        max_depth: h.max_depth.or(m.max_depth).or(d.max_depth),
        min_samples_split: h.min_samples_split.or(m.min_samples_split).unwrap_or(d.min_samples_split),
        max_features,
    })
}

/// Flags over config-file values over built-in defaults.
pub fn model_spec(algo: Algorithm, h: &HyperArgs, m: &ModelSection, seed: u64) -> anyhow::Result<ModelSpec> {
    let params = match algo {
        Algorithm::LogisticRegression => {
            let d = LogisticParams::default();
            Hyperparams::LogisticRegression(LogisticParams {
                learning_rate: h.learning_rate.or(m.learning_rate).unwrap_or(d.learning_rate),
                max_iters: h.max_iters.or(m.max_iters).unwrap_or(d.max_iters),
                l2: h.l2.or(m.l2).unwrap_or(d.l2),
                tol: h.tol.or(m.tol).unwrap_or(d.tol),
            })
        }
        Algorithm::NaiveBayes => Hyperparams::NaiveBayes(NaiveBayesParams {
            alpha: h.alpha.or(m.alpha).unwrap_or(NaiveBayesParams::default().alpha),
        }),
        Algorithm::Knn => Hyperparams::Knn(KnnParams {
            k: h.k.or(m.k).unwrap_or(KnnParams::default().k),
        }),
        Algorithm::DecisionTree => Hyperparams::DecisionTree(tree_params(h, m, TreeParams::default())?),
        Algorithm::RandomForest => {
            let d = ForestParams::default();
            Hyperparams::RandomForest(ForestParams {
                n_trees: h.n_trees.or(m.n_trees).unwrap_or(d.n_trees),
                bootstrap: !h.no_bootstrap && m.bootstrap.unwrap_or(d.bootstrap),
                tree: tree_params(h, m, d.tree)?,
            })
        }
    };
    let spec = ModelSpec::new(params, seed);
    spec.validate().map_err(|e| usage(e.to_string()))?;
    Ok(spec)
}

pub fn train(args: TrainArgs, file: &FileConfig) -> anyhow::Result<()> {
    let res = Resources::load(&args.lex, file)?;
    let seed = args.seed.or(file.seed).unwrap_or(0);
    let spec = model_spec(args.algo.into(), &args.hyper, &file.model, seed)?;
    let td = TfidfParams::default();
    let config = PipelineConfig {
        normalize: normalize_config(&args.norm, file),
        tfidf: TfidfParams {
            min_df: args.min_df.or(file.tfidf.min_df).unwrap_or(td.min_df),
            max_features: args.max_vocab.or(file.tfidf.max_vocab).or(td.max_features),
        },
        threshold: args
            .threshold
            .or(file.model.threshold)
            .unwrap_or(PipelineConfig::default().threshold),
    };
    if !(config.threshold > 0.0 && config.threshold < 1.0) {
        return Err(usage(format!("--threshold must lie strictly between 0 and 1, got {}", config.threshold)));
    }
    super::normalizer(config.normalize.clone(), &res)?;
    let task: Task = args.task.into();
    let mut manifest = RunManifest::start(
        "train",
        &json!({"task": task, "spec": spec, "pipeline": config, "resources": res.describe()}),
        Some(seed),
    )?;
    res.record(&mut manifest)?;
    manifest.input(&args.train)?;

    let train = load_labeled(&args.train, &res.vocab)?;
    let pipeline = Pipeline::fit(task, &spec, config, res.lexicon, res.vocab, &train)?;
    std::fs::write(&args.model, pipeline.to_json()?)
        .map_err(|e| anyhow::anyhow!("cannot write {}: {e}", args.model.display()))?;
    manifest.output(&args.model);
    manifest.finish(&args.model)?;
    println!(
        "{}",
        json!({"task": task, "algorithm": spec.algorithm().short_name(), "train": train.len(), "features": pipeline.tfidf().dim()})
    );
    Ok(())
}

fn load_pipeline(path: &std::path::Path) -> anyhow::Result<Pipeline> {
    Ok(Pipeline::from_json(&read_to_string(path)?)?)
}

pub fn predict(args: PredictArgs) -> anyhow::Result<()> {
    let mut manifest = RunManifest::start("predict", &json!({}), None)?;
    manifest.input(&args.model)?;
    manifest.input(&args.input)?;
    let pipeline = load_pipeline(&args.model)?;
    let posts = load_posts(&args.input)?;
    let predictions = posts.iter().map(|p| pipeline.predict(p)).collect::<Result<Vec<_>, _>>()?;
    write_jsonl(&args.output, &predictions)?;
    manifest.output(&args.output);
    manifest.finish(&args.output)?;
    println!("{}", json!({"task": pipeline.task(), "predictions": predictions.len()}));
    Ok(())
}

/// What `evaluate` writes and `report` reads.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalFile {
    pub task: Task,
    pub model: String,
    pub algorithm: Algorithm,
    pub report: EvalReport,
    pub rows: Vec<TableRow>,
}

fn algorithm_of(p: &Pipeline) -> Algorithm {
    match p.model() {
        TaskModel::Drug(m) => m.spec.algorithm(),
        TaskModel::Symptoms(b) => b.spec.algorithm(),
    }
}

fn summary_lines(report: &EvalReport) -> String {
    let mut s = format!(
        "n={}  accuracy={:.4}  micro F1={:.4}  macro F1={:.4}  weighted F1={:.4}",
        report.n, report.accuracy, report.micro.f1, report.macro_avg.f1, report.weighted.f1
    );
    if let Some(subset) = report.subset_accuracy {
        s.push_str(&format!("  subset accuracy={subset:.4}"));
    }
    s
}

pub fn evaluate(args: EvaluateArgs) -> anyhow::Result<()> {
    let output = args.output.clone().unwrap_or_else(|| with_suffix(&args.model, ".eval.json"));
    let mut manifest = RunManifest::start("evaluate", &json!({"name": args.name}), None)?;
    manifest.input(&args.model)?;
    manifest.input(&args.test)?;
    let pipeline = load_pipeline(&args.model)?;
    if let Some(task) = args.task {
        let task: Task = task.into();
        if task != pipeline.task() {
            return Err(usage(format!("--task {task} given, but the model was trained for {}", pipeline.task())));
        }
    }
    let test = load_labeled(&args.test, pipeline.vocab())?;
    let report = pipeline.evaluate(&test)?;
    let algorithm = algorithm_of(&pipeline);
    let model = args.name.unwrap_or_else(|| algorithm.short_name().to_string());
    let rows = TableRow::from_report(&report, &model);
    println!("{}", render_table(&rows));
    println!("{}", summary_lines(&report));
    write_json(
        &output,
        &EvalFile {
            task: pipeline.task(),
            model,
            algorithm,
            report,
            rows,
        },
    )?;
    manifest.output(&output);
    manifest.finish(&output)?;
    Ok(())
}

#[derive(Debug, Serialize)]
struct CombinedReport<'a> {
    models: Vec<ModelSummary<'a>>,
    rows: Vec<TableRow>,
}

#[derive(Debug, Serialize)]
struct ModelSummary<'a> {
    model: &'a str,
    task: Task,
    n: usize,
    accuracy: f64,
    micro_f1: f64,
    macro_f1: f64,
    weighted_f1: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    subset_accuracy: Option<f64>,
}

pub fn report(args: ReportArgs) -> anyhow::Result<()> {
    let mut manifest = RunManifest::start("report", &json!({}), None)?;
    let mut files = Vec::new();
    for path in &args.evals {
        manifest.input(path)?;
        let file: EvalFile = serde_json::from_str(&read_to_string(path)?)
            .map_err(|e| anyhow::anyhow!("{} is not an evaluation report: {e}", path.display()))?;
        files.push(file);
    }
    if files.windows(2).any(|w| w[0].task != w[1].task) {
        anyhow::bail!("reports mix drug and symptom tasks");
    }
    let rows: Vec<TableRow> = files.iter().flat_map(|f| f.rows.iter().cloned()).collect();
    let table = render_table(&rows);
    let combined = CombinedReport {
        models: files
            .iter()
            .map(|f| ModelSummary {
                model: &f.model,
                task: f.task,
                n: f.report.n,
                accuracy: f.report.accuracy,
                micro_f1: f.report.micro.f1,
                macro_f1: f.report.macro_avg.f1,
                weighted_f1: f.report.weighted.f1,
                subset_accuracy: f.report.subset_accuracy,
            })
            .collect(),
        rows,
    };
    write_json(&args.output, &combined)?;
    manifest.output(&args.output);
    if let Some(t) = &args.table {
        std::fs::write(t, format!("{table}\n"))?;
        manifest.output(t);
    }
    manifest.finish(&args.output)?;
    println!("{table}");
    Ok(())
}
