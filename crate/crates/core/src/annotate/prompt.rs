use std::collections::BTreeSet;
use std::path::Path;
use std::str::FromStr;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::AnnotateError;
use crate::corpus::{DrugClass, Flag, Post, SymptomSet, SymptomVocabulary};
use crate::normalize::SlangLexicon;

pub const DEFAULT_TEMPLATE: &str = "annotate-v1";
const V1: &str = include_str!("../../templates/annotate-v1.txt");
const POST_MARKER: &str = "\nPost:\n";

/// A labeled example shown to the model ahead of the post.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FewShotExample {
    pub text: String,
    pub drug: DrugClass,
    pub symptoms: Vec<String>,
    #[serde(default)]
    pub flags: Vec<Flag>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    id: String,
    body: String,
}

fn answer_line(drug: &str, symptoms: &[String], flags: &[Flag]) -> String {
    let join = |items: Vec<&str>| if items.is_empty() { "none".to_string() } else { items.join(", ") };
    format!(
        "drug: {drug}; symptoms: {}; flags: {}",
        join(symptoms.iter().map(String::as_str).collect()),
        join(flags.iter().map(|f| f.name()).collect())
    )
}

impl PromptTemplate {
    pub fn builtin(id: &str) -> Result<Self, AnnotateError> {
        match id {
            DEFAULT_TEMPLATE => Ok(PromptTemplate {
                id: id.into(),
                body: V1.into(),
            }),
            other => Err(AnnotateError::UnknownTemplate(other.into())),
        }
    }

    /// Loads a template file; its id is the file stem.
    pub fn load(path: &Path) -> Result<Self, AnnotateError> {
        let body = std::fs::read_to_string(path).map_err(|source| AnnotateError::Io {
            path: path.display().to_string(),
            source,
        })?;
        if !body.contains("{{post}}") {
            return Err(AnnotateError::Config(format!("{} has no {{{{post}}}} slot", path.display())));
        }
        let id = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "custom".into());
        Ok(PromptTemplate { id, body })
    }

    /// A built-in id, or a path to a template file.
    pub fn resolve(id_or_path: &str) -> Result<Self, AnnotateError> {
        match Self::builtin(id_or_path) {
            Ok(t) => Ok(t),
            Err(_) if Path::new(id_or_path).is_file() => Self::load(Path::new(id_or_path)),
            Err(e) => Err(e),
        }
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn render(
        &self,
        post: &Post,
        vocab: &SymptomVocabulary,
        lexicon: &SlangLexicon,
        examples: &[FewShotExample],
    ) -> String {
        let classes = DrugClass::ALL
            .iter()
            .map(|c| format!("- {}", c.name()))
            .collect::<Vec<_>>()
            .join("\n");
        let symptoms = vocab
            .labels()
            .iter()
            .map(|l| format!("- {l}"))
            .collect::<Vec<_>>()
            .join("\n");
        // One street name per class keeps the guideline short.
        let mut slang = Vec::new();
        for class in DrugClass::ALL {
            if let Some((phrase, _)) = lexicon
                .entries()
                .find(|(p, e)| e.drug == class && p.len() > 2 && **p != class.name().to_lowercase())
            {
                slang.push(format!("\"{phrase}\" is {}", class.name()));
            }
        }
        let examples = if examples.is_empty() {
            String::new()
        } else {
            let mut out = String::from("\nExamples:\n");
            for e in examples {
                out.push_str(&format!(
                    "Post: {}\n{}\n",
                    e.text.replace('\n', " "),
                    answer_line(e.drug.name(), &e.symptoms, &e.flags)
                ));
            }
            out
        };
        self.body
            .replace("{{classes}}", &classes)
            .replace("{{symptoms}}", &symptoms)
            .replace("{{slang}}", &slang.join(", "))
            .replace("{{examples}}", &examples)
            .replace("{{post}}", post.text.trim())
    }
}

/// The post text of a prompt rendered from a template that ends with a
/// `Post:` section.
pub fn extract_post(prompt: &str) -> Option<&str> {
    prompt.rsplit_once(POST_MARKER).map(|(_, post)| post.trim())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedLabels {
    pub drug: Option<DrugClass>,
    pub symptoms: SymptomSet,
    pub flags: BTreeSet<Flag>,
    pub rationale: String,
}

static FIELD: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)\b(drug|symptoms|flags|rationale)\s*:").expect("valid regex"));

fn strip(value: &str) -> &str {
    value.trim().trim_matches(|c: char| c == '"' || c == '\'' || c == '.' || c == ';' || c.is_whitespace())
}

fn is_none(value: &str) -> bool {
    matches!(value.to_lowercase().as_str(), "" | "none" | "null" | "n/a" | "unknown")
}

fn parse_drug(value: &str, lexicon: &SlangLexicon) -> Result<Option<DrugClass>, String> {
    let value = strip(value);
    if is_none(value) {
        return Ok(None);
    }
    DrugClass::from_str(value)
        .ok()
        .or_else(|| lexicon.lookup(value))
        .map(Some)
        .ok_or_else(|| format!("{value:?} is not a drug class"))
}

fn parse_symptoms<'a, I: IntoIterator<Item = &'a str>>(items: I, vocab: &SymptomVocabulary) -> Result<SymptomSet, String> {
    let mut out = SymptomSet::new();
    for item in items {
        let item = strip(item);
        if is_none(item) {
            continue;
        }
        out.insert(vocab.resolve(item).ok_or_else(|| format!("{item:?} is not a symptom label"))?);
    }
    Ok(out)
}

fn parse_flags<'a, I: IntoIterator<Item = &'a str>>(items: I) -> Result<BTreeSet<Flag>, String> {
    let mut out = BTreeSet::new();
    for item in items {
        let item = strip(item);
        if !is_none(item) {
            out.insert(Flag::from_str(item)?);
        }
    }
    Ok(out)
}

fn string_items(value: Option<&Value>) -> Result<Vec<String>, String> {
    match value {
        None | Some(Value::Null) => Ok(Vec::new()),
        Some(Value::String(s)) => Ok(s.split(',').map(str::to_string).collect()),
        Some(Value::Array(items)) => items
            .iter()
            .map(|v| v.as_str().map(str::to_string).ok_or_else(|| format!("non-string item {v}")))
            .collect(),
        Some(other) => Err(format!("unexpected value {other}")),
    }
}

fn parse_json(obj: &serde_json::Map<String, Value>, lexicon: &SlangLexicon, vocab: &SymptomVocabulary) -> Result<ParsedLabels, String> {
    let drug = match obj.get("drug") {
        None => return Err("missing drug field".into()),
        Some(Value::Null) => None,
        Some(Value::String(s)) => parse_drug(s, lexicon)?,
        Some(other) => return Err(format!("drug must be a string, got {other}")),
    };
    let symptoms = string_items(obj.get("symptoms"))?;
    let flags = string_items(obj.get("flags"))?;
    Ok(ParsedLabels {
        drug,
        symptoms: parse_symptoms(symptoms.iter().map(String::as_str), vocab)?,
        flags: parse_flags(flags.iter().map(String::as_str))?,
        rationale: obj.get("rationale").and_then(Value::as_str).unwrap_or_default().trim().to_string(),
    })
}

/// Parses a model answer given as a JSON object or as
/// `drug: X; symptoms: a, b; flags: f; rationale: ...`. Any label that
/// does not resolve to the closed schema fails the whole answer.
pub fn parse_response(raw: &str, lexicon: &SlangLexicon, vocab: &SymptomVocabulary) -> Result<ParsedLabels, String> {
    if let (Some(start), Some(end)) = (raw.find('{'), raw.rfind('}')) {
        if start < end {
            if let Ok(Value::Object(obj)) = serde_json::from_str::<Value>(&raw[start..=end]) {
                return parse_json(&obj, lexicon, vocab);
            }
        }
    }
    let keys: Vec<(String, usize, usize)> = FIELD
        .captures_iter(raw)
        .map(|c| {
            let m = c.get(0).expect("match");
            (c[1].to_lowercase(), m.start(), m.end())
        })
        .collect();
    let field = |name: &str| -> Option<&str> {
        let i = keys.iter().position(|k| k.0 == name)?;
        let end = if name == "rationale" {
            raw.len()
        } else {
            keys.get(i + 1).map_or(raw.len(), |k| k.1)
        };
        Some(raw[keys[i].2..end].lines().next().unwrap_or_default())
    };
    let drug = field("drug").ok_or("missing drug field")?;
    Ok(ParsedLabels {
        drug: parse_drug(drug, lexicon)?,
        symptoms: parse_symptoms(field("symptoms").unwrap_or_default().split(','), vocab)?,
        flags: parse_flags(field("flags").unwrap_or_default().split(','))?,
        rationale: field("rationale").map(|r| r.trim().to_string()).unwrap_or_default(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fixtures() -> (SlangLexicon, SymptomVocabulary) {
        (SlangLexicon::seed(), SymptomVocabulary::seed())
    }

    #[test]
    fn line_format() {
        let (lex, vocab) = fixtures();
        let p = parse_response("drug: Heroin; symptoms: nausea, coma", &lex, &vocab).unwrap();
        assert_eq!(p.drug, Some(DrugClass::Heroin));
        let expected: SymptomSet = ["nausea", "coma"].iter().map(|l| vocab.index_of(l).unwrap()).collect();
        assert_eq!(p.symptoms, expected);
    }

    #[test]
    fn json_format_with_empty_symptoms() {
        let (lex, vocab) = fixtures();
        let p = parse_response(
            "Sure! {\"drug\": \"molly\", \"symptoms\": [], \"rationale\": \"slang\"}",
            &lex,
            &vocab,
        )
        .unwrap();
        assert_eq!(p.drug, Some(DrugClass::Ecstasy));
        assert!(p.symptoms.is_empty());
        assert_eq!(p.rationale, "slang");
    }

    #[test]
    fn rejects_out_of_schema_labels() {
        let (lex, vocab) = fixtures();
        assert!(parse_response("drug: Kratom", &lex, &vocab).is_err());
        assert!(parse_response("drug: Heroin; symptoms: sadness", &lex, &vocab).is_err());
        assert!(parse_response("I cannot help with that.", &lex, &vocab).is_err());
        assert!(parse_response("drug: Heroin; flags: maybe", &lex, &vocab).is_err());
    }

    #[test]
    fn flags_rationale_and_unknown() {
        let (lex, vocab) = fixtures();
        let p = parse_response(
            "Drug: unknown; Symptoms: none; Flags: polydrug uncertainty; Rationale: mixed pills; unclear",
            &lex,
            &vocab,
        )
        .unwrap();
        assert_eq!(p.drug, None);
        assert!(p.flags.contains(&Flag::PolydrugUncertainty));
        assert_eq!(p.rationale, "mixed pills; unclear");
    }

    #[test]
    fn render_embeds_schema_and_round_trips_post() {
        let (lex, vocab) = fixtures();
        let t = PromptTemplate::builtin(DEFAULT_TEMPLATE).unwrap();
        let example = FewShotExample {
            text: "took too much smack".into(),
            drug: DrugClass::Heroin,
            symptoms: vec!["nausea".into()],
            flags: vec![],
        };
        let prompt = t.render(&Post::new("1", "i took molly\nand passed out"), &vocab, &lex, &[example]);
        for c in DrugClass::ALL {
            assert!(prompt.contains(c.name()));
        }
        for l in vocab.labels() {
            assert!(prompt.contains(l.as_str()));
        }
        assert!(prompt.contains("polydrug_uncertainty"));
        assert!(prompt.contains("drug: Heroin; symptoms: nausea; flags: none"));
        assert_eq!(extract_post(&prompt), Some("i took molly\nand passed out"));
        assert!(PromptTemplate::builtin("nope").is_err());
    }
}
