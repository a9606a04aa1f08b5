use std::collections::VecDeque;
use std::fmt;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::prompt::extract_post;
use super::{AnnotateError, AnnotatorConfig};
use crate::corpus::SymptomVocabulary;
use crate::normalize::{clean_text, map_slang, SlangLexicon};

/// Wire body of a completion request.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompletionRequest {
    pub model: String,
    pub prompt: String,
    pub max_tokens: u32,
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum ProviderError {
    #[error("transport error: {0}")]
    Transport(String),
    #[error("provider returned HTTP {status}: {body}")]
    Http { status: u16, body: String },
    #[error("malformed provider response: {0}")]
    Malformed(String),
}

impl ProviderError {
    /// Network failures, rate limiting and server errors are retried.
    pub fn is_retryable(&self) -> bool {
        match self {
            ProviderError::Transport(_) => true,
            ProviderError::Http { status, .. } => *status == 429 || *status >= 500,
            ProviderError::Malformed(_) => false,
        }
    }
}

pub trait LlmProvider: Send + Sync {
    fn complete(&self, request: &CompletionRequest) -> Result<String, ProviderError>;
}

#[derive(Deserialize)]
struct CompletionResponse {
    text: String,
}

/// POSTs `{model, prompt, max_tokens}` as JSON and reads `{text}`.
pub struct HttpProvider {
    endpoint: String,
    client: reqwest::blocking::Client,
    credential: Option<String>,
}

impl fmt::Debug for HttpProvider {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("HttpProvider")
            .field("endpoint", &self.endpoint)
            .field("credential", &self.credential.as_ref().map(|_| "<redacted>"))
            .finish()
    }
}

impl HttpProvider {
    /// Reads the bearer token from `cfg.credential_env` if that variable
    /// is set; an unset variable sends no authorization header.
    pub fn new(cfg: &AnnotatorConfig) -> Result<Self, AnnotateError> {
        cfg.validate()?;
        let credential = if cfg.credential_env.is_empty() {
            None
        } else {
            std::env::var(&cfg.credential_env).ok().filter(|v| !v.is_empty())
        };
        let client = reqwest::blocking::Client::builder()
            .timeout(cfg.timeout())
            .build()
            .map_err(|e| AnnotateError::Config(e.to_string()))?;
        Ok(HttpProvider {
            endpoint: cfg.endpoint.clone(),
            client,
            credential,
        })
    }
}

impl LlmProvider for HttpProvider {
    fn complete(&self, request: &CompletionRequest) -> Result<String, ProviderError> {
        let mut req = self.client.post(&self.endpoint).json(request);
        if let Some(token) = &self.credential {
            req = req.bearer_auth(token);
        }
        let resp = req.send().map_err(|e| ProviderError::Transport(e.to_string()))?;
        let status = resp.status();
        if !status.is_success() {
            let body = resp.text().unwrap_or_default();
            return Err(ProviderError::Http {
                status: status.as_u16(),
                body: body.chars().take(500).collect(),
            });
        }
        let parsed: CompletionResponse = resp.json().map_err(|e| ProviderError::Malformed(e.to_string()))?;
        Ok(parsed.text)
    }
}

type Responder = Box<dyn Fn(&CompletionRequest) -> Result<String, ProviderError> + Send + Sync>;

/// Test double: replays a script of responses, or delegates to a closure.
pub struct MockProvider {
    script: Mutex<VecDeque<Result<String, ProviderError>>>,
    responder: Option<Responder>,
    calls: AtomicUsize,
}

impl MockProvider {
    /// Returns the scripted results in order; once exhausted every call
    /// fails with a transport error.
    pub fn scripted<I: IntoIterator<Item = Result<String, ProviderError>>>(script: I) -> Self {
        MockProvider {
            script: Mutex::new(script.into_iter().collect()),
            responder: None,
            calls: AtomicUsize::new(0),
        }
    }

    pub fn always(text: &str) -> Self {
        let text = text.to_string();
        Self::from_fn(move |_| Ok(text.clone()))
    }

    pub fn from_fn<F>(f: F) -> Self
    where
        F: Fn(&CompletionRequest) -> Result<String, ProviderError> + Send + Sync + 'static,
    {
        MockProvider {
            script: Mutex::new(VecDeque::new()),
            responder: Some(Box::new(f)),
            calls: AtomicUsize::new(0),
        }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl LlmProvider for MockProvider {
    fn complete(&self, request: &CompletionRequest) -> Result<String, ProviderError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        if let Some(f) = &self.responder {
            return f(request);
        }
        self.script
            .lock()
            .expect("mock script lock")
            .pop_front()
            .unwrap_or_else(|| Err(ProviderError::Transport("mock script exhausted".into())))
    }
}

/// Offline stand-in for a model: labels the post in the prompt with the
/// first drug named in it and every symptom phrase it contains.
pub struct LexiconMockProvider {
    lexicon: SlangLexicon,
    vocab: SymptomVocabulary,
}

impl LexiconMockProvider {
    pub fn new(lexicon: SlangLexicon, vocab: SymptomVocabulary) -> Self {
        LexiconMockProvider { lexicon, vocab }
    }
}

impl LlmProvider for LexiconMockProvider {
    fn complete(&self, request: &CompletionRequest) -> Result<String, ProviderError> {
        let post = extract_post(&request.prompt).ok_or_else(|| ProviderError::Malformed("prompt has no post".into()))?;
        let cleaned = clean_text(post);
        let drug = map_slang(&cleaned, &self.lexicon)
            .first()
            .map_or("unknown", |m| m.drug.name());
        let tokens: Vec<&str> = cleaned.split(' ').filter(|t| !t.is_empty()).collect();
        let mut symptoms: Vec<usize> = self.vocab.matcher().scan(&tokens).into_iter().map(|m| m.value).collect();
        symptoms.sort_unstable();
        symptoms.dedup();
        let labels: Vec<&str> = symptoms.iter().filter_map(|&i| self.vocab.label(i)).collect();
        Ok(format!(
            "drug: {drug}; symptoms: {}; rationale: lexicon match",
            if labels.is_empty() { "none".to_string() } else { labels.join(", ") }
        ))
    }
}
