use std::thread;

use rayon::prelude::*;

use super::prompt::{parse_response, FewShotExample, PromptTemplate};
use super::provider::{CompletionRequest, LlmProvider, ProviderError};
use super::{AnnotateError, AnnotatorConfig, SuggestedAnnotation, SuggestionStatus};
use crate::corpus::{Post, SymptomSet, SymptomVocabulary};
use crate::normalize::SlangLexicon;

/// Renders prompts, calls the provider with retries and parses answers
/// into the closed label schema.
pub struct Suggester<'a> {
    pub provider: &'a dyn LlmProvider,
    pub config: &'a AnnotatorConfig,
    pub template: &'a PromptTemplate,
    pub lexicon: &'a SlangLexicon,
    pub vocab: &'a SymptomVocabulary,
    pub examples: &'a [FewShotExample],
}

impl Suggester<'_> {
    fn call(&self, request: &CompletionRequest) -> Result<String, ProviderError> {
        let mut attempt = 0;
        loop {
            match self.provider.complete(request) {
                Ok(text) => return Ok(text),
                Err(e) if e.is_retryable() && attempt < self.config.max_retries => {
                    log::debug!("provider attempt {} failed: {e}", attempt + 1);
                    thread::sleep(self.config.backoff(attempt));
                    attempt += 1;
                }
                Err(e) => return Err(e),
            }
        }
    }

    /// Never fabricates labels: transport and parse failures come back as
    /// empty suggestions carrying their status and the raw answer.
    pub fn suggest(&self, post: &Post) -> SuggestedAnnotation {
        let request = CompletionRequest {
            model: self.config.model.clone(),
            prompt: self.template.render(post, self.vocab, self.lexicon, self.examples),
            max_tokens: self.config.max_tokens,
        };
        let failed = |status, raw: Option<String>, error: String| SuggestedAnnotation {
            post_id: post.id.clone(),
            drug: None,
            symptoms: SymptomSet::new(),
            flags: Default::default(),
            rationale: String::new(),
            raw_response: raw,
            status,
            error: Some(error),
            template: self.template.id().to_string(),
        };
        let raw = match self.call(&request) {
            Ok(raw) => raw,
            Err(e) => return failed(SuggestionStatus::TransportFailed, None, e.to_string()),
        };
        match parse_response(&raw, self.lexicon, self.vocab) {
            Ok(p) => SuggestedAnnotation {
                post_id: post.id.clone(),
                drug: p.drug,
                symptoms: p.symptoms,
                flags: p.flags,
                rationale: p.rationale,
                raw_response: Some(raw),
                status: SuggestionStatus::Ok,
                error: None,
                template: self.template.id().to_string(),
            },
            Err(e) => failed(SuggestionStatus::ParseFailed, Some(raw), e),
        }
    }

    /// Suggestions for `posts` in order, with at most
    /// `config.parallelism` requests in flight.
    pub fn suggest_batch(&self, posts: &[Post]) -> Result<Vec<SuggestedAnnotation>, AnnotateError> {
        self.config.validate()?;
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(self.config.parallelism)
            .build()
            .map_err(|e| AnnotateError::Config(e.to_string()))?;
        Ok(pool.install(|| posts.par_iter().map(|p| self.suggest(p)).collect()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::annotate::prompt::DEFAULT_TEMPLATE;
    use crate::annotate::provider::MockProvider;
    use crate::corpus::DrugClass;

    fn run(provider: &dyn LlmProvider, retries: u32) -> SuggestedAnnotation {
        let cfg = AnnotatorConfig {
            max_retries: retries,
            backoff_ms: 0,
            ..AnnotatorConfig::default()
        };
        let template = PromptTemplate::builtin(DEFAULT_TEMPLATE).unwrap();
        let (lexicon, vocab) = (SlangLexicon::seed(), SymptomVocabulary::seed());
        let s = Suggester {
            provider,
            config: &cfg,
            template: &template,
            lexicon: &lexicon,
            vocab: &vocab,
            examples: &[],
        };
        s.suggest(&Post::new("p1", "shot some smack"))
    }

    #[test]
    fn parsed_suggestion() {
        let s = run(&MockProvider::always("drug: Heroin; symptoms: nausea, coma"), 0);
        assert_eq!(s.status, SuggestionStatus::Ok);
        assert_eq!(s.drug, Some(DrugClass::Heroin));
        assert_eq!(s.symptoms.len(), 2);
        assert_eq!(s.raw_response.as_deref(), Some("drug: Heroin; symptoms: nausea, coma"));
    }

    #[test]
    fn parse_failure_keeps_raw() {
        let s = run(&MockProvider::always("drug: Kratom"), 0);
        assert_eq!(s.status, SuggestionStatus::ParseFailed);
        assert_eq!(s.drug, None);
        assert_eq!(s.raw_response.as_deref(), Some("drug: Kratom"));
    }

    #[test]
    fn retries_transient_failures() {
        let down = || Err(ProviderError::Transport("down".into()));
        let m = MockProvider::scripted([down(), down(), Ok("drug: LSD; symptoms: none".to_string())]);
        let s = run(&m, 2);
        assert_eq!(s.status, SuggestionStatus::Ok);
        assert_eq!(m.calls(), 3);

        let m = MockProvider::scripted([down(), down(), down()]);
        let s = run(&m, 1);
        assert_eq!(s.status, SuggestionStatus::TransportFailed);
        assert_eq!(m.calls(), 2);
    }

    #[test]
    fn client_errors_are_not_retried() {
        let m = MockProvider::scripted([Err(ProviderError::Http {
            status: 401,
            body: "no".into(),
        })]);
        assert_eq!(run(&m, 3).status, SuggestionStatus::TransportFailed);
        assert_eq!(m.calls(), 1);
    }
}
