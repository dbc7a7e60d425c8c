use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::cache::{prompt_hash, CacheEntry, KnowledgeCache};
use super::prompt::{Prompt, KNOWLEDGE_CLOSE, KNOWLEDGE_OPEN};
use super::{ProviderTag, RecKnowledge};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionRequest {
    pub prompt: String,
    pub max_tokens: u32,
    pub temperature: f64,
}

pub trait LanguageModelClient: Send + Sync {
    fn complete(&self, request: &CompletionRequest) -> Result<String>;
}

/// Deterministic offline client: answers with the first `max_chars` characters of the prompt's
/// knowledge section (or of the whole prompt when there are no markers).
#[derive(Debug, Clone)]
pub struct StubClient {
    pub max_chars: usize,
}

impl Default for StubClient {
    fn default() -> Self {
        StubClient { max_chars: 200 }
    }
}

impl StubClient {
    pub fn knowledge_section(prompt: &str) -> &str {
        let Some(open) = prompt.find(KNOWLEDGE_OPEN) else {
            return prompt;
        };
        let body = &prompt[open + KNOWLEDGE_OPEN.len()..];
        let end = body.rfind(KNOWLEDGE_CLOSE).unwrap_or(body.len());
        body[..end].trim()
    }
}

impl LanguageModelClient for StubClient {
    fn complete(&self, request: &CompletionRequest) -> Result<String> {
        let section = Self::knowledge_section(&request.prompt);
        Ok(section.chars().take(self.max_chars).collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RetryPolicy {
    pub max_retries: u32,
    /// Delay before the first retry; doubled on each further attempt.
    pub backoff: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_retries: 3,
            backoff: Duration::from_millis(500),
        }
    }
}

/// What to do once retries are exhausted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Fallback {
    /// Use the raw knowledge text, tagged `raw`.
    #[default]
    Raw,
    /// Abort the stage.
    Fail,
}

/// Runs prompts through a client with retries, caching and bounded concurrency.
pub struct Extractor<'a> {
    client: &'a dyn LanguageModelClient,
    cache: Mutex<KnowledgeCache>,
    pub max_tokens: u32,
    pub temperature: f64,
    pub retry: RetryPolicy,
    pub fallback: Fallback,
    calls: AtomicUsize,
}

impl<'a> Extractor<'a> {
    pub fn new(client: &'a dyn LanguageModelClient, cache: KnowledgeCache) -> Self {
        Extractor {
            client,
            cache: Mutex::new(cache),
            max_tokens: 256,
            temperature: 0.0,
            retry: RetryPolicy::default(),
            fallback: Fallback::Raw,
            calls: AtomicUsize::new(0),
        }
    }

    /// Live client calls issued so far (retries included).
    pub fn client_calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    pub fn into_cache(self) -> KnowledgeCache {
        self.cache.into_inner().unwrap_or_else(|e| e.into_inner())
    }

    fn call_with_retries(&self, prompt: &str) -> Result<String> {
        let request = CompletionRequest {
            prompt: prompt.to_string(),
            max_tokens: self.max_tokens,
            temperature: self.temperature,
        };
        let mut delay = self.retry.backoff;
        let mut attempt = 0;
        loop {
            self.calls.fetch_add(1, Ordering::SeqCst);
            match self.client.complete(&request) {
                Ok(text) => return Ok(text),
                Err(e) if attempt < self.retry.max_retries => {
                    log::warn!("client attempt {} failed: {e}; retrying", attempt + 1);
                    thread::sleep(delay);
                    delay *= 2;
                    attempt += 1;
                }
                Err(e) => return Err(e),
            }
        }
    }

    /// Extracts knowledge for one prompt. `raw` is the prompt's source text, used for empty-input
    /// short-circuiting and for the `raw` fallback.
    pub fn extract(&self, prompt: &Prompt, raw: &str) -> Result<RecKnowledge> {
        let wrap = |text: String, provider_tag| RecKnowledge {
            target: prompt.target,
            subject_id: prompt.subject_id,
            text,
            provider_tag,
        };
        if raw.trim().is_empty() {
            return Ok(wrap(String::new(), ProviderTag::Raw));
        }
        let hash = prompt_hash(&prompt.text);
        if let Some(hit) = self.lock().get(&hash) {
            return Ok(wrap(hit.text.clone(), hit.provider_tag));
        }
        match self.call_with_retries(&prompt.text) {
            Ok(text) => {
                self.lock().insert(CacheEntry {
                    target: prompt.target,
                    subject_id: prompt.subject_id,
                    prompt_hash: hash,
                    text: text.clone(),
                    provider_tag: ProviderTag::Llm,
                })?;
                Ok(wrap(text, ProviderTag::Llm))
            }
            Err(e) => match self.fallback {
                Fallback::Raw => {
                    log::warn!(
                        "{} {}: extraction failed ({e}); falling back to raw knowledge",
                        prompt.target,
                        prompt.subject_id
                    );
                    Ok(wrap(raw.to_string(), ProviderTag::Raw))
                }
                Fallback::Fail => Err(Error::Client(format!(
                    "{} {}: {e}",
                    prompt.target, prompt.subject_id
                ))),
            },
        }
    }

    /// Extracts every job with at most `max_in_flight` concurrent client requests. Results keep the
    /// order of `jobs`.
    pub fn extract_all(&self, jobs: &[(Prompt, String)], max_in_flight: usize) -> Result<Vec<RecKnowledge>> {
        let workers = max_in_flight.clamp(1, jobs.len().max(1));
        // identical prompts would race to the client; resolve each hash once up front
        let mut first_of: std::collections::HashMap<String, usize> = Default::default();
        let mut leaders = Vec::new();
        for (idx, (p, _)) in jobs.iter().enumerate() {
            if first_of.insert(prompt_hash(&p.text), idx).is_none() {
                leaders.push(idx);
            }
        }
        let next = AtomicUsize::new(0);
        let results: Mutex<Vec<Option<Result<RecKnowledge>>>> =
            Mutex::new((0..jobs.len()).map(|_| None).collect());
        thread::scope(|s| {
            for _ in 0..workers {
                s.spawn(|| loop {
                    let n = next.fetch_add(1, Ordering::SeqCst);
                    let Some(&idx) = leaders.get(n) else { break };
                    let (prompt, raw) = &jobs[idx];
                    let out = self.extract(prompt, raw);
                    results.lock().unwrap_or_else(|e| e.into_inner())[idx] = Some(out);
                });
            }
        });
        let mut results = results.into_inner().unwrap_or_else(|e| e.into_inner());
        for (idx, (p, raw)) in jobs.iter().enumerate() {
            if results[idx].is_none() {
                // follower of an earlier identical prompt: now a cache hit (or a repeat fallback)
                results[idx] = Some(self.extract(p, raw));
            }
        }
        results.into_iter().map(|r| r.expect("every job resolved")).collect()
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, KnowledgeCache> {
        self.cache.lock().unwrap_or_else(|e| e.into_inner())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::knowledge::{build_prompt, KeyFactorSet, DEFAULT_ITEM_TEMPLATE};
    use crate::Target;

    struct Counting<C> {
        inner: C,
        calls: AtomicUsize,
    }

    impl<C: LanguageModelClient> LanguageModelClient for Counting<C> {
        fn complete(&self, r: &CompletionRequest) -> Result<String> {
            self.calls.fetch_add(1, Ordering::SeqCst);
            self.inner.complete(r)
        }
    }

    struct AlwaysFails;

    impl LanguageModelClient for AlwaysFails {
        fn complete(&self, _: &CompletionRequest) -> Result<String> {
            Err(Error::Client("connection refused".into()))
        }
    }

    fn item_prompt(id: u32, knowledge: &str) -> Prompt {
        build_prompt(Target::Item, id, knowledge, None, &KeyFactorSet::default(), DEFAULT_ITEM_TEMPLATE)
            .unwrap()
    }

    fn fast_retry() -> RetryPolicy {
        RetryPolicy {
            max_retries: 2,
            backoff: Duration::from_millis(1),
        }
    }

    #[test]
    fn stub_echoes_first_200_chars() {
        let knowledge: String = (0..400).map(|i| char::from(b'a' + (i % 26) as u8)).collect();
        let stub = StubClient::default();
        let ex = Extractor::new(&stub, KnowledgeCache::in_memory());
        let k = ex.extract(&item_prompt(1, &knowledge), &knowledge).unwrap();
        assert_eq!(k.text, knowledge[..200]);
        assert_eq!(k.provider_tag, ProviderTag::Llm);
    }

    #[test]
    fn cache_hit_skips_client() {
        let client = Counting {
            inner: StubClient::default(),
            calls: AtomicUsize::new(0),
        };
        let ex = Extractor::new(&client, KnowledgeCache::in_memory());
        let p = item_prompt(1, "some text");
        let first = ex.extract(&p, "some text").unwrap();
        let second = ex.extract(&p, "some text").unwrap();
        assert_eq!(first, second);
        assert_eq!(client.calls.load(Ordering::SeqCst), 1);
    }

    #[test]
    fn cache_persists_across_runs() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cache.jsonl");
        let client = Counting {
            inner: StubClient::default(),
            calls: AtomicUsize::new(0),
        };
        let jobs: Vec<(Prompt, String)> = (0..5)
            .map(|i| (item_prompt(i, &format!("doc {i}")), format!("doc {i}")))
            .collect();
        for _ in 0..2 {
            let ex = Extractor::new(&client, KnowledgeCache::open(&path).unwrap());
            ex.extract_all(&jobs, 3).unwrap();
        }
        assert_eq!(client.calls.load(Ordering::SeqCst), 5);
        assert_eq!(KnowledgeCache::open(&path).unwrap().len(), 5);
    }

    #[test]
    fn duplicate_prompts_call_once() {
        let client = Counting {
            inner: StubClient::default(),
            calls: AtomicUsize::new(0),
        };
        let ex = Extractor::new(&client, KnowledgeCache::in_memory());
        let jobs: Vec<(Prompt, String)> = (0..8).map(|i| (item_prompt(i, "same"), "same".into())).collect();
        let out = ex.extract_all(&jobs, 4).unwrap();
        assert_eq!(client.calls.load(Ordering::SeqCst), 1);
        assert_eq!(out.iter().map(|k| k.subject_id).collect::<Vec<_>>(), (0..8).collect::<Vec<_>>());
    }

    #[test]
    fn hard_failure_falls_back_to_raw() {
        let mut ex = Extractor::new(&AlwaysFails, KnowledgeCache::in_memory());
        ex.retry = fast_retry();
        let k = ex.extract(&item_prompt(4, "raw body"), "raw body").unwrap();
        assert_eq!(k.text, "raw body");
        assert_eq!(k.provider_tag, ProviderTag::Raw);
        assert_eq!(ex.client_calls(), 3);
        assert!(ex.into_cache().is_empty());
    }

    #[test]
    fn hard_failure_without_fallback_errors() {
        let mut ex = Extractor::new(&AlwaysFails, KnowledgeCache::in_memory());
        ex.retry = fast_retry();
        ex.fallback = Fallback::Fail;
        assert!(matches!(ex.extract(&item_prompt(4, "x"), "x"), Err(Error::Client(_))));
    }

    #[test]
    fn empty_source_skips_client() {
        let ex = Extractor::new(&AlwaysFails, KnowledgeCache::in_memory());
        let k = ex.extract(&item_prompt(4, ""), "").unwrap();
        assert_eq!(k.text, "");
        assert_eq!(ex.client_calls(), 0);
    }

    #[test]
    fn transient_failure_recovers() {
        struct Flaky(AtomicUsize);
        impl LanguageModelClient for Flaky {
            fn complete(&self, _: &CompletionRequest) -> Result<String> {
                if self.0.fetch_add(1, Ordering::SeqCst) < 2 {
                    Err(Error::Client("503".into()))
                } else {
                    Ok("ok".into())
                }
            }
        }
        let client = Flaky(AtomicUsize::new(0));
        let mut ex = Extractor::new(&client, KnowledgeCache::in_memory());
        ex.retry = fast_retry();
        let k = ex.extract(&item_prompt(1, "x"), "x").unwrap();
        assert_eq!(k.text, "ok");
        assert_eq!(k.provider_tag, ProviderTag::Llm);
    }
}
