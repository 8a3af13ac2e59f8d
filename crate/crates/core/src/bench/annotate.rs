//! Annotation clients: turn a rendered prompt into an (instruction, output)
//! pair. [`MockAnnotator`] is deterministic and offline; [`RemoteAnnotator`]
//! posts `{"prompt": ...}` to an HTTP endpoint and expects `{"text": ...}`
//! where `text` is itself a JSON object with `instruction` and `output`.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{
    make_record, normalize_metadata, render_prompt, BenchError, BenchRecord, ClipMetadata, PromptTemplate, Result,
    TagRules, TempoTermTable,
};

/// Environment variable holding the bearer token for the remote client.
pub const ANNOTATION_TOKEN_ENV: &str = "OMKIT_ANNOTATION_TOKEN";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Annotation {
    pub instruction: String,
    pub output: String,
}

pub trait AnnotationClient: Send + Sync {
    fn annotate(&self, prompt: &str) -> Result<Annotation>;
}

pub fn annotate(client: &dyn AnnotationClient, prompt: &str) -> Result<Annotation> {
    if prompt.trim().is_empty() {
        return Err(BenchError::EmptyPrompt);
    }
    client.annotate(prompt)
}

/// Annotates every prompt with at most `max_in_flight` concurrent requests.
/// Results keep the input order.
pub fn annotate_all(client: &dyn AnnotationClient, prompts: &[String], max_in_flight: usize) -> Vec<Result<Annotation>> {
    let workers = max_in_flight.clamp(1, prompts.len().max(1));
    let next = AtomicUsize::new(0);
    let slots: Vec<Mutex<Option<Result<Annotation>>>> = prompts.iter().map(|_| Mutex::new(None)).collect();
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= prompts.len() {
                    break;
                }
                let r = annotate(client, &prompts[i]);
                *slots[i].lock().unwrap() = Some(r);
            });
        }
    });
    slots
        .into_iter()
        .map(|m| m.into_inner().unwrap().expect("every slot filled"))
        .collect()
}

/// Normalizes, prompts and annotates every clip; fails as a whole if any
/// clip fails so no partial dataset is produced.
pub fn build_annotated_records(
    metas: &[ClipMetadata],
    template: &PromptTemplate,
    client: &dyn AnnotationClient,
    dataset: &str,
    max_in_flight: usize,
) -> Result<Vec<BenchRecord>> {
    let table = TempoTermTable::default();
    let rules = TagRules::default();
    let prompts = metas
        .iter()
        .map(|m| render_prompt(template, &normalize_metadata(m, &table, &rules)?))
        .collect::<Result<Vec<_>>>()?;
    annotate_all(client, &prompts, max_in_flight)
        .into_iter()
        .zip(metas)
        .map(|(a, m)| {
            let a = a?;
            make_record(&a.instruction, &a.output, &m.audio_filename, template.task().as_str(), dataset)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MockTemplates {
    pub instructions: Vec<String>,
    pub order: Vec<String>,
    pub sentences: std::collections::BTreeMap<String, String>,
    pub fallback: String,
}

impl Default for MockTemplates {
    fn default() -> Self {
        serde_json::from_str(include_str!("../../data/mock_templates.json")).expect("shipped mock templates parse")
    }
}

/// Offline annotator: reads the `- key: value` lines of the prompt's
/// metadata block and emits one fixed sentence per attribute.
#[derive(Debug, Clone, Default)]
pub struct MockAnnotator {
    templates: MockTemplates,
}

impl MockAnnotator {
    pub fn new(templates: MockTemplates) -> Self {
        Self { templates }
    }

    fn attributes(prompt: &str) -> Vec<(String, String)> {
        prompt
            .lines()
            .skip_while(|l| l.trim() != "Metadata:")
            .skip(1)
            .filter_map(|l| {
                let (k, v) = l.trim().strip_prefix("- ")?.split_once(':')?;
                Some((k.trim().to_string(), v.trim().to_string()))
            })
            .filter(|(_, v)| !v.is_empty())
            .collect()
    }
}

impl AnnotationClient for MockAnnotator {
    fn annotate(&self, prompt: &str) -> Result<Annotation> {
        if prompt.trim().is_empty() {
            return Err(BenchError::EmptyPrompt);
        }
        let t = &self.templates;
        let attrs = Self::attributes(prompt);
        let sentences: Vec<String> = t
            .order
            .iter()
            .filter_map(|key| {
                let value = attrs.iter().find(|(k, _)| k == key).map(|(_, v)| v)?;
                Some(t.sentences.get(key)?.replace("{value}", value))
            })
            .collect();
        let output = if sentences.is_empty() {
            t.fallback.clone()
        } else {
            sentences.join(" ")
        };
        let digest = Sha256::digest(prompt.as_bytes());
        let pick = u64::from_le_bytes(digest[..8].try_into().unwrap()) as usize % t.instructions.len().max(1);
        let instruction = t.instructions.get(pick).cloned().unwrap_or_else(|| "Describe this music clip.".into());
        Ok(Annotation { instruction, output })
    }
}

#[derive(Debug, Clone)]
pub struct RemoteConfig {
    pub endpoint: String,
    pub token: Option<String>,
    /// Extra attempts after the first one.
    pub max_retries: u32,
    pub initial_backoff: Duration,
    pub timeout: Duration,
}

impl RemoteConfig {
    /// Endpoint from the caller, token from [`ANNOTATION_TOKEN_ENV`].
    pub fn from_env(endpoint: impl Into<String>) -> Self {
        Self {
            endpoint: endpoint.into(),
            token: std::env::var(ANNOTATION_TOKEN_ENV).ok().filter(|t| !t.is_empty()),
            max_retries: 3,
            initial_backoff: Duration::from_millis(500),
            timeout: Duration::from_secs(60),
        }
    }
}

pub struct RemoteAnnotator {
    config: RemoteConfig,
    agent: ureq::Agent,
}

enum Attempt {
    Retry(BenchError),
    Fatal(BenchError),
}

impl RemoteAnnotator {
    pub fn new(config: RemoteConfig) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(config.timeout))
            .http_status_as_error(false)
            .build()
            .into();
        Self { config, agent }
    }

    fn attempt(&self, prompt: &str, n: u32) -> std::result::Result<Annotation, Attempt> {
        #[derive(Serialize)]
        struct Request<'a> {
            prompt: &'a str,
        }
        #[derive(Deserialize)]
        struct Reply {
            text: String,
        }
        let mut req = self.agent.post(&self.config.endpoint);
        if let Some(token) = &self.config.token {
            req = req.header("Authorization", &format!("Bearer {token}"));
        }
        let mut resp = req.send_json(Request { prompt }).map_err(|e| {
            Attempt::Retry(BenchError::Transport {
                attempts: n,
                message: e.to_string(),
            })
        })?;
        let status = resp.status().as_u16();
        if status == 429 || status >= 500 {
            return Err(Attempt::Retry(BenchError::Refused { status, attempts: n }));
        }
        if status >= 400 {
            return Err(Attempt::Fatal(BenchError::Refused { status, attempts: n }));
        }
        let reply: Reply = resp
            .body_mut()
            .read_json()
            .map_err(|e| Attempt::Fatal(BenchError::Malformed(e.to_string())))?;
        let ann: Annotation = serde_json::from_str(reply.text.trim())
            .map_err(|e| Attempt::Fatal(BenchError::Malformed(format!("text is not an annotation object: {e}"))))?;
        if ann.instruction.trim().is_empty() || ann.output.trim().is_empty() {
            return Err(Attempt::Fatal(BenchError::Malformed("empty instruction or output".into())));
        }
        Ok(ann)
    }
}

impl AnnotationClient for RemoteAnnotator {
    fn annotate(&self, prompt: &str) -> Result<Annotation> {
        if prompt.trim().is_empty() {
            return Err(BenchError::EmptyPrompt);
        }
        let mut backoff = self.config.initial_backoff;
        let mut n = 1;
        loop {
            match self.attempt(prompt, n) {
                Ok(a) => return Ok(a),
                Err(Attempt::Fatal(e)) => return Err(e),
                Err(Attempt::Retry(e)) if n > self.config.max_retries => return Err(e),
                Err(Attempt::Retry(_)) => {
                    std::thread::sleep(backoff);
                    backoff *= 2;
                    n += 1;
                }
            }
        }
    }
}
