//! Chat-completion HTTP backend.
//!
//! Field locations in the request and response bodies are dotted paths
//! (`choices.0.message.content`), so OpenAI-style and most look-alike
//! endpoints work by configuration alone. The API key is read from the
//! environment variable named in the config, never from files.

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::PathBuf;
use std::sync::{Condvar, Mutex};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::cache::{cache_key, KbCache};
use super::templates::render_prompt;
use super::{Background, KbBackend, KbExchange, KbReply};
use crate::error::{Error, Result};
use crate::fuzzyctl::PromptDirective;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LlmClientConfig {
    pub endpoint: String,
    pub model: String,
    /// Name of the environment variable holding the bearer token. If unset
    /// at call time no Authorization header is sent.
    pub api_key_env: String,
    pub timeout_secs: f64,
    pub max_retries: u32,
    pub backoff_ms: u64,
    pub max_in_flight: usize,
    pub request_model_field: String,
    pub request_prompt_field: String,
    pub response_text_field: String,
    pub cache_path: Option<PathBuf>,
    pub audit_log: Option<PathBuf>,
}

impl Default for LlmClientConfig {
    fn default() -> Self {
        LlmClientConfig {
            endpoint: "https://api.openai.com/v1/chat/completions".into(),
            model: "gpt-4o-mini".into(),
            api_key_env: "SEMLINK_API_KEY".into(),
            timeout_secs: 30.0,
            max_retries: 2,
            backoff_ms: 500,
            max_in_flight: 4,
            request_model_field: "model".into(),
            request_prompt_field: "messages.0.content".into(),
            response_text_field: "choices.0.message.content".into(),
            cache_path: None,
            audit_log: None,
        }
    }
}

/// Counting gate limiting concurrent requests.
#[derive(Debug)]
struct Gate {
    busy: Mutex<usize>,
    freed: Condvar,
    limit: usize,
}

impl Gate {
    fn enter(&self) -> GateGuard<'_> {
        let mut busy = self.busy.lock().unwrap();
        while *busy >= self.limit {
            busy = self.freed.wait(busy).unwrap();
        }
        *busy += 1;
        GateGuard(self)
    }
}

struct GateGuard<'a>(&'a Gate);

impl Drop for GateGuard<'_> {
    fn drop(&mut self) {
        *self.0.busy.lock().unwrap() -= 1;
        self.0.freed.notify_one();
    }
}

#[derive(Debug)]
pub struct LlmKb {
    config: LlmClientConfig,
    agent: ureq::Agent,
    cache: KbCache,
    gate: Gate,
    audit: Mutex<Option<File>>,
    exchanges: Mutex<Vec<KbExchange>>,
}

/// Sets `path` inside `root`, creating objects and arrays on the way.
/// Numeric segments index arrays.
pub fn set_path(root: &mut Value, path: &str, value: Value) {
    let mut cur = root;
    for seg in path.split('.') {
        cur = match seg.parse::<usize>() {
            Ok(i) => {
                if !cur.is_array() {
                    *cur = Value::Array(Vec::new());
                }
                let arr = cur.as_array_mut().unwrap();
                while arr.len() <= i {
                    arr.push(Value::Null);
                }
                &mut arr[i]
            }
            Err(_) => {
                if !cur.is_object() {
                    *cur = Value::Object(Default::default());
                }
                cur.as_object_mut().unwrap().entry(seg.to_string()).or_insert(Value::Null)
            }
        };
    }
    *cur = value;
}

pub fn get_path<'a>(root: &'a Value, path: &str) -> Option<&'a Value> {
    path.split('.').try_fold(root, |cur, seg| match seg.parse::<usize>() {
        Ok(i) => cur.get(i),
        Err(_) => cur.get(seg),
    })
}

impl LlmKb {
    pub fn new(config: LlmClientConfig) -> Result<Self> {
        if config.max_in_flight == 0 {
            return Err(Error::Config("max_in_flight must be at least 1".into()));
        }
        if !(config.timeout_secs > 0.0) {
            return Err(Error::Config("timeout_secs must be positive".into()));
        }
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs_f64(config.timeout_secs)))
            .http_status_as_error(false)
            .build()
            .into();
        let cache = match &config.cache_path {
            Some(p) => KbCache::open(p)?,
            None => KbCache::in_memory(),
        };
        let audit = match &config.audit_log {
            Some(p) => Some(OpenOptions::new().create(true).append(true).open(p).map_err(|e| Error::io(p, e))?),
            None => None,
        };
        let gate = Gate { busy: Mutex::new(0), freed: Condvar::new(), limit: config.max_in_flight };
        Ok(LlmKb { config, agent, cache, gate, audit: Mutex::new(audit), exchanges: Mutex::new(Vec::new()) })
    }

    pub fn config(&self) -> &LlmClientConfig {
        &self.config
    }

    /// Every call made so far, in completion order.
    pub fn exchanges(&self) -> Vec<KbExchange> {
        self.exchanges.lock().unwrap().clone()
    }

    fn request_body(&self, prompt: &str) -> Value {
        let mut body = if self.config.request_prompt_field.starts_with("messages.") {
            json!({ "messages": [{ "role": "user" }] })
        } else {
            json!({})
        };
        set_path(&mut body, &self.config.request_model_field, Value::String(self.config.model.clone()));
        set_path(&mut body, &self.config.request_prompt_field, Value::String(prompt.to_string()));
        body
    }

    fn post_once(&self, body: &Value) -> Result<String> {
        let mut req = self.agent.post(&self.config.endpoint);
        if let Ok(key) = std::env::var(&self.config.api_key_env) {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        let mut resp = req.send_json(body).map_err(|e| Error::Backend(e.to_string()))?;
        let status = resp.status().as_u16();
        let text = resp.body_mut().read_to_string().map_err(|e| Error::Backend(e.to_string()))?;
        if !(200..300).contains(&status) {
            return Err(Error::Backend(format!("HTTP {status}: {}", text.chars().take(200).collect::<String>())));
        }
        let v: Value = serde_json::from_str(&text)?;
        let out = get_path(&v, &self.config.response_text_field)
            .and_then(Value::as_str)
            .ok_or_else(|| Error::Backend(format!("no string at {:?}", self.config.response_text_field)))?;
        let out = out.trim();
        if out.is_empty() {
            return Err(Error::Backend("empty completion".into()));
        }
        Ok(out.to_string())
    }

    fn post_with_retries(&self, prompt: &str) -> Result<String> {
        let body = self.request_body(prompt);
        let _slot = self.gate.enter();
        let mut last = Error::Backend("no attempt made".into());
        for attempt in 0..=self.config.max_retries {
            if attempt > 0 {
                std::thread::sleep(Duration::from_millis(self.config.backoff_ms << (attempt - 1).min(6)));
            }
            match self.post_once(&body) {
                Ok(s) => return Ok(s),
                Err(e) => {
                    log::warn!("kb request attempt {} failed: {e}", attempt + 1);
                    last = e;
                }
            }
        }
        Err(last)
    }

    fn record(&self, ex: KbExchange) {
        if let Some(f) = self.audit.lock().unwrap().as_mut() {
            match serde_json::to_string(&ex) {
                Ok(line) => {
                    if let Err(e) = writeln!(f, "{line}") {
                        log::warn!("audit log write failed: {e}");
                    }
                }
                Err(e) => log::warn!("audit record not serializable: {e}"),
            }
        }
        self.exchanges.lock().unwrap().push(ex);
    }

    /// Renders `template`, queries (or hits the cache), and falls back to
    /// `input` unchanged on any failure.
    fn call(&self, template: &str, slots: BTreeMap<&str, String>, input: &str) -> KbReply {
        let prompt = match render_prompt(template, &slots) {
            Ok(p) => p,
            Err(e) => {
                log::warn!("{e}");
                return KbReply::passed_through(input);
            }
        };
        let key = cache_key(self.id(), template, &prompt);
        let started = Instant::now();
        let (reply, cached) = match self.cache.get(&key) {
            Some(hit) => (KbReply::ok(hit), true),
            None => match self.post_with_retries(&prompt) {
                Ok(text) => {
                    if let Err(e) = self.cache.insert(&key, &text) {
                        log::warn!("kb cache write failed: {e}");
                    }
                    (KbReply::ok(text), false)
                }
                Err(e) => {
                    log::warn!("kb {template} passing input through: {e}");
                    (KbReply::passed_through(input), false)
                }
            },
        };
        self.record(KbExchange {
            backend: self.id().to_string(),
            template: template.to_string(),
            prompt,
            response: reply.text.clone(),
            latency_ms: started.elapsed().as_millis() as u64,
            pass_through: reply.pass_through,
            cached,
        });
        reply
    }
}

fn background_text(bg: &Background) -> String {
    bg.facts.join("; ")
}

impl KbBackend for LlmKb {
    fn id(&self) -> &str {
        "llm"
    }

    fn disambiguate(&self, text: &str, background: &Background) -> KbReply {
        let slots = BTreeMap::from([("background", background_text(background)), ("text", text.to_string())]);
        self.call("disambiguate.v1", slots, text)
    }

    fn correct(&self, text: &str, background: &Background) -> KbReply {
        let slots = BTreeMap::from([("background", background_text(background)), ("text", text.to_string())]);
        self.call("correct.v1", slots, text)
    }

    fn kb_encode(&self, text: &str, directive: &PromptDirective) -> KbReply {
        if directive.is_identity() || text.trim().is_empty() {
            return KbReply::ok(text);
        }
        let (lo, hi) = directive.length_ratio_range;
        let slots = BTreeMap::from([("range", format!("[{lo:.2}, {hi:.2}]")), ("text", text.to_string())]);
        self.call("encode.v1", slots, text)
    }

    fn kb_decode(&self, text: &str, context: &[String]) -> KbReply {
        if text.trim().is_empty() {
            return KbReply::ok(text);
        }
        let slots = BTreeMap::from([("context", context.join(", ")), ("text", text.to_string())]);
        self.call("decode.v1", slots, text)
    }
}
