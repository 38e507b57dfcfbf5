//! Relabeling raw captions into decoupled perceptual/semantic texts with an
//! external multimodal LLM.
//!
//! The prompt embeds the human description between fixed delimiter lines.
//! `&` and `<` inside the description are escaped as `&amp;` and `&lt;`, so
//! the `<PERCEPTUAL>`/`<SEMANTIC>` markers occur exactly once in the prompt
//! and the parser can always recover the original text.

use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use base64::engine::general_purpose::STANDARD;
use base64::Engine as _;
use serde::{Deserialize, Serialize};

use super::{I2TRecord, RawCaptionRecord};
use crate::error::{DeclipError, Result};

pub const PROMPT_VERSION: &str = "prompt_v1";
pub const PERCEPTUAL_OPEN: &str = "<PERCEPTUAL>";
pub const PERCEPTUAL_CLOSE: &str = "</PERCEPTUAL>";
pub const SEMANTIC_OPEN: &str = "<SEMANTIC>";
pub const SEMANTIC_CLOSE: &str = "</SEMANTIC>";
pub const DESCRIPTION_BEGIN: &str = "----- BEGIN DESCRIPTION -----";
pub const DESCRIPTION_END: &str = "----- END DESCRIPTION -----";
pub const API_KEY_ENV: &str = "DECLIP_MLLM_KEY";

const PROMPT_HEAD: &str = "\
[prompt_v1]
You are an expert in visual perception and photography. You will receive one image and a \
human-written description of it. The description mixes how the image looks with what it \
shows. Rewrite it as two separate descriptions.

Perceptual description requirements:
- Cover only how the image looks: clarity and sharpness, noise, light and exposure, color, \
composition, and the feeling it conveys.
- Do not name objects, people, places, or the scene.
- Reuse the perceptual judgements of the human description where the image supports them.

Semantic description requirements:
- Cover only what the image shows: the scene, the objects and people, and how they relate.
- Do not judge quality, light, color, or composition.
- Rely on the image itself for content.

Human description (between the delimiter lines; & and the less-than sign are escaped as \
&amp; and &lt;):
";

const PROMPT_TAIL: &str = "
Answer with exactly the two blocks below and nothing else:
<PERCEPTUAL>perceptual description</PERCEPTUAL>
<SEMANTIC>semantic description</SEMANTIC>
";

pub fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;")
}

pub fn unescape(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut rest = text;
    while let Some(pos) = rest.find('&') {
        out.push_str(&rest[..pos]);
        let tail = &rest[pos..];
        if let Some(t) = tail.strip_prefix("&lt;") {
            out.push('<');
            rest = t;
        } else if let Some(t) = tail.strip_prefix("&amp;") {
            out.push('&');
            rest = t;
        } else {
            out.push('&');
            rest = &tail[1..];
        }
    }
    out.push_str(rest);
    out
}

/// Builds the `prompt_v1` relabeling prompt for one caption.
pub fn build_relabel_prompt(record: &RawCaptionRecord) -> String {
    format!(
        "{PROMPT_HEAD}{DESCRIPTION_BEGIN}\n{}\n{DESCRIPTION_END}\n{PROMPT_TAIL}",
        escape(&record.human_description)
    )
}

fn single_block<'a>(text: &'a str, open: &str, close: &str) -> Result<&'a str> {
    let malformed = |reason: String| DeclipError::MalformedResponse {
        reason,
        raw: text.to_string(),
    };
    let opens = text.matches(open).count();
    let closes = text.matches(close).count();
    if opens != 1 || closes != 1 {
        return Err(malformed(format!(
            "expected one {open}...{close} block, found {opens} opening and {closes} closing markers"
        )));
    }
    let start = text.find(open).unwrap() + open.len();
    let end = text.find(close).unwrap();
    if end < start {
        return Err(malformed(format!("{close} precedes {open}")));
    }
    Ok(&text[start..end])
}

/// Splits a model reply into unescaped, trimmed `(perceptual, semantic)` texts.
pub fn parse_relabel_response(response: &str) -> Result<(String, String)> {
    let perceptual = unescape(single_block(response, PERCEPTUAL_OPEN, PERCEPTUAL_CLOSE)?.trim());
    let semantic = unescape(single_block(response, SEMANTIC_OPEN, SEMANTIC_CLOSE)?.trim());
    if perceptual.is_empty() {
        return Err(DeclipError::EmptyField("t_p"));
    }
    if semantic.is_empty() {
        return Err(DeclipError::EmptyField("t_s"));
    }
    Ok((perceptual, semantic))
}

/// The escaped description block of a built prompt.
pub fn extract_description(prompt: &str) -> Option<&str> {
    let start = prompt.find(DESCRIPTION_BEGIN)? + DESCRIPTION_BEGIN.len() + 1;
    let end = prompt.rfind(DESCRIPTION_END)?;
    prompt.get(start..end.checked_sub(1)?)
}

/// A multimodal model that answers a text prompt about one image.
pub trait MllmClient {
    fn generate(&self, prompt: &str, image_ref: &str) -> Result<String>;
}

pub fn relabel_record(client: &dyn MllmClient, record: &RawCaptionRecord) -> Result<I2TRecord> {
    record.validate()?;
    let prompt = build_relabel_prompt(record);
    let response = client.generate(&prompt, &record.image_ref)?;
    let (t_p, t_s) = parse_relabel_response(&response)?;
    let out = I2TRecord {
        image_ref: record.image_ref.clone(),
        t_p,
        t_s,
        source: record.source,
        image_type: record.image_type,
    };
    out.validate()?;
    Ok(out)
}

/// A caption that could not be relabeled, with the raw reply when there was one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelabelReject {
    pub image_ref: String,
    pub error: String,
    pub raw_response: Option<String>,
}

#[derive(Debug, Default)]
pub struct RelabelOutcome {
    pub accepted: Vec<I2TRecord>,
    pub rejects: Vec<RelabelReject>,
}

/// Relabels every record with up to `parallelism` concurrent requests.
///
/// Output order follows input order. Every input ends up either accepted or
/// rejected.
pub fn relabel_all(
    client: &(dyn MllmClient + Sync),
    records: &[RawCaptionRecord],
    parallelism: usize,
) -> RelabelOutcome {
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<Result<I2TRecord>>>> =
        Mutex::new((0..records.len()).map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..parallelism.max(1).min(records.len().max(1)) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(record) = records.get(i) else { break };
                let result = relabel_record(client, record);
                results.lock().unwrap()[i] = Some(result);
            });
        }
    });
    let mut outcome = RelabelOutcome::default();
    for (record, result) in records.iter().zip(results.into_inner().unwrap()) {
        match result.expect("every index is processed") {
            Ok(r) => outcome.accepted.push(r),
            Err(e) => {
                let raw_response = match &e {
                    DeclipError::MalformedResponse { raw, .. } => Some(raw.clone()),
                    _ => None,
                };
                outcome.rejects.push(RelabelReject {
                    image_ref: record.image_ref.clone(),
                    error: e.to_string(),
                    raw_response,
                });
            }
        }
    }
    outcome
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MllmConfig {
    pub base_url: String,
    pub model: String,
    #[serde(default = "default_key_env")]
    pub api_key_env: String,
    #[serde(default = "default_retries")]
    pub max_retries: u32,
    #[serde(default = "default_rpm")]
    pub requests_per_minute: u32,
    /// Directory the image refs are resolved against when attaching pixels.
    #[serde(default)]
    pub image_root: Option<PathBuf>,
}

fn default_key_env() -> String {
    API_KEY_ENV.to_string()
}

fn default_retries() -> u32 {
    3
}

fn default_rpm() -> u32 {
    60
}

#[derive(Serialize)]
struct GenerateRequest<'a> {
    model: &'a str,
    prompt: &'a str,
    image_ref: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    image_base64: Option<String>,
}

#[derive(Deserialize)]
struct GenerateResponse {
    text: String,
}

/// HTTP client: `POST {base_url}/generate` with
/// `{"model","prompt","image_ref","image_base64"?}` and a bearer key, reply
/// `{"text": "..."}`. Transport failures, 429 and 5xx are retried with
/// exponential backoff; requests are spaced to honor the per-minute cap.
pub struct HttpMllmClient {
    config: MllmConfig,
    api_key: Option<String>,
    agent: ureq::Agent,
    next_slot: Mutex<Instant>,
    backoff_base: Duration,
}

impl HttpMllmClient {
    pub fn new(config: MllmConfig) -> Result<Self> {
        if config.requests_per_minute == 0 {
            return Err(DeclipError::InvalidConfig(
                "requests_per_minute must be positive".into(),
            ));
        }
        let api_key = std::env::var(&config.api_key_env).ok();
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(60)))
            .build()
            .into();
        Ok(Self {
            config,
            api_key,
            agent,
            next_slot: Mutex::new(Instant::now()),
            backoff_base: Duration::from_millis(500),
        })
    }

    pub fn with_backoff_base(mut self, base: Duration) -> Self {
        self.backoff_base = base;
        self
    }

    fn wait_for_slot(&self) {
        let interval = Duration::from_secs_f64(60.0 / f64::from(self.config.requests_per_minute));
        let wait = {
            let mut slot = self.next_slot.lock().unwrap();
            let now = Instant::now();
            let start = (*slot).max(now);
            *slot = start + interval;
            start - now
        };
        if !wait.is_zero() {
            std::thread::sleep(wait);
        }
    }

    fn attach_image(&self, image_ref: &str) -> Option<String> {
        let path = match &self.config.image_root {
            Some(root) => root.join(image_ref),
            None => PathBuf::from(image_ref),
        };
        std::fs::read(path).ok().map(|b| STANDARD.encode(b))
    }

    fn attempt(&self, body: &GenerateRequest<'_>) -> std::result::Result<String, (bool, String)> {
        let url = format!("{}/generate", self.config.base_url.trim_end_matches('/'));
        let mut req = self.agent.post(&url);
        if let Some(key) = &self.api_key {
            req = req.header("Authorization", format!("Bearer {key}"));
        }
        match req.send_json(body) {
            Ok(mut resp) => resp
                .body_mut()
                .read_json::<GenerateResponse>()
                .map(|r| r.text)
                .map_err(|e| (false, format!("bad reply body: {e}"))),
            Err(ureq::Error::StatusCode(code)) => {
                Err((code == 429 || code >= 500, format!("HTTP {code}")))
            }
            Err(e) => Err((true, e.to_string())),
        }
    }
}

impl MllmClient for HttpMllmClient {
    fn generate(&self, prompt: &str, image_ref: &str) -> Result<String> {
        let body = GenerateRequest {
            model: &self.config.model,
            prompt,
            image_ref,
            image_base64: self.attach_image(image_ref),
        };
        let mut last = String::new();
        for attempt in 0..=self.config.max_retries {
            if attempt > 0 {
                std::thread::sleep(self.backoff_base * 2u32.pow(attempt - 1));
            }
            self.wait_for_slot();
            match self.attempt(&body) {
                Ok(text) => return Ok(text),
                Err((retryable, msg)) => {
                    last = msg;
                    if !retryable {
                        break;
                    }
                }
            }
        }
        Err(DeclipError::ClientUnavailable(last))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{ImageType, Source};

    struct Fixed(&'static str);

    impl MllmClient for Fixed {
        fn generate(&self, _: &str, _: &str) -> Result<String> {
            Ok(self.0.to_string())
        }
    }

    /// Replies with the prompt's own description in both blocks.
    struct Echo;

    impl MllmClient for Echo {
        fn generate(&self, prompt: &str, _: &str) -> Result<String> {
            let d = extract_description(prompt).expect("description block");
            Ok(format!("<PERCEPTUAL>{d}</PERCEPTUAL>\n<SEMANTIC>{d}</SEMANTIC>"))
        }
    }

    fn raw(desc: &str) -> RawCaptionRecord {
        RawCaptionRecord {
            image_ref: "img.png".into(),
            human_description: desc.into(),
            source: Source::AvaComments,
            image_type: ImageType::Natural,
        }
    }

    #[test]
    fn prompt_contains_description_once_and_markers_once() {
        let desc = "Lovely golden-hour light on the harbour; the horizon is slightly tilted";
        let prompt = build_relabel_prompt(&raw(desc));
        assert_eq!(prompt.matches(desc).count(), 1);
        for m in [PERCEPTUAL_OPEN, PERCEPTUAL_CLOSE, SEMANTIC_OPEN, SEMANTIC_CLOSE] {
            assert_eq!(prompt.matches(m).count(), 1, "{m}");
        }
        assert!(prompt.starts_with("[prompt_v1]"));
    }

    #[test]
    fn markers_in_description_are_escaped() {
        let desc = "nice <PERCEPTUAL>x</PERCEPTUAL> & <SEMANTIC>y</SEMANTIC> &lt; literal";
        let prompt = build_relabel_prompt(&raw(desc));
        // The prompt itself parses, so its markers are still unique.
        let (p, s) = parse_relabel_response(&prompt).unwrap();
        assert_eq!(p, "perceptual description");
        assert_eq!(s, "semantic description");
        assert_eq!(unescape(extract_description(&prompt).unwrap()), desc);
    }

    #[test]
    fn stub_reply_is_parsed() {
        let client = Fixed("<PERCEPTUAL>soft light</PERCEPTUAL><SEMANTIC>a dog</SEMANTIC>");
        let r = relabel_record(&client, &raw("whatever")).unwrap();
        assert_eq!(r.t_p, "soft light");
        assert_eq!(r.t_s, "a dog");
        assert_eq!(r.source, Source::AvaComments);
    }

    #[test]
    fn missing_close_marker_is_malformed() {
        let client = Fixed("<PERCEPTUAL>soft light</PERCEPTUAL><SEMANTIC>a dog");
        let err = relabel_record(&client, &raw("whatever")).unwrap_err();
        match err {
            DeclipError::MalformedResponse { raw, .. } => assert!(raw.ends_with("a dog")),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn duplicate_blocks_are_malformed() {
        let reply = "<PERCEPTUAL>a</PERCEPTUAL><PERCEPTUAL>b</PERCEPTUAL><SEMANTIC>c</SEMANTIC>";
        assert!(matches!(
            parse_relabel_response(reply),
            Err(DeclipError::MalformedResponse { .. })
        ));
    }

    #[test]
    fn empty_block_is_empty_field() {
        let reply = "<PERCEPTUAL> </PERCEPTUAL><SEMANTIC>c</SEMANTIC>";
        assert!(matches!(
            parse_relabel_response(reply),
            Err(DeclipError::EmptyField("t_p"))
        ));
    }

    #[test]
    fn echo_recovers_nested_markers() {
        let desc = "<SEMANTIC>inner</SEMANTIC> &amp; <PERCEPTUAL> sharp & clear";
        let r = relabel_record(&Echo, &raw(desc)).unwrap();
        assert_eq!(r.t_p, desc.trim());
        assert_eq!(r.t_s, desc.trim());
    }

    #[test]
    fn relabel_all_routes_failures_to_rejects() {
        struct Picky;
        impl MllmClient for Picky {
            fn generate(&self, prompt: &str, image_ref: &str) -> Result<String> {
                match image_ref {
                    "down" => Err(DeclipError::ClientUnavailable("offline".into())),
                    "bad" => Ok("no markers".into()),
                    _ => Echo.generate(prompt, image_ref),
                }
            }
        }
        let records: Vec<_> = ["a", "bad", "b", "down", "c"]
            .iter()
            .map(|k| RawCaptionRecord {
                image_ref: k.to_string(),
                ..raw(&format!("desc {k}"))
            })
            .collect();
        let out = relabel_all(&Picky, &records, 3);
        let kept: Vec<_> = out.accepted.iter().map(|r| r.image_ref.as_str()).collect();
        assert_eq!(kept, ["a", "b", "c"]);
        assert_eq!(out.rejects.len(), 2);
        assert_eq!(out.rejects[0].image_ref, "bad");
        assert_eq!(out.rejects[0].raw_response.as_deref(), Some("no markers"));
        assert_eq!(out.rejects[1].raw_response, None);
    }

    #[test]
    fn unescape_inverts_escape() {
        for s in ["", "&", "&&lt;", "<<>>", "a &amp; b", "&lt", "x&"] {
            assert_eq!(unescape(&escape(s)), s);
        }
    }
}
