//! HTTP adapters for a hosted portfolio search service and a hosted image
//! labeling service.
//!
//! Credentials and the request timeout come from the environment:
//! `MBC_BEHANCE_KEY`, `MBC_VISION_KEY` and `MBC_HTTP_TIMEOUT_MS`.

use std::collections::{BTreeSet, HashSet};
use std::time::Duration;

use serde::Deserialize;
use serde_json::json;
use ureq::Agent;

use super::{
    rank_labels, Field, ImageSource, ImageryError, LabelScore, LabeledImage, Labeler, Result,
};

pub const BEHANCE_KEY_VAR: &str = "MBC_BEHANCE_KEY";
pub const VISION_KEY_VAR: &str = "MBC_VISION_KEY";
pub const TIMEOUT_VAR: &str = "MBC_HTTP_TIMEOUT_MS";

const DEFAULT_TIMEOUT_MS: u64 = 10_000;
const DEFAULT_RETRIES: u32 = 2;

#[derive(Debug, Clone)]
pub struct HttpSettings {
    pub timeout: Duration,
    /// Extra attempts after the first on transport errors, 429 and 5xx.
    pub retries: u32,
    pub backoff: Duration,
}

impl Default for HttpSettings {
    fn default() -> Self {
        Self {
            timeout: Duration::from_millis(DEFAULT_TIMEOUT_MS),
            retries: DEFAULT_RETRIES,
            backoff: Duration::from_millis(250),
        }
    }
}

impl HttpSettings {
    pub fn from_env() -> Self {
        let mut settings = Self::default();
        if let Some(ms) = std::env::var(TIMEOUT_VAR).ok().and_then(|v| v.parse().ok()) {
            settings.timeout = Duration::from_millis(ms);
        }
        settings
    }

    fn agent(&self) -> Agent {
        Agent::config_builder()
            .timeout_global(Some(self.timeout))
            .http_status_as_error(false)
            .build()
            .into()
    }
}

enum Attempt<T> {
    Done(T),
    Retry(ImageryError),
}

fn with_retries<T>(settings: &HttpSettings, mut call: impl FnMut() -> Attempt<T>) -> Result<T> {
    let mut last = None;
    for attempt in 0..=settings.retries {
        if attempt > 0 {
            std::thread::sleep(settings.backoff * attempt);
        }
        match call() {
            Attempt::Done(v) => return Ok(v),
            Attempt::Retry(e) => last = Some(e),
        }
    }
    Err(last.expect("at least one attempt"))
}

fn classify_status(service: &str, status: u16, not_found: &str) -> Option<Attempt<ImageryError>> {
    match status {
        200..=299 => None,
        404 => Some(Attempt::Done(ImageryError::NotFound(not_found.to_string()))),
        429 | 500..=599 => Some(Attempt::Retry(ImageryError::Transport {
            service: service.to_string(),
            message: format!("HTTP {status}"),
        })),
        other => Some(Attempt::Done(ImageryError::BadResponse {
            service: service.to_string(),
            message: format!("HTTP {other}"),
        })),
    }
}

fn transport(service: &str, err: ureq::Error) -> ImageryError {
    ImageryError::Transport {
        service: service.to_string(),
        message: err.to_string(),
    }
}

/// Portfolio project search.
#[derive(Debug, Clone)]
pub struct BehanceSource {
    endpoint: String,
    api_key: String,
    settings: HttpSettings,
    agent: Agent,
}

#[derive(Debug, Deserialize)]
struct ProjectsResponse {
    #[serde(default)]
    projects: Vec<Project>,
}

#[derive(Debug, Deserialize)]
struct Project {
    id: serde_json::Value,
    #[serde(default)]
    covers: serde_json::Map<String, serde_json::Value>,
}

impl BehanceSource {
    const SERVICE: &'static str = "behance";
    pub const DEFAULT_ENDPOINT: &'static str = "https://api.behance.net/v2/projects";

    pub fn new(
        endpoint: impl Into<String>,
        api_key: impl Into<String>,
        settings: HttpSettings,
    ) -> Self {
        let agent = settings.agent();
        Self {
            endpoint: endpoint.into(),
            api_key: api_key.into(),
            settings,
            agent,
        }
    }

    pub fn from_env() -> Option<Self> {
        let key = std::env::var(BEHANCE_KEY_VAR).ok()?;
        Some(Self::new(
            Self::DEFAULT_ENDPOINT,
            key,
            HttpSettings::from_env(),
        ))
    }

    fn field_param(field: Field) -> &'static str {
        match field {
            Field::IndustrialDesign => "industrial design",
            Field::Architecture => "architecture",
            Field::Fashion => "fashion",
        }
    }

    fn search_field(&self, query: &str, field: Field) -> Result<Vec<(String, String)>> {
        let body = with_retries(&self.settings, || {
            let response = self
                .agent
                .get(&self.endpoint)
                .query("q", query)
                .query("field", Self::field_param(field))
                .query("api_key", &self.api_key)
                .call();
            let mut response = match response {
                Ok(r) => r,
                Err(e) => return Attempt::Retry(transport(Self::SERVICE, e)),
            };
            if let Some(outcome) = classify_status(Self::SERVICE, response.status().as_u16(), query)
            {
                return match outcome {
                    Attempt::Done(e) => Attempt::Done(Err(e)),
                    Attempt::Retry(e) => Attempt::Retry(e),
                };
            }
            match response.body_mut().read_to_string() {
                Ok(text) => Attempt::Done(Ok(text)),
                Err(e) => Attempt::Retry(transport(Self::SERVICE, e)),
            }
        })??;
        parse_projects(&body)
    }
}

/// `(id, cover uri)` pairs in service order.
pub fn parse_projects(body: &str) -> Result<Vec<(String, String)>> {
    let parsed: ProjectsResponse =
        serde_json::from_str(body).map_err(|e| ImageryError::BadResponse {
            service: BehanceSource::SERVICE.into(),
            message: e.to_string(),
        })?;
    Ok(parsed
        .projects
        .into_iter()
        .filter_map(|p| {
            let id = match p.id {
                serde_json::Value::String(s) => s,
                serde_json::Value::Number(n) => n.to_string(),
                _ => return None,
            };
            // Largest numeric cover size wins.
            let cover = p
                .covers
                .iter()
                .filter_map(|(size, url)| Some((size.parse::<u32>().ok()?, url.as_str()?)))
                .max_by_key(|(size, _)| *size)
                .map(|(_, url)| url.to_string())?;
            Some((id, cover))
        })
        .collect())
}

impl ImageSource for BehanceSource {
    /// Query words are joined with spaces. Results from each field are
    /// interleaved round-robin in service order.
    fn search(
        &self,
        query: &[String],
        fields: &BTreeSet<Field>,
        limit: usize,
        exclude: &HashSet<String>,
    ) -> Result<Vec<LabeledImage>> {
        if query.is_empty() || limit == 0 {
            return Err(ImageryError::EmptyQuery);
        }
        let joined = query.join(" ");
        let mut per_field = Vec::new();
        for &field in fields {
            let hits = self.search_field(&joined, field)?;
            per_field.push((field, hits.into_iter()));
        }
        let mut out = Vec::new();
        let mut seen = HashSet::new();
        while out.len() < limit {
            let mut progressed = false;
            for (field, hits) in per_field.iter_mut() {
                let Some((id, uri)) = hits.next() else {
                    continue;
                };
                progressed = true;
                if exclude.contains(&id) || !seen.insert(id.clone()) {
                    continue;
                }
                out.push(LabeledImage {
                    id,
                    uri,
                    field: *field,
                    labels: Vec::new(),
                    source_rank: out.len() + 1,
                });
                if out.len() == limit {
                    break;
                }
            }
            if !progressed {
                break;
            }
        }
        Ok(out)
    }
}

/// Label detection over an image URI.
#[derive(Debug, Clone)]
pub struct VisionLabeler {
    endpoint: String,
    api_key: String,
    keep: usize,
    settings: HttpSettings,
    agent: Agent,
}

#[derive(Debug, Deserialize)]
struct AnnotateResponse {
    #[serde(default)]
    responses: Vec<AnnotateResult>,
}

#[derive(Debug, Deserialize)]
struct AnnotateResult {
    #[serde(default, rename = "labelAnnotations")]
    label_annotations: Vec<Annotation>,
    error: Option<serde_json::Value>,
}

#[derive(Debug, Deserialize)]
struct Annotation {
    description: String,
    score: f64,
}

impl VisionLabeler {
    const SERVICE: &'static str = "vision";
    pub const DEFAULT_ENDPOINT: &'static str = "https://vision.googleapis.com/v1/images:annotate";

    pub fn new(
        endpoint: impl Into<String>,
        api_key: impl Into<String>,
        keep: usize,
        settings: HttpSettings,
    ) -> Self {
        let agent = settings.agent();
        Self {
            endpoint: endpoint.into(),
            api_key: api_key.into(),
            keep,
            settings,
            agent,
        }
    }

    pub fn from_env(keep: usize) -> Option<Self> {
        let key = std::env::var(VISION_KEY_VAR).ok()?;
        Some(Self::new(
            Self::DEFAULT_ENDPOINT,
            key,
            keep,
            HttpSettings::from_env(),
        ))
    }
}

/// Lowercased labels with positive scores, ranked and truncated to `keep`.
pub fn parse_annotations(body: &str, keep: usize) -> Result<Vec<LabelScore>> {
    let bad = |message: String| ImageryError::BadResponse {
        service: VisionLabeler::SERVICE.into(),
        message,
    };
    let parsed: AnnotateResponse = serde_json::from_str(body).map_err(|e| bad(e.to_string()))?;
    let first = parsed
        .responses
        .into_iter()
        .next()
        .ok_or_else(|| bad("empty responses array".into()))?;
    if let Some(err) = first.error {
        return Err(bad(err.to_string()));
    }
    let labels = first
        .label_annotations
        .into_iter()
        .filter(|a| a.score > 0.0 && !a.description.trim().is_empty())
        .map(|a| LabelScore::new(super::normalize_label(&a.description), a.score.min(1.0)))
        .collect();
    Ok(rank_labels(labels, keep))
}

impl Labeler for VisionLabeler {
    fn label(&self, image: &LabeledImage) -> Result<Vec<LabelScore>> {
        let request = json!({
            "requests": [{
                "image": {"source": {"imageUri": image.uri}},
                "features": [{"type": "LABEL_DETECTION", "maxResults": self.keep}],
            }]
        });
        let body = with_retries(&self.settings, || {
            let response = self
                .agent
                .post(&self.endpoint)
                .query("key", &self.api_key)
                .send_json(&request);
            let mut response = match response {
                Ok(r) => r,
                Err(e) => return Attempt::Retry(transport(Self::SERVICE, e)),
            };
            if let Some(outcome) =
                classify_status(Self::SERVICE, response.status().as_u16(), &image.id)
            {
                return match outcome {
                    Attempt::Done(e) => Attempt::Done(Err(e)),
                    Attempt::Retry(e) => Attempt::Retry(e),
                };
            }
            match response.body_mut().read_to_string() {
                Ok(text) => Attempt::Done(Ok(text)),
                Err(e) => Attempt::Retry(transport(Self::SERVICE, e)),
            }
        })??;
        parse_annotations(&body, self.keep)
    }
}
