//! HTTP client for tag sources. Each image id is requested individually;
//! successful bodies are cached on disk so reruns do not hit the network.
//!
//! The endpoint is a URL template: `{id}` is replaced by the percent-encoded
//! image id, otherwise the id is appended as a path segment. A response is
//! either a JSON array of tag strings or an object with a `tags` array.

use std::fs;
use std::path::PathBuf;
use std::thread;
use std::time::{Duration, Instant};

use percent_encoding::{utf8_percent_encode, NON_ALPHANUMERIC};
use serde::Deserialize;
use sha2::{Digest, Sha256};

use super::commands::Failure;
use super::manifest::DatasetManifest;
use crate::error::{Error, Result};
use crate::tags::TagDocument;

#[derive(Debug, Clone)]
pub struct FetchOptions {
    /// Extra attempts after the first for throttled, 5xx and transport failures.
    pub retries: u32,
    /// Initial retry delay, doubled per attempt.
    pub backoff: Duration,
    /// Minimum spacing between consecutive requests.
    pub min_interval: Duration,
    pub timeout: Duration,
    pub cache_dir: Option<PathBuf>,
}

impl Default for FetchOptions {
    fn default() -> Self {
        FetchOptions {
            retries: 3,
            backoff: Duration::from_millis(500),
            min_interval: Duration::ZERO,
            timeout: Duration::from_secs(30),
            cache_dir: None,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct FetchOutcome {
    pub documents: Vec<TagDocument>,
    pub failures: Vec<Failure>,
    pub from_cache: usize,
    pub requests: usize,
}

pub fn request_url(endpoint: &str, id: &str) -> String {
    let encoded = utf8_percent_encode(id, NON_ALPHANUMERIC).to_string();
    if endpoint.contains("{id}") {
        endpoint.replace("{id}", &encoded)
    } else {
        format!("{}/{encoded}", endpoint.trim_end_matches('/'))
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum Body {
    List(Vec<String>),
    Object { tags: Vec<String> },
}

pub fn parse_response(body: &str) -> Result<Vec<String>> {
    match serde_json::from_str::<Body>(body) {
        Ok(Body::List(tags)) | Ok(Body::Object { tags }) => Ok(tags),
        Err(e) => Err(Error::Fetch(format!("unexpected response: {e}"))),
    }
}

struct Client {
    agent: ureq::Agent,
    opts: FetchOptions,
    last: Option<Instant>,
    requests: usize,
}

impl Client {
    fn throttle(&mut self) {
        if let Some(last) = self.last {
            let wait = self.opts.min_interval.saturating_sub(last.elapsed());
            if !wait.is_zero() {
                thread::sleep(wait);
            }
        }
        self.last = Some(Instant::now());
    }

    fn get(&mut self, url: &str) -> Result<String> {
        let mut attempt = 0;
        loop {
            self.throttle();
            self.requests += 1;
            let (retryable, message, retry_after) = match self.agent.get(url).call() {
                Ok(resp) => {
                    return resp
                        .into_string()
                        .map_err(|e| Error::Fetch(format!("{url}: reading body: {e}")))
                }
                Err(ureq::Error::Status(code, resp)) => {
                    let after = resp
                        .header("Retry-After")
                        .and_then(|v| v.trim().parse::<u64>().ok())
                        .map(|s| Duration::from_secs(s.min(60)));
                    (code == 429 || code >= 500, format!("{url}: HTTP {code}"), after)
                }
                Err(ureq::Error::Transport(t)) => (true, format!("{url}: {t}"), None),
            };
            if !retryable || attempt >= self.opts.retries {
                return Err(Error::Fetch(message));
            }
            let delay = retry_after.unwrap_or(self.opts.backoff * 2u32.saturating_pow(attempt));
            log::warn!("{message}; retrying in {delay:?}");
            thread::sleep(delay);
            attempt += 1;
        }
    }
}

/// Fetches tags for `ids`, each paired with optional category and split labels.
pub fn fetch_tags(
    endpoint: &str,
    ids: &[(String, Option<String>, Option<crate::tags::Split>)],
    opts: &FetchOptions,
) -> Result<FetchOutcome> {
    if let Some(dir) = &opts.cache_dir {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut client = Client {
        agent: ureq::AgentBuilder::new().timeout(opts.timeout).build(),
        opts: opts.clone(),
        last: None,
        requests: 0,
    };
    let mut out = FetchOutcome::default();
    for (id, category, split) in ids {
        let url = request_url(endpoint, id);
        let cache_file = opts
            .cache_dir
            .as_ref()
            .map(|d| d.join(format!("{}.json", hex::encode(Sha256::digest(url.as_bytes())))));
        let cached = cache_file.as_ref().and_then(|p| fs::read_to_string(p).ok());
        let body = match cached {
            Some(body) => {
                out.from_cache += 1;
                Ok(body)
            }
            None => client.get(&url).and_then(|body| {
                parse_response(&body)?;
                if let Some(p) = &cache_file {
                    fs::write(p, &body).map_err(|e| Error::io(p, e))?;
                }
                Ok(body)
            }),
        };
        match body.and_then(|b| parse_response(&b)) {
            Ok(tags) => out.documents.push(TagDocument {
                image_id: id.clone(),
                tags,
                category: category.clone(),
                split: *split,
            }),
            Err(e) => out.failures.push(Failure {
                image_id: id.clone(),
                message: e.to_string(),
            }),
        }
    }
    out.requests = client.requests;
    Ok(out)
}

/// [`fetch_tags`] for every record of a manifest.
pub fn fetch_manifest_tags(endpoint: &str, manifest: &DatasetManifest, opts: &FetchOptions) -> Result<FetchOutcome> {
    let ids: Vec<_> = manifest
        .records()
        .iter()
        .map(|r| (r.image_id.clone(), Some(r.category.clone()), Some(r.split)))
        .collect();
    fetch_tags(endpoint, &ids, opts)
}
