//! JSON-over-HTTP oracle client.
//!
//! Requests are `{"prompt": str, "images": [base64 PNG, ...]}`; the response
//! body must be exactly the JSON object the prompt asks for. Transport
//! failures are retried once with the identical payload. Schema failures are
//! not retried, except for material choice and video judging, which get one
//! re-ask.

use std::sync::{Condvar, Mutex};
use std::time::Duration;

use base64::Engine as _;
use serde::{Deserialize, Serialize};

use super::{
    check_catalog, check_mask_resolution, prompts, schema, CatalogEntry, DensityEstimate, JudgeScore,
    MaskVerdict, MaterialChoice, Oracle, OracleError, PartProposal, ViewParts,
};
use crate::imaging::{encode_mask_png, encode_rgb_png, BinaryImage, RgbImage};
use crate::render::ViewBundle;

pub const ENV_URL: &str = "FORGE_ORACLE_URL";
pub const ENV_TOKEN: &str = "FORGE_ORACLE_TOKEN";
pub const DEFAULT_MAX_IN_FLIGHT: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleRequest {
    pub prompt: String,
    pub images: Vec<String>,
}

impl OracleRequest {
    pub fn new(prompt: String, pngs: impl IntoIterator<Item = Vec<u8>>) -> Self {
        let b64 = base64::engine::general_purpose::STANDARD;
        OracleRequest { prompt, images: pngs.into_iter().map(|p| b64.encode(p)).collect() }
    }
}

/// Sends one request and returns the raw response body.
pub trait Transport: Send + Sync {
    fn post(&self, request: &OracleRequest) -> Result<String, OracleError>;
}

pub struct HttpTransport {
    endpoint: String,
    token: Option<String>,
    agent: ureq::Agent,
}

impl HttpTransport {
    pub fn new(endpoint: impl Into<String>, token: Option<String>, timeout: Duration) -> Self {
        let agent = ureq::Agent::config_builder().timeout_global(Some(timeout)).build().into();
        HttpTransport { endpoint: endpoint.into(), token, agent }
    }

    /// Reads `FORGE_ORACLE_URL` and the optional `FORGE_ORACLE_TOKEN`.
    pub fn from_env() -> Result<Self, OracleError> {
        let url = std::env::var(ENV_URL)
            .map_err(|_| OracleError::Transport(format!("{ENV_URL} is not set")))?;
        Ok(Self::new(url, std::env::var(ENV_TOKEN).ok(), Duration::from_secs(300)))
    }
}

impl Transport for HttpTransport {
    fn post(&self, request: &OracleRequest) -> Result<String, OracleError> {
        let body = serde_json::to_string(request).expect("request serialization cannot fail");
        let mut req = self.agent.post(&self.endpoint).header("Content-Type", "application/json");
        if let Some(t) = &self.token {
            req = req.header("Authorization", format!("Bearer {t}"));
        }
        let mut resp = req.send(body).map_err(|e| OracleError::Transport(e.to_string()))?;
        resp.body_mut().read_to_string().map_err(|e| OracleError::Transport(e.to_string()))
    }
}

/// Counting semaphore bounding concurrent in-flight requests.
struct Limiter {
    max: usize,
    in_flight: Mutex<usize>,
    cv: Condvar,
}

struct Permit<'a>(&'a Limiter);

impl Limiter {
    fn new(max: usize) -> Self {
        Limiter { max: max.max(1), in_flight: Mutex::new(0), cv: Condvar::new() }
    }

    fn acquire(&self) -> Permit<'_> {
        let mut n = self.in_flight.lock().unwrap_or_else(|e| e.into_inner());
        while *n >= self.max {
            n = self.cv.wait(n).unwrap_or_else(|e| e.into_inner());
        }
        *n += 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        let mut n = self.0.in_flight.lock().unwrap_or_else(|e| e.into_inner());
        *n -= 1;
        self.0.cv.notify_one();
    }
}

pub struct RemoteOracle<T: Transport = HttpTransport> {
    transport: T,
    limiter: Limiter,
    transport_retries: u32,
}

impl RemoteOracle<HttpTransport> {
    pub fn from_env() -> Result<Self, OracleError> {
        Ok(Self::new(HttpTransport::from_env()?, DEFAULT_MAX_IN_FLIGHT))
    }
}

impl<T: Transport> RemoteOracle<T> {
    pub fn new(transport: T, max_in_flight: usize) -> Self {
        RemoteOracle { transport, limiter: Limiter::new(max_in_flight), transport_retries: 1 }
    }

    pub fn transport(&self) -> &T {
        &self.transport
    }

    fn send(&self, request: &OracleRequest) -> Result<String, OracleError> {
        let _permit = self.limiter.acquire();
        let mut attempt = 0;
        loop {
            match self.transport.post(request) {
                Ok(body) => return Ok(body),
                Err(e) if e.is_transport() && attempt < self.transport_retries => {
                    attempt += 1;
                    log::warn!("oracle transport failure, retrying: {e}");
                }
                Err(e) => return Err(e),
            }
        }
    }

    fn call<R>(
        &self,
        request: &OracleRequest,
        schema_retries: u32,
        parse: impl Fn(&str) -> Result<R, OracleError>,
    ) -> Result<R, OracleError> {
        let mut left = schema_retries;
        loop {
            let body = self.send(request)?;
            match parse(&body) {
                Ok(v) => return Ok(v),
                Err(e) if left > 0 => {
                    left -= 1;
                    log::warn!("oracle response rejected, asking again: {e}");
                }
                Err(e) => return Err(e),
            }
        }
    }
}

impl<T: Transport> Oracle for RemoteOracle<T> {
    fn segment_views(&self, views: &[ViewBundle]) -> Result<Vec<ViewParts>, OracleError> {
        if views.is_empty() {
            return Err(OracleError::Precondition("segment_views needs at least one view".into()));
        }
        let stems: Vec<String> = views.iter().map(|v| v.image_stem.clone()).collect();
        let request = OracleRequest::new(
            prompts::segmentation_prompt(&stems),
            views.iter().map(|v| encode_rgb_png(&v.color)),
        );
        self.call(&request, 0, |body| schema::parse_view_parts(body, &stems))
    }

    fn choose_material(
        &self,
        part: &PartProposal,
        catalog: &[CatalogEntry],
        context: &str,
    ) -> Result<MaterialChoice, OracleError> {
        check_catalog(catalog)?;
        let category = context_category(context);
        let request =
            OracleRequest::new(prompts::material_prompt(part, category.1, catalog, category.0), []);
        let ids: Vec<&str> = catalog.iter().map(|c| c.id.as_str()).collect();
        self.call(&request, 1, |body| schema::parse_material_choice(body, &ids))
    }

    fn estimate_density(&self, render: &RgbImage) -> Result<DensityEstimate, OracleError> {
        if render.data().is_empty() {
            return Err(OracleError::Precondition("empty render".into()));
        }
        let request = OracleRequest::new(prompts::density_prompt(), [encode_rgb_png(render)]);
        self.call(&request, 0, schema::parse_density)
    }

    fn inspect_mask(
        &self,
        view: &ViewBundle,
        part: &PartProposal,
        mask: &BinaryImage,
    ) -> Result<MaskVerdict, OracleError> {
        check_mask_resolution(view, mask)?;
        let request = OracleRequest::new(
            prompts::mask_inspection_prompt(part),
            [encode_rgb_png(&view.color), encode_mask_png(mask)],
        );
        let res = view.resolution();
        self.call(&request, 0, |body| schema::parse_mask_verdict(body, res))
    }

    fn judge_video(&self, frames: &[RgbImage], instruction: &str) -> Result<JudgeScore, OracleError> {
        if frames.is_empty() {
            return Err(OracleError::Precondition("judge_video needs at least one frame".into()));
        }
        let request =
            OracleRequest::new(prompts::video_judge_prompt(instruction), frames.iter().map(encode_rgb_png));
        self.call(&request, 1, schema::parse_judge_score)
    }
}

/// Splits a `category=<folder>;<object context>` context string. Callers in
/// this crate pass the library category this way; a plain string is treated
/// as object context with category `all`.
pub fn context_category(context: &str) -> (&str, &str) {
    match context.strip_prefix("category=") {
        Some(rest) => match rest.split_once(';') {
            Some((cat, ctx)) => (ctx, cat),
            None => ("", rest),
        },
        None => (context, "all"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::{AtomicUsize, Ordering};

    /// Replays scripted responses and records every request.
    struct Scripted {
        replies: Mutex<Vec<Result<String, OracleError>>>,
        seen: Mutex<Vec<OracleRequest>>,
    }

    impl Scripted {
        fn new(replies: Vec<Result<&str, &str>>) -> Self {
            Scripted {
                replies: Mutex::new(
                    replies
                        .into_iter()
                        .rev()
                        .map(|r| r.map(str::to_string).map_err(|e| OracleError::Transport(e.into())))
                        .collect(),
                ),
                seen: Mutex::new(Vec::new()),
            }
        }
    }

    impl Transport for Scripted {
        fn post(&self, request: &OracleRequest) -> Result<String, OracleError> {
            self.seen.lock().unwrap().push(request.clone());
            self.replies.lock().unwrap().pop().unwrap_or_else(|| Err(OracleError::Transport("script exhausted".into())))
        }
    }

    fn part() -> PartProposal {
        PartProposal { name: "body".into(), material: "Metal".into(), description: "shell".into(), bbox: vec![] }
    }

    fn catalog() -> Vec<CatalogEntry> {
        vec![
            CatalogEntry { id: "brushed_steel_01".into(), description: "brushed metal".into() },
            CatalogEntry { id: "oak_03".into(), description: "wood grain".into() },
        ]
    }

    #[test]
    fn accepted_material_choice() {
        let o = RemoteOracle::new(Scripted::new(vec![Ok(r#"{"chosen_material_id": "brushed_steel_01"}"#)]), 1);
        let c = o.choose_material(&part(), &catalog(), "").unwrap();
        assert_eq!(c.chosen_material_id, "brushed_steel_01");
    }

    #[test]
    fn foreign_id_is_retried_once_then_rejected() {
        let bad = r#"{"chosen_material_id": "granite"}"#;
        let o = RemoteOracle::new(Scripted::new(vec![Ok(bad), Ok(bad), Ok(bad)]), 1);
        let err = o.choose_material(&part(), &catalog(), "").unwrap_err();
        assert!(matches!(err, OracleError::Schema { .. }));
        let seen = o.transport().seen.lock().unwrap();
        assert_eq!(seen.len(), 2);
        assert_eq!(seen[0], seen[1], "retry must resend the identical payload");
    }

    #[test]
    fn transport_failure_is_retried_with_identical_payload() {
        let o = RemoteOracle::new(Scripted::new(vec![Err("reset"), Ok(r#"{"density": 950, "notes": "plastic"}"#)]), 1);
        let img = RgbImage::filled(4, 4, [0.5; 3]);
        assert_eq!(o.estimate_density(&img).unwrap().density, 950.0);
        let seen = o.transport().seen.lock().unwrap();
        assert_eq!(seen.len(), 2);
        assert_eq!(seen[0], seen[1]);
        assert_eq!(seen[0].images.len(), 1);
        assert_eq!(seen[0].prompt, prompts::DENSITY);
    }

    #[test]
    fn schema_failure_on_density_is_not_retried() {
        let o = RemoteOracle::new(Scripted::new(vec![Ok(r#"{"density": -5, "notes": "x"}"#), Ok("{}")]), 1);
        let img = RgbImage::filled(4, 4, [0.5; 3]);
        assert!(matches!(o.estimate_density(&img), Err(OracleError::Schema { .. })));
        assert_eq!(o.transport().seen.lock().unwrap().len(), 1);
    }

    #[test]
    fn two_transport_failures_surface_as_transport_error() {
        let o = RemoteOracle::new(Scripted::new(vec![Err("down"), Err("down")]), 1);
        let img = RgbImage::filled(4, 4, [0.5; 3]);
        assert!(o.estimate_density(&img).unwrap_err().is_transport());
    }

    #[test]
    fn judge_non_json_is_schema_error_after_retry() {
        let o = RemoteOracle::new(Scripted::new(vec![Ok("great job"), Ok("still prose")]), 1);
        let img = RgbImage::filled(4, 4, [0.5; 3]);
        assert!(matches!(o.judge_video(&[img], "prepare breakfast"), Err(OracleError::MalformedJson(_))));
        assert_eq!(o.transport().seen.lock().unwrap().len(), 2);
    }

    #[test]
    fn limiter_bounds_in_flight_requests() {
        struct Slow {
            now: AtomicUsize,
            peak: AtomicUsize,
        }
        impl Transport for Slow {
            fn post(&self, _: &OracleRequest) -> Result<String, OracleError> {
                let n = self.now.fetch_add(1, Ordering::SeqCst) + 1;
                self.peak.fetch_max(n, Ordering::SeqCst);
                std::thread::sleep(Duration::from_millis(20));
                self.now.fetch_sub(1, Ordering::SeqCst);
                Ok(r#"{"density": 1, "notes": ""}"#.into())
            }
        }
        let o = RemoteOracle::new(Slow { now: AtomicUsize::new(0), peak: AtomicUsize::new(0) }, 2);
        let img = RgbImage::filled(2, 2, [0.0; 3]);
        std::thread::scope(|s| {
            for _ in 0..6 {
                s.spawn(|| o.estimate_density(&img).unwrap());
            }
        });
        assert!(o.transport().peak.load(Ordering::SeqCst) <= 2);
    }

    #[test]
    fn context_category_split() {
        assert_eq!(context_category("category=metal;a kettle"), ("a kettle", "metal"));
        assert_eq!(context_category("a kettle"), ("a kettle", "all"));
    }
}
