//! Run configuration, read from a TOML file of dotted keys such as
//! `camera.alpha = 0.0033` or `[pipeline]` tables. Unknown keys are errors.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::time::Duration;

use serde::Deserialize;

use crate::model::{IsoCamera, DEFAULT_ALPHA, DEFAULT_PITCH_ALIGN_DEG, DEFAULT_YAW_ALIGN_DEG};
use crate::postprocess::PostprocessConfig;
use crate::providers::http::{ProviderEndpoint, DEFAULT_BACKOFF, DEFAULT_RETRIES, DEFAULT_TIMEOUT};
use crate::providers::Endpoint;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ConfigError {
    #[error("{path}: {message}")]
    Read { path: String, message: String },
    #[error("{0}")]
    Parse(String),
    #[error("invalid value for {key}: {message}")]
    Invalid { key: String, message: String },
}

fn invalid(key: &str, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid { key: key.into(), message: message.into() }
}

/// Intrinsics left unset follow the image size.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CameraConfig {
    pub fx: Option<f64>,
    pub fy: Option<f64>,
    pub cx: Option<f64>,
    pub cy: Option<f64>,
    pub alpha: f64,
    pub yaw_align: f64,
    pub pitch_align: f64,
}

impl Default for CameraConfig {
    fn default() -> Self {
        Self {
            fx: None,
            fy: None,
            cx: None,
            cy: None,
            alpha: DEFAULT_ALPHA,
            yaw_align: DEFAULT_YAW_ALIGN_DEG,
            pitch_align: DEFAULT_PITCH_ALIGN_DEG,
        }
    }
}

impl CameraConfig {
    pub fn for_image(&self, w: u32, h: u32) -> IsoCamera {
        let base = IsoCamera::for_image(w, h);
        IsoCamera {
            fx: self.fx.unwrap_or(base.fx),
            fy: self.fy.unwrap_or(base.fy),
            cx: self.cx.unwrap_or(base.cx),
            cy: self.cy.unwrap_or(base.cy),
            alpha: self.alpha,
            yaw_align: self.yaw_align,
            pitch_align: self.pitch_align,
            ..base
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct PostprocessSection {
    snap_margin: f64,
    support_gap: f64,
    max_rounds: u32,
    repetition_threshold: f64,
    exempt: Vec<String>,
}

impl Default for PostprocessSection {
    fn default() -> Self {
        let d = PostprocessConfig::default();
        Self {
            snap_margin: d.snap_margin,
            support_gap: d.support_gap,
            max_rounds: d.max_deocclusion_rounds,
            repetition_threshold: d.repetition_threshold,
            exempt: d.overlap_exemptions.iter().map(|(a, b)| format!("{a}:{b}")).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    pub clip_gate: f64,
    pub n_guide_candidates: u32,
    pub amodal_seeds: u32,
    pub coverage_threshold: f64,
    pub fanout_limit: usize,
    pub repetition_merge: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            clip_gate: 30.0,
            n_guide_candidates: 3,
            amodal_seeds: 6,
            coverage_threshold: 0.85,
            fanout_limit: 4,
            repetition_merge: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProviderSettings {
    pub url: String,
    /// Seconds.
    #[serde(default)]
    pub timeout: Option<f64>,
    #[serde(default)]
    pub retries: Option<u32>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RawConfig {
    camera: CameraConfig,
    postprocess: PostprocessSection,
    pipeline: PipelineConfig,
    providers: BTreeMap<String, ProviderSettings>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    pub camera: CameraConfig,
    pub postprocess: PostprocessConfig,
    pub pipeline: PipelineConfig,
    /// Keyed by endpoint name or `default`.
    pub providers: BTreeMap<String, ProviderSettings>,
}

impl Default for Config {
    fn default() -> Self {
        Self::from_raw(RawConfig::default()).expect("defaults are valid")
    }
}

pub fn parse_exemption(s: &str) -> Option<(String, String)> {
    let (a, b) = s.split_once(':')?;
    let (a, b) = (a.trim(), b.trim());
    (!a.is_empty() && !b.is_empty()).then(|| crate::postprocess::exemption_pair(a, b))
}

impl Config {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string().trim_end().to_string()))?;
        Self::from_raw(raw)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Read {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::parse(&text)
    }

    fn from_raw(raw: RawConfig) -> Result<Self, ConfigError> {
        let c = &raw.camera;
        for (key, v) in [("camera.fx", c.fx), ("camera.fy", c.fy)] {
            if let Some(v) = v {
                if !(v.is_finite() && v > 0.0) {
                    return Err(invalid(key, "must be a positive number"));
                }
            }
        }
        for (key, v) in [("camera.cx", c.cx), ("camera.cy", c.cy)] {
            if let Some(v) = v {
                if !(v.is_finite() && v >= 0.0) {
                    return Err(invalid(key, "must be a nonnegative number"));
                }
            }
        }
        if !(c.alpha.is_finite() && c.alpha > 0.0) {
            return Err(invalid("camera.alpha", "must be a positive number"));
        }
        for (key, v) in [("camera.yaw_align", c.yaw_align), ("camera.pitch_align", c.pitch_align)] {
            if !v.is_finite() {
                return Err(invalid(key, "must be finite"));
            }
        }
        let p = &raw.postprocess;
        if !(p.snap_margin.is_finite() && p.snap_margin >= 0.0) {
            return Err(invalid("postprocess.snap_margin", "must be >= 0"));
        }
        if !(p.support_gap.is_finite() && p.support_gap >= 0.0) {
            return Err(invalid("postprocess.support_gap", "must be >= 0"));
        }
        if !(p.repetition_threshold > 0.0 && p.repetition_threshold <= 1.0) {
            return Err(invalid("postprocess.repetition_threshold", "must be in (0, 1]"));
        }
        let mut exemptions = BTreeSet::new();
        for e in &p.exempt {
            exemptions.insert(parse_exemption(e).ok_or_else(|| invalid("postprocess.exempt", format!("{e:?} is not label:label")))?);
        }
        let q = &raw.pipeline;
        if !q.clip_gate.is_finite() {
            return Err(invalid("pipeline.clip_gate", "must be finite"));
        }
        if q.n_guide_candidates == 0 {
            return Err(invalid("pipeline.n_guide_candidates", "must be >= 1"));
        }
        if q.amodal_seeds == 0 {
            return Err(invalid("pipeline.amodal_seeds", "must be >= 1"));
        }
        if !(q.coverage_threshold >= 0.0 && q.coverage_threshold <= 1.0) {
            return Err(invalid("pipeline.coverage_threshold", "must be in [0, 1]"));
        }
        if q.fanout_limit == 0 {
            return Err(invalid("pipeline.fanout_limit", "must be >= 1"));
        }
        for (name, s) in &raw.providers {
            if name != "default" && Endpoint::from_name(name).is_none() {
                return Err(invalid(&format!("providers.{name}"), "unknown provider name"));
            }
            if !(s.url.starts_with("http://") || s.url.starts_with("https://")) {
                return Err(invalid(&format!("providers.{name}.url"), "must be an http(s) URL"));
            }
            if let Some(t) = s.timeout {
                if !(t.is_finite() && t > 0.0) {
                    return Err(invalid(&format!("providers.{name}.timeout"), "must be a positive number of seconds"));
                }
            }
        }
        Ok(Self {
            camera: raw.camera,
            postprocess: PostprocessConfig {
                snap_margin: p.snap_margin,
                support_gap: p.support_gap,
                max_deocclusion_rounds: p.max_rounds,
                repetition_threshold: p.repetition_threshold,
                overlap_exemptions: exemptions,
            },
            pipeline: raw.pipeline,
            providers: raw.providers,
        })
    }

    /// Endpoint settings for a provider; the API key comes from
    /// `ARTISCENE_API_KEY_<NAME>`.
    pub fn endpoint(&self, name: &str, api_key: Option<String>) -> Option<ProviderEndpoint> {
        let s = self.providers.get(name)?;
        Some(ProviderEndpoint {
            base_url: s.url.clone(),
            timeout: s.timeout.map(Duration::from_secs_f64).unwrap_or(DEFAULT_TIMEOUT),
            retries: s.retries.unwrap_or(DEFAULT_RETRIES),
            backoff: DEFAULT_BACKOFF,
            api_key,
        })
    }
}

pub fn api_key_var(provider: &str) -> String {
    format!("ARTISCENE_API_KEY_{}", provider.to_uppercase())
}
