use std::sync::{Condvar, Mutex};
use std::time::Duration;

use base64::Engine as _;
use serde::{Deserialize, Serialize};

use super::{require_role, vision_prompt, BackendConfig, BackendDescriptor, BackendRole, MealAnalysis, ModelBackend, PromptContext};
use crate::error::{Error, Result};

fn default_timeout_ms() -> u64 {
    30_000
}

fn default_in_flight() -> usize {
    4
}

/// HTTP adapter settings. The credential itself is read from the named
/// environment variable at construction and never stored in config files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemoteSpec {
    pub endpoint: String,
    pub credentials_env: String,
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: u64,
    #[serde(default = "default_in_flight")]
    pub max_in_flight: usize,
}

/// Wire request. One endpoint serves every role; `task` says which reply
/// shape is expected.
#[derive(Debug, Serialize, Deserialize)]
pub struct RemoteRequest {
    pub role: BackendRole,
    pub task: RemoteTask,
    pub prompt: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image_ref: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image_base64: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RemoteTask {
    /// Reply: a `MealAnalysis` document.
    AnalyzeImage,
    /// Reply: a `MealAnalysis` document.
    AnalyzeText,
    /// Reply: `{"text": "..."}`.
    Complete,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct CompletionReply {
    pub text: String,
}

struct Gate {
    cap: usize,
    busy: Mutex<usize>,
    freed: Condvar,
}

struct Permit<'a>(&'a Gate);

impl Gate {
    fn acquire(&self) -> Permit<'_> {
        let mut busy = self.busy.lock().unwrap_or_else(|p| p.into_inner());
        while *busy >= self.cap {
            busy = self.freed.wait(busy).unwrap_or_else(|p| p.into_inner());
        }
        *busy += 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        let mut busy = self.0.busy.lock().unwrap_or_else(|p| p.into_inner());
        *busy -= 1;
        self.0.freed.notify_one();
    }
}

pub struct RemoteBackend {
    descriptor: BackendDescriptor,
    spec: RemoteSpec,
    token: String,
    client: reqwest::blocking::Client,
    gate: Gate,
}

impl std::fmt::Debug for RemoteBackend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RemoteBackend")
            .field("role", &self.descriptor.role)
            .field("endpoint", &self.spec.endpoint)
            .finish_non_exhaustive()
    }
}

impl RemoteBackend {
    /// Must not be called from inside an async runtime thread; the blocking
    /// client owns its own runtime.
    pub fn new(descriptor: BackendDescriptor) -> Result<Self> {
        let BackendConfig::Remote(spec) = &descriptor.config else {
            return Err(Error::config("RemoteBackend needs a remote descriptor"));
        };
        let spec = spec.clone();
        if spec.max_in_flight == 0 {
            return Err(Error::config("max_in_flight must be at least 1"));
        }
        let token = std::env::var(&spec.credentials_env)
            .ok()
            .filter(|t| !t.is_empty())
            .ok_or_else(|| {
                Error::config(format!(
                    "{} backend: credential variable {} is not set",
                    descriptor.role, spec.credentials_env
                ))
            })?;
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_millis(spec.timeout_ms))
            .build()
            .map_err(|e| Error::config(format!("http client: {e}")))?;
        Ok(Self {
            gate: Gate {
                cap: spec.max_in_flight,
                busy: Mutex::new(0),
                freed: Condvar::new(),
            },
            descriptor,
            spec,
            token,
            client,
        })
    }

    fn call(&self, req: &RemoteRequest) -> Result<Vec<u8>> {
        let _permit = self.gate.acquire();
        let resp = self
            .client
            .post(&self.spec.endpoint)
            .bearer_auth(&self.token)
            .json(req)
            .send()
            .map_err(|e| Error::Transport {
                message: format!("{} backend: {e}", self.descriptor.role),
                retriable: e.is_timeout() || e.is_connect(),
            })?;
        let status = resp.status();
        let body = resp.bytes().map_err(|e| Error::Transport {
            message: format!("{} backend: reading body: {e}", self.descriptor.role),
            retriable: e.is_timeout(),
        })?;
        if !status.is_success() {
            return Err(Error::Transport {
                message: format!(
                    "{} backend returned {status}: {}",
                    self.descriptor.role,
                    String::from_utf8_lossy(&body).chars().take(200).collect::<String>()
                ),
                retriable: status.is_server_error() || status.as_u16() == 429,
            });
        }
        Ok(body.to_vec())
    }

    fn analysis(&self, req: RemoteRequest) -> Result<MealAnalysis> {
        let body = self.call(&req)?;
        let a: MealAnalysis = serde_json::from_slice(&body)
            .map_err(|e| Error::integrity(format!("remote analysis does not match the payload schema: {e}")))?;
        a.validate()?;
        Ok(a)
    }
}

impl ModelBackend for RemoteBackend {
    fn descriptor(&self) -> &BackendDescriptor {
        &self.descriptor
    }

    fn analyze_image(&self, image_ref: &str, ctx: &PromptContext) -> Result<MealAnalysis> {
        require_role(&self.descriptor, &[BackendRole::Vision], "image analysis")?;
        self.analysis(RemoteRequest {
            role: self.descriptor.role,
            task: RemoteTask::AnalyzeImage,
            prompt: vision_prompt(ctx),
            image_ref: Some(image_ref.to_string()),
            image_base64: ctx
                .image_bytes
                .as_ref()
                .map(|b| base64::engine::general_purpose::STANDARD.encode(b)),
        })
    }

    fn analyze_text(&self, text: &str, _ctx: &PromptContext) -> Result<MealAnalysis> {
        require_role(&self.descriptor, &[BackendRole::Vision], "text analysis")?;
        if text.trim().is_empty() {
            return Err(Error::contract("text analysis needs non-empty text"));
        }
        self.analysis(RemoteRequest {
            role: self.descriptor.role,
            task: RemoteTask::AnalyzeText,
            prompt: format!("Estimate the nutrients of this meal description as JSON: {text}"),
            image_ref: None,
            image_base64: None,
        })
    }

    fn complete_text(&self, prompt: &str) -> Result<String> {
        require_role(
            &self.descriptor,
            &[BackendRole::Dialog, BackendRole::ControllerAssist, BackendRole::FileAssist],
            "text completion",
        )?;
        if prompt.trim().is_empty() {
            return Err(Error::contract("empty prompt"));
        }
        let body = self.call(&RemoteRequest {
            role: self.descriptor.role,
            task: RemoteTask::Complete,
            prompt: prompt.to_string(),
            image_ref: None,
            image_base64: None,
        })?;
        let reply: CompletionReply = serde_json::from_slice(&body)
            .map_err(|e| Error::integrity(format!("remote completion does not match the payload schema: {e}")))?;
        Ok(reply.text)
    }
}
