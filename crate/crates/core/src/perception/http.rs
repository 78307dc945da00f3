//! Bridge to remote vision/language model servers.
//!
//! Every skill is one `POST` with a JSON body
//! `{format_version, skill, image, image_encoding, args}`; the server answers
//! `{ok, value}` (or `{ok: false, error}`). Boxes travel as `[x1, y1, x2, y2]`.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::{Arc, Condvar, Mutex};
use std::time::Duration;

use base64::Engine;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{Patch, PerceptionToolkit, ToolkitProvider, ROOT_PATCH};
use crate::error::{Error, Result};
use crate::reasoner::RuntimeValue;
use crate::state::BoundingBox;

pub const WIRE_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HttpToolkitConfig {
    /// Default endpoint for every skill.
    pub endpoint: String,
    /// Per-skill endpoint overrides.
    #[serde(default)]
    pub skill_endpoints: BTreeMap<String, String>,
    pub timeout_secs: f64,
    pub max_connections: usize,
    /// Send base64 image bytes read from `image_root` instead of the reference.
    #[serde(default)]
    pub send_image_bytes: bool,
    #[serde(default)]
    pub image_root: Option<PathBuf>,
}

impl HttpToolkitConfig {
    pub fn new(endpoint: impl Into<String>) -> Self {
        Self {
            endpoint: endpoint.into(),
            skill_endpoints: BTreeMap::new(),
            timeout_secs: 30.0,
            max_connections: 4,
            send_image_bytes: false,
            image_root: None,
        }
    }

    fn endpoint_for(&self, skill: &str) -> &str {
        self.skill_endpoints.get(skill).map(String::as_str).unwrap_or(&self.endpoint)
    }
}

/// Counting gate bounding in-flight requests.
#[derive(Debug)]
struct Gate {
    limit: usize,
    in_flight: Mutex<usize>,
    freed: Condvar,
}

impl Gate {
    fn acquire(&self) -> GateGuard<'_> {
        let mut n = self.in_flight.lock().unwrap_or_else(|e| e.into_inner());
        while *n >= self.limit {
            n = self.freed.wait(n).unwrap_or_else(|e| e.into_inner());
        }
        *n += 1;
        GateGuard(self)
    }
}

struct GateGuard<'a>(&'a Gate);

impl Drop for GateGuard<'_> {
    fn drop(&mut self) {
        let mut n = self.0.in_flight.lock().unwrap_or_else(|e| e.into_inner());
        *n -= 1;
        self.0.freed.notify_one();
    }
}

#[derive(Debug, Clone)]
pub struct HttpToolkitProvider {
    config: Arc<HttpToolkitConfig>,
    client: reqwest::blocking::Client,
    gate: Arc<Gate>,
}

impl HttpToolkitProvider {
    pub fn new(config: HttpToolkitConfig) -> Result<Self> {
        if config.max_connections == 0 {
            return Err(Error::Config("toolkit max_connections must be positive".into()));
        }
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs_f64(config.timeout_secs))
            .build()
            .map_err(|e| Error::Config(format!("http client: {e}")))?;
        let gate = Arc::new(Gate { limit: config.max_connections, in_flight: Mutex::new(0), freed: Condvar::new() });
        Ok(Self { config: Arc::new(config), client, gate })
    }

    /// Opens a toolkit for one image; asks the server for the image size.
    pub fn open(&self, image_ref: &str) -> Result<HttpToolkit> {
        let mut tk = HttpToolkit {
            provider: self.clone(),
            image: image_ref.to_string(),
            root: Patch::new(image_ref, BoundingBox { x1: 0.0, y1: 0.0, x2: 0.0, y2: 0.0 }, ROOT_PATCH),
        };
        let size = tk.post("image_size", json!({}))?;
        let dims = number_array(&size, 2)?;
        tk.root.bbox = BoundingBox::new(0.0, 0.0, dims[0], dims[1]).map_err(|e| Error::ToolkitProtocol(e.to_string()))?;
        Ok(tk)
    }
}

impl ToolkitProvider for HttpToolkitProvider {
    fn toolkit_for(&self, image_ref: &str) -> Result<Arc<dyn PerceptionToolkit>> {
        Ok(Arc::new(self.open(image_ref)?))
    }
}

#[derive(Debug, Clone)]
pub struct HttpToolkit {
    provider: HttpToolkitProvider,
    image: String,
    root: Patch,
}

fn number_array(v: &Value, len: usize) -> Result<Vec<f64>> {
    let arr = v.as_array().ok_or_else(|| Error::ToolkitProtocol(format!("expected array, got {v}")))?;
    if arr.len() != len {
        return Err(Error::ToolkitProtocol(format!("expected {len} numbers, got {v}")));
    }
    arr.iter()
        .map(|x| x.as_f64().ok_or_else(|| Error::ToolkitProtocol(format!("non-numeric entry in {v}"))))
        .collect()
}

fn parse_box(v: &Value) -> Result<BoundingBox> {
    let c = number_array(v, 4)?;
    BoundingBox::new(c[0], c[1], c[2], c[3]).map_err(|e| Error::ToolkitProtocol(e.to_string()))
}

impl HttpToolkit {
    fn image_payload(&self) -> Result<(String, &'static str)> {
        let cfg = &self.provider.config;
        if !cfg.send_image_bytes {
            return Ok((self.image.clone(), "reference"));
        }
        let path = match &cfg.image_root {
            Some(root) => root.join(&self.image),
            None => PathBuf::from(&self.image),
        };
        let bytes = std::fs::read(&path)
            .map_err(|e| Error::ToolkitUnavailable(format!("cannot read image {}: {e}", path.display())))?;
        Ok((base64::engine::general_purpose::STANDARD.encode(bytes), "base64"))
    }

    fn post(&self, skill: &str, args: Value) -> Result<Value> {
        let (image, encoding) = self.image_payload()?;
        let body = json!({
            "format_version": WIRE_FORMAT_VERSION,
            "skill": skill,
            "image": image,
            "image_encoding": encoding,
            "args": args,
        });
        let url = self.provider.config.endpoint_for(skill);
        let _slot = self.provider.gate.acquire();
        let resp = self
            .provider
            .client
            .post(url)
            .json(&body)
            .send()
            .map_err(|e| Error::ToolkitUnavailable(format!("{skill}: {e}")))?;
        let status = resp.status();
        if !status.is_success() {
            return Err(Error::ToolkitUnavailable(format!("{skill}: server returned {status}")));
        }
        let payload: Value = resp.json().map_err(|e| Error::ToolkitProtocol(format!("{skill}: {e}")))?;
        match payload.get("ok").and_then(Value::as_bool) {
            Some(true) => payload
                .get("value")
                .cloned()
                .ok_or_else(|| Error::ToolkitProtocol(format!("{skill}: missing `value`"))),
            Some(false) => {
                let msg = payload.get("error").and_then(Value::as_str).unwrap_or("unspecified failure");
                Err(Error::ToolkitUnavailable(format!("{skill}: {msg}")))
            }
            None => Err(Error::ToolkitProtocol(format!("{skill}: missing boolean `ok`"))),
        }
    }

    /// Calls `skill` on `patch` and shapes the reply per skill.
    pub fn http_toolkit_call(&self, skill: &str, patch: &Patch, mut args: Value) -> Result<RuntimeValue> {
        if let Value::Object(map) = &mut args {
            map.insert("patch".into(), json!(<[f64; 4]>::from(patch.bbox)));
        }
        let v = self.post(skill, args)?;
        let shaped = match skill {
            "find" => {
                let boxes = v.as_array().ok_or_else(|| Error::ToolkitProtocol(format!("find: expected list, got {v}")))?;
                RuntimeValue::PatchList(
                    boxes
                        .iter()
                        .enumerate()
                        .map(|(k, b)| Ok(Patch::new(&self.image, parse_box(b)?, format!("object_{}", k + 1))))
                        .collect::<Result<_>>()?,
                )
            }
            "exists" | "verify_property" => RuntimeValue::Boolean(
                v.as_bool().ok_or_else(|| Error::ToolkitProtocol(format!("{skill}: expected boolean, got {v}")))?,
            ),
            "caption" | "simple_query" | "llm_query" => RuntimeValue::Text(
                v.as_str()
                    .ok_or_else(|| Error::ToolkitProtocol(format!("{skill}: expected string, got {v}")))?
                    .to_string(),
            ),
            "compute_depth" => RuntimeValue::Number(
                v.as_f64().ok_or_else(|| Error::ToolkitProtocol(format!("{skill}: expected number, got {v}")))?,
            ),
            "crop" => RuntimeValue::Patch(Patch::new(&self.image, parse_box(&v)?, "crop")),
            other => return Err(Error::ToolkitProtocol(format!("no reply shape for skill `{other}`"))),
        };
        Ok(shaped)
    }
}

fn expect_kind<T>(skill: &str, v: RuntimeValue, pick: impl FnOnce(RuntimeValue) -> Option<T>) -> Result<T> {
    pick(v).ok_or_else(|| Error::ToolkitProtocol(format!("{skill}: unexpected reply kind")))
}

impl PerceptionToolkit for HttpToolkit {
    fn find(&self, patch: &Patch, name: &str) -> Result<Vec<Patch>> {
        let label = name.trim().to_lowercase();
        let list = expect_kind("find", self.http_toolkit_call("find", patch, json!({ "name": name }))?, |v| match v {
            RuntimeValue::PatchList(l) => Some(l),
            _ => None,
        })?;
        Ok(list
            .into_iter()
            .enumerate()
            .map(|(k, mut p)| {
                p.name = format!("{label}_{}", k + 1);
                p
            })
            .collect())
    }

    fn exists(&self, patch: &Patch, name: &str) -> Result<bool> {
        expect_kind("exists", self.http_toolkit_call("exists", patch, json!({ "name": name }))?, |v| v.as_bool())
    }

    fn verify_property(&self, patch: &Patch, name: &str, attribute: &str) -> Result<bool> {
        let args = json!({ "name": name, "attribute": attribute });
        expect_kind("verify_property", self.http_toolkit_call("verify_property", patch, args)?, |v| v.as_bool())
    }

    fn caption(&self, patch: &Patch) -> Result<String> {
        expect_kind("caption", self.http_toolkit_call("caption", patch, json!({}))?, |v| v.into_text())
    }

    fn simple_query(&self, patch: &Patch, question: &str) -> Result<String> {
        let args = json!({ "question": question });
        expect_kind("simple_query", self.http_toolkit_call("simple_query", patch, args)?, |v| v.into_text())
    }

    fn compute_depth(&self, patch: &Patch) -> Result<f64> {
        expect_kind("compute_depth", self.http_toolkit_call("compute_depth", patch, json!({}))?, |v| v.as_number())
    }

    fn llm_query(&self, question: &str, context: &str) -> Result<String> {
        let args = json!({ "question": question, "context": context });
        expect_kind("llm_query", self.http_toolkit_call("llm_query", &self.root, args)?, |v| v.into_text())
    }

    fn crop(&self, patch: &Patch, bbox: BoundingBox) -> Result<Patch> {
        let args = json!({ "box": <[f64; 4]>::from(bbox) });
        expect_kind("crop", self.http_toolkit_call("crop", patch, args)?, |v| match v {
            RuntimeValue::Patch(p) => Some(p),
            _ => None,
        })
    }

    fn root_patch(&self) -> Patch {
        self.root.clone()
    }
}
