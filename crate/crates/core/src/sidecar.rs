//! Client for an external embedding process speaking newline-delimited JSON
//! over its standard streams.
//!
//! Requests, one per line:
//!
//! ```text
//! {"op":"info","id":1}
//! {"op":"embed","id":2,"texts":["a","b"]}
//! ```
//!
//! Responses echo the request id, in request order:
//!
//! ```text
//! {"id":1,"dim":512,"model":"name"}
//! {"id":2,"dim":512,"vectors":[[...],[...]]}
//! {"id":2,"error":"message"}
//! ```
//!
//! The process is started with `sh -c <command>` and asked for `info` before
//! anything else. Requests are serialized through a mutex, so one provider
//! can be shared between threads.

use std::io::{BufRead, BufReader, BufWriter, Write};
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::embed::{EmbedderSpec, EmbeddingProvider, EmbeddingVector, ProviderError, DEFAULT_BATCH_SIZE};
use crate::error::{Error, Result};

#[derive(Debug, Serialize)]
struct Request<'a> {
    op: &'a str,
    id: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    texts: Option<&'a [String]>,
}

#[derive(Debug, Deserialize)]
struct Response {
    id: i64,
    #[serde(default)]
    dim: Option<usize>,
    #[serde(default)]
    model: Option<String>,
    #[serde(default)]
    vectors: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    error: Option<String>,
}

struct Channel {
    child: Child,
    stdin: BufWriter<ChildStdin>,
    stdout: BufReader<ChildStdout>,
    next_id: u64,
}

impl Channel {
    fn call(&mut self, op: &str, texts: Option<&[String]>) -> std::result::Result<Response, ProviderError> {
        let id = self.next_id;
        self.next_id += 1;
        let line = serde_json::to_string(&Request { op, id, texts })
            .map_err(|e| ProviderError(format!("encoding request: {e}")))?;
        writeln!(self.stdin, "{line}")
            .and_then(|_| self.stdin.flush())
            .map_err(|e| ProviderError(format!("writing to sidecar: {e}")))?;
        let mut reply = String::new();
        let n = self
            .stdout
            .read_line(&mut reply)
            .map_err(|e| ProviderError(format!("reading from sidecar: {e}")))?;
        if n == 0 {
            return Err(ProviderError("sidecar closed its output".into()));
        }
        let response: Response = serde_json::from_str(reply.trim_end())
            .map_err(|e| ProviderError(format!("malformed sidecar response: {e}")))?;
        if let Some(message) = response.error {
            return Err(ProviderError(format!("sidecar error: {message}")));
        }
        if response.id != id as i64 {
            return Err(ProviderError(format!(
                "sidecar answered id {} to request {id}",
                response.id
            )));
        }
        Ok(response)
    }
}

pub struct SidecarProvider {
    spec: EmbedderSpec,
    model: String,
    channel: Mutex<Channel>,
}

impl SidecarProvider {
    pub fn spawn(command: &str) -> Result<Self> {
        Self::spawn_with_batch_size(command, DEFAULT_BATCH_SIZE)
    }

    pub fn spawn_with_batch_size(command: &str, batch_size: usize) -> Result<Self> {
        let mut child = Command::new("sh")
            .arg("-c")
            .arg(command)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| Error::Provider {
                first_index: 0,
                message: format!("cannot start `{command}`: {e}"),
            })?;
        let stdin = BufWriter::new(child.stdin.take().expect("piped stdin"));
        let stdout = BufReader::new(child.stdout.take().expect("piped stdout"));
        let mut channel = Channel {
            child,
            stdin,
            stdout,
            next_id: 1,
        };
        let info = channel.call("info", None).map_err(|e| Error::Provider {
            first_index: 0,
            message: format!("handshake failed: {}", e.0),
        });
        let info = match info {
            Ok(info) => info,
            Err(e) => {
                let _ = channel.child.kill();
                let _ = channel.child.wait();
                return Err(e);
            }
        };
        let dim = info.dim.unwrap_or(0);
        let model = info.model.unwrap_or_else(|| "unknown".to_string());
        let spec = EmbedderSpec::new(format!("sidecar:{model}"), dim, batch_size)?;
        Ok(Self {
            spec,
            model,
            channel: Mutex::new(channel),
        })
    }

    /// Model name reported by the sidecar.
    pub fn model(&self) -> &str {
        &self.model
    }
}

impl EmbeddingProvider for SidecarProvider {
    fn spec(&self) -> &EmbedderSpec {
        &self.spec
    }

    fn embed(&self, texts: &[String]) -> std::result::Result<Vec<EmbeddingVector>, ProviderError> {
        if texts.is_empty() {
            return Ok(Vec::new());
        }
        let mut channel = self
            .channel
            .lock()
            .map_err(|_| ProviderError("sidecar channel poisoned".into()))?;
        let response = channel.call("embed", Some(texts))?;
        let vectors = response
            .vectors
            .ok_or_else(|| ProviderError("embed response without vectors".into()))?;
        if vectors.len() != texts.len() {
            return Err(ProviderError(format!(
                "sidecar returned {} vectors for {} texts",
                vectors.len(),
                texts.len()
            )));
        }
        vectors
            .into_iter()
            .map(|v| {
                if v.len() != self.spec.dim {
                    return Err(ProviderError(format!(
                        "sidecar vector has length {}, expected {}",
                        v.len(),
                        self.spec.dim
                    )));
                }
                EmbeddingVector::new(v).map_err(|e| ProviderError(e.to_string()))
            })
            .collect()
    }
}

impl Drop for SidecarProvider {
    fn drop(&mut self) {
        if let Ok(channel) = self.channel.get_mut() {
            let _ = channel.child.kill();
            let _ = channel.child.wait();
        }
    }
}

impl std::fmt::Debug for SidecarProvider {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SidecarProvider")
            .field("spec", &self.spec)
            .finish_non_exhaustive()
    }
}
