//! Client for the optional model server speaking NDJSON over stdio.
//!
//! The server opens with a handshake line:
//!
//! ```text
//! {"tasks":["embed","stance","ner","m3"],"embed_dim":1024,"models":{...},"batch_size":32}
//! ```
//!
//! after which every request line gets exactly one response line carrying the
//! same `id`. Responses may arrive in any order.
//!
//! | task     | request fields        | `result` fields                                    |
//! |----------|-----------------------|----------------------------------------------------|
//! | `embed`  | `texts`               | `vectors`: one `embed_dim` array per text          |
//! | `stance` | `texts`, `masking`    | `labels`: codes 0/1/2, `probs`: one triple per text |
//! | `ner`    | `texts`               | `entities`: per text, `[{text,label,start,end}]`   |
//! | `m3`     | `rows` (user objects) | `predictions`: M3 prediction objects               |
//!
//! Failures come back as `{"id":..,"error":{"code":..,"message":..}}`.

use std::collections::{BTreeMap, HashMap};
use std::io::{BufRead, BufReader, Write};
use std::process::{Child, Command, Stdio};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::content::{ContentError, EmbeddingMatrix, EmbeddingProvider, EntityClass, EntityMention, EntityTagger};
use crate::stance::{StanceClassifier, StanceError, StanceLabel};

#[derive(Debug, thiserror::Error)]
pub enum SidecarError {
    #[error("cannot start sidecar '{command}': {source}")]
    Spawn {
        command: String,
        #[source]
        source: std::io::Error,
    },
    #[error("sidecar transport failed: {0}")]
    Transport(#[from] std::io::Error),
    #[error("sidecar protocol violation: {0}")]
    Protocol(String),
    #[error("sidecar rejected batch {batch} ({code}): {message}")]
    Remote { batch: usize, code: String, message: String },
    #[error("sidecar does not offer task '{0}'")]
    Unsupported(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Handshake {
    pub tasks: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embed_dim: Option<usize>,
    #[serde(default)]
    pub models: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub batch_size: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SidecarRequest {
    pub id: String,
    pub task: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub texts: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub masking: Option<bool>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub rows: Vec<Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub code: String,
    #[serde(default)]
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SidecarResponse {
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub result: Option<Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<ErrorBody>,
}

#[derive(Debug, Clone, Deserialize)]
struct StanceResult {
    labels: Vec<u8>,
    probs: Vec<[f64; 3]>,
}

#[derive(Debug, Clone, Deserialize)]
struct EmbedResult {
    vectors: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Deserialize)]
struct NerSpan {
    text: String,
    label: String,
}

#[derive(Debug, Clone, Deserialize)]
struct NerResult {
    entities: Vec<Vec<NerSpan>>,
}

#[derive(Debug, Clone, Deserialize)]
struct M3Result {
    predictions: Vec<Value>,
}

struct Conn {
    reader: Box<dyn BufRead + Send>,
    writer: Box<dyn Write + Send>,
    next_id: u64,
}

pub struct SidecarClient {
    conn: Mutex<Conn>,
    handshake: Handshake,
    child: Option<Child>,
}

impl std::fmt::Debug for SidecarClient {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SidecarClient").field("handshake", &self.handshake).finish()
    }
}

impl Drop for SidecarClient {
    fn drop(&mut self) {
        if let Some(child) = &mut self.child {
            let _ = child.kill();
            let _ = child.wait();
        }
    }
}

impl SidecarClient {
    /// Connects over existing streams and reads the handshake.
    pub fn new(
        mut reader: Box<dyn BufRead + Send>,
        writer: Box<dyn Write + Send>,
    ) -> Result<Self, SidecarError> {
        let mut line = String::new();
        if reader.read_line(&mut line)? == 0 {
            return Err(SidecarError::Protocol("closed before handshake".into()));
        }
        let handshake: Handshake = serde_json::from_str(line.trim_end())
            .map_err(|e| SidecarError::Protocol(format!("bad handshake: {e}")))?;
        Ok(Self {
            conn: Mutex::new(Conn {
                reader,
                writer,
                next_id: 1,
            }),
            handshake,
            child: None,
        })
    }

    /// Starts `command` (whitespace-separated program and arguments).
    pub fn spawn(command: &str) -> Result<Self, SidecarError> {
        let mut parts = command.split_whitespace();
        let program = parts.next().ok_or_else(|| SidecarError::Spawn {
            command: command.into(),
            source: std::io::Error::new(std::io::ErrorKind::InvalidInput, "empty command"),
        })?;
        let mut child = Command::new(program)
            .args(parts)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|source| SidecarError::Spawn {
                command: command.into(),
                source,
            })?;
        let stdin = child.stdin.take().expect("piped");
        let stdout = child.stdout.take().expect("piped");
        let mut client = Self::new(Box::new(BufReader::new(stdout)), Box::new(stdin))?;
        client.child = Some(child);
        Ok(client)
    }

    pub fn handshake(&self) -> &Handshake {
        &self.handshake
    }

    fn require(&self, task: &str) -> Result<(), SidecarError> {
        if self.handshake.tasks.iter().any(|t| t == task) {
            Ok(())
        } else {
            Err(SidecarError::Unsupported(task.into()))
        }
    }

    fn batch_size(&self) -> usize {
        self.handshake.batch_size.filter(|b| *b > 0).unwrap_or(64)
    }

    /// Sends every request, then collects responses by id. Results come back in request order.
    pub fn exchange(&self, mut requests: Vec<SidecarRequest>) -> Result<Vec<Value>, SidecarError> {
        let mut conn = self.conn.lock().expect("sidecar connection poisoned");
        let mut pending: HashMap<String, usize> = HashMap::new();
        for (i, req) in requests.iter_mut().enumerate() {
            req.id = conn.next_id.to_string();
            conn.next_id += 1;
            pending.insert(req.id.clone(), i);
            let line = serde_json::to_string(req).expect("request serialises");
            conn.writer.write_all(line.as_bytes())?;
            conn.writer.write_all(b"\n")?;
        }
        conn.writer.flush()?;

        let mut results: Vec<Option<Value>> = vec![None; requests.len()];
        let mut line = String::new();
        while !pending.is_empty() {
            line.clear();
            if conn.reader.read_line(&mut line)? == 0 {
                let mut missing: Vec<usize> = pending.values().copied().collect();
                missing.sort_unstable();
                return Err(SidecarError::Protocol(format!(
                    "stream closed with batches {missing:?} outstanding"
                )));
            }
            let resp: SidecarResponse = serde_json::from_str(line.trim_end())
                .map_err(|e| SidecarError::Protocol(format!("bad response line: {e}")))?;
            let Some(batch) = pending.remove(&resp.id) else {
                return Err(SidecarError::Protocol(format!("unexpected response id '{}'", resp.id)));
            };
            match (resp.result, resp.error) {
                (_, Some(err)) => {
                    return Err(SidecarError::Remote {
                        batch,
                        code: err.code,
                        message: err.message,
                    })
                }
                (Some(v), None) => results[batch] = Some(v),
                (None, None) => {
                    return Err(SidecarError::Protocol(format!("batch {batch}: empty response")))
                }
            }
        }
        Ok(results.into_iter().map(|v| v.expect("every id answered")).collect())
    }

    fn text_requests(&self, task: &str, texts: &[String], masking: Option<bool>) -> Vec<SidecarRequest> {
        texts
            .chunks(self.batch_size())
            .map(|chunk| SidecarRequest {
                id: String::new(),
                task: task.into(),
                texts: chunk.to_vec(),
                masking,
                rows: Vec::new(),
            })
            .collect()
    }

    pub fn stance(&self, texts: &[String], masking: bool) -> Result<Vec<(StanceLabel, [f64; 3])>, SidecarError> {
        self.require("stance")?;
        if texts.is_empty() {
            return Ok(Vec::new());
        }
        let reqs = self.text_requests("stance", texts, Some(masking));
        let sizes: Vec<usize> = reqs.iter().map(|r| r.texts.len()).collect();
        let mut out = Vec::with_capacity(texts.len());
        for (batch, (value, n)) in self.exchange(reqs)?.into_iter().zip(sizes).enumerate() {
            let r: StanceResult = serde_json::from_value(value)
                .map_err(|e| SidecarError::Protocol(format!("batch {batch}: {e}")))?;
            if r.labels.len() != n || r.probs.len() != n {
                return Err(SidecarError::Protocol(format!(
                    "batch {batch}: {n} texts but {} labels / {} prob rows",
                    r.labels.len(),
                    r.probs.len()
                )));
            }
            for (code, probs) in r.labels.into_iter().zip(r.probs) {
                let label = StanceLabel::from_code(code)
                    .ok_or_else(|| SidecarError::Protocol(format!("batch {batch}: label code {code}")))?;
                let sum: f64 = probs.iter().sum();
                if (sum - 1.0).abs() > 1e-6 || probs.iter().any(|p| !(0.0..=1.0).contains(p)) {
                    return Err(SidecarError::Protocol(format!(
                        "batch {batch}: probabilities {probs:?} do not form a distribution"
                    )));
                }
                out.push((label, probs));
            }
        }
        Ok(out)
    }

    pub fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, SidecarError> {
        self.require("embed")?;
        let dim = self
            .handshake
            .embed_dim
            .ok_or_else(|| SidecarError::Protocol("handshake lacks embed_dim".into()))?;
        if texts.is_empty() {
            return Ok(Vec::new());
        }
        let reqs = self.text_requests("embed", texts, None);
        let sizes: Vec<usize> = reqs.iter().map(|r| r.texts.len()).collect();
        let mut out = Vec::with_capacity(texts.len());
        for (batch, (value, n)) in self.exchange(reqs)?.into_iter().zip(sizes).enumerate() {
            let r: EmbedResult = serde_json::from_value(value)
                .map_err(|e| SidecarError::Protocol(format!("batch {batch}: {e}")))?;
            if r.vectors.len() != n {
                return Err(SidecarError::Protocol(format!("batch {batch}: {n} texts but {} vectors", r.vectors.len())));
            }
            for v in r.vectors {
                if v.len() != dim {
                    return Err(SidecarError::Protocol(format!(
                        "batch {batch}: vector of dim {} in a dim-{dim} session",
                        v.len()
                    )));
                }
                out.push(v);
            }
        }
        Ok(out)
    }

    pub fn ner(&self, texts: &[String]) -> Result<Vec<Vec<EntityMention>>, SidecarError> {
        self.require("ner")?;
        if texts.is_empty() {
            return Ok(Vec::new());
        }
        let reqs = self.text_requests("ner", texts, None);
        let sizes: Vec<usize> = reqs.iter().map(|r| r.texts.len()).collect();
        let mut out = Vec::with_capacity(texts.len());
        for (batch, (value, n)) in self.exchange(reqs)?.into_iter().zip(sizes).enumerate() {
            let r: NerResult = serde_json::from_value(value)
                .map_err(|e| SidecarError::Protocol(format!("batch {batch}: {e}")))?;
            if r.entities.len() != n {
                return Err(SidecarError::Protocol(format!("batch {batch}: {n} texts but {} entity lists", r.entities.len())));
            }
            for spans in r.entities {
                let mentions = spans
                    .into_iter()
                    .map(|s| {
                        let class = s
                            .label
                            .parse::<EntityClass>()
                            .map_err(|e| SidecarError::Protocol(format!("batch {batch}: {e}")))?;
                        Ok(EntityMention { surface: s.text, class })
                    })
                    .collect::<Result<Vec<_>, SidecarError>>()?;
                out.push(mentions);
            }
        }
        Ok(out)
    }

    /// Raw M3 prediction objects for the given user rows.
    pub fn m3(&self, rows: Vec<Value>) -> Result<Vec<Value>, SidecarError> {
        self.require("m3")?;
        if rows.is_empty() {
            return Ok(Vec::new());
        }
        let n = rows.len();
        let reqs: Vec<SidecarRequest> = rows
            .chunks(self.batch_size())
            .map(|chunk| SidecarRequest {
                id: String::new(),
                task: "m3".into(),
                texts: Vec::new(),
                masking: None,
                rows: chunk.to_vec(),
            })
            .collect();
        let mut out = Vec::with_capacity(n);
        for (batch, value) in self.exchange(reqs)?.into_iter().enumerate() {
            let r: M3Result = serde_json::from_value(value)
                .map_err(|e| SidecarError::Protocol(format!("batch {batch}: {e}")))?;
            out.extend(r.predictions);
        }
        if out.len() != n {
            return Err(SidecarError::Protocol(format!("{n} rows but {} predictions", out.len())));
        }
        Ok(out)
    }
}

/// Stance classification delegated to the sidecar; masking happens server-side.
pub struct SidecarStance {
    client: std::sync::Arc<SidecarClient>,
    masking: bool,
}

impl SidecarStance {
    pub fn new(client: std::sync::Arc<SidecarClient>, masking: bool) -> Self {
        Self { client, masking }
    }
}

impl StanceClassifier for SidecarStance {
    fn name(&self) -> &str {
        if self.masking {
            "sidecar+mask"
        } else {
            "sidecar"
        }
    }

    fn classify(&self, texts: &[String]) -> Result<Vec<StanceLabel>, StanceError> {
        Ok(self.client.stance(texts, self.masking)?.into_iter().map(|(l, _)| l).collect())
    }
}

pub struct SidecarEmbedder {
    client: std::sync::Arc<SidecarClient>,
}

impl SidecarEmbedder {
    pub fn new(client: std::sync::Arc<SidecarClient>) -> Self {
        Self { client }
    }
}

impl EmbeddingProvider for SidecarEmbedder {
    fn name(&self) -> &str {
        "sidecar"
    }

    fn dim(&self) -> usize {
        self.client.handshake().embed_dim.unwrap_or(0)
    }

    fn embed(&self, texts: &[String]) -> Result<EmbeddingMatrix, ContentError> {
        let rows = self.client.embed(texts)?;
        EmbeddingMatrix::from_rows(self.dim(), rows)
    }
}

pub struct SidecarTagger {
    client: std::sync::Arc<SidecarClient>,
}

impl SidecarTagger {
    pub fn new(client: std::sync::Arc<SidecarClient>) -> Self {
        Self { client }
    }
}

impl EntityTagger for SidecarTagger {
    fn name(&self) -> &str {
        "sidecar"
    }

    fn tag(&self, texts: &[String]) -> Result<Vec<Vec<EntityMention>>, ContentError> {
        Ok(self.client.ner(texts)?)
    }
}
