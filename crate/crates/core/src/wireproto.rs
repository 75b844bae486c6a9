//! Message schemas and framing for the control-plane RPC protocol.
//!
//! A frame is a 4-byte big-endian body length followed by the body, a compact
//! JSON object with lexicographically sorted keys. Only integers appear on the
//! wire; floats are rejected when decoding.
//!
//! Two method sets share the format. Clients (executors, the monitor) call the
//! coordinator with `Scale`, `RetrieveKeys`, `JobInit`, `activeServer`,
//! `checkpointing` and `endExec`. The coordinator pushes `Launch` and
//! `Checkpoint` directives to executor agents.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{self, Read, Write};

use serde_json::{Map, Number};

/// Largest accepted frame body, in bytes.
pub const MAX_FRAME_BODY: usize = 1 << 20;

/// Length of the frame header.
pub const HEADER_LEN: usize = 4;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum FrameError {
    #[error("frame body of {0} bytes exceeds the {MAX_FRAME_BODY} byte limit")]
    FrameTooLarge(usize),
    #[error("truncated frame: need {needed} bytes, have {available}")]
    Truncated { needed: usize, available: usize },
    #[error("malformed frame body: {0}")]
    MalformedBody(String),
    #[error("unknown method {0:?}")]
    UnknownMethod(String),
}

fn malformed(msg: impl Into<String>) -> FrameError {
    FrameError::MalformedBody(msg.into())
}

/// A parameter or result value. The grammar has no floats.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Value {
    Null,
    Bool(bool),
    Int(i64),
    Str(String),
    List(Vec<Value>),
}

impl Value {
    pub fn as_str(&self) -> Option<&str> {
        match self {
            Value::Str(s) => Some(s),
            _ => None,
        }
    }

    pub fn as_int(&self) -> Option<i64> {
        match self {
            Value::Int(i) => Some(*i),
            _ => None,
        }
    }

    pub fn as_bool(&self) -> Option<bool> {
        match self {
            Value::Bool(b) => Some(*b),
            _ => None,
        }
    }

    fn to_json(&self) -> serde_json::Value {
        match self {
            Value::Null => serde_json::Value::Null,
            Value::Bool(b) => serde_json::Value::Bool(*b),
            Value::Int(i) => serde_json::Value::Number(Number::from(*i)),
            Value::Str(s) => serde_json::Value::String(s.clone()),
            Value::List(items) => serde_json::Value::Array(items.iter().map(Value::to_json).collect()),
        }
    }

    fn from_json(v: &serde_json::Value) -> Result<Value, FrameError> {
        Ok(match v {
            serde_json::Value::Null => Value::Null,
            serde_json::Value::Bool(b) => Value::Bool(*b),
            serde_json::Value::Number(n) => {
                Value::Int(n.as_i64().ok_or_else(|| malformed(format!("non-integer number {n}")))?)
            }
            serde_json::Value::String(s) => Value::Str(s.clone()),
            serde_json::Value::Array(items) => {
                Value::List(items.iter().map(Value::from_json).collect::<Result<_, _>>()?)
            }
            serde_json::Value::Object(_) => return Err(malformed("nested objects are not allowed in params")),
        })
    }
}

impl From<&str> for Value {
    fn from(s: &str) -> Self {
        Value::Str(s.to_string())
    }
}

impl From<String> for Value {
    fn from(s: String) -> Self {
        Value::Str(s)
    }
}

impl From<i64> for Value {
    fn from(i: i64) -> Self {
        Value::Int(i)
    }
}

impl From<bool> for Value {
    fn from(b: bool) -> Self {
        Value::Bool(b)
    }
}

/// Method-specific parameters or results, keyed by name.
pub type Fields = BTreeMap<String, Value>;

/// Typed lookups on a [`Fields`] map.
pub trait FieldsExt {
    fn str_field(&self, key: &str) -> Option<&str>;
    fn int_field(&self, key: &str) -> Option<i64>;
    fn bool_field(&self, key: &str) -> Option<bool>;
}

impl FieldsExt for Fields {
    fn str_field(&self, key: &str) -> Option<&str> {
        self.get(key).and_then(Value::as_str)
    }
    fn int_field(&self, key: &str) -> Option<i64> {
        self.get(key).and_then(Value::as_int)
    }
    fn bool_field(&self, key: &str) -> Option<bool> {
        self.get(key).and_then(Value::as_bool)
    }
}

/// Builds a [`Fields`] map from `key => value` pairs.
#[macro_export]
macro_rules! fields {
    () => { $crate::wireproto::Fields::new() };
    ($($k:expr => $v:expr),+ $(,)?) => {{
        let mut m = $crate::wireproto::Fields::new();
        $( m.insert(($k).to_string(), $crate::wireproto::Value::from($v)); )+
        m
    }};
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    Scale,
    RetrieveKeys,
    JobInit,
    ActiveServer,
    Checkpointing,
    EndExec,
    Launch,
    Checkpoint,
}

impl Method {
    pub const CLIENT_METHODS: [Method; 6] = [
        Method::Scale,
        Method::RetrieveKeys,
        Method::JobInit,
        Method::ActiveServer,
        Method::Checkpointing,
        Method::EndExec,
    ];

    pub const ALL: [Method; 8] = [
        Method::Scale,
        Method::RetrieveKeys,
        Method::JobInit,
        Method::ActiveServer,
        Method::Checkpointing,
        Method::EndExec,
        Method::Launch,
        Method::Checkpoint,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Scale => "Scale",
            Method::RetrieveKeys => "RetrieveKeys",
            Method::JobInit => "JobInit",
            Method::ActiveServer => "activeServer",
            Method::Checkpointing => "checkpointing",
            Method::EndExec => "endExec",
            Method::Launch => "Launch",
            Method::Checkpoint => "Checkpoint",
        }
    }

    pub fn parse(name: &str) -> Option<Method> {
        Method::ALL.into_iter().find(|m| m.as_str() == name)
    }

    /// True for directives the coordinator sends to executor agents.
    pub fn is_directive(self) -> bool {
        matches!(self, Method::Launch | Method::Checkpoint)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Role of an executor as encoded in its node name.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NodeRole {
    /// `<job>-worker-<k>`: part of the initial allocation.
    Worker,
    /// `<job>-scale-<k>`: provisioned during a scaling round.
    Scale,
}

/// A parsed executor node name.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct NodeName {
    pub job: String,
    pub role: NodeRole,
    pub index: u32,
}

impl NodeName {
    pub fn parse(name: &str) -> Option<NodeName> {
        for (marker, role) in [("-worker-", NodeRole::Worker), ("-scale-", NodeRole::Scale)] {
            if let Some(pos) = name.rfind(marker) {
                let job = &name[..pos];
                let digits = &name[pos + marker.len()..];
                if job.is_empty() || digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
                    continue;
                }
                let index = digits.parse().ok()?;
                return Some(NodeName { job: job.to_string(), role, index });
            }
        }
        None
    }

    pub fn worker(job: &str, index: u32) -> String {
        format!("{job}-worker-{index}")
    }

    pub fn scale(job: &str, index: u32) -> String {
        format!("{job}-scale-{index}")
    }
}

fn valid_address(addr: &str) -> bool {
    match addr.rsplit_once(':') {
        Some((host, port)) => !host.is_empty() && port.parse::<u16>().is_ok(),
        None => false,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScaleMode {
    Delta,
    Absolute,
}

impl ScaleMode {
    pub fn as_str(self) -> &'static str {
        match self {
            ScaleMode::Delta => "delta",
            ScaleMode::Absolute => "absolute",
        }
    }

    pub fn parse(s: &str) -> Option<ScaleMode> {
        match s {
            "delta" => Some(ScaleMode::Delta),
            "absolute" => Some(ScaleMode::Absolute),
            _ => None,
        }
    }
}

/// A monitor-issued scale-up instruction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ScaleCommand {
    pub nodes: u32,
    pub mode: ScaleMode,
}

impl ScaleCommand {
    pub fn absolute(nodes: u32) -> Self {
        ScaleCommand { nodes, mode: ScaleMode::Absolute }
    }

    pub fn delta(nodes: u32) -> Self {
        ScaleCommand { nodes, mode: ScaleMode::Delta }
    }

    /// World size after applying this command to a job of `current` ranks.
    pub fn target_world(&self, current: u32) -> u32 {
        match self.mode {
            ScaleMode::Delta => current.saturating_add(self.nodes),
            ScaleMode::Absolute => self.nodes,
        }
    }
}

/// Instruction for an agent to start its local workload rank.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LaunchDirective {
    pub rank: u32,
    pub world_size: u32,
    pub command: Vec<String>,
    pub restart: bool,
    pub rendezvous_dir: String,
    pub token: String,
    pub epoch: u32,
}

/// Typed view of a request: one variant per method with validated params.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Call {
    Scale(ScaleCommand),
    RetrieveKeys { node_name: String, address: String },
    JobInit { node_name: String, address: Option<String> },
    ActiveServer { node_name: Option<String> },
    Checkpointing { node_name: String, ok: Option<bool> },
    EndExec { node_name: String, status: Option<i64> },
    Launch(LaunchDirective),
    Checkpoint { signal: String, grace_ms: u64, token: String },
}

impl Call {
    pub fn method(&self) -> Method {
        match self {
            Call::Scale(_) => Method::Scale,
            Call::RetrieveKeys { .. } => Method::RetrieveKeys,
            Call::JobInit { .. } => Method::JobInit,
            Call::ActiveServer { .. } => Method::ActiveServer,
            Call::Checkpointing { .. } => Method::Checkpointing,
            Call::EndExec { .. } => Method::EndExec,
            Call::Launch(_) => Method::Launch,
            Call::Checkpoint { .. } => Method::Checkpoint,
        }
    }

    pub fn to_params(&self) -> Fields {
        let mut p = Fields::new();
        let mut put = |k: &str, v: Value| {
            p.insert(k.to_string(), v);
        };
        match self {
            Call::Scale(cmd) => {
                put("nodes", Value::Int(cmd.nodes as i64));
                put("mode", cmd.mode.as_str().into());
            }
            Call::RetrieveKeys { node_name, address } => {
                put("node_name", node_name.as_str().into());
                put("address", address.as_str().into());
            }
            Call::JobInit { node_name, address } => {
                put("node_name", node_name.as_str().into());
                if let Some(a) = address {
                    put("address", a.as_str().into());
                }
            }
            Call::ActiveServer { node_name } => {
                if let Some(n) = node_name {
                    put("node_name", n.as_str().into());
                }
            }
            Call::Checkpointing { node_name, ok } => {
                put("node_name", node_name.as_str().into());
                if let Some(ok) = ok {
                    put("ok", Value::Bool(*ok));
                }
            }
            Call::EndExec { node_name, status } => {
                put("node_name", node_name.as_str().into());
                if let Some(s) = status {
                    put("status", Value::Int(*s));
                }
            }
            Call::Launch(d) => {
                put("rank", Value::Int(d.rank as i64));
                put("world_size", Value::Int(d.world_size as i64));
                put("command", Value::List(d.command.iter().map(|s| s.as_str().into()).collect()));
                put("restart", Value::Bool(d.restart));
                put("rendezvous_dir", d.rendezvous_dir.as_str().into());
                put("token", d.token.as_str().into());
                put("epoch", Value::Int(d.epoch as i64));
            }
            Call::Checkpoint { signal, grace_ms, token } => {
                put("signal", signal.as_str().into());
                put("grace_ms", Value::Int(*grace_ms as i64));
                put("token", token.as_str().into());
            }
        }
        p
    }

    /// Validates `params` against the schema of `method`.
    pub fn from_params(method: Method, params: &Fields) -> Result<Call, FrameError> {
        let schema = Schema { method, params };
        let call = match method {
            Method::Scale => {
                schema.only(&["nodes", "mode"])?;
                let nodes = schema.int("nodes")?;
                if nodes < 1 || nodes > u32::MAX as i64 {
                    return Err(malformed(format!("Scale.nodes must be >= 1, got {nodes}")));
                }
                let mode = schema.string("mode")?;
                let mode = ScaleMode::parse(&mode).ok_or_else(|| malformed(format!("Scale.mode {mode:?}")))?;
                Call::Scale(ScaleCommand { nodes: nodes as u32, mode })
            }
            Method::RetrieveKeys => {
                schema.only(&["node_name", "address"])?;
                Call::RetrieveKeys { node_name: schema.node_name("node_name")?, address: schema.address("address")? }
            }
            Method::JobInit => {
                schema.only(&["node_name", "address"])?;
                let address = if params.contains_key("address") { Some(schema.address("address")?) } else { None };
                Call::JobInit { node_name: schema.node_name("node_name")?, address }
            }
            Method::ActiveServer => {
                schema.only(&["node_name"])?;
                let node_name =
                    if params.contains_key("node_name") { Some(schema.node_name("node_name")?) } else { None };
                Call::ActiveServer { node_name }
            }
            Method::Checkpointing => {
                schema.only(&["node_name", "ok"])?;
                let ok = if params.contains_key("ok") { Some(schema.boolean("ok")?) } else { None };
                Call::Checkpointing { node_name: schema.node_name("node_name")?, ok }
            }
            Method::EndExec => {
                schema.only(&["node_name", "status"])?;
                let status = if params.contains_key("status") { Some(schema.int("status")?) } else { None };
                Call::EndExec { node_name: schema.node_name("node_name")?, status }
            }
            Method::Launch => {
                schema.only(&["rank", "world_size", "command", "restart", "rendezvous_dir", "token", "epoch"])?;
                let rank = schema.u32("rank")?;
                let world_size = schema.u32("world_size")?;
                if rank >= world_size {
                    return Err(malformed(format!("Launch.rank {rank} not below world_size {world_size}")));
                }
                let command = match params.get("command") {
                    Some(Value::List(items)) if !items.is_empty() => items
                        .iter()
                        .map(|v| v.as_str().map(str::to_string))
                        .collect::<Option<Vec<_>>>()
                        .ok_or_else(|| malformed("Launch.command must be a list of strings"))?,
                    _ => return Err(malformed("Launch.command must be a non-empty list")),
                };
                Call::Launch(LaunchDirective {
                    rank,
                    world_size,
                    command,
                    restart: schema.boolean("restart")?,
                    rendezvous_dir: schema.string("rendezvous_dir")?,
                    token: schema.string("token")?,
                    epoch: schema.u32("epoch")?,
                })
            }
            Method::Checkpoint => {
                schema.only(&["signal", "grace_ms", "token"])?;
                let grace = schema.int("grace_ms")?;
                if grace < 0 {
                    return Err(malformed("Checkpoint.grace_ms must be >= 0"));
                }
                Call::Checkpoint { signal: schema.string("signal")?, grace_ms: grace as u64, token: schema.string("token")? }
            }
        };
        Ok(call)
    }

    pub fn into_request(self, id: u64) -> RpcRequest {
        RpcRequest { id, method: self.method(), params: self.to_params() }
    }
}

struct Schema<'a> {
    method: Method,
    params: &'a Fields,
}

impl Schema<'_> {
    fn only(&self, allowed: &[&str]) -> Result<(), FrameError> {
        match self.params.keys().find(|k| !allowed.contains(&k.as_str())) {
            Some(k) => Err(malformed(format!("unexpected param {k:?} for {}", self.method))),
            None => Ok(()),
        }
    }

    fn get(&self, key: &str) -> Result<&Value, FrameError> {
        self.params.get(key).ok_or_else(|| malformed(format!("{} requires param {key:?}", self.method)))
    }

    fn int(&self, key: &str) -> Result<i64, FrameError> {
        self.get(key)?.as_int().ok_or_else(|| malformed(format!("{}.{key} must be an integer", self.method)))
    }

    fn u32(&self, key: &str) -> Result<u32, FrameError> {
        let v = self.int(key)?;
        u32::try_from(v).map_err(|_| malformed(format!("{}.{key} out of range: {v}", self.method)))
    }

    fn boolean(&self, key: &str) -> Result<bool, FrameError> {
        self.get(key)?.as_bool().ok_or_else(|| malformed(format!("{}.{key} must be a boolean", self.method)))
    }

    fn string(&self, key: &str) -> Result<String, FrameError> {
        self.get(key)?
            .as_str()
            .map(str::to_string)
            .ok_or_else(|| malformed(format!("{}.{key} must be a string", self.method)))
    }

    fn node_name(&self, key: &str) -> Result<String, FrameError> {
        let name = self.string(key)?;
        if NodeName::parse(&name).is_none() {
            return Err(malformed(format!("{}.{key}: invalid node name {name:?}", self.method)));
        }
        Ok(name)
    }

    fn address(&self, key: &str) -> Result<String, FrameError> {
        let addr = self.string(key)?;
        if !valid_address(&addr) {
            return Err(malformed(format!("{}.{key}: invalid host:port {addr:?}", self.method)));
        }
        Ok(addr)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RpcRequest {
    pub id: u64,
    pub method: Method,
    pub params: Fields,
}

impl RpcRequest {
    pub fn call(&self) -> Result<Call, FrameError> {
        Call::from_params(self.method, &self.params)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{code}: {message}")]
pub struct RpcError {
    pub code: String,
    pub message: String,
}

impl RpcError {
    pub fn new(code: impl Into<String>, message: impl Into<String>) -> Self {
        RpcError { code: code.into(), message: message.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RpcResponse {
    pub id: u64,
    pub outcome: Result<Fields, RpcError>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Message {
    Request(RpcRequest),
    Response(RpcResponse),
}

impl From<RpcRequest> for Message {
    fn from(r: RpcRequest) -> Self {
        Message::Request(r)
    }
}

impl From<RpcResponse> for Message {
    fn from(r: RpcResponse) -> Self {
        Message::Response(r)
    }
}

fn fields_to_json(fields: &Fields) -> serde_json::Value {
    serde_json::Value::Object(fields.iter().map(|(k, v)| (k.clone(), v.to_json())).collect())
}

fn fields_from_json(v: &serde_json::Value, what: &str) -> Result<Fields, FrameError> {
    let obj = v.as_object().ok_or_else(|| malformed(format!("{what} must be an object")))?;
    obj.iter().map(|(k, v)| Ok((k.clone(), Value::from_json(v)?))).collect()
}

fn to_json(msg: &Message) -> serde_json::Value {
    let mut obj = Map::new();
    match msg {
        Message::Request(r) => {
            obj.insert("id".into(), r.id.into());
            obj.insert("method".into(), r.method.as_str().into());
            obj.insert("params".into(), fields_to_json(&r.params));
        }
        Message::Response(r) => {
            obj.insert("id".into(), r.id.into());
            match &r.outcome {
                Ok(result) => {
                    obj.insert("result".into(), fields_to_json(result));
                }
                Err(e) => {
                    let mut err = Map::new();
                    err.insert("code".into(), e.code.clone().into());
                    err.insert("message".into(), e.message.clone().into());
                    obj.insert("error".into(), serde_json::Value::Object(err));
                }
            }
        }
    }
    serde_json::Value::Object(obj)
}

fn from_json(v: &serde_json::Value) -> Result<Message, FrameError> {
    let obj = v.as_object().ok_or_else(|| malformed("body must be an object"))?;
    let id = obj
        .get("id")
        .and_then(serde_json::Value::as_u64)
        .ok_or_else(|| malformed("missing or invalid id"))?;
    if let Some(method) = obj.get("method") {
        if obj.len() != 3 || !obj.contains_key("params") {
            return Err(malformed("request must have exactly id, method and params"));
        }
        let name = method.as_str().ok_or_else(|| malformed("method must be a string"))?;
        let method = Method::parse(name).ok_or_else(|| FrameError::UnknownMethod(name.to_string()))?;
        let params = fields_from_json(&obj["params"], "params")?;
        Call::from_params(method, &params)?;
        return Ok(Message::Request(RpcRequest { id, method, params }));
    }
    if obj.len() != 2 {
        return Err(malformed("response must have exactly id and one of result/error"));
    }
    let outcome = match (obj.get("result"), obj.get("error")) {
        (Some(result), None) => Ok(fields_from_json(result, "result")?),
        (None, Some(err)) => {
            let err = err.as_object().ok_or_else(|| malformed("error must be an object"))?;
            let text = |k: &str| {
                err.get(k).and_then(serde_json::Value::as_str).map(str::to_string).ok_or_else(|| malformed(format!("error.{k} must be a string")))
            };
            if err.len() != 2 {
                return Err(malformed("error must have exactly code and message"));
            }
            Err(RpcError { code: text("code")?, message: text("message")? })
        }
        _ => return Err(malformed("response must carry exactly one of result/error")),
    };
    Ok(Message::Response(RpcResponse { id, outcome }))
}

/// Canonical body text of a message, without the length prefix.
pub fn encode_body(msg: &Message) -> String {
    // serde_json's default map is ordered, so keys come out sorted.
    serde_json::to_string(&to_json(msg)).expect("serializing a json value cannot fail")
}

pub fn encode_frame(msg: &Message) -> Result<Vec<u8>, FrameError> {
    let body = encode_body(msg);
    if body.len() > MAX_FRAME_BODY {
        return Err(FrameError::FrameTooLarge(body.len()));
    }
    let mut out = Vec::with_capacity(HEADER_LEN + body.len());
    out.extend_from_slice(&(body.len() as u32).to_be_bytes());
    out.extend_from_slice(body.as_bytes());
    Ok(out)
}

/// Decodes the first frame in `buf`, returning the message and the number of
/// bytes consumed. Bytes after the frame are left alone.
pub fn decode_frame(buf: &[u8]) -> Result<(Message, usize), FrameError> {
    if buf.len() < HEADER_LEN {
        return Err(FrameError::Truncated { needed: HEADER_LEN, available: buf.len() });
    }
    let len = u32::from_be_bytes([buf[0], buf[1], buf[2], buf[3]]) as usize;
    if len > MAX_FRAME_BODY {
        return Err(FrameError::FrameTooLarge(len));
    }
    let total = HEADER_LEN + len;
    if buf.len() < total {
        return Err(FrameError::Truncated { needed: total, available: buf.len() });
    }
    Ok((decode_body(&buf[HEADER_LEN..total])?, total))
}

pub fn decode_body(body: &[u8]) -> Result<Message, FrameError> {
    let text = std::str::from_utf8(body).map_err(|e| malformed(format!("body is not UTF-8: {e}")))?;
    let v: serde_json::Value = serde_json::from_str(text).map_err(|e| malformed(e.to_string()))?;
    from_json(&v)
}

#[derive(Debug, thiserror::Error)]
pub enum WireError {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error(transparent)]
    Frame(#[from] FrameError),
}

/// Reads one message from a stream. Returns `Ok(None)` on a clean end of
/// stream at a frame boundary.
pub fn read_message<R: Read>(r: &mut R) -> Result<Option<Message>, WireError> {
    let mut header = [0u8; HEADER_LEN];
    let mut got = 0;
    while got < HEADER_LEN {
        match r.read(&mut header[got..]) {
            Ok(0) if got == 0 => return Ok(None),
            Ok(0) => return Err(FrameError::Truncated { needed: HEADER_LEN, available: got }.into()),
            Ok(n) => got += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e.into()),
        }
    }
    let len = u32::from_be_bytes(header) as usize;
    if len > MAX_FRAME_BODY {
        return Err(FrameError::FrameTooLarge(len).into());
    }
    let mut body = vec![0u8; len];
    r.read_exact(&mut body)?;
    Ok(Some(decode_body(&body)?))
}

pub fn write_message<W: Write>(w: &mut W, msg: &Message) -> Result<(), WireError> {
    let frame = encode_frame(msg)?;
    w.write_all(&frame)?;
    w.flush()?;
    Ok(())
}
