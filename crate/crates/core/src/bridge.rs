//! Client for external sentiment scorers speaking `sas-score/1`.
//!
//! The protocol is newline-delimited JSON over a child process's stdio or a
//! TCP socket. The peer opens with a handshake line, then answers each
//! request line with exactly one response line:
//!
//! ```text
//! peer → {"protocol":"sas-score/1","name":"distilbert-sst2"}
//! us   → {"id":1,"text":"I made this girl feel happy"}
//! peer → {"id":1,"score":0.97}            or {"id":1,"error":"oom"}
//! ```
//!
//! Requests are pipelined up to a caller-chosen window and responses may
//! arrive in any order; [`BridgeSession::score_batch`] reorders them by id.

use std::collections::{HashMap, HashSet};
use std::io::{self, BufRead, BufReader, Read, Write};
use std::net::{TcpStream, ToSocketAddrs};
use std::process::{Child, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

pub const PROTOCOL_VERSION: &str = "sas-score/1";

/// Where an external SAS lives.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Endpoint {
    /// Program and arguments; spoken to over stdin/stdout.
    Command(Vec<String>),
    /// `host:port`.
    Tcp(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Transport {
    ChildProcessStdio,
    TcpSocket,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BridgeOptions {
    pub handshake_timeout_ms: u64,
    pub request_timeout_ms: u64,
    pub max_in_flight: usize,
}

impl Default for BridgeOptions {
    fn default() -> Self {
        Self {
            handshake_timeout_ms: 10_000,
            request_timeout_ms: 30_000,
            max_in_flight: 32,
        }
    }
}

impl BridgeOptions {
    fn handshake_timeout(&self) -> Duration {
        Duration::from_millis(self.handshake_timeout_ms)
    }

    fn request_timeout(&self) -> Duration {
        Duration::from_millis(self.request_timeout_ms)
    }
}

#[derive(Debug, Error)]
pub enum BridgeError {
    #[error("failed to start `{program}`: {source}")]
    Spawn {
        program: String,
        #[source]
        source: io::Error,
    },
    #[error("cannot connect to {addr}: {source}")]
    Connect {
        addr: String,
        #[source]
        source: io::Error,
    },
    #[error("empty command line for external SAS")]
    EmptyCommand,
    #[error("no handshake within {0:?}")]
    HandshakeTimeout(Duration),
    #[error("peer closed the stream before the handshake")]
    HandshakeEof,
    #[error("malformed handshake line `{0}`")]
    MalformedHandshake(String),
    #[error("peer speaks `{0}`, expected `{PROTOCOL_VERSION}`")]
    VersionMismatch(String),
    #[error("response for unknown id {0}")]
    UnknownId(u64),
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("duplicate request id {0}")]
    DuplicateId(u64),
    #[error("request {0} has empty text")]
    EmptyText(u64),
    #[error("max_in_flight must be at least 1")]
    ZeroWindow,
    #[error("I/O error: {0}")]
    Io(#[from] io::Error),
}

/// Failure of a single request; the rest of the batch is unaffected.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum RequestError {
    #[error("score {0} outside [-1, 1]")]
    OutOfRange(f64),
    #[error("peer error: {0}")]
    Peer(String),
    #[error("malformed response: {0}")]
    Malformed(String),
    #[error("no response within {0:?}")]
    Timeout(Duration),
    #[error("peer disconnected before answering")]
    Disconnected,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BridgeRequest {
    pub id: u64,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BridgeResponse {
    pub id: u64,
    pub result: Result<f64, RequestError>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PeerInfo {
    pub name: String,
    pub protocol: String,
}

type LineRx = Receiver<io::Result<String>>;

fn spawn_reader<R: Read + Send + 'static>(reader: R) -> LineRx {
    let (tx, rx) = mpsc::channel();
    thread::spawn(move || {
        let mut reader = BufReader::new(reader);
        loop {
            let mut line = String::new();
            match reader.read_line(&mut line) {
                Ok(0) => break,
                Ok(_) => {
                    let trimmed = line.trim_end_matches(['\n', '\r']).to_string();
                    if tx.send(Ok(trimmed)).is_err() {
                        break;
                    }
                }
                Err(e) => {
                    let _ = tx.send(Err(e));
                    break;
                }
            }
        }
    });
    rx
}

/// A connected but not yet handshaken byte stream.
pub struct Connection {
    transport: Transport,
    writer: Box<dyn Write + Send>,
    lines: LineRx,
    child: Option<Child>,
    socket: Option<TcpStream>,
}

impl Connection {
    pub fn spawn(argv: &[String]) -> Result<Self, BridgeError> {
        let (program, args) = argv.split_first().ok_or(BridgeError::EmptyCommand)?;
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|source| BridgeError::Spawn {
                program: program.clone(),
                source,
            })?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = child.stdout.take().expect("piped stdout");
        let mut conn = Self::from_streams(Transport::ChildProcessStdio, stdout, stdin);
        conn.child = Some(child);
        Ok(conn)
    }

    pub fn tcp(addr: &str, timeout: Duration) -> Result<Self, BridgeError> {
        let connect_err = |source| BridgeError::Connect {
            addr: addr.to_string(),
            source,
        };
        let sockaddr = addr
            .to_socket_addrs()
            .map_err(connect_err)?
            .next()
            .ok_or_else(|| connect_err(io::Error::new(io::ErrorKind::NotFound, "no address")))?;
        let stream = TcpStream::connect_timeout(&sockaddr, timeout).map_err(connect_err)?;
        let _ = stream.set_nodelay(true);
        let reader = stream.try_clone()?;
        let writer = stream.try_clone()?;
        let mut conn = Self::from_streams(Transport::TcpSocket, reader, writer);
        conn.socket = Some(stream);
        Ok(conn)
    }

    pub fn from_streams<R, W>(transport: Transport, reader: R, writer: W) -> Self
    where
        R: Read + Send + 'static,
        W: Write + Send + 'static,
    {
        Self {
            transport,
            writer: Box::new(writer),
            lines: spawn_reader(reader),
            child: None,
            socket: None,
        }
    }

    /// Waits for the peer's first line and checks the protocol version.
    pub fn handshake(self, opts: &BridgeOptions) -> Result<BridgeSession, BridgeError> {
        let timeout = opts.handshake_timeout();
        let line = match self.lines.recv_timeout(timeout) {
            Ok(Ok(line)) => line,
            Ok(Err(e)) => return Err(BridgeError::Io(e)),
            Err(RecvTimeoutError::Timeout) => return Err(BridgeError::HandshakeTimeout(timeout)),
            Err(RecvTimeoutError::Disconnected) => return Err(BridgeError::HandshakeEof),
        };
        let peer = parse_handshake(&line)?;
        Ok(BridgeSession {
            conn: self,
            peer,
            opts: opts.clone(),
            abandoned: HashSet::new(),
        })
    }
}

fn parse_handshake(line: &str) -> Result<PeerInfo, BridgeError> {
    let malformed = || BridgeError::MalformedHandshake(line.to_string());
    let value: Value = serde_json::from_str(line).map_err(|_| malformed())?;
    let protocol = value.get("protocol").and_then(Value::as_str).ok_or_else(malformed)?;
    let name = value.get("name").and_then(Value::as_str).ok_or_else(malformed)?;
    if protocol != PROTOCOL_VERSION {
        return Err(BridgeError::VersionMismatch(protocol.to_string()));
    }
    Ok(PeerInfo {
        name: name.to_string(),
        protocol: protocol.to_string(),
    })
}

/// Parses a response line. Errors here concern the line as a whole; per-id
/// problems are carried in the response's result.
pub fn parse_response(line: &str) -> Result<BridgeResponse, BridgeError> {
    let value: Value =
        serde_json::from_str(line).map_err(|e| BridgeError::Protocol(format!("bad response `{line}`: {e}")))?;
    let id = value
        .get("id")
        .and_then(Value::as_u64)
        .ok_or_else(|| BridgeError::Protocol(format!("response without id: `{line}`")))?;
    let result = match (value.get("score"), value.get("error")) {
        (Some(score), None) => match score.as_f64() {
            Some(v) if (-1.0..=1.0).contains(&v) => Ok(v),
            Some(v) => Err(RequestError::OutOfRange(v)),
            None => Err(RequestError::Malformed("score is not a number".into())),
        },
        (None, Some(err)) => Err(RequestError::Peer(
            err.as_str().map(str::to_string).unwrap_or_else(|| err.to_string()),
        )),
        _ => Err(RequestError::Malformed("expected exactly one of score/error".into())),
    };
    Ok(BridgeResponse { id, result })
}

pub fn request_line(req: &BridgeRequest) -> String {
    serde_json::to_string(req).expect("request serializes")
}

pub struct BridgeSession {
    conn: Connection,
    peer: PeerInfo,
    opts: BridgeOptions,
    // Ids that timed out; a late answer for them is dropped, not an error.
    abandoned: HashSet<u64>,
}

impl BridgeSession {
    pub fn connect(endpoint: &Endpoint, opts: &BridgeOptions) -> Result<Self, BridgeError> {
        let conn = match endpoint {
            Endpoint::Command(argv) => Connection::spawn(argv)?,
            Endpoint::Tcp(addr) => Connection::tcp(addr, opts.handshake_timeout())?,
        };
        conn.handshake(opts)
    }

    pub fn peer(&self) -> &PeerInfo {
        &self.peer
    }

    pub fn transport(&self) -> Transport {
        self.conn.transport
    }

    pub fn protocol_version(&self) -> &str {
        &self.peer.protocol
    }

    fn send(&mut self, req: &BridgeRequest) -> io::Result<()> {
        let mut line = request_line(req);
        line.push('\n');
        self.conn.writer.write_all(line.as_bytes())?;
        self.conn.writer.flush()
    }

    /// Scores `requests` with at most `max_in_flight` outstanding at once.
    /// The output is index-aligned with the input.
    pub fn score_batch(
        &mut self,
        requests: &[BridgeRequest],
        max_in_flight: usize,
    ) -> Result<Vec<Result<f64, RequestError>>, BridgeError> {
        if max_in_flight == 0 {
            return Err(BridgeError::ZeroWindow);
        }
        let mut index_of: HashMap<u64, usize> = HashMap::with_capacity(requests.len());
        for (i, req) in requests.iter().enumerate() {
            if req.text.is_empty() {
                return Err(BridgeError::EmptyText(req.id));
            }
            if index_of.insert(req.id, i).is_some() {
                return Err(BridgeError::DuplicateId(req.id));
            }
        }

        let timeout = self.opts.request_timeout();
        let mut results: Vec<Option<Result<f64, RequestError>>> = vec![None; requests.len()];
        // id → send time, in send order for cheap oldest lookup
        let mut pending: Vec<(u64, Instant)> = Vec::new();
        let mut next = 0usize;
        let mut disconnected = false;

        loop {
            while !disconnected && next < requests.len() && pending.len() < max_in_flight {
                let req = &requests[next];
                if self.send(req).is_err() {
                    disconnected = true;
                    break;
                }
                pending.push((req.id, Instant::now()));
                next += 1;
            }
            if disconnected || pending.is_empty() {
                break;
            }

            let oldest = pending.iter().map(|(_, t)| *t).min().expect("non-empty");
            let wait = (oldest + timeout).saturating_duration_since(Instant::now());
            match self.conn.lines.recv_timeout(wait) {
                Ok(Ok(line)) => {
                    if line.trim().is_empty() {
                        continue;
                    }
                    let resp = parse_response(&line)?;
                    match pending.iter().position(|(id, _)| *id == resp.id) {
                        Some(pos) => {
                            pending.remove(pos);
                            results[index_of[&resp.id]] = Some(resp.result);
                        }
                        None if self.abandoned.remove(&resp.id) => {}
                        None => return Err(BridgeError::UnknownId(resp.id)),
                    }
                }
                Ok(Err(_)) | Err(RecvTimeoutError::Disconnected) => disconnected = true,
                Err(RecvTimeoutError::Timeout) => {
                    let now = Instant::now();
                    pending.retain(|(id, sent)| {
                        if now.duration_since(*sent) >= timeout {
                            results[index_of[id]] = Some(Err(RequestError::Timeout(timeout)));
                            self.abandoned.insert(*id);
                            false
                        } else {
                            true
                        }
                    });
                }
            }
        }

        Ok(results
            .into_iter()
            .map(|r| r.unwrap_or(Err(RequestError::Disconnected)))
            .collect())
    }
}

impl Drop for BridgeSession {
    fn drop(&mut self) {
        if let Some(sock) = &self.conn.socket {
            let _ = sock.shutdown(std::net::Shutdown::Both);
        }
        if let Some(child) = &mut self.conn.child {
            let _ = child.kill();
            let _ = child.wait();
        }
    }
}

#[derive(Serialize)]
struct Hello<'a> {
    protocol: &'a str,
    name: &'a str,
}

#[derive(Serialize)]
struct ScoreReply {
    id: u64,
    score: f64,
}

#[derive(Serialize)]
struct ErrorReply<'a> {
    id: u64,
    error: &'a str,
}

fn to_line<T: Serialize>(value: &T) -> String {
    serde_json::to_string(value).expect("reply serializes")
}

/// Runs the server side of `sas-score/1` until `reader` hits EOF.
///
/// Malformed request lines are answered with `{"id":0,"error":"parse"}`.
pub fn serve<R, W, F>(reader: R, mut writer: W, name: &str, mut scorer: F) -> io::Result<()>
where
    R: BufRead,
    W: Write,
    F: FnMut(u64, &str) -> Result<f64, String>,
{
    let hello = Hello {
        protocol: PROTOCOL_VERSION,
        name,
    };
    writeln!(writer, "{}", to_line(&hello))?;
    writer.flush()?;
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let reply = match serde_json::from_str::<BridgeRequest>(&line) {
            Ok(req) => match scorer(req.id, &req.text) {
                Ok(score) => to_line(&ScoreReply { id: req.id, score }),
                Err(error) => to_line(&ErrorReply { id: req.id, error: &error }),
            },
            Err(_) => to_line(&ErrorReply { id: 0, error: "parse" }),
        };
        writeln!(writer, "{reply}")?;
        writer.flush()?;
    }
    Ok(())
}
