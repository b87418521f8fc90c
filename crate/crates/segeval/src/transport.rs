//! Client transports for external segmenters.

use std::io::{BufReader, Write};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::thread;
use std::time::Duration;

use segeval_core::segmenter::{Handshake, SegmentRequest, SegmentResponse, Segmenter, SequenceRequest};
use segeval_core::{BinaryMask, SegmenterError};

use crate::protocol::{self, Request};

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(120);

fn transport(message: impl Into<String>) -> SegmenterError {
    SegmenterError::Transport { message: message.into(), attempts: 1 }
}

struct Process {
    child: Child,
    stdin: ChildStdin,
    replies: Receiver<std::io::Result<Vec<u8>>>,
}

impl Drop for Process {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

/// A segmenter running as a child process speaking framed JSON on
/// stdin/stdout. A failed exchange kills the child; the next request
/// starts a fresh one.
pub struct StdioSegmenter {
    program: String,
    args: Vec<String>,
    timeout: Duration,
    process: Option<Process>,
}

impl StdioSegmenter {
    pub fn new(program: impl Into<String>, args: Vec<String>) -> Self {
        Self { program: program.into(), args, timeout: DEFAULT_TIMEOUT, process: None }
    }

    /// Parses a shell-style command line.
    pub fn from_command_line(line: &str) -> Result<Self, SegmenterError> {
        let mut words = shlex::split(line).ok_or_else(|| transport(format!("cannot parse command {line:?}")))?;
        if words.is_empty() {
            return Err(transport("empty segmenter command"));
        }
        let program = words.remove(0);
        Ok(Self::new(program, words))
    }

    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.timeout = timeout;
        self
    }

    fn spawn(&self) -> Result<Process, SegmenterError> {
        let mut child = Command::new(&self.program)
            .args(&self.args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| transport(format!("cannot start {}: {e}", self.program)))?;
        let stdin = child.stdin.take().expect("piped");
        let stdout = child.stdout.take().expect("piped");
        let (tx, rx) = mpsc::channel();
        thread::spawn(move || {
            let mut r = BufReader::new(stdout);
            loop {
                let msg = match protocol::read_frame(&mut r) {
                    Ok(Some(body)) => Ok(body),
                    Ok(None) => Err(std::io::Error::new(std::io::ErrorKind::UnexpectedEof, "segmenter closed its output")),
                    Err(e) => Err(e),
                };
                let stop = msg.is_err();
                if tx.send(msg).is_err() || stop {
                    break;
                }
            }
        });
        Ok(Process { child, stdin, replies: rx })
    }

    fn exchange(&mut self, req: &Request) -> Result<Vec<u8>, SegmenterError> {
        if self.process.is_none() {
            self.process = Some(self.spawn()?);
        }
        let body = serde_json::to_vec(req).expect("request serializes");
        let timeout = self.timeout;
        let proc = self.process.as_mut().expect("spawned above");
        let result = protocol::write_frame(&mut proc.stdin, &body)
            .and_then(|_| proc.stdin.flush())
            .map_err(|e| transport(format!("write to segmenter: {e}")))
            .and_then(|_| match proc.replies.recv_timeout(timeout) {
                Ok(Ok(reply)) => Ok(reply),
                Ok(Err(e)) => Err(transport(format!("read from segmenter: {e}"))),
                Err(RecvTimeoutError::Timeout) => Err(transport(format!("no reply within {}s", timeout.as_secs_f64()))),
                Err(RecvTimeoutError::Disconnected) => Err(transport("segmenter output closed")),
            });
        if result.is_err() {
            self.process = None;
        }
        result
    }
}

impl Segmenter for StdioSegmenter {
    fn handshake(&mut self) -> Result<Handshake, SegmenterError> {
        protocol::decode_handshake(&self.exchange(&Request::Handshake)?)
    }

    fn segment(&mut self, request: &SegmentRequest) -> Result<SegmentResponse, SegmenterError> {
        protocol::decode_segment(&self.exchange(&Request::Segment(request.clone()))?)
    }

    fn segment_sequence(&mut self, request: &SequenceRequest) -> Result<Vec<BinaryMask>, SegmenterError> {
        protocol::decode_sequence(&self.exchange(&Request::SegmentSequence(request.clone()))?)
    }
}

/// A segmenter behind an HTTP endpoint; each message is a POST of the
/// request params to `<base>/<method>`.
pub struct HttpSegmenter {
    base: String,
    agent: ureq::Agent,
}

impl HttpSegmenter {
    pub fn new(base: impl Into<String>, timeout: Duration) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build()
            .into();
        Self { base: base.into().trim_end_matches('/').to_string(), agent }
    }

    fn post(&mut self, path: &str, body: Vec<u8>) -> Result<Vec<u8>, SegmenterError> {
        let url = format!("{}{path}", self.base);
        let mut resp = self
            .agent
            .post(&url)
            .header("content-type", "application/json")
            .send(&body[..])
            .map_err(|e| transport(format!("POST {url}: {e}")))?;
        let status = resp.status();
        let bytes = resp
            .body_mut()
            .with_config()
            .limit(1 << 30)
            .read_to_vec()
            .map_err(|e| transport(format!("POST {url}: {e}")))?;
        if status.is_server_error() {
            return Err(transport(format!("POST {url}: HTTP {status}")));
        }
        Ok(bytes)
    }
}

impl Segmenter for HttpSegmenter {
    fn handshake(&mut self) -> Result<Handshake, SegmenterError> {
        let body = self.post("/handshake", b"{}".to_vec())?;
        protocol::decode_handshake(&body)
    }

    fn segment(&mut self, request: &SegmentRequest) -> Result<SegmentResponse, SegmenterError> {
        let body = self.post("/segment", serde_json::to_vec(request).expect("request serializes"))?;
        protocol::decode_segment(&body)
    }

    fn segment_sequence(&mut self, request: &SequenceRequest) -> Result<Vec<BinaryMask>, SegmenterError> {
        let body = self.post("/segment_sequence", serde_json::to_vec(request).expect("request serializes"))?;
        protocol::decode_sequence(&body)
    }
}

/// Serves a segmenter over HTTP until [`HttpServer::stop`] is called.
pub struct HttpServer {
    server: std::sync::Arc<tiny_http::Server>,
    worker: Option<thread::JoinHandle<()>>,
}

impl HttpServer {
    pub fn start<S: Segmenter + Send + 'static>(mut seg: S, addr: &str) -> std::io::Result<Self> {
        let server = std::sync::Arc::new(tiny_http::Server::http(addr).map_err(std::io::Error::other)?);
        let s = server.clone();
        let worker = thread::spawn(move || {
            for mut req in s.incoming_requests() {
                let mut body = Vec::new();
                if std::io::Read::read_to_end(req.as_reader(), &mut body).is_err() {
                    let _ = req.respond(tiny_http::Response::empty(400));
                    continue;
                }
                let path = req.url().split('?').next().unwrap_or("").to_string();
                let resp = match (req.method(), protocol::dispatch_route(&mut seg, &path, &body)) {
                    (tiny_http::Method::Post, Some(out)) => tiny_http::Response::from_data(out).with_header(
                        "Content-Type: application/json".parse::<tiny_http::Header>().expect("static header"),
                    ),
                    (tiny_http::Method::Post, None) => tiny_http::Response::from_data(b"not found".to_vec()).with_status_code(404),
                    _ => tiny_http::Response::from_data(b"POST only".to_vec()).with_status_code(405),
                };
                let _ = req.respond(resp);
            }
        });
        Ok(Self { server, worker: Some(worker) })
    }

    pub fn addr(&self) -> String {
        match self.server.server_addr() {
            tiny_http::ListenAddr::IP(a) => a.to_string(),
            #[allow(unreachable_patterns)]
            other => format!("{other:?}"),
        }
    }

    /// Blocks until the server stops.
    pub fn join(mut self) {
        if let Some(w) = self.worker.take() {
            let _ = w.join();
        }
    }

    pub fn stop(mut self) {
        self.server.unblock();
        if let Some(w) = self.worker.take() {
            let _ = w.join();
        }
    }
}
