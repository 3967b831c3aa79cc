//! Adapter for SUTs running as external worker processes.
//!
//! Workers speak line-delimited JSON over stdin/stdout:
//!
//! ```text
//! -> {"id":1,"input":[2020,2,29]}
//! <- {"id":1,"status":"ok","output":"2020-02-29"}
//! ```
//!
//! Ids increase strictly per worker and a worker answers in request order.
//! A worker that dies or stalls is observable SUT behaviour and becomes an
//! error output (`adapter: ...`). A worker that answers with garbage or the
//! wrong id is an engine failure.

use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::sync::{Mutex, MutexGuard};
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{
    DimSpec, Direction, Entrance, InputPoint, Status, StepperKind, Sut, SutDescriptor, SutError,
    SutOutput,
};

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(5);

#[derive(Clone, Debug)]
pub struct ExternalConfig {
    pub id: String,
    /// Program followed by its arguments.
    pub command: Vec<String>,
    pub dims: Vec<String>,
    pub workers: usize,
    pub timeout: Duration,
}

impl ExternalConfig {
    pub fn new(id: impl Into<String>, command: Vec<String>, dims: Vec<String>) -> Self {
        let workers = thread::available_parallelism()
            .map(|n| n.get())
            .unwrap_or(1);
        ExternalConfig {
            id: id.into(),
            command,
            dims,
            workers,
            timeout: DEFAULT_TIMEOUT,
        }
    }
}

#[derive(Serialize)]
struct Request<'a> {
    id: u64,
    input: &'a [i64],
}

#[derive(Deserialize)]
struct Response {
    id: u64,
    status: Status,
    output: String,
}

enum Failure {
    Terminated,
    Timeout,
    Protocol(String),
}

struct Worker {
    child: Child,
    stdin: ChildStdin,
    lines: Receiver<std::io::Result<String>>,
    next_id: u64,
}

impl Worker {
    fn spawn(cfg: &ExternalConfig) -> Result<Self, SutError> {
        let (program, args) = cfg
            .command
            .split_first()
            .ok_or_else(|| SutError::Protocol("empty worker command".into()))?;
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::null())
            .spawn()?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = child.stdout.take().expect("piped stdout");
        let (tx, rx) = mpsc::channel();
        thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                if tx.send(line).is_err() {
                    break;
                }
            }
        });
        Ok(Worker {
            child,
            stdin,
            lines: rx,
            next_id: 1,
        })
    }

    fn request(&mut self, input: &[i64], timeout: Duration) -> Result<SutOutput, Failure> {
        let id = self.next_id;
        self.next_id += 1;
        let mut line = serde_json::to_vec(&Request { id, input }).expect("request serializes");
        line.push(b'\n');
        if self
            .stdin
            .write_all(&line)
            .and_then(|_| self.stdin.flush())
            .is_err()
        {
            return Err(Failure::Terminated);
        }
        let reply = match self.lines.recv_timeout(timeout) {
            Ok(Ok(reply)) => reply,
            Ok(Err(_)) | Err(RecvTimeoutError::Disconnected) => return Err(Failure::Terminated),
            Err(RecvTimeoutError::Timeout) => return Err(Failure::Timeout),
        };
        let resp: Response = serde_json::from_str(&reply)
            .map_err(|e| Failure::Protocol(format!("malformed response {reply:?}: {e}")))?;
        if resp.id != id {
            return Err(Failure::Protocol(format!(
                "expected id {id}, got {}",
                resp.id
            )));
        }
        Ok(SutOutput {
            status: resp.status,
            text: resp.output,
        })
    }
}

impl Drop for Worker {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

/// A SUT backed by a pool of worker processes.
pub struct ExternalSut {
    cfg: ExternalConfig,
    descriptor: SutDescriptor,
    slots: Vec<Mutex<Option<Worker>>>,
    next: AtomicUsize,
}

impl ExternalSut {
    pub fn new(cfg: ExternalConfig) -> Result<Self, SutError> {
        if cfg.dims.is_empty() {
            return Err(SutError::InvalidPoint(
                "external sut needs at least one dim".into(),
            ));
        }
        let axis = cfg.dims.len() - 1;
        let kind = StepperKind::Integer { axis };
        let mut descriptor = SutDescriptor::new(
            cfg.id.clone(),
            cfg.dims.iter().map(|d| DimSpec::unbounded(d)).collect(),
            kind.clone(),
        );
        let origin = descriptor.point(vec![0; cfg.dims.len()])?;
        descriptor.entrances = vec![Entrance::from_start(
            "origin",
            origin,
            kind,
            Direction::Next,
        )?];
        let slots = (0..cfg.workers.max(1)).map(|_| Mutex::new(None)).collect();
        Ok(ExternalSut {
            cfg,
            descriptor,
            slots,
            next: AtomicUsize::new(0),
        })
    }

    fn acquire(&self) -> MutexGuard<'_, Option<Worker>> {
        let n = self.slots.len();
        let start = self.next.fetch_add(1, Ordering::Relaxed) % n;
        for i in 0..n {
            if let Ok(guard) = self.slots[(start + i) % n].try_lock() {
                return guard;
            }
        }
        self.slots[start].lock().unwrap_or_else(|p| p.into_inner())
    }
}

impl Sut for ExternalSut {
    fn descriptor(&self) -> &SutDescriptor {
        &self.descriptor
    }

    fn eval(&self, x: &InputPoint) -> Result<SutOutput, SutError> {
        self.descriptor.check_dims(x)?;
        let mut slot = self.acquire();
        // one retry after a crash, with a fresh worker
        for attempt in 0..2 {
            if slot.is_none() {
                *slot = Some(Worker::spawn(&self.cfg)?);
            }
            let worker = slot.as_mut().expect("worker present");
            match worker.request(x.coords(), self.cfg.timeout) {
                Ok(out) => return Ok(out),
                Err(Failure::Protocol(msg)) => {
                    *slot = None;
                    return Err(SutError::Protocol(msg));
                }
                Err(Failure::Timeout) => {
                    *slot = None;
                    return Ok(SutOutput::error(format!(
                        "adapter: timeout after {} ms",
                        self.cfg.timeout.as_millis()
                    )));
                }
                Err(Failure::Terminated) => {
                    *slot = None;
                    if attempt == 1 {
                        break;
                    }
                }
            }
        }
        Ok(SutOutput::error("adapter: worker terminated"))
    }
}
