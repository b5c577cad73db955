use std::collections::HashMap;
use std::io::{Read, Write};
use std::net::{TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::mpsc::{self, RecvTimeoutError, Sender};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::Duration;

use crate::error::{Error, Result};
use crate::ingest::Context;

use super::protocol::{read_message, write_message, Message, PROTOCOL_VERSION};
use super::{QaScore, QaScorer};

const CONNECT_TIMEOUT: Duration = Duration::from_secs(10);
const DEFAULT_REQUEST_TIMEOUT: Duration = Duration::from_secs(120);

type Reply = std::result::Result<Message, String>;

struct Shared {
    writer: Mutex<Box<dyn Write + Send>>,
    pending: Mutex<HashMap<String, Sender<Reply>>>,
    /// Set once the reader thread stops; later requests fail fast.
    closed: Mutex<Option<String>>,
}

/// Client for a QA service speaking the scorer wire protocol.
///
/// Calls may be issued from many threads at once over a single connection.
/// A background reader routes every response to the caller waiting on its
/// request id, whatever order the server answers in.
pub struct RemoteScorer {
    endpoint: String,
    shared: Arc<Shared>,
    next_id: AtomicU64,
    timeout: Duration,
}

impl RemoteScorer {
    /// Connects over TCP to `host:port`.
    pub fn connect(endpoint: &str) -> Result<Self> {
        let remote = |reason: String| Error::Remote {
            endpoint: endpoint.to_owned(),
            request_id: String::new(),
            reason,
        };
        let addr = endpoint
            .to_socket_addrs()
            .map_err(|e| remote(format!("cannot resolve: {e}")))?
            .next()
            .ok_or_else(|| remote("no address".into()))?;
        let stream =
            TcpStream::connect_timeout(&addr, CONNECT_TIMEOUT).map_err(|e| remote(format!("cannot connect: {e}")))?;
        stream.set_nodelay(true).ok();
        let reader = stream.try_clone()?;
        Self::over_stream(endpoint, reader, stream)
    }

    /// Runs the protocol over an already-open byte stream pair.
    pub fn over_stream<R, W>(endpoint: &str, mut reader: R, mut writer: W) -> Result<Self>
    where
        R: Read + Send + 'static,
        W: Write + Send + 'static,
    {
        let remote = |reason: String| Error::Remote {
            endpoint: endpoint.to_owned(),
            request_id: String::new(),
            reason,
        };
        write_message(
            &mut writer,
            &Message::Hello {
                version: PROTOCOL_VERSION.to_owned(),
            },
        )
        .map_err(|e| remote(format!("handshake: {e}")))?;
        match read_message(&mut reader).map_err(|e| remote(format!("handshake: {e}")))? {
            Some(Message::Hello { version }) if version == PROTOCOL_VERSION => {}
            Some(Message::Hello { version }) => {
                return Err(remote(format!(
                    "server speaks `{version}`, expected `{PROTOCOL_VERSION}`"
                )))
            }
            Some(Message::Error { message, .. }) => return Err(remote(format!("handshake rejected: {message}"))),
            other => return Err(remote(format!("expected hello, got {other:?}"))),
        }

        let shared = Arc::new(Shared {
            writer: Mutex::new(Box::new(writer)),
            pending: Mutex::new(HashMap::new()),
            closed: Mutex::new(None),
        });
        let reader_shared = Arc::clone(&shared);
        thread::Builder::new()
            .name("qaval-remote-reader".into())
            .spawn(move || read_loop(reader, &reader_shared))?;
        Ok(Self {
            endpoint: endpoint.to_owned(),
            shared,
            next_id: AtomicU64::new(1),
            timeout: DEFAULT_REQUEST_TIMEOUT,
        })
    }

    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.timeout = timeout;
        self
    }

    pub fn endpoint(&self) -> &str {
        &self.endpoint
    }

    fn fail(&self, request_id: &str, reason: impl Into<String>) -> Error {
        Error::Remote {
            endpoint: self.endpoint.clone(),
            request_id: request_id.to_owned(),
            reason: reason.into(),
        }
    }

    fn roundtrip(&self, id: &str, message: Message) -> Result<Message> {
        let (tx, rx) = mpsc::channel();
        {
            // Registering under the `closed` lock closes the race with the
            // reader thread draining `pending` on shutdown.
            let closed = self.shared.closed.lock().expect("poisoned");
            if let Some(reason) = closed.as_ref() {
                return Err(self.fail(id, format!("connection closed: {reason}")));
            }
            self.shared.pending.lock().expect("poisoned").insert(id.to_owned(), tx);
        }
        let sent = {
            let mut writer = self.shared.writer.lock().expect("poisoned");
            write_message(&mut *writer, &message)
        };
        if let Err(e) = sent {
            self.shared.pending.lock().expect("poisoned").remove(id);
            return Err(self.fail(id, format!("send failed: {e}")));
        }
        match rx.recv_timeout(self.timeout) {
            Ok(Ok(reply)) => Ok(reply),
            Ok(Err(reason)) => Err(self.fail(id, reason)),
            Err(RecvTimeoutError::Timeout) => {
                self.shared.pending.lock().expect("poisoned").remove(id);
                Err(self.fail(id, format!("no response within {:?}", self.timeout)))
            }
            Err(RecvTimeoutError::Disconnected) => Err(self.fail(id, "connection closed")),
        }
    }
}

fn read_loop<R: Read>(mut reader: R, shared: &Shared) {
    let reason = loop {
        let message = match read_message(&mut reader) {
            Ok(Some(m)) => m,
            Ok(None) => break "server closed the connection".to_owned(),
            Err(e) => break format!("read failed: {e}"),
        };
        let id = match &message {
            Message::Response { id, .. } | Message::Error { id, .. } => id.clone(),
            other => {
                log::warn!("ignoring unexpected record {other:?}");
                continue;
            }
        };
        match shared.pending.lock().expect("poisoned").remove(&id) {
            Some(tx) => {
                let _ = tx.send(Ok(message));
            }
            None => log::warn!("response for unknown request id `{id}`"),
        }
    };
    let mut closed = shared.closed.lock().expect("poisoned");
    *closed = Some(reason.clone());
    for (_, tx) in shared.pending.lock().expect("poisoned").drain() {
        let _ = tx.send(Err(reason.clone()));
    }
}

impl QaScorer for RemoteScorer {
    fn score(&self, question: &str, context: &Context) -> Result<QaScore> {
        let id = format!("q{}", self.next_id.fetch_add(1, Ordering::Relaxed));
        let request = Message::Request {
            id: id.clone(),
            question: question.to_owned(),
            context_tokens: context.tokens().to_vec(),
        };
        match self.roundtrip(&id, request)? {
            Message::Response {
                p_ans, p_start, p_end, ..
            } => {
                let score = QaScore { p_ans, p_start, p_end };
                score
                    .check_for(context)
                    .map_err(|e| self.fail(&id, format!("malformed response: {e}")))?;
                Ok(score)
            }
            Message::Error { message, .. } => Err(self.fail(&id, format!("server error: {message}"))),
            other => Err(self.fail(&id, format!("unexpected reply {other:?}"))),
        }
    }

    fn is_deterministic(&self) -> bool {
        false
    }

    fn describe(&self) -> String {
        format!("remote({})", self.endpoint)
    }
}
