//! Scorer wire protocol.
//!
//! Every record is a UTF-8 JSON object preceded by its byte length as a
//! 4-byte big-endian unsigned integer. The client opens with a `hello`
//! record carrying [`PROTOCOL_VERSION`]; the server answers with its own
//! `hello` before any request is sent. After that, requests and responses
//! flow independently and are matched by `id`, so a server may answer out
//! of order.

use std::io::{self, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::Arc;
use std::thread;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::Context;

use super::{QaScore, QaScorer};

pub const PROTOCOL_VERSION: &str = "v1";

/// Frames larger than this are rejected.
pub const MAX_FRAME_BYTES: usize = 64 << 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Message {
    Hello {
        version: String,
    },
    Request {
        id: String,
        question: String,
        context_tokens: Vec<String>,
    },
    Response {
        id: String,
        p_ans: f64,
        p_start: Vec<f64>,
        p_end: Vec<f64>,
    },
    Error {
        id: String,
        message: String,
    },
    Health,
    HealthStatus {
        ok: bool,
    },
}

pub fn write_message<W: Write>(writer: &mut W, message: &Message) -> Result<()> {
    let body = serde_json::to_vec(message)?;
    let len = u32::try_from(body.len())
        .ok()
        .filter(|&n| (n as usize) <= MAX_FRAME_BYTES)
        .ok_or_else(|| Error::Protocol(format!("frame of {} bytes too large", body.len())))?;
    let mut frame = Vec::with_capacity(4 + body.len());
    frame.extend_from_slice(&len.to_be_bytes());
    frame.extend_from_slice(&body);
    writer.write_all(&frame)?;
    writer.flush()?;
    Ok(())
}

/// Reads one record; `Ok(None)` on a clean end of stream.
pub fn read_message<R: Read>(reader: &mut R) -> Result<Option<Message>> {
    let mut len = [0u8; 4];
    match reader.read_exact(&mut len) {
        Ok(()) => {}
        Err(e) if e.kind() == io::ErrorKind::UnexpectedEof => return Ok(None),
        Err(e) => return Err(e.into()),
    }
    let len = u32::from_be_bytes(len) as usize;
    if len > MAX_FRAME_BYTES {
        return Err(Error::Protocol(format!("frame of {len} bytes too large")));
    }
    let mut body = vec![0u8; len];
    reader.read_exact(&mut body)?;
    let text = std::str::from_utf8(&body).map_err(|e| Error::Protocol(format!("frame is not UTF-8: {e}")))?;
    Ok(Some(serde_json::from_str(text)?))
}

/// Server half of the handshake.
pub fn accept_handshake<S: Read + Write>(stream: &mut S) -> Result<()> {
    match read_message(stream)? {
        Some(Message::Hello { version }) if version == PROTOCOL_VERSION => write_message(
            stream,
            &Message::Hello {
                version: PROTOCOL_VERSION.to_owned(),
            },
        ),
        Some(Message::Hello { version }) => {
            let _ = write_message(
                stream,
                &Message::Error {
                    id: String::new(),
                    message: format!("unsupported protocol version `{version}`"),
                },
            );
            Err(Error::Protocol(format!("client speaks `{version}`")))
        }
        other => Err(Error::Protocol(format!("expected hello, got {other:?}"))),
    }
}

/// Answers one request record with a response or error record.
pub fn answer<S: QaScorer + ?Sized>(scorer: &S, message: Message) -> Option<Message> {
    match message {
        Message::Request {
            id,
            question,
            context_tokens,
        } => {
            let result = Context::new(context_tokens, None).and_then(|ctx| scorer.score(&question, &ctx));
            Some(match result {
                Ok(QaScore { p_ans, p_start, p_end }) => Message::Response {
                    id,
                    p_ans,
                    p_start,
                    p_end,
                },
                Err(e) => Message::Error {
                    id,
                    message: e.to_string(),
                },
            })
        }
        Message::Health => Some(Message::HealthStatus { ok: true }),
        _ => None,
    }
}

/// Serves one connection sequentially until the peer hangs up.
pub fn serve_connection<S, Q>(mut stream: S, scorer: &Q) -> Result<()>
where
    S: Read + Write,
    Q: QaScorer + ?Sized,
{
    accept_handshake(&mut stream)?;
    while let Some(message) = read_message(&mut stream)? {
        if let Some(reply) = answer(scorer, message) {
            write_message(&mut stream, &reply)?;
        }
    }
    Ok(())
}

/// Accepts connections forever, one thread per connection.
pub fn serve_tcp(listener: TcpListener, scorer: Arc<dyn QaScorer>) -> Result<()> {
    for stream in listener.incoming() {
        let stream: TcpStream = stream?;
        let scorer = Arc::clone(&scorer);
        thread::spawn(move || {
            let peer = stream.peer_addr().map(|a| a.to_string()).unwrap_or_default();
            if let Err(e) = serve_connection(stream, scorer.as_ref()) {
                log::warn!("connection {peer}: {e}");
            }
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frame_round_trip() {
        let msg = Message::Request {
            id: "q1".into(),
            question: "Jobs | founder".into(),
            context_tokens: vec!["null".into(), "Jobs".into()],
        };
        let mut buf = Vec::new();
        write_message(&mut buf, &msg).unwrap();
        let len = u32::from_be_bytes(buf[..4].try_into().unwrap()) as usize;
        assert_eq!(len, buf.len() - 4);
        let text = std::str::from_utf8(&buf[4..]).unwrap();
        assert_eq!(
            text,
            r#"{"type":"request","id":"q1","question":"Jobs | founder","context_tokens":["null","Jobs"]}"#
        );
        let mut cursor = io::Cursor::new(buf);
        assert_eq!(read_message(&mut cursor).unwrap(), Some(msg));
        assert_eq!(read_message(&mut cursor).unwrap(), None);
    }

    #[test]
    fn rejects_oversized_and_truncated_frames() {
        let mut big = ((MAX_FRAME_BYTES + 1) as u32).to_be_bytes().to_vec();
        big.extend_from_slice(b"{}");
        assert!(read_message(&mut io::Cursor::new(big)).is_err());

        let mut short = 10u32.to_be_bytes().to_vec();
        short.extend_from_slice(b"{}");
        assert!(read_message(&mut io::Cursor::new(short)).is_err());
    }
}
