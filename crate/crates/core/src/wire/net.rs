use std::io::{self, BufReader, BufWriter, Write};
use std::net::{Shutdown, SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::mpsc::SyncSender;
use std::sync::Arc;
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use thiserror::Error;

use super::codec::{
    encode_message, DecodeError, MessageReader, WireMessage, DEFAULT_MAX_CLAUSE_LEN,
    PROTOCOL_VERSION,
};
use crate::cnf::{ClauseEvent, EventBody, EventKind};
use crate::formats::ProofStep;

#[derive(Debug, Error)]
pub enum NetError {
    #[error("connection refused: {0}")]
    ConnectionRefused(#[source] io::Error),
    #[error("connection lost after {sent} events (last confirmed sequence {last_sent:?})")]
    ConnectionLost {
        sent: u64,
        last_sent: Option<u64>,
        #[source]
        source: io::Error,
    },
    #[error("cannot bind: {0}")]
    BindFailure(#[source] io::Error),
    #[error("protocol error: {0}")]
    Protocol(#[from] DecodeError),
    #[error("unsupported protocol version {0}")]
    UnsupportedVersion(u32),
    #[error("event source failed: {0}")]
    Source(#[source] Box<dyn std::error::Error + Send + Sync>),
    #[error(transparent)]
    Io(io::Error),
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ProducerOptions {
    /// Events per second; `None` or 0 sends as fast as the consumer reads.
    pub rate: Option<f64>,
    pub num_variables_hint: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ProducerReport {
    pub events_sent: u64,
}

const FLUSH_INTERVAL: Duration = Duration::from_millis(20);

/// Writes Hello, one message per step and Terminate to `out`.
///
/// Writes block while the transport is full, which stalls the source; nothing
/// is dropped or reordered.
pub fn stream_events<W, I, E>(out: W, source: I, opts: ProducerOptions) -> Result<ProducerReport, NetError>
where
    W: Write,
    I: IntoIterator<Item = Result<ProofStep, E>>,
    E: std::error::Error + Send + Sync + 'static,
{
    let mut out = BufWriter::with_capacity(64 * 1024, out);
    let mut buf = Vec::with_capacity(256);
    let mut sent = 0u64;
    let mut confirmed = 0u64;
    let lost = |sent: u64, confirmed: u64, source: io::Error| NetError::ConnectionLost {
        sent,
        last_sent: confirmed.checked_sub(1),
        source,
    };

    encode_message(
        &WireMessage::Hello {
            version: PROTOCOL_VERSION,
            num_variables: opts.num_variables_hint,
        },
        &mut buf,
    );
    out.write_all(&buf).map_err(|e| lost(0, 0, e))?;

    let interval = opts
        .rate
        .filter(|r| *r > 0.0)
        .map(|r| Duration::from_secs_f64(1.0 / r));
    let start = Instant::now();
    let mut last_flush = start;

    for step in source {
        let step = step.map_err(|e| NetError::Source(Box::new(e)))?;
        if let Some(interval) = interval {
            let due = start + interval.mul_f64(sent as f64);
            let now = Instant::now();
            if due > now {
                out.flush().map_err(|e| lost(sent, confirmed, e))?;
                confirmed = sent;
                thread::sleep(due - now);
            }
        }
        buf.clear();
        encode_message(
            &match step.kind {
                EventKind::Add => WireMessage::AddClause(step.literals),
                EventKind::Delete => WireMessage::DeleteClause(step.literals),
            },
            &mut buf,
        );
        out.write_all(&buf).map_err(|e| lost(sent, confirmed, e))?;
        sent += 1;
        if interval.is_some() || last_flush.elapsed() >= FLUSH_INTERVAL {
            out.flush().map_err(|e| lost(sent, confirmed, e))?;
            confirmed = sent;
            last_flush = Instant::now();
        }
    }

    buf.clear();
    encode_message(&WireMessage::Terminate, &mut buf);
    out.write_all(&buf)
        .and_then(|_| out.flush())
        .map_err(|e| lost(sent, confirmed, e))?;
    Ok(ProducerReport { events_sent: sent })
}

/// Connects to a consumer and streams every step of `source` to it.
pub fn producer_session<A, I, E>(source: I, addr: A, opts: ProducerOptions) -> Result<ProducerReport, NetError>
where
    A: ToSocketAddrs,
    I: IntoIterator<Item = Result<ProofStep, E>>,
    E: std::error::Error + Send + Sync + 'static,
{
    let stream = TcpStream::connect(addr).map_err(NetError::ConnectionRefused)?;
    stream.set_nodelay(true).ok();
    let report = stream_events(&stream, source, opts)?;
    stream.shutdown(Shutdown::Write).ok();
    Ok(report)
}

/// What the consumer hands to its sink, in arrival order.
#[derive(Debug, Clone, PartialEq)]
pub enum Ingest {
    Hello { version: u32, num_variables: u64 },
    Event(ClauseEvent),
    /// The producer connection ended; `clean` is true after a Terminate message.
    Closed { clean: bool, error: Option<String> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SessionOutcome {
    pub events: u64,
    pub terminated: bool,
}

/// Reads one producer connection to completion, assigning sequence numbers
/// from `next_sequence`. Stops early if the sink is gone.
pub fn serve_connection<R: io::Read>(
    input: R,
    sink: &SyncSender<Ingest>,
    next_sequence: &AtomicU64,
    max_clause_len: usize,
) -> Result<SessionOutcome, NetError> {
    let mut reader = MessageReader::with_limit(BufReader::with_capacity(64 * 1024, input), max_clause_len);
    let mut events = 0u64;
    loop {
        let msg = match reader.read_message()? {
            Some(m) => m,
            None => {
                return Ok(SessionOutcome {
                    events,
                    terminated: false,
                })
            }
        };
        let item = match msg {
            WireMessage::Hello {
                version,
                num_variables,
            } => {
                if version != PROTOCOL_VERSION {
                    return Err(NetError::UnsupportedVersion(version));
                }
                Ingest::Hello {
                    version,
                    num_variables,
                }
            }
            WireMessage::AddClause(lits) => event(next_sequence, EventKind::Add, &lits),
            WireMessage::DeleteClause(lits) => event(next_sequence, EventKind::Delete, &lits),
            WireMessage::Terminate => {
                return Ok(SessionOutcome {
                    events,
                    terminated: true,
                })
            }
        };
        if matches!(item, Ingest::Event(_)) {
            events += 1;
        }
        if sink.send(item).is_err() {
            return Ok(SessionOutcome {
                events,
                terminated: false,
            });
        }
    }
}

fn event(next_sequence: &AtomicU64, kind: EventKind, lits: &[crate::cnf::Literal]) -> Ingest {
    let sequence = next_sequence.fetch_add(1, Ordering::SeqCst);
    Ingest::Event(ClauseEvent::new(sequence, kind, EventBody::from_literals(lits)))
}

#[derive(Debug, Clone, Copy)]
pub struct ListenerOptions {
    pub max_clause_len: usize,
    pub first_sequence: u64,
}

impl Default for ListenerOptions {
    fn default() -> Self {
        ListenerOptions {
            max_clause_len: DEFAULT_MAX_CLAUSE_LEN,
            first_sequence: 0,
        }
    }
}

/// A background accept loop serving one producer at a time.
#[derive(Debug)]
pub struct ConsumerListener {
    local_addr: SocketAddr,
    shutdown: Arc<AtomicBool>,
    handle: Option<JoinHandle<()>>,
}

impl ConsumerListener {
    pub fn local_addr(&self) -> SocketAddr {
        self.local_addr
    }

    pub fn shutdown(mut self) {
        self.stop();
    }

    fn stop(&mut self) {
        self.shutdown.store(true, Ordering::SeqCst);
        if let Some(h) = self.handle.take() {
            h.join().ok();
        }
    }
}

impl Drop for ConsumerListener {
    fn drop(&mut self) {
        self.stop();
    }
}

/// Binds `addr` and forwards decoded events to `sink`.
///
/// While a producer is connected, further connections are accepted and closed
/// immediately. Sequence numbers continue across consecutive producers.
/// The sink is bounded, so a slow consumer throttles the producer through TCP.
pub fn consumer_listener<A: ToSocketAddrs>(
    addr: A,
    sink: SyncSender<Ingest>,
    opts: ListenerOptions,
) -> Result<ConsumerListener, NetError> {
    let listener = TcpListener::bind(addr).map_err(NetError::BindFailure)?;
    let local_addr = listener.local_addr().map_err(NetError::BindFailure)?;
    listener.set_nonblocking(true).map_err(NetError::BindFailure)?;
    let shutdown = Arc::new(AtomicBool::new(false));
    let active = Arc::new(AtomicBool::new(false));
    let next_sequence = Arc::new(AtomicU64::new(opts.first_sequence));

    let stop = shutdown.clone();
    let handle = thread::Builder::new()
        .name("clause-ingest".into())
        .spawn(move || {
            while !stop.load(Ordering::SeqCst) {
                let stream = match listener.accept() {
                    Ok((stream, _)) => stream,
                    Err(e) if e.kind() == io::ErrorKind::WouldBlock => {
                        thread::sleep(Duration::from_millis(5));
                        continue;
                    }
                    Err(e) => {
                        log::warn!("accept failed: {e}");
                        thread::sleep(Duration::from_millis(5));
                        continue;
                    }
                };
                if active.swap(true, Ordering::SeqCst) {
                    log::warn!("refusing second producer while a session is active");
                    stream.shutdown(Shutdown::Both).ok();
                    continue;
                }
                stream.set_nonblocking(false).ok();
                let sink = sink.clone();
                let active = active.clone();
                let next_sequence = next_sequence.clone();
                let max = opts.max_clause_len;
                thread::spawn(move || {
                    let outcome = serve_connection(&stream, &sink, &next_sequence, max);
                    let closed = match outcome {
                        Ok(o) => Ingest::Closed {
                            clean: o.terminated,
                            error: None,
                        },
                        Err(e) => {
                            log::error!("producer session closed: {e}");
                            stream.shutdown(Shutdown::Both).ok();
                            Ingest::Closed {
                                clean: false,
                                error: Some(e.to_string()),
                            }
                        }
                    };
                    sink.send(closed).ok();
                    active.store(false, Ordering::SeqCst);
                });
            }
        })
        .map_err(NetError::Io)?;

    Ok(ConsumerListener {
        local_addr,
        shutdown,
        handle: Some(handle),
    })
}
