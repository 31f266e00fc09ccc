//! Binary producer/consumer protocol.
//!
//! Every message starts with a one-byte tag:
//!
//! | tag    | message      | payload                                            |
//! |--------|--------------|----------------------------------------------------|
//! | `0x01` | AddClause    | varint literals, then a single `0x00`              |
//! | `0x02` | DeleteClause | varint literals, then a single `0x00`              |
//! | `0x03` | Terminate    | none                                               |
//! | `0x04` | Hello        | varint protocol version, varint variable-count hint |
//!
//! A literal `l` travels as the unsigned value `2*|l| + (l < 0)` in LEB128
//! form. Zero never encodes a literal and terminates the clause.

mod adapter;
mod codec;
mod net;

pub use adapter::{spawn_solver, SolverProcess};
pub use codec::{
    decode_literal, decode_message, encode_literal, encode_message, encode_varint, DecodeError,
    Decoded, MessageReader, WireMessage, DEFAULT_MAX_CLAUSE_LEN, PROTOCOL_VERSION,
};
pub use net::{
    consumer_listener, producer_session, serve_connection, stream_events, ConsumerListener,
    Ingest, ListenerOptions, NetError, ProducerOptions, ProducerReport, SessionOutcome,
};
