use std::io::{self, BufRead};

use thiserror::Error;

use crate::cnf::Literal;

pub const PROTOCOL_VERSION: u32 = 1;
pub const DEFAULT_MAX_CLAUSE_LEN: usize = 1_000_000;

const TAG_ADD: u8 = 0x01;
const TAG_DELETE: u8 = 0x02;
const TAG_TERMINATE: u8 = 0x03;
const TAG_HELLO: u8 = 0x04;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum WireMessage {
    /// Literals exactly as sent; canonicalization happens at ingest.
    AddClause(Vec<Literal>),
    DeleteClause(Vec<Literal>),
    Terminate,
    Hello { version: u32, num_variables: u64 },
}

#[derive(Debug, Error)]
pub enum DecodeError {
    #[error("unknown message tag {0:#04x}")]
    UnknownTag(u8),
    #[error("stream ended inside a varint")]
    TruncatedVarint,
    #[error("stream ended inside a message")]
    TruncatedMessage,
    #[error("varint does not fit in 64 bits")]
    VarintOverflow,
    #[error("value {0} does not encode a literal")]
    InvalidLiteral(u64),
    #[error("clause exceeds {limit} literals")]
    OversizedClause { limit: usize },
    #[error("hello field out of range")]
    InvalidHello,
    #[error(transparent)]
    Io(#[from] io::Error),
}

pub fn encode_varint(mut value: u64, out: &mut Vec<u8>) {
    while value >= 0x80 {
        out.push((value as u8 & 0x7f) | 0x80);
        value >>= 7;
    }
    out.push(value as u8);
}

pub fn encode_literal(lit: Literal, out: &mut Vec<u8>) {
    let magnitude = lit.variable().index() as u64;
    encode_varint(2 * magnitude + lit.is_negative() as u64, out);
}

pub fn decode_literal(code: u64) -> Result<Literal, DecodeError> {
    let magnitude = code >> 1;
    if magnitude == 0 || magnitude > i32::MAX as u64 {
        return Err(DecodeError::InvalidLiteral(code));
    }
    let value = magnitude as i32;
    let lit = if code & 1 == 1 { -value } else { value };
    Ok(Literal::new(lit).expect("nonzero, not i32::MIN"))
}

pub fn encode_message(msg: &WireMessage, out: &mut Vec<u8>) {
    match msg {
        WireMessage::AddClause(lits) | WireMessage::DeleteClause(lits) => {
            out.push(if matches!(msg, WireMessage::AddClause(_)) {
                TAG_ADD
            } else {
                TAG_DELETE
            });
            for &lit in lits {
                encode_literal(lit, out);
            }
            out.push(0);
        }
        WireMessage::Terminate => out.push(TAG_TERMINATE),
        WireMessage::Hello {
            version,
            num_variables,
        } => {
            out.push(TAG_HELLO);
            encode_varint(*version as u64, out);
            encode_varint(*num_variables, out);
        }
    }
}

/// Outcome of decoding from the front of a byte slice.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Decoded {
    /// A complete message and the number of bytes it occupied.
    Message(WireMessage, usize),
    /// The slice ends before the message does; more bytes are needed.
    Incomplete,
}

/// Source of bytes for the shared decoding routine. `Ok(None)` is end of input.
trait ByteSource {
    fn next_byte(&mut self) -> Result<Option<u8>, DecodeError>;
}

struct SliceSource<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl ByteSource for SliceSource<'_> {
    fn next_byte(&mut self) -> Result<Option<u8>, DecodeError> {
        let b = self.bytes.get(self.pos).copied();
        self.pos += b.is_some() as usize;
        Ok(b)
    }
}

fn read_varint<S: ByteSource>(src: &mut S) -> Result<u64, DecodeError> {
    let mut value = 0u64;
    let mut shift = 0u32;
    loop {
        let byte = src.next_byte()?.ok_or(DecodeError::TruncatedVarint)?;
        if shift == 63 && byte > 1 {
            return Err(DecodeError::VarintOverflow);
        }
        value |= ((byte & 0x7f) as u64) << shift;
        if byte & 0x80 == 0 {
            return Ok(value);
        }
        shift += 7;
        if shift > 63 {
            return Err(DecodeError::VarintOverflow);
        }
    }
}

fn read_body<S: ByteSource>(tag: u8, src: &mut S, max_clause_len: usize) -> Result<WireMessage, DecodeError> {
    match tag {
        TAG_ADD | TAG_DELETE => {
            let mut lits = Vec::new();
            loop {
                let code = read_varint(src)?;
                if code == 0 {
                    break;
                }
                if lits.len() == max_clause_len {
                    return Err(DecodeError::OversizedClause {
                        limit: max_clause_len,
                    });
                }
                lits.push(decode_literal(code)?);
            }
            Ok(if tag == TAG_ADD {
                WireMessage::AddClause(lits)
            } else {
                WireMessage::DeleteClause(lits)
            })
        }
        TAG_TERMINATE => Ok(WireMessage::Terminate),
        TAG_HELLO => {
            let version = u32::try_from(read_varint(src)?).map_err(|_| DecodeError::InvalidHello)?;
            let num_variables = read_varint(src)?;
            Ok(WireMessage::Hello {
                version,
                num_variables,
            })
        }
        other => Err(DecodeError::UnknownTag(other)),
    }
}

/// Decodes one message from the front of `bytes`.
///
/// A slice that stops partway through a message yields [`Decoded::Incomplete`],
/// so any prefix of a valid stream splits into complete messages plus a
/// recognizable tail.
pub fn decode_message(bytes: &[u8], max_clause_len: usize) -> Result<Decoded, DecodeError> {
    let mut src = SliceSource { bytes, pos: 0 };
    let Some(tag) = src.next_byte()? else {
        return Ok(Decoded::Incomplete);
    };
    match read_body(tag, &mut src, max_clause_len) {
        Ok(msg) => Ok(Decoded::Message(msg, src.pos)),
        Err(DecodeError::TruncatedVarint) => Ok(Decoded::Incomplete),
        Err(e) => Err(e),
    }
}

/// Decodes messages from a buffered byte stream.
pub struct MessageReader<R> {
    input: R,
    max_clause_len: usize,
}

struct ReaderSource<'a, R> {
    input: &'a mut R,
    read_any: bool,
}

impl<R: BufRead> ByteSource for ReaderSource<'_, R> {
    fn next_byte(&mut self) -> Result<Option<u8>, DecodeError> {
        let buf = loop {
            match self.input.fill_buf() {
                Ok(buf) => break buf,
                Err(e) if e.kind() == io::ErrorKind::Interrupted => continue,
                Err(e) => return Err(e.into()),
            }
        };
        let Some(&b) = buf.first() else {
            return Ok(None);
        };
        self.input.consume(1);
        self.read_any = true;
        Ok(Some(b))
    }
}

impl<R: BufRead> MessageReader<R> {
    pub fn new(input: R) -> Self {
        Self::with_limit(input, DEFAULT_MAX_CLAUSE_LEN)
    }

    pub fn with_limit(input: R, max_clause_len: usize) -> Self {
        MessageReader {
            input,
            max_clause_len,
        }
    }

    /// `Ok(None)` on a clean end of stream between messages.
    pub fn read_message(&mut self) -> Result<Option<WireMessage>, DecodeError> {
        let mut src = ReaderSource {
            input: &mut self.input,
            read_any: false,
        };
        let Some(tag) = src.next_byte()? else {
            return Ok(None);
        };
        match read_body(tag, &mut src, self.max_clause_len) {
            // A truncated varint right after the last complete literal means the
            // terminator never arrived.
            Err(DecodeError::TruncatedVarint) if matches!(tag, TAG_ADD | TAG_DELETE) => {
                Err(DecodeError::TruncatedMessage)
            }
            other => other.map(Some),
        }
    }

    pub fn into_inner(self) -> R {
        self.input
    }
}

impl<R: BufRead> Iterator for MessageReader<R> {
    type Item = Result<WireMessage, DecodeError>;

    fn next(&mut self) -> Option<Self::Item> {
        self.read_message().transpose()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn lit(v: i32) -> Literal {
        Literal::new(v).unwrap()
    }

    fn enc(v: i32) -> Vec<u8> {
        let mut out = Vec::new();
        encode_literal(lit(v), &mut out);
        out
    }

    #[test]
    fn literal_encoding_examples() {
        assert_eq!(enc(3), vec![0x06]);
        assert_eq!(enc(-3), vec![0x07]);
        // 200 = 0b1_1001000: low seven bits 0x48 with continuation, then 1.
        assert_eq!(enc(100), vec![0xC8, 0x01]);
    }

    #[test]
    fn decode_examples() {
        assert_eq!(
            decode_message(&[0x01, 0x06, 0x07, 0x00], 10).unwrap(),
            Decoded::Message(WireMessage::AddClause(vec![lit(3), lit(-3)]), 4)
        );
        assert_eq!(
            decode_message(&[0x03], 10).unwrap(),
            Decoded::Message(WireMessage::Terminate, 1)
        );
        assert_eq!(
            decode_message(&[0x01, 0x00], 10).unwrap(),
            Decoded::Message(WireMessage::AddClause(vec![]), 2)
        );
    }

    #[test]
    fn decode_errors() {
        assert!(matches!(
            decode_message(&[0x09], 10),
            Err(DecodeError::UnknownTag(0x09))
        ));
        assert!(matches!(
            decode_message(&[0x01, 0x02, 0x04, 0x06, 0x00], 2),
            Err(DecodeError::OversizedClause { limit: 2 })
        ));
        assert!(matches!(
            decode_message(&[0x01, 0x01, 0x00], 10),
            Err(DecodeError::InvalidLiteral(1))
        ));
        let mut r = MessageReader::new(&[0x01, 0x86][..]);
        assert!(matches!(r.read_message(), Err(DecodeError::TruncatedMessage)));
        let mut r = MessageReader::new(&[0x04, 0x81][..]);
        assert!(matches!(r.read_message(), Err(DecodeError::TruncatedVarint)));
        let mut r = MessageReader::new(&[0x01, 0x06][..]);
        assert!(matches!(r.read_message(), Err(DecodeError::TruncatedMessage)));
    }

    #[test]
    fn hello_round_trip() {
        let msg = WireMessage::Hello {
            version: PROTOCOL_VERSION,
            num_variables: 94663,
        };
        let mut buf = Vec::new();
        encode_message(&msg, &mut buf);
        assert_eq!(buf[0], 0x04);
        assert_eq!(
            decode_message(&buf, 10).unwrap(),
            Decoded::Message(msg, buf.len())
        );
    }

    fn arb_message() -> impl Strategy<Value = WireMessage> {
        let lits = prop::collection::vec(
            (1i32..=1_000_000, any::<bool>()).prop_map(|(v, n)| lit(if n { -v } else { v })),
            0..30,
        );
        prop_oneof![
            lits.clone().prop_map(WireMessage::AddClause),
            lits.prop_map(WireMessage::DeleteClause),
            Just(WireMessage::Terminate),
            (any::<u32>(), any::<u64>()).prop_map(|(version, num_variables)| WireMessage::Hello {
                version,
                num_variables
            }),
        ]
    }

    proptest! {
        #[test]
        fn reader_round_trip(msgs in prop::collection::vec(arb_message(), 0..20)) {
            let mut buf = Vec::new();
            for m in &msgs {
                encode_message(m, &mut buf);
            }
            let back: Result<Vec<_>, _> = MessageReader::new(buf.as_slice()).collect();
            prop_assert_eq!(back.unwrap(), msgs);
        }

        #[test]
        fn every_prefix_splits_cleanly(msgs in prop::collection::vec(arb_message(), 1..8), cut in any::<prop::sample::Index>()) {
            let mut buf = Vec::new();
            let mut ends = Vec::new();
            for m in &msgs {
                encode_message(m, &mut buf);
                ends.push(buf.len());
            }
            let cut = cut.index(buf.len() + 1);
            let prefix = &buf[..cut];
            let mut pos = 0;
            let mut decoded = Vec::new();
            while let Decoded::Message(m, n) = decode_message(&prefix[pos..], DEFAULT_MAX_CLAUSE_LEN).unwrap() {
                decoded.push(m);
                pos += n;
            }
            let complete = ends.iter().filter(|&&e| e <= cut).count();
            prop_assert_eq!(decoded.as_slice(), &msgs[..complete]);
        }
    }
}
