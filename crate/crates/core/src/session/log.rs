//! Append-only event log, optionally spilling old blocks to disk.

use std::fs::{File, OpenOptions};
use std::io::{self, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use crate::cnf::{ClauseEvent, EventBody, EventKind};
use crate::wire::{decode_message, encode_message, Decoded, WireMessage};

enum Block {
    Memory(Vec<ClauseEvent>),
    /// Byte range in the spill file.
    Spilled { offset: u64, len: u64, events: usize },
}

/// Events in fixed-size blocks. When a memory budget is set, the oldest full
/// blocks are written to a spill file in wire format and read back on demand.
pub struct EventLog {
    block_size: usize,
    blocks: Vec<Block>,
    len: u64,
    spill: Option<Spill>,
    cache: Option<(usize, Vec<ClauseEvent>)>,
}

struct Spill {
    path: PathBuf,
    file: File,
    end: u64,
    max_in_memory: usize,
    in_memory: usize,
    oldest_in_memory: usize,
}

impl EventLog {
    pub fn new(block_size: usize) -> Self {
        EventLog {
            block_size: block_size.max(1),
            blocks: Vec::new(),
            len: 0,
            spill: None,
            cache: None,
        }
    }

    /// Like `new`, but keeps at most about `max_in_memory` events in RAM,
    /// spilling whole blocks to a file created at `path`.
    pub fn with_spill(block_size: usize, path: &Path, max_in_memory: usize) -> io::Result<Self> {
        let file = OpenOptions::new()
            .read(true)
            .write(true)
            .create(true)
            .truncate(true)
            .open(path)?;
        let mut log = EventLog::new(block_size);
        log.spill = Some(Spill {
            path: path.to_path_buf(),
            file,
            end: 0,
            max_in_memory,
            in_memory: 0,
            oldest_in_memory: 0,
        });
        Ok(log)
    }

    pub fn len(&self) -> u64 {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn spill_path(&self) -> Option<&Path> {
        self.spill.as_ref().map(|s| s.path.as_path())
    }

    /// Number of events currently held in memory.
    pub fn resident(&self) -> usize {
        self.blocks
            .iter()
            .map(|b| match b {
                Block::Memory(v) => v.len(),
                Block::Spilled { .. } => 0,
            })
            .sum()
    }

    /// Appends an event; its sequence number is overwritten with its index.
    pub fn push(&mut self, mut event: ClauseEvent) -> io::Result<u64> {
        let index = self.len;
        event.sequence = index;
        match self.blocks.last_mut() {
            Some(Block::Memory(v)) if v.len() < self.block_size => v.push(event),
            _ => {
                let mut v = Vec::with_capacity(self.block_size.min(1 << 16));
                v.push(event);
                self.blocks.push(Block::Memory(v));
            }
        }
        self.len += 1;
        if let Some(spill) = self.spill.as_mut() {
            spill.in_memory += 1;
        }
        self.maybe_spill()?;
        Ok(index)
    }

    fn maybe_spill(&mut self) -> io::Result<()> {
        let Some(spill) = self.spill.as_mut() else {
            return Ok(());
        };
        // Never spill the block still being filled.
        while spill.in_memory > spill.max_in_memory && spill.oldest_in_memory + 1 < self.blocks.len() {
            let i = spill.oldest_in_memory;
            let Block::Memory(events) = &self.blocks[i] else {
                spill.oldest_in_memory += 1;
                continue;
            };
            let mut buf = Vec::new();
            for e in events {
                encode_message(&to_wire(e), &mut buf);
            }
            spill.file.seek(SeekFrom::Start(spill.end))?;
            spill.file.write_all(&buf)?;
            let count = events.len();
            self.blocks[i] = Block::Spilled {
                offset: spill.end,
                len: buf.len() as u64,
                events: count,
            };
            spill.end += buf.len() as u64;
            spill.in_memory -= count;
            spill.oldest_in_memory += 1;
            log::debug!("spilled event block {i} ({count} events)");
        }
        Ok(())
    }

    /// The event at `index`, loading its block from disk if needed.
    pub fn get(&mut self, index: u64) -> io::Result<&ClauseEvent> {
        assert!(index < self.len, "event index {index} beyond log length {}", self.len);
        let b = (index / self.block_size as u64) as usize;
        let o = (index % self.block_size as u64) as usize;
        if let Block::Spilled { offset, len, events } = self.blocks[b] {
            if self.cache.as_ref().map(|c| c.0) != Some(b) {
                let spill = self.spill.as_mut().expect("spilled block implies spill file");
                let loaded = read_block(&mut spill.file, offset, len, events, b * self.block_size)?;
                self.cache = Some((b, loaded));
            }
            return Ok(&self.cache.as_ref().expect("cache filled").1[o]);
        }
        match &self.blocks[b] {
            Block::Memory(v) => Ok(&v[o]),
            Block::Spilled { .. } => unreachable!(),
        }
    }

    /// Events `[from, to)` in order.
    pub fn range(&mut self, from: u64, to: u64) -> io::Result<Vec<ClauseEvent>> {
        (from..to.min(self.len)).map(|i| self.get(i).cloned()).collect()
    }
}

impl Drop for EventLog {
    fn drop(&mut self) {
        if let Some(spill) = &self.spill {
            let _ = std::fs::remove_file(&spill.path);
        }
    }
}

fn to_wire(event: &ClauseEvent) -> WireMessage {
    let lits = event.body.literals().to_vec();
    match event.kind {
        EventKind::Add => WireMessage::AddClause(lits),
        EventKind::Delete => WireMessage::DeleteClause(lits),
    }
}

fn read_block(file: &mut File, offset: u64, len: u64, events: usize, first: usize) -> io::Result<Vec<ClauseEvent>> {
    let mut buf = vec![0u8; len as usize];
    file.seek(SeekFrom::Start(offset))?;
    file.read_exact(&mut buf)?;
    let corrupt = |what: String| io::Error::new(io::ErrorKind::InvalidData, format!("spill file: {what}"));
    let mut out = Vec::with_capacity(events);
    let mut pos = 0;
    while pos < buf.len() {
        match decode_message(&buf[pos..], usize::MAX).map_err(|e| corrupt(e.to_string()))? {
            Decoded::Message(msg, used) => {
                pos += used;
                let (kind, lits) = match msg {
                    WireMessage::AddClause(l) => (EventKind::Add, l),
                    WireMessage::DeleteClause(l) => (EventKind::Delete, l),
                    other => return Err(corrupt(format!("unexpected {other:?}"))),
                };
                let seq = (first + out.len()) as u64;
                out.push(ClauseEvent::new(seq, kind, EventBody::from_literals(&lits)));
            }
            Decoded::Incomplete => return Err(corrupt("truncated block".into())),
        }
    }
    if out.len() != events {
        return Err(corrupt(format!("expected {events} events, found {}", out.len())));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn events(n: u64) -> Vec<ClauseEvent> {
        (0..n)
            .map(|i| {
                let v = (i % 17) as i32 + 1;
                match i % 5 {
                    0 => ClauseEvent::delete(999, &[v, -(v + 1)]),
                    1 => ClauseEvent::add(999, &[v, -v]),
                    2 => ClauseEvent::add(999, &[]),
                    _ => ClauseEvent::add(999, &[v, v + 2, -(v + 5)]),
                }
            })
            .collect()
    }

    #[test]
    fn sequences_are_indices() {
        let mut log = EventLog::new(4);
        for e in events(10) {
            log.push(e).unwrap();
        }
        assert_eq!(log.len(), 10);
        for i in 0..10 {
            assert_eq!(log.get(i).unwrap().sequence, i);
        }
    }

    #[test]
    fn spilled_log_reads_back_identically() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("events.spill");
        let mut plain = EventLog::new(8);
        let mut spilled = EventLog::with_spill(8, &path, 20).unwrap();
        for e in events(100) {
            plain.push(e.clone()).unwrap();
            spilled.push(e).unwrap();
        }
        assert!(spilled.resident() <= 28, "{} resident", spilled.resident());
        assert!(std::fs::metadata(&path).unwrap().len() > 0);
        assert_eq!(plain.range(0, 100).unwrap(), spilled.range(0, 100).unwrap());
        assert_eq!(plain.range(37, 41).unwrap(), spilled.range(37, 41).unwrap());
        drop(spilled);
        assert!(!path.exists());
    }
}
