use std::fmt;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use xxhash_rust::xxh3::xxh3_128;

use super::entity::EntityId;
use super::time::LevelId;
use crate::error::{Result, SimError};

/// 128-bit state digest.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
pub struct Digest(pub u128);

impl fmt::Display for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:032x}", self.0)
    }
}

/// Digest of one entity's canonical little-endian serialization.
pub fn entity_digest<S: Serialize>(id: EntityId, kind: u32, level: LevelId, state: &S) -> Result<Digest> {
    let bytes = bincode::serialize(&(id, kind, level, state))?;
    Ok(Digest(xxh3_128(&bytes)))
}

/// All entity digests at the end of one step, sorted by id.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: u64,
    pub entries: Vec<(EntityId, Digest)>,
    /// Hash chained over every previous record.
    pub hash: Digest,
}

/// Per-step digests of a run. Two runs are equivalent iff their traces are equal.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trace {
    pub initial: StepRecord,
    pub steps: Vec<StepRecord>,
}

/// First place where two traces disagree.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Divergence {
    /// `None` for the initial snapshot.
    pub step: Option<u64>,
    pub entity: Option<EntityId>,
}

fn chain(prev: Digest, step: u64, entries: &[(EntityId, Digest)]) -> Digest {
    let mut buf = Vec::with_capacity(24 + entries.len() * 24);
    buf.extend_from_slice(&prev.0.to_le_bytes());
    buf.extend_from_slice(&step.to_le_bytes());
    for (id, d) in entries {
        buf.extend_from_slice(&id.0.to_le_bytes());
        buf.extend_from_slice(&d.0.to_le_bytes());
    }
    Digest(xxh3_128(&buf))
}

/// Step index used for the initial snapshot in the chained hash.
const INITIAL_STEP: u64 = u64::MAX;

impl Trace {
    pub fn new(mut initial: Vec<(EntityId, Digest)>) -> Self {
        initial.sort_unstable_by_key(|e| e.0);
        let hash = chain(Digest::default(), INITIAL_STEP, &initial);
        Trace {
            initial: StepRecord {
                step: INITIAL_STEP,
                entries: initial,
                hash,
            },
            steps: Vec::new(),
        }
    }

    /// Appends the end-of-step snapshot. Entries need not be sorted.
    pub fn push_step(&mut self, step: u64, mut entries: Vec<(EntityId, Digest)>) {
        entries.sort_unstable_by_key(|e| e.0);
        let prev = self.final_hash();
        let hash = chain(prev, step, &entries);
        self.steps.push(StepRecord { step, entries, hash });
    }

    pub fn final_hash(&self) -> Digest {
        self.steps.last().map_or(self.initial.hash, |r| r.hash)
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn first_divergence(&self, other: &Trace) -> Option<Divergence> {
        fn diff(a: &StepRecord, b: &StepRecord) -> Option<Option<EntityId>> {
            if a.hash == b.hash && a.entries == b.entries {
                return None;
            }
            for (x, y) in a.entries.iter().zip(&b.entries) {
                if x != y {
                    return Some(Some(x.0.min(y.0)));
                }
            }
            let longer = if a.entries.len() > b.entries.len() { a } else { b };
            let n = a.entries.len().min(b.entries.len());
            Some(longer.entries.get(n).map(|e| e.0))
        }
        if let Some(entity) = diff(&self.initial, &other.initial) {
            return Some(Divergence { step: None, entity });
        }
        for (a, b) in self.steps.iter().zip(&other.steps) {
            if let Some(entity) = diff(a, b) {
                return Some(Divergence { step: Some(a.step), entity });
            }
        }
        if self.steps.len() != other.steps.len() {
            let n = self.steps.len().min(other.steps.len());
            return Some(Divergence { step: Some(n as u64), entity: None });
        }
        None
    }

    /// Binary log: `MLTR`, version byte, initial record, step count, records.
    ///
    /// Each record is `step u64 | n u32 | n × (id u64, digest u128) | hash u128`,
    /// all little-endian.
    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(&LOG_MAGIC)?;
        w.write_all(&[LOG_VERSION])?;
        write_record(&mut w, &self.initial)?;
        w.write_all(&(self.steps.len() as u64).to_le_bytes())?;
        for r in &self.steps {
            write_record(&mut w, r)?;
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(mut r: R) -> Result<Trace> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if magic != LOG_MAGIC {
            return Err(SimError::parse("trace log", "bad magic bytes"));
        }
        let mut version = [0u8; 1];
        r.read_exact(&mut version)?;
        if version[0] != LOG_VERSION {
            return Err(SimError::parse("trace log", format!("unsupported version {}", version[0])));
        }
        let initial = read_record(&mut r)?;
        let n = read_u64(&mut r)?;
        let mut steps = Vec::with_capacity(n.min(1 << 20) as usize);
        for _ in 0..n {
            steps.push(read_record(&mut r)?);
        }
        Ok(Trace { initial, steps })
    }
}

pub const LOG_MAGIC: [u8; 4] = *b"MLTR";
pub const LOG_VERSION: u8 = 1;

fn write_record<W: Write>(w: &mut W, r: &StepRecord) -> Result<()> {
    w.write_all(&r.step.to_le_bytes())?;
    w.write_all(&(r.entries.len() as u32).to_le_bytes())?;
    for (id, d) in &r.entries {
        w.write_all(&id.0.to_le_bytes())?;
        w.write_all(&d.0.to_le_bytes())?;
    }
    w.write_all(&r.hash.0.to_le_bytes())?;
    Ok(())
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_u128<R: Read>(r: &mut R) -> Result<u128> {
    let mut b = [0u8; 16];
    r.read_exact(&mut b)?;
    Ok(u128::from_le_bytes(b))
}

fn read_record<R: Read>(r: &mut R) -> Result<StepRecord> {
    let step = read_u64(r)?;
    let mut nb = [0u8; 4];
    r.read_exact(&mut nb)?;
    let n = u32::from_le_bytes(nb) as usize;
    let mut entries = Vec::with_capacity(n.min(1 << 20));
    for _ in 0..n {
        let id = EntityId(read_u64(r)?);
        entries.push((id, Digest(read_u128(r)?)));
    }
    let hash = Digest(read_u128(r)?);
    Ok(StepRecord { step, entries, hash })
}
