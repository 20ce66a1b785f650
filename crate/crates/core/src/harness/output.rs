use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use thiserror::Error;

use super::HarnessError;
use crate::solvers::DiagnosticsRecord;
use crate::transfer::Particle;

pub const SNAPSHOT_MAGIC: [u8; 4] = *b"HOTP";
pub const SNAPSHOT_VERSION: u32 = 1;
/// magic, version, dim, count
pub const SNAPSHOT_HEADER_LEN: usize = 4 + 4 + 4 + 8;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SnapshotError {
    #[error("snapshot is {0} bytes, shorter than its header")]
    Truncated(usize),
    #[error("bad magic {0:?}")]
    BadMagic([u8; 4]),
    #[error("unsupported snapshot version {0}")]
    UnsupportedVersion(u32),
    #[error("unsupported dimension {0}")]
    UnsupportedDimension(u32),
    #[error("header declares {count} particles, which needs {expected} payload bytes but {got} are present")]
    LengthMismatch {
        count: u64,
        expected: u128,
        got: usize,
    },
}

/// Particle positions and velocities of one frame, flattened per particle.
#[derive(Clone, Debug, PartialEq)]
pub struct Snapshot {
    pub dim: usize,
    pub positions: Vec<f64>,
    pub velocities: Vec<f64>,
}

impl Snapshot {
    pub fn from_particles<const D: usize>(particles: &[Particle<D>]) -> Self {
        let mut positions = Vec::with_capacity(particles.len() * D);
        let mut velocities = Vec::with_capacity(particles.len() * D);
        for p in particles {
            positions.extend_from_slice(p.position.as_slice());
            velocities.extend_from_slice(p.velocity.as_slice());
        }
        Self {
            dim: D,
            positions,
            velocities,
        }
    }

    pub fn len(&self) -> usize {
        self.positions.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn position(&self, p: usize) -> &[f64] {
        &self.positions[p * self.dim..(p + 1) * self.dim]
    }

    pub fn velocity(&self, p: usize) -> &[f64] {
        &self.velocities[p * self.dim..(p + 1) * self.dim]
    }

    /// Little-endian header, then position and velocity of each particle.
    pub fn to_bytes(&self) -> Vec<u8> {
        let n = self.len();
        let mut out = Vec::with_capacity(SNAPSHOT_HEADER_LEN + n * 2 * self.dim * 8);
        out.extend_from_slice(&SNAPSHOT_MAGIC);
        out.extend_from_slice(&SNAPSHOT_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.dim as u32).to_le_bytes());
        out.extend_from_slice(&(n as u64).to_le_bytes());
        for p in 0..n {
            for v in self.position(p).iter().chain(self.velocity(p)) {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    /// Plain-text table with one `x y [z]` row per particle.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for p in 0..self.len() {
            let row: Vec<String> = self.position(p).iter().map(|v| format!("{v:e}")).collect();
            let _ = writeln!(out, "{}", row.join(" "));
        }
        out
    }
}

fn u32_at(bytes: &[u8], at: usize) -> u32 {
    u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap())
}

/// Decode a snapshot, rejecting anything that does not match the header.
pub fn read_snapshot(bytes: &[u8]) -> Result<Snapshot, SnapshotError> {
    if bytes.len() < SNAPSHOT_HEADER_LEN {
        return Err(SnapshotError::Truncated(bytes.len()));
    }
    let magic: [u8; 4] = bytes[..4].try_into().unwrap();
    if magic != SNAPSHOT_MAGIC {
        return Err(SnapshotError::BadMagic(magic));
    }
    let version = u32_at(bytes, 4);
    if version != SNAPSHOT_VERSION {
        return Err(SnapshotError::UnsupportedVersion(version));
    }
    let dim = u32_at(bytes, 8);
    if dim != 2 && dim != 3 {
        return Err(SnapshotError::UnsupportedDimension(dim));
    }
    let count = u64::from_le_bytes(bytes[12..20].try_into().unwrap());
    let payload = &bytes[SNAPSHOT_HEADER_LEN..];
    let expected = count as u128 * 2 * dim as u128 * 8;
    if expected != payload.len() as u128 {
        return Err(SnapshotError::LengthMismatch {
            count,
            expected,
            got: payload.len(),
        });
    }
    let dim = dim as usize;
    let n = count as usize;
    let mut positions = Vec::with_capacity(n * dim);
    let mut velocities = Vec::with_capacity(n * dim);
    for (k, chunk) in payload.chunks_exact(8).enumerate() {
        let v = f64::from_le_bytes(chunk.try_into().unwrap());
        if k % (2 * dim) < dim {
            positions.push(v);
        } else {
            velocities.push(v);
        }
    }
    Ok(Snapshot {
        dim,
        positions,
        velocities,
    })
}

fn write(path: &Path, contents: &[u8]) -> Result<(), HarnessError> {
    fs::write(path, contents).map_err(|source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn write_snapshot(path: &Path, snapshot: &Snapshot) -> Result<(), HarnessError> {
    write(path, &snapshot.to_bytes())
}

pub fn write_text_table(path: &Path, snapshot: &Snapshot) -> Result<(), HarnessError> {
    write(path, snapshot.to_text().as_bytes())
}

pub fn diagnostics_csv(records: &[DiagnosticsRecord]) -> String {
    let mut out = String::from(DiagnosticsRecord::CSV_HEADER);
    out.push('\n');
    for r in records {
        out.push_str(&r.csv_row());
        out.push('\n');
    }
    out
}

pub fn write_diagnostics(path: &Path, records: &[DiagnosticsRecord]) -> Result<(), HarnessError> {
    write(path, diagnostics_csv(records).as_bytes())
}

/// File name of the snapshot for `frame`.
pub fn snapshot_name(frame: usize) -> String {
    format!("frame_{frame:04}.hotp")
}

pub fn text_table_name(frame: usize) -> String {
    format!("frame_{frame:04}.txt")
}

pub const DIAGNOSTICS_NAME: &str = "diagnostics.csv";
