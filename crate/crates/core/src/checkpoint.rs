//! Binary field files.
//!
//! Layout, little-endian throughout:
//!
//! | bytes | content |
//! |---|---|
//! | 4 | magic `WFPS` |
//! | 4 | format version (u32) |
//! | 4 + 4 | `nq`, `np` (u32) |
//! | 7 × 8 | `q_min, q_max, p_min, p_max, time, hbar, D` (f64) |
//! | `nq np` × 16 | samples, row-major over `q`, as interleaved `re, im` f64 |

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::sync::Arc;

use num_complex::Complex64;
use thiserror::Error;

use crate::grid::{Field, GridError, PhaseSpaceGrid};

pub const MAGIC: [u8; 4] = *b"WFPS";
pub const VERSION: u32 = 1;
pub const HEADER_BYTES: usize = 4 + 4 + 8 + 7 * 8;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("not a field file (magic {0:?})")]
    BadMagic([u8; 4]),
    #[error("unsupported format version {0} (expected {VERSION})")]
    BadVersion(u32),
    #[error("file truncated: expected {expected} bytes, found {found}")]
    Truncated { expected: u64, found: u64 },
    #[error("trailing data after {expected} bytes")]
    TrailingData { expected: u64 },
    #[error("stored grid does not match the expected grid")]
    GridMismatch,
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// A field plus the physical constants stored with it.
#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub field: Field,
    pub hbar: f64,
    pub diffusion: f64,
}

pub fn encode(field: &Field, hbar: f64, diffusion: f64) -> Vec<u8> {
    let g = &field.grid;
    let mut out = Vec::with_capacity(HEADER_BYTES + 16 * field.values.len());
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(g.nq as u32).to_le_bytes());
    out.extend_from_slice(&(g.np as u32).to_le_bytes());
    for x in [g.q_min, g.q_max, g.p_min, g.p_max, field.time, hbar, diffusion] {
        out.extend_from_slice(&x.to_le_bytes());
    }
    for v in &field.values {
        out.extend_from_slice(&v.re.to_le_bytes());
        out.extend_from_slice(&v.im.to_le_bytes());
    }
    out
}

fn u32_at(b: &[u8], at: usize) -> u32 {
    u32::from_le_bytes(b[at..at + 4].try_into().unwrap())
}

fn f64_at(b: &[u8], at: usize) -> f64 {
    f64::from_le_bytes(b[at..at + 8].try_into().unwrap())
}

pub fn decode(bytes: &[u8]) -> Result<Checkpoint, CheckpointError> {
    let found = bytes.len() as u64;
    if bytes.len() < 4 {
        return Err(CheckpointError::Truncated {
            expected: HEADER_BYTES as u64,
            found,
        });
    }
    let magic: [u8; 4] = bytes[..4].try_into().unwrap();
    if magic != MAGIC {
        return Err(CheckpointError::BadMagic(magic));
    }
    if bytes.len() < HEADER_BYTES {
        return Err(CheckpointError::Truncated {
            expected: HEADER_BYTES as u64,
            found,
        });
    }
    let version = u32_at(bytes, 4);
    if version != VERSION {
        return Err(CheckpointError::BadVersion(version));
    }
    let nq = u32_at(bytes, 8) as usize;
    let np = u32_at(bytes, 12) as usize;
    let h: Vec<f64> = (0..7).map(|k| f64_at(bytes, 16 + 8 * k)).collect();
    let expected = HEADER_BYTES as u64 + 16 * nq as u64 * np as u64;
    if found < expected {
        return Err(CheckpointError::Truncated { expected, found });
    }
    if found > expected {
        return Err(CheckpointError::TrailingData { expected });
    }
    let grid = Arc::new(PhaseSpaceGrid::new(nq, np, (h[0], h[1]), (h[2], h[3]))?);
    let values = bytes[HEADER_BYTES..]
        .chunks_exact(16)
        .map(|c| Complex64::new(f64_at(c, 0), f64_at(c, 8)))
        .collect();
    Ok(Checkpoint {
        field: Field::from_values(grid, values, h[4])?,
        hbar: h[5],
        diffusion: h[6],
    })
}

pub fn write_field(path: &Path, field: &Field, hbar: f64, diffusion: f64) -> Result<(), CheckpointError> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(&encode(field, hbar, diffusion))?;
    w.flush()?;
    Ok(())
}

pub fn read_field(path: &Path) -> Result<Checkpoint, CheckpointError> {
    let mut bytes = Vec::new();
    BufReader::new(File::open(path)?).read_to_end(&mut bytes)?;
    decode(&bytes)
}

/// Reads a field that must live on `grid`; the result shares `grid`.
pub fn read_field_on(path: &Path, grid: &Arc<PhaseSpaceGrid>) -> Result<Checkpoint, CheckpointError> {
    let mut c = read_field(path)?;
    if *c.field.grid != **grid {
        return Err(CheckpointError::GridMismatch);
    }
    c.field.grid = grid.clone();
    Ok(c)
}
