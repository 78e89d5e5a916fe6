//! Output formats: NDJSON records, CSV tables with a provenance comment line,
//! and flat binary trajectory checkpoints with an NDJSON offset index. Every
//! file is written to a temporary sibling and renamed into place.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::solver::Trajectory;
use crate::{Error, Field, Result, TorusGrid};

/// `git describe` of the build, or "unknown" outside a checkout.
pub const GIT_DESCRIBE: &str = env!("LIOUVILLE_GIT_DESCRIBE");

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub git_describe: String,
    pub config_hash: String,
    pub master_seed: u64,
}

impl Provenance {
    /// `config` is the canonical text of the run's configuration.
    pub fn new(config: &str, master_seed: u64) -> Self {
        Provenance { git_describe: GIT_DESCRIBE.to_string(), config_hash: config_hash(config), master_seed }
    }

    fn comment(&self) -> String {
        format!("# git={} config={} seed={}", self.git_describe, self.config_hash, self.master_seed)
    }
}

/// Hex SHA-256.
pub fn config_hash(text: &str) -> String {
    Sha256::digest(text.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::Numerical(format!("{}: {e}", path.display()))
}

/// Runs `fill` on a temp file next to `path` and renames it over `path` on
/// success; on error nothing is left behind.
pub fn atomic_write(path: &Path, fill: impl FnOnce(&mut dyn Write) -> io::Result<()>) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    std::fs::create_dir_all(&dir).map_err(|e| io_err(&dir, e))?;
    let tmp = tempfile::NamedTempFile::new_in(&dir).map_err(|e| io_err(&dir, e))?;
    {
        let mut w = BufWriter::new(tmp.as_file());
        fill(&mut w).map_err(|e| io_err(path, e))?;
        w.flush().map_err(|e| io_err(path, e))?;
    }
    tmp.persist(path).map_err(|e| io_err(path, e.error))?;
    Ok(())
}

/// One JSON object per line, each carrying a `provenance` field.
pub fn write_ndjson<T: Serialize>(path: &Path, records: &[T], prov: &Provenance) -> Result<()> {
    let lines = records
        .iter()
        .map(|r| {
            let mut v = serde_json::to_value(r).map_err(|e| io_err(path, e))?;
            match &mut v {
                Value::Object(m) => {
                    m.insert("provenance".into(), serde_json::to_value(prov).expect("plain struct"));
                }
                _ => return Err(Error::InvalidParameter("NDJSON records must be objects".into())),
            }
            Ok(serde_json::to_string(&v).expect("valid value"))
        })
        .collect::<Result<Vec<_>>>()?;
    atomic_write(path, |w| {
        for l in &lines {
            writeln!(w, "{l}")?;
        }
        Ok(())
    })
}

pub fn read_ndjson(path: &Path) -> Result<Vec<Value>> {
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    text.lines().filter(|l| !l.trim().is_empty()).map(|l| serde_json::from_str(l).map_err(|e| io_err(path, e))).collect()
}

/// CSV with a leading `# git=... config=... seed=...` line.
pub fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>], prov: &Provenance) -> Result<()> {
    let mut body = csv::Writer::from_writer(Vec::new());
    body.write_record(header).map_err(|e| io_err(path, e))?;
    for r in rows {
        if r.len() != header.len() {
            return Err(Error::InvalidParameter(format!("row of {} fields under a {}-column header", r.len(), header.len())));
        }
        body.write_record(r).map_err(|e| io_err(path, e))?;
    }
    let bytes = body.into_inner().map_err(|e| io_err(path, e))?;
    atomic_write(path, |w| {
        writeln!(w, "{}", prov.comment())?;
        w.write_all(&bytes)
    })
}

const MAGIC: &[u8; 8] = b"LVTRAJ01";
/// Magic, 3 u64 and 5 f64 words.
pub const HEADER_BYTES: u64 = 8 + 3 * 8 + 5 * 8;

/// Fixed header of a checkpoint, little-endian.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CheckpointHeader {
    pub n_space: u64,
    pub n_time: u64,
    pub seed: u64,
    pub dt: f64,
    pub dx: f64,
    pub gamma: f64,
    pub epsilon: f64,
    pub t0: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IndexEntry {
    /// "x" or "v".
    pub field: String,
    pub slice: usize,
    pub time: f64,
    /// Byte offset into the binary file.
    pub offset: u64,
    pub len: u64,
}

/// Writes `<base>.bin` (header, then the X slices, then v if present) and
/// `<base>.index.ndjson`. Returns both paths.
pub fn write_checkpoint(base: &Path, tr: &Trajectory, gamma: f64, epsilon: f64, prov: &Provenance) -> Result<(PathBuf, PathBuf)> {
    let g = *tr.x.grid();
    let header = CheckpointHeader {
        n_space: g.n_space() as u64,
        n_time: g.n_time() as u64,
        seed: prov.master_seed,
        dt: g.dt(),
        dx: g.resolution(),
        gamma,
        epsilon,
        t0: g.t0(),
    };
    let bin = base.with_extension("bin");
    let idx = base.with_extension("index.ndjson");
    let mut fields: Vec<(&str, &Field)> = vec![("x", &tr.x)];
    if let Some(v) = &tr.v {
        fields.push(("v", v));
    }
    let slice_bytes = (g.slice_len() * 8) as u64;
    let mut index = Vec::new();
    let mut offset = HEADER_BYTES;
    for (name, _) in &fields {
        for (s, &t) in tr.times.iter().enumerate() {
            index.push(IndexEntry { field: name.to_string(), slice: s, time: t, offset, len: slice_bytes });
            offset += slice_bytes;
        }
    }
    atomic_write(&bin, |w| {
        w.write_all(MAGIC)?;
        for v in [header.n_space, header.n_time, header.seed] {
            w.write_all(&v.to_le_bytes())?;
        }
        for v in [header.dt, header.dx, header.gamma, header.epsilon, header.t0] {
            w.write_all(&v.to_le_bytes())?;
        }
        for (_, f) in &fields {
            for v in f.data() {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    })?;
    write_ndjson(&idx, &index, prov)?;
    Ok((bin, idx))
}

/// Reads a checkpoint back: header, X and (if stored) v.
pub fn read_checkpoint(bin: &Path) -> Result<(CheckpointHeader, Field, Option<Field>)> {
    let mut r = BufReader::new(File::open(bin).map_err(|e| io_err(bin, e))?);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic).map_err(|e| io_err(bin, e))?;
    if &magic != MAGIC {
        return Err(io_err(bin, "not a trajectory checkpoint"));
    }
    let mut word = || -> Result<[u8; 8]> {
        let mut b = [0u8; 8];
        r.read_exact(&mut b).map_err(|e| io_err(bin, e))?;
        Ok(b)
    };
    let n_space = u64::from_le_bytes(word()?);
    let n_time = u64::from_le_bytes(word()?);
    let seed = u64::from_le_bytes(word()?);
    let mut f = [0.0; 5];
    for x in f.iter_mut() {
        *x = f64::from_le_bytes(word()?);
    }
    let header = CheckpointHeader { n_space, n_time, seed, dt: f[0], dx: f[1], gamma: f[2], epsilon: f[3], t0: f[4] };
    let grid = TorusGrid::with_origin(n_space as usize, n_time as usize, header.dt, header.t0)?;
    let mut rest = Vec::new();
    r.read_to_end(&mut rest).map_err(|e| io_err(bin, e))?;
    let vals: Vec<f64> = rest.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
    let len = grid.len();
    match vals.len() {
        l if l == len => Ok((header, Field::from_vec(grid, vals)?, None)),
        l if l == 2 * len => {
            let v = Field::from_vec(grid, vals[len..].to_vec())?;
            Ok((header, Field::from_vec(grid, vals[..len].to_vec())?, Some(v)))
        }
        l => Err(io_err(bin, format!("{l} values for a grid of {len} cells"))),
    }
}
