//! Flat binary checkpoint format.
//!
//! Layout: magic `TRPLH1\0\0`, then u32 n_users, u32 n_items, u32 dim, then
//! row-major little-endian f64 user vectors, item vectors, margin_a,
//! margin_b, and finally a JSON-encoded [`ModelConfig`] running to EOF.

use std::fs;
use std::io::Write;
use std::path::Path;

use super::{EmbeddingTable, ModelConfig};
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"TRPLH1\0\0";

pub fn save_checkpoint(
    path: impl AsRef<Path>,
    table: &EmbeddingTable,
    cfg: &ModelConfig,
) -> Result<()> {
    let path = path.as_ref();
    assert_eq!(cfg.dim, table.dim(), "config and table disagree on dim");
    let counts = [table.n_users(), table.n_items(), table.dim()];
    let mut bytes = Vec::with_capacity(
        MAGIC.len() + 12 + 8 * (table.n_users() + table.n_items()) * table.dim() + 16,
    );
    bytes.extend_from_slice(MAGIC);
    for c in counts {
        let c = u32::try_from(c).expect("count exceeds u32");
        bytes.extend_from_slice(&c.to_le_bytes());
    }
    for v in table.users_flat().iter().chain(table.items_flat()) {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    bytes.extend_from_slice(&table.margin_a.to_le_bytes());
    bytes.extend_from_slice(&table.margin_b.to_le_bytes());
    serde_json::to_writer(&mut bytes, cfg)?;
    let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(&bytes).map_err(|e| Error::io(path, e))?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<(EmbeddingTable, ModelConfig)> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut cur = Cursor {
        bytes: &bytes,
        pos: 0,
    };

    if cur.take(MAGIC.len())? != MAGIC {
        return Err(Error::CorruptCheckpoint("bad magic".into()));
    }
    let n_users = cur.u32()? as usize;
    let n_items = cur.u32()? as usize;
    let dim = cur.u32()? as usize;
    if n_users == 0 || n_items == 0 || dim == 0 {
        return Err(Error::CorruptCheckpoint(format!(
            "degenerate shape {n_users}x{n_items}x{dim}"
        )));
    }
    let users = cur.f64_vec(n_users * dim)?;
    let items = cur.f64_vec(n_items * dim)?;
    let margin_a = cur.f64()?;
    let margin_b = cur.f64()?;
    let cfg: ModelConfig = serde_json::from_slice(cur.rest())
        .map_err(|e| Error::CorruptCheckpoint(format!("config trailer: {e}")))?;
    if cfg.dim != dim {
        return Err(Error::CorruptCheckpoint(format!(
            "header dim {dim} disagrees with config dim {}",
            cfg.dim
        )));
    }
    Ok((
        EmbeddingTable::from_parts(n_users, n_items, dim, users, items, margin_a, margin_b),
        cfg,
    ))
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::CorruptCheckpoint(format!(
                "truncated at byte {} (wanted {n} more)",
                self.pos
            )));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64_vec(&mut self, n: usize) -> Result<Vec<f64>> {
        let raw = self.take(8 * n)?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }

    fn rest(&self) -> &'a [u8] {
        &self.bytes[self.pos..]
    }
}
