//! Binary parameter checkpoints.
//!
//! Layout: the 9-byte magic `HDGNN-CK\x01`, then for each parameter in
//! creation order: name length (u32), UTF-8 name, ndim (u32), dims (u64 each),
//! and the values as little-endian f64. Identical parameters give identical
//! bytes.

use std::io::{Read, Write};

use crate::array::Array;
use crate::error::{AutodiffError, Result};
use crate::params::ParameterStore;

pub const CHECKPOINT_MAGIC: &[u8; 9] = b"HDGNN-CK\x01";

pub fn write_checkpoint<W: Write>(store: &ParameterStore, mut w: W) -> Result<()> {
    w.write_all(CHECKPOINT_MAGIC)?;
    for (_, p) in store.iter() {
        let name = p.name.as_bytes();
        w.write_all(&(name.len() as u32).to_le_bytes())?;
        w.write_all(name)?;
        let shape = p.value.shape();
        w.write_all(&(shape.len() as u32).to_le_bytes())?;
        for &d in shape {
            w.write_all(&(d as u64).to_le_bytes())?;
        }
        for v in p.value.data() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn checkpoint_bytes(store: &ParameterStore) -> Vec<u8> {
    let mut buf = Vec::new();
    write_checkpoint(store, &mut buf).expect("writing to a Vec cannot fail");
    buf
}

/// Reads every `(name, array)` entry of a checkpoint.
pub fn read_checkpoint<R: Read>(mut r: R) -> Result<Vec<(String, Array)>> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    if bytes.len() < CHECKPOINT_MAGIC.len() || &bytes[..CHECKPOINT_MAGIC.len()] != CHECKPOINT_MAGIC {
        return Err(AutodiffError::Checkpoint("bad magic header".into()));
    }
    let mut cur = Cursor {
        bytes: &bytes,
        pos: CHECKPOINT_MAGIC.len(),
    };
    let mut out = Vec::new();
    while cur.pos < bytes.len() {
        let name_len = cur.u32()? as usize;
        let name = String::from_utf8(cur.take(name_len)?.to_vec())
            .map_err(|_| AutodiffError::Checkpoint("parameter name is not UTF-8".into()))?;
        let ndim = cur.u32()? as usize;
        let mut shape = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            shape.push(cur.u64()? as usize);
        }
        let count: usize = shape.iter().product();
        let mut data = Vec::with_capacity(count);
        for _ in 0..count {
            data.push(f64::from_le_bytes(cur.take(8)?.try_into().expect("8 bytes")));
        }
        out.push((name, Array::new(shape, data)?));
    }
    Ok(out)
}

/// Loads checkpoint values into an existing store, matching by name.
/// Every stored entry must exist in `store` with the same shape.
pub fn load_into<R: Read>(store: &mut ParameterStore, r: R) -> Result<()> {
    for (name, value) in read_checkpoint(r)? {
        let id = store.id(&name)?;
        store.set_value(id, value)?;
    }
    Ok(())
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(AutodiffError::Checkpoint("truncated checkpoint".into()));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_store() -> ParameterStore {
        let mut s = ParameterStore::new();
        s.add("layer.w", Array::matrix(2, 3, vec![1., 2., 3., 4., 5., 6.5]).unwrap(), true)
            .unwrap();
        s.add("b", Array::scalar(-0.25), true).unwrap();
        s
    }

    #[test]
    fn layout_is_exact() {
        let bytes = checkpoint_bytes(&sample_store());
        assert_eq!(&bytes[..9], b"HDGNN-CK\x01");
        assert_eq!(&bytes[9..13], &7u32.to_le_bytes());
        assert_eq!(&bytes[13..20], b"layer.w");
        assert_eq!(&bytes[20..24], &2u32.to_le_bytes());
        assert_eq!(&bytes[24..32], &2u64.to_le_bytes());
        assert_eq!(&bytes[32..40], &3u64.to_le_bytes());
        assert_eq!(&bytes[40..48], &1.0f64.to_le_bytes());
        let total = 9 + (4 + 7 + 4 + 16 + 48) + (4 + 1 + 4 + 16 + 8);
        assert_eq!(bytes.len(), total);
    }

    #[test]
    fn round_trip_restores_values() {
        let src = sample_store();
        let bytes = checkpoint_bytes(&src);
        let mut dst = sample_store();
        let id = dst.id("b").unwrap();
        dst.set_value(id, Array::scalar(0.0)).unwrap();
        load_into(&mut dst, bytes.as_slice()).unwrap();
        assert_eq!(dst.value(id).data(), &[-0.25]);
        assert_eq!(checkpoint_bytes(&dst), bytes);
    }

    #[test]
    fn rejects_garbage() {
        assert!(read_checkpoint(&b"nope"[..]).is_err());
        let mut bytes = checkpoint_bytes(&sample_store());
        bytes.truncate(bytes.len() - 3);
        assert!(read_checkpoint(bytes.as_slice()).is_err());
    }
}
