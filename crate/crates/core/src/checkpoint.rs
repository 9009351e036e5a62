//! Flat binary parameter container.
//!
//! Layout: the magic bytes `PNLB1`, then records until end of file. Each
//! record is `name_len: u32`, `name: [u8; name_len]` (UTF-8), `rank: u32`,
//! `dims: [u32; rank]`, and `prod(dims)` little-endian `f32` values. All
//! integers are little-endian.

use std::path::Path;

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 5] = b"PNLB1";

#[derive(Clone, Debug, PartialEq)]
pub struct Record {
    pub name: String,
    pub dims: Vec<usize>,
    pub values: Vec<f32>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Checkpoint {
    pub records: Vec<Record>,
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::Checkpoint(format!(
                "truncated {what} at byte {} (need {n}, have {})",
                self.pos,
                self.buf.len() - self.pos
            )));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes")))
    }
}

impl Checkpoint {
    pub fn push(&mut self, name: impl Into<String>, dims: Vec<usize>, values: Vec<f32>) {
        self.records.push(Record { name: name.into(), dims, values });
    }

    pub fn get(&self, name: &str) -> Option<&Record> {
        self.records.iter().find(|r| r.name == name)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut out = MAGIC.to_vec();
        for r in &self.records {
            let count: usize = r.dims.iter().product();
            if count != r.values.len() {
                return Err(Error::Checkpoint(format!(
                    "record `{}` has dims {:?} but {} values",
                    r.name,
                    r.dims,
                    r.values.len()
                )));
            }
            let as_u32 = |v: usize, what: &str| {
                u32::try_from(v).map_err(|_| Error::Checkpoint(format!("{what} {v} of `{}` overflows u32", r.name)))
            };
            out.extend_from_slice(&as_u32(r.name.len(), "name length")?.to_le_bytes());
            out.extend_from_slice(r.name.as_bytes());
            out.extend_from_slice(&as_u32(r.dims.len(), "rank")?.to_le_bytes());
            for &d in &r.dims {
                out.extend_from_slice(&as_u32(d, "dimension")?.to_le_bytes());
            }
            for v in &r.values {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(buf: &[u8]) -> Result<Self> {
        if buf.len() < MAGIC.len() || &buf[..MAGIC.len()] != MAGIC {
            return Err(Error::Checkpoint("missing PNLB1 magic".into()));
        }
        let mut r = Reader { buf, pos: MAGIC.len() };
        let mut ck = Checkpoint::default();
        while r.pos < buf.len() {
            let name_len = r.u32("name length")? as usize;
            let name = std::str::from_utf8(r.take(name_len, "name")?)
                .map_err(|_| Error::Checkpoint(format!("record name at byte {} is not UTF-8", r.pos)))?
                .to_owned();
            let rank = r.u32("rank")? as usize;
            let dims = (0..rank).map(|_| r.u32("dims").map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
            let count = dims
                .iter()
                .try_fold(1usize, |acc, &d| acc.checked_mul(d))
                .filter(|c| c.checked_mul(4).is_some())
                .ok_or_else(|| Error::Checkpoint(format!("record `{name}` is too large")))?;
            let payload = r.take(count * 4, "payload")?;
            let values = payload.chunks_exact(4).map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes"))).collect();
            ck.records.push(Record { name, dims, values });
        }
        Ok(ck)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn layout_is_exact() {
        let mut ck = Checkpoint::default();
        ck.push("ab", vec![2], vec![1.0, -2.5]);
        let bytes = ck.to_bytes().unwrap();
        let mut want = b"PNLB1".to_vec();
        want.extend([2, 0, 0, 0]);
        want.extend(b"ab");
        want.extend([1, 0, 0, 0, 2, 0, 0, 0]);
        want.extend(1.0f32.to_le_bytes());
        want.extend((-2.5f32).to_le_bytes());
        assert_eq!(bytes, want);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(Checkpoint::from_bytes(b"PNLB2").is_err());
        let mut ck = Checkpoint::default();
        ck.push("x", vec![3], vec![1.0, 2.0, 3.0]);
        let bytes = ck.to_bytes().unwrap();
        let err = Checkpoint::from_bytes(&bytes[..bytes.len() - 1]).unwrap_err();
        assert!(err.to_string().contains("truncated payload"), "{err}");
        ck.push("bad", vec![2], vec![1.0]);
        assert!(ck.to_bytes().is_err());
    }

    proptest! {
        #[test]
        fn round_trip_is_bit_exact(
            recs in prop::collection::vec(
                ("[a-z./_0-9]{1,12}", prop::collection::vec(any::<u32>(), 0..9)),
                0..5,
            )
        ) {
            let mut ck = Checkpoint::default();
            for (name, bits) in recs {
                let values: Vec<f32> = bits.iter().map(|&b| f32::from_bits(b)).collect();
                ck.push(name, vec![1, values.len()], values);
            }
            let bytes = ck.to_bytes().unwrap();
            let back = Checkpoint::from_bytes(&bytes).unwrap();
            prop_assert_eq!(back.to_bytes().unwrap(), bytes);
            for (a, b) in ck.records.iter().zip(&back.records) {
                prop_assert_eq!(&a.name, &b.name);
                let ab: Vec<u32> = a.values.iter().map(|v| v.to_bits()).collect();
                let bb: Vec<u32> = b.values.iter().map(|v| v.to_bits()).collect();
                prop_assert_eq!(ab, bb);
            }
        }
    }
}
