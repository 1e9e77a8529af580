//! Binary frames exchanged between parties.
//!
//! A smashed batch is magic `SLSD`, version u16, group_count u32, group_len
//! u32, record_count u32, then per record a u16 id length, the UTF-8 id and
//! `group_count * group_len` u32 distances. Integers are big-endian.

use thiserror::Error;

use crate::model::SmashedVector;

pub const BATCH_MAGIC: &[u8; 4] = b"SLSD";
pub const BATCH_VERSION: u16 = 1;
const BATCH_HEADER_LEN: usize = 4 + 2 + 4 + 4 + 4;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum WireError {
    #[error("bad magic bytes")]
    BadMagic,
    #[error("unsupported format version {found} (expected {expected})")]
    Version { found: u16, expected: u16 },
    #[error("truncated frame: need {needed} bytes, {available} available")]
    Truncated { needed: usize, available: usize },
    #[error("declared length exceeds the frame: {0}")]
    LengthOverflow(String),
    #[error("batch structure is not uniform: {0}")]
    NonUniform(String),
    #[error("malformed frame: {0}")]
    Malformed(String),
}

pub(crate) struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub(crate) fn new(buf: &'a [u8]) -> Self {
        Reader { buf, pos: 0 }
    }

    pub(crate) fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }

    pub(crate) fn take(&mut self, n: usize) -> Result<&'a [u8], WireError> {
        if n > self.remaining() {
            return Err(WireError::Truncated {
                needed: n,
                available: self.remaining(),
            });
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    pub(crate) fn u8(&mut self) -> Result<u8, WireError> {
        Ok(self.take(1)?[0])
    }

    pub(crate) fn u16(&mut self) -> Result<u16, WireError> {
        Ok(u16::from_be_bytes(self.take(2)?.try_into().expect("2 bytes")))
    }

    pub(crate) fn u32(&mut self) -> Result<u32, WireError> {
        Ok(u32::from_be_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    /// u16 length followed by UTF-8 bytes.
    pub(crate) fn str16(&mut self) -> Result<&'a str, WireError> {
        let n = self.u16()? as usize;
        std::str::from_utf8(self.take(n)?).map_err(|e| WireError::Malformed(e.to_string()))
    }

    pub(crate) fn finish(&self) -> Result<(), WireError> {
        if self.remaining() != 0 {
            return Err(WireError::Malformed(format!("{} trailing bytes", self.remaining())));
        }
        Ok(())
    }
}

pub(crate) fn put_str16(out: &mut Vec<u8>, s: &str) -> Result<(), WireError> {
    let n = u16::try_from(s.len()).map_err(|_| WireError::LengthOverflow(format!("string of {} bytes", s.len())))?;
    out.extend_from_slice(&n.to_be_bytes());
    out.extend_from_slice(s.as_bytes());
    Ok(())
}

pub fn encode_smashed_batch(vs: &[SmashedVector]) -> Result<Vec<u8>, WireError> {
    let first = vs.first().ok_or_else(|| WireError::NonUniform("empty batch".into()))?;
    let (gc, gl) = (first.group_count(), first.group_len());
    if let Some(v) = vs.iter().find(|v| v.group_count() != gc || v.group_len() != gl) {
        return Err(WireError::NonUniform(format!(
            "'{}' has {}x{} groups, batch has {gc}x{gl}",
            v.record_id,
            v.group_count(),
            v.group_len()
        )));
    }
    let too_big = |what: &str| WireError::LengthOverflow(format!("{what} does not fit in u32"));
    let gc32 = u32::try_from(gc).map_err(|_| too_big("group count"))?;
    let gl32 = u32::try_from(gl).map_err(|_| too_big("group length"))?;
    let n32 = u32::try_from(vs.len()).map_err(|_| too_big("record count"))?;

    let mut out = Vec::with_capacity(BATCH_HEADER_LEN + vs.len() * (12 + 4 * gc * gl));
    out.extend_from_slice(BATCH_MAGIC);
    out.extend_from_slice(&BATCH_VERSION.to_be_bytes());
    out.extend_from_slice(&gc32.to_be_bytes());
    out.extend_from_slice(&gl32.to_be_bytes());
    out.extend_from_slice(&n32.to_be_bytes());
    for v in vs {
        put_str16(&mut out, &v.record_id)?;
        for d in v.distances() {
            out.extend_from_slice(&d.to_be_bytes());
        }
    }
    Ok(out)
}

pub fn decode_smashed_batch(bytes: &[u8]) -> Result<Vec<SmashedVector>, WireError> {
    let mut r = Reader::new(bytes);
    if r.take(4)? != BATCH_MAGIC {
        return Err(WireError::BadMagic);
    }
    let version = r.u16()?;
    if version != BATCH_VERSION {
        return Err(WireError::Version {
            found: version,
            expected: BATCH_VERSION,
        });
    }
    let gc = r.u32()? as usize;
    let gl = r.u32()? as usize;
    let n = r.u32()? as usize;
    if gc == 0 || gl == 0 || n == 0 {
        return Err(WireError::NonUniform(format!(
            "degenerate shape {n} records of {gc}x{gl}"
        )));
    }
    // Checked before any allocation sized from the header.
    let per_record = gc
        .checked_mul(gl)
        .and_then(|v| v.checked_mul(4))
        .ok_or_else(|| WireError::LengthOverflow(format!("{gc}x{gl} groups")))?;
    let minimum = per_record
        .checked_add(2)
        .and_then(|v| v.checked_mul(n))
        .ok_or_else(|| WireError::LengthOverflow(format!("{n} records")))?;
    if minimum > r.remaining() {
        return Err(WireError::LengthOverflow(format!(
            "{n} records of {gc}x{gl} need at least {minimum} bytes, frame has {}",
            r.remaining()
        )));
    }
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let id = r.str16()?.to_string();
        let raw = r.take(per_record)?;
        let distances = raw
            .chunks_exact(4)
            .map(|c| u32::from_be_bytes(c.try_into().expect("4 bytes")))
            .collect();
        out.push(SmashedVector::new(id, gl, distances).map_err(|e| WireError::Malformed(e.to_string()))?);
    }
    r.finish()?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn example() -> SmashedVector {
        SmashedVector::from_groups("A-000001", &[vec![6, 3], vec![5, 5], vec![7, 2], vec![5, 5]]).unwrap()
    }

    #[test]
    fn worked_example_layout() {
        let bytes = encode_smashed_batch(&[example()]).unwrap();
        assert_eq!(&bytes[..4], b"SLSD");
        assert_eq!(&bytes[4..6], &[0, 1]);
        assert_eq!(&bytes[6..10], &4u32.to_be_bytes());
        assert_eq!(&bytes[10..14], &2u32.to_be_bytes());
        assert_eq!(&bytes[14..18], &1u32.to_be_bytes());
        assert_eq!(&bytes[18..20], &8u16.to_be_bytes());
        assert_eq!(&bytes[20..28], b"A-000001");
        let payload: Vec<u32> = bytes[28..]
            .chunks_exact(4)
            .map(|c| u32::from_be_bytes(c.try_into().unwrap()))
            .collect();
        assert_eq!(payload, vec![6, 3, 5, 5, 7, 2, 5, 5]);
    }

    #[test]
    fn decode_errors_are_distinct() {
        let bytes = encode_smashed_batch(&[example()]).unwrap();
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert_eq!(decode_smashed_batch(&bad), Err(WireError::BadMagic));
        let mut bad = bytes.clone();
        bad[4..6].copy_from_slice(&9999u16.to_be_bytes());
        assert_eq!(
            decode_smashed_batch(&bad),
            Err(WireError::Version {
                found: 9999,
                expected: 1
            })
        );
        assert!(matches!(
            decode_smashed_batch(&bytes[..bytes.len() - 3]),
            Err(WireError::Truncated { .. })
        ));
        assert!(matches!(
            decode_smashed_batch(&bytes[..12]),
            Err(WireError::Truncated { .. })
        ));
        let mut bad = bytes.clone();
        bad[14..18].copy_from_slice(&u32::MAX.to_be_bytes());
        assert!(matches!(decode_smashed_batch(&bad), Err(WireError::LengthOverflow(_))));
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(matches!(decode_smashed_batch(&extra), Err(WireError::Malformed(_))));
    }

    #[test]
    fn encode_rejects_non_uniform() {
        let other = SmashedVector::from_groups("A-2", &[vec![1, 2, 3]]).unwrap();
        assert!(matches!(
            encode_smashed_batch(&[example(), other]),
            Err(WireError::NonUniform(_))
        ));
        assert!(matches!(encode_smashed_batch(&[]), Err(WireError::NonUniform(_))));
    }

    proptest! {
        #[test]
        fn round_trip(
            gc in 1usize..5,
            gl in 1usize..6,
            ids in proptest::collection::vec("[A-Z0-9-]{1,12}", 1..6),
            seed in any::<u32>(),
        ) {
            let vs: Vec<SmashedVector> = ids
                .iter()
                .enumerate()
                .map(|(i, id)| {
                    let d = (0..gc * gl).map(|k| seed.wrapping_mul(k as u32 + 1).wrapping_add(i as u32)).collect();
                    SmashedVector::new(id.clone(), gl, d).unwrap()
                })
                .collect();
            let bytes = encode_smashed_batch(&vs).unwrap();
            prop_assert_eq!(decode_smashed_batch(&bytes).unwrap(), vs);
        }
    }
}
