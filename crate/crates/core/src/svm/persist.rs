//! Binary model file.
//!
//! Layout, big-endian: magic `SLPM`, version u16, kernel tag u8
//! (0 linear, 1 rbf), gamma f64, C f64, bias f64, support-vector rows u32,
//! columns u32, row-major f64 support vectors, then one f64 dual coefficient
//! per row.

use super::{Kernel, SvmError, SvmModel};

pub const MODEL_MAGIC: &[u8; 4] = b"SLPM";
pub const MODEL_FORMAT_VERSION: u16 = 1;

const HEADER_LEN: usize = 4 + 2 + 1 + 8 * 3 + 4 + 4;

pub fn encode_model(model: &SvmModel) -> Vec<u8> {
    let rows = model.support_vector_count();
    let mut out = Vec::with_capacity(HEADER_LEN + 8 * rows * (model.dim() + 1));
    out.extend_from_slice(MODEL_MAGIC);
    out.extend_from_slice(&MODEL_FORMAT_VERSION.to_be_bytes());
    out.push(match model.kernel() {
        Kernel::Linear => 0,
        Kernel::Rbf { .. } => 1,
    });
    out.extend_from_slice(&model.kernel().gamma().to_be_bytes());
    out.extend_from_slice(&model.c().to_be_bytes());
    out.extend_from_slice(&model.bias().to_be_bytes());
    out.extend_from_slice(&(rows as u32).to_be_bytes());
    out.extend_from_slice(&(model.dim() as u32).to_be_bytes());
    for v in model.raw_support_vectors() {
        out.extend_from_slice(&v.to_be_bytes());
    }
    for v in model.dual_coefficients() {
        out.extend_from_slice(&v.to_be_bytes());
    }
    out
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], SvmError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| SvmError::Format(format!("truncated at byte {} (need {n} more)", self.pos)))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u16(&mut self) -> Result<u16, SvmError> {
        Ok(u16::from_be_bytes(self.take(2)?.try_into().expect("2 bytes")))
    }

    fn u32(&mut self) -> Result<u32, SvmError> {
        Ok(u32::from_be_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn f64(&mut self) -> Result<f64, SvmError> {
        Ok(f64::from_be_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

pub fn decode_model(bytes: &[u8]) -> Result<SvmModel, SvmError> {
    let mut cur = Cursor { buf: bytes, pos: 0 };
    if cur.take(4)? != MODEL_MAGIC {
        return Err(SvmError::Format("bad magic bytes".into()));
    }
    let version = cur.u16()?;
    if version != MODEL_FORMAT_VERSION {
        return Err(SvmError::Format(format!("unsupported version {version}")));
    }
    let tag = cur.take(1)?[0];
    let gamma = cur.f64()?;
    let c = cur.f64()?;
    let bias = cur.f64()?;
    let rows = cur.u32()? as usize;
    let cols = cur.u32()? as usize;
    let kernel = match tag {
        0 => Kernel::Linear,
        1 => Kernel::Rbf { gamma },
        t => return Err(SvmError::Format(format!("unknown kernel tag {t}"))),
    };
    let expected = rows
        .checked_mul(cols + 1)
        .and_then(|v| v.checked_mul(8))
        .ok_or_else(|| SvmError::Format("declared size overflows".into()))?;
    if bytes.len() - cur.pos != expected {
        return Err(SvmError::Format(format!(
            "payload is {} bytes, header declares {expected}",
            bytes.len() - cur.pos
        )));
    }
    let svs = (0..rows * cols).map(|_| cur.f64()).collect::<Result<Vec<_>, _>>()?;
    let coefs = (0..rows).map(|_| cur.f64()).collect::<Result<Vec<_>, _>>()?;
    SvmModel::new(kernel, c, bias, cols, svs, coefs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn model() -> SvmModel {
        SvmModel::new(
            Kernel::Rbf { gamma: 0.5 },
            0.01,
            -0.125,
            2,
            vec![1.0, 2.0, 3.0, 4.0],
            vec![0.01, -0.01],
        )
        .unwrap()
    }

    #[test]
    fn header_layout() {
        let bytes = encode_model(&model());
        assert_eq!(&bytes[..4], b"SLPM");
        assert_eq!(&bytes[4..6], &[0, 1]);
        assert_eq!(bytes[6], 1);
        assert_eq!(&bytes[7..15], &0.5f64.to_be_bytes());
        assert_eq!(&bytes[31..35], &2u32.to_be_bytes());
        assert_eq!(&bytes[35..39], &2u32.to_be_bytes());
        assert_eq!(bytes.len(), HEADER_LEN + 8 * 6);
    }

    #[test]
    fn decode_errors() {
        let bytes = encode_model(&model());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(decode_model(&bad).is_err());
        let mut bad = bytes.clone();
        bad[5] = 9;
        assert!(decode_model(&bad).unwrap_err().to_string().contains("version"));
        assert!(decode_model(&bytes[..bytes.len() - 1]).is_err());
        assert!(decode_model(&bytes[..10]).is_err());
        let mut bad = bytes.clone();
        bad[6] = 7;
        assert!(decode_model(&bad).is_err());
    }

    proptest! {
        #[test]
        fn round_trip(
            rows in proptest::collection::vec(proptest::collection::vec(-1e3f64..1e3, 3), 0..8),
            bias in -10.0f64..10.0,
            linear in any::<bool>(),
        ) {
            let coefs: Vec<f64> = (0..rows.len()).map(|i| i as f64 - 2.5).collect();
            let kernel = if linear { Kernel::Linear } else { Kernel::Rbf { gamma: 3.25 } };
            let m = SvmModel::new(kernel, 100.0, bias, 3, rows.concat(), coefs).unwrap();
            let back = decode_model(&encode_model(&m)).unwrap();
            prop_assert_eq!(back, m);
        }
    }
}
