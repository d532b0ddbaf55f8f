//! `FFT1` tensor serialization: magic, rank (u32), extents (u32 each),
//! dtype tag (u8, 0 = f64, 1 = f32), then the little-endian row-major payload.

use std::io::{Read, Write};

use super::Tensor;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"FFT1";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DType {
    F64 = 0,
    F32 = 1,
}

pub fn write_tensor<W: Write>(w: &mut W, t: &Tensor, dtype: DType) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&(t.shape().len() as u32).to_le_bytes())?;
    for &e in t.shape() {
        w.write_all(&(e as u32).to_le_bytes())?;
    }
    w.write_all(&[dtype as u8])?;
    match dtype {
        DType::F64 => {
            let mut buf = Vec::with_capacity(t.len() * 8);
            t.data().iter().for_each(|v| buf.extend_from_slice(&v.to_le_bytes()));
            w.write_all(&buf)?;
        }
        DType::F32 => {
            let mut buf = Vec::with_capacity(t.len() * 4);
            t.data()
                .iter()
                .for_each(|&v| buf.extend_from_slice(&(v as f32).to_le_bytes()));
            w.write_all(&buf)?;
        }
    }
    Ok(())
}

pub fn tensor_bytes(t: &Tensor, dtype: DType) -> Vec<u8> {
    let mut out = Vec::new();
    write_tensor(&mut out, t, dtype).expect("writing to a Vec cannot fail");
    out
}

/// Byte reader that tracks its offset for error reporting.
pub struct Cursor<R> {
    inner: R,
    offset: u64,
}

impl<R: Read> Cursor<R> {
    pub fn new(inner: R) -> Self {
        Self { inner, offset: 0 }
    }

    pub fn offset(&self) -> u64 {
        self.offset
    }

    pub fn bytes(&mut self, n: usize) -> Result<Vec<u8>> {
        let mut buf = vec![0u8; n];
        let mut got = 0;
        while got < n {
            match self.inner.read(&mut buf[got..]) {
                Ok(0) => {
                    return Err(Error::format(
                        self.offset + got as u64,
                        format!("truncated: wanted {n} bytes, got {got}"),
                    ))
                }
                Ok(k) => got += k,
                Err(e) if e.kind() == std::io::ErrorKind::Interrupted => {}
                Err(e) => return Err(e.into()),
            }
        }
        self.offset += n as u64;
        Ok(buf)
    }

    pub fn array<const N: usize>(&mut self) -> Result<[u8; N]> {
        let v = self.bytes(N)?;
        Ok(v.try_into().expect("length checked"))
    }

    pub fn u8(&mut self) -> Result<u8> {
        Ok(self.array::<1>()?[0])
    }

    pub fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.array()?))
    }

    pub fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.array()?))
    }

    pub fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.array()?))
    }

    /// Returns true when no bytes remain.
    pub fn at_end(&mut self) -> Result<bool> {
        let mut probe = [0u8; 1];
        loop {
            match self.inner.read(&mut probe) {
                Ok(0) => return Ok(true),
                Ok(_) => return Ok(false),
                Err(e) if e.kind() == std::io::ErrorKind::Interrupted => {}
                Err(e) => return Err(e.into()),
            }
        }
    }

    pub fn expect_magic(&mut self, magic: &[u8; 4]) -> Result<()> {
        let at = self.offset;
        let got = self.array::<4>()?;
        if &got != magic {
            return Err(Error::format(
                at,
                format!(
                    "bad magic {:?}, expected {:?}",
                    String::from_utf8_lossy(&got),
                    String::from_utf8_lossy(magic)
                ),
            ));
        }
        Ok(())
    }

    /// Reads one FFT1 tensor; returns the tensor and its on-disk dtype.
    pub fn tensor(&mut self) -> Result<(Tensor, DType)> {
        self.expect_magic(MAGIC)?;
        let rank_at = self.offset;
        let rank = self.u32()? as usize;
        if rank == 0 || rank > 8 {
            return Err(Error::format(rank_at, format!("implausible rank {rank}")));
        }
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            let at = self.offset;
            let e = self.u32()? as usize;
            if e == 0 {
                return Err(Error::format(at, "zero extent"));
            }
            shape.push(e);
        }
        let n: usize = shape
            .iter()
            .try_fold(1usize, |acc, &e| acc.checked_mul(e))
            .filter(|&n| n <= 1 << 32)
            .ok_or_else(|| Error::format(rank_at, "tensor too large"))?;
        let tag_at = self.offset;
        let (data, dtype) = match self.u8()? {
            0 => (
                self.bytes(n * 8)?
                    .chunks_exact(8)
                    .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                    .collect::<Vec<_>>(),
                DType::F64,
            ),
            1 => (
                self.bytes(n * 4)?
                    .chunks_exact(4)
                    .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
                    .collect(),
                DType::F32,
            ),
            t => return Err(Error::format(tag_at, format!("unknown dtype tag {t}"))),
        };
        Ok((Tensor::new(shape, data)?, dtype))
    }
}

pub fn read_tensor<R: Read>(r: R) -> Result<Tensor> {
    Ok(Cursor::new(r).tensor()?.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn header_layout() {
        let t = Tensor::new(vec![2, 3], vec![1.0; 6]).unwrap();
        let b = tensor_bytes(&t, DType::F64);
        assert_eq!(&b[..4], b"FFT1");
        assert_eq!(&b[4..8], &2u32.to_le_bytes());
        assert_eq!(&b[8..12], &2u32.to_le_bytes());
        assert_eq!(&b[12..16], &3u32.to_le_bytes());
        assert_eq!(b[16], 0);
        assert_eq!(b.len(), 17 + 48);
        assert_eq!(tensor_bytes(&t, DType::F32).len(), 17 + 24);
    }

    #[test]
    fn corrupt_input_reports_offset() {
        let t = Tensor::new(vec![4], vec![1.0; 4]).unwrap();
        let mut b = tensor_bytes(&t, DType::F64);
        b.truncate(20);
        // reported where the bytes ran out
        match read_tensor(&b[..]) {
            Err(Error::Format { offset, .. }) => assert_eq!(offset, 20),
            other => panic!("{other:?}"),
        }
        let mut b = tensor_bytes(&t, DType::F64);
        b[0] = b'X';
        assert!(matches!(read_tensor(&b[..]), Err(Error::Format { offset: 0, .. })));
    }

    proptest! {
        #[test]
        fn f64_round_trip_is_bit_exact(
            rows in 1usize..6,
            cols in 1usize..6,
            seed in proptest::collection::vec(-1e300f64..1e300, 36),
        ) {
            let data = seed[..rows * cols].to_vec();
            let t = Tensor::new(vec![rows, cols], data).unwrap();
            let back = read_tensor(&tensor_bytes(&t, DType::F64)[..]).unwrap();
            prop_assert_eq!(back.shape(), t.shape());
            for (a, b) in back.data().iter().zip(t.data()) {
                prop_assert_eq!(a.to_bits(), b.to_bits());
            }
        }

        #[test]
        fn reshape_round_trip_is_bit_exact(data in proptest::collection::vec(-5.0f64..5.0, 24)) {
            let t = Tensor::new(vec![4, 6], data).unwrap();
            let back = t.reshape(vec![24]).unwrap().reshape(vec![4, 6]).unwrap();
            prop_assert_eq!(back.data(), t.data());
        }
    }
}
