//! Binary feature container.
//!
//! ```text
//! offset  size      field
//! 0       4         magic "MIFI" (4D 49 46 49)
//! 4       1         version = 1
//! 5       1         ndim
//! 6       2         reserved, zero
//! 8       4*ndim    dims, u32 little-endian
//! ...     4*numel   payload, f32 little-endian, row-major
//! ```

use std::fs;
use std::path::Path;

use crate::error::{Error, FormatErrorKind, Result};
use crate::numerics::Tensor;

pub const MAGIC: [u8; 4] = *b"MIFI";
pub const VERSION: u8 = 1;
pub const HEADER_FIXED_LEN: usize = 8;

fn format_err(kind: FormatErrorKind, offset: usize, detail: impl Into<String>) -> Error {
    Error::Format {
        kind,
        offset: offset as u64,
        detail: detail.into(),
    }
}

pub fn encode_tensor(tensor: &Tensor) -> Result<Vec<u8>> {
    let ndim = u8::try_from(tensor.rank())
        .map_err(|_| Error::Shape(format!("rank {} does not fit the container", tensor.rank())))?;
    let mut out = Vec::with_capacity(HEADER_FIXED_LEN + 4 * tensor.rank() + 4 * tensor.numel());
    out.extend_from_slice(&MAGIC);
    out.push(VERSION);
    out.push(ndim);
    out.extend_from_slice(&[0, 0]);
    for &d in tensor.dims() {
        let d = u32::try_from(d)
            .map_err(|_| Error::Shape(format!("dimension {d} does not fit in u32")))?;
        out.extend_from_slice(&d.to_le_bytes());
    }
    for v in tensor.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

pub fn decode_tensor(bytes: &[u8]) -> Result<Tensor> {
    let avail = bytes.len();
    if avail >= 4 && bytes[..4] != MAGIC {
        return Err(format_err(
            FormatErrorKind::BadMagic,
            0,
            format!("expected magic {:02X?}, found {:02X?}", MAGIC, &bytes[..4]),
        ));
    }
    if avail < HEADER_FIXED_LEN {
        return Err(format_err(
            FormatErrorKind::Truncated,
            avail,
            format!("header needs {HEADER_FIXED_LEN} bytes, file has {avail}"),
        ));
    }
    if bytes[4] != VERSION {
        return Err(format_err(
            FormatErrorKind::UnsupportedVersion,
            4,
            format!("version {} (supported: {VERSION})", bytes[4]),
        ));
    }
    let ndim = bytes[5] as usize;
    if ndim == 0 {
        return Err(format_err(FormatErrorKind::ZeroRank, 5, "ndim is zero"));
    }
    if let Some(i) = (6..8).find(|&i| bytes[i] != 0) {
        return Err(format_err(
            FormatErrorKind::ReservedNonZero,
            i,
            format!("reserved byte is {:#04x}", bytes[i]),
        ));
    }
    let dims_end = HEADER_FIXED_LEN + 4 * ndim;
    if avail < dims_end {
        return Err(format_err(
            FormatErrorKind::Truncated,
            avail,
            format!("{ndim} dims need {dims_end} header bytes, file has {avail}"),
        ));
    }
    let mut dims = Vec::with_capacity(ndim);
    let mut payload_bytes: u64 = 4;
    for i in 0..ndim {
        let at = HEADER_FIXED_LEN + 4 * i;
        let d = u32::from_le_bytes(bytes[at..at + 4].try_into().expect("4 bytes"));
        if d == 0 {
            return Err(format_err(
                FormatErrorKind::ZeroDim,
                at,
                format!("dimension {i} is zero"),
            ));
        }
        payload_bytes = payload_bytes
            .checked_mul(d as u64)
            .filter(|&n| n <= usize::MAX as u64 && n <= (usize::MAX - dims_end) as u64)
            .ok_or_else(|| {
                format_err(
                    FormatErrorKind::DimOverflow,
                    at,
                    format!("payload size overflows at dimension {i} ({d})"),
                )
            })?;
        dims.push(d as usize);
    }
    let end = dims_end + payload_bytes as usize;
    if avail < end {
        return Err(format_err(
            FormatErrorKind::Truncated,
            avail,
            format!("payload needs {payload_bytes} bytes ending at {end}, file has {avail}"),
        ));
    }
    if avail > end {
        return Err(format_err(
            FormatErrorKind::TrailingBytes,
            end,
            format!("{} bytes after the payload", avail - end),
        ));
    }
    let mut data = Vec::with_capacity(payload_bytes as usize / 4);
    for (i, chunk) in bytes[dims_end..end].chunks_exact(4).enumerate() {
        let v = f32::from_le_bytes(chunk.try_into().expect("4 bytes"));
        if !v.is_finite() {
            return Err(format_err(
                FormatErrorKind::NonFinite,
                dims_end + 4 * i,
                format!("element {i} is {v}"),
            ));
        }
        data.push(v);
    }
    Tensor::new(dims, data)
}

pub fn save_features(tensor: &Tensor, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_tensor(tensor)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load_features(path: impl AsRef<Path>) -> Result<Tensor> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_tensor(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Rng;
    use proptest::prelude::*;

    fn kind_of(r: Result<Tensor>) -> (FormatErrorKind, u64) {
        match r {
            Err(Error::Format { kind, offset, .. }) => (kind, offset),
            other => panic!("expected format error, got {other:?}"),
        }
    }

    #[test]
    fn header_bytes_are_exact() {
        let t = Tensor::new(vec![2, 1], vec![1.0, -2.5]).unwrap();
        let bytes = encode_tensor(&t).unwrap();
        assert_eq!(
            bytes,
            vec![
                0x4D, 0x49, 0x46, 0x49, 1, 2, 0, 0, //
                2, 0, 0, 0, 1, 0, 0, 0, //
                0x00, 0x00, 0x80, 0x3F, 0x00, 0x00, 0x20, 0xC0,
            ]
        );
    }

    #[test]
    fn full_size_clip_file_length() {
        let t = Tensor::zeros(vec![1024, 4, 7, 7]).unwrap();
        let bytes = encode_tensor(&t).unwrap();
        assert_eq!(bytes.len(), 8 + 4 * 4 + 4 * 200_704);
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.mifi");
        let mut rng = Rng::new(1);
        let t = Tensor::from_fn(vec![3, 2, 2, 5], |_| rng.standard_normal() as f32).unwrap();
        save_features(&t, &path).unwrap();
        assert_eq!(load_features(&path).unwrap(), t);
        assert!(matches!(
            load_features(dir.path().join("missing")),
            Err(Error::Io { .. })
        ));
    }

    #[test]
    fn malformed_inputs() {
        let good = encode_tensor(&Tensor::filled(vec![2, 3], 1.0).unwrap()).unwrap();

        let mut b = good.clone();
        b[3] = b'X';
        assert_eq!(kind_of(decode_tensor(&b)), (FormatErrorKind::BadMagic, 0));

        let mut b = good.clone();
        b[..4].copy_from_slice(b"MIFX");
        assert_eq!(kind_of(decode_tensor(&b)), (FormatErrorKind::BadMagic, 0));

        let mut b = good.clone();
        b[4] = 2;
        assert_eq!(
            kind_of(decode_tensor(&b)),
            (FormatErrorKind::UnsupportedVersion, 4)
        );

        let mut b = good.clone();
        b[5] = 0;
        assert_eq!(kind_of(decode_tensor(&b)), (FormatErrorKind::ZeroRank, 5));

        let mut b = good.clone();
        b[7] = 1;
        assert_eq!(
            kind_of(decode_tensor(&b)),
            (FormatErrorKind::ReservedNonZero, 7)
        );

        assert_eq!(
            kind_of(decode_tensor(&good[..5])),
            (FormatErrorKind::Truncated, 5)
        );
        assert_eq!(
            kind_of(decode_tensor(&good[..10])),
            (FormatErrorKind::Truncated, 10)
        );
        let n = good.len() - 3;
        assert_eq!(
            kind_of(decode_tensor(&good[..n])),
            (FormatErrorKind::Truncated, n as u64)
        );

        let mut b = good.clone();
        b.push(0);
        assert_eq!(
            kind_of(decode_tensor(&b)),
            (FormatErrorKind::TrailingBytes, good.len() as u64)
        );

        let mut b = good.clone();
        b[12..16].copy_from_slice(&0u32.to_le_bytes());
        assert_eq!(kind_of(decode_tensor(&b)), (FormatErrorKind::ZeroDim, 12));

        let mut b = good.clone();
        b[8..12].copy_from_slice(&u32::MAX.to_le_bytes());
        b[12..16].copy_from_slice(&u32::MAX.to_le_bytes());
        assert_eq!(
            kind_of(decode_tensor(&b)),
            (FormatErrorKind::DimOverflow, 12)
        );

        let mut b = good.clone();
        b[16..20].copy_from_slice(&f32::NAN.to_le_bytes());
        assert_eq!(kind_of(decode_tensor(&b)), (FormatErrorKind::NonFinite, 16));
    }

    proptest! {
        #[test]
        fn round_trip_is_bit_exact(
            dims in prop::collection::vec(1usize..5, 1..5),
            seed in any::<u64>(),
        ) {
            let mut rng = Rng::new(seed);
            let t = Tensor::from_fn(dims, |_| (rng.standard_normal() * 1e3) as f32).unwrap();
            let back = decode_tensor(&encode_tensor(&t).unwrap()).unwrap();
            prop_assert_eq!(back.dims(), t.dims());
            let a: Vec<u32> = t.data().iter().map(|v| v.to_bits()).collect();
            let b: Vec<u32> = back.data().iter().map(|v| v.to_bits()).collect();
            prop_assert_eq!(a, b);
        }

        #[test]
        fn arbitrary_bytes_never_panic(bytes in prop::collection::vec(any::<u8>(), 0..64)) {
            let _ = decode_tensor(&bytes);
        }
    }
}
