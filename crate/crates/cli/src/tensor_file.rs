//! Binary tensor container: magic "MSTK", u32 version, u32 rank, u32 dims,
//! then the payload as 64-bit little-endian reals in row-major order.
//! No compression, so golden files are bit-exact.

use std::path::Path;

use mstk_core::ImageTensor;

use crate::error::{CliError, Result};

pub const MAGIC: [u8; 4] = *b"MSTK";
pub const VERSION: u32 = 1;

pub fn to_bytes(tensor: &ImageTensor) -> Vec<u8> {
    let dims = [
        tensor.channels() as u32,
        tensor.height() as u32,
        tensor.width() as u32,
    ];
    let mut out = Vec::with_capacity(4 + 4 + 4 + 12 + tensor.len() * 8);
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(dims.len() as u32).to_le_bytes());
    for d in dims {
        out.extend_from_slice(&d.to_le_bytes());
    }
    for v in tensor.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn from_bytes(bytes: &[u8], origin: &Path) -> Result<ImageTensor> {
    let err = |message: &str| CliError::format(origin, message);
    let mut cursor = 0usize;
    let take = |cursor: &mut usize, n: usize| -> Result<&[u8]> {
        if *cursor + n > bytes.len() {
            return Err(CliError::format(origin, "truncated tensor file"));
        }
        let slice = &bytes[*cursor..*cursor + n];
        *cursor += n;
        Ok(slice)
    };
    let magic = take(&mut cursor, 4)?;
    if magic != MAGIC {
        return Err(err("bad magic bytes (not a tensor file)"));
    }
    let version = u32::from_le_bytes(take(&mut cursor, 4)?.try_into().unwrap());
    if version != VERSION {
        return Err(CliError::format(
            origin,
            format!("unsupported tensor format version {version}"),
        ));
    }
    let rank = u32::from_le_bytes(take(&mut cursor, 4)?.try_into().unwrap()) as usize;
    if rank != 3 {
        return Err(CliError::format(
            origin,
            format!("tensor has rank {rank}, expected 3 (channels, height, width)"),
        ));
    }
    let mut dims = [0usize; 3];
    for d in &mut dims {
        *d = u32::from_le_bytes(take(&mut cursor, 4)?.try_into().unwrap()) as usize;
    }
    let count: usize = dims.iter().product();
    let payload = take(&mut cursor, count * 8)?;
    if cursor != bytes.len() {
        return Err(err("trailing bytes after tensor payload"));
    }
    let data: Vec<f64> = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    ImageTensor::new(dims[0], dims[1], dims[2], data).map_err(CliError::from)
}

pub fn write_tensor(path: &Path, tensor: &ImageTensor) -> Result<()> {
    std::fs::write(path, to_bytes(tensor)).map_err(CliError::io(path))
}

pub fn read_tensor(path: &Path) -> Result<ImageTensor> {
    let bytes = std::fs::read(path).map_err(CliError::io(path))?;
    from_bytes(&bytes, path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use mstk_core::rng::chacha;
    use std::path::PathBuf;

    #[test]
    fn round_trip_is_bitwise() {
        let mut rng = chacha(1);
        let t = ImageTensor::randn(3, 4, 5, &mut rng);
        let back = from_bytes(&to_bytes(&t), &PathBuf::from("mem")).unwrap();
        assert_eq!(t, back);
        for (a, b) in t.data().iter().zip(back.data()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn golden_bytes_for_a_known_tensor() {
        // pins endianness and layout
        let t = ImageTensor::new(1, 1, 2, vec![1.0, -2.5]).unwrap();
        let bytes = to_bytes(&t);
        let expect: Vec<u8> = [
            b"MSTK".as_slice(),
            &1u32.to_le_bytes(),
            &3u32.to_le_bytes(),
            &1u32.to_le_bytes(),
            &1u32.to_le_bytes(),
            &2u32.to_le_bytes(),
            &1.0f64.to_le_bytes(),
            &(-2.5f64).to_le_bytes(),
        ]
        .concat();
        assert_eq!(bytes, expect);
    }

    #[test]
    fn rejects_malformed_files() {
        let origin = PathBuf::from("mem");
        let t = ImageTensor::new(1, 1, 1, vec![7.0]).unwrap();
        let good = to_bytes(&t);
        assert!(from_bytes(&good[..good.len() - 1], &origin).is_err());
        let mut bad_magic = good.clone();
        bad_magic[0] = b'X';
        assert!(from_bytes(&bad_magic, &origin).is_err());
        let mut bad_version = good.clone();
        bad_version[4] = 9;
        assert!(from_bytes(&bad_version, &origin).is_err());
        let mut trailing = good.clone();
        trailing.push(0);
        assert!(from_bytes(&trailing, &origin).is_err());
    }
}
