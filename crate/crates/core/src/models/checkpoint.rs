//! Binary parameter checkpoints.
//!
//! Layout of one block:
//!
//! ```text
//! magic  b"VPCK"       4 bytes
//! version 1            1 byte
//! endianness b'L'|b'B' 1 byte
//! reserved             2 bytes (zero)
//! rows  u64            8 bytes, in the tagged byte order
//! cols  u64            8 bytes
//! data  f64 x rows*cols, row-major, in the tagged byte order
//! ```
//!
//! Files may hold several blocks back to back. Writers always emit
//! little-endian; readers accept both tags.

use crate::error::{Result, ViperError};

const MAGIC: &[u8; 4] = b"VPCK";
const HEADER: usize = 24;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

pub fn write_checkpoint(rows: usize, cols: usize, data: &[f64], out: &mut Vec<u8>) -> Result<()> {
    if rows * cols != data.len() {
        return Err(ViperError::domain(format!(
            "checkpoint shape {rows}x{cols} does not match {} values",
            data.len()
        )));
    }
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&[1, b'L', 0, 0]);
    out.extend_from_slice(&(rows as u64).to_le_bytes());
    out.extend_from_slice(&(cols as u64).to_le_bytes());
    for v in data {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(())
}

/// Read one block; returns it and the number of bytes consumed.
pub fn read_checkpoint(bytes: &[u8]) -> Result<(Checkpoint, usize)> {
    if bytes.len() < HEADER {
        return Err(ViperError::parse("checkpoint header truncated"));
    }
    if &bytes[..4] != MAGIC {
        return Err(ViperError::parse("bad checkpoint magic"));
    }
    if bytes[4] != 1 {
        return Err(ViperError::parse(format!("unsupported checkpoint version {}", bytes[4])));
    }
    let big = match bytes[5] {
        b'L' => false,
        b'B' => true,
        t => return Err(ViperError::parse(format!("bad endianness tag {t:#x}"))),
    };
    let word = |b: &[u8]| -> [u8; 8] { b.try_into().expect("8 bytes") };
    let read_u64 = |b: &[u8]| if big { u64::from_be_bytes(word(b)) } else { u64::from_le_bytes(word(b)) };
    let rows = read_u64(&bytes[8..16]) as usize;
    let cols = read_u64(&bytes[16..24]) as usize;
    let n = rows
        .checked_mul(cols)
        .ok_or_else(|| ViperError::parse("checkpoint shape overflows"))?;
    let end = HEADER + 8 * n;
    if bytes.len() < end {
        return Err(ViperError::parse("checkpoint data truncated"));
    }
    let data = bytes[HEADER..end]
        .chunks_exact(8)
        .map(|c| if big { f64::from_be_bytes(word(c)) } else { f64::from_le_bytes(word(c)) })
        .collect();
    Ok((Checkpoint { rows, cols, data }, end))
}

pub fn read_checkpoints(mut bytes: &[u8]) -> Result<Vec<Checkpoint>> {
    let mut out = Vec::new();
    while !bytes.is_empty() {
        let (c, used) = read_checkpoint(bytes)?;
        out.push(c);
        bytes = &bytes[used..];
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn big_endian_blocks_are_readable() {
        let mut b = Vec::new();
        b.extend_from_slice(MAGIC);
        b.extend_from_slice(&[1, b'B', 0, 0]);
        b.extend_from_slice(&1u64.to_be_bytes());
        b.extend_from_slice(&2u64.to_be_bytes());
        b.extend_from_slice(&1.5f64.to_be_bytes());
        b.extend_from_slice(&(-3.0f64).to_be_bytes());
        let (c, used) = read_checkpoint(&b).unwrap();
        assert_eq!(used, b.len());
        assert_eq!(c.data, vec![1.5, -3.0]);
    }

    #[test]
    fn corrupt_blocks_are_rejected() {
        let mut b = Vec::new();
        write_checkpoint(2, 2, &[1.0, 2.0, 3.0, 4.0], &mut b).unwrap();
        assert!(read_checkpoint(&b[..b.len() - 1]).is_err());
        let mut bad = b.clone();
        bad[0] = b'X';
        assert!(read_checkpoint(&bad).is_err());
        assert!(write_checkpoint(3, 2, &[1.0], &mut Vec::new()).is_err());
    }

    proptest! {
        #[test]
        fn blocks_round_trip(rows in 0usize..5, cols in 0usize..5, seed in any::<u64>()) {
            let data: Vec<f64> = (0..rows * cols).map(|i| f64::from_bits(seed.wrapping_mul(i as u64 + 1) >> 2)).collect();
            let mut b = Vec::new();
            write_checkpoint(rows, cols, &data, &mut b).unwrap();
            write_checkpoint(1, 1, &[7.0], &mut b).unwrap();
            let all = read_checkpoints(&b).unwrap();
            prop_assert_eq!(all.len(), 2);
            prop_assert_eq!((all[0].rows, all[0].cols), (rows, cols));
            prop_assert!(all[0].data.iter().zip(&data).all(|(a, b)| a.to_bits() == b.to_bits()));
        }
    }
}
