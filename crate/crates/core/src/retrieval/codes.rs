use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::numerics::DenseMatrix;

pub const CODES_MAGIC: &[u8; 4] = b"BHC1";

/// Bit-packed binary codes, `ceil(bits / 64)` words per item.
///
/// Bit `b` of an item lives in word `b / 64` at position `b % 64`; a set bit
/// encodes `+1`, a clear bit `-1`. Padding bits past `bits` are always zero.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CodeSet {
    bits: usize,
    n: usize,
    words: Vec<u64>,
}

/// One packed code, borrowed from a [`CodeSet`].
#[derive(Debug, Clone, Copy)]
pub struct CodeRow<'a> {
    pub bits: usize,
    pub words: &'a [u64],
}

#[inline]
pub fn words_for(bits: usize) -> usize {
    bits.div_ceil(64)
}

impl CodeSet {
    /// Packs a matrix of `±1` entries (one row per item).
    pub fn pack(codes: &DenseMatrix) -> Result<CodeSet> {
        let bits = codes.cols();
        if bits == 0 {
            return Err(Error::invalid("codes need at least one bit"));
        }
        let wpi = words_for(bits);
        let mut words = vec![0u64; codes.rows() * wpi];
        for i in 0..codes.rows() {
            let dst = &mut words[i * wpi..(i + 1) * wpi];
            for (b, &v) in codes.row(i).iter().enumerate() {
                if v == 1.0 {
                    dst[b / 64] |= 1u64 << (b % 64);
                } else if v != -1.0 {
                    return Err(Error::invalid(format!(
                        "code entry ({i}, {b}) is {v}, expected -1 or +1"
                    )));
                }
            }
        }
        Ok(CodeSet {
            bits,
            n: codes.rows(),
            words,
        })
    }

    /// Builds from raw words, rejecting nonzero padding.
    pub fn from_words(bits: usize, n: usize, words: Vec<u64>) -> Result<CodeSet> {
        if bits == 0 {
            return Err(Error::invalid("codes need at least one bit"));
        }
        let wpi = words_for(bits);
        if words.len() != n * wpi {
            return Err(Error::invalid(format!(
                "{} words for {n} items of {bits} bits",
                words.len()
            )));
        }
        let set = CodeSet { bits, n, words };
        if let Some(mask) = set.padding_mask() {
            for i in 0..n {
                if set.item(i).words[wpi - 1] & mask != 0 {
                    return Err(Error::invalid(format!("item {i} has nonzero padding bits")));
                }
            }
        }
        Ok(set)
    }

    fn padding_mask(&self) -> Option<u64> {
        let used = self.bits % 64;
        (used != 0).then(|| !((1u64 << used) - 1))
    }

    pub fn unpack(&self) -> DenseMatrix {
        DenseMatrix::from_fn(self.n, self.bits, |i, b| {
            if self.item(i).words[b / 64] >> (b % 64) & 1 == 1 {
                1.0
            } else {
                -1.0
            }
        })
    }

    pub fn bits(&self) -> usize {
        self.bits
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn words_per_item(&self) -> usize {
        words_for(self.bits)
    }

    pub fn words(&self) -> &[u64] {
        &self.words
    }

    #[inline]
    pub fn item(&self, i: usize) -> CodeRow<'_> {
        let wpi = self.words_per_item();
        CodeRow {
            bits: self.bits,
            words: &self.words[i * wpi..(i + 1) * wpi],
        }
    }

    pub fn write_to(&self, mut w: impl Write) -> std::io::Result<()> {
        w.write_all(CODES_MAGIC)?;
        w.write_all(&(self.bits as u32).to_le_bytes())?;
        w.write_all(&(self.n as u64).to_le_bytes())?;
        for word in &self.words {
            w.write_all(&word.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        self.write_to(&mut w)
            .and_then(|_| w.flush())
            .map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<CodeSet> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut r = BufReader::new(file);
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes).map_err(|e| Error::io(path, e))?;
        Self::parse(&bytes).map_err(|msg| Error::format(path, msg))
    }

    /// Parses the `BHC1` layout.
    pub fn parse(bytes: &[u8]) -> std::result::Result<CodeSet, String> {
        if bytes.len() < 16 || &bytes[..4] != CODES_MAGIC {
            return Err("missing BHC1 header".into());
        }
        let bits = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
        let n = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
        if bits == 0 {
            return Err("zero bit length".into());
        }
        let expected = n
            .checked_mul(words_for(bits))
            .and_then(|w| w.checked_mul(8))
            .ok_or("item count overflows")?;
        let body = &bytes[16..];
        if body.len() != expected {
            return Err(format!(
                "expected {expected} payload bytes for {n} items of {bits} bits, found {}",
                body.len()
            ));
        }
        let words = body
            .chunks_exact(8)
            .map(|c| u64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        CodeSet::from_words(bits, n, words).map_err(|e| e.to_string())
    }
}

/// Population count of the XOR of two packed codes.
pub fn hamming(a: CodeRow<'_>, b: CodeRow<'_>) -> Result<u32> {
    if a.bits != b.bits {
        return Err(Error::invalid(format!(
            "hamming between {}-bit and {}-bit codes",
            a.bits, b.bits
        )));
    }
    Ok(hamming_words(a.words, b.words))
}

#[inline]
pub(crate) fn hamming_words(a: &[u64], b: &[u64]) -> u32 {
    a.iter().zip(b).map(|(x, y)| (x ^ y).count_ones()).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::RngState;
    use proptest::prelude::*;

    fn random_codes(n: usize, bits: usize, rng: &mut RngState) -> DenseMatrix {
        DenseMatrix::from_fn(n, bits, |_, _| if rng.unit() < 0.5 { -1.0 } else { 1.0 })
    }

    #[test]
    fn all_ones_low_byte() {
        let set = CodeSet::pack(&DenseMatrix::filled(1, 8, 1.0)).unwrap();
        assert_eq!(set.words(), &[0xFF]);
    }

    #[test]
    fn padding_zero_for_ten_bits() {
        let set = CodeSet::pack(&DenseMatrix::filled(3, 10, 1.0)).unwrap();
        for i in 0..3 {
            assert_eq!(set.item(i).words[0], 0x3FF);
        }
        assert!(CodeSet::from_words(10, 1, vec![1 << 12]).is_err());
    }

    #[test]
    fn roundtrip_64() {
        let codes = random_codes(5, 64, &mut RngState::new(1));
        assert_eq!(CodeSet::pack(&codes).unwrap().unpack(), codes);
    }

    #[test]
    fn rejects_non_binary() {
        let m = DenseMatrix::from_vec(1, 2, vec![1.0, 0.0]).unwrap();
        assert!(CodeSet::pack(&m).is_err());
    }

    #[test]
    fn identical_and_complementary() {
        let codes = random_codes(1, 96, &mut RngState::new(4));
        let neg = codes.map(|v| -v);
        let a = CodeSet::pack(&codes).unwrap();
        let b = CodeSet::pack(&neg).unwrap();
        assert_eq!(hamming(a.item(0), a.item(0)).unwrap(), 0);
        assert_eq!(hamming(a.item(0), b.item(0)).unwrap(), 96);
    }

    #[test]
    fn bit_mismatch_is_error() {
        let a = CodeSet::pack(&DenseMatrix::filled(1, 8, 1.0)).unwrap();
        let b = CodeSet::pack(&DenseMatrix::filled(1, 9, 1.0)).unwrap();
        assert!(hamming(a.item(0), b.item(0)).is_err());
    }

    #[test]
    fn file_format_layout() {
        let set = CodeSet::pack(&DenseMatrix::filled(2, 8, 1.0)).unwrap();
        let mut buf = Vec::new();
        set.write_to(&mut buf).unwrap();
        assert_eq!(&buf[..4], b"BHC1");
        assert_eq!(&buf[4..8], &8u32.to_le_bytes());
        assert_eq!(&buf[8..16], &2u64.to_le_bytes());
        assert_eq!(&buf[16..24], &0xFFu64.to_le_bytes());
        assert_eq!(buf.len(), 32);
        assert_eq!(CodeSet::parse(&buf).unwrap(), set);
        assert!(CodeSet::parse(&buf[..30]).is_err());
        assert!(CodeSet::parse(b"XXXX000000000000").is_err());
    }

    proptest! {
        #[test]
        fn pack_unpack_roundtrip(bits in 1usize..200, n in 0usize..6, seed in any::<u64>()) {
            let codes = random_codes(n, bits, &mut RngState::new(seed));
            let set = CodeSet::pack(&codes).unwrap();
            prop_assert_eq!(set.unpack(), codes);
            let mut buf = Vec::new();
            set.write_to(&mut buf).unwrap();
            prop_assert_eq!(CodeSet::parse(&buf).unwrap(), set);
        }

        #[test]
        fn hamming_is_a_metric(bits in 1usize..160, seed in any::<u64>()) {
            let codes = random_codes(3, bits, &mut RngState::new(seed));
            let set = CodeSet::pack(&codes).unwrap();
            let d = |i: usize, j: usize| hamming(set.item(i), set.item(j)).unwrap();
            prop_assert_eq!(d(0, 1), d(1, 0));
            prop_assert!(d(0, 2) <= d(0, 1) + d(1, 2));
            prop_assert_eq!(d(0, 1) == 0, codes.row(0) == codes.row(1));
            prop_assert_eq!(d(2, 2), 0);
        }
    }
}
