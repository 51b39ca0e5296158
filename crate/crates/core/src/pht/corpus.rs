use super::tokenize::Pht;
use super::vocab::Vocabulary;
use super::PhtError;

pub const PHT1_MAGIC: &[u8; 4] = b"PHT1";

/// Token sequences bound to a vocabulary fingerprint. Patient ids travel
/// separately; the binary format does not carry them.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenCorpus {
    pub fingerprint: u64,
    pub sequences: Vec<Vec<u32>>,
}

impl TokenCorpus {
    pub fn from_phts(fingerprint: u64, phts: &[Pht]) -> Self {
        Self { fingerprint, sequences: phts.iter().map(|p| p.tokens.clone()).collect() }
    }

    /// Rebuilds PHTs; `ids` defaults to the sequence index.
    pub fn to_phts(&self, vocab: &Vocabulary, ids: Option<&[String]>) -> Result<Vec<Pht>, PhtError> {
        if self.fingerprint != vocab.fingerprint() {
            return Err(PhtError::InvalidCorpus(format!(
                "corpus fingerprint {:016x} does not match vocabulary {:016x}",
                self.fingerprint,
                vocab.fingerprint()
            )));
        }
        if let Some(ids) = ids {
            if ids.len() != self.sequences.len() {
                return Err(PhtError::InvalidCorpus(format!(
                    "{} patient ids for {} sequences",
                    ids.len(),
                    self.sequences.len()
                )));
            }
        }
        Ok(self
            .sequences
            .iter()
            .enumerate()
            .map(|(i, s)| Pht {
                patient_id: ids.map_or_else(|| i.to_string(), |ids| ids[i].clone()),
                tokens: s.clone(),
                complete: s.last() == Some(&vocab.end_id()),
            })
            .collect())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        encode_pht1(self.fingerprint, &self.sequences)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, PhtError> {
        decode_pht1(bytes)
    }
}

pub fn encode_pht1(fingerprint: u64, sequences: &[Vec<u32>]) -> Vec<u8> {
    let total: usize = sequences.iter().map(|s| 4 + 4 * s.len()).sum();
    let mut out = Vec::with_capacity(16 + total);
    out.extend_from_slice(PHT1_MAGIC);
    out.extend_from_slice(&fingerprint.to_le_bytes());
    out.extend_from_slice(&(sequences.len() as u32).to_le_bytes());
    for s in sequences {
        out.extend_from_slice(&(s.len() as u32).to_le_bytes());
        for id in s {
            out.extend_from_slice(&id.to_le_bytes());
        }
    }
    out
}

pub fn decode_pht1(bytes: &[u8]) -> Result<TokenCorpus, PhtError> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4)? != PHT1_MAGIC {
        return Err(PhtError::InvalidCorpus("bad magic".into()));
    }
    let fingerprint = u64::from_le_bytes(r.take(8)?.try_into().unwrap());
    let count = r.u32()? as usize;
    let mut sequences = Vec::with_capacity(count.min(bytes.len() / 4));
    for _ in 0..count {
        let len = r.u32()? as usize;
        let raw = r.take(len.checked_mul(4).ok_or_else(truncated)?)?;
        sequences.push(raw.chunks_exact(4).map(|c| u32::from_le_bytes(c.try_into().unwrap())).collect());
    }
    if r.pos != bytes.len() {
        return Err(PhtError::InvalidCorpus(format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    Ok(TokenCorpus { fingerprint, sequences })
}

fn truncated() -> PhtError {
    PhtError::InvalidCorpus("truncated".into())
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], PhtError> {
        let end = self.pos.checked_add(n).filter(|e| *e <= self.bytes.len()).ok_or_else(truncated)?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, PhtError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn layout_is_little_endian() {
        let bytes = encode_pht1(0x0102030405060708, &[vec![7, 9]]);
        assert_eq!(
            bytes,
            [
                b'P', b'H', b'T', b'1', 8, 7, 6, 5, 4, 3, 2, 1, 1, 0, 0, 0, 2, 0, 0, 0, 7, 0, 0, 0,
                9, 0, 0, 0
            ]
        );
    }

    #[test]
    fn rejects_damage() {
        let bytes = encode_pht1(1, &[vec![1, 2, 3]]);
        assert!(decode_pht1(&bytes[..bytes.len() - 1]).is_err());
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(decode_pht1(&extra).is_err());
        let mut magic = bytes;
        magic[0] = b'X';
        assert!(decode_pht1(&magic).is_err());
    }

    proptest! {
        #[test]
        fn round_trip(fp in any::<u64>(), seqs in prop::collection::vec(prop::collection::vec(any::<u32>(), 0..20), 0..10)) {
            let c = TokenCorpus { fingerprint: fp, sequences: seqs };
            prop_assert_eq!(TokenCorpus::from_bytes(&c.to_bytes()).unwrap(), c);
        }
    }
}
