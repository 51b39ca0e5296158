use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::PhtError;

pub const TIMELINE_START: &str = "TIMELINE_START";
pub const TIMELINE_END: &str = "TIMELINE_END";

/// Token classes. The declaration order is the id-assignment order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum TokenClass {
    Structural,
    Static,
    EventName,
    Hierarchical,
    Interval,
    Quantile,
}

impl TokenClass {
    pub const ALL: [TokenClass; 6] = [
        TokenClass::Structural,
        TokenClass::Static,
        TokenClass::EventName,
        TokenClass::Hierarchical,
        TokenClass::Interval,
        TokenClass::Quantile,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TokenClass::Structural => "STRUCTURAL",
            TokenClass::Static => "STATIC",
            TokenClass::EventName => "EVENT_NAME",
            TokenClass::Hierarchical => "HIERARCHICAL",
            TokenClass::Interval => "INTERVAL",
            TokenClass::Quantile => "QUANTILE",
        }
    }
}

impl fmt::Display for TokenClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TokenClass {
    type Err = PhtError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        TokenClass::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| PhtError::InvalidVocabulary(format!("unknown token class `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TokenDescriptor {
    pub surface: String,
    pub class: TokenClass,
}

/// 64-bit FNV-1a.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0000_0100_0000_01b3;
    bytes.iter().fold(OFFSET, |h, &b| (h ^ u64::from(b)).wrapping_mul(PRIME))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Vocabulary {
    tokens: Vec<TokenDescriptor>,
    index: HashMap<String, u32>,
    start: u32,
    end: u32,
    fingerprint: u64,
}

impl Vocabulary {
    /// Builds a vocabulary from descriptors in id order.
    pub fn from_descriptors(tokens: Vec<TokenDescriptor>) -> Result<Self, PhtError> {
        let invalid = |m: String| Err(PhtError::InvalidVocabulary(m));
        if tokens.len() > u32::MAX as usize {
            return invalid("too many tokens".into());
        }
        let mut index = HashMap::with_capacity(tokens.len());
        for (id, t) in tokens.iter().enumerate() {
            if t.surface.is_empty() || t.surface.contains(['\t', '\n', '\r']) {
                return invalid(format!("token {id} has an unusable surface {:?}", t.surface));
            }
            if index.insert(t.surface.clone(), id as u32).is_some() {
                return invalid(format!("duplicate surface `{}`", t.surface));
            }
            let structural = t.surface == TIMELINE_START || t.surface == TIMELINE_END;
            if structural != (t.class == TokenClass::Structural) {
                return invalid(format!("`{}` has class {}", t.surface, t.class));
            }
        }
        let (Some(&start), Some(&end)) = (index.get(TIMELINE_START), index.get(TIMELINE_END)) else {
            return invalid("missing structural tokens".into());
        };
        let mut v = Self { tokens, index, start, end, fingerprint: 0 };
        v.fingerprint = fnv1a64(v.to_tsv().as_bytes());
        Ok(v)
    }

    /// Sorts descriptors by (class, surface) and assigns dense ids.
    pub fn from_unsorted(mut tokens: Vec<TokenDescriptor>) -> Result<Self, PhtError> {
        tokens.sort_by(|a, b| (a.class, &a.surface).cmp(&(b.class, &b.surface)));
        tokens.dedup();
        Self::from_descriptors(tokens)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn start_id(&self) -> u32 {
        self.start
    }

    pub fn end_id(&self) -> u32 {
        self.end
    }

    pub fn fingerprint(&self) -> u64 {
        self.fingerprint
    }

    pub fn id(&self, surface: &str) -> Result<u32, PhtError> {
        self.index
            .get(surface)
            .copied()
            .ok_or_else(|| PhtError::TokenNotInVocabulary(surface.to_string()))
    }

    pub fn get(&self, id: u32) -> Option<&TokenDescriptor> {
        self.tokens.get(id as usize)
    }

    pub fn class(&self, id: u32) -> Option<TokenClass> {
        self.get(id).map(|t| t.class)
    }

    pub fn surface(&self, id: u32) -> Option<&str> {
        self.get(id).map(|t| t.surface.as_str())
    }

    pub fn tokens(&self) -> &[TokenDescriptor] {
        &self.tokens
    }

    pub fn ids_of_class(&self, class: TokenClass) -> impl Iterator<Item = u32> + '_ {
        self.tokens
            .iter()
            .enumerate()
            .filter(move |(_, t)| t.class == class)
            .map(|(i, _)| i as u32)
    }

    /// File form: one `CLASS\tsurface\n` line per id.
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for t in &self.tokens {
            out.push_str(t.class.as_str());
            out.push('\t');
            out.push_str(&t.surface);
            out.push('\n');
        }
        out
    }

    pub fn from_tsv(text: &str) -> Result<Self, PhtError> {
        let mut tokens = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let (class, surface) = line.split_once('\t').ok_or_else(|| {
                PhtError::InvalidVocabulary(format!("line {} has no tab separator", n + 1))
            })?;
            tokens.push(TokenDescriptor { surface: surface.to_string(), class: class.parse()? });
        }
        Self::from_descriptors(tokens)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn d(surface: &str, class: TokenClass) -> TokenDescriptor {
        TokenDescriptor { surface: surface.into(), class }
    }

    fn small() -> Vocabulary {
        Vocabulary::from_unsorted(vec![
            d("QNT_0", TokenClass::Quantile),
            d(TIMELINE_END, TokenClass::Structural),
            d("BP", TokenClass::EventName),
            d(TIMELINE_START, TokenClass::Structural),
            d("SEX:F", TokenClass::Static),
        ])
        .unwrap()
    }

    #[test]
    fn ids_sorted_by_class_then_surface() {
        let v = small();
        let surfaces: Vec<&str> = v.tokens().iter().map(|t| t.surface.as_str()).collect();
        assert_eq!(surfaces, vec![TIMELINE_END, TIMELINE_START, "SEX:F", "BP", "QNT_0"]);
        assert_eq!(v.start_id(), 1);
        assert_eq!(v.end_id(), 0);
    }

    #[test]
    fn fnv_reference_values() {
        assert_eq!(fnv1a64(b""), 0xcbf29ce484222325);
        assert_eq!(fnv1a64(b"a"), 0xaf63dc4c8601ec8c);
        assert_eq!(fnv1a64(b"foobar"), 0x85944171f73967e8);
    }

    #[test]
    fn tsv_round_trip_and_fingerprint() {
        let v = small();
        let text = v.to_tsv();
        assert!(text.starts_with("STRUCTURAL\tTIMELINE_END\nSTRUCTURAL\tTIMELINE_START\n"));
        let back = Vocabulary::from_tsv(&text).unwrap();
        assert_eq!(back, v);
        assert_eq!(back.fingerprint(), fnv1a64(text.as_bytes()));
    }

    #[test]
    fn rejects_invalid() {
        assert!(Vocabulary::from_descriptors(vec![d(TIMELINE_START, TokenClass::Structural)]).is_err());
        assert!(Vocabulary::from_descriptors(vec![
            d(TIMELINE_START, TokenClass::Structural),
            d(TIMELINE_END, TokenClass::Structural),
            d("X", TokenClass::Static),
            d("X", TokenClass::EventName),
        ])
        .is_err());
        assert!(Vocabulary::from_descriptors(vec![
            d(TIMELINE_START, TokenClass::Structural),
            d(TIMELINE_END, TokenClass::EventName),
        ])
        .is_err());
        assert!(Vocabulary::from_tsv("NOPE\tx\n").is_err());
        assert!(Vocabulary::from_tsv("STRUCTURAL TIMELINE_START\n").is_err());
    }
}
