use serde::{Deserialize, Serialize};

use super::PhtError;

/// Hierarchical code split rule. A code is cut at its first `max_levels − 1`
/// dots; the remainder (dots included) forms the last token.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CodeScheme {
    pub max_levels: usize,
}

impl Default for CodeScheme {
    fn default() -> Self {
        Self { max_levels: 2 }
    }
}

pub fn decompose_code<'a>(code: &'a str, scheme: &CodeScheme) -> Result<Vec<&'a str>, PhtError> {
    let malformed = || PhtError::MalformedCode(code.to_string());
    if code.is_empty() || code.chars().any(char::is_whitespace) || scheme.max_levels == 0 {
        return Err(malformed());
    }
    let parts: Vec<&str> = code.splitn(scheme.max_levels, '.').collect();
    if parts.iter().any(|p| p.is_empty() || p.starts_with('.') || p.ends_with('.')) {
        return Err(malformed());
    }
    Ok(parts)
}
