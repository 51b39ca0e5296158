//! The server stage may only see checkpoint bytes and the shared vocabulary.

const SERVER: &str = include_str!("../src/federation/server.rs");

#[test]
fn server_source_has_no_file_access() {
    let forbidden = [
        "std::fs",
        "fs::",
        "File",
        "OpenOptions",
        "read_to_string",
        "io::Read",
        "BufRead",
        "Path",
        "decode_pht1",
        "TokenCorpus",
        "load_client_corpus",
        "read_event_stream",
        "include_bytes",
        "include_str",
        "env::",
        "Command",
    ];
    for (n, line) in SERVER.lines().enumerate() {
        if line.trim_start().starts_with("//") {
            continue;
        }
        for pat in forbidden {
            assert!(!line.contains(pat), "server.rs:{}: `{pat}` in `{}`", n + 1, line.trim());
        }
    }
}

#[test]
fn server_imports_only_whitelisted_modules() {
    let allowed = [
        "use rand::",
        "use rand_chacha::",
        "use rayon::",
        "use sha2::",
        "use super::manifest::",
        "use super::scenario::",
        "use super::FederationError",
        "use crate::model::",
        "use crate::pht::{detokenize, encode_pht1, fnv1a64, Pht, TokenClass, TokenizationConfig, Vocabulary}",
        "use crate::rng::",
    ];
    for line in SERVER.lines().filter(|l| l.starts_with("use ")) {
        assert!(allowed.iter().any(|a| line.starts_with(a)), "unexpected import `{line}`");
    }
}
