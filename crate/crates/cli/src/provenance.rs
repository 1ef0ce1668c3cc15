//! Provenance headers stamped into every output artifact.
//!
//! Every artifact the CLI writes carries a header identifying the tool
//! version that produced it, the seed (for randomized commands), and a
//! SHA-256 digest of each input file. Runs with identical inputs and seed
//! therefore produce byte-identical artifacts; no timestamps or host
//! details are recorded.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use anyhow::Context;
use serde::Serialize;
use sha2::{Digest, Sha256};

/// Header material for one artifact. Serialized as
/// `{"tool", "version", "seed", "inputs": {path: sha256-hex}}`.
#[derive(Debug, Serialize)]
pub struct Provenance {
    pub tool: &'static str,
    pub version: &'static str,
    pub seed: Option<u64>,
    pub inputs: BTreeMap<String, String>,
}

/// Builds the provenance header for a command run: digests every input
/// file and records the seed when the command is randomized.
pub fn provenance(seed: Option<u64>, inputs: &[&Path]) -> anyhow::Result<Provenance> {
    let mut digests = BTreeMap::new();
    for path in inputs {
        let bytes = std::fs::read(path)
            .with_context(|| format!("reading input {}", path.display()))?;
        digests.insert(path.display().to_string(), sha256_hex(&bytes));
    }
    Ok(Provenance {
        tool: "mtasr",
        version: env!("CARGO_PKG_VERSION"),
        seed,
        inputs: digests,
    })
}

fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    let mut out = String::with_capacity(64);
    for byte in digest.as_slice() {
        let _ = write!(out, "{byte:02x}");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn digest_matches_known_vector() {
        // SHA-256 of the empty string and of "abc" are standard test vectors.
        assert_eq!(
            sha256_hex(b""),
            "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"
        );
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn header_records_inputs_and_seed() {
        let dir = tempfile::tempdir().unwrap();
        let input = dir.path().join("in.jsonl");
        std::fs::write(&input, b"{}\n").unwrap();
        let header = provenance(Some(7), &[&input]).unwrap();
        assert_eq!(header.tool, "mtasr");
        assert_eq!(header.seed, Some(7));
        assert_eq!(header.inputs.len(), 1);
        let digest = header.inputs.get(&input.display().to_string()).unwrap();
        assert_eq!(digest.len(), 64);
    }

    #[test]
    fn missing_input_is_an_error() {
        let missing = Path::new("/nonexistent/definitely-not-here.jsonl");
        assert!(provenance(None, &[missing]).is_err());
    }
}
