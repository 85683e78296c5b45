use sha2::{Digest, Sha256};

use super::metadata::StudyMetadata;

/// Strips patient identifiers and replaces the study id with a salted
/// SHA-256 pseudonym. Subgroup attributes pass through untouched.
#[derive(Debug, Clone)]
pub struct Anonymizer {
    salt: Vec<u8>,
}

impl Anonymizer {
    pub fn new(salt: impl Into<Vec<u8>>) -> Self {
        Self { salt: salt.into() }
    }

    pub fn pseudonym(&self, study_id: &str) -> String {
        let mut h = Sha256::new();
        h.update((self.salt.len() as u64).to_le_bytes());
        h.update(&self.salt);
        h.update(study_id.as_bytes());
        hex::encode(h.finalize())
    }

    /// Idempotent: already de-identified metadata keeps its pseudonym.
    pub fn anonymize(&self, meta: &StudyMetadata) -> StudyMetadata {
        let mut out = meta.clone();
        out.identity = None;
        if !meta.deidentified {
            out.study_id = self.pseudonym(&meta.study_id);
            out.deidentified = true;
        }
        out
    }
}
