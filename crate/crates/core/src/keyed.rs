//! Counter-mode keyed randomness.
//!
//! Every draw is `SHA-256(tag ‖ len(key) ‖ key ‖ len(domain) ‖ domain ‖ index)`,
//! so draws are order independent and can be produced from any thread.

use sha2::{Digest, Sha256};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};

const TAG: &[u8] = b"flowstego/keyed/v1";
pub const MIN_KEY_BYTES: usize = 16;

#[derive(Clone, PartialEq, Eq)]
pub struct StegoKey {
    key_bytes: Vec<u8>,
    domain: String,
}

impl std::fmt::Debug for StegoKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("StegoKey")
            .field("key_bytes", &format_args!("<{} bytes>", self.key_bytes.len()))
            .field("domain", &self.domain)
            .finish()
    }
}

impl StegoKey {
    pub fn new(key_bytes: impl Into<Vec<u8>>, domain: impl Into<String>) -> Result<Self> {
        let key_bytes = key_bytes.into();
        if key_bytes.len() < MIN_KEY_BYTES {
            return Err(Error::WeakKey {
                min: MIN_KEY_BYTES,
                got: key_bytes.len(),
            });
        }
        Ok(Self {
            key_bytes,
            domain: domain.into(),
        })
    }

    /// Derives a 32-byte key from an integer seed and a label. Used for
    /// experiment bookkeeping where keys come from a master seed.
    pub fn from_seed(seed: u64, label: &str) -> Self {
        let mut h = Sha256::new();
        h.update(b"flowstego/seed/v1");
        h.update(seed.to_le_bytes());
        h.update((label.len() as u64).to_le_bytes());
        h.update(label.as_bytes());
        Self {
            key_bytes: h.finalize().to_vec(),
            domain: String::new(),
        }
    }

    /// Parses a hex-encoded key.
    pub fn from_hex(hex: &str, domain: impl Into<String>) -> Result<Self> {
        let s = hex.trim();
        if s.len() % 2 != 0 {
            return Err(Error::Format("hex key must have an even number of digits".into()));
        }
        let bytes = (0..s.len())
            .step_by(2)
            .map(|i| {
                u8::from_str_radix(&s[i..i + 2], 16)
                    .map_err(|_| Error::Format(format!("invalid hex key near offset {i}")))
            })
            .collect::<Result<Vec<u8>>>()?;
        Self::new(bytes, domain)
    }

    pub fn domain(&self) -> &str {
        &self.domain
    }

    /// Same key bytes, different counter domain.
    pub fn with_domain(&self, domain: &str) -> Self {
        Self {
            key_bytes: self.key_bytes.clone(),
            domain: domain.to_owned(),
        }
    }

    /// Derives an independent child key, e.g. one per trial.
    pub fn child(&self, label: &str, index: u64) -> Self {
        let mut h = self.hasher();
        h.update(b"child");
        h.update((label.len() as u64).to_le_bytes());
        h.update(label.as_bytes());
        h.update(index.to_le_bytes());
        Self {
            key_bytes: h.finalize().to_vec(),
            domain: String::new(),
        }
    }

    fn hasher(&self) -> Sha256 {
        let mut h = Sha256::new();
        h.update(TAG);
        h.update((self.key_bytes.len() as u64).to_le_bytes());
        h.update(&self.key_bytes);
        h.update((self.domain.len() as u64).to_le_bytes());
        h.update(self.domain.as_bytes());
        h
    }

    fn draw_u53(&self, index: u64) -> u64 {
        let mut h = self.hasher();
        h.update(index.to_le_bytes());
        let digest = h.finalize();
        let mut word = [0u8; 8];
        word.copy_from_slice(&digest[..8]);
        u64::from_le_bytes(word) >> 11
    }

    /// Uniform draw on `[0, 1)`.
    pub fn uniform(&self, index: u64) -> f64 {
        self.draw_u53(index) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform draw on the open interval `(0, 1)`.
    pub fn open_uniform(&self, index: u64) -> f64 {
        (self.draw_u53(index) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
    }

    /// Standard normal draw by inverse-CDF transform.
    pub fn normal(&self, index: u64) -> f64 {
        standard_normal_quantile(self.open_uniform(index))
    }

    /// `count` standard normals at indices `offset..offset+count`.
    pub fn normals(&self, offset: u64, count: usize) -> Vec<f64> {
        (0..count as u64).map(|i| self.normal(offset + i)).collect()
    }

    /// Keyed Fisher-Yates shuffle of `0..n`.
    pub fn permutation(&self, n: usize) -> Vec<usize> {
        let mut p: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            let j = ((self.uniform(i as u64) * (i + 1) as f64) as usize).min(i);
            p.swap(i, j);
        }
        p
    }
}

/// Free-function form of [`StegoKey::uniform`].
pub fn keyed_uniform(key: &StegoKey, index: u64) -> f64 {
    key.uniform(index)
}

pub fn standard_normal_quantile(p: f64) -> f64 {
    Normal::standard().inverse_cdf(p)
}

pub fn standard_normal_cdf(x: f64) -> f64 {
    Normal::standard().cdf(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn key() -> StegoKey {
        StegoKey::new(*b"0123456789abcdef", "test").unwrap()
    }

    #[test]
    fn short_keys_are_rejected() {
        assert!(matches!(
            StegoKey::new(vec![0u8; 15], "x"),
            Err(Error::WeakKey { got: 15, .. })
        ));
    }

    #[test]
    fn draws_are_pure_and_domain_separated() {
        let k = key();
        assert_eq!(k.uniform(0).to_bits(), k.uniform(0).to_bits());
        let mag = k.with_domain("mag");
        let perm = k.with_domain("perm");
        assert_ne!(mag.uniform(7), perm.uniform(7));
        assert_ne!(k.uniform(0), k.uniform(1));
        assert_ne!(k.child("trial", 0), k.child("trial", 1));
    }

    #[test]
    fn ranges() {
        let k = key();
        for i in 0..2000 {
            let u = k.uniform(i);
            assert!((0.0..1.0).contains(&u));
            let o = k.open_uniform(i);
            assert!(o > 0.0 && o < 1.0);
            assert!(k.normal(i).is_finite());
        }
    }

    #[test]
    fn permutation_is_a_bijection() {
        let mut p = key().permutation(257);
        p.sort_unstable();
        assert_eq!(p, (0..257).collect::<Vec<_>>());
    }

    #[test]
    fn hex_keys() {
        let k = StegoKey::from_hex("000102030405060708090a0b0c0d0e0f", "").unwrap();
        assert_eq!(k.key_bytes, (0u8..16).collect::<Vec<_>>());
        assert!(StegoKey::from_hex("0001", "").is_err());
        assert!(StegoKey::from_hex("zz", "").is_err());
    }
}
