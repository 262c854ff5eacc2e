//! Cryptographic primitives used by the marketplace and the streaming layer.
//!
//! Thin wrappers over audited implementations: Ed25519 signatures
//! (`ed25519-dalek`), X25519 key agreement (`x25519-dalek`), and
//! ChaCha20-Poly1305 AEAD (`chacha20poly1305`). This module adds three
//! things on top:
//!
//! * [`KeyPair`] bundles one signing identity and one sealing (encryption)
//!   identity, both derivable from a seed for reproducible test networks.
//! * [`seal`] / [`KeyPair::open_sealed`] implement an ephemeral-key sealed
//!   box: anyone can encrypt to a public key, only the key holder decrypts.
//! * [`CanonicalWriter`] builds the unambiguous byte encodings that all
//!   hashes and signatures in this crate are computed over (big-endian
//!   integers, length-prefixed strings), so two structurally different
//!   messages can never share an encoding.

use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine;
use chacha20poly1305::aead::{Aead, KeyInit};
use chacha20poly1305::{ChaCha20Poly1305, Key, Nonce};
use ed25519_dalek::{Signature, Signer, SigningKey, Verifier, VerifyingKey};
use rand::{CryptoRng, RngCore};
use serde::de::Error as DeError;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};
use thiserror::Error;
use x25519_dalek::{EphemeralSecret, PublicKey as X25519Public, StaticSecret};

/// SHA-256 of a byte string.
pub fn sha256(data: &[u8]) -> [u8; 32] {
    Sha256::digest(data).into()
}

/// Errors from sealed-box decryption and key decoding.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum CryptoError {
    #[error("sealed box too short ({len} bytes, need at least {min})")]
    TruncatedSealedBox { len: usize, min: usize },
    #[error("sealed box failed to authenticate")]
    OpenFailed,
    #[error("invalid {what} encoding")]
    BadEncoding { what: &'static str },
}

macro_rules! b64_bytes {
    ($name:ident, $len:expr, $what:expr) => {
        /// Fixed-size byte string serialized as standard base64.
        #[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
        pub struct $name(pub [u8; $len]);

        impl $name {
            pub fn to_base64(self) -> String {
                BASE64.encode(self.0)
            }

            pub fn from_base64(text: &str) -> Result<Self, CryptoError> {
                let raw = BASE64
                    .decode(text)
                    .map_err(|_| CryptoError::BadEncoding { what: $what })?;
                let arr: [u8; $len] = raw
                    .try_into()
                    .map_err(|_| CryptoError::BadEncoding { what: $what })?;
                Ok(Self(arr))
            }
        }

        impl std::fmt::Debug for $name {
            fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
                write!(f, concat!(stringify!($name), "({})"), self.to_base64())
            }
        }

        impl std::fmt::Display for $name {
            fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
                f.write_str(&self.to_base64())
            }
        }

        impl Serialize for $name {
            fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
                serializer.serialize_str(&self.to_base64())
            }
        }

        impl<'de> Deserialize<'de> for $name {
            fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
                let text = String::deserialize(deserializer)?;
                Self::from_base64(&text).map_err(D::Error::custom)
            }
        }
    };
}

b64_bytes!(KeyBytes, 32, "key");
b64_bytes!(SigBytes, 64, "signature");
b64_bytes!(NonceBytes, 32, "nonce");

/// A party's public identity: one verification key, one sealing key.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PublicKeys {
    /// Ed25519 verification key.
    pub verify: KeyBytes,
    /// X25519 public key for sealed boxes.
    pub seal: KeyBytes,
}

/// A party's private identity: Ed25519 signing key plus X25519 secret.
#[derive(Clone)]
pub struct KeyPair {
    signing: SigningKey,
    sealing: StaticSecret,
}

impl std::fmt::Debug for KeyPair {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("KeyPair")
            .field("public", &self.public())
            .finish_non_exhaustive()
    }
}

impl KeyPair {
    /// Derives both keys deterministically from arbitrary seed bytes.
    /// The signing and sealing secrets use domain-separated hashes, so
    /// neither key reveals anything about the other.
    pub fn from_seed(seed: &[u8]) -> Self {
        let mut sign_input = seed.to_vec();
        sign_input.extend_from_slice(b"sign");
        let mut seal_input = seed.to_vec();
        seal_input.extend_from_slice(b"seal");
        KeyPair {
            signing: SigningKey::from_bytes(&sha256(&sign_input)),
            sealing: StaticSecret::from(sha256(&seal_input)),
        }
    }

    /// Generates a fresh random identity.
    pub fn generate(rng: &mut (impl RngCore + CryptoRng)) -> Self {
        KeyPair {
            signing: SigningKey::generate(rng),
            sealing: StaticSecret::random_from_rng(&mut *rng),
        }
    }

    pub fn verify_key(&self) -> KeyBytes {
        KeyBytes(self.signing.verifying_key().to_bytes())
    }

    pub fn seal_key(&self) -> KeyBytes {
        KeyBytes(X25519Public::from(&self.sealing).to_bytes())
    }

    pub fn public(&self) -> PublicKeys {
        PublicKeys {
            verify: self.verify_key(),
            seal: self.seal_key(),
        }
    }

    /// Signs a message with the Ed25519 key.
    pub fn sign(&self, message: &[u8]) -> SigBytes {
        SigBytes(self.signing.sign(message).to_bytes())
    }

    /// Opens a sealed box addressed to this key pair's sealing key.
    pub fn open_sealed(&self, sealed: &[u8]) -> Result<Vec<u8>, CryptoError> {
        const MIN: usize = 32 + NONCE_LEN + 16; // ephemeral key, nonce, AEAD tag
        if sealed.len() < MIN {
            return Err(CryptoError::TruncatedSealedBox {
                len: sealed.len(),
                min: MIN,
            });
        }
        let eph_bytes: [u8; 32] = sealed[..32].try_into().expect("checked length");
        let eph_pk = X25519Public::from(eph_bytes);
        let shared = self.sealing.diffie_hellman(&eph_pk);
        let key = seal_key_material(shared.as_bytes(), &eph_bytes, &self.seal_key().0);
        let cipher = ChaCha20Poly1305::new(Key::from_slice(&key));
        let nonce = Nonce::from_slice(&sealed[32..32 + NONCE_LEN]);
        cipher
            .decrypt(nonce, &sealed[32 + NONCE_LEN..])
            .map_err(|_| CryptoError::OpenFailed)
    }
}

const NONCE_LEN: usize = 12;

fn seal_key_material(shared: &[u8; 32], eph_pk: &[u8; 32], recipient_pk: &[u8; 32]) -> [u8; 32] {
    let mut hasher = Sha256::new();
    hasher.update(b"seal-key-v1");
    hasher.update(shared);
    hasher.update(eph_pk);
    hasher.update(recipient_pk);
    hasher.finalize().into()
}

/// Verifies an Ed25519 signature. Malformed keys or signatures simply fail.
pub fn verify(verify_key: &KeyBytes, message: &[u8], signature: &SigBytes) -> bool {
    let Ok(vk) = VerifyingKey::from_bytes(&verify_key.0) else {
        return false;
    };
    let sig = Signature::from_bytes(&signature.0);
    vk.verify(message, &sig).is_ok()
}

/// Encrypts `plaintext` so that only the holder of `recipient`'s secret can
/// read it. Layout: ephemeral X25519 public key (32 bytes), random nonce
/// (12 bytes), then the AEAD ciphertext with its tag.
pub fn seal(recipient: &KeyBytes, plaintext: &[u8], rng: &mut (impl RngCore + CryptoRng)) -> Vec<u8> {
    let ephemeral = EphemeralSecret::random_from_rng(&mut *rng);
    let eph_pk = X25519Public::from(&ephemeral);
    let shared = ephemeral.diffie_hellman(&X25519Public::from(recipient.0));
    let key = seal_key_material(shared.as_bytes(), eph_pk.as_bytes(), &recipient.0);
    let cipher = ChaCha20Poly1305::new(Key::from_slice(&key));
    let mut nonce = [0u8; NONCE_LEN];
    rng.fill_bytes(&mut nonce);
    let ciphertext = cipher
        .encrypt(Nonce::from_slice(&nonce), plaintext)
        .expect("ChaCha20-Poly1305 encryption is infallible for in-memory buffers");
    let mut out = Vec::with_capacity(32 + NONCE_LEN + ciphertext.len());
    out.extend_from_slice(eph_pk.as_bytes());
    out.extend_from_slice(&nonce);
    out.extend_from_slice(&ciphertext);
    out
}

/// Builds canonical byte encodings for hashing and signing.
///
/// Integers are big-endian; byte strings and text are length-prefixed with a
/// big-endian `u32`; optional text is a presence byte followed by the value.
/// Because every variable-length field is prefixed, the encoding is
/// injective: distinct field sequences produce distinct byte strings.
#[derive(Debug, Default, Clone)]
pub struct CanonicalWriter {
    buf: Vec<u8>,
}

impl CanonicalWriter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn u8(mut self, v: u8) -> Self {
        self.buf.push(v);
        self
    }

    pub fn u32(mut self, v: u32) -> Self {
        self.buf.extend_from_slice(&v.to_be_bytes());
        self
    }

    pub fn u64(mut self, v: u64) -> Self {
        self.buf.extend_from_slice(&v.to_be_bytes());
        self
    }

    pub fn i64(mut self, v: i64) -> Self {
        self.buf.extend_from_slice(&v.to_be_bytes());
        self
    }

    /// Length-prefixed byte string.
    pub fn bytes(mut self, b: &[u8]) -> Self {
        let len = u32::try_from(b.len()).expect("canonical field exceeds u32 length");
        self.buf.extend_from_slice(&len.to_be_bytes());
        self.buf.extend_from_slice(b);
        self
    }

    /// Length-prefixed UTF-8 text.
    pub fn text(self, s: &str) -> Self {
        self.bytes(s.as_bytes())
    }

    /// Presence byte (0/1) followed by the text when present.
    pub fn opt_text(self, s: Option<&str>) -> Self {
        match s {
            Some(s) => self.u8(1).text(s),
            None => self.u8(0),
        }
    }

    /// Fixed-size field appended without a length prefix.
    pub fn raw(mut self, b: &[u8]) -> Self {
        self.buf.extend_from_slice(b);
        self
    }

    pub fn finish(self) -> Vec<u8> {
        self.buf
    }

    pub fn sha256(self) -> [u8; 32] {
        sha256(&self.buf)
    }
}
