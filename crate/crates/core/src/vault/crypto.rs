//! Asymmetric schemes behind a four-operation interface.
//!
//! [`ToyScheme`] is a deterministic hash construction for reproducible
//! simulations. It is NOT secure: anyone holding a public key can forge
//! signatures and unwrap keys sealed to it. [`RsaScheme`] uses RSA-OAEP for
//! key wrapping and PKCS#1 v1.5 / SHA-256 signatures.

use std::fmt;

use rand::rngs::OsRng;
use rand::RngCore;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rsa::pkcs1::{
    DecodeRsaPrivateKey, DecodeRsaPublicKey, EncodeRsaPrivateKey, EncodeRsaPublicKey,
};
use rsa::pkcs1v15::{Signature, SigningKey, VerifyingKey};
use rsa::signature::{SignatureEncoding, Signer, Verifier};
use rsa::{Oaep, RsaPrivateKey, RsaPublicKey};
use sha2::Sha256;

use super::VaultError;
use crate::hash::sha256_parts;

#[derive(Clone, PartialEq, Eq, Hash)]
pub struct PublicKey(pub Vec<u8>);

impl fmt::Debug for PublicKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let n = self.0.len().min(8);
        write!(f, "PublicKey({}..)", hex::encode(&self.0[..n]))
    }
}

#[derive(Clone)]
pub struct KeyPair {
    pub public: PublicKey,
    private: Vec<u8>,
}

impl fmt::Debug for KeyPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("KeyPair")
            .field("public", &self.public)
            .finish_non_exhaustive()
    }
}

impl PartialEq for KeyPair {
    fn eq(&self, other: &Self) -> bool {
        self.public == other.public && self.private == other.private
    }
}

impl Eq for KeyPair {}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KeySeed {
    Deterministic(u64),
    Entropy,
}

pub trait CryptoScheme: Send + Sync {
    fn name(&self) -> &'static str;
    fn keygen(&self, seed: KeySeed) -> Result<KeyPair, VaultError>;
    fn encrypt(&self, to: &PublicKey, plaintext: &[u8]) -> Result<Vec<u8>, VaultError>;
    fn decrypt(&self, key: &KeyPair, ciphertext: &[u8]) -> Result<Vec<u8>, VaultError>;
    fn sign(&self, key: &KeyPair, msg: &[u8]) -> Result<Vec<u8>, VaultError>;
    fn verify(&self, public: &PublicKey, msg: &[u8], signature: &[u8]) -> bool;
}

const TOY_TAG_LEN: usize = 16;

#[derive(Debug, Clone, Copy, Default)]
pub struct ToyScheme;

impl ToyScheme {
    fn public_of(private: &[u8]) -> PublicKey {
        PublicKey(sha256_parts(&[b"toy-pub", private]).0.to_vec())
    }

    fn keystream_xor(public: &PublicKey, data: &[u8]) -> Vec<u8> {
        data.chunks(32)
            .enumerate()
            .flat_map(|(i, block)| {
                let ks = sha256_parts(&[b"toy-enc", &public.0, &(i as u64).to_be_bytes()]);
                block
                    .iter()
                    .zip(ks.0)
                    .map(|(b, k)| b ^ k)
                    .collect::<Vec<_>>()
            })
            .collect()
    }

    fn tag(public: &PublicKey, plaintext: &[u8]) -> [u8; TOY_TAG_LEN] {
        sha256_parts(&[b"toy-tag", &public.0, plaintext]).0[..TOY_TAG_LEN]
            .try_into()
            .unwrap()
    }

    fn signature(public: &PublicKey, msg: &[u8]) -> Vec<u8> {
        sha256_parts(&[b"toy-sig", &public.0, msg]).0.to_vec()
    }
}

impl CryptoScheme for ToyScheme {
    fn name(&self) -> &'static str {
        "toy-sha256"
    }

    fn keygen(&self, seed: KeySeed) -> Result<KeyPair, VaultError> {
        let seed = match seed {
            KeySeed::Deterministic(s) => s,
            KeySeed::Entropy => OsRng.next_u64(),
        };
        let private = sha256_parts(&[b"toy-priv", &seed.to_be_bytes()]).0.to_vec();
        Ok(KeyPair {
            public: Self::public_of(&private),
            private,
        })
    }

    fn encrypt(&self, to: &PublicKey, plaintext: &[u8]) -> Result<Vec<u8>, VaultError> {
        let mut out = Self::keystream_xor(to, plaintext);
        out.extend_from_slice(&Self::tag(to, plaintext));
        Ok(out)
    }

    fn decrypt(&self, key: &KeyPair, ciphertext: &[u8]) -> Result<Vec<u8>, VaultError> {
        if ciphertext.len() < TOY_TAG_LEN {
            return Err(VaultError::Crypto("ciphertext too short".into()));
        }
        let public = Self::public_of(&key.private);
        let (body, tag) = ciphertext.split_at(ciphertext.len() - TOY_TAG_LEN);
        let plain = Self::keystream_xor(&public, body);
        if Self::tag(&public, &plain) != tag {
            return Err(VaultError::Crypto(
                "key does not open this ciphertext".into(),
            ));
        }
        Ok(plain)
    }

    fn sign(&self, key: &KeyPair, msg: &[u8]) -> Result<Vec<u8>, VaultError> {
        Ok(Self::signature(&Self::public_of(&key.private), msg))
    }

    fn verify(&self, public: &PublicKey, msg: &[u8], signature: &[u8]) -> bool {
        Self::signature(public, msg) == signature
    }
}

#[derive(Debug, Clone, Copy)]
pub struct RsaScheme {
    pub bits: usize,
}

impl Default for RsaScheme {
    fn default() -> Self {
        RsaScheme { bits: 2048 }
    }
}

fn crypto_err(e: impl fmt::Display) -> VaultError {
    VaultError::Crypto(e.to_string())
}

impl RsaScheme {
    fn private(key: &KeyPair) -> Result<RsaPrivateKey, VaultError> {
        RsaPrivateKey::from_pkcs1_der(&key.private).map_err(crypto_err)
    }

    fn public(key: &PublicKey) -> Result<RsaPublicKey, VaultError> {
        RsaPublicKey::from_pkcs1_der(&key.0).map_err(crypto_err)
    }
}

impl CryptoScheme for RsaScheme {
    fn name(&self) -> &'static str {
        "rsa-oaep-pkcs1v15-sha256"
    }

    fn keygen(&self, seed: KeySeed) -> Result<KeyPair, VaultError> {
        let private = match seed {
            KeySeed::Deterministic(s) => {
                RsaPrivateKey::new(&mut ChaCha20Rng::seed_from_u64(s), self.bits)
            }
            KeySeed::Entropy => RsaPrivateKey::new(&mut OsRng, self.bits),
        }
        .map_err(crypto_err)?;
        let public = private
            .to_public_key()
            .to_pkcs1_der()
            .map_err(crypto_err)?
            .into_vec();
        let private = private
            .to_pkcs1_der()
            .map_err(crypto_err)?
            .as_bytes()
            .to_vec();
        Ok(KeyPair {
            public: PublicKey(public),
            private,
        })
    }

    fn encrypt(&self, to: &PublicKey, plaintext: &[u8]) -> Result<Vec<u8>, VaultError> {
        Self::public(to)?
            .encrypt(&mut OsRng, Oaep::new::<Sha256>(), plaintext)
            .map_err(crypto_err)
    }

    fn decrypt(&self, key: &KeyPair, ciphertext: &[u8]) -> Result<Vec<u8>, VaultError> {
        Self::private(key)?
            .decrypt(Oaep::new::<Sha256>(), ciphertext)
            .map_err(crypto_err)
    }

    fn sign(&self, key: &KeyPair, msg: &[u8]) -> Result<Vec<u8>, VaultError> {
        let signer = SigningKey::<Sha256>::new(Self::private(key)?);
        Ok(signer.sign(msg).to_vec())
    }

    fn verify(&self, public: &PublicKey, msg: &[u8], signature: &[u8]) -> bool {
        let Ok(pk) = Self::public(public) else {
            return false;
        };
        let Ok(sig) = Signature::try_from(signature) else {
            return false;
        };
        VerifyingKey::<Sha256>::new(pk).verify(msg, &sig).is_ok()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toy_keygen_is_deterministic() {
        let s = ToyScheme;
        assert_eq!(
            s.keygen(KeySeed::Deterministic(7)).unwrap(),
            s.keygen(KeySeed::Deterministic(7)).unwrap()
        );
        assert_ne!(
            s.keygen(KeySeed::Deterministic(7)).unwrap().public,
            s.keygen(KeySeed::Deterministic(8)).unwrap().public
        );
    }

    #[test]
    fn toy_cross_pair_matrix() {
        let s = ToyScheme;
        let pairs: Vec<_> = (0..8)
            .map(|i| s.keygen(KeySeed::Deterministic(i)).unwrap())
            .collect();
        let msg = b"dht snapshot";
        for (i, signer) in pairs.iter().enumerate() {
            let sig = s.sign(signer, msg).unwrap();
            for (j, other) in pairs.iter().enumerate() {
                assert_eq!(s.verify(&other.public, msg, &sig), i == j, "{i} vs {j}");
            }
            let ct = s.encrypt(&signer.public, b"session key").unwrap();
            for (j, other) in pairs.iter().enumerate() {
                assert_eq!(s.decrypt(other, &ct).is_ok(), i == j, "{i} vs {j}");
            }
            assert_eq!(s.decrypt(signer, &ct).unwrap(), b"session key");
        }
    }

    #[test]
    fn rsa_round_trip() {
        let s = RsaScheme { bits: 1024 };
        let a = s.keygen(KeySeed::Deterministic(1)).unwrap();
        let b = s.keygen(KeySeed::Deterministic(2)).unwrap();
        let sig = s.sign(&a, b"payload").unwrap();
        assert!(s.verify(&a.public, b"payload", &sig));
        assert!(!s.verify(&b.public, b"payload", &sig));
        assert!(!s.verify(&a.public, b"payloae", &sig));
        let ct = s.encrypt(&a.public, &[9u8; 32]).unwrap();
        assert_eq!(s.decrypt(&a, &ct).unwrap(), vec![9u8; 32]);
        assert!(s.decrypt(&b, &ct).is_err());
    }
}
