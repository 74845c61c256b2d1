//! Passphrase-encrypted key file.
//!
//! The key material is sealed with XChaCha20-Poly1305 under a key derived by
//! Argon2id. The header (version, KDF parameters, cipher) and the consumer
//! grant map travel in clear but are bound as associated data, so editing a
//! grant without the passphrase breaks decryption. Every edit re-seals the
//! file with a fresh salt and nonce.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use argon2::{Algorithm, Argon2, Params, Version};
use chacha20poly1305::aead::{Aead, KeyInit, Payload};
use chacha20poly1305::{XChaCha20Poly1305, XNonce};
use permadid::encoding::{self, serde_b64url};
use rand::RngCore;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const KEYSTORE_VERSION: u32 = 1;
const SALT_LEN: usize = 16;
const NONCE_LEN: usize = 24;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum KeystoreError {
    #[error("wrong passphrase or tampered keystore")]
    WrongPassphrase,
    #[error("consumer {consumer:?} lacks capability {capability}")]
    PermissionDenied { consumer: String, capability: Capability },
    #[error("keystore already exists at {0}")]
    AlreadyExists(String),
    #[error("unsupported keystore: {0}")]
    Unsupported(String),
    #[error("malformed keystore: {0}")]
    Malformed(String),
    #[error("keystore I/O: {0}")]
    Io(String),
}

impl From<std::io::Error> for KeystoreError {
    fn from(e: std::io::Error) -> Self {
        KeystoreError::Io(e.to_string())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Capability {
    SignTx,
    SignCredential,
    Decrypt,
}

impl Capability {
    pub const ALL: [Capability; 3] = [Capability::SignTx, Capability::SignCredential, Capability::Decrypt];

    pub fn as_str(self) -> &'static str {
        match self {
            Capability::SignTx => "sign_tx",
            Capability::SignCredential => "sign_credential",
            Capability::Decrypt => "decrypt",
        }
    }
}

impl std::fmt::Display for Capability {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Capability {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Capability::ALL
            .into_iter()
            .find(|c| c.as_str() == s.replace('-', "_"))
            .ok_or_else(|| format!("unknown capability {s:?} (expected sign_tx, sign_credential or decrypt)"))
    }
}

pub type Grants = BTreeMap<String, BTreeSet<Capability>>;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct KdfParams {
    pub algorithm: String,
    #[serde(with = "serde_b64url")]
    pub salt: Vec<u8>,
    /// KiB.
    pub memory_cost: u32,
    pub iterations: u32,
    pub parallelism: u32,
}

impl KdfParams {
    /// Argon2id at 19 MiB, 2 passes, 1 lane.
    pub fn recommended(salt: Vec<u8>) -> Self {
        Self {
            algorithm: "argon2id".into(),
            salt,
            memory_cost: 19 * 1024,
            iterations: 2,
            parallelism: 1,
        }
    }

    fn derive(&self, passphrase: &str) -> Result<[u8; 32], KeystoreError> {
        if self.algorithm != "argon2id" {
            return Err(KeystoreError::Unsupported(format!("kdf {}", self.algorithm)));
        }
        let params = Params::new(self.memory_cost, self.iterations, self.parallelism, Some(32))
            .map_err(|e| KeystoreError::Unsupported(e.to_string()))?;
        let mut key = [0u8; 32];
        Argon2::new(Algorithm::Argon2id, Version::V0x13, params)
            .hash_password_into(passphrase.as_bytes(), &self.salt, &mut key)
            .map_err(|e| KeystoreError::Unsupported(e.to_string()))?;
        Ok(key)
    }
}

/// On-disk form.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct KeystoreFile {
    pub version: u32,
    pub kdf: KdfParams,
    pub cipher: String,
    #[serde(with = "serde_b64url")]
    pub nonce: Vec<u8>,
    #[serde(with = "serde_b64url")]
    pub ciphertext: Vec<u8>,
    pub grants: Grants,
}

impl KeystoreFile {
    fn associated_data(&self) -> Vec<u8> {
        encoding::canonical_json(&serde_json::json!({
            "version": self.version,
            "kdf": self.kdf,
            "cipher": self.cipher,
            "grants": self.grants,
        }))
    }
}

/// Decrypted contents: secret keys by role, as raw bytes.
#[derive(Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct KeyMaterial {
    pub label: String,
    pub role: String,
    #[serde(with = "serde_b64url")]
    pub auth_key: [u8; 32],
    #[serde(with = "serde_b64url")]
    pub name_key: [u8; 32],
    #[serde(default, skip_serializing_if = "Option::is_none", with = "opt_b64url")]
    pub bbs_key: Option<[u8; 32]>,
}

impl std::fmt::Debug for KeyMaterial {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("KeyMaterial")
            .field("label", &self.label)
            .field("role", &self.role)
            .finish_non_exhaustive()
    }
}

mod opt_b64url {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &Option<[u8; 32]>, s: S) -> Result<S::Ok, S::Error> {
        match v {
            Some(bytes) => s.serialize_str(&permadid::encoding::b64url(bytes)),
            None => s.serialize_none(),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<[u8; 32]>, D::Error> {
        let Some(text) = Option::<String>::deserialize(d)? else {
            return Ok(None);
        };
        permadid::encoding::b64url_decode(&text)
            .and_then(|b| <[u8; 32]>::try_from(b).ok())
            .map(Some)
            .ok_or_else(|| serde::de::Error::custom("expected 32 base64url bytes"))
    }
}

/// An opened keystore.
pub struct Keystore {
    pub material: KeyMaterial,
    pub grants: Grants,
}

impl Keystore {
    pub fn authorize(&self, consumer: &str, capability: Capability) -> Result<(), KeystoreError> {
        check_grant(&self.grants, consumer, capability)
    }
}

fn check_grant(grants: &Grants, consumer: &str, capability: Capability) -> Result<(), KeystoreError> {
    if grants.get(consumer).is_some_and(|caps| caps.contains(&capability)) {
        Ok(())
    } else {
        Err(KeystoreError::PermissionDenied {
            consumer: consumer.to_owned(),
            capability,
        })
    }
}

fn seal(material: &KeyMaterial, passphrase: &str, grants: Grants, kdf: Option<KdfParams>) -> Result<KeystoreFile, KeystoreError> {
    let mut rng = rand::rngs::OsRng;
    let mut salt = vec![0u8; SALT_LEN];
    rng.fill_bytes(&mut salt);
    let kdf = match kdf {
        Some(k) => KdfParams { salt, ..k },
        None => KdfParams::recommended(salt),
    };
    let mut nonce = vec![0u8; NONCE_LEN];
    rng.fill_bytes(&mut nonce);
    let mut file = KeystoreFile {
        version: KEYSTORE_VERSION,
        kdf,
        cipher: "xchacha20poly1305".into(),
        nonce,
        ciphertext: Vec::new(),
        grants,
    };
    let key = file.kdf.derive(passphrase)?;
    let plaintext = serde_json::to_vec(material).expect("key material serializes");
    file.ciphertext = XChaCha20Poly1305::new(&key.into())
        .encrypt(
            XNonce::from_slice(&file.nonce),
            Payload {
                msg: &plaintext,
                aad: &file.associated_data(),
            },
        )
        .expect("encryption does not fail");
    Ok(file)
}

fn unseal(file: &KeystoreFile, passphrase: &str) -> Result<KeyMaterial, KeystoreError> {
    if file.version != KEYSTORE_VERSION {
        return Err(KeystoreError::Unsupported(format!("version {}", file.version)));
    }
    if file.cipher != "xchacha20poly1305" || file.nonce.len() != NONCE_LEN {
        return Err(KeystoreError::Unsupported(format!("cipher {}", file.cipher)));
    }
    let key = file.kdf.derive(passphrase)?;
    let plaintext = XChaCha20Poly1305::new(&key.into())
        .decrypt(
            XNonce::from_slice(&file.nonce),
            Payload {
                msg: &file.ciphertext,
                aad: &file.associated_data(),
            },
        )
        .map_err(|_| KeystoreError::WrongPassphrase)?;
    serde_json::from_slice(&plaintext).map_err(|e| KeystoreError::Malformed(e.to_string()))
}

fn read(path: &Path) -> Result<KeystoreFile, KeystoreError> {
    let bytes = fs::read(path)?;
    serde_json::from_slice(&bytes).map_err(|e| KeystoreError::Malformed(e.to_string()))
}

fn write(path: &Path, file: &KeystoreFile) -> Result<(), KeystoreError> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, serde_json::to_vec_pretty(file).expect("keystore serializes"))?;
    fs::rename(&tmp, path)?;
    Ok(())
}

/// Creates a new keystore; fails if `path` exists. `kdf` overrides the
/// recommended Argon2 cost (the salt is always fresh).
pub fn create(
    path: &Path,
    passphrase: &str,
    material: &KeyMaterial,
    grants: Grants,
    kdf: Option<KdfParams>,
) -> Result<KeystoreFile, KeystoreError> {
    if path.exists() {
        return Err(KeystoreError::AlreadyExists(path.display().to_string()));
    }
    let file = seal(material, passphrase, grants, kdf)?;
    write(path, &file)?;
    Ok(file)
}

pub fn open(path: &Path, passphrase: &str) -> Result<Keystore, KeystoreError> {
    let file = read(path)?;
    let material = unseal(&file, passphrase)?;
    Ok(Keystore {
        material,
        grants: file.grants,
    })
}

/// Opens for `consumer`, failing unless it holds `capability`.
pub fn open_for(path: &Path, passphrase: &str, consumer: &str, capability: Capability) -> Result<Keystore, KeystoreError> {
    let ks = open(path, passphrase)?;
    ks.authorize(consumer, capability)?;
    Ok(ks)
}

fn edit(path: &Path, passphrase: &str, change: impl FnOnce(&mut Grants)) -> Result<Grants, KeystoreError> {
    let file = read(path)?;
    let material = unseal(&file, passphrase)?;
    let mut grants = file.grants;
    change(&mut grants);
    let kdf = KdfParams {
        salt: Vec::new(),
        ..file.kdf
    };
    write(path, &seal(&material, passphrase, grants.clone(), Some(kdf))?)?;
    Ok(grants)
}

pub fn grant(path: &Path, passphrase: &str, consumer: &str, capability: Capability) -> Result<Grants, KeystoreError> {
    edit(path, passphrase, |g| {
        g.entry(consumer.to_owned()).or_default().insert(capability);
    })
}

pub fn revoke(path: &Path, passphrase: &str, consumer: &str, capability: Capability) -> Result<Grants, KeystoreError> {
    edit(path, passphrase, |g| {
        if let Some(caps) = g.get_mut(consumer) {
            caps.remove(&capability);
            if caps.is_empty() {
                g.remove(consumer);
            }
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fast() -> Option<KdfParams> {
        Some(KdfParams {
            memory_cost: 256,
            iterations: 1,
            ..KdfParams::recommended(Vec::new())
        })
    }

    fn material() -> KeyMaterial {
        KeyMaterial {
            label: "alice".into(),
            role: "holder".into(),
            auth_key: [7; 32],
            name_key: [8; 32],
            bbs_key: Some([9; 32]),
        }
    }

    #[test]
    fn roundtrip_and_wrong_passphrase() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("k.json");
        create(&path, "pw", &material(), Grants::new(), fast()).unwrap();
        assert_eq!(open(&path, "pw").unwrap().material, material());
        assert_eq!(open(&path, "nope").err(), Some(KeystoreError::WrongPassphrase));
        assert!(matches!(
            create(&path, "pw", &material(), Grants::new(), fast()),
            Err(KeystoreError::AlreadyExists(_))
        ));
    }

    #[test]
    fn tampered_grants_fail_authentication() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("k.json");
        create(&path, "pw", &material(), Grants::new(), fast()).unwrap();
        let mut file = read(&path).unwrap();
        file.grants.insert("evil".into(), [Capability::SignTx].into());
        write(&path, &file).unwrap();
        assert_eq!(open(&path, "pw").err(), Some(KeystoreError::WrongPassphrase));
    }

    #[test]
    fn revoked_capability_is_denied() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("k.json");
        create(&path, "pw", &material(), Grants::new(), fast()).unwrap();
        grant(&path, "pw", "demo-app", Capability::SignCredential).unwrap();
        assert!(open_for(&path, "pw", "demo-app", Capability::SignCredential).is_ok());
        let before = read(&path).unwrap();
        revoke(&path, "pw", "demo-app", Capability::SignCredential).unwrap();
        let after = read(&path).unwrap();
        assert_ne!(before.kdf.salt, after.kdf.salt);
        assert!(after.grants.is_empty());
        assert!(matches!(
            open_for(&path, "pw", "demo-app", Capability::SignCredential),
            Err(KeystoreError::PermissionDenied { .. })
        ));
    }
}
