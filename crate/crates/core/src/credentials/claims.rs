//! Claim values, path flattening and the canonical message vector.

use std::collections::BTreeMap;
use std::fmt;

use chrono::NaiveDate;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::Value;

use crate::bbs::{self, Scalar};
use crate::did::Did;

use super::CredentialError;

/// Reserved path holding the subject DID.
pub const SUBJECT_ID_PATH: &str = "id";
/// Reserved path holding the holder's base58 Ed25519 public key.
pub const HOLDER_KEY_PATH: &str = "publicKey";

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ClaimValue {
    String(String),
    Integer(i64),
    Boolean(bool),
    /// Calendar date, rendered `YYYY-MM-DD`. Encodes exactly like the
    /// equivalent string.
    Date(NaiveDate),
}

impl ClaimValue {
    /// Strings of the exact form `YYYY-MM-DD` become dates.
    pub fn from_text(text: &str) -> Self {
        match NaiveDate::parse_from_str(text, "%Y-%m-%d") {
            Ok(d) if d.format("%Y-%m-%d").to_string() == text => ClaimValue::Date(d),
            _ => ClaimValue::String(text.to_owned()),
        }
    }

    pub fn to_json(&self) -> Value {
        match self {
            ClaimValue::String(s) => Value::String(s.clone()),
            ClaimValue::Integer(i) => Value::from(*i),
            ClaimValue::Boolean(b) => Value::Bool(*b),
            ClaimValue::Date(d) => Value::String(d.format("%Y-%m-%d").to_string()),
        }
    }

    /// JSON text of the value: `25`, `true`, `"Alice"`, `"1990-04-01"`.
    pub fn canonical(&self) -> String {
        self.to_json().to_string()
    }

    pub fn from_json(path: &str, v: &Value) -> Result<Self, CredentialError> {
        match v {
            Value::String(s) => Ok(Self::from_text(s)),
            Value::Bool(b) => Ok(ClaimValue::Boolean(*b)),
            Value::Number(n) => n
                .as_i64()
                .map(ClaimValue::Integer)
                .ok_or_else(|| CredentialError::NonScalarValue(path.to_owned())),
            _ => Err(CredentialError::NonScalarValue(path.to_owned())),
        }
    }
}

impl fmt::Display for ClaimValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ClaimValue::String(s) => f.write_str(s),
            other => f.write_str(&other.canonical()),
        }
    }
}

impl From<&str> for ClaimValue {
    fn from(s: &str) -> Self {
        ClaimValue::from_text(s)
    }
}

impl From<String> for ClaimValue {
    fn from(s: String) -> Self {
        ClaimValue::from_text(&s)
    }
}

impl From<i64> for ClaimValue {
    fn from(i: i64) -> Self {
        ClaimValue::Integer(i)
    }
}

impl From<bool> for ClaimValue {
    fn from(b: bool) -> Self {
        ClaimValue::Boolean(b)
    }
}

impl From<NaiveDate> for ClaimValue {
    fn from(d: NaiveDate) -> Self {
        ClaimValue::Date(d)
    }
}

impl Serialize for ClaimValue {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.to_json().serialize(s)
    }
}

impl<'de> Deserialize<'de> for ClaimValue {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let v = Value::deserialize(d)?;
        ClaimValue::from_json("", &v).map_err(serde::de::Error::custom)
    }
}

/// Flat claim map keyed by dotted path.
pub type Claims = BTreeMap<String, ClaimValue>;

fn check_path(path: &str) -> Result<(), CredentialError> {
    if path.is_empty() || path.contains('=') || path.split('.').any(str::is_empty) {
        return Err(CredentialError::InvalidPath(path.to_owned()));
    }
    Ok(())
}

fn flatten_into(prefix: &str, v: &Value, out: &mut Claims) -> Result<(), CredentialError> {
    match v {
        Value::Object(map) => {
            for (k, v) in map {
                let path = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                flatten_into(&path, v, out)?;
            }
            Ok(())
        }
        scalar => {
            check_path(prefix)?;
            let value = ClaimValue::from_json(prefix, scalar)?;
            if out.insert(prefix.to_owned(), value).is_some() {
                return Err(CredentialError::DuplicatePath(prefix.to_owned()));
            }
            Ok(())
        }
    }
}

/// Flattens a JSON object to dotted paths. Arrays, nulls and non-integer
/// numbers are rejected; two spellings of one path (`{"a.b":1,"a":{"b":2}}`)
/// are a duplicate.
pub fn flatten_json(v: &Value) -> Result<Claims, CredentialError> {
    if !v.is_object() {
        return Err(CredentialError::NonScalarValue("<root>".into()));
    }
    let mut out = Claims::new();
    flatten_into("", v, &mut out)?;
    Ok(out)
}

/// `path=<canonical value>`
pub fn encode_message(path: &str, value: &ClaimValue) -> Vec<u8> {
    format!("{path}={}", value.canonical()).into_bytes()
}

pub fn decode_message(bytes: &[u8]) -> Option<(String, ClaimValue)> {
    let text = std::str::from_utf8(bytes).ok()?;
    let (path, raw) = text.split_once('=')?;
    let v: Value = serde_json::from_str(raw).ok()?;
    let value = ClaimValue::from_json(path, &v).ok()?;
    (value.canonical() == raw).then(|| (path.to_owned(), value))
}

/// A claim set about one subject.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ClaimSet {
    pub subject_id: Did,
    pub claims: Claims,
}

/// Message vector in UTF-8 byte order of paths, plus the path → index map.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Canonical {
    pub entries: Vec<(String, Vec<u8>)>,
    pub index_map: BTreeMap<String, usize>,
}

impl Canonical {
    pub fn paths(&self) -> Vec<String> {
        self.entries.iter().map(|(p, _)| p.clone()).collect()
    }

    pub fn scalars(&self) -> Vec<Scalar> {
        self.entries.iter().map(|(_, m)| bbs::map_message_to_scalar(m)).collect()
    }
}

impl ClaimSet {
    pub fn new(subject_id: Did, claims: Claims) -> Self {
        Self { subject_id, claims }
    }

    /// All claims including the subject id.
    pub fn full_claims(&self) -> Result<Claims, CredentialError> {
        let mut all = self.claims.clone();
        for path in all.keys() {
            check_path(path)?;
        }
        if all
            .insert(SUBJECT_ID_PATH.into(), ClaimValue::String(self.subject_id.to_string()))
            .is_some()
        {
            return Err(CredentialError::DuplicatePath(SUBJECT_ID_PATH.into()));
        }
        Ok(all)
    }

    pub fn canonicalize(&self) -> Result<Canonical, CredentialError> {
        let all = self.full_claims()?;
        let entries: Vec<(String, Vec<u8>)> = all.iter().map(|(p, v)| (p.clone(), encode_message(p, v))).collect();
        let index_map = entries.iter().enumerate().map(|(i, (p, _))| (p.clone(), i)).collect();
        Ok(Canonical { entries, index_map })
    }
}

/// Index map implied by a sorted list of paths.
pub fn index_map_of(paths: &[String]) -> Option<BTreeMap<String, usize>> {
    if paths.windows(2).any(|w| w[0].as_bytes() >= w[1].as_bytes()) {
        return None;
    }
    Some(paths.iter().enumerate().map(|(i, p)| (p.clone(), i)).collect())
}
