//! Python module `permadid`: BBS primitives, the weave, and the
//! issuer/holder/verifier flow over a shared in-memory network.

use std::collections::HashMap;

use chrono::{NaiveDate, TimeZone, Utc};
use pyo3::exceptions::{PyKeyError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyBytes;

use permadid_core::bbs::{self, map_message_to_scalar, Proof, PublicKey, Scalar, SecretKey, Signature};
use permadid_core::credentials::{flatten_json, PredicateSpec, Schema};
use permadid_core::protocol::{self, EntityProfile, Network, Role, Scenario};
use permadid_core::weave::WeaveStore;

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn scalars(messages: &[Vec<u8>]) -> Vec<Scalar> {
    messages.iter().map(|m| map_message_to_scalar(m)).collect()
}

fn to_py<'py, T: serde::Serialize + ?Sized>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(value_err)?;
    py.import("json")?.call_method1("loads", (text,))
}

/// `(secret_key, public_key)` from a seed of at least 32 bytes.
#[pyfunction]
fn bbs_keygen<'py>(py: Python<'py>, seed: &[u8]) -> PyResult<(Bound<'py, PyBytes>, Bound<'py, PyBytes>)> {
    let (sk, pk) = bbs::keygen(seed).map_err(value_err)?;
    Ok((PyBytes::new(py, &sk.to_bytes()), PyBytes::new(py, &pk.to_bytes())))
}

#[pyfunction]
fn bbs_sign<'py>(py: Python<'py>, sk: &[u8], pk: &[u8], header: &[u8], messages: Vec<Vec<u8>>) -> PyResult<Bound<'py, PyBytes>> {
    let sk = SecretKey::from_bytes(sk).map_err(value_err)?;
    let pk = PublicKey::from_bytes(pk).map_err(value_err)?;
    let sig = bbs::sign(&sk, &pk, header, &scalars(&messages)).map_err(value_err)?;
    Ok(PyBytes::new(py, &sig.to_bytes()))
}

#[pyfunction]
fn bbs_verify(pk: &[u8], header: &[u8], messages: Vec<Vec<u8>>, signature: &[u8]) -> bool {
    let (Ok(pk), Ok(sig)) = (PublicKey::from_bytes(pk), Signature::from_bytes(signature)) else {
        return false;
    };
    bbs::verify(&pk, header, &scalars(&messages), &sig)
}

#[pyfunction]
fn bbs_proof_gen<'py>(
    py: Python<'py>,
    pk: &[u8],
    signature: &[u8],
    header: &[u8],
    ph: &[u8],
    messages: Vec<Vec<u8>>,
    disclosed: Vec<usize>,
) -> PyResult<Bound<'py, PyBytes>> {
    let pk = PublicKey::from_bytes(pk).map_err(value_err)?;
    let sig = Signature::from_bytes(signature).map_err(value_err)?;
    let proof = bbs::proof_gen(&pk, &sig, header, ph, &scalars(&messages), &disclosed, &mut rand::thread_rng())
        .map_err(value_err)?;
    Ok(PyBytes::new(py, &proof.to_bytes()))
}

/// `disclosed` is a list of `(index, message)` pairs in increasing index order.
#[pyfunction]
fn bbs_proof_verify(pk: &[u8], proof: &[u8], header: &[u8], ph: &[u8], disclosed: Vec<(usize, Vec<u8>)>) -> bool {
    let (Ok(pk), Ok(proof)) = (PublicKey::from_bytes(pk), Proof::from_bytes(proof)) else {
        return false;
    };
    let pairs: Vec<(usize, Scalar)> = disclosed.iter().map(|(i, m)| (*i, map_message_to_scalar(m))).collect();
    bbs::proof_verify(&pk, &proof, header, ph, &pairs)
}

/// Runs a JSON scenario document and returns the report as a dict.
#[pyfunction]
fn run_scenario<'py>(py: Python<'py>, scenario_json: &str) -> PyResult<Bound<'py, PyAny>> {
    let scenario: Scenario = serde_json::from_str(scenario_json).map_err(value_err)?;
    let report = protocol::run_scenario(&scenario).map_err(value_err)?;
    to_py(py, &report)
}

/// A standalone weave for direct inspection.
#[pyclass(name = "Weave", frozen)]
struct PyWeave(WeaveStore);

#[pymethods]
impl PyWeave {
    #[new]
    fn new() -> Self {
        Self(WeaveStore::default())
    }

    #[staticmethod]
    fn from_snapshot(bytes: &[u8]) -> PyResult<Self> {
        WeaveStore::from_snapshot(bytes, Default::default()).map(Self).map_err(value_err)
    }

    fn height(&self) -> u64 {
        self.0.height()
    }

    fn stats<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.0.stats())
    }

    fn verify(&self) -> bool {
        self.0.verify_weave()
    }

    fn snapshot<'py>(&self, py: Python<'py>) -> Bound<'py, PyBytes> {
        PyBytes::new(py, &self.0.snapshot_bytes())
    }

    fn snapshot_digest(&self) -> String {
        permadid_core::encoding::b64url(&self.0.snapshot_digest())
    }
}

/// Unit enum variants by their serialized name.
fn parse_variant<T: serde::de::DeserializeOwned>(kind: &str, text: &str) -> PyResult<T> {
    serde_json::from_value(serde_json::Value::String(text.to_owned()))
        .map_err(|_| PyValueError::new_err(format!("unknown {kind} {text:?}")))
}

/// A seeded network holding named entities.
#[pyclass(name = "Network", unsendable)]
struct PyNetwork {
    net: Network,
    entities: HashMap<String, EntityProfile>,
}

impl PyNetwork {
    fn entity(&self, label: &str) -> PyResult<&EntityProfile> {
        self.entities.get(label).ok_or_else(|| PyKeyError::new_err(label.to_owned()))
    }

    fn take(&mut self, label: &str) -> PyResult<EntityProfile> {
        self.entities.remove(label).ok_or_else(|| PyKeyError::new_err(label.to_owned()))
    }
}

#[pymethods]
impl PyNetwork {
    #[new]
    #[pyo3(signature = (seed = 0))]
    fn new(seed: u64) -> Self {
        Self {
            net: Network::new(seed),
            entities: HashMap::new(),
        }
    }

    /// Issuance and predicate date, `YYYY-MM-DD`.
    fn set_date(&mut self, date: &str) -> PyResult<()> {
        let d = NaiveDate::parse_from_str(date, "%Y-%m-%d").map_err(value_err)?;
        self.net.set_now(Utc.from_utc_datetime(&d.and_hms_opt(0, 0, 0).expect("midnight")));
        Ok(())
    }

    /// Creates and publishes an entity; returns its DID.
    #[pyo3(signature = (role, label, name = None))]
    fn setup(&mut self, role: &str, label: &str, name: Option<&str>) -> PyResult<String> {
        if self.entities.contains_key(label) {
            return Err(PyValueError::new_err(format!("label {label:?} already in use")));
        }
        let entity = self.net.setup_entity(parse_variant::<Role>("role", role)?, label, name).map_err(value_err)?;
        let did = entity.did.to_string();
        self.entities.insert(label.to_owned(), entity);
        Ok(did)
    }

    /// Resolves a DID or name to its document.
    fn resolve<'py>(&self, py: Python<'py>, reference: &str) -> PyResult<Bound<'py, PyAny>> {
        let doc = self.net.dids().resolve(reference).map_err(value_err)?;
        to_py(py, &doc)
    }

    /// Issues `claims` (a JSON object) from `issuer` to `holder`; returns the credential id.
    #[pyo3(signature = (issuer, holder, claims_json, schema = "open", predicates_json = "[]"))]
    fn issue(&mut self, issuer: &str, holder: &str, claims_json: &str, schema: &str, predicates_json: &str) -> PyResult<String> {
        let value: serde_json::Value = serde_json::from_str(claims_json).map_err(value_err)?;
        let claims = flatten_json(&value).map_err(value_err)?;
        let schema: Schema = parse_variant("schema", schema)?;
        let predicates: Vec<PredicateSpec> = serde_json::from_str(predicates_json).map_err(value_err)?;
        let issuer = self.entity(issuer)?.clone();
        let mut h = self.take(holder)?;
        let result = self.net.run_issuance(&issuer, &mut h, claims, schema, &predicates);
        self.entities.insert(holder.to_owned(), h);
        Ok(result.map_err(value_err)?.id)
    }

    /// One request/response round; returns the verification result as a dict.
    fn verify<'py>(&mut self, py: Python<'py>, verifier: &str, holder: &str, paths: Vec<String>) -> PyResult<Bound<'py, PyAny>> {
        let paths: Vec<&str> = paths.iter().map(String::as_str).collect();
        let holder = self.entity(holder)?.clone();
        let mut v = self.take(verifier)?;
        let request = self.net.issue_request(&mut v, &paths);
        let result = self.net.run_verification(&mut v, &holder, &request);
        self.entities.insert(verifier.to_owned(), v);
        match result {
            Ok((result, _)) => to_py(py, &result),
            Err(e) => to_py(py, &serde_json::json!({"outcome": "REJECT", "reason": e.code()})),
        }
    }

    /// Revokes a credential; returns the revocation transaction id.
    fn revoke(&mut self, issuer: &str, credential_id: &str) -> PyResult<String> {
        let issuer = self.entity(issuer)?.clone();
        Ok(self.net.revoke(&issuer, credential_id).map_err(value_err)?.to_string())
    }

    /// Rotates the holder's DID and has its credentials reissued.
    fn refresh<'py>(&mut self, py: Python<'py>, holder: &str, issuers: Vec<String>) -> PyResult<Bound<'py, PyAny>> {
        let issuers: Vec<EntityProfile> = issuers.iter().map(|l| self.entity(l).cloned()).collect::<PyResult<_>>()?;
        let refs: Vec<&EntityProfile> = issuers.iter().collect();
        let mut h = self.take(holder)?;
        let result = self.net.refresh_identity(&mut h, &refs);
        self.entities.insert(holder.to_owned(), h);
        to_py(py, &result.map_err(value_err)?)
    }

    fn did(&self, label: &str) -> PyResult<String> {
        Ok(self.entity(label)?.did.to_string())
    }

    fn weave_stats<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.net.weave().stats())
    }
}

#[pymodule]
fn permadid(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(bbs_keygen, m)?)?;
    m.add_function(wrap_pyfunction!(bbs_sign, m)?)?;
    m.add_function(wrap_pyfunction!(bbs_verify, m)?)?;
    m.add_function(wrap_pyfunction!(bbs_proof_gen, m)?)?;
    m.add_function(wrap_pyfunction!(bbs_proof_verify, m)?)?;
    m.add_function(wrap_pyfunction!(run_scenario, m)?)?;
    m.add_class::<PyWeave>()?;
    m.add_class::<PyNetwork>()?;
    Ok(())
}
