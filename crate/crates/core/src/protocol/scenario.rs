//! Declarative scenarios: a seed, optional issuance date and a list of steps,
//! each optionally carrying the outcome it expects.
//!
//! ```json
//! {"name": "age check", "seed": 7, "steps": [
//!   {"action": "setup", "actor": "gov", "params": {"role": "issuer", "name": "gov"}},
//!   {"action": "setup", "actor": "alice", "params": {"role": "holder", "name": "alice"}},
//!   {"action": "setup", "actor": "shop", "params": {"role": "verifier"}},
//!   {"action": "issue", "actor": "gov", "params": {"holder": "alice", "claims": {"age": 25}}},
//!   {"action": "verify", "actor": "shop", "params": {"holder": "alice", "paths": ["age"]}, "expect": "ACCEPT"}
//! ]}
//! ```
//!
//! Actions: `setup`, `issue`, `verify`, `replay` (resend the verifier's last
//! response), `revoke`, `refresh`, `mine`, `set_date`. `expect` is `ACCEPT`,
//! a reject reason, an error code, or `OK`.

use std::collections::BTreeMap;
use std::sync::Arc;

use chrono::{NaiveDate, TimeZone, Utc};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{EntityProfile, HolderResponse, Network, ProtocolError, Role, VerificationRequest};
use crate::credentials::{flatten_json, PredicateSpec, Schema};
use crate::weave::WeaveStore;

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    #[serde(default)]
    pub seed: u64,
    /// Issuance clock, `YYYY-MM-DD`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub date: Option<String>,
    pub steps: Vec<Step>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Step {
    pub action: String,
    #[serde(default)]
    pub actor: String,
    #[serde(default)]
    pub params: Value,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expect: Option<String>,
}

#[derive(Clone, Debug, Serialize)]
pub struct StepRecord {
    pub index: usize,
    pub action: String,
    pub actor: String,
    pub outcome: String,
    #[serde(skip_serializing_if = "Value::is_null")]
    pub detail: Value,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub expected: Option<String>,
    pub matched: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct ScenarioReport {
    pub name: String,
    pub passed: bool,
    pub steps: Vec<StepRecord>,
}

fn parse_date(text: &str) -> Result<chrono::DateTime<Utc>, ProtocolError> {
    let d = NaiveDate::parse_from_str(text, "%Y-%m-%d").map_err(|_| ProtocolError::Scenario(format!("bad date {text:?}")))?;
    Ok(Utc.from_utc_datetime(&d.and_hms_opt(0, 0, 0).expect("midnight")))
}

fn param<'a>(step: &'a Step, key: &str) -> Option<&'a Value> {
    step.params.get(key)
}

fn param_str<'a>(step: &'a Step, key: &str) -> Result<&'a str, ProtocolError> {
    param(step, key)
        .and_then(Value::as_str)
        .ok_or_else(|| ProtocolError::Scenario(format!("step {:?} needs a string {key:?}", step.action)))
}

fn from_param<T: serde::de::DeserializeOwned + Default>(step: &Step, key: &str) -> Result<T, ProtocolError> {
    match param(step, key) {
        None => Ok(T::default()),
        Some(v) => serde_json::from_value(v.clone()).map_err(|e| ProtocolError::Scenario(format!("{key}: {e}"))),
    }
}

struct Runner {
    net: Network,
    entities: BTreeMap<String, EntityProfile>,
    last: BTreeMap<String, (VerificationRequest, HolderResponse)>,
}

impl Runner {
    fn entity(&self, label: &str) -> Result<&EntityProfile, ProtocolError> {
        self.entities
            .get(label)
            .ok_or_else(|| ProtocolError::Scenario(format!("unknown actor {label:?}")))
    }

    /// Takes an entity out of the map so it can be mutated alongside others.
    fn take(&mut self, label: &str) -> Result<EntityProfile, ProtocolError> {
        self.entities
            .remove(label)
            .ok_or_else(|| ProtocolError::Scenario(format!("unknown actor {label:?}")))
    }

    fn run(&mut self, step: &Step) -> Result<(String, Value), ProtocolError> {
        match step.action.as_str() {
            "setup" => {
                let role: Role = serde_json::from_value(param(step, "role").cloned().unwrap_or(json!("holder")))
                    .map_err(|e| ProtocolError::Scenario(format!("role: {e}")))?;
                let name = param(step, "name").and_then(Value::as_str);
                let entity = self.net.setup_entity(role, &step.actor, name)?;
                let detail = json!({"did": entity.did, "name": entity.name, "documentTx": entity.published_doc_tx});
                self.entities.insert(step.actor.clone(), entity);
                Ok(("OK".into(), detail))
            }
            "issue" => {
                let holder_label = param_str(step, "holder")?.to_owned();
                let claims = flatten_json(param(step, "claims").unwrap_or(&json!({})))?;
                let schema: Schema = from_param(step, "schema")?;
                let predicates: Vec<PredicateSpec> = from_param(step, "predicates")?;
                let mut holder = self.take(&holder_label)?;
                let result = self
                    .entity(&step.actor)
                    .cloned()
                    .and_then(|issuer| self.net.run_issuance(&issuer, &mut holder, claims, schema, &predicates));
                self.entities.insert(holder_label, holder);
                let credential = result?;
                Ok(("OK".into(), json!({"credentialId": credential.id})))
            }
            "verify" => {
                let holder = self.entity(param_str(step, "holder")?)?.clone();
                let paths: Vec<String> = from_param(step, "paths")?;
                let paths: Vec<&str> = paths.iter().map(String::as_str).collect();
                let mut verifier = self.take(&step.actor)?;
                let request = self.net.issue_request(&mut verifier, &paths);
                let result = self.net.run_verification(&mut verifier, &holder, &request);
                self.entities.insert(step.actor.clone(), verifier);
                let (outcome, response) = result?;
                let (code, mut detail) = outcome_of(&outcome);
                detail["presentation"] = serde_json::to_value(&response.presentation).expect("serializable");
                self.last.insert(step.actor.clone(), (request, response));
                Ok((code, detail))
            }
            "replay" => {
                let (request, response) = self
                    .last
                    .get(&step.actor)
                    .cloned()
                    .ok_or_else(|| ProtocolError::Scenario(format!("{} has nothing to replay", step.actor)))?;
                let mut verifier = self.take(&step.actor)?;
                let outcome = self.net.check_response(&mut verifier, &request, &response);
                self.entities.insert(step.actor.clone(), verifier);
                Ok(outcome_of(&outcome))
            }
            "revoke" => {
                let holder = self.entity(param_str(step, "holder")?)?;
                let index = param(step, "credential").and_then(Value::as_u64);
                let wallet: Vec<_> = holder.credentials().collect();
                let credential = match index {
                    Some(i) => wallet.get(i as usize).copied(),
                    None => wallet.last().copied(),
                }
                .ok_or_else(|| ProtocolError::Scenario("no such credential".into()))?;
                let id = credential.id.clone();
                let issuer = self.entity(&step.actor)?.clone();
                let tx = self.net.revoke(&issuer, &id)?;
                Ok(("OK".into(), json!({"credentialId": id, "tx": tx})))
            }
            "refresh" => {
                let mut holder = self.take(&step.actor)?;
                let issuers: Vec<EntityProfile> =
                    self.entities.values().filter(|e| e.role == Role::Issuer).cloned().collect();
                let refs: Vec<&EntityProfile> = issuers.iter().collect();
                let result = self.net.refresh_identity(&mut holder, &refs);
                self.entities.insert(step.actor.clone(), holder);
                let report = result?;
                Ok(("OK".into(), serde_json::to_value(report).expect("serializable")))
            }
            "mine" => {
                let block = self.net.mine()?;
                Ok(("OK".into(), json!({"height": block.map(|b| b.height)})))
            }
            "set_date" => {
                self.net.set_now(parse_date(param_str(step, "date")?)?);
                Ok(("OK".into(), Value::Null))
            }
            other => Err(ProtocolError::Scenario(format!("unknown action {other:?}"))),
        }
    }
}

fn outcome_of(result: &super::VerificationResult) -> (String, Value) {
    let disclosed: serde_json::Map<String, Value> =
        result.disclosed.iter().map(|(p, v)| (p.clone(), v.to_json())).collect();
    match result.reason {
        None => ("ACCEPT".into(), json!({"disclosed": disclosed})),
        Some(r) => (r.as_str().into(), json!({})),
    }
}

/// Runs every step, recording each outcome. A step's failure does not stop
/// the run; `passed` is false if any expectation is unmet. Unexpected
/// errors in steps without an expectation also fail the run.
pub fn run_scenario(scenario: &Scenario) -> Result<ScenarioReport, ProtocolError> {
    run_scenario_on(scenario, Arc::new(WeaveStore::default()))
}

/// [`run_scenario`] against an existing weave.
pub fn run_scenario_on(scenario: &Scenario, weave: Arc<WeaveStore>) -> Result<ScenarioReport, ProtocolError> {
    let mut net = Network::with_weave(weave, scenario.seed);
    if let Some(date) = &scenario.date {
        net.set_now(parse_date(date)?);
    }
    let mut runner = Runner {
        net,
        entities: BTreeMap::new(),
        last: BTreeMap::new(),
    };
    let mut steps = Vec::with_capacity(scenario.steps.len());
    for (index, step) in scenario.steps.iter().enumerate() {
        let (outcome, detail) = match runner.run(step) {
            Ok(r) => r,
            Err(ProtocolError::Scenario(msg)) => return Err(ProtocolError::Scenario(format!("step {index}: {msg}"))),
            Err(e) => (e.code().to_owned(), json!({"error": e.to_string()})),
        };
        let matched = match &step.expect {
            Some(want) => *want == outcome,
            None => outcome == "OK" || outcome == "ACCEPT",
        };
        steps.push(StepRecord {
            index,
            action: step.action.clone(),
            actor: step.actor.clone(),
            outcome,
            detail,
            expected: step.expect.clone(),
            matched,
        });
    }
    Ok(ScenarioReport {
        name: scenario.name.clone(),
        passed: steps.iter().all(|s| s.matched),
        steps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn revocation_scenario() {
        let scenario: Scenario = serde_json::from_value(json!({
            "name": "revoke",
            "seed": 9,
            "steps": [
                {"action": "setup", "actor": "gov", "params": {"role": "issuer", "name": "gov"}},
                {"action": "setup", "actor": "alice", "params": {"role": "holder", "name": "alice"}},
                {"action": "setup", "actor": "bob", "params": {"role": "holder", "name": "alice"}, "expect": "NameTaken"},
                {"action": "setup", "actor": "shop", "params": {"role": "verifier"}},
                {"action": "issue", "actor": "gov", "params": {"holder": "alice", "claims": {"age": 25, "name": "Alice"}}},
                {"action": "verify", "actor": "shop", "params": {"holder": "alice", "paths": ["age"]}, "expect": "ACCEPT"},
                {"action": "replay", "actor": "shop", "expect": "NonceMismatch"},
                {"action": "revoke", "actor": "gov", "params": {"holder": "alice"}},
                {"action": "verify", "actor": "shop", "params": {"holder": "alice", "paths": ["age"]}, "expect": "Revoked"},
                {"action": "refresh", "actor": "alice"},
                {"action": "verify", "actor": "shop", "params": {"holder": "alice", "paths": ["age"]}, "expect": "ACCEPT"}
            ]
        }))
        .unwrap();
        let report = run_scenario(&scenario).unwrap();
        assert!(report.passed, "{}", serde_json::to_string_pretty(&report).unwrap());
        assert_eq!(report.steps[5].detail["disclosed"], json!({"age": 25}));
    }

    #[test]
    fn unknown_action_is_an_error() {
        let scenario = Scenario {
            name: "x".into(),
            seed: 0,
            date: None,
            steps: vec![Step {
                action: "dance".into(),
                actor: "a".into(),
                params: Value::Null,
                expect: None,
            }],
        };
        assert!(matches!(run_scenario(&scenario), Err(ProtocolError::Scenario(_))));
    }
}
