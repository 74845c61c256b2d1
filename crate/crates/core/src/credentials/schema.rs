//! Claim schemas and issuer-computed predicate claims.

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};

use super::claims::{ClaimValue, Claims};
use super::CredentialError;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Schema {
    /// No mandatory claims.
    #[default]
    Open,
    /// eIDAS minimum data set for a natural person.
    EidasNaturalPerson,
    /// eIDAS legal person; only the two mandatory attributes are checked.
    EidasLegalPerson,
}

impl Schema {
    pub fn credential_type(self) -> Option<&'static str> {
        match self {
            Schema::Open => None,
            Schema::EidasNaturalPerson => Some("EidasNaturalPersonCredential"),
            Schema::EidasLegalPerson => Some("EidasLegalPersonCredential"),
        }
    }

    pub fn mandatory_paths(self) -> &'static [&'static str] {
        match self {
            Schema::Open => &[],
            Schema::EidasNaturalPerson => &["dateOfBirth", "familyName", "firstNames", "uniqueIdentifier"],
            Schema::EidasLegalPerson => &["legalName", "legalPersonIdentifier"],
        }
    }

    pub fn validate(self, claims: &Claims) -> Result<(), CredentialError> {
        for path in self.mandatory_paths() {
            let Some(value) = claims.get(*path) else {
                return Err(CredentialError::SchemaViolation(format!("missing mandatory claim {path:?}")));
            };
            let ok = match *path {
                "dateOfBirth" => matches!(value, ClaimValue::Date(_)),
                _ => matches!(value, ClaimValue::String(s) if !s.is_empty()),
            };
            if !ok {
                return Err(CredentialError::SchemaViolation(format!("claim {path:?} has the wrong type")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Operator {
    AtLeast,
    AtMost,
    In,
}

impl Operator {
    pub fn parse(text: &str) -> Result<Self, CredentialError> {
        match text {
            ">=" | "≥" | "gte" => Ok(Operator::AtLeast),
            "<=" | "≤" | "lte" => Ok(Operator::AtMost),
            "in" | "∈" => Ok(Operator::In),
            other => Err(CredentialError::UnsupportedOperator(other.to_owned())),
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            Operator::AtLeast => ">=",
            Operator::AtMost => "<=",
            Operator::In => "in",
        }
    }
}

/// Predicate as written in requests and scenario files:
/// `{"path": "age", "op": ">=", "value": 18, "output": "ageOver18"}`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredicateSpec {
    pub path: String,
    pub op: String,
    pub value: serde_json::Value,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<String>,
}

impl PredicateSpec {
    pub fn age_at_least(years: i64) -> Self {
        Self {
            path: "age".into(),
            op: ">=".into(),
            value: years.into(),
            output: None,
        }
    }

    pub fn output_path(&self) -> String {
        if let Some(out) = &self.output {
            return out.clone();
        }
        match (self.path.as_str(), self.op.as_str(), self.value.as_i64()) {
            ("age" | "dateOfBirth", ">=" | "≥" | "gte", Some(n)) => format!("ageOver{n}"),
            ("age" | "dateOfBirth", "<=" | "≤" | "lte", Some(n)) => format!("ageAtMost{n}"),
            (path, _, _) => format!("{}Predicate", path.replace('.', "_")),
        }
    }
}

/// Whole years from `birth` to `on`; a 29 February birthday counts from
/// 1 March in common years.
pub fn age_on(birth: NaiveDate, on: NaiveDate) -> i64 {
    let mut years = i64::from(on.year() - birth.year());
    if (on.month(), on.day()) < (birth.month(), birth.day()) {
        years -= 1;
    }
    years
}

/// Numeric subject of an age-style predicate: the age computed from
/// `dateOfBirth` when the source is `age` or `dateOfBirth` and a birth date
/// is present, otherwise the source value itself.
fn numeric_source(spec: &PredicateSpec, claims: &Claims, today: NaiveDate) -> Result<Option<i64>, CredentialError> {
    if matches!(spec.path.as_str(), "age" | "dateOfBirth") {
        if let Some(ClaimValue::Date(dob)) = claims.get("dateOfBirth") {
            return Ok(Some(age_on(*dob, today)));
        }
    }
    match claims.get(&spec.path) {
        None => Err(CredentialError::PredicateOnMissingPath(spec.path.clone())),
        Some(ClaimValue::Integer(i)) => Ok(Some(*i)),
        Some(ClaimValue::Date(d)) => Ok(Some(age_on(*d, today))),
        Some(_) => Ok(None),
    }
}

/// Evaluates one predicate over the source claims at `today`.
pub fn evaluate(spec: &PredicateSpec, claims: &Claims, today: NaiveDate) -> Result<bool, CredentialError> {
    let op = Operator::parse(&spec.op)?;
    match op {
        Operator::AtLeast | Operator::AtMost => {
            let bound = spec.value.as_i64().ok_or_else(|| {
                CredentialError::UnsupportedOperator(format!("{} needs an integer bound", op.symbol()))
            })?;
            let Some(v) = numeric_source(spec, claims, today)? else {
                return Err(CredentialError::UnsupportedOperator(format!(
                    "{} on non-numeric claim {:?}",
                    op.symbol(),
                    spec.path
                )));
            };
            Ok(if op == Operator::AtLeast { v >= bound } else { v <= bound })
        }
        Operator::In => {
            let value = claims
                .get(&spec.path)
                .ok_or_else(|| CredentialError::PredicateOnMissingPath(spec.path.clone()))?;
            let set = spec
                .value
                .as_array()
                .ok_or_else(|| CredentialError::UnsupportedOperator("in needs an array of values".into()))?;
            Ok(set.iter().any(|v| *v == value.to_json()))
        }
    }
}

/// Adds one boolean claim per predicate; source claims are kept.
pub fn apply_predicates(claims: &mut Claims, specs: &[PredicateSpec], today: NaiveDate) -> Result<(), CredentialError> {
    let mut computed = Vec::with_capacity(specs.len());
    for spec in specs {
        computed.push((spec.output_path(), evaluate(spec, claims, today)?));
    }
    for (path, value) in computed {
        if claims.insert(path.clone(), ClaimValue::Boolean(value)).is_some() {
            return Err(CredentialError::DuplicatePath(path));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn date(y: i32, m: u32, d: u32) -> NaiveDate {
        NaiveDate::from_ymd_opt(y, m, d).unwrap()
    }

    #[test]
    fn age_boundaries_inclusive() {
        let today = date(2024, 6, 1);
        for (age, expect) in [(17, false), (18, true), (19, true)] {
            let mut c = Claims::new();
            c.insert("age".into(), ClaimValue::Integer(age));
            apply_predicates(&mut c, &[PredicateSpec::age_at_least(18)], today).unwrap();
            assert_eq!(c["ageOver18"], ClaimValue::Boolean(expect), "age {age}");
            assert_eq!(c["age"], ClaimValue::Integer(age));
        }
    }

    #[test]
    fn birthday_edges() {
        assert_eq!(age_on(date(2006, 6, 1), date(2024, 6, 1)), 18);
        assert_eq!(age_on(date(2006, 6, 2), date(2024, 6, 1)), 17);
        assert_eq!(age_on(date(2004, 2, 29), date(2022, 2, 28)), 17);
        assert_eq!(age_on(date(2004, 2, 29), date(2022, 3, 1)), 18);
    }

    #[test]
    fn date_of_birth_preferred_over_age() {
        let mut c = Claims::new();
        c.insert("age".into(), ClaimValue::Integer(30));
        c.insert("dateOfBirth".into(), ClaimValue::Date(date(2010, 1, 1)));
        assert!(!evaluate(&PredicateSpec::age_at_least(18), &c, date(2024, 1, 1)).unwrap());
    }

    #[test]
    fn predicate_errors() {
        let c = Claims::new();
        assert!(matches!(
            evaluate(&PredicateSpec::age_at_least(18), &c, date(2024, 1, 1)),
            Err(CredentialError::PredicateOnMissingPath(_))
        ));
        let spec = PredicateSpec {
            op: ">".into(),
            ..PredicateSpec::age_at_least(18)
        };
        assert!(matches!(evaluate(&spec, &c, date(2024, 1, 1)), Err(CredentialError::UnsupportedOperator(_))));
    }

    #[test]
    fn membership() {
        let mut c = Claims::new();
        c.insert("nationality".into(), "AT".into());
        let spec = PredicateSpec {
            path: "nationality".into(),
            op: "in".into(),
            value: serde_json::json!(["AT", "DE"]),
            output: Some("euCitizen".into()),
        };
        apply_predicates(&mut c, &[spec], date(2024, 1, 1)).unwrap();
        assert_eq!(c["euCitizen"], ClaimValue::Boolean(true));
    }

    #[test]
    fn eidas_schema() {
        let mut c = Claims::new();
        for (k, v) in [("familyName", "Doe"), ("firstNames", "Alice"), ("uniqueIdentifier", "AT/1")] {
            c.insert(k.into(), v.into());
        }
        assert!(matches!(Schema::EidasNaturalPerson.validate(&c), Err(CredentialError::SchemaViolation(_))));
        c.insert("dateOfBirth".into(), "1990-01-01".into());
        assert_eq!(Schema::EidasNaturalPerson.validate(&c), Ok(()));
        assert_eq!(Schema::Open.validate(&Claims::new()), Ok(()));
    }
}
