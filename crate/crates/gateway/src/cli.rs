//! `permadid` command line.
//!
//! State lives under `--home` (default `.permadid`): `weave.bin` holds the
//! sealed weave, `pending.bin` the mempool, `keys/<label>.json` one
//! encrypted keystore per identity.
//!
//! Exit codes: 0 success, 1 rejection (a verifier REJECT, a failed weave
//! check or scenario, or a refused operation), 2 usage error, 3 internal error.

use std::collections::BTreeSet;
use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use chrono::{DateTime, NaiveDate, TimeZone, Utc};
use clap::{Args, Parser, Subcommand};
use permadid::bbs;
use permadid::credentials::{
    self, flatten_json, issue, issuer_key, present, presentation_header, verify_presentation, Credential, IssueRequest,
    PredicateSpec, Presentation, Schema,
};
use permadid::did::{create_document, Did, DidDocument, DidError, DidRegistry, Service};
use permadid::keys::{self, SigningKey};
use permadid::names::{self, NameError};
use permadid::protocol::{run_scenario_on, ProtocolError, Scenario};
use permadid::weave::{TxId, WeaveConfig, WeaveError, WeaveStore};
use serde_json::{json, Value};

use crate::keystore::{self, Capability, Grants, KeyMaterial, KeystoreError};

/// Published JSON schema for `--json` output.
pub const OUTPUT_SCHEMA: &str = include_str!("../schema/cli-output.schema.json");

#[derive(Parser, Debug)]
#[command(name = "permadid", version, about = "Decentralized identity on a simulated blockweave")]
struct Cli {
    /// State directory.
    #[arg(long, global = true, env = "PERMADID_HOME", default_value = ".permadid")]
    home: PathBuf,
    /// Machine-readable output.
    #[arg(long, global = true)]
    json: bool,
    /// Keystore passphrase.
    #[arg(long, global = true, env = "PERMADID_PASSPHRASE", hide_env_values = true)]
    passphrase: Option<String>,
    /// Consumer name checked against keystore grants.
    #[arg(long, global = true, env = "PERMADID_CONSUMER", default_value = "cli")]
    consumer: String,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate keys for a new identity and store them encrypted.
    Keygen(KeygenArgs),
    /// Inspect and edit keystore grants.
    #[command(subcommand)]
    Keystore(KeystoreCmd),
    /// Create, publish and resolve DIDs.
    #[command(subcommand)]
    Did(DidCmd),
    /// Register, update and resolve names.
    #[command(subcommand)]
    Name(NameCmd),
    /// Issue, present and verify credentials.
    #[command(subcommand)]
    Vc(VcCmd),
    /// Add a credential id to the issuer's revocation list.
    Revoke(RevokeArgs),
    /// Run JSON scenario files.
    #[command(subcommand)]
    Scenario(ScenarioCmd),
    /// Mine, verify and inspect the local weave.
    #[command(subcommand)]
    Weave(WeaveCmd),
    /// Run the HTTP gateway.
    Serve(ServeArgs),
    /// Print the JSON schema of `--json` output.
    Schema,
}

#[derive(Args, Debug)]
struct KeygenArgs {
    #[arg(long)]
    label: String,
    #[arg(long, default_value = "holder", value_parser = ["issuer", "holder", "verifier", "service_provider"])]
    role: String,
}

#[derive(Subcommand, Debug)]
enum KeystoreCmd {
    /// Show the identity and grants of a keystore.
    Show {
        #[arg(long)]
        label: String,
    },
    /// Give a consumer a capability.
    Grant(GrantArgs),
    /// Take a capability away from a consumer.
    Revoke(GrantArgs),
}

#[derive(Args, Debug)]
struct GrantArgs {
    #[arg(long)]
    label: String,
    /// Consumer to edit (defaults to --consumer).
    #[arg(long = "for")]
    target: Option<String>,
    #[arg(long)]
    cap: Capability,
}

#[derive(Subcommand, Debug)]
enum DidCmd {
    /// Print the DID document for an identity without publishing it.
    Create(DidCreateArgs),
    /// Publish a DID document (the generated one, or --document).
    Publish(DidPublishArgs),
    /// Resolve a DID or registered name.
    Resolve { reference: String },
}

#[derive(Args, Debug)]
struct DidCreateArgs {
    #[arg(long)]
    label: String,
    #[arg(long)]
    controller: Option<String>,
    /// Credential service endpoint (repeatable).
    #[arg(long)]
    service: Vec<String>,
}

#[derive(Args, Debug)]
struct DidPublishArgs {
    #[arg(long)]
    label: String,
    /// Document file; defaults to the generated document.
    #[arg(long)]
    document: Option<PathBuf>,
    #[arg(long)]
    controller: Option<String>,
    #[arg(long)]
    service: Vec<String>,
    /// Seal a block right away.
    #[arg(long)]
    mine: bool,
}

#[derive(Subcommand, Debug)]
enum NameCmd {
    /// Claim a free name for an identity.
    Register(NameArgs),
    /// Show the transaction a name points at.
    Resolve { name: String },
    /// Re-point a name you own.
    Update(NameArgs),
}

#[derive(Args, Debug)]
struct NameArgs {
    name: String,
    #[arg(long)]
    label: String,
    /// Target transaction; defaults to the identity's current DID document.
    #[arg(long)]
    target: Option<String>,
    #[arg(long)]
    mine: bool,
}

#[derive(Subcommand, Debug)]
enum VcCmd {
    /// Sign claims into a credential for a holder.
    Issue(VcIssueArgs),
    /// Derive a selective-disclosure presentation.
    Present(VcPresentArgs),
    /// Check a presentation against a nonce.
    Verify(VcVerifyArgs),
}

#[derive(Args, Debug)]
struct VcIssueArgs {
    /// Issuer keystore label.
    #[arg(long)]
    issuer: String,
    /// Holder DID or name.
    #[arg(long)]
    holder: String,
    /// Claims as a JSON object, or @file.
    #[arg(long)]
    claims: String,
    #[arg(long, default_value = "open", value_parser = ["open", "eidas-natural-person", "eidas-legal-person"])]
    schema: String,
    /// Issuer-computed predicate such as `age>=18` or `nationality in AT,DE` (repeatable).
    #[arg(long)]
    predicate: Vec<String>,
    /// Issuance date, YYYY-MM-DD (default: today).
    #[arg(long)]
    date: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct VcPresentArgs {
    #[arg(long)]
    credential: PathBuf,
    /// Claim paths to reveal (repeatable or comma-separated).
    #[arg(long, value_delimiter = ',')]
    disclose: Vec<String>,
    /// Verifier nonce, hex.
    #[arg(long)]
    nonce: String,
    /// Extra context bound into the presentation header.
    #[arg(long, default_value = "")]
    context: String,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct VcVerifyArgs {
    #[arg(long)]
    presentation: PathBuf,
    #[arg(long)]
    nonce: String,
}

#[derive(Args, Debug)]
struct RevokeArgs {
    #[arg(long)]
    issuer: String,
    /// Credential id, or a credential file.
    #[arg(long)]
    credential: String,
    #[arg(long)]
    mine: bool,
}

#[derive(Subcommand, Debug)]
enum ScenarioCmd {
    /// Run a scenario file against the home weave.
    Run { file: PathBuf },
}

#[derive(Subcommand, Debug)]
enum WeaveCmd {
    /// Seal pending transactions into a block.
    Mine,
    /// Replay the stored weave and check every block.
    Verify,
    /// Print block and transaction counts.
    Stats,
}

#[derive(Args, Debug)]
struct ServeArgs {
    #[arg(long, default_value = "127.0.0.1:1984")]
    addr: SocketAddr,
    /// Accept signed transactions on POST /tx.
    #[arg(long)]
    allow_post: bool,
}

/// Failure classes, one per exit code.
#[derive(Debug)]
enum CliError {
    Refused { code: String, message: String },
    Usage(String),
    Internal(String),
}

impl CliError {
    fn exit_code(&self) -> i32 {
        match self {
            CliError::Refused { .. } => 1,
            CliError::Usage(_) => 2,
            CliError::Internal(_) => 3,
        }
    }

    fn code(&self) -> &str {
        match self {
            CliError::Refused { code, .. } => code,
            CliError::Usage(_) => "Usage",
            CliError::Internal(_) => "Internal",
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Refused { message, .. } | CliError::Usage(message) | CliError::Internal(message) => message,
        }
    }

    fn refused(code: &str, message: impl ToString) -> Self {
        CliError::Refused {
            code: code.to_owned(),
            message: message.to_string(),
        }
    }
}

impl From<KeystoreError> for CliError {
    fn from(e: KeystoreError) -> Self {
        match e {
            KeystoreError::WrongPassphrase => CliError::refused("WrongPassphrase", e),
            KeystoreError::PermissionDenied { .. } => CliError::refused("PermissionDenied", e),
            KeystoreError::AlreadyExists(_) => CliError::refused("AlreadyExists", e),
            KeystoreError::Io(_) => CliError::Usage(e.to_string()),
            KeystoreError::Unsupported(_) | KeystoreError::Malformed(_) => CliError::Internal(e.to_string()),
        }
    }
}

impl From<WeaveError> for CliError {
    fn from(e: WeaveError) -> Self {
        match e {
            WeaveError::NothingToMine => CliError::refused("NothingToMine", e),
            WeaveError::OversizeData { .. } => CliError::refused("OversizeData", e),
            _ => CliError::Internal(e.to_string()),
        }
    }
}

impl From<NameError> for CliError {
    fn from(e: NameError) -> Self {
        match e {
            NameError::NameTaken(_) => CliError::refused("NameTaken", e),
            NameError::NotOwner(_) => CliError::refused("NotOwner", e),
            NameError::UnknownName(_) => CliError::refused("UnknownName", e),
            NameError::InvalidName(_) => CliError::Usage(e.to_string()),
            NameError::Weave(w) => w.into(),
        }
    }
}

impl From<DidError> for CliError {
    fn from(e: DidError) -> Self {
        match e {
            DidError::Name(n) => n.into(),
            DidError::Weave(w) => w.into(),
            DidError::NotAuthorized(_) => CliError::refused("NotAuthorized", e),
            DidError::NotFound(_) => CliError::refused("NotFound", e),
            DidError::Deactivated(_) => CliError::refused("Deactivated", e),
            DidError::InvalidDid(_) | DidError::InvalidDocument(_) | DidError::ParseError(_) => {
                CliError::Usage(e.to_string())
            }
            _ => CliError::refused("DidError", e),
        }
    }
}

impl From<credentials::CredentialError> for CliError {
    fn from(e: credentials::CredentialError) -> Self {
        use credentials::CredentialError as E;
        match &e {
            E::UnresolvableIssuer(_) => CliError::refused("UnresolvableIssuer", e),
            E::NotIssuer => CliError::refused("NotIssuer", e),
            E::SchemaViolation(_) => CliError::refused("SchemaViolation", e),
            E::InvalidCredential(_) => CliError::refused("InvalidCredential", e),
            E::Weave(_) => CliError::Internal(e.to_string()),
            _ => CliError::Usage(e.to_string()),
        }
    }
}

impl From<ProtocolError> for CliError {
    fn from(e: ProtocolError) -> Self {
        match e {
            ProtocolError::Scenario(_) => CliError::Usage(e.to_string()),
            ProtocolError::Weave(w) => w.into(),
            other => CliError::refused(other.code(), other),
        }
    }
}

/// Successful (or rejected-but-answered) command output.
struct Output {
    status: &'static str,
    result: Value,
    human: String,
}

impl Output {
    fn ok(result: Value) -> Self {
        let human = serde_json::to_string_pretty(&result).expect("JSON value");
        Self {
            status: "ok",
            result,
            human,
        }
    }

    fn with_human(mut self, human: impl Into<String>) -> Self {
        self.human = human.into();
        self
    }

    fn reject(result: Value, human: impl Into<String>) -> Self {
        Self {
            status: "reject",
            result,
            human: human.into(),
        }
    }
}

fn parse_day(text: &str) -> Option<DateTime<Utc>> {
    let d = NaiveDate::parse_from_str(text, "%Y-%m-%d").ok()?;
    Some(Utc.from_utc_datetime(&d.and_hms_opt(0, 0, 0)?))
}

struct Ctx {
    home: PathBuf,
    passphrase: Option<String>,
    consumer: String,
}

impl Ctx {
    fn weave_path(&self) -> PathBuf {
        self.home.join("weave.bin")
    }

    fn pending_path(&self) -> PathBuf {
        self.home.join("pending.bin")
    }

    fn key_path(&self, label: &str) -> Result<PathBuf, CliError> {
        if label.is_empty() || !label.bytes().all(|b| b.is_ascii_alphanumeric() || b == b'-' || b == b'_') {
            return Err(CliError::Usage(format!("invalid label {label:?}")));
        }
        Ok(self.home.join("keys").join(format!("{label}.json")))
    }

    fn passphrase(&self) -> Result<&str, CliError> {
        self.passphrase
            .as_deref()
            .ok_or_else(|| CliError::Usage("a passphrase is required (--passphrase or PERMADID_PASSPHRASE)".into()))
    }

    fn load_weave(&self) -> Result<Arc<WeaveStore>, CliError> {
        let path = self.weave_path();
        if !path.exists() {
            return Ok(Arc::new(WeaveStore::default()));
        }
        let weave = WeaveStore::load(&path, WeaveConfig::default())
            .map_err(|e| CliError::Internal(format!("corrupt snapshot {}: {e}", path.display())))?;
        if let Ok(pending) = fs::read(self.pending_path()) {
            weave
                .restore_pending(&pending)
                .map_err(|e| CliError::Internal(format!("corrupt pending pool: {e}")))?;
        }
        Ok(Arc::new(weave))
    }

    fn save_weave(&self, weave: &WeaveStore) -> Result<(), CliError> {
        fs::create_dir_all(&self.home).map_err(|e| CliError::Internal(e.to_string()))?;
        weave.save(self.weave_path())?;
        fs::write(self.pending_path(), weave.pending_bytes()).map_err(|e| CliError::Internal(e.to_string()))?;
        Ok(())
    }

    fn open_keys(&self, label: &str, cap: Capability) -> Result<Identity, CliError> {
        let path = self.key_path(label)?;
        if !path.exists() {
            return Err(CliError::Usage(format!("no keystore for {label:?}")));
        }
        let ks = keystore::open_for(&path, self.passphrase()?, &self.consumer, cap)?;
        Identity::from_material(ks.material)
    }
}

/// Decrypted identity keys.
struct Identity {
    label: String,
    role: String,
    auth: SigningKey,
    name: SigningKey,
    bbs: Option<(bbs::SecretKey, bbs::PublicKey)>,
}

impl Identity {
    fn from_material(m: KeyMaterial) -> Result<Self, CliError> {
        let bbs = match m.bbs_key {
            Some(raw) => {
                let sk = bbs::SecretKey::from_bytes(&raw).map_err(|e| CliError::Internal(e.to_string()))?;
                let pk = sk.public_key();
                Some((sk, pk))
            }
            None => None,
        };
        Ok(Self {
            label: m.label,
            role: m.role,
            auth: SigningKey::from_bytes(&m.auth_key),
            name: SigningKey::from_bytes(&m.name_key),
            bbs,
        })
    }

    fn did(&self) -> Did {
        Did::from_address(keys::address_of(&self.auth))
    }

    fn document(&self, controller: Option<&str>, services: &[String]) -> Result<DidDocument, CliError> {
        let controller = controller
            .map(|c| Did::parse(c).map_err(|e| CliError::Usage(e.to_string())))
            .transpose()?;
        let did = self.did();
        let services = services.iter().map(|url| Service::credential_service(&did, url)).collect();
        let bbs: Vec<bbs::PublicKey> = self.bbs.iter().map(|(_, pk)| *pk).collect();
        Ok(create_document(&[self.auth.verifying_key()], &bbs, services, controller)?)
    }
}

fn read_file(path: &Path) -> Result<Vec<u8>, CliError> {
    fs::read(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

fn write_out(path: Option<&Path>, bytes: &[u8]) -> Result<(), CliError> {
    if let Some(path) = path {
        fs::write(path, bytes).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    }
    Ok(())
}

fn parse_nonce(text: &str) -> Result<Vec<u8>, CliError> {
    match hex::decode(text) {
        Ok(n) if !n.is_empty() && n.len() <= 255 => Ok(n),
        _ => Err(CliError::Usage(format!("nonce must be 1 to 255 bytes of hex, got {text:?}"))),
    }
}

/// `age>=18`, `age≥18`, `age<=65`, `nationality in AT,DE`, optionally
/// followed by `:outputName`.
fn parse_predicate(text: &str) -> Result<PredicateSpec, CliError> {
    let (body, output) = match text.rsplit_once(':') {
        Some((b, o)) if !o.contains(['=', '≥', '≤', ' ']) => (b, Some(o.trim().to_owned())),
        _ => (text, None),
    };
    for op in [">=", "≥", "<=", "≤"] {
        if let Some((path, value)) = body.split_once(op) {
            let value: i64 = value
                .trim()
                .parse()
                .map_err(|_| CliError::Usage(format!("predicate {text:?}: bound must be an integer")))?;
            return Ok(PredicateSpec {
                path: path.trim().to_owned(),
                op: op.to_owned(),
                value: value.into(),
                output,
            });
        }
    }
    if let Some((path, set)) = body.split_once(" in ") {
        let values: Vec<Value> = set.split(',').map(|v| Value::String(v.trim().to_owned())).collect();
        return Ok(PredicateSpec {
            path: path.trim().to_owned(),
            op: "in".into(),
            value: Value::Array(values),
            output,
        });
    }
    Err(CliError::Usage(format!("cannot parse predicate {text:?}")))
}

fn load_credential(path: &Path) -> Result<Credential, CliError> {
    Credential::from_json(&read_file(path)?).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

fn mine_if(weave: &WeaveStore, mine: bool) -> Result<Option<u64>, CliError> {
    if !mine {
        return Ok(None);
    }
    match weave.mine_block() {
        Ok(b) => Ok(Some(b.height)),
        Err(WeaveError::NothingToMine) => Ok(None),
        Err(e) => Err(e.into()),
    }
}

fn command_name(cmd: &Command) -> &'static str {
    match cmd {
        Command::Keygen(_) => "keygen",
        Command::Keystore(KeystoreCmd::Show { .. }) => "keystore show",
        Command::Keystore(KeystoreCmd::Grant(_)) => "keystore grant",
        Command::Keystore(KeystoreCmd::Revoke(_)) => "keystore revoke",
        Command::Did(DidCmd::Create(_)) => "did create",
        Command::Did(DidCmd::Publish(_)) => "did publish",
        Command::Did(DidCmd::Resolve { .. }) => "did resolve",
        Command::Name(NameCmd::Register(_)) => "name register",
        Command::Name(NameCmd::Resolve { .. }) => "name resolve",
        Command::Name(NameCmd::Update(_)) => "name update",
        Command::Vc(VcCmd::Issue(_)) => "vc issue",
        Command::Vc(VcCmd::Present(_)) => "vc present",
        Command::Vc(VcCmd::Verify(_)) => "vc verify",
        Command::Revoke(_) => "revoke",
        Command::Scenario(_) => "scenario run",
        Command::Weave(WeaveCmd::Mine) => "weave mine",
        Command::Weave(WeaveCmd::Verify) => "weave verify",
        Command::Weave(WeaveCmd::Stats) => "weave stats",
        Command::Serve(_) => "serve",
        Command::Schema => "schema",
    }
}

fn execute(ctx: &Ctx, cmd: Command) -> Result<Output, CliError> {
    match cmd {
        Command::Keygen(a) => keygen(ctx, a),
        Command::Keystore(k) => keystore_cmd(ctx, k),
        Command::Did(d) => did_cmd(ctx, d),
        Command::Name(n) => name_cmd(ctx, n),
        Command::Vc(VcCmd::Issue(a)) => vc_issue(ctx, a),
        Command::Vc(VcCmd::Present(a)) => vc_present(ctx, a),
        Command::Vc(VcCmd::Verify(a)) => vc_verify(ctx, a),
        Command::Revoke(a) => revoke(ctx, a),
        Command::Scenario(ScenarioCmd::Run { file }) => scenario(ctx, &file),
        Command::Weave(w) => weave_cmd(ctx, w),
        Command::Serve(a) => serve(ctx, a),
        Command::Schema => Ok(Output::ok(serde_json::from_str(OUTPUT_SCHEMA).expect("schema is JSON"))),
    }
}

fn keygen(ctx: &Ctx, a: KeygenArgs) -> Result<Output, CliError> {
    let path = ctx.key_path(&a.label)?;
    let passphrase = ctx.passphrase()?;
    let mut rng = rand::rngs::OsRng;
    let auth = keys::generate(&mut rng);
    let name = keys::generate(&mut rng);
    let bbs_key = (a.role == "issuer").then(|| {
        let mut seed = [0u8; 32];
        rand::RngCore::fill_bytes(&mut rng, &mut seed);
        bbs::keygen(&seed).expect("32-byte seed").0.to_bytes()
    });
    let material = KeyMaterial {
        label: a.label.clone(),
        role: a.role.clone(),
        auth_key: auth.to_bytes(),
        name_key: name.to_bytes(),
        bbs_key,
    };
    let grants: Grants = [(ctx.consumer.clone(), Capability::ALL.into_iter().collect())].into();
    fs::create_dir_all(path.parent().expect("keys dir")).map_err(|e| CliError::Internal(e.to_string()))?;
    keystore::create(&path, passphrase, &material, grants, None)?;
    let id = Identity::from_material(material)?;
    let mut result = json!({
        "label": a.label,
        "role": a.role,
        "did": id.did(),
        "address": keys::address_of(&id.auth),
    });
    if let Some((_, pk)) = &id.bbs {
        result["bbsPublicKey"] = permadid::encoding::b64url(&pk.to_bytes()).into();
    }
    Ok(Output::ok(result).with_human(format!("{} {}", a.label, id.did())))
}

fn grants_json(grants: &Grants) -> Value {
    serde_json::to_value(grants).expect("grants serialize")
}

fn keystore_cmd(ctx: &Ctx, k: KeystoreCmd) -> Result<Output, CliError> {
    match k {
        KeystoreCmd::Show { label } => {
            let ks = keystore::open(&ctx.key_path(&label)?, ctx.passphrase()?)?;
            let grants = ks.grants.clone();
            let id = Identity::from_material(ks.material)?;
            Ok(Output::ok(json!({"label": id.label, "role": id.role, "did": id.did(), "grants": grants_json(&grants)})))
        }
        KeystoreCmd::Grant(g) => {
            let target = g.target.unwrap_or_else(|| ctx.consumer.clone());
            let grants = keystore::grant(&ctx.key_path(&g.label)?, ctx.passphrase()?, &target, g.cap)?;
            Ok(Output::ok(json!({"label": g.label, "grants": grants_json(&grants)})))
        }
        KeystoreCmd::Revoke(g) => {
            let target = g.target.unwrap_or_else(|| ctx.consumer.clone());
            let grants = keystore::revoke(&ctx.key_path(&g.label)?, ctx.passphrase()?, &target, g.cap)?;
            Ok(Output::ok(json!({"label": g.label, "grants": grants_json(&grants)})))
        }
    }
}

fn did_cmd(ctx: &Ctx, d: DidCmd) -> Result<Output, CliError> {
    match d {
        DidCmd::Create(a) => {
            let id = ctx.open_keys(&a.label, Capability::SignTx)?;
            let doc = id.document(a.controller.as_deref(), &a.service)?;
            Ok(Output::ok(json!({"did": doc.id, "document": doc})))
        }
        DidCmd::Publish(a) => {
            let id = ctx.open_keys(&a.label, Capability::SignTx)?;
            let weave = ctx.load_weave()?;
            let dids = DidRegistry::new(weave.clone());
            let doc = match &a.document {
                Some(path) => DidDocument::from_json(&read_file(path)?)?,
                None => {
                    let mut doc = id.document(a.controller.as_deref(), &a.service)?;
                    if let Ok(current) = dids.resolve_record(&doc.id) {
                        doc.version_sequence = current.document.version_sequence + 1;
                    }
                    doc
                }
            };
            let tx = dids.publish(&doc, &id.auth)?;
            let mined = mine_if(&weave, a.mine)?;
            ctx.save_weave(&weave)?;
            Ok(Output::ok(json!({"did": doc.id, "tx": tx, "versionSequence": doc.version_sequence, "minedHeight": mined}))
                .with_human(format!("{} published in {tx}", doc.id)))
        }
        DidCmd::Resolve { reference } => {
            let weave = ctx.load_weave()?;
            let res = DidRegistry::new(weave).resolve_with_tx(&reference)?;
            Ok(Output::ok(json!({"did": res.document.id, "tx": res.tx, "document": res.document})))
        }
    }
}

fn check_name(name: &str) -> Result<(), CliError> {
    if names::is_valid_name(name) {
        Ok(())
    } else {
        Err(CliError::Usage(format!("invalid name {name:?}")))
    }
}

fn name_cmd(ctx: &Ctx, n: NameCmd) -> Result<Output, CliError> {
    let (a, register) = match n {
        NameCmd::Resolve { name } => {
            check_name(&name)?;
            let weave = ctx.load_weave()?;
            let (target, record) = DidRegistry::new(weave).names().resolve(&name)?;
            return Ok(Output::ok(json!({
                "name": name,
                "target": target,
                "owner": record.owner_address,
                "sequence": record.sequence,
                "recordTx": record.record_tx,
            }))
            .with_human(target.to_string()));
        }
        NameCmd::Register(a) => (a, true),
        NameCmd::Update(a) => (a, false),
    };
    check_name(&a.name)?;
    let id = ctx.open_keys(&a.label, Capability::SignTx)?;
    let weave = ctx.load_weave()?;
    let dids = DidRegistry::new(weave.clone());
    let target = match &a.target {
        Some(t) => TxId::parse(t).map_err(|e| CliError::Usage(e.to_string()))?,
        None => dids.resolve_record(&id.did())?.tx,
    };
    let record = if register {
        dids.names().register(&a.name, &target, &id.name)?
    } else {
        dids.names().update(&a.name, &target, &id.name)?
    };
    let mined = mine_if(&weave, a.mine)?;
    ctx.save_weave(&weave)?;
    Ok(Output::ok(json!({
        "name": a.name,
        "target": target,
        "sequence": record.sequence,
        "recordTx": record.record_tx,
        "minedHeight": mined,
    })))
}

fn vc_issue(ctx: &Ctx, a: VcIssueArgs) -> Result<Output, CliError> {
    let issuer = ctx.open_keys(&a.issuer, Capability::SignCredential)?;
    let Some((sk, _)) = &issuer.bbs else {
        return Err(CliError::refused("NotAnIssuer", format!("{} has no BBS key", a.issuer)));
    };
    let claims_text = match a.claims.strip_prefix('@') {
        Some(path) => String::from_utf8(read_file(Path::new(path))?).map_err(|e| CliError::Usage(e.to_string()))?,
        None => a.claims.clone(),
    };
    let claims_json: Value =
        serde_json::from_str(&claims_text).map_err(|e| CliError::Usage(format!("claims: {e}")))?;
    let claims = flatten_json(&claims_json)?;
    let schema: Schema = serde_json::from_value(json!(a.schema)).expect("clap restricts schema names");
    let predicates = a.predicate.iter().map(|p| parse_predicate(p)).collect::<Result<Vec<_>, _>>()?;
    let issued_at = match &a.date {
        Some(d) => parse_day(d).ok_or_else(|| CliError::Usage(format!("bad date {d:?}")))?,
        None => Utc::now(),
    };

    let weave = ctx.load_weave()?;
    let dids = DidRegistry::new(weave);
    let holder_doc = dids.resolve(&a.holder)?;
    let holder_key = *holder_doc
        .authentication_keys()
        .first()
        .ok_or_else(|| CliError::refused("UnresolvableHolder", "holder document has no authentication key"))?;
    let credential = issue(
        &dids,
        IssueRequest {
            issuer: &issuer.did(),
            issuer_key: sk,
            holder: &holder_doc.id,
            holder_key: &holder_key,
            claims,
            schema,
            predicates: &predicates,
            issued_at,
        },
    )?;
    let bytes = credential.to_json();
    write_out(a.out.as_deref(), &bytes)?;
    let value: Value = serde_json::from_slice(&bytes).expect("credential JSON");
    Ok(Output::ok(json!({"credentialId": credential.id, "credential": value})).with_human(credential.id))
}

fn vc_present(ctx: &Ctx, a: VcPresentArgs) -> Result<Output, CliError> {
    let credential = load_credential(&a.credential)?;
    let nonce = parse_nonce(&a.nonce)?;
    let weave = ctx.load_weave()?;
    let dids = DidRegistry::new(weave);
    let (_, pk) = issuer_key(&dids, &credential.issuer, Some(&credential.proof.verification_method))?;
    let disclose: BTreeSet<String> = a.disclose.into_iter().filter(|p| !p.is_empty()).collect();
    let ph = presentation_header(&nonce, a.context.as_bytes());
    let p = present(&credential, &pk, &disclose, &ph, &mut rand::rngs::OsRng)?;
    let bytes = p.to_json();
    write_out(a.out.as_deref(), &bytes)?;
    let value: Value = serde_json::from_slice(&bytes).expect("presentation JSON");
    Ok(Output::ok(json!({"presentation": value})).with_human(String::from_utf8(bytes).expect("UTF-8 JSON")))
}

fn vc_verify(ctx: &Ctx, a: VcVerifyArgs) -> Result<Output, CliError> {
    let p = Presentation::from_json(&read_file(&a.presentation)?)?;
    let nonce = parse_nonce(&a.nonce)?;
    let weave = ctx.load_weave()?;
    let outcome = verify_presentation(&DidRegistry::new(weave), &p, &nonce);
    let disclosed: serde_json::Map<String, Value> =
        outcome.disclosed.iter().map(|(k, v)| (k.clone(), v.to_json())).collect();
    match outcome.reason {
        None => Ok(Output::ok(json!({"outcome": "ACCEPT", "disclosed": disclosed}))
            .with_human(format!("ACCEPT {}", Value::Object(disclosed)))),
        Some(reason) => Ok(Output::reject(
            json!({"outcome": "REJECT", "reason": reason.as_str()}),
            format!("REJECT {reason}"),
        )),
    }
}

fn revoke(ctx: &Ctx, a: RevokeArgs) -> Result<Output, CliError> {
    let issuer = ctx.open_keys(&a.issuer, Capability::SignCredential)?;
    let credential_id = if a.credential.starts_with(credentials::CREDENTIAL_ID_PREFIX) {
        a.credential.clone()
    } else {
        load_credential(Path::new(&a.credential))?.id
    };
    let weave = ctx.load_weave()?;
    let dids = DidRegistry::new(weave.clone());
    let tx = credentials::revoke(&dids, &issuer.did(), &issuer.auth, &credential_id)?;
    let mined = mine_if(&weave, a.mine)?;
    ctx.save_weave(&weave)?;
    Ok(Output::ok(json!({"credentialId": credential_id, "tx": tx, "minedHeight": mined})))
}

fn scenario(ctx: &Ctx, file: &Path) -> Result<Output, CliError> {
    let scenario: Scenario =
        serde_json::from_slice(&read_file(file)?).map_err(|e| CliError::Usage(format!("{}: {e}", file.display())))?;
    let weave = ctx.load_weave()?;
    let report = run_scenario_on(&scenario, weave.clone())?;
    ctx.save_weave(&weave)?;
    let human = report
        .steps
        .iter()
        .map(|s| {
            let mark = if s.matched { "ok " } else { "BAD" };
            let mut line = format!("[{mark}] {:>2} {:<8} {:<6} -> {}", s.index, s.action, s.actor, s.outcome);
            if let Some(disclosed) = s.detail.get("disclosed") {
                line.push_str(&format!(" {disclosed}"));
            }
            line
        })
        .chain([format!("scenario {:?}: {}", report.name, if report.passed { "passed" } else { "FAILED" })])
        .collect::<Vec<_>>()
        .join("\n");
    let value = serde_json::to_value(&report).expect("report serializes");
    Ok(if report.passed {
        Output::ok(value).with_human(human)
    } else {
        Output::reject(value, human)
    })
}

fn weave_cmd(ctx: &Ctx, w: WeaveCmd) -> Result<Output, CliError> {
    let weave = ctx.load_weave()?;
    match w {
        WeaveCmd::Mine => {
            let block = weave.mine_block()?;
            ctx.save_weave(&weave)?;
            Ok(Output::ok(json!({
                "height": block.height,
                "blockId": block.block_id,
                "transactions": block.tx_ids.len(),
            })))
        }
        WeaveCmd::Verify => {
            let report = weave.verify_report();
            let violations: Vec<String> = report.violations.iter().map(ToString::to_string).collect();
            let result = json!({
                "ok": report.is_ok(),
                "blocks": report.blocks,
                "transactions": report.transactions,
                "violations": violations,
            });
            if report.is_ok() {
                Ok(Output::ok(result).with_human(format!("weave ok: {} blocks", report.blocks)))
            } else {
                Ok(Output::reject(result, violations.join("\n")))
            }
        }
        WeaveCmd::Stats => Ok(Output::ok(serde_json::to_value(weave.stats()).expect("stats serialize"))),
    }
}

fn serve(ctx: &Ctx, a: ServeArgs) -> Result<Output, CliError> {
    let weave = ctx.load_weave()?;
    let runtime = tokio::runtime::Runtime::new().map_err(|e| CliError::Internal(e.to_string()))?;
    eprintln!("serving on http://{}", a.addr);
    runtime
        .block_on(crate::http::serve(a.addr, weave.clone(), a.allow_post))
        .map_err(|e| match e {
            crate::http::ServeError::BindFailure { .. } => CliError::refused("BindFailure", e),
            other => CliError::Internal(other.to_string()),
        })?;
    if a.allow_post {
        ctx.save_weave(&weave)?;
    }
    Ok(Output::ok(json!({"stopped": true})))
}

/// Runs the CLI with `args` (including the program name), writing to `out`.
/// Returns the process exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let json_mode = args.iter().any(|a| a == "--json");
    let cli = match Cli::try_parse_from(&args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = write!(out, "{e}");
                return 0;
            }
            if json_mode {
                let body = json!({"command": "", "status": "error", "error": {"code": "Usage", "message": e.to_string()}});
                let _ = writeln!(out, "{body}");
            } else {
                eprint!("{e}");
            }
            return 2;
        }
    };
    let name = command_name(&cli.command);
    let ctx = Ctx {
        home: cli.home,
        passphrase: cli.passphrase,
        consumer: cli.consumer,
    };
    let result = execute(&ctx, cli.command);
    match result {
        Ok(o) => {
            if cli.json {
                let _ = writeln!(out, "{}", json!({"command": name, "status": o.status, "result": o.result}));
            } else {
                let _ = writeln!(out, "{}", o.human);
            }
            if o.status == "ok" {
                0
            } else {
                1
            }
        }
        Err(e) => {
            if cli.json {
                let body = json!({"command": name, "status": "error", "error": {"code": e.code(), "message": e.message()}});
                let _ = writeln!(out, "{body}");
            } else {
                eprintln!("error: {}", e.message());
            }
            e.exit_code()
        }
    }
}
