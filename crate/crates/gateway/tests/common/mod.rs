#![allow(dead_code)]

use std::path::Path;

use serde_json::Value;

pub const PASS: &str = "correct horse battery staple";

pub struct Home {
    pub dir: tempfile::TempDir,
}

impl Home {
    pub fn new() -> Self {
        Self {
            dir: tempfile::tempdir().unwrap(),
        }
    }

    pub fn path(&self) -> &Path {
        self.dir.path()
    }

    pub fn file(&self, name: &str) -> String {
        self.path().join(name).to_str().unwrap().to_owned()
    }

    /// Runs `permadid --home <dir> --passphrase PASS <args>`; returns the exit
    /// code and stdout.
    pub fn run(&self, args: &[&str]) -> (i32, String) {
        let mut argv = vec!["permadid", "--home", self.path().to_str().unwrap()];
        if !args.contains(&"--passphrase") {
            argv.extend(["--passphrase", PASS]);
        }
        argv.extend_from_slice(args);
        let mut out = Vec::new();
        let code = permadid_gateway::cli::run(argv, &mut out);
        (code, String::from_utf8(out).unwrap())
    }

    /// `--json` run; returns the exit code and the parsed envelope.
    pub fn json(&self, args: &[&str]) -> (i32, Value) {
        let mut argv = vec!["--json"];
        argv.extend_from_slice(args);
        let (code, out) = self.run(&argv);
        let value = serde_json::from_str(out.trim()).unwrap_or_else(|e| panic!("{args:?}: {e}: {out}"));
        (code, value)
    }

    pub fn ok(&self, args: &[&str]) -> Value {
        let (code, v) = self.json(args);
        assert_eq!(code, 0, "{args:?} -> {v}");
        v["result"].clone()
    }

    /// Issuer `gov` and holder `alice`, both published and named, with an
    /// `{name: Alice, age: 25}` credential at `cred.json`.
    pub fn alice(&self) -> Value {
        self.ok(&["keygen", "--label", "gov", "--role", "issuer"]);
        self.ok(&["keygen", "--label", "alice"]);
        self.ok(&["did", "publish", "--label", "gov"]);
        self.ok(&["did", "publish", "--label", "alice", "--mine"]);
        self.ok(&["name", "register", "gov", "--label", "gov"]);
        self.ok(&["name", "register", "alice", "--label", "alice", "--mine"]);
        let cred = self.file("cred.json");
        self.ok(&[
            "vc", "issue", "--issuer", "gov", "--holder", "alice",
            "--claims", r#"{"name":"Alice","age":25}"#, "--out", &cred,
        ])
    }
}

pub fn contains(haystack: &[u8], needle: &[u8]) -> bool {
    !needle.is_empty() && haystack.windows(needle.len()).any(|w| w == needle)
}

pub fn output_validator() -> jsonschema::Validator {
    let schema: Value = serde_json::from_str(permadid_gateway::cli::OUTPUT_SCHEMA).unwrap();
    jsonschema::validator_for(&schema).unwrap()
}
