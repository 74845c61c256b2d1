//! Self-sovereign identity over a simulated permanent-storage blockweave.
//!
//! The crate is layered bottom-up:
//!
//! * [`weave`]: content-addressed, append-only transaction store organized
//!   as a blockweave (each block links its predecessor and one recall block).
//! * [`names`]: human-readable names mapped to transaction ids, with
//!   signature-enforced ownership; records live on the weave.
//! * [`did`]: the `did:arweave` method (documents, publication, resolution).
//! * [`bbs`]: BBS multi-message signatures and selective-disclosure proofs
//!   over BLS12-381.
//! * [`credentials`]: verifiable credentials, presentations, issuer-computed
//!   predicate claims and revocation lists.
//! * [`protocol`]: issuer/holder/verifier orchestration, key refresh and the
//!   JSON scenario runner.

pub mod bbs;
pub mod credentials;
pub mod did;
pub mod encoding;
pub mod keys;
pub mod names;
pub mod protocol;
pub mod weave;

pub use did::{Did, DidDocument, DidRegistry};
pub use names::{NameRecord, NameRegistry};
pub use weave::{Address, Tag, Transaction, TxId, WeaveStore};
