use std::sync::Arc;

use axum::body::{to_bytes, Body};
use axum::http::{header, Request, StatusCode};
use axum::Router;
use permadid::credentials::{ClaimValue, Claims, Schema};
use permadid::protocol::{Network, Role};
use permadid::weave::{Tag, Transaction, WeaveStore};
use permadid_gateway::http::{router, serve, ServeError};
use serde_json::Value;
use tower::ServiceExt;

struct Seeded {
    weave: Arc<WeaveStore>,
    alice_doc_tx: String,
    alice_did: String,
}

fn seeded() -> Seeded {
    let mut net = Network::new(7);
    let gov = net.setup_entity(Role::Issuer, "gov", Some("gov")).unwrap();
    let mut alice = net.setup_entity(Role::Holder, "alice", Some("alice")).unwrap();
    let mut claims = Claims::new();
    claims.insert("age".into(), ClaimValue::Integer(25));
    let credential = net.run_issuance(&gov, &mut alice, claims, Schema::Open, &[]).unwrap();
    net.revoke(&gov, &credential.id).unwrap();
    let key = permadid::keys::generate(net.rng());
    net.weave()
        .submit(&key, vec![Tag::new("Content-Type", "text/plain")], b"hello weave".to_vec())
        .unwrap();
    net.mine().unwrap();
    Seeded {
        weave: net.weave().clone(),
        alice_doc_tx: alice.published_doc_tx.clone().unwrap().to_string(),
        alice_did: alice.did.to_string(),
    }
}

async fn get(app: &Router, uri: &str) -> (StatusCode, axum::http::HeaderMap, Vec<u8>) {
    let resp = app.clone().oneshot(Request::get(uri).body(Body::empty()).unwrap()).await.unwrap();
    let status = resp.status();
    let headers = resp.headers().clone();
    let body = to_bytes(resp.into_body(), usize::MAX).await.unwrap().to_vec();
    (status, headers, body)
}

fn json(body: &[u8]) -> Value {
    serde_json::from_slice(body).unwrap()
}

#[tokio::test]
async fn reads_are_served_and_never_mutate() {
    let s = seeded();
    let before = s.weave.snapshot_digest();
    let app = router(s.weave.clone(), false);

    let (status, headers, body) = get(&app, &format!("/tx/{}", s.alice_doc_tx)).await;
    assert_eq!(status, StatusCode::OK);
    let doc = json(&body);
    assert_eq!(doc["id"], s.alice_did.as_str());
    assert!(headers[header::CONTENT_TYPE].to_str().unwrap().contains("json"));
    let (status, _, bare) = get(&app, &format!("/{}", s.alice_doc_tx)).await;
    assert_eq!((status, &bare), (StatusCode::OK, &body));

    let (status, _, meta) = get(&app, &format!("/tx/{}/json", s.alice_doc_tx)).await;
    assert_eq!(status, StatusCode::OK);
    let meta = json(&meta);
    assert_eq!(meta["id"], s.alice_doc_tx.as_str());
    assert_eq!(meta["sealed"], true);

    let plain = s.weave.query(&[Tag::new("Content-Type", "text/plain")]);
    let (status, headers, body) = get(&app, &format!("/tx/{}", plain[0])).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(headers[header::CONTENT_TYPE], "text/plain");
    assert_eq!(body, b"hello weave");

    let (status, headers, body) = get(&app, "/name/alice").await;
    assert_eq!(status, StatusCode::FOUND);
    assert_eq!(headers[header::LOCATION], format!("/{}", s.alice_doc_tx).as_str());
    assert_eq!(json(&body)["target"], s.alice_doc_tx.as_str());

    for reference in ["alice", s.alice_did.as_str()] {
        let (status, _, body) = get(&app, &format!("/did/{reference}")).await;
        assert_eq!(status, StatusCode::OK);
        let body = json(&body);
        assert_eq!(body["didDocument"]["id"], s.alice_did.as_str());
        assert_eq!(body["metadata"]["tx"], s.alice_doc_tx.as_str());
    }

    let (status, _, body) = get(&app, "/weave/stats").await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(json(&body)["pending"], 0);

    let missing = "A".repeat(43);
    for (uri, want) in [
        (format!("/tx/{missing}"), StatusCode::NOT_FOUND),
        (format!("/{missing}"), StatusCode::NOT_FOUND),
        ("/tx/short".to_owned(), StatusCode::BAD_REQUEST),
        ("/name/ghost".to_owned(), StatusCode::NOT_FOUND),
        ("/name/Bad%20Name".to_owned(), StatusCode::BAD_REQUEST),
        (format!("/did/did:arweave:{missing}"), StatusCode::NOT_FOUND),
        ("/did/did:web:example.com".to_owned(), StatusCode::NOT_FOUND),
        ("/no/such/route".to_owned(), StatusCode::NOT_FOUND),
    ] {
        let (status, _, body) = get(&app, &uri).await;
        assert_eq!(status, want, "{uri}");
        assert!(json(&body)["error"].is_string(), "{uri}");
    }

    let resp = app
        .clone()
        .oneshot(Request::post("/tx").body(Body::from("{}")).unwrap())
        .await
        .unwrap();
    assert!(resp.status().is_client_error());
    assert_eq!(s.weave.snapshot_digest(), before);
    assert_eq!(s.weave.stats().pending, 0);
}

#[tokio::test]
async fn post_submits_only_when_enabled() {
    let s = seeded();
    let app = router(s.weave.clone(), true);
    let key = permadid::keys::generate(&mut rand::rngs::OsRng);
    let tx = Transaction::signed(&key, vec![Tag::new("App", "test")], b"posted".to_vec());
    let body = serde_json::to_vec(&tx).unwrap();
    let post = |body: Vec<u8>| Request::post("/tx").body(Body::from(body)).unwrap();

    let resp = app.clone().oneshot(post(body.clone())).await.unwrap();
    assert_eq!(resp.status(), StatusCode::ACCEPTED);
    let id = json(&to_bytes(resp.into_body(), usize::MAX).await.unwrap());
    assert_eq!(id["id"], tx.id.to_string());
    assert_eq!(s.weave.stats().pending, 1);
    let (status, _, data) = get(&app, &format!("/tx/{}", tx.id)).await;
    assert_eq!((status, data.as_slice()), (StatusCode::OK, &b"posted"[..]));

    let mut forged: Value = serde_json::from_slice(&body).unwrap();
    forged["data"] = permadid::encoding::b64url(b"other").into();
    let resp = app.clone().oneshot(post(forged.to_string().into_bytes())).await.unwrap();
    assert_eq!(resp.status(), StatusCode::BAD_REQUEST);
    let resp = app.oneshot(post(b"not json".to_vec())).await.unwrap();
    assert_eq!(resp.status(), StatusCode::BAD_REQUEST);
    assert_eq!(s.weave.stats().pending, 1);
}

#[tokio::test]
async fn occupied_port_is_a_bind_failure() {
    let taken = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = taken.local_addr().unwrap();
    let err = serve(addr, Arc::new(WeaveStore::default()), false).await.unwrap_err();
    assert!(matches!(err, ServeError::BindFailure { addr: a, .. } if a == addr), "{err}");
}
