mod common;

use std::time::Duration;

use common::{error_code, small_bot, test_config, TestServer, PASSWORD};
use reqwest::StatusCode;
use serde_json::{json, Value};

#[tokio::test]
async fn register_login_logout() {
    let dir = tempfile::tempdir().unwrap();
    let server = TestServer::start(dir.path(), None).await;
    let anon = server.client();

    let alice = anon.register("alice@example.com").await;
    let (status, profile) = alice.get("/api/profile").await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(profile["email"], "alice@example.com");
    assert_eq!(profile["name"], "Test User");
    assert!(profile.get("password_hash").is_none());

    let (status, body) = anon
        .post("/api/register", json!({"email": "ALICE@example.com", "name": "A", "password": PASSWORD}))
        .await;
    assert_eq!((status, error_code(&body)), (StatusCode::CONFLICT, "EmailTaken"));
    let (status, body) = anon
        .post("/api/register", json!({"email": "bob@example.com", "name": "B", "password": "abc"}))
        .await;
    assert_eq!((status, error_code(&body)), (StatusCode::BAD_REQUEST, "WeakPassword"));
    let (status, body) = anon
        .post("/api/register", json!({"email": "bob", "name": "B", "password": PASSWORD}))
        .await;
    assert_eq!((status, error_code(&body)), (StatusCode::BAD_REQUEST, "InvalidEmail"));
    let (status, body) = anon.post("/api/register", json!({"email": "bob@example.com"})).await;
    assert_eq!((status, error_code(&body)), (StatusCode::BAD_REQUEST, "BadRequest"));

    let (status, body) = anon
        .post("/api/login", json!({"email": "alice@example.com", "password": PASSWORD}))
        .await;
    assert_eq!(status, StatusCode::OK);
    let second = common::Client {
        token: Some(body["token"].as_str().unwrap().into()),
        ..anon.clone()
    };
    assert_ne!(second.token(), alice.token());

    let (status, _) = alice.post("/api/logout", json!({})).await;
    assert_eq!(status, StatusCode::NO_CONTENT);
    let (status, body) = alice.get("/api/profile").await;
    assert_eq!((status, error_code(&body)), (StatusCode::UNAUTHORIZED, "Unauthorized"));
    let (status, _) = alice.post("/api/logout", json!({})).await;
    assert_eq!(status, StatusCode::UNAUTHORIZED);
    // the other token of the same user still works
    assert_eq!(second.get("/api/profile").await.0, StatusCode::OK);
    server.stop().await;
}

#[tokio::test]
async fn login_failures_are_indistinguishable() {
    let dir = tempfile::tempdir().unwrap();
    let server = TestServer::start(dir.path(), None).await;
    let anon = server.client();
    anon.register("alice@example.com").await;

    let wrong = anon
        .post("/api/login", json!({"email": "alice@example.com", "password": "not the password"}))
        .await;
    let unknown = anon
        .post("/api/login", json!({"email": "nobody@example.com", "password": "not the password"}))
        .await;
    let malformed = anon
        .post("/api/login", json!({"email": "nobody", "password": "x"}))
        .await;
    assert_eq!(wrong.0, StatusCode::UNAUTHORIZED);
    assert_eq!(error_code(&wrong.1), "AuthFailed");
    assert_eq!(wrong, unknown);
    assert_eq!(wrong, malformed);
    server.stop().await;
}

#[tokio::test]
async fn protected_endpoints_require_a_token() {
    let dir = tempfile::tempdir().unwrap();
    let server = TestServer::start(dir.path(), Some(small_bot())).await;
    let anon = server.client();
    let alice = anon.register("alice@example.com").await;
    let (_, group) = alice.post("/api/groups", json!({"name": "Anxiety Support"})).await;
    let gid = group["group_id"].as_str().unwrap().to_string();
    let before = server.gw.with_store(|s| s.last_seq());

    let bogus = common::Client {
        token: Some("0".repeat(64)),
        ..anon.clone()
    };
    let endpoints: Vec<(&str, String, Option<Value>)> = vec![
        ("POST", "/api/logout".into(), None),
        ("GET", "/api/profile".into(), None),
        ("POST", "/api/chatbot".into(), Some(json!({"text": "hi"}))),
        ("GET", "/api/groups?query=a".into(), None),
        ("POST", "/api/groups".into(), Some(json!({"name": "x"}))),
        ("POST", format!("/api/groups/{gid}/join"), None),
        ("POST", format!("/api/groups/{gid}/exit"), None),
        ("GET", format!("/api/groups/{gid}"), None),
        ("GET", format!("/api/groups/{gid}/messages?since=0"), None),
        ("POST", format!("/api/groups/{gid}/messages"), Some(json!({"body": "x"}))),
        ("GET", "/api/suggestions/anxiety".into(), None),
        ("GET", "/api/doctors".into(), None),
    ];
    for client in [&anon, &bogus] {
        for (method, path, body) in &endpoints {
            let (status, resp) = client.call(method, path, body.clone()).await;
            assert_eq!(status, StatusCode::UNAUTHORIZED, "{method} {path}");
            assert_eq!(error_code(&resp), "Unauthorized", "{method} {path}");
        }
    }
    // an invalid body is still refused as Unauthorized, not BadRequest
    let (status, _) = anon.call("POST", "/api/groups", Some(json!({"nonsense": 1}))).await;
    assert_eq!(status, StatusCode::UNAUTHORIZED);
    let ws = reqwest::get(server.url("/ws?token=bad")).await.unwrap();
    assert_eq!(ws.status(), StatusCode::UNAUTHORIZED);

    assert_eq!(server.gw.with_store(|s| s.last_seq()), before);
    server.stop().await;
}

#[tokio::test]
async fn expired_tokens_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let config = amity_server::GatewayConfig {
        token_ttl: Duration::ZERO,
        ..test_config()
    };
    let server = TestServer::start_with(dir.path(), None, config).await;
    let alice = server.client().register("alice@example.com").await;
    let (status, body) = alice.get("/api/profile").await;
    assert_eq!((status, error_code(&body)), (StatusCode::UNAUTHORIZED, "Unauthorized"));
    server.stop().await;
}

#[tokio::test]
async fn chatbot_replies_and_sessions_persist() {
    let dir = tempfile::tempdir().unwrap();
    let server = TestServer::start(dir.path(), Some(small_bot())).await;
    let alice = server.client().register("alice@example.com").await;

    let (status, reply) = alice.post("/api/chatbot", json!({"text": "I have anxiety"})).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(reply["tag"], "anxious");
    assert_eq!(reply["fallback"], false);
    assert!(reply["reply"].as_str().unwrap().contains("breathing"));
    let (_, hi) = alice.post("/api/chatbot", json!({"text": "Hi"})).await;
    assert_eq!(hi["reply"], "Hello there. Tell me how are you feeling today");
    let (_, empty) = alice.post("/api/chatbot", json!({"text": "?!"})).await;
    assert_eq!(empty["fallback"], true);
    assert_eq!(empty["tag"], Value::Null);

    let session = server.gw.with_store(|s| {
        let id = s.state().active_sessions["alice@example.com"].clone();
        s.session(&id).unwrap().clone()
    });
    assert_eq!(session.turns.len(), 6);
    server.stop().await;

    let server = TestServer::start(dir.path(), Some(small_bot())).await;
    let reopened = server.gw.with_store(|s| s.session(&session.session_id).unwrap().clone());
    assert_eq!(reopened, session);
    server.stop().await;
}

#[tokio::test]
async fn chatbot_without_model_is_unavailable() {
    let dir = tempfile::tempdir().unwrap();
    let server = TestServer::start(dir.path(), None).await;
    let alice = server.client().register("alice@example.com").await;
    let (status, body) = alice.post("/api/chatbot", json!({"text": "hi"})).await;
    assert_eq!((status, error_code(&body)), (StatusCode::SERVICE_UNAVAILABLE, "ModelUnavailable"));
    server.stop().await;
}

#[tokio::test]
async fn group_lifecycle() {
    let dir = tempfile::tempdir().unwrap();
    let server = TestServer::start(dir.path(), None).await;
    let anon = server.client();
    let alice = anon.register("alice@example.com").await;
    let bob = anon.register("bob@example.com").await;
    let carol = anon.register("carol@example.com").await;

    let (status, body) = alice.post("/api/groups", json!({"name": ""})).await;
    assert_eq!((status, error_code(&body)), (StatusCode::BAD_REQUEST, "InvalidName"));
    let (status, group) = alice.post("/api/groups", json!({"name": "Anxiety Support"})).await;
    assert_eq!(status, StatusCode::CREATED);
    assert_eq!(group["admin"], "alice@example.com");
    let gid = group["group_id"].as_str().unwrap().to_string();

    let (_, hits) = bob.get("/api/groups?query=ANX").await;
    assert_eq!(hits, json!([{"group_id": gid, "name": "Anxiety Support", "member_count": 1}]));
    let (_, all) = bob.get("/api/groups").await;
    assert_eq!(all.as_array().unwrap().len(), 1);

    let (status, body) = bob.get(&format!("/api/groups/{gid}")).await;
    assert_eq!((status, error_code(&body)), (StatusCode::FORBIDDEN, "NotAMember"));
    let (status, details) = bob.post(&format!("/api/groups/{gid}/join"), json!({})).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(details["member_count"], 2);
    let (status, body) = bob.post(&format!("/api/groups/{gid}/join"), json!({})).await;
    assert_eq!((status, error_code(&body)), (StatusCode::CONFLICT, "AlreadyMember"));
    carol.post(&format!("/api/groups/{gid}/join"), json!({})).await;
    let (status, body) = carol.post("/api/groups/nope/join", json!({})).await;
    assert_eq!((status, error_code(&body)), (StatusCode::NOT_FOUND, "GroupNotFound"));

    let (status, m1) = alice.post(&format!("/api/groups/{gid}/messages"), json!({"body": "welcome"})).await;
    assert_eq!(status, StatusCode::CREATED);
    assert_eq!(m1["seq"], 1);
    let (_, m2) = bob.post(&format!("/api/groups/{gid}/messages"), json!({"body": "thanks"})).await;
    assert_eq!(m2["seq"], 2);
    let (status, body) = bob.post(&format!("/api/groups/{gid}/messages"), json!({"body": "  "})).await;
    assert_eq!((status, error_code(&body)), (StatusCode::BAD_REQUEST, "EmptyBody"));
    let (status, body) = bob
        .post(&format!("/api/groups/{gid}/messages"), json!({"body": "x".repeat(4097)}))
        .await;
    assert_eq!((status, error_code(&body)), (StatusCode::PAYLOAD_TOO_LARGE, "BodyTooLarge"));

    let (_, msgs) = carol.get(&format!("/api/groups/{gid}/messages?since=0")).await;
    assert_eq!(msgs.as_array().unwrap().len(), 2);
    let (_, tail) = carol.get(&format!("/api/groups/{gid}/messages?since=1")).await;
    assert_eq!(tail[0]["body"], "thanks");
    let (status, _) = carol.get(&format!("/api/groups/{gid}/messages?since=abc")).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);

    let (_, out) = alice.post(&format!("/api/groups/{gid}/exit"), json!({})).await;
    assert_eq!(out, json!({"deleted": false, "new_admin": "bob@example.com"}));
    let (_, details) = carol.get(&format!("/api/groups/{gid}")).await;
    assert_eq!(details["admin"], "bob@example.com");
    let (status, body) = alice.post(&format!("/api/groups/{gid}/exit"), json!({})).await;
    assert_eq!((status, error_code(&body)), (StatusCode::FORBIDDEN, "NotAMember"));

    let (_, profile) = carol.get("/api/profile").await;
    assert_eq!(profile["groups"][0]["group_id"], gid.as_str());

    bob.post(&format!("/api/groups/{gid}/exit"), json!({})).await;
    let (_, out) = carol.post(&format!("/api/groups/{gid}/exit"), json!({})).await;
    assert_eq!(out["deleted"], true);
    let (_, all) = carol.get("/api/groups?query=").await;
    assert_eq!(all, json!([]));
    server.stop().await;
}

#[tokio::test]
async fn content_endpoints() {
    let dir = tempfile::tempdir().unwrap();
    let server = TestServer::start(dir.path(), None).await;
    let alice = server.client().register("alice@example.com").await;

    let (status, body) = alice.get("/api/suggestions/anxiety").await;
    assert_eq!((status, error_code(&body)), (StatusCode::NOT_FOUND, "NotFound"));
    let (_, doctors) = alice.get("/api/doctors").await;
    assert_eq!(doctors, json!([]));

    let content = amity_server::content::parse_content(
        r#"{"suggestions":[{"topic":"anxiety","diet":["oats"],"exercise":["yoga"]}],
            "doctors":[{"name":"Dr. R","description":"Psychiatrist","timings":"10-4",
                        "address":"2 Elm Rd","contact_number":"555-0101"}]}"#,
    )
    .unwrap();
    server.gw.seed_content(content).unwrap();
    let (status, plan) = alice.get("/api/suggestions/anxiety").await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(plan["diet"], json!(["oats"]));
    let (status, _) = alice.get("/api/suggestions/unknown").await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    let (_, doctors) = alice.get("/api/doctors").await;
    for field in ["name", "description", "timings", "address", "contact_number"] {
        assert!(doctors[0][field].as_str().is_some_and(|s| !s.is_empty()), "{field}");
    }
    let (status, body) = alice.get("/api/nowhere").await;
    assert_eq!((status, error_code(&body)), (StatusCode::NOT_FOUND, "NotFound"));
    server.stop().await;
}

#[tokio::test]
async fn no_plaintext_password_on_disk() {
    let dir = tempfile::tempdir().unwrap();
    let server = TestServer::start(dir.path(), Some(small_bot())).await;
    let anon = server.client();
    let alice = anon.register("alice@example.com").await;
    anon.post("/api/login", json!({"email": "alice@example.com", "password": PASSWORD}))
        .await;
    alice.post("/api/chatbot", json!({"text": "Hi"})).await;
    let (_, profile) = alice.get("/api/profile").await;
    assert!(!profile.to_string().contains(PASSWORD));
    server.stop().await;

    for entry in std::fs::read_dir(dir.path()).unwrap() {
        let bytes = std::fs::read(entry.unwrap().path()).unwrap();
        assert!(!bytes.windows(PASSWORD.len()).any(|w| w == PASSWORD.as_bytes()));
    }
    let log = std::fs::read(dir.path().join("events.log")).unwrap();
    assert!(String::from_utf8_lossy(&log).contains("$argon2id$"));
}
