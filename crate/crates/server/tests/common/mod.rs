#![allow(dead_code)]

use std::net::SocketAddr;
use std::path::Path;
use std::sync::{Arc, OnceLock};

use amity_core::neuralnet::{train, Architecture};
use amity_core::{Category, Dazai, Intent, IntentCorpus, TrainConfig};
use amity_server::auth::HashParams;
use amity_server::store::StoreOptions;
use amity_server::{serve, Gateway, GatewayConfig, Store};
use reqwest::StatusCode;
use serde_json::{json, Value};
use tokio::sync::oneshot;
use tokio::task::JoinHandle;

pub const PASSWORD: &str = "correct horse battery";

pub fn small_corpus() -> IntentCorpus {
    let mk = |tag: &str, patterns: &[&str], responses: &[&str]| Intent {
        tag: tag.into(),
        category: Category::Descriptive,
        patterns: patterns.iter().map(|s| s.to_string()).collect(),
        responses: responses.iter().map(|s| s.to_string()).collect(),
    };
    IntentCorpus::new(
        "1",
        vec![
            mk("greeting", &["Hi", "Hello", "Hey there"], &["Hello there. Tell me how are you feeling today"]),
            mk(
                "anxious",
                &["I have anxiety", "I feel anxious", "I am so nervous"],
                &["Try slow breathing and a short mindfulness exercise."],
            ),
            mk("afternoon", &["Good afternoon", "Afternoon"], &["Good afternoon. How is your day going?"]),
        ],
    )
    .unwrap()
}

/// A bot trained on [`small_corpus`], shared by every test in a binary.
pub fn small_bot() -> Dazai {
    static BOT: OnceLock<Dazai> = OnceLock::new();
    BOT.get_or_init(|| {
        let corpus = small_corpus();
        let arch = Architecture {
            embedding_dim: 8,
            lstm_units: 8,
            dense_units: 16,
            ..Architecture::default()
        };
        let tc = TrainConfig {
            epochs: 80,
            batch_size: 4,
            learning_rate: 1e-2,
            ..TrainConfig::default()
        };
        let out = train(&corpus, &arch, &tc).unwrap();
        assert_eq!(out.final_accuracy(), Some(1.0));
        Dazai::new(out.model, &corpus).unwrap()
    })
    .clone()
}

pub fn test_config() -> GatewayConfig {
    GatewayConfig {
        hash_params: HashParams::fast(),
        reply_seed: Some(0),
        ..GatewayConfig::default()
    }
}

pub struct TestServer {
    pub addr: SocketAddr,
    pub gw: Arc<Gateway>,
    shutdown: Option<oneshot::Sender<()>>,
    task: JoinHandle<std::io::Result<()>>,
}

impl TestServer {
    pub async fn start(dir: &Path, bot: Option<Dazai>) -> TestServer {
        Self::start_with(dir, bot, test_config()).await
    }

    pub async fn start_with(dir: &Path, bot: Option<Dazai>, config: GatewayConfig) -> TestServer {
        let store = Store::open_with(dir, StoreOptions { sync: false }).unwrap();
        let gw = Gateway::new(store, bot, config).unwrap();
        let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
        let addr = listener.local_addr().unwrap();
        let (tx, rx) = oneshot::channel::<()>();
        let task = tokio::spawn(serve(listener, gw.clone(), async {
            let _ = rx.await;
        }));
        TestServer {
            addr,
            gw,
            shutdown: Some(tx),
            task,
        }
    }

    pub fn url(&self, path: &str) -> String {
        format!("http://{}{}", self.addr, path)
    }

    pub fn ws_url(&self, token: &str) -> String {
        format!("ws://{}/ws?token={}", self.addr, token)
    }

    pub fn client(&self) -> Client {
        Client {
            http: reqwest::Client::new(),
            base: format!("http://{}", self.addr),
            token: None,
        }
    }

    pub async fn stop(mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        (&mut self.task).await.unwrap().unwrap();
    }
}

#[derive(Clone)]
pub struct Client {
    pub http: reqwest::Client,
    pub base: String,
    pub token: Option<String>,
}

impl Client {
    pub async fn call(&self, method: &str, path: &str, body: Option<Value>) -> (StatusCode, Value) {
        let method = reqwest::Method::from_bytes(method.as_bytes()).unwrap();
        let mut req = self.http.request(method, format!("{}{}", self.base, path));
        if let Some(t) = &self.token {
            req = req.bearer_auth(t);
        }
        if let Some(b) = body {
            req = req.json(&b);
        }
        let resp = req.send().await.unwrap();
        let status = resp.status();
        let text = resp.text().await.unwrap();
        let value = if text.is_empty() { Value::Null } else { serde_json::from_str(&text).unwrap() };
        (status, value)
    }

    pub async fn get(&self, path: &str) -> (StatusCode, Value) {
        self.call("GET", path, None).await
    }

    pub async fn post(&self, path: &str, body: Value) -> (StatusCode, Value) {
        self.call("POST", path, Some(body)).await
    }

    /// Registers `email` and returns a client holding its token.
    pub async fn register(&self, email: &str) -> Client {
        let (status, body) = self
            .post("/api/register", json!({"email": email, "name": "Test User", "password": PASSWORD}))
            .await;
        assert_eq!(status, StatusCode::CREATED, "{body}");
        Client {
            token: Some(body["token"].as_str().unwrap().to_string()),
            ..self.clone()
        }
    }

    pub fn token(&self) -> &str {
        self.token.as_deref().unwrap()
    }
}

pub fn error_code(body: &Value) -> &str {
    body["error"]["code"].as_str().unwrap_or("")
}
