//! The network face of the platform: accounts and tokens, the chatbot,
//! group chat over HTTP with WebSocket push, and curated content.
//!
//! [`Gateway`] holds the domain operations; [`router`] adapts them to HTTP.

mod error;
mod http;
mod ws;

use std::sync::Arc;
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use amity_core::{BotReply, Dazai};
use parking_lot::{Mutex, RwLock};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use uuid::Uuid;

use crate::auth::{self, AuthError, HashParams, TokenTable, User};
use crate::constellation::{Group, GroupDetails, GroupSummary, Message};
use crate::content::{Content, DoctorProfile, SuggestionPlan};
use crate::store::{Event, SessionOpened, SessionTurn, Store, StoreError};

pub use error::ApiError;
pub use http::{router, serve};
pub use ws::{ClientFrame, ServerFrame};

use ws::Hub;

pub fn now_ms() -> i64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as i64)
        .unwrap_or(0)
}

#[derive(Debug, Clone)]
pub struct GatewayConfig {
    pub hash_params: HashParams,
    pub token_ttl: Duration,
    /// Seed for reply selection; `None` seeds from the OS.
    pub reply_seed: Option<u64>,
    /// Frames a WebSocket connection may have queued before it is dropped.
    pub outbound_queue: usize,
    /// Largest accepted inbound WebSocket frame, in bytes.
    pub max_frame_bytes: usize,
}

impl Default for GatewayConfig {
    fn default() -> Self {
        GatewayConfig {
            hash_params: HashParams::default(),
            token_ttl: auth::DEFAULT_TOKEN_TTL,
            reply_seed: None,
            outbound_queue: 1024,
            max_frame_bytes: 64 * 1024,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Profile {
    pub email: String,
    pub name: String,
    pub created_at: i64,
    pub groups: Vec<GroupSummary>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ExitReply {
    pub deleted: bool,
    pub new_admin: Option<String>,
}

pub struct Gateway {
    store: RwLock<Store>,
    tokens: Mutex<TokenTable>,
    bot: Option<Dazai>,
    hub: Hub,
    rng: Mutex<ChaCha8Rng>,
    config: GatewayConfig,
    /// Verified against on logins for unknown emails, so they cost the same
    /// as a wrong password.
    dummy_hash: String,
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> T + Send + 'static) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::internal(e.to_string()))
}

impl Gateway {
    pub fn new(store: Store, bot: Option<Dazai>, config: GatewayConfig) -> Result<Arc<Gateway>, AuthError> {
        let dummy_hash = auth::hash_password("placeholder password", &config.hash_params)?;
        let rng = match config.reply_seed {
            Some(seed) => ChaCha8Rng::seed_from_u64(seed),
            None => ChaCha8Rng::from_entropy(),
        };
        Ok(Arc::new(Gateway {
            store: RwLock::new(store),
            tokens: Mutex::new(TokenTable::new(config.token_ttl)),
            hub: Hub::new(config.outbound_queue),
            bot,
            rng: Mutex::new(rng),
            config,
            dummy_hash,
        }))
    }

    pub fn config(&self) -> &GatewayConfig {
        &self.config
    }

    pub fn has_model(&self) -> bool {
        self.bot.is_some()
    }

    /// Runs `f` with read access to the store.
    pub fn with_store<T>(&self, f: impl FnOnce(&Store) -> T) -> T {
        f(&self.store.read())
    }

    pub fn flush(&self) -> Result<(), StoreError> {
        self.store.write().flush()
    }

    /// Closes every WebSocket connection.
    pub fn close_connections(&self) {
        self.hub.close_all();
    }

    // ---- accounts ----

    pub async fn register(&self, email: &str, name: &str, password: &str) -> Result<String, ApiError> {
        let email = auth::normalize_email(email)?;
        let name = name.trim().to_string();
        if name.is_empty() || name.chars().count() > 128 {
            return Err(AuthError::InvalidName.into());
        }
        auth::check_password(password)?;
        if self.store.read().state().users.contains_key(&email) {
            return Err(AuthError::EmailTaken.into());
        }
        let password = password.to_string();
        let params = self.config.hash_params;
        let password_hash = blocking(move || auth::hash_password(&password, &params)).await??;
        let now = now_ms();
        self.store.write().append(Event::UserRegistered(User {
            email: email.clone(),
            name,
            password_hash,
            created_at: now,
        }))?;
        Ok(self.tokens.lock().issue(&email, now))
    }

    pub async fn login(&self, email: &str, password: &str) -> Result<String, ApiError> {
        let email = auth::normalize_email(email).unwrap_or_default();
        let stored = self
            .store
            .read()
            .state()
            .users
            .get(&email)
            .map(|u| u.password_hash.clone());
        let known = stored.is_some();
        let hash = stored.unwrap_or_else(|| self.dummy_hash.clone());
        let password = password.to_string();
        let ok = blocking(move || auth::verify_password(&password, &hash)).await?;
        if !(known && ok) {
            return Err(AuthError::AuthFailed.into());
        }
        Ok(self.tokens.lock().issue(&email, now_ms()))
    }

    /// The email bound to a live token.
    pub fn authenticate(&self, token: &str) -> Result<String, ApiError> {
        Ok(self.tokens.lock().resolve(token, now_ms())?)
    }

    pub fn logout(&self, token: &str) -> Result<(), ApiError> {
        Ok(self.tokens.lock().revoke(token)?)
    }

    pub fn profile(&self, email: &str) -> Result<Profile, ApiError> {
        let store = self.store.read();
        let user = store.get_user(email)?;
        Ok(Profile {
            email: user.email.clone(),
            name: user.name.clone(),
            created_at: user.created_at,
            groups: store.state().constellation.member_of(email),
        })
    }

    // ---- chatbot ----

    /// Answers on the user's active session, opening one if needed. Holding
    /// the store lock for the whole exchange serializes calls per session.
    pub fn chat(&self, email: &str, text: &str) -> Result<BotReply, ApiError> {
        let bot = self.bot.as_ref().ok_or_else(ApiError::model_unavailable)?;
        let mut store = self.store.write();
        let now = now_ms();
        let session_id = match store.state().active_sessions.get(email) {
            Some(id) => id.clone(),
            None => {
                let id = Uuid::new_v4().to_string();
                store.append(Event::SessionOpened(SessionOpened {
                    session_id: id.clone(),
                    email: email.to_string(),
                    at: now,
                }))?;
                id
            }
        };
        let mut session = store.session(&session_id)?.clone();
        let before = session.turns.len();
        let reply = bot.respond(&mut session, text, &mut *self.rng.lock(), now);
        for turn in session.turns.drain(before..) {
            store.append(Event::SessionTurn(SessionTurn {
                session_id: session_id.clone(),
                turn,
            }))?;
        }
        Ok(reply)
    }

    // ---- groups ----

    pub fn search_groups(&self, query: &str) -> Vec<GroupSummary> {
        self.store.read().state().constellation.search_groups(query)
    }

    pub fn create_group(&self, email: &str, name: &str) -> Result<Group, ApiError> {
        let mut store = self.store.write();
        let ev = store
            .state()
            .constellation
            .plan_create(email, name, &Uuid::new_v4().to_string(), now_ms())?;
        let group_id = ev.group_id.clone();
        store.append(Event::GroupCreated(ev))?;
        Ok(store.get_group(&group_id)?.clone())
    }

    pub fn join_group(&self, email: &str, group_id: &str) -> Result<GroupDetails, ApiError> {
        let mut store = self.store.write();
        let ev = store.state().constellation.plan_join(email, group_id, now_ms())?;
        store.append(Event::MemberJoined(ev))?;
        Ok(store.state().constellation.group_details(email, group_id)?)
    }

    pub fn exit_group(&self, email: &str, group_id: &str) -> Result<ExitReply, ApiError> {
        let mut store = self.store.write();
        let ev = store.state().constellation.plan_exit(email, group_id, now_ms())?;
        store.append(Event::MemberExited(ev))?;
        self.hub.drop_member(group_id, email);
        let group = store.state().constellation.group(group_id);
        Ok(ExitReply {
            deleted: group.is_none(),
            new_admin: group.map(|g| g.admin.clone()),
        })
    }

    pub fn group_details(&self, email: &str, group_id: &str) -> Result<GroupDetails, ApiError> {
        Ok(self.store.read().state().constellation.group_details(email, group_id)?)
    }

    pub fn messages(&self, email: &str, group_id: &str, since: u64) -> Result<Vec<Message>, ApiError> {
        Ok(self
            .store
            .read()
            .state()
            .constellation
            .fetch_messages(email, group_id, since)?
            .to_vec())
    }

    /// Appends the message and pushes it to subscribers while still holding
    /// the write lock, so every subscriber sees posts in seq order.
    pub fn post_message(&self, email: &str, group_id: &str, body: &str) -> Result<Message, ApiError> {
        let mut store = self.store.write();
        let msg = store.state().constellation.plan_post(
            email,
            group_id,
            body,
            &Uuid::new_v4().to_string(),
            now_ms(),
        )?;
        store.append(Event::MessagePosted(msg.clone()))?;
        self.hub.publish(&msg);
        Ok(msg)
    }

    // ---- content ----

    pub fn suggestions(&self, topic: &str) -> Result<SuggestionPlan, ApiError> {
        self.store
            .read()
            .state()
            .content
            .suggestion(topic)
            .cloned()
            .ok_or_else(|| ApiError::not_found(format!("no suggestions for topic {topic:?}")))
    }

    pub fn doctors(&self) -> Vec<DoctorProfile> {
        self.store.read().state().content.doctors.clone()
    }

    pub fn seed_content(&self, content: Content) -> Result<(), ApiError> {
        self.store.write().append(Event::ContentSeeded(content))?;
        Ok(())
    }
}
