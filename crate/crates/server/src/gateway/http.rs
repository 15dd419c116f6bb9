use std::future::Future;
use std::io;
use std::sync::Arc;

use axum::extract::rejection::QueryRejection;
use axum::extract::ws::rejection::WebSocketUpgradeRejection;
use axum::extract::ws::WebSocketUpgrade;
use axum::extract::{FromRequest, FromRequestParts, Path, Query, Request, State};
use axum::http::request::Parts;
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::de::DeserializeOwned;
use serde::Deserialize;
use serde_json::json;
use tokio::net::TcpListener;

use super::{ApiError, Gateway};
use crate::auth::AuthError;

type Shared = Arc<Gateway>;

/// A caller authenticated by `Authorization: Bearer <token>`. Extracted
/// before any body, so bad tokens are refused before domain state is read.
pub struct AuthUser {
    pub email: String,
    pub token: String,
}

impl FromRequestParts<Shared> for AuthUser {
    type Rejection = ApiError;

    async fn from_request_parts(parts: &mut Parts, gw: &Shared) -> Result<Self, ApiError> {
        let token = parts
            .headers
            .get(header::AUTHORIZATION)
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.strip_prefix("Bearer "))
            .map(str::trim)
            .filter(|t| !t.is_empty())
            .ok_or(ApiError::from(AuthError::Unauthorized))?;
        let email = gw.authenticate(token)?;
        Ok(AuthUser {
            email,
            token: token.to_string(),
        })
    }
}

/// `Json` with rejections in the API error format.
pub struct ApiJson<T>(pub T);

impl<S: Send + Sync, T: DeserializeOwned> FromRequest<S> for ApiJson<T> {
    type Rejection = ApiError;

    async fn from_request(req: Request, state: &S) -> Result<Self, ApiError> {
        Json::<T>::from_request(req, state)
            .await
            .map(|Json(v)| ApiJson(v))
            .map_err(|e| ApiError::bad_request(e.body_text()))
    }
}

fn query<T>(q: Result<Query<T>, QueryRejection>) -> Result<T, ApiError> {
    q.map(|Query(v)| v).map_err(|e| ApiError::bad_request(e.body_text()))
}

#[derive(Deserialize)]
struct Register {
    email: String,
    name: String,
    password: String,
}

#[derive(Deserialize)]
struct Login {
    email: String,
    password: String,
}

#[derive(Deserialize)]
struct ChatText {
    text: String,
}

#[derive(Deserialize)]
struct NewGroup {
    name: String,
}

#[derive(Deserialize)]
struct NewMessage {
    body: String,
}

#[derive(Deserialize)]
struct SearchQuery {
    #[serde(default)]
    query: String,
}

#[derive(Deserialize)]
struct SinceQuery {
    #[serde(default)]
    since: u64,
}

#[derive(Deserialize)]
struct WsQuery {
    #[serde(default)]
    token: String,
}

async fn register(State(gw): State<Shared>, ApiJson(r): ApiJson<Register>) -> Result<Response, ApiError> {
    let token = gw.register(&r.email, &r.name, &r.password).await?;
    Ok((StatusCode::CREATED, Json(json!({ "token": token }))).into_response())
}

async fn login(State(gw): State<Shared>, ApiJson(r): ApiJson<Login>) -> Result<Response, ApiError> {
    let token = gw.login(&r.email, &r.password).await?;
    Ok(Json(json!({ "token": token })).into_response())
}

async fn logout(State(gw): State<Shared>, user: AuthUser) -> Result<StatusCode, ApiError> {
    gw.logout(&user.token)?;
    Ok(StatusCode::NO_CONTENT)
}

async fn profile(State(gw): State<Shared>, user: AuthUser) -> Result<Response, ApiError> {
    Ok(Json(gw.profile(&user.email)?).into_response())
}

async fn chatbot(
    State(gw): State<Shared>,
    user: AuthUser,
    ApiJson(c): ApiJson<ChatText>,
) -> Result<Response, ApiError> {
    Ok(Json(gw.chat(&user.email, &c.text)?).into_response())
}

async fn search_groups(
    State(gw): State<Shared>,
    _user: AuthUser,
    q: Result<Query<SearchQuery>, QueryRejection>,
) -> Result<Response, ApiError> {
    let q = query(q)?;
    Ok(Json(gw.search_groups(&q.query)).into_response())
}

async fn create_group(
    State(gw): State<Shared>,
    user: AuthUser,
    ApiJson(g): ApiJson<NewGroup>,
) -> Result<Response, ApiError> {
    let group = gw.create_group(&user.email, &g.name)?;
    Ok((StatusCode::CREATED, Json(group)).into_response())
}

async fn join_group(State(gw): State<Shared>, user: AuthUser, Path(id): Path<String>) -> Result<Response, ApiError> {
    Ok(Json(gw.join_group(&user.email, &id)?).into_response())
}

async fn exit_group(State(gw): State<Shared>, user: AuthUser, Path(id): Path<String>) -> Result<Response, ApiError> {
    Ok(Json(gw.exit_group(&user.email, &id)?).into_response())
}

async fn group_details(State(gw): State<Shared>, user: AuthUser, Path(id): Path<String>) -> Result<Response, ApiError> {
    Ok(Json(gw.group_details(&user.email, &id)?).into_response())
}

async fn messages(
    State(gw): State<Shared>,
    user: AuthUser,
    Path(id): Path<String>,
    q: Result<Query<SinceQuery>, QueryRejection>,
) -> Result<Response, ApiError> {
    let q = query(q)?;
    Ok(Json(gw.messages(&user.email, &id, q.since)?).into_response())
}

async fn post_message(
    State(gw): State<Shared>,
    user: AuthUser,
    Path(id): Path<String>,
    ApiJson(m): ApiJson<NewMessage>,
) -> Result<Response, ApiError> {
    let msg = gw.post_message(&user.email, &id, &m.body)?;
    Ok((StatusCode::CREATED, Json(msg)).into_response())
}

async fn suggestions(
    State(gw): State<Shared>,
    _user: AuthUser,
    Path(topic): Path<String>,
) -> Result<Response, ApiError> {
    Ok(Json(gw.suggestions(&topic)?).into_response())
}

async fn doctors(State(gw): State<Shared>, _user: AuthUser) -> Result<Response, ApiError> {
    Ok(Json(gw.doctors()).into_response())
}

async fn websocket(
    State(gw): State<Shared>,
    q: Result<Query<WsQuery>, QueryRejection>,
    upgrade: Result<WebSocketUpgrade, WebSocketUpgradeRejection>,
) -> Result<Response, ApiError> {
    let q = query(q)?;
    let email = gw.authenticate(&q.token)?;
    let upgrade = upgrade.map_err(|e| ApiError::bad_request(e.body_text()))?;
    let limit = gw.config().max_frame_bytes;
    Ok(upgrade
        .max_message_size(limit)
        .max_frame_size(limit)
        .on_upgrade(move |socket| gw.run_socket(email, socket)))
}

async fn no_route() -> ApiError {
    ApiError::not_found("no such endpoint")
}

pub fn router(gw: Arc<Gateway>) -> Router {
    Router::new()
        .route("/api/register", post(register))
        .route("/api/login", post(login))
        .route("/api/logout", post(logout))
        .route("/api/profile", get(profile))
        .route("/api/chatbot", post(chatbot))
        .route("/api/groups", get(search_groups).post(create_group))
        .route("/api/groups/{id}", get(group_details))
        .route("/api/groups/{id}/join", post(join_group))
        .route("/api/groups/{id}/exit", post(exit_group))
        .route("/api/groups/{id}/messages", get(messages).post(post_message))
        .route("/api/suggestions/{topic}", get(suggestions))
        .route("/api/doctors", get(doctors))
        .route("/ws", get(websocket))
        .fallback(no_route)
        .with_state(gw)
}

/// Serves until `shutdown` resolves, then closes WebSocket connections and
/// syncs the store.
pub async fn serve(
    listener: TcpListener,
    gw: Arc<Gateway>,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> io::Result<()> {
    let closer = gw.clone();
    axum::serve(listener, router(gw.clone()))
        .with_graceful_shutdown(async move {
            shutdown.await;
            closer.close_connections();
        })
        .await?;
    gw.flush().map_err(io::Error::other)
}
