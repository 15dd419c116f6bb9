//! Accounts, password hashing and bearer tokens.

use std::collections::HashMap;
use std::time::Duration;

use argon2::password_hash::{PasswordHash, PasswordHasher, PasswordVerifier, SaltString};
use argon2::{Algorithm, Argon2, Params, Version};
use rand::rngs::OsRng;
use rand::RngCore;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const MIN_PASSWORD_CHARS: usize = 8;
pub const DEFAULT_TOKEN_TTL: Duration = Duration::from_secs(24 * 60 * 60);

#[derive(Debug, Error, PartialEq, Eq)]
pub enum AuthError {
    #[error("email address is not valid")]
    InvalidEmail,
    #[error("password must be at least {MIN_PASSWORD_CHARS} characters")]
    WeakPassword,
    #[error("name must not be empty")]
    InvalidName,
    #[error("an account with this email already exists")]
    EmailTaken,
    #[error("invalid email or password")]
    AuthFailed,
    #[error("missing, expired or revoked token")]
    Unauthorized,
    #[error("password hashing failed: {0}")]
    Hash(String),
}

/// A registered account. `password_hash` is an Argon2id PHC string.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct User {
    pub email: String,
    pub name: String,
    pub password_hash: String,
    pub created_at: i64,
}

/// Trims and lowercases an email address, then checks its shape.
pub fn normalize_email(email: &str) -> Result<String, AuthError> {
    let email = email.trim().to_lowercase();
    let (local, domain) = email.split_once('@').ok_or(AuthError::InvalidEmail)?;
    let ok = !local.is_empty()
        && !domain.contains('@')
        && domain.contains('.')
        && !domain.starts_with('.')
        && !domain.ends_with('.')
        && !domain.contains("..")
        && email.len() <= 254
        && !email.chars().any(|c| c.is_whitespace() || c.is_control());
    if ok {
        Ok(email)
    } else {
        Err(AuthError::InvalidEmail)
    }
}

pub fn check_password(password: &str) -> Result<(), AuthError> {
    if password.chars().count() < MIN_PASSWORD_CHARS {
        return Err(AuthError::WeakPassword);
    }
    Ok(())
}

/// Argon2id cost parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HashParams {
    pub memory_kib: u32,
    pub iterations: u32,
    pub parallelism: u32,
}

impl Default for HashParams {
    fn default() -> Self {
        HashParams {
            memory_kib: 19 * 1024,
            iterations: 2,
            parallelism: 1,
        }
    }
}

impl HashParams {
    /// Cheap parameters for tests.
    pub fn fast() -> Self {
        HashParams {
            memory_kib: 64,
            iterations: 1,
            parallelism: 1,
        }
    }

    fn hasher(&self) -> Result<Argon2<'static>, AuthError> {
        let params = Params::new(self.memory_kib, self.iterations, self.parallelism, None)
            .map_err(|e| AuthError::Hash(e.to_string()))?;
        Ok(Argon2::new(Algorithm::Argon2id, Version::V0x13, params))
    }
}

/// Salted Argon2id hash in PHC string form.
pub fn hash_password(password: &str, params: &HashParams) -> Result<String, AuthError> {
    let mut salt = [0u8; 16];
    OsRng.fill_bytes(&mut salt);
    let salt = SaltString::encode_b64(&salt).map_err(|e| AuthError::Hash(e.to_string()))?;
    Ok(params
        .hasher()?
        .hash_password(password.as_bytes(), &salt)
        .map_err(|e| AuthError::Hash(e.to_string()))?
        .to_string())
}

/// Verifies against a PHC string. The parameters embedded in the hash are
/// used, so changing [`HashParams`] does not lock out existing accounts.
pub fn verify_password(password: &str, phc: &str) -> bool {
    match PasswordHash::new(phc) {
        Ok(parsed) => Argon2::default()
            .verify_password(password.as_bytes(), &parsed)
            .is_ok(),
        Err(_) => false,
    }
}

#[derive(Debug, Clone)]
struct TokenEntry {
    email: String,
    expires_at: i64,
}

/// Server-side table of live bearer tokens. Tokens are 256-bit random
/// values, hex encoded.
#[derive(Debug)]
pub struct TokenTable {
    ttl_ms: i64,
    tokens: HashMap<String, TokenEntry>,
}

impl TokenTable {
    pub fn new(ttl: Duration) -> Self {
        TokenTable {
            ttl_ms: i64::try_from(ttl.as_millis()).unwrap_or(i64::MAX),
            tokens: HashMap::new(),
        }
    }

    pub fn issue(&mut self, email: &str, now: i64) -> String {
        let mut raw = [0u8; 32];
        OsRng.fill_bytes(&mut raw);
        let token = hex::encode(raw);
        self.tokens.insert(
            token.clone(),
            TokenEntry {
                email: email.to_string(),
                expires_at: now.saturating_add(self.ttl_ms),
            },
        );
        token
    }

    /// The email bound to a live token. Expired tokens are dropped.
    pub fn resolve(&mut self, token: &str, now: i64) -> Result<String, AuthError> {
        match self.tokens.get(token) {
            Some(e) if now < e.expires_at => Ok(e.email.clone()),
            Some(_) => {
                self.tokens.remove(token);
                Err(AuthError::Unauthorized)
            }
            None => Err(AuthError::Unauthorized),
        }
    }

    pub fn revoke(&mut self, token: &str) -> Result<(), AuthError> {
        self.tokens
            .remove(token)
            .map(|_| ())
            .ok_or(AuthError::Unauthorized)
    }

    pub fn purge_expired(&mut self, now: i64) {
        self.tokens.retain(|_, e| now < e.expires_at);
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}
