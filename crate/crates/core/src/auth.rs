//! Credentials and session tokens.

use base64::engine::general_purpose::URL_SAFE_NO_PAD;
use base64::Engine;
use chrono::{DateTime, Utc};
use rand::RngCore;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::domain::{UserAccount, UserProfile};
use crate::error::{EntityKind, Error, Result};
use crate::ids::UserId;
use crate::platform::Platform;

const HASH_SCHEME: &str = "sha256i";
const HASH_ROUNDS: u32 = 1000;

/// 32 bytes from the thread CSPRNG, URL-safe base64 without padding.
pub(crate) fn random_token() -> String {
    let mut bytes = [0u8; 32];
    rand::rng().fill_bytes(&mut bytes);
    URL_SAFE_NO_PAD.encode(bytes)
}

/// Session and invitation tokens are stored by digest only.
pub(crate) fn token_digest(token: &str) -> String {
    hex::encode(Sha256::digest(token.as_bytes()))
}

fn stretch(salt: &[u8], password: &str) -> [u8; 32] {
    let mut digest: [u8; 32] = Sha256::new()
        .chain_update(salt)
        .chain_update(password.as_bytes())
        .finalize()
        .into();
    for _ in 1..HASH_ROUNDS {
        digest = Sha256::new()
            .chain_update(salt)
            .chain_update(digest)
            .finalize()
            .into();
    }
    digest
}

pub(crate) fn hash_password(password: &str) -> String {
    let mut salt = [0u8; 16];
    rand::rng().fill_bytes(&mut salt);
    format!(
        "{HASH_SCHEME}${HASH_ROUNDS}${}${}",
        hex::encode(salt),
        hex::encode(stretch(&salt, password))
    )
}

pub(crate) fn verify_password(stored: &str, password: &str) -> bool {
    let mut parts = stored.split('$');
    let (Some(HASH_SCHEME), Some(_rounds), Some(salt), Some(expected), None) =
        (parts.next(), parts.next(), parts.next(), parts.next(), parts.next())
    else {
        return false;
    };
    let (Ok(salt), Ok(expected)) = (hex::decode(salt), hex::decode(expected)) else {
        return false;
    };
    let actual = stretch(&salt, password);
    expected.len() == actual.len()
        && expected.iter().zip(actual.iter()).fold(0u8, |acc, (a, b)| acc | (a ^ b)) == 0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionKind {
    /// Browser session carried in a cookie.
    Session,
    /// Long-lived token for scripted import/export.
    ApiToken,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Session {
    pub user_id: UserId,
    pub kind: SessionKind,
    pub expires_at: DateTime<Utc>,
}

/// A freshly issued token. The raw value is only ever returned here.
#[derive(Debug, Clone, Serialize)]
pub struct SessionToken {
    pub token: String,
    pub user_id: UserId,
    pub kind: SessionKind,
    pub expires_at: DateTime<Utc>,
}

impl Platform {
    /// Creates an account. Staff accounts are only created by operators
    /// (bootstrap or CLI), never through self-registration.
    pub fn register_user(
        &self,
        email: &str,
        display_name: &str,
        password: &str,
        is_staff: bool,
    ) -> Result<UserProfile> {
        let email = email.trim();
        if email.is_empty() || !email.contains('@') {
            return Err(Error::Validation("email must be a valid address".into()));
        }
        if password.len() < 8 {
            return Err(Error::Validation("password must be at least 8 characters".into()));
        }
        let display_name = display_name.trim();
        let credential_hash = hash_password(password);
        let now = self.now();
        self.write(|st| {
            let key = email.to_lowercase();
            if st.index.email.contains_key(&key) {
                return Err(Error::EmailTaken);
            }
            let user_id = st.ids.next_user();
            let account = UserAccount {
                user_id,
                email: email.to_string(),
                display_name: if display_name.is_empty() { email.to_string() } else { display_name.to_string() },
                credential_hash,
                is_staff,
                active: true,
                created_at: now,
            };
            let profile = account.profile();
            st.index.email.insert(key, user_id);
            st.users.insert(user_id, account);
            Ok(profile)
        })
    }

    pub fn login(&self, email: &str, password: &str) -> Result<SessionToken> {
        let user_id = self.read(|st| {
            let id = *st
                .index
                .email
                .get(&email.trim().to_lowercase())
                .ok_or(Error::InvalidCredentials)?;
            let user = &st.users[&id];
            if !user.active || !verify_password(&user.credential_hash, password) {
                return Err(Error::InvalidCredentials);
            }
            Ok(id)
        })?;
        self.issue_token(user_id, SessionKind::Session)
    }

    pub fn issue_api_token(&self, user: UserId) -> Result<SessionToken> {
        self.issue_token(user, SessionKind::ApiToken)
    }

    fn issue_token(&self, user_id: UserId, kind: SessionKind) -> Result<SessionToken> {
        let ttl = match kind {
            SessionKind::Session => self.settings.session_ttl,
            SessionKind::ApiToken => self.settings.api_token_ttl,
        };
        let expires_at = self.now() + ttl;
        let token = random_token();
        let digest = token_digest(&token);
        self.write(|st| {
            let user = st.users.get(&user_id).ok_or_else(|| Error::not_found(EntityKind::User, user_id))?;
            if !user.active {
                return Err(Error::PermissionDenied);
            }
            st.sessions.insert(digest, Session { user_id, kind, expires_at });
            Ok(())
        })?;
        Ok(SessionToken { token, user_id, kind, expires_at })
    }

    /// Resolves a bearer/cookie token. Expired tokens and deactivated
    /// accounts authenticate nothing.
    pub fn authenticate(&self, token: &str) -> Result<UserId> {
        let now = self.now();
        let digest = token_digest(token);
        self.read(|st| {
            let session = st.sessions.get(&digest).ok_or(Error::Unauthenticated)?;
            if session.expires_at <= now {
                return Err(Error::Unauthenticated);
            }
            match st.users.get(&session.user_id) {
                Some(user) if user.active => Ok(user.user_id),
                _ => Err(Error::Unauthenticated),
            }
        })
    }

    pub fn logout(&self, token: &str) -> Result<()> {
        let digest = token_digest(token);
        self.write(|st| {
            st.sessions.remove(&digest);
            Ok(())
        })
    }

    /// Drops sessions that expired before `now`.
    pub fn user_by_email(&self, email: &str) -> Result<UserProfile> {
        self.read(|st| {
            st.index
                .email
                .get(&email.trim().to_lowercase())
                .map(|id| st.users[id].profile())
                .ok_or_else(|| Error::not_found(EntityKind::User, email.trim()))
        })
    }

    pub fn purge_expired_sessions(&self) -> Result<usize> {
        let now = self.now();
        self.write(|st| {
            let before = st.sessions.len();
            st.sessions.retain(|_, s| s.expires_at > now);
            Ok(before - st.sessions.len())
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn password_hash_verifies_only_the_right_password() {
        let stored = hash_password("correct horse");
        assert!(verify_password(&stored, "correct horse"));
        assert!(!verify_password(&stored, "correct horsf"));
        assert!(!verify_password("garbage", "correct horse"));
    }

    #[test]
    fn tokens_are_256_bit_url_safe() {
        let t = random_token();
        assert_eq!(URL_SAFE_NO_PAD.decode(&t).unwrap().len(), 32);
        assert!(t.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_'));
        assert_ne!(t, random_token());
    }
}
