//! Static bearer credentials with two roles.
//!
//! Credential file:
//! ```json
//! {"credentials": [{"token": "…", "identity": "ana", "role": "contributor"}]}
//! ```

use std::collections::HashMap;
use std::fmt;
use std::path::Path;

use anyhow::Context;
use axum::http::{header, HeaderMap};
use serde::{Deserialize, Serialize};

use crate::api::ApiError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Contributor,
    Moderator,
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Role::Contributor => "contributor",
            Role::Moderator => "moderator",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Credential {
    pub token: String,
    pub identity: String,
    pub role: Role,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct CredentialFile {
    credentials: Vec<Credential>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Principal {
    pub identity: String,
    pub role: Role,
}

#[derive(Debug, Clone, Default)]
pub struct Credentials {
    by_token: HashMap<String, Principal>,
}

impl Credentials {
    pub fn new(list: impl IntoIterator<Item = Credential>) -> Self {
        Self {
            by_token: list
                .into_iter()
                .map(|c| {
                    (
                        c.token,
                        Principal {
                            identity: c.identity,
                            role: c.role,
                        },
                    )
                })
                .collect(),
        }
    }

    pub fn from_json(text: &str) -> anyhow::Result<Self> {
        let file: CredentialFile = serde_json::from_str(text).context("invalid credential file")?;
        if file.credentials.iter().any(|c| c.token.trim().is_empty()) {
            anyhow::bail!("credential tokens must not be empty");
        }
        Ok(Self::new(file.credentials))
    }

    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::from_json(&text)
    }

    pub fn len(&self) -> usize {
        self.by_token.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_token.is_empty()
    }

    /// Resolves the bearer token and checks the role: 401 without a valid
    /// token, 403 with the wrong role.
    pub fn require(&self, headers: &HeaderMap, role: Role) -> Result<Principal, ApiError> {
        let token = headers
            .get(header::AUTHORIZATION)
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.strip_prefix("Bearer "))
            .map(str::trim)
            .ok_or_else(|| ApiError::unauthorized("a bearer credential is required"))?;
        let principal = self
            .by_token
            .get(token)
            .ok_or_else(|| ApiError::unauthorized("unknown credential"))?;
        if principal.role != role {
            return Err(ApiError::forbidden(&format!("this action requires the {role} role")));
        }
        Ok(principal.clone())
    }
}
