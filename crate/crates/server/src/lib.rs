//! HTTP service and command-line front end for the repository.

pub mod api;
pub mod auth;
pub mod cli;

use std::path::Path;
use std::sync::Arc;

use axum::Router;
use esd_core::moderation::{Clock, SystemClock};
use esd_core::{ModerationDesk, ReleaseArchive, Store};

pub use api::ApiError;
pub use auth::{Credential, Credentials, Role};

/// Everything a request handler needs.
pub struct App {
    pub store: Arc<Store>,
    pub desk: ModerationDesk,
    pub releases: ReleaseArchive,
    pub credentials: Credentials,
}

impl App {
    pub fn new(store: Store, credentials: Credentials, clock: Arc<dyn Clock>) -> anyhow::Result<Self> {
        let store = Arc::new(store);
        let releases = ReleaseArchive::open(store.backend())?;
        Ok(Self {
            desk: ModerationDesk::new(store.clone(), clock),
            store,
            releases,
            credentials,
        })
    }

    pub fn open(data_dir: &Path, credentials: Credentials) -> anyhow::Result<Self> {
        Self::new(Store::open_dir(data_dir)?, credentials, Arc::new(SystemClock))
    }

    pub fn in_memory(credentials: Credentials) -> anyhow::Result<Self> {
        Self::new(Store::in_memory(), credentials, Arc::new(SystemClock))
    }

    pub fn router(self: &Arc<Self>) -> Router {
        api::router(self.clone())
    }
}
