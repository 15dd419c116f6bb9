//! Server side of the platform: the event-sourced store, peer-support
//! groups, and the HTTP/WebSocket gateway.

pub mod auth;
pub mod constellation;
pub mod content;
pub mod gateway;
pub mod store;

pub use gateway::{router, serve, ApiError, Gateway, GatewayConfig};
pub use store::{Event, Store, StoreError, StoreOptions};
