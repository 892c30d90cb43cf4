//! The untrusted relay: an append-only message board per session with an
//! HTTP+JSON API.
//!
//! | method | path                          | body / answer                          |
//! |--------|-------------------------------|----------------------------------------|
//! | POST   | `/sessions`                   | session setup → `{session_id}`         |
//! | GET    | `/sessions`                   | list of session ids                    |
//! | GET    | `/sessions/{id}`              | session setup                          |
//! | POST   | `/sessions/{id}/messages`     | commit or reveal → `{index, timestamp}`|
//! | GET    | `/sessions/{id}/messages?from=N&limit=M` | `{messages, next_index}`    |
//! | GET    | `/sessions/{id}/transcript`   | `transcriptv1` with `server_view: true`|
//! | GET    | `/sessions/{id}/status`       | phase summary derived from the log     |
//! | GET    | `/sessions/{id}/events`       | server-sent `message` events           |
//!
//! Errors answer `{"error": "..."}` with 400 (malformed), 404 (unknown
//! session), 409 (conflicting setup), 422 (commitment failed verification)
//! or 500 (storage).

mod board;
mod http;

pub use board::{session_id, BoardStatus, LogEntry, Page, Receipt, Relay, RelayError, MAX_PAGE};
pub(crate) use board::now_ms;
pub use http::{bind, bind_relay, router, Created, ErrorBody, ServeConfig};
