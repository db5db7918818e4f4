//! Audit sessions for ballot-polling, comparison, and batch audits.
//!
//! A session deals seeded random selections, takes the auditors'
//! interpretations, and tracks each assertion's sequential test until every
//! assertion is confirmed or the audit escalates to a full hand count.
//! Sessions persist as one JSON file each, see [`store::SessionStore`], and
//! are served over HTTP by [`http::router`].

pub mod error;
pub mod http;
pub mod session;
pub mod store;

pub use error::{Result, ServiceError};
pub use http::router;
pub use session::{
    AssertionConfig, AssorterSpec, Interpretation, Interpretations, Session, SessionConfig, SessionFile, SessionReport,
    SessionStatus,
};
pub use store::SessionStore;
