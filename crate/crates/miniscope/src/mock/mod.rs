//! Deterministic test double for a super-app backend: token issuance, IP
//! whitelisting, quotas, feature gating and canned Get responses, with an
//! append-only request log for assertions.

mod decide;
mod scenario;
mod server;

pub use decide::{evaluate_request, MockRequest, MockState, RecordClass, RequestRecord};
pub use scenario::{AppScenario, MockScenario, ScenarioError};
pub use server::{serve, MockServerHandle, ServeError};
