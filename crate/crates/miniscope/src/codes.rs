//! Numeric error codes shared between the prober's response classifier and
//! the mock super-app server. Both sides consume this single table so the
//! classifier and the server can never drift apart.

/// Success.
pub const OK: i64 = 0;

/// The app ID or app secret is invalid.
pub const INVALID_CREDENTIAL: i64 = 40001;

/// The supplied access token is unknown.
pub const INVALID_TOKEN: i64 = 40014;

/// The caller's IP address is not in the configured whitelist.
pub const IP_NOT_WHITELISTED: i64 = 40164;

/// The access token has expired.
pub const TOKEN_EXPIRED: i64 = 42001;

/// The calling quota of the API has been exhausted.
pub const QUOTA_EXCEEDED: i64 = 45009;

/// The feature backing the API is not enabled for this mini-app.
pub const FEATURE_BLOCKED: i64 = 48001;

/// "The user is limited" - the account is not authorized to use the API.
pub const USER_LIMITED: i64 = 50002;

/// The mock server refuses to execute Modify-kind endpoints.
pub const MODIFY_REFUSED: i64 = 49000;
