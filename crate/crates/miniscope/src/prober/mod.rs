//! Live validation of detected credentials against a backend endpoint.
//!
//! Everything here only ever issues read operations: token acquisition,
//! the dummy-secret whitelist check, and probing of explicitly allowlisted
//! Get APIs. Modify APIs are never invoked; that restriction is enforced
//! structurally (`ProbePolicy::validate` rejects any allowlist entry that
//! is not a probe-allowed Get API).

pub mod resolve;
pub mod transport;

use std::collections::{BTreeMap, BTreeSet};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::catalog::{ApiCatalog, ApiKind, Provenance};
use crate::codes;
use crate::jsonpath;
use crate::scanner::ScanFinding;
use transport::Transport;

pub use resolve::{
    resolve_api, resolve_callability, CallabilityReport, CallabilityVerdict, ParamState,
    ResolutionFacts,
};

/// Outcome of one token acquisition attempt.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum TokenOutcome {
    TokenIssued { access_token: String, expires_in: u64 },
    InvalidCredential,
    IpNotWhitelisted,
    UserLimited,
    QuotaExceeded,
    TransportError { detail: String },
    Unrecognized { raw_code: i64 },
}

impl TokenOutcome {
    pub fn is_issued(&self) -> bool {
        matches!(self, TokenOutcome::TokenIssued { .. })
    }
}

/// Result of the dummy-secret whitelist check.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum WhitelistVerdict {
    /// The endpoint rejected our IP before looking at the secret: a
    /// whitelist exists and we are not on it.
    WhitelistedElsewhere,
    /// No whitelist: the deliberately wrong secret was evaluated (and
    /// rejected), so credential checks are reachable from anywhere.
    NotWhitelisted,
    Indeterminate,
}

#[derive(Debug, Error)]
pub enum PolicyError {
    #[error("allowlisted api {0} is not in the catalog")]
    UnknownApi(String),
    #[error("allowlisted api {0} is a modify endpoint; modify endpoints are never probed")]
    ModifyNotProbeable(String),
    #[error("allowlisted api {0} has probe_allowed=false")]
    ProbeNotAllowed(String),
    #[error("dummy secret must be 32 characters, got {0}")]
    BadDummySecret(usize),
}

/// What the prober may do. Get probing is opt-in and restricted to an
/// explicit allowlist.
#[derive(Debug, Clone)]
pub struct ProbePolicy {
    pub allow_get_probing: bool,
    pub get_allowlist: BTreeSet<String>,
    /// Calls permitted per API within one app's probe session.
    pub per_api_call_budget: u32,
    /// Minimum pause between consecutive network calls.
    pub min_interval_ms: u64,
    /// Deliberately wrong 32-character secret for the whitelist check.
    pub dummy_secret: String,
}

impl Default for ProbePolicy {
    fn default() -> Self {
        ProbePolicy {
            allow_get_probing: false,
            get_allowlist: BTreeSet::new(),
            per_api_call_budget: 1,
            min_interval_ms: 200,
            dummy_secret: "0123456789abcdef0123456789abcdef".to_string(),
        }
    }
}

impl ProbePolicy {
    pub fn validate(&self, catalog: &ApiCatalog) -> Result<(), PolicyError> {
        if self.dummy_secret.len() != 32 {
            return Err(PolicyError::BadDummySecret(self.dummy_secret.len()));
        }
        for name in &self.get_allowlist {
            let api = catalog
                .api(name)
                .ok_or_else(|| PolicyError::UnknownApi(name.clone()))?;
            if api.kind == ApiKind::Modify {
                return Err(PolicyError::ModifyNotProbeable(name.clone()));
            }
            if !api.probe_allowed {
                return Err(PolicyError::ProbeNotAllowed(name.clone()));
            }
        }
        Ok(())
    }
}

fn pace(policy: &ProbePolicy) {
    if policy.min_interval_ms > 0 {
        std::thread::sleep(Duration::from_millis(policy.min_interval_ms));
    }
}

/// Maps a token-endpoint response body to an outcome.
pub fn classify_token_response(body: &Value) -> TokenOutcome {
    if let Some(token) = body.get("access_token").and_then(Value::as_str) {
        let expires_in = body.get("expires_in").and_then(Value::as_u64).unwrap_or(0);
        return TokenOutcome::TokenIssued {
            access_token: token.to_string(),
            expires_in,
        };
    }
    match body.get("errcode").and_then(Value::as_i64) {
        Some(codes::INVALID_CREDENTIAL) => TokenOutcome::InvalidCredential,
        Some(codes::IP_NOT_WHITELISTED) => TokenOutcome::IpNotWhitelisted,
        Some(codes::USER_LIMITED) => TokenOutcome::UserLimited,
        Some(codes::QUOTA_EXCEEDED) => TokenOutcome::QuotaExceeded,
        Some(raw_code) => TokenOutcome::Unrecognized { raw_code },
        None => TokenOutcome::TransportError {
            detail: "response carried neither access_token nor errcode".to_string(),
        },
    }
}

fn token_params(catalog: &ApiCatalog, app_id: &str, secret: &str) -> BTreeMap<String, String> {
    let mut params = BTreeMap::new();
    for p in &catalog.token_endpoint.params {
        match p.provenance {
            Provenance::AppId => params.insert(p.name.clone(), app_id.to_string()),
            Provenance::AppSecret => params.insert(p.name.clone(), secret.to_string()),
            _ => None,
        };
    }
    params.insert("grant_type".to_string(), "client_credential".to_string());
    params
}

pub fn acquire_token(
    transport: &dyn Transport,
    catalog: &ApiCatalog,
    app_id: &str,
    secret: &str,
) -> TokenOutcome {
    match transport.call(
        &catalog.token_endpoint.endpoint_path,
        &token_params(catalog, app_id, secret),
    ) {
        Ok(body) => classify_token_response(&body),
        Err(e) => TokenOutcome::TransportError {
            detail: e.to_string(),
        },
    }
}

/// Probes whether an IP whitelist shields the app, using a deliberately
/// wrong secret so a success can never be minted by accident. Relies on
/// the backend checking the whitelist before the credential.
pub fn check_whitelist(
    transport: &dyn Transport,
    catalog: &ApiCatalog,
    policy: &ProbePolicy,
    app_id: &str,
) -> WhitelistVerdict {
    match acquire_token(transport, catalog, app_id, &policy.dummy_secret) {
        TokenOutcome::IpNotWhitelisted => WhitelistVerdict::WhitelistedElsewhere,
        TokenOutcome::InvalidCredential => WhitelistVerdict::NotWhitelisted,
        _ => WhitelistVerdict::Indeterminate,
    }
}

/// Values extracted from probed Get responses, keyed api -> json path ->
/// values. Presence of an api key means the probe was attempted.
pub type Observations = BTreeMap<String, BTreeMap<String, Vec<String>>>;

fn first_code_value<'a>(
    finding: &'a ScanFinding,
    tag: &crate::catalog::ExtractorTag,
) -> Option<&'a str> {
    use crate::catalog::ExtractorTag::*;
    let pool = match tag {
        CloudEnvId => &finding.cloud_env_ids,
        CloudFunctionName => &finding.cloud_function_names,
        OpenidInCode => &finding.code_openids,
    };
    pool.first().map(String::as_str)
}

/// Probes every allowlisted, probe-allowed Get API whose response feeds
/// some other API's parameters, and harvests the consumed JSON paths.
/// APIs whose own parameters cannot be filled are skipped, leaving their
/// dependents Unknown rather than guessing.
pub fn probe_get_apis(
    transport: &dyn Transport,
    catalog: &ApiCatalog,
    policy: &ProbePolicy,
    access_token: &str,
    finding: &ScanFinding,
) -> Observations {
    let mut observations = Observations::new();
    if !policy.allow_get_probing {
        return observations;
    }
    let fed = catalog.fed_get_apis();
    for name in &policy.get_allowlist {
        let Some(api) = catalog.api(name) else { continue };
        if api.kind != ApiKind::Get || !api.probe_allowed || !fed.contains(name) {
            continue;
        }
        let mut params = BTreeMap::new();
        let mut fillable = true;
        for p in &api.params {
            let value = match &p.provenance {
                Provenance::AccessToken => Some(access_token.to_string()),
                Provenance::AttackerControlled => Some(format!("probe-{}", p.name)),
                Provenance::CodeExtracted { tag } => {
                    first_code_value(finding, tag).map(str::to_string)
                }
                // Chained Get-to-Get inputs are out of scope for probing.
                _ => None,
            };
            match value {
                Some(v) => {
                    params.insert(p.name.clone(), v);
                }
                None => {
                    fillable = false;
                    break;
                }
            }
        }
        if !fillable {
            continue;
        }
        pace(policy);
        let body = match transport.call(&api.endpoint_path, &params) {
            Ok(b) => b,
            Err(_) => continue,
        };
        if body.get("errcode").and_then(Value::as_i64).unwrap_or(0) != codes::OK {
            // Probe attempted but the response yields nothing extractable.
            observations.insert(name.clone(), BTreeMap::new());
            continue;
        }
        let mut extracted = BTreeMap::new();
        for path in catalog.consumed_paths(name) {
            let values = jsonpath::extract(&body, &path);
            extracted.insert(path, values);
        }
        observations.insert(name.clone(), extracted);
    }
    observations
}

#[cfg(test)]
mod tests {
    use super::transport::{DisabledTransport, InProcessTransport};
    use super::*;
    use crate::catalog::wechat_catalog;
    use crate::mock::{AppScenario, MockScenario, MockState};
    use std::sync::{Arc, Mutex};

    const APP: &str = "wxfedcba9876543210";
    const SECRET: &str = "a1b2c3d4e5f60718293a4b5c6d7e8f90";

    fn mock_transport(configure: impl FnOnce(&mut AppScenario)) -> InProcessTransport {
        let mut scenario = MockScenario::new();
        let mut app = AppScenario::with_secret(SECRET);
        configure(&mut app);
        scenario.apps.insert(APP.into(), app);
        InProcessTransport::new(
            Arc::new(Mutex::new(MockState::new(scenario))),
            Arc::new(wechat_catalog()),
        )
    }

    fn finding() -> ScanFinding {
        ScanFinding {
            package_id: "pkg".into(),
            candidates: Vec::new(),
            pairs: Vec::new(),
            direct_invocations: Vec::new(),
            cloud_function_names: Vec::new(),
            cloud_env_ids: Vec::new(),
            code_openids: Vec::new(),
        }
    }

    fn probing_policy(apis: &[&str]) -> ProbePolicy {
        ProbePolicy {
            allow_get_probing: true,
            get_allowlist: apis.iter().map(|s| s.to_string()).collect(),
            min_interval_ms: 0,
            ..Default::default()
        }
    }

    #[test]
    fn valid_secret_yields_token_with_paper_ttl() {
        let t = mock_transport(|_| {});
        match acquire_token(&t, &wechat_catalog(), APP, SECRET) {
            TokenOutcome::TokenIssued { expires_in, .. } => assert_eq!(expires_in, 7200),
            other => panic!("unexpected outcome: {other:?}"),
        }
    }

    #[test]
    fn wrong_secret_classified_invalid() {
        let t = mock_transport(|_| {});
        let outcome = acquire_token(&t, &wechat_catalog(), APP, &"0".repeat(32));
        assert_eq!(outcome, TokenOutcome::InvalidCredential);
    }

    #[test]
    fn limited_account_classified() {
        let t = mock_transport(|a| a.limited = true);
        let outcome = acquire_token(&t, &wechat_catalog(), APP, SECRET);
        assert_eq!(outcome, TokenOutcome::UserLimited);
    }

    #[test]
    fn unknown_errcode_recorded_raw() {
        let body = serde_json::json!({"errcode": 61004, "errmsg": "?"});
        assert_eq!(
            classify_token_response(&body),
            TokenOutcome::Unrecognized { raw_code: 61004 }
        );
    }

    #[test]
    fn whitelist_check_distinguishes_shielded_apps() {
        let catalog = wechat_catalog();
        let policy = ProbePolicy::default();

        let shielded = mock_transport(|a| a.whitelist = vec!["198.51.100.7".into()]);
        assert_eq!(
            check_whitelist(&shielded, &catalog, &policy, APP),
            WhitelistVerdict::WhitelistedElsewhere
        );

        let open = mock_transport(|_| {});
        assert_eq!(
            check_whitelist(&open, &catalog, &policy, APP),
            WhitelistVerdict::NotWhitelisted
        );

        let offline = DisabledTransport::new();
        assert_eq!(
            check_whitelist(&offline, &catalog, &policy, APP),
            WhitelistVerdict::Indeterminate
        );
    }

    #[test]
    fn whitelist_check_never_uses_a_real_secret() {
        // The check must keep working (and stay safe) even when the app's
        // real secret equals the policy dummy; then it simply mints a
        // token against an account the operator owns in the mock.
        let t = mock_transport(|_| {});
        let policy = ProbePolicy::default();
        assert_ne!(policy.dummy_secret, SECRET);
        let verdict = check_whitelist(&t, &wechat_catalog(), &policy, APP);
        assert_eq!(verdict, WhitelistVerdict::NotWhitelisted);
    }

    #[test]
    fn policy_rejects_modify_allowlist_entries() {
        let catalog = wechat_catalog();
        let policy = probing_policy(&["clearQuota"]);
        assert!(matches!(
            policy.validate(&catalog),
            Err(PolicyError::ModifyNotProbeable(_))
        ));
    }

    #[test]
    fn policy_rejects_unknown_and_short_dummy() {
        let catalog = wechat_catalog();
        assert!(matches!(
            probing_policy(&["noSuchApi"]).validate(&catalog),
            Err(PolicyError::UnknownApi(_))
        ));
        let mut p = ProbePolicy::default();
        p.dummy_secret = "short".into();
        assert!(matches!(
            p.validate(&catalog),
            Err(PolicyError::BadDummySecret(5))
        ));
    }

    #[test]
    fn probing_disabled_touches_nothing() {
        let t = DisabledTransport::new();
        let policy = ProbePolicy {
            get_allowlist: ["getFeedback".to_string()].into(),
            min_interval_ms: 0,
            ..Default::default()
        };
        let obs = probe_get_apis(&t, &wechat_catalog(), &policy, "tok", &finding());
        assert!(obs.is_empty());
        assert_eq!(t.attempts(), 0);
    }

    #[test]
    fn probe_extracts_consumed_paths_from_fixture() {
        let t = mock_transport(|a| {
            a.fixtures.insert(
                "getFeedback".into(),
                serde_json::json!({"list": [{"openid": "o-1"}, {"openid": "o-2"}]}),
            );
        });
        let catalog = wechat_catalog();
        let token = match acquire_token(&t, &catalog, APP, SECRET) {
            TokenOutcome::TokenIssued { access_token, .. } => access_token,
            other => panic!("{other:?}"),
        };
        let obs = probe_get_apis(
            &t,
            &catalog,
            &probing_policy(&["getFeedback"]),
            &token,
            &finding(),
        );
        assert_eq!(
            obs["getFeedback"]["list[].openid"],
            vec!["o-1".to_string(), "o-2".to_string()]
        );
    }

    #[test]
    fn probe_only_touches_feeding_get_apis() {
        // getDomainInfo feeds nothing, so even when allowlisted it is not
        // worth a network call.
        let t = mock_transport(|_| {});
        let catalog = wechat_catalog();
        let token = match acquire_token(&t, &catalog, APP, SECRET) {
            TokenOutcome::TokenIssued { access_token, .. } => access_token,
            other => panic!("{other:?}"),
        };
        let obs = probe_get_apis(
            &t,
            &catalog,
            &probing_policy(&["getDomainInfo"]),
            &token,
            &finding(),
        );
        assert!(obs.is_empty());
    }

    #[test]
    fn failed_probe_recorded_as_empty_observation() {
        // Feature-blocked response: probe attempted, nothing extractable.
        let t = mock_transport(|a| {
            a.features.insert("logistics".into(), false);
        });
        let catalog = wechat_catalog();
        let token = match acquire_token(&t, &catalog, APP, SECRET) {
            TokenOutcome::TokenIssued { access_token, .. } => access_token,
            other => panic!("{other:?}"),
        };
        let obs = probe_get_apis(
            &t,
            &catalog,
            &probing_policy(&["getPrinter"]),
            &token,
            &finding(),
        );
        assert!(obs["getPrinter"].is_empty());
    }
}
