//! Pure decision core of the mock server. The HTTP layer and unit tests both
//! call `evaluate_request`; the decision order is fixed:
//! whitelist -> credential/token validity -> token expiry -> quota ->
//! feature enablement -> fixture.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use super::scenario::MockScenario;
use crate::catalog::{ApiCatalog, ApiKind, ApiSpec, Provenance};
use crate::codes;

const MONTH_SECONDS: u64 = 30 * 24 * 3600;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecordClass {
    Token,
    Get,
    Modify,
    Admin,
    Unknown,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RequestRecord {
    pub timestamp: u64,
    pub path: String,
    pub query_digest: String,
    pub classification: RecordClass,
    pub app_id: Option<String>,
}

/// One incoming request, reduced to what the decision core needs.
#[derive(Debug, Clone)]
pub struct MockRequest {
    pub path: String,
    pub params: BTreeMap<String, String>,
    pub client_ip: String,
}

#[derive(Debug)]
struct IssuedToken {
    app_id: String,
    issued_at: u64,
}

/// Mutable server state: scenario plus token table, quota counters and the
/// append-only request log.
pub struct MockState {
    pub scenario: MockScenario,
    tokens: HashMap<String, IssuedToken>,
    token_seq: u64,
    /// Calls consumed against `quotas`, keyed by (app, api).
    used: HashMap<(String, String), u64>,
    /// Call timestamps for `monthly_limits`, keyed by (app, api).
    monthly_calls: HashMap<(String, String), Vec<u64>>,
    records: Vec<RequestRecord>,
    /// Virtual clock offset in seconds, added to wall time.
    pub clock_offset: u64,
}

impl MockState {
    pub fn new(scenario: MockScenario) -> Self {
        MockState {
            scenario,
            tokens: HashMap::new(),
            token_seq: 0,
            used: HashMap::new(),
            monthly_calls: HashMap::new(),
            records: Vec::new(),
            clock_offset: 0,
        }
    }

    pub fn now(&self) -> u64 {
        let wall = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        wall + self.clock_offset
    }

    pub fn records(&self) -> &[RequestRecord] {
        &self.records
    }

    pub fn reset(&mut self) {
        self.tokens.clear();
        self.used.clear();
        self.monthly_calls.clear();
        self.records.clear();
        self.clock_offset = 0;
    }
}

fn err_body(code: i64, msg: &str) -> Value {
    json!({"errcode": code, "errmsg": msg})
}

fn param_name_by_provenance<'a>(api: &'a ApiSpec, want: &Provenance) -> Option<&'a str> {
    api.params
        .iter()
        .find(|p| &p.provenance == want)
        .map(|p| p.name.as_str())
}

fn classify_path<'a>(catalog: &'a ApiCatalog, path: &str) -> Option<(&'a ApiSpec, RecordClass)> {
    if path == catalog.token_endpoint.endpoint_path {
        return Some((&catalog.token_endpoint, RecordClass::Token));
    }
    catalog
        .apis
        .values()
        .find(|a| a.endpoint_path == path)
        .map(|a| {
            let class = match a.kind {
                ApiKind::Get => RecordClass::Get,
                ApiKind::Modify => RecordClass::Modify,
            };
            (a, class)
        })
}

/// Feature tag gating an API, if any. Keyed off the shipped WeChat-like
/// catalog categories; APIs without a tag are always enabled.
fn feature_tag(api: &ApiSpec) -> Option<&'static str> {
    match api.category.as_str() {
        "Miniapps Nearby" => Some("nearby"),
        "Customer Service Message" => Some("customer_service"),
        "Cloud Base" => Some("cloud_base"),
        "Miniapp Plug-in" => Some("plugin"),
        "Logistics Assistant" => Some("logistics"),
        _ => None,
    }
}

fn digest_params(params: &BTreeMap<String, String>) -> String {
    let mut h = Sha256::new();
    for (k, v) in params {
        h.update(k.as_bytes());
        h.update(b"=");
        h.update(v.as_bytes());
        h.update(b"&");
    }
    hex_prefix(&h.finalize(), 16)
}

fn hex_prefix(bytes: &[u8], n: usize) -> String {
    bytes.iter().take(n).map(|b| format!("{b:02x}")).collect()
}

/// Total decision function: every request maps to a JSON body, and every
/// request is logged.
pub fn evaluate_request(state: &mut MockState, catalog: &ApiCatalog, req: &MockRequest) -> Value {
    let now = state.now();
    let matched = classify_path(catalog, &req.path);
    let classification = matched.as_ref().map(|(_, c)| *c).unwrap_or(RecordClass::Unknown);

    let (body, app_id) = match matched {
        None => (err_body(-1, "unknown endpoint"), None),
        Some((api, RecordClass::Token)) => evaluate_token(state, api, req, now),
        Some((api, _)) => evaluate_api(state, api, req, now),
    };

    state.records.push(RequestRecord {
        timestamp: now,
        path: req.path.clone(),
        query_digest: digest_params(&req.params),
        classification,
        app_id,
    });
    body
}

fn evaluate_token(
    state: &mut MockState,
    api: &ApiSpec,
    req: &MockRequest,
    now: u64,
) -> (Value, Option<String>) {
    let id_param = param_name_by_provenance(api, &Provenance::AppId).unwrap_or("appid");
    let secret_param = param_name_by_provenance(api, &Provenance::AppSecret).unwrap_or("secret");
    let Some(app_id) = req.params.get(id_param).cloned() else {
        return (err_body(codes::INVALID_CREDENTIAL, "invalid appid"), None);
    };
    let Some(app) = state.scenario.apps.get(&app_id).cloned() else {
        return (
            err_body(codes::INVALID_CREDENTIAL, "invalid appid"),
            Some(app_id),
        );
    };

    // Whitelist precedes the credential check; this ordering is what makes
    // the dummy-secret whitelist probe work.
    if !app.whitelist.is_empty() && !app.whitelist.iter().any(|ip| ip == &req.client_ip) {
        return (
            err_body(codes::IP_NOT_WHITELISTED, "invalid ip, not in whitelist"),
            Some(app_id),
        );
    }
    if req.params.get(secret_param) != Some(&app.secret) {
        return (
            err_body(codes::INVALID_CREDENTIAL, "invalid appsecret"),
            Some(app_id),
        );
    }
    if app.limited {
        return (err_body(codes::USER_LIMITED, "the user is limited"), Some(app_id));
    }
    if let Some(verdict) = consume_quota(state, &app_id, &api.name, now) {
        return (verdict, Some(app_id));
    }

    state.token_seq += 1;
    let token = format!("mocktoken-{}-{}", state.token_seq, now);
    state.tokens.insert(
        token.clone(),
        IssuedToken {
            app_id: app_id.clone(),
            issued_at: now,
        },
    );
    let ttl = state.scenario.token_ttl;
    (
        json!({"access_token": token, "expires_in": ttl}),
        Some(app_id),
    )
}

/// Checks both the absolute quota table and rolling monthly limits,
/// consuming one call on success. Returns an error body when exhausted.
fn consume_quota(state: &mut MockState, app_id: &str, api_name: &str, now: u64) -> Option<Value> {
    let app = state.scenario.apps.get(app_id)?;
    if let Some(&limit) = app.quotas.get(api_name) {
        let used = state
            .used
            .entry((app_id.to_string(), api_name.to_string()))
            .or_insert(0);
        if *used >= limit {
            return Some(err_body(codes::QUOTA_EXCEEDED, "reach max api daily quota limit"));
        }
        *used += 1;
    }
    if let Some(&limit) = app.monthly_limits.get(api_name) {
        let calls = state
            .monthly_calls
            .entry((app_id.to_string(), api_name.to_string()))
            .or_default();
        calls.retain(|&t| now.saturating_sub(t) < MONTH_SECONDS);
        if calls.len() as u64 >= limit {
            return Some(err_body(codes::QUOTA_EXCEEDED, "monthly call limit reached"));
        }
        calls.push(now);
    }
    None
}

fn evaluate_api(
    state: &mut MockState,
    api: &ApiSpec,
    req: &MockRequest,
    now: u64,
) -> (Value, Option<String>) {
    let Some(token) = req.params.get("access_token") else {
        return (err_body(codes::INVALID_TOKEN, "missing access_token"), None);
    };
    let Some(issued) = state.tokens.get(token) else {
        return (err_body(codes::INVALID_TOKEN, "invalid access token"), None);
    };
    let app_id = issued.app_id.clone();
    let issued_at = issued.issued_at;
    let Some(app) = state.scenario.apps.get(&app_id).cloned() else {
        return (err_body(codes::INVALID_TOKEN, "invalid access token"), None);
    };

    if !app.whitelist.is_empty() && !app.whitelist.iter().any(|ip| ip == &req.client_ip) {
        return (
            err_body(codes::IP_NOT_WHITELISTED, "invalid ip, not in whitelist"),
            Some(app_id),
        );
    }
    if now >= issued_at + state.scenario.token_ttl {
        return (
            err_body(codes::TOKEN_EXPIRED, "access token expired"),
            Some(app_id),
        );
    }
    if let Some(verdict) = consume_quota(state, &app_id, &api.name, now) {
        return (verdict, Some(app_id));
    }
    if let Some(tag) = feature_tag(api) {
        if app.features.get(tag) == Some(&false) {
            return (
                err_body(codes::FEATURE_BLOCKED, "api unauthorized or feature blocked"),
                Some(app_id),
            );
        }
    }
    if api.kind == ApiKind::Modify {
        return (
            err_body(codes::MODIFY_REFUSED, "modify endpoints are never executed by the mock"),
            Some(app_id),
        );
    }
    let body = match app.fixtures.get(&api.name) {
        Some(fixture) => {
            let mut body = fixture.clone();
            if let Value::Object(map) = &mut body {
                map.entry("errcode").or_insert(json!(0));
            }
            body
        }
        None => err_body(codes::OK, "ok"),
    };
    (body, Some(app_id))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::wechat_catalog;
    use crate::mock::scenario::AppScenario;

    const APP: &str = "wx0123456789abcdef";
    const SECRET: &str = "00112233445566778899aabbccddeeff";

    fn scenario() -> MockScenario {
        let mut s = MockScenario::new();
        s.apps.insert(APP.into(), AppScenario::with_secret(SECRET));
        s
    }

    fn token_req(secret: &str, ip: &str) -> MockRequest {
        let mut params = BTreeMap::new();
        params.insert("grant_type".into(), "client_credential".into());
        params.insert("appid".into(), APP.into());
        params.insert("secret".into(), secret.into());
        MockRequest {
            path: "/cgi-bin/token".into(),
            params,
            client_ip: ip.into(),
        }
    }

    fn issue_token(state: &mut MockState) -> String {
        let body = evaluate_request(state, &wechat_catalog(), &token_req(SECRET, "10.0.0.1"));
        body["access_token"].as_str().unwrap().to_string()
    }

    fn api_req(path: &str, token: &str) -> MockRequest {
        let mut params = BTreeMap::new();
        params.insert("access_token".into(), token.into());
        MockRequest {
            path: path.into(),
            params,
            client_ip: "10.0.0.1".into(),
        }
    }

    #[test]
    fn valid_credentials_issue_token_with_ttl() {
        let mut state = MockState::new(scenario());
        let body = evaluate_request(&mut state, &wechat_catalog(), &token_req(SECRET, "1.2.3.4"));
        assert!(body["access_token"].is_string());
        assert_eq!(body["expires_in"], 7200);
    }

    #[test]
    fn whitelist_precedes_credential_check() {
        let mut s = scenario();
        s.apps.get_mut(APP).unwrap().whitelist = vec!["198.51.100.1".into()];
        let mut state = MockState::new(s);
        // Wrong secret, but the whitelist answer wins.
        let body = evaluate_request(
            &mut state,
            &wechat_catalog(),
            &token_req("ffffffffffffffffffffffffffffffff", "10.9.9.9"),
        );
        assert_eq!(body["errcode"], codes::IP_NOT_WHITELISTED);
    }

    #[test]
    fn wrong_secret_is_invalid_credential() {
        let mut state = MockState::new(scenario());
        let body = evaluate_request(
            &mut state,
            &wechat_catalog(),
            &token_req("ffffffffffffffffffffffffffffffff", "1.1.1.1"),
        );
        assert_eq!(body["errcode"], codes::INVALID_CREDENTIAL);
    }

    #[test]
    fn limited_account_reports_user_limited() {
        let mut s = scenario();
        s.apps.get_mut(APP).unwrap().limited = true;
        let mut state = MockState::new(s);
        let body = evaluate_request(&mut state, &wechat_catalog(), &token_req(SECRET, "1.1.1.1"));
        assert_eq!(body["errcode"], codes::USER_LIMITED);
    }

    #[test]
    fn exhausted_quota_reported() {
        let mut s = scenario();
        s.apps.get_mut(APP).unwrap().quotas.insert("getFeedback".into(), 0);
        let mut state = MockState::new(s);
        let token = issue_token(&mut state);
        let body = evaluate_request(
            &mut state,
            &wechat_catalog(),
            &api_req("/wxaapi/feedback/list", &token),
        );
        assert_eq!(body["errcode"], codes::QUOTA_EXCEEDED);
    }

    #[test]
    fn expired_token_rejected_on_virtual_clock() {
        let mut state = MockState::new(scenario());
        let token = issue_token(&mut state);
        state.clock_offset += 7200;
        let body = evaluate_request(
            &mut state,
            &wechat_catalog(),
            &api_req("/wxaapi/feedback/list", &token),
        );
        assert_eq!(body["errcode"], codes::TOKEN_EXPIRED);
    }

    #[test]
    fn disabled_feature_blocks_get() {
        let mut s = scenario();
        s.apps
            .get_mut(APP)
            .unwrap()
            .features
            .insert("nearby".into(), false);
        let mut state = MockState::new(s);
        let token = issue_token(&mut state);
        let body = evaluate_request(
            &mut state,
            &wechat_catalog(),
            &api_req("/wxa/getnearbypoilist", &token),
        );
        assert_eq!(body["errcode"], codes::FEATURE_BLOCKED);
    }

    #[test]
    fn fixture_served_with_ok_errcode() {
        let mut s = scenario();
        s.apps.get_mut(APP).unwrap().fixtures.insert(
            "getFeedback".into(),
            json!({"list": [{"openid": "o-1"}]}),
        );
        let mut state = MockState::new(s);
        let token = issue_token(&mut state);
        let body = evaluate_request(
            &mut state,
            &wechat_catalog(),
            &api_req("/wxaapi/feedback/list", &token),
        );
        assert_eq!(body["errcode"], 0);
        assert_eq!(body["list"][0]["openid"], "o-1");
    }

    #[test]
    fn modify_route_refused_and_logged() {
        let mut state = MockState::new(scenario());
        let token = issue_token(&mut state);
        let body = evaluate_request(
            &mut state,
            &wechat_catalog(),
            &api_req("/cgi-bin/clear_quota", &token),
        );
        assert_eq!(body["errcode"], codes::MODIFY_REFUSED);
        let modify_records: Vec<_> = state
            .records()
            .iter()
            .filter(|r| r.classification == RecordClass::Modify)
            .collect();
        assert_eq!(modify_records.len(), 1);
        assert_eq!(modify_records[0].app_id.as_deref(), Some(APP));
    }

    #[test]
    fn monthly_limit_enforced_and_rolls_over() {
        let mut s = scenario();
        s.apps
            .get_mut(APP)
            .unwrap()
            .monthly_limits
            .insert("getFeedback".into(), 10);
        let mut state = MockState::new(s);
        let token = issue_token(&mut state);
        for _ in 0..10 {
            let body = evaluate_request(
                &mut state,
                &wechat_catalog(),
                &api_req("/wxaapi/feedback/list", &token),
            );
            assert_eq!(body["errcode"], 0);
        }
        let body = evaluate_request(
            &mut state,
            &wechat_catalog(),
            &api_req("/wxaapi/feedback/list", &token),
        );
        assert_eq!(body["errcode"], codes::QUOTA_EXCEEDED);

        // A month later the window has rolled over; reissue a fresh token
        // since the old one expired with the clock.
        state.clock_offset += MONTH_SECONDS + 1;
        let token = issue_token(&mut state);
        let body = evaluate_request(
            &mut state,
            &wechat_catalog(),
            &api_req("/wxaapi/feedback/list", &token),
        );
        assert_eq!(body["errcode"], 0);
    }

    #[test]
    fn decision_order_whitelist_beats_everything_else() {
        // An app that would fail credential, quota and feature checks still
        // answers with the whitelist error first.
        let mut s = scenario();
        let app = s.apps.get_mut(APP).unwrap();
        app.whitelist = vec!["198.51.100.1".into()];
        app.limited = true;
        app.quotas.insert("getAccessToken".into(), 0);
        let mut state = MockState::new(s);
        let body = evaluate_request(
            &mut state,
            &wechat_catalog(),
            &token_req("ffffffffffffffffffffffffffffffff", "10.0.0.2"),
        );
        assert_eq!(body["errcode"], codes::IP_NOT_WHITELISTED);
    }
}
