//! The mock backend over real HTTP: routing, admin surface, header-based
//! client-IP override and the virtual clock.

use std::collections::BTreeMap;

use miniscope::catalog::wechat_catalog;
use miniscope::mock::{serve, AppScenario, MockScenario, MockServerHandle};

const APP: &str = "wx00aa11bb22cc33dd";
const SECRET: &str = "5f5e10aa11bb22cc33dd44ee55ff6677";

fn start(configure: impl FnOnce(&mut AppScenario)) -> MockServerHandle {
    let mut scenario = MockScenario::new();
    let mut app = AppScenario::with_secret(SECRET);
    configure(&mut app);
    scenario.apps.insert(APP.into(), app);
    serve(
        scenario,
        wechat_catalog(),
        "127.0.0.1:0".parse().unwrap(),
    )
    .expect("server starts")
}

fn get_json(url: &str) -> serde_json::Value {
    reqwest::blocking::get(url).unwrap().json().unwrap()
}

fn token_url(base: &str, secret: &str) -> String {
    format!("{base}/cgi-bin/token?grant_type=client_credential&appid={APP}&secret={secret}")
}

#[test]
fn token_roundtrip_and_expiry_over_http() {
    let server = start(|_| {});
    let base = server.base_url();

    let body = get_json(&token_url(&base, SECRET));
    let token = body["access_token"].as_str().unwrap().to_string();
    assert_eq!(body["expires_in"], 7200);

    let body = get_json(&format!("{base}/wxaapi/feedback/list?access_token={token}"));
    assert_eq!(body["errcode"], 0);

    // Advance the virtual clock past the TTL; the token dies.
    let client = reqwest::blocking::Client::new();
    let body: serde_json::Value = client
        .post(format!("{base}/__admin/advance"))
        .body(r#"{"seconds": 7200}"#)
        .send()
        .unwrap()
        .json()
        .unwrap();
    assert_eq!(body["clock_offset"], 7200);
    let body = get_json(&format!("{base}/wxaapi/feedback/list?access_token={token}"));
    assert_eq!(body["errcode"], 42001);
}

#[test]
fn client_ip_header_override_controls_whitelist() {
    let server = start(|app| app.whitelist = vec!["203.0.113.50".into()]);
    let base = server.base_url();

    // Loopback peer is not whitelisted.
    let body = get_json(&token_url(&base, SECRET));
    assert_eq!(body["errcode"], 40164);

    // Same request claiming the whitelisted address succeeds.
    let client = reqwest::blocking::Client::new();
    let body: serde_json::Value = client
        .get(token_url(&base, SECRET))
        .header("x-mock-client-ip", "203.0.113.50")
        .send()
        .unwrap()
        .json()
        .unwrap();
    assert!(body["access_token"].is_string());
}

#[test]
fn params_accepted_from_json_body() {
    let server = start(|_| {});
    let base = server.base_url();
    let client = reqwest::blocking::Client::new();
    let mut payload = BTreeMap::new();
    payload.insert("grant_type", "client_credential");
    payload.insert("appid", APP);
    payload.insert("secret", SECRET);
    let body: serde_json::Value = client
        .post(format!("{base}/cgi-bin/token"))
        .json(&payload)
        .send()
        .unwrap()
        .json()
        .unwrap();
    assert!(body["access_token"].is_string());
}

#[test]
fn admin_records_and_reset() {
    let server = start(|_| {});
    let base = server.base_url();
    let _ = get_json(&token_url(&base, "00000000000000000000000000000000"));
    let _ = get_json(&format!("{base}/cgi-bin/clear_quota?access_token=bogus"));

    let records = get_json(&format!("{base}/__admin/records"));
    let records = records["records"].as_array().unwrap();
    assert_eq!(records.len(), 2);
    assert_eq!(records[0]["classification"], "token");
    // The bogus-token call fails before reaching the modify handler, but
    // the path is still logged with its modify classification.
    assert_eq!(records[1]["classification"], "modify");

    let client = reqwest::blocking::Client::new();
    client
        .post(format!("{base}/__admin/reset"))
        .send()
        .unwrap();
    let records = get_json(&format!("{base}/__admin/records"));
    assert!(records["records"].as_array().unwrap().is_empty());
}

#[test]
fn modify_endpoints_refused_with_valid_token() {
    let server = start(|_| {});
    let base = server.base_url();
    let token = get_json(&token_url(&base, SECRET))["access_token"]
        .as_str()
        .unwrap()
        .to_string();
    let body = get_json(&format!("{base}/cgi-bin/clear_quota?access_token={token}"));
    assert_eq!(body["errcode"], 49000);
}

#[test]
fn unknown_endpoint_gets_error_body() {
    let server = start(|_| {});
    let body = get_json(&format!("{}/definitely/not/an/api", server.base_url()));
    assert_eq!(body["errcode"], -1);
}

#[test]
fn state_handle_reflects_http_traffic() {
    let server = start(|_| {});
    let _ = get_json(&token_url(&server.base_url(), SECRET));
    let state = server.state();
    let state = state.lock().unwrap();
    assert_eq!(state.records().len(), 1);
    assert_eq!(state.records()[0].app_id.as_deref(), Some(APP));
}
