//! Start the mock backend on an ephemeral port, then exercise the prober
//! against it over real HTTP: token acquisition for valid, invalid and
//! whitelisted apps, plus the dummy-secret whitelist check.
//!
//! Run with: `cargo run --example probe_mock`

use miniscope::catalog::wechat_catalog;
use miniscope::mock::{serve, AppScenario, MockScenario};
use miniscope::prober::transport::HttpTransport;
use miniscope::prober::{acquire_token, check_whitelist, ProbePolicy};

fn main() {
    let mut scenario = MockScenario::new();
    scenario.apps.insert(
        "wx1111111111111111".into(),
        AppScenario::with_secret("aaaabbbbccccddddeeeeffff00001111"),
    );
    let mut shielded = AppScenario::with_secret("11112222333344445555666677778888");
    shielded.whitelist = vec!["203.0.113.9".into()];
    scenario.apps.insert("wx2222222222222222".into(), shielded);

    let catalog = wechat_catalog();
    let handle = serve(scenario, catalog.clone(), "127.0.0.1:0".parse().unwrap())
        .expect("mock server starts");
    println!("mock backend at {}", handle.base_url());

    let transport = HttpTransport::new(&handle.base_url()).unwrap();
    let policy = ProbePolicy::default();

    let outcome = acquire_token(
        &transport,
        &catalog,
        "wx1111111111111111",
        "aaaabbbbccccddddeeeeffff00001111",
    );
    println!("valid secret        -> {outcome:?}");

    let outcome = acquire_token(&transport, &catalog, "wx1111111111111111", &"0".repeat(32));
    println!("wrong secret        -> {outcome:?}");

    let outcome = acquire_token(
        &transport,
        &catalog,
        "wx2222222222222222",
        "11112222333344445555666677778888",
    );
    println!("whitelisted app     -> {outcome:?}");

    let verdict = check_whitelist(&transport, &catalog, &policy, "wx2222222222222222");
    println!("whitelist check (2) -> {verdict:?}");
    let verdict = check_whitelist(&transport, &catalog, &policy, "wx1111111111111111");
    println!("whitelist check (1) -> {verdict:?}");

    handle.shutdown();
}
