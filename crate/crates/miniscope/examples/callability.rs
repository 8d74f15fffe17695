//! Show how callability verdicts change as more facts become available:
//! from "credentials valid, no token" to "token plus probed Get responses".
//!
//! Run with: `cargo run --example callability`

use std::collections::BTreeMap;

use miniscope::catalog::{wechat_catalog, ExtractorTag};
use miniscope::prober::{resolve_callability, CallabilityVerdict, ResolutionFacts};

fn show(title: &str, facts: &ResolutionFacts) {
    let catalog = wechat_catalog();
    let reports = resolve_callability(&catalog, facts);
    let count = |v: CallabilityVerdict| reports.values().filter(|r| r.verdict == v).count();
    println!(
        "{title}: {} callable / {} unknown / {} not callable",
        count(CallabilityVerdict::Callable),
        count(CallabilityVerdict::Unknown),
        count(CallabilityVerdict::NotCallable)
    );
    for r in reports.values().filter(|r| r.verdict == CallabilityVerdict::Callable) {
        println!("    callable: {}", r.api);
    }
}

fn main() {
    let mut facts = ResolutionFacts {
        app_id_known: true,
        credentials_valid: true,
        token_available: false,
        ..Default::default()
    };
    show("credentials only", &facts);

    facts.token_available = true;
    show("with access token", &facts);

    facts.code_tags.insert(ExtractorTag::CloudEnvId);
    facts.code_tags.insert(ExtractorTag::CloudFunctionName);
    show("plus cloud artifacts from code", &facts);

    facts.observations.insert(
        "getFeedback".into(),
        BTreeMap::from([("list[].openid".to_string(), vec!["o-42".to_string()])]),
    );
    facts.observations.insert(
        "createActivityId".into(),
        BTreeMap::from([("activity_id".to_string(), vec!["act-7".to_string()])]),
    );
    show("plus probed Get responses", &facts);
}
