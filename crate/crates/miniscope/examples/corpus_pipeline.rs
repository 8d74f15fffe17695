//! Generate a seeded corpus, analyze it against the matching mock backend
//! (in process, no sockets), and check the summary against the generator's
//! ground-truth manifest.
//!
//! Run with: `cargo run --example corpus_pipeline`

use std::sync::{Arc, Mutex};

use miniscope::catalog::wechat_catalog;
use miniscope::corpusgen::{generate_corpus, CorpusSpec};
use miniscope::mock::MockState;
use miniscope::pipeline::{run_scan, ProbeContext};
use miniscope::prober::transport::InProcessTransport;
use miniscope::prober::ProbePolicy;
use miniscope::scanner::DetectionRuleset;

fn main() {
    let spec = CorpusSpec {
        app_count: 50,
        rng_seed: 1,
        ..Default::default()
    };
    let corpus = generate_corpus(&spec).expect("corpus generation");
    println!(
        "generated {} packages; manifest expects {} hardcoded / {} valid tokens",
        corpus.packages.len(),
        corpus.manifest.hardcoded_secrets,
        corpus.manifest.valid_tokens
    );

    let catalog = Arc::new(wechat_catalog());
    let state = Arc::new(Mutex::new(MockState::new(corpus.scenario.clone())));
    let transport = InProcessTransport::new(state, Arc::clone(&catalog));
    let ctx = ProbeContext {
        transport: &transport,
        policy: ProbePolicy {
            min_interval_ms: 0,
            ..Default::default()
        },
    };

    let inputs: Vec<(String, Vec<u8>)> = corpus
        .packages
        .iter()
        .map(|p| (p.package_id.clone(), p.bytes.clone()))
        .collect();
    let rules = DetectionRuleset::wechat().compile().unwrap();
    let outcome = run_scan(&inputs, &rules, &catalog, Some(&ctx), 4).expect("scan");

    println!(
        "pipeline found {} hardcoded / {} valid / {} whitelist-shielded",
        outcome.summary.apps_with_hardcoded_pair,
        outcome.summary.apps_with_valid_secret,
        outcome.summary.apps_whitelist_enabled
    );
    assert_eq!(
        outcome.summary.apps_with_hardcoded_pair,
        corpus.manifest.hardcoded_secrets
    );
    assert_eq!(
        outcome.summary.apps_with_valid_secret,
        corpus.manifest.valid_tokens
    );
    println!("summary matches the ground-truth manifest exactly");
}
