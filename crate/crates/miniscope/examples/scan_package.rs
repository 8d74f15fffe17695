//! Scan a package file for hardcoded credentials and print what was found.
//!
//! Run with: `cargo run --example scan_package -- path/to/app.mapk`
//! (without an argument it scans a small built-in demo package)

use std::collections::BTreeMap;

use miniscope::catalog::wechat_catalog;
use miniscope::container::{pack, unpack};
use miniscope::scanner::{scan_package, DetectionRuleset};

fn demo_package() -> Vec<u8> {
    let mut files: BTreeMap<String, Vec<u8>> = BTreeMap::new();
    files.insert(
        "utils/config.js".into(),
        b"const appId = \"wx9e2c4f81a7b3d605\";\nconst appSecret = \"3f1a9c0d7e5b2481f6a8d0c3b7e91254\";\n"
            .to_vec(),
    );
    files.insert(
        "pages/login.js".into(),
        b"wx.request({ url: 'https://api.weixin.qq.com/cgi-bin/token?grant_type=client_credential' });"
            .to_vec(),
    );
    pack(&files).unwrap()
}

fn main() {
    let bytes = match std::env::args().nth(1) {
        Some(path) => std::fs::read(&path).expect("readable package file"),
        None => demo_package(),
    };
    let package = unpack(&bytes).expect("valid container");
    let rules = DetectionRuleset::wechat().compile().unwrap();
    let finding = scan_package(&package, "demo", &rules, &wechat_catalog());

    println!("{} candidate values:", finding.candidates.len());
    for c in &finding.candidates {
        println!(
            "  {:?} {} in {} @ {:?} (entropy {:.2}, {:?})",
            c.kind, c.value, c.file, c.byte_span, c.entropy, c.confidence
        );
    }
    println!("{} credential pairs:", finding.pairs.len());
    for p in &finding.pairs {
        println!(
            "  {} / {}… (distance {:?})",
            p.app_id.value,
            &p.app_secret.value[..8],
            p.pairing_distance
        );
    }
    for d in &finding.direct_invocations {
        println!("direct backend call: {} via {}", d.api_name, d.endpoint_substring);
    }
}
