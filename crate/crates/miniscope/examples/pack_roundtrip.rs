//! Build a package in memory, serialize it to the container format, and
//! read it back.
//!
//! Run with: `cargo run --example pack_roundtrip`

use std::collections::BTreeMap;

use miniscope::container::{pack, unpack};

fn main() {
    let mut files: BTreeMap<String, Vec<u8>> = BTreeMap::new();
    files.insert(
        "app.json".into(),
        br#"{"appid": "wx0123456789abcdef", "pages": ["pages/index"]}"#.to_vec(),
    );
    files.insert(
        "pages/index.js".into(),
        b"Page({ onLoad() { console.log('hello'); } });".to_vec(),
    );
    files.insert("pages/index.wxml".into(), b"<view>hello</view>".to_vec());

    let bytes = pack(&files).expect("valid entry names");
    println!("packed {} files into {} bytes", files.len(), bytes.len());

    let package = unpack(&bytes).expect("round-trip");
    println!("app hint: {:?}", package.app_hint);
    for entry in &package.entries {
        println!("  {:30} offset={:5} size={}", entry.name, entry.offset, entry.size);
    }
}
