//! Static detection of hard-coded credentials, direct server-side API
//! invocations, and cloud extractables in package source files.

use std::collections::BTreeSet;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::catalog::ApiCatalog;
use crate::container::MiniAppPackage;

#[derive(Debug, Error)]
pub enum RulesetError {
    #[error("ruleset schema error: {0}")]
    Schema(String),
    #[error("pattern does not compile: {0}")]
    BadPattern(regex::Error),
    #[error("entropy_threshold must be within [0, 8]")]
    BadEntropyThreshold,
    #[error("proximity_window must be positive")]
    BadProximityWindow,
}

#[derive(Debug, Error, PartialEq)]
#[error("entropy of the empty string is undefined")]
pub struct EmptyString;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DetectionRuleset {
    pub platform: String,
    pub app_id_pattern: String,
    pub secret_pattern: String,
    pub keyword_hints: Vec<String>,
    pub entropy_threshold: ordered::Entropy,
    pub proximity_window: usize,
    pub scan_extensions: Vec<String>,
}

/// f64 wrapper so rulesets stay `Eq`-comparable and hashable in tests.
pub mod ordered {
    use serde::{Deserialize, Serialize};

    #[derive(Debug, Clone, Copy, PartialOrd, Serialize, Deserialize)]
    #[serde(transparent)]
    pub struct Entropy(pub f64);

    impl PartialEq for Entropy {
        fn eq(&self, other: &Self) -> bool {
            self.0.to_bits() == other.0.to_bits()
        }
    }
    impl Eq for Entropy {}
}

pub const WECHAT_RULES_JSON: &str = include_str!("../rules/wechat.json");
pub const BAIDU_RULES_JSON: &str = include_str!("../rules/baidu.json");

impl DetectionRuleset {
    pub fn wechat() -> Self {
        serde_json::from_str(WECHAT_RULES_JSON).expect("shipped wechat ruleset is valid")
    }

    pub fn baidu() -> Self {
        serde_json::from_str(BAIDU_RULES_JSON).expect("shipped baidu ruleset is valid")
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self, RulesetError> {
        let rs: DetectionRuleset =
            serde_json::from_slice(bytes).map_err(|e| RulesetError::Schema(e.to_string()))?;
        rs.compile()?; // validate
        Ok(rs)
    }

    pub fn compile(&self) -> Result<CompiledRuleset, RulesetError> {
        if !(0.0..=8.0).contains(&self.entropy_threshold.0) {
            return Err(RulesetError::BadEntropyThreshold);
        }
        if self.proximity_window == 0 {
            return Err(RulesetError::BadProximityWindow);
        }
        Ok(CompiledRuleset {
            app_id: Regex::new(&self.app_id_pattern).map_err(RulesetError::BadPattern)?,
            secret: Regex::new(&self.secret_pattern).map_err(RulesetError::BadPattern)?,
            hints: self
                .keyword_hints
                .iter()
                .map(|h| h.to_ascii_lowercase())
                .collect(),
            entropy_threshold: self.entropy_threshold.0,
            proximity_window: self.proximity_window,
            scan_extensions: self.scan_extensions.clone(),
        })
    }
}

pub struct CompiledRuleset {
    app_id: Regex,
    secret: Regex,
    hints: Vec<String>,
    entropy_threshold: f64,
    pub proximity_window: usize,
    pub scan_extensions: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SecretKind {
    AppId,
    AppSecret,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Confidence {
    PatternOnly,
    PatternKeyword,
    PatternKeywordEntropy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SecretCandidate {
    pub value: String,
    pub kind: SecretKind,
    pub file: String,
    pub byte_span: (usize, usize),
    pub entropy: f64,
    pub keyword_context: Option<String>,
    pub confidence: Confidence,
}

/// Synthetic file name used when a pair's app ID comes from package metadata
/// rather than a scanned file.
pub const APP_HINT_FILE: &str = "<app-hint>";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CredentialPair {
    pub app_id: SecretCandidate,
    pub app_secret: SecretCandidate,
    /// Character distance for same-file pairs; `None` for cross-file or
    /// app-hint pairings.
    pub pairing_distance: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirectInvocation {
    pub api_name: String,
    pub endpoint_substring: String,
    pub file: String,
    pub byte_span: (usize, usize),
    pub category: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ScanFinding {
    pub package_id: String,
    pub candidates: Vec<SecretCandidate>,
    pub pairs: Vec<CredentialPair>,
    pub direct_invocations: Vec<DirectInvocation>,
    pub cloud_function_names: Vec<String>,
    pub cloud_env_ids: Vec<String>,
    pub code_openids: Vec<String>,
}

/// Shannon entropy in bits per character over byte frequencies.
pub fn shannon_entropy(s: &str) -> Result<f64, EmptyString> {
    let bytes = s.as_bytes();
    if bytes.is_empty() {
        return Err(EmptyString);
    }
    let mut counts = [0usize; 256];
    for &b in bytes {
        counts[b as usize] += 1;
    }
    let n = bytes.len() as f64;
    let h = counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.log2()
        })
        .sum();
    Ok(h)
}

fn is_word_byte(b: u8) -> bool {
    b.is_ascii_alphanumeric() || b == b'_'
}

/// Rejects regex hits embedded in a longer alphanumeric run, e.g. the first
/// 32 hex chars of a sha256 literal.
fn has_clean_boundaries(text: &str, start: usize, end: usize) -> bool {
    let before_ok = start == 0 || !is_word_byte(text.as_bytes()[start - 1]);
    let after_ok = end == text.len() || !is_word_byte(text.as_bytes()[end]);
    before_ok && after_ok
}

const KEYWORD_LOOKBACK: usize = 100;

fn keyword_near(text: &str, start: usize, hints: &[String]) -> Option<String> {
    let from = start.saturating_sub(KEYWORD_LOOKBACK);
    // Snap to a char boundary for the lossy-decoded case.
    let mut from = from;
    while !text.is_char_boundary(from) {
        from -= 1;
    }
    let window = text[from..start].to_ascii_lowercase();
    hints
        .iter()
        .filter(|h| window.contains(h.as_str()))
        .max_by_key(|h| h.len())
        .cloned()
}

fn find_candidates(
    text: &str,
    file: &str,
    pattern: &Regex,
    kind: SecretKind,
    rules: &CompiledRuleset,
) -> Vec<SecretCandidate> {
    let mut out = Vec::new();
    for m in pattern.find_iter(text) {
        if !has_clean_boundaries(text, m.start(), m.end()) {
            continue;
        }
        let value = m.as_str().to_string();
        if kind == SecretKind::AppSecret && value.chars().count() != 32 {
            continue;
        }
        let entropy = shannon_entropy(&value).unwrap_or(0.0);
        let keyword_context = keyword_near(text, m.start(), &rules.hints);
        let confidence = match (&keyword_context, entropy >= rules.entropy_threshold) {
            (Some(_), true) => Confidence::PatternKeywordEntropy,
            (Some(_), false) => Confidence::PatternKeyword,
            (None, _) => Confidence::PatternOnly,
        };
        out.push(SecretCandidate {
            value,
            kind,
            file: file.to_string(),
            byte_span: (m.start(), m.end()),
            entropy,
            keyword_context,
            confidence,
        });
    }
    out
}

fn find_direct_invocations(
    text: &str,
    file: &str,
    catalog: &ApiCatalog,
) -> Vec<DirectInvocation> {
    let mut hits: Vec<DirectInvocation> = Vec::new();
    let apis = std::iter::once(&catalog.token_endpoint).chain(catalog.apis.values());
    for api in apis {
        for (start, matched) in text.match_indices(&api.endpoint_path) {
            hits.push(DirectInvocation {
                api_name: api.name.clone(),
                endpoint_substring: matched.to_string(),
                file: file.to_string(),
                byte_span: (start, start + matched.len()),
                category: api.category.clone(),
            });
        }
    }
    // Overlapping path prefixes: keep the longest match at each position.
    hits.sort_by(|a, b| {
        (a.byte_span.0, b.byte_span.1).cmp(&(b.byte_span.0, a.byte_span.1))
    });
    hits.dedup_by(|later, first| later.byte_span.0 == first.byte_span.0);
    hits
}

fn captures<'t>(re: &Regex, text: &'t str) -> impl Iterator<Item = String> + 't {
    re.captures_iter(text)
        .filter_map(|c| c.get(1).map(|m| m.as_str().to_string()))
        .collect::<Vec<_>>()
        .into_iter()
}

struct CloudPatterns {
    env: Regex,
    function: Regex,
    openid: Regex,
}

impl CloudPatterns {
    fn new() -> Self {
        CloudPatterns {
            env: Regex::new(
                r#"(?s)cloud\.init\s*\(\s*\{[^{}]*?env\s*:\s*['"]([A-Za-z0-9_-]+)['"]"#,
            )
            .unwrap(),
            function: Regex::new(
                r#"(?s)callFunction\s*\(\s*\{[^{}]*?name\s*:\s*['"]([A-Za-z0-9_-]+)['"]"#,
            )
            .unwrap(),
            openid: Regex::new(r#"(?i)openid['"]?\s*[:=]\s*['"]([A-Za-z0-9_-]{20,40})['"]"#)
                .unwrap(),
        }
    }
}

pub struct FileScan {
    pub candidates: Vec<SecretCandidate>,
    pub direct_invocations: Vec<DirectInvocation>,
    pub cloud_function_names: Vec<String>,
    pub cloud_env_ids: Vec<String>,
    pub code_openids: Vec<String>,
}

/// Scans one decoded source file. Malformed text yields empty results, never
/// a failure.
pub fn scan_file(
    text: &str,
    file: &str,
    rules: &CompiledRuleset,
    catalog: &ApiCatalog,
) -> FileScan {
    let cloud = CloudPatterns::new();
    let mut candidates = find_candidates(text, file, &rules.app_id, SecretKind::AppId, rules);
    candidates.extend(find_candidates(
        text,
        file,
        &rules.secret,
        SecretKind::AppSecret,
        rules,
    ));
    // A string matching both patterns (e.g. a 32-hex "app id" rule) would be
    // double-reported; dedup below handles value/span collisions across kinds.
    candidates.sort_by_key(|c| (c.byte_span, c.kind));

    FileScan {
        candidates,
        direct_invocations: find_direct_invocations(text, file, catalog),
        cloud_function_names: captures(&cloud.function, text).collect(),
        cloud_env_ids: captures(&cloud.env, text).collect(),
        code_openids: captures(&cloud.openid, text).collect(),
    }
}

fn dedup_sorted<T: Ord>(mut v: Vec<T>) -> Vec<T> {
    v.sort();
    v.dedup();
    v
}

/// Scans every entry whose suffix is in `scan_extensions`; output order is
/// deterministic (entry order, then span).
pub fn scan_package(
    pkg: &MiniAppPackage,
    package_id: &str,
    rules: &CompiledRuleset,
    catalog: &ApiCatalog,
) -> ScanFinding {
    let mut finding = ScanFinding {
        package_id: package_id.to_string(),
        ..Default::default()
    };
    for entry in &pkg.entries {
        if !rules
            .scan_extensions
            .iter()
            .any(|ext| entry.name.ends_with(ext.as_str()))
        {
            continue;
        }
        let text = String::from_utf8_lossy(&entry.content);
        let fs = scan_file(&text, &entry.name, rules, catalog);
        finding.candidates.extend(fs.candidates);
        finding.direct_invocations.extend(fs.direct_invocations);
        finding.cloud_function_names.extend(fs.cloud_function_names);
        finding.cloud_env_ids.extend(fs.cloud_env_ids);
        finding.code_openids.extend(fs.code_openids);
    }
    // Dedup by (value, file, span); entry iteration order is already stable.
    let mut seen = BTreeSet::new();
    finding
        .candidates
        .retain(|c| seen.insert((c.value.clone(), c.file.clone(), c.byte_span)));
    let mut seen = BTreeSet::new();
    finding
        .direct_invocations
        .retain(|d| seen.insert((d.api_name.clone(), d.file.clone(), d.byte_span)));
    finding.cloud_function_names = dedup_sorted(std::mem::take(&mut finding.cloud_function_names));
    finding.cloud_env_ids = dedup_sorted(std::mem::take(&mut finding.cloud_env_ids));
    finding.code_openids = dedup_sorted(std::mem::take(&mut finding.code_openids));

    finding.pairs = pair_credentials(&finding.candidates, rules.proximity_window, pkg.app_hint.as_deref());
    finding
}

fn span_distance(a: (usize, usize), b: (usize, usize)) -> usize {
    if a.1 <= b.0 {
        b.0 - a.1
    } else if b.1 <= a.0 {
        a.0 - b.1
    } else {
        0
    }
}

/// Pairs each app_secret candidate with app IDs per the proximity rule:
/// nearest same-file ID within `window` (ties broken by earlier span), else
/// every distinct ID in the package, else the package's app hint.
pub fn pair_credentials(
    candidates: &[SecretCandidate],
    window: usize,
    app_hint: Option<&str>,
) -> Vec<CredentialPair> {
    let ids: Vec<&SecretCandidate> = candidates
        .iter()
        .filter(|c| c.kind == SecretKind::AppId)
        .collect();
    let secrets = candidates.iter().filter(|c| c.kind == SecretKind::AppSecret);

    let mut pairs = Vec::new();
    for secret in secrets {
        let nearest = ids
            .iter()
            .filter(|id| id.file == secret.file)
            .map(|id| (span_distance(id.byte_span, secret.byte_span), *id))
            .filter(|(d, _)| *d <= window)
            .min_by_key(|(d, id)| (*d, id.byte_span));
        if let Some((distance, id)) = nearest {
            pairs.push(CredentialPair {
                app_id: id.clone(),
                app_secret: secret.clone(),
                pairing_distance: Some(distance),
            });
            continue;
        }
        if !ids.is_empty() {
            let mut seen_values = BTreeSet::new();
            for id in &ids {
                if seen_values.insert(id.value.clone()) {
                    pairs.push(CredentialPair {
                        app_id: (*id).clone(),
                        app_secret: secret.clone(),
                        pairing_distance: None,
                    });
                }
            }
            continue;
        }
        if let Some(hint) = app_hint {
            pairs.push(CredentialPair {
                app_id: SecretCandidate {
                    value: hint.to_string(),
                    kind: SecretKind::AppId,
                    file: APP_HINT_FILE.to_string(),
                    byte_span: (0, 0),
                    entropy: 0.0,
                    keyword_context: None,
                    confidence: Confidence::PatternOnly,
                },
                app_secret: secret.clone(),
                pairing_distance: None,
            });
        }
        // No ID anywhere and no hint: the secret stays unpaired and is still
        // reported through `candidates`.
    }
    pairs
}
