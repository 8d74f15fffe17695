//! Reporting: per-app analysis results, corpus-level summaries and
//! temporal diffs between two snapshots of the same corpus.
//!
//! Raw secrets never appear in reports; only their SHA-256 digests do.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use std::collections::BTreeSet;

use crate::catalog::{ApiCatalog, ImpactFlag, Severity};
use crate::prober::{CallabilityReport, CallabilityVerdict, TokenOutcome, WhitelistVerdict};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error, PartialEq)]
pub enum ReportError {
    #[error("duplicate package id {0} in report set")]
    DuplicateId(String),
    #[error("summary total {total} is smaller than the {reports} reports given")]
    TotalTooSmall { total: usize, reports: usize },
}

/// Validation state of a detected secret. `Unvalidated` covers both
/// `--no-probe` runs and apps shielded by an IP whitelist, where the
/// credential check is unreachable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SecretValidity {
    Valid,
    Invalid,
    Unvalidated,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WhitelistStatus {
    Enabled,
    Disabled,
    Indeterminate,
}

pub fn secret_digest(secret: &str) -> String {
    let mut h = Sha256::new();
    h.update(secret.as_bytes());
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AppReport {
    pub schema_version: u32,
    pub package_id: String,
    pub app_id: Option<String>,
    pub found_hardcoded: bool,
    /// SHA-256 of the paired secret, if one was found.
    pub secret_digest: Option<String>,
    pub secret_validity: SecretValidity,
    pub whitelist: WhitelistStatus,
    pub token_outcome: Option<TokenOutcome>,
    pub whitelist_probe: Option<WhitelistVerdict>,
    pub candidate_count: usize,
    pub direct_invocations: Vec<String>,
    pub callability: BTreeMap<String, CallabilityReport>,
    /// Union of the impact flags of all CALLABLE APIs.
    pub consequence_flags: BTreeSet<ImpactFlag>,
    /// Highest severity among CALLABLE APIs; `None` when nothing is callable.
    pub max_severity: Option<Severity>,
    pub scanned_at: u64,
}

impl AppReport {
    /// A clean report for a package with no credential findings.
    pub fn clean(package_id: &str, app_id: Option<String>) -> Self {
        AppReport {
            schema_version: SCHEMA_VERSION,
            package_id: package_id.to_string(),
            app_id,
            found_hardcoded: false,
            secret_digest: None,
            secret_validity: SecretValidity::Unvalidated,
            whitelist: WhitelistStatus::Indeterminate,
            token_outcome: None,
            whitelist_probe: None,
            candidate_count: 0,
            direct_invocations: Vec::new(),
            callability: BTreeMap::new(),
            consequence_flags: BTreeSet::new(),
            max_severity: None,
            scanned_at: 0,
        }
    }

    /// Recomputes flag/severity rollups from the callability verdicts.
    /// Pure in (callability, catalog); used at construction and testable
    /// by perturbation.
    pub fn recompute_rollups(&mut self, catalog: &ApiCatalog) {
        self.consequence_flags.clear();
        self.max_severity = None;
        for (name, report) in &self.callability {
            if report.verdict != CallabilityVerdict::Callable {
                continue;
            }
            if let Some(api) = catalog.api(name) {
                self.consequence_flags.extend(api.impact_flags.iter().copied());
                self.max_severity = Some(match self.max_severity {
                    Some(s) => s.max(api.severity),
                    None => api.severity,
                });
            }
        }
    }

    /// Number of APIs judged callable, broken down by severity.
    pub fn callable_by_severity(&self, catalog: &ApiCatalog) -> BTreeMap<Severity, usize> {
        let mut counts = BTreeMap::new();
        for (name, report) in &self.callability {
            if report.verdict == CallabilityVerdict::Callable {
                if let Some(api) = catalog.api(name) {
                    *counts.entry(api.severity).or_insert(0) += 1;
                }
            }
        }
        counts
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusSummary {
    pub schema_version: u32,
    /// Packages in the corpus, including ones that failed to unpack.
    pub total_apps: usize,
    /// Packages that unpacked and were scanned (= number of reports).
    pub unpacked: usize,
    pub apps_with_findings: usize,
    pub apps_with_hardcoded_pair: usize,
    pub apps_with_valid_secret: usize,
    pub apps_whitelist_enabled: usize,
    pub direct_invocation_apps: usize,
    pub hardcoded_rate: f64,
    pub valid_rate: f64,
    /// Apps exposed to each consequence flag (via callable APIs).
    pub consequence_app_counts: BTreeMap<ImpactFlag, usize>,
    /// For each API, how many apps can call it.
    pub callable_api_counts: BTreeMap<String, usize>,
}

/// Aggregates per-app reports into corpus-level figures. `total_apps` may
/// exceed the report count when packages failed to unpack and were skipped.
pub fn summarize(reports: &[AppReport], total_apps: usize) -> Result<CorpusSummary, ReportError> {
    if total_apps < reports.len() {
        return Err(ReportError::TotalTooSmall {
            total: total_apps,
            reports: reports.len(),
        });
    }
    let mut seen = std::collections::BTreeSet::new();
    for r in reports {
        if !seen.insert(&r.package_id) {
            return Err(ReportError::DuplicateId(r.package_id.clone()));
        }
    }
    let apps_with_findings = reports.iter().filter(|r| r.candidate_count > 0).count();
    let apps_with_hardcoded_pair = reports.iter().filter(|r| r.found_hardcoded).count();
    let apps_with_valid_secret = reports
        .iter()
        .filter(|r| r.secret_validity == SecretValidity::Valid)
        .count();
    let apps_whitelist_enabled = reports
        .iter()
        .filter(|r| r.whitelist == WhitelistStatus::Enabled)
        .count();
    let direct_invocation_apps = reports
        .iter()
        .filter(|r| !r.direct_invocations.is_empty())
        .count();
    let mut consequence_app_counts = BTreeMap::new();
    let mut callable_api_counts = BTreeMap::new();
    for r in reports {
        for flag in &r.consequence_flags {
            *consequence_app_counts.entry(*flag).or_insert(0) += 1;
        }
        for (name, c) in &r.callability {
            if c.verdict == CallabilityVerdict::Callable {
                *callable_api_counts.entry(name.clone()).or_insert(0) += 1;
            }
        }
    }
    let denom = total_apps.max(1) as f64;
    Ok(CorpusSummary {
        schema_version: SCHEMA_VERSION,
        total_apps,
        unpacked: reports.len(),
        apps_with_findings,
        apps_with_hardcoded_pair,
        apps_with_valid_secret,
        apps_whitelist_enabled,
        direct_invocation_apps,
        hardcoded_rate: apps_with_hardcoded_pair as f64 / denom,
        valid_rate: apps_with_valid_secret as f64 / denom,
        consequence_app_counts,
        callable_api_counts,
    })
}

/// How one app changed between two collection epochs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Transition {
    WhitelistNewlyEnabled,
    UnchangedClean,
    SameSecretStillValid,
    RemovedButValid,
    RotatedRehardcoded,
    InvalidatedRemoved,
}

/// The per-epoch facts the diff operates on. When the new snapshot no
/// longer contains a hardcoded secret, its `secret_validity` refers to the
/// re-validation of the secret found in the *old* snapshot.
#[derive(Debug, Clone, Copy)]
struct EpochFacts<'a> {
    found: bool,
    digest: Option<&'a str>,
    validity: SecretValidity,
    whitelist: WhitelistStatus,
}

impl<'a> From<&'a AppReport> for EpochFacts<'a> {
    fn from(r: &'a AppReport) -> Self {
        EpochFacts {
            found: r.found_hardcoded,
            digest: r.secret_digest.as_deref(),
            validity: r.secret_validity,
            whitelist: r.whitelist,
        }
    }
}

fn classify(old: EpochFacts, new: EpochFacts) -> Transition {
    // First matching row wins; the rows are ordered by precedence.
    if old.whitelist != WhitelistStatus::Enabled && new.whitelist == WhitelistStatus::Enabled {
        return Transition::WhitelistNewlyEnabled;
    }
    if !old.found && !new.found {
        return Transition::UnchangedClean;
    }
    let new_valid = new.validity == SecretValidity::Valid;
    if new.found && new_valid {
        if old.found && old.digest == new.digest {
            return Transition::SameSecretStillValid;
        }
        return Transition::RotatedRehardcoded;
    }
    if old.found && !new.found && new_valid {
        return Transition::RemovedButValid;
    }
    Transition::InvalidatedRemoved
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DiffReport {
    pub transitions: BTreeMap<String, Transition>,
    pub counts: BTreeMap<Transition, usize>,
    /// Package ids present in exactly one snapshot; these are reported but
    /// not classified.
    pub only_in_old: Vec<String>,
    pub only_in_new: Vec<String>,
}

pub fn diff_snapshots(old: &[AppReport], new: &[AppReport]) -> Result<DiffReport, ReportError> {
    let index = |reports: &[AppReport]| -> Result<BTreeMap<String, usize>, ReportError> {
        let mut m = BTreeMap::new();
        for (i, r) in reports.iter().enumerate() {
            if m.insert(r.package_id.clone(), i).is_some() {
                return Err(ReportError::DuplicateId(r.package_id.clone()));
            }
        }
        Ok(m)
    };
    let old_idx = index(old)?;
    let new_idx = index(new)?;

    let mut transitions = BTreeMap::new();
    let mut counts = BTreeMap::new();
    let mut only_in_old = Vec::new();
    let mut only_in_new = Vec::new();

    for (id, &oi) in &old_idx {
        match new_idx.get(id) {
            Some(&ni) => {
                let t = classify(EpochFacts::from(&old[oi]), EpochFacts::from(&new[ni]));
                *counts.entry(t).or_insert(0) += 1;
                transitions.insert(id.clone(), t);
            }
            None => only_in_old.push(id.clone()),
        }
    }
    for id in new_idx.keys() {
        if !old_idx.contains_key(id) {
            only_in_new.push(id.clone());
        }
    }
    Ok(DiffReport {
        transitions,
        counts,
        only_in_old,
        only_in_new,
    })
}
