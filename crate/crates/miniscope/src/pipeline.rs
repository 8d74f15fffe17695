//! End-to-end orchestration: unpack a package, scan it, optionally probe
//! the backend, resolve callability and emit an [`AppReport`]. The CLI and
//! the corpus-scale tests both drive this module.

use std::collections::BTreeSet;
use std::path::Path;

use rayon::prelude::*;
use thiserror::Error;

use crate::catalog::{ApiCatalog, ExtractorTag};
use crate::container::{self, ContainerError};
use crate::prober::transport::Transport;
use crate::prober::{
    acquire_token, check_whitelist, probe_get_apis, resolve_callability, Observations,
    ProbePolicy, ResolutionFacts, TokenOutcome, WhitelistVerdict,
};
use crate::report::{
    secret_digest, summarize, AppReport, CorpusSummary, ReportError, SecretValidity,
    WhitelistStatus, SCHEMA_VERSION,
};
use crate::scanner::{scan_package, CompiledRuleset, ScanFinding};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("package {package_id}: {source}")]
    Container {
        package_id: String,
        source: ContainerError,
    },
    #[error(transparent)]
    Report(#[from] ReportError),
    #[error("io error at {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

/// Probing configuration for a scan run. Absent means `--no-probe`:
/// findings stay unvalidated and the transport is never touched.
pub struct ProbeContext<'a> {
    pub transport: &'a dyn Transport,
    pub policy: ProbePolicy,
}

fn code_tags(finding: &ScanFinding) -> BTreeSet<ExtractorTag> {
    let mut tags = BTreeSet::new();
    if !finding.cloud_env_ids.is_empty() {
        tags.insert(ExtractorTag::CloudEnvId);
    }
    if !finding.cloud_function_names.is_empty() {
        tags.insert(ExtractorTag::CloudFunctionName);
    }
    if !finding.code_openids.is_empty() {
        tags.insert(ExtractorTag::OpenidInCode);
    }
    tags
}

/// Distinct (app_id, secret) value pairs in finding order.
fn distinct_pairs(finding: &ScanFinding) -> Vec<(String, String)> {
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for pair in &finding.pairs {
        let key = (pair.app_id.value.clone(), pair.app_secret.value.clone());
        if seen.insert(key.clone()) {
            out.push(key);
        }
    }
    out
}

struct ProbeResult {
    validity: SecretValidity,
    whitelist: WhitelistStatus,
    token: Option<String>,
    token_outcome: Option<TokenOutcome>,
    whitelist_probe: Option<WhitelistVerdict>,
    validated_secret: Option<String>,
    observations: Observations,
}

fn probe_app(
    ctx: &ProbeContext,
    catalog: &ApiCatalog,
    finding: &ScanFinding,
    app_id: Option<&str>,
) -> ProbeResult {
    let mut result = ProbeResult {
        validity: SecretValidity::Unvalidated,
        whitelist: WhitelistStatus::Indeterminate,
        token: None,
        token_outcome: None,
        whitelist_probe: None,
        validated_secret: None,
        observations: Observations::new(),
    };

    let pairs = distinct_pairs(finding);
    let mut saw_not_whitelisted = false;
    let mut saw_invalid = false;
    for (pair_app_id, secret) in &pairs {
        let outcome = acquire_token(ctx.transport, catalog, pair_app_id, secret);
        match &outcome {
            TokenOutcome::TokenIssued { access_token, .. } => {
                result.token = Some(access_token.clone());
                result.validity = SecretValidity::Valid;
                result.validated_secret = Some(secret.clone());
                // A token reached us, so no whitelist stands in the way.
                result.whitelist = WhitelistStatus::Disabled;
                result.token_outcome = Some(outcome);
                break;
            }
            TokenOutcome::IpNotWhitelisted => saw_not_whitelisted = true,
            TokenOutcome::InvalidCredential => saw_invalid = true,
            _ => {}
        }
        result.token_outcome = Some(outcome);
    }

    if result.token.is_none() {
        if saw_not_whitelisted {
            // The whitelist check fires before the credential check, so
            // the secret itself was never evaluated.
            result.whitelist = WhitelistStatus::Enabled;
            result.validity = SecretValidity::Unvalidated;
        } else if saw_invalid {
            result.whitelist = WhitelistStatus::Disabled;
            result.validity = SecretValidity::Invalid;
        } else if let Some(app_id) = app_id {
            // No conclusive token outcome (transport trouble, or no pair
            // at all): fall back to the dummy-secret whitelist probe.
            let verdict = check_whitelist(ctx.transport, catalog, &ctx.policy, app_id);
            result.whitelist_probe = Some(verdict);
            result.whitelist = match verdict {
                WhitelistVerdict::WhitelistedElsewhere => WhitelistStatus::Enabled,
                WhitelistVerdict::NotWhitelisted => WhitelistStatus::Disabled,
                WhitelistVerdict::Indeterminate => WhitelistStatus::Indeterminate,
            };
        }
    }

    if let Some(token) = &result.token {
        result.observations =
            probe_get_apis(ctx.transport, catalog, &ctx.policy, token, finding);
    }
    result
}

/// Analyzes one package end to end.
pub fn analyze_package(
    package_id: &str,
    bytes: &[u8],
    rules: &CompiledRuleset,
    catalog: &ApiCatalog,
    probe: Option<&ProbeContext>,
) -> Result<AppReport, PipelineError> {
    let package = container::unpack(bytes).map_err(|source| PipelineError::Container {
        package_id: package_id.to_string(),
        source,
    })?;
    let finding = scan_package(&package, package_id, rules, catalog);

    let app_id: Option<String> = finding
        .pairs
        .first()
        .map(|p| p.app_id.value.clone())
        .or_else(|| package.app_hint.clone());

    let mut report = AppReport::clean(package_id, app_id.clone());
    report.schema_version = SCHEMA_VERSION;
    report.candidate_count = finding.candidates.len();
    report.found_hardcoded = !finding.pairs.is_empty();
    report.secret_digest = finding
        .pairs
        .first()
        .map(|p| secret_digest(&p.app_secret.value));
    report.direct_invocations = {
        let mut names: Vec<String> = finding
            .direct_invocations
            .iter()
            .map(|d| d.api_name.clone())
            .collect();
        names.sort();
        names.dedup();
        names
    };
    report.scanned_at = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);

    let mut facts = ResolutionFacts {
        app_id_known: app_id.is_some(),
        credentials_valid: false,
        token_available: false,
        code_tags: code_tags(&finding),
        observations: Observations::new(),
    };

    if let Some(ctx) = probe {
        if report.found_hardcoded || app_id.is_some() {
            let probed = probe_app(ctx, catalog, &finding, app_id.as_deref());
            // Report the digest of the secret that actually validated,
            // falling back to the first pair.
            if let Some(secret) = &probed.validated_secret {
                report.secret_digest = Some(secret_digest(secret));
            }
            report.secret_validity = probed.validity;
            report.whitelist = probed.whitelist;
            report.token_outcome = probed.token_outcome;
            report.whitelist_probe = probed.whitelist_probe;
            facts.credentials_valid = probed.validity == SecretValidity::Valid;
            facts.token_available = probed.token.is_some();
            facts.observations = probed.observations;
        }
    }

    report.callability = resolve_callability(catalog, &facts);
    report.recompute_rollups(catalog);
    Ok(report)
}

pub struct ScanOutcome {
    pub reports: Vec<AppReport>,
    pub summary: CorpusSummary,
    /// Packages that failed to unpack: (package_id, error description).
    pub skipped: Vec<(String, String)>,
}

/// Scans a whole corpus, optionally probing. Reports come back sorted by
/// package id regardless of worker count.
pub fn run_scan(
    inputs: &[(String, Vec<u8>)],
    rules: &CompiledRuleset,
    catalog: &ApiCatalog,
    probe: Option<&ProbeContext>,
    workers: usize,
) -> Result<ScanOutcome, PipelineError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .expect("worker pool construction");

    let results: Vec<(String, Result<AppReport, PipelineError>)> = pool.install(|| {
        inputs
            .par_iter()
            .map(|(id, bytes)| {
                (
                    id.clone(),
                    analyze_package(id, bytes, rules, catalog, probe),
                )
            })
            .collect()
    });

    let mut reports = Vec::new();
    let mut skipped = Vec::new();
    for (id, result) in results {
        match result {
            Ok(report) => reports.push(report),
            Err(PipelineError::Container { source, .. }) => skipped.push((id, source.to_string())),
            Err(other) => return Err(other),
        }
    }
    reports.sort_by(|a, b| a.package_id.cmp(&b.package_id));
    skipped.sort();
    let summary = summarize(&reports, inputs.len())?;
    Ok(ScanOutcome {
        reports,
        summary,
        skipped,
    })
}

/// Loads every `*.mapk` file under `dir` (non-recursive), sorted by name.
pub fn load_package_dir(dir: &Path) -> Result<Vec<(String, Vec<u8>)>, PipelineError> {
    let io_err = |path: &Path, source: std::io::Error| PipelineError::Io {
        path: path.display().to_string(),
        source,
    };
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(|e| io_err(dir, e))? {
        let entry = entry.map_err(|e| io_err(dir, e))?;
        let path = entry.path();
        if path.extension().and_then(|e| e.to_str()) != Some("mapk") {
            continue;
        }
        let id = path
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or("package")
            .to_string();
        let bytes = std::fs::read(&path).map_err(|e| io_err(&path, e))?;
        out.push((id, bytes));
    }
    out.sort_by(|a, b| a.0.cmp(&b.0));
    Ok(out)
}
