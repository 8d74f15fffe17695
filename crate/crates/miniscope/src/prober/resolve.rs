//! Callability resolution: given what we know about an app's credentials,
//! extracted code artifacts and probed Get responses, decide for each API
//! whether an attacker holding the leaked credentials could call it.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::catalog::{ApiCatalog, ApiSpec, ExtractorTag, Provenance};

/// What the probing phase established. `observations` maps a Get API name
/// to the values extracted per JSON path from its response; an API being
/// present with an empty value list still counts as probed.
#[derive(Debug, Clone, Default)]
pub struct ResolutionFacts {
    pub app_id_known: bool,
    pub credentials_valid: bool,
    pub token_available: bool,
    pub code_tags: BTreeSet<ExtractorTag>,
    pub observations: BTreeMap<String, BTreeMap<String, Vec<String>>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamState {
    Resolved,
    Unknown,
    Unresolved,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum CallabilityVerdict {
    Callable,
    Unknown,
    NotCallable,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CallabilityReport {
    pub api: String,
    pub verdict: CallabilityVerdict,
    pub params: Vec<(String, ParamState)>,
}

fn source_state(facts: &ResolutionFacts, api: &str, json_path: &str) -> ParamState {
    match facts.observations.get(api) {
        Some(paths) => match paths.get(json_path) {
            Some(values) if !values.is_empty() => ParamState::Resolved,
            _ => ParamState::Unresolved,
        },
        // The feeding Get API was never probed, so the value may or may
        // not be obtainable.
        None => ParamState::Unknown,
    }
}

pub fn param_state(facts: &ResolutionFacts, provenance: &Provenance) -> ParamState {
    match provenance {
        Provenance::AttackerControlled => ParamState::Resolved,
        Provenance::AppId => {
            if facts.app_id_known {
                ParamState::Resolved
            } else {
                ParamState::Unresolved
            }
        }
        Provenance::AppSecret => {
            if facts.credentials_valid {
                ParamState::Resolved
            } else {
                ParamState::Unresolved
            }
        }
        Provenance::AccessToken => {
            if facts.token_available {
                ParamState::Resolved
            } else {
                ParamState::Unresolved
            }
        }
        Provenance::CodeExtracted { tag } => {
            if facts.code_tags.contains(tag) {
                ParamState::Resolved
            } else {
                ParamState::Unresolved
            }
        }
        // Alternatives: the best state over all sources wins.
        Provenance::FromGetResponse { sources } => sources
            .iter()
            .map(|s| source_state(facts, &s.api, &s.json_path))
            .min_by_key(|s| match s {
                ParamState::Resolved => 0,
                ParamState::Unknown => 1,
                ParamState::Unresolved => 2,
            })
            .unwrap_or(ParamState::Unresolved),
    }
}

pub fn resolve_api(api: &ApiSpec, facts: &ResolutionFacts) -> CallabilityReport {
    let params: Vec<(String, ParamState)> = api
        .params
        .iter()
        .map(|p| (p.name.clone(), param_state(facts, &p.provenance)))
        .collect();
    let any_unresolved = params.iter().any(|(_, s)| *s == ParamState::Unresolved);
    let any_unknown = params.iter().any(|(_, s)| *s == ParamState::Unknown);
    let verdict = if any_unresolved {
        CallabilityVerdict::NotCallable
    } else if any_unknown {
        CallabilityVerdict::Unknown
    } else {
        CallabilityVerdict::Callable
    };
    CallabilityReport {
        api: api.name.clone(),
        verdict,
        params,
    }
}

/// Resolves every API in the catalog. The result depends only on `facts`,
/// so a single pass is already the fixpoint.
pub fn resolve_callability(
    catalog: &ApiCatalog,
    facts: &ResolutionFacts,
) -> BTreeMap<String, CallabilityReport> {
    catalog
        .apis
        .values()
        .map(|api| (api.name.clone(), resolve_api(api, facts)))
        .collect()
}
