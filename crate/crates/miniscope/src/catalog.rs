//! Declarative model of super-app server-side APIs: Get/Modify kind,
//! required parameters with provenance, consequence flags and severity.

use std::collections::{BTreeMap, BTreeSet, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CatalogError {
    #[error("catalog schema error: {0}")]
    SchemaError(String),
    #[error("api {api:?} references unknown or non-Get api {referenced:?}")]
    UnknownReference { api: String, referenced: String },
    #[error("cyclic FROM_GET_RESPONSE dependency involving {0:?}")]
    CyclicDependency(String),
    #[error("modify api {0:?} must not allow probing")]
    ModifyProbeAllowed(String),
    #[error("token endpoint must require exactly app ID and app secret")]
    BadTokenEndpoint,
    #[error("unknown api {0:?}")]
    UnknownApi(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ApiKind {
    Get,
    Modify,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum HttpMethod {
    #[serde(rename = "GET")]
    Get,
    #[serde(rename = "POST")]
    Post,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ImpactFlag {
    A,
    B,
    C,
    D,
    E,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Severity {
    Low,
    Medium,
    High,
}

/// Tags for values the scanner can lift out of mini-app source code.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExtractorTag {
    CloudEnvId,
    CloudFunctionName,
    OpenidInCode,
}

/// One way of sourcing a parameter value from a Get API response.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GetSource {
    pub api: String,
    pub json_path: String,
}

/// Where a required parameter's value comes from. `FromGetResponse` lists
/// alternative sources; any one observed value satisfies the parameter.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Provenance {
    AccessToken,
    AppId,
    AppSecret,
    FromGetResponse { sources: Vec<GetSource> },
    CodeExtracted { tag: ExtractorTag },
    AttackerControlled,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamRequirement {
    pub name: String,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApiSpec {
    pub name: String,
    pub category: String,
    pub endpoint_path: String,
    pub http_method: HttpMethod,
    pub kind: ApiKind,
    pub params: Vec<ParamRequirement>,
    pub impact_flags: BTreeSet<ImpactFlag>,
    pub severity: Severity,
    pub probe_allowed: bool,
}

impl ApiSpec {
    /// Get APIs named as a source by some FROM_GET_RESPONSE parameter.
    pub fn get_dependencies(&self) -> impl Iterator<Item = &GetSource> {
        self.params.iter().flat_map(|p| match &p.provenance {
            Provenance::FromGetResponse { sources } => sources.as_slice(),
            _ => &[],
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApiCatalog {
    pub platform: String,
    pub token_endpoint: ApiSpec,
    #[serde(with = "api_list")]
    pub apis: BTreeMap<String, ApiSpec>,
}

/// The catalog file carries `apis` as a list; in memory it is a name-keyed map.
mod api_list {
    use super::ApiSpec;
    use serde::de::Error;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};
    use std::collections::BTreeMap;

    pub fn serialize<S: Serializer>(
        apis: &BTreeMap<String, ApiSpec>,
        s: S,
    ) -> Result<S::Ok, S::Error> {
        apis.values().collect::<Vec<_>>().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(
        d: D,
    ) -> Result<BTreeMap<String, ApiSpec>, D::Error> {
        let list = Vec::<ApiSpec>::deserialize(d)?;
        let mut map = BTreeMap::new();
        for api in list {
            if map.insert(api.name.clone(), api).is_some() {
                return Err(D::Error::custom("duplicate api name"));
            }
        }
        Ok(map)
    }
}

impl ApiCatalog {
    pub fn api(&self, name: &str) -> Option<&ApiSpec> {
        if name == self.token_endpoint.name {
            Some(&self.token_endpoint)
        } else {
            self.apis.get(name)
        }
    }

    /// All json_paths that some parameter consumes from `get_api`'s response.
    pub fn consumed_paths(&self, get_api: &str) -> BTreeSet<String> {
        self.apis
            .values()
            .flat_map(|a| a.get_dependencies())
            .filter(|s| s.api == get_api)
            .map(|s| s.json_path.clone())
            .collect()
    }

    /// Get APIs whose responses feed some FROM_GET_RESPONSE parameter.
    pub fn fed_get_apis(&self) -> BTreeSet<String> {
        self.apis
            .values()
            .flat_map(|a| a.get_dependencies())
            .map(|s| s.api.clone())
            .collect()
    }

    pub fn validate(&self) -> Result<(), CatalogError> {
        let te = &self.token_endpoint;
        let mut wants: Vec<&Provenance> = te.params.iter().map(|p| &p.provenance).collect();
        wants.sort_by_key(|p| format!("{p:?}"));
        let token_shape_ok = te.params.len() == 2
            && te
                .params
                .iter()
                .any(|p| p.provenance == Provenance::AppId)
            && te
                .params
                .iter()
                .any(|p| p.provenance == Provenance::AppSecret);
        if !token_shape_ok {
            return Err(CatalogError::BadTokenEndpoint);
        }
        if self.apis.contains_key(&te.name) {
            return Err(CatalogError::SchemaError(
                "token endpoint repeated in api list".into(),
            ));
        }

        for api in self.apis.values() {
            if api.kind == ApiKind::Modify && api.probe_allowed {
                return Err(CatalogError::ModifyProbeAllowed(api.name.clone()));
            }
            for src in api.get_dependencies() {
                match self.apis.get(&src.api) {
                    Some(dep) if dep.kind == ApiKind::Get => {}
                    _ => {
                        return Err(CatalogError::UnknownReference {
                            api: api.name.clone(),
                            referenced: src.api.clone(),
                        })
                    }
                }
            }
        }

        // Depth-first cycle check over FROM_GET_RESPONSE edges.
        for start in self.apis.keys() {
            let mut path = HashSet::new();
            self.cycle_check(start, &mut path)?;
        }
        Ok(())
    }

    fn cycle_check<'a>(
        &'a self,
        name: &'a str,
        path: &mut HashSet<&'a str>,
    ) -> Result<(), CatalogError> {
        if !path.insert(name) {
            return Err(CatalogError::CyclicDependency(name.to_string()));
        }
        if let Some(api) = self.apis.get(name) {
            for src in api.get_dependencies() {
                self.cycle_check(&src.api, path)?;
            }
        }
        path.remove(name);
        Ok(())
    }

    /// Topologically ordered Get APIs whose responses feed `api_name`'s
    /// parameters, transitively. Alternative sources are all listed.
    pub fn dependency_closure(&self, api_name: &str) -> Result<Vec<String>, CatalogError> {
        let api = self
            .api(api_name)
            .ok_or_else(|| CatalogError::UnknownApi(api_name.to_string()))?;
        let mut ordered = Vec::new();
        let mut seen = HashSet::new();
        for src in api.get_dependencies() {
            self.closure_visit(&src.api, &mut seen, &mut ordered);
        }
        Ok(ordered)
    }

    fn closure_visit(&self, name: &str, seen: &mut HashSet<String>, out: &mut Vec<String>) {
        if !seen.insert(name.to_string()) {
            return;
        }
        if let Some(api) = self.apis.get(name) {
            for src in api.get_dependencies() {
                self.closure_visit(&src.api, seen, out);
            }
        }
        out.push(name.to_string());
    }
}

/// Parses and validates a catalog document.
pub fn load_catalog(document: &[u8]) -> Result<ApiCatalog, CatalogError> {
    let catalog: ApiCatalog = serde_json::from_slice(document)
        .map_err(|e| CatalogError::SchemaError(e.to_string()))?;
    catalog.validate()?;
    Ok(catalog)
}

pub const WECHAT_CATALOG_JSON: &str = include_str!("../catalog/wechat.json");
pub const BAIDU_CATALOG_JSON: &str = include_str!("../catalog/baidu.json");

/// The shipped WeChat-like catalog.
pub fn wechat_catalog() -> ApiCatalog {
    load_catalog(WECHAT_CATALOG_JSON.as_bytes()).expect("shipped wechat catalog is valid")
}

/// The shipped Baidu-like catalog.
pub fn baidu_catalog() -> ApiCatalog {
    load_catalog(BAIDU_CATALOG_JSON.as_bytes()).expect("shipped baidu catalog is valid")
}
