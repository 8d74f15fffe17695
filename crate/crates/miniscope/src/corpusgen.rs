//! Seeded synthetic corpus generator. Emits mini-app packages with
//! credentials planted at known locations, a ground-truth manifest, and a
//! matching mock-server scenario, so pipeline statistics can be reproduced
//! exactly at desk scale.

use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::container;
use crate::mock::{AppScenario, MockScenario};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("fraction {name} = {value} is outside [0, 1]")]
    BadFraction { name: &'static str, value: f64 },
    #[error("app_count must be positive")]
    EmptyCorpus,
    #[error("range {name} is empty")]
    EmptyRange { name: &'static str },
    #[error("io error at {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CorpusSpec {
    pub app_count: usize,
    /// Fraction of apps that get a hardcoded credential pair.
    pub fraction_with_secret: f64,
    /// Of the planted apps, the fraction whose secret validates.
    pub fraction_valid_of_planted: f64,
    /// Of the planted apps, the fraction shielded by an IP whitelist.
    pub fraction_whitelisted: f64,
    /// Of the planted apps, the fraction that call the backend directly
    /// from mini-app code (credentials embedded in the request URL).
    pub fraction_direct_invocations: f64,
    /// Fraction of all apps with cloud-development artifacts in code.
    pub fraction_cloud: f64,
    pub files_per_app: (usize, usize),
    pub loc_per_file: (usize, usize),
    /// Write an `appid` field into app.json. Off by default so clean
    /// packages contain no credential-shaped strings at all.
    pub emit_app_hint: bool,
    /// Plant 32-character mixed-case strings that must NOT match the
    /// hex-only secret ruleset (false-positive stress).
    pub plant_off_charset_decoys: bool,
    pub rng_seed: u64,
}

impl Default for CorpusSpec {
    fn default() -> Self {
        CorpusSpec {
            app_count: 100,
            fraction_with_secret: 0.39,
            fraction_valid_of_planted: 0.846,
            fraction_whitelisted: 0.05,
            fraction_direct_invocations: 0.1,
            fraction_cloud: 0.2,
            files_per_app: (4, 7),
            loc_per_file: (30, 80),
            emit_app_hint: false,
            plant_off_charset_decoys: false,
            rng_seed: 42,
        }
    }
}

impl CorpusSpec {
    pub fn validate(&self) -> Result<(), CorpusError> {
        if self.app_count == 0 {
            return Err(CorpusError::EmptyCorpus);
        }
        for (name, value) in [
            ("fraction_with_secret", self.fraction_with_secret),
            ("fraction_valid_of_planted", self.fraction_valid_of_planted),
            ("fraction_whitelisted", self.fraction_whitelisted),
            (
                "fraction_direct_invocations",
                self.fraction_direct_invocations,
            ),
            ("fraction_cloud", self.fraction_cloud),
        ] {
            if !(0.0..=1.0).contains(&value) || value.is_nan() {
                return Err(CorpusError::BadFraction { name, value });
            }
        }
        if self.files_per_app.0 > self.files_per_app.1 || self.files_per_app.0 == 0 {
            return Err(CorpusError::EmptyRange {
                name: "files_per_app",
            });
        }
        if self.loc_per_file.0 > self.loc_per_file.1 || self.loc_per_file.0 == 0 {
            return Err(CorpusError::EmptyRange { name: "loc_per_file" });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedValue {
    pub value: String,
    pub file: String,
    /// Byte span of the value inside the file, end exclusive.
    pub span: (usize, usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedPair {
    pub app_id: PlantedValue,
    pub secret: PlantedValue,
    /// Whether this pair authenticates against the generated scenario.
    pub valid: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestApp {
    pub package_id: String,
    pub app_id: Option<String>,
    pub pairs: Vec<PlantedPair>,
    /// Some planted pair validates.
    pub valid: bool,
    pub whitelisted: bool,
    /// A token can actually be minted from an arbitrary IP: the secret is
    /// valid and no whitelist masks the credential check.
    pub expected_valid_token: bool,
    pub direct_invocation: bool,
    pub cloud_env_id: Option<String>,
    pub cloud_function_name: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthManifest {
    pub rng_seed: u64,
    pub apps: Vec<ManifestApp>,
    pub hardcoded_secrets: usize,
    pub valid_tokens: usize,
    pub whitelisted: usize,
    pub direct_invocations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedPackage {
    pub package_id: String,
    pub bytes: Vec<u8>,
}

#[derive(Debug, Clone)]
pub struct Corpus {
    pub packages: Vec<GeneratedPackage>,
    pub manifest: GroundTruthManifest,
    pub scenario: MockScenario,
}

const WHITELIST_IP: &str = "203.0.113.9";

fn hex_string(rng: &mut ChaCha8Rng, len: usize) -> String {
    const HEX: &[u8] = b"0123456789abcdef";
    (0..len).map(|_| HEX[rng.gen_range(0..16)] as char).collect()
}

fn app_id_string(rng: &mut ChaCha8Rng) -> String {
    format!("wx{}", hex_string(rng, 16))
}

const VERBS: &[&str] = &[
    "render", "update", "merge", "format", "clamp", "notify", "toggle", "resolve",
];
const NOUNS: &[&str] = &[
    "view", "list", "badge", "panel", "cart", "order", "tab", "entry",
];

/// One line of inert filler code. Deliberately free of credential-shaped
/// strings: no long hex runs, no `wx` + hex prefixes, no digit runs of 8+.
fn filler_line(rng: &mut ChaCha8Rng, i: usize) -> String {
    let v = VERBS[rng.gen_range(0..VERBS.len())];
    let n = NOUNS[rng.gen_range(0..NOUNS.len())];
    let k: u32 = rng.gen_range(0..1000);
    match rng.gen_range(0..4) {
        0 => format!("function {v}_{n}_{i}(x) {{ return x.{n} + {k}; }}"),
        1 => format!("const {n}_{i} = {v}_state({k});"),
        2 => format!("let {v}{i} = require('./{n}');"),
        _ => format!("module.exports.{v}_{i} = (a, b) => a.{n} - b.{n} + {k};"),
    }
}

fn filler_block(rng: &mut ChaCha8Rng, lines: usize) -> String {
    let mut out = String::new();
    for i in 0..lines {
        out.push_str(&filler_line(rng, i));
        out.push('\n');
    }
    out
}

fn off_charset_decoy(rng: &mut ChaCha8Rng) -> String {
    // Mixed-case so it can never match a lowercase-hex secret pattern.
    const CHARS: &[u8] = b"ABCDEFGHJKLMNPQRSTUVWXYZabcdefghijkmnopqrstuvwxyz";
    (0..32)
        .map(|_| CHARS[rng.gen_range(0..CHARS.len())] as char)
        .collect()
}

fn span_of(content: &str, value: &str) -> (usize, usize) {
    let start = content
        .find(value)
        .expect("planted value must occur in its file");
    (start, start + value.len())
}

struct AppPlan {
    planted: bool,
    valid: bool,
    whitelisted: bool,
    direct: bool,
    cloud: bool,
    decoy_secret: bool,
}

fn plan_apps(spec: &CorpusSpec, rng: &mut ChaCha8Rng) -> Vec<AppPlan> {
    let n = spec.app_count;
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let n_planted = (spec.fraction_with_secret * n as f64 + 1e-9).floor() as usize;
    let planted: Vec<usize> = order[..n_planted].to_vec();

    let pick = |rng: &mut ChaCha8Rng, pool: &[usize], fraction: f64| -> Vec<usize> {
        let mut p = pool.to_vec();
        p.shuffle(rng);
        let count = (fraction * pool.len() as f64 + 1e-9).floor() as usize;
        p.truncate(count);
        p
    };
    let valid = pick(rng, &planted, spec.fraction_valid_of_planted);
    let whitelisted = pick(rng, &planted, spec.fraction_whitelisted);
    let direct = pick(rng, &planted, spec.fraction_direct_invocations);
    let all: Vec<usize> = (0..n).collect();
    let cloud = pick(rng, &all, spec.fraction_cloud);

    let contains = |v: &[usize], i: usize| v.contains(&i);
    (0..n)
        .map(|i| AppPlan {
            planted: contains(&planted, i),
            valid: contains(&valid, i),
            whitelisted: contains(&whitelisted, i),
            direct: contains(&direct, i),
            cloud: contains(&cloud, i),
            // Every ~10th planted app gets a second, invalid candidate.
            decoy_secret: planted.iter().position(|&p| p == i).map(|pos| pos % 10 == 0)
                == Some(true),
        })
        .collect()
}

/// Generates the whole corpus in memory. Deterministic in `spec`.
pub fn generate_corpus(spec: &CorpusSpec) -> Result<Corpus, CorpusError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.rng_seed);
    let plans = plan_apps(spec, &mut rng);

    let mut packages = Vec::with_capacity(spec.app_count);
    let mut manifest_apps = Vec::with_capacity(spec.app_count);
    let mut scenario = MockScenario::new();

    let width = spec.app_count.to_string().len().max(4);
    for (i, plan) in plans.iter().enumerate() {
        let package_id = format!("app-{i:0width$}");
        let mut files: BTreeMap<String, Vec<u8>> = BTreeMap::new();
        let mut entry = ManifestApp {
            package_id: package_id.clone(),
            app_id: None,
            pairs: Vec::new(),
            valid: plan.planted && plan.valid,
            whitelisted: plan.planted && plan.whitelisted,
            expected_valid_token: plan.planted && plan.valid && !plan.whitelisted,
            direct_invocation: plan.planted && plan.direct,
            cloud_env_id: None,
            cloud_function_name: None,
        };

        let app_id = app_id_string(&mut rng);
        let secret = hex_string(&mut rng, 32);
        // Consume the rotated secret unconditionally so the rng stream
        // does not depend on the validity plan.
        let rotated = hex_string(&mut rng, 32);

        // app.json is always present; the appid hint is opt-in.
        let app_json = if spec.emit_app_hint && plan.planted {
            format!("{{\n  \"appid\": \"{app_id}\",\n  \"pages\": [\"pages/index\"]\n}}\n")
        } else {
            "{\n  \"pages\": [\"pages/index\"]\n}\n".to_string()
        };
        files.insert("app.json".into(), app_json.into_bytes());

        let file_count = rng.gen_range(spec.files_per_app.0..=spec.files_per_app.1);
        for f in 0..file_count {
            let loc = rng.gen_range(spec.loc_per_file.0..=spec.loc_per_file.1);
            let mut body = filler_block(&mut rng, loc);
            if spec.plant_off_charset_decoys && f == 0 && rng.gen_bool(0.5) {
                body.push_str(&format!(
                    "const sessionSalt = \"{}\";\n",
                    off_charset_decoy(&mut rng)
                ));
            }
            files.insert(format!("pages/mod_{f}.js"), body.into_bytes());
        }

        if plan.planted {
            entry.app_id = Some(app_id.clone());
            let template = if plan.direct { 2 } else { rng.gen_range(0..2) };
            let (file_name, content) = match template {
                0 => (
                    "utils/config.js".to_string(),
                    format!(
                        "{}const appId = \"{app_id}\";\nconst appSecret = \"{secret}\";\n{}",
                        filler_block(&mut rng, 3),
                        filler_block(&mut rng, 3),
                    ),
                ),
                1 => (
                    "config/credentials.json".to_string(),
                    format!("{{\n  \"appid\": \"{app_id}\",\n  \"secret\": \"{secret}\"\n}}\n"),
                ),
                _ => (
                    "pages/login.js".to_string(),
                    format!(
                        "{}wx.request({{\n  url: 'https://api.weixin.qq.com/cgi-bin/token?grant_type=client_credential&appid={app_id}&secret={secret}',\n  success: res => handle(res)\n}});\n",
                        filler_block(&mut rng, 2),
                    ),
                ),
            };
            let pair = PlantedPair {
                app_id: PlantedValue {
                    value: app_id.clone(),
                    file: file_name.clone(),
                    span: span_of(&content, &app_id),
                },
                secret: PlantedValue {
                    value: secret.clone(),
                    file: file_name.clone(),
                    span: span_of(&content, &secret),
                },
                valid: plan.valid,
            };
            entry.pairs.push(pair);
            files.insert(file_name, content.into_bytes());

            if plan.decoy_secret {
                let decoy = hex_string(&mut rng, 32);
                let content = format!(
                    "{}const backupSecret = \"{decoy}\";\n",
                    filler_block(&mut rng, 2)
                );
                entry.pairs.push(PlantedPair {
                    app_id: PlantedValue {
                        value: app_id.clone(),
                        file: entry.pairs[0].app_id.file.clone(),
                        span: entry.pairs[0].app_id.span,
                    },
                    secret: PlantedValue {
                        value: decoy.clone(),
                        file: "utils/auth.js".to_string(),
                        span: span_of(&content, &decoy),
                    },
                    valid: false,
                });
                files.insert("utils/auth.js".into(), content.into_bytes());
            }

            // Every planted app exists on the backend; invalid ones hold a
            // rotated secret so the planted one is rejected.
            let mut app = AppScenario::with_secret(if plan.valid { &secret } else { &rotated });
            if plan.whitelisted {
                app.whitelist = vec![WHITELIST_IP.to_string()];
            }
            scenario.apps.insert(app_id.clone(), app);
        }

        if plan.cloud {
            let env = format!("prod-{}", hex_string(&mut rng, 6));
            let func = format!("{}Fn", VERBS[rng.gen_range(0..VERBS.len())]);
            let content = format!(
                "wx.cloud.init({{ env: '{env}' }});\nwx.cloud.callFunction({{ name: '{func}', data: {{}} }});\n"
            );
            files.insert("utils/cloud.js".into(), content.into_bytes());
            entry.cloud_env_id = Some(env);
            entry.cloud_function_name = Some(func);
        }

        let bytes = container::pack(&files).expect("generated file names are valid entry names");
        packages.push(GeneratedPackage {
            package_id,
            bytes,
        });
        manifest_apps.push(entry);
    }

    let manifest = GroundTruthManifest {
        rng_seed: spec.rng_seed,
        hardcoded_secrets: manifest_apps.iter().filter(|a| !a.pairs.is_empty()).count(),
        valid_tokens: manifest_apps
            .iter()
            .filter(|a| a.expected_valid_token)
            .count(),
        whitelisted: manifest_apps.iter().filter(|a| a.whitelisted).count(),
        direct_invocations: manifest_apps
            .iter()
            .filter(|a| a.direct_invocation)
            .count(),
        apps: manifest_apps,
    };
    Ok(Corpus {
        packages,
        manifest,
        scenario,
    })
}

/// Writes packages, `manifest.json` and `scenario.json` under `out_dir`.
pub fn write_corpus(corpus: &Corpus, out_dir: &Path) -> Result<(), CorpusError> {
    let io_err = |path: &Path, source: std::io::Error| CorpusError::Io {
        path: path.display().to_string(),
        source,
    };
    std::fs::create_dir_all(out_dir).map_err(|e| io_err(out_dir, e))?;
    for pkg in &corpus.packages {
        let path = out_dir.join(format!("{}.mapk", pkg.package_id));
        std::fs::write(&path, &pkg.bytes).map_err(|e| io_err(&path, e))?;
    }
    let manifest_path = out_dir.join("manifest.json");
    let manifest = serde_json::to_vec_pretty(&corpus.manifest).expect("manifest serializes");
    std::fs::write(&manifest_path, manifest).map_err(|e| io_err(&manifest_path, e))?;
    let scenario_path = out_dir.join("scenario.json");
    let scenario = serde_json::to_vec_pretty(&corpus.scenario).expect("scenario serializes");
    std::fs::write(&scenario_path, scenario).map_err(|e| io_err(&scenario_path, e))?;
    Ok(())
}
