//! Thin command-line front end over the library: scan packages, diff report
//! snapshots, serve the mock backend, generate corpora, validate catalogs.

use std::collections::BTreeSet;
use std::io::Write;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use miniscope::catalog::{self, ApiCatalog};
use miniscope::corpusgen::{self, CorpusSpec};
use miniscope::mock::{self, MockScenario};
use miniscope::pipeline::{self, ProbeContext};
use miniscope::prober::transport::HttpTransport;
use miniscope::prober::ProbePolicy;
use miniscope::report::{self, AppReport};
use miniscope::scanner::DetectionRuleset;

#[derive(Parser)]
#[command(name = "miniscope", version, about = "Mini-app package scanner and exploitability analyzer")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Scan mini-app packages for hardcoded credentials and report.
    Scan(ScanArgs),
    /// Classify per-app transitions between two report snapshots.
    Diff(DiffArgs),
    /// Run the deterministic mock backend.
    ServeMock(ServeMockArgs),
    /// Generate a synthetic corpus with a ground-truth manifest.
    Gen(GenArgs),
    /// Validate an API catalog file and print its shape.
    CatalogCheck(CatalogCheckArgs),
}

#[derive(Args)]
struct ScanArgs {
    /// Package files (*.mapk) or directories containing them.
    #[arg(required = true)]
    inputs: Vec<PathBuf>,
    /// Catalog: "wechat", "baidu", or a path to a catalog JSON file.
    #[arg(long, default_value = "wechat")]
    catalog: String,
    /// Ruleset: "wechat", "baidu", or a path to a ruleset JSON file.
    #[arg(long, default_value = "wechat")]
    rules: String,
    /// Base URL of the endpoint to probe. Probing is off without it.
    #[arg(long)]
    endpoint: Option<String>,
    /// Never probe, even when an endpoint is configured.
    #[arg(long)]
    no_probe: bool,
    /// Acknowledge authority over the probed apps; required for any
    /// endpoint that is not loopback.
    #[arg(long)]
    i_own_these_apps: bool,
    /// Get APIs (by catalog name) that may be probed after token issuance.
    #[arg(long = "allow-get")]
    allow_get: Vec<String>,
    #[arg(long, default_value_t = 4)]
    workers: usize,
    /// Output directory for report.jsonl and summary.json.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Exit with code 2 when any hardcoded pair is found.
    #[arg(long)]
    fail_on_findings: bool,
}

#[derive(Args)]
struct DiffArgs {
    old: PathBuf,
    new: PathBuf,
    /// Where to write diff.json (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ServeMockArgs {
    /// MockScenario JSON file.
    scenario: PathBuf,
    #[arg(long, default_value = "127.0.0.1:3923")]
    bind: SocketAddr,
    #[arg(long, default_value = "wechat")]
    catalog: String,
}

#[derive(Args)]
struct GenArgs {
    /// CorpusSpec JSON file; built-in defaults when omitted.
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Override the spec's rng seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the spec's app count.
    #[arg(long)]
    count: Option<usize>,
}

#[derive(Args)]
struct CatalogCheckArgs {
    /// Catalog: "wechat", "baidu", or a path to a catalog JSON file.
    catalog: String,
}

fn fail(message: impl std::fmt::Display) -> ExitCode {
    // One machine-readable line on stderr for scripted callers.
    let line = serde_json::json!({"error": message.to_string()});
    eprintln!("{line}");
    ExitCode::from(1)
}

fn load_catalog_arg(arg: &str) -> Result<ApiCatalog, String> {
    match arg {
        "wechat" => Ok(catalog::wechat_catalog()),
        "baidu" => Ok(catalog::baidu_catalog()),
        path => {
            let bytes = std::fs::read(path).map_err(|e| format!("cannot read {path}: {e}"))?;
            catalog::load_catalog(&bytes).map_err(|e| format!("invalid catalog {path}: {e}"))
        }
    }
}

fn load_rules_arg(arg: &str) -> Result<DetectionRuleset, String> {
    match arg {
        "wechat" => Ok(DetectionRuleset::wechat()),
        "baidu" => Ok(DetectionRuleset::baidu()),
        path => {
            let bytes = std::fs::read(path).map_err(|e| format!("cannot read {path}: {e}"))?;
            DetectionRuleset::from_json(&bytes).map_err(|e| format!("invalid ruleset {path}: {e}"))
        }
    }
}

fn is_loopback_endpoint(url: &str) -> bool {
    let rest = url
        .trim_start_matches("http://")
        .trim_start_matches("https://");
    let host = rest.split(['/', ':']).next().unwrap_or("");
    matches!(host, "localhost" | "127.0.0.1" | "[::1]" | "::1")
}

fn collect_inputs(paths: &[PathBuf]) -> Result<Vec<(String, Vec<u8>)>, String> {
    let mut out = Vec::new();
    for path in paths {
        if path.is_dir() {
            let mut loaded =
                pipeline::load_package_dir(path).map_err(|e| e.to_string())?;
            out.append(&mut loaded);
        } else {
            let id = path
                .file_stem()
                .and_then(|s| s.to_str())
                .unwrap_or("package")
                .to_string();
            let bytes =
                std::fs::read(path).map_err(|e| format!("cannot read {}: {e}", path.display()))?;
            out.push((id, bytes));
        }
    }
    out.sort_by(|a, b| a.0.cmp(&b.0));
    Ok(out)
}

fn cmd_scan(args: ScanArgs) -> Result<ExitCode, String> {
    let catalog = load_catalog_arg(&args.catalog)?;
    let rules = load_rules_arg(&args.rules)?
        .compile()
        .map_err(|e| format!("ruleset does not compile: {e}"))?;
    if args.workers == 0 {
        return Err("--workers must be at least 1".into());
    }

    let endpoint = args
        .endpoint
        .clone()
        .or_else(|| std::env::var("MINISCOPE_ENDPOINT").ok())
        .filter(|_| !args.no_probe);
    if let Some(url) = &endpoint {
        if !is_loopback_endpoint(url) && !args.i_own_these_apps {
            return Err(format!(
                "endpoint {url} is not loopback; pass --i-own-these-apps to confirm you are authorized to probe it"
            ));
        }
    }

    let inputs = collect_inputs(&args.inputs)?;

    let transport = match &endpoint {
        Some(url) => Some(HttpTransport::new(url).map_err(|e| e.to_string())?),
        None => None,
    };
    let ctx = transport.as_ref().map(|t| {
        let policy = ProbePolicy {
            allow_get_probing: !args.allow_get.is_empty(),
            get_allowlist: args.allow_get.iter().cloned().collect::<BTreeSet<_>>(),
            ..Default::default()
        };
        ProbeContext {
            transport: t,
            policy,
        }
    });
    if let Some(ctx) = &ctx {
        ctx.policy
            .validate(&catalog)
            .map_err(|e| format!("probe policy rejected: {e}"))?;
    }

    let outcome = pipeline::run_scan(&inputs, &rules, &catalog, ctx.as_ref(), args.workers)
        .map_err(|e| e.to_string())?;

    std::fs::create_dir_all(&args.out)
        .map_err(|e| format!("cannot create {}: {e}", args.out.display()))?;
    let report_path = args.out.join("report.jsonl");
    let mut report_file = std::fs::File::create(&report_path)
        .map_err(|e| format!("cannot write {}: {e}", report_path.display()))?;
    for report in &outcome.reports {
        let line = serde_json::to_string(report).map_err(|e| e.to_string())?;
        writeln!(report_file, "{line}").map_err(|e| e.to_string())?;
    }
    let summary_path = args.out.join("summary.json");
    std::fs::write(
        &summary_path,
        serde_json::to_vec_pretty(&outcome.summary).map_err(|e| e.to_string())?,
    )
    .map_err(|e| format!("cannot write {}: {e}", summary_path.display()))?;

    for (id, reason) in &outcome.skipped {
        eprintln!("{}", serde_json::json!({"skipped": id, "reason": reason}));
    }
    println!(
        "scanned {} packages ({} skipped): {} with hardcoded pairs, {} valid",
        outcome.summary.unpacked,
        outcome.skipped.len(),
        outcome.summary.apps_with_hardcoded_pair,
        outcome.summary.apps_with_valid_secret
    );

    if args.fail_on_findings && outcome.summary.apps_with_hardcoded_pair > 0 {
        return Ok(ExitCode::from(2));
    }
    Ok(ExitCode::SUCCESS)
}

fn read_jsonl(path: &Path) -> Result<Vec<AppReport>, String> {
    let text =
        std::fs::read_to_string(path).map_err(|e| format!("cannot read {}: {e}", path.display()))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(|e| format!("bad report line: {e}")))
        .collect()
}

fn cmd_diff(args: DiffArgs) -> Result<ExitCode, String> {
    let old = read_jsonl(&args.old)?;
    let new = read_jsonl(&args.new)?;
    let diff = report::diff_snapshots(&old, &new).map_err(|e| e.to_string())?;
    let body = serde_json::to_string_pretty(&diff).map_err(|e| e.to_string())?;
    match &args.out {
        Some(path) => std::fs::write(path, body)
            .map_err(|e| format!("cannot write {}: {e}", path.display()))?,
        None => println!("{body}"),
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_serve_mock(args: ServeMockArgs) -> Result<ExitCode, String> {
    let catalog = load_catalog_arg(&args.catalog)?;
    let bytes = std::fs::read(&args.scenario)
        .map_err(|e| format!("cannot read {}: {e}", args.scenario.display()))?;
    let scenario = MockScenario::from_json(&bytes).map_err(|e| e.to_string())?;
    let handle = mock::serve(scenario, catalog, args.bind).map_err(|e| e.to_string())?;
    println!("mock backend listening on http://{}", handle.addr);
    loop {
        std::thread::park();
    }
}

fn cmd_gen(args: GenArgs) -> Result<ExitCode, String> {
    let mut spec = match &args.spec {
        Some(path) => {
            let bytes = std::fs::read(path)
                .map_err(|e| format!("cannot read {}: {e}", path.display()))?;
            serde_json::from_slice::<CorpusSpec>(&bytes)
                .map_err(|e| format!("invalid corpus spec: {e}"))?
        }
        None => CorpusSpec::default(),
    };
    if let Some(seed) = args.seed {
        spec.rng_seed = seed;
    }
    if let Some(count) = args.count {
        spec.app_count = count;
    }
    let corpus = corpusgen::generate_corpus(&spec).map_err(|e| e.to_string())?;
    corpusgen::write_corpus(&corpus, &args.out).map_err(|e| e.to_string())?;
    println!(
        "wrote {} packages to {} ({} planted, {} expected valid tokens)",
        corpus.packages.len(),
        args.out.display(),
        corpus.manifest.hardcoded_secrets,
        corpus.manifest.valid_tokens
    );
    Ok(ExitCode::SUCCESS)
}

fn cmd_catalog_check(args: CatalogCheckArgs) -> Result<ExitCode, String> {
    let catalog = load_catalog_arg(&args.catalog)?;
    catalog.validate().map_err(|e| e.to_string())?;
    let gets = catalog
        .apis
        .values()
        .filter(|a| a.kind == miniscope::catalog::ApiKind::Get)
        .count();
    println!(
        "{}: {} apis ({} get / {} modify), token endpoint {}",
        catalog.platform,
        catalog.apis.len(),
        gets,
        catalog.apis.len() - gets,
        catalog.token_endpoint.endpoint_path
    );
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Scan(args) => cmd_scan(args),
        Command::Diff(args) => cmd_diff(args),
        Command::ServeMock(args) => cmd_serve_mock(args),
        Command::Gen(args) => cmd_gen(args),
        Command::CatalogCheck(args) => cmd_catalog_check(args),
    };
    match result {
        Ok(code) => code,
        Err(message) => fail(message),
    }
}
