use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use sdv_guard_core::gateway::{Gateway, GatewayMode};
use sdv_guard_core::pipeline::{
    build_chain, check_chain, deploy_stub, extract_signals, load_catalogs, load_manifest, run_eval_harness,
    run_safety_pipeline, run_topology_pipeline, verify_receipt, ConstraintSource, DeployTarget, ModelSource,
    PipelineConfig, Receipt, RunVerdict,
};

#[derive(Parser)]
#[command(name = "sdv-guard", version, about = "Safety and security checks for software-defined-vehicle artifacts")]
struct Cli {
    /// TOML configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory for artifacts and the run record.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct GatewayArgs {
    /// Answer model calls from this replay store.
    #[arg(long, conflicts_with = "record")]
    replay: Option<PathBuf>,
    /// Call the live endpoint and append every exchange to this store.
    #[arg(long)]
    record: Option<PathBuf>,
}

#[derive(Args)]
struct CatalogArgs {
    /// VSS catalog (JSON).
    #[arg(long)]
    vss: Option<PathBuf>,
    /// CAN message catalog (JSON).
    #[arg(long)]
    can: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Extract signals, build the event chain and check it against safety rules.
    AnalyzeSafety {
        #[arg(long)]
        code: PathBuf,
        #[command(flatten)]
        catalogs: CatalogArgs,
        #[arg(long)]
        rules: Option<PathBuf>,
        /// Ask the model for corrected code while rules are violated.
        #[arg(long)]
        auto_correct: bool,
        #[arg(long)]
        max_iterations: Option<usize>,
        #[command(flatten)]
        gateway: GatewayArgs,
    },
    /// Build or load a topology model and evaluate security constraints on it.
    AnalyzeTopology {
        /// Metamodel (JSON); the built-in automotive metamodel when omitted.
        #[arg(long)]
        metamodel: Option<PathBuf>,
        /// Instance model (JSON or PlantUML object diagram).
        #[arg(long, required_unless_present = "requirements")]
        model: Option<PathBuf>,
        /// Natural-language requirements to generate or update the model from.
        #[arg(long)]
        requirements: Option<PathBuf>,
        /// OCL constraints.
        #[arg(long, conflicts_with = "guidelines")]
        constraints: Option<PathBuf>,
        /// Security guidelines to generate constraints from.
        #[arg(long)]
        guidelines: Option<PathBuf>,
        #[arg(long)]
        auto_correct: bool,
        #[arg(long)]
        max_iterations: Option<usize>,
        #[command(flatten)]
        gateway: GatewayArgs,
    },
    /// Ground the signals and messages used by code in the catalogs.
    ExtractSignals {
        #[arg(long)]
        code: PathBuf,
        #[command(flatten)]
        catalogs: CatalogArgs,
        #[arg(long)]
        top_k: Option<usize>,
        #[arg(long)]
        token_budget: Option<usize>,
        #[command(flatten)]
        gateway: GatewayArgs,
    },
    /// Generate (or update) the event-chain diagram for code.
    BuildChain {
        #[arg(long)]
        code: PathBuf,
        /// Existing diagram to update.
        #[arg(long)]
        current: Option<PathBuf>,
        #[command(flatten)]
        catalogs: CatalogArgs,
        #[command(flatten)]
        gateway: GatewayArgs,
    },
    /// Check a stored event chain against a rule file.
    CheckChain {
        #[arg(long)]
        chain: PathBuf,
        #[arg(long)]
        rules: Option<PathBuf>,
        /// Print the JSON report instead of the summary.
        #[arg(long)]
        json: bool,
    },
    /// Run every scenario of a harness manifest several times.
    Eval {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, default_value_t = 10)]
        runs: usize,
        #[arg(long)]
        json: bool,
    },
    /// Copy an artifact to a directory or POST it to an endpoint.
    Deploy {
        #[arg(long, required_unless_present = "verify")]
        artifact: Option<PathBuf>,
        /// Directory path or http(s) URL.
        #[arg(long, required_unless_present = "verify")]
        target: Option<String>,
        /// Where to write the receipt.
        #[arg(long)]
        receipt: Option<PathBuf>,
        /// Re-check an existing receipt instead of deploying.
        #[arg(long, conflicts_with_all = ["artifact", "target"])]
        verify: Option<PathBuf>,
        #[arg(long, default_value_t = 30)]
        timeout_secs: u64,
    },
}

fn load_config(cli: &Cli) -> Result<PipelineConfig> {
    let mut config = match &cli.config {
        Some(p) => PipelineConfig::load(p).with_context(|| format!("loading {}", p.display()))?,
        None => PipelineConfig::default(),
    };
    if let Some(out) = &cli.out {
        config.out_dir = out.clone();
    }
    Ok(config)
}

fn apply_catalogs(config: &mut PipelineConfig, args: &CatalogArgs) {
    if let Some(p) = &args.vss {
        config.vss_catalog = Some(p.clone());
    }
    if let Some(p) = &args.can {
        config.can_catalog = Some(p.clone());
    }
}

fn gateway(config: &mut PipelineConfig, args: &GatewayArgs) -> Result<Gateway> {
    if let Some(p) = &args.replay {
        config.gateway.mode = GatewayMode::Replay;
        config.gateway.store = Some(p.clone());
    } else if let Some(p) = &args.record {
        config.gateway.mode = GatewayMode::Record;
        config.gateway.store = Some(p.clone());
    }
    Ok(config.build_gateway()?)
}

fn rules_path(flag: &Option<PathBuf>, config: &PipelineConfig) -> Result<PathBuf> {
    flag.clone().or_else(|| config.rules.clone()).context("no rule file given (--rules or `rules` in the config)")
}

fn exit(verdict: RunVerdict) -> ExitCode {
    ExitCode::from(verdict.exit_code() as u8)
}

fn run(cli: Cli) -> Result<ExitCode> {
    let mut config = load_config(&cli)?;
    match cli.command {
        Command::AnalyzeSafety { code, catalogs, rules, auto_correct, max_iterations, gateway: g } => {
            apply_catalogs(&mut config, &catalogs);
            config.auto_correct |= auto_correct;
            if let Some(n) = max_iterations {
                config.max_iterations = n;
            }
            let rules = rules_path(&rules, &config)?;
            let gw = gateway(&mut config, &g)?;
            let run = run_safety_pipeline(&config, &code, &rules, &gw)?;
            println!("{}", run.report.summary());
            if run.record.iterations > 0 {
                println!("correction iterations: {}", run.record.iterations);
            }
            println!("artifacts: {}", config.out_dir.display());
            Ok(exit(run.record.verdict))
        }
        Command::AnalyzeTopology {
            metamodel,
            model,
            requirements,
            constraints,
            guidelines,
            auto_correct,
            max_iterations,
            gateway: g,
        } => {
            if metamodel.is_some() {
                config.metamodel = metamodel;
            }
            config.auto_correct |= auto_correct;
            if let Some(n) = max_iterations {
                config.max_iterations = n;
            }
            let source = ModelSource { model, requirements };
            let constraints = match (constraints.or_else(|| config.constraints.clone()), guidelines) {
                (_, Some(g)) => ConstraintSource::Guidelines(g),
                (Some(c), None) => ConstraintSource::Constraints(c),
                (None, None) => anyhow::bail!("give --constraints or --guidelines"),
            };
            let gw = gateway(&mut config, &g)?;
            let run = run_topology_pipeline(&config, &source, &constraints, &gw)?;
            print!("{}", run.report.pass_fail_list());
            println!("verdict: {}", run.report.verdict);
            println!("artifacts: {}", config.out_dir.display());
            Ok(exit(run.record.verdict))
        }
        Command::ExtractSignals { code, catalogs, top_k, token_budget, gateway: g } => {
            apply_catalogs(&mut config, &catalogs);
            if let Some(k) = top_k {
                config.top_k = k;
            }
            if let Some(b) = token_budget {
                config.token_budget = b;
            }
            config.validate()?;
            let gw = gateway(&mut config, &g)?;
            let catalogs = load_catalogs(&config)?;
            let text = std::fs::read_to_string(&code).with_context(|| format!("reading {}", code.display()))?;
            let extraction = extract_signals(&config, &catalogs, &text, &gw)?;
            let report = extraction.report();
            println!("{}", serde_json::to_string_pretty(report)?);
            Ok(ExitCode::from(if report.is_clean() { 0 } else { 1 }))
        }
        Command::BuildChain { code, current, catalogs, gateway: g } => {
            apply_catalogs(&mut config, &catalogs);
            let gw = gateway(&mut config, &g)?;
            let catalogs = load_catalogs(&config)?;
            let text = std::fs::read_to_string(&code).with_context(|| format!("reading {}", code.display()))?;
            let current = match &current {
                Some(p) => std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?,
                None => String::new(),
            };
            let built = build_chain(&config, &catalogs, &text, &current, &gw)?;
            print!("{}", built.chain.diagram);
            Ok(ExitCode::SUCCESS)
        }
        Command::CheckChain { chain, rules, json } => {
            let rules = rules_path(&rules, &config)?;
            let report = check_chain(&chain, &rules)?;
            if json {
                println!("{}", report.to_json());
            } else {
                println!("{}", report.summary());
            }
            Ok(ExitCode::from(if report.is_pass() { 0 } else { 1 }))
        }
        Command::Eval { manifest, runs, json } => {
            let manifest = load_manifest(&manifest)?;
            let result = run_eval_harness(&config, &manifest, runs)?;
            if json {
                println!("{}", result.to_json());
            } else {
                print!("{result}");
            }
            Ok(ExitCode::from(if result.all_succeeded() { 0 } else { 1 }))
        }
        Command::Deploy { artifact, target, receipt, verify, timeout_secs } => {
            if let Some(path) = verify {
                let text = std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
                verify_receipt(&Receipt::from_json(&text)?)?;
                println!("receipt verified");
                return Ok(ExitCode::SUCCESS);
            }
            let artifact = artifact.expect("required by clap");
            let target = DeployTarget::parse(&target.expect("required by clap"));
            let r = deploy_stub(&artifact, &target, Duration::from_secs(timeout_secs))?;
            let json = r.to_json();
            if let Some(path) = receipt {
                write_file(&path, &json)?;
            }
            println!("{json}");
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(path, format!("{text}\n")).with_context(|| format!("writing {}", path.display()))
}

/// The error chain, skipping causes whose text a wrapper already includes.
fn describe(e: &anyhow::Error) -> String {
    let mut out = String::new();
    for cause in e.chain() {
        let text = cause.to_string();
        if !out.contains(&text) {
            if !out.is_empty() {
                out.push_str(": ");
            }
            out.push_str(&text);
        }
    }
    out
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {}", describe(&e));
            ExitCode::from(2)
        }
    }
}
