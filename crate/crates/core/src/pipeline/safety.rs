use std::path::{Path, PathBuf};
use std::time::Instant;

use super::record::{attempt, Recorder, RunRecord, RunVerdict};
use super::{read_text, PipelineConfig, PipelineError};
use crate::catalog::{Catalog, MessageCatalog, SignalCatalog};
use crate::digest::sha256_hex;
use crate::eventchain::{generate_chain, ChainDocument, GeneratedChain};
use crate::extraction::{extract_entries, validate_entries, ExtractedEntry, ExtractionReport};
use crate::gateway::Gateway;
use crate::retrieval::{chunk_entries, Chunk, RetrievalIndex, ShortList};
use crate::rules::{check, parse_rules, suggest_correction, RuleSet, SafetyReport};

/// Parsed catalogs plus the retrieval index over both.
#[derive(Debug)]
pub struct Catalogs {
    pub signals: SignalCatalog,
    pub messages: MessageCatalog,
    pub index: RetrievalIndex,
    pub vss_text: String,
    pub can_text: String,
}

fn catalog_paths(config: &PipelineConfig) -> Result<(PathBuf, PathBuf), PipelineError> {
    let require = |p: &Option<PathBuf>, what: &str| -> Result<PathBuf, PipelineError> {
        let p = p.clone().ok_or_else(|| PipelineError::Config(format!("no {what} catalog configured")))?;
        if !p.is_file() {
            return Err(PipelineError::Config(format!("{what} catalog {} does not exist", p.display())));
        }
        Ok(p)
    };
    Ok((require(&config.vss_catalog, "VSS")?, require(&config.can_catalog, "CAN")?))
}

pub fn load_catalogs(config: &PipelineConfig) -> Result<Catalogs, PipelineError> {
    let (vss, can) = catalog_paths(config)?;
    let (vss_text, can_text) = (read_text(&vss)?, read_text(&can)?);
    let signals = SignalCatalog::parse(&vss_text)?;
    let messages = MessageCatalog::parse(&can_text)?;
    let entries = signals.entries().iter().chain(messages.entries()).cloned().collect();
    let index = RetrievalIndex::build(entries)?;
    Ok(Catalogs { signals, messages, index, vss_text, can_text })
}

/// Everything produced while grounding code in the catalogs. `attempts`
/// holds one raw entry list and validation report per extraction round.
#[derive(Debug, Clone)]
pub struct SignalExtraction {
    pub shortlist: ShortList,
    pub chunks: Vec<Chunk>,
    pub attempts: Vec<(Vec<ExtractedEntry>, ExtractionReport)>,
}

impl SignalExtraction {
    pub fn report(&self) -> &ExtractionReport {
        &self.attempts.last().expect("at least one extraction round").1
    }
}

fn shortlist(config: &PipelineConfig, catalogs: &Catalogs, code: &str) -> Result<(ShortList, Vec<Chunk>), PipelineError> {
    let shortlist = config.retriever().retrieve_top_k(&catalogs.index, code, config.top_k)?;
    let chunks = chunk_entries(&shortlist, config.token_budget)?;
    Ok((shortlist, chunks))
}

fn extraction_round(
    code: &str,
    chunks: &[Chunk],
    catalogs: &Catalogs,
    gateway: &Gateway,
    previous: Option<&ExtractionReport>,
) -> Result<(Vec<ExtractedEntry>, ExtractionReport), PipelineError> {
    let feedback = previous.map(ExtractionReport::rejection_feedback);
    let entries = extract_entries(code, chunks, gateway, feedback.as_deref())?;
    let mut report = validate_entries(&entries, &catalogs.signals, &catalogs.messages);
    report.source_digest = Some(sha256_hex(code));
    Ok((entries, report))
}

/// Retrieval, extraction and validation, re-extracting with the rejection
/// list while rejections remain and retries are left.
pub fn extract_signals(
    config: &PipelineConfig,
    catalogs: &Catalogs,
    code: &str,
    gateway: &Gateway,
) -> Result<SignalExtraction, PipelineError> {
    let (shortlist, chunks) = shortlist(config, catalogs, code)?;
    let mut attempts: Vec<(Vec<ExtractedEntry>, ExtractionReport)> = Vec::new();
    for _ in 0..=config.extraction_retries {
        let round = extraction_round(code, &chunks, catalogs, gateway, attempts.last().map(|a| &a.1))?;
        let clean = round.1.is_clean();
        attempts.push(round);
        if clean {
            break;
        }
    }
    Ok(SignalExtraction { shortlist, chunks, attempts })
}

#[derive(Debug, Clone)]
pub struct ChainBuild {
    pub extraction: SignalExtraction,
    pub chain: GeneratedChain,
}

/// Extraction followed by chain generation from the accepted entries.
pub fn build_chain(
    config: &PipelineConfig,
    catalogs: &Catalogs,
    code: &str,
    current_chain: &str,
    gateway: &Gateway,
) -> Result<ChainBuild, PipelineError> {
    let extraction = extract_signals(config, catalogs, code, gateway)?;
    let chain = generate_chain(code, current_chain, &extraction.report().accepted, gateway)?;
    Ok(ChainBuild { extraction, chain })
}

/// Loads a chain from PlantUML or from its JSON document form.
pub fn load_chain(path: &Path) -> Result<ChainDocument, PipelineError> {
    let text = read_text(path)?;
    let is_json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
    Ok(if is_json { ChainDocument::from_json(&text)? } else { ChainDocument::from_plantuml(&text)? })
}

/// Checks a stored chain against a rule file; no model calls.
pub fn check_chain(chain: &Path, rules: &Path) -> Result<SafetyReport, PipelineError> {
    let document = load_chain(chain)?;
    let rules = parse_rules(&read_text(rules)?)?;
    Ok(check(&document, &rules)?)
}

/// The code inside the first fenced block, or the whole text when there is
/// no fence.
pub fn strip_code_fence(text: &str) -> String {
    let body = match text.find("```") {
        Some(open) => {
            let after = &text[open + 3..];
            let after = after.find('\n').map_or("", |nl| &after[nl + 1..]);
            after.find("```").map_or(after, |close| &after[..close])
        }
        None => text,
    };
    format!("{}\n", body.trim_end())
}

#[derive(Debug, Clone)]
pub struct SafetyRun {
    pub record: RunRecord,
    pub report: SafetyReport,
    pub extraction: ExtractionReport,
    pub chain: ChainDocument,
    pub diagram: String,
    pub code: String,
}

/// Catalogs, retrieval, extraction, validation, chain generation and rule
/// checking, then up to `max_iterations` correction rounds when
/// `auto_correct` is set. Artifacts and `run.json` go to `out_dir`.
pub fn run_safety_pipeline(
    config: &PipelineConfig,
    code_path: &Path,
    rules_path: &Path,
    gateway: &Gateway,
) -> Result<SafetyRun, PipelineError> {
    config.validate()?;
    catalog_paths(config)?;
    for p in [code_path, rules_path] {
        if !p.is_file() {
            return Err(PipelineError::Config(format!("{} does not exist", p.display())));
        }
    }
    let mut rec = Recorder::new(&config.out_dir, "safety");
    run_safety(config, code_path, rules_path, gateway, &mut rec)
}

pub(crate) fn run_safety(
    config: &PipelineConfig,
    code_path: &Path,
    rules_path: &Path,
    gateway: &Gateway,
    rec: &mut Recorder,
) -> Result<SafetyRun, PipelineError> {
    let t = Instant::now();
    let code = attempt(rec, "inputs", read_text(code_path))?;
    let rules_text = attempt(rec, "inputs", read_text(rules_path))?;
    let rules: RuleSet = attempt(rec, "inputs", parse_rules(&rules_text))?;
    let catalogs = attempt(rec, "inputs", load_catalogs(config))?;
    let (vss, can) = catalog_paths(config)?;
    rec.input(&vss, "vss.json", &catalogs.vss_text)?;
    rec.input(&can, "can.json", &catalogs.can_text)?;
    rec.input(code_path, "code.txt", &code)?;
    rec.input(rules_path, "rules.rules", &rules_text)?;
    rec.stage("inputs", t, &[], &[]);

    let t = Instant::now();
    let (list, chunks) = attempt(rec, "retrieval", shortlist(config, &catalogs, &code))?;
    rec.write("shortlist.json", &serde_json::to_string_pretty(&list).expect("shortlist serializes"))?;
    rec.write("chunks.json", &serde_json::to_string_pretty(&chunks).expect("chunks serialize"))?;
    rec.stage("retrieval", t, &["code.txt", "vss.json", "can.json"], &["shortlist.json", "chunks.json"]);

    let mut last: Option<ExtractionReport> = None;
    let mut validation = String::new();
    for round in 0..=config.extraction_retries {
        let suffix = if round == 0 { String::new() } else { format!("-retry{round}") };
        let stage = format!("extraction{suffix}");
        let t = Instant::now();
        let (entries, report) = attempt(rec, &stage, extraction_round(&code, &chunks, &catalogs, gateway, last.as_ref()))?;
        let extracted = rec.write(&format!("extracted{suffix}.json"), &serde_json::to_string_pretty(&entries).expect("entries serialize"))?;
        let mut inputs = vec!["code.txt", "chunks.json"];
        if round > 0 {
            inputs.push(&validation);
        }
        rec.stage(&stage, t, &inputs, &[&extracted]);
        let t = Instant::now();
        validation = rec.write(&format!("validation{suffix}.json"), &serde_json::to_string_pretty(&report).expect("report serializes"))?;
        rec.stage(format!("validation{suffix}"), t, &[&extracted, "vss.json", "can.json"], &[&validation]);
        let clean = report.is_clean();
        last = Some(report);
        if clean {
            break;
        }
    }
    let extraction = last.expect("at least one extraction round");

    let t = Instant::now();
    let chain = attempt(rec, "chain", generate_chain(&code, "", &extraction.accepted, gateway))?;
    rec.write("chain.puml", &chain.diagram)?;
    rec.write("chain.json", &chain.document.to_json())?;
    rec.stage("chain", t, &["code.txt", &validation], &["chain.puml", "chain.json"]);

    let t = Instant::now();
    let mut report = attempt(rec, "rules", check(&chain.document, &rules))?;
    rec.write("safety-report.json", &report.to_json())?;
    rec.write("safety-report.txt", &format!("{}\n", report.summary()))?;
    rec.stage("rules", t, &["chain.json", "rules.rules"], &["safety-report.json", "safety-report.txt"]);

    let (mut code, mut code_name) = (code, "code.txt".to_owned());
    let (mut chain, mut chain_name) = (chain, "chain.puml".to_owned());
    let mut report_name = "safety-report.json".to_owned();
    let mut iterations = 0;
    while config.auto_correct && !report.is_pass() && iterations < config.max_iterations {
        iterations += 1;
        let stage = format!("correction-{iterations}");
        let t = Instant::now();
        let raw = attempt(rec, &stage, suggest_correction(&code, &report, gateway))?;
        code = strip_code_fence(&raw);
        let raw_name = rec.write(&format!("correction-{iterations}.txt"), &raw)?;
        let new_code = rec.write(&format!("code-{iterations}.txt"), &code)?;
        rec.stage(&stage, t, &[&code_name, &report_name], &[&raw_name, &new_code]);
        code_name = new_code;

        let stage = format!("chain-{iterations}");
        let t = Instant::now();
        chain = attempt(rec, &stage, generate_chain(&code, &chain.diagram, &extraction.accepted, gateway))?;
        let puml = rec.write(&format!("chain-{iterations}.puml"), &chain.diagram)?;
        let json = rec.write(&format!("chain-{iterations}.json"), &chain.document.to_json())?;
        rec.stage(&stage, t, &[&code_name, &chain_name, &validation], &[&puml, &json]);
        chain_name = puml;

        let stage = format!("rules-{iterations}");
        let t = Instant::now();
        report = attempt(rec, &stage, check(&chain.document, &rules))?;
        let rj = rec.write(&format!("safety-report-{iterations}.json"), &report.to_json())?;
        let rt = rec.write(&format!("safety-report-{iterations}.txt"), &format!("{}\n", report.summary()))?;
        rec.stage(&stage, t, &[&json, "rules.rules"], &[&rj, &rt]);
        report_name = rj;
    }

    let t = Instant::now();
    rec.write("report.json", &report.to_json())?;
    rec.write("report.txt", &format!("{}\n", report.summary()))?;
    rec.stage("report", t, &[&report_name], &["report.json", "report.txt"]);
    let verdict = if report.is_pass() { RunVerdict::Pass } else { RunVerdict::Violated };
    rec.finish(verdict, iterations)?;
    Ok(SafetyRun {
        record: rec.record.clone(),
        report,
        extraction,
        diagram: chain.diagram,
        chain: chain.document,
        code,
    })
}
