use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::record::Recorder;
use super::safety::{extract_signals, load_catalogs, run_safety, Catalogs};
use super::{read_text, PipelineConfig, PipelineError};
use crate::catalog::Protocol;
use crate::gateway::Gateway;
use crate::rules::Verdict;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScenarioKind {
    /// Success iff the accepted entries equal the expected set.
    Mapping,
    /// Success iff the chain parses and every expected verdict matches.
    Chain,
}

/// An accepted entry by catalog key.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExpectedEntry {
    pub name: String,
    pub protocol: Protocol,
    #[serde(default)]
    pub value: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    pub name: String,
    pub kind: ScenarioKind,
    pub code: PathBuf,
    #[serde(default)]
    pub rules: Option<PathBuf>,
    /// Replay store; without one the configured gateway is used.
    #[serde(default)]
    pub replay: Option<PathBuf>,
    #[serde(default)]
    pub expected_entries: Vec<ExpectedEntry>,
    #[serde(default)]
    pub expected_verdicts: BTreeMap<String, Verdict>,
}

/// Drops each expected accepted entry with `probability`, seeded per run
/// with `seed + run`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FaultInjection {
    pub probability: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HarnessManifest {
    pub vss_catalog: PathBuf,
    pub can_catalog: PathBuf,
    #[serde(default)]
    pub fault_injection: Option<FaultInjection>,
    #[serde(rename = "scenario")]
    pub scenarios: Vec<ScenarioSpec>,
}

impl HarnessManifest {
    pub fn from_toml(text: &str, base: &Path) -> Result<Self, PipelineError> {
        let mut m: HarnessManifest = toml::from_str(text).map_err(|e| PipelineError::Config(format!("manifest: {e}")))?;
        let rebase = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        rebase(&mut m.vss_catalog);
        rebase(&mut m.can_catalog);
        for s in &mut m.scenarios {
            rebase(&mut s.code);
            s.rules.iter_mut().for_each(rebase);
            s.replay.iter_mut().for_each(rebase);
        }
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: String| Err(PipelineError::Config(format!("manifest: {m}")));
        if self.scenarios.is_empty() {
            return bad("no scenarios".into());
        }
        if let Some(f) = self.fault_injection {
            if !(0.0..=1.0).contains(&f.probability) {
                return bad(format!("fault probability {} is outside [0, 1]", f.probability));
            }
        }
        let mut names = BTreeSet::new();
        for s in &self.scenarios {
            if !names.insert(&s.name) {
                return bad(format!("scenario `{}` appears twice", s.name));
            }
            match s.kind {
                ScenarioKind::Mapping if s.expected_entries.is_empty() => {
                    return bad(format!("mapping scenario `{}` has no expected_entries", s.name))
                }
                ScenarioKind::Chain if s.expected_verdicts.is_empty() => {
                    return bad(format!("chain scenario `{}` has no expected_verdicts", s.name))
                }
                ScenarioKind::Chain if s.rules.is_none() => return bad(format!("chain scenario `{}` has no rules", s.name)),
                _ => {}
            }
        }
        Ok(())
    }
}

pub fn load_manifest(path: &Path) -> Result<HarnessManifest, PipelineError> {
    HarnessManifest::from_toml(&read_text(path)?, path.parent().unwrap_or(Path::new("")))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioResult {
    pub name: String,
    pub kind: ScenarioKind,
    pub runs: usize,
    pub successes: usize,
    /// Analytic success rate under fault injection, `(1 - p)^m` for `m`
    /// expected entries.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expected_rate: Option<f64>,
    /// Up to five distinct failure reasons.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub failures: Vec<String>,
}

impl ScenarioResult {
    pub fn success_rate(&self) -> f64 {
        self.successes as f64 / self.runs as f64
    }

    /// `successes / runs` as a percentage rounded half up to one decimal,
    /// computed in integers.
    pub fn percent(&self) -> String {
        let tenths = (2 * 1000 * self.successes + self.runs) / (2 * self.runs);
        format!("{}.{}%", tenths / 10, tenths % 10)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HarnessResult {
    pub scenarios: Vec<ScenarioResult>,
}

impl HarnessResult {
    pub fn all_succeeded(&self) -> bool {
        self.scenarios.iter().all(|s| s.successes == s.runs)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("harness result serializes")
    }
}

impl fmt::Display for HarnessResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for s in &self.scenarios {
            write!(f, "{:<24} {:>4}/{:<4} {:>6}", s.name, s.successes, s.runs, s.percent())?;
            if let Some(e) = s.expected_rate {
                write!(f, "  (expected {:.1}%)", e * 100.0)?;
            }
            writeln!(f)?;
            for reason in &s.failures {
                writeln!(f, "    {reason}")?;
            }
        }
        Ok(())
    }
}

struct Context<'a> {
    config: &'a PipelineConfig,
    catalogs: &'a Catalogs,
    fault: Option<FaultInjection>,
}

fn mapping_run(ctx: &Context<'_>, spec: &ScenarioSpec, code: &str, gateway: &Gateway, run: usize) -> Result<(), String> {
    let extraction = extract_signals(ctx.config, ctx.catalogs, code, gateway).map_err(|e| e.to_string())?;
    let expected: BTreeSet<&ExpectedEntry> = spec.expected_entries.iter().collect();
    let mut got: BTreeSet<ExpectedEntry> = extraction
        .report()
        .accepted
        .iter()
        .map(|a| ExpectedEntry { name: a.resolved_key.clone(), protocol: a.protocol, value: a.entry.value.clone() })
        .collect();
    if let Some(f) = ctx.fault {
        let mut rng = ChaCha8Rng::seed_from_u64(f.seed.wrapping_add(run as u64));
        for e in &expected {
            if rng.random_bool(f.probability) {
                got.remove(*e);
            }
        }
    }
    let got: BTreeSet<&ExpectedEntry> = got.iter().collect();
    if got == expected {
        return Ok(());
    }
    let missing: Vec<String> = expected.difference(&got).map(|e| e.name.clone()).collect();
    let extra: Vec<String> = got.difference(&expected).map(|e| e.name.clone()).collect();
    Err(format!("missing [{}], unexpected [{}]", missing.join(", "), extra.join(", ")))
}

fn chain_run(ctx: &Context<'_>, spec: &ScenarioSpec, gateway: &Gateway) -> Result<(), String> {
    let rules = spec.rules.as_deref().expect("validated");
    let mut rec = Recorder::in_memory("harness");
    let run = run_safety(ctx.config, &spec.code, rules, gateway, &mut rec).map_err(|e| e.to_string())?;
    for (rule, want) in &spec.expected_verdicts {
        match run.report.rules.iter().find(|r| &r.rule == rule) {
            Some(r) if r.verdict == *want => {}
            Some(r) => return Err(format!("{rule}: expected {want:?}, got {:?}", r.verdict)),
            None => return Err(format!("{rule}: not in the report")),
        }
    }
    Ok(())
}

/// Runs every scenario `runs` times. Runs are independent and execute on
/// worker threads.
pub fn run_eval_harness(
    config: &PipelineConfig,
    manifest: &HarnessManifest,
    runs: usize,
) -> Result<HarnessResult, PipelineError> {
    if runs == 0 {
        return Err(PipelineError::Config("the harness needs at least one run".into()));
    }
    manifest.validate()?;
    let mut config = config.clone();
    config.vss_catalog = Some(manifest.vss_catalog.clone());
    config.can_catalog = Some(manifest.can_catalog.clone());
    config.auto_correct = false;
    let catalogs = load_catalogs(&config)?;
    let ctx = Context { config: &config, catalogs: &catalogs, fault: manifest.fault_injection };
    let workers = std::thread::available_parallelism().map_or(1, |n| n.get()).min(runs);

    let mut results = Vec::new();
    for spec in &manifest.scenarios {
        let gateway = match &spec.replay {
            Some(p) => Gateway::replay_file(p)?,
            None => config.build_gateway()?,
        };
        let code = read_text(&spec.code)?;
        let outcomes: Vec<Result<(), String>> = std::thread::scope(|s| {
            let handles: Vec<_> = (0..workers)
                .map(|w| {
                    let (ctx, gateway, code) = (&ctx, &gateway, &code);
                    s.spawn(move || {
                        (w..runs)
                            .step_by(workers)
                            .map(|run| match spec.kind {
                                ScenarioKind::Mapping => mapping_run(ctx, spec, code, gateway, run),
                                ScenarioKind::Chain => chain_run(ctx, spec, gateway),
                            })
                            .collect::<Vec<_>>()
                    })
                })
                .collect();
            handles.into_iter().flat_map(|h| h.join().expect("harness worker panicked")).collect()
        });
        let successes = outcomes.iter().filter(|o| o.is_ok()).count();
        let mut failures: Vec<String> = Vec::new();
        for reason in outcomes.into_iter().filter_map(Result::err) {
            if failures.len() < 5 && !failures.contains(&reason) {
                failures.push(reason);
            }
        }
        let expected_rate = match (spec.kind, ctx.fault) {
            (ScenarioKind::Mapping, Some(f)) => Some((1.0 - f.probability).powi(spec.expected_entries.len() as i32)),
            _ => None,
        };
        results.push(ScenarioResult { name: spec.name.clone(), kind: spec.kind, runs, successes, expected_rate, failures });
    }
    Ok(HarnessResult { scenarios: results })
}
